use super::action::N_ACTIONS;
use super::formulas::greedy_action;
use std::collections::HashMap;

pub type QRow = [f64; N_ACTIONS];

/// Sparse action-value table. Missing rows read as zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QTable {
    rows: HashMap<u32, QRow>,
}

impl QTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn row(&self, s: u32) -> QRow {
        self.rows.get(&s).copied().unwrap_or([0.0; N_ACTIONS])
    }

    pub fn row_mut(&mut self, s: u32) -> &mut QRow {
        self.rows.entry(s).or_insert([0.0; N_ACTIONS])
    }

    pub fn get(&self, s: u32, a: usize) -> f64 {
        self.rows.get(&s).map_or(0.0, |r| r[a])
    }

    pub fn set(&mut self, s: u32, a: usize, v: f64) {
        self.row_mut(s)[a] = v;
    }

    /// `max_a Q(s, a)`.
    pub fn value(&self, s: u32) -> f64 {
        let r = self.row(s);
        r[greedy_action(&r)]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, s: u32) -> bool {
        self.rows.contains_key(&s)
    }

    /// Rows in ascending state order.
    pub fn sorted_rows(&self) -> Vec<(u32, QRow)> {
        let mut v: Vec<(u32, QRow)> = self.rows.iter().map(|(k, r)| (*k, *r)).collect();
        v.sort_by_key(|(k, _)| *k);
        v
    }
}

/// One tabular backup `Q <- (1-alpha) Q + alpha (r + gamma V(s'))`.
/// `next = None` marks a terminal transition.
pub fn q_update(q: &mut QTable, s: u32, a: usize, r: f64, next: Option<u32>, gamma: f64, alpha: f64) {
    let v_next = next.map_or(0.0, |n| q.value(n));
    let cell = &mut q.row_mut(s)[a];
    *cell = (1.0 - alpha) * *cell + alpha * (r + gamma * v_next);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terminal_full_step() {
        let mut q = QTable::new();
        q_update(&mut q, 3, 2, 7.5, None, 0.99, 1.0);
        assert_eq!(q.get(3, 2), 7.5);
        assert_eq!(q.get(4, 0), 0.0);
    }

    #[test]
    fn fixed_point_of_repeated_update() {
        let mut q = QTable::new();
        q.set(1, 0, 4.0);
        for _ in 0..2000 {
            q_update(&mut q, 0, 0, 1.0, Some(1), 0.5, 0.1);
        }
        assert!((q.get(0, 0) - 3.0).abs() < 1e-9);
    }
}
