use crate::error::{Error, Result};

/// Where a neuron's activity sits relative to the optimum `1/d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deviation {
    Below,
    Optimal,
    Above,
}

impl Deviation {
    /// Float comparison with a tolerance band of half-width `eps`.
    pub fn of(p: f64, p_star: f64, eps: f64) -> Self {
        if p_star > p + eps {
            Deviation::Below
        } else if p_star < p - eps {
            Deviation::Above
        } else {
            Deviation::Optimal
        }
    }
}

/// Per-neuron win counts over a set of points. Activity `p_j` is the share
/// of points neuron `j` won; the optimum is `1/d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityState {
    counts: Vec<u64>,
    total: u64,
}

impl ActivityState {
    pub fn new(d: usize) -> Self {
        Self {
            counts: vec![0; d],
            total: 0,
        }
    }

    pub fn from_winners(d: usize, winners: &[usize]) -> Result<Self> {
        let mut s = Self::new(d);
        s.record_winners(winners)?;
        Ok(s)
    }

    pub fn d(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn optimal(&self) -> f64 {
        1.0 / self.d() as f64
    }

    pub fn activity(&self, j: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.counts[j] as f64 / self.total as f64
        }
    }

    pub fn activities(&self) -> Vec<f64> {
        (0..self.d()).map(|j| self.activity(j)).collect()
    }

    /// Adds one win per listed index. Nothing is recorded if any index is
    /// out of range.
    pub fn record_winners(&mut self, winners: &[usize]) -> Result<()> {
        if let Some(&bad) = winners.iter().find(|&&w| w >= self.d()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: self.d(),
            });
        }
        for &w in winners {
            self.counts[w] += 1;
        }
        self.total += winners.len() as u64;
        Ok(())
    }

    /// Deviation of neuron `j`. With `eps == 0` the test is exact integer
    /// arithmetic (`c_j·d` against the total), so `p_j = 1/d` is recognised
    /// without rounding.
    pub fn deviation(&self, j: usize, eps: f64) -> Deviation {
        if eps == 0.0 {
            let lhs = self.counts[j] as u128 * self.d() as u128;
            let rhs = self.total as u128;
            match lhs.cmp(&rhs) {
                std::cmp::Ordering::Less => Deviation::Below,
                std::cmp::Ordering::Equal => Deviation::Optimal,
                std::cmp::Ordering::Greater => Deviation::Above,
            }
        } else {
            Deviation::of(self.activity(j), self.optimal(), eps)
        }
    }
}

/// Free-function form: returns the updated state.
pub fn record_winners(mut state: ActivityState, winners: &[usize]) -> Result<ActivityState> {
    state.record_winners(winners)?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_and_zero_activity() {
        let s = ActivityState::from_winners(3, &[1, 1, 1, 1]).unwrap();
        assert_eq!(s.activity(1), 1.0);
        assert_eq!(s.activity(0), 0.0);
        let s = record_winners(ActivityState::new(2), &[0, 1, 0, 1]).unwrap();
        assert_eq!(s.activities(), vec![0.5, 0.5]);
        assert_eq!(s.total(), 4);
    }

    #[test]
    fn out_of_range_leaves_state_untouched() {
        let mut s = ActivityState::from_winners(2, &[0]).unwrap();
        assert!(s.record_winners(&[1, 2]).is_err());
        assert_eq!(s.counts(), &[1, 0]);
        assert_eq!(s.total(), 1);
    }

    #[test]
    fn exact_deviation() {
        let s = ActivityState::from_winners(3, &[0, 0, 1, 2, 2, 2]).unwrap();
        assert_eq!(s.deviation(0, 0.0), Deviation::Optimal);
        assert_eq!(s.deviation(1, 0.0), Deviation::Below);
        assert_eq!(s.deviation(2, 0.0), Deviation::Above);
        assert_eq!(s.deviation(2, 0.2), Deviation::Optimal);
        assert_eq!(s.deviation(1, 0.1), Deviation::Below);
    }

    proptest! {
        #[test]
        fn activities_sum_to_one(d in 1usize..40, ws in proptest::collection::vec(0usize..1000, 1..300)) {
            let winners: Vec<usize> = ws.iter().map(|w| w % d).collect();
            let s = ActivityState::from_winners(d, &winners).unwrap();
            let sum: f64 = s.activities().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert_eq!(s.counts().iter().sum::<u64>(), s.total());
        }
    }
}
