use std::collections::VecDeque;

use rand::Rng;

use crate::cmdp::{SimRng, TrajectoryStep};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Behavior thresholds `Ẽ`, the evaluation grid `E` and the normalization
/// interval `(ε_L, ε_H)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorConditionSet<T> {
    behavior: Vec<T>,
    grid: Vec<T>,
    eps_l: T,
    eps_h: T,
}

impl<T: Real> BehaviorConditionSet<T> {
    pub fn new(behavior: Vec<T>, grid: Vec<T>, eps_l: T, eps_h: T) -> Result<Self> {
        if behavior.is_empty() {
            return Err(Error::arg("behavior", "empty behavior threshold set"));
        }
        if grid.is_empty() {
            return Err(Error::arg("grid", "empty evaluation grid"));
        }
        if !(eps_h > T::zero()) {
            return Err(Error::arg("eps_h", "must be positive"));
        }
        let hi = eps_l + eps_h;
        if let Some(e) = behavior.iter().find(|e| !(**e >= eps_l && **e <= hi)) {
            return Err(Error::arg(
                "behavior",
                format!("threshold {e} outside [{eps_l}, {hi}]"),
            ));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::arg("grid", "must be strictly ascending"));
        }
        Ok(Self {
            behavior,
            grid,
            eps_l,
            eps_h,
        })
    }

    /// `Ẽ = {20, 40, 60}`, `E = {10, 15, …, 70}`, normalized by `(10, 70)`.
    pub fn standard() -> Self {
        let grid = (0..13).map(|k| T::lit(10.0 + 5.0 * k as f64)).collect();
        Self::new(
            vec![T::lit(20.0), T::lit(40.0), T::lit(60.0)],
            grid,
            T::lit(10.0),
            T::lit(70.0),
        )
        .expect("standard grids are valid")
    }

    pub fn behavior(&self) -> &[T] {
        &self.behavior
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    pub fn bounds(&self) -> (T, T) {
        (self.eps_l, self.eps_h)
    }

    /// Index of `ε` in `Ẽ`, matched to a relative tolerance of 1e-9.
    pub fn behavior_index(&self, epsilon: T) -> Option<usize> {
        let tol = T::lit(1e-9) * epsilon.abs().max(T::one());
        self.behavior
            .iter()
            .position(|b| (*b - epsilon).abs() <= tol)
    }

    pub fn is_behavior(&self, epsilon: T) -> bool {
        self.behavior_index(epsilon).is_some()
    }

    /// Grid points outside `Ẽ`.
    pub fn generalized(&self) -> Vec<T> {
        self.grid
            .iter()
            .copied()
            .filter(|e| !self.is_behavior(*e))
            .collect()
    }

    /// Smallest and largest grid threshold.
    pub fn grid_range(&self) -> (T, T) {
        (self.grid[0], self.grid[self.grid.len() - 1])
    }
}

/// Transitions partitioned by behavior threshold, `D = ∪ D_i`. Each partition
/// holds at most `capacity` records and drops the oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer<T> {
    behavior: Vec<T>,
    partitions: Vec<VecDeque<TrajectoryStep<T>>>,
    capacity: usize,
}

impl<T: Real> ReplayBuffer<T> {
    pub fn new(behavior: &[T], capacity: usize) -> Result<Self> {
        if behavior.is_empty() {
            return Err(Error::arg("behavior", "empty behavior threshold set"));
        }
        if capacity == 0 {
            return Err(Error::arg("capacity", "must be positive"));
        }
        Ok(Self {
            behavior: behavior.to_vec(),
            partitions: vec![VecDeque::new(); behavior.len()],
            capacity,
        })
    }

    pub fn behavior(&self) -> &[T] {
        &self.behavior
    }

    pub fn n_partitions(&self) -> usize {
        self.partitions.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    fn index_of(&self, epsilon: T) -> Option<usize> {
        self.behavior.iter().position(|b| *b == epsilon)
    }

    /// Appends a step to the partition of its `behavior_threshold`.
    pub fn push(&mut self, step: TrajectoryStep<T>) -> Result<()> {
        let i = self.index_of(step.behavior_threshold).ok_or_else(|| {
            Error::arg(
                "step",
                format!(
                    "behavior threshold {} is not in the behavior set",
                    step.behavior_threshold
                ),
            )
        })?;
        let part = &mut self.partitions[i];
        if part.len() == self.capacity {
            part.pop_front();
        }
        part.push_back(step);
        Ok(())
    }

    pub fn extend(&mut self, steps: impl IntoIterator<Item = TrajectoryStep<T>>) -> Result<()> {
        steps.into_iter().try_for_each(|s| self.push(s))
    }

    pub fn partition(&self, i: usize) -> impl ExactSizeIterator<Item = &TrajectoryStep<T>> {
        self.partitions[i].iter()
    }

    pub fn partition_len(&self, i: usize) -> usize {
        self.partitions[i].len()
    }

    pub fn len(&self) -> usize {
        self.partitions.iter().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &TrajectoryStep<T>> {
        self.partitions.iter().flatten()
    }

    /// `n` records drawn uniformly with replacement from partition `i`.
    pub fn sample(&self, i: usize, n: usize, rng: &mut SimRng) -> Result<Vec<TrajectoryStep<T>>> {
        let part = self
            .partitions
            .get(i)
            .ok_or_else(|| Error::arg("partition", format!("index {i} out of range")))?;
        if part.is_empty() {
            return Err(Error::EmptyBuffer(format!(" (partition {i})")));
        }
        Ok((0..n)
            .map(|_| part[rng.random_range(0..part.len())])
            .collect())
    }

    /// Empirical state distribution of partition `i` (or of the whole buffer
    /// for `None`), as `(observation, weight)` pairs sorted by observation.
    pub fn state_weights(&self, i: Option<usize>, n_obs: usize) -> Vec<(usize, T)> {
        let mut counts = vec![0usize; n_obs];
        let mut total = 0usize;
        let mut add = |s: &TrajectoryStep<T>| {
            counts[s.state] += 1;
            total += 1;
        };
        match i {
            Some(i) => self.partitions[i].iter().for_each(&mut add),
            None => self.iter().for_each(&mut add),
        }
        let t = T::from_usize_lossy(total.max(1));
        counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(|(s, c)| (s, T::from_usize_lossy(*c) / t))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::rng_from_seed;

    fn step(state: usize, eps: f64) -> TrajectoryStep<f64> {
        TrajectoryStep {
            state,
            action: 0,
            next_state: state,
            reward: 1.0,
            cost: 0.0,
            behavior_threshold: eps,
            terminal: false,
        }
    }

    #[test]
    fn condition_set_validation() {
        let set = BehaviorConditionSet::<f64>::standard();
        assert_eq!(set.grid().len(), 13);
        assert_eq!(set.generalized().len(), 10);
        assert_eq!(set.behavior_index(40.0), Some(1));
        assert!(BehaviorConditionSet::new(vec![5.0], vec![10.0], 10.0, 70.0).is_err());
        assert!(BehaviorConditionSet::new(vec![20.0], vec![30.0, 10.0], 10.0, 70.0).is_err());
    }

    #[test]
    fn partitions_and_capacity() {
        let mut buf = ReplayBuffer::new(&[20.0, 40.0], 3).unwrap();
        for s in 0..5 {
            buf.push(step(s, 20.0)).unwrap();
        }
        buf.push(step(9, 40.0)).unwrap();
        assert!(buf.push(step(0, 30.0)).is_err());
        assert_eq!(buf.partition_len(0), 3);
        assert_eq!(
            buf.partition(0).map(|s| s.state).collect::<Vec<_>>(),
            vec![2, 3, 4]
        );
        let mut rng = rng_from_seed(1);
        let draw = buf.sample(1, 10, &mut rng).unwrap();
        assert!(draw.iter().all(|s| s.behavior_threshold == 40.0));
        let w = buf.state_weights(None, 10);
        assert_eq!(w.len(), 4);
        assert!((w.iter().map(|(_, w)| w).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
