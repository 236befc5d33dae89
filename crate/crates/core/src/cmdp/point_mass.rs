//! 2-D point mass with the Run and Circle reward/cost functions.
//!
//! Double integrator `x ← x + v·dt, v ← v + a·dt` with accelerations from a
//! 3×3 grid `{-1, 0, 1}² · accel`. Robot-specific reward terms are zero.

use rand::Rng;

use super::env::{Environment, SimRng, Transition};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointTask {
    Run,
    Circle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointState<T> {
    pub pos: [T; 2],
    pub vel: [T; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointMassParams<T> {
    pub task: PointTask,
    pub circle_radius: T,
    pub x_lim: T,
    pub y_lim: T,
    pub v_lim: T,
    pub goal: [T; 2],
    pub dt: T,
    pub accel: T,
    /// Speeds are clipped to this norm after every step.
    pub v_max: T,
    pub start: [T; 2],
    /// Half-width of the uniform jitter applied to the start position.
    pub start_noise: T,
    pub gamma: T,
}

impl<T: Real> PointMassParams<T> {
    pub fn circle() -> Self {
        Self {
            task: PointTask::Circle,
            circle_radius: T::one(),
            x_lim: T::lit(0.6),
            y_lim: T::one(),
            v_lim: T::one(),
            goal: [T::zero(); 2],
            dt: T::lit(0.1),
            accel: T::one(),
            v_max: T::lit(1.5),
            start: [T::zero(); 2],
            start_noise: T::lit(0.1),
            gamma: T::lit(0.99),
        }
    }

    pub fn run() -> Self {
        Self {
            task: PointTask::Run,
            circle_radius: T::one(),
            x_lim: T::one(),
            y_lim: T::lit(0.5),
            v_lim: T::lit(0.8),
            goal: [T::lit(100.0), T::zero()],
            dt: T::lit(0.1),
            accel: T::one(),
            v_max: T::lit(1.5),
            start: [T::zero(); 2],
            start_noise: T::lit(0.1),
            gamma: T::lit(0.99),
        }
    }
}

fn norm2<T: Real>(v: [T; 2]) -> T {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

/// `(−y·vx + x·vy) / (1 + |‖x‖ − r|)`.
pub fn circle_reward<T: Real>(state: &PointState<T>, radius: T) -> T {
    let [x, y] = state.pos;
    let [vx, vy] = state.vel;
    (-y * vx + x * vy) / (T::one() + (norm2(state.pos) - radius).abs())
}

/// `1(|x| > x_lim)`.
pub fn circle_cost<T: Real>(state: &PointState<T>, x_lim: T) -> T {
    if state.pos[0].abs() > x_lim {
        T::one()
    } else {
        T::zero()
    }
}

/// Reward `‖x_{t−1} − g‖ − ‖x_t − g‖`, cost `1(|y| > y_lim) + 1(‖v‖ > v_lim)`.
pub fn run_reward_cost<T: Real>(
    prev: &PointState<T>,
    state: &PointState<T>,
    goal: [T; 2],
    y_lim: T,
    v_lim: T,
) -> (T, T) {
    let d = |p: [T; 2]| norm2([p[0] - goal[0], p[1] - goal[1]]);
    let reward = d(prev.pos) - d(state.pos);
    let mut cost = T::zero();
    if state.pos[1].abs() > y_lim {
        cost += T::one();
    }
    if norm2(state.vel) > v_lim {
        cost += T::one();
    }
    (reward, cost)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointMassEnv<T> {
    pub params: PointMassParams<T>,
}

pub const N_POINT_ACTIONS: usize = 9;

impl<T: Real> PointMassEnv<T> {
    pub fn new(params: PointMassParams<T>) -> Self {
        Self { params }
    }

    pub fn acceleration(&self, action: usize) -> [T; 2] {
        let ax = T::from_usize_lossy(action % 3) - T::one();
        let ay = T::from_usize_lossy(action / 3) - T::one();
        [ax * self.params.accel, ay * self.params.accel]
    }

    /// Deterministic dynamics plus the task's reward and cost.
    pub fn transition(&self, s: &PointState<T>, action: usize) -> (PointState<T>, T, T) {
        let p = &self.params;
        let a = self.acceleration(action);
        let pos = [s.pos[0] + s.vel[0] * p.dt, s.pos[1] + s.vel[1] * p.dt];
        let mut vel = [s.vel[0] + a[0] * p.dt, s.vel[1] + a[1] * p.dt];
        let speed = norm2(vel);
        if speed > p.v_max {
            let k = p.v_max / speed;
            vel = [vel[0] * k, vel[1] * k];
        }
        let next = PointState { pos, vel };
        let (r, c) = match p.task {
            PointTask::Circle => (
                circle_reward(&next, p.circle_radius),
                circle_cost(&next, p.x_lim),
            ),
            PointTask::Run => run_reward_cost(s, &next, p.goal, p.y_lim, p.v_lim),
        };
        (next, r, c)
    }
}

fn bin<T: Real>(x: T, edges: &[T]) -> usize {
    edges.iter().take_while(|e| x >= **e).count()
}

impl<T: Real> Environment<T> for PointMassEnv<T> {
    type State = PointState<T>;

    fn n_obs(&self) -> usize {
        match self.params.task {
            PointTask::Circle => 4 * 4 * 4,
            PointTask::Run => 6 * 3 * 4,
        }
    }

    fn n_actions(&self) -> usize {
        N_POINT_ACTIONS
    }

    fn gamma(&self) -> T {
        self.params.gamma
    }

    fn reset(&self, rng: &mut SimRng) -> PointState<T> {
        let p = &self.params;
        let mut jitter = || T::lit(rng.random_range(-1.0..=1.0)) * p.start_noise;
        PointState {
            pos: [p.start[0] + jitter(), p.start[1] + jitter()],
            vel: [T::zero(); 2],
        }
    }

    /// Coarse aggregation: Circle uses x bins split at `±x_lim` (so the cost
    /// is a function of the observation), y bins split at `±r`, and the
    /// velocity quadrant. Run uses y bins around `±y_lim`, speed bins around
    /// `v_lim`, and the velocity quadrant.
    fn observe(&self, s: &PointState<T>) -> usize {
        let p = &self.params;
        let zero = T::zero();
        let quadrant = usize::from(s.vel[0] >= zero) + 2 * usize::from(s.vel[1] >= zero);
        match p.task {
            PointTask::Circle => {
                let xb = bin(s.pos[0], &[-p.x_lim, zero, p.x_lim]);
                let yb = bin(s.pos[1], &[-p.circle_radius, zero, p.circle_radius]);
                (xb * 4 + yb) * 4 + quadrant
            }
            PointTask::Run => {
                let half = p.y_lim * T::lit(0.5);
                let yb = bin(s.pos[1], &[-p.y_lim, -half, zero, half, p.y_lim]);
                let vb = bin(norm2(s.vel), &[p.v_lim * T::lit(0.5), p.v_lim]);
                (yb * 3 + vb) * 4 + quadrant
            }
        }
    }

    fn step(
        &self,
        s: &PointState<T>,
        action: usize,
        _rng: &mut SimRng,
    ) -> Transition<T, PointState<T>> {
        let (next, reward, cost) = self.transition(s, action);
        Transition {
            next,
            reward,
            cost,
            terminal: false,
        }
    }
}
