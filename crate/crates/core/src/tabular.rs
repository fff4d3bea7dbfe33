//! Tabular double Q-learning, the reference the deep agent generalizes.

use swindqn_tensor::argmax;

/// Row-major `states × actions` action-value table.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    pub states: usize,
    pub actions: usize,
    pub values: Vec<f64>,
}

impl QTable {
    pub fn zeros(states: usize, actions: usize) -> Self {
        QTable { states, actions, values: vec![0.0; states * actions] }
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.actions..(s + 1) * self.actions]
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &QTable) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Which table a double-Q update writes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    A,
    B,
}

/// One double Q-learning update. For [`Which::A`]:
/// `Q^A(s,a) ← Q^A(s,a) + α(r + γ·Q^B(s′, a*) − Q^A(s,a))` with
/// `a* = argmax_a Q^A(s′, a)`, and symmetrically for `B`. `next = None`
/// marks a terminal transition (no bootstrap). The other table is not
/// touched. Returns the size of the change.
#[allow(clippy::too_many_arguments)]
pub fn tabular_double_q_update(
    qa: &mut QTable,
    qb: &mut QTable,
    s: usize,
    a: usize,
    r: f64,
    next: Option<usize>,
    alpha: f64,
    gamma: f64,
    which: Which,
) -> f64 {
    let (update, eval) = match which {
        Which::A => (qa, &*qb),
        Which::B => (qb, &*qa),
    };
    let bootstrap = next.map_or(0.0, |s2| eval.get(s2, argmax(update.row(s2))));
    let old = update.get(s, a);
    let delta = alpha * (r + gamma * bootstrap - old);
    update.set(s, a, old + delta);
    delta.abs()
}

/// `(probability, reward, next state)`; `None` marks a terminal transition.
pub type Outcome = (f64, f64, Option<usize>);

/// Finite MDP with deterministic or stochastic transitions.
#[derive(Clone, Debug)]
pub struct Mdp {
    pub states: usize,
    pub actions: usize,
    /// `transitions[s][a]` = list of `(probability, reward, next state or
    /// None for termination)`.
    pub transitions: Vec<Vec<Vec<Outcome>>>,
}

impl Mdp {
    /// Q* by value iteration until the largest change is below `tol`.
    pub fn value_iteration(&self, gamma: f64, tol: f64) -> QTable {
        let mut q = QTable::zeros(self.states, self.actions);
        loop {
            let mut next = q.clone();
            for s in 0..self.states {
                for a in 0..self.actions {
                    let v = self.transitions[s][a]
                        .iter()
                        .map(|&(p, r, s2)| {
                            let cont = s2.map_or(0.0, |s2| q.row(s2).iter().cloned().fold(f64::NEG_INFINITY, f64::max));
                            p * (r + gamma * cont)
                        })
                        .sum();
                    next.set(s, a, v);
                }
            }
            let diff = next.max_abs_diff(&q);
            q = next;
            if diff < tol {
                return q;
            }
        }
    }

    /// Draws `(reward, next)` for `(s, a)` from a uniform `u ∈ [0, 1)`.
    pub fn sample(&self, s: usize, a: usize, u: f64) -> (f64, Option<usize>) {
        let mut acc = 0.0;
        let outcomes = &self.transitions[s][a];
        for &(p, r, s2) in outcomes {
            acc += p;
            if u < acc {
                return (r, s2);
            }
        }
        let &(_, r, s2) = outcomes.last().expect("non-empty outcome list");
        (r, s2)
    }
}
