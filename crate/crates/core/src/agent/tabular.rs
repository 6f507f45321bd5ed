//! A table of action values over one-hot states. Shares the training path with
//! the Q-network, which lets the update rule be checked against a hand-rolled
//! tabular learner.

use super::ActionValue;
use crate::kpi::{KpiVector, KPI_DIM};
use crate::ransim::SchedulerOption;
use crate::{Error, Result};

const ACTIONS: usize = SchedulerOption::COUNT;

/// `Q(s, a) = table[s][a]`, where `s` is the position of the largest of the
/// first `num_states` state entries.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ {
    num_states: usize,
    table: Vec<f64>,
}

impl TabularQ {
    pub fn new(num_states: usize) -> Self {
        assert!(
            (1..=KPI_DIM).contains(&num_states),
            "num_states must be in 1..={KPI_DIM}"
        );
        Self {
            num_states,
            table: vec![0.0; num_states * ACTIONS],
        }
    }

    pub fn one_hot(s: usize) -> KpiVector {
        let mut v = [0.0; KPI_DIM];
        v[s] = 1.0;
        KpiVector::new(&v).expect("one-hot state is in range")
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.table[s * ACTIONS + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.table[s * ACTIONS + a] = v;
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    fn index(&self, state: &[f64]) -> Result<usize> {
        if state.len() < self.num_states {
            return Err(Error::Shape(format!(
                "state has {} entries, table needs {}",
                state.len(),
                self.num_states
            )));
        }
        Ok(super::argmax(&state[..self.num_states]))
    }
}

impl ActionValue for TabularQ {
    type Grad = Vec<f64>;

    fn action_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        let s = self.index(state)?;
        Ok(self.table[s * ACTIONS..(s + 1) * ACTIONS].to_vec())
    }

    fn zero_grad(&self) -> Vec<f64> {
        vec![0.0; self.table.len()]
    }

    fn accumulate_gradient(&self, state: &[f64], action: usize, scale: f64, grad: &mut Vec<f64>) -> Result<()> {
        if action >= ACTIONS {
            return Err(Error::InvalidArgument(format!(
                "action index {action} not below {ACTIONS}"
            )));
        }
        let s = self.index(state)?;
        grad[s * ACTIONS + action] += scale;
        Ok(())
    }

    fn apply_gradient(&mut self, grad: &Vec<f64>, scale: f64) -> Result<()> {
        if grad.len() != self.table.len() {
            return Err(Error::Shape("gradient shape differs from table".into()));
        }
        for (q, g) in self.table.iter_mut().zip(grad) {
            *q += scale * g;
        }
        Ok(())
    }

    fn soft_update(&mut self, online: &Self, tau: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidArgument(format!("tau {tau} outside [0, 1]")));
        }
        if online.table.len() != self.table.len() {
            return Err(Error::Shape("soft update between tables of different size".into()));
        }
        for (t, o) in self.table.iter_mut().zip(&online.table) {
            *t = (1.0 - tau) * *t + tau * o;
        }
        Ok(())
    }
}
