use serde::{Deserialize, Serialize};

use super::AgentError;

/// One point of the hyperparameter grid of the trainable agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperparameterSet {
    /// Step size of the training update.
    pub step_size: f64,
    pub batch_size: usize,
    /// Discount factor in `(0, 1]`.
    pub gamma: f64,
    /// Hidden / feature-expansion width.
    pub net_dimension: usize,
    /// Rollout length.
    pub target_step: usize,
    /// Total environment steps spent training.
    pub break_step: usize,
}

/// Declared values of every hyperparameter; the grid is their Cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperparameterGrid {
    pub step_size: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub gamma: Vec<f64>,
    pub net_dimension: Vec<usize>,
    pub target_step: Vec<usize>,
    pub break_step: Vec<usize>,
}

impl Default for HyperparameterGrid {
    /// The 5 x 4 x 5 x 3 x 3 x 3 reference grid.
    fn default() -> Self {
        Self {
            step_size: vec![3e-2, 2.3e-2, 1.5e-2, 7.5e-3, 5e-6],
            batch_size: vec![512, 1280, 2048, 3080],
            gamma: vec![0.95, 0.96, 0.97, 0.98, 0.99],
            net_dimension: vec![512, 1024, 2048],
            target_step: vec![2500, 3750, 5000],
            break_step: vec![30_000, 45_000, 60_000],
        }
    }
}

impl HyperparameterGrid {
    fn radices(&self) -> [usize; 6] {
        [
            self.step_size.len(),
            self.batch_size.len(),
            self.gamma.len(),
            self.net_dimension.len(),
            self.target_step.len(),
            self.break_step.len(),
        ]
    }

    /// Number of grid points.
    pub fn cardinality(&self) -> usize {
        self.radices().iter().product()
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.cardinality() == 0 {
            return Err(AgentError::Hyperparameter(
                "every hyperparameter needs at least one value".into(),
            ));
        }
        if let Some(g) = self.gamma.iter().find(|g| !(**g > 0.0 && **g <= 1.0)) {
            return Err(AgentError::Hyperparameter(format!(
                "gamma {g} outside (0, 1]"
            )));
        }
        if let Some(s) = self
            .step_size
            .iter()
            .find(|s| !(s.is_finite() && **s >= 0.0))
        {
            return Err(AgentError::Hyperparameter(format!(
                "step_size {s} must be >= 0"
            )));
        }
        if self.batch_size.contains(&0)
            || self.target_step.contains(&0)
            || self.net_dimension.contains(&0)
        {
            return Err(AgentError::Hyperparameter(
                "batch_size, net_dimension and target_step must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Grid point `index` in mixed-radix order (`step_size` varies slowest).
    pub fn get(&self, index: usize) -> Option<HyperparameterSet> {
        if index >= self.cardinality() {
            return None;
        }
        let r = self.radices();
        let mut digits = [0usize; 6];
        let mut rest = index;
        for i in (0..6).rev() {
            digits[i] = rest % r[i];
            rest /= r[i];
        }
        Some(HyperparameterSet {
            step_size: self.step_size[digits[0]],
            batch_size: self.batch_size[digits[1]],
            gamma: self.gamma[digits[2]],
            net_dimension: self.net_dimension[digits[3]],
            target_step: self.target_step[digits[4]],
            break_step: self.break_step[digits[5]],
        })
    }

    /// `true` if every value of `set` is declared in this grid.
    pub fn contains(&self, set: &HyperparameterSet) -> bool {
        self.step_size.contains(&set.step_size)
            && self.batch_size.contains(&set.batch_size)
            && self.gamma.contains(&set.gamma)
            && self.net_dimension.contains(&set.net_dimension)
            && self.target_step.contains(&set.target_step)
            && self.break_step.contains(&set.break_step)
    }
}
