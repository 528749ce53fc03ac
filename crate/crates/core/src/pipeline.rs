//! End-to-end private publishing: partition, then synthesize.

use serde::{Deserialize, Serialize};

use crate::dp::{BudgetAccountant, NoiseSource, PrivacyBudget};
use crate::error::{Error, Result};
use crate::grid::{RangeQuery, SpatialHistogram};
use crate::partition::{partition, PartitionSet};
use crate::synth::{synthesize, RepairMode, SynthesisConfig, SynthesisTrace};

fn default_weights() -> [f64; 4] {
    [1.0; 4]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DqamConfig {
    pub epsilon: f64,
    pub iterations: usize,
    /// Split threshold; `4 / eps1^2` when absent.
    #[serde(default)]
    pub delta: Option<f64>,
    pub seed: u64,
    #[serde(default)]
    pub repair: RepairMode,
    /// Relative weights of the four budget parts.
    #[serde(default = "default_weights")]
    pub budget_weights: [f64; 4],
}

impl DqamConfig {
    pub fn new(epsilon: f64, iterations: usize, seed: u64) -> Self {
        Self { epsilon, iterations, delta: None, seed, repair: RepairMode::Optimal, budget_weights: default_weights() }
    }

    pub fn budget(&self) -> Result<PrivacyBudget> {
        PrivacyBudget::with_weights(self.epsilon, self.budget_weights, self.iterations)
    }
}

#[derive(Debug, Clone)]
pub struct DqamRun {
    pub histogram: SpatialHistogram,
    pub partition: PartitionSet,
    pub trace: SynthesisTrace,
    pub accountant: BudgetAccountant,
}

/// Publish a private estimate of `h_true` tuned to `queries`.
///
/// The noise stream is seeded from `config.seed`; partitioning and
/// synthesis draw from independent labeled sub-streams.
pub fn publish_dqam(h_true: &SpatialHistogram, queries: &[RangeQuery], config: &DqamConfig) -> Result<DqamRun> {
    publish_dqam_with(h_true, queries, config, &NoiseSource::new(config.seed))
}

/// [`publish_dqam`] with an explicit root noise source.
pub fn publish_dqam_with(
    h_true: &SpatialHistogram,
    queries: &[RangeQuery],
    config: &DqamConfig,
    root: &NoiseSource,
) -> Result<DqamRun> {
    let budget = config.budget()?;
    let mut accountant = BudgetAccountant::new(budget.epsilon);

    let mut ns = root.derive("partition");
    let ps = partition(h_true, &budget, &mut ns, config.delta)?;
    accountant.charge("partition costs", budget.eps1)?;
    accountant.charge("region densities", budget.eps2)?;

    let mut ns = root.derive("synthesis");
    let synth_cfg = SynthesisConfig { budget, repair: config.repair };
    let (est, trace) = synthesize(h_true, queries, &ps, &synth_cfg, &mut ns)?;
    for _ in 0..budget.iterations {
        accountant.charge("query selection", budget.selection_share())?;
        accountant.charge("query measurement", budget.measurement_share())?;
    }
    if accountant.spent() > budget.epsilon * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "run spent {} of a {} budget",
            accountant.spent(),
            budget.epsilon
        )));
    }

    let mut histogram = est.without_metadata();
    histogram.set_n(h_true.n());
    Ok(DqamRun { histogram, partition: ps, trace, accountant })
}
