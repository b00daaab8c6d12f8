//! Experiments over a set of instances: explanation fidelity, tracking of
//! model perturbations, ablation faithfulness, top-k stability under
//! restricted perturbations, and the cost comparison with the baseline.
//!
//! Every per-instance quantity is seeded from the run seed and the
//! instance's dataset index, so results do not depend on worker count or
//! on which other instances are in the run.

mod ablation;
mod sanity;
mod stability;
pub mod stats;
mod timing;
mod tv;

pub use ablation::{
    ablation_flip_rate, ablation_study, reprediction_tracking, AblationRecord, AblationStudy,
    Method, RateCurve,
};
pub use sanity::{sanity_check, SanityPoint, SanityResult};
pub use stability::{
    jaccard_stability, JaccardPoint, JaccardRecord, JaccardResult, SEGMENT_DELTAS, TEXT_DELTAS,
};
pub use timing::{timing_comparison, TimingRecord, TimingResult};
pub use tv::{tv_replication, TvRecord, TvResult, TV_BINS};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::{ExplainConfig, Target};
use crate::ingestion::Featurizer;
use crate::lime::LimeConfig;
use crate::model::BlackBox;
use crate::perturbation::RawInstance;
use crate::seed;

/// Default number of disjoint rounds for mean ± std.
pub const DEFAULT_ROUNDS: usize = 3;

const LIME_STREAM: u64 = 0x4c49_4d45;

/// An instance under evaluation, keyed by its dataset index.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalInstance {
    pub index: usize,
    pub raw: RawInstance,
}

/// A per-instance failure, excluded from aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub index: usize,
    pub error: String,
}

/// Model, explanation settings and seeding shared by all experiments.
#[derive(Clone, Copy)]
pub struct EvalSetup<'a> {
    pub model: &'a dyn BlackBox,
    pub featurizer: Option<&'a Featurizer>,
    pub explain: &'a ExplainConfig,
    pub lime: &'a LimeConfig,
    pub seed: u64,
    /// Worker threads; 0 means available parallelism.
    pub workers: usize,
}

impl<'a> EvalSetup<'a> {
    pub fn new(
        model: &'a dyn BlackBox,
        explain: &'a ExplainConfig,
        lime: &'a LimeConfig,
        seed: u64,
    ) -> Self {
        EvalSetup {
            model,
            featurizer: None,
            explain,
            lime,
            seed,
            workers: 0,
        }
    }

    pub fn with_featurizer(mut self, featurizer: Option<&'a Featurizer>) -> Self {
        self.featurizer = featurizer;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_model(mut self, model: &'a dyn BlackBox) -> Self {
        self.model = model;
        self
    }

    /// A fresh counting adapter over the model.
    pub fn target(&self) -> Target<'a> {
        let t = Target::new(self.model);
        match self.featurizer {
            Some(f) => t.with_featurizer(f),
            None => t,
        }
    }

    /// Explanation settings for instance `index`.
    pub fn explain_for(&self, index: usize) -> ExplainConfig {
        let mut cfg = self.explain.clone();
        cfg.fit.seed = seed::derive(self.seed, index as u64);
        cfg
    }

    /// Baseline settings for instance `index`.
    pub fn lime_for(&self, index: usize) -> LimeConfig {
        let mut cfg = self.lime.clone();
        cfg.seed = seed::derive_path(self.seed, &[index as u64, LIME_STREAM]);
        cfg
    }

    /// Ordered parallel map over `items`.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Result<Vec<R>>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        if self.workers == 1 || items.len() <= 1 {
            return Ok(items.iter().map(f).collect());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
        Ok(pool.install(|| items.par_iter().map(f).collect()))
    }

    /// Snapshot of the settings that determine results.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({
            "seed": self.seed,
            "explain": self.explain,
            "lime": self.lime,
        })
    }
}

/// Splits `0..n` into `rounds` disjoint groups after a seeded shuffle.
/// Group sizes differ by at most one.
pub fn disjoint_rounds(n: usize, rounds: usize, seed: u64) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    let rounds = rounds.max(1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let mut out = vec![Vec::new(); rounds];
    for (i, j) in order.into_iter().enumerate() {
        out[i % rounds].push(j);
    }
    for r in &mut out {
        r.sort_unstable();
    }
    out
}

/// Full machine-readable record of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub version: String,
    pub config: serde_json::Value,
    pub aggregate: serde_json::Value,
    pub records: serde_json::Value,
    pub failures: Vec<Failure>,
}

impl ExperimentReport {
    pub fn new<A: Serialize, R: Serialize>(
        experiment: &str,
        config: serde_json::Value,
        aggregate: &A,
        records: &R,
        failures: Vec<Failure>,
    ) -> Result<Self> {
        Ok(ExperimentReport {
            experiment: experiment.into(),
            version: crate::VERSION.into(),
            config,
            aggregate: serde_json::to_value(aggregate)?,
            records: serde_json::to_value(records)?,
            failures,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Renders rows as CSV.
pub(crate) fn csv_table(
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub(crate) fn num(x: f64) -> String {
    crate::export::format_num(x)
}
