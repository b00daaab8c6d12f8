use serde::{Deserialize, Serialize};

use super::stats::{median, Histogram};
use super::{csv_table, num, EvalInstance, EvalSetup, ExperimentReport, Failure};
use crate::distributions::total_variation_probs;
use crate::error::{Error, Result};
use crate::explain::explain_instance;

pub const TV_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvRecord {
    pub index: usize,
    /// `TV(h(x), g(select(1)))`.
    pub tv: f64,
    pub n_features: usize,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvSummary {
    pub instances: usize,
    pub failed: usize,
    pub median: f64,
    pub mean: f64,
    pub share_below_0_2: f64,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvResult {
    pub records: Vec<TvRecord>,
    pub failures: Vec<Failure>,
    pub summary: TvSummary,
}

impl TvResult {
    pub fn values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.tv).collect()
    }

    pub fn report(&self, config: serde_json::Value) -> Result<ExperimentReport> {
        ExperimentReport::new(
            "tv",
            config,
            &self.summary,
            &self.records,
            self.failures.clone(),
        )
    }

    /// Histogram table: one row per bin.
    pub fn csv(&self) -> Result<String> {
        let h = &self.summary.histogram;
        let edges = h.edges();
        csv_table(
            &["bin_lo", "bin_hi", "count"],
            h.counts
                .iter()
                .enumerate()
                .map(|(i, c)| vec![num(edges[i]), num(edges[i + 1]), c.to_string()]),
        )
    }

    pub fn svg(&self) -> String {
        let h = &self.summary.histogram;
        crate::export::histogram_svg("TV(model, surrogate) per instance", h.lo, h.hi, &h.counts)
    }
}

/// Fits one explanation per instance and measures how well the surrogate
/// reproduces the model's distribution on the instance itself.
pub fn tv_replication(setup: &EvalSetup<'_>, instances: &[EvalInstance]) -> Result<TvResult> {
    if instances.is_empty() {
        return Err(Error::invalid("tv replication needs at least one instance"));
    }
    let outcomes = setup.map(instances, |inst| -> Result<TvRecord> {
        let target = setup.target();
        let e = explain_instance(&target, &inst.raw, &setup.explain_for(inst.index))?;
        let s = e
            .matrix
            .surrogate_predict(&vec![true; e.matrix.n_features()])?;
        Ok(TvRecord {
            index: inst.index,
            tv: total_variation_probs(e.instance_output().probs(), s.probs()),
            n_features: e.matrix.n_features(),
            final_loss: e
                .matrix
                .diagnostics
                .as_ref()
                .map_or(f64::NAN, |d| d.final_loss),
        })
    })?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (inst, o) in instances.iter().zip(outcomes) {
        match o {
            Ok(r) => records.push(r),
            Err(e) => failures.push(Failure {
                index: inst.index,
                error: e.to_string(),
            }),
        }
    }
    let tvs: Vec<f64> = records.iter().map(|r| r.tv).collect();
    let below = tvs.iter().filter(|&&t| t < 0.2).count();
    let summary = TvSummary {
        instances: records.len(),
        failed: failures.len(),
        median: median(&tvs),
        mean: super::stats::mean(&tvs),
        share_below_0_2: if tvs.is_empty() {
            f64::NAN
        } else {
            below as f64 / tvs.len() as f64
        },
        histogram: Histogram::new(&tvs, TV_BINS, 0.0, 1.0),
    };
    Ok(TvResult {
        records,
        failures,
        summary,
    })
}
