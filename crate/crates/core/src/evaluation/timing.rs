use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::stats::MeanStd;
use super::{csv_table, num, EvalInstance, EvalSetup, ExperimentReport, Failure};
use crate::error::{Error, Result};
use crate::explain::{explain_instance, explain_lime};
use crate::perturbation::extract_features;

/// Cost of both methods on one instance. Wall-clock seconds are kept out
/// of serialized reports so reruns stay byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub index: usize,
    pub lipex_calls: usize,
    pub lime_calls: usize,
    #[serde(skip)]
    pub lipex_seconds: f64,
    #[serde(skip)]
    pub lime_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub instances: usize,
    pub lipex_perturbations: usize,
    pub lime_perturbations: usize,
    pub mean_lipex_calls: f64,
    pub mean_lime_calls: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingResult {
    pub records: Vec<TimingRecord>,
    pub failures: Vec<Failure>,
    pub summary: TimingSummary,
}

impl TimingResult {
    pub fn lipex_seconds(&self) -> MeanStd {
        MeanStd::of(
            &self
                .records
                .iter()
                .map(|r| r.lipex_seconds)
                .collect::<Vec<_>>(),
        )
    }

    pub fn lime_seconds(&self) -> MeanStd {
        MeanStd::of(
            &self
                .records
                .iter()
                .map(|r| r.lime_seconds)
                .collect::<Vec<_>>(),
        )
    }

    pub fn report(&self, config: serde_json::Value) -> Result<ExperimentReport> {
        ExperimentReport::new(
            "timing",
            config,
            &self.summary,
            &self.records,
            self.failures.clone(),
        )
    }

    /// Per-method table including wall-clock time.
    pub fn csv(&self) -> Result<String> {
        let rows = [
            (
                "lipex",
                self.summary.lipex_perturbations,
                self.summary.mean_lipex_calls,
                self.lipex_seconds(),
            ),
            (
                "lime",
                self.summary.lime_perturbations,
                self.summary.mean_lime_calls,
                self.lime_seconds(),
            ),
        ];
        csv_table(
            &[
                "method",
                "perturbations",
                "mean_calls",
                "mean_seconds",
                "std_seconds",
            ],
            rows.iter().map(|(m, n, c, s)| {
                vec![
                    m.to_string(),
                    n.to_string(),
                    num(*c),
                    num(s.mean),
                    num(s.std),
                ]
            }),
        )
    }
}

fn time_instance(setup: &EvalSetup<'_>, inst: &EvalInstance) -> Result<TimingRecord> {
    let cfg = setup.explain_for(inst.index);
    let lime_cfg = setup.lime_for(inst.index);
    if cfg.fit.n_perturbations == 0 || lime_cfg.n_perturbations == 0 {
        // nothing to sample: both arms reduce to unit extraction
        let t = Instant::now();
        extract_features(&inst.raw)?;
        let lipex_seconds = t.elapsed().as_secs_f64();
        let t = Instant::now();
        extract_features(&inst.raw)?;
        return Ok(TimingRecord {
            index: inst.index,
            lipex_calls: 0,
            lime_calls: 0,
            lipex_seconds,
            lime_seconds: t.elapsed().as_secs_f64(),
        });
    }

    let target = setup.target();
    let t = Instant::now();
    let e = explain_instance(&target, &inst.raw, &cfg)?;
    let lipex_seconds = t.elapsed().as_secs_f64();
    let lipex_calls = target.calls();

    // the baseline reuses the selected features; selection is charged to LIPEx only
    let target = setup.target();
    let t = Instant::now();
    explain_lime(&target, &inst.raw, &e.bundle.features, &lime_cfg)?;
    let lime_seconds = t.elapsed().as_secs_f64();
    Ok(TimingRecord {
        index: inst.index,
        lipex_calls,
        lime_calls: target.calls(),
        lipex_seconds,
        lime_seconds,
    })
}

/// Times both methods on every instance, one after the other on the
/// calling thread.
pub fn timing_comparison(
    setup: &EvalSetup<'_>,
    instances: &[EvalInstance],
) -> Result<TimingResult> {
    if instances.is_empty() {
        return Err(Error::invalid("timing needs at least one instance"));
    }
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for inst in instances {
        match time_instance(setup, inst) {
            Ok(r) => records.push(r),
            Err(e) => failures.push(Failure {
                index: inst.index,
                error: e.to_string(),
            }),
        }
    }
    let mean_of = |f: fn(&TimingRecord) -> usize| {
        super::stats::mean(&records.iter().map(|r| f(r) as f64).collect::<Vec<_>>())
    };
    let summary = TimingSummary {
        instances: records.len(),
        lipex_perturbations: setup.explain.fit.n_perturbations,
        lime_perturbations: setup.lime.n_perturbations,
        mean_lipex_calls: mean_of(|r| r.lipex_calls),
        mean_lime_calls: mean_of(|r| r.lime_calls),
    };
    Ok(TimingResult {
        records,
        failures,
        summary,
    })
}
