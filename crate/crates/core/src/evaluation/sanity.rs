use serde::{Deserialize, Serialize};

use super::stats::{non_decreasing, spearman, MeanStd};
use super::{csv_table, num, EvalInstance, EvalSetup, ExperimentReport, Failure};
use crate::distributions::{total_variation_probs, ClassDistribution};
use crate::error::{Error, Result};
use crate::explain::explain_instance;
use crate::model::{distort_last_layer, DistortionConfig, ReferenceModel};
use crate::seed;

const SANITY_STREAM: u64 = 0x5341_4e49;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanityPoint {
    pub sigma: f64,
    /// Mean over trials of the instance-averaged `TV(h(x), h_σ(x))`.
    pub model_drift: MeanStd,
    /// Same for the surrogates fitted to `h` and `h_σ`.
    pub surrogate_drift: MeanStd,
    /// Instance fits that failed under this sigma, summed over trials.
    pub failed_fits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanitySummary {
    pub trials: usize,
    pub instances: usize,
    pub points: Vec<SanityPoint>,
    pub spearman: f64,
    pub model_curve_non_decreasing: bool,
    pub surrogate_curve_non_decreasing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SanityResult {
    pub summary: SanitySummary,
    /// Per sigma, per trial: (model drift, surrogate drift).
    pub trials: Vec<Vec<(f64, f64)>>,
    pub failures: Vec<Failure>,
}

impl SanityResult {
    pub fn sigmas(&self) -> Vec<f64> {
        self.summary.points.iter().map(|p| p.sigma).collect()
    }

    pub fn model_curve(&self) -> Vec<f64> {
        self.summary
            .points
            .iter()
            .map(|p| p.model_drift.mean)
            .collect()
    }

    pub fn surrogate_curve(&self) -> Vec<f64> {
        self.summary
            .points
            .iter()
            .map(|p| p.surrogate_drift.mean)
            .collect()
    }

    pub fn report(&self, config: serde_json::Value) -> Result<ExperimentReport> {
        ExperimentReport::new(
            "sanity",
            config,
            &self.summary,
            &self.trials,
            self.failures.clone(),
        )
    }

    pub fn csv(&self) -> Result<String> {
        csv_table(
            &[
                "sigma",
                "model_drift_mean",
                "model_drift_std",
                "surrogate_drift_mean",
                "surrogate_drift_std",
            ],
            self.summary.points.iter().map(|p| {
                vec![
                    num(p.sigma),
                    num(p.model_drift.mean),
                    num(p.model_drift.std),
                    num(p.surrogate_drift.mean),
                    num(p.surrogate_drift.std),
                ]
            }),
        )
    }

    pub fn svg(&self) -> String {
        use crate::export::{line_chart_svg, Series};
        line_chart_svg(
            "Drift under last-layer noise",
            "sigma",
            &self.sigmas(),
            &[
                Series {
                    name: "model".into(),
                    y: self.model_curve(),
                },
                Series {
                    name: "surrogate".into(),
                    y: self.surrogate_curve(),
                },
            ],
        )
    }
}

fn surrogate_at_instance(
    setup: &EvalSetup<'_>,
    inst: &EvalInstance,
) -> Result<(ClassDistribution, ClassDistribution)> {
    let target = setup.target();
    let e = explain_instance(&target, &inst.raw, &setup.explain_for(inst.index))?;
    let s = e
        .matrix
        .surrogate_predict(&vec![true; e.matrix.n_features()])?;
    Ok((e.instance_output().clone(), s))
}

/// Adds Gaussian noise of each `sigma` to the last layer of `base`, refits
/// every instance on the distorted model, and tracks how far both the
/// model output and the surrogate move from their undistorted values.
/// `setup.model` is ignored in favour of `base`.
pub fn sanity_check(
    setup: &EvalSetup<'_>,
    base: &ReferenceModel,
    instances: &[EvalInstance],
    sigmas: &[f64],
    trials: usize,
) -> Result<SanityResult> {
    if instances.is_empty() || sigmas.is_empty() || trials == 0 {
        return Err(Error::invalid(
            "sanity check needs instances, sigmas and trials",
        ));
    }
    if sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(Error::invalid("sigmas must be finite and non-negative"));
    }
    let base_setup = setup.with_model(base);
    let originals = base_setup.map(instances, |inst| surrogate_at_instance(&base_setup, inst))?;
    let mut failures = Vec::new();
    let mut kept: Vec<(&EvalInstance, ClassDistribution, ClassDistribution)> = Vec::new();
    for (inst, o) in instances.iter().zip(originals) {
        match o {
            Ok((q, p)) => kept.push((inst, q, p)),
            Err(e) => failures.push(Failure {
                index: inst.index,
                error: e.to_string(),
            }),
        }
    }
    if kept.is_empty() {
        return Err(Error::invalid(
            "no instance could be explained on the undistorted model",
        ));
    }

    let jobs: Vec<(usize, usize)> = (0..sigmas.len())
        .flat_map(|s| (0..trials).map(move |t| (s, t)))
        .collect();
    // each job runs its instances sequentially; jobs are spread over workers
    let results = setup.map(&jobs, |&(s, t)| {
        let cfg = DistortionConfig {
            sigma: sigmas[s],
            seed: seed::derive_path(setup.seed, &[SANITY_STREAM, s as u64, t as u64]),
        };
        let distorted = distort_last_layer(base, &cfg);
        let job_setup = setup.with_model(&distorted).with_workers(1);
        let mut model_tv = Vec::new();
        let mut surr_tv = Vec::new();
        let mut failed = 0;
        for (inst, q0, p0) in &kept {
            match surrogate_at_instance(&job_setup, inst) {
                Ok((q, p)) => {
                    model_tv.push(total_variation_probs(q0.probs(), q.probs()));
                    surr_tv.push(total_variation_probs(p0.probs(), p.probs()));
                }
                Err(_) => failed += 1,
            }
        }
        (
            super::stats::mean(&model_tv),
            super::stats::mean(&surr_tv),
            failed,
        )
    })?;

    let mut per_sigma = vec![Vec::with_capacity(trials); sigmas.len()];
    let mut points = Vec::with_capacity(sigmas.len());
    for ((s, _), r) in jobs.iter().zip(&results) {
        per_sigma[*s].push(*r);
    }
    for (s, rs) in per_sigma.iter().enumerate() {
        let m: Vec<f64> = rs.iter().map(|r| r.0).collect();
        let g: Vec<f64> = rs.iter().map(|r| r.1).collect();
        points.push(SanityPoint {
            sigma: sigmas[s],
            model_drift: MeanStd::of(&m),
            surrogate_drift: MeanStd::of(&g),
            failed_fits: rs.iter().map(|r| r.2).sum(),
        });
    }
    let mc: Vec<f64> = points.iter().map(|p| p.model_drift.mean).collect();
    let sc: Vec<f64> = points.iter().map(|p| p.surrogate_drift.mean).collect();
    let summary = SanitySummary {
        trials,
        instances: kept.len(),
        spearman: if mc.len() > 1 {
            spearman(&mc, &sc)
        } else {
            f64::NAN
        },
        model_curve_non_decreasing: non_decreasing(&mc, 0.0),
        surrogate_curve_non_decreasing: non_decreasing(&sc, 0.0),
        points,
    };
    Ok(SanityResult {
        summary,
        trials: per_sigma
            .iter()
            .map(|rs| rs.iter().map(|r| (r.0, r.1)).collect())
            .collect(),
        failures,
    })
}
