use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::stats::jaccard;
use super::{csv_table, num, EvalInstance, EvalSetup, ExperimentReport, Failure};
use crate::error::{Error, Result};
use crate::explain::{explain_instance, prepare_lime_bundle};
use crate::lime::fit_lime_all_classes;
use crate::lipex::fit;

pub const TEXT_DELTAS: [f64; 4] = [PI / 16.0, PI / 8.0, PI / 4.0, PI / 2.0];
pub const SEGMENT_DELTAS: [f64; 4] = [7.0 * PI / 30.0, 8.0 * PI / 30.0, 9.0 * PI / 30.0, PI / 2.0];

/// Jaccard indices of one instance at one δ. `None` when the restricted
/// set leaves nothing but the unperturbed instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JaccardPoint {
    pub delta: f64,
    pub lipex_perturbations: usize,
    pub lime_perturbations: usize,
    pub lipex: Option<f64>,
    pub lime: Option<f64>,
    pub lipex_vs_lime: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JaccardRecord {
    pub index: usize,
    pub predicted: usize,
    pub lipex_reference: Vec<String>,
    pub lime_reference: Vec<String>,
    pub points: Vec<JaccardPoint>,
}

/// Per-δ averages over the instances fittable at that δ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JaccardCurvePoint {
    pub delta: f64,
    pub lipex: f64,
    pub lime: f64,
    pub lipex_vs_lime: f64,
    pub instances: usize,
    pub unfittable: usize,
    pub mean_lipex_perturbations: f64,
    pub mean_lime_perturbations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JaccardSummary {
    pub k: usize,
    pub instances: usize,
    pub curve: Vec<JaccardCurvePoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JaccardResult {
    pub records: Vec<JaccardRecord>,
    pub failures: Vec<Failure>,
    pub summary: JaccardSummary,
}

impl JaccardResult {
    pub fn deltas(&self) -> Vec<f64> {
        self.summary.curve.iter().map(|p| p.delta).collect()
    }

    pub fn lipex_curve(&self) -> Vec<f64> {
        self.summary.curve.iter().map(|p| p.lipex).collect()
    }

    pub fn lime_curve(&self) -> Vec<f64> {
        self.summary.curve.iter().map(|p| p.lime).collect()
    }

    pub fn cross_curve(&self) -> Vec<f64> {
        self.summary.curve.iter().map(|p| p.lipex_vs_lime).collect()
    }

    pub fn report(&self, config: serde_json::Value) -> Result<ExperimentReport> {
        ExperimentReport::new(
            "jaccard",
            config,
            &self.summary,
            &self.records,
            self.failures.clone(),
        )
    }

    pub fn csv(&self) -> Result<String> {
        csv_table(
            &[
                "delta",
                "lipex",
                "lime",
                "lipex_vs_lime",
                "instances",
                "unfittable",
            ],
            self.summary.curve.iter().map(|p| {
                vec![
                    num(p.delta),
                    num(p.lipex),
                    num(p.lime),
                    num(p.lipex_vs_lime),
                    p.instances.to_string(),
                    p.unfittable.to_string(),
                ]
            }),
        )
    }

    pub fn svg(&self) -> String {
        use crate::export::{line_chart_svg, Series};
        line_chart_svg(
            "Top-k stability under angular restriction",
            "delta",
            &self.deltas(),
            &[
                Series {
                    name: "lipex".into(),
                    y: self.lipex_curve(),
                },
                Series {
                    name: "lime".into(),
                    y: self.lime_curve(),
                },
                Series {
                    name: "lipex_vs_lime".into(),
                    y: self.cross_curve(),
                },
            ],
        )
    }
}

fn names(features: &[String], idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&j| features[j].clone()).collect()
}

fn jaccard_instance(
    setup: &EvalSetup<'_>,
    inst: &EvalInstance,
    deltas: &[f64],
    k: usize,
) -> Result<JaccardRecord> {
    let target = setup.target();
    let cfg = setup.explain_for(inst.index);
    let lime_cfg = setup.lime_for(inst.index);
    let e = explain_instance(&target, &inst.raw, &cfg)?;
    let predicted = e.instance_output().argmax();
    let lime_bundle = prepare_lime_bundle(&target, &inst.raw, &e.bundle.features, &lime_cfg)?;
    let lime = fit_lime_all_classes(&lime_bundle, &lime_cfg)?;
    let features = e.matrix.features();
    let lipex_ref = names(features, &e.matrix.top_k(predicted, k)?);
    let lime_ref = names(&lime.features, &lime.top_k(predicted, k)?);

    let mut points = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let b = e.bundle.restrict_by_angle(delta)?;
        let lb = lime_bundle.restrict_by_angle(delta)?;
        let mut p = JaccardPoint {
            delta,
            lipex_perturbations: b.perturbations.len(),
            lime_perturbations: lb.perturbations.len(),
            lipex: None,
            lime: None,
            lipex_vs_lime: None,
        };
        if b.perturbations.len() > 1 && lb.perturbations.len() > 1 {
            // an unrestricted set is the reference run; the fits are deterministic
            let lipex_list = if b.perturbations.len() == e.bundle.perturbations.len() {
                lipex_ref.clone()
            } else {
                let w = fit(&b, &cfg.fit)?;
                names(features, &w.top_k(predicted, k)?)
            };
            let lime_list = if lb.perturbations.len() == lime_bundle.perturbations.len() {
                lime_ref.clone()
            } else {
                let l = fit_lime_all_classes(&lb, &lime_cfg)?;
                names(&l.features, &l.top_k(predicted, k)?)
            };
            p.lipex = Some(jaccard(&lipex_list, &lipex_ref));
            p.lime = Some(jaccard(&lime_list, &lime_ref));
            p.lipex_vs_lime = Some(jaccard(&lipex_list, &lime_ref));
        }
        points.push(p);
    }
    Ok(JaccardRecord {
        index: inst.index,
        predicted,
        lipex_reference: lipex_ref,
        lime_reference: lime_ref,
        points,
    })
}

/// Compares the top-`k` lists of fits restricted to perturbations within
/// each δ of the instance against the unrestricted reference lists.
pub fn jaccard_stability(
    setup: &EvalSetup<'_>,
    instances: &[EvalInstance],
    deltas: &[f64],
    k: usize,
) -> Result<JaccardResult> {
    if instances.is_empty() {
        return Err(Error::invalid(
            "jaccard stability needs at least one instance",
        ));
    }
    if deltas.is_empty() || deltas.iter().any(|&d| !(d > 0.0 && d <= PI / 2.0 + 1e-12)) {
        return Err(Error::invalid("every delta must lie in (0, pi/2]"));
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let outcomes = setup.map(instances, |inst| jaccard_instance(setup, inst, deltas, k))?;
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
    let curve = deltas
        .iter()
        .enumerate()
        .map(|(d, &delta)| {
            let pts: Vec<&JaccardPoint> = records.iter().map(|r| &r.points[d]).collect();
            let ok: Vec<&&JaccardPoint> = pts.iter().filter(|p| p.lipex.is_some()).collect();
            let avg = |f: &dyn Fn(&JaccardPoint) -> Option<f64>| {
                super::stats::mean(&ok.iter().filter_map(|p| f(p)).collect::<Vec<_>>())
            };
            let count_mean = |f: &dyn Fn(&JaccardPoint) -> usize| {
                super::stats::mean(&pts.iter().map(|p| f(p) as f64).collect::<Vec<_>>())
            };
            JaccardCurvePoint {
                delta,
                lipex: avg(&|p| p.lipex),
                lime: avg(&|p| p.lime),
                lipex_vs_lime: avg(&|p| p.lipex_vs_lime),
                instances: ok.len(),
                unfittable: pts.len() - ok.len(),
                mean_lipex_perturbations: count_mean(&|p| p.lipex_perturbations),
                mean_lime_perturbations: count_mean(&|p| p.lime_perturbations),
            }
        })
        .collect();
    Ok(JaccardResult {
        summary: JaccardSummary {
            k,
            instances: records.len(),
            curve,
        },
        records,
        failures,
    })
}
