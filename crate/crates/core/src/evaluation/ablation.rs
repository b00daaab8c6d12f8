use serde::{Deserialize, Serialize};

use super::stats::MeanStd;
use super::{csv_table, disjoint_rounds, num, EvalInstance, EvalSetup, ExperimentReport, Failure};
use crate::error::{Error, Result};
use crate::explain::{explain_instance, explain_lime, Target};
use crate::feature_selection::select;
use crate::perturbation::{BooleanPerturbation, FeatureVocabulary};
use crate::seed;

const ROUNDS_STREAM: u64 = 0x524f_554e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lipex,
    Lime,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Lipex => "lipex",
            Method::Lime => "lime",
        }
    }
}

/// Per instance and K: `None` when the instance has fewer than K
/// selected features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRecord {
    pub index: usize,
    pub predicted: usize,
    pub n_features: usize,
    /// Model argmax changed after removing the matrix's top-K.
    pub lipex_flip: Vec<Option<bool>>,
    /// Same with the baseline's top-K, when it was run.
    pub lime_flip: Option<Vec<Option<bool>>>,
    /// Model argmax on the damaged input equals the surrogate argmax on
    /// the damaged reduced vector (original matrix, no refit).
    pub tracking: Vec<Option<bool>>,
}

/// A rate per K, as mean ± std over disjoint rounds of instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub name: String,
    pub ks: Vec<usize>,
    pub per_round: Vec<Vec<f64>>,
    pub rate: Vec<MeanStd>,
    /// Instances skipped at each K for having too few features.
    pub skipped: Vec<usize>,
}

impl RateCurve {
    pub fn means(&self) -> Vec<f64> {
        self.rate.iter().map(|r| r.mean).collect()
    }

    fn build(
        name: &str,
        ks: &[usize],
        outcomes: &[&[Option<bool>]],
        rounds: &[Vec<usize>],
    ) -> Self {
        let per_round: Vec<Vec<f64>> = rounds
            .iter()
            .filter(|r| !r.is_empty())
            .map(|r| {
                (0..ks.len())
                    .map(|k| {
                        let vals: Vec<bool> = r.iter().filter_map(|&i| outcomes[i][k]).collect();
                        if vals.is_empty() {
                            f64::NAN
                        } else {
                            vals.iter().filter(|&&b| b).count() as f64 / vals.len() as f64
                        }
                    })
                    .collect()
            })
            .collect();
        let rate = (0..ks.len())
            .map(|k| {
                MeanStd::of(
                    &per_round
                        .iter()
                        .map(|r| r[k])
                        .filter(|v| v.is_finite())
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        let skipped = (0..ks.len())
            .map(|k| outcomes.iter().filter(|o| o[k].is_none()).count())
            .collect();
        RateCurve {
            name: name.into(),
            ks: ks.to_vec(),
            per_round,
            rate,
            skipped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub rounds: usize,
    pub instances: usize,
    pub curves: Vec<RateCurve>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationStudy {
    pub records: Vec<AblationRecord>,
    pub failures: Vec<Failure>,
    pub summary: AblationSummary,
}

impl AblationStudy {
    pub fn curve(&self, name: &str) -> Option<&RateCurve> {
        self.summary.curves.iter().find(|c| c.name == name)
    }

    pub fn report(&self, experiment: &str, config: serde_json::Value) -> Result<ExperimentReport> {
        ExperimentReport::new(
            experiment,
            config,
            &self.summary,
            &self.records,
            self.failures.clone(),
        )
    }

    /// One row per curve, one mean/std column pair per K.
    pub fn csv(&self) -> Result<String> {
        let ks = self
            .summary
            .curves
            .first()
            .map(|c| c.ks.clone())
            .unwrap_or_default();
        let mut header = vec!["curve".to_string()];
        for k in &ks {
            header.push(format!("top{k}_mean"));
            header.push(format!("top{k}_std"));
        }
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        csv_table(
            &header_refs,
            self.summary.curves.iter().map(|c| {
                let mut row = vec![c.name.clone()];
                for r in &c.rate {
                    row.push(num(r.mean));
                    row.push(num(r.std));
                }
                row
            }),
        )
    }

    pub fn svg(&self, title: &str) -> String {
        use crate::export::{line_chart_svg, Series};
        let ks: Vec<f64> = self
            .summary
            .curves
            .first()
            .map(|c| c.ks.iter().map(|&k| k as f64).collect())
            .unwrap_or_default();
        let series: Vec<Series> = self
            .summary
            .curves
            .iter()
            .map(|c| Series {
                name: c.name.clone(),
                y: c.means(),
            })
            .collect();
        line_chart_svg(title, "K", &ks, &series)
    }
}

fn damaged(width: usize, selected: &[usize], top: &[usize], k: usize) -> BooleanPerturbation {
    let drop: Vec<usize> = top[..k].iter().map(|&j| selected[j]).collect();
    BooleanPerturbation::dropping(width, &drop)
}

fn argmaxes(
    target: &Target<'_>,
    vocab: &FeatureVocabulary,
    ys: &[BooleanPerturbation],
) -> Result<Vec<usize>> {
    Ok(target
        .predict_perturbations(vocab, ys)?
        .iter()
        .map(|d| d.argmax())
        .collect())
}

fn ablate_instance(
    setup: &EvalSetup<'_>,
    inst: &EvalInstance,
    ks: &[usize],
    with_lime: bool,
) -> Result<AblationRecord> {
    let target = setup.target();
    let e = explain_instance(&target, &inst.raw, &setup.explain_for(inst.index))?;
    let predicted = e.instance_output().argmax();
    let fx = e.matrix.n_features();
    let width = e.bundle.vocab.len();
    let selected = &e.bundle.features.indices;
    let kmax = ks.iter().copied().filter(|&k| k <= fx).max().unwrap_or(0);

    let top = e.matrix.top_k(predicted, kmax)?;
    let ys: Vec<BooleanPerturbation> = ks
        .iter()
        .filter(|&&k| k <= fx)
        .map(|&k| damaged(width, selected, &top, k))
        .collect();
    let model_arg = argmaxes(&target, &e.bundle.vocab, &ys)?;
    let mut lipex_flip = Vec::with_capacity(ks.len());
    let mut tracking = Vec::with_capacity(ks.len());
    let mut it = ys.iter().zip(&model_arg);
    for &k in ks {
        if k > fx {
            lipex_flip.push(None);
            tracking.push(None);
            continue;
        }
        let (y, &m) = it.next().expect("one damaged vector per feasible K");
        lipex_flip.push(Some(m != predicted));
        let s = e
            .matrix
            .surrogate_predict(&select(y, &e.bundle.features)?)?;
        tracking.push(Some(s.argmax() == m));
    }

    let lime_flip = if with_lime {
        let lime = explain_lime(
            &target,
            &inst.raw,
            &e.bundle.features,
            &setup.lime_for(inst.index),
        )?;
        let top = lime.top_k(predicted, kmax)?;
        let ys: Vec<BooleanPerturbation> = ks
            .iter()
            .filter(|&&k| k <= fx)
            .map(|&k| damaged(width, selected, &top, k))
            .collect();
        let args = argmaxes(&target, &e.bundle.vocab, &ys)?;
        let mut it = args.iter();
        Some(
            ks.iter()
                .map(|&k| (k <= fx).then(|| *it.next().expect("one per feasible K") != predicted))
                .collect(),
        )
    } else {
        None
    };
    Ok(AblationRecord {
        index: inst.index,
        predicted,
        n_features: fx,
        lipex_flip,
        lime_flip,
        tracking,
    })
}

/// Runs both ablation measurements in one pass per instance: flip rates
/// for the matrix (and the baseline when `with_lime`) and re-prediction
/// tracking for the matrix.
pub fn ablation_study(
    setup: &EvalSetup<'_>,
    instances: &[EvalInstance],
    ks: &[usize],
    rounds: usize,
    with_lime: bool,
) -> Result<AblationStudy> {
    if instances.is_empty() || ks.is_empty() {
        return Err(Error::invalid(
            "ablation needs instances and at least one K",
        ));
    }
    let outcomes = setup.map(instances, |inst| {
        ablate_instance(setup, inst, ks, with_lime)
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
    let groups = disjoint_rounds(
        records.len(),
        rounds,
        seed::derive(setup.seed, ROUNDS_STREAM),
    );
    let mut curves = Vec::new();
    let flips: Vec<&[Option<bool>]> = records.iter().map(|r| r.lipex_flip.as_slice()).collect();
    curves.push(RateCurve::build("lipex_flip", ks, &flips, &groups));
    if with_lime {
        let flips: Vec<&[Option<bool>]> = records
            .iter()
            .map(|r| r.lime_flip.as_deref().expect("baseline outcomes present"))
            .collect();
        curves.push(RateCurve::build("lime_flip", ks, &flips, &groups));
    }
    let track: Vec<&[Option<bool>]> = records.iter().map(|r| r.tracking.as_slice()).collect();
    curves.push(RateCurve::build("lipex_tracking", ks, &track, &groups));
    Ok(AblationStudy {
        summary: AblationSummary {
            rounds: groups.len(),
            instances: records.len(),
            curves,
        },
        records,
        failures,
    })
}

/// Share of instances whose predicted class changes once the method's
/// top-K features are removed, per K.
pub fn ablation_flip_rate(
    setup: &EvalSetup<'_>,
    instances: &[EvalInstance],
    method: Method,
    ks: &[usize],
    rounds: usize,
) -> Result<RateCurve> {
    let study = ablation_study(setup, instances, ks, rounds, method == Method::Lime)?;
    let name = format!("{}_flip", method.name());
    Ok(study.curve(&name).cloned().expect("curve computed"))
}

/// Share of instances where, after removing the matrix's top-K features,
/// the model and the original surrogate agree on the new argmax.
pub fn reprediction_tracking(
    setup: &EvalSetup<'_>,
    instances: &[EvalInstance],
    ks: &[usize],
    rounds: usize,
) -> Result<RateCurve> {
    let study = ablation_study(setup, instances, ks, rounds, false)?;
    Ok(study
        .curve("lipex_tracking")
        .cloned()
        .expect("curve computed"))
}
