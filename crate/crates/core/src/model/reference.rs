use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::BlackBox;
use crate::distributions::{argmax, softmax_into, ClassDistribution, ClassLabels};
use crate::error::{Error, Result};
use crate::ingestion::Featurizer;
use crate::seed;

pub const MODEL_FORMAT: &str = "lipex-model/1";

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Architecture {
    /// Multinomial logistic regression, `d → C`.
    LogisticRegression {
        #[serde(default = "yes")]
        bias: bool,
    },
    /// One hidden ReLU layer, `d → hidden → C`.
    ReluMlp {
        hidden: usize,
        #[serde(default = "yes")]
        bias: bool,
    },
}

impl Architecture {
    pub fn logistic() -> Self {
        Architecture::LogisticRegression { bias: true }
    }

    pub fn relu_mlp(hidden: usize) -> Self {
        Architecture::ReluMlp { hidden, bias: true }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Architecture::LogisticRegression { .. } => "logistic-regression",
            Architecture::ReluMlp { .. } => "relu-mlp",
        }
    }

    fn has_bias(&self) -> bool {
        match *self {
            Architecture::LogisticRegression { bias } | Architecture::ReluMlp { bias, .. } => bias,
        }
    }
}

/// Affine layer with a row-major `outputs × inputs` weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        DenseLayer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }

    /// `out = W x + b`, skipping zero inputs.
    fn forward_into(&self, x: &[f64], nonzero: &[usize], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            let row = self.row(o);
            *slot = self.bias[o] + nonzero.iter().map(|&i| row[i] * x[i]).sum::<f64>();
        }
    }

    fn validate(&self) -> Result<()> {
        if self.weights.len() != self.inputs * self.outputs || self.bias.len() != self.outputs {
            return Err(Error::invalid(
                "layer weight arrays do not match declared sizes",
            ));
        }
        if self
            .weights
            .iter()
            .chain(&self.bias)
            .any(|w| !w.is_finite())
        {
            return Err(Error::invalid("non-finite layer parameter"));
        }
        Ok(())
    }
}

/// A built-in softmax classifier: logistic regression or a one-hidden-layer
/// ReLU network. Serializes to a self-describing JSON model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModel {
    pub format: String,
    pub architecture: Architecture,
    pub classes: ClassLabels,
    pub input_dim: usize,
    pub layers: Vec<DenseLayer>,
    /// Bag-of-words featurizer for text models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub featurizer: Option<Featurizer>,
}

fn nonzero(x: &[f64]) -> Vec<usize> {
    x.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, _)| i)
        .collect()
}

impl ReferenceModel {
    /// Zero-initialised model. For the MLP the hidden layer is drawn from a
    /// He-normal distribution seeded by `seed`; the output layer is zero, so
    /// every fresh model predicts the uniform distribution.
    pub fn init(
        architecture: Architecture,
        classes: ClassLabels,
        input_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::InvalidDataset("need at least two classes".into()));
        }
        let c = classes.len();
        let layers = match architecture {
            Architecture::LogisticRegression { .. } => vec![DenseLayer::zeros(input_dim, c)],
            Architecture::ReluMlp { hidden, .. } => {
                if hidden == 0 {
                    return Err(Error::invalid("hidden width must be positive"));
                }
                let mut first = DenseLayer::zeros(input_dim, hidden);
                let normal = Normal::new(0.0, (2.0 / input_dim.max(1) as f64).sqrt())
                    .map_err(|e| Error::invalid(e.to_string()))?;
                let mut rng = seed::rng(seed);
                first
                    .weights
                    .iter_mut()
                    .for_each(|w| *w = normal.sample(&mut rng));
                vec![first, DenseLayer::zeros(hidden, c)]
            }
        };
        Ok(ReferenceModel {
            format: MODEL_FORMAT.into(),
            architecture,
            classes,
            input_dim,
            layers,
            featurizer: None,
        })
    }

    pub fn from_layers(
        architecture: Architecture,
        classes: ClassLabels,
        layers: Vec<DenseLayer>,
    ) -> Result<Self> {
        let input_dim = layers.first().map_or(0, |l| l.inputs);
        let m = ReferenceModel {
            format: MODEL_FORMAT.into(),
            architecture,
            classes,
            input_dim,
            layers,
            featurizer: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_featurizer(mut self, featurizer: Featurizer) -> Self {
        self.featurizer = Some(featurizer);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let expected_layers = match self.architecture {
            Architecture::LogisticRegression { .. } => 1,
            Architecture::ReluMlp { .. } => 2,
        };
        if self.layers.len() != expected_layers {
            return Err(Error::invalid(format!(
                "{} expects {expected_layers} layer(s), found {}",
                self.architecture.name(),
                self.layers.len()
            )));
        }
        if let Architecture::ReluMlp { hidden, .. } = self.architecture {
            if self.layers[0].outputs != hidden {
                return Err(Error::invalid("hidden width does not match architecture"));
            }
        }
        let mut width = self.input_dim;
        for l in &self.layers {
            l.validate()?;
            if l.inputs != width {
                return Err(Error::dim(width, l.inputs, "layer input width"));
            }
            width = l.outputs;
        }
        if width != self.classes.len() {
            return Err(Error::dim(self.classes.len(), width, "final layer width"));
        }
        if let Some(f) = &self.featurizer {
            if f.dim() != self.input_dim {
                return Err(Error::dim(self.input_dim, f.dim(), "featurizer width"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: ReferenceModel = serde_json::from_str(s)?;
        if m.format != MODEL_FORMAT {
            return Err(Error::invalid(format!(
                "unknown model format `{}`",
                m.format
            )));
        }
        m.validate()?;
        Ok(m)
    }

    pub fn last_layer(&self) -> &DenseLayer {
        self.layers.last().expect("model has layers")
    }

    /// Pre-softmax outputs.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let nz = nonzero(&cur);
            let mut out = vec![0.0; layer.outputs];
            layer.forward_into(&cur, &nz, &mut out);
            if li != last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            cur = out;
        }
        cur
    }

    /// Which hidden units are active at `x` (empty for logistic models).
    pub fn activation_pattern(&self, x: &[f64]) -> Vec<bool> {
        if self.layers.len() < 2 {
            return Vec::new();
        }
        let nz = nonzero(x);
        let mut h = vec![0.0; self.layers[0].outputs];
        self.layers[0].forward_into(x, &nz, &mut h);
        h.iter().map(|v| *v > 0.0).collect()
    }

    /// The affine map `(A, c)` with `logits(x') = A x' + c` for every `x'`
    /// sharing `x`'s activation pattern. `A` is row-major `C × d`.
    pub fn local_linear_map(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let c = self.classes.len();
        let d = self.input_dim;
        match self.layers.as_slice() {
            [only] => (only.weights.clone(), only.bias.clone()),
            [first, second] => {
                let active = self.activation_pattern(x);
                let mut a = vec![0.0; c * d];
                let mut offset = second.bias.clone();
                for k in 0..c {
                    let w2 = second.row(k);
                    for (h, &on) in active.iter().enumerate() {
                        if !on || w2[h] == 0.0 {
                            continue;
                        }
                        offset[k] += w2[h] * first.bias[h];
                        let w1 = first.row(h);
                        for i in 0..d {
                            a[k * d + i] += w2[h] * w1[i];
                        }
                    }
                }
                (a, offset)
            }
            _ => unreachable!("validated layer count"),
        }
    }

    fn predict_one(&self, x: &[f64]) -> ClassDistribution {
        let logits = self.logits(x);
        let mut probs = vec![0.0; logits.len()];
        softmax_into(&logits, &mut probs);
        ClassDistribution::normalized(probs, self.classes.clone(), 1e-9)
            .expect("softmax output lies on the simplex")
    }

    /// Share of rows whose argmax equals the label.
    pub fn accuracy(&self, data: &TrainingData) -> f64 {
        if data.features.is_empty() {
            return 0.0;
        }
        let hits = data
            .features
            .iter()
            .zip(&data.labels)
            .filter(|(x, y)| argmax(&self.logits(x)) == **y)
            .count();
        hits as f64 / data.features.len() as f64
    }

    /// Mean cross-entropy over `data`.
    pub fn cross_entropy(&self, data: &TrainingData) -> f64 {
        let mut total = 0.0;
        let mut probs = vec![0.0; self.classes.len()];
        for (x, &y) in data.features.iter().zip(&data.labels) {
            softmax_into(&self.logits(x), &mut probs);
            total -= probs[y].max(f64::MIN_POSITIVE).ln();
        }
        total / data.features.len().max(1) as f64
    }
}

impl BlackBox for ReferenceModel {
    fn class_labels(&self) -> &ClassLabels {
        &self.classes
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn predict(&self, batch: &[Vec<f64>]) -> Result<Vec<ClassDistribution>> {
        if let Some(row) = batch.iter().find(|r| r.len() != self.input_dim) {
            return Err(Error::dim(self.input_dim, row.len(), "model input"));
        }
        Ok(batch.iter().map(|x| self.predict_one(x)).collect())
    }

    fn accepts_text(&self) -> bool {
        self.featurizer.is_some()
    }

    fn predict_text(&self, batch: &[String]) -> Result<Vec<ClassDistribution>> {
        let f = self
            .featurizer
            .as_ref()
            .ok_or_else(|| Error::Unsupported("model has no featurizer".into()))?;
        Ok(batch
            .iter()
            .map(|t| self.predict_one(&f.featurize(t)))
            .collect())
    }
}

/// Labelled rows in model input space.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: ClassLabels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// L2 penalty on weights (not biases).
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.2,
            epochs: 60,
            batch_size: 32,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Full-data cross-entropy before training and after each epoch.
    pub losses: Vec<f64>,
    pub train_accuracy: f64,
}

struct Grads {
    layers: Vec<DenseLayer>,
}

/// Minibatch gradient descent on the cross-entropy. Reproducible from
/// `cfg.seed`.
pub fn train_reference(
    data: &TrainingData,
    architecture: Architecture,
    cfg: &TrainConfig,
) -> Result<(ReferenceModel, TrainReport)> {
    let n = data.features.len();
    if n == 0 {
        return Err(Error::InvalidDataset("no training rows".into()));
    }
    if data.labels.len() != n {
        return Err(Error::dim(n, data.labels.len(), "labels"));
    }
    let mut present: Vec<usize> = data.labels.clone();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::InvalidDataset(
            "training data holds a single class".into(),
        ));
    }
    if let Some(&bad) = data.labels.iter().find(|&&y| y >= data.classes.len()) {
        return Err(Error::InvalidDataset(format!(
            "label index {bad} out of range"
        )));
    }
    let d = data.features[0].len();
    if let Some(row) = data.features.iter().find(|r| r.len() != d) {
        return Err(Error::dim(d, row.len(), "training row"));
    }
    if data.features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDataset("non-finite feature value".into()));
    }
    if cfg.learning_rate.is_nan() || cfg.learning_rate <= 0.0 || cfg.batch_size == 0 {
        return Err(Error::invalid(
            "learning rate and batch size must be positive",
        ));
    }

    let mut model = ReferenceModel::init(
        architecture,
        data.classes.clone(),
        d,
        seed::derive(cfg.seed, 0),
    )?;
    let use_bias = architecture.has_bias();
    let mut rng = seed::rng(seed::derive(cfg.seed, 1));
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = vec![model.cross_entropy(data)];
    let nz_rows: Vec<Vec<usize>> = data.features.iter().map(|x| nonzero(x)).collect();

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let grads = batch_gradient(&model, data, &nz_rows, batch);
            let scale = cfg.learning_rate / batch.len() as f64;
            for (layer, g) in model.layers.iter_mut().zip(&grads.layers) {
                for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
                    *w -= scale * gw + cfg.learning_rate * cfg.weight_decay * *w;
                }
                if use_bias {
                    for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                        *b -= scale * gb;
                    }
                }
            }
        }
        let loss = model.cross_entropy(data);
        if !loss.is_finite() {
            return Err(Error::Divergence {
                epoch: losses.len(),
                learning_rate: cfg.learning_rate,
            });
        }
        losses.push(loss);
    }
    let train_accuracy = model.accuracy(data);
    Ok((
        model,
        TrainReport {
            losses,
            train_accuracy,
        },
    ))
}

/// Summed (not averaged) gradient of the cross-entropy over `batch`.
fn batch_gradient(
    model: &ReferenceModel,
    data: &TrainingData,
    nz_rows: &[Vec<usize>],
    batch: &[usize],
) -> Grads {
    let mut grads = Grads {
        layers: model
            .layers
            .iter()
            .map(|l| DenseLayer::zeros(l.inputs, l.outputs))
            .collect(),
    };
    let c = model.classes.len();
    let mut probs = vec![0.0; c];
    for &i in batch {
        let x = &data.features[i];
        let nz = &nz_rows[i];
        match model.layers.as_slice() {
            [out] => {
                let mut logits = vec![0.0; c];
                out.forward_into(x, nz, &mut logits);
                softmax_into(&logits, &mut probs);
                probs[data.labels[i]] -= 1.0;
                let g = &mut grads.layers[0];
                for (k, &pk) in probs.iter().enumerate() {
                    g.bias[k] += pk;
                    for &j in nz {
                        g.weights[k * out.inputs + j] += pk * x[j];
                    }
                }
            }
            [hid, out] => {
                let mut h = vec![0.0; hid.outputs];
                hid.forward_into(x, nz, &mut h);
                h.iter_mut().for_each(|v| *v = v.max(0.0));
                let h_nz: Vec<usize> = (0..h.len()).filter(|&j| h[j] > 0.0).collect();
                let mut logits = vec![0.0; c];
                out.forward_into(&h, &h_nz, &mut logits);
                softmax_into(&logits, &mut probs);
                probs[data.labels[i]] -= 1.0;
                let mut dh = vec![0.0; hid.outputs];
                {
                    let g = &mut grads.layers[1];
                    for (k, &pk) in probs.iter().enumerate() {
                        g.bias[k] += pk;
                        let row = out.row(k);
                        for &j in &h_nz {
                            g.weights[k * out.inputs + j] += pk * h[j];
                            dh[j] += pk * row[j];
                        }
                    }
                }
                let g = &mut grads.layers[0];
                for &j in &h_nz {
                    g.bias[j] += dh[j];
                    for &m in nz {
                        g.weights[j * hid.inputs + m] += dh[j] * x[m];
                    }
                }
            }
            _ => unreachable!("validated layer count"),
        }
    }
    grads
}

/// Gaussian noise on the final layer's weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionConfig {
    pub sigma: f64,
    pub seed: u64,
}

/// Copy of `model` with i.i.d. `N(0, σ²)` noise added to every final-layer
/// weight. `σ = 0` returns an exact copy.
pub fn distort_last_layer(model: &ReferenceModel, cfg: &DistortionConfig) -> ReferenceModel {
    let mut out = model.clone();
    if cfg.sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.sigma).expect("positive finite sigma");
        let mut rng = seed::rng(cfg.seed);
        let last = out.layers.last_mut().expect("model has layers");
        last.weights
            .iter_mut()
            .for_each(|w| *w += normal.sample(&mut rng));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::total_variation_probs;

    fn labels(c: usize) -> ClassLabels {
        ClassLabels::numbered(c)
    }

    /// Three well-separated blobs around the unit axes in 3-d.
    fn separable3() -> TrainingData {
        let mut features = Vec::new();
        let mut ys = Vec::new();
        let mut rng = seed::rng(42);
        let jitter = Normal::new(0.0, 0.1).unwrap();
        for k in 0..3 {
            for _ in 0..30 {
                let mut x = vec![0.0; 3];
                x[k] = 1.0;
                x.iter_mut().for_each(|v| *v += jitter.sample(&mut rng));
                features.push(x);
                ys.push(k);
            }
        }
        TrainingData {
            features,
            labels: ys,
            classes: labels(3),
        }
    }

    fn separable2() -> TrainingData {
        let mut d = separable3();
        d.classes = labels(2);
        let keep: Vec<usize> = (0..d.labels.len()).filter(|&i| d.labels[i] < 2).collect();
        TrainingData {
            features: keep.iter().map(|&i| d.features[i].clone()).collect(),
            labels: keep.iter().map(|&i| d.labels[i]).collect(),
            classes: labels(2),
        }
    }

    #[test]
    fn zero_weights_predict_uniform() {
        let m = ReferenceModel::init(Architecture::logistic(), labels(4), 5, 0).unwrap();
        let out = m.predict(&[vec![3.0, -1.0, 0.0, 2.0, 9.0]]).unwrap();
        assert!(out[0].probs().iter().all(|p| (p - 0.25).abs() < 1e-15));
        assert!(m.predict(&[vec![1.0; 4]]).is_err());
    }

    #[test]
    fn mlp_is_deterministic() {
        let (m, _) = train_reference(
            &separable3(),
            Architecture::relu_mlp(8),
            &TrainConfig::default(),
        )
        .unwrap();
        let x = vec![0.3, 0.9, -0.2];
        let out = m.predict(&[x.clone(), x.clone(), x]).unwrap();
        assert_eq!(out[0], out[1]);
        assert_eq!(out[1], out[2]);
    }

    #[test]
    fn logistic_separates_three_classes() {
        let data = separable3();
        let (m, report) =
            train_reference(&data, Architecture::logistic(), &TrainConfig::default()).unwrap();
        // independent argmax check over the raw logits
        let acc = data
            .features
            .iter()
            .zip(&data.labels)
            .filter(|(x, y)| {
                let l = m.logits(x);
                (0..3).all(|k| k == **y || l[**y] > l[k])
            })
            .count() as f64
            / data.features.len() as f64;
        assert_eq!(acc, 1.0);
        assert_eq!(report.train_accuracy, 1.0);
    }

    #[test]
    fn training_reaches_low_loss_and_is_reproducible() {
        let data = separable2();
        let cfg = TrainConfig {
            epochs: 100,
            ..TrainConfig::default()
        };
        for arch in [Architecture::logistic(), Architecture::relu_mlp(16)] {
            let (m1, r1) = train_reference(&data, arch, &cfg).unwrap();
            let (m2, _) = train_reference(&data, arch, &cfg).unwrap();
            assert_eq!(m1, m2);
            let last = *r1.losses.last().unwrap();
            assert!(last < 0.1, "{arch:?}: {last}");
            // non-increasing up to minibatch noise
            for w in r1.losses.windows(2) {
                assert!(w[1] <= w[0] + 1e-2, "{:?}", r1.losses);
            }
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        for arch in [Architecture::logistic(), Architecture::relu_mlp(4)] {
            let (m, _) = train_reference(&separable3(), arch, &cfg).unwrap();
            let p = m.predict(&[vec![1.0, 2.0, 3.0]]).unwrap();
            assert!(p[0].probs().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        }
    }

    #[test]
    fn single_class_rejected() {
        let mut d = separable3();
        d.labels.iter_mut().for_each(|y| *y = 1);
        assert!(matches!(
            train_reference(&d, Architecture::logistic(), &TrainConfig::default()),
            Err(Error::InvalidDataset(_))
        ));
    }

    #[test]
    fn model_json_round_trip() {
        let (m, _) = train_reference(
            &separable3(),
            Architecture::relu_mlp(4),
            &TrainConfig::default(),
        )
        .unwrap();
        let back = ReferenceModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let mut broken = m.clone();
        broken.layers[1].weights.pop();
        assert!(ReferenceModel::from_json(&serde_json::to_string(&broken).unwrap()).is_err());
    }

    #[test]
    fn zero_sigma_distortion_is_identity() {
        let (m, _) = train_reference(
            &separable3(),
            Architecture::relu_mlp(8),
            &TrainConfig::default(),
        )
        .unwrap();
        let same = distort_last_layer(
            &m,
            &DistortionConfig {
                sigma: 0.0,
                seed: 5,
            },
        );
        assert_eq!(same, m);
        let a = distort_last_layer(
            &m,
            &DistortionConfig {
                sigma: 0.5,
                seed: 5,
            },
        );
        let b = distort_last_layer(
            &m,
            &DistortionConfig {
                sigma: 0.5,
                seed: 5,
            },
        );
        assert_eq!(a, b);
        assert_ne!(a, m);
        assert_eq!(a.layers[0], m.layers[0]);
    }

    #[test]
    fn drift_grows_with_sigma() {
        let data = separable3();
        let (m, _) =
            train_reference(&data, Architecture::relu_mlp(8), &TrainConfig::default()).unwrap();
        let base = m.predict(&data.features).unwrap();
        let mut prev = 0.0;
        for (si, sigma) in [0.0, 0.25, 0.5, 1.0, 2.0, 4.0].into_iter().enumerate() {
            let mut total = 0.0;
            for trial in 0..24u64 {
                let d = distort_last_layer(
                    &m,
                    &DistortionConfig {
                        sigma,
                        seed: seed::derive_path(3, &[si as u64, trial]),
                    },
                );
                let out = d.predict(&data.features).unwrap();
                total += base
                    .iter()
                    .zip(&out)
                    .map(|(p, q)| total_variation_probs(p.probs(), q.probs()))
                    .sum::<f64>()
                    / base.len() as f64;
            }
            let mean = total / 24.0;
            assert!(mean >= prev, "sigma {sigma}: {mean} < {prev}");
            prev = mean;
        }
    }

    #[test]
    fn relu_net_is_locally_linear() {
        let data = separable3();
        let (m, _) =
            train_reference(&data, Architecture::relu_mlp(16), &TrainConfig::default()).unwrap();
        let mut rng = seed::rng(8);
        let normal = Normal::new(0.0, 1.0).unwrap();
        for x in data.features.iter().take(20) {
            let (a, c) = m.local_linear_map(x);
            let v: Vec<f64> = (0..3).map(|_| normal.sample(&mut rng)).collect();
            let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + 1e-4 * b).collect();
            if m.activation_pattern(&xp) != m.activation_pattern(x) {
                continue;
            }
            let direct = m.logits(&xp);
            for k in 0..3 {
                let lin: f64 = c[k] + (0..3).map(|i| a[k * 3 + i] * xp[i]).sum::<f64>();
                let rel = (lin - direct[k]).abs() / direct[k].abs().max(1e-12);
                assert!(rel < 1e-6, "{rel}");
            }
        }
    }
}
