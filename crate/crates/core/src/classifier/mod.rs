//! One-hidden-layer pattern-recognition network: `tanh` hidden units, softmax
//! output, mean cross-entropy loss, trained full-batch with scaled conjugate
//! gradient ([`train_scg`]).
//!
//! Inputs are min-max scaled to `[-1, 1]` with statistics fitted on the
//! training split. Parameters are flattened as `[W1 (hidden×input, row-major),
//! b1, W2 (output×hidden, row-major), b2]` wherever a flat vector is used.

mod scg;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub use scg::{train_scg, StopReason, TrainConfig, TrainHistory};

/// Anything that maps a raw feature vector to class probabilities over an
/// ordered label space.
pub trait Classifier {
    fn label_space(&self) -> &[String];
    fn probabilities(&self, features: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl Dims {
    pub fn param_count(&self) -> usize {
        self.hidden * self.input + self.hidden + self.output * self.hidden + self.output
    }

    fn split<'a>(
        &self,
        params: &'a [f64],
    ) -> (ArrayView2<'a, f64>, ArrayView1<'a, f64>, ArrayView2<'a, f64>, ArrayView1<'a, f64>) {
        let Dims {
            input: d,
            hidden: h,
            output: k,
        } = *self;
        let (w1, rest) = params.split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(k * h);
        (
            ArrayView2::from_shape((h, d), w1).expect("sized by dims"),
            ArrayView1::from(b1),
            ArrayView2::from_shape((k, h), w2).expect("sized by dims"),
            ArrayView1::from(b2),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub dims: Dims,
    /// Flat parameter vector, see the module docs for the layout.
    pub params: Vec<f64>,
    pub norm_min: Vec<f64>,
    pub norm_max: Vec<f64>,
    pub label_space: Vec<String>,
    pub config: Option<TrainConfig>,
}

/// Normalized inputs and label indices for one loss evaluation.
#[derive(Clone, Debug)]
pub struct Batch {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
}

impl MlpModel {
    /// A model with all parameters zero; its normalization maps `[-1, 1]`
    /// onto itself.
    pub fn zeros(dims: Dims, label_space: Vec<String>) -> Result<Self> {
        if label_space.len() != dims.output {
            return Err(Error::Dimension {
                expected: dims.output,
                actual: label_space.len(),
            });
        }
        if dims.input == 0 || dims.hidden == 0 || dims.output == 0 {
            return Err(Error::invalid("network dimensions must be positive"));
        }
        Ok(MlpModel {
            dims,
            params: vec![0.0; dims.param_count()],
            norm_min: vec![-1.0; dims.input],
            norm_max: vec![1.0; dims.input],
            label_space,
            config: None,
        })
    }

    /// Weights and biases drawn from uniform(-r, r), r = 1/sqrt(fan-in).
    pub fn random(dims: Dims, label_space: Vec<String>, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(dims, label_space)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r1 = 1.0 / (dims.input as f64).sqrt();
        let r2 = 1.0 / (dims.hidden as f64).sqrt();
        let first_layer = dims.hidden * dims.input + dims.hidden;
        for (i, p) in model.params.iter_mut().enumerate() {
            let r = if i < first_layer { r1 } else { r2 };
            *p = rng.random_range(-r..r);
        }
        Ok(model)
    }

    pub fn w1(&self) -> ArrayView2<'_, f64> {
        self.dims.split(&self.params).0
    }

    pub fn b1(&self) -> ArrayView1<'_, f64> {
        self.dims.split(&self.params).1
    }

    pub fn w2(&self) -> ArrayView2<'_, f64> {
        self.dims.split(&self.params).2
    }

    pub fn b2(&self) -> ArrayView1<'_, f64> {
        self.dims.split(&self.params).3
    }

    /// Fits per-feature min/max on `rows` (the training split).
    pub fn fit_normalization(&mut self, rows: &[FeatureVector]) -> Result<()> {
        let d = self.dims.input;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for row in rows {
            check_len(d, row.values.len())?;
            for (i, v) in row.values.iter().enumerate() {
                lo[i] = lo[i].min(*v);
                hi[i] = hi[i].max(*v);
            }
        }
        if rows.is_empty() {
            return Err(Error::invalid("cannot fit normalization on an empty set"));
        }
        self.norm_min = lo;
        self.norm_max = hi;
        Ok(())
    }

    /// Maps each feature to `[-1, 1]` using the training range. Zero-range
    /// features map to 0; values outside the training range are not clipped.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.norm_min.iter().zip(&self.norm_max))
            .map(|(v, (lo, hi))| {
                let range = hi - lo;
                if range > 0.0 {
                    2.0 * (v - lo) / range - 1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Class probabilities for an already-normalized input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dims.input, x.len())?;
        let (w1, b1, w2, b2) = self.dims.split(&self.params);
        let h = (w1.dot(&ArrayView1::from(x)) + b1).mapv(f64::tanh);
        let z = w2.dot(&h) + b2;
        Ok(softmax(z.view()))
    }

    pub fn batch(&self, rows: &[FeatureVector]) -> Result<Batch> {
        let d = self.dims.input;
        let mut x = Array2::zeros((rows.len(), d));
        let mut y = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            check_len(d, row.values.len())?;
            x.row_mut(i).assign(&Array1::from(self.normalize(&row.values)));
            y.push(self.label_index(&row.label)?);
        }
        Ok(Batch { x, y })
    }

    pub fn label_index(&self, label: &str) -> Result<usize> {
        self.label_space
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Mean cross-entropy and its gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, batch: &Batch) -> Result<(f64, Vec<f64>)> {
        check_batch(self.dims, batch)?;
        Ok(loss_and_gradient(self.dims, &self.params, batch))
    }

    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        check_batch(self.dims, batch)?;
        Ok(loss_only(self.dims, &self.params, batch))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        MlpModel::try_from(file)
    }
}

impl Classifier for MlpModel {
    fn label_space(&self) -> &[String] {
        &self.label_space
    }

    fn probabilities(&self, features: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dims.input, features.len())?;
        self.forward(&self.normalize(features))
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension { expected, actual });
    }
    Ok(())
}

fn check_batch(dims: Dims, batch: &Batch) -> Result<()> {
    if batch.y.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    check_len(dims.input, batch.x.ncols())?;
    check_len(batch.y.len(), batch.x.nrows())?;
    if let Some(&bad) = batch.y.iter().find(|&&y| y >= dims.output) {
        return Err(Error::invalid(format!("label index {bad} out of range")));
    }
    Ok(())
}

fn softmax(z: ArrayView1<'_, f64>) -> Vec<f64> {
    let max = z.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exp: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

struct Activations {
    hidden: Array2<f64>,
    /// Row-wise log-softmax of the output layer.
    log_p: Array2<f64>,
}

fn activations(dims: Dims, params: &[f64], x: &Array2<f64>) -> Activations {
    let (w1, b1, w2, b2) = dims.split(params);
    let mut hidden = x.dot(&w1.t());
    hidden += &b1;
    hidden.mapv_inplace(f64::tanh);
    let mut log_p = hidden.dot(&w2.t());
    log_p += &b2;
    for mut row in log_p.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row -= lse;
    }
    Activations { hidden, log_p }
}

fn mean_cross_entropy(log_p: &Array2<f64>, y: &[usize]) -> f64 {
    -y.iter().enumerate().map(|(i, &c)| log_p[[i, c]]).sum::<f64>() / y.len() as f64
}

pub(crate) fn loss_only(dims: Dims, params: &[f64], batch: &Batch) -> f64 {
    let act = activations(dims, params, &batch.x);
    mean_cross_entropy(&act.log_p, &batch.y)
}

pub(crate) fn loss_and_gradient(dims: Dims, params: &[f64], batch: &Batch) -> (f64, Vec<f64>) {
    let n = batch.y.len() as f64;
    let (_, _, w2, _) = dims.split(params);
    let Activations { hidden, log_p } = activations(dims, params, &batch.x);
    let loss = mean_cross_entropy(&log_p, &batch.y);

    // dL/dz2 = (p - onehot) / n
    let mut d2 = log_p.mapv(f64::exp);
    for (i, &c) in batch.y.iter().enumerate() {
        d2[[i, c]] -= 1.0;
    }
    d2 /= n;
    let g_w2 = d2.t().dot(&hidden);
    let g_b2 = d2.sum_axis(Axis(0));
    let mut d1 = d2.dot(&w2);
    d1.zip_mut_with(&hidden, |d, h| *d *= 1.0 - h * h);
    let g_w1 = d1.t().dot(&batch.x);
    let g_b1 = d1.sum_axis(Axis(0));

    let mut grad = Vec::with_capacity(dims.param_count());
    grad.extend(g_w1.iter());
    grad.extend(g_b1.iter());
    grad.extend(g_w2.iter());
    grad.extend(g_b2.iter());
    (loss, grad)
}

/// Indices of the `k` largest probabilities, descending; ties go to the lower
/// index.
pub fn top_k_indices(probs: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > probs.len() {
        return Err(Error::invalid(format!(
            "k must be in 1..={}, got {k}",
            probs.len()
        )));
    }
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

/// Labels of the `k` most probable classes for a raw feature vector.
pub fn predict_topk<C: Classifier + ?Sized>(model: &C, x: &[f64], k: usize) -> Result<Vec<String>> {
    let probs = model.probabilities(x)?;
    let labels = model.label_space();
    check_len(labels.len(), probs.len())?;
    Ok(top_k_indices(&probs, k)?
        .into_iter()
        .map(|i| labels[i].clone())
        .collect())
}

#[derive(Serialize, Deserialize)]
struct DimsFile {
    input: usize,
    hidden: usize,
    output: usize,
}

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<Vec<f64>>,
    b2: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NormFile {
    min: Vec<f64>,
    max: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    dims: DimsFile,
    weights: WeightsFile,
    norm: NormFile,
    label_space: Vec<String>,
    #[serde(default)]
    config: Option<TrainConfig>,
}

fn rows(view: ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    view.rows().into_iter().map(|r| r.to_vec()).collect()
}

impl From<&MlpModel> for ModelFile {
    fn from(m: &MlpModel) -> Self {
        ModelFile {
            dims: DimsFile {
                input: m.dims.input,
                hidden: m.dims.hidden,
                output: m.dims.output,
            },
            weights: WeightsFile {
                w1: rows(m.w1()),
                b1: m.b1().to_vec(),
                w2: rows(m.w2()),
                b2: m.b2().to_vec(),
            },
            norm: NormFile {
                min: m.norm_min.clone(),
                max: m.norm_max.clone(),
            },
            label_space: m.label_space.clone(),
            config: m.config.clone(),
        }
    }
}

impl TryFrom<ModelFile> for MlpModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let dims = Dims {
            input: f.dims.input,
            hidden: f.dims.hidden,
            output: f.dims.output,
        };
        let mut model = MlpModel::zeros(dims, f.label_space)?;
        let shape_err = |what: &str| Error::invalid(format!("model file: {what} has the wrong shape"));
        let w = &f.weights;
        if w.w1.len() != dims.hidden || w.w1.iter().any(|r| r.len() != dims.input) {
            return Err(shape_err("w1"));
        }
        if w.w2.len() != dims.output || w.w2.iter().any(|r| r.len() != dims.hidden) {
            return Err(shape_err("w2"));
        }
        if w.b1.len() != dims.hidden {
            return Err(shape_err("b1"));
        }
        if w.b2.len() != dims.output {
            return Err(shape_err("b2"));
        }
        if f.norm.min.len() != dims.input || f.norm.max.len() != dims.input {
            return Err(shape_err("norm"));
        }
        if f.norm.min.iter().zip(&f.norm.max).any(|(lo, hi)| hi < lo) {
            return Err(Error::invalid("model file: norm max below min"));
        }
        model.params = w
            .w1
            .iter()
            .flatten()
            .chain(&w.b1)
            .chain(w.w2.iter().flatten())
            .chain(&w.b2)
            .copied()
            .collect();
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("model file: non-finite weight"));
        }
        model.norm_min = f.norm.min;
        model.norm_max = f.norm.max;
        model.config = f.config;
        Ok(model)
    }
}
