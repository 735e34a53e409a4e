//! Møller's scaled conjugate gradient over the full-batch loss, with
//! validation-based early stopping.

use serde::{Deserialize, Serialize};

use super::{loss_and_gradient, loss_only, Batch, Dims, MlpModel};
use crate::error::{Error, Result};
use crate::features::FeatureVector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub max_epochs: usize,
    /// Stop after this many consecutive iterations whose validation loss is
    /// above the best seen so far.
    pub val_patience: usize,
    pub scg_sigma: f64,
    pub scg_lambda0: f64,
    pub hidden_dim: usize,
    /// Stop once the gradient norm drops below this.
    pub grad_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            max_epochs: 1000,
            val_patience: 6,
            scg_sigma: 5e-5,
            scg_lambda0: 5e-7,
            hidden_dim: 1000,
            grad_tol: 1e-7,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if self.max_epochs == 0 || self.val_patience == 0 || self.hidden_dim == 0 {
            return Err(Error::invalid(
                "max_epochs, val_patience and hidden_dim must be positive",
            ));
        }
        for (name, v) in [
            ("scg_sigma", self.scg_sigma),
            ("scg_lambda0", self.scg_lambda0),
            ("grad_tol", self.grad_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    ValPatience,
    GradientConverged,
}

/// Per-iteration losses; index 0 holds the losses of the initial weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub stop_reason: StopReason,
    /// Iteration whose weights were returned (lowest validation loss).
    pub best_iteration: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(out: &mut Vec<f64>, w: &[f64], alpha: f64, p: &[f64]) {
    out.clear();
    out.extend(w.iter().zip(p).map(|(w, p)| w + alpha * p));
}

/// Trains a fresh network on `train`, selecting the weights with the lowest
/// loss on `val`.
///
/// Normalization statistics are fitted on `train` only. The result is
/// deterministic for a given configuration and data.
pub fn train_scg(
    train: &[FeatureVector],
    val: &[FeatureVector],
    label_space: &[String],
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainHistory)> {
    cfg.check()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    let dims = Dims {
        input: train[0].values.len(),
        hidden: cfg.hidden_dim,
        output: label_space.len(),
    };
    let mut model = MlpModel::random(dims, label_space.to_vec(), cfg.seed)?;
    model.fit_normalization(train)?;
    model.config = Some(cfg.clone());
    let train_batch = model.batch(train)?;
    let val_batch = model.batch(val)?;

    let (best, history) = Scg::new(dims, cfg).run(model.params.clone(), &train_batch, &val_batch)?;
    model.params = best;
    Ok((model, history))
}

struct Scg<'a> {
    dims: Dims,
    cfg: &'a TrainConfig,
}

impl<'a> Scg<'a> {
    fn new(dims: Dims, cfg: &'a TrainConfig) -> Self {
        Scg { dims, cfg }
    }

    fn run(&self, mut w: Vec<f64>, train: &Batch, val: &Batch) -> Result<(Vec<f64>, TrainHistory)> {
        let dims = self.dims;
        let n_params = w.len();
        let (mut loss, mut grad) = loss_and_gradient(dims, &w, train);
        let mut val_loss = loss_only(dims, &w, val);

        let mut history = TrainHistory {
            train_loss: vec![loss],
            val_loss: vec![val_loss],
            stop_reason: StopReason::MaxEpochs,
            best_iteration: 0,
        };
        if !loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Diverged {
                iteration: 0,
                history: Box::new(history),
            });
        }
        let mut best = w.clone();
        let mut best_val = val_loss;
        let mut fails = 0;

        // r is the negative gradient, p the search direction.
        let mut r: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut p = r.clone();
        let mut lambda = self.cfg.scg_lambda0;
        let mut lambda_bar = 0.0;
        let mut success = true;
        let mut delta = 0.0;
        let mut trial = Vec::with_capacity(n_params);
        let mut since_restart = 0usize;

        for iteration in 1..=self.cfg.max_epochs {
            if dot(&grad, &grad).sqrt() < self.cfg.grad_tol {
                history.stop_reason = StopReason::GradientConverged;
                break;
            }
            let mut p_sq = dot(&p, &p);
            let mut mu = dot(&p, &r);
            if mu <= 0.0 {
                // Not a descent direction: restart along the gradient.
                p.clone_from(&r);
                p_sq = dot(&p, &p);
                mu = p_sq;
                success = true;
                since_restart = 0;
            }

            // Second-order information along p by a finite difference of
            // gradients.
            if success {
                let sigma = self.cfg.scg_sigma / p_sq.sqrt();
                axpy(&mut trial, &w, sigma, &p);
                let (_, grad_plus) = loss_and_gradient(dims, &trial, train);
                let s: Vec<f64> = grad_plus
                    .iter()
                    .zip(&grad)
                    .map(|(a, b)| (a - b) / sigma)
                    .collect();
                delta = dot(&p, &s);
            }

            // Scale, and force the Hessian approximation positive definite.
            delta += (lambda - lambda_bar) * p_sq;
            if delta <= 0.0 {
                lambda_bar = 2.0 * (lambda - delta / p_sq);
                delta = -delta + lambda * p_sq;
                lambda = lambda_bar;
            }

            let alpha = mu / delta;
            axpy(&mut trial, &w, alpha, &p);
            let (trial_loss, trial_grad) = loss_and_gradient(dims, &trial, train);
            // Comparison parameter: actual vs. predicted reduction.
            let big_delta = if trial_loss.is_finite() {
                2.0 * delta * (loss - trial_loss) / (mu * mu)
            } else {
                -1.0
            };

            if big_delta >= 0.0 {
                std::mem::swap(&mut w, &mut trial);
                loss = trial_loss;
                grad = trial_grad;
                let r_new: Vec<f64> = grad.iter().map(|g| -g).collect();
                lambda_bar = 0.0;
                success = true;
                since_restart += 1;
                if since_restart >= n_params {
                    p.clone_from(&r_new);
                    since_restart = 0;
                } else {
                    let beta = (dot(&r_new, &r_new) - dot(&r_new, &r)) / mu;
                    for (pi, ri) in p.iter_mut().zip(&r_new) {
                        *pi = ri + beta * *pi;
                    }
                }
                r = r_new;
                if big_delta >= 0.75 {
                    lambda *= 0.25;
                }
            } else {
                lambda_bar = lambda;
                success = false;
            }
            if big_delta < 0.25 {
                lambda += delta * (1.0 - big_delta) / p_sq;
            }
            lambda = lambda.min(1e100);

            if success {
                val_loss = loss_only(dims, &w, val);
            }
            history.train_loss.push(loss);
            history.val_loss.push(val_loss);
            if !loss.is_finite() || !val_loss.is_finite() || !lambda.is_finite() {
                return Err(Error::Diverged {
                    iteration,
                    history: Box::new(history),
                });
            }

            if val_loss < best_val {
                best_val = val_loss;
                best.clone_from(&w);
                history.best_iteration = iteration;
                fails = 0;
            } else if val_loss > best_val {
                fails += 1;
                if fails >= self.cfg.val_patience {
                    history.stop_reason = StopReason::ValPatience;
                    break;
                }
            }
        }
        log::debug!(
            "scg stopped after {} iterations ({:?}), best validation loss {best_val:.6} at {}",
            history.train_loss.len() - 1,
            history.stop_reason,
            history.best_iteration
        );
        Ok((best, history))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn blobs(seed: u64, n: usize, shuffle_labels: bool) -> Vec<FeatureVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows: Vec<FeatureVector> = (0..n)
            .map(|i| {
                let class = i % 2;
                let center = if class == 0 { -3.0 } else { 3.0 };
                let values = (0..4)
                    .map(|_| center + rng.sample::<f64, _>(StandardNormal))
                    .collect();
                FeatureVector {
                    values,
                    label: class.to_string(),
                    user_id: "u".into(),
                }
            })
            .collect();
        if shuffle_labels {
            for row in &mut rows {
                row.label = rng.random_range(0..2usize).to_string();
            }
        }
        rows
    }

    fn accuracy(model: &MlpModel, rows: &[FeatureVector]) -> f64 {
        let hits = rows
            .iter()
            .filter(|r| super::super::predict_topk(model, &r.values, 1).unwrap()[0] == r.label)
            .count();
        hits as f64 / rows.len() as f64
    }

    fn labels() -> Vec<String> {
        vec!["0".into(), "1".into()]
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            seed: 11,
            max_epochs: 200,
            hidden_dim: 6,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn separable_blobs_are_learned() {
        let train = blobs(1, 200, false);
        let val = blobs(2, 60, false);
        let (model, hist) = train_scg(&train, &val, &labels(), &small_cfg()).unwrap();
        assert_eq!(accuracy(&model, &train), 1.0);
        assert!(hist.train_loss.len() <= 201);
        assert_eq!(hist.train_loss.len(), hist.val_loss.len());
    }

    #[test]
    fn shuffled_labels_stay_near_chance() {
        let train = blobs(3, 200, true);
        let val = blobs(4, 400, true);
        let (model, _) = train_scg(&train, &val, &labels(), &small_cfg()).unwrap();
        let acc = accuracy(&model, &val);
        assert!((0.35..=0.65).contains(&acc), "validation accuracy {acc}");
    }

    #[test]
    fn selected_model_never_worse_than_initial_on_validation() {
        for seed in 0..5 {
            let train = blobs(10 + seed, 80, seed % 2 == 0);
            let val = blobs(20 + seed, 40, seed % 2 == 0);
            let cfg = TrainConfig { seed, ..small_cfg() };
            let (model, hist) = train_scg(&train, &val, &labels(), &cfg).unwrap();
            let best = hist.val_loss[hist.best_iteration];
            assert!(best <= hist.val_loss[0]);
            let batch = model.batch(&val).unwrap();
            assert!((model.loss(&batch).unwrap() - best).abs() < 1e-12);
        }
    }

    #[test]
    fn training_is_bit_reproducible() {
        let train = blobs(5, 100, false);
        let val = blobs(6, 40, false);
        let a = train_scg(&train, &val, &labels(), &small_cfg()).unwrap();
        let b = train_scg(&train, &val, &labels(), &small_cfg()).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn rejects_bad_config_and_empty_sets() {
        let train = blobs(5, 10, false);
        let cfg = TrainConfig { hidden_dim: 0, ..small_cfg() };
        assert!(train_scg(&train, &train, &labels(), &cfg).is_err());
        assert!(train_scg(&train, &[], &labels(), &small_cfg()).is_err());
    }
}
