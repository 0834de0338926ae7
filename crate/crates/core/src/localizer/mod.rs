//! Supervised localisation: SINR sweeps in, transmitter positions out.
//!
//! Training minimises the mean squared position error on the normalised
//! output scale with Adam. Losses reported to callers ([`loss_mse`],
//! [`evaluate_rmse`]) are in metres.

mod dataset;
mod mlp;

pub use dataset::{gen_dataset, gen_dataset_with, location_dataset, sidecar, Dataset, DatasetMeta};
pub use mlp::{Activation, Gradients, InputNorm, Layer, MlpModel, OutputNorm, HIDDEN};

use crate::exec::Exec;
use crate::{Error, Result};
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 200, batch_size: 64, learning_rate: 1e-3, seed: 0 }
    }
}

impl TrainConfig {
    /// Short, low learning-rate schedule used for fine-tuning.
    pub fn fine_tune() -> Self {
        Self { epochs: 30, batch_size: 64, learning_rate: 1e-4, seed: 0 }
    }
}

/// Layers left trainable by default fine-tuning: all but the first two.
pub const DEFAULT_FROZEN: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean mini-batch loss of each epoch, normalised scale.
    pub loss_trace: Vec<f64>,
    pub steps: usize,
}

/// Adam moment estimates for one layer.
struct Moments {
    mw: Array2<f64>,
    vw: Array2<f64>,
    mb: Array1<f64>,
    vb: Array1<f64>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn check_dims(model: &MlpModel, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.meta.s != model.n_inputs() || data.targets.ncols() != model.n_outputs() {
        return Err(Error::DimensionMismatch(format!(
            "model is {}→{}, dataset is {}→{}",
            model.n_inputs(),
            model.n_outputs(),
            data.meta.s,
            data.targets.ncols()
        )));
    }
    Ok(())
}

/// Mini-batch Adam on every layer not marked frozen.
pub fn train(model: &MlpModel, data: &Dataset, cfg: &TrainConfig) -> Result<(MlpModel, TrainReport)> {
    check_dims(model, data)?;
    if cfg.batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be positive".into()));
    }
    let mut model = model.clone();
    let x = model.normalize_inputs(data.inputs.view());
    let y = model.normalize_targets(data.targets.view());
    let mut moments: Vec<Moments> = model
        .layers
        .iter()
        .map(|l| Moments {
            mw: Array2::zeros(l.weights.raw_dim()),
            vw: Array2::zeros(l.weights.raw_dim()),
            mb: Array1::zeros(l.bias.len()),
            vb: Array1::zeros(l.bias.len()),
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut t = 0usize;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb = y.select(Axis(0), chunk);
            let (loss, g) = model.gradients(xb.view(), yb.view());
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            sum += loss;
            batches += 1;
            t += 1;
            let c1 = 1.0 - BETA1.powi(t as i32);
            let c2 = 1.0 - BETA2.powi(t as i32);
            let lr = cfg.learning_rate;
            for (l, layer) in model.layers.iter_mut().enumerate() {
                if model.frozen[l] {
                    continue;
                }
                let m = &mut moments[l];
                adam(&mut layer.weights, &g.weights[l], &mut m.mw, &mut m.vw, lr, c1, c2);
                adam(&mut layer.bias, &g.bias[l], &mut m.mb, &mut m.vb, lr, c1, c2);
            }
        }
        trace.push(sum / batches as f64);
    }
    Ok((model, TrainReport { loss_trace: trace, steps: t }))
}

fn adam<D: ndarray::Dimension>(
    p: &mut ndarray::Array<f64, D>,
    g: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    lr: f64,
    c1: f64,
    c2: f64,
) {
    ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
    });
}

/// Freezes the first `frozen_layers` layers and trains the rest.
pub fn fine_tune(model: &MlpModel, data: &Dataset, frozen_layers: usize, cfg: &TrainConfig) -> Result<(MlpModel, TrainReport)> {
    if frozen_layers >= model.n_layers() {
        return Err(Error::AllLayersFrozen { frozen: frozen_layers, layers: model.n_layers() });
    }
    let mut m = model.clone();
    for (l, f) in m.frozen.iter_mut().enumerate() {
        *f = l < frozen_layers;
    }
    let (mut out, report) = train(&m, data, cfg)?;
    out.frozen = model.frozen.clone();
    Ok((out, report))
}

/// Mean squared position error in m².
pub fn loss_mse(model: &MlpModel, data: &Dataset) -> Result<f64> {
    check_dims(model, data)?;
    let p = model.predict(data.inputs.view())?;
    Ok((&p - &data.targets).iter().map(|e| e * e).sum::<f64>() / data.len() as f64)
}

/// Root mean squared position error in metres, using the full
/// `3(K+1)`-vector norm per sample.
pub fn evaluate_rmse(model: &MlpModel, data: &Dataset) -> Result<f64> {
    Ok(loss_mse(model, data)?.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooFold {
    pub group: usize,
    /// Pre-trained model on the held-out location.
    pub rmse_before: f64,
    /// Fine-tuned model on the held-out location.
    pub rmse_after: f64,
    /// The frozen layers came back bit-identical.
    pub frozen_intact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub folds: Vec<LooFold>,
    pub mean_rmse: f64,
}

impl LooReport {
    /// Fraction of folds where fine-tuning strictly lowered the RMSE.
    pub fn improved_fraction(&self) -> f64 {
        self.folds.iter().filter(|f| f.rmse_after < f.rmse_before).count() as f64 / self.folds.len() as f64
    }
}

/// Whether the first `frozen` layers of two models are bit-identical.
pub fn frozen_identical(a: &MlpModel, b: &MlpModel, frozen: usize) -> bool {
    let bits = |m: &MlpModel, l: usize| -> Vec<u64> { m.layers[l].weights.iter().chain(m.layers[l].bias.iter()).map(|v| v.to_bits()).collect() };
    frozen <= a.n_layers() && frozen <= b.n_layers() && (0..frozen).all(|l| bits(a, l) == bits(b, l))
}

/// Holds out each location group in turn, fine-tunes on the others and
/// scores the held-out group. Training rows are ordered by group label and
/// every fold uses the same seed, so the result does not depend on how the
/// groups are ordered in `data`.
pub fn leave_one_location_out(
    model: &MlpModel,
    data: &Dataset,
    frozen_layers: usize,
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<LooReport> {
    let ids = data.group_ids();
    if ids.len() < 2 {
        return Err(Error::TooFewGroups(ids.len()));
    }
    let by_group: Vec<Vec<usize>> = ids.iter().map(|&g| data.group_rows(g)).collect();
    let folds = exec.try_map(ids.len(), |f| {
        let held = data.rows(&by_group[f]);
        let rest: Vec<usize> = (0..ids.len()).filter(|&j| j != f).flat_map(|j| by_group[j].iter().copied()).collect();
        let (tuned, _) = fine_tune(model, &data.rows(&rest), frozen_layers, cfg)?;
        Ok::<_, Error>(LooFold {
            group: ids[f],
            rmse_before: evaluate_rmse(model, &held)?,
            rmse_after: evaluate_rmse(&tuned, &held)?,
            frozen_intact: frozen_identical(model, &tuned, frozen_layers),
        })
    })?;
    let mean_rmse = folds.iter().map(|f| f.rmse_after).sum::<f64>() / folds.len() as f64;
    Ok(LooReport { folds, mean_rmse })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::Angles;
    use crate::scene::Scene;
    use ndarray::array;

    fn meta(s: usize, k: usize) -> DatasetMeta {
        DatasetMeta { s, k, scene_hash: 0, seed: 0, beams: vec![Angles::BROADSIDE; s], noise_sigma_db: 0.0 }
    }

    fn toy(n: usize) -> Dataset {
        let inputs = Array2::from_shape_fn((n, 2), |(i, j)| (i * 7 + j * 3) as f64 % 13.0 - 6.0);
        let targets = Array2::from_shape_fn((n, 3), |(i, j)| 1.0 + ((i + 2 * j) % 5) as f64 * 0.3);
        Dataset::new(meta(2, 0), inputs, targets, (0..n).collect()).unwrap()
    }

    fn toy_model() -> MlpModel {
        MlpModel::new(&[2, 16, 16, 3], OutputNorm::identity(3), 5).unwrap()
    }

    #[test]
    fn empty_dataset_rejected() {
        let d = toy(4).rows(&[]);
        assert!(matches!(loss_mse(&toy_model(), &d), Err(Error::EmptyDataset)));
        assert!(matches!(evaluate_rmse(&toy_model(), &d), Err(Error::EmptyDataset)));
    }

    #[test]
    fn centroid_predictor_gives_variance_trace() {
        let d = toy(20);
        let mut m = toy_model();
        for l in &mut m.layers {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
        let mean = d.targets.mean_axis(Axis(0)).unwrap();
        m.output_norm.offset = mean.to_vec();
        let var_trace: f64 = (0..3).map(|j| d.targets.column(j).iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / 20.0).sum();
        assert!((loss_mse(&m, &d).unwrap() - var_trace).abs() < 1e-12);
        let all: Vec<usize> = (0..20).chain(0..20).collect();
        assert!((loss_mse(&m, &d.rows(&all)).unwrap() - var_trace).abs() < 1e-12);
    }

    #[test]
    fn constant_offset_rmse() {
        let d = Dataset::new(meta(1, 1), array![[0.0], [3.0]], Array2::from_elem((2, 6), 1.0), vec![0, 1]).unwrap();
        let mut m = MlpModel::new(&[1, 6], OutputNorm::identity(6), 0).unwrap();
        m.layers[0].weights.fill(0.0);
        m.layers[0].bias.fill(1.1);
        assert!((evaluate_rmse(&m, &d).unwrap() - 0.1 * 6f64.sqrt()).abs() < 1e-12);
        m.layers[0].bias.fill(1.0);
        assert_eq!(evaluate_rmse(&m, &d).unwrap(), 0.0);
    }

    #[test]
    fn overfits_single_sample() {
        let d = toy(1);
        let cfg = TrainConfig { epochs: 2000, batch_size: 1, learning_rate: 1e-3, seed: 1 };
        let (m, rep) = train(&toy_model(), &d, &cfg).unwrap();
        assert_eq!(rep.steps, 2000);
        assert!(loss_mse(&m, &d).unwrap() < 1e-6);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let cfg = TrainConfig { epochs: 3, batch_size: 4, learning_rate: 0.0, seed: 1 };
        let m = toy_model();
        assert_eq!(train(&m, &toy(10), &cfg).unwrap().0, m);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig { epochs: 5, batch_size: 3, learning_rate: 1e-2, seed: 9 };
        let a = train(&toy_model(), &toy(10), &cfg).unwrap();
        let b = train(&toy_model(), &toy(10), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_reported() {
        let cfg = TrainConfig { epochs: 50, batch_size: 2, learning_rate: 1e300, seed: 1 };
        let mut d = toy(10);
        d.targets.fill(1e200);
        assert!(matches!(train(&toy_model(), &d, &cfg), Err(Error::Diverged { .. })));
    }

    #[test]
    fn smoothed_loss_non_increasing() {
        let s = Scene::reference();
        let d = gen_dataset(&s, 400, 11, 3, Exec::Sequential).unwrap();
        let cfg = TrainConfig { epochs: 60, batch_size: 32, learning_rate: 1e-3, seed: 2 };
        let (_, rep) = train(&MlpModel::for_scene(11, &s, 1).unwrap(), &d, &cfg).unwrap();
        let smooth: Vec<f64> = rep.loss_trace.windows(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
        for w in smooth.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "{smooth:?}");
        }
    }

    #[test]
    fn fine_tune_freezes_and_validates() {
        let m = toy_model();
        let cfg = TrainConfig { epochs: 5, batch_size: 4, learning_rate: 1e-2, seed: 1 };
        let (t, _) = fine_tune(&m, &toy(10), 2, &cfg).unwrap();
        for l in 0..2 {
            assert_eq!(t.layers[l], m.layers[l]);
        }
        assert_ne!(t.layers[2], m.layers[2]);
        assert!(t.frozen.iter().all(|f| !f));
        assert!(matches!(fine_tune(&m, &toy(10), 3, &cfg), Err(Error::AllLayersFrozen { .. })));
        assert_eq!(fine_tune(&m, &toy(10), 0, &cfg).unwrap().0, train(&m, &toy(10), &cfg).unwrap().0);
    }

    #[test]
    fn loo_symmetry_and_order_independence() {
        let m = toy_model();
        let cfg = TrainConfig { epochs: 3, batch_size: 4, learning_rate: 1e-2, seed: 1 };
        let base = toy(6);
        let twin = Dataset::new(
            meta(2, 0),
            ndarray::concatenate![Axis(0), base.inputs, base.inputs],
            ndarray::concatenate![Axis(0), base.targets, base.targets],
            vec![0; 6].into_iter().chain(vec![1; 6]).collect(),
        )
        .unwrap();
        let r = leave_one_location_out(&m, &twin, 1, &cfg, Exec::Sequential).unwrap();
        assert_eq!(r.folds.len(), 2);
        assert_eq!(r.folds[0], LooFold { group: 0, ..r.folds[1].clone() });

        let d = toy(12);
        let d = Dataset { groups: (0..12).map(|i| i % 4).collect(), ..d };
        let a = leave_one_location_out(&m, &d, 1, &cfg, Exec::Parallel).unwrap();
        let shuffled: Vec<usize> = [3, 1, 0, 2].iter().flat_map(|&g| d.group_rows(g)).collect();
        let b = leave_one_location_out(&m, &d.rows(&shuffled), 1, &cfg, Exec::Sequential).unwrap();
        let key = |r: &LooReport| r.folds.iter().map(|f| f.rmse_after.to_bits()).collect::<Vec<_>>();
        let mut ka = key(&a);
        let mut kb = key(&b);
        ka.sort();
        kb.sort();
        assert_eq!(ka, kb);
        assert!(matches!(leave_one_location_out(&m, &toy(3).rows(&[0]), 1, &cfg, Exec::Sequential), Err(Error::TooFewGroups(1))));
    }
}
