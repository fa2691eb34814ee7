use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DemoPair, RelativeWaypoint, DEFAULT_MAX_HOP};
use crate::error::{Error, TrainError};
use crate::sensor::View;

pub const MODEL_VERSION: u32 = 1;

/// Smallest dataset `train` accepts.
pub const MIN_PAIRS: usize = 100;

/// How a view becomes a feature vector: the minimum depth over each of
/// `depth_bins` column groups divided by `max_range`, followed by one
/// presence flag per palette category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub depth_bins: usize,
    pub max_range: f64,
    pub palette: Vec<String>,
}

impl FeatureSpec {
    pub fn new(max_range: f64, palette: Vec<String>) -> Self {
        Self { depth_bins: 16, max_range, palette }
    }

    pub fn len(&self) -> usize {
        self.depth_bins + self.palette.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn featurize(spec: &FeatureSpec, view: &View) -> Vec<f64> {
    let w = view.rays.len();
    let mut out = vec![1.0; spec.len()];
    for (j, ray) in view.rays.iter().enumerate() {
        let b = j * spec.depth_bins / w;
        out[b] = f64::min(out[b], ray.depth / spec.max_range);
    }
    for (i, cat) in spec.palette.iter().enumerate() {
        let present = view.rays.iter().any(|r| r.category.as_deref() == Some(cat.as_str()));
        out[spec.depth_bins + i] = if present { 1.0 } else { 0.0 };
    }
    out
}

/// Fully connected layer, weights row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn init(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.random_range(-bound..bound)).collect();
        Self { inputs, outputs, weights, bias: vec![0.0; outputs] }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
        }
    }
}

/// Stack of dense layers with tanh between them; a single layer is a
/// linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regressor {
    pub layers: Vec<Layer>,
}

impl Regressor {
    fn new(inputs: usize, hidden: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let layers = if hidden == 0 {
            vec![Layer::init(inputs, outputs, rng)]
        } else {
            vec![Layer::init(inputs, hidden, rng), Layer::init(hidden, outputs, rng)]
        };
        Self { layers }
    }

    /// Activations of every layer, input first.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.forward(acts.last().unwrap(), &mut out);
            if i + 1 < self.layers.len() {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.activations(x).pop().unwrap()
    }

    fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Adds the gradient of `0.5 * |y - target|^2 * scale` to `grad`, laid out
    /// layer by layer as weights then bias.
    fn accumulate_grad(&self, x: &[f64], target: &[f64], scale: f64, grad: &mut [f64]) {
        let acts = self.activations(x);
        let mut delta: Vec<f64> = acts.last().unwrap().iter().zip(target).map(|(y, t)| (y - t) * scale).collect();
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.weights.len() + l.bias.len();
        }
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input = &acts[li];
            let base = offsets[li];
            for o in 0..layer.outputs {
                let d = delta[o];
                let row = &mut grad[base + o * layer.inputs..base + (o + 1) * layer.inputs];
                for (g, v) in row.iter_mut().zip(input) {
                    *g += d * v;
                }
                grad[base + layer.weights.len() + o] += d;
            }
            if li > 0 {
                let mut prev = vec![0.0; layer.inputs];
                for o in 0..layer.outputs {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += delta[o] * w;
                    }
                }
                // tanh'(z) = 1 - tanh(z)^2
                for (p, a) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Hidden width; 0 gives a linear model.
    pub hidden: usize,
    pub seed: u64,
    /// Share of trajectories held out for the test loss.
    pub test_fraction: f64,
    pub max_hop: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 40,
            batch_size: 64,
            hidden: 64,
            seed: 0,
            test_fraction: 0.1,
            max_hop: DEFAULT_MAX_HOP,
        }
    }
}

impl Hyper {
    fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::BadHyper(format!("learning rate {}", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::BadHyper("epochs and batch size must be positive".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(TrainError::BadHyper(format!("test fraction {}", self.test_fraction)));
        }
        if self.max_hop <= 0.0 {
            return Err(TrainError::BadHyper(format!("max hop {}", self.max_hop)));
        }
        Ok(())
    }
}

/// Losses are mean squared errors over the three normalized targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub n_train: usize,
    pub n_test: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    /// Test loss of always predicting the training-set mean.
    pub baseline_test_loss: f64,
    /// Full training-set loss after each epoch.
    pub epoch_losses: Vec<f64>,
    /// No epoch increased the training loss by more than 1e-6.
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointModel {
    pub version: u32,
    pub feature_spec: FeatureSpec,
    pub regressor: Regressor,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub target_mean: [f64; 3],
    pub target_std: [f64; 3],
    pub sampling_step: usize,
    pub max_hop: f64,
    pub hyper: Hyper,
    pub report: TrainReport,
}

impl WaypointModel {
    pub fn to_json(&self) -> Result<String, Error> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, Error> {
        let m: WaypointModel = serde_json::from_str(s)?;
        if m.version != MODEL_VERSION {
            return Err(Error::Version { kind: "waypoint model", found: m.version, expected: MODEL_VERSION });
        }
        Ok(m)
    }

    fn normalize(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.feature_mean).zip(&self.feature_std) {
            *v = (*v - m) / s;
        }
    }

    fn raw_prediction(&self, view: &View) -> RelativeWaypoint {
        let mut x = featurize(&self.feature_spec, view);
        self.normalize(&mut x);
        let y = self.regressor.forward(&x);
        let d = |i: usize| y[i] * self.target_std[i] + self.target_mean[i];
        RelativeWaypoint::new(d(0), d(1), d(2))
    }
}

/// Predicted next waypoint for `view`, clamped to the turn, forward and hop
/// limits.
pub fn predict(model: &WaypointModel, view: &View) -> RelativeWaypoint {
    model.raw_prediction(view).clamped(model.max_hop)
}

fn target_vec(p: &DemoPair) -> [f64; 3] {
    [p.target.dx, p.target.dy, p.target.theta]
}

fn mean_std(rows: &[Vec<f64>], dims: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dims];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; dims];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    // constant columns keep unit scale so they normalize to zero
    let std = var.into_iter().map(|v| if v.sqrt() < 1e-9 { 1.0 } else { v.sqrt() }).collect();
    (mean, std)
}

fn mse(reg: &Regressor, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let total: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| reg.forward(x).iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    total / (xs.len() * 3) as f64
}

/// Fits a regressor to the pairs with Adam on mean squared error of
/// normalized targets. Whole trajectories are held out for testing.
pub fn train(pairs: &[DemoPair], hyper: &Hyper) -> Result<WaypointModel, TrainError> {
    hyper.validate()?;
    if pairs.len() < MIN_PAIRS {
        return Err(TrainError::Degenerate(pairs.len(), MIN_PAIRS));
    }
    let trajectories: BTreeSet<usize> = pairs.iter().map(|p| p.trajectory).collect();
    if trajectories.len() < 2 {
        return Err(TrainError::BadHyper("a trajectory-level split needs at least two trajectories".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = trajectories.into_iter().collect();
    order.shuffle(&mut rng);
    let n_test = ((order.len() as f64 * hyper.test_fraction).round() as usize).clamp(1, order.len() - 1);
    let test_ids: BTreeSet<usize> = order[..n_test].iter().copied().collect();
    let (test, train): (Vec<&DemoPair>, Vec<&DemoPair>) = pairs.iter().partition(|p| test_ids.contains(&p.trajectory));

    let view0 = &pairs[0].view;
    let palette: BTreeSet<&str> = pairs.iter().flat_map(|p| p.view.rays.iter().filter_map(|r| r.category.as_deref())).collect();
    let spec = FeatureSpec::new(view0.max_range, palette.into_iter().map(String::from).collect());
    let raw = |set: &[&DemoPair]| -> Vec<Vec<f64>> { set.iter().map(|p| featurize(&spec, &p.view)).collect() };
    let (mut xtr, mut xte) = (raw(&train), raw(&test));
    let (fmean, fstd) = mean_std(&xtr, spec.len());
    for x in xtr.iter_mut().chain(xte.iter_mut()) {
        for ((v, m), s) in x.iter_mut().zip(&fmean).zip(&fstd) {
            *v = (*v - m) / s;
        }
    }
    let ytr_raw: Vec<Vec<f64>> = train.iter().map(|p| target_vec(p).to_vec()).collect();
    let (tmean, tstd) = mean_std(&ytr_raw, 3);
    let norm_y = |set: &[&DemoPair]| -> Vec<Vec<f64>> {
        set.iter().map(|p| target_vec(p).iter().enumerate().map(|(i, v)| (v - tmean[i]) / tstd[i]).collect()).collect()
    };
    let (ytr, yte) = (norm_y(&train), norm_y(&test));

    let mut reg = Regressor::new(spec.len(), hyper.hidden, 3, &mut rng);
    let np = reg.num_params();
    let (mut m1, mut m2) = (vec![0.0; np], vec![0.0; np]);
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut t = 0i32;
    let mut idx: Vec<usize> = (0..xtr.len()).collect();
    let mut grad = vec![0.0; np];
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    for _ in 0..hyper.epochs {
        idx.shuffle(&mut rng);
        for batch in idx.chunks(hyper.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            // d/dy of mean over batch and outputs of (y - t)^2
            let scale = 2.0 / (batch.len() * 3) as f64;
            for &i in batch {
                reg.accumulate_grad(&xtr[i], &ytr[i], scale, &mut grad);
            }
            t += 1;
            let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
            for (k, p) in reg.params_mut().enumerate() {
                m1[k] = b1 * m1[k] + (1.0 - b1) * grad[k];
                m2[k] = b2 * m2[k] + (1.0 - b2) * grad[k] * grad[k];
                *p -= hyper.learning_rate * (m1[k] / c1) / ((m2[k] / c2).sqrt() + eps);
            }
        }
        epoch_losses.push(mse(&reg, &xtr, &ytr));
    }
    let monotone = epoch_losses.windows(2).all(|w| w[1] <= w[0] + 1e-6);
    // the mean predictor outputs zero in normalized units
    let baseline = yte.iter().map(|y| y.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / (yte.len() * 3) as f64;
    let report = TrainReport {
        n_train: xtr.len(),
        n_test: xte.len(),
        train_loss: *epoch_losses.last().unwrap(),
        test_loss: mse(&reg, &xte, &yte),
        baseline_test_loss: baseline,
        epoch_losses,
        monotone,
    };
    Ok(WaypointModel {
        version: MODEL_VERSION,
        feature_spec: spec,
        regressor: reg,
        feature_mean: fmean,
        feature_std: fstd,
        target_mean: [tmean[0], tmean[1], tmean[2]],
        target_std: [tstd[0], tstd[1], tstd[2]],
        sampling_step: pairs[0].sampling_step,
        max_hop: hyper.max_hop,
        hyper: *hyper,
        report,
    })
}
