//! Fully connected networks with sigmoid hidden layers and a linear scalar
//! output, trained by Levenberg–Marquardt (or Adam on request).
//!
//! Inputs and the target are min–max normalized to `[0, 1]`; the
//! normalizers are fitted on the training split only and travel with the
//! model. Reported errors are mean squared errors on the normalized target.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::LanderState;
use crate::error::{Error, Result};
use crate::linalg;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Linear,
}

impl Activation {
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(a),
            Activation::Linear => a,
        }
    }

    /// Derivative expressed through the activation's output.
    fn slope(self, h: f64) -> f64 {
        match self {
            Activation::Sigmoid => h * (1.0 - h),
            Activation::Linear => 1.0,
        }
    }
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + math::exp(-a))
    } else {
        let e = math::exp(a);
        e / (1.0 + e)
    }
}

/// Per-feature min–max scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalizer {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        let n = Self { min, max };
        n.validate()?;
        Ok(n)
    }

    /// Identity map on `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        Self {
            min: vec![0.0; dim],
            max: vec![1.0; dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min.len() != self.max.len() {
            return Err(Error::Config("normalizer min/max lengths differ".into()));
        }
        for (i, (a, b)) in self.min.iter().zip(&self.max).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidNormalizer(i));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Column ranges of a row-major table. A constant column is widened by
    /// one unit on each side so the map stays invertible.
    pub fn fit(rows: &[f64], dim: usize) -> Result<Self> {
        if dim == 0 || rows.is_empty() || rows.len() % dim != 0 {
            return Err(Error::Config("cannot fit a normalizer to an empty table".into()));
        }
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for row in rows.chunks_exact(dim) {
            for j in 0..dim {
                min[j] = math::min(min[j], row[j]);
                max[j] = math::max(max[j], row[j]);
            }
        }
        for j in 0..dim {
            if min[j] == max[j] {
                min[j] -= 1.0;
                max[j] += 1.0;
            }
        }
        Self::new(min, max)
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        self.normalize_in_place(&mut out);
        out
    }

    pub fn normalize_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        for (j, v) in x.iter_mut().enumerate() {
            *v = (*v - self.min[j]) / (self.max[j] - self.min[j]);
        }
    }

    pub fn denormalize(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(j, v)| self.min[j] + v * (self.max[j] - self.min[j]))
            .collect()
    }

    fn normalize1(&self, x: f64) -> f64 {
        (x - self.min[0]) / (self.max[0] - self.min[0])
    }

    fn denormalize1(&self, y: f64) -> f64 {
        self.min[0] + y * (self.max[0] - self.min[0])
    }
}

/// Network with one scalar output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layer_sizes: Vec<usize>,
    /// Per layer, `outputs x inputs`, row-major.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub activations: Vec<Activation>,
    pub in_norm: Normalizer,
    pub out_norm: Normalizer,
}

impl MlpModel {
    /// Sigmoid hidden layers and a linear output, all parameters zero.
    pub fn zeros(layer_sizes: &[usize], in_norm: Normalizer, out_norm: Normalizer) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) || *layer_sizes.last().unwrap() != 1 {
            return Err(Error::Config("layer sizes must be nonzero and end in a single output".into()));
        }
        let nl = layer_sizes.len() - 1;
        let model = Self {
            layer_sizes: layer_sizes.to_vec(),
            weights: (0..nl).map(|l| vec![0.0; layer_sizes[l] * layer_sizes[l + 1]]).collect(),
            biases: (0..nl).map(|l| vec![0.0; layer_sizes[l + 1]]).collect(),
            activations: (0..nl)
                .map(|l| if l + 1 == nl { Activation::Linear } else { Activation::Sigmoid })
                .collect(),
            in_norm,
            out_norm,
        };
        model.validate()?;
        Ok(model)
    }

    /// Uniform Xavier initialization, biases zero.
    pub fn xavier(layer_sizes: &[usize], in_norm: Normalizer, out_norm: Normalizer, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(layer_sizes, in_norm, out_norm)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..model.weights.len() {
            let (fi, fo) = (layer_sizes[l] as f64, layer_sizes[l + 1] as f64);
            let a = math::sqrt(6.0 / (fi + fo));
            for w in &mut model.weights[l] {
                *w = rng.random_range(-a..a);
            }
        }
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let nl = self.layer_sizes.len().saturating_sub(1);
        if nl == 0 || self.weights.len() != nl || self.biases.len() != nl || self.activations.len() != nl {
            return Err(Error::Config("layer count mismatch".into()));
        }
        for l in 0..nl {
            let (i, o) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            if self.weights[l].len() != i * o || self.biases[l].len() != o {
                return Err(Error::Config(alloc::format!("layer {l} has inconsistent shapes")));
            }
        }
        if self.layer_sizes[nl] != 1 {
            return Err(Error::Config("network must have a single output".into()));
        }
        self.in_norm.validate()?;
        self.out_norm.validate()?;
        if self.in_norm.dim() != self.layer_sizes[0] || self.out_norm.dim() != 1 {
            return Err(Error::Config("normalizer dimensions do not match the network".into()));
        }
        Ok(())
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params());
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (nw, nb) = (w.len(), b.len());
            w.copy_from_slice(&p[k..k + nw]);
            k += nw;
            b.copy_from_slice(&p[k..k + nb]);
            k += nb;
        }
    }

    /// Output on a normalized input, still normalized.
    pub fn forward_normalized(&self, x: &[f64]) -> f64 {
        let mut h = x.to_vec();
        for l in 0..self.weights.len() {
            let (ni, no) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = &self.weights[l];
            h = (0..no)
                .map(|j| {
                    let a = self.biases[l][j] + (0..ni).map(|i| w[j * ni + i] * h[i]).sum::<f64>();
                    self.activations[l].apply(a)
                })
                .collect();
        }
        h[0]
    }

    /// Prediction in physical units.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_inputs() {
            return Err(Error::Config("input length does not match the network".into()));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        let xn = self.in_norm.normalize(x);
        Error::check_finite(self.out_norm.denormalize1(self.forward_normalized(&xn)), "network output")
    }

    pub fn predict(&self, x: &LanderState) -> Result<f64> {
        self.forward(&x.to_array())
    }

    /// Normalized outputs for a block of normalized rows.
    fn forward_block(&self, x: &[f64], rows: usize, acts: &mut Vec<Vec<f64>>) {
        acts.resize(self.weights.len() + 1, Vec::new());
        acts[0].clear();
        acts[0].extend_from_slice(x);
        for l in 0..self.weights.len() {
            let (ni, no) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let (prev, next) = acts.split_at_mut(l + 1);
            let a = &mut next[0];
            a.clear();
            a.resize(rows * no, 0.0);
            for r in 0..rows {
                a[r * no..(r + 1) * no].copy_from_slice(&self.biases[l]);
            }
            linalg::gemm(false, true, rows, no, ni, 1.0, &prev[l], &self.weights[l], 1.0, a);
            let act = self.activations[l];
            for v in a.iter_mut() {
                *v = act.apply(*v);
            }
        }
    }

    /// Jacobian of the normalized output with respect to the parameters for
    /// a block of rows, as a `rows x n_params` matrix. `acts` must hold the
    /// activations from [`Self::forward_block`].
    fn jacobian_block(&self, rows: usize, acts: &[Vec<f64>], jac: &mut Vec<f64>) {
        let np = self.n_params();
        let nl = self.weights.len();
        jac.clear();
        jac.resize(rows * np, 0.0);
        let mut offsets = Vec::with_capacity(nl);
        let mut k = 0;
        for l in 0..nl {
            offsets.push(k);
            k += self.weights[l].len() + self.biases[l].len();
        }
        // sensitivity of the output to each layer's pre-activation
        let mut delta: Vec<f64> = acts[nl].iter().map(|h| self.activations[nl - 1].slope(*h)).collect();
        for l in (0..nl).rev() {
            let (ni, no) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let h = &acts[l];
            for r in 0..rows {
                let row = &mut jac[r * np + offsets[l]..r * np + offsets[l] + no * ni + no];
                for j in 0..no {
                    let d = delta[r * no + j];
                    for i in 0..ni {
                        row[j * ni + i] = d * h[r * ni + i];
                    }
                    row[no * ni + j] = d;
                }
            }
            if l > 0 {
                let mut back = vec![0.0; rows * ni];
                linalg::gemm(false, false, rows, ni, no, 1.0, &delta, &self.weights[l], 0.0, &mut back);
                let act = self.activations[l - 1];
                for (b, hv) in back.iter_mut().zip(h.iter()) {
                    *b *= act.slope(*hv);
                }
                delta = back;
            }
        }
    }
}

/// Rows already normalized, with targets.
struct Table<'a> {
    x: &'a [f64],
    y: &'a [f64],
    dim: usize,
}

impl Table<'_> {
    fn rows(&self) -> usize {
        self.y.len()
    }
}

const BLOCK: usize = 256;
const JTJ_BLOCK: usize = 128;

fn mse(model: &MlpModel, t: &Table) -> f64 {
    if t.rows() == 0 {
        return f64::NAN;
    }
    let mut acts = Vec::new();
    let mut sum = 0.0;
    let mut start = 0;
    while start < t.rows() {
        let rows = BLOCK.min(t.rows() - start);
        model.forward_block(&t.x[start * t.dim..(start + rows) * t.dim], rows, &mut acts);
        let out = acts.last().unwrap();
        for r in 0..rows {
            let e = out[r] - t.y[start + r];
            sum += e * e;
        }
        start += rows;
    }
    sum / t.rows() as f64
}

/// Gradient of the normalized mean squared error over the given rows
/// (inputs and targets already normalized).
pub fn loss_gradient(model: &MlpModel, x: &[f64], y: &[f64]) -> Vec<f64> {
    let t = Table {
        x,
        y,
        dim: model.n_inputs(),
    };
    let np = model.n_params();
    let mut g = vec![0.0; np];
    let mut acts = Vec::new();
    let mut jac = Vec::new();
    let mut start = 0;
    while start < t.rows() {
        let rows = BLOCK.min(t.rows() - start);
        model.forward_block(&t.x[start * t.dim..(start + rows) * t.dim], rows, &mut acts);
        model.jacobian_block(rows, &acts, &mut jac);
        let e: Vec<f64> = (0..rows).map(|r| acts.last().unwrap()[r] - t.y[start + r]).collect();
        linalg::gemm(true, false, np, 1, rows, 2.0 / t.rows() as f64, &jac, &e, 1.0, &mut g);
        start += rows;
    }
    g
}

/// Normalized mean squared error over normalized rows.
pub fn loss(model: &MlpModel, x: &[f64], y: &[f64]) -> f64 {
    mse(
        model,
        &Table {
            x,
            y,
            dim: model.n_inputs(),
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    LevenbergMarquardt {
        mu: f64,
        mu_dec: f64,
        mu_inc: f64,
        mu_max: f64,
    },
    Adam {
        learning_rate: f64,
        batch_size: usize,
    },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::LevenbergMarquardt {
            mu: 1e-3,
            mu_dec: 0.1,
            mu_inc: 10.0,
            mu_max: 1e10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub loss_goal: f64,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    pub early_stop_patience: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Rows drawn at random before splitting, to bound the cost of the
    /// Gauss–Newton normal equations. `None` uses every row.
    pub max_samples: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 1500,
            loss_goal: 1e-8,
            split: [0.70, 0.15, 0.15],
            early_stop_patience: 25,
            seed: 0,
            optimizer: Optimizer::default(),
            max_samples: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.split.iter().sum();
        if self.split.iter().any(|f| !(*f >= 0.0)) || math::abs(sum - 1.0) > 1e-9 {
            return Err(Error::Config("split fractions must be non-negative and sum to 1".into()));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::Config("early-stop patience must be at least 1".into()));
        }
        match self.optimizer {
            Optimizer::LevenbergMarquardt { mu, mu_dec, mu_inc, mu_max } => {
                if !(mu > 0.0 && mu_dec > 0.0 && mu_dec < 1.0 && mu_inc > 1.0 && mu_max > mu) {
                    return Err(Error::Config("invalid Levenberg-Marquardt damping settings".into()));
                }
            }
            Optimizer::Adam {
                learning_rate,
                batch_size,
            } => {
                if !(learning_rate > 0.0) || batch_size == 0 {
                    return Err(Error::Config("invalid Adam settings".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    LossGoal,
    EarlyStop,
    /// Damping grew past its ceiling without reducing the loss.
    DampingLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub best_val_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_mse: f64,
    pub val_mse: f64,
    pub test_mse: f64,
    pub epochs: usize,
    pub stop_reason: StopReason,
    pub train_rows: usize,
    pub val_rows: usize,
    pub test_rows: usize,
    pub history: Vec<EpochLog>,
}

/// Train a network with the given hidden layer widths on row-major
/// `inputs` (`dim` columns) and scalar `targets`, in physical units.
pub fn train(
    inputs: &[f64],
    dim: usize,
    targets: &[f64],
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    cfg.validate()?;
    if dim == 0 || inputs.len() != targets.len() * dim {
        return Err(Error::Config("input table does not match the target count".into()));
    }
    if targets.is_empty() {
        return Err(Error::Config("empty dataset".into()));
    }
    if !inputs.iter().chain(targets).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("training data"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut idx: Vec<usize> = (0..targets.len()).collect();
    idx.shuffle(&mut rng);
    if let Some(cap) = cfg.max_samples {
        idx.truncate(cap);
    }
    let n = idx.len();
    let n_train = math::round(cfg.split[0] * n as f64) as usize;
    let n_val = (math::round(cfg.split[1] * n as f64) as usize).min(n - n_train);
    if n_train == 0 {
        return Err(Error::Config("training split is empty".into()));
    }
    if n_val == 0 {
        return Err(Error::Config("validation split is empty".into()));
    }
    let gather = |ids: &[usize]| -> (Vec<f64>, Vec<f64>) {
        let mut x = Vec::with_capacity(ids.len() * dim);
        let mut y = Vec::with_capacity(ids.len());
        for &i in ids {
            x.extend_from_slice(&inputs[i * dim..(i + 1) * dim]);
            y.push(targets[i]);
        }
        (x, y)
    };
    let (mut xtr, mut ytr) = gather(&idx[..n_train]);
    let (mut xva, mut yva) = gather(&idx[n_train..n_train + n_val]);
    let (mut xte, mut yte) = gather(&idx[n_train + n_val..]);

    let in_norm = Normalizer::fit(&xtr, dim)?;
    let out_norm = Normalizer::fit(&ytr, 1)?;
    for x in [&mut xtr, &mut xva, &mut xte] {
        for row in x.chunks_exact_mut(dim) {
            in_norm.normalize_in_place(row);
        }
    }
    for y in [&mut ytr, &mut yva, &mut yte] {
        for v in y.iter_mut() {
            *v = out_norm.normalize1(*v);
        }
    }

    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(dim);
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    let init_seed = rng.random::<u64>();
    let mut model = MlpModel::xavier(&sizes, in_norm, out_norm, init_seed)?;

    let train_t = Table { x: &xtr, y: &ytr, dim };
    let val_t = Table { x: &xva, y: &yva, dim };
    let mut trainer = match cfg.optimizer {
        Optimizer::LevenbergMarquardt { mu, .. } => Trainer::Lm { mu },
        Optimizer::Adam { .. } => Trainer::Adam {
            m: vec![0.0; model.n_params()],
            v: vec![0.0; model.n_params()],
            t: 0,
            order: (0..n_train).collect(),
        },
    };

    let mut history = Vec::new();
    let mut best = model.params();
    let mut best_val = mse(&model, &val_t);
    let mut since_best = 0;
    let mut stop = StopReason::MaxEpochs;
    let mut epochs = 0;
    let mut train_mse = mse(&model, &train_t);
    if train_mse <= cfg.loss_goal {
        stop = StopReason::LossGoal;
    } else {
        for epoch in 1..=cfg.max_epochs {
            epochs = epoch;
            match trainer.epoch(&mut model, &train_t, train_mse, cfg, &mut rng)? {
                Some(l) => train_mse = l,
                None => {
                    stop = StopReason::DampingLimit;
                    break;
                }
            }
            if !train_mse.is_finite() {
                return Err(Error::Divergence(epoch));
            }
            let val = mse(&model, &val_t);
            if !val.is_finite() {
                return Err(Error::Divergence(epoch));
            }
            if val < best_val {
                best_val = val;
                best = model.params();
                since_best = 0;
            } else {
                since_best += 1;
            }
            history.push(EpochLog {
                epoch,
                train_mse,
                val_mse: val,
                best_val_mse: best_val,
            });
            if train_mse <= cfg.loss_goal {
                stop = StopReason::LossGoal;
                break;
            }
            if since_best >= cfg.early_stop_patience {
                stop = StopReason::EarlyStop;
                break;
            }
        }
    }
    model.set_params(&best);
    let train_mse = mse(&model, &train_t);
    let val_mse = mse(&model, &val_t);
    let test_t = Table { x: &xte, y: &yte, dim };
    let test_mse = mse(&model, &test_t);
    Ok((
        model,
        TrainReport {
            train_mse,
            val_mse,
            test_mse,
            epochs,
            stop_reason: stop,
            train_rows: n_train,
            val_rows: n_val,
            test_rows: yte.len(),
            history,
        },
    ))
}

enum Trainer {
    Lm {
        mu: f64,
    },
    Adam {
        m: Vec<f64>,
        v: Vec<f64>,
        t: i32,
        order: Vec<usize>,
    },
}

impl Trainer {
    /// One pass; returns the new training loss, or `None` when no step
    /// could reduce it.
    fn epoch(
        &mut self,
        model: &mut MlpModel,
        t: &Table,
        loss: f64,
        cfg: &TrainConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<f64>> {
        match self {
            Trainer::Lm { mu } => {
                let Optimizer::LevenbergMarquardt {
                    mu_dec, mu_inc, mu_max, ..
                } = cfg.optimizer
                else {
                    unreachable!("trainer matches optimizer")
                };
                Ok(lm_epoch(model, t, loss, mu, mu_dec, mu_inc, mu_max))
            }
            Trainer::Adam { m, v, t: step, order } => {
                let Optimizer::Adam {
                    learning_rate,
                    batch_size,
                } = cfg.optimizer
                else {
                    unreachable!("trainer matches optimizer")
                };
                order.shuffle(rng);
                let mut params = model.params();
                let mut xb = Vec::with_capacity(batch_size * t.dim);
                let mut yb = Vec::with_capacity(batch_size);
                for chunk in order.chunks(batch_size) {
                    xb.clear();
                    yb.clear();
                    for &i in chunk {
                        xb.extend_from_slice(&t.x[i * t.dim..(i + 1) * t.dim]);
                        yb.push(t.y[i]);
                    }
                    let g = loss_gradient(model, &xb, &yb);
                    *step += 1;
                    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
                    let c1 = 1.0 - math::powf(b1, *step as f64);
                    let c2 = 1.0 - math::powf(b2, *step as f64);
                    for k in 0..params.len() {
                        m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                        v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                        params[k] -= learning_rate * (m[k] / c1) / (math::sqrt(v[k] / c2) + eps);
                    }
                    model.set_params(&params);
                }
                Ok(Some(mse(model, t)))
            }
        }
    }
}

/// Levenberg–Marquardt step on `J^T J + mu I`. The damping is adapted in
/// place; `None` means it exceeded `mu_max` without a decrease.
fn lm_epoch(
    model: &mut MlpModel,
    t: &Table,
    loss: f64,
    mu: &mut f64,
    mu_dec: f64,
    mu_inc: f64,
    mu_max: f64,
) -> Option<f64> {
    let np = model.n_params();
    let mut jtj = vec![0.0; np * np];
    let mut jte = vec![0.0; np];
    let mut acts = Vec::new();
    let mut jac = Vec::new();
    let mut start = 0;
    while start < t.rows() {
        let rows = BLOCK.min(t.rows() - start);
        model.forward_block(&t.x[start * t.dim..(start + rows) * t.dim], rows, &mut acts);
        model.jacobian_block(rows, &acts, &mut jac);
        let e: Vec<f64> = (0..rows).map(|r| acts.last().unwrap()[r] - t.y[start + r]).collect();
        // lower block triangle only; the factorization never reads above it
        for bi in (0..np).step_by(JTJ_BLOCK) {
            let wi = JTJ_BLOCK.min(np - bi);
            let wj = bi + wi;
            linalg::gemm_ld(
                true,
                false,
                wi,
                wj,
                rows,
                1.0,
                &jac[bi..],
                np,
                &jac,
                np,
                1.0,
                &mut jtj[bi * np..],
                np,
            );
        }
        linalg::gemm(true, false, np, 1, rows, 1.0, &jac, &e, 1.0, &mut jte);
        start += rows;
    }
    let w = model.params();
    let mut trial = model.clone();
    loop {
        let mut a = jtj.clone();
        for k in 0..np {
            a[k * np + k] += *mu;
        }
        if linalg::cholesky(&mut a, np) {
            let dw = linalg::cholesky_solve(&a, np, &jte);
            let wt: Vec<f64> = w.iter().zip(&dw).map(|(p, d)| p - d).collect();
            trial.set_params(&wt);
            let lt = mse(&trial, t);
            if lt < loss {
                *mu = math::max(*mu * mu_dec, 1e-20);
                model.set_params(&wt);
                return Some(lt);
            }
        }
        *mu *= mu_inc;
        if *mu > mu_max {
            return None;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizer_endpoints_and_round_trip() {
        let n = Normalizer::new(vec![-1.0, 2.0], vec![3.0, 5.0]).unwrap();
        assert_eq!(n.normalize(&[-1.0, 2.0]), vec![0.0, 0.0]);
        assert_eq!(n.normalize(&[3.0, 5.0]), vec![1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
            let back = n.denormalize(&n.normalize(&x));
            assert!((back[0] - x[0]).abs() < 1e-12 && (back[1] - x[1]).abs() < 1e-12);
        }
        assert!(matches!(
            Normalizer::new(vec![0.0, 1.0], vec![1.0, 1.0]),
            Err(Error::InvalidNormalizer(1))
        ));
    }

    #[test]
    fn zero_network_outputs_denormalized_zero() {
        let out = Normalizer::new(vec![2.0], vec![7.0]).unwrap();
        let m = MlpModel::zeros(&[5, 4, 1], Normalizer::unit(5), out).unwrap();
        for x in [[0.0; 5], [1.0, -3.0, 2.0, 0.5, 9.0]] {
            assert_eq!(m.forward(&x).unwrap(), 2.0);
        }
    }

    #[test]
    fn affine_single_layer() {
        let mut m = MlpModel::zeros(&[1, 1], Normalizer::unit(1), Normalizer::unit(1)).unwrap();
        m.biases[0][0] = 0.37;
        assert_eq!(m.forward(&[5.0]).unwrap(), 0.37);
        assert!(m.forward(&[f64::NAN]).is_err());
    }

    #[test]
    fn block_forward_matches_scalar_forward() {
        let m = MlpModel::xavier(&[3, 6, 4, 1], Normalizer::unit(3), Normalizer::unit(1), 9).unwrap();
        let x: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut acts = Vec::new();
        m.forward_block(&x, 10, &mut acts);
        for r in 0..10 {
            let want = m.forward_normalized(&x[r * 3..r * 3 + 3]);
            assert!((acts.last().unwrap()[r] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut m = MlpModel::xavier(&[5, 7, 6, 5, 1], Normalizer::unit(5), Normalizer::unit(1), 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for b in m.biases.iter_mut().flatten() {
            *b = rng.random_range(-0.5..0.5);
        }
        let x: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = loss_gradient(&m, &x, &y);
        let p = m.params();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..p.len() {
            let mut q = p.clone();
            q[k] = p[k] + h;
            m.set_params(&q);
            let lp = loss(&m, &x, &y);
            q[k] = p[k] - h;
            m.set_params(&q);
            let lm = loss(&m, &x, &y);
            let fd = (lp - lm) / (2.0 * h);
            let rel = (g[k] - fd).abs() / fd.abs().max(1e-3);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "worst relative error {worst:e}");
    }

    #[test]
    fn constant_target_learned_quickly() {
        let x: Vec<f64> = (0..300).map(|i| (i as f64 * 0.13).cos()).collect();
        let y = vec![4.2; 100];
        let cfg = TrainConfig {
            max_epochs: 50,
            loss_goal: 1e-14,
            seed: 1,
            ..Default::default()
        };
        let (m, rep) = train(&x, 3, &y, &[4], &cfg).unwrap();
        assert!(rep.val_mse < 1e-10, "{}", rep.val_mse);
        assert!((m.forward(&x[30..33]).unwrap() - 4.2).abs() < 1e-4);
    }

    #[test]
    fn sine_regression_smoke() {
        let x: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
        let y: Vec<f64> = x.iter().map(|v| libm::sin(2.0 * core::f64::consts::PI * v)).collect();
        let cfg = TrainConfig {
            max_epochs: 500,
            seed: 5,
            ..Default::default()
        };
        let (_, rep) = train(&x, 1, &y, &[10], &cfg).unwrap();
        assert!(rep.test_mse < 1e-4, "{}", rep.test_mse);
    }

    #[test]
    fn best_validation_is_non_increasing_and_seeded() {
        let x: Vec<f64> = (0..400).map(|i| (i as f64 * 0.71).sin()).collect();
        let y: Vec<f64> = x.chunks(2).map(|r| r[0] * r[1] + 0.3 * r[0]).collect();
        let cfg = TrainConfig {
            max_epochs: 40,
            seed: 8,
            ..Default::default()
        };
        let (_, a) = train(&x, 2, &y, &[5, 5], &cfg).unwrap();
        let (_, b) = train(&x, 2, &y, &[5, 5], &cfg).unwrap();
        assert_eq!(a, b);
        for w in a.history.windows(2) {
            assert!(w[1].best_val_mse <= w[0].best_val_mse);
        }
    }

    #[test]
    fn adam_reduces_loss() {
        let x: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let cfg = TrainConfig {
            max_epochs: 200,
            seed: 2,
            optimizer: Optimizer::Adam {
                learning_rate: 1e-2,
                batch_size: 32,
            },
            ..Default::default()
        };
        let (_, rep) = train(&x, 1, &y, &[8], &cfg).unwrap();
        let first = rep.history[0].val_mse;
        assert!(rep.val_mse < 0.1 * first, "{} vs {first}", rep.val_mse);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = TrainConfig {
            split: [0.5, 0.5, 0.5],
            ..Default::default()
        };
        assert!(train(&[0.0, 1.0], 1, &[0.0, 1.0], &[2], &cfg).is_err());
        assert!(train(&[], 1, &[], &[2], &TrainConfig::default()).is_err());
    }
}
