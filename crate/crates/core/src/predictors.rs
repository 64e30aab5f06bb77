//! Frozen per-environment predictors behind the stability energy, and the
//! linear downstream models used for evaluation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::data::{EnvDataset, Split, Task};
use crate::error::{ensure_len, Error, Result};
use crate::nn::{Adam, ByteReader, DenseNet, Gradients};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            epochs: 300,
            lr: 1e-3,
            batch: 32,
            seed: 0,
        }
    }
}

/// A one-hidden-layer network trained on a single environment. There is no
/// mutable access to the parameters once it has been fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvPredictor {
    net: DenseNet,
    task: Task,
    env_id: usize,
    train_loss: f64,
}

/// Mean loss for one output row, and `dL/d(output)` for that row.
fn loss_and_upstream(task: Task, out: &[f64], y: f64) -> (f64, Vec<f64>) {
    match task {
        Task::Regression => {
            let r = out[0] - y;
            (r * r, vec![2.0 * r])
        }
        Task::Classification => {
            let class = y as usize;
            let max = out.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let exps: Vec<f64> = out.iter().map(|&v| libm::exp(v - max)).collect();
            let z: f64 = exps.iter().sum();
            let loss = libm::log(z) + max - out[class];
            let grad = exps
                .iter()
                .enumerate()
                .map(|(c, e)| e / z - f64::from(u8::from(c == class)))
                .collect();
            (loss, grad)
        }
    }
}

fn output_dim(d: &EnvDataset) -> usize {
    match d.task() {
        Task::Regression => 1,
        Task::Classification => d.n_classes(),
    }
}

/// Trains on the unmasked training split of environment `e` with minibatch
/// Adam, then freezes the result.
pub fn fit_env_predictor(d: &EnvDataset, e: usize, cfg: &PredictorConfig) -> Result<EnvPredictor> {
    if e >= d.n_envs() {
        return Err(Error::InvalidConfig(format!(
            "environment {e} does not exist"
        )));
    }
    let rows = d.rows(e, Split::Train);
    if rows.is_empty() {
        return Err(Error::InsufficientData(format!(
            "environment {e} has no training rows"
        )));
    }
    let p = d.n_features();
    let seed = rng::derive_seed(cfg.seed, e as u64);
    let mut net = DenseNet::new(&[p, cfg.hidden, output_dim(d)], seed)?;
    let mut adam = Adam::for_net(&net, cfg.lr);
    let mut r = rng::seeded(rng::derive_seed(seed, 1));
    let mut order = rows.to_vec();
    let mut grads = Gradients::zeros_like(&net);
    let x = d.features();
    let y = d.target();
    let batch = cfg.batch.max(1);
    let mut epoch_loss = f64::NAN;
    for epoch in 0..cfg.epochs {
        rng::shuffle(&mut r, &mut order);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            grads.fill_zero();
            for &i in chunk {
                let trace = net.forward_trace(x.row(i))?;
                let (loss, up) = loss_and_upstream(d.task(), trace.output(), y[i]);
                total += loss;
                net.backward_accumulate(&trace, &up, &mut grads)?;
            }
            grads.scale(1.0 / chunk.len() as f64);
            adam.step_net(&mut net, &grads)?;
        }
        epoch_loss = total / order.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
    }
    let pred = EnvPredictor {
        net,
        task: d.task(),
        env_id: e,
        train_loss: f64::NAN,
    };
    // Report the loss of the final parameters rather than the running
    // average of the last epoch.
    let train_loss = if cfg.epochs == 0 {
        epoch_loss
    } else {
        pred.loss_on_rows(d, rows, &vec![1.0; p])?
    };
    Ok(EnvPredictor { train_loss, ..pred })
}

impl EnvPredictor {
    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn env_id(&self) -> usize {
        self.env_id
    }

    pub fn is_frozen(&self) -> bool {
        true
    }

    /// Training loss of the final parameters on the unmasked training split.
    pub fn train_loss(&self) -> f64 {
        self.train_loss
    }

    pub fn n_features(&self) -> usize {
        self.net.input_dim()
    }

    fn loss_on_rows(&self, d: &EnvDataset, rows: &[usize], s: &[f64]) -> Result<f64> {
        ensure_len(self.n_features(), s.len())?;
        if rows.is_empty() {
            return Err(Error::InsufficientData("empty split".into()));
        }
        let mut buf = vec![0.0; s.len()];
        let mut total = 0.0;
        for &i in rows {
            mask_into(d.features().row(i), s, &mut buf);
            let out = self.net.forward(&buf)?;
            total += loss_and_upstream(self.task, &out, d.target()[i]).0;
        }
        Ok(total / rows.len() as f64)
    }

    fn loss_grad_on_rows(
        &self,
        d: &EnvDataset,
        rows: &[usize],
        s: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        ensure_len(self.n_features(), s.len())?;
        if rows.is_empty() {
            return Err(Error::InsufficientData("empty split".into()));
        }
        let mut buf = vec![0.0; s.len()];
        let mut total = 0.0;
        let mut grad = vec![0.0; s.len()];
        for &i in rows {
            let x = d.features().row(i);
            mask_into(x, s, &mut buf);
            let trace = self.net.forward_trace(&buf)?;
            let (loss, up) = loss_and_upstream(self.task, trace.output(), d.target()[i]);
            total += loss;
            let ig = self.net.input_gradient(&trace, &up)?;
            for ((g, a), b) in grad.iter_mut().zip(&ig).zip(x) {
                *g += a * b;
            }
        }
        let n = rows.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((total / n, grad))
    }

    /// Header: `u8` task code (0 classification, 1 regression), `u32`
    /// environment id, `f64` training loss; then the network bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.push(task_code(self.task));
        out.extend_from_slice(&(self.env_id as u32).to_le_bytes());
        out.extend_from_slice(&self.train_loss.to_le_bytes());
        out.extend_from_slice(&self.net.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = ByteReader::new(bytes);
        let task = task_from_code(cur.u8()?)?;
        let env_id = cur.u32()? as usize;
        let train_loss = cur.f64()?;
        let (net, _) = DenseNet::from_bytes(cur.rest())?;
        Ok(Self {
            net,
            task,
            env_id,
            train_loss,
        })
    }
}

fn task_code(task: Task) -> u8 {
    match task {
        Task::Classification => 0,
        Task::Regression => 1,
    }
}

fn task_from_code(code: u8) -> Result<Task> {
    match code {
        0 => Ok(Task::Classification),
        1 => Ok(Task::Regression),
        _ => Err(Error::Decode(format!("unknown task code {code}"))),
    }
}

fn mask_into(x: &[f64], s: &[f64], out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(x).zip(s) {
        *o = a * b;
    }
}

/// Mean loss (MSE or natural-log cross-entropy) of `pred` on the given split
/// of environment `e`, with inputs masked as `x ⊙ s`.
pub fn env_loss(
    pred: &EnvPredictor,
    d: &EnvDataset,
    e: usize,
    split: Split,
    s: &[f64],
) -> Result<f64> {
    pred.loss_on_rows(d, d.rows(e, split), s)
}

/// Gradient of [`env_loss`] with respect to the mask.
pub fn env_loss_grad_mask(
    pred: &EnvPredictor,
    d: &EnvDataset,
    e: usize,
    split: Split,
    s: &[f64],
) -> Result<Vec<f64>> {
    Ok(pred.loss_grad_on_rows(d, d.rows(e, split), s)?.1)
}

/// Loss and mask gradient in one pass.
pub fn env_loss_and_grad(
    pred: &EnvPredictor,
    d: &EnvDataset,
    e: usize,
    split: Split,
    s: &[f64],
) -> Result<(f64, Vec<f64>)> {
    pred.loss_grad_on_rows(d, d.rows(e, split), s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearKind {
    Ridge,
    Logistic,
}

/// Linear model over a feature subset. Ridge has a single coefficient row;
/// logistic regression is multinomial with one row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub kind: LinearKind,
    pub reg_strength: f64,
    pub features: Vec<usize>,
    pub coef: Vec<Vec<f64>>,
    pub intercept: Vec<f64>,
}

pub const LOGISTIC_ITERS: usize = 500;
pub const LOGISTIC_LR: f64 = 0.1;

/// Fits on `rows` restricted to `subset`.
///
/// Ridge minimizes `(1/n) Σ (y - a - x·w)^2 + reg ‖w‖²` in closed form.
/// Logistic runs full-batch gradient descent on
/// `(1/n) Σ CE + (reg/2) ‖W‖²`. Intercepts are never penalized.
pub fn fit_linear(
    d: &EnvDataset,
    rows: &[usize],
    kind: LinearKind,
    reg_strength: f64,
    subset: &[usize],
) -> Result<LinearModel> {
    if rows.is_empty() {
        return Err(Error::InsufficientData("no rows to fit".into()));
    }
    if subset.is_empty() {
        return Err(Error::InvalidConfig("empty feature subset".into()));
    }
    if let Some(&j) = subset.iter().find(|&&j| j >= d.n_features()) {
        return Err(Error::ShapeError {
            expected: d.n_features(),
            found: j + 1,
        });
    }
    let x: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| subset.iter().map(|&j| d.features().get(i, j)).collect())
        .collect();
    let y: Vec<f64> = rows.iter().map(|&i| d.target()[i]).collect();
    match kind {
        LinearKind::Ridge => fit_ridge(&x, &y, reg_strength, subset),
        LinearKind::Logistic => {
            let n_classes = d.n_classes();
            fit_logistic(&x, &y, n_classes, reg_strength, subset)
        }
    }
}

fn fit_ridge(x: &[Vec<f64>], y: &[f64], reg: f64, subset: &[usize]) -> Result<LinearModel> {
    let n = x.len() as f64;
    let q = subset.len();
    let mut mean_x = vec![0.0; q];
    // Largest uncentered second moment: the yardstick for rank deficiency.
    let mut raw_scale = 0.0f64;
    for row in x {
        for (m, v) in mean_x.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean_x.iter_mut().for_each(|m| *m /= n);
    for j in 0..q {
        raw_scale = raw_scale.max(x.iter().map(|r| r[j] * r[j]).sum::<f64>() / n);
    }
    let mean_y = y.iter().sum::<f64>() / n;
    let mut a = DMatrix::<f64>::zeros(q, q);
    let mut b = DVector::<f64>::zeros(q);
    for (row, &yi) in x.iter().zip(y) {
        for j in 0..q {
            let cj = row[j] - mean_x[j];
            b[j] += cj * (yi - mean_y) / n;
            for k in 0..=j {
                a[(j, k)] += cj * (row[k] - mean_x[k]) / n;
            }
        }
    }
    for j in 0..q {
        for k in 0..j {
            a[(k, j)] = a[(j, k)];
        }
        a[(j, j)] += reg;
    }
    let chol = a.cholesky().ok_or(Error::SingularSystem)?;
    let l = chol.l_dirty();
    let floor = 1e-12 * raw_scale.max(reg).max(f64::MIN_POSITIVE);
    if (0..q).any(|j| l[(j, j)] * l[(j, j)] <= floor) {
        return Err(Error::SingularSystem);
    }
    let w = chol.solve(&b);
    let intercept = mean_y - w.iter().zip(&mean_x).map(|(a, b)| a * b).sum::<f64>();
    Ok(LinearModel {
        kind: LinearKind::Ridge,
        reg_strength: reg,
        features: subset.to_vec(),
        coef: vec![w.iter().copied().collect()],
        intercept: vec![intercept],
    })
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

fn fit_logistic(
    x: &[Vec<f64>],
    y: &[f64],
    n_classes: usize,
    reg: f64,
    subset: &[usize],
) -> Result<LinearModel> {
    let q = subset.len();
    let n = x.len() as f64;
    let mut coef = vec![vec![0.0; q]; n_classes];
    let mut intercept = vec![0.0; n_classes];
    let mut probs = vec![0.0; n_classes];
    for _ in 0..LOGISTIC_ITERS {
        let mut gw = vec![vec![0.0; q]; n_classes];
        let mut gb = vec![0.0; n_classes];
        for (row, &yi) in x.iter().zip(y) {
            for c in 0..n_classes {
                probs[c] = intercept[c] + coef[c].iter().zip(row).map(|(w, v)| w * v).sum::<f64>();
            }
            softmax_in_place(&mut probs);
            probs[yi as usize] -= 1.0;
            for c in 0..n_classes {
                gb[c] += probs[c] / n;
                for (g, v) in gw[c].iter_mut().zip(row) {
                    *g += probs[c] * v / n;
                }
            }
        }
        for c in 0..n_classes {
            intercept[c] -= LOGISTIC_LR * gb[c];
            for (w, g) in coef[c].iter_mut().zip(&gw[c]) {
                *w -= LOGISTIC_LR * (g + reg * *w);
            }
        }
    }
    if coef
        .iter()
        .flatten()
        .chain(&intercept)
        .any(|v| !v.is_finite())
    {
        return Err(Error::TrainingDiverged {
            epoch: LOGISTIC_ITERS,
        });
    }
    Ok(LinearModel {
        kind: LinearKind::Logistic,
        reg_strength: reg,
        features: subset.to_vec(),
        coef,
        intercept,
    })
}

impl LinearModel {
    fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.coef
            .iter()
            .zip(&self.intercept)
            .map(|(w, b)| {
                b + w
                    .iter()
                    .zip(&self.features)
                    .map(|(w, &j)| w * x[j])
                    .sum::<f64>()
            })
            .collect()
    }

    /// Prediction for a full feature row: a real value for ridge, a class id
    /// (as `f64`) for logistic regression.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let s = self.scores(x);
        match self.kind {
            LinearKind::Ridge => s[0],
            LinearKind::Logistic => {
                let mut best = 0;
                for (c, v) in s.iter().enumerate() {
                    if *v > s[best] {
                        best = c;
                    }
                }
                best as f64
            }
        }
    }

    pub fn predict(&self, d: &EnvDataset, rows: &[usize]) -> Vec<f64> {
        rows.iter()
            .map(|&i| self.predict_row(d.features().row(i)))
            .collect()
    }

    /// Class probabilities (logistic only).
    pub fn predict_proba_row(&self, x: &[f64]) -> Vec<f64> {
        let mut s = self.scores(x);
        softmax_in_place(&mut s);
        s
    }

    /// Header: `u8` kind (0 ridge, 1 logistic), `f64` reg strength, `u32`
    /// subset size, `u32` output rows, the subset as `u32`s, then per output
    /// row the coefficients followed by the intercept.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.push(match self.kind {
            LinearKind::Ridge => 0,
            LinearKind::Logistic => 1,
        });
        out.extend_from_slice(&self.reg_strength.to_le_bytes());
        out.extend_from_slice(&(self.features.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.coef.len() as u32).to_le_bytes());
        for &j in &self.features {
            out.extend_from_slice(&(j as u32).to_le_bytes());
        }
        for (w, b) in self.coef.iter().zip(&self.intercept) {
            for v in w.iter().chain(core::iter::once(b)) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = ByteReader::new(bytes);
        let kind = match cur.u8()? {
            0 => LinearKind::Ridge,
            1 => LinearKind::Logistic,
            c => return Err(Error::Decode(format!("unknown linear model kind {c}"))),
        };
        let reg_strength = cur.f64()?;
        let q = cur.u32()? as usize;
        let rows = cur.u32()? as usize;
        let features = (0..q)
            .map(|_| cur.u32().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut coef = Vec::with_capacity(rows);
        let mut intercept = Vec::with_capacity(rows);
        for _ in 0..rows {
            coef.push((0..q).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?);
            intercept.push(cur.f64()?);
        }
        Ok(Self {
            kind,
            reg_strength,
            features,
            coef,
            intercept,
        })
    }
}
