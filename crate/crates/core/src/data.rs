//! Tabular datasets partitioned into environments.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure_len, Error, Result};
use crate::matrix::Matrix;
use crate::rng;

/// Split seed used when none is given. Splits are fixed per dataset, not per run.
pub const DEFAULT_SPLIT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Classification,
    Regression,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Classification => "classification",
            Task::Regression => "regression",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        match s.trim().to_ascii_lowercase().as_str() {
            "classification" | "c" => Some(Task::Classification),
            "regression" | "r" => Some(Task::Regression),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EnvSplits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl EnvSplits {
    pub fn get(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Features, target and environment labels, with per-environment
/// train/validation/test splits.
///
/// Environments listed in `held_out` never feed selection (pool, prior,
/// predictors, baselines); they exist only for out-of-distribution evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvDataset {
    features: Matrix,
    target: Vec<f64>,
    env_ids: Vec<usize>,
    n_envs: usize,
    task: Task,
    splits: Vec<EnvSplits>,
    held_out: Vec<usize>,
    split_seed: u64,
    pub feature_names: Vec<String>,
    pub env_labels: Vec<String>,
}

impl EnvDataset {
    /// Builds a dataset and assigns 60/20/20 splits per environment with
    /// [`DEFAULT_SPLIT_SEED`]. `env_ids` must be contiguous ids starting at 0.
    pub fn new(
        features: Matrix,
        target: Vec<f64>,
        env_ids: Vec<usize>,
        task: Task,
    ) -> Result<Self> {
        Self::with_split_seed(features, target, env_ids, task, DEFAULT_SPLIT_SEED)
    }

    pub fn with_split_seed(
        features: Matrix,
        target: Vec<f64>,
        env_ids: Vec<usize>,
        task: Task,
        split_seed: u64,
    ) -> Result<Self> {
        ensure_len(features.rows(), target.len())?;
        ensure_len(features.rows(), env_ids.len())?;
        if features.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("feature values must be finite".into()));
        }
        if task == Task::Classification && target.iter().any(|&y| y < 0.0 || libm::trunc(y) != y) {
            return Err(Error::InvalidConfig(
                "classification targets must be non-negative integer class ids".into(),
            ));
        }
        let n_envs = env_ids.iter().max().map_or(0, |&m| m + 1);
        for e in 0..n_envs {
            if !env_ids.contains(&e) {
                return Err(Error::DegenerateEnvironment { env: e });
            }
        }
        let splits = stratified_splits(&env_ids, n_envs, split_seed);
        let p = features.cols();
        Ok(Self {
            features,
            target,
            env_ids,
            n_envs,
            task,
            splits,
            held_out: Vec::new(),
            split_seed,
            feature_names: (0..p).map(|j| format!("x{j}")).collect(),
            env_labels: (0..n_envs).map(|e| format!("{e}")).collect(),
        })
    }

    /// Replaces the generated splits with explicit ones. Each environment's
    /// train/validation/test lists must partition exactly its own rows.
    pub fn with_splits(mut self, splits: Vec<EnvSplits>) -> Result<Self> {
        ensure_len(self.n_envs, splits.len())?;
        let mut seen = vec![false; self.n_rows()];
        for (e, s) in splits.iter().enumerate() {
            for &i in s.train.iter().chain(&s.val).chain(&s.test) {
                if i >= seen.len() || self.env_ids[i] != e || seen[i] {
                    return Err(Error::InvalidConfig(format!(
                        "split of environment {e} lists row {i} that is foreign or repeated"
                    )));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidConfig(
                "splits must cover every row".into(),
            ));
        }
        self.splits = splits;
        Ok(self)
    }

    /// Redraws the 60/20/20 splits with another shuffle seed.
    pub fn resplit(mut self, seed: u64) -> Self {
        self.splits = stratified_splits(&self.env_ids, self.n_envs, seed);
        self.split_seed = seed;
        self
    }

    /// Marks environments as held out for out-of-distribution evaluation.
    pub fn with_held_out(mut self, mut envs: Vec<usize>) -> Result<Self> {
        envs.sort_unstable();
        envs.dedup();
        if let Some(&e) = envs.iter().find(|&&e| e >= self.n_envs) {
            return Err(Error::InvalidConfig(format!(
                "held-out environment {e} does not exist"
            )));
        }
        self.held_out = envs;
        Ok(self)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn env_ids(&self) -> &[usize] {
        &self.env_ids
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n_rows(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn n_envs(&self) -> usize {
        self.n_envs
    }

    pub fn split_seed(&self) -> u64 {
        self.split_seed
    }

    pub fn splits(&self) -> &[EnvSplits] {
        &self.splits
    }

    pub fn held_out(&self) -> &[usize] {
        &self.held_out
    }

    /// Number of classes (max id + 1) for classification, 1 for regression.
    pub fn n_classes(&self) -> usize {
        match self.task {
            Task::Regression => 1,
            Task::Classification => {
                let max = self.target.iter().fold(0.0f64, |m, &y| m.max(y));
                (max as usize + 1).max(2)
            }
        }
    }

    pub fn rows(&self, env: usize, split: Split) -> &[usize] {
        self.splits[env].get(split)
    }

    /// Environments used for selection (all that are not held out).
    pub fn training_envs(&self) -> Vec<usize> {
        (0..self.n_envs)
            .filter(|e| !self.held_out.contains(e))
            .collect()
    }

    /// Environments on which downstream metrics are reported: the held-out
    /// environments when any exist, otherwise every environment.
    pub fn evaluation_envs(&self) -> Vec<usize> {
        if self.held_out.is_empty() {
            (0..self.n_envs).collect()
        } else {
            self.held_out.clone()
        }
    }

    /// Rows used to score an evaluation environment: the whole environment
    /// if it is held out, its test split otherwise.
    pub fn evaluation_rows(&self, env: usize) -> Vec<usize> {
        if self.held_out.contains(&env) {
            let s = &self.splits[env];
            let mut rows: Vec<usize> = s
                .train
                .iter()
                .chain(&s.val)
                .chain(&s.test)
                .copied()
                .collect();
            rows.sort_unstable();
            rows
        } else {
            self.splits[env].test.clone()
        }
    }

    /// Union of one split across the training environments.
    pub fn pooled(&self, split: Split) -> Vec<usize> {
        let mut rows = Vec::new();
        for e in self.training_envs() {
            rows.extend_from_slice(self.rows(e, split));
        }
        rows
    }

    /// Checks the invariants required before running selection.
    pub fn validate(&self) -> Result<()> {
        let train_envs = self.training_envs();
        if train_envs.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 training environments, found {}",
                train_envs.len()
            )));
        }
        let mut seen = vec![false; self.n_rows()];
        for (e, s) in self.splits.iter().enumerate() {
            for split in [Split::Train, Split::Validation, Split::Test] {
                let rows = s.get(split);
                if rows.is_empty() {
                    return Err(Error::InsufficientData(format!(
                        "environment {e} has an empty {split:?} split"
                    )));
                }
                for &i in rows {
                    if seen[i] || self.env_ids[i] != e {
                        return Err(Error::InvalidConfig(format!("row {i} assigned twice")));
                    }
                    seen[i] = true;
                }
            }
        }
        Ok(())
    }

    /// Same rows, features replaced (used by standardization).
    fn with_features(&self, features: Matrix) -> Self {
        Self {
            features,
            ..self.clone()
        }
    }
}

/// Deterministic 60/20/20 split of each environment's rows.
pub fn stratified_splits(env_ids: &[usize], n_envs: usize, seed: u64) -> Vec<EnvSplits> {
    let mut by_env: Vec<Vec<usize>> = vec![Vec::new(); n_envs];
    for (i, &e) in env_ids.iter().enumerate() {
        by_env[e].push(i);
    }
    by_env
        .into_iter()
        .enumerate()
        .map(|(e, mut rows)| {
            let mut r = rng::seeded(rng::derive_seed(seed, e as u64));
            rng::shuffle(&mut r, &mut rows);
            let (n_train, n_val) = split_sizes(rows.len());
            let mut train = rows[..n_train].to_vec();
            let mut val = rows[n_train..n_train + n_val].to_vec();
            let mut test = rows[n_train + n_val..].to_vec();
            train.sort_unstable();
            val.sort_unstable();
            test.sort_unstable();
            EnvSplits { train, val, test }
        })
        .collect()
}

fn split_sizes(n: usize) -> (usize, usize) {
    let mut n_train = (6 * n + 5) / 10;
    let mut n_val = (2 * n + 5) / 10;
    if n_train + n_val > n {
        n_val = n - n_train;
    }
    if n >= 3 {
        if n_val == 0 {
            n_val = 1;
            n_train -= 1;
        }
        if n_train + n_val == n {
            n_train -= 1;
        }
    }
    (n_train, n_val)
}

/// Per-feature affine standardization fitted on training splits.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingParams {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl ScalingParams {
    pub fn apply_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.means).zip(&self.sds) {
            *v = (*v - m) / s;
        }
    }

    pub fn apply(&self, m: &Matrix) -> Matrix {
        let mut out = m.clone();
        for i in 0..out.rows() {
            self.apply_row(out.row_mut(i));
        }
        out
    }
}

/// Standardizes every row with the mean and population sd of the pooled
/// training splits of the training environments. Constant columns keep sd 1.
pub fn standardize(d: &EnvDataset) -> (EnvDataset, ScalingParams) {
    let rows = d.pooled(Split::Train);
    let p = d.n_features();
    let mut means = vec![0.0; p];
    let mut sds = vec![1.0; p];
    if !rows.is_empty() {
        let n = rows.len() as f64;
        for &i in &rows {
            for (m, v) in means.iter_mut().zip(d.features.row(i)) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; p];
        for &i in &rows {
            for ((acc, v), m) in var.iter_mut().zip(d.features.row(i)).zip(&means) {
                *acc += (v - m) * (v - m);
            }
        }
        for (s, v) in sds.iter_mut().zip(&var) {
            let sd = libm::sqrt(v / n);
            *s = if sd > 1e-12 { sd } else { 1.0 };
        }
    }
    let params = ScalingParams { means, sds };
    (d.with_features(params.apply(&d.features)), params)
}

/// How to carve a single-environment dataset into environments.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvStrategy {
    /// Environment `e` receives rows whose value in `column` lies in the
    /// `e`-th empirical quantile bucket (right-closed).
    QuantilePartition { column: usize, n_envs: usize },
    /// Clones the rows of environment 0 once per environment and applies
    /// `x_j <- scale_e * x_j + shift_e` to the listed features.
    GroupShift {
        features: Vec<usize>,
        scales: Vec<f64>,
        shifts: Vec<f64>,
    },
}

pub fn make_environments(d: &EnvDataset, strategy: &EnvStrategy) -> Result<EnvDataset> {
    match strategy {
        EnvStrategy::QuantilePartition { column, n_envs } => {
            quantile_partition(d, *column, *n_envs)
        }
        EnvStrategy::GroupShift {
            features,
            scales,
            shifts,
        } => group_shift(d, features, scales, shifts),
    }
}

fn quantile_partition(d: &EnvDataset, column: usize, n_envs: usize) -> Result<EnvDataset> {
    if column >= d.n_features() {
        return Err(Error::InvalidConfig(format!(
            "column {column} out of range"
        )));
    }
    if n_envs < 2 {
        return Err(Error::InvalidConfig(
            "quantile partition needs at least 2 environments".into(),
        ));
    }
    let values = d.features.column(column);
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // Upper edge of bucket e is the ceil((e+1) n / E)-th order statistic.
    let edges: Vec<f64> = (0..n_envs - 1)
        .map(|e| sorted[((e + 1) * n).div_ceil(n_envs).max(1) - 1])
        .collect();
    let env_ids: Vec<usize> = values
        .iter()
        .map(|v| {
            edges
                .iter()
                .position(|edge| v <= edge)
                .unwrap_or(n_envs - 1)
        })
        .collect();
    for e in 0..n_envs {
        if !env_ids.contains(&e) {
            return Err(Error::DegenerateEnvironment { env: e });
        }
    }
    let mut out = EnvDataset::with_split_seed(
        d.features.clone(),
        d.target.clone(),
        env_ids,
        d.task,
        d.split_seed,
    )?;
    out.feature_names = d.feature_names.clone();
    out.env_labels = (0..n_envs).map(|e| format!("q{e}")).collect();
    Ok(out)
}

fn group_shift(
    d: &EnvDataset,
    features: &[usize],
    scales: &[f64],
    shifts: &[f64],
) -> Result<EnvDataset> {
    ensure_len(scales.len(), shifts.len())?;
    let n_envs = scales.len();
    if n_envs < 2 {
        return Err(Error::InvalidConfig(
            "group shift needs at least 2 environments".into(),
        ));
    }
    if let Some(&j) = features.iter().find(|&&j| j >= d.n_features()) {
        return Err(Error::InvalidConfig(format!("feature {j} out of range")));
    }
    let base: Vec<usize> = (0..d.n_rows()).filter(|&i| d.env_ids[i] == 0).collect();
    if base.is_empty() {
        return Err(Error::DegenerateEnvironment { env: 0 });
    }
    let mut x = Matrix::zeros(0, d.n_features());
    let mut y = Vec::with_capacity(base.len() * n_envs);
    let mut env_ids = Vec::with_capacity(base.len() * n_envs);
    for e in 0..n_envs {
        for &i in &base {
            let mut row = d.features.row(i).to_vec();
            for &j in features {
                row[j] = scales[e] * row[j] + shifts[e];
            }
            x.push_row(&row)?;
            y.push(d.target[i]);
            env_ids.push(e);
        }
    }
    let mut out = EnvDataset::with_split_seed(x, y, env_ids, d.task, d.split_seed)?;
    out.feature_names = d.feature_names.clone();
    out.env_labels = (0..n_envs).map(|e| format!("shift{e}")).collect();
    Ok(out)
}
