//! Hyperparameter grid search with out-of-fold evaluation.
//!
//! Every candidate (depth, learning rate, leaf weight) is fitted once per
//! inner fold at the largest tree count, and the smaller tree counts are
//! read off the same ensemble with staged prediction. Objectives: log loss
//! for classifiers, squared error for regressors, and the transformed
//! outcome loss for treatment effect scorers (squared distance between the
//! scorer and the propensity-weighted transformed outcome).
//!
//! Ties on the objective are broken toward the smaller model: fewer trees,
//! then shallower depth, then lower learning rate.

use crate::error::{Error, Result};
use crate::learners::gbt::{FitData, GbtModel, GbtParams, Task};
use crate::matrix::Matrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Candidate hyperparameter values; the search is the full product.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperGrid {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub min_leaf_weight: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> HyperGrid {
        HyperGrid {
            n_trees: vec![50, 100, 200],
            max_depth: vec![2, 3, 4],
            learning_rate: vec![0.05, 0.1],
            min_leaf_weight: vec![10.0],
        }
    }
}

impl HyperGrid {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees.is_empty()
            || self.max_depth.is_empty()
            || self.learning_rate.is_empty()
            || self.min_leaf_weight.is_empty()
        {
            return Err(Error::Config("hyperparameter grid has an empty axis".into()));
        }
        Ok(())
    }

    /// Sorted distinct tree counts, used as staged-prediction checkpoints.
    fn checkpoints(&self) -> Vec<usize> {
        let mut cp = self.n_trees.clone();
        cp.sort_unstable();
        cp.dedup();
        cp
    }

    /// Cartesian product over the non-tree-count axes.
    fn combos(&self) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        for &d in &self.max_depth {
            for &lr in &self.learning_rate {
                for &mlw in &self.min_leaf_weight {
                    out.push((d, lr, mlw));
                }
            }
        }
        out
    }
}

/// Winning parameters plus the full cross-validation table.
#[derive(Debug, Clone)]
pub struct TunedFit {
    pub params: GbtParams,
    pub cv_loss: f64,
    pub cv: Vec<(GbtParams, f64)>,
}

fn pick_best(table: Vec<(GbtParams, f64)>) -> Result<TunedFit> {
    if table.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let mut sorted = table.clone();
    sorted.sort_by(|a, b| {
        a.1.total_cmp(&b.1)
            .then(a.0.n_trees.cmp(&b.0.n_trees))
            .then(a.0.max_depth.cmp(&b.0.max_depth))
            .then(a.0.learning_rate.total_cmp(&b.0.learning_rate))
            .then(a.0.min_leaf_weight.total_cmp(&b.0.min_leaf_weight))
    });
    let (params, cv_loss) = sorted[0].clone();
    if !cv_loss.is_finite() {
        return Err(Error::Model("grid search produced no finite objective".into()));
    }
    Ok(TunedFit {
        params,
        cv_loss,
        cv: table,
    })
}

/// Round-robin fold assignment after a seeded shuffle, optionally keeping
/// binary label proportions balanced across folds.
fn make_folds(n: usize, k: usize, seed: u64, stratify: Option<&[f64]>) -> Result<Vec<u32>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {}", k)));
    }
    if n < k {
        return Err(Error::Data(format!("cannot split {} rows into {} folds", n, k)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0u32; n];
    let mut cursor = 0usize;
    let groups: Vec<Vec<usize>> = match stratify {
        Some(labels) => {
            let mut zeros = Vec::new();
            let mut ones = Vec::new();
            for (i, &l) in labels.iter().enumerate() {
                if l == 0.0 {
                    zeros.push(i)
                } else {
                    ones.push(i)
                }
            }
            vec![zeros, ones]
        }
        None => vec![(0..n).collect()],
    };
    for mut group in groups {
        group.shuffle(&mut rng);
        for row in group {
            folds[row] = (cursor % k) as u32;
            cursor += 1;
        }
    }
    Ok(folds)
}

fn split_rows(folds: &[u32], fold: u32) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (i, &f) in folds.iter().enumerate() {
        if f == fold {
            val.push(i)
        } else {
            train.push(i)
        }
    }
    (train, val)
}

fn gather(vals: &[f64], rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&r| vals[r]).collect()
}

fn log_loss(y: &[f64], p: &[f64]) -> (f64, f64) {
    let mut acc = 0.0;
    for i in 0..y.len() {
        let pi = p[i].clamp(1e-12, 1.0 - 1e-12);
        acc -= y[i] * pi.ln() + (1.0 - y[i]) * (1.0 - pi).ln();
    }
    (acc, y.len() as f64)
}

fn squared_error(y: &[f64], pred: &[f64]) -> (f64, f64) {
    let mut acc = 0.0;
    for i in 0..y.len() {
        let d = y[i] - pred[i];
        acc += d * d;
    }
    (acc, y.len() as f64)
}

/// Tunes a plain supervised fit. Classification folds are stratified by
/// label; the objective is log loss for classifiers and squared error for
/// regressors, averaged over all out-of-fold predictions.
pub fn tune_supervised(
    x: &Matrix,
    y: &[f64],
    weights: Option<&[f64]>,
    task: Task,
    grid: &HyperGrid,
    k_folds: usize,
    seed: u64,
) -> Result<TunedFit> {
    grid.validate()?;
    let folds = make_folds(
        x.n_rows(),
        k_folds,
        seed,
        if task == Task::Classification { Some(y) } else { None },
    )?;
    let checkpoints = grid.checkpoints();
    let combos = grid.combos();
    let max_trees = *checkpoints.last().unwrap();
    let mut sums = vec![(0.0f64, 0.0f64); combos.len() * checkpoints.len()];

    for fold in 0..k_folds as u32 {
        let (train, val) = split_rows(&folds, fold);
        let data = FitData::new(x.select_rows(&train));
        let y_train = gather(y, &train);
        let w_train = weights.map(|w| gather(w, &train));
        let x_val = x.select_rows(&val);
        let y_val = gather(y, &val);
        for (ci, &(depth, lr, mlw)) in combos.iter().enumerate() {
            let params = GbtParams {
                n_trees: max_trees,
                max_depth: depth,
                learning_rate: lr,
                min_leaf_weight: mlw,
            };
            let model = GbtModel::fit(&data, &y_train, w_train.as_deref(), task, &params)?;
            let staged = model.predict_staged(&x_val, &checkpoints)?;
            for (pi, preds) in staged.iter().enumerate() {
                let (acc, cnt) = match task {
                    Task::Classification => log_loss(&y_val, preds),
                    Task::Regression => squared_error(&y_val, preds),
                };
                let slot = &mut sums[ci * checkpoints.len() + pi];
                slot.0 += acc;
                slot.1 += cnt;
            }
        }
    }
    collect_table(&combos, &checkpoints, &sums)
}

/// Tunes a single-model effect scorer: one regression on features plus a
/// trailing treatment column, scored by the transformed outcome loss of
/// its implied effect prediction.
pub fn tune_slearner_tol(
    x: &Matrix,
    t: &[f64],
    y: &[f64],
    y_star: &[f64],
    grid: &HyperGrid,
    k_folds: usize,
    seed: u64,
) -> Result<TunedFit> {
    grid.validate()?;
    let folds = make_folds(x.n_rows(), k_folds, seed, Some(t))?;
    let checkpoints = grid.checkpoints();
    let combos = grid.combos();
    let max_trees = *checkpoints.last().unwrap();
    let xt = x.with_column(t);
    let mut sums = vec![(0.0f64, 0.0f64); combos.len() * checkpoints.len()];

    for fold in 0..k_folds as u32 {
        let (train, val) = split_rows(&folds, fold);
        let data = FitData::new(xt.select_rows(&train));
        let y_train = gather(y, &train);
        let x_val = x.select_rows(&val);
        let val_treated = x_val.with_constant_column(1.0);
        let val_control = x_val.with_constant_column(0.0);
        let star_val = gather(y_star, &val);
        for (ci, &(depth, lr, mlw)) in combos.iter().enumerate() {
            let params = GbtParams {
                n_trees: max_trees,
                max_depth: depth,
                learning_rate: lr,
                min_leaf_weight: mlw,
            };
            let model = GbtModel::fit(&data, &y_train, None, Task::Regression, &params)?;
            let s1 = model.predict_staged(&val_treated, &checkpoints)?;
            let s0 = model.predict_staged(&val_control, &checkpoints)?;
            for pi in 0..checkpoints.len() {
                let tau: Vec<f64> = s1[pi].iter().zip(&s0[pi]).map(|(a, b)| a - b).collect();
                let (acc, cnt) = squared_error(&star_val, &tau);
                let slot = &mut sums[ci * checkpoints.len() + pi];
                slot.0 += acc;
                slot.1 += cnt;
            }
        }
    }
    collect_table(&combos, &checkpoints, &sums)
}

/// Tunes a two-model effect scorer: one regression per arm sharing the
/// same hyperparameters, scored jointly by the transformed outcome loss
/// of the arm difference.
pub fn tune_tlearner_tol(
    x: &Matrix,
    t: &[f64],
    y: &[f64],
    y_star: &[f64],
    grid: &HyperGrid,
    k_folds: usize,
    seed: u64,
) -> Result<TunedFit> {
    grid.validate()?;
    let folds = make_folds(x.n_rows(), k_folds, seed, Some(t))?;
    let checkpoints = grid.checkpoints();
    let combos = grid.combos();
    let max_trees = *checkpoints.last().unwrap();
    let mut sums = vec![(0.0f64, 0.0f64); combos.len() * checkpoints.len()];

    for fold in 0..k_folds as u32 {
        let (train, val) = split_rows(&folds, fold);
        let treated: Vec<usize> = train.iter().copied().filter(|&r| t[r] == 1.0).collect();
        let control: Vec<usize> = train.iter().copied().filter(|&r| t[r] == 0.0).collect();
        if treated.is_empty() || control.is_empty() {
            return Err(Error::Data("training fold is missing a treatment arm".into()));
        }
        let data1 = FitData::new(x.select_rows(&treated));
        let data0 = FitData::new(x.select_rows(&control));
        let y1 = gather(y, &treated);
        let y0 = gather(y, &control);
        let x_val = x.select_rows(&val);
        let star_val = gather(y_star, &val);
        for (ci, &(depth, lr, mlw)) in combos.iter().enumerate() {
            let params = GbtParams {
                n_trees: max_trees,
                max_depth: depth,
                learning_rate: lr,
                min_leaf_weight: mlw,
            };
            let m1 = GbtModel::fit(&data1, &y1, None, Task::Regression, &params)?;
            let m0 = GbtModel::fit(&data0, &y0, None, Task::Regression, &params)?;
            let s1 = m1.predict_staged(&x_val, &checkpoints)?;
            let s0 = m0.predict_staged(&x_val, &checkpoints)?;
            for pi in 0..checkpoints.len() {
                let tau: Vec<f64> = s1[pi].iter().zip(&s0[pi]).map(|(a, b)| a - b).collect();
                let (acc, cnt) = squared_error(&star_val, &tau);
                let slot = &mut sums[ci * checkpoints.len() + pi];
                slot.0 += acc;
                slot.1 += cnt;
            }
        }
    }
    collect_table(&combos, &checkpoints, &sums)
}

/// Tunes a regression whose fitting target differs from its evaluation
/// target: the model learns `y_fit` but is scored against `y_eval` on the
/// held-out fold (the doubly robust scorer fits the robust pseudo-outcome
/// and is judged by the transformed outcome loss).
pub fn tune_regression_against(
    x: &Matrix,
    y_fit: &[f64],
    y_eval: &[f64],
    grid: &HyperGrid,
    k_folds: usize,
    seed: u64,
) -> Result<TunedFit> {
    grid.validate()?;
    let folds = make_folds(x.n_rows(), k_folds, seed, None)?;
    let checkpoints = grid.checkpoints();
    let combos = grid.combos();
    let max_trees = *checkpoints.last().unwrap();
    let mut sums = vec![(0.0f64, 0.0f64); combos.len() * checkpoints.len()];

    for fold in 0..k_folds as u32 {
        let (train, val) = split_rows(&folds, fold);
        let data = FitData::new(x.select_rows(&train));
        let y_train = gather(y_fit, &train);
        let x_val = x.select_rows(&val);
        let eval_val = gather(y_eval, &val);
        for (ci, &(depth, lr, mlw)) in combos.iter().enumerate() {
            let params = GbtParams {
                n_trees: max_trees,
                max_depth: depth,
                learning_rate: lr,
                min_leaf_weight: mlw,
            };
            let model = GbtModel::fit(&data, &y_train, None, Task::Regression, &params)?;
            let staged = model.predict_staged(&x_val, &checkpoints)?;
            for (pi, preds) in staged.iter().enumerate() {
                let (acc, cnt) = squared_error(&eval_val, preds);
                let slot = &mut sums[ci * checkpoints.len() + pi];
                slot.0 += acc;
                slot.1 += cnt;
            }
        }
    }
    collect_table(&combos, &checkpoints, &sums)
}

fn collect_table(
    combos: &[(usize, f64, f64)],
    checkpoints: &[usize],
    sums: &[(f64, f64)],
) -> Result<TunedFit> {
    let mut table = Vec::with_capacity(combos.len() * checkpoints.len());
    for (ci, &(depth, lr, mlw)) in combos.iter().enumerate() {
        for (pi, &nt) in checkpoints.iter().enumerate() {
            let (acc, cnt) = sums[ci * checkpoints.len() + pi];
            table.push((
                GbtParams {
                    n_trees: nt,
                    max_depth: depth,
                    learning_rate: lr,
                    min_leaf_weight: mlw,
                },
                acc / cnt,
            ));
        }
    }
    pick_best(table)
}
