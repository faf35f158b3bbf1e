//! Treatment-effect estimators: causal hurdle models, one-stage
//! meta-learners, and a doubly-robust transformation learner.
//!
//! The hurdle architectures decompose the per-customer profit effect into
//! a conversion probability and a conditional purchase value,
//! tau(x) = p1(x)*v1(x) - p0(x)*v0(x), mirroring the decision rule's
//! inputs. Value models are fit on converters only, which selects on the
//! outcome; inverse-probability weighting by the estimated conversion
//! probability corrects the resulting underrepresentation of unlikely
//! converters.
//!
//! The one-stage learners regress the profit Y = c*v directly: a single
//! model with the treatment appended as a covariate, a per-arm pair, and
//! a regression on the doubly-robust transformed outcome, which combines
//! per-arm linear profit regressions with inverse-propensity residual
//! corrections so that its expectation equals the effect when either
//! component is right.
//!
//! Every estimator exposes the same scoring surface: an effect estimate,
//! a treated conversion probability, and (where the architecture carries
//! one) a treated value estimate, so policies downstream do not care how
//! the scores were produced.

use crate::data::{Dataset, TruthTable};
use crate::error::{Error, Result};
use crate::learners::{fit_linear, fit_logistic, GbtModel, GbtParams, LinearModel, Task};
use crate::matrix::Matrix;
use std::io::{BufWriter, Write};
use std::path::Path;

/// Smallest conversion probability used in inverse-probability weights;
/// caps any converter's weight at 50.
pub const IPW_PROBABILITY_FLOOR: f64 = 0.02;

/// Smallest value a value scorer may output, keeping effect products
/// finite and signed sensibly.
pub const VALUE_SCORER_FLOOR: f64 = 0.01;

/// Propensity clip used inside the doubly-robust transform.
pub const PROPENSITY_CLIP: f64 = 0.01;

/// How the doubly-robust transform obtains assignment probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Propensity {
    Fitted,
    Known(f64),
}

/// Scores for a batch of customers. `v1_hat` is None for architectures
/// without a value model.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub ids: Vec<u64>,
    pub tau_hat: Vec<f64>,
    pub p1_hat: Vec<f64>,
    pub v1_hat: Option<Vec<f64>>,
}

/// A fitted targeting model: any of the estimator architectures behind
/// the common scoring surface.
#[derive(Debug, Clone)]
pub enum TargetingModel {
    /// One conversion classifier and one value regressor, both with the
    /// treatment appended as a covariate.
    HurdleSingle { f_c: GbtModel, f_v: GbtModel },
    /// Per-arm conversion classifiers and per-arm value regressors.
    HurdleTwo {
        p0: GbtModel,
        p1: GbtModel,
        v0: GbtModel,
        v1: GbtModel,
    },
    /// One profit regressor with the treatment appended, plus a separate
    /// treated-arm conversion classifier.
    OnestageSingle { f_y: GbtModel, conversion: GbtModel },
    /// Per-arm profit regressors plus a separate conversion classifier.
    OnestageTwo {
        f_y1: GbtModel,
        f_y0: GbtModel,
        conversion: GbtModel,
    },
    /// Regression on the doubly-robust transformed profit, keeping its
    /// auxiliary models, plus a separate conversion classifier.
    OnestageDr {
        f_dr: GbtModel,
        mu1: LinearModel,
        mu0: LinearModel,
        e_model: Option<LinearModel>,
        conversion: GbtModel,
    },
    /// Constant scores: difference-in-means effect, treated conversion
    /// rate, mean treated converter value.
    AteConstant {
        tau: f64,
        p1: f64,
        v1: Option<f64>,
    },
    /// Reads true effects and potentials from the simulation truth.
    Oracle { truth: TruthTable },
}

impl TargetingModel {
    pub fn architecture(&self) -> &'static str {
        match self {
            TargetingModel::HurdleSingle { .. } => "hurdle-single",
            TargetingModel::HurdleTwo { .. } => "hurdle-two",
            TargetingModel::OnestageSingle { .. } => "onestage-single",
            TargetingModel::OnestageTwo { .. } => "onestage-two",
            TargetingModel::OnestageDr { .. } => "onestage-dr",
            TargetingModel::AteConstant { .. } => "ate",
            TargetingModel::Oracle { .. } => "oracle",
        }
    }

    /// Number of fitted component models the architecture carries.
    pub fn n_component_models(&self) -> usize {
        match self {
            TargetingModel::HurdleSingle { .. } => 2,
            TargetingModel::HurdleTwo { .. } => 4,
            TargetingModel::OnestageSingle { .. } => 2,
            TargetingModel::OnestageTwo { .. } => 3,
            TargetingModel::OnestageDr { e_model, .. } => 4 + e_model.is_some() as usize,
            TargetingModel::AteConstant { .. } => 1,
            TargetingModel::Oracle { .. } => 0,
        }
    }

    pub fn has_value_scorer(&self) -> bool {
        matches!(
            self,
            TargetingModel::HurdleSingle { .. }
                | TargetingModel::HurdleTwo { .. }
                | TargetingModel::Oracle { .. }
                | TargetingModel::AteConstant { v1: Some(_), .. }
        )
    }

    /// Scores a batch of customers. The oracle looks rows up by id and
    /// fails on unknown ids; fitted models ignore ids except to echo them.
    pub fn predict(&self, x: &Matrix, ids: &[u64]) -> Result<Predictions> {
        if x.n_rows() != ids.len() {
            return Err(Error::Data("feature rows and ids must align".into()));
        }
        match self {
            TargetingModel::HurdleSingle { f_c, f_v } => {
                let x1 = x.with_constant_column(1.0);
                let x0 = x.with_constant_column(0.0);
                let p1 = f_c.predict(&x1)?;
                let p0 = f_c.predict(&x0)?;
                let v1 = floor_values(f_v.predict(&x1)?);
                let v0 = floor_values(f_v.predict(&x0)?);
                Ok(hurdle_predictions(ids, p1, p0, v1, v0))
            }
            TargetingModel::HurdleTwo { p0, p1, v0, v1 } => {
                let p1 = p1.predict(x)?;
                let p0 = p0.predict(x)?;
                let v1 = floor_values(v1.predict(x)?);
                let v0 = floor_values(v0.predict(x)?);
                Ok(hurdle_predictions(ids, p1, p0, v1, v0))
            }
            TargetingModel::OnestageSingle { f_y, conversion } => {
                let y1 = f_y.predict(&x.with_constant_column(1.0))?;
                let y0 = f_y.predict(&x.with_constant_column(0.0))?;
                let tau_hat = y1.iter().zip(&y0).map(|(a, b)| a - b).collect();
                Ok(Predictions {
                    ids: ids.to_vec(),
                    tau_hat,
                    p1_hat: conversion.predict(x)?,
                    v1_hat: None,
                })
            }
            TargetingModel::OnestageTwo {
                f_y1,
                f_y0,
                conversion,
            } => {
                let y1 = f_y1.predict(x)?;
                let y0 = f_y0.predict(x)?;
                let tau_hat = y1.iter().zip(&y0).map(|(a, b)| a - b).collect();
                Ok(Predictions {
                    ids: ids.to_vec(),
                    tau_hat,
                    p1_hat: conversion.predict(x)?,
                    v1_hat: None,
                })
            }
            TargetingModel::OnestageDr {
                f_dr, conversion, ..
            } => Ok(Predictions {
                ids: ids.to_vec(),
                tau_hat: f_dr.predict(x)?,
                p1_hat: conversion.predict(x)?,
                v1_hat: None,
            }),
            TargetingModel::AteConstant { tau, p1, v1 } => Ok(Predictions {
                ids: ids.to_vec(),
                tau_hat: vec![*tau; ids.len()],
                p1_hat: vec![*p1; ids.len()],
                v1_hat: v1.map(|v| vec![v; ids.len()]),
            }),
            TargetingModel::Oracle { truth } => {
                let mut tau_hat = Vec::with_capacity(ids.len());
                let mut p1_hat = Vec::with_capacity(ids.len());
                let mut v1_hat = Vec::with_capacity(ids.len());
                for id in ids {
                    let r = truth
                        .get(*id)
                        .ok_or_else(|| Error::Data(format!("no truth for id {}", id)))?;
                    tau_hat.push(r.tau);
                    p1_hat.push(r.p1);
                    v1_hat.push(r.v1);
                }
                Ok(Predictions {
                    ids: ids.to_vec(),
                    tau_hat,
                    p1_hat,
                    v1_hat: Some(v1_hat),
                })
            }
        }
    }
}

fn floor_values(mut v: Vec<f64>) -> Vec<f64> {
    for x in &mut v {
        *x = x.max(VALUE_SCORER_FLOOR);
    }
    v
}

fn hurdle_predictions(
    ids: &[u64],
    p1: Vec<f64>,
    p0: Vec<f64>,
    v1: Vec<f64>,
    v0: Vec<f64>,
) -> Predictions {
    let tau_hat = (0..ids.len())
        .map(|i| p1[i] * v1[i] - p0[i] * v0[i])
        .collect();
    Predictions {
        ids: ids.to_vec(),
        tau_hat,
        p1_hat: p1,
        v1_hat: Some(v1),
    }
}

/// Inverse-probability weights 1/max(p, floor).
pub(crate) fn ipw_weights(p_hat: &[f64], floor: f64) -> Vec<f64> {
    p_hat.iter().map(|p| 1.0 / p.max(floor)).collect()
}

fn arm_rows(train: &Dataset, arm: u8) -> Vec<usize> {
    train
        .records()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.t == arm)
        .map(|(i, _)| i)
        .collect()
}

fn converter_rows(train: &Dataset) -> Vec<usize> {
    train
        .records()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.c == 1)
        .map(|(i, _)| i)
        .collect()
}

fn require_converters_per_arm(train: &Dataset) -> Result<()> {
    for arm in [0u8, 1] {
        let rows = arm_rows(train, arm);
        if rows.is_empty() {
            return Err(Error::Data(format!("treatment arm {} is empty", arm)));
        }
        if !rows.iter().any(|&i| train.records()[i].c == 1) {
            return Err(Error::Data(format!(
                "treatment arm {} has no converters; cannot fit a value model",
                arm
            )));
        }
    }
    Ok(())
}

fn require_both_arms(train: &Dataset) -> Result<()> {
    for arm in [0u8, 1] {
        if arm_rows(train, arm).is_empty() {
            return Err(Error::Data(format!("treatment arm {} is empty", arm)));
        }
    }
    Ok(())
}

/// Fits the single-model hurdle: one conversion classifier f_c(x,t) and
/// one converter-value regressor f_v(x,t), the latter weighted by the
/// inverse of each converter's own estimated conversion probability.
pub fn fit_hurdle_single(
    train: &Dataset,
    conversion_params: &GbtParams,
    value_params: &GbtParams,
) -> Result<TargetingModel> {
    require_converters_per_arm(train)?;
    let xt = train.features().with_column(&train.treatment_indicators());
    let f_c = GbtModel::fit_matrix(
        &xt,
        &train.conversion_indicators(),
        None,
        Task::Classification,
        conversion_params,
    )?;
    let conv = converter_rows(train);
    let p_own = f_c.predict(&xt.select_rows(&conv))?;
    let weights = ipw_weights(&p_own, IPW_PROBABILITY_FLOOR);
    let y: Vec<f64> = conv.iter().map(|&i| train.records()[i].v).collect();
    let f_v = GbtModel::fit_matrix(
        &xt.select_rows(&conv),
        &y,
        Some(&weights),
        Task::Regression,
        value_params,
    )?;
    Ok(TargetingModel::HurdleSingle { f_c, f_v })
}

/// Per-arm hyperparameters for the two-model hurdle.
#[derive(Debug, Clone)]
pub struct HurdleTwoParams {
    pub conversion0: GbtParams,
    pub conversion1: GbtParams,
    pub value0: GbtParams,
    pub value1: GbtParams,
}

/// Fits the two-model hurdle: conversion classifiers and converter-value
/// regressors per arm, value weights from the matching arm's classifier.
pub fn fit_hurdle_two(train: &Dataset, params: &HurdleTwoParams) -> Result<TargetingModel> {
    require_converters_per_arm(train)?;
    let x = train.features();
    let c = train.conversion_indicators();
    let v = train.values();

    let mut fitted: Vec<(GbtModel, GbtModel)> = Vec::with_capacity(2);
    for arm in [0u8, 1] {
        let (c_params, v_params) = if arm == 0 {
            (&params.conversion0, &params.value0)
        } else {
            (&params.conversion1, &params.value1)
        };
        let rows = arm_rows(train, arm);
        let x_arm = x.select_rows(&rows);
        let c_arm: Vec<f64> = rows.iter().map(|&i| c[i]).collect();
        let p_model = GbtModel::fit_matrix(&x_arm, &c_arm, None, Task::Classification, c_params)?;

        let conv: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&i| train.records()[i].c == 1)
            .collect();
        let x_conv = x.select_rows(&conv);
        let p_conv = p_model.predict(&x_conv)?;
        let weights = ipw_weights(&p_conv, IPW_PROBABILITY_FLOOR);
        let y: Vec<f64> = conv.iter().map(|&i| v[i]).collect();
        let v_model =
            GbtModel::fit_matrix(&x_conv, &y, Some(&weights), Task::Regression, v_params)?;
        fitted.push((p_model, v_model));
    }
    let (p1, v1) = fitted.pop().unwrap();
    let (p0, v0) = fitted.pop().unwrap();
    Ok(TargetingModel::HurdleTwo { p0, p1, v0, v1 })
}

/// Fits the one-stage single model: a profit regression with the
/// treatment appended as a covariate, plus the separate conversion model.
pub fn fit_onestage_single(
    train: &Dataset,
    params: &GbtParams,
    conversion_params: &GbtParams,
) -> Result<TargetingModel> {
    require_both_arms(train)?;
    let xt = train.features().with_column(&train.treatment_indicators());
    let f_y = GbtModel::fit_matrix(&xt, &train.outcomes(), None, Task::Regression, params)?;
    let conversion = fit_conversion_separate(train, conversion_params)?;
    Ok(TargetingModel::OnestageSingle { f_y, conversion })
}

/// Fits the one-stage two-model learner: per-arm profit regressions plus
/// the separate conversion model.
pub fn fit_onestage_two(
    train: &Dataset,
    params: &GbtParams,
    conversion_params: &GbtParams,
) -> Result<TargetingModel> {
    require_both_arms(train)?;
    let x = train.features();
    let y = train.outcomes();
    let mut arm_models = Vec::with_capacity(2);
    for arm in [0u8, 1] {
        let rows = arm_rows(train, arm);
        let y_arm: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        arm_models.push(GbtModel::fit_matrix(
            &x.select_rows(&rows),
            &y_arm,
            None,
            Task::Regression,
            params,
        )?);
    }
    let f_y1 = arm_models.pop().unwrap();
    let f_y0 = arm_models.pop().unwrap();
    let conversion = fit_conversion_separate(train, conversion_params)?;
    Ok(TargetingModel::OnestageTwo {
        f_y1,
        f_y0,
        conversion,
    })
}

/// Doubly-robust transformed outcomes with their auxiliary models.
#[derive(Debug, Clone)]
pub struct DrTransform {
    pub y_dr: Vec<f64>,
    pub mu1: LinearModel,
    pub mu0: LinearModel,
    pub e_model: Option<LinearModel>,
}

/// The transform itself: mu1 - mu0 plus inverse-propensity-weighted
/// residual corrections on the observed arm.
pub(crate) fn dr_outcomes(
    y: &[f64],
    t: &[u8],
    mu1_hat: &[f64],
    mu0_hat: &[f64],
    e_hat: &[f64],
) -> Vec<f64> {
    (0..y.len())
        .map(|i| {
            let base = mu1_hat[i] - mu0_hat[i];
            if t[i] == 1 {
                base + (y[i] - mu1_hat[i]) / e_hat[i]
            } else {
                base - (y[i] - mu0_hat[i]) / (1.0 - e_hat[i])
            }
        })
        .collect()
}

/// Builds the doubly-robust transform: per-arm linear profit regressions,
/// a propensity (fitted by logistic regression or substituted when the
/// assignment probability is known), and the transformed outcomes.
pub fn build_dr_transform(train: &Dataset, propensity: Propensity) -> Result<DrTransform> {
    require_both_arms(train)?;
    let x = train.features();
    let y = train.outcomes();
    let t = train.treatments();

    let mut mus = Vec::with_capacity(2);
    for arm in [0u8, 1] {
        let rows = arm_rows(train, arm);
        let y_arm: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        mus.push(fit_linear(&x.select_rows(&rows), &y_arm)?);
    }
    let mu1 = mus.pop().unwrap();
    let mu0 = mus.pop().unwrap();

    let (e_model, e_hat) = match propensity {
        Propensity::Known(e) => {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::Config(format!(
                    "known propensity must be in (0,1), got {}",
                    e
                )));
            }
            (None, vec![e; train.n()])
        }
        Propensity::Fitted => {
            let model = fit_logistic(&x, &train.treatment_indicators())?;
            let e_hat = model
                .predict(&x)?
                .into_iter()
                .map(|p| p.clamp(PROPENSITY_CLIP, 1.0 - PROPENSITY_CLIP))
                .collect();
            (Some(model), e_hat)
        }
    };

    let mu1_hat = mu1.predict(&x)?;
    let mu0_hat = mu0.predict(&x)?;
    let y_dr = dr_outcomes(&y, &t, &mu1_hat, &mu0_hat, &e_hat);
    Ok(DrTransform {
        y_dr,
        mu1,
        mu0,
        e_model,
    })
}

/// Fits the doubly-robust learner: a regression of the transformed
/// outcome on the covariates, plus the separate conversion model.
pub fn fit_onestage_dr(
    train: &Dataset,
    params: &GbtParams,
    conversion_params: &GbtParams,
    propensity: Propensity,
) -> Result<TargetingModel> {
    let transform = build_dr_transform(train, propensity)?;
    let f_dr = GbtModel::fit_matrix(
        &train.features(),
        &transform.y_dr,
        None,
        Task::Regression,
        params,
    )?;
    let conversion = fit_conversion_separate(train, conversion_params)?;
    Ok(TargetingModel::OnestageDr {
        f_dr,
        mu1: transform.mu1,
        mu0: transform.mu0,
        e_model: transform.e_model,
        conversion,
    })
}

/// Fits the standalone treated-arm conversion classifier used by the
/// one-stage architectures and by cost models that estimate the
/// conversion probability under treatment.
pub fn fit_conversion_separate(train: &Dataset, params: &GbtParams) -> Result<GbtModel> {
    let rows = arm_rows(train, 1);
    if rows.is_empty() {
        return Err(Error::Data("treated arm is empty".into()));
    }
    let c: Vec<f64> = rows.iter().map(|&i| train.records()[i].c as f64).collect();
    GbtModel::fit_matrix(
        &train.features().select_rows(&rows),
        &c,
        None,
        Task::Classification,
        params,
    )
}

/// Constant-score model: difference-in-means effect, treated conversion
/// rate (kept inside (0,1)), mean value among treated converters.
pub fn make_ate_model(train: &Dataset) -> Result<TargetingModel> {
    require_both_arms(train)?;
    let y = train.outcomes();
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    let mut treated_conv = 0usize;
    let mut treated_conv_value = 0.0;
    for (i, r) in train.records().iter().enumerate() {
        sums[r.t as usize] += y[i];
        counts[r.t as usize] += 1;
        if r.t == 1 && r.c == 1 {
            treated_conv += 1;
            treated_conv_value += r.v;
        }
    }
    let tau = sums[1] / counts[1] as f64 - sums[0] / counts[0] as f64;
    let p1 = (treated_conv as f64 / counts[1] as f64).clamp(1e-6, 1.0 - 1e-6);
    let v1 = (treated_conv > 0).then(|| treated_conv_value / treated_conv as f64);
    Ok(TargetingModel::AteConstant { tau, p1, v1 })
}

/// Oracle model reading effects and potentials straight from the truth.
pub fn make_oracle_model(truth: TruthTable) -> TargetingModel {
    TargetingModel::Oracle { truth }
}

/// Writes predictions as CSV: `id,tau_hat,p1_hat,v1_hat,architecture`,
/// with v1_hat left empty when the architecture has no value scorer.
pub fn write_preds_csv(path: &Path, entries: &[(&str, &Predictions)]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "id,tau_hat,p1_hat,v1_hat,architecture").map_err(|e| Error::io(path, e))?;
    for (arch, preds) in entries {
        for i in 0..preds.ids.len() {
            let v1 = match &preds.v1_hat {
                Some(v) => format!("{:.6}", v[i]),
                None => String::new(),
            };
            writeln!(
                w,
                "{},{:.6},{:.6},{},{}",
                preds.ids[i], preds.tau_hat[i], preds.p1_hat[i], v1, arch
            )
            .map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CustomerRecord, TruthRecord};
    use crate::policy::{analytical_policy, CostSpec, IncentiveCost};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_params(n_trees: usize) -> GbtParams {
        GbtParams {
            n_trees,
            max_depth: 2,
            learning_rate: 0.1,
            min_leaf_weight: 5.0,
        }
    }

    /// Random covariates with outcomes that ignore the treatment: the
    /// true effect is zero for every customer.
    fn no_effect_data(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut records = Vec::with_capacity(n);
        for id in 0..n {
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0f64..1.0)).collect();
            let t = rng.gen_bool(0.5) as u8;
            let p = 0.15 + 0.1 * x[0].tanh();
            let c = rng.gen_bool(p) as u8;
            let v = if c == 1 {
                (10.0 + 3.0 * x[1] + rng.gen_range(-1.0f64..1.0)).max(1.0)
            } else {
                0.0
            };
            records.push(CustomerRecord {
                id: id as u64,
                x,
                t,
                c,
                v,
            });
        }
        Dataset::new(5, records).unwrap()
    }

    /// Every row duplicated into both arms with identical outcomes, so
    /// arm-wise fits see literally the same data.
    fn mirrored_arm_data(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut records = Vec::with_capacity(2 * n);
        for i in 0..n {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0f64..1.0)).collect();
            let c = rng.gen_bool(0.3) as u8;
            let v = if c == 1 { rng.gen_range(5.0f64..50.0) } else { 0.0 };
            for t in [0u8, 1] {
                records.push(CustomerRecord {
                    id: (2 * i + t as usize) as u64,
                    x: x.clone(),
                    t,
                    c,
                    v,
                });
            }
        }
        Dataset::new(4, records).unwrap()
    }

    #[test]
    fn hurdle_single_sees_no_effect_where_there_is_none() {
        let data = no_effect_data(4000, 31);
        let model = fit_hurdle_single(&data, &small_params(80), &small_params(80)).unwrap();
        let preds = model.predict(&data.features(), &data.ids()).unwrap();
        let mean_tau = preds.tau_hat.iter().sum::<f64>() / preds.tau_hat.len() as f64;
        // Mean outcome is about 1.7; a zero effect should be recovered
        // well within a tenth of that.
        assert!(mean_tau.abs() < 0.17, "mean tau_hat = {}", mean_tau);
        assert!(preds.p1_hat.iter().all(|p| *p > 0.0 && *p < 1.0));
        assert_eq!(model.n_component_models(), 2);
    }

    #[test]
    fn hurdle_single_conversion_scorer_is_the_treated_slice() {
        let data = no_effect_data(500, 5);
        let model = fit_hurdle_single(&data, &small_params(20), &small_params(20)).unwrap();
        let preds = model.predict(&data.features(), &data.ids()).unwrap();
        let TargetingModel::HurdleSingle { f_c, .. } = &model else {
            unreachable!()
        };
        let direct = f_c
            .predict(&data.features().with_constant_column(1.0))
            .unwrap();
        assert_eq!(preds.p1_hat, direct);
    }

    #[test]
    fn hurdle_two_components_recompose_exactly() {
        let data = no_effect_data(1200, 9);
        let params = HurdleTwoParams {
            conversion0: small_params(30),
            conversion1: small_params(30),
            value0: small_params(30),
            value1: small_params(30),
        };
        let model = fit_hurdle_two(&data, &params).unwrap();
        assert_eq!(model.n_component_models(), 4);
        let x = data.features();
        let preds = model.predict(&x, &data.ids()).unwrap();
        let TargetingModel::HurdleTwo { p0, p1, v0, v1 } = &model else {
            unreachable!()
        };
        let (p0h, p1h) = (p0.predict(&x).unwrap(), p1.predict(&x).unwrap());
        let (v0h, v1h) = (v0.predict(&x).unwrap(), v1.predict(&x).unwrap());
        for i in 0..data.n() {
            let tau = p1h[i] * v1h[i].max(VALUE_SCORER_FLOOR)
                - p0h[i] * v0h[i].max(VALUE_SCORER_FLOOR);
            assert!((tau - preds.tau_hat[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn mirrored_arms_give_identically_zero_effects() {
        let data = mirrored_arm_data(600, 77);
        let params = HurdleTwoParams {
            conversion0: small_params(40),
            conversion1: small_params(40),
            value0: small_params(40),
            value1: small_params(40),
        };
        let hurdle = fit_hurdle_two(&data, &params).unwrap();
        let preds = hurdle.predict(&data.features(), &data.ids()).unwrap();
        assert!(preds.tau_hat.iter().all(|t| t.abs() < 1e-12));

        let two = fit_onestage_two(&data, &small_params(40), &small_params(10)).unwrap();
        let preds = two.predict(&data.features(), &data.ids()).unwrap();
        assert!(preds.tau_hat.iter().all(|t| t.abs() < 1e-12));
    }

    #[test]
    fn onestage_single_on_constant_outcomes_is_zero_everywhere() {
        let mut data = no_effect_data(300, 12);
        let records: Vec<CustomerRecord> = data
            .records()
            .iter()
            .map(|r| CustomerRecord {
                v: 2.5,
                c: 1,
                ..r.clone()
            })
            .collect();
        data = Dataset::new(5, records).unwrap();
        let model = fit_onestage_single(&data, &small_params(50), &small_params(10)).unwrap();
        let preds = model.predict(&data.features(), &data.ids()).unwrap();
        assert!(preds.tau_hat.iter().all(|t| t.abs() < 1e-12));
        assert!(preds.v1_hat.is_none());

        // Zero trees: only the base score remains, which cancels.
        let model = fit_onestage_single(&data, &small_params(0), &small_params(10)).unwrap();
        let preds = model.predict(&data.features(), &data.ids()).unwrap();
        assert!(preds.tau_hat.iter().all(|t| *t == 0.0));
    }

    #[test]
    fn onestage_two_zero_trees_is_the_difference_in_means() {
        let data = no_effect_data(400, 21);
        let model = fit_onestage_two(&data, &small_params(0), &small_params(10)).unwrap();
        let preds = model.predict(&data.features(), &data.ids()).unwrap();
        let y = data.outcomes();
        let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0, 0.0, 0);
        for (i, r) in data.records().iter().enumerate() {
            if r.t == 1 {
                s1 += y[i];
                n1 += 1;
            } else {
                s0 += y[i];
                n0 += 1;
            }
        }
        let dim = s1 / n1 as f64 - s0 / n0 as f64;
        assert!(preds.tau_hat.iter().all(|t| (t - dim).abs() < 1e-12));
        assert_eq!(model.n_component_models(), 3);
    }

    #[test]
    fn dr_outcomes_match_hand_arithmetic() {
        // Four rows with made-up nuisances at e = 0.5.
        let y = [10.0, 0.0, 4.0, 8.0];
        let t = [1u8, 0, 1, 0];
        let mu1 = [6.0, 5.0, 4.0, 7.0];
        let mu0 = [2.0, 3.0, 1.0, 6.0];
        let e = [0.5, 0.5, 0.5, 0.5];
        let got = dr_outcomes(&y, &t, &mu1, &mu0, &e);
        // Row 1: 4 + (10-6)/.5 = 12; row 2: 2 - (0-3)/.5 = 8;
        // row 3: 3 + (4-4)/.5 = 3; row 4: 1 - (8-6)/.5 = -3.
        let want = [12.0, 8.0, 3.0, -3.0];
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
        // Treated row with y = mu1: the correction vanishes.
        let got = dr_outcomes(&[6.0], &[1], &[6.0], &[2.0], &[0.9]);
        assert!((got[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn dr_transform_mean_estimates_the_effect() {
        // Linear outcome with effect 1 + 0.5*x1 and true ATE 1.0 at
        // x1 ~ U(-1,1); fitted linear nuisances and fitted propensity.
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut records = Vec::with_capacity(n);
        for id in 0..n {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0f64..1.0)).collect();
            let t = rng.gen_bool(0.5) as u8;
            let noise: f64 = rng.gen_range(-1.0..1.0);
            let y = 2.0 + x[0] + t as f64 * (1.0 + 0.5 * x[1]) + noise;
            records.push(CustomerRecord {
                id: id as u64,
                x,
                t,
                c: 1,
                v: y.max(0.0),
            });
        }
        let data = Dataset::new(3, records).unwrap();
        let transform = build_dr_transform(&data, Propensity::Fitted).unwrap();
        let mean = transform.y_dr.iter().sum::<f64>() / n as f64;
        let var = transform
            .y_dr
            .iter()
            .map(|v| (v - mean).powi(2))
            .sum::<f64>()
            / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - 1.0).abs() <= 3.0 * se,
            "mean Y_dr = {}, 3se = {}",
            mean,
            3.0 * se
        );
        assert!(transform.e_model.is_some());
        assert!(transform.y_dr.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn exact_linear_arms_make_the_dr_target_constant() {
        // y = 3 + 2t exactly: per-arm linear fits recover the constants,
        // residuals vanish, and Y_dr is exactly 2 for every row.
        let mut rng = ChaCha8Rng::seed_from_u64(88);
        let mut records = Vec::new();
        for id in 0..400 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0f64..1.0)).collect();
            let t = (id % 2) as u8;
            records.push(CustomerRecord {
                id: id as u64,
                x,
                t,
                c: 1,
                v: 3.0 + 2.0 * t as f64,
            });
        }
        let data = Dataset::new(3, records).unwrap();
        let model =
            fit_onestage_dr(&data, &small_params(30), &small_params(10), Propensity::Known(0.5))
                .unwrap();
        assert_eq!(model.n_component_models(), 4);
        let preds = model.predict(&data.features(), &data.ids()).unwrap();
        assert!(preds.tau_hat.iter().all(|t| (t - 2.0).abs() < 1e-6));

        let fitted =
            fit_onestage_dr(&data, &small_params(30), &small_params(10), Propensity::Fitted)
                .unwrap();
        assert_eq!(fitted.n_component_models(), 5);
    }

    #[test]
    fn separate_conversion_model_matches_the_two_model_treated_arm() {
        let data = no_effect_data(900, 44);
        let sep = fit_conversion_separate(&data, &small_params(35)).unwrap();
        let params = HurdleTwoParams {
            conversion0: small_params(35),
            conversion1: small_params(35),
            value0: small_params(5),
            value1: small_params(5),
        };
        let hurdle = fit_hurdle_two(&data, &params).unwrap();
        let TargetingModel::HurdleTwo { p1, .. } = &hurdle else {
            unreachable!()
        };
        let x = data.features();
        assert_eq!(sep.predict(&x).unwrap(), p1.predict(&x).unwrap());
    }

    #[test]
    fn all_converting_treated_rows_push_predictions_near_one() {
        let mut records = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for id in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0f64..1.0)).collect();
            let t = (id % 2) as u8;
            records.push(CustomerRecord {
                id: id as u64,
                x,
                t,
                c: t,
                v: t as f64 * 10.0,
            });
        }
        let data = Dataset::new(3, records).unwrap();
        let model = fit_conversion_separate(&data, &small_params(10)).unwrap();
        let preds = model.predict(&data.features()).unwrap();
        assert!(preds.iter().all(|p| *p > 0.99));
    }

    #[test]
    fn ate_model_is_the_hand_computed_constant() {
        let mut records = Vec::new();
        // Treated: Y = 3, 3 (both converters at v=3); control: Y = 1, 1.
        for (id, (t, c, v)) in [(1u8, 1u8, 3.0), (1, 1, 3.0), (0, 1, 1.0), (0, 1, 1.0)]
            .into_iter()
            .enumerate()
        {
            records.push(CustomerRecord {
                id: id as u64,
                x: vec![id as f64],
                t,
                c,
                v,
            });
        }
        let data = Dataset::new(1, records).unwrap();
        let model = make_ate_model(&data).unwrap();
        let preds = model.predict(&data.features(), &data.ids()).unwrap();
        assert!(preds.tau_hat.iter().all(|t| (t - 2.0).abs() < 1e-12));
        assert!(preds.p1_hat.iter().all(|p| (p - (1.0 - 1e-6)).abs() < 1e-12));
        assert_eq!(preds.v1_hat.unwrap(), vec![3.0; 4]);
    }

    #[test]
    fn oracle_reads_truth_and_dominates_every_other_decision_vector() {
        use crate::evaluation::{true_profit, ProfitMode};
        let cost = CostSpec {
            incentive: IncentiveCost::Fixed(10.0),
            kappa: 0.3,
        };
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rows = Vec::new();
            for id in 0..400u64 {
                let p0: f64 = rng.gen_range(0.0..0.4);
                let p1: f64 = rng.gen_range(0.0..0.5);
                let v0: f64 = rng.gen_range(1.0..120.0);
                let v1: f64 = rng.gen_range(1.0..120.0);
                rows.push(TruthRecord {
                    id,
                    p0,
                    p1,
                    v0,
                    v1,
                    tau_c: p1 - p0,
                    tau_v: v1 - v0,
                    tau: p1 * v1 - p0 * v0,
                });
            }
            let truth = TruthTable::new(rows).unwrap();
            let oracle = make_oracle_model(truth.clone());
            let ids: Vec<u64> = (0..400).collect();
            let x = Matrix::zeros(400, 1);
            let preds = oracle.predict(&x, &ids).unwrap();
            assert_eq!(preds.tau_hat[7], truth.get(7).unwrap().tau);

            let decisions = analytical_policy(
                &ids,
                &preds.tau_hat,
                &preds.p1_hat,
                preds.v1_hat.as_deref(),
                &cost,
            )
            .unwrap();
            let (oracle_profit, _) =
                true_profit(&decisions, &truth, &cost, ProfitMode::Expected).unwrap();

            // Any other decision vector can only do worse in expectation.
            for flip_seed in 0..3u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + flip_seed);
                let other: Vec<_> = decisions
                    .iter()
                    .map(|d| crate::policy::PolicyDecision {
                        target: if rng.gen_bool(0.2) { !d.target } else { d.target },
                        ..*d
                    })
                    .collect();
                let (p, _) = true_profit(&other, &truth, &cost, ProfitMode::Expected).unwrap();
                assert!(p <= oracle_profit + 1e-9);
            }
        }
    }

    #[test]
    fn oracle_rejects_unknown_ids() {
        let truth = TruthTable::new(vec![TruthRecord {
            id: 1,
            p0: 0.1,
            p1: 0.2,
            v0: 10.0,
            v1: 12.0,
            tau_c: 0.1,
            tau_v: 2.0,
            tau: 1.4,
        }])
        .unwrap();
        let oracle = make_oracle_model(truth);
        assert!(oracle.predict(&Matrix::zeros(1, 1), &[99]).is_err());
    }

    #[test]
    fn ipw_weights_respect_the_floor() {
        let w = ipw_weights(&[0.5, 0.001, 0.02, 1.0], IPW_PROBABILITY_FLOOR);
        assert_eq!(w, vec![2.0, 50.0, 50.0, 1.0]);
        assert!(w.iter().all(|w| *w <= 1.0 / IPW_PROBABILITY_FLOOR));
    }

    #[test]
    fn preds_csv_leaves_missing_value_column_empty() {
        let dir = std::env::temp_dir().join("uptarget-preds-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("preds.csv");
        let with_value = Predictions {
            ids: vec![1],
            tau_hat: vec![1.5],
            p1_hat: vec![0.25],
            v1_hat: Some(vec![30.0]),
        };
        let without = Predictions {
            ids: vec![2],
            tau_hat: vec![-0.5],
            p1_hat: vec![0.1],
            v1_hat: None,
        };
        write_preds_csv(&path, &[("hurdle-two", &with_value), ("onestage-dr", &without)])
            .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "id,tau_hat,p1_hat,v1_hat,architecture");
        assert_eq!(lines[1], "1,1.500000,0.250000,30.000000,hurdle-two");
        assert_eq!(lines[2], "2,-0.500000,0.100000,,onestage-dr");
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
