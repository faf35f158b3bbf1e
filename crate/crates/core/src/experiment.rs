//! Monte Carlo experiment orchestration.
//!
//! An experiment run draws one or more synthetic campaigns, fits every
//! requested targeting architecture with out-of-fold cross-fitting, and
//! reports realized profit alongside score quality in three stages:
//!
//! * stage A decouples the decision rule from estimation quality by
//!   crossing two effect sources (constant ATE, oracle) with three
//!   conversion-cost models (constant rate, single joint scorer,
//!   treated-only scorer),
//! * stage B gives every architecture the same population-average cost so
//!   profit differences reflect effect ranking alone,
//! * stage C lets each fitted architecture use its own conversion scorer
//!   and compares the analytical rule against an empirical threshold tuned
//!   on the training folds.
//!
//! Every stage writes `report.csv` (averaged over seeds), one
//! `report_seed_<s>.csv` per seed, out-of-fold predictions, and a manifest
//! carrying the config hash so reruns can be verified byte for byte.

use crate::causal::{
    build_dr_transform, fit_hurdle_single, fit_hurdle_two, fit_onestage_dr, fit_onestage_single,
    fit_onestage_two, make_ate_model, make_oracle_model, write_preds_csv, HurdleTwoParams,
    Predictions, Propensity, TargetingModel, IPW_PROBABILITY_FLOOR,
};
use crate::data::{Dataset, FoldPlan, TruthTable};
use crate::error::{Error, Result};
use crate::evaluation::{
    assemble_report, brier, rmse_vs_oracle, roc_auc, tol, transformed_outcome, true_profit,
    write_report_csv, CampaignReport, ProfitMode,
};
use crate::learners::{
    tune_regression_against, tune_slearner_tol, tune_supervised, tune_tlearner_tol, GbtModel,
    GbtParams, HyperGrid, Task,
};
use crate::matrix::Matrix;
use crate::model_io::{load_model, save_model};
use crate::policy::{
    analytical_policy, apply_threshold, empirical_policy_threshold, write_decisions_csv, CostSpec,
    IncentiveCost, PolicyDecision,
};
use crate::simulation::{simulate, SimConfig};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Identifies one targeting architecture in a run roster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    HurdleSingle,
    HurdleTwo,
    OnestageSingle,
    OnestageTwo,
    OnestageDr,
    Ate,
    Oracle,
}

impl Architecture {
    pub const ALL: [Architecture; 7] = [
        Architecture::HurdleSingle,
        Architecture::HurdleTwo,
        Architecture::OnestageSingle,
        Architecture::OnestageTwo,
        Architecture::OnestageDr,
        Architecture::Ate,
        Architecture::Oracle,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Architecture::HurdleSingle => "hurdle-single",
            Architecture::HurdleTwo => "hurdle-two",
            Architecture::OnestageSingle => "onestage-single",
            Architecture::OnestageTwo => "onestage-two",
            Architecture::OnestageDr => "onestage-dr",
            Architecture::Ate => "ate",
            Architecture::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Result<Architecture> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown architecture '{}'", s)))
    }

    /// Whether the architecture is estimated from the campaign data rather
    /// than being a constant or a readout of the simulation truth.
    pub fn is_fitted(self) -> bool {
        !matches!(self, Architecture::Ate | Architecture::Oracle)
    }
}

/// How the doubly-robust learner obtains assignment probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropensityMode {
    Fitted,
    Known,
}

/// Default fixed incentive, shared by the config default and the parser
/// fallback so an omitted cost_delta key means the same thing everywhere.
const DEFAULT_DELTA: f64 = 20.0;
/// Default percentage incentive when cost_kind = percentage omits cost_eta.
const DEFAULT_ETA: f64 = 0.1;

/// Full description of one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub seeds: Vec<u64>,
    pub cost: CostSpec,
    pub roster: Vec<Architecture>,
    pub grid: HyperGrid,
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub propensity_mode: PropensityMode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            sim: SimConfig::default(),
            seeds: vec![1, 2, 3],
            cost: CostSpec {
                incentive: IncentiveCost::Fixed(DEFAULT_DELTA),
                kappa: 0.0,
            },
            roster: Architecture::ALL.to_vec(),
            grid: HyperGrid::default(),
            outer_folds: 5,
            inner_folds: 10,
            propensity_mode: PropensityMode::Fitted,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.cost.validate()?;
        self.grid.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::Config("duplicate seeds in config".into()));
        }
        if self.roster.is_empty() {
            return Err(Error::Config("architecture roster is empty".into()));
        }
        let mut tags: Vec<&str> = self.roster.iter().map(|a| a.label()).collect();
        tags.sort_unstable();
        tags.dedup();
        if tags.len() != self.roster.len() {
            return Err(Error::Config("duplicate architectures in roster".into()));
        }
        if self.outer_folds < 2 {
            return Err(Error::Config("outer_folds must be at least 2".into()));
        }
        if self.inner_folds < 2 {
            return Err(Error::Config("inner_folds must be at least 2".into()));
        }
        if self.cost.requires_value() {
            for a in &self.roster {
                let scores_value = matches!(
                    a,
                    Architecture::HurdleSingle
                        | Architecture::HurdleTwo
                        | Architecture::Ate
                        | Architecture::Oracle
                );
                if !scores_value {
                    return Err(Error::Config(format!(
                        "percentage incentive cost needs a value model per customer; \
                         '{}' predicts effects only",
                        a.label()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn propensity(&self) -> Propensity {
        match self.propensity_mode {
            PropensityMode::Fitted => Propensity::Fitted,
            PropensityMode::Known => Propensity::Known(self.sim.e),
        }
    }
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Canonical flat key=value rendering of a config. Two configs render
/// identically exactly when every effective setting matches, which makes
/// the rendering suitable for diffing and hashing.
pub fn config_to_string(cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "n = {}", cfg.sim.n);
    let _ = writeln!(s, "p = {}", cfg.sim.p);
    let _ = writeln!(s, "seeds = {}", join(&cfg.seeds));
    let _ = writeln!(s, "assignment_e = {}", cfg.sim.e);
    let _ = writeln!(s, "conversion_ate = {}", cfg.sim.conversion_ate);
    let _ = writeln!(s, "value_ate = {}", cfg.sim.value_ate);
    match cfg.cost.incentive {
        IncentiveCost::None => {
            let _ = writeln!(s, "cost_kind = none");
        }
        IncentiveCost::Fixed(d) => {
            let _ = writeln!(s, "cost_kind = fixed");
            let _ = writeln!(s, "cost_delta = {}", d);
        }
        IncentiveCost::Percentage(eta) => {
            let _ = writeln!(s, "cost_kind = percentage");
            let _ = writeln!(s, "cost_eta = {}", eta);
        }
    }
    let _ = writeln!(s, "cost_kappa = {}", cfg.cost.kappa);
    let roster: Vec<&str> = cfg.roster.iter().map(|a| a.label()).collect();
    let _ = writeln!(s, "roster = {}", roster.join(","));
    let _ = writeln!(s, "outer_folds = {}", cfg.outer_folds);
    let _ = writeln!(s, "inner_folds = {}", cfg.inner_folds);
    let _ = writeln!(s, "grid_n_trees = {}", join(&cfg.grid.n_trees));
    let _ = writeln!(s, "grid_max_depth = {}", join(&cfg.grid.max_depth));
    let _ = writeln!(s, "grid_learning_rate = {}", join(&cfg.grid.learning_rate));
    let _ = writeln!(s, "grid_min_leaf_weight = {}", join(&cfg.grid.min_leaf_weight));
    let mode = match cfg.propensity_mode {
        PropensityMode::Fitted => "fitted",
        PropensityMode::Known => "known",
    };
    let _ = writeln!(s, "dr_propensity = {}", mode);
    s
}

/// Hex SHA-256 of the canonical config text.
pub fn config_sha256(cfg: &ExperimentConfig) -> String {
    let mut h = Sha256::new();
    h.update(config_to_string(cfg).as_bytes());
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        let _ = write!(out, "{:02x}", byte);
    }
    out
}

fn parse_scalar<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{}' for key '{}'", value, key)))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        if part.is_empty() {
            return Err(Error::Config(format!("empty item in list for key '{}'", key)));
        }
        out.push(parse_scalar(key, part)?);
    }
    Ok(out)
}

/// Parses a flat key=value config, starting from defaults so a partial
/// file still describes a complete run. Unknown keys, repeated keys, and
/// cost parameters that do not apply to the chosen cost kind are rejected.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut cost_kind: Option<String> = None;
    let mut cost_delta: Option<f64> = None;
    let mut cost_eta: Option<f64> = None;
    let mut seen: Vec<String> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
        let key = key.trim();
        let value = value.trim();
        if seen.iter().any(|k| k == key) {
            return Err(Error::Config(format!("line {}: duplicate key '{}'", lineno + 1, key)));
        }
        seen.push(key.to_string());
        match key {
            "n" => cfg.sim.n = parse_scalar(key, value)?,
            "p" => cfg.sim.p = parse_scalar(key, value)?,
            "seeds" => cfg.seeds = parse_list(key, value)?,
            "assignment_e" => cfg.sim.e = parse_scalar(key, value)?,
            "conversion_ate" => cfg.sim.conversion_ate = parse_scalar(key, value)?,
            "value_ate" => cfg.sim.value_ate = parse_scalar(key, value)?,
            "cost_kind" => cost_kind = Some(value.to_string()),
            "cost_delta" => cost_delta = Some(parse_scalar(key, value)?),
            "cost_eta" => cost_eta = Some(parse_scalar(key, value)?),
            "cost_kappa" => cfg.cost.kappa = parse_scalar(key, value)?,
            "roster" => {
                let mut roster = Vec::new();
                for part in value.split(',') {
                    roster.push(Architecture::parse(part.trim())?);
                }
                cfg.roster = roster;
            }
            "outer_folds" => cfg.outer_folds = parse_scalar(key, value)?,
            "inner_folds" => cfg.inner_folds = parse_scalar(key, value)?,
            "grid_n_trees" => cfg.grid.n_trees = parse_list(key, value)?,
            "grid_max_depth" => cfg.grid.max_depth = parse_list(key, value)?,
            "grid_learning_rate" => cfg.grid.learning_rate = parse_list(key, value)?,
            "grid_min_leaf_weight" => cfg.grid.min_leaf_weight = parse_list(key, value)?,
            "dr_propensity" => {
                cfg.propensity_mode = match value {
                    "fitted" => PropensityMode::Fitted,
                    "known" => PropensityMode::Known,
                    other => {
                        return Err(Error::Config(format!(
                            "dr_propensity must be 'fitted' or 'known', got '{}'",
                            other
                        )))
                    }
                };
            }
            other => return Err(Error::Config(format!("unknown config key '{}'", other))),
        }
    }
    let kind = cost_kind.as_deref().unwrap_or("fixed");
    cfg.cost.incentive = match kind {
        "none" => IncentiveCost::None,
        "fixed" => IncentiveCost::Fixed(cost_delta.unwrap_or(DEFAULT_DELTA)),
        "percentage" => IncentiveCost::Percentage(cost_eta.unwrap_or(DEFAULT_ETA)),
        other => {
            return Err(Error::Config(format!(
                "cost_kind must be 'none', 'fixed' or 'percentage', got '{}'",
                other
            )))
        }
    };
    if kind != "fixed" && cost_delta.is_some() {
        return Err(Error::Config(format!(
            "cost_delta only applies when cost_kind = fixed, not '{}'",
            kind
        )));
    }
    if kind != "percentage" && cost_eta.is_some() {
        return Err(Error::Config(format!(
            "cost_eta only applies when cost_kind = percentage, not '{}'",
            kind
        )));
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and parses a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Prefixes an error message with run context (stage, seed) while keeping
/// the error kind, and with it the process exit code.
fn with_context(e: Error, ctx: &str) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("{}: {}", ctx, m)),
        Error::Data(m) => Error::Data(format!("{}: {}", ctx, m)),
        Error::Model(m) => Error::Model(format!("{}: {}", ctx, m)),
        Error::Io { path, source } => Error::Io {
            path: format!("{} ({})", path, ctx),
            source,
        },
    }
}

/// Lazily tunes and fits the model components that architectures share
/// within one training fold, so a component two architectures rely on (for
/// example the treated-only conversion scorer) is tuned exactly once.
struct FoldComponents<'a> {
    train: &'a Dataset,
    x: Matrix,
    xt: Matrix,
    t: Vec<u8>,
    c: Vec<u8>,
    v: Vec<f64>,
    t_ind: Vec<f64>,
    c_ind: Vec<f64>,
    y: Vec<f64>,
    y_star: Vec<f64>,
    grid: &'a HyperGrid,
    inner_folds: usize,
    propensity: Propensity,
    seed_base: u64,
    conv_joint: Option<(GbtParams, GbtModel)>,
    conv_treated: Option<(GbtParams, GbtModel)>,
    conv_control: Option<(GbtParams, GbtModel)>,
    value_joint: Option<GbtParams>,
    value_treated: Option<GbtParams>,
    value_control: Option<GbtParams>,
    slearner: Option<GbtParams>,
    tlearner: Option<GbtParams>,
    dr: Option<GbtParams>,
}

impl<'a> FoldComponents<'a> {
    fn new(
        train: &'a Dataset,
        grid: &'a HyperGrid,
        inner_folds: usize,
        e: f64,
        propensity: Propensity,
        seed_base: u64,
    ) -> FoldComponents<'a> {
        let x = train.features();
        let t = train.treatments();
        let c = train.conversions();
        let v = train.values();
        let t_ind = train.treatment_indicators();
        let c_ind = train.conversion_indicators();
        let y = train.outcomes();
        let xt = x.with_column(&t_ind);
        let y_star: Vec<f64> = y
            .iter()
            .zip(&t)
            .map(|(&yi, &ti)| transformed_outcome(yi, ti, e))
            .collect();
        FoldComponents {
            train,
            x,
            xt,
            t,
            c,
            v,
            t_ind,
            c_ind,
            y,
            y_star,
            grid,
            inner_folds,
            propensity,
            seed_base,
            conv_joint: None,
            conv_treated: None,
            conv_control: None,
            value_joint: None,
            value_treated: None,
            value_control: None,
            slearner: None,
            tlearner: None,
            dr: None,
        }
    }

    fn tune_seed(&self, component: u64) -> u64 {
        self.seed_base.wrapping_add(component)
    }

    fn arm_rows(&self, arm: u8) -> Vec<usize> {
        (0..self.train.n()).filter(|&i| self.t[i] == arm).collect()
    }

    /// Conversion scorer over the pooled design with treatment appended.
    fn conv_joint(&mut self) -> Result<&(GbtParams, GbtModel)> {
        if self.conv_joint.is_none() {
            let tuned = tune_supervised(
                &self.xt,
                &self.c_ind,
                None,
                Task::Classification,
                self.grid,
                self.inner_folds,
                self.tune_seed(0),
            )?;
            let model = GbtModel::fit_matrix(
                &self.xt,
                &self.c_ind,
                None,
                Task::Classification,
                &tuned.params,
            )?;
            self.conv_joint = Some((tuned.params, model));
        }
        Ok(self.conv_joint.as_ref().unwrap())
    }

    /// Conversion scorer fit on one arm only.
    fn conv_arm(&mut self, arm: u8) -> Result<&(GbtParams, GbtModel)> {
        let cached = if arm == 1 {
            self.conv_treated.is_some()
        } else {
            self.conv_control.is_some()
        };
        if !cached {
            let rows = self.arm_rows(arm);
            if rows.is_empty() {
                return Err(Error::Data(format!(
                    "no rows in arm {} to fit a conversion scorer",
                    arm
                )));
            }
            let x_arm = self.x.select_rows(&rows);
            let c_arm: Vec<f64> = rows.iter().map(|&i| self.c_ind[i]).collect();
            let tuned = tune_supervised(
                &x_arm,
                &c_arm,
                None,
                Task::Classification,
                self.grid,
                self.inner_folds,
                self.tune_seed(if arm == 1 { 1 } else { 2 }),
            )?;
            let model =
                GbtModel::fit_matrix(&x_arm, &c_arm, None, Task::Classification, &tuned.params)?;
            if arm == 1 {
                self.conv_treated = Some((tuned.params, model));
            } else {
                self.conv_control = Some((tuned.params, model));
            }
        }
        Ok(if arm == 1 {
            self.conv_treated.as_ref().unwrap()
        } else {
            self.conv_control.as_ref().unwrap()
        })
    }

    /// Tunes a converter-value regressor on `rows` of `design`, weighting
    /// each converter by its inverse predicted conversion probability.
    fn tune_value(
        &self,
        rows: &[usize],
        design: &Matrix,
        conv_preds: &[f64],
        component: u64,
    ) -> Result<GbtParams> {
        if rows.is_empty() {
            return Err(Error::Data("no converters available to fit a value model".into()));
        }
        let x_rows = design.select_rows(rows);
        let v_rows: Vec<f64> = rows.iter().map(|&i| self.v[i]).collect();
        let w: Vec<f64> = conv_preds
            .iter()
            .map(|&p| 1.0 / p.max(IPW_PROBABILITY_FLOOR))
            .collect();
        let tuned = tune_supervised(
            &x_rows,
            &v_rows,
            Some(&w),
            Task::Regression,
            self.grid,
            self.inner_folds,
            self.tune_seed(component),
        )?;
        Ok(tuned.params)
    }

    fn value_joint_params(&mut self) -> Result<GbtParams> {
        if self.value_joint.is_none() {
            let conv = self.conv_joint()?.1.clone();
            let rows: Vec<usize> = (0..self.train.n()).filter(|&i| self.c[i] == 1).collect();
            let conv_preds = conv.predict(&self.xt.select_rows(&rows))?;
            let params = self.tune_value(&rows, &self.xt, &conv_preds, 5)?;
            self.value_joint = Some(params);
        }
        Ok(self.value_joint.clone().unwrap())
    }

    fn value_arm_params(&mut self, arm: u8) -> Result<GbtParams> {
        let cached = if arm == 1 { &self.value_treated } else { &self.value_control };
        if let Some(p) = cached {
            return Ok(p.clone());
        }
        let conv = self.conv_arm(arm)?.1.clone();
        let rows: Vec<usize> = (0..self.train.n())
            .filter(|&i| self.t[i] == arm && self.c[i] == 1)
            .collect();
        if rows.is_empty() {
            return Err(Error::Data(format!(
                "no converters in arm {} to fit a value model",
                arm
            )));
        }
        let conv_preds = conv.predict(&self.x.select_rows(&rows))?;
        let params = self.tune_value(&rows, &self.x, &conv_preds, if arm == 1 { 3 } else { 4 })?;
        if arm == 1 {
            self.value_treated = Some(params.clone());
        } else {
            self.value_control = Some(params.clone());
        }
        Ok(params)
    }

    fn slearner_params(&mut self) -> Result<GbtParams> {
        if self.slearner.is_none() {
            let tuned = tune_slearner_tol(
                &self.x,
                &self.t_ind,
                &self.y,
                &self.y_star,
                self.grid,
                self.inner_folds,
                self.tune_seed(6),
            )?;
            self.slearner = Some(tuned.params);
        }
        Ok(self.slearner.clone().unwrap())
    }

    fn tlearner_params(&mut self) -> Result<GbtParams> {
        if self.tlearner.is_none() {
            let tuned = tune_tlearner_tol(
                &self.x,
                &self.t_ind,
                &self.y,
                &self.y_star,
                self.grid,
                self.inner_folds,
                self.tune_seed(7),
            )?;
            self.tlearner = Some(tuned.params);
        }
        Ok(self.tlearner.clone().unwrap())
    }

    fn dr_params(&mut self) -> Result<GbtParams> {
        if self.dr.is_none() {
            let y_dr = build_dr_transform(self.train, self.propensity)?.y_dr;
            let tuned = tune_regression_against(
                &self.x,
                &y_dr,
                &self.y_star,
                self.grid,
                self.inner_folds,
                self.tune_seed(8),
            )?;
            self.dr = Some(tuned.params);
        }
        Ok(self.dr.clone().unwrap())
    }

    /// Fits a complete targeting model for one architecture, tuning any
    /// components not already cached. The oracle needs the truth table.
    fn build(&mut self, arch: Architecture, truth: Option<&TruthTable>) -> Result<TargetingModel> {
        match arch {
            Architecture::HurdleSingle => {
                let conv = self.conv_joint()?.0.clone();
                let value = self.value_joint_params()?;
                fit_hurdle_single(self.train, &conv, &value)
            }
            Architecture::HurdleTwo => {
                let params = HurdleTwoParams {
                    conversion0: self.conv_arm(0)?.0.clone(),
                    conversion1: self.conv_arm(1)?.0.clone(),
                    value0: self.value_arm_params(0)?,
                    value1: self.value_arm_params(1)?,
                };
                fit_hurdle_two(self.train, &params)
            }
            Architecture::OnestageSingle => {
                let outcome = self.slearner_params()?;
                let conv = self.conv_arm(1)?.0.clone();
                fit_onestage_single(self.train, &outcome, &conv)
            }
            Architecture::OnestageTwo => {
                let outcome = self.tlearner_params()?;
                let conv = self.conv_arm(1)?.0.clone();
                fit_onestage_two(self.train, &outcome, &conv)
            }
            Architecture::OnestageDr => {
                let outcome = self.dr_params()?;
                let conv = self.conv_arm(1)?.0.clone();
                fit_onestage_dr(self.train, &outcome, &conv, self.propensity)
            }
            Architecture::Ate => make_ate_model(self.train),
            Architecture::Oracle => {
                let truth = truth.ok_or_else(|| {
                    Error::Config("the oracle architecture requires a truth table".into())
                })?;
                Ok(make_oracle_model(truth.clone()))
            }
        }
    }
}

/// Out-of-fold scores accumulated in dataset row order.
struct OofScores {
    n: usize,
    tau: Vec<f64>,
    p1: Vec<f64>,
    v1: Option<Vec<f64>>,
}

impl OofScores {
    fn new(n: usize) -> OofScores {
        OofScores {
            n,
            tau: vec![f64::NAN; n],
            p1: vec![f64::NAN; n],
            v1: None,
        }
    }

    fn scatter(&mut self, rows: &[usize], preds: &Predictions) {
        for (k, &i) in rows.iter().enumerate() {
            self.tau[i] = preds.tau_hat[k];
            self.p1[i] = preds.p1_hat[k];
        }
        if let Some(src) = preds.v1_hat.as_ref() {
            let dst = self.v1.get_or_insert_with(|| vec![f64::NAN; self.n]);
            for (k, &i) in rows.iter().enumerate() {
                dst[i] = src[k];
            }
        }
    }

    fn to_predictions(&self, ids: &[u64]) -> Predictions {
        Predictions {
            ids: ids.to_vec(),
            tau_hat: self.tau.clone(),
            p1_hat: self.p1.clone(),
            v1_hat: self.v1.clone(),
        }
    }
}

const STAGE_A_CATES: [&str; 2] = ["ate", "oracle"];
const STAGE_A_COSTS: [&str; 3] = ["rate", "single", "separate"];

/// All rows and prediction tables one seed contributes to the run.
struct SeedResult {
    stage_a: Vec<CampaignReport>,
    stage_b: Vec<CampaignReport>,
    stage_c: Vec<CampaignReport>,
    preds_a: Vec<(String, Predictions)>,
    preds_roster: Vec<(String, Predictions)>,
}

/// Score-quality columns for one report row.
struct ScoreMetrics {
    rmse: Option<f64>,
    tol: Option<f64>,
    brier: Option<f64>,
    auc: Option<f64>,
}

/// Effect metrics on all rows, conversion metrics on the treated arm where
/// a realized conversion label exists.
fn score_metrics(
    oof: &OofScores,
    ids: &[u64],
    y: &[f64],
    t: &[u8],
    c: &[u8],
    truth: &TruthTable,
    e: f64,
) -> Result<ScoreMetrics> {
    let rmse = rmse_vs_oracle(ids, &oof.tau, truth)?;
    let tol_v = tol(&oof.tau, y, t, e)?;
    let treated: Vec<usize> = (0..ids.len()).filter(|&i| t[i] == 1).collect();
    let (brier_v, auc_v) = if treated.is_empty() {
        (None, None)
    } else {
        let p_treated: Vec<f64> = treated.iter().map(|&i| oof.p1[i]).collect();
        let c_treated: Vec<u8> = treated.iter().map(|&i| c[i]).collect();
        (Some(brier(&p_treated, &c_treated)?), roc_auc(&p_treated, &c_treated)?)
    };
    Ok(ScoreMetrics {
        rmse: Some(rmse),
        tol: Some(tol_v),
        brier: brier_v,
        auc: auc_v,
    })
}

fn profit_row(
    policy: &str,
    architecture: &str,
    decisions: &[PolicyDecision],
    truth: &TruthTable,
    cost: &CostSpec,
    metrics: Option<&ScoreMetrics>,
) -> Result<CampaignReport> {
    let (profit, ft) = true_profit(decisions, truth, cost, ProfitMode::Expected)?;
    Ok(CampaignReport {
        policy: policy.to_string(),
        architecture: architecture.to_string(),
        profit,
        ft,
        rmse: metrics.and_then(|m| m.rmse),
        tol: metrics.and_then(|m| m.tol),
        brier: metrics.and_then(|m| m.brier),
        auc: metrics.and_then(|m| m.auc),
    })
}

fn ate_constants(model: &TargetingModel) -> (f64, f64, f64) {
    match model {
        TargetingModel::AteConstant { tau, p1, v1 } => (*tau, *p1, v1.unwrap_or(0.0)),
        _ => unreachable!("make_ate_model returns the constant architecture"),
    }
}

/// Runs all three stages for one campaign draw.
fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedResult> {
    let ctx_a = format!("stage A seed {}", seed);
    let err_a = |e: Error| with_context(e, &ctx_a);
    let campaign = simulate(&cfg.sim, seed).map_err(err_a)?;
    let data = &campaign.data;
    let truth = &campaign.truth;
    let n = data.n();
    let ids = data.ids();
    let x_all = data.features();
    let t_all = data.treatments();
    let c_all = data.conversions();
    let y_all = data.outcomes();
    let percentage = cfg.cost.requires_value();

    let folds = FoldPlan::stratified(data, cfg.outer_folds, seed).map_err(err_a)?;

    // Stage A accumulators: one effect series per source, one conversion
    // series per cost model, decisions per combination.
    let mut cate_oof: HashMap<&str, Vec<f64>> =
        STAGE_A_CATES.iter().map(|&s| (s, vec![f64::NAN; n])).collect();
    let mut cost_oof: HashMap<&str, Vec<f64>> =
        STAGE_A_COSTS.iter().map(|&s| (s, vec![f64::NAN; n])).collect();
    let mut combo_decisions: HashMap<(&str, &str), Vec<PolicyDecision>> = HashMap::new();
    for &cate in &STAGE_A_CATES {
        for &cost in &STAGE_A_COSTS {
            combo_decisions.insert((cate, cost), Vec::with_capacity(n));
        }
    }

    // Roster accumulators.
    let mut arch_oof: Vec<OofScores> = cfg.roster.iter().map(|_| OofScores::new(n)).collect();
    let mut decisions_b: Vec<Vec<PolicyDecision>> = vec![Vec::with_capacity(n); cfg.roster.len()];
    let mut decisions_c_an: Vec<Vec<PolicyDecision>> =
        vec![Vec::with_capacity(n); cfg.roster.len()];
    let mut decisions_c_emp: Vec<Vec<PolicyDecision>> =
        vec![Vec::with_capacity(n); cfg.roster.len()];
    let mut seen = vec![false; n];

    for f in 0..cfg.outer_folds {
        let train_rows = folds.train_rows(f);
        let eval_rows = folds.test_rows(f);
        for &i in &eval_rows {
            if seen[i] {
                return Err(Error::Data(format!(
                    "stage A seed {}: row {} evaluated in more than one fold",
                    seed, i
                )));
            }
            seen[i] = true;
        }
        let train = data.subset(&train_rows);
        let eval_ids: Vec<u64> = eval_rows.iter().map(|&i| ids[i]).collect();
        let x_eval = x_all.select_rows(&eval_rows);
        let m = eval_rows.len();
        let seed_base = seed.wrapping_mul(1000).wrapping_add(f as u64 * 10);
        let mut ff = FoldComponents::new(
            &train,
            &cfg.grid,
            cfg.inner_folds,
            cfg.sim.e,
            cfg.propensity(),
            seed_base,
        );

        // Stage A inputs: constants from the training fold, model-based
        // conversion probabilities on the evaluation fold.
        let ate_model = make_ate_model(&train).map_err(err_a)?;
        let (tau_const, p1_const, v1_const) = ate_constants(&ate_model);
        let x_eval_t1 = x_eval.with_constant_column(1.0);
        let p1_single = ff
            .conv_joint()
            .map_err(err_a)?
            .1
            .predict(&x_eval_t1)
            .map_err(err_a)?;
        let p1_separate = ff.conv_arm(1).map_err(err_a)?.1.predict(&x_eval).map_err(err_a)?;
        let p1_rate = vec![p1_const; m];
        let v1_const_col = if percentage { Some(vec![v1_const; m]) } else { None };

        for &cate in &STAGE_A_CATES {
            let tau: Vec<f64> = match cate {
                "ate" => vec![tau_const; m],
                _ => {
                    let mut out = Vec::with_capacity(m);
                    for id in &eval_ids {
                        let r = truth.get(*id).ok_or_else(|| {
                            Error::Data(format!("stage A seed {}: id {} missing from truth", seed, id))
                        })?;
                        out.push(r.tau);
                    }
                    out
                }
            };
            let dst = cate_oof.get_mut(cate).unwrap();
            for (k, &i) in eval_rows.iter().enumerate() {
                dst[i] = tau[k];
            }
            for &cost in &STAGE_A_COSTS {
                let p1: &[f64] = match cost {
                    "rate" => &p1_rate,
                    "single" => &p1_single,
                    _ => &p1_separate,
                };
                if cate == STAGE_A_CATES[0] {
                    let dst = cost_oof.get_mut(cost).unwrap();
                    for (k, &i) in eval_rows.iter().enumerate() {
                        dst[i] = p1[k];
                    }
                }
                let decided =
                    analytical_policy(&eval_ids, &tau, p1, v1_const_col.as_deref(), &cfg.cost)
                        .map_err(err_a)?;
                combo_decisions.get_mut(&(cate, cost)).unwrap().extend(decided);
            }
        }

        // Stages B and C: every rostered architecture on this fold.
        for (a_idx, &arch) in cfg.roster.iter().enumerate() {
            let ctx_b = format!("stage B seed {} ({})", seed, arch.label());
            let err_b = |e: Error| with_context(e, &ctx_b);
            let model = ff.build(arch, Some(truth)).map_err(err_b)?;
            let preds = model.predict(&x_eval, &eval_ids).map_err(err_b)?;
            arch_oof[a_idx].scatter(&eval_rows, &preds);

            decisions_b[a_idx].extend(
                analytical_policy(
                    &eval_ids,
                    &preds.tau_hat,
                    &p1_rate,
                    v1_const_col.as_deref(),
                    &cfg.cost,
                )
                .map_err(err_b)?,
            );

            if arch.is_fitted() {
                let ctx_c = format!("stage C seed {} ({})", seed, arch.label());
                let err_c = |e: Error| with_context(e, &ctx_c);
                decisions_c_an[a_idx].extend(
                    analytical_policy(
                        &eval_ids,
                        &preds.tau_hat,
                        &preds.p1_hat,
                        preds.v1_hat.as_deref(),
                        &cfg.cost,
                    )
                    .map_err(err_c)?,
                );

                let train_ids: Vec<u64> = train_rows.iter().map(|&i| ids[i]).collect();
                let train_preds = model.predict(&ff.x, &train_ids).map_err(err_c)?;
                let theta = empirical_policy_threshold(
                    &train_preds.tau_hat,
                    &ff.t,
                    &ff.c,
                    &ff.v,
                    &cfg.cost,
                    cfg.sim.e,
                )
                .map_err(err_c)?;
                let targets = apply_threshold(&preds.tau_hat, theta);
                decisions_c_emp[a_idx].extend(
                    eval_ids
                        .iter()
                        .zip(&preds.tau_hat)
                        .zip(&targets)
                        .map(|((&id, &tau), &target)| PolicyDecision {
                            id,
                            target,
                            expected_lhs: tau,
                            expected_cost: theta,
                        }),
                );
            }
        }
    }

    if seen.iter().any(|&s| !s) {
        return Err(Error::Data(format!(
            "stage A seed {}: some rows were never scored out of fold",
            seed
        )));
    }

    // Stage A rows: holding out nothing (baseline), then every effect
    // source crossed with every cost model.
    let mut stage_a = Vec::new();
    let baseline: Vec<PolicyDecision> = ids
        .iter()
        .map(|&id| PolicyDecision {
            id,
            target: false,
            expected_lhs: 0.0,
            expected_cost: 0.0,
        })
        .collect();
    stage_a.push(profit_row("baseline", "none", &baseline, truth, &cfg.cost, None).map_err(err_a)?);
    let mut preds_a = Vec::new();
    for &cate in &STAGE_A_CATES {
        for &cost in &STAGE_A_COSTS {
            let label = format!("{}/{}", cate, cost);
            let oof = OofScores {
                n,
                tau: cate_oof[cate].clone(),
                p1: cost_oof[cost].clone(),
                v1: None,
            };
            let metrics =
                score_metrics(&oof, &ids, &y_all, &t_all, &c_all, truth, cfg.sim.e).map_err(err_a)?;
            stage_a.push(
                profit_row(
                    "analytical",
                    &label,
                    &combo_decisions[&(cate, cost)],
                    truth,
                    &cfg.cost,
                    Some(&metrics),
                )
                .map_err(err_a)?,
            );
            preds_a.push((label, oof.to_predictions(&ids)));
        }
    }

    // Stage B and C rows.
    let mut stage_b = Vec::new();
    let mut stage_c = Vec::new();
    let mut preds_roster = Vec::new();
    for (a_idx, &arch) in cfg.roster.iter().enumerate() {
        let ctx_b = format!("stage B seed {} ({})", seed, arch.label());
        let metrics = score_metrics(&arch_oof[a_idx], &ids, &y_all, &t_all, &c_all, truth, cfg.sim.e)
            .map_err(|e| with_context(e, &ctx_b))?;
        stage_b.push(
            profit_row(
                "analytical",
                arch.label(),
                &decisions_b[a_idx],
                truth,
                &cfg.cost,
                Some(&metrics),
            )
            .map_err(|e| with_context(e, &ctx_b))?,
        );
        preds_roster.push((arch.label().to_string(), arch_oof[a_idx].to_predictions(&ids)));
        if arch.is_fitted() {
            let ctx_c = format!("stage C seed {} ({})", seed, arch.label());
            let err_c = |e: Error| with_context(e, &ctx_c);
            stage_c.push(
                profit_row(
                    "analytical",
                    arch.label(),
                    &decisions_c_an[a_idx],
                    truth,
                    &cfg.cost,
                    Some(&metrics),
                )
                .map_err(err_c)?,
            );
            stage_c.push(
                profit_row(
                    "empirical",
                    arch.label(),
                    &decisions_c_emp[a_idx],
                    truth,
                    &cfg.cost,
                    Some(&metrics),
                )
                .map_err(err_c)?,
            );
        }
    }

    Ok(SeedResult {
        stage_a,
        stage_b,
        stage_c,
        preds_a,
        preds_roster,
    })
}

/// Averages per-seed report rows by (policy, architecture). Metric columns
/// stay filled only when every seed produced a value.
fn mean_report(per_seed: &[Vec<CampaignReport>]) -> Result<Vec<CampaignReport>> {
    let mut grouped: BTreeMap<(String, String), Vec<&CampaignReport>> = BTreeMap::new();
    for rows in per_seed {
        for row in rows {
            grouped
                .entry((row.policy.clone(), row.architecture.clone()))
                .or_default()
                .push(row);
        }
    }
    fn mean_opt(vals: impl Iterator<Item = Option<f64>>) -> Option<f64> {
        let collected: Option<Vec<f64>> = vals.collect();
        collected.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }
    let mut out = Vec::new();
    for ((policy, architecture), rows) in grouped {
        if rows.len() != per_seed.len() {
            return Err(Error::Data(format!(
                "row ({}, {}) missing from some seeds",
                policy, architecture
            )));
        }
        let k = rows.len() as f64;
        out.push(CampaignReport {
            policy,
            architecture,
            profit: rows.iter().map(|r| r.profit).sum::<f64>() / k,
            ft: rows.iter().map(|r| r.ft).sum::<f64>() / k,
            rmse: mean_opt(rows.iter().map(|r| r.rmse)),
            tol: mean_opt(rows.iter().map(|r| r.tol)),
            brier: mean_opt(rows.iter().map(|r| r.brier)),
            auc: mean_opt(rows.iter().map(|r| r.auc)),
        });
    }
    Ok(out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn manifest_text(cfg: &ExperimentConfig, stage: Option<&str>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "format-version 1");
    if let Some(stage) = stage {
        let _ = writeln!(s, "stage {}", stage);
    }
    let _ = writeln!(s, "crate-version {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "rng ChaCha8");
    let _ = writeln!(s, "seeds {}", join(&cfg.seeds));
    let _ = writeln!(s, "config-sha256 {}", config_sha256(cfg));
    let _ = writeln!(s, "config:");
    for line in config_to_string(cfg).lines() {
        let _ = writeln!(s, "  {}", line);
    }
    s
}

/// Runs the full three-stage experiment and writes reports, predictions
/// and manifests under `out_dir`.
pub fn cmd_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    cfg.validate()?;
    ensure_dir(out_dir)?;
    let stages = ["stage_a", "stage_b", "stage_c"];
    for stage in &stages {
        ensure_dir(&out_dir.join(stage))?;
    }
    write_text(&out_dir.join("manifest.txt"), &manifest_text(cfg, None))?;
    write_text(&out_dir.join("config.txt"), &config_to_string(cfg))?;

    let mut per_seed: Vec<(u64, SeedResult)> = Vec::new();
    for &seed in &cfg.seeds {
        per_seed.push((seed, run_seed(cfg, seed)?));
    }

    for (stage_idx, stage) in stages.iter().enumerate() {
        let dir = out_dir.join(stage);
        let mut seed_rows: Vec<Vec<CampaignReport>> = Vec::new();
        for (seed, result) in &per_seed {
            let rows = match stage_idx {
                0 => &result.stage_a,
                1 => &result.stage_b,
                _ => &result.stage_c,
            };
            let report = assemble_report(rows.clone())?;
            write_report_csv(&dir.join(format!("report_seed_{}.csv", seed)), &report)?;
            seed_rows.push(report);

            let preds = match stage_idx {
                0 => &result.preds_a,
                _ => &result.preds_roster,
            };
            let named: Vec<(&str, &Predictions)> =
                preds.iter().map(|(name, p)| (name.as_str(), p)).collect();
            write_preds_csv(&dir.join(format!("preds_seed_{}.csv", seed)), &named)?;
            if *seed == cfg.seeds[0] {
                write_preds_csv(&dir.join("preds.csv"), &named)?;
            }
        }
        let mean = assemble_report(mean_report(&seed_rows)?)?;
        write_report_csv(&dir.join("report.csv"), &mean)?;
        write_text(&dir.join("manifest.txt"), &manifest_text(cfg, Some(stage)))?;
    }
    Ok(())
}

/// Draws campaigns and writes the observable and truth tables per seed.
pub fn cmd_simulate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    cfg.sim.validate()?;
    if cfg.seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    ensure_dir(out_dir)?;
    write_text(&out_dir.join("manifest.txt"), &manifest_text(cfg, None))?;
    for &seed in &cfg.seeds {
        let campaign = simulate(&cfg.sim, seed)
            .map_err(|e| with_context(e, &format!("simulation seed {}", seed)))?;
        campaign
            .data
            .write_csv(&out_dir.join(format!("customers_seed_{}.csv", seed)))?;
        campaign
            .truth
            .write_csv(&out_dir.join(format!("truth_seed_{}.csv", seed)))?;
    }
    Ok(())
}

/// Tunes and fits one architecture on a full dataset and saves the model.
/// The oracle is instead rebuilt from a truth table, and needs no data.
pub fn cmd_fit(
    cfg: &ExperimentConfig,
    arch: Architecture,
    data_path: Option<&Path>,
    truth_path: Option<&Path>,
    seed: u64,
    out_path: &Path,
) -> Result<()> {
    cfg.grid.validate()?;
    if cfg.inner_folds < 2 {
        return Err(Error::Config("inner_folds must be at least 2".into()));
    }
    if matches!(arch, Architecture::Oracle) {
        let tp = truth_path.ok_or_else(|| {
            Error::Config("the oracle architecture is built from a truth table; pass --truth".into())
        })?;
        let truth = TruthTable::load_csv(tp)?;
        return save_model(out_path, &make_oracle_model(truth));
    }
    let dp = data_path
        .ok_or_else(|| Error::Config("fitting a model requires a dataset; pass --data".into()))?;
    let data = Dataset::load_csv(dp)?;
    let mut ff = FoldComponents::new(
        &data,
        &cfg.grid,
        cfg.inner_folds,
        cfg.sim.e,
        cfg.propensity(),
        seed,
    );
    let model = ff.build(arch, None)?;
    save_model(out_path, &model)
}

/// Scores a dataset with a saved model, applies the analytical rule, and
/// writes the decision list. Returns how many customers were targeted.
pub fn cmd_decide(
    model_path: &Path,
    data_path: &Path,
    cost: &CostSpec,
    out_path: &Path,
) -> Result<usize> {
    cost.validate()?;
    let model = load_model(model_path)?;
    let data = Dataset::load_csv(data_path)?;
    let ids = data.ids();
    let preds = model.predict(&data.features(), &ids)?;
    let decisions =
        analytical_policy(&ids, &preds.tau_hat, &preds.p1_hat, preds.v1_hat.as_deref(), cost)?;
    let targeted = decisions.iter().filter(|d| d.target).count();
    write_decisions_csv(out_path, &decisions)?;
    Ok(targeted)
}

/// Scores a dataset with a saved model and reports profit and score
/// quality against a truth table. Returns the rendered report text.
pub fn cmd_evaluate(
    model_path: &Path,
    data_path: &Path,
    truth_path: &Path,
    cost: &CostSpec,
    e: f64,
    out_csv: Option<&Path>,
) -> Result<String> {
    cost.validate()?;
    let model = load_model(model_path)?;
    let data = Dataset::load_csv(data_path)?;
    let truth = TruthTable::load_csv(truth_path)?;
    let ids = data.ids();
    let preds = model.predict(&data.features(), &ids)?;
    let decisions =
        analytical_policy(&ids, &preds.tau_hat, &preds.p1_hat, preds.v1_hat.as_deref(), cost)?;
    let oof = OofScores {
        n: ids.len(),
        tau: preds.tau_hat.clone(),
        p1: preds.p1_hat.clone(),
        v1: preds.v1_hat.clone(),
    };
    let metrics = score_metrics(
        &oof,
        &ids,
        &data.outcomes(),
        &data.treatments(),
        &data.conversions(),
        &truth,
        e,
    )?;
    let row = profit_row(
        "analytical",
        model.architecture(),
        &decisions,
        &truth,
        cost,
        Some(&metrics),
    )?;
    let report = assemble_report(vec![row])?;
    if let Some(path) = out_csv {
        write_report_csv(path, &report)?;
    }
    Ok(crate::evaluation::report_to_text(&report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.sim.n = 600;
        cfg.seeds = vec![1, 2];
        cfg.outer_folds = 2;
        cfg.inner_folds = 2;
        cfg.grid = HyperGrid {
            n_trees: vec![20],
            max_depth: vec![2],
            learning_rate: vec![0.1],
            min_leaf_weight: vec![10.0],
        };
        cfg
    }

    #[test]
    fn config_renders_and_parses_round_trip() {
        let cfg = ExperimentConfig::default();
        let text = config_to_string(&cfg);
        let parsed = parse_config(&text).unwrap();
        assert_eq!(config_to_string(&parsed), text);
        assert_eq!(config_sha256(&parsed), config_sha256(&cfg));
    }

    #[test]
    fn config_defaults_fill_unspecified_keys() {
        let cfg = parse_config("n = 500\nseeds = 7\n# comment\n\ncost_kappa = 0.5\n").unwrap();
        assert_eq!(cfg.sim.n, 500);
        assert_eq!(cfg.seeds, vec![7]);
        assert_eq!(cfg.cost.kappa, 0.5);
        assert_eq!(cfg.cost.incentive, IncentiveCost::Fixed(20.0));
        assert_eq!(cfg.outer_folds, 5);
        assert_eq!(cfg.inner_folds, 10);
        assert_eq!(cfg.roster.len(), 7);
    }

    #[test]
    fn config_hash_changes_with_any_setting() {
        let base = config_sha256(&ExperimentConfig::default());
        let mut cfg = ExperimentConfig::default();
        cfg.sim.n = 19999;
        assert_ne!(config_sha256(&cfg), base);
        let mut cfg = ExperimentConfig::default();
        cfg.cost.kappa = 0.01;
        assert_ne!(config_sha256(&cfg), base);
        let mut cfg = ExperimentConfig::default();
        cfg.roster.pop();
        assert_ne!(config_sha256(&cfg), base);
    }

    #[test]
    fn config_rejects_malformed_input() {
        assert!(matches!(parse_config("frobnicate = 3\n"), Err(Error::Config(_))));
        assert!(matches!(parse_config("n = 500\nn = 600\n"), Err(Error::Config(_))));
        assert!(matches!(parse_config("n 500\n"), Err(Error::Config(_))));
        assert!(matches!(parse_config("seeds = 1,1\n"), Err(Error::Config(_))));
        assert!(matches!(parse_config("roster = ate,ate\n"), Err(Error::Config(_))));
        assert!(matches!(
            parse_config("cost_kind = percentage\ncost_delta = 5\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            parse_config("cost_kind = none\ncost_eta = 0.1\n"),
            Err(Error::Config(_))
        ));
        // A percentage cost cannot be priced for architectures without a
        // value scorer.
        assert!(matches!(
            parse_config("cost_kind = percentage\nroster = onestage-dr\n"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn context_wrapping_keeps_exit_codes() {
        let e = with_context(Error::Config("bad".into()), "stage A seed 3");
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("stage A seed 3"));
        let e = with_context(Error::Data("bad".into()), "stage B seed 1");
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn mean_report_averages_and_demands_full_coverage() {
        let row = |profit: f64, rmse: Option<f64>| CampaignReport {
            policy: "analytical".into(),
            architecture: "ate".into(),
            profit,
            ft: 0.5,
            rmse,
            tol: Some(1.0),
            brier: None,
            auc: None,
        };
        let mean = mean_report(&[vec![row(1.0, Some(2.0))], vec![row(3.0, None)]]).unwrap();
        assert_eq!(mean.len(), 1);
        assert_eq!(mean[0].profit, 2.0);
        assert_eq!(mean[0].rmse, None);
        assert_eq!(mean[0].tol, Some(1.0));

        let mut other = row(1.0, None);
        other.architecture = "oracle".into();
        assert!(mean_report(&[vec![row(1.0, None)], vec![other]]).is_err());
    }

    #[test]
    fn experiment_runs_end_to_end_and_is_deterministic() {
        let cfg = tiny_config();
        let dir = std::env::temp_dir().join(format!("uptarget-exp-{}", std::process::id()));
        let run1 = dir.join("run1");
        let run2 = dir.join("run2");
        cmd_experiment(&cfg, &run1).unwrap();
        cmd_experiment(&cfg, &run2).unwrap();

        for stage in ["stage_a", "stage_b", "stage_c"] {
            let r1 = fs::read(run1.join(stage).join("report.csv")).unwrap();
            let r2 = fs::read(run2.join(stage).join("report.csv")).unwrap();
            assert_eq!(r1, r2, "{} report must be byte-identical across reruns", stage);
            let p1 = fs::read(run1.join(stage).join("preds.csv")).unwrap();
            let ps = fs::read(run1.join(stage).join("preds_seed_1.csv")).unwrap();
            assert_eq!(p1, ps, "preds.csv mirrors the first seed");
            for seed in [1, 2] {
                assert!(run1.join(stage).join(format!("report_seed_{}.csv", seed)).exists());
            }
        }

        let report = fs::read_to_string(run1.join("stage_a").join("report.csv")).unwrap();
        let lines: Vec<&str> = report.lines().collect();
        // Header, baseline, and the six source/cost combinations.
        assert_eq!(lines.len(), 8);
        assert!(lines.iter().any(|l| l.starts_with("baseline,none,")));
        for combo in ["ate/rate", "ate/single", "ate/separate", "oracle/rate"] {
            assert!(
                lines.iter().any(|l| l.contains(&format!("analytical,{},", combo))),
                "missing stage A row {}",
                combo
            );
        }

        let report = fs::read_to_string(run1.join("stage_b").join("report.csv")).unwrap();
        assert_eq!(report.lines().count(), 1 + cfg.roster.len());
        for row in report.lines().skip(1) {
            let ft: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
            assert!((0.0..=1.0).contains(&ft), "ft out of range in {}", row);
        }

        let report = fs::read_to_string(run1.join("stage_c").join("report.csv")).unwrap();
        // Five fitted architectures, analytical and empirical policies.
        assert_eq!(report.lines().count(), 11);
        assert!(report.contains("empirical,onestage-dr,"));
        assert!(!report.contains(",oracle,"));

        let manifest = fs::read_to_string(run1.join("manifest.txt")).unwrap();
        assert!(manifest.contains(&format!("config-sha256 {}", config_sha256(&cfg))));
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn simulate_fit_decide_evaluate_chain() {
        let mut cfg = tiny_config();
        cfg.seeds = vec![5];
        let dir = std::env::temp_dir().join(format!("uptarget-chain-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        cmd_simulate(&cfg, &dir).unwrap();
        let customers = dir.join("customers_seed_5.csv");
        let truth = dir.join("truth_seed_5.csv");
        assert!(customers.exists() && truth.exists());

        let model_path = dir.join("ate.model");
        cmd_fit(&cfg, Architecture::Ate, Some(&customers), None, 5, &model_path).unwrap();
        let decisions_path = dir.join("decisions.csv");
        let targeted =
            cmd_decide(&model_path, &customers, &cfg.cost, &decisions_path).unwrap();
        let text = fs::read_to_string(&decisions_path).unwrap();
        assert_eq!(text.lines().count(), 1 + cfg.sim.n);
        // A constant score targets everyone or no one.
        assert!(targeted == 0 || targeted == cfg.sim.n);

        let rendered =
            cmd_evaluate(&model_path, &customers, &truth, &cfg.cost, cfg.sim.e, None).unwrap();
        assert!(rendered.contains("ate"));

        let oracle_path = dir.join("oracle.model");
        cmd_fit(&cfg, Architecture::Oracle, None, Some(&truth), 5, &oracle_path).unwrap();
        assert!(matches!(
            cmd_fit(&cfg, Architecture::Oracle, Some(&customers), None, 5, &oracle_path),
            Err(Error::Config(_))
        ));
        fs::remove_dir_all(&dir).ok();
    }
}
