//! Targeting decision rules under response-dependent costs.
//!
//! The core rule compares the expected profit of treating a customer
//! against not treating them. With conversion probabilities p0/p1 and
//! conditional values v0/v1, treating pays off when
//! p1*v1 - p0*v0 > p1*delta_eff + kappa: the incentive cost delta is only
//! realized on conversion, so it enters discounted by p1, while the
//! contact cost kappa is spent regardless. The incentive can be absent, a
//! fixed amount, or a percentage of the treated value (a relative
//! discount coupon). Ties are never targeted: zero expected gain does not
//! justify action.
//!
//! Two policy constructions build on the rule: the analytical policy
//! applies it with model estimates of the effect, conversion probability,
//! and value; the empirical policy ignores costs at the modeling stage
//! and instead picks the profit-maximizing score threshold on training
//! data with an inverse-propensity-weighted profit estimate.
//!
//! The retention-campaign profit formula of Neslin et al. is a special
//! case: extended with an adverse-reaction probability lambda, its
//! per-customer bracket matches the rule under the mapping
//! p1 = 1 - beta*(1-gamma), p1 - p0 = beta*gamma - (1-beta)*lambda, with
//! the contact-cost term matching exactly when lambda = 0 or kappa = 0.

use crate::error::{Error, Result};
use std::io::{BufWriter, Write};
use std::path::Path;

/// The incentive promised to a targeted customer, realized on conversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IncentiveCost {
    None,
    Fixed(f64),
    Percentage(f64),
}

/// Cost structure of a campaign contact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSpec {
    pub incentive: IncentiveCost,
    pub kappa: f64,
}

impl CostSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::Config(format!("kappa must be non-negative, got {}", self.kappa)));
        }
        match self.incentive {
            IncentiveCost::None => Ok(()),
            IncentiveCost::Fixed(d) if d >= 0.0 && d.is_finite() => Ok(()),
            IncentiveCost::Fixed(d) => {
                Err(Error::Config(format!("delta must be non-negative, got {}", d)))
            }
            IncentiveCost::Percentage(eta) if (0.0..1.0).contains(&eta) => Ok(()),
            IncentiveCost::Percentage(eta) => {
                Err(Error::Config(format!("eta must be in [0,1), got {}", eta)))
            }
        }
    }

    /// Realized incentive cost given the treated value.
    pub fn effective_delta(&self, v1: f64) -> f64 {
        match self.incentive {
            IncentiveCost::None => 0.0,
            IncentiveCost::Fixed(d) => d,
            IncentiveCost::Percentage(eta) => eta * v1,
        }
    }

    /// Expected cost of targeting: conversion-discounted incentive plus
    /// the unconditional contact cost.
    pub fn expected_cost(&self, p1: f64, v1: f64) -> f64 {
        p1 * self.effective_delta(v1) + self.kappa
    }

    pub fn requires_value(&self) -> bool {
        matches!(self.incentive, IncentiveCost::Percentage(_))
    }
}

/// Outcome of evaluating the rule for one customer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleEval {
    pub target: bool,
    /// Expected incremental profit p1*v1 - p0*v0.
    pub lhs: f64,
    /// Expected cost p1*delta_eff + kappa.
    pub cost: f64,
}

/// A per-customer decision ready for export.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyDecision {
    pub id: u64,
    pub target: bool,
    pub expected_lhs: f64,
    pub expected_cost: f64,
}

fn validate_potentials(p1: f64, v1: f64, p0: f64, v0: f64) -> Result<()> {
    if !((0.0..=1.0).contains(&p0) && (0.0..=1.0).contains(&p1)) {
        return Err(Error::Data(format!("probabilities outside [0,1]: p0={}, p1={}", p0, p1)));
    }
    if !(v0 >= 0.0 && v0.is_finite() && v1 >= 0.0 && v1.is_finite()) {
        return Err(Error::Data(format!("values must be non-negative: v0={}, v1={}", v0, v1)));
    }
    Ok(())
}

/// Evaluates the targeting rule: target iff the expected incremental
/// profit strictly exceeds the expected cost.
pub fn decide(p1: f64, v1: f64, p0: f64, v0: f64, cost: &CostSpec) -> Result<RuleEval> {
    validate_potentials(p1, v1, p0, v0)?;
    cost.validate()?;
    let lhs = p1 * v1 - p0 * v0;
    let rhs = cost.expected_cost(p1, v1);
    Ok(RuleEval {
        target: lhs > rhs,
        lhs,
        cost: rhs,
    })
}

/// Evaluates the rule under a minimum return-on-ad-spend constraint:
/// target iff lhs / cost >= target_roas. Zero expected cost means
/// infinite return, so a positive lhs targets unconditionally and a
/// non-positive one never does.
pub fn decide_roas(
    p1: f64,
    v1: f64,
    p0: f64,
    v0: f64,
    cost: &CostSpec,
    target_roas: f64,
) -> Result<RuleEval> {
    validate_potentials(p1, v1, p0, v0)?;
    cost.validate()?;
    if !(target_roas >= 0.0 && target_roas.is_finite()) {
        return Err(Error::Config(format!(
            "target_roas must be non-negative, got {}",
            target_roas
        )));
    }
    let lhs = p1 * v1 - p0 * v0;
    let rhs = cost.expected_cost(p1, v1);
    let target = if rhs == 0.0 {
        lhs > 0.0
    } else {
        lhs >= target_roas * rhs
    };
    Ok(RuleEval {
        target,
        lhs,
        cost: rhs,
    })
}

/// Applies the rule with model estimates: target iff tau_hat exceeds the
/// expected cost built from the estimated conversion probability (and,
/// for percentage incentives, the estimated treated value).
pub fn analytical_policy(
    ids: &[u64],
    tau_hat: &[f64],
    p1_hat: &[f64],
    v1_hat: Option<&[f64]>,
    cost: &CostSpec,
) -> Result<Vec<PolicyDecision>> {
    cost.validate()?;
    let n = ids.len();
    if tau_hat.len() != n || p1_hat.len() != n {
        return Err(Error::Data("prediction vectors must align with ids".into()));
    }
    let v1 = match (cost.requires_value(), v1_hat) {
        (true, None) => {
            return Err(Error::Config(
                "percentage incentive cost requires a value model, but the architecture provides none"
                    .into(),
            ))
        }
        (_, Some(v)) if v.len() != n => {
            return Err(Error::Data("value predictions must align with ids".into()))
        }
        (_, v) => v,
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let v1_i = v1.map(|v| v[i]).unwrap_or(0.0);
        let expected_cost = cost.expected_cost(p1_hat[i].clamp(0.0, 1.0), v1_i.max(0.0));
        out.push(PolicyDecision {
            id: ids[i],
            target: tau_hat[i] > expected_cost,
            expected_lhs: tau_hat[i],
            expected_cost,
        });
    }
    Ok(out)
}

/// One candidate threshold and its estimated campaign profit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdCandidate {
    pub threshold: f64,
    pub profit: f64,
}

/// Estimates the training profit of every threshold policy "target iff
/// score > threshold". Candidates are the unique score values plus
/// negative infinity (target all), so k unique scores yield k+1 policies.
/// Profit uses the inverse-propensity policy-value estimate under known
/// assignment probability e: matching rows contribute their realized
/// profit (minus realized costs when treated) scaled by 1/e or 1/(1-e).
pub fn empirical_policy_sweep(
    scores: &[f64],
    t: &[u8],
    c: &[u8],
    v: &[f64],
    cost: &CostSpec,
    e: f64,
) -> Result<Vec<ThresholdCandidate>> {
    cost.validate()?;
    let n = scores.len();
    if n == 0 {
        return Err(Error::Data("empty training set for threshold search".into()));
    }
    if t.len() != n || c.len() != n || v.len() != n {
        return Err(Error::Data("score and outcome vectors must align".into()));
    }
    if !(e > 0.0 && e < 1.0) {
        return Err(Error::Config(format!("assignment probability must be in (0,1), got {}", e)));
    }
    // Per-row contribution when the policy matches the observed arm.
    let mut contrib = Vec::with_capacity(n);
    for i in 0..n {
        let y = v[i];
        let a = if t[i] == 1 {
            let realized_cost = c[i] as f64 * cost.effective_delta(v[i]) + cost.kappa;
            (y - realized_cost) / e
        } else {
            y / (1.0 - e)
        };
        contrib.push(a);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    // Start from target-none: only untreated rows match.
    let mut profit = 0.0;
    for i in 0..n {
        if t[i] == 0 {
            profit += contrib[i];
        }
    }
    let mut out = Vec::new();
    let mut pos = 0usize;
    while pos <= n {
        let threshold = if pos == 0 {
            scores[order[0]]
        } else if pos == n {
            f64::NEG_INFINITY
        } else {
            scores[order[pos]]
        };
        out.push(ThresholdCandidate { threshold, profit });
        if pos == n {
            break;
        }
        // Lower the threshold past the next group of tied scores: those
        // rows flip from untargeted to targeted.
        let group_score = scores[order[pos]];
        while pos < n && scores[order[pos]] == group_score {
            let i = order[pos];
            if t[i] == 1 {
                profit += contrib[i];
            } else {
                profit -= contrib[i];
            }
            pos += 1;
        }
    }
    Ok(out)
}

/// Picks the profit-maximizing threshold from the sweep; ties go to the
/// higher threshold (target fewer customers).
pub fn empirical_policy_threshold(
    scores: &[f64],
    t: &[u8],
    c: &[u8],
    v: &[f64],
    cost: &CostSpec,
    e: f64,
) -> Result<f64> {
    let sweep = empirical_policy_sweep(scores, t, c, v, cost, e)?;
    let mut best = &sweep[0];
    for cand in &sweep[1..] {
        if cand.profit > best.profit {
            best = cand;
        }
    }
    Ok(best.threshold)
}

/// Applies a threshold policy: target iff score strictly exceeds it.
pub fn apply_threshold(scores: &[f64], threshold: f64) -> Vec<bool> {
    scores.iter().map(|s| *s > threshold).collect()
}

/// Parameters of the generalized retention-campaign profit formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChurnParams {
    /// Probability that a customer plans to churn.
    pub beta: f64,
    /// Probability of accepting the incentive and staying.
    pub gamma: f64,
    /// Probability of reacting adversely and churning because contacted.
    pub lambda: f64,
    /// Customer lifetime value.
    pub value: f64,
    pub delta: f64,
    pub kappa: f64,
    /// Population size, targeted ratio, and fixed campaign cost.
    pub n: f64,
    pub alpha: f64,
    pub fixed_cost: f64,
}

impl ChurnParams {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("lambda", self.lambda),
            ("alpha", self.alpha),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{} must be in [0,1], got {}", name, p)));
            }
        }
        if self.gamma + self.lambda > 1.0 {
            return Err(Error::Config(format!(
                "gamma + lambda must not exceed 1, got {}",
                self.gamma + self.lambda
            )));
        }
        if !(self.value >= 0.0 && self.delta >= 0.0 && self.kappa >= 0.0 && self.n >= 0.0) {
            return Err(Error::Config("churn parameters must be non-negative".into()));
        }
        Ok(())
    }

    /// Per-customer expected profit bracket of the generalized formula.
    pub fn per_customer_profit(&self) -> f64 {
        let b = self.beta;
        let g = self.gamma;
        let l = self.lambda;
        let v = self.value;
        let d = self.delta;
        let k = self.kappa;
        b * g * (v - d - k) + (1.0 - b) * l * (-v - k) + b * (1.0 - g - l) * (-k)
            + (1.0 - b) * (-d - k)
    }
}

/// Campaign profit of the generalized retention formula.
pub fn churn_profit(params: &ChurnParams) -> Result<f64> {
    params.validate()?;
    Ok(params.n * params.alpha * params.per_customer_profit() - params.fixed_cost)
}

/// Agreement report between the churn-profit sign and the decision rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChurnEquivalence {
    pub churn_targets: bool,
    pub rule_targets: bool,
    pub agree: bool,
    /// Mapped potential outcomes used by the rule.
    pub p0: f64,
    pub p1: f64,
}

/// Checks that the per-customer churn profit recommends targeting exactly
/// when the decision rule does, under the potential-outcome mapping
/// p1 = 1 - beta*(1-gamma) and p1 - p0 = beta*gamma - (1-beta)*lambda.
/// The mapping requires lambda <= beta/(1-beta) so p0 stays a
/// probability; the match is exact when lambda = 0 or kappa = 0 (the
/// extended contact-cost term carries a factor 1 + lambda*(1-2*beta)).
pub fn churn_rule_equivalence_check(params: &ChurnParams) -> Result<ChurnEquivalence> {
    params.validate()?;
    let p1 = 1.0 - params.beta * (1.0 - params.gamma);
    let tau = params.beta * params.gamma - (1.0 - params.beta) * params.lambda;
    let p0 = p1 - tau;
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::Config(format!(
            "mapped p0 = {} is not a probability; lambda exceeds beta/(1-beta)",
            p0
        )));
    }
    let churn_targets = params.per_customer_profit() > 0.0;
    let rule = decide(
        p1,
        params.value,
        p0,
        params.value,
        &CostSpec {
            incentive: IncentiveCost::Fixed(params.delta),
            kappa: params.kappa,
        },
    )?;
    Ok(ChurnEquivalence {
        churn_targets,
        rule_targets: rule.target,
        agree: churn_targets == rule.target,
        p0,
        p1,
    })
}

/// Writes decisions as CSV: `id,target,expected_lhs,expected_cost` with
/// target as 0/1 and six-decimal reals.
pub fn write_decisions_csv(path: &Path, decisions: &[PolicyDecision]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "id,target,expected_lhs,expected_cost").map_err(|e| Error::io(path, e))?;
    for d in decisions {
        writeln!(
            w,
            "{},{},{:.6},{:.6}",
            d.id, d.target as u8, d.expected_lhs, d.expected_cost
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
