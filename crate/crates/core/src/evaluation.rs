//! Campaign metrics: true-profit accounting against simulation ground
//! truth, the transformed-outcome loss, effect-estimate RMSE, conversion
//! calibration (Brier, ROC-AUC), rank correlation, and report assembly.
//!
//! Profit is evaluated in expected mode by default: each customer
//! contributes the exact expectation implied by their true potential
//! outcomes, which removes realization noise from policy comparisons. A
//! realized mode draws Bernoulli conversions from the same truth for
//! honesty checks; its seed average converges to the expected value.
//!
//! The transformed outcome Y* = tY/e - (1-t)Y/(1-e) is an unbiased
//! single-sample stand-in for the individual treatment effect under
//! randomized assignment with known propensity e, so the mean squared
//! distance between Y* and an effect estimate (the transformed outcome
//! loss, TOL) is a feasible tuning and comparison objective when the true
//! effect is unobservable.

use crate::data::TruthTable;
use crate::error::{Error, Result};
use crate::policy::{CostSpec, PolicyDecision};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::io::{BufWriter, Write};
use std::path::Path;

/// How to account profit: exact expectation from the truth table, or a
/// seeded Bernoulli realization of conversions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfitMode {
    Expected,
    Realized(u64),
}

/// Evaluates a decision list against ground truth. Targeted customers
/// contribute p1*(v1 - delta_eff(v1)) - kappa, untargeted ones p0*v0 (or
/// their realized counterparts). Returns total profit and the fraction
/// of customers targeted.
pub fn true_profit(
    decisions: &[PolicyDecision],
    truth: &TruthTable,
    cost: &CostSpec,
    mode: ProfitMode,
) -> Result<(f64, f64)> {
    cost.validate()?;
    if truth.is_empty() {
        return Err(Error::Data("empty truth table".into()));
    }
    let mut by_id = HashMap::with_capacity(decisions.len());
    for d in decisions {
        by_id.insert(d.id, d);
    }
    let mut rng = match mode {
        ProfitMode::Expected => None,
        ProfitMode::Realized(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
    };
    let mut profit = 0.0;
    let mut targeted = 0usize;
    for r in truth.records() {
        let d = by_id
            .get(&r.id)
            .ok_or_else(|| Error::Data(format!("no decision for truth id {}", r.id)))?;
        if d.target {
            targeted += 1;
        }
        profit += match &mut rng {
            None => {
                if d.target {
                    r.p1 * (r.v1 - cost.effective_delta(r.v1)) - cost.kappa
                } else {
                    r.p0 * r.v0
                }
            }
            Some(rng) => {
                let u: f64 = rng.gen();
                if d.target {
                    let converted = u < r.p1;
                    let gain = if converted {
                        r.v1 - cost.effective_delta(r.v1)
                    } else {
                        0.0
                    };
                    gain - cost.kappa
                } else if u < r.p0 {
                    r.v0
                } else {
                    0.0
                }
            }
        };
    }
    Ok((profit, targeted as f64 / truth.len() as f64))
}

/// The transformed outcome Y* = t*y/e - (1-t)*y/(1-e).
pub fn transformed_outcome(y: f64, t: u8, e: f64) -> f64 {
    if t == 1 {
        y / e
    } else {
        -y / (1.0 - e)
    }
}

/// Transformed outcome loss: mean squared distance between Y* and the
/// effect estimates.
pub fn tol(tau_hat: &[f64], y: &[f64], t: &[u8], e: f64) -> Result<f64> {
    let n = tau_hat.len();
    if y.len() != n || t.len() != n {
        return Err(Error::Data("effect, outcome, and treatment vectors must align".into()));
    }
    if n == 0 {
        return Err(Error::Data("cannot compute a loss on zero rows".into()));
    }
    if !(e > 0.0 && e < 1.0) {
        return Err(Error::Config(format!("assignment probability must be in (0,1), got {}", e)));
    }
    let mut acc = 0.0;
    for i in 0..n {
        let d = transformed_outcome(y[i], t[i], e) - tau_hat[i];
        acc += d * d;
    }
    Ok(acc / n as f64)
}

/// Root-mean-squared error of effect estimates against the true
/// individual effects looked up by id.
pub fn rmse_vs_oracle(ids: &[u64], tau_hat: &[f64], truth: &TruthTable) -> Result<f64> {
    if ids.len() != tau_hat.len() {
        return Err(Error::Data("id and estimate vectors must align".into()));
    }
    if ids.is_empty() {
        return Err(Error::Data("cannot compute RMSE on zero rows".into()));
    }
    let mut acc = 0.0;
    for (id, th) in ids.iter().zip(tau_hat) {
        let r = truth
            .get(*id)
            .ok_or_else(|| Error::Data(format!("no truth for id {}", id)))?;
        let d = th - r.tau;
        acc += d * d;
    }
    Ok((acc / ids.len() as f64).sqrt())
}

/// Mean squared distance between predicted probabilities and labels.
pub fn brier(p_hat: &[f64], c: &[u8]) -> Result<f64> {
    if p_hat.len() != c.len() {
        return Err(Error::Data("probability and label vectors must align".into()));
    }
    if p_hat.is_empty() {
        return Err(Error::Data("cannot compute Brier score on zero rows".into()));
    }
    let acc: f64 = p_hat
        .iter()
        .zip(c)
        .map(|(p, l)| {
            let d = p - *l as f64;
            d * d
        })
        .sum();
    Ok(acc / p_hat.len() as f64)
}

/// Average ranks (1-based) with ties sharing their mean rank.
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the mean of ranks i+1..=j+1.
        let mean_rank = (i + j + 2) as f64 / 2.0;
        for k in i..=j {
            ranks[order[k]] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

/// Probability that a random converter outranks a random non-converter,
/// ties counted half. Returns None when only one class is present.
pub fn roc_auc(p_hat: &[f64], c: &[u8]) -> Result<Option<f64>> {
    if p_hat.len() != c.len() {
        return Err(Error::Data("probability and label vectors must align".into()));
    }
    if p_hat.is_empty() {
        return Err(Error::Data("cannot compute AUC on zero rows".into()));
    }
    let n_pos = c.iter().filter(|&&l| l == 1).count();
    let n_neg = c.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let ranks = average_ranks(p_hat);
    let rank_sum: f64 = ranks
        .iter()
        .zip(c)
        .filter(|(_, &l)| l == 1)
        .map(|(r, _)| *r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(Some(u / (n_pos as f64 * n_neg as f64)))
}

/// Rank correlation: Pearson correlation of average ranks. Returns None
/// when either vector is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(Error::Data("correlation inputs must align".into()));
    }
    if a.len() < 2 {
        return Err(Error::Data("correlation needs at least two rows".into()));
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = a.len() as f64;
    let mean_a = ra.iter().sum::<f64>() / n;
    let mean_b = rb.iter().sum::<f64>() / n;
    let (mut cov, mut var_a, mut var_b) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        let da = ra[i] - mean_a;
        let db = rb[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a <= 0.0 || var_b <= 0.0 {
        return Ok(None);
    }
    Ok(Some(cov / (var_a.sqrt() * var_b.sqrt())))
}

/// One report row: a policy/architecture pairing with its metrics.
/// Metrics that do not apply (no value model, constant scores) are None
/// and render as NA.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignReport {
    pub policy: String,
    pub architecture: String,
    pub profit: f64,
    pub ft: f64,
    pub rmse: Option<f64>,
    pub tol: Option<f64>,
    pub brier: Option<f64>,
    pub auc: Option<f64>,
}

/// Sorts rows by (policy, architecture) and rejects duplicate keys.
pub fn assemble_report(mut rows: Vec<CampaignReport>) -> Result<Vec<CampaignReport>> {
    rows.sort_by(|a, b| {
        a.policy
            .cmp(&b.policy)
            .then_with(|| a.architecture.cmp(&b.architecture))
    });
    for w in rows.windows(2) {
        if w[0].policy == w[1].policy && w[0].architecture == w[1].architecture {
            return Err(Error::Data(format!(
                "duplicate report row for policy {:?} architecture {:?}",
                w[0].policy, w[0].architecture
            )));
        }
    }
    for r in &rows {
        if !(0.0..=1.0).contains(&r.ft) {
            return Err(Error::Data(format!(
                "fraction targeted {} outside [0,1] for {:?}/{:?}",
                r.ft, r.policy, r.architecture
            )));
        }
    }
    Ok(rows)
}

fn metric_cell(m: Option<f64>) -> String {
    match m {
        Some(v) => format!("{:.6}", v),
        None => "NA".into(),
    }
}

/// Renders an assembled report as CSV with the pinned header.
pub fn report_to_csv(rows: &[CampaignReport]) -> String {
    let mut out = String::from("policy,architecture,profit,ft,rmse,tol,brier,auc\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{},{},{},{}\n",
            r.policy,
            r.architecture,
            r.profit,
            r.ft,
            metric_cell(r.rmse),
            metric_cell(r.tol),
            metric_cell(r.brier),
            metric_cell(r.auc),
        ));
    }
    out
}

pub fn write_report_csv(path: &Path, rows: &[CampaignReport]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(report_to_csv(rows).as_bytes())
        .map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Renders an assembled report as an aligned text table.
pub fn report_to_text(rows: &[CampaignReport]) -> String {
    let header = ["policy", "architecture", "profit", "ft", "rmse", "tol", "brier", "auc"];
    let mut cells: Vec<[String; 8]> = Vec::with_capacity(rows.len());
    for r in rows {
        cells.push([
            r.policy.clone(),
            r.architecture.clone(),
            format!("{:.2}", r.profit),
            format!("{:.4}", r.ft),
            match r.rmse {
                Some(v) => format!("{:.4}", v),
                None => "NA".into(),
            },
            match r.tol {
                Some(v) => format!("{:.2}", v),
                None => "NA".into(),
            },
            match r.brier {
                Some(v) => format!("{:.5}", v),
                None => "NA".into(),
            },
            match r.auc {
                Some(v) => format!("{:.4}", v),
                None => "NA".into(),
            },
        ]);
    }
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, cell) in widths.iter_mut().zip(row.iter()) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for (j, h) in header.iter().enumerate() {
        if j > 0 {
            out.push_str("  ");
        }
        if j < 2 {
            out.push_str(&format!("{:<width$}", h, width = widths[j]));
        } else {
            out.push_str(&format!("{:>width$}", h, width = widths[j]));
        }
    }
    out.push('\n');
    for row in &cells {
        for (j, cell) in row.iter().enumerate() {
            if j > 0 {
                out.push_str("  ");
            }
            if j < 2 {
                out.push_str(&format!("{:<width$}", cell, width = widths[j]));
            } else {
                out.push_str(&format!("{:>width$}", cell, width = widths[j]));
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TruthRecord;
    use crate::policy::IncentiveCost;
    use proptest::prelude::*;

    fn truth_row(id: u64, p0: f64, p1: f64, v0: f64, v1: f64) -> TruthRecord {
        TruthRecord {
            id,
            p0,
            p1,
            v0,
            v1,
            tau_c: p1 - p0,
            tau_v: v1 - v0,
            tau: p1 * v1 - p0 * v0,
        }
    }

    fn decision(id: u64, target: bool) -> PolicyDecision {
        PolicyDecision {
            id,
            target,
            expected_lhs: 0.0,
            expected_cost: 0.0,
        }
    }

    fn fixed(delta: f64, kappa: f64) -> CostSpec {
        CostSpec {
            incentive: IncentiveCost::Fixed(delta),
            kappa,
        }
    }

    #[test]
    fn hand_profit_on_two_customers() {
        let truth = TruthTable::new(vec![
            truth_row(1, 0.05, 0.10, 100.0, 100.0),
            truth_row(2, 0.20, 0.30, 50.0, 60.0),
        ])
        .unwrap();
        let decisions = vec![decision(1, true), decision(2, false)];
        let (profit, ft) =
            true_profit(&decisions, &truth, &fixed(10.0, 0.0), ProfitMode::Expected).unwrap();
        assert!((profit - 19.0).abs() < 1e-12, "0.1*90 + 0.2*50 = 19, got {}", profit);
        assert!((ft - 0.5).abs() < 1e-12);
    }

    #[test]
    fn target_nobody_recovers_the_untreated_baseline() {
        let truth = TruthTable::new(vec![
            truth_row(1, 0.1, 0.2, 70.0, 75.0),
            truth_row(2, 0.05, 0.1, 40.0, 45.0),
        ])
        .unwrap();
        let decisions = vec![decision(1, false), decision(2, false)];
        let (profit, ft) =
            true_profit(&decisions, &truth, &fixed(10.0, 1.0), ProfitMode::Expected).unwrap();
        assert!((profit - (0.1 * 70.0 + 0.05 * 40.0)).abs() < 1e-12);
        assert_eq!(ft, 0.0);
    }

    #[test]
    fn free_treatment_for_everyone_gives_the_treated_value() {
        let truth = TruthTable::new(vec![
            truth_row(1, 0.1, 0.2, 70.0, 75.0),
            truth_row(2, 0.05, 0.1, 40.0, 45.0),
        ])
        .unwrap();
        let decisions = vec![decision(1, true), decision(2, true)];
        let (profit, ft) =
            true_profit(&decisions, &truth, &fixed(0.0, 0.0), ProfitMode::Expected).unwrap();
        assert!((profit - (0.2 * 75.0 + 0.1 * 45.0)).abs() < 1e-12);
        assert_eq!(ft, 1.0);
    }

    #[test]
    fn missing_decision_is_an_error() {
        let truth = TruthTable::new(vec![truth_row(1, 0.1, 0.2, 70.0, 75.0)]).unwrap();
        let err = true_profit(&[], &truth, &fixed(0.0, 0.0), ProfitMode::Expected);
        assert!(err.is_err());
    }

    #[test]
    fn realized_profit_averages_to_the_expectation() {
        // 10^4 customers, half targeted, percentage cost to exercise
        // the value-dependent incentive.
        use rand::Rng as _;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut rows = Vec::new();
        let mut decisions = Vec::new();
        for id in 0..10_000u64 {
            let p0: f64 = rng.gen_range(0.01..0.3);
            let p1 = (p0 + rng.gen_range(-0.05f64..0.15)).clamp(0.0, 1.0);
            let v0: f64 = rng.gen_range(5.0..150.0);
            let v1 = (v0 + rng.gen_range(-5.0f64..10.0)).max(1.0);
            rows.push(truth_row(id, p0, p1, v0, v1));
            decisions.push(decision(id, id % 2 == 0));
        }
        let truth = TruthTable::new(rows).unwrap();
        let cost = CostSpec {
            incentive: IncentiveCost::Percentage(0.1),
            kappa: 0.2,
        };
        let (expected, _) = true_profit(&decisions, &truth, &cost, ProfitMode::Expected).unwrap();
        let mut draws = Vec::new();
        for seed in 0..200 {
            let (p, _) =
                true_profit(&decisions, &truth, &cost, ProfitMode::Realized(seed)).unwrap();
            draws.push(p);
        }
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        let se = (var / draws.len() as f64).sqrt();
        assert!(
            (expected - mean).abs() <= 3.0 * se,
            "expected {} vs realized mean {} (3se = {})",
            expected,
            mean,
            3.0 * se
        );
    }

    #[test]
    fn transformed_outcome_arithmetic() {
        assert_eq!(transformed_outcome(10.0, 1, 0.5), 20.0);
        assert_eq!(transformed_outcome(0.0, 0, 0.5), 0.0);
        assert_eq!(transformed_outcome(10.0, 0, 0.5), -20.0);
    }

    #[test]
    fn tol_single_row_and_shift_identity() {
        let loss = tol(&[5.0], &[10.0], &[1], 0.5).unwrap();
        assert!((loss - 225.0).abs() < 1e-12);

        let tau_hat = vec![1.0, -2.0, 0.5, 3.0];
        let y = vec![10.0, 0.0, 4.0, 7.0];
        let t = vec![1u8, 0, 0, 1];
        let base = tol(&tau_hat, &y, &t, 0.5).unwrap();
        let c = 0.7;
        let shifted: Vec<f64> = tau_hat.iter().map(|v| v + c).collect();
        let after = tol(&shifted, &y, &t, 0.5).unwrap();
        let mean_resid = tau_hat
            .iter()
            .zip(y.iter().zip(&t))
            .map(|(th, (yi, ti))| transformed_outcome(*yi, *ti, 0.5) - th)
            .sum::<f64>()
            / 4.0;
        assert!((after - base - (c * c - 2.0 * c * mean_resid)).abs() < 1e-9);
    }

    #[test]
    fn rmse_identities() {
        let truth = TruthTable::new(vec![
            truth_row(1, 0.1, 0.2, 10.0, 20.0),
            truth_row(2, 0.1, 0.3, 10.0, 15.0),
            truth_row(3, 0.2, 0.2, 30.0, 30.0),
        ])
        .unwrap();
        let taus: Vec<f64> = truth.records().iter().map(|r| r.tau).collect();
        let ids = [1u64, 2, 3];
        assert_eq!(rmse_vs_oracle(&ids, &taus, &truth).unwrap(), 0.0);
        let shifted: Vec<f64> = taus.iter().map(|t| t + 1.0).collect();
        assert!((rmse_vs_oracle(&ids, &shifted, &truth).unwrap() - 1.0).abs() < 1e-12);
        let mean = taus.iter().sum::<f64>() / 3.0;
        let sd = (taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
        let constant = vec![mean; 3];
        assert!((rmse_vs_oracle(&ids, &constant, &truth).unwrap() - sd).abs() < 1e-12);
        assert!(rmse_vs_oracle(&[9], &[0.0], &truth).is_err());
    }

    #[test]
    fn brier_identities() {
        assert_eq!(brier(&[1.0, 0.0], &[1, 0]).unwrap(), 0.0);
        assert_eq!(brier(&[0.5, 0.5], &[1, 0]).unwrap(), 0.25);
        // Base-rate constant predictor scores r(1-r).
        let c = [1u8, 1, 1, 0, 0, 0, 0, 0, 0, 0];
        let r = 0.3;
        let p = vec![r; 10];
        assert!((brier(&p, &c).unwrap() - r * (1.0 - r)).abs() < 1e-12);
    }

    #[test]
    fn auc_identities() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap(), Some(1.0));
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[1, 1, 0, 0]).unwrap(), Some(0.0));
        assert_eq!(roc_auc(&[0.5, 0.5, 0.5, 0.5], &[1, 0, 1, 0]).unwrap(), Some(0.5));
        assert_eq!(roc_auc(&[0.5, 0.6], &[1, 1]).unwrap(), None);
        // One tied pair out of four: 3.5/4.
        let auc = roc_auc(&[0.2, 0.5, 0.5, 0.9], &[0, 0, 1, 1]).unwrap().unwrap();
        assert!((auc - 0.875).abs() < 1e-12);
    }

    #[test]
    fn spearman_identities() {
        let a = [1.0, 2.0, 3.0];
        assert!((spearman(&a, &a).unwrap().unwrap() - 1.0).abs() < 1e-12);
        let neg = [3.0, 2.0, 1.0];
        assert!((spearman(&a, &neg).unwrap().unwrap() + 1.0).abs() < 1e-12);
        let b = [1.0, 3.0, 2.0];
        let rho = spearman(&a, &b).unwrap().unwrap();
        assert!((rho - 0.5).abs() < 1e-12);
        assert_eq!(spearman(&a, &[2.0, 2.0, 2.0]).unwrap(), None);
    }

    #[test]
    fn report_sorting_and_duplicates() {
        let row = |p: &str, a: &str| CampaignReport {
            policy: p.into(),
            architecture: a.into(),
            profit: 100.0,
            ft: 0.5,
            rmse: Some(1.0),
            tol: None,
            brier: Some(0.05),
            auc: None,
        };
        let rows = assemble_report(vec![
            row("empirical", "hurdle-two"),
            row("analytical", "hurdle-two"),
            row("analytical", "ate"),
        ])
        .unwrap();
        let keys: Vec<(String, String)> = rows
            .iter()
            .map(|r| (r.policy.clone(), r.architecture.clone()))
            .collect();
        assert_eq!(
            keys,
            vec![
                ("analytical".into(), "ate".into()),
                ("analytical".into(), "hurdle-two".into()),
                ("empirical".into(), "hurdle-two".into()),
            ]
        );
        assert!(assemble_report(vec![row("a", "b"), row("a", "b")]).is_err());

        let csv = report_to_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("policy,architecture,profit,ft,rmse,tol,brier,auc"));
        assert_eq!(
            lines.next(),
            Some("analytical,ate,100.000000,0.500000,1.000000,NA,0.050000,NA")
        );
        let text = report_to_text(&rows);
        assert!(text.lines().count() == 4);
        assert!(text.contains("NA"));
    }

    proptest! {
        #[test]
        fn auc_is_invariant_to_monotone_transforms(
            scores in proptest::collection::vec(-3.0f64..3.0, 5..40),
            labels in proptest::collection::vec(0u8..2, 5..40),
        ) {
            let n = scores.len().min(labels.len());
            let scores = &scores[..n];
            let labels = &labels[..n];
            let base = roc_auc(scores, labels).unwrap();
            let mapped: Vec<f64> = scores.iter().map(|s| s.exp() + 2.0 * s).collect();
            let after = roc_auc(&mapped, labels).unwrap();
            match (base, after) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
        }
    }
}
