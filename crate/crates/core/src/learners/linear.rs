//! Linear and logistic regression used as nuisance components.
//!
//! Features are standardized internally and the normal equations get a
//! small ridge term (1e-6 on the standardized scale) so nearly collinear
//! designs stay solvable. Logistic regression runs iteratively reweighted
//! least squares on the same standardized design.

use crate::error::{Error, Result};
use crate::learners::gbt::sigmoid;
use crate::matrix::Matrix;

const RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Identity,
    Logistic,
}

/// Fitted linear predictor over standardized features.
#[derive(Debug, Clone)]
pub struct LinearModel {
    link: Link,
    means: Vec<f64>,
    scales: Vec<f64>,
    coef: Vec<f64>,
    intercept: f64,
}

impl LinearModel {
    pub fn link(&self) -> Link {
        self.link
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.coef.len() {
            return Err(Error::Data(format!(
                "expected {} features, got {}",
                self.coef.len(),
                x.n_cols()
            )));
        }
        let mut out = Vec::with_capacity(x.n_rows());
        for i in 0..x.n_rows() {
            let row = x.row(i);
            let mut z = self.intercept;
            for j in 0..row.len() {
                z += self.coef[j] * (row[j] - self.means[j]) / self.scales[j];
            }
            out.push(match self.link {
                Link::Identity => z,
                Link::Logistic => sigmoid(z),
            });
        }
        Ok(out)
    }

    /// Decomposes the model for serialization, in the order
    /// (link, means, scales, coef, intercept).
    pub(crate) fn parts(&self) -> (Link, &[f64], &[f64], &[f64], f64) {
        (self.link, &self.means, &self.scales, &self.coef, self.intercept)
    }

    /// Rebuilds a model from its serialized parts.
    pub(crate) fn from_parts(
        link: Link,
        means: Vec<f64>,
        scales: Vec<f64>,
        coef: Vec<f64>,
        intercept: f64,
    ) -> Result<LinearModel> {
        if means.len() != scales.len() || means.len() != coef.len() {
            return Err(Error::Model(
                "means, scales, and coefficients must have equal length".into(),
            ));
        }
        Ok(LinearModel {
            link,
            means,
            scales,
            coef,
            intercept,
        })
    }
}

fn standardize(x: &Matrix) -> (Matrix, Vec<f64>, Vec<f64>) {
    let n = x.n_rows();
    let p = x.n_cols();
    let mut means = vec![0.0; p];
    let mut scales = vec![1.0; p];
    for j in 0..p {
        let mut sum = 0.0;
        for i in 0..n {
            sum += x.get(i, j);
        }
        let mean = sum / n as f64;
        let mut ss = 0.0;
        for i in 0..n {
            let d = x.get(i, j) - mean;
            ss += d * d;
        }
        let sd = (ss / n as f64).sqrt();
        means[j] = mean;
        scales[j] = if sd > 1e-12 { sd } else { 1.0 };
    }
    let mut z = Matrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            z.set(i, j, (x.get(i, j) - means[j]) / scales[j]);
        }
    }
    (z, means, scales)
}

/// Solves the symmetric positive definite system `a * x = b` in place via
/// Cholesky; `a` is row-major d*d.
fn cholesky_solve(a: &mut [f64], b: &mut [f64], d: usize) -> Result<()> {
    for j in 0..d {
        for k in 0..j {
            let l = a[j * d + k];
            for i in j..d {
                a[i * d + j] -= a[i * d + k] * l;
            }
        }
        let diag = a[j * d + j];
        if diag <= 0.0 || !diag.is_finite() {
            return Err(Error::Model("normal equations are not positive definite".into()));
        }
        let root = diag.sqrt();
        for i in j..d {
            a[i * d + j] /= root;
        }
    }
    // forward solve L u = b
    for i in 0..d {
        for k in 0..i {
            b[i] -= a[i * d + k] * b[k];
        }
        b[i] /= a[i * d + i];
    }
    // back solve L' x = u
    for i in (0..d).rev() {
        for k in i + 1..d {
            b[i] -= a[k * d + i] * b[k];
        }
        b[i] /= a[i * d + i];
    }
    Ok(())
}

fn validate_xy(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.n_rows() == 0 {
        return Err(Error::Data("cannot fit on empty data".into()));
    }
    if y.len() != x.n_rows() {
        return Err(Error::Data(format!(
            "target length {} does not match {} rows",
            y.len(),
            x.n_rows()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite target value".into()));
    }
    Ok(())
}

/// Ordinary least squares with a tiny ridge for numerical stability.
pub fn fit_linear(x: &Matrix, y: &[f64]) -> Result<LinearModel> {
    validate_xy(x, y)?;
    let n = x.n_rows();
    let p = x.n_cols();
    let (z, means, scales) = standardize(x);
    // Columns are centered, so the intercept decouples as the mean of y.
    let ybar = y.iter().sum::<f64>() / n as f64;
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    for i in 0..n {
        let row = z.row(i);
        let r = y[i] - ybar;
        for j in 0..p {
            rhs[j] += row[j] * r;
            for k in j..p {
                gram[j * p + k] += row[j] * row[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            gram[j * p + k] = gram[k * p + j];
        }
        gram[j * p + j] += RIDGE;
    }
    cholesky_solve(&mut gram, &mut rhs, p)?;
    Ok(LinearModel {
        link: Link::Identity,
        means,
        scales,
        coef: rhs,
        intercept: ybar,
    })
}

/// Logistic regression via iteratively reweighted least squares.
pub fn fit_logistic(x: &Matrix, y: &[f64]) -> Result<LinearModel> {
    validate_xy(x, y)?;
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Data("logistic targets must be 0 or 1".into()));
    }
    let n = x.n_rows();
    let p = x.n_cols();
    let (z, means, scales) = standardize(x);
    let d = p + 1; // intercept first, then standardized coefficients
    let mut beta = vec![0.0; d];
    let base = (y.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
    beta[0] = (base / (1.0 - base)).ln();

    for _ in 0..50 {
        let mut hess = vec![0.0; d * d];
        let mut score = vec![0.0; d];
        for i in 0..n {
            let row = z.row(i);
            let mut eta = beta[0];
            for j in 0..p {
                eta += beta[j + 1] * row[j];
            }
            let prob = sigmoid(eta);
            let wgt = (prob * (1.0 - prob)).max(1e-10);
            let resid = y[i] - prob;
            score[0] += resid;
            hess[0] += wgt;
            for j in 0..p {
                score[j + 1] += row[j] * resid;
                hess[(j + 1) * d] += wgt * row[j];
                for k in j..p {
                    hess[(j + 1) * d + (k + 1)] += wgt * row[j] * row[k];
                }
            }
        }
        for j in 0..d {
            for k in 0..j {
                hess[j * d + k] = hess[k * d + j];
            }
            hess[j * d + j] += RIDGE;
        }
        for j in 1..d {
            hess[j] = hess[j * d];
        }
        let mut step = score;
        cholesky_solve(&mut hess, &mut step, d)?;
        let mut norm = 0.0f64;
        for j in 0..d {
            beta[j] += step[j];
            norm = norm.max(step[j].abs());
        }
        if norm < 1e-10 {
            break;
        }
    }
    Ok(LinearModel {
        link: Link::Logistic,
        means,
        scales,
        coef: beta[1..].to_vec(),
        intercept: beta[0],
    })
}
