//! Campaign data model: customer records, CSV round trips, ground-truth
//! tables and stratified fold plans.
//!
//! On-disk formats are plain comma-separated text with a fixed header and
//! all reals written with six decimal places:
//!
//! * customers: `id,x0,...,x{p-1},t,c,v`
//! * ground truth: `id,p0,p1,v0,v1,tau_c,tau_v,tau`
//!
//! `t` is the treatment indicator, `c` the conversion indicator and `v`
//! the realized basket value (zero whenever `c` is zero).

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// One customer row: covariates, treatment assignment and observed outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomerRecord {
    pub id: u64,
    pub x: Vec<f64>,
    pub t: u8,
    pub c: u8,
    pub v: f64,
}

/// A campaign dataset with a fixed covariate dimension `p`.
#[derive(Debug, Clone)]
pub struct Dataset {
    p: usize,
    records: Vec<CustomerRecord>,
}

impl Dataset {
    /// Wraps validated records. Fails if dimensions are ragged, ids repeat,
    /// indicators are non-binary, or values are inconsistent with `c`.
    pub fn new(p: usize, records: Vec<CustomerRecord>) -> Result<Dataset> {
        let mut seen = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let ctx = |msg: String| Error::Data(format!("record {} (id {}): {}", i, r.id, msg));
            if r.x.len() != p {
                return Err(ctx(format!("expected {} covariates, got {}", p, r.x.len())));
            }
            if r.x.iter().any(|v| !v.is_finite()) {
                return Err(ctx("non-finite covariate".into()));
            }
            if r.t > 1 {
                return Err(ctx(format!("treatment must be 0 or 1, got {}", r.t)));
            }
            if r.c > 1 {
                return Err(ctx(format!("conversion must be 0 or 1, got {}", r.c)));
            }
            if !r.v.is_finite() || r.v < 0.0 {
                return Err(ctx(format!("value must be finite and non-negative, got {}", r.v)));
            }
            if r.c == 0 && r.v != 0.0 {
                return Err(ctx(format!("value must be 0 for non-converters, got {}", r.v)));
            }
            if let Some(prev) = seen.insert(r.id, i) {
                return Err(ctx(format!("duplicate id (first seen at record {})", prev)));
            }
        }
        Ok(Dataset { p, records })
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn records(&self) -> &[CustomerRecord] {
        &self.records
    }

    pub fn ids(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.id).collect()
    }

    /// Covariate matrix, one row per record in dataset order.
    pub fn features(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.n() * self.p);
        for r in &self.records {
            data.extend_from_slice(&r.x);
        }
        Matrix::from_rows(data, self.n(), self.p)
    }

    pub fn treatments(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn conversions(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.c).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.v).collect()
    }

    /// Treatment indicators as reals, for learner interop.
    pub fn treatment_indicators(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t as f64).collect()
    }

    /// Conversion indicators as reals, for learner interop.
    pub fn conversion_indicators(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.c as f64).collect()
    }

    /// The modeled outcome `y = c * v`, which equals `v` because non-converter
    /// values are validated to zero.
    pub fn outcomes(&self) -> Vec<f64> {
        self.values()
    }

    /// New dataset containing the rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            p: self.p,
            records: idx.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    /// Writes the customers CSV with six-decimal reals.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut header = String::from("id");
        for j in 0..self.p {
            header.push_str(&format!(",x{}", j));
        }
        header.push_str(",t,c,v");
        writeln!(w, "{}", header).map_err(|e| Error::io(path, e))?;
        for r in &self.records {
            let mut line = r.id.to_string();
            for v in &r.x {
                line.push_str(&format!(",{:.6}", v));
            }
            line.push_str(&format!(",{},{},{:.6}", r.t, r.c, r.v));
            writeln!(w, "{}", line).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a customers CSV, validating the header and every row. Errors
    /// carry the 1-based line number.
    pub fn load_csv(path: &Path) -> Result<Dataset> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let header = match lines.next() {
            Some((_, Ok(h))) => h,
            Some((_, Err(e))) => return Err(Error::io(path, e)),
            None => return Err(Error::Data(format!("{}: empty file", path.display()))),
        };
        let cols: Vec<&str> = header.trim_end().split(',').collect();
        if cols.len() < 5 || cols[0] != "id" {
            return Err(Error::Data(format!(
                "{}: line 1: expected header id,x0,...,t,c,v",
                path.display()
            )));
        }
        let p = cols.len() - 4;
        for j in 0..p {
            if cols[1 + j] != format!("x{}", j) {
                return Err(Error::Data(format!(
                    "{}: line 1: expected column x{}, found {:?}",
                    path.display(),
                    j,
                    cols[1 + j]
                )));
            }
        }
        if cols[p + 1..] != ["t", "c", "v"] {
            return Err(Error::Data(format!(
                "{}: line 1: expected trailing columns t,c,v",
                path.display()
            )));
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let lineno = i + 1;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != p + 4 {
                return Err(Error::Data(format!(
                    "{}: line {}: expected {} fields, got {}",
                    path.display(),
                    lineno,
                    p + 4,
                    fields.len()
                )));
            }
            let fail = |col: &str, raw: &str| {
                Error::Data(format!(
                    "{}: line {}: cannot parse {} from {:?}",
                    path.display(),
                    lineno,
                    col,
                    raw
                ))
            };
            let id: u64 = fields[0].parse().map_err(|_| fail("id", fields[0]))?;
            let mut x = Vec::with_capacity(p);
            for j in 0..p {
                let raw = fields[1 + j];
                x.push(raw.parse::<f64>().map_err(|_| fail(&format!("x{}", j), raw))?);
            }
            let t: u8 = fields[p + 1].parse().map_err(|_| fail("t", fields[p + 1]))?;
            let c: u8 = fields[p + 2].parse().map_err(|_| fail("c", fields[p + 2]))?;
            let v: f64 = fields[p + 3].parse().map_err(|_| fail("v", fields[p + 3]))?;
            records.push(CustomerRecord { id, x, t, c, v });
        }
        Dataset::new(p, records)
    }
}

/// Per-customer ground truth emitted by the simulator: potential conversion
/// probabilities and values under control and treatment, and the derived
/// effects `tau_c = p1 - p0`, `tau_v = v1 - v0`, `tau = p1*v1 - p0*v0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub id: u64,
    pub p0: f64,
    pub p1: f64,
    pub v0: f64,
    pub v1: f64,
    pub tau_c: f64,
    pub tau_v: f64,
    pub tau: f64,
}

/// Ground-truth table aligned with a simulated dataset by row order and id.
#[derive(Debug, Clone)]
pub struct TruthTable {
    records: Vec<TruthRecord>,
    by_id: HashMap<u64, usize>,
}

impl TruthTable {
    pub fn new(records: Vec<TruthRecord>) -> Result<TruthTable> {
        let mut by_id = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if !(r.p0 >= 0.0 && r.p0 <= 1.0 && r.p1 >= 0.0 && r.p1 <= 1.0) {
                return Err(Error::Data(format!(
                    "truth id {}: probabilities outside [0,1]",
                    r.id
                )));
            }
            if by_id.insert(r.id, i).is_some() {
                return Err(Error::Data(format!("truth id {}: duplicate id", r.id)));
            }
        }
        Ok(TruthTable { records, by_id })
    }

    pub fn records(&self) -> &[TruthRecord] {
        &self.records
    }

    pub fn get(&self, id: u64) -> Option<&TruthRecord> {
        self.by_id.get(&id).map(|&i| &self.records[i])
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "id,p0,p1,v0,v1,tau_c,tau_v,tau").map_err(|e| Error::io(path, e))?;
        for r in &self.records {
            writeln!(
                w,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                r.id, r.p0, r.p1, r.v0, r.v1, r.tau_c, r.tau_v, r.tau
            )
            .map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<TruthTable> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        match lines.next() {
            Some((_, Ok(h))) if h.trim_end() == "id,p0,p1,v0,v1,tau_c,tau_v,tau" => {}
            Some((_, Ok(h))) => {
                return Err(Error::Data(format!(
                    "{}: line 1: unexpected truth header {:?}",
                    path.display(),
                    h
                )))
            }
            Some((_, Err(e))) => return Err(Error::io(path, e)),
            None => return Err(Error::Data(format!("{}: empty file", path.display()))),
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let lineno = i + 1;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 8 {
                return Err(Error::Data(format!(
                    "{}: line {}: expected 8 fields, got {}",
                    path.display(),
                    lineno,
                    fields.len()
                )));
            }
            let parse = |idx: usize| -> Result<f64> {
                fields[idx].parse::<f64>().map_err(|_| {
                    Error::Data(format!(
                        "{}: line {}: cannot parse field {} from {:?}",
                        path.display(),
                        lineno,
                        idx,
                        fields[idx]
                    ))
                })
            };
            records.push(TruthRecord {
                id: fields[0].parse().map_err(|_| {
                    Error::Data(format!(
                        "{}: line {}: cannot parse id from {:?}",
                        path.display(),
                        lineno,
                        fields[0]
                    ))
                })?,
                p0: parse(1)?,
                p1: parse(2)?,
                v0: parse(3)?,
                v1: parse(4)?,
                tau_c: parse(5)?,
                tau_v: parse(6)?,
                tau: parse(7)?,
            });
        }
        TruthTable::new(records)
    }
}

/// Assignment of every record to one of `k` cross-validation folds,
/// stratified jointly on treatment and conversion.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    k: usize,
    seed: u64,
    /// Fold index per dataset row, aligned with record order.
    folds: Vec<u32>,
}

impl FoldPlan {
    /// Stratified k-fold plan. Rows are grouped by `(t, c)`, shuffled within
    /// each group with a seeded generator, and dealt round-robin so that both
    /// per-stratum and total fold sizes differ by at most one.
    pub fn stratified(data: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
        if k < 2 {
            return Err(Error::Config(format!("fold count must be at least 2, got {}", k)));
        }
        if data.n() < k {
            return Err(Error::Data(format!(
                "cannot split {} rows into {} folds",
                data.n(),
                k
            )));
        }
        let mut strata: Vec<Vec<usize>> = vec![Vec::new(); 4];
        for (i, r) in data.records().iter().enumerate() {
            strata[(r.t * 2 + r.c) as usize].push(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut folds = vec![0u32; data.n()];
        let mut cursor = 0usize;
        for rows in strata.iter_mut() {
            rows.shuffle(&mut rng);
            for &row in rows.iter() {
                folds[row] = (cursor % k) as u32;
                cursor += 1;
            }
        }
        Ok(FoldPlan { k, seed, folds })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fold index of dataset row `i`.
    pub fn fold_of_row(&self, i: usize) -> usize {
        self.folds[i] as usize
    }

    pub fn assignments(&self) -> &[u32] {
        &self.folds
    }

    /// Row indices held out by fold `f`.
    pub fn test_rows(&self, f: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] as usize == f).collect()
    }

    /// Row indices used for training when fold `f` is held out.
    pub fn train_rows(&self, f: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] as usize != f).collect()
    }
}

/// Covariates for customers that have not yet been assigned or observed.
#[derive(Debug, Clone)]
pub struct Covariates {
    pub ids: Vec<u64>,
    pub x: Matrix,
}

/// Draws a deterministic synthetic covariate table: a mix of count,
/// right-skewed continuous, binary and centered features, cycling a fixed
/// palette of column kinds with mild parameter drift for large `p`.
/// Requires `p >= 12` so every kind appears at least once.
pub fn generate_covariates(n: usize, p: usize, seed: u64) -> Result<Covariates> {
    if n == 0 {
        return Err(Error::Config("covariate generation needs n >= 1".into()));
    }
    if p < 12 {
        return Err(Error::Config(format!(
            "covariate generation needs p >= 12, got {}",
            p
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut x = Matrix::zeros(n, p);
    for j in 0..p {
        // Mild drift so repeated kinds are correlated in shape, not identical.
        let drift = 1.0 + 0.25 * (j / 12) as f64;
        match j % 12 {
            0 => fill(&mut x, j, n, Poisson::new(3.0 * drift).unwrap(), &mut rng),
            1 => fill(&mut x, j, n, Poisson::new(8.0 * drift).unwrap(), &mut rng),
            2 => fill(&mut x, j, n, LogNormal::new(3.0, 0.8).unwrap(), &mut rng),
            3 => fill(&mut x, j, n, LogNormal::new(1.5, 1.0).unwrap(), &mut rng),
            4 => fill_bernoulli(&mut x, j, n, 0.3, &mut rng),
            5 => fill_bernoulli(&mut x, j, n, 0.5, &mut rng),
            6 => fill_bernoulli(&mut x, j, n, 0.1, &mut rng),
            7 => fill(&mut x, j, n, StandardNormal, &mut rng),
            8 => {
                for i in 0..n {
                    let z: f64 = rng.sample(StandardNormal);
                    x.set(i, j, 2.0 * z + 1.0);
                }
            }
            9 => {
                for i in 0..n {
                    x.set(i, j, rng.gen::<f64>());
                }
            }
            10 => fill(&mut x, j, n, Exp::new(0.2 / drift).unwrap(), &mut rng),
            _ => {
                for i in 0..n {
                    x.set(i, j, rng.gen_range(0..5) as f64);
                }
            }
        }
    }
    let ids = (1..=n as u64).collect();
    Ok(Covariates { ids, x })
}

fn fill<D: Distribution<f64>>(x: &mut Matrix, j: usize, n: usize, dist: D, rng: &mut ChaCha8Rng) {
    for i in 0..n {
        x.set(i, j, dist.sample(rng));
    }
}

fn fill_bernoulli(x: &mut Matrix, j: usize, n: usize, q: f64, rng: &mut ChaCha8Rng) {
    for i in 0..n {
        x.set(i, j, if rng.gen::<f64>() < q { 1.0 } else { 0.0 });
    }
}
