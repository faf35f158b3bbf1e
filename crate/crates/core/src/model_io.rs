//! Model files: a versioned flat text format so fitted targeting models
//! can be scored later without refitting.
//!
//! The format is line-oriented and human-diffable. A file starts with
//! `uptarget-model v1` and the architecture tag, followed by the
//! architecture's fixed sequence of component blocks, and closes with
//! `end`. Boosted-tree blocks store one node per line (`split` with
//! feature, threshold, and child indices, or `leaf` with a value); linear
//! blocks store the standardization vectors and coefficients; the
//! constant and oracle architectures store their numbers directly.
//! Floats are written in shortest round-trip form, so save followed by
//! load reproduces bit-identical predictions.

use crate::causal::TargetingModel;
use crate::data::{TruthRecord, TruthTable};
use crate::error::{Error, Result};
use crate::learners::{GbtModel, GbtParams, LinearModel, Task, Tree, TreeNode};
use crate::learners::Link;
use std::fmt::Write as _;
use std::path::Path;

const HEADER: &str = "uptarget-model v1";

pub fn save_model(path: &Path, model: &TargetingModel) -> Result<()> {
    std::fs::write(path, model_to_string(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TargetingModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text)
}

pub fn model_to_string(model: &TargetingModel) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "{}", HEADER).unwrap();
    writeln!(out, "architecture {}", model.architecture()).unwrap();
    match model {
        TargetingModel::HurdleSingle { f_c, f_v } => {
            write_gbt(&mut out, "f_c", f_c);
            write_gbt(&mut out, "f_v", f_v);
        }
        TargetingModel::HurdleTwo { p0, p1, v0, v1 } => {
            write_gbt(&mut out, "p0", p0);
            write_gbt(&mut out, "p1", p1);
            write_gbt(&mut out, "v0", v0);
            write_gbt(&mut out, "v1", v1);
        }
        TargetingModel::OnestageSingle { f_y, conversion } => {
            write_gbt(&mut out, "f_y", f_y);
            write_gbt(&mut out, "conversion", conversion);
        }
        TargetingModel::OnestageTwo {
            f_y1,
            f_y0,
            conversion,
        } => {
            write_gbt(&mut out, "f_y1", f_y1);
            write_gbt(&mut out, "f_y0", f_y0);
            write_gbt(&mut out, "conversion", conversion);
        }
        TargetingModel::OnestageDr {
            f_dr,
            mu1,
            mu0,
            e_model,
            conversion,
        } => {
            write_gbt(&mut out, "f_dr", f_dr);
            write_linear(&mut out, "mu1", mu1);
            write_linear(&mut out, "mu0", mu0);
            match e_model {
                Some(m) => write_linear(&mut out, "e_model", m),
                None => writeln!(out, "no_propensity_model").unwrap(),
            }
            write_gbt(&mut out, "conversion", conversion);
        }
        TargetingModel::AteConstant { tau, p1, v1 } => {
            match v1 {
                Some(v) => writeln!(out, "constants {} {} {}", tau, p1, v).unwrap(),
                None => writeln!(out, "constants {} {} none", tau, p1).unwrap(),
            };
        }
        TargetingModel::Oracle { truth } => {
            writeln!(out, "truth {}", truth.len()).unwrap();
            for r in truth.records() {
                writeln!(
                    out,
                    "{} {} {} {} {} {} {} {}",
                    r.id, r.p0, r.p1, r.v0, r.v1, r.tau_c, r.tau_v, r.tau
                )
                .unwrap();
            }
        }
    }
    writeln!(out, "end").unwrap();
    Ok(out)
}

fn write_gbt(out: &mut String, name: &str, model: &GbtModel) {
    let p = model.params();
    writeln!(
        out,
        "gbt {} {} {} {} {} {} {} {}",
        name,
        model.task().label(),
        model.n_features(),
        p.n_trees,
        p.max_depth,
        p.learning_rate,
        p.min_leaf_weight,
        model.base_score(),
    )
    .unwrap();
    for tree in model.trees() {
        writeln!(out, "tree {}", tree.nodes.len()).unwrap();
        for node in &tree.nodes {
            match node {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => writeln!(out, "split {} {} {} {}", feature, threshold, left, right).unwrap(),
                TreeNode::Leaf { value } => writeln!(out, "leaf {}", value).unwrap(),
            }
        }
    }
}

fn write_linear(out: &mut String, name: &str, model: &LinearModel) {
    let (link, means, scales, coef, intercept) = model.parts();
    let link = match link {
        Link::Identity => "identity",
        Link::Logistic => "logistic",
    };
    writeln!(out, "linear {} {} {} {}", name, link, coef.len(), intercept).unwrap();
    for (label, vals) in [("means", means), ("scales", scales), ("coef", coef)] {
        write!(out, "{}", label).unwrap();
        for v in vals {
            write!(out, " {}", v).unwrap();
        }
        out.push('\n');
    }
}

/// Line cursor with one-line lookahead and position-tagged errors.
struct Lines<'a> {
    iter: std::str::Lines<'a>,
    lineno: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Lines<'a> {
        Lines {
            iter: text.lines(),
            lineno: 0,
        }
    }

    fn next(&mut self) -> Result<&'a str> {
        self.lineno += 1;
        self.iter
            .next()
            .ok_or_else(|| Error::Model(format!("unexpected end of model file at line {}", self.lineno)))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Model(format!("line {}: {}", self.lineno, msg.into()))
    }
}

fn parse_f64(lines: &Lines, s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| lines.err(format!("cannot parse real from {:?}", s)))?;
    if !v.is_finite() {
        return Err(lines.err(format!("non-finite value {}", v)));
    }
    Ok(v)
}

fn parse_usize(lines: &Lines, s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| lines.err(format!("cannot parse integer from {:?}", s)))
}

pub fn model_from_str(text: &str) -> Result<TargetingModel> {
    let mut lines = Lines::new(text);
    let header = lines.next()?;
    if header.trim_end() != HEADER {
        return Err(lines.err(format!(
            "expected header {:?}, got {:?}",
            HEADER, header
        )));
    }
    let arch_line = lines.next()?;
    let arch = arch_line
        .strip_prefix("architecture ")
        .ok_or_else(|| lines.err("expected an architecture line"))?
        .trim();

    let model = match arch {
        "hurdle-single" => TargetingModel::HurdleSingle {
            f_c: read_gbt(&mut lines, "f_c")?,
            f_v: read_gbt(&mut lines, "f_v")?,
        },
        "hurdle-two" => TargetingModel::HurdleTwo {
            p0: read_gbt(&mut lines, "p0")?,
            p1: read_gbt(&mut lines, "p1")?,
            v0: read_gbt(&mut lines, "v0")?,
            v1: read_gbt(&mut lines, "v1")?,
        },
        "onestage-single" => TargetingModel::OnestageSingle {
            f_y: read_gbt(&mut lines, "f_y")?,
            conversion: read_gbt(&mut lines, "conversion")?,
        },
        "onestage-two" => TargetingModel::OnestageTwo {
            f_y1: read_gbt(&mut lines, "f_y1")?,
            f_y0: read_gbt(&mut lines, "f_y0")?,
            conversion: read_gbt(&mut lines, "conversion")?,
        },
        "onestage-dr" => {
            let f_dr = read_gbt(&mut lines, "f_dr")?;
            let mu1 = read_linear(&mut lines, "mu1")?;
            let mu0 = read_linear(&mut lines, "mu0")?;
            // Peek by reading: either a propensity block or its absence marker.
            let line = lines.next()?;
            let e_model = if line.trim() == "no_propensity_model" {
                None
            } else {
                Some(read_linear_from(&mut lines, line, "e_model")?)
            };
            TargetingModel::OnestageDr {
                f_dr,
                mu1,
                mu0,
                e_model,
                conversion: read_gbt(&mut lines, "conversion")?,
            }
        }
        "ate" => {
            let line = lines.next()?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 || fields[0] != "constants" {
                return Err(lines.err("expected a constants line"));
            }
            let tau = parse_f64(&lines, fields[1])?;
            let p1 = parse_f64(&lines, fields[2])?;
            let v1 = if fields[3] == "none" {
                None
            } else {
                Some(parse_f64(&lines, fields[3])?)
            };
            TargetingModel::AteConstant { tau, p1, v1 }
        }
        "oracle" => {
            let line = lines.next()?;
            let n = parse_usize(
                &lines,
                line.strip_prefix("truth ")
                    .ok_or_else(|| lines.err("expected a truth line"))?,
            )?;
            let mut records = Vec::with_capacity(n);
            for _ in 0..n {
                let row = lines.next()?;
                let f: Vec<&str> = row.split_whitespace().collect();
                if f.len() != 8 {
                    return Err(lines.err(format!("expected 8 truth fields, got {}", f.len())));
                }
                records.push(TruthRecord {
                    id: f[0]
                        .parse()
                        .map_err(|_| lines.err(format!("cannot parse id from {:?}", f[0])))?,
                    p0: parse_f64(&lines, f[1])?,
                    p1: parse_f64(&lines, f[2])?,
                    v0: parse_f64(&lines, f[3])?,
                    v1: parse_f64(&lines, f[4])?,
                    tau_c: parse_f64(&lines, f[5])?,
                    tau_v: parse_f64(&lines, f[6])?,
                    tau: parse_f64(&lines, f[7])?,
                });
            }
            TargetingModel::Oracle {
                truth: TruthTable::new(records)?,
            }
        }
        other => return Err(lines.err(format!("unknown architecture {:?}", other))),
    };
    if lines.next()?.trim_end() != "end" {
        return Err(lines.err("expected the end marker"));
    }
    Ok(model)
}

fn read_gbt(lines: &mut Lines, name: &str) -> Result<GbtModel> {
    let line = lines.next()?;
    read_gbt_from(lines, line, name)
}

fn read_gbt_from(lines: &mut Lines, header: &str, name: &str) -> Result<GbtModel> {
    let f: Vec<&str> = header.split_whitespace().collect();
    if f.len() != 9 || f[0] != "gbt" {
        return Err(lines.err(format!("expected a gbt block for component {:?}", name)));
    }
    if f[1] != name {
        return Err(lines.err(format!("expected component {:?}, got {:?}", name, f[1])));
    }
    let task = Task::parse(f[2])?;
    let n_features = parse_usize(lines, f[3])?;
    let params = GbtParams {
        n_trees: parse_usize(lines, f[4])?,
        max_depth: parse_usize(lines, f[5])?,
        learning_rate: parse_f64(lines, f[6])?,
        min_leaf_weight: parse_f64(lines, f[7])?,
    };
    params.validate()?;
    let base_score = parse_f64(lines, f[8])?;
    let mut trees = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        let line = lines.next()?;
        let n_nodes = parse_usize(
            lines,
            line.strip_prefix("tree ")
                .ok_or_else(|| lines.err("expected a tree line"))?,
        )?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let line = lines.next()?;
            let f: Vec<&str> = line.split_whitespace().collect();
            let node = match f.first().copied() {
                Some("split") if f.len() == 5 => {
                    let feature = parse_usize(lines, f[1])? as u32;
                    if feature as usize >= n_features {
                        return Err(lines.err(format!(
                            "split feature {} out of range for {} features",
                            feature, n_features
                        )));
                    }
                    let left = parse_usize(lines, f[3])?;
                    let right = parse_usize(lines, f[4])?;
                    if left >= n_nodes || right >= n_nodes {
                        return Err(lines.err("child index out of range"));
                    }
                    TreeNode::Split {
                        feature,
                        threshold: parse_f64(lines, f[2])?,
                        left: left as u32,
                        right: right as u32,
                    }
                }
                Some("leaf") if f.len() == 2 => TreeNode::Leaf {
                    value: parse_f64(lines, f[1])?,
                },
                _ => return Err(lines.err("expected a split or leaf node line")),
            };
            nodes.push(node);
        }
        if nodes.is_empty() {
            return Err(lines.err("a tree must have at least one node"));
        }
        trees.push(Tree { nodes });
    }
    Ok(GbtModel::from_parts(
        task, params, n_features, base_score, trees,
    ))
}

fn read_linear(lines: &mut Lines, name: &str) -> Result<LinearModel> {
    let line = lines.next()?;
    read_linear_from(lines, line, name)
}

fn read_linear_from(lines: &mut Lines, header: &str, name: &str) -> Result<LinearModel> {
    let f: Vec<&str> = header.split_whitespace().collect();
    if f.len() != 5 || f[0] != "linear" {
        return Err(lines.err(format!("expected a linear block for component {:?}", name)));
    }
    if f[1] != name {
        return Err(lines.err(format!("expected component {:?}, got {:?}", name, f[1])));
    }
    let link = match f[2] {
        "identity" => Link::Identity,
        "logistic" => Link::Logistic,
        other => return Err(lines.err(format!("unknown link {:?}", other))),
    };
    let p = parse_usize(lines, f[3])?;
    let intercept = parse_f64(lines, f[4])?;
    let mut vectors = Vec::with_capacity(3);
    for label in ["means", "scales", "coef"] {
        let line = lines.next()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(label) {
            return Err(lines.err(format!("expected a {} line", label)));
        }
        let vals: Vec<f64> = parts
            .map(|s| parse_f64(lines, s))
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != p {
            return Err(lines.err(format!(
                "{} has {} entries, expected {}",
                label,
                vals.len(),
                p
            )));
        }
        vectors.push(vals);
    }
    let coef = vectors.pop().unwrap();
    let scales = vectors.pop().unwrap();
    let means = vectors.pop().unwrap();
    LinearModel::from_parts(link, means, scales, coef, intercept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::{
        fit_hurdle_two, fit_onestage_dr, make_ate_model, make_oracle_model, HurdleTwoParams,
        Propensity,
    };
    use crate::data::{CustomerRecord, Dataset};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_data(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut records = Vec::with_capacity(n);
        for id in 0..n {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0f64..2.0)).collect();
            let t = rng.gen_bool(0.5) as u8;
            let p = 0.2 + 0.1 * x[0].tanh() + 0.05 * t as f64;
            let c = rng.gen_bool(p) as u8;
            let v = if c == 1 {
                (8.0 + 2.0 * x[1] + t as f64 + rng.gen_range(0.0f64..1.0)).max(1.0)
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
        Dataset::new(4, records).unwrap()
    }

    fn params(n_trees: usize) -> GbtParams {
        GbtParams {
            n_trees,
            max_depth: 3,
            learning_rate: 0.1,
            min_leaf_weight: 5.0,
        }
    }

    fn assert_round_trip(model: &TargetingModel, data: &Dataset) {
        let text = model_to_string(model).unwrap();
        let loaded = model_from_str(&text).unwrap();
        assert_eq!(model_to_string(&loaded).unwrap(), text);
        let x = data.features();
        let ids = data.ids();
        let a = model.predict(&x, &ids).unwrap();
        let b = loaded.predict(&x, &ids).unwrap();
        assert_eq!(a.tau_hat, b.tau_hat);
        assert_eq!(a.p1_hat, b.p1_hat);
        assert_eq!(a.v1_hat, b.v1_hat);
    }

    #[test]
    fn fitted_models_survive_the_text_format_bit_exactly() {
        let data = toy_data(900, 17);
        let hurdle = fit_hurdle_two(
            &data,
            &HurdleTwoParams {
                conversion0: params(25),
                conversion1: params(25),
                value0: params(25),
                value1: params(25),
            },
        )
        .unwrap();
        assert_round_trip(&hurdle, &data);

        let dr_known =
            fit_onestage_dr(&data, &params(25), &params(10), Propensity::Known(0.5)).unwrap();
        assert_round_trip(&dr_known, &data);

        let dr_fitted =
            fit_onestage_dr(&data, &params(25), &params(10), Propensity::Fitted).unwrap();
        assert_round_trip(&dr_fitted, &data);
    }

    #[test]
    fn constant_and_oracle_models_round_trip() {
        let data = toy_data(300, 3);
        let ate = make_ate_model(&data).unwrap();
        assert_round_trip(&ate, &data);

        let awkward = TargetingModel::AteConstant {
            // A value with no short decimal form must survive exactly.
            tau: 0.1 + 0.2,
            p1: 1.0 / 3.0,
            v1: None,
        };
        let text = model_to_string(&awkward).unwrap();
        let loaded = model_from_str(&text).unwrap();
        let TargetingModel::AteConstant { tau, p1, v1 } = loaded else {
            panic!("wrong variant");
        };
        assert_eq!(tau, 0.1 + 0.2);
        assert_eq!(p1, 1.0 / 3.0);
        assert_eq!(v1, None);

        let truth = crate::simulation::simulate(
            &crate::simulation::SimConfig {
                n: 200,
                nuisance: params(10),
                ..Default::default()
            },
            5,
        )
        .unwrap()
        .truth;
        let oracle = make_oracle_model(truth);
        let text = model_to_string(&oracle).unwrap();
        let loaded = model_from_str(&text).unwrap();
        assert_eq!(model_to_string(&loaded).unwrap(), text);
    }

    #[test]
    fn malformed_files_are_rejected_with_model_errors() {
        let bad_header = "uptarget-model v2\narchitecture ate\nconstants 1 0.5 none\nend\n";
        assert!(matches!(model_from_str(bad_header), Err(Error::Model(_))));

        let unknown_arch = format!("{}\narchitecture mystery\nend\n", HEADER);
        assert!(matches!(model_from_str(&unknown_arch), Err(Error::Model(_))));

        let data = toy_data(200, 9);
        let ate = make_ate_model(&data).unwrap();
        let text = model_to_string(&ate).unwrap();
        let truncated = text.lines().take(2).collect::<Vec<_>>().join("\n");
        assert!(matches!(model_from_str(&truncated), Err(Error::Model(_))));

        let corrupt = text.replace("constants", "constellation");
        assert!(matches!(model_from_str(&corrupt), Err(Error::Model(_))));
    }

    #[test]
    fn save_and_load_through_the_filesystem() {
        let data = toy_data(250, 12);
        let model = make_ate_model(&data).unwrap();
        let dir = std::env::temp_dir().join("uptarget-model-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.txt");
        save_model(&path, &model).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(
            model_to_string(&loaded).unwrap(),
            model_to_string(&model).unwrap()
        );
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
