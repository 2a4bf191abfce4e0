//! Line-oriented text model format.
//!
//! Header: `format_version=1`, the parameters, `base_score`, and the
//! feature list; then one block per tree, one node per line:
//!
//! ```text
//! node <id> split <feature_idx> <threshold> default=<L|R> left=<id> right=<id>
//! node <id> leaf <weight>
//! ```
//!
//! Real numbers are written with 17 significant digits, which is enough
//! for an exact f64 round-trip.

use std::collections::HashMap;

use super::grow::{Node, Tree};
use super::{BoostParams, BoostedModel, Growth};
use crate::error::{Error, Result};

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serialize the model to its text document.
pub fn save_model(model: &BoostedModel) -> String {
    let p = &model.params;
    let mut out = String::new();
    out.push_str("format_version=1\n");
    out.push_str(&format!("growth={}\n", p.growth.as_str()));
    out.push_str(&format!("num_trees={}\n", model.trees.len()));
    out.push_str(&format!("learning_rate={}\n", p.learning_rate));
    out.push_str(&format!("max_depth={}\n", p.max_depth));
    out.push_str(&format!("max_leaves={}\n", p.max_leaves));
    out.push_str(&format!("lambda={}\n", p.lambda));
    out.push_str(&format!("gamma={}\n", p.gamma));
    out.push_str(&format!("min_child_weight={}\n", p.min_child_weight));
    out.push_str(&format!("min_samples_leaf={}\n", p.min_samples_leaf));
    out.push_str(&format!("max_bins={}\n", p.max_bins));
    out.push_str(&format!("pos_weight={}\n", p.pos_weight));
    out.push_str(&format!("subsample={}\n", p.subsample));
    out.push_str(&format!("colsample={}\n", p.colsample));
    out.push_str(&format!("seed={}\n", p.seed));
    out.push_str(&format!("base_score={}\n", real(model.base_score)));
    out.push_str(&format!("num_features={}\n", model.feature_names.len()));
    for name in &model.feature_names {
        out.push_str(&format!("feature={name}\n"));
    }
    for (t, tree) in model.trees.iter().enumerate() {
        out.push_str(&format!("tree={t} nodes={}\n", tree.nodes.len()));
        for (id, node) in tree.nodes.iter().enumerate() {
            match node {
                Node::Split {
                    feature,
                    threshold,
                    missing_left,
                    left,
                    right,
                } => {
                    out.push_str(&format!(
                        "node {id} split {feature} {} default={} left={left} right={right}\n",
                        real(*threshold),
                        if *missing_left { "L" } else { "R" },
                    ));
                }
                Node::Leaf { weight } => {
                    out.push_str(&format!("node {id} leaf {}\n", real(*weight)));
                }
            }
        }
    }
    out.push_str("end\n");
    out
}

struct LineReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> LineReader<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        match self.lines.next() {
            Some((i, line)) => Ok((i + 1, line)),
            None => Err(Error::ModelFormat {
                line: 0,
                msg: "unexpected end of document".to_string(),
            }),
        }
    }

    /// Read a `key=value` line and check the key.
    fn keyed(&mut self, key: &str) -> Result<(usize, String)> {
        let (lineno, line) = self.next()?;
        match line.split_once('=') {
            Some((k, v)) if k == key => Ok((lineno, v.to_string())),
            _ => Err(Error::ModelFormat {
                line: lineno,
                msg: format!("expected {key}=..."),
            }),
        }
    }
}

fn parse_field<T: std::str::FromStr>(lineno: usize, field: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::ModelFormat {
        line: lineno,
        msg: format!("bad {field} value: {value}"),
    })
}

/// Parse a model document; the inverse of `save_model`.
pub fn load_model(text: &str) -> Result<BoostedModel> {
    let mut reader = LineReader {
        lines: text.lines().enumerate(),
    };

    let (lineno, version) = reader.keyed("format_version")?;
    if version != "1" {
        return Err(Error::ModelFormat {
            line: lineno,
            msg: format!("unsupported format_version {version}"),
        });
    }
    let (lineno, growth) = reader.keyed("growth")?;
    let growth = Growth::from_str_opt(&growth).ok_or_else(|| Error::ModelFormat {
        line: lineno,
        msg: format!("bad growth value: {growth}"),
    })?;
    let (l, v) = reader.keyed("num_trees")?;
    let num_trees: usize = parse_field(l, "num_trees", &v)?;
    let (l, v) = reader.keyed("learning_rate")?;
    let learning_rate: f64 = parse_field(l, "learning_rate", &v)?;
    let (l, v) = reader.keyed("max_depth")?;
    let max_depth: usize = parse_field(l, "max_depth", &v)?;
    let (l, v) = reader.keyed("max_leaves")?;
    let max_leaves: usize = parse_field(l, "max_leaves", &v)?;
    let (l, v) = reader.keyed("lambda")?;
    let lambda: f64 = parse_field(l, "lambda", &v)?;
    let (l, v) = reader.keyed("gamma")?;
    let gamma: f64 = parse_field(l, "gamma", &v)?;
    let (l, v) = reader.keyed("min_child_weight")?;
    let min_child_weight: f64 = parse_field(l, "min_child_weight", &v)?;
    let (l, v) = reader.keyed("min_samples_leaf")?;
    let min_samples_leaf: usize = parse_field(l, "min_samples_leaf", &v)?;
    let (l, v) = reader.keyed("max_bins")?;
    let max_bins: usize = parse_field(l, "max_bins", &v)?;
    let (l, v) = reader.keyed("pos_weight")?;
    let pos_weight: f64 = parse_field(l, "pos_weight", &v)?;
    let (l, v) = reader.keyed("subsample")?;
    let subsample: f64 = parse_field(l, "subsample", &v)?;
    let (l, v) = reader.keyed("colsample")?;
    let colsample: f64 = parse_field(l, "colsample", &v)?;
    let (l, v) = reader.keyed("seed")?;
    let seed: u64 = parse_field(l, "seed", &v)?;
    let (l, v) = reader.keyed("base_score")?;
    let base_score: f64 = parse_field(l, "base_score", &v)?;
    let (l, v) = reader.keyed("num_features")?;
    let num_features: usize = parse_field(l, "num_features", &v)?;

    let mut feature_names = Vec::with_capacity(num_features);
    for _ in 0..num_features {
        let (_, name) = reader.keyed("feature")?;
        feature_names.push(name);
    }

    let mut trees = Vec::with_capacity(num_trees);
    for t in 0..num_trees {
        let (lineno, line) = reader.next()?;
        let (tree_part, nodes_part) = line.split_once(' ').ok_or_else(|| Error::ModelFormat {
            line: lineno,
            msg: format!("expected tree={t} nodes=..."),
        })?;
        if tree_part != format!("tree={t}") {
            return Err(Error::ModelFormat {
                line: lineno,
                msg: format!("expected tree={t}, got {tree_part}"),
            });
        }
        let n_nodes: usize = match nodes_part.strip_prefix("nodes=") {
            Some(v) => parse_field(lineno, "nodes", v)?,
            None => {
                return Err(Error::ModelFormat {
                    line: lineno,
                    msg: "expected nodes=<count>".to_string(),
                })
            }
        };
        let mut nodes = Vec::with_capacity(n_nodes);
        for id in 0..n_nodes {
            let (lineno, line) = reader.next()?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |msg: &str| Error::ModelFormat {
                line: lineno,
                msg: msg.to_string(),
            };
            if fields.len() < 3 || fields[0] != "node" {
                return Err(bad("expected node line"));
            }
            let got_id: usize = parse_field(lineno, "node id", fields[1])?;
            if got_id != id {
                return Err(bad(&format!("node ids must be sequential, got {got_id}")));
            }
            match fields[2] {
                "leaf" => {
                    if fields.len() != 4 {
                        return Err(bad("leaf line needs exactly one weight"));
                    }
                    let weight: f64 = parse_field(lineno, "leaf weight", fields[3])?;
                    nodes.push(Node::Leaf { weight });
                }
                "split" => {
                    if fields.len() != 8 {
                        return Err(bad(
                            "split line needs feature, threshold, default, left, right",
                        ));
                    }
                    let feature: usize = parse_field(lineno, "feature index", fields[3])?;
                    if feature >= num_features {
                        return Err(bad(&format!("feature index {feature} out of range")));
                    }
                    let threshold: f64 = parse_field(lineno, "threshold", fields[4])?;
                    let missing_left = match fields[5] {
                        "default=L" => true,
                        "default=R" => false,
                        other => return Err(bad(&format!("bad default direction: {other}"))),
                    };
                    let left: usize = match fields[6].strip_prefix("left=") {
                        Some(v) => parse_field(lineno, "left", v)?,
                        None => return Err(bad("expected left=<id>")),
                    };
                    let right: usize = match fields[7].strip_prefix("right=") {
                        Some(v) => parse_field(lineno, "right", v)?,
                        None => return Err(bad("expected right=<id>")),
                    };
                    if left >= n_nodes || right >= n_nodes {
                        return Err(bad("child id out of range"));
                    }
                    nodes.push(Node::Split {
                        feature,
                        threshold,
                        missing_left,
                        left,
                        right,
                    });
                }
                other => return Err(bad(&format!("unknown node kind: {other}"))),
            }
        }
        trees.push(Tree { nodes });
    }

    let (lineno, line) = reader.next()?;
    if line != "end" {
        return Err(Error::ModelFormat {
            line: lineno,
            msg: "expected end marker".to_string(),
        });
    }

    let params = BoostParams {
        growth,
        num_trees,
        learning_rate,
        max_depth,
        max_leaves,
        lambda,
        gamma,
        min_child_weight,
        min_samples_leaf,
        max_bins,
        pos_weight,
        subsample,
        colsample,
        seed,
    };
    Ok(BoostedModel {
        base_score,
        trees,
        feature_names,
        params,
    })
}

/// Internal consistency check used by tests: every referenced child id
/// exists and each non-root node is referenced exactly once.
#[allow(dead_code)]
pub(crate) fn check_tree_links(tree: &Tree) -> bool {
    let mut referenced: HashMap<usize, usize> = HashMap::new();
    for node in &tree.nodes {
        if let Node::Split { left, right, .. } = node {
            *referenced.entry(*left).or_insert(0) += 1;
            *referenced.entry(*right).or_insert(0) += 1;
        }
    }
    (1..tree.nodes.len()).all(|id| referenced.get(&id) == Some(&1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::Label;
    use crate::features::FeatureMatrix;
    use crate::gbt::train;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn training_matrix(rows: usize) -> FeatureMatrix {
        let mut rng = StdRng::seed_from_u64(21);
        let mut m = FeatureMatrix::new(vec!["a".to_string(), "b".to_string(), "c".to_string()]);
        for r in 0..rows {
            let a: f64 = rng.gen_range(-3.0..3.0);
            let b: f64 = rng.gen_range(-3.0..3.0);
            let label = if a * b > 0.0 { Label::Positive } else { Label::Negative };
            let c = if rng.gen_bool(0.2) { f64::NAN } else { rng.gen() };
            m.push_row(format!("u{r}"), format!("p{r}"), label, vec![a, b, c]);
        }
        m
    }

    fn assert_roundtrip(params: BoostParams) {
        let m = training_matrix(120);
        let model = train(&m, &params).unwrap();
        let text = save_model(&model);
        let loaded = load_model(&text).unwrap();
        assert_eq!(loaded.params, model.params);
        assert_eq!(loaded.feature_names, model.feature_names);
        assert_eq!(loaded.trees, model.trees);
        assert_eq!(loaded.base_score.to_bits(), model.base_score.to_bits());
        let a = model.predict_proba(&m).unwrap();
        let b = loaded.predict_proba(&m).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        // Serialization is stable under a second round trip.
        assert_eq!(save_model(&loaded), text);
    }

    #[test]
    fn roundtrip_zero_trees() {
        assert_roundtrip(BoostParams {
            num_trees: 0,
            ..BoostParams::default()
        });
    }

    #[test]
    fn roundtrip_stump() {
        assert_roundtrip(BoostParams {
            num_trees: 1,
            growth: super::Growth::Depthwise,
            max_depth: 1,
            ..BoostParams::default()
        });
    }

    #[test]
    fn roundtrip_deep_leafwise() {
        assert_roundtrip(BoostParams {
            num_trees: 12,
            growth: super::Growth::Leafwise,
            max_leaves: 31,
            learning_rate: 0.17,
            lambda: 0.3,
            subsample: 0.8,
            colsample: 0.7,
            seed: 9,
            ..BoostParams::default()
        });
    }

    #[test]
    fn malformed_documents_report_lines() {
        let m = training_matrix(40);
        let model = train(&m, &BoostParams { num_trees: 2, ..Default::default() }).unwrap();
        let text = save_model(&model);

        // Truncated document.
        let truncated: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        assert!(load_model(&truncated).is_err());

        // Corrupt a node line.
        let corrupted = text.replace("node 0 split", "node 0 splat");
        match load_model(&corrupted) {
            Err(Error::ModelFormat { line, .. }) => assert!(line > 0),
            other => panic!("expected format error, got {other:?}"),
        }

        // Bad numeric field.
        let bad = text.replacen("learning_rate=0.1", "learning_rate=fast", 1);
        assert!(load_model(&bad).is_err());
    }

    #[test]
    fn node_links_consistent() {
        let m = training_matrix(150);
        let model = train(&m, &BoostParams { num_trees: 5, ..Default::default() }).unwrap();
        for tree in &model.trees {
            assert!(check_tree_links(tree));
        }
    }
}
