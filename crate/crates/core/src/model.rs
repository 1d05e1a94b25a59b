//! JSON model files: one shift and named potentials, measures, cocycles and
//! hyperbolic models that refer to each other by name.
//!
//! ```json
//! {
//!   "sft": { "matrix": ["11", "10"] },
//!   "potentials": { "phi": { "depth": 1, "values": { "0": 0.0, "1": 1.0 } } },
//!   "measures": { "mu": { "kind": "markov", "order": 1, "rows": [[0.5, 0.5], [1.0, 0.0]] } }
//! }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::applications::{Bundle, Cocycle, HyperbolicModel, Mat2};
use crate::error::{Error, Result};
use crate::measures::{MarkovMeasure, Potential};
use crate::sft::{format_block, parse_block, Sft};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SftSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Rows of `0`/`1` characters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub successors: Option<Vec<Vec<usize>>>,
    /// Full shift on this many symbols.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    /// Value per admissible block, keyed by the block's text form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    /// Next-symbol rows, one per admissible `order`-block in lexicographic order.
    /// `stationary` is informational; it is recomputed on load.
    Markov {
        order: usize,
        rows: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stationary: Option<Vec<f64>>,
    },
    Bernoulli { probs: Vec<f64> },
    Periodic { word: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CocycleSpec {
    pub matrices: Vec<Mat2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleSpec {
    pub potential: String,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperbolicSpec {
    pub psi_u: String,
    pub psi_s: String,
    #[serde(default = "one")]
    pub d_u: usize,
    #[serde(default = "one")]
    pub d_s: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bundles: Vec<BundleSpec>,
}

fn one() -> usize {
    1
}

/// The file as written, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub sft: SftSpec,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub potentials: BTreeMap<String, PotentialSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub measures: BTreeMap<String, MeasureSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub cocycles: BTreeMap<String, CocycleSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub hyperbolic: BTreeMap<String, HyperbolicSpec>,
}

/// A validated model.
#[derive(Debug, Clone)]
pub struct Model {
    pub sft: Sft,
    pub potentials: BTreeMap<String, Potential>,
    pub measures: BTreeMap<String, MarkovMeasure>,
    pub cocycles: BTreeMap<String, Cocycle>,
    pub hyperbolic: BTreeMap<String, HyperbolicModel>,
}

impl Model {
    pub fn potential(&self, name: &str) -> Result<&Potential> {
        self.potentials.get(name).ok_or_else(|| missing("potential", name))
    }

    pub fn measure(&self, name: &str) -> Result<&MarkovMeasure> {
        self.measures.get(name).ok_or_else(|| missing("measure", name))
    }

    pub fn cocycle(&self, name: &str) -> Result<&Cocycle> {
        self.cocycles.get(name).ok_or_else(|| missing("cocycle", name))
    }

    pub fn hyperbolic_model(&self, name: &str) -> Result<&HyperbolicModel> {
        self.hyperbolic.get(name).ok_or_else(|| missing("hyperbolic", name))
    }
}

fn missing(kind: &'static str, name: &str) -> Error {
    Error::Reference {
        block: "command line".into(),
        kind,
        name: name.into(),
        line: 0,
        column: 0,
    }
}

/// Model-file form of a measure, exact enough to parse back.
pub fn measure_spec(mu: &MarkovMeasure) -> MeasureSpec {
    MeasureSpec::Markov {
        order: mu.order(),
        rows: mu.kernel_rows(),
        stationary: Some(mu.stationary().to_vec()),
    }
}

pub fn potential_spec(phi: &Potential) -> PotentialSpec {
    PotentialSpec {
        depth: Some(phi.depth()),
        values: Some(phi.values().iter().map(|(b, v)| (format_block(b), *v)).collect()),
        constant: None,
    }
}

pub fn sft_spec(sft: &Sft) -> SftSpec {
    SftSpec {
        label: Some(sft.label.clone()),
        matrix: None,
        successors: Some(sft.successor_lists().to_vec()),
        full: None,
    }
}

pub fn parse_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_model_str(&text)
}

pub fn parse_model_str(text: &str) -> Result<Model> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    build_model(&file, text)
}

/// Position of the first `"name"` string literal after `"key"`, used to
/// locate dangling references.
fn locate(text: &str, key: &str, name: &str) -> (usize, usize) {
    let needle = format!("\"{name}\"");
    let from = text.find(&format!("\"{key}\"")).unwrap_or(0);
    let at = text[from..].find(&needle).map(|i| i + from).or_else(|| text.find(&needle));
    match at {
        Some(i) => {
            let before = &text[..i];
            let line = before.matches('\n').count() + 1;
            let column = i - before.rfind('\n').map_or(0, |p| p + 1) + 1;
            (line, column)
        }
        None => (0, 0),
    }
}

fn in_block(block: String, e: Error) -> Error {
    match e {
        Error::InvalidInput(m) => Error::InvalidInput(format!("{block}: {m}")),
        other => other,
    }
}

pub fn build_model(file: &ModelFile, text: &str) -> Result<Model> {
    let s = &file.sft;
    let label = s.label.clone().unwrap_or_else(|| "model".into());
    let sft = match (&s.matrix, &s.successors, s.full) {
        (Some(rows), None, None) => Sft::from_rows(label, rows)?,
        (None, Some(succ), None) => Sft::from_successors(label, succ.clone())?,
        (None, None, Some(n)) => {
            let mut full = Sft::full_shift(n.max(1));
            if n == 0 {
                return Err(Error::InvalidInput("sft: full shift needs a symbol".into()));
            }
            full.label = label;
            full
        }
        _ => {
            return Err(Error::InvalidInput(
                "sft: give exactly one of matrix, successors or full".into(),
            ))
        }
    };

    let mut potentials = BTreeMap::new();
    for (name, p) in &file.potentials {
        let block = format!("potentials.{name}");
        let phi = match (p.depth, &p.values, p.constant) {
            (Some(depth), Some(values), None) => {
                let mut parsed = BTreeMap::new();
                for (k, v) in values {
                    parsed.insert(parse_block(k).map_err(|e| in_block(block.clone(), e))?, *v);
                }
                Potential::new(&sft, depth, parsed).map_err(|e| in_block(block.clone(), e))?
            }
            (None, None, Some(c)) => Potential::constant(&sft, c),
            _ => {
                return Err(Error::InvalidInput(format!(
                    "{block}: give depth with values, or constant"
                )))
            }
        };
        potentials.insert(name.clone(), phi);
    }

    let mut measures = BTreeMap::new();
    for (name, m) in &file.measures {
        let block = format!("measures.{name}");
        let mu = match m {
            MeasureSpec::Markov { order, rows, .. } => MarkovMeasure::build(&sft, *order, rows),
            MeasureSpec::Bernoulli { probs } => {
                if probs.len() != sft.alphabet_size() {
                    Err(Error::InvalidInput(format!(
                        "expected {} probabilities",
                        sft.alphabet_size()
                    )))
                } else {
                    let rows = vec![probs.clone(); sft.alphabet_size()];
                    MarkovMeasure::build(&sft, 1, &rows)
                }
            }
            MeasureSpec::Periodic { word } => {
                parse_block(word).and_then(|w| MarkovMeasure::periodic(&sft, &w))
            }
        }
        .map_err(|e| in_block(block, e))?;
        measures.insert(name.clone(), mu);
    }

    let mut cocycles = BTreeMap::new();
    for (name, c) in &file.cocycles {
        let cocycle = Cocycle::new(c.matrices.clone()).map_err(|e| in_block(format!("cocycles.{name}"), e))?;
        cocycles.insert(name.clone(), cocycle);
    }

    let mut hyperbolic = BTreeMap::new();
    for (name, h) in &file.hyperbolic {
        let block = format!("hyperbolic.{name}");
        let get = |pname: &str| -> Result<Potential> {
            potentials.get(pname).cloned().ok_or_else(|| {
                let (line, column) = locate(text, name, pname);
                Error::Reference {
                    block: block.clone(),
                    kind: "potential",
                    name: pname.into(),
                    line,
                    column,
                }
            })
        };
        let mut model = HyperbolicModel::new(sft.clone(), get(&h.psi_u)?, get(&h.psi_s)?, h.d_u, h.d_s)
            .map_err(|e| in_block(block.clone(), e))?;
        if !h.bundles.is_empty() {
            let bundles = h
                .bundles
                .iter()
                .map(|b| {
                    Ok(Bundle {
                        psi: get(&b.potential)?,
                        dim: b.dim,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            model = model.with_bundles(bundles)?;
        }
        hyperbolic.insert(name.clone(), model);
    }

    Ok(Model {
        sft,
        potentials,
        measures,
        cocycles,
        hyperbolic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_model_parses() {
        let m = parse_model_str(r#"{"sft": {"full": 2}}"#).unwrap();
        assert_eq!(m.sft.alphabet_size(), 2);
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_location() {
        let err = parse_model_str("{\n  \"sft\": {\"full\": 2},\n  \"extra\": 1\n}").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dangling_reference_names_the_block() {
        let text = r#"{
  "sft": {"full": 2},
  "potentials": {"u": {"constant": 1.0}},
  "hyperbolic": {"geo": {"psi_u": "u", "psi_s": "s"}}
}"#;
        match parse_model_str(text).unwrap_err() {
            Error::Reference {
                block, name, line, ..
            } => {
                assert_eq!(block, "hyperbolic.geo");
                assert_eq!(name, "s");
                assert_eq!(line, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_stochastic_row_reports_its_index() {
        let text = r#"{"sft": {"full": 2},
            "measures": {"bad": {"kind": "markov", "order": 1, "rows": [[0.5, 0.5], [0.5, 0.4]]}}}"#;
        match parse_model_str(text).unwrap_err() {
            Error::NotStochastic { row, sum } => {
                assert_eq!(row, 1);
                assert!((sum - 0.9).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn emitted_specs_parse_back() {
        let sft = Sft::golden_mean();
        let phi = Potential::from_fn(&sft, 2, |b| b[0] as f64 + 0.5 * b[1] as f64).unwrap();
        let mu = MarkovMeasure::build(&sft, 1, &[vec![0.3, 0.7], vec![1.0, 0.0]]).unwrap();
        let file = ModelFile {
            sft: sft_spec(&sft),
            potentials: BTreeMap::from([("phi".to_string(), potential_spec(&phi))]),
            measures: BTreeMap::from([("mu".to_string(), measure_spec(&mu))]),
            cocycles: BTreeMap::new(),
            hyperbolic: BTreeMap::new(),
        };
        let text = serde_json::to_string(&file).unwrap();
        let back = parse_model_str(&text).unwrap();
        assert_eq!(back.potentials["phi"], phi);
        assert_eq!(back.measures["mu"].kernel_rows(), mu.kernel_rows());
        assert_eq!(back.sft.successor_lists(), sft.successor_lists());
    }
}
