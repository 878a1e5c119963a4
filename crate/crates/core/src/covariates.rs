//! Dyad-level observation table and covariates derived from node attributes.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_io::{AttributeTable, Graph};

/// How one or more covariate columns are derived for dyad `(i, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateSpec {
    /// One dummy per unordered pair of levels, except the declared reference pair.
    PairDummies {
        attribute: String,
        reference: [String; 2],
    },
    /// 1 when both nodes share the attribute value.
    SameValue {
        attribute: String,
        #[serde(default)]
        name: Option<String>,
    },
    /// `|x_i - x_j|` of a numeric attribute.
    AbsDifference {
        attribute: String,
        #[serde(default)]
        name: Option<String>,
    },
    /// Values read per dyad from a `source,target,value` file; absent dyads get `default`.
    Passthrough {
        name: String,
        path: PathBuf,
        #[serde(default)]
        default: f64,
    },
}

impl CovariateSpec {
    pub fn attribute(&self) -> Option<&str> {
        match self {
            CovariateSpec::PairDummies { attribute, .. }
            | CovariateSpec::SameValue { attribute, .. }
            | CovariateSpec::AbsDifference { attribute, .. } => Some(attribute),
            CovariateSpec::Passthrough { .. } => None,
        }
    }
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// The `n(n-1)/2` dyads of a graph in lexicographic `(i, j)`, `i < j` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadTable {
    node_ids: Vec<String>,
    dyads: Vec<(usize, usize)>,
    response: Vec<u32>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl DyadTable {
    /// Dyads and responses of `graph` without any covariate.
    pub fn from_graph(graph: &Graph) -> Self {
        let n = graph.node_count();
        let mut dyads = Vec::with_capacity(graph.dyad_count());
        let mut response = Vec::with_capacity(graph.dyad_count());
        for i in 0..n {
            for j in i + 1..n {
                dyads.push((i, j));
                response.push(graph.weight(i, j));
            }
        }
        DyadTable {
            node_ids: graph.node_ids().to_vec(),
            dyads,
            response,
            names: Vec::new(),
            columns: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.dyads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dyads.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn dyads(&self) -> &[(usize, usize)] {
        &self.dyads
    }

    pub fn response(&self) -> &[u32] {
        &self.response
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        let k = self.names.iter().position(|n| n == name)?;
        Some(&self.columns[k])
    }

    /// Appends a covariate column. Values must be finite and one per dyad.
    pub fn push_column(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if values.len() != self.len() {
            return Err(Error::Validation(format!(
                "covariate `{name}` has {} values for {} dyads",
                values.len(),
                self.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (i, j) = self.dyads[pos];
            return Err(Error::Validation(format!(
                "covariate `{name}` is not finite at dyad ({}, {})",
                self.node_ids[i], self.node_ids[j]
            )));
        }
        if self.names.contains(&name) {
            return Err(Error::Validation(format!("duplicate covariate name `{name}`")));
        }
        self.names.push(name);
        self.columns.push(values);
        Ok(())
    }

    /// Position of dyad `(i, j)` (either order) in the fixed dyad order.
    pub fn dyad_index(&self, i: usize, j: usize) -> usize {
        let (i, j) = (i.min(j), i.max(j));
        let n = self.node_count();
        // rows before i hold (n-1) + (n-2) + ... + (n-i) dyads
        i * (2 * n - i - 1) / 2 + (j - i - 1)
    }
}

/// Builds the dyad table of `graph` with the covariates described by `specs`.
pub fn build_dyad_table(
    graph: &Graph,
    attrs: &AttributeTable,
    specs: &[CovariateSpec],
) -> Result<DyadTable> {
    let mut table = DyadTable::from_graph(graph);
    let ids = graph.node_ids();
    for spec in specs {
        match spec {
            CovariateSpec::PairDummies {
                attribute,
                reference,
            } => {
                let values: Vec<&str> = ids
                    .iter()
                    .map(|id| attrs.require(id, attribute))
                    .collect::<Result<_>>()?;
                let levels: BTreeSet<&str> = values.iter().copied().collect();
                let levels: Vec<&str> = levels.into_iter().collect();
                let mut pairs = Vec::new();
                for (a, la) in levels.iter().enumerate() {
                    for lb in &levels[a..] {
                        pairs.push(pair_key(la, lb));
                    }
                }
                let reference = pair_key(&reference[0], &reference[1]);
                if !pairs.contains(&reference) {
                    return Err(Error::Validation(format!(
                        "reference pair {}-{} of `{attribute}` is not an observed level pair",
                        reference.0, reference.1
                    )));
                }
                pairs.retain(|p| *p != reference);
                let slot: HashMap<(String, String), usize> =
                    pairs.iter().cloned().enumerate().map(|(k, p)| (p, k)).collect();
                let mut cols = vec![vec![0.0; table.len()]; pairs.len()];
                for (d, &(i, j)) in table.dyads.iter().enumerate() {
                    if let Some(&k) = slot.get(&pair_key(values[i], values[j])) {
                        cols[k][d] = 1.0;
                    }
                }
                for ((a, b), col) in pairs.into_iter().zip(cols) {
                    table.push_column(format!("{attribute}:{a}-{b}"), col)?;
                }
            }
            CovariateSpec::SameValue { attribute, name } => {
                let values: Vec<&str> = ids
                    .iter()
                    .map(|id| attrs.require(id, attribute))
                    .collect::<Result<_>>()?;
                let col = table
                    .dyads
                    .iter()
                    .map(|&(i, j)| f64::from(u8::from(values[i] == values[j])))
                    .collect();
                let name = name.clone().unwrap_or_else(|| format!("same_{attribute}"));
                table.push_column(name, col)?;
            }
            CovariateSpec::AbsDifference { attribute, name } => {
                let values: Vec<f64> = ids
                    .iter()
                    .map(|id| attrs.require_numeric(id, attribute))
                    .collect::<Result<_>>()?;
                let col = table
                    .dyads
                    .iter()
                    .map(|&(i, j)| (values[i] - values[j]).abs())
                    .collect();
                let name = name
                    .clone()
                    .unwrap_or_else(|| format!("{attribute}_difference"));
                table.push_column(name, col)?;
            }
            CovariateSpec::Passthrough {
                name,
                path,
                default,
            } => {
                let col = read_passthrough(graph, &table, path, *default)?;
                table.push_column(name.clone(), col)?;
            }
        }
    }
    Ok(table)
}

fn read_passthrough(
    graph: &Graph,
    table: &DyadTable,
    path: &PathBuf,
    default: f64,
) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut col = vec![default; table.len()];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(if line.contains('\t') { '\t' } else { ',' })
            .map(str::trim)
            .collect();
        let parse_err = |message: String| Error::Parse {
            path: path.clone(),
            line: lineno + 1,
            message,
        };
        if fields.len() != 3 {
            return Err(parse_err("expected source,target,value".into()));
        }
        let value: f64 = match fields[2].parse() {
            Ok(v) => v,
            // tolerate a header line
            Err(_) if lineno == 0 => continue,
            Err(_) => return Err(parse_err(format!("non-numeric value `{}`", fields[2]))),
        };
        let (Some(i), Some(j)) = (graph.index_of(fields[0]), graph.index_of(fields[1])) else {
            return Err(parse_err("unknown node id".into()));
        };
        if i == j {
            return Err(parse_err("self-pair in dyad covariate".into()));
        }
        col[table.dyad_index(i, j)] = value;
    }
    Ok(col)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

/// Centering and scaling applied by [`standardize`], enough to map coefficients back.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Scaling {
    pub columns: Vec<ColumnScale>,
}

impl Scaling {
    /// Maps coefficients fitted on standardized columns back to the original units.
    ///
    /// `names` labels `coefs`; the intercept column (if any) absorbs the centering.
    pub fn back_transform(&self, names: &[String], coefs: &[f64], intercept: &str) -> Vec<f64> {
        let mut out = coefs.to_vec();
        let mut shift = 0.0;
        for c in &self.columns {
            if let Some(k) = names.iter().position(|n| *n == c.name) {
                out[k] = coefs[k] / c.sd;
                shift += coefs[k] * c.mean / c.sd;
            }
        }
        if let Some(k) = names.iter().position(|n| n == intercept) {
            out[k] -= shift;
        }
        out
    }
}

/// Rescales the selected columns to zero mean and unit sample standard deviation.
pub fn standardize(table: &DyadTable, columns: &[String]) -> Result<(DyadTable, Scaling)> {
    let mut out = table.clone();
    let mut scaling = Scaling::default();
    for name in columns {
        let k = out
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Validation(format!("unknown covariate `{name}`")))?;
        let col = &mut out.columns[k];
        let m = col.len();
        if m < 2 {
            return Err(Error::Validation(format!(
                "covariate `{name}` needs at least two dyads to standardize"
            )));
        }
        let mean = col.iter().sum::<f64>() / m as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 0.0) || sd <= 1e-12 * mean.abs().max(1.0) {
            return Err(Error::Validation(format!(
                "covariate `{name}` has zero spread; its coefficient is inestimable"
            )));
        }
        for v in col.iter_mut() {
            *v = (*v - mean) / sd;
        }
        scaling.columns.push(ColumnScale {
            name: name.clone(),
            mean,
            sd,
        });
    }
    Ok((out, scaling))
}
