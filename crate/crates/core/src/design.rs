//! Constraint-respecting design matrices for the degree-corrected Bernoulli blockmodel and
//! the covariate-adjusted Poisson blockmodel.
//!
//! Sum-to-zero constraints are built into the coding: the last node (and the last block)
//! by label order is folded into the remaining columns with weight -1, and the diagonal
//! block interactions are replaced by `phi_rr = -sum_{t != r} phi_rt`. Every fitted
//! coefficient vector therefore satisfies the constraints exactly.

use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::covariates::DyadTable;
use crate::error::{Error, Result};
use crate::glm::Family;
use crate::graph_io::Partition;

pub const INTERCEPT: &str = "(Intercept)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub node_effects: bool,
    pub block_effects: bool,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub penalize_covariates: bool,
}

impl ModelSpec {
    /// Degree-corrected Bernoulli blockmodel: `logit pi = b0 + a_i + a_j + phi_rs`.
    pub fn degree_corrected() -> Self {
        ModelSpec {
            family: Family::BernoulliLogit,
            node_effects: true,
            block_effects: false,
            covariates: Vec::new(),
            penalize_covariates: false,
        }
    }

    /// Covariate-adjusted Poisson blockmodel: `log mu = b0 + x b + g_r + g_s + phi_rs`.
    pub fn covariate_poisson(covariates: Vec<String>) -> Self {
        ModelSpec {
            family: Family::PoissonLog,
            node_effects: false,
            block_effects: true,
            covariates,
            penalize_covariates: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnGroup {
    Intercept,
    Covariate,
    NodeEffect,
    BlockEffect,
    BlockInteraction,
}

/// Index of the unordered pair `{r, s}`, `r < s`, among the `p(p-1)/2` pairs.
pub fn pair_index(r: usize, s: usize, p: usize) -> usize {
    debug_assert!(r < s && s < p);
    r * (2 * p - r - 1) / 2 + (s - r - 1)
}

/// Sparse-row design matrix plus the column bookkeeping needed to read fits back.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    names: Vec<String>,
    groups: Vec<ColumnGroup>,
    penalized: Vec<bool>,
    inestimable: Vec<bool>,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
    spec: ModelSpec,
    node_ids: Vec<String>,
    node_blocks: Vec<usize>,
    block_labels: Vec<String>,
    interactions: Range<usize>,
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn groups(&self) -> &[ColumnGroup] {
        &self.groups
    }

    pub fn penalized_mask(&self) -> &[bool] {
        &self.penalized
    }

    /// Columns without any nonzero entry; fits hold them at zero.
    pub fn inestimable_mask(&self) -> &[bool] {
        &self.inestimable
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn block_count(&self) -> usize {
        self.block_labels.len()
    }

    pub fn block_labels(&self) -> &[String] {
        &self.block_labels
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn node_blocks(&self) -> &[usize] {
        &self.node_blocks
    }

    /// Columns holding the off-diagonal block interactions `phi_rs`, `r < s`.
    pub fn interaction_columns(&self) -> Range<usize> {
        self.interactions.clone()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Node whose effect is folded into the others, if node effects are present.
    pub fn folded_node(&self) -> Option<&str> {
        self.spec
            .node_effects
            .then(|| self.node_ids.last().map(String::as_str))
            .flatten()
    }

    pub fn folded_block(&self) -> Option<&str> {
        self.spec
            .block_effects
            .then(|| self.block_labels.last().map(String::as_str))
            .flatten()
    }

    /// Parameter count in the convention `n + p(p-1)/2` (node effects) or
    /// `dim(beta) + p(p+1)/2` (block effects), with the intercept absorbed.
    pub fn convention_parameter_count(&self) -> usize {
        let n = self.node_ids.len();
        let p = self.block_count();
        let k = self.spec.covariates.len();
        let mut count = k + p * (p - 1) / 2;
        if self.spec.node_effects {
            count += n;
        }
        if self.spec.block_effects {
            count += p;
        }
        if !self.spec.node_effects && !self.spec.block_effects {
            count += 1;
        }
        count
    }

    /// Number of columns that are actually estimated.
    pub fn free_column_count(&self) -> usize {
        self.inestimable.iter().filter(|&&z| !z).count()
    }

    /// Linear predictor `X b`.
    pub fn mul_vec(&self, coefs: &[f64]) -> Vec<f64> {
        assert_eq!(coefs.len(), self.ncols());
        (0..self.nrows())
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter()
                    .zip(vals)
                    .map(|(&c, &v)| v * coefs[c as usize])
                    .sum()
            })
            .collect()
    }

    /// `X' v`.
    pub fn tr_mul(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.nrows());
        let mut out = vec![0.0; self.ncols()];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            for (&c, &x) in cols.iter().zip(vals) {
                out[c as usize] += x * vi;
            }
        }
        out
    }

    /// `X' diag(w) X` as a dense symmetric matrix.
    pub fn weighted_gram(&self, w: &[f64]) -> DMatrix<f64> {
        assert_eq!(w.len(), self.nrows());
        let q = self.ncols();
        let mut h = DMatrix::<f64>::zeros(q, q);
        for (i, &wi) in w.iter().enumerate() {
            if wi == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            for (a, (&ca, &va)) in cols.iter().zip(vals).enumerate() {
                let wa = wi * va;
                let ca = ca as usize;
                for (&cb, &vb) in cols[a..].iter().zip(&vals[a..]) {
                    h[(cb as usize, ca)] += wa * vb;
                }
            }
        }
        // column indices within a row are sorted, so only the lower triangle was filled
        for c in 0..q {
            for r in c + 1..q {
                h[(c, r)] = h[(r, c)];
            }
        }
        h
    }

    /// Full symmetric `p x p` interaction matrix from a coefficient vector over all columns.
    pub fn phi_matrix(&self, coefs: &[f64]) -> Vec<Vec<f64>> {
        reconstruct_phi(&coefs[self.interactions.clone()], self.block_count())
            .expect("interaction range has p(p-1)/2 columns")
    }

    /// Writes the matrix as sparse triplets: a `#` header, one `# col` line per column,
    /// then `row col value` lines with zero-based indices.
    pub fn write_triplets(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let _ = writeln!(out, "# rows {} cols {} nnz {}", self.nrows(), self.ncols(), self.nnz());
        for (k, name) in self.names.iter().enumerate() {
            let _ = writeln!(
                out,
                "# col {k} {name} penalized={} inestimable={}",
                self.penalized[k], self.inestimable[k]
            );
        }
        for i in 0..self.nrows() {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                let _ = writeln!(out, "{i} {c} {v}");
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Encodes the dyad table under `spec` with sum-to-zero node/block effects and the
/// diagonal-interaction substitution.
pub fn encode(table: &DyadTable, partition: &Partition, spec: &ModelSpec) -> Result<DesignMatrix> {
    let p = partition.block_count();
    if p < 1 {
        return Err(Error::Design("partition must have at least one block".into()));
    }
    let n = table.node_count();
    if n < 2 {
        return Err(Error::Design("at least two nodes are required".into()));
    }
    let node_blocks: Vec<usize> = table
        .node_ids()
        .iter()
        .map(|id| {
            partition
                .block_of(id)
                .ok_or_else(|| Error::Design(format!("node {id} has no block")))
        })
        .collect::<Result<_>>()?;
    let mut used = vec![false; p];
    for &b in &node_blocks {
        used[b] = true;
    }
    if let Some(b) = used.iter().position(|u| !u) {
        return Err(Error::Design(format!(
            "block {} has no node in the dyad table",
            partition.block_labels()[b]
        )));
    }
    let covariates: Vec<&[f64]> = spec
        .covariates
        .iter()
        .map(|name| {
            table
                .column(name)
                .ok_or_else(|| Error::Design(format!("covariate `{name}` is not in the dyad table")))
        })
        .collect::<Result<_>>()?;

    let mut names = vec![INTERCEPT.to_string()];
    let mut groups = vec![ColumnGroup::Intercept];
    let mut penalized = vec![false];
    for name in &spec.covariates {
        names.push(name.clone());
        groups.push(ColumnGroup::Covariate);
        penalized.push(spec.penalize_covariates);
    }
    let node_offset = names.len();
    if spec.node_effects {
        for id in &table.node_ids()[..n - 1] {
            names.push(format!("alpha[{id}]"));
            groups.push(ColumnGroup::NodeEffect);
            penalized.push(false);
        }
    }
    let block_offset = names.len();
    let labels = partition.block_labels();
    if spec.block_effects {
        for label in &labels[..p - 1] {
            names.push(format!("gamma[{label}]"));
            groups.push(ColumnGroup::BlockEffect);
            penalized.push(false);
        }
    }
    let inter_offset = names.len();
    for r in 0..p {
        for s in r + 1..p {
            names.push(format!("phi[{},{}]", labels[r], labels[s]));
            groups.push(ColumnGroup::BlockInteraction);
            penalized.push(true);
        }
    }
    let q = names.len();

    let mut row_ptr = Vec::with_capacity(table.len() + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    let mut entries: Vec<(usize, f64)> = Vec::new();
    row_ptr.push(0);
    for (d, &(i, j)) in table.dyads().iter().enumerate() {
        entries.clear();
        entries.push((0, 1.0));
        for (k, col) in covariates.iter().enumerate() {
            entries.push((1 + k, col[d]));
        }
        if spec.node_effects {
            for node in [i, j] {
                if node < n - 1 {
                    entries.push((node_offset + node, 1.0));
                } else {
                    entries.extend((0..n - 1).map(|c| (node_offset + c, -1.0)));
                }
            }
        }
        let (r, s) = (node_blocks[i], node_blocks[j]);
        if spec.block_effects {
            for b in [r, s] {
                if b < p - 1 {
                    entries.push((block_offset + b, 1.0));
                } else {
                    entries.extend((0..p - 1).map(|c| (block_offset + c, -1.0)));
                }
            }
        }
        if r != s {
            entries.push((inter_offset + pair_index(r.min(s), r.max(s), p), 1.0));
        } else {
            for t in (0..p).filter(|&t| t != r) {
                entries.push((inter_offset + pair_index(r.min(t), r.max(t), p), -1.0));
            }
        }
        entries.sort_by_key(|e| e.0);
        let mut k = 0;
        while k < entries.len() {
            let c = entries[k].0;
            let mut v = 0.0;
            while k < entries.len() && entries[k].0 == c {
                v += entries[k].1;
                k += 1;
            }
            if v != 0.0 {
                col_idx.push(c as u32);
                values.push(v);
            }
        }
        row_ptr.push(values.len());
    }

    let mut inestimable = vec![true; q];
    for &c in &col_idx {
        inestimable[c as usize] = false;
    }
    for (k, &flag) in inestimable.iter().enumerate() {
        if flag {
            log::warn!("design column {} has no nonzero entry; it is held at 0", names[k]);
        }
    }

    Ok(DesignMatrix {
        names,
        groups,
        penalized,
        inestimable,
        row_ptr,
        col_idx,
        values,
        spec: spec.clone(),
        node_ids: table.node_ids().to_vec(),
        node_blocks,
        block_labels: labels.to_vec(),
        interactions: inter_offset..q,
    })
}

/// Symmetric interaction matrix from the `p(p-1)/2` off-diagonal values (pair order),
/// with each diagonal entry set so that its row sums to zero.
pub fn reconstruct_phi(coefs: &[f64], p: usize) -> Result<Vec<Vec<f64>>> {
    if coefs.len() != p * (p.saturating_sub(1)) / 2 {
        return Err(Error::InvalidArgument(format!(
            "{} interaction coefficients given, {} expected for {p} blocks",
            coefs.len(),
            p * p.saturating_sub(1) / 2
        )));
    }
    let mut phi = vec![vec![0.0; p]; p];
    for r in 0..p {
        for s in r + 1..p {
            let v = coefs[pair_index(r, s, p)];
            phi[r][s] = v;
            phi[s][r] = v;
        }
    }
    for r in 0..p {
        let off: f64 = (0..p).filter(|&s| s != r).map(|s| phi[r][s]).sum();
        phi[r][r] = -off;
    }
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_io::{EdgeMode, Graph};
    use std::collections::BTreeMap;

    fn setup(n: usize, blocks: &[usize]) -> (DyadTable, Partition) {
        let ids: Vec<String> = (0..n).map(|i| format!("v{i:02}")).collect();
        let g = Graph::empty(ids.clone(), EdgeMode::Binary).unwrap();
        let assignment: BTreeMap<String, String> = ids
            .iter()
            .zip(blocks)
            .map(|(id, b)| (id.clone(), format!("B{b}")))
            .collect();
        (DyadTable::from_graph(&g), Partition::from_labels(assignment).unwrap())
    }

    #[test]
    fn eq1_column_count() {
        let (t, part) = setup(10, &[0, 0, 0, 1, 1, 1, 2, 2, 2, 2]);
        let x = encode(&t, &part, &ModelSpec::degree_corrected()).unwrap();
        assert_eq!(x.ncols(), 13);
        assert_eq!(x.convention_parameter_count(), 13);
        assert_eq!(x.interaction_columns().len(), 3);
        let penalized: Vec<usize> = (0..13).filter(|&k| x.penalized_mask()[k]).collect();
        assert_eq!(penalized, vec![10, 11, 12]);
    }

    #[test]
    fn single_block_poisson_is_intercept_only() {
        let (t, part) = setup(4, &[0, 0, 0, 0]);
        let x = encode(&t, &part, &ModelSpec::covariate_poisson(vec![])).unwrap();
        assert_eq!(x.names(), [INTERCEPT]);
        assert_eq!(x.convention_parameter_count(), 1);
    }

    #[test]
    fn within_block_row_uses_substitution() {
        let (t, part) = setup(4, &[0, 0, 1, 2]);
        let spec = ModelSpec {
            node_effects: false,
            ..ModelSpec::degree_corrected()
        };
        let x = encode(&t, &part, &spec).unwrap();
        // dyad (v00, v01) lies inside B0
        let (cols, vals) = x.row(t.dyad_index(0, 1));
        let inter = x.interaction_columns();
        let mut dense = vec![0.0; x.ncols()];
        for (&c, &v) in cols.iter().zip(vals) {
            dense[c as usize] = v;
        }
        assert_eq!(&dense[inter], &[-1.0, -1.0, 0.0]);
    }

    #[test]
    fn folded_node_contributes_minus_one() {
        let (t, part) = setup(4, &[0, 0, 1, 1]);
        let x = encode(&t, &part, &ModelSpec::degree_corrected()).unwrap();
        let (cols, vals) = x.row(t.dyad_index(0, 3));
        let node_vals: Vec<(u32, f64)> = cols
            .iter()
            .zip(vals)
            .filter(|(&c, _)| x.groups()[c as usize] == ColumnGroup::NodeEffect)
            .map(|(&c, &v)| (c, v))
            .collect();
        // columns for v00, v01, v02 sit at 1, 2, 3; v00's +1 cancels the fold
        assert_eq!(node_vals, vec![(2, -1.0), (3, -1.0)]);
        assert_eq!(x.folded_node(), Some("v03"));
    }

    #[test]
    fn reconstruct_examples() {
        let phi = reconstruct_phi(&[0.5], 2).unwrap();
        assert_eq!(phi, vec![vec![-0.5, 0.5], vec![0.5, -0.5]]);
        let zero = reconstruct_phi(&[0.0; 3], 3).unwrap();
        assert!(zero.iter().flatten().all(|&v| v == 0.0));
        assert!(reconstruct_phi(&[1.0, 2.0], 3).is_err());
        assert_eq!(reconstruct_phi(&[], 1).unwrap(), vec![vec![0.0]]);
    }

    #[test]
    fn gram_matches_dense_product() {
        let (t, part) = setup(6, &[0, 0, 1, 1, 2, 2]);
        let x = encode(&t, &part, &ModelSpec::degree_corrected()).unwrap();
        let w: Vec<f64> = (0..x.nrows()).map(|i| 0.1 + i as f64 * 0.01).collect();
        let mut dense = DMatrix::<f64>::zeros(x.nrows(), x.ncols());
        for i in 0..x.nrows() {
            let (cols, vals) = x.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                dense[(i, c as usize)] = v;
            }
        }
        let expected = dense.transpose() * DMatrix::from_diagonal(&w.clone().into()) * &dense;
        let got = x.weighted_gram(&w);
        assert!((expected - got).abs().max() < 1e-12);
    }

    #[test]
    fn rejects_unknown_covariate() {
        let (t, part) = setup(4, &[0, 0, 1, 1]);
        let err = encode(&t, &part, &ModelSpec::covariate_poisson(vec!["age".into()])).unwrap_err();
        assert!(err.to_string().contains("age"));
    }
}
