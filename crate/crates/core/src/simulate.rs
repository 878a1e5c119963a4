//! Synthetic networks drawn from the two blockmodels with known parameters.
//!
//! All randomness comes from a single ChaCha8 stream seeded from `GeneratorSpec::seed`,
//! consumed in a fixed order (node attributes in node order, then dyads in lexicographic
//! order), so a generator spec always produces the same graph on every platform.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::covariates::{build_dyad_table, CovariateSpec, DyadTable};
use crate::design::reconstruct_phi;
use crate::error::{Error, Result};
use crate::glm::Family;
use crate::graph_io::{AttributeTable, EdgeMode, Graph, Partition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttributeKind {
    Categorical { levels: Vec<String> },
    Numeric { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimAttribute {
    pub name: String,
    #[serde(flatten)]
    pub kind: AttributeKind,
}

/// A covariate specification with one coefficient per generated column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCovariate {
    pub spec: CovariateSpec,
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    pub p: usize,
    /// Defaults to near-equal sizes, larger blocks first.
    #[serde(default)]
    pub block_sizes: Option<Vec<usize>>,
    pub family: Family,
    pub intercept: f64,
    /// One value per node in id order; must sum to zero.
    #[serde(default)]
    pub node_effects: Option<Vec<f64>>,
    /// One value per block; must sum to zero.
    #[serde(default)]
    pub block_effects: Option<Vec<f64>>,
    /// Symmetric `p x p` interaction matrix with zero row sums.
    pub phi: Vec<Vec<f64>>,
    #[serde(default)]
    pub attributes: Vec<SimAttribute>,
    #[serde(default)]
    pub covariates: Vec<SimCovariate>,
    pub seed: u64,
}

pub const BLOCK_ATTRIBUTE: &str = "block";

impl GeneratorSpec {
    pub fn node_ids(&self) -> Vec<String> {
        let width = self.n.to_string().len();
        (1..=self.n).map(|i| format!("v{i:0width$}")).collect()
    }

    pub fn block_labels(&self) -> Vec<String> {
        let width = self.p.to_string().len();
        (1..=self.p).map(|r| format!("B{r:0width$}")).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        match &self.block_sizes {
            Some(s) => s.clone(),
            None => (0..self.p)
                .map(|r| self.n / self.p + usize::from(r < self.n % self.p))
                .collect(),
        }
    }

    /// Block index of every node (contiguous runs by id order).
    pub fn node_blocks(&self) -> Vec<usize> {
        self.sizes()
            .iter()
            .enumerate()
            .flat_map(|(r, &size)| std::iter::repeat_n(r, size))
            .collect()
    }

    pub fn partition(&self) -> Partition {
        let labels = self.block_labels();
        let assignment: BTreeMap<String, String> = self
            .node_ids()
            .into_iter()
            .zip(self.node_blocks())
            .map(|(id, b)| (id, labels[b].clone()))
            .collect();
        Partition::from_labels(assignment).expect("n >= 1")
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n < 2 || self.p < 1 || self.p > self.n {
            return bad(format!("need n >= 2 and 1 <= p <= n, got n={} p={}", self.n, self.p));
        }
        let sizes = self.sizes();
        if sizes.len() != self.p || sizes.iter().sum::<usize>() != self.n || sizes.contains(&0) {
            return bad("block sizes must be p positive integers summing to n".into());
        }
        if self.phi.len() != self.p || self.phi.iter().any(|r| r.len() != self.p) {
            return bad("phi must be p x p".into());
        }
        for r in 0..self.p {
            for s in 0..self.p {
                if self.phi[r][s] != self.phi[s][r] || !self.phi[r][s].is_finite() {
                    return bad(format!("phi must be finite and symmetric (entry {r},{s})"));
                }
            }
            let sum: f64 = self.phi[r].iter().sum();
            if sum.abs() > 1e-12 * self.phi[r].iter().fold(1.0_f64, |m, v| m.max(v.abs())) {
                return bad(format!("phi row {r} sums to {sum:e}, not 0"));
            }
        }
        if let Some(a) = &self.node_effects {
            if a.len() != self.n || a.iter().any(|v| !v.is_finite()) {
                return bad("node effects need one finite value per node".into());
            }
            if a.iter().sum::<f64>().abs() > 1e-9 * (self.n as f64) {
                return bad("node effects must sum to zero".into());
            }
        }
        if let Some(g) = &self.block_effects {
            if g.len() != self.p || g.iter().any(|v| !v.is_finite()) {
                return bad("block effects need one finite value per block".into());
            }
            if g.iter().sum::<f64>().abs() > 1e-9 * (self.p as f64) {
                return bad("block effects must sum to zero".into());
            }
        }
        if !self.intercept.is_finite() {
            return bad("intercept must be finite".into());
        }
        Ok(())
    }
}

/// A sampled network together with everything needed to fit it.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub graph: Graph,
    pub table: DyadTable,
    pub attributes: AttributeTable,
    pub partition: Partition,
}

impl SimulatedData {
    /// Writes `edges.csv`, `nodes.csv` and `truth.json` into `dir`.
    pub fn write(&self, spec: &GeneratorSpec, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.graph.write_edge_list(&dir.join("edges.csv"))?;
        self.attributes.write(&dir.join("nodes.csv"))?;
        let truth = dir.join("truth.json");
        fs::write(&truth, serde_json::to_string_pretty(spec)?).map_err(|e| Error::io(&truth, e))
    }
}

fn sample_attributes(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> Result<AttributeTable> {
    let mut names = vec![BLOCK_ATTRIBUTE.to_string()];
    names.extend(spec.attributes.iter().map(|a| a.name.clone()));
    let mut table = AttributeTable::new(names)?;
    let labels = spec.block_labels();
    let normals: Vec<Option<Normal<f64>>> = spec
        .attributes
        .iter()
        .map(|a| match &a.kind {
            AttributeKind::Numeric { mean, sd } => Normal::new(*mean, *sd)
                .map(Some)
                .map_err(|e| Error::InvalidArgument(format!("attribute {}: {e}", a.name))),
            AttributeKind::Categorical { levels } if levels.is_empty() => Err(
                Error::InvalidArgument(format!("attribute {} has no levels", a.name)),
            ),
            AttributeKind::Categorical { .. } => Ok(None),
        })
        .collect::<Result<_>>()?;
    for (id, b) in spec.node_ids().iter().zip(spec.node_blocks()) {
        let mut row = vec![Some(labels[b].clone())];
        for (a, normal) in spec.attributes.iter().zip(&normals) {
            let v = match (&a.kind, normal) {
                (AttributeKind::Categorical { levels }, _) => {
                    levels[rng.random_range(0..levels.len())].clone()
                }
                (AttributeKind::Numeric { .. }, Some(dist)) => {
                    // rounded so the written table reproduces the sampled values exactly
                    let x: f64 = dist.sample(rng);
                    format!("{:.3}", x)
                }
                (AttributeKind::Numeric { .. }, None) => unreachable!(),
            };
            row.push(Some(v));
        }
        table.insert(id, row)?;
    }
    Ok(table)
}

/// Linear predictor of every dyad (intercept included) under `spec`.
fn linear_predictor(spec: &GeneratorSpec, table: &DyadTable) -> Result<Vec<f64>> {
    let blocks = spec.node_blocks();
    let mut eta = vec![spec.intercept; table.len()];
    let mut col = 0;
    for cov in &spec.covariates {
        let names = table.covariate_names();
        let produced = match &cov.spec {
            CovariateSpec::PairDummies { .. } => {
                let attr = cov.spec.attribute().unwrap_or_default();
                names[col..]
                    .iter()
                    .take_while(|n| n.starts_with(&format!("{attr}:")))
                    .count()
            }
            _ => 1,
        };
        if cov.coefficients.len() != produced {
            return Err(Error::InvalidArgument(format!(
                "covariate spec produces {produced} columns but {} coefficients were given",
                cov.coefficients.len()
            )));
        }
        for (k, &b) in cov.coefficients.iter().enumerate() {
            let values = table.column(&names[col + k]).expect("column exists");
            for (e, v) in eta.iter_mut().zip(values) {
                *e += b * v;
            }
        }
        col += produced;
    }
    for (d, &(i, j)) in table.dyads().iter().enumerate() {
        let (r, s) = (blocks[i], blocks[j]);
        if let Some(a) = &spec.node_effects {
            eta[d] += a[i] + a[j];
        }
        if let Some(g) = &spec.block_effects {
            eta[d] += g[r] + g[s];
        }
        eta[d] += spec.phi[r][s];
    }
    Ok(eta)
}

/// Draws one network with independent dyads from `spec`.
pub fn sample_graph(spec: &GeneratorSpec) -> Result<SimulatedData> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let attributes = sample_attributes(spec, &mut rng)?;
    let ids = spec.node_ids();
    let mode = match spec.family {
        Family::BernoulliLogit => EdgeMode::Binary,
        Family::PoissonLog => EdgeMode::Weighted,
    };
    let skeleton = Graph::empty(ids.clone(), mode)?;
    let specs: Vec<CovariateSpec> = spec.covariates.iter().map(|c| c.spec.clone()).collect();
    let base = build_dyad_table(&skeleton, &attributes, &specs)?;
    let eta = linear_predictor(spec, &base)?;

    let mut edges: Vec<(String, String, u32)> = Vec::new();
    for (d, &(i, j)) in base.dyads().iter().enumerate() {
        let mean = spec.family.mean(eta[d]);
        let y = match spec.family {
            Family::BernoulliLogit => {
                if !(mean > 0.0 && mean < 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "linear predictor {:.3} at dyad ({}, {}) leaves (0, 1) after the link",
                        eta[d], ids[i], ids[j]
                    )));
                }
                u32::from(rng.random::<f64>() < mean)
            }
            Family::PoissonLog => {
                if !(mean > 0.0 && mean < 1e8) {
                    return Err(Error::InvalidArgument(format!(
                        "linear predictor {:.3} at dyad ({}, {}) overflows the Poisson mean",
                        eta[d], ids[i], ids[j]
                    )));
                }
                let dist = Poisson::new(mean)
                    .map_err(|e| Error::InvalidArgument(format!("poisson mean {mean}: {e}")))?;
                dist.sample(&mut rng) as u32
            }
        };
        if y > 0 {
            edges.push((ids[i].clone(), ids[j].clone(), y));
        }
    }
    let graph = Graph::from_edges(ids, &edges, mode)?;
    let table = build_dyad_table(&graph, &attributes, &specs)?;
    Ok(SimulatedData {
        graph,
        table,
        attributes,
        partition: spec.partition(),
    })
}

/// Intercept giving the requested expected mean response (probability or rate).
pub fn calibrate_intercept(spec: &GeneratorSpec, target_mean: f64) -> Result<f64> {
    let mut probe = spec.clone();
    probe.intercept = 0.0;
    probe.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let attributes = sample_attributes(&probe, &mut rng)?;
    let skeleton = Graph::empty(probe.node_ids(), EdgeMode::Binary)?;
    let specs: Vec<CovariateSpec> = spec.covariates.iter().map(|c| c.spec.clone()).collect();
    let table = build_dyad_table(&skeleton, &attributes, &specs)?;
    let offset = linear_predictor(&probe, &table)?;
    let mean_at = |b0: f64| {
        offset.iter().map(|e| spec.family.mean(e + b0)).sum::<f64>() / offset.len() as f64
    };
    let (mut lo, mut hi) = (-50.0, 50.0);
    if !(mean_at(lo) < target_mean && target_mean < mean_at(hi)) {
        return Err(Error::InvalidArgument(format!(
            "target mean {target_mean} is not attainable"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target_mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Random symmetric interaction matrix with a given share of zero off-diagonal pairs and
/// `+-magnitude` elsewhere; the diagonal makes every row sum to zero.
pub fn make_sparse_phi(p: usize, fraction_zero: f64, magnitude: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    if !(0.0..=1.0).contains(&fraction_zero) {
        return Err(Error::InvalidArgument(format!(
            "fraction_zero must lie in [0, 1], got {fraction_zero}"
        )));
    }
    let pairs = p * p.saturating_sub(1) / 2;
    let zeros = (fraction_zero * pairs as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..pairs).collect();
    order.shuffle(&mut rng);
    let mut coefs = vec![0.0; pairs];
    for &k in &order[zeros..] {
        coefs[k] = if rng.random::<bool>() { magnitude } else { -magnitude };
    }
    reconstruct_phi(&coefs, p)
}

/// Centered normal node effects, for degree heterogeneity in synthetic graphs.
pub fn centered_normal_effects(count: usize, sd: f64, seed: u64) -> Result<Vec<f64>> {
    let dist = Normal::new(0.0, sd).map_err(|e| Error::InvalidArgument(format!("sd {sd}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..count).map(|_| dist.sample(&mut rng)).collect();
    let mean = v.iter().sum::<f64>() / count.max(1) as f64;
    for x in &mut v {
        *x -= mean;
    }
    Ok(v)
}
