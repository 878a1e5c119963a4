#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sparse_sbm::covariates::DyadTable;
use sparse_sbm::design::{encode, DesignMatrix, ModelSpec};
use sparse_sbm::glm::Family;
use sparse_sbm::graph_io::{EdgeMode, Graph, Partition};

/// A small fitted-ready problem built from raw node/block/edge data.
pub struct Instance {
    pub ids: Vec<String>,
    pub labels: Vec<String>,
    pub blocks: Vec<usize>,
    pub graph: Graph,
    pub partition: Partition,
    pub table: DyadTable,
}

pub fn node_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("n{i:02}")).collect()
}

pub fn block_labels(p: usize) -> Vec<String> {
    (0..p).map(|r| format!("b{r:02}")).collect()
}

/// Random block assignment in which every block receives at least one node.
pub fn random_blocks(n: usize, p: usize, rng: &mut impl Rng) -> Vec<usize> {
    assert!(p <= n);
    let mut blocks: Vec<usize> = (0..n).map(|i| if i < p { i } else { rng.random_range(0..p) }).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        blocks.swap(i, j);
    }
    blocks
}

pub fn instance(n: usize, blocks: Vec<usize>, edges: &[(usize, usize, u32)], mode: EdgeMode) -> Instance {
    let p = blocks.iter().max().map_or(0, |m| m + 1);
    let ids = node_ids(n);
    let labels = block_labels(p);
    let named: Vec<(String, String, u32)> = edges
        .iter()
        .map(|&(a, b, w)| (ids[a].clone(), ids[b].clone(), w))
        .collect();
    let graph = Graph::from_edges(ids.clone(), &named, mode).unwrap();
    let assignment: BTreeMap<String, String> = ids
        .iter()
        .zip(&blocks)
        .map(|(id, &b)| (id.clone(), labels[b].clone()))
        .collect();
    let partition = Partition::from_labels(assignment).unwrap();
    let table = DyadTable::from_graph(&graph);
    Instance {
        ids,
        labels,
        blocks,
        graph,
        partition,
        table,
    }
}

/// Bernoulli graph with independent dyads at probability `pr`.
pub fn random_binary(n: usize, p: usize, pr: f64, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = random_blocks(n, p, &mut rng);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < pr {
                edges.push((i, j, 1));
            }
        }
    }
    instance(n, blocks, &edges, EdgeMode::Binary)
}

/// Count graph with small geometric-like weights.
pub fn random_counts(n: usize, p: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = random_blocks(n, p, &mut rng);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let mut w = 0;
            while rng.random::<f64>() < 0.6 && w < 20 {
                w += 1;
            }
            if w > 0 {
                edges.push((i, j, w));
            }
        }
    }
    instance(n, blocks, &edges, EdgeMode::Weighted)
}

pub fn eq1_design(inst: &Instance) -> DesignMatrix {
    encode(&inst.table, &inst.partition, &ModelSpec::degree_corrected()).unwrap()
}

/// Direct parametrization of a blockmodel: the linear predictor is written out from the
/// model formula, with the folded node, block and diagonal values substituted explicitly.
pub struct DirectModel {
    pub n: usize,
    pub p: usize,
    pub blocks: Vec<usize>,
    pub node_effects: bool,
    pub block_effects: bool,
    /// Per-dyad covariate values, one vector per covariate.
    pub covariates: Vec<Vec<f64>>,
    pub covariate_names: Vec<String>,
    pub ids: Vec<String>,
    pub labels: Vec<String>,
}

impl DirectModel {
    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec!["(Intercept)".to_string()];
        names.extend(self.covariate_names.iter().cloned());
        if self.node_effects {
            names.extend(self.ids[..self.n - 1].iter().map(|id| format!("alpha[{id}]")));
        }
        if self.block_effects {
            names.extend(self.labels[..self.p - 1].iter().map(|l| format!("gamma[{l}]")));
        }
        for r in 0..self.p {
            for s in r + 1..self.p {
                names.push(format!("phi[{},{}]", self.labels[r], self.labels[s]));
            }
        }
        names
    }

    pub fn dim(&self) -> usize {
        self.param_names().len()
    }

    /// Linear predictor of every dyad in lexicographic order.
    pub fn eta(&self, theta: &[f64]) -> Vec<f64> {
        let k = self.covariates.len();
        let mut off = 1 + k;
        let alpha: Vec<f64> = if self.node_effects {
            let free = &theta[off..off + self.n - 1];
            off += self.n - 1;
            let mut a = free.to_vec();
            a.push(-free.iter().sum::<f64>());
            a
        } else {
            vec![0.0; self.n]
        };
        let gamma: Vec<f64> = if self.block_effects {
            let free = &theta[off..off + self.p - 1];
            off += self.p - 1;
            let mut g = free.to_vec();
            g.push(-free.iter().sum::<f64>());
            g
        } else {
            vec![0.0; self.p]
        };
        let mut phi = vec![vec![0.0; self.p]; self.p];
        for r in 0..self.p {
            for s in r + 1..self.p {
                phi[r][s] = theta[off];
                phi[s][r] = theta[off];
                off += 1;
            }
        }
        for r in 0..self.p {
            let mut total = 0.0;
            for s in 0..self.p {
                if s != r {
                    total += phi[r][s];
                }
            }
            phi[r][r] = -total;
        }
        let mut out = Vec::new();
        let mut d = 0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                let (r, s) = (self.blocks[i], self.blocks[j]);
                let mut e = theta[0] + alpha[i] + alpha[j] + phi[r][s];
                if self.block_effects {
                    e += gamma[r] + gamma[s];
                }
                for c in 0..k {
                    e += theta[1 + c] * self.covariates[c][d];
                }
                out.push(e);
                d += 1;
            }
        }
        out
    }
}

pub fn direct_loglik(model: &DirectModel, y: &[f64], theta: &[f64], family: Family) -> f64 {
    model
        .eta(theta)
        .iter()
        .zip(y)
        .map(|(&e, &yy)| match family {
            Family::BernoulliLogit => yy * e - (1.0 + e.exp()).ln(),
            Family::PoissonLog => yy * e - e.exp() - ln_gamma_int(yy),
        })
        .sum()
}

fn ln_gamma_int(y: f64) -> f64 {
    (1..=y as u64).map(|k| (k as f64).ln()).sum()
}

pub struct OracleFit {
    pub names: Vec<String>,
    pub theta: Vec<f64>,
    pub loglik: f64,
    pub gradient_norm: f64,
    pub converged: bool,
    /// Converged away from saturated dyads with a positive-definite information matrix.
    pub well_determined: bool,
}

/// Damped Newton with LU solves on the direct parametrization. The feature matrix is
/// read off the linear predictor by evaluating it at unit vectors.
pub fn oracle_fit(model: &DirectModel, y: &[f64], family: Family) -> OracleFit {
    let q = model.dim();
    let m = y.len();
    let base = model.eta(&vec![0.0; q]);
    let mut x = DMatrix::<f64>::zeros(m, q);
    for k in 0..q {
        let mut e = vec![0.0; q];
        e[k] = 1.0;
        let col = model.eta(&e);
        for d in 0..m {
            x[(d, k)] = col[d] - base[d];
        }
    }
    let yv = DVector::from_column_slice(y);
    let mut theta = DVector::<f64>::zeros(q);
    let ybar = y.iter().sum::<f64>() / m as f64;
    theta[0] = match family {
        Family::BernoulliLogit => (ybar.clamp(1e-3, 1.0 - 1e-3) / (1.0 - ybar.clamp(1e-3, 1.0 - 1e-3))).ln(),
        Family::PoissonLog => ybar.max(1e-3).ln(),
    };
    let mean = |eta: &DVector<f64>| -> DVector<f64> {
        eta.map(|e| match family {
            Family::BernoulliLogit => 1.0 / (1.0 + (-e).exp()),
            Family::PoissonLog => e.exp(),
        })
    };
    let ll = |t: &DVector<f64>| direct_loglik(model, y, t.as_slice(), family);
    let mut current = ll(&theta);
    let mut converged = false;
    let mut gnorm = f64::INFINITY;
    for _ in 0..500 {
        let eta = &x * &theta;
        let mu = mean(&eta);
        let g = x.transpose() * (&yv - &mu);
        gnorm = g.amax();
        if gnorm < 1e-11 * (1.0 + (x.transpose() * &yv).amax()) {
            converged = true;
            break;
        }
        let w = match family {
            Family::BernoulliLogit => mu.map(|v| v * (1.0 - v)),
            Family::PoissonLog => mu.clone(),
        };
        let mut h = DMatrix::<f64>::zeros(q, q);
        for d in 0..m {
            let row = x.row(d);
            h += w[d] * row.transpose() * row;
        }
        let Some(step) = h.lu().solve(&g) else { break };
        let mut t = 1.0;
        loop {
            let cand = &theta + t * &step;
            let v = ll(&cand);
            if v.is_finite() && v >= current - 1e-13 * current.abs() {
                theta = cand;
                current = v;
                break;
            }
            t *= 0.5;
            if t < 1e-14 {
                break;
            }
        }
        if t < 1e-14 {
            break;
        }
    }
    // a finite, well-determined optimum: no saturated dyads and a curved likelihood
    let eta = &x * &theta;
    let mu = mean(&eta);
    let w = match family {
        Family::BernoulliLogit => mu.map(|v| v * (1.0 - v)),
        Family::PoissonLog => mu.clone(),
    };
    let mut h = DMatrix::<f64>::zeros(q, q);
    for d in 0..m {
        let row = x.row(d);
        h += w[d] * row.transpose() * row;
    }
    let min_eigen = h.symmetric_eigenvalues().min();
    let saturated = match family {
        Family::BernoulliLogit => eta.amax() > 10.0,
        Family::PoissonLog => eta.min() < -10.0,
    };
    let well_determined = converged && !saturated && min_eigen >= 1e-3;
    OracleFit {
        names: model.param_names(),
        theta: theta.as_slice().to_vec(),
        loglik: current,
        gradient_norm: gnorm,
        converged,
        well_determined,
    }
}

pub fn eq1_direct(inst: &Instance) -> DirectModel {
    DirectModel {
        n: inst.ids.len(),
        p: inst.labels.len(),
        blocks: inst.blocks.clone(),
        node_effects: true,
        block_effects: false,
        covariates: vec![],
        covariate_names: vec![],
        ids: inst.ids.clone(),
        labels: inst.labels.clone(),
    }
}

pub fn response_f64(inst: &Instance) -> Vec<f64> {
    inst.table.response().iter().map(|&v| f64::from(v)).collect()
}
