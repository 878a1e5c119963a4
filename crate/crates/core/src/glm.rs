//! Maximum-likelihood fitting of the Bernoulli-logit and Poisson-log blockmodels by
//! iteratively reweighted least squares (Newton steps with step halving).

use std::fmt;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{ColumnGroup, DesignMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    BernoulliLogit,
    PoissonLog,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::BernoulliLogit => "bernoulli_logit",
            Family::PoissonLog => "poisson_log",
        })
    }
}

fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

impl Family {
    pub fn mean(self, eta: f64) -> f64 {
        match self {
            Family::BernoulliLogit => {
                if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                }
            }
            Family::PoissonLog => eta.exp(),
        }
    }

    /// Variance function at mean `mu`; equals the IRLS working weight for canonical links.
    pub fn variance(self, mu: f64) -> f64 {
        match self {
            Family::BernoulliLogit => mu * (1.0 - mu),
            Family::PoissonLog => mu,
        }
    }

    /// Log-likelihood contribution of one observation without the `-log y!` term.
    fn kernel(self, y: f64, eta: f64) -> f64 {
        match self {
            Family::BernoulliLogit => y * eta - softplus(eta),
            Family::PoissonLog => y * eta - eta.exp(),
        }
    }

    pub fn check_response(self, response: &[u32]) -> Result<()> {
        if self == Family::BernoulliLogit {
            if let Some(k) = response.iter().position(|&y| y > 1) {
                return Err(Error::Validation(format!(
                    "bernoulli response must be 0/1, found {} at dyad {k}",
                    response[k]
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn ln_factorial(y: u32) -> f64 {
    (2..=y).map(|k| f64::from(k).ln()).sum()
}

fn response_constant(family: Family, response: &[u32]) -> f64 {
    match family {
        Family::BernoulliLogit => 0.0,
        Family::PoissonLog => response.iter().map(|&y| ln_factorial(y)).sum(),
    }
}

/// Exact log-likelihood of `coefs` under `family`.
pub fn log_likelihood(
    coefs: &[f64],
    design: &DesignMatrix,
    response: &[u32],
    family: Family,
) -> f64 {
    assert_eq!(response.len(), design.nrows());
    let eta = design.mul_vec(coefs);
    eta.iter()
        .zip(response)
        .map(|(&e, &y)| family.kernel(f64::from(y), e))
        .sum::<f64>()
        - response_constant(family, response)
}

/// Score vector `X'(y - mu)` at `coefs`.
pub fn score(coefs: &[f64], design: &DesignMatrix, response: &[u32], family: Family) -> Vec<f64> {
    let eta = design.mul_vec(coefs);
    let resid: Vec<f64> = eta
        .iter()
        .zip(response)
        .map(|(&e, &y)| f64::from(y) - family.mean(e))
        .collect();
    design.tr_mul(&resid)
}

/// Cached pieces of a likelihood evaluation at one coefficient vector.
pub(crate) struct Evaluation {
    pub mu: Vec<f64>,
    pub loglik: f64,
}

/// Likelihood machinery shared by the unpenalized and penalized solvers.
pub(crate) struct Problem<'a> {
    pub design: &'a DesignMatrix,
    pub y: Vec<f64>,
    pub family: Family,
    constant: f64,
}

impl<'a> Problem<'a> {
    pub fn new(design: &'a DesignMatrix, response: &[u32], family: Family) -> Result<Self> {
        if response.len() != design.nrows() {
            return Err(Error::InvalidArgument(format!(
                "response has {} values for {} dyads",
                response.len(),
                design.nrows()
            )));
        }
        family.check_response(response)?;
        Ok(Problem {
            design,
            y: response.iter().map(|&y| f64::from(y)).collect(),
            family,
            constant: response_constant(family, response),
        })
    }

    pub fn evaluate(&self, coefs: &[f64]) -> Evaluation {
        let eta = self.design.mul_vec(coefs);
        let mut loglik = -self.constant;
        let mu = eta
            .iter()
            .zip(&self.y)
            .map(|(&e, &y)| {
                loglik += self.family.kernel(y, e);
                self.family.mean(e)
            })
            .collect();
        Evaluation { mu, loglik }
    }

    pub fn score(&self, ev: &Evaluation) -> Vec<f64> {
        let resid: Vec<f64> = self.y.iter().zip(&ev.mu).map(|(y, m)| y - m).collect();
        self.design.tr_mul(&resid)
    }

    pub fn hessian(&self, ev: &Evaluation) -> DMatrix<f64> {
        let w: Vec<f64> = ev.mu.iter().map(|&m| self.family.variance(m)).collect();
        self.design.weighted_gram(&w)
    }

    /// Starting point: intercept at the link of the mean response, everything else 0.
    pub fn initial_coefficients(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.design.ncols()];
        let mean = self.y.iter().sum::<f64>() / self.y.len().max(1) as f64;
        let start = match self.family {
            Family::BernoulliLogit => {
                let m = mean.clamp(1e-6, 1.0 - 1e-6);
                (m / (1.0 - m)).ln()
            }
            Family::PoissonLog => mean.max(1e-6).ln(),
        };
        if let Some(k) = self
            .design
            .groups()
            .iter()
            .position(|g| *g == ColumnGroup::Intercept)
        {
            b[k] = start;
        }
        b
    }

    pub fn fitted_ok(&self, ev: &Evaluation) -> bool {
        ev.loglik.is_finite()
            && ev.mu.iter().all(|&m| match self.family {
                Family::BernoulliLogit => m > 0.0 && m < 1.0,
                Family::PoissonLog => m > 0.0 && m.is_finite(),
            })
    }
}

/// Symmetric positive-definite solve restricted to `free` columns.
pub(crate) fn solve_free(h: &DMatrix<f64>, g: &[f64], free: &[usize]) -> Result<Vec<f64>> {
    let k = free.len();
    let sub = DMatrix::from_fn(k, k, |a, b| h[(free[a], free[b])]);
    let rhs = DVector::from_iterator(k, free.iter().map(|&j| g[j]));
    let chol = sub.clone().cholesky().or_else(|| {
        // tiny relative jitter for numerically semidefinite Gram matrices
        let scale = (0..k).map(|a| sub[(a, a)]).fold(0.0_f64, f64::max).max(1.0);
        let mut m = sub;
        for a in 0..k {
            m[(a, a)] += 1e-12 * scale;
        }
        m.cholesky()
    });
    let chol = chol.ok_or_else(|| {
        Error::Numerical("weighted Gram matrix is not positive definite; the design is rank deficient".into())
    })?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    /// Coefficients diverged; the reported fit carries a tiny ridge stabilizer.
    Separation,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub group: ColumnGroup,
    pub value: f64,
    pub penalized: bool,
    pub estimated: bool,
}

/// A fitted blockmodel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: Family,
    pub coefficients: Vec<Coefficient>,
    pub log_likelihood: f64,
    pub deviance: f64,
    pub converged: bool,
    pub status: FitStatus,
    pub iterations: usize,
    /// Penalty level for penalized fits; `None` for maximum likelihood.
    pub lambda: Option<f64>,
    /// Largest optimality violation (score or KKT) at the returned coefficients.
    pub optimality_residual: f64,
    pub block_labels: Vec<String>,
    pub phi_matrix: Vec<Vec<f64>>,
    pub dyad_count: usize,
    pub folded_node: Option<String>,
    pub folded_block: Option<String>,
    pub warnings: Vec<String>,
    pub fitted_values: Vec<f64>,
}

impl FitResult {
    pub(crate) fn assemble(
        problem: &Problem<'_>,
        coefs: Vec<f64>,
        status: FitStatus,
        iterations: usize,
        lambda: Option<f64>,
        optimality_residual: f64,
        warnings: Vec<String>,
    ) -> Self {
        let design = problem.design;
        let ev = problem.evaluate(&coefs);
        let deviance = match problem.family {
            Family::BernoulliLogit => -2.0 * ev.loglik,
            Family::PoissonLog => {
                2.0 * problem
                    .y
                    .iter()
                    .zip(&ev.mu)
                    .map(|(&y, &m)| {
                        let t = if y > 0.0 { y * (y / m).ln() } else { 0.0 };
                        t - (y - m)
                    })
                    .sum::<f64>()
            }
        };
        let coefficients = design
            .names()
            .iter()
            .enumerate()
            .map(|(k, name)| Coefficient {
                name: name.clone(),
                group: design.groups()[k],
                value: coefs[k],
                penalized: design.penalized_mask()[k],
                estimated: !design.inestimable_mask()[k],
            })
            .collect();
        FitResult {
            family: problem.family,
            coefficients,
            log_likelihood: ev.loglik,
            deviance,
            converged: status == FitStatus::Converged,
            status,
            iterations,
            lambda,
            optimality_residual,
            block_labels: design.block_labels().to_vec(),
            phi_matrix: design.phi_matrix(&coefs),
            dyad_count: design.nrows(),
            folded_node: design.folded_node().map(str::to_string),
            folded_block: design.folded_block().map(str::to_string),
            warnings,
            fitted_values: ev.mu,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.value).collect()
    }

    pub fn names(&self) -> Vec<&str> {
        self.coefficients.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.coefficients
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.value)
    }

    /// Off-diagonal interaction coefficients in pair order.
    pub fn interaction_values(&self) -> Vec<f64> {
        self.coefficients
            .iter()
            .filter(|c| c.group == ColumnGroup::BlockInteraction)
            .map(|c| c.value)
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        FitResult::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Flat `name,group,value` table.
    pub fn coefficient_csv(&self) -> String {
        let mut out = String::from("name,group,value\n");
        for c in &self.coefficients {
            let group = serde_json::to_value(c.group)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            out.push_str(&format!("{},{},{:?}\n", csv_field(&c.name), group, c.value));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative log-likelihood change below which the fit may stop.
    pub tolerance: f64,
    /// Coefficient magnitude that, with the likelihood still rising, signals separation.
    pub separation_bound: f64,
    pub separation_ridge: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 100,
            tolerance: 1e-10,
            separation_bound: 15.0,
            separation_ridge: 1e-8,
        }
    }
}

/// Score bound `|X'(y - mu)|_inf <= 1e-6 (1 + |X'y|_inf)` used as the convergence test.
pub fn score_tolerance(design: &DesignMatrix, response: &[u32]) -> f64 {
    let y: Vec<f64> = response.iter().map(|&v| f64::from(v)).collect();
    let xty = design.tr_mul(&y);
    1e-6 * (1.0 + xty.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

/// Maximum-likelihood fit with all estimable columns free.
pub fn fit_mle(design: &DesignMatrix, response: &[u32], family: Family) -> Result<FitResult> {
    fit_mle_with(design, response, family, &FitOptions::default(), &[], None)
}

/// Maximum-likelihood fit with the columns flagged in `fixed` held at zero.
///
/// An empty `fixed` slice frees every estimable column. `start` warm-starts the solver.
pub fn fit_mle_with(
    design: &DesignMatrix,
    response: &[u32],
    family: Family,
    options: &FitOptions,
    fixed: &[bool],
    start: Option<&[f64]>,
) -> Result<FitResult> {
    let problem = Problem::new(design, response, family)?;
    let q = design.ncols();
    let free: Vec<usize> = (0..q)
        .filter(|&j| !design.inestimable_mask()[j] && !fixed.get(j).copied().unwrap_or(false))
        .collect();
    let intercept = design
        .groups()
        .iter()
        .position(|g| *g == ColumnGroup::Intercept);

    let mut beta = match start {
        Some(s) => s.to_vec(),
        None => problem.initial_coefficients(),
    };
    for j in 0..q {
        if !free.contains(&j) {
            beta[j] = 0.0;
        }
    }
    let score_tol = score_tolerance(design, response);
    let mut ridge = 0.0;
    let mut warnings = Vec::new();
    let objective = |ev: &Evaluation, b: &[f64], ridge: f64| -> f64 {
        if ridge == 0.0 {
            ev.loglik
        } else {
            ev.loglik
                - ridge
                    * free
                        .iter()
                        .filter(|&&j| Some(j) != intercept)
                        .map(|&j| b[j] * b[j])
                        .sum::<f64>()
        }
    };
    let mut ev = problem.evaluate(&beta);
    if !problem.fitted_ok(&ev) {
        return Err(Error::Numerical("non-finite likelihood at the starting point".into()));
    }
    let mut obj = objective(&ev, &beta, ridge);
    let mut status = FitStatus::MaxIterations;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut monitor = SeparationMonitor::new(options.separation_bound);

    for it in 1..=options.max_iterations {
        iterations = it;
        let mut g = problem.score(&ev);
        let mut h = problem.hessian(&ev);
        if ridge > 0.0 {
            for &j in &free {
                if Some(j) != intercept {
                    g[j] -= 2.0 * ridge * beta[j];
                    h[(j, j)] += 2.0 * ridge;
                }
            }
        }
        let step = solve_free(&h, &g, &free)?;

        let mut t = 1.0;
        let (new_beta, new_ev, new_obj) = loop {
            let mut cand = beta.clone();
            for (k, &j) in free.iter().enumerate() {
                cand[j] += t * step[k];
            }
            let cev = problem.evaluate(&cand);
            if problem.fitted_ok(&cev) {
                let cobj = objective(&cev, &cand, ridge);
                if cobj >= obj - 1e-12 * obj.abs().max(1.0) {
                    break (cand, cev, cobj);
                }
            }
            t *= 0.5;
            if t < 1e-12 {
                break (beta.clone(), problem.evaluate(&beta), obj);
            }
        };
        let rel = (new_obj - obj).abs() / obj.abs().max(1.0);
        beta = new_beta;
        ev = new_ev;
        obj = new_obj;

        let mut g = problem.score(&ev);
        if ridge > 0.0 {
            for &j in &free {
                if Some(j) != intercept {
                    g[j] -= 2.0 * ridge * beta[j];
                }
            }
        }
        residual = free.iter().map(|&j| g[j].abs()).fold(0.0, f64::max);
        if rel < options.tolerance && residual <= score_tol {
            status = if ridge > 0.0 {
                FitStatus::Separation
            } else {
                FitStatus::Converged
            };
            break;
        }
        if t < 1e-12 {
            log::debug!("step halving exhausted at iteration {it}");
        }
        if ridge == 0.0 && it >= 3 && rel >= options.tolerance {
            if let Some((name, value)) = largest_effect(design, &beta, &free, intercept) {
                if monitor.update(value) {
                    let msg = format!(
                        "separation: coefficient {name} reached {value:.2} with the likelihood still increasing; \
                         refitting with a {:e} ridge stabilizer",
                        options.separation_ridge
                    );
                    log::warn!("{msg}");
                    warnings.push(msg);
                    ridge = options.separation_ridge;
                    obj = objective(&ev, &beta, ridge);
                }
            }
        }
    }
    if status == FitStatus::MaxIterations {
        let msg = format!(
            "no convergence after {} iterations (score residual {residual:.3e})",
            options.max_iterations
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let inestimable: Vec<&str> = (0..q)
        .filter(|&j| design.inestimable_mask()[j])
        .map(|j| design.names()[j].as_str())
        .collect();
    if !inestimable.is_empty() {
        warnings.push(format!("inestimable columns held at 0: {}", inestimable.join(", ")));
    }
    // report the plain score residual, not the stabilized one
    let plain = problem.score(&ev);
    let residual = free.iter().map(|&j| plain[j].abs()).fold(0.0, f64::max);
    Ok(FitResult::assemble(
        &problem, beta, status, iterations, None, residual, warnings,
    ))
}

/// Flags separation once the largest effect exceeds the bound and keeps growing for
/// several consecutive iterations; a single Newton overshoot is not enough.
pub(crate) struct SeparationMonitor {
    bound: f64,
    last: f64,
    streak: usize,
}

impl SeparationMonitor {
    const STREAK: usize = 3;

    pub fn new(bound: f64) -> Self {
        SeparationMonitor {
            bound,
            last: 0.0,
            streak: 0,
        }
    }

    pub fn update(&mut self, value: f64) -> bool {
        let a = value.abs();
        if a > self.bound && a > self.last {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        self.last = a;
        self.streak >= Self::STREAK
    }
}

/// Largest non-intercept effect in absolute value, including the implied effects of the
/// folded node and block levels.
pub(crate) fn largest_effect(
    design: &DesignMatrix,
    beta: &[f64],
    free: &[usize],
    intercept: Option<usize>,
) -> Option<(String, f64)> {
    let mut best: Option<(String, f64)> = None;
    let mut consider = |name: String, v: f64| {
        if best.as_ref().is_none_or(|(_, b)| v.abs() > b.abs()) {
            best = Some((name, v));
        }
    };
    for &j in free {
        if Some(j) != intercept {
            consider(design.names()[j].clone(), beta[j]);
        }
    }
    let groups = design.groups();
    let folded_sum = |group: ColumnGroup| -> f64 {
        -(0..beta.len())
            .filter(|&j| groups[j] == group)
            .map(|j| beta[j])
            .sum::<f64>()
    };
    if let Some(node) = design.folded_node() {
        consider(format!("alpha[{node}]"), folded_sum(ColumnGroup::NodeEffect));
    }
    if let Some(block) = design.folded_block() {
        consider(format!("gamma[{block}]"), folded_sum(ColumnGroup::BlockEffect));
    }
    best
}
