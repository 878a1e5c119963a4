//! Adaptive-lasso estimation: weights from a reference fit, penalized IRLS with
//! soft-thresholding coordinate descent, a log-spaced regularization path and BIC selection.
//!
//! The objective is `-loglik(b) + lambda * sum_j w_j |b_j|` over the penalized columns.
//! Intercept, node effects and block main effects are never penalized.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::design::{ColumnGroup, DesignMatrix};
use crate::error::{Error, Result};
use crate::glm::{fit_mle_with, largest_effect, Family, SeparationMonitor, FitOptions, FitResult, FitStatus, Problem};

/// Reference coefficients below this magnitude freeze their column at zero.
pub const FREEZE_BELOW: f64 = 1e-10;

/// Absolute tolerance on the KKT conditions of a returned penalized fit.
pub const KKT_TOLERANCE: f64 = 1e-5;

/// Per-column penalty weights. Unpenalized columns carry weight 0; `+inf` freezes a column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    pub penalized: Vec<bool>,
    pub weights: Vec<f64>,
}

impl PenaltyWeights {
    /// Plain lasso weights (1 on every masked column).
    pub fn uniform(mask: &[bool]) -> Self {
        PenaltyWeights {
            penalized: mask.to_vec(),
            weights: mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn is_frozen(&self, j: usize) -> bool {
        self.penalized[j] && self.weights[j].is_infinite()
    }

    fn validate(&self, q: usize) -> Result<()> {
        if self.penalized.len() != q || self.weights.len() != q {
            return Err(Error::InvalidArgument(format!(
                "penalty weights cover {} columns, design has {q}",
                self.weights.len()
            )));
        }
        for (j, (&m, &w)) in self.penalized.iter().zip(&self.weights).enumerate() {
            if m && !(w > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "penalty weight of column {j} must be positive, got {w}"
                )));
            }
        }
        Ok(())
    }
}

/// Adaptive-lasso weights `w_j = |b_j|^(-gamma_w)` from a reference fit.
pub fn adaptive_weights(reference: &FitResult, mask: &[bool], gamma_w: f64) -> Result<PenaltyWeights> {
    if !(gamma_w > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "weight exponent must be positive, got {gamma_w}"
        )));
    }
    match reference.status {
        FitStatus::Converged => {}
        FitStatus::Separation => log::warn!(
            "adaptive weights taken from a ridge-stabilized reference fit (separation detected)"
        ),
        FitStatus::MaxIterations => {
            return Err(Error::NonConvergence(
                "reference fit for adaptive weights did not converge".into(),
            ))
        }
    }
    if mask.len() != reference.coefficients.len() {
        return Err(Error::InvalidArgument(
            "penalty mask does not match the reference fit".into(),
        ));
    }
    let weights = reference
        .coefficients
        .iter()
        .zip(mask)
        .map(|(c, &m)| {
            if !m {
                0.0
            } else if c.value.abs() < FREEZE_BELOW {
                f64::INFINITY
            } else {
                c.value.abs().powf(-gamma_w)
            }
        })
        .collect();
    Ok(PenaltyWeights {
        penalized: mask.to_vec(),
        weights,
    })
}

#[derive(Debug, Clone)]
pub struct PenalizedOptions {
    pub max_outer: usize,
    pub max_sweeps: usize,
    pub separation_bound: f64,
    pub separation_ridge: f64,
}

impl Default for PenalizedOptions {
    fn default() -> Self {
        PenalizedOptions {
            max_outer: 100,
            max_sweeps: 10_000,
            separation_bound: 15.0,
            separation_ridge: 1e-8,
        }
    }
}

/// Relative band above a threshold inside which a coordinate is still set to exactly zero.
const ZERO_BAND: f64 = 1e-8;

fn soft_threshold(z: f64, tau: f64) -> f64 {
    // keeps exact zeros at lambda_max despite rounding in the unpenalized solve
    if z.abs() <= tau * (1.0 + ZERO_BAND) {
        0.0
    } else {
        z - tau * z.signum()
    }
}

struct Layout {
    free: Vec<usize>,
    unpen: Vec<usize>,
    pen: Vec<usize>,
    intercept: Option<usize>,
}

impl Layout {
    fn new(design: &DesignMatrix, weights: &PenaltyWeights) -> Self {
        let q = design.ncols();
        let free: Vec<usize> = (0..q)
            .filter(|&j| !design.inestimable_mask()[j] && !weights.is_frozen(j))
            .collect();
        let unpen = free.iter().copied().filter(|&j| !weights.penalized[j]).collect();
        let pen = free.iter().copied().filter(|&j| weights.penalized[j]).collect();
        let intercept = design
            .groups()
            .iter()
            .position(|g| *g == ColumnGroup::Intercept);
        Layout {
            free,
            unpen,
            pen,
            intercept,
        }
    }
}

/// Minimizes `0.5 b'Hb - c'b + sum_j tau_j |b_j|` over the free columns.
///
/// Unpenalized columns are solved jointly in every sweep; penalized ones by cyclic
/// soft-thresholding in column order. Periodically the active set is solved exactly,
/// which ends the loop as soon as signs and zero-coordinate conditions are consistent.
fn solve_quadratic(
    h: &DMatrix<f64>,
    c: &[f64],
    tau: &[f64],
    layout: &Layout,
    beta: &mut [f64],
    max_sweeps: usize,
) -> Result<()> {
    let unpen = &layout.unpen;
    let pen = &layout.pen;
    let free = &layout.free;
    let nu = unpen.len();
    let chol_u: Option<Cholesky<f64, Dyn>> = if nu > 0 {
        let huu = DMatrix::from_fn(nu, nu, |a, b| h[(unpen[a], unpen[b])]);
        Some(huu.cholesky().ok_or_else(|| {
            Error::Numerical("unpenalized block of the working Hessian is not positive definite".into())
        })?)
    } else {
        None
    };

    // r = c - H b over all columns (only free entries are read)
    let mut r = vec![0.0; c.len()];
    for &j in free {
        r[j] = c[j] - free.iter().map(|&k| h[(j, k)] * beta[k]).sum::<f64>();
    }
    let scale: f64 = free.iter().map(|&j| h[(j, j)]).fold(0.0, f64::max).max(1e-300);

    for sweep in 0..max_sweeps {
        let mut max_change = 0.0_f64;
        if let Some(chol) = &chol_u {
            let rhs = DVector::from_iterator(
                nu,
                unpen
                    .iter()
                    .map(|&j| r[j] + unpen.iter().map(|&k| h[(j, k)] * beta[k]).sum::<f64>()),
            );
            let sol = chol.solve(&rhs);
            for (a, &j) in unpen.iter().enumerate() {
                let delta = sol[a] - beta[j];
                if delta != 0.0 {
                    beta[j] = sol[a];
                    for &k in free {
                        r[k] -= h[(k, j)] * delta;
                    }
                    max_change = max_change.max(delta.abs() * h[(j, j)].sqrt());
                }
            }
        }
        for &j in pen {
            let hjj = h[(j, j)];
            if hjj <= 0.0 {
                continue;
            }
            let old = beta[j];
            let z = r[j] + hjj * old;
            let new = soft_threshold(z, tau[j]) / hjj;
            if new != old {
                let delta = new - old;
                beta[j] = new;
                for &k in free {
                    r[k] -= h[(k, j)] * delta;
                }
                max_change = max_change.max(delta.abs() * hjj.sqrt());
            }
        }
        if max_change <= 1e-13 * scale.sqrt() {
            return Ok(());
        }
        if sweep % 3 == 2 && try_active_set(h, c, tau, layout, chol_u.as_ref(), beta)? {
            return Ok(());
        }
    }
    log::debug!("coordinate descent reached the sweep limit");
    Ok(())
}

/// Solves the quadratic exactly on the current active set with fixed signs.
/// Accepts (and writes to `beta`) only when the result is sign-consistent and every
/// zero coordinate satisfies its subgradient condition.
fn try_active_set(
    h: &DMatrix<f64>,
    c: &[f64],
    tau: &[f64],
    layout: &Layout,
    chol_u: Option<&Cholesky<f64, Dyn>>,
    beta: &mut [f64],
) -> Result<bool> {
    let active: Vec<usize> = layout.pen.iter().copied().filter(|&j| beta[j] != 0.0).collect();
    let signs: Vec<f64> = active.iter().map(|&j| beta[j].signum()).collect();
    let unpen = &layout.unpen;
    let (nu, na) = (unpen.len(), active.len());

    let rhs_u = DVector::from_iterator(nu, unpen.iter().map(|&j| c[j]));
    let rhs_a = DVector::from_iterator(
        na,
        active.iter().zip(&signs).map(|(&j, &s)| c[j] - tau[j] * s),
    );
    let (sol_u, sol_a) = match chol_u {
        Some(chol) => {
            let hua = DMatrix::from_fn(nu, na, |a, b| h[(unpen[a], active[b])]);
            let u_inv_ua = chol.solve(&hua);
            let u_inv_c = chol.solve(&rhs_u);
            let haa = DMatrix::from_fn(na, na, |a, b| h[(active[a], active[b])]);
            let schur = haa - hua.transpose() * &u_inv_ua;
            let rhs = &rhs_a - hua.transpose() * &u_inv_c;
            let sol_a = if na > 0 {
                match schur.cholesky() {
                    Some(ch) => ch.solve(&rhs),
                    None => return Ok(false),
                }
            } else {
                DVector::zeros(0)
            };
            let sol_u = u_inv_c - u_inv_ua * &sol_a;
            (sol_u, sol_a)
        }
        None => {
            let haa = DMatrix::from_fn(na, na, |a, b| h[(active[a], active[b])]);
            match haa.cholesky() {
                Some(ch) => (DVector::zeros(0), ch.solve(&rhs_a)),
                None => return Ok(false),
            }
        }
    };
    if sol_a.iter().zip(&signs).any(|(&v, &s)| v * s <= 0.0) {
        return Ok(false);
    }
    let mut cand = beta.to_vec();
    for (a, &j) in unpen.iter().enumerate() {
        cand[j] = sol_u[a];
    }
    for (a, &j) in active.iter().enumerate() {
        cand[j] = sol_a[a];
    }
    for &j in layout.pen.iter().filter(|&&j| beta[j] == 0.0) {
        let rj = c[j] - layout.free.iter().map(|&k| h[(j, k)] * cand[k]).sum::<f64>();
        if rj.abs() > tau[j] * (1.0 + ZERO_BAND) {
            return Ok(false);
        }
    }
    beta.copy_from_slice(&cand);
    Ok(true)
}

/// Largest KKT violation of `beta` given the (possibly ridge-adjusted) score `g`.
fn kkt_residual(g: &[f64], beta: &[f64], tau: &[f64], layout: &Layout) -> f64 {
    let mut worst = 0.0_f64;
    for &j in &layout.unpen {
        worst = worst.max(g[j].abs());
    }
    for &j in &layout.pen {
        let v = if beta[j] != 0.0 {
            (g[j] - tau[j] * beta[j].signum()).abs()
        } else {
            (g[j].abs() - tau[j]).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Adaptive-lasso fit at a single `lambda`, optionally warm-started.
pub fn fit_penalized(
    design: &DesignMatrix,
    response: &[u32],
    family: Family,
    weights: &PenaltyWeights,
    lambda: f64,
    start: Option<&[f64]>,
) -> Result<FitResult> {
    fit_penalized_with(
        design,
        response,
        family,
        weights,
        lambda,
        start,
        &PenalizedOptions::default(),
    )
}

pub fn fit_penalized_with(
    design: &DesignMatrix,
    response: &[u32],
    family: Family,
    weights: &PenaltyWeights,
    lambda: f64,
    start: Option<&[f64]>,
    options: &PenalizedOptions,
) -> Result<FitResult> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be a finite value >= 0, got {lambda}")));
    }
    let q = design.ncols();
    weights.validate(q)?;
    let problem = Problem::new(design, response, family)?;
    let layout = Layout::new(design, weights);
    let tau: Vec<f64> = (0..q)
        .map(|j| {
            if weights.penalized[j] && !weights.is_frozen(j) {
                lambda * weights.weights[j]
            } else {
                0.0
            }
        })
        .collect();

    let mut beta = match start {
        Some(s) if s.len() == q => s.to_vec(),
        Some(_) => return Err(Error::InvalidArgument("warm start has the wrong length".into())),
        None => problem.initial_coefficients(),
    };
    let is_free: Vec<bool> = (0..q).map(|j| layout.free.contains(&j)).collect();
    for j in 0..q {
        if !is_free[j] {
            beta[j] = 0.0;
        }
    }

    let mut ridge = 0.0;
    let not_intercept = |j: usize| Some(j) != layout.intercept;
    let objective = |ll: f64, b: &[f64], ridge: f64| -> f64 {
        let pen: f64 = layout.pen.iter().map(|&j| tau[j] * b[j].abs()).sum();
        let rid: f64 = if ridge > 0.0 {
            ridge
                * layout
                    .free
                    .iter()
                    .filter(|&&j| not_intercept(j))
                    .map(|&j| b[j] * b[j])
                    .sum::<f64>()
        } else {
            0.0
        };
        -ll + pen + rid
    };
    let ridge_score = |ev: &crate::glm::Evaluation, b: &[f64], ridge: f64| -> Vec<f64> {
        let mut g = problem.score(ev);
        if ridge > 0.0 {
            for &j in &layout.free {
                if not_intercept(j) {
                    g[j] -= 2.0 * ridge * b[j];
                }
            }
        }
        g
    };

    let mut ev = problem.evaluate(&beta);
    if !problem.fitted_ok(&ev) {
        return Err(Error::Numerical("non-finite likelihood at the starting point".into()));
    }
    let mut obj = objective(ev.loglik, &beta, ridge);
    let mut warnings = Vec::new();
    let mut status = FitStatus::MaxIterations;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut monitor = SeparationMonitor::new(options.separation_bound);

    for it in 1..=options.max_outer {
        iterations = it;
        let g = ridge_score(&ev, &beta, ridge);
        let mut h = problem.hessian(&ev);
        if ridge > 0.0 {
            for &j in &layout.free {
                if not_intercept(j) {
                    h[(j, j)] += 2.0 * ridge;
                }
            }
        }
        // quadratic model of -loglik around beta: 0.5 b'Hb - (g + H beta)'b
        let mut c = g.clone();
        for &j in &layout.free {
            c[j] += layout.free.iter().map(|&k| h[(j, k)] * beta[k]).sum::<f64>();
        }
        let mut target = beta.clone();
        solve_quadratic(&h, &c, &tau, &layout, &mut target, options.max_sweeps)?;

        let mut t = 1.0;
        let (new_beta, new_ev, new_obj) = loop {
            let cand: Vec<f64> = if t == 1.0 {
                target.clone()
            } else {
                beta.iter().zip(&target).map(|(b, n)| b + t * (n - b)).collect()
            };
            let cev = problem.evaluate(&cand);
            if problem.fitted_ok(&cev) {
                let cobj = objective(cev.loglik, &cand, ridge);
                if cobj <= obj + 1e-12 * obj.abs().max(1.0) {
                    break (cand, cev, cobj);
                }
            }
            t *= 0.5;
            if t < 1e-12 {
                break (beta.clone(), problem.evaluate(&beta), obj);
            }
        };
        debug_assert!(new_obj <= obj + 1e-9 * obj.abs().max(1.0), "penalized objective increased");
        let rel = (obj - new_obj).abs() / obj.abs().max(1.0);
        beta = new_beta;
        ev = new_ev;
        obj = new_obj;

        let g = ridge_score(&ev, &beta, ridge);
        residual = kkt_residual(&g, &beta, &tau, &layout);
        if residual <= 1e-8 || (rel < 1e-14 && residual <= KKT_TOLERANCE) {
            status = if ridge > 0.0 {
                FitStatus::Separation
            } else {
                FitStatus::Converged
            };
            break;
        }
        if ridge == 0.0 && it >= 3 && rel > 1e-10 {
            if let Some((name, value)) = largest_effect(design, &beta, &layout.free, layout.intercept) {
                if monitor.update(value) {
                    let msg = format!(
                        "separation: coefficient {name} reached {value:.2} at lambda {lambda:e}; \
                         adding a {:e} ridge stabilizer",
                        options.separation_ridge
                    );
                    log::warn!("{msg}");
                    warnings.push(msg);
                    ridge = options.separation_ridge;
                    obj = objective(ev.loglik, &beta, ridge);
                }
            }
        }
    }
    if status == FitStatus::MaxIterations {
        let msg = format!(
            "penalized fit at lambda {lambda:e} stopped after {} iterations (KKT residual {residual:.3e})",
            options.max_outer
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let frozen: Vec<&str> = (0..q)
        .filter(|&j| weights.is_frozen(j))
        .map(|j| design.names()[j].as_str())
        .collect();
    if !frozen.is_empty() {
        warnings.push(format!("{} columns frozen at 0 by infinite weights", frozen.len()));
    }
    let plain = problem.score(&ev);
    let reported = kkt_residual(&plain, &beta, &tau, &layout);
    Ok(FitResult::assemble(
        &problem,
        beta,
        status,
        iterations,
        Some(lambda),
        reported,
        warnings,
    ))
}

/// KKT check of a penalized fit: returns the largest violation.
pub fn kkt_violation(
    fit: &FitResult,
    design: &DesignMatrix,
    response: &[u32],
    weights: &PenaltyWeights,
) -> f64 {
    let lambda = fit.lambda.unwrap_or(0.0);
    let beta = fit.values();
    let g = crate::glm::score(&beta, design, response, fit.family);
    let layout = Layout::new(design, weights);
    let tau: Vec<f64> = (0..beta.len())
        .map(|j| {
            if weights.penalized[j] && !weights.is_frozen(j) {
                lambda * weights.weights[j]
            } else {
                0.0
            }
        })
        .collect();
    let mut worst = kkt_residual(&g, &beta, &tau, &layout);
    for j in 0..beta.len() {
        if (weights.is_frozen(j) || design.inestimable_mask()[j]) && beta[j] != 0.0 {
            worst = f64::INFINITY;
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "lambda")]
pub enum SelectionRule {
    Bic,
    FixedLambda(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub df: usize,
    pub active: usize,
    pub bic: f64,
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub lambda_max: f64,
    pub points: Vec<PathPoint>,
    /// Index chosen by the selection rule, set by [`select`].
    pub selected: Option<usize>,
    pub weights: PenaltyWeights,
}

impl PathResult {
    /// `lambda,df,log_likelihood,bic,active` table.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("lambda,df,log_likelihood,bic,active\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{:?},{},{:?},{:?},{}",
                p.lambda, p.df, p.fit.log_likelihood, p.bic, p.active
            );
        }
        out
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        fs::write(path, self.summary_csv()).map_err(|e| Error::io(path, e))
    }
}

fn degrees_of_freedom(fit: &FitResult, design: &DesignMatrix, weights: &PenaltyWeights) -> (usize, usize) {
    let layout = Layout::new(design, weights);
    let active = layout
        .pen
        .iter()
        .filter(|&&j| fit.coefficients[j].value != 0.0)
        .count();
    (active + layout.unpen.len(), active)
}

fn bic(fit: &FitResult, df: usize) -> f64 {
    -2.0 * fit.log_likelihood + df as f64 * (fit.dyad_count as f64).ln()
}

/// Fit with every penalized column held at zero, used for `lambda_max`.
pub fn null_fit(
    design: &DesignMatrix,
    response: &[u32],
    family: Family,
    weights: &PenaltyWeights,
) -> Result<FitResult> {
    fit_mle_with(
        design,
        response,
        family,
        &FitOptions::default(),
        &weights.penalized,
        None,
    )
}

/// Smallest penalty at which all finitely-weighted penalized coefficients vanish.
pub fn lambda_max(
    design: &DesignMatrix,
    response: &[u32],
    null: &FitResult,
    weights: &PenaltyWeights,
) -> Option<f64> {
    let g = crate::glm::score(&null.values(), design, response, null.family);
    (0..design.ncols())
        .filter(|&j| weights.penalized[j] && !weights.is_frozen(j) && !design.inestimable_mask()[j])
        .map(|j| g[j].abs() / weights.weights[j])
        .reduce(f64::max)
}

/// Log-spaced grid from `lambda_max` down to `lambda_max * grid_ratio`.
pub fn lambda_grid(lambda_max: f64, grid_size: usize, grid_ratio: f64) -> Vec<f64> {
    if grid_size == 1 {
        return vec![lambda_max];
    }
    (0..grid_size)
        .map(|k| lambda_max * grid_ratio.powf(k as f64 / (grid_size - 1) as f64))
        .collect()
}

/// Warm-started adaptive-lasso fits along a decreasing log-spaced grid.
pub fn lambda_path(
    design: &DesignMatrix,
    response: &[u32],
    family: Family,
    weights: &PenaltyWeights,
    grid_size: usize,
    grid_ratio: f64,
) -> Result<PathResult> {
    if grid_size < 1 {
        return Err(Error::InvalidArgument("grid size must be at least 1".into()));
    }
    if !(grid_ratio > 0.0 && grid_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "grid ratio must lie in (0, 1), got {grid_ratio}"
        )));
    }
    weights.validate(design.ncols())?;
    let null = null_fit(design, response, family, weights)?;
    let Some(lmax) = lambda_max(design, response, &null, weights) else {
        log::warn!("every penalized column has an infinite weight; the path is the unpenalized fit");
        let fit = fit_penalized(design, response, family, weights, 0.0, Some(&null.values()))?;
        let (df, active) = degrees_of_freedom(&fit, design, weights);
        return Ok(PathResult {
            lambda_max: 0.0,
            points: vec![PathPoint {
                lambda: 0.0,
                df,
                active,
                bic: bic(&fit, df),
                fit,
            }],
            selected: None,
            weights: weights.clone(),
        });
    };
    let mut points = Vec::with_capacity(grid_size);
    let mut start = null.values();
    for lambda in lambda_grid(lmax, grid_size, grid_ratio) {
        let fit = fit_penalized(design, response, family, weights, lambda, Some(&start))?;
        start = fit.values();
        let (df, active) = degrees_of_freedom(&fit, design, weights);
        points.push(PathPoint {
            lambda,
            df,
            active,
            bic: bic(&fit, df),
            fit,
        });
    }
    Ok(PathResult {
        lambda_max: lmax,
        points,
        selected: None,
        weights: weights.clone(),
    })
}

/// Index of the minimum-BIC point; ties go to the larger lambda (earlier point).
pub fn bic_index(path: &PathResult) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, p) in path.points.iter().enumerate() {
        match best {
            None => best = Some(k),
            Some(b) => {
                let cur = path.points[b].bic;
                if p.bic < cur - 1e-9 * cur.abs().max(1.0) {
                    best = Some(k);
                }
            }
        }
    }
    best
}

/// Applies `rule` to a path; an off-grid fixed lambda is refit exactly.
pub fn select(
    path: &mut PathResult,
    rule: SelectionRule,
    design: &DesignMatrix,
    response: &[u32],
) -> Result<FitResult> {
    if path.points.is_empty() {
        return Err(Error::InvalidArgument("empty regularization path".into()));
    }
    match rule {
        SelectionRule::Bic => {
            let k = bic_index(path).expect("non-empty path");
            path.selected = Some(k);
            Ok(path.points[k].fit.clone())
        }
        SelectionRule::FixedLambda(lambda) => {
            let nearest = path
                .points
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    (a.1.lambda - lambda)
                        .abs()
                        .total_cmp(&(b.1.lambda - lambda).abs())
                })
                .map(|(k, _)| k)
                .expect("non-empty path");
            let on_grid = (path.points[nearest].lambda - lambda).abs() <= 1e-12 * lambda.abs().max(1e-300);
            if on_grid {
                path.selected = Some(nearest);
                return Ok(path.points[nearest].fit.clone());
            }
            path.selected = None;
            let family = path.points[nearest].fit.family;
            fit_penalized(
                design,
                response,
                family,
                &path.weights,
                lambda,
                Some(&path.points[nearest].fit.values()),
            )
        }
    }
}
