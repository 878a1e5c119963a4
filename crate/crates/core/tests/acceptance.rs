//! Acceptance suite: one PASS / FAIL / WAIVED line per criterion.
//!
//! Criteria 7 and 8 need external datasets. Point `SBM_SCHOOL_CONFIG` or
//! `SBM_PARLIAMENT_CONFIG` at a run config for the corresponding network to enable them.

mod common;

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use sparse_sbm::commands::{cmd_fit, cmd_simulate, RunConfig, SimulateConfig};
use sparse_sbm::covariates::DyadTable;
use sparse_sbm::design::{encode, pair_index, reconstruct_phi, DesignMatrix, ModelSpec};
use sparse_sbm::glm::{fit_mle, score, score_tolerance, Family, FitResult, FitStatus};
use sparse_sbm::penalty::{
    adaptive_weights, fit_penalized, kkt_violation, lambda_max, lambda_path, null_fit, select,
    PenaltyWeights, SelectionRule,
};
use sparse_sbm::reduced_graph::{reduce_positive, reduce_threshold};
use sparse_sbm::simulate::sample_graph;

enum Status {
    Pass,
    Fail,
    Waived,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn pass(detail: impl Into<String>) -> Outcome {
    Outcome { status: Status::Pass, detail: detail.into() }
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome { status: Status::Fail, detail: detail.into() }
}

fn waived(detail: impl Into<String>) -> Outcome {
    Outcome { status: Status::Waived, detail: detail.into() }
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        pass(detail)
    } else {
        fail(detail)
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Penalized-coordinate KKT violation computed from the design rows directly.
fn independent_kkt(fit: &FitResult, design: &DesignMatrix, y: &[u32], weights: &PenaltyWeights) -> f64 {
    let beta = fit.values();
    let eta = design.mul_vec(&beta);
    let mut g = vec![0.0; design.ncols()];
    for d in 0..design.nrows() {
        let mu = match fit.family {
            Family::BernoulliLogit => 1.0 / (1.0 + (-eta[d]).exp()),
            Family::PoissonLog => eta[d].exp(),
        };
        let (cols, vals) = design.row(d);
        for (&c, &v) in cols.iter().zip(vals) {
            g[c as usize] += v * (f64::from(y[d]) - mu);
        }
    }
    let lambda = fit.lambda.unwrap_or(0.0);
    let mut worst: f64 = 0.0;
    for j in 0..beta.len() {
        if design.inestimable_mask()[j] {
            continue;
        }
        let v = if !weights.penalized[j] {
            g[j].abs()
        } else if weights.weights[j].is_infinite() {
            if beta[j] != 0.0 { f64::INFINITY } else { 0.0 }
        } else {
            let tau = lambda * weights.weights[j];
            if beta[j] != 0.0 {
                (g[j] - tau * beta[j].signum()).abs()
            } else {
                (g[j].abs() - tau).max(0.0)
            }
        };
        worst = worst.max(v);
    }
    worst
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut checked = 0;
    for trial in 0..300 {
        let n = rng.random_range(2..=50);
        let p = rng.random_range(1..=10usize.min(n));
        let inst = random_binary(n, p, 0.3, 1000 + trial);
        let q1_expected = n + p * (p - 1) / 2;
        let x1 = eq1_design(&inst);
        if x1.ncols() != q1_expected || x1.convention_parameter_count() != q1_expected {
            return fail(format!("eq1 n={n} p={p}: {} columns, expected {q1_expected}", x1.ncols()));
        }
        let k = rng.random_range(0..4usize);
        let mut table = inst.table.clone();
        let names: Vec<String> = (0..k).map(|c| format!("x{c}")).collect();
        for name in &names {
            let values: Vec<f64> = (0..table.len()).map(|_| rng.random::<f64>()).collect();
            table.push_column(name.clone(), values).unwrap();
        }
        let x2 = encode(&table, &inst.partition, &ModelSpec::covariate_poisson(names)).unwrap();
        let q2_expected = k + p * (p + 1) / 2;
        if x2.ncols() != q2_expected || x2.convention_parameter_count() != q2_expected {
            return fail(format!("eq2 n={n} p={p} k={k}: {} columns, expected {q2_expected}", x2.ncols()));
        }
        checked += 1;
    }
    pass(format!("{checked} random (n, p) designs, q1 = n + p(p-1)/2 and q2 = dim(beta) + p(p+1)/2 exact"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let p = rng.random_range(1..=12usize);
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let coefs: Vec<f64> = (0..p * (p - 1) / 2)
            .map(|_| scale * (rng.random::<f64>() * 2.0 - 1.0))
            .collect();
        let phi = reconstruct_phi(&coefs, p).unwrap();
        for r in 0..p {
            for s in r + 1..p {
                if phi[r][s] != phi[s][r] || phi[r][s] != coefs[pair_index(r, s, p)] {
                    return fail(format!("off-diagonal ({r},{s}) not reproduced for p={p}"));
                }
            }
            worst = worst.max(phi[r].iter().sum::<f64>().abs());
        }
    }
    verdict(worst < 1e-10, format!("1000 draws, max |row sum| = {worst:.2e} (tolerance 1e-10)"))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut matched = 0;
    let mut skipped = 0;
    let mut worst: f64 = 0.0;
    let mut seed = 0u64;
    while matched < 25 {
        seed += 1;
        if seed > 2000 {
            return fail(format!("only {matched} instances with an existing MLE found"));
        }
        let n = rng.random_range(5..=8usize);
        let p = rng.random_range(1..=3usize.min(n));
        let poisson = matched % 2 == 1;
        let (inst, family, model, direct) = if poisson {
            let inst = random_counts(n, p, 3000 + seed);
            let mut table = inst.table.clone();
            let x: Vec<f64> = (0..table.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            table.push_column("x1", x.clone()).unwrap();
            let spec = ModelSpec::covariate_poisson(vec!["x1".into()]);
            let design = encode(&table, &inst.partition, &spec).unwrap();
            let mut direct = eq1_direct(&inst);
            direct.node_effects = false;
            direct.block_effects = p > 1;
            direct.covariates = vec![x];
            direct.covariate_names = vec!["x1".into()];
            (inst, Family::PoissonLog, design, direct)
        } else {
            let inst = random_binary(n, p, 0.5, 3000 + seed);
            let design = eq1_design(&inst);
            let direct = eq1_direct(&inst);
            (inst, Family::BernoulliLogit, design, direct)
        };
        let y = response_f64(&inst);
        let oracle = oracle_fit(&direct, &y, family);
        let fit = fit_mle(&model, inst.table.response(), family).unwrap();
        if !oracle.well_determined {
            skipped += 1;
            if !oracle.converged && fit.status == FitStatus::Converged && fit.values().iter().all(|v| v.abs() < 8.0) {
                return fail(format!(
                    "instance {seed}: library converged to moderate values where the oracle found no finite MLE"
                ));
            }
            continue;
        }
        if fit.status != FitStatus::Converged {
            return fail(format!(
                "instance {seed}: oracle converged (max |theta| {:.2}) but fit status is {:?}: {:?}",
                oracle.theta.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
                fit.status,
                fit.warnings
            ));
        }
        for (name, &value) in oracle.names.iter().zip(&oracle.theta) {
            let Some(c) = fit.coefficient(name) else {
                return fail(format!("instance {seed}: library has no coefficient {name}"));
            };
            worst = worst.max((c - value).abs());
        }
        if oracle.names.len() != fit.coefficients.len() {
            return fail(format!("instance {seed}: parameter counts differ"));
        }
        let tol = score_tolerance(&model, inst.table.response());
        let g = score(&fit.values(), &model, inst.table.response(), family);
        let resid = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if resid > tol {
            return fail(format!("instance {seed}: score residual {resid:e} above bound {tol:e}"));
        }
        if (direct_loglik(&direct, &y, &oracle.theta, family) - fit.log_likelihood).abs() > 1e-8 {
            return fail(format!("instance {seed}: log-likelihoods differ"));
        }
        matched += 1;
    }
    verdict(
        worst <= 1e-6,
        format!("25 instances (n <= 8, both families; {skipped} without a well-determined finite MLE skipped), max |coef diff| = {worst:.2e} (tolerance 1e-6), score bound held"),
    )
}

struct PenalizedCase {
    design: DesignMatrix,
    response: Vec<u32>,
    family: Family,
}

fn penalized_cases() -> Vec<PenalizedCase> {
    let mut out = Vec::new();
    for seed in 0..6u64 {
        let n = 24 + 4 * seed as usize;
        let p = 2 + (seed as usize % 3);
        let inst = random_binary(n, p, 0.3, 400 + seed);
        out.push(PenalizedCase {
            design: eq1_design(&inst),
            response: inst.table.response().to_vec(),
            family: Family::BernoulliLogit,
        });
        let inst = random_counts(n, p, 500 + seed);
        let mut table: DyadTable = inst.table.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let x: Vec<f64> = (0..table.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        table.push_column("x1", x).unwrap();
        let design = encode(&table, &inst.partition, &ModelSpec::covariate_poisson(vec!["x1".into()])).unwrap();
        out.push(PenalizedCase {
            design,
            response: inst.table.response().to_vec(),
            family: Family::PoissonLog,
        });
    }
    out
}

fn criterion_4() -> Outcome {
    let mut worst_zero: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    let mut points = 0;
    for (k, case) in penalized_cases().iter().enumerate() {
        let mle = fit_mle(&case.design, &case.response, case.family).unwrap();
        if mle.status != FitStatus::Converged {
            return fail(format!("case {k}: reference MLE status {:?}", mle.status));
        }
        let weights = adaptive_weights(&mle, case.design.penalized_mask(), 1.0).unwrap();
        let zero = fit_penalized(&case.design, &case.response, case.family, &weights, 0.0, None).unwrap();
        worst_zero = worst_zero.max(max_abs_diff(&zero.values(), &mle.values()));

        let null = null_fit(&case.design, &case.response, case.family, &weights).unwrap();
        let lmax = lambda_max(&case.design, &case.response, &null, &weights).unwrap();
        for factor in [1.0, 1.5, 10.0] {
            let fit = fit_penalized(&case.design, &case.response, case.family, &weights, lmax * factor, None).unwrap();
            let active = (0..fit.coefficients.len())
                .filter(|&j| weights.penalized[j] && fit.coefficients[j].value != 0.0)
                .count();
            if active != 0 {
                let biggest = (0..fit.coefficients.len())
                    .filter(|&j| weights.penalized[j])
                    .map(|j| fit.coefficients[j].value.abs())
                    .fold(0.0, f64::max);
                return fail(format!(
                    "case {k}: {active} active coefficients (largest {biggest:e}) at {factor} x lambda_max"
                ));
            }
        }
        let path = lambda_path(&case.design, &case.response, case.family, &weights, 40, 1e-4).unwrap();
        if path.points[0].active != 0 {
            return fail(format!("case {k}: first path point is not empty"));
        }
        for pt in &path.points {
            let v = independent_kkt(&pt.fit, &case.design, &case.response, &weights)
                .max(kkt_violation(&pt.fit, &case.design, &case.response, &weights));
            worst_kkt = worst_kkt.max(v);
            points += 1;
        }
    }
    verdict(
        worst_zero <= 1e-6 && worst_kkt <= 1e-5,
        format!(
            "12 cases: lambda=0 vs MLE max diff {worst_zero:.2e} (tol 1e-6); empty active set at >= lambda_max; \
             max KKT violation {worst_kkt:.2e} over {points} path points (tol 1e-5)"
        ),
    )
}

fn support_replicate(rep: u64) -> Result<bool, String> {
    let cfg = SimulateConfig {
        n: 200,
        p: 4,
        family: Family::BernoulliLogit,
        fraction_zero: 0.5,
        magnitude: 0.8,
        target_mean: 0.2,
        effect_sd: 0.3,
        seed: 10_000 + rep,
    };
    let spec = cfg.to_spec().map_err(|e| e.to_string())?;
    let data = sample_graph(&spec).map_err(|e| e.to_string())?;
    let design = encode(&data.table, &data.partition, &ModelSpec::degree_corrected()).map_err(|e| e.to_string())?;
    let y = data.table.response();
    let mle = fit_mle(&design, y, Family::BernoulliLogit).map_err(|e| e.to_string())?;
    let weights = adaptive_weights(&mle, design.penalized_mask(), 1.0).map_err(|e| e.to_string())?;
    let mut path = lambda_path(&design, y, Family::BernoulliLogit, &weights, 100, 1e-4).map_err(|e| e.to_string())?;
    let fit = select(&mut path, SelectionRule::Bic, &design, y).map_err(|e| e.to_string())?;
    let p = spec.p;
    let mut exact = true;
    for r in 0..p {
        for s in r + 1..p {
            let truth = spec.phi[r][s] != 0.0;
            let est = fit.phi_matrix[r][s] != 0.0;
            exact &= truth == est;
        }
    }
    Ok(exact)
}

fn criterion_5() -> Outcome {
    let mut hits = 0;
    for rep in 0..50 {
        match support_replicate(rep) {
            Ok(true) => hits += 1,
            Ok(false) => {}
            Err(e) => return fail(format!("replicate {rep}: {e}")),
        }
    }
    verdict(
        hits >= 40,
        format!("exact off-diagonal support recovered in {hits}/50 replicates (need >= 40)"),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for trial in 0..1000 {
        let p = rng.random_range(1..=10usize);
        let coefs: Vec<f64> = (0..p * (p - 1) / 2)
            .map(|_| match rng.random_range(0..3) {
                0 => 0.0,
                _ => rng.random_range(-2.0..2.0),
            })
            .collect();
        let phi = reconstruct_phi(&coefs, p).unwrap();
        let labels = block_labels(p);
        let rg = reduce_positive(&phi, &labels).unwrap();
        let mut brute = Vec::new();
        for r in 0..p {
            for s in 0..p {
                if r <= s && phi[r][s] > 0.0 {
                    brute.push((r, s));
                }
            }
        }
        if rg.edge_set() != brute {
            return fail(format!("trial {trial}: positive-rule edges differ from the pair scan"));
        }
    }
    let grid: Vec<f64> = (0..=50).map(|k| k as f64 / 50.0).collect();
    for seed in 0..10u64 {
        let inst = random_binary(30, 4, 0.25, 700 + seed);
        let design = eq1_design(&inst);
        let fit = fit_mle(&design, inst.table.response(), Family::BernoulliLogit).unwrap();
        let mut previous: Option<Vec<(usize, usize)>> = None;
        for &t in &grid {
            let edges = reduce_threshold(&fit, &inst.partition, t).unwrap().edge_set();
            if let Some(prev) = &previous {
                if !edges.iter().all(|e| prev.contains(e)) {
                    return fail(format!("seed {seed}: threshold edge set grew at t = {t}"));
                }
            }
            previous = Some(edges);
        }
    }
    pass("1000 random constrained phi matrices match the brute-force scan; threshold edge sets nest over 51 values of t")
}

fn load_data_config(var: &str) -> Option<Result<RunConfig, String>> {
    let path = std::env::var_os(var)?;
    Some(RunConfig::load(&PathBuf::from(path)).map_err(|e| e.to_string()))
}

fn count_band(observed: usize, target: usize, band: f64) -> bool {
    (observed as f64 - target as f64).abs() <= band * target as f64
}

fn criterion_7() -> Outcome {
    let Some(cfg) = load_data_config("SBM_SCHOOL_CONFIG") else {
        return waived("school contact dataset not available (set SBM_SCHOOL_CONFIG); covered by criteria 3-6");
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let out = match cmd_fit(&cfg) {
        Ok(a) => a,
        Err(e) => return fail(e.to_string()),
    };
    let mle = out.mle_graph.sign_summary;
    let Some(pen) = out.penalized_graph.map(|g| g.sign_summary) else {
        return fail("config disables the penalized fit");
    };
    let ok = out.manifest.block_count == 21
        && mle.positive == 86
        && mle.negative == 145
        && mle.zero == 0
        && count_band(pen.positive, 52, 0.10)
        && count_band(pen.zero, 88, 0.10)
        && count_band(pen.negative, 91, 0.10);
    verdict(
        ok,
        format!(
            "MLE {}/{}/{} (target 86/0/145 exact); adaptive lasso {}/{}/{} (target 52/88/91 within 10%)",
            mle.positive, mle.zero, mle.negative, pen.positive, pen.zero, pen.negative
        ),
    )
}

fn criterion_8() -> Outcome {
    let Some(cfg) = load_data_config("SBM_PARLIAMENT_CONFIG") else {
        return waived("cosponsorship dataset not available (set SBM_PARLIAMENT_CONFIG); covered by criteria 3-6");
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let out = match cmd_fit(&cfg) {
        Ok(a) => a,
        Err(e) => return fail(e.to_string()),
    };
    let targets = [
        ("(Intercept)", -3.83),
        ("gender:F-M", 0.233),
        ("gender:F-F", 0.659),
        ("same_constituency", 0.550),
        ("age_difference", -0.011),
        ("seniority:junior-senior", 0.253),
        ("seniority:senior-senior", 0.700),
    ];
    let mut worst: f64 = 0.0;
    for (name, target) in targets {
        match out.mle.coefficient(name) {
            Some(c) => worst = worst.max((c - target).abs()),
            None => return fail(format!("MLE has no coefficient {name}")),
        }
    }
    let Some(pen) = out.penalized else {
        return fail("config disables the penalized fit");
    };
    let age_zero = pen.coefficient("age_difference").is_some_and(|c| c == 0.0);
    let ss = out.penalized_graph.map(|g| g.sign_summary).unwrap_or_default();
    let within = |a: usize, b: usize| a.abs_diff(b) <= 3;
    let ok = worst <= 0.05 && age_zero && within(ss.positive, 21) && within(ss.zero, 16) && within(ss.negative, 18);
    verdict(
        ok,
        format!(
            "max |MLE - table| = {worst:.3} (tol 0.05); age difference zeroed: {age_zero}; adaptive lasso signs {}/{}/{} (target 21/16/18 +-3)",
            ss.positive, ss.zero, ss.negative
        ),
    )
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SimulateConfig {
        n: 60,
        p: 3,
        family: Family::BernoulliLogit,
        fraction_zero: 0.34,
        magnitude: 0.8,
        target_mean: 0.2,
        effect_sd: 0.3,
        seed: 99,
    };
    let spec = cfg.to_spec().unwrap();
    cmd_simulate(&spec, dir.path()).unwrap();
    let base = RunConfig::load(&dir.path().join("config.json")).unwrap();
    let mut outputs = Vec::new();
    for run in ["run_a", "run_b"] {
        let mut c = base.clone();
        c.out = dir.path().join(run);
        c.threshold = Some(0.2);
        if let Err(e) = cmd_fit(&c) {
            return fail(e.to_string());
        }
        outputs.push(c.out);
    }
    let files = [
        "mle_coefficients.csv",
        "penalized_coefficients.csv",
        "penalized_path.csv",
        "mle_reduced_graph.json",
        "penalized_reduced_graph.json",
        "mle_threshold_graph.json",
        "penalized_reduced_graph.dot",
    ];
    for f in files {
        let a = std::fs::read(outputs[0].join(f)).unwrap();
        let b = std::fs::read(outputs[1].join(f)).unwrap();
        if a != b {
            return fail(format!("{f} differs between runs"));
        }
    }
    pass(format!("{} output files byte-identical across two runs", files.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("parameter-count identities", criterion_1),
        ("constraint closure", criterion_2),
        ("MLE correctness vs damped-Newton oracle", criterion_3),
        ("penalized correctness and KKT", criterion_4),
        ("support recovery", criterion_5),
        ("reduced-graph rules", criterion_6),
        ("school network reproduction", criterion_7),
        ("parliament network reproduction", criterion_8),
        ("determinism", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let id = format!("{}", k + 1);
        if !filter.is_empty() && !filter.iter().any(|x| x == &id) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let tag = match outcome.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed += 1;
                "FAIL"
            }
            Status::Waived => "WAIVED",
        };
        println!(
            "[{tag}] criterion {id} ({name}): {} [{:.1}s]",
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
