//! Run configuration and the `fit`, `simulate`, `compare` and `validate` commands.
//!
//! A run is fully described by a JSON [`RunConfig`]; command-line flags override single
//! fields (flags > config file > defaults). Relative paths in a config file resolve
//! against the directory holding that file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::covariates::{build_dyad_table, standardize, CovariateSpec, DyadTable, Scaling};
use crate::design::{encode, ColumnGroup, DesignMatrix, ModelSpec, INTERCEPT};
use crate::error::{Error, Result};
use crate::glm::{fit_mle, Family, FitResult, FitStatus};
use crate::graph_io::{
    load_attributes, load_edge_list, partition_from_attributes, validate, AttributeTable,
    Diagnostics, EdgeListOptions, EdgeMode, Graph, Partition,
};
use crate::penalty::{adaptive_weights, lambda_path, select, PathResult, SelectionRule};
use crate::reduced_graph::{
    export_to_file, reduce_fit, reduce_threshold, ExportFormat, ExportOptions, ReducedGraph,
    SignSummary, Styling,
};
use crate::simulate::{
    calibrate_intercept, centered_normal_effects, make_sparse_phi, sample_graph, GeneratorSpec,
    BLOCK_ATTRIBUTE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelPreset {
    Eq1,
    Eq2,
    Custom,
}

/// Assigns `label` to every node whose `attribute` equals `value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideRule {
    pub attribute: String,
    pub value: String,
    pub label: String,
}

fn default_separator() -> String {
    "_".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    #[serde(default)]
    pub keys: Vec<String>,
    #[serde(default)]
    pub overrides: BTreeMap<String, String>,
    #[serde(default)]
    pub override_rules: Vec<OverrideRule>,
    #[serde(default = "default_separator")]
    pub separator: String,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            keys: Vec::new(),
            overrides: BTreeMap::new(),
            override_rules: Vec::new(),
            separator: default_separator(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectChoice {
    Bic,
    Fixed,
}

/// `"auto"` or a numeric penalty level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSetting {
    Value(f64),
    Keyword(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

impl LambdaSetting {
    pub fn parse(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(LambdaSetting::Keyword(AutoKeyword::Auto));
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && *v >= 0.0)
            .map(LambdaSetting::Value)
            .ok_or_else(|| Error::InvalidArgument(format!("--lambda expects `auto` or a value >= 0, got `{s}`")))
    }
}

fn yes() -> bool {
    true
}
fn default_gamma() -> f64 {
    1.0
}
fn default_grid_size() -> usize {
    100
}
fn default_grid_ratio() -> f64 {
    1e-4
}
fn default_lambda() -> LambdaSetting {
    LambdaSetting::Keyword(AutoKeyword::Auto)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_gamma")]
    pub gamma_w: f64,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default = "default_grid_ratio")]
    pub grid_ratio: f64,
    #[serde(default)]
    pub select: Option<SelectChoice>,
    #[serde(default = "default_lambda")]
    pub lambda: LambdaSetting,
    /// Defaults to on for the Poisson preset and off otherwise.
    #[serde(default)]
    pub penalize_covariates: Option<bool>,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            enabled: true,
            gamma_w: default_gamma(),
            grid_size: default_grid_size(),
            grid_ratio: default_grid_ratio(),
            select: None,
            lambda: default_lambda(),
            penalize_covariates: None,
        }
    }
}

impl PenaltyConfig {
    pub fn rule(&self) -> Result<SelectionRule> {
        match (self.select, self.lambda) {
            (Some(SelectChoice::Bic), _) | (None, LambdaSetting::Keyword(_)) => Ok(SelectionRule::Bic),
            (Some(SelectChoice::Fixed) | None, LambdaSetting::Value(v)) => Ok(SelectionRule::FixedLambda(v)),
            (Some(SelectChoice::Fixed), LambdaSetting::Keyword(_)) => Err(Error::InvalidArgument(
                "fixed-lambda selection needs a numeric lambda".into(),
            )),
        }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_format() -> ExportFormat {
    ExportFormat::Dot
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub edges: PathBuf,
    #[serde(default)]
    pub attributes: Option<PathBuf>,
    #[serde(default)]
    pub header: bool,
    /// Defaults to binary for Bernoulli models and weighted for Poisson models.
    #[serde(default)]
    pub mode: Option<EdgeMode>,
    #[serde(default)]
    pub partition: PartitionConfig,
    pub model: ModelPreset,
    #[serde(default)]
    pub family: Option<Family>,
    #[serde(default)]
    pub node_effects: Option<bool>,
    #[serde(default)]
    pub block_effects: Option<bool>,
    #[serde(default)]
    pub covariates: Vec<CovariateSpec>,
    #[serde(default)]
    pub standardize: Vec<String>,
    #[serde(default)]
    pub penalty: PenaltyConfig,
    /// Also derive threshold-rule reduced graphs (Bernoulli fits only).
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default = "default_format")]
    pub format: ExportFormat,
    #[serde(default)]
    pub styling: Styling,
    #[serde(default)]
    pub include_negative: bool,
    #[serde(default)]
    pub dump_design: bool,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Loads a config file and resolves its relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.edges = resolve(base, &cfg.edges);
        cfg.attributes = cfg.attributes.map(|a| resolve(base, &a));
        cfg.out = resolve(base, &cfg.out);
        for spec in &mut cfg.covariates {
            if let CovariateSpec::Passthrough { path, .. } = spec {
                *path = resolve(base, path);
            }
        }
        Ok(cfg)
    }

    pub fn family(&self) -> Result<Family> {
        match (self.model, self.family) {
            (ModelPreset::Eq1, None | Some(Family::BernoulliLogit)) => Ok(Family::BernoulliLogit),
            (ModelPreset::Eq2, None | Some(Family::PoissonLog)) => Ok(Family::PoissonLog),
            (ModelPreset::Custom, Some(f)) => Ok(f),
            (ModelPreset::Custom, None) => Err(Error::InvalidArgument(
                "custom models need an explicit family".into(),
            )),
            (preset, Some(f)) => Err(Error::InvalidArgument(format!(
                "preset {preset:?} does not use the {f} family; use model=custom"
            ))),
        }
    }

    pub fn edge_mode(&self) -> Result<EdgeMode> {
        Ok(self.mode.unwrap_or(match self.family()? {
            Family::BernoulliLogit => EdgeMode::Binary,
            Family::PoissonLog => EdgeMode::Weighted,
        }))
    }

    /// Model specification over the covariate columns actually present in `table`.
    pub fn model_spec(&self, table: &DyadTable) -> Result<ModelSpec> {
        let covariates = table.covariate_names().to_vec();
        let mut spec = match self.model {
            ModelPreset::Eq1 => {
                if !covariates.is_empty() {
                    return Err(Error::InvalidArgument(
                        "the eq1 preset has no covariates; use model=custom".into(),
                    ));
                }
                ModelSpec::degree_corrected()
            }
            ModelPreset::Eq2 => ModelSpec::covariate_poisson(covariates),
            ModelPreset::Custom => ModelSpec {
                family: self.family()?,
                node_effects: self.node_effects.unwrap_or(false),
                block_effects: self.block_effects.unwrap_or(false),
                covariates,
                penalize_covariates: false,
            },
        };
        if let Some(flag) = self.penalty.penalize_covariates {
            spec.penalize_covariates = flag;
        }
        // node and block effects are always unpenalized; explicit flags are validated here
        if self.model != ModelPreset::Custom
            && (self.node_effects.is_some() || self.block_effects.is_some())
        {
            log::warn!("node_effects/block_effects are only read for model=custom");
        }
        Ok(spec)
    }

    /// SHA-256 of the canonical JSON form of the config.
    pub fn hash(&self) -> Result<String> {
        let canonical = serde_json::to_string(self)?;
        Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct FitOverrides {
    pub model: Option<ModelPreset>,
    pub family: Option<Family>,
    pub penalized: Option<bool>,
    pub lambda: Option<LambdaSetting>,
    pub gamma_w: Option<f64>,
    pub grid_size: Option<usize>,
    pub select: Option<SelectChoice>,
    pub format: Option<ExportFormat>,
    pub threshold: Option<f64>,
    pub out: Option<PathBuf>,
}

impl FitOverrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.model {
            cfg.model = v;
        }
        if let Some(v) = self.family {
            cfg.family = Some(v);
        }
        if let Some(v) = self.penalized {
            cfg.penalty.enabled = v;
        }
        if let Some(v) = self.lambda {
            cfg.penalty.lambda = v;
        }
        if let Some(v) = self.gamma_w {
            cfg.penalty.gamma_w = v;
        }
        if let Some(v) = self.grid_size {
            cfg.penalty.grid_size = v;
        }
        if let Some(v) = self.select {
            cfg.penalty.select = Some(v);
        }
        if let Some(v) = self.format {
            cfg.format = v;
        }
        if let Some(v) = self.threshold {
            cfg.threshold = Some(v);
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
    }
}

/// Inputs of a run after ingestion and validation.
pub struct LoadedInputs {
    pub graph: Graph,
    pub attributes: Option<AttributeTable>,
    pub partition: Partition,
    pub diagnostics: Diagnostics,
}

fn expand_overrides(cfg: &PartitionConfig, attrs: &AttributeTable) -> Result<BTreeMap<String, String>> {
    let mut overrides = BTreeMap::new();
    for rule in &cfg.override_rules {
        if !attrs.has_attribute(&rule.attribute) {
            return Err(Error::Validation(format!(
                "override rule uses unknown attribute `{}`",
                rule.attribute
            )));
        }
        for node in attrs.node_ids() {
            if attrs.get(node, &rule.attribute) == Some(rule.value.as_str()) {
                overrides.insert(node.to_string(), rule.label.clone());
            }
        }
    }
    overrides.extend(cfg.overrides.iter().map(|(k, v)| (k.clone(), v.clone())));
    Ok(overrides)
}

/// Reads edges, attributes and the partition described by `cfg`.
pub fn load_inputs(cfg: &RunConfig) -> Result<LoadedInputs> {
    let attributes = cfg.attributes.as_deref().map(load_attributes).transpose()?;
    let options = EdgeListOptions {
        has_header: cfg.header,
        extra_nodes: attributes
            .as_ref()
            .map(|a| a.node_ids().map(str::to_string).collect())
            .unwrap_or_default(),
    };
    let graph = load_edge_list(&cfg.edges, cfg.edge_mode()?, &options)?;
    let partition = match &attributes {
        Some(attrs) => {
            for id in graph.node_ids() {
                if !attrs.contains_node(id) {
                    return Err(Error::Validation(format!(
                        "node {id} appears in the edge list but has no attribute row"
                    )));
                }
            }
            let overrides = expand_overrides(&cfg.partition, attrs)?;
            partition_from_attributes(attrs, &cfg.partition.keys, &overrides, &cfg.partition.separator)?
        }
        None => {
            if !cfg.partition.keys.is_empty() {
                return Err(Error::Validation(
                    "partition keys need an attribute table".into(),
                ));
            }
            let assignment = graph
                .node_ids()
                .iter()
                .map(|id| {
                    let label = cfg.partition.overrides.get(id).cloned().unwrap_or_else(|| "all".into());
                    (id.clone(), label)
                })
                .collect();
            Partition::from_labels(assignment)?
        }
    };
    let diagnostics = validate(&graph, &partition);
    Ok(LoadedInputs {
        graph,
        attributes,
        partition,
        diagnostics,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn back_transform_fit(fit: &mut FitResult, scaling: &Scaling) {
    if scaling.columns.is_empty() {
        return;
    }
    let names: Vec<String> = fit.coefficients.iter().map(|c| c.name.clone()).collect();
    let values = scaling.back_transform(&names, &fit.values(), INTERCEPT);
    for (c, v) in fit.coefficients.iter_mut().zip(values) {
        c.value = v;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingEntry {
    pub step: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub input_hashes: BTreeMap<String, String>,
    /// Hash over config and inputs; equal for identical runs.
    pub run_hash: String,
    pub family: Family,
    pub node_count: usize,
    pub block_count: usize,
    pub dyad_count: usize,
    pub design_columns: usize,
    pub free_columns: usize,
    pub parameter_count_convention: usize,
    pub folded_node: Option<String>,
    pub folded_block: Option<String>,
    pub standardized: Scaling,
    pub mle_status: FitStatus,
    pub penalized_status: Option<FitStatus>,
    pub lambda_max: Option<f64>,
    pub selected_lambda: Option<f64>,
    pub outputs: Vec<String>,
    pub timings: Vec<TimingEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignReport {
    pub pairs: usize,
    pub mle: SignSummary,
    pub penalized: Option<SignSummary>,
}

/// Everything produced by [`cmd_fit`], kept in memory for callers and tests.
pub struct FitArtifacts {
    pub design: DesignMatrix,
    pub response: Vec<u32>,
    pub mle: FitResult,
    pub mle_graph: ReducedGraph,
    pub path: Option<PathResult>,
    pub penalized: Option<FitResult>,
    pub penalized_graph: Option<ReducedGraph>,
    pub manifest: Manifest,
}

/// Ingests, fits by maximum likelihood and (optionally) adaptive lasso, derives reduced
/// graphs and writes every artifact into `cfg.out`.
pub fn cmd_fit(cfg: &RunConfig) -> Result<FitArtifacts> {
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut Vec<TimingEntry>| {
        timings.push(TimingEntry {
            step: name.to_string(),
            seconds: clock.elapsed().as_secs_f64(),
        });
        clock = Instant::now();
    };

    let family = cfg.family()?;
    let inputs = load_inputs(cfg)?;
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let out = |name: &str| cfg.out.join(name);
    let mut outputs = Vec::new();
    write_text(&out("diagnostics.json"), &inputs.diagnostics.to_json()?)?;
    write_text(&out("diagnostics.txt"), &inputs.diagnostics.to_string())?;
    outputs.extend(["diagnostics.json".to_string(), "diagnostics.txt".to_string()]);
    if !inputs.diagnostics.pass {
        return Err(Error::Validation(inputs.diagnostics.problems.join("; ")));
    }
    lap("ingest", &mut timings);

    let table = match &inputs.attributes {
        Some(attrs) => build_dyad_table(&inputs.graph, attrs, &cfg.covariates)?,
        None if cfg.covariates.is_empty() => DyadTable::from_graph(&inputs.graph),
        None => {
            return Err(Error::Validation(
                "covariates need an attribute table".into(),
            ))
        }
    };
    let (table, scaling) = if cfg.standardize.is_empty() {
        (table, Scaling::default())
    } else {
        standardize(&table, &cfg.standardize)?
    };
    let spec = cfg.model_spec(&table)?;
    let design = encode(&table, &inputs.partition, &spec)?;
    let response = table.response().to_vec();
    if cfg.dump_design {
        design.write_triplets(&out("design.triplets"))?;
        outputs.push("design.triplets".into());
    }
    lap("design", &mut timings);

    let export_options = ExportOptions {
        styling: cfg.styling.clone(),
        include_negative: cfg.include_negative,
    };
    let write_graph = |prefix: &str, rg: &ReducedGraph, outputs: &mut Vec<String>| -> Result<()> {
        let json = format!("{prefix}.json");
        write_text(&out(&json), &rg.to_json()?)?;
        outputs.push(json);
        if cfg.format != ExportFormat::Json {
            let name = format!("{prefix}.{}", cfg.format.extension());
            export_to_file(rg, cfg.format, &export_options, &out(&name))?;
            outputs.push(name);
        }
        Ok(())
    };

    let mle_raw = fit_mle(&design, &response, family)?;
    let mut mle = mle_raw.clone();
    back_transform_fit(&mut mle, &scaling);
    mle.save(&out("mle_fit.json"))?;
    write_text(&out("mle_coefficients.csv"), &mle.coefficient_csv())?;
    outputs.extend(["mle_fit.json".to_string(), "mle_coefficients.csv".to_string()]);
    let mle_graph = reduce_fit(&mle)?;
    write_graph("mle_reduced_graph", &mle_graph, &mut outputs)?;
    if let (Some(t), Family::BernoulliLogit) = (cfg.threshold, family) {
        let rg = reduce_threshold(&mle, &inputs.partition, t)?;
        write_graph("mle_threshold_graph", &rg, &mut outputs)?;
    }
    lap("mle", &mut timings);

    let mut path = None;
    let mut penalized = None;
    let mut penalized_graph = None;
    if cfg.penalty.enabled {
        let rule = cfg.penalty.rule()?;
        let weights = adaptive_weights(&mle_raw, design.penalized_mask(), cfg.penalty.gamma_w)?;
        let mut p = lambda_path(
            &design,
            &response,
            family,
            &weights,
            cfg.penalty.grid_size,
            cfg.penalty.grid_ratio,
        )?;
        let mut fit = select(&mut p, rule, &design, &response)?;
        back_transform_fit(&mut fit, &scaling);
        p.write_summary(&out("penalized_path.csv"))?;
        fit.save(&out("penalized_fit.json"))?;
        write_text(&out("penalized_coefficients.csv"), &fit.coefficient_csv())?;
        outputs.extend([
            "penalized_path.csv".to_string(),
            "penalized_fit.json".to_string(),
            "penalized_coefficients.csv".to_string(),
        ]);
        let rg = reduce_fit(&fit)?;
        write_graph("penalized_reduced_graph", &rg, &mut outputs)?;
        if let (Some(t), Family::BernoulliLogit) = (cfg.threshold, family) {
            let trg = reduce_threshold(&fit, &inputs.partition, t)?;
            write_graph("penalized_threshold_graph", &trg, &mut outputs)?;
        }
        path = Some(p);
        penalized = Some(fit);
        penalized_graph = Some(rg);
        lap("penalized", &mut timings);
    }

    let p = design.block_count();
    let signs = SignReport {
        pairs: p * (p + 1) / 2,
        mle: mle_graph.sign_summary,
        penalized: penalized_graph.as_ref().map(|g| g.sign_summary),
    };
    write_text(&out("sign_summary.json"), &serde_json::to_string_pretty(&signs)?)?;
    outputs.push("sign_summary.json".into());

    let mut input_hashes = BTreeMap::new();
    input_hashes.insert("edges".to_string(), hash_file(&cfg.edges)?);
    if let Some(a) = &cfg.attributes {
        input_hashes.insert("attributes".to_string(), hash_file(a)?);
    }
    let config_hash = cfg.hash()?;
    let mut run = Sha256::new();
    run.update(config_hash.as_bytes());
    for h in input_hashes.values() {
        run.update(h.as_bytes());
    }
    outputs.push("manifest.json".into());
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash,
        input_hashes,
        run_hash: hex::encode(run.finalize()),
        family,
        node_count: inputs.graph.node_count(),
        block_count: p,
        dyad_count: design.nrows(),
        design_columns: design.ncols(),
        free_columns: design.free_column_count(),
        parameter_count_convention: design.convention_parameter_count(),
        folded_node: design.folded_node().map(str::to_string),
        folded_block: design.folded_block().map(str::to_string),
        standardized: scaling,
        mle_status: mle.status,
        penalized_status: penalized.as_ref().map(|f| f.status),
        lambda_max: path.as_ref().map(|p| p.lambda_max),
        selected_lambda: penalized.as_ref().and_then(|f| f.lambda),
        outputs,
        timings,
    };
    write_text(&out("manifest.json"), &serde_json::to_string_pretty(&manifest)?)?;

    if mle.status == FitStatus::MaxIterations {
        return Err(Error::NonConvergence(format!(
            "maximum-likelihood fit stopped after {} iterations; outputs written to {}",
            mle.iterations,
            cfg.out.display()
        )));
    }
    if let Some(f) = &penalized {
        if f.status == FitStatus::MaxIterations {
            return Err(Error::NonConvergence(format!(
                "selected penalized fit did not converge; outputs written to {}",
                cfg.out.display()
            )));
        }
    }
    Ok(FitArtifacts {
        design,
        response,
        mle,
        mle_graph,
        path,
        penalized,
        penalized_graph,
        manifest,
    })
}

/// Human-readable summary of a finished fit.
pub fn fit_summary(art: &FitArtifacts) -> String {
    let mut s = String::new();
    let m = &art.manifest;
    let _ = writeln!(
        s,
        "{} model: {} nodes, {} blocks, {} dyads, {} columns ({} by the n + p(p-1)/2 / dim(beta) + p(p+1)/2 convention)",
        m.family, m.node_count, m.block_count, m.dyad_count, m.design_columns, m.parameter_count_convention
    );
    let _ = writeln!(s, "{}", coefficient_table(&art.mle, art.penalized.as_ref()));
    let pairs = m.block_count * (m.block_count + 1) / 2;
    let show = |name: &str, ss: SignSummary| {
        format!(
            "{name}: {} positive, {} zero, {} negative over {pairs} block pairs",
            ss.positive, ss.zero, ss.negative
        )
    };
    let _ = writeln!(s, "{}", show("maximum likelihood", art.mle_graph.sign_summary));
    if let Some(g) = &art.penalized_graph {
        let _ = writeln!(s, "{}", show("adaptive lasso", g.sign_summary));
    }
    if let Some(l) = m.selected_lambda {
        let _ = writeln!(s, "selected lambda: {l:e} (lambda_max {:e})", m.lambda_max.unwrap_or(0.0));
    }
    s
}

fn coefficient_table(a: &FitResult, b: Option<&FitResult>) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<40} {:>14} {:>14}",
        "coefficient",
        "ML estimate",
        if b.is_some() { "penalized" } else { "" }
    );
    for (k, c) in a.coefficients.iter().enumerate() {
        if !matches!(c.group, ColumnGroup::Intercept | ColumnGroup::Covariate) {
            continue;
        }
        let other = b
            .map(|f| format!("{:>14.6}", f.coefficients[k].value))
            .unwrap_or_default();
        let _ = writeln!(s, "{:<40} {:>14.6} {other}", c.name, c.value);
    }
    s
}

/// Settings for `simulate` when no full generator spec is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub n: usize,
    pub p: usize,
    pub family: Family,
    #[serde(default)]
    pub fraction_zero: f64,
    pub magnitude: f64,
    /// Target density (Bernoulli) or mean count (Poisson) used to set the intercept.
    pub target_mean: f64,
    /// Standard deviation of node effects (Bernoulli) or block effects (Poisson).
    #[serde(default)]
    pub effect_sd: f64,
    pub seed: u64,
}

impl SimulateConfig {
    pub fn to_spec(&self) -> Result<GeneratorSpec> {
        let phi = make_sparse_phi(self.p, self.fraction_zero, self.magnitude, self.seed)?;
        let (node_effects, block_effects) = match self.family {
            Family::BernoulliLogit => (
                (self.effect_sd > 0.0)
                    .then(|| centered_normal_effects(self.n, self.effect_sd, self.seed.wrapping_add(1)))
                    .transpose()?,
                None,
            ),
            Family::PoissonLog => (
                None,
                (self.effect_sd > 0.0 && self.p > 1)
                    .then(|| centered_normal_effects(self.p, self.effect_sd, self.seed.wrapping_add(1)))
                    .transpose()?,
            ),
        };
        let mut spec = GeneratorSpec {
            n: self.n,
            p: self.p,
            block_sizes: None,
            family: self.family,
            intercept: 0.0,
            node_effects,
            block_effects,
            phi,
            attributes: vec![],
            covariates: vec![],
            seed: self.seed,
        };
        spec.intercept = calibrate_intercept(&spec, self.target_mean)?;
        Ok(spec)
    }
}

/// Samples a network and writes it with a ready-to-use fit config into `out`.
pub fn cmd_simulate(spec: &GeneratorSpec, out: &Path) -> Result<RunConfig> {
    let data = sample_graph(spec)?;
    data.write(spec, out)?;
    let covariates: Vec<CovariateSpec> = spec.covariates.iter().map(|c| c.spec.clone()).collect();
    let model = match (spec.family, spec.node_effects.is_some(), covariates.is_empty()) {
        (Family::BernoulliLogit, _, true) => ModelPreset::Eq1,
        (Family::PoissonLog, false, _) => ModelPreset::Eq2,
        _ => ModelPreset::Custom,
    };
    let cfg = RunConfig {
        edges: PathBuf::from("edges.csv"),
        attributes: Some(PathBuf::from("nodes.csv")),
        header: true,
        mode: None,
        partition: PartitionConfig {
            keys: vec![BLOCK_ATTRIBUTE.to_string()],
            ..PartitionConfig::default()
        },
        model,
        family: (model == ModelPreset::Custom).then_some(spec.family),
        node_effects: (model == ModelPreset::Custom).then_some(spec.node_effects.is_some()),
        block_effects: (model == ModelPreset::Custom).then_some(spec.block_effects.is_some()),
        covariates,
        standardize: vec![],
        penalty: PenaltyConfig::default(),
        threshold: None,
        format: ExportFormat::Dot,
        styling: Styling::new(),
        include_negative: false,
        dump_design: false,
        out: PathBuf::from("fit"),
    };
    let path = out.join("config.json");
    write_text(&path, &serde_json::to_string_pretty(&cfg)?)?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientDelta {
    pub name: String,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SignChanges {
    pub to_zero: usize,
    pub from_zero: usize,
    pub flipped: usize,
    pub unchanged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    /// Intercept, covariate and block main-effect rows.
    pub table: Vec<CoefficientDelta>,
    pub max_abs_delta: f64,
    pub sign_a: SignSummary,
    pub sign_b: SignSummary,
    pub sign_changes: SignChanges,
    pub edges_only_in_a: Vec<(String, String)>,
    pub edges_only_in_b: Vec<(String, String)>,
}

impl CompareReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<40} {:>14} {:>14} {:>14}", "coefficient", "fit A", "fit B", "B - A");
        for row in &self.table {
            let _ = writeln!(s, "{:<40} {:>14.6} {:>14.6} {:>14.6}", row.name, row.a, row.b, row.delta);
        }
        let _ = writeln!(s, "max |delta| over all coefficients: {:e}", self.max_abs_delta);
        let line = |ss: SignSummary| format!("{} positive / {} zero / {} negative", ss.positive, ss.zero, ss.negative);
        let _ = writeln!(s, "signs A: {}", line(self.sign_a));
        let _ = writeln!(s, "signs B: {}", line(self.sign_b));
        let _ = writeln!(
            s,
            "sign changes A -> B: {} to zero, {} from zero, {} flipped, {} unchanged",
            self.sign_changes.to_zero, self.sign_changes.from_zero, self.sign_changes.flipped, self.sign_changes.unchanged
        );
        let _ = writeln!(s, "reduced-graph edges only in A: {}", self.edges_only_in_a.len());
        for (r, t) in &self.edges_only_in_a {
            let _ = writeln!(s, "  {r} -- {t}");
        }
        let _ = writeln!(s, "reduced-graph edges only in B: {}", self.edges_only_in_b.len());
        for (r, t) in &self.edges_only_in_b {
            let _ = writeln!(s, "  {r} -- {t}");
        }
        s
    }
}

/// Side-by-side comparison of two fits of the same design.
pub fn cmd_compare(a: &FitResult, b: &FitResult) -> Result<CompareReport> {
    if a.names() != b.names() || a.dyad_count != b.dyad_count || a.block_labels != b.block_labels {
        return Err(Error::Validation(
            "fits were made on different designs (columns, dyads or blocks differ)".into(),
        ));
    }
    let table = a
        .coefficients
        .iter()
        .zip(&b.coefficients)
        .filter(|(c, _)| {
            matches!(
                c.group,
                ColumnGroup::Intercept | ColumnGroup::Covariate | ColumnGroup::BlockEffect
            )
        })
        .map(|(x, y)| CoefficientDelta {
            name: x.name.clone(),
            a: x.value,
            b: y.value,
            delta: y.value - x.value,
        })
        .collect();
    let max_abs_delta = a
        .coefficients
        .iter()
        .zip(&b.coefficients)
        .map(|(x, y)| (x.value - y.value).abs())
        .fold(0.0, f64::max);
    let mut changes = SignChanges::default();
    let p = a.block_labels.len();
    for r in 0..p {
        for s in r..p {
            let (x, y) = (a.phi_matrix[r][s], b.phi_matrix[r][s]);
            let (sx, sy) = (sign_class(x), sign_class(y));
            match (sx, sy) {
                _ if sx == sy => changes.unchanged += 1,
                (_, 0) => changes.to_zero += 1,
                (0, _) => changes.from_zero += 1,
                _ => changes.flipped += 1,
            }
        }
    }
    let ga = reduce_fit(a)?;
    let gb = reduce_fit(b)?;
    let label = |(r, s): (usize, usize)| (a.block_labels[r].clone(), a.block_labels[s].clone());
    let ea = ga.edge_set();
    let eb = gb.edge_set();
    Ok(CompareReport {
        table,
        max_abs_delta,
        sign_a: ga.sign_summary,
        sign_b: gb.sign_summary,
        sign_changes: changes,
        edges_only_in_a: ea.iter().filter(|e| !eb.contains(e)).map(|&e| label(e)).collect(),
        edges_only_in_b: eb.iter().filter(|e| !ea.contains(e)).map(|&e| label(e)).collect(),
    })
}

fn sign_class(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Validation report for the inputs of a run.
pub fn cmd_validate(cfg: &RunConfig) -> Result<Diagnostics> {
    Ok(load_inputs(cfg)?.diagnostics)
}
