//! Block-level reduced graphs derived from fitted interaction effects.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{Family, FitResult};
use crate::graph_io::Partition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SignSummary {
    pub positive: usize,
    pub zero: usize,
    pub negative: usize,
}

impl SignSummary {
    /// Counts over the upper triangle (diagonal included) of a symmetric matrix.
    pub fn of(phi: &[Vec<f64>]) -> Self {
        let mut s = SignSummary::default();
        for (r, row) in phi.iter().enumerate() {
            for &v in &row[r..] {
                if v > 0.0 {
                    s.positive += 1;
                } else if v < 0.0 {
                    s.negative += 1;
                } else {
                    s.zero += 1;
                }
            }
        }
        s
    }

    pub fn total(&self) -> usize {
        self.positive + self.zero + self.negative
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReductionRule {
    PositiveInteraction,
    Threshold { t: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedEdge {
    pub r: usize,
    pub s: usize,
    pub value: f64,
}

/// Graph whose nodes are blocks; `values` holds the quantity the rule was applied to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedGraph {
    pub rule: ReductionRule,
    pub blocks: Vec<String>,
    pub edges: Vec<ReducedEdge>,
    pub values: Vec<Vec<f64>>,
    pub sign_summary: SignSummary,
    /// Block pairs without any dyad (threshold rule only).
    #[serde(default)]
    pub flagged_pairs: Vec<(usize, usize)>,
}

impl ReducedGraph {
    pub fn has_edge(&self, r: usize, s: usize) -> bool {
        let (r, s) = (r.min(s), r.max(s));
        self.edges.iter().any(|e| e.r == r && e.s == s)
    }

    pub fn edge_set(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.r, e.s)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Edge `{r, s}` (self-pairs included) exactly when `phi_rs > 0`.
pub fn reduce_positive(phi: &[Vec<f64>], labels: &[String]) -> Result<ReducedGraph> {
    let p = phi.len();
    if labels.len() != p || phi.iter().any(|row| row.len() != p) {
        return Err(Error::InvalidArgument(format!(
            "interaction matrix must be {0}x{0} to match the block labels",
            labels.len()
        )));
    }
    for r in 0..p {
        for s in r + 1..p {
            if phi[r][s] != phi[s][r] {
                return Err(Error::InvalidArgument(format!(
                    "interaction matrix is not symmetric at ({}, {})",
                    labels[r], labels[s]
                )));
            }
        }
        let sum: f64 = phi[r].iter().sum();
        let scale = phi[r].iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        if sum.abs() > 1e-8 * scale {
            return Err(Error::InvalidArgument(format!(
                "row {} of the interaction matrix sums to {sum:e}, not 0",
                labels[r]
            )));
        }
    }
    let mut edges = Vec::new();
    for r in 0..p {
        for s in r..p {
            if phi[r][s] > 0.0 {
                edges.push(ReducedEdge {
                    r,
                    s,
                    value: phi[r][s],
                });
            }
        }
    }
    Ok(ReducedGraph {
        rule: ReductionRule::PositiveInteraction,
        blocks: labels.to_vec(),
        edges,
        values: phi.to_vec(),
        sign_summary: SignSummary::of(phi),
        flagged_pairs: Vec::new(),
    })
}

/// Reduced graph of a fit's reconstructed interaction matrix.
pub fn reduce_fit(fit: &FitResult) -> Result<ReducedGraph> {
    reduce_positive(&fit.phi_matrix, &fit.block_labels)
}

/// Mean fitted probability of every block pair (`None` when the pair has no dyad).
pub fn block_mean_probabilities(fit: &FitResult, partition: &Partition) -> Result<Vec<Vec<Option<f64>>>> {
    let nodes: Vec<&str> = partition.nodes().collect();
    let n = nodes.len();
    if fit.fitted_values.len() != n * n.saturating_sub(1) / 2 {
        return Err(Error::InvalidArgument(format!(
            "fit has {} fitted values but the partition covers {n} nodes",
            fit.fitted_values.len()
        )));
    }
    if partition.block_labels() != fit.block_labels.as_slice() {
        return Err(Error::InvalidArgument(
            "partition blocks differ from the fitted model's blocks".into(),
        ));
    }
    let blocks: Vec<usize> = nodes.iter().map(|id| partition.block_of(id).unwrap()).collect();
    let p = partition.block_count();
    let mut sum = vec![vec![0.0; p]; p];
    let mut count = vec![vec![0usize; p]; p];
    let mut d = 0;
    for i in 0..n {
        for j in i + 1..n {
            let (r, s) = (blocks[i].min(blocks[j]), blocks[i].max(blocks[j]));
            sum[r][s] += fit.fitted_values[d];
            count[r][s] += 1;
            d += 1;
        }
    }
    let mut out = vec![vec![None; p]; p];
    for r in 0..p {
        for s in r..p {
            if count[r][s] > 0 {
                let v = sum[r][s] / count[r][s] as f64;
                out[r][s] = Some(v);
                out[s][r] = Some(v);
            }
        }
    }
    Ok(out)
}

/// Edge `{r, s}` when the block-pair mean fitted probability exceeds `t`.
pub fn reduce_threshold(fit: &FitResult, partition: &Partition, t: f64) -> Result<ReducedGraph> {
    if fit.family != Family::BernoulliLogit {
        return Err(Error::InvalidArgument(
            "the threshold rule needs interaction probabilities and does not apply to edge-valued (Poisson) fits"
                .into(),
        ));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("threshold must lie in [0, 1], got {t}")));
    }
    let probs = block_mean_probabilities(fit, partition)?;
    let p = probs.len();
    let mut edges = Vec::new();
    let mut flagged = Vec::new();
    let mut values = vec![vec![0.0; p]; p];
    for r in 0..p {
        for s in r..p {
            match probs[r][s] {
                Some(v) => {
                    values[r][s] = v;
                    values[s][r] = v;
                    if v > t {
                        edges.push(ReducedEdge { r, s, value: v });
                    }
                }
                None => flagged.push((r, s)),
            }
        }
    }
    Ok(ReducedGraph {
        rule: ReductionRule::Threshold { t },
        blocks: fit.block_labels.clone(),
        edges,
        values,
        sign_summary: SignSummary::of(&fit.phi_matrix),
        flagged_pairs: flagged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Dot,
    Graphml,
    Json,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Dot => "dot",
            ExportFormat::Graphml => "graphml",
            ExportFormat::Json => "json",
        }
    }
}

/// Node attributes accepted in styling maps.
pub const STYLE_ATTRIBUTES: [&str; 8] = [
    "color", "fillcolor", "fontcolor", "shape", "style", "label", "width", "height",
];

/// Per-block visual attributes (`block label -> attribute -> value`).
pub type Styling = BTreeMap<String, BTreeMap<String, String>>;

#[derive(Debug, Clone, Default)]
pub struct ExportOptions {
    pub styling: Styling,
    /// Also draw negative relations (dashed); off by default.
    pub include_negative: bool,
}

fn known_styles<'a>(rg: &ReducedGraph, styling: &'a Styling) -> BTreeMap<&'a str, Vec<(&'a str, &'a str)>> {
    let mut out = BTreeMap::new();
    for (block, attrs) in styling {
        if !rg.blocks.contains(block) {
            log::warn!("styling refers to unknown block `{block}`; ignored");
            continue;
        }
        let mut keep = Vec::new();
        for (k, v) in attrs {
            if STYLE_ATTRIBUTES.contains(&k.as_str()) {
                keep.push((k.as_str(), v.as_str()));
            } else {
                log::warn!("unknown styling attribute `{k}` for block `{block}`; using default style");
            }
        }
        out.insert(block.as_str(), keep);
    }
    out
}

fn negative_pairs(rg: &ReducedGraph) -> Vec<(usize, usize, f64)> {
    let p = rg.blocks.len();
    let mut out = Vec::new();
    if rg.rule != ReductionRule::PositiveInteraction {
        return out;
    }
    for r in 0..p {
        for s in r..p {
            if rg.values[r][s] < 0.0 {
                out.push((r, s, rg.values[r][s]));
            }
        }
    }
    out
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&apos;")
}

/// Renders the reduced graph in the requested format.
pub fn export(rg: &ReducedGraph, format: ExportFormat, options: &ExportOptions) -> Result<String> {
    match format {
        ExportFormat::Json => rg.to_json(),
        ExportFormat::Dot => Ok(export_dot(rg, options)),
        ExportFormat::Graphml => Ok(export_graphml(rg, options)),
    }
}

pub fn export_to_file(
    rg: &ReducedGraph,
    format: ExportFormat,
    options: &ExportOptions,
    path: &Path,
) -> Result<()> {
    let text = export(rg, format, options)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn export_dot(rg: &ReducedGraph, options: &ExportOptions) -> String {
    let styles = known_styles(rg, &options.styling);
    let mut out = String::from("graph reduced {\n  node [shape=circle];\n");
    for b in &rg.blocks {
        let mut attrs = Vec::new();
        if let Some(list) = styles.get(b.as_str()) {
            for (k, v) in list {
                attrs.push(format!("{k}={}", dot_id(v)));
            }
        }
        if attrs.is_empty() {
            let _ = writeln!(out, "  {};", dot_id(b));
        } else {
            let _ = writeln!(out, "  {} [{}];", dot_id(b), attrs.join(", "));
        }
    }
    for e in &rg.edges {
        let _ = writeln!(
            out,
            "  {} -- {} [value=\"{:?}\"];",
            dot_id(&rg.blocks[e.r]),
            dot_id(&rg.blocks[e.s]),
            e.value
        );
    }
    if options.include_negative {
        for (r, s, v) in negative_pairs(rg) {
            let _ = writeln!(
                out,
                "  {} -- {} [value=\"{v:?}\", style=dashed, color=gray];",
                dot_id(&rg.blocks[r]),
                dot_id(&rg.blocks[s])
            );
        }
    }
    out.push_str("}\n");
    out
}

fn export_graphml(rg: &ReducedGraph, options: &ExportOptions) -> String {
    let styles = known_styles(rg, &options.styling);
    let mut out = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\" \
         xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\" \
         xsi:schemaLocation=\"http://graphml.graphdrawing.org/xmlns http://graphml.graphdrawing.org/xmlns/1.0/graphml.xsd\">\n",
    );
    for attr in STYLE_ATTRIBUTES {
        let _ = writeln!(
            out,
            "  <key id=\"{attr}\" for=\"node\" attr.name=\"{attr}\" attr.type=\"string\"/>"
        );
    }
    out.push_str("  <key id=\"value\" for=\"edge\" attr.name=\"value\" attr.type=\"double\"/>\n");
    out.push_str("  <key id=\"sign\" for=\"edge\" attr.name=\"sign\" attr.type=\"string\"/>\n");
    out.push_str("  <graph id=\"reduced\" edgedefault=\"undirected\">\n");
    for (k, b) in rg.blocks.iter().enumerate() {
        let data: Vec<String> = styles
            .get(b.as_str())
            .map(|list| {
                list.iter()
                    .map(|(a, v)| format!("      <data key=\"{a}\">{}</data>", xml_escape(v)))
                    .collect()
            })
            .unwrap_or_default();
        if data.is_empty() && !styles.contains_key(b.as_str()) {
            let _ = writeln!(
                out,
                "    <node id=\"b{k}\">\n      <data key=\"label\">{}</data>\n    </node>",
                xml_escape(b)
            );
        } else {
            let _ = writeln!(out, "    <node id=\"b{k}\">");
            if !data.iter().any(|d| d.contains("key=\"label\"")) {
                let _ = writeln!(out, "      <data key=\"label\">{}</data>", xml_escape(b));
            }
            for d in data {
                let _ = writeln!(out, "{d}");
            }
            out.push_str("    </node>\n");
        }
    }
    let mut k = 0;
    for e in &rg.edges {
        let _ = writeln!(
            out,
            "    <edge id=\"e{k}\" source=\"b{}\" target=\"b{}\">\n      <data key=\"value\">{:?}</data>\n      <data key=\"sign\">positive</data>\n    </edge>",
            e.r, e.s, e.value
        );
        k += 1;
    }
    if options.include_negative {
        for (r, s, v) in negative_pairs(rg) {
            let _ = writeln!(
                out,
                "    <edge id=\"e{k}\" source=\"b{r}\" target=\"b{s}\">\n      <data key=\"value\">{v:?}</data>\n      <data key=\"sign\">negative</data>\n    </edge>"
            );
            k += 1;
        }
    }
    out.push_str("  </graph>\n</graphml>\n");
    out
}
