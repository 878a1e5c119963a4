//! Networks, node attributes and block partitions, plus their text-file readers.
//!
//! Node ids are opaque strings. Internally every node gets a dense index given by the
//! lexicographic order of its id, so every structure built from the same node set agrees
//! on the index of a node regardless of the order rows appeared in a file.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeMode {
    Binary,
    Weighted,
}

/// Undirected graph without self-loops stored as a dense symmetric count matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    node_ids: Vec<String>,
    index: HashMap<String, usize>,
    weights: Vec<u32>,
    mode: EdgeMode,
}

impl Graph {
    /// Creates an edgeless graph over the given ids (duplicates collapse, order is normalized).
    pub fn empty(ids: impl IntoIterator<Item = String>, mode: EdgeMode) -> Result<Self> {
        let ids: BTreeSet<String> = ids.into_iter().collect();
        if ids.is_empty() {
            return Err(Error::Validation("graph has no nodes".into()));
        }
        let node_ids: Vec<String> = ids.into_iter().collect();
        let index = node_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let n = node_ids.len();
        Ok(Graph {
            node_ids,
            index,
            weights: vec![0; n * n],
            mode,
        })
    }

    pub fn from_edges<S: AsRef<str>>(
        ids: impl IntoIterator<Item = String>,
        edges: &[(S, S, u32)],
        mode: EdgeMode,
    ) -> Result<Self> {
        let mut all: BTreeSet<String> = ids.into_iter().collect();
        for (a, b, _) in edges {
            all.insert(a.as_ref().to_string());
            all.insert(b.as_ref().to_string());
        }
        let mut g = Graph::empty(all, mode)?;
        for (a, b, w) in edges {
            let i = g.index[a.as_ref()];
            let j = g.index[b.as_ref()];
            g.add(i, j, *w)?;
        }
        Ok(g)
    }

    fn add(&mut self, i: usize, j: usize, w: u32) -> Result<()> {
        if i == j {
            return Err(Error::Validation(format!(
                "self-loop on node {}",
                self.node_ids[i]
            )));
        }
        let n = self.node_count();
        let cur = self.weights[i * n + j];
        let next = match self.mode {
            EdgeMode::Binary => u32::from(cur > 0 || w > 0),
            EdgeMode::Weighted => cur
                .checked_add(w)
                .ok_or_else(|| Error::Validation("edge weight overflow".into()))?,
        };
        self.weights[i * n + j] = next;
        self.weights[j * n + i] = next;
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn mode(&self) -> EdgeMode {
        self.mode
    }

    pub fn weight(&self, i: usize, j: usize) -> u32 {
        self.weights[i * self.node_count() + j]
    }

    pub fn dyad_count(&self) -> usize {
        let n = self.node_count();
        n * (n - 1) / 2
    }

    /// Number of dyads with a nonzero weight.
    pub fn edge_count(&self) -> usize {
        let n = self.node_count();
        (0..n)
            .map(|i| (i + 1..n).filter(|&j| self.weight(i, j) > 0).count())
            .sum()
    }

    pub fn degree(&self, i: usize) -> usize {
        let n = self.node_count();
        (0..n).filter(|&j| self.weight(i, j) > 0).count()
    }

    /// Edge list `(source, target, weight)` with `source < target` by id order.
    pub fn edges(&self) -> Vec<(&str, &str, u32)> {
        let n = self.node_count();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let w = self.weight(i, j);
                if w > 0 {
                    out.push((self.node_ids[i].as_str(), self.node_ids[j].as_str(), w));
                }
            }
        }
        out
    }

    /// Checks the structural invariants; graphs built through this module always pass.
    pub fn check_invariants(&self) -> Vec<String> {
        let n = self.node_count();
        let mut problems = Vec::new();
        for i in 0..n {
            if self.weight(i, i) != 0 {
                problems.push(format!("self-loop on node {}", self.node_ids[i]));
            }
            for j in i + 1..n {
                let w = self.weight(i, j);
                if w != self.weight(j, i) {
                    problems.push(format!(
                        "asymmetric weight between {} and {}",
                        self.node_ids[i], self.node_ids[j]
                    ));
                }
                if self.mode == EdgeMode::Binary && w > 1 {
                    problems.push(format!(
                        "non-binary weight {w} between {} and {}",
                        self.node_ids[i], self.node_ids[j]
                    ));
                }
            }
        }
        problems
    }

    /// Writes the graph in the edge-list format read by [`load_edge_list`] (with header).
    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        match self.mode {
            EdgeMode::Binary => text.push_str("source,target\n"),
            EdgeMode::Weighted => text.push_str("source,target,weight\n"),
        }
        for (a, b, w) in self.edges() {
            match self.mode {
                EdgeMode::Binary => text.push_str(&format!("{a},{b}\n")),
                EdgeMode::Weighted => text.push_str(&format!("{a},{b},{w}\n")),
            }
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Default)]
pub struct EdgeListOptions {
    pub has_header: bool,
    /// Ids from a companion node file; nodes without edges are kept.
    pub extra_nodes: Vec<String>,
}

fn sniff_delimiter(text: &str) -> u8 {
    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .unwrap_or("");
    if first.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

fn reader_for(text: &str, has_header: bool) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .delimiter(sniff_delimiter(text))
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads a comma- or tab-delimited edge list with columns `source,target[,weight]`.
///
/// Repeated dyads accumulate: weights are summed in weighted mode and or-ed in binary mode.
pub fn load_edge_list(path: &Path, mode: EdgeMode, options: &EdgeListOptions) -> Result<Graph> {
    let text = read_text(path)?;
    parse_edge_list(&text, path, mode, options)
}

pub fn parse_edge_list(
    text: &str,
    path: &Path,
    mode: EdgeMode,
    options: &EdgeListOptions,
) -> Result<Graph> {
    let expected = match mode {
        EdgeMode::Binary => 2,
        EdgeMode::Weighted => 3,
    };
    let mut rdr = reader_for(text, options.has_header);
    let mut rows: Vec<(String, String, u32)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: format!("unparseable row: {e}"),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != expected {
            return Err(parse_err(format!(
                "unparseable row: expected {expected} columns for {} mode, found {}",
                match mode {
                    EdgeMode::Binary => "binary",
                    EdgeMode::Weighted => "weighted",
                },
                rec.len()
            )));
        }
        let (a, b) = (&rec[0], &rec[1]);
        if a.is_empty() || b.is_empty() {
            return Err(parse_err("unparseable row: empty node id".into()));
        }
        if a == b {
            return Err(parse_err(format!(
                "self-loop: row `{}` connects node {a} to itself",
                rec.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let w = if mode == EdgeMode::Weighted {
            let raw = &rec[2];
            match raw.parse::<i64>() {
                Ok(v) if v < 0 => return Err(parse_err(format!("negative weight {v}"))),
                Ok(v) => u32::try_from(v).map_err(|_| parse_err(format!("weight {v} too large")))?,
                Err(_) => return Err(parse_err(format!("non-integer weight `{raw}`"))),
            }
        } else {
            1
        };
        rows.push((a.to_string(), b.to_string(), w));
    }
    Graph::from_edges(options.extra_nodes.iter().cloned(), &rows, mode)
}

/// Per-node attribute values; missing values are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeTable {
    names: Vec<String>,
    rows: BTreeMap<String, Vec<Option<String>>>,
}

fn is_missing(v: &str) -> bool {
    v.is_empty() || v.eq_ignore_ascii_case("na")
}

impl AttributeTable {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let distinct: BTreeSet<&String> = names.iter().collect();
        if distinct.len() != names.len() {
            return Err(Error::Validation("attribute names must be unique".into()));
        }
        Ok(AttributeTable {
            names,
            rows: BTreeMap::new(),
        })
    }

    pub fn insert(&mut self, node: &str, values: Vec<Option<String>>) -> Result<()> {
        if values.len() != self.names.len() {
            return Err(Error::Validation(format!(
                "node {node}: expected {} attribute values, found {}",
                self.names.len(),
                values.len()
            )));
        }
        if self.rows.insert(node.to_string(), values).is_some() {
            return Err(Error::Validation(format!("duplicate attribute row for node {node}")));
        }
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn has_attribute(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }

    pub fn contains_node(&self, node: &str) -> bool {
        self.rows.contains_key(node)
    }

    pub fn get(&self, node: &str, attr: &str) -> Option<&str> {
        let col = self.names.iter().position(|n| n == attr)?;
        self.rows.get(node)?.get(col)?.as_deref()
    }

    /// Value of `attr` for `node`, or an error naming both when it is missing.
    pub fn require(&self, node: &str, attr: &str) -> Result<&str> {
        if !self.has_attribute(attr) {
            return Err(Error::Validation(format!("unknown attribute `{attr}`")));
        }
        self.get(node, attr).ok_or_else(|| {
            Error::Validation(format!("node {node} has no value for attribute `{attr}`"))
        })
    }

    pub fn require_numeric(&self, node: &str, attr: &str) -> Result<f64> {
        let raw = self.require(node, attr)?;
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| {
                Error::Validation(format!(
                    "node {node}: attribute `{attr}` value `{raw}` is not a finite number"
                ))
            })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = String::from("node_id");
        for n in &self.names {
            text.push(',');
            text.push_str(n);
        }
        text.push('\n');
        for (node, vals) in &self.rows {
            text.push_str(node);
            for v in vals {
                text.push(',');
                text.push_str(v.as_deref().unwrap_or(""));
            }
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Reads a delimited attribute table with a header row; the first column holds node ids.
pub fn load_attributes(path: &Path) -> Result<AttributeTable> {
    let text = read_text(path)?;
    parse_attributes(&text, path)
}

pub fn parse_attributes(text: &str, path: &Path) -> Result<AttributeTable> {
    let mut rdr = reader_for(text, true);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("unreadable header: {e}"),
        })?
        .clone();
    if header.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "header must start with a node id column".into(),
        });
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut table = AttributeTable::new(names).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: format!("unparseable row: {e}"),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != header.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected {} columns, found {}", header.len(), rec.len()),
            });
        }
        let values = rec
            .iter()
            .skip(1)
            .map(|v| (!is_missing(v)).then(|| v.to_string()))
            .collect();
        table.insert(&rec[0], values).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
    }
    Ok(table)
}

/// Assignment of nodes to `p` labelled blocks. Blocks are indexed by sorted label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    block_labels: Vec<String>,
    block_of: BTreeMap<String, usize>,
}

impl Partition {
    /// Builds a partition from `node -> block label`.
    pub fn from_labels(assignment: BTreeMap<String, String>) -> Result<Self> {
        if assignment.is_empty() {
            return Err(Error::Validation("partition is empty".into()));
        }
        let labels: BTreeSet<&String> = assignment.values().collect();
        let block_labels: Vec<String> = labels.into_iter().cloned().collect();
        let lookup: HashMap<&str, usize> = block_labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let block_of = assignment
            .iter()
            .map(|(node, label)| (node.clone(), lookup[label.as_str()]))
            .collect();
        Ok(Partition {
            block_labels,
            block_of,
        })
    }

    pub fn block_count(&self) -> usize {
        self.block_labels.len()
    }

    pub fn block_labels(&self) -> &[String] {
        &self.block_labels
    }

    pub fn block_of(&self, node: &str) -> Option<usize> {
        self.block_of.get(node).copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.block_of.keys().map(String::as_str)
    }

    pub fn label_of(&self, node: &str) -> Option<&str> {
        self.block_of(node).map(|b| self.block_labels[b].as_str())
    }

    /// Block index for every node of `graph`, in the graph's dense index order.
    pub fn blocks_for(&self, graph: &Graph) -> Result<Vec<usize>> {
        graph
            .node_ids()
            .iter()
            .map(|id| {
                self.block_of(id).ok_or_else(|| {
                    Error::Validation(format!("node {id} is not assigned to any block"))
                })
            })
            .collect()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.block_count()];
        for &b in self.block_of.values() {
            sizes[b] += 1;
        }
        sizes
    }

    /// Same partition with blocks renamed through `rename`; block order follows the new labels.
    pub fn relabel(&self, rename: impl Fn(&str) -> String) -> Result<Self> {
        let assignment = self
            .block_of
            .iter()
            .map(|(node, &b)| (node.clone(), rename(&self.block_labels[b])))
            .collect();
        Partition::from_labels(assignment)
    }
}

/// Forms one block per observed combination of `keys`, plus one per override label.
///
/// Block labels join the attribute values with `separator`. Nodes listed in
/// `overrides` take the given label and need not have values for the keys.
pub fn partition_from_attributes(
    attrs: &AttributeTable,
    keys: &[String],
    overrides: &BTreeMap<String, String>,
    separator: &str,
) -> Result<Partition> {
    for k in keys {
        if !attrs.has_attribute(k) {
            return Err(Error::Validation(format!("unknown partition attribute `{k}`")));
        }
    }
    for node in overrides.keys() {
        if !attrs.contains_node(node) {
            return Err(Error::Validation(format!(
                "override names node {node} which has no attribute row"
            )));
        }
    }
    let mut assignment = BTreeMap::new();
    for node in attrs.node_ids() {
        let label = if let Some(label) = overrides.get(node) {
            label.clone()
        } else {
            if keys.is_empty() {
                return Err(Error::Validation(format!(
                    "node {node} has no override and no partition keys were given"
                )));
            }
            let parts = keys
                .iter()
                .map(|k| attrs.require(node, k))
                .collect::<Result<Vec<_>>>()?;
            parts.join(separator)
        };
        assignment.insert(node.to_string(), label);
    }
    Partition::from_labels(assignment)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockPairFlag {
    pub r: String,
    pub s: String,
    pub dyads: usize,
}

/// Report produced by [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub pass: bool,
    pub node_count: usize,
    pub block_count: usize,
    pub edge_count: usize,
    pub density: f64,
    pub block_sizes: BTreeMap<String, usize>,
    /// Block pairs without any dyad (e.g. the within-pair of a singleton block).
    pub empty_block_pairs: Vec<BlockPairFlag>,
    /// Block pairs that have dyads but no observed edge; their interaction estimate diverges.
    pub sparse_block_pairs: Vec<BlockPairFlag>,
    pub problems: Vec<String>,
}

impl Diagnostics {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "status: {}", if self.pass { "PASS" } else { "FAIL" })?;
        writeln!(f, "nodes: {}", self.node_count)?;
        writeln!(f, "blocks: {}", self.block_count)?;
        writeln!(f, "edges: {}", self.edge_count)?;
        writeln!(f, "density: {:.6}", self.density)?;
        writeln!(f, "block sizes:")?;
        for (label, size) in &self.block_sizes {
            writeln!(f, "  {label}: {size}")?;
        }
        writeln!(f, "empty block pairs: {}", self.empty_block_pairs.len())?;
        for p in &self.empty_block_pairs {
            writeln!(f, "  ({}, {})", p.r, p.s)?;
        }
        writeln!(f, "data-sparse block pairs (no edges): {}", self.sparse_block_pairs.len())?;
        for p in &self.sparse_block_pairs {
            writeln!(f, "  ({}, {}) over {} dyads", p.r, p.s, p.dyads)?;
        }
        for p in &self.problems {
            writeln!(f, "problem: {p}")?;
        }
        Ok(())
    }
}

/// Checks a graph and partition against each other and summarizes block-level sparsity.
pub fn validate(graph: &Graph, partition: &Partition) -> Diagnostics {
    let mut problems = graph.check_invariants();
    for node in partition.nodes() {
        if graph.index_of(node).is_none() {
            problems.push(format!("partition references unknown node {node}"));
        }
    }
    let p = partition.block_count();
    let mut blocks = Vec::with_capacity(graph.node_count());
    for id in graph.node_ids() {
        match partition.block_of(id) {
            Some(b) => blocks.push(Some(b)),
            None => {
                problems.push(format!("node {id} is not assigned to any block"));
                blocks.push(None);
            }
        }
    }
    let mut sizes = vec![0usize; p];
    for b in blocks.iter().flatten() {
        sizes[*b] += 1;
    }
    for (b, &size) in sizes.iter().enumerate() {
        if size == 0 {
            problems.push(format!(
                "block {} has no node in the graph",
                partition.block_labels()[b]
            ));
        }
    }

    let n = graph.node_count();
    let mut pair_dyads = vec![0usize; p * p];
    let mut pair_edges = vec![0usize; p * p];
    for i in 0..n {
        for j in i + 1..n {
            if let (Some(r), Some(s)) = (blocks[i], blocks[j]) {
                let (r, s) = (r.min(s), r.max(s));
                pair_dyads[r * p + s] += 1;
                if graph.weight(i, j) > 0 {
                    pair_edges[r * p + s] += 1;
                }
            }
        }
    }
    let labels = partition.block_labels();
    let mut empty = Vec::new();
    let mut sparse = Vec::new();
    for r in 0..p {
        for s in r..p {
            let flag = BlockPairFlag {
                r: labels[r].clone(),
                s: labels[s].clone(),
                dyads: pair_dyads[r * p + s],
            };
            if pair_dyads[r * p + s] == 0 {
                empty.push(flag);
            } else if pair_edges[r * p + s] == 0 {
                sparse.push(flag);
            }
        }
    }

    let edge_count = graph.edge_count();
    let dyads = graph.dyad_count();
    Diagnostics {
        pass: problems.is_empty(),
        node_count: n,
        block_count: p,
        edge_count,
        density: if dyads > 0 {
            edge_count as f64 / dyads as f64
        } else {
            0.0
        },
        block_sizes: labels.iter().cloned().zip(sizes).collect(),
        empty_block_pairs: empty,
        sparse_block_pairs: sparse,
        problems,
    }
}
