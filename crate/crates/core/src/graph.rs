//! Graph and dataset data model: simple undirected graphs, node measures,
//! JSONL ingestion and stratified splitting.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::scalar::Scalar;

/// Finite simple undirected graph with an optional class label.
///
/// Edges are stored once each as `(u, v)` with `u < v`, sorted
/// lexicographically. There are no self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    id: String,
    node_count: usize,
    edges: Vec<(usize, usize)>,
    label: Option<u32>,
}

impl Graph {
    /// Builds a graph, canonicalizing every edge to `(min, max)` order.
    pub fn new(
        id: impl Into<String>,
        node_count: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        label: Option<u32>,
    ) -> Result<Self> {
        let id = id.into();
        if node_count == 0 {
            return Err(Error::validation(format!("graph {id:?}: node count must be >= 1")));
        }
        let mut canonical = Vec::new();
        for (u, v) in edges {
            if u >= node_count || v >= node_count {
                return Err(Error::validation(format!(
                    "graph {id:?}: edge ({u},{v}) has an endpoint >= n = {node_count}"
                )));
            }
            if u == v {
                return Err(Error::validation(format!("graph {id:?}: self-loop on node {u}")));
            }
            canonical.push((u.min(v), u.max(v)));
        }
        canonical.sort_unstable();
        if let Some(w) = canonical.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::validation(format!(
                "graph {id:?}: duplicate edge ({},{})",
                w[0].0, w[0].1
            )));
        }
        Ok(Self {
            id,
            node_count,
            edges: canonical,
            label,
        })
    }

    /// Builds a graph from the upper triangle of a 0/1 adjacency matrix.
    pub fn from_adjacency<T: Scalar>(
        id: impl Into<String>,
        adjacency: &Array2<T>,
        label: Option<u32>,
    ) -> Result<Self> {
        let n = adjacency.nrows();
        let half = T::of(0.5);
        let edges = (0..n)
            .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
            .filter(|&(u, v)| adjacency[[u, v]] > half);
        Self::new(id, n, edges.collect::<Vec<_>>(), label)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn label(&self) -> Option<u32> {
        self.label
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_label(mut self, label: Option<u32>) -> Self {
        self.label = label;
        self
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.node_count];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Edge density `|E| / (N choose 2)`; zero for single-node graphs.
    pub fn density(&self) -> f64 {
        let n = self.node_count as f64;
        if self.node_count < 2 {
            0.0
        } else {
            self.edges.len() as f64 / (n * (n - 1.0) / 2.0)
        }
    }

    /// Symmetric 0/1 adjacency matrix with a zero diagonal.
    pub fn adjacency<T: Scalar>(&self) -> Array2<T> {
        let mut a = Array2::zeros((self.node_count, self.node_count));
        for &(u, v) in &self.edges {
            a[[u, v]] = T::one();
            a[[v, u]] = T::one();
        }
        a
    }

    /// Neighbor lists in ascending order.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }
}

/// Relabels nodes: node `i` becomes `permutation[i]`.
pub fn permute_graph(graph: &Graph, permutation: &[usize]) -> Result<Graph> {
    let n = graph.node_count();
    if permutation.len() != n {
        return Err(Error::validation(format!(
            "permutation has length {} but graph has {n} nodes",
            permutation.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in permutation {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::validation("permutation is not a bijection"));
        }
    }
    let edges = graph
        .edges()
        .iter()
        .map(|&(u, v)| (permutation[u], permutation[v]));
    Graph::new(graph.id.clone(), n, edges.collect::<Vec<_>>(), graph.label)
}

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector<T> {
    weights: Array1<T>,
}

impl<T: Scalar> ProbabilityVector<T> {
    pub fn new(weights: impl Into<Array1<T>>) -> Result<Self> {
        let weights = weights.into();
        if weights.is_empty() {
            return Err(Error::validation("probability vector must be non-empty"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(Error::validation("probability weights must be finite and >= 0"));
        }
        let total: T = weights.sum();
        if (total - T::one()).abs() > Self::sum_tolerance(weights.len()) {
            return Err(Error::validation(format!(
                "probability weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { weights })
    }

    /// Normalizes nonnegative masses to sum to one.
    pub fn from_masses(masses: impl Into<Array1<T>>) -> Result<Self> {
        let masses = masses.into();
        let total: T = masses.sum();
        if !(total > T::zero()) || !total.is_finite() {
            return Err(Error::validation("masses must have a positive finite total"));
        }
        Self::new(masses.mapv(|m| m / total))
    }

    pub fn uniform(len: usize) -> Self {
        assert!(len > 0, "uniform measure needs at least one atom");
        Self {
            weights: Array1::from_elem(len, T::one() / T::of_usize(len)),
        }
    }

    pub fn weights(&self) -> &Array1<T> {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Allowed deviation of the total from one: `1e-9`, or a few ulps per
    /// entry for low-precision scalars.
    pub fn sum_tolerance(len: usize) -> T {
        T::of(1e-9).max(T::epsilon() * T::of_usize(4 * len.max(1)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NodeMeasurePolicy {
    #[default]
    Degree,
    Uniform,
}

/// Probability measure over the nodes of a graph.
///
/// The degree policy weights node `i` by `deg(i) / 2|E|` and falls back to
/// the uniform measure on edgeless graphs.
pub fn node_measure<T: Scalar>(graph: &Graph, policy: NodeMeasurePolicy) -> ProbabilityVector<T> {
    let n = graph.node_count();
    match policy {
        NodeMeasurePolicy::Degree if graph.edge_count() > 0 => {
            let total = T::of_usize(2 * graph.edge_count());
            let weights: Array1<T> = graph
                .degrees()
                .into_iter()
                .map(|d| T::of_usize(d) / total)
                .collect();
            ProbabilityVector { weights }
        }
        _ => ProbabilityVector::uniform(n),
    }
}

/// Ordered collection of graphs with the sorted set of labels present.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GraphDataset {
    graphs: Vec<Graph>,
    class_labels: Vec<u32>,
}

impl GraphDataset {
    pub fn new(graphs: Vec<Graph>) -> Result<Self> {
        let mut ids = HashSet::with_capacity(graphs.len());
        for g in &graphs {
            if !ids.insert(g.id()) {
                return Err(Error::validation(format!("duplicate graph id {:?}", g.id())));
            }
        }
        let class_labels: BTreeSet<u32> = graphs.iter().filter_map(Graph::label).collect();
        Ok(Self {
            graphs,
            class_labels: class_labels.into_iter().collect(),
        })
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn into_graphs(self) -> Vec<Graph> {
        self.graphs
    }

    pub fn class_labels(&self) -> &[u32] {
        &self.class_labels
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// Graphs carrying `label`, in dataset order.
    pub fn class_members(&self, label: u32) -> Vec<&Graph> {
        self.graphs
            .iter()
            .filter(|g| g.label() == Some(label))
            .collect()
    }

    /// Number of graphs per label, keyed in ascending label order.
    pub fn class_counts(&self) -> BTreeMap<u32, usize> {
        let mut counts = BTreeMap::new();
        for label in self.graphs.iter().filter_map(Graph::label) {
            *counts.entry(label).or_insert(0) += 1;
        }
        counts
    }

    /// Serializes to the canonical JSONL text (one object per line, LF endings).
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for g in &self.graphs {
            let id = serde_json::to_string(g.id()).expect("strings always serialize");
            let label = g
                .label()
                .map_or_else(|| "null".to_string(), |l| l.to_string());
            let _ = write!(out, "{{\"id\":{id},\"label\":{label},\"n\":{},\"edges\":[", g.node_count());
            for (k, (u, v)) in g.edges().iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                let _ = write!(out, "[{u},{v}]");
            }
            out.push_str("]}\n");
        }
        out
    }

    /// Parses the JSONL dataset format. Blank lines are skipped.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut graphs = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: GraphRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            let label = record.label.ok_or_else(|| Error::Parse {
                line: line_no,
                message: "missing field `label`".into(),
            })?;
            let graph = Graph::new(
                record.id,
                record.n,
                record.edges.into_iter().map(|[u, v]| (u, v)).collect::<Vec<_>>(),
                label,
            )
            .map_err(|e| match e {
                Error::Validation(msg) => Error::Validation(format!("line {line_no}: {msg}")),
                other => other,
            })?;
            graphs.push(graph);
        }
        Self::new(graphs)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRecord {
    id: String,
    #[serde(default, deserialize_with = "present")]
    label: Option<Option<u32>>,
    n: usize,
    edges: Vec<[usize; 2]>,
}

// Distinguishes `"label": null` (Some(None)) from a missing key (None).
fn present<'de, D>(deserializer: D) -> std::result::Result<Option<Option<u32>>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    Option::<u32>::deserialize(deserializer).map(Some)
}

/// Dataset file formats understood by [`load_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetFormat {
    #[default]
    Jsonl,
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<GraphDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        DatasetFormat::Jsonl => GraphDataset::from_jsonl(&text),
    }
}

pub fn save_dataset(dataset: &GraphDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, dataset.to_jsonl()).map_err(|e| Error::io(path, e))
}

/// Stratified train/test split.
///
/// Per class (ascending label order) the member indices are shuffled with a
/// single generator seeded from `seed`; the first `round(test_fraction * count)`
/// of them, clamped so each side keeps at least one graph, go to the test set.
/// Both outputs keep the original dataset order.
pub fn split_dataset(
    dataset: &GraphDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(GraphDataset, GraphDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::validation(format!(
            "test fraction must lie in (0,1), got {test_fraction}"
        )));
    }
    if let Some(g) = dataset.graphs().iter().find(|g| g.label().is_none()) {
        return Err(Error::validation(format!(
            "cannot stratify: graph {:?} has no label",
            g.id()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut in_test = vec![false; dataset.len()];
    for &label in dataset.class_labels() {
        let mut members: Vec<usize> = dataset
            .graphs()
            .iter()
            .enumerate()
            .filter(|(_, g)| g.label() == Some(label))
            .map(|(i, _)| i)
            .collect();
        let count = members.len();
        if count < 2 {
            return Err(Error::validation(format!(
                "class {label} has {count} graph(s); splitting needs at least 2"
            )));
        }
        members.shuffle(&mut rng);
        let n_test = ((test_fraction * count as f64).round() as usize).clamp(1, count - 1);
        for &i in &members[..n_test] {
            in_test[i] = true;
        }
    }
    let (test, train): (Vec<_>, Vec<_>) = dataset
        .graphs()
        .iter()
        .cloned()
        .zip(in_test)
        .partition(|(_, t)| *t);
    Ok((
        GraphDataset::new(train.into_iter().map(|(g, _)| g).collect())?,
        GraphDataset::new(test.into_iter().map(|(g, _)| g).collect())?,
    ))
}
