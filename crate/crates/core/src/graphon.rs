//! Step-function graphons: construction from graphs, resizing, Bernoulli
//! sampling, the aligned-average (oracle) estimator, GMX text files and PGM
//! heatmaps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{Graph, ProbabilityVector};
use crate::ot::{gw_distance, GwParams, SymmetricKernelMatrix};
use crate::rng::rng_from_seed;
use crate::scalar::Scalar;

/// Largest asymmetry tolerated when reading a GMX file.
pub const GMX_SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Piecewise-constant graphon on a `K × K` grid of cells whose side lengths
/// are the partition weights.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGraphon<T> {
    values: SymmetricKernelMatrix<T>,
    weights: ProbabilityVector<T>,
}

impl<T: Scalar> StepGraphon<T> {
    pub fn new(values: SymmetricKernelMatrix<T>, weights: ProbabilityVector<T>) -> Result<Self> {
        if values.size() != weights.len() {
            return Err(Error::validation(format!(
                "{} partition weights for a {}x{} graphon",
                weights.len(),
                values.size(),
                values.size()
            )));
        }
        Ok(Self { values, weights })
    }

    /// Graphon with equal cell widths.
    pub fn uniform(values: SymmetricKernelMatrix<T>) -> Self {
        let weights = ProbabilityVector::uniform(values.size());
        Self { values, weights }
    }

    pub fn from_matrix(values: Array2<T>) -> Result<Self> {
        Ok(Self::uniform(SymmetricKernelMatrix::new(values)?))
    }

    pub fn constant(k: usize, value: T) -> Result<Self> {
        if k == 0 {
            return Err(Error::validation("graphon resolution must be >= 1"));
        }
        Self::from_matrix(Array2::from_elem((k, k), value))
    }

    pub fn resolution(&self) -> usize {
        self.values.size()
    }

    pub fn values(&self) -> &Array2<T> {
        self.values.values()
    }

    pub fn kernel(&self) -> &SymmetricKernelMatrix<T> {
        &self.values
    }

    pub fn partition_weights(&self) -> &ProbabilityVector<T> {
        &self.weights
    }

    pub fn has_uniform_weights(&self) -> bool {
        let k = T::of_usize(self.resolution());
        let tol = T::of(1e-12);
        self.weights
            .weights()
            .iter()
            .all(|&w| (w * k - T::one()).abs() <= tol)
    }

    /// Integral of the graphon over the unit square: `Σ w_p w_q W_pq`.
    pub fn mean_value(&self) -> T {
        let w = self.weights.weights();
        w.dot(&self.values().dot(w))
    }

    /// Index of the cell containing latent position `x ∈ [0,1]`.
    pub fn cell_of(&self, x: f64) -> usize {
        let mut acc = 0.0;
        let last = self.resolution() - 1;
        for (i, &w) in self.weights.weights().iter().enumerate().take(last) {
            acc += w.as_f64();
            if x < acc {
                return i;
            }
        }
        last
    }

    /// Value at latent positions `(x, y)`.
    pub fn value_at(&self, x: f64, y: f64) -> T {
        self.values()[[self.cell_of(x), self.cell_of(y)]]
    }
}

/// The step function of a graph: its adjacency matrix on `N` equal cells.
pub fn step_function_of_graph<T: Scalar>(graph: &Graph) -> StepGraphon<T> {
    let values = SymmetricKernelMatrix::new(graph.adjacency())
        .expect("adjacency matrices are symmetric 0/1");
    StepGraphon::uniform(values)
}

/// Resamples a step graphon onto `new_k` equal cells. Each target cell takes
/// the overlap-area-weighted average of the source cells it intersects.
pub fn resize_step_graphon<T: Scalar>(graphon: &StepGraphon<T>, new_k: usize) -> Result<StepGraphon<T>> {
    if new_k == 0 {
        return Err(Error::validation("target resolution must be >= 1"));
    }
    let k = graphon.resolution();
    if k == new_k && graphon.has_uniform_weights() {
        return Ok(StepGraphon::uniform(graphon.kernel().clone()));
    }
    // overlap[p][a]: length of target cell p inside source cell a, scaled by new_k.
    let mut overlap = Array2::<f64>::zeros((new_k, k));
    let mut src_lo = 0.0;
    let weights = graphon.partition_weights().weights();
    for a in 0..k {
        let src_hi = if a + 1 == k { 1.0 } else { src_lo + weights[a].as_f64() };
        let first = ((src_lo * new_k as f64).floor() as usize).min(new_k - 1);
        for p in first..new_k {
            let lo = p as f64 / new_k as f64;
            let hi = (p + 1) as f64 / new_k as f64;
            if lo >= src_hi {
                break;
            }
            let len = hi.min(src_hi) - lo.max(src_lo);
            if len > 0.0 {
                overlap[[p, a]] = len * new_k as f64;
            }
        }
        src_lo = src_hi;
    }
    let source = graphon.values().mapv(|v| v.as_f64());
    let resized = overlap.dot(&source).dot(&overlap.t());
    let values = resized.mapv(T::of);
    Ok(StepGraphon::uniform(SymmetricKernelMatrix::symmetrized(&values)?))
}

/// Pointwise mean of node-aligned step functions after resizing each to `k`.
pub fn oracle_estimator<T: Scalar>(step_functions: &[StepGraphon<T>], k: usize) -> Result<StepGraphon<T>> {
    if step_functions.is_empty() {
        return Err(Error::validation("oracle estimator needs at least one step function"));
    }
    let mut sum = Array2::<T>::zeros((k.max(1), k.max(1)));
    for g in step_functions {
        sum = sum + resize_step_graphon(g, k)?.values();
    }
    let mean = sum / T::of_usize(step_functions.len());
    Ok(StepGraphon::uniform(SymmetricKernelMatrix::symmetrized(&mean)?))
}

/// Samples a simple graph with `num_nodes` nodes.
///
/// Latent positions are drawn first, one uniform per node, followed by one
/// uniform per pair `i < j` in lexicographic order; the pair is an edge when
/// its draw falls below the graphon value at the two latent positions.
pub fn sample_graph<T: Scalar>(graphon: &StepGraphon<T>, num_nodes: usize, seed: u64) -> Result<Graph> {
    sample_graph_with_positions(graphon, num_nodes, seed).map(|(g, _)| g)
}

/// [`sample_graph`] that also returns the latent position of every node.
pub fn sample_graph_with_positions<T: Scalar>(
    graphon: &StepGraphon<T>,
    num_nodes: usize,
    seed: u64,
) -> Result<(Graph, Vec<f64>)> {
    if num_nodes == 0 {
        return Err(Error::validation("sampled graphs need at least one node"));
    }
    let mut rng = rng_from_seed(seed);
    let positions: Vec<f64> = (0..num_nodes).map(|_| rng.gen::<f64>()).collect();
    let cells: Vec<usize> = positions.iter().map(|&x| graphon.cell_of(x)).collect();
    let values = graphon.values();
    let mut edges = Vec::new();
    for i in 0..num_nodes {
        for j in (i + 1)..num_nodes {
            let p = values[[cells[i], cells[j]]].as_f64();
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let graph = Graph::new(format!("sample-{seed:016x}"), num_nodes, edges, None)?;
    Ok((graph, positions))
}

/// Squared order-two (or order-one, per `params.order`) GW discrepancy between
/// two graphons measured by their partition weights.
pub fn graphon_distance<T: Scalar>(a: &StepGraphon<T>, b: &StepGraphon<T>, params: &GwParams<T>) -> Result<T> {
    gw_distance(a.kernel(), a.partition_weights(), b.kernel(), b.partition_weights(), params).map(|d| d.value)
}

/// GMX text: `GMX1 K`, then `K` rows of space-separated values with twelve
/// decimals.
///
/// GMX stores no partition weights, so only equal-width graphons are accepted.
pub fn to_gmx<T: Scalar>(graphon: &StepGraphon<T>) -> Result<String> {
    if !graphon.has_uniform_weights() {
        return Err(Error::Format(
            "GMX stores equal-width cells only; resize the graphon first".into(),
        ));
    }
    let k = graphon.resolution();
    let mut out = format!("GMX1 {k}\n");
    for row in graphon.values().rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            write!(out, "{:.12}", v.as_f64()).expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn from_gmx<T: Scalar>(text: &str) -> Result<StepGraphon<T>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty graphon file".into()))?;
    let k: usize = match header.split(' ').collect::<Vec<_>>().as_slice() {
        ["GMX1", k] => k
            .parse()
            .map_err(|_| Error::Format(format!("bad resolution in header {header:?}")))?,
        _ => return Err(Error::Format(format!("expected header `GMX1 K`, got {header:?}"))),
    };
    if k == 0 {
        return Err(Error::Format("resolution must be >= 1".into()));
    }
    let mut values = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        let line = lines
            .next()
            .ok_or_else(|| Error::Format(format!("expected {k} rows, found {i}")))?;
        let row: Vec<f64> = line
            .split(' ')
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::Format(format!("row {}: bad value {tok:?}", i + 1)))
            })
            .collect::<Result<_>>()?;
        if row.len() != k {
            return Err(Error::Format(format!(
                "row {} has {} values, expected {k}",
                i + 1,
                row.len()
            )));
        }
        for (j, v) in row.into_iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Format(format!("value {v} at ({i},{j}) outside [0,1]")));
            }
            values[[i, j]] = v;
        }
    }
    if let Some(extra) = lines.find(|l| !l.is_empty()) {
        return Err(Error::Format(format!("unexpected trailing line {extra:?}")));
    }
    for i in 0..k {
        for j in (i + 1)..k {
            if (values[[i, j]] - values[[j, i]]).abs() > GMX_SYMMETRY_TOLERANCE {
                return Err(Error::Format(format!("matrix not symmetric at ({i},{j})")));
            }
        }
    }
    let values = SymmetricKernelMatrix::symmetrized(&values.mapv(T::of))?;
    Ok(StepGraphon::uniform(values))
}

pub fn save_graphon<T: Scalar>(graphon: &StepGraphon<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_gmx(graphon)?).map_err(|e| Error::io(path, e))
}

pub fn load_graphon<T: Scalar>(path: impl AsRef<Path>) -> Result<StepGraphon<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_gmx(&text)
}

/// Grey level of a graphon value: `round(255 v)` with halves rounded up.
pub fn pixel_level(value: f64) -> u8 {
    (value.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Plain (P2) PGM image with one pixel per cell; higher values are lighter.
pub fn to_pgm<T: Scalar>(graphon: &StepGraphon<T>) -> String {
    let k = graphon.resolution();
    let mut out = format!("P2\n{k} {k}\n255\n");
    for row in graphon.values().rows() {
        let line: Vec<String> = row.iter().map(|v| pixel_level(v.as_f64()).to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn graphon_heatmap<T: Scalar>(graphon: &StepGraphon<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_pgm(graphon)).map_err(|e| Error::io(path, e))
}
