//! Graphon estimators: Gromov-Wasserstein barycenters (GB, and its smoothed
//! variant SGB) and the classical sorting/block/low-rank baselines SAS, SBA,
//! LG and MC, behind one [`estimate`] entry point.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{node_measure, permute_graph, Graph, NodeMeasurePolicy, ProbabilityVector};
use crate::graphon::{oracle_estimator, resize_step_graphon, step_function_of_graph, StepGraphon};
use crate::ot::{gw_barycenter, Barycenter, GwParams, SymmetricKernelMatrix};
use crate::scalar::Scalar;

/// Upper bound of the automatic resolution.
pub const MAX_AUTO_RESOLUTION: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorMethod {
    Gb,
    Sgb,
    Sas,
    Sba,
    Lg,
    Mc,
    Oracle,
}

impl EstimatorMethod {
    pub const ALL: [EstimatorMethod; 7] = [
        EstimatorMethod::Gb,
        EstimatorMethod::Sgb,
        EstimatorMethod::Sas,
        EstimatorMethod::Sba,
        EstimatorMethod::Lg,
        EstimatorMethod::Mc,
        EstimatorMethod::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorMethod::Gb => "GB",
            EstimatorMethod::Sgb => "SGB",
            EstimatorMethod::Sas => "SAS",
            EstimatorMethod::Sba => "SBA",
            EstimatorMethod::Lg => "LG",
            EstimatorMethod::Mc => "MC",
            EstimatorMethod::Oracle => "ORACLE",
        }
    }

    /// Comma-separated list of accepted names, for diagnostics.
    pub fn valid_names() -> String {
        Self::ALL.map(Self::name).join(", ")
    }
}

impl fmt::Display for EstimatorMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method {s:?}; valid methods are {}",
                    Self::valid_names()
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig<T> {
    pub method: EstimatorMethod,
    /// Output resolution `K`; `None` picks `min(median node count, 64)`.
    pub resolution: Option<usize>,
    pub gw: GwParams<T>,
    /// Side of the box filter used by SGB and SAS (odd).
    pub smoothing_window: usize,
    pub sba_threshold: T,
    /// LG group count; `None` uses `ceil(log2 N) + 1` per graph.
    pub lg_groups: Option<usize>,
    pub mc_threshold_scale: T,
    /// Node measure fed to the barycenter solver.
    pub node_measure: NodeMeasurePolicy,
}

impl<T: Scalar> Default for EstimatorConfig<T> {
    fn default() -> Self {
        Self {
            method: EstimatorMethod::Gb,
            resolution: None,
            gw: GwParams::default(),
            smoothing_window: 3,
            sba_threshold: T::of(0.2),
            lg_groups: None,
            mc_threshold_scale: T::of(2.02),
            node_measure: NodeMeasurePolicy::Degree,
        }
    }
}

impl<T: Scalar> EstimatorConfig<T> {
    pub fn with_method(method: EstimatorMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.smoothing_window == 0 || self.smoothing_window % 2 == 0 {
            return Err(Error::Config(format!(
                "smoothing window must be odd and >= 1, got {}",
                self.smoothing_window
            )));
        }
        if self.resolution == Some(0) {
            return Err(Error::Config("resolution must be >= 1".into()));
        }
        if !(self.sba_threshold > T::zero()) {
            return Err(Error::Config("sba threshold must be > 0".into()));
        }
        if self.lg_groups == Some(0) {
            return Err(Error::Config("lg groups must be >= 1".into()));
        }
        if !(self.mc_threshold_scale > T::zero()) {
            return Err(Error::Config("mc threshold scale must be > 0".into()));
        }
        self.gw.validate()
    }

    /// Resolution used for `graphs`.
    pub fn resolve_resolution(&self, graphs: &[Graph]) -> usize {
        self.resolution.unwrap_or_else(|| {
            let mut sizes: Vec<usize> = graphs.iter().map(Graph::node_count).collect();
            sizes.sort_unstable();
            let median = sizes.get(sizes.len().saturating_sub(1) / 2).copied().unwrap_or(1);
            median.clamp(1, MAX_AUTO_RESOLUTION)
        })
    }
}

/// Estimates one graphon from a collection of graphs of the same class.
pub fn estimate<T: Scalar>(graphs: &[Graph], config: &EstimatorConfig<T>) -> Result<StepGraphon<T>> {
    config.validate()?;
    if graphs.is_empty() {
        return Err(Error::validation("estimation needs at least one graph"));
    }
    match config.method {
        EstimatorMethod::Gb => estimate_gb(graphs, config),
        EstimatorMethod::Sgb => estimate_sgb(graphs, config),
        EstimatorMethod::Sas => estimate_sas(graphs, config),
        EstimatorMethod::Sba => estimate_sba(graphs, config),
        EstimatorMethod::Lg => estimate_lg(graphs, config),
        EstimatorMethod::Mc => estimate_mc(graphs, config),
        EstimatorMethod::Oracle => {
            let steps: Vec<_> = graphs.iter().map(step_function_of_graph).collect();
            oracle_estimator(&steps, config.resolve_resolution(graphs))
        }
    }
}

/// The barycenter behind GB, with its objective trace and couplings.
///
/// Each graph is first relabeled into [`canonical_order`], so the solver's
/// deterministic tie-breaking does not depend on the input labels. The
/// couplings index nodes in that order.
pub fn gb_barycenter<T: Scalar>(graphs: &[Graph], config: &EstimatorConfig<T>) -> Result<Barycenter<T>> {
    if graphs.is_empty() {
        return Err(Error::validation("estimation needs at least one graph"));
    }
    let k = config.resolve_resolution(graphs);
    let graphs: Vec<Graph> = graphs
        .iter()
        .map(|g| {
            let mut position = vec![0; g.node_count()];
            for (p, v) in canonical_order(g).into_iter().enumerate() {
                position[v] = p;
            }
            permute_graph(g, &position)
        })
        .collect::<Result<_>>()?;
    let matrices: Vec<SymmetricKernelMatrix<T>> = graphs
        .iter()
        .map(|g| SymmetricKernelMatrix::new(g.adjacency()))
        .collect::<Result<_>>()?;
    let measures: Vec<ProbabilityVector<T>> = graphs
        .iter()
        .map(|g| node_measure(g, config.node_measure))
        .collect();
    gw_barycenter(&matrices, &measures, k, None, &config.gw)
}

pub fn estimate_gb<T: Scalar>(graphs: &[Graph], config: &EstimatorConfig<T>) -> Result<StepGraphon<T>> {
    Ok(StepGraphon::uniform(gb_barycenter(graphs, config)?.matrix))
}

pub fn estimate_sgb<T: Scalar>(graphs: &[Graph], config: &EstimatorConfig<T>) -> Result<StepGraphon<T>> {
    let gb = estimate_gb(graphs, config)?;
    if config.smoothing_window == 1 {
        return Ok(gb);
    }
    smoothed(gb.values(), config.smoothing_window)
}

/// Sorting and smoothing: degree-sorted adjacency matrices resized to `K`,
/// averaged, then box-filtered.
pub fn estimate_sas<T: Scalar>(graphs: &[Graph], config: &EstimatorConfig<T>) -> Result<StepGraphon<T>> {
    let mean = mean_sorted_adjacency(graphs, config.resolve_resolution(graphs))?;
    smoothed(&mean, config.smoothing_window)
}

/// Stochastic block approximation by greedy pivot clustering of the
/// degree-sorted adjacency rows.
pub fn estimate_sba<T: Scalar>(graphs: &[Graph], config: &EstimatorConfig<T>) -> Result<StepGraphon<T>> {
    let k = config.resolve_resolution(graphs);
    let threshold = config.sba_threshold.as_f64();
    average_blocks(graphs, k, |g| {
        let order = canonical_order(g);
        let adj = sorted_adjacency::<u8>(g, &order);
        sba_blocks(&adj, threshold)
    })
}

/// Largest-gap clustering of the sorted degree sequence.
pub fn estimate_lg<T: Scalar>(graphs: &[Graph], config: &EstimatorConfig<T>) -> Result<StepGraphon<T>> {
    let k = config.resolve_resolution(graphs);
    average_blocks(graphs, k, |g| {
        let order = canonical_order(g);
        let degrees = g.degrees();
        let sorted: Vec<usize> = order.iter().map(|&v| degrees[v]).collect();
        let groups = config.lg_groups.unwrap_or_else(|| auto_groups(g.node_count()));
        let sizes = gap_groups(&sorted, groups);
        let mut labels = Vec::with_capacity(g.node_count());
        for (b, &s) in sizes.iter().enumerate() {
            labels.extend(std::iter::repeat(b).take(s));
        }
        (sorted_adjacency::<u8>(g, &order), labels)
    })
}

/// Universal singular value thresholding of the mean degree-sorted adjacency.
pub fn estimate_mc<T: Scalar>(graphs: &[Graph], config: &EstimatorConfig<T>) -> Result<StepGraphon<T>> {
    let k = config.resolve_resolution(graphs);
    let mean = mean_sorted_adjacency::<T>(graphs, k)?;
    let threshold =
        config.mc_threshold_scale.as_f64() * (k as f64).sqrt() / (graphs.len() as f64).sqrt();
    let low_rank = singular_value_threshold(&mean.mapv(|v| v.as_f64()), threshold);
    Ok(StepGraphon::uniform(SymmetricKernelMatrix::symmetrized(
        &low_rank.mapv(T::of),
    )?))
}

/// Drops singular values below `threshold` and reconstructs the matrix.
pub fn singular_value_threshold(matrix: &Array2<f64>, threshold: f64) -> Array2<f64> {
    let (r, c) = matrix.dim();
    let m = DMatrix::from_fn(r, c, |i, j| matrix[[i, j]]);
    let mut svd = m.svd(true, true);
    for s in svd.singular_values.iter_mut() {
        if *s < threshold {
            *s = 0.0;
        }
    }
    let rebuilt = svd
        .recompose()
        .expect("both singular bases were computed");
    Array2::from_shape_fn((r, c), |(i, j)| rebuilt[(i, j)])
}

/// Number of singular values of `matrix` at or above `threshold`.
pub fn numerical_rank(matrix: &Array2<f64>, threshold: f64) -> usize {
    let (r, c) = matrix.dim();
    let m = DMatrix::from_fn(r, c, |i, j| matrix[[i, j]]);
    m.singular_values().iter().filter(|&&s| s >= threshold).count()
}

/// Box filter of odd side `window`; cells near the border average over the
/// part of the window inside the matrix.
pub fn box_filter<T: Scalar>(values: &Array2<T>, window: usize) -> Array2<T> {
    let (r, c) = values.dim();
    let h = window / 2;
    Array2::from_shape_fn((r, c), |(i, j)| {
        let rows = i.saturating_sub(h)..(i + h + 1).min(r);
        let cols = j.saturating_sub(h)..(j + h + 1).min(c);
        let count = T::of_usize(rows.len() * cols.len());
        let mut sum = T::zero();
        for p in rows {
            for q in cols.clone() {
                sum = sum + values[[p, q]];
            }
        }
        sum / count
    })
}

fn smoothed<T: Scalar>(values: &Array2<T>, window: usize) -> Result<StepGraphon<T>> {
    Ok(StepGraphon::uniform(SymmetricKernelMatrix::symmetrized(&box_filter(
        values, window,
    ))?))
}

/// Node order used by the sorting baselines: degree descending, with ties
/// broken by colour refinement and individualization.
///
/// Colour refinement splits equal degrees by the multiset of neighbour
/// classes until stable. While a class still holds several nodes, its lowest
/// index node is singled out and the refinement repeated. When every such
/// class is an automorphism orbit (the usual case), the sorted adjacency
/// matrix is the same for every relabeling of the graph.
pub fn canonical_order(graph: &Graph) -> Vec<usize> {
    let n = graph.node_count();
    let neighbors = graph.neighbors();
    let degrees = graph.degrees();
    let mut color = refine(
        &neighbors,
        rank_by(&degrees.iter().map(|&d| std::cmp::Reverse(d)).collect::<Vec<_>>()),
    );
    loop {
        let mut sizes = vec![0usize; n];
        for &c in &color {
            sizes[c] += 1;
        }
        let Some(target) = sizes.iter().position(|&s| s > 1) else {
            break;
        };
        let chosen = (0..n).find(|&v| color[v] == target).expect("class is not empty");
        let keys: Vec<(usize, bool)> = (0..n).map(|v| (color[v], v != chosen)).collect();
        color = refine(&neighbors, rank_by(&keys));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| color[v]);
    order
}

/// Colour refinement to a stable colouring. Existing classes keep their
/// relative order and split by the sorted multiset of neighbour colours.
fn refine(neighbors: &[Vec<usize>], mut color: Vec<usize>) -> Vec<usize> {
    let mut classes = color.iter().max().map_or(0, |m| m + 1);
    loop {
        let signatures: Vec<(usize, Vec<usize>)> = color
            .iter()
            .zip(neighbors)
            .map(|(&c, around)| {
                let mut seen: Vec<usize> = around.iter().map(|&u| color[u]).collect();
                seen.sort_unstable();
                (c, seen)
            })
            .collect();
        let refined = rank_by(&signatures);
        let refined_classes = refined.iter().max().map_or(0, |m| m + 1);
        color = refined;
        if refined_classes == classes {
            return color;
        }
        classes = refined_classes;
    }
}

/// Dense rank of each key among the distinct keys.
fn rank_by<K: Ord + Clone>(keys: &[K]) -> Vec<usize> {
    let mut distinct: Vec<K> = keys.to_vec();
    distinct.sort();
    distinct.dedup();
    keys.iter()
        .map(|k| distinct.binary_search(k).expect("key is present"))
        .collect()
}

fn sorted_adjacency<A: Copy + Default + From<u8>>(graph: &Graph, order: &[usize]) -> Array2<A> {
    let n = graph.node_count();
    let mut position = vec![0; n];
    for (p, &v) in order.iter().enumerate() {
        position[v] = p;
    }
    let mut a = Array2::from_elem((n, n), A::default());
    for &(u, v) in graph.edges() {
        a[[position[u], position[v]]] = A::from(1);
        a[[position[v], position[u]]] = A::from(1);
    }
    a
}

fn mean_sorted_adjacency<T: Scalar>(graphs: &[Graph], k: usize) -> Result<Array2<T>> {
    let resized: Vec<Array2<T>> = graphs
        .par_iter()
        .map(|g| {
            let adj = sorted_adjacency::<u8>(g, &canonical_order(g)).mapv(|v| T::of(v as f64));
            let step = StepGraphon::from_matrix(adj)?;
            Ok(resize_step_graphon(&step, k)?.values().clone())
        })
        .collect::<Result<_>>()?;
    let mut sum = Array2::<T>::zeros((k, k));
    for r in &resized {
        sum = sum + r;
    }
    Ok(sum / T::of_usize(graphs.len()))
}

/// Greedy pivot clustering: each node joins the first block whose pivot row
/// differs from its own on at most `threshold · (N − 2)` positions (the two
/// diagonal positions excluded), or opens a new block.
fn sba_blocks(adj: &Array2<u8>, threshold: f64) -> (Array2<u8>, Vec<usize>) {
    let n = adj.nrows();
    let mut pivots: Vec<usize> = Vec::new();
    let mut labels = vec![0; n];
    for v in 0..n {
        let found = pivots.iter().position(|&p| {
            if n <= 2 {
                return true;
            }
            let diff = (0..n)
                .filter(|&w| w != v && w != p && adj[[v, w]] != adj[[p, w]])
                .count();
            diff as f64 / (n - 2) as f64 <= threshold
        });
        labels[v] = match found {
            Some(b) => b,
            None => {
                pivots.push(v);
                pivots.len() - 1
            }
        };
    }
    (adj.clone(), labels)
}

fn auto_groups(n: usize) -> usize {
    (n as f64).log2().ceil() as usize + 1
}

/// Group sizes from cutting a non-increasing sequence at its `groups − 1`
/// largest strictly positive gaps (earlier gaps win ties).
fn gap_groups(sorted: &[usize], groups: usize) -> Vec<usize> {
    let mut gaps: Vec<(usize, usize)> = sorted
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] > w[1])
        .map(|(i, w)| (w[0] - w[1], i))
        .collect();
    gaps.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut cuts: Vec<usize> = gaps
        .into_iter()
        .take(groups.saturating_sub(1))
        .map(|(_, i)| i + 1)
        .collect();
    cuts.sort_unstable();
    let mut sizes = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for c in cuts.into_iter().chain(std::iter::once(sorted.len())) {
        sizes.push(c - start);
        start = c;
    }
    sizes
}

/// Block means of a labelled adjacency matrix as a step graphon with cell
/// widths proportional to block sizes. Within-block means use distinct pairs
/// only; a singleton block has within value zero.
fn block_graphon<T: Scalar>(adj: &Array2<u8>, labels: &[usize]) -> Result<StepGraphon<T>> {
    let n = adj.nrows();
    let b = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0u64; b];
    for &l in labels {
        sizes[l] += 1;
    }
    let mut edges = Array2::<u64>::zeros((b, b));
    for i in 0..n {
        for j in 0..n {
            if i != j && adj[[i, j]] != 0 {
                edges[[labels[i], labels[j]]] += 1;
            }
        }
    }
    let values = Array2::from_shape_fn((b, b), |(p, q)| {
        let pairs = if p == q {
            sizes[p] * (sizes[p] - 1)
        } else {
            sizes[p] * sizes[q]
        };
        if pairs == 0 {
            T::zero()
        } else {
            T::of(edges[[p, q]] as f64 / pairs as f64)
        }
    });
    let weights = ProbabilityVector::from_masses(sizes.iter().map(|&s| T::of(s as f64)).collect::<Vec<_>>())?;
    StepGraphon::new(SymmetricKernelMatrix::new(values)?, weights)
}

fn average_blocks<T: Scalar, F>(graphs: &[Graph], k: usize, blocks: F) -> Result<StepGraphon<T>>
where
    F: Fn(&Graph) -> (Array2<u8>, Vec<usize>) + Sync,
{
    let resized: Vec<Array2<T>> = graphs
        .par_iter()
        .map(|g| {
            let (adj, labels) = blocks(g);
            let step = block_graphon::<T>(&adj, &labels)?;
            Ok(resize_step_graphon(&step, k)?.values().clone())
        })
        .collect::<Result<_>>()?;
    let mut sum = Array2::<T>::zeros((k, k));
    for r in &resized {
        sum = sum + r;
    }
    let mean = sum / T::of_usize(graphs.len());
    Ok(StepGraphon::uniform(SymmetricKernelMatrix::symmetrized(&mean)?))
}
