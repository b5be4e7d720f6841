//! Evaluation harness: Weisfeiler-Lehman feature hashing, a one-hidden-layer
//! classifier, synthetic benchmarks and the augmentation experiment runner.

use std::collections::BTreeMap;
use std::hash::Hasher;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_with_graphons, estimate_class_graphons, AugmentationPlan, SYNTHETIC_PREFIX};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, EstimatorMethod};
use crate::graph::{load_dataset, split_dataset, DatasetFormat, Graph, GraphDataset, NodeMeasurePolicy};
use crate::graphon::{sample_graph, StepGraphon};
use crate::ot::{GwOrder, GwParams};
use crate::rng::{derive_seed, rng_from_seed};
use crate::scalar::Scalar;

pub const REPORT_HEADER: &str = "dataset,method,rate,seed,base_accuracy,aug_accuracy,delta";

/// 64-bit FNV-1a hash of a string.
pub fn fnv1a(text: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(text.as_bytes());
    h.finish()
}

/// Hashed Weisfeiler-Lehman subtree histogram.
///
/// Node labels start as `"0|<degree>"`. At iteration `t` a node's label is
/// `"<t>|<own>|<n1>,<n2>,..."` with the previous hashes written as 16 hex
/// digits and the neighbour hashes sorted. Every label of every iteration
/// (including the initial one) adds one count to bucket `fnv1a(label) % dim`;
/// counts are divided by the node count.
pub fn wl_features<T: Scalar>(graph: &Graph, iterations: usize, dim: usize) -> Result<Array1<T>> {
    if dim == 0 {
        return Err(Error::Config("feature dimension must be >= 1".into()));
    }
    let neighbors = graph.neighbors();
    let mut counts = vec![0usize; dim];
    let mut hashes: Vec<u64> = graph
        .degrees()
        .iter()
        .map(|d| fnv1a(&format!("0|{d}")))
        .collect();
    for &h in &hashes {
        counts[(h % dim as u64) as usize] += 1;
    }
    for t in 1..=iterations {
        hashes = neighbors
            .iter()
            .enumerate()
            .map(|(v, around)| {
                let mut nb: Vec<u64> = around.iter().map(|&u| hashes[u]).collect();
                nb.sort_unstable();
                let nb: Vec<String> = nb.iter().map(|h| format!("{h:016x}")).collect();
                fnv1a(&format!("{t}|{:016x}|{}", hashes[v], nb.join(",")))
            })
            .collect();
        for &h in &hashes {
            counts[(h % dim as u64) as usize] += 1;
        }
    }
    let n = T::of_usize(graph.node_count());
    Ok(counts.into_iter().map(|c| T::of_usize(c) / n).collect())
}

/// Stacks the feature vectors of `graphs` as rows.
pub fn feature_matrix<T: Scalar>(graphs: &[Graph], settings: &FeatureSettings) -> Result<Array2<T>> {
    let mut x = Array2::zeros((graphs.len(), settings.dim));
    for (mut row, g) in x.rows_mut().into_iter().zip(graphs) {
        row.assign(&wl_features::<T>(g, settings.iterations, settings.dim)?);
    }
    Ok(x)
}

/// Row-wise softmax, shifted by each row's maximum.
pub fn softmax<T: Scalar>(logits: &Array2<T>) -> Array2<T> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|z| (z - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|z| z / sum);
    }
    out
}

/// Gradients of the mean cross-entropy, laid out like the parameters.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    pub w2: Array2<T>,
    pub b2: Array1<T>,
}

/// One-hidden-layer perceptron with ReLU units and a softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier<T> {
    /// `hidden × input`
    w1: Array2<T>,
    b1: Array1<T>,
    /// `classes × hidden`
    w2: Array2<T>,
    b2: Array1<T>,
}

impl<T: Scalar> Classifier<T> {
    /// Draws every weight and bias of a layer from `U(-1/√fan_in, 1/√fan_in)`,
    /// first layer first, each matrix in row-major order.
    pub fn init(input_dim: usize, hidden_dim: usize, class_count: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || class_count == 0 {
            return Err(Error::Config("classifier dimensions must be >= 1".into()));
        }
        let mut rng = rng_from_seed(seed);
        let mut draw = |fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            T::of(rng.gen_range(-bound..bound))
        };
        let w1 = Array2::from_shape_simple_fn((hidden_dim, input_dim), || draw(input_dim));
        let b1 = Array1::from_shape_simple_fn(hidden_dim, || draw(input_dim));
        let w2 = Array2::from_shape_simple_fn((class_count, hidden_dim), || draw(hidden_dim));
        let b2 = Array1::from_shape_simple_fn(class_count, || draw(hidden_dim));
        Ok(Self { w1, b1, w2, b2 })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn class_count(&self) -> usize {
        self.w2.nrows()
    }

    fn check_input(&self, x: &Array2<T>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::validation(format!(
                "features have {} columns, classifier expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn hidden_pre(&self, x: &Array2<T>) -> Array2<T> {
        x.dot(&self.w1.t()) + &self.b1
    }

    fn logits_from_hidden(&self, hidden: &Array2<T>) -> Array2<T> {
        hidden.dot(&self.w2.t()) + &self.b2
    }

    /// Class probabilities, one row per example.
    pub fn predict_proba(&self, x: &Array2<T>) -> Result<Array2<T>> {
        self.check_input(x)?;
        let hidden = self.hidden_pre(x).mapv(|v| v.max(T::zero()));
        Ok(softmax(&self.logits_from_hidden(&hidden)))
    }

    /// Argmax class per example; ties go to the lower class index.
    pub fn predict(&self, x: &Array2<T>) -> Result<Vec<usize>> {
        let p = self.predict_proba(x)?;
        Ok(p.rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, T::neg_infinity()), |best, (c, &v)| if v > best.1 { (c, v) } else { best })
                    .0
            })
            .collect())
    }

    /// Mean cross-entropy of `labels` under the model.
    pub fn loss(&self, x: &Array2<T>, labels: &[usize]) -> Result<T> {
        self.check_batch(x, labels)?;
        let p = self.predict_proba(x)?;
        let floor = T::min_positive_value();
        let total: T = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -(p[[i, y]].max(floor)).ln())
            .sum();
        Ok(total / T::of_usize(labels.len()))
    }

    /// Backpropagated gradients of [`Classifier::loss`].
    pub fn gradients(&self, x: &Array2<T>, labels: &[usize]) -> Result<Gradients<T>> {
        self.check_batch(x, labels)?;
        let pre = self.hidden_pre(x);
        let hidden = pre.mapv(|v| v.max(T::zero()));
        let mut dz = softmax(&self.logits_from_hidden(&hidden));
        for (i, &y) in labels.iter().enumerate() {
            dz[[i, y]] = dz[[i, y]] - T::one();
        }
        dz.mapv_inplace(|v| v / T::of_usize(labels.len()));
        let w2 = dz.t().dot(&hidden);
        let b2 = dz.sum_axis(Axis(0));
        let mut dh = dz.dot(&self.w2);
        dh.zip_mut_with(&pre, |g, &p| {
            if p <= T::zero() {
                *g = T::zero();
            }
        });
        let w1 = dh.t().dot(x);
        let b1 = dh.sum_axis(Axis(0));
        Ok(Gradients { w1, b1, w2, b2 })
    }

    /// One full-batch gradient step.
    pub fn step(&mut self, x: &Array2<T>, labels: &[usize], learning_rate: T) -> Result<()> {
        let g = self.gradients(x, labels)?;
        self.w1.scaled_add(-learning_rate, &g.w1);
        self.b1.scaled_add(-learning_rate, &g.b1);
        self.w2.scaled_add(-learning_rate, &g.w2);
        self.b2.scaled_add(-learning_rate, &g.b2);
        if !self.parameters().iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("classifier parameters diverged".into()));
        }
        Ok(())
    }

    /// All parameters flattened in the order `w1, b1, w2, b2`.
    pub fn parameters(&self) -> Vec<T> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .cloned()
            .collect()
    }

    /// Copy with parameters replaced from a vector laid out as [`Classifier::parameters`].
    pub fn with_parameters(&self, values: &[T]) -> Result<Self> {
        if values.len() != self.parameters().len() {
            return Err(Error::validation("parameter vector has the wrong length"));
        }
        let mut out = self.clone();
        let mut it = values.iter().cloned();
        for v in out
            .w1
            .iter_mut()
            .chain(out.b1.iter_mut())
            .chain(out.w2.iter_mut())
            .chain(out.b2.iter_mut())
        {
            *v = it.next().expect("length checked");
        }
        Ok(out)
    }

    fn check_batch(&self, x: &Array2<T>, labels: &[usize]) -> Result<()> {
        self.check_input(x)?;
        if x.nrows() != labels.len() {
            return Err(Error::validation(format!(
                "{} feature rows but {} labels",
                x.nrows(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::validation("empty batch"));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= self.class_count()) {
            return Err(Error::validation(format!(
                "label {y} out of range for {} classes",
                self.class_count()
            )));
        }
        Ok(())
    }
}

impl<T: Scalar> Gradients<T> {
    /// Flattened like [`Classifier::parameters`].
    pub fn flatten(&self) -> Vec<T> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSettings {
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            epochs: 200,
            learning_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSettings {
    pub iterations: usize,
    pub dim: usize,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        Self {
            iterations: 2,
            dim: 256,
        }
    }
}

/// Trains a classifier by full-batch gradient descent on class indices
/// `0..C`, where every class must occur.
pub fn train_classifier<T: Scalar>(
    features: &Array2<T>,
    labels: &[usize],
    settings: &ClassifierSettings,
    seed: u64,
) -> Result<Classifier<T>> {
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    if class_count < 2 {
        return Err(Error::validation("training needs at least two classes"));
    }
    if let Some(missing) = (0..class_count).find(|c| !labels.contains(c)) {
        return Err(Error::validation(format!("class {missing} has no training example")));
    }
    let mut model = Classifier::init(features.ncols(), settings.hidden_dim, class_count, seed)?;
    let lr = T::of(settings.learning_rate);
    for _ in 0..settings.epochs {
        model.step(features, labels, lr)?;
    }
    Ok(model)
}

/// Fraction of examples whose argmax prediction equals the label.
pub fn accuracy<T: Scalar>(model: &Classifier<T>, features: &Array2<T>, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::validation("accuracy of an empty test set"));
    }
    if features.nrows() != labels.len() {
        return Err(Error::validation("feature rows and labels differ in number"));
    }
    let predicted = model.predict(features)?;
    let correct = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Ground-truth graphon of one benchmark class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum GraphonSpec {
    Constant(f64),
    /// Equal-sized blocks with `p_in` inside and `p_out` across.
    Sbm { blocks: usize, p_in: f64, p_out: f64 },
    /// Explicit symmetric matrix on equal cells.
    Matrix(Vec<Vec<f64>>),
}

impl GraphonSpec {
    pub fn graphon(&self) -> Result<StepGraphon<f64>> {
        match self {
            GraphonSpec::Constant(c) => StepGraphon::constant(1, *c),
            GraphonSpec::Sbm { blocks, p_in, p_out } => {
                if *blocks == 0 {
                    return Err(Error::Config("an SBM needs at least one block".into()));
                }
                StepGraphon::from_matrix(Array2::from_shape_fn((*blocks, *blocks), |(p, q)| {
                    if p == q {
                        *p_in
                    } else {
                        *p_out
                    }
                }))
            }
            GraphonSpec::Matrix(rows) => {
                let k = rows.len();
                if k == 0 || rows.iter().any(|r| r.len() != k) {
                    return Err(Error::Config("graphon matrix must be square and non-empty".into()));
                }
                StepGraphon::from_matrix(Array2::from_shape_fn((k, k), |(i, j)| rows[i][j]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkClass {
    pub graphon: GraphonSpec,
    pub count: usize,
}

/// Synthetic labelled dataset description: class `c` is `classes[c]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub classes: Vec<BenchmarkClass>,
    pub min_nodes: usize,
    pub max_nodes: usize,
}

/// Samples a labelled dataset from per-class ground-truth graphons.
///
/// Graph `j` of class `c` has id `c<c>-<j>`; its size is drawn uniformly from
/// `[min_nodes, max_nodes]` with the generator seeded by
/// `derive_seed(seed, [c, j])`, and the graph itself is sampled with
/// `derive_seed(that seed, [1])`. Graphs are listed class by class.
pub fn synthetic_benchmark(spec: &BenchmarkSpec, seed: u64) -> Result<(GraphDataset, Vec<StepGraphon<f64>>)> {
    if spec.min_nodes == 0 || spec.min_nodes > spec.max_nodes {
        return Err(Error::Config(format!(
            "node range [{}, {}] is invalid",
            spec.min_nodes, spec.max_nodes
        )));
    }
    let truths: Vec<StepGraphon<f64>> = spec
        .classes
        .iter()
        .map(|c| c.graphon.graphon())
        .collect::<Result<_>>()?;
    let mut graphs = Vec::new();
    for (c, (class, truth)) in spec.classes.iter().zip(&truths).enumerate() {
        for j in 0..class.count {
            let s = derive_seed(seed, &[c as u64, j as u64]);
            let n = rng_from_seed(s).gen_range(spec.min_nodes..=spec.max_nodes);
            let g = sample_graph(truth, n, derive_seed(s, &[1]))?;
            graphs.push(g.with_id(format!("c{c}-{j}")).with_label(Some(c as u32)));
        }
    }
    Ok((GraphDataset::new(graphs)?, truths))
}

/// Where an experiment dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum DatasetSource {
    /// JSONL file; relative paths are resolved against the config's directory.
    File { name: Option<String>, path: PathBuf },
    /// Generated with [`synthetic_benchmark`] from `seed`.
    Benchmark {
        name: String,
        benchmark: BenchmarkSpec,
        #[serde(default)]
        seed: u64,
    },
}

/// Estimator options of an experiment; absent keys keep the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSettings {
    pub resolution: Option<usize>,
    pub smoothing_window: usize,
    pub sba_threshold: f64,
    pub lg_groups: Option<usize>,
    pub mc_threshold_scale: f64,
    pub node_measure: String,
    pub gw: GwSettings,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        let d = EstimatorConfig::<f64>::default();
        Self {
            resolution: d.resolution,
            smoothing_window: d.smoothing_window,
            sba_threshold: d.sba_threshold,
            lg_groups: d.lg_groups,
            mc_threshold_scale: d.mc_threshold_scale,
            node_measure: "degree".into(),
            gw: GwSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GwSettings {
    pub epsilon: f64,
    pub outer_iterations: usize,
    pub sinkhorn_iterations: usize,
    pub tolerance: f64,
    pub inner_iterations: usize,
}

impl Default for GwSettings {
    fn default() -> Self {
        let d = GwParams::<f64>::default();
        Self {
            epsilon: d.epsilon,
            outer_iterations: d.outer_iterations,
            sinkhorn_iterations: d.sinkhorn_iterations,
            tolerance: d.tolerance,
            inner_iterations: d.inner_iterations,
        }
    }
}

impl EstimatorSettings {
    pub fn to_config(&self, method: EstimatorMethod, seed: u64) -> Result<EstimatorConfig<f64>> {
        let node_measure = match self.node_measure.as_str() {
            "degree" => NodeMeasurePolicy::Degree,
            "uniform" => NodeMeasurePolicy::Uniform,
            other => {
                return Err(Error::Config(format!(
                    "unknown node measure {other:?}; expected degree or uniform"
                )))
            }
        };
        let config = EstimatorConfig {
            method,
            resolution: self.resolution,
            gw: GwParams {
                order: GwOrder::Two,
                epsilon: self.gw.epsilon,
                outer_iterations: self.gw.outer_iterations,
                sinkhorn_iterations: self.gw.sinkhorn_iterations,
                tolerance: self.gw.tolerance,
                inner_iterations: self.gw.inner_iterations,
                seed,
                ..GwParams::default()
            },
            smoothing_window: self.smoothing_window,
            sba_threshold: self.sba_threshold,
            lg_groups: self.lg_groups,
            mc_threshold_scale: self.mc_threshold_scale,
            node_measure,
        };
        config.validate()?;
        Ok(config)
    }
}

fn default_rates() -> Vec<f64> {
    vec![0.01, 0.05, 0.10, 0.25]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_split() -> f64 {
    0.2
}

fn default_methods() -> Vec<String> {
    ["SAS", "SBA", "LG", "MC", "GB", "SGB"].map(String::from).to_vec()
}

/// JSON experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetSource>,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_rates")]
    pub rates: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Test fraction of the stratified split.
    #[serde(default = "default_split")]
    pub split_fraction: f64,
    #[serde(default)]
    pub estimator: EstimatorSettings,
    #[serde(default)]
    pub classifier: ClassifierSettings,
    #[serde(default)]
    pub features: FeatureSettings,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("experiment config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Parsed method list; only the six augmentation methods are accepted.
    pub fn parsed_methods(&self) -> Result<Vec<EstimatorMethod>> {
        self.methods
            .iter()
            .map(|m| {
                let method: EstimatorMethod = m.parse()?;
                if method == EstimatorMethod::Oracle {
                    return Err(Error::Config(
                        "ORACLE needs aligned graphs and is not an augmentation method".into(),
                    ));
                }
                Ok(method)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Config("no datasets listed".into()));
        }
        if let Some(r) = self.rates.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
            return Err(Error::Config(format!("rate {r} must be >= 0")));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Config("split_fraction must lie in (0,1)".into()));
        }
        if self.features.dim == 0 || self.classifier.hidden_dim == 0 {
            return Err(Error::Config("feature and hidden dimensions must be >= 1".into()));
        }
        for m in self.parsed_methods()? {
            self.estimator.to_config(m, 0)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub dataset: String,
    pub method: EstimatorMethod,
    pub rate: f64,
    pub seed: u64,
    /// Percent.
    pub base_accuracy: f64,
    /// Percent.
    pub aug_accuracy: f64,
    /// `aug_accuracy − base_accuracy`, in percentage points.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(REPORT_HEADER.split(','))
            .map_err(|e| Error::Format(e.to_string()))?;
        for r in &self.rows {
            w.write_record([
                r.dataset.clone(),
                r.method.to_string(),
                r.rate.to_string(),
                r.seed.to_string(),
                format!("{:.2}", r.base_accuracy),
                format!("{:.2}", r.aug_accuracy),
                format!("{:.2}", r.delta),
            ])
            .map_err(|e| Error::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Loads or generates the datasets of `config`, resolving relative paths
/// against `base_dir`.
pub fn load_experiment_datasets(config: &ExperimentConfig, base_dir: &Path) -> Result<Vec<(String, GraphDataset)>> {
    config
        .datasets
        .iter()
        .map(|source| match source {
            DatasetSource::File { name, path } => {
                let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                let name = name.clone().unwrap_or_else(|| {
                    path.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| path.display().to_string())
                });
                Ok((name, load_dataset(&full, DatasetFormat::Jsonl)?))
            }
            DatasetSource::Benchmark { name, benchmark, seed } => {
                Ok((name.clone(), synthetic_benchmark(benchmark, *seed)?.0))
            }
        })
        .collect()
}

/// Base and augmented test accuracy of one dataset and split seed.
///
/// The split uses `seed`; the classifier and the augmentation use seeds
/// derived from it, shared by every (method, rate) cell. Graphons are
/// estimated once per method from the training split only.
pub fn run_dataset(
    name: &str,
    dataset: &GraphDataset,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<ReportRow>> {
    let methods = config.parsed_methods()?;
    let (train, test) = split_dataset(dataset, config.split_fraction, seed)?;
    let classes: Vec<u32> = train.class_labels().to_vec();
    let index_of = |g: &Graph| -> Result<usize> {
        let label = g.label().ok_or_else(|| Error::validation("unlabelled graph"))?;
        classes
            .binary_search(&label)
            .map_err(|_| Error::validation(format!("label {label} absent from training split")))
    };
    let test_ids: std::collections::HashSet<&str> = test.graphs().iter().map(Graph::id).collect();
    let x_test = feature_matrix::<f64>(test.graphs(), &config.features)?;
    let y_test: Vec<usize> = test.graphs().iter().map(index_of).collect::<Result<_>>()?;
    let classifier_seed = derive_seed(seed, &[0]);
    let evaluate = |train: &GraphDataset| -> Result<f64> {
        let x = feature_matrix::<f64>(train.graphs(), &config.features)?;
        let y: Vec<usize> = train.graphs().iter().map(index_of).collect::<Result<_>>()?;
        let model = train_classifier(&x, &y, &config.classifier, classifier_seed)?;
        Ok(100.0 * accuracy(&model, &x_test, &y_test)?)
    };
    let base = evaluate(&train)?;
    let mut rows = Vec::new();
    for method in methods {
        let estimator = config.estimator.to_config(method, seed)?;
        let graphons: BTreeMap<u32, StepGraphon<f64>> = estimate_class_graphons(&train, &estimator)?;
        for &rate in &config.rates {
            let plan = AugmentationPlan::new(rate, estimator.clone(), derive_seed(seed, &[1]));
            let augmented = augment_with_graphons(&train, &graphons, &plan)?;
            if let Some(g) = augmented.graphs().iter().find(|g| test_ids.contains(g.id())) {
                return Err(Error::validation(format!(
                    "graph {:?} is in both the augmented training set and the test set",
                    g.id()
                )));
            }
            debug_assert!(augmented.graphs()[train.len()..]
                .iter()
                .all(|g| g.id().starts_with(SYNTHETIC_PREFIX)));
            let aug = if augmented.len() == train.len() { base } else { evaluate(&augmented)? };
            rows.push(ReportRow {
                dataset: name.to_string(),
                method,
                rate,
                seed,
                base_accuracy: base,
                aug_accuracy: aug,
                delta: aug - base,
            });
        }
    }
    Ok(rows)
}

/// Runs every (dataset, seed, method, rate) cell of `config`. Rows are
/// ordered by dataset, method, rate and seed, each in config order.
pub fn run_experiment(config: &ExperimentConfig, base_dir: &Path) -> Result<ExperimentReport> {
    config.validate()?;
    let datasets = load_experiment_datasets(config, base_dir)?;
    let mut rows = Vec::new();
    for (name, dataset) in &datasets {
        for &seed in &config.seeds {
            rows.extend(run_dataset(name, dataset, config, seed)?);
        }
    }
    let methods = config.parsed_methods()?;
    let position = |r: &ReportRow| {
        (
            datasets.iter().position(|(n, _)| *n == r.dataset),
            methods.iter().position(|m| *m == r.method),
            config.rates.iter().position(|x| *x == r.rate),
            config.seeds.iter().position(|s| *s == r.seed),
        )
    };
    rows.sort_by_key(|r| position(r));
    Ok(ExperimentReport { rows })
}
