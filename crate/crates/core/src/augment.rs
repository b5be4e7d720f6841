//! Per-class graphon estimation and synthetic graph generation.
//!
//! Each class of a training set gets its own graphon; a total of
//! `round(rate · |train|)` graphs is then split across classes in proportion
//! to their sizes and sampled with hard labels.

use std::collections::BTreeMap;

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorConfig};
use crate::graph::{Graph, GraphDataset};
use crate::graphon::{sample_graph, StepGraphon};
use crate::rng::{derive_seed, rng_from_seed};
use crate::scalar::Scalar;

/// Prefix of every synthetic graph id.
pub const SYNTHETIC_PREFIX: &str = "synth-";

/// How synthetic graph sizes are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NodeCountPolicy {
    /// Uniformly among the node counts observed in the class.
    #[default]
    Empirical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationPlan<T> {
    /// Synthetic graphs to add, as a fraction of the training-set size.
    pub rate: f64,
    pub method: EstimatorConfig<T>,
    pub node_count_policy: NodeCountPolicy,
    pub seed: u64,
}

impl<T: Scalar> AugmentationPlan<T> {
    pub fn new(rate: f64, method: EstimatorConfig<T>, seed: u64) -> Self {
        Self {
            rate,
            method,
            node_count_policy: NodeCountPolicy::Empirical,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return Err(Error::Config(format!("rate must be >= 0, got {}", self.rate)));
        }
        self.method.validate()
    }

    /// Number of synthetic graphs for a training set of `train_size` graphs.
    pub fn synthetic_count(&self, train_size: usize) -> usize {
        (self.rate * train_size as f64).round() as usize
    }
}

/// Largest-remainder apportionment of `total` seats proportional to `counts`.
/// Remainder ties go to the lower index.
pub fn apportion(total: usize, counts: &[usize]) -> Result<Vec<usize>> {
    let sum: u128 = counts.iter().map(|&c| c as u128).sum();
    if sum == 0 {
        return Err(Error::validation("apportionment needs a positive count"));
    }
    let total_wide = total as u128;
    let mut seats: Vec<usize> = counts
        .iter()
        .map(|&c| (total_wide * c as u128 / sum) as usize)
        .collect();
    let given: usize = seats.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(total_wide * counts[i] as u128 % sum), i));
    for &i in order.iter().take(total - given) {
        seats[i] += 1;
    }
    Ok(seats)
}

/// Estimates one graphon per class label of `train`.
pub fn estimate_class_graphons<T: Scalar>(
    train: &GraphDataset,
    config: &EstimatorConfig<T>,
) -> Result<BTreeMap<u32, StepGraphon<T>>> {
    check_labelled(train)?;
    train
        .class_labels()
        .par_iter()
        .map(|&label| {
            let members: Vec<Graph> = train.class_members(label).into_iter().cloned().collect();
            Ok((label, estimate(&members, config)?))
        })
        .collect()
}

/// Samples the synthetic graphs of `plan` from already estimated class
/// graphons and appends them to `train`.
///
/// Synthetic graph `j` of class `l` uses the seed
/// `derive_seed(plan.seed, [l, j])`: its first draw picks the node count among
/// the class's training sizes and `derive_seed(that seed, [1])` seeds the
/// graph sampler.
pub fn augment_with_graphons<T: Scalar>(
    train: &GraphDataset,
    graphons: &BTreeMap<u32, StepGraphon<T>>,
    plan: &AugmentationPlan<T>,
) -> Result<GraphDataset> {
    plan.validate()?;
    check_labelled(train)?;
    let labels = train.class_labels();
    let counts: Vec<usize> = labels.iter().map(|&l| train.class_members(l).len()).collect();
    let quota = apportion(plan.synthetic_count(train.len()), &counts)?;
    let mut jobs = Vec::new();
    for (&label, &q) in labels.iter().zip(&quota) {
        for j in 0..q {
            jobs.push((label, j));
        }
    }
    let synthetic: Vec<Graph> = jobs
        .par_iter()
        .map(|&(label, j)| {
            let graphon = graphons
                .get(&label)
                .ok_or_else(|| Error::validation(format!("no graphon for class {label}")))?;
            let sizes: Vec<usize> = train
                .class_members(label)
                .iter()
                .map(|g| g.node_count())
                .collect();
            let seed = derive_seed(plan.seed, &[label as u64, j as u64]);
            let n = sizes[rng_from_seed(seed).gen_range(0..sizes.len())];
            Ok(sample_graph(graphon, n, derive_seed(seed, &[1]))?
                .with_id(format!("{SYNTHETIC_PREFIX}{label}-{j}"))
                .with_label(Some(label)))
        })
        .collect::<Result<_>>()?;
    let mut graphs = train.graphs().to_vec();
    graphs.extend(synthetic);
    GraphDataset::new(graphs)
}

/// Estimates per-class graphons from `train` and returns `train` plus the
/// sampled synthetic graphs, together with the graphons.
pub fn augment_dataset<T: Scalar>(
    train: &GraphDataset,
    plan: &AugmentationPlan<T>,
) -> Result<(GraphDataset, BTreeMap<u32, StepGraphon<T>>)> {
    plan.validate()?;
    let graphons = estimate_class_graphons(train, &plan.method)?;
    let augmented = augment_with_graphons(train, &graphons, plan)?;
    Ok((augmented, graphons))
}

fn check_labelled(train: &GraphDataset) -> Result<()> {
    if train.is_empty() {
        return Err(Error::validation("training set is empty"));
    }
    match train.graphs().iter().find(|g| g.label().is_none()) {
        Some(g) => Err(Error::validation(format!(
            "graph {:?} has no class label",
            g.id()
        ))),
        None => Ok(()),
    }
}
