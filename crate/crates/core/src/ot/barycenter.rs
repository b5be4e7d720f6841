use ndarray::{Array1, Array2, Axis, Zip};
use rayon::prelude::*;

use super::gw::{cost_order_two, initial_plan, proximal_descent, strict_quantiles};
use super::{GwParams, SymmetricKernelMatrix, TransportPlan};
use crate::error::{Error, Result};
use crate::graph::ProbabilityVector;
use crate::scalar::Scalar;

/// Output of [`gw_barycenter`].
#[derive(Debug, Clone)]
pub struct Barycenter<T> {
    pub matrix: SymmetricKernelMatrix<T>,
    /// Weighted sum of squared order-two distances after each alternation.
    pub objective_trace: Vec<T>,
    /// Final coupling of each input (rows) with the barycenter cells (columns).
    pub plans: Vec<TransportPlan<T>>,
}

impl<T: Scalar> Barycenter<T> {
    pub fn final_objective(&self) -> T {
        *self
            .objective_trace
            .last()
            .expect("a barycenter run records at least one objective")
    }
}

/// Gromov-Wasserstein barycenter of measured symmetric matrices on `k`
/// uniformly weighted cells.
///
/// Starts from the constant matrix equal to the weighted mean of
/// `μ_mᵀ A_m μ_m` and couplings that place nodes on cells by their
/// weighted-degree rank. Degree ties are broken by longer walk sums and then
/// by index, since a coupling that treats tied nodes alike is a fixed point of
/// the alternation. Each alternation then
///
/// 1. sets every cell to its optimal value given the couplings,
///    `W = Σ λ_m T_mᵀ A_m T_m ⊘ Σ λ_m c_m c_mᵀ` with `c_m` the coupling's column
///    sums (the barycenter measure up to solver tolerance), symmetrized and
///    clamped to `[0,1]`;
/// 2. records the objective `Σ λ_m ⟨C(T_m), T_m⟩`;
/// 3. improves each coupling by warm-started proximal steps against the new
///    matrix, keeping the previous coupling when no step improves on it.
///
/// Neither step can raise the objective, so the trace is non-increasing up to
/// rounding. The loop stops once an alternation improves the objective by
/// less than `params.tolerance` or after `params.outer_iterations` alternations.
pub fn gw_barycenter<T: Scalar>(
    matrices: &[SymmetricKernelMatrix<T>],
    measures: &[ProbabilityVector<T>],
    k: usize,
    weights: Option<&ProbabilityVector<T>>,
    params: &GwParams<T>,
) -> Result<Barycenter<T>> {
    params.validate()?;
    if matrices.is_empty() {
        return Err(Error::validation("barycenter needs at least one input matrix"));
    }
    if k == 0 {
        return Err(Error::validation("barycenter resolution K must be >= 1"));
    }
    if measures.len() != matrices.len() {
        return Err(Error::validation(format!(
            "{} matrices but {} measures",
            matrices.len(),
            measures.len()
        )));
    }
    if let Some((m, (a, mu))) = matrices
        .iter()
        .zip(measures)
        .enumerate()
        .find(|(_, (a, mu))| a.size() != mu.len())
    {
        return Err(Error::validation(format!(
            "input {m}: matrix size {} but measure length {}",
            a.size(),
            mu.len()
        )));
    }
    let uniform_inputs = ProbabilityVector::uniform(matrices.len());
    let lambda = weights.unwrap_or(&uniform_inputs);
    if lambda.len() != matrices.len() {
        return Err(Error::validation(format!(
            "{} weights for {} inputs",
            lambda.len(),
            matrices.len()
        )));
    }
    let lambda = lambda.weights();
    let nu = ProbabilityVector::<T>::uniform(k);
    let cells: Vec<T> = (0..k)
        .map(|c| (T::of_usize(c) + T::of(0.5)) / T::of_usize(k))
        .collect();

    let density: T = matrices
        .iter()
        .zip(measures)
        .zip(lambda)
        .map(|((a, mu), &l)| l * mu.weights().dot(&a.values().dot(mu.weights())))
        .sum();
    let mut barycenter = Array2::from_elem((k, k), density.max(T::zero()).min(T::one()));

    // Cells are 1/K apart, so the prior is sharpened by K² to keep its reach
    // at a fixed number of cells.
    let prior_params = GwParams {
        init_sharpness: params.init_sharpness * T::of_usize(k * k),
        ..params.clone()
    };
    let mut plans: Vec<TransportPlan<T>> = matrices
        .par_iter()
        .zip(measures)
        .map(|(a, mu)| {
            let ranks = strict_quantiles(a.values(), mu);
            initial_plan(mu, &nu, &prior_params, Some((&ranks, &cells)))
        })
        .collect::<Result<_>>()?;

    let mut trace: Vec<T> = Vec::new();
    for _ in 0..params.outer_iterations {
        barycenter = update_cells(matrices, &plans, lambda, &barycenter);
        let objective = weighted_objective(matrices, &plans, lambda, &barycenter);
        if !objective.is_finite() {
            return Err(Error::Numeric("barycenter objective is not finite".into()));
        }
        let converged = trace
            .last()
            .is_some_and(|&prev| prev - objective < params.tolerance);
        trace.push(objective);
        if converged {
            break;
        }
        plans = matrices
            .par_iter()
            .zip(plans)
            .map(|(a, plan)| {
                proximal_descent(a.values(), &barycenter, plan, params, params.inner_iterations)
                    .map(|(p, _)| p)
            })
            .collect::<Result<_>>()?;
    }
    Ok(Barycenter {
        matrix: SymmetricKernelMatrix::symmetrized(&barycenter)?,
        objective_trace: trace,
        plans,
    })
}

fn update_cells<T: Scalar>(
    matrices: &[SymmetricKernelMatrix<T>],
    plans: &[TransportPlan<T>],
    lambda: &Array1<T>,
    previous: &Array2<T>,
) -> Array2<T> {
    let k = previous.nrows();
    let mut numerator = Array2::<T>::zeros((k, k));
    let mut denominator = Array2::<T>::zeros((k, k));
    for ((a, plan), &l) in matrices.iter().zip(plans).zip(lambda) {
        let t = plan.matrix();
        let projected = t.t().dot(a.values()).dot(t);
        numerator.scaled_add(l, &projected);
        let c = t.sum_axis(Axis(0));
        Zip::indexed(&mut denominator).for_each(|(p, q), d| *d = *d + l * c[p] * c[q]);
    }
    let half = T::of(0.5);
    Array2::from_shape_fn((k, k), |(p, q)| {
        let den = denominator[[p, q]] + denominator[[q, p]];
        if den > T::zero() {
            ((numerator[[p, q]] + numerator[[q, p]]) / den)
                .max(T::zero())
                .min(T::one())
        } else {
            (previous[[p, q]] + previous[[q, p]]) * half
        }
    })
}

fn weighted_objective<T: Scalar>(
    matrices: &[SymmetricKernelMatrix<T>],
    plans: &[TransportPlan<T>],
    lambda: &Array1<T>,
    barycenter: &Array2<T>,
) -> T {
    matrices
        .iter()
        .zip(plans)
        .zip(lambda)
        .map(|((a, plan), &l)| {
            let cost = cost_order_two(a.values(), barycenter, plan.matrix());
            let e = Zip::from(&cost)
                .and(plan.matrix())
                .fold(T::zero(), |acc, &c, &t| acc + c * t);
            l * e.max(T::zero())
        })
        .sum()
}
