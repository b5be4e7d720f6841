//! Optimal-transport kernel: Sinkhorn scaling, Gromov-Wasserstein distances
//! between symmetric matrices, and Gromov-Wasserstein barycenters.

mod barycenter;
mod gw;
mod sinkhorn;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::ProbabilityVector;
use crate::scalar::Scalar;

pub use barycenter::{gw_barycenter, Barycenter};
pub use gw::{gw_cost_matrix, gw_distance, gw_objective, initial_plan, GwDistance};
pub use sinkhorn::{sinkhorn_log_plan, sinkhorn_plan};

/// Default marginal tolerance checked by [`TransportPlan::check_marginals`].
pub const MARGINAL_TOLERANCE: f64 = 1e-6;

/// Symmetric matrix with entries in `[0,1]`: a step function in matrix form
/// or a graph adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricKernelMatrix<T> {
    values: Array2<T>,
}

impl<T: Scalar> SymmetricKernelMatrix<T> {
    /// Validates exact symmetry and the `[0,1]` range.
    pub fn new(values: Array2<T>) -> Result<Self> {
        let (r, c) = values.dim();
        if r == 0 || r != c {
            return Err(Error::validation(format!(
                "kernel matrix must be square and non-empty, got {r}x{c}"
            )));
        }
        for ((i, j), &v) in values.indexed_iter() {
            if !(v >= T::zero() && v <= T::one()) {
                return Err(Error::validation(format!(
                    "kernel entry ({i},{j}) = {v} outside [0,1]"
                )));
            }
            if v != values[[j, i]] {
                return Err(Error::validation(format!("kernel matrix not symmetric at ({i},{j})")));
            }
        }
        Ok(Self { values })
    }

    /// Averages `values` with its transpose and clamps into `[0,1]`.
    pub fn symmetrized(values: &Array2<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite matrix entry".into()));
        }
        let half = T::of(0.5);
        let n = values.nrows();
        let mut out = Array2::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let v = ((values[[i, j]] + values[[j, i]]) * half)
                    .max(T::zero())
                    .min(T::one());
                out[[i, j]] = v;
                out[[j, i]] = v;
            }
        }
        Self::new(out)
    }

    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn into_values(self) -> Array2<T> {
        self.values
    }
}

/// Nonnegative coupling between two probability vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan<T> {
    matrix: Array2<T>,
    row_marginal: ProbabilityVector<T>,
    col_marginal: ProbabilityVector<T>,
}

impl<T: Scalar> TransportPlan<T> {
    /// Wraps a coupling, checking shape, sign and marginals at `tolerance`.
    pub fn new(
        matrix: Array2<T>,
        row_marginal: ProbabilityVector<T>,
        col_marginal: ProbabilityVector<T>,
        tolerance: T,
    ) -> Result<Self> {
        let plan = Self::unchecked(matrix, row_marginal, col_marginal);
        plan.check_marginals(tolerance)?;
        Ok(plan)
    }

    pub(crate) fn unchecked(
        matrix: Array2<T>,
        row_marginal: ProbabilityVector<T>,
        col_marginal: ProbabilityVector<T>,
    ) -> Self {
        Self {
            matrix,
            row_marginal,
            col_marginal,
        }
    }

    /// The independent coupling `mu ⊗ nu`.
    pub fn product(mu: &ProbabilityVector<T>, nu: &ProbabilityVector<T>) -> Self {
        let a = mu.weights();
        let b = nu.weights();
        let matrix = Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j]);
        Self::unchecked(matrix, mu.clone(), nu.clone())
    }

    pub fn matrix(&self) -> &Array2<T> {
        &self.matrix
    }

    pub fn row_marginal(&self) -> &ProbabilityVector<T> {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &ProbabilityVector<T> {
        &self.col_marginal
    }

    /// Largest absolute deviation of the row or column sums from the marginals.
    pub fn marginal_violation(&self) -> T {
        let rows = self.matrix.sum_axis(ndarray::Axis(1));
        let cols = self.matrix.sum_axis(ndarray::Axis(0));
        let dev = |sums: &ndarray::Array1<T>, target: &ProbabilityVector<T>| {
            sums.iter()
                .zip(target.weights())
                .fold(T::zero(), |m, (&s, &t)| m.max((s - t).abs()))
        };
        dev(&rows, &self.row_marginal).max(dev(&cols, &self.col_marginal))
    }

    pub fn check_marginals(&self, tolerance: T) -> Result<()> {
        let (i, j) = self.matrix.dim();
        if i != self.row_marginal.len() || j != self.col_marginal.len() {
            return Err(Error::validation(format!(
                "plan is {i}x{j} but marginals have lengths {} and {}",
                self.row_marginal.len(),
                self.col_marginal.len()
            )));
        }
        if self.matrix.iter().any(|&t| !(t >= T::zero())) {
            return Err(Error::validation("plan has a negative or NaN entry"));
        }
        let violation = self.marginal_violation();
        if violation > tolerance {
            return Err(Error::validation(format!(
                "plan marginals violated by {violation} (tolerance {tolerance})"
            )));
        }
        Ok(())
    }

    /// Transposed plan with the marginals swapped.
    pub fn transposed(&self) -> Self {
        Self::unchecked(
            self.matrix.t().to_owned(),
            self.col_marginal.clone(),
            self.row_marginal.clone(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GwOrder {
    /// `|x - y|`
    One,
    /// `|x - y|^2`
    #[default]
    Two,
}

/// Hyperparameters of the proximal-point Gromov-Wasserstein solver.
#[derive(Debug, Clone, PartialEq)]
pub struct GwParams<T> {
    pub order: GwOrder,
    /// Proximal (entropic) step strength.
    pub epsilon: T,
    /// Proximal steps for a distance; alternations for a barycenter.
    pub outer_iterations: usize,
    pub sinkhorn_iterations: usize,
    pub tolerance: T,
    pub seed: u64,
    /// Proximal steps per plan update inside a barycenter alternation.
    pub inner_iterations: usize,
    /// Amplitude of the seeded log-perturbation applied to initial couplings.
    pub init_noise: T,
    /// Strength of the weighted-degree rank prior on initial couplings. The
    /// barycenter scales it by K².
    pub init_sharpness: T,
    /// Extra strongly perturbed starts tried by [`gw_distance`].
    pub restarts: usize,
}

impl<T: Scalar> Default for GwParams<T> {
    fn default() -> Self {
        Self {
            order: GwOrder::Two,
            epsilon: T::of(0.05),
            outer_iterations: 50,
            sinkhorn_iterations: 300,
            tolerance: T::of(1e-7),
            seed: 0,
            inner_iterations: 5,
            init_noise: T::of(1e-2),
            init_sharpness: T::of(10.0),
            restarts: 3,
        }
    }
}

impl<T: Scalar> GwParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > T::zero()) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.tolerance > T::zero()) {
            return Err(Error::Config(format!("tolerance must be > 0, got {}", self.tolerance)));
        }
        if self.outer_iterations == 0 || self.sinkhorn_iterations == 0 || self.inner_iterations == 0 {
            return Err(Error::Config("iteration budgets must be positive".into()));
        }
        if !(self.init_noise >= T::zero()) || !(self.init_sharpness >= T::zero()) {
            return Err(Error::Config("initialization parameters must be >= 0".into()));
        }
        Ok(())
    }
}
