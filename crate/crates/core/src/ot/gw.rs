use ndarray::{Array1, Array2, Axis, Zip};

use super::sinkhorn::sinkhorn_log_warm;
use super::{sinkhorn_log_plan, GwOrder, GwParams, SymmetricKernelMatrix, TransportPlan};
use crate::error::{Error, Result};
use crate::graph::ProbabilityVector;
use crate::rng::{derive_seed, splitmix64};
use crate::scalar::Scalar;

/// Sizes above which the order-one objective skips negligible plan entries.
const EXACT_ORDER_ONE_LIMIT: usize = 64;

/// Log-perturbation amplitude of the restart couplings.
const RESTART_NOISE: f64 = 0.5;

/// Largest input size for which every vertex ordering is tried as a start.
const EXHAUSTIVE_VERTEX_SIZE: usize = 4;

fn orderings(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for k in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..=p.len()).map(move |pos| {
                    let mut q = p.clone();
                    q.insert(pos, k);
                    q
                })
            })
            .collect();
    }
    out
}

/// Vertex of the transport polytope filled greedily with rows in `order`
/// against columns in index order.
fn north_west_corner<T: Scalar>(
    mu: &ProbabilityVector<T>,
    nu: &ProbabilityVector<T>,
    order: &[usize],
) -> TransportPlan<T> {
    let mut plan = Array2::zeros((mu.len(), nu.len()));
    let mut col_left = nu.weights().to_vec();
    let mut j = 0;
    for &i in order {
        let mut row_left = mu.weights()[i];
        while row_left > T::zero() && j < col_left.len() {
            let moved = row_left.min(col_left[j]);
            plan[[i, j]] = plan[[i, j]] + moved;
            row_left = row_left - moved;
            col_left[j] = col_left[j] - moved;
            if col_left[j] <= T::zero() {
                j += 1;
            }
        }
        // Rounding leftovers go to the last column.
        if row_left > T::zero() {
            let last = nu.len() - 1;
            plan[[i, last]] = plan[[i, last]] + row_left;
        }
    }
    TransportPlan::unchecked(plan, mu.clone(), nu.clone())
}

/// Linearized Gromov-Wasserstein cost
/// `C[i,i'] = Σ_{j,j'} |w1[i,j] - w2[i',j']|^p · T[j,j']`.
///
/// Order two expands the square into two marginal terms and the bilinear
/// term `-2 · W1 · T · W2`; order one evaluates the quadruple sum directly.
pub fn gw_cost_matrix<T: Scalar>(
    w1: &SymmetricKernelMatrix<T>,
    w2: &SymmetricKernelMatrix<T>,
    plan: &TransportPlan<T>,
    order: GwOrder,
) -> Result<Array2<T>> {
    let t = plan.matrix();
    if t.dim() != (w1.size(), w2.size()) {
        return Err(Error::validation(format!(
            "plan is {}x{} but matrices have sizes {} and {}",
            t.nrows(),
            t.ncols(),
            w1.size(),
            w2.size()
        )));
    }
    Ok(match order {
        GwOrder::Two => cost_order_two(w1.values(), w2.values(), t),
        GwOrder::One => cost_order_one(w1.values(), w2.values(), t),
    })
}

pub(crate) fn cost_order_two<T: Scalar>(w1: &Array2<T>, w2: &Array2<T>, t: &Array2<T>) -> Array2<T> {
    let rows = t.sum_axis(Axis(1));
    let cols = t.sum_axis(Axis(0));
    let left: Array1<T> = w1.mapv(|v| v * v).dot(&rows);
    let right: Array1<T> = w2.mapv(|v| v * v).dot(&cols);
    let mut cost = w1.dot(t).dot(w2);
    let two = T::of(2.0);
    Zip::indexed(&mut cost).for_each(|(i, k), c| *c = left[i] + right[k] - two * *c);
    cost
}

fn cost_order_one<T: Scalar>(w1: &Array2<T>, w2: &Array2<T>, t: &Array2<T>) -> Array2<T> {
    let (ni, nj) = t.dim();
    let support: Vec<(usize, usize, T)> = t
        .indexed_iter()
        .filter(|(_, &v)| v != T::zero())
        .map(|((j, jp), &v)| (j, jp, v))
        .collect();
    Array2::from_shape_fn((ni, nj), |(i, ip)| {
        support
            .iter()
            .map(|&(j, jp, v)| (w1[[i, j]] - w2[[ip, jp]]).abs() * v)
            .sum()
    })
}

/// Unregularized objective `Σ |w1[i,j] - w2[i',j']|^p · T[i,i'] · T[j,j']`.
pub fn gw_objective<T: Scalar>(
    w1: &SymmetricKernelMatrix<T>,
    w2: &SymmetricKernelMatrix<T>,
    plan: &TransportPlan<T>,
    order: GwOrder,
) -> Result<T> {
    let cost = gw_cost_matrix(w1, w2, plan, GwOrder::Two)?;
    Ok(match order {
        GwOrder::Two => inner(&cost, plan.matrix()).max(T::zero()),
        GwOrder::One => objective_order_one(w1.values(), w2.values(), plan.matrix()),
    })
}

fn inner<T: Scalar>(a: &Array2<T>, b: &Array2<T>) -> T {
    Zip::from(a).and(b).fold(T::zero(), |acc, &x, &y| acc + x * y)
}

fn objective_order_one<T: Scalar>(w1: &Array2<T>, w2: &Array2<T>, t: &Array2<T>) -> T {
    let max = t.fold(T::zero(), |m, &v| m.max(v));
    let threshold = if t.nrows().max(t.ncols()) > EXACT_ORDER_ONE_LIMIT {
        max * T::of(1e-10)
    } else {
        T::zero()
    };
    let support: Vec<(usize, usize, T)> = t
        .indexed_iter()
        .filter(|(_, &v)| v > threshold)
        .map(|((i, ip), &v)| (i, ip, v))
        .collect();
    support
        .iter()
        .map(|&(i, ip, u)| {
            let row: T = support
                .iter()
                .map(|&(j, jp, v)| (w1[[i, j]] - w2[[ip, jp]]).abs() * v)
                .sum();
            row * u
        })
        .sum()
}

fn unit_noise(seed: u64, i: usize, j: usize) -> f64 {
    let h = splitmix64(derive_seed(seed, &[i as u64, j as u64]));
    (h >> 11) as f64 / (1u64 << 53) as f64 - 0.5
}

/// Initial coupling between `mu` and `nu`.
///
/// Starts from the product coupling, multiplies entry `(i,k)` by
/// `exp(noise · (u(i,k) + u(k,i)))` with `u` a seeded hash in `[-1/2, 1/2)`,
/// and, when `prior` gives rank positions `(p, q)` in `[0,1]` for both sides,
/// by `exp(-sharpness · (p_i - q_k)^2)`. The result is projected back onto the
/// marginals. The perturbation is symmetric under swapping the two sides, so
/// the transposed problem starts from the transposed coupling.
pub fn initial_plan<T: Scalar>(
    mu: &ProbabilityVector<T>,
    nu: &ProbabilityVector<T>,
    params: &GwParams<T>,
    prior: Option<(&[T], &[T])>,
) -> Result<TransportPlan<T>> {
    let perturbed = params.init_noise > T::zero() || prior.is_some();
    if !perturbed {
        return Ok(TransportPlan::product(mu, nu));
    }
    let (a, b) = (mu.weights(), nu.weights());
    let noise = params.init_noise;
    let log_kernel = Array2::from_shape_fn((a.len(), b.len()), |(i, k)| {
        let mut v = a[i].ln() + b[k].ln();
        if noise > T::zero() {
            let u = unit_noise(params.seed, i, k) + unit_noise(params.seed, k, i);
            v = v + noise * T::of(u);
        }
        if let Some((p, q)) = prior {
            let d = p[i] - q[k];
            v = v - params.init_sharpness * d * d;
        }
        v
    });
    sinkhorn_log_plan(&log_kernel, mu, nu, params.sinkhorn_iterations, params.tolerance)
}

/// Mid-rank quantiles of `scores` under the measure `mu`: the mass strictly
/// below a score plus half the mass tied with it. Near-equal scores tie.
pub(crate) fn measure_quantiles<T: Scalar>(scores: &Array1<T>, mu: &ProbabilityVector<T>) -> Vec<T> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| scores[x].partial_cmp(&scores[y]).expect("finite scores"));
    let w = mu.weights();
    let tie = |x: T, y: T| (x - y).abs() <= T::of(1e-12) * (T::one() + x.abs().max(y.abs()));
    let mut q = vec![T::zero(); n];
    let mut below = T::zero();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && tie(scores[order[start]], scores[order[end]]) {
            end += 1;
        }
        let mass: T = order[start..end].iter().map(|&i| w[i]).sum();
        let mid = below + mass * T::of(0.5);
        for &i in &order[start..end] {
            q[i] = mid;
        }
        below = below + mass;
        start = end;
    }
    q
}

/// Quantile of each node in a strict order: weighted degree, then the weighted
/// two- and three-step walk sums, then index.
pub(crate) fn strict_quantiles<T: Scalar>(a: &Array2<T>, mu: &ProbabilityVector<T>) -> Vec<T> {
    let w = mu.weights();
    let mut walks = vec![a.dot(w)];
    for _ in 0..2 {
        let next = a.dot(&(walks.last().expect("one walk vector") * w));
        walks.push(next);
    }
    // Quantize so that rounding noise does not split genuine ties.
    let keys: Vec<Vec<i64>> = (0..w.len())
        .map(|i| {
            walks
                .iter()
                .map(|s| {
                    let scale = s.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
                    let x = if scale > T::zero() { s[i] / scale } else { T::zero() };
                    (x.to_f64().expect("finite walk sum") * 1e9).round() as i64
                })
                .collect()
        })
        .collect();
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&x, &y| keys[x].cmp(&keys[y]).then(x.cmp(&y)));
    let mut q = vec![T::zero(); w.len()];
    let mut below = T::zero();
    for i in order {
        q[i] = below + w[i] * T::of(0.5);
        below = below + w[i];
    }
    q
}

/// Proximal-point descent from `start`: each step solves the entropic
/// problem with kernel `T ∘ exp(-C(T)/ε)` where `C` is the order-two cost.
/// Returns the plan with the lowest order-two objective seen (the start
/// included) and that objective.
pub(crate) fn proximal_descent<T: Scalar>(
    w1: &Array2<T>,
    w2: &Array2<T>,
    start: TransportPlan<T>,
    params: &GwParams<T>,
    steps: usize,
) -> Result<(TransportPlan<T>, T)> {
    let floor = T::kernel_floor();
    let mut cost = cost_order_two(w1, w2, start.matrix());
    let mut objective = inner(&cost, start.matrix());
    let mut best = (start.clone(), objective);
    let mut plan = start;
    let mut potentials: Option<Array1<T>> = None;
    for _ in 0..steps {
        let log_kernel = Zip::from(plan.matrix())
            .and(&cost)
            .map_collect(|&t, &c| t.max(floor).ln() - c / params.epsilon);
        let (next_plan, g) = sinkhorn_log_warm(
            &log_kernel,
            plan.row_marginal(),
            plan.col_marginal(),
            params.sinkhorn_iterations,
            params.tolerance,
            potentials.as_ref(),
        )?;
        plan = next_plan;
        potentials = Some(g);
        cost = cost_order_two(w1, w2, plan.matrix());
        let next = inner(&cost, plan.matrix());
        if !next.is_finite() {
            return Err(Error::Numeric("Gromov-Wasserstein objective is not finite".into()));
        }
        if next < best.1 {
            best = (plan.clone(), next);
        }
        let change = (objective - next).abs();
        objective = next;
        if change < params.tolerance {
            break;
        }
    }
    let (plan, value) = best;
    Ok((plan, value.max(T::zero())))
}

/// Runs the proximal descent from several deterministic couplings and keeps
/// the best: the noisy product coupling, the weighted-degree rank prior, and
/// `params.restarts` strongly perturbed product couplings (these matter for
/// inputs with many symmetries, where the product coupling is stationary).
/// Inputs with at most [`EXHAUSTIVE_VERTEX_SIZE`] nodes on both sides also
/// start from the north-west-corner coupling of every ordering of the first
/// input's nodes, so the result is never worse than a permutation coupling.
fn solve_from_starts<T: Scalar>(
    w1: &Array2<T>,
    mu1: &ProbabilityVector<T>,
    w2: &Array2<T>,
    mu2: &ProbabilityVector<T>,
    params: &GwParams<T>,
) -> Result<(TransportPlan<T>, T)> {
    let r1 = measure_quantiles(&w1.dot(mu1.weights()), mu1);
    let r2 = measure_quantiles(&w2.dot(mu2.weights()), mu2);
    let mut starts = vec![
        initial_plan(mu1, mu2, params, None)?,
        initial_plan(mu1, mu2, params, Some((&r1, &r2)))?,
    ];
    for r in 0..params.restarts {
        let strong = GwParams {
            init_noise: T::of(RESTART_NOISE),
            seed: derive_seed(params.seed, &[r as u64]),
            ..params.clone()
        };
        starts.push(initial_plan(mu1, mu2, &strong, None)?);
    }
    if mu1.len().max(mu2.len()) <= EXHAUSTIVE_VERTEX_SIZE {
        for order in orderings(mu1.len()) {
            starts.push(north_west_corner(mu1, mu2, &order));
        }
    }
    let mut best: Option<(TransportPlan<T>, T)> = None;
    for start in starts {
        let candidate = proximal_descent(w1, w2, start, params, params.outer_iterations)?;
        if best.as_ref().is_none_or(|b| candidate.1 < b.1) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one start"))
}

/// Result of [`gw_distance`].
#[derive(Debug, Clone)]
pub struct GwDistance<T> {
    /// `d_{gw,1}` for order one, the squared `d²_{gw,2}` for order two.
    pub value: T,
    pub plan: TransportPlan<T>,
}

/// Gromov-Wasserstein discrepancy between two measured symmetric matrices.
///
/// The coupling is always optimized on the order-two objective by proximal
/// point iterations; `params.order` selects which unregularized objective is
/// reported at the final coupling.
pub fn gw_distance<T: Scalar>(
    w1: &SymmetricKernelMatrix<T>,
    mu1: &ProbabilityVector<T>,
    w2: &SymmetricKernelMatrix<T>,
    mu2: &ProbabilityVector<T>,
    params: &GwParams<T>,
) -> Result<GwDistance<T>> {
    params.validate()?;
    if w1.size() != mu1.len() || w2.size() != mu2.len() {
        return Err(Error::validation(format!(
            "measure lengths ({}, {}) do not match matrix sizes ({}, {})",
            mu1.len(),
            mu2.len(),
            w1.size(),
            w2.size()
        )));
    }
    let forward = solve_from_starts(w1.values(), mu1, w2.values(), mu2, params)?;
    let backward = solve_from_starts(w2.values(), mu2, w1.values(), mu1, params)?;
    let (plan, squared) = if backward.1 < forward.1 {
        (backward.0.transposed(), backward.1)
    } else {
        forward
    };
    let value = match params.order {
        GwOrder::Two => squared,
        GwOrder::One => objective_order_one(w1.values(), w2.values(), plan.matrix()),
    };
    Ok(GwDistance { value, plan })
}
