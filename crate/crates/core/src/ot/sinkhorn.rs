use ndarray::{Array1, Array2, Axis};

use super::TransportPlan;
use crate::error::{Error, Result};
use crate::graph::ProbabilityVector;
use crate::scalar::Scalar;

/// Scales a positive kernel to the coupling `diag(a) · kernel · diag(b)` with
/// marginals `mu` and `nu`.
///
/// Row and column scalings alternate until the row-marginal violation (the
/// columns are exact after each sweep) drops below `tolerance` or
/// `iterations` sweeps have run. Entries below the kernel floor are raised to it.
pub fn sinkhorn_plan<T: Scalar>(
    kernel: &Array2<T>,
    mu: &ProbabilityVector<T>,
    nu: &ProbabilityVector<T>,
    iterations: usize,
    tolerance: T,
) -> Result<TransportPlan<T>> {
    check_shapes(kernel.dim(), mu, nu)?;
    if kernel.iter().any(|k| !k.is_finite()) {
        return Err(Error::Numeric("non-finite kernel entry".into()));
    }
    let floor = T::kernel_floor();
    let kernel = kernel.mapv(|k| k.max(floor));
    scale(kernel, mu, nu, iterations, tolerance).map(|(plan, _)| plan)
}

/// Same as [`sinkhorn_plan`] for a kernel given by its entrywise logarithm.
///
/// Rows and then columns are shifted by their maxima before exponentiation;
/// the shifts are diagonal scalings and do not change the resulting plan.
pub fn sinkhorn_log_plan<T: Scalar>(
    log_kernel: &Array2<T>,
    mu: &ProbabilityVector<T>,
    nu: &ProbabilityVector<T>,
    iterations: usize,
    tolerance: T,
) -> Result<TransportPlan<T>> {
    sinkhorn_log_warm(log_kernel, mu, nu, iterations, tolerance, None).map(|(plan, _)| plan)
}

/// Log-kernel scaling warm-started from column potentials `g` (the log of a
/// previous column scaling). Returns the plan and the column potentials that
/// produced it, so a sequence of related problems can reuse them.
pub(crate) fn sinkhorn_log_warm<T: Scalar>(
    log_kernel: &Array2<T>,
    mu: &ProbabilityVector<T>,
    nu: &ProbabilityVector<T>,
    iterations: usize,
    tolerance: T,
    potentials: Option<&Array1<T>>,
) -> Result<(TransportPlan<T>, Array1<T>)> {
    check_shapes(log_kernel.dim(), mu, nu)?;
    if log_kernel.iter().any(|k| k.is_nan() || *k == T::infinity()) {
        return Err(Error::Numeric("log-kernel entry is NaN or +inf".into()));
    }
    let mut shifted = log_kernel.to_owned();
    let mut g = match potentials {
        Some(g) if g.len() == nu.len() && g.iter().all(|v| v.is_finite()) => g.clone(),
        _ => Array1::zeros(nu.len()),
    };
    for mut row in shifted.rows_mut() {
        row.zip_mut_with(&g, |v, &gj| *v = *v + gj);
        let m = row.fold(T::neg_infinity(), |m, &v| m.max(v));
        if m.is_finite() {
            row.mapv_inplace(|v| v - m);
        }
    }
    for (mut col, gj) in shifted.columns_mut().into_iter().zip(g.iter_mut()) {
        let m = col.fold(T::neg_infinity(), |m, &v| m.max(v));
        if m.is_finite() {
            col.mapv_inplace(|v| v - m);
            *gj = *gj - m;
        }
    }
    let floor = T::kernel_floor();
    let kernel = shifted.mapv(|v| v.exp().max(floor));
    let (plan, b) = scale(kernel, mu, nu, iterations, tolerance)?;
    // Columns without mass keep their previous potential.
    g.zip_mut_with(&b, |gj, &bj| {
        if bj > T::zero() {
            *gj = *gj + bj.ln();
        }
    });
    Ok((plan, g))
}

fn check_shapes<T: Scalar>(
    dim: (usize, usize),
    mu: &ProbabilityVector<T>,
    nu: &ProbabilityVector<T>,
) -> Result<()> {
    if dim != (mu.len(), nu.len()) {
        return Err(Error::validation(format!(
            "kernel is {}x{} but marginals have lengths {} and {}",
            dim.0,
            dim.1,
            mu.len(),
            nu.len()
        )));
    }
    Ok(())
}

fn safe_ratio<T: Scalar>(num: T, den: T) -> T {
    if num == T::zero() {
        T::zero()
    } else {
        num / den
    }
}

fn scale<T: Scalar>(
    kernel: Array2<T>,
    mu: &ProbabilityVector<T>,
    nu: &ProbabilityVector<T>,
    iterations: usize,
    tolerance: T,
) -> Result<(TransportPlan<T>, Array1<T>)> {
    let mu_w = mu.weights();
    let nu_w = nu.weights();
    let (rows, cols) = kernel.dim();
    let kernel = kernel.as_standard_layout().into_owned();
    let k = kernel.as_slice().expect("standard layout");
    let mut a = Array1::<T>::ones(rows);
    let mut b = Array1::<T>::ones(cols);
    // Plain row-major loops: the transposed product as an axpy per row keeps
    // memory access contiguous, which dominates the cost on small kernels.
    let mut kta = vec![T::zero(); cols];
    for sweep in 0..iterations.max(1) {
        let mut violation = T::zero();
        for ((ai, row), &m) in a.iter_mut().zip(k.chunks_exact(cols.max(1))).zip(mu_w) {
            let kb = row.iter().zip(&b).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
            violation = violation.max((*ai * kb - m).abs());
            *ai = safe_ratio(m, kb);
        }
        if sweep > 0 && violation < tolerance {
            break;
        }
        kta.iter_mut().for_each(|v| *v = T::zero());
        for (&ai, row) in a.iter().zip(k.chunks_exact(cols.max(1))) {
            for (acc, &x) in kta.iter_mut().zip(row) {
                *acc = *acc + ai * x;
            }
        }
        b.iter_mut()
            .zip(&kta)
            .zip(nu_w)
            .for_each(|((bj, &kt), &n)| *bj = safe_ratio(n, kt));
    }
    let mut plan = kernel;
    plan.axis_iter_mut(Axis(0))
        .zip(&a)
        .for_each(|(mut row, &ai)| {
            row.iter_mut().zip(&b).for_each(|(p, &bj)| *p = *p * ai * bj);
        });
    if plan.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numeric("Sinkhorn scaling overflowed".into()));
    }
    round_to_marginals(&mut plan, mu_w, nu_w);
    Ok((TransportPlan::unchecked(plan, mu.clone(), nu.clone()), b))
}

/// Moves a nearly feasible coupling onto the marginals: rows and then columns
/// whose sums exceed the target are scaled down, and the remaining deficits
/// are filled with the rank-one coupling of the row and column deficits.
/// The L1 change is at most twice the L1 marginal violation.
pub(crate) fn round_to_marginals<T: Scalar>(plan: &mut Array2<T>, mu: &Array1<T>, nu: &Array1<T>) {
    let rows = plan.sum_axis(Axis(1));
    for ((mut row, &r), &m) in plan.axis_iter_mut(Axis(0)).zip(&rows).zip(mu) {
        if r > m {
            let f = safe_ratio(m, r);
            row.mapv_inplace(|v| v * f);
        }
    }
    let cols = plan.sum_axis(Axis(0));
    for ((mut col, &c), &n) in plan.axis_iter_mut(Axis(1)).zip(&cols).zip(nu) {
        if c > n {
            let f = safe_ratio(n, c);
            col.mapv_inplace(|v| v * f);
        }
    }
    let row_deficit: Array1<T> = mu - &plan.sum_axis(Axis(1));
    let col_deficit: Array1<T> = nu - &plan.sum_axis(Axis(0));
    let row_deficit = row_deficit.mapv(|d| d.max(T::zero()));
    let col_deficit = col_deficit.mapv(|d| d.max(T::zero()));
    let total = row_deficit.sum();
    if total > T::zero() {
        for (mut row, &dr) in plan.axis_iter_mut(Axis(0)).zip(&row_deficit) {
            row.zip_mut_with(&col_deficit, |v, &dc| *v = *v + dr * dc / total);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn pv(w: &[f64]) -> ProbabilityVector<f64> {
        ProbabilityVector::new(w.to_vec()).unwrap()
    }

    #[test]
    fn product_kernel_is_a_fixed_point() {
        let mu = pv(&[0.2, 0.3, 0.5]);
        let nu = pv(&[0.6, 0.4]);
        let kernel = Array2::from_shape_fn((3, 2), |(i, j)| mu.weights()[i] * nu.weights()[j]);
        let plan = sinkhorn_plan(&kernel, &mu, &nu, 1, 1e-12).unwrap();
        for (p, k) in plan.matrix().iter().zip(&kernel) {
            assert!((p - k).abs() < 1e-15);
        }
    }

    #[test]
    fn one_by_one_is_forced() {
        let plan = sinkhorn_plan(&array![[7.5]], &pv(&[1.0]), &pv(&[1.0]), 10, 1e-9).unwrap();
        assert!((plan.matrix()[[0, 0]] - 1.0).abs() < 1e-15);
    }

    // Minimizes KL(T || K) over T(t) = [[t, .5-t], [.5-t, t]] on a fine grid.
    fn grid_oracle_2x2(kernel: &Array2<f64>) -> f64 {
        let f = |t: f64| {
            let cells = [(t, kernel[[0, 0]]), (0.5 - t, kernel[[0, 1]]), (0.5 - t, kernel[[1, 0]]), (t, kernel[[1, 1]])];
            cells.iter().map(|&(x, k)| if x > 0.0 { x * (x.ln() - k.ln()) } else { 0.0 }).sum::<f64>()
        };
        let steps = 500_000;
        (0..=steps)
            .map(|s| 0.5 * s as f64 / steps as f64)
            .min_by(|&x, &y| f(x).partial_cmp(&f(y)).unwrap())
            .unwrap()
    }

    #[test]
    fn symmetric_scaling_matches_grid_oracle() {
        let kernel = array![[2.0, 1.0], [1.0, 2.0]];
        let u = pv(&[0.5, 0.5]);
        let plan = sinkhorn_plan(&kernel, &u, &u, 1000, 1e-14).unwrap();
        let t = grid_oracle_2x2(&kernel);
        let expected = array![[t, 0.5 - t], [0.5 - t, t]];
        for (p, e) in plan.matrix().iter().zip(&expected) {
            assert!((p - e).abs() < 1e-6, "{p} vs {e}");
        }
    }

    #[test]
    fn log_kernel_agrees_with_plain_kernel() {
        let kernel = array![[0.3, 1.2, 0.7], [2.0, 0.1, 0.4]];
        let mu = pv(&[0.4, 0.6]);
        let nu = pv(&[0.2, 0.3, 0.5]);
        let a = sinkhorn_plan(&kernel, &mu, &nu, 500, 1e-12).unwrap();
        let b = sinkhorn_log_plan(&kernel.mapv(f64::ln), &mu, &nu, 500, 1e-12).unwrap();
        for (x, y) in a.matrix().iter().zip(b.matrix()) {
            assert!((x - y).abs() < 1e-10);
        }
        a.check_marginals(1e-10).unwrap();
    }

    #[test]
    fn log_kernel_survives_extreme_ranges() {
        let log_kernel = array![[-2000.0, 0.0], [-1000.0, -3000.0]];
        let u = pv(&[0.5, 0.5]);
        let plan = sinkhorn_log_plan(&log_kernel, &u, &u, 500, 1e-9).unwrap();
        plan.check_marginals(1e-6).unwrap();
    }

    #[test]
    fn zero_mass_rows_stay_empty() {
        let mu = pv(&[0.0, 1.0]);
        let nu = pv(&[0.5, 0.5]);
        let plan = sinkhorn_plan(&array![[1.0, 2.0], [3.0, 1.0]], &mu, &nu, 100, 1e-12).unwrap();
        assert_eq!(plan.matrix().row(0).sum(), 0.0);
        plan.check_marginals(1e-9).unwrap();
    }

    #[test]
    fn rejects_bad_input() {
        let u = pv(&[0.5, 0.5]);
        assert!(matches!(
            sinkhorn_plan(&array![[1.0, f64::NAN], [1.0, 1.0]], &u, &u, 10, 1e-9),
            Err(Error::Numeric(_))
        ));
        assert!(sinkhorn_plan(&array![[1.0, 1.0]], &u, &u, 10, 1e-9).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let u = ProbabilityVector::<f32>::uniform(2);
        let plan = sinkhorn_plan(&array![[2.0f32, 1.0], [1.0, 2.0]], &u, &u, 200, 1e-6).unwrap();
        assert!((plan.matrix()[[0, 0]] - 1.0 / 3.0).abs() < 1e-5);
    }
}
