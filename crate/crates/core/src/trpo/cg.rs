use super::TrpoError;
use crate::numkit::{axpy, dot, norm};

#[derive(Debug, Clone, PartialEq)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `‖b − A x‖` of the returned iterate.
    pub residual_norm: f64,
}

/// Conjugate gradient for `A x = b` from `x = 0`, stopping once
/// `‖r‖ ≤ tol · ‖b‖` or after `iters` iterations.
pub fn conjugate_gradient<F>(apply_a: F, b: &[f64], iters: usize, tol: f64) -> Result<CgResult, TrpoError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, TrpoError>,
{
    conjugate_gradient_traced(apply_a, b, iters, tol, |_| {})
}

/// As [`conjugate_gradient`], calling `on_iterate` with every iterate
/// including the initial zero vector.
pub fn conjugate_gradient_traced<F, G>(
    mut apply_a: F,
    b: &[f64],
    iters: usize,
    tol: f64,
    mut on_iterate: G,
) -> Result<CgResult, TrpoError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, TrpoError>,
    G: FnMut(&[f64]),
{
    if b.iter().any(|v| !v.is_finite()) {
        return Err(TrpoError::NonFinite("conjugate gradient right-hand side".into()));
    }
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = b.to_vec();
    let mut rr = dot(&r, &r);
    let target = tol * norm(b);
    on_iterate(&x);
    let mut k = 0;
    while k < iters && rr.sqrt() > target {
        let ap = apply_a(&p)?;
        let pap = dot(&p, &ap);
        if !pap.is_finite() || !rr.is_finite() {
            return Err(TrpoError::NonFinite(format!("conjugate gradient iteration {k}")));
        }
        if pap <= 0.0 {
            // Not positive definite along p; keep the current iterate.
            break;
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for (pi, &ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
        k += 1;
        on_iterate(&x);
    }
    Ok(CgResult {
        x,
        iterations: k,
        residual_norm: rr.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::DenseMatrix;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn dense(a: &DenseMatrix) -> impl FnMut(&[f64]) -> Result<Vec<f64>, TrpoError> + '_ {
        move |v| Ok(a.matvec(v)?)
    }

    fn random_spd(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = seeded(seed);
        let m = DenseMatrix::from_vec(n, n, (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let mut a = m.transpose().matmul(&m).unwrap();
        for i in 0..n {
            a.set(i, i, a.get(i, i) + 0.5);
        }
        a
    }

    #[test]
    fn identity_converges_in_one_iteration() {
        let a = DenseMatrix::identity(3);
        let res = conjugate_gradient(dense(&a), &[1.0, -2.0, 3.0], 10, 1e-12).unwrap();
        assert_eq!(res.iterations, 1);
        assert_eq!(res.x, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn two_by_two_hand_solution() {
        let a = DenseMatrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let res = conjugate_gradient(dense(&a), &[1.0, 2.0], 10, 1e-14).unwrap();
        assert!((res.x[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((res.x[1] - 7.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn random_spd_matches_direct_solve() {
        let a = random_spd(8, 3);
        let b: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin()).collect();
        let res = conjugate_gradient(dense(&a), &b, 50, 1e-14).unwrap();
        let direct = a.solve(&b).unwrap();
        for (x, y) in res.x.iter().zip(&direct) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let a = DenseMatrix::identity(2);
        let res = conjugate_gradient(dense(&a), &[0.0, 0.0], 10, 1e-10).unwrap();
        assert_eq!(res.iterations, 0);
        assert_eq!(res.x, vec![0.0, 0.0]);
    }

    #[test]
    fn non_finite_operator_aborts() {
        let res = conjugate_gradient(|v| Ok(v.iter().map(|_| f64::NAN).collect()), &[1.0], 5, 1e-10);
        assert!(matches!(res, Err(TrpoError::NonFinite(_))));
    }

    #[test]
    fn iteration_cap_respected() {
        let a = random_spd(8, 4);
        let res = conjugate_gradient(dense(&a), &[1.0; 8], 3, 0.0).unwrap();
        assert_eq!(res.iterations, 3);
    }

    proptest! {
        #[test]
        fn a_norm_error_never_increases(seed in 0u64..5000, n in 2usize..9) {
            let a = random_spd(n, seed);
            let mut rng = seeded(seed + 1);
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let exact = a.solve(&b).unwrap();
            let mut errs = Vec::new();
            conjugate_gradient_traced(dense(&a), &b, n, 0.0, |x| {
                let e: Vec<f64> = x.iter().zip(&exact).map(|(p, q)| p - q).collect();
                errs.push(dot(&e, &a.matvec(&e).unwrap()));
            })
            .unwrap();
            for w in errs.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-15);
            }
        }
    }
}
