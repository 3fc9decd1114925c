//! Small dense-vector kernels and a matrix-free conjugate-gradient solver.

/// Outcome of a converged [`conjugate_gradient`] call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Failure of [`conjugate_gradient`] to reach the requested tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgFailure {
    pub iterations: usize,
    pub relative_residual: f64,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += s * x`
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

/// Solves `A x = b` for symmetric positive definite `A` given as a closure
/// `apply(x, out)` writing `A x` into `out`.
///
/// `x` holds the initial guess on entry and the solution on exit. Stops once
/// `|b - A x| <= tol * |b|`.
pub fn conjugate_gradient(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgStats, CgFailure> {
    let n = b.len();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut rr = dot(&r, &r);
    let threshold = tol * b_norm;
    if rr.sqrt() <= threshold {
        return Ok(CgStats {
            iterations: 0,
            relative_residual: rr.sqrt() / b_norm,
        });
    }
    let mut p = r.clone();
    let mut ap = ax;
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(CgFailure {
                iterations: it,
                relative_residual: rr.sqrt() / b_norm,
            });
        }
        let step = rr / pap;
        axpy(step, &p, x);
        axpy(-step, &ap, &mut r);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= threshold {
            return Ok(CgStats {
                iterations: it,
                relative_residual: rr_new.sqrt() / b_norm,
            });
        }
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    Err(CgFailure {
        iterations: max_iter,
        relative_residual: rr.sqrt() / b_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(x: &[f64], out: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let mut v = 4.0 * x[i];
            if i > 0 {
                v -= x[i - 1];
            }
            if i + 1 < n {
                v -= x[i + 1];
            }
            out[i] = v;
        }
    }

    #[test]
    fn solves_tridiagonal_system() {
        let n = 50;
        let truth: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; n];
        tridiag(&truth, &mut b);
        let mut x = vec![0.0; n];
        let stats = conjugate_gradient(tridiag, &b, &mut x, 1e-12, 10 * n).unwrap();
        assert!(stats.relative_residual <= 1e-12);
        for (a, t) in x.iter().zip(&truth) {
            assert!((a - t).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let mut x = vec![1.0; 4];
        conjugate_gradient(tridiag, &[0.0; 4], &mut x, 1e-10, 40).unwrap();
        assert_eq!(x, vec![0.0; 4]);
    }

    #[test]
    fn exact_initial_guess_needs_no_iterations() {
        let truth = vec![1.0, 2.0, 3.0];
        let mut b = vec![0.0; 3];
        tridiag(&truth, &mut b);
        let mut x = truth.clone();
        let stats = conjugate_gradient(tridiag, &b, &mut x, 1e-10, 30).unwrap();
        assert_eq!(stats.iterations, 0);
    }

    #[test]
    fn indefinite_operator_reported() {
        let neg = |x: &[f64], out: &mut [f64]| {
            for (o, v) in out.iter_mut().zip(x) {
                *o = -v;
            }
        };
        assert!(conjugate_gradient(neg, &[1.0, 1.0], &mut [0.0, 0.0], 1e-10, 20).is_err());
    }
}
