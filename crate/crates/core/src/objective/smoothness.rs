use crate::numkit::RngStream;
use crate::objective::ObjectiveError;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct PowerIterationResult<S> {
    pub eigenvalue: S,
    pub iterations: usize,
    /// ‖Av − λv‖ / λ at the returned vector.
    pub residual: S,
}

/// Largest eigenvalue of a symmetric positive semidefinite operator.
///
/// Iterates `v ← Av/‖Av‖` from a fixed pseudo-random start and stops once the
/// Rayleigh quotient changes by at most `tol` relative.
pub fn power_iteration_max_eig<S: Scalar>(
    dim: usize,
    mut apply: impl FnMut(&[S], &mut [S]),
    tol: f64,
    max_iter: usize,
) -> Result<PowerIterationResult<S>, ObjectiveError> {
    let mut rng = RngStream::new(0x5EED, 0);
    let mut v: Vec<S> = (0..dim).map(|_| S::of(rng.next_unit() + 0.5)).collect();
    normalize(&mut v);
    let mut w = vec![S::zero(); dim];
    let mut prev = S::zero();
    let tol = S::of(tol);
    let mut residual = S::infinity();
    for it in 1..=max_iter {
        apply(&v, &mut w);
        let rayleigh: S = v.iter().zip(&w).map(|(a, b)| *a * *b).sum();
        residual = if rayleigh > S::zero() {
            v.iter()
                .zip(&w)
                .map(|(a, b)| {
                    let d = *b - rayleigh * *a;
                    d * d
                })
                .sum::<S>()
                .sqrt()
                / rayleigh
        } else {
            S::zero()
        };
        let norm = w.iter().map(|x| *x * *x).sum::<S>().sqrt();
        if norm == S::zero() {
            return Ok(PowerIterationResult { eigenvalue: S::zero(), iterations: it, residual: S::zero() });
        }
        if it > 1 && (rayleigh - prev).abs() <= tol * rayleigh.abs() {
            return Ok(PowerIterationResult { eigenvalue: rayleigh, iterations: it, residual });
        }
        prev = rayleigh;
        for (a, b) in v.iter_mut().zip(&w) {
            *a = *b / norm;
        }
    }
    Err(ObjectiveError::PowerIteration { iterations: max_iter, residual: residual.as_f64() })
}

fn normalize<S: Scalar>(v: &mut [S]) {
    let n = v.iter().map(|x| *x * *x).sum::<S>().sqrt();
    if n > S::zero() {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_apply(m: &[[f64; 3]; 3]) -> impl FnMut(&[f64], &mut [f64]) + '_ {
        move |v, out| {
            for (i, row) in m.iter().enumerate() {
                out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
            }
        }
    }

    #[test]
    fn diagonal_matrix() {
        let m = [[1.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 2.0]];
        let r = power_iteration_max_eig(3, dense_apply(&m), 1e-12, 10_000).unwrap();
        assert!((r.eigenvalue - 5.0).abs() < 1e-9);
    }

    #[test]
    fn symmetric_matrix_against_closed_form() {
        // eigenvalues of [[2,1,0],[1,2,1],[0,1,2]] are 2 and 2 ± √2
        let m = [[2.0, 1.0, 0.0], [1.0, 2.0, 1.0], [0.0, 1.0, 2.0]];
        let r = power_iteration_max_eig(3, dense_apply(&m), 1e-13, 10_000).unwrap();
        assert!((r.eigenvalue - (2.0 + 2f64.sqrt())).abs() < 1e-9);
    }

    #[test]
    fn reports_failure() {
        let tiny = power_iteration_max_eig(3, dense_apply(&[[1.0, 0.0, 0.0], [0.0, 0.999, 0.0], [0.0, 0.0, 0.0]]), 1e-16, 3);
        assert!(matches!(tiny, Err(ObjectiveError::PowerIteration { iterations: 3, .. })));
    }
}
