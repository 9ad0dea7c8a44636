//! Dense complex linear solves for the small matching systems.

use crate::error::{Error, Result};
use crate::scalar::{Cplx, Real};

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
/// `a` is n×n row-major; the solution overwrites `b`.
pub(crate) fn solve_in_place<T: Real>(
    n: usize,
    a: &mut [Cplx<T>],
    b: &mut [Cplx<T>],
) -> Result<()> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[i * n + col]
                    .norm()
                    .partial_cmp(&a[j * n + col].norm())
                    .unwrap()
            })
            .unwrap();
        if a[pivot * n + col].norm() == T::zero() {
            return Err(Error::Singular);
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        let p = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / p;
            if f.norm() == T::zero() {
                continue;
            }
            for j in col..n {
                let v = a[col * n + j];
                a[row * n + j] = a[row * n + j] - f * v;
            }
            let v = b[col];
            b[row] = b[row] - f * v;
        }
    }
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in row + 1..n {
            acc = acc - a[row * n + j] * b[j];
        }
        b[row] = acc / a[row * n + row];
    }
    if b.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn solves_permuted_system() {
        let c = |r, i| Complex64::new(r, i);
        let mut a = vec![c(0.0, 0.0), c(2.0, 1.0), c(1.0, 0.0), c(3.0, -1.0)];
        let x = [c(1.0, 2.0), c(-0.5, 0.25)];
        let mut b = vec![a[0] * x[0] + a[1] * x[1], a[2] * x[0] + a[3] * x[1]];
        solve_in_place(2, &mut a, &mut b).unwrap();
        assert!((b[0] - x[0]).norm() < 1e-14 && (b[1] - x[1]).norm() < 1e-14);
    }

    #[test]
    fn singular_detected() {
        let c = |r| Complex64::new(r, 0.0);
        let mut a = vec![c(1.0), c(2.0), c(2.0), c(4.0)];
        let mut b = vec![c(1.0), c(1.0)];
        assert!(solve_in_place(2, &mut a, &mut b).is_err());
    }
}
