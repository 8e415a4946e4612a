//! Dense least squares via Householder QR.
//!
//! Columns are processed in order without pivoting. A column whose norm after
//! projecting out the earlier columns falls below `sqrt(eps)` times its
//! original norm is treated as aliased.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// What to do when a column is (numerically) a combination of earlier columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankPolicy {
    #[default]
    Error,
    /// Give aliased columns a zero coefficient and solve for the rest.
    DropAliased,
}

#[derive(Debug, Clone)]
pub struct LeastSquaresFit<T> {
    pub coef: Array1<T>,
    pub aliased: Vec<bool>,
}

/// Minimizes `||y - X b||` over `b`.
pub fn least_squares<T: Scalar>(
    x: ArrayView2<T>,
    y: ArrayView1<T>,
    policy: RankPolicy,
) -> Result<LeastSquaresFit<T>> {
    let (n, d) = x.dim();
    if y.len() != n {
        return Err(Error::LengthMismatch(format!(
            "design has {n} rows, response has {}",
            y.len()
        )));
    }
    let tol = T::epsilon().sqrt();
    let mut a: Array2<T> = x.to_owned();
    let mut b: Array1<T> = y.to_owned();
    let mut aliased = vec![false; d];
    // accepted[k] = column index of the k-th pivot row of R
    let mut accepted: Vec<usize> = Vec::with_capacity(d.min(n));

    for j in 0..d {
        let r = accepted.len();
        let original = norm(a.column(j).iter().copied());
        let col_norm = if r < n {
            norm(a.column(j).iter().skip(r).copied())
        } else {
            T::zero()
        };
        if original == T::zero() || col_norm <= tol * original {
            match policy {
                RankPolicy::Error => return Err(Error::RankDeficient(j)),
                RankPolicy::DropAliased => {
                    aliased[j] = true;
                    continue;
                }
            }
        }

        // Householder vector v = x + sign(x0) ||x|| e0, stored in place.
        let x0 = a[[r, j]];
        let alpha = if x0 >= T::zero() { -col_norm } else { col_norm };
        let mut v: Vec<T> = (r..n).map(|i| a[[i, j]]).collect();
        v[0] -= alpha;
        let vnorm_sq: T = v.iter().map(|&t| t * t).sum();
        if vnorm_sq > T::zero() {
            for k in (j + 1)..d {
                reflect(&v, vnorm_sq, &mut a, r, k);
            }
            let dot: T = v.iter().zip(b.iter().skip(r)).map(|(&vi, &bi)| vi * bi).sum();
            let scale = (dot + dot) / vnorm_sq;
            for (bi, &vi) in b.iter_mut().skip(r).zip(v.iter()) {
                *bi -= scale * vi;
            }
        }
        a[[r, j]] = alpha;
        for i in (r + 1)..n {
            a[[i, j]] = T::zero();
        }
        accepted.push(j);
    }

    // Back substitution on the accepted columns.
    let m = accepted.len();
    let mut sol = vec![T::zero(); m];
    for row in (0..m).rev() {
        let mut acc = b[row];
        for (col_pos, &col) in accepted.iter().enumerate().skip(row + 1) {
            acc -= a[[row, col]] * sol[col_pos];
        }
        sol[row] = acc / a[[row, accepted[row]]];
    }
    let mut coef = Array1::zeros(d);
    for (pos, &col) in accepted.iter().enumerate() {
        coef[col] = sol[pos];
    }
    Ok(LeastSquaresFit { coef, aliased })
}

fn reflect<T: Scalar>(v: &[T], vnorm_sq: T, a: &mut Array2<T>, r: usize, k: usize) {
    let mut col = a.column_mut(k);
    let dot: T = v
        .iter()
        .zip(col.iter().skip(r))
        .map(|(&vi, &ai)| vi * ai)
        .sum();
    let scale = (dot + dot) / vnorm_sq;
    for (ai, &vi) in col.iter_mut().skip(r).zip(v.iter()) {
        *ai -= scale * vi;
    }
}

fn norm<T: Scalar>(xs: impl Iterator<Item = T>) -> T {
    // scaled to avoid overflow on large entries
    let vals: Vec<T> = xs.collect();
    let big = vals.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    if big == T::zero() {
        return T::zero();
    }
    let ss: T = vals.iter().map(|&v| (v / big) * (v / big)).sum();
    big * ss.sqrt()
}

/// Prepends a column of ones.
pub fn with_intercept<T: Scalar>(x: ArrayView2<T>) -> Array2<T> {
    let (n, d) = x.dim();
    let mut out = Array2::ones((n, d + 1));
    out.slice_mut(ndarray::s![.., 1..]).assign(&x);
    out
}

/// Column means and (population-free) sample standard deviations.
pub fn column_moments<T: Scalar>(x: ArrayView2<T>) -> (Vec<T>, Vec<T>) {
    let n = x.nrows();
    let means: Vec<T> = x
        .axis_iter(Axis(1))
        .map(|c| c.iter().copied().sum::<T>() / T::of_usize(n.max(1)))
        .collect();
    let sds = x
        .axis_iter(Axis(1))
        .zip(means.iter())
        .map(|(c, &m)| {
            if n < 2 {
                return T::zero();
            }
            let ss: T = c.iter().map(|&v| (v - m) * (v - m)).sum();
            (ss / T::of_usize(n - 1)).sqrt()
        })
        .collect();
    (means, sds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn exact_fit_recovers_coefficients() {
        let x = array![[1.0_f64, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]];
        let y = array![1.0, 3.0, 5.0, 7.0];
        let fit = least_squares(x.view(), y.view(), RankPolicy::Error).unwrap();
        assert!((fit.coef[0] - 1.0).abs() < 1e-12);
        assert!((fit.coef[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn residuals_orthogonal_to_columns() {
        let x = array![[1.0_f64, 0.3, -1.0], [1.0, 1.2, 0.5], [1.0, 2.0, 2.5], [1.0, 3.1, 0.0], [1.0, -0.7, 1.1]];
        let y = array![0.2, 1.9, 3.3, 2.2, -1.0];
        let fit = least_squares(x.view(), y.view(), RankPolicy::Error).unwrap();
        let r = &y - &x.dot(&fit.coef);
        let xr = x.t().dot(&r);
        assert!(xr.iter().all(|v| v.abs() < 1e-12), "{xr:?}");
    }

    #[test]
    fn duplicated_column_is_rank_deficient() {
        let x = array![[1.0, 2.0, 2.0], [1.0, 3.0, 3.0], [1.0, 5.0, 5.0]];
        let y = array![1.0, 2.0, 3.0];
        assert!(matches!(
            least_squares(x.view(), y.view(), RankPolicy::Error),
            Err(Error::RankDeficient(2))
        ));
        let fit = least_squares(x.view(), y.view(), RankPolicy::DropAliased).unwrap();
        assert_eq!(fit.aliased, vec![false, false, true]);
        assert_eq!(fit.coef[2], 0.0);
    }

    #[test]
    fn zero_column_is_aliased() {
        let x = array![[1.0_f64, 0.0], [1.0, 0.0], [1.0, 0.0]];
        let y = array![1.0, 2.0, 3.0];
        let fit = least_squares(x.view(), y.view(), RankPolicy::DropAliased).unwrap();
        assert!((fit.coef[0] - 2.0).abs() < 1e-12);
        assert!(fit.aliased[1]);
    }

    #[test]
    fn works_in_single_precision() {
        let x = array![[1.0_f32, 0.0], [1.0, 1.0], [1.0, 2.0]];
        let y = array![2.0_f32, 4.0, 6.0];
        let fit = least_squares(x.view(), y.view(), RankPolicy::Error).unwrap();
        assert!((fit.coef[1] - 2.0).abs() < 1e-5);
    }
}
