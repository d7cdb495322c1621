//! Small dense helpers for the estimation code. Matrices are row-major
//! `Vec<Vec<T>>`; dimensions stay below a few dozen.

use num_traits::Float;

/// Lower-triangular factor `L` with `L Lᵀ = a` for a symmetric positive
/// semi-definite `a`. Pivots within `tol` of zero produce a zero column, so
/// rank-deficient inputs factor exactly. Returns `None` on a pivot below
/// `-tol`.
pub fn cholesky_psd<T: Float>(a: &[Vec<T>], tol: T) -> Option<Vec<Vec<T>>> {
    let n = a.len();
    let mut l = vec![vec![T::zero(); n]; n];
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d = d - l[j][k] * l[j][k];
        }
        if d < -tol {
            return None;
        }
        if d <= tol {
            continue;
        }
        let pivot = d.sqrt();
        l[j][j] = pivot;
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s = s - l[i][k] * l[j][k];
            }
            l[i][j] = s / pivot;
        }
    }
    Some(l)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve<T: Float>(a: &[Vec<T>], b: &[T]) -> Option<Vec<T>> {
    let n = a.len();
    let mut m: Vec<Vec<T>> = a.iter().zip(b).map(|(row, &bi)| {
        let mut r = row.clone();
        r.push(bi);
        r
    }).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())?;
        if m[piv][col] == T::zero() || !m[piv][col].is_finite() {
            return None;
        }
        m.swap(col, piv);
        for i in col + 1..n {
            let f = m[i][col] / m[col][col];
            if f != T::zero() {
                for k in col..=n {
                    m[i][k] = m[i][k] - f * m[col][k];
                }
            }
        }
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = m[i][n];
        for k in i + 1..n {
            s = s - m[i][k] * x[k];
        }
        x[i] = s / m[i][i];
    }
    Some(x)
}

/// Inverse of a small square matrix.
pub fn invert<T: Float>(a: &[Vec<T>]) -> Option<Vec<Vec<T>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![T::zero(); n];
        e[j] = T::one();
        cols.push(solve(a, &e)?);
    }
    Some((0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect())
}

/// `XᵀX` and `Xᵀy` for a design given as rows.
pub fn normal_equations<T: Float>(rows: &[Vec<T>], y: &[T]) -> (Vec<Vec<T>>, Vec<T>) {
    let k = rows.first().map_or(0, Vec::len);
    let mut xtx = vec![vec![T::zero(); k]; k];
    let mut xty = vec![T::zero(); k];
    for (r, &yi) in rows.iter().zip(y) {
        for i in 0..k {
            xty[i] = xty[i] + r[i] * yi;
            for j in i..k {
                xtx[i][j] = xtx[i][j] + r[i] * r[j];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            xtx[i][j] = xtx[j][i];
        }
    }
    (xtx, xty)
}

/// Least-squares coefficients; columns that are identically zero get a zero
/// coefficient instead of making the system singular.
pub fn least_squares<T: Float>(rows: &[Vec<T>], y: &[T]) -> Vec<T> {
    let (mut xtx, xty) = normal_equations(rows, y);
    let k = xty.len();
    let dead: Vec<bool> = (0..k).map(|i| xtx[i][i] <= T::epsilon()).collect();
    for i in 0..k {
        if dead[i] {
            for j in 0..k {
                xtx[i][j] = T::zero();
                xtx[j][i] = T::zero();
            }
            xtx[i][i] = T::one();
        }
    }
    let mut rhs = xty;
    for i in 0..k {
        if dead[i] {
            rhs[i] = T::zero();
        }
    }
    solve(&xtx, &rhs).unwrap_or_else(|| vec![T::zero(); k])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs_spd_matrix() {
        let a = vec![vec![4.0, 2.0, 0.4], vec![2.0, 5.0, 1.0], vec![0.4, 1.0, 3.0]];
        let l = cholesky_psd(&a, 1e-12).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| l[i][k] * l[j][k]).sum();
                assert!((s - a[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_of_rank_one_matrix() {
        let a = vec![vec![1.0; 3]; 3];
        let l = cholesky_psd(&a, 1e-12).unwrap();
        assert_eq!(l, vec![vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(cholesky_psd(&a, 1e-12).is_none());
    }

    #[test]
    fn least_squares_with_dead_column() {
        let rows = vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0]];
        let y = vec![2.0, 4.0, 6.0];
        let b = least_squares(&rows, &y);
        assert!((b[0] - 2.0).abs() < 1e-12);
        assert_eq!(b[1], 0.0);
    }
}
