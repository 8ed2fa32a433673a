//! Small dense solvers used by the model fits.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {0})")]
    NotPositiveDefinite(usize),
    #[error("matrix is rank deficient (column {0})")]
    RankDeficient(usize),
    #[error("dimension mismatch")]
    Dimension,
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major `n x n`)
/// by Cholesky factorisation. `a` is overwritten by the factor, `b` by `x`.
pub fn cholesky_solve<T: Scalar>(a: &mut [T], n: usize, b: &mut [T]) -> Result<(), LinalgError> {
    if a.len() != n * n || b.len() != n {
        return Err(LinalgError::Dimension);
    }
    for j in 0..n {
        let row_j = &mut a[j * n..j * n + n];
        let d = row_j[j] - dot(&row_j[..j], &row_j[..j]);
        if !(d > T::zero()) || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite(j));
        }
        let ljj = d.sqrt();
        row_j[j] = ljj;
        for i in (j + 1)..n {
            let (upper, lower) = a.split_at_mut(i * n);
            let row_j = &upper[j * n..j * n + n];
            let row_i = &mut lower[..n];
            // symmetric input: the (i, j) entry lives in row j above the diagonal
            let aij = row_j[i];
            row_i[j] = (aij - dot(&row_i[..j], &row_j[..j])) / ljj;
        }
    }
    // forward then backward substitution
    for i in 0..n {
        let row = &a[i * n..i * n + n];
        b[i] = (b[i] - dot(&row[..i], &b[..i])) / row[i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s = s - a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Ok(())
}

fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    // four accumulators keep the loop vectorisable without reassociation surprises
    let mut acc = [T::zero(); 4];
    let chunks = x.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] = acc[l] + x[4 * c + l] * y[4 * c + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..x.len() {
        s = s + x[k] * y[k];
    }
    s
}

/// Least-squares solution of the overdetermined system `A x ~ b` by
/// Householder QR. `a` is `rows x cols`, row-major.
pub fn lstsq_qr<T: Scalar>(a: &[T], rows: usize, cols: usize, b: &[T]) -> Result<Vec<T>, LinalgError> {
    if a.len() != rows * cols || b.len() != rows || rows < cols {
        return Err(LinalgError::Dimension);
    }
    // column-major working copy
    let mut q: Vec<Vec<T>> = (0..cols).map(|c| (0..rows).map(|r| a[r * cols + c]).collect()).collect();
    let mut rhs = b.to_vec();
    let scale = q.iter().flatten().fold(T::zero(), |m, v| m.max(v.abs()));
    let tiny = T::epsilon() * scale * T::of_usize(rows);
    for k in 0..cols {
        let norm = q[k][k..].iter().fold(T::zero(), |s, &v| s + v * v).sqrt();
        if norm <= tiny {
            return Err(LinalgError::RankDeficient(k));
        }
        let alpha = if q[k][k] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = q[k][k..].to_vec();
        v[0] = v[0] - alpha;
        let vnorm2 = v.iter().fold(T::zero(), |s, &x| s + x * x);
        let reflect = |col: &mut [T]| {
            let s = v.iter().zip(col.iter()).fold(T::zero(), |s, (&a, &b)| s + a * b);
            let f = (s + s) / vnorm2;
            for (c, &vi) in col.iter_mut().zip(&v) {
                *c = *c - f * vi;
            }
        };
        for col in q.iter_mut().skip(k) {
            reflect(&mut col[k..]);
        }
        reflect(&mut rhs[k..]);
    }
    let mut x = vec![T::zero(); cols];
    for i in (0..cols).rev() {
        let mut s = rhs[i];
        for j in (i + 1)..cols {
            s = s - q[j][i] * x[j];
        }
        x[i] = s / q[i][i];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_small_system() {
        // A = [[4, 2, 0], [2, 5, 1], [0, 1, 3]], x = [1, -1, 2]
        let mut a = vec![4.0f64, 2.0, 0.0, 2.0, 5.0, 1.0, 0.0, 1.0, 3.0];
        let mut b = vec![2.0, -1.0, 5.0];
        cholesky_solve(&mut a, 3, &mut b).unwrap();
        for (got, want) in b.iter().zip([1.0, -1.0, 2.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = vec![1.0f64, 2.0, 2.0, 1.0];
        let mut b = vec![0.0, 0.0];
        assert_eq!(cholesky_solve(&mut a, 2, &mut b), Err(LinalgError::NotPositiveDefinite(1)));
    }

    #[test]
    fn qr_fits_a_line() {
        // y = 3 + 2x exactly
        let xs = [0.0f64, 1.0, 2.0, 3.0, 4.0];
        let a: Vec<f64> = xs.iter().flat_map(|&x| [1.0, x]).collect();
        let b: Vec<f64> = xs.iter().map(|x| 3.0 + 2.0 * x).collect();
        let sol = lstsq_qr(&a, 5, 2, &b).unwrap();
        assert!((sol[0] - 3.0).abs() < 1e-12 && (sol[1] - 2.0).abs() < 1e-12);
        let f32_sol = lstsq_qr(
            &a.iter().map(|&v| v as f32).collect::<Vec<_>>(),
            5,
            2,
            &b.iter().map(|&v| v as f32).collect::<Vec<_>>(),
        )
        .unwrap();
        assert!((f32_sol[1] - 2.0).abs() < 1e-4);
    }

    #[test]
    fn qr_detects_rank_deficiency() {
        let a = vec![1.0f64, 2.0, 2.0, 4.0, 3.0, 6.0];
        assert!(matches!(lstsq_qr(&a, 3, 2, &[1.0, 2.0, 3.0]), Err(LinalgError::RankDeficient(1))));
    }
}
