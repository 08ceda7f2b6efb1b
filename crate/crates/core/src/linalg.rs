//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

/// Default relative singular-value threshold for numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Singular values of `m`, sorted in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `tol * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    rank_from_singular_values(&singular_values(m), tol)
}

pub fn rank_from_singular_values(s: &[f64], tol: f64) -> usize {
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&x| x > tol * smax).count(),
        _ => 0,
    }
}

/// Orthonormal basis (as columns) of the right null space of `m`.
///
/// A matrix with no rows has the whole space as its kernel.
pub fn kernel_basis(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // Pad to at least n rows so the full V^T is returned.
    let mut padded = DMatrix::zeros(m.nrows().max(n), n);
    padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let s = &svd.singular_values;
    let smax = s.iter().copied().fold(0.0, f64::max);
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| smax == 0.0 || s[i] <= tol * smax)
        .map(|i| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Rows spanning the orthogonal complement of the column span of `basis`.
pub fn orthogonal_complement_rows(basis: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    kernel_basis(&basis.transpose(), tol).transpose()
}

/// Scales rows, then columns, then rows again to unit Euclidean norm.
///
/// Returns the scaled matrix and the column factors `c`, so that a kernel
/// vector `y` of the result maps to the kernel vector `c .* y` of `m`.
/// Zero rows and columns are left alone.
pub fn equilibrate(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    fn scale_rows(a: &mut DMatrix<f64>) {
        for mut row in a.row_iter_mut() {
            let n = row.norm();
            if n > 0.0 {
                row /= n;
            }
        }
    }
    let mut a = m.clone();
    scale_rows(&mut a);
    let mut c = DVector::from_element(a.ncols(), 1.0);
    for (k, mut col) in a.column_iter_mut().enumerate() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
            c[k] = 1.0 / n;
        }
    }
    scale_rows(&mut a);
    (a, c)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibration_keeps_rank_and_kernel() {
        let m = DMatrix::from_row_slice(2, 3, &[1e6, 2e6, 0.0, 1e-3, 0.0, 5e-3]);
        let (a, c) = equilibrate(&m);
        assert_eq!(numerical_rank(&a, DEFAULT_RANK_TOL), 2);
        let y = kernel_basis(&a, DEFAULT_RANK_TOL);
        let x = DVector::from_iterator(3, y.column(0).iter().zip(c.iter()).map(|(y, c)| y * c));
        assert!((&m * x).norm() < 1e-9);
    }

    #[test]
    fn rank_of_rank_one_outer_product() {
        let u = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let v = DVector::from_vec(vec![4.0, -1.0]);
        let m = &u * v.transpose();
        assert_eq!(numerical_rank(&m, DEFAULT_RANK_TOL), 1);
        let k = kernel_basis(&m, DEFAULT_RANK_TOL);
        assert_eq!(k.ncols(), 1);
        assert!((&m * &k).norm() < 1e-12);
    }

    #[test]
    fn empty_matrices() {
        let m = DMatrix::<f64>::zeros(0, 3);
        assert_eq!(numerical_rank(&m, 1e-8), 0);
        assert_eq!(kernel_basis(&m, 1e-8).ncols(), 3);
    }

    #[test]
    fn complement_of_plane_is_normal() {
        let b = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let c = orthogonal_complement_rows(&b, 1e-10);
        assert_eq!(c.nrows(), 1);
        assert!((c[(0, 2)].abs() - 1.0).abs() < 1e-12);
    }
}
