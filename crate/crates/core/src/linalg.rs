//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigenvalues below this are treated as zero.
pub const EIG_ZERO: f64 = 1e-14;
/// Distance under which a unit vector counts as lying in a subspace.
pub const SPAN_TOL: f64 = 1e-9;

/// Symmetric eigendecomposition, eigenvalues sorted in descending order with
/// the eigenvector columns permuted to match.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, 1e-12, 0).expect("symmetric eigensolver");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Orthonormal basis (as columns) of the span of the given columns.
pub fn orthonormal_span(cols: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let d = cols.nrows();
    if cols.ncols() == 0 {
        return DMatrix::zeros(d, 0);
    }
    let svd = cols.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let top = order.first().map(|&i| svd.singular_values[i]).unwrap_or(0.0);
    let cut = tol.max(top * 1e-12);
    let keep: Vec<usize> = order.into_iter().take_while(|&i| svd.singular_values[i] > cut).collect();
    u.select_columns(&keep)
}

/// Orthonormal basis of the orthogonal complement of an orthonormal basis.
pub fn complement(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let d = basis.nrows();
    let k = basis.ncols();
    let proj = DMatrix::identity(d, d) - basis * basis.transpose();
    let (_, vecs) = sym_eigen_desc(&proj);
    vecs.columns(0, d - k).into_owned()
}

pub fn distance_to_span(basis: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    if basis.ncols() == 0 {
        return x.norm();
    }
    let coef = basis.transpose() * x;
    (x - basis * coef).norm()
}

/// `C^{-1/2}` for a positive definite symmetric matrix.
pub fn inv_sqrt(vals: &[f64], vecs: &DMatrix<f64>) -> DMatrix<f64> {
    let scaled = DVector::from_iterator(vals.len(), vals.iter().map(|v| 1.0 / v.sqrt()));
    vecs * DMatrix::from_diagonal(&scaled) * vecs.transpose()
}

pub fn unit(v: DVector<f64>) -> DVector<f64> {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        v
    }
}
