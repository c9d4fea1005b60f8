use nalgebra::{DMatrix, SymmetricEigen};

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order. Ties keep the solver's order.
pub(crate) fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m.clone(), 1e-15, 0)
        .unwrap_or_else(|| SymmetricEigen::new(m.clone()));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
