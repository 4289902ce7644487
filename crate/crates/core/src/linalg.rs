//! Small dense linear-algebra helpers shared by the estimation and optimization code.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order. Returns `(values, vectors)` with vectors as columns.
pub fn hermitian_eig(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    let herm = (m + m.adjoint()).scale(0.5);
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Rotate `v` by a global phase so its first entry with magnitude above
/// `1e-12 * max|v_i|` is real and positive.
pub fn canonical_phase(v: &CVector) -> CVector {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    match v.iter().find(|z| z.norm() > 1e-12 * max) {
        Some(z) if max > 0.0 => {
            let rot = z.conj() / z.norm();
            v.map(|x| x * rot)
        }
        _ => v.clone(),
    }
}

/// Outer product `a b^H`.
pub fn outer(a: &CVector, b: &CVector) -> CMatrix {
    a * b.adjoint()
}

/// `Re(Tr(A W))` for Hermitian `A` and `W = w w^H`, i.e. `Re(w^H A w)`.
pub fn quad_form(a: &CMatrix, w: &CVector) -> f64 {
    (w.adjoint() * a * w)[(0, 0)].re
}

/// Symmetrize a real 4x4 matrix.
pub fn symmetrize4(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a real symmetric 2x2 matrix, ascending.
pub fn sym2_eigenvalues(m: &Matrix2<f64>) -> [f64; 2] {
    let a = m[(0, 0)];
    let d = m[(1, 1)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    [mean - rad, mean + rad]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eig_sorted_descending_and_reconstructs() {
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(2.0, 0.0),
                C64::new(0.0, 1.0),
                C64::new(0.0, -1.0),
                C64::new(3.0, 0.0),
            ],
        );
        let (vals, vecs) = hermitian_eig(&m);
        assert!(vals[0] >= vals[1]);
        let recon = &vecs
            * CMatrix::from_diagonal(&CVector::from_iterator(
                2,
                vals.iter().map(|&v| C64::new(v, 0.0)),
            ))
            * vecs.adjoint();
        assert!((recon - m).norm() < 1e-12);
    }

    #[test]
    fn canonical_phase_makes_first_entry_real_positive() {
        let v = CVector::from_vec(vec![C64::new(0.0, -2.0), C64::new(1.0, 1.0)]);
        let c = canonical_phase(&v);
        assert!((c[0] - C64::new(2.0, 0.0)).norm() < 1e-15);
        assert!((c.norm() - v.norm()).abs() < 1e-15);
    }

    #[test]
    fn sym2_eigs() {
        let m = Matrix2::new(2.0, 1.0, 1.0, 2.0);
        let e = sym2_eigenvalues(&m);
        assert!((e[0] - 1.0).abs() < 1e-15 && (e[1] - 3.0).abs() < 1e-15);
    }
}
