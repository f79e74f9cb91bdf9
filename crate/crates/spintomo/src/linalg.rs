//! Small dense-linear-algebra helpers shared across the crate.

use nalgebra::DVector;

use crate::{C64, CMatrix};

/// Eigendecomposition of a Hermitian matrix, eigenvalues descending.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors as columns, so
/// `m = V diag(λ) V†`.
pub fn hermitian_eigen_desc(m: CMatrix) -> (DVector<f64>, CMatrix) {
    let eig = m.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("eigenvalue is NaN")
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Rebuilds `V f(λ) V†` from a spectral decomposition.
pub fn from_spectrum(values: &DVector<f64>, vectors: &CMatrix, f: impl Fn(f64) -> C64) -> CMatrix {
    let n = values.len();
    let mut scaled = vectors.clone();
    for j in 0..n {
        let s = f(values[j]);
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    scaled * vectors.adjoint()
}

/// Largest absolute entry of `m − m†`; zero for an exactly Hermitian matrix.
pub fn hermiticity_deviation(m: &CMatrix) -> f64 {
    let mut dev = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// `(m + m†)/2`.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Real part of the trace.
pub fn trace_re(m: &CMatrix) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)].re).sum()
}

/// Largest absolute entry of `a − b`.
#[cfg_attr(not(test), allow(dead_code))]
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Natural log of `n!` by cumulative summation; exact enough for the
/// factorial-sum formulas used at these small arguments. Values up to
/// `n = 511` come from a table built once, since the rotation and coupling
/// formulas evaluate this in tight inner loops.
pub fn ln_factorial(n: u32) -> f64 {
    use std::sync::OnceLock;
    const TABLE_SIZE: usize = 512;
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(TABLE_SIZE);
        let mut acc = 0.0;
        t.push(0.0);
        for k in 1..TABLE_SIZE {
            acc += (k as f64).ln();
            t.push(acc);
        }
        t
    });
    match table.get(n as usize) {
        Some(&v) => v,
        None => table[TABLE_SIZE - 1] + (TABLE_SIZE as u64..=u64::from(n)).map(|k| (k as f64).ln()).sum::<f64>(),
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
///
/// Newton iteration on the Legendre recurrence; exact (to rounding) for
/// polynomial integrands of degree `≤ 2n − 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Nodes are symmetric about 0; solve for the upper half.
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ln_factorial_matches_direct_product() {
        assert_eq!(ln_factorial(0), 0.0);
        assert_eq!(ln_factorial(1), 0.0);
        assert_relative_eq!(ln_factorial(5), 120.0f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(ln_factorial(20), 2.43290200817664e18f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(7);
        // degree 13 polynomial: x^12 integrates to 2/13
        let quad: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(12)).sum();
        assert_relative_eq!(quad, 2.0 / 13.0, max_relative = 1e-13);
        let total: f64 = w.iter().sum();
        assert_relative_eq!(total, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn hermitian_eigen_reconstructs() {
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(1.0, 0.0),
                C64::new(0.0, -0.5),
                C64::new(0.0, 0.5),
                C64::new(2.0, 0.0),
            ],
        );
        let (vals, vecs) = hermitian_eigen_desc(m.clone());
        assert!(vals[0] >= vals[1]);
        let rebuilt = from_spectrum(&vals, &vecs, |x| C64::new(x, 0.0));
        assert!(max_abs_diff(&m, &rebuilt) < 1e-12);
    }
}
