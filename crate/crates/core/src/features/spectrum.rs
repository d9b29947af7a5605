//! Explicit Laplacian of the combinatorial graph, for checking the closed-form
//! eigenspace on small `n`. Never used on the optimization path.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result};

/// Largest `n` for which the `2^n × 2^n` Laplacian is materialized.
pub const SPECTRUM_ORACLE_CAP: usize = 8;

/// Numerically obtained eigenpairs of `L(G)` for the `n`-cube graph.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub n: usize,
    /// Ascending eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// Unit-norm eigenvectors as columns, aligned with `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    /// Distinct eigenvalues (merged within `tol`) with their multiplicities.
    pub fn multiplicities(&self, tol: f64) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for &v in &self.eigenvalues {
            match out.last_mut() {
                Some((rep, count)) if (v - *rep).abs() <= tol => *count += 1,
                _ => out.push((v, 1)),
            }
        }
        out
    }
}

fn edge_laplacian() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])
}

/// Laplacian of the hypercube graph built as the iterated Kronecker sum
/// `L(G_1) ⊕ ... ⊕ L(G_n)`. Vertex `v` encodes variable 0 as its most
/// significant bit.
pub fn hypercube_laplacian(n: usize) -> Result<DMatrix<f64>> {
    check_cap(n)?;
    let l1 = edge_laplacian();
    let mut l = l1.clone();
    for k in 1..n {
        let dim = 1usize << k;
        l = l.kronecker(&DMatrix::identity(2, 2)) + DMatrix::identity(dim, dim).kronecker(&l1);
    }
    Ok(l)
}

/// Laplacian of the single edge for variable `i`, lifted to the product graph.
fn site_laplacian(n: usize, i: usize) -> DMatrix<f64> {
    let left = DMatrix::<f64>::identity(1 << i, 1 << i);
    let right = DMatrix::<f64>::identity(1 << (n - i - 1), 1 << (n - i - 1));
    left.kronecker(&edge_laplacian()).kronecker(&right)
}

/// Eigendecomposes the explicit Laplacian.
///
/// Inside each degenerate eigenspace the basis returned by the dense solver is
/// arbitrary, so it is rotated to diagonalize a weighted sum of the per-site
/// Laplacians (which commutes with `L(G)` and has a simple spectrum). The
/// resulting columns are the unique common eigenvectors, up to sign.
pub fn laplacian_eigens_oracle(n: usize) -> Result<Spectrum> {
    let l = hypercube_laplacian(n)?;
    let dim = l.nrows();
    let eig = SymmetricEigen::new(l);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(dim, dim);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }

    let mut commuting = DMatrix::zeros(dim, dim);
    for i in 0..n {
        commuting += site_laplacian(n, i) * (1u64 << i) as f64;
    }

    let mut start = 0;
    while start < dim {
        let mut end = start + 1;
        while end < dim && (values[end] - values[start]).abs() < 1e-6 {
            end += 1;
        }
        if end - start > 1 {
            let block = vectors.columns(start, end - start).into_owned();
            let projected = block.transpose() * &commuting * &block;
            let inner = SymmetricEigen::new(projected);
            let rotated = &block * &inner.eigenvectors;
            let mut idx: Vec<usize> = (0..end - start).collect();
            idx.sort_by(|&a, &b| inner.eigenvalues[a].total_cmp(&inner.eigenvalues[b]));
            for (off, &k) in idx.iter().enumerate() {
                let mut v = rotated.column(k).into_owned();
                v.normalize_mut();
                vectors.set_column(start + off, &v);
            }
        }
        start = end;
    }

    Ok(Spectrum { n, eigenvalues: values, eigenvectors: vectors })
}

/// Column `c` of the order-`2^n` Hadamard matrix, `H_vc = (-1)^{<r_v, r_c>}`.
pub fn hadamard_column(n: usize, c: usize) -> Vec<f64> {
    (0..1usize << n)
        .map(|v| if (v & c).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 })
        .collect()
}

fn check_cap(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidConfig("dimension n must be at least 1".into()));
    }
    if n > SPECTRUM_ORACLE_CAP {
        return Err(Error::TooLarge { n, cap: SPECTRUM_ORACLE_CAP });
    }
    Ok(())
}
