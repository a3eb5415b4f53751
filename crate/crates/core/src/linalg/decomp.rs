//! Desk-scale orthogonal decomposition used by the analysis and test oracles.
//!
//! Nothing on the solver path calls into this module.

use nalgebra::{DMatrix, DVector};

use super::MatrixHandle;
use crate::error::{Error, Result};

/// Largest `m * n` accepted by [`nullspace_basis`] and [`min_norm_solution`].
pub const NULLSPACE_MAX_ENTRIES: usize = 10_000;

/// Singular values below this fraction of the largest are treated as zero.
const RANK_RTOL: f64 = 1e-10;

/// Orthonormal basis `B` of `N(A)` plus the thin SVD pieces that produced it.
#[derive(Debug, Clone)]
pub struct NullSpace {
    /// `n × k` matrix with orthonormal columns spanning `N(A)`.
    pub basis: DMatrix<f64>,
    pub rank: usize,
    /// Singular values of `A` in descending order.
    pub singular_values: Vec<f64>,
    /// `n × rank` orthonormal basis of `R(Aᵀ)`.
    row_basis: DMatrix<f64>,
}

struct Svd {
    u: DMatrix<f64>,
    sigma: Vec<f64>,
    v: DMatrix<f64>,
    rank: usize,
}

fn to_faer(a: &MatrixHandle) -> faer::Mat<f64> {
    let mut f = faer::Mat::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplets() {
        f[(i, j)] = v;
    }
    f
}

fn svd_failed(_: faer::linalg::svd::SvdError) -> Error {
    Error::Param("singular value decomposition did not converge".into())
}

/// Full SVD of `A` with `V` square and singular triplets sorted descending.
fn full_svd(a: &MatrixHandle) -> Result<Svd> {
    let (m, n) = (a.nrows(), a.ncols());
    if m * n > NULLSPACE_MAX_ENTRIES {
        return Err(Error::Size {
            context: "dense orthogonal decomposition",
            size: m * n,
            cap: NULLSPACE_MAX_ENTRIES,
        });
    }
    let svd = to_faer(a).svd().map_err(svd_failed)?;
    let (fu, fs, fv) = (svd.U(), svd.S(), svd.V());
    let k = m.min(n);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&p, &q| fs[q].total_cmp(&fs[p]));
    // trailing columns of V (beyond min(m, n)) span the rest of N(A)
    order.extend(k..n);

    let sigma: Vec<f64> = order[..k].iter().map(|&c| fs[c]).collect();
    let u = DMatrix::from_fn(m, k, |i, c| fu[(i, order[c])]);
    let v = DMatrix::from_fn(n, n, |i, c| fv[(i, order[c])]);
    let smax = sigma.first().copied().unwrap_or(0.0);
    let rank = sigma.iter().filter(|&&s| s > RANK_RTOL * smax && s > 0.0).count();
    Ok(Svd { u, sigma, v, rank })
}

/// Singular values of a dense matrix, descending.
pub fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let f = faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    let mut s = f.singular_values().map_err(svd_failed)?;
    s.sort_by(|p, q| q.total_cmp(p));
    Ok(s)
}

/// Orthonormal basis of the null space of `A`.
pub fn nullspace_basis(a: &MatrixHandle) -> Result<NullSpace> {
    let n = a.ncols();
    let svd = full_svd(a)?;
    let k = n - svd.rank;
    let basis = svd.v.columns(svd.rank, k).into_owned();
    let row_basis = svd.v.columns(0, svd.rank).into_owned();
    Ok(NullSpace {
        basis,
        rank: svd.rank,
        singular_values: svd.sigma,
        row_basis,
    })
}

impl NullSpace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// `n × rank` orthonormal basis of `R(Aᵀ) = N(A)^⊥`.
    pub fn row_basis(&self) -> &DMatrix<f64> {
        &self.row_basis
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// `P_{N(A)} = B Bᵀ`
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// `P_{R(Aᵀ)} = I - B Bᵀ`
    pub fn complement_projector(&self) -> DMatrix<f64> {
        let n = self.ambient_dim();
        DMatrix::identity(n, n) - self.projector()
    }

    /// `B Bᵀ x`
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(x);
        let coeffs = self.basis.transpose() * x;
        (&self.basis * coeffs).as_slice().to_vec()
    }

    /// `x - B Bᵀ x`
    pub fn project_complement(&self, x: &[f64]) -> Vec<f64> {
        let p = self.project(x);
        x.iter().zip(&p).map(|(a, b)| a - b).collect()
    }

    /// Distance from `x` to the row space `R(Aᵀ)`, computed through an
    /// orthonormal basis of `R(Aᵀ)` rather than through `B`.
    pub fn rowspace_residual(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        let coeffs = self.row_basis.transpose() * &xv;
        (xv - &self.row_basis * coeffs).norm()
    }
}

/// Minimum-norm least-squares solution `x† = A⁺ b`.
pub fn min_norm_solution(a: &MatrixHandle, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.nrows() {
        return Err(Error::dims("min_norm_solution rhs", a.nrows(), b.len()));
    }
    let svd = full_svd(a)?;
    let b = DVector::from_column_slice(b);
    let mut x = DVector::zeros(a.ncols());
    for k in 0..svd.rank {
        let coef = svd.u.column(k).dot(&b) / svd.sigma[k];
        x += svd.v.column(k) * coef;
    }
    Ok(x.as_slice().to_vec())
}
