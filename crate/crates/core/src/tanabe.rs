//! The relaxation Kaczmarz-Tanabe iteration in standard form.
//!
//! A full relaxed sweep over rows `1..m` is the affine map
//!
//! ```text
//! y ← y + Aᵀ C(u)ᵀ Λ M (b − A y)
//! ```
//!
//! where `Λ = diag(μ_i)`, `M = diag(1/‖a_i‖₂²)` and `C(u)` is a unit upper
//! triangular `m × m` matrix with `C(u) A = A_S(u)`, the matrix whose row `j`
//! is `(Q_j a_j)ᵀ` with `Q_j = P_m(μ_m) ⋯ P_{j+1}(μ_{j+1})`.
//!
//! `C(u)` is built here three independent ways: a descending row-update
//! loop ([`build_c_algorithm1`], the default), a product of elementary
//! column-update matrices ([`build_c_hproduct`]) and an explicit sum over
//! increasing index chains ([`build_c_index_formula`]). The coefficient
//! `h_{j,i}` everywhere is `a_jᵀ a_i / ‖a_i‖₂²`
//! (see [`MatrixHandle::row_inner`]); that normalisation is inferred from the
//! first step of the compatibility recursion, where row `j` picks up
//! `-μ_i a_jᵀa_i/‖a_i‖₂²` times row `i`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kaczmarz::{project_row_in_place, RelaxationSchedule};
use crate::linalg::{mm, MatrixHandle};

/// Which construction produced a [`TriangularFactor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Builder {
    Algorithm1,
    HProduct,
    IndexFormula,
}

impl Builder {
    pub const ALL: [Builder; 3] = [Builder::Algorithm1, Builder::HProduct, Builder::IndexFormula];

    pub fn build(self, a: &MatrixHandle, u: &RelaxationSchedule) -> Result<TriangularFactor> {
        match self {
            Builder::Algorithm1 => build_c_algorithm1(a, u),
            Builder::HProduct => build_c_hproduct(a, u),
            Builder::IndexFormula => build_c_index_formula(a, u),
        }
    }
}

impl std::fmt::Display for Builder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Builder::Algorithm1 => "algorithm1",
            Builder::HProduct => "h-product",
            Builder::IndexFormula => "index-formula",
        })
    }
}

impl std::str::FromStr for Builder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "algorithm1" => Ok(Builder::Algorithm1),
            "h-product" => Ok(Builder::HProduct),
            "index-formula" => Ok(Builder::IndexFormula),
            _ => Err(Error::Param(format!(
                "unknown C(u) builder '{s}' (expected algorithm1, h-product or index-formula)"
            ))),
        }
    }
}

/// Dense upper triangle of an `m × m` matrix, packed row by row.
#[derive(Debug, Clone, PartialEq)]
struct PackedUpper {
    order: usize,
    data: Vec<f64>,
}

impl PackedUpper {
    fn zeros(order: usize) -> Self {
        Self {
            order,
            data: vec![0.0; order * (order + 1) / 2],
        }
    }

    fn identity(order: usize) -> Self {
        let mut p = Self::zeros(order);
        for i in 0..order {
            *p.at_mut(i, i) = 1.0;
        }
        p
    }

    #[inline]
    fn offset(&self, i: usize) -> usize {
        // Sum of the lengths of rows 0..i: m + (m-1) + ... + (m-i+1).
        i * self.order - i * (i.saturating_sub(1)) / 2
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        if j < i {
            0.0
        } else {
            self.data[self.offset(i) + (j - i)]
        }
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        debug_assert!(j >= i);
        let o = self.offset(i);
        &mut self.data[o + (j - i)]
    }

    fn row(&self, i: usize) -> &[f64] {
        let o = self.offset(i);
        &self.data[o..o + (self.order - i)]
    }
}

/// Unit upper triangular compatibility matrix `C(u)` (also written `Ω(u)`).
///
/// Row `i` is the compatible vector of `Q_i a_i` on `A`: `Q_i a_i = Σ_j C(i,j) a_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangularFactor {
    packed: PackedUpper,
    builder: Builder,
}

impl TriangularFactor {
    pub fn order(&self) -> usize {
        self.packed.order
    }

    pub fn builder(&self) -> Builder {
        self.builder
    }

    /// Entry `(i, j)`, zero below the diagonal.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.packed.at(i, j)
    }

    /// Entries `(i, i..m)`.
    pub fn upper_row(&self, i: usize) -> &[f64] {
        self.packed.row(i)
    }

    /// Full length-`m` compatible vector `(0, …, 0, 1, d_{i,i+1}, …, d_{i,m})`.
    pub fn compatible_vector(&self, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.order()];
        v[i..].copy_from_slice(self.upper_row(i));
        v
    }

    /// `Cᵀ s`
    pub fn mul_transpose(&self, s: &[f64]) -> Vec<f64> {
        let m = self.order();
        let mut out = vec![0.0; m];
        for (i, &si) in s.iter().enumerate().take(m) {
            if si == 0.0 {
                continue;
            }
            for (o, c) in out[i..].iter_mut().zip(self.upper_row(i)) {
                *o += c * si;
            }
        }
        out
    }

    /// `C s`
    pub fn mul(&self, s: &[f64]) -> Vec<f64> {
        (0..self.order())
            .map(|i| self.upper_row(i).iter().zip(&s[i..]).map(|(c, x)| c * x).sum())
            .collect()
    }

    /// `C A` as a dense matrix.
    pub fn mul_matrix(&self, a: &MatrixHandle) -> DMatrix<f64> {
        let (m, n) = (a.nrows(), a.ncols());
        let mut out = DMatrix::zeros(m, n);
        for i in 0..m {
            for (k, &c) in self.upper_row(i).iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                for (col, v) in a.row(i + k).entries() {
                    out[(i, col)] += c * v;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.order();
        DMatrix::from_fn(m, m, |i, j| self.get(i, j))
    }

    /// `true` when the diagonal is exactly one.
    pub fn has_unit_diagonal(&self) -> bool {
        (0..self.order()).all(|i| self.get(i, i) == 1.0)
    }

    /// Largest elementwise difference to another factor of the same order.
    pub fn max_abs_diff(&self, other: &TriangularFactor) -> f64 {
        assert_eq!(self.order(), other.order());
        crate::linalg::max_abs_diff(&self.packed.data, &other.packed.data)
    }

    /// Writes the full `m × m` matrix (zeros below the diagonal) in
    /// MatrixMarket array format.
    pub fn write_matrix_market(&self, path: impl AsRef<Path>) -> Result<()> {
        let m = self.order();
        mm::write_array(path, m, m, |i, j| self.get(i, j))
    }
}

fn check_schedule(a: &MatrixHandle, u: &RelaxationSchedule) -> Result<()> {
    u.check_len(a.nrows())
}

/// Builds `C(u)` with the descending row-update loop.
///
/// For `k = m, …, 2`, row `k` is final, and every earlier row `r < k` takes
/// `C(r, k..m) += μ_k · (−a_rᵀa_k / a_kᵀa_k) · C(k, k..m)`. A zero row `k`
/// contributes nothing, which is the same as treating its projector as the
/// identity.
pub fn build_c_algorithm1(a: &MatrixHandle, u: &RelaxationSchedule) -> Result<TriangularFactor> {
    check_schedule(a, u)?;
    let m = a.nrows();
    let mu = u.mu();
    let mut c = PackedUpper::identity(m);
    for k in (1..m).rev() {
        let akk = a.row_norm_sq(k);
        for r in (0..k).rev() {
            if akk == 0.0 {
                continue;
            }
            let coef = mu[k] * (-a.row_dot_row(r, k) / akk);
            for j in (k..m).rev() {
                let ckj = c.at(k, j);
                *c.at_mut(r, j) += coef * ckj;
            }
        }
    }
    Ok(TriangularFactor {
        packed: c,
        builder: Builder::Algorithm1,
    })
}

/// Builds `Ω(u) = H_1(μ_1) H_2(μ_2) ⋯ H_m(μ_m)` with
/// `H_i(μ_i) = Π_{j<i} E(j, i(−μ_i h_{j,i}))`.
///
/// Right-multiplying by the elementary matrix `E(j, i(c))` adds `c` times
/// column `j` to column `i`; only rows `0..=j` of column `j` are nonzero, so
/// each factor touches column `i` above the diagonal and nothing else.
pub fn build_c_hproduct(a: &MatrixHandle, u: &RelaxationSchedule) -> Result<TriangularFactor> {
    check_schedule(a, u)?;
    a.require_nonzero_rows()?;
    let m = a.nrows();
    let mu = u.mu();
    let mut x = PackedUpper::identity(m);
    for i in 1..m {
        for j in 0..i {
            let c = -mu[i] * a.row_inner(j, i)?;
            if c == 0.0 {
                continue;
            }
            for r in 0..=j {
                let xrj = x.at(r, j);
                *x.at_mut(r, i) += c * xrj;
            }
        }
    }
    Ok(TriangularFactor {
        packed: x,
        builder: Builder::HProduct,
    })
}

/// Largest order accepted by [`build_c_index_formula`].
pub const INDEX_FORMULA_MAX_ORDER: usize = 14;

/// Builds `C(u)` entry by entry from the chain sum
///
/// ```text
/// d_{i,j} = Σ_{v=2}^{j−i+1} (−1)^{v−1} Σ_{chains i=c_1<…<c_v=j} Π_s μ_{c_{s+1}} h_{c_s, c_{s+1}}
/// ```
///
/// The number of chains from `i` to `j` is `2^{j−i−1}`, so this is a
/// brute-force oracle for small `m` only.
pub fn build_c_index_formula(
    a: &MatrixHandle,
    u: &RelaxationSchedule,
) -> Result<TriangularFactor> {
    check_schedule(a, u)?;
    let m = a.nrows();
    if m > INDEX_FORMULA_MAX_ORDER {
        return Err(Error::Size {
            context: "index-formula builder order",
            size: m,
            cap: INDEX_FORMULA_MAX_ORDER,
        });
    }
    a.require_nonzero_rows()?;
    let mu = u.mu();
    // weight[p][q] = μ_q h_{p,q}
    let mut weight = vec![vec![0.0; m]; m];
    for p in 0..m {
        for q in p + 1..m {
            weight[p][q] = mu[q] * a.row_inner(p, q)?;
        }
    }

    let mut c = PackedUpper::identity(m);
    let mut chain = Vec::with_capacity(m);
    for i in 0..m {
        for j in i + 1..m {
            let inner = j - i - 1;
            let mut d = 0.0;
            for mask in 0u32..(1u32 << inner) {
                chain.clear();
                chain.push(i);
                chain.extend((0..inner).filter(|b| mask >> b & 1 == 1).map(|b| i + 1 + b));
                chain.push(j);
                let links = chain.len() - 1;
                let prod: f64 = chain.windows(2).map(|w| weight[w[0]][w[1]]).product();
                // (−1)^{v−1} with v = number of nodes = links + 1
                d += if links % 2 == 1 { -prod } else { prod };
            }
            *c.at_mut(i, j) = d;
        }
    }
    Ok(TriangularFactor {
        packed: c,
        builder: Builder::IndexFormula,
    })
}

/// Largest `m * n` accepted by [`assemble_as_oracle`].
pub const AS_ORACLE_MAX_ENTRIES: usize = 250_000;

/// `Q_j x = P_m(μ_m) ⋯ P_{j+1}(μ_{j+1}) x` (0-based `j`; `Q_{m−1} = I`).
pub fn apply_trailing_projectors(
    a: &MatrixHandle,
    u: &RelaxationSchedule,
    j: usize,
    x: &mut [f64],
) -> Result<()> {
    for t in j + 1..a.nrows() {
        project_row_in_place(a, t, u.mu()[t], x)?;
    }
    Ok(())
}

/// `A_S(u)` assembled directly from its definition, row `j` being
/// `(Q_j a_j)ᵀ`. Test and analysis oracle.
pub fn assemble_as_oracle(a: &MatrixHandle, u: &RelaxationSchedule) -> Result<DMatrix<f64>> {
    check_schedule(a, u)?;
    let (m, n) = (a.nrows(), a.ncols());
    if m * n > AS_ORACLE_MAX_ENTRIES {
        return Err(Error::Size {
            context: "A_S oracle",
            size: m * n,
            cap: AS_ORACLE_MAX_ENTRIES,
        });
    }
    a.require_nonzero_rows()?;
    let mut out = DMatrix::zeros(m, n);
    let mut x = vec![0.0; n];
    for j in 0..m {
        x.iter_mut().for_each(|v| *v = 0.0);
        a.row(j).axpy(1.0, &mut x);
        apply_trailing_projectors(a, u, j, &mut x)?;
        for (col, v) in x.iter().enumerate() {
            out[(j, col)] = *v;
        }
    }
    Ok(out)
}

/// Upper triangular `T_u(u)` with `Λ C(u) = T_u(u) M`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperFactorTu {
    packed: PackedUpper,
}

impl UpperFactorTu {
    pub fn order(&self) -> usize {
        self.packed.order
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.packed.at(i, j)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.order();
        DMatrix::from_fn(m, m, |i, j| self.get(i, j))
    }
}

/// `T_u(i, j) = μ_i C(i, j) ‖a_j‖₂²`.
pub fn extract_tu(
    c: &TriangularFactor,
    a: &MatrixHandle,
    u: &RelaxationSchedule,
) -> Result<UpperFactorTu> {
    check_schedule(a, u)?;
    let m = a.nrows();
    if c.order() != m {
        return Err(Error::dims("C(u) order", m, c.order()));
    }
    a.require_nonzero_rows()?;
    let mu = u.mu();
    let norms = a.row_norms_sq();
    let mut t = PackedUpper::zeros(m);
    for i in 0..m {
        for j in i..m {
            *t.at_mut(i, j) = mu[i] * c.get(i, j) * norms[j];
        }
    }
    let tu = UpperFactorTu { packed: t };
    for i in 0..m {
        let want = mu[i] * norms[i];
        let got = tu.get(i, i);
        debug_assert!((got - want).abs() <= 1e-12 * want.abs().max(f64::MIN_POSITIVE));
    }
    Ok(tu)
}

/// Largest elementwise entry of `Λ C − T_u M`.
pub fn tu_identity_residual(
    c: &TriangularFactor,
    tu: &UpperFactorTu,
    a: &MatrixHandle,
    u: &RelaxationSchedule,
) -> f64 {
    let m = c.order();
    let mu = u.mu();
    let norms = a.row_norms_sq();
    let mut worst = 0.0f64;
    for i in 0..m {
        for j in i..m {
            let lhs = mu[i] * c.get(i, j);
            let rhs = tu.get(i, j) / norms[j];
            worst = worst.max((lhs - rhs).abs());
        }
    }
    worst
}

/// Precomputed pieces of the standard-form update: `C(u)` and the diagonal
/// of `Λ M` (zero for zero rows).
#[derive(Debug, Clone)]
pub struct KtOperator {
    c: TriangularFactor,
    weights: Vec<f64>,
}

impl KtOperator {
    pub fn new(a: &MatrixHandle, u: &RelaxationSchedule, c: TriangularFactor) -> Result<Self> {
        check_schedule(a, u)?;
        if c.order() != a.nrows() {
            return Err(Error::dims("C(u) order", a.nrows(), c.order()));
        }
        let weights = u
            .mu()
            .iter()
            .zip(a.row_norms_sq())
            .map(|(&mu, &nrm)| if nrm == 0.0 { 0.0 } else { mu / nrm })
            .collect();
        Ok(Self { c, weights })
    }

    pub fn factor(&self) -> &TriangularFactor {
        &self.c
    }

    /// `y ← y + Aᵀ Cᵀ Λ M (b − A y)`
    pub fn apply_in_place(&self, a: &MatrixHandle, b: &[f64], y: &mut [f64]) {
        let m = a.nrows();
        let mut s = Vec::with_capacity(m);
        for i in 0..m {
            let w = self.weights[i];
            s.push(if w == 0.0 { 0.0 } else { w * (b[i] - a.row(i).dot(y)) });
        }
        let t = self.c.mul_transpose(&s);
        for (i, &ti) in t.iter().enumerate() {
            if ti != 0.0 {
                a.row(i).axpy(ti, y);
            }
        }
    }
}

/// One standard-form relaxation Kaczmarz-Tanabe iteration.
pub fn kt_iterate(
    a: &MatrixHandle,
    c: &TriangularFactor,
    u: &RelaxationSchedule,
    b: &[f64],
    y: &[f64],
) -> Result<Vec<f64>> {
    if b.len() != a.nrows() {
        return Err(Error::dims("rhs length", a.nrows(), b.len()));
    }
    if y.len() != a.ncols() {
        return Err(Error::dims("iterate length", a.ncols(), y.len()));
    }
    let op = KtOperator::new(a, u, c.clone())?;
    let mut out = y.to_vec();
    op.apply_in_place(a, b, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kaczmarz::{sweep, ZeroRowPolicy};

    fn a2() -> MatrixHandle {
        MatrixHandle::from_rows(&[[1.0, 0.0], [1.0, 1.0]]).unwrap()
    }

    fn all_builders(a: &MatrixHandle, u: &RelaxationSchedule) -> Vec<TriangularFactor> {
        Builder::ALL.iter().map(|b| b.build(a, u).unwrap()).collect()
    }

    #[test]
    fn packed_offsets() {
        let mut p = PackedUpper::zeros(4);
        let mut k = 0.0;
        for i in 0..4 {
            for j in i..4 {
                *p.at_mut(i, j) = k;
                k += 1.0;
            }
        }
        assert_eq!(p.data, (0..10).map(f64::from).collect::<Vec<_>>());
        assert_eq!(p.row(2), &[7.0, 8.0]);
        assert_eq!(p.at(3, 1), 0.0);
    }

    #[test]
    fn identity_matrix_gives_identity_factor() {
        for m in 1..5 {
            let a = MatrixHandle::from_row_major(
                m,
                m,
                (0..m * m).map(|k| if k % (m + 1) == 0 { 1.0 } else { 0.0 }).collect(),
            )
            .unwrap();
            let u = RelaxationSchedule::random(m, 0.1, 1.9, 5).unwrap();
            for c in all_builders(&a, &u) {
                assert_eq!(c.to_dense(), DMatrix::identity(m, m));
            }
        }
    }

    #[test]
    fn two_by_two_closed_form() {
        let a = a2();
        for mu2 in [0.3, 1.0, 1.7] {
            let u = RelaxationSchedule::per_row(vec![0.8, mu2]);
            for c in all_builders(&a, &u) {
                assert_eq!(c.get(0, 0), 1.0);
                assert_eq!(c.get(1, 1), 1.0);
                assert_eq!(c.get(1, 0), 0.0);
                assert!((c.get(0, 1) + mu2 / 2.0).abs() < 1e-15, "{}", c.builder());
            }
        }
        let c = build_c_algorithm1(&a, &RelaxationSchedule::unrelaxed(2)).unwrap();
        assert_eq!(c.get(0, 1), -0.5);
    }

    #[test]
    fn index_formula_three_rows() {
        // d_{1,3} = −μ3 h13 + μ2 μ3 h12 h23, computed by hand from the rows.
        let a = MatrixHandle::from_rows(&[[1.0, 2.0, 0.0], [0.0, 1.0, 1.0], [1.0, 0.0, 1.0]])
            .unwrap();
        let u = RelaxationSchedule::per_row(vec![0.9, 1.3, 0.6]);
        let (mu2, mu3) = (1.3, 0.6);
        let h12 = 2.0 / 2.0; // a1·a2 / ‖a2‖²
        let h13 = 1.0 / 2.0;
        let h23 = 1.0 / 2.0;
        let d12 = -mu2 * h12;
        let d13 = -mu3 * h13 + mu2 * mu3 * h12 * h23;
        let d23 = -mu3 * h23;
        let c = build_c_index_formula(&a, &u).unwrap();
        assert!((c.get(0, 1) - d12).abs() < 1e-15);
        assert!((c.get(0, 2) - d13).abs() < 1e-15);
        assert!((c.get(1, 2) - d23).abs() < 1e-15);
        for other in [build_c_algorithm1(&a, &u).unwrap(), build_c_hproduct(&a, &u).unwrap()] {
            assert!(c.max_abs_diff(&other) < 1e-15);
        }
    }

    #[test]
    fn zero_mu_kills_chains_through_that_node() {
        let a = MatrixHandle::from_rows(&[
            [1.0, 0.5, 0.0],
            [0.5, 1.0, 0.5],
            [0.0, 0.5, 1.0],
            [1.0, 1.0, 1.0],
        ])
        .unwrap();
        let u = RelaxationSchedule::per_row(vec![1.0, 0.0, 1.2, 0.7]);
        let c = build_c_index_formula(&a, &u).unwrap();
        // Column 1 only receives chains ending at node 1.
        assert_eq!(c.get(0, 1), 0.0);
        // d_{0,3}: chains 0→3, 0→2→3 survive; anything through 1 vanishes.
        let h = |p, q| a.row_inner(p, q).unwrap();
        let want = -0.7 * h(0, 3) + 1.2 * 0.7 * h(0, 2) * h(2, 3);
        assert!((c.get(0, 3) - want).abs() < 1e-15);
    }

    #[test]
    fn index_formula_cap_and_zero_rows() {
        let a = MatrixHandle::from_row_major(15, 1, vec![1.0; 15]).unwrap();
        let u = RelaxationSchedule::unrelaxed(15);
        assert!(matches!(build_c_index_formula(&a, &u), Err(Error::Size { .. })));
        assert!(build_c_algorithm1(&a, &u).is_ok());

        let z = MatrixHandle::from_rows(&[[1.0, 1.0], [0.0, 0.0], [1.0, 0.0]]).unwrap();
        let u = RelaxationSchedule::unrelaxed(3);
        assert!(matches!(build_c_index_formula(&z, &u), Err(Error::ZeroRow { row: 1 })));
        assert!(matches!(build_c_hproduct(&z, &u), Err(Error::ZeroRow { row: 1 })));
        assert!(matches!(assemble_as_oracle(&z, &u), Err(Error::ZeroRow { .. })));
    }

    #[test]
    fn algorithm1_zero_row_guard_matches_skipping_sweep() {
        let a = MatrixHandle::from_rows(&[[1.0, 1.0], [0.0, 0.0], [1.0, -0.5], [0.3, 2.0]])
            .unwrap();
        let u = RelaxationSchedule::per_row(vec![1.1, 0.9, 0.7, 1.4]);
        let c = build_c_algorithm1(&a, &u).unwrap();
        assert!(c.has_unit_diagonal());
        // The zero row neither receives nor contributes off-diagonal mass.
        assert_eq!(c.upper_row(1), &[1.0, 0.0, 0.0]);
        assert_eq!(c.get(0, 1), 0.0);
        let b = [2.0, 0.0, 0.5, 2.3];
        let y = [0.4, -0.1];
        let kt = kt_iterate(&a, &c, &u, &b, &y).unwrap();
        let sw = sweep(&a, &b, &u, &y, ZeroRowPolicy::Skip).unwrap();
        for (p, q) in kt.iter().zip(&sw) {
            assert!((p - q).abs() < 1e-14);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let a = a2();
        let u = RelaxationSchedule::unrelaxed(3);
        for b in Builder::ALL {
            assert!(matches!(b.build(&a, &u), Err(Error::DimensionMismatch { .. })));
        }
        let c = build_c_algorithm1(&a, &RelaxationSchedule::unrelaxed(2)).unwrap();
        assert!(kt_iterate(&a, &c, &RelaxationSchedule::unrelaxed(2), &[1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn as_oracle_examples() {
        let a = a2();
        let u = RelaxationSchedule::per_row(vec![1.0, 0.6]);
        let s = assemble_as_oracle(&a, &u).unwrap();
        assert!((s[(0, 0)] - (1.0 - 0.3)).abs() < 1e-15);
        assert!((s[(0, 1)] + 0.3).abs() < 1e-15);
        assert_eq!(s[(1, 0)], 1.0);
        assert_eq!(s[(1, 1)], 1.0);
        let c = build_c_algorithm1(&a, &u).unwrap();
        assert!((c.mul_matrix(&a) - s).amax() < 1e-15);

        let orth = MatrixHandle::from_rows(&[[2.0, 0.0, 0.0], [0.0, 0.0, -1.0]]).unwrap();
        let s = assemble_as_oracle(&orth, &RelaxationSchedule::per_row(vec![0.4, 1.6])).unwrap();
        assert_eq!(s, orth.to_nalgebra());
    }

    #[test]
    fn tu_examples() {
        let a = a2();
        let u = RelaxationSchedule::unrelaxed(2);
        let c = build_c_algorithm1(&a, &u).unwrap();
        let tu = extract_tu(&c, &a, &u).unwrap();
        assert_eq!(tu.to_dense(), DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 2.0]));
        assert!(tu_identity_residual(&c, &tu, &a, &u) < 1e-15);

        let id = MatrixHandle::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let u = RelaxationSchedule::per_row(vec![0.2, 1.0, 1.8]);
        let c = build_c_hproduct(&id, &u).unwrap();
        let tu = extract_tu(&c, &id, &u).unwrap();
        assert_eq!(tu.to_dense(), DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.2, 1.0, 1.8])));
    }

    #[test]
    fn kt_iterate_examples() {
        let a = a2();
        let b = [1.0, 2.0];
        let u = RelaxationSchedule::unrelaxed(2);
        let c = build_c_algorithm1(&a, &u).unwrap();
        assert_eq!(kt_iterate(&a, &c, &u, &b, &[0.0, 0.0]).unwrap(), vec![1.5, 0.5]);
        assert_eq!(kt_iterate(&a, &c, &u, &b, &[1.0, 1.0]).unwrap(), vec![1.0, 1.0]);
        let z = RelaxationSchedule::constant(2, 0.0);
        let cz = build_c_algorithm1(&a, &z).unwrap();
        assert_eq!(kt_iterate(&a, &cz, &z, &b, &[0.3, -4.0]).unwrap(), vec![0.3, -4.0]);
    }

    #[test]
    fn mul_and_transpose_agree_with_dense() {
        let a = MatrixHandle::from_rows(&[
            [1.0, 2.0, 0.0],
            [0.5, -1.0, 1.0],
            [2.0, 0.0, 1.0],
            [0.0, 1.0, 1.0],
        ])
        .unwrap();
        let u = RelaxationSchedule::per_row(vec![0.5, 1.5, 1.0, 0.8]);
        let c = build_c_algorithm1(&a, &u).unwrap();
        let d = c.to_dense();
        let s = [0.3, -1.0, 2.0, 0.7];
        let sv = nalgebra::DVector::from_column_slice(&s);
        let want_t = d.transpose() * &sv;
        let want = &d * &sv;
        assert!(crate::linalg::max_abs_diff(&c.mul_transpose(&s), want_t.as_slice()) < 1e-14);
        assert!(crate::linalg::max_abs_diff(&c.mul(&s), want.as_slice()) < 1e-14);
        assert_eq!(c.compatible_vector(2), vec![0.0, 0.0, 1.0, c.get(2, 3)]);
    }

    #[test]
    fn export_c_as_matrix_market_array() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.mtx");
        let a = a2();
        let c = build_c_algorithm1(&a, &RelaxationSchedule::unrelaxed(2)).unwrap();
        c.write_matrix_market(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix array real general\n2 2\n"));
        let back = mm::read_matrix_market(&p).unwrap();
        assert_eq!(back.to_nalgebra(), c.to_dense());
    }

    #[test]
    fn builder_names_round_trip() {
        for b in Builder::ALL {
            assert_eq!(b.to_string().parse::<Builder>().unwrap(), b);
        }
        assert!("nope".parse::<Builder>().is_err());
    }
}
