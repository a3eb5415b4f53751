//! Iteration operator `Q(u) = P_m(μ_m) ⋯ P_1(μ_1)`, its spectrum restricted
//! to `N(A)^⊥`, and a battery of numerical invariant checks.
//!
//! Everything here forms dense `n × n` matrices and is meant for desk-scale
//! problems. The solver never calls into this module.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kaczmarz::{
    apply_row_projector, project_row_in_place, step_in_place, sweep_in_place,
    RelaxationSchedule, ZeroRowPolicy,
};
use crate::linalg::{max_abs_diff, min_norm_solution, norm2, nullspace_basis, MatrixHandle, NullSpace};
use crate::tanabe::{
    apply_trailing_projectors, assemble_as_oracle, build_c_algorithm1, extract_tu,
    tu_identity_residual, Builder, KtOperator, TriangularFactor, INDEX_FORMULA_MAX_ORDER,
};

/// Largest `n` accepted by [`assemble_q`].
pub const Q_MAX_ORDER: usize = 500;

/// Singular values at or above `1 − UNIT_GAP` are treated as unit values.
pub const UNIT_GAP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QMethod {
    /// `I − Aᵀ C(u)ᵀ Λ M A`
    Identity,
    /// Explicit product of the `m` relaxed projectors.
    Product,
}

#[derive(Debug, Clone)]
pub struct IterationOperator {
    pub q: DMatrix<f64>,
    pub method: QMethod,
}

impl IterationOperator {
    pub fn order(&self) -> usize {
        self.q.nrows()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (&self.q * DVector::from_column_slice(x)).as_slice().to_vec()
    }
}

fn check_q_size(a: &MatrixHandle) -> Result<()> {
    if a.ncols() > Q_MAX_ORDER {
        return Err(Error::Size {
            context: "dense iteration operator order",
            size: a.ncols(),
            cap: Q_MAX_ORDER,
        });
    }
    Ok(())
}

/// `Q(u)` from an already built `C(u)`.
pub fn assemble_q_from_factor(
    a: &MatrixHandle,
    u: &RelaxationSchedule,
    c: &TriangularFactor,
) -> Result<IterationOperator> {
    check_q_size(a)?;
    u.check_len(a.nrows())?;
    a.require_nonzero_rows()?;
    let (m, n) = (a.nrows(), a.ncols());
    // W = Λ M A, then G = Cᵀ W, then Q = I − Aᵀ G.
    let mut w = DMatrix::zeros(m, n);
    for i in 0..m {
        let s = u.mu()[i] / a.row_norm_sq(i);
        for (col, v) in a.row(i).entries() {
            w[(i, col)] = s * v;
        }
    }
    let g = c.to_dense().transpose() * w;
    let mut q = DMatrix::identity(n, n);
    for i in 0..m {
        for (col, v) in a.row(i).entries() {
            for k in 0..n {
                q[(col, k)] -= v * g[(i, k)];
            }
        }
    }
    Ok(IterationOperator {
        q,
        method: QMethod::Identity,
    })
}

pub fn assemble_q(a: &MatrixHandle, u: &RelaxationSchedule, method: QMethod) -> Result<IterationOperator> {
    check_q_size(a)?;
    u.check_len(a.nrows())?;
    match method {
        QMethod::Identity => {
            let c = build_c_algorithm1(a, u)?;
            assemble_q_from_factor(a, u, &c)
        }
        QMethod::Product => {
            a.require_nonzero_rows()?;
            let n = a.ncols();
            let mut q = DMatrix::identity(n, n);
            let mut col = vec![0.0; n];
            for k in 0..n {
                col.copy_from_slice(q.column(k).as_slice());
                for (i, &mu) in u.mu().iter().enumerate() {
                    project_row_in_place(a, i, mu, &mut col)?;
                }
                q.column_mut(k).copy_from_slice(&col);
            }
            Ok(IterationOperator {
                q,
                method: QMethod::Product,
            })
        }
    }
}

/// Partial product `Q_j(u_j) = P_m ⋯ P_{j+1}` (0-based `j`).
pub fn assemble_partial_q(a: &MatrixHandle, u: &RelaxationSchedule, j: usize) -> Result<DMatrix<f64>> {
    check_q_size(a)?;
    u.check_len(a.nrows())?;
    let n = a.ncols();
    let mut q = DMatrix::identity(n, n);
    let mut col = vec![0.0; n];
    for k in 0..n {
        col.copy_from_slice(q.column(k).as_slice());
        apply_trailing_projectors(a, u, j, &mut col)?;
        q.column_mut(k).copy_from_slice(&col);
    }
    Ok(q)
}

/// Singular-value summary of `Q(u)` on `N(A)^⊥`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// Largest restricted singular value strictly below `1 − 1e-10`
    /// (0 when there is none).
    pub sigma_max_restricted: f64,
    /// All singular values of `Q(u)` restricted to `R(Aᵀ)`, descending.
    pub spectrum: Vec<f64>,
    /// `sigma_max_restricted^k` for `k = 1..=K`.
    pub bound_curve: Vec<f64>,
    /// Largest restricted singular value without the `< 1` filter.
    pub restricted_norm: f64,
    /// `true` when `restricted_norm < 1 − 1e-10`, so every error component
    /// in `N(A)^⊥` contracts.
    pub contracting: bool,
    pub rank: usize,
}

/// Restricted spectrum of `Q`, computed as the singular values of `Q V_r`
/// where the columns of `V_r` are an orthonormal basis of `R(Aᵀ) = N(A)^⊥`.
///
/// These are the nonzero-restricted singular values of `Q (I − B Bᵀ)`; the
/// extra `dim N(A)` zeros of that product are not reported.
pub fn restricted_rate(q: &IterationOperator, a: &MatrixHandle, curve_len: usize) -> Result<RateReport> {
    if q.order() != a.ncols() {
        return Err(Error::dims("iteration operator order", a.ncols(), q.order()));
    }
    let ns = nullspace_basis(a)?;
    restricted_rate_with(q, &ns, curve_len)
}

pub fn restricted_rate_with(q: &IterationOperator, ns: &NullSpace, curve_len: usize) -> Result<RateReport> {
    let vr = ns.row_basis();
    let mut spectrum: Vec<f64> = if vr.ncols() == 0 {
        Vec::new()
    } else {
        crate::linalg::singular_values(&(&q.q * vr))?
    };
    spectrum.sort_by(|p, q| q.total_cmp(p));
    let restricted_norm = spectrum.first().copied().unwrap_or(0.0);
    let sigma = spectrum
        .iter()
        .copied()
        .find(|&s| s < 1.0 - UNIT_GAP)
        .unwrap_or(0.0);
    let bound_curve = (1..=curve_len).map(|k| sigma.powi(k as i32)).collect();
    Ok(RateReport {
        sigma_max_restricted: sigma,
        spectrum,
        bound_curve,
        restricted_norm,
        contracting: restricted_norm < 1.0 - UNIT_GAP,
        rank: ns.rank,
    })
}

/// Assembles `Q(u)` and reports its restricted rate.
pub fn rate_report(a: &MatrixHandle, u: &RelaxationSchedule, curve_len: usize) -> Result<RateReport> {
    let q = assemble_q(a, u, QMethod::Identity)?;
    restricted_rate(&q, a, curve_len)
}

/// `Qᵀ x = P_1 ⋯ P_m x` applied matrix-free.
fn apply_qt(a: &MatrixHandle, u: &RelaxationSchedule, x: &mut [f64]) -> Result<()> {
    for i in (0..a.nrows()).rev() {
        project_row_in_place(a, i, u.mu()[i], x)?;
    }
    Ok(())
}

/// Measures `‖Q|_{N(A)^⊥}‖₂` by power iteration on `QᵀQ` restricted to
/// `R(Aᵀ)`, using only row projections (no dense `Q`).
pub fn power_contraction(
    a: &MatrixHandle,
    u: &RelaxationSchedule,
    ns: &NullSpace,
    max_iters: usize,
    seed: u64,
) -> Result<f64> {
    u.check_len(a.nrows())?;
    let n = a.ncols();
    if ns.rank == 0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    x = ns.project_complement(&x);
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let zero = vec![0.0; a.nrows()];
    let mut est = 0.0;
    for _ in 0..max_iters {
        let mut y = x.clone();
        sweep_in_place(a, &zero, u, &mut y, ZeroRowPolicy::Error)?;
        let sigma = norm2(&y);
        apply_qt(a, u, &mut y)?;
        let mut y = ns.project_complement(&y);
        let ny = norm2(&y);
        if ny == 0.0 {
            return Ok(sigma);
        }
        y.iter_mut().for_each(|v| *v /= ny);
        let done = (sigma - est).abs() <= 1e-15 * sigma.max(1.0);
        est = sigma;
        x = y;
        if done {
            break;
        }
    }
    Ok(est)
}

/// Outcome of one invariant check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The check's hypotheses do not hold for this input.
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    pub max_violation: f64,
    pub tolerance: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub checks: Vec<CheckResult>,
    pub rate: Option<RateReport>,
}

impl InvariantReport {
    /// `true` when no check failed.
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Suite {
    checks: Vec<CheckResult>,
}

impl Suite {
    fn record(&mut self, name: &str, violation: f64, tol: f64, note: impl Into<String>) {
        let status = if violation <= tol {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        self.checks.push(CheckResult {
            name: name.into(),
            status,
            max_violation: violation,
            tolerance: tol,
            note: note.into(),
        });
    }

    fn skip(&mut self, name: &str, tol: f64, note: impl Into<String>) {
        self.checks.push(CheckResult {
            name: name.into(),
            status: CheckStatus::NotApplicable,
            max_violation: 0.0,
            tolerance: tol,
            note: note.into(),
        });
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// A vector with `a_iᵀ x == 0` exactly in floating point: adjacent pairs
/// `(x_p, x_q) = ±(a_q, −a_p)` cancel term by term in the dot product.
fn exact_orthogonal(a: &MatrixHandle, i: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = a.ncols();
    let mut row = vec![0.0; n];
    a.row(i).axpy(1.0, &mut row);
    let mut x = vec![0.0; n];
    for p in (0..n.saturating_sub(1)).step_by(2) {
        let s = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        x[p] = s * row[p + 1];
        x[p + 1] = -s * row[p];
    }
    x
}

/// Relaxation values used for the Pythagorean identity.
pub const PYTHAGOREAN_MUS: [f64; 7] = [-0.5, 0.0, 0.7, 1.0, 1.3, 2.0, 2.5];

/// Number of sweeps used for the error-space check with an out-of-range schedule.
const OUT_OF_RANGE_SWEEPS: usize = 4;

/// Runs every structural and convergence invariant on one system.
///
/// `trials` random vectors are drawn for each vector-level check. Checks
/// whose hypotheses fail (zero rows, `μ` outside `(0, 2)`, too many rows for
/// the index formula) are reported as [`CheckStatus::NotApplicable`].
pub fn run_invariant_suite(
    a: &MatrixHandle,
    b: &[f64],
    u: &RelaxationSchedule,
    trials: usize,
    seed: u64,
) -> Result<InvariantReport> {
    let (m, n) = (a.nrows(), a.ncols());
    if b.len() != m {
        return Err(Error::dims("rhs length", m, b.len()));
    }
    u.check_len(m)?;
    a.require_nonzero_rows()?;
    check_q_size(a)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Suite { checks: Vec::new() };
    let ns = nullspace_basis(a)?;
    let xdag = min_norm_solution(a, b)?;
    let convergent = u.is_convergent_regime();
    let row_of = |rng: &mut ChaCha8Rng| rng.gen_range(0..m);

    // Row projectors.
    let mut nonexp = 0.0f64;
    let mut fixed = 0.0f64;
    let mut pyth = 0.0f64;
    for _ in 0..trials {
        let i = row_of(&mut rng);
        let x = random_vec(&mut rng, n);
        let nx = norm2(&x);
        let mu = u.mu()[i];
        if mu > 0.0 && mu < 2.0 {
            let px = apply_row_projector(a, i, mu, &x)?;
            nonexp = nonexp.max(norm2(&px) - nx);
        }
        let z = exact_orthogonal(a, i, &mut rng);
        for &mu in PYTHAGOREAN_MUS.iter().chain(std::iter::once(&u.mu()[i])) {
            let pz = apply_row_projector(a, i, mu, &z)?;
            fixed = fixed.max(max_abs_diff(&pz, &z));

            let px = apply_row_projector(a, i, mu, &x)?;
            let ax = a.row(i).dot(&x);
            let want = nx * nx - mu * (2.0 - mu) * ax * ax / a.row_norm_sq(i);
            let got = norm2(&px).powi(2);
            pyth = pyth.max((got - want).abs() / (nx * nx).max(got));
        }
    }
    if convergent {
        s.record("projector_nonexpansion", nonexp, 1e-12, "‖P_i(μ_i)x‖ − ‖x‖");
    } else {
        s.skip("projector_nonexpansion", 1e-12, "schedule leaves (0, 2)");
    }
    s.record("projector_fixed_points", fixed, 1e-15, "a_iᵀx = 0 ⇒ P_i(μ)x = x, any μ");
    s.record("pythagorean_identity", pyth, 1e-12, "relative, μ ∈ {−0.5, 0, 0.7, 1, 1.3, 2, 2.5, μ_i}");

    // Error-space invariant for relaxed Kaczmarz steps, in and out of (0, 2).
    let y0 = {
        let mut y = random_vec(&mut rng, n);
        if ns.dim() > 0 {
            let extra = DVector::from_column_slice(&random_vec(&mut rng, ns.dim()));
            let shift = &ns.basis * extra;
            y.iter_mut().zip(shift.iter()).for_each(|(p, q)| *p += q);
        }
        y
    };
    let target: Vec<f64> = {
        let pn = ns.project(&y0);
        xdag.iter().zip(&pn).map(|(p, q)| p + q).collect()
    };
    let wild = RelaxationSchedule::per_row(
        u.mu()
            .iter()
            .enumerate()
            .map(|(i, &v)| match i % 3 {
                0 => 2.5,
                1 => -0.3,
                _ => v,
            })
            .collect(),
    );
    let mut drift = 0.0f64;
    for (sched, sweeps) in [(u, 50usize), (&wild, OUT_OF_RANGE_SWEEPS)] {
        let mut x = y0.clone();
        for _ in 0..sweeps {
            for i in 0..m {
                step_in_place(a, b, i, sched.mu()[i], &mut x)?;
                let e: Vec<f64> = x.iter().zip(&target).map(|(p, q)| p - q).collect();
                drift = drift.max(norm2(&ns.project(&e)));
            }
        }
    }
    s.record("error_space_invariant", drift, 1e-10, "‖P_N(A) e_k‖ for schedules inside and outside (0, 2)");

    // Convergence of relaxed Kaczmarz from x0 = 0.
    if convergent {
        let mut x = vec![0.0; n];
        let mut prev = norm2(&xdag);
        let mut growth = 0.0f64;
        let mut sweeps = 0;
        while sweeps < 10_000 {
            for i in 0..m {
                step_in_place(a, b, i, u.mu()[i], &mut x)?;
                let e = norm2(&crate::linalg::sub(&x, &xdag));
                growth = growth.max(e - prev);
                prev = e;
            }
            sweeps += 1;
            if prev < 1e-8 {
                break;
            }
        }
        let reached = if prev < 1e-8 { 0.0 } else { prev };
        s.record("kaczmarz_convergence", reached, 1e-8, format!("‖x_k − x†‖ after {sweeps} sweeps"));
        s.record("kaczmarz_error_monotone", growth.max(0.0), 1e-12, "max increase of ‖e_k‖ per step");
    } else {
        s.skip("kaczmarz_convergence", 1e-8, "convergence not guaranteed outside (0, 2)");
        s.skip("kaczmarz_error_monotone", 1e-12, "convergence not guaranteed outside (0, 2)");
    }

    // Compatibility factor.
    let c = build_c_algorithm1(a, u)?;
    if m <= INDEX_FORMULA_MAX_ORDER {
        let h = Builder::HProduct.build(a, u)?;
        let idx = Builder::IndexFormula.build(a, u)?;
        let worst = c.max_abs_diff(&h).max(c.max_abs_diff(&idx)).max(h.max_abs_diff(&idx));
        s.record("builder_agreement", worst, 1e-10, "algorithm1 / h-product / index-formula");
    } else {
        let h = Builder::HProduct.build(a, u)?;
        s.record("builder_agreement", c.max_abs_diff(&h), 1e-10, "algorithm1 / h-product (m too large for index formula)");
    }
    let as_oracle = assemble_as_oracle(a, u)?;
    s.record("decomposition_identity", (c.mul_matrix(a) - &as_oracle).amax(), 1e-10, "max |C(u)A − A_S(u)|");

    let ones = RelaxationSchedule::unrelaxed(m);
    let c1 = build_c_algorithm1(a, &ones)?;
    let c1b = Builder::Algorithm1.build(a, &RelaxationSchedule::constant(m, 1.0))?;
    s.record("unit_relaxation_reduction", c1.max_abs_diff(&c1b), 0.0, "C(1) through both entry points");

    let tu = extract_tu(&c, a, u)?;
    let diag = (0..m)
        .map(|i| {
            let want = u.mu()[i] * a.row_norm_sq(i);
            (tu.get(i, i) - want).abs() / want.abs().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max);
    s.record("tu_identity", tu_identity_residual(&c, &tu, a, u), 1e-12, "max |ΛC − T_u M|");
    s.record("tu_diagonal", diag, 1e-12, "relative |T_u(i,i) − μ_i‖a_i‖²|");

    // Forward sequential compatibility: Q_j a_i ∈ R(Aᵀ) for i ≤ j.
    let mut compat = 0.0f64;
    for i in 0..m {
        let mut ai = vec![0.0; n];
        a.row(i).axpy(1.0, &mut ai);
        let scale = norm2(&ai).max(1.0);
        for j in i..m {
            let mut v = ai.clone();
            apply_trailing_projectors(a, u, j, &mut v)?;
            compat = compat.max(ns.rowspace_residual(&v) / scale);
        }
    }
    s.record("forward_sequential_compatibility", compat, 1e-10, "distance of Q_j a_i from R(Aᵀ)");

    // Standard form versus sweeps.
    let op = KtOperator::new(a, u, c.clone())?;
    let mut sweep_eq = 0.0f64;
    for _ in 0..trials {
        let y = random_vec(&mut rng, n);
        let bb: Vec<f64> = if rng.gen_bool(0.5) { b.to_vec() } else { random_vec(&mut rng, m) };
        let mut kt = y.clone();
        op.apply_in_place(a, &bb, &mut kt);
        let mut sw = y.clone();
        sweep_in_place(a, &bb, u, &mut sw, ZeroRowPolicy::Error)?;
        let scale = norm2(&sw).max(norm2(&y)).max(f64::MIN_POSITIVE);
        sweep_eq = sweep_eq.max(norm2(&crate::linalg::sub(&kt, &sw)) / scale);
    }
    s.record("sweep_equivalence", sweep_eq, 1e-12, "relative ‖kt_iterate(y) − sweep(y)‖");

    let q_id = assemble_q_from_factor(a, u, &c)?;
    let q_pr = assemble_q(a, u, QMethod::Product)?;
    s.record("q_identity", (&q_id.q - &q_pr.q).amax(), 1e-11, "max |(I − A_SᵀΛMA) − P_m⋯P_1|");
    let zero_b = vec![0.0; m];
    let mut q_basis = 0.0f64;
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        op.apply_in_place(a, &zero_b, &mut e);
        q_basis = q_basis.max(max_abs_diff(&e, q_pr.q.column(k).as_slice()));
    }
    s.record("q_matrix_free", q_basis, 1e-11, "kt_iterate with b = 0 on e_k versus P_m⋯P_1 e_k");

    // Operator-level nonexpansion and the rate bound.
    let rate = restricted_rate_with(&q_pr, &ns, 0)?;
    if convergent {
        let mut expand = 0.0f64;
        let mut null_fix = 0.0f64;
        let mut min_gap = f64::INFINITY;
        for _ in 0..trials {
            let mut x = random_vec(&mut rng, n);
            let nx = norm2(&x);
            x.iter_mut().for_each(|v| *v /= nx);
            expand = expand.max(norm2(&q_pr.apply(&x)) - 1.0);
            if ns.dim() > 0 {
                let mut z = ns.project(&x);
                let nz = norm2(&z);
                z.iter_mut().for_each(|v| *v /= nz);
                null_fix = null_fix.max(norm2(&crate::linalg::sub(&q_pr.apply(&z), &z)));
            }
            let mut r = ns.project_complement(&x);
            let nr = norm2(&r);
            if nr > 1e-8 {
                r.iter_mut().for_each(|v| *v /= nr);
                min_gap = min_gap.min(1.0 - norm2(&q_pr.apply(&r)));
            }
        }
        s.record("q_nonexpansion", expand.max(0.0), 1e-12, "‖Q x‖ − ‖x‖ for unit x");
        s.record("q_null_space_fixed", null_fix, 1e-12, "‖Q z − z‖ for unit z ∈ N(A)");
        let note = format!("min (‖x‖ − ‖Q x‖) on unit x ∈ N(A)^⊥ = {min_gap:.3e}");
        s.record("q_strict_contraction", if min_gap > 0.0 { 0.0 } else { 1.0 }, 0.0, note);

        let sigma = rate.sigma_max_restricted;
        let (step_viol, _) = kt_error_decay(a, &op, b, &xdag, &ns, &y0, sigma, 200)?;
        s.record("rate_bound_per_step", step_viol, 1e-9, format!("‖ē_k‖ − σ‖ē_{{k−1}}‖, σ = {sigma:.6}"));
    } else {
        for name in ["q_nonexpansion", "q_null_space_fixed", "q_strict_contraction", "rate_bound_per_step"] {
            s.skip(name, 0.0, "nonexpansion of Q(u) needs 0 < μ_i < 2");
        }
    }

    Ok(InvariantReport {
        checks: s.checks,
        rate: Some(rate),
    })
}

/// Runs `iters` standard-form iterations from `y0` and returns the largest
/// `‖ē_k‖ − σ‖ē_{k−1}‖` and the error norms, with
/// `ē_k = y_k − x† − P_{N(A)} y_0`.
pub fn kt_error_decay(
    a: &MatrixHandle,
    op: &KtOperator,
    b: &[f64],
    xdag: &[f64],
    ns: &NullSpace,
    y0: &[f64],
    sigma: f64,
    iters: usize,
) -> Result<(f64, Vec<f64>)> {
    let pn = ns.project(y0);
    let target: Vec<f64> = xdag.iter().zip(&pn).map(|(p, q)| p + q).collect();
    let mut y = y0.to_vec();
    let mut errs = vec![norm2(&crate::linalg::sub(&y, &target))];
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..iters {
        op.apply_in_place(a, b, &mut y);
        let e = norm2(&crate::linalg::sub(&y, &target));
        worst = worst.max(e - sigma * errs.last().unwrap());
        errs.push(e);
    }
    Ok((worst.max(0.0), errs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a2() -> MatrixHandle {
        MatrixHandle::from_rows(&[[1.0, 0.0], [1.0, 1.0]]).unwrap()
    }

    #[test]
    fn q_examples() {
        let id = MatrixHandle::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let u = RelaxationSchedule::per_row(vec![0.3, 1.6]);
        for method in [QMethod::Identity, QMethod::Product] {
            let q = assemble_q(&id, &u, method).unwrap();
            assert!((q.q.clone() - DMatrix::from_row_slice(2, 2, &[0.7, 0.0, 0.0, -0.6])).amax() < 1e-15);
        }
        let want = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.0, 0.5]);
        for method in [QMethod::Identity, QMethod::Product] {
            let q = assemble_q(&a2(), &RelaxationSchedule::unrelaxed(2), method).unwrap();
            assert!((q.q - &want).amax() < 1e-15, "{method:?}");
        }
        let z = RelaxationSchedule::constant(2, 0.0);
        assert_eq!(assemble_q(&a2(), &z, QMethod::Product).unwrap().q, DMatrix::identity(2, 2));
        assert_eq!(assemble_q(&a2(), &z, QMethod::Identity).unwrap().q, DMatrix::identity(2, 2));
    }

    #[test]
    fn partial_products() {
        let a = a2();
        let u = RelaxationSchedule::per_row(vec![0.5, 1.5]);
        assert_eq!(assemble_partial_q(&a, &u, 1).unwrap(), DMatrix::identity(2, 2));
        let q0 = assemble_partial_q(&a, &u, 0).unwrap();
        let p2 = DMatrix::identity(2, 2) - DMatrix::from_element(2, 2, 0.75);
        assert!((q0 - p2).amax() < 1e-15);
    }

    #[test]
    fn rate_examples() {
        let r = rate_report(&a2(), &RelaxationSchedule::unrelaxed(2), 3).unwrap();
        assert!((r.sigma_max_restricted - 0.5f64.sqrt()).abs() < 1e-14);
        assert_eq!(r.spectrum.len(), 2);
        assert!(r.spectrum[1].abs() < 1e-15);
        assert!((r.bound_curve[2] - 0.5f64.powf(1.5)).abs() < 1e-14);
        assert!(r.contracting);

        let id = MatrixHandle::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let r = rate_report(&id, &RelaxationSchedule::unrelaxed(2), 1).unwrap();
        assert_eq!(r.sigma_max_restricted, 0.0);

        let rank1 = MatrixHandle::from_rows(&[[1.0, 0.0], [2.0, 0.0]]).unwrap();
        let r = rate_report(&rank1, &RelaxationSchedule::unrelaxed(2), 1).unwrap();
        assert_eq!(r.rank, 1);
        assert_eq!(r.spectrum.len(), 1);
        assert!(r.sigma_max_restricted.abs() < 1e-15);
    }

    #[test]
    fn out_of_range_schedule_is_not_contracting() {
        let a = MatrixHandle::from_rows(&[[1.0, 0.0], [1.0, 0.1]]).unwrap();
        let r = rate_report(&a, &RelaxationSchedule::per_row(vec![2.5, 1.0]), 0).unwrap();
        assert!(!r.contracting);
        assert!(r.restricted_norm > 1.0);
    }

    #[test]
    fn power_iteration_matches_svd() {
        let a = MatrixHandle::from_rows(&[[1.0, 2.0, 0.0], [0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.5]])
            .unwrap();
        let u = RelaxationSchedule::per_row(vec![0.7, 1.2, 1.0, 0.4]);
        let ns = nullspace_basis(&a).unwrap();
        let r = rate_report(&a, &u, 0).unwrap();
        let p = power_contraction(&a, &u, &ns, 10_000, 3).unwrap();
        assert!((p - r.restricted_norm).abs() < 1e-10, "{p} vs {}", r.restricted_norm);
    }

    #[test]
    fn exact_orthogonal_is_exact() {
        let a = MatrixHandle::from_rows(&[[0.1, 0.7, -0.3, 1.9, 2.2]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let z = exact_orthogonal(&a, 0, &mut rng);
            assert_eq!(a.row(0).dot(&z), 0.0);
        }
    }

    #[test]
    fn suite_on_orthogonal_rows() {
        let a = MatrixHandle::from_rows(&[[2.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 3.0, 0.0]]).unwrap();
        let b = a.matvec(&[1.0, -1.0, 0.5]);
        let r = run_invariant_suite(&a, &b, &RelaxationSchedule::unrelaxed(3), 50, 1).unwrap();
        assert!(r.all_passed(), "{r:#?}");
        assert_eq!(r.rate.unwrap().sigma_max_restricted, 0.0);
    }

    #[test]
    fn suite_boundary_schedule() {
        let a = MatrixHandle::from_rows(&[[1.0, 2.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let b = a.matvec(&[0.5, 0.5]);
        let u = RelaxationSchedule::per_row(vec![2.0, 1.0, 1.0]);
        let r = run_invariant_suite(&a, &b, &u, 50, 2).unwrap();
        assert!(r.all_passed(), "{r:#?}");
        assert_eq!(r.get("kaczmarz_convergence").unwrap().status, CheckStatus::NotApplicable);
        assert_eq!(r.get("pythagorean_identity").unwrap().status, CheckStatus::Pass);
    }
}
