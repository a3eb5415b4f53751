//! Relaxed single-row projections and full cyclic sweeps.
//!
//! One relaxed Kaczmarz step on row `i` is
//!
//! ```text
//! x ← x + μ_i (b_i − ⟨a_i, x⟩) / ‖a_i‖₂² · a_i
//! ```
//!
//! and a sweep applies it for `i = 1..m` in order. With `μ_i = 1` this is the
//! classic Kaczmarz method.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::MatrixHandle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleMode {
    Constant { value: f64 },
    PerRow,
    Random { lo: f64, hi: f64, seed: u64 },
}

/// Relaxation parameters `u = (μ_1, …, μ_m)`; `Λ = diag(u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationSchedule {
    mu: Vec<f64>,
    mode: ScheduleMode,
}

impl RelaxationSchedule {
    pub fn constant(m: usize, value: f64) -> Self {
        Self {
            mu: vec![value; m],
            mode: ScheduleMode::Constant { value },
        }
    }

    /// All-ones schedule: the unrelaxed method.
    pub fn unrelaxed(m: usize) -> Self {
        Self::constant(m, 1.0)
    }

    pub fn per_row(mu: Vec<f64>) -> Self {
        Self {
            mu,
            mode: ScheduleMode::PerRow,
        }
    }

    /// `m` values drawn uniformly from `[lo, hi)` with a seeded ChaCha8 stream.
    pub fn random(m: usize, lo: f64, hi: f64, seed: u64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Param(format!("random schedule needs lo < hi, got {lo}, {hi}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = (0..m).map(|_| rng.gen_range(lo..hi)).collect();
        Ok(Self {
            mu,
            mode: ScheduleMode::Random { lo, hi, seed },
        })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn mode(&self) -> &ScheduleMode {
        &self.mode
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// `true` when every `μ_i` lies in the open interval `(0, 2)`, the range in
    /// which each relaxed projector is nonexpansive and the sweep converges.
    pub fn is_convergent_regime(&self) -> bool {
        self.mu.iter().all(|&m| m > 0.0 && m < 2.0)
    }

    /// Human-readable warning when the schedule leaves `(0, 2)`.
    pub fn warning(&self) -> Option<String> {
        let bad: Vec<usize> = self
            .mu
            .iter()
            .enumerate()
            .filter(|(_, &m)| !(m > 0.0 && m < 2.0))
            .map(|(i, _)| i)
            .collect();
        if bad.is_empty() {
            return None;
        }
        Some(format!(
            "{} relaxation parameter(s) outside (0, 2) (first at row {}); convergence requires 0 < mu_i < 2",
            bad.len(),
            bad[0] + 1
        ))
    }

    pub fn check_len(&self, m: usize) -> Result<()> {
        if self.mu.len() != m {
            return Err(Error::dims("relaxation schedule length", m, self.mu.len()));
        }
        if self.mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("relaxation schedule"));
        }
        Ok(())
    }
}

/// What a sweep does with an identically zero row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroRowPolicy {
    #[default]
    Error,
    /// Treat the row's projector as the identity.
    Skip,
}

/// `x ← P_i(μ) x = x − μ (a_iᵀx / ‖a_i‖₂²) a_i`, in place.
pub fn project_row_in_place(a: &MatrixHandle, i: usize, mu: f64, x: &mut [f64]) -> Result<()> {
    let nrm = a.row_norm_sq(i);
    if nrm == 0.0 {
        return Err(Error::ZeroRow { row: i });
    }
    let row = a.row(i);
    let coef = -mu * row.dot(x) / nrm;
    row.axpy(coef, x);
    Ok(())
}

/// Applies the relaxed projector `P_i(μ) = I − μ a_i a_iᵀ / ‖a_i‖₂²` to `x`
/// without forming it.
pub fn apply_row_projector(a: &MatrixHandle, i: usize, mu: f64, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != a.ncols() {
        return Err(Error::dims("apply_row_projector x", a.ncols(), x.len()));
    }
    let mut out = x.to_vec();
    project_row_in_place(a, i, mu, &mut out)?;
    Ok(out)
}

/// One relaxed Kaczmarz update on row `i`, in place.
pub fn step_in_place(
    a: &MatrixHandle,
    b: &[f64],
    i: usize,
    mu: f64,
    x: &mut [f64],
) -> Result<()> {
    let nrm = a.row_norm_sq(i);
    if nrm == 0.0 {
        return Err(Error::ZeroRow { row: i });
    }
    let row = a.row(i);
    let coef = mu * (b[i] - row.dot(x)) / nrm;
    row.axpy(coef, x);
    Ok(())
}

pub fn kaczmarz_step(
    a: &MatrixHandle,
    b: &[f64],
    i: usize,
    mu: f64,
    x: &[f64],
) -> Result<Vec<f64>> {
    check_system(a, b, x)?;
    let mut out = x.to_vec();
    step_in_place(a, b, i, mu, &mut out)?;
    Ok(out)
}

fn check_system(a: &MatrixHandle, b: &[f64], x: &[f64]) -> Result<()> {
    if b.len() != a.nrows() {
        return Err(Error::dims("rhs length", a.nrows(), b.len()));
    }
    if x.len() != a.ncols() {
        return Err(Error::dims("iterate length", a.ncols(), x.len()));
    }
    Ok(())
}

/// One full sweep `i = 1..m`, in place.
pub fn sweep_in_place(
    a: &MatrixHandle,
    b: &[f64],
    u: &RelaxationSchedule,
    x: &mut [f64],
    policy: ZeroRowPolicy,
) -> Result<()> {
    check_system(a, b, x)?;
    u.check_len(a.nrows())?;
    for (i, &mu) in u.mu().iter().enumerate() {
        match step_in_place(a, b, i, mu, x) {
            Err(Error::ZeroRow { .. }) if policy == ZeroRowPolicy::Skip => {}
            r => r?,
        }
    }
    Ok(())
}

pub fn sweep(
    a: &MatrixHandle,
    b: &[f64],
    u: &RelaxationSchedule,
    x: &[f64],
    policy: ZeroRowPolicy,
) -> Result<Vec<f64>> {
    let mut out = x.to_vec();
    sweep_in_place(a, b, u, &mut out, policy)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm2;

    fn a2() -> MatrixHandle {
        MatrixHandle::from_rows(&[[1.0, 0.0], [1.0, 1.0]]).unwrap()
    }

    #[test]
    fn projector_examples() {
        let a = MatrixHandle::from_rows(&[[1.0, 0.0]]).unwrap();
        assert_eq!(apply_row_projector(&a, 0, 1.0, &[3.0, 4.0]).unwrap(), vec![0.0, 4.0]);
        let r = apply_row_projector(&a, 0, 2.0, &[3.0, 4.0]).unwrap();
        assert_eq!(r, vec![-3.0, 4.0]);
        assert_eq!(norm2(&r), 5.0);
        assert_eq!(apply_row_projector(&a, 0, 0.5, &[3.0, 4.0]).unwrap(), vec![1.5, 4.0]);
    }

    #[test]
    fn projector_errors() {
        let a = MatrixHandle::from_rows(&[[0.0, 0.0]]).unwrap();
        assert!(matches!(
            apply_row_projector(&a, 0, 1.0, &[1.0, 1.0]),
            Err(Error::ZeroRow { row: 0 })
        ));
        assert!(apply_row_projector(&a2(), 0, 1.0, &[1.0]).is_err());
    }

    #[test]
    fn step_examples() {
        let a = a2();
        let b = [1.0, 2.0];
        let x1 = kaczmarz_step(&a, &b, 0, 1.0, &[0.0, 0.0]).unwrap();
        assert_eq!(x1, vec![1.0, 0.0]);
        let x2 = kaczmarz_step(&a, &b, 1, 1.0, &x1).unwrap();
        assert_eq!(x2, vec![1.5, 0.5]);
        // Already on the hyperplane of row 1.
        assert_eq!(kaczmarz_step(&a, &b, 0, 1.0, &[1.0, 7.0]).unwrap(), vec![1.0, 7.0]);
    }

    #[test]
    fn sweep_examples() {
        let a = a2();
        let b = [1.0, 2.0];
        let u = RelaxationSchedule::unrelaxed(2);
        assert_eq!(
            sweep(&a, &b, &u, &[0.0, 0.0], ZeroRowPolicy::Error).unwrap(),
            vec![1.5, 0.5]
        );
        let id = MatrixHandle::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(
            sweep(&id, &[-3.0, 0.25], &u, &[0.0, 0.0], ZeroRowPolicy::Error).unwrap(),
            vec![-3.0, 0.25]
        );
        let zero = RelaxationSchedule::constant(2, 0.0);
        assert_eq!(
            sweep(&a, &b, &zero, &[0.7, -1.2], ZeroRowPolicy::Error).unwrap(),
            vec![0.7, -1.2]
        );
    }

    #[test]
    fn sweep_zero_row_policy() {
        let a = MatrixHandle::from_rows(&[[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]).unwrap();
        let b = [1.0, 0.0, 2.0];
        let u = RelaxationSchedule::unrelaxed(3);
        assert!(matches!(
            sweep(&a, &b, &u, &[0.0, 0.0], ZeroRowPolicy::Error),
            Err(Error::ZeroRow { row: 1 })
        ));
        assert_eq!(
            sweep(&a, &b, &u, &[0.0, 0.0], ZeroRowPolicy::Skip).unwrap(),
            vec![1.0, 2.0]
        );
    }

    #[test]
    fn sweep_checks_lengths() {
        let a = a2();
        let u = RelaxationSchedule::unrelaxed(3);
        assert!(matches!(
            sweep(&a, &[1.0, 2.0], &u, &[0.0, 0.0], ZeroRowPolicy::Error),
            Err(Error::DimensionMismatch { .. })
        ));
        let u = RelaxationSchedule::unrelaxed(2);
        assert!(sweep(&a, &[1.0], &u, &[0.0, 0.0], ZeroRowPolicy::Error).is_err());
    }

    #[test]
    fn schedule_modes() {
        let r1 = RelaxationSchedule::random(10, 0.5, 1.5, 1).unwrap();
        let r2 = RelaxationSchedule::random(10, 0.5, 1.5, 1).unwrap();
        let r3 = RelaxationSchedule::random(10, 0.5, 1.5, 2).unwrap();
        assert_eq!(r1, r2);
        assert_ne!(r1.mu(), r3.mu());
        assert!(r1.mu().iter().all(|&m| (0.5..1.5).contains(&m)));
        assert!(r1.is_convergent_regime());
        assert!(r1.warning().is_none());
        assert!(RelaxationSchedule::random(3, 1.0, 1.0, 0).is_err());

        let bad = RelaxationSchedule::per_row(vec![1.0, 2.0, 0.5]);
        assert!(!bad.is_convergent_regime());
        assert!(bad.warning().unwrap().contains("row 2"));
        assert!(!RelaxationSchedule::constant(2, 0.0).is_convergent_regime());
    }
}
