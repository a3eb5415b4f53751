//! Iteration driver shared by every method: residual tracking, stopping and
//! divergence detection.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kaczmarz::{sweep_in_place, RelaxationSchedule, ZeroRowPolicy};
use crate::linalg::{all_finite, norm2, MatrixHandle};
use crate::tanabe::{Builder, KtOperator, TriangularFactor};

/// A run is declared diverged once the residual exceeds this multiple of the
/// initial residual.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Cyclic sweeps with `μ ≡ 1`.
    Kaczmarz,
    /// Cyclic sweeps with the given schedule.
    RelaxedKaczmarz,
    /// Standard-form Kaczmarz-Tanabe iteration with `μ ≡ 1`.
    Kt,
    /// Standard-form relaxation Kaczmarz-Tanabe iteration.
    RelaxedKt,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Kaczmarz,
        Method::RelaxedKaczmarz,
        Method::Kt,
        Method::RelaxedKt,
    ];

    pub fn is_relaxed(self) -> bool {
        matches!(self, Method::RelaxedKaczmarz | Method::RelaxedKt)
    }

    pub fn is_standard_form(self) -> bool {
        matches!(self, Method::Kt | Method::RelaxedKt)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Kaczmarz => "kaczmarz",
            Method::RelaxedKaczmarz => "relaxed-kaczmarz",
            Method::Kt => "kt",
            Method::RelaxedKt => "relaxed-kt",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| {
                Error::Param(format!(
                    "unknown method '{s}' (expected kaczmarz, relaxed-kaczmarz, kt or relaxed-kt)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// `‖b − A y‖₂ / ‖b‖₂ ≤ tol` (absolute when `b = 0`).
    #[default]
    RelativeResidual,
    /// `‖y − reference‖₂ / ‖reference‖₂ ≤ tol`; needs a reference.
    RelativeError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub method: Method,
    pub tol: f64,
    pub max_iters: usize,
    /// Starting point; zero when `None`.
    pub x0: Option<Vec<f64>>,
    /// Point the iterates are expected to converge to. Enables error tracking.
    pub reference: Option<Vec<f64>>,
    pub stop: StopRule,
    pub builder: Builder,
    pub zero_rows: ZeroRowPolicy,
    /// Keep every iterate in [`SolveRun::iterates`].
    pub keep_iterates: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            method: Method::RelaxedKt,
            tol: 1e-8,
            max_iters: 10_000,
            x0: None,
            reference: None,
            stop: StopRule::RelativeResidual,
            builder: Builder::Algorithm1,
            zero_rows: ZeroRowPolicy::Error,
            keep_iterates: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub rel_residual: f64,
    pub abs_error: Option<f64>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SolveRun {
    pub method: Method,
    /// Relaxation parameters actually used (all ones for the unrelaxed methods).
    pub mu: Vec<f64>,
    pub records: Vec<IterRecord>,
    pub termination: Termination,
    pub solution: Vec<f64>,
    /// `C(u)` for the standard-form methods.
    pub factor: Option<TriangularFactor>,
    /// `y_0, y_1, …` when [`SolveConfig::keep_iterates`] is set.
    pub iterates: Vec<Vec<f64>>,
}

impl SolveRun {
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iter)
    }

    pub fn final_record(&self) -> &IterRecord {
        self.records.last().expect("at least the initial record")
    }
}

fn relative_residual(a: &MatrixHandle, b: &[f64], y: &[f64], bnorm: f64) -> f64 {
    let ay = a.matvec(y);
    let r: f64 = b
        .iter()
        .zip(&ay)
        .map(|(bi, ai)| (bi - ai) * (bi - ai))
        .sum::<f64>()
        .sqrt();
    if bnorm > 0.0 {
        r / bnorm
    } else {
        r
    }
}

fn distance(y: &[f64], r: &[f64]) -> f64 {
    y.iter()
        .zip(r)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

/// Runs `method` on `A y = b` until the stopping rule holds, `max_iters`
/// iterations have been taken, or the iterates blow up.
///
/// The system is assumed consistent. Unrelaxed methods ignore `u` and use
/// `μ ≡ 1`. For the standard-form methods `C(u)` is computed once up front
/// with `config.builder`.
pub fn solve(
    a: &MatrixHandle,
    b: &[f64],
    u: &RelaxationSchedule,
    config: &SolveConfig,
) -> Result<SolveRun> {
    let (m, n) = (a.nrows(), a.ncols());
    if b.len() != m {
        return Err(Error::dims("rhs length", m, b.len()));
    }
    if !all_finite(b) {
        return Err(Error::NonFinite("rhs"));
    }
    if !(config.tol >= 0.0) {
        return Err(Error::Param(format!("tolerance must be non-negative, got {}", config.tol)));
    }
    let schedule = if config.method.is_relaxed() {
        u.check_len(m)?;
        u.clone()
    } else {
        RelaxationSchedule::unrelaxed(m)
    };
    let mut y = match &config.x0 {
        Some(x0) if x0.len() != n => return Err(Error::dims("x0 length", n, x0.len())),
        Some(x0) if !all_finite(x0) => return Err(Error::NonFinite("x0")),
        Some(x0) => x0.clone(),
        None => vec![0.0; n],
    };
    if let Some(r) = &config.reference {
        if r.len() != n {
            return Err(Error::dims("reference length", n, r.len()));
        }
    }
    if config.stop == StopRule::RelativeError && config.reference.is_none() {
        return Err(Error::Param("relative-error stopping needs a reference solution".into()));
    }
    if config.zero_rows == ZeroRowPolicy::Error {
        a.require_nonzero_rows()?;
    }

    let op = if config.method.is_standard_form() {
        let c = config.builder.build(a, &schedule)?;
        Some(KtOperator::new(a, &schedule, c)?)
    } else {
        None
    };

    let start = Instant::now();
    let bnorm = norm2(b);
    let refnorm = config.reference.as_deref().map(norm2);
    let mut records = Vec::with_capacity(config.max_iters.min(1 << 16) + 1);
    let mut iterates = Vec::new();

    let measure = |k: usize, y: &[f64], records: &mut Vec<IterRecord>| -> (f64, Option<f64>) {
        let res = relative_residual(a, b, y, bnorm);
        let err = config.reference.as_deref().map(|r| distance(y, r));
        records.push(IterRecord {
            iter: k,
            rel_residual: res,
            abs_error: err,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        (res, err)
    };
    let converged = |res: f64, err: Option<f64>| -> bool {
        match config.stop {
            StopRule::RelativeResidual => res <= config.tol,
            StopRule::RelativeError => {
                let e = err.expect("reference checked above");
                let d = refnorm.filter(|&r| r > 0.0).unwrap_or(1.0);
                e / d <= config.tol
            }
        }
    };

    if config.keep_iterates {
        iterates.push(y.clone());
    }
    let (res0, err0) = measure(0, &y, &mut records);
    let mut termination = if converged(res0, err0) {
        Termination::Converged
    } else {
        Termination::MaxIters
    };

    let mut k = 0;
    while termination == Termination::MaxIters && k < config.max_iters {
        k += 1;
        match &op {
            Some(op) => op.apply_in_place(a, b, &mut y),
            None => sweep_in_place(a, b, &schedule, &mut y, config.zero_rows)?,
        }
        if config.keep_iterates {
            iterates.push(y.clone());
        }
        let (res, err) = measure(k, &y, &mut records);
        if !all_finite(&y) || !res.is_finite() || res > DIVERGENCE_FACTOR * res0 {
            termination = Termination::Diverged;
        } else if converged(res, err) {
            termination = Termination::Converged;
        }
    }

    Ok(SolveRun {
        method: config.method,
        mu: schedule.mu().to_vec(),
        records,
        termination,
        solution: y,
        factor: op.map(|o| o.factor().clone()),
        iterates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a2() -> MatrixHandle {
        MatrixHandle::from_rows(&[[1.0, 0.0], [1.0, 1.0]]).unwrap()
    }

    #[test]
    fn identity_converges_in_one_iteration() {
        let a = MatrixHandle::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let run = solve(&a, &[1.0, 2.0], &RelaxationSchedule::unrelaxed(2), &SolveConfig::default()).unwrap();
        assert_eq!(run.termination, Termination::Converged);
        assert_eq!(run.iterations(), 1);
        assert_eq!(run.solution, vec![1.0, 2.0]);
        assert_eq!(run.records.len(), 2);
    }

    #[test]
    fn two_by_two_converges_with_rate_half() {
        let a = a2();
        let cfg = SolveConfig {
            tol: 1e-12,
            reference: Some(vec![1.0, 1.0]),
            keep_iterates: true,
            ..SolveConfig::default()
        };
        let run = solve(&a, &[1.0, 2.0], &RelaxationSchedule::unrelaxed(2), &cfg).unwrap();
        assert_eq!(run.termination, Termination::Converged);
        assert_eq!(run.iterates[1], vec![1.5, 0.5]);
        let errs: Vec<f64> = run.records.iter().map(|r| r.abs_error.unwrap()).collect();
        for w in errs.windows(2) {
            assert!(w[1] <= 0.5f64.sqrt() * w[0] + 1e-15);
        }
        assert!((run.solution[0] - 1.0).abs() < 1e-11);
    }

    #[test]
    fn already_solved_start() {
        let cfg = SolveConfig {
            x0: Some(vec![1.0, 1.0]),
            ..SolveConfig::default()
        };
        let run = solve(&a2(), &[1.0, 2.0], &RelaxationSchedule::unrelaxed(2), &cfg).unwrap();
        assert_eq!(run.termination, Termination::Converged);
        assert_eq!(run.iterations(), 0);
    }

    #[test]
    fn large_relaxation_diverges() {
        // Nearly parallel rows with μ = 2.5 expand the error every sweep.
        let a = MatrixHandle::from_rows(&[[1.0, 0.0], [1.0, 0.1]]).unwrap();
        let u = RelaxationSchedule::per_row(vec![2.5, 2.5]);
        let b = a.matvec(&[1.0, -1.0]);
        let run = solve(&a, &b, &u, &SolveConfig::default()).unwrap();
        assert_eq!(run.termination, Termination::Diverged);
        assert!(run.records.len() <= 10_001);
    }

    #[test]
    fn max_iters_is_respected() {
        let a = MatrixHandle::from_rows(&[[1.0, 0.0], [1.0, 0.01]]).unwrap();
        let b = a.matvec(&[1.0, 1.0]);
        let cfg = SolveConfig {
            max_iters: 5,
            ..SolveConfig::default()
        };
        let run = solve(&a, &b, &RelaxationSchedule::unrelaxed(2), &cfg).unwrap();
        assert_eq!(run.termination, Termination::MaxIters);
        assert_eq!(run.records.len(), 6);
    }

    #[test]
    fn methods_agree_on_iterates() {
        let a = MatrixHandle::from_rows(&[[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]]).unwrap();
        let b = a.matvec(&[0.3, 0.7]);
        let u = RelaxationSchedule::per_row(vec![0.7, 1.3, 1.1]);
        let run = |method| {
            let cfg = SolveConfig {
                method,
                max_iters: 30,
                tol: 0.0,
                keep_iterates: true,
                ..SolveConfig::default()
            };
            solve(&a, &b, &u, &cfg).unwrap().iterates
        };
        let pairs = [(Method::Kaczmarz, Method::Kt), (Method::RelaxedKaczmarz, Method::RelaxedKt)];
        for (p, q) in pairs {
            for (x, y) in run(p).iter().zip(run(q)) {
                assert!(crate::linalg::max_abs_diff(x, &y) < 1e-13);
            }
        }
    }

    #[test]
    fn argument_errors() {
        let a = a2();
        let u = RelaxationSchedule::unrelaxed(2);
        assert!(solve(&a, &[1.0], &u, &SolveConfig::default()).is_err());
        let cfg = SolveConfig {
            x0: Some(vec![0.0; 3]),
            ..SolveConfig::default()
        };
        assert!(solve(&a, &[1.0, 2.0], &u, &cfg).is_err());
        let cfg = SolveConfig {
            stop: StopRule::RelativeError,
            ..SolveConfig::default()
        };
        assert!(matches!(solve(&a, &[1.0, 2.0], &u, &cfg), Err(Error::Param(_))));
        let z = MatrixHandle::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(
            solve(&z, &[1.0, 0.0], &u, &SolveConfig::default()),
            Err(Error::ZeroRow { row: 1 })
        ));
        let cfg = SolveConfig {
            zero_rows: ZeroRowPolicy::Skip,
            ..SolveConfig::default()
        };
        let run = solve(&z, &[1.0, 0.0], &u, &cfg).unwrap();
        assert_eq!(run.termination, Termination::Converged);
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("gauss".parse::<Method>().is_err());
    }
}
