//! Reproducible consistent test systems `A x_true = b`.
//!
//! Problem specs have a compact text form used on the command line:
//!
//! ```text
//! random:M,N[,seed=S]
//! rank_deficient:M,N,rank=R[,seed=S]
//! orthogonal:M,N[,seed=S]
//! coherent:M,N[,angle=THETA][,seed=S]
//! tomo:GRID,RAYS[,angles=K][,seed=S]
//! ```

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, MatrixHandle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemKind {
    Random { m: usize, n: usize },
    /// Rows are combinations (and exact duplicates) of `rank` base rows.
    RankDeficient { m: usize, n: usize, rank: usize },
    /// Pairwise orthogonal rows with random norms; needs `m ≤ n`.
    Orthogonal { m: usize, n: usize },
    /// Every row makes angle `angle` (radians) with a common direction.
    Coherent { m: usize, n: usize, angle: f64 },
    /// Parallel-beam line integrals over a `grid × grid` pixel image:
    /// `rays = angles × detectors`, angles equally spaced in `[0, π)`.
    Tomo { grid: usize, rays: usize, angles: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub seed: u64,
}

pub const DEFAULT_COHERENT_ANGLE: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct Problem {
    pub spec: ProblemSpec,
    pub a: MatrixHandle,
    pub b: Vec<f64>,
    pub x_true: Vec<f64>,
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self.kind {
            ProblemKind::Random { m, n }
            | ProblemKind::RankDeficient { m, n, .. }
            | ProblemKind::Orthogonal { m, n }
            | ProblemKind::Coherent { m, n, .. } => (m, n),
            ProblemKind::Tomo { grid, rays, .. } => (rays, grid * grid),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Param(msg));
        match self.kind {
            ProblemKind::Random { m, n } if m < n || n == 0 => {
                bad(format!("random problem needs m ≥ n ≥ 1, got {m}×{n}"))
            }
            ProblemKind::RankDeficient { m, n, rank } if rank == 0 || rank >= m.min(n) => bad(
                format!("rank_deficient needs 1 ≤ rank < min(m, n), got rank {rank} for {m}×{n}"),
            ),
            ProblemKind::Orthogonal { m, n } if m > n || m == 0 => {
                bad(format!("orthogonal rows need 1 ≤ m ≤ n, got {m}×{n}"))
            }
            ProblemKind::Coherent { m, n, angle } if m < n || n < 2 || !(angle > 0.0 && angle <= std::f64::consts::FRAC_PI_2) => {
                bad(format!("coherent needs m ≥ n ≥ 2 and angle in (0, π/2], got {m}×{n}, angle {angle}"))
            }
            ProblemKind::Tomo { grid, rays, angles } if grid == 0 || angles == 0 || rays == 0 || rays % angles != 0 => {
                bad(format!("tomo needs rays divisible by angles, got {rays} rays over {angles} angles (grid {grid})"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ProblemKind::Random { m, n } => write!(f, "random:{m},{n}")?,
            ProblemKind::RankDeficient { m, n, rank } => write!(f, "rank_deficient:{m},{n},rank={rank}")?,
            ProblemKind::Orthogonal { m, n } => write!(f, "orthogonal:{m},{n}")?,
            ProblemKind::Coherent { m, n, angle } => write!(f, "coherent:{m},{n},angle={angle}")?,
            ProblemKind::Tomo { grid, rays, angles } => write!(f, "tomo:{grid},{rays},angles={angles}")?,
        }
        write!(f, ",seed={}", self.seed)
    }
}

impl FromStr for ProblemSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let err = |msg: &str| Error::Param(format!("bad problem spec '{s}': {msg}"));
        let (kind, rest) = s.split_once(':').ok_or_else(|| err("expected KIND:ARGS"))?;
        let mut positional = Vec::new();
        let mut seed = 0u64;
        let mut rank = None;
        let mut angle = None;
        let mut angles = None;
        for tok in rest.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match tok.split_once('=') {
                None => positional.push(
                    tok.parse::<usize>()
                        .map_err(|_| err(&format!("'{tok}' is not a count")))?,
                ),
                Some((key, val)) => {
                    let count = || val.parse::<usize>().map_err(|_| err(&format!("bad {key} '{val}'")));
                    match key {
                        "seed" => seed = val.parse().map_err(|_| err(&format!("bad seed '{val}'")))?,
                        "rank" => rank = Some(count()?),
                        "angles" => angles = Some(count()?),
                        "angle" => angle = Some(val.parse::<f64>().map_err(|_| err(&format!("bad angle '{val}'")))?),
                        _ => return Err(err(&format!("unknown key '{key}'"))),
                    }
                }
            }
        }
        let [p, q] = positional[..] else {
            return Err(err("expected two positional counts"));
        };
        let kind = match kind {
            "random" => ProblemKind::Random { m: p, n: q },
            "rank_deficient" | "rank-deficient" => ProblemKind::RankDeficient {
                m: p,
                n: q,
                rank: rank.ok_or_else(|| err("rank_deficient needs rank=R"))?,
            },
            "orthogonal" => ProblemKind::Orthogonal { m: p, n: q },
            "coherent" => ProblemKind::Coherent {
                m: p,
                n: q,
                angle: angle.unwrap_or(DEFAULT_COHERENT_ANGLE),
            },
            "tomo" => {
                let angles = match angles {
                    Some(k) => k,
                    None if p > 0 && q % p == 0 => q / p,
                    None => return Err(err("rays must be a multiple of grid unless angles=K is given")),
                };
                ProblemKind::Tomo { grid: p, rays: q, angles }
            }
            other => return Err(err(&format!("unknown kind '{other}'"))),
        };
        let spec = ProblemSpec { kind, seed };
        spec.validate()?;
        Ok(spec)
    }
}

fn uniform(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let s = norm2(&v);
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Removes the components of `v` along the orthonormal vectors in `basis`
/// (two passes of modified Gram-Schmidt).
fn orthogonalize(mut v: Vec<f64>, basis: &[Vec<f64>]) -> Vec<f64> {
    for _ in 0..2 {
        for q in basis {
            let c = dot(&v, q);
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
    }
    v
}

/// Builds the problem described by `spec`. Deterministic in `spec`.
pub fn generate(spec: &ProblemSpec) -> Result<Problem> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (a, x_true) = match spec.kind {
        ProblemKind::Random { m, n } => {
            let a = MatrixHandle::from_row_major(m, n, uniform(&mut rng, m * n))?;
            (a, uniform(&mut rng, n))
        }
        ProblemKind::RankDeficient { m, n, rank } => {
            let base: Vec<Vec<f64>> = (0..rank).map(|_| uniform(&mut rng, n)).collect();
            let mut rows = base.clone();
            for i in rank..m {
                if (i - rank) % 2 == 0 {
                    rows.push(base[(i - rank) / 2 % rank].clone());
                } else {
                    let w = uniform(&mut rng, rank);
                    let mut r = vec![0.0; n];
                    for (wk, bk) in w.iter().zip(&base) {
                        r.iter_mut().zip(bk).for_each(|(x, y)| *x += wk * y);
                    }
                    rows.push(r);
                }
            }
            (MatrixHandle::from_rows(&rows)?, uniform(&mut rng, n))
        }
        ProblemKind::Orthogonal { m, n } => {
            let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
            while basis.len() < m {
                let v = orthogonalize(uniform(&mut rng, n), &basis);
                if norm2(&v) > 1e-3 {
                    basis.push(unit(v));
                }
            }
            let rows: Vec<Vec<f64>> = basis
                .into_iter()
                .map(|q| {
                    let s = rng.gen_range(0.5..2.0);
                    q.into_iter().map(|x| x * s).collect()
                })
                .collect();
            (MatrixHandle::from_rows(&rows)?, uniform(&mut rng, n))
        }
        ProblemKind::Coherent { m, n, angle } => {
            let v = unit(uniform(&mut rng, n));
            let (c, s) = (angle.cos(), angle.sin());
            let mut rows = Vec::with_capacity(m);
            while rows.len() < m {
                let w = orthogonalize(uniform(&mut rng, n), std::slice::from_ref(&v));
                if norm2(&w) < 1e-3 {
                    continue;
                }
                let w = unit(w);
                rows.push(v.iter().zip(&w).map(|(p, q)| c * p + s * q).collect::<Vec<_>>());
            }
            (MatrixHandle::from_rows(&rows)?, uniform(&mut rng, n))
        }
        ProblemKind::Tomo { grid, rays, angles } => {
            let a = parallel_beam_matrix(grid, angles, rays / angles);
            (a, block_phantom(grid))
        }
    };
    let b = a.matvec(&x_true);
    Ok(Problem {
        spec: spec.clone(),
        a,
        b,
        x_true,
    })
}

/// Pixel values of a `grid × grid` phantom, row-major from the bottom row:
/// 0.5 inside a centred square of half-width `grid/3`, 1.0 inside half-width
/// `grid/6`, 0 elsewhere.
pub fn block_phantom(grid: usize) -> Vec<f64> {
    let g = grid as f64;
    let mut x = vec![0.0; grid * grid];
    for r in 0..grid {
        for c in 0..grid {
            let px = c as f64 + 0.5 - g / 2.0;
            let py = r as f64 + 0.5 - g / 2.0;
            let d = px.abs().max(py.abs());
            x[r * grid + c] = if d < g / 6.0 {
                1.0
            } else if d < g / 3.0 {
                0.5
            } else {
                0.0
            };
        }
    }
    x
}

/// Ray geometry: the line `{ offset·n̂ + s·d̂ }` with `d̂ = (cos θ, sin θ)` and
/// `n̂ = (−sin θ, cos θ)`, in a frame where the image covers `[−g/2, g/2]²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub theta: f64,
    pub offset: f64,
}

impl Ray {
    pub fn point(&self, s: f64) -> (f64, f64) {
        let (sn, cs) = self.theta.sin_cos();
        (-self.offset * sn + s * cs, self.offset * cs + s * sn)
    }
}

/// Rays ordered angle-major: ray `k·detectors + d` has angle `k·π/angles`
/// and detector offset `(d + ½)·grid/detectors − grid/2`.
pub fn parallel_beam_rays(grid: usize, angles: usize, detectors: usize) -> Vec<Ray> {
    let g = grid as f64;
    let mut out = Vec::with_capacity(angles * detectors);
    for k in 0..angles {
        let theta = std::f64::consts::PI * k as f64 / angles as f64;
        for d in 0..detectors {
            let offset = (d as f64 + 0.5) * g / detectors as f64 - g / 2.0;
            out.push(Ray { theta, offset });
        }
    }
    out
}

/// Parameter interval `[s_in, s_out]` of the ray inside the image square.
fn clip(ray: &Ray, half: f64) -> Option<(f64, f64)> {
    let (sn, cs) = ray.theta.sin_cos();
    let (x0, y0) = ray.point(0.0);
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (p0, d) in [(x0, cs), (y0, sn)] {
        if d.abs() < 1e-14 {
            if p0 <= -half || p0 >= half {
                return None;
            }
        } else {
            let (a, b) = ((-half - p0) / d, (half - p0) / d);
            lo = lo.max(a.min(b));
            hi = hi.min(a.max(b));
        }
    }
    (hi > lo).then_some((lo, hi))
}

/// Pixels crossed by `ray` and the length of each crossing, found by
/// merging the ray's crossings with the vertical and horizontal grid lines.
pub fn ray_pixel_lengths(ray: &Ray, grid: usize) -> Vec<(usize, f64)> {
    let half = grid as f64 / 2.0;
    let Some((s_in, s_out)) = clip(ray, half) else {
        return Vec::new();
    };
    let (sn, cs) = ray.theta.sin_cos();
    let (x0, y0) = ray.point(0.0);
    let mut cuts = vec![s_in, s_out];
    for (p0, d) in [(x0, cs), (y0, sn)] {
        if d.abs() < 1e-14 {
            continue;
        }
        for k in 0..=grid {
            let s = (k as f64 - half - p0) / d;
            if s > s_in && s < s_out {
                cuts.push(s);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    let mut out: Vec<(usize, f64)> = Vec::new();
    for w in cuts.windows(2) {
        let len = w[1] - w[0];
        if len <= 1e-12 {
            continue;
        }
        let (mx, my) = ray.point(0.5 * (w[0] + w[1]));
        let col = ((mx + half).floor() as isize).clamp(0, grid as isize - 1) as usize;
        let row = ((my + half).floor() as isize).clamp(0, grid as isize - 1) as usize;
        let pix = row * grid + col;
        match out.last_mut() {
            Some((p, l)) if *p == pix => *l += len,
            _ => out.push((pix, len)),
        }
    }
    out
}

/// Sparse `rays × grid²` system matrix of line-length weights.
pub fn parallel_beam_matrix(grid: usize, angles: usize, detectors: usize) -> MatrixHandle {
    let rays = parallel_beam_rays(grid, angles, detectors);
    let mut trip = Vec::new();
    for (i, ray) in rays.iter().enumerate() {
        trip.extend(ray_pixel_lengths(ray, grid).into_iter().map(|(p, l)| (i, p, l)));
    }
    MatrixHandle::from_triplets(rays.len(), grid * grid, trip).expect("indices in range")
}
