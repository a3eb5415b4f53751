use anyhow::{bail, Context, Result};
use ktsolve_core::RelaxationSchedule;

/// Parses a `--relax` value for a system with `m` rows.
///
/// Accepted forms: a scalar (`1.2`), a comma list of exactly `m` values, or
/// `random:lo,hi,seed=s`.
pub fn parse_relax(spec: &str, m: usize) -> Result<RelaxationSchedule> {
    let spec = spec.trim();
    if let Some(rest) = spec.strip_prefix("random:") {
        let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            bail!("--relax random needs 'random:lo,hi,seed=s', got '{spec}'");
        }
        let lo: f64 = parts[0].parse().with_context(|| format!("bad lower bound '{}'", parts[0]))?;
        let hi: f64 = parts[1].parse().with_context(|| format!("bad upper bound '{}'", parts[1]))?;
        let seed = parts[2]
            .strip_prefix("seed=")
            .with_context(|| format!("expected 'seed=S', got '{}'", parts[2]))?;
        let seed: u64 = seed.parse().with_context(|| format!("bad seed '{seed}'"))?;
        return Ok(RelaxationSchedule::random(m, lo, hi, seed)?);
    }
    if spec.contains(',') {
        let mu = spec
            .split(',')
            .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad relaxation value '{s}'")))
            .collect::<Result<Vec<f64>>>()?;
        if mu.len() != m {
            bail!("--relax list has {} values but the matrix has {m} rows", mu.len());
        }
        let u = RelaxationSchedule::per_row(mu);
        u.check_len(m)?;
        return Ok(u);
    }
    let v: f64 = spec.parse().with_context(|| format!("bad --relax value '{spec}'"))?;
    if !v.is_finite() {
        bail!("--relax value must be finite, got '{spec}'");
    }
    Ok(RelaxationSchedule::constant(m, v))
}
