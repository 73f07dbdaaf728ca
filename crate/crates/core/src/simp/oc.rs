use crate::{Error, Result};

/// Volume tolerance the multiplier bisection must meet.
pub const VOLUME_TOL: f64 = 1e-4;

/// Optimality-criteria update `rho_e (-dc_e / lambda)^eta`, clamped to the move
/// limit and `[0, 1]`, with `lambda` bisected so that `mean(rho) = f`.
pub fn oc_update(
    density: &[f64],
    sens: &[f64],
    f: f64,
    move_limit: f64,
    eta: f64,
) -> Result<Vec<f64>> {
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "volume fraction must lie in (0, 1), got {f}"
        )));
    }
    if !(move_limit > 0.0 && move_limit <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "move limit must lie in (0, 1], got {move_limit}"
        )));
    }
    if density.len() != sens.len() || density.is_empty() {
        return Err(Error::Dimension {
            what: "sensitivities",
            expected: density.len(),
            actual: sens.len(),
        });
    }
    if sens.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("sensitivities".into()));
    }
    let n = density.len() as f64;
    let lower: Vec<f64> = density.iter().map(|&x| (x - move_limit).max(0.0)).collect();
    let upper: Vec<f64> = density.iter().map(|&x| (x + move_limit).min(1.0)).collect();
    let lo_mean = lower.iter().sum::<f64>() / n;
    let hi_mean = upper.iter().sum::<f64>() / n;
    if f < lo_mean - VOLUME_TOL || f > hi_mean + VOLUME_TOL {
        return Err(Error::InvalidArgument(format!(
            "volume fraction {f} unreachable within the move limit (range {lo_mean:.4}..{hi_mean:.4})"
        )));
    }

    // Sensitivities rescaled so the multiplier lives near one; flat zero
    // sensitivities behave like a uniform field.
    let scale = sens.iter().map(|s| -s).fold(0.0, f64::max);
    let b: Vec<f64> = if scale > 0.0 {
        sens.iter().map(|s| (-s / scale).max(1e-30)).collect()
    } else {
        vec![1.0; sens.len()]
    };
    let update = |lambda: f64, out: &mut Vec<f64>| -> f64 {
        out.clear();
        let mut sum = 0.0;
        for i in 0..density.len() {
            let x = (density[i] * (b[i] / lambda).powf(eta)).clamp(lower[i], upper[i]);
            sum += x;
            out.push(x);
        }
        sum / n
    };

    let mut x = Vec::with_capacity(density.len());
    let (mut lo, mut hi) = (1.0f64, 1.0f64);
    for _ in 0..600 {
        if update(hi, &mut x) <= f {
            break;
        }
        hi *= 4.0;
    }
    for _ in 0..600 {
        if update(lo, &mut x) >= f {
            break;
        }
        lo /= 4.0;
    }
    let mut best = (f64::INFINITY, Vec::new());
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        let vol = update(mid, &mut x);
        let err = (vol - f).abs();
        if err < best.0 {
            best = (err, x.clone());
        }
        if err <= 1e-3 * VOLUME_TOL || hi / lo - 1.0 < 1e-14 {
            break;
        }
        if vol > f {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.0 > VOLUME_TOL {
        return Err(Error::NoConvergence {
            iterations: 200,
            residual: best.0,
        });
    }
    Ok(best.1)
}
