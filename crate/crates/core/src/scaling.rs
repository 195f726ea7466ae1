//! Least-squares classification of computing-time scaling with problem size.

use std::fmt;

use crate::error::{Error, Result};

/// Preference given to the constant model when ranking candidates.
pub const SIMPLER_MODEL_MARGIN: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Constant,
    Logarithmic,
    Linear,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Constant => "constant",
            ModelKind::Logarithmic => "logarithmic",
            ModelKind::Linear => "linear",
        })
    }
}

/// One candidate model `tau ~ intercept + slope * f(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitCandidate {
    pub kind: ModelKind,
    pub intercept: f64,
    pub slope: f64,
    /// Coefficient of determination, centred, clamped to [0, 1].
    pub r_squared: f64,
    /// `1 - SS_res / sum(tau^2)`, comparable across all three models.
    pub level_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub model_kind: ModelKind,
    pub candidates: Vec<FitCandidate>,
}

impl ScalingFit {
    pub fn candidate(&self, kind: ModelKind) -> &FitCandidate {
        self.candidates
            .iter()
            .find(|c| c.kind == kind)
            .expect("all model kinds are fitted")
    }
}

/// Ordinary least squares `y ~ intercept + slope x`; returns
/// `(intercept, slope, r_squared)`. `r_squared` is 1 for data without spread.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Usage("linear fit needs >= 2 paired points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Usage("linear fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    Ok((intercept, slope, r_squared(ss_res, ss_tot, my)))
}

// relative threshold so that exactly-flat data read as a perfect fit
fn is_flat(ss_tot: f64, mean: f64) -> bool {
    ss_tot <= 1e-24 * (mean * mean).max(f64::MIN_POSITIVE)
}

fn r_squared(ss_res: f64, ss_tot: f64, mean: f64) -> f64 {
    if is_flat(ss_tot, mean) {
        return 1.0;
    }
    (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
}

/// Pearson correlation coefficient; 0 when either series has no spread.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Usage("correlation needs >= 2 paired points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Fit constant, logarithmic and linear models of `tau` against `n`.
///
/// Candidates are ranked by `level_score`, the fraction of `sum(tau^2)`
/// explained; the centred R^2 of a constant model is zero by construction
/// and cannot rank it. The constant model wins unless the best sized model
/// beats it by more than [`SIMPLER_MODEL_MARGIN`].
pub fn fit_scaling(points: &[(f64, f64)]) -> Result<ScalingFit> {
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(Error::Usage(format!(
            "scaling fit needs >= 4 distinct sizes, got {}",
            distinct.len()
        )));
    }
    if points
        .iter()
        .any(|(n, t)| !(*n > 0.0) || !n.is_finite() || !t.is_finite())
    {
        return Err(Error::Usage("sizes must be positive and times finite".into()));
    }
    let ns: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ts: Vec<f64> = points.iter().map(|p| p.1).collect();
    let count = ts.len() as f64;
    let mean = ts.iter().sum::<f64>() / count;
    let ss_zero: f64 = ts.iter().map(|t| t * t).sum::<f64>().max(f64::MIN_POSITIVE);
    let ss_const: f64 = ts.iter().map(|t| (t - mean).powi(2)).sum();

    let constant = FitCandidate {
        kind: ModelKind::Constant,
        intercept: mean,
        slope: 0.0,
        // a mean-only model explains none of the centred spread
        r_squared: if is_flat(ss_const, mean) { 1.0 } else { 0.0 },
        level_score: 1.0 - ss_const / ss_zero,
    };

    let sized = |kind: ModelKind, xs: Vec<f64>| -> Result<FitCandidate> {
        let (intercept, slope, r2) = linear_fit(&xs, &ts)?;
        let ss_res: f64 = xs
            .iter()
            .zip(&ts)
            .map(|(x, t)| (t - intercept - slope * x).powi(2))
            .sum();
        Ok(FitCandidate {
            kind,
            intercept,
            slope,
            r_squared: r2,
            level_score: 1.0 - ss_res / ss_zero,
        })
    };
    let log = sized(ModelKind::Logarithmic, ns.iter().map(|n| n.ln()).collect())?;
    let lin = sized(ModelKind::Linear, ns.clone())?;

    let best_sized = if lin.level_score > log.level_score {
        &lin
    } else {
        &log
    };
    let model_kind = if best_sized.level_score - constant.level_score > SIMPLER_MODEL_MARGIN {
        best_sized.kind
    } else {
        ModelKind::Constant
    };
    Ok(ScalingFit {
        model_kind,
        candidates: vec![constant, log, lin],
    })
}
