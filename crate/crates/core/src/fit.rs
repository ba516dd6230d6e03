//! Trend fits used to extrapolate finite-`n` curves.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// `a + b / n`
    Reciprocal,
    /// `a + b / (n + c)`
    ShiftedReciprocal,
}

/// Extrapolation `lim_{n -> inf} = a`; always labeled as a fit, never a measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub model: FitModel,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Root mean squared residual.
    pub rms: f64,
}

impl TrendFit {
    pub fn limit(&self) -> f64 {
        self.a
    }

    pub fn at(&self, n: f64) -> f64 {
        self.a + self.b / (n + self.c)
    }
}

/// Least squares of `y = a + b t`; `None` when the `t` values coincide.
fn linear(ts: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let len = ts.len() as f64;
    let mt = ts.iter().sum::<f64>() / len;
    let my = ys.iter().sum::<f64>() / len;
    let stt: f64 = ts.iter().map(|t| (t - mt).powi(2)).sum();
    if stt <= 1e-300 {
        return None;
    }
    let sty: f64 = ts.iter().zip(ys).map(|(t, y)| (t - mt) * (y - my)).sum();
    let b = sty / stt;
    let a = my - b * mt;
    let rss = ts.iter().zip(ys).map(|(t, y)| (y - a - b * t).powi(2)).sum::<f64>();
    Some((a, b, rss))
}

/// `a + b / n` by least squares; needs two distinct positive `n`.
pub fn fit_reciprocal(ns: &[f64], ys: &[f64]) -> Option<TrendFit> {
    if ns.len() != ys.len() || ns.len() < 2 || ns.iter().any(|&n| n <= 0.0) {
        return None;
    }
    let ts: Vec<f64> = ns.iter().map(|n| 1.0 / n).collect();
    let (a, b, rss) = linear(&ts, ys)?;
    Some(TrendFit {
        model: FitModel::Reciprocal,
        a,
        b,
        c: 0.0,
        rms: (rss / ns.len() as f64).sqrt(),
    })
}

/// `a + b / (n + c)`: `c` by a bracketed one-dimensional search, `(a, b)` by
/// least squares for each `c`. Falls back to `a + b / n` with fewer than
/// three points or when the search gains nothing.
pub fn fit_shifted_reciprocal(ns: &[f64], ys: &[f64]) -> Option<TrendFit> {
    let base = fit_reciprocal(ns, ys)?;
    if ns.len() < 3 {
        return Some(base);
    }
    let n_min = ns.iter().cloned().fold(f64::INFINITY, f64::min);
    let n_max = ns.iter().cloned().fold(0.0, f64::max);
    let rss_at = |c: f64| -> Option<(f64, f64, f64)> {
        let ts: Vec<f64> = ns.iter().map(|n| 1.0 / (n + c)).collect();
        linear(&ts, ys)
    };
    // c ranges over (-n_min, 100 n_max]; grid in u = log(n_min + c)
    let lo = (n_min * 1e-3).ln();
    let hi = (n_min + 100.0 * n_max).ln();
    let to_c = |u: f64| u.exp() - n_min;
    let grid = 400;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..=grid {
        let u = lo + (hi - lo) * i as f64 / grid as f64;
        if let Some((_, _, rss)) = rss_at(to_c(u)) {
            if best.is_none_or(|(_, r)| rss < r) {
                best = Some((u, rss));
            }
        }
    }
    let (mut u, _) = best?;
    // golden-section refinement around the best grid point
    let step = (hi - lo) / grid as f64;
    let (mut a_u, mut b_u) = (u - step, u + step);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let f = |u: f64| rss_at(to_c(u)).map_or(f64::INFINITY, |r| r.2);
    for _ in 0..100 {
        let x1 = b_u - g * (b_u - a_u);
        let x2 = a_u + g * (b_u - a_u);
        if f(x1) < f(x2) {
            b_u = x2;
        } else {
            a_u = x1;
        }
    }
    u = (a_u + b_u) / 2.0;
    let c = to_c(u);
    let (a, b, rss) = rss_at(c)?;
    let rms = (rss / ns.len() as f64).sqrt();
    if rms + 1e-15 >= base.rms {
        return Some(base);
    }
    Some(TrendFit {
        model: FitModel::ShiftedReciprocal,
        a,
        b,
        c,
        rms,
    })
}
