//! Perturbation exponents `I_n^±`, their class maxima `I_n^{±,*}`, average
//! exponents, finite-horizon estimates of `mu(B_n(x))`, and a stability
//! classifier.
//!
//! `I_n^-(x)` is the least `s >= 0` such that changing `x` anywhere right of
//! `s` leaves `F^i(x)` unchanged on `(-inf, 0]` for `1 <= i <= n`;
//! `I_n^+(x)` mirrors it. A cell right of `rn` cannot reach `0` within `n`
//! steps, so the universal quantifier only ranges over assignments of the
//! finite block `(s, rn]`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::MeasureModel;
use crate::rng::{derive_seed, substream, StreamRng};
use crate::rule::LocalRule;
use crate::symbols::{Symbol, Window};
use crate::trace_class::{class_measure_exact, enumerate_t_words, DEFAULT_BUDGET};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentMode {
    Exact,
    SampledLowerBound,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LyapunovRecord {
    pub n: usize,
    pub i_plus: usize,
    pub i_minus: usize,
    pub mode: ExponentMode,
    /// Perturbations (or class members) examined; 0 for exact records.
    pub samples: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Side {
    /// Perturb right of `s`, watch `(-inf, 0]`.
    Minus,
    /// Perturb left of `-s`, watch `[0, inf)`.
    Plus,
}

struct Probe<'a> {
    rule: &'a LocalRule,
    n: usize,
    rn: i64,
    /// Base cells `[-2rn, 2rn]`.
    base: Vec<Symbol>,
    /// Reference rows: `F^i(base)` for `i = 1..=n`.
    reference: Vec<Vec<Symbol>>,
}

impl<'a> Probe<'a> {
    fn new(rule: &'a LocalRule, x: &Window, n: usize) -> Result<Self> {
        let rn = (rule.radius() * n) as i64;
        let base = x.restrict(-2 * rn, 2 * rn)?.into_symbols();
        let mut reference = Vec::with_capacity(n);
        let mut cur = Window::new(-2 * rn, base.clone())?;
        for _ in 0..n {
            cur = rule.step(&cur)?;
            reference.push(cur.symbols().to_vec());
        }
        Ok(Self {
            rule,
            n,
            rn,
            base,
            reference,
        })
    }

    fn index(&self, coord: i64) -> usize {
        (coord + 2 * self.rn) as usize
    }

    /// Does the perturbed configuration differ from `x` on the watched half
    /// line at some step `1..=n`?
    fn differs(&self, cells: &[Symbol], side: Side) -> bool {
        let r = self.rule.radius();
        let mut cur = cells.to_vec();
        for i in 0..self.n {
            let next: Vec<Symbol> = cur
                .windows(2 * r + 1)
                .map(|neigh| self.rule.apply(neigh))
                .collect();
            // row i+1 covers [-2rn + r(i+1), 2rn - r(i+1)]
            let lo = -2 * self.rn + (r * (i + 1)) as i64;
            let zero = (-lo) as usize;
            let reference = &self.reference[i];
            let changed = match side {
                Side::Minus => next[..=zero] != reference[..=zero],
                Side::Plus => next[zero..] != reference[zero..],
            };
            if changed {
                return true;
            }
            cur = next;
        }
        false
    }

    /// Every assignment of the free block leaves the watched half line intact.
    fn insulated(&self, s: usize, side: Side, budget: u64) -> Result<bool> {
        let len = (self.rn as usize).saturating_sub(s);
        if len == 0 {
            return Ok(true);
        }
        let k = self.rule.k() as u64;
        let total = k.checked_pow(len as u32).filter(|&t| t <= budget).ok_or(
            Error::BudgetExceeded {
                what: "perturbation assignments",
                needed: (k as u128).saturating_pow(len as u32),
                budget: budget as u128,
            },
        )?;
        let coords: Vec<usize> = match side {
            Side::Minus => ((s as i64 + 1)..=self.rn).map(|c| self.index(c)).collect(),
            Side::Plus => (-self.rn..=-(s as i64) - 1).map(|c| self.index(c)).collect(),
        };
        let found = (0..total).into_par_iter().any(|mut code| {
            let mut cells = self.base.clone();
            for &idx in &coords {
                cells[idx] = (code % k) as Symbol;
                code /= k;
            }
            self.differs(&cells, side)
        });
        Ok(!found)
    }

    fn exact(&self, side: Side, budget: u64) -> Result<usize> {
        // insulation is monotone in s: binary search on [0, rn]
        let (mut lo, mut hi) = (0usize, self.rn as usize);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.insulated(mid, side, budget)? {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Ok(lo)
    }

    /// Largest `s + 1` such that perturbing every cell beyond `s` (with the
    /// sampled pattern) reaches the watched half line.
    fn witness(&self, side: Side, pattern: &[Symbol], floor: usize) -> usize {
        let rn = self.rn as usize;
        for s in (floor..rn).rev() {
            let mut cells = self.base.clone();
            for t in (s + 1)..=rn {
                let c = match side {
                    Side::Minus => t as i64,
                    Side::Plus => -(t as i64),
                };
                let idx = self.index(c);
                cells[idx] = pattern[t - 1];
            }
            if self.differs(&cells, side) {
                return s + 1;
            }
        }
        floor
    }
}

fn check_cover(rule: &LocalRule, x: &Window, n: usize) -> Result<()> {
    let rn = (rule.radius() * n) as i64;
    x.require_cover(-2 * rn, 2 * rn)
}

/// Exact `(I_n^+, I_n^-)` by exhaustive enumeration of the influence cone.
pub fn lyapunov_exact(rule: &LocalRule, x: &Window, n: usize, budget: u64) -> Result<LyapunovRecord> {
    check_cover(rule, x, n)?;
    let probe = Probe::new(rule, x, n)?;
    Ok(LyapunovRecord {
        n,
        i_plus: probe.exact(Side::Plus, budget)?,
        i_minus: probe.exact(Side::Minus, budget)?,
        mode: ExponentMode::Exact,
        samples: 0,
    })
}

fn random_pattern(rule: &LocalRule, x: &Window, side: Side, rn: usize, rng: &mut StreamRng) -> Vec<Symbol> {
    let k = rule.k();
    (1..=rn)
        .map(|t| {
            let c = match side {
                Side::Minus => t as i64,
                Side::Plus => -(t as i64),
            };
            let own = x.get(c).expect("covered") as u32;
            // a symbol different from x's
            ((own + rng.gen_range(1..k)) % k) as Symbol
        })
        .collect()
}

/// Lower bounds on `(I_n^+, I_n^-)` from `samples` random perturbation
/// patterns; never exceeds the exact record.
pub fn lyapunov_sampled(
    rule: &LocalRule,
    x: &Window,
    n: usize,
    samples: u64,
    rng: &mut StreamRng,
) -> Result<LyapunovRecord> {
    check_cover(rule, x, n)?;
    let probe = Probe::new(rule, x, n)?;
    let rn = rule.radius() * n;
    let (mut plus, mut minus) = (0, 0);
    for _ in 0..samples {
        let pat = random_pattern(rule, x, Side::Plus, rn, rng);
        plus = plus.max(probe.witness(Side::Plus, &pat, plus));
        let pat = random_pattern(rule, x, Side::Minus, rn, rng);
        minus = minus.max(probe.witness(Side::Minus, &pat, minus));
    }
    Ok(LyapunovRecord {
        n,
        i_plus: plus,
        i_minus: minus,
        mode: ExponentMode::SampledLowerBound,
        samples,
    })
}

/// Exact when the budget allows, otherwise a sampled lower bound.
pub fn lyapunov_auto(
    rule: &LocalRule,
    x: &Window,
    n: usize,
    budget: u64,
    samples: u64,
    rng: &mut StreamRng,
) -> Result<LyapunovRecord> {
    match lyapunov_exact(rule, x, n, budget) {
        Err(e) if e.is_budget() => lyapunov_sampled(rule, x, n, samples, rng),
        other => other,
    }
}

/// Class members examined by [`lyapunov_star`] before it switches to sampling.
pub const STAR_MEMBER_LIMIT: usize = 1 << 12;

/// `(I_n^{+,*}, I_n^{-,*})`: exponents maximized over the trace class of `x`
/// (class members vary on the dependency cone, other cells follow `x`).
pub fn lyapunov_star(
    rule: &LocalRule,
    x: &Window,
    p: usize,
    n: usize,
    budget: u64,
    rng: &mut StreamRng,
) -> Result<LyapunovRecord> {
    check_cover(rule, x, n)?;
    let (clo, chi) = rule.cone(p, n);
    x.require_cover(clo, chi)?;
    let rn = (rule.radius() * n) as i64;
    let lo = clo.min(-2 * rn);
    let hi = chi.max(2 * rn);
    x.require_cover(lo, hi)?;
    let base = x.restrict(lo, hi)?;
    let member = |cone_word: &[Symbol]| -> Window {
        Window::from_fn(lo, hi, |c| {
            if c >= clo && c <= chi {
                cone_word[(c - clo) as usize]
            } else {
                base.get(c).expect("covered")
            }
        })
        .expect("non-empty")
    };
    let exhaustive = enumerate_t_words(rule, x, p, n, (clo, chi), STAR_MEMBER_LIMIT);
    let (members, mode): (Vec<Vec<Symbol>>, ExponentMode) = match exhaustive {
        Ok(words) => (words, ExponentMode::Exact),
        Err(e) if e.is_budget() => (
            sample_class_members(rule, x, p, n, STAR_MEMBER_LIMIT as u64, rng)?,
            ExponentMode::SampledLowerBound,
        ),
        Err(e) => return Err(e),
    };
    let records: Vec<LyapunovRecord> = members
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let y = member(w);
            let mut local_rng = substream(derive_seed(0x5eed, i as u64), i as u64);
            lyapunov_auto(rule, &y, n, budget, 64, &mut local_rng)
        })
        .collect::<Result<_>>()?;
    let mode = if records.iter().any(|r| r.mode != ExponentMode::Exact) {
        ExponentMode::SampledLowerBound
    } else {
        mode
    };
    Ok(LyapunovRecord {
        n,
        i_plus: records.iter().map(|r| r.i_plus).max().unwrap_or(0),
        i_minus: records.iter().map(|r| r.i_minus).max().unwrap_or(0),
        mode,
        samples: if mode == ExponentMode::Exact {
            0
        } else {
            records.len() as u64
        },
    })
}

/// Distinct cone words of class members found by a trace-preserving
/// block-resampling walk from `x`.
fn sample_class_members(
    rule: &LocalRule,
    x: &Window,
    p: usize,
    n: usize,
    proposals: u64,
    rng: &mut StreamRng,
) -> Result<Vec<Vec<Symbol>>> {
    let (clo, chi) = rule.cone(p, n);
    let trace = rule.trace_of(x, p, n)?;
    let k = rule.k();
    let mut cur = x.restrict(clo, chi)?.into_symbols();
    let mut seen = std::collections::BTreeSet::new();
    seen.insert(cur.clone());
    let span = cur.len();
    for _ in 0..proposals {
        let block = rng.gen_range(1..=span.min(4));
        let start = rng.gen_range(0..=span - block);
        let mut cand = cur.clone();
        for cell in cand.iter_mut().skip(start).take(block) {
            *cell = rng.gen_range(0..k) as Symbol;
        }
        if rule.trace_of(&Window::new(clo, cand.clone())?, p, n)? == trace {
            seen.insert(cand.clone());
            cur = cand;
        }
    }
    Ok(seen.into_iter().collect())
}

/// Monte Carlo averages of `I_n^±(x) / n` over base points drawn from `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageExponents {
    pub n: usize,
    pub plus: f64,
    pub minus: f64,
    pub plus_stderr: f64,
    pub minus_stderr: f64,
    pub points: u64,
    /// Points whose record is only a sampled lower bound.
    pub sampled_points: u64,
}

pub fn average_exponents(
    rule: &LocalRule,
    m: &MeasureModel,
    n: usize,
    points: u64,
    seed: u64,
    budget: u64,
) -> Result<AverageExponents> {
    if n == 0 || points == 0 {
        return Err(Error::InvalidArgument("n and points must be positive".into()));
    }
    let rn = (rule.radius() * n) as i64;
    let records: Vec<LyapunovRecord> = (0..points)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            let x = m.sample_window(-2 * rn, (4 * rn + 1) as usize, &mut rng)?;
            lyapunov_auto(rule, &x, n, budget, 64, &mut rng)
        })
        .collect::<Result<_>>()?;
    let nf = n as f64;
    let stats = |vals: Vec<f64>| {
        let len = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / len;
        let var = if vals.len() > 1 {
            vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (len - 1.0)
        } else {
            0.0
        };
        (mean, (var / len).sqrt())
    };
    let (plus, plus_stderr) = stats(records.iter().map(|r| r.i_plus as f64 / nf).collect());
    let (minus, minus_stderr) = stats(records.iter().map(|r| r.i_minus as f64 / nf).collect());
    Ok(AverageExponents {
        n,
        plus,
        minus,
        plus_stderr,
        minus_stderr,
        points,
        sampled_points: records
            .iter()
            .filter(|r| r.mode != ExponentMode::Exact)
            .count() as u64,
    })
}

/// Finite-horizon upper bound on `mu(B_n(x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityEstimate {
    pub n: usize,
    pub horizon: usize,
    pub estimate: f64,
    pub stderr: f64,
    pub exact: bool,
    pub samples: u64,
}

/// `mu{y : F^i(y) = F^i(x) on [-n, n] for 0 <= i <= horizon}` for each
/// horizon, exactly where the class DP fits the budget and otherwise by
/// conditional sampling inside `C_n(x)`. Estimates are forced non-increasing.
pub fn bn_measure_curve(
    rule: &LocalRule,
    m: &MeasureModel,
    x: &Window,
    n: usize,
    horizons: &[usize],
    samples: u64,
    seed: u64,
    budget: u64,
) -> Result<Vec<StabilityEstimate>> {
    let center = x.restrict(-(n as i64), n as i64)?;
    let c_n = m.cylinder_log_measure(&center).prob();
    let mut out: Vec<StabilityEstimate> = Vec::with_capacity(horizons.len());
    let mut sorted = horizons.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let max_h = *sorted.last().ok_or_else(|| Error::InvalidArgument("no horizons".into()))?;
    // shared conditional samples over the largest cone
    let mut mc_hits: Option<Vec<u64>> = None;
    for &h in &sorted {
        let (lo, hi) = rule.cone(n, h);
        x.require_cover(lo, hi)?;
        let exact = match class_measure_exact(rule, m, x, n, h, budget) {
            Ok(lm) => Some(lm.prob()),
            Err(e) if e.is_budget() => None,
            Err(e) => return Err(e),
        };
        let mut est = match exact {
            Some(v) => StabilityEstimate {
                n,
                horizon: h,
                estimate: v,
                stderr: 0.0,
                exact: true,
                samples: 0,
            },
            None => {
                if samples == 0 {
                    return Err(Error::InvalidArgument("sampling needs samples > 0".into()));
                }
                let hits = mc_hits.get_or_insert_with(|| {
                    conditional_agreement(rule, m, x, n, &sorted, max_h, samples, seed)
                });
                let idx = sorted.iter().position(|&v| v == h).expect("present");
                let q = hits[idx] as f64 / samples as f64;
                let se = (q.max(1.0 / samples as f64) * (1.0 - q) / samples as f64).sqrt();
                StabilityEstimate {
                    n,
                    horizon: h,
                    estimate: c_n * q,
                    stderr: c_n * se,
                    exact: false,
                    samples,
                }
            }
        };
        if let Some(prev) = out.last() {
            if est.estimate > prev.estimate {
                est.estimate = prev.estimate;
            }
        }
        out.push(est);
    }
    Ok(out)
}

/// For each horizon, how many conditional samples keep agreeing with `x`.
#[allow(clippy::too_many_arguments)]
fn conditional_agreement(
    rule: &LocalRule,
    m: &MeasureModel,
    x: &Window,
    n: usize,
    horizons: &[usize],
    max_h: usize,
    samples: u64,
    seed: u64,
) -> Vec<u64> {
    let (lo, hi) = rule.cone(n, max_h);
    let center = x.restrict(-(n as i64), n as i64).expect("covered");
    let reference = rule.trace_of(x, n, max_h).expect("covered");
    let per_sample: Vec<usize> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            let y = match m.conditional_extension(&center, lo, hi, &mut rng) {
                Ok(y) => y,
                Err(_) => return 0,
            };
            let t = rule.trace_of(&y, n, max_h).expect("covered");
            // number of leading rows that agree
            t.rows()
                .iter()
                .zip(reference.rows())
                .take_while(|(a, b)| a == b)
                .count()
        })
        .collect();
    horizons
        .iter()
        .map(|&h| per_sample.iter().filter(|&&rows| rows > h).count() as u64)
        .collect()
}

pub fn bn_measure_estimate(
    rule: &LocalRule,
    m: &MeasureModel,
    x: &Window,
    n: usize,
    horizon: usize,
    samples: u64,
    seed: u64,
) -> Result<StabilityEstimate> {
    Ok(bn_measure_curve(rule, m, x, n, &[horizon], samples, seed, DEFAULT_BUDGET)?
        .pop()
        .expect("one horizon"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityLabel {
    MuEquicontinuousEvidence,
    MuExpansiveEvidence,
    Inconclusive,
}

impl std::fmt::Display for StabilityLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::MuEquicontinuousEvidence => "mu-equicontinuous-evidence",
            Self::MuExpansiveEvidence => "mu-expansive-evidence",
            Self::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyParams {
    pub points: u64,
    /// Ball radius `n` of `B_n(x)`.
    pub n: usize,
    pub horizons: Vec<usize>,
    pub samples: u64,
    pub seed: u64,
    pub budget: u64,
    /// Decay factor below which an estimate counts as vanished, relative to `mu(C_n(x))`.
    pub decay: f64,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        Self {
            points: 8,
            n: 1,
            horizons: vec![2, 4, 8, 16],
            samples: 4096,
            seed: 1,
            budget: DEFAULT_BUDGET,
            decay: 2f64.powi(-8),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEvidence {
    pub x: String,
    pub cylinder: f64,
    pub estimates: Vec<StabilityEstimate>,
    pub stable: bool,
    pub decayed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub rule: String,
    pub measure: String,
    pub label: StabilityLabel,
    pub horizons: Vec<usize>,
    pub seed: u64,
    pub points: Vec<PointEvidence>,
}

/// Evidence (never proof) of mu-equicontinuity or mu-expansiveness.
pub fn classify(rule: &LocalRule, m: &MeasureModel, params: &ClassifyParams) -> Result<ClassificationReport> {
    if params.horizons.is_empty() || params.points == 0 {
        return Err(Error::InvalidArgument("need horizons and points".into()));
    }
    let max_h = *params.horizons.iter().max().expect("non-empty");
    let (lo, hi) = rule.cone(params.n, max_h);
    let points: Vec<PointEvidence> = (0..params.points)
        .map(|i| {
            let mut rng = substream(derive_seed(params.seed, 0xc1a5), i);
            let x = m.sample_window(lo, (hi - lo + 1) as usize, &mut rng)?;
            let estimates = bn_measure_curve(
                rule,
                m,
                &x,
                params.n,
                &params.horizons,
                params.samples,
                derive_seed(params.seed, i),
                params.budget,
            )?;
            let cylinder = m
                .cylinder_log_measure(&x.restrict(-(params.n as i64), params.n as i64)?)
                .prob();
            let tail = &estimates[estimates.len().saturating_sub(3)..];
            let first = tail[0].estimate;
            let stable = tail
                .iter()
                .all(|e| e.estimate > 0.0 && e.estimate >= 10.0 * e.stderr)
                && tail.last().expect("non-empty").estimate >= 0.5 * first;
            let last = estimates.last().expect("non-empty");
            let upper = if last.exact {
                last.estimate
            } else if last.estimate == 0.0 {
                // rule of three for zero hits
                cylinder * 3.0 / last.samples as f64
            } else {
                last.estimate + 3.0 * last.stderr
            };
            let decayed = upper <= cylinder * params.decay;
            Ok(PointEvidence {
                x: x.to_text(&m.alphabet()),
                cylinder,
                estimates,
                stable,
                decayed,
            })
        })
        .collect::<Result<_>>()?;
    let label = if points.iter().any(|p| p.stable) {
        StabilityLabel::MuEquicontinuousEvidence
    } else if points.iter().all(|p| p.decayed) {
        StabilityLabel::MuExpansiveEvidence
    } else {
        StabilityLabel::Inconclusive
    };
    let mut horizons = params.horizons.clone();
    horizons.sort_unstable();
    horizons.dedup();
    Ok(ClassificationReport {
        rule: rule.label().to_string(),
        measure: m.label(),
        label,
        horizons,
        seed: params.seed,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule::{elementary_rule, identity_rule, product_rule, shift_rule};

    fn random_window(k: u32, lo: i64, hi: i64, seed: u64) -> Window {
        let mut rng = substream(seed, 0);
        Window::from_fn(lo, hi, |_| rng.gen_range(0..k) as Symbol).unwrap()
    }

    #[test]
    fn exact_exponents_of_fixtures() {
        let id = elementary_rule(204).unwrap();
        let sh = elementary_rule(170).unwrap();
        for n in 1..=6 {
            let x = random_window(2, -2 * n as i64, 2 * n as i64, n as u64);
            let rec = lyapunov_exact(&id, &x, n, DEFAULT_BUDGET).unwrap();
            assert_eq!((rec.i_plus, rec.i_minus), (0, 0));
            let rec = lyapunov_exact(&sh, &x, n, DEFAULT_BUDGET).unwrap();
            assert_eq!((rec.i_plus, rec.i_minus), (0, n));
        }
        let r90 = elementary_rule(90).unwrap();
        let x = random_window(2, -8, 8, 3);
        let rec = lyapunov_exact(&r90, &x, 4, DEFAULT_BUDGET).unwrap();
        assert_eq!((rec.i_plus, rec.i_minus), (4, 4));
    }

    #[test]
    fn sampled_never_exceeds_exact() {
        let mut rng = substream(1, 1);
        for code in [30u32, 54, 90, 110, 170, 184] {
            let rule = elementary_rule(code).unwrap();
            let x = random_window(2, -12, 12, code as u64);
            let exact = lyapunov_exact(&rule, &x, 6, DEFAULT_BUDGET).unwrap();
            let sampled = lyapunov_sampled(&rule, &x, 6, 32, &mut rng).unwrap();
            assert!(sampled.i_plus <= exact.i_plus && sampled.i_minus <= exact.i_minus);
            if code == 90 {
                assert_eq!((sampled.i_plus, sampled.i_minus), (6, 6));
            }
        }
        let sh = shift_rule(2, 1).unwrap();
        let x = random_window(2, -10, 10, 2);
        let rec = lyapunov_sampled(&sh, &x, 5, 1, &mut rng).unwrap();
        assert_eq!((rec.i_plus, rec.i_minus), (0, 5));
        assert_eq!(rec.mode, ExponentMode::SampledLowerBound);
    }

    #[test]
    fn star_exponents() {
        let mut rng = substream(2, 2);
        let sh = shift_rule(2, 1).unwrap();
        let x = random_window(2, -6, 6, 1);
        let rec = lyapunov_star(&sh, &x, 0, 3, DEFAULT_BUDGET, &mut rng).unwrap();
        assert_eq!((rec.i_plus, rec.i_minus, rec.mode), (0, 3, ExponentMode::Exact));
        let prod2 = product_rule(&shift_rule(2, 1).unwrap(), &shift_rule(2, 2).unwrap()).unwrap();
        let x = random_window(4, -8, 8, 2);
        let rec = lyapunov_star(&prod2, &x, 0, 2, DEFAULT_BUDGET, &mut rng).unwrap();
        assert_eq!((rec.i_plus, rec.i_minus), (0, 4));
        let id = identity_rule(2).unwrap();
        let x = random_window(2, -2, 2, 3);
        let rec = lyapunov_star(&id, &x, 1, 3, DEFAULT_BUDGET, &mut rng).unwrap();
        assert_eq!((rec.i_plus, rec.i_minus), (0, 0));
    }

    #[test]
    fn average_exponent_fixtures() {
        let prod2 = product_rule(&shift_rule(2, 1).unwrap(), &shift_rule(2, 2).unwrap()).unwrap();
        let uu = MeasureModel::product(vec![
            MeasureModel::uniform(2).unwrap(),
            MeasureModel::uniform(2).unwrap(),
        ])
        .unwrap();
        for n in 1..=2 {
            let avg = average_exponents(&prod2, &uu, n, 16, 9, DEFAULT_BUDGET).unwrap();
            assert_eq!((avg.plus, avg.minus), (0.0, 2.0));
        }
        let u = MeasureModel::uniform(2).unwrap();
        let avg = average_exponents(&elementary_rule(90).unwrap(), &u, 3, 16, 4, DEFAULT_BUDGET).unwrap();
        assert_eq!((avg.plus, avg.minus), (1.0, 1.0));
    }

    #[test]
    fn stability_estimates() {
        let u = MeasureModel::uniform(2).unwrap();
        let id = identity_rule(2).unwrap();
        let x = random_window(2, -1, 1, 1);
        for h in [1, 4, 9] {
            let est = bn_measure_estimate(&id, &u, &x, 1, h, 100, 1).unwrap();
            assert!((est.estimate - 0.125).abs() < 1e-12);
        }
        let sh = shift_rule(2, 1).unwrap();
        let x = random_window(2, -12, 12, 2);
        for t in [1usize, 3, 6] {
            let est = bn_measure_estimate(&sh, &u, &x, 1, t, 100, 1).unwrap();
            assert!((est.estimate - 2f64.powi(-(3 + t as i32))).abs() < 1e-12);
        }
        let r90 = elementary_rule(90).unwrap();
        let x = random_window(2, -14, 14, 3);
        let est = bn_measure_estimate(&r90, &u, &x, 2, 12, 1000, 1).unwrap();
        assert!(est.estimate < 1e-3);
    }

    #[test]
    fn classifier_labels() {
        let u = MeasureModel::uniform(2).unwrap();
        let params = ClassifyParams {
            points: 4,
            ..ClassifyParams::default()
        };
        let id = identity_rule(2).unwrap();
        assert_eq!(classify(&id, &u, &params).unwrap().label, StabilityLabel::MuEquicontinuousEvidence);
        let sh = shift_rule(2, 1).unwrap();
        assert_eq!(classify(&sh, &u, &params).unwrap().label, StabilityLabel::MuExpansiveEvidence);
        let r90 = elementary_rule(90).unwrap();
        assert_eq!(classify(&r90, &u, &params).unwrap().label, StabilityLabel::MuExpansiveEvidence);
    }
}
