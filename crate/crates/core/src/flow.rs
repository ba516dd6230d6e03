//! Entropy estimates, the density flow `M_{n,p,delta}(G)` and its aggregate
//! `M_mu(v)`, and the entropy identities relating them.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_reciprocal, fit_shifted_reciprocal, TrendFit};
use crate::measure::{InvarianceReport, LogMeasure, MeasureModel};
use crate::oracle::count_f64;
use crate::perturbation::{average_exponents, lyapunov_star, AverageExponents, ExponentMode};
use crate::rng::{derive_seed, substream};
use crate::rule::LocalRule;
use crate::symbols::Window;
use crate::trace_class::{
    build_delta_filter, class_measure_exact, class_measure_mc, count_t_exact, count_t_filtered,
    count_t_filtered_mc, count_t_mc, DeltaFilter, DEFAULT_BUDGET,
};
use crate::velocity::{g_window, is_degenerate, VelocitySpec};

/// Knobs shared by the estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    /// Base points drawn from the measure.
    pub samples: u64,
    pub seed: u64,
    /// Live-state budget of the exact DP.
    pub budget: u64,
    /// Fall back to Monte Carlo when the DP exceeds the budget.
    pub allow_mc: bool,
    /// Random-walk proposals per point for Monte Carlo counts.
    pub mc_proposals: u64,
    /// Fresh samples per point for Monte Carlo class measures.
    pub mc_samples: u64,
    /// Samples used to estimate `eta` when the window is too long to enumerate.
    pub filter_samples: u64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            samples: 32,
            seed: 1,
            budget: DEFAULT_BUDGET,
            allow_mc: true,
            mc_proposals: 20_000,
            mc_samples: 20_000,
            filter_samples: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyTarget {
    Shift,
    Automaton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMethod {
    ClosedForm,
    SmbMc,
    ExactClass,
    /// Class measures from Monte Carlo for at least one base point.
    McClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyPoint {
    pub n: usize,
    pub value: f64,
    pub stderr: f64,
}

/// Entropy in nats. Automaton estimates carry their invariance evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub target: EntropyTarget,
    pub p: usize,
    pub n: usize,
    /// Headline value: the `a + b/n` extrapolation when several `n` were
    /// run, otherwise the last per-`n` mean.
    pub value: f64,
    pub stderr: f64,
    pub method: EntropyMethod,
    pub per_n: Vec<EntropyPoint>,
    pub fit: Option<TrendFit>,
    pub invariance: Option<InvarianceReport>,
    pub warnings: Vec<String>,
}

fn mean_stderr(vals: &[f64]) -> (f64, f64) {
    let len = vals.len() as f64;
    if vals.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = vals.iter().sum::<f64>() / len;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (len - 1.0);
    (mean, (var / len).sqrt())
}

/// `h_mu(sigma)`: the closed form.
pub fn entropy_shift(m: &MeasureModel) -> EntropyEstimate {
    EntropyEstimate {
        target: EntropyTarget::Shift,
        p: 0,
        n: 0,
        value: m.shift_entropy(),
        stderr: 0.0,
        method: EntropyMethod::ClosedForm,
        per_n: Vec::new(),
        fit: None,
        invariance: None,
        warnings: Vec::new(),
    }
}

/// `h_mu(sigma)` from sampled words: mean of `-log mu(w) / len`.
pub fn entropy_shift_smb(m: &MeasureModel, len: usize, samples: u64, seed: u64) -> Result<EntropyEstimate> {
    if len == 0 || samples == 0 {
        return Err(Error::InvalidArgument("len and samples must be positive".into()));
    }
    let vals: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            -m.word_log_measure(&m.sample_word(len, &mut rng)).0 / len as f64
        })
        .collect();
    let (value, stderr) = mean_stderr(&vals);
    Ok(EntropyEstimate {
        target: EntropyTarget::Shift,
        p: 0,
        n: len,
        value,
        stderr,
        method: EntropyMethod::SmbMc,
        per_n: vec![EntropyPoint { n: len, value, stderr }],
        fit: None,
        invariance: None,
        warnings: Vec::new(),
    })
}

/// `h_mu(F, alpha_p)`: mean of `-(1/n) log mu(class of x)` over base points,
/// for each `n` in `ns`, extrapolated in `1/n`.
pub fn entropy_f_estimate(
    rule: &LocalRule,
    m: &MeasureModel,
    p: usize,
    ns: &[usize],
    params: &FlowParams,
) -> Result<EntropyEstimate> {
    if ns.is_empty() || ns.contains(&0) || params.samples == 0 {
        return Err(Error::InvalidArgument("need positive n values and samples".into()));
    }
    let mut warnings = Vec::new();
    let invariance = m.invariance_check(rule, 3, 20_000, 0.01, derive_seed(params.seed, 0x1a7))?;
    if !invariance.pass {
        warnings.push(format!(
            "invariance check failed: max deviation {:.4} > allowed {:.4}",
            invariance.max_deviation, invariance.allowed
        ));
    }
    let mut per_n = Vec::with_capacity(ns.len());
    let mut any_mc = false;
    for &n in ns {
        let (lo, hi) = rule.cone(p, n);
        let vals: Vec<(f64, bool)> = (0..params.samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(derive_seed(params.seed, n as u64), i);
                let x = m.sample_window(lo, (hi - lo + 1) as usize, &mut rng)?;
                match class_measure_exact(rule, m, &x, p, n, params.budget) {
                    Ok(lm) => Ok((-lm.0 / n as f64, false)),
                    Err(e) if e.is_budget() && params.allow_mc => {
                        let mc = class_measure_mc(rule, m, &x, p, n, params.mc_samples, derive_seed(params.seed, i))?;
                        Ok((-mc.log_measure.0 / n as f64, true))
                    }
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<_>>()?;
        any_mc |= vals.iter().any(|v| v.1);
        let (value, stderr) = mean_stderr(&vals.iter().map(|v| v.0).collect::<Vec<_>>());
        per_n.push(EntropyPoint { n, value, stderr });
    }
    let last = per_n.last().expect("non-empty");
    let ns_f: Vec<f64> = per_n.iter().map(|e| e.n as f64).collect();
    let ys: Vec<f64> = per_n.iter().map(|e| e.value).collect();
    let fit = fit_reciprocal(&ns_f, &ys);
    let value = fit.as_ref().map_or(last.value, |f| f.limit()).max(0.0);
    Ok(EntropyEstimate {
        target: EntropyTarget::Automaton,
        p,
        n: last.n,
        value,
        stderr: last.stderr,
        method: if any_mc {
            EntropyMethod::McClass
        } else {
            EntropyMethod::ExactClass
        },
        per_n,
        fit,
        invariance: Some(invariance),
        warnings,
    })
}

/// One base point of a flow estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub index: u64,
    pub g_minus: usize,
    pub g_plus: usize,
    /// Decimal `#<T>`; empty when only a Monte Carlo lower bound exists.
    pub count_t: String,
    pub count_t_filtered: String,
    pub class_log_measure: f64,
    pub g_window_log_measure: f64,
    /// Integrand before clamping.
    pub raw_integrand: f64,
    pub integrand: f64,
    pub clamped: bool,
    pub exact: bool,
    pub lower_bound: bool,
    /// `(g_minus + g_plus) / n` for pointwise windows, 1 otherwise.
    pub weight: f64,
}

/// `M_{n,p,delta}(G)` with per-point statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowEstimate {
    pub rule: String,
    pub measure: String,
    pub velocity: VelocitySpec,
    pub p: usize,
    pub n: usize,
    pub delta: f64,
    pub m_value: f64,
    pub stderr: f64,
    /// Mean of `weight * integrand` (the pointwise flow; equals `m_value` for
    /// linear and sublinear windows).
    pub m_weighted: f64,
    pub points: Vec<PointRecord>,
    pub clamp_events: u64,
    /// Every point counted exactly.
    pub exact: bool,
    /// Some count is a Monte Carlo lower bound.
    pub lower_bound: bool,
    pub seed: u64,
}

impl FlowEstimate {
    pub fn mode_flags(&self) -> String {
        let mut flags = vec![if self.exact { "exact" } else { "mc" }];
        if self.lower_bound {
            flags.push("lower_bound");
        }
        if self.clamp_events > 0 {
            flags.push("clamped");
        }
        if matches!(self.velocity, VelocitySpec::Pointwise) {
            flags.push("pointwise");
        }
        flags.join("|")
    }
}

fn log_count(count: &BigUint) -> f64 {
    let bits = count.bits();
    if bits < 1000 {
        count_f64(count).ln()
    } else {
        // ln of a huge count from its leading 64 bits
        let shift = bits - 64;
        let top = count >> shift;
        count_f64(&top).ln() + shift as f64 * std::f64::consts::LN_2
    }
}

/// Integrand `1 - log #<T> / (-log mu(G-cylinder of x))`, unclamped.
pub fn flow_integrand(count: &BigUint, g_log_measure: LogMeasure) -> f64 {
    let denom = -g_log_measure.0;
    if denom <= 0.0 {
        return if count_f64(count) <= 1.0 { 1.0 } else { f64::NEG_INFINITY };
    }
    1.0 - log_count(count) / denom
}

struct FilterCache {
    m: MeasureModel,
    delta: f64,
    samples: u64,
    seed: u64,
    filters: std::sync::Mutex<BTreeMap<usize, DeltaFilter>>,
}

impl FilterCache {
    fn get(&self, len: usize) -> Result<DeltaFilter> {
        if let Some(f) = self.filters.lock().expect("lock").get(&len) {
            return Ok(f.clone());
        }
        let f = build_delta_filter(&self.m, len, self.delta, self.samples, derive_seed(self.seed, len as u64))?;
        self.filters.lock().expect("lock").insert(len, f.clone());
        Ok(f)
    }
}

#[allow(clippy::too_many_arguments)]
fn flow_point(
    rule: &LocalRule,
    m: &MeasureModel,
    p: usize,
    n: usize,
    velocity: &VelocitySpec,
    params: &FlowParams,
    filters: &FilterCache,
    index: u64,
) -> Result<PointRecord> {
    let point_seed = derive_seed(params.seed, ((p as u64) << 40) ^ ((n as u64) << 8) ^ 0xf1);
    let mut rng = substream(point_seed, index);
    let rn = (rule.radius() * n) as i64;
    let (clo, chi) = rule.cone(p, n);
    // cover the cone, the Lyapunov probe range, and the largest window
    let (gm_max, gp_max) = velocity.resolve(n).unwrap_or((2 * rn as usize, 2 * rn as usize));
    let (wlo, whi) = g_window(p, gm_max, gp_max);
    let lo = clo.min(wlo).min(-2 * rn);
    let hi = chi.max(whi).max(2 * rn);
    let x: Window = m.sample_window(lo, (hi - lo + 1) as usize, &mut rng)?;
    let (g_minus, g_plus, weight) = match velocity.resolve(n) {
        Some((gm, gp)) => (gm, gp, 1.0),
        None => {
            let star = lyapunov_star(rule, &x, p, n, params.budget, &mut rng)?;
            (star.i_minus, star.i_plus, (star.i_minus + star.i_plus) as f64 / n as f64)
        }
    };
    if is_degenerate(g_minus, g_plus) {
        if velocity.resolve(n).is_some() {
            return Err(Error::DegenerateWindow(format!(
                "velocity {velocity} gives g- = g+ = 0 at n = {n}"
            )));
        }
        return Ok(PointRecord {
            index,
            g_minus,
            g_plus,
            count_t: String::new(),
            count_t_filtered: String::new(),
            class_log_measure: f64::NAN,
            g_window_log_measure: f64::NAN,
            raw_integrand: 0.0,
            integrand: 0.0,
            clamped: false,
            exact: true,
            lower_bound: false,
            weight: 0.0,
        });
    }
    let window = g_window(p, g_minus, g_plus);
    let len = (window.1 - window.0 + 1) as usize;
    let filter = filters.get(len)?;
    let (count_t, filtered, class_lm, g_lm, exact) =
        match count_t_exact(rule, m, &x, p, n, window, params.budget) {
            Ok(res) => {
                let f = count_t_filtered(&res, &filter)?;
                (
                    res.count_t.to_string(),
                    f,
                    res.class_log_measure.0,
                    res.x_log_measure,
                    true,
                )
            }
            Err(e) if e.is_budget() && params.allow_mc => {
                let mc = count_t_mc(rule, m, &x, p, n, window, params.mc_proposals, derive_seed(point_seed, index))?;
                let f = count_t_filtered_mc(&mc, &filter);
                let cm = class_measure_mc(rule, m, &x, p, n, params.mc_samples, derive_seed(point_seed, !index))?;
                (String::new(), f, cm.log_measure.0, mc.x_log_measure, false)
            }
            Err(e) => return Err(e),
        };
    let raw = flow_integrand(&filtered.count, g_lm);
    let integrand = raw.clamp(0.0, 1.0);
    Ok(PointRecord {
        index,
        g_minus,
        g_plus,
        count_t,
        count_t_filtered: filtered.count.to_string(),
        class_log_measure: class_lm,
        g_window_log_measure: g_lm.0,
        raw_integrand: raw,
        integrand,
        clamped: integrand != raw,
        exact,
        lower_bound: filtered.lower_bound,
        weight,
    })
}

/// `M_{n,p,delta}(G)`: average of the clamped integrand over base points.
pub fn flow_at(
    rule: &LocalRule,
    m: &MeasureModel,
    p: usize,
    n: usize,
    delta: f64,
    velocity: &VelocitySpec,
    params: &FlowParams,
) -> Result<FlowEstimate> {
    let filters = FilterCache {
        m: m.clone(),
        delta,
        samples: params.filter_samples,
        seed: derive_seed(params.seed, 0xde17a),
        filters: Default::default(),
    };
    flow_with_cache(rule, m, p, n, delta, velocity, params, &filters)
}

#[allow(clippy::too_many_arguments)]
fn flow_with_cache(
    rule: &LocalRule,
    m: &MeasureModel,
    p: usize,
    n: usize,
    delta: f64,
    velocity: &VelocitySpec,
    params: &FlowParams,
    filters: &FilterCache,
) -> Result<FlowEstimate> {
    if n == 0 || params.samples == 0 {
        return Err(Error::InvalidArgument("n and samples must be positive".into()));
    }
    if let Some((gm, gp)) = velocity.resolve(n) {
        if is_degenerate(gm, gp) {
            return Err(Error::DegenerateWindow(format!(
                "velocity {velocity} gives g- = g+ = 0 at n = {n}"
            )));
        }
    }
    let points: Vec<PointRecord> = (0..params.samples)
        .into_par_iter()
        .map(|i| flow_point(rule, m, p, n, velocity, params, filters, i))
        .collect::<Result<_>>()?;
    let vals: Vec<f64> = points.iter().map(|r| r.integrand).collect();
    let (m_value, stderr) = mean_stderr(&vals);
    let m_weighted = points.iter().map(|r| r.weight * r.integrand).sum::<f64>() / points.len() as f64;
    Ok(FlowEstimate {
        rule: rule.label().to_string(),
        measure: m.label(),
        velocity: velocity.clone(),
        p,
        n,
        delta,
        m_value,
        stderr,
        m_weighted,
        clamp_events: points.iter().filter(|r| r.clamped).count() as u64,
        exact: points.iter().all(|r| r.exact),
        lower_bound: points.iter().any(|r| r.lower_bound),
        points,
        seed: params.seed,
    })
}

/// Convergence curve in `n` for one `(p, delta)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowCurve {
    pub p: usize,
    pub delta: f64,
    pub points: Vec<FlowEstimate>,
    /// Last value of the curve.
    pub tail: f64,
    pub tail_stderr: f64,
    /// Extrapolated `a + b / (n + c)`; labeled as a fit.
    pub fit: Option<TrendFit>,
}

impl FlowCurve {
    fn from_points(p: usize, delta: f64, points: Vec<FlowEstimate>, weighted: bool) -> Self {
        let ns: Vec<f64> = points.iter().map(|e| e.n as f64).collect();
        let ys: Vec<f64> = points
            .iter()
            .map(|e| if weighted { e.m_weighted } else { e.m_value })
            .collect();
        let last = points.last().expect("non-empty");
        // a limit outside the range of M means the shape does not fit the data
        let in_range = |f: &TrendFit| (-1e-9..=1.0 + 1e-9).contains(&f.limit());
        let fit = fit_shifted_reciprocal(&ns, &ys)
            .filter(in_range)
            .or_else(|| fit_reciprocal(&ns, &ys).filter(in_range));
        Self {
            p,
            delta,
            tail: *ys.last().expect("non-empty"),
            tail_stderr: last.stderr,
            fit,
            points,
        }
    }

    pub fn extrapolated(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.limit())
    }
}

/// `M_mu(G)`: max over `p` of the smallest-`delta` curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityFlow {
    pub rule: String,
    pub measure: String,
    pub velocity: VelocitySpec,
    pub curves: Vec<FlowCurve>,
    pub m_tail: f64,
    pub tail_stderr: f64,
    pub tail_p: usize,
    /// Max over `p` of the extrapolated limits (smallest `delta`).
    pub m_extrapolated: Option<f64>,
    pub extrapolated_p: Option<usize>,
    pub exact: bool,
    pub lower_bound: bool,
    pub clamp_events: u64,
    /// Curves use `weight * integrand` (pointwise velocity).
    pub weighted: bool,
}

impl DensityFlow {
    /// Extrapolated value when available, tail otherwise.
    pub fn headline(&self) -> f64 {
        self.m_extrapolated.unwrap_or(self.m_tail)
    }

    pub fn curve(&self, p: usize, delta: f64) -> Option<&FlowCurve> {
        self.curves.iter().find(|c| c.p == p && c.delta == delta)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn density_flow(
    rule: &LocalRule,
    m: &MeasureModel,
    p_list: &[usize],
    n_list: &[usize],
    delta_list: &[f64],
    velocity: &VelocitySpec,
    params: &FlowParams,
) -> Result<DensityFlow> {
    if p_list.is_empty() || n_list.is_empty() || delta_list.is_empty() {
        return Err(Error::InvalidArgument("p, n and delta lists must be non-empty".into()));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("n list must be increasing".into()));
    }
    if delta_list.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::InvalidArgument("delta list must be decreasing".into()));
    }
    let weighted = matches!(velocity, VelocitySpec::Pointwise);
    let mut curves = Vec::new();
    for &delta in delta_list {
        let filters = FilterCache {
            m: m.clone(),
            delta,
            samples: params.filter_samples,
            seed: derive_seed(params.seed, 0xde17a),
            filters: Default::default(),
        };
        for &p in p_list {
            let points = n_list
                .iter()
                .map(|&n| flow_with_cache(rule, m, p, n, delta, velocity, params, &filters))
                .collect::<Result<Vec<_>>>()?;
            curves.push(FlowCurve::from_points(p, delta, points, weighted));
        }
    }
    let smallest = *delta_list.last().expect("non-empty");
    let finals: Vec<&FlowCurve> = curves.iter().filter(|c| c.delta == smallest).collect();
    let tail_best = finals
        .iter()
        .max_by(|a, b| a.tail.total_cmp(&b.tail))
        .expect("non-empty");
    let extrap_best = finals
        .iter()
        .filter_map(|c| c.extrapolated().map(|v| (c.p, v)))
        .max_by(|a, b| a.1.total_cmp(&b.1));
    let all = curves.iter().flat_map(|c| c.points.iter());
    Ok(DensityFlow {
        rule: rule.label().to_string(),
        measure: m.label(),
        velocity: velocity.clone(),
        m_tail: tail_best.tail,
        tail_stderr: tail_best.tail_stderr,
        tail_p: tail_best.p,
        m_extrapolated: extrap_best.map(|b| b.1),
        extrapolated_p: extrap_best.map(|b| b.0),
        exact: all.clone().all(|e| e.exact),
        lower_bound: all.clone().any(|e| e.lower_bound),
        clamp_events: all.map(|e| e.clamp_events).sum(),
        weighted,
        curves,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem {
    T1,
    T2i,
    T2ii,
    T2iii,
}

impl std::str::FromStr for Theorem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t1" => Ok(Self::T1),
            "t2i" => Ok(Self::T2i),
            "t2ii" => Ok(Self::T2ii),
            "t2iii" => Ok(Self::T2iii),
            other => Err(Error::Parse(format!("unknown theorem selector {other:?}"))),
        }
    }
}

/// `lhs <relation> rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremInputs {
    pub rule: String,
    pub measure: String,
    pub velocity: Option<VelocitySpec>,
    pub p_list: Vec<usize>,
    pub n_list: Vec<usize>,
    pub delta_list: Vec<f64>,
    pub samples: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub theorem: Theorem,
    pub lhs: f64,
    pub rhs: f64,
    pub relation: Relation,
    /// `rhs - lhs` for `<=`, `lhs - rhs` for `>=`, `|lhs - rhs|` for `=`.
    pub margin: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub inputs: TheoremInputs,
    pub entropy_f: EntropyEstimate,
    pub shift_entropy: f64,
    pub exponents: Option<AverageExponents>,
    pub flow: Option<DensityFlow>,
    pub warnings: Vec<String>,
}

/// Relative tolerance of the theorem checks, on top of three combined stderrs.
pub const THEOREM_REL_TOL: f64 = 0.05;

fn judge(relation: Relation, lhs: f64, rhs: f64, se: f64, rel: f64) -> (f64, f64, bool) {
    let tol = rel * lhs.abs().max(rhs.abs()) + 3.0 * se + 1e-9;
    let margin = match relation {
        Relation::Le => rhs - lhs,
        Relation::Ge => lhs - rhs,
        Relation::Eq => (lhs - rhs).abs(),
    };
    let pass = match relation {
        Relation::Eq => margin <= tol,
        _ => margin >= -tol,
    };
    (margin, tol, pass)
}

/// `h_mu(F) <= h_mu(sigma) (I_mu^+ + I_mu^-)`.
pub fn verify_theorem1(
    rule: &LocalRule,
    m: &MeasureModel,
    n_list: &[usize],
    p: usize,
    exponent_n: usize,
    params: &FlowParams,
) -> Result<TheoremReport> {
    let entropy_f = entropy_f_estimate(rule, m, p, n_list, params)?;
    let exps = average_exponents(rule, m, exponent_n, params.samples, derive_seed(params.seed, 0xe1), params.budget)?;
    let h = m.shift_entropy();
    let rhs = h * (exps.plus + exps.minus);
    let se = (entropy_f.stderr.powi(2) + (h * (exps.plus_stderr + exps.minus_stderr)).powi(2)).sqrt();
    let (margin, tolerance, pass) = judge(Relation::Le, entropy_f.value, rhs, se, THEOREM_REL_TOL);
    let mut warnings = entropy_f.warnings.clone();
    if exps.sampled_points > 0 {
        warnings.push(format!(
            "{} of {} exponent records are sampled lower bounds",
            exps.sampled_points, exps.points
        ));
    }
    Ok(TheoremReport {
        theorem: Theorem::T1,
        lhs: entropy_f.value,
        rhs,
        relation: Relation::Le,
        margin,
        tolerance,
        pass,
        inputs: TheoremInputs {
            rule: rule.label().to_string(),
            measure: m.label(),
            velocity: None,
            p_list: vec![p],
            n_list: n_list.to_vec(),
            delta_list: Vec::new(),
            samples: params.samples,
            seed: params.seed,
        },
        entropy_f,
        shift_entropy: h,
        exponents: Some(exps),
        flow: None,
        warnings,
    })
}

/// Base points whose starred exponents are compared against the velocity.
pub const DOMINANCE_POINTS: u64 = 8;

/// Largest `r n` at which starred exponents are computed for the check.
pub const DOMINANCE_MAX_RN: usize = 6;

/// Theorem 2 in mode (i) equality, (ii) inequality or (iii) pointwise equality.
#[allow(clippy::too_many_arguments)]
pub fn verify_theorem2(
    rule: &LocalRule,
    m: &MeasureModel,
    theorem: Theorem,
    velocity: &VelocitySpec,
    p_list: &[usize],
    n_list: &[usize],
    delta_list: &[f64],
    params: &FlowParams,
) -> Result<TheoremReport> {
    let mut warnings = Vec::new();
    let mut theorem = theorem;
    let velocity = match theorem {
        Theorem::T1 => {
            return Err(Error::InvalidArgument("use verify_theorem1 for T1".into()));
        }
        Theorem::T2iii => VelocitySpec::Pointwise,
        _ => {
            if !velocity.is_linear() {
                return Err(Error::InvalidVelocity(
                    "modes (i) and (ii) need a linear velocity".into(),
                ));
            }
            velocity.clone()
        }
    };
    if theorem == Theorem::T2i {
        match dominance(rule, m, &velocity, p_list, n_list, params)? {
            Dominance::Evidenced => {}
            Dominance::Assumed(msg) => warnings.push(format!("dominance assumed: {msg}")),
            Dominance::Violated(msg) => {
                warnings.push(format!("velocity does not dominate the starred exponents ({msg}); checking (ii)"));
                theorem = Theorem::T2ii;
            }
        }
    }
    let p_max = *p_list.iter().max().ok_or_else(|| Error::InvalidArgument("empty p list".into()))?;
    let entropy_f = entropy_f_estimate(rule, m, p_max, n_list, params)?;
    warnings.extend(entropy_f.warnings.iter().cloned());
    let flow = density_flow(rule, m, p_list, n_list, delta_list, &velocity, params)?;
    let h = m.shift_entropy();
    let (speed, m_val) = match theorem {
        Theorem::T2iii => (1.0, flow.headline()),
        _ => {
            let (vm, vp) = velocity.speeds();
            (vm + vp, flow.headline())
        }
    };
    if flow.m_extrapolated.is_none() {
        warnings.push("flow not extrapolated; using tail value".into());
    }
    if flow.clamp_events > 0 {
        warnings.push(format!("{} clamped integrands", flow.clamp_events));
    }
    let rhs = h * speed * m_val;
    let se = (entropy_f.stderr.powi(2) + (h * speed * flow.tail_stderr).powi(2)).sqrt();
    let relation = if theorem == Theorem::T2ii {
        Relation::Ge
    } else {
        Relation::Eq
    };
    let (margin, tolerance, pass) = judge(relation, entropy_f.value, rhs, se, THEOREM_REL_TOL);
    Ok(TheoremReport {
        theorem,
        lhs: entropy_f.value,
        rhs,
        relation,
        margin,
        tolerance,
        pass,
        inputs: TheoremInputs {
            rule: rule.label().to_string(),
            measure: m.label(),
            velocity: Some(velocity),
            p_list: p_list.to_vec(),
            n_list: n_list.to_vec(),
            delta_list: delta_list.to_vec(),
            samples: params.samples,
            seed: params.seed,
        },
        entropy_f,
        shift_entropy: h,
        exponents: None,
        flow: Some(flow),
        warnings,
    })
}

enum Dominance {
    Evidenced,
    Assumed(String),
    Violated(String),
}

/// Compares `g_n^±` with `I_n^{±,*}` on a few base points per `(p, n)`.
fn dominance(
    rule: &LocalRule,
    m: &MeasureModel,
    velocity: &VelocitySpec,
    p_list: &[usize],
    n_list: &[usize],
    params: &FlowParams,
) -> Result<Dominance> {
    let r = rule.radius();
    let (vm, vp) = velocity.speeds();
    let mut sampled = false;
    // starred exponents grow linearly in n; probe only cones that stay small
    let mut probe_ns: Vec<usize> = n_list.iter().copied().filter(|&n| r * n <= DOMINANCE_MAX_RN).collect();
    if probe_ns.is_empty() {
        probe_ns.push(1);
    }
    for &p in p_list {
        for &n in &probe_ns {
            let (gm, gp) = velocity.resolve(n).expect("linear");
            let rn = (r * n) as i64;
            // I_n^± never exceed rn
            if gm as i64 >= rn && gp as i64 >= rn {
                continue;
            }
            let (clo, chi) = rule.cone(p, n);
            let lo = clo.min(-2 * rn);
            let hi = chi.max(2 * rn);
            for i in 0..DOMINANCE_POINTS {
                let mut rng = substream(derive_seed(params.seed, 0xd0 ^ ((p as u64) << 32) ^ n as u64), i);
                let x = m.sample_window(lo, (hi - lo + 1) as usize, &mut rng)?;
                let star = match lyapunov_star(rule, &x, p, n, params.budget, &mut rng) {
                    Ok(s) => s,
                    Err(e) if e.is_budget() => {
                        sampled = true;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                sampled |= star.mode != ExponentMode::Exact;
                if star.i_minus > gm || star.i_plus > gp {
                    return Ok(Dominance::Violated(format!(
                        "n = {n}, p = {p}: I* = (+{}, -{}) exceeds g = (+{gp}, -{gm})",
                        star.i_plus, star.i_minus
                    )));
                }
            }
        }
    }
    if sampled {
        if vm >= r as f64 && vp >= r as f64 {
            return Ok(Dominance::Assumed("starred exponents sampled; v >= (r, r) always dominates".into()));
        }
        return Ok(Dominance::Assumed("starred exponents only sampled".into()));
    }
    Ok(Dominance::Evidenced)
}

/// One results-CSV row: a base point of a `(p, n, delta)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub experiment_id: String,
    pub rule_label: String,
    pub measure_label: String,
    pub p: usize,
    pub n: usize,
    pub delta: f64,
    pub v_minus: String,
    pub v_plus: String,
    #[serde(rename = "count_T")]
    pub count_t: String,
    #[serde(rename = "count_T_filtered")]
    pub count_t_filtered: String,
    pub class_log_measure: f64,
    pub g_window_log_measure: f64,
    pub integrand: f64,
    #[serde(rename = "M_value")]
    pub m_value: f64,
    pub stderr: f64,
    pub mode_flags: String,
    pub samples: u64,
    pub seed: u64,
}

fn velocity_columns(v: &VelocitySpec, g_minus: usize, g_plus: usize) -> (String, String) {
    match v {
        VelocitySpec::Linear { v_minus, v_plus } => (v_minus.to_string(), v_plus.to_string()),
        VelocitySpec::Sublinear(_) => (v.to_string(), v.to_string()),
        VelocitySpec::Pointwise => (format!("pointwise:{g_minus}"), format!("pointwise:{g_plus}")),
    }
}

pub fn csv_rows(experiment_id: &str, est: &FlowEstimate) -> Vec<CsvRow> {
    let flags = est.mode_flags();
    est.points
        .iter()
        .map(|pt| {
            let (v_minus, v_plus) = velocity_columns(&est.velocity, pt.g_minus, pt.g_plus);
            CsvRow {
                experiment_id: experiment_id.to_string(),
                rule_label: est.rule.clone(),
                measure_label: est.measure.clone(),
                p: est.p,
                n: est.n,
                delta: est.delta,
                v_minus,
                v_plus,
                count_t: pt.count_t.clone(),
                count_t_filtered: pt.count_t_filtered.clone(),
                class_log_measure: pt.class_log_measure,
                g_window_log_measure: pt.g_window_log_measure,
                integrand: pt.integrand,
                m_value: est.m_value,
                stderr: est.stderr,
                mode_flags: flags.clone(),
                samples: est.points.len() as u64,
                seed: est.seed,
            }
        })
        .collect()
}

/// Convergence-curve CSV row: `n` versus `M` per `(p, delta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub experiment_id: String,
    pub p: usize,
    pub delta: f64,
    pub n: usize,
    #[serde(rename = "M_value")]
    pub m_value: f64,
    pub stderr: f64,
    #[serde(rename = "M_weighted")]
    pub m_weighted: f64,
    pub mode_flags: String,
    pub fit_limit: Option<f64>,
}

pub fn curve_rows(experiment_id: &str, flow: &DensityFlow) -> Vec<CurveRow> {
    flow.curves
        .iter()
        .flat_map(|c| {
            c.points.iter().map(move |e| CurveRow {
                experiment_id: experiment_id.to_string(),
                p: c.p,
                delta: c.delta,
                n: e.n,
                m_value: e.m_value,
                stderr: e.stderr,
                m_weighted: e.m_weighted,
                mode_flags: e.mode_flags(),
                fit_limit: c.extrapolated(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule::{elementary_rule, identity_rule, product_rule, shift_rule};

    fn params(samples: u64) -> FlowParams {
        FlowParams {
            samples,
            ..FlowParams::default()
        }
    }

    fn prod2() -> (LocalRule, MeasureModel) {
        let rule = product_rule(&shift_rule(2, 1).unwrap(), &shift_rule(2, 2).unwrap()).unwrap();
        let u = MeasureModel::uniform(2).unwrap();
        (rule, MeasureModel::product(vec![u.clone(), u]).unwrap())
    }

    #[test]
    fn flow_fixtures() {
        let u = MeasureModel::uniform(2).unwrap();
        let v11 = VelocitySpec::linear_int(1, 1).unwrap();
        let sh = shift_rule(2, 1).unwrap();
        let est = flow_at(&sh, &u, 0, 6, 0.1, &v11, &params(4)).unwrap();
        assert!(est.exact);
        assert!((est.m_value - 7.0 / 13.0).abs() < 1e-12, "{}", est.m_value);
        let r90 = elementary_rule(90).unwrap();
        let est = flow_at(&r90, &u, 1, 4, 0.1, &v11, &params(4)).unwrap();
        assert_eq!(est.points[0].count_t, "1");
        assert!((est.m_value - 1.0).abs() < 1e-12);
        let id = identity_rule(2).unwrap();
        let est = flow_at(&id, &u, 0, 5, 0.1, &v11, &params(2)).unwrap();
        assert!((est.m_value - 1.0 / 11.0).abs() < 1e-12);
        let zero = VelocitySpec::linear_int(0, 0).unwrap();
        assert!(matches!(
            flow_at(&id, &u, 0, 5, 0.1, &zero, &params(2)),
            Err(Error::DegenerateWindow(_))
        ));
    }

    #[test]
    fn prod2_curve_and_limit() {
        let (rule, m) = prod2();
        let v = VelocitySpec::linear_int(2, 2).unwrap();
        let flow = density_flow(&rule, &m, &[0, 1], &[1, 2, 3], &[0.1], &v, &params(2)).unwrap();
        let c1 = flow.curve(1, 0.1).unwrap();
        for e in &c1.points {
            let n = e.n as f64;
            assert!((e.m_value - (1.0 - 5.0 * n / (8.0 * n + 6.0))).abs() < 1e-12);
        }
        assert!((flow.m_extrapolated.unwrap() - 0.375).abs() < 1e-3);
        assert_eq!(flow.extrapolated_p, Some(1));
    }

    #[test]
    fn entropy_fixtures() {
        let u = MeasureModel::uniform(2).unwrap();
        let id = identity_rule(2).unwrap();
        let e = entropy_f_estimate(&id, &u, 0, &[2, 4, 8], &params(4)).unwrap();
        assert!(e.value.abs() < 1e-9, "{e:?}");
        let sh = shift_rule(2, 1).unwrap();
        let e = entropy_f_estimate(&sh, &u, 0, &[2, 4, 8], &params(4)).unwrap();
        assert!((e.value - 2f64.ln()).abs() < 0.05 * 2f64.ln());
        let (rule, m) = prod2();
        let e = entropy_f_estimate(&rule, &m, 1, &[1, 2, 3], &params(4)).unwrap();
        assert!((e.value - 3.0 * 2f64.ln()).abs() < 1e-9);
        let s = entropy_shift_smb(&u, 64, 100, 1).unwrap();
        assert!((s.value - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn theorem_checks() {
        let (rule, m) = prod2();
        let v = VelocitySpec::linear_int(2, 2).unwrap();
        let t1 = verify_theorem1(&rule, &m, &[1, 2, 3], 1, 2, &params(8)).unwrap();
        assert!(t1.pass && (t1.margin - 2f64.ln()).abs() < 0.1 * 2f64.ln(), "{t1:?}");
        let t2 = verify_theorem2(&rule, &m, Theorem::T2i, &v, &[0, 1], &[1, 2, 3], &[0.1], &params(2)).unwrap();
        assert_eq!(t2.theorem, Theorem::T2i);
        assert!(t2.pass, "{t2:?}");
        let u = MeasureModel::uniform(2).unwrap();
        let sh = shift_rule(2, 1).unwrap();
        let slow = VelocitySpec::parse("1/4,1/4").unwrap();
        let t = verify_theorem2(&sh, &u, Theorem::T2ii, &slow, &[0, 1], &[2, 4, 6], &[0.1], &params(2)).unwrap();
        assert!(t.pass && t.relation == Relation::Ge && t.rhs < t.lhs, "{t:?}");
        let t = verify_theorem2(&sh, &u, Theorem::T2iii, &slow, &[0, 1], &[2, 3, 4], &[0.1], &params(2)).unwrap();
        assert!(t.pass, "{t:?}");
    }
}
