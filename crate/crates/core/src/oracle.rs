//! Brute-force ground truth for tiny instances.
//!
//! Every cone word is evolved with a private stepping loop and compared with
//! the trace of `x`; measures are multiplied out symbol by symbol. Nothing
//! here calls the trace-class scanner, so differential tests compare two
//! independent implementations.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{LogMeasure, MeasureModel};
use crate::rng::substream;
use crate::rule::{elementary_rule, LocalRule};
use crate::symbols::{Alphabet, Symbol, Window};
use crate::trace_class::{
    build_delta_filter, class_measure_exact, class_measure_mc, count_t_exact, count_t_filtered,
    DeltaFilter, DEFAULT_BUDGET,
};

/// Largest number of cone words the oracle enumerates.
pub const ORACLE_LIMIT: u128 = 1 << 26;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub rule: String,
    pub measure: String,
    pub x: Window,
    pub p: usize,
    pub n: usize,
    pub g_window: (i64, i64),
    /// Observed words, lexicographic.
    pub words: Vec<Vec<Symbol>>,
    pub count: BigUint,
    pub class_measure: f64,
    /// Cylinder log-measure of each observed word (same order as `words`).
    pub word_log_measures: Vec<LogMeasure>,
    pub x_log_measure: LogMeasure,
}

impl OracleResult {
    /// Words passing `filter` with base point `x` retained.
    pub fn filtered_count(&self, filter: &DeltaFilter) -> usize {
        let eta = filter.eta_for(self.x_log_measure);
        self.word_log_measures
            .iter()
            .filter(|lm| filter.passes(**lm, eta))
            .count()
    }

    /// `1 - log #<T> / (-log mu(G-cylinder of x))` for the given count.
    pub fn integrand(&self, count: usize) -> f64 {
        1.0 - (count as f64).ln() / (-self.x_log_measure.0)
    }

    pub fn dump(&self) -> String {
        self.words
            .iter()
            .map(|w| format!("{}\n", crate::symbols::word_to_digits(w)))
            .collect()
    }
}

fn local(rule: &LocalRule, cells: &[Symbol]) -> Vec<Symbol> {
    let width = 2 * rule.radius() + 1;
    let k = rule.k() as usize;
    let table = rule.table();
    if cells.len() < width {
        return Vec::new();
    }
    (0..=cells.len() - width)
        .map(|i| {
            let idx = cells[i..i + width]
                .iter()
                .fold(0usize, |acc, &s| acc * k + s as usize);
            table[idx]
        })
        .collect()
}

/// Rows `(F^i y)(-p, p)` of the cone word `y` on `[-p - rn, p + rn]`.
fn rows_of(rule: &LocalRule, cone_word: &[Symbol], p: usize, n: usize) -> Vec<Vec<Symbol>> {
    let r = rule.radius();
    let mut rows = Vec::with_capacity(n + 1);
    let mut cur = cone_word.to_vec();
    for i in 0..=n {
        // cur covers [-p - r(n - i), p + r(n - i)]
        let margin = r * (n - i);
        rows.push(cur[margin..margin + 2 * p + 1].to_vec());
        if i < n {
            cur = local(rule, &cur);
        }
    }
    rows
}

fn word_probability(m: &MeasureModel, word: &[Symbol]) -> f64 {
    m.word_log_measure(word).prob()
}

/// Enumerate every word on `cone ∪ G`, keep those reproducing the trace of
/// `x`, and collect their restrictions to `G`.
pub fn enumerate_class(
    rule: &LocalRule,
    m: &MeasureModel,
    x: &Window,
    p: usize,
    n: usize,
    g_window: (i64, i64),
) -> Result<OracleResult> {
    if rule.k() != m.k() {
        return Err(Error::InvalidArgument("rule and measure alphabets differ".into()));
    }
    let (clo, chi) = rule.cone(p, n);
    x.require_cover(clo, chi)?;
    let (gl, gh) = g_window;
    if gl > -(p as i64) || gh < p as i64 {
        return Err(Error::InvalidWindow("window must contain the central block".into()));
    }
    let lo = clo.min(gl);
    let hi = chi.max(gh);
    let span = (hi - lo + 1) as u32;
    let k = rule.k();
    let total = (k as u128).checked_pow(span).unwrap_or(u128::MAX);
    if total > ORACLE_LIMIT {
        return Err(Error::BudgetExceeded {
            what: "oracle enumeration words",
            needed: total,
            budget: ORACLE_LIMIT,
        });
    }
    let x_cone = x.restrict(clo, chi)?.into_symbols();
    let target = rows_of(rule, &x_cone, p, n);
    let cone_off = (clo - lo) as usize;
    let cone_len = (chi - clo + 1) as usize;
    let g_off = (gl - lo) as usize;
    let g_len = (gh - gl + 1) as usize;
    let mut words = BTreeSet::new();
    let mut class_cone_words = BTreeSet::new();
    let mut word = vec![0 as Symbol; span as usize];
    for code in 0..total {
        let mut c = code;
        for slot in word.iter_mut().rev() {
            *slot = (c % k as u128) as Symbol;
            c /= k as u128;
        }
        let cone = &word[cone_off..cone_off + cone_len];
        if rows_of(rule, cone, p, n) == target {
            words.insert(word[g_off..g_off + g_len].to_vec());
            class_cone_words.insert(cone.to_vec());
        }
    }
    let class_measure: f64 = class_cone_words
        .iter()
        .map(|w| word_probability(m, w))
        .sum();
    let words: Vec<Vec<Symbol>> = words.into_iter().collect();
    let word_log_measures = words.iter().map(|w| m.word_log_measure(w)).collect();
    let x_g = x.restrict(gl, gh)?;
    Ok(OracleResult {
        rule: rule.label().to_string(),
        measure: m.label(),
        x: x.clone(),
        p,
        n,
        g_window,
        count: BigUint::from(words.len()),
        words,
        class_measure,
        word_log_measures,
        x_log_measure: m.cylinder_log_measure(&x_g),
    })
}

/// Class measures of every distinct trace over the cone; they sum to one.
pub fn partition_measures(
    rule: &LocalRule,
    m: &MeasureModel,
    p: usize,
    n: usize,
) -> Result<BTreeMap<Vec<Vec<Symbol>>, f64>> {
    let (clo, chi) = rule.cone(p, n);
    let span = (chi - clo + 1) as u32;
    let k = rule.k();
    let total = (k as u128).checked_pow(span).unwrap_or(u128::MAX);
    if total > ORACLE_LIMIT {
        return Err(Error::BudgetExceeded {
            what: "oracle enumeration words",
            needed: total,
            budget: ORACLE_LIMIT,
        });
    }
    let mut out: BTreeMap<Vec<Vec<Symbol>>, f64> = BTreeMap::new();
    let mut word = vec![0 as Symbol; span as usize];
    for code in 0..total {
        let mut c = code;
        for slot in word.iter_mut().rev() {
            *slot = (c % k as u128) as Symbol;
            c /= k as u128;
        }
        *out.entry(rows_of(rule, &word, p, n)).or_insert(0.0) += word_probability(m, &word);
    }
    Ok(out)
}

/// One instance of the differential suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffCase {
    pub rule: String,
    pub k: u32,
    pub r: usize,
    pub measure: String,
    pub p: usize,
    pub n: usize,
    pub g_window: (i64, i64),
    pub oracle_count: String,
    pub dp_count: String,
    pub oracle_filtered: usize,
    pub dp_filtered: String,
    pub oracle_measure: f64,
    pub dp_measure: f64,
    pub mc_measure: f64,
    pub mc_stderr: f64,
    pub exact_match: bool,
    pub mc_within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffReport {
    pub cases: Vec<DiffCase>,
    pub exact_mismatches: usize,
    pub mc_within_fraction: f64,
    /// Instances skipped because a component refused the budget.
    pub skipped: usize,
}

/// Parameters for [`differential_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub instances: usize,
    pub mc_samples: u64,
    pub seed: u64,
    /// Largest `k^(cone ∪ G)` an instance may have.
    pub max_words: u128,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            instances: 200,
            mc_samples: 4000,
            seed: 2024,
            max_words: 1 << 18,
        }
    }
}

fn relative_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
}

/// Random small instances compared across oracle, DP and Monte Carlo.
pub fn differential_suite(cfg: &SuiteConfig) -> Result<DiffReport> {
    use rand::Rng;
    let cases: Vec<Option<DiffCase>> = (0..cfg.instances as u64)
        .into_par_iter()
        .map(|i| -> Result<Option<DiffCase>> {
            let mut rng = substream(cfg.seed, i);
            // draw until the instance fits the enumeration budget
            for _ in 0..64 {
                let k: u32 = rng.gen_range(2..=4);
                let r: usize = rng.gen_range(1..=2);
                let n: usize = rng.gen_range(1..=4);
                let p: usize = rng.gen_range(0..=1);
                let cone = 2 * (p + r * n) + 1;
                let extra_l: i64 = rng.gen_range(0..=1);
                let extra_r: i64 = rng.gen_range(0..=1);
                let words = (k as u128).saturating_pow(cone as u32 + 2);
                if words > cfg.max_words {
                    continue;
                }
                let rule = if k == 2 && r == 1 {
                    elementary_rule(rng.gen_range(0..256))?
                } else {
                    let alphabet = Alphabet::new(k)?;
                    let len = (k as usize).pow(2 * r as u32 + 1);
                    let table = (0..len).map(|_| rng.gen_range(0..k) as Symbol).collect();
                    LocalRule::from_table(alphabet, r, table, format!("random_k{k}_r{r}_{i}"))?
                };
                let m = match rng.gen_range(0..3) {
                    0 => MeasureModel::uniform(k)?,
                    1 => {
                        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
                        let s: f64 = raw.iter().sum();
                        let mut probs: Vec<f64> = raw.iter().map(|v| v / s).collect();
                        let head: f64 = probs[..k as usize - 1].iter().sum();
                        probs[k as usize - 1] = 1.0 - head;
                        MeasureModel::bernoulli(probs)?
                    }
                    _ => {
                        let rows: Vec<Vec<f64>> = (0..k)
                            .map(|_| {
                                let raw: Vec<f64> =
                                    (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
                                let s: f64 = raw.iter().sum();
                                let mut row: Vec<f64> = raw.iter().map(|v| v / s).collect();
                                let head: f64 = row[..k as usize - 1].iter().sum();
                                row[k as usize - 1] = 1.0 - head;
                                row
                            })
                            .collect();
                        MeasureModel::markov(rows)?
                    }
                };
                let (clo, chi) = rule.cone(p, n);
                let gl = -(p as i64) - rng.gen_range(0..=(r * n) as i64) - extra_l;
                let gh = p as i64 + rng.gen_range(0..=(r * n) as i64) + extra_r;
                let lo = clo.min(gl);
                let hi = chi.max(gh);
                if (k as u128).saturating_pow((hi - lo + 1) as u32) > cfg.max_words {
                    continue;
                }
                let x = m.sample_window(lo, (hi - lo + 1) as usize, &mut rng)?;
                let oracle = enumerate_class(&rule, &m, &x, p, n, (gl, gh))?;
                let dp = count_t_exact(&rule, &m, &x, p, n, (gl, gh), DEFAULT_BUDGET)?;
                let dp_measure = class_measure_exact(&rule, &m, &x, p, n, DEFAULT_BUDGET)?;
                let filter = build_delta_filter(&m, (gh - gl + 1) as usize, 0.25, 2000, i)?;
                let dp_filtered = count_t_filtered(&dp, &filter)?.count;
                let oracle_filtered = oracle.filtered_count(&filter);
                let mc = class_measure_mc(&rule, &m, &x, p, n, cfg.mc_samples, cfg.seed ^ i)?;
                let exact_match = oracle.count == dp.count_t
                    && BigUint::from(oracle_filtered) == dp_filtered
                    && relative_close(oracle.class_measure, dp_measure.prob())
                    && relative_close(oracle.class_measure, dp.class_log_measure.prob());
                let sd = (oracle.class_measure * (1.0 - oracle.class_measure)
                    / cfg.mc_samples as f64)
                    .sqrt();
                let mc_within = if mc.zero_hits {
                    // no hits is consistent when the expected hit count is small
                    oracle.class_measure * (cfg.mc_samples as f64) < 3.0
                } else {
                    (mc.prob - oracle.class_measure).abs() <= 4.0 * sd.max(1e-300)
                };
                return Ok(Some(DiffCase {
                    rule: rule.label().to_string(),
                    k,
                    r,
                    measure: m.label(),
                    p,
                    n,
                    g_window: (gl, gh),
                    oracle_count: oracle.count.to_string(),
                    dp_count: dp.count_t.to_string(),
                    oracle_filtered,
                    dp_filtered: dp_filtered.to_string(),
                    oracle_measure: oracle.class_measure,
                    dp_measure: dp_measure.prob(),
                    mc_measure: mc.prob,
                    mc_stderr: mc.stderr,
                    exact_match,
                    mc_within,
                }));
            }
            Ok(None)
        })
        .collect::<Result<Vec<_>>>()?;
    let skipped = cases.iter().filter(|c| c.is_none()).count();
    let cases: Vec<DiffCase> = cases.into_iter().flatten().collect();
    let exact_mismatches = cases.iter().filter(|c| !c.exact_match).count();
    let within = cases.iter().filter(|c| c.mc_within).count();
    let mc_within_fraction = if cases.is_empty() {
        0.0
    } else {
        within as f64 / cases.len() as f64
    };
    Ok(DiffReport {
        cases,
        exact_mismatches,
        mc_within_fraction,
        skipped,
    })
}

/// Exact integrand `1 - log #<T_delta> / (-log mu(G-cylinder of x))` by enumeration.
pub fn exact_integrand(result: &OracleResult, filter: &DeltaFilter) -> f64 {
    let count = result.filtered_count(filter);
    result.integrand(count)
}

/// Total count as f64, for reporting.
pub fn count_f64(count: &BigUint) -> f64 {
    if count.is_zero() {
        0.0
    } else {
        count.to_f64().unwrap_or(f64::INFINITY)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule::{identity_rule, shift_rule};

    fn window(lo: i64, s: &str) -> Window {
        Window::new(lo, s.bytes().map(|b| b - b'0').collect()).unwrap()
    }

    #[test]
    fn oracle_examples() {
        let u = MeasureModel::uniform(2).unwrap();
        let sh = shift_rule(2, 1).unwrap();
        let res = enumerate_class(&sh, &u, &window(-2, "01101"), 0, 2, (-2, 2)).unwrap();
        assert_eq!(res.count, BigUint::from(4u32));
        assert!((res.class_measure - 0.125).abs() < 1e-15);
        let id = identity_rule(2).unwrap();
        let res = enumerate_class(&id, &u, &window(-1, "010"), 0, 1, (-1, 1)).unwrap();
        assert_eq!(res.count, BigUint::from(4u32));
        assert!((res.class_measure - 0.5).abs() < 1e-15);
        let r90 = elementary_rule(90).unwrap();
        let res = enumerate_class(&r90, &u, &window(-3, "0110100"), 1, 2, (-2, 2)).unwrap();
        assert_eq!(res.count, BigUint::from(1u32));
        assert!((res.class_measure - 2f64.powi(-7)).abs() < 1e-15);
        assert_eq!(res.dump(), "11010\n");
    }

    #[test]
    fn partition_sums_to_one() {
        let b = MeasureModel::bernoulli(vec![0.3, 0.7]).unwrap();
        for code in [30, 90, 110] {
            let rule = elementary_rule(code).unwrap();
            let parts = partition_measures(&rule, &b, 1, 2).unwrap();
            let total: f64 = parts.values().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn small_suite_has_no_mismatches() {
        let report = differential_suite(&SuiteConfig {
            instances: 24,
            mc_samples: 2000,
            seed: 3,
            max_words: 1 << 14,
        })
        .unwrap();
        assert_eq!(report.exact_mismatches, 0, "{:#?}", report.cases.iter().find(|c| !c.exact_match));
        assert!(report.cases.len() >= 20);
    }
}
