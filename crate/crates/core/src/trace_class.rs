//! Trace classes: exact class measures and observed-word counts by a
//! space-time column dynamic program, plus Monte Carlo fallbacks and the
//! typical-word (delta) filter.
//!
//! The program scans base cells left to right. After reading base cell `c`,
//! row `i` of the space-time diagram is known up to coordinate `c - i*b`,
//! where `[a, b]` is the span of neighborhood offsets the rule actually reads.
//! The state keeps the last `b - a` cells of rows `0..n`, bit-packed into a
//! `u128`. Trace cells are checked the moment they become determined.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{LogMeasure, MeasureModel, Signature, Tracker};
use crate::rng::{substream, StreamRng};
use crate::rule::{LocalRule, Trace};
use crate::symbols::{all_words, Symbol, Window};

/// Default cap on live dynamic-program states per column.
pub const DEFAULT_BUDGET: u64 = 1 << 24;

/// Largest effective table (in bit-packed entries) the scanner builds.
const MAX_PACKED_TABLE_BITS: u32 = 26;

/// Slack used when comparing deviations against a filter threshold.
pub const FILTER_SLACK: f64 = 1e-9;

/// Offsets `[a, b]` (relative to the center) the local rule depends on.
pub fn dependency_span(rule: &LocalRule) -> (i64, i64) {
    let r = rule.radius();
    let width = 2 * r + 1;
    let k = rule.k() as usize;
    let table = rule.table();
    let mut used = vec![false; width];
    // weight of digit q in the lexicographic index: k^(width-1-q)
    let weights: Vec<usize> = (0..width).map(|q| k.pow((width - 1 - q) as u32)).collect();
    for (code, &out) in table.iter().enumerate() {
        for q in 0..width {
            if used[q] {
                continue;
            }
            let digit = (code / weights[q]) % k;
            if digit != 0 && table[code - digit * weights[q]] != out {
                used[q] = true;
            }
        }
        if used.iter().all(|&u| u) {
            break;
        }
    }
    let first = used.iter().position(|&u| u);
    let last = used.iter().rposition(|&u| u);
    match (first, last) {
        (Some(f), Some(l)) => (f as i64 - r as i64, l as i64 - r as i64),
        _ => (0, 0),
    }
}

/// Coordinates whose base cells can change the trace of the central
/// `(2p+1)`-block over `n` steps. Contained in `rule.cone(p, n)`.
pub fn reduced_cone(rule: &LocalRule, p: usize, n: usize) -> (i64, i64) {
    let (a, b) = dependency_span(rule);
    let (p, n) = (p as i64, n as i64);
    (-p + n * a.min(0), p + n * b.max(0))
}

fn bits_for(k: usize) -> u32 {
    usize::BITS - (k - 1).leading_zeros()
}

/// Column scanner for one (rule, trace) pair.
pub(crate) struct Scanner {
    k: usize,
    n: usize,
    w: usize,
    b: i64,
    lo: i64,
    hi: i64,
    p: i64,
    bits: u32,
    seg_bits: u32,
    seg_mask: u128,
    table: Vec<Symbol>,
    rows: Vec<Vec<Symbol>>,
}

impl Scanner {
    pub(crate) fn new(rule: &LocalRule, trace: &Trace) -> Result<Self> {
        let (a, b) = dependency_span(rule);
        let k = rule.k() as usize;
        let n = trace.n();
        let p = trace.p();
        let w = (b - a) as usize;
        let bits = bits_for(k);
        let state_bits = (n * w) as u64 * bits as u64;
        if state_bits > 128 {
            return Err(Error::BudgetExceeded {
                what: "packed trace-class state bits",
                needed: state_bits as u128,
                budget: 128,
            });
        }
        let table_bits = bits * (w as u32 + 1);
        if table_bits > MAX_PACKED_TABLE_BITS {
            return Err(Error::BudgetExceeded {
                what: "packed effective rule table bits",
                needed: table_bits as u128,
                budget: MAX_PACKED_TABLE_BITS as u128,
            });
        }
        let r = rule.radius() as i64;
        let mut neigh = vec![0 as Symbol; 2 * rule.radius() + 1];
        let digit_mask = (1usize << bits) - 1;
        let table = (0..1usize << table_bits)
            .map(|idx| {
                let mut ok = true;
                for t in 0..=w {
                    let d = (idx >> (bits as usize * (w - t))) & digit_mask;
                    if d >= k {
                        ok = false;
                        break;
                    }
                    neigh[(r + a + t as i64) as usize] = d as Symbol;
                }
                if ok {
                    rule.apply(&neigh)
                } else {
                    0
                }
            })
            .collect();
        let seg_bits = bits * w as u32;
        let seg_mask = if seg_bits >= 128 {
            u128::MAX
        } else {
            (1u128 << seg_bits) - 1
        };
        let (pi, ni) = (p as i64, n as i64);
        Ok(Self {
            k,
            n,
            w,
            b,
            lo: -pi + ni * a.min(0),
            hi: pi + ni * b.max(0),
            p: pi,
            bits,
            seg_bits,
            seg_mask,
            table,
            rows: trace.rows().to_vec(),
        })
    }

    pub(crate) fn range(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    #[inline]
    fn in_cone(&self, c: i64) -> bool {
        self.lo <= c && c <= self.hi
    }

    /// Read base symbol `s` at column `c`; `None` if a trace cell is violated.
    #[inline]
    pub(crate) fn advance(&self, state: u128, c: i64, s: Symbol) -> Option<u128> {
        let p = self.p;
        if c.abs() <= p && s != self.rows[0][(c + p) as usize] {
            return None;
        }
        let mut next = state;
        let mut val = s as u128;
        let seg_bits = self.seg_bits;
        for i in 1..=self.n {
            let shift = (i as u32 - 1) * seg_bits;
            let seg = if seg_bits == 0 {
                0
            } else {
                (state >> shift) & self.seg_mask
            };
            let shifted = ((seg << self.bits) | val) & self.seg_mask;
            if seg_bits > 0 {
                next = (next & !(self.seg_mask << shift)) | (shifted << shift);
            }
            if c < self.lo + (i * self.w) as i64 {
                return Some(next);
            }
            let out = self.table[((seg << self.bits) | val) as usize];
            let z = c - i as i64 * self.b;
            if z.abs() <= p && out != self.rows[i][(z + p) as usize] {
                return None;
            }
            val = out as u128;
        }
        Some(next)
    }
}

fn budget_check(live: usize, budget: u64, what: &'static str) -> Result<()> {
    if live as u64 > budget {
        return Err(Error::BudgetExceeded {
            what,
            needed: live as u128,
            budget: budget as u128,
        });
    }
    Ok(())
}

/// Exact class weight `sum over accepted cone words of mu([word])`.
fn class_weight(scanner: &Scanner, m: &MeasureModel, budget: u64) -> Result<f64> {
    let (lo, hi) = scanner.range();
    let mut layer: FxHashMap<(u128, Tracker), f64> = FxHashMap::default();
    layer.insert((0, m.tracker_start()), 1.0);
    for c in lo..=hi {
        let j = (c - lo) as usize;
        let mut next: FxHashMap<(u128, Tracker), f64> = FxHashMap::default();
        for ((st, tr), wgt) in &layer {
            for s in 0..scanner.k as Symbol {
                let Some(st2) = scanner.advance(*st, c, s) else {
                    continue;
                };
                let Some((tr2, f)) = m.tracker_push(tr, j, s) else {
                    continue;
                };
                *next.entry((st2, tr2)).or_insert(0.0) += wgt * f;
            }
        }
        budget_check(next.len(), budget, "trace-class DP states")?;
        layer = next;
    }
    Ok(layer
        .iter()
        .map(|((_, tr), w)| w * m.tracker_finish(tr))
        .sum())
}

/// Words on the window `[gl, gh]` grouped by measure signature.
fn signature_counts(
    scanner: &Scanner,
    m: &MeasureModel,
    gl: i64,
    gh: i64,
    budget: u64,
) -> Result<FxHashMap<Signature, BigUint>> {
    let (lo, hi) = scanner.range();
    let k = scanner.k as Symbol;
    // existential prefix: cone columns left of the window
    let mut prefix: FxHashSet<u128> = FxHashSet::default();
    prefix.insert(0);
    for c in lo..gl.min(hi + 1) {
        let mut next = FxHashSet::default();
        for &st in &prefix {
            for s in 0..k {
                if let Some(st2) = scanner.advance(st, c, s) {
                    next.insert(st2);
                }
            }
        }
        budget_check(next.len(), budget, "trace-class DP states")?;
        prefix = next;
    }
    let mut start: Vec<u128> = prefix.into_iter().collect();
    start.sort_unstable();
    if start.is_empty() {
        return Ok(FxHashMap::default());
    }
    // counted window: subset construction keyed by measure signature
    type Key = (Box<[u128]>, Signature);
    let mut layer: FxHashMap<Key, BigUint> = FxHashMap::default();
    layer.insert((start.into_boxed_slice(), m.signature_start()), BigUint::one());
    let mut buf: Vec<u128> = Vec::new();
    for c in gl..=gh {
        let j = (c - gl) as usize;
        let mut next: FxHashMap<Key, BigUint> = FxHashMap::default();
        for ((set, sig), count) in &layer {
            for s in 0..k {
                let sig2 = m.signature_push(sig, j, s);
                let set2: Box<[u128]> = if scanner.in_cone(c) {
                    buf.clear();
                    buf.extend(set.iter().filter_map(|&st| scanner.advance(st, c, s)));
                    if buf.is_empty() {
                        continue;
                    }
                    buf.sort_unstable();
                    buf.dedup();
                    buf.as_slice().into()
                } else {
                    set.clone()
                };
                *next.entry((set2, sig2)).or_insert_with(BigUint::zero) += count;
            }
        }
        budget_check(next.len(), budget, "trace-class DP states")?;
        layer = next;
    }
    // existential suffix: keep subsets with at least one completable state
    let alive = if gh < hi {
        let union: FxHashSet<u128> = layer.keys().flat_map(|(set, _)| set.iter().copied()).collect();
        completable(scanner, union, gh + 1, hi, budget)?
    } else {
        layer.keys().flat_map(|(set, _)| set.iter().copied()).collect()
    };
    let mut out: FxHashMap<Signature, BigUint> = FxHashMap::default();
    for ((set, sig), count) in layer {
        if set.iter().any(|st| alive.contains(st)) {
            *out.entry(sig).or_insert_with(BigUint::zero) += count;
        }
    }
    Ok(out)
}

/// States (after column `from - 1`) with an accepted completion over `from..=to`.
fn completable(
    scanner: &Scanner,
    start: FxHashSet<u128>,
    from: i64,
    to: i64,
    budget: u64,
) -> Result<FxHashSet<u128>> {
    let k = scanner.k as Symbol;
    let mut layers: Vec<Vec<u128>> = vec![start.into_iter().collect()];
    let mut edges: Vec<Vec<Vec<u32>>> = Vec::new();
    for c in from..=to {
        let cur = layers.last().expect("non-empty");
        let mut index: FxHashMap<u128, u32> = FxHashMap::default();
        let mut states = Vec::new();
        let mut succ = Vec::with_capacity(cur.len());
        for &st in cur {
            let mut list = Vec::new();
            for s in 0..k {
                if let Some(st2) = scanner.advance(st, c, s) {
                    let id = *index.entry(st2).or_insert_with(|| {
                        states.push(st2);
                        (states.len() - 1) as u32
                    });
                    list.push(id);
                }
            }
            succ.push(list);
        }
        budget_check(states.len(), budget, "trace-class DP states")?;
        edges.push(succ);
        layers.push(states);
    }
    let mut alive = vec![true; layers.last().expect("non-empty").len()];
    for t in (0..edges.len()).rev() {
        alive = edges[t]
            .iter()
            .map(|list| list.iter().any(|&id| alive[id as usize]))
            .collect();
    }
    Ok(layers[0]
        .iter()
        .zip(alive)
        .filter(|(_, a)| *a)
        .map(|(&st, _)| st)
        .collect())
}

/// Pairs each leaf of a product rule with the matching measure component.
fn factor_plan(rule: &LocalRule, m: &MeasureModel) -> Option<Vec<(LocalRule, MeasureModel)>> {
    let leaves = rule.leaves();
    if leaves.len() < 2 {
        return None;
    }
    let parts: Vec<MeasureModel> = match m {
        MeasureModel::Product { components } if components.len() == leaves.len() => {
            components.clone()
        }
        MeasureModel::Uniform { k } if *k == rule.k() => leaves
            .iter()
            .map(|l| MeasureModel::Uniform { k: l.k() })
            .collect(),
        _ => return None,
    };
    if leaves.iter().zip(&parts).any(|(l, c)| l.k() != c.k()) {
        return None;
    }
    Some(leaves.into_iter().cloned().zip(parts).collect())
}

fn check_pair(rule: &LocalRule, m: &MeasureModel) -> Result<()> {
    if rule.k() != m.k() {
        return Err(Error::InvalidArgument(format!(
            "rule alphabet {} differs from measure alphabet {}",
            rule.k(),
            m.k()
        )));
    }
    Ok(())
}

/// Exact `log mu(class of x)` for the trace of `x` over `n` steps.
pub fn class_measure_exact(
    rule: &LocalRule,
    m: &MeasureModel,
    x: &Window,
    p: usize,
    n: usize,
    budget: u64,
) -> Result<LogMeasure> {
    check_pair(rule, m)?;
    let trace = rule.trace_of(x, p, n)?;
    class_measure_of_trace(rule, m, &trace, budget)
}

pub fn class_measure_of_trace(
    rule: &LocalRule,
    m: &MeasureModel,
    trace: &Trace,
    budget: u64,
) -> Result<LogMeasure> {
    if let Some(plan) = factor_plan(rule, m) {
        let mut total = 0.0;
        for (i, (leaf, part)) in plan.iter().enumerate() {
            let t = trace.project(rule.alphabet(), i);
            let lm = class_measure_of_trace(leaf, part, &t, budget)?;
            if lm.is_zero() {
                return Ok(LogMeasure::ZERO);
            }
            total += lm.0;
        }
        return Ok(LogMeasure(total.min(0.0)));
    }
    let scanner = Scanner::new(rule, trace)?;
    Ok(LogMeasure::from_prob(class_weight(&scanner, m, budget)?))
}

/// One bin of a word histogram: `count` words share this cylinder log-measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub log_measure: LogMeasure,
    pub count: BigUint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DpExact,
    Enumeration,
    MonteCarlo,
}

/// `<T^G_{n,p}(x)>` with its measure profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceClassResult {
    pub trace: Trace,
    /// Observed coordinates `[lo, hi]`.
    pub g_window: (i64, i64),
    pub count_t: BigUint,
    /// Observed words of measure zero (included in `count_t`).
    pub zero_measure_words: BigUint,
    pub histogram: Vec<HistBin>,
    pub class_log_measure: LogMeasure,
    /// Log-measure of `x` restricted to the window.
    pub x_log_measure: LogMeasure,
    pub method: Method,
}

impl TraceClassResult {
    pub fn window_len(&self) -> usize {
        (self.g_window.1 - self.g_window.0 + 1) as usize
    }

    /// Sum of cylinder measures over the observed words.
    pub fn observed_mass(&self) -> f64 {
        self.histogram
            .iter()
            .map(|b| b.log_measure.prob() * b.count.to_f64().unwrap_or(f64::INFINITY))
            .sum()
    }
}

fn histogram_of_trace(
    rule: &LocalRule,
    m: &MeasureModel,
    trace: &Trace,
    window: (i64, i64),
    budget: u64,
) -> Result<Vec<HistBin>> {
    if let Some(plan) = factor_plan(rule, m) {
        let mut acc = vec![HistBin {
            log_measure: LogMeasure::ONE,
            count: BigUint::one(),
        }];
        for (i, (leaf, part)) in plan.iter().enumerate() {
            let t = trace.project(rule.alphabet(), i);
            let h = histogram_of_trace(leaf, part, &t, window, budget)?;
            let mut merged: BTreeMap<u64, HistBin> = BTreeMap::new();
            for a in &acc {
                for b in &h {
                    let lm = if a.log_measure.is_zero() || b.log_measure.is_zero() {
                        LogMeasure::ZERO
                    } else {
                        LogMeasure((a.log_measure.0 + b.log_measure.0).min(0.0))
                    };
                    let count = &a.count * &b.count;
                    merged
                        .entry(lm.0.to_bits())
                        .and_modify(|bin| bin.count += &count)
                        .or_insert(HistBin {
                            log_measure: lm,
                            count,
                        });
                }
            }
            budget_check(merged.len(), budget, "histogram bins")?;
            acc = merged.into_values().collect();
        }
        return Ok(acc);
    }
    let scanner = Scanner::new(rule, trace)?;
    let len = (window.1 - window.0 + 1) as usize;
    let sigs = signature_counts(&scanner, m, window.0, window.1, budget)?;
    let mut merged: BTreeMap<u64, HistBin> = BTreeMap::new();
    for (sig, count) in sigs {
        let lm = m.signature_log_measure(&sig, len);
        merged
            .entry(lm.0.to_bits())
            .and_modify(|bin| bin.count += &count)
            .or_insert(HistBin {
                log_measure: lm,
                count,
            });
    }
    Ok(merged.into_values().collect())
}

fn check_window(trace: &Trace, window: (i64, i64)) -> Result<()> {
    let p = trace.p() as i64;
    if window.0 > -p || window.1 < p {
        return Err(Error::InvalidWindow(format!(
            "observation window [{}, {}] must contain the central block [{}, {}]",
            window.0, window.1, -p, p
        )));
    }
    Ok(())
}

/// Exact `#<T^G_{n,p}(x)>` on the coordinate window `window`, with the
/// measure histogram of the observed words and the exact class measure.
pub fn count_t_exact(
    rule: &LocalRule,
    m: &MeasureModel,
    x: &Window,
    p: usize,
    n: usize,
    window: (i64, i64),
    budget: u64,
) -> Result<TraceClassResult> {
    check_pair(rule, m)?;
    let trace = rule.trace_of(x, p, n)?;
    check_window(&trace, window)?;
    let x_window = x.restrict(window.0, window.1)?;
    let histogram = histogram_of_trace(rule, m, &trace, window, budget)?;
    let class_log_measure = class_measure_of_trace(rule, m, &trace, budget)?;
    let mut count_t = BigUint::zero();
    let mut zero = BigUint::zero();
    for bin in &histogram {
        count_t += &bin.count;
        if bin.log_measure.is_zero() {
            zero += &bin.count;
        }
    }
    Ok(TraceClassResult {
        trace,
        g_window: window,
        count_t,
        zero_measure_words: zero,
        histogram,
        class_log_measure,
        x_log_measure: m.cylinder_log_measure(&x_window),
        method: Method::DpExact,
    })
}

/// All words of `<T^G_{n,p}(x)>` in lexicographic order (small instances).
pub fn enumerate_t_words(
    rule: &LocalRule,
    x: &Window,
    p: usize,
    n: usize,
    window: (i64, i64),
    limit: usize,
) -> Result<Vec<Vec<Symbol>>> {
    let trace = rule.trace_of(x, p, n)?;
    check_window(&trace, window)?;
    let scanner = Scanner::new(rule, &trace)?;
    let (lo, hi) = scanner.range();
    let (gl, gh) = window;
    let k = scanner.k as Symbol;
    let sc = &scanner;
    let step_set = move |set: &[u128], c: i64, s: Option<Symbol>| -> Vec<u128> {
        if !sc.in_cone(c) {
            return set.to_vec();
        }
        let mut out: Vec<u128> = set
            .iter()
            .flat_map(|&st| {
                let syms: Vec<Symbol> = match s {
                    Some(s) => vec![s],
                    None => (0..k).collect(),
                };
                syms.into_iter().filter_map(move |s| sc.advance(st, c, s))
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    };
    let mut start = vec![0u128];
    for c in lo..gl.min(hi + 1) {
        start = step_set(&start, c, None);
    }
    // every state reachable at the end of the window, then the completable ones
    let mut reach = start.clone();
    for c in gl..=gh {
        reach = step_set(&reach, c, None);
    }
    let alive: FxHashSet<u128> = if gh < hi {
        completable(&scanner, reach.into_iter().collect(), gh + 1, hi, u64::MAX)?
    } else {
        reach.into_iter().collect()
    };
    let mut words = Vec::new();
    let mut word = Vec::with_capacity((gh - gl + 1) as usize);
    fn dfs(
        c: i64,
        gh: i64,
        set: Vec<u128>,
        word: &mut Vec<Symbol>,
        words: &mut Vec<Vec<Symbol>>,
        limit: usize,
        k: Symbol,
        alive: &FxHashSet<u128>,
        step: &dyn Fn(&[u128], i64, Option<Symbol>) -> Vec<u128>,
    ) -> Result<()> {
        if c > gh {
            if set.iter().any(|st| alive.contains(st)) {
                if words.len() >= limit {
                    return Err(Error::BudgetExceeded {
                        what: "enumerated words",
                        needed: limit as u128 + 1,
                        budget: limit as u128,
                    });
                }
                words.push(word.clone());
            }
            return Ok(());
        }
        for s in 0..k {
            let next = step(&set, c, Some(s));
            if next.is_empty() {
                continue;
            }
            word.push(s);
            dfs(c + 1, gh, next, word, words, limit, k, alive, step)?;
            word.pop();
        }
        Ok(())
    }
    dfs(gl, gh, start, &mut word, &mut words, limit, k, &alive, &step_set)?;
    Ok(words)
}

/// Dump format shared with the oracle: one word per line, base-k digits.
pub fn dump_words(words: &[Vec<Symbol>]) -> String {
    let mut out = String::new();
    for w in words {
        out.push_str(&crate::symbols::word_to_digits(w));
        out.push('\n');
    }
    out
}

/// Monte Carlo class measure: fraction of fresh samples sharing the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McMeasure {
    pub log_measure: LogMeasure,
    pub prob: f64,
    pub stderr: f64,
    pub hits: u64,
    pub samples: u64,
    /// No sample hit the class; `prob` is then `0.5 / samples`, a
    /// low-confidence stand-in.
    pub zero_hits: bool,
}

pub fn class_measure_mc(
    rule: &LocalRule,
    m: &MeasureModel,
    x: &Window,
    p: usize,
    n: usize,
    samples: u64,
    seed: u64,
) -> Result<McMeasure> {
    check_pair(rule, m)?;
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be positive".into()));
    }
    let trace = rule.trace_of(x, p, n)?;
    let (lo, hi) = reduced_cone(rule, p, n);
    let len = (hi - lo + 1) as usize;
    let (clo, chi) = rule.cone(p, n);
    let hits: u64 = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            let core = m.sample_word(len, &mut rng);
            // cells outside the reduced cone cannot change the trace
            let y = Window::from_fn(clo, chi, |c| {
                if c >= lo && c <= hi {
                    core[(c - lo) as usize]
                } else {
                    0
                }
            })
            .expect("non-empty");
            u64::from(rule.trace_of(&y, p, n).expect("cone covered") == trace)
        })
        .sum();
    let nf = samples as f64;
    let zero_hits = hits == 0;
    let prob = if zero_hits { 0.5 / nf } else { hits as f64 / nf };
    let stderr = (prob * (1.0 - prob) / nf).sqrt();
    Ok(McMeasure {
        log_measure: LogMeasure::from_prob(prob),
        prob,
        stderr,
        hits,
        samples,
        zero_hits,
    })
}

/// Distinct observed words found by a random walk inside the class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCount {
    pub g_window: (i64, i64),
    /// Distinct words seen: a lower bound on `#<T>`.
    pub distinct: u64,
    /// Good–Turing coverage estimate `1 - singletons / visits`.
    pub coverage: f64,
    pub visits: u64,
    pub proposals: u64,
    /// Distinct words with their cylinder log-measures.
    pub words: Vec<(Vec<Symbol>, LogMeasure)>,
    pub x_log_measure: LogMeasure,
}

/// Lower-bound estimate of `#<T^G_{n,p}(x)>`: block-resampling walk from `x`
/// that only moves to configurations with the same trace.
pub fn count_t_mc(
    rule: &LocalRule,
    m: &MeasureModel,
    x: &Window,
    p: usize,
    n: usize,
    window: (i64, i64),
    proposals: u64,
    seed: u64,
) -> Result<McCount> {
    check_pair(rule, m)?;
    let trace = rule.trace_of(x, p, n)?;
    check_window(&trace, window)?;
    let (clo, chi) = rule.cone(p, n);
    let lo = clo.min(window.0);
    let hi = chi.max(window.1);
    x.require_cover(clo, chi)?;
    // extend x to [lo, hi] with fresh cells where it has none
    let mut rng: StreamRng = substream(seed, 0);
    let mut cur: Vec<Symbol> = (lo..=hi)
        .map(|c| {
            x.get(c).unwrap_or_else(|| rng.gen_range(0..m.k()) as Symbol)
        })
        .collect();
    let k = m.k();
    let span = (hi - lo + 1) as usize;
    let g_off = (window.0 - lo) as usize;
    let g_len = (window.1 - window.0 + 1) as usize;
    let mut seen: FxHashMap<Vec<Symbol>, u64> = FxHashMap::default();
    let mut visits = 0u64;
    let record = |cur: &[Symbol], seen: &mut FxHashMap<Vec<Symbol>, u64>| {
        *seen.entry(cur[g_off..g_off + g_len].to_vec()).or_insert(0) += 1;
    };
    record(&cur, &mut seen);
    visits += 1;
    let cone_off = (clo - lo) as usize;
    let cone_len = (chi - clo + 1) as usize;
    for _ in 0..proposals {
        let block = rng.gen_range(1..=span.min(4));
        let start = rng.gen_range(0..=span - block);
        let mut cand = cur.clone();
        for cell in cand.iter_mut().skip(start).take(block) {
            *cell = rng.gen_range(0..k) as Symbol;
        }
        let w = Window::new(clo, cand[cone_off..cone_off + cone_len].to_vec())
            .expect("non-empty");
        if rule.trace_of(&w, p, n)? == trace {
            cur = cand;
            record(&cur, &mut seen);
            visits += 1;
        }
    }
    let singletons = seen.values().filter(|&&v| v == 1).count() as f64;
    let mut words: Vec<(Vec<Symbol>, LogMeasure)> = seen
        .into_keys()
        .map(|w| {
            let lm = m.word_log_measure(&w);
            (w, lm)
        })
        .collect();
    words.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(McCount {
        g_window: window,
        distinct: words.len() as u64,
        coverage: 1.0 - singletons / visits as f64,
        visits,
        proposals,
        words,
        x_log_measure: m.cylinder_log_measure(&x.restrict(window.0, window.1)?),
    })
}

/// Typical-word threshold `eta` for windows of a given length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaFilter {
    pub delta: f64,
    pub window_len: usize,
    pub eta: f64,
    pub h_ref: f64,
    /// Words evaluated (all admissible words when `exact`).
    pub samples: u64,
    pub exact: bool,
}

/// Words up to this many are enumerated when building a filter.
pub const FILTER_ENUMERATION_LIMIT: u64 = 4096;

impl DeltaFilter {
    /// `|-log mu / len - h|`; infinite for measure-zero words.
    pub fn deviation(&self, log_measure: LogMeasure) -> f64 {
        if log_measure.is_zero() {
            f64::INFINITY
        } else {
            (-log_measure.0 / self.window_len as f64 - self.h_ref).abs()
        }
    }

    /// Threshold applied for base point `x`: its own word is always retained.
    pub fn eta_for(&self, x_log_measure: LogMeasure) -> f64 {
        let dev = self.deviation(x_log_measure);
        if dev.is_finite() {
            self.eta.max(dev)
        } else {
            self.eta
        }
    }

    pub fn passes(&self, log_measure: LogMeasure, eta: f64) -> bool {
        self.deviation(log_measure) <= eta + FILTER_SLACK
    }
}

/// `eta` = (1 - delta)-quantile of the deviation `|-log mu([w])/L - h|`
/// under `mu`, exact when all `k^L` words can be listed, else from samples.
pub fn build_delta_filter(
    m: &MeasureModel,
    window_len: usize,
    delta: f64,
    samples: u64,
    seed: u64,
) -> Result<DeltaFilter> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    if window_len == 0 {
        return Err(Error::InvalidArgument("window length must be positive".into()));
    }
    let h_ref = m.shift_entropy();
    let len_f = window_len as f64;
    let dev = |lm: LogMeasure| (-lm.0 / len_f - h_ref).abs();
    let words = (m.k() as u64).checked_pow(window_len as u32);
    let (mut pairs, exact): (Vec<(f64, f64)>, bool) = match words {
        Some(total) if total <= FILTER_ENUMERATION_LIMIT => (
            all_words(m.k(), window_len)
                .map(|w| m.word_log_measure(&w))
                .filter(|lm| !lm.is_zero())
                .map(|lm| (dev(lm), lm.prob()))
                .collect(),
            true,
        ),
        _ => {
            if samples == 0 {
                return Err(Error::InvalidArgument("filter needs samples".into()));
            }
            (
                (0..samples)
                    .into_par_iter()
                    .map(|i| {
                        let mut rng = substream(seed, i);
                        (dev(m.word_log_measure(&m.sample_word(window_len, &mut rng))), 1.0)
                    })
                    .collect(),
                false,
            )
        }
    };
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let target = (1.0 - delta) * total;
    let mut acc = 0.0;
    let mut eta = pairs.last().map(|p| p.0).unwrap_or(0.0);
    for &(d, wgt) in &pairs {
        acc += wgt;
        if acc >= target * (1.0 - 1e-12) {
            eta = d;
            break;
        }
    }
    // measures with equal cylinder weights give deviations of pure rounding noise
    if eta < 1e-12 {
        eta = 0.0;
    }
    Ok(DeltaFilter {
        delta,
        window_len,
        eta,
        h_ref,
        samples: pairs.len() as u64,
        exact,
    })
}

/// Filtered count `#<T^G_{n,delta,p}(x)>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredCount {
    pub count: BigUint,
    /// Threshold actually applied (filter eta raised to x's own deviation).
    pub eta: f64,
    /// Whether the count is only a lower bound (Monte Carlo source).
    pub lower_bound: bool,
}

pub fn count_t_filtered(result: &TraceClassResult, filter: &DeltaFilter) -> Result<FilteredCount> {
    if filter.window_len != result.window_len() {
        return Err(Error::InvalidArgument(format!(
            "filter built for windows of length {}, result window has {}",
            filter.window_len,
            result.window_len()
        )));
    }
    let eta = filter.eta_for(result.x_log_measure);
    let mut count = BigUint::zero();
    for bin in &result.histogram {
        if filter.passes(bin.log_measure, eta) {
            count += &bin.count;
        }
    }
    Ok(FilteredCount {
        count,
        eta,
        lower_bound: false,
    })
}

pub fn count_t_filtered_mc(mc: &McCount, filter: &DeltaFilter) -> FilteredCount {
    let eta = filter.eta_for(mc.x_log_measure);
    let count = mc
        .words
        .iter()
        .filter(|(_, lm)| filter.passes(*lm, eta))
        .count();
    FilteredCount {
        count: BigUint::from(count.max(1)),
        eta,
        lower_bound: true,
    }
}
