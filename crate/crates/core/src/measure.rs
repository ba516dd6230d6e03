//! Shift-ergodic measure models: exact cylinder log-measures, sampling,
//! conditional extension and closed-form shift entropy.
//!
//! All logarithms are natural. Measure zero is the log-measure `-inf`.

use std::fmt;

use num_rational::Ratio;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, StreamRng};
use crate::rule::LocalRule;
use crate::sturmian::{ArcSet, Rotation};
use crate::symbols::{all_words, Alphabet, Symbol, Window};

const SUM_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-10;

/// Natural-log measure of a set; `-inf` encodes measure zero.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LogMeasure(pub f64);

impl LogMeasure {
    pub const ZERO: LogMeasure = LogMeasure(f64::NEG_INFINITY);
    pub const ONE: LogMeasure = LogMeasure(0.0);

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    pub fn prob(self) -> f64 {
        self.0.exp()
    }

    pub fn from_prob(p: f64) -> Self {
        if p <= 0.0 {
            Self::ZERO
        } else {
            LogMeasure(p.ln().min(0.0))
        }
    }
}

impl fmt::Display for LogMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            write!(f, "-inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MeasureModel {
    Uniform {
        k: u32,
    },
    Bernoulli {
        probs: Vec<f64>,
    },
    Markov {
        stationary: Vec<f64>,
        transition: Vec<Vec<f64>>,
    },
    /// Independent product; components are never themselves products.
    Product {
        components: Vec<MeasureModel>,
    },
    Sturmian(Rotation),
}

fn check_distribution(probs: &[f64], what: &str) -> Result<()> {
    if probs.len() < 2 {
        return Err(Error::InvalidMeasure(format!("{what} needs at least two symbols")));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidMeasure(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidMeasure(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

/// Solve `pi P = pi`, `sum(pi) = 1` by Gaussian elimination.
fn stationary_of(transition: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = transition.len();
    // rows: equations; (P^T - I) with last row replaced by ones
    let mut a = vec![vec![0.0; k + 1]; k];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, slot) in row.iter_mut().take(k).enumerate() {
            *slot = transition[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..k {
        a[k - 1][j] = 1.0;
    }
    a[k - 1][k] = 1.0;
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .expect("non-empty");
        if a[pivot][col].abs() < 1e-14 {
            return Err(Error::InvalidMeasure(
                "transition matrix has no unique stationary distribution".into(),
            ));
        }
        a.swap(col, pivot);
        for row in 0..k {
            if row != col {
                let f = a[row][col] / a[col][col];
                if f != 0.0 {
                    for c in col..=k {
                        a[row][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    Ok((0..k).map(|i| (a[i][k] / a[i][i]).max(0.0)).collect())
}

impl MeasureModel {
    pub fn uniform(k: u32) -> Result<Self> {
        Alphabet::new(k)?;
        Ok(Self::Uniform { k })
    }

    pub fn bernoulli(probs: Vec<f64>) -> Result<Self> {
        check_distribution(&probs, "Bernoulli distribution")?;
        Alphabet::new(probs.len() as u32)?;
        Ok(Self::Bernoulli { probs })
    }

    /// Markov chain started from its stationary distribution.
    pub fn markov(transition: Vec<Vec<f64>>) -> Result<Self> {
        let k = transition.len();
        Alphabet::new(k as u32)?;
        for row in &transition {
            if row.len() != k {
                return Err(Error::InvalidMeasure("transition matrix must be square".into()));
            }
            check_distribution(row, "transition row")?;
        }
        let stationary = stationary_of(&transition)?;
        Self::markov_with_stationary(stationary, transition)
    }

    pub fn markov_with_stationary(stationary: Vec<f64>, transition: Vec<Vec<f64>>) -> Result<Self> {
        check_distribution(&stationary, "stationary distribution")?;
        let k = stationary.len();
        for j in 0..k {
            let v: f64 = (0..k).map(|i| stationary[i] * transition[i][j]).sum();
            if (v - stationary[j]).abs() > STATIONARY_TOL {
                return Err(Error::InvalidMeasure(format!(
                    "distribution is not stationary at symbol {j}: {v} vs {}",
                    stationary[j]
                )));
            }
        }
        Ok(Self::Markov {
            stationary,
            transition,
        })
    }

    pub fn product(components: Vec<MeasureModel>) -> Result<Self> {
        let mut flat = Vec::new();
        for c in components {
            match c {
                Self::Product { components } => flat.extend(components),
                other => flat.push(other),
            }
        }
        if flat.len() < 2 {
            return Err(Error::InvalidMeasure("product needs at least two components".into()));
        }
        let size: u64 = flat.iter().map(|c| c.k() as u64).product();
        if size > crate::symbols::MAX_ALPHABET as u64 {
            return Err(Error::InvalidMeasure(format!("product alphabet of size {size} too large")));
        }
        Ok(Self::Product { components: flat })
    }

    pub fn sturmian(rotation: Rotation) -> Self {
        Self::Sturmian(rotation)
    }

    pub fn k(&self) -> u32 {
        match self {
            Self::Uniform { k } => *k,
            Self::Bernoulli { probs } => probs.len() as u32,
            Self::Markov { stationary, .. } => stationary.len() as u32,
            Self::Product { components } => components.iter().map(|c| c.k()).product(),
            Self::Sturmian(_) => 2,
        }
    }

    pub fn alphabet(&self) -> Alphabet {
        match self {
            Self::Product { components } => {
                let mut it = components.iter();
                let first = it.next().expect("product has components").alphabet();
                it.fold(first, |acc, c| {
                    Alphabet::product(&acc, &c.alphabet()).expect("validated at construction")
                })
            }
            _ => Alphabet::new(self.k()).expect("validated at construction"),
        }
    }

    pub fn components(&self) -> Option<&[MeasureModel]> {
        match self {
            Self::Product { components } => Some(components),
            _ => None,
        }
    }

    /// Short description used in result files.
    pub fn label(&self) -> String {
        match self {
            Self::Uniform { k } => format!("uniform{k}"),
            Self::Bernoulli { probs } => {
                let ps: Vec<String> = probs.iter().map(|p| format!("{p:.4}")).collect();
                format!("bernoulli({})", ps.join(";"))
            }
            Self::Markov { transition, .. } => {
                let rows: Vec<String> = transition
                    .iter()
                    .map(|r| r.iter().map(|p| format!("{p:.4}")).collect::<Vec<_>>().join(";"))
                    .collect();
                format!("markov({})", rows.join("|"))
            }
            Self::Product { components } => components
                .iter()
                .map(|c| c.label())
                .collect::<Vec<_>>()
                .join("_x_"),
            Self::Sturmian(r) => format!("sturmian({}/{})", r.p(), r.q()),
        }
    }

    fn check_word(&self, word: &[Symbol]) -> Result<()> {
        let k = self.k();
        match word.iter().find(|&&s| s as u32 >= k) {
            Some(s) => Err(Error::InvalidWindow(format!("symbol {s} outside alphabet of size {k}"))),
            None => Ok(()),
        }
    }

    /// Exact log-measure of the cylinder spelled by `w` (offset irrelevant).
    pub fn cylinder_log_measure(&self, w: &Window) -> LogMeasure {
        self.word_log_measure(w.symbols())
    }

    pub fn word_log_measure(&self, word: &[Symbol]) -> LogMeasure {
        if word.is_empty() {
            return LogMeasure::ONE;
        }
        if self.check_word(word).is_err() {
            return LogMeasure::ZERO;
        }
        let v = match self {
            Self::Uniform { k } => -(word.len() as f64) * (*k as f64).ln(),
            Self::Bernoulli { probs } => word.iter().map(|&s| probs[s as usize].ln()).sum(),
            Self::Markov {
                stationary,
                transition,
            } => {
                stationary[word[0] as usize].ln()
                    + word
                        .windows(2)
                        .map(|ab| transition[ab[0] as usize][ab[1] as usize].ln())
                        .sum::<f64>()
            }
            Self::Product { components } => {
                let alphabet = self.alphabet();
                components
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c.word_log_measure(&alphabet.project(word, i)).0)
                    .sum()
            }
            Self::Sturmian(rot) => {
                let cells = rot.word_cells(word).cells();
                if cells == 0 {
                    f64::NEG_INFINITY
                } else {
                    (cells as f64 / rot.q() as f64).ln()
                }
            }
        };
        if v.is_nan() || v == f64::NEG_INFINITY {
            LogMeasure::ZERO
        } else {
            LogMeasure(v.min(0.0))
        }
    }

    /// Closed-form `h_mu(sigma)` in nats.
    pub fn shift_entropy(&self) -> f64 {
        fn plogp(p: f64) -> f64 {
            if p > 0.0 {
                -p * p.ln()
            } else {
                0.0
            }
        }
        match self {
            Self::Uniform { k } => (*k as f64).ln(),
            Self::Bernoulli { probs } => probs.iter().map(|&p| plogp(p)).sum(),
            Self::Markov {
                stationary,
                transition,
            } => stationary
                .iter()
                .zip(transition)
                .map(|(pi, row)| pi * row.iter().map(|&p| plogp(p)).sum::<f64>())
                .sum(),
            Self::Product { components } => components.iter().map(|c| c.shift_entropy()).sum(),
            Self::Sturmian(_) => 0.0,
        }
    }

    /// Sample the marginal on `len` consecutive cells starting at `offset`.
    pub fn sample_window(&self, offset: i64, len: usize, rng: &mut StreamRng) -> Result<Window> {
        if len == 0 {
            return Err(Error::InvalidArgument("sample length must be positive".into()));
        }
        Window::new(offset, self.sample_word(len, rng))
    }

    pub fn sample_word(&self, len: usize, rng: &mut StreamRng) -> Vec<Symbol> {
        match self {
            Self::Uniform { k } => (0..len).map(|_| rng.gen_range(0..*k) as Symbol).collect(),
            Self::Bernoulli { probs } => {
                let d = WeightedIndex::new(probs).expect("validated distribution");
                (0..len).map(|_| d.sample(rng) as Symbol).collect()
            }
            Self::Markov {
                stationary,
                transition,
            } => {
                let start = WeightedIndex::new(stationary).expect("validated distribution");
                let rows = row_samplers(transition);
                let mut out = Vec::with_capacity(len);
                let mut cur = start.sample(rng);
                out.push(cur as Symbol);
                for _ in 1..len {
                    cur = rows[cur].sample(rng);
                    out.push(cur as Symbol);
                }
                out
            }
            Self::Product { components } => {
                let parts: Vec<Vec<Symbol>> =
                    components.iter().map(|c| c.sample_word(len, rng)).collect();
                join_components(&self.alphabet(), &parts, len)
            }
            Self::Sturmian(rot) => {
                let cell = rng.gen_range(0..rot.q());
                (0..len).map(|j| rot.code(cell, j as i64)).collect()
            }
        }
    }

    /// Extend `fixed` to the coordinate range `[lo, hi]` with the model's
    /// conditional law given the fixed cells.
    pub fn conditional_extension(
        &self,
        fixed: &Window,
        lo: i64,
        hi: i64,
        rng: &mut StreamRng,
    ) -> Result<Window> {
        if lo > fixed.lo() || hi < fixed.hi() {
            return Err(Error::InvalidArgument(format!(
                "target [{lo}, {hi}] does not contain fixed range [{}, {}]",
                fixed.lo(),
                fixed.hi()
            )));
        }
        if self.cylinder_log_measure(fixed).is_zero() {
            return Err(Error::MeasureZero(self.label()));
        }
        let left = (fixed.lo() - lo) as usize;
        let right = (hi - fixed.hi()) as usize;
        let word = self.extend_word(fixed.symbols(), left, right, rng);
        Window::new(lo, word)
    }

    /// `fixed` must have positive measure.
    fn extend_word(
        &self,
        fixed: &[Symbol],
        left: usize,
        right: usize,
        rng: &mut StreamRng,
    ) -> Vec<Symbol> {
        match self {
            Self::Uniform { .. } | Self::Bernoulli { .. } => {
                let mut out = self.sample_word(left.max(1), rng);
                out.truncate(left);
                out.extend_from_slice(fixed);
                if right > 0 {
                    out.extend(self.sample_word(right, rng));
                }
                out
            }
            Self::Markov {
                stationary,
                transition,
            } => {
                let k = stationary.len();
                let forward = row_samplers(transition);
                let reversed: Vec<Vec<f64>> = (0..k)
                    .map(|a| {
                        (0..k)
                            .map(|b| {
                                if stationary[a] > 0.0 {
                                    stationary[b] * transition[b][a] / stationary[a]
                                } else {
                                    1.0 / k as f64
                                }
                            })
                            .collect()
                    })
                    .collect();
                let backward = row_samplers(&reversed);
                let mut before = Vec::with_capacity(left);
                let mut cur = fixed[0] as usize;
                for _ in 0..left {
                    cur = backward[cur].sample(rng);
                    before.push(cur as Symbol);
                }
                before.reverse();
                before.extend_from_slice(fixed);
                let mut cur = *fixed.last().expect("non-empty") as usize;
                for _ in 0..right {
                    cur = forward[cur].sample(rng);
                    before.push(cur as Symbol);
                }
                before
            }
            Self::Product { components } => {
                let alphabet = self.alphabet();
                let parts: Vec<Vec<Symbol>> = components
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c.extend_word(&alphabet.project(fixed, i), left, right, rng))
                    .collect();
                join_components(&alphabet, &parts, left + fixed.len() + right)
            }
            Self::Sturmian(rot) => {
                let cells = rot.word_cells(fixed);
                let cell = cells
                    .nth_cell(rng.gen_range(0..cells.cells()))
                    .expect("positive measure");
                let start = -(left as i64);
                (0..(left + fixed.len() + right) as i64)
                    .map(|j| rot.code(cell, start + j))
                    .collect()
            }
        }
    }

    /// Push-forward test: evolve sampled windows one step and compare the
    /// frequencies of central words with the model's cylinder measures.
    pub fn invariance_check(
        &self,
        rule: &LocalRule,
        word_len: usize,
        samples: usize,
        tol: f64,
        seed: u64,
    ) -> Result<InvarianceReport> {
        if word_len == 0 || samples == 0 {
            return Err(Error::InvalidArgument("word_len and samples must be positive".into()));
        }
        if rule.k() != self.k() {
            return Err(Error::InvalidArgument(format!(
                "rule alphabet {} differs from measure alphabet {}",
                rule.k(),
                self.k()
            )));
        }
        let k = self.k() as u64;
        let cells = k
            .checked_pow(word_len as u32)
            .filter(|&c| c <= 1 << 16)
            .ok_or(Error::BudgetExceeded {
                what: "invariance check words",
                needed: (k as u128).saturating_pow(word_len as u32),
                budget: 1 << 16,
            })? as usize;
        let r = rule.radius();
        let tallies = (0..samples as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, i);
                let w = Window::new(0, self.sample_word(word_len + 2 * r, &mut rng))
                    .expect("non-empty");
                let out = rule.step(&w).expect("window long enough");
                out.symbols()
                    .iter()
                    .fold(0usize, |acc, &s| acc * k as usize + s as usize)
            })
            .fold(
                || vec![0u64; cells],
                |mut acc, idx| {
                    acc[idx] += 1;
                    acc
                },
            )
            .reduce(
                || vec![0u64; cells],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    a
                },
            );
        let n = samples as f64;
        let mut max_deviation: f64 = 0.0;
        let mut worst_excess = f64::NEG_INFINITY;
        let mut allowed_at_max = tol;
        for (idx, word) in all_words(self.k(), word_len).enumerate() {
            let p = self.word_log_measure(&word).prob();
            let f = tallies[idx] as f64 / n;
            let dev = (f - p).abs();
            let allowed = tol + 4.0 * (p * (1.0 - p) / n).sqrt();
            if dev - allowed > worst_excess {
                worst_excess = dev - allowed;
            }
            if dev > max_deviation {
                max_deviation = dev;
                allowed_at_max = allowed;
            }
        }
        Ok(InvarianceReport {
            word_len,
            samples,
            tol,
            max_deviation,
            allowed: allowed_at_max,
            pass: worst_excess <= 0.0,
        })
    }

    /// Fresh state for [`MeasureModel::tracker_push`].
    pub fn tracker_start(&self) -> Tracker {
        match self {
            Self::Uniform { .. } | Self::Bernoulli { .. } => Tracker::Memoryless,
            Self::Markov { .. } => Tracker::Last(None),
            Self::Product { components } => {
                Tracker::Product(components.iter().map(|c| c.tracker_start()).collect())
            }
            Self::Sturmian(rot) => Tracker::Cells(ArcSet::full(rot.q())),
        }
    }

    /// Append symbol `s` at relative position `j` (positions pushed in order
    /// `0, 1, ...`). Returns the new state and a multiplicative weight, or
    /// `None` when the word reaches measure zero.
    pub fn tracker_push(&self, t: &Tracker, j: usize, s: Symbol) -> Option<(Tracker, f64)> {
        match (self, t) {
            (Self::Uniform { k }, Tracker::Memoryless) => {
                Some((Tracker::Memoryless, 1.0 / *k as f64))
            }
            (Self::Bernoulli { probs }, Tracker::Memoryless) => {
                let p = probs[s as usize];
                (p > 0.0).then_some((Tracker::Memoryless, p))
            }
            (
                Self::Markov {
                    stationary,
                    transition,
                },
                Tracker::Last(last),
            ) => {
                let p = match last {
                    None => stationary[s as usize],
                    Some(a) => transition[*a as usize][s as usize],
                };
                (p > 0.0).then_some((Tracker::Last(Some(s)), p))
            }
            (Self::Product { components }, Tracker::Product(parts)) => {
                let digits = self.alphabet().split(s);
                let mut weight = 1.0;
                let mut next = Vec::with_capacity(parts.len());
                for ((c, part), d) in components.iter().zip(parts).zip(digits) {
                    let (nt, w) = c.tracker_push(part, j, d)?;
                    weight *= w;
                    next.push(nt);
                }
                Some((Tracker::Product(next), weight))
            }
            (Self::Sturmian(rot), Tracker::Cells(set)) => {
                let next = set.intersect(&rot.symbol_cells(j as i64, s));
                (!next.is_empty()).then_some((Tracker::Cells(next), 1.0))
            }
            _ => panic!("tracker does not belong to this measure"),
        }
    }

    /// Remaining weight factor once the word is complete.
    pub fn tracker_finish(&self, t: &Tracker) -> f64 {
        match (self, t) {
            (Self::Product { components }, Tracker::Product(parts)) => components
                .iter()
                .zip(parts)
                .map(|(c, p)| c.tracker_finish(p))
                .product(),
            (Self::Sturmian(rot), Tracker::Cells(set)) => set.cells() as f64 / rot.q() as f64,
            _ => 1.0,
        }
    }

    /// Fresh measure signature: a summary of a word from which its
    /// cylinder measure can be recovered. Words with equal signatures and
    /// equal length have equal measure.
    pub fn signature_start(&self) -> Signature {
        match self {
            Self::Uniform { .. } => Signature::Unit,
            Self::Bernoulli { probs } => Signature::Counts(vec![0; probs.len()]),
            Self::Markov { stationary, .. } => Signature::Transitions {
                first: None,
                last: None,
                counts: vec![0; stationary.len() * stationary.len()],
            },
            Self::Product { components } => {
                Signature::Product(components.iter().map(|c| c.signature_start()).collect())
            }
            Self::Sturmian(rot) => Signature::Cells(ArcSet::full(rot.q())),
        }
    }

    /// Append symbol `s` at relative position `j`.
    pub fn signature_push(&self, sig: &Signature, j: usize, s: Symbol) -> Signature {
        match (self, sig) {
            (_, Signature::Zero) => Signature::Zero,
            (Self::Uniform { .. }, Signature::Unit) => Signature::Unit,
            (Self::Bernoulli { probs }, Signature::Counts(c)) => {
                if probs[s as usize] <= 0.0 {
                    return Signature::Zero;
                }
                let mut c = c.clone();
                c[s as usize] += 1;
                Signature::Counts(c)
            }
            (
                Self::Markov {
                    stationary,
                    transition,
                },
                Signature::Transitions {
                    first,
                    last,
                    counts,
                },
            ) => {
                let k = stationary.len();
                match last {
                    None => {
                        if stationary[s as usize] <= 0.0 {
                            return Signature::Zero;
                        }
                        Signature::Transitions {
                            first: Some(s),
                            last: Some(s),
                            counts: counts.clone(),
                        }
                    }
                    Some(a) => {
                        if transition[*a as usize][s as usize] <= 0.0 {
                            return Signature::Zero;
                        }
                        let mut counts = counts.clone();
                        counts[*a as usize * k + s as usize] += 1;
                        Signature::Transitions {
                            first: *first,
                            last: Some(s),
                            counts,
                        }
                    }
                }
            }
            (Self::Product { components }, Signature::Product(parts)) => {
                let digits = self.alphabet().split(s);
                let mut next = Vec::with_capacity(parts.len());
                for ((c, part), d) in components.iter().zip(parts).zip(digits) {
                    let nt = c.signature_push(part, j, d);
                    if nt == Signature::Zero {
                        return Signature::Zero;
                    }
                    next.push(nt);
                }
                Signature::Product(next)
            }
            (Self::Sturmian(rot), Signature::Cells(set)) => {
                let next = set.intersect(&rot.symbol_cells(j as i64, s));
                if next.is_empty() {
                    Signature::Zero
                } else {
                    Signature::Cells(next)
                }
            }
            _ => panic!("signature does not belong to this measure"),
        }
    }

    /// Log-measure of any word of length `len` with signature `sig`.
    pub fn signature_log_measure(&self, sig: &Signature, len: usize) -> LogMeasure {
        let v = match (self, sig) {
            (_, Signature::Zero) => f64::NEG_INFINITY,
            (Self::Uniform { k }, Signature::Unit) => -(len as f64) * (*k as f64).ln(),
            (Self::Bernoulli { probs }, Signature::Counts(c)) => c
                .iter()
                .zip(probs)
                .filter(|(&n, _)| n > 0)
                .map(|(&n, p)| n as f64 * p.ln())
                .sum(),
            (
                Self::Markov {
                    stationary,
                    transition,
                },
                Signature::Transitions { first, counts, .. },
            ) => match first {
                None => 0.0,
                Some(f) => {
                    let k = stationary.len();
                    stationary[*f as usize].ln()
                        + counts
                            .iter()
                            .enumerate()
                            .filter(|(_, &n)| n > 0)
                            .map(|(i, &n)| n as f64 * transition[i / k][i % k].ln())
                            .sum::<f64>()
                }
            },
            (Self::Product { components }, Signature::Product(parts)) => components
                .iter()
                .zip(parts)
                .map(|(c, p)| c.signature_log_measure(p, len).0)
                .sum(),
            (Self::Sturmian(rot), Signature::Cells(set)) => {
                (set.cells() as f64 / rot.q() as f64).ln()
            }
            _ => panic!("signature does not belong to this measure"),
        };
        if v == f64::NEG_INFINITY || v.is_nan() {
            LogMeasure::ZERO
        } else {
            LogMeasure(v.min(0.0))
        }
    }
}

fn row_samplers(rows: &[Vec<f64>]) -> Vec<WeightedIndex<f64>> {
    rows.iter()
        .map(|r| WeightedIndex::new(r).expect("validated distribution"))
        .collect()
}

fn join_components(alphabet: &Alphabet, parts: &[Vec<Symbol>], len: usize) -> Vec<Symbol> {
    let mut digits = vec![0; parts.len()];
    (0..len)
        .map(|i| {
            for (d, part) in digits.iter_mut().zip(parts) {
                *d = part[i];
            }
            alphabet.join(&digits)
        })
        .collect()
}

/// Incremental state for accumulating cylinder weights left to right.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Tracker {
    Memoryless,
    Last(Option<Symbol>),
    Cells(ArcSet),
    Product(Vec<Tracker>),
}

/// Sufficient statistic of a word for its cylinder measure.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Signature {
    Zero,
    Unit,
    Counts(Vec<u32>),
    Transitions {
        first: Option<Symbol>,
        last: Option<Symbol>,
        counts: Vec<u32>,
    },
    Cells(ArcSet),
    Product(Vec<Signature>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub word_len: usize,
    pub samples: usize,
    pub tol: f64,
    pub max_deviation: f64,
    /// Tolerance plus four standard errors at the word of largest deviation.
    pub allowed: f64,
    pub pass: bool,
}

/// A probability written as a number or as exact text such as `1/3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Prob {
    Number(f64),
    Text(String),
}

impl Prob {
    pub fn value(&self) -> Result<f64> {
        match self {
            Prob::Number(v) => Ok(*v),
            Prob::Text(t) => parse_probability(t),
        }
    }
}

/// Parse `0.25`, `1/3` or `2`; fractions are reduced exactly before conversion.
pub fn parse_probability(text: &str) -> Result<f64> {
    let t = text.trim();
    if t.contains('/') {
        let r: Ratio<i64> = t
            .parse()
            .map_err(|e| Error::Parse(format!("bad fraction `{t}`: {e}")))?;
        if *r.denom() == 0 {
            return Err(Error::Parse(format!("zero denominator in `{t}`")));
        }
        Ok(*r.numer() as f64 / *r.denom() as f64)
    } else {
        t.parse::<f64>()
            .map_err(|e| Error::Parse(format!("bad number `{t}`: {e}")))
    }
}

/// Structured measure configuration: `{type = "...", params = {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "lowercase")]
pub enum MeasureSpec {
    Uniform {
        k: u32,
    },
    Bernoulli {
        probs: Vec<Prob>,
    },
    Markov {
        transition: Vec<Vec<Prob>>,
    },
    Product {
        components: Vec<MeasureSpec>,
    },
    Sturmian {
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default)]
        p: Option<u64>,
        #[serde(default)]
        q: Option<u64>,
        #[serde(default)]
        max_den: Option<u64>,
    },
}

impl MeasureSpec {
    pub fn build(&self) -> Result<MeasureModel> {
        match self {
            Self::Uniform { k } => MeasureModel::uniform(*k),
            Self::Bernoulli { probs } => {
                MeasureModel::bernoulli(probs.iter().map(Prob::value).collect::<Result<_>>()?)
            }
            Self::Markov { transition } => MeasureModel::markov(
                transition
                    .iter()
                    .map(|row| row.iter().map(Prob::value).collect::<Result<Vec<_>>>())
                    .collect::<Result<_>>()?,
            ),
            Self::Product { components } => {
                MeasureModel::product(components.iter().map(|c| c.build()).collect::<Result<_>>()?)
            }
            Self::Sturmian {
                alpha,
                p,
                q,
                max_den,
            } => {
                let rot = match (alpha, p, q) {
                    (_, Some(p), Some(q)) => Rotation::new(*p, *q)?,
                    (Some(a), None, None) => Rotation::convergent(*a, max_den.unwrap_or(2_000_000))?,
                    (None, None, None) => Rotation::golden(),
                    _ => {
                        return Err(Error::InvalidMeasure(
                            "sturmian needs either alpha or both p and q".into(),
                        ))
                    }
                };
                Ok(MeasureModel::sturmian(rot))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule::{elementary_rule, identity_rule};

    fn third() -> MeasureModel {
        MeasureModel::bernoulli(vec![1.0 / 3.0, 2.0 / 3.0]).unwrap()
    }

    fn markov_fixture() -> MeasureModel {
        MeasureModel::markov(vec![vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap()
    }

    fn w(s: &[Symbol]) -> Window {
        Window::new(-3, s.to_vec()).unwrap()
    }

    #[test]
    fn cylinder_examples() {
        let u = MeasureModel::uniform(2).unwrap();
        assert!((u.cylinder_log_measure(&w(&[0, 1])).0 - 0.25f64.ln()).abs() < 1e-15);
        assert!((third().cylinder_log_measure(&w(&[0])).0 - (1.0f64 / 3.0).ln()).abs() < 1e-15);
        let s = MeasureModel::sturmian(Rotation::golden());
        assert!(s.cylinder_log_measure(&w(&[1, 1])).is_zero());
        assert!(!s.cylinder_log_measure(&w(&[1, 0, 1])).is_zero());
    }

    #[test]
    fn entropy_closed_forms() {
        let l2 = 2f64.ln();
        assert!((MeasureModel::uniform(2).unwrap().shift_entropy() - l2).abs() < 1e-15);
        let b = (1.0 / 3.0) * 3f64.ln() + (2.0 / 3.0) * 1.5f64.ln();
        assert!((third().shift_entropy() - b).abs() < 1e-15);
        assert_eq!(MeasureModel::sturmian(Rotation::golden()).shift_entropy(), 0.0);
        let uu = MeasureModel::product(vec![
            MeasureModel::uniform(2).unwrap(),
            MeasureModel::uniform(2).unwrap(),
        ])
        .unwrap();
        assert!((uu.shift_entropy() - 2.0 * l2).abs() < 1e-15);
        let m = markov_fixture();
        let h = -(0.9f64 * 0.9f64.ln() + 0.1 * 0.1f64.ln());
        assert!((m.shift_entropy() - h).abs() < 1e-12);
    }

    #[test]
    fn markov_stationary_solved() {
        let m = MeasureModel::markov(vec![vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
        if let MeasureModel::Markov { stationary, .. } = m {
            assert!((stationary[0] - 1.0 / 3.0).abs() < 1e-12);
        } else {
            unreachable!()
        }
        assert!(MeasureModel::markov_with_stationary(vec![0.5, 0.5], vec![vec![0.5, 0.5], vec![0.25, 0.75]]).is_err());
        assert!(MeasureModel::bernoulli(vec![0.5, 0.4]).is_err());
    }

    #[test]
    fn sampling_frequencies() {
        let mut rng = substream(11, 0);
        let u = MeasureModel::uniform(2).unwrap();
        let n = 100_000;
        let ones = (0..n).filter(|_| u.sample_word(1, &mut rng)[0] == 1).count() as f64;
        assert!((ones / n as f64 - 0.5).abs() < 3.0 * (0.25f64 / n as f64).sqrt());
        let zeros = (0..n).filter(|_| third().sample_word(1, &mut rng)[0] == 0).count() as f64;
        let se = (2.0f64 / 9.0 / n as f64).sqrt();
        assert!((zeros / n as f64 - 1.0 / 3.0).abs() < 3.0 * se);
        let rot = Rotation::golden();
        let s = MeasureModel::sturmian(rot.clone());
        let word = s.sample_word(10_000, &mut rng);
        let freq = word.iter().filter(|&&b| b == 1).count() as f64 / 1e4;
        assert!((freq - rot.alpha()).abs() < 0.02);
    }

    #[test]
    fn conditional_extension_examples() {
        let mut rng = substream(5, 1);
        let u = MeasureModel::uniform(2).unwrap();
        let fixed = Window::new(0, vec![1]).unwrap();
        let mut counts = [0usize; 4];
        let draws = 10_000;
        for _ in 0..draws {
            let e = u.conditional_extension(&fixed, -1, 1, &mut rng).unwrap();
            assert_eq!(e.get(0), Some(1));
            counts[(e.symbols()[0] * 2 + e.symbols()[2]) as usize] += 1;
        }
        let se = (0.25f64 * 0.75 / draws as f64).sqrt();
        for c in counts {
            assert!((c as f64 / draws as f64 - 0.25).abs() < 3.0 * se);
        }

        let m = markov_fixture();
        let fixed = Window::new(0, vec![0]).unwrap();
        let stay = (0..draws)
            .filter(|_| m.conditional_extension(&fixed, 0, 1, &mut rng).unwrap().symbols() == [0, 0])
            .count() as f64;
        let se = (0.09f64 / draws as f64).sqrt();
        assert!((stay / draws as f64 - 0.9).abs() < 4.0 * se);

        let s = MeasureModel::sturmian(Rotation::golden());
        let bad = Window::new(0, vec![1, 1]).unwrap();
        assert!(matches!(
            s.conditional_extension(&bad, -2, 3, &mut rng),
            Err(Error::MeasureZero(_))
        ));
        let good = Window::new(0, vec![1, 0]).unwrap();
        for _ in 0..100 {
            let e = s.conditional_extension(&good, -5, 8, &mut rng).unwrap();
            assert_eq!(e.restrict(0, 1).unwrap().symbols(), &[1, 0]);
            assert!(!s.cylinder_log_measure(&e).is_zero());
        }
    }

    #[test]
    fn invariance_examples() {
        let u = MeasureModel::uniform(2).unwrap();
        let r90 = elementary_rule(90).unwrap();
        let r170 = elementary_rule(170).unwrap();
        assert!(u.invariance_check(&r90, 3, 20_000, 0.01, 1).unwrap().pass);
        assert!(u.invariance_check(&r170, 3, 20_000, 0.01, 2).unwrap().pass);
        let rep = third().invariance_check(&r90, 1, 20_000, 0.01, 3).unwrap();
        assert!(!rep.pass);
        // XOR of two B(1/3,2/3) cells: P(1) = 2 * 1/3 * 2/3 = 4/9
        assert!((rep.max_deviation - (2.0 / 3.0 - 4.0 / 9.0)).abs() < 0.02);
        let id = identity_rule(2).unwrap();
        assert!(third().invariance_check(&id, 3, 20_000, 0.01, 4).unwrap().pass);
        assert!(markov_fixture().invariance_check(&id, 3, 20_000, 0.01, 5).unwrap().pass);
    }

    #[test]
    fn trackers_and_signatures_match_direct_measure() {
        let models = vec![
            MeasureModel::uniform(3).unwrap(),
            third(),
            markov_fixture(),
            MeasureModel::sturmian(Rotation::new(5, 13).unwrap()),
            MeasureModel::product(vec![MeasureModel::uniform(2).unwrap(), third()]).unwrap(),
            MeasureModel::product(vec![
                MeasureModel::uniform(2).unwrap(),
                MeasureModel::sturmian(Rotation::golden()),
            ])
            .unwrap(),
        ];
        for m in &models {
            for word in all_words(m.k(), 5) {
                let direct = m.word_log_measure(&word);
                let mut t = Some((m.tracker_start(), 1.0));
                let mut sig = m.signature_start();
                for (j, &s) in word.iter().enumerate() {
                    t = t.and_then(|(st, w)| m.tracker_push(&st, j, s).map(|(n, f)| (n, w * f)));
                    sig = m.signature_push(&sig, j, s);
                }
                let via_tracker = t.map(|(st, w)| w * m.tracker_finish(&st)).unwrap_or(0.0);
                assert!((via_tracker - direct.prob()).abs() < 1e-12, "{} {word:?}", m.label());
                let via_sig = m.signature_log_measure(&sig, word.len());
                assert_eq!(via_sig.is_zero(), direct.is_zero());
                if !direct.is_zero() {
                    assert!((via_sig.0 - direct.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn spec_parsing() {
        assert!((parse_probability("1/3").unwrap() - 1.0 / 3.0).abs() < 1e-16);
        assert_eq!(parse_probability("0.25").unwrap(), 0.25);
        assert!(parse_probability("1/0").is_err());
        let spec: MeasureSpec = serde_json::from_str(
            r#"{"type":"product","params":{"components":[{"type":"uniform","params":{"k":2}},{"type":"bernoulli","params":{"probs":["1/3","2/3"]}}]}}"#,
        )
        .unwrap();
        let m = spec.build().unwrap();
        assert_eq!(m.k(), 4);
        let spec: MeasureSpec =
            serde_json::from_str(r#"{"type":"sturmian","params":{}}"#).unwrap();
        assert_eq!(spec.build().unwrap(), MeasureModel::sturmian(Rotation::golden()));
    }
}
