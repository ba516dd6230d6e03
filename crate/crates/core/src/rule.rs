//! Local rules and light-cone-exact evolution of finite windows.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbols::{Alphabet, Symbol, Window};

/// Tables larger than this are refused.
pub const MAX_TABLE_LEN: u64 = 1 << 24;

/// Block map `f: A^(2r+1) -> A` with its radius.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalRule {
    alphabet: Alphabet,
    radius: usize,
    table: Vec<Symbol>,
    label: String,
    /// Direct factors when built by [`product_rule`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    factors: Vec<LocalRule>,
}

fn table_len(k: u32, radius: usize) -> Result<usize> {
    let len = (k as u64)
        .checked_pow(2 * radius as u32 + 1)
        .filter(|&l| l <= MAX_TABLE_LEN)
        .ok_or_else(|| {
            Error::InvalidRule(format!("table for k={k}, r={radius} exceeds {MAX_TABLE_LEN} entries"))
        })?;
    Ok(len as usize)
}

impl LocalRule {
    /// Build from a table listed in lexicographic neighborhood order.
    pub fn from_table(
        alphabet: Alphabet,
        radius: usize,
        table: Vec<Symbol>,
        label: impl Into<String>,
    ) -> Result<Self> {
        let expected = table_len(alphabet.size(), radius)?;
        if table.len() != expected {
            return Err(Error::InvalidRule(format!(
                "table has {} entries, expected {expected}",
                table.len()
            )));
        }
        if let Some(s) = table.iter().find(|&&s| !alphabet.contains(s)) {
            return Err(Error::InvalidRule(format!(
                "output symbol {s} outside alphabet of size {}",
                alphabet.size()
            )));
        }
        Ok(Self {
            alphabet,
            radius,
            table,
            label: label.into(),
            factors: Vec::new(),
        })
    }

    pub fn from_fn(
        alphabet: Alphabet,
        radius: usize,
        label: impl Into<String>,
        mut f: impl FnMut(&[Symbol]) -> Symbol,
    ) -> Result<Self> {
        let len = table_len(alphabet.size(), radius)?;
        let width = 2 * radius + 1;
        let k = alphabet.size();
        let mut neigh = vec![0; width];
        let table = (0..len)
            .map(|code| {
                decode_into(code, k, &mut neigh);
                f(&neigh)
            })
            .collect();
        Self::from_table(alphabet, radius, table, label)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn k(&self) -> u32 {
        self.alphabet.size()
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn table(&self) -> &[Symbol] {
        &self.table
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn factors(&self) -> &[LocalRule] {
        &self.factors
    }

    /// Leaf rules of a (possibly nested) product, most significant first.
    pub fn leaves(&self) -> Vec<&LocalRule> {
        if self.factors.is_empty() {
            vec![self]
        } else {
            self.factors.iter().flat_map(|f| f.leaves()).collect()
        }
    }

    pub fn neighborhood_index(&self, neigh: &[Symbol]) -> usize {
        debug_assert_eq!(neigh.len(), 2 * self.radius + 1);
        let k = self.k() as usize;
        neigh.iter().fold(0usize, |acc, &s| acc * k + s as usize)
    }

    #[inline]
    pub fn apply(&self, neigh: &[Symbol]) -> Symbol {
        self.table[self.neighborhood_index(neigh)]
    }

    /// One step of the automaton on the light cone of `w`: the result starts
    /// at `offset + r` and is `2r` cells shorter.
    pub fn step(&self, w: &Window) -> Result<Window> {
        let width = 2 * self.radius + 1;
        if w.len() < width {
            return Err(Error::WindowTooShort {
                needed: 2 * self.radius,
                got: w.len(),
            });
        }
        let out = w
            .symbols()
            .windows(width)
            .map(|neigh| self.apply(neigh))
            .collect();
        Window::new(w.offset() + self.radius as i64, out)
    }

    /// `steps` applications of [`LocalRule::step`].
    pub fn evolve(&self, w: &Window, steps: usize) -> Result<Window> {
        let mut cur = w.clone();
        for _ in 0..steps {
            cur = self.step(&cur)?;
        }
        Ok(cur)
    }

    /// Dependency cone `[-p - rn, p + rn]` of the central `(2p+1)`-block over `n` steps.
    pub fn cone(&self, p: usize, n: usize) -> (i64, i64) {
        let half = (p + self.radius * n) as i64;
        (-half, half)
    }

    /// Rows `(F^i x)(-p, p)` for `i = 0..=n`.
    pub fn trace_of(&self, w: &Window, p: usize, n: usize) -> Result<Trace> {
        let (lo, hi) = self.cone(p, n);
        let mut cur = w.restrict(lo, hi)?;
        let p_i = p as i64;
        let mut rows = Vec::with_capacity(n + 1);
        rows.push(cur.restrict(-p_i, p_i)?.into_symbols());
        for _ in 0..n {
            cur = self.step(&cur)?;
            rows.push(cur.restrict(-p_i, p_i)?.into_symbols());
        }
        Ok(Trace { p, rows })
    }

    fn permutative_at(&self, position: usize) -> bool {
        let k = self.k() as usize;
        let width = 2 * self.radius + 1;
        let others = k.pow(width as u32 - 1);
        let mut neigh = vec![0; width];
        let mut rest = vec![0; width - 1];
        (0..others).all(|code| {
            decode_into(code, self.k(), &mut rest);
            let mut seen = vec![false; k];
            (0..k).all(|s| {
                let mut j = 0;
                for (i, slot) in neigh.iter_mut().enumerate() {
                    if i == position {
                        *slot = s as Symbol;
                    } else {
                        *slot = rest[j];
                        j += 1;
                    }
                }
                let out = self.apply(&neigh) as usize;
                !std::mem::replace(&mut seen[out], true)
            })
        })
    }

    pub fn is_left_permutative(&self) -> bool {
        self.permutative_at(0)
    }

    pub fn is_right_permutative(&self) -> bool {
        self.permutative_at(2 * self.radius)
    }

    /// Permutative in both extreme coordinates (requires `r >= 1`).
    pub fn is_bipermutative(&self) -> bool {
        self.radius >= 1 && self.is_left_permutative() && self.is_right_permutative()
    }

    /// Plain-text rule file: `k=<int> r=<int>`, then the table, then an
    /// optional `label=<text>` line.
    pub fn to_text(&self) -> String {
        let table: Vec<String> = self.table.iter().map(|s| s.to_string()).collect();
        let mut out = format!("k={} r={}\n{}\n", self.k(), self.radius, table.join(" "));
        if !self.label.is_empty() {
            out.push_str(&format!("label={}\n", self.label));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty rule file".into()))?;
        let mut k = None;
        let mut r = None;
        for field in header.split_whitespace() {
            match field.split_once('=') {
                Some(("k", v)) => k = v.parse::<u32>().ok(),
                Some(("r", v)) => r = v.parse::<usize>().ok(),
                _ => return Err(Error::Parse(format!("unexpected header field `{field}`"))),
            }
        }
        let (k, r) = match (k, r) {
            (Some(k), Some(r)) => (k, r),
            _ => return Err(Error::Parse(format!("header `{header}` needs k=<int> r=<int>"))),
        };
        let mut table = Vec::new();
        let mut label = String::new();
        for line in lines {
            if let Some(l) = line.strip_prefix("label=") {
                label = l.to_string();
                continue;
            }
            for tok in line.split_whitespace() {
                let s: u32 = tok
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad table entry `{tok}`: {e}")))?;
                if s >= k {
                    return Err(Error::InvalidRule(format!("output symbol {s} outside alphabet of size {k}")));
                }
                table.push(s as Symbol);
            }
        }
        LocalRule::from_table(Alphabet::new(k)?, r, table, label)
    }
}

fn decode_into(mut code: usize, k: u32, out: &mut [Symbol]) {
    for slot in out.iter_mut().rev() {
        *slot = (code % k as usize) as Symbol;
        code /= k as usize;
    }
}

/// Itinerary of the central `(2p+1)`-block: row `i` is `(F^i x)(-p, p)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trace {
    p: usize,
    rows: Vec<Vec<Symbol>>,
}

impl Trace {
    pub fn new(p: usize, rows: Vec<Vec<Symbol>>) -> Result<Self> {
        if rows.is_empty() || rows.iter().any(|r| r.len() != 2 * p + 1) {
            return Err(Error::InvalidArgument(format!(
                "trace rows must be non-empty and of length {}",
                2 * p + 1
            )));
        }
        Ok(Self { p, rows })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of steps `n` (row count minus one).
    pub fn n(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn rows(&self) -> &[Vec<Symbol>] {
        &self.rows
    }

    /// Expected symbol of row `i` at coordinate `c` (must lie in `[-p, p]`).
    #[inline]
    pub fn at(&self, i: usize, c: i64) -> Symbol {
        self.rows[i][(c + self.p as i64) as usize]
    }

    pub fn project(&self, alphabet: &Alphabet, component: usize) -> Trace {
        Trace {
            p: self.p,
            rows: self
                .rows
                .iter()
                .map(|r| alphabet.project(r, component))
                .collect(),
        }
    }
}

/// Rule from an explicit neighborhood map; the map must be total.
pub fn make_rule(k: u32, r: usize, mapping: &BTreeMap<Vec<Symbol>, Symbol>) -> Result<LocalRule> {
    let alphabet = Alphabet::new(k)?;
    let len = table_len(k, r)?;
    if mapping.len() != len {
        return Err(Error::InvalidRule(format!(
            "mapping has {} neighborhoods, expected {len}",
            mapping.len()
        )));
    }
    let mut table = vec![0; len];
    let mut neigh = vec![0; 2 * r + 1];
    for (code, slot) in table.iter_mut().enumerate() {
        decode_into(code, k, &mut neigh);
        *slot = *mapping
            .get(&neigh)
            .ok_or_else(|| Error::InvalidRule(format!("neighborhood {neigh:?} missing")))?;
    }
    LocalRule::from_table(alphabet, r, table, "")
}

/// Wolfram elementary rule: output for `(a, b, c)` is bit `4a + 2b + c` of `code`.
pub fn elementary_rule(code: u32) -> Result<LocalRule> {
    if code > 255 {
        return Err(Error::InvalidRule(format!("elementary rule code {code} > 255")));
    }
    let table = (0..8).map(|i| ((code >> i) & 1) as Symbol).collect();
    LocalRule::from_table(Alphabet::new(2)?, 1, table, format!("rule{code}"))
}

/// `sigma^d`: `F(x)_i = x_{i+d}`, as a radius-`|d|` rule.
pub fn shift_rule(k: u32, d: i64) -> Result<LocalRule> {
    let r = d.unsigned_abs() as usize;
    let center = r as i64;
    let label = match d {
        0 => "identity".to_string(),
        1 => "shift".to_string(),
        _ => format!("shift{d}"),
    };
    LocalRule::from_fn(Alphabet::new(k)?, r, label, |neigh| neigh[(center + d) as usize])
}

pub fn identity_rule(k: u32) -> Result<LocalRule> {
    shift_rule(k, 0)
}

/// Product automaton on the product alphabet; components evolve independently
/// and the narrower one ignores the extra cells of the common radius.
pub fn product_rule(a: &LocalRule, b: &LocalRule) -> Result<LocalRule> {
    let alphabet = Alphabet::product(a.alphabet(), b.alphabet())?;
    let radius = a.radius().max(b.radius());
    let kb = b.k();
    let (ra, rb) = (a.radius(), b.radius());
    let mut na = vec![0; 2 * ra + 1];
    let mut nb = vec![0; 2 * rb + 1];
    let label = format!("{}_x_{}", a.label(), b.label());
    let mut rule = LocalRule::from_fn(alphabet, radius, label, |neigh| {
        for (j, slot) in na.iter_mut().enumerate() {
            *slot = (neigh[radius - ra + j] as u32 / kb) as Symbol;
        }
        for (j, slot) in nb.iter_mut().enumerate() {
            *slot = (neigh[radius - rb + j] as u32 % kb) as Symbol;
        }
        (a.apply(&na) as u32 * kb + b.apply(&nb) as u32) as Symbol
    })?;
    rule.factors = vec![a.clone(), b.clone()];
    Ok(rule)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(offset: i64, s: &str) -> Window {
        Window::new(offset, s.bytes().map(|b| b - b'0').collect()).unwrap()
    }

    #[test]
    fn make_rule_identity_and_shift() {
        let mut id = BTreeMap::new();
        let mut sh = BTreeMap::new();
        for a in 0..2u8 {
            for b in 0..2u8 {
                for c in 0..2u8 {
                    id.insert(vec![a, b, c], b);
                    sh.insert(vec![a, b, c], c);
                }
            }
        }
        assert_eq!(make_rule(2, 1, &id).unwrap().table(), elementary_rule(204).unwrap().table());
        assert_eq!(make_rule(2, 1, &sh).unwrap().table(), elementary_rule(170).unwrap().table());
        id.remove(&vec![1, 1, 1]);
        assert!(make_rule(2, 1, &id).is_err());
    }

    #[test]
    fn table_validation() {
        let a = Alphabet::new(2).unwrap();
        assert!(LocalRule::from_table(a.clone(), 1, vec![0; 7], "").is_err());
        assert!(LocalRule::from_table(a, 1, vec![0, 0, 0, 0, 0, 0, 0, 2], "").is_err());
        assert!(elementary_rule(256).is_err());
    }

    #[test]
    fn elementary_expansions() {
        // 204 = 11001100b, 170 = 10101010b, 90 = 01011010b
        let id = elementary_rule(204).unwrap();
        let sh = elementary_rule(170).unwrap();
        let r90 = elementary_rule(90).unwrap();
        for a in 0..2u8 {
            for b in 0..2u8 {
                for c in 0..2u8 {
                    assert_eq!(id.apply(&[a, b, c]), b);
                    assert_eq!(sh.apply(&[a, b, c]), c);
                    assert_eq!(r90.apply(&[a, b, c]), a ^ c);
                }
            }
        }
    }

    #[test]
    fn shift_rules() {
        assert_eq!(shift_rule(2, 1).unwrap().table(), elementary_rule(170).unwrap().table());
        let id0 = shift_rule(2, 0).unwrap();
        assert_eq!(id0.radius(), 0);
        assert_eq!(id0.table(), &[0, 1]);
        let s = shift_rule(3, 2).unwrap();
        assert_eq!(s.radius(), 2);
        assert_eq!(s.apply(&[0, 1, 2, 0, 1]), 1);
        assert_eq!(s.apply(&[2, 2, 2, 0, 2]), 2);
    }

    #[test]
    fn step_examples() {
        let sh = shift_rule(2, 1).unwrap();
        let out = sh.step(&w(-2, "01101")).unwrap();
        // F(x)_i = x_{i+1}: cells -1, 0, 1 read x_0, x_1, x_2
        assert_eq!(out, w(-1, "101"));
        let r90 = elementary_rule(90).unwrap();
        assert_eq!(r90.step(&w(7, "111")).unwrap(), w(8, "0"));
        let id = elementary_rule(204).unwrap();
        assert_eq!(id.step(&w(0, "10110")).unwrap(), w(1, "011"));
        assert!(matches!(r90.step(&w(0, "11")), Err(Error::WindowTooShort { .. })));
    }

    #[test]
    fn trace_examples() {
        let sh = shift_rule(2, 1).unwrap();
        let t = sh.trace_of(&w(-3, "0101010"), 1, 2).unwrap();
        assert_eq!(t.rows(), &[vec![0, 1, 0], vec![1, 0, 1], vec![0, 1, 0]]);

        let id = elementary_rule(204).unwrap();
        let t = id.trace_of(&w(-3, "0110100"), 0, 3).unwrap();
        assert_eq!(t.rows(), &[vec![0], vec![0], vec![0], vec![0]]);

        // Brute force on 00100 under rule 90: row 1 is 101 so the center
        // goes 1 -> 0 -> (1 xor 1) = 0.
        let r90 = elementary_rule(90).unwrap();
        let t = r90.trace_of(&w(-2, "00100"), 0, 2).unwrap();
        assert_eq!(t.rows(), &[vec![1], vec![0], vec![0]]);

        assert!(matches!(
            r90.trace_of(&w(-1, "010"), 0, 2),
            Err(Error::ConeNotCovered { .. })
        ));
    }

    #[test]
    fn products() {
        let s1 = shift_rule(2, 1).unwrap();
        let s2 = shift_rule(2, 2).unwrap();
        let prod2 = product_rule(&s1, &s2).unwrap();
        assert_eq!(prod2.k(), 4);
        assert_eq!(prod2.radius(), 2);
        assert_eq!(prod2.leaves().len(), 2);
        // Component 1 reads offset +1, component 2 reads offset +2.
        let neigh = [0u8, 0, 0, 2, 1];
        assert_eq!(prod2.apply(&neigh), 2 * 1 + 1);

        let id = identity_rule(2).unwrap();
        let idid = product_rule(&id, &id).unwrap();
        assert_eq!(idid.radius(), 0);
        assert_eq!(idid.table(), &[0, 1, 2, 3]);
    }

    #[test]
    fn permutivity() {
        assert!(elementary_rule(90).unwrap().is_bipermutative());
        assert!(elementary_rule(150).unwrap().is_bipermutative());
        let sh = elementary_rule(170).unwrap();
        assert!(sh.is_right_permutative());
        assert!(!sh.is_left_permutative());
        assert!(!elementary_rule(204).unwrap().is_bipermutative());
    }

    #[test]
    fn rule_file_round_trip() {
        let r = elementary_rule(90).unwrap();
        let text = r.to_text();
        assert!(text.starts_with("k=2 r=1\n0 1 0 1 1 0 1 0\n"));
        assert_eq!(LocalRule::parse(&text).unwrap(), r);
        assert!(LocalRule::parse("k=2 r=1\n0 1 0").is_err());
        assert!(LocalRule::parse("k=2\n0 1").is_err());
    }
}
