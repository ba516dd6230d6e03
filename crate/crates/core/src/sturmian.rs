//! Rational rotation codings on the circle `Z_q`.
//!
//! The rotation number is a convergent `p/q`. The phase circle is cut into `q`
//! equal cells; cell `c` codes position `j` as `1` iff `(c + j p) mod q >= q - p`,
//! which is `x_j = floor((j+1)a + b) - floor(j a + b)` for any phase `b` in the cell.
//! Cylinder sets are unions of cells, so their measures are exact rationals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbols::Symbol;

/// Disjoint, sorted, non-wrapping half-open intervals of cells in `[0, q)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArcSet {
    intervals: Vec<(u64, u64)>,
}

impl ArcSet {
    pub fn full(q: u64) -> Self {
        Self {
            intervals: vec![(0, q)],
        }
    }

    /// Arc of `len` cells starting at `start` (may wrap).
    pub fn arc(q: u64, start: u64, len: u64) -> Self {
        let start = start % q;
        let intervals = if len == 0 {
            vec![]
        } else if len >= q {
            vec![(0, q)]
        } else if start + len <= q {
            vec![(start, start + len)]
        } else {
            vec![(0, start + len - q), (start, q)]
        };
        Self { intervals }
    }

    pub fn intersect(&self, other: &ArcSet) -> ArcSet {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.intervals.len() && j < other.intervals.len() {
            let (a0, a1) = self.intervals[i];
            let (b0, b1) = other.intervals[j];
            let lo = a0.max(b0);
            let hi = a1.min(b1);
            if lo < hi {
                out.push((lo, hi));
            }
            if a1 < b1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        ArcSet { intervals: out }
    }

    pub fn cells(&self) -> u64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// The `index`-th cell of the set in increasing order.
    pub fn nth_cell(&self, mut index: u64) -> Option<u64> {
        for &(a, b) in &self.intervals {
            if index < b - a {
                return Some(a + index);
            }
            index -= b - a;
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rotation {
    p: u64,
    q: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Rotation {
    pub fn new(p: u64, q: u64) -> Result<Self> {
        if q < 2 || p == 0 || p >= q {
            return Err(Error::InvalidMeasure(format!(
                "rotation number {p}/{q} must lie strictly between 0 and 1"
            )));
        }
        if gcd(p, q) != 1 {
            return Err(Error::InvalidMeasure(format!("rotation number {p}/{q} is not in lowest terms")));
        }
        Ok(Self { p, q })
    }

    /// Last continued-fraction convergent of `alpha` whose denominator does not
    /// exceed `max_den`.
    pub fn convergent(alpha: f64, max_den: u64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidMeasure(format!("rotation number {alpha} not in (0, 1)")));
        }
        let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
        let mut x = alpha;
        loop {
            let a = x.floor();
            if a > u64::MAX as f64 / 2.0 {
                break;
            }
            let a = a as u64;
            let p2 = a.checked_mul(p1).and_then(|v| v.checked_add(p0));
            let q2 = a.checked_mul(q1).and_then(|v| v.checked_add(q0));
            match (p2, q2) {
                (Some(p2), Some(q2)) if q2 <= max_den => {
                    (p0, q0, p1, q1) = (p1, q1, p2, q2);
                }
                _ => break,
            }
            let frac = x - a as f64;
            if frac < 1e-15 {
                break;
            }
            x = 1.0 / frac;
        }
        Self::new(p1, q1)
    }

    /// `2 - phi`, approximated with denominator just above one million.
    pub fn golden() -> Self {
        // 514229 / 1346269 = F(29) / F(31)
        Self::new(514_229, 1_346_269).expect("valid convergent")
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn alpha(&self) -> f64 {
        self.p as f64 / self.q as f64
    }

    /// Cells whose coding shows `sym` at relative position `j`.
    pub fn symbol_cells(&self, j: i64, sym: Symbol) -> ArcSet {
        let q = self.q as i128;
        let shift = ((j as i128 * self.p as i128) % q + q) % q;
        if sym == 1 {
            let start = ((q - self.p as i128 - shift) % q + q) % q;
            ArcSet::arc(self.q, start as u64, self.p)
        } else {
            let start = ((-shift) % q + q) % q;
            ArcSet::arc(self.q, start as u64, self.q - self.p)
        }
    }

    /// Symbol at relative position `j` for phase cell `cell`.
    pub fn code(&self, cell: u64, j: i64) -> Symbol {
        let q = self.q as i128;
        let v = ((cell as i128 + j as i128 * self.p as i128) % q + q) % q;
        (v >= q - self.p as i128) as Symbol
    }

    /// Cells whose coding starts with `word`.
    pub fn word_cells(&self, word: &[Symbol]) -> ArcSet {
        let mut set = ArcSet::full(self.q);
        for (j, &s) in word.iter().enumerate() {
            if s > 1 {
                return ArcSet { intervals: vec![] };
            }
            set = set.intersect(&self.symbol_cells(j as i64, s));
            if set.is_empty() {
                break;
            }
        }
        set
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_convergent() {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let r = Rotation::convergent(2.0 - phi, 1_500_000).unwrap();
        assert_eq!(r, Rotation::golden());
        assert!((r.alpha() - (2.0 - phi)).abs() < 1e-11);
        assert_eq!(Rotation::convergent(0.5, 100).unwrap(), Rotation::new(1, 2).unwrap());
        assert!(Rotation::new(2, 4).is_err());
    }

    #[test]
    fn forbidden_double_one() {
        let r = Rotation::golden();
        assert!(r.word_cells(&[1, 1]).is_empty());
        assert_eq!(r.word_cells(&[1]).cells(), r.p());
        assert_eq!(r.word_cells(&[0]).cells(), r.q() - r.p());
    }

    #[test]
    fn cells_code_their_word() {
        let r = Rotation::new(3, 8).unwrap();
        for cell in 0..8 {
            let word: Vec<Symbol> = (0..6).map(|j| r.code(cell, j)).collect();
            let set = r.word_cells(&word);
            assert!(set.intervals.iter().any(|&(a, b)| a <= cell && cell < b));
        }
        // m + 1 factors of each length m < q
        for m in 1..8 {
            let mut words: Vec<Vec<Symbol>> = (0..8)
                .map(|c| (0..m).map(|j| r.code(c, j as i64)).collect())
                .collect();
            words.sort();
            words.dedup();
            assert_eq!(words.len(), m + 1);
        }
    }

    #[test]
    fn arcs_wrap() {
        let a = ArcSet::arc(10, 8, 4);
        assert_eq!(a.cells(), 4);
        assert_eq!(a.intersect(&ArcSet::arc(10, 0, 1)).cells(), 1);
        assert_eq!(a.nth_cell(2), Some(8));
        assert_eq!(a.nth_cell(0), Some(0));
    }
}
