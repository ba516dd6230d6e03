//! Alphabets, finite windows (cylinders) and their text encoding.
//!
//! Symbols are dense integers `0..k`. A product alphabet records the sizes of
//! its components; a product symbol is the mixed-radix number whose most
//! significant digit belongs to the first component.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Symbol = u8;

/// Largest alphabet the crate handles. Symbols are stored as bytes.
pub const MAX_ALPHABET: u32 = 256;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Alphabet {
    size: u32,
    /// Leaf component sizes, most significant first. Empty for a plain alphabet.
    components: Vec<u32>,
}

impl Alphabet {
    pub fn new(size: u32) -> Result<Self> {
        if !(2..=MAX_ALPHABET).contains(&size) {
            return Err(Error::InvalidAlphabet(format!(
                "size must be in [2, {MAX_ALPHABET}], got {size}"
            )));
        }
        Ok(Self {
            size,
            components: Vec::new(),
        })
    }

    pub fn product(a: &Alphabet, b: &Alphabet) -> Result<Self> {
        let size = a.size * b.size;
        if size > MAX_ALPHABET {
            return Err(Error::InvalidAlphabet(format!(
                "product alphabet of size {size} exceeds {MAX_ALPHABET}"
            )));
        }
        let mut components = a.component_sizes();
        components.extend(b.component_sizes());
        Ok(Self { size, components })
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn is_product(&self) -> bool {
        self.components.len() > 1
    }

    /// Leaf component sizes; `[k]` for a plain alphabet.
    pub fn component_sizes(&self) -> Vec<u32> {
        if self.components.is_empty() {
            vec![self.size]
        } else {
            self.components.clone()
        }
    }

    pub fn contains(&self, s: Symbol) -> bool {
        (s as u32) < self.size
    }

    /// Mixed-radix digits of `s`, one per leaf component.
    pub fn split(&self, s: Symbol) -> Vec<Symbol> {
        let sizes = self.component_sizes();
        let mut digits = vec![0; sizes.len()];
        let mut rest = s as u32;
        for (d, &k) in digits.iter_mut().zip(&sizes).rev() {
            *d = (rest % k) as Symbol;
            rest /= k;
        }
        digits
    }

    pub fn join(&self, digits: &[Symbol]) -> Symbol {
        let sizes = self.component_sizes();
        debug_assert_eq!(digits.len(), sizes.len());
        digits
            .iter()
            .zip(&sizes)
            .fold(0u32, |acc, (&d, &k)| acc * k + d as u32) as Symbol
    }

    /// Project a word onto leaf component `index`.
    pub fn project(&self, word: &[Symbol], index: usize) -> Vec<Symbol> {
        word.iter().map(|&s| self.split(s)[index]).collect()
    }
}

/// A finite word placed at an offset: the cylinder `[symbols]_offset`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    offset: i64,
    symbols: Vec<Symbol>,
}

impl Window {
    pub fn new(offset: i64, symbols: Vec<Symbol>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidWindow("window must be non-empty".into()));
        }
        Ok(Self { offset, symbols })
    }

    /// Window whose cells are `lo..=hi`, filled from `f(coordinate)`.
    pub fn from_fn(lo: i64, hi: i64, f: impl FnMut(i64) -> Symbol) -> Result<Self> {
        Self::new(lo, (lo..=hi).map(f).collect())
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn into_symbols(self) -> Vec<Symbol> {
        self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Leftmost coordinate.
    pub fn lo(&self) -> i64 {
        self.offset
    }

    /// Rightmost coordinate (inclusive).
    pub fn hi(&self) -> i64 {
        self.offset + self.symbols.len() as i64 - 1
    }

    pub fn get(&self, coord: i64) -> Option<Symbol> {
        let i = coord - self.offset;
        if i < 0 {
            return None;
        }
        self.symbols.get(i as usize).copied()
    }

    pub fn covers(&self, lo: i64, hi: i64) -> bool {
        self.lo() <= lo && hi <= self.hi()
    }

    pub fn require_cover(&self, lo: i64, hi: i64) -> Result<()> {
        if self.covers(lo, hi) {
            Ok(())
        } else {
            Err(Error::ConeNotCovered {
                need_lo: lo,
                need_hi: hi,
                have_lo: self.lo(),
                have_hi: self.hi(),
            })
        }
    }

    /// Sub-window on `lo..=hi`.
    pub fn restrict(&self, lo: i64, hi: i64) -> Result<Window> {
        self.require_cover(lo, hi)?;
        if hi < lo {
            return Err(Error::InvalidWindow(format!("empty range [{lo}, {hi}]")));
        }
        let a = (lo - self.offset) as usize;
        let b = (hi - self.offset) as usize;
        Window::new(lo, self.symbols[a..=b].to_vec())
    }

    pub fn check_alphabet(&self, alphabet: &Alphabet) -> Result<()> {
        match self.symbols.iter().find(|&&s| !alphabet.contains(s)) {
            Some(s) => Err(Error::InvalidWindow(format!(
                "symbol {s} outside alphabet of size {}",
                alphabet.size()
            ))),
            None => Ok(()),
        }
    }

    /// `<offset>:<digits>`; product alphabets write one comma-separated digit
    /// group per component.
    pub fn to_text(&self, alphabet: &Alphabet) -> String {
        let body = if alphabet.is_product() {
            (0..alphabet.component_sizes().len())
                .map(|c| word_to_digits(&alphabet.project(&self.symbols, c)))
                .collect::<Vec<_>>()
                .join(",")
        } else {
            word_to_digits(&self.symbols)
        };
        format!("{}:{}", self.offset, body)
    }

    pub fn parse(text: &str, alphabet: &Alphabet) -> Result<Window> {
        let (off, body) = text
            .trim()
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("window `{text}` lacks `offset:`")))?;
        let offset: i64 = off
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("bad window offset `{off}`: {e}")))?;
        let sizes = alphabet.component_sizes();
        let groups: Vec<&str> = body.split(',').map(str::trim).collect();
        if groups.len() != sizes.len() {
            return Err(Error::Parse(format!(
                "window has {} digit groups, alphabet has {} components",
                groups.len(),
                sizes.len()
            )));
        }
        let words = groups
            .iter()
            .zip(&sizes)
            .map(|(g, &k)| digits_to_word(g, k))
            .collect::<Result<Vec<_>>>()?;
        let len = words[0].len();
        if words.iter().any(|w| w.len() != len) {
            return Err(Error::Parse("digit groups differ in length".into()));
        }
        let symbols = (0..len)
            .map(|i| {
                let digits: Vec<Symbol> = words.iter().map(|w| w[i]).collect();
                alphabet.join(&digits)
            })
            .collect();
        Window::new(offset, symbols)
    }
}

const DIGITS: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyz";

/// Base-k digit string (`0-9a-z`) of a word.
pub fn word_to_digits(word: &[Symbol]) -> String {
    word.iter()
        .map(|&s| {
            DIGITS
                .get(s as usize)
                .map(|&c| c as char)
                .unwrap_or('?')
        })
        .collect()
}

pub fn digits_to_word(text: &str, k: u32) -> Result<Vec<Symbol>> {
    text.chars()
        .map(|c| {
            let d = c
                .to_digit(36)
                .ok_or_else(|| Error::Parse(format!("bad digit `{c}`")))?;
            if d >= k {
                return Err(Error::Parse(format!("digit `{c}` out of range for k={k}")));
            }
            Ok(d as Symbol)
        })
        .collect()
}

/// Iterate all `k^len` words in lexicographic order.
pub fn all_words(k: u32, len: usize) -> impl Iterator<Item = Vec<Symbol>> {
    let total = (k as u128).checked_pow(len as u32).unwrap_or(u128::MAX);
    (0..total).map(move |mut code| {
        let mut w = vec![0; len];
        for slot in w.iter_mut().rev() {
            *slot = (code % k as u128) as Symbol;
            code /= k as u128;
        }
        w
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_radix_round_trip() {
        let a = Alphabet::new(2).unwrap();
        let b = Alphabet::new(3).unwrap();
        let ab = Alphabet::product(&a, &b).unwrap();
        assert_eq!(ab.size(), 6);
        assert_eq!(ab.component_sizes(), vec![2, 3]);
        for s in 0..6u8 {
            assert_eq!(ab.join(&ab.split(s)), s);
        }
        assert_eq!(ab.split(5), vec![1, 2]);
    }

    #[test]
    fn window_text() {
        let a = Alphabet::new(2).unwrap();
        let w = Window::new(-2, vec![0, 1, 1, 0, 1]).unwrap();
        assert_eq!(w.to_text(&a), "-2:01101");
        assert_eq!(Window::parse("-2:01101", &a).unwrap(), w);

        let ab = Alphabet::product(&a, &a).unwrap();
        let w = Window::new(3, vec![0, 1, 2, 3]).unwrap();
        assert_eq!(w.to_text(&ab), "3:0011,0101");
        assert_eq!(Window::parse("3:0011,0101", &ab).unwrap(), w);
        assert!(Window::parse("3:0011", &ab).is_err());
    }

    #[test]
    fn restrict_and_cover() {
        let w = Window::new(-3, vec![0, 1, 0, 1, 0, 1, 0]).unwrap();
        assert_eq!(w.hi(), 3);
        let r = w.restrict(-1, 1).unwrap();
        assert_eq!(r.symbols(), &[0, 1, 0]);
        assert!(w.restrict(-4, 0).is_err());
        assert!(Window::new(0, vec![]).is_err());
    }

    #[test]
    fn enumerates_words() {
        let words: Vec<_> = all_words(3, 2).collect();
        assert_eq!(words.len(), 9);
        assert_eq!(words[5], vec![1, 2]);
    }
}
