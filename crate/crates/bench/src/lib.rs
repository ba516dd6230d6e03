//! Fixtures shared by the benchmarks.

use caflow_core::rng::substream;
use caflow_core::rule::LocalRule;
use caflow_core::{MeasureModel, Window};

/// A reproducible `m`-typical window covering the dependency cone of `(p, n)`.
pub fn cone_window(rule: &LocalRule, m: &MeasureModel, p: usize, n: usize, seed: u64) -> Window {
    let (lo, hi) = rule.cone(p, n);
    m.sample_window(lo, (hi - lo + 1) as usize, &mut substream(seed, 0))
        .expect("valid window")
}
