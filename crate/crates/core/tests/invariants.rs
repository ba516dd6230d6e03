use caflow_core::catalog;
use caflow_core::flow::{density_flow, flow_at, FlowParams};
use caflow_core::measure::MeasureModel;
use caflow_core::oracle::{enumerate_class, partition_measures};
use caflow_core::perturbation::{bn_measure_curve, lyapunov_exact, lyapunov_sampled};
use caflow_core::rng::substream;
use caflow_core::rule::{elementary_rule, make_rule, LocalRule};
use caflow_core::symbols::{all_words, Alphabet, Symbol, Window};
use caflow_core::trace_class::{
    build_delta_filter, class_measure_exact, count_t_exact, count_t_filtered, DEFAULT_BUDGET,
};
use caflow_core::velocity::{g_window, VelocitySpec};
use num_bigint::BigUint;
use proptest::prelude::*;
use std::collections::BTreeMap;

fn measure_strategy() -> impl Strategy<Value = MeasureModel> {
    prop_oneof![
        Just(MeasureModel::uniform(2).unwrap()),
        (0.05f64..0.95).prop_map(|a| MeasureModel::bernoulli(vec![a, 1.0 - a]).unwrap()),
        (0.05f64..0.95, 0.05f64..0.95)
            .prop_map(|(a, b)| MeasureModel::markov(vec![vec![a, 1.0 - a], vec![b, 1.0 - b]]).unwrap()),
        Just(catalog::measure("sturmian", 2).unwrap()),
    ]
}

fn window(k: u32, lo: i64, hi: i64, seed: u64) -> Window {
    use rand::Rng;
    let mut rng = substream(seed, 0);
    Window::from_fn(lo, hi, |_| rng.gen_range(0..k) as Symbol).unwrap()
}

fn random_rule(k: u32, r: usize, seed: u64) -> LocalRule {
    use rand::Rng;
    let mut rng = substream(seed, 1);
    let mut map = BTreeMap::new();
    for w in all_words(k, 2 * r + 1) {
        map.insert(w, rng.gen_range(0..k) as Symbol);
    }
    make_rule(k, r, &map).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kolmogorov_consistency(m in measure_strategy(), seed in any::<u64>(), len in 1usize..8) {
        let mut rng = substream(seed, 0);
        let w = m.sample_word(len, &mut rng);
        let base = m.word_log_measure(&w).prob();
        let ext: f64 = (0..2u8)
            .map(|s| {
                let mut v = w.clone();
                v.push(s);
                m.word_log_measure(&v).prob()
            })
            .sum();
        prop_assert!((base - ext).abs() <= 1e-9 * base.max(1e-300) + 1e-12);
    }

    #[test]
    fn partition_is_probability(code in 0u32..256, m in measure_strategy(), p in 0usize..2, n in 1usize..3) {
        let rule = elementary_rule(code).unwrap();
        let parts = partition_measures(&rule, &m, p, n).unwrap();
        let total: f64 = parts.values().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dp_matches_oracle(seed in any::<u64>(), k in 2u32..4, r in 1usize..3, n in 1usize..3, p in 0usize..2,
                         gm in 0usize..3, gp in 0usize..3) {
        let rule = random_rule(k, r, seed);
        let m = MeasureModel::uniform(k).unwrap();
        let (clo, chi) = rule.cone(p, n);
        let g = g_window(p, gm, gp);
        let x = window(k, clo.min(g.0), chi.max(g.1), seed);
        let oracle = match enumerate_class(&rule, &m, &x, p, n, g) {
            Ok(o) => o,
            Err(e) if e.is_budget() => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let dp = count_t_exact(&rule, &m, &x, p, n, g, DEFAULT_BUDGET).unwrap();
        prop_assert_eq!(&dp.count_t, &oracle.count);
        let cm = class_measure_exact(&rule, &m, &x, p, n, DEFAULT_BUDGET).unwrap().prob();
        prop_assert!((cm - oracle.class_measure).abs() <= 1e-12 * oracle.class_measure.max(1e-300));
    }

    #[test]
    fn filtered_count_bounds(code in 0u32..256, m in measure_strategy(), seed in any::<u64>(), n in 1usize..5,
                             delta in 0.01f64..0.5) {
        let rule = elementary_rule(code).unwrap();
        let g = g_window(0, n, n);
        let x = m.sample_window(-(n as i64) - 1, 2 * n + 3, &mut substream(seed, 2)).unwrap();
        let res = count_t_exact(&rule, &m, &x, 0, n, g, DEFAULT_BUDGET).unwrap();
        let filter = build_delta_filter(&m, res.window_len(), delta, 2000, seed).unwrap();
        let f = count_t_filtered(&res, &filter).unwrap();
        prop_assert!(f.count >= BigUint::from(1u8));
        prop_assert!(f.count <= res.count_t);
        prop_assert!(res.count_t > res.zero_measure_words);
    }

    #[test]
    fn sampled_exponents_bound_exact(code in 0u32..256, seed in any::<u64>(), n in 1usize..6) {
        let rule = elementary_rule(code).unwrap();
        let x = window(2, -2 * n as i64, 2 * n as i64, seed);
        let exact = lyapunov_exact(&rule, &x, n, DEFAULT_BUDGET).unwrap();
        let sampled = lyapunov_sampled(&rule, &x, n, 8, &mut substream(seed, 3)).unwrap();
        prop_assert!(exact.i_plus <= n && exact.i_minus <= n);
        prop_assert!(sampled.i_plus <= exact.i_plus && sampled.i_minus <= exact.i_minus);
    }

    #[test]
    fn window_text_roundtrip(offset in -20i64..20, word in proptest::collection::vec(0u8..4, 1..12)) {
        let w = Window::new(offset, word).unwrap();
        let a = Alphabet::new(4).unwrap();
        prop_assert_eq!(Window::parse(&w.to_text(&a), &a).unwrap(), w);
    }

    #[test]
    fn linear_windows_are_exact_ceilings(a in 0i64..8, b in 1i64..5, n in 1usize..200) {
        let v = VelocitySpec::parse(&format!("{a}/{b},{a}/{b}")).unwrap();
        let (gm, gp) = v.resolve(n).unwrap();
        let expect = ((a as usize) * n).div_ceil(b as usize);
        prop_assert_eq!((gm, gp), (expect, expect));
    }
}

#[test]
fn integrands_stay_in_range_and_runs_are_deterministic() {
    let params = FlowParams {
        samples: 6,
        seed: 77,
        ..FlowParams::default()
    };
    let v = VelocitySpec::linear_int(1, 1).unwrap();
    for code in [18u32, 30, 54, 110, 184] {
        let rule = elementary_rule(code).unwrap();
        let m = MeasureModel::bernoulli(vec![0.3, 0.7]).unwrap();
        let a = flow_at(&rule, &m, 1, 4, 0.1, &v, &params).unwrap();
        let b = flow_at(&rule, &m, 1, 4, 0.1, &v, &params).unwrap();
        assert_eq!(a, b);
        assert!(a.points.iter().all(|p| (0.0..=1.0).contains(&p.integrand)));
        assert!(a.m_value >= 0.0 && a.m_value <= 1.0);
    }
}

#[test]
fn uniform_entropy_flow_identity() {
    // -log mu(class) = log k * |cone| * M when G is the whole cone
    let u = MeasureModel::uniform(2).unwrap();
    for code in [30u32, 90, 110, 170] {
        let rule = elementary_rule(code).unwrap();
        for (p, n) in [(0usize, 3usize), (1, 4)] {
            let (clo, chi) = rule.cone(p, n);
            let x = window(2, clo, chi, code as u64);
            let res = count_t_exact(&rule, &u, &x, p, n, (clo, chi), DEFAULT_BUDGET).unwrap();
            let len = res.window_len() as f64;
            let m = 1.0 - (res.count_t.to_string().parse::<f64>().unwrap()).ln() / (len * 2f64.ln());
            let lhs = -res.class_log_measure.0 / n as f64;
            let rhs = 2f64.ln() * (len / n as f64) * m;
            assert!((lhs - rhs).abs() < 1e-9, "rule {code}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn velocity_overshoot_invariance_on_shift() {
    let rule = catalog::rule("shift").unwrap();
    let u = MeasureModel::uniform(2).unwrap();
    let params = FlowParams {
        samples: 2,
        ..FlowParams::default()
    };
    let ns = [4, 8, 12, 16, 20];
    let limit = |a: i64| {
        let v = VelocitySpec::linear_int(a, a).unwrap();
        let flow = density_flow(&rule, &u, &[0, 1], &ns, &[0.1], &v, &params).unwrap();
        2.0 * a as f64 * flow.m_extrapolated.unwrap()
    };
    let (one, two) = (limit(1), limit(2));
    assert!((one - 1.0).abs() < 1e-3 && (two - 1.0).abs() < 1e-3, "{one} {two}");
}

#[test]
fn stability_curve_is_non_increasing() {
    let m = MeasureModel::uniform(2).unwrap();
    for code in [30u32, 90, 108, 204] {
        let rule = elementary_rule(code).unwrap();
        let (lo, hi) = rule.cone(1, 16);
        let x = window(2, lo, hi, code as u64);
        let curve = bn_measure_curve(&rule, &m, &x, 1, &[1, 2, 4, 8, 16], 2000, 5, DEFAULT_BUDGET).unwrap();
        assert!(curve.windows(2).all(|w| w[1].estimate <= w[0].estimate));
    }
}
