use demcoh::bounds::{
    gamma_from_maxinfo, gamma_pure_dp, gamma_pure_dp_printed, maxinfo_pure_dp, CoherenceParams, GAMMA_FLOOR,
};
use demcoh::concentration::{hypergeom_exact, hypergeom_tail_bound, HypergeomParams};
use demcoh::data::{random_split, Dataset, EmpiricalDistribution, Lens, Record};
use demcoh::metric::wasserstein1;
use demcoh::stats::clopper_pearson;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..=1.0, 1..40)
}

fn dist(v: Vec<f64>) -> EmpiricalDistribution {
    EmpiricalDistribution::new(v).unwrap()
}

proptest! {
    #[test]
    fn w1_is_a_bounded_metric(a in sample(), b in sample(), c in sample()) {
        let (p, q, r) = (dist(a), dist(b), dist(c));
        let pq = wasserstein1(&p, &q);
        prop_assert!(pq >= 0.0 && pq <= 2.0 + 1e-12);
        prop_assert_eq!(wasserstein1(&p, &p), 0.0);
        prop_assert!((pq - wasserstein1(&q, &p)).abs() <= 1e-12);
        prop_assert!(wasserstein1(&p, &r) <= pq + wasserstein1(&q, &r) + 1e-12);
    }

    #[test]
    fn w1_equals_sorted_coupling_on_equal_sizes(pairs in prop::collection::vec((-1.0f64..=1.0, -1.0f64..=1.0), 1..40)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (p, q) = (dist(a), dist(b));
        let coupling = p.values().iter().zip(q.values()).map(|(x, y)| (x - y).abs()).sum::<f64>() / p.len() as f64;
        prop_assert!((wasserstein1(&p, &q) - coupling).abs() <= 1e-9);
    }

    #[test]
    fn w1_of_shift_is_the_shift(a in sample(), shift in 0.0f64..0.5) {
        let p = dist(a.iter().map(|x| x * 0.5).collect());
        let q = dist(a.iter().map(|x| x * 0.5 + shift).collect());
        prop_assert!((wasserstein1(&p, &q) - shift).abs() <= 1e-9);
    }

    #[test]
    fn gamma_is_monotone(
        alpha in 0.05f64..=1.0,
        beta in 0.001f64..0.9,
        c in 1u64..1000,
        n in 100u64..1_000_000,
        eps in 0.001f64..0.5,
        bump in 1.0f64..2.0,
    ) {
        let p = CoherenceParams::new(alpha, beta, c, n);
        let g = gamma_pure_dp(eps, &p).unwrap().gamma;
        prop_assert!(g >= GAMMA_FLOOR);
        prop_assert!(gamma_pure_dp((eps * bump).min(1.0), &p).unwrap().gamma >= g);
        let at = |q: CoherenceParams| gamma_pure_dp(eps, &q).unwrap().gamma;
        prop_assert!(at(CoherenceParams::new(alpha / bump, beta, c, n)) >= g);
        prop_assert!(at(CoherenceParams::new(alpha, beta / bump, c, n)) >= g);
        prop_assert!(at(CoherenceParams::new(alpha, beta, c * 2, n)) >= g);
        prop_assert!(at(CoherenceParams::new(alpha, beta, c, n * 2)) >= g);
    }

    #[test]
    fn pure_dp_gamma_matches_printed_composition(
        alpha in 0.05f64..=1.0,
        beta in 0.001f64..0.9,
        c in 1u64..1000,
        n in 2u64..1_000_000,
        eps in 0.001f64..=1.0,
    ) {
        let p = CoherenceParams::new(alpha, beta, c, n);
        let g = gamma_pure_dp(eps, &p).unwrap().gamma;
        let printed = gamma_pure_dp_printed(eps, &p).unwrap();
        prop_assert!((g - printed).abs() <= 1e-9 * g);
        let zeta = maxinfo_pure_dp(eps, n, p.per_subgroup_failure()).unwrap().zeta;
        prop_assert_eq!(gamma_from_maxinfo(zeta, &p).unwrap().gamma, g);
    }

    #[test]
    fn hypergeometric_pmf_normalizes_and_respects_the_bound(
        b in 1u64..300,
        a_frac in 0.0f64..=1.0,
        s_frac in 0.0f64..=1.0,
        dev in 2.0f64..6.0,
    ) {
        let a = ((a_frac * b as f64).round() as u64).clamp(1, b);
        let s = ((s_frac * b as f64).round() as u64).clamp(1, b);
        let params = HypergeomParams::new(b, a, s).unwrap();
        let t = hypergeom_exact(&params).unwrap();
        prop_assert!((t.total() - 1.0).abs() < 1e-9);
        prop_assert!((t.mean() - params.mean()).abs() < 1e-8);
        let bound = hypergeom_tail_bound(&params, dev).unwrap().probability;
        prop_assert!(t.upper_tail(params.mean() + dev) <= bound + 1e-12);
        prop_assert!(t.lower_tail(params.mean() - dev) <= bound + 1e-12);
    }

    #[test]
    fn clopper_pearson_brackets_the_estimate(t in 1u64..5000, frac in 0.0f64..=1.0) {
        let k = (frac * t as f64).round() as u64;
        let (lo, hi) = clopper_pearson(k, t, 0.95).unwrap();
        let p = k as f64 / t as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn split_halves_partition_the_dataset(half in 1usize..100, seed in any::<u64>()) {
        let n = 2 * half;
        let data = Dataset::from_rows((0..n).map(|i| [format!("{i}")])).unwrap();
        let split = random_split(&data, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let (xa, xb) = split.halves(&data);
        prop_assert_eq!(xa.len(), half);
        prop_assert_eq!(xb.len(), half);
        let mut all: Vec<Record> = xa.records().iter().chain(xb.records()).cloned().collect();
        all.sort();
        let mut want = data.records().to_vec();
        want.sort();
        prop_assert_eq!(all, want);
        prop_assert_eq!(split.complement().complement(), split);
    }

    #[test]
    fn lens_restriction_is_idempotent(values in prop::collection::vec("[a-c]{0,2}", 1..6), mask in any::<u8>()) {
        let r: Record = values.iter().map(|s| s.as_str()).collect();
        let lens = Lens::new((0..values.len()).filter(|i| mask & (1 << i) != 0));
        let once = r.restrict(&lens);
        prop_assert_eq!(once.restrict(&lens), once.clone());
        for i in 0..values.len() {
            prop_assert_eq!(once.values()[i].is_null(), !lens.contains(i));
        }
    }
}
