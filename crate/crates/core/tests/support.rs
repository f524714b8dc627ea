use proptest::prelude::*;
use sparse_mcmc::{neighbors, overlap, random_support, Error, RngStream, Support, SupportIndexer, SwapMove};

fn sup(p: u32, idx: &[u32]) -> Support {
    Support::new(p, idx.to_vec()).unwrap()
}

#[test]
fn random_support_degenerate_sizes() {
    let mut rng = RngStream::new(1, 0);
    assert_eq!(random_support(3, 3, &mut rng).unwrap().indices(), &[0, 1, 2]);
    assert_eq!(random_support(1, 1, &mut rng).unwrap().indices(), &[0]);
    assert!(matches!(random_support(3, 4, &mut rng), Err(Error::InvalidParameter(_))));
    assert!(matches!(random_support(3, 0, &mut rng), Err(Error::InvalidParameter(_))));
}

#[test]
fn random_support_is_uniform() {
    let (p, k, draws) = (6, 2, 100_000u32);
    let indexer = SupportIndexer::new(p, k).unwrap();
    let mut counts = vec![0u32; indexer.count() as usize];
    let mut rng = RngStream::new(2024, 9);
    for _ in 0..draws {
        counts[indexer.rank(&random_support(p, k, &mut rng).unwrap()) as usize] += 1;
    }
    let prob = 1.0 / 15.0;
    let mean = draws as f64 * prob;
    let sd = (draws as f64 * prob * (1.0 - prob)).sqrt();
    for (r, &c) in counts.iter().enumerate() {
        assert!((c as f64 - mean).abs() <= 4.0 * sd, "support {r}: {c} vs {mean}");
    }
    // Pearson statistic with 14 degrees of freedom; 36.1 is the 0.999 quantile
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - mean).powi(2) / mean).sum();
    assert!(chi2 < 36.1, "chi2 = {chi2}");
}

#[test]
fn overlap_examples() {
    assert_eq!(overlap(&sup(6, &[1, 2, 3]), &sup(6, &[2, 3, 5])).unwrap(), 2);
    let a = sup(10, &[0, 4, 9]);
    assert_eq!(overlap(&a, &a).unwrap(), 3);
    assert_eq!(overlap(&sup(4, &[0, 1]), &sup(4, &[2, 3])).unwrap(), 0);
    assert!(matches!(overlap(&sup(4, &[0, 1]), &sup(5, &[0, 1])), Err(Error::InvalidParameter(_))));
}

#[test]
fn neighbor_enumeration() {
    let moves: Vec<SwapMove> = neighbors(&sup(4, &[0, 1])).collect();
    let expect = [(0, 2), (0, 3), (1, 2), (1, 3)].map(|(o, i)| SwapMove::new(o, i));
    assert_eq!(moves, expect);
    assert_eq!(neighbors(&Support::first(3500, 15).unwrap()).count(), 52_275);
    assert_eq!(neighbors(&Support::first(5, 5).unwrap()).count(), 0);
}

#[test]
fn invalid_supports_rejected() {
    assert!(Support::new(4, vec![1, 1]).is_err());
    assert!(Support::new(4, vec![0, 4]).is_err());
    let s = sup(5, &[0, 2]);
    assert!(matches!(s.apply(SwapMove::new(1, 3)), Err(Error::Precondition(_))));
    assert!(matches!(s.apply(SwapMove::new(0, 2)), Err(Error::Precondition(_))));
    assert!(matches!(s.apply(SwapMove::new(0, 0)), Err(Error::Precondition(_))));
}

#[test]
fn gaussian_is_a_pure_function() {
    let a = RngStream::new(77, 3);
    let b = RngStream::new(77, 3);
    for i in [0, 1, 12345, u64::MAX] {
        assert_eq!(a.gaussian(i).to_bits(), b.gaussian(i).to_bits());
    }
}

#[test]
fn gaussian_moments() {
    let g = RngStream::new(5, 11);
    let n = 1_000_000u64;
    let (mut s1, mut s2) = (0.0, 0.0);
    for i in 0..n {
        let z = g.gaussian(i);
        s1 += z;
        s2 += z * z;
    }
    let mean = s1 / n as f64;
    let var = s2 / n as f64 - mean * mean;
    assert!(mean.abs() < 0.01, "mean {mean}");
    assert!((var - 1.0).abs() < 0.01, "variance {var}");
}

#[test]
fn distinct_streams_uncorrelated() {
    let (a, b) = (RngStream::new(5, 1), RngStream::new(5, 2));
    let n = 100_000u64;
    let (mut sa, mut sb, mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let (x, y) = (a.gaussian(i), b.gaussian(i));
        sa += x;
        sb += y;
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    let nf = n as f64;
    let cov = sab / nf - sa * sb / nf / nf;
    let r = cov / ((saa / nf - (sa / nf).powi(2)) * (sbb / nf - (sb / nf).powi(2))).sqrt();
    assert!(r.abs() < 0.02, "correlation {r}");
}

#[test]
fn support_json_roundtrip() {
    let s = sup(9, &[1, 4, 8]);
    let text = serde_json::to_string(&s).unwrap();
    let back: Support = serde_json::from_str(&text).unwrap();
    assert_eq!(back, s);
    assert!(serde_json::from_str::<Support>(r#"{"p":3,"indices":[0,5]}"#).is_err());
}

fn support_strategy() -> impl Strategy<Value = Support> {
    (2u32..40).prop_flat_map(|p| {
        (Just(p), proptest::sample::subsequence((0..p).collect::<Vec<_>>(), 1..p as usize))
            .prop_map(|(p, idx)| Support::new(p, idx).unwrap())
    })
}

proptest! {
    #[test]
    fn every_neighbor_is_adjacent(s in support_strategy()) {
        let k = s.k();
        let mut seen = std::collections::HashSet::new();
        for m in neighbors(&s) {
            let t = s.apply(m).unwrap();
            prop_assert_eq!(overlap(&s, &t).unwrap(), k - 1);
            prop_assert!(t.indices().windows(2).all(|w| w[0] < w[1]));
            prop_assert!(seen.insert(t));
        }
        prop_assert_eq!(seen.len() as u32, k * (s.p() - k));
    }

    #[test]
    fn swap_then_reverse_is_identity(s in support_strategy(), pick in any::<u64>()) {
        let moves: Vec<SwapMove> = neighbors(&s).collect();
        prop_assume!(!moves.is_empty());
        let m = moves[(pick % moves.len() as u64) as usize];
        prop_assert_eq!(s.apply(m).unwrap().apply(m.reverse()).unwrap(), s);
    }

    #[test]
    fn overlap_range(a in support_strategy(), seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 0);
        let b = random_support(a.p(), a.k(), &mut rng).unwrap();
        let o = overlap(&a, &b).unwrap();
        let lower = (2 * a.k()).saturating_sub(a.p());
        prop_assert!(lower <= o && o <= a.k());
    }

    #[test]
    fn indexer_roundtrip(p in 1u32..12, k_frac in 0.0f64..1.0, r_frac in 0.0f64..1.0) {
        let k = 1 + ((p - 1) as f64 * k_frac) as u32;
        let ix = SupportIndexer::new(p, k).unwrap();
        let r = ((ix.count() - 1) as f64 * r_frac) as u64;
        prop_assert_eq!(ix.rank(&ix.unrank(r)), r);
    }

    #[test]
    fn proposals_are_valid(s in support_strategy(), seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 4);
        match s.propose(&mut rng) {
            Some(m) => prop_assert!(s.check_move(m).is_ok()),
            None => prop_assert_eq!(s.k(), s.p()),
        }
    }
}
