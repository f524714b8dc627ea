use serde_json::Value;
use sparse_mcmc_web::{chain_json, profile_json, thresholds_json, ITERATION_LIMIT};

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn thresholds_round_trip() {
    let v = parse(thresholds_json("pca", 2, 15, 3500, 0.05).unwrap());
    assert!((v["mcmc"].as_f64().unwrap() - 15f64.powf(1.5)).abs() < 1e-9);
    let v = parse(thresholds_json("regression", 2, 18, 20_000, 0.05).unwrap());
    assert!((v["lasso"].as_f64().unwrap() - 253.0).abs() < 1.0);
    assert!(thresholds_json("ising", 2, 3, 10, 0.1).unwrap_err().contains("ising"));
    assert!(thresholds_json("pca", 1, 3, 10, 0.1).is_err());
}

#[test]
fn chain_matches_the_library() {
    let v = parse(chain_json(60, 4, 2.0, 20.0, 20_000, 3).unwrap());
    let rows = v["rows"].as_array().unwrap();
    assert!(!rows.is_empty());
    assert_eq!(rows[0]["iter"], 0);
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r["overlap_fraction"].as_f64().unwrap())));
    assert_eq!(v["lambda"], 16.0);
    assert_eq!(parse(chain_json(60, 4, 2.0, 20.0, 20_000, 3).unwrap()), v);
    assert!(chain_json(60, 4, 2.0, -1.0, 100, 0).is_err());
    assert!(chain_json(60, 4, 2.0, 1.0, ITERATION_LIMIT + 1, 0).is_err());
}

#[test]
fn profile_is_monotone_in_prefix() {
    let v = parse(profile_json(16, 3, 4.0, 1).unwrap());
    let prefix: Vec<f64> = v["gamma_prefix_max"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(prefix.len(), 4);
    assert!(prefix.windows(2).all(|w| w[1] >= w[0]));
    assert!(profile_json(60, 6, 1.0, 0).unwrap_err().contains("too many"));
}
