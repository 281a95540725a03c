use localfloer_core::corpus::build_default;
use localfloer_core::isolation::{
    c_constant, contraction_check, periodic_point_search, sample_inequality, write_c_table, IsolationConclusion,
};
use localfloer_core::GermMap;

fn brute_force_c(k: usize) -> f64 {
    // Zero-mean ±1 sign patterns of length k with one up-run and one down-run
    // attain the constant; sweep all run lengths and offsets.
    let mut best = 0.0f64;
    for up in 1..k {
        for shift in 0..k {
            let mut xi = vec![0.0; k];
            for (i, v) in xi.iter_mut().enumerate() {
                *v = if (i + k - shift) % k < up { 1.0 } else { 0.0 };
            }
            let mean = xi.iter().sum::<f64>() / k as f64;
            let norm: f64 = xi.iter().map(|v| (v - mean).abs()).sum();
            let deriv: f64 = (0..k).map(|i| (xi[(i + 1) % k] - xi[i]).abs()).sum();
            best = best.max(norm / deriv);
        }
    }
    best
}

#[test]
fn c_constant_matches_step_sequences() {
    for k in 2..=16 {
        let c = c_constant(k, 1).unwrap();
        assert!((c.value - brute_force_c(k)).abs() < 1e-12, "k = {k}");
        assert!(c.equality_defect < 1e-12);
        assert_eq!(c.value, c_constant(k, 3).unwrap().value);
    }
}

#[test]
fn sampled_ratios_never_exceed_the_constant() {
    for k in [2, 3, 5, 8] {
        let check = sample_inequality(k, 2, 2000, 7).unwrap();
        assert_eq!(check.violations, 0, "k = {k}");
    }
}

#[test]
fn c_table_has_a_row_per_k() {
    let mut buf = Vec::new();
    write_c_table(&[2, 3, 4], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn quartic_maximum_is_isolated_for_small_iterations() {
    let g = build_default("quartic-max").unwrap();
    let phi = GermMap::from_germ(&g.germ).unwrap();
    for k in [1, 2] {
        let rep = periodic_point_search(&phi, k, &[0.05, 0.01]).unwrap();
        assert_eq!(rep.conclusion, IsolationConclusion::IsolationHolds, "k = {k}");
        assert_eq!(rep.non_fixed_witnesses(), 0);
    }
}

#[test]
fn contraction_certifies_the_quartic_maximum_near_the_origin() {
    let g = build_default("quartic-max").unwrap();
    let phi = GermMap::from_germ(&g.germ).unwrap();
    let r = contraction_check(&phi, 3, 0.05, 9).unwrap();
    assert!(r.lipschitz < 0.1, "{}", r.lipschitz);
    assert!(r.certified);
    assert_eq!(r.cross_check, Some(true));
}
