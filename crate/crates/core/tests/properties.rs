use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use proptest::prelude::*;

use localfloer_core::isolation::{c_constant, DiscreteOrbit};
use localfloer_core::pathindex::{conley_zehnder, mean_index};
use localfloer_core::symplin::{admissible, direct_sum, rotation, spectrum, validate_symplectic, DEFAULT_Q_MAX};
use localfloer_core::{GradedRanks, SymplecticPath};

fn rot_path(angle: f64, segments: usize) -> SymplecticPath {
    SymplecticPath::from_fn(1, segments, |t| rotation(angle * t)).unwrap()
}

fn ranks_strategy() -> impl Strategy<Value = GradedRanks> {
    prop::collection::vec((-4i32..6, 0usize..3), 0..5).prop_map(GradedRanks::from_pairs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kunneth_multiplies_euler_characteristics(a in ranks_strategy(), b in ranks_strategy()) {
        let k = a.kunneth(&b);
        prop_assert_eq!(k.euler_characteristic(), a.euler_characteristic() * b.euler_characteristic());
        prop_assert_eq!(k.total(), a.total() * b.total());
    }

    #[test]
    fn shifting_flips_euler_characteristic_by_parity(a in ranks_strategy(), s in -5i32..5) {
        let sign = if s.rem_euclid(2) == 0 { 1 } else { -1 };
        prop_assert_eq!(a.shifted(s).euler_characteristic(), sign * a.euler_characteristic());
        prop_assert_eq!(a.shifted(s).shifted(-s), a);
    }

    #[test]
    fn rotation_indices_match_winding(angle in 0.05f64..40.0) {
        prop_assume!((angle / TAU - (angle / TAU).round()).abs() > 1e-3);
        let p = rot_path(angle, 64 + (angle * 4.0) as usize);
        let d = mean_index(&p).unwrap();
        prop_assert!((d - angle / PI).abs() < 1e-9);
        let cz = conley_zehnder(&p).unwrap();
        prop_assert_eq!(cz, 2 * (angle / TAU).floor() as i64 + 1);
        prop_assert!((cz as f64 - d).abs() < 1.0);
    }

    #[test]
    fn mean_index_is_homogeneous(angle in 0.1f64..6.0, k in 1usize..7) {
        let p = rot_path(angle, 64);
        let d = mean_index(&p).unwrap();
        let dk = mean_index(&p.iterate(k).unwrap()).unwrap();
        prop_assert!((dk - k as f64 * d).abs() < 1e-6);
    }

    #[test]
    fn mean_index_is_additive(a in 0.1f64..9.0, b in -9.0f64..-0.1) {
        let pa = rot_path(a, 128);
        let pb = rot_path(b, 128);
        let s = pa.direct_sum(&pb);
        let sum = mean_index(&pa).unwrap() + mean_index(&pb).unwrap();
        prop_assert!((mean_index(&s).unwrap() - sum).abs() < 1e-6);
    }

    #[test]
    fn spectrum_accounts_for_every_eigenvalue(t1 in 0.1f64..3.0, t2 in 0.1f64..3.0, l in 1.2f64..4.0) {
        let hyp = DMatrix::from_row_slice(2, 2, &[l, 0.0, 0.0, 1.0 / l]);
        let m = validate_symplectic(direct_sum(&direct_sum(&rotation(t1), &rotation(t2)), &hyp), 1e-9).unwrap();
        let data = spectrum(&m, 1e-8, DEFAULT_Q_MAX).unwrap();
        prop_assert_eq!(data.total_multiplicity(), 6);
        prop_assert!(admissible(&m, 1).unwrap());
    }

    #[test]
    fn zero_mean_inequality(k in 2usize..13, raw in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 12)) {
        let xi = DiscreteOrbit::new(raw[..k].to_vec()).unwrap().centered();
        let c = c_constant(k, 2).unwrap().value;
        let lhs = xi.l1_norm();
        let rhs = c * xi.derivative().l1_norm();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-15);
    }
}

#[test]
fn c_constant_is_nondecreasing() {
    let values: Vec<f64> = (2..=12).map(|k| c_constant(k, 1).unwrap().value).collect();
    assert!(values.windows(2).all(|w| w[1] >= w[0] - 1e-15), "{values:?}");
}
