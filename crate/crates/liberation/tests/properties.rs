use std::f64::consts::PI;

use liberation::config::{PresetConfig, RunConfig};
use liberation::io::num;
use liberation::mc::{ks_distance, l1_distance, EmpiricalCdf};
use proptest::prelude::*;

proptest! {
    #[test]
    fn csv_numbers_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(num(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn ks_is_a_distance_between_zero_and_one(
        a in prop::collection::vec(-PI..PI, 1..60),
        b in prop::collection::vec(-PI..PI, 1..60),
    ) {
        let fa = EmpiricalCdf::new(&a).unwrap();
        let fb = EmpiricalCdf::new(&b).unwrap();
        let d = ks_distance(&a, &fb).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(ks_distance(&a, &fa).unwrap(), 0.0);
        prop_assert!((d - ks_distance(&b, &fa).unwrap()).abs() < 1e-12);
        let l1 = l1_distance(&a, &fb).unwrap();
        prop_assert!((0.0..=2.0 + 1e-12).contains(&l1));
    }

    #[test]
    fn increasing_times_validate_and_others_do_not(mut t in prop::collection::vec(0.0f64..5.0, 2..8)) {
        let mut cfg = RunConfig { preset: PresetConfig::Free { alpha: 0.1, beta: -0.3 }, ..RunConfig::default() };
        t.sort_by(f64::total_cmp);
        t.dedup();
        cfg.times = t.clone();
        prop_assert!(cfg.validate().is_ok());
        if t.len() > 1 {
            t.reverse();
            cfg.times = t;
            prop_assert_eq!(cfg.validate().unwrap_err().exit_code(), 1);
        }
    }
}
