use carve_core::study::{t_quantile, CONFIDENCE_LEVELS};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

#[test]
fn embedded_quantiles_match_students_t() {
    for &level in CONFIDENCE_LEVELS.iter() {
        let p = 0.5 + level / 2.0;
        for df in 1..=200usize {
            let want = StudentsT::new(0.0, 1.0, df as f64).unwrap().inverse_cdf(p);
            let got = t_quantile(level, df).unwrap();
            assert!(
                (got - want).abs() <= 5e-6,
                "level {level} df {df}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn beyond_table_uses_normal_quantile() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    for &level in CONFIDENCE_LEVELS.iter() {
        let z = normal.inverse_cdf(0.5 + level / 2.0);
        for df in [201usize, 500, 10_000] {
            let got = t_quantile(level, df).unwrap();
            assert!(
                (got - z).abs() <= 1e-6,
                "level {level} df {df}: {got} vs {z}"
            );
        }
        // the normal fallback undershoots the true quantile by less than 1%
        let t201 = StudentsT::new(0.0, 1.0, 201.0)
            .unwrap()
            .inverse_cdf(0.5 + level / 2.0);
        assert!((t201 - z) / t201 < 0.01);
    }
}

#[test]
fn unsupported_levels_and_zero_df_are_rejected() {
    assert!(t_quantile(0.8, 5).is_err());
    assert!(t_quantile(0.95, 0).is_err());
}
