use gal_core::*;
use proptest::prelude::*;

fn result(e: usize, e_star: usize, pred: usize, opt: usize, success: bool) -> InstanceResult {
    InstanceResult {
        instance_id: "x".into(),
        e,
        e_star,
        pred_length: pred,
        opt_length: opt,
        success,
    }
}

proptest! {
    #[test]
    fn metrics_stay_in_percent_range(e in 0usize..2000, e_star in 1usize..2000, opt in 1usize..100, extra in 0usize..50) {
        let exp = exp_ratio(e, e_star).unwrap();
        prop_assert!((0.0..=100.0).contains(&exp));
        let ratio = path_len_ratio(opt, opt + extra).unwrap();
        prop_assert!(ratio > 0.0 && ratio <= 100.0);
        prop_assert_eq!(opt_indicator(opt + extra, opt) == 100.0, extra == 0);
    }

    #[test]
    fn fewer_explorations_never_lower_exp(e in 0usize..500, d in 0usize..100, e_star in 1usize..600) {
        prop_assert!(exp_ratio(e, e_star).unwrap() >= exp_ratio(e + d, e_star).unwrap());
    }

    #[test]
    fn hmean_is_symmetric_and_bounded(a in 0.0f64..=100.0, b in 0.0f64..=100.0) {
        let h = hmean_pair(a, b);
        prop_assert_eq!(h, hmean_pair(b, a));
        prop_assert!(h >= a.min(b) - 1e-9 && h <= (a * b).sqrt() + 1e-9);
    }

    #[test]
    fn intervals_bracket_the_mean(xs in prop::collection::vec(0.0f64..100.0, 1..80), seed in any::<u64>(), level in 0.5f64..0.99) {
        let ci = bootstrap_ci(&xs, 300, level, seed).unwrap();
        prop_assert!(ci.ci_low <= ci.mean && ci.mean <= ci.ci_high);
        let (lo, hi) = xs.iter().fold((f64::MAX, f64::MIN), |(l, h), &x| (l.min(x), h.max(x)));
        prop_assert!(ci.ci_low >= lo - 1e-9 && ci.ci_high <= hi + 1e-9);
        prop_assert_eq!(ci, bootstrap_ci(&xs, 300, level, seed).unwrap());
    }
}

#[test]
fn failures_count_as_zero_everywhere() {
    let rows = [result(10, 20, 5, 5, true), result(40, 20, 0, 6, false)];
    let s = summarize(&rows, &BootstrapConfig::default()).unwrap();
    assert_eq!(s.count, 2);
    assert_eq!(s.suc.mean.round(), 50.0);
    assert_eq!(
        (
            rows[1].opt(),
            rows[1].exp().unwrap(),
            rows[1].hmean().unwrap()
        ),
        (0.0, 0.0, 0.0)
    );
    assert_eq!(rows[1].path_len_ratio().unwrap(), 0.0);
    assert_eq!(s.mean_e, 25.0);
    assert_eq!(s.mean_e_star, 20.0);
}

#[test]
fn bad_inputs_are_errors() {
    assert!(summarize(&[], &BootstrapConfig::default()).is_err());
    assert!(bootstrap_ci(&[], 10, 0.95, 0).is_err());
    assert!(bootstrap_ci(&[1.0], 0, 0.95, 0).is_err());
    assert!(bootstrap_ci(&[1.0], 10, 1.0, 0).is_err());
}

#[test]
fn table_rows_follow_their_labels() {
    let s = summarize(&[result(3, 9, 4, 4, true)], &BootstrapConfig::default()).unwrap();
    let csv = summary_table_csv("planner", &[("a".into(), &s), ("b".into(), &s)]);
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("planner,"));
    assert!(lines[1].starts_with("a,") && lines[2].starts_with("b,"));
    assert_eq!(lines[1][1..], lines[2][1..]);
}
