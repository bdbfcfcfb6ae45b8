use obfusc::stats::{median, spearman};
use obfusc::table::{fmt_f64, parse_csv, to_csv, Metadata, ResultTable, Row};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    any::<f64>().prop_filter("finite", |v| v.is_finite())
}

fn table(rows: Vec<Row>) -> ResultTable {
    ResultTable {
        rows,
        metadata: Metadata {
            experiment: "p".into(),
            kind: "accuracy-sweep".into(),
            fingerprint: String::new(),
            config: serde_json::Value::Null,
            deviations: vec![],
            pud: vec![],
        },
    }
}

prop_compose! {
    fn row()(
        experiment in "[a-z0-9,\" -]{0,12}",
        spec in "S-[01](\\.[0-9]{1,2})?-[01]-[01](\\.[0-9]{1,3})?",
        role in prop_oneof![Just("reference"), Just("target"), Just("same")],
        sigma in 0.0f64..4.0,
        seed in any::<u64>(),
        metric in "[a-z_]{1,10}",
        index in proptest::option::of(any::<u64>()),
        value in finite(),
    ) -> Row {
        Row { experiment, spec, role: role.into(), sigma, seed, metric, index, value }
    }
}

proptest! {
    #[test]
    fn float_text_parses_back_exactly(v in finite()) {
        prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn csv_round_trips(rows in proptest::collection::vec(row(), 0..20)) {
        let t = table(rows);
        let back = parse_csv(&to_csv(&t)).unwrap();
        prop_assert_eq!(back, t.rows);
    }

    #[test]
    fn median_lies_between_extremes(v in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
        let m = median(&v).unwrap();
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= m && m <= hi);
    }

    #[test]
    fn spearman_is_bounded_and_rank_invariant(
        pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..30)
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Some(r) = spearman(&x, &y) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            // A strictly increasing transform leaves the ranks unchanged.
            let cubed: Vec<f64> = x.iter().map(|v| v * v * v + v).collect();
            let r2 = spearman(&cubed, &y).unwrap();
            prop_assert!((r - r2).abs() < 1e-12);
        }
        prop_assert!((spearman(&x, &x).unwrap_or(1.0) - 1.0).abs() < 1e-12);
    }
}
