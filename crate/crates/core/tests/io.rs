mod common;

use gagfit::eb::fit_prior;
use gagfit::io::{emit_json, format_rate_table, write_observed_csv, write_units_csv};
use gagfit::{
    emit_result_json, fit_em, fit_emb, fixtures, parse_observed_csv, parse_result_json, Error,
    FitConfig, ObservedTable, ParsedObserved, ResultDocument,
};
use proptest::prelude::*;

fn sum_column(csv: &str) -> f64 {
    csv.lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum()
}

#[test]
fn fixture_totals() {
    assert_eq!(fixtures::late().total(), 571_348.0);
    assert_eq!(fixtures::early().total(), 406_037.0);
    for (table, text) in [
        (fixtures::late_weighted(), fixtures::LATE_WEIGHTED_CSV),
        (fixtures::early_weighted(), fixtures::EARLY_WEIGHTED_CSV),
    ] {
        assert!((table.total() - sum_column(text)).abs() < 1e-6);
    }
    assert_eq!(fixtures::early_weighted().personal[0], [8.96, 224.36]);
}

#[test]
fn units_round_trip_through_csv() {
    let units = vec![
        (
            "q1".to_string(),
            fixtures::late().map(|v| (v / 3.0).floor()),
        ),
        ("q2".to_string(), fixtures::early()),
    ];
    let parsed = parse_observed_csv(write_units_csv(&units).as_bytes()).unwrap();
    assert_eq!(parsed, ParsedObserved::Units(units.clone()));
    let pooled = parsed.pooled();
    assert_eq!(
        pooled.telephone[4],
        units[0].1.telephone[4] + units[1].1.telephone[4]
    );
    let series = parsed.into_series().unwrap();
    assert_eq!(series.labels(), ["q1", "q2"]);
}

#[test]
fn column_order_is_free() {
    let text: String = std::iter::once("count,spouse,crime,mode".to_string())
        .chain(fixtures::LATE_CSV.lines().skip(1).map(|l| {
            let f: Vec<_> = l.split(',').collect();
            format!("{},{},{},{}", f[3], f[2], f[1], f[0])
        }))
        .collect::<Vec<_>>()
        .join("\n");
    assert_eq!(
        parse_observed_csv(text.as_bytes()).unwrap(),
        ParsedObserved::Single(fixtures::late())
    );
}

#[test]
fn malformed_inputs_are_rejected() {
    let header_only = "mode,crime,spouse,count\n";
    assert!(matches!(
        parse_observed_csv(header_only.as_bytes()),
        Err(Error::MissingCell { .. })
    ));

    let zeros = write_observed_csv(&ObservedTable::zeros());
    assert!(matches!(
        parse_observed_csv(zeros.as_bytes()),
        Err(Error::EmptyTable)
    ));

    let negative =
        fixtures::LATE_CSV.replace("personal,rape,present,9", "personal,rape,present,-1");
    assert!(matches!(
        parse_observed_csv(negative.as_bytes()),
        Err(Error::InvalidRow { line: 2, .. })
    ));

    let bad_number = fixtures::LATE_CSV.replace(",152", ",many");
    assert!(matches!(
        parse_observed_csv(bad_number.as_bytes()),
        Err(Error::BadNumber { line: 3, .. })
    ));

    let bad_spouse = fixtures::LATE_CSV.replace("telephone,rape,na", "telephone,rape,present");
    assert!(matches!(
        parse_observed_csv(bad_spouse.as_bytes()),
        Err(Error::BadEnum {
            field: "spouse",
            ..
        })
    ));

    let bad_header = fixtures::LATE_CSV.replace("count", "n");
    assert!(matches!(
        parse_observed_csv(bad_header.as_bytes()),
        Err(Error::BadHeader { .. })
    ));
}

#[test]
fn result_document_round_trips_and_reports_rates() {
    let config = FitConfig::precise();
    let prior = fit_prior(&fixtures::early(), &config).unwrap();
    let observed = fixtures::late();
    let fit = fit_emb(&observed, &prior, &config).unwrap();
    let doc = ResultDocument::from_fit(&fit, Some(&observed), Some(&prior), "0.0.0", "abc");
    let bytes = emit_result_json(&doc).unwrap();
    assert_eq!(parse_result_json(&bytes).unwrap(), doc);
    assert!(bytes.ends_with(b"}\n"));
    assert!((doc.rates.rape - 1.35).abs() < 0.01);

    let table = format_rate_table(&doc);
    assert!(table.contains("Fitted (EMB)"));
    let rape_line = table.lines().find(|l| l.starts_with("rape")).unwrap();
    assert!(rape_line.ends_with("1.35"), "{rape_line}");
}

#[test]
fn non_finite_numbers_are_refused_with_a_path() {
    let fit = fit_em(&fixtures::early(), &FitConfig::precise()).unwrap();
    let mut doc = ResultDocument::from_fit(&fit, None, None, "0.0.0", "abc");
    doc.params.omega[2][1] = f64::NAN;
    match emit_json(&doc) {
        Err(Error::NonFiniteResult(path)) => assert_eq!(path, "params.omega[2][1]"),
        other => panic!("unexpected {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn observed_csv_round_trip(t in common::observed_table()) {
        let back = parse_observed_csv(write_observed_csv(&t).as_bytes()).unwrap();
        prop_assert_eq!(back, ParsedObserved::Single(t));
    }

    #[test]
    fn result_json_round_trip(t in common::observed_table()) {
        let config = FitConfig { max_iterations: 50, ..FitConfig::default() };
        let fit = gagfit::run_fit(&t, None, &config).unwrap();
        let doc = ResultDocument::from_fit(&fit, Some(&t), None, "0.0.0", "digest");
        let back = parse_result_json(&emit_result_json(&doc).unwrap()).unwrap();
        let (a, b) = (&doc.params, &back.params);
        prop_assert!((a.pi - b.pi).abs() <= 1e-12 && (a.tau - b.tau).abs() <= 1e-12);
        for (ra, rb) in a.omega.iter().zip(&b.omega) {
            for (x, y) in ra.iter().zip(rb) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
        prop_assert_eq!(back, doc);
    }
}
