use proptest::prelude::*;

use wfp_market::report::{format_number, from_csv, plotted_series, to_csv, to_svg};
use wfp_market::scenario::{presets, run, StepRecord, TimeSeries};
use wfp_market::Execution;

/// Nine significant digits bound the relative rounding error by 5e-9.
const ROUND_TRIP_REL: f64 = 5e-9;

fn numbers(r: &StepRecord) -> [f64; 13] {
    [
        r.level,
        r.wfp_price,
        r.isp_price,
        r.final_price,
        r.bandwidth,
        r.r_total,
        r.r_w,
        r.r_i,
        r.phi_w,
        r.phi_i,
        r.wfp_share,
        r.isp_share,
        r.mean_utility,
    ]
}

fn assert_round_trip(ts: &TimeSeries) {
    let text = to_csv(ts);
    let back = from_csv(&ts.name, &text).unwrap();
    assert_eq!(back.len(), ts.len());
    for (a, b) in ts.records.iter().zip(&back.records) {
        assert_eq!(
            (&a.series, a.step, a.users, a.converged),
            (&b.series, b.step, b.users, b.converged)
        );
        for (x, y) in numbers(a).into_iter().zip(numbers(b)) {
            assert!((x - y).abs() <= ROUND_TRIP_REL * x.abs(), "{x} vs {y}");
        }
    }
    assert_eq!(to_csv(&back), text);
}

#[test]
fn preset_csv_round_trips() {
    for name in presets::names() {
        assert_round_trip(&run(&presets::load(name).unwrap(), Execution::Parallel).unwrap());
    }
}

#[test]
fn header_is_the_field_list() {
    let ts = run(&presets::load("iwfp-ceiling").unwrap(), Execution::Parallel).unwrap();
    let csv = to_csv(&ts);
    assert_eq!(csv.lines().next().unwrap(), StepRecord::COLUMNS.join(","));
    assert_eq!(csv.lines().count(), ts.len() + 1);
}

#[test]
fn malformed_csv_is_rejected() {
    assert!(from_csv("x", "").is_err());
    assert!(from_csv("x", "a,b\n1,2\n").is_err());
    let header = StepRecord::COLUMNS.join(",");
    assert!(from_csv("x", &format!("{header}\ns,0,1,zero,0,0,0,0,0,0,0,0,0,0,0,0,true\n")).is_err());
}

#[test]
fn svg_is_well_formed_with_one_polyline_per_series() {
    for name in presets::names() {
        let ts = run(&presets::load(name).unwrap(), Execution::Parallel).unwrap();
        let svg = to_svg(&ts);
        let doc = roxmltree::Document::parse(&svg).unwrap_or_else(|e| panic!("{name}: {e}"));
        let polylines = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
        assert_eq!(polylines, plotted_series(&ts), "{name}");
    }
}

#[test]
fn svg_escapes_series_names() {
    let mut ts = TimeSeries::new("a<b>&\"c\"");
    ts.records.push(StepRecord {
        series: "x&y".into(),
        step: 0,
        users: 1,
        level: 0.0,
        wfp_price: 1.0,
        isp_price: 1.0,
        final_price: 1.0,
        bandwidth: 1.0,
        r_total: 1.0,
        r_w: 0.0,
        r_i: 1.0,
        phi_w: 0.0,
        phi_i: 1.0,
        wfp_share: 0.0,
        isp_share: 100.0,
        mean_utility: 0.0,
        converged: true,
    });
    roxmltree::Document::parse(&to_svg(&ts)).unwrap();
    assert_round_trip(&ts);
}

proptest! {
    #[test]
    fn formatted_numbers_parse_back_closely(v in prop::num::f64::NORMAL) {
        let back: f64 = format_number(v).parse().unwrap();
        prop_assert!((back - v).abs() <= ROUND_TRIP_REL * v.abs());
    }

    #[test]
    fn formatting_is_idempotent(v in -1e12..1e12f64) {
        let once = format_number(v);
        let back: f64 = once.parse().unwrap();
        prop_assert_eq!(format_number(back), once);
    }
}
