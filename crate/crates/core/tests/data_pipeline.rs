use chrono::{Datelike, Duration, NaiveDate, Weekday};
use proptest::prelude::*;
use tvmix::data::{
    align_macro, group_by_interval, log_returns, read_grouped_csv, write_grouped_csv, DatedSeries, GroupRule,
    MacroPanel, PriceSeries, Transform,
};
use tvmix::model::IntervalSeries;

fn weekdays(from: NaiveDate, to: NaiveDate) -> Vec<NaiveDate> {
    let mut out = Vec::new();
    let mut d = from;
    while d <= to {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

#[test]
fn weekly_quarter_century_gives_one_interval_per_year() {
    let start = NaiveDate::from_ymd_opt(1990, 1, 1).unwrap();
    let dates: Vec<NaiveDate> = (0..).map(|w| start + Duration::weeks(w)).take_while(|d| d.year() <= 2014).collect();
    let prices: Vec<f64> = (0..dates.len()).map(|i| 50.0 + (i as f64 * 0.1).sin()).collect();
    let r = log_returns(&PriceSeries::new(dates, prices).unwrap()).unwrap();
    let g = group_by_interval(&r, GroupRule::Year).unwrap();
    assert_eq!(g.series.k(), 25);
    assert_eq!(g.series.labels()[0], "1990");
    assert!(g.notices.is_empty());
}

#[test]
fn daily_months_have_trading_day_counts() {
    let days = weekdays(NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(), NaiveDate::from_ymd_opt(2019, 12, 31).unwrap());
    let s = DatedSeries { values: vec![0.0; days.len()], dates: days };
    let g = group_by_interval(&s, GroupRule::Month).unwrap();
    assert_eq!(g.series.k(), 12);
    // Weekday counts per month, independent of the grouping code.
    for (label, n) in g.series.labels().iter().zip(g.series.sizes()) {
        let month: u32 = label[5..].parse().unwrap();
        let first = NaiveDate::from_ymd_opt(2019, month, 1).unwrap();
        let next = if month == 12 { NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() } else { NaiveDate::from_ymd_opt(2019, month + 1, 1).unwrap() };
        let expected = (0..(next - first).num_days())
            .filter(|o| !matches!((first + Duration::days(*o)).weekday(), Weekday::Sat | Weekday::Sun))
            .count();
        assert_eq!(n, expected, "{label}");
        assert!((20..=23).contains(&n));
    }
}

proptest! {
    #[test]
    fn prices_rebuild_from_returns(prices in proptest::collection::vec(0.01..1e4f64, 2..200)) {
        let start = NaiveDate::from_ymd_opt(2000, 1, 3).unwrap();
        let dates = (0..prices.len() as i64).map(|i| start + Duration::weeks(i)).collect();
        let r = log_returns(&PriceSeries::new(dates, prices.clone()).unwrap()).unwrap();
        let mut acc = 0.0;
        for (i, v) in r.values.iter().enumerate() {
            acc += v;
            let rebuilt = prices[0] * acc.exp();
            prop_assert!(((rebuilt - prices[i + 1]) / prices[i + 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn grouped_csv_round_trip_is_byte_stable(
        groups in proptest::collection::vec(proptest::collection::vec(-1e3..1e3f64, 1..20), 1..10)
    ) {
        let labels = (0..groups.len()).map(|i| format!("{}", 1990 + i)).collect();
        let series = IntervalSeries::new(groups, labels).unwrap();
        let mut first = Vec::new();
        write_grouped_csv(&series, &mut first).unwrap();
        let back = read_grouped_csv(first.as_slice()).unwrap();
        let mut second = Vec::new();
        write_grouped_csv(&back, &mut second).unwrap();
        prop_assert_eq!(&first, &second);
        prop_assert_eq!(read_grouped_csv(second.as_slice()).unwrap(), back.clone());
        prop_assert_eq!(back.labels(), series.labels());
        for (a, b) in back.flatten().iter().zip(series.flatten()) {
            prop_assert!((a - b).abs() <= 1e-14 * b.abs());
        }
    }
}

#[test]
fn linear_ramp_differences_to_a_constant() {
    let months: Vec<String> = (1..=12).map(|m| format!("2010-{m:02}")).collect();
    let refs: Vec<&str> = months.iter().map(String::as_str).collect();
    let panel = MacroPanel::new(&refs, vec!["cpi".into()], (0..12).map(|i| vec![200.0 + 0.4 * i as f64]).collect()).unwrap();
    let series = IntervalSeries::new(vec![vec![0.0]; 11], months[1..].to_vec()).unwrap();
    let al = align_macro(&series, &panel, &[Transform::FirstDifference]).unwrap();
    assert!(al.x.column(0).iter().all(|v| (v - 0.4).abs() < 1e-12));
}

#[test]
fn collinear_pair_is_flagged() {
    let months: Vec<String> = (1..=24).map(|m| format!("{}-{:02}", 2000 + (m - 1) / 12, (m - 1) % 12 + 1)).collect();
    let refs: Vec<&str> = months.iter().map(String::as_str).collect();
    // Correlation 0.97 by construction: b = a + noise with matched variance ratio.
    let a: Vec<f64> = (0..24).map(|i| (i as f64 * 0.9).sin()).collect();
    let noise: Vec<f64> = (0..24).map(|i| (i as f64 * 2.3 + 1.0).cos()).collect();
    let b: Vec<f64> = a.iter().zip(&noise).map(|(x, e)| x + 0.25 * e).collect();
    let rows = a.iter().zip(&b).map(|(x, y)| vec![*x, *y]).collect();
    let panel = MacroPanel::new(&refs, vec!["cpi".into(), "ppi".into()], rows).unwrap();
    let series = IntervalSeries::new(vec![vec![0.0]; 24], months.clone()).unwrap();
    let al = align_macro(&series, &panel, &[Transform::Level, Transform::Level]).unwrap();
    assert!(al.correlation[0][1] > 0.95, "{}", al.correlation[0][1]);
    assert_eq!(al.warnings.len(), 1);
    assert!(al.warnings[0].contains("cpi") && al.warnings[0].contains("ppi"));
}

#[test]
fn missing_panel_month_is_named() {
    let months = ["2009-01", "2009-02"];
    let panel = MacroPanel::new(&months, vec!["u".into()], vec![vec![1.0], vec![2.0]]).unwrap();
    let series = IntervalSeries::new(vec![vec![0.0]; 2], vec!["2009-02".into(), "2009-03".into()]).unwrap();
    let e = align_macro(&series, &panel, &[Transform::Level]).unwrap_err();
    assert!(e.to_string().contains("2009-03"), "{e}");
}
