//! CSV and SVG output for [`TimeSeries`].

use std::fmt::Write as _;

use crate::error::{MarketError, Result};
use crate::scenario::{StepRecord, TimeSeries};

/// Significant digits of every number written to CSV.
pub const SIGNIFICANT_DIGITS: usize = 9;

/// Plain decimal rendering of `v` rounded to [`SIGNIFICANT_DIGITS`].
pub fn format_number(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let point = exp + 1;
    let mut out = String::from(sign);
    if point <= 0 {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-point) as usize));
        out.push_str(&digits);
    } else if point as usize >= digits.len() {
        out.push_str(&digits);
        out.extend(std::iter::repeat_n('0', point as usize - digits.len()));
    } else {
        let (int, frac) = digits.split_at(point as usize);
        out.push_str(int);
        out.push('.');
        out.push_str(frac);
    }
    if out.contains('.') {
        let trimmed = out.trim_end_matches('0').trim_end_matches('.');
        out = trimmed.to_string();
    }
    out
}

fn csv_error(e: csv::Error) -> MarketError {
    MarketError::Parse(e.to_string())
}

pub fn to_csv(series: &TimeSeries) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(StepRecord::COLUMNS).expect("in-memory write");
    for r in &series.records {
        let nums = [
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
        ];
        let mut row = vec![r.series.clone(), r.step.to_string(), r.users.to_string()];
        row.extend(nums.into_iter().map(format_number));
        row.push(r.converged.to_string());
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Parses CSV written by [`to_csv`].
pub fn from_csv(name: &str, text: &str) -> Result<TimeSeries> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_error)?;
    if header.iter().ne(StepRecord::COLUMNS) {
        return Err(MarketError::Parse(format!(
            "unexpected header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let records = rdr
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_error)?;
    Ok(TimeSeries {
        name: name.to_string(),
        records,
    })
}

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 220.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

struct Panel {
    title: &'static str,
    lines: Vec<(String, Vec<(f64, f64)>)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn draw_panel(out: &mut String, panel: &Panel, top: f64) {
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = PANEL_HEIGHT - 60.0;
    let y0 = top + 30.0;
    let points = || panel.lines.iter().flat_map(|(_, p)| p.iter());
    let (x_lo, x_hi) = bounds(points().map(|p| p.0));
    let (y_lo, y_hi) = bounds(points().map(|p| p.1));
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| y0 + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h;

    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="{:.1}" font-size="14">{}</text>"#,
        top + 20.0,
        escape(panel.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{y0:.1}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="#888"/>"##
    );
    let _ = writeln!(
        out,
        r#"<text x="4" y="{:.1}" font-size="10">{}</text><text x="4" y="{:.1}" font-size="10">{}</text>"#,
        y0 + 10.0,
        format_number(y_hi),
        y0 + plot_h,
        format_number(y_lo)
    );
    for (i, (label, pts)) in panel.lines.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
            coords.join(" "),
            escape(label)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" fill="{color}">{}</text>"#,
            WIDTH - MARGIN + 4.0,
            y0 + 12.0 * (i as f64 + 1.0),
            escape(label)
        );
    }
}

/// Three stacked line charts against the step index: revenue shares,
/// final price, and mean user utility. One polyline per series and quantity.
pub fn to_svg(series: &TimeSeries) -> String {
    let groups = series.by_series();
    let line = |f: fn(&StepRecord) -> f64, suffix: &str| -> Vec<(String, Vec<(f64, f64)>)> {
        groups
            .iter()
            .map(|(name, rs)| {
                let label = if suffix.is_empty() {
                    name.clone()
                } else {
                    format!("{name} {suffix}")
                };
                (label, rs.iter().map(|r| (r.step as f64, f(r))).collect())
            })
            .collect()
    };
    let mut shares = line(|r| r.wfp_share, "wfp %");
    shares.extend(line(|r| r.isp_share, "isp %"));
    let panels = [
        Panel {
            title: "Revenue share (%) vs step",
            lines: shares,
        },
        Panel {
            title: "Final price vs step",
            lines: line(|r| r.final_price, ""),
        },
        Panel {
            title: "Mean user utility vs step",
            lines: line(|r| r.mean_utility, ""),
        },
    ];
    let height = PANEL_HEIGHT * panels.len() as f64 + 30.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="20" font-size="16">{}</text>"#,
        escape(&series.name)
    );
    for (i, panel) in panels.iter().enumerate() {
        draw_panel(&mut out, panel, 30.0 + i as f64 * PANEL_HEIGHT);
    }
    out.push_str("</svg>\n");
    out
}

/// Number of polylines [`to_svg`] draws for `series`.
pub fn plotted_series(series: &TimeSeries) -> usize {
    4 * series.series_names().len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(69.430_812_345_6), "69.4308123");
        assert_eq!(format_number(-0.000_123_456_789_87), "-0.00012345679");
        assert_eq!(format_number(1234567890123.0), "1234567890000");
        assert_eq!(format_number(2.5e-12), "0.0000000000025");
        assert_eq!(format_number(100.0 / 3.0), "33.3333333");
    }
}
