//! Deterministic SVG charts of report series.
//!
//! Line charts draw one color per report (or per call with a breakdown): a
//! shaded band from min to max when both are requested, and a line for every
//! other statistic. Bar charts draw one bar per series and statistic in each
//! range-value group.

use std::fmt::Write;

use thiserror::Error;

use crate::report::{
    breakdown, format_value, series, MachineSpec, Metric, Query, Report, ReportError, Series,
    Statistic,
};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Bar,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlotSpec {
    pub metric: Metric,
    pub stats: Vec<Statistic>,
    pub discard_first: bool,
    /// `None` picks lines for ranged reports and bars otherwise.
    pub style: Option<Style>,
    pub breakdown: bool,
}

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("nothing to plot: {0}")]
    Empty(String),
    #[error("line plots need ranged reports; `{0}` has no range")]
    Style(String),
    #[error(transparent)]
    Report(#[from] ReportError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlotOutput {
    pub svg: String,
    /// The plotted values as `label,metric,statistic,range-value,value`.
    pub sidecar: String,
}

struct Group {
    label: String,
    series: Vec<Series>,
}

fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Tick step of 1, 2, or 5 times a power of ten giving about five ticks.
fn nice_step(span: f64) -> f64 {
    if span <= 0.0 || !span.is_finite() {
        return 1.0;
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    mag * if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    }
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e6).contains(&a) {
        return format!("{v:.1e}");
    }
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn emit_plot(
    spec: &PlotSpec,
    reports: &[(&str, &Report)],
    machine: &MachineSpec,
) -> Result<PlotOutput, PlotError> {
    if reports.is_empty() {
        return Err(PlotError::Empty("no reports".into()));
    }
    if spec.stats.is_empty() {
        return Err(PlotError::Empty("no statistics".into()));
    }
    let style = match spec.style {
        Some(s) => s,
        None if reports.iter().all(|(_, r)| r.is_ranged()) => Style::Line,
        None => Style::Bar,
    };
    if style == Style::Line {
        if let Some((label, _)) = reports.iter().find(|(_, r)| !r.is_ranged()) {
            return Err(PlotError::Style(label.to_string()));
        }
    }
    let mut stats = spec.stats.clone();
    stats.sort();
    stats.dedup();
    let mut groups = Vec::new();
    for (label, r) in reports {
        let mut per_stat: Vec<Vec<Series>> = Vec::new();
        for &statistic in &stats {
            let q = Query {
                metric: spec.metric,
                statistic,
                discard_first: spec.discard_first,
            };
            per_stat.push(if spec.breakdown {
                breakdown(r, q, machine)?
            } else {
                vec![series(r, q, machine)?]
            });
        }
        let parts = per_stat[0].len();
        for p in 0..parts {
            let name = if spec.breakdown {
                if reports.len() > 1 {
                    format!("{label}: {}", per_stat[0][p].label)
                } else {
                    per_stat[0][p].label.clone()
                }
            } else {
                label.to_string()
            };
            groups.push(Group {
                label: name,
                series: per_stat.iter().map(|s| s[p].clone()).collect(),
            });
        }
    }

    let xlabel = reports[0].1.range_var().unwrap_or("").to_string();
    let mut svg = String::new();
    let w = |svg: &mut String, args: std::fmt::Arguments<'_>| {
        svg.write_fmt(args).expect("writing to a String");
        svg.push('\n');
    };
    w(
        &mut svg,
        format_args!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
        ),
    );
    w(
        &mut svg,
        format_args!("<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"),
    );

    let ys: Vec<f64> = groups
        .iter()
        .flat_map(|g| &g.series)
        .flat_map(|s| &s.points)
        .filter_map(|p| p.y)
        .collect();
    let ymax = ys.iter().copied().fold(0.0, f64::max);
    let ymin = ys.iter().copied().fold(0.0, f64::min);
    let ystep = nice_step(ymax - ymin);
    let (y0, y1) = (
        (ymin / ystep).floor() * ystep,
        ((ymax / ystep).ceil() * ystep).max(ystep),
    );
    let (px0, px1, py0, py1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let sy = |v: f64| py0 + (v - y0) / (y1 - y0) * (py1 - py0);

    // Axes and horizontal grid.
    let mut t = y0;
    while t <= y1 + ystep * 1e-9 {
        let y = num(sy(t));
        w(
            &mut svg,
            format_args!(
                "<line x1=\"{px0}\" y1=\"{y}\" x2=\"{px1}\" y2=\"{y}\" stroke=\"#dddddd\"/>"
            ),
        );
        w(
            &mut svg,
            format_args!(
                "<text x=\"{}\" y=\"{y}\" text-anchor=\"end\" dy=\"4\">{}</text>",
                num(px0 - 6.0),
                tick_label(t)
            ),
        );
        t += ystep;
    }
    w(
        &mut svg,
        format_args!(
            "<line x1=\"{px0}\" y1=\"{py0}\" x2=\"{px1}\" y2=\"{py0}\" stroke=\"black\"/>"
        ),
    );
    w(
        &mut svg,
        format_args!(
            "<line x1=\"{px0}\" y1=\"{py0}\" x2=\"{px0}\" y2=\"{py1}\" stroke=\"black\"/>"
        ),
    );
    w(
        &mut svg,
        format_args!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" class=\"xlabel\">{}</text>",
            num((px0 + px1) / 2.0),
            num(HEIGHT - 15.0),
            escape(&xlabel)
        ),
    );
    w(
        &mut svg,
        format_args!(
            "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\" class=\"ylabel\">{}</text>",
            num((py0 + py1) / 2.0),
            num((py0 + py1) / 2.0),
            escape(&spec.metric.label())
        ),
    );

    match style {
        Style::Line => draw_lines(&mut svg, &groups, (px0, px1), &sy),
        Style::Bar => draw_bars(&mut svg, &groups, (px0, px1), &sy, py0),
    }

    // Legend.
    for (gi, g) in groups.iter().enumerate() {
        let y = TOP + 10.0 + gi as f64 * 18.0;
        let x = WIDTH - RIGHT + 15.0;
        w(
            &mut svg,
            format_args!(
                "<rect x=\"{}\" y=\"{}\" width=\"14\" height=\"10\" fill=\"{}\" class=\"legend\"/>",
                num(x),
                num(y - 9.0),
                COLORS[gi % COLORS.len()]
            ),
        );
        w(
            &mut svg,
            format_args!(
                "<text x=\"{}\" y=\"{}\">{}</text>",
                num(x + 20.0),
                num(y),
                escape(&g.label)
            ),
        );
    }
    let stat_names: Vec<String> = stats.iter().map(ToString::to_string).collect();
    w(
        &mut svg,
        format_args!(
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" fill=\"#555555\">{}</text>",
            num(WIDTH - RIGHT + 15.0),
            num(TOP + 20.0 + groups.len() as f64 * 18.0),
            escape(&stat_names.join(", "))
        ),
    );
    svg.push_str("</svg>\n");

    let mut sidecar = String::from("label,metric,statistic,range-value,value\n");
    for g in &groups {
        for s in &g.series {
            for p in &s.points {
                let x = p.x.map(|x| x.to_string()).unwrap_or_default();
                writeln!(
                    sidecar,
                    "{},{},{},{x},{}",
                    g.label.replace(',', ";"),
                    s.metric,
                    s.statistic,
                    format_value(p.y)
                )
                .expect("writing to a String");
            }
        }
    }
    Ok(PlotOutput { svg, sidecar })
}

fn dash(stat: Statistic) -> &'static str {
    match stat {
        Statistic::Median => "",
        Statistic::Mean => " stroke-dasharray=\"6 3\"",
        Statistic::Std => " stroke-dasharray=\"2 3\"",
        Statistic::Min | Statistic::Max => " stroke-dasharray=\"1 2\"",
    }
}

fn draw_lines(svg: &mut String, groups: &[Group], (px0, px1): (f64, f64), sy: &dyn Fn(f64) -> f64) {
    let xs: Vec<i64> = groups
        .iter()
        .flat_map(|g| &g.series)
        .flat_map(|s| &s.points)
        .filter_map(|p| p.x)
        .collect();
    let (xmin, xmax) = (
        xs.iter().copied().min().unwrap_or(0),
        xs.iter().copied().max().unwrap_or(1),
    );
    let (x0, x1) = if xmin == xmax {
        (xmin as f64 - 1.0, xmax as f64 + 1.0)
    } else {
        (xmin as f64, xmax as f64)
    };
    let sx = |v: i64| px0 + (v as f64 - x0) / (x1 - x0) * (px1 - px0);

    let mut ticks: Vec<i64> = xs.clone();
    ticks.sort_unstable();
    ticks.dedup();
    if ticks.len() > 10 {
        let step = nice_step(x1 - x0);
        let first = (x0 / step).ceil() as i64;
        let last = (x1 / step).floor() as i64;
        ticks = (first..=last)
            .map(|k| (k as f64 * step).round() as i64)
            .collect();
    }
    for t in ticks {
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{t}</text>",
            num(sx(t)),
            num(HEIGHT - BOTTOM + 18.0)
        );
    }

    for (gi, g) in groups.iter().enumerate() {
        let color = COLORS[gi % COLORS.len()];
        let find = |s: Statistic| g.series.iter().find(|x| x.statistic == s);
        let band = match (find(Statistic::Min), find(Statistic::Max)) {
            (Some(lo), Some(hi)) => Some((lo, hi)),
            _ => None,
        };
        if let Some((lo, hi)) = band {
            // One polygon per run of points where both bounds exist.
            let mut run: Vec<(i64, f64, f64)> = Vec::new();
            let mut flush = |run: &mut Vec<(i64, f64, f64)>| {
                if run.len() >= 2 {
                    let mut pts: Vec<String> = run
                        .iter()
                        .map(|&(x, _, h)| format!("{},{}", num(sx(x)), num(sy(h))))
                        .collect();
                    pts.extend(
                        run.iter()
                            .rev()
                            .map(|&(x, l, _)| format!("{},{}", num(sx(x)), num(sy(l)))),
                    );
                    let _ = writeln!(
                        svg,
                        "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.2\" stroke=\"none\" class=\"envelope\"/>",
                        pts.join(" ")
                    );
                }
                run.clear();
            };
            for (a, b) in lo.points.iter().zip(&hi.points) {
                match (a.x, a.y, b.y) {
                    (Some(x), Some(l), Some(h)) => run.push((x, l, h)),
                    _ => flush(&mut run),
                }
            }
            flush(&mut run);
        }
        for s in &g.series {
            if band.is_some() && matches!(s.statistic, Statistic::Min | Statistic::Max) {
                continue;
            }
            let mut d = String::new();
            let mut pen_down = false;
            for p in &s.points {
                match (p.x, p.y) {
                    (Some(x), Some(y)) => {
                        let _ = write!(
                            d,
                            "{}{},{} ",
                            if pen_down { "L" } else { "M" },
                            num(sx(x)),
                            num(sy(y))
                        );
                        pen_down = true;
                    }
                    _ => pen_down = false,
                }
            }
            let _ = writeln!(
                svg,
                "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"{} class=\"line {}\"/>",
                d.trim_end(),
                dash(s.statistic),
                s.statistic
            );
            for p in &s.points {
                if let (Some(x), Some(y)) = (p.x, p.y) {
                    let _ = writeln!(
                        svg,
                        "<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"{color}\"/>",
                        num(sx(x)),
                        num(sy(y))
                    );
                }
            }
        }
    }
}

fn draw_bars(
    svg: &mut String,
    groups: &[Group],
    (px0, px1): (f64, f64),
    sy: &dyn Fn(f64) -> f64,
    base: f64,
) {
    let npoints = groups
        .iter()
        .flat_map(|g| &g.series)
        .map(|s| s.points.len())
        .max()
        .unwrap_or(0)
        .max(1);
    let bars_per_slot: usize = groups.iter().map(|g| g.series.len()).sum::<usize>().max(1);
    let slot = (px1 - px0) / npoints as f64;
    let bar = slot * 0.8 / bars_per_slot as f64;
    for pi in 0..npoints {
        let left = px0 + slot * pi as f64 + slot * 0.1;
        let x = groups
            .iter()
            .flat_map(|g| &g.series)
            .find_map(|s| s.points.get(pi).and_then(|p| p.x));
        if let Some(x) = x {
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x}</text>",
                num(left + slot * 0.4),
                num(HEIGHT - BOTTOM + 18.0)
            );
        }
        let mut k = 0;
        for (gi, g) in groups.iter().enumerate() {
            let color = COLORS[gi % COLORS.len()];
            for s in &g.series {
                let bx = left + bar * k as f64;
                k += 1;
                let Some(y) = s.points.get(pi).and_then(|p| p.y) else {
                    continue;
                };
                let top = sy(y).min(base);
                let h = (base - sy(y)).abs();
                let _ = writeln!(
                    svg,
                    "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{color}\" class=\"bar {}\"/>",
                    num(bx),
                    num(top),
                    num(bar * 0.9),
                    num(h),
                    s.statistic
                );
                if x.is_none() {
                    let _ = writeln!(
                        svg,
                        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"10\">{}</text>",
                        num(bx + bar * 0.45),
                        num(HEIGHT - BOTTOM + 18.0),
                        s.statistic
                    );
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{deserialize, serialize, HEADER};
    use crate::report::parse_report;

    fn report(body: &str, lines: &[u64]) -> Report {
        let exp = deserialize(&format!("{HEADER}\n{body}")).unwrap();
        let mut text = serialize(&exp);
        text.push_str("%%%\ntimer: tsc\ncounters-available: none\nsegment: nthreads=1\n");
        for l in lines {
            text.push_str(&format!("{l}\n"));
        }
        parse_report(&text).unwrap()
    }

    fn spec(stats: &[Statistic], style: Option<Style>) -> PlotSpec {
        PlotSpec {
            metric: Metric::Gflops,
            stats: stats.to_vec(),
            discard_first: true,
            style,
            breakdown: false,
        }
    }

    const RANGED: &str = "range: n 10:10:40\nnreps: 3\ncall: daxpy n 1 x 1 y 1\n";

    #[test]
    fn envelope_and_median() {
        let r = report(RANGED, &[9, 10, 12, 9, 20, 22, 9, 30, 33, 9, 40, 44]);
        let out = emit_plot(
            &spec(&[Statistic::Min, Statistic::Median, Statistic::Max], None),
            &[("r", &r)],
            &MachineSpec::default(),
        )
        .unwrap();
        assert!(out.svg.contains("class=\"envelope\""));
        assert!(out.svg.contains("class=\"line median\""));
        assert!(out.svg.contains(">n</text>"));
        assert!(out.svg.contains(">Gflops/s</text>"));
        assert_eq!(out.svg.matches("class=\"legend\"").count(), 1);
        assert_eq!(out.sidecar.lines().count(), 1 + 3 * 4);
        let again = emit_plot(
            &spec(&[Statistic::Max, Statistic::Median, Statistic::Min], None),
            &[("r", &r)],
            &MachineSpec::default(),
        )
        .unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn unranged_bars_and_style_errors() {
        let r = report("nreps: 4\ncall: daxpy 100 1 x 1 y 1\n", &[50, 10, 11, 12]);
        let stats = [Statistic::Min, Statistic::Median, Statistic::Max];
        let out = emit_plot(&spec(&stats, None), &[("r", &r)], &MachineSpec::default()).unwrap();
        assert_eq!(out.svg.matches("class=\"bar ").count(), 3);
        assert!(matches!(
            emit_plot(
                &spec(&stats, Some(Style::Line)),
                &[("r", &r)],
                &MachineSpec::default()
            ),
            Err(PlotError::Style(_))
        ));
    }

    #[test]
    fn overlays_get_legend_entries() {
        let a = report(RANGED, &[1; 12]);
        let b = report(RANGED, &[2; 12]);
        let out = emit_plot(
            &spec(&[Statistic::Median], None),
            &[("fixed", &a), ("varying", &b)],
            &MachineSpec::default(),
        )
        .unwrap();
        assert_eq!(out.svg.matches("class=\"legend\"").count(), 2);
        assert!(out.svg.contains(">fixed</text>") && out.svg.contains(">varying</text>"));
    }

    #[test]
    fn breakdown_series() {
        let body = "nreps: 2\ncall: dgetrf 50 50 A 50\ncall: dtrsm L L N U 50 5 1 A 50 B 50\ncall: dtrsm L U N N 50 5 1 A 50 B 50\n";
        let r = report(body, &[5, 6, 7, 8, 9, 10]);
        let mut s = spec(&[Statistic::Median], None);
        s.breakdown = true;
        s.metric = Metric::Cycles;
        let out = emit_plot(&s, &[("lu", &r)], &MachineSpec::default()).unwrap();
        assert_eq!(out.svg.matches("class=\"legend\"").count(), 4);
        assert!(out.svg.contains(">total</text>"));
    }

    #[test]
    fn ticks() {
        assert_eq!(nice_step(10.0), 2.0);
        assert_eq!(nice_step(0.9), 0.2);
        assert_eq!(tick_label(0.25), "0.25");
        assert_eq!(tick_label(2e9), "2.0e9");
    }
}
