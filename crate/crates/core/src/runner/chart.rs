use std::fmt::Write;

use crate::classifiers::ClassifierKind;
use crate::evaluation::MetricReport;
use crate::features::VariableSet;

const COLORS: [&str; 5] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3"];
const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 260.0;
const MARGIN: f64 = 50.0;

/// Grouped bar chart of mean A1 and A2 per classifier and variable set,
/// with one-sd whiskers. Output depends only on the report.
pub fn render_svg(report: &MetricReport) -> String {
    let kinds: Vec<ClassifierKind> =
        ClassifierKind::ALL.into_iter().filter(|k| report.rows.iter().any(|r| r.classifier == *k)).collect();
    let sets: Vec<VariableSet> =
        VariableSet::ALL.into_iter().filter(|s| report.rows.iter().any(|r| r.variable_set == *s)).collect();
    let width = 2.0 * PANEL_W + 3.0 * MARGIN;
    let height = PANEL_H + 2.0 * MARGIN + 20.0 * sets.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    for (p, metric) in ["A1", "A2"].into_iter().enumerate() {
        let x0 = MARGIN + p as f64 * (PANEL_W + MARGIN);
        let y0 = MARGIN;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="13">{metric}</text>"#, x0, y0 - 10.0);
        for tick in 0..=4 {
            let v = tick as f64 * 0.25;
            let y = y0 + PANEL_H * (1.0 - v);
            let _ = writeln!(
                s,
                r##"<line x1="{x0:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{:.0}%</text>"##,
                x0 + PANEL_W,
                x0 - 4.0,
                y + 4.0,
                v * 100.0
            );
        }
        let group_w = PANEL_W / kinds.len().max(1) as f64;
        let bar_w = group_w * 0.8 / sets.len().max(1) as f64;
        for (g, kind) in kinds.iter().enumerate() {
            let gx = x0 + g as f64 * group_w + group_w * 0.1;
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                gx + group_w * 0.4,
                y0 + PANEL_H + 16.0,
                kind.label()
            );
            for (b, set) in sets.iter().enumerate() {
                let Some(row) = report.row(*kind, *set) else { continue };
                let (mean, sd) = if p == 0 { (row.a1_mean, row.a1_sd) } else { (row.a2_mean, row.a2_sd) };
                if !mean.is_finite() {
                    continue;
                }
                let x = gx + b as f64 * bar_w;
                let h = PANEL_H * mean.clamp(0.0, 1.0);
                let _ = writeln!(
                    s,
                    r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{}"><title>{set} {kind} {metric} {mean:.4}</title></rect>"#,
                    y0 + PANEL_H - h,
                    bar_w * 0.9,
                    COLORS[b % COLORS.len()]
                );
                if sd.is_finite() && sd > 0.0 {
                    let cx = x + bar_w * 0.45;
                    let lo = y0 + PANEL_H * (1.0 - (mean - sd).clamp(0.0, 1.0));
                    let hi = y0 + PANEL_H * (1.0 - (mean + sd).clamp(0.0, 1.0));
                    let _ = writeln!(s, r##"<line x1="{cx:.1}" y1="{lo:.1}" x2="{cx:.1}" y2="{hi:.1}" stroke="#222"/>"##);
                }
            }
        }
    }
    for (b, set) in sets.iter().enumerate() {
        let y = MARGIN + PANEL_H + 34.0 + 20.0 * b as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN:.1}" y="{:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{y:.1}">{set}</text>"#,
            y - 10.0,
            COLORS[b % COLORS.len()],
            MARGIN + 18.0
        );
    }
    s.push_str("</svg>\n");
    s
}
