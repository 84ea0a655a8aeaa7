//! Self-contained SVG figures. All numbers are printed with fixed precision
//! so identical inputs give identical bytes.

use std::fmt::Write;

use crate::aggregate::{Heatmap, HeatmapMetric, SummaryRow, CAPACITY_BUCKETS};
use crate::domain::{enumerate_settings, Setting};
use crate::dp::PolicyKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    HeatmapPanel,
    ErrorRatioScatter,
    ObjectiveProfile,
}

const CELL: f64 = 22.0;
const GRID_GAP: f64 = 46.0;
const MARGIN_LEFT: f64 = 48.0;
const MARGIN_TOP: f64 = 70.0;

const LOW_COLOR: (f64, f64, f64) = (247.0, 251.0, 255.0);
const HIGH_COLOR: (f64, f64, f64) = (8.0, 48.0, 107.0);
const EMPTY_COLOR: &str = "#ffffff";

/// Sequential blue scale on `[0, 1]`.
pub fn color_scale(fraction: f64) -> String {
    let f = if fraction.is_finite() {
        fraction.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let lerp = |a: f64, b: f64| (a + (b - a) * f).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(LOW_COLOR.0, HIGH_COLOR.0),
        lerp(LOW_COLOR.1, HIGH_COLOR.1),
        lerp(LOW_COLOR.2, HIGH_COLOR.2)
    )
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn panel_file_name(setting: &Setting, policy: PolicyKind) -> String {
    format!("heatmap_{}_{}.svg", setting.slug(), policy)
}

fn draw_grid(svg: &mut String, heatmap: &Heatmap, x0: f64, y0: f64) {
    let max = heatmap.max_value();
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#,
        x0 + CELL * CAPACITY_BUCKETS as f64 / 2.0,
        y0 - 8.0,
        heatmap.metric.title()
    );
    for t in 1..=heatmap.horizon {
        let y = y0 + (t - 1) as f64 * CELL;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="9" text-anchor="end">{t}</text>"#,
            x0 - 4.0,
            y + CELL * 0.65
        );
        for b in 0..CAPACITY_BUCKETS {
            let cell = heatmap.cell(t, b);
            let fill = if cell.count == 0 {
                EMPTY_COLOR.to_owned()
            } else if max > 0.0 {
                color_scale(cell.value / max)
            } else {
                color_scale(0.0)
            };
            let _ = writeln!(
                svg,
                r##"<rect x="{:.1}" y="{:.1}" width="{CELL:.1}" height="{CELL:.1}" fill="{fill}" stroke="#d0d0d0" stroke-width="0.5"><title>t={t} {}-{}%: {:.4} (n={})</title></rect>"##,
                x0 + b as f64 * CELL,
                y,
                b * 10,
                (b + 1) * 10,
                cell.value,
                cell.count
            );
        }
    }
    let y_axis = y0 + heatmap.horizon as f64 * CELL;
    for b in (0..=CAPACITY_BUCKETS).step_by(2) {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="8" text-anchor="middle">{}</text>"#,
            x0 + b as f64 * CELL,
            y_axis + 11.0,
            b * 10
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="9" text-anchor="middle">capacity consumption (%) | max {:.3}</text>"#,
        x0 + CELL * CAPACITY_BUCKETS as f64 / 2.0,
        y_axis + 24.0,
        max
    );
}

/// Five sub-grids (errors, regrets, decision rate); epoch 1 at the top.
pub fn render_heatmap_panel(setting: &Setting, policy: PolicyKind, heatmaps: &[Heatmap]) -> String {
    let horizon = heatmaps.iter().map(|h| h.horizon).max().unwrap_or(0);
    let grid_w = CELL * CAPACITY_BUCKETS as f64;
    let width = MARGIN_LEFT + HeatmapMetric::ALL.len() as f64 * (grid_w + GRID_GAP);
    let height = MARGIN_TOP + horizon as f64 * CELL + 50.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN_LEFT:.1}" y="22" font-size="15">{}</text>"#,
        escape(&setting.label())
    );
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN_LEFT:.1}" y="40" font-size="11">policy: {policy} | y: decision epoch | x: capacity consumption</text>"#
    );
    for (i, metric) in HeatmapMetric::ALL.iter().enumerate() {
        let x0 = MARGIN_LEFT + i as f64 * (grid_w + GRID_GAP);
        match heatmaps.iter().find(|h| h.metric == *metric) {
            Some(h) => draw_grid(&mut svg, h, x0, MARGIN_TOP),
            None => draw_grid(&mut svg, &Heatmap::empty(*metric, horizon), x0, MARGIN_TOP),
        }
    }
    svg.push_str("</svg>\n");
    svg
}

const PLOT_W: f64 = 480.0;
const PLOT_H: f64 = 320.0;
const PLOT_X0: f64 = 70.0;
const PLOT_Y0: f64 = 40.0;

fn policy_color(policy: PolicyKind) -> &'static str {
    match policy {
        PolicyKind::Optimal => "#000000",
        PolicyKind::Dpc => "#1f77b4",
        PolicyKind::Mcts => "#d62728",
        PolicyKind::Myopic => "#2ca02c",
    }
}

fn axes(svg: &mut String, x_label: &str, y_label: &str, y_min: f64, y_max: f64) {
    let _ = writeln!(
        svg,
        r#"<rect x="{PLOT_X0:.1}" y="{PLOT_Y0:.1}" width="{PLOT_W:.1}" height="{PLOT_H:.1}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let v = y_min + (y_max - y_min) * k as f64 / 4.0;
        let y = PLOT_Y0 + PLOT_H - PLOT_H * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{v:.3}</text>"#,
            PLOT_X0 - 5.0,
            y + 3.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#,
        PLOT_X0 + PLOT_W / 2.0,
        PLOT_Y0 + PLOT_H + 36.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        PLOT_Y0 + PLOT_H / 2.0,
        PLOT_Y0 + PLOT_H / 2.0,
        escape(y_label)
    );
}

fn legend(svg: &mut String, policies: &[PolicyKind], x: f64, y: f64) {
    for (i, p) in policies.iter().enumerate() {
        let yy = y + i as f64 * 16.0;
        let _ = writeln!(
            svg,
            r#"<circle cx="{x:.1}" cy="{yy:.1}" r="4" fill="{}"/><text x="{:.1}" y="{:.1}" font-size="11">{p}</text>"#,
            policy_color(*p),
            x + 8.0,
            yy + 4.0
        );
    }
}

fn present_policies(rows: &[SummaryRow]) -> Vec<PolicyKind> {
    let mut ps: Vec<PolicyKind> = rows.iter().map(|r| r.policy).collect();
    ps.sort();
    ps.dedup();
    ps
}

/// Weighted error ratio (x) against relative optimality gap (y), one point
/// per setting and policy. Rows without a defined ratio are listed, not drawn.
pub fn render_scatter(rows: &[SummaryRow]) -> String {
    let plotted: Vec<&SummaryRow> = rows.iter().filter(|r| r.error_ratio.is_some()).collect();
    let omitted: Vec<&SummaryRow> = rows.iter().filter(|r| r.error_ratio.is_none()).collect();
    let y_max = plotted.iter().map(|r| r.gap).fold(0.01_f64, f64::max);
    let y_min = plotted.iter().map(|r| r.gap).fold(0.0_f64, f64::min);
    let height = PLOT_Y0 + PLOT_H + 60.0 + 14.0 * (omitted.len() + 1) as f64;
    let width = PLOT_X0 + PLOT_W + 140.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{PLOT_X0:.1}" y="22" font-size="14">Weighted error ratio vs. relative optimality gap</text>"#
    );
    axes(
        &mut svg,
        "weighted error ratio E",
        "relative optimality gap",
        y_min,
        y_max,
    );
    for k in 0..=4 {
        let x = PLOT_X0 + PLOT_W * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{:.1}" font-size="10" text-anchor="middle">{:.2}</text>"#,
            PLOT_Y0 + PLOT_H + 14.0,
            k as f64 / 4.0
        );
    }
    let mid = PLOT_X0 + PLOT_W / 2.0;
    let _ = writeln!(
        svg,
        r##"<line x1="{mid:.1}" y1="{PLOT_Y0:.1}" x2="{mid:.1}" y2="{:.1}" stroke="#888888" stroke-dasharray="4 3"/>"##,
        PLOT_Y0 + PLOT_H
    );
    let span = (y_max - y_min).max(f64::MIN_POSITIVE);
    for r in &plotted {
        let e = r.error_ratio.unwrap_or_default();
        let x = PLOT_X0 + PLOT_W * e;
        let y = PLOT_Y0 + PLOT_H - PLOT_H * (r.gap - y_min) / span;
        let _ = writeln!(
            svg,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="{}" fill-opacity="0.75"><title>{} | {}: E={e:.4}, gap={:.4}</title></circle>"#,
            policy_color(r.policy),
            escape(&r.setting.label()),
            r.policy,
            r.gap
        );
    }
    legend(
        &mut svg,
        &present_policies(rows),
        PLOT_X0 + PLOT_W + 20.0,
        PLOT_Y0 + 10.0,
    );
    let note_y = PLOT_Y0 + PLOT_H + 60.0;
    let _ = writeln!(
        svg,
        r#"<text x="{PLOT_X0:.1}" y="{note_y:.1}" font-size="11">omitted (undefined E, no regret): {}</text>"#,
        omitted.len()
    );
    for (i, r) in omitted.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="9">{} | {}</text>"#,
            PLOT_X0 + 10.0,
            note_y + 14.0 * (i + 1) as f64,
            escape(&r.setting.label()),
            r.policy
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Mean objective per setting (x: canonical setting order) for the optimal
/// policy and every evaluated policy.
pub fn render_objective_profile(rows: &[SummaryRow]) -> String {
    let order = enumerate_settings();
    let mut settings: Vec<Setting> = rows.iter().map(|r| r.setting).collect();
    settings.sort_by_key(|s| order.iter().position(|o| o == s));
    settings.dedup();
    let mut series: Vec<(PolicyKind, Vec<Option<f64>>)> = Vec::new();
    let optimal: Vec<Option<f64>> = settings
        .iter()
        .map(|s| rows.iter().find(|r| r.setting == *s).map(|r| r.j_star))
        .collect();
    series.push((PolicyKind::Optimal, optimal));
    for p in present_policies(rows) {
        if p == PolicyKind::Optimal {
            continue;
        }
        let values = settings
            .iter()
            .map(|s| rows.iter().find(|r| r.setting == *s && r.policy == p).map(|r| r.j_pi))
            .collect();
        series.push((p, values));
    }
    let all = series.iter().flat_map(|(_, v)| v.iter().flatten().copied());
    let (mut y_min, mut y_max) = all.fold((0.0_f64, 1.0_f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if y_max - y_min < 1e-9 {
        y_max = y_min + 1.0;
    }
    y_min = y_min.floor();
    y_max = y_max.ceil();
    let width = PLOT_X0 + PLOT_W + 140.0;
    let height = PLOT_Y0 + PLOT_H + 60.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{PLOT_X0:.1}" y="22" font-size="14">Mean objective value per setting</text>"#
    );
    axes(
        &mut svg,
        "setting (canonical order)",
        "mean objective value",
        y_min,
        y_max,
    );
    let n = settings.len().max(2) - 1;
    let x_of = |i: usize| PLOT_X0 + PLOT_W * i as f64 / n as f64;
    let y_of = |v: f64| PLOT_Y0 + PLOT_H - PLOT_H * (v - y_min) / (y_max - y_min);
    if y_min < 0.0 && y_max > 0.0 {
        let _ = writeln!(
            svg,
            r##"<line x1="{PLOT_X0:.1}" y1="{:.2}" x2="{:.1}" y2="{:.2}" stroke="#888888" stroke-dasharray="2 2"/>"##,
            y_of(0.0),
            PLOT_X0 + PLOT_W,
            y_of(0.0)
        );
    }
    for (policy, values) in &series {
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| format!("{:.2},{:.2}", x_of(i), y_of(v))))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            points.join(" "),
            policy_color(*policy)
        );
    }
    let mut legend_policies: Vec<PolicyKind> = series.iter().map(|(p, _)| *p).collect();
    legend_policies.dedup();
    legend(&mut svg, &legend_policies, PLOT_X0 + PLOT_W + 20.0, PLOT_Y0 + 10.0);
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::build_heatmaps;
    use crate::domain::{ConstraintKind, LocationDist, Profitability, RevenueDist};

    fn setting() -> Setting {
        Setting::new(
            LocationDist::Unif,
            RevenueDist::Homog,
            Profitability::Med,
            ConstraintKind::Load,
        )
        .unwrap()
    }

    fn row(e: Option<f64>, gap: f64) -> SummaryRow {
        SummaryRow {
            setting: setting(),
            policy: PolicyKind::Dpc,
            j_star: 10.0,
            j_pi: 9.0,
            gap,
            error_ratio: e,
        }
    }

    #[test]
    fn scale_is_monotone() {
        let mut prev = u32::MAX;
        for k in 0..=20 {
            let c = color_scale(k as f64 / 20.0);
            let lum: u32 = (0..3)
                .map(|i| u32::from_str_radix(&c[1 + 2 * i..3 + 2 * i], 16).unwrap())
                .sum();
            assert!(lum <= prev);
            prev = lum;
        }
    }

    #[test]
    fn panel_caption_and_determinism() {
        let maps = build_heatmaps(&[], 10);
        let a = render_heatmap_panel(&setting(), PolicyKind::Dpc, &maps);
        assert!(a.contains("med | load | unif | homog"));
        assert_eq!(a, render_heatmap_panel(&setting(), PolicyKind::Dpc, &maps));
        assert_eq!(a.matches("<rect x=").count(), 5 * 10 * 10);
    }

    #[test]
    fn scatter_omits_undefined_ratios() {
        let svg = render_scatter(&[row(None, 0.0), row(Some(0.0), 0.1)]);
        assert_eq!(svg.matches("<circle cx").count() - 1, 1); // one legend marker
        assert!(svg.contains("omitted (undefined E, no regret): 1"));
        // E = 0 sits on the left axis.
        assert!(svg.contains(&format!(r#"<circle cx="{:.2}""#, PLOT_X0)));
    }
}
