use super::{escape_xml, format_opt, format_value, FigureKind, FigureSpec, ReportError};
use crate::rdm::Rdm;
use crate::stats::RsaResult;
use std::fmt::Write;

const FONT: &str = "font-family=\"Helvetica, Arial, sans-serif\"";
const CEILING_GREY: &str = "#bdbdbd";

fn header(spec: &FigureSpec) -> String {
    let (w, h) = spec.size_px;
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(s, "<title>{}</title>", escape_xml(&spec.title));
    let _ = writeln!(
        s,
        "<metadata id=\"provenance\"><chroma:provenance xmlns:chroma=\"urn:chroma-rsa\" config-hash=\"{}\" inputs=\"{}\"/></metadata>",
        escape_xml(&spec.config_hash),
        escape_xml(&spec.inputs.join(";"))
    );
    let _ = writeln!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\" {FONT}>{}</text>",
        w as f64 / 2.0,
        escape_xml(&spec.title)
    );
    s
}

/// Heatmap of a normalized RDM: light = 0, dark = 1, rules at every C.
pub fn render_rdm_heatmap(rdm: &Rdm, spec: &FigureSpec) -> Result<String, ReportError> {
    spec.check(FigureKind::RdmHeatmap)?;
    if !rdm.is_unit_range() {
        return Err(ReportError::NotNormalized);
    }
    let (w, h) = (spec.size_px.0 as f64, spec.size_px.1 as f64);
    let n = rdm.n();
    let (left, top) = (44.0, 40.0);
    let grid = (w - left - 16.0).min(h - top - 40.0);
    let cell = grid / n as f64;
    let font = (cell * 0.6).min(10.0);
    let labels = rdm.labels();

    let mut s = header(spec);
    s.push_str("<g id=\"cells\" shape-rendering=\"crispEdges\">\n");
    for i in 0..n {
        for j in 0..n {
            let v = rdm.get(i, j);
            let _ = writeln!(
                s,
                "<rect id=\"c-{i}-{j}\" x=\"{:.2}\" y=\"{:.2}\" width=\"{cell:.2}\" height=\"{cell:.2}\" fill=\"{}\"><title>{}, {}: {}</title></rect>",
                left + j as f64 * cell,
                top + i as f64 * cell,
                spec.palette.color(v),
                labels[i],
                labels[j],
                format_value(v)
            );
        }
    }
    s.push_str("</g>\n<g id=\"octaves\" stroke=\"#000000\" stroke-width=\"1\">\n");
    for (i, &m) in labels.iter().enumerate().skip(1) {
        if m % 12 == 0 {
            let p = i as f64 * cell;
            let _ = writeln!(
                s,
                "<line class=\"octave\" x1=\"{:.2}\" y1=\"{top:.2}\" x2=\"{:.2}\" y2=\"{:.2}\"/>",
                left + p,
                left + p,
                top + grid
            );
            let _ = writeln!(
                s,
                "<line class=\"octave\" x1=\"{left:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\"/>",
                top + p,
                left + grid,
                top + p
            );
        }
    }
    s.push_str("</g>\n<g id=\"labels\">\n");
    for (i, m) in labels.iter().enumerate() {
        let c = (i as f64 + 0.5) * cell;
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" dominant-baseline=\"middle\" font-size=\"{font:.2}\" {FONT}>{m}</text>",
            left - 3.0,
            top + c
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"{font:.2}\" {FONT}>{m}</text>",
            left + c,
            top + grid + font + 3.0
        );
    }
    s.push_str("</g>\n</svg>\n");
    Ok(s)
}

fn check_family(results: &[RsaResult]) -> Result<(), ReportError> {
    let first = results.first().ok_or(ReportError::Empty)?;
    for r in results {
        if r.alpha != first.alpha {
            return Err(ReportError::MixedFamilies(format!("alpha {} vs {}", r.alpha, first.alpha)));
        }
        if r.n_comparisons != results.len() {
            return Err(ReportError::MixedFamilies(format!(
                "{}/{} was corrected for {} comparisons, figure has {}",
                r.representation_name,
                r.model_name,
                r.n_comparisons,
                results.len()
            )));
        }
    }
    for (i, a) in results.iter().enumerate() {
        if results[..i]
            .iter()
            .any(|b| a.representation_name == b.representation_name && a.model_name == b.model_name)
        {
            return Err(ReportError::MixedFamilies(format!(
                "{}/{} appears twice",
                a.representation_name, a.model_name
            )));
        }
    }
    Ok(())
}

fn first_seen<'a>(items: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for it in items {
        if !out.contains(&it) {
            out.push(it);
        }
    }
    out
}

/// Grouped bars of mean rho on a fixed [-1, 1] axis, one group per representation.
///
/// Each bar carries SEM whiskers and its grey noise-ceiling band. A half-moon marks
/// `sig_vs_zero`, a dewdrop on the band marks `sig_below_ceiling`.
pub fn render_rsa_bars(results: &[RsaResult], spec: &FigureSpec) -> Result<String, ReportError> {
    spec.check(FigureKind::RsaBars)?;
    check_family(results)?;
    let (w, h) = (spec.size_px.0 as f64, spec.size_px.1 as f64);
    let (left, right, top, bottom) = (56.0, w - 16.0, 40.0, h - 70.0);
    let y = |v: f64| top + (1.0 - v.clamp(-1.0, 1.0)) / 2.0 * (bottom - top);
    let reps = first_seen(results.iter().map(|r| r.representation_name.as_str()));
    let models = first_seen(results.iter().map(|r| r.model_name.as_str()));
    let group_w = (right - left) / reps.len() as f64;
    let bar_w = group_w * 0.7 / models.len() as f64;
    let model_color = |m: usize| {
        let t = if models.len() > 1 { m as f64 / (models.len() - 1) as f64 } else { 0.5 };
        spec.palette.color(0.35 + 0.5 * t)
    };

    let mut s = header(spec);
    s.push_str("<g id=\"axes\" stroke=\"#d9d9d9\" stroke-width=\"1\">\n");
    for v in [-1.0, -0.5, 0.5, 1.0] {
        let _ = writeln!(s, "<line x1=\"{left:.2}\" y1=\"{0:.2}\" x2=\"{right:.2}\" y2=\"{0:.2}\"/>", y(v));
    }
    let _ = writeln!(
        s,
        "<line id=\"zero\" x1=\"{left:.2}\" y1=\"{0:.2}\" x2=\"{right:.2}\" y2=\"{0:.2}\" stroke=\"#000000\"/>",
        y(0.0)
    );
    s.push_str("</g>\n");
    let _ = writeln!(
        s,
        "<text transform=\"translate(18 {:.2}) rotate(-90)\" text-anchor=\"middle\" font-size=\"12\" {FONT}>Spearman rho</text>",
        (top + bottom) / 2.0
    );

    for (g, rep) in reps.iter().enumerate() {
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"12\" {FONT}>{}</text>",
            left + (g as f64 + 0.5) * group_w,
            bottom + 18.0,
            escape_xml(rep)
        );
    }

    for (idx, r) in results.iter().enumerate() {
        let g = reps.iter().position(|x| *x == r.representation_name).expect("collected above");
        let m = models.iter().position(|x| *x == r.model_name).expect("collected above");
        let x = left + g as f64 * group_w + group_w * 0.15 + m as f64 * bar_w;
        let cx = x + bar_w / 2.0;
        let label = format!("{} / {}", escape_xml(&r.representation_name), escape_xml(&r.model_name));
        if let (Some(lo), Some(hi)) = (r.noise_lower, r.noise_upper) {
            let _ = writeln!(
                s,
                "<rect id=\"ceiling-{idx}\" class=\"ceiling\" x=\"{x:.2}\" y=\"{:.2}\" width=\"{bar_w:.2}\" height=\"{:.2}\" fill=\"{CEILING_GREY}\"><title>{label}: noise ceiling {} to {}</title></rect>",
                y(hi),
                y(lo) - y(hi),
                format_value(lo),
                format_value(hi)
            );
        }
        let Some(mean) = r.mean_rho else { continue };
        let (y0, y1) = (y(0.0), y(mean));
        let _ = writeln!(
            s,
            "<rect id=\"bar-{idx}\" class=\"bar\" x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"><title>{label}: mean rho {}, SEM {}, p {}</title></rect>",
            x + bar_w * 0.15,
            y0.min(y1),
            bar_w * 0.7,
            (y0 - y1).abs(),
            model_color(m),
            format_value(mean),
            format_opt(r.sem),
            format_opt(r.p_vs_zero)
        );
        let sem = r.sem.unwrap_or(0.0);
        let _ = writeln!(
            s,
            "<line id=\"sem-{idx}\" class=\"sem\" x1=\"{cx:.2}\" y1=\"{:.2}\" x2=\"{cx:.2}\" y2=\"{:.2}\" stroke=\"#000000\" stroke-width=\"1.2\"/>",
            y(mean + sem),
            y(mean - sem)
        );
        if r.sig_vs_zero {
            // half-moon just beyond the whisker, on the side the bar points to
            let rad = (bar_w * 0.25).min(6.0);
            let (yy, sweep) = if mean >= 0.0 { (y(mean + sem) - 3.0, 1) } else { (y(mean - sem) + 3.0, 0) };
            let _ = writeln!(
                s,
                "<path class=\"sig-zero\" d=\"M {:.2} {yy:.2} A {rad:.2} {rad:.2} 0 0 {sweep} {:.2} {yy:.2} Z\" fill=\"#000000\"/>",
                cx - rad,
                cx + rad
            );
        }
        if r.sig_below_ceiling {
            if let Some(hi) = r.noise_upper {
                let t = y(hi) - 2.0;
                let _ = writeln!(
                    s,
                    "<path class=\"sig-ceiling\" d=\"M {cx:.2} {:.2} C {:.2} {:.2} {:.2} {t:.2} {cx:.2} {t:.2} C {:.2} {t:.2} {:.2} {:.2} {cx:.2} {:.2} Z\" fill=\"#636363\"/>",
                    t - 10.0,
                    cx + 5.0,
                    t - 4.0,
                    cx + 4.0,
                    cx - 4.0,
                    cx - 5.0,
                    t - 4.0,
                    t - 10.0
                );
            }
        }
    }

    s.push_str("<g id=\"legend\">\n");
    for (m, name) in models.iter().enumerate() {
        let lx = left + m as f64 * 170.0;
        let ly = h - 28.0;
        let _ = writeln!(s, "<rect x=\"{lx:.2}\" y=\"{:.2}\" width=\"12\" height=\"12\" fill=\"{}\"/>", ly - 10.0, model_color(m));
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{ly:.2}\" font-size=\"12\" {FONT}>{}</text>",
            lx + 17.0,
            escape_xml(name)
        );
    }
    let lx = left + models.len() as f64 * 170.0;
    let _ = writeln!(s, "<rect x=\"{lx:.2}\" y=\"{:.2}\" width=\"12\" height=\"12\" fill=\"{CEILING_GREY}\"/>", h - 38.0);
    let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" {FONT}>noise ceiling</text>", lx + 17.0, h - 28.0);
    s.push_str("</g>\n</svg>\n");
    Ok(s)
}
