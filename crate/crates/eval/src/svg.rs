//! Minimal static SVG charts.

use std::fmt::Write;

pub const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Canvas {
    body: String,
    width: f64,
    height: f64,
}

/// Linear map from a data interval onto a pixel interval.
#[derive(Clone, Copy)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub px0: f64,
    pub px1: f64,
}

impl Axis {
    pub fn fit(values: impl IntoIterator<Item = f64>, px0: f64, px1: f64) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
        Self {
            lo: lo - pad,
            hi: hi + pad,
            px0,
            px1,
        }
    }

    pub fn at(&self, v: f64) -> f64 {
        self.px0 + (v - self.lo) / (self.hi - self.lo) * (self.px1 - self.px0)
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Canvas {
    pub fn new(width: f64, height: f64) -> Self {
        Self {
            body: String::new(),
            width,
            height,
        }
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.1}" y="{y:.1}" font-size="{size}" text-anchor="{anchor}" font-family="sans-serif">{}</text>"#,
            esc(s)
        );
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, opacity: f64) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{fill}" fill-opacity="{opacity}"/>"#,
            w.max(0.0),
            h.max(0.0)
        );
    }

    pub fn frame(&mut self, x: f64, y: f64, w: f64, h: f64) {
        let _ = writeln!(
            self.body,
            r##"<rect x="{x:.1}" y="{y:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="#444"/>"##
        );
    }

    pub fn dot(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{fill}" fill-opacity="0.35"/>"#
        );
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str) {
        let mut p = String::new();
        for (x, y) in pts {
            let _ = write!(p, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="1.5"/>"#,
            p.trim_end()
        );
    }

    pub fn polygon(&mut self, pts: &[(f64, f64)], fill: &str) {
        let mut p = String::new();
        for (x, y) in pts {
            let _ = write!(p, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            self.body,
            r#"<polygon points="{}" fill="{fill}" fill-opacity="0.5" stroke="{fill}"/>"#,
            p.trim_end()
        );
    }

    pub fn legend(&mut self, x: f64, y: f64, names: &[&str]) {
        for (i, n) in names.iter().enumerate() {
            let yy = y + 16.0 * i as f64;
            self.rect(x, yy - 9.0, 10.0, 10.0, PALETTE[i % PALETTE.len()], 1.0);
            self.text(x + 14.0, yy, 11.0, "start", n);
        }
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Normalized histogram counts over `bins` equal cells of `axis`.
pub fn histogram(values: &[f64], axis: &Axis, bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    for v in values {
        let t = ((v - axis.lo) / (axis.hi - axis.lo) * bins as f64).floor();
        if t >= 0.0 && (t as usize) < bins {
            h[t as usize] += 1.0;
        }
    }
    let max = h.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        h.iter_mut().for_each(|v| *v /= max);
    }
    h
}

/// Scatter of 2-D coordinates with marginal histograms on top and right.
pub fn pca_scatter(sets: &[(&str, Vec<(f64, f64)>)], ratios: &[f64]) -> String {
    let (w, h, m, marg) = (640.0, 600.0, 50.0, 90.0);
    let mut c = Canvas::new(w, h);
    let (x0, x1, y0, y1) = (m, w - m - marg, m + marg, h - m);
    let xa = Axis::fit(sets.iter().flat_map(|s| s.1.iter().map(|p| p.0)), x0, x1);
    let ya = Axis::fit(sets.iter().flat_map(|s| s.1.iter().map(|p| p.1)), y1, y0);
    c.frame(x0, y0, x1 - x0, y1 - y0);
    for (k, (_, pts)) in sets.iter().enumerate() {
        let col = PALETTE[k % PALETTE.len()];
        let step = (pts.len() / 1500).max(1);
        for p in pts.iter().step_by(step) {
            c.dot(xa.at(p.0), ya.at(p.1), 1.6, col);
        }
        let bins = 40;
        let hx = histogram(&pts.iter().map(|p| p.0).collect::<Vec<_>>(), &xa, bins);
        let bw = (x1 - x0) / bins as f64;
        let line: Vec<(f64, f64)> = hx.iter().enumerate().map(|(i, v)| (x0 + (i as f64 + 0.5) * bw, y0 - 5.0 - v * (marg - 15.0))).collect();
        c.polyline(&line, col);
        let yaxis = Axis { px0: 0.0, px1: 1.0, ..ya };
        let hy = histogram(&pts.iter().map(|p| p.1).collect::<Vec<_>>(), &yaxis, bins);
        let bh = (y1 - y0) / bins as f64;
        let line: Vec<(f64, f64)> = hy.iter().enumerate().map(|(i, v)| (x1 + 5.0 + v * (marg - 15.0), y1 - (i as f64 + 0.5) * bh)).collect();
        c.polyline(&line, col);
    }
    let pct = |i: usize| ratios.get(i).map(|r| format!(" ({:.1}%)", 100.0 * r)).unwrap_or_default();
    c.text((x0 + x1) / 2.0, h - 15.0, 12.0, "middle", &format!("PC1{}", pct(0)));
    c.text(15.0, (y0 + y1) / 2.0, 12.0, "middle", &format!("PC2{}", pct(1)));
    c.text(w / 2.0, 20.0, 14.0, "middle", "PCA embedding fitted on pseudo-real spectra");
    let names: Vec<&str> = sets.iter().map(|s| s.0).collect();
    c.legend(x0 + 10.0, y0 + 18.0, &names);
    c.finish()
}

/// Per-wavelength curves and a mirrored-density summary of each curve.
pub fn diff_plot(wavelengths: &[f64], curves: &[(&str, &[f64])]) -> String {
    let (w, h, m) = (760.0, 380.0, 50.0);
    let split = 520.0;
    let mut c = Canvas::new(w, h);
    let xa = Axis::fit(wavelengths.iter().copied(), m, split - 10.0);
    let all = curves.iter().flat_map(|c| c.1.iter().copied()).chain([0.0]);
    let ya = Axis::fit(all, h - m, m);
    c.frame(m, m, split - 10.0 - m, h - 2.0 * m);
    for (k, (_, v)) in curves.iter().enumerate() {
        let pts: Vec<(f64, f64)> = wavelengths.iter().zip(v.iter()).map(|(&x, &y)| (xa.at(x), ya.at(y))).collect();
        c.polyline(&pts, PALETTE[k % PALETTE.len()]);
    }
    c.text((m + split) / 2.0, h - 15.0, 12.0, "middle", "wavelength [nm]");
    c.text(w / 2.0, 22.0, 14.0, "middle", "Mean absolute difference to pseudo-real class means");
    let slot = (w - split - m) / curves.len().max(1) as f64;
    let bins = 30;
    for (k, (_, v)) in curves.iter().enumerate() {
        let yax = Axis { px0: 0.0, px1: 1.0, ..ya };
        let hist = histogram(v, &yax, bins);
        let cx = split + slot * (k as f64 + 0.5);
        let at = |i: usize| ya.at(yax.lo + (i as f64 + 0.5) / bins as f64 * (yax.hi - yax.lo));
        let mut pts: Vec<(f64, f64)> = (0..bins).map(|i| (cx + hist[i] * slot * 0.4, at(i))).collect();
        pts.extend((0..bins).rev().map(|i| (cx - hist[i] * slot * 0.4, at(i))));
        c.polygon(&pts, PALETTE[k % PALETTE.len()]);
    }
    c.frame(split, m, w - split - m, h - 2.0 * m);
    let names: Vec<&str> = curves.iter().map(|c| c.0).collect();
    c.legend(m + 10.0, m + 18.0, &names);
    c.finish()
}

/// Grouped bars: one group per metric, one bar per source.
pub fn metric_bars(metrics: &[&str], sources: &[&str], values: &[Vec<f64>]) -> String {
    let (w, h, m) = (560.0, 360.0, 50.0);
    let mut c = Canvas::new(w, h);
    let ya = Axis {
        lo: 0.0,
        hi: 1.0,
        px0: h - m,
        px1: m,
    };
    c.frame(m, m, w - 2.0 * m, h - 2.0 * m);
    for t in [0.25, 0.5, 0.75] {
        c.rect(m, ya.at(t), w - 2.0 * m, 0.5, "#999", 1.0);
    }
    let group = (w - 2.0 * m) / metrics.len().max(1) as f64;
    let bar = group * 0.8 / sources.len().max(1) as f64;
    for (g, name) in metrics.iter().enumerate() {
        let gx = m + group * g as f64 + group * 0.1;
        for (s, row) in values.iter().enumerate() {
            let v = row[g].clamp(0.0, 1.0);
            c.rect(gx + bar * s as f64, ya.at(v), bar * 0.9, ya.at(0.0) - ya.at(v), PALETTE[s % PALETTE.len()], 1.0);
            c.text(gx + bar * (s as f64 + 0.45), ya.at(v) - 3.0, 9.0, "middle", &format!("{v:.2}"));
        }
        c.text(gx + group * 0.4, h - m + 16.0, 12.0, "middle", name);
    }
    c.text(w / 2.0, 22.0, 14.0, "middle", "Downstream classification on pseudo-real test spectra");
    c.legend(w - m - 110.0, m + 18.0, sources);
    c.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed() {
        let s = pca_scatter(&[("a", vec![(0.0, 1.0), (1.0, 2.0)]), ("b<c", vec![(2.0, 0.5)])], &[0.7, 0.2]);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("b&lt;c"));
        let d = diff_plot(&[500.0, 600.0], &[("x", &[0.1, 0.2]), ("y", &[0.05, 0.0])]);
        assert!(d.contains("<polygon"));
        let b = metric_bars(&["BA"], &["sim", "real"], &[vec![0.5], vec![0.9]]);
        assert_eq!(b.matches("<rect").count(), 1 + 1 + 3 + 2 + 2);
    }

    #[test]
    fn histogram_peaks_at_one() {
        let a = Axis {
            lo: 0.0,
            hi: 1.0,
            px0: 0.0,
            px1: 1.0,
        };
        assert_eq!(histogram(&[0.1, 0.15, 0.9], &a, 2), vec![1.0, 0.5]);
    }
}
