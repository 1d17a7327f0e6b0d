//! Dependency-free SVG rendering of score histograms and similarity bars.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::similarity::SimilarityStats;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 300.0;
const MARGIN: f64 = 40.0;

/// Counts of `scores` in `bins` equal-width bins over [0, 1].
pub fn histogram(scores: &[f64], bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    for &s in scores {
        let b = ((s.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

/// Fraction of scores in `[0, lo] or [hi, 1]`.
pub fn mass_near_extremes(scores: &[f64], lo: f64, hi: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().filter(|&&s| s <= lo || s >= hi).count() as f64 / scores.len() as f64
}

fn frame(title: &str) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    let _ = writeln!(s, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">{title}</text>", WIDTH / 2.0);
    let (x0, y0, x1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN);
    let _ = writeln!(s, "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>");
    let _ = writeln!(s, "<line x1=\"{x0}\" y1=\"{MARGIN}\" x2=\"{x0}\" y2=\"{y0}\" stroke=\"black\"/>");
    s
}

/// Overlaid real/fake histograms of detection scores.
pub fn score_hist_svg(real: &[f64], fake: &[f64], bins: usize) -> String {
    let hr = histogram(real, bins);
    let hf = histogram(fake, bins);
    let peak = hr.iter().chain(&hf).copied().max().unwrap_or(0).max(1) as f64;
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let bw = plot_w / bins as f64;
    let mut s = frame("Detection score distribution");
    for (counts, color) in [(&hr, "#2b7bba"), (&hf, "#d7301f")] {
        for (i, &c) in counts.iter().enumerate() {
            let h = plot_h * c as f64 / peak;
            let _ = writeln!(
                s,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{color}\" fill-opacity=\"0.5\"/>",
                MARGIN + i as f64 * bw,
                HEIGHT - MARGIN - h,
                bw,
                h
            );
        }
    }
    for (t, label) in [(0.0, "0"), (0.5, "0.5"), (1.0, "1")] {
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{label}</text>",
            MARGIN + t * plot_w,
            HEIGHT - MARGIN + 15.0
        );
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"34\" fill=\"#2b7bba\">real (n={})</text>", MARGIN + 5.0, real.len());
    let _ = writeln!(s, "<text x=\"{}\" y=\"48\" fill=\"#d7301f\">fake (n={})</text>", MARGIN + 5.0, fake.len());
    s.push_str("</svg>\n");
    s
}

/// One bar per class with a one-standard-deviation whisker, on [-1, 1].
pub fn similarity_bars_svg(stats: &BTreeMap<u32, SimilarityStats>, names: &BTreeMap<u32, String>) -> String {
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let y_of = |v: f64| MARGIN + plot_h * (1.0 - v.clamp(-1.0, 1.0)) / 2.0;
    let slot = plot_w / stats.len().max(1) as f64;
    let mut s = frame("Visual-audio cosine similarity per class");
    let zero = y_of(0.0);
    let _ = writeln!(s, "<line x1=\"{MARGIN}\" y1=\"{zero:.1}\" x2=\"{}\" y2=\"{zero:.1}\" stroke=\"gray\" stroke-dasharray=\"3,3\"/>", WIDTH - MARGIN);
    for (i, (g, st)) in stats.iter().enumerate() {
        let cx = MARGIN + slot * (i as f64 + 0.5);
        let top = y_of(st.mean.max(0.0));
        let bottom = y_of(st.mean.min(0.0));
        let color = if *g == 0 { "#2b7bba" } else { "#d7301f" };
        let _ = writeln!(
            s,
            "<rect class=\"bar\" x=\"{:.1}\" y=\"{top:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{color}\"/>",
            cx - slot * 0.3,
            slot * 0.6,
            bottom - top
        );
        let (w0, w1) = (y_of(st.mean + st.std), y_of(st.mean - st.std));
        let _ = writeln!(s, "<line x1=\"{cx:.1}\" y1=\"{w0:.1}\" x2=\"{cx:.1}\" y2=\"{w1:.1}\" stroke=\"black\"/>");
        let label = names.get(g).cloned().unwrap_or_else(|| format!("g{g}"));
        let _ = writeln!(
            s,
            "<text x=\"{cx:.1}\" y=\"{}\" text-anchor=\"middle\">{label} ({:.2})</text>",
            HEIGHT - MARGIN + 15.0,
            st.mean
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_edges() {
        assert_eq!(histogram(&[0.0, 0.05, 0.5, 1.0, 1.5], 10), vec![2, 0, 0, 0, 0, 1, 0, 0, 0, 2]);
        assert_eq!(mass_near_extremes(&[0.1, 0.5, 0.9, 0.85], 0.2, 0.8), 0.75);
    }

    #[test]
    fn one_bar_per_class() {
        let stats: BTreeMap<u32, SimilarityStats> = (0..4)
            .map(|g| (g, SimilarityStats { mean: 0.2 * g as f64 - 0.1, std: 0.05, count: 3 }))
            .collect();
        let svg = similarity_bars_svg(&stats, &BTreeMap::new());
        assert_eq!(svg.matches("class=\"bar\"").count(), 4);
        assert!(score_hist_svg(&[0.1], &[0.9], 20).starts_with("<svg"));
    }
}
