//! Minimal SVG scatter of centered predicted versus centered measured
//! responses.

pub fn scatter_svg(pairs: &[(f64, f64)], title: &str) -> String {
    let size = 480.0f64;
    let margin = 48.0f64;
    let inner = size - 2.0 * margin;

    let mean_x = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len().max(1) as f64;
    let mean_y = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len().max(1) as f64;
    let centered: Vec<(f64, f64)> = pairs.iter().map(|&(x, y)| (x - mean_x, y - mean_y)).collect();
    let span = centered
        .iter()
        .flat_map(|&(x, y)| [x.abs(), y.abs()])
        .fold(1e-12f64, f64::max);

    let to_px = |v: f64| margin + (v / span + 1.0) * 0.5 * inner;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n"
    ));
    svg.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{size}\" height=\"{size}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n",
        size / 2.0
    ));
    // axes box and the y = x reference line
    svg.push_str(&format!(
        "  <rect x=\"{margin}\" y=\"{margin}\" width=\"{inner}\" height=\"{inner}\" fill=\"none\" stroke=\"#444\"/>\n"
    ));
    svg.push_str(&format!(
        "  <line x1=\"{margin}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{margin}\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n",
        size - margin,
        size - margin
    ));
    for &(x, y) in &centered {
        svg.push_str(&format!(
            "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"steelblue\" fill-opacity=\"0.7\"/>\n",
            to_px(x),
            size - to_px(y)
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">centered measured</text>\n",
        size / 2.0,
        size - 12.0
    ));
    svg.push_str(&format!(
        "  <text x=\"16\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">centered predicted</text>\n",
        size / 2.0,
        size / 2.0
    ));
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    #[test]
    fn svg_is_well_formed_enough() {
        let svg = super::scatter_svg(&[(0.0, 0.1), (1.0, 0.9), (2.0, 2.2)], "cell");
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<circle").count(), 3);
    }
}
