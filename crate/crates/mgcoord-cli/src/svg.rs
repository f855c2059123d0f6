//! Minimal native SVG renderer: error-versus-step curves on a log-scale
//! y axis. No external plotting dependency, so figures are reproducible
//! byte for byte.

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 180.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// Render `(step, error)` series, dropping non-positive errors (log scale).
pub fn render_log_chart(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;

    let mut x_max: f64 = 1.0;
    let mut log_min = f64::MAX;
    let mut log_max = f64::MIN;
    for (_, points) in series {
        for &(x, y) in points {
            if y > 0.0 {
                x_max = x_max.max(x);
                log_min = log_min.min(y.log10());
                log_max = log_max.max(y.log10());
            }
        }
    }
    if log_min > log_max {
        log_min = -1.0;
        log_max = 1.0;
    }
    let floor = log_min.floor();
    let ceil = log_max.ceil();
    let (floor, ceil) = if floor == ceil {
        (floor - 1.0, ceil + 1.0)
    } else {
        (floor, ceil)
    };

    let x_of = |x: f64| MARGIN_LEFT + x / x_max * plot_w;
    let y_of = |log_y: f64| MARGIN_TOP + (ceil - log_y) / (ceil - floor) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{}</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        title
    ));

    // decade grid lines and y labels
    let mut decade = floor;
    while decade <= ceil + 0.5 {
        let y = y_of(decade);
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            MARGIN_LEFT,
            y,
            MARGIN_LEFT + plot_w,
            y
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"end\">1e{}</text>\n",
            MARGIN_LEFT - 8.0,
            y + 4.0,
            decade as i64
        ));
        decade += 1.0;
    }

    // x ticks at a readable spacing
    let raw_step = x_max / 10.0;
    let magnitude = 10f64.powf(raw_step.log10().floor());
    let tick = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * magnitude)
        .find(|&s| s >= raw_step)
        .unwrap_or(magnitude);
    let mut x_tick = 0.0;
    while x_tick <= x_max + 0.5 * tick {
        let x = x_of(x_tick.min(x_max));
        svg.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            MARGIN_TOP,
            MARGIN_TOP + plot_h
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{}</text>\n",
            MARGIN_TOP + plot_h + 18.0,
            x_tick as i64
        ));
        x_tick += tick;
    }

    // axes
    svg.push_str(&format!(
        "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{plot_w:.1}\" height=\"{plot_h:.1}\" \
         fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
        MARGIN_LEFT, MARGIN_TOP
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">coordination step</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 16.0
    ));
    svg.push_str(&format!(
        "<text x=\"20\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\" transform=\"rotate(-90 20 {:.1})\">error</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    ));

    // curves and legend
    for (idx, (name, points)) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let path: Vec<String> = points
            .iter()
            .filter(|&&(_, y)| y > 0.0)
            .map(|&(x, y)| format!("{:.2},{:.2}", x_of(x), y_of(y.log10())))
            .collect();
        if !path.is_empty() {
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
                path.join(" ")
            ));
        }
        let legend_y = MARGIN_TOP + 16.0 + idx as f64 * 20.0;
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{legend_y:.1}\" x2=\"{:.1}\" y2=\"{legend_y:.1}\" \
             stroke=\"{color}\" stroke-width=\"3\"/>\n",
            WIDTH - MARGIN_RIGHT + 12.0,
            WIDTH - MARGIN_RIGHT + 40.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            WIDTH - MARGIN_RIGHT + 46.0,
            legend_y + 4.0,
            name
        ));
    }

    svg.push_str("</svg>\n");
    svg
}
