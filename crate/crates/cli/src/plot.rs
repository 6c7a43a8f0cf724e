//! Minimal self-contained SVG line plots; no renderer dependency.

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 840.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

impl LinePlot {
    pub fn render(&self) -> String {
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                let x = if self.log_x { x.log10() } else { x };
                if x.is_finite() && y.is_finite() {
                    pts.push((x, y));
                }
            }
        }
        let (mut x0, mut x1, mut y0, mut y1) = pts.iter().fold(
            (f64::MAX, f64::MIN, f64::MAX, f64::MIN),
            |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
        );
        if x0 >= x1 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y0 >= y1 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let sx = move |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
        let sy = move |y: f64| MARGIN_T + (y1 - y) / (y1 - y0) * ph;

        let mut svg = String::new();
        svg.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
             font-family=\"Helvetica, Arial, sans-serif\" font-size=\"13\">\n"
        ));
        svg.push_str(&format!(
            "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
            WIDTH / 2.0,
            xml_escape(&self.title)
        ));

        // frame and ticks
        svg.push_str(&format!(
            "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{pw}\" height=\"{ph}\" \
             fill=\"none\" stroke=\"#333\"/>\n"
        ));
        for k in 0..=5 {
            let fx = x0 + (x1 - x0) * k as f64 / 5.0;
            let fy = y0 + (y1 - y0) * k as f64 / 5.0;
            let px = sx(fx);
            let py = sy(fy);
            svg.push_str(&format!(
                "<line x1=\"{px}\" y1=\"{}\" x2=\"{px}\" y2=\"{}\" stroke=\"#ccc\"/>\n",
                MARGIN_T,
                MARGIN_T + ph
            ));
            svg.push_str(&format!(
                "<line x1=\"{}\" y1=\"{py}\" x2=\"{}\" y2=\"{py}\" stroke=\"#ccc\"/>\n",
                MARGIN_L,
                MARGIN_L + pw
            ));
            let xlab = if self.log_x {
                format!("1e{fx:.1}")
            } else {
                format!("{fx:.4}")
            };
            svg.push_str(&format!(
                "<text x=\"{px}\" y=\"{}\" text-anchor=\"middle\">{xlab}</text>\n",
                MARGIN_T + ph + 18.0
            ));
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{fy:.3}</text>\n",
                MARGIN_L - 6.0,
                py + 4.0
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            MARGIN_L + pw / 2.0,
            HEIGHT - 12.0,
            xml_escape(&self.x_label)
        ));
        svg.push_str(&format!(
            "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
            MARGIN_T + ph / 2.0,
            MARGIN_T + ph / 2.0,
            xml_escape(&self.y_label)
        ));

        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let path: Vec<String> = s
                .points
                .iter()
                .filter_map(|&(x, y)| {
                    let x = if self.log_x { x.log10() } else { x };
                    (x.is_finite() && y.is_finite()).then(|| format!("{:.2},{:.2}", sx(x), sy(y)))
                })
                .collect();
            if path.len() >= 2 {
                svg.push_str(&format!(
                    "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\" points=\"{}\"/>\n",
                    path.join(" ")
                ));
            }
            let ly = MARGIN_T + 16.0 + 18.0 * i as f64;
            svg.push_str(&format!(
                "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
                MARGIN_L + pw - 150.0,
                MARGIN_L + pw - 120.0
            ));
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\">{}</text>\n",
                MARGIN_L + pw - 112.0,
                ly + 4.0,
                xml_escape(&s.label)
            ));
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
