//! Self-contained SVG scatter and curve plots for the progression space,
//! ROC curves, and the overlay figures.

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 560.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marker {
    Dot,
    Cross,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: String,
    pub marker: Marker,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Annotation {
    pub x: f64,
    pub y: f64,
    pub text: String,
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn from_points<'a>(points: impl Iterator<Item = &'a (f64, f64)>) -> Frame {
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for (x, y) in points {
            x_min = x_min.min(*x);
            x_max = x_max.max(*x);
            y_min = y_min.min(*y);
            y_max = y_max.max(*y);
        }
        if !x_min.is_finite() {
            return Frame { x_min: 0.0, x_max: 1.0, y_min: 0.0, y_max: 1.0 };
        }
        // pad 5% so edge markers stay inside the axes
        let x_pad = ((x_max - x_min) * 0.05).max(1e-9);
        let y_pad = ((y_max - y_min) * 0.05).max(1e-9);
        Frame {
            x_min: x_min - x_pad,
            x_max: x_max + x_pad,
            y_min: y_min - y_pad,
            y_max: y_max + y_pad,
        }
    }

    fn unit() -> Frame {
        Frame { x_min: -0.02, x_max: 1.02, y_min: -0.02, y_max: 1.02 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.1}")
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{x}\" y=\"28\" font-family=\"sans-serif\" font-size=\"17\" text-anchor=\"middle\">{title}</text>\n",
        x = (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
    )
}

fn axes(frame: &Frame, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    s.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    ));
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = frame.x_min + t * (frame.x_max - frame.x_min);
        let yv = frame.y_min + t * (frame.y_max - frame.y_min);
        let px = frame.px(xv);
        let py = frame.py(yv);
        s.push_str(&format!(
            "<line x1=\"{px}\" y1=\"{y0}\" x2=\"{px}\" y2=\"{}\" stroke=\"black\"/>\n\
             <text x=\"{px}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            y0 + 6.0,
            y0 + 20.0,
            fmt(xv)
        ));
        s.push_str(&format!(
            "<line x1=\"{}\" y1=\"{py}\" x2=\"{x0}\" y2=\"{py}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            x0 - 6.0,
            x0 - 9.0,
            py + 4.0,
            fmt(yv)
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{x_label}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 14.0
    ));
    s.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{y_label}</text>\n",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    ));
    s
}

fn legend(entries: &[(String, String, Marker)]) -> String {
    let mut s = String::new();
    let lx = WIDTH - MARGIN_RIGHT + 18.0;
    let mut ly = MARGIN_TOP + 10.0;
    for (label, color, marker) in entries {
        match marker {
            Marker::Dot => s.push_str(&format!(
                "<circle cx=\"{lx}\" cy=\"{ly}\" r=\"4\" fill=\"{color}\"/>\n"
            )),
            Marker::Cross => s.push_str(&cross_path(lx, ly, 4.5, color)),
        }
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{label}</text>\n",
            lx + 10.0,
            ly + 4.0
        ));
        ly += 20.0;
    }
    s
}

fn cross_path(cx: f64, cy: f64, r: f64, color: &str) -> String {
    format!(
        "<path d=\"M {x0} {y0} L {x1} {y1} M {x0} {y1} L {x1} {y0}\" stroke=\"{color}\" stroke-width=\"2\" fill=\"none\"/>\n",
        x0 = cx - r,
        y0 = cy - r,
        x1 = cx + r,
        y1 = cy + r,
    )
}

/// Scatter plot with one `<circle>` (or cross path) per point.
pub fn scatter(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    annotations: &[Annotation],
) -> String {
    let frame = Frame::from_points(series.iter().flat_map(|s| s.points.iter()));
    let mut svg = header(title);
    svg.push_str(&axes(&frame, x_label, y_label));
    for s in series {
        for (x, y) in &s.points {
            let px = frame.px(*x);
            let py = frame.py(*y);
            match s.marker {
                Marker::Dot => svg.push_str(&format!(
                    "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.75\"/>\n",
                    s.color
                )),
                Marker::Cross => svg.push_str(&cross_path(px, py, 4.5, &s.color)),
            }
        }
    }
    for a in annotations {
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\" font-weight=\"bold\" text-anchor=\"middle\">{}</text>\n",
            frame.px(a.x),
            frame.py(a.y),
            a.text
        ));
    }
    let entries: Vec<(String, String, Marker)> =
        series.iter().map(|s| (s.label.clone(), s.color.clone(), s.marker)).collect();
    svg.push_str(&legend(&entries));
    svg.push_str("</svg>\n");
    svg
}

/// ROC-style curve plot on the unit square with the chance diagonal.
pub fn curves(title: &str, x_label: &str, y_label: &str, curves: &[Series]) -> String {
    let frame = Frame::unit();
    let mut svg = header(title);
    svg.push_str(&axes(&frame, x_label, y_label));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"gray\" stroke-dasharray=\"5,4\"/>\n",
        frame.px(0.0),
        frame.py(0.0),
        frame.px(1.0),
        frame.py(1.0)
    ));
    for c in curves {
        let path: Vec<String> = c
            .points
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", frame.px(*x), frame.py(*y)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            path.join(" "),
            c.color
        ));
    }
    let entries: Vec<(String, String, Marker)> =
        curves.iter().map(|c| (c.label.clone(), c.color.clone(), Marker::Dot)).collect();
    svg.push_str(&legend(&entries));
    svg.push_str("</svg>\n");
    svg
}
