//! CSV, JSON and SVG writers. Everything here is a pure string builder; the
//! caller owns the file system.

use std::fmt::Write as _;

use serde::Serialize;

use crate::hilbert::{CMatrix, StateMatrix};
use crate::protocols::{map_to_qubit_basis, map_to_two_cavity_basis};

/// Twelve significant digits, no locale.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.11e}")
    } else {
        v.to_string()
    }
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub struct Csv {
    writer: csv::Writer<Vec<u8>>,
}

impl Csv {
    pub fn new(header: &[String]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Self { writer }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.writer.write_record(cells).expect("row width matches header");
    }

    pub fn finish(self) -> String {
        let bytes = self.writer.into_inner().expect("in-memory flush");
        String::from_utf8(bytes).expect("fields are UTF-8")
    }
}

#[derive(Debug, Serialize)]
pub struct DensityMatrixFile {
    pub basis: Vec<String>,
    pub real: Vec<Vec<f64>>,
    pub imag: Vec<Vec<f64>>,
    /// Population outside the listed basis.
    pub discarded_weight: f64,
}

/// Density matrix in the computational basis when the state has two or four
/// modes, otherwise in the Fock basis of its space.
pub fn density_matrix_file(state: &StateMatrix) -> DensityMatrixFile {
    let (matrix, basis, discarded_weight): (CMatrix, Vec<String>, f64) =
        match state.space().num_modes() {
            2 => {
                let q = map_to_qubit_basis(state).expect("two-mode state");
                (q.matrix, q.labels, q.discarded_weight)
            }
            4 => {
                let q = map_to_two_cavity_basis(state).expect("four-mode state");
                (q.matrix, q.labels, q.discarded_weight)
            }
            _ => {
                let space = state.space();
                let labels = (0..space.dim())
                    .map(|i| {
                        let occ = space.occupations_of(i);
                        format!(
                            "|{}>",
                            occ.iter().map(|o| o.to_string()).collect::<Vec<_>>().join(",")
                        )
                    })
                    .collect();
                (state.data().clone(), labels, 0.0)
            }
        };
    let n = matrix.nrows();
    let grab = |f: fn(num_complex::Complex64) -> f64| -> Vec<Vec<f64>> {
        (0..n).map(|i| (0..n).map(|j| f(matrix[(i, j)])).collect()).collect()
    };
    DensityMatrixFile {
        basis,
        real: grab(|z| z.re),
        imag: grab(|z| z.im),
        discarded_weight,
    }
}

const WIDTH: f64 = 780.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 230.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;
const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    s
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Horizontal reference line.
pub struct Level {
    pub label: String,
    pub y: f64,
}

/// Shaded vertical band; `fill` is any SVG color.
pub struct Band {
    pub fill: &'static str,
    pub label: String,
    pub x0: f64,
    pub x1: f64,
}

pub struct LinePlot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub log_x: bool,
    pub series: Vec<Series>,
    pub levels: Vec<Level>,
    pub bands: Vec<Band>,
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

/// Tick positions in plot coordinates (log10 when `log`) with labels.
fn x_ticks(lo: f64, hi: f64, log: bool) -> Vec<(f64, String)> {
    if log {
        let (first, last) = (lo.ceil() as i32, hi.floor() as i32);
        if last >= first {
            let stride = ((last - first) / 8 + 1) as usize;
            return (first..=last).step_by(stride).map(|k| (k as f64, format!("1e{k}"))).collect();
        }
        return vec![(lo, format!("{:.2e}", 10f64.powf(lo))), (hi, format!("{:.2e}", 10f64.powf(hi)))];
    }
    (0..=4)
        .map(|k| {
            let v = lo + (hi - lo) * k as f64 / 4.0;
            (v, format!("{v:.3e}"))
        })
        .collect()
}

impl LinePlot<'_> {
    pub fn render(&self) -> String {
        let tx = |x: f64| if self.log_x { x.log10() } else { x };
        let xs = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.0))
            .chain(self.bands.iter().flat_map(|b| [b.x0, b.x1]))
            .filter(|x| !self.log_x || *x > 0.0)
            .map(tx);
        let (xmin, xmax) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        let ys = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.1))
            .chain(self.levels.iter().map(|l| l.y))
            .filter(|y| y.is_finite());
        let (ymin, ymax) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
        let (xmin, xmax) = if xmax > xmin { (xmin, xmax) } else { nice_range(xmin, xmax) };
        let (ymin, ymax) = nice_range(ymin, ymax);
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let px = |x: f64| MARGIN_L + (tx(x) - xmin) / (xmax - xmin) * pw;
        let py = |y: f64| MARGIN_T + (ymax - y) / (ymax - ymin) * ph;

        let mut s = svg_open(self.title);
        for b in &self.bands {
            let (a, c) = (px(b.x0), px(b.x1));
            let _ = writeln!(
                s,
                r##"<rect x="{a:.2}" y="{MARGIN_T}" width="{:.2}" height="{ph}" fill="{}"/><text x="{:.2}" y="{:.2}" text-anchor="middle" fill="#555">{}</text>"##,
                (c - a).max(0.5),
                b.fill,
                (a + c) / 2.0,
                MARGIN_T + 14.0,
                escape(&b.label)
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for (fx, label) in x_ticks(xmin, xmax, self.log_x) {
            let gx = MARGIN_L + (fx - xmin) / (xmax - xmin) * pw;
            let _ = writeln!(
                s,
                r#"<line x1="{gx:.2}" x2="{gx:.2}" y1="{:.2}" y2="{:.2}" stroke="black"/><text x="{gx:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#,
                MARGIN_T + ph,
                MARGIN_T + ph + 5.0,
                MARGIN_T + ph + 18.0
            );
        }
        for k in 0..=4 {
            let fy = ymin + (ymax - ymin) * k as f64 / 4.0;
            let gy = MARGIN_T + ph - ph * k as f64 / 4.0;
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{fy:.3}</text>"#,
                MARGIN_L - 6.0,
                gy + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_L + pw / 2.0,
            HEIGHT - 12.0,
            escape(self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            MARGIN_T + ph / 2.0,
            MARGIN_T + ph / 2.0,
            escape(self.y_label)
        );
        for l in &self.levels {
            let y = py(l.y);
            let _ = writeln!(
                s,
                r#"<line x1="{MARGIN_L}" x2="{:.2}" y1="{y:.2}" y2="{y:.2}" stroke="red" stroke-dasharray="6 4"/>"#,
                MARGIN_L + pw
            );
        }
        let mut legend_y = MARGIN_T + 10.0;
        let legend_x = MARGIN_L + pw + 12.0;
        for (k, ser) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let path: Vec<String> = ser
                .points
                .iter()
                .filter(|(x, y)| y.is_finite() && (!self.log_x || *x > 0.0))
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            if !path.is_empty() {
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    path.join(" ")
                );
            }
            let _ = writeln!(
                s,
                r#"<line x1="{legend_x:.2}" x2="{:.2}" y1="{legend_y:.2}" y2="{legend_y:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                legend_x + 18.0,
                legend_x + 24.0,
                legend_y + 4.0,
                escape(&ser.label)
            );
            legend_y += 18.0;
        }
        for l in &self.levels {
            let _ = writeln!(
                s,
                r#"<line x1="{legend_x:.2}" x2="{:.2}" y1="{legend_y:.2}" y2="{legend_y:.2}" stroke="red" stroke-dasharray="6 4"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                legend_x + 18.0,
                legend_x + 24.0,
                legend_y + 4.0,
                escape(&l.label)
            );
            legend_y += 18.0;
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Bar rendering of the real part of a density matrix, one bar per entry in
/// row-major order, grouped by row.
pub fn density_bars(title: &str, file: &DensityMatrixFile) -> String {
    let n = file.basis.len();
    let mut s = svg_open(title);
    let pw = WIDTH - MARGIN_L - 30.0;
    let ph = HEIGHT - MARGIN_T - MARGIN_B - 30.0;
    let base = MARGIN_T + ph / 2.0 + 10.0;
    let scale = ph / 2.0;
    let slot = pw / (n * n).max(1) as f64;
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN_L}" x2="{:.2}" y1="{base:.2}" y2="{base:.2}" stroke="black"/>"#,
        MARGIN_L + pw
    );
    for i in 0..n {
        for j in 0..n {
            let v = file.real[i][j];
            let x = MARGIN_L + (i * n + j) as f64 * slot;
            let h = v.abs() * scale;
            let y = if v >= 0.0 { base - h } else { base };
            let color = PALETTE[i % PALETTE.len()];
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{y:.2}" width="{:.2}" height="{h:.2}" fill="{color}"><title>{} {} {v:.4}</title></rect>"#,
                x + slot * 0.1,
                slot * 0.8,
                escape(&file.basis[i]),
                escape(&file.basis[j])
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_L + (i as f64 + 0.5) * n as f64 * slot,
            HEIGHT - 20.0,
            escape(&file.basis[i])
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">+1</text><text x="{:.2}" y="{:.2}" text-anchor="end">-1</text>"#,
        MARGIN_L - 6.0,
        base - scale + 4.0,
        MARGIN_L - 6.0,
        base + scale + 4.0
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::make_superposition_input;

    #[test]
    fn number_format() {
        assert_eq!(num(0.5), "5.00000000000e-1");
        assert_eq!(num(1234.5678901234), "1.23456789012e3");
        assert_eq!(opt_num(None), "");
    }

    #[test]
    fn csv_quoting() {
        let mut c = Csv::new(&["a".into(), "b".into()]);
        c.row(&["1".into(), "x, y".into()]);
        assert_eq!(c.finish(), "a,b\n1,\"x, y\"\n");
    }

    #[test]
    fn superposition_density_file() {
        let f = density_matrix_file(&make_superposition_input().unwrap());
        assert_eq!(f.basis, vec!["|00>", "|01>", "|10>", "|11>"]);
        for i in 0..4 {
            for j in 0..4 {
                let expect = if (1..=2).contains(&i) && (1..=2).contains(&j) { 0.5 } else { 0.0 };
                assert!((f.real[i][j] - expect).abs() < 1e-15);
            }
        }
        let svg = density_bars("initial", &f);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn line_plot_renders() {
        let p = LinePlot {
            title: "t",
            x_label: "x",
            y_label: "y",
            log_x: true,
            series: vec![Series {
                label: "s".into(),
                points: vec![(1e-3, 0.9), (1.0, 0.7)],
            }],
            levels: vec![Level {
                label: "bound".into(),
                y: 2.0 / 3.0,
            }],
            bands: vec![],
        };
        let svg = p.render();
        assert!(svg.contains("polyline") && svg.contains("stroke-dasharray"));
    }
}
