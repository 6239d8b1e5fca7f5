//! CSV tables, SVG plots and PNG grids.
//!
//! CutOcclusion values are written in percent, iOcclusion as a raw ratio.
//! Every CSV starts with a `#` line recording the normalisation constants.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::dataio::{atomic_write, MetricKind, Normalization};
use crate::error::{Error, Result};
use crate::eval::DeltaSummary;
use crate::metrics::RobustnessCurve;

/// A curve with the model it belongs to.
#[derive(Clone, Debug)]
pub struct NamedCurve {
    pub model: String,
    pub curve: RobustnessCurve,
}

fn display_scale(kind: MetricKind) -> f64 {
    match kind {
        MetricKind::Cutocclusion => 100.0,
        _ => 1.0,
    }
}

fn provenance(norm: Option<&Normalization>) -> String {
    let join = |v: &[f32]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
    match norm {
        Some(n) => format!("# normalization mean={} std={}\n", join(&n.mean), join(&n.std)),
        None => "# normalization unknown\n".to_string(),
    }
}

fn check_name(name: &str) -> Result<()> {
    if name.contains([',', '\n', '"']) {
        return Err(Error::InvalidArgument(format!("model name {name:?} cannot go in a CSV field")));
    }
    Ok(())
}

pub fn curves_csv(curves: &[NamedCurve], norm: Option<&Normalization>) -> Result<String> {
    let mut out = provenance(norm);
    out.push_str("metric,model,fraction,mean,std,n_seeds\n");
    for nc in curves {
        check_name(&nc.model)?;
        let k = display_scale(nc.curve.kind);
        for (f, v) in nc.curve.fractions.iter().zip(&nc.curve.values) {
            writeln!(out, "{},{},{},{},{},{}", nc.curve.kind.as_str(), nc.model, f, v.mean * k, v.std * k, v.n).unwrap();
        }
    }
    Ok(out)
}

pub fn deltas_csv(model: &str, deltas: &[DeltaSummary], norm: Option<&Normalization>) -> Result<String> {
    check_name(model)?;
    let mut out = provenance(norm);
    out.push_str("metric,model,fraction,class,mean,std,n_seeds\n");
    for d in deltas {
        for (c, v) in d.per_class.iter().enumerate() {
            writeln!(out, "misclass-delta,{model},{},{c},{},{},{}", d.fraction, v.mean, v.std, v.n).unwrap();
        }
    }
    Ok(out)
}

/// Per-epoch training log.
pub fn epochs_csv(stats: &[crate::refmodel::EpochStats]) -> String {
    let mut out = String::from("epoch,lr,loss,train_accuracy\n");
    for s in stats {
        writeln!(out, "{},{},{},{}", s.epoch, s.lr, s.loss, s.train_accuracy).unwrap();
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    atomic_write(path, |w| w.write_all(text.as_bytes()))
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

struct Frame {
    width: f64,
    height: f64,
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x.0) / (self.x.1 - self.x.0) * (self.width - self.left - self.right)
    }

    fn py(&self, y: f64) -> f64 {
        self.height - self.bottom - (y - self.y.0) / (self.y.1 - self.y.0) * (self.height - self.top - self.bottom)
    }

    fn open(&self, title: &str, xlabel: &str, ylabel: &str) -> String {
        let mut s = String::new();
        writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
            w = self.width,
            h = self.height
        )
        .unwrap();
        writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
        writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, self.width / 2.0, escape(title)).unwrap();
        let (x0, x1, y0, y1) = (self.left, self.width - self.right, self.top, self.height - self.bottom);
        writeln!(s, r#"<path d="M{x0} {y0} L{x0} {y1} L{x1} {y1}" stroke="black" fill="none"/>"#).unwrap();
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, self.height - 8.0, escape(xlabel)).unwrap();
        writeln!(
            s,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(ylabel)
        )
        .unwrap();
        for i in 0..=5 {
            let v = self.y.0 + (self.y.1 - self.y.0) * i as f64 / 5.0;
            let y = self.py(v);
            writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/>"#, x0 - 4.0).unwrap();
            writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 6.0, y + 4.0, tick(v)).unwrap();
        }
        s
    }
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    }
}

/// Line plot of metric against fraction, one series per model, with
/// one-standard-deviation error bars.
pub fn curves_svg(curves: &[NamedCurve], title: &str) -> Result<String> {
    let points: Vec<(f64, f64, f64)> = curves
        .iter()
        .flat_map(|nc| {
            let k = display_scale(nc.curve.kind);
            nc.curve.fractions.iter().zip(&nc.curve.values).map(move |(&f, v)| (f, v.mean * k, v.std * k))
        })
        .collect();
    if points.is_empty() {
        return Err(Error::Empty("curves to plot"));
    }
    let xmin = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let xmax = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let ymin = points.iter().map(|p| p.1 - p.2).fold(f64::INFINITY, f64::min);
    let ymax = points.iter().map(|p| p.1 + p.2).fold(f64::NEG_INFINITY, f64::max);
    let frame = Frame {
        width: 640.0,
        height: 420.0,
        left: 70.0,
        right: 150.0,
        top: 36.0,
        bottom: 48.0,
        x: padded(xmin, xmax),
        y: padded(ymin.min(0.0), ymax),
    };
    let ylabel = match curves[0].curve.kind {
        MetricKind::Cutocclusion => "CutOcclusion accuracy (%)",
        _ => "iOcclusion",
    };
    let mut s = frame.open(title, "occluded fraction", ylabel);
    let mut fr: Vec<f64> = points.iter().map(|p| p.0).collect();
    fr.sort_by(f64::total_cmp);
    fr.dedup();
    let y_axis = frame.height - frame.bottom;
    for f in fr {
        let x = frame.px(f);
        writeln!(s, r#"<line x1="{x:.2}" y1="{y_axis}" x2="{x:.2}" y2="{}" stroke="black"/>"#, y_axis + 4.0).unwrap();
        writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, y_axis + 18.0, tick(f)).unwrap();
    }
    for (i, nc) in curves.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let k = display_scale(nc.curve.kind);
        let pts: Vec<(f64, f64, f64)> =
            nc.curve.fractions.iter().zip(&nc.curve.values).map(|(&f, v)| (f, v.mean * k, v.std * k)).collect();
        let path: Vec<String> = pts.iter().map(|&(f, m, _)| format!("{:.2},{:.2}", frame.px(f), frame.py(m))).collect();
        writeln!(s, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#, path.join(" ")).unwrap();
        for &(f, m, sd) in &pts {
            let (x, lo, hi) = (frame.px(f), frame.py(m - sd), frame.py(m + sd));
            writeln!(s, r#"<line x1="{x:.2}" y1="{lo:.2}" x2="{x:.2}" y2="{hi:.2}" stroke="{colour}"/>"#).unwrap();
            for y in [lo, hi] {
                writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{colour}"/>"#, x - 4.0, x + 4.0).unwrap();
            }
            writeln!(s, r#"<circle cx="{x:.2}" cy="{:.2}" r="3" fill="{colour}"/>"#, frame.py(m)).unwrap();
        }
        let ly = frame.top + 16.0 * i as f64 + 8.0;
        let lx = frame.width - frame.right + 12.0;
        writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/>"#, lx + 20.0).unwrap();
        writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&nc.model)).unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Grouped bars of mean per-class delta, one group per class and one bar per fraction.
pub fn deltas_svg(deltas: &[DeltaSummary], class_names: &[String], title: &str) -> Result<String> {
    let classes = deltas.first().ok_or(Error::Empty("deltas to plot"))?.per_class.len();
    let values: Vec<f64> = deltas.iter().flat_map(|d| d.per_class.iter().map(|v| v.mean)).collect();
    let lo = values.iter().copied().fold(0.0, f64::min);
    let hi = values.iter().copied().fold(0.0, f64::max);
    let frame = Frame {
        width: 120.0 + 60.0 * classes as f64 + 120.0,
        height: 380.0,
        left: 70.0,
        right: 120.0,
        top: 36.0,
        bottom: 48.0,
        x: (0.0, classes as f64),
        y: padded(lo, hi),
    };
    let mut s = frame.open(title, "class", "change in wrong-as-class count");
    let zero = frame.py(0.0);
    writeln!(s, r#"<line x1="{}" y1="{zero:.2}" x2="{}" y2="{zero:.2}" stroke="gray"/>"#, frame.left, frame.width - frame.right).unwrap();
    let group = frame.px(1.0) - frame.px(0.0);
    let bar = group * 0.8 / deltas.len() as f64;
    for c in 0..classes {
        let gx = frame.px(c as f64) + group * 0.1;
        let name = class_names.get(c).cloned().unwrap_or_else(|| c.to_string());
        writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, gx + group * 0.4, frame.height - frame.bottom + 16.0, escape(&name)).unwrap();
        for (j, d) in deltas.iter().enumerate() {
            let y = frame.py(d.per_class[c].mean);
            let (top, h) = if y < zero { (y, zero - y) } else { (zero, y - zero) };
            writeln!(
                s,
                r#"<rect x="{:.2}" y="{top:.2}" width="{bar:.2}" height="{h:.2}" fill="{}"/>"#,
                gx + bar * j as f64,
                PALETTE[j % PALETTE.len()]
            )
            .unwrap();
        }
    }
    for (j, d) in deltas.iter().enumerate() {
        let ly = frame.top + 16.0 * j as f64 + 8.0;
        let lx = frame.width - frame.right + 12.0;
        writeln!(s, r#"<rect x="{lx}" y="{}" width="12" height="10" fill="{}"/>"#, ly - 5.0, PALETTE[j % PALETTE.len()]).unwrap();
        writeln!(s, r#"<text x="{}" y="{}">fraction {}</text>"#, lx + 18.0, ly + 4.0, d.fraction).unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// 8-bit RGB PNG.
pub fn write_png_rgb(path: &Path, width: u32, height: u32, rgb: &[u8]) -> Result<()> {
    if rgb.len() != width as usize * height as usize * 3 {
        return Err(Error::shape("rgb bytes", width as usize * height as usize * 3, rgb.len()));
    }
    atomic_write(path, |w| {
        let mut enc = png::Encoder::new(w, width, height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(std::io::Error::other)?;
        writer.write_image_data(rgb).map_err(std::io::Error::other)?;
        writer.finish().map_err(std::io::Error::other)
    })
}
