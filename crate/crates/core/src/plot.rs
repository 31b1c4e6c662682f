//! SVG overlay emission: mask outlines, particles, seeds and truth markers.
//! Plot output only, no interactive UI.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::metrics::TruthSet;
use crate::pipeline::DetectionResult;
use crate::scalar::Real;

fn svg_header(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width:.1} {height:.1}\" \
         width=\"{width:.1}\" height=\"{height:.1}\">"
    );
    let _ = writeln!(
        out,
        "<rect x=\"0\" y=\"0\" width=\"{width:.1}\" height=\"{height:.1}\" fill=\"#101418\"/>"
    );
}

fn polyline<T: Real>(out: &mut String, pts: &[[T; 2]], color: &str, to_xy: impl Fn(&[T]) -> (f64, f64)) {
    if pts.is_empty() {
        return;
    }
    let _ = write!(out, "<polygon points=\"");
    for p in pts {
        let (x, y) = to_xy(&p[..]);
        let _ = write!(out, "{x:.2},{y:.2} ");
    }
    let _ = writeln!(out, "\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1\"/>");
}

fn circle(out: &mut String, x: f64, y: f64, r: f64, color: &str, fill: bool) {
    let fill_attr = if fill { color } else { "none" };
    let _ = writeln!(
        out,
        "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{r:.2}\" fill=\"{fill_attr}\" \
         stroke=\"{color}\" stroke-width=\"1\"/>"
    );
}

fn cross(out: &mut String, x: f64, y: f64, r: f64, color: &str) {
    let _ = writeln!(
        out,
        "<path d=\"M {x0:.2} {y0:.2} L {x1:.2} {y1:.2} M {x0:.2} {y1:.2} L {x1:.2} {y0:.2}\" \
         stroke=\"{color}\" stroke-width=\"1.5\"/>",
        x0 = x - r,
        y0 = y - r,
        x1 = x + r,
        y1 = y + r,
    );
}

/// Image-space overlay: object outlines, final particles, seeds, truth.
/// Grid row/col map to SVG y/x.
pub fn svg_image_overlay<T: Real>(
    path: &Path,
    dims: &[usize],
    result: &DetectionResult<T>,
    truth: Option<&TruthSet<T>>,
) -> Result<()> {
    let (h, w) = (dims[0] as f64, dims[1] as f64);
    let mut out = String::new();
    svg_header(&mut out, w, h);
    let to_xy = |p: &[T]| -> (f64, f64) {
        (p[1].to_f64().unwrap(), p[0].to_f64().unwrap())
    };
    for outline in &result.outlines {
        polyline(&mut out, outline, "#5aa0ff", to_xy);
    }
    for object in &result.objects {
        for p in &object.particles {
            let (x, y) = to_xy(p);
            circle(&mut out, x, y, 0.8, "#9be07c", true);
        }
        for s in &object.seeds {
            let (x, y) = to_xy(&s.position);
            circle(&mut out, x, y, 2.5, "#ff5050", false);
        }
    }
    if let Some(truth) = truth {
        for pts in truth.objects.values() {
            for p in pts {
                let (x, y) = to_xy(p);
                cross(&mut out, x, y, 2.0, "#ffd24a");
            }
        }
    }
    out.push_str("</svg>\n");
    std::fs::write(path, out)?;
    Ok(())
}

/// Scatter overlay: a 2-D projection (axes 0 and 1) of a point sample with
/// seeds and truth in data units.
pub fn svg_scatter_overlay<T: Real>(
    path: &Path,
    points: &[Vec<T>],
    result: &DetectionResult<T>,
    truth: Option<&TruthSet<T>>,
) -> Result<()> {
    let size = 640.0f64;
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for axis in 0..2 {
            let v = p[axis].to_f64().unwrap();
            lo[axis] = lo[axis].min(v);
            hi[axis] = hi[axis].max(v);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let margin = 20.0;
    let scale = (size - 2.0 * margin) / span;
    let to_xy = |p: &[T]| -> (f64, f64) {
        (
            margin + (p[1].to_f64().unwrap() - lo[1]) * scale,
            margin + (p[0].to_f64().unwrap() - lo[0]) * scale,
        )
    };

    let mut out = String::new();
    svg_header(&mut out, size, size);
    let stride = (points.len() / 4000).max(1);
    for p in points.iter().step_by(stride) {
        let (x, y) = to_xy(p);
        let _ = writeln!(
            out,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"0.6\" fill=\"#47586b\"/>"
        );
    }
    for object in &result.objects {
        for p in &object.particles {
            let (x, y) = to_xy(p);
            circle(&mut out, x, y, 1.2, "#9be07c", true);
        }
        for s in &object.seeds {
            let (x, y) = to_xy(&s.position);
            circle(&mut out, x, y, 4.0, "#ff5050", false);
        }
    }
    if let Some(truth) = truth {
        for pts in truth.objects.values() {
            for p in pts {
                let (x, y) = to_xy(p);
                cross(&mut out, x, y, 3.0, "#ffd24a");
            }
        }
    }
    out.push_str("</svg>\n");
    std::fs::write(path, out)?;
    Ok(())
}
