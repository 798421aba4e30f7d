//! Phase portraits of the two scalar factorization landscapes: the linear
//! one `g = (1 − w_2 w_1)²` and the sigmoidal one `g = (1 − w_2 σ(w_1))²`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sigmoid::{manifold_curve, sig_flow_field, sigma, SigState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortraitKind {
    Linear,
    Sigmoid,
}

impl PortraitKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PortraitKind::Linear => "linear",
            PortraitKind::Sigmoid => "sigmoid",
        }
    }

    pub fn field(&self, w1: f64, w2: f64) -> (f64, f64) {
        match self {
            PortraitKind::Linear => linear_field(w1, w2),
            PortraitKind::Sigmoid => sig_flow_field(SigState::new(w1, w2)),
        }
    }
}

/// `(2(1 − w_2 w_1) w_2, 2(1 − w_2 w_1) w_1)`.
pub fn linear_field(w1: f64, w2: f64) -> (f64, f64) {
    let r = 2.0 * (1.0 - w2 * w1);
    (r * w2, r * w1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub w1_min: f64,
    pub w1_max: f64,
    pub w2_min: f64,
    pub w2_max: f64,
}

impl Bounds {
    pub fn square(half_width: f64) -> Self {
        Self {
            w1_min: -half_width,
            w1_max: half_width,
            w2_min: -half_width,
            w2_max: half_width,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = [self.w1_min, self.w1_max, self.w2_min, self.w2_max].iter().all(|v| v.is_finite())
            && self.w1_min < self.w1_max
            && self.w2_min < self.w2_max;
        if !ok {
            return Err(Error::InvalidArgument(format!("empty or non-finite bounds {self:?}")));
        }
        Ok(())
    }

    fn contains(&self, w1: f64, w2: f64) -> bool {
        (self.w1_min..=self.w1_max).contains(&w1) && (self.w2_min..=self.w2_max).contains(&w2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortraitSample {
    pub w1: f64,
    pub w2: f64,
    pub dw1: f64,
    pub dw2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlayKind {
    Target,
    Manifold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Overlay {
    pub curve_id: String,
    pub kind: OverlayKind,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortraitData {
    pub kind: PortraitKind,
    pub bounds: Bounds,
    pub grid: (usize, usize),
    /// Row-major over `w_2`, then `w_1`.
    pub samples: Vec<PortraitSample>,
    pub overlays: Vec<Overlay>,
}

impl PortraitData {
    pub fn overlays_of(&self, kind: OverlayKind) -> impl Iterator<Item = &Overlay> {
        self.overlays.iter().filter(move |o| o.kind == kind)
    }
}

/// Points per overlay curve before clipping.
const CURVE_RESOLUTION: usize = 801;

/// Samples `w_2 = f(w_1)` across the bounds and splits it wherever it leaves
/// the rectangle or `f` is undefined.
fn clipped_curve(id: &str, kind: OverlayKind, bounds: &Bounds, lo: f64, hi: f64, f: impl Fn(f64) -> Option<f64>) -> Vec<Overlay> {
    let mut pieces: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut current = Vec::new();
    let last = (CURVE_RESOLUTION - 1) as f64;
    for i in 0..CURVE_RESOLUTION {
        let w1 = lo + (hi - lo) * i as f64 / last;
        match f(w1).filter(|w2| bounds.contains(w1, *w2)) {
            Some(w2) => current.push((w1, w2)),
            None => {
                if current.len() >= 2 {
                    pieces.push(std::mem::take(&mut current));
                }
                current.clear();
            }
        }
    }
    if current.len() >= 2 {
        pieces.push(current);
    }
    let many = pieces.len() > 1;
    pieces
        .into_iter()
        .enumerate()
        .map(|(i, points)| Overlay {
            curve_id: if many { format!("{id}_{}", i + 1) } else { id.to_string() },
            kind,
            points,
        })
        .collect()
}

/// Smallest `|σ(w_1)|` for which the target curve `w_2 = 1/σ(w_1)` is drawn.
pub const TARGET_SIGMA_FLOOR: f64 = 1e-3;

fn overlays(kind: PortraitKind, b: &Bounds, include_manifolds: bool) -> Vec<Overlay> {
    let mut out = Vec::new();
    let target = |w1: f64| -> Option<f64> {
        match kind {
            PortraitKind::Linear => (w1.abs() > TARGET_SIGMA_FLOOR).then(|| 1.0 / w1),
            PortraitKind::Sigmoid => {
                let s = sigma(w1);
                (s.abs() > TARGET_SIGMA_FLOOR).then(|| 1.0 / s)
            }
        }
    };
    if b.w1_max > 0.0 {
        out.extend(clipped_curve("target_pos", OverlayKind::Target, b, b.w1_min.max(0.0), b.w1_max, target));
    }
    if b.w1_min < 0.0 {
        out.extend(clipped_curve("target_neg", OverlayKind::Target, b, b.w1_min, b.w1_max.min(0.0), target));
    }
    if include_manifolds {
        let (plus, minus): (Box<dyn Fn(f64) -> Option<f64>>, Box<dyn Fn(f64) -> Option<f64>>) = match kind {
            PortraitKind::Linear => (Box::new(Some), Box::new(|w1: f64| Some(-w1))),
            PortraitKind::Sigmoid => (
                Box::new(|w1| Some(manifold_curve(w1).0)),
                Box::new(|w1| Some(manifold_curve(w1).1)),
            ),
        };
        out.extend(clipped_curve("manifold_plus", OverlayKind::Manifold, b, b.w1_min, b.w1_max, plus));
        out.extend(clipped_curve("manifold_minus", OverlayKind::Manifold, b, b.w1_min, b.w1_max, minus));
    }
    out
}

/// Field samples on a `grid.0 × grid.1` lattice spanning the bounds, plus
/// the target set and, optionally, the saddle's manifolds.
pub fn phase_portrait(kind: PortraitKind, bounds: Bounds, grid: (usize, usize), include_manifolds: bool) -> Result<PortraitData> {
    bounds.validate()?;
    let (nx, ny) = grid;
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidArgument(format!("grid must be at least 2x2 (got {nx}x{ny})")));
    }
    let coord = |lo: f64, hi: f64, i: usize, n: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
    let samples = (0..ny)
        .flat_map(|j| (0..nx).map(move |i| (i, j)))
        .map(|(i, j)| {
            let w1 = coord(bounds.w1_min, bounds.w1_max, i, nx);
            let w2 = coord(bounds.w2_min, bounds.w2_max, j, ny);
            let (dw1, dw2) = kind.field(w1, w2);
            PortraitSample { w1, w2, dw1, dw2 }
        })
        .collect();
    Ok(PortraitData {
        kind,
        bounds,
        grid,
        samples,
        overlays: overlays(kind, &bounds, include_manifolds),
    })
}

pub const SVG_SIZE: f64 = 800.0;
const SVG_MARGIN: f64 = 40.0;

/// SVG 1.1 rendering: one `path.arrow` per sample, `polyline.target` and
/// `polyline.manifold` for the overlays.
pub fn render_svg(p: &PortraitData) -> Result<String> {
    if p.samples.is_empty() {
        return Err(Error::InvalidArgument("empty portrait".into()));
    }
    let b = &p.bounds;
    let span = SVG_SIZE - 2.0 * SVG_MARGIN;
    let x = |w1: f64| SVG_MARGIN + (w1 - b.w1_min) / (b.w1_max - b.w1_min) * span;
    let y = |w2: f64| SVG_SIZE - SVG_MARGIN - (w2 - b.w2_min) / (b.w2_max - b.w2_min) * span;
    let cell = span / (p.grid.0.max(p.grid.1) - 1) as f64;
    let max_mag = p
        .samples
        .iter()
        .map(|s| s.dw1.hypot(s.dw2))
        .filter(|m| m.is_finite())
        .fold(0.0, f64::max);

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{0}" height="{0}" viewBox="0 0 {0} {0}">"#,
        SVG_SIZE
    );
    let _ = writeln!(
        out,
        "<style>.arrow{{stroke:#555;stroke-width:1;fill:none}}.target{{stroke:#c0392b;stroke-width:2;fill:none}}.manifold{{stroke:#2471a3;stroke-width:2;fill:none;stroke-dasharray:6 4}}.frame{{stroke:#000;fill:none}}</style>"
    );
    let _ = writeln!(
        out,
        r#"<title>{} landscape, w1 in [{}, {}], w2 in [{}, {}]</title>"#,
        p.kind.as_str(),
        b.w1_min,
        b.w1_max,
        b.w2_min,
        b.w2_max
    );
    let _ = writeln!(
        out,
        r#"<rect class="frame" x="{m:.3}" y="{m:.3}" width="{s:.3}" height="{s:.3}"/>"#,
        m = SVG_MARGIN,
        s = span
    );
    for s in &p.samples {
        let (x0, y0) = (x(s.w1), y(s.w2));
        let mag = s.dw1.hypot(s.dw2);
        let d = if mag > 0.0 && mag.is_finite() && max_mag > 0.0 {
            let len = 0.8 * cell * (0.25 + 0.75 * (mag / max_mag).sqrt());
            // screen y grows downward
            let (ux, uy) = (s.dw1 / mag, -s.dw2 / mag);
            let (x1, y1) = (x0 + len * ux, y0 + len * uy);
            let head = 0.3 * len;
            let (lx, ly) = (x1 - head * (ux * 0.866 - uy * 0.5), y1 - head * (uy * 0.866 + ux * 0.5));
            let (rx, ry) = (x1 - head * (ux * 0.866 + uy * 0.5), y1 - head * (uy * 0.866 - ux * 0.5));
            format!("M{x0:.3} {y0:.3}L{x1:.3} {y1:.3}M{lx:.3} {ly:.3}L{x1:.3} {y1:.3}L{rx:.3} {ry:.3}")
        } else {
            format!("M{x0:.3} {y0:.3}L{x0:.3} {y0:.3}")
        };
        let _ = writeln!(out, r#"<path class="arrow" d="{d}"/>"#);
    }
    for o in &p.overlays {
        let class = match o.kind {
            OverlayKind::Target => "target",
            OverlayKind::Manifold => "manifold",
        };
        let pts: Vec<String> = o.points.iter().map(|(a, c)| format!("{:.3},{:.3}", x(*a), y(*c))).collect();
        let _ = writeln!(out, r#"<polyline class="{class}" id="{}" points="{}"/>"#, o.curve_id, pts.join(" "));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn write_portrait_svg(p: &PortraitData, path: impl AsRef<Path>) -> Result<()> {
    let svg = render_svg(p)?;
    std::fs::write(path, svg)?;
    Ok(())
}
