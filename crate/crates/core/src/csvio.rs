//! CSV emission and parsing for stacks, trajectories and experiment reports.
//!
//! Reals are written with 17 significant digits so that reading a file back
//! reproduces every value exactly.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::cost::MatrixCost;
use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::invariant::{deviation, invariants};
use crate::linnet::{LayerStack, NetShape};
use crate::portrait::{Overlay, OverlayKind, PortraitSample};
use crate::saddle::SaddleCertificate;
use crate::scalarcase::AccelReport;

/// `x` with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn parse_real(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Config(format!("bad number `{s}`: {e}")))
}

fn parse_opt_real(s: &str) -> Result<Option<f64>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_real(s).map(Some)
    }
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|e| Error::Config(format!("bad index `{s}`: {e}")))
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Config(format!("bad boolean `{other}`"))),
    }
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).flexible(true).from_writer(w)
}

/// Reads all records after checking the header.
fn records<R: Read>(r: R, expected: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(r);
    let header = rdr.headers()?.clone();
    let n = expected.len();
    if header.len() < n || header.iter().take(n).ne(expected.iter().copied()) {
        return Err(Error::Config(format!(
            "unexpected header `{}` (want `{}`)",
            header.iter().collect::<Vec<_>>().join(","),
            expected.join(",")
        )));
    }
    rdr.records().map(|r| r.map_err(Error::from)).collect()
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize) -> Result<&'a str> {
    rec.get(i)
        .ok_or_else(|| Error::Config(format!("row {:?} is missing column {i}", rec.position().map(|p| p.line()))))
}

pub fn create(path: impl AsRef<Path>) -> Result<File> {
    Ok(File::create(path)?)
}

pub fn open(path: impl AsRef<Path>) -> Result<File> {
    Ok(File::open(path)?)
}

pub const LAYER_HEADER: [&str; 4] = ["layer", "row", "col", "value"];

/// `layer,row,col,value` with layers numbered from 1 and rows/columns from 0.
pub fn write_stack<W: Write>(w: W, stack: &LayerStack) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(LAYER_HEADER)?;
    for (l, m) in stack.layers().iter().enumerate() {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                wtr.write_record([(l + 1).to_string(), r.to_string(), c.to_string(), fmt_real(m[(r, c)])])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Inverse of [`write_stack`]; the shape is inferred from the layer sizes.
pub fn read_stack<R: Read>(r: R) -> Result<LayerStack> {
    let mut entries: Vec<(usize, usize, usize, f64)> = Vec::new();
    for rec in records(r, &LAYER_HEADER)? {
        let layer = parse_usize(field(&rec, 0)?)?;
        if layer == 0 {
            return Err(Error::Config("layers are numbered from 1".into()));
        }
        entries.push((layer, parse_usize(field(&rec, 1)?)?, parse_usize(field(&rec, 2)?)?, parse_real(field(&rec, 3)?)?));
    }
    let depth = entries.iter().map(|e| e.0).max().ok_or_else(|| Error::Config("empty stack file".into()))?;
    let mut dims = vec![(0usize, 0usize); depth];
    for &(l, r, c, _) in &entries {
        dims[l - 1].0 = dims[l - 1].0.max(r + 1);
        dims[l - 1].1 = dims[l - 1].1.max(c + 1);
    }
    let mut layers: Vec<DMatrix<f64>> = dims.iter().map(|(r, c)| DMatrix::from_element(*r, *c, f64::NAN)).collect();
    for &(l, r, c, v) in &entries {
        layers[l - 1][(r, c)] = v;
    }
    if layers.iter().any(|m| m.iter().any(|v| v.is_nan())) {
        return Err(Error::Config("stack file has missing entries".into()));
    }
    if depth == 1 {
        return LayerStack::single(layers.pop().expect("one layer"));
    }
    let shape = NetShape::new(dims[depth - 1].0, dims[0].0, depth)?;
    LayerStack::new(shape, layers)
}

pub const TRAJECTORY_HEADER: [&str; 6] = ["t", "cost", "grad_g_norm", "grad_f_norm", "drift", "imbalance_c"];

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub cost: f64,
    pub grad_g_norm: f64,
    pub grad_f_norm: f64,
    pub drift: f64,
    pub imbalance_c: Option<f64>,
    /// Product entries, row-major.
    pub product: Vec<f64>,
}

/// One row per sample; `drift` is measured against the first sample.
pub fn trajectory_rows(traj: &Trajectory, cost: &MatrixCost) -> Result<Vec<TrajectoryRow>> {
    let first = &traj.first().stack;
    let inv0 = (first.depth() >= 2).then(|| invariants(first)).transpose()?;
    traj.samples
        .iter()
        .map(|s| {
            let product = s.stack.product();
            let (drift, imbalance_c) = match &inv0 {
                Some(inv0) => {
                    let inv = invariants(&s.stack)?;
                    (deviation(&inv, inv0), inv.imbalance_c)
                }
                None => (0.0, None),
            };
            Ok(TrajectoryRow {
                t: s.t,
                cost: s.cost,
                grad_g_norm: s.grad_norm,
                grad_f_norm: cost.grad(&product)?.norm(),
                drift,
                imbalance_c,
                product: product.transpose().as_slice().to_vec(),
            })
        })
        .collect()
}

/// `t,cost,grad_g_norm,grad_f_norm,drift,imbalance_c,w_0_0,…` where the
/// `w_r_c` columns hold the product entries row-major.
pub fn write_trajectory<W: Write>(w: W, n: usize, rows: &[TrajectoryRow]) -> Result<()> {
    let mut wtr = writer(w);
    let mut header: Vec<String> = TRAJECTORY_HEADER.iter().map(|s| s.to_string()).collect();
    for r in 0..n {
        for c in 0..n {
            header.push(format!("w_{r}_{c}"));
        }
    }
    wtr.write_record(&header)?;
    for row in rows {
        if row.product.len() != n * n {
            return Err(Error::dims(n * n, row.product.len()));
        }
        let mut rec = vec![
            fmt_real(row.t),
            fmt_real(row.cost),
            fmt_real(row.grad_g_norm),
            fmt_real(row.grad_f_norm),
            fmt_real(row.drift),
            row.imbalance_c.map(fmt_real).unwrap_or_default(),
        ];
        rec.extend(row.product.iter().map(|v| fmt_real(*v)));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_trajectory<R: Read>(r: R) -> Result<Vec<TrajectoryRow>> {
    records(r, &TRAJECTORY_HEADER)?
        .iter()
        .map(|rec| {
            let product = (TRAJECTORY_HEADER.len()..rec.len())
                .map(|i| parse_real(field(rec, i)?))
                .collect::<Result<_>>()?;
            Ok(TrajectoryRow {
                t: parse_real(field(rec, 0)?)?,
                cost: parse_real(field(rec, 1)?)?,
                grad_g_norm: parse_real(field(rec, 2)?)?,
                grad_f_norm: parse_real(field(rec, 3)?)?,
                drift: parse_real(field(rec, 4)?)?,
                imbalance_c: parse_opt_real(field(rec, 5)?)?,
                product,
            })
        })
        .collect()
}

fn write_real_table<W: Write>(w: W, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(header)?;
    for row in rows {
        wtr.write_record(row.iter().map(|v| fmt_real(*v)))?;
    }
    wtr.flush()?;
    Ok(())
}

fn read_real_table<R: Read>(r: R, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    records(r, header)?
        .iter()
        .map(|rec| (0..header.len()).map(|i| parse_real(field(rec, i)?)).collect())
        .collect()
}

pub const ACCEL_HEADER: [&str; 4] = ["t", "cost_low_c", "cost_high_c", "margin"];
pub const COLLAPSE_HEADER: [&str; 3] = ["tau", "z_low_c", "z_high_c"];

pub fn write_accel<W: Write>(w: W, report: &AccelReport) -> Result<()> {
    let rows = report
        .t_grid
        .iter()
        .zip(&report.cost_low_c)
        .zip(&report.cost_high_c)
        .map(|((t, l), h)| vec![*t, *l, *h, l - h]);
    write_real_table(w, &ACCEL_HEADER, rows)
}

/// Rows `[t, cost_low_c, cost_high_c, margin]`.
pub fn read_accel<R: Read>(r: R) -> Result<Vec<[f64; 4]>> {
    Ok(read_real_table(r, &ACCEL_HEADER)?.into_iter().map(|v| [v[0], v[1], v[2], v[3]]).collect())
}

/// `z` of both runs on the `τ` nodes of the low-imbalance run that the
/// high-imbalance run also covers.
pub fn collapse_rows(report: &AccelReport) -> Vec<[f64; 3]> {
    let high = &report.collapse_high;
    report
        .collapse_low
        .iter()
        .filter_map(|(tau, z)| {
            let i = high.partition_point(|(t, _)| t < tau);
            let zh = if i < high.len() && high[i].0 == *tau {
                high[i].1
            } else if i == 0 || i == high.len() {
                return None;
            } else {
                let (t0, z0) = high[i - 1];
                let (t1, z1) = high[i];
                z0 + (z1 - z0) * (tau - t0) / (t1 - t0)
            };
            Some([*tau, *z, zh])
        })
        .collect()
}

pub fn write_collapse<W: Write>(w: W, report: &AccelReport) -> Result<()> {
    write_real_table(w, &COLLAPSE_HEADER, collapse_rows(report).into_iter().map(|r| r.to_vec()))
}

pub fn read_collapse<R: Read>(r: R) -> Result<Vec<[f64; 3]>> {
    Ok(read_real_table(r, &COLLAPSE_HEADER)?.into_iter().map(|v| [v[0], v[1], v[2]]).collect())
}

pub const CERTIFICATE_HEADER: [&str; 4] = ["curvature", "q_bar", "min_eig", "is_strict_saddle"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateRow {
    pub curvature: f64,
    pub q_bar: f64,
    pub min_eig: f64,
    pub is_strict_saddle: bool,
}

impl From<&SaddleCertificate> for CertificateRow {
    fn from(c: &SaddleCertificate) -> Self {
        Self {
            curvature: c.curvature,
            q_bar: c.q_bar,
            min_eig: c.min_eig,
            is_strict_saddle: c.is_strict_saddle,
        }
    }
}

pub fn write_certificate<W: Write>(w: W, row: &CertificateRow) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(CERTIFICATE_HEADER)?;
    wtr.write_record([
        fmt_real(row.curvature),
        fmt_real(row.q_bar),
        fmt_real(row.min_eig),
        row.is_strict_saddle.to_string(),
    ])?;
    wtr.flush()?;
    Ok(())
}

pub fn read_certificate<R: Read>(r: R) -> Result<CertificateRow> {
    let recs = records(r, &CERTIFICATE_HEADER)?;
    let rec = match recs.as_slice() {
        [rec] => rec,
        other => return Err(Error::Config(format!("certificate file has {} rows", other.len()))),
    };
    Ok(CertificateRow {
        curvature: parse_real(field(rec, 0)?)?,
        q_bar: parse_real(field(rec, 1)?)?,
        min_eig: parse_real(field(rec, 2)?)?,
        is_strict_saddle: parse_bool(field(rec, 3)?)?,
    })
}

pub const PORTRAIT_HEADER: [&str; 4] = ["w1", "w2", "dw1", "dw2"];
pub const OVERLAY_HEADER: [&str; 3] = ["w1", "w2", "curve_id"];

pub fn write_portrait<W: Write>(w: W, samples: &[PortraitSample]) -> Result<()> {
    write_real_table(w, &PORTRAIT_HEADER, samples.iter().map(|s| vec![s.w1, s.w2, s.dw1, s.dw2]))
}

pub fn read_portrait<R: Read>(r: R) -> Result<Vec<PortraitSample>> {
    Ok(read_real_table(r, &PORTRAIT_HEADER)?
        .into_iter()
        .map(|v| PortraitSample {
            w1: v[0],
            w2: v[1],
            dw1: v[2],
            dw2: v[3],
        })
        .collect())
}

pub fn write_overlays<W: Write>(w: W, overlays: &[Overlay]) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(OVERLAY_HEADER)?;
    for o in overlays {
        for (a, b) in &o.points {
            wtr.write_record([fmt_real(*a), fmt_real(*b), o.curve_id.clone()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Groups consecutive rows by `curve_id`; the kind is read off the
/// `target`/`manifold` prefix.
pub fn read_overlays<R: Read>(r: R) -> Result<Vec<Overlay>> {
    let mut out: Vec<Overlay> = Vec::new();
    for rec in records(r, &OVERLAY_HEADER)? {
        let point = (parse_real(field(&rec, 0)?)?, parse_real(field(&rec, 1)?)?);
        let id = field(&rec, 2)?;
        match out.last_mut() {
            Some(o) if o.curve_id == id => o.points.push(point),
            _ => {
                let kind = if id.starts_with("manifold") {
                    OverlayKind::Manifold
                } else if id.starts_with("target") {
                    OverlayKind::Target
                } else {
                    return Err(Error::Config(format!("unknown curve id `{id}`")));
                };
                out.push(Overlay {
                    curve_id: id.to_string(),
                    kind,
                    points: vec![point],
                });
            }
        }
    }
    Ok(out)
}

/// Writes a header and string rows as-is.
pub fn write_rows<W: Write>(w: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(header)?;
    for row in rows {
        wtr.write_record(row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads string rows after checking the header.
pub fn read_rows<R: Read>(r: R, header: &[&str]) -> Result<Vec<Vec<String>>> {
    Ok(records(r, header)?
        .iter()
        .map(|rec| rec.iter().map(str::to_string).collect())
        .collect())
}
