//! On-disk formats.
//!
//! Field binaries: magic `HSF1`, little-endian `u32` rows, `u32` cols, `u8`
//! kind (0 real, 1 complex interleaved re/im), then the row-major `f64`
//! payload. CSVs carry a header row and print floats in shortest
//! round-trip form.

use std::fmt::Write as _;
use std::path::Path;

use helmscat_core::{AcquisitionGeometry, Complex64, HistoryEntry, MeasurementSet, SolveReport};

use crate::error::CliError;

pub const HSF_MAGIC: &[u8; 4] = b"HSF1";

#[derive(Clone, Debug, PartialEq)]
pub enum FieldData {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldFile {
    pub rows: u32,
    pub cols: u32,
    pub data: FieldData,
}

impl FieldFile {
    pub fn real(rows: u32, cols: u32, values: Vec<f64>) -> Self {
        Self {
            rows,
            cols,
            data: FieldData::Real(values),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + 16 * (self.rows as usize) * (self.cols as usize));
        out.extend_from_slice(HSF_MAGIC);
        out.extend_from_slice(&self.rows.to_le_bytes());
        out.extend_from_slice(&self.cols.to_le_bytes());
        match &self.data {
            FieldData::Real(v) => {
                out.push(0);
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            FieldData::Complex(v) => {
                out.push(1);
                for z in v {
                    out.extend_from_slice(&z.re.to_le_bytes());
                    out.extend_from_slice(&z.im.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, String> {
        if bytes.len() < 13 || &bytes[..4] != HSF_MAGIC {
            return Err("missing HSF1 header".into());
        }
        let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let count = rows as usize * cols as usize;
        let payload = &bytes[13..];
        let floats = |n: usize| -> Result<Vec<f64>, String> {
            if payload.len() != 8 * n {
                return Err(format!("expected {} payload bytes, found {}", 8 * n, payload.len()));
            }
            Ok(payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let data = match bytes[12] {
            0 => FieldData::Real(floats(count)?),
            1 => FieldData::Complex(
                floats(2 * count)?
                    .chunks_exact(2)
                    .map(|c| Complex64::new(c[0], c[1]))
                    .collect(),
            ),
            k => return Err(format!("unknown field kind {k}")),
        };
        Ok(Self { rows, cols, data })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        Self::decode(&bytes).map_err(|message| CliError::Format {
            path: path.display().to_string(),
            message,
        })
    }
}

pub fn measurements_csv(data: &MeasurementSet, geometry: &AcquisitionGeometry) -> String {
    let mut out = String::from("view,sensor,re,im\n");
    for (q, ys) in data.views.iter().enumerate() {
        for (&m, y) in geometry.active(q).iter().zip(ys) {
            let _ = writeln!(out, "{q},{m},{},{}", y.re, y.im);
        }
    }
    out
}

/// Parses a measurement CSV against the geometry's active sensor lists.
pub fn parse_measurements(text: &str, geometry: &AcquisitionGeometry, path: &str) -> Result<MeasurementSet, CliError> {
    let fail = |message: String| CliError::Format {
        path: path.to_string(),
        message,
    };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("view,sensor,re,im") {
        return Err(fail("expected header view,sensor,re,im".into()));
    }
    let mut views: Vec<Vec<Complex64>> = vec![Vec::new(); geometry.num_views()];
    for (no, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(fail(format!("line {}: expected 4 columns", no + 2)));
        }
        let q: usize = cols[0].parse().map_err(|_| fail(format!("line {}: bad view", no + 2)))?;
        let m: usize = cols[1].parse().map_err(|_| fail(format!("line {}: bad sensor", no + 2)))?;
        let re: f64 = cols[2].parse().map_err(|_| fail(format!("line {}: bad real part", no + 2)))?;
        let im: f64 = cols[3].parse().map_err(|_| fail(format!("line {}: bad imaginary part", no + 2)))?;
        let slot = views
            .get_mut(q)
            .ok_or_else(|| fail(format!("line {}: view {q} not in geometry", no + 2)))?;
        let expected = geometry.active(q).get(slot.len()).copied();
        if expected != Some(m) {
            return Err(fail(format!(
                "line {}: sensor {m} out of order for view {q} (expected {expected:?})",
                no + 2
            )));
        }
        slot.push(Complex64::new(re, im));
    }
    let set = MeasurementSet { views };
    set.check(geometry).map_err(|e| fail(e.to_string()))?;
    Ok(set)
}

pub fn reports_csv(reports: &[SolveReport]) -> String {
    let mut out = String::from("view,iterations,converged,relative_residual,work_units\n");
    for (q, r) in reports.iter().enumerate() {
        let _ = writeln!(
            out,
            "{q},{},{},{},{}",
            r.iterations,
            r.converged,
            r.final_relative_residual(),
            r.work_units
        );
    }
    out
}

pub fn history_csv(entries: &[HistoryEntry], timing: bool) -> String {
    let mut out = String::from("iteration,objective,snr,work_units");
    out.push_str(if timing { ",seconds\n" } else { "\n" });
    for e in entries {
        let snr = e.snr.map(|s| s.to_string()).unwrap_or_default();
        let _ = write!(out, "{},{},{},{}", e.iteration, e.objective, snr, e.work_units);
        if timing {
            let _ = write!(out, ",{}", e.seconds);
        }
        out.push('\n');
    }
    out
}

/// One row of a solver sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub contrast: f64,
    pub radius: f64,
    pub model: &'static str,
    pub iterations: usize,
    pub wall_seconds: Option<f64>,
    pub relative_error: f64,
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("contrast,radius,model,iterations,wall_seconds,relative_error_vs_analytic\n");
    for r in rows {
        let secs = r.wall_seconds.map(|s| s.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.contrast, r.radius, r.model, r.iterations, secs, r.relative_error
        );
    }
    out
}
