//! File formats.
//!
//! Every CSV written here starts with `# schema_version: 1` followed by a
//! header row. Operators are stored as a `dims,d1,d2,…` header and then one
//! line per matrix row with interleaved `re,im` entries.

use std::io::{Read, Write};

use serde::Serialize;

use crate::bounds::BoundReport;
use crate::experiments::SweepRow;
use crate::process::ProcessTensor;
use crate::qmath::Operator;
use crate::{CMat, Error, Result, C64};

pub const SCHEMA_VERSION: u32 = 1;
const TENSOR_MAGIC: &[u8; 4] = b"MTPT";

fn schema_line<W: Write>(w: &mut W) -> Result<()> {
    writeln!(w, "# schema_version: {SCHEMA_VERSION}")?;
    Ok(())
}

fn write_matrix_rows<W: Write>(w: &mut csv::Writer<W>, dims: &[usize], m: &CMat) -> Result<()> {
    let mut head = vec!["dims".to_string()];
    head.extend(dims.iter().map(usize::to_string));
    w.write_record(&head)?;
    for i in 0..m.nrows() {
        let rec: Vec<String> = (0..m.ncols())
            .flat_map(|j| [m[(i, j)].re.to_string(), m[(i, j)].im.to_string()])
            .collect();
        w.write_record(&rec)?;
    }
    Ok(())
}

pub fn write_operator_csv<W: Write>(mut w: W, op: &Operator) -> Result<()> {
    schema_line(&mut w)?;
    let mut cw = csv::WriterBuilder::new().flexible(true).from_writer(w);
    write_matrix_rows(&mut cw, op.dims(), op.matrix())?;
    cw.flush()?;
    Ok(())
}

/// Reads an operator; `#` lines are ignored.
pub fn read_operator_csv<R: Read>(r: R) -> Result<Operator> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut records = rd.records();
    let head = records
        .next()
        .ok_or_else(|| Error::Parse("empty operator file".into()))??;
    if head.get(0) != Some("dims") || head.len() < 2 {
        return Err(Error::Parse("first row must be 'dims,d1,…'".into()));
    }
    let dims = head
        .iter()
        .skip(1)
        .map(|s| s.parse::<usize>().map_err(|e| Error::Parse(format!("dimension '{s}': {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let d: usize = dims.iter().product();
    let mut data = Vec::with_capacity(d * d);
    let mut rows = 0;
    for rec in records {
        let rec = rec?;
        if rec.len() != 2 * d {
            return Err(Error::Parse(format!(
                "row {rows} has {} values, expected {}",
                rec.len(),
                2 * d
            )));
        }
        let vals = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("value '{s}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        data.extend(vals.chunks(2).map(|p| C64::new(p[0], p[1])));
        rows += 1;
    }
    if rows != d {
        return Err(Error::Parse(format!("{rows} rows for dimension {d}")));
    }
    Operator::new(CMat::from_row_slice(d, d, &data), dims)
}

pub fn write_bound_reports_csv<W: Write>(mut w: W, reports: &[BoundReport]) -> Result<()> {
    schema_line(&mut w)?;
    let mut cw = csv::Writer::from_writer(w);
    if reports.is_empty() {
        cw.write_record(["context", "k", "d_S", "d_E", "d_eff", "lhs", "stderr", "rhs", "satisfied"])?;
    }
    for r in reports {
        cw.serialize(BoundRecordHeader::from(r))?;
    }
    cw.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct BoundRecordHeader {
    context: String,
    k: usize,
    #[serde(rename = "d_S")]
    d_s: usize,
    #[serde(rename = "d_E")]
    d_e: usize,
    d_eff: f64,
    lhs: f64,
    stderr: f64,
    rhs: f64,
    satisfied: bool,
}

impl From<&BoundReport> for BoundRecordHeader {
    fn from(r: &BoundReport) -> Self {
        BoundRecordHeader {
            context: r.label(),
            k: r.k,
            d_s: r.d_s,
            d_e: r.d_e,
            d_eff: r.d_eff,
            lhs: r.lhs_estimate,
            stderr: r.lhs_stderr,
            rhs: r.rhs,
            satisfied: r.satisfied,
        }
    }
}

#[derive(Serialize)]
struct SweepRecord {
    #[serde(rename = "d_E")]
    d_e: usize,
    d_eff_mean: f64,
    d_eff_min: f64,
    d_eff_max: f64,
    #[serde(rename = "N_upsilon")]
    n_upsilon: f64,
    #[serde(rename = "N_upsilon_stderr")]
    n_upsilon_stderr: f64,
    #[serde(rename = "N_omega")]
    n_omega: f64,
    #[serde(rename = "N_omega_stderr")]
    n_omega_stderr: f64,
    mode: &'static str,
    n_trials: usize,
}

pub const SWEEP_COLUMNS: [&str; 10] = [
    "d_E",
    "d_eff_mean",
    "d_eff_min",
    "d_eff_max",
    "N_upsilon",
    "N_upsilon_stderr",
    "N_omega",
    "N_omega_stderr",
    "mode",
    "n_trials",
];

pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> Result<()> {
    schema_line(&mut w)?;
    let mut cw = csv::Writer::from_writer(w);
    if rows.is_empty() {
        cw.write_record(SWEEP_COLUMNS)?;
    }
    for r in rows {
        cw.serialize(SweepRecord {
            d_e: r.d_e,
            d_eff_mean: r.d_eff_mean,
            d_eff_min: r.d_eff_min,
            d_eff_max: r.d_eff_max,
            n_upsilon: r.n_upsilon,
            n_upsilon_stderr: r.n_upsilon_stderr,
            n_omega: r.n_omega,
            n_omega_stderr: r.n_omega_stderr,
            mode: r.mode.name(),
            n_trials: r.n_trials,
        })?;
    }
    cw.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct PlotSeries {
    pub name: String,
    /// `(x, y, err)` points.
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct PlotData {
    pub schema_version: u32,
    pub x_label: String,
    pub series: Vec<PlotSeries>,
}

/// `N_Υ` and `N_Ω` against `d_eff_mean`, one pair of series per input set.
pub fn plot_data(sets: &[(&str, &[SweepRow])]) -> PlotData {
    let mut series = Vec::new();
    for (name, rows) in sets {
        series.push(PlotSeries {
            name: format!("{name}/N_upsilon"),
            points: rows.iter().map(|r| (r.d_eff_mean, r.n_upsilon, r.n_upsilon_stderr)).collect(),
        });
        series.push(PlotSeries {
            name: format!("{name}/N_omega"),
            points: rows.iter().map(|r| (r.d_eff_mean, r.n_omega, r.n_omega_stderr)).collect(),
        });
    }
    PlotData {
        schema_version: SCHEMA_VERSION,
        x_label: "d_eff".into(),
        series,
    }
}

pub fn write_plot_json<W: Write>(w: W, data: &PlotData) -> Result<()> {
    serde_json::to_writer_pretty(w, data).map_err(|e| Error::Io(e.to_string()))
}

/// CSV dump: schema line, `# k:` and `# normalization:` comments, then the
/// Choi matrix in operator format. `read_operator_csv` reads it back.
pub fn write_tensor_csv<W: Write>(mut w: W, t: &ProcessTensor) -> Result<()> {
    schema_line(&mut w)?;
    writeln!(w, "# k: {}", t.steps())?;
    writeln!(w, "# normalization: {}", t.normalization())?;
    let mut cw = csv::WriterBuilder::new().flexible(true).from_writer(w);
    write_matrix_rows(&mut cw, t.choi().dims(), t.matrix())?;
    cw.flush()?;
    Ok(())
}

/// Little-endian binary dump: `MTPT`, `u32` schema version, `u32` k,
/// `u32` factor count, `u32` dims, `f64` normalization, then row-major
/// `(re, im)` `f64` pairs.
pub fn write_tensor_bin<W: Write>(mut w: W, t: &ProcessTensor) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&SCHEMA_VERSION.to_le_bytes())?;
    w.write_all(&(t.steps() as u32).to_le_bytes())?;
    let dims = t.choi().dims();
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    w.write_all(&t.normalization().to_le_bytes())?;
    let m = t.matrix();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].re.to_le_bytes())?;
            w.write_all(&m[(i, j)].im.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Contents of a binary tensor dump.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorDump {
    pub steps: usize,
    pub normalization: f64,
    pub choi: Operator,
}

pub fn read_tensor_bin<R: Read>(mut r: R) -> Result<TensorDump> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut pos = 0;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = buf
            .get(pos..pos + n)
            .ok_or_else(|| Error::Parse("truncated tensor dump".into()))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != TENSOR_MAGIC {
        return Err(Error::Parse("not a tensor dump".into()));
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().expect("4 bytes")) as usize;
    let f64_at = |s: &[u8]| f64::from_le_bytes(s.try_into().expect("8 bytes"));
    let version = u32_at(take(4)?);
    if version != SCHEMA_VERSION as usize {
        return Err(Error::Parse(format!("unsupported schema version {version}")));
    }
    let steps = u32_at(take(4)?);
    let nd = u32_at(take(4)?);
    let dims = (0..nd).map(|_| take(4).map(u32_at)).collect::<Result<Vec<_>>>()?;
    let normalization = f64_at(take(8)?);
    let d: usize = dims.iter().product();
    let mut data = Vec::with_capacity(d * d);
    for _ in 0..d * d {
        let re = f64_at(take(8)?);
        let im = f64_at(take(8)?);
        data.push(C64::new(re, im));
    }
    Ok(TensorDump {
        steps,
        normalization,
        choi: Operator::new(CMat::from_row_slice(d, d, &data), dims)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::TimeMode;

    #[test]
    fn operator_roundtrip() {
        let m = CMat::from_fn(4, 4, |i, j| C64::new(i as f64 - 0.5, j as f64 * 0.25));
        let op = Operator::new(m, vec![2, 2]).unwrap();
        let mut buf = Vec::new();
        write_operator_csv(&mut buf, &op).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# schema_version: 1\ndims,2,2\n"));
        assert_eq!(read_operator_csv(&buf[..]).unwrap(), op);
    }

    #[test]
    fn operator_errors() {
        assert!(matches!(read_operator_csv("".as_bytes()), Err(Error::Parse(_))));
        assert!(matches!(read_operator_csv("dims,2\n1,0,0,0\n".as_bytes()), Err(Error::Parse(_))));
        assert!(matches!(read_operator_csv("dims,2\n1,0,0\n0,0,1,0\n".as_bytes()), Err(Error::Parse(_))));
        assert!(matches!(read_operator_csv("dims,2\n1,x,0,0\n0,0,1,0\n".as_bytes()), Err(Error::Parse(_))));
        assert!(matches!(read_operator_csv("dims,3\n1,0,0,0\n0,0,1,0\n".as_bytes()), Err(Error::Parse(_))));
    }

    #[test]
    fn sweep_header() {
        let row = SweepRow {
            d_e: 4,
            d_eff_mean: 2.5,
            d_eff_min: 2.0,
            d_eff_max: 3.0,
            n_upsilon: 0.1,
            n_upsilon_stderr: 0.01,
            n_omega: 0.05,
            n_omega_stderr: 0.001,
            mode: TimeMode::Short,
            n_trials: 3,
        };
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# schema_version: 1");
        assert_eq!(lines[1], SWEEP_COLUMNS.join(","));
        assert_eq!(lines[2], "4,2.5,2.0,3.0,0.1,0.01,0.05,0.001,short,3");
        let mut empty = Vec::new();
        write_sweep_csv(&mut empty, &[]).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap().lines().nth(1).unwrap(), SWEEP_COLUMNS.join(","));
    }
}
