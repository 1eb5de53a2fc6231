//! CSV and JSON interchange formats.
//!
//! Reals are written with 17 significant digits (`{:.16e}`), so a value read
//! back is bit-identical to the one written.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::assignment::Permutation;
use crate::error::{Error, Result};
use crate::geometry::{DistanceMatrix, PointCloud};
use crate::gw::Coupling;
use crate::matching::MatchResult;
use crate::synthetic::{LabeledSample, MixtureSpec};
use crate::theory::{ExperimentRecord, SummaryRow};

/// Round-trip decimal form of a real.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Numeric rows of a CSV source. A first row with any non-numeric field is
/// treated as a header and skipped; any later non-numeric field is an error.
pub fn read_numeric_rows<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if line == 0 => {}
            Err(e) => return Err(Error::Parse(format!("line {}: {e}", line + 1))),
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse("no numeric rows".into()));
    }
    Ok(rows)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

pub fn read_points<R: Read>(reader: R) -> Result<PointCloud> {
    PointCloud::new(read_numeric_rows(reader)?)
}

pub fn read_points_file(path: &Path) -> Result<PointCloud> {
    read_points(open(path)?)
}

pub fn read_distance_matrix<R: Read>(reader: R) -> Result<DistanceMatrix> {
    DistanceMatrix::from_rows(read_numeric_rows(reader)?)
}

pub fn read_distance_matrix_file(path: &Path) -> Result<DistanceMatrix> {
    read_distance_matrix(open(path)?)
}

/// How an input file is to be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Points,
    Distances,
}

impl std::str::FromStr for InputKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "points" => Ok(Self::Points),
            "distances" => Ok(Self::Distances),
            other => Err(Error::Parse(format!("unknown input kind {other:?}"))),
        }
    }
}

/// Reads either coordinates or a distance matrix and returns distances.
pub fn read_distances(path: &Path, kind: InputKind) -> Result<DistanceMatrix> {
    match kind {
        InputKind::Points => Ok(DistanceMatrix::from_cloud(&read_points_file(path)?)),
        InputKind::Distances => read_distance_matrix_file(path),
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_match<W: Write>(w: W, result: &MatchResult) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["source_index", "target_index", "discrepancy", "inlier"])?;
    for (i, (&j, &d)) in result.pi.iter().zip(&result.discrepancy).enumerate() {
        let inlier = if d < result.threshold { "1" } else { "0" };
        out.write_record([i.to_string(), j.to_string(), fmt_real(d), inlier.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_permutation<W: Write>(w: W, perm: &Permutation) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["source_index", "target_index"])?;
    for (i, &j) in perm.as_slice().iter().enumerate() {
        out.write_record([i.to_string(), j.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_matrix<W: Write>(w: W, cols: usize, entries: &[f64]) -> Result<()> {
    let mut out = csv_writer(w);
    for row in entries.chunks(cols.max(1)) {
        out.write_record(row.iter().map(|v| fmt_real(*v)))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_distance_matrix<W: Write>(w: W, d: &DistanceMatrix) -> Result<()> {
    write_matrix(w, d.len(), d.as_flat())
}

pub fn write_points<W: Write>(w: W, cloud: &PointCloud) -> Result<()> {
    write_matrix(w, cloud.dim(), cloud.as_flat())
}

#[derive(Serialize)]
struct CouplingSidecar {
    n: usize,
    m: usize,
    order: f64,
    value: f64,
}

/// Path of the JSON sidecar written next to a coupling CSV.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Dense coupling CSV plus a `{n, m, order, value}` JSON sidecar.
pub fn write_coupling_files(path: &Path, coupling: &Coupling, order: f64, value: f64) -> Result<()> {
    let mut w = create(path)?;
    write_matrix(&mut w, coupling.cols(), coupling.as_flat())?;
    w.flush()?;
    let side = CouplingSidecar { n: coupling.rows(), m: coupling.cols(), order, value };
    write_json(&sidecar_path(path), &side)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Appends experiment records as they arrive.
pub struct ExperimentWriter<W: Write> {
    out: csv::Writer<W>,
}

impl<W: Write> ExperimentWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut out = csv_writer(w);
        out.write_record(["method", "sigma", "replicate", "perfect", "accuracy"])?;
        Ok(Self { out })
    }

    pub fn write(&mut self, r: &ExperimentRecord) -> Result<()> {
        self.out.write_record([
            r.method.as_str().to_string(),
            fmt_real(r.sigma),
            r.replicate.to_string(),
            (r.perfect as u8).to_string(),
            fmt_real(r.accuracy),
        ])?;
        self.out.flush()?;
        Ok(())
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    rows: &'a [SummaryRow],
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_json(path, &Summary { rows })
}

/// Coordinates followed by a `label` column.
pub fn write_labeled_sample<W: Write>(w: W, sample: &LabeledSample) -> Result<()> {
    let mut out = csv_writer(w);
    let d = sample.cloud.dim();
    let mut header: Vec<String> = (0..d).map(|c| format!("x{c}")).collect();
    header.push("label".into());
    out.write_record(&header)?;
    for (p, l) in sample.cloud.points().zip(&sample.labels) {
        let mut rec: Vec<String> = p.iter().map(|v| fmt_real(*v)).collect();
        rec.push(l.to_string());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_labels<W: Write>(w: W, labels: &[usize]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["point_index", "label"])?;
    for (i, l) in labels.iter().enumerate() {
        out.write_record([i.to_string(), l.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_mixture_spec<R: Read>(reader: R) -> Result<MixtureSpec> {
    let spec: MixtureSpec = serde_json::from_reader(reader)?;
    spec.validate()?;
    Ok(spec)
}

pub fn write_mixture_spec<W: Write>(w: W, spec: &MixtureSpec) -> Result<()> {
    serde_json::to_writer_pretty(w, spec)?;
    Ok(())
}

pub fn write_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::{match_discrepancies, DiscrepancyMatrix};

    #[test]
    fn header_is_detected() {
        let with = read_points("x,y\n0,0\n3,4\n".as_bytes()).unwrap();
        let without = read_points("0,0\n3,4\n".as_bytes()).unwrap();
        assert_eq!(with, without);
        assert_eq!(with.len(), 2);
    }

    #[test]
    fn malformed_rows() {
        assert!(matches!(read_points("0,0\n3,a\n".as_bytes()), Err(Error::Parse(_))));
        assert!(matches!(read_points("0,0\n3\n".as_bytes()), Err(Error::DimensionMismatch(_))));
        assert!(read_points("x,y\n".as_bytes()).is_err());
        assert!(read_distance_matrix("0,1\n2,0\n".as_bytes()).is_err());
        assert_eq!(read_distance_matrix("0,1\n1,0\n".as_bytes()).unwrap().get(0, 1), 1.0);
    }

    #[test]
    fn reals_round_trip() {
        for x in [0.1, 1.0 / 3.0, 5.0, 1e-300, 123456.789] {
            assert_eq!(fmt_real(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_real(5.0), "5.0000000000000000e0");
    }

    #[test]
    fn match_csv_layout() {
        let d = DiscrepancyMatrix::from_rows(vec![vec![0.1, 0.9], vec![0.9, 0.4]], 1.0).unwrap();
        let mut buf = Vec::new();
        write_match(&mut buf, &match_discrepancies(&d, 0.3)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "source_index,target_index,discrepancy,inlier");
        assert_eq!(lines[1], "0,0,1.0000000000000001e-1,1");
        assert_eq!(lines[2], "1,1,4.0000000000000002e-1,0");
    }

    #[test]
    fn mixture_spec_json_round_trip() {
        let spec = MixtureSpec::new(vec![vec![0.0, 1.0], vec![2.0, 3.0]], vec![0.25, 0.75], vec![0.1, 0.2]).unwrap();
        let mut buf = Vec::new();
        write_mixture_spec(&mut buf, &spec).unwrap();
        assert_eq!(read_mixture_spec(buf.as_slice()).unwrap(), spec);
        assert!(read_mixture_spec(r#"{"centers":[[0]],"weights":[0.5],"stds":[1]}"#.as_bytes()).is_err());
    }
}
