//! CSV artifacts of a run and their plot-ready conversion.
//!
//! Floats are written in shortest round-trip form, so rerunning an
//! experiment with the same seed reproduces the files byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{io_at, CliError, Result};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const META_FILE: &str = "meta.txt";
pub const PLOT_DIR: &str = "plot";
pub const LADDER_PLOT: &str = "ladder.dat";

const SUMMARY_HEADER: [&str; 7] = ["k", "y0", "stderr", "oracle", "oracle_source", "rel_error", "c_hat"];
const CURVES_HEADER: [&str; 4] = ["curve_id", "t", "value", "stderr"];

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub k: f64,
    pub y0: f64,
    pub stderr: Option<f64>,
    pub oracle: Option<f64>,
    pub oracle_source: Option<String>,
    pub rel_error: Option<f64>,
    pub c_hat: Option<f64>,
}

impl SummaryRow {
    pub fn new(k: f64, y0: f64) -> Self {
        Self { k, y0, stderr: None, oracle: None, oracle_source: None, rel_error: None, c_hat: None }
    }

    /// Attach an oracle value and the relative error against it.
    pub fn with_oracle(mut self, value: f64, source: &str) -> Self {
        self.oracle = Some(value);
        self.oracle_source = Some(source.to_owned());
        self.rel_error = Some((self.y0 - value) / value);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub t: f64,
    pub value: f64,
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    /// Also the plot file stem, so only `[A-Za-z0-9_.-]`.
    pub id: String,
    pub points: Vec<CurvePoint>,
}

/// Everything `emit_plot_data` needs from a run directory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArtifactSet {
    pub summary: Vec<SummaryRow>,
    pub curves: Vec<Curve>,
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |source| CliError::Csv { path: path.to_path_buf(), source }
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(SUMMARY_HEADER).map_err(csv_err(path))?;
    for r in rows {
        w.write_record([
            fmt_f64(r.k),
            fmt_f64(r.y0),
            fmt_opt(r.stderr),
            fmt_opt(r.oracle),
            r.oracle_source.clone().unwrap_or_default(),
            fmt_opt(r.rel_error),
            fmt_opt(r.c_hat),
        ])
        .map_err(csv_err(path))?;
    }
    io_at(path, w.flush())
}

pub fn write_curves(path: &Path, curves: &[Curve]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(CURVES_HEADER).map_err(csv_err(path))?;
    for c in curves {
        for p in &c.points {
            w.write_record([c.id.clone(), fmt_f64(p.t), fmt_f64(p.value), fmt_opt(p.stderr)])
                .map_err(csv_err(path))?;
        }
    }
    io_at(path, w.flush())
}

fn open_csv(path: &Path, header: &[&str]) -> Result<csv::Reader<fs::File>> {
    if !path.is_file() {
        return Err(CliError::MissingArtifact(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let found = r.headers().map_err(csv_err(path))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(CliError::Malformed { path: path.into(), message: format!("unexpected header {found:?}") });
    }
    Ok(r)
}

fn parse_field(path: &Path, field: &str, line: u64) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| CliError::Malformed { path: path.into(), message: format!("line {line}: bad number `{field}`") })
}

fn required(path: &Path, v: Option<f64>, line: u64) -> Result<f64> {
    v.ok_or_else(|| CliError::Malformed { path: path.into(), message: format!("line {line}: empty required field") })
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = open_csv(path, &SUMMARY_HEADER)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = rec.position().map_or(0, |p| p.line());
        let f = |j: usize| parse_field(path, &rec[j], line);
        rows.push(SummaryRow {
            k: required(path, f(0)?, line)?,
            y0: required(path, f(1)?, line)?,
            stderr: f(2)?,
            oracle: f(3)?,
            oracle_source: Some(rec[4].to_owned()).filter(|s| !s.is_empty()),
            rel_error: f(5)?,
            c_hat: f(6)?,
        });
    }
    Ok(rows)
}

/// Points of every curve in `curves.csv`, grouped by id in file order.
pub fn read_curves(path: &Path) -> Result<Vec<Curve>> {
    let mut r = open_csv(path, &CURVES_HEADER)?;
    let mut curves: Vec<Curve> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = rec.position().map_or(0, |p| p.line());
        let point = CurvePoint {
            t: required(path, parse_field(path, &rec[1], line)?, line)?,
            value: required(path, parse_field(path, &rec[2], line)?, line)?,
            stderr: parse_field(path, &rec[3], line)?,
        };
        match curves.iter_mut().find(|c| c.id == rec[0]) {
            Some(c) => c.points.push(point),
            None => curves.push(Curve { id: rec[0].to_owned(), points: vec![point] }),
        }
    }
    Ok(curves)
}

/// Curve ids listed in `meta.txt`; this also covers curves with no points.
pub fn read_curve_ids(path: &Path) -> Result<Vec<String>> {
    if !path.is_file() {
        return Err(CliError::MissingArtifact(path.to_path_buf()));
    }
    let text = io_at(path, fs::read_to_string(path))?;
    let line = text
        .lines()
        .find_map(|l| l.strip_prefix("curves ="))
        .ok_or_else(|| CliError::Malformed { path: path.into(), message: "no `curves =` line".into() })?;
    Ok(line.split_whitespace().map(str::to_owned).collect())
}

impl ArtifactSet {
    /// Load the artifacts of a finished run.
    pub fn load(dir: &Path) -> Result<Self> {
        let ids = read_curve_ids(&dir.join(META_FILE))?;
        let summary = read_summary(&dir.join(SUMMARY_FILE))?;
        let mut found = read_curves(&dir.join(CURVES_FILE))?;
        let curves = ids
            .into_iter()
            .map(|id| match found.iter().position(|c| c.id == id) {
                Some(j) => found.swap_remove(j),
                None => Curve { id, points: Vec::new() },
            })
            .collect();
        Ok(Self { summary, curves })
    }
}

/// Write one whitespace-delimited file per curve, `t value lower upper`
/// with a ±2 standard error band, plus `ladder.dat` with `k y0` per rung.
/// Returns the files written.
pub fn emit_plot_data(artifacts: &ArtifactSet, dir: &Path) -> Result<Vec<PathBuf>> {
    let plot = dir.join(PLOT_DIR);
    io_at(&plot, fs::create_dir_all(&plot))?;
    let mut written = Vec::new();
    for c in &artifacts.curves {
        let path = plot.join(format!("{}.dat", c.id));
        let mut text = format!("# curve {}\n# t value lower upper\n", c.id);
        if c.points.is_empty() {
            log::warn!("curve {} has no points; writing header only", c.id);
        }
        for p in &c.points {
            let band = p.stderr.filter(|s| s.is_finite()).map_or(0.0, |s| 2.0 * s);
            text.push_str(&format!(
                "{} {} {} {}\n",
                fmt_f64(p.t),
                fmt_f64(p.value),
                fmt_f64(p.value - band),
                fmt_f64(p.value + band)
            ));
        }
        io_at(&path, fs::write(&path, text))?;
        written.push(path);
    }
    if !artifacts.summary.is_empty() {
        let path = plot.join(LADDER_PLOT);
        let mut text = String::from("# truncation ladder (plot k on a log axis)\n# k y0\n");
        for r in &artifacts.summary {
            text.push_str(&format!("{} {}\n", fmt_f64(r.k), fmt_f64(r.y0)));
        }
        io_at(&path, fs::write(&path, text))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(id: &str, n: usize) -> Curve {
        Curve {
            id: id.into(),
            points: (0..n).map(|i| CurvePoint { t: i as f64 * 0.1, value: 1.0 / (1.0 + i as f64), stderr: Some(0.01) }).collect(),
        }
    }

    #[test]
    fn shortest_round_trip() {
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(1.0), "1.0");
        assert_eq!(fmt_f64(1e-300), "1e-300");
        let x = 1.0 / 3.0;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![SummaryRow::new(1.0, 0.5).with_oracle(0.5000001, "truncated_profile"), SummaryRow::new(10.0, 0.9)];
        let path = dir.path().join(SUMMARY_FILE);
        write_summary(&path, &rows).unwrap();
        assert_eq!(read_summary(&path).unwrap(), rows);
        let curves = vec![curve("a", 3), curve("b", 2)];
        let path = dir.path().join(CURVES_FILE);
        write_curves(&path, &curves).unwrap();
        assert_eq!(read_curves(&path).unwrap(), curves);
    }

    #[test]
    fn plot_files() {
        let dir = tempfile::tempdir().unwrap();
        let set = ArtifactSet {
            summary: vec![SummaryRow::new(1.0, 0.5), SummaryRow::new(10.0, 0.9), SummaryRow::new(100.0, 0.99)],
            curves: vec![curve("three", 3), curve("empty", 0)],
        };
        let files = emit_plot_data(&set, dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        let three = fs::read_to_string(dir.path().join("plot/three.dat")).unwrap();
        let data: Vec<&str> = three.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data.len(), 3);
        assert_eq!(data[0], "0.0 1.0 0.98 1.02");
        assert!(three.starts_with("# curve three\n"));
        let empty = fs::read_to_string(dir.path().join("plot/empty.dat")).unwrap();
        assert!(empty.lines().all(|l| l.starts_with('#')));
        let ladder = fs::read_to_string(dir.path().join("plot/ladder.dat")).unwrap();
        assert_eq!(ladder.lines().filter(|l| !l.starts_with('#')).count(), 3);
    }

    #[test]
    fn missing_artifact_names_file() {
        let dir = tempfile::tempdir().unwrap();
        let err = ArtifactSet::load(dir.path()).unwrap_err();
        assert!(matches!(&err, CliError::MissingArtifact(p) if p.ends_with(META_FILE)));
        fs::write(dir.path().join(META_FILE), "curves = a\n").unwrap();
        let err = ArtifactSet::load(dir.path()).unwrap_err();
        assert!(err.to_string().contains(SUMMARY_FILE), "{err}");
    }
}
