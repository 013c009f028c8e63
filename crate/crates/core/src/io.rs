//! File formats: grain-map and coefficient CSV, physical-parameter and report
//! JSON, sweep tables and binary PPM images.
//!
//! Grain maps are CSV with header `x1,x2,label` and one-based labels. A
//! regular grid may also be stored as a single `label` column in grid order,
//! with the resolution in a sidecar `<file>.meta.json` holding `{"m": M}`.
//!
//! Coefficient files start with a metadata line
//!
//! ```text
//! # basis=legendre,degree=2,ordering=graded-lex-a1-desc,gauge=last-column-zero,grains=20
//! ```
//!
//! followed by a CSV table `alpha1,alpha2,theta_1,...,theta_N` with one row
//! per feature.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::{BasisKind, DesignBasis, ORDERING};
use crate::conversions::RecoveredApd;
use crate::error::{Error, Result};
use crate::geometry::{GrainMap, PhysicalAPD, PhysicalPD, PixelGrid};
use crate::metrics::SweepRow;
use crate::objective::{Gauge, ParamMatrix};
use crate::optimizer::{BoundSummary, FitConfig, FitReport, StopReason};

pub const SWEEP_HEADER: &str = "d,K_d,phi_final,acc_final,err_final,compr";

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: u64, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column: column.to_string(),
        message: message.into(),
    }
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(text.as_bytes())
}

fn parse_f64(path: &Path, line: u64, column: &str, field: Option<&str>) -> Result<f64> {
    let field = field.ok_or_else(|| parse_err(path, line, column, "missing value"))?;
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| parse_err(path, line, column, format!("'{field}' is not a finite number")))
}

fn parse_label(path: &Path, line: u64, field: Option<&str>) -> Result<usize> {
    let field = field.ok_or_else(|| parse_err(path, line, "label", "missing value"))?;
    match field.parse::<usize>() {
        Ok(l) if l >= 1 => Ok(l - 1),
        _ => Err(parse_err(
            path,
            line,
            "label",
            format!("'{field}' is not a positive integer label"),
        )),
    }
}

/// Path of the sidecar holding the resolution of a label-only grain map.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

#[derive(Debug, Serialize, Deserialize)]
struct GridMeta {
    m: usize,
}

/// Reads a grain map; the grain count is the largest label present.
pub fn read_grain_map(path: &Path) -> Result<GrainMap> {
    let text = read_to_string(path)?;
    let mut reader = csv_reader(&text);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(path, 1, "header", e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let label_only = match headers.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["x1", "x2", "label"] => false,
        ["label"] => true,
        _ => {
            return Err(parse_err(
                path,
                1,
                "header",
                format!("expected 'x1,x2,label' or 'label', found '{}'", headers.join(",")),
            ))
        }
    };
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| parse_err(path, line, "row", e.to_string()))?;
        if label_only {
            labels.push(parse_label(path, line, record.get(0))?);
        } else {
            let x1 = parse_f64(path, line, "x1", record.get(0))?;
            let x2 = parse_f64(path, line, "x2", record.get(1))?;
            points.push([x1, x2]);
            labels.push(parse_label(path, line, record.get(2))?);
        }
    }
    let grid = if label_only {
        let side = sidecar_path(path);
        let meta: GridMeta = serde_json::from_str(&read_to_string(&side)?)
            .map_err(|e| parse_err(&side, e.line() as u64, "m", e.to_string()))?;
        let grid = PixelGrid::regular(meta.m)?;
        if grid.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "label rows vs (2M)² grid points",
                expected: grid.len(),
                got: labels.len(),
            });
        }
        grid
    } else {
        PixelGrid::detect_regular(points)?
    };
    let n = labels.iter().max().map_or(0, |l| l + 1);
    GrainMap::new(grid, labels, n)
}

fn grain_map_csv(points: &[[f64; 2]], labels: &[usize]) -> String {
    let mut out = String::with_capacity(points.len() * 32);
    out.push_str("x1,x2,label\n");
    for (p, l) in points.iter().zip(labels) {
        out.push_str(&format!("{},{},{}\n", p[0], p[1], l + 1));
    }
    out
}

pub fn write_grain_map(path: &Path, map: &GrainMap) -> Result<()> {
    write_bytes(path, grain_map_csv(map.grid().points(), map.labels()).as_bytes())
}

/// Writes arbitrary zero-based labels on the map's points.
pub fn write_labels(path: &Path, grid: &PixelGrid, labels: &[usize]) -> Result<()> {
    write_bytes(path, grain_map_csv(grid.points(), labels).as_bytes())
}

/// Label-only storage of a regular grid plus its sidecar.
pub fn write_grain_map_label_only(path: &Path, map: &GrainMap) -> Result<()> {
    let m = map
        .grid()
        .resolution()
        .ok_or_else(|| Error::invalid("label-only storage needs a regular grid"))?;
    let mut out = String::from("label\n");
    for l in map.labels() {
        out.push_str(&format!("{}\n", l + 1));
    }
    write_bytes(path, out.as_bytes())?;
    write_bytes(
        &sidecar_path(path),
        serde_json::to_string(&GridMeta { m }).expect("serialisable").as_bytes(),
    )
}

/// Per-pixel comparison of fitted and true labels.
pub fn write_misassignment(path: &Path, map: &GrainMap, fitted: &[usize]) -> Result<()> {
    let mut out = String::from("x1,x2,label,fitted,correct\n");
    for ((p, l), f) in map.grid().points().iter().zip(map.labels()).zip(fitted) {
        out.push_str(&format!("{},{},{},{},{}\n", p[0], p[1], l + 1, f + 1, u8::from(l == f)));
    }
    write_bytes(path, out.as_bytes())
}

/// Reads a misassignment CSV as `(grid, correct flags)`.
pub fn read_misassignment(path: &Path) -> Result<(PixelGrid, Vec<bool>)> {
    let text = read_to_string(path)?;
    let mut reader = csv_reader(&text);
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, "header", e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["x1", "x2", "label", "fitted", "correct"] {
        return Err(parse_err(
            path,
            1,
            "header",
            "expected 'x1,x2,label,fitted,correct'",
        ));
    }
    let mut points = Vec::new();
    let mut correct = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| parse_err(path, line, "row", e.to_string()))?;
        points.push([
            parse_f64(path, line, "x1", record.get(0))?,
            parse_f64(path, line, "x2", record.get(1))?,
        ]);
        correct.push(match record.get(4) {
            Some("1") => true,
            Some("0") => false,
            other => {
                return Err(parse_err(
                    path,
                    line,
                    "correct",
                    format!("expected 0 or 1, found {other:?}"),
                ))
            }
        });
    }
    Ok((PixelGrid::detect_regular(points)?, correct))
}

pub fn theta_csv(theta: &ParamMatrix) -> String {
    let mut out = format!(
        "# basis={},degree={},ordering={},gauge={},grains={}\n",
        theta.kind(),
        theta.degree(),
        ORDERING,
        theta.gauge().as_str(),
        theta.n_grains()
    );
    out.push_str("alpha1,alpha2");
    for i in 1..=theta.n_grains() {
        out.push_str(&format!(",theta_{i}"));
    }
    out.push('\n');
    for (r, a) in theta.basis().index_set().indices().iter().enumerate() {
        out.push_str(&format!("{},{}", a[0], a[1]));
        for i in 0..theta.n_grains() {
            out.push_str(&format!(",{}", theta.get(r, i)));
        }
        out.push('\n');
    }
    out
}

pub fn write_theta(path: &Path, theta: &ParamMatrix) -> Result<()> {
    write_bytes(path, theta_csv(theta).as_bytes())
}

pub fn read_theta(path: &Path) -> Result<ParamMatrix> {
    let text = read_to_string(path)?;
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    let meta = first
        .strip_prefix('#')
        .ok_or_else(|| parse_err(path, 1, "metadata", "missing '# basis=...' metadata line"))?;
    let mut kind = None;
    let mut degree = None;
    let mut gauge = Gauge::Free;
    let mut grains = None;
    for item in meta.trim().split(',') {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| parse_err(path, 1, "metadata", format!("malformed entry '{item}'")))?;
        let bad = |what: &str| parse_err(path, 1, key, format!("invalid {what} '{value}'"));
        match key.trim() {
            "basis" => kind = Some(value.trim().parse::<BasisKind>().map_err(|_| bad("basis"))?),
            "degree" => degree = Some(value.trim().parse::<usize>().map_err(|_| bad("degree"))?),
            "ordering" if value.trim() != ORDERING => return Err(bad("ordering")),
            "ordering" => {}
            "gauge" => {
                gauge = match value.trim() {
                    "free" => Gauge::Free,
                    "last-column-zero" => Gauge::LastColumnZero,
                    _ => return Err(bad("gauge")),
                }
            }
            "grains" => grains = Some(value.trim().parse::<usize>().map_err(|_| bad("grain count"))?),
            _ => {}
        }
    }
    let kind = kind.ok_or_else(|| parse_err(path, 1, "basis", "missing"))?;
    let degree = degree.ok_or_else(|| parse_err(path, 1, "degree", "missing"))?;
    let basis = DesignBasis::new(kind, degree)?;
    let mut reader = csv_reader(rest);
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 2, "header", e.to_string()))?
        .clone();
    let n = headers.len().saturating_sub(2);
    if headers.get(0) != Some("alpha1") || headers.get(1) != Some("alpha2") || n == 0 {
        return Err(parse_err(path, 2, "header", "expected 'alpha1,alpha2,theta_1,...'"));
    }
    if grains.is_some_and(|g| g != n) {
        return Err(parse_err(path, 2, "header", "column count disagrees with 'grains'"));
    }
    let k = basis.dim();
    let mut values = vec![0.0; k * n];
    let mut seen = vec![false; k];
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 3;
        let record = record.map_err(|e| parse_err(path, line, "row", e.to_string()))?;
        let a1 = parse_f64(path, line, "alpha1", record.get(0))? as usize;
        let a2 = parse_f64(path, line, "alpha2", record.get(1))? as usize;
        let row = basis
            .index_set()
            .position([a1, a2])
            .ok_or_else(|| parse_err(path, line, "alpha1", format!("multi-index ({a1},{a2}) exceeds degree")))?;
        if std::mem::replace(&mut seen[row], true) {
            return Err(parse_err(path, line, "alpha1", "duplicate multi-index"));
        }
        for g in 0..n {
            let col = headers.get(g + 2).unwrap_or("theta");
            values[g * k + row] = parse_f64(path, line, col, record.get(g + 2))?;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(parse_err(path, 3, "alpha1", format!("expected {k} coefficient rows")));
    }
    ParamMatrix::from_values(&basis, n, values, gauge)
}

/// Physical parameters as written to JSON. Unrecoverable seeds and weights
/// (singular quadratic block) are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalRecord {
    pub kind: String,
    pub seeds: Vec<Option<[f64; 2]>>,
    pub weights: Vec<Option<f64>>,
    /// Row-major 2×2 matrices; absent for power diagrams.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anisotropy: Option<Vec<[f64; 4]>>,
}

impl From<&PhysicalPD> for PhysicalRecord {
    fn from(pd: &PhysicalPD) -> Self {
        PhysicalRecord {
            kind: "pd".into(),
            seeds: pd.seeds.iter().map(|s| Some(*s)).collect(),
            weights: pd.weights.iter().map(|w| Some(*w)).collect(),
            anisotropy: None,
        }
    }
}

impl From<&PhysicalAPD> for PhysicalRecord {
    fn from(apd: &PhysicalAPD) -> Self {
        PhysicalRecord {
            kind: "apd".into(),
            seeds: apd.seeds.iter().map(|s| Some(*s)).collect(),
            weights: apd.weights.iter().map(|w| Some(*w)).collect(),
            anisotropy: Some(apd.anisotropy.clone()),
        }
    }
}

impl From<&RecoveredApd> for PhysicalRecord {
    fn from(r: &RecoveredApd) -> Self {
        PhysicalRecord {
            kind: "apd".into(),
            seeds: r.seeds.clone(),
            weights: r.weights.clone(),
            anisotropy: Some(r.anisotropy.clone()),
        }
    }
}

impl PhysicalRecord {
    fn complete<T: Copy>(v: &[Option<T>]) -> Result<Vec<T>> {
        v.iter()
            .map(|x| x.ok_or_else(|| Error::invalid("physical record has unrecoverable entries")))
            .collect()
    }

    pub fn to_pd(&self) -> Result<PhysicalPD> {
        Ok(PhysicalPD {
            seeds: Self::complete(&self.seeds)?,
            weights: Self::complete(&self.weights)?,
        })
    }

    pub fn to_apd(&self) -> Result<PhysicalAPD> {
        let anisotropy = self
            .anisotropy
            .clone()
            .ok_or_else(|| Error::invalid("record has no anisotropy matrices"))?;
        Ok(PhysicalAPD {
            seeds: Self::complete(&self.seeds)?,
            weights: Self::complete(&self.weights)?,
            anisotropy,
        })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serialisable");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line() as u64, "json", e.to_string()))
}

/// Coefficients inline in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaRecord {
    pub basis: BasisKind,
    pub degree: usize,
    pub ordering: String,
    pub gauge: Gauge,
    /// One array of `K_d` coefficients per grain.
    pub columns: Vec<Vec<f64>>,
}

impl From<&ParamMatrix> for ThetaRecord {
    fn from(t: &ParamMatrix) -> Self {
        ThetaRecord {
            basis: t.kind(),
            degree: t.degree(),
            ordering: ORDERING.into(),
            gauge: t.gauge(),
            columns: t.columns().map(<[f64]>::to_vec).collect(),
        }
    }
}

impl ThetaRecord {
    pub fn to_param_matrix(&self) -> Result<ParamMatrix> {
        if self.ordering != ORDERING {
            return Err(Error::invalid(format!("unsupported ordering '{}'", self.ordering)));
        }
        ParamMatrix::from_columns(&DesignBasis::new(self.basis, self.degree)?, self.columns.clone(), self.gauge)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub iteration: Vec<usize>,
    pub phi: Vec<f64>,
    pub err: Vec<f64>,
    pub energy_gap: Vec<f64>,
}

/// JSON form of a fit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub degree: usize,
    pub basis: BasisKind,
    pub eps: f64,
    pub max_iters: usize,
    pub memory: usize,
    pub init: String,
    pub n_grains: usize,
    pub n_points: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
    pub phi_final: f64,
    pub acc_final: f64,
    pub err_final: f64,
    pub grad_norm_final: f64,
    pub compression: f64,
    pub bounds: BoundSummary,
    pub non_unique: bool,
    /// One-based.
    pub empty_grains: Vec<usize>,
    pub trajectory: Trajectory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<ThetaRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_path: Option<String>,
    pub wall_clock_seconds: f64,
}

impl ReportRecord {
    /// `theta_path` set stores the coefficients by reference instead of inline.
    pub fn new(report: &FitReport, config: &FitConfig, theta_path: Option<String>) -> Self {
        ReportRecord {
            degree: report.theta.degree(),
            basis: report.theta.kind(),
            eps: report.eps,
            max_iters: config.max_iters,
            memory: config.memory,
            init: report.init.to_string(),
            n_grains: report.n_grains,
            n_points: report.n_points,
            iterations: report.iterations,
            evaluations: report.evaluations,
            stop: report.stop,
            phi_final: report.phi_final,
            acc_final: report.acc_final,
            err_final: report.err_final,
            grad_norm_final: report.grad_norm_final,
            compression: report.compression,
            bounds: report.bounds.clone(),
            non_unique: report.non_unique,
            empty_grains: report.empty_grains.iter().map(|g| g + 1).collect(),
            trajectory: Trajectory {
                iteration: report.recorded_iterations.clone(),
                phi: report.phi.clone(),
                err: report.err.clone(),
                energy_gap: report.energy_gap.clone(),
            },
            theta: theta_path.is_none().then(|| ThetaRecord::from(&report.theta)),
            theta_path,
            wall_clock_seconds: report.wall_clock_seconds,
        }
    }

    pub fn sweep_row(&self) -> SweepRow {
        SweepRow {
            d: self.degree,
            k_d: crate::basis::feature_count(self.degree),
            phi_final: self.phi_final,
            acc_final: self.acc_final,
            err_final: self.err_final,
            compr: self.compression,
        }
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.d, r.k_d, r.phi_final, r.acc_final, r.err_final, r.compr
        ));
    }
    out
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fixed colour of a zero-based grain label.
pub fn label_colour(label: usize) -> [u8; 3] {
    let h = splitmix(label as u64);
    // Keep channels away from black so boundaries stay visible.
    [
        64 + (h & 0xBF) as u8,
        64 + ((h >> 8) & 0xBF) as u8,
        64 + ((h >> 16) & 0xBF) as u8,
    ]
}

pub const CORRECT_COLOUR: [u8; 3] = [250, 218, 221];
pub const INCORRECT_COLOUR: [u8; 3] = [40, 40, 40];

/// Binary PPM of a regular grid; `x₁` runs left to right and `x₂` bottom to top.
pub fn render_ppm(grid: &PixelGrid, colours: &[[u8; 3]]) -> Result<Vec<u8>> {
    let m = grid.resolution().ok_or_else(|| {
        Error::invalid("rendering needs a regular 2M×2M grid; unstructured point lists cannot be drawn")
    })?;
    let side = 2 * m;
    let mut out = format!("P6\n{side} {side}\n255\n").into_bytes();
    let header = out.len();
    out.resize(header + side * side * 3, 0);
    for (idx, c) in colours.iter().enumerate() {
        // Grid order is row-major in (k₁, k₂).
        let (k1, k2) = (idx / side, idx % side);
        let row = side - 1 - k2;
        let at = header + (row * side + k1) * 3;
        out[at..at + 3].copy_from_slice(c);
    }
    Ok(out)
}

pub fn render_labels(map: &GrainMap) -> Result<Vec<u8>> {
    let colours: Vec<[u8; 3]> = map.labels().iter().map(|&l| label_colour(l)).collect();
    render_ppm(map.grid(), &colours)
}

pub fn render_misassignment(grid: &PixelGrid, correct: &[bool]) -> Result<Vec<u8>> {
    let colours: Vec<[u8; 3]> = correct
        .iter()
        .map(|&c| if c { CORRECT_COLOUR } else { INCORRECT_COLOUR })
        .collect();
    render_ppm(grid, &colours)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_pd, make_grid};
    use crate::synthetic::random_pd;

    #[test]
    fn grain_map_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let map = generate_pd(&random_pd(5, 1).unwrap(), &make_grid(6).unwrap()).unwrap();
        let p = dir.path().join("map.csv");
        write_grain_map(&p, &map).unwrap();
        let back = read_grain_map(&p).unwrap();
        assert_eq!(back.grid().resolution(), Some(6));
        assert_eq!(back.labels(), map.labels());

        let q = dir.path().join("labels.csv");
        write_grain_map_label_only(&q, &map).unwrap();
        assert_eq!(read_grain_map(&q).unwrap().labels(), map.labels());
    }

    #[test]
    fn malformed_rows_report_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "x1,x2,label\n0.1,0.2,1\n0.3,abc,2\n").unwrap();
        match read_grain_map(&p).unwrap_err() {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, "x2");
            }
            other => panic!("unexpected {other}"),
        }
        fs::write(&p, "x1,x2,label\n0.1,0.2,0\n").unwrap();
        let err = read_grain_map(&p).unwrap_err();
        assert!(matches!(err, Error::Parse { ref column, .. } if column == "label"));
        assert_eq!(err.exit_code(), 2);
        fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(read_grain_map(&p).is_err());
        assert_eq!(read_grain_map(&dir.path().join("missing.csv")).unwrap_err().exit_code(), 4);
    }

    #[test]
    fn theta_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let basis = DesignBasis::new(BasisKind::Legendre, 3).unwrap();
        let values: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin() / 3.0).collect();
        let theta = ParamMatrix::from_values(&basis, 3, values, Gauge::Free).unwrap().regauged();
        let p = dir.path().join("theta.csv");
        write_theta(&p, &theta).unwrap();
        assert_eq!(read_theta(&p).unwrap(), theta);
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# basis=legendre,degree=3,ordering=graded-lex-a1-desc,gauge=last-column-zero"));
    }

    #[test]
    fn ppm_layout() {
        let grid = make_grid(2).unwrap();
        let correct: Vec<bool> = (0..16).map(|i| i != 0).collect();
        let img = render_misassignment(&grid, &correct).unwrap();
        let header = b"P6\n4 4\n255\n";
        assert_eq!(&img[..header.len()], header);
        assert_eq!(img.len(), header.len() + 48);
        // Point 0 is (-0.75, -0.75): bottom-left pixel.
        let at = header.len() + (3 * 4) * 3;
        assert_eq!(&img[at..at + 3], &INCORRECT_COLOUR);
        assert_eq!(img.iter().skip(header.len()).filter(|&&b| b == 40).count(), 3);
        let unstructured = PixelGrid::from_points(vec![[0.0, 0.0]]).unwrap();
        assert!(render_misassignment(&unstructured, &[true]).is_err());
    }
}
