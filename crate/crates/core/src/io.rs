//! On-disk artifact formats: numeric CSV tables, `key = value` metadata and a
//! checksummed manifest per report directory.
//!
//! Numbers are written in scientific notation with 17 significant digits so
//! every `f64` round-trips exactly. Provenance is embedded at the top of each
//! file as `# key=value` comment lines, which readers skip.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Rectangular table with a header row of identifiers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push_row(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::DimensionMismatch { expected: self.header.len(), got: row.len() });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn push_numeric(&mut self, row: &[f64]) -> Result<()> {
        self.push_row(row.iter().map(|v| Cell::Num(*v)).collect())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Numeric values of one column; text cells are an error.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .column_index(name)
            .ok_or_else(|| Error::MalformedCsv(format!("missing column '{name}'")))?;
        self.rows
            .iter()
            .map(|r| r[j].as_f64().ok_or_else(|| Error::MalformedCsv(format!("non-numeric cell in '{name}'"))))
            .collect()
    }
}

pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn parse_cell(s: &str) -> Cell {
    match s {
        "NaN" | "nan" => Cell::Num(f64::NAN),
        "inf" | "+inf" | "Infinity" => Cell::Num(f64::INFINITY),
        "-inf" | "-Infinity" => Cell::Num(f64::NEG_INFINITY),
        _ => s.parse::<f64>().map(Cell::Num).unwrap_or_else(|_| Cell::Text(s.to_string())),
    }
}

/// Provenance embedded in every artifact.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub model: String,
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    /// Taken from `SOURCE_DATE_EPOCH` when set; otherwise `unrecorded`, so that
    /// identical runs produce identical bytes.
    pub timestamp: String,
}

impl Provenance {
    pub fn new(model: &str, command: &str, config_hash: &str, seed: Option<u64>) -> Self {
        let timestamp = std::env::var("SOURCE_DATE_EPOCH").unwrap_or_else(|_| "unrecorded".into());
        Self { model: model.into(), command: command.into(), config_hash: config_hash.into(), seed, timestamp }
    }

    fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("model", self.model.clone()),
            ("command", self.command.clone()),
            ("config_hash", self.config_hash.clone()),
            ("seed", self.seed.map(|s| s.to_string()).unwrap_or_else(|| "none".into())),
            ("timestamp", self.timestamp.clone()),
        ]
    }
}

pub fn csv_string(table: &Table, provenance: Option<&Provenance>) -> Result<String> {
    let mut out = String::new();
    if let Some(p) = provenance {
        for (k, v) in p.pairs() {
            let _ = write!(out, "# {k}={v}\r\n");
        }
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(&table.header).map_err(|e| Error::Io(e.to_string()))?;
    for row in &table.rows {
        if row.len() != table.header.len() {
            return Err(Error::DimensionMismatch { expected: table.header.len(), got: row.len() });
        }
        let fields: Vec<String> = row
            .iter()
            .map(|c| match c {
                Cell::Num(v) => format_number(*v),
                Cell::Text(s) => s.clone(),
            })
            .collect();
        w.write_record(&fields).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))?);
    Ok(out)
}

pub fn write_csv(table: &Table, path: &Path, provenance: Option<&Provenance>) -> Result<()> {
    fs::write(path, csv_string(table, provenance)?)?;
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::MalformedCsv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::MalformedCsv("missing header row".into()));
    }
    let mut table = Table::new(header);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::MalformedCsv(e.to_string()))?;
        table.push_row(rec.iter().map(parse_cell).collect()).map_err(|e| Error::MalformedCsv(e.to_string()))?;
    }
    Ok(table)
}

pub fn read_csv(path: &Path) -> Result<Table> {
    parse_csv(&fs::read_to_string(path)?)
}

/// Ordered `key = value` metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeyValues {
    pub entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let key = key.into();
        let value = value.into();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self, provenance: Option<&Provenance>) -> String {
        let mut out = String::new();
        if let Some(p) = provenance {
            for (k, v) in p.pairs() {
                let _ = writeln!(out, "# {k}={v}");
            }
        }
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::MalformedCsv(format!("line {}: expected 'key = value'", lineno + 1)))?;
            kv.insert(k.trim(), v.trim());
        }
        Ok(kv)
    }
}

/// Join numbers for a single metadata value.
pub fn join_numbers(values: &[f64]) -> String {
    values.iter().map(|v| format_number(*v)).collect::<Vec<_>>().join(";")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactKind {
    Eigenvalues,
    Eigenvectors,
    Summary,
    Profile,
    Relationship,
    Samples,
    Metadata,
}

impl ArtifactKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ArtifactKind::Eigenvalues => "eigenvalues",
            ArtifactKind::Eigenvectors => "eigenvectors",
            ArtifactKind::Summary => "summary",
            ArtifactKind::Profile => "profile",
            ArtifactKind::Relationship => "relationship",
            ArtifactKind::Samples => "samples",
            ArtifactKind::Metadata => "metadata",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Table(Table),
    KeyValues(KeyValues),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisArtifact {
    pub kind: ArtifactKind,
    /// Distinguishes several artifacts of one kind: the parameter name for
    /// profiles and relationships, the row count for summaries (one row
    /// gives plain `summary.csv`).
    pub qualifier: Option<String>,
    pub payload: Payload,
    pub provenance: Provenance,
}

impl AnalysisArtifact {
    /// Stable file name for this artifact.
    pub fn file_name(&self) -> String {
        let q = self.qualifier.as_deref();
        match (self.kind, q) {
            (ArtifactKind::Metadata, _) => "metadata.kv".into(),
            (ArtifactKind::Profile, Some(p)) => format!("profile_{p}.csv"),
            (ArtifactKind::Relationship, Some(p)) => format!("relationship_{p}.csv"),
            (ArtifactKind::Summary, None | Some("1")) => "summary.csv".into(),
            (ArtifactKind::Summary, Some(r)) => format!("summary_{r}.csv"),
            (kind, None) => format!("{}.csv", kind.as_str()),
            (kind, Some(q)) => format!("{}_{q}.csv", kind.as_str()),
        }
    }

    pub fn render(&self) -> Result<String> {
        match &self.payload {
            Payload::Table(t) => csv_string(t, Some(&self.provenance)),
            Payload::KeyValues(kv) => Ok(kv.to_text(Some(&self.provenance))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub file: String,
    pub kind: ArtifactKind,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.csv";

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Write every artifact into `dir` and a `manifest.csv` listing file, kind,
/// byte count and SHA-256 of each.
pub fn write_report(artifacts: &[AnalysisArtifact], dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let file = a.file_name();
        if entries.iter().any(|e: &ManifestEntry| e.file == file) {
            return Err(Error::InvalidArgument(format!("two artifacts map to '{file}'")));
        }
        let text = a.render()?;
        fs::write(dir.join(&file), text.as_bytes())?;
        entries.push(ManifestEntry { file, kind: a.kind, sha256: sha256_hex(text.as_bytes()), bytes: text.len() });
    }
    let mut t = Table::new(vec!["file".into(), "kind".into(), "bytes".into(), "sha256".into()]);
    for e in &entries {
        t.push_row(vec![
            Cell::Text(e.file.clone()),
            Cell::Text(e.kind.as_str().into()),
            Cell::Text(e.bytes.to_string()),
            Cell::Text(e.sha256.clone()),
        ])?;
    }
    write_csv(&t, &dir.join(MANIFEST_FILE), None)?;
    Ok(Manifest { dir: dir.to_path_buf(), entries })
}
