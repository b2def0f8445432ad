use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Map, Value};

use super::config::ExperimentConfig;
use super::run::ResultRow;
use crate::error::{Error, Result};

pub const ARTIFACT_VERSION: &str = concat!("quench-tomography ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Validation(format!("unknown format {other:?}; expected csv or json"))),
        }
    }
}

impl Format {
    /// JSON for a `.json` extension, CSV otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

/// Twelve significant digits; empty for NaN.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.11e}")
    }
}

fn rounded(v: f64) -> Value {
    if v.is_finite() {
        json!(format!("{v:.11e}").parse::<f64>().expect("formatted float parses"))
    } else if v.is_nan() {
        Value::Null
    } else {
        json!(format_number(v))
    }
}

fn columns(cfg: &ExperimentConfig) -> Vec<&'static str> {
    vec![
        "sweep_index",
        "t",
        "p",
        "epsilon",
        "realizations",
        "f_mean",
        "f_std",
        "e_mean",
        "e_std",
        "gap_mean",
        cfg.protocol.aux_column(),
        "wall_time_s",
    ]
}

fn csv_cells(row: &ResultRow) -> Vec<String> {
    vec![
        row.point.index.to_string(),
        format_number(row.point.t),
        row.point.p.to_string(),
        format_number(row.point.epsilon),
        row.realizations.to_string(),
        format_number(row.f_mean),
        format_number(row.f_std),
        format_number(row.e_mean),
        format_number(row.e_std),
        format_number(row.gap_mean),
        format_number(row.aux_mean),
        format_number(row.wall_time_s),
    ]
}

fn json_row(cfg: &ExperimentConfig, row: &ResultRow) -> Value {
    let values = [
        json!(row.point.index),
        rounded(row.point.t),
        json!(row.point.p),
        rounded(row.point.epsilon),
        json!(row.realizations),
        rounded(row.f_mean),
        rounded(row.f_std),
        rounded(row.e_mean),
        rounded(row.e_std),
        rounded(row.gap_mean),
        rounded(row.aux_mean),
        rounded(row.wall_time_s),
    ];
    let mut m = Map::new();
    for (k, v) in columns(cfg).into_iter().zip(values) {
        m.insert(k.to_string(), v);
    }
    Value::Object(m)
}

fn timestamp() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Incremental writer: CSV rows are appended and flushed, JSON is rewritten per row.
pub struct ResultWriter {
    path: PathBuf,
    config: ExperimentConfig,
    timestamp: u64,
    rows: Vec<Value>,
    csv: Option<File>,
}

impl ResultWriter {
    pub fn create(path: &Path, format: Format, config: &ExperimentConfig) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut w = Self {
            path: path.to_path_buf(),
            config: config.clone(),
            timestamp: timestamp(),
            rows: Vec::new(),
            csv: None,
        };
        match format {
            Format::Csv => {
                let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
                let header = format!(
                    "# version: {ARTIFACT_VERSION}\n# timestamp: {}\n# config: {}\n{}\n",
                    w.timestamp,
                    config.to_json(),
                    columns(config).join(",")
                );
                f.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
                f.flush().map_err(|e| Error::io(path, e))?;
                w.csv = Some(f);
            }
            Format::Json => w.write_json()?,
        }
        Ok(w)
    }

    pub fn push(&mut self, row: &ResultRow) -> Result<()> {
        self.rows.push(json_row(&self.config, row));
        match &mut self.csv {
            Some(f) => {
                let line = csv_cells(row).join(",") + "\n";
                f.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
                f.flush().map_err(|e| Error::io(&self.path, e))
            }
            None => self.write_json(),
        }
    }

    fn write_json(&self) -> Result<()> {
        let config: Value = serde_json::from_str(&self.config.to_json()).expect("config JSON is valid");
        let doc = json!({
            "version": ARTIFACT_VERSION,
            "timestamp": self.timestamp,
            "config": config,
            "columns": columns(&self.config),
            "rows": self.rows,
        });
        let text = serde_json::to_string_pretty(&doc).expect("JSON document serialises") + "\n";
        std::fs::write(&self.path, text).map_err(|e| Error::io(&self.path, e))
    }
}

/// Writes all rows at once.
pub fn emit(rows: &[ResultRow], config: &ExperimentConfig, path: &Path, format: Format) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Validation("nothing to emit: the result set is empty".into()));
    }
    let mut w = ResultWriter::create(path, format, config)?;
    for r in rows {
        w.push(r)?;
    }
    Ok(())
}

/// Recovers the configuration embedded in an emitted CSV or JSON file.
pub fn load_emitted_config(path: &Path) -> Result<ExperimentConfig> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| Error::io(path, e))?;
    if first.trim_start().starts_with('{') {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: Value = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let cfg = doc
            .get("config")
            .ok_or_else(|| Error::Parse(format!("{}: no config object", path.display())))?;
        return ExperimentConfig::parse(&cfg.to_string());
    }
    let mut line = first;
    loop {
        if let Some(json) = line.strip_prefix("# config: ") {
            return ExperimentConfig::parse(json.trim_end());
        }
        if !line.starts_with('#') {
            return Err(Error::Parse(format!("{}: no embedded config header", path.display())));
        }
        line.clear();
        if reader.read_line(&mut line).map_err(|e| Error::io(path, e))? == 0 {
            return Err(Error::Parse(format!("{}: no embedded config header", path.display())));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{Protocol, SweepPoint};

    fn cfg() -> ExperimentConfig {
        ExperimentConfig::parse(&ExperimentConfig::template(Protocol::MultiQuench)).unwrap()
    }

    fn row(i: usize) -> ResultRow {
        ResultRow {
            point: SweepPoint {
                index: i,
                t: 1.0,
                p: 10,
                epsilon: 0.1,
            },
            realizations: 3,
            f_mean: 0.123456789012345,
            f_std: 0.0,
            e_mean: 2.0 / 3.0,
            e_std: 1e-9,
            gap_mean: f64::NAN,
            aux_mean: f64::INFINITY,
            wall_time_s: 0.5,
        }
    }

    #[test]
    fn numbers_carry_twelve_significant_digits() {
        assert_eq!(format_number(2.0 / 3.0), "6.66666666667e-1");
        assert_eq!(format_number(f64::NAN), "");
        assert_eq!(format_number(f64::INFINITY), "inf");
        assert_eq!(format_number(1.0), "1.00000000000e0");
    }

    #[test]
    fn empty_rows_are_rejected_before_writing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        assert!(emit(&[], &cfg(), &path, Format::Csv).unwrap_err().is_validation());
        assert!(!path.exists());
    }

    #[test]
    fn csv_and_json_embed_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg();
        for (name, fmt) in [("a.csv", Format::Csv), ("a.json", Format::Json)] {
            let path = dir.path().join(name);
            emit(&[row(0), row(1)], &c, &path, fmt).unwrap();
            assert_eq!(load_emitted_config(&path).unwrap(), c);
        }
        let text = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# version: quench-tomography"));
        assert!(lines[3].starts_with("sweep_index,t,p,epsilon"));
        assert!(lines[3].contains(",error_bound,"));
        assert_eq!(lines.len(), 6);
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.json")).unwrap()).unwrap();
        assert_eq!(doc["rows"].as_array().unwrap().len(), 2);
        assert_eq!(doc["rows"][0]["f_mean"].as_f64().unwrap(), 0.123456789012);
        assert!(doc["rows"][0]["gap_mean"].is_null());
    }

    #[test]
    fn format_parsing() {
        assert_eq!("CSV".parse::<Format>().unwrap(), Format::Csv);
        assert_eq!("json".parse::<Format>().unwrap(), Format::Json);
        assert!("xml".parse::<Format>().is_err());
        assert_eq!(Format::from_path(Path::new("x.JSON")), Format::Json);
    }
}
