//! Result tables and their CSV / JSON-metadata encoding.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::io::IoError;

pub const COLUMNS: [&str; 8] = [
    "experiment",
    "spec",
    "role",
    "sigma",
    "seed",
    "metric",
    "index",
    "value",
];

/// One measurement. `index` is the 1-based epoch for per-epoch series, the
/// segment for PoL replays and the disclosure count for the averaging
/// attack; empty otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub experiment: String,
    pub spec: String,
    pub role: String,
    pub sigma: f64,
    pub seed: u64,
    pub metric: String,
    pub index: Option<u64>,
    pub value: f64,
}

impl Row {
    fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.experiment
            .cmp(&other.experiment)
            .then_with(|| self.spec.cmp(&other.spec))
            .then_with(|| self.sigma.total_cmp(&other.sigma))
            .then_with(|| self.seed.cmp(&other.seed))
            .then_with(|| self.role.cmp(&other.role))
            .then_with(|| self.metric.cmp(&other.metric))
            .then_with(|| self.index.cmp(&other.index))
    }

    fn fields(&self) -> [String; 8] {
        [
            self.experiment.clone(),
            self.spec.clone(),
            self.role.clone(),
            fmt_f64(self.sigma),
            self.seed.to_string(),
            self.metric.clone(),
            self.index.map(|i| i.to_string()).unwrap_or_default(),
            fmt_f64(self.value),
        ]
    }
}

/// Everything written to the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub experiment: String,
    pub kind: String,
    /// SHA-256 of the canonical config JSON.
    pub fingerprint: String,
    pub config: serde_json::Value,
    pub deviations: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pud: Vec<obfusc_core::metrics::PudReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<Row>,
    pub metadata: Metadata,
}

impl ResultTable {
    /// Sort rows by (experiment, spec, sigma, seed, role, metric, index).
    pub fn sort(&mut self) {
        self.rows.sort_by(Row::canonical_cmp);
    }

    /// Rows matching `metric` and `role`.
    pub fn select<'a>(&'a self, metric: &'a str, role: &'a str) -> impl Iterator<Item = &'a Row> {
        self.rows
            .iter()
            .filter(move |r| r.metric == metric && r.role == role)
    }
}

/// `%.17g`: 17 significant digits, trailing zeros dropped, exponent form
/// outside `[1e-5, 1e17)`. Parses back to the identical `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0" } else { "0" }.into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.into()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').into()
    } else {
        s
    }
}

/// The sidecar path for `csv`: same stem, `.json` extension.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn to_csv(table: &ResultTable) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(COLUMNS).expect("in-memory write");
    for row in &table.rows {
        w.write_record(row.fields()).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Write the CSV to `path` and the metadata to its sidecar.
pub fn emit(table: &ResultTable, path: &Path) -> Result<(), IoError> {
    crate::io::write_bytes(path, &to_csv(table))?;
    let mut json = serde_json::to_vec_pretty(&table.metadata).expect("metadata serializes");
    json.push(b'\n');
    crate::io::write_bytes(&sidecar_path(path), &json)
}

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("IoError: {0}")]
    Io(#[from] IoError),
    #[error("FormatError: {0}")]
    Format(String),
}

/// Parse rows written by [`emit`].
pub fn parse_csv(bytes: &[u8]) -> Result<Vec<Row>, CsvError> {
    let bad = |what: &str| CsvError::Format(what.to_string());
    let mut r = csv::ReaderBuilder::new().from_reader(bytes);
    let header = r.headers().map_err(|e| bad(&e.to_string()))?;
    if header.iter().ne(COLUMNS) {
        return Err(bad("unexpected header"));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(&e.to_string()))?;
        let num = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|_| bad(&format!("bad number {:?}", &rec[i])))
        };
        rows.push(Row {
            experiment: rec[0].into(),
            spec: rec[1].into(),
            role: rec[2].into(),
            sigma: num(3)?,
            seed: rec[4].parse().map_err(|_| bad("bad seed"))?,
            metric: rec[5].into(),
            index: match &rec[6] {
                "" => None,
                s => Some(s.parse().map_err(|_| bad("bad index"))?),
            },
            value: num(7)?,
        });
    }
    Ok(rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<Row>, CsvError> {
    parse_csv(&crate::io::read_bytes(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digit_formatting() {
        assert_eq!(fmt_f64(0.0), "0");
        assert_eq!(fmt_f64(1.0), "1");
        assert_eq!(fmt_f64(0.5), "0.5");
        assert_eq!(fmt_f64(0.1), "0.10000000000000001");
        assert_eq!(fmt_f64(-2.5e-7), "-2.4999999999999999e-07");
        assert_eq!(fmt_f64(1e20), "1e+20");
        assert_eq!(fmt_f64(123456.0), "123456");
        assert_eq!(fmt_f64(f64::MAX), "1.7976931348623157e+308");
    }

    #[test]
    fn formatting_round_trips() {
        let mut s = obfusc_core::RngStream::derive(1, "fmt");
        for _ in 0..20_000 {
            let bits = s.next_u64();
            let v = f64::from_bits(bits);
            if v.is_finite() {
                assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
            }
        }
    }
}
