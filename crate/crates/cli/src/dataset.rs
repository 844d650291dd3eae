//! Tabular output: CSV with a schema comment line, or the same table as
//! JSON. Undefined cells (no violation, undefined QBER) are NaN in memory,
//! `NaN` in CSV and `null` in JSON.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub schema_version: u32,
    pub kind: String,
    pub columns: Vec<String>,
    #[serde(with = "nan_as_null")]
    pub rows: Vec<Vec<f64>>,
}

impl PartialEq for Dataset {
    /// Bitwise on cells, with any NaN equal to any NaN.
    fn eq(&self, other: &Self) -> bool {
        let same = |a: &f64, b: &f64| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan());
        self.schema_version == other.schema_version
            && self.kind == other.kind
            && self.columns == other.columns
            && self.rows.len() == other.rows.len()
            && self
                .rows
                .iter()
                .zip(&other.rows)
                .all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| same(x, y)))
    }
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(rows: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let cells: Vec<Vec<Option<f64>>> = rows
            .iter()
            .map(|r| r.iter().map(|&v| v.is_finite().then_some(v)).collect())
            .collect();
        cells.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        let cells: Vec<Vec<Option<f64>>> = Vec::deserialize(d)?;
        Ok(cells.into_iter().map(|r| r.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect()).collect())
    }
}

fn header_line(kind: &str) -> String {
    format!("# diqkd schema_version={SCHEMA_VERSION} kind={kind}")
}

impl Dataset {
    pub fn new(kind: &str, columns: &[&str]) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: kind.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        // anything non-finite is "undefined"
        self.rows.push(row.into_iter().map(|v| if v.is_finite() { v } else { f64::NAN }).collect());
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> anyhow::Result<()> {
        writeln!(out, "{}", header_line(&self.kind))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            // 17 significant digits: every f64 survives the round trip
            w.write_record(row.iter().map(|v| format!("{v:.16e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write<W: Write>(&self, format: Format, mut out: W) -> anyhow::Result<()> {
        match format {
            Format::Csv => self.write_csv(out),
            Format::Json => {
                serde_json::to_writer_pretty(&mut out, self)?;
                writeln!(out)?;
                Ok(())
            }
        }
    }

    pub fn read_csv<R: Read>(input: R) -> anyhow::Result<Self> {
        let mut input = BufReader::new(input);
        let mut first = String::new();
        input.read_line(&mut first)?;
        let (version, kind) = parse_header(first.trim_end())?;
        let mut r = csv::Reader::from_reader(input);
        let columns: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|c| c.parse::<f64>().with_context(|| format!("row {}: bad number {c:?}", i + 1)))
                .collect::<anyhow::Result<Vec<f64>>>()?;
            if row.len() != columns.len() {
                bail!("row {} has {} cells, expected {}", i + 1, row.len(), columns.len());
            }
            rows.push(row);
        }
        Ok(Self { schema_version: version, kind, columns, rows })
    }

    pub fn read_json<R: Read>(input: R) -> anyhow::Result<Self> {
        let ds: Self = serde_json::from_reader(input)?;
        if ds.schema_version != SCHEMA_VERSION {
            bail!("unsupported schema version {}", ds.schema_version);
        }
        Ok(ds)
    }

    /// Reads either format, deciding by the first byte.
    pub fn read_path(path: &Path) -> anyhow::Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        match bytes.iter().find(|b| !b.is_ascii_whitespace()) {
            Some(b'{') => Self::read_json(bytes.as_slice()),
            _ => Self::read_csv(bytes.as_slice()),
        }
    }
}

fn parse_header(line: &str) -> anyhow::Result<(u32, String)> {
    let rest = line
        .strip_prefix("# diqkd ")
        .ok_or_else(|| anyhow!("missing diqkd header line, got {line:?}"))?;
    let mut version = None;
    let mut kind = None;
    for field in rest.split_whitespace() {
        match field.split_once('=') {
            Some(("schema_version", v)) => version = Some(v.parse::<u32>()?),
            Some(("kind", k)) => kind = Some(k.to_string()),
            _ => bail!("unknown header field {field:?}"),
        }
    }
    let version = version.ok_or_else(|| anyhow!("header lacks schema_version"))?;
    if version != SCHEMA_VERSION {
        bail!("unsupported schema version {version}");
    }
    Ok((version, kind.ok_or_else(|| anyhow!("header lacks kind"))?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        let mut d = Dataset::new("demo", &["x", "y"]);
        d.push(vec![0.1, 1.0 / 3.0]);
        d.push(vec![f64::MIN_POSITIVE, f64::NAN]);
        d.push(vec![-2.5e300, f64::NEG_INFINITY]);
        d
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let d = sample();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(Dataset::read_csv(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let d = sample();
        let mut buf = Vec::new();
        d.write(Format::Json, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).contains("null"));
        assert_eq!(Dataset::read_json(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(Dataset::read_csv("a,b\n1,2\n".as_bytes()).is_err());
        assert!(Dataset::read_csv("# diqkd schema_version=9 kind=x\na\n1\n".as_bytes()).is_err());
        assert!(Dataset::read_csv("# diqkd schema_version=1 kind=x\na,b\n1\n".as_bytes()).is_err());
    }
}
