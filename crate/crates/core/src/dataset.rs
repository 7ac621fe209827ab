//! Tabular data: named real-valued columns stored row-major.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<String>,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(columns: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let width = columns.len();
        if width == 0 {
            return arg("dataset needs at least one column");
        }
        if rows.is_empty() {
            return arg("dataset needs at least one record");
        }
        let mut values = Vec::with_capacity(width * rows.len());
        for (i, r) in rows.iter().enumerate() {
            if r.len() != width {
                return arg(format!("record {i} has {} fields, expected {width}", r.len()));
            }
            values.extend_from_slice(r);
        }
        Ok(Self { columns, values })
    }

    pub fn from_flat(columns: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let width = columns.len();
        if width == 0 || values.is_empty() || values.len() % width != 0 {
            return arg("flat values must be a non-empty multiple of the column count");
        }
        Ok(Self { columns, values })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.width()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.width())
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Argument(format!("no column named {name:?}")))
    }

    /// Column means.
    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.width()];
        for r in self.rows() {
            for (a, v) in acc.iter_mut().zip(r) {
                *a += v;
            }
        }
        let n = self.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let columns: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != columns.len() {
                return arg(format!("CSV record {i} has {} fields, expected {}", rec.len(), columns.len()));
            }
            for field in rec.iter() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Argument(format!("CSV record {i}: cannot parse {field:?} as a number"))
                })?;
                values.push(v);
            }
        }
        Self::from_flat(columns, values)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_writer(std::fs::File::create(path)?)
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(&self.columns)?;
        for r in self.rows() {
            wtr.write_record(r.iter().map(|v| fmt_f64(*v)))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Full-precision (17 significant digit) rendering used in every CSV we emit.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Column roles by name, as found in a CSV header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaSpec {
    pub y: String,
    pub x: Vec<String>,
    /// Instrument block; empty means "same as X".
    #[serde(default)]
    pub z: Vec<String>,
    #[serde(default)]
    pub censoring: Option<String>,
}

/// Column roles resolved to indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub y: usize,
    pub x: Vec<usize>,
    pub z: Vec<usize>,
    pub censoring: Option<usize>,
}

impl SchemaSpec {
    pub fn resolve(&self, data: &Dataset) -> Result<Schema> {
        let idx = |names: &[String]| -> Result<Vec<usize>> {
            names.iter().map(|n| data.column_index(n)).collect()
        };
        let x = idx(&self.x)?;
        if x.is_empty() {
            return arg("schema needs at least one X column");
        }
        let z = if self.z.is_empty() { x.clone() } else { idx(&self.z)? };
        Ok(Schema {
            y: data.column_index(&self.y)?,
            x,
            z,
            censoring: self.censoring.as_deref().map(|c| data.column_index(c)).transpose()?,
        })
    }

    /// `Y, X1..Xd` with `Z = X`.
    pub fn regression(d: usize) -> Self {
        Self {
            y: "Y".into(),
            x: (1..=d).map(|j| format!("X{j}")).collect(),
            z: Vec::new(),
            censoring: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_and_empty() {
        assert!(Dataset::new(vec!["a".into()], &[]).is_err());
        assert!(Dataset::new(vec!["a".into(), "b".into()], &[vec![1.0]]).is_err());
        assert!(Dataset::new(vec![], &[vec![]]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = Dataset::new(
            vec!["Y".into(), "X1".into()],
            &[vec![0.1, 1.0 / 3.0], vec![-2.5e-300, std::f64::consts::PI]],
        )
        .unwrap();
        let mut buf = Vec::new();
        d.to_writer(&mut buf).unwrap();
        let back = Dataset::from_reader(buf.as_slice()).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn schema_resolution() {
        let d = Dataset::new(
            vec!["Y".into(), "X1".into(), "X2".into(), "C".into()],
            &[vec![0.0, 1.0, 2.0, 1.0]],
        )
        .unwrap();
        let mut spec = SchemaSpec::regression(2);
        spec.censoring = Some("C".into());
        let s = spec.resolve(&d).unwrap();
        assert_eq!(s.y, 0);
        assert_eq!(s.x, vec![1, 2]);
        assert_eq!(s.z, vec![1, 2]);
        assert_eq!(s.censoring, Some(3));
        spec.x.push("nope".into());
        assert!(spec.resolve(&d).is_err());
    }

    #[test]
    fn bad_numbers_are_argument_errors() {
        let csv = "a,b\n1,2\n3,x\n";
        assert!(matches!(Dataset::from_reader(csv.as_bytes()), Err(Error::Argument(_))));
    }
}
