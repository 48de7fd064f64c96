//! Column-oriented numeric datasets and their CSV form.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::simulate::ScmSpec;

/// Provenance of a generated dataset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetMeta {
    pub seed: Option<u64>,
    pub generator: Option<String>,
    pub shift: Option<Shift>,
    /// Structural model the data came from, kept so interventions can
    /// regenerate it.
    pub scm: Option<Arc<ScmSpec>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shift {
    pub sigma2: f64,
    pub variables: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    target: Option<String>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::LengthMismatch {
                expected: names.len(),
                found: columns.len(),
            });
        }
        if let Some(first) = columns.first() {
            if let Some(bad) = columns.iter().find(|c| c.len() != first.len()) {
                return Err(Error::LengthMismatch {
                    expected: first.len(),
                    found: bad.len(),
                });
            }
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::Data(format!("duplicate column `{n}`")));
            }
        }
        Ok(Dataset {
            names,
            columns,
            target: None,
            meta: DatasetMeta::default(),
        })
    }

    pub fn with_target(mut self, target: &str) -> Result<Self> {
        self.index_of(target)?;
        self.target = Some(target.to_string());
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn target_name(&self) -> Option<&str> {
        self.target.as_deref()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.columns[self.index_of(name)?])
    }

    pub fn column_at(&self, idx: usize) -> &[f64] {
        &self.columns[idx]
    }

    /// Names of every column except `target`, in column order.
    pub fn covariates(&self, target: &str) -> Result<Vec<String>> {
        self.index_of(target)?;
        Ok(self.names.iter().filter(|n| *n != target).cloned().collect())
    }

    /// Keeps only the named columns, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Dataset> {
        let mut cols = Vec::with_capacity(names.len());
        for n in names {
            cols.push(self.column(n)?.to_vec());
        }
        let mut out = Dataset::new(names.iter().map(|s| s.to_string()).collect(), cols)?;
        out.target = self.target.clone().filter(|t| names.contains(&t.as_str()));
        out.meta = self.meta.clone();
        Ok(out)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let names: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Data(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if names.is_empty() || names.iter().any(String::is_empty) {
            return Err(Error::Data("header row is missing or has empty names".into()));
        }
        let mut columns = vec![Vec::new(); names.len()];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(e.to_string()))?;
            for (j, cell) in rec.iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Data(format!(
                        "non-numeric value `{cell}` in column `{}` at data row {}",
                        names[j],
                        row + 1
                    ))
                })?;
                columns[j].push(v);
            }
        }
        Dataset::new(names, columns)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        Dataset::from_csv_reader(std::io::BufReader::new(file))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(writer);
        writeln!(w, "{}", self.names.join(","))?;
        let mut line = String::new();
        for i in 0..self.n_rows() {
            line.clear();
            for (j, col) in self.columns.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&col[i].to_string());
            }
            writeln!(w, "{line}")?;
        }
        w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let d = Dataset::new(
            vec!["X1".into(), "Y".into()],
            vec![vec![0.1, -2.5e-7, 3.0], vec![1.0, 0.0, 4.0]],
        )
        .unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Dataset::from_csv_reader(buf.as_slice()).unwrap();
        assert_eq!(back.column("X1").unwrap(), d.column("X1").unwrap());
        assert_eq!(back.column("Y").unwrap(), d.column("Y").unwrap());
    }

    #[test]
    fn malformed_csv_rejected() {
        let ragged = "a,b\n1,2\n3\n";
        assert!(matches!(
            Dataset::from_csv_reader(ragged.as_bytes()),
            Err(Error::Data(_))
        ));
        let text = "a,b\n1,x\n";
        assert!(matches!(
            Dataset::from_csv_reader(text.as_bytes()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn duplicate_names_rejected() {
        assert!(Dataset::new(vec!["a".into(), "a".into()], vec![vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn covariates_exclude_target() {
        let d = Dataset::new(
            vec!["X1".into(), "Y".into(), "X2".into()],
            vec![vec![0.0], vec![1.0], vec![2.0]],
        )
        .unwrap();
        assert_eq!(d.covariates("Y").unwrap(), vec!["X1", "X2"]);
        assert!(d.covariates("Z").is_err());
    }
}
