use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{CdfError, Result};

/// N×n table of telemetry samples with one named column per feature.
///
/// Values may hold NaN (missing readings from an imported file); the
/// generator never produces them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    names: Vec<String>,
    values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if names.len() != values.ncols() {
            return Err(CdfError::ShapeMismatch {
                expected: names.len(),
                found: values.ncols(),
            });
        }
        let mut seen = HashSet::with_capacity(names.len());
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(CdfError::InvalidData(format!(
                    "duplicate feature name `{name}`"
                )));
            }
        }
        Ok(Self { names, values })
    }

    /// Builds a matrix with generated column names `prefix1..prefixN`.
    pub fn with_prefix(prefix: &str, values: Array2<f64>) -> Self {
        let names = (1..=values.ncols())
            .map(|i| format!("{prefix}{i}"))
            .collect();
        Self { names, values }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn select_columns(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            names: indices.iter().map(|&j| self.names[j].clone()).collect(),
            values: self.values.select(Axis(1), indices),
        }
    }

    /// Columns by name, in the order given.
    pub fn select_by_name(&self, names: &[String]) -> Result<FeatureMatrix> {
        let indices = names
            .iter()
            .map(|name| {
                self.column_index(name)
                    .ok_or_else(|| CdfError::MissingFeature(name.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select_columns(&indices))
    }

    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            names: self.names.clone(),
            values: self.values.select(Axis(0), indices),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(&self.names)?;
        let mut record = Vec::with_capacity(self.n_features());
        for row in self.values.rows() {
            record.clear();
            record.extend(row.iter().map(|v| v.to_string()));
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a header-first CSV. Empty fields are read as missing (NaN).
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut input = csv::Reader::from_reader(reader);
        let names: Vec<String> = input.headers()?.iter().map(str::to_owned).collect();
        let mut flat = Vec::new();
        let mut rows = 0;
        for (line, record) in input.records().enumerate() {
            let record = record?;
            if record.len() != names.len() {
                return Err(CdfError::ShapeMismatch {
                    expected: names.len(),
                    found: record.len(),
                });
            }
            for field in record.iter() {
                let field = field.trim();
                let value = if field.is_empty() {
                    f64::NAN
                } else {
                    field.parse::<f64>().map_err(|_| {
                        CdfError::InvalidData(format!("row {}: cannot parse `{field}`", line + 1))
                    })?
                };
                flat.push(value);
            }
            rows += 1;
        }
        let values = Array2::from_shape_vec((rows, names.len()), flat)
            .map_err(|e| CdfError::InvalidData(e.to_string()))?;
        Self::new(names, values)
    }

    pub fn to_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}
