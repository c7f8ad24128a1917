//! Pearson correlation, correlation matrices, and per-system aggregation of
//! per-summary metric tables.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::report::fixed6;

/// Product-moment correlation of two equally long samples.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    pearson_named(x, y, "x", "y")
}

fn pearson_named(x: &[f64], y: &[f64], x_name: &str, y_name: &str) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            what: "correlation samples",
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "correlation needs at least 2 observations, got {}",
            x.len()
        )));
    }
    for (name, values) in [(x_name, x), (y_name, y)] {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value in {name}")));
        }
        if values.iter().all(|&v| v == values[0]) {
            return Err(Error::UndefinedCorrelation(name.to_string()));
        }
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Metric values per unit (summary or system). Every row has one value per
/// metric, in `metrics` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub unit_header: String,
    pub metrics: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl ScoreTable {
    pub fn new(unit_header: &str, metrics: Vec<String>, rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for m in &metrics {
            if !seen.insert(m.as_str()) {
                return Err(Error::DuplicateId(m.clone()));
            }
        }
        let mut seen = HashSet::new();
        for (unit, values) in &rows {
            if !seen.insert(unit.as_str()) {
                return Err(Error::DuplicateId(unit.clone()));
            }
            if values.len() != metrics.len() {
                return Err(Error::LengthMismatch {
                    what: "row values vs metric names",
                    left: values.len(),
                    right: metrics.len(),
                });
            }
        }
        Ok(ScoreTable {
            unit_header: unit_header.to_string(),
            metrics,
            rows,
        })
    }

    pub fn column(&self, metric: usize) -> Vec<f64> {
        self.rows.iter().map(|(_, v)| v[metric]).collect()
    }

    /// CSV with a header row; the first column holds unit ids.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        let mut fields = header.iter();
        let unit_header = fields
            .next()
            .ok_or_else(|| Error::InvalidArgument("score table has no header".into()))?
            .to_string();
        let metrics: Vec<String> = fields.map(String::from).collect();
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let unit = record[0].to_string();
            let values = record
                .iter()
                .skip(1)
                .zip(&metrics)
                .map(|(field, metric)| {
                    field.parse::<f64>().map_err(|_| Error::MalformedLine {
                        path: "<scores>".into(),
                        line,
                        message: format!("{metric}: {field:?} is not a number"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push((unit, values));
        }
        Self::new(&unit_header, metrics, rows)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(file)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(std::iter::once(&self.unit_header).chain(&self.metrics))?;
        for (unit, values) in &self.rows {
            w.write_record(std::iter::once(unit.clone()).chain(values.iter().map(|&v| fixed6(v))))?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

/// Square, symmetric matrix of pairwise correlations.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub values: Array2<f64>,
}

impl CorrelationMatrix {
    /// Upper-triangle pairs `(a, b, r)` in column order.
    pub fn pairs(&self) -> Vec<(&str, &str, f64)> {
        let n = self.names.len();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| (self.names[i].as_str(), self.names[j].as_str(), self.values[[i, j]]))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(std::iter::once("metric").chain(self.names.iter().map(String::as_str)))?;
        for (i, name) in self.names.iter().enumerate() {
            w.write_record(
                std::iter::once(name.clone()).chain(self.values.row(i).iter().map(|&v| fixed6(v))),
            )?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

pub fn correlation_matrix(table: &ScoreTable) -> Result<CorrelationMatrix> {
    if table.rows.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "correlation needs at least 2 rows, got {}",
            table.rows.len()
        )));
    }
    let n = table.metrics.len();
    let columns: Vec<Vec<f64>> = (0..n).map(|m| table.column(m)).collect();
    let mut values = Array2::eye(n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                // still rejects a constant column on its own
                pearson_named(&columns[i], &columns[i], &table.metrics[i], &table.metrics[i])?;
            } else if i < j {
                let r = pearson_named(&columns[i], &columns[j], &table.metrics[i], &table.metrics[j])?;
                values[[i, j]] = r;
                values[[j, i]] = r;
            }
        }
    }
    Ok(CorrelationMatrix {
        names: table.metrics.clone(),
        values,
    })
}

/// Unit id to system id.
pub type Grouping = BTreeMap<String, String>;

/// CSV with header `unit,system`.
pub fn read_grouping<R: Read>(reader: R) -> Result<Grouping> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Grouping::new();
    for record in rdr.records() {
        let record = record?;
        if record.len() != 2 {
            let line = record.position().map_or(0, |p| p.line() as usize);
            return Err(Error::MalformedLine {
                path: "<grouping>".into(),
                line,
                message: "expected unit,system".into(),
            });
        }
        if out.insert(record[0].to_string(), record[1].to_string()).is_some() {
            return Err(Error::DuplicateId(record[0].to_string()));
        }
    }
    Ok(out)
}

pub fn load_grouping(path: &Path) -> Result<Grouping> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_grouping(file)
}

/// Per-system means of every metric, systems in id order.
pub fn level_aggregate(table: &ScoreTable, grouping: &Grouping) -> Result<ScoreTable> {
    let unmapped: Vec<String> = table
        .rows
        .iter()
        .filter(|(u, _)| !grouping.contains_key(u))
        .map(|(u, _)| u.clone())
        .collect();
    if !unmapped.is_empty() {
        return Err(Error::MissingIds(unmapped));
    }
    let mut groups: BTreeMap<&str, Vec<&[f64]>> = grouping.values().map(|s| (s.as_str(), Vec::new())).collect();
    for (unit, values) in &table.rows {
        groups
            .get_mut(grouping[unit].as_str())
            .expect("every system is pre-seeded")
            .push(values);
    }
    let mut rows = Vec::with_capacity(groups.len());
    for (system, members) in groups {
        if members.is_empty() {
            return Err(Error::InvalidArgument(format!("system {system} has no scored units")));
        }
        let n = members.len() as f64;
        let means = (0..table.metrics.len())
            .map(|m| members.iter().map(|v| v[m]).sum::<f64>() / n)
            .collect();
        rows.push((system.to_string(), means));
    }
    ScoreTable::new("system", table.metrics.clone(), rows)
}
