use std::path::Path;

use crate::error::{check_dim, Error, Result};
use crate::fmt_f64;

/// Paired design points and noisy observations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl Dataset {
    pub fn new(points: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        check_dim(points.len(), values.len())?;
        if let Some(d) = points.first().map(Vec::len) {
            for p in &points {
                check_dim(d, p.len())?;
            }
        }
        Ok(Dataset { points, values })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(Vec::len)
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) {
        self.points.push(x);
        self.values.push(y);
    }

    /// Reads a CSV with header `x_1..x_d,y`.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let csv_err = |message: String| Error::Csv {
            path: path.to_path_buf(),
            message,
        };
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(e.to_string()))?;
        let headers = rdr.headers().map_err(|e| csv_err(e.to_string()))?.clone();
        let d = headers
            .len()
            .checked_sub(1)
            .filter(|d| *d >= 1)
            .ok_or_else(|| csv_err("expected header x_1..x_d,y".into()))?;
        for (j, h) in headers.iter().enumerate() {
            let want = if j < d { format!("x_{}", j + 1) } else { "y".to_string() };
            if h.trim() != want {
                return Err(csv_err(format!("column {} must be `{want}`, found `{h}`", j + 1)));
            }
        }
        let mut data = Dataset::default();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| csv_err(e.to_string()))?;
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| csv_err(format!("row {}: {e}", line + 1)))?;
            if vals.len() != d + 1 {
                return Err(csv_err(format!("row {}: expected {} fields", line + 1, d + 1)));
            }
            data.push(vals[..d].to_vec(), vals[d]);
        }
        Ok(data)
    }

    /// Writes a CSV with header `x_1..x_d,y`.
    pub fn write_csv(&self, path: &Path, dim: usize) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut header: Vec<String> = (1..=dim).map(|j| format!("x_{j}")).collect();
        header.push("y".into());
        let map = |e: csv::Error| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        w.write_record(&header).map_err(map)?;
        for (x, y) in self.points.iter().zip(&self.values) {
            let mut row: Vec<String> = x.iter().map(|v| fmt_f64(*v)).collect();
            row.push(fmt_f64(*y));
            w.write_record(&row).map_err(map)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let d = Dataset::new(vec![vec![0.1, 0.2], vec![1.0 / 3.0, 2.0]], vec![-1.5, 1e-300]).unwrap();
        d.write_csv(&path, 2).unwrap();
        assert_eq!(Dataset::read_csv(&path).unwrap(), d);
    }

    #[test]
    fn bad_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(Dataset::read_csv(&path), Err(Error::Csv { .. })));
    }

    #[test]
    fn ragged_rejected() {
        assert!(Dataset::new(vec![vec![0.0], vec![0.0, 1.0]], vec![1.0, 2.0]).is_err());
        assert!(Dataset::new(vec![vec![0.0]], vec![]).is_err());
    }
}
