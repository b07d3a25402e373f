use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Column order of every risk CSV.
pub const RISK_HEADER: [&str; 10] = ["estimator", "metric", "d", "r", "k", "m", "N", "trials", "mean", "stderr"];

/// Monte-Carlo mean error of one estimator under one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub estimator: String,
    pub metric: String,
    pub d: usize,
    pub r: usize,
    pub k: u64,
    pub m: u64,
    #[serde(rename = "N")]
    pub n: u64,
    pub trials: usize,
    pub mean: f64,
    pub stderr: f64,
}

/// An (estimator, metric) pair left out of a report.
#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub estimator: String,
    pub metric: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RiskReport {
    pub rows: Vec<RiskRow>,
    pub skipped: Vec<Skipped>,
}

impl RiskReport {
    pub fn find(&self, estimator: &str, metric: &str, r: usize) -> Option<&RiskRow> {
        self.rows
            .iter()
            .find(|row| row.estimator == estimator && row.metric == metric && row.r == r)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        w.write_record(RISK_HEADER)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let rows = r.deserialize().collect::<std::result::Result<Vec<RiskRow>, _>>()?;
        Ok(Self {
            rows,
            skipped: Vec::new(),
        })
    }
}

/// A risk row next to its theoretical value, when one exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub estimator: String,
    pub metric: String,
    pub d: usize,
    pub r: usize,
    pub k: u64,
    pub m: u64,
    #[serde(rename = "N")]
    pub n: u64,
    pub trials: usize,
    pub mean: f64,
    pub stderr: f64,
    pub prediction: Option<f64>,
}

impl FigureRow {
    pub fn new(row: &RiskRow, prediction: Option<f64>) -> Self {
        Self {
            estimator: row.estimator.clone(),
            metric: row.metric.clone(),
            d: row.d,
            r: row.r,
            k: row.k,
            m: row.m,
            n: row.n,
            trials: row.trials,
            mean: row.mean,
            stderr: row.stderr,
            prediction,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureReport {
    pub name: String,
    pub rows: Vec<FigureRow>,
}

impl FigureReport {
    pub fn find(&self, estimator: &str, metric: &str, r: usize) -> Option<&FigureRow> {
        self.rows
            .iter()
            .find(|row| row.estimator == estimator && row.metric == metric && row.r == r)
    }

    /// Risk columns followed by `prediction` (empty when unavailable).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        let mut header = RISK_HEADER.to_vec();
        header.push("prediction");
        w.write_record(header)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> RiskRow {
        RiskRow {
            estimator: "ls".into(),
            metric: "frobenius".into(),
            d: 4,
            r: 1,
            k: 9,
            m: 100,
            n: 900,
            trials: 10,
            mean: 0.125,
            stderr: 0.01,
        }
    }

    #[test]
    fn golden_header() {
        let report = RiskReport {
            rows: vec![row()],
            skipped: Vec::new(),
        };
        let mut out = Vec::new();
        report.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "estimator,metric,d,r,k,m,N,trials,mean,stderr\nls,frobenius,4,1,9,100,900,10,0.125,0.01\n"
        );
        let back = RiskReport::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.rows, report.rows);
    }

    #[test]
    fn empty_report_still_has_header() {
        let mut out = Vec::new();
        RiskReport::default().write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "estimator,metric,d,r,k,m,N,trials,mean,stderr\n");
    }

    #[test]
    fn figure_rows_leave_missing_predictions_empty() {
        let report = FigureReport {
            name: "fig".into(),
            rows: vec![FigureRow::new(&row(), None), FigureRow::new(&row(), Some(0.5))],
        };
        let mut out = Vec::new();
        report.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "estimator,metric,d,r,k,m,N,trials,mean,stderr,prediction");
        assert!(lines[1].ends_with("0.01,"));
        assert!(lines[2].ends_with("0.01,0.5"));
    }
}
