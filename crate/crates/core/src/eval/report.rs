//! Report tables in CSV and JSON. Values are rounded to nine decimals when
//! rows are built, so both encodings carry the same numbers exactly.

use serde::{Deserialize, Serialize};

use super::EvalError;

pub const MEAN_ROW: &str = "mean";

pub fn round9(x: f64) -> f64 {
    let r = (x * 1e9).round() / 1e9;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// One correspondence-tracking cell; `n` is the number of pairs it covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingRow {
    pub protocol: String,
    pub method: String,
    pub detection: String,
    pub pair: String,
    pub n: usize,
    pub total: f64,
    pub inlier_rate_pct: f64,
    pub inlier_count: f64,
    pub runtime_s: Option<f64>,
    pub degenerate: usize,
}

/// One trajectory-transfer cell; errors are absent when every pair failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub protocol: String,
    pub method: String,
    pub detection: String,
    pub pair: String,
    pub n: usize,
    pub failures: usize,
    pub rot_err_rad: Option<f64>,
    pub trans_err_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "rows", rename_all = "snake_case")]
pub enum Report {
    Tracking(Vec<TrackingRow>),
    Trajectory(Vec<TrajectoryRow>),
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl TrackingRow {
    /// Aggregate over `rows`: means of the numeric columns, summed flags.
    pub fn mean_of(rows: &[TrackingRow]) -> Option<TrackingRow> {
        let first = rows.first()?;
        let runtime = if rows.iter().all(|r| r.runtime_s.is_some()) {
            mean(rows.iter().filter_map(|r| r.runtime_s)).map(round9)
        } else {
            None
        };
        Some(TrackingRow {
            protocol: first.protocol.clone(),
            method: first.method.clone(),
            detection: first.detection.clone(),
            pair: MEAN_ROW.into(),
            n: rows.iter().map(|r| r.n).sum(),
            total: round9(mean(rows.iter().map(|r| r.total))?),
            inlier_rate_pct: round9(mean(rows.iter().map(|r| r.inlier_rate_pct))?),
            inlier_count: round9(mean(rows.iter().map(|r| r.inlier_count))?),
            runtime_s: runtime,
            degenerate: rows.iter().map(|r| r.degenerate).sum(),
        })
    }
}

impl TrajectoryRow {
    pub fn mean_of(rows: &[TrajectoryRow]) -> Option<TrajectoryRow> {
        let first = rows.first()?;
        let ok: Vec<&TrajectoryRow> = rows.iter().filter(|r| r.rot_err_rad.is_some()).collect();
        Some(TrajectoryRow {
            protocol: first.protocol.clone(),
            method: first.method.clone(),
            detection: first.detection.clone(),
            pair: MEAN_ROW.into(),
            n: ok.len(),
            failures: rows.iter().map(|r| r.failures).sum(),
            rot_err_rad: mean(ok.iter().filter_map(|r| r.rot_err_rad)).map(round9),
            trans_err_m: mean(ok.iter().filter_map(|r| r.trans_err_m)).map(round9),
        })
    }
}

fn to_csv<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("row serializes");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

fn from_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, EvalError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| EvalError::Report(e.to_string()))
}

impl Report {
    pub fn len(&self) -> usize {
        match self {
            Self::Tracking(r) => r.len(),
            Self::Trajectory(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_csv(&self) -> String {
        match self {
            Self::Tracking(r) => to_csv(r),
            Self::Trajectory(r) => to_csv(r),
        }
    }

    pub fn to_json(&self) -> String {
        crate::bundle::to_json_pretty(self)
    }

    /// The table kind is recognized from the header.
    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let header = text.lines().next().unwrap_or_default();
        if header.split(',').any(|h| h == "inlier_rate_pct") {
            Ok(Self::Tracking(from_csv(text)?))
        } else if header.split(',').any(|h| h == "rot_err_rad") {
            Ok(Self::Trajectory(from_csv(text)?))
        } else {
            Err(EvalError::Report(format!("unrecognized report header: {header}")))
        }
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::Report(e.to_string()))
    }

    /// The aggregate row, if present.
    pub fn mean_row(&self) -> Option<Report> {
        match self {
            Self::Tracking(r) => r.iter().find(|x| x.pair == MEAN_ROW).map(|x| Self::Tracking(vec![x.clone()])),
            Self::Trajectory(r) => r.iter().find(|x| x.pair == MEAN_ROW).map(|x| Self::Trajectory(vec![x.clone()])),
        }
    }
}
