//! Per-epoch training records and their CSV form.

use thiserror::Error;

pub const TRACE_HEADER: &str = "epoch,delta,lr,R_s,R_d,loss,dL_ddelta,sign_indicator,grad_competition";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace header mismatch: expected `{TRACE_HEADER}`, found `{0}`")]
    Header(String),
    #[error("trace row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error("trace is empty")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub epoch: usize,
    pub delta: f64,
    pub lr: f64,
    pub r_s: f64,
    pub r_d: f64,
    pub loss: f64,
    pub dl_ddelta: f64,
    pub sign_indicator: f64,
    /// `⟨∇R_s, ∇R_d⟩ / L`; NaN when `L = 0`.
    pub grad_competition: f64,
    /// `‖∇L‖² / L`; not written to CSV.
    pub pl_ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.delta).collect()
    }

    pub fn column(&self, f: impl Fn(&TraceRecord) -> f64) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.epoch, r.delta, r.lr, r.r_s, r.r_d, r.loss, r.dl_ddelta, r.sign_indicator, r.grad_competition
            ));
        }
        out
    }

    /// Parses a trace; `pl_ratio` comes back as NaN.
    pub fn from_csv(text: &str) -> Result<Self, TraceError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(TraceError::Empty)?.trim();
        if header != TRACE_HEADER {
            return Err(TraceError::Header(header.to_string()));
        }
        let mut records = Vec::new();
        for (k, line) in lines.enumerate() {
            let row = k + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 9 {
                return Err(TraceError::Row {
                    row,
                    msg: format!("expected 9 fields, found {}", fields.len()),
                });
            }
            let epoch = fields[0].parse::<usize>().map_err(|e| TraceError::Row {
                row,
                msg: format!("epoch: {e}"),
            })?;
            let mut v = [0.0; 8];
            for (i, f) in fields[1..].iter().enumerate() {
                v[i] = f.parse::<f64>().map_err(|e| TraceError::Row {
                    row,
                    msg: format!("column {}: {e}", i + 2),
                })?;
            }
            if let Some(prev) = records.last().map(|r: &TraceRecord| r.epoch) {
                if epoch <= prev {
                    return Err(TraceError::Row {
                        row,
                        msg: "epochs must strictly increase".into(),
                    });
                }
            }
            records.push(TraceRecord {
                epoch,
                delta: v[0],
                lr: v[1],
                r_s: v[2],
                r_d: v[3],
                loss: v[4],
                dl_ddelta: v[5],
                sign_indicator: v[6],
                grad_competition: v[7],
                pl_ratio: f64::NAN,
            });
        }
        Ok(Self { records })
    }
}
