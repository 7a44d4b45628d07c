//! Rows of the comparison and benchmark reports.

use serde::{Deserialize, Serialize};

/// One method answering one request. Missing values are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub request: f64,
    pub method: String,
    pub expected_effort: Option<f64>,
    pub realized_effort: Option<f64>,
    pub expected_efficiency: Option<f64>,
    pub realized_efficiency: Option<f64>,
    pub eval_count: u64,
    pub wall_time_s: f64,
}

/// One solve of the benchmark grid. Factors compare against the previous
/// row with the same flow step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub qphi: u32,
    pub flow_step: Option<f64>,
    pub combinations: u64,
    pub eval_count: Option<u64>,
    pub candidates: Option<u64>,
    pub wall_time_s: Option<f64>,
    pub combination_factor: Option<f64>,
    pub eval_factor: Option<f64>,
}

/// Fills the growth factors of `rows` in place.
pub fn growth_factors(rows: &mut [BenchRow]) {
    for i in 0..rows.len() {
        let prev = rows[..i]
            .iter()
            .rev()
            .find(|r| r.flow_step == rows[i].flow_step)
            .cloned();
        if let Some(p) = prev {
            let r = &mut rows[i];
            r.combination_factor = Some(r.combinations as f64 / p.combinations as f64);
            r.eval_factor = match (r.eval_count, p.eval_count) {
                (Some(a), Some(b)) if b > 0 => Some(a as f64 / b as f64),
                _ => None,
            };
        }
    }
}
