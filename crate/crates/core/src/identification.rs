//! Polynomial identification from operating data.
//!
//! Inputs are rescaled to `[-1, 1]` before the least-squares solve (raw
//! monomials of e.g. `[80, 100]` are hopelessly ill-conditioned at degree 3)
//! and the coefficients are mapped back to physical units afterwards.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{compose_affine, monomials, Interval, PolynomialModel, Term};
use crate::spec::SystemSpec;

/// Degree used when none is given.
pub const DEFAULT_DEGREE: u32 = 3;

/// Relative size below which a pivot of the triangular factor counts as zero.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("column `{0}` not in dataset")]
    UnknownColumn(String),
    #[error("column `{0}` has no rows")]
    EmptyColumn(String),
    #[error("degree must be at least 1")]
    BadDegree,
    #[error("{rows} usable rows for {terms} terms")]
    InsufficientRows { rows: usize, terms: usize },
    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),
    #[error("row {row} has {got} values, expected {expected}")]
    RaggedRow {
        row: usize,
        got: usize,
        expected: usize,
    },
}

/// Tabular operating data, one column per dimension.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(columns: Vec<String>, provenance: &str) -> Self {
        Self {
            columns,
            rows: Vec::new(),
            provenance: provenance.into(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<(), FitError> {
        if row.len() != self.columns.len() {
            return Err(FitError::RaggedRow {
                row: self.rows.len(),
                got: row.len(),
                expected: self.columns.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Result<usize, FitError> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| FitError::UnknownColumn(name.into()))
    }

    pub fn column(&self, name: &str) -> Result<impl Iterator<Item = f64> + '_, FitError> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().map(move |r| r[i]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub output: String,
    pub rows: usize,
    /// Rows dropped because a used column was not finite.
    pub dropped: usize,
    pub rms: f64,
    pub r_squared: f64,
    /// Largest absolute observed output, for relative residuals.
    pub scale: f64,
}

/// `[min, max]` of one column.
pub fn extract_bounds(data: &Dataset, dim: &str) -> Result<Interval, FitError> {
    let mut it = data.column(dim)?.filter(|v| v.is_finite());
    let first = it.next().ok_or_else(|| FitError::EmptyColumn(dim.into()))?;
    let (lo, hi) = it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
    Ok(Interval::new(lo, hi))
}

/// Least-squares fit of one output over all monomials up to `degree`.
///
/// Returns the terms in physical units, ordered like the input list.
pub fn fit_polynomial(
    data: &Dataset,
    inputs: &[String],
    output: &str,
    degree: u32,
) -> Result<(Vec<Term>, FitReport), FitError> {
    if degree == 0 {
        return Err(FitError::BadDegree);
    }
    let cols: Vec<usize> = inputs
        .iter()
        .map(|c| data.column_index(c))
        .collect::<Result<_, _>>()?;
    let oc = data.column_index(output)?;
    let usable: Vec<&Vec<f64>> = data
        .rows
        .iter()
        .filter(|r| cols.iter().chain([&oc]).all(|&i| r[i].is_finite()))
        .collect();
    let dropped = data.rows.len() - usable.len();
    let exps = monomials(inputs.len(), degree);
    if usable.len() < exps.len() {
        return Err(FitError::InsufficientRows {
            rows: usable.len(),
            terms: exps.len(),
        });
    }

    // x = (u - center) / half  maps the observed range onto [-1, 1]
    let mut center = vec![0.0; cols.len()];
    let mut half = vec![0.0; cols.len()];
    for (k, &c) in cols.iter().enumerate() {
        let lo = usable.iter().map(|r| r[c]).fold(f64::INFINITY, f64::min);
        let hi = usable.iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            return Err(FitError::RankDeficient(format!(
                "input `{}` is constant",
                inputs[k]
            )));
        }
        center[k] = 0.5 * (lo + hi);
        half[k] = 0.5 * (hi - lo);
    }

    let a = DMatrix::from_fn(usable.len(), exps.len(), |i, j| {
        let r = usable[i];
        let mut v = 1.0;
        for (k, &c) in cols.iter().enumerate() {
            let x = (r[c] - center[k]) / half[k];
            for _ in 0..exps[j][k] {
                v *= x;
            }
        }
        v
    });
    let y = DVector::from_iterator(usable.len(), usable.iter().map(|r| r[oc]));

    let qr = a.qr();
    let r = qr.r();
    let max_pivot = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(j) = (0..exps.len()).find(|&j| r[(j, j)].abs() <= RANK_TOLERANCE * max_pivot) {
        return Err(FitError::RankDeficient(format!(
            "monomial {:?} is not excited by the data",
            exps[j]
        )));
    }
    let qty = qr.q().transpose() * &y;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| FitError::RankDeficient("singular triangular factor".into()))?;

    let scaled: Vec<Term> = exps
        .iter()
        .zip(coef.iter())
        .map(|(e, &c)| Term::new(c, e.clone()))
        .collect();
    let offset: Vec<f64> = center.iter().zip(&half).map(|(c, h)| -c / h).collect();
    let scale: Vec<f64> = half.iter().map(|h| 1.0 / h).collect();
    let terms = compose_affine(&scaled, &offset, &scale);

    let n = usable.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (row, &obs) in usable.iter().zip(y.iter()) {
        let x: Vec<f64> = cols.iter().map(|&c| row[c]).collect();
        let e = obs - eval_terms(&terms, &x);
        ss_res += e * e;
        ss_tot += (obs - mean) * (obs - mean);
    }
    let report = FitReport {
        output: output.into(),
        rows: usable.len(),
        dropped,
        rms: libm::sqrt(ss_res / n),
        r_squared: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 },
        scale: y.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    };
    Ok((terms, report))
}

fn eval_terms(terms: &[Term], x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for t in terms {
        let mut v = t.coefficient;
        for (xi, &e) in x.iter().zip(&t.exponents) {
            for _ in 0..e {
                v *= xi;
            }
        }
        acc += v;
    }
    acc
}

/// Fits every output of a model skeleton, keeping its name and dimension
/// lists. The result has `max_degree == degree`.
pub fn fit_model(
    data: &Dataset,
    name: &str,
    inputs: &[String],
    outputs: &[String],
    degree: u32,
) -> Result<(PolynomialModel, Vec<FitReport>), FitError> {
    let mut terms = Vec::with_capacity(outputs.len());
    let mut reports = Vec::with_capacity(outputs.len());
    for o in outputs {
        let (t, r) = fit_polynomial(data, inputs, o, degree)?;
        terms.push(t);
        reports.push(r);
    }
    let model = PolynomialModel {
        name: name.into(),
        inputs: inputs.to_vec(),
        outputs: outputs.to_vec(),
        terms,
        max_degree: degree,
    };
    Ok((model, reports))
}

/// Refits every model of `spec` that has a dataset, keyed by model name.
/// Models without data are kept as they are.
pub fn fit_spec(
    spec: &SystemSpec,
    data: &BTreeMap<String, Dataset>,
    degree: u32,
) -> Result<(SystemSpec, Vec<FitReport>), FitError> {
    let mut out = spec.clone();
    let mut reports = Vec::new();
    for m in &mut out.models {
        if let Some(d) = data.get(&m.name) {
            let (fitted, r) = fit_model(d, &m.name, &m.inputs, &m.outputs, degree)?;
            *m = fitted;
            reports.extend(r);
        }
    }
    Ok((out, reports))
}
