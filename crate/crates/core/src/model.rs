//! Quasi-static subsystem models.
//!
//! A subsystem maps free, external and coupling parameters onto efforts,
//! benefits and internal observations. Only polynomial realizations ship;
//! they are stored as explicit term lists and evaluated by direct summation.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("missing input `{0}`")]
    MissingInput(String),
    #[error("`{dimension}` = {value} outside [{lo}, {hi}]")]
    OutOfBounds {
        dimension: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("effort must be positive to compute an efficiency")]
    ZeroEffort,
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("invalid model `{model}`: {reason}")]
    InvalidModel { model: String, reason: String },
}

/// Role of a dimension in the model signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DimensionKind {
    /// Adjustable set-point.
    Free,
    /// Scenario input, fixed for one solve.
    External,
    /// Interface value that must agree between the subsystems sharing it.
    Coupling,
    Effort,
    Benefit,
    Internal,
}

impl DimensionKind {
    pub fn is_parameter(self) -> bool {
        matches!(self, Self::Free | Self::External | Self::Coupling)
    }

    pub fn is_flow(self) -> bool {
        matches!(self, Self::Effort | Self::Benefit)
    }
}

impl fmt::Display for DimensionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Free => "free",
            Self::External => "external",
            Self::Coupling => "coupling",
            Self::Effort => "effort",
            Self::Benefit => "benefit",
            Self::Internal => "internal",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub kind: DimensionKind,
    pub unit: String,
    pub lo: f64,
    pub hi: f64,
}

impl Dimension {
    pub fn new(name: &str, kind: DimensionKind, unit: &str, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            kind,
            unit: unit.into(),
            lo,
            hi,
        }
    }

    pub fn interval(&self) -> Interval {
        Interval::new(self.lo, self.hi)
    }
}

/// One monomial: `coefficient * prod(x_i ^ exponents[i])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coefficient: f64,
    pub exponents: Vec<u32>,
}

impl Term {
    pub fn new(coefficient: f64, exponents: Vec<u32>) -> Self {
        Self {
            coefficient,
            exponents,
        }
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }
}

/// Shared tally of model evaluations.
#[derive(Debug, Default)]
pub struct EvalCounter(AtomicU64);

impl EvalCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::Relaxed);
    }

    fn bump(&self) {
        self.add(1);
    }
}

/// Polynomial realization of a subsystem model.
///
/// `terms[j]` holds the monomials of `outputs[j]`; every exponent vector has
/// one entry per input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialModel {
    pub name: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub terms: Vec<Vec<Term>>,
    pub max_degree: u32,
}

impl PolynomialModel {
    pub fn new(
        name: &str,
        inputs: Vec<String>,
        outputs: Vec<String>,
        terms: Vec<Vec<Term>>,
        max_degree: u32,
    ) -> Result<Self, ModelError> {
        let m = Self {
            name: name.into(),
            inputs,
            outputs,
            terms,
            max_degree,
        };
        m.check_shape()?;
        Ok(m)
    }

    /// Structural invariants that do not need the dimension registry.
    pub fn check_shape(&self) -> Result<(), ModelError> {
        let bad = |reason: String| ModelError::InvalidModel {
            model: self.name.clone(),
            reason,
        };
        if self.terms.len() != self.outputs.len() {
            return Err(bad(alloc::format!(
                "{} term lists for {} outputs",
                self.terms.len(),
                self.outputs.len()
            )));
        }
        if self.outputs.is_empty() {
            return Err(bad("no outputs".into()));
        }
        for (out, terms) in self.outputs.iter().zip(&self.terms) {
            for t in terms {
                if t.exponents.len() != self.inputs.len() {
                    return Err(bad(alloc::format!(
                        "term of `{out}` has {} exponents for {} inputs",
                        t.exponents.len(),
                        self.inputs.len()
                    )));
                }
                if t.degree() > self.max_degree {
                    return Err(bad(alloc::format!(
                        "term of `{out}` has degree {} > max_degree {}",
                        t.degree(),
                        self.max_degree
                    )));
                }
                if !t.coefficient.is_finite() {
                    return Err(bad(alloc::format!("non-finite coefficient in `{out}`")));
                }
            }
        }
        Ok(())
    }

    /// Checks the model against the dimension registry: every name resolves
    /// and at least one output is an effort or benefit.
    pub fn check_dimensions(&self, dims: &BTreeMap<String, Dimension>) -> Result<(), ModelError> {
        for name in self.inputs.iter().chain(&self.outputs) {
            if !dims.contains_key(name) {
                return Err(ModelError::UnknownDimension(name.clone()));
            }
        }
        if !self.outputs.iter().any(|o| dims[o].kind.is_flow()) {
            return Err(ModelError::InvalidModel {
                model: self.name.clone(),
                reason: "outputs contain no effort or benefit dimension".into(),
            });
        }
        Ok(())
    }

    pub fn output_index(&self, name: &str) -> Option<usize> {
        self.outputs.iter().position(|o| o == name)
    }

    pub fn input_index(&self, name: &str) -> Option<usize> {
        self.inputs.iter().position(|o| o == name)
    }

    /// Evaluates all outputs at `x` (ordered like `inputs`) into `out`.
    ///
    /// `bounds[i]` is the admissible interval of input `i`. Counts one
    /// evaluation, including evaluations rejected as out of bounds.
    pub fn eval_slice(
        &self,
        x: &[f64],
        bounds: &[Interval],
        out: &mut [f64],
        counter: &EvalCounter,
    ) -> Result<(), ModelError> {
        debug_assert_eq!(x.len(), self.inputs.len());
        debug_assert_eq!(out.len(), self.outputs.len());
        counter.bump();
        for ((v, b), name) in x.iter().zip(bounds).zip(&self.inputs) {
            if !b.contains(*v) {
                return Err(ModelError::OutOfBounds {
                    dimension: name.clone(),
                    value: *v,
                    lo: b.lo,
                    hi: b.hi,
                });
            }
        }
        for (o, terms) in out.iter_mut().zip(&self.terms) {
            *o = sum_terms(terms, x);
        }
        Ok(())
    }
}

fn sum_terms(terms: &[Term], x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for t in terms {
        let mut p = t.coefficient;
        for (&e, &xi) in t.exponents.iter().zip(x) {
            for _ in 0..e {
                p *= xi;
            }
        }
        acc += p;
    }
    acc
}

/// Evaluates `model` at a named point. Returns one value per output.
pub fn eval_model(
    model: &PolynomialModel,
    dims: &BTreeMap<String, Dimension>,
    point: &BTreeMap<String, f64>,
    counter: &EvalCounter,
) -> Result<BTreeMap<String, f64>, ModelError> {
    let mut x = Vec::with_capacity(model.inputs.len());
    let mut bounds = Vec::with_capacity(model.inputs.len());
    for name in &model.inputs {
        let v = point
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::MissingInput(name.clone()))?;
        let d = dims
            .get(name)
            .ok_or_else(|| ModelError::UnknownDimension(name.clone()))?;
        x.push(v);
        bounds.push(d.interval());
    }
    let mut out = vec![0.0; model.outputs.len()];
    model.eval_slice(&x, &bounds, &mut out, counter)?;
    Ok(model.outputs.iter().cloned().zip(out).collect())
}

/// Energy efficiency `benefit / effort`.
pub fn efficiency(benefit: f64, effort: f64) -> Result<f64, ModelError> {
    if effort > 0.0 {
        Ok(benefit / effort)
    } else {
        Err(ModelError::ZeroEffort)
    }
}

/// All exponent vectors over `n` inputs with total degree `<= degree`,
/// ordered by total degree, then lexicographically descending.
pub fn monomials(n: usize, degree: u32) -> Vec<Vec<u32>> {
    let mut all = Vec::new();
    for d in 0..=degree {
        let mut cur = vec![0u32; n];
        push_with_degree(&mut all, &mut cur, 0, d);
    }
    all
}

fn push_with_degree(all: &mut Vec<Vec<u32>>, cur: &mut [u32], i: usize, left: u32) {
    if cur.is_empty() {
        if left == 0 {
            all.push(Vec::new());
        }
        return;
    }
    if i == cur.len() - 1 {
        cur[i] = left;
        all.push(cur.to_vec());
        cur[i] = 0;
        return;
    }
    for e in (0..=left).rev() {
        cur[i] = e;
        push_with_degree(all, cur, i + 1, left - e);
    }
    cur[i] = 0;
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * f64::from(n - i) / f64::from(i + 1);
    }
    r
}

fn powu(x: f64, e: u32) -> f64 {
    let mut p = 1.0;
    for _ in 0..e {
        p *= x;
    }
    p
}

/// Rewrites a polynomial in `u` as a polynomial in `x` where
/// `u_i = offset[i] + scale[i] * x_i`.
pub fn compose_affine(terms: &[Term], offset: &[f64], scale: &[f64]) -> Vec<Term> {
    let mut acc: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    for t in terms {
        // expand prod_i (a_i + b_i x_i)^e_i one factor at a time
        let mut partial: Vec<(Vec<u32>, f64)> = vec![(vec![0; t.exponents.len()], t.coefficient)];
        for (i, &e) in t.exponents.iter().enumerate() {
            if e == 0 {
                continue;
            }
            let mut next = Vec::with_capacity(partial.len() * (e as usize + 1));
            for (exps, c) in &partial {
                for j in 0..=e {
                    let f = binomial(e, j) * powu(offset[i], e - j) * powu(scale[i], j);
                    if f == 0.0 {
                        continue;
                    }
                    let mut ex = exps.clone();
                    ex[i] = j;
                    next.push((ex, c * f));
                }
            }
            partial = next;
        }
        for (ex, c) in partial {
            *acc.entry(ex).or_insert(0.0) += c;
        }
    }
    acc.into_iter()
        .filter(|(_, c)| *c != 0.0)
        .map(|(e, c)| Term::new(c, e))
        .collect()
}
