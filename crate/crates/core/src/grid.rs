//! Discretization of parameters and energy flows.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Dimension;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("`{dimension}`: a parameter grid needs at least 2 steps, got {steps}")]
    BadStepCount { dimension: String, steps: u32 },
    #[error("`{dimension}`: flow step must be positive and finite, got {step}")]
    BadStepSize { dimension: String, step: f64 },
    #[error("`{0}` has an unbounded or inverted interval")]
    UnboundedDimension(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Spacing {
    /// `q` equally spaced levels including both endpoints.
    Steps(u32),
    /// Consecutive multiples of a step size.
    StepSize(f64),
}

/// Ordered levels covering one dimension.
///
/// For flow grids `levels[i] == (first_index + i) * step`, so a level is
/// identified by an integer multiple of the step. Parameter grids use
/// `first_index == 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dimension: String,
    pub spacing: Spacing,
    pub first_index: i64,
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapped {
    pub position: usize,
    pub level: f64,
    pub clamped: bool,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Absolute level index of `position` (the step multiple for flow grids).
    pub fn index_of(&self, position: usize) -> i64 {
        self.first_index + position as i64
    }

    pub fn position_of(&self, index: i64) -> Option<usize> {
        let p = index - self.first_index;
        (p >= 0 && (p as usize) < self.levels.len()).then_some(p as usize)
    }

    pub fn last_index(&self) -> i64 {
        self.first_index + self.levels.len() as i64 - 1
    }

    pub fn step(&self) -> Option<f64> {
        match self.spacing {
            Spacing::StepSize(s) => Some(s),
            Spacing::Steps(_) => None,
        }
    }

    /// Flow grid over the absolute step multiples `first..=last`.
    pub fn flow_range(dimension: &str, step: f64, first: i64, last: i64) -> Self {
        Self {
            dimension: dimension.into(),
            spacing: Spacing::StepSize(step),
            first_index: first,
            levels: (first..=last).map(|k| k as f64 * step).collect(),
        }
    }

    pub fn snap(&self, value: f64) -> Snapped {
        snap_to_level(value, self)
    }

    /// Index of the nearest level, or `None` if `value` lies beyond the grid.
    pub fn snap_index(&self, value: f64) -> Option<i64> {
        let s = self.snap(value);
        (!s.clamped).then(|| self.index_of(s.position))
    }
}

pub fn make_param_grid(dim: &Dimension, q: u32) -> Result<Grid, GridError> {
    if q < 2 {
        return Err(GridError::BadStepCount {
            dimension: dim.name.clone(),
            steps: q,
        });
    }
    let iv = dim.interval();
    if !iv.is_bounded() || iv.lo > iv.hi {
        return Err(GridError::UnboundedDimension(dim.name.clone()));
    }
    let last = q - 1;
    let levels = (0..q)
        .map(|i| {
            if i == last {
                iv.hi
            } else {
                iv.lo + iv.width() * f64::from(i) / f64::from(last)
            }
        })
        .collect();
    Ok(Grid {
        dimension: dim.name.clone(),
        spacing: Spacing::Steps(q),
        first_index: 0,
        levels,
    })
}

/// Multiples of `step` rounded outward so that the whole interval is covered.
pub fn make_flow_grid(dim: &Dimension, step: f64) -> Result<Grid, GridError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(GridError::BadStepSize {
            dimension: dim.name.clone(),
            step,
        });
    }
    let iv = dim.interval();
    if !iv.is_bounded() || iv.lo > iv.hi {
        return Err(GridError::UnboundedDimension(dim.name.clone()));
    }
    // tolerate representation error in lo/step before rounding outward
    const EPS: f64 = 1e-9;
    let first = libm::floor(iv.lo / step + EPS) as i64;
    let last = libm::ceil(iv.hi / step - EPS) as i64;
    Ok(Grid::flow_range(&dim.name, step, first, last.max(first)))
}

/// Nearest grid level. Exact midpoints go to the lower level; values beyond
/// either end clamp to that end and set `clamped`.
pub fn snap_to_level(value: f64, grid: &Grid) -> Snapped {
    let levels = &grid.levels;
    assert!(!levels.is_empty(), "snap on an empty grid");
    let n = levels.len();
    if value <= levels[0] {
        return Snapped {
            position: 0,
            level: levels[0],
            clamped: value < levels[0],
        };
    }
    if value >= levels[n - 1] {
        return Snapped {
            position: n - 1,
            level: levels[n - 1],
            clamped: value > levels[n - 1],
        };
    }
    // levels[hi - 1] < value <= levels[hi]
    let hi = levels.partition_point(|&l| l < value);
    let lo = hi - 1;
    let position = if value - levels[lo] <= levels[hi] - value {
        lo
    } else {
        hi
    };
    Snapped {
        position,
        level: levels[position],
        clamped: false,
    }
}
