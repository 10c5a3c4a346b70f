//! Independent numerical ground truth for the size estimates.

pub mod compare;
pub mod disk;
pub mod integrand;
pub mod lowdim;
pub mod mc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polynomial::{complex_pair, C64};

pub use compare::{compare, ComparePair, EquivalenceReport, EquivalenceSample};
pub use disk::{integrate_disk, DiskOptions};
pub use integrand::{ArpIntegrand, Center, DenomNorm, Factored, FnIntegrand, Integrand};
pub use lowdim::{integrate_circle, integrate_radial, integrate_torus, integrate_torus_mc};
pub use mc::{integrate_disk_mc, integrate_polydisk_mc, PolydiskOptions, DEFAULT_MC_SAMPLES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("parameter out of range: {0}")]
    RangeViolation(String),
    #[error("sample {index}: one side finite, the other diverging")]
    MixedFinitenessDisagreement { index: usize },
    #[error("empty family")]
    EmptyFamily,
}

/// Per-cell split of a disk quadrature, one entry per centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellContribution {
    #[serde(with = "complex_pair")]
    pub center: C64,
    #[serde(with = "crate::extreal")]
    pub inner: f64,
    pub outer: f64,
    /// Power-law exponent fitted on the innermost annuli.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fitted_exponent: Option<f64>,
    pub diverging: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    #[serde(with = "crate::extreal")]
    pub value: f64,
    /// Standard error for Monte Carlo, quadrature error estimate otherwise.
    pub stderr: f64,
    pub diverging: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub growth_exponent: Option<f64>,
    pub scheme: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    pub evaluations: u64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub cells: Vec<CellContribution>,
}

impl OracleResult {
    pub(crate) fn deterministic(value: f64, error: f64, scheme: &str, evaluations: usize) -> Self {
        Self {
            value,
            stderr: error.abs(),
            diverging: false,
            growth_exponent: None,
            scheme: scheme.into(),
            seed: None,
            evaluations: evaluations as u64,
            cells: Vec::new(),
        }
    }

    /// A known value with no error, for closed forms standing in for an oracle.
    pub fn exact(value: f64, scheme: &str) -> Self {
        if value.is_infinite() {
            Self::divergent(0.0, scheme, 0)
        } else {
            Self::deterministic(value, 0.0, scheme, 0)
        }
    }

    pub(crate) fn divergent(growth: f64, scheme: &str, evaluations: usize) -> Self {
        Self {
            value: f64::INFINITY,
            stderr: 0.0,
            diverging: true,
            growth_exponent: Some(growth),
            scheme: scheme.into(),
            seed: None,
            evaluations: evaluations as u64,
            cells: Vec::new(),
        }
    }

    /// Whether `self` and `other` agree within `k` combined standard errors.
    pub fn agrees_with(&self, other: &Self, k: f64) -> bool {
        if self.diverging || other.diverging {
            return self.diverging == other.diverging;
        }
        let sigma = (self.stderr.powi(2) + other.stderr.powi(2)).sqrt();
        (self.value - other.value).abs() <= k * sigma
    }
}
