//! Closed-form size of `∫_{B_Λ} |P|^ε / |Q|^δ dV` in terms of the roots of
//! `Q`, the derivatives of `P` at those roots, and the cluster scales.
//!
//! For a root `α` and a derivative order `ν` the size is controlled by
//! `Φ_{ν,k}(α) = L_k(α)^{(N−k)δ−(νε+2)} ∏_{i<k} L_i(α)^δ` (and `Λ^{Nδ−(νε+2)}`
//! for `k = −1`), evaluated at the unique index `k_ν` with
//! `(N−k_ν−1)δ < νε+2 < (N−k_ν)δ`.
//!
//! The derivative term is the plain derivative `P^{(ν)}(α)`, not the Taylor
//! coefficient; the two differ by `ν!`, which only moves constants.

use num_rational::Rational64;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extreal;
use crate::polynomial::{complex_pair, roots, ComplexPoly, PolyError, RootSet, C64};
use crate::scales::{ScaleMethod, ScaleTable, EXACT_SCALES_LIMIT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("root {root} lies outside the half disk |z| < {half}")]
    RootsOutsideHalfDisk { root: C64, half: f64 },
    #[error("degenerate exponents: ν ε + 2 = (N − k) δ at (ν, k) = ({nu}, {k})")]
    DegenerateExponents { nu: usize, k: usize },
    #[error("denominator has a root of multiplicity {0}; simple roots are required")]
    MultipleRoots(usize),
    #[error("numerator is identically zero")]
    ZeroNumerator,
    #[error("outside the admissible range: {0}")]
    RangeViolation(String),
    #[error("scales must satisfy c·Λ ≥ L_0 ≥ … ≥ L_(N−1) = 0")]
    ScaleOrderViolation,
    #[error("invalid exponent: {0}")]
    InvalidExponent(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Exact nonnegative rational exponents `(ε, δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ExponentPair {
    eps: Rational64,
    delta: Rational64,
}

impl ExponentPair {
    pub fn new(eps: Rational64, delta: Rational64) -> Result<Self, EstimateError> {
        if eps.is_negative() || delta.is_negative() {
            return Err(EstimateError::InvalidExponent(format!(
                "exponents must be nonnegative, got ({eps}, {delta})"
            )));
        }
        Ok(Self { eps, delta })
    }

    /// Parses two `p/q` (or integer) strings.
    pub fn parse(eps: &str, delta: &str) -> Result<Self, EstimateError> {
        Self::new(parse_rational(eps)?, parse_rational(delta)?)
    }

    pub fn eps(&self) -> Rational64 {
        self.eps
    }

    pub fn delta(&self) -> Rational64 {
        self.delta
    }

    pub fn eps_f64(&self) -> f64 {
        self.eps.to_f64().unwrap_or(f64::NAN)
    }

    pub fn delta_f64(&self) -> f64 {
        self.delta.to_f64().unwrap_or(f64::NAN)
    }

    /// `νε + 2 − (N−k)δ`.
    pub fn gap(&self, nu: usize, k: usize, n: usize) -> Rational64 {
        self.eps * r64(nu as i64) + r64(2) - self.delta * r64(n as i64 - k as i64)
    }
}

impl Serialize for ExponentPair {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            eps: String,
            delta: String,
        }
        Repr {
            eps: self.eps.to_string(),
            delta: self.delta.to_string(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ExponentPair {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            eps: String,
            delta: String,
        }
        let r = Repr::deserialize(d)?;
        Self::parse(&r.eps, &r.delta).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn r64(n: i64) -> Rational64 {
    Rational64::from_integer(n)
}

/// Parses `"p/q"` or `"p"` into an exact rational. Decimal notation is rejected.
pub fn parse_rational(s: &str) -> Result<Rational64, EstimateError> {
    let bad = || EstimateError::InvalidExponent(format!("expected p/q, got {s:?}"));
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (s, "1"),
    };
    let num: i64 = num.parse().map_err(|_| bad())?;
    let den: i64 = den.parse().map_err(|_| bad())?;
    if den == 0 {
        return Err(bad());
    }
    Ok(Rational64::new(num, den))
}

/// First `(ν, k)` with `νε + 2 = (N−k)δ`, if any.
pub fn degeneracy_witness(pair: &ExponentPair, m: usize, n: usize) -> Option<(usize, usize)> {
    (0..=m)
        .flat_map(|nu| (0..=n).map(move |k| (nu, k)))
        .find(|&(nu, k)| pair.gap(nu, k, n).is_zero())
}

pub fn nondegenerate(pair: &ExponentPair, m: usize, n: usize) -> bool {
    degeneracy_witness(pair, m, n).is_none()
}

/// `min |νε + 2 − (N−k)δ|` over `0 ≤ ν ≤ M`, `0 ≤ k ≤ N`.
pub fn degeneracy_margin(pair: &ExponentPair, m: usize, n: usize) -> Rational64 {
    (0..=m)
        .flat_map(|nu| (0..=n).map(move |k| (nu, k)))
        .map(|(nu, k)| pair.gap(nu, k, n).abs())
        .min()
        .unwrap_or_else(|| r64(2))
}

/// The index `k_ν ∈ {−1, …, N−1}`.
pub fn k_index(nu: usize, pair: &ExponentPair, n: usize) -> Result<i64, EstimateError> {
    if pair.gap(nu, 0, n).is_positive() {
        return Ok(-1);
    }
    for k in 0..n {
        let upper = pair.gap(nu, k, n);
        let lower = pair.gap(nu, k + 1, n);
        if upper.is_zero() {
            return Err(EstimateError::DegenerateExponents { nu, k });
        }
        if lower.is_zero() {
            return Err(EstimateError::DegenerateExponents { nu, k: k + 1 });
        }
        if upper.is_negative() && lower.is_positive() {
            return Ok(k as i64);
        }
    }
    // νε + 2 ≥ 2 > 0 = gap at k = N, so the loop always returns
    unreachable!("νε + 2 is positive")
}

/// `x^e` with `0^e = 0` for `e > 0`, `+∞` for `e < 0`, `1` for `e = 0`.
fn pow0(x: f64, e: f64) -> f64 {
    if x == 0.0 {
        if e > 0.0 {
            0.0
        } else if e < 0.0 {
            f64::INFINITY
        } else {
            1.0
        }
    } else {
        x.powf(e)
    }
}

/// `Φ_{ν,k}(α)` for one row of local scales (`row.len() = N`).
pub fn phi(nu: usize, k: i64, row: &[f64], lambda: f64, pair: &ExponentPair) -> f64 {
    let n = row.len();
    let x = pair.eps_f64() * nu as f64 + 2.0;
    let delta = pair.delta_f64();
    if k < 0 {
        return pow0(lambda, n as f64 * delta - x);
    }
    let k = k as usize;
    let head = pow0(row[k], (n - k) as f64 * delta - x);
    if head.is_infinite() {
        return head;
    }
    row[..k].iter().fold(head, |acc, &l| acc * pow0(l, delta))
}

/// Options shared by the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    /// Root clustering tolerance; `None` uses the polynomial default.
    pub tol: Option<f64>,
    /// Relative threshold deciding `P^{(ν)}(α) ≠ 0`.
    pub vanish_tol: f64,
    /// Forces a scale method; `None` picks exact tables when `N ≤ 12`.
    pub scale_method: Option<ScaleMethod>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            tol: None,
            vanish_tol: 1e-6,
            scale_method: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    #[serde(with = "complex_pair")]
    pub root: C64,
    pub nu: usize,
    pub k: i64,
    #[serde(with = "extreal")]
    pub phi: f64,
    #[serde(with = "extreal")]
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeEstimate {
    #[serde(with = "extreal")]
    pub value: f64,
    pub lambda: f64,
    pub breakdown: Vec<Contribution>,
    pub scales_method: ScaleMethod,
}

impl SizeEstimate {
    pub fn is_infinite(&self) -> bool {
        self.value.is_infinite()
    }

    fn from_breakdown(lambda: f64, breakdown: Vec<Contribution>, method: ScaleMethod) -> Self {
        let value = breakdown.iter().map(|c| c.contribution).sum();
        Self {
            value,
            lambda,
            breakdown,
            scales_method: method,
        }
    }
}

/// A monic denominator described by its roots, plus the factor `|lead|^{−δ}`.
#[derive(Debug, Clone)]
pub struct Denominator {
    pub roots: RootSet,
    pub lead: C64,
}

impl Denominator {
    pub fn from_poly(q: &ComplexPoly, tol: Option<f64>) -> Result<Self, EstimateError> {
        let lead = q.leading().ok_or(PolyError::ZeroPolynomial)?;
        let tol = tol.unwrap_or_else(|| q.monic().default_tol());
        Ok(Self {
            roots: roots(q, tol)?,
            lead,
        })
    }
}

/// Derivative values `P^{(ν)}(α)` for `ν = 0..=M`, with entries judged zero
/// by the relative threshold replaced by exact zeros.
fn derivative_values(p: &ComplexPoly, alpha: C64, vanish_tol: f64) -> Vec<f64> {
    let taylor = p.taylor_at(alpha);
    let scale = taylor.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut fact = 1.0;
    taylor
        .iter()
        .enumerate()
        .map(|(nu, c)| {
            if nu > 0 {
                fact *= nu as f64;
            }
            if c.norm() > vanish_tol * scale {
                c.norm() * fact
            } else {
                0.0
            }
        })
        .collect()
}

fn check_half_disk(roots: &RootSet, lambda: f64) -> Result<(), EstimateError> {
    match roots.roots().iter().find(|r| r.z.norm() >= lambda / 2.0) {
        Some(r) => Err(EstimateError::RootsOutsideHalfDisk {
            root: r.z,
            half: lambda / 2.0,
        }),
        None => Ok(()),
    }
}

fn table_for(roots: &RootSet, opts: &EstimateOptions) -> ScaleTable {
    match opts.scale_method {
        Some(ScaleMethod::Exact) if roots.total() <= EXACT_SCALES_LIMIT => {
            ScaleTable::with_method(roots, ScaleMethod::Exact).expect("within limit")
        }
        Some(ScaleMethod::Greedy) => {
            ScaleTable::with_method(roots, ScaleMethod::Greedy).expect("greedy never fails")
        }
        _ => ScaleTable::build(roots),
    }
}

fn check_pair(pair: &ExponentPair, m: usize, n: usize) -> Result<(), EstimateError> {
    match degeneracy_witness(pair, m, n) {
        Some((nu, k)) => Err(EstimateError::DegenerateExponents { nu, k }),
        None => Ok(()),
    }
}

/// Constant denominator: `∫_{B_Λ}|P|^ε` is sized by the Taylor data at the centre.
fn constant_denominator(
    p: &ComplexPoly,
    q0: C64,
    pair: &ExponentPair,
    lambda: f64,
    opts: &EstimateOptions,
) -> SizeEstimate {
    let eps = pair.eps_f64();
    let factor = q0.norm().powf(-pair.delta_f64());
    let zero = C64::new(0.0, 0.0);
    let breakdown = derivative_values(p, zero, opts.vanish_tol)
        .into_iter()
        .enumerate()
        .filter(|&(_, d)| d > 0.0)
        .map(|(nu, d)| {
            let phi = pow0(lambda, -(eps * nu as f64 + 2.0));
            Contribution {
                root: zero,
                nu,
                k: -1,
                phi,
                contribution: factor * d.powf(eps) / phi,
            }
        })
        .collect();
    SizeEstimate::from_breakdown(lambda, breakdown, ScaleMethod::Exact)
}

/// The size of `∫_{B_Λ} |P|^ε/|Q|^δ dV`.
pub fn estimate(
    p: &ComplexPoly,
    q: &ComplexPoly,
    pair: &ExponentPair,
    lambda: f64,
    opts: &EstimateOptions,
) -> Result<SizeEstimate, EstimateError> {
    let n = q.degree().ok_or(PolyError::ZeroPolynomial)?;
    if n == 0 {
        return Ok(constant_denominator(p, q.coeff(0), pair, lambda, opts));
    }
    let den = Denominator::from_poly(q, opts.tol)?;
    estimate_with_roots(p, &den, pair, lambda, opts)
}

/// [`estimate`] for a denominator whose roots are already known.
pub fn estimate_with_roots(
    p: &ComplexPoly,
    den: &Denominator,
    pair: &ExponentPair,
    lambda: f64,
    opts: &EstimateOptions,
) -> Result<SizeEstimate, EstimateError> {
    let n = den.roots.total();
    let m = p.degree().unwrap_or(0);
    check_half_disk(&den.roots, lambda)?;
    check_pair(pair, m, n)?;
    let table = table_for(&den.roots, opts);
    if p.is_zero() {
        return Ok(SizeEstimate::from_breakdown(lambda, Vec::new(), table.method));
    }
    let eps = pair.eps_f64();
    let factor = den.lead.norm().powf(-pair.delta_f64());
    let mut breakdown = Vec::new();
    for (alpha, row) in table.roots.iter().zip(&table.scales) {
        for (nu, d) in derivative_values(p, *alpha, opts.vanish_tol).into_iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let k = k_index(nu, pair, n)?;
            let phi = phi(nu, k, row, lambda, pair);
            let contribution = if phi == 0.0 {
                f64::INFINITY
            } else {
                factor * d.powf(eps) / phi
            };
            breakdown.push(Contribution {
                root: *alpha,
                nu,
                k,
                phi,
                contribution,
            });
        }
    }
    Ok(SizeEstimate::from_breakdown(lambda, breakdown, table.method))
}

/// Finiteness from multiplicities and vanishing orders alone:
/// finite iff `m(α)δ − ν(α)ε < 2` at every root.
pub fn is_finite(
    p: &ComplexPoly,
    q: &ComplexPoly,
    pair: &ExponentPair,
    opts: &EstimateOptions,
) -> Result<bool, EstimateError> {
    if p.is_zero() {
        return Err(EstimateError::ZeroNumerator);
    }
    if q.degree().ok_or(PolyError::ZeroPolynomial)? == 0 {
        return Ok(true);
    }
    let den = Denominator::from_poly(q, opts.tol)?;
    is_finite_with_roots(p, &den.roots, pair, opts)
}

pub fn is_finite_with_roots(
    p: &ComplexPoly,
    roots: &RootSet,
    pair: &ExponentPair,
    opts: &EstimateOptions,
) -> Result<bool, EstimateError> {
    if p.is_zero() {
        return Err(EstimateError::ZeroNumerator);
    }
    let n = roots.total();
    let mut finite = true;
    for r in roots.roots() {
        let nu = crate::polynomial::vanishing_order(p, r.z, opts.vanish_tol)?;
        let slack = local_slack(pair, r.multiplicity, nu);
        if slack.is_zero() {
            return Err(EstimateError::DegenerateExponents {
                nu,
                k: n - r.multiplicity,
            });
        }
        finite &= slack.is_positive();
    }
    Ok(finite)
}

/// `2 − mδ + νε`: positive exactly when the root is integrable.
pub fn local_slack(pair: &ExponentPair, multiplicity: usize, nu: usize) -> Rational64 {
    r64(2) - pair.delta() * r64(multiplicity as i64) + pair.eps() * r64(nu as i64)
}

/// The `P = 1` case: `Λ^{2−Nδ}` when `Nδ < 2`, else the per-root sum at `k_0`.
pub fn estimate_pure(
    q: &ComplexPoly,
    delta: Rational64,
    lambda: f64,
    opts: &EstimateOptions,
) -> Result<SizeEstimate, EstimateError> {
    let n = q.degree().ok_or(PolyError::ZeroPolynomial)?;
    let pair = ExponentPair::new(r64(0), delta)?;
    if n == 0 {
        return Ok(constant_denominator(&ComplexPoly::one(), q.coeff(0), &pair, lambda, opts));
    }
    let den = Denominator::from_poly(q, opts.tol)?;
    estimate_pure_with_roots(&den, delta, lambda, opts)
}

pub fn estimate_pure_with_roots(
    den: &Denominator,
    delta: Rational64,
    lambda: f64,
    opts: &EstimateOptions,
) -> Result<SizeEstimate, EstimateError> {
    let pair = ExponentPair::new(r64(0), delta)?;
    let n = den.roots.total();
    check_half_disk(&den.roots, lambda)?;
    check_pair(&pair, 0, n)?;
    if (delta * r64(n as i64)) < r64(2) {
        let factor = den.lead.norm().powf(-pair.delta_f64());
        let phi = phi(0, -1, &vec![0.0; n], lambda, &pair);
        let root = den.roots.roots().first().map(|r| r.z).unwrap_or_default();
        let method = if n <= EXACT_SCALES_LIMIT {
            ScaleMethod::Exact
        } else {
            ScaleMethod::Greedy
        };
        return Ok(SizeEstimate::from_breakdown(
            lambda,
            vec![Contribution {
                root,
                nu: 0,
                k: -1,
                phi,
                contribution: factor / phi,
            }],
            method,
        ));
    }
    estimate_with_roots(&ComplexPoly::one(), den, &pair, lambda, opts)
}

fn require_simple(roots: &RootSet) -> Result<(), EstimateError> {
    match roots.max_multiplicity() {
        m if m > 1 => Err(EstimateError::MultipleRoots(m)),
        _ => Ok(()),
    }
}

/// Sum over every `ν ∈ 0..=M` and every `k ∈ −1..=N−2`; requires simple roots and `δ < 2`.
pub fn estimate_symmetric(
    p: &ComplexPoly,
    q: &ComplexPoly,
    pair: &ExponentPair,
    lambda: f64,
    opts: &EstimateOptions,
) -> Result<SizeEstimate, EstimateError> {
    let den = Denominator::from_poly(q, opts.tol)?;
    estimate_symmetric_with_roots(p, &den, pair, lambda, opts)
}

pub fn estimate_symmetric_with_roots(
    p: &ComplexPoly,
    den: &Denominator,
    pair: &ExponentPair,
    lambda: f64,
    opts: &EstimateOptions,
) -> Result<SizeEstimate, EstimateError> {
    require_simple(&den.roots)?;
    let n = den.roots.total();
    let m = p.degree().unwrap_or(0);
    check_half_disk(&den.roots, lambda)?;
    check_pair(pair, m, n)?;
    if pair.delta() >= r64(2) {
        return Err(EstimateError::RangeViolation(
            "the symmetric form needs δ < 2".into(),
        ));
    }
    let table = table_for(&den.roots, opts);
    let eps = pair.eps_f64();
    let factor = den.lead.norm().powf(-pair.delta_f64());
    let mut breakdown = Vec::new();
    for (alpha, row) in table.roots.iter().zip(&table.scales) {
        let derivs = derivative_values(p, *alpha, opts.vanish_tol);
        for nu in 0..=m {
            let d = derivs.get(nu).copied().unwrap_or(0.0);
            for k in -1..=(n as i64 - 2) {
                let phi = phi(nu, k, row, lambda, pair);
                let contribution = if d == 0.0 || phi.is_infinite() {
                    0.0
                } else if phi == 0.0 {
                    f64::INFINITY
                } else {
                    factor * d.powf(eps) / phi
                };
                breakdown.push(Contribution {
                    root: *alpha,
                    nu,
                    k,
                    phi,
                    contribution,
                });
            }
        }
    }
    Ok(SizeEstimate::from_breakdown(lambda, breakdown, table.method))
}

/// Sup-over-circles form: `Σ_α Σ_k sup_{|z−α|=L_k(α)} |P|^ε / (L_k^{(N−k)δ−2} ∏_{i<k} L_i^δ)`,
/// with `L_{−1} = Λ`.
pub fn estimate_supform(
    p: &ComplexPoly,
    q: &ComplexPoly,
    pair: &ExponentPair,
    lambda: f64,
    circle_samples: usize,
    opts: &EstimateOptions,
) -> Result<SizeEstimate, EstimateError> {
    let den = Denominator::from_poly(q, opts.tol)?;
    require_simple(&den.roots)?;
    let n = den.roots.total();
    let m = p.degree().unwrap_or(0);
    check_half_disk(&den.roots, lambda)?;
    check_pair(pair, m, n)?;
    let table = table_for(&den.roots, opts);
    let eps = pair.eps_f64();
    let delta = pair.delta_f64();
    for (alpha, _) in table.roots.iter().zip(&table.scales) {
        for (nu, d) in derivative_values(p, *alpha, opts.vanish_tol).into_iter().enumerate() {
            if d > 0.0 && pair.gap(nu, 0, n) >= r64(0) {
                return Err(EstimateError::RangeViolation(format!(
                    "needs νε + 2 < Nδ, violated at ν = {nu}"
                )));
            }
        }
    }
    let samples = circle_samples.max(1);
    let factor = den.lead.norm().powf(-delta);
    let mut breakdown = Vec::new();
    for (alpha, row) in table.roots.iter().zip(&table.scales) {
        for k in -1..(n as i64) {
            let radius = if k < 0 { lambda } else { row[k as usize] };
            let sup = (0..samples)
                .map(|j| {
                    let z = alpha + C64::from_polar(radius, std::f64::consts::TAU * j as f64 / samples as f64);
                    p.eval(z).norm()
                })
                .fold(0.0, f64::max)
                .powf(eps);
            let phi = phi(0, k, row, lambda, &ExponentPair::new(r64(0), pair.delta())?);
            let contribution = if sup == 0.0 || phi.is_infinite() {
                0.0
            } else if phi == 0.0 {
                f64::INFINITY
            } else {
                factor * sup / phi
            };
            breakdown.push(Contribution {
                root: *alpha,
                nu: 0,
                k,
                phi,
                contribution,
            });
        }
    }
    Ok(SizeEstimate::from_breakdown(lambda, breakdown, table.method))
}

/// Closed-form size of `∫_0^Λ r^p / ∏_i (r + L_i)^δ dr/r`.
pub fn radial_size(p: f64, delta: f64, lambda: f64, l: &[f64], c: f64) -> Result<f64, EstimateError> {
    let n = l.len();
    if n == 0 || !(c < 1.0) || l[0] > c * lambda || l[n - 1] != 0.0 || l.windows(2).any(|w| w[1] > w[0]) {
        return Err(EstimateError::ScaleOrderViolation);
    }
    for k in 0..=n {
        let gap = p - (n - k) as f64 * delta;
        if gap.abs() <= 1e-12 * (1.0 + p.abs()) {
            return Err(EstimateError::DegenerateExponents { nu: 0, k });
        }
    }
    if p > n as f64 * delta {
        return Ok(lambda.powf(p - n as f64 * delta));
    }
    let k = (0..n)
        .find(|&k| ((n - k - 1) as f64) * delta < p && p < ((n - k) as f64) * delta)
        .expect("p lies in one of the open intervals");
    let head = pow0(l[k], (n - k) as f64 * delta - p);
    let denom = l[..k].iter().fold(head, |acc, &li| acc * pow0(li, delta));
    Ok(if denom == 0.0 { f64::INFINITY } else { 1.0 / denom })
}

/// `Σ_ν |a_ν|^ε`, the size of `∫_I |P(e^{iθ})|^ε dθ` over an interval of length
/// at least `min_length`.
pub fn circle_size(
    p: &ComplexPoly,
    eps: f64,
    interval_length: f64,
    min_length: f64,
) -> Result<f64, EstimateError> {
    if interval_length < min_length {
        return Err(EstimateError::RangeViolation(format!(
            "interval length {interval_length} below {min_length}"
        )));
    }
    Ok(p.coeffs()
        .iter()
        .map(|a| if a.norm() == 0.0 { 0.0 } else { a.norm().powf(eps) })
        .sum())
}

/// The regularized-denominator formula, transcribed with its printed
/// exponents `κ_k = (νε+2)/((N−k−1)(N−k))` for `k ≤ N−2` and `κ_{N−1} = δ − ν`.
/// Experimental: see the validation gate in `arp`.
pub fn regularized_estimate(
    p: &ComplexPoly,
    q: &ComplexPoly,
    pair: &ExponentPair,
    mu: f64,
    lambda: f64,
    opts: &EstimateOptions,
) -> Result<f64, EstimateError> {
    let n = q.degree().ok_or(PolyError::ZeroPolynomial)?;
    if n == 0 {
        return Err(EstimateError::RangeViolation("denominator must have a root".into()));
    }
    if (q.leading().unwrap_or_default() - C64::new(1.0, 0.0)).norm() > 1e-12 {
        return Err(EstimateError::RangeViolation("denominator must be monic".into()));
    }
    if !(mu > 0.0) {
        return Err(EstimateError::RangeViolation("μ must be positive".into()));
    }
    let m = p.degree().unwrap_or(0);
    if pair.eps() * r64(m as i64) + r64(2) >= pair.delta() * r64(n as i64) {
        return Err(EstimateError::RangeViolation("needs Mε + 2 < Nδ".into()));
    }
    let den = Denominator::from_poly(q, opts.tol)?;
    check_half_disk(&den.roots, lambda)?;
    let table = table_for(&den.roots, opts);
    let eps = pair.eps_f64();
    let delta = pair.delta_f64();
    let mu_n = mu.powi(n as i32);
    let mut total = 0.0;
    for (alpha, row) in table.roots.iter().zip(&table.scales) {
        for (nu, d) in derivative_values(p, *alpha, opts.vanish_tol).into_iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let x = nu as f64 * eps + 2.0;
            let prod: f64 = (0..n)
                .map(|k| {
                    let kappa = if k + 1 < n {
                        x / (((n - k - 1) * (n - k)) as f64)
                    } else {
                        delta - nu as f64
                    };
                    (mu_n + row[k].powi((n - k) as i32)).powf(-kappa)
                })
                .product();
            total += d.powf(eps) * prod;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(e: &str, d: &str) -> ExponentPair {
        ExponentPair::parse(e, d).unwrap()
    }

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn nondegeneracy_examples() {
        assert!(!nondegenerate(&pair("0", "1"), 0, 2));
        for n in 0..=10 {
            assert!(nondegenerate(&pair("0", "9/10"), 0, n));
        }
    }

    #[test]
    fn k_index_examples() {
        assert_eq!(k_index(0, &pair("0", "9/10"), 3).unwrap(), 0);
        assert_eq!(k_index(0, &pair("0", "3/2"), 3).unwrap(), 1);
        assert_eq!(k_index(0, &pair("0", "1/2"), 3).unwrap(), -1);
        assert!(matches!(
            k_index(0, &pair("0", "1"), 2),
            Err(EstimateError::DegenerateExponents { .. })
        ));
    }

    #[test]
    fn phi_examples() {
        let t = 1e-3;
        let v = phi(0, 0, &[t, 0.0], 1.0, &pair("0", "3/2"));
        assert!((v - t).abs() < 1e-15);
        assert_eq!(phi(0, -1, &[0.3, 0.0], 1.0, &pair("1", "1/3")), 1.0);
        assert_eq!(phi(0, 0, &[0.0, 0.0], 1.0, &pair("0", "3/2")), 0.0);
    }

    #[test]
    fn estimate_simple_root() {
        let e = estimate(
            &ComplexPoly::one(),
            &ComplexPoly::monomial(1),
            &pair("0", "3/2"),
            1.0,
            &EstimateOptions::default(),
        )
        .unwrap();
        assert!((e.value - 1.0).abs() < 1e-15);
        assert_eq!(e.breakdown[0].k, -1);
    }

    #[test]
    fn estimate_two_close_roots() {
        let t = 1e-4;
        let q = ComplexPoly::from_roots(&[c(0.0), c(t)]);
        let e = estimate(&ComplexPoly::one(), &q, &pair("0", "3/2"), 1.0, &EstimateOptions::default()).unwrap();
        assert!((e.value * t / 2.0 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn estimate_double_root_diverges() {
        let q = ComplexPoly::from_roots(&[c(0.2), c(0.2)]);
        let e = estimate(&ComplexPoly::one(), &q, &pair("0", "3/2"), 1.0, &EstimateOptions::default()).unwrap();
        assert!(e.is_infinite());
        let json = serde_json::to_value(&e).unwrap();
        assert_eq!(json["value"], "inf");
    }

    #[test]
    fn estimate_checks_half_disk_and_degeneracy() {
        let q = ComplexPoly::from_roots(&[c(0.6)]);
        assert!(matches!(
            estimate(&ComplexPoly::one(), &q, &pair("0", "1/2"), 1.0, &EstimateOptions::default()),
            Err(EstimateError::RootsOutsideHalfDisk { .. })
        ));
        let q2 = ComplexPoly::from_roots(&[c(0.1), c(-0.1)]);
        assert!(matches!(
            estimate(&ComplexPoly::one(), &q2, &pair("0", "1"), 1.0, &EstimateOptions::default()),
            Err(EstimateError::DegenerateExponents { nu: 0, k: 0 })
        ));
    }

    #[test]
    fn zero_numerator_gives_zero() {
        let e = estimate(
            &ComplexPoly::zero(),
            &ComplexPoly::monomial(1),
            &pair("1", "1/2"),
            1.0,
            &EstimateOptions::default(),
        )
        .unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(
            is_finite(&ComplexPoly::zero(), &ComplexPoly::monomial(1), &pair("1", "1/2"), &EstimateOptions::default()),
            Err(EstimateError::ZeroNumerator)
        );
    }

    #[test]
    fn finiteness_examples() {
        let q = ComplexPoly::from_roots(&[c(0.0), c(1.0), c(1.0)]);
        let o = EstimateOptions::default();
        assert!(is_finite(&ComplexPoly::one(), &q, &pair("0", "9/10"), &o).unwrap());
        assert!(!is_finite(&ComplexPoly::one(), &q, &pair("0", "3/2"), &o).unwrap());
        let q2 = ComplexPoly::from_roots(&[c(1.0), c(1.0)]);
        let p = ComplexPoly::from_roots(&[c(1.0)]);
        assert!(matches!(
            is_finite(&p, &q2, &pair("1", "3/2"), &o),
            Err(EstimateError::DegenerateExponents { .. })
        ));
    }

    #[test]
    fn pure_examples() {
        let o = EstimateOptions::default();
        let e = estimate_pure(&ComplexPoly::monomial(3), Rational64::new(1, 2), 1.0, &o).unwrap();
        assert_eq!(e.value, 1.0);
        let e2 = estimate_pure(&ComplexPoly::monomial(2), Rational64::new(3, 2), 1.0, &o).unwrap();
        assert!(e2.is_infinite());
        let t = 1e-2;
        let q = ComplexPoly::from_roots(&[c(0.0), c(t), c(1.0)]);
        let a = estimate_pure(&q, Rational64::new(3, 2), 4.0, &o).unwrap();
        let b = estimate(&ComplexPoly::one(), &q, &pair("0", "3/2"), 4.0, &o).unwrap();
        assert!((a.value / b.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_single_root() {
        let o = EstimateOptions::default();
        let q = ComplexPoly::from_roots(&[c(0.1)]);
        let p = pair("0", "1/2");
        let s = estimate_symmetric(&ComplexPoly::one(), &q, &p, 1.0, &o).unwrap();
        let e = estimate(&ComplexPoly::one(), &q, &p, 1.0, &o).unwrap();
        assert!((s.value - 1.0).abs() < 1e-15 && (e.value - 1.0).abs() < 1e-15);
        let q2 = ComplexPoly::from_roots(&[c(0.1), c(0.1)]);
        assert_eq!(
            estimate_symmetric(&ComplexPoly::one(), &q2, &p, 1.0, &o).map(|e| e.value),
            Err(EstimateError::MultipleRoots(2))
        );
    }

    #[test]
    fn supform_range_check() {
        let o = EstimateOptions::default();
        let q = ComplexPoly::from_roots(&[c(0.1)]);
        assert!(matches!(
            estimate_supform(&ComplexPoly::monomial(2), &q, &pair("1", "1/2"), 1.0, 16, &o),
            Err(EstimateError::RangeViolation(_))
        ));
    }

    #[test]
    fn radial_size_examples() {
        assert_eq!(radial_size(2.0, 1.0, 1.0, &[0.0], 0.5).unwrap(), 1.0);
        let l = 1e-3;
        let v = radial_size(2.0, 1.5, 1.0, &[l, 0.0], 0.5).unwrap();
        assert!((v * l - 1.0).abs() < 1e-12);
        assert_eq!(
            radial_size(2.0, 1.5, 1.0, &[0.9, 0.0], 0.5),
            Err(EstimateError::ScaleOrderViolation)
        );
    }

    #[test]
    fn circle_size_examples() {
        assert_eq!(circle_size(&ComplexPoly::monomial(1), 2.0, 6.0, 1.0).unwrap(), 1.0);
        let a0 = ComplexPoly::constant(C64::new(0.0, 3.0));
        assert!((circle_size(&a0, 0.5, 6.0, 1.0).unwrap() - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn regularized_single_root_is_mu_power() {
        let o = EstimateOptions::default();
        let mu = 1e-3;
        let v = regularized_estimate(&ComplexPoly::one(), &ComplexPoly::monomial(1), &pair("0", "5/2"), mu, 1.0, &o)
            .unwrap();
        assert!((v / mu.powf(-2.5) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(parse_rational("3/2").unwrap(), Rational64::new(3, 2));
        assert_eq!(parse_rational(" 2 ").unwrap(), r64(2));
        assert!(parse_rational("1.5").is_err());
        assert!(parse_rational("1/0").is_err());
    }
}
