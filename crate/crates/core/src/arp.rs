//! Absolute rational powers `(Σ|P_i|²)^{ε/2} / (Σ|Q_j|²)^{δ/2}` of one variable:
//! evaluation with removable singularities, the sharp normal form, theta
//! sampling of multi-term denominators, μ-regularization, the simple-root
//! size, and a worked three-parameter family with a closed-form size.

use std::collections::HashMap;

use num_integer::Integer;
use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{
    estimate, estimate_symmetric, regularized_estimate, EstimateError, EstimateOptions, ExponentPair,
};
use crate::oracle::{integrate_disk, ArpIntegrand, DenomNorm, DiskOptions, Factored, OracleResult};
use crate::polynomial::{roots, vanishing_order, ComplexPoly, PolyError, C64};
use crate::scales::ScaleTable;

/// Relative Taylor threshold below which a coefficient counts as zero.
const VANISH_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ArpError {
    #[error("every numerator term is the zero polynomial")]
    ZeroNumerator,
    #[error("parameter out of range: {0}")]
    RangeViolation(String),
    #[error("term {term}: coefficient norm {norm} not below {bound}")]
    NormConditionViolated { term: usize, norm: f64, bound: f64 },
    #[error("grid infimum did not stabilize up to d = {d}")]
    NoStabilization { d: usize },
    #[error("oracle budget of {budget} evaluations exhausted")]
    OracleBudgetExhausted { budget: u64 },
    #[error("denominator has a root of multiplicity {0}")]
    MultipleRoots(usize),
    #[error("|||Q − Z^N||| = {norm} is not below the gate {gate}")]
    NormGateViolated { norm: f64, gate: f64 },
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// `(Σ|P_i|²)^{ε/2} / (Σ|Q_j|²)^{δ/2}`; an empty denominator means 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArpExpr {
    pub numerator: Vec<ComplexPoly>,
    pub denominator: Vec<ComplexPoly>,
    pub pair: ExponentPair,
}

impl ArpExpr {
    pub fn new(numerator: Vec<ComplexPoly>, denominator: Vec<ComplexPoly>, pair: ExponentPair) -> Result<Self, ArpError> {
        if numerator.iter().all(ComplexPoly::is_zero) {
            return Err(ArpError::ZeroNumerator);
        }
        Ok(Self {
            numerator,
            denominator,
            pair,
        })
    }

    /// `|P|^ε / |Q|^δ`.
    pub fn rational(p: ComplexPoly, q: ComplexPoly, pair: ExponentPair) -> Result<Self, ArpError> {
        Self::new(vec![p], vec![q], pair)
    }

    /// The integrand handed to the oracles, with the denominator combined by `norm` and shifted by `mu`.
    pub fn integrand(&self, norm: DenomNorm, mu: f64) -> Result<ArpIntegrand, ArpError> {
        let num = self
            .numerator
            .iter()
            .filter(|p| !p.is_zero())
            .map(Factored::from_poly)
            .collect::<Result<Vec<_>, _>>()?;
        let den = if self.denominator.is_empty() {
            vec![Factored::from_roots(1.0, &[])]
        } else {
            self.denominator.iter().map(Factored::from_poly).collect::<Result<Vec<_>, _>>()?
        };
        Ok(ArpIntegrand {
            num,
            den,
            eps: self.pair.eps_f64(),
            delta: self.pair.delta_f64(),
            norm,
            mu,
        })
    }
}

/// Lowest vanishing order among the nonzero terms and `Σ|c|²` of their coefficients at that order.
fn leading_local(terms: &[ComplexPoly], z: C64) -> Result<(usize, f64), PolyError> {
    let mut best: Option<(usize, f64)> = None;
    for p in terms.iter().filter(|p| !p.is_zero()) {
        // a term vanishes only when its value is at rounding level
        let ord = if p.eval(z).norm() <= 4.0 * p.eval_error_bound(z) {
            vanishing_order(p, z, VANISH_TOL)?.max(1)
        } else {
            0
        };
        let c = p.taylor_at(z)[ord].norm_sqr();
        best = match best {
            Some((o, s)) if o < ord => Some((o, s)),
            Some((o, s)) if o == ord => Some((o, s + c)),
            _ => Some((ord, c)),
        };
    }
    best.ok_or(PolyError::ZeroPolynomial)
}

/// Value of `R` at `z`, extended continuously across common zeros.
///
/// Where numerator and denominator both vanish, the factor `|z − z_0|`
/// is cancelled between the leading local terms, so the value is the limit
/// `0`, `+∞` or the ratio of leading coefficients.
pub fn arp_eval(r: &ArpExpr, z: C64) -> Result<f64, ArpError> {
    let eps = r.pair.eps();
    let delta = r.pair.delta();
    let (nu, num_c) = leading_local(&r.numerator, z).map_err(|_| ArpError::ZeroNumerator)?;
    let (m, den_c) = if r.denominator.is_empty() {
        (0, 1.0)
    } else {
        match leading_local(&r.denominator, z) {
            Ok(v) => v,
            Err(_) => return Ok(f64::INFINITY),
        }
    };
    let num_exp = eps * Rational64::from_integer(nu as i64);
    let den_exp = delta * Rational64::from_integer(m as i64);
    if nu == 0 && m == 0 {
        let sum = |terms: &[ComplexPoly]| terms.iter().map(|p| p.eval(z).norm_sqr()).sum::<f64>();
        let top = if eps.is_zero() { 1.0 } else { sum(&r.numerator).powf(0.5 * r.pair.eps_f64()) };
        let bottom = if r.denominator.is_empty() {
            1.0
        } else {
            sum(&r.denominator).powf(0.5 * r.pair.delta_f64())
        };
        return Ok(top / bottom);
    }
    Ok(if num_exp > den_exp {
        0.0
    } else if num_exp < den_exp {
        f64::INFINITY
    } else {
        let top = if eps.is_zero() { 1.0 } else { num_c.powf(0.5 * r.pair.eps_f64()) };
        top / den_c.powf(0.5 * r.pair.delta_f64())
    })
}

/// `R^#`: numerator terms `P_i^A`, denominator terms `Q_j^B`, common exponent `1/D`,
/// where `ε = A/D` and `δ = B/D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpForm {
    pub expr: ArpExpr,
    pub a: i64,
    pub b: i64,
    pub d: i64,
}

pub fn normalize_sharp(r: &ArpExpr) -> Result<SharpForm, ArpError> {
    let (eps, delta) = (r.pair.eps(), r.pair.delta());
    let d = eps.denom().lcm(delta.denom());
    let a = (eps * Rational64::from_integer(d)).to_integer();
    let b = (delta * Rational64::from_integer(d)).to_integer();
    let exp = |k: i64| u32::try_from(k).map_err(|_| ArpError::RangeViolation(format!("exponent {k} too large")));
    let (ea, eb) = (exp(a)?, exp(b)?);
    let one_over_d = Rational64::new(1, d);
    let expr = ArpExpr::new(
        r.numerator.iter().map(|p| p.pow(ea)).collect(),
        r.denominator.iter().map(|q| q.pow(eb)).collect(),
        ExponentPair::new(one_over_d, one_over_d)?,
    )?;
    Ok(SharpForm { expr, a, b, d })
}

/// `(Σ|a_j|)^{−δ}`, the size of the torus average of `|Σ a_j e^{2πiθ_j}|^{−δ}`.
pub fn theta_denominator_size(a: &[C64], delta: f64) -> Result<f64, ArpError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ArpError::RangeViolation(format!("need 0 < δ < 1, got {delta}")));
    }
    let s: f64 = a.iter().map(|x| x.norm()).sum();
    Ok(if s == 0.0 { f64::INFINITY } else { s.powf(-delta) })
}

/// One point of a μ-regularization trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub mu: f64,
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizationTrace {
    pub trace: Vec<TracePoint>,
    #[serde(with = "crate::extreal")]
    pub limit: f64,
    pub diverging: bool,
    /// Whether every step `μ_k → μ_{k+1}` was nondecreasing up to the quadrature error.
    pub monotone: bool,
}

/// `∫_{B_Λ} (Σ|P_i|²)^{ε/2} / (Σ|Q_j| + μ)^δ dV` along a decreasing `μ` schedule,
/// with the `μ → 0` limit extrapolated from the last three points.
///
/// The increments of the trace shrink geometrically when the limit is finite;
/// a ratio of successive increments at or above 1 means divergence.
pub fn regularize_integral(
    r: &ArpExpr,
    mu_schedule: &[f64],
    lambda: f64,
    budget: u64,
    rel_target: f64,
) -> Result<RegularizationTrace, ArpError> {
    if mu_schedule.len() < 3 {
        return Err(ArpError::RangeViolation("need at least three μ values".into()));
    }
    if mu_schedule.iter().any(|&m| !(m > 0.0)) || mu_schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(ArpError::RangeViolation("μ schedule must be positive and strictly decreasing".into()));
    }
    let opts = DiskOptions {
        rel_target,
        ..DiskOptions::default()
    };
    let mut used = 0u64;
    let mut trace = Vec::with_capacity(mu_schedule.len());
    for &mu in mu_schedule {
        let f = r.integrand(DenomNorm::Sum, mu)?;
        let o = integrate_disk(&f, lambda, &opts);
        used += o.evaluations;
        if used > budget {
            return Err(ArpError::OracleBudgetExhausted { budget });
        }
        trace.push(TracePoint {
            mu,
            value: o.value,
            error: o.stderr,
        });
    }
    let monotone = trace
        .windows(2)
        .all(|w| w[1].value + 3.0 * (w[0].error + w[1].error) >= w[0].value);
    let n = trace.len();
    let (a, b, c) = (&trace[n - 3], &trace[n - 2], &trace[n - 1]);
    let d1 = b.value - a.value;
    let d2 = c.value - b.value;
    let noise = 3.0 * (b.error + c.error);
    let (limit, diverging) = if d2 <= noise {
        (c.value, false)
    } else {
        // normalize the increments by the schedule's geometric step
        let q = (d2 / d1.max(f64::MIN_POSITIVE)) * ((b.mu / a.mu).ln() / (c.mu / b.mu).ln());
        if q >= 1.0 || !q.is_finite() {
            (f64::INFINITY, true)
        } else {
            (c.value + d2 * q / (1.0 - q), false)
        }
    };
    Ok(RegularizationTrace {
        trace,
        limit,
        diverging,
        monotone,
    })
}

/// How the inner integrals of a theta sweep are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerMethod {
    /// Size estimate when the combined denominator has simple roots, oracle otherwise.
    Estimator,
    Oracle,
}

#[derive(Debug, Clone, Copy)]
pub struct ThetaOptions {
    pub s_gate: f64,
    pub inner: InnerMethod,
    pub max_d: usize,
    /// Doubling stops once the infimum moves by less than this fraction.
    pub rel_change: f64,
    pub rel_target: f64,
    /// `K` in the large-measure check: the fraction of grid points within `K · inf`.
    pub measure_k: f64,
}

impl Default for ThetaOptions {
    fn default() -> Self {
        Self {
            s_gate: 0.5,
            inner: InnerMethod::Estimator,
            max_d: 1 << 12,
            rel_change: 0.1,
            rel_target: 1e-3,
            measure_k: 2.0,
        }
    }
}

/// The lattice `{θ : dθ = 0}` in `J` phases. Only `θ_1 = 0` is enumerated,
/// since a common phase shift leaves every integrand unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaGrid {
    pub d: usize,
    pub dims: usize,
    /// `(d, inf)` after each doubling.
    pub history: Vec<(usize, f64)>,
}

impl ThetaGrid {
    /// Number of lattice points in the full torus, `d^J`.
    pub fn full_len(&self) -> usize {
        self.d.pow(self.dims as u32)
    }

    /// Points with `θ_1 = 0`, in lexicographic order of the remaining indices.
    pub fn points(&self) -> Vec<Vec<usize>> {
        let free = self.dims.saturating_sub(1);
        (0..self.d.pow(free as u32))
            .map(|mut i| {
                let mut k = vec![0; self.dims];
                for slot in k.iter_mut().skip(1).rev() {
                    *slot = i % self.d;
                    i /= self.d;
                }
                k
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaReport {
    pub d: usize,
    #[serde(with = "crate::extreal")]
    pub inf: f64,
    pub profile: Vec<(Vec<f64>, f64)>,
    pub stabilized: bool,
    pub grid: ThetaGrid,
    /// `∫ |P|^ε / (Σ|Q_j|)^δ` for the (possibly reduced) terms; a lower bound for every profile value.
    pub sum_denominator: f64,
    pub sum_denominator_error: f64,
    /// Whether the lower bound held at every grid point, up to the quadrature error.
    /// Only checked when the inner integrals come from the oracle.
    pub lower_bound_holds: Option<bool>,
    /// Fraction of profile values at most `measure_k · inf`.
    pub measure_fraction: f64,
    /// Power `A` applied to every denominator term (1 when `δ < 1`).
    pub reduction: u32,
}

fn theta_poly(terms: &[ComplexPoly], theta: &[f64]) -> ComplexPoly {
    terms
        .iter()
        .zip(theta)
        .fold(ComplexPoly::zero(), |acc, (q, &t)| acc.add(&q.scale(C64::from_polar(1.0, std::f64::consts::TAU * t))))
}

fn inner_value(
    p: &ComplexPoly,
    q: &ComplexPoly,
    pair: &ExponentPair,
    lambda: f64,
    opts: &ThetaOptions,
) -> Result<(f64, f64), ArpError> {
    if opts.inner == InnerMethod::Estimator {
        let eo = EstimateOptions::default();
        if let Ok(den) = crate::estimator::Denominator::from_poly(q, eo.tol) {
            if den.roots.max_multiplicity() == 1 {
                if let Ok(e) = crate::estimator::estimate_with_roots(p, &den, pair, lambda, &eo) {
                    return Ok((e.value, 0.0));
                }
            }
        }
    }
    let f = ArpIntegrand::from_polys(p, q, pair.eps_f64(), pair.delta_f64())?;
    let o = integrate_disk(
        &f,
        lambda,
        &DiskOptions {
            rel_target: opts.rel_target,
            ..DiskOptions::default()
        },
    );
    Ok((o.value, o.stderr))
}

/// Infimum over `{θ : dθ = 0}` of `∫_{B_Λ} |P|^ε / |Σ_j Q_j e^{2πiθ_j}|^δ dV`, doubling `d`
/// from `d_init` until the infimum moves by less than `rel_change`.
///
/// For `δ ≥ 1` the terms are first replaced by `Q_j^A` and `δ` by `δ/A` with
/// `A = ⌈δ⌉ + 1`. The terms, sorted by degree, must satisfy
/// `|||Q_1 − Z^{N_1}||| < s/(2J)` and `|||Q_j||| < s/(2J)` for `j > 1`.
pub fn sample_theta_integral(
    p: &ComplexPoly,
    qs: &[ComplexPoly],
    pair: &ExponentPair,
    lambda: f64,
    d_init: usize,
    opts: &ThetaOptions,
) -> Result<ThetaReport, ArpError> {
    if qs.is_empty() || d_init == 0 {
        return Err(ArpError::RangeViolation("need at least one denominator term and d ≥ 1".into()));
    }
    let delta = pair.delta();
    let reduction: u32 = if delta >= Rational64::from_integer(1) {
        (delta.ceil().to_integer() + 1) as u32
    } else {
        1
    };
    let reduced_pair = ExponentPair::new(pair.eps(), delta / Rational64::from_integer(reduction as i64))?;
    let mut terms: Vec<ComplexPoly> = qs.iter().map(|q| q.pow(reduction)).collect();
    terms.sort_by_key(|q| std::cmp::Reverse(q.degree().unwrap_or(0)));
    let j = terms.len();
    let bound = opts.s_gate / (2.0 * j as f64);
    for (i, q) in terms.iter().enumerate() {
        let norm = if i == 0 {
            q.sub(&ComplexPoly::monomial(q.degree().unwrap_or(0))).coeff_norm()
        } else {
            q.coeff_norm()
        };
        if norm >= bound {
            return Err(ArpError::NormConditionViolated { term: i, norm, bound });
        }
    }

    let sum = ArpExpr::new(vec![p.clone()], terms.clone(), reduced_pair)?;
    let sigma = integrate_disk(
        &sum.integrand(DenomNorm::Sum, 0.0)?,
        lambda,
        &DiskOptions {
            rel_target: opts.rel_target,
            ..DiskOptions::default()
        },
    );

    let mut grid = ThetaGrid {
        d: d_init,
        dims: j,
        history: Vec::new(),
    };
    let mut cache: HashMap<Vec<Rational64>, (f64, f64)> = HashMap::new();
    let mut stabilized = false;
    loop {
        let pts = grid.points();
        let todo: Vec<Vec<Rational64>> = pts
            .iter()
            .map(|k| k.iter().map(|&x| Rational64::new(x as i64, grid.d as i64)).collect())
            .filter(|key| !cache.contains_key(key))
            .collect();
        let fresh: Vec<(Vec<Rational64>, Result<(f64, f64), ArpError>)> = todo
            .into_par_iter()
            .map(|key| {
                let theta: Vec<f64> = key.iter().map(|x| x.to_f64().unwrap_or(0.0)).collect();
                let q = theta_poly(&terms, &theta);
                let v = inner_value(p, &q, &reduced_pair, lambda, opts);
                (key, v)
            })
            .collect();
        for (key, v) in fresh {
            cache.insert(key, v?);
        }
        let inf = pts
            .iter()
            .map(|k| {
                let key: Vec<Rational64> = k.iter().map(|&x| Rational64::new(x as i64, grid.d as i64)).collect();
                cache[&key].0
            })
            .fold(f64::INFINITY, f64::min);
        if let Some(&(_, prev)) = grid.history.last() {
            if j == 1 || (prev - inf).abs() <= opts.rel_change * inf {
                stabilized = true;
            }
        } else if j == 1 {
            stabilized = true;
        }
        grid.history.push((grid.d, inf));
        if stabilized {
            break;
        }
        if grid.d * 2 > opts.max_d {
            return Err(ArpError::NoStabilization { d: grid.d });
        }
        grid.d *= 2;
    }

    let profile: Vec<(Vec<f64>, f64, f64)> = grid
        .points()
        .into_iter()
        .map(|k| {
            let key: Vec<Rational64> = k.iter().map(|&x| Rational64::new(x as i64, grid.d as i64)).collect();
            let (v, e) = cache[&key];
            (key.iter().map(|x| x.to_f64().unwrap_or(0.0)).collect(), v, e)
        })
        .collect();
    let inf = grid.history.last().map(|h| h.1).unwrap_or(f64::INFINITY);
    let lower_bound_holds = (opts.inner == InnerMethod::Oracle).then(|| {
        profile
            .iter()
            .all(|(_, v, e)| sigma.value <= v + 3.0 * (e + sigma.stderr))
    });
    let within = profile.iter().filter(|(_, v, _)| *v <= opts.measure_k * inf).count();
    Ok(ThetaReport {
        d: grid.d,
        inf,
        measure_fraction: within as f64 / profile.len() as f64,
        profile: profile.into_iter().map(|(t, v, _)| (t, v)).collect(),
        stabilized,
        grid,
        sum_denominator: sigma.value,
        sum_denominator_error: sigma.stderr,
        lower_bound_holds,
        reduction,
    })
}

/// The simple-root size of `∫_{B_1} |P|^ε/|Q|^δ dV` for `Q` close to `Z^N`:
/// the symmetric estimate at `Λ = 1`.
pub fn simple_root_size(p: &ComplexPoly, q: &ComplexPoly, pair: &ExponentPair, s_gate: f64) -> Result<f64, ArpError> {
    let n = q.degree().ok_or(PolyError::ZeroPolynomial)?;
    let norm = q.sub(&ComplexPoly::monomial(n)).coeff_norm();
    if norm >= s_gate {
        return Err(ArpError::NormGateViolated { norm, gate: s_gate });
    }
    let opts = EstimateOptions::default();
    let rs = roots(q, q.default_tol())?;
    if rs.max_multiplicity() > 1 {
        return Err(ArpError::MultipleRoots(rs.max_multiplicity()));
    }
    Ok(estimate_symmetric(p, q, pair, 1.0, &opts)?.value)
}

/// Closed-form size of `∫_{B_Λ} |z − c|^ε / |az² − bz|^δ dV` for `1 < δ` and `2δ − ε < 2`.
///
/// Infinite exactly when `b = 0` and `c ≠ 0`.
pub fn example_closed_form(a: C64, b: C64, c: C64, eps: f64, delta: f64, lambda: f64) -> Result<f64, ArpError> {
    if !(delta > 1.0 && 2.0 * delta - eps < 2.0) {
        return Err(ArpError::RangeViolation(format!("need 1 < δ and 2δ − ε < 2, got ε = {eps}, δ = {delta}")));
    }
    if a == C64::new(0.0, 0.0) && b == C64::new(0.0, 0.0) && c == C64::new(0.0, 0.0) {
        return Err(ArpError::RangeViolation("(a, b, c) must not all vanish".into()));
    }
    let (a, b, c) = (a.norm(), b.norm(), c.norm());
    if b == 0.0 {
        return Ok(if c != 0.0 {
            f64::INFINITY
        } else {
            a.powf(-delta) * lambda.powf(2.0 + eps - 2.0 * delta)
        });
    }
    let s = lambda * a + b;
    let c_term = if eps == 0.0 { 1.0 } else { c.powf(eps) };
    Ok(s.powf(-delta) * lambda.powf(2.0 + eps - delta) + (lambda / s).powf(2.0 - delta) * b.powf(2.0 - 2.0 * delta) * c_term)
}

/// The integrand of [`example_closed_form`], or `None` when `a = b = 0` makes the denominator vanish identically.
pub fn example_integrand(a: C64, b: C64, c: C64, eps: f64, delta: f64) -> Result<Option<ArpIntegrand>, ArpError> {
    let q = ComplexPoly::new(vec![C64::new(0.0, 0.0), -b, a]);
    if q.is_zero() {
        return Ok(None);
    }
    let p = ComplexPoly::new(vec![-c, C64::new(1.0, 0.0)]);
    Ok(Some(ArpIntegrand::from_polys(&p, &q, eps, delta)?))
}

/// Where `μ^N` sits relative to the scale terms `L_k(α)^{N−k}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuRegime {
    /// `μ^N` below a tenth of every scale term.
    Small,
    Intermediate,
    /// `μ^N` above ten times every scale term.
    Large,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSample {
    pub instance: usize,
    pub mu: f64,
    pub regime: MuRegime,
    pub formula: f64,
    pub oracle: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeVerdict {
    pub regime: MuRegime,
    pub samples: usize,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub spread_limit: f64,
    pub samples: Vec<GateSample>,
    pub regimes: Vec<RegimeVerdict>,
}

impl GateReport {
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("# Regularized-denominator formula gate\n\n");
        s.push_str(&format!(
            "A regime passes when oracle/formula ratios stay within a spread of {}.\n\n",
            self.spread_limit
        ));
        s.push_str("| regime | samples | ratio min | ratio max | verdict |\n|---|---|---|---|---|\n");
        for r in &self.regimes {
            s.push_str(&format!(
                "| {:?} | {} | {:.3e} | {:.3e} | {} |\n",
                r.regime,
                r.samples,
                r.ratio_min,
                r.ratio_max,
                if r.pass { "pass" } else { "fail" }
            ));
        }
        s
    }
}

/// Compares [`regularized_estimate`] with the oracle for `∫ |P|^ε/(|Q| + μ^N)^δ`
/// over every `(instance, μ)` pair, grouped by [`MuRegime`].
pub fn regularization_gate(
    instances: &[(ComplexPoly, ComplexPoly)],
    pair: &ExponentPair,
    mus: &[f64],
    lambda: f64,
    spread_limit: f64,
) -> Result<GateReport, ArpError> {
    let opts = EstimateOptions::default();
    let jobs: Vec<(usize, f64)> = (0..instances.len()).flat_map(|i| mus.iter().map(move |&m| (i, m))).collect();
    let samples = jobs
        .into_par_iter()
        .map(|(i, mu)| -> Result<GateSample, ArpError> {
            let (p, q) = &instances[i];
            let n = q.degree().unwrap_or(0);
            let den = crate::estimator::Denominator::from_poly(q, opts.tol)?;
            let table = ScaleTable::build(&den.roots);
            let terms: Vec<f64> = table
                .scales
                .iter()
                .flat_map(|row| row.iter().enumerate().map(|(k, l)| l.powi((n - k) as i32)))
                .filter(|t| *t > 0.0)
                .collect();
            let mu_n = mu.powi(n as i32);
            let lo = terms.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = terms.iter().copied().fold(0.0, f64::max);
            let regime = if mu_n < 0.1 * lo {
                MuRegime::Small
            } else if mu_n > 10.0 * hi {
                MuRegime::Large
            } else {
                MuRegime::Intermediate
            };
            let formula = regularized_estimate(p, q, pair, mu, lambda, &opts)?;
            let mut f = ArpIntegrand::from_polys(p, q, pair.eps_f64(), pair.delta_f64())?;
            f.norm = DenomNorm::Sum;
            f.mu = mu_n;
            let oracle = integrate_disk(&f, lambda, &DiskOptions::default()).value;
            Ok(GateSample {
                instance: i,
                mu,
                regime,
                formula,
                oracle,
                ratio: oracle / formula,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let regimes = [MuRegime::Small, MuRegime::Intermediate, MuRegime::Large]
        .into_iter()
        .filter_map(|regime| {
            let rs: Vec<f64> = samples.iter().filter(|s| s.regime == regime).map(|s| s.ratio).collect();
            if rs.is_empty() {
                return None;
            }
            let lo = rs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = rs.iter().copied().fold(0.0, f64::max);
            Some(RegimeVerdict {
                regime,
                samples: rs.len(),
                ratio_min: lo,
                ratio_max: hi,
                pass: lo > 0.0 && hi.is_finite() && hi / lo <= spread_limit,
            })
        })
        .collect();
    Ok(GateReport {
        spread_limit,
        samples,
        regimes,
    })
}

/// [`estimate`] wrapped for an [`ArpExpr`] with a single numerator and denominator term.
pub fn single_term_estimate(r: &ArpExpr, lambda: f64) -> Result<f64, ArpError> {
    match (r.numerator.as_slice(), r.denominator.as_slice()) {
        ([p], [q]) => Ok(estimate(p, q, &r.pair, lambda, &EstimateOptions::default())?.value),
        _ => Err(ArpError::RangeViolation("expected one numerator and one denominator term".into())),
    }
}

/// Integral of `R` over `B_Λ` by the disk oracle, with the denominator terms combined euclidean-wise.
pub fn arp_integral(r: &ArpExpr, lambda: f64, rel_target: f64) -> Result<OracleResult, ArpError> {
    Ok(integrate_disk(
        &r.integrand(DenomNorm::Euclid, 0.0)?,
        lambda,
        &DiskOptions {
            rel_target,
            ..DiskOptions::default()
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(e: &str, d: &str) -> ExponentPair {
        ExponentPair::parse(e, d).unwrap()
    }

    fn z() -> ComplexPoly {
        ComplexPoly::monomial(1)
    }

    const ORIGIN: C64 = C64::new(0.0, 0.0);

    #[test]
    fn eval_cancels_common_zeros() {
        let r = ArpExpr::rational(z(), z(), pair("1", "1")).unwrap();
        assert_eq!(arp_eval(&r, ORIGIN).unwrap(), 1.0);
        let r = ArpExpr::rational(ComplexPoly::one(), z(), pair("0", "1/2")).unwrap();
        assert_eq!(arp_eval(&r, ORIGIN).unwrap(), f64::INFINITY);
        let r = ArpExpr::rational(ComplexPoly::monomial(2), z(), pair("1/2", "1")).unwrap();
        assert_eq!(arp_eval(&r, ORIGIN).unwrap(), 1.0);
        // limit along z = t agrees with the cancelled value
        let near = arp_eval(&r, C64::new(1e-6, 0.0)).unwrap();
        assert!((near - 1.0).abs() < 1e-12);
        let r = ArpExpr::rational(z().scale(C64::new(3.0, 0.0)), z().scale(C64::new(2.0, 0.0)), pair("1", "1")).unwrap();
        assert!((arp_eval(&r, ORIGIN).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn sharp_form_exponents() {
        let r = ArpExpr::rational(z(), z(), pair("1", "1")).unwrap();
        let s = normalize_sharp(&r).unwrap();
        assert_eq!((s.a, s.b, s.d), (1, 1, 1));
        assert_eq!(s.expr.numerator, r.numerator);
        let r = ArpExpr::rational(z(), z(), pair("1/2", "1")).unwrap();
        let s = normalize_sharp(&r).unwrap();
        assert_eq!((s.a, s.b, s.d), (1, 2, 2));
        assert_eq!(s.expr.denominator[0], ComplexPoly::monomial(2));
    }

    #[test]
    fn theta_size() {
        let one = C64::new(1.0, 0.0);
        assert!((theta_denominator_size(&[one, one], 0.5).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(theta_denominator_size(&[ORIGIN], 0.5).unwrap(), f64::INFINITY);
        assert!(theta_denominator_size(&[one], 1.0).is_err());
    }

    #[test]
    fn regularization_traces() {
        let mus: Vec<f64> = (1..=8).map(|k| 10f64.powi(-k)).collect();
        let r = ArpExpr::rational(ComplexPoly::one(), z(), pair("0", "1/2")).unwrap();
        let t = regularize_integral(&r, &mus, 1.0, u64::MAX, 1e-4).unwrap();
        assert!(t.monotone && !t.diverging);
        let exact = 4.0 * std::f64::consts::PI / 3.0;
        assert!((t.limit / exact - 1.0).abs() < 1e-3, "{t:?}");
        let r = ArpExpr::rational(ComplexPoly::one(), z(), pair("0", "5/2")).unwrap();
        let t = regularize_integral(&r, &mus, 1.0, u64::MAX, 1e-3).unwrap();
        assert!(t.monotone && t.diverging, "{t:?}");
    }

    #[test]
    fn theta_sampling_single_term_is_trivial() {
        let q = ComplexPoly::from_real(&[0.01, 0.0, 1.0]);
        let opts = ThetaOptions {
            inner: InnerMethod::Oracle,
            ..ThetaOptions::default()
        };
        let rep = sample_theta_integral(&ComplexPoly::one(), &[q], &pair("0", "1/2"), 1.0, 1, &opts).unwrap();
        assert_eq!(rep.d, 1);
        assert!(rep.stabilized && rep.lower_bound_holds == Some(true));
        assert!((rep.inf / rep.sum_denominator - 1.0).abs() < 1e-3, "{rep:?}");
    }

    #[test]
    fn theta_gates() {
        let q1 = ComplexPoly::from_real(&[0.0, 0.0, 1.0]);
        let q2 = ComplexPoly::from_real(&[0.3]);
        let err = sample_theta_integral(&ComplexPoly::one(), &[q1, q2], &pair("0", "1/2"), 1.0, 2, &ThetaOptions::default());
        assert!(matches!(err, Err(ArpError::NormConditionViolated { term: 1, .. })));
    }

    #[test]
    fn simple_root_gate() {
        let q = ComplexPoly::from_real(&[-0.1, 1.0]);
        let v = simple_root_size(&ComplexPoly::one(), &q, &pair("0", "1/2"), 0.5).unwrap();
        assert!(v > 0.0 && v.is_finite());
        let far = ComplexPoly::from_real(&[2.0, 1.0]);
        assert!(matches!(
            simple_root_size(&ComplexPoly::one(), &far, &pair("0", "1/2"), 0.5),
            Err(ArpError::NormGateViolated { .. })
        ));
    }

    #[test]
    fn example_branches() {
        let (zero, one) = (ORIGIN, C64::new(1.0, 0.0));
        assert_eq!(example_closed_form(zero, one, zero, 1.0, 1.2, 1.0).unwrap(), 1.0);
        assert_eq!(example_closed_form(one, zero, one, 1.0, 1.2, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(example_closed_form(one, zero, zero, 1.0, 1.2, 1.0).unwrap(), 1.0);
        assert!(example_closed_form(one, one, one, 1.0, 1.2, 1.0).is_ok());
        assert!(example_closed_form(one, one, one, 0.0, 1.2, 1.0).is_err());
        assert!(example_closed_form(one, one, one, 0.0, 1.0, 1.0).is_err());
    }
}
