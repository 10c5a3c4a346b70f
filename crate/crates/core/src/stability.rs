//! Local integrability of `|f|^{−δ}` for germs of several variables, and
//! how it behaves under deformation.
//!
//! The two-variable machinery slices `f` along the last coordinate. After a
//! Weierstrass-type preparation the slice `z_2 ↦ f(z_1, z_2)` has a fixed number
//! of roots near the origin, the one-variable estimator sizes each slice, and
//! the resulting profile `G(z_1)` is integrated by the disk oracle. Whether the
//! profile is integrable is read from its fitted power law at the points where
//! slice roots collide.

use std::f64::consts::TAU;
use std::sync::OnceLock;

use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{estimate_pure, EstimateError, EstimateOptions};
use crate::extreal;
use crate::germ::{Germ, GermFamily};
use crate::oracle::{
    integrate_disk, integrate_polydisk_mc, Center, DiskOptions, FnIntegrand, OracleResult, PolydiskOptions,
};
use crate::polynomial::{complex_list, roots, ComplexPoly, PolyError, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("the germ is identically zero")]
    ZeroGerm,
    #[error("every germ in the tuple is identically zero")]
    AllZero,
    #[error("the slice along the last variable vanishes identically after {attempts} random rotations")]
    NoFiniteOrder { attempts: usize },
    #[error("slice at z′ = {z_prime} has {found} roots in the disk, expected {expected}")]
    RootCountMismatch {
        z_prime: String,
        found: usize,
        expected: usize,
    },
    #[error("bracket [{lo}, {hi}] does not straddle the critical exponent")]
    BracketInvalid { lo: f64, hi: f64 },
    #[error("the integral diverges at the base parameter")]
    BaseDiverges,
    #[error("case not covered: {0}")]
    CaseNotCovered(String),
    #[error("invalid input: {0}")]
    RangeViolation(String),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Smallest total degree of a nonzero term.
pub fn vanishing_order_multi(f: &Germ) -> Result<u32, StabilityError> {
    f.lowest_degree().ok_or(StabilityError::ZeroGerm)
}

/// `2n/N` with `N` the smallest vanishing order in the tuple: `|f|^{−δ}` cannot
/// be integrable at 0 for `δ ≥ 2n/N`. `None` when some germ is a unit.
pub fn delta_upper_bound(fs: &[Germ]) -> Result<Option<Rational64>, StabilityError> {
    let n = fs.first().map(Germ::n).ok_or(StabilityError::AllZero)?;
    let order = fs.iter().filter_map(Germ::lowest_degree).min().ok_or(StabilityError::AllZero)?;
    Ok((order > 0).then(|| Rational64::new(2 * n as i64, order as i64)))
}

fn random_unitary(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<C64>> {
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        for c in &cols {
            let proj: C64 = c.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (vi, ci) in v.iter_mut().zip(c) {
                *vi -= proj * ci;
            }
        }
        let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

/// Order of `z_n ↦ f(0, z_n)` at 0, `None` when that slice vanishes identically.
fn slice_order(f: &Germ) -> Option<usize> {
    let scale = f.terms().map(|(_, c)| c.norm()).fold(0.0, f64::max);
    let p = f.slice(&vec![C64::new(0.0, 0.0); f.n() - 1]);
    p.coeffs().iter().position(|c| c.norm() > 1e-12 * scale)
}

/// Points of the polydisk `|z_i| < r` in `ℂ^d`: polar grids in each coordinate.
fn polydisk_grid(d: usize, r: f64, grid_size: usize) -> Vec<Vec<C64>> {
    let (rings, angles) = if d == 1 { (grid_size, 4 * grid_size) } else { (2, 6) };
    let mut one = vec![C64::new(0.0, 0.0)];
    for i in 1..=rings {
        let rad = 0.999 * r * i as f64 / rings as f64;
        one.extend((0..angles).map(|k| C64::from_polar(rad, TAU * k as f64 / angles as f64)));
    }
    let mut pts: Vec<Vec<C64>> = vec![Vec::new()];
    for _ in 0..d {
        pts = pts
            .into_iter()
            .flat_map(|p| {
                one.iter().map(move |&z| {
                    let mut q = p.clone();
                    q.push(z);
                    q
                })
            })
            .collect();
    }
    pts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeierstrassOptions {
    /// Rings in the `z′` grid (angles are four times as many).
    pub grid_size: usize,
    pub seed: u64,
    /// Threshold for `|||Q − Z^N|||` after rescaling the last variable to the unit disk.
    pub s_gate: f64,
    /// Largest coefficient change of `Q` allowed between neighbouring grid points.
    pub jump_bound: f64,
    pub max_shrinks: usize,
}

impl Default for WeierstrassOptions {
    fn default() -> Self {
        Self {
            grid_size: 8,
            seed: 0x5745_4945,
            s_gate: 0.5,
            jump_bound: 0.5,
            max_shrinks: 6,
        }
    }
}

const SHRINK: f64 = 0.7;
const ROTATION_ATTEMPTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicePoint {
    #[serde(with = "complex_list")]
    pub z_prime: Vec<C64>,
    /// Roots of the slice inside `|z_n| < r_n`, with multiplicity.
    #[serde(with = "complex_list")]
    pub roots: Vec<C64>,
    /// Coefficients of the monic `Q(z′, ·)`, constant term first.
    #[serde(with = "complex_list")]
    pub coeffs: Vec<C64>,
    /// `max |f(z′, β)|` over the roots, relative to the slice coefficient norm.
    pub residual: f64,
    pub gate_norm: f64,
}

/// `f = u·Q` near 0, with `Q` monic of degree `N` in the last variable and `u`
/// a unit, tabulated on a grid of `z′`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeierstrassData {
    pub degree: usize,
    /// Radii actually used; `r′` may have been shrunk from the request.
    pub radii: (f64, f64),
    /// The germ in the coordinates used, after any rotation.
    pub germ: Germ,
    #[serde(skip)]
    pub rotation: Option<Vec<Vec<C64>>>,
    pub rotated: bool,
    pub points: Vec<SlicePoint>,
    pub max_residual: f64,
    pub max_gate_norm: f64,
    pub gate_ok: bool,
    pub max_coefficient_jump: f64,
    pub continuous: bool,
    /// Extremes of `|f/Q|` on `|z_n| = r_n` over the grid.
    pub unit_min: f64,
    pub unit_max: f64,
}

struct Scan {
    points: Vec<SlicePoint>,
    unit_min: f64,
    unit_max: f64,
}

fn scan(g: &Germ, degree: usize, r1: f64, rn: f64, grid_size: usize) -> Result<Scan, StabilityError> {
    let mut points = Vec::new();
    let (mut unit_min, mut unit_max) = (f64::INFINITY, 0.0f64);
    let mismatch = |z: &[C64], found| StabilityError::RootCountMismatch {
        z_prime: format!("{z:?}"),
        found,
        expected: degree,
    };
    for z in polydisk_grid(g.n() - 1, r1, grid_size) {
        let p = g.slice(&z);
        if p.is_zero() {
            return Err(mismatch(&z, usize::MAX));
        }
        let inside: Vec<C64> = if p.degree() == Some(0) {
            Vec::new()
        } else {
            let tol = 1e-12 * (1.0 + p.monic().coeff_norm());
            roots(&p, tol)?.expanded().into_iter().filter(|w| w.norm() < rn).collect()
        };
        if inside.len() != degree {
            return Err(mismatch(&z, inside.len()));
        }
        let q = ComplexPoly::from_roots(&inside);
        let scale = p.coeff_norm();
        let residual = inside.iter().map(|&w| p.eval(w).norm() / scale).fold(0.0, f64::max);
        let unit_q = q.rescale_arg(C64::new(rn, 0.0)).scale(C64::new(rn.powi(-(degree as i32)), 0.0));
        let gate_norm = unit_q.sub(&ComplexPoly::monomial(degree)).coeff_norm();
        for k in 0..16 {
            let w = C64::from_polar(rn, TAU * (k as f64 + 0.5) / 16.0);
            let u = p.eval(w).norm() / q.eval(w).norm();
            unit_min = unit_min.min(u);
            unit_max = unit_max.max(u);
        }
        points.push(SlicePoint {
            z_prime: z,
            roots: inside,
            coeffs: q.coeffs()[..degree].to_vec(),
            residual,
            gate_norm,
        });
    }
    Ok(Scan {
        points,
        unit_min,
        unit_max,
    })
}

/// Largest coefficient change between each grid point and its nearest neighbour.
fn max_jump(points: &[SlicePoint]) -> f64 {
    let dist = |a: &[C64], b: &[C64]| a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>();
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let nearest = points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .min_by(|a, b| dist(&p.z_prime, &a.1.z_prime).total_cmp(&dist(&p.z_prime, &b.1.z_prime)));
            nearest.map_or(0.0, |(_, q)| {
                p.coeffs.iter().zip(&q.coeffs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
            })
        })
        .fold(0.0, f64::max)
}

/// Prepares `f` along its last variable on the polydisk `|z′| < r′`, `|z_n| < r_n`.
///
/// `N` is the order of `f(0, z_n)`; if that slice vanishes identically the
/// coordinates are rotated by seeded random unitaries. Whenever some `z′` on
/// the grid sees a root count other than `N` in `|z_n| < r_n`, `r′` shrinks by
/// a factor 0.7 and the scan repeats.
pub fn weierstrass_prepare(
    f: &Germ,
    radii: (f64, f64),
    opts: &WeierstrassOptions,
) -> Result<WeierstrassData, StabilityError> {
    if f.n() < 2 {
        return Err(StabilityError::CaseNotCovered("preparation needs at least two variables".into()));
    }
    if f.is_zero() {
        return Err(StabilityError::ZeroGerm);
    }
    if !(radii.0 > 0.0 && radii.1 > 0.0) {
        return Err(StabilityError::RangeViolation(format!("radii {radii:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut found = None;
    for attempt in 0..=ROTATION_ATTEMPTS {
        let (g, u) = if attempt == 0 {
            (f.clone(), None)
        } else {
            let u = random_unitary(f.n(), &mut rng);
            (f.compose_linear(&u), Some(u))
        };
        if let Some(order) = slice_order(&g) {
            found = Some((g, u, order));
            break;
        }
    }
    let (g, rotation, degree) = found.ok_or(StabilityError::NoFiniteOrder {
        attempts: ROTATION_ATTEMPTS,
    })?;

    let (mut r1, rn) = radii;
    let mut grid = opts.grid_size.max(1);
    let mut refined = false;
    let mut shrinks = 0;
    loop {
        match scan(&g, degree, r1, rn, grid) {
            Ok(s) => {
                let jump = max_jump(&s.points);
                if jump > opts.jump_bound && !refined {
                    refined = true;
                    grid *= 2;
                    continue;
                }
                let max_residual = s.points.iter().map(|p| p.residual).fold(0.0, f64::max);
                let max_gate_norm = s.points.iter().map(|p| p.gate_norm).fold(0.0, f64::max);
                return Ok(WeierstrassData {
                    degree,
                    radii: (r1, rn),
                    germ: g,
                    rotated: rotation.is_some(),
                    rotation,
                    points: s.points,
                    max_residual,
                    max_gate_norm,
                    gate_ok: max_gate_norm < opts.s_gate,
                    max_coefficient_jump: jump,
                    continuous: jump <= opts.jump_bound,
                    unit_min: s.unit_min,
                    unit_max: s.unit_max,
                });
            }
            Err(StabilityError::RootCountMismatch { .. }) if shrinks < opts.max_shrinks => {
                shrinks += 1;
                r1 *= SHRINK;
            }
            Err(e) => return Err(e),
        }
    }
}

fn rational_delta(delta: f64) -> Rational64 {
    Rational64::new((delta * 1e6).round() as i64, 1_000_000)
}

/// `δ` with `jδ = 2` for some `j ≤ degree` makes the pure estimate degenerate.
fn degenerate_delta(delta: f64, degree: usize) -> bool {
    let d = rational_delta(delta);
    (1..=degree as i64).any(|j| d * j == Rational64::from_integer(2))
}

/// The slice profile `G(z_1) ≈ ∫_{B_Λ} |f(z_1, z_2)|^{−δ} dV(z_2)` over `|z_1| < r_1`.
#[derive(Debug, Clone)]
struct Profile2d {
    germ: Germ,
    r1: f64,
    lambda: f64,
    poles: Vec<C64>,
}

impl Profile2d {
    fn slice_roots(germ: &Germ, z1: C64) -> Result<Vec<C64>, StabilityError> {
        let p = germ.slice(&[z1]);
        match p.degree() {
            None => Err(PolyError::ZeroPolynomial.into()),
            Some(0) => Ok(Vec::new()),
            Some(_) => Ok(roots(&p, 1e-12 * (1.0 + p.monic().coeff_norm()))?.expanded()),
        }
    }

    /// `Λ` is twice the largest slice root modulus seen on `|z_1| ≤ r_1`,
    /// with a 10% margin, and never less than `2 r_2`.
    fn auto_lambda(germ: &Germ, r1: f64, r2: f64) -> Result<f64, StabilityError> {
        let mut m = r2;
        let probes = std::iter::once(C64::new(0.0, 0.0))
            .chain((0..16).map(|k| C64::from_polar(0.5 * r1, TAU * k as f64 / 16.0)))
            .chain((0..32).map(|k| C64::from_polar(r1, TAU * (k as f64 + 0.5) / 32.0)));
        for z in probes {
            for w in Self::slice_roots(germ, z)? {
                m = m.max(1.1 * w.norm());
            }
        }
        Ok(2.0 * m)
    }

    /// Points of `|z_1| < r_1` where slice roots collide: zeros of the slice
    /// discriminant, recovered by interpolating it on the circle `|z_1| = r_1`.
    fn poles(germ: &Germ, r1: f64) -> Result<Vec<C64>, StabilityError> {
        let d = germ.degree_in_last() as usize;
        if d < 2 {
            return Ok(Vec::new());
        }
        let bound = (2 * d - 2) * germ.degree_in_leading() as usize;
        let k = bound + 1;
        let mut samples = Vec::with_capacity(k);
        for j in 0..k {
            let z = C64::from_polar(r1, TAU * j as f64 / k as f64);
            let p = germ.slice(&[z]);
            let rs = Self::slice_roots(germ, z)?;
            let mut disc = p.leading().unwrap_or_default().powu(2 * rs.len() as u32 - 2);
            for a in 0..rs.len() {
                for b in a + 1..rs.len() {
                    disc *= (rs[a] - rs[b]).powu(2);
                }
            }
            samples.push(disc);
        }
        // coefficients of the interpolant, scaled back from the circle
        let mut coeffs: Vec<C64> = (0..k)
            .map(|m| {
                let s: C64 = samples
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * C64::from_polar(1.0, -TAU * (j * m) as f64 / k as f64))
                    .sum();
                s / k as f64
            })
            .collect();
        let top = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if top == 0.0 {
            return Ok(vec![C64::new(0.0, 0.0)]);
        }
        for (m, c) in coeffs.iter_mut().enumerate() {
            if c.norm() < 1e-9 * top {
                *c = C64::new(0.0, 0.0);
            } else {
                *c /= r1.powi(m as i32);
            }
        }
        let disc = ComplexPoly::new(coeffs);
        if disc.degree().unwrap_or(0) == 0 {
            return Ok(Vec::new());
        }
        let rs = roots(&disc, disc.monic().default_tol())?;
        Ok(rs
            .roots()
            .iter()
            .map(|r| if r.z.norm() < 1e-6 * r1 { C64::new(0.0, 0.0) } else { r.z })
            .filter(|z| z.norm() < r1)
            .collect())
    }

    fn new(germ: Germ, r1: f64, r2: f64, lambda: Option<f64>) -> Result<Self, StabilityError> {
        let lambda = match lambda {
            Some(l) => l,
            None => Self::auto_lambda(&germ, r1, r2)?,
        };
        let poles = Self::poles(&germ, r1)?;
        Ok(Self {
            germ,
            r1,
            lambda,
            poles,
        })
    }

    fn value(&self, z1: C64, delta: Rational64) -> Result<f64, EstimateError> {
        let p = self.germ.slice(&[z1]);
        let opts = EstimateOptions {
            tol: Some(1e-12 * (1.0 + p.monic().coeff_norm())),
            ..EstimateOptions::default()
        };
        Ok(estimate_pure(&p, delta, self.lambda, &opts)?.value)
    }

    fn integrate(&self, delta: f64, disk: &DiskOptions) -> Result<ProfileIntegral, StabilityError> {
        let d = rational_delta(delta);
        let probe = C64::from_polar(0.37 * self.r1, 0.91);
        if self.value(probe, d)?.is_infinite() {
            return Ok(ProfileIntegral {
                result: OracleResult::divergent(f64::INFINITY, "voronoi-polar", 1),
                max_exponent: f64::INFINITY,
            });
        }
        let failure: OnceLock<EstimateError> = OnceLock::new();
        let integrand = FnIntegrand {
            f: |z: C64| match self.value(z, d) {
                Ok(v) => v,
                Err(e) => {
                    let _ = failure.set(e);
                    0.0
                }
            },
            centers: self
                .poles
                .iter()
                .map(|&z| Center {
                    z,
                    exponent: 0.0,
                    floor: 0.0,
                })
                .collect(),
        };
        let result = integrate_disk(&integrand, self.r1, disk);
        if let Some(e) = failure.into_inner() {
            return Err(e.into());
        }
        let at_poles = result
            .cells
            .iter()
            .filter(|c| self.poles.iter().any(|p| (p - c.center).norm() < 1e-12 * (1.0 + self.r1)))
            .filter_map(|c| c.fitted_exponent)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(ProfileIntegral {
            result,
            max_exponent: at_poles,
        })
    }
}

struct ProfileIntegral {
    result: OracleResult,
    max_exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Finite,
    Infinite,
    /// The fitted exponent fell inside the band around 2.
    Abstain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IteratedOptions {
    pub weierstrass: WeierstrassOptions,
    pub rel_target: f64,
    /// Fitted profile exponents within this distance of 2 give no verdict.
    pub band: f64,
    /// Inner integration radius; `None` derives it from the slice roots.
    pub lambda_inner: Option<f64>,
}

impl Default for IteratedOptions {
    fn default() -> Self {
        Self {
            weierstrass: WeierstrassOptions::default(),
            rel_target: 1e-2,
            band: 0.05,
            lambda_inner: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IteratedResult {
    #[serde(with = "extreal")]
    pub value: f64,
    pub error: f64,
    pub verdict: Verdict,
    /// Largest fitted exponent `s` of `G(z_1) ~ |z_1 − β|^{−s}` over the poles `β`.
    #[serde(with = "extreal")]
    pub max_exponent: f64,
    #[serde(with = "complex_list")]
    pub poles: Vec<C64>,
    pub weierstrass_degree: usize,
    pub radii: (f64, f64),
    pub lambda_inner: f64,
    pub rotated: bool,
    pub evaluations: u64,
}

fn verdict_from(max_exponent: f64, band: f64) -> Verdict {
    if max_exponent < 2.0 - band {
        Verdict::Finite
    } else if max_exponent > 2.0 + band {
        Verdict::Infinite
    } else {
        Verdict::Abstain
    }
}

/// Prepared state for repeated two-variable evaluations at different `δ`.
struct Iterated {
    data: WeierstrassData,
    profile: Profile2d,
    order: u32,
}

impl Iterated {
    fn new(f: &Germ, radii: (f64, f64), opts: &IteratedOptions) -> Result<Self, StabilityError> {
        if f.n() != 2 {
            return Err(StabilityError::CaseNotCovered(format!(
                "the iterated estimate is for two variables, got {}",
                f.n()
            )));
        }
        let order = vanishing_order_multi(f)?;
        let data = weierstrass_prepare(f, radii, &opts.weierstrass)?;
        let profile = Profile2d::new(data.germ.clone(), data.radii.0, data.radii.1, opts.lambda_inner)?;
        Ok(Self { data, profile, order })
    }

    fn run(&self, delta: f64, opts: &IteratedOptions) -> Result<IteratedResult, StabilityError> {
        let base = |value, error, verdict, max_exponent, evaluations| IteratedResult {
            value,
            error,
            verdict,
            max_exponent,
            poles: self.profile.poles.clone(),
            weierstrass_degree: self.data.degree,
            radii: self.data.radii,
            lambda_inner: self.profile.lambda,
            rotated: self.data.rotated,
            evaluations,
        };
        // beyond 2n/N no germ of order N is integrable
        if self.order > 0 && delta * self.order as f64 >= 4.0 {
            return Ok(base(f64::INFINITY, 0.0, Verdict::Infinite, f64::INFINITY, 0));
        }
        let pi = self.profile.integrate(
            delta,
            &DiskOptions {
                rel_target: opts.rel_target,
                ..DiskOptions::default()
            },
        )?;
        let verdict = verdict_from(pi.max_exponent, opts.band);
        Ok(base(
            pi.result.value,
            pi.result.stderr,
            verdict,
            pi.max_exponent,
            pi.result.evaluations,
        ))
    }
}

/// Size of `∫_{|z_1|<r_1} ∫_{|z_2|<r_2} |f|^{−δ}` for a germ in two variables,
/// up to constants, with a finiteness verdict.
///
/// `r_1` is the prepared radius, which may be smaller than requested. The inner
/// integral runs over `B_Λ` with `Λ` covering all slice roots, so the value is
/// size-equivalent to the polydisk integral rather than equal to it.
pub fn iterated_estimate_2d(
    f: &Germ,
    delta: f64,
    radii: (f64, f64),
    opts: &IteratedOptions,
) -> Result<IteratedResult, StabilityError> {
    if !(delta > 0.0) {
        return Err(StabilityError::RangeViolation(format!("δ = {delta}")));
    }
    Iterated::new(f, radii, opts)?.run(delta, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalExponent {
    pub value: f64,
    /// Final bracket; equal to `value` when the exponent is exact.
    pub lo: f64,
    pub hi: f64,
    pub exact: bool,
    pub iterations: usize,
}

/// The supremum of `δ` with `|f|^{−δ}` integrable near 0.
///
/// One variable: exactly `2/m` for vanishing order `m`. Two variables:
/// bisection on the sign of `s − 2`, where `s` is the fitted profile exponent,
/// with degenerate `δ` nudged by `tol/10`.
pub fn critical_exponent(
    f: &Germ,
    bracket: (f64, f64),
    tol: f64,
    opts: &IteratedOptions,
) -> Result<CriticalExponent, StabilityError> {
    match f.n() {
        1 => {
            let m = vanishing_order_multi(f)?;
            let value = if m == 0 { f64::INFINITY } else { 2.0 / m as f64 };
            Ok(CriticalExponent {
                value,
                lo: value,
                hi: value,
                exact: true,
                iterations: 0,
            })
        }
        2 => {
            let (mut lo, mut hi) = bracket;
            if !(0.0 < lo && lo < hi && tol > 0.0) {
                return Err(StabilityError::BracketInvalid { lo, hi });
            }
            let it = Iterated::new(f, (0.3, 0.3), opts)?;
            let degree = it.data.germ.degree_in_last() as usize;
            let finite = |delta: f64| -> Result<bool, StabilityError> {
                let d = if degenerate_delta(delta, degree) { delta + 0.1 * tol } else { delta };
                Ok(it.run(d, opts)?.max_exponent < 2.0)
            };
            if !finite(lo)? || finite(hi)? {
                return Err(StabilityError::BracketInvalid { lo, hi });
            }
            let mut iterations = 0;
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                if finite(mid)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
                iterations += 1;
            }
            Ok(CriticalExponent {
                value: 0.5 * (lo + hi),
                lo,
                hi,
                exact: false,
                iterations,
            })
        }
        n => Err(StabilityError::CaseNotCovered(format!("critical exponents in {n} variables"))),
    }
}

fn norm_sq_of(fs: &[Germ]) -> impl Fn(&[C64]) -> f64 + Sync + '_ {
    move |z: &[C64]| fs.iter().map(|f| f.eval(z).norm_sqr()).sum()
}

/// `∫_{|z|<r} (Σ|f_j|²)^{−δ/2}` in one variable by the disk oracle.
fn disk_integral(fs: &[Germ], delta: f64, r: f64) -> Result<OracleResult, StabilityError> {
    let mut centers = Vec::new();
    for f in fs {
        let p = f.slice(&[]);
        if p.degree().unwrap_or(0) > 0 {
            for root in roots(&p, p.monic().default_tol())?.roots() {
                if root.z.norm() < r {
                    centers.push(Center {
                        z: root.z,
                        exponent: 0.0,
                        floor: 0.0,
                    });
                }
            }
        }
    }
    let ns = norm_sq_of(fs);
    let integrand = FnIntegrand {
        f: |z: C64| ns(&[z]).powf(-0.5 * delta),
        centers,
    };
    Ok(integrate_disk(&integrand, r, &DiskOptions::default()))
}

fn is_divergent(r: &OracleResult) -> bool {
    r.diverging || r.value.is_infinite()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityPoint {
    #[serde(with = "crate::polynomial::complex_pair")]
    pub c: C64,
    #[serde(with = "extreal")]
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub coarse: Vec<ContinuityPoint>,
    pub fine: Vec<ContinuityPoint>,
    /// Largest relative change between adjacent parameters, per level.
    pub coarse_variation: f64,
    pub fine_variation: f64,
    /// `|I(c) − I(0)|/I(0)` at the parameter closest to 0 on the fine level.
    pub approach_error: f64,
    /// Largest relative standard error over all points.
    pub noise: f64,
    pub passes: bool,
}

/// Checks that `c ↦ ∫ |f_c|^{−δ}` is continuous at `c = 0` along the path
/// `0, c_1, c_2, …`.
///
/// The path is evaluated as given and with midpoints inserted; continuity
/// shows as adjacent differences that shrink under refinement. One variable
/// uses the disk oracle; more use Monte Carlo with common random numbers, so
/// every parameter sees the same samples from a `c`-independent proposal.
pub fn continuity_probe(
    family: &GermFamily,
    delta: f64,
    radii: &[f64],
    c_path: &[C64],
    n_samples: usize,
    seed: u64,
) -> Result<ContinuityReport, StabilityError> {
    if radii.len() != family.n || c_path.is_empty() {
        return Err(StabilityError::RangeViolation("need one radius per variable and a nonempty path".into()));
    }
    let eval = |c: C64| -> Result<ContinuityPoint, StabilityError> {
        let f = family.specialize(c);
        if f.is_zero() {
            return Err(StabilityError::ZeroGerm);
        }
        let r = if family.n == 1 {
            disk_integral(std::slice::from_ref(&f), delta, radii[0])?
        } else {
            let fs = [f];
            let ns = norm_sq_of(&fs);
            integrate_polydisk_mc(&ns, delta, radii, n_samples, seed, &PolydiskOptions::default())
        };
        Ok(ContinuityPoint {
            c,
            value: if is_divergent(&r) { f64::INFINITY } else { r.value },
            stderr: r.stderr,
        })
    };
    let zero = C64::new(0.0, 0.0);
    let base = eval(zero)?;
    if base.value.is_infinite() {
        return Err(StabilityError::BaseDiverges);
    }
    let mut coarse = vec![base.clone()];
    for &c in c_path {
        coarse.push(eval(c)?);
    }
    let mut fine = vec![base.clone()];
    for w in coarse.windows(2) {
        fine.push(eval(0.5 * (w[0].c + w[1].c))?);
        fine.push(w[1].clone());
    }
    let variation = |pts: &[ContinuityPoint]| {
        pts.windows(2)
            .map(|w| (w[1].value - w[0].value).abs() / base.value)
            .fold(0.0, f64::max)
    };
    let coarse_variation = variation(&coarse);
    let fine_variation = variation(&fine);
    let noise = fine.iter().map(|p| p.stderr / p.value).fold(0.0, f64::max);
    let approach_error = (fine[1].value - base.value).abs() / base.value;
    let all_finite = fine.iter().all(|p| p.value.is_finite());
    Ok(ContinuityReport {
        passes: all_finite && (fine_variation < coarse_variation || fine_variation <= 3.0 * noise),
        coarse,
        fine,
        coarse_variation,
        fine_variation,
        approach_error,
        noise,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationMethod {
    /// Deterministic disk oracle in one variable.
    Disk,
    /// Iterated slice estimate in two variables, with Monte Carlo alongside.
    Iterated,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationLevel {
    pub rho: f64,
    pub max_deviation: f64,
    pub mean_deviation: f64,
    /// Largest relative Monte Carlo deviation, when Monte Carlo was run.
    pub mc_max_deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub method: PerturbationMethod,
    #[serde(with = "extreal")]
    pub base: f64,
    pub base_mc: Option<f64>,
    pub levels: Vec<PerturbationLevel>,
    pub passes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationOptions {
    pub n_perturbations: usize,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for PerturbationOptions {
    fn default() -> Self {
        Self {
            n_perturbations: 4,
            n_samples: 100_000,
            seed: 0x7065_7274,
        }
    }
}

fn exponents_up_to(n: usize, degree: u32) -> Vec<Vec<u32>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    (0..=degree)
        .flat_map(|k| {
            exponents_up_to(n - 1, degree - k).into_iter().map(move |mut e| {
                e.insert(0, k);
                e
            })
        })
        .collect()
}

/// A random polynomial of total degree at most `degree` whose sup over the
/// polydisk is at most `rho`.
fn random_perturbation(n: usize, degree: u32, radii: &[f64], rho: f64, rng: &mut ChaCha8Rng) -> Germ {
    let g = Germ::new(
        n,
        exponents_up_to(n, degree).into_iter().map(|e| {
            let c = C64::from_polar(rng.gen::<f64>().sqrt(), TAU * rng.gen::<f64>());
            (e, c)
        }),
    );
    let sup = g.sup_bound(radii);
    g.scale(C64::new(rho / sup, 0.0))
}

/// Checks that `∫ |f + g|^{−δ} → ∫ |f|^{−δ}` as `sup |g| → 0`, with `g` random
/// polynomials of the same degree bounded by each `ρ` on the polydisk.
///
/// Covered: one variable (disk oracle), two variables (iterated estimate for a
/// single germ, Monte Carlo throughout) and three variables when `δ < 4/N`.
pub fn perturbation_probe(
    fs: &[Germ],
    delta: f64,
    radii: &[f64],
    rhos: &[f64],
    opts: &PerturbationOptions,
) -> Result<PerturbationReport, StabilityError> {
    let n = fs.first().map(Germ::n).ok_or(StabilityError::AllZero)?;
    if radii.len() != n || rhos.is_empty() {
        return Err(StabilityError::RangeViolation("need one radius per variable and some ρ".into()));
    }
    let order = fs.iter().filter_map(Germ::lowest_degree).min().ok_or(StabilityError::AllZero)?;
    match n {
        1 | 2 => {}
        3 if order == 0 || delta * (order as f64) < 4.0 => {}
        3 => {
            return Err(StabilityError::CaseNotCovered(format!(
                "three variables need δ < 4/N = {}",
                4.0 / order as f64
            )))
        }
        _ => return Err(StabilityError::CaseNotCovered(format!("{n} variables"))),
    }
    let method = match (n, fs.len()) {
        (1, _) => PerturbationMethod::Disk,
        (2, 1) => PerturbationMethod::Iterated,
        _ => PerturbationMethod::MonteCarlo,
    };
    let use_mc = n >= 2;
    let mc = |gs: &[Germ]| {
        let ns = norm_sq_of(gs);
        integrate_polydisk_mc(&ns, delta, radii, opts.n_samples, opts.seed, &PolydiskOptions::default())
    };

    let iter_opts = IteratedOptions::default();
    let iterated = if method == PerturbationMethod::Iterated {
        Some(Iterated::new(&fs[0], (radii[0], radii[1]), &iter_opts)?)
    } else {
        None
    };
    // perturbed germs reuse the base coordinates and radii
    let deterministic = |gs: &[Germ]| -> Result<f64, StabilityError> {
        match (&iterated, method) {
            (_, PerturbationMethod::Disk) => {
                let r = disk_integral(gs, delta, radii[0])?;
                Ok(if is_divergent(&r) { f64::INFINITY } else { r.value })
            }
            (Some(it), _) => {
                let g = match &it.data.rotation {
                    Some(u) => gs[0].compose_linear(u),
                    None => gs[0].clone(),
                };
                let (r1, r2) = it.data.radii;
                // keep the base scale unless perturbed slice roots move past it
                let lambda = Profile2d::auto_lambda(&g, r1, r2)?.max(it.profile.lambda);
                let p = Profile2d::new(g, r1, r2, Some(lambda))?;
                let r = p.integrate(
                    delta,
                    &DiskOptions {
                        rel_target: iter_opts.rel_target,
                        ..DiskOptions::default()
                    },
                )?;
                Ok(if is_divergent(&r.result) { f64::INFINITY } else { r.result.value })
            }
            _ => {
                let r = mc(gs);
                Ok(if is_divergent(&r) { f64::INFINITY } else { r.value })
            }
        }
    };

    let base = deterministic(fs)?;
    if base.is_infinite() {
        return Err(StabilityError::BaseDiverges);
    }
    let base_mc = use_mc.then(|| mc(fs).value);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut levels = Vec::with_capacity(rhos.len());
    for &rho in rhos {
        let (mut max_dev, mut sum_dev, mut mc_max) = (0.0f64, 0.0, None::<f64>);
        for _ in 0..opts.n_perturbations {
            let perturbed: Vec<Germ> = fs
                .iter()
                .map(|f| f.add(&random_perturbation(n, f.degree(), radii, rho, &mut rng)))
                .collect();
            let v = deterministic(&perturbed)?;
            let dev = (v - base).abs() / base;
            max_dev = max_dev.max(dev);
            sum_dev += dev;
            if let (true, Some(b)) = (method == PerturbationMethod::Iterated, base_mc) {
                let m = mc(&perturbed).value;
                let d = (m - b).abs() / b;
                mc_max = Some(mc_max.map_or(d, |x| x.max(d)));
            }
        }
        levels.push(PerturbationLevel {
            rho,
            max_deviation: max_dev,
            mean_deviation: sum_dev / opts.n_perturbations.max(1) as f64,
            mc_max_deviation: mc_max,
        });
    }
    let (first, last) = (
        levels.iter().max_by(|a, b| a.rho.total_cmp(&b.rho)).expect("nonempty"),
        levels.iter().min_by(|a, b| a.rho.total_cmp(&b.rho)).expect("nonempty"),
    );
    let passes = levels.iter().all(|l| l.max_deviation.is_finite())
        && (last.max_deviation <= 0.5 * first.max_deviation || last.max_deviation < 0.01);
    Ok(PerturbationReport {
        method,
        base,
        base_mc,
        levels,
        passes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionPoint {
    pub alpha: f64,
    /// Volume of `{z : |f(z)| < α}` inside the polydisk.
    pub volume: f64,
    pub stderr: f64,
    /// `α^δ ∫ |f|^{−δ}`, when `δ` was given.
    pub bound: Option<f64>,
    pub bound_stderr: Option<f64>,
    /// The volume exceeds the bound by more than three combined standard errors.
    pub violated: bool,
}

/// Monte Carlo distribution function `μ(α) = vol{|f| < α}` on the polydisk of
/// radius `r` in each variable, with `|f| = (Σ|f_j|²)^{1/2}`. With `δ` given,
/// each value is checked against the Chebychev bound `μ(α) ≤ α^δ ∫ |f|^{−δ}`.
pub fn distribution_mu(
    fs: &[Germ],
    alphas: &[f64],
    r: f64,
    n_samples: usize,
    seed: u64,
    delta: Option<f64>,
) -> Result<Vec<DistributionPoint>, StabilityError> {
    let n = fs.first().map(Germ::n).ok_or(StabilityError::AllZero)?;
    if fs.iter().all(Germ::is_zero) {
        return Err(StabilityError::AllZero);
    }
    if !(r > 0.0) || n_samples == 0 {
        return Err(StabilityError::RangeViolation(format!("radius {r}, {n_samples} samples")));
    }
    let ns = norm_sq_of(fs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; alphas.len()];
    let mut z = vec![C64::new(0.0, 0.0); n];
    for _ in 0..n_samples {
        for zi in z.iter_mut() {
            *zi = C64::from_polar(r * rng.gen::<f64>().sqrt(), TAU * rng.gen::<f64>());
        }
        let v = ns(&z).sqrt();
        for (cnt, &a) in counts.iter_mut().zip(alphas) {
            if v < a {
                *cnt += 1;
            }
        }
    }
    let total = (std::f64::consts::PI * r * r).powi(n as i32);
    let integral = match delta {
        Some(d) => {
            let radii = vec![r; n];
            let res = integrate_polydisk_mc(&ns, d, &radii, n_samples, seed ^ 0x6368_6562, &PolydiskOptions::default());
            Some(if is_divergent(&res) { (f64::INFINITY, 0.0) } else { (res.value, res.stderr) })
        }
        None => None,
    };
    Ok(alphas
        .iter()
        .zip(counts)
        .map(|(&alpha, cnt)| {
            let p = cnt as f64 / n_samples as f64;
            let volume = p * total;
            let stderr = total * (p * (1.0 - p) / n_samples as f64).sqrt();
            let (bound, bound_stderr) = match (integral, delta) {
                (Some((i, e)), Some(d)) => (Some(alpha.powf(d) * i), Some(alpha.powf(d) * e)),
                _ => (None, None),
            };
            let violated = match (bound, bound_stderr) {
                (Some(b), Some(be)) => volume - b > 3.0 * (stderr.powi(2) + be.powi(2)).sqrt(),
                _ => false,
            };
            DistributionPoint {
                alpha,
                volume,
                stderr,
                bound,
                bound_stderr,
                violated,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn cusp() -> Germ {
        Germ::real(2, &[(&[2, 0], 1.0), (&[0, 3], 1.0)])
    }

    #[test]
    fn orders_and_bounds() {
        assert_eq!(vanishing_order_multi(&cusp()), Ok(2));
        assert_eq!(vanishing_order_multi(&Germ::zero(2)), Err(StabilityError::ZeroGerm));
        assert_eq!(delta_upper_bound(&[cusp()]), Ok(Some(Rational64::from_integer(2))));
        let z3 = Germ::real(1, &[(&[3], 1.0)]);
        assert_eq!(delta_upper_bound(&[z3]), Ok(Some(Rational64::new(2, 3))));
        assert_eq!(delta_upper_bound(&[Germ::zero(2)]), Err(StabilityError::AllZero));
    }

    #[test]
    fn preparation_examples() {
        let opts = WeierstrassOptions::default();
        let parabola = Germ::real(2, &[(&[0, 2], 1.0), (&[1, 0], -1.0)]);
        let w = weierstrass_prepare(&parabola, (0.3, 0.3), &opts).unwrap();
        assert_eq!(w.degree, 2);
        assert!(w.radii.0 < 0.3 && w.radii.0 > 0.0, "{:?}", w.radii);
        assert!(w.continuous && w.max_residual < 1e-10);
        // the unit 1 + z_1 is nowhere near zero
        let with_unit = Germ::real(2, &[(&[0, 2], 1.0), (&[1, 0], -1.0), (&[1, 2], 1.0), (&[2, 0], -1.0)]);
        let w = weierstrass_prepare(&with_unit, (0.3, 0.3), &opts).unwrap();
        assert_eq!(w.degree, 2);
        assert!(w.unit_min > 0.5 && w.unit_max < 1.5, "{} {}", w.unit_min, w.unit_max);
        let w = weierstrass_prepare(&cusp(), (0.3, 0.3), &opts).unwrap();
        assert_eq!((w.degree, w.rotated), (3, false));
        let node = Germ::real(2, &[(&[1, 1], 1.0)]);
        let w = weierstrass_prepare(&node, (0.3, 0.3), &opts).unwrap();
        assert_eq!((w.degree, w.rotated), (2, true));
    }

    #[test]
    fn iterated_node_and_cusp() {
        let opts = IteratedOptions::default();
        let node = Germ::real(2, &[(&[1, 1], 1.0)]);
        let r = iterated_estimate_2d(&node, 1.0 + 1e-3, (1.0, 1.0), &opts).unwrap();
        assert_eq!(r.verdict, Verdict::Finite, "{r:?}");
        let ratio = r.value / (TAU * TAU);
        assert!(ratio > 0.01 && ratio < 100.0, "{r:?}");
        let r = iterated_estimate_2d(&cusp(), 1.4, (0.3, 0.3), &opts).unwrap();
        assert_eq!(r.verdict, Verdict::Finite, "{r:?}");
        // profile exponent 2δ − 4/3
        assert!((r.max_exponent - (2.8 - 4.0 / 3.0)).abs() < 1e-3, "{r:?}");
        let r = iterated_estimate_2d(&cusp(), 1.8, (0.3, 0.3), &opts).unwrap();
        assert_eq!(r.verdict, Verdict::Infinite, "{r:?}");
        assert!(r.value.is_infinite());
    }

    #[test]
    fn critical_exponents() {
        let opts = IteratedOptions::default();
        let z3 = Germ::real(1, &[(&[3], 1.0)]);
        assert_eq!(critical_exponent(&z3, (0.1, 1.0), 1e-3, &opts).unwrap().value, 2.0 / 3.0);
        let node = Germ::real(2, &[(&[1, 1], 1.0)]);
        let c = critical_exponent(&node, (1.5, 2.5), 0.01, &opts).unwrap();
        assert!((c.value - 2.0).abs() < 0.02, "{c:?}");
        let c = critical_exponent(&cusp(), (1.2, 1.9), 0.01, &opts).unwrap();
        assert!((c.value - 5.0 / 3.0).abs() < 0.05, "{c:?}");
        assert!(matches!(
            critical_exponent(&cusp(), (1.7, 1.9), 0.01, &opts),
            Err(StabilityError::BracketInvalid { .. })
        ));
    }

    #[test]
    fn continuity_of_a_quadric_family() {
        let fam = GermFamily {
            n: 2,
            terms: vec![
                crate::germ::Term { exp: vec![2, 0, 0], coef: C64::new(1.0, 0.0) },
                crate::germ::Term { exp: vec![0, 2, 1], coef: C64::new(1.0, 0.0) },
            ],
        };
        let path: Vec<C64> = [0.1, 0.2, 0.3, 0.4].iter().map(|&c| C64::new(c, 0.0)).collect();
        let r = continuity_probe(&fam, 0.8, &[1.0, 1.0], &path, 100_000, 3).unwrap();
        // ∫_{B_1} |z_1|^{−1.6} · area(B_1) = (2π/0.4)·π
        let exact = 5.0 * PI * PI;
        let b = &r.coarse[0];
        assert!((b.value - exact).abs() < 4.0 * b.stderr, "{b:?} vs {exact}");
        assert!(r.passes, "{r:?}");
    }

    #[test]
    fn perturbations_in_one_and_three_variables() {
        let z2 = Germ::real(1, &[(&[2], 1.0)]);
        let r = perturbation_probe(&[z2], 0.5, &[1.0], &[0.1, 0.01, 0.001], &PerturbationOptions::default()).unwrap();
        assert_eq!(r.method, PerturbationMethod::Disk);
        assert!(r.passes, "{r:?}");
        let quad = Germ::real(3, &[(&[2, 0, 0], 1.0), (&[0, 2, 0], 1.0), (&[0, 0, 2], 1.0)]);
        assert!(matches!(
            perturbation_probe(&[quad], 2.5, &[1.0; 3], &[0.1], &PerturbationOptions::default()),
            Err(StabilityError::CaseNotCovered(_))
        ));
    }

    #[test]
    fn distribution_of_a_power() {
        let z3 = Germ::real(1, &[(&[3], 1.0)]);
        let alphas = [0.01, 0.1, 0.5];
        let pts = distribution_mu(&[z3], &alphas, 1.0, 200_000, 11, Some(0.5)).unwrap();
        for p in &pts {
            let exact = PI * p.alpha.powf(2.0 / 3.0);
            assert!((p.volume - exact).abs() < 4.0 * p.stderr + 1e-12, "{p:?} vs {exact}");
            assert!(!p.violated, "{p:?}");
        }
    }
}
