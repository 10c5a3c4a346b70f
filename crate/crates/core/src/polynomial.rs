//! Dense univariate polynomials with complex coefficients.
//!
//! Coefficients are stored in ascending degree order with trailing zeros
//! trimmed, so the zero polynomial is the empty coefficient list. Roots are
//! found by simultaneous Aberth iteration and grouped into clusters that carry
//! a multiplicity.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub type C64 = Complex64;

const MAX_ABERTH_ITERATIONS: usize = 800;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("root iteration did not converge within {iterations} sweeps")]
    NonConvergence { iterations: usize },
    #[error("operation undefined for the zero polynomial")]
    ZeroPolynomial,
    #[error("constant polynomial has no roots")]
    ConstantPolynomial,
    #[error("invalid polynomial encoding: {0}")]
    Parse(String),
}

#[derive(Clone, PartialEq, Default)]
pub struct ComplexPoly {
    coeffs: Vec<C64>,
}

impl fmt::Debug for ComplexPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.coeffs.iter().map(|c| (c.re, c.im)))
            .finish()
    }
}

impl ComplexPoly {
    pub fn new(mut coeffs: Vec<C64>) -> Self {
        while coeffs.last().is_some_and(|c| *c == C64::new(0.0, 0.0)) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&c| C64::new(c, 0.0)).collect())
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: C64) -> Self {
        Self::new(vec![c])
    }

    pub fn one() -> Self {
        Self::constant(C64::new(1.0, 0.0))
    }

    /// `z^k`.
    pub fn monomial(k: usize) -> Self {
        let mut coeffs = vec![C64::new(0.0, 0.0); k + 1];
        coeffs[k] = C64::new(1.0, 0.0);
        Self { coeffs }
    }

    /// Monic polynomial with the given roots (repeated entries are multiple roots).
    pub fn from_roots(roots: &[C64]) -> Self {
        let mut acc = vec![C64::new(1.0, 0.0)];
        for &r in roots {
            let mut next = vec![C64::new(0.0, 0.0); acc.len() + 1];
            for (k, &a) in acc.iter().enumerate() {
                next[k + 1] += a;
                next[k] -= r * a;
            }
            acc = next;
        }
        Self::new(acc)
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> Option<C64> {
        self.coeffs.last().copied()
    }

    /// Coefficient of `z^k`, zero beyond the degree.
    pub fn coeff(&self, k: usize) -> C64 {
        self.coeffs.get(k).copied().unwrap_or_default()
    }

    /// The coefficient 1-norm `Σ|a_k|`.
    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    /// Default clustering tolerance `1e-7 · (1 + |||q|||)`.
    pub fn default_tol(&self) -> f64 {
        1e-7 * (1.0 + self.coeff_norm())
    }

    pub fn eval(&self, z: C64) -> C64 {
        self.coeffs
            .iter()
            .rev()
            .fold(C64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    /// Value and first derivative by a single Horner pass.
    pub fn eval_with_derivative(&self, z: C64) -> (C64, C64) {
        let mut p = C64::new(0.0, 0.0);
        let mut dp = C64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    }

    /// A bound on the rounding error of Horner evaluation at `z`.
    pub fn eval_error_bound(&self, z: C64) -> f64 {
        let r = z.norm();
        let s = self
            .coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * r + c.norm());
        4.0 * f64::EPSILON * (self.coeffs.len() as f64 + 1.0) * s
    }

    pub fn derivative(&self, order: usize) -> Self {
        if order >= self.coeffs.len() {
            return Self::zero();
        }
        let coeffs = (order..self.coeffs.len())
            .map(|k| {
                let falling: f64 = ((k - order + 1)..=k).map(|j| j as f64).product();
                self.coeffs[k] * falling
            })
            .collect();
        Self::new(coeffs)
    }

    /// Coefficients of `w ↦ p(α + w)`, i.e. the Taylor coefficients `p^{(j)}(α)/j!`.
    pub fn taylor_at(&self, alpha: C64) -> Vec<C64> {
        let mut c = self.coeffs.clone();
        let n = c.len();
        for i in 0..n {
            for k in (i..n.saturating_sub(1)).rev() {
                let next = c[k + 1];
                c[k] += alpha * next;
            }
        }
        c
    }

    /// `p(s·z)`.
    pub fn rescale_arg(&self, s: C64) -> Self {
        let mut pow = C64::new(1.0, 0.0);
        let coeffs = self
            .coeffs
            .iter()
            .map(|&c| {
                let v = c * pow;
                pow *= s;
                v
            })
            .collect();
        Self::new(coeffs)
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::new(self.coeffs.iter().map(|&c| c * s).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::new((0..n).map(|k| self.coeff(k) + other.coeff(k)).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::new((0..n).map(|k| self.coeff(k) - other.coeff(k)).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut out = vec![C64::new(0.0, 0.0); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn pow(&self, e: u32) -> Self {
        (0..e).fold(Self::one(), |acc, _| acc.mul(self))
    }

    /// Divides by the leading coefficient. The zero polynomial stays zero.
    pub fn monic(&self) -> Self {
        match self.leading() {
            Some(l) => self.scale(l.inv()),
            None => Self::zero(),
        }
    }
}

impl Serialize for ComplexPoly {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = self.coeffs.iter().map(|c| [c.re, c.im]).collect();
        pairs.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ComplexPoly {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(deserializer)?;
        Ok(Self::new(pairs.into_iter().map(|[re, im]| C64::new(re, im)).collect()))
    }
}

impl std::str::FromStr for ComplexPoly {
    type Err = PolyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_str(s).map_err(|e| PolyError::Parse(e.to_string()))
    }
}

/// Serde helper for a single complex number written as `[re, im]`.
pub mod complex_pair {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(z: &C64, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(C64::new(re, im))
    }
}

/// Serde helper for a list of complex numbers written as `[[re, im], ...]`.
pub mod complex_list {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(zs: &[C64], s: S) -> Result<S::Ok, S::Error> {
        zs.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        let v = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(v.into_iter().map(|[re, im]| C64::new(re, im)).collect())
    }
}

/// A root location together with its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Root {
    #[serde(with = "complex_pair")]
    pub z: C64,
    pub multiplicity: usize,
}

/// Roots of a polynomial, grouped into clusters with multiplicities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootSet {
    roots: Vec<Root>,
}

impl RootSet {
    /// Builds a root set from explicit clusters, merging identical locations.
    pub fn from_roots(roots: Vec<Root>) -> Self {
        let mut merged: Vec<Root> = Vec::with_capacity(roots.len());
        for r in roots.into_iter().filter(|r| r.multiplicity > 0) {
            match merged.iter_mut().find(|m| m.z == r.z) {
                Some(m) => m.multiplicity += r.multiplicity,
                None => merged.push(r),
            }
        }
        Self { roots: merged }
    }

    /// Builds a root set from a list in which repeated entries are multiple roots.
    pub fn from_multiset(points: &[C64]) -> Self {
        Self::from_roots(
            points
                .iter()
                .map(|&z| Root { z, multiplicity: 1 })
                .collect(),
        )
    }

    pub fn roots(&self) -> &[Root] {
        &self.roots
    }

    pub fn distinct(&self) -> usize {
        self.roots.len()
    }

    /// Total multiplicity `N`.
    pub fn total(&self) -> usize {
        self.roots.iter().map(|r| r.multiplicity).sum()
    }

    /// The multiset with every root repeated according to its multiplicity.
    pub fn expanded(&self) -> Vec<C64> {
        self.roots
            .iter()
            .flat_map(|r| std::iter::repeat(r.z).take(r.multiplicity))
            .collect()
    }

    pub fn max_multiplicity(&self) -> usize {
        self.roots.iter().map(|r| r.multiplicity).max().unwrap_or(0)
    }

    pub fn max_modulus(&self) -> f64 {
        self.roots.iter().map(|r| r.z.norm()).fold(0.0, f64::max)
    }
}

/// Residual bound used in the post-condition of [`roots`]: `|q(α)|` must not exceed it.
pub fn residual_bound(q: &ComplexPoly, alpha: C64, tol: f64) -> f64 {
    let r = alpha.norm().max(1.0);
    let n = q.degree().unwrap_or(0) as i32;
    tol * q.coeff_norm() * r.powi(n)
}

/// Initial approximations spread over circles whose radii follow the upper
/// convex hull of `(k, ln|a_k|)`, so that roots of very different moduli get
/// starting points of the right size.
fn initial_guesses(coeffs: &[C64]) -> Vec<C64> {
    let n = coeffs.len() - 1;
    let pts: Vec<(usize, f64)> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.norm() > 0.0)
        .map(|(k, c)| (k, c.norm().ln()))
        .collect();
    let mut hull: Vec<(usize, f64)> = Vec::new();
    for &p in &pts {
        while hull.len() >= 2 {
            let (x1, y1) = hull[hull.len() - 2];
            let (x2, y2) = hull[hull.len() - 1];
            let cross = (x2 as f64 - x1 as f64) * (p.1 - y1) - (y2 - y1) * (p.0 as f64 - x1 as f64);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let mut guesses = Vec::with_capacity(n);
    for (edge, w) in hull.windows(2).enumerate() {
        let (i, yi) = w[0];
        let (j, yj) = w[1];
        let m = j - i;
        let radius = ((yi - yj) / m as f64).exp();
        let offset = 0.4 + 1.3 * edge as f64;
        for t in 0..m {
            let ang = std::f64::consts::TAU * t as f64 / m as f64 + offset;
            guesses.push(C64::from_polar(radius, ang));
        }
    }
    guesses
}

/// Simultaneous Aberth iteration on a polynomial with nonzero constant term.
fn aberth(p: &ComplexPoly) -> Result<Vec<C64>, PolyError> {
    let n = p.degree().unwrap_or(0);
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![-p.coeff(0) / p.coeff(1)]);
    }
    let mut z = initial_guesses(p.coeffs());
    let mut done = vec![false; n];
    for _ in 0..MAX_ABERTH_ITERATIONS {
        let mut all_done = true;
        for i in 0..n {
            if done[i] {
                continue;
            }
            let (v, dv) = p.eval_with_derivative(z[i]);
            if v.norm() <= p.eval_error_bound(z[i]) {
                done[i] = true;
                continue;
            }
            all_done = false;
            let ratio = v / dv;
            let sum: C64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| (z[i] - z[j]).inv())
                .filter(|s| s.is_finite())
                .sum();
            let mut w = ratio / (C64::new(1.0, 0.0) - ratio * sum);
            if !w.is_finite() {
                w = ratio;
            }
            if !w.is_finite() {
                // stationary point of p: nudge
                w = C64::new(1e-8 * (1.0 + z[i].norm()), 0.0);
            }
            z[i] -= w;
            if w.norm() <= 2.0 * f64::EPSILON * z[i].norm() {
                done[i] = true;
            }
        }
        if all_done {
            return Ok(z);
        }
    }
    if done.iter().all(|&d| d) {
        Ok(z)
    } else {
        Err(PolyError::NonConvergence {
            iterations: MAX_ABERTH_ITERATIONS,
        })
    }
}

/// All roots of `q`, clustered.
///
/// Approximations closer than `tol` are merged. Approximations whose
/// Weierstrass inclusion disks overlap are merged as well: such a connected
/// group provably encloses as many roots as it has members, and this is what
/// lets a numerically smeared multiple root come back as a single location.
pub fn roots(q: &ComplexPoly, tol: f64) -> Result<RootSet, PolyError> {
    let n = q.degree().ok_or(PolyError::ZeroPolynomial)?;
    if n == 0 {
        return Err(PolyError::ConstantPolynomial);
    }
    let zero_mult = q.coeffs().iter().take_while(|c| c.norm() == 0.0).count();
    let reduced = ComplexPoly::new(q.coeffs()[zero_mult..].to_vec()).monic();
    let approx = aberth(&reduced)?;

    let m = approx.len();
    let radii: Vec<f64> = (0..m)
        .map(|i| {
            let num = reduced.eval(approx[i]).norm() + reduced.eval_error_bound(approx[i]);
            let den: f64 = (0..m)
                .filter(|&j| j != i)
                .map(|j| (approx[i] - approx[j]).norm())
                .product();
            if den > 0.0 {
                m as f64 * num / den
            } else {
                0.0
            }
        })
        .collect();

    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        let mut c = i;
        while parent[c] != r {
            let next = parent[c];
            parent[c] = r;
            c = next;
        }
        r
    }
    for i in 0..m {
        for j in (i + 1)..m {
            let d = (approx[i] - approx[j]).norm();
            if d <= tol || d <= radii[i] + radii[j] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[b] = a;
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..m {
        let r = find(&mut parent, i);
        match groups.iter_mut().find(|(root, _)| *root == r) {
            Some((_, members)) => members.push(i),
            None => groups.push((r, vec![i])),
        }
    }
    let mut out: Vec<Root> = Vec::with_capacity(groups.len() + 1);
    if zero_mult > 0 {
        out.push(Root {
            z: C64::new(0.0, 0.0),
            multiplicity: zero_mult,
        });
    }
    for (_, members) in groups {
        let centroid = members.iter().map(|&i| approx[i]).sum::<C64>() / members.len() as f64;
        let mult = members.len();
        // A cluster that landed within tol of the exact zero root joins it.
        if zero_mult > 0 && centroid.norm() <= tol {
            out[0].multiplicity += mult;
            continue;
        }
        out.push(Root {
            z: centroid,
            multiplicity: mult,
        });
    }
    out.sort_by(|a, b| {
        (a.z.re, a.z.im)
            .partial_cmp(&(b.z.re, b.z.im))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(RootSet { roots: out })
}

/// Order of vanishing of `p` at `α`: the first Taylor coefficient at `α`
/// exceeding `tol` times the largest one.
pub fn vanishing_order(p: &ComplexPoly, alpha: C64, tol: f64) -> Result<usize, PolyError> {
    if p.is_zero() {
        return Err(PolyError::ZeroPolynomial);
    }
    let taylor = p.taylor_at(alpha);
    let scale = taylor.iter().map(|c| c.norm()).fold(0.0, f64::max);
    Ok(taylor
        .iter()
        .position(|c| c.norm() > tol * scale)
        .unwrap_or(taylor.len() - 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn trims_trailing_zeros() {
        let p = ComplexPoly::from_real(&[1.0, 2.0, 0.0, 0.0]);
        assert_eq!(p.degree(), Some(1));
        assert!(ComplexPoly::from_real(&[0.0]).is_zero());
        assert_eq!(ComplexPoly::zero().degree(), None);
    }

    #[test]
    fn json_round_trip() {
        let p: ComplexPoly = "[[-1,0],[0,0],[1,0]]".parse().unwrap();
        assert_eq!(p, ComplexPoly::from_real(&[-1.0, 0.0, 1.0]));
        assert_eq!(serde_json::to_string(&p).unwrap(), "[[-1.0,0.0],[0.0,0.0],[1.0,0.0]]");
    }

    #[test]
    fn from_roots_expands() {
        let p = ComplexPoly::from_roots(&[c(1.0, 0.0), c(-1.0, 0.0)]);
        assert_eq!(p, ComplexPoly::from_real(&[-1.0, 0.0, 1.0]));
        let q = ComplexPoly::from_roots(&[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(q, ComplexPoly::from_real(&[0.0, 1.0, -2.0, 1.0]));
    }

    #[test]
    fn derivative_and_taylor() {
        let p = ComplexPoly::from_real(&[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(p.derivative(1), ComplexPoly::from_real(&[1.0, 2.0, 3.0]));
        assert_eq!(p.derivative(3), ComplexPoly::from_real(&[6.0]));
        assert!(p.derivative(4).is_zero());
        // (z-1)^3 at 1 has Taylor coefficients (0,0,0,1)
        let q = ComplexPoly::from_real(&[-1.0, 3.0, -3.0, 1.0]);
        let t = q.taylor_at(c(1.0, 0.0));
        assert!(t[..3].iter().all(|x| x.norm() < 1e-14));
        assert!((t[3] - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn roots_of_z_squared_minus_one() {
        let p = ComplexPoly::from_real(&[-1.0, 0.0, 1.0]);
        let s = roots(&p, p.default_tol()).unwrap();
        assert_eq!(s.distinct(), 2);
        let zs: Vec<f64> = s.roots().iter().map(|r| r.z.re).collect();
        assert!((zs[0] + 1.0).abs() < 1e-14 && (zs[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn double_root_is_merged() {
        let p = ComplexPoly::from_real(&[1.0, -2.0, 1.0]);
        let s = roots(&p, 1e-6).unwrap();
        assert_eq!(s.distinct(), 1);
        assert_eq!(s.roots()[0].multiplicity, 2);
        assert!((s.roots()[0].z - c(1.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn triple_root_is_merged_with_default_tol() {
        let p = ComplexPoly::from_roots(&[c(0.3, 0.1); 3]).mul(&ComplexPoly::from_roots(&[c(-0.5, 0.2)]));
        let s = roots(&p, p.default_tol()).unwrap();
        assert_eq!(s.distinct(), 2);
        assert_eq!(s.max_multiplicity(), 3);
    }

    #[test]
    fn exact_zero_roots_are_factored() {
        let p = ComplexPoly::from_roots(&[c(0.0, 0.0), c(0.0, 0.0), c(0.5, 0.0)]);
        let s = roots(&p, p.default_tol()).unwrap();
        assert_eq!(s.roots()[0].z, c(0.0, 0.0));
        assert_eq!(s.roots()[0].multiplicity, 2);
    }

    #[test]
    fn roots_rejects_degenerate_input() {
        assert_eq!(roots(&ComplexPoly::zero(), 1e-7), Err(PolyError::ZeroPolynomial));
        assert_eq!(roots(&ComplexPoly::one(), 1e-7), Err(PolyError::ConstantPolynomial));
    }

    #[test]
    fn multiscale_roots_are_resolved() {
        let planted = [c(0.0, 0.0), c(1e-6, 0.0), c(1.0, 0.0)];
        let p = ComplexPoly::from_roots(&planted);
        let s = roots(&p, 1e-9).unwrap();
        assert_eq!(s.distinct(), 3);
        for z in planted {
            assert!(s.roots().iter().any(|r| (r.z - z).norm() < 1e-12));
        }
    }

    #[test]
    fn vanishing_orders() {
        let q = ComplexPoly::from_real(&[-1.0, 3.0, -3.0, 1.0]);
        assert_eq!(vanishing_order(&q, c(1.0, 0.0), 1e-8).unwrap(), 3);
        assert_eq!(vanishing_order(&ComplexPoly::from_real(&[0.0, 1.0]), c(0.0, 0.0), 1e-8).unwrap(), 1);
        assert_eq!(vanishing_order(&ComplexPoly::one(), c(5.0, 0.0), 1e-8).unwrap(), 0);
        assert_eq!(
            vanishing_order(&ComplexPoly::zero(), c(0.0, 0.0), 1e-8),
            Err(PolyError::ZeroPolynomial)
        );
    }
}
