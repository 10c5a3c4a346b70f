//! Importance-sampled Monte Carlo on disks and polydisks.
//!
//! Samples are drawn in fixed-size chunks, each from its own ChaCha stream
//! keyed by `(seed, chunk index)`, and the chunk sums are combined in order.
//! Results are therefore reproducible for a given seed whatever the thread count.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::integrand::Integrand;
use super::OracleResult;
use crate::polynomial::C64;

pub const DEFAULT_MC_SAMPLES: usize = 200_000;
const CHUNK: usize = 4096;
const UNIFORM_WEIGHT: f64 = 0.1;
/// Steepest power-law proposal; keeps the weights square integrable for local exponents below 1.985.
const STEEP_EXPONENT: f64 = 1.97;

/// Radial power-law density `(2−a)/(2π R^{2−a}) |z − c|^{−a}` on `B_R(c)`.
#[derive(Debug, Clone, Copy)]
struct PowerLaw {
    center: C64,
    a: f64,
    radius: f64,
}

impl PowerLaw {
    /// Density at `base + w`; exact in `w` when `base` is this centre.
    fn density(&self, base: C64, w: C64) -> f64 {
        let r = ((base - self.center) + w).norm();
        if r >= self.radius {
            return 0.0;
        }
        (2.0 - self.a) / (TAU * self.radius.powf(2.0 - self.a)) * r.powf(-self.a)
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> (C64, C64) {
        let u: f64 = rng.gen();
        let r = self.radius * u.powf(1.0 / (2.0 - self.a));
        (self.center, C64::from_polar(r, rng.gen::<f64>() * TAU))
    }
}

/// Mixture of a uniform density on `B_Λ(c0)` and weighted power laws.
#[derive(Debug, Clone)]
struct Mixture {
    origin: C64,
    lambda: f64,
    uniform: f64,
    parts: Vec<(f64, PowerLaw)>,
}

impl Mixture {
    fn density(&self, base: C64, w: C64) -> f64 {
        let inside = ((base - self.origin) + w).norm() < self.lambda;
        let mut q = if inside {
            self.uniform / (PI * self.lambda * self.lambda)
        } else {
            0.0
        };
        for (wt, p) in &self.parts {
            q += wt * p.density(base, w);
        }
        q
    }

    /// A draw as `(base, offset)`; the point is `base + offset`.
    fn sample<R: Rng>(&self, rng: &mut R) -> (C64, C64) {
        let mut u: f64 = rng.gen::<f64>() - self.uniform;
        if u < 0.0 || self.parts.is_empty() {
            let r = self.lambda * rng.gen::<f64>().sqrt();
            return (self.origin, C64::from_polar(r, rng.gen::<f64>() * TAU));
        }
        for (w, p) in &self.parts {
            if u < *w {
                return p.sample(rng);
            }
            u -= w;
        }
        self.parts[self.parts.len() - 1].1.sample(rng)
    }

    /// Uniform on `B_Λ(origin)` plus two power laws at each centre.
    fn around(origin: C64, lambda: f64, centers: &[(C64, f64)]) -> Self {
        let singular: Vec<&(C64, f64)> = centers.iter().filter(|c| c.1 > 0.0).collect();
        if singular.is_empty() {
            return Self {
                origin,
                lambda,
                uniform: 1.0,
                parts: Vec::new(),
            };
        }
        let share = (1.0 - UNIFORM_WEIGHT) / (2 * singular.len()) as f64;
        let mut parts = Vec::new();
        for &&(c, s) in &singular {
            let radius = lambda + (c - origin).norm();
            let matched = s.clamp(0.5, STEEP_EXPONENT);
            parts.push((share, PowerLaw { center: c, a: matched, radius }));
            parts.push((share, PowerLaw { center: c, a: STEEP_EXPONENT, radius }));
        }
        Self {
            origin,
            lambda,
            uniform: UNIFORM_WEIGHT,
            parts,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn merge(self, o: Self) -> Self {
        Self {
            n: self.n + o.n,
            sum: self.sum + o.sum,
            sum_sq: self.sum_sq + o.sum_sq,
        }
    }

    fn mean_and_stderr(&self) -> (f64, f64) {
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = ((self.sum_sq / n - mean * mean) * n / (n - 1.0).max(1.0)).max(0.0);
        (mean, (var / n).sqrt())
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn chunk_sizes(n: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(CHUNK))
        .map(|c| (c, CHUNK.min(n - c * CHUNK)))
        .collect()
}

/// Monte Carlo estimate of `∫_{B_Λ} f dV`.
///
/// `diverging` is decided structurally: some centre inside the disk has
/// local exponent at least 2. Sampling cannot separate `r^{−2}` from
/// `r^{−1.999}`, so it is not asked to.
pub fn integrate_disk_mc(f: &dyn Integrand, lambda: f64, n_samples: usize, seed: u64) -> OracleResult {
    let centers: Vec<(C64, f64)> = f
        .centers()
        .into_iter()
        .filter(|c| c.z.norm() < lambda)
        .map(|c| (c.z, c.exponent))
        .collect();
    let worst = centers.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    if worst >= 2.0 {
        let mut r = OracleResult::divergent(worst - 2.0, "qmc", 0);
        r.seed = Some(seed);
        return r;
    }
    let mix = Mixture::around(C64::new(0.0, 0.0), lambda, &centers);
    let moments = chunk_sizes(n_samples)
        .into_par_iter()
        .map(|(c, len)| {
            let mut rng = chunk_rng(seed, c);
            let mut m = Moments::default();
            for _ in 0..len {
                let (base, w) = mix.sample(&mut rng);
                let x = if (base + w).norm() < lambda {
                    let q = mix.density(base, w);
                    if q > 0.0 {
                        f.eval_offset(base, w) / q
                    } else {
                        0.0
                    }
                } else {
                    0.0
                };
                m.push(if x.is_finite() { x } else { 0.0 });
            }
            m
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Moments::default(), Moments::merge);
    let (value, stderr) = moments.mean_and_stderr();
    OracleResult {
        value,
        stderr,
        diverging: false,
        growth_exponent: None,
        scheme: "qmc".into(),
        seed: Some(seed),
        evaluations: n_samples as u64,
        cells: Vec::new(),
    }
}

/// Importance layer for the last variable: given the other coordinates,
/// the points where the integrand is singular in that variable.
pub type SliceRoots<'a> = &'a (dyn Fn(&[C64]) -> Vec<C64> + Sync);

#[derive(Clone, Copy)]
pub struct PolydiskOptions<'a> {
    pub slice_roots: Option<SliceRoots<'a>>,
    /// Regularization levels `μ` used for the divergence fit, largest first.
    pub mu_ladder: &'a [f64],
    /// Slope of `ln I_μ` against `ln(1/μ)` above which the integral is called divergent.
    pub growth_threshold: f64,
}

pub const DEFAULT_MU_LADDER: [f64; 6] = [1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];

impl Default for PolydiskOptions<'_> {
    fn default() -> Self {
        Self {
            slice_roots: None,
            mu_ladder: &DEFAULT_MU_LADDER,
            growth_threshold: 0.04,
        }
    }
}

/// Monte Carlo estimate of `∫ (Σ|f_j|²)^{−δ/2}` over the polydisk with the
/// given radii. `norm_sq` returns `Σ|f_j(z)|²`.
///
/// The proposal is a product of per-coordinate mixtures concentrated at the
/// origin, optionally with the last coordinate drawn near the slice roots.
/// Divergence is judged from the growth of the regularized integrals
/// `∫ (Σ|f_j|² + μ²)^{−δ/2}` along `mu_ladder`, estimated on the same samples.
pub fn integrate_polydisk_mc(
    norm_sq: &(dyn Fn(&[C64]) -> f64 + Sync),
    delta: f64,
    radii: &[f64],
    n_samples: usize,
    seed: u64,
    opts: &PolydiskOptions,
) -> OracleResult {
    let n = radii.len();
    let origin = C64::new(0.0, 0.0);
    let coords: Vec<Mixture> = radii
        .iter()
        .map(|&r| Mixture {
            origin,
            lambda: r,
            uniform: 0.3,
            parts: vec![
                (0.35, PowerLaw { center: origin, a: 1.0, radius: r }),
                (0.35, PowerLaw { center: origin, a: 1.9, radius: r }),
            ],
        })
        .collect();
    let ladder = opts.mu_ladder;
    let levels = ladder.len() + 1;
    let per_chunk: Vec<Vec<Moments>> = chunk_sizes(n_samples)
        .into_par_iter()
        .map(|(c, len)| {
            let mut rng = chunk_rng(seed, c);
            let mut m = vec![Moments::default(); levels];
            let mut z = vec![origin; n];
            for _ in 0..len {
                let mut q = 1.0;
                for i in 0..n {
                    let last = i + 1 == n;
                    let slice = match (last, opts.slice_roots) {
                        (true, Some(roots)) => Some(Mixture::around(origin, radii[i], &slice_centres(roots(&z[..i])))),
                        _ => None,
                    };
                    let mix = slice.as_ref().unwrap_or(&coords[i]);
                    let (base, w) = mix.sample(&mut rng);
                    z[i] = base + w;
                    if z[i].norm() >= radii[i] {
                        q = 0.0;
                        break;
                    }
                    q *= mix.density(base, w);
                }
                if q <= 0.0 {
                    for mi in m.iter_mut() {
                        mi.push(0.0);
                    }
                    continue;
                }
                let s = norm_sq(&z);
                let w = |mu: f64| {
                    let x = (s + mu * mu).powf(-0.5 * delta) / q;
                    if x.is_finite() {
                        x
                    } else {
                        0.0
                    }
                };
                m[0].push(w(0.0));
                for (k, &mu) in ladder.iter().enumerate() {
                    m[k + 1].push(w(mu));
                }
            }
            m
        })
        .collect();
    let total: Vec<Moments> = (0..levels)
        .map(|k| per_chunk.iter().map(|m| m[k]).fold(Moments::default(), Moments::merge))
        .collect();
    let (value, stderr) = total[0].mean_and_stderr();
    let growth = ladder_slope(ladder, &total[1..]);
    let scheme = "polydisk-mc";
    if growth > opts.growth_threshold {
        let mut r = OracleResult::divergent(growth, scheme, n_samples);
        r.seed = Some(seed);
        return r;
    }
    OracleResult {
        value,
        stderr,
        diverging: false,
        growth_exponent: None,
        scheme: scheme.into(),
        seed: Some(seed),
        evaluations: n_samples as u64,
        cells: Vec::new(),
    }
}

fn slice_centres(roots: Vec<C64>) -> Vec<(C64, f64)> {
    roots.into_iter().map(|z| (z, 1.0)).collect()
}

/// Least-squares slope of `ln I_μ` against `ln(1/μ)` over the last three levels.
fn ladder_slope(ladder: &[f64], moments: &[Moments]) -> f64 {
    let pts: Vec<(f64, f64)> = ladder
        .iter()
        .zip(moments)
        .map(|(mu, m)| (-mu.ln(), m.mean_and_stderr().0.ln()))
        .rev()
        .take(3)
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::integrand::{ArpIntegrand, Factored, FnIntegrand};

    #[test]
    fn constant_and_power_law() {
        let one = FnIntegrand {
            f: |_z: C64| 1.0,
            centers: vec![],
        };
        let r = integrate_disk_mc(&one, 1.5, 20_000, 7);
        assert!((r.value - PI * 2.25).abs() <= 3.0 * r.stderr + 1e-12);
        let f = ArpIntegrand::rational(
            Factored::from_roots(1.0, &[]),
            Factored::from_roots(1.0, &[C64::new(0.0, 0.0)]),
            0.0,
            1.0,
        );
        let r = integrate_disk_mc(&f, 1.0, 50_000, 11);
        assert!((r.value - TAU).abs() <= 3.0 * r.stderr, "{r:?}");
        let again = integrate_disk_mc(&f, 1.0, 50_000, 11);
        assert_eq!(r.value, again.value);
    }

    #[test]
    fn product_polydisk_matches_radial_product() {
        let f = |z: &[C64]| (z[0] * z[1]).norm_sqr();
        let r = integrate_polydisk_mc(&f, 1.0, &[1.0, 1.0], 100_000, 3, &PolydiskOptions::default());
        assert!(!r.diverging, "{r:?}");
        assert!((r.value - TAU * TAU).abs() <= 3.0 * r.stderr, "{r:?}");
    }
}
