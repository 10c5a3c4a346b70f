//! Deterministic disk quadrature on Voronoi cells around the singular points.
//!
//! Each centre `α` owns the cell of points closer to it than to any other
//! centre. In polar coordinates about `α` the cell is `0 ≤ r ≤ R(θ)`. The
//! inner disk `r < r_0` is integrated over dyadic annuli whose contributions
//! are fitted to a power law; the fit both extrapolates the tail and decides
//! divergence. The rest of the cell is integrated adaptively in `(θ, ln r)`.

use std::f64::consts::TAU;

use rayon::prelude::*;

use super::integrand::{Center, Integrand};
use super::{CellContribution, OracleResult};
use crate::polynomial::C64;
use crate::quad::{adaptive, gauss_legendre, AdaptiveOpts};

const ANNULUS_RADIAL_NODES: usize = 6;
const ANNULUS_ANGULAR_NODES: usize = 16;
const MIN_ANNULI: usize = 12;
const MAX_ANNULI: usize = 160;
const FIT_AGREEMENT: f64 = 1e-6;
/// Fitted exponents at or above `2 − DIVERGENCE_SLACK` count as divergent.
const DIVERGENCE_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct DiskOptions {
    pub rel_target: f64,
    pub max_refinements: usize,
}

impl Default for DiskOptions {
    fn default() -> Self {
        Self {
            rel_target: 1e-2,
            max_refinements: 3,
        }
    }
}

struct InnerResult {
    value: f64,
    exponent: f64,
    diverging: bool,
    growth: f64,
    evaluations: usize,
}

fn annulus(f: &dyn Integrand, alpha: C64, r_lo: f64, r_hi: f64, nodes: &(Vec<f64>, Vec<f64>)) -> f64 {
    let (x, w) = nodes;
    let (u0, u1) = (r_lo.ln(), r_hi.ln());
    let (uc, uh) = (0.5 * (u0 + u1), 0.5 * (u1 - u0));
    let dtheta = TAU / ANNULUS_ANGULAR_NODES as f64;
    let mut total = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        let r = (uc + uh * xi).exp();
        let ring: f64 = (0..ANNULUS_ANGULAR_NODES)
            .map(|t| f.eval_offset(alpha, C64::from_polar(r, (t as f64 + 0.5) * dtheta)))
            .sum();
        total += wi * uh * r * r * ring * dtheta;
    }
    total
}

fn inner(f: &dyn Integrand, center: &Center, r0: f64) -> InnerResult {
    let nodes = gauss_legendre(ANNULUS_RADIAL_NODES);
    let mut contributions: Vec<f64> = Vec::new();
    let mut fits: Vec<f64> = Vec::new();
    let mut r_hi = r0;
    loop {
        let r_lo = 0.5 * r_hi;
        let a = annulus(f, center.z, r_lo, r_hi, &nodes);
        contributions.push(a);
        let j = contributions.len();
        if j >= 2 {
            let prev = contributions[j - 2];
            let fit = if a > 0.0 && prev > 0.0 {
                2.0 - (prev / a).log2()
            } else {
                f64::NEG_INFINITY
            };
            fits.push(fit);
        }
        r_hi = r_lo;
        if j >= MAX_ANNULI {
            break;
        }
        if j >= MIN_ANNULI && r_lo <= center.floor.max(0.0) || (j >= MIN_ANNULI && center.floor == 0.0) {
            let k = fits.len();
            let stable = k >= 3
                && (fits[k - 1] - fits[k - 2]).abs() < FIT_AGREEMENT
                && (fits[k - 2] - fits[k - 3]).abs() < FIT_AGREEMENT;
            let vanished = fits[k - 1] == f64::NEG_INFINITY && contributions[j - 1] == 0.0;
            if stable || vanished {
                break;
            }
        }
    }
    let evaluations = contributions.len() * ANNULUS_RADIAL_NODES * ANNULUS_ANGULAR_NODES;
    let exponent = *fits.last().unwrap_or(&f64::NEG_INFINITY);
    let partial: f64 = contributions.iter().sum();
    let last = *contributions.last().unwrap_or(&0.0);
    if exponent >= 2.0 - DIVERGENCE_SLACK {
        let n = contributions.len();
        let before: f64 = contributions[..n - 1].iter().sum();
        let growth = if before > 0.0 { (partial / before).log2() } else { f64::INFINITY };
        return InnerResult {
            value: f64::INFINITY,
            exponent,
            diverging: true,
            growth: if exponent - 2.0 > 1e-3 { exponent - 2.0 } else { growth },
            evaluations,
        };
    }
    let tail = if exponent == f64::NEG_INFINITY {
        0.0
    } else {
        let q = (-(2.0 - exponent)).exp2();
        last * q / (1.0 - q)
    };
    InnerResult {
        value: partial + tail,
        exponent,
        diverging: false,
        growth: 0.0,
        evaluations,
    }
}

/// Largest radius along direction `e` that stays in the cell of `alpha` and in `B_Λ`.
fn cell_radius(alpha: C64, e: C64, others: &[C64], lambda: f64) -> f64 {
    let b = (alpha * e.conj()).re;
    let mut r = -b + (b * b + lambda * lambda - alpha.norm_sqr()).max(0.0).sqrt();
    for &beta in others {
        let d = beta - alpha;
        let c = (e.conj() * d).re;
        if c > 0.0 {
            r = r.min(d.norm_sqr() / (2.0 * c));
        }
    }
    r
}

fn outer(f: &dyn Integrand, alpha: C64, others: &[C64], lambda: f64, r0: f64, tol: f64) -> (f64, f64, usize) {
    let mut evaluations = 0usize;
    let mut radial = |theta: f64| -> f64 {
        let e = C64::from_polar(1.0, theta);
        let r_max = cell_radius(alpha, e, others, lambda);
        if r_max <= r0 {
            return 0.0;
        }
        let (u0, u1) = (r0.ln(), r_max.ln());
        let pieces = ((u1 - u0) / 1.5).ceil().max(1.0) as usize;
        let breaks: Vec<f64> = (0..=pieces)
            .map(|i| u0 + (u1 - u0) * i as f64 / pieces as f64)
            .collect();
        let q = adaptive(
            |u| {
                let r = u.exp();
                f.eval_offset(alpha, e * r) * r * r
            },
            &breaks,
            AdaptiveOpts {
                abs_tol: 0.0,
                rel_tol: tol,
                max_panels: 200,
            },
        );
        evaluations += q.evaluations;
        q.value
    };
    let breaks: Vec<f64> = (0..=8).map(|i| TAU * i as f64 / 8.0).collect();
    let q = adaptive(
        &mut radial,
        &breaks,
        AdaptiveOpts {
            abs_tol: 0.0,
            rel_tol: tol,
            max_panels: 300,
        },
    );
    (q.value, q.error, evaluations)
}

fn dedupe(centers: Vec<Center>, lambda: f64) -> Vec<Center> {
    let mut out: Vec<Center> = Vec::new();
    for c in centers {
        if c.z.norm() >= lambda * (1.0 - 1e-9) || !c.z.is_finite() {
            continue;
        }
        match out.iter_mut().find(|o| (o.z - c.z).norm() <= 1e-13 * (1.0 + c.z.norm())) {
            Some(o) => {
                o.exponent = o.exponent.max(c.exponent);
                o.floor = if o.floor == 0.0 { c.floor } else { o.floor.min(c.floor.max(0.0)) };
            }
            None => out.push(c),
        }
    }
    out
}

/// Integrates a nonnegative integrand over `B_Λ`.
pub fn integrate_disk(f: &dyn Integrand, lambda: f64, opts: &DiskOptions) -> OracleResult {
    let mut centers = dedupe(f.centers(), lambda);
    let scheme = if centers.is_empty() {
        centers.push(Center {
            z: C64::new(0.0, 0.0),
            exponent: 0.0,
            floor: 0.0,
        });
        "tensor"
    } else {
        "voronoi-polar"
    };
    let points: Vec<C64> = centers.iter().map(|c| c.z).collect();

    let mut tol = opts.rel_target / 20.0;
    let mut level = 0;
    loop {
        let cells: Vec<(CellContribution, f64, usize, f64)> = centers
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                let others: Vec<C64> = points
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &z)| z)
                    .collect();
                let rho = others.iter().map(|z| (z - c.z).norm()).fold(f64::INFINITY, f64::min);
                let r0 = (rho / 8.0).min(0.5 * (lambda - c.z.norm()));
                let inn = inner(f, c, r0);
                let (out, out_err, out_evals) = outer(f, c.z, &others, lambda, r0, tol);
                (
                    CellContribution {
                        center: c.z,
                        inner: inn.value,
                        outer: out,
                        fitted_exponent: inn.exponent.is_finite().then_some(inn.exponent),
                        diverging: inn.diverging,
                    },
                    out_err,
                    inn.evaluations + out_evals,
                    inn.growth,
                )
            })
            .collect();
        let diverging = cells.iter().any(|c| c.0.diverging);
        let evaluations: usize = cells.iter().map(|c| c.2).sum();
        if diverging {
            let growth = cells
                .iter()
                .filter(|c| c.0.diverging)
                .map(|c| c.3)
                .fold(f64::NEG_INFINITY, f64::max);
            return OracleResult {
                value: f64::INFINITY,
                stderr: 0.0,
                diverging: true,
                growth_exponent: Some(growth),
                scheme: scheme.into(),
                seed: None,
                evaluations: evaluations as u64,
                cells: cells.into_iter().map(|c| c.0).collect(),
            };
        }
        let value: f64 = cells.iter().map(|c| c.0.inner + c.0.outer).sum();
        let error: f64 = cells.iter().map(|c| c.1).sum::<f64>() + 1e-6 * value;
        if error <= 0.5 * opts.rel_target * value || level >= opts.max_refinements {
            return OracleResult {
                value,
                stderr: error,
                diverging: false,
                growth_exponent: None,
                scheme: scheme.into(),
                seed: None,
                evaluations: evaluations as u64,
                cells: cells.into_iter().map(|c| c.0).collect(),
            };
        }
        tol /= 4.0;
        level += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::integrand::{ArpIntegrand, Factored, FnIntegrand};

    fn power_at_origin(delta: f64) -> ArpIntegrand {
        ArpIntegrand::rational(
            Factored::from_roots(1.0, &[]),
            Factored::from_roots(1.0, &[C64::new(0.0, 0.0)]),
            0.0,
            delta,
        )
    }

    #[test]
    fn power_law_at_origin_matches_closed_form() {
        for delta in [0.5, 1.0, 1.5] {
            let r = integrate_disk(&power_at_origin(delta), 1.0, &DiskOptions::default());
            let exact = TAU / (2.0 - delta);
            assert!((r.value / exact - 1.0).abs() < 1e-4, "δ={delta}: {r:?}");
        }
    }

    #[test]
    fn divergence_is_flagged() {
        let r = integrate_disk(&power_at_origin(2.5), 1.0, &DiskOptions::default());
        assert!(r.diverging && r.value.is_infinite());
        assert!((r.growth_exponent.unwrap() - 0.5).abs() < 1e-3);
        let log = integrate_disk(&power_at_origin(2.0), 1.0, &DiskOptions::default());
        assert!(log.diverging);
    }

    #[test]
    fn off_centre_root_and_constant() {
        let one = FnIntegrand {
            f: |_z: C64| 1.0,
            centers: vec![],
        };
        let r = integrate_disk(&one, 2.0, &DiskOptions::default());
        assert!((r.value / (4.0 * std::f64::consts::PI) - 1.0).abs() < 1e-6);
        // |z − 0.3|^{-1} over the unit disk, compared with a fine polar sum about the origin
        let f = ArpIntegrand::rational(
            Factored::from_roots(1.0, &[]),
            Factored::from_roots(1.0, &[C64::new(0.3, 0.0)]),
            0.0,
            1.0,
        );
        let r = integrate_disk(&f, 1.0, &DiskOptions::default());
        // ∫_{B_1} |z − a|^{-1} dV = 4 E(a) for |a| < 1, E the complete elliptic integral
        let e = complete_elliptic_e(0.3);
        assert!((r.value / (4.0 * e) - 1.0).abs() < 1e-4, "{} vs {}", r.value, 4.0 * e);
    }

    fn complete_elliptic_e(k: f64) -> f64 {
        // arithmetic-geometric mean iteration
        let (mut a, mut b) = (1.0f64, (1.0 - k * k).sqrt());
        let mut c_sum = 0.5 * k * k;
        let mut pow = 0.5;
        while (a - b).abs() > 1e-16 {
            let an = 0.5 * (a + b);
            let bn = (a * b).sqrt();
            let cn = 0.5 * (a - b);
            pow *= 2.0;
            c_sum += pow * cn * cn;
            a = an;
            b = bn;
        }
        std::f64::consts::FRAC_PI_2 / a * (1.0 - c_sum)
    }
}
