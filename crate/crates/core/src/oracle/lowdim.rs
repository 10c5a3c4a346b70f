//! One- and few-dimensional oracles: radial profiles, circle integrals and
//! torus integrals.

use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;

use super::mc::DEFAULT_MC_SAMPLES;
use super::{OracleError, OracleResult};
use crate::polynomial::{roots, ComplexPoly, C64};
use crate::quad::{adaptive, AdaptiveOpts};

/// `∫_0^Λ r^p / ∏(r + L_i)^δ dr/r`.
///
/// Integrated in `ln r` with breakpoints at every positive `L_i`. Below
/// `1e−8·min L_i` the integrand is a pure power and its tail is added in
/// closed form.
pub fn integrate_radial(p: f64, delta: f64, l: &[f64], lambda: f64, rel_target: f64) -> OracleResult {
    let zeros = l.iter().filter(|&&x| x == 0.0).count();
    let small_exp = p - delta * zeros as f64;
    if small_exp <= 0.0 {
        return OracleResult::divergent(-small_exp, "radial", 0);
    }
    let positive: Vec<f64> = l.iter().copied().filter(|&x| x > 0.0).collect();
    let l_min = positive.iter().copied().fold(lambda, f64::min);
    let r_tail = 1e-8 * l_min;
    let tail_coef: f64 = positive.iter().map(|x| x.powf(-delta)).product();
    let tail = tail_coef * r_tail.powf(small_exp) / small_exp;
    let (u0, u1) = (r_tail.ln(), lambda.ln());
    let mut breaks = vec![u0];
    breaks.extend(positive.iter().map(|x| x.ln()).filter(|&u| u > u0 && u < u1));
    breaks.push(u1);
    breaks.sort_by(f64::total_cmp);
    // octave-scale panels keep each GK panel on a nearly monomial stretch
    let mut fine = Vec::new();
    for w in breaks.windows(2) {
        let pieces = ((w[1] - w[0]) / 2.0).ceil().max(1.0) as usize;
        fine.extend((0..pieces).map(|i| w[0] + (w[1] - w[0]) * i as f64 / pieces as f64));
    }
    fine.push(u1);
    let q = adaptive(
        |u| {
            let r = u.exp();
            (p * u - delta * l.iter().map(|x| (r + x).ln()).sum::<f64>()).exp()
        },
        &fine,
        AdaptiveOpts::rel(rel_target * 1e-2),
    );
    OracleResult::deterministic(q.value + tail, q.error, "radial", q.evaluations)
}

/// `∫_I |P(e^{iθ})|^ε dθ` over `I = [start, start + length]`, with breakpoints
/// at the arguments of roots of `P` close to the unit circle.
pub fn integrate_circle(p: &ComplexPoly, eps: f64, start: f64, length: f64) -> Result<OracleResult, OracleError> {
    if !(length > 0.0) {
        return Err(OracleError::RangeViolation(format!("interval length {length}")));
    }
    let end = start + length;
    let mut breaks = vec![start, end];
    if p.degree().unwrap_or(0) > 0 {
        let tol = 1e-12 * (1.0 + p.monic().coeff_norm());
        let rs = roots(p, tol).map_err(|e| OracleError::RangeViolation(e.to_string()))?;
        for r in rs.roots() {
            if (r.z.norm() - 1.0).abs() < 0.1 {
                let a = r.z.arg();
                let mut t = start + (a - start).rem_euclid(TAU);
                while t < end {
                    breaks.push(t);
                    t += TAU;
                }
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let q = adaptive(
        |t| {
            let v = p.eval(C64::from_polar(1.0, t)).norm();
            if eps == 0.0 {
                1.0
            } else {
                v.powf(eps)
            }
        },
        &breaks,
        AdaptiveOpts {
            abs_tol: 1e-300,
            rel_tol: 1e-10,
            max_panels: 2000,
        },
    );
    Ok(OracleResult::deterministic(q.value, q.error, "circle", q.evaluations))
}

/// `∫_0^1 |b + c e^{2πiθ}|^{−δ} dθ`, singular only when `|b| = |c|`.
fn two_term(b: C64, c: C64, delta: f64, rel: f64) -> (f64, f64, usize) {
    if c.norm() == 0.0 {
        return (b.norm().powf(-delta), 0.0, 0);
    }
    if b.norm() == 0.0 {
        return (c.norm().powf(-delta), 0.0, 0);
    }
    // the modulus is smallest where c e^{iθ} points opposite to b
    let star = (-b / c).arg();
    let half = 0.5 * TAU;
    let q = adaptive(
        |t| (b + c * C64::from_polar(1.0, star + t)).norm().powf(-delta),
        &[-half, -1.0, -0.1, 0.0, 0.1, 1.0, half],
        AdaptiveOpts {
            abs_tol: 0.0,
            rel_tol: rel,
            max_panels: 600,
        },
    );
    (q.value / TAU, q.error / TAU, q.evaluations)
}

/// `∫_{(ℝ/ℤ)^J} |Σ a_j e^{2πiθ_j}|^{−δ} dθ` for `J ≤ 3` by nested quadrature.
///
/// One phase can be rotated away, so `J = 1` is exact, `J = 2` is a single
/// integral and `J = 3` a double one.
pub fn integrate_torus(a: &[C64], delta: f64, rel_target: f64) -> Result<OracleResult, OracleError> {
    if !(0.0..1.0).contains(&delta) {
        return Err(OracleError::RangeViolation(format!("torus integrals need 0 ≤ δ < 1, got {delta}")));
    }
    match a {
        [] => Err(OracleError::RangeViolation("no coefficients".into())),
        [a1] => Ok(OracleResult::deterministic(a1.norm().powf(-delta), 0.0, "torus", 0)),
        [a1, a2] => {
            let (v, e, n) = two_term(*a1, *a2, delta, rel_target * 1e-2);
            Ok(OracleResult::deterministic(v, e, "torus", n))
        }
        [a1, a2, a3] => {
            let (a1, a2, a3) = (*a1, *a2, *a3);
            let mut breaks = vec![0.0, TAU];
            // the inner integral is least smooth where |a1 + a2 e^{iθ}| = |a3|
            let (m1, m2) = (a1.norm(), a2.norm());
            if m1 > 0.0 && m2 > 0.0 {
                let c = (a3.norm_sqr() - m1 * m1 - m2 * m2) / (2.0 * m1 * m2);
                if c.abs() <= 1.0 {
                    let base = a1.arg() - a2.arg();
                    for t in [base + c.acos(), base - c.acos()] {
                        breaks.push(t.rem_euclid(TAU));
                    }
                }
            }
            breaks.sort_by(f64::total_cmp);
            breaks.dedup();
            let inner_rel = rel_target * 1e-3;
            let mut evals = 0usize;
            let q = adaptive(
                |t| {
                    let (v, _, n) = two_term(a1 + a2 * C64::from_polar(1.0, t), a3, delta, inner_rel);
                    evals += n;
                    v
                },
                &breaks,
                AdaptiveOpts {
                    abs_tol: 0.0,
                    rel_tol: rel_target * 1e-2,
                    max_panels: 400,
                },
            );
            Ok(OracleResult::deterministic(q.value / TAU, q.error / TAU, "torus", evals))
        }
        _ => Ok(integrate_torus_mc(a, delta, DEFAULT_MC_SAMPLES, 0x7075_7275)),
    }
}

/// Plain Monte Carlo over the torus with uniform phases.
pub fn integrate_torus_mc(a: &[C64], delta: f64, n_samples: usize, seed: u64) -> OracleResult {
    const CHUNK: usize = 4096;
    let chunks: Vec<(f64, f64)> = (0..n_samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = {
                use rand::SeedableRng;
                let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(c as u64);
                r
            };
            let len = CHUNK.min(n_samples - c * CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..len {
                let z: C64 = a.iter().map(|&aj| aj * C64::from_polar(1.0, rng.gen::<f64>() * TAU)).sum();
                let x = z.norm().powf(-delta);
                let x = if x.is_finite() { x } else { 0.0 };
                s += x;
                s2 += x * x;
            }
            (s, s2)
        })
        .collect();
    let n = n_samples as f64;
    let (s, s2) = chunks.iter().fold((0.0, 0.0), |acc, c| (acc.0 + c.0, acc.1 + c.1));
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    OracleResult {
        value: mean,
        stderr: (var / n).sqrt(),
        diverging: false,
        growth_exponent: None,
        scheme: "torus".into(),
        seed: Some(seed),
        evaluations: n_samples as u64,
        cells: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_closed_forms() {
        let r = integrate_radial(2.0, 1.0, &[0.0], 1.0, 1e-2);
        assert!((r.value - 1.0).abs() < 1e-8, "{r:?}");
        // ∫_0^1 r^{1}/(r + 1) dr/r = ln 2
        let r = integrate_radial(1.0, 1.0, &[1.0], 1.0, 1e-2);
        assert!((r.value - 2f64.ln()).abs() < 1e-8, "{r:?}");
        assert!(integrate_radial(1.0, 1.0, &[0.1, 0.0], 1.0, 1e-2).diverging);
    }

    #[test]
    fn circle_examples() {
        let one = ComplexPoly::one();
        let r = integrate_circle(&one, 1.0, 0.0, TAU).unwrap();
        assert!((r.value - TAU).abs() < 1e-12);
        let z = ComplexPoly::monomial(1);
        let r = integrate_circle(&z, 2.0, 0.0, TAU).unwrap();
        assert!((r.value - TAU).abs() < 1e-12);
        // |1 + e^{iθ}| = 2|cos(θ/2)|; ∫ 2|cos(θ/2)| dθ over a period is 8
        let p = ComplexPoly::from_real(&[1.0, 1.0]);
        let r = integrate_circle(&p, 1.0, 0.0, TAU).unwrap();
        assert!((r.value - 8.0).abs() < 1e-8, "{r:?}");
    }

    /// `∫_0^1 |1 + e^{2πiθ}|^{−δ} dθ = Γ(1−δ)/Γ(1−δ/2)²`, summed here as the
    /// hypergeometric series `Σ ((δ/2)_n / n!)²` accelerated by its tail asymptotics.
    fn equal_pair_exact(delta: f64) -> f64 {
        let a = 0.5 * delta;
        let mut term = 1.0f64;
        let mut sum = 1.0;
        let n_max = 200_000;
        for n in 0..n_max {
            let ratio = (a + n as f64) / (n as f64 + 1.0);
            term *= ratio * ratio;
            sum += term;
        }
        // term_n ~ C n^{2a−2}; remaining tail ≈ term·N/(1−2a)
        sum + term * n_max as f64 / (1.0 - 2.0 * a)
    }

    #[test]
    fn torus_two_and_three_terms() {
        let one = C64::new(1.0, 0.0);
        let r = integrate_torus(&[one], 0.5, 1e-3).unwrap();
        assert_eq!(r.value, 1.0);
        for delta in [0.3, 0.5, 0.7] {
            let r = integrate_torus(&[one, one], delta, 1e-4).unwrap();
            let exact = equal_pair_exact(delta);
            assert!((r.value / exact - 1.0).abs() < 1e-4, "δ={delta}: {} vs {exact}", r.value);
        }
        let three = [one, one, one];
        let det = integrate_torus(&three, 0.3, 1e-3).unwrap();
        let mc = integrate_torus_mc(&three, 0.3, 100_000, 5);
        assert!((det.value - mc.value).abs() <= 3.0 * (mc.stderr + det.stderr), "{det:?} {mc:?}");
        assert!(integrate_torus(&three, 1.0, 1e-3).is_err());
    }
}
