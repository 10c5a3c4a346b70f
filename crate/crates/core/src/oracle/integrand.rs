use crate::polynomial::{roots, ComplexPoly, PolyError, C64};

/// A point the quadrature should centre a cell on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Center {
    pub z: C64,
    /// Structural local exponent `s`: the integrand behaves like `|z − c|^{−s}` nearby.
    pub exponent: f64,
    /// Radius the inner annuli must reach before the power-law fit is trusted.
    pub floor: f64,
}

/// A nonnegative integrand on the plane.
pub trait Integrand: Sync {
    /// Value at `base + w`. Implementations may exploit that `w` is small
    /// and `base` is a known centre to avoid cancellation.
    fn eval_offset(&self, base: C64, w: C64) -> f64;

    fn eval(&self, z: C64) -> f64 {
        self.eval_offset(z, C64::new(0.0, 0.0))
    }

    fn centers(&self) -> Vec<Center>;
}

/// `|p|` in factored form `|lead| ∏ |z − β|^m`, accurate near clustered roots.
#[derive(Debug, Clone, PartialEq)]
pub struct Factored {
    lead: f64,
    roots: Vec<(C64, usize)>,
}

impl Factored {
    pub fn from_roots(lead: f64, points: &[C64]) -> Self {
        let mut roots: Vec<(C64, usize)> = Vec::new();
        for &z in points {
            match roots.iter_mut().find(|(r, _)| *r == z) {
                Some((_, m)) => *m += 1,
                None => roots.push((z, 1)),
            }
        }
        Self { lead: lead.abs(), roots }
    }

    /// Factors `p` numerically. The zero polynomial has `lead = 0`.
    pub fn from_poly(p: &ComplexPoly) -> Result<Self, PolyError> {
        match p.degree() {
            None => Ok(Self {
                lead: 0.0,
                roots: Vec::new(),
            }),
            Some(0) => Ok(Self {
                lead: p.coeff(0).norm(),
                roots: Vec::new(),
            }),
            Some(_) => {
                let tol = 1e-12 * (1.0 + p.monic().coeff_norm());
                let rs = roots(p, tol)?;
                Ok(Self {
                    lead: p.leading().unwrap_or_default().norm(),
                    roots: rs.roots().iter().map(|r| (r.z, r.multiplicity)).collect(),
                })
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.lead == 0.0
    }

    pub fn lead(&self) -> f64 {
        self.lead
    }

    pub fn roots(&self) -> &[(C64, usize)] {
        &self.roots
    }

    pub fn degree(&self) -> usize {
        self.roots.iter().map(|r| r.1).sum()
    }

    /// `ln|p(base + w)|`, `−∞` at a root.
    pub fn ln_abs_offset(&self, base: C64, w: C64) -> f64 {
        if self.lead == 0.0 {
            return f64::NEG_INFINITY;
        }
        let mut acc = 1.0f64;
        let mut ln_acc = 0.0;
        for &(b, m) in &self.roots {
            let d = ((base - b) + w).norm_sqr();
            if d == 0.0 {
                return f64::NEG_INFINITY;
            }
            acc *= if m == 1 { d } else { d.powi(m as i32) };
            if !(1e-200..=1e200).contains(&acc) {
                ln_acc += acc.ln();
                acc = 1.0;
            }
        }
        0.5 * (ln_acc + acc.ln()) + self.lead.ln()
    }

    /// Multiplicity of the root at `z` (roots within `tol`).
    pub fn order_at(&self, z: C64, tol: f64) -> usize {
        self.roots
            .iter()
            .filter(|(b, _)| (b - z).norm() <= tol)
            .map(|r| r.1)
            .sum()
    }

    /// `|p^{(m)}(z)/m!|` for `m = order_at(z)`: the leading local coefficient.
    pub fn local_coefficient(&self, z: C64, tol: f64) -> f64 {
        self.roots
            .iter()
            .filter(|(b, _)| (b - z).norm() > tol)
            .fold(self.lead, |acc, &(b, m)| acc * (z - b).norm().powi(m as i32))
    }
}

/// How several denominator terms are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenomNorm {
    /// `(Σ|Q_j|²)^{1/2}`
    Euclid,
    /// `Σ|Q_j|`
    Sum,
}

/// `(Σ|P_i|²)^{ε/2} / (‖(Q_j)‖ + μ)^δ` with every polynomial in factored form.
#[derive(Debug, Clone)]
pub struct ArpIntegrand {
    pub num: Vec<Factored>,
    pub den: Vec<Factored>,
    pub eps: f64,
    pub delta: f64,
    pub norm: DenomNorm,
    pub mu: f64,
}

fn log_norm(terms: &[Factored], base: C64, w: C64, norm: DenomNorm) -> f64 {
    let logs: Vec<f64> = terms.iter().map(|t| t.ln_abs_offset(base, w)).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    match norm {
        DenomNorm::Euclid => top + 0.5 * logs.iter().map(|l| (2.0 * (l - top)).exp()).sum::<f64>().ln(),
        DenomNorm::Sum => top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln(),
    }
}

impl ArpIntegrand {
    /// `|P|^ε / |Q|^δ`.
    pub fn rational(p: Factored, q: Factored, eps: f64, delta: f64) -> Self {
        Self {
            num: vec![p],
            den: vec![q],
            eps,
            delta,
            norm: DenomNorm::Euclid,
            mu: 0.0,
        }
    }

    pub fn from_polys(p: &ComplexPoly, q: &ComplexPoly, eps: f64, delta: f64) -> Result<Self, PolyError> {
        Ok(Self::rational(Factored::from_poly(p)?, Factored::from_poly(q)?, eps, delta))
    }

    fn center_tol(z: C64) -> f64 {
        1e-13 * (1.0 + z.norm())
    }
}

impl Integrand for ArpIntegrand {
    fn eval_offset(&self, base: C64, w: C64) -> f64 {
        let ln_num = if self.eps == 0.0 {
            if self.num.iter().all(Factored::is_zero) {
                return 0.0;
            }
            0.0
        } else {
            let l = log_norm(&self.num, base, w, DenomNorm::Euclid);
            if l == f64::NEG_INFINITY {
                return 0.0;
            }
            l
        };
        if self.delta == 0.0 {
            return (self.eps * ln_num).exp();
        }
        let ln_den_raw = log_norm(&self.den, base, w, self.norm);
        let ln_den = if self.mu > 0.0 {
            if ln_den_raw == f64::NEG_INFINITY {
                self.mu.ln()
            } else {
                let a = ln_den_raw.max(self.mu.ln());
                a + ((ln_den_raw - a).exp() + (self.mu.ln() - a).exp()).ln()
            }
        } else {
            ln_den_raw
        };
        if ln_den == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        (self.eps * ln_num - self.delta * ln_den).exp()
    }

    fn centers(&self) -> Vec<Center> {
        let mut pts: Vec<C64> = Vec::new();
        for t in self.num.iter().chain(&self.den) {
            for &(z, _) in t.roots() {
                if !pts.iter().any(|p| (p - z).norm() <= Self::center_tol(z)) {
                    pts.push(z);
                }
            }
        }
        pts.into_iter()
            .map(|z| {
                let tol = Self::center_tol(z);
                let num_order = if self.eps == 0.0 {
                    0
                } else {
                    self.num
                        .iter()
                        .filter(|t| !t.is_zero())
                        .map(|t| t.order_at(z, tol))
                        .min()
                        .unwrap_or(0)
                };
                let den_order = self.den.iter().map(|t| t.order_at(z, tol)).min().unwrap_or(0);
                let mut floor = 0.0;
                let den_exp = if self.mu > 0.0 && den_order > 0 {
                    let c = self
                        .den
                        .iter()
                        .filter(|t| t.order_at(z, tol) == den_order)
                        .map(|t| t.local_coefficient(z, tol))
                        .fold(0.0, f64::max);
                    if c > 0.0 {
                        floor = 1e-2 * (self.mu / c).powf(1.0 / den_order as f64);
                    }
                    0.0
                } else {
                    den_order as f64 * self.delta
                };
                Center {
                    z,
                    exponent: den_exp - num_order as f64 * self.eps,
                    floor,
                }
            })
            .collect()
    }
}

/// An integrand given by a closure and an explicit list of centres.
pub struct FnIntegrand<F: Fn(C64) -> f64 + Sync> {
    pub f: F,
    pub centers: Vec<Center>,
}

impl<F: Fn(C64) -> f64 + Sync> Integrand for FnIntegrand<F> {
    fn eval_offset(&self, base: C64, w: C64) -> f64 {
        (self.f)(base + w)
    }

    fn centers(&self) -> Vec<Center> {
        self.centers.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factored_matches_direct_evaluation() {
        let roots = [C64::new(0.1, 0.2), C64::new(-0.3, 0.0), C64::new(-0.3, 0.0)];
        let p = ComplexPoly::from_roots(&roots).scale(C64::new(2.0, 0.0));
        let f = Factored::from_roots(2.0, &roots);
        let z = C64::new(0.37, -0.11);
        assert!((f.ln_abs_offset(z, C64::new(0.0, 0.0)).exp() - p.eval(z).norm()).abs() < 1e-14);
        let g = Factored::from_poly(&p).unwrap();
        assert_eq!(g.degree(), 3, "{g:?}");
        assert!((g.ln_abs_offset(z, C64::new(0.0, 0.0)) - f.ln_abs_offset(z, C64::new(0.0, 0.0))).abs() < 1e-7);
    }

    #[test]
    fn arp_centres_carry_local_exponents() {
        let q = Factored::from_roots(1.0, &[C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.5, 0.0)]);
        let p = Factored::from_roots(1.0, &[C64::new(0.0, 0.0)]);
        let f = ArpIntegrand::rational(p, q, 0.5, 1.5);
        let cs = f.centers();
        let at0 = cs.iter().find(|c| c.z == C64::new(0.0, 0.0)).unwrap();
        assert!((at0.exponent - 2.5).abs() < 1e-15);
    }
}
