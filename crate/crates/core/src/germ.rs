//! Multivariate polynomial germs at the origin and one-parameter families of them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::polynomial::{complex_pair, ComplexPoly, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub exp: Vec<u32>,
    #[serde(with = "complex_pair")]
    pub coef: C64,
}

/// A polynomial in `n` variables, read as a truncated power series at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GermRepr", into = "GermRepr")]
pub struct Germ {
    n: usize,
    /// Exponent vector to coefficient; zero coefficients are dropped.
    terms: BTreeMap<Vec<u32>, C64>,
}

#[derive(Serialize, Deserialize)]
struct GermRepr {
    n: usize,
    terms: Vec<Term>,
}

impl TryFrom<GermRepr> for Germ {
    type Error = String;

    fn try_from(r: GermRepr) -> Result<Self, String> {
        if let Some(t) = r.terms.iter().find(|t| t.exp.len() != r.n) {
            return Err(format!("exponent {:?} has length {}, expected {}", t.exp, t.exp.len(), r.n));
        }
        Ok(Germ::new(r.n, r.terms.into_iter().map(|t| (t.exp, t.coef))))
    }
}

impl From<Germ> for GermRepr {
    fn from(g: Germ) -> Self {
        GermRepr {
            n: g.n,
            terms: g.terms.into_iter().map(|(exp, coef)| Term { exp, coef }).collect(),
        }
    }
}

impl Germ {
    /// Sums coefficients of repeated exponents. Panics if an exponent has the wrong length.
    pub fn new(n: usize, terms: impl IntoIterator<Item = (Vec<u32>, C64)>) -> Self {
        let mut map: BTreeMap<Vec<u32>, C64> = BTreeMap::new();
        for (e, c) in terms {
            assert_eq!(e.len(), n, "exponent length");
            *map.entry(e).or_default() += c;
        }
        map.retain(|_, c| *c != C64::new(0.0, 0.0));
        Self { n, terms: map }
    }

    /// Terms with real coefficients, e.g. `Germ::real(2, &[(&[2, 0], 1.0), (&[0, 3], 1.0)])` for `z_1² + z_2³`.
    pub fn real(n: usize, terms: &[(&[u32], f64)]) -> Self {
        Self::new(n, terms.iter().map(|(e, c)| (e.to_vec(), C64::new(*c, 0.0))))
    }

    pub fn zero(n: usize) -> Self {
        Self {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &C64)> {
        self.terms.iter()
    }

    pub fn eval(&self, z: &[C64]) -> C64 {
        self.terms
            .iter()
            .map(|(e, c)| e.iter().zip(z).fold(*c, |acc, (&k, &x)| acc * x.powu(k)))
            .sum()
    }

    /// Largest total degree.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    /// Smallest total degree with a nonzero coefficient.
    pub fn lowest_degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.iter().sum()).min()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(self.n, self.terms.iter().chain(&other.terms).map(|(e, c)| (e.clone(), *c)))
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::new(self.n, self.terms.iter().map(|(e, c)| (e.clone(), c * s)))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                out.push((e1.iter().zip(e2).map(|(a, b)| a + b).collect(), c1 * c2));
            }
        }
        Self::new(self.n, out)
    }

    fn linear(n: usize, coefs: &[C64]) -> Self {
        Self::new(
            n,
            coefs.iter().enumerate().map(|(j, &c)| {
                let mut e = vec![0; n];
                e[j] = 1;
                (e, c)
            }),
        )
    }

    /// `f(U w)`: the germ in the coordinates `z = U w`, with `u[i][j] = U_ij`.
    pub fn compose_linear(&self, u: &[Vec<C64>]) -> Self {
        let forms: Vec<Germ> = u.iter().map(|row| Self::linear(self.n, row)).collect();
        let one = Self::new(self.n, [(vec![0; self.n], C64::new(1.0, 0.0))]);
        let mut out = Self::zero(self.n);
        for (e, c) in &self.terms {
            let mut t = one.scale(*c);
            for (form, &k) in forms.iter().zip(e) {
                for _ in 0..k {
                    t = t.mul(form);
                }
            }
            out = out.add(&t);
        }
        out
    }

    /// `z_n ↦ f(z′, z_n)` for fixed leading coordinates `z′`.
    pub fn slice(&self, z_prime: &[C64]) -> ComplexPoly {
        let last = self.n - 1;
        let deg = self.terms.keys().map(|e| e[last]).max().unwrap_or(0) as usize;
        let mut coeffs = vec![C64::new(0.0, 0.0); deg + 1];
        for (e, c) in &self.terms {
            let w = e[..last].iter().zip(z_prime).fold(*c, |acc, (&k, &x)| acc * x.powu(k));
            coeffs[e[last] as usize] += w;
        }
        ComplexPoly::new(coeffs)
    }

    /// Degree in the last variable.
    pub fn degree_in_last(&self) -> u32 {
        self.terms.keys().map(|e| e[self.n - 1]).max().unwrap_or(0)
    }

    /// Degree in the first `n − 1` variables jointly.
    pub fn degree_in_leading(&self) -> u32 {
        self.terms.keys().map(|e| e[..self.n - 1].iter().sum()).max().unwrap_or(0)
    }

    /// `sup |f|` over the polydisk with the given radii, bounded by `Σ |c| ∏ r_i^{e_i}`.
    pub fn sup_bound(&self, radii: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| e.iter().zip(radii).fold(c.norm(), |acc, (&k, &r)| acc * r.powi(k as i32)))
            .sum()
    }
}

/// Germs in `z ∈ ℂ^n` depending polynomially on one parameter `c`.
/// Each exponent has `n + 1` entries, the last for `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GermFamily {
    pub n: usize,
    pub terms: Vec<Term>,
}

impl GermFamily {
    pub fn specialize(&self, c: C64) -> Germ {
        Germ::new(
            self.n,
            self.terms
                .iter()
                .map(|t| (t.exp[..self.n].to_vec(), t.coef * c.powu(t.exp[self.n]))),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape_and_eval() {
        let g = Germ::real(2, &[(&[2, 0], 1.0), (&[0, 3], 1.0)]);
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"n":2,"terms":[{"exp":[0,3],"coef":[1.0,0.0]},{"exp":[2,0],"coef":[1.0,0.0]}]}"#);
        let back: Germ = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        let z = [C64::new(0.5, 0.1), C64::new(-0.2, 0.3)];
        assert!((g.eval(&z) - (z[0] * z[0] + z[1] * z[1] * z[1])).norm() < 1e-15);
        assert!(serde_json::from_str::<Germ>(r#"{"n":2,"terms":[{"exp":[1],"coef":[1,0]}]}"#).is_err());
    }

    #[test]
    fn slices_and_composition() {
        let g = Germ::real(2, &[(&[1, 1], 1.0)]);
        assert!(g.slice(&[C64::new(0.0, 0.0)]).is_zero());
        // swapping coordinates
        let swap = vec![
            vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
            vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        ];
        let h = Germ::real(2, &[(&[2, 0], 1.0), (&[0, 3], 1.0)]).compose_linear(&swap);
        assert_eq!(h, Germ::real(2, &[(&[0, 2], 1.0), (&[3, 0], 1.0)]));
        let fam = GermFamily {
            n: 2,
            terms: vec![
                Term { exp: vec![2, 0, 0], coef: C64::new(1.0, 0.0) },
                Term { exp: vec![0, 2, 1], coef: C64::new(1.0, 0.0) },
            ],
        };
        assert_eq!(fam.specialize(C64::new(0.0, 0.0)), Germ::real(2, &[(&[2, 0], 1.0)]));
    }
}
