//! Cluster scales of root multisets and related symmetric-function sizes.
//!
//! For a multiset `S` of `N` points and `α ∈ S`, `L_k(α)` is the smallest
//! diameter of an `(N−k)`-element sub-multiset of `S` containing `α`. A root of
//! multiplicity `m` contributes `m` copies in every enumeration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polynomial::{complex_list, ComplexPoly, RootSet, C64};

/// Largest multiset handled by exhaustive subset enumeration.
pub const EXACT_SCALES_LIMIT: usize = 12;
pub const R_DISCRIMINANT_LIMIT: usize = 10;
pub const TUPLE_LIMIT: usize = 8;
/// Largest degree of an expanded `F_r` polynomial.
pub const F_R_DEGREE_LIMIT: usize = 5040;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScaleError {
    #[error("multiset of size {n} exceeds the enumeration limit {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("root index {0} out of range")]
    NoSuchRoot(usize),
    #[error("order {order} out of range for a multiset of size {n}")]
    OrderOutOfRange { order: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleMethod {
    Exact,
    Greedy,
}

/// One row of local scales per distinct root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleTable {
    #[serde(with = "complex_list")]
    pub roots: Vec<C64>,
    pub multiplicities: Vec<usize>,
    pub scales: Vec<Vec<f64>>,
    pub method: ScaleMethod,
}

impl ScaleTable {
    /// Exact tables up to [`EXACT_SCALES_LIMIT`], greedy beyond.
    pub fn build(s: &RootSet) -> Self {
        let method = if s.total() <= EXACT_SCALES_LIMIT {
            ScaleMethod::Exact
        } else {
            ScaleMethod::Greedy
        };
        Self::with_method(s, method).expect("exact scales within the enumeration limit")
    }

    pub fn with_method(s: &RootSet, method: ScaleMethod) -> Result<Self, ScaleError> {
        let scales = (0..s.distinct())
            .map(|i| match method {
                ScaleMethod::Exact => local_scales_exact(s, i),
                ScaleMethod::Greedy => local_scales_greedy(s, i),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            roots: s.roots().iter().map(|r| r.z).collect(),
            multiplicities: s.roots().iter().map(|r| r.multiplicity).collect(),
            scales,
            method,
        })
    }
}

/// Componentwise minimum of the local scales over all roots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsoluteScales(pub Vec<f64>);

fn position_of(s: &RootSet, alpha: usize) -> Result<(Vec<C64>, usize), ScaleError> {
    if alpha >= s.distinct() {
        return Err(ScaleError::NoSuchRoot(alpha));
    }
    let before: usize = s.roots()[..alpha].iter().map(|r| r.multiplicity).sum();
    Ok((s.expanded(), before))
}

/// `L_k(α)` for `k = 0..N` by enumeration of every sub-multiset containing `α`.
pub fn local_scales_exact(s: &RootSet, alpha: usize) -> Result<Vec<f64>, ScaleError> {
    let n = s.total();
    if n > EXACT_SCALES_LIMIT {
        return Err(ScaleError::TooLarge {
            n,
            limit: EXACT_SCALES_LIMIT,
        });
    }
    let (pts, a) = position_of(s, alpha)?;
    let others: Vec<C64> = pts
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != a)
        .map(|(_, &z)| z)
        .collect();
    let alpha_z = pts[a];
    let m = others.len();
    // best[j] is the minimal diameter of {α} ∪ (j other points)
    let mut best = vec![f64::INFINITY; m + 1];
    let mut diam = vec![0.0f64; 1 << m];
    best[0] = 0.0;
    for mask in 1usize..(1 << m) {
        let top = usize::BITS as usize - 1 - mask.leading_zeros() as usize;
        let rest = mask & !(1 << top);
        let p = others[top];
        let mut d = diam[rest].max((p - alpha_z).norm());
        let mut bits = rest;
        while bits != 0 {
            let j = bits.trailing_zeros() as usize;
            d = d.max((p - others[j]).norm());
            bits &= bits - 1;
        }
        diam[mask] = d;
        let size = mask.count_ones() as usize;
        if d < best[size] {
            best[size] = d;
        }
    }
    // L_k uses subsets with N−k elements, i.e. N−k−1 others
    Ok((0..n).map(|k| best[n - k - 1]).collect())
}

/// Farthest-first surrogate for the local scales: `|β_i − α|` for the other
/// roots sorted by decreasing distance, then a final 0.
pub fn local_scales_greedy(s: &RootSet, alpha: usize) -> Result<Vec<f64>, ScaleError> {
    let (pts, a) = position_of(s, alpha)?;
    let alpha_z = pts[a];
    let mut others: Vec<C64> = pts
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != a)
        .map(|(_, &z)| z)
        .collect();
    others.sort_by(|x, y| {
        let (dx, dy) = ((x - alpha_z).norm(), (y - alpha_z).norm());
        dy.total_cmp(&dx)
            .then(x.re.total_cmp(&y.re))
            .then(x.im.total_cmp(&y.im))
    });
    let mut out: Vec<f64> = others.iter().map(|z| (z - alpha_z).norm()).collect();
    out.push(0.0);
    Ok(out)
}

pub fn absolute_scales(s: &RootSet) -> AbsoluteScales {
    let table = ScaleTable::build(s);
    let n = s.total();
    let mins = (0..n)
        .map(|k| {
            table
                .scales
                .iter()
                .map(|row| row[k])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    AbsoluteScales(mins)
}

/// Largest product of `r` distances between disjoint pairs of points of `S`.
pub fn r_discriminant(s: &RootSet, r: usize) -> Result<f64, ScaleError> {
    let pts = s.expanded();
    let n = pts.len();
    if n > R_DISCRIMINANT_LIMIT {
        return Err(ScaleError::TooLarge {
            n,
            limit: R_DISCRIMINANT_LIMIT,
        });
    }
    if r == 0 || 2 * r > n {
        return Err(ScaleError::OrderOutOfRange { order: r, n });
    }
    let dist: Vec<Vec<f64>> = pts
        .iter()
        .map(|&p| pts.iter().map(|&q| (p - q).norm()).collect())
        .collect();
    let max_d = dist.iter().flatten().copied().fold(0.0, f64::max);

    fn search(
        dist: &[Vec<f64>],
        used: &mut [bool],
        remaining: usize,
        acc: f64,
        max_d: f64,
        best: &mut f64,
    ) {
        if remaining == 0 {
            *best = best.max(acc);
            return;
        }
        if acc * max_d.powi(remaining as i32) <= *best {
            return;
        }
        let n = used.len();
        // the lowest free index either opens a pair or is skipped
        let Some(i) = (0..n).find(|&i| !used[i]) else {
            return;
        };
        let free_after = used.iter().filter(|&&u| !u).count();
        used[i] = true;
        for j in (i + 1)..n {
            if !used[j] {
                used[j] = true;
                search(dist, used, remaining - 1, acc * dist[i][j], max_d, best);
                used[j] = false;
            }
        }
        if free_after > 2 * remaining {
            search(dist, used, remaining, acc, max_d, best);
        }
        used[i] = false;
    }

    let mut best = 0.0;
    let mut used = vec![false; n];
    search(&dist, &mut used, r, 1.0, max_d, &mut best);
    Ok(best)
}

/// `Σ_{r=1}^n |Σ_i γ_i^r|^{1/r}`, a size of the largest `|γ_i|` computable
/// from power sums alone.
pub fn power_sum_size(gamma: &[C64]) -> f64 {
    let n = gamma.len();
    let mut powers: Vec<C64> = gamma.to_vec();
    let mut total = 0.0;
    for r in 1..=n {
        let p: C64 = powers.iter().sum();
        total += p.norm().powf(1.0 / r as f64);
        for (pw, g) in powers.iter_mut().zip(gamma) {
            *pw *= g;
        }
    }
    total
}

/// Calls `visit` with every injective sequence of `len` indices below `n`.
fn for_each_injective(n: usize, len: usize, visit: &mut dyn FnMut(&[usize])) {
    fn rec(n: usize, len: usize, seq: &mut Vec<usize>, used: &mut [bool], visit: &mut dyn FnMut(&[usize])) {
        if seq.len() == len {
            visit(seq);
            return;
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                seq.push(i);
                rec(n, len, seq, used, visit);
                seq.pop();
                used[i] = false;
            }
        }
    }
    let mut used = vec![false; n];
    rec(n, len, &mut Vec::with_capacity(len), &mut used, visit);
}

fn falling_factorial(n: usize, k: usize) -> usize {
    ((n - k + 1)..=n).product()
}

/// The products `∏_ν (α_{i_ν} − α_{j_ν})` over ordered tuples of `2r`
/// distinct indices: the roots of `F_r`.
pub fn f_r_roots(s: &RootSet, r: usize) -> Result<Vec<C64>, ScaleError> {
    let pts = s.expanded();
    let n = pts.len();
    if n > TUPLE_LIMIT {
        return Err(ScaleError::TooLarge { n, limit: TUPLE_LIMIT });
    }
    if r == 0 || 2 * r > n {
        return Err(ScaleError::OrderOutOfRange { order: r, n });
    }
    let h = falling_factorial(n, 2 * r);
    if h > F_R_DEGREE_LIMIT {
        return Err(ScaleError::TooLarge {
            n: h,
            limit: F_R_DEGREE_LIMIT,
        });
    }
    let mut out = Vec::with_capacity(h);
    for_each_injective(n, 2 * r, &mut |seq| {
        let prod: C64 = (0..r).map(|v| pts[seq[v]] - pts[seq[r + v]]).product();
        out.push(prod);
    });
    Ok(out)
}

/// `F_r(T) = ∏ (T − γ_M)` over the admissible tuples `M`, expanded.
pub fn f_r_poly(s: &RootSet, r: usize) -> Result<ComplexPoly, ScaleError> {
    Ok(ComplexPoly::from_roots(&f_r_roots(s, r)?))
}

/// Both forms of the tuple product around `α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaProduct {
    /// `sup_λ ∏_{ν=0}^k |α − α_{i_ν}|` over injective index tuples.
    pub sup: f64,
    /// The same products summed over all injective tuples.
    pub sum: f64,
}

pub fn sigma_scale_product(s: &RootSet, alpha: usize, k: usize) -> Result<SigmaProduct, ScaleError> {
    let (pts, a) = position_of(s, alpha)?;
    let n = pts.len();
    if n > TUPLE_LIMIT {
        return Err(ScaleError::TooLarge { n, limit: TUPLE_LIMIT });
    }
    if k + 2 > n.max(1) && !(n == 1 && k == 0) {
        return Err(ScaleError::OrderOutOfRange { order: k, n });
    }
    let alpha_z = pts[a];
    let d: Vec<f64> = pts.iter().map(|&p| (p - alpha_z).norm()).collect();
    let mut sup = 0.0f64;
    let mut sum = 0.0;
    for_each_injective(n, k + 1, &mut |seq| {
        let prod: f64 = seq.iter().map(|&i| d[i]).product();
        sup = sup.max(prod);
        sum += prod;
    });
    Ok(SigmaProduct { sup, sum })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(points: &[(f64, f64)]) -> RootSet {
        RootSet::from_multiset(&points.iter().map(|&(a, b)| C64::new(a, b)).collect::<Vec<_>>())
    }

    fn index_of(s: &RootSet, z: C64) -> usize {
        s.roots().iter().position(|r| r.z == z).unwrap()
    }

    #[test]
    fn exact_scales_small_examples() {
        let s = set(&[(0.0, 0.0), (1.0, 0.0), (1.0, 0.0)]);
        let i0 = index_of(&s, C64::new(0.0, 0.0));
        let i1 = index_of(&s, C64::new(1.0, 0.0));
        assert_eq!(local_scales_exact(&s, i0).unwrap(), vec![1.0, 1.0, 0.0]);
        assert_eq!(local_scales_exact(&s, i1).unwrap(), vec![1.0, 0.0, 0.0]);
        let single = set(&[(0.3, 0.2); 4]);
        assert_eq!(local_scales_exact(&single, 0).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn greedy_scales_small_examples() {
        let s = set(&[(0.0, 0.0), (1.0, 0.0), (1.0, 0.0)]);
        let i1 = index_of(&s, C64::new(1.0, 0.0));
        assert_eq!(local_scales_greedy(&s, i1).unwrap(), vec![1.0, 0.0, 0.0]);
        let t = set(&[(0.0, 0.0), (0.01, 0.0), (1.0, 0.0)]);
        let i0 = index_of(&t, C64::new(0.0, 0.0));
        assert_eq!(local_scales_greedy(&t, i0).unwrap(), vec![1.0, 0.01, 0.0]);
        assert_eq!(local_scales_exact(&t, i0).unwrap(), vec![1.0, 0.01, 0.0]);
    }

    #[test]
    fn exact_scales_guard() {
        let s = set(&[(0.0, 0.0); 13]);
        assert_eq!(
            local_scales_exact(&s, 0),
            Err(ScaleError::TooLarge { n: 13, limit: 12 })
        );
    }

    #[test]
    fn absolute_scales_examples() {
        let s = set(&[(0.0, 0.0), (0.0, 0.0), (1.0, 0.0), (1.0, 0.0)]);
        assert_eq!(absolute_scales(&s).0, vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(absolute_scales(&set(&[(2.0, 0.0); 3])).0, vec![0.0; 3]);
    }

    #[test]
    fn r_discriminant_examples() {
        let s = set(&[(0.0, 0.0), (0.0, 0.0), (1.0, 0.0), (1.0, 0.0)]);
        assert_eq!(r_discriminant(&s, 2).unwrap(), 1.0);
        assert_eq!(r_discriminant(&set(&[(0.0, 0.0), (1.0, 0.0)]), 1).unwrap(), 1.0);
        assert!(matches!(
            r_discriminant(&set(&[(0.0, 0.0), (1.0, 0.0)]), 2),
            Err(ScaleError::OrderOutOfRange { .. })
        ));
    }

    #[test]
    fn power_sum_size_examples() {
        let v = power_sum_size(&[C64::new(1.0, 0.0), C64::new(-1.0, 0.0)]);
        assert!((v - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(power_sum_size(&[C64::new(0.0, -3.0)]), 3.0);
    }

    #[test]
    fn f_r_poly_examples() {
        let p = f_r_poly(&set(&[(0.0, 0.0), (1.0, 0.0)]), 1).unwrap();
        assert_eq!(p, ComplexPoly::from_real(&[-1.0, 0.0, 1.0]));
        let q = f_r_poly(&set(&[(0.5, 0.5), (0.5, 0.5)]), 1).unwrap();
        assert_eq!(q, ComplexPoly::monomial(2));
    }

    #[test]
    fn sigma_product_examples() {
        let s = set(&[(0.0, 0.0), (1.0, 0.0), (1.0, 0.0)]);
        let i0 = index_of(&s, C64::new(0.0, 0.0));
        let sp = sigma_scale_product(&s, i0, 1).unwrap();
        assert_eq!(sp.sup, 1.0);
        // ordered pairs of distinct indices: (1,2),(2,1) give 1, pairs with α give 0
        assert_eq!(sp.sum, 2.0);
        let single = set(&[(0.7, 0.0)]);
        assert_eq!(sigma_scale_product(&single, 0, 0).unwrap().sup, 0.0);
    }

    #[test]
    fn scale_table_json_shape() {
        let s = set(&[(0.0, 0.0), (1.0, 0.0), (1.0, 0.0)]);
        let json = serde_json::to_value(ScaleTable::build(&s)).unwrap();
        assert_eq!(json["method"], "exact");
        assert_eq!(json["scales"][0], serde_json::json!([1.0, 1.0, 0.0]));
    }
}
