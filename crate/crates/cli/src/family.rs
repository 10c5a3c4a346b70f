//! Instance families for `compare`: explicit lists or generated sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use zetasize::polynomial::roots;
use zetasize::{ComplexPoly, C64};

fn one() -> ComplexPoly {
    ComplexPoly::from_real(&[1.0])
}

fn unit_lambda() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    /// Adaptive disk quadrature.
    #[default]
    Disk,
    /// Echoes the estimate; checks the comparison plumbing.
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(rename = "P", default = "one")]
    pub p: ComplexPoly,
    #[serde(rename = "Q")]
    pub q: ComplexPoly,
    /// Parameter for the trend statistic.
    #[serde(default)]
    pub sweep: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Sweep {
    /// `Q_t = (z − r_0 − t) ∏ (z − r_i)`: a root planted at distance `t` from the first.
    PlantedGap {
        roots: Vec<[f64; 2]>,
        gaps: Vec<f64>,
        #[serde(rename = "P", default = "one")]
        p: ComplexPoly,
    },
    /// Monic `Q` of the given degree with random coefficients, kept when all
    /// roots lie in the half disk; `P` random of degree `numerator_degree`.
    RandomCoefficient {
        count: usize,
        degree: usize,
        #[serde(default)]
        numerator_degree: usize,
        #[serde(default = "default_coefficient_radius")]
        coefficient_radius: f64,
    },
}

fn default_coefficient_radius() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub eps: String,
    pub delta: String,
    #[serde(default = "unit_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub oracle: OracleKind,
    /// Also runs the Monte Carlo oracle with this many samples.
    #[serde(default)]
    pub mc_samples: Option<usize>,
    #[serde(default)]
    pub instances: Vec<Instance>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
}

impl FamilySpec {
    /// Explicit instances followed by the generated sweep.
    pub fn expand(&self, seed: u64) -> Result<Vec<Instance>, String> {
        let mut out = self.instances.clone();
        match &self.sweep {
            None => {}
            Some(Sweep::PlantedGap { roots, gaps, p }) => {
                let base: Vec<C64> = roots.iter().map(|&[re, im]| C64::new(re, im)).collect();
                let first = *base.first().ok_or("planted-gap sweep needs at least one root")?;
                for &t in gaps {
                    let mut rs = base.clone();
                    rs.push(first + t);
                    out.push(Instance {
                        id: Some(format!("gap={t:e}")),
                        p: p.clone(),
                        q: ComplexPoly::from_roots(&rs),
                        sweep: Some(t),
                    });
                }
            }
            Some(Sweep::RandomCoefficient {
                count,
                degree,
                numerator_degree,
                coefficient_radius,
            }) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut disk = |r: f64| C64::from_polar(r * rng.gen::<f64>().sqrt(), std::f64::consts::TAU * rng.gen::<f64>());
                let mut made = 0;
                let mut attempts = 0;
                while made < *count {
                    attempts += 1;
                    if attempts > 1000 * count {
                        return Err("random-coefficient sweep: too few draws have all roots in the half disk".into());
                    }
                    let mut c: Vec<C64> = (0..*degree).map(|_| disk(*coefficient_radius)).collect();
                    c.push(C64::new(1.0, 0.0));
                    let q = ComplexPoly::new(c);
                    let rs = roots(&q, q.default_tol()).map_err(|e| e.to_string())?;
                    if rs.roots().iter().any(|r| r.z.norm() >= 0.5 * self.lambda) {
                        continue;
                    }
                    let p = ComplexPoly::new((0..=*numerator_degree).map(|_| disk(1.0)).collect());
                    out.push(Instance {
                        id: Some(format!("random-{made}")),
                        p,
                        q,
                        sweep: None,
                    });
                    made += 1;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_gap_expands() {
        let spec: FamilySpec = serde_json::from_str(
            r#"{"eps":"0","delta":"3/2","lambda":4,
                "sweep":{"kind":"planted-gap","roots":[[0,0],[1,0]],"gaps":[0.1,0.01]}}"#,
        )
        .unwrap();
        let fam = spec.expand(0).unwrap();
        assert_eq!(fam.len(), 2);
        assert_eq!(fam[1].q, ComplexPoly::from_roots(&[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.01, 0.0)]));
        assert_eq!(fam[1].sweep, Some(0.01));
    }

    #[test]
    fn random_coefficients_are_reproducible() {
        let spec: FamilySpec = serde_json::from_str(
            r#"{"eps":"1/2","delta":"1/2","sweep":{"kind":"random-coefficient","count":3,"degree":2}}"#,
        )
        .unwrap();
        assert_eq!(spec.expand(7).unwrap(), spec.expand(7).unwrap());
        assert_ne!(spec.expand(7).unwrap(), spec.expand(8).unwrap());
    }
}
