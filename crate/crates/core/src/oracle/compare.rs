//! Paired algebraic/oracle samples and their ratio statistics.

use serde::{Deserialize, Serialize};

use super::{OracleError, OracleResult};

/// One algebraic size next to the oracle value it should match.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparePair {
    pub id: String,
    pub algebraic: f64,
    pub oracle: OracleResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceSample {
    pub instance_id: String,
    #[serde(with = "crate::extreal")]
    pub algebraic: f64,
    #[serde(with = "crate::extreal")]
    pub oracle: f64,
    /// `oracle / algebraic`, present only when both are finite.
    pub ratio: Option<f64>,
    pub sweep_param: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub samples: Vec<EquivalenceSample>,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub jointly_finite: usize,
    pub jointly_infinite: usize,
    /// Pearson correlation of `ln ratio` against `ln sweep`.
    pub trend_stat: Option<f64>,
}

impl EquivalenceReport {
    /// `ratio_max / ratio_min`, 1 when no finite pair exists.
    pub fn spread(&self) -> f64 {
        if self.jointly_finite == 0 {
            1.0
        } else {
            self.ratio_max / self.ratio_min
        }
    }

    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["instance_id", "algebraic", "oracle", "ratio", "sweep_param"])?;
        let fmt = |x: f64| if x.is_infinite() { "inf".to_string() } else { x.to_string() };
        for s in &self.samples {
            w.write_record([
                s.instance_id.clone(),
                fmt(s.algebraic),
                fmt(s.oracle),
                s.ratio.map(fmt).unwrap_or_default(),
                s.sweep_param.map(fmt).unwrap_or_default(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 {
        return None;
    }
    if syy == 0.0 {
        return Some(0.0);
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Builds the report. Any pair with exactly one side infinite is an error.
pub fn compare(family: &[ComparePair], sweep: Option<&[f64]>) -> Result<EquivalenceReport, OracleError> {
    if family.is_empty() {
        return Err(OracleError::EmptyFamily);
    }
    let mut samples = Vec::with_capacity(family.len());
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let (mut fin, mut inf) = (0, 0);
    let mut trend_x = Vec::new();
    let mut trend_y = Vec::new();
    for (i, pair) in family.iter().enumerate() {
        let a_inf = pair.algebraic.is_infinite();
        let o_inf = pair.oracle.diverging || pair.oracle.value.is_infinite();
        if a_inf != o_inf {
            return Err(OracleError::MixedFinitenessDisagreement { index: i });
        }
        let sweep_param = sweep.and_then(|s| s.get(i).copied());
        let ratio = if a_inf {
            inf += 1;
            None
        } else {
            fin += 1;
            let r = pair.oracle.value / pair.algebraic;
            lo = lo.min(r);
            hi = hi.max(r);
            if let Some(t) = sweep_param.filter(|t| *t > 0.0) {
                if r > 0.0 && r.is_finite() {
                    trend_x.push(t.ln());
                    trend_y.push(r.ln());
                }
            }
            Some(r)
        };
        samples.push(EquivalenceSample {
            instance_id: pair.id.clone(),
            algebraic: pair.algebraic,
            oracle: if o_inf { f64::INFINITY } else { pair.oracle.value },
            ratio,
            sweep_param,
        });
    }
    if fin == 0 {
        lo = 1.0;
        hi = 1.0;
    }
    Ok(EquivalenceReport {
        samples,
        ratio_min: lo,
        ratio_max: hi,
        jointly_finite: fin,
        jointly_infinite: inf,
        trend_stat: pearson(&trend_x, &trend_y),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(id: usize, a: f64, o: f64) -> ComparePair {
        let oracle = if o.is_infinite() {
            OracleResult::divergent(1.0, "radial", 0)
        } else {
            OracleResult::deterministic(o, 0.0, "radial", 0)
        };
        ComparePair {
            id: id.to_string(),
            algebraic: a,
            oracle,
        }
    }

    #[test]
    fn identical_lists_have_unit_ratios() {
        let fam: Vec<_> = (1..5).map(|i| pair(i, i as f64, i as f64)).collect();
        let r = compare(&fam, Some(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!((r.ratio_min, r.ratio_max), (1.0, 1.0));
        assert_eq!(r.trend_stat, Some(0.0));
        assert!(r.to_csv().unwrap().starts_with("instance_id,algebraic,oracle,ratio,sweep_param"));
    }

    #[test]
    fn disagreement_is_an_error() {
        let fam = vec![pair(0, 1.0, 1.0), pair(1, f64::INFINITY, 2.0)];
        assert_eq!(compare(&fam, None), Err(OracleError::MixedFinitenessDisagreement { index: 1 }));
        let both = vec![pair(0, f64::INFINITY, f64::INFINITY)];
        assert_eq!(compare(&both, None).unwrap().jointly_infinite, 1);
    }
}
