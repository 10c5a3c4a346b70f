use num_rational::Rational64;
use proptest::prelude::*;

use zetasize::estimator::{estimate, is_finite, local_slack, Denominator};
use zetasize::germ::Germ;
use zetasize::polynomial::vanishing_order;
use zetasize::scales::{absolute_scales, local_scales_exact, local_scales_greedy, ScaleTable};
use zetasize::{ComplexPoly, EstimateOptions, ExponentPair, RootSet, C64};

fn point(r: f64) -> impl Strategy<Value = C64> {
    (-r..r, -r..r).prop_map(|(a, b)| C64::new(a, b))
}

/// Points in a box with some exact repeats planted.
fn multiset(max: usize) -> impl Strategy<Value = Vec<C64>> {
    (prop::collection::vec(point(0.3), 1..=max), prop::collection::vec(any::<prop::sample::Index>(), 0..3)).prop_map(
        |(mut pts, repeats)| {
            for pair in repeats.chunks(2) {
                if let [i, j] = pair {
                    let (i, j) = (i.index(pts.len()), j.index(pts.len()));
                    pts[j] = pts[i];
                }
            }
            pts
        },
    )
}

fn rational() -> impl Strategy<Value = Rational64> {
    (0i64..=12, 1i64..=6).prop_map(|(a, b)| Rational64::new(a, b))
}

fn exponent_pair() -> impl Strategy<Value = ExponentPair> {
    (rational(), rational().prop_filter("positive δ", |d| *d > Rational64::from_integer(0)))
        .prop_map(|(e, d)| ExponentPair::new(e, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn scale_rows_are_nonincreasing_and_end_in_zeros(pts in multiset(7)) {
        let s = RootSet::from_multiset(&pts);
        let table = ScaleTable::build(&s);
        for (row, &m) in table.scales.iter().zip(&table.multiplicities) {
            prop_assert_eq!(row.len(), pts.len());
            prop_assert!(row.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(row[row.len() - m..].iter().all(|&l| l == 0.0));
            prop_assert!(row[..row.len() - m].iter().all(|&l| l > 0.0));
        }
        let abs = absolute_scales(&s).0;
        for row in &table.scales {
            prop_assert!(row.iter().zip(&abs).all(|(l, a)| a <= l));
        }
    }

    #[test]
    fn greedy_scales_are_within_a_factor_two(pts in multiset(7)) {
        let s = RootSet::from_multiset(&pts);
        for a in 0..s.distinct() {
            let exact = local_scales_exact(&s, a).unwrap();
            let greedy = local_scales_greedy(&s, a).unwrap();
            for (g, e) in greedy.iter().zip(&exact) {
                prop_assert_eq!(*g == 0.0, *e == 0.0);
                if *e > 0.0 {
                    let r = g / e;
                    prop_assert!((0.5 - 1e-12..=1.0 + 1e-12).contains(&r), "ratio {r}");
                }
            }
        }
    }

    #[test]
    fn scales_ignore_translation_and_rotation(pts in multiset(6), shift in point(1.0), angle in 0.0..std::f64::consts::TAU) {
        let u = C64::from_polar(1.0, angle);
        let moved: Vec<C64> = pts.iter().map(|z| u * z + shift).collect();
        let a = absolute_scales(&RootSet::from_multiset(&pts)).0;
        let b = absolute_scales(&RootSet::from_multiset(&moved)).0;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn contributions_follow_the_dilation_law(
        roots in prop::collection::vec(point(0.3), 1..=4),
        p in prop::collection::vec(point(1.0), 1..=3),
        pair in exponent_pair(),
        log_s in -1.5f64..1.5,
    ) {
        let q = ComplexPoly::from_roots(&roots);
        let p = ComplexPoly::new(p);
        let (n, m) = (roots.len(), p.degree().unwrap_or(0));
        let opts = EstimateOptions::default();
        // separated simple roots and a generic numerator keep the breakdowns matched
        let sep = roots.iter().enumerate().flat_map(|(i, a)| roots[i + 1..].iter().map(move |b| (a - b).norm())).fold(1.0, f64::min);
        prop_assume!(sep > 0.05);
        let (Ok(base), s) = (estimate(&p, &q, &pair, 1.0, &opts), log_s.exp()) else { return Ok(()); };
        let sc = C64::new(s, 0.0);
        let q2 = q.rescale_arg(sc).scale(C64::new(s.powi(-(n as i32)), 0.0));
        let p2 = p.rescale_arg(sc).scale(C64::new(s.powi(-(m as i32)), 0.0));
        let scaled = estimate(&p2, &q2, &pair, 1.0 / s, &opts).unwrap();
        let factor = s.powf(n as f64 * pair.delta_f64() - m as f64 * pair.eps_f64() - 2.0);
        prop_assert_eq!(base.breakdown.len(), scaled.breakdown.len());
        for b in &base.breakdown {
            let x = scaled
                .breakdown
                .iter()
                .filter(|x| x.nu == b.nu)
                .min_by(|x, y| (x.root - b.root / s).norm().total_cmp(&(y.root - b.root / s).norm()))
                .unwrap();
            let want = b.contribution * factor;
            if want.is_finite() {
                prop_assert!((x.contribution - want).abs() <= 1e-9 * want.abs(), "{} vs {}", x.contribution, want);
            } else {
                prop_assert!(x.contribution.is_infinite());
            }
        }
    }

    #[test]
    fn finiteness_agrees_with_the_estimate_and_is_open(
        idx in prop::collection::vec(0usize..4, 1..=5),
        p_idx in prop::collection::vec(0usize..4, 0..=2),
        pair in exponent_pair(),
    ) {
        let lattice = [C64::new(0.0, 0.0), C64::new(0.2, 0.0), C64::new(0.0, -0.3), C64::new(-0.25, 0.1)];
        let q = ComplexPoly::from_roots(&idx.iter().map(|&i| lattice[i]).collect::<Vec<_>>());
        let mut p_roots: Vec<C64> = p_idx.iter().map(|&i| lattice[i]).collect();
        p_roots.push(C64::new(0.9, 0.0));
        let p = ComplexPoly::from_roots(&p_roots);
        let opts = EstimateOptions::default();
        let (Ok(fin), Ok(est)) = (is_finite(&p, &q, &pair, &opts), estimate(&p, &q, &pair, 2.0, &opts)) else {
            return Ok(());
        };
        prop_assert_eq!(fin, est.value.is_finite());
        if fin {
            let den = Denominator::from_poly(&q, None).unwrap();
            let sigma = den
                .roots
                .roots()
                .iter()
                .map(|r| {
                    let nu = vanishing_order(&p, r.z, opts.vanish_tol).unwrap();
                    local_slack(&pair, r.multiplicity, nu) / Rational64::from_integer(2 * r.multiplicity as i64)
                })
                .min()
                .unwrap();
            let bumped = ExponentPair::new(pair.eps(), pair.delta() + sigma).unwrap();
            prop_assert!(is_finite(&p, &q, &bumped, &opts).unwrap_or(true));
        }
    }

    #[test]
    fn germs_round_trip_through_json(
        terms in prop::collection::vec((prop::collection::vec(0u32..4, 2), -2.0f64..2.0, -2.0f64..2.0), 1..6)
    ) {
        let g = Germ::new(2, terms.into_iter().map(|(e, a, b)| (e, C64::new(a, b))));
        let back: Germ = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn rational_exponents_round_trip(a in 0i64..50, b in 1i64..50) {
        let r = Rational64::new(a, b);
        let pair = ExponentPair::parse(&r.to_string(), "1").unwrap();
        prop_assert_eq!(pair.eps(), r);
    }
}
