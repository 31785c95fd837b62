//! Property-based checks of the estimator, ingest and centrality invariants.

mod common;

use dcornet::centrality::power_iteration;
use dcornet::panel::{Grouping, Indicator};
use dcornet::partial::pdcor_centered;
use dcornet::significance::add_one_p_value;
use dcornet::{
    assemble_nodes, dcor, dcov_biased, dcov_unbiased, double_center, impute_missing, pdcor,
    standardize, u_center, CentralityOptions, ConditioningSet, DistanceMatrix, Estimator, Panel,
};
use ndarray::{Array2, Array3};
use proptest::prelude::*;

fn matrix(n: usize, d: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-10.0f64..10.0, n * d)
        .prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
}

/// `(x, y)` with a shared row count.
fn pair() -> impl Strategy<Value = (Array2<f64>, Array2<f64>)> {
    (4usize..16, 1usize..4, 1usize..4).prop_flat_map(|(n, dx, dy)| (matrix(n, dx), matrix(n, dy)))
}

fn triple() -> impl Strategy<Value = (Array2<f64>, Array2<f64>, Array2<f64>)> {
    (5usize..16, 1usize..3, 1usize..3, 1usize..3)
        .prop_flat_map(|(n, dx, dy, dz)| (matrix(n, dx), matrix(n, dy), matrix(n, dz)))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dcov_is_symmetric((x, y) in pair()) {
        prop_assert_eq!(dcov_biased(x.view(), y.view()).unwrap(), dcov_biased(y.view(), x.view()).unwrap());
        prop_assert_eq!(dcov_unbiased(x.view(), y.view()).unwrap(), dcov_unbiased(y.view(), x.view()).unwrap());
    }

    #[test]
    fn dcov_is_translation_invariant((x, y) in pair(), shift in -50.0f64..50.0) {
        let sx = DistanceMatrix::from_samples(x.view()).unwrap().scale();
        let sy = DistanceMatrix::from_samples(y.view()).unwrap().scale();
        let tol = 1e-10 * (sx * sy).max(f64::MIN_POSITIVE);
        let moved = x.mapv(|v| v + shift);
        prop_assert!(close(dcov_biased(moved.view(), y.view()).unwrap(), dcov_biased(x.view(), y.view()).unwrap(), tol));
        prop_assert!(close(dcov_unbiased(moved.view(), y.view()).unwrap(), dcov_unbiased(x.view(), y.view()).unwrap(), tol));
    }

    #[test]
    fn distances_scale_linearly((x, y) in pair(), b in prop_oneof![-20.0f64..-0.05, 0.05f64..20.0]) {
        let dx = DistanceMatrix::from_samples(x.view()).unwrap();
        let db = DistanceMatrix::from_samples(x.mapv(|v| b * v).view()).unwrap();
        for (u, v) in db.distances().iter().zip(dx.distances()) {
            prop_assert!(close(*u, b.abs() * v, 1e-12 * (1.0 + b.abs() * v)));
        }
        let r0 = dcor(x.view(), y.view(), Estimator::Biased).unwrap();
        let r1 = dcor(x.mapv(|v| b * v).view(), y.view(), Estimator::Biased).unwrap();
        prop_assert!(close(r0, r1, 1e-10));
    }

    #[test]
    fn centered_rows_sum_to_zero((x, _y) in pair()) {
        let dm = DistanceMatrix::from_samples(x.view()).unwrap();
        let tol = 1e-10 * dm.scale().max(f64::MIN_POSITIVE);
        for c in [double_center(&dm), u_center(&dm).unwrap()] {
            for row in c.data().rows() {
                prop_assert!(row.sum().abs() <= tol);
            }
            for i in 0..c.n() {
                for j in 0..c.n() {
                    prop_assert_eq!(c.data()[[i, j]], c.data()[[j, i]]);
                }
            }
        }
    }

    #[test]
    fn pdcor_is_bounded_and_symmetric((x, y, z) in triple()) {
        let zs = ConditioningSet::from_samples(&[z.view()]).unwrap();
        let a = pdcor(x.view(), y.view(), &zs).unwrap();
        let b = pdcor(y.view(), x.view(), &zs).unwrap();
        prop_assert!((-1.0..=1.0).contains(&a));
        prop_assert!(close(a, b, 1e-12));
    }

    #[test]
    fn biased_dcor_in_unit_interval((x, y) in pair()) {
        let r = dcor(x.view(), y.view(), Estimator::Biased).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn pdcor_centered_matches_sample_route((x, y, z) in triple()) {
        let c = |m: &Array2<f64>| u_center(&DistanceMatrix::from_samples(m.view()).unwrap()).unwrap();
        let zs = ConditioningSet::from_samples(&[z.view()]).unwrap();
        let direct = pdcor(x.view(), y.view(), &zs).unwrap();
        let centered = pdcor_centered(&c(&x), &c(&y), Some(&c(&z))).unwrap();
        prop_assert!(close(direct, centered, 1e-12));
    }

    #[test]
    fn p_value_does_not_increase_with_statistic(
        null in prop::collection::vec(-1.0f64..1.0, 1..60),
        a in -1.2f64..1.2,
        b in -1.2f64..1.2,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (p_lo, p_hi) = (add_one_p_value(lo, &null), add_one_p_value(hi, &null));
        prop_assert!(p_hi <= p_lo);
        prop_assert!(p_hi > 0.0 && p_lo <= 1.0);
    }
}

fn panel_from(values: Array3<f64>, mask: Array3<bool>) -> Panel {
    let (e, k, t) = values.dim();
    Panel {
        entities: (0..e).map(|i| format!("e{i}")).collect(),
        indicators: (0..k)
            .map(|i| Indicator {
                name: format!("k{i}"),
                node: format!("N{}", i % 2),
            })
            .collect(),
        nodes: (0..k.min(2)).map(|i| format!("N{i}")).collect(),
        years: (0..t as i32).map(|y| 2000 + y).collect(),
        values,
        mask,
    }
}

fn sparse_panel() -> impl Strategy<Value = Panel> {
    (3usize..7, 1usize..4, 1usize..4).prop_flat_map(|(e, k, t)| {
        let cells = e * k * t;
        (
            prop::collection::vec(-100.0f64..100.0, cells),
            prop::collection::vec(prop::bool::weighted(0.8), cells),
        )
            .prop_map(move |(v, m)| {
                let values = Array3::from_shape_vec((e, k, t), v).unwrap();
                let mask = Array3::from_shape_vec((e, k, t), m).unwrap();
                panel_from(
                    values.clone() * mask.mapv(|b| if b { 1.0 } else { f64::NAN }),
                    mask,
                )
            })
    })
}

fn full_panel() -> impl Strategy<Value = Panel> {
    (4usize..9, 2usize..5, 1usize..4).prop_flat_map(|(e, k, t)| {
        prop::collection::vec(-100.0f64..100.0, e * k * t).prop_map(move |v| {
            panel_from(
                Array3::from_shape_vec((e, k, t), v).unwrap(),
                Array3::from_elem((e, k, t), true),
            )
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn imputation_keeps_observed_and_stays_convex(p in sparse_panel()) {
        let (e, k, t) = p.shape();
        let column_observed = |kk: usize, tt: usize| (0..e).any(|i| p.mask[[i, kk, tt]]);
        let all_columns = (0..k).all(|kk| (0..t).all(|tt| column_observed(kk, tt)));
        match impute_missing(&p, 1e-9) {
            Err(_) => prop_assert!(!all_columns),
            Ok((q, report)) => {
                prop_assert!(q.is_complete());
                prop_assert_eq!(report.imputed_total, p.missing_count());
                for kk in 0..k {
                    for tt in 0..t {
                        let obs: Vec<f64> = (0..e).filter(|&i| p.mask[[i, kk, tt]]).map(|i| p.values[[i, kk, tt]]).collect();
                        let lo = obs.iter().cloned().fold(f64::INFINITY, f64::min);
                        let hi = obs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let slack = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
                        for i in 0..e {
                            let v = q.values[[i, kk, tt]];
                            if p.mask[[i, kk, tt]] {
                                prop_assert_eq!(v, p.values[[i, kk, tt]]);
                            } else {
                                prop_assert!(v >= lo - slack && v <= hi + slack);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn standardize_is_idempotent(p in full_panel()) {
        let once = standardize(&p);
        let twice = standardize(&once);
        for (a, b) in once.values.iter().zip(twice.values.iter()) {
            prop_assert!(close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn member_order_permutes_rows(p in full_panel(), rot in 1usize..8) {
        let members: Vec<String> = p.entities.clone();
        let mut rotated = members.clone();
        rotated.rotate_left(rot % members.len());
        let g = |m: Vec<String>| Grouping { name: "g".into(), members: m };
        let base = assemble_nodes(&p, &g(members.clone())).unwrap();
        let moved = assemble_nodes(&p, &g(rotated.clone())).unwrap();
        for (a, b) in base.iter().zip(&moved) {
            prop_assert_eq!(a.data.nrows(), members.len());
            for (r, name) in rotated.iter().enumerate() {
                let src = members.iter().position(|m| m == name).unwrap();
                prop_assert_eq!(a.data.row(src), b.data.row(r));
            }
        }
    }
}

fn weights(n: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(0.01f64..1.0, n * n).prop_map(move |v| {
        let mut k = Array2::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                k[[i, j]] = v[i * n + j];
                k[[j, i]] = v[i * n + j];
            }
        }
        k
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn centrality_scales_and_satisfies_eigen_equation(k in weights(18), c in 0.1f64..10.0) {
        let opts = CentralityOptions::default();
        let (s, lambda, _, conv) = power_iteration(k.view(), &opts).unwrap();
        prop_assert!(conv);
        prop_assert!(lambda >= 0.0);
        prop_assert!(s.iter().all(|&v| v >= 0.0));
        let norm: f64 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(close(norm, 1.0, 1e-10));

        let kv = k.dot(&ndarray::Array1::from(s.clone()));
        let residual: f64 = kv.iter().zip(&s).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(residual <= 10.0 * opts.tol * lambda, "residual {residual}");

        let (s2, l2, _, _) = power_iteration(k.mapv(|v| c * v).view(), &opts).unwrap();
        for (a, b) in s.iter().zip(&s2) {
            prop_assert!(close(*a, *b, 1e-10));
        }
        prop_assert!(close(l2, c * lambda, 1e-10 * c * lambda));

        let (want, want_lambda) = common::dense_dominant(&k);
        for (a, b) in s.iter().zip(&want) {
            prop_assert!(close(*a, *b, 1e-8));
        }
        prop_assert!(close(lambda, want_lambda, 1e-9 * want_lambda));
    }
}
