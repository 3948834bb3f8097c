//! Invariants over random instances.

mod common;

use common::{random_sample, random_tensor, small_config};
use gola_core::autodiff::evaluate;
use gola_core::gatlayer;
use gola_core::geometry;
use gola_core::model::{Model, ModelKind};
use gola_core::rng;
use gola_core::spectral;
use gola_core::train::relative_l2;
use gola_core::{ParamStore, Tensor};
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng::seeded(seed));
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn models_are_permutation_equivariant(seed in 0u64..10_000, n in 4usize..28, kind_ix in 0usize..3) {
        let sample = random_sample(seed, n, 0.35);
        let model = Model::new(ModelKind::ALL[kind_ix], &small_config(), 1, seed).unwrap();
        let perm = permutation(n, seed + 1);
        let out = model.predict(&sample).unwrap();
        let out_p = model.predict(&sample.permuted(&perm).unwrap()).unwrap();
        for (k, &p) in perm.iter().enumerate() {
            prop_assert!((out_p.at(k, 0) - out.at(p, 0)).abs() < 1e-9);
        }
    }

    #[test]
    fn encoder_is_linear_in_its_input(seed in 0u64..10_000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut store = ParamStore::new();
        let mut r = rng::seeded(seed);
        spectral::add_params(&mut store, &mut r, "enc", 2, 3, 7, 0.2).unwrap();
        let coords = random_tensor(&mut r, &[11, 2], 1.0);
        let f1 = random_tensor(&mut r, &[11, 2], 1.0);
        let f2 = random_tensor(&mut r, &[11, 2], 1.0);
        let mix = Tensor::new(&[11, 2], f1.data().iter().zip(f2.data()).map(|(x, y)| a * x + b * y).collect()).unwrap();
        let enc = |f: &Tensor| evaluate(&store, |tape, p| {
            let (fv, x) = (tape.constant(f.clone()), tape.constant(coords.clone()));
            spectral::encode_with(tape, p, "enc", fv, x)
        }).unwrap();
        let (e1, e2, em) = (enc(&f1), enc(&f2), enc(&mix));
        let combo: Vec<f64> = e1.data().iter().zip(e2.data()).map(|(x, y)| a * x + b * y).collect();
        let num: f64 = em.data().iter().zip(&combo).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = combo.iter().map(|v| v * v).sum::<f64>().max(1e-300);
        prop_assert!(num.sqrt() <= 1e-6 * den.sqrt() + 1e-12);
    }

    #[test]
    fn encoder_commutes_with_point_permutations(seed in 0u64..10_000, n in 2usize..20) {
        let mut store = ParamStore::new();
        let mut r = rng::seeded(seed);
        spectral::add_params(&mut store, &mut r, "enc", 1, 2, 5, 0.3).unwrap();
        let coords = random_tensor(&mut r, &[n, 2], 1.0);
        let f = random_tensor(&mut r, &[n, 1], 1.0);
        let perm = permutation(n, seed);
        let permute = |t: &Tensor| {
            let c = t.shape()[1];
            Tensor::new(&[n, c], perm.iter().flat_map(|&p| t.row(p).to_vec()).collect()).unwrap()
        };
        let enc = |f: &Tensor, x: &Tensor| evaluate(&store, |tape, p| {
            let (fv, xv) = (tape.constant(f.clone()), tape.constant(x.clone()));
            spectral::encode_with(tape, p, "enc", fv, xv)
        }).unwrap();
        let h = enc(&f, &coords);
        let hp = enc(&permute(&f), &permute(&coords));
        prop_assert!(hp.max_abs_diff(&permute(&h)) < 1e-12);
    }

    #[test]
    fn attention_coefficients_sum_to_one(seed in 0u64..10_000, n in 2usize..30) {
        let sample = random_sample(seed, n, 0.4);
        let g = &sample.graph;
        let mut store = ParamStore::new();
        gatlayer::add_params(&mut store, &mut rng::seeded(seed), "gat", 3, g.edge_attr_dim().unwrap()).unwrap();
        let h = random_tensor(&mut rng::seeded(seed + 7), &[n, 3], 2.0);
        let alpha = evaluate(&store, |tape, p| {
            let (hv, e) = (tape.constant(h.clone()), tape.constant(g.edge_attr.clone().unwrap()));
            gatlayer::attention_coeffs(tape, p, "gat", hv, g, e)
        }).unwrap();
        for i in 0..n {
            let s: f64 = (g.offsets[i]..g.offsets[i + 1]).map(|e| alpha.data()[e]).sum();
            if g.degree(i) > 0 {
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }
        prop_assert!(alpha.data().iter().all(|&a| a > 0.0 && a <= 1.0));
    }

    #[test]
    fn relative_l2_is_scale_equivariant(seed in 0u64..10_000, c in 1e-3f64..1e3) {
        let mut r = rng::seeded(seed);
        let pred = random_tensor(&mut r, &[17], 1.0);
        let truth = random_tensor(&mut r, &[17], 1.0);
        let scaled = |t: &Tensor| t.data().iter().map(|v| c * v).collect::<Vec<_>>();
        let a = relative_l2(pred.data(), truth.data()).unwrap();
        let b = relative_l2(&scaled(&pred), &scaled(&truth)).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn radius_graphs_are_symmetric_sorted_and_loop_free(seed in 0u64..10_000, n in 1usize..80, radius in 0.01f64..0.6) {
        let pts = common::random_points(&mut rng::seeded(seed), n);
        let g = geometry::build_radius_graph(&pts, radius).unwrap();
        prop_assert!(g.edges.windows(2).all(|w| w[0] < w[1]));
        for &(i, j) in &g.edges {
            prop_assert!(i != j);
            prop_assert!(g.edge_index(j, i).is_some());
        }
        prop_assert_eq!(g.offsets.len(), n + 1);
        prop_assert_eq!(g.offsets[n], g.num_edges());
    }

    #[test]
    fn sampled_points_are_distinct_grid_nodes(seed in 0u64..10_000, res in 2usize..40, frac in 0.0f64..1.0) {
        let density = 1 + ((res * res - 1) as f64 * frac) as usize;
        let pts = geometry::sample_points(res, density, seed).unwrap();
        prop_assert_eq!(pts.len(), density);
        prop_assert!(pts.grid_index.windows(2).all(|w| w[0] < w[1]));
        for (k, &g) in pts.grid_index.iter().enumerate() {
            prop_assert_eq!(pts.coords[k], geometry::grid_coord(res, g));
        }
        prop_assert_eq!(pts, geometry::sample_points(res, density, seed).unwrap());
    }

    #[test]
    fn default_radius_is_clamped(density in 1usize..100_000, k in 0.1f64..100.0) {
        let r = geometry::default_radius(density, k);
        prop_assert!((geometry::MIN_RADIUS..=geometry::MAX_RADIUS).contains(&r));
    }
}

#[test]
fn forward_is_deterministic() {
    let sample = random_sample(3, 20, 0.3);
    for kind in ModelKind::ALL {
        let a = Model::new(kind, &small_config(), 1, 9).unwrap();
        let b = Model::new(kind, &small_config(), 1, 9).unwrap();
        assert_eq!(a, b);
        let (pa, pb) = (a.predict(&sample).unwrap(), b.predict(&sample).unwrap());
        assert!(pa.data().iter().zip(pb.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
