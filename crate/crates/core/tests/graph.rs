mod common;

use common::*;
use crystal_evolve::graph::{build_graph, expand_distance, GraphConfig};
use proptest::prelude::*;

#[test]
fn neighbor_list_matches_brute_force_without_truncation() {
    let mut r = rng(100);
    let config = GraphConfig { max_neighbors: usize::MAX, ..Default::default() };
    for _ in 0..60 {
        let s = oracle_structure(&mut r, 4, config.cutoff);
        let pairs = brute_force_pairs(&s, config.cutoff);
        match build_graph(&s, &config) {
            Ok(g) => {
                assert_eq!(g.edges.len(), pairs.len(), "{s:?}");
                check_neighbor_oracle(&s, &config).unwrap();
            }
            // edgeless only when some atom has no neighbour at all
            Err(e) => assert!((0..s.sites.len()).any(|i| pairs.iter().all(|p| p.0 != i)), "{e}"),
        }
    }
}

#[test]
fn neighbor_list_matches_brute_force_with_truncation() {
    let mut r = rng(101);
    for max_neighbors in [1, 4, 12] {
        let config = GraphConfig { max_neighbors, ..Default::default() };
        for _ in 0..40 {
            let s = oracle_structure(&mut r, 4, config.cutoff);
            if build_graph(&s, &config).is_ok() {
                check_neighbor_oracle(&s, &config).unwrap();
            }
        }
    }
}

#[test]
fn edge_features_are_gaussians_of_distances() {
    let mut r = rng(102);
    let config = GraphConfig::default();
    for _ in 0..10 {
        let g = random_graph(&mut r, 4);
        for (k, e) in g.edges.iter().enumerate() {
            let expected = expand_distance(e.distance, &config);
            assert_eq!(g.edge_feature(k), &expected[..]);
            let peak = ((e.distance - config.gaussian_min) / config.gaussian_step).round() as usize;
            let f = g.edge_feature(k);
            let argmax = (0..f.len()).max_by(|&a, &b| f[a].total_cmp(&f[b])).unwrap();
            assert!(argmax.abs_diff(peak.min(f.len() - 1)) <= 1);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edges_are_symmetric_and_sorted(seed in any::<u64>()) {
        let mut r = rng(seed);
        let s = random_structure(&mut r, 4, 3.0..7.0);
        if let Ok(g) = build_graph(&s, &GraphConfig::default()) {
            let keys: Vec<_> = g.edges.iter().map(|e| (e.i, e.j, e.image)).collect();
            let mut sorted = keys.clone();
            sorted.sort();
            prop_assert_eq!(&keys, &sorted);
            for e in &g.edges {
                prop_assert!(e.distance > 0.0 && e.distance <= 8.0);
                let rev = (e.j, e.i, [-e.image[0], -e.image[1], -e.image[2]]);
                let k = keys.binary_search(&rev);
                prop_assert!(k.is_ok());
                prop_assert_eq!(g.edges[k.unwrap()].distance, e.distance);
            }
            prop_assert!(g.node_features.iter().chain(&g.edge_features).all(|x| x.is_finite()));
        }
    }
}
