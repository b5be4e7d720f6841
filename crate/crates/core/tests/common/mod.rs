#![allow(dead_code)]

use gwaug::rng::rng_from_seed;
use gwaug::Graph;
use proptest::prelude::*;
use rand::Rng;

/// Erdős–Rényi graph drawn from a seed.
pub fn seeded_graph(id: &str, n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = rng_from_seed(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::new(id, n, edges, None).unwrap()
}

/// Graph with an arbitrary edge set on `min..=max` nodes.
pub fn arb_graph(min: usize, max: usize) -> impl Strategy<Value = Graph> {
    (min..=max).prop_flat_map(|n| {
        proptest::collection::vec(any::<bool>(), n * n.saturating_sub(1) / 2).prop_map(move |bits| {
            let mut edges = Vec::new();
            let mut k = 0;
            for u in 0..n {
                for v in (u + 1)..n {
                    if bits[k] {
                        edges.push((u, v));
                    }
                    k += 1;
                }
            }
            Graph::new("g", n, edges, None).unwrap()
        })
    })
}

/// A graph together with a permutation of its nodes.
pub fn arb_graph_and_permutation(min: usize, max: usize) -> impl Strategy<Value = (Graph, Vec<usize>)> {
    arb_graph(min, max).prop_flat_map(|g| {
        let n = g.node_count();
        (Just(g), Just((0..n).collect::<Vec<usize>>()).prop_shuffle())
    })
}

/// Seeded random permutation.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng_from_seed(seed));
    p
}
