//! Fixtures and random instances shared by the integration tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use splitnet::{Rational, SplitterNetwork};

pub const FAIR_A: &str = include_str!("../data/fair_a.net");
pub const FAIR_B: &str = include_str!("../data/fair_b.net");
pub const FAIR_C: &str = include_str!("../data/fair_c.net");
pub const SIXTY_SEVEN: &str = include_str!("../data/sixty_seven.net");
pub const NON_UNIQUE: &str = include_str!("../data/non_unique.net");

pub fn r(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

pub fn load(text: &str) -> SplitterNetwork {
    SplitterNetwork::parse(text).unwrap().normalize().unwrap()
}

pub fn random_cap<R: Rng>(rng: &mut R) -> Rational {
    let d = rng.gen_range(1..=12);
    Rational::new(rng.gen_range(0..=d), d)
}

/// A random normalized network with `n` splitters and `k` inputs and
/// outputs. Internal arcs are dropped with probability `drop`, so some
/// splitters end up with dummy terminals. Capacities come from `cap`.
pub fn random_network<R: Rng>(
    rng: &mut R,
    n: usize,
    k: usize,
    drop: f64,
    mut cap: impl FnMut(&mut R) -> Rational,
) -> SplitterNetwork {
    assert!(k <= 2 * n);
    let mut net = SplitterNetwork::new();
    let s: Vec<usize> = (0..n).map(|j| net.add_splitter(&format!("s{j}")).unwrap()).collect();
    let mut outs: Vec<usize> = s.iter().flat_map(|&v| [v, v]).collect();
    let mut ins = outs.clone();
    outs.shuffle(rng);
    ins.shuffle(rng);
    let mut dropped_in = vec![false; n];
    let mut dropped_out = vec![false; n];
    for j in 0..k {
        let c = cap(rng);
        let i = net.add_input(&format!("i{j}"), c).unwrap();
        let v = ins.pop().unwrap();
        net.add_arc(&format!("in{j}"), i, v).unwrap();
        let c = cap(rng);
        let o = net.add_output(&format!("o{j}"), c).unwrap();
        let u = outs.pop().unwrap();
        net.add_arc(&format!("out{j}"), u, o).unwrap();
    }
    for (j, (u, v)) in outs.into_iter().zip(ins).enumerate() {
        // At most one slot per side is dropped, so every splitter keeps an
        // arc on each side.
        if rng.gen_bool(drop) && !dropped_out[u] && !dropped_in[v] {
            dropped_out[u] = true;
            dropped_in[v] = true;
            continue;
        }
        net.add_arc(&format!("e{j}"), u, v).unwrap();
    }
    net.normalize().unwrap()
}
