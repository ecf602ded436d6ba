//! Criterion benchmarks for the dual solver, the simplex and per-slot
//! controller work. Run with `cargo bench -p stochnet-bench`.

use stochnet_core::{two_queue_example, NetworkInstance};

pub const UNIFORM: [f64; 4] = [0.25; 4];
pub const UNBALANCED: [f64; 4] = [0.1, 0.4, 0.4, 0.1];

pub fn two_queue(dist: [f64; 4]) -> NetworkInstance {
    two_queue_example(dist).expect("valid channel distribution")
}
