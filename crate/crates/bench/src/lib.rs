//! Fixed instances shared by the benchmarks.

use tradepost_core::instance::{generate, GeneratorSpec, Instance, Topology};

/// Sizes exercised by the per-step benchmarks.
pub const SIZES: [usize; 4] = [2, 10, 50, 200];

pub fn dense(n: usize) -> Instance {
    generate(&GeneratorSpec {
        n,
        topology: Topology::Dense,
        seed: 42,
    })
    .expect("dense instance")
}

pub fn cyclic(n: usize, k: usize) -> Instance {
    generate(&GeneratorSpec {
        n,
        topology: Topology::CyclicComponents(k),
        seed: 42,
    })
    .expect("cyclic instance")
}

/// `dense(n)` with every player saving half of its money.
pub fn lazy(n: usize) -> Instance {
    dense(n).with_alpha(vec![0.5; n]).expect("alpha 1/2")
}
