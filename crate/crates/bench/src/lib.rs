//! Deterministic fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use warp_lnn::discrete::{random_netlist, PackedBits};
use warp_lnn::Netlist;

/// Uniform coefficient vector of length `2^arity`.
pub fn coefficients(arity: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..1usize << arity).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// A `depth`-layer netlist of `width` two-input nodes per layer over `inputs`
/// encoded bits, with ten output classes.
pub fn layered_netlist(inputs: usize, width: usize, depth: usize, seed: u64) -> Netlist {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_netlist(&mut rng, inputs, &vec![width; depth], 10, 2)
}

/// `samples` random bit rows packed for `netlist`.
pub fn random_batch(netlist: &Netlist, samples: usize, seed: u64) -> PackedBits {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<bool>> = (0..samples)
        .map(|_| (0..netlist.input_bits()).map(|_| rng.random()).collect())
        .collect();
    PackedBits::from_rows(&rows, netlist.input_bits()).expect("rows match the input width")
}
