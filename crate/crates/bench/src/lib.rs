//! Shared setup for the criterion benchmarks.

use eirehn_core::cells::{Cell, CellConfig, CellKind};
use eirehn_core::{ParamStore, Rng, Tensor};

/// A cell with its parameters and a fixed random input sequence.
pub struct Fixture {
    pub cell: Cell,
    pub store: ParamStore,
    pub xs: Vec<Tensor>,
}

pub fn fixture(kind: CellKind, d_h: usize, d_x: usize, t: usize) -> Fixture {
    let cfg = CellConfig { depth: 2, r_max: 10, ..CellConfig::new(kind, d_h, d_x) };
    let mut store = ParamStore::new();
    let mut rng = Rng::new(0);
    let cell = Cell::build(&cfg, &mut store, "cell", &mut rng).expect("valid config");
    let xs = (0..t)
        .map(|_| Tensor::vector((0..d_x).map(|_| rng.uniform_in(-1.0, 1.0)).collect()))
        .collect();
    Fixture { cell, store, xs }
}
