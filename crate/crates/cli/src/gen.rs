//! Synthetic edge lists.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::csvio::EdgeRow;

/// `skew` 1.0 picks endpoints uniformly; larger values concentrate them on
/// low vertex numbers, giving a heavy-tailed degree distribution.
#[derive(Clone, Copy, Debug)]
pub struct GenSpec {
    pub vertices: u64,
    pub edges: u64,
    pub src_skew: f64,
    pub tgt_skew: f64,
    pub seed: u64,
}

fn pick(rng: &mut StdRng, n: u64, skew: f64) -> u64 {
    let u: f64 = rng.gen();
    ((u.powf(skew) * n as f64) as u64).min(n - 1)
}

pub fn vertex_name(i: u64) -> String {
    format!("v{i}")
}

pub fn generate_edges(spec: &GenSpec) -> Vec<EdgeRow> {
    let mut rng = StdRng::seed_from_u64(spec.seed);
    let n = spec.vertices.max(1);
    (0..spec.edges)
        .map(|_| {
            let s = pick(&mut rng, n, spec.src_skew);
            let t = pick(&mut rng, n, spec.tgt_skew);
            EdgeRow {
                src: vertex_name(s),
                tgt: vertex_name(t),
                weight: (rng.gen_range(0..10_000) as f64) / 100.0,
            }
        })
        .collect()
}
