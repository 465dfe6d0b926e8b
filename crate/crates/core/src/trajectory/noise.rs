//! Seeded random streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

/// SplitMix64 finalizer, used to derive sub-run seeds from a base seed.
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random streams of one trajectory: Wiener increments on the controller
/// grid, Brownian-bridge refinement onto the integrator grid, and everything
/// else (jump clocks, initial-state sampling). Streams for different `index`
/// values never overlap, and everything depends only on `(seed, index)`.
///
/// Because the controller-grid increments come first and substeps are filled
/// in by a bridge, runs that differ only in `dt_sim` share the same Brownian
/// path.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    wiener: ChaCha8Rng,
    bridge: ChaCha8Rng,
    aux: ChaCha8Rng,
}

fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, tag));
    rng.set_stream(index);
    rng
}

impl NoiseSource {
    pub fn new(seed: u64, index: u64) -> Self {
        Self {
            wiener: stream(seed, 1, index),
            bridge: stream(seed, 2, index),
            aux: stream(seed, 3, index),
        }
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.wiener)
    }

    /// Wiener increment ΔW ~ N(0, dt).
    #[inline]
    pub fn wiener(&mut self, dt: f64) -> f64 {
        self.normal() * dt.sqrt()
    }

    /// Fill `out` with increments of one Wiener path over `out.len()` equal
    /// substeps of a span `total_dt`. The sum is drawn first, then split.
    pub fn wiener_path(&mut self, total_dt: f64, out: &mut [f64]) {
        let n = out.len();
        let mut remaining = self.wiener(total_dt);
        let h = total_dt / n as f64;
        for (k, slot) in out.iter_mut().enumerate() {
            let m = (n - k) as f64;
            if n - k == 1 {
                *slot = remaining;
            } else {
                let z: f64 = StandardNormal.sample(&mut self.bridge);
                let dw = remaining / m + (h * (m - 1.0) / m).sqrt() * z;
                *slot = dw;
                remaining -= dw;
            }
        }
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.aux.random::<f64>()
    }

    /// Exponential waiting time; infinite for a zero rate.
    pub fn exponential(&mut self, rate: f64) -> f64 {
        if rate <= 0.0 {
            return f64::INFINITY;
        }
        Exp::new(rate).expect("positive rate").sample(&mut self.aux)
    }

    /// Index drawn with probability proportional to `weights`.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().map(|w| w.max(0.0)).sum();
        let mut u = self.uniform() * total;
        for (i, w) in weights.iter().enumerate() {
            let w = w.max(0.0);
            if u < w {
                return i;
            }
            u -= w;
        }
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }
}
