use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Stream ids below this are reserved for non-background draws.
pub const BACKGROUND_STREAM_BASE: u64 = 16;

/// Size of one background flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SizeDist {
    Constant {
        mb: f64,
    },
    Uniform {
        lo_mb: f64,
        hi_mb: f64,
    },
    Exponential {
        mean_mb: f64,
    },
    /// Exponential with the given mean transfer time at full link capacity,
    /// so a link's offered load is about `lambda * mean_s` of its capacity.
    ExponentialDuration {
        mean_s: f64,
    },
}

impl Default for SizeDist {
    fn default() -> Self {
        SizeDist::ExponentialDuration { mean_s: 4.0 }
    }
}

impl SizeDist {
    pub fn validate(&self) -> Result<(), &'static str> {
        let ok = match *self {
            SizeDist::Constant { mb } => mb > 0.0 && mb.is_finite(),
            SizeDist::Uniform { lo_mb, hi_mb } => {
                lo_mb > 0.0 && hi_mb >= lo_mb && hi_mb.is_finite()
            }
            SizeDist::Exponential { mean_mb } => mean_mb > 0.0 && mean_mb.is_finite(),
            SizeDist::ExponentialDuration { mean_s } => mean_s > 0.0 && mean_s.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err("flow size parameters must be positive and finite")
        }
    }

    /// Mean flow size in MB on a link of `capacity_mbps`.
    pub fn mean_mb(&self, capacity_mbps: f64) -> f64 {
        match *self {
            SizeDist::Constant { mb } => mb,
            SizeDist::Uniform { lo_mb, hi_mb } => 0.5 * (lo_mb + hi_mb),
            SizeDist::Exponential { mean_mb } => mean_mb,
            SizeDist::ExponentialDuration { mean_s } => mean_s * capacity_mbps / 8.0,
        }
    }
}

/// Inverse-transform exponential draw with the given rate.
pub fn exp_sample<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.gen();
    -libm::log(1.0 - u) / rate
}

/// Poisson arrival process and flow sizes for one link.
///
/// Gaps and sizes use two independent ChaCha8 streams derived from the run
/// seed and the link index, so adding a link never perturbs another.
#[derive(Debug, Clone)]
pub struct BackgroundSource {
    gaps: ChaCha8Rng,
    sizes: ChaCha8Rng,
    pub lambda: f64,
    pub capacity_mbps: f64,
    pub dist: SizeDist,
}

impl BackgroundSource {
    pub fn new(
        seed: u64,
        link_index: usize,
        lambda: f64,
        capacity_mbps: f64,
        dist: SizeDist,
    ) -> Self {
        let (g, s) = Self::streams(link_index);
        let mut gaps = ChaCha8Rng::seed_from_u64(seed);
        gaps.set_stream(g);
        let mut sizes = ChaCha8Rng::seed_from_u64(seed);
        sizes.set_stream(s);
        BackgroundSource {
            gaps,
            sizes,
            lambda,
            capacity_mbps,
            dist,
        }
    }

    /// ChaCha8 stream ids used for the gaps and sizes of `link_index`.
    pub fn streams(link_index: usize) -> (u64, u64) {
        let base = BACKGROUND_STREAM_BASE + 2 * link_index as u64;
        (base, base + 1)
    }

    /// Seconds until the next arrival; `None` when the rate is zero.
    pub fn next_gap_s(&mut self) -> Option<f64> {
        (self.lambda > 0.0).then(|| exp_sample(&mut self.gaps, self.lambda))
    }

    pub fn next_size_mb(&mut self) -> f64 {
        match self.dist {
            SizeDist::Constant { mb } => mb,
            SizeDist::Uniform { lo_mb, hi_mb } => lo_mb + (hi_mb - lo_mb) * self.sizes.gen::<f64>(),
            SizeDist::Exponential { mean_mb } => exp_sample(&mut self.sizes, 1.0 / mean_mb),
            SizeDist::ExponentialDuration { mean_s } => {
                exp_sample(&mut self.sizes, 1.0 / mean_s) * self.capacity_mbps / 8.0
            }
        }
    }
}
