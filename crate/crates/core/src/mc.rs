//! Reproducible Monte Carlo estimation of mutual information, used as an
//! independent check on the quadrature values.
//!
//! Randomness is counter-based: each sample index owns a fixed slice of the
//! stream, so results are bit-identical across runs and thread counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::input::SymmetricBoundaryDistribution;
use crate::output_stats::{OutputDensityModel, LN_TWO_PI};

const BLOCK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    /// Sample mean of the per-sample information density, nats.
    pub value: f64,
    /// Sample standard deviation divided by sqrt(samples).
    pub stderr: f64,
    pub samples: u64,
    pub seed: u64,
}

/// Estimates `I(X; X+Z)` as the sample mean of
/// `log f_{Y|X}(Y|X) - log f_Y(Y)` over seeded `(X, Z)` draws.
pub fn mc_mutual_information(
    d: &SymmetricBoundaryDistribution,
    samples: u64,
    seed: u64,
) -> McEstimate {
    assert!(samples >= 1_000, "need at least 1e3 samples");
    let model = OutputDensityModel::from_distribution(d);
    let atoms = model.components();
    let mut cdf = Vec::with_capacity(atoms.len());
    let mut acc = 0.0;
    for a in atoms {
        acc += a.mass;
        cdf.push(acc);
    }

    let n_blocks = samples.div_ceil(BLOCK);
    let partials: Vec<Moments> = (0..n_blocks)
        .into_par_iter()
        .map(|blk| {
            let lo = blk * BLOCK;
            let hi = (lo + BLOCK).min(samples);
            let mut m = Moments::default();
            for i in lo..hi {
                let u_atom = uniform(seed, 3 * i);
                let z1 = inverse_normal_cdf(uniform(seed, 3 * i + 1));
                let z2 = inverse_normal_cdf(uniform(seed, 3 * i + 2));
                let k = cdf.partition_point(|&c| c < u_atom).min(atoms.len() - 1);
                let x = atoms[k].point;
                let y = (x.0 + z1, x.1 + z2);
                let log_conditional = -0.5 * (z1 * z1 + z2 * z2) - LN_TWO_PI;
                m.push(log_conditional - model.log_density(y));
            }
            m
        })
        .collect();

    let total = tree_merge(&partials);
    let value = total.mean;
    let variance = if total.count > 1 {
        total.m2 / (total.count - 1) as f64
    } else {
        0.0
    };
    McEstimate {
        value,
        stderr: (variance / total.count as f64).sqrt(),
        samples,
        seed,
    }
}

/// Running mean and centered second moment, merged pairwise so the
/// reduction tree is fixed by the block layout alone.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.count += 1;
        let delta = v - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (v - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2
            + other.m2
            + delta * delta * self.count as f64 * other.count as f64 / count as f64;
        Moments { count, mean, m2 }
    }
}

fn tree_merge(parts: &[Moments]) -> Moments {
    match parts.len() {
        0 => Moments::default(),
        1 => parts[0],
        n => tree_merge(&parts[..n / 2]).merge(tree_merge(&parts[n / 2..])),
    }
}

/// Counter-based stream: two finalizer rounds over seed and counter.
fn uniform(seed: u64, counter: u64) -> f64 {
    let mut z = seed ^ counter.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    // 53-bit mantissa, offset half a step: strictly inside (0, 1)
    ((z >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Inverse standard normal CDF (Wichura's AS 241, double precision).
fn inverse_normal_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&PPND16_A, r) / poly(&PPND16_B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let value = if r <= 5.0 {
        let r = r - 1.6;
        poly(&PPND16_C, r) / poly(&PPND16_D, r)
    } else {
        let r = r - 5.0;
        poly(&PPND16_E, r) / poly(&PPND16_F, r)
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

const PPND16_A: [f64; 8] = [
    3.387_132_872_796_366_5e0,
    1.331_416_678_917_843_8e2,
    1.971_590_950_306_551_3e3,
    1.373_169_376_550_946e4,
    4.592_195_393_154_987e4,
    6.726_577_092_700_87e4,
    3.343_057_558_358_813e4,
    2.509_080_928_730_122_7e3,
];
const PPND16_B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091e1,
    6.871_870_074_920_579e2,
    5.394_196_021_424_751e3,
    2.121_379_430_158_659_7e4,
    3.930_789_580_009_271e4,
    2.872_908_573_572_194_3e4,
    5.226_495_278_852_545_9e3,
];
const PPND16_C: [f64; 8] = [
    1.423_437_110_749_683_5e0,
    4.630_337_846_156_546e0,
    5.769_497_221_460_691e0,
    3.647_848_324_763_204_5e0,
    1.270_458_252_452_368_4e0,
    2.417_807_251_774_506e-1,
    2.272_384_498_926_918_4e-2,
    7.745_450_142_783_414e-4,
];
const PPND16_D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759e0,
    1.676_384_830_183_803_8e0,
    6.897_673_349_851e-1,
    1.481_039_764_274_800_8e-1,
    1.519_866_656_361_645_7e-2,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const PPND16_E: [f64; 8] = [
    6.657_904_643_501_103e0,
    5.463_784_911_164_114e0,
    1.784_826_539_917_291_3e0,
    2.965_605_718_285_048_7e-1,
    2.653_218_952_657_612_4e-2,
    1.242_660_947_388_078_4e-3,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const PPND16_F: [f64; 8] = [
    1.0,
    5.998_322_065_558_88e-1,
    1.369_298_809_227_358e-1,
    1.487_536_129_085_061_5e-2,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.044_263_103_389_939_7e-15,
];
