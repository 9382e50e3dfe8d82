//! Monte Carlo estimation of the integrated total intensity.

use rand::Rng;

use crate::autodiff::running_mean;

/// Derives an independent seed for sample `index` of stream `stream`.
pub fn sub_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut x = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    // splitmix64 finalizer
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// `n` sorted times uniform on `[start, end)`.
pub fn uniform_times<R: Rng + ?Sized>(rng: &mut R, start: f64, end: f64, n: usize) -> Vec<f64> {
    let mut t: Vec<f64> = (0..n).map(|_| start + (end - start) * rng.random::<f64>()).collect();
    t.sort_by(f64::total_cmp);
    t
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

/// `span * mean(values)` with its standard error. A constant sample gives
/// exactly `span * c`.
pub fn estimate(span: f64, values: &[f64]) -> Estimate {
    if values.is_empty() {
        return Estimate { value: 0.0, std_err: 0.0 };
    }
    let mean = running_mean(values.iter().copied());
    let n = values.len() as f64;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Estimate { value: span * mean, std_err: span * (var / n).sqrt() }
}

/// Plain Monte Carlo integral of `f` over `[a, b)`.
pub fn integrate<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64, n: usize, mut f: impl FnMut(f64) -> f64) -> Estimate {
    let values: Vec<f64> = uniform_times(rng, a, b, n).into_iter().map(&mut f).collect();
    estimate(b - a, &values)
}
