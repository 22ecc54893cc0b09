//! Fixtures shared by the benchmarks.

use cyclebench::data::{FeaturePanel, PriceSeries, RecessionCalendar};
use cyclebench::synthetic::SyntheticMarket;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `lag` rows of `d` uniform features.
pub fn random_window(lag: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..lag)
        .map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn random_series(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.random::<f64>()).collect()
}

/// The default synthetic market aligned on the built-in calendar.
pub fn synthetic_panel() -> (FeaturePanel, RecessionCalendar) {
    let cal = RecessionCalendar::nber();
    let (prices, factors): (PriceSeries, _) = SyntheticMarket::default().generate(&cal).expect("synthetic market");
    let panel = cyclebench::data::align_panel(&prices, &factors, &cal, false).expect("aligned panel");
    (panel, cal)
}
