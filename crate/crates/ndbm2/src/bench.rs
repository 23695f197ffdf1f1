//! Wall-clock benchmark harness.
//!
//! Runs the forward pass on a seeded input, discards `warmup` runs, and
//! reports the median of `repeats` timed runs in the cost report's
//! `wall_ms` field.

use std::time::Instant;

use ndbm2_core::rng::SeededRng;
use ndbm2_core::{count_macs, BiMamba2NdModel, CostReport, Error, Result, TensorNd};

use crate::exec::forward_with_threads;

/// Median forward wall time for a `batch x spatial` input.
pub fn bench(
    model: &BiMamba2NdModel<f32>,
    batch: usize,
    spatial: &[usize],
    repeats: usize,
    warmup: usize,
    seed: u64,
    threads: usize,
) -> Result<CostReport> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be >= 1"));
    }
    let mut report = count_macs(model, batch, spatial)?;

    let mut shape = vec![batch, model.c_in];
    shape.extend_from_slice(spatial);
    let mut rng = SeededRng::new(seed);
    let x = TensorNd::from_fn(&shape, |_| rng.next_symmetric(1.0f32))?;

    for _ in 0..warmup {
        forward_with_threads(model, &x, threads)?;
    }
    let mut times_ms = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let out = forward_with_threads(model, &x, threads)?;
        times_ms.push(start.elapsed().as_secs_f64() * 1e3);
        // keep the output alive through the timer to prevent the call
        // being optimised out
        std::hint::black_box(&out);
    }
    times_ms.sort_by(|a, b| a.partial_cmp(b).expect("timings are finite"));
    report.wall_ms = Some(median(&times_ms));
    Ok(report)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndbm2_core::ssd::Mamba2Config;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[1.0, 2.0, 9.0]), 2.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 9.0]), 2.5);
    }

    #[test]
    fn bench_reports_positive_time() {
        let cfg = Mamba2Config {
            d_model: 16,
            d_state: 8,
            expand: 2,
            headdim: 16,
            d_conv: 4,
            chunk: 64,
            ngroups: 1,
            ..Default::default()
        };
        let model = BiMamba2NdModel::init_random(cfg, 2, 2, 1, false, 5).unwrap();
        let report = bench(&model, 1, &[64], 2, 0, 7, 1).unwrap();
        assert!(report.wall_ms.unwrap() > 0.0);
        assert!(report.macs_total > 0);
        assert!(matches!(
            bench(&model, 1, &[64], 0, 0, 7, 1),
            Err(Error::InvalidConfig(_))
        ));
    }
}
