//! Threaded forward execution.
//!
//! The two directional cores of a bidirectional model share only
//! read-only inputs, so they can run on separate threads. Each core is
//! internally sequential with a fixed accumulation order, so the result
//! is bitwise identical for any thread budget.

use ndbm2_core::{BiMamba2NdModel, Result, Scalar, TensorNd};

/// Environment variable consulted when no explicit thread budget is given.
pub const THREADS_ENV: &str = "NDBM2_THREADS";

/// Resolve the effective thread budget: explicit flag, else `NDBM2_THREADS`,
/// else machine parallelism. Zero is clamped to one.
pub fn resolve_threads(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()))
        .map(|t| t.max(1))
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Forward pass with up to `threads` worker threads. With `threads >= 2`
/// and a bidirectional model the directional cores run concurrently;
/// otherwise this is exactly [`BiMamba2NdModel::forward`].
pub fn forward_with_threads<T: Scalar>(
    model: &BiMamba2NdModel<T>,
    x: &TensorNd<T>,
    threads: usize,
) -> Result<TensorNd<T>> {
    if threads < 2 || !model.bidirectional {
        return model.forward(x);
    }
    let streams = model.prepare_tokens(x)?;
    let backward_tokens = streams.backward.as_ref().expect("bidirectional model");
    let (hf, hb) = std::thread::scope(|scope| {
        let back = scope.spawn(|| model.run_backward_core(backward_tokens));
        let hf = model.run_forward_core(&streams.forward);
        let hb = back.join().expect("backward-core thread panicked");
        (hf, hb)
    });
    let fused = ndbm2_core::pipeline::fuse(&hf?, &hb?)?;
    model.finish(&fused, &streams.pad, &streams.padded_spatial)
}
