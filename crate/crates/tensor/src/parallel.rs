//! Data-parallel execution switch.
//!
//! Kernels only split work across independent output slices and every slice
//! is computed with the same sequential inner loop, so parallel and
//! sequential runs are bit-identical. With the `parallel` feature disabled
//! every helper falls back to a plain loop.
//!
//! The switch starts enabled when the feature is compiled in, unless the
//! environment sets `EEGVIT_DETERMINISTIC=1`.

use std::sync::atomic::{AtomicU8, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

const UNSET: u8 = 0;
const OFF: u8 = 1;
const ON: u8 = 2;

static STATE: AtomicU8 = AtomicU8::new(UNSET);

/// Whether rayon support was compiled in.
pub fn available() -> bool {
    cfg!(feature = "parallel")
}

pub fn deterministic_env() -> bool {
    std::env::var("EEGVIT_DETERMINISTIC")
        .map(|v| v == "1")
        .unwrap_or(false)
}

pub fn is_enabled() -> bool {
    match STATE.load(Ordering::Relaxed) {
        ON => true,
        OFF => false,
        _ => {
            let on = available() && !deterministic_env();
            STATE.store(if on { ON } else { OFF }, Ordering::Relaxed);
            on
        }
    }
}

/// Turns data-parallel kernels on or off process-wide. Has no effect without
/// the `parallel` feature.
pub fn set_enabled(on: bool) {
    STATE.store(if on && available() { ON } else { OFF }, Ordering::Relaxed);
}

/// Runs `f(i, chunk)` over consecutive `chunk_len` slices of `data`.
pub(crate) fn for_each_chunk<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    if chunk_len == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if is_enabled() {
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    data.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Evaluates `f` on `0..n`, returning results in index order.
pub(crate) fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if is_enabled() {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}
