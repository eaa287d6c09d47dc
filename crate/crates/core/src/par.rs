//! Band-parallel helpers. Work is split into fixed-size units that do not
//! depend on the thread count, and results always come back in unit order, so
//! enabling or disabling the `parallel` feature never changes a result.

use std::ops::Range;

/// Rows per band in the scatter renderer.
pub(crate) const BAND_ROWS: usize = 16;

pub(crate) fn bands(height: usize) -> Vec<Range<usize>> {
    (0..height)
        .step_by(BAND_ROWS)
        .map(|start| start..(start + BAND_ROWS).min(height))
        .collect()
}

/// Maps `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub(crate) fn map_ordered<I, T, F>(items: Vec<I>, f: F) -> Vec<T>
where
    I: Send,
    T: Send,
    F: Fn(I) -> T + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_ordered<I, T, F>(items: Vec<I>, f: F) -> Vec<T>
where
    F: Fn(I) -> T,
{
    items.into_iter().map(f).collect()
}
