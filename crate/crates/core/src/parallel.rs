//! Deterministic fan-out over an index range using scoped threads.

use std::num::NonZeroUsize;

/// Worker count: `DRIFT_THREADS` when set, otherwise the available cores.
pub fn default_threads() -> usize {
    std::env::var("DRIFT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, NonZeroUsize::get))
}

/// Evaluates `f(0..n)` on up to `threads` workers. Results come back in
/// index order, so output never depends on scheduling.
pub fn par_map<R, F>(n: usize, threads: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync,
{
    let threads = threads.clamp(1, n.max(1));
    if threads == 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(threads);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let start = t * chunk;
                let end = ((t + 1) * chunk).min(n);
                s.spawn(move || (start..end).map(f).collect::<Vec<R>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_matches_serial() {
        let serial: Vec<usize> = (0..103).map(|i| i * i).collect();
        for threads in [1, 2, 7, 200] {
            assert_eq!(par_map(103, threads, |i| i * i), serial);
        }
        assert!(par_map(0, 4, |i| i).is_empty());
    }
}
