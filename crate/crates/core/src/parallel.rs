//! Data-parallel fan-out helpers.
//!
//! With the `parallel` feature (default) the work runs on a rayon pool sized
//! to the requested worker count; without it everything is sequential.
//! Results always come back in input order, so outputs are identical either
//! way.

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, U, F>(items: &[T], workers: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync,
{
    if workers <= 1 || items.len() <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.min(items.len()))
        .build()
        .expect("failed to build worker pool");
    pool.install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect())
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, U, F>(items: &[T], _workers: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync,
{
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Fallible variant; the first error in input order wins, independent of
/// completion order.
pub(crate) fn try_map_indexed<T, U, E, F>(
    items: &[T],
    workers: usize,
    f: F,
) -> Result<Vec<U>, E>
where
    T: Sync,
    U: Send,
    E: Send,
    F: Fn(usize, &T) -> Result<U, E> + Sync,
{
    map_indexed(items, workers, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_input_order() {
        let items: Vec<usize> = (0..100).collect();
        let out = map_indexed(&items, 4, |i, &v| i * 1000 + v);
        for (i, &o) in out.iter().enumerate() {
            assert_eq!(o, i * 1000 + i);
        }
    }

    #[test]
    fn first_error_in_input_order() {
        let items: Vec<usize> = (0..50).collect();
        let r: Result<Vec<usize>, usize> =
            try_map_indexed(&items, 4, |_, &v| if v >= 10 { Err(v) } else { Ok(v) });
        assert_eq!(r.unwrap_err(), 10);
    }
}
