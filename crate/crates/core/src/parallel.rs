//! Fan-out of independent replications.
//!
//! Each replication owns its seeds, so results are identical whichever
//! variant runs them; `map_replications` picks rayon when the `parallel`
//! feature is on.

/// Runs `f(0..count)` in order on the calling thread.
pub fn map_replications_sequential<T, F>(count: u64, f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    (0..count).map(f).collect()
}

/// Runs `f(0..count)` on the rayon pool, returning results in index order.
#[cfg(feature = "parallel")]
pub fn map_replications_parallel<T, F>(count: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

pub fn map_replications<T, F>(count: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_replications_parallel(count, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_replications_sequential(count, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let square = |r: u64| r * r;
        let seq = map_replications_sequential(50, square);
        assert_eq!(seq, (0..50).map(square).collect::<Vec<_>>());
        assert_eq!(map_replications(50, square), seq);
    }
}
