//! Data-parallel helpers.
//!
//! With the `parallel` feature these run on the rayon pool, otherwise they
//! fall back to plain iterators. Results are always collected in index order
//! and every reduction is performed sequentially afterwards, so numeric
//! output is bit-identical with and without the feature.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Row count below which sparse kernels stay sequential; the pool overhead
/// exceeds the work for desk-scale meshes.
pub const MIN_PARALLEL_LEN: usize = 16_384;

/// Maps `f` over `0..n`, returning results in index order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps `f` over a slice, returning results in input order.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Fills `out[i] = f(i)`, in parallel only when `out` is long enough to pay
/// for it.
pub fn fill_indexed<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if out.len() >= MIN_PARALLEL_LEN {
        out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
        return;
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o = f(i);
    }
}

/// Whether this build runs the parallel paths.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Number of worker threads the current pool would use.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

pub const THREADS_ENV: &str = "CHEMO_IDENT_THREADS";

/// Parses a thread cap; empty means "no cap".
pub fn parse_thread_cap(value: &str) -> crate::Result<Option<usize>> {
    let v = value.trim();
    if v.is_empty() {
        return Ok(None);
    }
    match v.parse::<usize>() {
        Ok(n) if n > 0 => Ok(Some(n)),
        _ => Err(crate::Error::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got '{value}'"))),
    }
}

/// Installs a global pool capped by `CHEMO_IDENT_THREADS` and returns the
/// effective thread count. Calling it twice is harmless; the first pool
/// wins. Without the `parallel` feature the variable is still validated.
pub fn init_thread_pool_from_env() -> crate::Result<usize> {
    let cap = match std::env::var(THREADS_ENV) {
        Ok(v) => parse_thread_cap(&v)?,
        Err(_) => None,
    };
    #[cfg(feature = "parallel")]
    if let Some(n) = cap {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = cap;
    Ok(current_threads())
}
