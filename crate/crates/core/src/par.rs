//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) work items are spread over the
//! current rayon pool; without it every helper runs sequentially. Results are
//! always collected in index order and reduced sequentially afterwards, so the
//! outcome does not depend on the number of threads.

/// How a batch of independent work items is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// `Parallel` when the crate is built with rayon, `Sequential` otherwise.
    pub fn available(self) -> Execution {
        if cfg!(feature = "parallel") {
            self
        } else {
            Execution::Sequential
        }
    }
}

/// Evaluate `f(0..n)` and collect the results in index order.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec.available() {
        Execution::Sequential => (0..n).map(f).collect(),
        Execution::Parallel => par_map(n, f),
    }
}

/// Like [`map_indexed`] but short-circuits on the first error in index order.
pub fn try_map_indexed<T, E, F>(exec: Execution, n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(exec, n, f).into_iter().collect()
}

/// Apply `f` to every element of `out` together with its global index,
/// splitting the slice into contiguous chunks.
pub fn for_each_indexed_mut<T, F>(exec: Execution, out: &mut [T], min_chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    match exec.available() {
        Execution::Sequential => out.iter_mut().enumerate().for_each(|(i, v)| f(i, v)),
        Execution::Parallel => par_for_each(out, min_chunk, f),
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
fn par_for_each<T, F>(out: &mut [T], min_chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    use rayon::prelude::*;
    if out.len() <= min_chunk {
        out.iter_mut().enumerate().for_each(|(i, v)| f(i, v));
        return;
    }
    out.par_iter_mut()
        .with_min_len(min_chunk.max(1))
        .enumerate()
        .for_each(|(i, v)| f(i, v));
}

#[cfg(not(feature = "parallel"))]
fn par_for_each<T, F>(out: &mut [T], _min_chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    out.iter_mut().enumerate().for_each(|(i, v)| f(i, v));
}

/// Run `f` inside a pool with `threads` workers (0 = rayon default).
#[cfg(feature = "parallel")]
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R: Send>(_threads: usize, f: impl FnOnce() -> R + Send) -> R {
    f()
}
