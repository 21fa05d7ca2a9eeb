//! Parallel/sequential execution switch.
//!
//! With the `parallel` feature (default) independent proof iterations run on a
//! rayon pool; `Parallelism::Sequential` forces single-threaded execution at
//! runtime so benchmarks can compare both modes in one binary. Without the
//! feature only the sequential path is compiled.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    /// Use the rayon thread pool (requires the `parallel` feature).
    Rayon,
    /// Run everything on the calling thread.
    Sequential,
}

impl Default for Parallelism {
    #[cfg(feature = "parallel")]
    fn default() -> Self {
        Parallelism::Rayon
    }
    #[cfg(not(feature = "parallel"))]
    fn default() -> Self {
        Parallelism::Sequential
    }
}

/// Maps `f` over `0..n`, in parallel when requested and compiled in.
pub fn map_indexed<T, F>(mode: Parallelism, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if mode == Parallelism::Rayon {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = mode;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree() {
        let seq = map_indexed(Parallelism::Sequential, 64, |i| i * i);
        let par = map_indexed(Parallelism::default(), 64, |i| i * i);
        assert_eq!(seq, par);
    }
}
