//! Execution policy for the data-parallel inner loops.
//!
//! Every hot loop in the crate (convolution output indices, oracle sums,
//! sampling sweeps) is written as an index map through [`Exec`]. With the
//! `parallel` feature the `Par` variant fans out over rayon; without it both
//! variants run the same sequential code. Results are identical either way:
//! each output slot is computed by one closure call with a fixed inner
//! summation order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Seq,
    Par,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Par
        } else {
            Exec::Seq
        }
    }
}

impl Exec {
    /// Evaluate `f(0..len)` into a vector, in index order.
    pub fn map<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Par => (0..len).into_par_iter().map(f).collect(),
            _ => (0..len).map(f).collect(),
        }
    }

    /// Fill `out[k] = f(k)` in place.
    pub fn fill<T, F>(self, out: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Par => out.par_iter_mut().enumerate().for_each(|(k, o)| *o = f(k)),
            _ => out.iter_mut().enumerate().for_each(|(k, o)| *o = f(k)),
        }
    }
}
