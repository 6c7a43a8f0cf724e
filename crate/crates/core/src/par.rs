//! Work-queue execution for independent jobs.
//!
//! Experiment layers (grid search cells, per-batch-size rows, Monte-Carlo
//! replicas) are embarrassingly parallel. [`run_jobs`] maps a function over
//! indexed inputs and returns outputs in input order, so results are keyed
//! by cell regardless of completion order. With the `parallel` feature
//! (default) jobs run on rayon's global pool; without it, or with
//! `Jobs::Serial`, they run sequentially on the caller's thread.
//!
//! Determinism contract: a job must derive all of its randomness from its
//! own input (typically a [`crate::rng::SeedStream`] child keyed by index),
//! never from shared mutable state; then output is independent of the
//! worker count.

/// Worker-count selection for a job batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Jobs {
    /// Use rayon's global pool (all cores unless capped via
    /// `RAYON_NUM_THREADS` or a custom pool).
    #[default]
    Default,
    /// Run on the calling thread.
    Serial,
}

#[cfg(feature = "parallel")]
pub fn run_jobs<I, O, F>(inputs: Vec<I>, jobs: Jobs, f: F) -> Vec<O>
where
    I: Send,
    O: Send,
    F: Fn(usize, I) -> O + Sync + Send,
{
    use rayon::prelude::*;
    match jobs {
        Jobs::Serial => inputs
            .into_iter()
            .enumerate()
            .map(|(i, x)| f(i, x))
            .collect(),
        Jobs::Default => inputs
            .into_par_iter()
            .enumerate()
            .map(|(i, x)| f(i, x))
            .collect(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn run_jobs<I, O, F>(inputs: Vec<I>, _jobs: Jobs, f: F) -> Vec<O>
where
    I: Send,
    O: Send,
    F: Fn(usize, I) -> O + Sync + Send,
{
    inputs
        .into_iter()
        .enumerate()
        .map(|(i, x)| f(i, x))
        .collect()
}

/// Builds a scoped rayon pool capped at `n` threads and runs `op` inside it,
/// so `--jobs n` on the CLI bounds every `run_jobs` call underneath.
#[cfg(feature = "parallel")]
pub fn with_max_threads<R: Send>(n: usize, op: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .expect("failed to build thread pool")
        .install(op)
}

#[cfg(not(feature = "parallel"))]
pub fn with_max_threads<R: Send>(_n: usize, op: impl FnOnce() -> R + Send) -> R {
    op()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use rand::Rng;

    #[test]
    fn preserves_input_order() {
        let out = run_jobs((0..100).collect(), Jobs::Default, |i, x: i32| {
            (i as i32) * 1000 + x
        });
        for (i, v) in out.iter().enumerate() {
            assert_eq!(*v, (i as i32) * 1001);
        }
    }

    #[test]
    fn parallel_matches_serial_with_seeded_jobs() {
        let root = SeedStream::new(42);
        let work = |_, tag: u64| -> f64 { root.child(tag).rng().random() };
        let a = run_jobs((0..64).collect(), Jobs::Default, work);
        let b = run_jobs((0..64).collect(), Jobs::Serial, work);
        assert_eq!(a, b);
    }
}
