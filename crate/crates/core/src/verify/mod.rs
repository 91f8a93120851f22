//! Grid-sweep verification of the structural identities.

pub mod grid;

use std::sync::OnceLock;

use rayon::prelude::*;

/// Worker pool sized by `PARACONTACT_THREADS`, or by rayon's default.
pub fn thread_pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let threads = std::env::var("PARACONTACT_THREADS")
            .ok()
            .and_then(|s| s.trim().parse::<usize>().ok())
            .unwrap_or(0);
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool")
    })
}

/// Maps `f` over points in parallel, preserving order.
pub fn map_points<T: Send>(points: &[Vec<f64>], f: impl Fn(&[f64]) -> T + Sync) -> Vec<T> {
    thread_pool().install(|| points.par_iter().map(|u| f(u)).collect())
}

mod checks;
pub mod report;

pub use checks::{
    apply_default_expectations, builtin_claims, check_all, check_fundamental, check_lemma_consequences,
    check_parallelism, check_theorem_3_2, default_grid, rank_h_at, CheckOptions, Sweep, Tamper, Tolerances,
};
pub use report::{CheckEntry, CheckReport, Expect, GridSummary, NONZERO_FACTOR};
