//! Sequential / data-parallel execution of independent indexed jobs.
//!
//! Every job receives only its index and must derive all randomness from it,
//! so both modes return identical, index-ordered results. Without the
//! `parallel` feature, [`ExecMode::Parallel`] runs sequentially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    Sequential,
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

impl ExecMode {
    pub fn map<T, F>(self, count: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            ExecMode::Parallel => {
                use rayon::prelude::*;
                (0..count).into_par_iter().map(job).collect()
            }
            _ => (0..count).map(job).collect(),
        }
    }

    /// Like [`map`](Self::map) but stops at the first error (in index order
    /// for sequential runs).
    pub fn try_map<T, E, F>(self, count: usize, job: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            ExecMode::Parallel => {
                use rayon::prelude::*;
                (0..count).into_par_iter().map(job).collect()
            }
            _ => (0..count).map(job).collect(),
        }
    }
}
