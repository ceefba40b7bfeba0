//! Order-preserving parallel map used by the grid scans.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Worker pool handed to scans. Results never depend on the worker count:
/// `map` preserves input order and every reduction downstream is a `max`.
#[derive(Default)]
pub struct Workers {
    pool: Option<rayon::ThreadPool>,
}

impl Workers {
    pub fn serial() -> Self {
        Self { pool: None }
    }

    pub fn new(threads: usize) -> Result<Self> {
        if threads <= 1 {
            return Ok(Self::serial());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Precondition(format!("cannot start worker pool: {e}")))?;
        Ok(Self { pool: Some(pool) })
    }

    pub fn threads(&self) -> usize {
        self.pool.as_ref().map_or(1, |p| p.current_num_threads())
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match &self.pool {
            None => items.iter().map(f).collect(),
            Some(pool) => pool.install(|| items.par_iter().map(f).collect()),
        }
    }
}

impl std::fmt::Debug for Workers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workers")
            .field("threads", &self.threads())
            .finish()
    }
}
