//! Scheduling of independent work units.
//!
//! Every work unit owns its random stream, so the parallel and sequential
//! paths return identical results in identical order.

use crate::data::Execution;
use crate::error::Result;

pub(crate) fn try_map_indexed<T, F>(n: usize, execution: Execution, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}
