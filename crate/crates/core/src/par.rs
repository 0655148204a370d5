//! Data-parallel execution helpers.
//!
//! Hot loops (box scoring, block matching, affinity rows, KDE batches) go
//! through [`map_range`]. With the `parallel` feature they run on the rayon
//! pool when [`Execution::Parallel`] is requested; otherwise, or when the
//! feature is disabled, they run sequentially. Both paths produce results in
//! index order, so outputs are identical regardless of the mode.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this mode will actually fan out on the current build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `f` over `0..n`, collecting results in index order.
pub fn map_range<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if exec == Execution::Parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Applies `f` to each mutable chunk of `data` (chunk index passed along).
pub fn for_each_chunk_mut<T, F>(exec: Execution, data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if exec == Execution::Parallel {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = exec;
    data.chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let a = map_range(Execution::Sequential, 1000, |i| i * i);
        let b = map_range(Execution::Parallel, 1000, |i| i * i);
        assert_eq!(a, b);

        let mut x = vec![0usize; 103];
        let mut y = vec![0usize; 103];
        for_each_chunk_mut(Execution::Sequential, &mut x, 10, |ci, c| {
            c.iter_mut().enumerate().for_each(|(j, v)| *v = ci * 10 + j)
        });
        for_each_chunk_mut(Execution::Parallel, &mut y, 10, |ci, c| {
            c.iter_mut().enumerate().for_each(|(j, v)| *v = ci * 10 + j)
        });
        assert_eq!(x, y);
        assert_eq!(x[57], 57);
    }
}
