//! Sequential or data-parallel execution of independent work.
//!
//! With the `parallel` feature disabled, [`Execution::Parallel`] falls back to
//! sequential execution; results are identical either way.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Order-preserving map.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Execution::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            Execution::Parallel => items.iter().map(f).collect(),
        }
    }

    /// Folds with an associative operator as a balanced tree, so both modes
    /// combine operands of similar size.
    pub fn reduce<T, F>(self, items: Vec<T>, op: F) -> Option<T>
    where
        T: Send,
        F: Fn(T, T) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => pairwise(items, op),
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items.into_par_iter().reduce_with(op)
            }
            #[cfg(not(feature = "parallel"))]
            Execution::Parallel => pairwise(items, op),
        }
    }
}

fn pairwise<T, F: Fn(T, T) -> T>(mut items: Vec<T>, op: F) -> Option<T> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => op(a, b),
                None => a,
            });
        }
        items = next;
    }
    items.pop()
}
