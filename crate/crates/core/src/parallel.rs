//! Data-parallel execution over independent work items.
//!
//! With the `parallel` feature, [`Execution::Parallel`] fans out over the
//! rayon pool. Without it, both variants run sequentially, so callers never
//! need to branch on the feature themselves.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether work actually runs concurrently in this build.
    pub fn is_concurrent(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Applies `f` to every item, returning results in item order.
pub fn map_mut<T, R, F>(exec: Execution, items: &mut [T], f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(&mut T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Execution::Parallel {
        use rayon::prelude::*;
        return items.par_iter_mut().map(f).collect();
    }
    let _ = exec;
    items.iter_mut().map(f).collect()
}

/// Like [`map_mut`] over shared items.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Execution::Parallel {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_preserve_order() {
        let mut items: Vec<u64> = (0..100).collect();
        let seq = map_mut(Execution::Sequential, &mut items, |x| *x * 2);
        let par = map_mut(Execution::Parallel, &mut items, |x| *x * 2);
        assert_eq!(seq, par);
        assert_eq!(map(Execution::Parallel, &items, |x| x + 1)[99], 100);
    }
}
