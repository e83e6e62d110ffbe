//! Order-preserving execution of independent jobs (simulation worlds,
//! sweep points). Results come back in input order either way, so the
//! parallel and sequential builds produce identical output.

/// Maps `f` over `items`, on the rayon pool when the `parallel` feature
/// is enabled.
#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    sequential(items, f)
}

/// Plain in-order map on the calling thread.
pub fn sequential<T, R, F: Fn(T) -> R>(items: Vec<T>, f: F) -> Vec<R> {
    items.into_iter().map(f).collect()
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_input_order() {
        let v: Vec<u64> = (0..1000).collect();
        let out = map(v.clone(), |x| x * x);
        assert_eq!(out, sequential(v, |x| x * x));
    }
}
