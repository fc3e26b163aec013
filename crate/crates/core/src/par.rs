//! Execution-mode dispatch for the data-parallel inner loops (environment
//! rollouts, evaluation episodes, minibatch gradients). Parallel execution
//! uses rayon behind the `parallel` feature; without the feature every mode
//! degrades to the sequential path. Both paths produce bit-identical results
//! because all reductions run over fixed-size chunks in index order.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Exec {
    /// The build's default: parallel when compiled with the feature.
    pub fn auto() -> Exec {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Default for Exec {
    fn default() -> Self {
        Exec::auto()
    }
}

/// Apply `f` to every element, in place.
pub fn for_each_mut<T, F>(exec: Exec, items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync,
{
    match exec {
        Exec::Sequential => {
            for (i, item) in items.iter_mut().enumerate() {
                f(i, item);
            }
        }
        Exec::Parallel => {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                items.par_iter_mut().enumerate().for_each(|(i, item)| f(i, item));
                return;
            }
            #[cfg(not(feature = "parallel"))]
            for (i, item) in items.iter_mut().enumerate() {
                f(i, item);
            }
        }
    }
}

/// Map every index to a value, preserving order.
pub fn map_indexed<U, F>(exec: Exec, n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    match exec {
        Exec::Sequential => (0..n).map(f).collect(),
        Exec::Parallel => {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                return (0..n).into_par_iter().map(f).collect();
            }
            #[cfg(not(feature = "parallel"))]
            (0..n).map(f).collect()
        }
    }
}

/// Fixed chunk width for deterministic parallel reductions.
pub const REDUCE_CHUNK: usize = 256;

/// Fold items into an accumulator deterministically: each fixed-size chunk is
/// folded sequentially (possibly on different threads), then chunk results
/// are merged in chunk order. The result is independent of thread count.
pub fn chunked_fold<T, A, FInit, FFold, FMerge>(
    exec: Exec,
    items: &[T],
    init: FInit,
    fold: FFold,
    merge: FMerge,
) -> A
where
    T: Sync,
    A: Send,
    FInit: Fn() -> A + Sync,
    FFold: Fn(&mut A, &T) + Sync,
    FMerge: Fn(&mut A, A),
{
    let chunk_results: Vec<A> = match exec {
        Exec::Sequential => items
            .chunks(REDUCE_CHUNK)
            .map(|chunk| {
                let mut acc = init();
                for item in chunk {
                    fold(&mut acc, item);
                }
                acc
            })
            .collect(),
        Exec::Parallel => {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                items
                    .par_chunks(REDUCE_CHUNK)
                    .map(|chunk| {
                        let mut acc = init();
                        for item in chunk {
                            fold(&mut acc, item);
                        }
                        acc
                    })
                    .collect()
            }
            #[cfg(not(feature = "parallel"))]
            items
                .chunks(REDUCE_CHUNK)
                .map(|chunk| {
                    let mut acc = init();
                    for item in chunk {
                        fold(&mut acc, item);
                    }
                    acc
                })
                .collect()
        }
    };
    let mut total = init();
    for part in chunk_results {
        merge(&mut total, part);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_on_map() {
        let seq = map_indexed(Exec::Sequential, 100, |i| (i as f64).sqrt());
        let par = map_indexed(Exec::Parallel, 100, |i| (i as f64).sqrt());
        assert_eq!(seq, par);
    }

    #[test]
    fn chunked_fold_is_mode_independent() {
        let items: Vec<f64> = (0..1000).map(|i| (i as f64) * 0.371).collect();
        let sum = |exec| {
            chunked_fold(
                exec,
                &items,
                || 0.0f64,
                |acc, x| *acc += x.sin(),
                |acc, part| *acc += part,
            )
        };
        // Bitwise equality is the contract, not approximate equality.
        assert_eq!(sum(Exec::Sequential).to_bits(), sum(Exec::Parallel).to_bits());
    }
}
