//! Ensemble aggregation with a fixed reduction order.
//!
//! Realizations are grouped into fixed-size chunks. Each chunk is reduced
//! sequentially, chunks may run on any worker, and the chunk partials are
//! merged in chunk order. The floating-point result therefore depends only on
//! the realization count, never on the thread pool.

use rayon::prelude::*;
use serde::Serialize;

use crate::state::ProbabilityDistribution;

/// Realizations per reduction chunk.
pub const CHUNK: usize = 8;

/// Per-time-step mean and standard error.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Series {
    pub mean: Vec<f64>,
    pub err: Vec<f64>,
}

impl Series {
    pub fn exact(mean: Vec<f64>) -> Self {
        let err = vec![0.0; mean.len()];
        Self { mean, err }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn last_mean(&self) -> f64 {
        *self.mean.last().expect("empty series")
    }
}

/// Observables of one engine run, aggregated over realizations.
///
/// Standard errors are sample standard deviation over `sqrt(n_realizations)`
/// and are zero when a single realization was run.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    /// Step (measurement interval or kick) index of each time point.
    pub steps: Vec<u64>,
    /// Populations per basis state, for the two-level engine.
    pub populations: Vec<Series>,
    /// Second moment `<(m - m0)^2>`, for the rotor engine.
    pub energy: Option<Series>,
    pub participation: Option<Series>,
    pub leakage: Option<Series>,
    pub final_profile: Option<ProbabilityDistribution>,
    /// Label that the energy is measured from (`m0`).
    pub reference_label: i64,
    pub n_realizations: usize,
    pub leakage_max: f64,
    pub warnings: Vec<String>,
}

/// Running per-component mean and centered sum of squares (Welford), with
/// the pairwise merge of Chan et al.
#[derive(Clone, Debug)]
pub(crate) struct Moments {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    pub(crate) fn new(width: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; width],
            m2: vec![0.0; width],
        }
    }

    pub(crate) fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.mean.len());
        self.count += 1;
        let n = self.count as f64;
        for ((mean, m2), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *mean;
            *mean += delta / n;
            *m2 += delta * (v - *mean);
        }
    }

    pub(crate) fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.count += other.count;
    }

    #[cfg(test)]
    pub(crate) fn count(&self) -> u64 {
        self.count
    }

    pub(crate) fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Standard error of the mean per component.
    pub(crate) fn std_error(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.mean.len()];
        }
        let n = self.count as f64;
        self.m2
            .iter()
            .map(|m2| (m2.max(0.0) / (n - 1.0)).sqrt() / n.sqrt())
            .collect()
    }

    pub(crate) fn into_series(self) -> Series {
        let err = self.std_error();
        Series {
            mean: self.mean,
            err,
        }
    }
}

/// Runs `n` realizations and reduces them in a fixed order.
///
/// `run_one(i, acc)` accumulates realization `i` into a chunk-local
/// accumulator; `merge(total, chunk)` folds chunk partials in chunk order.
/// Uses the ambient rayon pool.
pub(crate) fn reduce_realizations<T, I, F, M, E>(
    n: usize,
    init: I,
    run_one: F,
    merge: M,
) -> Result<T, E>
where
    T: Send,
    I: Fn() -> T + Sync,
    F: Fn(usize, &mut T) -> Result<(), E> + Sync,
    M: Fn(&mut T, T),
    E: Send,
{
    let n_chunks = n.div_ceil(CHUNK);
    let partials: Vec<Result<T, E>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                run_one(i, &mut acc)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = init();
    for p in partials {
        merge(&mut total, p?);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_match_two_pass() {
        let data: Vec<[f64; 2]> = (0..37)
            .map(|i| {
                let x = i as f64;
                [x.sin() * 3.0 + 1.0, (x * 0.37).cos()]
            })
            .collect();
        let mut m = Moments::new(2);
        for d in &data {
            m.push(d);
        }
        for c in 0..2 {
            let n = data.len() as f64;
            let mean = data.iter().map(|d| d[c]).sum::<f64>() / n;
            let var = data.iter().map(|d| (d[c] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!((m.mean()[c] - mean).abs() < 1e-13);
            assert!((m.std_error()[c] - (var / n).sqrt()).abs() < 1e-13);
        }
    }

    #[test]
    fn merge_matches_sequential() {
        let mut seq = Moments::new(1);
        let mut a = Moments::new(1);
        let mut b = Moments::new(1);
        for i in 0..20 {
            let x = [(i as f64).powf(1.3)];
            seq.push(&x);
            if i < 7 { a.push(&x) } else { b.push(&x) }
        }
        a.merge(&b);
        assert_eq!(a.count(), 20);
        assert!((a.mean()[0] - seq.mean()[0]).abs() < 1e-12);
        assert!((a.std_error()[0] - seq.std_error()[0]).abs() < 1e-12);
    }

    #[test]
    fn single_realization_has_zero_error() {
        let mut m = Moments::new(3);
        m.push(&[1.0, 2.0, 3.0]);
        assert_eq!(m.std_error(), vec![0.0; 3]);
    }

    #[test]
    fn reduction_is_independent_of_pool_size() {
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                reduce_realizations::<_, _, _, _, ()>(
                    101,
                    || Moments::new(1),
                    |i, acc| {
                        acc.push(&[(i as f64 * 0.731).sin() * 1e3]);
                        Ok(())
                    },
                    |t, c| t.merge(&c),
                )
                .unwrap()
            })
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.mean()[0].to_bits(), b.mean()[0].to_bits());
        assert_eq!(a.std_error()[0].to_bits(), b.std_error()[0].to_bits());
    }
}
