use rand::seq::SliceRandom;

use super::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

fn validate_fractions(fractions: &[f64]) -> Result<()> {
    if fractions.is_empty() {
        return Err(Error::config("at least one split fraction is required"));
    }
    if fractions.iter().any(|&f| !(f > 0.0) || !f.is_finite()) {
        return Err(Error::config(format!("split fractions must be positive, got {fractions:?}")));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split fractions sum to {total}, expected 1")));
    }
    Ok(())
}

/// Largest-remainder apportionment of `n` items.
fn apportion(n: usize, fractions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Index sets for each fraction, stratified by `(y, s)` cell so every part
/// keeps the joint distribution. Cells with fewer rows than parts go
/// entirely to the first part.
pub fn split_indices<T: Scalar>(ds: &EmbeddingDataset<T>, fractions: &[f64], seed: u64) -> Result<Vec<Vec<usize>>> {
    validate_fractions(fractions)?;
    let mut cells = vec![Vec::new(); ds.n_classes() * ds.n_groups()];
    for i in 0..ds.len() {
        cells[ds.labels()[i] * ds.n_groups() + ds.groups()[i]].push(i);
    }
    let mut r = rng::seeded(seed);
    let mut parts = vec![Vec::new(); fractions.len()];
    for (c, members) in cells.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut r);
        if members.len() < fractions.len() {
            log::warn!(
                "cell (y={}, s={}) has {} rows for {} parts; all go to the first part",
                c / ds.n_groups(),
                c % ds.n_groups(),
                members.len(),
                fractions.len()
            );
            parts[0].extend_from_slice(members);
            continue;
        }
        let mut start = 0;
        for (p, count) in apportion(members.len(), fractions).into_iter().enumerate() {
            parts[p].extend_from_slice(&members[start..start + count]);
            start += count;
        }
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(parts)
}

/// Stratified split into one dataset per fraction.
pub fn split<T: Scalar>(ds: &EmbeddingDataset<T>, fractions: &[f64], seed: u64) -> Result<Vec<EmbeddingDataset<T>>> {
    let parts = split_indices(ds, fractions, seed)?;
    if let Some(p) = parts.iter().position(Vec::is_empty) {
        return Err(Error::data(format!(
            "split part {p} is empty; the dataset has {} rows",
            ds.len()
        )));
    }
    parts.iter().map(|idx| ds.subset(idx)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub seed: u64,
    pub drop_last: bool,
}

impl BatchPlan {
    pub fn new(batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size < 2 {
            return Err(Error::config(format!("batch size must be at least 2, got {batch_size}")));
        }
        Ok(Self {
            batch_size,
            seed,
            drop_last: false,
        })
    }
}

/// Shuffled mini-batches covering `0..n` once for `epoch`. A trailing batch
/// with fewer than two rows is dropped since the critic needs a pairing.
pub fn batches(n: usize, plan: &BatchPlan, epoch: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(rng::derive(plan.seed, epoch)));
    order
        .chunks(plan.batch_size.max(1))
        .filter(|c| c.len() >= 2 && (!plan.drop_last || c.len() == plan.batch_size))
        .map(<[usize]>::to_vec)
        .collect()
}

/// Endless batch source: walks successive epochs of [`batches`].
#[derive(Debug, Clone)]
pub struct BatchStream {
    n: usize,
    plan: BatchPlan,
    epoch: u64,
    current: Vec<Vec<usize>>,
    pos: usize,
}

impl BatchStream {
    pub fn new(n: usize, plan: BatchPlan) -> Result<Self> {
        if n < 2 {
            return Err(Error::data(format!("cannot batch {n} rows")));
        }
        let mut plan = plan;
        plan.batch_size = plan.batch_size.min(n);
        Ok(Self {
            n,
            plan,
            epoch: 0,
            current: batches(n, &plan, 0),
            pos: 0,
        })
    }

    pub fn next_batch(&mut self) -> &[usize] {
        while self.pos >= self.current.len() {
            self.epoch += 1;
            self.current = batches(self.n, &self.plan, self.epoch);
            self.pos = 0;
        }
        self.pos += 1;
        &self.current[self.pos - 1]
    }
}
