use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EncodedPair, PAD};

/// Row-major `rows × cols` grid of ids or mask flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

pub type IdMatrix = Grid<u32>;

impl<T: Copy> Grid<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(rows * cols, data.len(), "grid data length");
        Grid { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }
}

/// Padded, masked mini-batch. Row `i` of every matrix belongs to `indices[i]` of the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub source: IdMatrix,
    pub source_mask: Grid<u8>,
    pub target: IdMatrix,
    pub target_mask: Grid<u8>,
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Pad `pairs` (in the given order) into one batch.
    pub fn from_pairs(pairs: &[&EncodedPair], indices: Vec<usize>) -> Batch {
        let (source, source_mask) = pad(pairs.iter().map(|p| p.source_ids.as_slice()));
        let (target, target_mask) = pad(pairs.iter().map(|p| p.target_ids.as_slice()));
        Batch {
            source,
            source_mask,
            target,
            target_mask,
            indices,
        }
    }

    /// Number of supervised target positions (every non-PAD token after the first column).
    pub fn target_tokens(&self) -> usize {
        (0..self.target.rows())
            .map(|r| {
                self.target_mask
                    .row(r)
                    .iter()
                    .skip(1)
                    .filter(|&&m| m == 1)
                    .count()
            })
            .sum()
    }
}

fn pad<'a>(seqs: impl Iterator<Item = &'a [u32]> + Clone) -> (IdMatrix, Grid<u8>) {
    let rows = seqs.clone().count();
    let cols = seqs.clone().map(|s| s.len()).max().unwrap_or(0);
    let mut ids = vec![PAD; rows * cols];
    let mut mask = vec![0u8; rows * cols];
    for (r, s) in seqs.enumerate() {
        ids[r * cols..r * cols + s.len()].copy_from_slice(s);
        mask[r * cols..r * cols + s.len()].fill(1);
    }
    (Grid::new(rows, cols, ids), Grid::new(rows, cols, mask))
}

/// Deterministic permutation of `0..n` for `seed`.
pub fn shuffle_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Shuffle by `seed`, cut into batches of `batch_size` (the last may be short), pad and mask.
pub fn make_batches(pairs: &[EncodedPair], batch_size: usize, seed: u64) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch_size must be ≥ 1");
    let order = shuffle_order(pairs.len(), seed);
    order
        .chunks(batch_size)
        .map(|idx| {
            let members: Vec<&EncodedPair> = idx.iter().map(|&i| &pairs[i]).collect();
            Batch::from_pairs(&members, idx.to_vec())
        })
        .collect()
}
