//! Mixed-radix indexing over products of small finite sets.
//!
//! Joint actions, joint signals, joint types, and signal batches are
//! all ranked lexicographically: the first digit is the most
//! significant. All dense tables in this crate are flat `Vec<f64>`
//! addressed through these ranks.

/// A product space with per-coordinate cardinalities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductSpace {
    dims: Vec<usize>,
    count: usize,
}

impl ProductSpace {
    pub fn new(dims: Vec<usize>) -> Self {
        let count = dims.iter().product::<usize>().max(if dims.is_empty() { 1 } else { 0 });
        // An empty product has exactly one element (the empty tuple);
        // a product with a zero-sized coordinate has none.
        let count = if dims.is_empty() { 1 } else { count };
        ProductSpace { dims, count }
    }

    /// `len` coordinates, each of cardinality `base`.
    pub fn uniform(base: usize, len: usize) -> Self {
        ProductSpace::new(vec![base; len])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn arity(&self) -> usize {
        self.dims.len()
    }

    /// Number of tuples in the space.
    pub fn count(&self) -> usize {
        self.count
    }

    /// Rank of a tuple (lexicographic, first digit most significant).
    pub fn rank(&self, digits: &[usize]) -> usize {
        debug_assert_eq!(digits.len(), self.dims.len());
        let mut r = 0;
        for (d, &base) in digits.iter().zip(&self.dims) {
            debug_assert!(*d < base);
            r = r * base + d;
        }
        r
    }

    /// Inverse of [`rank`]: writes the tuple into `out`.
    pub fn digits_into(&self, mut rank: usize, out: &mut [usize]) {
        debug_assert_eq!(out.len(), self.dims.len());
        for i in (0..self.dims.len()).rev() {
            out[i] = rank % self.dims[i];
            rank /= self.dims[i];
        }
        debug_assert_eq!(rank, 0);
    }

    pub fn digits(&self, rank: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        self.digits_into(rank, &mut out);
        out
    }

    /// Iterate all tuples in rank order.
    pub fn iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.count()).map(move |r| self.digits(r))
    }

    /// Rank of the tuple equal to `digits` with coordinate `at` replaced by `value`.
    pub fn rank_with(&self, digits: &[usize], at: usize, value: usize) -> usize {
        let mut r = 0;
        for (i, (&d, &base)) in digits.iter().zip(&self.dims).enumerate() {
            let d = if i == at { value } else { d };
            r = r * base + d;
        }
        r
    }
}

/// Insert `value` at position `at` into a tuple, e.g. rebuilding a joint
/// tuple from one agent's coordinate and the remaining agents' tuple.
pub fn insert_at(minus: &[usize], at: usize, value: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(minus.len() + 1);
    out.extend_from_slice(&minus[..at]);
    out.push(value);
    out.extend_from_slice(&minus[at..]);
    out
}

/// Remove the coordinate at position `at` from a tuple.
pub fn remove_at(digits: &[usize], at: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(digits.len() - 1);
    out.extend_from_slice(&digits[..at]);
    out.extend_from_slice(&digits[at + 1..]);
    out
}

/// Renormalises `row` to sum to one. Returns `false` (and writes the
/// uniform distribution) when the total mass is not positive.
pub fn normalize_or_uniform(row: &mut [f64]) -> bool {
    let total: f64 = row.iter().sum();
    if total > 0.0 {
        for v in row.iter_mut() {
            *v /= total;
        }
        true
    } else {
        let u = 1.0 / row.len() as f64;
        for v in row.iter_mut() {
            *v = u;
        }
        false
    }
}

/// Largest absolute difference between two equally sized slices.
pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// L1 distance between two equally sized slices.
pub fn l1_diff(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}
