//! Sparse rows and a banded Cholesky factorization, sized for problems with
//! per-timestep block coupling.

/// Compressed sparse row matrix. Rows keep sorted, deduplicated columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    pub fn from_rows(ncols: usize, rows: &[Vec<(usize, f64)>]) -> Csr {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in rows {
            let mut entries: Vec<(usize, f64)> = row.clone();
            entries.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
            for (c, v) in entries {
                assert!(c < ncols, "column {c} out of bounds ({ncols})");
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 += v,
                    _ => merged.push((c, v)),
                }
            }
            for (c, v) in merged {
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Csr { nrows: rows.len(), ncols, indptr, indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    /// `out = M x`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(out.len(), self.nrows);
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for i in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[i] * x[self.indices[i]];
            }
            out[r] = acc;
        }
    }

    /// `out = M^T x`, with `out` zeroed here.
    pub fn matvec_transpose(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(out.len(), self.ncols);
        out.fill(0.0);
        for r in 0..self.nrows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for i in self.indptr[r]..self.indptr[r + 1] {
                out[self.indices[i]] += self.values[i] * xr;
            }
        }
    }

    pub fn for_each_entry_mut(&mut self, mut f: impl FnMut(usize, usize, &mut f64)) {
        for r in 0..self.nrows {
            for i in self.indptr[r]..self.indptr[r + 1] {
                f(r, self.indices[i], &mut self.values[i]);
            }
        }
    }

    pub fn col_inf_norms(&self) -> Vec<f64> {
        let mut norms = vec![0.0f64; self.ncols];
        for i in 0..self.values.len() {
            let c = self.indices[i];
            norms[c] = norms[c].max(self.values[i].abs());
        }
        norms
    }

    pub fn row_inf_norms(&self) -> Vec<f64> {
        (0..self.nrows)
            .map(|r| self.row(r).map(|(_, v)| v.abs()).fold(0.0, f64::max))
            .collect()
    }

    /// Max |row span| over rows: the bandwidth contribution of `M^T D M`.
    pub fn max_row_span(&self) -> usize {
        (0..self.nrows)
            .filter_map(|r| {
                let cols = &self.indices[self.indptr[r]..self.indptr[r + 1]];
                match (cols.first(), cols.last()) {
                    (Some(a), Some(b)) => Some(b - a),
                    _ => None,
                }
            })
            .max()
            .unwrap_or(0)
    }
}

/// Symmetric matrix stored as lower-triangular diagonals within a fixed
/// bandwidth: entry `(i, j)` with `0 <= i - j <= bandwidth` lives at
/// `data[j * (bandwidth + 1) + (i - j)]`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    pub n: usize,
    pub bandwidth: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bandwidth: usize) -> BandMatrix {
        BandMatrix { n, bandwidth, data: vec![0.0; n * (bandwidth + 1)] }
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(hi - lo <= self.bandwidth);
        self.data[lo * (self.bandwidth + 1) + (hi - lo)] += v;
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * (self.bandwidth + 1) + (i - j)]
    }
}

/// Lower-triangular banded Cholesky factor.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
#[error("matrix is not positive definite (pivot {pivot:.3e} at {index})")]
pub struct NotPositiveDefinite {
    pub index: usize,
    pub pivot: f64,
}

impl BandedCholesky {
    pub fn factor(k: &BandMatrix) -> Result<BandedCholesky, NotPositiveDefinite> {
        let n = k.n;
        let bw = k.bandwidth;
        let mut l = vec![0.0; n * (bw + 1)];
        let idx = |i: usize, j: usize| j * (bw + 1) + (i - j);
        for j in 0..n {
            let start = j.saturating_sub(bw);
            let mut diag = k.get(j, j);
            for p in start..j {
                let v = l[idx(j, p)];
                diag -= v * v;
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(NotPositiveDefinite { index: j, pivot: diag });
            }
            let root = diag.sqrt();
            l[idx(j, j)] = root;
            let row_end = (j + bw + 1).min(n);
            for i in j + 1..row_end {
                let mut v = k.get(i, j);
                let lo = start.max(i.saturating_sub(bw));
                for p in lo..j {
                    v -= l[idx(i, p)] * l[idx(j, p)];
                }
                l[idx(i, j)] = v / root;
            }
        }
        Ok(BandedCholesky { n, bandwidth: bw, data: l })
    }

    /// Solves `L L^T x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        let bw = self.bandwidth;
        let idx = |i: usize, j: usize| j * (bw + 1) + (i - j);
        for i in 0..self.n {
            let start = i.saturating_sub(bw);
            let mut v = b[i];
            for j in start..i {
                v -= self.data[idx(i, j)] * b[j];
            }
            b[i] = v / self.data[idx(i, i)];
        }
        for i in (0..self.n).rev() {
            let end = (i + bw + 1).min(self.n);
            let mut v = b[i];
            for j in i + 1..end {
                v -= self.data[idx(j, i)] * b[j];
            }
            b[i] = v / self.data[idx(i, i)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn csr_matvec_and_transpose() {
        // [1 2 0; 0 0 3]
        let m = Csr::from_rows(3, &[vec![(0, 1.0), (1, 2.0)], vec![(2, 3.0)]]);
        assert_eq!(m.nnz(), 3);
        let mut out = vec![0.0; 2];
        m.matvec(&[1.0, 1.0, 2.0], &mut out);
        assert_eq!(out, vec![3.0, 6.0]);
        let mut out_t = vec![0.0; 3];
        m.matvec_transpose(&[1.0, 2.0], &mut out_t);
        assert_eq!(out_t, vec![1.0, 2.0, 6.0]);
    }

    #[test]
    fn csr_merges_duplicate_columns() {
        let m = Csr::from_rows(2, &[vec![(1, 1.0), (1, 2.5), (0, 1.0)]]);
        let row: Vec<(usize, f64)> = m.row(0).collect();
        assert_eq!(row, vec![(0, 1.0), (1, 3.5)]);
    }

    #[test]
    fn banded_cholesky_solves_random_spd_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let n = rng.gen_range(3..40);
            let bw = rng.gen_range(1..n.min(8));
            // SPD within the band: diagonally dominant.
            let mut k = BandMatrix::zeros(n, bw);
            for i in 0..n {
                k.add(i, i, rng.gen_range(2.0..4.0) + 2.0 * bw as f64);
                for j in i.saturating_sub(bw)..i {
                    k.add(i, j, rng.gen_range(-1.0..1.0));
                }
            }
            let x_true: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            // b = K x via the band structure.
            let mut b = vec![0.0; n];
            for i in 0..n {
                for j in i.saturating_sub(bw)..=(i + bw).min(n - 1) {
                    let v = if j <= i { k.get(i, j) } else { k.get(j, i) };
                    b[i] += v * x_true[j];
                }
            }
            let chol = BandedCholesky::factor(&k).unwrap();
            chol.solve(&mut b);
            for i in 0..n {
                assert!((b[i] - x_true[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut k = BandMatrix::zeros(2, 1);
        k.add(0, 0, 1.0);
        k.add(1, 1, -1.0);
        assert!(BandedCholesky::factor(&k).is_err());
    }
}
