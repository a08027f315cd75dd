use nalgebra::DVector;

use super::sparse::CsrMatrix;

/// Symmetric positive-definite matrix in lower band storage, factored in
/// place by Cholesky. Cost is `O(N b²)` for half-bandwidth `b`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    /// row `i` holds entries `(i, i-bw) ..= (i, i)`
    data: Vec<f64>,
}

impl BandedCholesky {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (self.bw + j - i)
    }

    /// Adds `v` to entry `(i, j)`; the upper triangle maps to the lower.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i},{j}) outside bandwidth {}", self.bw);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// Adds the lower triangle of a symmetric sparse matrix scaled by `alpha`.
    pub fn add_symmetric(&mut self, m: &CsrMatrix, alpha: f64) {
        for (r, c, v) in m.triplets() {
            if c <= r {
                self.add(r, c, alpha * v);
            }
        }
    }

    /// Adds `Aᵀ diag(w) A`.
    pub fn add_gram(&mut self, a: &CsrMatrix, w: &DVector<f64>) {
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..a.nrows() {
            if w[r] == 0.0 {
                continue;
            }
            row.clear();
            row.extend(a.row(r));
            for (p, &(ci, vi)) in row.iter().enumerate() {
                for &(cj, vj) in &row[..=p] {
                    self.add(ci, cj, w[r] * vi * vj);
                }
            }
        }
    }

    /// Half-bandwidth of `Aᵀ A` without forming it.
    pub fn gram_bandwidth(a: &CsrMatrix) -> usize {
        (0..a.nrows())
            .map(|r| {
                let mut lo = usize::MAX;
                let mut hi = 0;
                for (c, _) in a.row(r) {
                    lo = lo.min(c);
                    hi = hi.max(c);
                }
                if lo == usize::MAX {
                    0
                } else {
                    hi - lo
                }
            })
            .max()
            .unwrap_or(0)
    }

    /// Factors in place. Returns `false` if a pivot is not positive.
    pub fn factor(&mut self) -> bool {
        let bw = self.bw;
        let w = bw + 1;
        for i in 0..self.n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = self.data[i * w + bw + j - i];
                let ri = i * w + bw - i;
                let rj = j * w + bw - j;
                for k in k0..j {
                    s -= self.data[ri + k] * self.data[rj + k];
                }
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return false;
                    }
                    self.data[i * w + bw] = s.sqrt();
                } else {
                    self.data[i * w + bw + j - i] = s / self.data[j * w + bw];
                }
            }
        }
        true
    }

    /// Solves `L Lᵀ x = b` in place after `factor`.
    pub fn solve_in_place(&self, b: &mut DVector<f64>) {
        let bw = self.bw;
        let w = bw + 1;
        for i in 0..self.n {
            let j0 = i.saturating_sub(bw);
            let ri = i * w + bw - i;
            let mut s = b[i];
            for j in j0..i {
                s -= self.data[ri + j] * b[j];
            }
            b[i] = s / self.data[i * w + bw];
        }
        for i in (0..self.n).rev() {
            b[i] /= self.data[i * w + bw];
            let bi = b[i];
            let j0 = i.saturating_sub(bw);
            let ri = i * w + bw - i;
            for j in j0..i {
                b[j] -= self.data[ri + j] * bi;
            }
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(&mut x);
        x
    }
}
