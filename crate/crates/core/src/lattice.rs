//! Dense square matrices indexed by pairs of lattice sites.

use std::ops::{Index, IndexMut};

use crate::C64;

/// An `N x N` complex matrix over lattice sites, stored row-major.
///
/// Entry `(i, j)` uses storage indices; site label `s` maps to `s + M`.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteMatrix {
    n: usize,
    data: Vec<C64>,
}

impl SiteMatrix {
    pub fn zeros(n: usize) -> Self {
        SiteMatrix { n, data: vec![C64::new(0.0, 0.0); n * n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        SiteMatrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.n).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        SiteMatrix::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        SiteMatrix { n: self.n, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    /// Entry under the lattice reflection `(i, j) -> (N-1-i, N-1-j)`.
    pub fn reflected(&self) -> Self {
        let last = self.n - 1;
        SiteMatrix::from_fn(self.n, |i, j| self[(last - i, last - j)])
    }

    pub fn fill_zero(&mut self) {
        self.data.fill(C64::new(0.0, 0.0));
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, z| acc.max(z.norm()))
    }

    pub fn max_abs_diff(&self, other: &SiteMatrix) -> f64 {
        assert_eq!(self.n, other.n);
        self.data.iter().zip(&other.data).fold(0.0, |acc, (a, b)| acc.max((a - b).norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &SiteMatrix) {
        for (y, x) in self.data.iter_mut().zip(&x.data) {
            *y += x * a;
        }
    }

    /// Writes the nearest-neighbour transport of `x` into `out`:
    ///
    /// `out[i,j] = col * (x[i,j-1] + x[i,j+1]) + row * (x[i-1,j] + x[i+1,j]) - damping * x[i,j]`
    ///
    /// Neighbours outside the lattice read as zero (open boundaries).
    pub fn hop_into(x: &SiteMatrix, out: &mut SiteMatrix, col: C64, row: C64, damping: f64) {
        SiteMatrix::hop_window_into(x, out, col, row, damping, 0..x.n);
    }

    /// [`SiteMatrix::hop_into`] restricted to rows and columns in `window`;
    /// entries of `out` outside it are left untouched.
    pub fn hop_window_into(
        x: &SiteMatrix,
        out: &mut SiteMatrix,
        col: C64,
        row: C64,
        damping: f64,
        window: std::ops::Range<usize>,
    ) {
        let n = x.n;
        debug_assert_eq!(out.n, n);
        debug_assert!(window.end <= n);
        let zero = C64::new(0.0, 0.0);
        let zero_row = vec![zero; n];
        let (lo, hi) = (window.start, window.end);
        if lo >= hi {
            return;
        }
        let mid = lo.max(1)..hi.min(n - 1);
        for i in window {
            let cur = x.row(i);
            let up = if i > 0 { x.row(i - 1) } else { &zero_row[..] };
            let down = if i + 1 < n { x.row(i + 1) } else { &zero_row[..] };
            let dst = &mut out.data[i * n..(i + 1) * n];
            let mut edge = |j: usize| {
                let left = if j > 0 { cur[j - 1] } else { zero };
                let right = if j + 1 < n { cur[j + 1] } else { zero };
                dst[j] = col * (left + right) + row * (up[j] + down[j]) - cur[j] * damping;
            };
            if lo == 0 {
                edge(0);
            }
            if hi == n && n > 1 {
                edge(n - 1);
            }
            for j in mid.clone() {
                dst[j] = col * (cur[j - 1] + cur[j + 1]) + row * (up[j] + down[j]) - cur[j] * damping;
            }
        }
    }
}

impl Index<(usize, usize)> for SiteMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for SiteMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.n + j]
    }
}
