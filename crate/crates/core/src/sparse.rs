//! Compressed sparse rows, an ILU(0) preconditioner and BiCGSTAB, enough for
//! the Newton systems of the monotone scheme.

use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    /// Builds from per-row `(col, value)` lists; duplicate columns are summed
    /// and every row gets a diagonal slot.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for (r, mut row) in rows.into_iter().enumerate() {
            row.push((r, 0.0));
            row.sort_by_key(|e| e.0);
            let mut last = usize::MAX;
            for (c, v) in row {
                if c == last {
                    *vals.last_mut().expect("previous entry") += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = c;
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(r, out)| {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *out = s;
        });
    }

    fn diag_positions(&self) -> Vec<usize> {
        (0..self.n)
            .map(|r| {
                let row = &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]];
                self.row_ptr[r] + row.binary_search(&r).expect("diagonal slot")
            })
            .collect()
    }
}

/// Incomplete LU factorization with the sparsity pattern of the matrix.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: Csr,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &Csr) -> Self {
        let mut lu = a.clone();
        let diag = lu.diag_positions();
        let n = lu.n;
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for k in start..end {
                pos[lu.cols[k]] = k;
            }
            for k in start..end {
                let j = lu.cols[k];
                if j >= i {
                    break;
                }
                let pivot = lu.vals[diag[j]];
                let factor = if pivot != 0.0 { lu.vals[k] / pivot } else { 0.0 };
                lu.vals[k] = factor;
                for m in diag[j] + 1..lu.row_ptr[j + 1] {
                    let p = pos[lu.cols[m]];
                    if p != usize::MAX {
                        lu.vals[p] -= factor * lu.vals[m];
                    }
                }
            }
            for k in start..end {
                pos[lu.cols[k]] = usize::MAX;
            }
            if lu.vals[diag[i]].abs() < 1e-300 {
                lu.vals[diag[i]] = 1e-300;
            }
        }
        Self { lu, diag }
    }

    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        let lu = &self.lu;
        for i in 0..lu.n {
            let mut s = b[i];
            for k in lu.row_ptr[i]..self.diag[i] {
                s -= lu.vals[k] * x[lu.cols[k]];
            }
            x[i] = s;
        }
        for i in (0..lu.n).rev() {
            let mut s = x[i];
            for k in self.diag[i] + 1..lu.row_ptr[i + 1] {
                s -= lu.vals[k] * x[lu.cols[k]];
            }
            x[i] = s / lu.vals[self.diag[i]];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.par_iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolve {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Right-preconditioned BiCGSTAB; `x` holds the initial guess on entry.
pub fn bicgstab(a: &Csr, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> LinearSolve {
    let n = a.n;
    let pre = Ilu0::new(a);
    let bnorm = dot(b, b).sqrt().max(1e-300);
    let mut r = vec![0.0; n];
    a.mul(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    for it in 0..max_iter {
        if rel <= tol {
            return LinearSolve {
                iterations: it,
                relative_residual: rel,
                converged: true,
            };
        }
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || omega == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        p.par_iter_mut()
            .zip(&r)
            .zip(&v)
            .for_each(|((pi, ri), vi)| *pi = ri + beta * (*pi - omega * vi));
        pre.solve(&p, &mut phat);
        a.mul(&phat, &mut v);
        let denom = dot(&r0, &v);
        if denom == 0.0 {
            break;
        }
        alpha = rho / denom;
        // r becomes s
        r.par_iter_mut().zip(&v).for_each(|(ri, vi)| *ri -= alpha * vi);
        let snorm = dot(&r, &r).sqrt() / bnorm;
        if snorm <= tol {
            x.par_iter_mut().zip(&phat).for_each(|(xi, pi)| *xi += alpha * pi);
            return LinearSolve {
                iterations: it + 1,
                relative_residual: snorm,
                converged: true,
            };
        }
        pre.solve(&r, &mut shat);
        a.mul(&shat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &r) / tt } else { 0.0 };
        x.par_iter_mut()
            .zip(&phat)
            .zip(&shat)
            .for_each(|((xi, pi), si)| *xi += alpha * pi + omega * si);
        r.par_iter_mut().zip(&t).for_each(|(ri, ti)| *ri -= omega * ti);
        rel = dot(&r, &r).sqrt() / bnorm;
    }
    LinearSolve {
        iterations: max_iter,
        relative_residual: rel,
        converged: rel <= tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(m: usize, shift: f64) -> Csr {
        let idx = |i: usize, j: usize| j * m + i;
        let mut rows = Vec::new();
        for j in 0..m {
            for i in 0..m {
                let mut row = vec![(idx(i, j), 4.0 + shift)];
                if i > 0 {
                    row.push((idx(i - 1, j), -1.0));
                }
                if i + 1 < m {
                    row.push((idx(i + 1, j), -1.2));
                }
                if j > 0 {
                    row.push((idx(i, j - 1), -0.8));
                }
                if j + 1 < m {
                    row.push((idx(i, j + 1), -1.0));
                }
                rows.push(row);
            }
        }
        Csr::from_rows(rows)
    }

    #[test]
    fn duplicates_are_summed() {
        let a = Csr::from_rows(vec![vec![(1, 1.0), (1, 2.0)], vec![(0, 1.0)]]);
        assert_eq!(a.nnz(), 4);
        let mut y = vec![0.0; 2];
        a.mul(&[1.0, 1.0], &mut y);
        assert_eq!(y, vec![3.0, 1.0]);
    }

    #[test]
    fn bicgstab_solves_nonsymmetric_system() {
        let a = laplacian(30, 0.01);
        let xs: Vec<f64> = (0..a.n()).map(|k| ((k * 37) % 11) as f64 - 5.0).collect();
        let mut b = vec![0.0; a.n()];
        a.mul(&xs, &mut b);
        let mut x = vec![0.0; a.n()];
        let out = bicgstab(&a, &b, &mut x, 1e-12, 500);
        assert!(out.converged, "{out:?}");
        let err = x.iter().zip(&xs).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn ilu_is_exact_for_tridiagonal() {
        let n = 50;
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, 3.0)];
                if i > 0 {
                    r.push((i - 1, -1.0));
                }
                if i + 1 < n {
                    r.push((i + 1, -1.5));
                }
                r
            })
            .collect();
        let a = Csr::from_rows(rows);
        let xs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b = vec![0.0; n];
        a.mul(&xs, &mut b);
        let mut x = vec![0.0; n];
        Ilu0::new(&a).solve(&b, &mut x);
        for (p, q) in x.iter().zip(&xs) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}
