//! Sparse-matrix plumbing for the saddle-point solver: CSR storage,
//! preconditioned conjugate gradients and an incomplete-Cholesky
//! preconditioner. Everything is sequential with fixed orderings, so
//! repeated runs are bit-identical.

use crate::{Error, Result};

/// Compressed-sparse-row matrix with sorted, deduplicated column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(t.len());
        for (r, c, v) in t {
            debug_assert!(r < n_rows && c < n_cols);
            if let Some(last) = merged.last_mut() {
                if last.0 == r && last.1 == c {
                    last.2 += v;
                    continue;
                }
            }
            merged.push((r, c, v));
        }
        let mut row_ptr = vec![0usize; n_rows + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx: merged.iter().map(|e| e.1).collect(),
            values: merged.iter().map(|e| e.2).collect(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for r in 0..self.n_rows {
            let (cols, vals) = (
                &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]],
                &self.values[self.row_ptr[r]..self.row_ptr[r + 1]],
            );
            let mut sum = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                sum += v * x[*c];
            }
            y[r] = sum;
        }
    }

    /// `y = Aᵀ x`.
    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_rows);
        debug_assert_eq!(y.len(), self.n_cols);
        y.fill(0.0);
        for r in 0..self.n_rows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[k]] += self.values[k] * xr;
            }
        }
    }

    pub fn transpose(&self) -> Csr {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                t.push((self.col_idx[k], r, self.values[k]));
            }
        }
        Csr::from_triplets(self.n_cols, self.n_rows, t)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    /// Largest absolute asymmetry `max |A_ij − A_ji|`; zero for symmetric
    /// matrices up to representation.
    pub fn max_asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut worst = 0.0f64;
        for r in 0..self.n_rows {
            let (ca, va) = self.row(r);
            let (cb, vb) = t.row(r);
            let mut ia = 0;
            let mut ib = 0;
            while ia < ca.len() || ib < cb.len() {
                match (ca.get(ia), cb.get(ib)) {
                    (Some(&c1), Some(&c2)) if c1 == c2 => {
                        worst = worst.max((va[ia] - vb[ib]).abs());
                        ia += 1;
                        ib += 1;
                    }
                    (Some(&c1), Some(&c2)) if c1 < c2 => {
                        worst = worst.max(va[ia].abs());
                        ia += 1;
                    }
                    (Some(_), Some(_)) => {
                        worst = worst.max(vb[ib].abs());
                        ib += 1;
                    }
                    (Some(_), None) => {
                        worst = worst.max(va[ia].abs());
                        ia += 1;
                    }
                    (None, Some(_)) => {
                        worst = worst.max(vb[ib].abs());
                        ib += 1;
                    }
                    (None, None) => break,
                }
            }
        }
        worst
    }
}

pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

/// Identity preconditioner.
pub struct NoPrecond;

impl Preconditioner for NoPrecond {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

/// Diagonal (Jacobi) preconditioner.
pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(a: &Csr) -> Self {
        Self {
            inv_diag: a
                .diagonal()
                .iter()
                .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
                .collect(),
        }
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((z, r), d) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *z = r * d;
        }
    }
}

/// Zero-fill incomplete Cholesky factorization `A ≈ L Lᵀ` on the sparsity
/// pattern of the lower triangle. Falls back to a diagonally shifted copy
/// when a pivot degenerates.
pub struct Ic0 {
    l: Csr,
    lt: Csr,
}

impl Ic0 {
    pub fn new(a: &Csr) -> Result<Self> {
        assert_eq!(a.n_rows(), a.n_cols());
        let n = a.n_rows();
        let mut shift = 0.0;
        'retry: for _attempt in 0..40 {
            // lower-triangular pattern of A with the current diagonal shift
            let mut trips = Vec::new();
            for r in 0..n {
                let (cols, vals) = a.row(r);
                for (c, v) in cols.iter().zip(vals) {
                    if *c < r {
                        trips.push((r, *c, *v));
                    } else if *c == r {
                        trips.push((r, r, *v * (1.0 + shift)));
                    }
                }
            }
            let mut l = Csr::from_triplets(n, n, trips);
            for i in 0..n {
                let (start_i, end_i) = (l.row_ptr[i], l.row_ptr[i + 1]);
                debug_assert!(end_i > start_i && l.col_idx[end_i - 1] == i, "missing diagonal");
                for kk in start_i..end_i {
                    let k = l.col_idx[kk];
                    // restricted dot of rows i and k over columns < k
                    let mut dot = 0.0;
                    {
                        let (ri_cols, ri_vals) = (
                            &l.col_idx[start_i..kk],
                            &l.values[start_i..kk],
                        );
                        let (sk, ek) = (l.row_ptr[k], l.row_ptr[k + 1] - 1); // skip diag of k
                        let (rk_cols, rk_vals) = (&l.col_idx[sk..ek], &l.values[sk..ek]);
                        let mut a_ = 0;
                        let mut b_ = 0;
                        while a_ < ri_cols.len() && b_ < rk_cols.len() {
                            match ri_cols[a_].cmp(&rk_cols[b_]) {
                                std::cmp::Ordering::Less => a_ += 1,
                                std::cmp::Ordering::Greater => b_ += 1,
                                std::cmp::Ordering::Equal => {
                                    dot += ri_vals[a_] * rk_vals[b_];
                                    a_ += 1;
                                    b_ += 1;
                                }
                            }
                        }
                    }
                    if k < i {
                        let lkk = l.values[l.row_ptr[k + 1] - 1];
                        l.values[kk] = (l.values[kk] - dot) / lkk;
                    } else {
                        let pivot = l.values[kk] - dot;
                        if pivot <= 0.0 || !pivot.is_finite() {
                            shift = if shift == 0.0 { 1e-3 } else { shift * 4.0 };
                            if shift > 1e3 {
                                break;
                            }
                            continue 'retry;
                        }
                        l.values[kk] = pivot.sqrt();
                    }
                }
            }
            let lt = l.transpose();
            return Ok(Self { l, lt });
        }
        Err(Error::SolverFailure {
            context: "incomplete Cholesky factorization failed even with diagonal shifts".into(),
            history: vec![],
        })
    }
}

impl Preconditioner for Ic0 {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        // forward solve L y = r (y stored in z)
        for i in 0..n {
            let (cols, vals) = self.l.row(i);
            let mut sum = r[i];
            for (c, v) in cols.iter().zip(vals) {
                if *c < i {
                    sum -= v * z[*c];
                }
            }
            z[i] = sum / vals[cols.len() - 1];
        }
        // backward solve Lᵀ z = y; row i of Lᵀ holds (k ≥ i, L[k, i])
        for i in (0..n).rev() {
            let (cols, vals) = self.lt.row(i);
            let mut sum = z[i];
            let mut diag = 1.0;
            for (c, v) in cols.iter().zip(vals) {
                if *c > i {
                    sum -= v * z[*c];
                } else {
                    diag = *v;
                }
            }
            z[i] = sum / diag;
        }
    }
}

#[derive(Debug, Clone)]
pub struct PcgOutcome {
    pub iterations: usize,
    pub residual: f64,
}

/// Preconditioned conjugate gradients for SPD systems, fixed sequential
/// reductions. Converges when `‖r‖₂ ≤ max(rel_tol · ‖b‖₂, abs_tol)`.
pub fn pcg(
    a: &Csr,
    b: &[f64],
    x: &mut [f64],
    m: &dyn Preconditioner,
    rel_tol: f64,
    abs_tol: f64,
    max_iter: usize,
) -> Result<PcgOutcome> {
    let n = b.len();
    let norm_b = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let target = (rel_tol * norm_b).max(abs_tol);
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut res = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if res <= target {
        return Ok(PcgOutcome {
            iterations: 0,
            residual: res,
        });
    }
    let mut z = vec![0.0; n];
    m.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    let mut history = Vec::new();
    for it in 1..=max_iter {
        a.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::SolverFailure {
                context: format!("conjugate gradients broke down (pᵀAp = {pap:e})"),
                history,
            });
        }
        let alpha = rz / pap;
        for ((x, p), (r, ap)) in x.iter_mut().zip(&p).zip(r.iter_mut().zip(&ap)) {
            *x += alpha * p;
            *r -= alpha * ap;
        }
        res = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        history.push(res);
        if res <= target {
            return Ok(PcgOutcome {
                iterations: it,
                residual: res,
            });
        }
        m.apply(&r, &mut z);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for (p, z) in p.iter_mut().zip(&z) {
            *p = z + beta * *p;
        }
    }
    Err(Error::SolverFailure {
        context: format!("conjugate gradients hit the {max_iter}-iteration cap"),
        history,
    })
}

/// Direct dense solve of the bordered saddle system
/// `[A Dᵀ; D 0] [v; s] = [f; c]` with the pressure mean pinned by a
/// Lagrange multiplier on `Σ area·s = 0`. Oracle path for small systems.
pub fn dense_saddle_solve(
    a: &Csr,
    d: &Csr,
    f: &[f64],
    c: &[f64],
    areas: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    use nalgebra::{DMatrix, DVector};
    let n = a.n_rows();
    let m = d.n_rows();
    assert_eq!(d.n_cols(), n);
    assert_eq!(areas.len(), m);
    let size = n + m + 1;
    let mut full = DMatrix::<f64>::zeros(size, size);
    for r in 0..n {
        let (cols, vals) = a.row(r);
        for (cc, v) in cols.iter().zip(vals) {
            full[(r, *cc)] = *v;
        }
    }
    for r in 0..m {
        let (cols, vals) = d.row(r);
        for (cc, v) in cols.iter().zip(vals) {
            full[(n + r, *cc)] = *v;
            full[(*cc, n + r)] = *v;
        }
        full[(n + r, n + m)] = areas[r];
        full[(n + m, n + r)] = areas[r];
    }
    let mut rhs = DVector::<f64>::zeros(size);
    for (k, v) in f.iter().enumerate() {
        rhs[k] = *v;
    }
    for (k, v) in c.iter().enumerate() {
        rhs[n + k] = *v;
    }
    let lu = full.lu();
    let sol = lu.solve(&rhs).ok_or_else(|| Error::SolverFailure {
        context: "dense saddle factorization is singular".into(),
        history: vec![],
    })?;
    let v = sol.as_slice()[..n].to_vec();
    let s = sol.as_slice()[n..n + m].to_vec();
    Ok((v, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> Csr {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        Csr::from_triplets(n, n, t)
    }

    #[test]
    fn csr_matvec_and_duplicate_summing() {
        let a = Csr::from_triplets(2, 3, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 2, 4.0), (0, 1, -1.0)]);
        assert_eq!(a.nnz(), 3);
        let mut y = vec![0.0; 2];
        a.matvec(&[1.0, 2.0, 3.0], &mut y);
        assert_eq!(y, vec![3.0 - 2.0, 12.0]);
        let mut yt = vec![0.0; 3];
        a.matvec_transpose(&[1.0, 1.0], &mut yt);
        assert_eq!(yt, vec![3.0, -1.0, 4.0]);
    }

    #[test]
    fn csr_symmetry_probe() {
        let a = laplacian_1d(6);
        assert_eq!(a.max_asymmetry(), 0.0);
        let b = Csr::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 0.5)]);
        assert!((b.max_asymmetry() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pcg_solves_laplacian() {
        let n = 50;
        let a = laplacian_1d(n);
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; n];
        a.matvec(&x_true, &mut b);
        for precond in [true, false] {
            let mut x = vec![0.0; n];
            let out = if precond {
                let ic = Ic0::new(&a).unwrap();
                pcg(&a, &b, &mut x, &ic, 1e-13, 0.0, 10 * n).unwrap()
            } else {
                pcg(&a, &b, &mut x, &Jacobi::new(&a), 1e-13, 0.0, 10 * n).unwrap()
            };
            let err = x
                .iter()
                .zip(&x_true)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-9, "precond={precond} err={err:e} its={}", out.iterations);
        }
    }

    #[test]
    fn ic0_is_exact_for_tridiagonal() {
        // tridiagonal SPD matrices have no fill-in, so IC(0) is a complete
        // factorization and PCG converges in one iteration
        let n = 40;
        let a = laplacian_1d(n);
        let ic = Ic0::new(&a).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i % 5) as f64 - 2.0).collect();
        let mut x = vec![0.0; n];
        let out = pcg(&a, &b, &mut x, &ic, 1e-12, 0.0, 10).unwrap();
        assert!(out.iterations <= 2, "iterations = {}", out.iterations);
    }

    #[test]
    fn dense_saddle_recovers_divergence_free_solution() {
        // one face shared by two cells: column sums of D vanish, mirroring
        // the real constraint structure
        let a = Csr::from_triplets(1, 1, vec![(0, 0, 2.0)]);
        let d = Csr::from_triplets(2, 1, vec![(0, 0, 1.0), (1, 0, -1.0)]);
        let (v, s) = dense_saddle_solve(&a, &d, &[1.0], &[0.3, -0.3], &[1.0, 1.0]).unwrap();
        // 2v + (s0 - s1) = 1, v = 0.3, s0 + s1 = 0 -> s0 = 0.2
        assert!((v[0] - 0.3).abs() < 1e-14);
        assert!((s[0] - 0.2).abs() < 1e-14);
        assert!((s[1] + 0.2).abs() < 1e-14);
    }
}
