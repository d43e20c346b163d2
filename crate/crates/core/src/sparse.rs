//! Sparse symmetric matrices and a fill-reducing sparse Cholesky factorization.
//!
//! Matrices are stored in compressed-sparse-column form with the full
//! symmetric pattern (both triangles), row indices sorted within each column.
//! The factorization is split into a symbolic phase (minimum-degree ordering,
//! elimination tree, column pattern of `L`) computed once per sparsity
//! pattern, and a numeric phase that can be repeated whenever the values
//! change but the pattern does not.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{GlpmError, Result};

/// Symmetric sparse matrix in CSC form holding both triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricCsc {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SymmetricCsc {
    /// Builds from `(i, j, v)` triplets. Off-diagonal triplets are mirrored,
    /// so each unordered pair should be given once; repeated entries are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut cols: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(GlpmError::NodeOutOfRange { node: i.max(j), n });
            }
            *cols[j].entry(i).or_insert(0.0) += v;
            if i != j {
                *cols[i].entry(j).or_insert(0.0) += v;
            }
        }
        Ok(Self::from_columns(n, cols))
    }

    fn from_columns(n: usize, cols: Vec<BTreeMap<usize, f64>>) -> Self {
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for col in cols {
            for (i, v) in col {
                row_idx.push(i);
                values.push(v);
            }
            col_ptr.push(row_idx.len());
        }
        SymmetricCsc {
            n,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        SymmetricCsc {
            n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(n: usize) -> Self {
        SymmetricCsc {
            n,
            col_ptr: vec![0; n + 1],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entries `(row, value)` of column `j`.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        match self.row_idx[range.clone()].binary_search(&i) {
            Ok(p) => self.values[range.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|j| self.column(j).all(|(i, v)| (self.get(j, i) - v).abs() <= tol))
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        // Symmetric storage: row i of A equals column i.
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in self.col_ptr[i]..self.col_ptr[i + 1] {
                acc += self.values[p] * x[self.row_idx[p]];
            }
            *yi = acc;
        }
    }

    /// `xᵀ A x`.
    pub fn quadratic(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for j in 0..self.n {
            let mut acc = 0.0;
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                acc += self.values[p] * x[self.row_idx[p]];
            }
            total += x[j] * acc;
        }
        total
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n]; self.n];
        for j in 0..self.n {
            for (i, v) in self.column(j) {
                dense[i][j] = v;
            }
        }
        dense
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Union pattern of two symmetric matrices with their values aligned, so that
/// `a·X + b·Y` can be formed without re-deriving the pattern.
#[derive(Debug, Clone)]
pub struct PatternUnion {
    pattern: SymmetricCsc,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl PatternUnion {
    pub fn new(x: &SymmetricCsc, y: &SymmetricCsc) -> Result<Self> {
        if x.dim() != y.dim() {
            return Err(GlpmError::dims(x.dim(), y.dim()));
        }
        let n = x.dim();
        let mut col_ptr = vec![0];
        let mut row_idx = Vec::new();
        let mut first = Vec::new();
        let mut second = Vec::new();
        for j in 0..n {
            let mut merged: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
            for (i, v) in x.column(j) {
                merged.entry(i).or_default().0 += v;
            }
            for (i, v) in y.column(j) {
                merged.entry(i).or_default().1 += v;
            }
            for (i, (a, b)) in merged {
                row_idx.push(i);
                first.push(a);
                second.push(b);
            }
            col_ptr.push(row_idx.len());
        }
        let values = vec![0.0; row_idx.len()];
        Ok(PatternUnion {
            pattern: SymmetricCsc {
                n,
                col_ptr,
                row_idx,
                values,
            },
            first,
            second,
        })
    }

    pub fn pattern(&self) -> &SymmetricCsc {
        &self.pattern
    }

    /// Returns `a·X + b·Y` on the union pattern.
    pub fn combine(&self, a: f64, b: f64) -> SymmetricCsc {
        let mut out = self.pattern.clone();
        for ((v, x), y) in out.values.iter_mut().zip(&self.first).zip(&self.second) {
            *v = a * x + b * y;
        }
        out
    }
}

/// Exact minimum-degree ordering on the explicit elimination graph.
///
/// Adjacency rows are bitsets, so eliminating a pivot of degree `k` costs
/// `O(k · n / 64)`; ties break toward the lowest index. Returns `perm` with
/// `perm[k]` the original index of the `k`-th pivot.
pub fn minimum_degree_order(a: &SymmetricCsc) -> Vec<usize> {
    let n = a.dim();
    let words = n.div_ceil(64).max(1);
    let mut adj = vec![0u64; n * words];
    let set = |adj: &mut [u64], r: usize, c: usize| adj[r * words + c / 64] |= 1 << (c % 64);
    for j in 0..n {
        for (i, _) in a.column(j) {
            if i != j {
                set(&mut adj, i, j);
                set(&mut adj, j, i);
            }
        }
    }
    let mut degree: Vec<usize> = (0..n)
        .map(|r| adj[r * words..(r + 1) * words].iter().map(|w| w.count_ones() as usize).sum())
        .collect();
    let mut alive = vec![true; n];
    let mut perm = Vec::with_capacity(n);
    let mut pivot_row = vec![0u64; words];
    let mut members = Vec::new();

    for _ in 0..n {
        let v = (0..n)
            .filter(|&i| alive[i])
            .min_by_key(|&i| (degree[i], i))
            .expect("a live node remains");
        alive[v] = false;
        perm.push(v);

        pivot_row.copy_from_slice(&adj[v * words..(v + 1) * words]);
        members.clear();
        for (w, &bits) in pivot_row.iter().enumerate() {
            let mut b = bits;
            while b != 0 {
                let t = b.trailing_zeros() as usize;
                members.push(w * 64 + t);
                b &= b - 1;
            }
        }
        for &u in &members {
            let row = &mut adj[u * words..(u + 1) * words];
            for (dst, src) in row.iter_mut().zip(&pivot_row) {
                *dst |= *src;
            }
            row[u / 64] &= !(1 << (u % 64));
            row[v / 64] &= !(1 << (v % 64));
            degree[u] = row.iter().map(|w| w.count_ones() as usize).sum();
        }
    }
    perm
}

/// Ordering, elimination tree and factor pattern shared by every numeric
/// factorization of matrices with one sparsity pattern.
#[derive(Debug)]
pub struct SymbolicCholesky {
    n: usize,
    perm: Vec<usize>,
    parent: Vec<Option<usize>>,
    /// Upper triangle of `P A Pᵀ` by columns, pointing into the source values.
    c_col_ptr: Vec<usize>,
    c_row_idx: Vec<usize>,
    c_src: Vec<usize>,
    l_col_ptr: Vec<usize>,
    source_col_ptr: Vec<usize>,
    source_row_idx: Vec<usize>,
}

impl SymbolicCholesky {
    pub fn analyze(a: &SymmetricCsc) -> Self {
        let perm = minimum_degree_order(a);
        Self::with_ordering(a, perm)
    }

    pub fn with_ordering(a: &SymmetricCsc, perm: Vec<usize>) -> Self {
        let n = a.dim();
        let mut inv_perm = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            inv_perm[p] = k;
        }

        // Upper triangle of C = P A Pᵀ, column by column, rows sorted.
        let mut cols: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for j in 0..n {
            for p in a.col_ptr[j]..a.col_ptr[j + 1] {
                let i = a.row_idx[p];
                let (pi, pj) = (inv_perm[i], inv_perm[j]);
                if pi <= pj {
                    cols[pj].push((pi, p));
                }
            }
        }
        let mut c_col_ptr = vec![0];
        let mut c_row_idx = Vec::with_capacity(a.nnz() / 2 + n);
        let mut c_src = Vec::with_capacity(a.nnz() / 2 + n);
        for col in &mut cols {
            col.sort_unstable();
            for &(r, src) in col.iter() {
                c_row_idx.push(r);
                c_src.push(src);
            }
            c_col_ptr.push(c_row_idx.len());
        }

        // Elimination tree with path compression.
        let mut parent = vec![None; n];
        let mut ancestor: Vec<Option<usize>> = vec![None; n];
        for k in 0..n {
            for p in c_col_ptr[k]..c_col_ptr[k + 1] {
                let mut i = Some(c_row_idx[p]);
                while let Some(node) = i {
                    if node >= k {
                        break;
                    }
                    let next = ancestor[node];
                    ancestor[node] = Some(k);
                    if next.is_none() {
                        parent[node] = Some(k);
                    }
                    i = next;
                }
            }
        }

        let mut symbolic = SymbolicCholesky {
            n,
            perm,
            parent,
            c_col_ptr,
            c_row_idx,
            c_src,
            l_col_ptr: Vec::new(),
            source_col_ptr: a.col_ptr.clone(),
            source_row_idx: a.row_idx.clone(),
        };

        // Column counts of L from the row patterns.
        let mut counts = vec![1usize; n];
        let mut stack = vec![0; n];
        let mut mark = vec![usize::MAX; n];
        for k in 0..n {
            let top = symbolic.ereach(k, &mut stack, &mut mark);
            for &i in &stack[top..] {
                counts[i] += 1;
            }
        }
        let mut l_col_ptr = Vec::with_capacity(n + 1);
        l_col_ptr.push(0);
        for c in counts {
            l_col_ptr.push(l_col_ptr.last().unwrap() + c);
        }
        symbolic.l_col_ptr = l_col_ptr;
        symbolic
    }

    /// Nonzero pattern of row `k` of `L` (excluding the diagonal), written to
    /// `stack[top..]` in topological order.
    fn ereach(&self, k: usize, stack: &mut [usize], mark: &mut [usize]) -> usize {
        let mut top = self.n;
        mark[k] = k;
        for p in self.c_col_ptr[k]..self.c_col_ptr[k + 1] {
            let mut i = self.c_row_idx[p];
            if i > k {
                continue;
            }
            let mut len = 0;
            while mark[i] != k {
                stack[len] = i;
                len += 1;
                mark[i] = k;
                i = match self.parent[i] {
                    Some(next) => next,
                    None => break,
                };
            }
            while len > 0 {
                len -= 1;
                top -= 1;
                stack[top] = stack[len];
            }
        }
        top
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Number of stored entries of `L`, diagonal included.
    pub fn factor_nnz(&self) -> usize {
        self.l_col_ptr[self.n]
    }

    fn matches(&self, a: &SymmetricCsc) -> bool {
        a.dim() == self.n && a.col_ptr == self.source_col_ptr && a.row_idx == self.source_row_idx
    }
}

/// Numeric factor `P A Pᵀ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct SparseCholesky {
    symbolic: Arc<SymbolicCholesky>,
    l_row_idx: Vec<usize>,
    l_values: Vec<f64>,
}

impl SparseCholesky {
    pub fn factorize(a: &SymmetricCsc) -> Result<Self> {
        Self::refactorize(Arc::new(SymbolicCholesky::analyze(a)), a)
    }

    /// Numeric factorization reusing an existing symbolic analysis. The
    /// matrix must have exactly the pattern the analysis was built from.
    pub fn refactorize(symbolic: Arc<SymbolicCholesky>, a: &SymmetricCsc) -> Result<Self> {
        if !symbolic.matches(a) {
            return Err(GlpmError::ConfigMismatch(
                "matrix pattern differs from the symbolic analysis".into(),
            ));
        }
        let n = symbolic.n;
        let lp = &symbolic.l_col_ptr;
        let nnz = symbolic.factor_nnz();
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0.0f64; nnz];
        let mut next: Vec<usize> = lp[..n].to_vec();
        let mut x = vec![0.0f64; n];
        let mut stack = vec![0usize; n];
        let mut mark = vec![usize::MAX; n];
        let avals = a.values();

        for k in 0..n {
            let top = symbolic.ereach(k, &mut stack, &mut mark);
            x[k] = 0.0;
            for p in symbolic.c_col_ptr[k]..symbolic.c_col_ptr[k + 1] {
                x[symbolic.c_row_idx[p]] = avals[symbolic.c_src[p]];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..] {
                let lki = x[i] / lx[lp[i]];
                x[i] = 0.0;
                let end = next[i];
                for p in lp[i] + 1..end {
                    x[li[p]] -= lx[p] * lki;
                }
                d -= lki * lki;
                li[end] = k;
                lx[end] = lki;
                next[i] += 1;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(GlpmError::NotPositiveDefinite {
                    pivot: symbolic.perm[k],
                });
            }
            let p = next[k];
            li[p] = k;
            lx[p] = d.sqrt();
            next[k] += 1;
        }

        Ok(SparseCholesky {
            symbolic,
            l_row_idx: li,
            l_values: lx,
        })
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    pub fn dim(&self) -> usize {
        self.symbolic.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64], work: &mut [f64]) {
        let sym = &*self.symbolic;
        let n = sym.n;
        let lp = &sym.l_col_ptr;
        for k in 0..n {
            work[k] = b[sym.perm[k]];
        }
        // L y = P b
        for j in 0..n {
            let yj = work[j] / self.l_values[lp[j]];
            work[j] = yj;
            for p in lp[j] + 1..lp[j + 1] {
                work[self.l_row_idx[p]] -= self.l_values[p] * yj;
            }
        }
        // Lᵀ z = y
        for j in (0..n).rev() {
            let mut acc = work[j];
            for p in lp[j] + 1..lp[j + 1] {
                acc -= self.l_values[p] * work[self.l_row_idx[p]];
            }
            work[j] = acc / self.l_values[lp[j]];
        }
        for k in 0..n {
            b[sym.perm[k]] = work[k];
        }
    }

    /// `out = Pᵀ L xi`: maps standard normals to draws with covariance `A`.
    pub fn mul_factor(&self, xi: &[f64], out: &mut [f64], work: &mut [f64]) {
        let sym = &*self.symbolic;
        let lp = &sym.l_col_ptr;
        work.iter_mut().for_each(|w| *w = 0.0);
        for j in 0..sym.n {
            let xj = xi[j];
            for p in lp[j]..lp[j + 1] {
                work[self.l_row_idx[p]] += self.l_values[p] * xj;
            }
        }
        for k in 0..sym.n {
            out[sym.perm[k]] = work[k];
        }
    }

    /// `out = Pᵀ L⁻ᵀ xi`: maps standard normals to draws with covariance `A⁻¹`.
    pub fn solve_factor_transpose(&self, xi: &[f64], out: &mut [f64], work: &mut [f64]) {
        let sym = &*self.symbolic;
        let lp = &sym.l_col_ptr;
        work.copy_from_slice(xi);
        for j in (0..sym.n).rev() {
            let mut acc = work[j];
            for p in lp[j] + 1..lp[j + 1] {
                acc -= self.l_values[p] * work[self.l_row_idx[p]];
            }
            work[j] = acc / self.l_values[lp[j]];
        }
        for k in 0..sym.n {
            out[sym.perm[k]] = work[k];
        }
    }

    /// `out = L⁻¹ P x`, the forward half of a solve.
    pub fn solve_factor(&self, x: &[f64], out: &mut [f64]) {
        let sym = &*self.symbolic;
        let lp = &sym.l_col_ptr;
        for k in 0..sym.n {
            out[k] = x[sym.perm[k]];
        }
        for j in 0..sym.n {
            let yj = out[j] / self.l_values[lp[j]];
            out[j] = yj;
            for p in lp[j] + 1..lp[j + 1] {
                out[self.l_row_idx[p]] -= self.l_values[p] * yj;
            }
        }
    }

    /// Dense `L` in the permuted ordering (test and diagnostic use).
    pub fn dense_factor(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let lp = &self.symbolic.l_col_ptr;
        let mut dense = vec![vec![0.0; n]; n];
        for j in 0..n {
            for p in lp[j]..lp[j + 1] {
                dense[self.l_row_idx[p]][j] = self.l_values[p];
            }
        }
        dense
    }

    /// `log det A = 2 Σ log L_kk`.
    pub fn log_det(&self) -> f64 {
        let lp = &self.symbolic.l_col_ptr;
        (0..self.dim()).map(|j| self.l_values[lp[j]].ln()).sum::<f64>() * 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_laplacian_plus(n: usize, shift: f64) -> SymmetricCsc {
        let mut t = Vec::new();
        for i in 0..n {
            let deg = if i == 0 || i + 1 == n { 1.0 } else { 2.0 };
            t.push((i, i, deg + shift));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        SymmetricCsc::from_triplets(n, &t).unwrap()
    }

    fn dense_mul(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    #[test]
    fn triplets_mirror_and_sum() {
        let a = SymmetricCsc::from_triplets(3, &[(0, 1, 2.0), (0, 1, 1.0), (2, 2, 5.0)]).unwrap();
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.get(1, 0), 3.0);
        assert_eq!(a.get(2, 2), 5.0);
        assert_eq!(a.get(1, 2), 0.0);
        assert!(a.is_symmetric(0.0));
    }

    #[test]
    fn factor_reproduces_permuted_matrix() {
        let a = path_laplacian_plus(7, 0.3);
        let chol = SparseCholesky::factorize(&a).unwrap();
        let l = chol.dense_factor();
        let perm = chol.symbolic().permutation();
        let dense = a.to_dense();
        let n = a.dim();
        let mut err: f64 = 0.0;
        for r in 0..n {
            for c in 0..n {
                let llt: f64 = (0..n).map(|k| l[r][k] * l[c][k]).sum();
                err = err.max((llt - dense[perm[r]][perm[c]]).abs());
            }
        }
        assert!(err / a.norm() < 1e-12, "reconstruction error {err}");
    }

    #[test]
    fn solve_round_trip() {
        let a = path_laplacian_plus(9, 0.01);
        let chol = SparseCholesky::factorize(&a).unwrap();
        let v: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut b = vec![0.0; 9];
        a.mul_vec(&v, &mut b);
        let mut work = vec![0.0; 9];
        chol.solve_in_place(&mut b, &mut work);
        for (x, y) in b.iter().zip(&v) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn non_positive_definite_reports_pivot() {
        let a = SymmetricCsc::from_triplets(2, &[(0, 0, 1.0), (1, 1, 1.0), (0, 1, 2.0)]).unwrap();
        match SparseCholesky::factorize(&a) {
            Err(GlpmError::NotPositiveDefinite { pivot }) => assert!(pivot < 2),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn refactorize_rejects_other_pattern() {
        let a = path_laplacian_plus(4, 1.0);
        let chol = SparseCholesky::factorize(&a).unwrap();
        let b = SymmetricCsc::identity(4);
        assert!(SparseCholesky::refactorize(chol.symbolic().clone(), &b).is_err());
    }

    #[test]
    fn minimum_degree_avoids_fill_on_star() {
        // Star with the hub first: eliminating leaves first produces no fill.
        let n = 8;
        let mut t = vec![(0, 0, n as f64)];
        for i in 1..n {
            t.push((i, i, 2.0));
            t.push((0, i, -1.0));
        }
        let a = SymmetricCsc::from_triplets(n, &t).unwrap();
        let sym = SymbolicCholesky::analyze(&a);
        assert_eq!(sym.factor_nnz(), n + (n - 1));
        // Hub and last leaf tie at degree 1 at the end, so the hub is one of the last two.
        assert!(sym.permutation()[n - 2..].contains(&0));
    }

    #[test]
    fn factor_and_transpose_solve_are_inverse_pair() {
        let a = path_laplacian_plus(6, 0.5);
        let chol = SparseCholesky::factorize(&a).unwrap();
        let xi: Vec<f64> = (0..6).map(|i| 1.0 + i as f64).collect();
        let mut u = vec![0.0; 6];
        let mut w = vec![0.0; 6];
        chol.mul_factor(&xi, &mut u, &mut w);
        // A⁻¹ u = Pᵀ L⁻ᵀ ξ
        let mut solved = u.clone();
        chol.solve_in_place(&mut solved, &mut w);
        let mut direct = vec![0.0; 6];
        chol.solve_factor_transpose(&xi, &mut direct, &mut w);
        for (s, d) in solved.iter().zip(&direct) {
            assert!((s - d).abs() < 1e-12);
        }
        let dense = a.to_dense();
        let au = dense_mul(&dense, &solved);
        for (x, y) in au.iter().zip(&u) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn log_det_matches_dense_product() {
        let a = SymmetricCsc::from_triplets(2, &[(0, 0, 4.0), (1, 1, 3.0), (0, 1, 1.0)]).unwrap();
        let chol = SparseCholesky::factorize(&a).unwrap();
        assert!((chol.log_det() - 11f64.ln()).abs() < 1e-14);
    }
}
