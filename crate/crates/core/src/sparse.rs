//! CSR storage, block composition and a certified direct solver.
//!
//! Factorization is delegated to faer's sparse LU (COLAMD ordering, partial
//! pivoting). Every solve is followed by an explicit residual check.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::LuError;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::Mat;
use serde::Serialize;

use crate::error::{Error, Result};

/// Relative residual every direct solve must meet.
pub const RESIDUAL_THRESHOLD: f64 = 1e-10;

/// Default dimension cap for [`inverse_nonneg_check`].
pub const DEFAULT_INVERSE_CHECK_CAP: usize = 5000;

const MAX_REFINEMENT_STEPS: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::Index(format!("triplet ({r},{c}) outside {nrows}x{ncols}")));
            }
            counts[r + 1] += 1;
        }
        for r in 0..nrows {
            counts[r + 1] += counts[r];
        }
        // bucket by row, preserving input order within a row
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }

        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for r in 0..nrows {
            let range = counts[r]..counts[r + 1];
            order.clear();
            order.extend(range.clone());
            // stable sort keeps summation order fixed for equal columns
            order.sort_by_key(|&k| cols[k]);
            let mut last_col = usize::MAX;
            for &k in &order {
                if cols[k] == last_col {
                    *values.last_mut().unwrap() += vals[k];
                } else {
                    col_idx.push(cols[k]);
                    values.push(vals[k]);
                    last_col = cols[k];
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(CsrMatrix { nrows, ncols, row_ptr, col_idx, values })
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut triplets = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return Err(Error::Index(format!("row {r} has {} columns, expected {ncols}", row.len())));
            }
            triplets.extend(row.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(c, &v)| (r, c, v)));
        }
        CsrMatrix::from_triplets(nrows, ncols, &triplets)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values stored in row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map_or(0.0, |k| vals[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// Iterates stored entries as `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "dimension mismatch in mul_vec");
        (0..self.nrows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for (r, c, v) in self.triplets() {
            col_idx[next[c]] = r;
            values[next[c]] = v;
            next[c] += 1;
        }
        CsrMatrix { nrows: self.ncols, ncols: self.nrows, row_ptr, col_idx, values }
    }

    pub fn scale(&self, factor: f64) -> CsrMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// Submatrix on the given (ascending) row and column index sets.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            col_map[c] = k;
        }
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for &r in rows {
            let (rc, rv) = self.row(r);
            for (&c, &v) in rc.iter().zip(rv) {
                if col_map[c] != usize::MAX {
                    col_idx.push(col_map[c]);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { nrows: rows.len(), ncols: cols.len(), row_ptr, col_idx, values }
    }

    /// Composes `[[a, b], [c, d]]`.
    pub fn block2x2(a: &CsrMatrix, b: &CsrMatrix, c: &CsrMatrix, d: &CsrMatrix) -> Result<CsrMatrix> {
        if a.nrows != b.nrows || c.nrows != d.nrows || a.ncols != c.ncols || b.ncols != d.ncols {
            return Err(Error::Assembly("inconsistent block dimensions".into()));
        }
        let nrows = a.nrows + c.nrows;
        let ncols = a.ncols + b.ncols;
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(a.nnz() + b.nnz() + c.nnz() + d.nnz());
        let mut values = Vec::with_capacity(col_idx.capacity());
        row_ptr.push(0);
        for (left, right) in [(a, b), (c, d)] {
            for r in 0..left.nrows {
                let (lc, lv) = left.row(r);
                col_idx.extend_from_slice(lc);
                values.extend_from_slice(lv);
                let (rc, rv) = right.row(r);
                col_idx.extend(rc.iter().map(|&k| k + left.ncols));
                values.extend_from_slice(rv);
                row_ptr.push(col_idx.len());
            }
        }
        Ok(CsrMatrix { nrows, ncols, row_ptr, col_idx, values })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.triplets() {
            out[r][c] = v;
        }
        out
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        self.triplets().map(|(r, c, v)| (v - self.get(c, r)).abs()).fold(0.0, f64::max)
    }

    /// Writes MatrixMarket `coordinate real general` text.
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        let mut line = String::new();
        for (r, c, v) in self.triplets() {
            line.clear();
            let _ = writeln!(line, "{} {} {:e}", r + 1, c + 1, v);
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn read_matrix_market<R: BufRead>(input: R) -> Result<CsrMatrix> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty MatrixMarket input".into()))??;
        let lower = header.to_ascii_lowercase();
        if !lower.starts_with("%%matrixmarket matrix coordinate real") {
            return Err(Error::Parse(format!("unsupported MatrixMarket header: {header}")));
        }
        let symmetric = lower.contains("symmetric");
        let mut dims: Option<(usize, usize, usize)> = None;
        let mut triplets = Vec::new();
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('%') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("{s}: {e}")));
            match dims {
                None => {
                    if fields.len() != 3 {
                        return Err(Error::Parse(format!("bad size line: {line}")));
                    }
                    dims = Some((parse_usize(fields[0])?, parse_usize(fields[1])?, parse_usize(fields[2])?));
                }
                Some(_) => {
                    if fields.len() != 3 {
                        return Err(Error::Parse(format!("bad entry line: {line}")));
                    }
                    let r = parse_usize(fields[0])?;
                    let c = parse_usize(fields[1])?;
                    let v: f64 = fields[2].parse().map_err(|e| Error::Parse(format!("{}: {e}", fields[2])))?;
                    if r == 0 || c == 0 {
                        return Err(Error::Parse("MatrixMarket indices are 1-based".into()));
                    }
                    triplets.push((r - 1, c - 1, v));
                    if symmetric && r != c {
                        triplets.push((c - 1, r - 1, v));
                    }
                }
            }
        }
        let (nrows, ncols, _) = dims.ok_or_else(|| Error::Parse("missing size line".into()))?;
        CsrMatrix::from_triplets(nrows, ncols, &triplets)
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `‖Kx − b‖₂ / ‖b‖₂`, or the absolute residual when `b = 0`.
pub fn relative_residual(k: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let kx = k.mul_vec(x);
    let r: Vec<f64> = kx.iter().zip(b).map(|(a, b)| a - b).collect();
    let nb = norm2(b);
    if nb > 0.0 {
        norm2(&r) / nb
    } else {
        norm2(&r)
    }
}

/// Sparse LU factorization of a square matrix.
pub struct LuFactorization {
    matrix: CsrMatrix,
    lu: Lu<usize, f64>,
}

impl LuFactorization {
    pub fn new(k: &CsrMatrix) -> Result<Self> {
        if k.nrows != k.ncols {
            return Err(Error::Assembly(format!("cannot factor a {}x{} matrix", k.nrows, k.ncols)));
        }
        let n = k.nrows;
        // The CSR arrays of K are the CSC arrays of Kᵀ.
        let csc = k.transpose();
        let symbolic = SymbolicSparseColMatRef::new_checked(n, n, &csc.row_ptr, None, &csc.col_idx);
        let view = SparseColMatRef::new(symbolic, &csc.values);
        let lu = SymbolicLu::try_new(symbolic)
            .map_err(|e| Error::Assembly(format!("symbolic factorization failed: {e:?}")))
            .and_then(|sym| Lu::try_new_with_symbolic(sym, view).map_err(map_lu_error))?;
        Ok(LuFactorization { matrix: k.clone(), lu })
    }

    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        (0..b.len()).map(|i| x[(i, 0)]).collect()
    }

    /// Solves `Kx = b` and certifies the relative residual, applying a few
    /// steps of iterative refinement when needed.
    pub fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, f64)> {
        if b.len() != self.matrix.nrows {
            return Err(Error::Index(format!("rhs length {} for {} unknowns", b.len(), self.matrix.nrows)));
        }
        let mut x = self.raw_solve(b);
        if let Some(pivot) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Singular { pivot });
        }
        let mut residual = relative_residual(&self.matrix, &x, b);
        for _ in 0..MAX_REFINEMENT_STEPS {
            if residual <= RESIDUAL_THRESHOLD * 1e-2 {
                break;
            }
            let kx = self.matrix.mul_vec(&x);
            let r: Vec<f64> = b.iter().zip(&kx).map(|(b, k)| b - k).collect();
            let dx = self.raw_solve(&r);
            let candidate: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
            let next = relative_residual(&self.matrix, &candidate, b);
            if !(next < residual) {
                break;
            }
            x = candidate;
            residual = next;
        }
        if !(residual <= RESIDUAL_THRESHOLD) {
            return Err(Error::Certification { residual, threshold: RESIDUAL_THRESHOLD });
        }
        Ok((x, residual))
    }
}

fn map_lu_error(err: LuError) -> Error {
    match err {
        LuError::SymbolicSingular { index } => Error::Singular { pivot: index },
        LuError::Generic(e) => Error::Assembly(format!("numeric factorization failed: {e:?}")),
    }
}

/// Direct sparse solve of `Kx = b` with residual certification.
pub fn solve_direct(k: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    LuFactorization::new(k)?.solve(b).map(|(x, _)| x)
}

#[derive(Clone, Debug, Serialize)]
pub struct InverseCheck {
    pub ok: bool,
    pub min_entry: f64,
    /// `(row, col)` of the smallest entry of the inverse.
    pub argmin: (usize, usize),
}

/// Verifies that `A⁻¹ ≥ 0` entrywise by solving against every unit vector.
pub fn inverse_nonneg_check(a: &CsrMatrix, tol: f64) -> Result<InverseCheck> {
    inverse_nonneg_check_with_cap(a, tol, DEFAULT_INVERSE_CHECK_CAP)
}

pub fn inverse_nonneg_check_with_cap(a: &CsrMatrix, tol: f64, cap: usize) -> Result<InverseCheck> {
    let n = a.nrows();
    if n > cap {
        return Err(Error::Capacity(format!("inverse check limited to n <= {cap}, got {n}")));
    }
    let lu = LuFactorization::new(a)?;
    let mut ok = true;
    let mut min_entry = f64::INFINITY;
    let mut argmin = (0, 0);
    let mut e = vec![0.0; n];
    for col in 0..n {
        e[col] = 1.0;
        let (x, _) = lu.solve(&e)?;
        e[col] = 0.0;
        let scale = norm_inf(&x);
        for (row, &v) in x.iter().enumerate() {
            if v < min_entry {
                min_entry = v;
                argmin = (row, col);
            }
            if v < -tol * scale {
                ok = false;
            }
        }
    }
    if n == 0 {
        min_entry = 0.0;
    }
    Ok(InverseCheck { ok, min_entry, argmin })
}
