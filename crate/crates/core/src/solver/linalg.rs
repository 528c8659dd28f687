//! Sparse matrices and a reusable sparse LU backed by `faer`.

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};

/// Compressed sparse column matrix with sorted, merged entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Csc {
    pub nrows: usize,
    pub ncols: usize,
    pub colptr: Vec<usize>,
    pub rowidx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csc {
    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// explicit zeros kept so the pattern only depends on the positions.
    pub fn from_triplets(nrows: usize, ncols: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.sort_by_key(|&k| (entries[k].1, entries[k].0));
        let mut colptr = vec![0usize; ncols + 1];
        let mut rowidx: Vec<usize> = Vec::with_capacity(entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (r, c, v) = entries[k];
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *vals.last_mut().expect("entry exists") += v;
            } else {
                rowidx.push(r);
                vals.push(v);
                colptr[c + 1] += 1;
                last = Some((r, c));
            }
        }
        for c in 0..ncols {
            colptr[c + 1] += colptr[c];
        }
        Self { nrows, ncols, colptr, rowidx, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `y = A·x`.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for c in 0..self.ncols {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            for k in self.colptr[c]..self.colptr[c + 1] {
                y[self.rowidx[k]] += self.vals[k] * xc;
            }
        }
        y
    }

    /// `y = Aᵀ·x`.
    pub fn mul_t(&self, x: &[f64]) -> Vec<f64> {
        (0..self.ncols)
            .map(|c| (self.colptr[c]..self.colptr[c + 1]).map(|k| self.vals[k] * x[self.rowidx[k]]).sum())
            .collect()
    }

    fn triplets(&self) -> Vec<Triplet<usize, usize, f64>> {
        let mut out = Vec::with_capacity(self.nnz());
        for c in 0..self.ncols {
            for k in self.colptr[c]..self.colptr[c + 1] {
                out.push(Triplet::new(self.rowidx[k], c, self.vals[k]));
            }
        }
        out
    }

    fn same_pattern(&self, o: &Csc) -> bool {
        self.nrows == o.nrows && self.ncols == o.ncols && self.colptr == o.colptr && self.rowidx == o.rowidx
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FactorError {
    Structure(String),
    Singular,
}

/// LU factorization that keeps its symbolic analysis between calls with an
/// unchanged sparsity pattern.
#[derive(Debug, Default)]
pub struct SparseLu {
    symbolic: Option<(Csc, SymbolicLu<usize>)>,
}

pub struct Factor {
    lu: Lu<usize, f64>,
    n: usize,
}

impl SparseLu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn factor(&mut self, m: &Csc) -> Result<Factor, FactorError> {
        assert_eq!(m.nrows, m.ncols, "matrix must be square");
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(m.nrows, m.ncols, &m.triplets())
            .map_err(|e| FactorError::Structure(format!("{e:?}")))?;
        let reuse = matches!(&self.symbolic, Some((p, _)) if p.same_pattern(m));
        if !reuse {
            let sym = SymbolicLu::try_new(mat.symbolic()).map_err(|e| FactorError::Structure(format!("{e:?}")))?;
            self.symbolic = Some((m.clone(), sym));
        }
        let sym = self.symbolic.as_ref().expect("symbolic set above").1.clone();
        let lu = Lu::try_new_with_symbolic(sym, mat.as_ref()).map_err(|_| FactorError::Singular)?;
        Ok(Factor { lu, n: m.nrows })
    }
}

impl Factor {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut b = Mat::<f64>::zeros(self.n, 1);
        for (i, v) in rhs.iter().enumerate() {
            b[(i, 0)] = *v;
        }
        self.lu.solve_in_place(b.as_mut());
        (0..self.n).map(|i| b[(i, 0)]).collect()
    }

    /// Solves `A·x = rhs` where the factor belongs to a perturbation of `A`,
    /// refining against the true `A` supplied as `apply`.
    pub fn solve_refined(&self, rhs: &[f64], apply: impl Fn(&[f64]) -> Vec<f64>, steps: usize) -> Vec<f64> {
        let mut x = self.solve(rhs);
        let norm = |v: &[f64]| v.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        let mut best = f64::INFINITY;
        for _ in 0..steps {
            let ax = apply(&x);
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let nr = norm(&r);
            if !(nr < best) || nr <= 1e-14 * (1.0 + norm(rhs)) {
                break;
            }
            best = nr;
            let dx = self.solve(&r);
            if dx.iter().any(|v| !v.is_finite()) {
                break;
            }
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        x
    }
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, t| m.max(t.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system_and_reuses_pattern() {
        let m = Csc::from_triplets(3, 3, &[(0, 0, 2.0), (1, 1, 3.0), (2, 2, 1.0), (0, 2, 1.0), (0, 0, 0.0)]);
        let mut lu = SparseLu::new();
        let f = lu.factor(&m).unwrap();
        let x = f.solve(&[3.0, 3.0, 1.0]);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14 && (x[2] - 1.0).abs() < 1e-14);
        let m2 = Csc::from_triplets(3, 3, &[(0, 0, 4.0), (1, 1, 3.0), (2, 2, 1.0), (0, 2, 1.0)]);
        let f2 = lu.factor(&m2).unwrap();
        let x = f2.solve(&[5.0, 3.0, 1.0]);
        assert!((x[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn transpose_product() {
        let m = Csc::from_triplets(2, 3, &[(0, 0, 1.0), (1, 2, 2.0), (0, 1, -1.0)]);
        assert_eq!(m.mul(&[1.0, 1.0, 1.0]), vec![0.0, 2.0]);
        assert_eq!(m.mul_t(&[1.0, 2.0]), vec![1.0, -1.0, 4.0]);
    }
}
