use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;

/// Sparse affine expression `Σ cᵢ xᵢ + c₀` over program variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(i: usize) -> Self {
        Self {
            terms: vec![(i, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(i: usize, c: f64) -> Self {
        Self {
            terms: vec![(i, c)],
            constant: 0.0,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        if s == 0.0 {
            return Self::zero();
        }
        Self {
            terms: self.terms.iter().map(|&(i, c)| (i, c * s)).collect(),
            constant: self.constant * s,
        }
    }

    pub fn add_scaled(&mut self, other: &AffineExpr, s: f64) {
        if s == 0.0 {
            return;
        }
        self.terms
            .extend(other.terms.iter().map(|&(i, c)| (i, c * s)));
        self.constant += other.constant * s;
    }

    /// Merges duplicate variables and drops exact zeros.
    pub fn compact(&mut self) {
        if self.terms.len() < 2 {
            self.terms.retain(|&(_, c)| c != 0.0);
            return;
        }
        self.terms.sort_by_key(|&(i, _)| i);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for &(i, c) in &self.terms {
            match out.last_mut() {
                Some((j, acc)) if *j == i => *acc += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|&(_, c)| c != 0.0);
        self.terms = out;
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }
}

impl Add for AffineExpr {
    type Output = AffineExpr;
    fn add(mut self, rhs: AffineExpr) -> AffineExpr {
        self.add_scaled(&rhs, 1.0);
        self
    }
}

impl Sub for AffineExpr {
    type Output = AffineExpr;
    fn sub(mut self, rhs: AffineExpr) -> AffineExpr {
        self.add_scaled(&rhs, -1.0);
        self
    }
}

impl Neg for AffineExpr {
    type Output = AffineExpr;
    fn neg(self) -> AffineExpr {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for AffineExpr {
    type Output = AffineExpr;
    fn mul(self, s: f64) -> AffineExpr {
        self.scaled(s)
    }
}

/// Dense matrix of affine expressions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprMatrix {
    rows: usize,
    cols: usize,
    data: Vec<AffineExpr>,
}

impl ExprMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![AffineExpr::zero(); rows * cols],
        }
    }

    pub fn from_const(m: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out[(i, j)] = AffineExpr::constant(m[(i, j)]);
            }
        }
        out
    }

    /// Scalar variable times the identity.
    pub fn scaled_identity(n: usize, var: usize, s: f64) -> Self {
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = AffineExpr::term(var, s);
        }
        out
    }

    /// General matrix variable; `vars` holds the entries row-major.
    pub fn var_matrix(vars: &[usize], rows: usize, cols: usize) -> Self {
        assert_eq!(vars.len(), rows * cols);
        Self {
            rows,
            cols,
            data: vars.iter().map(|&v| AffineExpr::var(v)).collect(),
        }
    }

    /// Symmetric matrix variable; `vars` holds the upper triangle in
    /// column-major order (the packing order of [`super::svec_pack`]).
    pub fn sym_var_matrix(vars: &[usize], n: usize) -> Self {
        assert_eq!(vars.len(), n * (n + 1) / 2);
        let mut out = Self::zeros(n, n);
        let mut idx = 0;
        for j in 0..n {
            for i in 0..=j {
                out[(i, j)] = AffineExpr::var(vars[idx]);
                out[(j, i)] = AffineExpr::var(vars[idx]);
                idx += 1;
            }
        }
        out
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].clone();
            }
        }
        out
    }

    /// `M · self` for a constant `M`.
    pub fn left_mul(&self, m: &DMatrix<f64>) -> Self {
        assert_eq!(m.ncols(), self.rows);
        let mut out = Self::zeros(m.nrows(), self.cols);
        for i in 0..m.nrows() {
            for j in 0..self.cols {
                let e = &mut out[(i, j)];
                for k in 0..self.rows {
                    e.add_scaled(&self.data[k * self.cols + j], m[(i, k)]);
                }
                e.compact();
            }
        }
        out
    }

    /// `self · M` for a constant `M`.
    pub fn right_mul(&self, m: &DMatrix<f64>) -> Self {
        self.transpose().left_mul(&m.transpose()).transpose()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|e| e.scaled(s)).collect(),
        }
    }

    pub fn plus(&self, other: &ExprMatrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| {
                let mut e = a.clone();
                e.add_scaled(b, 1.0);
                e.compact();
                e
            })
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn minus(&self, other: &ExprMatrix) -> Self {
        self.plus(&other.scaled(-1.0))
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, block: &ExprMatrix) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols);
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)].clone();
            }
        }
    }

    /// Places `block` at `(r0, c0)` and its transpose at `(c0, r0)`.
    pub fn set_sym_block(&mut self, r0: usize, c0: usize, block: &ExprMatrix) {
        self.set_block(r0, c0, block);
        if r0 != c0 {
            self.set_block(c0, r0, &block.transpose());
        }
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)].eval(x))
    }

    pub fn iter(&self) -> impl Iterator<Item = &AffineExpr> {
        self.data.iter()
    }
}

impl std::ops::Index<(usize, usize)> for ExprMatrix {
    type Output = AffineExpr;
    fn index(&self, (i, j): (usize, usize)) -> &AffineExpr {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ExprMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut AffineExpr {
        &mut self.data[i * self.cols + j]
    }
}
