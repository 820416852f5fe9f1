use std::fmt::Write as _;

use super::expr::{AffineExpr, ExprMatrix};
use super::svec_len;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    /// Every row equals zero.
    Zero(usize),
    /// Every row is nonnegative.
    Nonneg(usize),
    /// `(t, x)` with `‖x‖₂ ≤ t`; the argument is the total dimension.
    SecondOrder(usize),
    /// Packed symmetric matrix of the given side is PSD.
    Psd(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(n) | Cone::Nonneg(n) | Cone::SecondOrder(n) => n,
            Cone::Psd(n) => svec_len(n),
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            Cone::Zero(_) => "zero",
            Cone::Nonneg(_) => "nonneg",
            Cone::SecondOrder(_) => "soc",
            Cone::Psd(_) => "psd",
        }
    }

    fn size_param(&self) -> usize {
        match *self {
            Cone::Zero(n) | Cone::Nonneg(n) | Cone::SecondOrder(n) | Cone::Psd(n) => n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConeBlock {
    pub cone: Cone,
    pub rows: Vec<AffineExpr>,
}

/// `minimize ½xᵀPx + cᵀx + c₀` subject to each block's rows lying in its cone.
#[derive(Debug, Clone, Default)]
pub struct ConeProgram {
    num_vars: usize,
    objective: Vec<f64>,
    pub objective_constant: f64,
    /// Upper-triangle entries `(i, j, P_ij)`, `i ≤ j`; repeated entries add.
    quadratic: Vec<(usize, usize, f64)>,
    blocks: Vec<ConeBlock>,
}

impl ConeProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn blocks(&self) -> &[ConeBlock] {
        &self.blocks
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn add_var(&mut self) -> usize {
        self.num_vars += 1;
        self.objective.push(0.0);
        self.num_vars - 1
    }

    pub fn add_vars(&mut self, n: usize) -> Vec<usize> {
        (0..n).map(|_| self.add_var()).collect()
    }

    /// Adds `c` to the objective coefficient of `var`.
    pub fn add_cost(&mut self, var: usize, c: f64) {
        self.objective[var] += c;
    }

    pub fn add_cost_expr(&mut self, e: &AffineExpr) {
        for &(i, c) in &e.terms {
            self.objective[i] += c;
        }
        self.objective_constant += e.constant;
    }

    pub fn quadratic(&self) -> &[(usize, usize, f64)] {
        &self.quadratic
    }

    /// Adds `w · Σ_r r(x)²` to the objective.
    pub fn add_sum_of_squares(&mut self, rows: &[AffineExpr], w: f64) {
        for r in rows {
            let mut r = r.clone();
            r.compact();
            for (a, &(i, ci)) in r.terms.iter().enumerate() {
                for &(j, cj) in &r.terms[a..] {
                    let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
                    // ½·P_ii = w c_i², P_ij = 2 w c_i c_j for i ≠ j
                    let v = 2.0 * w * ci * cj;
                    self.quadratic.push((lo, hi, v));
                }
                self.objective[i] += 2.0 * w * r.constant * ci;
            }
            self.objective_constant += w * r.constant * r.constant;
        }
    }

    fn push(&mut self, cone: Cone, mut rows: Vec<AffineExpr>) {
        debug_assert_eq!(cone.dim(), rows.len());
        for r in rows.iter_mut() {
            r.compact();
            debug_assert!(r.terms.iter().all(|&(i, _)| i < self.num_vars));
        }
        self.blocks.push(ConeBlock { cone, rows });
    }

    pub fn add_eq(&mut self, rows: Vec<AffineExpr>) {
        if !rows.is_empty() {
            self.push(Cone::Zero(rows.len()), rows);
        }
    }

    pub fn add_nonneg(&mut self, rows: Vec<AffineExpr>) {
        if !rows.is_empty() {
            self.push(Cone::Nonneg(rows.len()), rows);
        }
    }

    /// `‖rest‖₂ ≤ t`.
    pub fn add_soc(&mut self, t: AffineExpr, rest: Vec<AffineExpr>) {
        let mut rows = Vec::with_capacity(rest.len() + 1);
        rows.push(t);
        rows.extend(rest);
        self.push(Cone::SecondOrder(rows.len()), rows);
    }

    /// `m ⪰ 0`. Only the upper triangle of `m` is read.
    pub fn add_psd(&mut self, m: &ExprMatrix) -> Result<()> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::contract("PSD block must be square"));
        }
        let mut rows = Vec::with_capacity(svec_len(n));
        for j in 0..n {
            for i in 0..=j {
                rows.push(if i == j {
                    m[(i, j)].clone()
                } else {
                    m[(i, j)].scaled(std::f64::consts::SQRT_2)
                });
            }
        }
        self.push(Cone::Psd(n), rows);
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let quad: f64 = self
            .quadratic
            .iter()
            .map(|&(i, j, v)| if i == j { 0.5 * v * x[i] * x[i] } else { v * x[i] * x[j] })
            .sum();
        quad + self.objective_constant
            + self
                .objective
                .iter()
                .zip(x)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }

    /// Plain-text dump for debugging.
    ///
    /// ```text
    /// coneprog 1
    /// vars <n>
    /// objective <constant> <nnz> (<index> <coef>)*
    /// quadratic <nnz> (<row> <col> <coef>)*       upper triangle of P
    /// blocks <count>
    /// block <zero|nonneg|soc|psd> <size>
    /// row <constant> <nnz> (<index> <coef>)*      one per cone row
    /// ```
    ///
    /// `size` is the row count, except for `psd` where it is the matrix side
    /// and the rows hold the packed upper triangle.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "coneprog 1");
        let _ = writeln!(s, "vars {}", self.num_vars);
        let nz: Vec<_> = self
            .objective
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .collect();
        let _ = write!(s, "objective {:.17e} {}", self.objective_constant, nz.len());
        for (i, c) in nz {
            let _ = write!(s, " {i} {c:.17e}");
        }
        s.push('\n');
        let _ = write!(s, "quadratic {}", self.quadratic.len());
        for &(i, j, v) in &self.quadratic {
            let _ = write!(s, " {i} {j} {v:.17e}");
        }
        s.push('\n');
        let _ = writeln!(s, "blocks {}", self.blocks.len());
        for b in &self.blocks {
            let _ = writeln!(s, "block {} {}", b.cone.tag(), b.cone.size_param());
            for r in &b.rows {
                let _ = write!(s, "row {:.17e} {}", r.constant, r.terms.len());
                for &(i, c) in &r.terms {
                    let _ = write!(s, " {i} {c:.17e}");
                }
                s.push('\n');
            }
        }
        s
    }
}
