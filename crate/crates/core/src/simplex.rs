//! Dense two-phase primal simplex for `{x ≥ 0 : A x = b}`.
//!
//! Pivoting follows Bland's rule (smallest improving column, smallest basic
//! index among tied rows), so the method terminates on degenerate problems.
//! Reported solutions are recomputed from the final basis with an LU solve
//! against the original data instead of being read off the tableau.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Phase-one optima at or below this value count as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Phase-one optima above this value are reported as certified infeasible.
pub const CERTIFY_TOL: f64 = 1e-7;

const COST_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-9;
const RATIO_TIE: f64 = 1e-12;

/// A linear system `A x = b` with `m` rows and `n` columns, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EqualitySystem {
    pub m: usize,
    pub n: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl EqualitySystem {
    pub fn new(m: usize, n: usize, a: Vec<f64>, b: Vec<f64>) -> Self {
        assert_eq!(a.len(), m * n);
        assert_eq!(b.len(), m);
        Self { m, n, a, b }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.n..(i + 1) * self.n]
    }

    pub fn residual(&self, x: &[f64]) -> f64 {
        (0..self.m)
            .map(|i| {
                let lhs: f64 = self.row(i).iter().zip(x).map(|(a, x)| a * x).sum();
                (lhs - self.b[i]).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub enum PhaseOne {
    Feasible(FeasibleTableau),
    Infeasible { objective: f64 },
}

/// Tableau holding a feasible basis of the system with redundant rows removed.
#[derive(Clone, Debug)]
pub struct FeasibleTableau {
    n: usize,
    /// retained rows of the original system
    rows: Vec<usize>,
    /// `rows.len() × (n + 1)`, last column is the right-hand side
    t: Vec<f64>,
    basis: Vec<usize>,
    system: EqualitySystem,
    max_iter: usize,
}

/// Runs phase one. `max_iter` bounds the number of pivots.
pub fn phase_one(system: &EqualitySystem, max_iter: usize) -> Result<PhaseOne> {
    let (m, n) = (system.m, system.n);
    let width = n + m + 1;
    let mut t = vec![0.0; m * width];
    for i in 0..m {
        let sign = if system.b[i] < 0.0 { -1.0 } else { 1.0 };
        let row = &mut t[i * width..(i + 1) * width];
        for (dst, &src) in row[..n].iter_mut().zip(system.row(i)) {
            *dst = sign * src;
        }
        row[n + i] = 1.0;
        row[width - 1] = sign * system.b[i];
    }
    let mut obj = vec![0.0; width];
    for i in 0..m {
        for j in 0..n {
            obj[j] -= t[i * width + j];
        }
        obj[width - 1] -= t[i * width + width - 1];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    run(&mut t, &mut obj, &mut basis, width, n + m, max_iter)?;

    let objective = -obj[width - 1];
    if objective > FEASIBILITY_TOL {
        return Ok(PhaseOne::Infeasible { objective });
    }

    // drive the remaining artificial variables out of the basis
    let mut keep = vec![true; m];
    for i in 0..m {
        if basis[i] < n {
            continue;
        }
        let row = &t[i * width..i * width + n];
        let best = row
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > PIVOT_TOL)
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(j, _)| j);
        match best {
            Some(j) => pivot(&mut t, &mut obj, &mut basis, width, i, j),
            None => keep[i] = false,
        }
    }

    let rows: Vec<usize> = (0..m).filter(|&i| keep[i]).collect();
    let new_width = n + 1;
    let mut compact = Vec::with_capacity(rows.len() * new_width);
    for &i in &rows {
        compact.extend_from_slice(&t[i * width..i * width + n]);
        compact.push(t[i * width + width - 1]);
    }
    let basis = rows.iter().map(|&i| basis[i]).collect();
    Ok(PhaseOne::Feasible(FeasibleTableau {
        n,
        rows,
        t: compact,
        basis,
        system: system.clone(),
        max_iter,
    }))
}

impl FeasibleTableau {
    /// Rank of the constraint matrix (number of retained rows).
    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn basis(&self) -> &[usize] {
        &self.basis
    }

    /// Indices of the retained (non-redundant) rows of the original system.
    pub fn retained_rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn system(&self) -> &EqualitySystem {
        &self.system
    }

    /// Basic solution of the current basis.
    pub fn solution(&self) -> Vec<f64> {
        basic_solution(&self.system, &self.rows, &self.basis).unwrap_or_else(|| {
            let width = self.n + 1;
            let mut x = vec![0.0; self.n];
            for (i, &j) in self.basis.iter().enumerate() {
                x[j] = self.t[i * width + self.n].max(0.0);
            }
            x
        })
    }

    /// Minimizes `c·x` over the feasible set, returning the optimum and an
    /// optimal basic solution. The polytope must be bounded in direction `c`.
    pub fn minimize(&self, c: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (value, x, _) = self.minimize_tableau(c)?;
        Ok((value, x))
    }

    pub fn maximize(&self, c: &[f64]) -> Result<(f64, Vec<f64>)> {
        let neg: Vec<f64> = c.iter().map(|v| -v).collect();
        let (value, x) = self.minimize(&neg)?;
        Ok((-value, x))
    }

    pub(crate) fn minimize_tableau(&self, c: &[f64]) -> Result<(f64, Vec<f64>, FeasibleTableau)> {
        assert_eq!(c.len(), self.n);
        let mut next = self.clone();
        let width = self.n + 1;
        let mut obj = vec![0.0; width];
        obj[..self.n].copy_from_slice(c);
        for (i, &bj) in self.basis.iter().enumerate() {
            let cb = c[bj];
            if cb != 0.0 {
                for j in 0..width {
                    obj[j] -= cb * self.t[i * width + j];
                }
            }
        }
        run(&mut next.t, &mut obj, &mut next.basis, width, self.n, self.max_iter)?;
        let x = next.solution();
        let value = x.iter().zip(c).map(|(x, c)| x * c).sum();
        Ok((value, x, next))
    }
}

/// Solves `B x_B = b` for the columns in `basis`, restricted to `rows`.
pub fn basic_solution(system: &EqualitySystem, rows: &[usize], basis: &[usize]) -> Option<Vec<f64>> {
    let r = rows.len();
    if basis.len() != r {
        return None;
    }
    let mut x = vec![0.0; system.n];
    if r == 0 {
        return Some(x);
    }
    let bmat = DMatrix::from_fn(r, r, |i, j| system.a[rows[i] * system.n + basis[j]]);
    let rhs = DVector::from_iterator(r, rows.iter().map(|&i| system.b[i]));
    let xb = bmat.lu().solve(&rhs)?;
    for (j, v) in basis.iter().zip(xb.iter()) {
        x[*j] = if v.abs() < 1e-13 { 0.0 } else { *v };
    }
    Some(x)
}

fn pivot(t: &mut [f64], obj: &mut [f64], basis: &mut [usize], width: usize, r: usize, e: usize) {
    let p = t[r * width + e];
    for v in &mut t[r * width..(r + 1) * width] {
        *v /= p;
    }
    let m = basis.len();
    let (before, rest) = t.split_at_mut(r * width);
    let (prow, after) = rest.split_at_mut(width);
    let eliminate = |row: &mut [f64]| {
        let f = row[e];
        if f != 0.0 {
            for (x, y) in row.iter_mut().zip(prow.iter()) {
                *x -= f * y;
            }
            row[e] = 0.0;
        }
    };
    for row in before.chunks_mut(width) {
        eliminate(row);
    }
    for row in after.chunks_mut(width) {
        eliminate(row);
    }
    eliminate(obj);
    debug_assert!(r < m);
    basis[r] = e;
}

/// Simplex iterations on a tableau in canonical form; columns at or beyond
/// `active` never enter.
fn run(
    t: &mut [f64],
    obj: &mut [f64],
    basis: &mut [usize],
    width: usize,
    active: usize,
    max_iter: usize,
) -> Result<()> {
    let m = basis.len();
    for _ in 0..max_iter {
        let Some(e) = (0..active).find(|&j| obj[j] < -COST_TOL) else {
            return Ok(());
        };
        let mut best: Option<(usize, f64)> = None;
        for i in 0..m {
            let a = t[i * width + e];
            if a <= PIVOT_TOL {
                continue;
            }
            let ratio = t[i * width + width - 1].max(0.0) / a;
            best = match best {
                None => Some((i, ratio)),
                Some((bi, br)) => {
                    if ratio < br - RATIO_TIE || (ratio <= br + RATIO_TIE && basis[i] < basis[bi]) {
                        Some((i, ratio))
                    } else {
                        Some((bi, br))
                    }
                }
            };
        }
        let Some((r, _)) = best else {
            return Err(Error::NumericalFailure(format!(
                "linear program is unbounded along column {e}"
            )));
        };
        pivot(t, obj, basis, width, r, e);
    }
    Err(Error::NumericalFailure(format!(
        "simplex did not terminate within {max_iter} pivots"
    )))
}

/// Default pivot budget for a problem of the given size.
pub fn default_max_iter(m: usize, n: usize) -> usize {
    50_000 + 50 * (m + n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(rows: &[&[f64]], b: &[f64]) -> EqualitySystem {
        let n = rows[0].len();
        let a = rows.iter().flat_map(|r| r.iter().copied()).collect();
        EqualitySystem::new(rows.len(), n, a, b.to_vec())
    }

    fn feasible(s: &EqualitySystem) -> FeasibleTableau {
        match phase_one(s, 1000).unwrap() {
            PhaseOne::Feasible(t) => t,
            PhaseOne::Infeasible { objective } => panic!("infeasible {objective}"),
        }
    }

    #[test]
    fn simple_feasible_system() {
        let s = sys(&[&[1.0, 1.0, 1.0], &[1.0, -1.0, 0.0]], &[1.0, 0.2]);
        let t = feasible(&s);
        let x = t.solution();
        assert!(s.residual(&x) < 1e-12);
        assert!(x.iter().all(|&v| v >= 0.0));
        let (lo, xl) = t.minimize(&[0.0, 0.0, 1.0]).unwrap();
        let (hi, xh) = t.maximize(&[0.0, 0.0, 1.0]).unwrap();
        assert!(lo.abs() < 1e-12);
        assert!((hi - 0.8).abs() < 1e-12);
        assert!(s.residual(&xl) < 1e-12 && s.residual(&xh) < 1e-12);
    }

    #[test]
    fn infeasible_system() {
        let s = sys(&[&[1.0, 1.0], &[1.0, 1.0]], &[1.0, 0.5]);
        match phase_one(&s, 1000).unwrap() {
            PhaseOne::Infeasible { objective } => assert!((objective - 0.5).abs() < 1e-12),
            _ => panic!("expected infeasible"),
        }
        let s = sys(&[&[1.0, 1.0]], &[-1.0]);
        assert!(matches!(phase_one(&s, 1000).unwrap(), PhaseOne::Infeasible { .. }));
    }

    #[test]
    fn redundant_rows_are_dropped() {
        let s = sys(&[&[1.0, 1.0, 0.0], &[2.0, 2.0, 0.0], &[0.0, 1.0, 1.0]], &[1.0, 2.0, 0.5]);
        let t = feasible(&s);
        assert_eq!(t.rank(), 2);
        assert!(s.residual(&t.solution()) < 1e-12);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // a classic cycling example for the textbook rule, in equality form
        let s = sys(
            &[
                &[0.5, -5.5, -2.5, 9.0, 1.0, 0.0, 0.0],
                &[0.5, -1.5, -0.5, 1.0, 0.0, 1.0, 0.0],
                &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
            ],
            &[0.0, 0.0, 1.0],
        );
        let t = feasible(&s);
        let (v, x) = t.minimize(&[-10.0, 57.0, 9.0, 24.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((v + 1.0).abs() < 1e-9, "{v}");
        assert!(s.residual(&x) < 1e-12);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let s = sys(&[&[1.0, 1.0, 1.0, 1.0]], &[1.0]);
        let t = feasible(&s);
        let capped = FeasibleTableau { max_iter: 0, ..t };
        let r = capped.minimize(&[1.0, 2.0, 3.0, -4.0]);
        assert!(matches!(r, Err(Error::NumericalFailure(_))));
    }
}
