//! Dense two-phase simplex for small linear programs.
//!
//! Problems here have at most a few hundred rows, so a full tableau is fine.
//! Pivoting uses the largest reduced cost and falls back to Bland's rule after
//! a run of degenerate pivots.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible (phase one residual {0:e})")]
    Infeasible(f64),
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex stopped after {0} pivots")]
    IterationLimit(usize),
    #[error("invalid linear program: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<(usize, f64)>,
    relation: Relation,
    rhs: f64,
}

/// `maximize c.x` subject to linear rows; variables are nonnegative unless
/// marked free.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    minimize: bool,
    free: Vec<bool>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    /// Optimal value in the sense the program was built with.
    pub objective: f64,
    pub x: Vec<f64>,
    pub pivots: usize,
}

const EPS: f64 = 1e-11;

impl LinearProgram {
    pub fn maximize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram { objective, minimize: false, free: vec![false; n], rows: Vec::new() }
    }

    pub fn minimize(objective: Vec<f64>) -> Self {
        let mut lp = Self::maximize(objective.into_iter().map(|c| -c).collect());
        lp.minimize = true;
        lp
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn set_free(&mut self, var: usize) {
        self.free[var] = true;
    }

    pub fn add(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.rows.push(Row { coeffs, relation, rhs });
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        let n = self.objective.len();
        for r in &self.rows {
            if !r.rhs.is_finite() || r.coeffs.iter().any(|&(j, a)| j >= n || !a.is_finite()) {
                return Err(LpError::Invalid("row with bad index or non-finite entry".into()));
            }
        }
        // column layout: original (with a negative twin for free vars), slacks, artificials
        let mut col_of = Vec::with_capacity(n);
        let mut twin = vec![None; n];
        let mut ncols = 0;
        #[allow(clippy::needless_range_loop)]
        for j in 0..n {
            col_of.push(ncols);
            ncols += 1;
            if self.free[j] {
                twin[j] = Some(ncols);
                ncols += 1;
            }
        }
        let n_struct = ncols;
        let m = self.rows.len();
        let mut relations = Vec::with_capacity(m);
        let mut signs = Vec::with_capacity(m);
        for r in &self.rows {
            let flip = r.rhs < 0.0;
            signs.push(if flip { -1.0 } else { 1.0 });
            relations.push(match (r.relation, flip) {
                (Relation::Le, false) | (Relation::Ge, true) => Relation::Le,
                (Relation::Ge, false) | (Relation::Le, true) => Relation::Ge,
                (Relation::Eq, _) => Relation::Eq,
            });
        }
        let n_slack = relations.iter().filter(|&&r| r != Relation::Eq).count();
        let n_art = relations.iter().filter(|&&r| r != Relation::Le).count();
        let total = n_struct + n_slack + n_art;
        let width = total + 1;
        let mut tab = vec![0.0; m * width];
        let mut basis = vec![0usize; m];
        let mut slack = n_struct;
        let mut art = n_struct + n_slack;
        for (i, r) in self.rows.iter().enumerate() {
            let row = &mut tab[i * width..(i + 1) * width];
            for &(j, a) in &r.coeffs {
                row[col_of[j]] += signs[i] * a;
                if let Some(tw) = twin[j] {
                    row[tw] -= signs[i] * a;
                }
            }
            row[total] = signs[i] * r.rhs;
            match relations[i] {
                Relation::Le => {
                    row[slack] = 1.0;
                    basis[i] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -1.0;
                    slack += 1;
                    row[art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
                Relation::Eq => {
                    row[art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
            }
        }
        let art_start = n_struct + n_slack;
        let mut t = Tableau { m, width, total, tab, basis, pivots: 0 };

        if n_art > 0 {
            let mut cost = vec![0.0; total];
            for c in cost.iter_mut().skip(art_start) {
                *c = -1.0;
            }
            t.run(&cost, total)?;
            let residual: f64 = (0..m).filter(|&i| t.basis[i] >= art_start).map(|i| t.rhs(i)).sum();
            let scale = 1.0 + self.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
            if residual > 1e-9 * scale {
                return Err(LpError::Infeasible(residual));
            }
            // drive zero-level artificials out of the basis where possible
            for i in 0..m {
                if t.basis[i] >= art_start {
                    if let Some(j) = (0..art_start).find(|&j| t.at(i, j).abs() > 1e-9) {
                        t.pivot(i, j);
                    }
                }
            }
        }

        let mut cost = vec![0.0; total];
        for j in 0..n {
            cost[col_of[j]] = self.objective[j];
            if let Some(tw) = twin[j] {
                cost[tw] = -self.objective[j];
            }
        }
        t.run(&cost, art_start)?;

        let mut raw = vec![0.0; total];
        for i in 0..m {
            raw[t.basis[i]] = t.rhs(i);
        }
        let x: Vec<f64> = (0..n).map(|j| raw[col_of[j]] - twin[j].map_or(0.0, |tw| raw[tw])).collect();
        let value: f64 = x.iter().zip(&self.objective).map(|(a, b)| a * b).sum();
        let objective = if self.minimize { -value } else { value };
        Ok(LpSolution { objective, x, pivots: t.pivots })
    }
}

struct Tableau {
    m: usize,
    width: usize,
    total: usize,
    tab: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.tab[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.tab[i * self.width + self.total]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.tab[r * w + c];
        for v in &mut self.tab[r * w..(r + 1) * w] {
            *v /= p;
        }
        let (before, rest) = self.tab.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[c];
            if f != 0.0 {
                for (v, &pv) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Maximises `cost` over columns `< allowed` starting from the current basis.
    fn run(&mut self, cost: &[f64], allowed: usize) -> Result<(), LpError> {
        let limit = 50_000 + 100 * (self.m + self.total);
        let mut degenerate_run = 0usize;
        let mut reduced = vec![0.0; self.total];
        loop {
            for (j, rj) in reduced.iter_mut().enumerate() {
                *rj = cost[j];
            }
            for i in 0..self.m {
                let cb = cost[self.basis[i]];
                if cb != 0.0 {
                    let row = &self.tab[i * self.width..i * self.width + self.total];
                    for (rj, &a) in reduced.iter_mut().zip(row) {
                        *rj -= cb * a;
                    }
                }
            }
            let bland = degenerate_run > 50;
            let mut enter = None;
            let mut best = EPS;
            for (j, &rj) in reduced.iter().enumerate().take(allowed) {
                if rj > best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = rj;
                }
            }
            let Some(c) = enter else { return Ok(()) };
            let mut leave = None;
            let mut ratio = f64::INFINITY;
            for i in 0..self.m {
                let a = self.at(i, c);
                if a > 1e-12 {
                    let q = self.rhs(i).max(0.0) / a;
                    let better = match leave {
                        None => true,
                        Some(l) => q < ratio - 1e-14 || (q <= ratio + 1e-14 && self.basis[i] < self.basis[l]),
                    };
                    if better {
                        ratio = q;
                        leave = Some(i);
                    }
                }
            }
            let Some(r) = leave else { return Err(LpError::Unbounded) };
            if ratio < 1e-13 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, c);
            if self.pivots > limit {
                return Err(LpError::IterationLimit(self.pivots));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let mut lp = LinearProgram::maximize(vec![3.0, 5.0]);
        lp.add(vec![(0, 1.0)], Relation::Le, 4.0);
        lp.add(vec![(1, 2.0)], Relation::Le, 12.0);
        lp.add(vec![(0, 3.0), (1, 2.0)], Relation::Le, 18.0);
        let s = lp.solve().unwrap();
        assert!((s.objective - 36.0).abs() < 1e-10);
        assert!((s.x[0] - 2.0).abs() < 1e-10 && (s.x[1] - 6.0).abs() < 1e-10);
    }

    #[test]
    fn equality_and_free_variables() {
        // min |x - 3| style: min s, s >= x - 3, s >= 3 - x, x free, x + y = 5, y >= 1
        let mut lp = LinearProgram::minimize(vec![0.0, 0.0, 1.0]);
        lp.set_free(0);
        lp.add(vec![(2, 1.0), (0, -1.0)], Relation::Ge, -3.0);
        lp.add(vec![(2, 1.0), (0, 1.0)], Relation::Ge, 3.0);
        lp.add(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 5.0);
        lp.add(vec![(1, 1.0)], Relation::Ge, 1.0);
        let s = lp.solve().unwrap();
        assert!(s.objective.abs() < 1e-10);
        assert!((s.x[0] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = LinearProgram::maximize(vec![1.0]);
        lp.add(vec![(0, 1.0)], Relation::Le, 1.0);
        lp.add(vec![(0, 1.0)], Relation::Ge, 2.0);
        assert!(matches!(lp.solve(), Err(LpError::Infeasible(_))));
        let mut lp = LinearProgram::maximize(vec![1.0, 1.0]);
        lp.add(vec![(0, 1.0), (1, -1.0)], Relation::Le, 1.0);
        assert_eq!(lp.solve().unwrap_err(), LpError::Unbounded);
    }

    #[test]
    fn transport_problem() {
        // 2x2 transport, supplies (0.5, 0.5), demands (0.3, 0.7), cost |i - j|
        let cost = [0.0, 1.0, 1.0, 0.0];
        let mut lp = LinearProgram::minimize(cost.to_vec());
        lp.add(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 0.5);
        lp.add(vec![(2, 1.0), (3, 1.0)], Relation::Eq, 0.5);
        lp.add(vec![(0, 1.0), (2, 1.0)], Relation::Eq, 0.3);
        lp.add(vec![(1, 1.0), (3, 1.0)], Relation::Eq, 0.7);
        let s = lp.solve().unwrap();
        assert!((s.objective - 0.2).abs() < 1e-12);
    }
}
