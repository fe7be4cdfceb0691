//! Dense bounded-variable revised simplex.
//!
//! Solves
//!
//! ```text
//! minimize    c·x
//! subject to  A_ub x <= b_ub
//!             A_eq x  = b_eq
//!             lower <= x <= upper      (infinite bounds allowed)
//! ```
//!
//! Inequality rows get a slack column; rows whose starting residual cannot be
//! absorbed by a slack get an artificial column. Phase one minimises the sum of
//! artificials, phase two the true objective with the artificials fixed at zero.
//! The explicit basis inverse is updated by elementary row operations and
//! refactorised periodically. Dantzig pricing is used until too many
//! consecutive degenerate pivots occur, after which Bland's rule takes over.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute per-row primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-7;
/// Reduced-cost optimality tolerance.
pub const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_STEP: f64 = 1e-12;
const REFACTOR_EVERY: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row multipliers, inequality rows first. Non-positive on inequality
    /// rows at an optimum.
    pub duals: Vec<f64>,
    /// `c - A^T y` for the structural variables.
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
}

impl LpProblem {
    /// `n` variables, zero objective, bounds `[0, +inf)`.
    pub fn new(n: usize) -> Self {
        Self {
            c: vec![0.0; n],
            a_ub: Vec::new(),
            b_ub: Vec::new(),
            a_eq: Vec::new(),
            b_eq: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    fn dense_row(&self, coeffs: &[(usize, f64)]) -> Vec<f64> {
        let mut row = vec![0.0; self.n_vars()];
        for &(j, v) in coeffs {
            row[j] += v;
        }
        row
    }

    pub fn add_le(&mut self, coeffs: &[(usize, f64)], rhs: f64) {
        let row = self.dense_row(coeffs);
        self.a_ub.push(row);
        self.b_ub.push(rhs);
    }

    pub fn add_ge(&mut self, coeffs: &[(usize, f64)], rhs: f64) {
        let neg: Vec<(usize, f64)> = coeffs.iter().map(|&(j, v)| (j, -v)).collect();
        self.add_le(&neg, -rhs);
    }

    pub fn add_eq(&mut self, coeffs: &[(usize, f64)], rhs: f64) {
        let row = self.dense_row(coeffs);
        self.a_eq.push(row);
        self.b_eq.push(rhs);
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        let dim = |what: &str, got: usize, want: usize| -> Result<()> {
            if got == want {
                Ok(())
            } else {
                Err(Error::DimensionMismatch(format!("{what}: expected {want}, got {got}")))
            }
        };
        dim("lower bounds", self.lower.len(), n)?;
        dim("upper bounds", self.upper.len(), n)?;
        dim("b_ub", self.b_ub.len(), self.a_ub.len())?;
        dim("b_eq", self.b_eq.len(), self.a_eq.len())?;
        for (i, row) in self.a_ub.iter().chain(&self.a_eq).enumerate() {
            dim(&format!("constraint row {i}"), row.len(), n)?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Lp(format!("constraint row {i} has a non-finite coefficient")));
            }
        }
        if self.c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Lp("objective coefficients must be finite".into()));
        }
        if self.b_ub.iter().chain(&self.b_eq).any(|v| v.is_nan()) {
            return Err(Error::Lp("right-hand side contains NaN".into()));
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::Lp(format!("variable {j} has invalid bounds [{l}, {u}]")));
            }
        }
        Ok(())
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |row: &[f64]| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let mut worst = 0.0f64;
        for (row, b) in self.a_ub.iter().zip(&self.b_ub) {
            worst = worst.max(dot(row) - b);
        }
        for (row, b) in self.a_eq.iter().zip(&self.b_eq) {
            worst = worst.max((dot(row) - b).abs());
        }
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        worst
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Plain-text dump for cross-checking with external solvers.
    ///
    /// ```text
    /// lp <n> <m_ub> <m_eq>
    /// c <c_1> ... <c_n>
    /// lower <l_1> ... <l_n>
    /// upper <u_1> ... <u_n>
    /// le <a_1> ... <a_n> <b>      (one per inequality row)
    /// eq <a_1> ... <a_n> <b>      (one per equality row)
    /// ```
    ///
    /// Infinite bounds are written as `inf` / `-inf`.
    pub fn to_dump(&self) -> String {
        let mut s = String::new();
        let fmt_row = |s: &mut String, tag: &str, vals: &[f64]| {
            s.push_str(tag);
            for v in vals {
                let _ = write!(s, " {v:e}");
            }
            s.push('\n');
        };
        let _ = writeln!(s, "lp {} {} {}", self.n_vars(), self.a_ub.len(), self.a_eq.len());
        fmt_row(&mut s, "c", &self.c);
        fmt_row(&mut s, "lower", &self.lower);
        fmt_row(&mut s, "upper", &self.upper);
        for (row, b) in self.a_ub.iter().zip(&self.b_ub) {
            let mut vals = row.clone();
            vals.push(*b);
            fmt_row(&mut s, "le", &vals);
        }
        for (row, b) in self.a_eq.iter().zip(&self.b_eq) {
            let mut vals = row.clone();
            vals.push(*b);
            fmt_row(&mut s, "eq", &vals);
        }
        s
    }

    pub fn from_dump(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let parse_err = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.to_string() };
        let parse_vals = |line: usize, toks: &[&str]| -> Result<Vec<f64>> {
            toks.iter()
                .map(|t| t.parse::<f64>().map_err(|_| parse_err(line, &format!("bad number {t:?}"))))
                .collect()
        };
        let (ln, header) = lines.next().ok_or_else(|| parse_err(0, "empty dump"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 || h[0] != "lp" {
            return Err(parse_err(ln, "expected header `lp n m_ub m_eq`"));
        }
        let dims: Vec<usize> = h[1..]
            .iter()
            .map(|t| t.parse().map_err(|_| parse_err(ln, "bad dimension")))
            .collect::<Result<_>>()?;
        let (n, m_ub, m_eq) = (dims[0], dims[1], dims[2]);
        let mut p = LpProblem::new(n);
        let mut seen = (false, false, false);
        for (ln, line) in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            let vals = parse_vals(ln, &toks[1..])?;
            let want = match toks[0] {
                "c" | "lower" | "upper" => n,
                "le" | "eq" => n + 1,
                other => return Err(parse_err(ln, &format!("unknown row tag {other:?}"))),
            };
            if vals.len() != want {
                return Err(parse_err(ln, &format!("expected {want} values, got {}", vals.len())));
            }
            match toks[0] {
                "c" => {
                    p.c = vals;
                    seen.0 = true;
                }
                "lower" => {
                    p.lower = vals;
                    seen.1 = true;
                }
                "upper" => {
                    p.upper = vals;
                    seen.2 = true;
                }
                "le" => {
                    p.b_ub.push(vals[n]);
                    p.a_ub.push(vals[..n].to_vec());
                }
                _ => {
                    p.b_eq.push(vals[n]);
                    p.a_eq.push(vals[..n].to_vec());
                }
            }
        }
        if !(seen.0 && seen.1 && seen.2) || p.a_ub.len() != m_ub || p.a_eq.len() != m_eq {
            return Err(parse_err(ln, "dump is missing rows"));
        }
        p.validate()?;
        Ok(p)
    }
}

impl LpSolution {
    /// Lagrangian dual bound at the reported multipliers. Equals the objective
    /// at an optimum up to round-off.
    pub fn dual_objective(&self, p: &LpProblem) -> f64 {
        let rhs = p.b_ub.iter().chain(&p.b_eq);
        let mut val: f64 = self.duals.iter().zip(rhs).map(|(y, b)| y * b).sum();
        for (j, &d) in self.reduced_costs.iter().enumerate() {
            if d > OPT_TOL {
                val += d * p.lower[j];
            } else if d < -OPT_TOL {
                val += d * p.upper[j];
            }
        }
        val
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Outcome {
    Optimal,
    Unbounded { col: usize, dir: f64 },
    IterationLimit,
}

/// Working state over the extended column set (structural, slacks, artificials).
struct Simplex {
    m: usize,
    n_struct: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    row_of: Vec<Option<usize>>,
    binv: Vec<f64>,
    since_refactor: usize,
    iterations: usize,
}

impl Simplex {
    fn binv_at(&self, i: usize, k: usize) -> f64 {
        self.binv[i * self.m + k]
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        // Gauss-Jordan on [B | I].
        let mut b = vec![0.0; m * m];
        for (i, &col) in self.basis.iter().enumerate() {
            for &(r, v) in &self.cols[col] {
                b[r * m + i] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let piv = (c..m)
                .max_by(|&a, &bb| b[a * m + c].abs().total_cmp(&b[bb * m + c].abs()))
                .unwrap();
            if b[piv * m + c].abs() < 1e-12 {
                return Err(Error::Lp("singular basis during refactorisation".into()));
            }
            if piv != c {
                for k in 0..m {
                    b.swap(piv * m + k, c * m + k);
                    inv.swap(piv * m + k, c * m + k);
                }
            }
            let p = b[c * m + c];
            for k in 0..m {
                b[c * m + k] /= p;
                inv[c * m + k] /= p;
            }
            for r in 0..m {
                if r != c {
                    let f = b[r * m + c];
                    if f != 0.0 {
                        for k in 0..m {
                            b[r * m + k] -= f * b[c * m + k];
                            inv[r * m + k] -= f * inv[c * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        self.since_refactor = 0;
        self.recompute_basic_values();
        Ok(())
    }

    fn recompute_basic_values(&mut self) {
        let m = self.m;
        let mut resid = self.rhs.clone();
        for (j, col) in self.cols.iter().enumerate() {
            if self.row_of[j].is_none() && self.x[j] != 0.0 {
                for &(r, v) in col {
                    resid[r] -= v * self.x[j];
                }
            }
        }
        for i in 0..m {
            let val = (0..m).map(|k| self.binv_at(i, k) * resid[k]).sum();
            self.x[self.basis[i]] = val;
        }
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for i in 0..m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for k in 0..m {
                    y[k] += cb * self.binv_at(i, k);
                }
            }
        }
        y
    }

    fn reduced_cost(&self, cost: &[f64], y: &[f64], j: usize) -> f64 {
        cost[j] - self.cols[j].iter().map(|&(r, v)| y[r] * v).sum::<f64>()
    }

    fn column_image(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for &(k, v) in &self.cols[j] {
            for (i, a) in alpha.iter_mut().enumerate() {
                *a += self.binv_at(i, k) * v;
            }
        }
        alpha
    }

    /// Direction in which nonbasic `j` may improve the objective, if any.
    fn improving_direction(&self, j: usize, d: f64) -> Option<f64> {
        let (l, u, v) = (self.lower[j], self.upper[j], self.x[j]);
        if l == u {
            return None;
        }
        let at_lower = l.is_finite() && v <= l;
        let at_upper = u.is_finite() && v >= u;
        if d < -OPT_TOL && !at_upper {
            Some(1.0)
        } else if d > OPT_TOL && !at_lower {
            Some(-1.0)
        } else {
            None
        }
    }

    fn pivot(&mut self, row: usize, entering: usize, alpha: &[f64]) {
        let m = self.m;
        let p = alpha[row];
        for k in 0..m {
            self.binv[row * m + k] /= p;
        }
        for i in 0..m {
            if i != row && alpha[i] != 0.0 {
                let f = alpha[i];
                for k in 0..m {
                    self.binv[i * m + k] -= f * self.binv[row * m + k];
                }
            }
        }
        let leaving = self.basis[row];
        self.row_of[leaving] = None;
        self.basis[row] = entering;
        self.row_of[entering] = Some(row);
        self.since_refactor += 1;
    }

    fn optimize(&mut self, cost: &[f64], max_iter: usize) -> Result<Outcome> {
        let n_cols = self.cols.len();
        let degenerate_limit = 5 * (self.m + self.n_struct);
        let mut degenerate_run = 0usize;
        let mut bland = false;
        let mut verified_once = false;
        loop {
            if self.iterations >= max_iter {
                return Ok(Outcome::IterationLimit);
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let y = self.duals(cost);

            // Pricing.
            let mut entering: Option<(usize, f64, f64)> = None;
            for j in 0..n_cols {
                if self.row_of[j].is_some() {
                    continue;
                }
                let d = self.reduced_cost(cost, &y, j);
                if let Some(dir) = self.improving_direction(j, d) {
                    if bland {
                        entering = Some((j, dir, d));
                        break;
                    }
                    if entering.is_none_or(|(_, _, best)| d.abs() > best.abs()) {
                        entering = Some((j, dir, d));
                    }
                }
            }
            let Some((q, dir, _)) = entering else {
                // Confirm on a fresh factorisation before declaring optimality.
                if verified_once && self.since_refactor == 0 {
                    return Ok(Outcome::Optimal);
                }
                self.refactor()?;
                verified_once = true;
                continue;
            };
            verified_once = false;

            let alpha = self.column_image(q);
            // Ratio test: basic values move by -dir * t * alpha.
            let mut step = f64::INFINITY;
            let mut leave: Option<(usize, f64)> = None;
            let own_range = self.upper[q] - self.lower[q];
            for (i, &a) in alpha.iter().enumerate() {
                let rate = dir * a;
                if rate.abs() <= PIVOT_TOL {
                    continue;
                }
                let b = self.basis[i];
                let (limit, bound) = if rate > 0.0 {
                    if self.lower[b] == f64::NEG_INFINITY {
                        continue;
                    }
                    ((self.x[b] - self.lower[b]) / rate, self.lower[b])
                } else {
                    if self.upper[b] == f64::INFINITY {
                        continue;
                    }
                    ((self.upper[b] - self.x[b]) / -rate, self.upper[b])
                };
                let limit = limit.max(0.0);
                let better = match leave {
                    None => true,
                    Some((r, _)) => {
                        if limit < step - 1e-12 {
                            true
                        } else if limit <= step + 1e-12 {
                            if bland {
                                b < self.basis[r]
                            } else {
                                a.abs() > alpha[r].abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    step = if leave.is_none() { limit } else { step.min(limit) };
                    leave = Some((i, bound));
                }
            }
            let flip = own_range.is_finite() && own_range <= step;
            if leave.is_none() && !flip {
                return Ok(Outcome::Unbounded { col: q, dir });
            }
            let t = if flip { own_range } else { step };

            self.x[q] += dir * t;
            for (i, &a) in alpha.iter().enumerate() {
                if a != 0.0 {
                    let b = self.basis[i];
                    self.x[b] -= dir * t * a;
                }
            }
            if flip {
                self.x[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
            } else {
                let (row, bound) = leave.unwrap();
                let leaving = self.basis[row];
                self.pivot(row, q, &alpha);
                self.x[leaving] = bound;
            }
            self.iterations += 1;

            if t <= DEGENERATE_STEP {
                degenerate_run += 1;
                if degenerate_run > degenerate_limit {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }
        }
    }
}

fn dense_to_sparse(col: impl Iterator<Item = f64>) -> Vec<(usize, f64)> {
    col.enumerate().filter(|&(_, v)| v != 0.0).collect()
}

/// Solve `p`. Errors only on malformed input or an internally inconsistent
/// certificate; infeasible, unbounded and iteration-limit outcomes are reported
/// through [`LpStatus`].
pub fn solve_lp(p: &LpProblem) -> Result<LpSolution> {
    p.validate()?;
    let n = p.n_vars();
    let m_ub = p.a_ub.len();
    let m = m_ub + p.a_eq.len();
    let rows: Vec<&Vec<f64>> = p.a_ub.iter().chain(&p.a_eq).collect();
    let rhs: Vec<f64> = p.b_ub.iter().chain(&p.b_eq).copied().collect();

    let mut cols: Vec<Vec<(usize, f64)>> = (0..n).map(|j| dense_to_sparse(rows.iter().map(|r| r[j]))).collect();
    let mut lower = p.lower.clone();
    let mut upper = p.upper.clone();
    for i in 0..m_ub {
        cols.push(vec![(i, 1.0)]);
        lower.push(0.0);
        upper.push(f64::INFINITY);
    }

    // Nonbasic structurals start at a finite bound (or zero when free).
    let mut x = vec![0.0; n + m_ub];
    for j in 0..n {
        x[j] = if lower[j].is_finite() {
            lower[j]
        } else if upper[j].is_finite() {
            upper[j]
        } else {
            0.0
        };
    }
    let mut resid = rhs.clone();
    for j in 0..n {
        if x[j] != 0.0 {
            for &(r, v) in &cols[j] {
                resid[r] -= v * x[j];
            }
        }
    }

    let mut basis = Vec::with_capacity(m);
    let mut artificials = Vec::new();
    for i in 0..m {
        if i < m_ub && resid[i] >= 0.0 {
            let s = n + i;
            basis.push(s);
            x[s] = resid[i];
        } else {
            let sign = if resid[i] >= 0.0 { 1.0 } else { -1.0 };
            cols.push(vec![(i, sign)]);
            lower.push(0.0);
            upper.push(f64::INFINITY);
            x.push(resid[i].abs());
            let a = cols.len() - 1;
            artificials.push(a);
            basis.push(a);
        }
    }
    let n_cols = cols.len();
    let mut row_of = vec![None; n_cols];
    for (i, &b) in basis.iter().enumerate() {
        row_of[b] = Some(i);
    }
    // Every initial basic column is ±e_i, so B^{-1} is diagonal.
    let mut binv = vec![0.0; m * m];
    for (i, &b) in basis.iter().enumerate() {
        binv[i * m + i] = 1.0 / cols[b][0].1;
    }

    let mut s = Simplex {
        m,
        n_struct: n,
        cols,
        lower,
        upper,
        rhs: rhs.clone(),
        x,
        basis,
        row_of,
        binv,
        since_refactor: 0,
        iterations: 0,
    };
    let max_iter = 50 * (m + n_cols) + 1000;

    let scale = 1.0 + rhs.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !artificials.is_empty() {
        let mut cost1 = vec![0.0; n_cols];
        for &a in &artificials {
            cost1[a] = 1.0;
        }
        match s.optimize(&cost1, max_iter)? {
            Outcome::IterationLimit => return Ok(limit_solution(p, &s)),
            Outcome::Unbounded { .. } => {
                return Err(Error::Lp("phase one reported an unbounded ray".into()));
            }
            Outcome::Optimal => {}
        }
        let infeas: f64 = artificials.iter().map(|&a| s.x[a]).sum();
        if infeas > FEAS_TOL * scale {
            // Certificate: the phase-one dual bound must itself be positive.
            let y = s.duals(&cost1);
            let mut bound: f64 = y.iter().zip(&rhs).map(|(a, b)| a * b).sum();
            for j in 0..n_cols {
                if s.row_of[j].is_some() {
                    continue;
                }
                let d = s.reduced_cost(&cost1, &y, j);
                if d > OPT_TOL {
                    bound += d * s.lower[j];
                } else if d < -OPT_TOL {
                    bound += d * s.upper[j];
                }
            }
            if !(bound > 0.5 * FEAS_TOL * scale) {
                return Err(Error::Lp(format!(
                    "infeasibility certificate failed (phase-one value {infeas:e}, dual bound {bound:e})"
                )));
            }
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: s.x[..n].to_vec(),
                objective: f64::NAN,
                duals: y,
                reduced_costs: Vec::new(),
                iterations: s.iterations,
            });
        }
        for &a in &artificials {
            s.upper[a] = 0.0;
            if s.row_of[a].is_none() {
                s.x[a] = 0.0;
            }
        }
    }

    let mut cost2 = vec![0.0; n_cols];
    cost2[..n].copy_from_slice(&p.c);
    match s.optimize(&cost2, max_iter)? {
        Outcome::IterationLimit => Ok(limit_solution(p, &s)),
        Outcome::Unbounded { col, dir } => {
            let ray = unbounded_ray(&s, col, dir);
            verify_ray(p, &ray)?;
            Ok(LpSolution {
                status: LpStatus::Unbounded,
                x: s.x[..n].to_vec(),
                objective: f64::NEG_INFINITY,
                duals: Vec::new(),
                reduced_costs: Vec::new(),
                iterations: s.iterations,
            })
        }
        Outcome::Optimal => {
            let y = s.duals(&cost2);
            let reduced_costs = (0..n).map(|j| s.reduced_cost(&cost2, &y, j)).collect();
            let mut x = s.x[..n].to_vec();
            for j in 0..n {
                x[j] = x[j].clamp(p.lower[j], p.upper[j]);
            }
            let viol = p.max_violation(&x);
            if viol > FEAS_TOL * scale {
                return Err(Error::Lp(format!("optimal point violates constraints by {viol:e}")));
            }
            Ok(LpSolution {
                status: LpStatus::Optimal,
                objective: p.objective_at(&x),
                x,
                duals: y,
                reduced_costs,
                iterations: s.iterations,
            })
        }
    }
}

fn limit_solution(p: &LpProblem, s: &Simplex) -> LpSolution {
    LpSolution {
        status: LpStatus::IterationLimit,
        x: s.x[..p.n_vars()].to_vec(),
        objective: f64::NAN,
        duals: Vec::new(),
        reduced_costs: Vec::new(),
        iterations: s.iterations,
    }
}

fn unbounded_ray(s: &Simplex, col: usize, dir: f64) -> Vec<f64> {
    let mut ray = vec![0.0; s.cols.len()];
    ray[col] = dir;
    let alpha = s.column_image(col);
    for (i, &a) in alpha.iter().enumerate() {
        ray[s.basis[i]] -= dir * a;
    }
    ray.truncate(s.n_struct);
    ray
}

fn verify_ray(p: &LpProblem, ray: &[f64]) -> Result<()> {
    let norm = ray.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let tol = 1e-7 * norm;
    let dot = |row: &[f64]| row.iter().zip(ray).map(|(a, b)| a * b).sum::<f64>();
    let ok_rows = p.a_ub.iter().all(|r| dot(r) <= tol) && p.a_eq.iter().all(|r| dot(r).abs() <= tol);
    let ok_bounds = ray.iter().enumerate().all(|(j, &d)| {
        (d <= tol || p.upper[j] == f64::INFINITY) && (d >= -tol || p.lower[j] == f64::NEG_INFINITY)
    });
    let improving = p.objective_at(ray) < -OPT_TOL;
    if ok_rows && ok_bounds && improving {
        Ok(())
    } else {
        Err(Error::Lp("unboundedness certificate failed verification".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_example() {
        let mut p = LpProblem::new(2);
        p.c = vec![-1.0, -1.0];
        p.add_le(&[(0, 1.0)], 1.0);
        p.add_le(&[(1, 1.0)], 1.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-9 && (s.x[1] - 1.0).abs() < 1e-9);
        assert!((s.objective + 2.0).abs() < 1e-9);
        assert!((s.dual_objective(&p) - s.objective).abs() < 1e-9);
    }

    #[test]
    fn contradictory_bounds_infeasible() {
        let mut p = LpProblem::new(1);
        p.c = vec![1.0];
        p.add_ge(&[(0, 1.0)], 3.0);
        p.add_le(&[(0, 1.0)], 2.0);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn infeasible_equalities() {
        let mut p = LpProblem::new(2);
        p.add_eq(&[(0, 1.0), (1, 1.0)], 1.0);
        p.add_eq(&[(0, 1.0), (1, 1.0)], 2.0);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let mut p = LpProblem::new(2);
        p.c = vec![-1.0, 0.0];
        p.add_le(&[(0, 1.0), (1, -1.0)], 1.0);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_variables_and_equalities() {
        // min |x - 3| via epigraph with a free x.
        let mut p = LpProblem::new(2);
        p.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
        p.c = vec![0.0, 1.0];
        p.add_le(&[(0, 1.0), (1, -1.0)], 3.0);
        p.add_le(&[(0, -1.0), (1, -1.0)], -3.0);
        p.add_eq(&[(0, 2.0)], 7.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 3.5).abs() < 1e-9);
        assert!((s.objective - 0.5).abs() < 1e-9);
    }

    #[test]
    fn upper_bounded_variables_flip() {
        let mut p = LpProblem::new(3);
        p.c = vec![-3.0, -2.0, -1.0];
        for j in 0..3 {
            p.set_bounds(j, 0.0, 1.0);
        }
        p.add_le(&[(0, 1.0), (1, 1.0), (2, 1.0)], 2.5);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 5.5).abs() < 1e-9, "{:?}", s);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Classic cycling example (Beale) under Dantzig pricing.
        let mut p = LpProblem::new(4);
        p.c = vec![-0.75, 150.0, -0.02, 6.0];
        p.add_le(&[(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], 0.0);
        p.add_le(&[(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], 0.0);
        p.add_le(&[(2, 1.0)], 1.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 0.05).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut p = LpProblem::new(2);
        p.a_ub.push(vec![1.0]);
        p.b_ub.push(1.0);
        assert!(matches!(solve_lp(&p), Err(Error::DimensionMismatch(_))));
        let mut p = LpProblem::new(1);
        p.c[0] = f64::NAN;
        assert!(solve_lp(&p).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let mut p = LpProblem::new(2);
        p.c = vec![1.5, -2.0];
        p.set_bounds(1, f64::NEG_INFINITY, 4.0);
        p.add_le(&[(0, 1.0), (1, 2.0)], 3.0);
        p.add_eq(&[(0, 1.0)], 0.25);
        let text = p.to_dump();
        assert!(text.starts_with("lp 2 1 1\n"));
        assert_eq!(LpProblem::from_dump(&text).unwrap(), p);
        assert!(LpProblem::from_dump("lp 2 1 0\nc 1 2\n").is_err());
    }
}
