//! Exact linear programming and the pre-steady-state solver.
//!
//! A bounded-variable simplex runs in floating point to find a candidate
//! optimal basis; the basis is then certified exactly by solving for the
//! primal values and the duals over the rationals and checking feasibility
//! and reduced-cost signs. When certification fails the same simplex runs
//! over the rationals with Bland's rule.

use std::fmt;

use thiserror::Error;

use crate::linalg::solve_square;
use crate::network::{ArcId, SplitterNetwork};
use crate::rational::Rational;
use crate::steady_state::{require_valid, SteadyState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, Rational)>,
    pub rel: Relation,
    pub rhs: Rational,
}

/// Maximize `objective · x` subject to the constraints and
/// `0 ≤ x_j ≤ upper_j` (no upper bound when `None`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearProgram {
    pub objective: Vec<Rational>,
    pub upper: Vec<Option<Rational>>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram { objective: vec![Rational::zero(); num_vars], upper: vec![None; num_vars], constraints: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coeffs: Vec<(usize, Rational)>, rel: Relation, rhs: Rational) {
        self.constraints.push(Constraint { coeffs, rel, rhs });
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LpOutcome {
    Optimal { x: Vec<Rational>, value: Rational },
    Infeasible,
    Unbounded,
}

/// The LP in equality form `A y = b`, `0 ≤ y ≤ u`: structural variables,
/// then one slack per inequality, then artificials for the rows whose
/// slack cannot start in the basis. Rows are negated where needed so that
/// `b ≥ 0`.
struct Standard {
    rows: Vec<Vec<(usize, Rational)>>,
    b: Vec<Rational>,
    upper: Vec<Option<Rational>>,
    cost: Vec<Rational>,
    n: usize,
    first_artificial: usize,
    /// Starting basic variable of each row.
    start: Vec<usize>,
}

impl Standard {
    fn new(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let r = lp.constraints.len();
        let slacks = lp.constraints.iter().filter(|c| c.rel != Relation::Eq).count();
        let first_artificial = n + slacks;
        let mut rows = Vec::with_capacity(r);
        let mut b = Vec::with_capacity(r);
        let mut start = Vec::with_capacity(r);
        let mut next_slack = n;
        let mut next_artificial = first_artificial;
        for c in &lp.constraints {
            let mut row: Vec<(usize, Rational)> = Vec::new();
            for (j, v) in &c.coeffs {
                assert!(*j < n, "constraint refers to variable {j} of {n}");
                match row.iter_mut().find(|(k, _)| k == j) {
                    Some((_, acc)) => *acc += v,
                    None => row.push((*j, v.clone())),
                }
            }
            row.retain(|(_, v)| !v.is_zero());
            let slack = match c.rel {
                Relation::Le => Some((next_slack, Rational::one())),
                Relation::Ge => Some((next_slack, -Rational::one())),
                Relation::Eq => None,
            };
            if let Some(sv) = slack.clone() {
                row.push(sv);
                next_slack += 1;
            }
            let mut rhs = c.rhs.clone();
            if rhs.is_negative() {
                for (_, v) in row.iter_mut() {
                    *v = -v.clone();
                }
                rhs = -rhs;
            }
            let unit_slack = slack.and_then(|(j, _)| row.iter().find(|(k, v)| *k == j && v.is_one()).map(|_| j));
            match unit_slack {
                Some(j) => start.push(j),
                None => {
                    row.push((next_artificial, Rational::one()));
                    start.push(next_artificial);
                    next_artificial += 1;
                }
            }
            rows.push(row);
            b.push(rhs);
        }
        let total = next_artificial;
        let mut upper = lp.upper.clone();
        upper.resize(total, None);
        let mut cost = lp.objective.clone();
        cost.resize(total, Rational::zero());
        Standard { rows, b, upper, cost, n, first_artificial, start }
    }

    fn total(&self) -> usize {
        self.cost.len()
    }
}

/// Arithmetic the simplex needs; `f64` compares with a tolerance.
trait Field: Clone + fmt::Debug {
    fn zero() -> Self;
    fn of(r: &Rational) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn sign(&self) -> i8;
    fn lt(&self, o: &Self) -> bool;
    fn abs_gt(&self, o: &Self) -> bool;
    /// Whether the entry is large enough to pivot on.
    fn pivotable(&self) -> bool;
}

const EPS: f64 = 1e-9;

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
    fn of(r: &Rational) -> Self {
        r.to_f64()
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn sign(&self) -> i8 {
        if *self > EPS {
            1
        } else if *self < -EPS {
            -1
        } else {
            0
        }
    }
    fn lt(&self, o: &Self) -> bool {
        *self < *o - EPS
    }
    fn abs_gt(&self, o: &Self) -> bool {
        self.abs() > o.abs() + EPS
    }
    fn pivotable(&self) -> bool {
        self.abs() > 1e-7
    }
}

impl Field for Rational {
    fn zero() -> Self {
        Rational::zero()
    }
    fn of(r: &Rational) -> Self {
        r.clone()
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self.clone()
    }
    fn sign(&self) -> i8 {
        if self.is_positive() {
            1
        } else if self.is_negative() {
            -1
        } else {
            0
        }
    }
    fn lt(&self, o: &Self) -> bool {
        self < o
    }
    fn abs_gt(&self, o: &Self) -> bool {
        self.abs() > o.abs()
    }
    fn pivotable(&self) -> bool {
        !self.is_zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    Stalled,
}

/// Dense tableau `B⁻¹A` with basic values and reduced costs.
struct Tableau<T> {
    a: Vec<Vec<T>>,
    beta: Vec<T>,
    d: Vec<T>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    at_upper: Vec<bool>,
    upper: Vec<Option<T>>,
    fixed: Vec<bool>,
    orig: Vec<Vec<T>>,
    b: Vec<T>,
    cost: Vec<T>,
}

impl<T: Field> Tableau<T> {
    fn new(std: &Standard) -> Self {
        let total = std.total();
        let r = std.rows.len();
        let mut a = vec![vec![T::zero(); total]; r];
        for (i, row) in std.rows.iter().enumerate() {
            for (j, v) in row {
                a[i][*j] = T::of(v);
            }
        }
        let basis = std.start.clone();
        let mut is_basic = vec![false; total];
        for &j in &basis {
            is_basic[j] = true;
        }
        Tableau {
            fixed: vec![false; total],
            orig: a.clone(),
            b: std.b.iter().map(T::of).collect(),
            cost: vec![T::zero(); total],
            a,
            beta: std.b.iter().map(T::of).collect(),
            d: vec![T::zero(); total],
            basis,
            is_basic,
            at_upper: vec![false; total],
            upper: std.upper.iter().map(|u| u.as_ref().map(T::of)).collect(),
        }
    }

    /// Reduced costs `c_j − c_B · B⁻¹A_j` for the objective `c`.
    fn price(&mut self, c: &[T]) {
        self.cost = c.to_vec();
        for j in 0..self.d.len() {
            let mut v = c[j].clone();
            for (i, &bj) in self.basis.iter().enumerate() {
                if c[bj].sign() != 0 && self.a[i][j].sign() != 0 {
                    v = v.add(&c[bj].mul(&self.a[i][j]).neg());
                }
            }
            self.d[j] = v;
        }
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.fixed[j] || matches!(&self.upper[j], Some(u) if u.sign() == 0)
    }

    fn entering(&self, bland: bool) -> Option<(usize, i8)> {
        let mut best: Option<(usize, i8)> = None;
        for j in 0..self.d.len() {
            if self.is_basic[j] || self.is_fixed(j) {
                continue;
            }
            let s = self.d[j].sign();
            let dir = if s > 0 && !self.at_upper[j] {
                1
            } else if s < 0 && self.at_upper[j] {
                -1
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            if best.is_none_or(|(k, _)| self.d[j].abs_gt(&self.d[k])) {
                best = Some((j, dir));
            }
        }
        best
    }

    /// Recomputes `B⁻¹A`, the basic values and the reduced costs from the
    /// original rows, to shed accumulated rounding error.
    fn reinvert(&mut self) -> bool {
        let r = self.basis.len();
        let width = self.d.len();
        let mut m = self.orig.clone();
        let mut rhs = self.b.clone();
        for j in 0..width {
            if !self.is_basic[j] && self.at_upper[j] {
                let u = self.upper[j].clone().expect("at upper bound");
                for i in 0..r {
                    if m[i][j].sign() != 0 {
                        rhs[i] = rhs[i].add(&m[i][j].mul(&u).neg());
                    }
                }
            }
        }
        let mut assigned = vec![false; r];
        let mut order = vec![0usize; r];
        for &col in &self.basis {
            let mut best: Option<usize> = None;
            for i in (0..r).filter(|&i| !assigned[i]) {
                if best.is_none_or(|b| m[i][col].abs_gt(&m[b][col])) {
                    best = Some(i);
                }
            }
            let Some(p) = best.filter(|&p| m[p][col].pivotable()) else {
                return false;
            };
            assigned[p] = true;
            order[p] = col;
            let pv = m[p][col].clone();
            for k in 0..width {
                m[p][k] = m[p][k].div(&pv);
            }
            rhs[p] = rhs[p].div(&pv);
            let prow = m[p].clone();
            let nz: Vec<usize> = (0..width).filter(|&k| prow[k].sign() != 0).collect();
            for i in 0..r {
                let f = m[i][col].clone();
                if i == p || f.sign() == 0 {
                    continue;
                }
                for &k in &nz {
                    m[i][k] = m[i][k].add(&f.mul(&prow[k]).neg());
                }
                rhs[i] = rhs[i].add(&f.mul(&rhs[p]).neg());
            }
        }
        self.a = m;
        self.beta = rhs;
        self.basis = order;
        let c = self.cost.clone();
        self.price(&c);
        true
    }

    /// Runs primal simplex iterations for the current reduced costs.
    fn run(&mut self, bland: bool, max_iter: usize) -> Status {
        let mut degenerate = 0usize;
        for it in 0..max_iter {
            if !bland && it % 128 == 127 && !self.reinvert() {
                return Status::Stalled;
            }
            let use_bland = bland || degenerate > 50;
            let Some((j, dir)) = self.entering(use_bland) else {
                if !bland && !self.reinvert() {
                    return Status::Stalled;
                }
                if !bland && self.entering(use_bland).is_some() {
                    continue;
                }
                return Status::Optimal;
            };
            // Limiting step and the row that blocks it (`None`: bound flip).
            let mut limit: Option<(T, Option<usize>)> = self.upper[j].clone().map(|u| (u, None));
            for i in 0..self.basis.len() {
                let alpha = &self.a[i][j];
                if !alpha.pivotable() {
                    continue;
                }
                let s = alpha.sign() * dir;
                let bound = if s > 0 {
                    // Basic variable decreases towards 0.
                    self.beta[i].div(&alpha.mul(&T::of(&Rational::from_integer(dir as i64))))
                } else {
                    match &self.upper[self.basis[i]] {
                        Some(u) => u.add(&self.beta[i].neg()).div(&alpha.mul(&T::of(&Rational::from_integer(-dir as i64)))),
                        None => continue,
                    }
                };
                let better = match &limit {
                    None => true,
                    Some((l, row)) => {
                        bound.lt(l)
                            || (!l.lt(&bound)
                                && match row {
                                    None => false,
                                    Some(r) => use_bland && self.basis[i] < self.basis[*r],
                                })
                    }
                };
                if better {
                    limit = Some((bound, Some(i)));
                }
            }
            let Some((step, row)) = limit else {
                return Status::Unbounded;
            };
            let step = if step.sign() < 0 { T::zero() } else { step };
            if step.sign() == 0 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            let signed = if dir > 0 { step.clone() } else { step.neg() };
            for i in 0..self.basis.len() {
                if self.a[i][j].sign() != 0 {
                    self.beta[i] = self.beta[i].add(&self.a[i][j].mul(&signed).neg());
                }
            }
            match row {
                None => self.at_upper[j] = !self.at_upper[j],
                Some(p) => {
                    let start = if self.at_upper[j] { self.upper[j].clone().expect("at upper bound") } else { T::zero() };
                    let leaving = self.basis[p];
                    let s = self.a[p][j].sign() * dir;
                    self.is_basic[leaving] = false;
                    self.at_upper[leaving] = s < 0;
                    self.beta[p] = start.add(&signed);
                    self.pivot(p, j);
                    self.basis[p] = j;
                    self.is_basic[j] = true;
                    self.at_upper[j] = false;
                }
            }
        }
        Status::Stalled
    }

    fn pivot(&mut self, p: usize, j: usize) {
        let pv = self.a[p][j].clone();
        let width = self.d.len();
        for k in 0..width {
            if self.a[p][k].sign() != 0 || k == j {
                self.a[p][k] = self.a[p][k].div(&pv);
            }
        }
        let prow = self.a[p].clone();
        let nz: Vec<usize> = (0..width).filter(|&k| prow[k].sign() != 0).collect();
        for i in 0..self.a.len() {
            if i == p {
                continue;
            }
            let f = self.a[i][j].clone();
            if f.sign() == 0 {
                continue;
            }
            for &k in &nz {
                self.a[i][k] = self.a[i][k].add(&f.mul(&prow[k]).neg());
            }
            self.a[i][j] = T::zero();
        }
        let f = self.d[j].clone();
        if f.sign() != 0 {
            for &k in &nz {
                self.d[k] = self.d[k].add(&f.mul(&prow[k]).neg());
            }
        }
        self.d[j] = T::zero();
    }

    /// Two phases: drive the artificials to 0, fix them there, then
    /// maximize the real objective.
    fn solve(std: &Standard, bland: bool) -> (Status, Self) {
        let mut tab = Tableau::<T>::new(std);
        let total = std.total();
        let max_iter = if bland { usize::MAX } else { 50 * (total + std.rows.len()) + 1000 };
        let mut phase1 = vec![T::zero(); total];
        for c in phase1.iter_mut().skip(std.first_artificial) {
            *c = T::of(&-Rational::one());
        }
        tab.price(&phase1);
        let st = tab.run(bland, max_iter);
        if st != Status::Optimal {
            return (Status::Stalled, tab);
        }
        for (i, &bj) in tab.basis.iter().enumerate() {
            if bj >= std.first_artificial && tab.beta[i].sign() != 0 {
                return (Status::Infeasible, tab);
            }
        }
        for j in std.first_artificial..total {
            tab.upper[j] = Some(T::zero());
            tab.at_upper[j] = false;
        }
        let cost: Vec<T> = std.cost.iter().map(T::of).collect();
        tab.price(&cost);
        let st = tab.run(bland, max_iter);
        (st, tab)
    }
}

/// Checks a basis exactly: primal values within bounds and reduced costs
/// of the right sign at every nonbasic variable not held at its bound.
/// Returns the primal values and the reduced costs.
fn certify(std: &Standard, basis: &[usize], at_upper: &[bool], fixed: &[bool]) -> Option<(Vec<Rational>, Vec<Rational>)> {
    let total = std.total();
    let r = std.rows.len();
    let mut pos = vec![usize::MAX; total];
    for (k, &j) in basis.iter().enumerate() {
        pos[j] = k;
    }
    let art_upper = |j: usize| -> Option<Rational> {
        if j >= std.first_artificial {
            Some(Rational::zero())
        } else {
            std.upper[j].clone()
        }
    };
    let mut y = vec![Rational::zero(); total];
    for j in 0..total {
        if pos[j] == usize::MAX && at_upper[j] {
            y[j] = art_upper(j)?;
        }
    }
    let mut brows = Vec::with_capacity(r);
    let mut rhs = Vec::with_capacity(r);
    for (i, row) in std.rows.iter().enumerate() {
        let mut entries = Vec::new();
        let mut v = std.b[i].clone();
        for (j, a) in row {
            if pos[*j] != usize::MAX {
                entries.push((pos[*j], a.clone()));
            } else if !y[*j].is_zero() {
                v -= a * &y[*j];
            }
        }
        brows.push(entries);
        rhs.push(v);
    }
    let xb = solve_square(&brows, &rhs, r)?;
    for (k, &j) in basis.iter().enumerate() {
        if xb[k].is_negative() {
            return None;
        }
        if let Some(u) = art_upper(j) {
            if xb[k] > u {
                return None;
            }
        }
        y[j] = xb[k].clone();
    }
    // Duals: Bᵀ π = c_B.
    let mut trows: Vec<Vec<(usize, Rational)>> = vec![Vec::new(); r];
    for (i, row) in std.rows.iter().enumerate() {
        for (j, a) in row {
            if pos[*j] != usize::MAX {
                trows[pos[*j]].push((i, a.clone()));
            }
        }
    }
    let cb: Vec<Rational> = basis.iter().map(|&j| std.cost[j].clone()).collect();
    let pi = solve_square(&trows, &cb, r)?;
    let mut reduced = std.cost.clone();
    for (i, row) in std.rows.iter().enumerate() {
        if pi[i].is_zero() {
            continue;
        }
        for (j, a) in row {
            reduced[*j] -= &pi[i] * a;
        }
    }
    for j in 0..total {
        if pos[j] != usize::MAX || fixed[j] || art_upper(j).is_some_and(|u| u.is_zero()) {
            continue;
        }
        let bad = if at_upper[j] { reduced[j].is_negative() } else { reduced[j].is_positive() };
        if bad {
            return None;
        }
    }
    Some((y, reduced))
}

fn outcome(std: &Standard, y: Vec<Rational>) -> LpOutcome {
    let x: Vec<Rational> = y.into_iter().take(std.n).collect();
    let value = x.iter().zip(&std.cost).map(|(a, b)| a * b).sum();
    LpOutcome::Optimal { x, value }
}

/// Solves the LP exactly; the floating-point pass only proposes a basis.
pub fn simplex(lp: &LinearProgram) -> LpOutcome {
    let std = Standard::new(lp);
    let (status, tab) = Tableau::<f64>::solve(&std, false);
    if status == Status::Optimal {
        if let Some((y, _)) = certify(&std, &tab.basis, &tab.at_upper, &tab.fixed) {
            return outcome(&std, y);
        }
    }
    simplex_exact(lp)
}

/// Rational simplex with Bland's rule throughout.
pub fn simplex_exact(lp: &LinearProgram) -> LpOutcome {
    let std = Standard::new(lp);
    let (status, tab) = Tableau::<Rational>::solve(&std, true);
    match status {
        Status::Optimal => {
            let mut y = vec![Rational::zero(); std.total()];
            for j in 0..std.total() {
                if tab.at_upper[j] {
                    y[j] = tab.upper[j].clone().expect("at upper bound");
                }
            }
            for (i, &j) in tab.basis.iter().enumerate() {
                y[j] = tab.beta[i].clone();
            }
            outcome(&std, y)
        }
        Status::Infeasible => LpOutcome::Infeasible,
        Status::Unbounded => LpOutcome::Unbounded,
        Status::Stalled => unreachable!("Bland's rule does not cycle"),
    }
}

/// Maximizes `primary`, then `secondary` among the primary optima.
///
/// The secondary pass continues from the certified primary basis with
/// every nonbasic variable of nonzero reduced cost held at its bound;
/// those are exactly the points of the primary optimal face.
pub fn lexicographic(lp: &LinearProgram, secondary: &[Rational]) -> LpOutcome {
    let mut std = Standard::new(lp);
    let (status, mut tab) = Tableau::<f64>::solve(&std, false);
    if status == Status::Optimal {
        if let Some((_, reduced)) = certify(&std, &tab.basis, &tab.at_upper, &tab.fixed) {
            for j in 0..std.total() {
                tab.fixed[j] = !tab.is_basic[j] && !reduced[j].is_zero();
            }
            let total = std.total();
            std.cost = secondary.to_vec();
            std.cost.resize(total, Rational::zero());
            let cost: Vec<f64> = std.cost.iter().map(Rational::to_f64).collect();
            tab.price(&cost);
            if tab.run(false, 50 * std.total() + 1000) == Status::Optimal {
                if let Some((y, _)) = certify(&std, &tab.basis, &tab.at_upper, &tab.fixed) {
                    return outcome(&std, y);
                }
            }
        }
    }
    lexicographic_exact(lp, secondary)
}

fn lexicographic_exact(lp: &LinearProgram, secondary: &[Rational]) -> LpOutcome {
    let LpOutcome::Optimal { value, .. } = simplex(lp) else {
        return simplex(lp);
    };
    let mut second = lp.clone();
    let coeffs = lp.objective.iter().cloned().enumerate().filter(|(_, v)| !v.is_zero()).collect();
    second.add(coeffs, Relation::Eq, value);
    second.objective = secondary.to_vec();
    simplex(&second)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LpSolveError {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("starting state is not a pre-steady-state: {0}")]
    BadStart(String),
    #[error("internal solver error: {0}")]
    Internal(String),
}

/// The system "PSS" for the fluid set of `state`, with the extra bounds
/// `t ≥ lower` on fluid arcs and `t ≤ upper` on saturated arcs.
pub fn pss(net: &SplitterNetwork, fluid: &[bool], lower: &[Option<Rational>], upper: &[Option<Rational>]) -> LinearProgram {
    pss_with(net, fluid, lower, upper, true)
}

/// `pss`, leaving out the sibling comparisons when `pairs` is false.
pub(crate) fn pss_with(
    net: &SplitterNetwork,
    fluid: &[bool],
    lower: &[Option<Rational>],
    upper: &[Option<Rational>],
    pairs: bool,
) -> LinearProgram {
    let m = net.num_arcs();
    let one = Rational::one;
    let mut lp = LinearProgram::new(m);
    for e in 0..m {
        let mut u = net.arc_cap(e);
        if let (false, Some(b)) = (fluid[e], &upper[e]) {
            if *b < u {
                u = b.clone();
            }
        }
        lp.upper[e] = Some(u);
        if let (true, Some(l)) = (fluid[e], &lower[e]) {
            if l.is_positive() {
                lp.add(vec![(e, one())], Relation::Ge, l.clone());
            }
        }
    }
    for s in net.splitters() {
        let mut row: Vec<(usize, Rational)> = net.out_arcs(s).iter().map(|&e| (e, one())).collect();
        row.extend(net.in_arcs(s).iter().map(|&e| (e, -one())));
        lp.add(row, Relation::Le, Rational::zero());
    }
    for e in net.input_arcs() {
        if fluid[e] {
            lp.add(vec![(e, one())], Relation::Eq, net.arc_cap(e));
        }
    }
    for e in net.output_arcs() {
        if !fluid[e] {
            lp.add(vec![(e, one())], Relation::Eq, net.arc_cap(e));
        }
    }
    for e in (0..m).filter(|_| pairs) {
        if let (false, Some(w)) = (fluid[e], net.in_partner(e)) {
            lp.add(vec![(w, one()), (e, -one())], Relation::Le, Rational::zero());
        }
        if let (true, Some(w)) = (fluid[e], net.out_partner(e)) {
            lp.add(vec![(w, one()), (e, -one())], Relation::Le, Rational::zero());
        }
    }
    for s in net.splitters() {
        if net.in_arcs(s).iter().any(|&e| !fluid[e]) {
            for &vw in net.out_arcs(s) {
                if fluid[vw] {
                    lp.add(vec![(vw, one())], Relation::Eq, one());
                }
            }
        }
    }
    for e in net.output_arcs() {
        lp.objective[e] = one();
    }
    lp
}

/// The starting pre-steady-state: inputs at capacity, everything else 0,
/// every arc fluid.
pub fn initial_pre_steady_state(net: &SplitterNetwork) -> SteadyState {
    let mut st = SteadyState::zero(net);
    for e in net.input_arcs() {
        st.t[e] = net.arc_cap(e);
    }
    st
}

/// Runs the LP-based algorithm from the starting pre-steady-state.
/// Returns the steady-state and the number of LPs solved.
pub fn pre_steady_solve(net: &SplitterNetwork) -> Result<(SteadyState, usize), LpSolveError> {
    constrained_pre_steady_solve(net, &initial_pre_steady_state(net))
}

/// Runs the LP-based algorithm from a pre-steady-state `start`, keeping
/// `t ≥ start.t` on arcs that stay fluid and `t ≤ start.t` on arcs that
/// start saturated. The result has a fluid set inside that of `start`.
pub fn constrained_pre_steady_solve(net: &SplitterNetwork, start: &SteadyState) -> Result<(SteadyState, usize), LpSolveError> {
    use crate::steady_state::{check_rules, CheckMode};
    require_valid(net).map_err(|e| LpSolveError::InvalidNetwork(e.to_string()))?;
    let bad = check_rules(net, start, CheckMode::Pre);
    if let Some(v) = bad.first() {
        return Err(LpSolveError::BadStart(v.to_string()));
    }
    let m = net.num_arcs();
    let lower: Vec<Option<Rational>> = start.t.iter().map(|t| Some(t.clone())).collect();
    let upper: Vec<Option<Rational>> = (0..m).map(|e| (!start.fluid[e]).then(|| start.t[e].clone())).collect();
    let mut fluid = start.fluid.clone();
    for iteration in 1..=m + 1 {
        let lp = pss(net, &fluid, &lower, &upper);
        let secondary: Vec<Rational> =
            (0..m).map(|e| if fluid[e] { Rational::one() } else { -Rational::one() }).collect();
        let LpOutcome::Optimal { x, .. } = lexicographic(&lp, &secondary) else {
            return Err(LpSolveError::Internal("system PSS has no optimum".into()));
        };
        let st = SteadyState { t: x, fluid: fluid.clone() };
        match removable_arc(net, &st)? {
            None => return Ok((st, iteration)),
            Some(e) => fluid[e] = false,
        }
    }
    Err(LpSolveError::Internal("iteration bound exceeded".into()))
}

/// At the first splitter holding excess, the fluid arc whose saturation
/// keeps a pre-steady-state. `None` when no splitter holds excess.
fn removable_arc(net: &SplitterNetwork, st: &SteadyState) -> Result<Option<ArcId>, LpSolveError> {
    let t = &st.t;
    let f = &st.fluid;
    let Some(s) = net.splitters().into_iter().find(|&s| {
        let tin: Rational = net.in_arcs(s).iter().map(|&e| &t[e]).sum();
        let tout: Rational = net.out_arcs(s).iter().map(|&e| &t[e]).sum();
        tin > tout
    }) else {
        return Ok(None);
    };
    let sorted = |arcs: &[ArcId]| {
        let mut v = arcs.to_vec();
        v.sort_by(|&a, &b| t[a].cmp(&t[b]).then(a.cmp(&b)));
        v
    };
    let ins = sorted(net.in_arcs(s));
    let outs = sorted(net.out_arcs(s));
    for &e in &outs {
        if f[e] && net.in_partner(e).is_some_and(|p| !f[p] && t[p] == t[e]) {
            return Ok(Some(e));
        }
    }
    for &e in &outs {
        if f[e] && net.is_output_arc(e) && t[e] == net.arc_cap(e) {
            return Ok(Some(e));
        }
    }
    if outs.iter().any(|&e| f[e] && !t[e].is_one()) {
        return Err(LpSolveError::Internal(format!("optimum leaves room on a fluid arc out of `{}`", net.node(s).name)));
    }
    let (e1, e2) = (ins[0], ins[1]);
    if f[e2] {
        return Ok(Some(e2));
    }
    if f[e1] && t[e1] == t[e2] {
        return Ok(Some(e1));
    }
    Err(LpSolveError::Internal(format!("optimum keeps removable excess at `{}`", net.node(s).name)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn single_bound() {
        let mut lp = LinearProgram::new(1);
        lp.objective[0] = r(1, 1);
        lp.add(vec![(0, r(1, 1))], Relation::Le, r(3, 7));
        assert_eq!(simplex(&lp), LpOutcome::Optimal { x: vec![r(3, 7)], value: r(3, 7) });
        assert_eq!(simplex_exact(&lp), LpOutcome::Optimal { x: vec![r(3, 7)], value: r(3, 7) });
    }

    #[test]
    fn equalities_fix_the_point() {
        // x + y = 1, x - y = 1/3
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![r(-5, 1), r(2, 1)];
        lp.add(vec![(0, r(1, 1)), (1, r(1, 1))], Relation::Eq, r(1, 1));
        lp.add(vec![(0, r(1, 1)), (1, r(-1, 1))], Relation::Eq, r(1, 3));
        let LpOutcome::Optimal { x, .. } = simplex(&lp) else { panic!() };
        assert_eq!(x, vec![r(2, 3), r(1, 3)]);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.add(vec![(0, r(1, 1))], Relation::Ge, r(2, 1));
        lp.upper[0] = Some(r(1, 1));
        assert_eq!(simplex(&lp), LpOutcome::Infeasible);
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![r(1, 1), r(0, 1)];
        lp.add(vec![(0, r(1, 1)), (1, r(-1, 1))], Relation::Le, r(1, 1));
        assert_eq!(simplex(&lp), LpOutcome::Unbounded);
    }

    #[test]
    fn negative_rhs_and_ge_rows() {
        // max -x - y s.t. x + 2y ≥ 2, -x ≤ -1/2
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![r(-1, 1), r(-1, 1)];
        lp.add(vec![(0, r(1, 1)), (1, r(2, 1))], Relation::Ge, r(2, 1));
        lp.add(vec![(0, r(-1, 1))], Relation::Le, r(-1, 2));
        let LpOutcome::Optimal { x, value } = simplex(&lp) else { panic!() };
        assert_eq!(x, vec![r(1, 2), r(3, 4)]);
        assert_eq!(value, r(-5, 4));
    }
}
