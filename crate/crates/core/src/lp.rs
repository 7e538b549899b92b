//! Exact rational linear programming.
//!
//! Dense two-phase tableau simplex, largest-coefficient pricing with a
//! fallback to Bland's rule on degenerate runs. Problems are stated as
//! maximization over box-bounded variables; the solver returns a primal vertex
//! and the row duals `y` (sign convention for a maximization: `y >= 0` on `<=`
//! rows, `y <= 0` on `>=` rows, free on `=` rows).

use crate::rat::Rat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Constraint {
    pub coeffs: Vec<(usize, Rat)>,
    pub relation: Relation,
    pub rhs: Rat,
}

/// `lo`/`hi` of `None` mean unbounded on that side.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Bounds {
    pub lo: Option<Rat>,
    pub hi: Option<Rat>,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { lo: Some(Rat::zero()), hi: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct LinearProgram {
    pub variable_count: usize,
    /// Maximized.
    pub objective: Vec<(usize, Rat)>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<Bounds>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Empty unless `Optimal`.
    pub values: Vec<Rat>,
    pub objective: Rat,
    /// One per constraint, empty unless `Optimal`.
    pub duals: Vec<Rat>,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

impl LinearProgram {
    /// `variable_count` variables with default bounds `[0, inf)` and a zero objective.
    pub fn new(variable_count: usize) -> Self {
        LinearProgram {
            variable_count,
            objective: Vec::new(),
            constraints: Vec::new(),
            bounds: vec![Bounds::default(); variable_count],
        }
    }

    pub fn add_variable(&mut self, bounds: Bounds) -> usize {
        self.bounds.push(bounds);
        self.variable_count += 1;
        self.variable_count - 1
    }

    pub fn set_bounds(&mut self, var: usize, lo: Option<Rat>, hi: Option<Rat>) {
        self.bounds[var] = Bounds { lo, hi };
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, Rat)>, relation: Relation, rhs: Rat) -> usize {
        self.constraints.push(Constraint { coeffs, relation, rhs });
        self.constraints.len() - 1
    }

    pub fn set_objective(&mut self, coeffs: Vec<(usize, Rat)>) {
        self.objective = coeffs;
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.bounds.len() != self.variable_count {
            return Err(format!("{} bounds for {} variables", self.bounds.len(), self.variable_count));
        }
        let check = |(k, _): &(usize, Rat)| *k < self.variable_count;
        if !self.objective.iter().all(check) {
            return Err("objective references an unknown variable".into());
        }
        for (r, c) in self.constraints.iter().enumerate() {
            if !c.coeffs.iter().all(check) {
                return Err(format!("constraint {r} references an unknown variable"));
            }
        }
        for (k, b) in self.bounds.iter().enumerate() {
            if let (Some(lo), Some(hi)) = (&b.lo, &b.hi) {
                if lo > hi {
                    return Err(format!("variable {k} has lo {lo} > hi {hi}"));
                }
            }
        }
        Ok(())
    }

    pub fn row_activity(&self, row: usize, values: &[Rat]) -> Rat {
        self.constraints[row].coeffs.iter().map(|(k, a)| a * &values[*k]).sum()
    }

    pub fn objective_value(&self, values: &[Rat]) -> Rat {
        self.objective.iter().map(|(k, c)| c * &values[*k]).sum()
    }

    /// First violated constraint or bound, if any.
    pub fn violation(&self, values: &[Rat]) -> Option<String> {
        if values.len() != self.variable_count {
            return Some("wrong number of values".into());
        }
        for (k, b) in self.bounds.iter().enumerate() {
            if b.lo.as_ref().is_some_and(|lo| values[k] < *lo) || b.hi.as_ref().is_some_and(|hi| values[k] > *hi) {
                return Some(format!("variable {k} = {} outside its bounds", values[k]));
            }
        }
        for (r, c) in self.constraints.iter().enumerate() {
            let act = self.row_activity(r, values);
            let ok = match c.relation {
                Relation::Le => act <= c.rhs,
                Relation::Ge => act >= c.rhs,
                Relation::Eq => act == c.rhs,
            };
            if !ok {
                return Some(format!("constraint {r}: activity {act} vs rhs {}", c.rhs));
            }
        }
        None
    }

    /// Lagrangian bound `b'y + sup_{lo<=x<=hi} (c - A'y)'x` for a dual vector.
    /// `None` when the supremum is unbounded. Upper-bounds the primal maximum
    /// for every sign-feasible `y`.
    pub fn dual_objective(&self, duals: &[Rat]) -> Option<Rat> {
        let mut reduced = vec![Rat::zero(); self.variable_count];
        for (k, c) in &self.objective {
            reduced[*k] += c;
        }
        let mut total = Rat::zero();
        for (c, y) in self.constraints.iter().zip(duals) {
            total += &c.rhs * y;
            for (k, a) in &c.coeffs {
                reduced[*k] -= a * y;
            }
        }
        for (d, b) in reduced.iter().zip(&self.bounds) {
            if d.is_positive() {
                total += d * b.hi.as_ref()?;
            } else if d.is_negative() {
                total += d * b.lo.as_ref()?;
            }
        }
        Some(total)
    }

    /// True when every dual has the sign its row relation requires.
    pub fn duals_sign_feasible(&self, duals: &[Rat]) -> bool {
        self.constraints.iter().zip(duals).all(|(c, y)| match c.relation {
            Relation::Le => !y.is_negative(),
            Relation::Ge => !y.is_positive(),
            Relation::Eq => true,
        })
    }
}

/// A standard-form row: coefficients, relation and right-hand side.
type StdRow = (Vec<(usize, Rat)>, Relation, Rat);

/// One user variable expressed over standard-form columns.
enum VarMap {
    /// `x = lo + s`
    Shift { col: usize, lo: Rat },
    /// `x = hi - s`
    Mirror { col: usize, hi: Rat },
    /// `x = s+ - s-`
    Split { pos: usize, neg: usize },
}

struct Tableau {
    rows: Vec<Vec<Rat>>,
    rhs: Vec<Rat>,
    basis: Vec<usize>,
    /// Reduced costs for the current phase objective.
    reduced: Vec<Rat>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, e: usize) {
        let inv = self.rows[r][e].recip();
        if inv != Rat::one() {
            for v in self.rows[r].iter_mut() {
                if !v.is_zero() {
                    *v = &*v * &inv;
                }
            }
            self.rhs[r] = &self.rhs[r] * &inv;
        }
        let pivot_row = std::mem::take(&mut self.rows[r]);
        let pivot_rhs = self.rhs[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r || row[e].is_zero() {
                continue;
            }
            let f = row[e].clone();
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *v -= &f * p;
                }
            }
            if !pivot_rhs.is_zero() {
                self.rhs[i] -= &f * &pivot_rhs;
            }
        }
        if !self.reduced[e].is_zero() {
            let f = self.reduced[e].clone();
            for (v, p) in self.reduced.iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *v -= &f * p;
                }
            }
        }
        self.rows[r] = pivot_row;
        self.basis[r] = e;
    }

    fn set_cost(&mut self, cost: &[Rat]) {
        let mut reduced: Vec<Rat> = cost.to_vec();
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = &cost[b];
            if cb.is_zero() {
                continue;
            }
            for (v, t) in reduced.iter_mut().zip(&self.rows[r]) {
                if !t.is_zero() {
                    *v -= cb * t;
                }
            }
        }
        self.reduced = reduced;
    }

    /// Maximizes the cost set by `set_cost`. Returns false if unbounded.
    ///
    /// Largest reduced cost enters; after a run of degenerate pivots the
    /// rule drops to Bland's (lowest index) until the objective moves again,
    /// which rules out cycling.
    fn optimize(&mut self, allowed: impl Fn(usize) -> bool) -> bool {
        const DEGENERATE_RUN: usize = 32;
        let mut stalled = 0;
        loop {
            let candidates = (0..self.cols).filter(|&j| allowed(j) && self.reduced[j].is_positive());
            let entering = if stalled >= DEGENERATE_RUN {
                candidates.min()
            } else {
                candidates.fold(None, |best: Option<usize>, j| match best {
                    Some(b) if self.reduced[b] >= self.reduced[j] => Some(b),
                    _ => Some(j),
                })
            };
            let Some(e) = entering else { return true };
            let mut leave: Option<(usize, Rat)> = None;
            for r in 0..self.rows.len() {
                let a = &self.rows[r][e];
                if !a.is_positive() {
                    continue;
                }
                let ratio = &self.rhs[r] / a;
                let better = match &leave {
                    None => true,
                    Some((lr, best)) => ratio < *best || (ratio == *best && self.basis[r] < self.basis[*lr]),
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
            let Some((r, ratio)) = leave else { return false };
            if ratio.is_zero() {
                stalled += 1;
            } else {
                stalled = 0;
            }
            self.pivot(r, e);
        }
    }
}

/// Standard-form simplex state for one program. Columns are laid out as
/// user columns, slacks, artificials, then columns appended later.
struct Simplex {
    t: Tableau,
    maps: Vec<VarMap>,
    flips: Vec<bool>,
    /// Per row, the column that started as its unit vector; its tableau
    /// column is the matching column of the basis inverse.
    inverse: Vec<usize>,
    art_start: usize,
    art_end: usize,
    /// Phase-two objective over all columns.
    cost: Vec<Rat>,
}

impl Simplex {
    fn build(lp: &LinearProgram) -> Self {
        let mut std_cols = 0usize;
        let mut maps = Vec::with_capacity(lp.variable_count);
        let mut bound_rows: Vec<(usize, Rat)> = Vec::new();
        for b in &lp.bounds {
            match (&b.lo, &b.hi) {
                (Some(lo), hi) => {
                    maps.push(VarMap::Shift { col: std_cols, lo: lo.clone() });
                    if let Some(hi) = hi {
                        bound_rows.push((std_cols, hi - lo));
                    }
                    std_cols += 1;
                }
                (None, Some(hi)) => {
                    maps.push(VarMap::Mirror { col: std_cols, hi: hi.clone() });
                    std_cols += 1;
                }
                (None, None) => {
                    maps.push(VarMap::Split { pos: std_cols, neg: std_cols + 1 });
                    std_cols += 2;
                }
            }
        }

        let mut rows: Vec<StdRow> = Vec::new();
        for c in &lp.constraints {
            let mut coeffs: Vec<(usize, Rat)> = Vec::new();
            let mut rhs = c.rhs.clone();
            for (k, a) in &c.coeffs {
                match &maps[*k] {
                    VarMap::Shift { col, lo } => {
                        rhs -= a * lo;
                        coeffs.push((*col, a.clone()));
                    }
                    VarMap::Mirror { col, hi } => {
                        rhs -= a * hi;
                        coeffs.push((*col, -a));
                    }
                    VarMap::Split { pos, neg } => {
                        coeffs.push((*pos, a.clone()));
                        coeffs.push((*neg, -a));
                    }
                }
            }
            rows.push((coeffs, c.relation, rhs));
        }
        for (col, width) in bound_rows {
            rows.push((vec![(col, Rat::one())], Relation::Le, width));
        }

        // A row whose slack ends up with coefficient +1 (after making the rhs
        // nonnegative) starts with that slack basic, and the slack column
        // doubles as the basis-inverse column. Other rows get an artificial.
        let m = rows.len();
        let slack_count = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let needs_artificial =
            |rel: Relation, rhs: &Rat| !matches!((rel, rhs.is_negative()), (Relation::Le, false) | (Relation::Ge, true));
        let art_start = std_cols + slack_count;
        let art_count = rows.iter().filter(|(_, rel, rhs)| needs_artificial(*rel, rhs)).count();
        let cols = art_start + art_count;

        let mut tableau_rows = Vec::with_capacity(m);
        let mut rhs_col = Vec::with_capacity(m);
        let mut flips = Vec::with_capacity(m);
        let mut inverse = Vec::with_capacity(m);
        let mut slack = std_cols;
        let mut art = art_start;
        for (coeffs, rel, mut rhs) in rows {
            let mut row = vec![Rat::zero(); cols];
            for (k, a) in coeffs {
                row[k] += a;
            }
            let artificial = needs_artificial(rel, &rhs);
            let slack_col = (rel != Relation::Eq).then_some(slack);
            if let Some(c) = slack_col {
                row[c] = if rel == Relation::Le { Rat::one() } else { -Rat::one() };
                slack += 1;
            }
            let flip = rhs.is_negative();
            if flip {
                for v in row.iter_mut() {
                    *v = -&*v;
                }
                rhs = -rhs;
            }
            let start = if artificial {
                row[art] = Rat::one();
                art += 1;
                art - 1
            } else {
                slack_col.expect("rows without an artificial have a slack")
            };
            inverse.push(start);
            flips.push(flip);
            tableau_rows.push(row);
            rhs_col.push(rhs);
        }

        let mut cost = vec![Rat::zero(); cols];
        for (k, c) in &lp.objective {
            match &maps[*k] {
                VarMap::Shift { col, .. } => cost[*col] += c,
                VarMap::Mirror { col, .. } => cost[*col] -= c,
                VarMap::Split { pos, neg } => {
                    cost[*pos] += c;
                    cost[*neg] -= c;
                }
            }
        }

        Simplex {
            t: Tableau { rows: tableau_rows, rhs: rhs_col, basis: inverse.clone(), reduced: Vec::new(), cols },
            maps,
            flips,
            inverse,
            art_start,
            art_end: cols,
            cost,
        }
    }

    fn is_artificial(&self, j: usize) -> bool {
        (self.art_start..self.art_end).contains(&j)
    }

    /// Phase one; false when the program is infeasible.
    fn phase_one(&mut self) -> bool {
        let mut phase1 = vec![Rat::zero(); self.t.cols];
        for c in &mut phase1[self.art_start..self.art_end] {
            *c = -Rat::one();
        }
        self.t.set_cost(&phase1);
        let (lo, hi) = (self.art_start, self.art_end);
        self.t.optimize(|j| !(lo..hi).contains(&j));
        let residual: Rat =
            (0..self.t.rows.len()).filter(|&r| self.is_artificial(self.t.basis[r])).map(|r| self.t.rhs[r].clone()).sum();
        if residual.is_positive() {
            return false;
        }
        for r in 0..self.t.rows.len() {
            self.expel_artificial(r);
        }
        true
    }

    /// Replaces a zero-level artificial in row `r` by any real column with a
    /// nonzero entry there; the row is redundant if none exists.
    fn expel_artificial(&mut self, r: usize) {
        if !self.is_artificial(self.t.basis[r]) {
            return;
        }
        if let Some(e) = (0..self.t.cols).find(|&j| !self.is_artificial(j) && !self.t.rows[r][j].is_zero()) {
            self.t.pivot(r, e);
        }
    }

    /// Phase two; false when unbounded.
    fn phase_two(&mut self) -> bool {
        self.t.set_cost(&self.cost);
        let (lo, hi) = (self.art_start, self.art_end);
        self.t.optimize(|j| !(lo..hi).contains(&j))
    }

    /// Appends a `[0, inf)` user column. The current basis stays feasible.
    fn add_column(&mut self, coeffs: &[(usize, Rat)], cost: &Rat) {
        let mut original = vec![Rat::zero(); self.t.rows.len()];
        for (r, a) in coeffs {
            original[*r] += a;
        }
        let col: Vec<Rat> = self
            .t
            .rows
            .iter()
            .map(|row| {
                original
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| !a.is_zero())
                    .map(|(r, a)| {
                        let inv = &row[self.inverse[r]];
                        if self.flips[r] {
                            -(inv * a)
                        } else {
                            inv * a
                        }
                    })
                    .sum()
            })
            .collect();
        let index = self.t.cols;
        self.maps.push(VarMap::Shift { col: index, lo: Rat::zero() });
        for (row, v) in self.t.rows.iter_mut().zip(col) {
            row.push(v);
        }
        self.t.cols += 1;
        self.cost.push(cost.clone());
        self.t.reduced.push(Rat::zero());
        for r in 0..self.t.rows.len() {
            self.expel_artificial(r);
        }
    }

    fn extract(&self, lp: &LinearProgram) -> LpSolution {
        let mut std_values = vec![Rat::zero(); self.t.cols];
        for (r, &b) in self.t.basis.iter().enumerate() {
            std_values[b] = self.t.rhs[r].clone();
        }
        let values: Vec<Rat> = self
            .maps
            .iter()
            .map(|map| match map {
                VarMap::Shift { col, lo } => lo + &std_values[*col],
                VarMap::Mirror { col, hi } => hi - &std_values[*col],
                VarMap::Split { pos, neg } => &std_values[*pos] - &std_values[*neg],
            })
            .collect();

        let duals: Vec<Rat> = (0..lp.constraints.len())
            .map(|r| {
                let w: Rat = self
                    .t
                    .basis
                    .iter()
                    .enumerate()
                    .filter(|(_, &b)| !self.cost[b].is_zero())
                    .map(|(k, &b)| &self.cost[b] * &self.t.rows[k][self.inverse[r]])
                    .sum();
                if self.flips[r] {
                    -w
                } else {
                    w
                }
            })
            .collect();

        if let Some(v) = lp.violation(&values) {
            panic!("simplex returned an infeasible point: {v}");
        }
        LpSolution { status: LpStatus::Optimal, objective: lp.objective_value(&values), values, duals }
    }
}

fn non_optimal(status: LpStatus) -> LpSolution {
    LpSolution { status, values: Vec::new(), objective: Rat::zero(), duals: Vec::new() }
}

fn run(lp: &LinearProgram) -> (LpSolution, Option<Simplex>) {
    if let Err(e) = lp.validate() {
        panic!("malformed linear program: {e}");
    }
    let mut s = Simplex::build(lp);
    if !s.phase_one() {
        return (non_optimal(LpStatus::Infeasible), None);
    }
    if !s.phase_two() {
        return (non_optimal(LpStatus::Unbounded), None);
    }
    (s.extract(lp), Some(s))
}

/// Solves `lp` to optimality, or reports infeasibility/unboundedness.
/// Deterministic: identical input yields an identical solution.
pub fn solve_lp(lp: &LinearProgram) -> LpSolution {
    run(lp).0
}

/// A maximization that grows by `[0, inf)` columns between solves. After an
/// optimal solve the basis is kept, so a re-solve only pivots in the new
/// columns (column generation).
pub struct IncrementalLp {
    lp: LinearProgram,
    simplex: Option<Simplex>,
}

impl IncrementalLp {
    pub fn new(lp: LinearProgram) -> Self {
        IncrementalLp { lp, simplex: None }
    }

    pub fn program(&self) -> &LinearProgram {
        &self.lp
    }

    /// Adds a variable with the given `(row, coefficient)` entries and
    /// objective coefficient; returns its index.
    pub fn add_column(&mut self, coeffs: Vec<(usize, Rat)>, cost: Rat) -> usize {
        let var = self.lp.add_variable(Bounds::default());
        if let Some(s) = &mut self.simplex {
            s.add_column(&coeffs, &cost);
        }
        for (r, a) in coeffs {
            self.lp.constraints[r].coeffs.push((var, a));
        }
        if !cost.is_zero() {
            self.lp.objective.push((var, cost));
        }
        var
    }

    pub fn solve(&mut self) -> LpSolution {
        if let Some(s) = &mut self.simplex {
            if s.phase_two() {
                return s.extract(&self.lp);
            }
            self.simplex = None;
            return non_optimal(LpStatus::Unbounded);
        }
        let (sol, simplex) = run(&self.lp);
        self.simplex = simplex;
        sol
    }
}

/// Any feasible vertex of `lp` (objective ignored), or `Infeasible`.
pub fn solve_feasibility(lp: &LinearProgram) -> LpSolution {
    let mut zero = lp.clone();
    zero.objective.clear();
    solve_lp(&zero)
}
