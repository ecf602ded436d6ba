//! Maximization of the piecewise-linear concave dual over `γ ⪰ 0`.
//!
//! Two phases:
//!
//! 1. Projected supergradient ascent `γ ← max(γ + h_k·s(γ), 0)` with the best
//!    iterate tracked by value (supergradient steps are not monotone).
//! 2. Edge ascent ("polish"). At the current point the tied minimizers of
//!    every state define a central hyperplane arrangement; together with the
//!    coordinate hyperplanes it cuts direction space into pointed cones on
//!    which the directional derivative is linear. The extreme rays of those
//!    cones are the null directions of every `(r − 1)`-subset of normals, so
//!    checking them decides whether an ascent direction exists. If one does,
//!    an exact line search walks the per-state lower envelopes along the ray
//!    to the point where the total slope turns non-positive. When no ray
//!    ascends the point is a global maximizer.

use serde::{Deserialize, Serialize};

use super::{check_dist, value_and_supergradient, DualError, Multiplier};
use crate::model::NetworkInstance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    /// `h_k = a / (b + k)`; `a` defaults to `V·δ_max`.
    Diminishing {
        a: Option<f64>,
        b: f64,
    },
    Fixed {
        step: f64,
    },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Diminishing { a: None, b: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualSolverConfig {
    pub max_iterations: usize,
    pub step_rule: StepRule,
    /// Ascent stops once the best value improved by less than
    /// `tolerance·max(1, |g|)` over the last `window` iterations.
    pub tolerance: f64,
    pub window: usize,
    pub warm_start: Option<Multiplier>,
    pub polish: bool,
    pub max_polish_steps: usize,
}

impl Default for DualSolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            step_rule: StepRule::default(),
            tolerance: 1e-9,
            window: 100,
            warm_start: None,
            polish: true,
            max_polish_steps: 10_000,
        }
    }
}

impl DualSolverConfig {
    /// Preset for repeated re-solves from a nearby optimum: a single
    /// supergradient evaluation at the warm start, then edge ascent.
    pub fn warm_polish() -> Self {
        Self { max_iterations: 1, ..Self::default() }
    }

    /// Plain supergradient ascent with no polish.
    pub fn ascent_only(max_iterations: usize) -> Self {
        Self { max_iterations, polish: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), DualError> {
        if self.max_iterations == 0 {
            return Err(DualError::Config("max_iterations must be at least 1".into()));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(DualError::Config("tolerance must be positive".into()));
        }
        if self.window == 0 {
            return Err(DualError::Config("window must be at least 1".into()));
        }
        match self.step_rule {
            StepRule::Diminishing { a, b } if b < 0.0 || a.is_some_and(|a| a <= 0.0) => {
                Err(DualError::Config("diminishing step needs a > 0 and b ≥ 0".into()))
            }
            StepRule::Fixed { step } if step.is_nan() || step <= 0.0 => {
                Err(DualError::Config("fixed step must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub gamma: Multiplier,
    pub value: f64,
    pub iterations: usize,
    pub polish_steps: usize,
    /// The returned point is certified optimal (polish) or the ascent met
    /// its window tolerance (no polish).
    pub converged: bool,
    /// The dual increases without bound along some feasible ray.
    pub unbounded: bool,
    /// Some feasible direction has zero slope at the optimum, so the
    /// maximizer is not unique.
    pub flat: bool,
}

/// Maximizes `g(·, dist)` at penalty `v` over the non-negative orthant.
pub fn maximize_dual(
    inst: &NetworkInstance,
    dist: &[f64],
    v: f64,
    cfg: &DualSolverConfig,
) -> Result<DualSolution, DualError> {
    check_dist(inst, dist)?;
    cfg.validate()?;
    let r = inst.r();
    let mut gamma = match &cfg.warm_start {
        Some(w) if w.len() != r => return Err(DualError::Dimension { expected: r, got: w.len() }),
        Some(w) => w.0.iter().map(|x| x.max(0.0)).collect(),
        None => vec![0.0; r],
    };
    let (a, b, fixed) = match cfg.step_rule {
        StepRule::Diminishing { a, b } => (a.unwrap_or(v * inst.delta_max().max(1e-12)), b, None),
        StepRule::Fixed { step } => (0.0, 0.0, Some(step)),
    };

    let mut grad = vec![0.0; r];
    let mut best = gamma.clone();
    let mut best_val = f64::NEG_INFINITY;
    let mut window_start_val = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    for k in 0..cfg.max_iterations {
        iterations = k + 1;
        let val = value_and_supergradient(inst, dist, &gamma, v, &mut grad);
        if val > best_val {
            best_val = val;
            best.copy_from_slice(&gamma);
        }
        // Projected stationarity: zero is a supergradient after projection.
        if gamma.iter().zip(&grad).all(|(g, s)| *s == 0.0 || (*g == 0.0 && *s < 0.0)) {
            converged = true;
            break;
        }
        if (k + 1) % cfg.window == 0 {
            if best_val - window_start_val < cfg.tolerance * best_val.abs().max(1.0) {
                converged = true;
                break;
            }
            window_start_val = best_val;
        }
        let h = fixed.unwrap_or(a / (b + k as f64));
        for (g, s) in gamma.iter_mut().zip(&grad) {
            *g = (*g + h * s).max(0.0);
        }
    }

    let mut sol = DualSolution {
        gamma: Multiplier(best),
        value: best_val,
        iterations,
        polish_steps: 0,
        converged,
        unbounded: false,
        flat: false,
    };
    if cfg.polish {
        let mut ws = EdgeAscent::new(inst, dist, v);
        let out = ws.run(&sol.gamma.0, cfg.max_polish_steps);
        sol.polish_steps = out.steps;
        sol.unbounded = out.unbounded;
        sol.converged = out.optimal;
        sol.flat = out.flat;
        if out.value >= sol.value {
            sol.value = out.value;
            sol.gamma = Multiplier(out.point);
        }
    }
    Ok(sol)
}

struct PolishOutcome {
    point: Vec<f64>,
    value: f64,
    steps: usize,
    optimal: bool,
    unbounded: bool,
    flat: bool,
}

/// Working buffers for edge ascent over one (instance, distribution, V).
pub(crate) struct EdgeAscent<'a> {
    inst: &'a NetworkInstance,
    v: f64,
    r: usize,
    active: Vec<(usize, f64)>,
    scale: f64,
    values: Vec<Vec<f64>>,
    ties: Vec<Vec<usize>>,
}

const MAX_DIRECTION_SUBSETS: usize = 20_000;

impl<'a> EdgeAscent<'a> {
    pub(crate) fn new(inst: &'a NetworkInstance, dist: &[f64], v: f64) -> Self {
        let active: Vec<(usize, f64)> =
            dist.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(i, p)| (i, *p)).collect();
        let values = active.iter().map(|(i, _)| vec![0.0; inst.num_actions(*i)]).collect();
        let ties = vec![Vec::new(); active.len()];
        Self { inst, v, r: inst.r(), active, scale: 1.0 + v * inst.f_max() + inst.delta_max(), values, ties }
    }

    fn tie_tol(&self, p: &[f64]) -> f64 {
        1e-10 * (self.scale + p.iter().sum::<f64>() * self.inst.delta_max())
    }

    /// Evaluates every action at `p`, records per-state ties and returns `g(p)`.
    pub(crate) fn evaluate(&mut self, p: &[f64]) -> f64 {
        let tol = self.tie_tol(p);
        let (inst, r, v) = (self.inst, self.r, self.v);
        let mut g = 0.0;
        for (slot, &(i, w)) in self.active.iter().enumerate() {
            let vals = &mut self.values[slot];
            let costs = inst.costs_of(i);
            let drifts = inst.drifts_of(i);
            let mut min = f64::INFINITY;
            for (k, val) in vals.iter_mut().enumerate() {
                let d = &drifts[k * r..(k + 1) * r];
                let mut x = v * costs[k];
                for j in 0..r {
                    x += p[j] * d[j];
                }
                *val = x;
                min = min.min(x);
            }
            let ties = &mut self.ties[slot];
            ties.clear();
            ties.extend(vals.iter().enumerate().filter(|(_, x)| **x - min <= tol).map(|(k, _)| k));
            g += w * min;
        }
        g
    }

    fn slope(&self, d: &[f64]) -> f64 {
        let r = self.r;
        self.active
            .iter()
            .zip(&self.ties)
            .map(|(&(i, w), ties)| {
                let drifts = self.inst.drifts_of(i);
                let s = ties.iter().map(|&k| dot(&drifts[k * r..(k + 1) * r], d)).fold(f64::INFINITY, f64::min);
                w * s
            })
            .sum()
    }

    /// Extreme rays of the arrangement of tie hyperplanes and coordinate
    /// hyperplanes through the current point.
    pub(crate) fn candidate_directions(&self) -> (Vec<Vec<f64>>, bool) {
        let r = self.r;
        if r == 1 {
            return (vec![vec![1.0], vec![-1.0]], true);
        }
        let mut normals: Vec<Vec<f64>> = (0..r)
            .map(|k| {
                let mut e = vec![0.0; r];
                e[k] = 1.0;
                e
            })
            .collect();
        for (&(i, _), ties) in self.active.iter().zip(&self.ties) {
            if ties.len() < 2 {
                continue;
            }
            let drifts = self.inst.drifts_of(i);
            for (a, &x) in ties.iter().enumerate() {
                for &y in &ties[a + 1..] {
                    let n: Vec<f64> = (0..r).map(|j| drifts[x * r + j] - drifts[y * r + j]).collect();
                    if let Some(n) = canonical_unit(n) {
                        if !normals.iter().any(|m| dot(m, &n).abs() > 1.0 - 1e-12) {
                            normals.push(n);
                        }
                    }
                }
            }
        }
        let mut dirs = Vec::new();
        let mut complete = true;
        let mut count = 0;
        for_each_subset(normals.len(), r - 1, &mut |idx| {
            count += 1;
            if count > MAX_DIRECTION_SUBSETS {
                complete = false;
                return false;
            }
            let rows: Vec<&[f64]> = idx.iter().map(|&k| normals[k].as_slice()).collect();
            if let Some(d) = null_direction(&rows, r) {
                dirs.push(d.iter().map(|x| -x).collect());
                dirs.push(d);
            }
            true
        });
        (dirs, complete)
    }

    fn run(&mut self, start: &[f64], max_steps: usize) -> PolishOutcome {
        let mut p: Vec<f64> = start.iter().map(|x| x.max(0.0)).collect();
        let mut value = self.evaluate(&p);
        let mut steps = 0;
        loop {
            let zero_tol = 1e-12 * (1.0 + p.iter().map(|x| x.abs()).fold(0.0, f64::max));
            for x in p.iter_mut() {
                if *x <= zero_tol {
                    *x = 0.0;
                }
            }
            let (dirs, complete) = self.candidate_directions();
            let slope_tol = 1e-11 * (1.0 + self.inst.delta_max());
            let mut best: Option<(f64, Vec<f64>)> = None;
            let mut flat = false;
            for d in dirs {
                if p.iter().zip(&d).any(|(x, dk)| *x == 0.0 && *dk < -1e-12) {
                    continue;
                }
                let s = self.slope(&d);
                if s.abs() <= 1e-9 * (1.0 + self.inst.delta_max()) {
                    flat = true;
                }
                if s > slope_tol && best.as_ref().is_none_or(|(bs, _)| s > *bs) {
                    best = Some((s, d));
                }
            }
            let Some((_, d)) = best else {
                let (point, value) = self.snap(p, value);
                return PolishOutcome { point, value, steps, optimal: complete, unbounded: false, flat };
            };
            if steps >= max_steps {
                return PolishOutcome { point: p, value, steps, optimal: false, unbounded: false, flat };
            }
            let Some(t) = self.line_search(&p, &d) else {
                return PolishOutcome { point: p, value, steps, optimal: false, unbounded: true, flat: false };
            };
            let next: Vec<f64> = p.iter().zip(&d).map(|(x, dk)| (x + t * dk).max(0.0)).collect();
            let next_value = self.evaluate(&next);
            steps += 1;
            if next_value.partial_cmp(&value) != Some(std::cmp::Ordering::Greater) {
                // No numerical progress; settle on the better point.
                self.evaluate(&p);
                return PolishOutcome { point: p, value, steps, optimal: false, unbounded: false, flat };
            }
            p = next;
            value = next_value;
        }
    }

    /// Projects `p` onto the intersection of its (tolerance-detected) tie
    /// hyperplanes, so an optimum found up to rounding lands exactly on the
    /// vertex. Keeps `p` if the projection is infeasible or not better.
    fn snap(&mut self, p: Vec<f64>, value: f64) -> (Vec<f64>, f64) {
        let r = self.r;
        // Equations n·γ = c, selected greedily to stay linearly independent.
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut eqs: Vec<(Vec<f64>, f64)> = Vec::new();
        let consider = |n: Vec<f64>, c: f64, basis: &mut Vec<Vec<f64>>, eqs: &mut Vec<(Vec<f64>, f64)>| {
            if eqs.len() == r {
                return;
            }
            let mut w = n.clone();
            for b in basis.iter() {
                let f = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= f * y);
            }
            let len = dot(&w, &w).sqrt();
            if len > 1e-9 * dot(&n, &n).sqrt().max(1e-300) {
                w.iter_mut().for_each(|x| *x /= len);
                basis.push(w);
                eqs.push((n, c));
            }
        };
        for (k, x) in p.iter().enumerate() {
            if *x == 0.0 {
                let mut e = vec![0.0; r];
                e[k] = 1.0;
                consider(e, 0.0, &mut basis, &mut eqs);
            }
        }
        for (&(i, _), ties) in self.active.iter().zip(&self.ties) {
            let drifts = self.inst.drifts_of(i);
            let costs = self.inst.costs_of(i);
            for &y in ties.iter().skip(1) {
                let x = ties[0];
                let n: Vec<f64> = (0..r).map(|j| drifts[x * r + j] - drifts[y * r + j]).collect();
                consider(n, -self.v * (costs[x] - costs[y]), &mut basis, &mut eqs);
            }
        }
        if eqs.is_empty() {
            return (p, value);
        }
        // Least-norm correction: p' = p + Nᵀ (N Nᵀ)⁻¹ (c − N p).
        let k = eqs.len();
        let mut gram = vec![vec![0.0; k + 1]; k];
        for a in 0..k {
            for b in 0..k {
                gram[a][b] = dot(&eqs[a].0, &eqs[b].0);
            }
            gram[a][k] = eqs[a].1 - dot(&eqs[a].0, &p);
        }
        let Some(y) = solve_dense(gram) else {
            return (p, value);
        };
        let mut q = p.clone();
        for (a, (n, _)) in eqs.iter().enumerate() {
            q.iter_mut().zip(n).for_each(|(x, nj)| *x += y[a] * nj);
        }
        if q.iter().any(|x| *x < -1e-9 * (1.0 + x.abs())) {
            return (p, value);
        }
        q.iter_mut().for_each(|x| *x = x.max(0.0));
        let snapped = self.evaluate(&q);
        if snapped >= value {
            (q, snapped)
        } else {
            self.evaluate(&p);
            (p, value)
        }
    }

    /// Exact maximization of `t ↦ g(p + t·d)` over `t ≥ 0` within the
    /// orthant. `None` when the dual grows without bound along the ray.
    /// Requires `evaluate(p)` to have been called.
    fn line_search(&self, p: &[f64], d: &[f64]) -> Option<f64> {
        let r = self.r;
        let n = self.active.len();
        let boundary =
            p.iter().zip(d).filter(|(_, dk)| **dk < -1e-15).map(|(x, dk)| x / -dk).fold(f64::INFINITY, f64::min);
        let mut slopes: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut current = Vec::with_capacity(n);
        let mut total = 0.0;
        for (slot, &(i, w)) in self.active.iter().enumerate() {
            let drifts = self.inst.drifts_of(i);
            let s: Vec<f64> = (0..self.inst.num_actions(i)).map(|k| dot(&drifts[k * r..(k + 1) * r], d)).collect();
            let cur = *self.ties[slot]
                .iter()
                .min_by(|a, b| s[**a].partial_cmp(&s[**b]).unwrap().then(a.cmp(b)))
                .expect("every state has an action");
            total += w * s[cur];
            current.push(cur);
            slopes.push(s);
        }
        let next_event = |slot: usize, cur: usize, t: f64, slopes: &[Vec<f64>]| -> f64 {
            let vals = &self.values[slot];
            let s = &slopes[slot];
            let mut e = f64::INFINITY;
            for k in 0..vals.len() {
                if s[k] < s[cur] - 1e-15 {
                    let te = ((vals[k] - vals[cur]) / (s[cur] - s[k])).max(t);
                    e = e.min(te);
                }
            }
            e
        };
        let mut events: Vec<f64> = (0..n).map(|slot| next_event(slot, current[slot], 0.0, &slopes)).collect();
        let slope_tol = 1e-12 * (1.0 + self.inst.delta_max());
        let mut t = 0.0;
        while total > slope_tol {
            let e_min = events.iter().copied().fold(f64::INFINITY, f64::min);
            if boundary <= e_min {
                return if boundary.is_finite() { Some(boundary) } else { None };
            }
            t = e_min;
            let t_tol = 1e-12 * (1.0 + t.abs());
            for slot in 0..n {
                if events[slot] > t + t_tol {
                    continue;
                }
                let cur = current[slot];
                let (vals, s) = (&self.values[slot], &slopes[slot]);
                // Among pieces that have caught up by `t`, the flattest wins.
                let mut nxt = cur;
                for k in 0..vals.len() {
                    if s[k] < s[cur] - 1e-15 {
                        let te = (vals[k] - vals[cur]) / (s[cur] - s[k]);
                        if te <= t + t_tol && (s[k] < s[nxt] || (s[k] == s[nxt] && k < nxt)) {
                            nxt = k;
                        }
                    }
                }
                let w = self.active[slot].1;
                total += w * (s[nxt] - s[cur]);
                current[slot] = nxt;
                events[slot] = next_event(slot, nxt, t, &slopes);
            }
        }
        Some(t)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gaussian elimination on an augmented `k × (k+1)` system.
fn solve_dense(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let k = a.len();
    for col in 0..k {
        let piv = (col..k).max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        for row in 0..k {
            if row != col {
                let f = a[row][col] / a[col][col];
                for c in col..=k {
                    a[row][c] -= f * a[col][c];
                }
            }
        }
    }
    Some((0..k).map(|i| a[i][k] / a[i][i]).collect())
}

fn canonical_unit(mut n: Vec<f64>) -> Option<Vec<f64>> {
    let len = dot(&n, &n).sqrt();
    if len < 1e-12 {
        return None;
    }
    let first = n.iter().copied().find(|x| x.abs() > 1e-15)?;
    let sign = if first < 0.0 { -1.0 } else { 1.0 };
    n.iter_mut().for_each(|x| *x *= sign / len);
    Some(n)
}

/// Calls `f` with every `k`-subset of `0..n` in lexicographic order until it
/// returns `false`.
fn for_each_subset(n: usize, k: usize, f: &mut dyn FnMut(&[usize]) -> bool) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if !f(&idx) {
            return;
        }
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] < n - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Unit vector spanning the null space of `r − 1` rows in `R^r`, when the
/// rows are independent.
fn null_direction(rows: &[&[f64]], r: usize) -> Option<Vec<f64>> {
    if r == 2 {
        let n = rows[0];
        return canonical_unit(vec![-n[1], n[0]]);
    }
    let m = rows.len();
    let mut a: Vec<Vec<f64>> = rows.iter().map(|row| row.to_vec()).collect();
    let mut pivot_cols = Vec::with_capacity(m);
    let mut row = 0;
    for col in 0..r {
        if row == m {
            break;
        }
        let (best, mag) =
            (row..m).map(|i| (i, a[i][col].abs())).fold((row, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if mag < 1e-10 {
            continue;
        }
        a.swap(row, best);
        let p = a[row][col];
        for x in a[row].iter_mut() {
            *x /= p;
        }
        for i in 0..m {
            if i != row {
                let f = a[i][col];
                if f != 0.0 {
                    for c in 0..r {
                        a[i][c] -= f * a[row][c];
                    }
                }
            }
        }
        pivot_cols.push(col);
        row += 1;
    }
    if pivot_cols.len() != r - 1 {
        return None;
    }
    let free = (0..r).find(|c| !pivot_cols.contains(c))?;
    let mut d = vec![0.0; r];
    d[free] = 1.0;
    for (i, &pc) in pivot_cols.iter().enumerate() {
        d[pc] = -a[i][free];
    }
    canonical_unit(d)
}
