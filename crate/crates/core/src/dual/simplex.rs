//! Dense two-phase tableau simplex with Bland's anti-cycling rule.
//!
//! Sized for the desk-scale programs built by the oracles: a few hundred
//! columns and under a hundred rows. All variables are non-negative.

const PIVOT_EPS: f64 = 1e-9;
const FEASIBILITY_EPS: f64 = 1e-8;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
    PivotLimit,
}

/// `minimize c·x  s.t.  rows, x ⪰ 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    rows: Vec<(Vec<f64>, Relation, f64)>,
}

impl LinearProgram {
    pub fn minimize(objective: Vec<f64>) -> Self {
        Self { objective, rows: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn le(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        self.push(coeffs, Relation::Le, rhs)
    }

    pub fn ge(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        self.push(coeffs, Relation::Ge, rhs)
    }

    pub fn eq(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        self.push(coeffs, Relation::Eq, rhs)
    }

    fn push(&mut self, coeffs: Vec<f64>, rel: Relation, rhs: f64) -> &mut Self {
        assert_eq!(coeffs.len(), self.objective.len(), "row length must match variable count");
        self.rows.push((coeffs, rel, rhs));
        self
    }

    pub fn solve(&self) -> LpOutcome {
        Tableau::build(self).run(&self.objective)
    }
}

struct Tableau {
    n: usize,
    width: usize,
    first_artificial: usize,
    // m rows of `width + 1` entries; the last entry is the right-hand side.
    t: Vec<f64>,
    m: usize,
    basis: Vec<usize>,
    obj: Vec<f64>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.objective.len();
        let m = lp.rows.len();
        // Flip rows so every right-hand side is non-negative.
        let rows: Vec<(Vec<f64>, Relation, f64)> = lp
            .rows
            .iter()
            .map(|(a, rel, b)| {
                if *b < 0.0 {
                    let flipped = match rel {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    };
                    (a.iter().map(|x| -x).collect(), flipped, -b)
                } else {
                    (a.clone(), *rel, *b)
                }
            })
            .collect();
        let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
        let first_artificial = n + n_slack;
        let width = first_artificial + n_art;
        let stride = width + 1;
        let mut t = vec![0.0; m * stride];
        let mut basis = vec![0; m];
        let (mut slack, mut art) = (n, first_artificial);
        for (i, (a, rel, b)) in rows.iter().enumerate() {
            let row = &mut t[i * stride..(i + 1) * stride];
            row[..n].copy_from_slice(a);
            row[width] = *b;
            match rel {
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
        Tableau { n, width, first_artificial, t, m, basis, obj: vec![0.0; stride] }
    }

    fn stride(&self) -> usize {
        self.width + 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.stride() + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.width)
    }

    /// Loads reduced costs for the cost vector `c` (length `width`).
    fn price(&mut self, c: &[f64]) {
        let stride = self.stride();
        self.obj[..self.width].copy_from_slice(c);
        self.obj[self.width] = 0.0;
        for i in 0..self.m {
            let cb = c[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * stride..(i + 1) * stride];
                for (o, a) in self.obj.iter_mut().zip(row) {
                    *o -= cb * a;
                }
            }
        }
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let stride = self.stride();
        let p = self.at(pr, pc);
        for x in &mut self.t[pr * stride..(pr + 1) * stride] {
            *x /= p;
        }
        let pivot_row: Vec<f64> = self.t[pr * stride..(pr + 1) * stride].to_vec();
        for i in 0..self.m {
            if i == pr {
                continue;
            }
            let f = self.t[i * stride + pc];
            if f != 0.0 {
                let row = &mut self.t[i * stride..(i + 1) * stride];
                for (x, y) in row.iter_mut().zip(&pivot_row) {
                    *x -= f * y;
                }
                row[pc] = 0.0;
            }
        }
        let f = self.obj[pc];
        if f != 0.0 {
            for (x, y) in self.obj.iter_mut().zip(&pivot_row) {
                *x -= f * y;
            }
            self.obj[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Bland's rule iterations over columns `< allowed`.
    fn iterate(&mut self, allowed: usize, pivots: &mut usize) -> Result<(), LpOutcome> {
        loop {
            let Some(pc) = (0..allowed).find(|&j| self.obj[j] < -PIVOT_EPS) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, pc);
                if a > PIVOT_EPS {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-12 || (ratio <= br + 1e-12 && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((pr, _)) = leave else {
                return Err(LpOutcome::Unbounded);
            };
            self.pivot(pr, pc);
            *pivots += 1;
            if *pivots > MAX_PIVOTS {
                return Err(LpOutcome::PivotLimit);
            }
        }
    }

    fn run(mut self, objective: &[f64]) -> LpOutcome {
        let mut pivots = 0;
        if self.first_artificial < self.width {
            let mut c1 = vec![0.0; self.width];
            c1[self.first_artificial..].iter_mut().for_each(|c| *c = 1.0);
            self.price(&c1);
            if let Err(e) = self.iterate(self.width, &mut pivots) {
                return e;
            }
            if -self.obj[self.width] > FEASIBILITY_EPS {
                return LpOutcome::Infeasible;
            }
            // Drive zero-level artificials out of the basis where possible.
            for i in 0..self.m {
                if self.basis[i] >= self.first_artificial {
                    if let Some(j) = (0..self.first_artificial).find(|&j| self.at(i, j).abs() > PIVOT_EPS) {
                        self.pivot(i, j);
                    }
                }
            }
        }
        let mut c2 = vec![0.0; self.width];
        c2[..self.n].copy_from_slice(objective);
        self.price(&c2);
        if let Err(e) = self.iterate(self.first_artificial, &mut pivots) {
            return e;
        }
        let mut x = vec![0.0; self.n];
        for i in 0..self.m {
            if self.basis[i] < self.n {
                x[self.basis[i]] = self.rhs(i).max(0.0);
            }
        }
        let objective = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        LpOutcome::Optimal { x, objective }
    }
}
