//! Euclidean projection onto the discrete admissible set
//!
//! ```text
//! K = { u : 0 <= u <= u_phi,  |u_i - u_j| <= |x_i - x_j| for stencil pairs (i, j) }
//! ```
//!
//! The slope bound is imposed on lattice edges: nearest neighbours in 1D, and
//! the 16-neighbourhood (offsets (1,0), (1,1), (2,1) and their symmetric
//! images) in 2D. Constraints of the form `u_i - u_j <= c` keep `K` closed
//! under pointwise max/min, so the projection is order preserving, and the
//! exact Lax–Hopf profile (1-Lipschitz in the Euclidean metric) is the
//! largest member of `K`.
//!
//! The solver is Dykstra's method with one block per constraint (each box
//! interval and each edge slab), i.e. Hildreth's dual coordinate ascent. The
//! per-constraint corrections are kept between calls so that a sequence of
//! nearby projections, as in implicit time stepping, starts warm. Sweeps
//! alternate between the 2^N raster orientations.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: u32,
    pub j: u32,
    /// Distance between the two cell centers.
    pub len: f64,
}

const STENCIL_1D: [(isize, isize); 1] = [(1, 0)];
const STENCIL_2D: [(isize, isize); 8] = [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2)];

/// The discrete admissible set: box `[0, u_phi]` plus edge slope bounds.
#[derive(Debug, Clone)]
pub struct AdmissibleSet {
    grid: Arc<Grid>,
    upper: Vec<f64>,
    edges: Vec<Edge>,
    /// CSR offsets: edges owned by cell `c` are `edges[edge_start[c]..edge_start[c + 1]]`.
    edge_start: Vec<usize>,
    orders: Vec<Vec<u32>>,
    tol_feas: f64,
}

impl AdmissibleSet {
    pub fn new(upper: &ScalarField) -> Result<Self> {
        if upper.values().iter().any(|&u| !(u >= 0.0)) {
            return Err(Error::Data("upper bound must be nonnegative".into()));
        }
        let grid = upper.grid().clone();
        let stencil: &[(isize, isize)] = if grid.dimension() == 1 { &STENCIL_1D } else { &STENCIL_2D };
        let h = grid.h();
        let mut edges = Vec::new();
        let mut edge_start = Vec::with_capacity(grid.len() + 1);
        for c in 0..grid.len() {
            edge_start.push(edges.len());
            for &(di, dj) in stencil {
                if let Some(nb) = grid.neighbor(c, di, dj) {
                    edges.push(Edge {
                        i: c as u32,
                        j: nb as u32,
                        len: h * ((di * di + dj * dj) as f64).sqrt(),
                    });
                }
            }
        }
        edge_start.push(edges.len());

        let dims = grid.dims();
        let flips: &[(bool, bool)] = if grid.dimension() == 1 {
            &[(false, false), (true, false)]
        } else {
            &[(false, false), (true, true), (true, false), (false, true)]
        };
        let orders = flips
            .iter()
            .map(|&(fx, fy)| {
                let mut order = Vec::with_capacity(grid.len());
                for jj in 0..dims[1] {
                    let j = if fy { dims[1] - 1 - jj } else { jj };
                    for ii in 0..dims[0] {
                        let i = if fx { dims[0] - 1 - ii } else { ii };
                        if let Some(c) = grid.cell_at(i as isize, j as isize) {
                            order.push(c as u32);
                        }
                    }
                }
                order
            })
            .collect();

        let tol_feas = 1e-8 * (1.0 + upper.max().max(0.0));
        Ok(Self {
            grid,
            upper: upper.values().to_vec(),
            edges,
            edge_start,
            orders,
            tol_feas,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn upper_field(&self) -> ScalarField {
        ScalarField::new(self.grid.clone(), self.upper.clone()).expect("upper bound is finite")
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn tol_feas(&self) -> f64 {
        self.tol_feas
    }

    /// Largest violation of any constraint by `u`.
    pub fn max_violation(&self, u: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (c, &v) in u.iter().enumerate() {
            worst = worst.max(-v).max(v - self.upper[c]);
        }
        for e in &self.edges {
            worst = worst.max((u[e.i as usize] - u[e.j as usize]).abs() - e.len);
        }
        worst
    }
}

/// Membership test: `(admissible, max_violation)` with tolerance `1e-8 (1 + max u_phi)`.
pub fn is_admissible(u: &ScalarField, set: &AdmissibleSet) -> Result<(bool, f64)> {
    if !u.grid().same_layout(&set.grid) {
        return Err(Error::GridMismatch);
    }
    let v = set.max_violation(u.values());
    Ok((v <= set.tol_feas, v))
}

#[derive(Debug, Clone, Copy)]
pub struct ProjectionOptions {
    pub max_sweeps: usize,
    /// Convergence when the largest primal update within one sweep drops below this.
    pub tol_change: f64,
    /// Over-relaxation factor in `(0, 2)`; `1` is plain Hildreth.
    pub omega: f64,
    /// Every this many sweeps, try extrapolating the multipliers along their
    /// recent change (0 disables). Accepted only if the dual objective drops.
    pub extrapolate_every: usize,
    /// Warm start from `2 y_k - y_(k-1)` instead of `y_k` when the projector
    /// is reused along a time-stepping sequence.
    pub extrapolate_in_time: bool,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 10_000,
            tol_change: 1e-10,
            omega: 1.0,
            extrapolate_every: 8,
            extrapolate_in_time: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub sweep: usize,
    pub primal_change: f64,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ProjectionStats {
    pub sweeps: usize,
    pub primal_change: f64,
    pub kkt_residual: f64,
    pub max_violation: f64,
}

/// Multipliers of one two-sided constraint `lo <= a.u <= hi`, split by side.
#[derive(Debug, Clone, Copy, Default)]
struct Dual {
    upper: f64,
    lower: f64,
}

/// Warm-startable projection onto an [`AdmissibleSet`].
///
/// Works on the dual: `u = w - sum_k (y_k^+ - y_k^-) a_k` with one pair of
/// nonnegative multipliers per constraint, updated one coordinate at a time
/// (projected SOR). With `omega = 1` every update is the exact coordinate
/// minimizer, which is Dykstra's method with one block per constraint. Each
/// sweep applies all box updates before the edge updates; interleaving them
/// lets edge multipliers grow between cells that both end up on the upper
/// bound, and unwinding those takes thousands of sweeps.
///
/// Cells whose interval collapses (lower bound at `u_phi`) are fixed and
/// dropped from the sweeps; their edges become bounds on the free neighbour.
#[derive(Debug, Clone)]
pub struct Projector {
    set: Arc<AdmissibleSet>,
    options: ProjectionOptions,
    box_dual: Vec<Dual>,
    edge_dual: Vec<Dual>,
    sweep_count: usize,
    trace: Option<Vec<TraceRow>>,
    // per-call reduction
    fixed: Vec<bool>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    free_orders: Vec<Vec<u32>>,
    free_edges: Vec<u32>,
    /// Converged multipliers of the call before the last one.
    older: Option<(Vec<Dual>, Vec<Dual>)>,
    scratch: Vec<f64>,
    snap_box: Vec<Dual>,
    snap_edge: Vec<Dual>,
}

impl Projector {
    pub fn new(set: Arc<AdmissibleSet>, options: ProjectionOptions) -> Self {
        let n = set.grid.len();
        let m = set.edges.len();
        Self {
            set,
            options,
            box_dual: vec![Dual::default(); n],
            edge_dual: vec![Dual::default(); m],
            sweep_count: 0,
            trace: None,
            fixed: vec![false; n],
            lo: vec![0.0; n],
            hi: vec![0.0; n],
            free_orders: Vec::new(),
            free_edges: Vec::new(),
            older: None,
            scratch: Vec::new(),
            snap_box: Vec::new(),
            snap_edge: Vec::new(),
        }
    }

    pub fn set(&self) -> &Arc<AdmissibleSet> {
        &self.set
    }

    pub fn options(&self) -> ProjectionOptions {
        self.options
    }

    pub fn options_mut(&mut self) -> &mut ProjectionOptions {
        &mut self.options
    }

    /// Record `(sweep, primal change, kkt residual)` for every sweep of later calls.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<TraceRow> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Forget the stored multipliers.
    pub fn reset(&mut self) {
        self.older = None;
        self.box_dual.iter_mut().for_each(|y| *y = Dual::default());
        self.edge_dual.iter_mut().for_each(|y| *y = Dual::default());
    }

    pub fn project(&mut self, w: &ScalarField) -> Result<(ScalarField, ProjectionStats)> {
        if !w.grid().same_layout(&self.set.grid) {
            return Err(Error::GridMismatch);
        }
        let mut u = w.values().to_vec();
        let stats = self.project_values(&mut u, None)?;
        Ok((ScalarField::new(self.set.grid.clone(), u)?, stats))
    }

    /// Projects `u` in place.
    ///
    /// `lower`, when given, must be a member of the set lying below the
    /// projection (for instance the previous step of a monotone scheme); it
    /// is added as an extra lower bound, which leaves the result unchanged
    /// but lets saturated cells drop out of the iteration.
    pub fn project_values(&mut self, u: &mut [f64], lower: Option<&[f64]>) -> Result<ProjectionStats> {
        if let Some(c) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { cell: c, time: f64::NAN });
        }
        let set = self.set.clone();
        if u.len() != set.upper.len() || lower.is_some_and(|l| l.len() != u.len()) {
            return Err(Error::GridMismatch);
        }
        if set.upper.iter().all(|&b| b == 0.0) {
            u.iter_mut().for_each(|v| *v = 0.0);
            self.reset();
            return Ok(ProjectionStats::default());
        }
        let w_scale = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let kkt_tol = 1e-6 * w_scale.max(set.tol_feas);
        if self.options.extrapolate_in_time {
            let last = (self.box_dual.clone(), self.edge_dual.clone());
            if let Some((ob, oe)) = self.older.take() {
                let lin = |y: &mut Dual, o: &Dual| {
                    y.upper = (2.0 * y.upper - o.upper).max(0.0);
                    y.lower = (2.0 * y.lower - o.lower).max(0.0);
                };
                self.box_dual.iter_mut().zip(&ob).for_each(|(y, o)| lin(y, o));
                self.edge_dual.iter_mut().zip(&oe).for_each(|(y, o)| lin(y, o));
            }
            self.older = Some(last);
        }
        self.reduce(lower);
        let mut snap_box = std::mem::take(&mut self.snap_box);
        let mut snap_edge = std::mem::take(&mut self.snap_edge);
        let mut have_snapshot = false;

        for c in 0..u.len() {
            if self.fixed[c] {
                u[c] = set.upper[c];
            } else {
                let y = self.box_dual[c];
                u[c] -= y.upper - y.lower;
            }
        }
        for (e, y) in set.edges.iter().zip(&self.edge_dual) {
            let y = y.upper - y.lower;
            if y != 0.0 {
                u[e.i as usize] -= y;
                u[e.j as usize] += y;
            }
        }

        let mut sweeps = 0;
        let mut last_change = f64::INFINITY;
        let mut before = vec![0.0; u.len()];
        let result = loop {
            if sweeps >= self.options.max_sweeps {
                let kkt = self.kkt_residual(u);
                break Err(Error::NonConvergence {
                    sweeps,
                    primal_change: last_change,
                    kkt_residual: kkt,
                });
            }
            let which = self.sweep_count % self.free_orders.len();
            self.sweep_count += 1;
            sweeps += 1;
            before.copy_from_slice(u);
            let order = std::mem::take(&mut self.free_orders[which]);
            self.sweep(&order, u);
            self.free_orders[which] = order;
            last_change = u.iter().zip(&before).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let every = self.options.extrapolate_every;
            if every > 0 && sweeps % every == 0 && last_change >= self.options.tol_change {
                if have_snapshot {
                    self.extrapolate(u, &snap_box, &snap_edge);
                }
                snap_box.clone_from(&self.box_dual);
                snap_edge.clone_from(&self.edge_dual);
                have_snapshot = true;
            }
            let converged = last_change < self.options.tol_change;
            let kkt = if converged || self.trace.is_some() {
                self.kkt_residual(u)
            } else {
                f64::INFINITY
            };
            if let Some(trace) = self.trace.as_mut() {
                trace.push(TraceRow {
                    sweep: sweeps,
                    primal_change: last_change,
                    kkt_residual: kkt,
                });
            }
            if converged && kkt <= kkt_tol {
                let violation = set.max_violation(u);
                if violation <= set.tol_feas {
                    break Ok(ProjectionStats {
                        sweeps,
                        primal_change: last_change,
                        kkt_residual: kkt,
                        max_violation: violation,
                    });
                }
            }
        };
        self.snap_box = snap_box;
        self.snap_edge = snap_edge;
        result
    }

    /// Classifies cells as fixed or free and folds edges to fixed cells into
    /// the free cells' intervals.
    fn reduce(&mut self, lower: Option<&[f64]>) {
        let set = &*self.set;
        let n = set.upper.len();
        for c in 0..n {
            let lo = lower.map_or(0.0, |l| l[c].max(0.0));
            let hi = set.upper[c];
            self.lo[c] = lo;
            self.hi[c] = hi;
            self.fixed[c] = lo >= hi;
            if self.fixed[c] {
                self.box_dual[c] = Dual::default();
            }
        }
        for (k, e) in set.edges.iter().enumerate() {
            let (i, j) = (e.i as usize, e.j as usize);
            match (self.fixed[i], self.fixed[j]) {
                (false, false) => continue,
                (true, false) => {
                    self.lo[j] = self.lo[j].max(set.upper[i] - e.len);
                    self.hi[j] = self.hi[j].min(set.upper[i] + e.len);
                }
                (false, true) => {
                    self.lo[i] = self.lo[i].max(set.upper[j] - e.len);
                    self.hi[i] = self.hi[i].min(set.upper[j] + e.len);
                }
                (true, true) => {}
            }
            self.edge_dual[k] = Dual::default();
        }
        // a valid lower bound keeps every interval nonempty; guard against rounding
        for c in 0..n {
            if self.lo[c] > self.hi[c] {
                self.lo[c] = self.hi[c];
            }
        }
        let fixed = &self.fixed;
        self.free_edges = (0..set.edges.len() as u32)
            .filter(|&k| {
                let e = set.edges[k as usize];
                !fixed[e.i as usize] && !fixed[e.j as usize]
            })
            .collect();
        self.free_orders = set
            .orders
            .iter()
            .map(|o| o.iter().copied().filter(|&c| !fixed[c as usize]).collect())
            .collect();
    }

    /// Moves the multipliers to `max(0, y + s (y - y_old))` for the power of
    /// two `s <= 1024` that lowers the dual objective most, if any does.
    ///
    /// `u` must equal `w - A^T y`. Objective changes are evaluated as
    /// `sum du (u + du/2) + d support`, which stays accurate when the
    /// improvement is far below the rounding level of the objective itself.
    fn extrapolate(&mut self, u: &mut [f64], old_box: &[Dual], old_edge: &[Dual]) {
        let step = |y: Dual, old: Dual, s: f64| Dual {
            upper: (y.upper + s * (y.upper - old.upper)).max(0.0),
            lower: (y.lower + s * (y.lower - old.lower)).max(0.0),
        };
        let mut du = std::mem::take(&mut self.scratch);
        du.resize(u.len(), 0.0);
        let trial = |this: &Self, s: f64, du: &mut [f64]| -> f64 {
            let set = &*this.set;
            let mut support = 0.0;
            for &c in &this.free_orders[0] {
                let c = c as usize;
                let y = this.box_dual[c];
                let t = step(y, old_box[c], s);
                let (a, b) = (t.upper - y.upper, t.lower - y.lower);
                du[c] = b - a;
                support += this.hi[c] * a - this.lo[c] * b;
            }
            for &k in &this.free_edges {
                let k = k as usize;
                let e = set.edges[k];
                let y = this.edge_dual[k];
                let t = step(y, old_edge[k], s);
                let (a, b) = (t.upper - y.upper, t.lower - y.lower);
                du[e.i as usize] -= a - b;
                du[e.j as usize] += a - b;
                support += e.len * (a + b);
            }
            let quad: f64 = this.free_orders[0]
                .iter()
                .map(|&c| du[c as usize] * (u[c as usize] + 0.5 * du[c as usize]))
                .sum();
            quad + support
        };
        let mut best = (0.0, 0.0);
        let mut s = 1.0;
        while s <= 1024.0 {
            let diff = trial(self, s, &mut du);
            if diff >= best.1 {
                break;
            }
            best = (s, diff);
            s *= 2.0;
        }
        if best.0 > 0.0 {
            let s = best.0;
            trial(self, s, &mut du);
            for &c in &self.free_orders[0] {
                let c = c as usize;
                self.box_dual[c] = step(self.box_dual[c], old_box[c], s);
                u[c] += du[c];
            }
            for &k in &self.free_edges {
                let k = k as usize;
                self.edge_dual[k] = step(self.edge_dual[k], old_edge[k], s);
            }
        }
        self.scratch = du;
    }

    fn kkt_residual(&self, u: &[f64]) -> f64 {
        let set = &*self.set;
        let mut r: f64 = 0.0;
        let mut side = |y: Dual, value: f64, lo: f64, hi: f64| {
            r = r
                .max(value - hi)
                .max(lo - value)
                .max(y.upper.min((hi - value).abs()))
                .max(y.lower.min((value - lo).abs()));
        };
        for (c, &v) in u.iter().enumerate() {
            if !self.fixed[c] {
                side(self.box_dual[c], v, self.lo[c], self.hi[c]);
            }
        }
        for (e, &y) in set.edges.iter().zip(&self.edge_dual) {
            if !self.fixed[e.i as usize] && !self.fixed[e.j as usize] {
                side(y, u[e.i as usize] - u[e.j as usize], -e.len, e.len);
            }
        }
        r
    }

    /// One pass over the free constraints; returns the largest single update.
    fn sweep(&mut self, order: &[u32], u: &mut [f64]) -> f64 {
        let set = &*self.set;
        let omega = self.options.omega;
        let mut change: f64 = 0.0;
        // box lo_c <= u_c <= hi_c, a = e_c
        for &c in order {
            let c = c as usize;
            let y = &mut self.box_dual[c];
            let up = (y.upper - omega * (self.hi[c] - u[c])).max(0.0);
            let d = up - y.upper;
            u[c] -= d;
            y.upper = up;
            let lo = (y.lower - omega * (u[c] - self.lo[c])).max(0.0);
            let d2 = lo - y.lower;
            u[c] += d2;
            y.lower = lo;
            change = change.max(d.abs()).max(d2.abs());
        }
        // slabs -len <= u_i - u_j <= len, a = e_i - e_j, |a|^2 = 2
        for &c in order {
            let c = c as usize;
            for k in set.edge_start[c]..set.edge_start[c + 1] {
                let e = set.edges[k];
                let (i, j) = (e.i as usize, e.j as usize);
                if self.fixed[j] {
                    continue;
                }
                let y = &mut self.edge_dual[k];
                let up = (y.upper - 0.5 * omega * (e.len - (u[i] - u[j]))).max(0.0);
                let d = up - y.upper;
                if d != 0.0 {
                    u[i] -= d;
                    u[j] += d;
                    y.upper = up;
                }
                let lo = (y.lower - 0.5 * omega * (u[i] - u[j] + e.len)).max(0.0);
                let d2 = lo - y.lower;
                if d2 != 0.0 {
                    u[i] += d2;
                    u[j] -= d2;
                    y.lower = lo;
                }
                change = change.max(d.abs()).max(d2.abs());
            }
        }
        change
    }
}

/// One-shot projection with default options and a cold start.
pub fn project(w: &ScalarField, set: &Arc<AdmissibleSet>) -> Result<ScalarField> {
    Projector::new(set.clone(), ProjectionOptions::default()).project(w).map(|(u, _)| u)
}

/// Largest problem accepted by [`qp_oracle_project`].
pub const ORACLE_MAX_CELLS: usize = 50;

/// Exact projection by a dense primal active-set method on the same
/// constraint system (`A u <= b` with unit Hessian). Test oracle only.
pub fn qp_oracle_project(w: &ScalarField, set: &AdmissibleSet) -> Result<ScalarField> {
    if !w.grid().same_layout(&set.grid) {
        return Err(Error::GridMismatch);
    }
    let n = set.grid.len();
    if n > ORACLE_MAX_CELLS {
        return Err(Error::Size {
            cells: n,
            limit: ORACLE_MAX_CELLS,
        });
    }
    // rows of A as sparse (index, coefficient) lists
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for c in 0..n {
        rows.push((vec![(c, -1.0)], 0.0));
        rows.push((vec![(c, 1.0)], set.upper[c]));
    }
    for e in &set.edges {
        let (i, j) = (e.i as usize, e.j as usize);
        rows.push((vec![(i, 1.0), (j, -1.0)], e.len));
        rows.push((vec![(i, -1.0), (j, 1.0)], e.len));
    }
    let dot = |row: &[(usize, f64)], v: &DVector<f64>| row.iter().map(|&(k, a)| a * v[k]).sum::<f64>();

    let w = DVector::from_column_slice(w.values());
    let mut u = DVector::zeros(n);
    let mut working: Vec<usize> = Vec::new();
    let scale = 1.0 + w.amax() + set.upper.iter().fold(0.0f64, |a, &b| a.max(b));

    for _ in 0..100_000 {
        let g = &u - &w;
        let (p, lambda) = if working.is_empty() {
            (-g.clone(), DVector::zeros(0))
        } else {
            let mut a = DMatrix::zeros(working.len(), n);
            for (r, &k) in working.iter().enumerate() {
                for &(col, coef) in &rows[k].0 {
                    a[(r, col)] = coef;
                }
            }
            let gram = &a * a.transpose();
            let chol = gram
                .cholesky()
                .ok_or_else(|| Error::Consistency("dependent working set in QP oracle".into()))?;
            let lambda = -chol.solve(&(&a * &g));
            let p = -&g - a.transpose() * &lambda;
            (p, lambda)
        };
        if p.amax() <= 1e-13 * scale {
            match lambda.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)) {
                Some((idx, &l)) if l < -1e-13 * scale => {
                    working.remove(idx);
                    continue;
                }
                _ => return ScalarField::new(set.grid.clone(), u.iter().copied().collect()),
            }
        }
        let mut step = 1.0;
        let mut blocking = None;
        for (k, (row, b)) in rows.iter().enumerate() {
            if working.contains(&k) {
                continue;
            }
            let ap = dot(row, &p);
            if ap > 1e-15 * scale {
                let t = ((b - dot(row, &u)) / ap).max(0.0);
                if t < step {
                    step = t;
                    blocking = Some(k);
                }
            }
        }
        u += step * &p;
        if let Some(k) = blocking {
            working.push(k);
        }
    }
    Err(Error::Consistency("QP oracle exceeded its iteration limit".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;
    use crate::grid::build_grid;

    fn line(n: usize, h: f64) -> Arc<Grid> {
        let d = DomainSpec::interval(0.0, n as f64 * h).unwrap();
        Arc::new(build_grid(&d, h).unwrap())
    }

    fn set_with(grid: &Arc<Grid>, upper: Vec<f64>) -> Arc<AdmissibleSet> {
        Arc::new(AdmissibleSet::new(&ScalarField::new(grid.clone(), upper).unwrap()).unwrap())
    }

    #[test]
    fn membership() {
        let g = line(5, 0.25);
        let upper = vec![0.125, 0.375, 0.5, 0.375, 0.125];
        let set = set_with(&g, upper.clone());
        let zero = ScalarField::zeros(g.clone());
        assert_eq!(is_admissible(&zero, &set).unwrap(), (true, 0.0));
        let top = ScalarField::new(g.clone(), upper).unwrap();
        assert!(is_admissible(&top, &set).unwrap().0);
        let (ok, v) = is_admissible(&top.map(|x| 2.0 * x), &set).unwrap();
        assert!(!ok && v > 0.0);
    }

    #[test]
    fn clip_single_cell() {
        // one cell: the projection is a clip
        let d = DomainSpec::interval(0.0, 1.0).unwrap();
        let g = Arc::new(build_grid(&d, 0.2).unwrap());
        let n = g.len();
        let set = set_with(&g, vec![0.7; n]);
        let w = ScalarField::new(g.clone(), vec![0.9; n]).unwrap();
        let u = qp_oracle_project(&w, &set).unwrap();
        assert!(u.values().iter().all(|&v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn two_cell_kkt_example() {
        // the two-cell example embedded in a longer line; the tail stays at zero
        let g8 = line(8, 1.0);
        let n = g8.len();
        let set = set_with(&g8, vec![5.0; n]);
        let mut w = vec![0.0; n];
        w[0] = 3.0;
        let w = ScalarField::new(g8.clone(), w).unwrap();
        let u = qp_oracle_project(&w, &set).unwrap();
        assert!((u.values()[0] - 2.0).abs() < 1e-9);
        assert!((u.values()[1] - 1.0).abs() < 1e-9);
        let v = project(&w, &set).unwrap();
        assert!(v.sup_distance(&u) < 1e-6);
    }

    #[test]
    fn zero_is_fixed() {
        let g = line(6, 0.1);
        let set = set_with(&g, vec![0.3; 6]);
        let w = ScalarField::zeros(g.clone());
        assert!(qp_oracle_project(&w, &set).unwrap().is_zero());
        assert!(project(&w, &set).unwrap().sup_distance(&w) < 1e-12);
    }

    #[test]
    fn oracle_rejects_large_grids() {
        let g = line(60, 0.1);
        let set = set_with(&g, vec![1.0; 60]);
        let w = ScalarField::zeros(g.clone());
        assert!(matches!(qp_oracle_project(&w, &set), Err(Error::Size { .. })));
    }

    #[test]
    fn degenerate_set_is_zero() {
        let g = line(6, 0.1);
        let set = set_with(&g, vec![0.0; 6]);
        let w = ScalarField::new(g.clone(), vec![1.0, -2.0, 3.0, 0.5, 0.0, 7.0]).unwrap();
        assert!(project(&w, &set).unwrap().is_zero());
    }

    #[test]
    fn budget_exhaustion_reports_residual() {
        let g = line(20, 0.05);
        let set = set_with(&g, vec![1.0; 20]);
        let w = ScalarField::new(g.clone(), (0..20).map(|k| (k % 2) as f64).collect()).unwrap();
        let mut p = Projector::new(set, ProjectionOptions { max_sweeps: 1, ..Default::default() });
        match p.project(&w) {
            Err(Error::NonConvergence { sweeps, kkt_residual, .. }) => {
                assert_eq!(sweeps, 1);
                assert!(kkt_residual > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn trace_is_recorded() {
        let g = line(10, 0.1);
        let set = set_with(&g, vec![0.4; 10]);
        let w = ScalarField::new(g.clone(), vec![2.0; 10]).unwrap();
        let mut p = Projector::new(set, ProjectionOptions::default());
        p.enable_trace();
        let (_, stats) = p.project(&w).unwrap();
        let trace = p.take_trace();
        assert_eq!(trace.len(), stats.sweeps);
        assert!(trace.last().unwrap().primal_change < 1e-10);
    }
}
