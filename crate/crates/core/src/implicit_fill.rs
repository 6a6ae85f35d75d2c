//! Semi-implicit shell fill: per-shell linear systems, damped Jacobi / SOR,
//! and empirical convergence rates.

use std::fmt::Write as _;

use log::warn;
use rayon::prelude::*;

use crate::direct_fill::{choose_ready, FillConfig, FillReport};
use crate::error::{Error, Result};
use crate::fill_policy::{classify, tap_usable, Avail, ReadyConfig, ReadyPolicy, ShellMarks};
use crate::lattice::{FillState, PixelGrid};
use crate::stencil::{Guide, MethodTag, StencilProvider, Tap};

/// One equation `diag * u_i - sum_j c_ij * u_j = f_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    /// `1 - w00 / W`.
    pub diag: f64,
    /// Couplings `(position, w_ij / W)` to other unknowns, sorted by position.
    pub coupling: Vec<(usize, f64)>,
    /// Usable stencil weight `W`.
    pub total_weight: f64,
    /// Equivalent weight that lands on the pixel itself.
    pub origin_weight: f64,
}

/// Linear system of one shell; the matrix is shared by all channels.
#[derive(Clone, Debug)]
pub struct ShellSystem {
    pub unknowns: Vec<usize>,
    pub rows: Vec<Row>,
    /// Right-hand sides indexed `[channel][row]`.
    pub rhs: Vec<Vec<f64>>,
}

/// Per-channel values indexed `[channel][row]`.
pub type Values = Vec<Vec<f64>>;

impl ShellSystem {
    pub fn len(&self) -> usize {
        self.unknowns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unknowns.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.rhs.len()
    }

    /// Relaxation parameter implied by the fill loop, per row.
    pub fn omega_star(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.diag).collect()
    }

    /// `sum |c_ij| < diag` for every row.
    pub fn is_strictly_diagonally_dominant(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.coupling.iter().map(|c| c.1.abs()).sum::<f64>() < r.diag.abs())
    }

    /// True when every coupling points to an earlier unknown.
    pub fn is_lower_triangular(&self) -> bool {
        self.rows
            .iter()
            .enumerate()
            .all(|(i, r)| r.coupling.iter().all(|&(j, c)| j < i || c == 0.0))
    }

    /// Residual maximum over channels and rows.
    pub fn residual_inf(&self, u: &Values) -> f64 {
        let mut m: f64 = 0.0;
        for (c, uc) in u.iter().enumerate() {
            for (i, row) in self.rows.iter().enumerate() {
                let s: f64 = row.coupling.iter().map(|&(j, w)| w * uc[j]).sum();
                m = m.max((self.rhs[c][i] + s - row.diag * uc[i]).abs());
            }
        }
        m
    }

    pub fn zeros(&self) -> Values {
        vec![vec![0.0; self.len()]; self.channels()]
    }
}

fn assemble_rows(
    grid: &PixelGrid,
    state: &FillState,
    provider: &StencilProvider,
    shell: &[usize],
    marks: &ShellMarks,
) -> Vec<Option<(Row, Vec<f64>)>> {
    let ch = grid.channels();
    let geom = grid.geometry();
    let ext = grid.exterior();
    shell
        .par_iter()
        .map(|&idx| {
            let (ci, cj) = geom.coords(idx);
            let st = provider.at(ci, cj);
            let mut w_total = 0.0;
            let mut origin = 0.0;
            let mut rhs = vec![0.0; ch];
            let mut coupling: Vec<(usize, f64)> = Vec::new();
            let mut sites = [Avail::Missing; 4];
            for pass in 0..2 {
                let rescued;
                let taps: &[Tap] = if pass == 0 {
                    &st.taps
                } else if w_total == 0.0 && !st.faint.is_empty() {
                    rescued = st.rescued(|t| tap_usable(grid, state, Some(marks), idx, t));
                    &rescued
                } else {
                    break;
                };
                for tap in taps {
                    let corners = tap.corners();
                    let mut ok = true;
                    for (s, &(dx, dy, _)) in sites.iter_mut().zip(corners) {
                        *s = classify(grid, state, Some(marks), idx, ci as i64 + dx, cj as i64 + dy);
                        ok &= s.is_usable();
                    }
                    if !ok {
                        continue;
                    }
                    let w = tap.weight;
                    w_total += w;
                    for (s, &(_, _, lam)) in sites.iter().zip(corners) {
                        let m = lam * w;
                        match *s {
                            Avail::Known(k) => {
                                for (r, v) in rhs.iter_mut().zip(grid.pixel(k)) {
                                    *r += m * v;
                                }
                            }
                            Avail::Exterior => {
                                for (r, v) in rhs.iter_mut().zip(ext.unwrap_or(&[])) {
                                    *r += m * v;
                                }
                            }
                            Avail::Center => origin += m,
                            Avail::Shell(p) => coupling.push((p, m)),
                            Avail::Missing => unreachable!(),
                        }
                    }
                }
            }
            if !(w_total > 0.0) {
                return None;
            }
            coupling.sort_by_key(|c| c.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coupling.len());
            for (p, m) in coupling {
                match merged.last_mut() {
                    Some(last) if last.0 == p => last.1 += m,
                    _ => merged.push((p, m)),
                }
            }
            for c in merged.iter_mut() {
                c.1 /= w_total;
            }
            rhs.iter_mut().for_each(|r| *r /= w_total);
            Some((
                Row {
                    diag: 1.0 - origin / w_total,
                    coupling: merged,
                    total_weight: w_total,
                    origin_weight: origin,
                },
                rhs,
            ))
        })
        .collect()
}

fn build(rows: Vec<(Row, Vec<f64>)>, shell: Vec<usize>, ch: usize) -> ShellSystem {
    let mut rhs = vec![Vec::with_capacity(shell.len()); ch];
    let mut out = Vec::with_capacity(shell.len());
    for (row, f) in rows {
        for (c, v) in f.into_iter().enumerate() {
            rhs[c].push(v);
        }
        out.push(row);
    }
    ShellSystem {
        unknowns: shell,
        rows: out,
        rhs,
    }
}

/// Assemble the system of `shell`, whose pixels must all be active.
pub fn assemble(
    grid: &PixelGrid,
    state: &FillState,
    provider: &StencilProvider,
    shell: &[usize],
) -> Result<ShellSystem> {
    let mut marks = ShellMarks::new(grid.geometry().len());
    marks.mark(shell);
    let rows = assemble_rows(grid, state, provider, shell, &marks);
    let rows = rows
        .into_iter()
        .zip(shell)
        .map(|(r, idx)| {
            r.ok_or_else(|| {
                Error::ContractViolation(format!("pixel {idx} has no usable stencil weight"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(build(rows, shell.to_vec(), grid.channels()))
}

/// Assemble after dropping pixels without usable weight, repeatedly, since
/// dropping one pixel can starve another. Returns `None` when nothing is
/// left.
fn assemble_pruned(
    grid: &PixelGrid,
    state: &FillState,
    provider: &StencilProvider,
    shell: &[usize],
    marks: &mut ShellMarks,
) -> Option<ShellSystem> {
    let mut current = shell.to_vec();
    loop {
        if current.is_empty() {
            return None;
        }
        marks.mark(&current);
        let rows = assemble_rows(grid, state, provider, &current, marks);
        if rows.iter().all(Option::is_some) {
            let rows = rows.into_iter().map(Option::unwrap).collect();
            return Some(build(rows, current, grid.channels()));
        }
        current = current
            .iter()
            .zip(&rows)
            .filter(|(_, r)| r.is_some())
            .map(|(p, _)| *p)
            .collect();
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Omega {
    /// Per-row `1 - w00 / W`.
    Star,
    Fixed(f64),
}

impl Omega {
    #[inline]
    fn at(self, row: &Row) -> f64 {
        match self {
            Omega::Star => row.diag,
            Omega::Fixed(w) => w,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ordering {
    LeftToRight,
    RightToLeft,
}

impl Ordering {
    /// Sweep direction that follows the guide's horizontal component.
    pub fn for_direction(cos_theta: f64) -> Self {
        if cos_theta >= 0.0 {
            Ordering::LeftToRight
        } else {
            Ordering::RightToLeft
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stop {
    Sweeps(usize),
    Residual { tol: f64, max_sweeps: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryEntry {
    pub sweep: usize,
    pub error_inf: Option<f64>,
    pub residual_inf: f64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub values: Values,
    /// Entry 0 describes the initial guess.
    pub history: Vec<HistoryEntry>,
    pub sweeps: usize,
}

impl Solution {
    pub fn residual_inf(&self) -> f64 {
        self.history.last().map_or(f64::INFINITY, |h| h.residual_inf)
    }

    /// Rate from the error column of the history.
    pub fn rate(&self) -> Result<f64> {
        let e: Vec<f64> = self.history.iter().filter_map(|h| h.error_inf).collect();
        measure_rate(&e)
    }

    /// CSV `sweep,error_inf,residual_inf`; missing errors are left empty.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("sweep,error_inf,residual_inf\n");
        for h in &self.history {
            let e = h.error_inf.map(|e| format!("{e:.16e}")).unwrap_or_default();
            let _ = writeln!(s, "{},{},{:.16e}", h.sweep, e, h.residual_inf);
        }
        s
    }
}

fn error_inf(u: &Values, reference: &Values) -> f64 {
    u.iter()
        .zip(reference)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

const DIVERGENCE_RUN: usize = 10;

fn iterate(
    sys: &ShellSystem,
    stop: Stop,
    init: Option<&Values>,
    reference: Option<&Values>,
    mut sweep: impl FnMut(&mut Values),
) -> Result<Solution> {
    let mut u = init.cloned().unwrap_or_else(|| sys.zeros());
    if u.len() != sys.channels() || u.iter().any(|c| c.len() != sys.len()) {
        return Err(Error::SizeMismatch("initial guess does not match system".into()));
    }
    let entry = |n: usize, u: &Values| HistoryEntry {
        sweep: n,
        error_inf: reference.map(|r| error_inf(u, r)),
        residual_inf: sys.residual_inf(u),
    };
    let mut history = vec![entry(0, &u)];
    let (limit, tol) = match stop {
        Stop::Sweeps(n) => (n, None),
        Stop::Residual { tol, max_sweeps } => (max_sweeps, Some(tol)),
    };
    let mut growth = 0;
    let mut n = 0;
    while n < limit {
        if tol.is_some_and(|t| history[n].residual_inf <= t) {
            break;
        }
        sweep(&mut u);
        n += 1;
        let e = entry(n, &u);
        let (now, before) = match (e.error_inf, history[n - 1].error_inf) {
            (Some(a), Some(b)) => (a, b),
            _ => (e.residual_inf, history[n - 1].residual_inf),
        };
        growth = if now > before { growth + 1 } else { 0 };
        if growth >= DIVERGENCE_RUN || !now.is_finite() {
            return Err(Error::Divergence(n));
        }
        history.push(e);
    }
    Ok(Solution {
        values: u,
        history,
        sweeps: n,
    })
}

fn check_omega(omega: Omega, upper: f64) -> Result<()> {
    if let Omega::Fixed(w) = omega {
        if !(w > 0.0 && w < upper) {
            return Err(Error::InvalidParameter(format!("omega {w} out of range")));
        }
    }
    Ok(())
}

/// Damped Jacobi: `u_i <- (1 - w) u_i + w (f_i + sum_j c_ij u_j) / diag_i`.
pub fn damped_jacobi(
    sys: &ShellSystem,
    omega: Omega,
    stop: Stop,
    init: Option<&Values>,
    reference: Option<&Values>,
) -> Result<Solution> {
    check_omega(omega, 2.0)?;
    iterate(sys, stop, init, reference, |u| {
        for (c, uc) in u.iter_mut().enumerate() {
            let prev: &[f64] = uc;
            let next: Vec<f64> = sys
                .rows
                .par_iter()
                .enumerate()
                .map(|(i, row)| {
                    let w = omega.at(row);
                    let s: f64 = row.coupling.iter().map(|&(j, a)| a * prev[j]).sum();
                    (1.0 - w) * prev[i] + w * (sys.rhs[c][i] + s) / row.diag
                })
                .collect();
            *uc = next;
        }
    })
}

/// Successive over-relaxation along `ordering`.
pub fn sor(
    sys: &ShellSystem,
    omega: Omega,
    ordering: Ordering,
    stop: Stop,
    init: Option<&Values>,
    reference: Option<&Values>,
) -> Result<Solution> {
    check_omega(omega, 2.0)?;
    let order: Vec<usize> = match ordering {
        Ordering::LeftToRight => (0..sys.len()).collect(),
        Ordering::RightToLeft => (0..sys.len()).rev().collect(),
    };
    iterate(sys, stop, init, reference, |u| {
        for (c, uc) in u.iter_mut().enumerate() {
            for &i in &order {
                let row = &sys.rows[i];
                let w = omega.at(row);
                let s: f64 = row.coupling.iter().map(|&(j, a)| a * uc[j]).sum();
                uc[i] = (1.0 - w) * uc[i] + w * (sys.rhs[c][i] + s) / row.diag;
            }
        }
    })
}

/// Solution to residual `1e-14` by Gauss-Seidel.
pub fn reference_solution(sys: &ShellSystem) -> Result<Values> {
    let scale = sys
        .rhs
        .iter()
        .flatten()
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let sol = sor(
        sys,
        Omega::Fixed(1.0),
        Ordering::LeftToRight,
        Stop::Residual {
            tol: 1e-14 * scale,
            max_sweeps: 1_000_000,
        },
        None,
        None,
    )?;
    Ok(sol.values)
}

/// `(e_n / e_0)^(1/n)` for an error sequence `e_0, ..., e_n`.
pub fn measure_rate(errors: &[f64]) -> Result<f64> {
    if errors.len() < 2 {
        return Err(Error::InvalidParameter("rate needs at least two iterates".into()));
    }
    let (e0, en) = (errors[0], errors[errors.len() - 1]);
    if e0 == 0.0 {
        return Err(Error::ZeroInitialError);
    }
    Ok((en / e0).powf(1.0 / (errors.len() - 1) as f64))
}

/// Run the fill update on `shell` directly from the stencil, `sweeps`
/// times, reading shell values from the current iterate.
///
/// With `parallel` every pixel reads the previous iterate; otherwise pixels
/// are updated in place along `ordering`. Returns every iterate, starting
/// with `init`.
#[allow(clippy::too_many_arguments)]
pub fn fill_boundary_loop(
    grid: &PixelGrid,
    state: &FillState,
    provider: &StencilProvider,
    shell: &[usize],
    init: &Values,
    sweeps: usize,
    parallel: bool,
    ordering: Ordering,
) -> Vec<Values> {
    let geom = grid.geometry();
    let ext = grid.exterior();
    let mut marks = ShellMarks::new(geom.len());
    marks.mark(shell);
    let update = |p: usize, cur: &Values| -> Option<Vec<f64>> {
        let idx = shell[p];
        let (ci, cj) = geom.coords(idx);
        let st = provider.at(ci, cj);
        let ch = cur.len();
        let mut num = vec![0.0; ch];
        let mut den = 0.0;
        'taps: for tap in &st.taps {
            let mut v = vec![0.0; ch];
            for &(dx, dy, lam) in tap.corners() {
                match classify(grid, state, Some(&marks), idx, ci as i64 + dx, cj as i64 + dy) {
                    Avail::Known(k) => v.iter_mut().zip(grid.pixel(k)).for_each(|(a, b)| *a += lam * b),
                    Avail::Exterior => v.iter_mut().zip(ext.unwrap_or(&[])).for_each(|(a, b)| *a += lam * b),
                    Avail::Center => v.iter_mut().enumerate().for_each(|(c, a)| *a += lam * cur[c][p]),
                    Avail::Shell(q) => v.iter_mut().enumerate().for_each(|(c, a)| *a += lam * cur[c][q]),
                    Avail::Missing => continue 'taps,
                }
            }
            den += tap.weight;
            num.iter_mut().zip(&v).for_each(|(a, b)| *a += tap.weight * b);
        }
        (den > 0.0).then(|| num.into_iter().map(|x| x / den).collect())
    };
    let mut out = vec![init.clone()];
    let mut cur = init.clone();
    for _ in 0..sweeps {
        if parallel {
            let vals: Vec<Option<Vec<f64>>> = (0..shell.len()).into_par_iter().map(|p| update(p, &cur)).collect();
            for (p, v) in vals.into_iter().enumerate() {
                if let Some(v) = v {
                    for (c, x) in v.into_iter().enumerate() {
                        cur[c][p] = x;
                    }
                }
            }
        } else {
            let order: Vec<usize> = match ordering {
                Ordering::LeftToRight => (0..shell.len()).collect(),
                Ordering::RightToLeft => (0..shell.len()).rev().collect(),
            };
            for p in order {
                if let Some(v) = update(p, &cur) {
                    for (c, x) in v.into_iter().enumerate() {
                        cur[c][p] = x;
                    }
                }
            }
        }
        out.push(cur.clone());
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Solver {
    Jacobi,
    Sor,
}

impl Solver {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "jacobi" => Some(Solver::Jacobi),
            "sor" => Some(Solver::Sor),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SemiImplicitConfig {
    pub fill: FillConfig,
    pub solver: Solver,
    pub omega: Omega,
    pub stop: Stop,
    /// `None` picks the direction from the guide.
    pub ordering: Option<Ordering>,
    /// Residual above which an unconverged shell is reported.
    pub warn_residual: f64,
}

impl SemiImplicitConfig {
    /// Semi-implicit Guidefill with coupled readiness, `omega = omega*`.
    pub fn new(r: i64, mu: f64, guide: Guide, solver: Solver, sweeps: usize) -> Self {
        Self {
            fill: FillConfig::new(MethodTag::GuidefillSemiImplicit, r, mu, guide)
                .with_ready(ReadyConfig::new(ReadyPolicy::Coupled)),
            solver,
            omega: Omega::Star,
            stop: Stop::Sweeps(sweeps),
            ordering: None,
            warn_residual: 1e-8,
        }
    }

    fn resolved_ordering(&self) -> Ordering {
        self.ordering.unwrap_or(match &self.fill.guide {
            Guide::Constant(g) => Ordering::for_direction(g[0]),
            Guide::Field(_) => Ordering::LeftToRight,
        })
    }
}

#[derive(Clone, Debug, Default)]
pub struct SemiImplicitReport {
    pub fill: FillReport,
    pub sweeps_per_shell: Vec<usize>,
    /// Shells whose final residual exceeded the warning level.
    pub unconverged_shells: usize,
    pub max_residual: f64,
}

/// Fill every unfilled pixel, solving one linear system per shell.
pub fn fill_semi_implicit(
    grid: &mut PixelGrid,
    state: &mut FillState,
    cfg: &SemiImplicitConfig,
) -> Result<SemiImplicitReport> {
    cfg.fill.validate()?;
    let provider = cfg.fill.provider()?;
    let ordering = cfg.resolved_ordering();
    let mut marks = ShellMarks::new(grid.geometry().len());
    let mut report = SemiImplicitReport::default();
    while !state.is_complete() {
        if state.active().is_empty() {
            return Err(Error::Stall {
                shell: state.shell_index(),
            });
        }
        let ready = choose_ready(grid, state, &provider, &cfg.fill.ready, &mut report.fill);
        let Some(sys) = assemble_pruned(grid, state, &provider, &ready, &mut marks) else {
            return Err(Error::Stall {
                shell: state.shell_index(),
            });
        };
        let sol = match cfg.solver {
            Solver::Jacobi => damped_jacobi(&sys, cfg.omega, cfg.stop, None, None)?,
            Solver::Sor => sor(&sys, cfg.omega, ordering, cfg.stop, None, None)?,
        };
        let res = sol.residual_inf();
        if res > cfg.warn_residual {
            report.unconverged_shells += 1;
            if report.unconverged_shells == 1 {
                warn!(
                    "shell {}: residual {res:.3e} after {} sweeps; the fill may fade",
                    state.shell_index(),
                    sol.sweeps
                );
            }
        }
        report.max_residual = report.max_residual.max(res);
        report.sweeps_per_shell.push(sol.sweeps);
        for (p, &idx) in sys.unknowns.iter().enumerate() {
            let px = grid.pixel_mut(idx);
            for (c, v) in px.iter_mut().enumerate() {
                *v = sol.values[c][p];
            }
        }
        report.fill.deferred += ready.len() - sys.len();
        report.fill.filled += sys.len();
        report.fill.shells += 1;
        state.advance(&sys.unknowns)?;
    }
    marks.clear();
    Ok(report)
}
