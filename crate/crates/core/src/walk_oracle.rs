//! Stopped random walks driven by equivalent-stencil step densities.
//!
//! A walk starts at height `k >= 1` above the top data row and moves by
//! `X_{n+1} = X_n + Z_n` until its y-index drops to `0` or below. The exit
//! distribution reproduces fill values as `E[u0(X_tau)]`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use log::warn;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{BoundaryMode, PixelGrid};
use crate::stencil::EquivalentStencil;

/// Default stopping tolerance for within-row redistribution.
pub const DEFAULT_TOL: f64 = 1e-14;

const MASS_TOL: f64 = 1e-12;
const MC_CHUNK: usize = 1 << 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WalkMode {
    /// Every step descends at least one row.
    Direct,
    /// Within-row steps are allowed and resolved iteratively.
    SemiImplicit,
}

/// Exit distribution of a stopped walk.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkDensity {
    /// `(x, y)` exit positions with their probabilities, sorted.
    pub masses: Vec<([i64; 2], f64)>,
    /// `[x, height]` of the starting pixel.
    pub start: [i64; 2],
    /// Mass still inside the domain when iteration stopped.
    pub residual_interior_mass: f64,
}

/// Compensated accumulator for a contiguous run of one row.
#[derive(Default)]
struct RowBuf {
    start: i64,
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl RowBuf {
    fn add(&mut self, x: i64, v: f64) {
        if self.sum.is_empty() {
            self.start = x;
        }
        if x < self.start {
            let grow = (self.start - x) as usize;
            self.sum.splice(0..0, std::iter::repeat_n(0.0, grow));
            self.comp.splice(0..0, std::iter::repeat_n(0.0, grow));
            self.start = x;
        }
        let k = (x - self.start) as usize;
        if k >= self.sum.len() {
            self.sum.resize(k + 1, 0.0);
            self.comp.resize(k + 1, 0.0);
        }
        let s = self.sum[k];
        let t = s + v;
        self.comp[k] += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
        self.sum[k] = t;
    }

    fn entries(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.sum
            .iter()
            .zip(&self.comp)
            .enumerate()
            .map(move |(k, (s, c))| (self.start + k as i64, s + c))
            .filter(|(_, m)| *m != 0.0)
    }

    fn total(&self) -> f64 {
        self.entries().map(|(_, m)| m).sum()
    }
}

fn validate_steps(steps: &[([i64; 2], f64)], mode: WalkMode) -> Result<f64> {
    if steps.is_empty() {
        return Err(Error::DegenerateStencil);
    }
    let total: f64 = steps.iter().map(|(_, p)| p).sum();
    if steps.iter().any(|(_, p)| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::ContractViolation(format!("step probabilities must be >= 0 and sum to 1, got {total}")));
    }
    let mu_y: f64 = steps.iter().map(|(z, p)| p * z[1] as f64).sum();
    if !(mu_y < 0.0) {
        return Err(Error::IllPosed(mu_y));
    }
    if steps.iter().any(|(z, p)| z[1] > 0 && *p > 0.0) {
        return Err(Error::ContractViolation("steps must not move upward".into()));
    }
    let within: f64 = steps.iter().filter(|(z, _)| z[1] == 0).map(|(_, p)| p).sum();
    if mode == WalkMode::Direct && within > 0.0 {
        return Err(Error::ContractViolation("direct walks need every step to descend".into()));
    }
    Ok(within)
}

/// Exact exit density for a walk driven by `eq`'s step distribution.
pub fn stopped_density(start: [i64; 2], eq: &EquivalentStencil, mode: WalkMode, tol: f64) -> Result<WalkDensity> {
    stopped_density_steps(start, &eq.step_distribution(), mode, tol)
}

/// Exit density for an explicit step distribution.
pub fn stopped_density_steps(start: [i64; 2], steps: &[([i64; 2], f64)], mode: WalkMode, tol: f64) -> Result<WalkDensity> {
    let within = validate_steps(steps, mode)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let steps: Vec<([i64; 2], f64)> = steps.iter().copied().filter(|(_, p)| *p > 0.0).collect();
    let height = start[1];
    if height <= 0 {
        return Ok(WalkDensity { masses: vec![(start, 1.0)], start, residual_interior_mass: 0.0 });
    }
    let row_tol = tol / height as f64;
    let mut rows: HashMap<i64, RowBuf> = HashMap::new();
    rows.entry(height).or_default().add(start[0], 1.0);
    let mut residual = 0.0;

    for y in (1..=height).rev() {
        let Some(mut pending) = rows.remove(&y) else { continue };
        loop {
            let mut same = RowBuf::default();
            for (x, m) in pending.entries() {
                for (z, p) in &steps {
                    let v = m * p;
                    if z[1] == 0 {
                        same.add(x + z[0], v);
                    } else {
                        rows.entry(y + z[1]).or_default().add(x + z[0], v);
                    }
                }
            }
            if within == 0.0 {
                break;
            }
            let left = same.total();
            if left < row_tol {
                residual += left;
                break;
            }
            pending = same;
        }
    }

    let mut masses: Vec<([i64; 2], f64)> = rows
        .iter()
        .flat_map(|(y, buf)| buf.entries().map(move |(x, m)| ([x, *y], m)))
        .filter(|(_, m)| *m > 0.0)
        .collect();
    masses.sort_by(|a, b| (a.0[1], a.0[0]).cmp(&(b.0[1], b.0[0])));
    let stopped: f64 = masses.iter().map(|(_, m)| m).sum();
    let defect = stopped + residual - 1.0;
    if defect.abs() > MASS_TOL {
        warn!("walk mass defect {defect:e}; renormalizing");
        let scale = (1.0 - residual) / stopped;
        masses.iter_mut().for_each(|(_, m)| *m *= scale);
    }
    Ok(WalkDensity { masses, start, residual_interior_mass: residual })
}

impl WalkDensity {
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().map(|(_, m)| m).sum()
    }

    /// Mean exit position `[E x, E y]`.
    pub fn mean(&self) -> [f64; 2] {
        let t = self.total_mass();
        let (mut mx, mut my) = (0.0, 0.0);
        for (z, m) in &self.masses {
            mx += m * z[0] as f64;
            my += m * z[1] as f64;
        }
        [mx / t, my / t]
    }

    /// Standard deviation of the exit x-coordinate, in pixels.
    pub fn std_x(&self) -> f64 {
        let t = self.total_mass();
        let mean = self.mean()[0];
        let var: f64 = self.masses.iter().map(|(z, m)| m * (z[0] as f64 - mean).powi(2)).sum::<f64>() / t;
        var.sqrt()
    }

    /// Density of the walk started `dx` pixels to the right.
    pub fn translated(&self, dx: i64) -> Self {
        Self {
            masses: self.masses.iter().map(|(z, m)| ([z[0] + dx, z[1]], *m)).collect(),
            start: [self.start[0] + dx, self.start[1]],
            residual_interior_mass: self.residual_interior_mass,
        }
    }

    /// Mass per exit position as a map, for comparisons.
    pub fn as_map(&self) -> BTreeMap<[i64; 2], f64> {
        let mut out = BTreeMap::new();
        for (z, m) in &self.masses {
            *out.entry(*z).or_insert(0.0) += m;
        }
        out
    }

    /// Total-variation distance between two exit densities.
    pub fn tv_distance(&self, other: &Self) -> f64 {
        let mut a = self.as_map();
        for (z, m) in other.as_map() {
            *a.entry(z).or_insert(0.0) -= m;
        }
        0.5 * a.values().map(|v| v.abs()).sum::<f64>()
    }

    /// CSV `dx,dy,mass` relative to the start.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("dx,dy,mass\n");
        for (z, m) in &self.masses {
            let _ = writeln!(s, "{},{},{:.16e}", z[0] - self.start[0], z[1] - self.start[1], m);
        }
        s
    }
}

/// Mass-weighted average of the data rows of `grid`, where `top_row` is the
/// grid row with y-index 0.
pub fn expected_color(density: &WalkDensity, grid: &PixelGrid, top_row: usize) -> Result<Vec<f64>> {
    if density.residual_interior_mass > 1e-10 {
        warn!("walk residual {:e} limits accuracy", density.residual_interior_mass);
    }
    let w = grid.width() as i64;
    let mut acc = vec![0.0; grid.channels()];
    for (z, m) in &density.masses {
        let j = top_row as i64 + z[1];
        if z[1] > 0 || j < 0 {
            return Err(Error::ContractViolation(format!("exit row {} outside the data strip", z[1])));
        }
        let i = match grid.boundary_mode() {
            BoundaryMode::PeriodicX => z[0].rem_euclid(w),
            BoundaryMode::DirichletX if (0..w).contains(&z[0]) => z[0],
            BoundaryMode::DirichletX => {
                return Err(Error::ContractViolation(format!("exit column {} outside the grid", z[0])))
            }
        };
        let px = grid.pixel(grid.geometry().index(i as usize, j as usize));
        for (a, v) in acc.iter_mut().zip(px) {
            *a += m * v;
        }
    }
    Ok(acc)
}

/// Empirical exit density from `samples` seeded walks.
pub fn monte_carlo(start: [i64; 2], eq: &EquivalentStencil, samples: usize, seed: u64) -> Result<WalkDensity> {
    monte_carlo_steps(start, &eq.step_distribution(), samples, seed)
}

pub fn monte_carlo_steps(start: [i64; 2], steps: &[([i64; 2], f64)], samples: usize, seed: u64) -> Result<WalkDensity> {
    validate_steps(steps, WalkMode::SemiImplicit)?;
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let dist = WeightedIndex::new(steps.iter().map(|(_, p)| *p)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let chunks = samples.div_ceil(MC_CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut hist: BTreeMap<[i64; 2], u64> = BTreeMap::new();
            for _ in 0..n {
                let mut p = start;
                while p[1] > 0 {
                    let z = steps[dist.sample(&mut rng)].0;
                    p = [p[0] + z[0], p[1] + z[1]];
                }
                *hist.entry(p).or_insert(0) += 1;
            }
            hist
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });
    let mut masses: Vec<_> = counts.into_iter().map(|(z, n)| (z, n as f64 / samples as f64)).collect();
    masses.sort_by(|a, b| (a.0[1], a.0[0]).cmp(&(b.0[1], b.0[0])));
    Ok(WalkDensity { masses, start, residual_interior_mass: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stencil::{MethodTag, Stencil};
    use crate::theory::{blur_sigma, TransportModel};

    fn uniform_half_ball(r: i64) -> Vec<([i64; 2], f64)> {
        let mut pts = Vec::new();
        for y in -r..=-1 {
            for x in -r..=r {
                if x * x + y * y <= r * r {
                    pts.push([x, y]);
                }
            }
        }
        let p = 1.0 / pts.len() as f64;
        pts.into_iter().map(|z| (z, p)).collect()
    }

    #[test]
    fn single_step_is_deterministic() {
        let d = stopped_density_steps([5, 7], &[([0, -1], 1.0)], WalkMode::Direct, DEFAULT_TOL).unwrap();
        assert_eq!(d.masses, vec![([5, 0], 1.0)]);
        let mc = monte_carlo_steps([5, 7], &[([0, -1], 1.0)], 1000, 3).unwrap();
        assert_eq!(mc.masses, vec![([5, 0], 1.0)]);
    }

    #[test]
    fn uniform_half_ball_exits_within_strip_and_matches_monte_carlo() {
        let steps = uniform_half_ball(3);
        let d = stopped_density_steps([0, 40], &steps, WalkMode::Direct, DEFAULT_TOL).unwrap();
        assert!(d.masses.iter().all(|(z, _)| (-3..=0).contains(&z[1])));
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
        let mc = monte_carlo_steps([0, 40], &steps, 1_000_000, 11).unwrap();
        assert!(d.tv_distance(&mc) < 0.01, "tv {}", d.tv_distance(&mc));
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let steps = uniform_half_ball(2);
        let a = monte_carlo_steps([0, 10], &steps, 50_000, 9).unwrap();
        let b = monte_carlo_steps([0, 10], &steps, 50_000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn semi_implicit_matches_row_collapsed_chain() {
        // Within-row: stay with 0.1, step right with 0.2. Down: 0.7 split.
        let (a, b) = (0.1, 0.2);
        let down = [([-1, -1], 0.3), ([0, -1], 0.25), ([1, -2], 0.15)];
        let mut steps = vec![([0, 0], a), ([1, 0], b)];
        steps.extend(down);
        let d = stopped_density_steps([0, 12], &steps, WalkMode::SemiImplicit, DEFAULT_TOL).unwrap();
        assert!(d.residual_interior_mass < DEFAULT_TOL);

        // Resolvent of the within-row chain: b^k / (1-a)^(k+1) at shift k.
        let mut collapsed: BTreeMap<[i64; 2], f64> = BTreeMap::new();
        let mut k = 0;
        loop {
            let pk = b.powi(k) / (1.0 - a).powi(k + 1);
            if pk < 1e-20 {
                break;
            }
            for (z, p) in &down {
                *collapsed.entry([z[0] + k as i64, z[1]]).or_insert(0.0) += pk * p;
            }
            k += 1;
        }
        let total: f64 = collapsed.values().sum();
        let csteps: Vec<_> = collapsed.into_iter().map(|(z, p)| (z, p / total)).collect();
        let oracle = stopped_density_steps([0, 12], &csteps, WalkMode::Direct, DEFAULT_TOL).unwrap();
        let (ma, mb) = (d.as_map(), oracle.as_map());
        for z in ma.keys().chain(mb.keys()) {
            let diff = ma.get(z).unwrap_or(&0.0) - mb.get(z).unwrap_or(&0.0);
            assert!(diff.abs() < 1e-10, "{z:?}: {diff:e}");
        }
    }

    #[test]
    fn direct_mode_rejects_within_row_steps() {
        let steps = [([1, 0], 0.5), ([0, -1], 0.5)];
        assert!(stopped_density_steps([0, 3], &steps, WalkMode::Direct, DEFAULT_TOL).is_err());
        let up = [([0, 1], 0.5), ([0, -1], 0.5)];
        assert!(matches!(
            stopped_density_steps([0, 3], &[([0, 0], 1.0)], WalkMode::SemiImplicit, DEFAULT_TOL),
            Err(Error::IllPosed(_))
        ));
        assert!(stopped_density_steps([0, 3], &up, WalkMode::SemiImplicit, DEFAULT_TOL).is_err());
    }

    #[test]
    fn mean_follows_wald_geometry() {
        let s = Stencil::symmetric(MethodTag::Guidefill, 3, [35f64.to_radians().cos(), 35f64.to_radians().sin()], 100.0).unwrap();
        let eq = s.equivalent();
        let model = TransportModel::from_equivalent(&eq).unwrap();
        let k = 60;
        let d = stopped_density([0, k], &eq, WalkMode::Direct, DEFAULT_TOL).unwrap();
        let [ex, ey] = d.mean();
        let slope = model.mu_x / model.mu_y;
        assert!((ex - slope * (ey - k as f64)).abs() < 1e-9);
        assert!((ex - slope * -(k as f64)).abs() <= 5.0 * slope.abs() + 1e-9);
    }

    #[test]
    fn spread_matches_blur_sigma_deep_in_the_domain() {
        let g = [30f64.to_radians().cos(), 30f64.to_radians().sin()];
        let s = Stencil::symmetric(MethodTag::Guidefill, 3, g, 100.0).unwrap();
        let eq = s.equivalent();
        let model = TransportModel::from_equivalent(&eq).unwrap();
        let k = 300;
        let d = stopped_density([0, k], &eq, WalkMode::Direct, DEFAULT_TOL).unwrap();
        let h = 1.0 / 512.0;
        let sigma = blur_sigma(&model, k as f64 * h, h).unwrap() / h;
        let rel = (d.std_x() - sigma).abs() / sigma;
        assert!(rel < 0.05, "std {} vs sigma {}", d.std_x(), sigma);
    }

    #[test]
    fn csv_is_relative_to_start() {
        let d = stopped_density_steps([4, 2], &[([1, -1], 1.0)], WalkMode::Direct, DEFAULT_TOL).unwrap();
        assert_eq!(d.to_csv(), "dx,dy,mass\n2,-2,1.0000000000000000e0\n");
    }
}
