//! Ready functions that decide which boundary pixels are filled in a shell,
//! plus the distance map used by Telea's weights.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{BoundaryMode, FillState, Geometry, PixelGrid, Site, Status};
use crate::stencil::{CompiledStencil, StencilProvider, Tap, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReadyPolicy {
    /// Every pixel of the current shell is ready.
    Onion,
    /// Ready when the known share of stencil weight exceeds the threshold.
    Confidence,
    /// Confidence that also credits ready pixels of the same shell.
    Coupled,
}

impl ReadyPolicy {
    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "onion" => ReadyPolicy::Onion,
            "confidence" => ReadyPolicy::Confidence,
            "coupled" => ReadyPolicy::Coupled,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReadyConfig {
    pub policy: ReadyPolicy,
    pub threshold_c: f64,
    pub max_iterations: usize,
}

impl Default for ReadyConfig {
    fn default() -> Self {
        Self {
            policy: ReadyPolicy::Onion,
            threshold_c: 0.05,
            max_iterations: 64,
        }
    }
}

impl ReadyConfig {
    pub fn new(policy: ReadyPolicy) -> Self {
        Self {
            policy,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_c > 0.0 && self.threshold_c < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold_c must lie in (0, 1), got {}",
                self.threshold_c
            )));
        }
        Ok(())
    }
}

/// Membership marks for the pixels of one shell, reused across shells.
#[derive(Clone, Debug)]
pub struct ShellMarks {
    slot: Vec<u32>,
    marked: Vec<usize>,
}

impl ShellMarks {
    pub fn new(len: usize) -> Self {
        Self {
            slot: vec![0; len],
            marked: Vec::new(),
        }
    }

    /// Mark `pixels`, remembering their positions in the slice.
    pub fn mark(&mut self, pixels: &[usize]) {
        self.clear();
        for (k, &p) in pixels.iter().enumerate() {
            self.slot[p] = k as u32 + 1;
        }
        self.marked.extend_from_slice(pixels);
    }

    pub fn clear(&mut self) {
        for &p in &self.marked {
            self.slot[p] = 0;
        }
        self.marked.clear();
    }

    /// Position of `idx` in the marked slice.
    #[inline]
    pub fn position(&self, idx: usize) -> Option<usize> {
        match self.slot[idx] {
            0 => None,
            k => Some(k as usize - 1),
        }
    }
}

/// What a lattice site contributes while filling a given pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Avail {
    Known(usize),
    Exterior,
    /// Unknown of the current shell system, by position.
    Shell(usize),
    /// The pixel being filled.
    Center,
    Missing,
}

impl Avail {
    #[inline]
    pub fn is_usable(self) -> bool {
        !matches!(self, Avail::Missing)
    }
}

/// Classify `(i, j)` relative to pixel `center`.
///
/// Without `shell` marks only known and exterior sites are usable, which is
/// the rule of the direct methods. With marks, marked pixels are usable too;
/// the center itself only when it is marked.
#[inline]
pub fn classify(
    grid: &PixelGrid,
    state: &FillState,
    shell: Option<&ShellMarks>,
    center: usize,
    i: i64,
    j: i64,
) -> Avail {
    match grid.site(i, j) {
        Site::Exterior => Avail::Exterior,
        Site::Absent => Avail::Missing,
        Site::Pixel(idx) => {
            if state.status(idx) == Status::Known {
                Avail::Known(idx)
            } else if let Some(marks) = shell {
                match marks.position(idx) {
                    Some(_) if idx == center => Avail::Center,
                    Some(k) => Avail::Shell(k),
                    None => Avail::Missing,
                }
            } else {
                Avail::Missing
            }
        }
    }
}

/// True when every corner of `tap` is usable.
#[inline]
pub fn tap_usable(
    grid: &PixelGrid,
    state: &FillState,
    shell: Option<&ShellMarks>,
    center: usize,
    tap: &Tap,
) -> bool {
    let (ci, cj) = grid.geometry().coords(center);
    tap.corners().iter().all(|&(dx, dy, _)| {
        classify(grid, state, shell, center, ci as i64 + dx, cj as i64 + dy).is_usable()
    })
}

fn share(
    grid: &PixelGrid,
    state: &FillState,
    stencil: &CompiledStencil,
    shell: Option<&ShellMarks>,
    idx: usize,
) -> f64 {
    let usable: f64 = stencil
        .taps
        .iter()
        .filter(|t| tap_usable(grid, state, shell, idx, t))
        .map(|t| t.weight)
        .sum();
    usable / stencil.total_weight
}

/// Share of the stencil weight at `idx` whose support is already known.
pub fn confidence(grid: &PixelGrid, state: &FillState, stencil: &CompiledStencil, idx: usize) -> f64 {
    share(grid, state, stencil, None, idx)
}

/// Ready subset of the current shell under the coupled rule.
///
/// Rounds evaluate every not-yet-ready pixel against the ready set of the
/// previous round and stop once the set stops growing or after
/// `max_iterations` rounds. Returns the ready pixels in index order and
/// the number of rounds run.
pub fn coupled_ready(
    grid: &PixelGrid,
    state: &FillState,
    provider: &StencilProvider,
    cfg: &ReadyConfig,
) -> (Vec<usize>, usize) {
    let shell = state.active();
    let mut ready = vec![false; shell.len()];
    let mut marks = ShellMarks::new(grid.geometry().len());
    let mut current: Vec<usize> = Vec::new();
    let mut rounds = 0;
    while rounds < cfg.max_iterations.max(1) {
        marks.mark(&current);
        let grown: Vec<bool> = shell
            .par_iter()
            .zip(ready.par_iter())
            .map(|(&idx, &r)| {
                r || {
                    let (i, j) = grid.geometry().coords(idx);
                    share(grid, state, &provider.at(i, j), Some(&marks), idx) > cfg.threshold_c
                }
            })
            .collect();
        rounds += 1;
        let grew = grown.iter().zip(&ready).any(|(a, b)| *a && !*b);
        ready = grown;
        current = shell
            .iter()
            .zip(&ready)
            .filter(|(_, r)| **r)
            .map(|(p, _)| *p)
            .collect();
        if !grew {
            break;
        }
    }
    (current, rounds)
}

/// Ready subset of the current shell under `cfg`.
pub fn ready_set(
    grid: &PixelGrid,
    state: &FillState,
    provider: &StencilProvider,
    cfg: &ReadyConfig,
) -> Vec<usize> {
    match cfg.policy {
        ReadyPolicy::Onion => state.active().to_vec(),
        ReadyPolicy::Confidence => state
            .active()
            .par_iter()
            .copied()
            .filter(|&idx| {
                let (i, j) = grid.geometry().coords(idx);
                confidence(grid, state, &provider.at(i, j), idx) > cfg.threshold_c
            })
            .collect(),
        ReadyPolicy::Coupled => coupled_ready(grid, state, provider, cfg).0,
    }
}

/// Euclidean distance of every pixel to the nearest known pixel.
#[derive(Clone, Debug)]
pub struct DistanceField {
    geom: Geometry,
    spacing_h: f64,
    /// Distances in pixel units.
    pixels: Vec<f64>,
}

impl DistanceField {
    /// Distance in physical units.
    pub fn value(&self, idx: usize) -> f64 {
        self.pixels[idx] * self.spacing_h
    }

    /// Distance in pixel units.
    pub fn pixel_units(&self, idx: usize) -> f64 {
        self.pixels[idx]
    }

    /// Gradient in pixel units: central differences, one-sided when only
    /// one neighbor along an axis is on the grid.
    pub fn gradient(&self, i: usize, j: usize) -> Vec2 {
        let at = |di: i64, dj: i64| {
            self.geom
                .resolve(i as i64 + di, j as i64 + dj)
                .map(|k| self.pixels[k])
                .filter(|v| v.is_finite())
        };
        let c = self.pixels[self.geom.index(i, j)];
        let diff = |minus: Option<f64>, plus: Option<f64>| match (minus, plus) {
            (Some(a), Some(b)) => 0.5 * (b - a),
            (None, Some(b)) => b - c,
            (Some(a), None) => c - a,
            (None, None) => 0.0,
        };
        [diff(at(-1, 0), at(1, 0)), diff(at(0, -1), at(0, 1))]
    }
}

/// Squared 1-D distance transform of `f` (lower envelope of parabolas).
fn edt_1d(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![f64::INFINITY; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0f64; n + 1];
    let Some(first) = f.iter().position(|x| x.is_finite()) else {
        return d;
    };
    let mut k = 0;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let mut k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
    d
}

/// Exact Euclidean distance transform of the known set of `state`.
///
/// Periodic grids wrap in x. Off-grid positions are never known.
pub fn distance_transform(state: &FillState, spacing_h: f64) -> Result<DistanceField> {
    let geom = state.geometry();
    let (w, h) = (geom.width, geom.height);
    if !(0..geom.len()).any(|k| state.is_known(k)) {
        return Err(Error::InvalidParameter("distance transform needs a known pixel".into()));
    }
    let mut cols = vec![f64::INFINITY; geom.len()];
    let columns: Vec<Vec<f64>> = (0..w)
        .into_par_iter()
        .map(|i| {
            let f: Vec<f64> = (0..h)
                .map(|j| if state.is_known(geom.index(i, j)) { 0.0 } else { f64::INFINITY })
                .collect();
            edt_1d(&f)
        })
        .collect();
    for (i, col) in columns.iter().enumerate() {
        for (j, v) in col.iter().enumerate() {
            cols[geom.index(i, j)] = *v;
        }
    }
    let periodic = geom.mode == BoundaryMode::PeriodicX;
    let rows: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map(|j| {
            let row = &cols[j * w..(j + 1) * w];
            if periodic {
                let tiled: Vec<f64> = (0..3 * w).map(|k| row[k % w]).collect();
                edt_1d(&tiled)[w..2 * w].to_vec()
            } else {
                edt_1d(row)
            }
        })
        .collect();
    let pixels = rows.into_iter().flatten().map(f64::sqrt).collect();
    Ok(DistanceField {
        geom,
        spacing_h,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stencil::{Guide, MethodTag, Stencil};

    fn strip(w: usize, h: usize, known_rows: usize) -> (PixelGrid, FillState) {
        let geom = Geometry::new(w, h, BoundaryMode::PeriodicX);
        let mask: Vec<bool> = (0..geom.len()).map(|k| k / w >= known_rows).collect();
        let grid = PixelGrid::new(w, h, 1, 1.0 / w as f64, BoundaryMode::PeriodicX).unwrap();
        (grid, FillState::from_mask(geom, &mask).unwrap())
    }

    #[test]
    fn confidence_extremes() {
        let (grid, state) = strip(8, 8, 3);
        let st = CompiledStencil::from(&Stencil::symmetric(MethodTag::Guidefill, 1, [0.0, 1.0], 4.0).unwrap());
        let first = state.active()[0];
        assert_eq!(confidence(&grid, &state, &st, first), 1.0);
        let full = CompiledStencil::from(&Stencil::for_method(MethodTag::Guidefill, 2, [0.0, 1.0], 4.0).unwrap());
        let top = grid.geometry().index(4, 7);
        assert_eq!(confidence(&grid, &state, &full, top), 0.0);
        let mask = vec![false; 64];
        let all = FillState::from_mask(grid.geometry(), &mask).unwrap();
        let mid = grid.geometry().index(4, 4);
        assert_eq!(confidence(&grid, &all, &full, mid), 1.0);
    }

    fn shallow_line_setup() -> (PixelGrid, FillState, StencilProvider) {
        // Known rows at the bottom with a fixed exterior on the sides: at
        // 2 degrees each shell pixel leans on its left neighbor in the shell.
        let geom = Geometry::new(40, 12, BoundaryMode::DirichletX);
        let mask: Vec<bool> = (0..geom.len())
            .map(|k| {
                let (i, j) = geom.coords(k);
                let _ = i;
                j >= 3
            })
            .collect();
        let grid = PixelGrid::new(40, 12, 1, 1.0 / 40.0, BoundaryMode::DirichletX)
            .unwrap()
            .with_exterior(vec![0.0])
            .unwrap();
        let state = FillState::from_mask(geom, &mask).unwrap();
        let t = 2f64.to_radians();
        let p = StencilProvider::new(
            MethodTag::GuidefillSemiImplicit,
            3,
            100.0,
            Guide::Constant([t.cos(), t.sin()]),
        )
        .unwrap();
        (grid, state, p)
    }

    fn brute_ready(grid: &PixelGrid, state: &FillState, p: &StencilProvider, c: f64, credit: Option<&[usize]>) -> Vec<usize> {
        state
            .active()
            .iter()
            .copied()
            .filter(|&idx| {
                let (i, j) = grid.geometry().coords(idx);
                let st = p.at(i, j);
                let mut num = 0.0;
                for t in &st.taps {
                    let ok = t.corners().iter().all(|&(dx, dy, _)| match grid.site(i as i64 + dx, j as i64 + dy) {
                        Site::Pixel(k) => state.is_known(k) || credit.is_some_and(|r| r.contains(&k)),
                        Site::Exterior => true,
                        Site::Absent => false,
                    });
                    if ok {
                        num += t.weight;
                    }
                }
                num / st.total_weight > c
            })
            .collect()
    }

    #[test]
    fn coupled_first_round_is_plain_confidence() {
        let (grid, state, p) = shallow_line_setup();
        let cfg = ReadyConfig {
            policy: ReadyPolicy::Coupled,
            threshold_c: 0.05,
            max_iterations: 1,
        };
        let (one, rounds) = coupled_ready(&grid, &state, &p, &cfg);
        assert_eq!(rounds, 1);
        let plain = ready_set(&grid, &state, &p, &ReadyConfig::new(ReadyPolicy::Confidence));
        assert_eq!(one, plain);
        assert_eq!(plain, brute_ready(&grid, &state, &p, 0.05, None));
    }

    #[test]
    fn coupled_grows_on_shallow_line() {
        let (grid, state, p) = shallow_line_setup();
        let cfg = ReadyConfig::new(ReadyPolicy::Coupled);
        let plain = ready_set(&grid, &state, &p, &ReadyConfig::new(ReadyPolicy::Confidence));
        let (coupled, _) = coupled_ready(&grid, &state, &p, &cfg);
        assert!(plain.iter().all(|x| coupled.contains(x)));
        assert!(coupled.len() > plain.len(), "{} vs {}", coupled.len(), plain.len());
        // The result is a fixed point of the coupled rule.
        let again = brute_ready(&grid, &state, &p, 0.05, Some(&coupled));
        assert_eq!(again, coupled);
    }

    #[test]
    fn coupled_on_full_shell_stops_fast() {
        let (grid, state) = strip(16, 8, 3);
        let p = StencilProvider::new(MethodTag::GuidefillSemiImplicit, 3, 100.0, Guide::from_angle(1.2)).unwrap();
        let (set, rounds) = coupled_ready(&grid, &state, &p, &ReadyConfig::new(ReadyPolicy::Coupled));
        assert_eq!(set, state.active());
        assert_eq!(rounds, 2);
        let plain = ready_set(&grid, &state, &p, &ReadyConfig::new(ReadyPolicy::Confidence));
        assert_eq!(plain, set);
    }

    #[test]
    fn distance_on_strip() {
        let (_, state) = strip(8, 10, 4);
        let d = distance_transform(&state, 0.125).unwrap();
        let g = state.geometry();
        for j in 0..10 {
            for i in 0..8 {
                let want = if j < 4 { 0.0 } else { (j - 3) as f64 * 0.125 };
                assert!((d.value(g.index(i, j)) - want).abs() < 1e-15);
            }
        }
        assert_eq!(d.gradient(3, 6), [0.0, 1.0]);
    }

    #[test]
    fn distance_matches_brute_force_on_disc() {
        let geom = Geometry::new(32, 32, BoundaryMode::DirichletX);
        let mask: Vec<bool> = (0..geom.len())
            .map(|k| {
                let (i, j) = geom.coords(k);
                let (x, y) = (i as f64 - 15.5, j as f64 - 15.5);
                x * x + y * y < 121.0
            })
            .collect();
        let state = FillState::from_mask(geom, &mask).unwrap();
        let d = distance_transform(&state, 1.0 / 32.0).unwrap();
        let known: Vec<(f64, f64)> = (0..geom.len())
            .filter(|&k| !mask[k])
            .map(|k| {
                let (i, j) = geom.coords(k);
                (i as f64, j as f64)
            })
            .collect();
        for k in 0..geom.len() {
            let (i, j) = geom.coords(k);
            let brute = known
                .iter()
                .map(|(a, b)| (a - i as f64).hypot(b - j as f64))
                .fold(f64::INFINITY, f64::min);
            assert!((d.pixel_units(k) - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_needs_known_pixel() {
        let geom = Geometry::new(4, 4, BoundaryMode::PeriodicX);
        let state = FillState::from_mask(geom, &[true; 16]).unwrap();
        assert!(distance_transform(&state, 0.25).is_err());
    }

    #[test]
    fn periodic_distance_wraps() {
        let geom = Geometry::new(10, 1, BoundaryMode::PeriodicX);
        let mut mask = vec![true; 10];
        mask[0] = false;
        let state = FillState::from_mask(geom, &mask).unwrap();
        let d = distance_transform(&state, 1.0).unwrap();
        assert_eq!(d.pixel_units(9), 1.0);
        assert_eq!(d.pixel_units(5), 5.0);
    }

    #[test]
    fn threshold_validation() {
        let mut c = ReadyConfig::default();
        assert!(c.validate().is_ok());
        c.threshold_c = 1.0;
        assert!(c.validate().is_err());
    }
}
