//! Shell-by-shell weighted-average fill and Telea's gradient variant.

use log::{debug, warn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fill_policy::{classify, distance_transform, ready_set, tap_usable, Avail, DistanceField, ReadyConfig};
use crate::lattice::{FillState, PixelGrid};
use crate::stencil::{
    make_neighborhood, CompiledStencil, Guide, MethodTag, NeighborhoodKind, StencilProvider, Tap, Vec2,
};

#[derive(Clone, Debug)]
pub struct FillConfig {
    pub method: MethodTag,
    pub r: i64,
    pub mu: f64,
    pub guide: Guide,
    pub ready: ReadyConfig,
}

impl FillConfig {
    pub fn new(method: MethodTag, r: i64, mu: f64, guide: Guide) -> Self {
        Self {
            method,
            r,
            mu,
            guide,
            ready: ReadyConfig::default(),
        }
    }

    pub fn with_ready(mut self, ready: ReadyConfig) -> Self {
        self.ready = ready;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.r < 1 {
            return Err(Error::InvalidRadius(self.r));
        }
        if !(self.mu > 0.0) {
            return Err(Error::InvalidParameter(format!("mu must be positive, got {}", self.mu)));
        }
        self.ready.validate()
    }

    pub fn provider(&self) -> Result<StencilProvider> {
        StencilProvider::new(self.method, self.r, self.mu, self.guide.clone())
    }
}

/// Summary of a completed fill.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FillReport {
    pub shells: usize,
    pub filled: usize,
    /// Shells where the ready set was empty and the whole shell was used.
    pub onion_fallbacks: usize,
    /// Pixel visits postponed because no stencil point was usable.
    pub deferred: usize,
}

/// Weighted average at `idx` over the usable taps of `stencil`.
///
/// Reads only known and exterior sites, so the value does not depend on
/// the order in which pixels of a shell are written. Returns `false` when
/// no tap is usable.
pub fn direct_value(
    grid: &PixelGrid,
    state: &FillState,
    stencil: &CompiledStencil,
    idx: usize,
    out: &mut [f64],
) -> bool {
    let (ci, cj) = grid.geometry().coords(idx);
    let ext = grid.exterior();
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut sample = vec![0.0; out.len()];
    let mut accumulate = |taps: &[Tap], out: &mut [f64]| -> f64 {
        let mut den = 0.0;
        'taps: for tap in taps {
            sample.iter_mut().for_each(|v| *v = 0.0);
            for &(dx, dy, lam) in tap.corners() {
                match classify(grid, state, None, idx, ci as i64 + dx, cj as i64 + dy) {
                    Avail::Known(k) => {
                        for (s, v) in sample.iter_mut().zip(grid.pixel(k)) {
                            *s += lam * v;
                        }
                    }
                    Avail::Exterior => {
                        for (s, v) in sample.iter_mut().zip(ext.unwrap_or(&[])) {
                            *s += lam * v;
                        }
                    }
                    _ => continue 'taps,
                }
            }
            den += tap.weight;
            for (o, s) in out.iter_mut().zip(&sample) {
                *o += tap.weight * s;
            }
        }
        den
    };
    let mut den = accumulate(&stencil.taps, out);
    if den == 0.0 && !stencil.faint.is_empty() {
        den = accumulate(&stencil.rescued(|t| tap_usable(grid, state, None, idx, t)), out);
    }
    if den > 0.0 {
        out.iter_mut().for_each(|v| *v /= den);
        true
    } else {
        false
    }
}

/// Fill `pixels` (a subset of the active shell) from known data.
///
/// Returns the pixels that received a value; the rest stay active.
pub fn fill_pixels(
    grid: &mut PixelGrid,
    state: &FillState,
    provider: &StencilProvider,
    pixels: &[usize],
) -> Vec<usize> {
    let ch = grid.channels();
    let snapshot: &PixelGrid = grid;
    let values: Vec<Option<Vec<f64>>> = pixels
        .par_iter()
        .map(|&idx| {
            let (i, j) = snapshot.geometry().coords(idx);
            let mut out = vec![0.0; ch];
            direct_value(snapshot, state, &provider.at(i, j), idx, &mut out).then_some(out)
        })
        .collect();
    let mut done = Vec::with_capacity(pixels.len());
    for (&idx, v) in pixels.iter().zip(values) {
        if let Some(v) = v {
            grid.pixel_mut(idx).copy_from_slice(&v);
            done.push(idx);
        }
    }
    done
}

/// Pick the pixels of the current shell to fill, falling back to the whole
/// shell when the ready function selects nothing.
pub(crate) fn choose_ready(
    grid: &PixelGrid,
    state: &FillState,
    provider: &StencilProvider,
    ready: &ReadyConfig,
    report: &mut FillReport,
) -> Vec<usize> {
    let set = ready_set(grid, state, provider, ready);
    if set.is_empty() {
        warn!(
            "shell {}: no ready pixel among {}, filling the whole shell",
            state.shell_index(),
            state.active().len()
        );
        report.onion_fallbacks += 1;
        state.active().to_vec()
    } else {
        set
    }
}

/// Fill every unfilled pixel of `state`, shell by shell.
pub fn fill(grid: &mut PixelGrid, state: &mut FillState, cfg: &FillConfig) -> Result<FillReport> {
    cfg.validate()?;
    if cfg.method == MethodTag::Telea {
        return fill_telea(grid, state, &TeleaConfig::new(cfg.r));
    }
    let provider = cfg.provider()?;
    let mut report = FillReport::default();
    while !state.is_complete() {
        if state.active().is_empty() {
            return Err(Error::Stall {
                shell: state.shell_index(),
            });
        }
        let ready = choose_ready(grid, state, &provider, &cfg.ready, &mut report);
        let done = fill_pixels(grid, state, &provider, &ready);
        if done.is_empty() {
            return Err(Error::Stall {
                shell: state.shell_index(),
            });
        }
        report.deferred += ready.len() - done.len();
        report.filled += done.len();
        report.shells += 1;
        state.advance(&done)?;
    }
    debug!("filled {} pixels in {} shells", report.filled, report.shells);
    Ok(report)
}

/// Parameters of Telea's fill.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TeleaConfig {
    pub r: i64,
    /// Distance scale of the `dst` factor, pixels.
    pub d0: f64,
    /// Level-set scale of the `lev` factor, pixels.
    pub t0: f64,
    /// Clamp results to `[0, 1]`.
    pub clamp: bool,
}

impl TeleaConfig {
    pub fn new(r: i64) -> Self {
        Self {
            r,
            d0: 1.0,
            t0: 1.0,
            clamp: true,
        }
    }
}

const TELEA_DIR_FLOOR: f64 = 1e-6;

fn known_value<'a>(grid: &'a PixelGrid, state: &FillState, i: i64, j: i64) -> Option<&'a [f64]> {
    match classify(grid, state, None, usize::MAX, i, j) {
        Avail::Known(k) => Some(grid.pixel(k)),
        Avail::Exterior => grid.exterior(),
        _ => None,
    }
}

/// Gradient of the known data at a known pixel.
///
/// Central differences where both neighbors are known, one-sided where only
/// one is, zero otherwise; independently per axis.
fn known_gradient(grid: &PixelGrid, state: &FillState, i: i64, j: i64, c: usize) -> Vec2 {
    let Some(center) = known_value(grid, state, i, j) else {
        return [0.0, 0.0];
    };
    let u = center[c];
    let axis = |di: i64, dj: i64| {
        let plus = known_value(grid, state, i + di, j + dj).map(|v| v[c]);
        let minus = known_value(grid, state, i - di, j - dj).map(|v| v[c]);
        match (minus, plus) {
            (Some(a), Some(b)) => 0.5 * (b - a),
            (None, Some(b)) => b - u,
            (Some(a), None) => u - a,
            (None, None) => 0.0,
        }
    };
    [axis(1, 0), axis(0, 1)]
}

fn telea_value(
    grid: &PixelGrid,
    state: &FillState,
    dist: &DistanceField,
    offsets: &[Vec2],
    cfg: &TeleaConfig,
    idx: usize,
    out: &mut [f64],
) -> bool {
    let geom = grid.geometry();
    let (ci, cj) = geom.coords(idx);
    let n = dist.gradient(ci, cj);
    let tx = dist.pixel_units(idx);
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut den = 0.0;
    for d in offsets {
        let (yi, yj) = (ci as i64 + d[0] as i64, cj as i64 + d[1] as i64);
        let Some(uy) = known_value(grid, state, yi, yj) else {
            continue;
        };
        let len = d[0].hypot(d[1]);
        // x - y = -d
        let dir = ((-d[0] * n[0] - d[1] * n[1]) / len).abs().max(TELEA_DIR_FLOOR);
        let dst = cfg.d0 * cfg.d0 / (len * len);
        let ty = geom.resolve(yi, yj).map_or(0.0, |k| dist.pixel_units(k));
        let lev = cfg.t0 / (1.0 + (ty - tx).abs());
        let w = dir * dst * lev;
        den += w;
        for (c, o) in out.iter_mut().enumerate() {
            let g = known_gradient(grid, state, yi, yj, c);
            *o += w * (uy[c] - g[0] * d[0] - g[1] * d[1]);
        }
    }
    if den > 0.0 {
        for o in out.iter_mut() {
            *o /= den;
            if cfg.clamp {
                *o = o.clamp(0.0, 1.0);
            }
        }
        true
    } else {
        false
    }
}

/// Telea's fill in onion order with the gradient prediction term.
pub fn fill_telea(grid: &mut PixelGrid, state: &mut FillState, cfg: &TeleaConfig) -> Result<FillReport> {
    if cfg.r < 1 {
        return Err(Error::InvalidRadius(cfg.r));
    }
    let dist = distance_transform(state, grid.spacing_h())?;
    let offsets = make_neighborhood(NeighborhoodKind::Ball, cfg.r, None)?;
    let ch = grid.channels();
    let mut report = FillReport::default();
    while !state.is_complete() {
        let shell = state.active().to_vec();
        let snapshot: &PixelGrid = grid;
        let st: &FillState = state;
        let values: Vec<Option<Vec<f64>>> = shell
            .par_iter()
            .map(|&idx| {
                let mut out = vec![0.0; ch];
                telea_value(snapshot, st, &dist, &offsets, cfg, idx, &mut out).then_some(out)
            })
            .collect();
        let mut done = Vec::new();
        for (&idx, v) in shell.iter().zip(values) {
            if let Some(v) = v {
                grid.pixel_mut(idx).copy_from_slice(&v);
                done.push(idx);
            }
        }
        if done.is_empty() {
            return Err(Error::Stall {
                shell: state.shell_index(),
            });
        }
        report.deferred += shell.len() - done.len();
        report.filled += done.len();
        report.shells += 1;
        state.advance(&done)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fill_policy::ReadyPolicy;
    use crate::lattice::BoundaryMode;

    fn strip(w: usize, h: usize, rows: usize, ch: usize, f: impl Fn(usize, usize) -> Vec<f64>) -> (PixelGrid, FillState) {
        let mut g = PixelGrid::new(w, h, ch, 1.0 / w as f64, BoundaryMode::PeriodicX).unwrap();
        let geom = g.geometry();
        for j in 0..rows {
            for i in 0..w {
                g.pixel_mut(geom.index(i, j)).copy_from_slice(&f(i, j));
            }
        }
        let mask: Vec<bool> = (0..geom.len()).map(|k| k / w >= rows).collect();
        (g, FillState::from_mask(geom, &mask).unwrap())
    }

    #[test]
    fn constant_image_any_method() {
        for m in [
            MethodTag::CoherenceTransport,
            MethodTag::Guidefill,
            MethodTag::BoxGaussian,
            MethodTag::Telea,
        ] {
            let (mut g, mut s) = strip(16, 16, 4, 3, |_, _| vec![0.25, 0.5, 0.75]);
            fill(&mut g, &mut s, &FillConfig::new(m, 3, 10.0, Guide::from_angle(1.1))).unwrap();
            for k in 0..g.geometry().len() {
                for (c, want) in [0.25, 0.5, 0.75].iter().enumerate() {
                    assert!((g.pixel(k)[c] - want).abs() < 1e-15, "{m:?}");
                }
            }
        }
    }

    #[test]
    fn vertical_stripe_is_extended_exactly() {
        let (mut g, mut s) = strip(20, 30, 5, 1, |i, _| vec![if i % 5 == 2 { 1.0 } else { 0.0 }]);
        fill(&mut g, &mut s, &FillConfig::new(MethodTag::Guidefill, 3, 100.0, Guide::Constant([0.0, 1.0]))).unwrap();
        let geom = g.geometry();
        for j in 0..30 {
            for i in 0..20 {
                let want = if i % 5 == 2 { 1.0 } else { 0.0 };
                assert!((g.get(i, j, 0) - want).abs() < 1e-12);
            }
        }
        assert_eq!(geom.len(), 600);
    }

    #[test]
    fn guidefill_vertical_equals_coherence_transport() {
        let data = |i: usize, j: usize| vec![((i * 7 + j * 3) % 11) as f64 / 10.0];
        let (mut a, mut sa) = strip(24, 20, 4, 1, data);
        let (mut b, mut sb) = (a.clone(), sa.clone());
        fill(&mut a, &mut sa, &FillConfig::new(MethodTag::Guidefill, 3, 7.0, Guide::Constant([0.0, 1.0]))).unwrap();
        fill(&mut b, &mut sb, &FillConfig::new(MethodTag::CoherenceTransport, 3, 7.0, Guide::Constant([0.0, 1.0])))
            .unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn shell_order_does_not_matter() {
        let data = |i: usize, j: usize| vec![((i * 13 + j * 5) % 17) as f64 / 16.0];
        let (g0, s0) = strip(24, 12, 4, 1, data);
        let provider = FillConfig::new(MethodTag::Guidefill, 3, 20.0, Guide::from_angle(0.9)).provider().unwrap();
        let shell = s0.active().to_vec();
        let mut rev = shell.clone();
        rev.reverse();
        let mut shuffled = shell.clone();
        for k in 0..shuffled.len() {
            shuffled.swap(k, (k * 7919) % shell.len());
        }
        let mut outs = Vec::new();
        for order in [shell, rev, shuffled] {
            let mut g = g0.clone();
            let done = fill_pixels(&mut g, &s0, &provider, &order);
            assert_eq!(done.len(), order.len());
            outs.push(g);
        }
        assert_eq!(outs[0].data(), outs[1].data());
        assert_eq!(outs[0].data(), outs[2].data());
    }

    #[test]
    fn telea_extends_linear_ramp() {
        let (mut g, mut s) = strip(32, 10, 6, 1, |i, _| vec![i as f64 / 64.0]);
        // Dirichlet sides keep the ramp away from the periodic seam.
        let mut d = PixelGrid::new(32, 10, 1, 1.0 / 32.0, BoundaryMode::DirichletX).unwrap();
        d.data_mut().copy_from_slice(g.data());
        let mask = s.known_mask().iter().map(|k| !k).collect::<Vec<_>>();
        let mut ds = FillState::from_mask(d.geometry(), &mask).unwrap();
        fill_telea(&mut d, &mut ds, &TeleaConfig::new(2)).unwrap();
        for j in 6..10 {
            for i in 2..30 {
                assert!((d.get(i, j, 0) - i as f64 / 64.0).abs() < 1e-12, "({i},{j})");
            }
        }
        fill_telea(&mut g, &mut s, &TeleaConfig::new(2)).unwrap();
    }

    #[test]
    fn confidence_policy_completes() {
        let (mut g, mut s) = strip(16, 16, 3, 1, |i, _| vec![(i % 2) as f64]);
        let cfg = FillConfig::new(MethodTag::Guidefill, 3, 50.0, Guide::from_angle(0.2))
            .with_ready(ReadyConfig::new(ReadyPolicy::Confidence));
        let rep = fill(&mut g, &mut s, &cfg).unwrap();
        assert!(s.is_complete());
        assert_eq!(rep.filled, 16 * 13);
    }

    #[test]
    fn unreachable_pixels_stall() {
        let geom_w = 6;
        let mut g = PixelGrid::new(geom_w, 6, 1, 1.0, BoundaryMode::DirichletX).unwrap();
        g.fill_with(&[0.5]);
        let mask = vec![true; 36];
        let mut s = FillState::from_mask(g.geometry(), &mask).unwrap();
        let err = fill(&mut g, &mut s, &FillConfig::new(MethodTag::Guidefill, 2, 5.0, Guide::from_angle(1.0)));
        assert!(matches!(err, Err(Error::Stall { shell: 0 })));
    }

    #[test]
    fn underflowed_weights_still_fill() {
        let (mut g, mut s) = strip(24, 12, 4, 1, |i, k| vec![((i * 7 + k * 3) % 5) as f64]);
        let cfg = FillConfig::new(MethodTag::Guidefill, 2, 178.5, Guide::from_angle(27.7f64.to_radians()));
        let st = cfg.provider().unwrap().at(0, 0);
        assert!(!st.faint.is_empty());
        fill(&mut g, &mut s, &cfg).unwrap();
        assert!(s.is_complete());
        assert!(g.data().iter().all(|v| (0.0..=4.0).contains(v)));
    }

    #[test]
    fn invalid_config_rejected() {
        let (mut g, mut s) = strip(8, 8, 2, 1, |_, _| vec![0.0]);
        let mut cfg = FillConfig::new(MethodTag::Guidefill, 0, 5.0, Guide::from_angle(1.0));
        assert!(matches!(fill(&mut g, &mut s, &cfg), Err(Error::InvalidRadius(0))));
        cfg.r = 2;
        cfg.mu = 0.0;
        assert!(fill(&mut g, &mut s, &cfg).is_err());
    }
}
