//! Pixel grids, fill masks, discrete boundaries and discrete norms.
//!
//! Pixels are indexed by `(i, j)` with `i` the column and `j` the row, row 0
//! at the bottom. Positions outside the grid are never known: they take no
//! part in boundary detection and contribute nothing to any sum. The one
//! exception is [`BoundaryMode::PeriodicX`], which wraps columns.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};

/// Treatment of the left and right image edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryMode {
    PeriodicX,
    DirichletX,
}

/// Shape and edge handling shared by grids and fill states.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Geometry {
    pub width: usize,
    pub height: usize,
    pub mode: BoundaryMode,
}

impl Geometry {
    pub fn new(width: usize, height: usize, mode: BoundaryMode) -> Self {
        Self { width, height, mode }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    /// Linear index of `(i, j)` after column wrapping, or `None` off-grid.
    #[inline]
    pub fn resolve(&self, i: i64, j: i64) -> Option<usize> {
        if j < 0 || j >= self.height as i64 {
            return None;
        }
        let w = self.width as i64;
        let i = match self.mode {
            BoundaryMode::PeriodicX => i.rem_euclid(w),
            BoundaryMode::DirichletX => {
                if i < 0 || i >= w {
                    return None;
                }
                i
            }
        };
        Some(j as usize * self.width + i as usize)
    }

    /// True when `(i, j)` lies left or right of the grid in Dirichlet mode.
    #[inline]
    pub fn is_side_exterior(&self, i: i64, j: i64) -> bool {
        self.mode == BoundaryMode::DirichletX
            && j >= 0
            && j < self.height as i64
            && (i < 0 || i >= self.width as i64)
    }
}

/// Where a lattice position lands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Site {
    Pixel(usize),
    /// Left or right of the grid with a fixed Dirichlet value.
    Exterior,
    Absent,
}

/// Multi-channel scalar field on a square lattice of spacing `spacing_h`.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelGrid {
    geom: Geometry,
    channels: usize,
    spacing_h: f64,
    data: Vec<f64>,
    exterior: Option<Vec<f64>>,
}

impl PixelGrid {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        spacing_h: f64,
        mode: BoundaryMode,
    ) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidParameter(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if !(spacing_h > 0.0 && spacing_h.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "spacing must be positive, got {spacing_h}"
            )));
        }
        Ok(Self {
            geom: Geometry::new(width, height, mode),
            channels,
            spacing_h,
            data: vec![0.0; width * height * channels],
            exterior: None,
        })
    }

    /// Attach a constant color read at Dirichlet side positions.
    pub fn with_exterior(mut self, value: Vec<f64>) -> Result<Self> {
        if value.len() != self.channels {
            return Err(Error::SizeMismatch(format!(
                "exterior has {} channels, grid has {}",
                value.len(),
                self.channels
            )));
        }
        self.exterior = Some(value);
        Ok(self)
    }

    pub fn exterior(&self) -> Option<&[f64]> {
        self.exterior.as_deref()
    }

    pub fn geometry(&self) -> Geometry {
        self.geom
    }

    pub fn width(&self) -> usize {
        self.geom.width
    }

    pub fn height(&self) -> usize {
        self.geom.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn spacing_h(&self) -> f64 {
        self.spacing_h
    }

    pub fn boundary_mode(&self) -> BoundaryMode {
        self.geom.mode
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn site(&self, i: i64, j: i64) -> Site {
        match self.geom.resolve(i, j) {
            Some(idx) => Site::Pixel(idx),
            None if self.exterior.is_some() && self.geom.is_side_exterior(i, j) => Site::Exterior,
            None => Site::Absent,
        }
    }

    #[inline]
    pub fn pixel(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.channels..(idx + 1) * self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, idx: usize) -> &mut [f64] {
        let c = self.channels;
        &mut self.data[idx * c..(idx + 1) * c]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[self.geom.index(i, j) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, c: usize, v: f64) {
        let idx = self.geom.index(i, j) * self.channels + c;
        self.data[idx] = v;
    }

    /// Fill every channel of every pixel with `value`.
    pub fn fill_with(&mut self, value: &[f64]) {
        for px in self.data.chunks_mut(self.channels) {
            px.copy_from_slice(value);
        }
    }

    /// Per-channel `(min, max)` over the given pixels.
    pub fn channel_range(&self, pixels: impl IntoIterator<Item = usize>) -> Vec<(f64, f64)> {
        let mut out = vec![(f64::INFINITY, f64::NEG_INFINITY); self.channels];
        for idx in pixels {
            for (c, v) in self.pixel(idx).iter().enumerate() {
                out[c].0 = out[c].0.min(*v);
                out[c].1 = out[c].1.max(*v);
            }
        }
        out
    }

    /// True when every stored value is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Load an 8-bit PNG. Color images become 3 channels, gray images 1.
    pub fn read_png(path: &Path, spacing_h: f64, mode: BoundaryMode) -> Result<Self> {
        let img = image::open(path)?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let channels = if img.color().has_color() { 3 } else { 1 };
        let mut grid = Self::new(w, h, channels, spacing_h, mode)?;
        if channels == 3 {
            let rgb = img.to_rgb8();
            for (x, y, p) in rgb.enumerate_pixels() {
                let j = h - 1 - y as usize;
                for c in 0..3 {
                    grid.set(x as usize, j, c, p.0[c] as f64 / 255.0);
                }
            }
        } else {
            let luma = img.to_luma8();
            for (x, y, p) in luma.enumerate_pixels() {
                grid.set(x as usize, h - 1 - y as usize, 0, p.0[0] as f64 / 255.0);
            }
        }
        Ok(grid)
    }

    /// Write an 8-bit PNG, clamping values to `[0, 1]`.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let (w, h) = (self.width() as u32, self.height() as u32);
        let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        if self.channels == 3 {
            let img = image::RgbImage::from_fn(w, h, |x, y| {
                let j = (h - 1 - y) as usize;
                let p = self.pixel(self.geom.index(x as usize, j));
                image::Rgb([q(p[0]), q(p[1]), q(p[2])])
            });
            img.save(path)?;
        } else {
            let img = image::GrayImage::from_fn(w, h, |x, y| {
                let j = (h - 1 - y) as usize;
                image::Luma([q(self.get(x as usize, j, 0))])
            });
            img.save(path)?;
        }
        Ok(())
    }
}

/// Read a mask PNG; a pixel is unfilled when its gray value is at least 0.5.
pub fn read_mask_png(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let luma = image::open(path)?.to_luma8();
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    let mut mask = vec![false; w * h];
    for (x, y, p) in luma.enumerate_pixels() {
        let j = h - 1 - y as usize;
        mask[j * w + x as usize] = p.0[0] as f64 / 255.0 >= 0.5;
    }
    Ok((w, h, mask))
}

/// Write a boolean mask as a black/white PNG (white = unfilled).
pub fn write_mask_png(path: &Path, width: usize, height: usize, mask: &[bool]) -> Result<()> {
    let img = image::GrayImage::from_fn(width as u32, height as u32, |x, y| {
        let j = height - 1 - y as usize;
        image::Luma([if mask[j * width + x as usize] { 255 } else { 0 }])
    });
    img.save(path)?;
    Ok(())
}

/// Per-pixel fill status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Known,
    Unfilled,
    Active,
}

/// Status of every pixel plus the shell counter.
#[derive(Clone, Debug)]
pub struct FillState {
    geom: Geometry,
    status: Vec<Status>,
    active: Vec<usize>,
    shell_index: usize,
    unfilled_count: usize,
}

const NEIGHBORS_9: [(i64, i64); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

impl FillState {
    /// Build from a mask where `true` marks pixels to inpaint.
    pub fn from_mask(geom: Geometry, unfilled: &[bool]) -> Result<Self> {
        if unfilled.len() != geom.len() {
            return Err(Error::SizeMismatch(format!(
                "mask has {} pixels, grid has {}",
                unfilled.len(),
                geom.len()
            )));
        }
        let status: Vec<Status> = unfilled
            .iter()
            .map(|&u| if u { Status::Unfilled } else { Status::Known })
            .collect();
        let unfilled_count = unfilled.iter().filter(|&&u| u).count();
        let mut state = Self {
            geom,
            status,
            active: Vec::new(),
            shell_index: 0,
            unfilled_count,
        };
        state.active = state.inner_boundary();
        for &a in &state.active {
            state.status[a] = Status::Active;
        }
        Ok(state)
    }

    pub fn geometry(&self) -> Geometry {
        self.geom
    }

    #[inline]
    pub fn status(&self, idx: usize) -> Status {
        self.status[idx]
    }

    #[inline]
    pub fn is_known(&self, idx: usize) -> bool {
        self.status[idx] == Status::Known
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn shell_index(&self) -> usize {
        self.shell_index
    }

    pub fn unfilled_count(&self) -> usize {
        self.unfilled_count
    }

    pub fn is_complete(&self) -> bool {
        self.unfilled_count == 0
    }

    pub fn known_mask(&self) -> Vec<bool> {
        self.status.iter().map(|s| *s == Status::Known).collect()
    }

    fn has_known_neighbor(&self, idx: usize) -> bool {
        let (i, j) = self.geom.coords(idx);
        NEIGHBORS_9.iter().any(|&(di, dj)| {
            self.geom
                .resolve(i as i64 + di, j as i64 + dj)
                .is_some_and(|n| self.status[n] == Status::Known)
        })
    }

    /// Unfilled pixels with at least one known 9-neighbor, in index order.
    pub fn inner_boundary(&self) -> Vec<usize> {
        (0..self.geom.len())
            .filter(|&idx| self.status[idx] != Status::Known && self.has_known_neighbor(idx))
            .collect()
    }

    /// Mark `filled` as known and move to the next shell.
    ///
    /// `filled` must be a nonempty subset of the active set whenever the
    /// active set is nonempty.
    pub fn advance(&mut self, filled: &[usize]) -> Result<()> {
        if filled.is_empty() && !self.active.is_empty() {
            return Err(Error::ContractViolation(format!(
                "empty fill at shell {} with {} active pixels",
                self.shell_index,
                self.active.len()
            )));
        }
        for &f in filled {
            if f >= self.status.len() || self.status[f] != Status::Active {
                return Err(Error::ContractViolation(format!(
                    "pixel {f} is not in the active set"
                )));
            }
        }
        for &f in filled {
            self.status[f] = Status::Known;
        }
        self.unfilled_count -= filled.len();
        let mut next: BTreeSet<usize> = self
            .active
            .iter()
            .copied()
            .filter(|&a| self.status[a] == Status::Active)
            .collect();
        for &f in filled {
            let (i, j) = self.geom.coords(f);
            for &(di, dj) in &NEIGHBORS_9 {
                if let Some(n) = self.geom.resolve(i as i64 + di, j as i64 + dj) {
                    if self.status[n] == Status::Unfilled {
                        self.status[n] = Status::Active;
                        next.insert(n);
                    }
                }
            }
        }
        self.active = next.into_iter().collect();
        self.shell_index += 1;
        Ok(())
    }
}

/// Union of the 9-point neighborhoods of `points`.
pub fn dilate(points: &[(i64, i64)]) -> BTreeSet<(i64, i64)> {
    let mut out = BTreeSet::new();
    for &(x, y) in points {
        for dy in -1..=1 {
            for dx in -1..=1 {
                out.insert((x + dx, y + dy));
            }
        }
    }
    out
}

/// Discrete `L^p` norm `(Σ|f|^p h²)^(1/p)`, or `max|f|` for `p = ∞`.
pub fn lp_norm(values: &[f64], p: f64, spacing_h: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidParameter(format!("norm exponent {p} < 1")));
    }
    if values.is_empty() {
        return Ok(0.0);
    }
    if p.is_infinite() {
        return Ok(values.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let h2 = spacing_h * spacing_h;
    let sum: f64 = if p == 1.0 {
        values.iter().map(|v| v.abs()).sum()
    } else if p == 2.0 {
        values.iter().map(|v| v * v).sum()
    } else {
        values.iter().map(|v| v.abs().powf(p)).sum()
    };
    Ok((sum * h2).powf(1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_mask(n: usize, lo: usize, hi: usize) -> Vec<bool> {
        let mut m = vec![false; n * n];
        for j in lo..hi {
            for i in lo..hi {
                m[j * n + i] = true;
            }
        }
        m
    }

    #[test]
    fn strip_boundary_is_bottom_row() {
        let g = Geometry::new(8, 6, BoundaryMode::PeriodicX);
        let mask: Vec<bool> = (0..48).map(|k| k / 8 >= 2).collect();
        let st = FillState::from_mask(g, &mask).unwrap();
        assert_eq!(st.active(), &(16..24).collect::<Vec<_>>()[..]);
    }

    #[test]
    fn single_hole_is_its_own_boundary() {
        let g = Geometry::new(5, 5, BoundaryMode::DirichletX);
        let mut mask = vec![false; 25];
        mask[12] = true;
        let st = FillState::from_mask(g, &mask).unwrap();
        assert_eq!(st.inner_boundary(), vec![12]);
    }

    #[test]
    fn ten_square_ring_matches_brute_force() {
        let n = 14;
        let g = Geometry::new(n, n, BoundaryMode::DirichletX);
        let mask = square_mask(n, 2, 12);
        let st = FillState::from_mask(g, &mask).unwrap();
        let mut brute = Vec::new();
        for idx in 0..n * n {
            if !mask[idx] {
                continue;
            }
            let (i, j) = (idx % n, idx / n);
            let mut hit = false;
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if a >= 0 && b >= 0 && a < n as i64 && b < n as i64 {
                        hit |= !mask[b as usize * n + a as usize];
                    }
                }
            }
            if hit {
                brute.push(idx);
            }
        }
        assert_eq!(brute.len(), 36);
        assert_eq!(st.inner_boundary(), brute);
    }

    #[test]
    fn dilate_examples() {
        assert_eq!(dilate(&[(0, 0)]).len(), 9);
        assert!(dilate(&[]).is_empty());
    }

    #[test]
    fn lp_norm_examples() {
        let n = 16;
        let h = 1.0 / n as f64;
        let ones = vec![1.0; n * n];
        for p in [1.0, 2.0, 3.5] {
            assert!((lp_norm(&ones, p, h).unwrap() - 1.0).abs() < 1e-12);
        }
        assert_eq!(lp_norm(&[0.0, 2.0, -1.0], f64::INFINITY, 0.1).unwrap(), 2.0);
        let v = lp_norm(&[1.0, 2.0, 3.0, 4.0], 2.0, 0.5).unwrap();
        assert!((v - 7.5f64.sqrt()).abs() < 1e-14);
        assert_eq!(lp_norm(&[], 2.0, 0.5).unwrap(), 0.0);
        assert!(lp_norm(&[1.0], 0.5, 0.5).is_err());
    }

    #[test]
    fn sixteen_square_takes_eight_shells() {
        let n = 20;
        let g = Geometry::new(n, n, BoundaryMode::DirichletX);
        let mut st = FillState::from_mask(g, &square_mask(n, 2, 18)).unwrap();
        let mut shells = 0;
        while !st.is_complete() {
            let a = st.active().to_vec();
            st.advance(&a).unwrap();
            shells += 1;
        }
        assert_eq!(shells, 8);
    }

    #[test]
    fn strip_advance_moves_up() {
        let g = Geometry::new(4, 5, BoundaryMode::PeriodicX);
        let mask: Vec<bool> = (0..20).map(|k| k / 4 >= 1).collect();
        let mut st = FillState::from_mask(g, &mask).unwrap();
        let a = st.active().to_vec();
        st.advance(&a).unwrap();
        assert_eq!(st.active(), &[8, 9, 10, 11]);
        assert_eq!(st.shell_index(), 1);
        assert_eq!(st.unfilled_count(), 12);
    }

    #[test]
    fn empty_fill_is_contract_violation() {
        let g = Geometry::new(4, 4, BoundaryMode::PeriodicX);
        let mask: Vec<bool> = (0..16).map(|k| k / 4 >= 1).collect();
        let mut st = FillState::from_mask(g, &mask).unwrap();
        assert!(matches!(st.advance(&[]), Err(Error::ContractViolation(_))));
        assert!(matches!(st.advance(&[0]), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn out_of_image_is_never_known() {
        let g = Geometry::new(3, 3, BoundaryMode::DirichletX);
        let st = FillState::from_mask(g, &[true; 9]).unwrap();
        assert!(st.active().is_empty());
        assert_eq!(st.unfilled_count(), 9);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut g = PixelGrid::new(4, 3, 3, 0.25, BoundaryMode::DirichletX).unwrap();
        g.set(1, 0, 0, 1.0);
        g.set(2, 2, 2, 128.0 / 255.0);
        let p = dir.path().join("a.png");
        g.write_png(&p).unwrap();
        let back = PixelGrid::read_png(&p, 0.25, BoundaryMode::DirichletX).unwrap();
        assert_eq!(back, g);
        let mask = vec![true, false, false, true, false, false];
        let mp = dir.path().join("m.png");
        write_mask_png(&mp, 3, 2, &mask).unwrap();
        assert_eq!(read_mask_png(&mp).unwrap(), (3, 2, mask));
    }
}
