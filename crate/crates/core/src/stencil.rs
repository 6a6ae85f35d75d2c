//! Neighborhoods, weight schemes, ghost points and equivalent weights.
//!
//! Offsets and weights are expressed in pixel units, so the radius `r`
//! plays the role of `ε / h` and no physical spacing enters this module.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];

/// Coordinates closer than this to an integer are snapped onto it.
const SNAP_TOL: f64 = 1e-9;

/// Angular bucket width used to memoize stencils of a guide field.
pub const FIELD_BUCKET_RAD: f64 = 1e-6;

/// Which inpainting method a stencil belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MethodTag {
    CoherenceTransport,
    Guidefill,
    GuidefillSemiImplicit,
    Telea,
    BoxGaussian,
}

impl MethodTag {
    pub fn neighborhood(self) -> NeighborhoodKind {
        match self {
            MethodTag::CoherenceTransport | MethodTag::Telea => NeighborhoodKind::Ball,
            MethodTag::Guidefill | MethodTag::GuidefillSemiImplicit => NeighborhoodKind::RotatedBall,
            MethodTag::BoxGaussian => NeighborhoodKind::Box,
        }
    }

    pub fn is_semi_implicit(self) -> bool {
        self == MethodTag::GuidefillSemiImplicit
    }

    /// Half-plane level of the stencil in the symmetric strip setting.
    pub fn half_plane_level(self) -> i64 {
        if self.is_semi_implicit() {
            0
        } else {
            -1
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MethodTag::CoherenceTransport => "coherence_transport",
            MethodTag::Guidefill => "guidefill",
            MethodTag::GuidefillSemiImplicit => "guidefill_semi_implicit",
            MethodTag::Telea => "telea",
            MethodTag::BoxGaussian => "box_gaussian",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "ct" | "coherence_transport" => MethodTag::CoherenceTransport,
            "guidefill" | "gf" => MethodTag::Guidefill,
            "semi-implicit" | "semi_implicit" | "sig" | "guidefill_semi_implicit" => {
                MethodTag::GuidefillSemiImplicit
            }
            "telea" => MethodTag::Telea,
            "box" | "box_gaussian" => MethodTag::BoxGaussian,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NeighborhoodKind {
    Ball,
    RotatedBall,
    Box,
}

#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP_TOL {
        r
    } else {
        v
    }
}

#[inline]
fn norm(v: Vec2) -> f64 {
    v[0].hypot(v[1])
}

fn unit(g: Option<Vec2>) -> Option<Vec2> {
    let g = g?;
    let n = norm(g);
    (n > 0.0 && n.is_finite()).then(|| [g[0] / n, g[1] / n])
}

/// Offsets of a ball, rotated ball or box of radius `r` (origin excluded).
///
/// A rotated ball without a usable direction falls back to the plain ball.
pub fn make_neighborhood(kind: NeighborhoodKind, r: i64, g: Option<Vec2>) -> Result<Vec<Vec2>> {
    if r < 1 {
        return Err(Error::InvalidRadius(r));
    }
    let mut out = Vec::new();
    match kind {
        NeighborhoodKind::Box => {
            for m in -r..=r {
                for n in -r..=r {
                    if (n, m) != (0, 0) {
                        out.push([n as f64, m as f64]);
                    }
                }
            }
        }
        NeighborhoodKind::Ball | NeighborhoodKind::RotatedBall => {
            let rot = if kind == NeighborhoodKind::RotatedBall { unit(g) } else { None };
            for m in -r..=r {
                for n in -r..=r {
                    if (n, m) == (0, 0) || n * n + m * m > r * r {
                        continue;
                    }
                    let (nf, mf) = (n as f64, m as f64);
                    out.push(match rot {
                        None => [nf, mf],
                        Some(u) => [snap(nf * u[0] - mf * u[1]), snap(nf * u[1] + mf * u[0])],
                    });
                }
            }
            // Row-major order, so a rotation onto the lattice reproduces the ball.
            out.sort_by(|a, b| a[1].total_cmp(&b[1]).then(a[0].total_cmp(&b[0])));
        }
    }
    Ok(out)
}

/// Keep the offsets whose vertical component is at most `level`.
pub fn restrict_half_plane(offsets: &[Vec2], level: i64) -> Vec<Vec2> {
    offsets
        .iter()
        .copied()
        .filter(|d| d[1] <= level as f64 + SNAP_TOL)
        .collect()
}

/// Lattice corners of `d` with their bilinear coefficients.
///
/// Integer coordinates collapse to fewer corners; zero coefficients are
/// never returned.
pub fn bilinear_corners(d: Vec2) -> Vec<([i64; 2], f64)> {
    let (x, y) = (snap(d[0]), snap(d[1]));
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let mut out = Vec::with_capacity(4);
    let xs: &[(i64, f64)] = if fx == 0.0 { &[(0, 1.0)] } else { &[(0, 1.0 - fx), (1, fx)] };
    let ys: &[(i64, f64)] = if fy == 0.0 { &[(0, 1.0)] } else { &[(0, 1.0 - fy), (1, fy)] };
    for &(dy, wy) in ys {
        for &(dx, wx) in xs {
            out.push(([x0 + dx, y0 + dy], wx * wy));
        }
    }
    out
}

/// Offsets with non-negative weights and a method tag.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil {
    pub offsets: Vec<Vec2>,
    pub weights: Vec<f64>,
    /// `ln` of each weight, finite even where the weight underflows to 0.
    pub log_weights: Vec<f64>,
    pub radius: i64,
    pub tag: MethodTag,
}

/// Evaluate the weights of `tag` on `offsets`.
///
/// Coherence transport and both Guidefill variants use
/// `(1/|d|) exp(-(mu^2 / (2 r^2)) (g_perp . d)^2)`. The exponent is shifted
/// by its maximum before exponentiating, so very large `mu` keeps the
/// dominant terms instead of underflowing. The box scheme uses the offset
/// Gaussian `exp(-5 |d/r + (1/2, 1/2)|^2)`. Telea receives the static
/// distance factor `1/|d|^2`; its direction and level-set factors depend on
/// the pixel and are applied during the fill.
pub fn eval_weights(tag: MethodTag, offsets: &[Vec2], g: Vec2, mu: f64, r: i64) -> Result<Stencil> {
    if r < 1 {
        return Err(Error::InvalidRadius(r));
    }
    if offsets.iter().any(|d| d[0] == 0.0 && d[1] == 0.0) {
        return Err(Error::InvalidParameter("stencil offsets must exclude the origin".into()));
    }
    let rf = r as f64;
    let log_weights: Vec<f64> = match tag {
        MethodTag::CoherenceTransport | MethodTag::Guidefill | MethodTag::GuidefillSemiImplicit => {
            let u = unit(Some(g)).unwrap_or([0.0, 1.0]);
            let perp = [-u[1], u[0]];
            let k = mu * mu / (2.0 * rf * rf);
            let expo: Vec<f64> = offsets
                .iter()
                .map(|d| {
                    let t = perp[0] * d[0] + perp[1] * d[1];
                    -k * t * t
                })
                .collect();
            let top = expo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            offsets
                .iter()
                .zip(&expo)
                .map(|(d, e)| (e - top) - norm(*d).ln())
                .collect()
        }
        MethodTag::BoxGaussian => offsets
            .iter()
            .map(|d| {
                let (a, b) = (d[0] / rf + 0.5, d[1] / rf + 0.5);
                -5.0 * (a * a + b * b)
            })
            .collect(),
        MethodTag::Telea => offsets
            .iter()
            .map(|d| -(d[0] * d[0] + d[1] * d[1]).ln())
            .collect(),
    };
    let weights: Vec<f64> = log_weights.iter().map(|l| l.exp()).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateStencil);
    }
    Ok(Stencil {
        offsets: offsets.to_vec(),
        weights,
        log_weights,
        radius: r,
        tag,
    })
}

impl Stencil {
    /// Full neighborhood of the method with its weights.
    pub fn for_method(tag: MethodTag, r: i64, g: Vec2, mu: f64) -> Result<Self> {
        let offsets = make_neighborhood(tag.neighborhood(), r, Some(g))?;
        eval_weights(tag, &offsets, g, mu, r)
    }

    /// The strip-setting stencil: neighborhood cut at the method's level.
    pub fn symmetric(tag: MethodTag, r: i64, g: Vec2, mu: f64) -> Result<Self> {
        let full = make_neighborhood(tag.neighborhood(), r, Some(g))?;
        let offsets = restrict_half_plane(&full, tag.half_plane_level());
        eval_weights(tag, &offsets, g, mu, r)
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Check containment, positivity and origin exclusion.
    pub fn validate(&self) -> Result<()> {
        let limit = self.radius as f64 + SNAP_TOL;
        for (d, w) in self.offsets.iter().zip(&self.weights) {
            let size = if self.tag == MethodTag::BoxGaussian {
                d[0].abs().max(d[1].abs())
            } else {
                norm(*d)
            };
            if size > limit {
                return Err(Error::ContractViolation(format!("offset {d:?} outside radius")));
            }
            if size == 0.0 {
                return Err(Error::ContractViolation("origin in stencil".into()));
            }
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::ContractViolation(format!("bad weight {w}")));
            }
        }
        if !(self.total_weight() > 0.0) {
            return Err(Error::DegenerateStencil);
        }
        Ok(())
    }

    /// Weighted mean offset.
    pub fn center_of_mass(&self) -> Result<Vec2> {
        let total = self.total_weight();
        if !(total > 0.0) {
            return Err(Error::DegenerateStencil);
        }
        let mut c = [0.0; 2];
        for (d, w) in self.offsets.iter().zip(&self.weights) {
            c[0] += w * d[0];
            c[1] += w * d[1];
        }
        Ok([c[0] / total, c[1] / total])
    }

    /// Redistribute ghost weights onto lattice offsets.
    pub fn equivalent(&self) -> EquivalentStencil {
        let mut acc: BTreeMap<[i64; 2], f64> = BTreeMap::new();
        for (d, w) in self.offsets.iter().zip(&self.weights) {
            for (z, lam) in bilinear_corners(*d) {
                *acc.entry(z).or_insert(0.0) += lam * w;
            }
        }
        let origin_weight = acc.remove(&[0, 0]).unwrap_or(0.0);
        let (offsets, weights) = acc.into_iter().unzip();
        EquivalentStencil {
            offsets,
            weights,
            origin_weight,
        }
    }

    /// CSV dump `dx,dy,weight` with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("dx,dy,weight\n");
        for (d, w) in self.offsets.iter().zip(&self.weights) {
            let _ = writeln!(s, "{:.16e},{:.16e},{:.16e}", d[0], d[1], w);
        }
        s
    }
}

/// Lattice offsets carrying the redistributed weights.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivalentStencil {
    pub offsets: Vec<[i64; 2]>,
    pub weights: Vec<f64>,
    /// Weight that lands back on the center pixel.
    pub origin_weight: f64,
}

impl EquivalentStencil {
    /// Total weight including the origin.
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum::<f64>() + self.origin_weight
    }

    pub fn weight_at(&self, z: [i64; 2]) -> f64 {
        if z == [0, 0] {
            return self.origin_weight;
        }
        self.offsets
            .iter()
            .position(|o| *o == z)
            .map_or(0.0, |k| self.weights[k])
    }

    /// Weighted mean offset, with the origin counted in the mass.
    pub fn center_of_mass(&self) -> Result<Vec2> {
        let total = self.total_weight();
        if !(total > 0.0) {
            return Err(Error::DegenerateStencil);
        }
        let mut c = [0.0; 2];
        for (z, w) in self.offsets.iter().zip(&self.weights) {
            c[0] += w * z[0] as f64;
            c[1] += w * z[1] as f64;
        }
        Ok([c[0] / total, c[1] / total])
    }

    /// Step distribution `(offset, probability)` including the origin when
    /// it carries weight.
    pub fn step_distribution(&self) -> Vec<([i64; 2], f64)> {
        let total = self.total_weight();
        let mut out: Vec<([i64; 2], f64)> = self
            .offsets
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(z, w)| (*z, w / total))
            .collect();
        if self.origin_weight > 0.0 {
            out.push(([0, 0], self.origin_weight / total));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("dx,dy,weight\n");
        if self.origin_weight > 0.0 {
            let _ = writeln!(s, "0,0,{:.16e}", self.origin_weight);
        }
        for (z, w) in self.offsets.iter().zip(&self.weights) {
            let _ = writeln!(s, "{},{},{:.16e}", z[0], z[1], w);
        }
        s
    }
}

/// One weighted sample point with its bilinear support.
#[derive(Clone, Copy, Debug)]
pub struct Tap {
    pub weight: f64,
    pub log_weight: f64,
    pub offset: Vec2,
    pub len: usize,
    pub corners: [(i64, i64, f64); 4],
}

impl Tap {
    #[inline]
    pub fn corners(&self) -> &[(i64, i64, f64)] {
        &self.corners[..self.len]
    }
}

/// A stencil prepared for repeated evaluation during a fill.
#[derive(Clone, Debug)]
pub struct CompiledStencil {
    pub taps: Vec<Tap>,
    pub total_weight: f64,
    /// Taps whose weight underflows to 0.
    pub faint: Vec<Tap>,
}

impl CompiledStencil {
    /// Usable faint taps reweighted relative to the heaviest of them. Used
    /// only when no regular tap is usable, where plain weights give `0 / 0`.
    pub fn rescued(&self, usable: impl Fn(&Tap) -> bool) -> Vec<Tap> {
        let mut out: Vec<Tap> = self.faint.iter().filter(|t| usable(t)).copied().collect();
        let top = out.iter().map(|t| t.log_weight).fold(f64::NEG_INFINITY, f64::max);
        for t in &mut out {
            t.weight = (t.log_weight - top).exp();
        }
        out
    }
}

impl From<&Stencil> for CompiledStencil {
    fn from(s: &Stencil) -> Self {
        let (mut taps, mut faint) = (Vec::new(), Vec::new());
        for ((d, w), l) in s.offsets.iter().zip(&s.weights).zip(&s.log_weights) {
            let cs = bilinear_corners(*d);
            let mut corners = [(0, 0, 0.0); 4];
            for (k, (z, lam)) in cs.iter().enumerate() {
                corners[k] = (z[0], z[1], *lam);
            }
            let tap = Tap {
                weight: *w,
                log_weight: *l,
                offset: *d,
                len: cs.len(),
                corners,
            };
            if *w > 0.0 {
                taps.push(tap);
            } else if l.is_finite() {
                faint.push(tap);
            }
        }
        Self {
            taps,
            total_weight: s.total_weight(),
            faint,
        }
    }
}

/// Transport direction: one constant vector or a per-pixel field.
#[derive(Clone)]
pub enum Guide {
    Constant(Vec2),
    /// Direction at pixel `(i, j)`.
    Field(Arc<dyn Fn(usize, usize) -> Vec2 + Send + Sync>),
}

impl std::fmt::Debug for Guide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Guide::Constant(g) => write!(f, "Constant({g:?})"),
            Guide::Field(_) => write!(f, "Field(..)"),
        }
    }
}

impl Guide {
    pub fn from_angle(theta: f64) -> Self {
        Guide::Constant([theta.cos(), theta.sin()])
    }
}

type FieldMemo = HashMap<(u8, i64, u64, i64), Arc<CompiledStencil>>;

thread_local! {
    static FIELD_MEMO: RefCell<FieldMemo> =
        RefCell::new(HashMap::new());
}

const FIELD_MEMO_CAP: usize = 1 << 15;

/// Hands out the compiled stencil that applies at each pixel.
#[derive(Clone, Debug)]
pub struct StencilProvider {
    pub tag: MethodTag,
    pub r: i64,
    pub mu: f64,
    pub guide: Guide,
    constant: Option<Arc<CompiledStencil>>,
}

impl StencilProvider {
    pub fn new(tag: MethodTag, r: i64, mu: f64, guide: Guide) -> Result<Self> {
        if r < 1 {
            return Err(Error::InvalidRadius(r));
        }
        if !(mu > 0.0) {
            return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
        }
        let constant = match &guide {
            Guide::Constant(g) => Some(Arc::new(CompiledStencil::from(&Stencil::for_method(
                tag, r, *g, mu,
            )?))),
            Guide::Field(_) => None,
        };
        Ok(Self {
            tag,
            r,
            mu,
            guide,
            constant,
        })
    }

    /// Stencil for pixel `(i, j)`.
    ///
    /// Field directions are quantized to buckets of [`FIELD_BUCKET_RAD`] and
    /// the stencil is built from the bucket direction, so the result does not
    /// depend on memo state.
    pub fn at(&self, i: usize, j: usize) -> Arc<CompiledStencil> {
        if let Some(c) = &self.constant {
            return c.clone();
        }
        let Guide::Field(f) = &self.guide else {
            unreachable!()
        };
        let g = f(i, j);
        let bucket = if norm(g) > 0.0 {
            (g[1].atan2(g[0]) / FIELD_BUCKET_RAD).round() as i64
        } else {
            i64::MIN
        };
        let key = (self.tag as u8, self.r, self.mu.to_bits(), bucket);
        FIELD_MEMO.with(|m| {
            if let Some(s) = m.borrow().get(&key) {
                return s.clone();
            }
            let dir = if bucket == i64::MIN {
                [0.0, 0.0]
            } else {
                let a = bucket as f64 * FIELD_BUCKET_RAD;
                [a.cos(), a.sin()]
            };
            let st = Stencil::for_method(self.tag, self.r, dir, self.mu)
                .or_else(|_| Stencil::for_method(self.tag, self.r, [0.0, 1.0], self.mu))
                .expect("stencil of a valid provider");
            let s = Arc::new(CompiledStencil::from(&st));
            let mut mm = m.borrow_mut();
            if mm.len() >= FIELD_MEMO_CAP {
                mm.clear();
            }
            mm.insert(key, s.clone());
            s
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::dilate;
    use std::collections::BTreeSet;

    fn lattice_set(v: &[Vec2]) -> BTreeSet<(i64, i64)> {
        v.iter().map(|d| (d[0] as i64, d[1] as i64)).collect()
    }

    #[test]
    fn neighborhood_counts() {
        let b1 = make_neighborhood(NeighborhoodKind::Ball, 1, None).unwrap();
        assert_eq!(
            lattice_set(&b1),
            [(1, 0), (-1, 0), (0, 1), (0, -1)].into_iter().collect()
        );
        assert_eq!(make_neighborhood(NeighborhoodKind::Box, 2, None).unwrap().len(), 24);
        assert!(matches!(
            make_neighborhood(NeighborhoodKind::Ball, 0, None),
            Err(Error::InvalidRadius(0))
        ));
        let rot = make_neighborhood(NeighborhoodKind::RotatedBall, 3, Some([0.0, 1.0])).unwrap();
        let ball = make_neighborhood(NeighborhoodKind::Ball, 3, None).unwrap();
        assert_eq!(lattice_set(&rot), lattice_set(&ball));
        assert!(rot.iter().all(|d| d[0].fract() == 0.0 && d[1].fract() == 0.0));
        let zero = make_neighborhood(NeighborhoodKind::RotatedBall, 2, Some([0.0, 0.0])).unwrap();
        assert_eq!(zero, make_neighborhood(NeighborhoodKind::Ball, 2, None).unwrap());
    }

    #[test]
    fn half_plane_examples() {
        let b3 = make_neighborhood(NeighborhoodKind::Ball, 3, None).unwrap();
        assert_eq!(restrict_half_plane(&b3, -1).len(), 11);
        let b1 = make_neighborhood(NeighborhoodKind::Ball, 1, None).unwrap();
        assert_eq!(restrict_half_plane(&b1, -1), vec![[0.0, -1.0]]);
        let rot = make_neighborhood(NeighborhoodKind::RotatedBall, 3, Some([0.0, 1.0])).unwrap();
        assert_eq!(
            lattice_set(&restrict_half_plane(&rot, 0)),
            lattice_set(&restrict_half_plane(&b3, 0))
        );
    }

    #[test]
    fn dilated_half_ball_matches_enumeration() {
        for r in 1..=6i64 {
            let ball = make_neighborhood(NeighborhoodKind::Ball, r, None).unwrap();
            let bm: Vec<(i64, i64)> = lattice_set(&restrict_half_plane(&ball, -1))
                .into_iter()
                .collect();
            let got: BTreeSet<_> = dilate(&bm).into_iter().filter(|p| p.1 <= -1).collect();
            let mut want = BTreeSet::new();
            for y in -(r + 1)..=-1 {
                for x in -(r + 1)..=(r + 1) {
                    let hit = (-1..=1).any(|a: i64| {
                        (-1..=1).any(|b: i64| {
                            let (u, v) = (x + a, y + b);
                            v <= -1 && u * u + v * v <= r * r
                        })
                    });
                    if hit {
                        want.insert((x, y));
                    }
                }
            }
            assert_eq!(got, want, "r = {r}");
        }
    }

    #[test]
    fn marz_weight_along_guide_is_inverse_distance() {
        let s = eval_weights(MethodTag::CoherenceTransport, &[[0.0, -2.0], [1.0, -1.0]], [0.0, 1.0], 30.0, 3)
            .unwrap();
        assert_eq!(s.weights[0], 0.5);
        assert!(s.weights[1] < 1e-3);
    }

    #[test]
    fn marz_large_mu_concentrates_on_column() {
        let s = Stencil::symmetric(MethodTag::CoherenceTransport, 3, [0.0, 1.0], 1e4).unwrap();
        let total = s.total_weight();
        let mut col = [0.0; 3];
        for (d, w) in s.offsets.iter().zip(&s.weights) {
            if d[0] == 0.0 {
                col[(-d[1]) as usize - 1] = *w;
            }
        }
        assert!((col.iter().sum::<f64>() - total).abs() < 1e-300);
        assert_eq!(col, [1.0, 0.5, 1.0 / 3.0]);
    }

    #[test]
    fn offset_gaussian_peak() {
        let s = eval_weights(MethodTag::BoxGaussian, &[[-1.5, -1.5]], [0.0, 1.0], 1.0, 3).unwrap();
        assert_eq!(s.weights[0], 1.0);
    }

    #[test]
    fn degenerate_and_origin_errors() {
        assert!(eval_weights(MethodTag::Guidefill, &[[0.0, 0.0]], [0.0, 1.0], 1.0, 1).is_err());
        assert!(matches!(
            eval_weights(MethodTag::Guidefill, &[], [0.0, 1.0], 1.0, 1),
            Err(Error::DegenerateStencil)
        ));
    }

    #[test]
    fn equivalent_examples() {
        let s = Stencil::for_method(MethodTag::CoherenceTransport, 3, [0.3, 0.9], 5.0).unwrap();
        let e = s.equivalent();
        assert_eq!(e.origin_weight, 0.0);
        assert_eq!(e.offsets.len(), s.offsets.len());
        for (z, w) in e.offsets.iter().zip(&e.weights) {
            let k = s.offsets.iter().position(|d| d[0] == z[0] as f64 && d[1] == z[1] as f64).unwrap();
            assert_eq!(*w, s.weights[k]);
        }
        let ghost = Stencil {
            offsets: vec![[-0.5, -0.5]],
            weights: vec![1.0],
            log_weights: vec![0.0],
            radius: 1,
            tag: MethodTag::Guidefill,
        };
        let e = ghost.equivalent();
        assert_eq!(e.origin_weight, 0.25);
        for z in [[-1, 0], [0, -1], [-1, -1]] {
            assert_eq!(e.weight_at(z), 0.25);
        }
    }

    #[test]
    fn guidefill_73_support_and_mass() {
        let t = 73f64.to_radians();
        let g = [t.cos(), t.sin()];
        let s = Stencil::symmetric(MethodTag::Guidefill, 3, g, 100.0).unwrap();
        let e = s.equivalent();
        let mut direct: BTreeMap<[i64; 2], f64> = BTreeMap::new();
        for (d, w) in s.offsets.iter().zip(&s.weights) {
            let (x0, y0) = (d[0].floor(), d[1].floor());
            for (cx, cy) in [(x0, y0), (x0 + 1.0, y0), (x0, y0 + 1.0), (x0 + 1.0, y0 + 1.0)] {
                let lam = (1.0 - (d[0] - cx).abs()).max(0.0) * (1.0 - (d[1] - cy).abs()).max(0.0);
                if lam > 0.0 {
                    *direct.entry([cx as i64, cy as i64]).or_insert(0.0) += lam * w;
                }
            }
        }
        for (z, w) in &direct {
            assert!((e.weight_at(*z) - w).abs() <= 1e-15 * s.total_weight());
        }
        let ball = make_neighborhood(NeighborhoodKind::Ball, 3, None).unwrap();
        let bm: Vec<(i64, i64)> = lattice_set(&restrict_half_plane(&ball, -1)).into_iter().collect();
        let bar: BTreeSet<_> = dilate(&bm).into_iter().filter(|p| p.1 <= -1).collect();
        assert_eq!(e.origin_weight, 0.0);
        for z in &e.offsets {
            assert!(bar.contains(&(z[0], z[1])), "{z:?}");
        }
        let rel = (e.total_weight() - s.total_weight()).abs() / s.total_weight();
        assert!(rel < 1e-12);
    }

    #[test]
    fn center_of_mass_examples() {
        let s = eval_weights(MethodTag::Guidefill, &[[0.0, -1.0]], [0.7, 0.7], 3.0, 1).unwrap();
        assert_eq!(s.center_of_mass().unwrap(), [0.0, -1.0]);
        let s = Stencil::symmetric(MethodTag::CoherenceTransport, 4, [0.0, 1.0], 2.0).unwrap();
        assert!(s.center_of_mass().unwrap()[0].abs() < 1e-15);
        let t = 45f64.to_radians();
        let s = Stencil::symmetric(MethodTag::Guidefill, 3, [t.cos(), t.sin()], 1e4).unwrap();
        let c = s.center_of_mass().unwrap();
        let cross = c[0] * t.sin() - c[1] * t.cos();
        assert!(cross.abs() / c[0].hypot(c[1]) < 1e-6);
    }

    #[test]
    fn second_moment_not_preserved() {
        let t = 37f64.to_radians();
        let s = Stencil::symmetric(MethodTag::Guidefill, 3, [t.cos(), t.sin()], 10.0).unwrap();
        let e = s.equivalent();
        let m2: f64 = s.offsets.iter().zip(&s.weights).map(|(d, w)| w * d[0] * d[0]).sum();
        let m2e: f64 = e
            .offsets
            .iter()
            .zip(&e.weights)
            .map(|(z, w)| w * (z[0] * z[0]) as f64)
            .sum();
        assert!((m2 - m2e).abs() > 1e-3 * m2);
    }

    #[test]
    fn csv_has_17_digits() {
        let s = eval_weights(MethodTag::Guidefill, &[[0.1, -1.0]], [0.0, 1.0], 1.0, 2).unwrap();
        let csv = s.to_csv();
        let line = csv.lines().nth(1).unwrap();
        let first = line.split(',').next().unwrap();
        let mantissa = first.split('e').next().unwrap().replace(['.', '-'], "");
        assert_eq!(mantissa.len(), 17);
    }

    #[test]
    fn field_provider_matches_constant() {
        let t: f64 = 0.8;
        let g = [t.cos(), t.sin()];
        let fp = StencilProvider::new(MethodTag::Guidefill, 3, 20.0, Guide::Field(Arc::new(move |_, _| g))).unwrap();
        let cp = StencilProvider::new(MethodTag::Guidefill, 3, 20.0, Guide::Constant(g)).unwrap();
        let (a, b) = (fp.at(1, 2), cp.at(1, 2));
        assert_eq!(a.taps.len(), b.taps.len());
        for (x, y) in a.taps.iter().zip(&b.taps) {
            assert!((x.weight - y.weight).abs() < 1e-5);
        }
    }
}
