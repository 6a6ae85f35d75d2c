//! Closed-form predictions: limiting transport directions, angular spectra,
//! solver norms, continuum weight directions, transport solutions and blur.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::stencil::{make_neighborhood, restrict_half_plane, EquivalentStencil, MethodTag, NeighborhoodKind, Stencil, Vec2};

/// Tolerance for angle comparisons at case boundaries.
pub const ANGLE_TOL: f64 = 1e-12;

/// Shallowest direction reachable by a direct method of radius `r`.
pub fn critical_angle(r: i64) -> Result<f64> {
    if r < 1 {
        return Err(Error::InvalidRadius(r));
    }
    Ok((1.0 / r as f64).asin())
}

/// Angle of `v` reduced to `[0, pi)`.
pub fn theta_of(v: Vec2) -> f64 {
    let t = v[1].atan2(v[0]).rem_euclid(PI);
    if t >= PI {
        0.0
    } else {
        t
    }
}

fn harmonic(n: i64) -> f64 {
    (1..=n).map(|j| 1.0 / j as f64).sum()
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Directions representable by an integer offset set.
#[derive(Clone, Debug, PartialEq)]
pub struct AngularSpectrum {
    pub angles: Vec<f64>,
    /// Shortest offset per direction.
    pub representatives: Vec<[i64; 2]>,
    /// `transitions[i]` is the angle of `representatives[i] + representatives[i + 1]`.
    pub transitions: Vec<f64>,
}

/// Angular spectrum of an offset set lying in `y <= -1`.
pub fn angular_spectrum(offsets: &[[i64; 2]]) -> Result<AngularSpectrum> {
    if let Some(o) = offsets.iter().find(|o| o[1] > -1) {
        return Err(Error::ContractViolation(format!("offset {o:?} is not below the boundary")));
    }
    let mut best: BTreeMap<(i64, i64), [i64; 2]> = BTreeMap::new();
    for &o in offsets {
        let g = gcd(o[0], o[1]);
        let key = (o[0] / g, o[1] / g);
        let len = o[0] * o[0] + o[1] * o[1];
        best.entry(key)
            .and_modify(|b| {
                if len < b[0] * b[0] + b[1] * b[1] {
                    *b = o;
                }
            })
            .or_insert(o);
    }
    if best.len() < 2 {
        return Err(Error::Collinear);
    }
    let mut reps: Vec<(f64, [i64; 2])> = best
        .into_values()
        .map(|o| (theta_of([o[0] as f64, o[1] as f64]), o))
        .collect();
    reps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let transitions = reps
        .windows(2)
        .map(|w| theta_of([(w[0].1[0] + w[1].1[0]) as f64, (w[0].1[1] + w[1].1[1]) as f64]))
        .collect();
    Ok(AngularSpectrum {
        angles: reps.iter().map(|r| r.0).collect(),
        representatives: reps.iter().map(|r| r.1).collect(),
        transitions,
    })
}

/// Spectrum of the lower half ball of radius `r`.
pub fn half_ball_spectrum(r: i64) -> Result<AngularSpectrum> {
    let ball = make_neighborhood(NeighborhoodKind::Ball, r, None)?;
    let lattice: Vec<[i64; 2]> = restrict_half_plane(&ball, -1)
        .iter()
        .map(|d| [d[0] as i64, d[1] as i64])
        .collect();
    angular_spectrum(&lattice)
}

/// Spectrum of the lower half box of radius `r`.
pub fn half_box_spectrum(r: i64) -> Result<AngularSpectrum> {
    let b = make_neighborhood(NeighborhoodKind::Box, r, None)?;
    let lattice: Vec<[i64; 2]> = restrict_half_plane(&b, -1)
        .iter()
        .map(|d| [d[0] as i64, d[1] as i64])
        .collect();
    angular_spectrum(&lattice)
}

fn check_angle(theta: f64) -> Result<()> {
    if !(0.0..PI).contains(&theta) {
        return Err(Error::UndefinedAngle(theta));
    }
    Ok(())
}

/// Limiting direction of coherence transport: a staircase over the spectrum.
pub fn ct_limit(theta: f64, spectrum: &AngularSpectrum) -> Result<f64> {
    check_angle(theta)?;
    if theta.abs() <= ANGLE_TOL {
        return Ok(FRAC_PI_2);
    }
    for (i, &t) in spectrum.transitions.iter().enumerate() {
        if (theta - t).abs() <= ANGLE_TOL {
            return Ok(0.5 * (spectrum.angles[i] + spectrum.angles[i + 1]));
        }
        if theta < t {
            return Ok(spectrum.angles[i]);
        }
    }
    Ok(*spectrum.angles.last().expect("spectrum has at least two angles"))
}

/// `sum_{n<r} 1/sqrt(1+n^2) / sum_{n<r} n/sqrt(1+n^2)`.
pub fn guidefill_alpha(r: i64) -> Result<f64> {
    if r < 2 {
        return Err(Error::InvalidRadius(r));
    }
    let (mut a, mut b) = (0.0, 0.0);
    for n in 1..r {
        let s = (1.0 + (n * n) as f64).sqrt();
        a += 1.0 / s;
        b += n as f64 / s;
    }
    Ok(a / b)
}

/// Angular jump of Guidefill below the critical angle.
pub fn guidefill_jump(r: i64) -> Result<f64> {
    Ok(guidefill_alpha(r)?.atan())
}

/// Limiting direction of Guidefill.
pub fn guidefill_limit(theta: f64, r: i64) -> Result<f64> {
    check_angle(theta)?;
    let tc = critical_angle(r)?;
    let jump = guidefill_jump(r)?;
    Ok(if theta.abs() <= ANGLE_TOL {
        FRAC_PI_2
    } else if theta < tc - ANGLE_TOL {
        theta + jump
    } else if theta <= PI - tc + ANGLE_TOL {
        theta
    } else {
        theta - jump
    })
}

/// Limiting direction of semi-implicit Guidefill.
pub fn sig_limit(theta: f64) -> Result<f64> {
    check_angle(theta)?;
    Ok(if theta.abs() <= ANGLE_TOL { FRAC_PI_2 } else { theta })
}

/// Limiting direction of `method` at radius `r` for large `mu`.
pub fn limit_for(method: MethodTag, theta: f64, r: i64) -> Result<f64> {
    match method {
        MethodTag::CoherenceTransport => ct_limit(theta, &half_ball_spectrum(r)?),
        MethodTag::Guidefill => guidefill_limit(theta, r),
        MethodTag::GuidefillSemiImplicit => sig_limit(theta),
        MethodTag::BoxGaussian => ct_limit(theta, &half_box_spectrum(r)?),
        MethodTag::Telea => Err(Error::InvalidParameter("telea has no limiting direction".into())),
    }
}

/// Direction of the center of mass of the strip-setting stencil at finite `mu`.
pub fn stencil_direction(method: MethodTag, theta: f64, r: i64, mu: f64) -> Result<f64> {
    let s = Stencil::symmetric(method, r, [theta.cos(), theta.sin()], mu)?;
    Ok(theta_of(s.equivalent().center_of_mass()?))
}

/// Row-coupling quantities and iteration-matrix norms for large `mu`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverNorms {
    pub w: f64,
    pub w_tilde: f64,
    pub w00: f64,
    /// `(W~ - w00) / (W - w00)`.
    pub ratio: f64,
    pub omega: f64,
    pub j_norm: f64,
    /// Defined for `omega <= 1`.
    pub g_norm: Option<f64>,
}

/// Mass landing in the current row, origin included.
pub fn row_mass(theta: f64, r: i64) -> Result<f64> {
    let tc = critical_angle(r)?;
    let s = theta.sin();
    Ok(if theta <= tc + ANGLE_TOL || theta >= PI - tc - ANGLE_TOL {
        harmonic(r) - r as f64 * s
    } else {
        let j = (1.0 / s).floor() as i64;
        harmonic(j) - j as f64 * s
    })
}

/// Norms of the damped Jacobi (`J`) and SOR (`G`) iteration matrices;
/// `omega = None` selects `1 - w00 / W`.
pub fn solver_norms(theta: f64, r: i64, omega: Option<f64>) -> Result<SolverNorms> {
    if !(theta > 0.0 && theta < PI) {
        return Err(Error::UndefinedAngle(theta));
    }
    let w = harmonic(r);
    let w00 = (1.0 - theta.sin()) * (1.0 - theta.cos().abs());
    let w_tilde = row_mass(theta, r)?;
    let ratio = (w_tilde - w00) / (w - w00);
    let omega = omega.unwrap_or(1.0 - w00 / w);
    if !(omega > 0.0 && omega < 2.0) {
        return Err(Error::InvalidParameter(format!("omega {omega} out of range")));
    }
    let j_norm = (1.0 - omega).abs() + omega * ratio;
    let g_norm = (omega <= 1.0).then(|| (1.0 - omega).abs() / (1.0 - omega * ratio));
    Ok(SolverNorms {
        w,
        w_tilde,
        w00,
        ratio,
        omega,
        j_norm,
        g_norm,
    })
}

/// Continuum weight family whose center of mass gives the limit direction
/// as `h -> 0` with `r` fixed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ContinuumWeights {
    /// `(1/|y|) exp(-(mu^2/2)(g_perp . y)^2)` on the lower unit half disk.
    Marz { mu: f64, theta: f64 },
    /// `exp(-5 |y + (1/2, 1/2)|^2)` on `[-1, 1] x [-1, 0]`.
    OffsetGaussian,
}

/// Center of mass of continuum weights by a midpoint rule with `n` nodes
/// per dimension.
pub fn marz_direction(weights: ContinuumWeights, n: usize) -> Result<Vec2> {
    if n < 256 {
        return Err(Error::InvalidParameter(format!("quadrature needs n >= 256, got {n}")));
    }
    match weights {
        ContinuumWeights::Marz { mu, theta } => {
            if !(mu > 0.0) {
                return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
            }
            let (mut gx, mut gy, mut mass) = (0.0, 0.0, 0.0);
            let dphi = PI / n as f64;
            for k in 0..n {
                let phi = PI + (k as f64 + 0.5) * dphi;
                let s = (phi - theta).sin();
                let a = 0.5 * mu * mu * s * s;
                // Radial integrals of rho e^{-a rho^2} and e^{-a rho^2} on (0, 1).
                let (first, zeroth) = if a < 1e-12 {
                    (0.5 - a / 4.0, 1.0 - a / 3.0)
                } else {
                    let sa = a.sqrt();
                    (-(-a).exp_m1() / (2.0 * a), 0.5 * (PI / a).sqrt() * libm::erf(sa))
                };
                gx += first * phi.cos() * dphi;
                gy += first * phi.sin() * dphi;
                mass += zeroth * dphi;
            }
            Ok([gx / mass, gy / mass])
        }
        ContinuumWeights::OffsetGaussian => {
            let (nx, ny) = (2 * n, n);
            let (dx, dy) = (2.0 / nx as f64, 1.0 / ny as f64);
            let (mut gx, mut gy, mut mass) = (0.0, 0.0, 0.0);
            for a in 0..nx {
                let x = -1.0 + (a as f64 + 0.5) * dx;
                for b in 0..ny {
                    let y = -1.0 + (b as f64 + 0.5) * dy;
                    let w = (-5.0 * ((x + 0.5).powi(2) + (y + 0.5).powi(2))).exp();
                    gx += w * x;
                    gy += w * y;
                    mass += w;
                }
            }
            Ok([gx / mass, gy / mass])
        }
    }
}

/// Boundary data `u0(x)` on the line `y = 0`.
#[derive(Clone)]
pub enum BoundaryData {
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    /// `values[k]` at `x0 + k h`, linearly interpolated, period 1 when
    /// periodic.
    Samples { values: Vec<f64>, x0: f64, h: f64 },
}

impl std::fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryData::Function(_) => write!(f, "Function(..)"),
            BoundaryData::Samples { values, x0, h } => {
                write!(f, "Samples {{ n: {}, x0: {x0}, h: {h} }}", values.len())
            }
        }
    }
}

impl BoundaryData {
    pub fn function(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        BoundaryData::Function(Arc::new(f))
    }

    /// Value at `x`; wrapped into `[0, 1)` when `periodic`.
    pub fn eval(&self, x: f64, periodic: bool) -> Result<f64> {
        let x = if periodic { x.rem_euclid(1.0) } else { x };
        match self {
            BoundaryData::Function(f) => Ok(f(x)),
            BoundaryData::Samples { values, x0, h } => {
                let n = values.len();
                if n == 0 {
                    return Err(Error::InvalidParameter("empty boundary samples".into()));
                }
                let t = (x - x0) / h;
                let k = t.floor();
                let frac = t - k;
                let k = k as i64;
                let at = |m: i64| -> Result<f64> {
                    if periodic {
                        Ok(values[m.rem_euclid(n as i64) as usize])
                    } else if (0..n as i64).contains(&m) {
                        Ok(values[m as usize])
                    } else {
                        Err(Error::InvalidParameter(format!("x = {x} outside the samples")))
                    }
                };
                if frac == 0.0 {
                    return at(k);
                }
                Ok((1.0 - frac) * at(k)? + frac * at(k + 1)?)
            }
        }
    }
}

/// Solution of the transport equation with direction `theta_star`:
/// `u(x, y) = u0(x - cot(theta_star) y)`.
pub fn transport_solution(boundary: &BoundaryData, theta_star: f64, x: f64, y: f64, periodic: bool) -> Result<f64> {
    let s = theta_star.sin();
    if s.abs() < ANGLE_TOL {
        return Err(Error::UndefinedAngle(theta_star));
    }
    boundary.eval(x - theta_star.cos() / s * y, periodic)
}

/// Drift and diffusion of the stopped walk defined by an equivalent stencil.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransportModel {
    pub g_star: Vec2,
    pub theta_star: f64,
    pub mu_x: f64,
    pub mu_y: f64,
    pub gamma_sq: f64,
}

impl TransportModel {
    /// Step moments of `eq`, self-loops included.
    pub fn from_equivalent(eq: &EquivalentStencil) -> Result<Self> {
        let steps = eq.step_distribution();
        if steps.is_empty() {
            return Err(Error::DegenerateStencil);
        }
        let (mut mx, mut my) = (0.0, 0.0);
        for (z, p) in &steps {
            mx += p * z[0] as f64;
            my += p * z[1] as f64;
        }
        if !(my < 0.0) {
            return Err(Error::IllPosed(my));
        }
        let gamma_sq = steps
            .iter()
            .map(|(z, p)| {
                let v = mx * z[1] as f64 - my * z[0] as f64;
                p * v * v
            })
            .sum();
        Ok(Self {
            g_star: [mx, my],
            theta_star: theta_of([mx, my]),
            mu_x: mx,
            mu_y: my,
            gamma_sq,
        })
    }

    pub fn from_stencil(s: &Stencil) -> Result<Self> {
        Self::from_equivalent(&s.equivalent())
    }
}

/// Predicted blur width at height `y` for spacing `h`.
pub fn blur_sigma(model: &TransportModel, y: f64, h: f64) -> Result<f64> {
    if !(model.mu_y < 0.0) {
        return Err(Error::IllPosed(model.mu_y));
    }
    if y < 0.0 || !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("need y >= 0 and h > 0, got y={y}, h={h}")));
    }
    Ok((model.gamma_sq * y * h / model.mu_y.abs().powi(3)).sqrt())
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Discrete Gaussian mollification of lattice samples with period
/// `slice.len()`: each output is a sum of samples weighted by the Gaussian
/// mass of the pixel cell centered on the sample.
pub fn predicted_profile(slice: &[f64], sigma: f64, h: f64) -> Result<Vec<f64>> {
    transported_profile(slice, 0.0, sigma, h)
}

/// [`predicted_profile`] about the foot points `x_i - shift`: output `i`
/// weights sample `j` by the Gaussian mass, centered at `x_i - shift`, of
/// the pixel cell centered on `x_j`. With `sigma = 0` this is the sample
/// whose cell holds the foot point.
pub fn transported_profile(slice: &[f64], shift: f64, sigma: f64, h: f64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) || !(h > 0.0) || !shift.is_finite() {
        return Err(Error::InvalidParameter(format!("need sigma >= 0, h > 0, finite shift; got {sigma}, {h}, {shift}")));
    }
    let n = slice.len() as i64;
    if n == 0 {
        return Ok(Vec::new());
    }
    let s = shift / h;
    let at = |j: i64| slice[j.rem_euclid(n) as usize];
    if sigma == 0.0 {
        return Ok((0..n).map(|i| at((i as f64 - s - 0.5).ceil() as i64)).collect());
    }
    let reach = (9.0 * sigma / h).ceil() as i64 + 1;
    let w = sigma / h;
    Ok((0..n)
        .map(|i| {
            let t = i as f64 - s;
            let c = t.round() as i64;
            (c - reach..=c + reach)
                .map(|j| {
                    let d = j as f64 - t;
                    at(j) * (normal_cdf((d + 0.5) / w) - normal_cdf((d - 0.5) / w))
                })
                .sum::<f64>()
        })
        .collect())
}

/// CSV `theta_deg,theta_star_deg` for `method` at radius `r`.
pub fn limits_csv(method: MethodTag, r: i64, thetas_deg: &[f64]) -> Result<String> {
    let mut s = String::from("theta_deg,theta_star_deg\n");
    for &t in thetas_deg {
        let v = limit_for(method, t.to_radians(), r)?;
        let _ = writeln!(s, "{t},{:.12}", v.to_degrees());
    }
    Ok(s)
}

/// CSV `theta_deg,J_norm,G_norm`; `G_norm` is empty when undefined.
pub fn norms_csv(r: i64, omega: Option<f64>, thetas_deg: &[f64]) -> Result<String> {
    let mut s = String::from("theta_deg,J_norm,G_norm\n");
    for &t in thetas_deg {
        let n = solver_norms(t.to_radians(), r, omega)?;
        let g = n.g_norm.map(|g| format!("{g:.12}")).unwrap_or_default();
        let _ = writeln!(s, "{t},{:.12},{g}", n.j_norm);
    }
    Ok(s)
}

/// CSV `theta_deg,sigma_sq` with `sigma^2` per unit `y h`, from the
/// measured equivalent stencil at finite `mu`.
pub fn blur_csv(method: MethodTag, r: i64, mu: f64, thetas_deg: &[f64]) -> Result<String> {
    let mut s = String::from("theta_deg,sigma_sq\n");
    for &t in thetas_deg {
        let th = t.to_radians();
        let st = Stencil::symmetric(method, r, [th.cos(), th.sin()], mu)?;
        let m = TransportModel::from_stencil(&st)?;
        let _ = writeln!(s, "{t},{:.12e}", blur_sigma(&m, 1.0, 1.0)?.powi(2));
    }
    Ok(s)
}

/// CSV `index,theta_deg,dx,dy` plus the transition angles.
pub fn spectrum_csv(spec: &AngularSpectrum) -> String {
    let mut s = String::from("index,theta_deg,dx,dy,transition_deg\n");
    for (i, (a, y)) in spec.angles.iter().zip(&spec.representatives).enumerate() {
        let t = spec
            .transitions
            .get(i)
            .map(|t| format!("{:.12}", t.to_degrees()))
            .unwrap_or_default();
        let _ = writeln!(s, "{},{:.12},{},{},{t}", i + 1, a.to_degrees(), y[0], y[1]);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn critical_angles() {
        assert_eq!(critical_angle(1).unwrap(), FRAC_PI_2);
        assert!((critical_angle(3).unwrap() - 0.339_836_909_454_121_9).abs() < 1e-15);
        assert_eq!(critical_angle(5).unwrap(), 0.2f64.asin());
        assert!(critical_angle(0).is_err());
    }

    #[test]
    fn spectrum_of_radius_three() {
        let s = half_ball_spectrum(3).unwrap();
        let want = [
            0.5f64.atan(),
            FRAC_PI_4,
            2f64.atan(),
            FRAC_PI_2,
            FRAC_PI_2 + 0.5f64.atan(),
            3.0 * FRAC_PI_4,
            FRAC_PI_2 + 2f64.atan(),
        ];
        assert_eq!(s.angles.len(), 7);
        for (a, b) in s.angles.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        for t in [(2.0f64 / 3.0).atan(), 1.5f64.atan(), 3f64.atan()] {
            assert!(s.transitions.iter().any(|x| (x - t).abs() < 1e-12));
        }
        assert_eq!(s.representatives[0], [-2, -1]);
        assert!(matches!(angular_spectrum(&[[0, -1], [0, -2]]), Err(Error::Collinear)));
    }

    #[test]
    fn midpoint_law_on_spectra() {
        for r in 2..=7 {
            let s = half_ball_spectrum(r).unwrap();
            for (i, w) in s.representatives.windows(2).enumerate() {
                let n0 = (w[0][0] as f64).hypot(w[0][1] as f64);
                let n1 = (w[1][0] as f64).hypot(w[1][1] as f64);
                let v = [w[0][0] as f64 / n0 + w[1][0] as f64 / n1, w[0][1] as f64 / n0 + w[1][1] as f64 / n1];
                assert!((theta_of(v) - 0.5 * (s.angles[i] + s.angles[i + 1])).abs() < 1e-12);
                assert!(s.transitions[i] > s.angles[i] && s.transitions[i] < s.angles[i + 1]);
            }
        }
    }

    #[test]
    fn ct_staircase_examples() {
        let s = half_ball_spectrum(3).unwrap();
        assert_eq!(ct_limit(0.0, &s).unwrap(), FRAC_PI_2);
        let close = |a: f64, b: f64| (a - b).abs() < 1e-14;
        assert!(close(ct_limit(30f64.to_radians(), &s).unwrap(), 0.5f64.atan()));
        let t = (2.0f64 / 3.0).atan();
        assert!(close(ct_limit(t, &s).unwrap(), 0.5 * (0.5f64.atan() + FRAC_PI_4)));
        assert!(close(ct_limit(50f64.to_radians(), &s).unwrap(), FRAC_PI_4));
        assert!(close(ct_limit(60f64.to_radians(), &s).unwrap(), 2f64.atan()));
        assert!(ct_limit(PI, &s).is_err());
    }

    #[test]
    fn guidefill_jumps() {
        assert!((guidefill_jump(3).unwrap().to_degrees() - 35.8).abs() < 0.05);
        assert!((guidefill_jump(4).unwrap().to_degrees() - 30.0).abs() < 0.05);
        assert!((guidefill_jump(5).unwrap().to_degrees() - 25.9).abs() < 0.05);
        assert_eq!(guidefill_limit(FRAC_PI_2, 3).unwrap(), FRAC_PI_2);
        let tc = critical_angle(3).unwrap();
        assert_eq!(guidefill_limit(tc, 3).unwrap(), tc);
        let t = 0.1;
        assert_eq!(guidefill_limit(t, 3).unwrap(), t + guidefill_jump(3).unwrap());
        assert_eq!(guidefill_limit(PI - t, 3).unwrap(), PI - t - guidefill_jump(3).unwrap());
    }

    #[test]
    fn sig_examples() {
        assert_eq!(sig_limit(0.0).unwrap(), FRAC_PI_2);
        assert_eq!(sig_limit(2f64.to_radians()).unwrap(), 2f64.to_radians());
        assert_eq!(sig_limit(135f64.to_radians()).unwrap(), 135f64.to_radians());
    }

    #[test]
    fn norm_examples() {
        let n = solver_norms(1.0, 3, Some(1.0)).unwrap();
        assert_eq!(n.g_norm, Some(0.0));
        let worst = (1..1800)
            .map(|k| solver_norms((k as f64 * 0.1).to_radians(), 3, None).unwrap().g_norm.unwrap())
            .fold(0.0, f64::max);
        assert!(worst <= 0.06, "{worst}");
        let tc = critical_angle(3).unwrap();
        let s = tc.sin();
        let lower = harmonic(3) - 3.0 * s;
        let j = (1.0 / s).round() as i64;
        let upper = harmonic(j) - j as f64 * s;
        assert!((lower - upper).abs() < 1e-12);
        let v = solver_norms(FRAC_PI_2, 3, None).unwrap();
        assert_eq!(v.w00, 0.0);
        assert_eq!(v.w_tilde, 0.0);
        assert!(solver_norms(0.0, 3, None).is_err());
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let star = solver_norms(FRAC_PI_4, 3, None).unwrap().omega;
        assert!((star - (1.0 - (1.0 - h).powi(2) / (11.0 / 6.0))).abs() < 1e-15);
        let n = solver_norms(0.4, 3, None).unwrap();
        assert!((n.j_norm - n.w_tilde / n.w).abs() < 1e-15);
    }

    #[test]
    fn omega_star_tends_to_one_near_zero() {
        let n = solver_norms(1e-9, 3, None).unwrap();
        assert!((n.omega - 1.0).abs() < 1e-9);
    }

    #[test]
    fn marz_direction_examples() {
        let t20 = 20f64.to_radians();
        let g = marz_direction(ContinuumWeights::Marz { mu: 10.0, theta: FRAC_PI_2 }, 2048).unwrap();
        assert!(g[0].abs() < 1e-12);
        let a = theta_of(marz_direction(ContinuumWeights::Marz { mu: 10.0, theta: t20 }, 2048).unwrap());
        let b = theta_of(marz_direction(ContinuumWeights::Marz { mu: 10.0, theta: t20 }, 4096).unwrap());
        assert!(a > t20 && a < FRAC_PI_2);
        assert!((a - b).abs() < 1e-6);
        let c = theta_of(marz_direction(ContinuumWeights::Marz { mu: 1e4, theta: t20 }, 2048).unwrap());
        assert!((c - t20).abs().to_degrees() < 0.1, "{}", c.to_degrees());
        assert!(marz_direction(ContinuumWeights::OffsetGaussian, 100).is_err());
    }

    #[test]
    fn transport_examples() {
        let u0 = BoundaryData::function(|x| (2.0 * PI * x).sin());
        let v = transport_solution(&u0, FRAC_PI_2, 0.3, 0.7, true).unwrap();
        assert!((v - (0.6 * PI).sin()).abs() < 1e-14);
        let v = transport_solution(&u0, FRAC_PI_4, 0.3, 0.5, true).unwrap();
        assert!((v - (2.0 * PI * 0.8).sin()).abs() < 1e-12);
        assert!(transport_solution(&u0, 0.0, 0.3, 0.5, true).is_err());
        let samples = BoundaryData::Samples { values: vec![0.0, 1.0, 0.0, 1.0], x0: 0.0, h: 0.25 };
        assert_eq!(samples.eval(0.125, true).unwrap(), 0.5);
        assert_eq!(samples.eval(0.875, true).unwrap(), 0.5);
    }

    #[test]
    fn scale_invariance_of_direction() {
        for k in [-3.0, 0.5, 7.0] {
            assert!((theta_of([0.3 * k, -0.8 * k]) - theta_of([0.3, -0.8])).abs() < 1e-15);
        }
    }

    #[test]
    fn blur_examples() {
        let single = Stencil::symmetric(MethodTag::Guidefill, 1, [0.0, 1.0], 10.0).unwrap();
        let m = TransportModel::from_stencil(&single).unwrap();
        assert_eq!(blur_sigma(&m, 0.5, 0.01).unwrap(), 0.0);
        let gf = Stencil::symmetric(MethodTag::Guidefill, 3, [1.0, 0.0], 100.0).unwrap();
        let m = TransportModel::from_stencil(&gf).unwrap();
        assert_eq!(blur_sigma(&m, 0.0, 0.01).unwrap(), 0.0);
        assert!(blur_sigma(&m, 0.1, 0.005).unwrap() > 0.0);
    }

    #[test]
    fn semi_implicit_blur_grows_at_shallow_angles() {
        let sig = |deg: f64| {
            let t = deg.to_radians();
            let st = Stencil::symmetric(MethodTag::GuidefillSemiImplicit, 3, [t.cos(), t.sin()], 1e4).unwrap();
            blur_sigma(&TransportModel::from_stencil(&st).unwrap(), 1.0, 1.0).unwrap().powi(2)
        };
        assert!(sig(1.0) > sig(5.0));
        assert!(sig(5.0) > sig(15.0));
        let gf = |deg: f64| {
            let t = deg.to_radians();
            let st = Stencil::symmetric(MethodTag::Guidefill, 3, [t.cos(), t.sin()], 1e4).unwrap();
            blur_sigma(&TransportModel::from_stencil(&st).unwrap(), 1.0, 1.0).unwrap().powi(2)
        };
        let bound = (1..180).map(|d| gf(d as f64)).fold(0.0, f64::max);
        assert!(bound < 10.0);
    }

    #[test]
    fn profile_examples() {
        let c = vec![0.4; 64];
        for v in predicted_profile(&c, 0.03, 1.0 / 64.0).unwrap() {
            assert!((v - 0.4).abs() < 1e-14);
        }
        let s: Vec<f64> = (0..10).map(|k| k as f64).collect();
        assert_eq!(predicted_profile(&s, 0.0, 0.1).unwrap(), s);
    }

    #[test]
    fn profile_matches_step_convolution() {
        let (h, sigma) = (0.005, 0.05);
        let n = 200;
        // Step up on [0.25, 0.75) with cell edges at the jumps.
        let slice: Vec<f64> = (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) * h;
                if (0.25..0.75).contains(&x) { 1.0 } else { 0.0 }
            })
            .collect();
        let out = predicted_profile(&slice, sigma, h).unwrap();
        for (i, v) in out.iter().enumerate() {
            let x = (i as f64 + 0.5) * h;
            // Periodic convolution of the step by Simpson quadrature.
            let gauss = |t: f64| (-(x - t).powi(2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt());
            let mut want = 0.0;
            for m in -2..=2 {
                let (a, b) = (0.25 + m as f64, 0.75 + m as f64);
                let k = 4000;
                let dt = (b - a) / k as f64;
                let mut acc = gauss(a) + gauss(b);
                for q in 1..k {
                    acc += if q % 2 == 1 { 4.0 } else { 2.0 } * gauss(a + q as f64 * dt);
                }
                want += acc * dt / 3.0;
            }
            assert!((v - want).abs() < 1e-8, "{i}: {v} vs {want}");
        }
    }

    #[test]
    fn csv_headers() {
        assert!(limits_csv(MethodTag::CoherenceTransport, 3, &[10.0]).unwrap().starts_with("theta_deg,theta_star_deg\n"));
        assert!(norms_csv(3, None, &[10.0]).unwrap().starts_with("theta_deg,J_norm,G_norm\n"));
        assert!(blur_csv(MethodTag::Guidefill, 3, 100.0, &[10.0]).unwrap().starts_with("theta_deg,sigma_sq\n"));
    }

    #[test]
    fn transported_profile_shifts() {
        let slice: Vec<f64> = (0..16).map(|i| (i * i % 7) as f64).collect();
        let h = 1.0 / 16.0;
        let out = transported_profile(&slice, 3.0 * h, 0.0, h).unwrap();
        for i in 0..16 {
            assert_eq!(out[i], slice[(i + 13) % 16]);
        }
        assert_eq!(transported_profile(&slice, 0.4 * h, 0.0, h).unwrap(), slice);
        let a = transported_profile(&slice, 5.0 * h, 0.02, h).unwrap();
        let b = predicted_profile(&slice, 0.02, h).unwrap();
        for i in 0..16 {
            assert!((a[i] - b[(i + 11) % 16]).abs() < 1e-12);
        }
        let total: f64 = transported_profile(&slice, 0.3 * h, 0.07, h).unwrap().iter().sum();
        assert!((total - slice.iter().sum::<f64>()).abs() < 1e-9);
    }
}
