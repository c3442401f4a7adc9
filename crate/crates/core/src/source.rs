//! The passive transmitter: two pairs of phase-randomized pulses interfere to give the
//! H and V arm intensities, and a probabilistic filter reshapes their joint law.
//!
//! All intensities are expressed after the internal attenuation η_F, so every sample lies in
//! the square [0, μ_max]².

use core::f64::consts::{PI, TAU};
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    mu_in: f64,
    eta_f: f64,
    mu_max: f64,
}

impl SourceParams {
    pub fn new(mu_in: f64, eta_f: f64) -> Result<Self> {
        if !(mu_in > 0.0) || !mu_in.is_finite() {
            return Err(invalid("mu_in", "must be positive and finite"));
        }
        if !(eta_f > 0.0 && eta_f <= 1.0) {
            return Err(invalid("eta_f", "must lie in (0, 1]"));
        }
        Ok(Self { mu_in, eta_f, mu_max: 2.0 * mu_in * eta_f })
    }

    /// A lossless source (η_F = 1) with the requested maximum output intensity.
    pub fn from_mu_max(mu_max: f64) -> Result<Self> {
        if !(mu_max > 0.0) || !mu_max.is_finite() {
            return Err(invalid("mu_max", "must be positive and finite"));
        }
        Ok(Self { mu_in: 0.5 * mu_max, eta_f: 1.0, mu_max })
    }

    pub fn mu_in(&self) -> f64 {
        self.mu_in
    }

    pub fn eta_f(&self) -> f64 {
        self.eta_f
    }

    pub fn mu_max(&self) -> f64 {
        self.mu_max
    }
}

/// One emitted pulse: arm intensities, azimuth φ = φ_V − φ_H and global phase φ_G = φ_H.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSample {
    pub mu_h: f64,
    pub mu_v: f64,
    pub phi: f64,
    pub phi_g: f64,
}

impl SourceSample {
    pub fn intensity(&self) -> f64 {
        self.mu_h + self.mu_v
    }

    pub fn polar(&self) -> PolarCoords {
        PolarCoords::from_cartesian(self.mu_h, self.mu_v)
    }

    /// Bloch polar angle θ = 2 arccos √(μ_H / μ); `None` for the vacuum.
    pub fn bloch_theta(&self) -> Option<f64> {
        let mu = self.intensity();
        if mu > 0.0 {
            Some(2.0 * (self.mu_h / mu).sqrt().min(1.0).acos())
        } else {
            None
        }
    }
}

/// Polar coordinates of the intensity plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarCoords {
    pub r: f64,
    /// arctan(μ_V / μ_H) in [0, π/2].
    pub theta_mu: f64,
}

impl PolarCoords {
    pub fn from_cartesian(mu_h: f64, mu_v: f64) -> Self {
        Self { r: mu_h.hypot(mu_v), theta_mu: mu_v.atan2(mu_h) }
    }

    pub fn to_cartesian(&self) -> (f64, f64) {
        let (s, c) = self.theta_mu.sin_cos();
        (self.r * c, self.r * s)
    }

    /// μ_H + μ_V, i.e. r (cos θ_μ + sin θ_μ).
    pub fn intensity(&self) -> f64 {
        let (s, c) = self.theta_mu.sin_cos();
        self.r * (s + c)
    }
}

fn wrap(angle: f64) -> f64 {
    let a = angle % TAU;
    if a < 0.0 {
        a + TAU
    } else {
        a
    }
}

/// Interferes pulses 1,2 into the H arm and 3,4 into the V arm.
pub fn interfere(phases: [f64; 4], params: &SourceParams) -> SourceSample {
    let [p1, p2, p3, p4] = phases;
    let scale = params.eta_f * params.mu_in;
    SourceSample {
        mu_h: scale * (1.0 + (p2 - p1).cos()),
        mu_v: scale * (1.0 + (p4 - p3).cos()),
        phi: wrap(0.5 * ((p3 + p4) - (p1 + p2))),
        phi_g: wrap(0.5 * (p1 + p2)),
    }
}

/// Joint density of (μ_H, μ_V) produced by uniform pulse phases (product of arcsine laws).
pub fn density_natural(mu_h: f64, mu_v: f64, params: &SourceParams) -> Result<f64> {
    let m = params.mu_max;
    let inside = |x: f64| x > 0.0 && x < m;
    if !inside(mu_h) || !inside(mu_v) {
        return Err(Error::SingularPoint { mu_h, mu_v });
    }
    Ok(1.0 / (PI * PI * (mu_h * (m - mu_h) * mu_v * (m - mu_v)).sqrt()))
}

/// Location of the maximum of √(x(M−x))·eˣ on [0, M].
pub fn shaping_peak(mu_max: f64) -> f64 {
    let m = mu_max;
    0.5 * ((m - 1.0) + (m * m + 1.0).sqrt())
}

fn shaping_profile(x: f64, m: f64) -> f64 {
    if x <= 0.0 || x >= m {
        0.0
    } else {
        (x * (m - x)).sqrt() * x.exp()
    }
}

/// Probability of keeping a pulse with arm intensities (μ_H, μ_V).
///
/// Proportional to √(μ_H(μ_max−μ_H)μ_V(μ_max−μ_V))·e^(μ_H+μ_V), scaled so its maximum over the
/// square is one. The kept pulses then follow a density proportional to e^(μ_H+μ_V).
pub fn shaping_acceptance(mu_h: f64, mu_v: f64, params: &SourceParams) -> f64 {
    let m = params.mu_max;
    let peak = shaping_profile(shaping_peak(m), m);
    let q = shaping_profile(mu_h, m) * shaping_profile(mu_v, m) / (peak * peak);
    q.clamp(0.0, 1.0)
}

/// Normalization C of the shaped density C·e^(μ_H+μ_V) on the square.
pub fn shaped_normalization(params: &SourceParams) -> f64 {
    let z = params.mu_max.exp_m1();
    1.0 / (z * z)
}

/// Density of the kept pulses, e^(μ_H+μ_V) / (e^μ_max − 1)².
pub fn density_shaped(mu_h: f64, mu_v: f64, params: &SourceParams) -> f64 {
    let m = params.mu_max;
    if !(0.0..=m).contains(&mu_h) || !(0.0..=m).contains(&mu_v) {
        return 0.0;
    }
    (mu_h + mu_v).exp() * shaped_normalization(params)
}

/// Fraction of emitted pulses that survive shaping: ((e^M − 1) / (π·max profile))².
pub fn shaping_acceptance_rate(params: &SourceParams) -> f64 {
    let m = params.mu_max;
    let peak = shaping_profile(shaping_peak(m), m);
    let r = m.exp_m1() / (PI * peak);
    r * r
}

/// CDF of the natural μ_H (or μ_V) marginal.
pub fn arcsine_cdf(x: f64, mu_max: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= mu_max {
        1.0
    } else {
        2.0 / PI * (x / mu_max).sqrt().asin()
    }
}

/// Inverse of [`arcsine_cdf`].
pub fn arcsine_quantile(u: f64, mu_max: f64) -> f64 {
    let s = (0.5 * PI * u).sin();
    mu_max * s * s
}

/// CDF of the shaped μ_H (or μ_V) marginal, (eˣ − 1)/(e^M − 1).
pub fn shaped_marginal_cdf(x: f64, mu_max: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= mu_max {
        1.0
    } else {
        x.exp_m1() / mu_max.exp_m1()
    }
}

/// Draws from the natural source law.
pub fn sample_natural<R: Rng + ?Sized>(rng: &mut R, params: &SourceParams) -> SourceSample {
    let m = params.mu_max;
    SourceSample {
        mu_h: arcsine_quantile(rng.random::<f64>(), m),
        mu_v: arcsine_quantile(rng.random::<f64>(), m),
        phi: TAU * rng.random::<f64>(),
        phi_g: TAU * rng.random::<f64>(),
    }
}

/// Draws from the shaped law by rejection; also returns how many pulses were emitted.
pub fn sample_shaped<R: Rng + ?Sized>(rng: &mut R, params: &SourceParams) -> (SourceSample, u64) {
    let mut emitted = 0;
    loop {
        emitted += 1;
        let s = sample_natural(rng, params);
        if rng.random::<f64>() < shaping_acceptance(s.mu_h, s.mu_v, params) {
            return (s, emitted);
        }
    }
}

pub fn sample_source<R: Rng + ?Sized>(
    rng: &mut R,
    params: &SourceParams,
    shaped: bool,
) -> SourceSample {
    if shaped {
        sample_shaped(rng, params).0
    } else {
        sample_natural(rng, params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::vec::Vec;

    fn params(m: f64) -> SourceParams {
        SourceParams::from_mu_max(m).unwrap()
    }

    #[test]
    fn mu_max_is_twice_input_times_transmittance() {
        let p = SourceParams::new(3.0, 0.1).unwrap();
        assert_eq!(p.mu_max(), 2.0 * 3.0 * 0.1);
        assert!(SourceParams::new(1.0, 0.0).is_err());
        assert!(SourceParams::new(-1.0, 0.5).is_err());
        assert!(SourceParams::from_mu_max(0.0).is_err());
    }

    #[test]
    fn interference_extremes() {
        let p = SourceParams::new(0.4, 0.5).unwrap();
        let s = interfere([0.3, 0.3, 1.0, 1.0 + PI], &p);
        assert_relative_eq!(s.mu_h, p.mu_max(), epsilon = 1e-15);
        assert!(s.mu_v.abs() < 1e-15);

        let s = interfere([0.0, PI / 2.0, 1.0, 1.0 + PI / 2.0], &p);
        assert_relative_eq!(s.mu_h, p.mu_max() / 2.0, epsilon = 1e-15);
        assert_relative_eq!(s.mu_v, p.mu_max() / 2.0, epsilon = 1e-15);
        assert_relative_eq!(s.bloch_theta().unwrap(), PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn interference_phases() {
        let p = params(1.0);
        let s = interfere([0.2, 0.4, 1.0, 1.6], &p);
        assert_relative_eq!(s.phi, 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.phi_g, 0.3, epsilon = 1e-15);
        // Negative azimuth wraps into [0, 2π).
        let s = interfere([1.0, 1.6, 0.2, 0.4], &p);
        assert_relative_eq!(s.phi, TAU - 1.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn global_phase_shift_only_moves_phi_g(
            ph in proptest::array::uniform4(0.0..PI), c in 0.0..PI,
        ) {
            let p = params(0.7);
            let a = interfere(ph, &p);
            let b = interfere([ph[0] + c, ph[1] + c, ph[2] + c, ph[3] + c], &p);
            prop_assert!((a.mu_h - b.mu_h).abs() < 1e-12);
            prop_assert!((a.mu_v - b.mu_v).abs() < 1e-12);
            let dphi = (a.phi - b.phi).abs();
            prop_assert!(dphi < 1e-12 || (dphi - TAU).abs() < 1e-12);
            let shift = wrap(b.phi_g - a.phi_g);
            prop_assert!((shift - c).abs() < 1e-12 || (shift - c - TAU).abs() < 1e-12);
        }

        #[test]
        fn polar_round_trip(mu_h in 0.0..2.0f64, mu_v in 0.0..2.0f64) {
            let pc = PolarCoords::from_cartesian(mu_h, mu_v);
            let (h, v) = pc.to_cartesian();
            prop_assert!((h - mu_h).abs() < 1e-12 && (v - mu_v).abs() < 1e-12);
            prop_assert!(pc.r >= 0.0 && pc.theta_mu >= 0.0 && pc.theta_mu <= PI / 2.0);
            prop_assert!((pc.intensity() - (mu_h + mu_v)).abs() < 1e-12);
        }

        #[test]
        fn bloch_angle_matches_intensity_split(mu_h in 1e-6..1.0f64, mu_v in 1e-6..1.0f64) {
            let s = SourceSample { mu_h, mu_v, phi: 0.0, phi_g: 0.0 };
            let theta = s.bloch_theta().unwrap();
            prop_assert!((0.0..=PI).contains(&theta));
            let c0 = (theta / 2.0).cos();
            prop_assert!((c0 * c0 - mu_h / (mu_h + mu_v)).abs() < 1e-12);
        }

        #[test]
        fn natural_density_is_symmetric(a in 0.01..0.99f64, b in 0.01..0.99f64) {
            let p = params(1.0);
            let x = density_natural(a, b, &p).unwrap();
            let y = density_natural(b, a, &p).unwrap();
            prop_assert!((x - y).abs() <= 1e-14 * x);
        }
    }

    #[test]
    fn natural_density_center_value() {
        let m = 0.8;
        let d = density_natural(m / 2.0, m / 2.0, &params(m)).unwrap();
        assert_relative_eq!(d, 4.0 / (PI * PI * m * m), max_relative = 1e-14);
    }

    #[test]
    fn natural_density_rejects_boundary() {
        let p = params(1.0);
        assert!(matches!(density_natural(0.0, 0.5, &p), Err(Error::SingularPoint { .. })));
        assert!(density_natural(0.5, 1.0, &p).is_err());
    }

    #[test]
    fn natural_density_integrates_to_one() {
        // μ = M sin²t removes the endpoint singularities: dμ = M sin 2t dt.
        let m = 0.9;
        let p = params(m);
        let gl = GaussLegendre::new(40);
        let total = gl.integrate(0.0, PI / 2.0, |t| {
            let x = m * t.sin().powi(2);
            let jx = m * (2.0 * t).sin();
            gl.integrate(0.0, PI / 2.0, |u| {
                let y = m * u.sin().powi(2);
                let jy = m * (2.0 * u).sin();
                density_natural(x, y, &p).unwrap() * jx * jy
            })
        });
        assert_relative_eq!(total, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn shaping_acceptance_vanishes_on_edges_and_peaks_at_one() {
        let m = 0.6;
        let p = params(m);
        assert_eq!(shaping_acceptance(0.0, 0.3, &p), 0.0);
        assert_eq!(shaping_acceptance(0.3, m, &p), 0.0);
        // Grid-search oracle for the maximum.
        let n = 2000;
        let mut best = (0.0, 0.0);
        for i in 1..n {
            let x = m * i as f64 / n as f64;
            let q = shaping_acceptance(x, x, &p);
            if q > best.0 {
                best = (q, x);
            }
        }
        assert!(best.0 <= 1.0);
        assert!(1.0 - best.0 < 1e-5);
        assert!((best.1 - shaping_peak(m)).abs() < 2.0 * m / n as f64);
        assert_relative_eq!(shaping_acceptance(shaping_peak(m), shaping_peak(m), &p), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn shaped_density_is_natural_times_acceptance_up_to_constant() {
        let m = 0.75;
        let p = params(m);
        let mut ratios = Vec::new();
        for i in 1..20 {
            for j in 1..20 {
                let x = m * i as f64 / 20.0;
                let y = m * j as f64 / 20.0;
                let prod = density_natural(x, y, &p).unwrap() * shaping_acceptance(x, y, &p);
                ratios.push(density_shaped(x, y, &p) / prod);
            }
        }
        let r0 = ratios[0];
        for r in ratios {
            assert_relative_eq!(r, r0, max_relative = 1e-9);
        }
        // The constant is the inverse acceptance rate.
        assert_relative_eq!(1.0 / r0, shaping_acceptance_rate(&p), max_relative = 1e-12);
    }

    #[test]
    fn shaped_density_normalization() {
        let m = 1.3;
        let p = params(m);
        assert_relative_eq!(density_shaped(0.0, 0.0, &p), 1.0 / m.exp_m1().powi(2), max_relative = 1e-15);
        let gl = GaussLegendre::new(24);
        let total = gl.integrate(0.0, m, |x| gl.integrate(0.0, m, |y| density_shaped(x, y, &p)));
        assert_relative_eq!(total, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn shaped_density_small_intensity_limit_is_uniform() {
        for m in [1e-3, 1e-5] {
            let p = params(m);
            // Taylor: e^(x+y)/(e^M-1)^2 = (1 + O(M)) / M^2.
            let d = density_shaped(m / 2.0, m / 2.0, &p) * m * m;
            assert!((d - 1.0).abs() < 2.0 * m);
        }
    }

    #[test]
    fn acceptance_rate_matches_quadrature() {
        let m = 0.5;
        let p = params(m);
        let gl = GaussLegendre::new(48);
        let rate = gl.integrate(0.0, PI / 2.0, |t| {
            let x = m * t.sin().powi(2);
            gl.integrate(0.0, PI / 2.0, |u| {
                let y = m * u.sin().powi(2);
                let jac = m * m * (2.0 * t).sin() * (2.0 * u).sin();
                density_natural(x, y, &p).unwrap() * shaping_acceptance(x, y, &p) * jac
            })
        });
        assert_relative_eq!(rate, shaping_acceptance_rate(&p), max_relative = 1e-10);
    }

    #[test]
    fn arcsine_quantile_midpoint() {
        assert_relative_eq!(arcsine_quantile(0.5, 2.0), 1.0, epsilon = 1e-15);
        for u in [0.1, 0.37, 0.9] {
            assert_relative_eq!(arcsine_cdf(arcsine_quantile(u, 1.3), 1.3), u, epsilon = 1e-13);
        }
    }

    fn ks_distance(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max((i as f64 + 1.0) / n - f)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn natural_samples_follow_arcsine_law() {
        let m = 0.7;
        let p = params(m);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_natural(&mut rng, &p).mu_h).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        // Arcsine variance M²/8.
        let sigma = (m * m / 8.0 / n as f64).sqrt();
        assert!((mean - m / 2.0).abs() < 3.0 * sigma);
        assert!(ks_distance(xs, |x| arcsine_cdf(x, m)) < 0.01);
    }

    #[test]
    fn shaped_samples_follow_exponential_marginal() {
        let m = 0.5;
        let p = params(m);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 100_000;
        let mut hs = Vec::with_capacity(n);
        let mut vs = Vec::with_capacity(n);
        for _ in 0..n {
            let s = sample_source(&mut rng, &p, true);
            hs.push(s.mu_h);
            vs.push(s.mu_v);
        }
        assert!(ks_distance(hs, |x| shaped_marginal_cdf(x, m)) < 0.01);
        assert!(ks_distance(vs, |x| shaped_marginal_cdf(x, m)) < 0.01);
    }

    #[test]
    fn shaped_sample_histogram_matches_exponential_density() {
        // 5x5 cells, chi-square against C e^(x+y) cell masses.
        let m = 1.0;
        let p = params(m);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 50_000;
        let k = 5;
        let mut counts = [[0u32; 5]; 5];
        for _ in 0..n {
            let s = sample_source(&mut rng, &p, true);
            let i = ((s.mu_h / m * k as f64) as usize).min(k - 1);
            let j = ((s.mu_v / m * k as f64) as usize).min(k - 1);
            counts[i][j] += 1;
        }
        let cell = |i: usize| {
            let a = m * i as f64 / k as f64;
            let b = m * (i + 1) as f64 / k as f64;
            (b.exp() - a.exp()) / m.exp_m1()
        };
        let mut chi2 = 0.0;
        for i in 0..k {
            for j in 0..k {
                let e = n as f64 * cell(i) * cell(j);
                chi2 += (counts[i][j] as f64 - e).powi(2) / e;
            }
        }
        // 24 dof; the 0.999 quantile is about 51.2.
        assert!(chi2 < 51.2, "chi2 = {chi2}");
    }

    #[test]
    fn rejection_rate_matches_closed_form() {
        let p = params(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let n = 40_000u64;
        let emitted: u64 = (0..n).map(|_| sample_shaped(&mut rng, &p).1).sum();
        let rate = n as f64 / emitted as f64;
        let expect = shaping_acceptance_rate(&p);
        let sigma = (expect * (1.0 - expect) / emitted as f64).sqrt();
        assert!((rate - expect).abs() < 4.0 * sigma, "{rate} vs {expect}");
    }
}
