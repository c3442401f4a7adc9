//! Post-selection regions S_{i,k}^Ω.
//!
//! Each party maps (μ_H, μ_V) to polar coordinates (r, θ_μ). The basis and bit are chosen by
//! angular bands (and, in the X basis, by an azimuth window); decoy settings are concentric
//! radii μ_max ≥ t₁μ_max ≥ t₂μ_max, so the decoy sets are nested rather than disjoint.

use core::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Result};
use crate::quadrature::GaussLegendre;
use crate::source::{shaped_normalization, SourceParams, SourceSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::Z, Basis::X];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl core::fmt::Display for Basis {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Basis::Z => "Z",
            Basis::X => "X",
        })
    }
}

/// Decoy setting, ordered from the outermost radius (χ) to the innermost (ω).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Decoy {
    Chi,
    Nu,
    Omega,
}

impl Decoy {
    pub const ALL: [Decoy; 3] = [Decoy::Chi, Decoy::Nu, Decoy::Omega];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Decoy::Chi => "chi",
            Decoy::Nu => "nu",
            Decoy::Omega => "omega",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionParams {
    /// Angular half-width of the Z bands.
    pub delta_z: f64,
    /// Angular half-width of the X band around θ_μ = π/4.
    pub delta_x: f64,
    /// Azimuth half-width of the X bit windows.
    pub delta_phi: f64,
    pub t1: f64,
    pub t2: f64,
}

impl RegionParams {
    pub fn new(delta_z: f64, delta_x: f64, delta_phi: f64, t1: f64, t2: f64) -> Result<Self> {
        let rp = Self { delta_z, delta_x, delta_phi, t1, t2 };
        rp.validate()?;
        Ok(rp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_z > 0.0 && self.delta_z <= FRAC_PI_4) {
            return Err(invalid("delta_z", "must lie in (0, π/4]"));
        }
        if !(self.delta_x > 0.0 && self.delta_x <= FRAC_PI_4) {
            return Err(invalid("delta_x", "must lie in (0, π/4]"));
        }
        if !(self.delta_z < FRAC_PI_4 - self.delta_x) {
            return Err(invalid("delta_z", "Z and X bands overlap (need Δ_Z < π/4 − Δ_X)"));
        }
        if !(self.delta_phi > 0.0 && self.delta_phi <= FRAC_PI_2) {
            return Err(invalid("delta_phi", "must lie in (0, π/2]"));
        }
        if !(self.t2 > 0.0 && self.t2 < self.t1 && self.t1 < 1.0) {
            return Err(invalid("t1/t2", "need 0 < t2 < t1 < 1"));
        }
        Ok(())
    }

    pub fn radius(&self, decoy: Decoy, sp: &SourceParams) -> f64 {
        sp.mu_max()
            * match decoy {
                Decoy::Chi => 1.0,
                Decoy::Nu => self.t1,
                Decoy::Omega => self.t2,
            }
    }

    /// θ_μ interval of a (basis, bit) band.
    pub fn angular_range(&self, basis: Basis, bit: u8) -> (f64, f64) {
        match (basis, bit) {
            (Basis::Z, 0) => (0.0, self.delta_z),
            (Basis::Z, _) => (FRAC_PI_2 - self.delta_z, FRAC_PI_2),
            (Basis::X, _) => (FRAC_PI_4 - self.delta_x, FRAC_PI_4 + self.delta_x),
        }
    }

    /// Azimuth window as (center, half-width); `None` means the full circle.
    pub fn phase_window(&self, basis: Basis, bit: u8) -> Option<(f64, f64)> {
        match (basis, bit) {
            (Basis::Z, _) => None,
            (Basis::X, 0) => Some((0.0, self.delta_phi)),
            (Basis::X, _) => Some((PI, self.delta_phi)),
        }
    }

    /// Probability that a uniform azimuth lands in the window.
    pub fn phase_fraction(&self, basis: Basis, bit: u8) -> f64 {
        match self.phase_window(basis, bit) {
            None => 1.0,
            Some((_, half)) => half / PI,
        }
    }
}

/// Basis, bit and decoy memberships of one classified pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RegionLabel {
    pub basis: Basis,
    pub bit: u8,
    /// Innermost decoy set containing the pulse; it is also a member of every outer one.
    pub innermost: Decoy,
}

impl RegionLabel {
    pub fn is_member(&self, decoy: Decoy) -> bool {
        decoy <= self.innermost
    }

    pub fn memberships(&self) -> impl Iterator<Item = Decoy> + '_ {
        Decoy::ALL.into_iter().filter(move |d| self.is_member(*d))
    }
}

/// S_{i,k}^Ω, or S_i^Ω = S_{i,0}^Ω ∪ S_{i,1}^Ω when `bit` is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Region {
    pub basis: Basis,
    pub bit: Option<u8>,
    pub decoy: Decoy,
}

impl Region {
    pub fn new(basis: Basis, bit: Option<u8>, decoy: Decoy) -> Self {
        Self { basis, bit, decoy }
    }

    pub fn contains(&self, label: &RegionLabel) -> bool {
        label.basis == self.basis
            && self.bit.map_or(true, |b| b == label.bit)
            && label.is_member(self.decoy)
    }

    pub fn bits(&self) -> impl Iterator<Item = u8> {
        let (lo, hi) = match self.bit {
            Some(b) => (b, b),
            None => (0, 1),
        };
        lo..=hi
    }
}

fn in_window(phi: f64, center: f64, half: f64) -> bool {
    // Offset from the window start, modulo 2π; inclusive lower, exclusive upper.
    let mut d = (phi - (center - half)) % TAU;
    if d < 0.0 {
        d += TAU;
    }
    d < 2.0 * half
}

pub fn classify(sample: &SourceSample, rp: &RegionParams, sp: &SourceParams) -> Option<RegionLabel> {
    let pc = sample.polar();
    let m = sp.mu_max();
    let innermost = if pc.r <= rp.t2 * m {
        Decoy::Omega
    } else if pc.r <= rp.t1 * m {
        Decoy::Nu
    } else if pc.r <= m {
        Decoy::Chi
    } else {
        return None;
    };
    let theta = pc.theta_mu;
    let (basis, bit) = if theta < rp.delta_z {
        (Basis::Z, 0)
    } else if theta >= FRAC_PI_2 - rp.delta_z {
        (Basis::Z, 1)
    } else if theta >= FRAC_PI_4 - rp.delta_x && theta < FRAC_PI_4 + rp.delta_x {
        if in_window(sample.phi, 0.0, rp.delta_phi) {
            (Basis::X, 0)
        } else if in_window(sample.phi, PI, rp.delta_phi) {
            (Basis::X, 1)
        } else {
            return None;
        }
    } else {
        return None;
    };
    Some(RegionLabel { basis, bit, innermost })
}

/// ∫₀^R r^k e^{s r} dr by its (all-positive) power series.
pub(crate) fn radial_exp_moment(k: usize, s: f64, radius: f64) -> f64 {
    let mut term = radius.powi(k as i32 + 1);
    let mut sum = term / (k as f64 + 1.0);
    let x = s * radius;
    for j in 1..400 {
        term *= x / j as f64;
        let t = term / (j + k + 1) as f64;
        sum += t;
        if t.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

const ANGULAR_NODES: usize = 48;

/// Mass of the shaped density over {r ≤ radius, θ_μ ∈ [lo, hi]} (phase unrestricted).
pub fn sector_mass(lo: f64, hi: f64, radius: f64, sp: &SourceParams) -> f64 {
    let gl = GaussLegendre::new(ANGULAR_NODES);
    let c = shaped_normalization(sp);
    c * gl.integrate(lo, hi, |t| radial_exp_moment(1, t.sin() + t.cos(), radius))
}

/// P_{S} for one party under the shaped source law.
pub fn party_probability(region: &Region, sp: &SourceParams, rp: &RegionParams) -> f64 {
    let r = rp.radius(region.decoy, sp);
    region
        .bits()
        .map(|bit| {
            let (lo, hi) = rp.angular_range(region.basis, bit);
            sector_mass(lo, hi, r, sp) * rp.phase_fraction(region.basis, bit)
        })
        .sum()
}

/// P_{S_i S_j} = P_{S_i} · P_{S_j}; both parties use the same source and region settings.
pub fn region_probability(
    region_i: &Region,
    region_j: &Region,
    sp: &SourceParams,
    rp: &RegionParams,
) -> f64 {
    party_probability(region_i, sp, rp) * party_probability(region_j, sp, rp)
}

/// Bit-flip probability ξ of the post-selected Z states and the size of their averaged
/// off-diagonal coherence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedStateSummary {
    pub xi: f64,
    pub offdiag_magnitude: f64,
}

/// ξ = E[sin²(θ/2)] over the Z0 region (θ the Bloch angle), and |E[e^{iφ} cos(θ/2) sin(θ/2)]|.
pub fn bitflip_probability(rp: &RegionParams, sp: &SourceParams) -> MixedStateSummary {
    let gl = GaussLegendre::new(ANGULAR_NODES);
    let m = sp.mu_max();
    let (mut mass, mut flip, mut coherence) = (0.0, 0.0, 0.0);
    for (t, w) in gl.on(0.0, rp.delta_z) {
        let (s, c) = t.sin_cos();
        let weight = w * radial_exp_moment(1, s + c, m);
        mass += weight;
        // sin²(θ/2) = μ_V/μ and cos(θ/2)sin(θ/2) = √(μ_H μ_V)/μ in terms of θ_μ.
        flip += weight * s / (s + c);
        coherence += weight * (s * c).sqrt() / (s + c);
    }
    let phase = GaussLegendre::new(ANGULAR_NODES);
    let (re, im) = phase.on(0.0, TAU).fold((0.0, 0.0), |(re, im), (p, w)| {
        (re + w * p.cos() / TAU, im + w * p.sin() / TAU)
    });
    MixedStateSummary {
        xi: flip / mass,
        offdiag_magnitude: re.hypot(im) * coherence / mass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::{density_shaped, sample_shaped};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rp() -> RegionParams {
        RegionParams::new(0.15, 0.15, 0.3, 0.6, 0.2).unwrap()
    }

    fn sample_at(r: f64, theta: f64, phi: f64) -> SourceSample {
        let (s, c) = theta.sin_cos();
        SourceSample { mu_h: r * c, mu_v: r * s, phi, phi_g: 0.0 }
    }

    #[test]
    fn validation() {
        assert!(RegionParams::new(0.0, 0.1, 0.1, 0.5, 0.1).is_err());
        assert!(RegionParams::new(0.4, 0.4, 0.1, 0.5, 0.1).is_err());
        assert!(RegionParams::new(0.1, 0.1, 1.6, 0.5, 0.1).is_err());
        assert!(RegionParams::new(0.1, 0.1, 0.1, 0.5, 0.5).is_err());
        assert!(RegionParams::new(0.1, 0.1, 0.1, 1.0, 0.5).is_err());
        assert!(RegionParams::new(0.1, 0.1, FRAC_PI_2, 0.9, 0.5).is_ok());
    }

    #[test]
    fn axis_point_is_z0() {
        let sp = SourceParams::from_mu_max(1.0).unwrap();
        let l = classify(&sample_at(0.5, 0.0, 2.0), &rp(), &sp).unwrap();
        assert_eq!((l.basis, l.bit, l.innermost), (Basis::Z, 0, Decoy::Nu));
        assert!(l.is_member(Decoy::Chi) && l.is_member(Decoy::Nu) && !l.is_member(Decoy::Omega));
        let l = classify(&sample_at(0.9, FRAC_PI_2, 0.1), &rp(), &sp).unwrap();
        assert_eq!((l.basis, l.bit, l.innermost), (Basis::Z, 1, Decoy::Chi));
    }

    #[test]
    fn diagonal_point_is_x0_in_every_decoy() {
        let sp = SourceParams::from_mu_max(1.0).unwrap();
        let l = classify(&sample_at(0.05, FRAC_PI_4, 0.0), &rp(), &sp).unwrap();
        assert_eq!((l.basis, l.bit, l.innermost), (Basis::X, 0, Decoy::Omega));
        assert_eq!(l.memberships().count(), 3);
        let l = classify(&sample_at(0.05, FRAC_PI_4, PI + 0.1), &rp(), &sp).unwrap();
        assert_eq!((l.basis, l.bit), (Basis::X, 1));
        let l = classify(&sample_at(0.05, FRAC_PI_4, TAU - 0.1), &rp(), &sp).unwrap();
        assert_eq!((l.basis, l.bit), (Basis::X, 0));
    }

    #[test]
    fn gaps_and_outer_corner_are_discarded() {
        let sp = SourceParams::from_mu_max(1.0).unwrap();
        let p = rp();
        assert!(classify(&sample_at(0.5, FRAC_PI_4 - p.delta_x - 1e-6, 0.0), &p, &sp).is_none());
        assert!(classify(&sample_at(0.5, FRAC_PI_4, FRAC_PI_2), &p, &sp).is_none());
        assert!(classify(&sample_at(1.2, FRAC_PI_4, 0.0), &p, &sp).is_none());
    }

    #[test]
    fn radial_moment_closed_form() {
        for (s, r) in [(1.0, 0.5), (1.4, 1.0), (1.2, 4.0)] {
            let closed = ((s * r).exp() * (s * r - 1.0) + 1.0) / (s * s);
            assert_relative_eq!(radial_exp_moment(1, s, r), closed, max_relative = 1e-12);
        }
        let gl = GaussLegendre::new(40);
        for (k, s, r) in [(1, 1e-3, 0.2), (0, 0.7, 1.0), (3, 1.41, 0.9), (5, 0.0, 1.0)] {
            let quad = gl.integrate(0.0, r, |x| x.powi(k as i32) * (s * x).exp());
            assert_relative_eq!(radial_exp_moment(k, s, r), quad, max_relative = 1e-13);
        }
    }

    #[test]
    fn sector_mass_matches_cartesian_quadrature() {
        let sp = SourceParams::from_mu_max(0.8).unwrap();
        // Whole quarter disk of radius μ_max in Cartesian coordinates, x = μ_max sin t.
        let gl = GaussLegendre::new(64);
        let m = 0.8;
        let brute = gl.integrate(0.0, FRAC_PI_2, |t| {
            let (x, ymax) = (m * t.sin(), m * t.cos());
            ymax * gl.integrate(0.0, ymax, |y| density_shaped(x, y, &sp))
        });
        assert_relative_eq!(sector_mass(0.0, FRAC_PI_2, m, &sp), brute, max_relative = 1e-8);
    }

    #[test]
    fn small_intensity_z0_mass_is_sector_area() {
        let sp = SourceParams::from_mu_max(0.01).unwrap();
        let p = RegionParams::new(0.2, 0.2, 0.3, 0.6, 0.2).unwrap();
        let pz = party_probability(&Region::new(Basis::Z, Some(0), Decoy::Chi), &sp, &p);
        assert!((pz - 0.1).abs() / 0.1 < 0.01, "{pz}");
    }

    #[test]
    fn x_window_scales_band_mass() {
        let sp = SourceParams::from_mu_max(0.6).unwrap();
        let p = rp();
        let band = sector_mass(FRAC_PI_4 - p.delta_x, FRAC_PI_4 + p.delta_x, sp.mu_max(), &sp);
        let x0 = party_probability(&Region::new(Basis::X, Some(0), Decoy::Chi), &sp, &p);
        assert_relative_eq!(x0, band * 2.0 * p.delta_phi / TAU, max_relative = 1e-14);
    }

    #[test]
    fn nested_decoys_and_bit_symmetry() {
        let sp = SourceParams::from_mu_max(0.6).unwrap();
        let p = rp();
        for basis in Basis::ALL {
            let prob = |d| party_probability(&Region::new(basis, None, d), &sp, &p);
            assert!(prob(Decoy::Omega) < prob(Decoy::Nu));
            assert!(prob(Decoy::Nu) < prob(Decoy::Chi));
        }
        let z0 = party_probability(&Region::new(Basis::Z, Some(0), Decoy::Chi), &sp, &p);
        let z1 = party_probability(&Region::new(Basis::Z, Some(1), Decoy::Chi), &sp, &p);
        assert_relative_eq!(z0, z1, max_relative = 1e-13);
        let a = Region::new(Basis::Z, None, Decoy::Chi);
        let b = Region::new(Basis::X, Some(1), Decoy::Nu);
        assert_relative_eq!(
            region_probability(&a, &b, &sp, &p),
            party_probability(&a, &sp, &p) * party_probability(&b, &sp, &p)
        );
    }

    #[test]
    fn region_membership() {
        let label = RegionLabel { basis: Basis::X, bit: 1, innermost: Decoy::Nu };
        assert!(Region::new(Basis::X, None, Decoy::Chi).contains(&label));
        assert!(Region::new(Basis::X, Some(1), Decoy::Nu).contains(&label));
        assert!(!Region::new(Basis::X, Some(0), Decoy::Nu).contains(&label));
        assert!(!Region::new(Basis::X, None, Decoy::Omega).contains(&label));
        assert!(!Region::new(Basis::Z, None, Decoy::Chi).contains(&label));
    }

    #[test]
    fn classified_frequencies_match_region_probabilities() {
        let sp = SourceParams::from_mu_max(0.5).unwrap();
        let p = rp();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 1_000_000;
        let regions = [
            Region::new(Basis::Z, Some(0), Decoy::Chi),
            Region::new(Basis::Z, Some(1), Decoy::Nu),
            Region::new(Basis::X, Some(0), Decoy::Chi),
            Region::new(Basis::X, None, Decoy::Omega),
        ];
        let mut counts = [0u32; 4];
        let mut classified = 0;
        for _ in 0..n {
            let (s, _) = sample_shaped(&mut rng, &sp);
            if let Some(l) = classify(&s, &p, &sp) {
                classified += 1;
                for (c, r) in counts.iter_mut().zip(&regions) {
                    if r.contains(&l) {
                        *c += 1;
                    }
                }
            }
        }
        assert!(classified < n);
        for (c, r) in counts.iter().zip(&regions) {
            let prob = party_probability(r, &sp, &p);
            let sigma = (prob * (1.0 - prob) / n as f64).sqrt();
            let z = (*c as f64 / n as f64 - prob) / sigma;
            assert!(z.abs() < 3.0, "{r:?}: z = {z}");
        }
    }

    #[test]
    fn xi_vanishes_with_the_band_and_grows_monotonically() {
        let sp = SourceParams::from_mu_max(0.5).unwrap();
        let mut last = 0.0;
        for k in 1..=30 {
            let dz = 0.02 * k as f64;
            let p = RegionParams::new(dz, 0.1, 0.3, 0.6, 0.2).unwrap();
            let ms = bitflip_probability(&p, &sp);
            assert!(ms.xi >= last && ms.xi <= 0.5);
            assert!(ms.offdiag_magnitude < 1e-10);
            last = ms.xi;
        }
        let tiny = RegionParams::new(1e-6, 0.1, 0.3, 0.6, 0.2).unwrap();
        assert!(bitflip_probability(&tiny, &sp).xi < 1e-6);
    }

    #[test]
    fn xi_matches_sample_average() {
        let sp = SourceParams::from_mu_max(0.5).unwrap();
        let p = RegionParams::new(0.3, 0.1, 0.3, 0.6, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let (mut sum, mut sum2, mut n) = (0.0, 0.0, 0usize);
        while n < 50_000 {
            let (s, _) = sample_shaped(&mut rng, &sp);
            if let Some(l) = classify(&s, &p, &sp) {
                if l.basis == Basis::Z && l.bit == 0 {
                    let f = s.mu_v / s.intensity();
                    sum += f;
                    sum2 += f * f;
                    n += 1;
                }
            }
        }
        let mean = sum / n as f64;
        let sd = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
        let xi = bitflip_probability(&p, &sp).xi;
        assert!((mean - xi).abs() < 3.0 * sd, "{mean} vs {xi} (σ {sd})");
    }
}
