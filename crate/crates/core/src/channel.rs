//! Threshold-detector model of the untrusted Bell-state measurement.
//!
//! Both parties send a two-mode coherent state `c0|H⟩ + c1 e^{iφ}|V⟩` of intensity μ through
//! lossy fiber into a 50/50 splitter followed by polarizing splitters and four threshold
//! detectors. Gains are averaged over the relative global phase of the two pulses.

use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::regions::Basis;
use crate::source::SourceSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BellOutcome {
    PsiMinus,
    PsiPlus,
}

impl BellOutcome {
    pub const ALL: [BellOutcome; 2] = [BellOutcome::PsiMinus, BellOutcome::PsiPlus];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            BellOutcome::PsiMinus => "psi_minus",
            BellOutcome::PsiPlus => "psi_plus",
        }
    }
}

/// Whether a successful outcome on bits (a, b) counts as an error.
///
/// In Z both outcomes announce anti-correlated bits. In X, Ψ⁻ announces anti-correlated and
/// Ψ⁺ correlated bits.
pub fn is_error(basis: Basis, outcome: BellOutcome, bit_a: u8, bit_b: u8) -> bool {
    match (basis, outcome) {
        (Basis::Z, _) | (Basis::X, BellOutcome::PsiMinus) => bit_a == bit_b,
        (Basis::X, BellOutcome::PsiPlus) => bit_a != bit_b,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodedState {
    pub mu: f64,
    pub c0: f64,
    pub c1: f64,
    pub phi: f64,
}

impl EncodedState {
    pub fn new(mu: f64, c0: f64, c1: f64, phi: f64) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(invalid("mu", "must be finite and non-negative"));
        }
        if !(c0 >= 0.0 && c1 >= 0.0) || (c0 * c0 + c1 * c1 - 1.0).abs() > 1e-12 {
            return Err(invalid("c0/c1", "need c0, c1 ≥ 0 with c0² + c1² = 1"));
        }
        Ok(Self { mu, c0, c1, phi })
    }

    /// State with polar angle θ on the Bloch sphere.
    pub fn from_bloch(mu: f64, theta: f64, phi: f64) -> Self {
        let (s, c) = (0.5 * theta).sin_cos();
        Self { mu, c0: c, c1: s, phi }
    }

    pub fn vacuum() -> Self {
        Self { mu: 0.0, c0: 1.0, c1: 0.0, phi: 0.0 }
    }

    /// Ideal BB84 state: Z0 = H, Z1 = V, X0 = +, X1 = −.
    pub fn bb84(basis: Basis, bit: u8, mu: f64) -> Self {
        match (basis, bit) {
            (Basis::Z, 0) => Self { mu, c0: 1.0, c1: 0.0, phi: 0.0 },
            (Basis::Z, _) => Self { mu, c0: 0.0, c1: 1.0, phi: 0.0 },
            (Basis::X, 0) => Self { mu, c0: core::f64::consts::FRAC_1_SQRT_2, c1: core::f64::consts::FRAC_1_SQRT_2, phi: 0.0 },
            (Basis::X, _) => Self { mu, c0: core::f64::consts::FRAC_1_SQRT_2, c1: core::f64::consts::FRAC_1_SQRT_2, phi: PI },
        }
    }
}

/// Polarization state carried by a source sample. Zero intensity maps to the vacuum marker.
pub fn state_from_sample(s: &SourceSample) -> EncodedState {
    let mu = s.mu_h + s.mu_v;
    if mu <= 0.0 {
        return EncodedState::vacuum();
    }
    EncodedState { mu, c0: (s.mu_h / mu).sqrt(), c1: (s.mu_v / mu).sqrt(), phi: s.phi }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub eta_a: f64,
    pub eta_b: f64,
    pub p_d: f64,
    pub e_d: f64,
    /// Fiber loss in dB/km.
    pub alpha: f64,
    pub l_a: f64,
    pub l_b: f64,
    pub eta_d: f64,
}

impl ChannelParams {
    /// Transmittances from fiber lengths: η = η_D · 10^(−α l / 10).
    pub fn fiber(eta_d: f64, alpha: f64, l_a: f64, l_b: f64, p_d: f64, e_d: f64) -> Result<Self> {
        let eta = |l: f64| eta_d * 10f64.powf(-alpha * l / 10.0);
        let ch = Self { eta_a: eta(l_a), eta_b: eta(l_b), p_d, e_d, alpha, l_a, l_b, eta_d };
        ch.validate()?;
        Ok(ch)
    }

    /// Charlie in the middle of a link of total length `distance`.
    pub fn symmetric(eta_d: f64, alpha: f64, distance: f64, p_d: f64, e_d: f64) -> Result<Self> {
        Self::fiber(eta_d, alpha, 0.5 * distance, 0.5 * distance, p_d, e_d)
    }

    /// Direct transmittances, for tests and hypothetical channels.
    pub fn with_transmittances(eta_a: f64, eta_b: f64, p_d: f64, e_d: f64) -> Result<Self> {
        let ch = Self { eta_a, eta_b, p_d, e_d, alpha: 0.0, l_a: 0.0, l_b: 0.0, eta_d: 1.0 };
        ch.validate()?;
        Ok(ch)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.eta_a) || !unit(self.eta_b) || !unit(self.eta_d) {
            return Err(invalid("eta", "transmittances must lie in [0, 1]"));
        }
        if !unit(self.p_d) {
            return Err(invalid("p_d", "must lie in [0, 1]"));
        }
        if !(0.0..=0.5).contains(&self.e_d) {
            return Err(invalid("e_d", "must lie in [0, 1/2]"));
        }
        if !(self.alpha >= 0.0 && self.l_a >= 0.0 && self.l_b >= 0.0) {
            return Err(invalid("alpha/l", "loss and lengths must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BellGains {
    pub q_minus: f64,
    pub q_plus: f64,
}

impl BellGains {
    pub fn get(&self, outcome: BellOutcome) -> f64 {
        match outcome {
            BellOutcome::PsiMinus => self.q_minus,
            BellOutcome::PsiPlus => self.q_plus,
        }
    }

    pub fn total(&self) -> f64 {
        self.q_minus + self.q_plus
    }
}

const SERIES_LIMIT: f64 = 30.0;

/// I₀(x) − 1 without cancellation for small x.
pub fn bessel_i0_m1(x: f64) -> f64 {
    let x = x.abs();
    if x > SERIES_LIMIT {
        return bessel_i0(x) - 1.0;
    }
    let q = 0.25 * x * x;
    let mut term = q;
    let mut sum = q;
    for k in 2..200 {
        let kf = k as f64;
        term *= q / (kf * kf);
        sum += term;
        if term <= 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Modified Bessel function of the first kind, order zero.
pub fn bessel_i0(x: f64) -> f64 {
    let x = x.abs();
    if x <= SERIES_LIMIT {
        return 1.0 + bessel_i0_m1(x);
    }
    // Hankel expansion, stopped at its smallest term (≈ e^{-2x}, far below ε here).
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        let next = term * odd * odd / (k as f64 * 8.0 * x);
        if next >= term || next < 1e-17 * sum {
            break;
        }
        term = next;
        sum += term;
    }
    x.exp() / (2.0 * PI * x).sqrt() * sum
}

/// I₀(√X) − I₀(β₀) − I₀(β₁) + 1 from squared arguments, keeping the leading cancellation exact.
fn i0_excess(x_sq: f64, b0_sq: f64, b1_sq: f64, cross: f64) -> f64 {
    if x_sq > SERIES_LIMIT * SERIES_LIMIT {
        return bessel_i0_m1(x_sq.sqrt()) - bessel_i0_m1(b0_sq.sqrt()) - bessel_i0_m1(b1_sq.sqrt());
    }
    // k = 1 term: (X − β₀² − β₁²)/4 = cross/4 exactly.
    let (qx, q0, q1) = (0.25 * x_sq, 0.25 * b0_sq, 0.25 * b1_sq);
    let mut sum = 0.25 * cross;
    let (mut tx, mut t0, mut t1) = (qx, q0, q1);
    for k in 2..200 {
        let d = (k * k) as f64;
        tx *= qx / d;
        t0 *= q0 / d;
        t1 *= q1 / d;
        let t = tx - t0 - t1;
        sum += t;
        if tx.max(t0).max(t1) <= 1e-18 * (sum.abs() + 1e-300) {
            break;
        }
    }
    sum
}

struct Mixing {
    gamma: f64,
    gamma0: f64,
    gamma1: f64,
    beta0: f64,
    beta1: f64,
}

fn mixing(a: &EncodedState, b: &EncodedState, ch: &ChannelParams) -> Mixing {
    let ka = ch.eta_a * a.mu;
    let kb = ch.eta_b * b.mu;
    let root = (ka * kb).sqrt();
    Mixing {
        gamma: 0.5 * (ka + kb),
        gamma0: 0.5 * (a.c0 * a.c0 * ka + b.c0 * b.c0 * kb),
        gamma1: 0.5 * (a.c1 * a.c1 * ka + b.c1 * b.c1 * kb),
        beta0: a.c0 * b.c0 * root,
        beta1: a.c1 * b.c1 * root,
    }
}

/// Phase-averaged gains with the exact Bessel function of the combined argument
/// √(β₀² + β₁² ∓ 2β₀β₁ cos φ).
///
/// Written as a polynomial in p_d with every coefficient a sum of non-negative pieces (or an
/// exactly cancelled series), so tiny gains such as HH in Z keep full relative precision.
pub fn bell_gains(a: &EncodedState, b: &EncodedState, ch: &ChannelParams) -> BellGains {
    let m = mixing(a, b, ch);
    let y = 1.0 - ch.p_d;
    let e0 = -(-m.gamma0).exp_m1();
    let e1 = -(-m.gamma1).exp_m1();
    let j0 = bessel_i0_m1(m.beta0);
    let j1 = bessel_i0_m1(m.beta1);
    let eg = (-m.gamma).exp();
    let d1 = eg * ((-m.gamma0).exp() * (j1 + e1) + (-m.gamma1).exp() * (j0 + e0));
    let vac = eg * eg;
    let cos = (a.phi - b.phi).cos();
    let gain = |sign: f64| {
        let cross = sign * 2.0 * m.beta0 * m.beta1 * cos;
        let x_sq = (m.beta0 * m.beta0 + m.beta1 * m.beta1 + cross).max(0.0);
        let excess = i0_excess(x_sq, m.beta0 * m.beta0, m.beta1 * m.beta1, cross);
        let d0 = eg * (e0 * e1 + e0 * j1 + e1 * j0 + excess);
        (2.0 * y * y * (d0 + ch.p_d * d1 + ch.p_d * ch.p_d * vac)).clamp(0.0, 1.0)
    };
    BellGains { q_minus: gain(-1.0), q_plus: gain(1.0) }
}

/// The same gains with I₀(√X) replaced by its first-order expansion 1 + X/4.
pub fn bell_gains_first_order(a: &EncodedState, b: &EncodedState, ch: &ChannelParams) -> BellGains {
    let m = mixing(a, b, ch);
    let y = 1.0 - ch.p_d;
    let e0 = -(-m.gamma0).exp_m1();
    let e1 = -(-m.gamma1).exp_m1();
    let j0 = bessel_i0_m1(m.beta0);
    let j1 = bessel_i0_m1(m.beta1);
    let eg = (-m.gamma).exp();
    let d1 = eg * ((-m.gamma0).exp() * (j1 + e1) + (-m.gamma1).exp() * (j0 + e0));
    let cos = (a.phi - b.phi).cos();
    let gain = |sign: f64| {
        let x_sq = m.beta0 * m.beta0 + m.beta1 * m.beta1 + sign * 2.0 * m.beta0 * m.beta1 * cos;
        let excess = 0.25 * x_sq - j0 - j1;
        let d0 = eg * (e0 * e1 + e0 * j1 + e1 * j0 + excess);
        2.0 * y * y * (d0 + ch.p_d * d1 + ch.p_d * ch.p_d * eg * eg)
    };
    BellGains { q_minus: gain(-1.0), q_plus: gain(1.0) }
}

/// e = e_d(1 − ê) + (1 − e_d)ê.
pub fn misalignment_mix(e_hat: f64, e_d: f64) -> f64 {
    e_d * (1.0 - e_hat) + (1.0 - e_d) * e_hat
}

/// Per-outcome QBER of one basis from the gains of its four encoding pairs, indexed
/// `[bit_a][bit_b]`.
pub fn qber_from_gains(gains: &[[BellGains; 2]; 2], basis: Basis, e_d: f64) -> Result<[f64; 2]> {
    let mut out = [0.0; 2];
    for outcome in BellOutcome::ALL {
        let (mut err, mut total) = (0.0, 0.0);
        for (bit_a, row) in gains.iter().enumerate() {
            for (bit_b, g) in row.iter().enumerate() {
                let q = g.get(outcome);
                total += q;
                if is_error(basis, outcome, bit_a as u8, bit_b as u8) {
                    err += q;
                }
            }
        }
        if !(total > 0.0) {
            return Err(Error::UndefinedQber);
        }
        out[outcome.index()] = misalignment_mix(err / total, e_d);
    }
    Ok(out)
}

pub fn poisson(n: usize, mu: f64) -> f64 {
    if mu <= 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let mut p = (-mu).exp();
    for k in 1..=n {
        p *= mu / k as f64;
    }
    p
}

pub fn joint_poisson(n: usize, m: usize, mu_a: f64, mu_b: f64) -> f64 {
    poisson(n, mu_a) * poisson(m, mu_b)
}

/// Per-outcome yields when each party emits exactly one photon in the given polarization,
/// with `cos_phase` standing for cos(φ_A − φ_B).
///
/// The yields are linear in `cos_phase`, so phase-window averages may be taken by averaging
/// that argument alone.
pub fn single_photon_yields(
    a: (f64, f64),
    b: (f64, f64),
    cos_phase: f64,
    ch: &ChannelParams,
) -> BellGains {
    let (c0, c1) = a;
    let (d0, d1) = b;
    let (ea, eb) = (ch.eta_a, ch.eta_b);
    let y = 1.0 - ch.p_d;
    let term = |alpha: f64, beta: f64, kappa: f64| (1.0 - alpha * ea) * (1.0 - beta * eb) + kappa * ea * eb;
    let shared = -y * term(0.5 * (1.0 + c0 * c0), 0.5 * (1.0 + d0 * d0), 0.25 * c1 * c1 * d1 * d1)
        - y * term(0.5 * (1.0 + c1 * c1), 0.5 * (1.0 + d1 * d1), 0.25 * c0 * c0 * d0 * d0)
        + y * y * term(1.0, 1.0, 0.0);
    let diag = c0 * c0 * d0 * d0 + c1 * c1 * d1 * d1;
    let off = 2.0 * c0 * c1 * d0 * d1 * cos_phase;
    let yield_for = |k: f64| (2.0 * y * y * (term(0.5, 0.5, 0.25 * k) + shared)).clamp(0.0, 1.0);
    BellGains { q_minus: yield_for(diag - off), q_plus: yield_for(diag + off) }
}
