//! Region-pair expectations ⟨Q⟩, ⟨T⟩, ⟨P_nm⟩ and the decoupled yields Y′_nm.
//!
//! Every term of the phase-averaged gain is a product of a function of Alice's (h, v) =
//! (√(η_A μ_H), √(η_A μ_V)) and one of Bob's, once the Bessel functions are expanded in their
//! power series and I₀(|β₀ ∓ β₁e^{iψ}|) = Σ_k (∓1)^k I_k(β₀) I_k(β₁) e^{ikψ} (Graf's addition
//! theorem). A region-pair average is then a short sum of products of single-party moments,
//! and the azimuth enters only through the window Fourier coefficients E[cos kφ], which are
//! exact. Single-party moments are tensor Gauss–Legendre integrals in (r, θ_μ).

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::channel::{is_error, BellOutcome, ChannelParams};
use crate::error::{Error, Result};
use crate::quadrature::{GaussLegendre, QuadratureSpec};
use crate::regions::{party_probability, Basis, Decoy, Region, RegionParams};
use crate::source::{shaped_normalization, SourceParams};

/// Region-averaged gains of one (basis, decoy_i, decoy_j) pair, per Bell outcome.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairEntry {
    pub gain: [f64; 2],
    /// Error gain with misalignment mixing: (1 − e_d)·(erroneous) + e_d·(correct).
    pub error_gain: [f64; 2],
}

impl PairEntry {
    pub fn total_gain(&self) -> f64 {
        self.gain[0] + self.gain[1]
    }

    pub fn total_error_gain(&self) -> f64 {
        self.error_gain[0] + self.error_gain[1]
    }
}

/// Everything the decoy programs and the key rate need, for all 9 decoy pairs and both bases.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTable {
    /// Photon-number cut: ⟨P_nm⟩ is kept for n, m ≤ `cut`.
    pub cut: usize,
    /// `[basis][decoy_i][decoy_j]`.
    pub entries: [[[PairEntry; 3]; 3]; 2],
    /// Single-party photon-number marginals `[basis][decoy][n]`; ⟨P_nm⟩ = pnm_a[n]·pnm_b[m].
    pub pnm_a: [[Vec<f64>; 3]; 2],
    pub pnm_b: [[Vec<f64>; 3]; 2],
    /// Sifting probabilities P_{S_i} for each party, `[basis][decoy]`.
    pub sifting_a: [[f64; 3]; 2],
    pub sifting_b: [[f64; 3]; 2],
}

impl GainTable {
    pub fn entry(&self, basis: Basis, i: Decoy, j: Decoy) -> &PairEntry {
        &self.entries[basis.index()][i.index()][j.index()]
    }

    pub fn gain(&self, basis: Basis, i: Decoy, j: Decoy) -> f64 {
        self.entry(basis, i, j).total_gain()
    }

    pub fn error_gain(&self, basis: Basis, i: Decoy, j: Decoy) -> f64 {
        self.entry(basis, i, j).total_error_gain()
    }

    pub fn pnm(&self, basis: Basis, i: Decoy, j: Decoy, n: usize, m: usize) -> f64 {
        self.pnm_a[basis.index()][i.index()][n] * self.pnm_b[basis.index()][j.index()][m]
    }

    /// Σ_{n,m ≤ cut} ⟨P_nm⟩.
    pub fn pnm_mass(&self, basis: Basis, i: Decoy, j: Decoy) -> f64 {
        let a: f64 = self.pnm_a[basis.index()][i.index()].iter().sum();
        let b: f64 = self.pnm_b[basis.index()][j.index()].iter().sum();
        a * b
    }

    /// P_{S_i S_j} = P_{S_i} P_{S_j}.
    pub fn sifting(&self, basis: Basis, i: Decoy, j: Decoy) -> f64 {
        self.sifting_a[basis.index()][i.index()] * self.sifting_b[basis.index()][j.index()]
    }

    /// Expectations under the shaped source, convergence-checked by node doubling when
    /// `quad.check_convergence` is set (the finer result is returned).
    pub fn compute(
        sp: &SourceParams,
        rp: &RegionParams,
        ch: &ChannelParams,
        quad: &QuadratureSpec,
        cut: usize,
    ) -> Result<Self> {
        rp.validate()?;
        ch.validate()?;
        quad.validate()?;
        let coarse = Self::compute_once(sp, rp, ch, quad, cut);
        if !quad.check_convergence {
            return Ok(coarse);
        }
        let fine = Self::compute_once(sp, rp, ch, &quad.doubled(), cut);
        let mut worst = 0.0f64;
        for (c, f) in coarse.entries.iter().flatten().flatten().zip(fine.entries.iter().flatten().flatten()) {
            for k in 0..2 {
                worst = worst.max(relative_change(c.gain[k], f.gain[k]));
                worst = worst.max(relative_change(c.error_gain[k], f.error_gain[k]));
            }
        }
        for (c, f) in coarse.pnm_a.iter().flatten().flatten().zip(fine.pnm_a.iter().flatten().flatten()) {
            worst = worst.max(relative_change(*c, *f));
        }
        if worst > quad.tolerance {
            return Err(Error::Accuracy { quantity: "region-pair expectations", relative_change: worst });
        }
        Ok(fine)
    }

    fn compute_once(
        sp: &SourceParams,
        rp: &RegionParams,
        ch: &ChannelParams,
        quad: &QuadratureSpec,
        cut: usize,
    ) -> Self {
        let order = SeriesOrder::for_channel(sp, ch);
        let tables = |eta: f64| -> Vec<PartyMoments> {
            let mut out = Vec::with_capacity(12);
            for basis in Basis::ALL {
                for bit in 0..2u8 {
                    for decoy in Decoy::ALL {
                        out.push(PartyMoments::compute(eta, basis, bit, decoy, sp, rp, quad, order));
                    }
                }
            }
            out
        };
        let ta = tables(ch.eta_a);
        let tb = if ch.eta_a == ch.eta_b { ta.clone() } else { tables(ch.eta_b) };
        let at = |t: &[PartyMoments], basis: Basis, bit: u8, decoy: Decoy| {
            t[basis.index() * 6 + bit as usize * 3 + decoy.index()].clone()
        };

        let mut entries = [[[PairEntry::default(); 3]; 3]; 2];
        for basis in Basis::ALL {
            for i in Decoy::ALL {
                for j in Decoy::ALL {
                    let a = [at(&ta, basis, 0, i), at(&ta, basis, 1, i)];
                    let b = [at(&tb, basis, 0, j), at(&tb, basis, 1, j)];
                    entries[basis.index()][i.index()][j.index()] = pair_entry(basis, &a, &b, ch);
                }
            }
        }
        let marginals = || core::array::from_fn(|b| {
            core::array::from_fn(|d| pnm_marginal(Basis::ALL[b], Decoy::ALL[d], cut, sp, rp, quad))
        });
        let sifting = core::array::from_fn(|b| {
            core::array::from_fn(|d| party_probability(&Region::new(Basis::ALL[b], None, Decoy::ALL[d]), sp, rp))
        });
        Self { cut, entries, pnm_a: marginals(), pnm_b: marginals(), sifting_a: sifting, sifting_b: sifting }
    }
}

fn relative_change(coarse: f64, fine: f64) -> f64 {
    let d = (coarse - fine).abs();
    if d == 0.0 {
        0.0
    } else {
        d / fine.abs().max(f64::MIN_POSITIVE)
    }
}

/// ⟨Q⟩ and ⟨T⟩ (summed over both Bell outcomes) of one region pair.
pub fn mean_gain(
    basis: Basis,
    decoy_i: Decoy,
    decoy_j: Decoy,
    rp: &RegionParams,
    sp: &SourceParams,
    ch: &ChannelParams,
    quad: &QuadratureSpec,
) -> Result<(f64, f64)> {
    rp.validate()?;
    ch.validate()?;
    quad.validate()?;
    let once = |q: &QuadratureSpec| {
        let order = SeriesOrder::for_channel(sp, ch);
        let side = |eta: f64, decoy: Decoy| {
            [0u8, 1].map(|bit| PartyMoments::compute(eta, basis, bit, decoy, sp, rp, q, order))
        };
        let e = pair_entry(basis, &side(ch.eta_a, decoy_i), &side(ch.eta_b, decoy_j), ch);
        (e.total_gain(), e.total_error_gain())
    };
    let coarse = once(quad);
    if !quad.check_convergence {
        return Ok(coarse);
    }
    let fine = once(&quad.doubled());
    let worst = relative_change(coarse.0, fine.0).max(relative_change(coarse.1, fine.1));
    if worst > quad.tolerance {
        return Err(Error::Accuracy { quantity: "mean gain", relative_change: worst });
    }
    Ok(fine)
}

/// ⟨P_nm⟩ over S_i^Ω × S_j^Ω under the shaped source.
pub fn mean_pnm(
    basis: Basis,
    decoy_i: Decoy,
    decoy_j: Decoy,
    n: usize,
    m: usize,
    rp: &RegionParams,
    sp: &SourceParams,
    quad: &QuadratureSpec,
) -> f64 {
    let cut = n.max(m);
    pnm_marginal(basis, decoy_i, cut, sp, rp, quad)[n] * pnm_marginal(basis, decoy_j, cut, sp, rp, quad)[m]
}

/// E[e^{−μ} μⁿ/n!] over one party's region, for n = 0..=cut.
///
/// The shaped density cancels e^{−μ}, so the radial integral is R^{n+2}/((n+2) n!) and only
/// ∫ (sin θ + cos θ)ⁿ dθ needs quadrature.
fn pnm_marginal(
    basis: Basis,
    decoy: Decoy,
    cut: usize,
    sp: &SourceParams,
    rp: &RegionParams,
    quad: &QuadratureSpec,
) -> Vec<f64> {
    let gl = GaussLegendre::new(quad.nodes_angular);
    let radius = rp.radius(decoy, sp);
    let c = shaped_normalization(sp);
    let mut angular = vec![0.0; cut + 1];
    for bit in 0..2u8 {
        let (lo, hi) = rp.angular_range(basis, bit);
        let frac = rp.phase_fraction(basis, bit);
        for (t, w) in gl.on(lo, hi) {
            let s = t.sin() + t.cos();
            let mut sn = frac * w;
            for a in angular.iter_mut() {
                *a += sn;
                sn *= s;
            }
        }
    }
    let mass = party_probability(&Region::new(basis, None, decoy), sp, rp);
    let mut radial = radius * radius / 2.0;
    let mut out = Vec::with_capacity(cut + 1);
    for (n, a) in angular.iter().enumerate() {
        if n > 0 {
            radial *= radius / n as f64 * (n + 1) as f64 / (n + 2) as f64;
        }
        out.push(c * radial * a / mass);
    }
    out
}

/// Y′_nm: the (sin θ₁ + cos θ₁)ⁿ (sin θ₂ + cos θ₂)^m weighted average of a yield over the
/// angular bands of `basis`. It involves no radius, so it is the same for every decoy pair.
pub fn yprime<F: Fn(f64, f64) -> f64>(
    n: usize,
    m: usize,
    basis: Basis,
    rp: &RegionParams,
    yield_fn: F,
    quad: &QuadratureSpec,
) -> f64 {
    let gl = GaussLegendre::new(quad.nodes_angular);
    let nodes = |k: usize| -> Vec<(f64, f64)> {
        let mut v = Vec::new();
        for bit in 0..2u8 {
            let (lo, hi) = rp.angular_range(basis, bit);
            let frac = rp.phase_fraction(basis, bit);
            for (t, w) in gl.on(lo, hi) {
                v.push((t, frac * w * (t.sin() + t.cos()).powi(k as i32)));
            }
        }
        v
    };
    let (a, b) = (nodes(n), nodes(m));
    let (mut num, mut den) = (0.0, 0.0);
    for &(t1, w1) in &a {
        for &(t2, w2) in &b {
            num += w1 * w2 * yield_fn(t1, t2);
            den += w1 * w2;
        }
    }
    num / den
}

/// Truncation of the Bessel and addition-theorem series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct SeriesOrder {
    /// Highest power of h or v kept.
    max_power: usize,
}

impl SeriesOrder {
    fn for_channel(sp: &SourceParams, ch: &ChannelParams) -> Self {
        // Every product of per-party series terms is bounded by (x/2)^{2n}/(n!)² with
        // x ≥ h_A h_B, v_A v_B; stop once that is negligible against the leading x² terms.
        let x = 0.5 * ch.eta_a.max(ch.eta_b) * sp.mu_max();
        let mut term = 1.0;
        let mut n = 0;
        loop {
            n += 1;
            term *= x * x / (n * n) as f64;
            if n >= 2 && term <= 1e-17 * (x * x).max(1e-300) {
                break;
            }
            if term == 0.0 {
                break;
            }
        }
        Self { max_power: 2 * n + 1 }
    }
}

/// Normalized single-party moments E[e^{−a/2} f(h) g(v)] over one region, for f, g drawn
/// from {1 − e^{−x²/2}, e^{−x²/2}, x^q (q ≤ max_power)}.
#[derive(Debug, Clone)]
struct PartyMoments {
    width: usize,
    m: Vec<f64>,
    /// E[cos kφ] over the azimuth window, k = 0..=max_power.
    window: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Fun {
    Eps,
    Damp,
    Pow(usize),
}

impl Fun {
    fn slot(self) -> usize {
        match self {
            Fun::Eps => 0,
            Fun::Damp => 1,
            Fun::Pow(q) => 2 + q,
        }
    }
}

impl PartyMoments {
    #[allow(clippy::too_many_arguments)]
    fn compute(
        eta: f64,
        basis: Basis,
        bit: u8,
        decoy: Decoy,
        sp: &SourceParams,
        rp: &RegionParams,
        quad: &QuadratureSpec,
        order: SeriesOrder,
    ) -> Self {
        let p = order.max_power;
        let width = p + 3;
        let mut m = vec![0.0; width * width];
        let radius = rp.radius(decoy, sp);
        let (lo, hi) = rp.angular_range(basis, bit);
        let gr = GaussLegendre::new(quad.nodes_radial);
        let gt = GaussLegendre::new(quad.nodes_angular);
        let mut fh = vec![0.0; width];
        let mut fv = vec![0.0; width];
        let mut mass = 0.0;
        for (t, wt) in gt.on(lo, hi) {
            let (sn, cs) = t.sin_cos();
            let s = sn + cs;
            for (r, wr) in gr.on(0.0, radius) {
                let weight = wt * wr * r * (r * s).exp();
                mass += weight;
                let (h2, v2) = (eta * r * cs, eta * r * sn);
                let base = weight * (-0.5 * (h2 + v2)).exp();
                fill(&mut fh, h2);
                fill(&mut fv, v2);
                for (x, row) in fh.iter().zip(m.chunks_exact_mut(width)) {
                    let bx = base * x;
                    for (cell, y) in row.iter_mut().zip(&fv) {
                        *cell += bx * y;
                    }
                }
            }
        }
        for cell in &mut m {
            *cell /= mass;
        }
        let window = (0..=p)
            .map(|k| match rp.phase_window(basis, bit) {
                None => if k == 0 { 1.0 } else { 0.0 },
                Some((center, half)) => {
                    let x = k as f64 * half;
                    let sinc = if x == 0.0 { 1.0 } else { x.sin() / x };
                    (k as f64 * center).cos() * sinc
                }
            })
            .collect();
        Self { width, m, window }
    }

    fn get(&self, f: Fun, g: Fun) -> f64 {
        self.m[f.slot() * self.width + g.slot()]
    }

    fn max_power(&self) -> usize {
        self.width - 3
    }
}

fn fill(f: &mut [f64], x2: f64) {
    f[0] = -(-0.5 * x2).exp_m1();
    f[1] = (-0.5 * x2).exp();
    let x = x2.sqrt();
    let mut pw = 1.0;
    for slot in &mut f[2..] {
        *slot = pw;
        pw *= x;
    }
}

/// Separable expansion of 1 − e^{−(x_A²+x_B²)/2} + I₀(x_A x_B) − 1 as Σ c · f(x_A) g(x_B).
fn eps_plus_bessel(max_power: usize) -> Vec<(Fun, Fun, f64)> {
    let mut terms = vec![(Fun::Eps, Fun::Pow(0), 1.0), (Fun::Damp, Fun::Eps, 1.0)];
    let mut c = 1.0;
    let mut j = 1;
    while 2 * j <= max_power {
        c /= 4.0 * (j * j) as f64;
        terms.push((Fun::Pow(2 * j), Fun::Pow(2 * j), c));
        j += 1;
    }
    terms
}

/// Bessel-series series coefficient 4^{−(j+l+k)} / (j!(j+k)! l!(l+k)!).
fn graf_coefficient(j: usize, l: usize, k: usize) -> f64 {
    let fact = |n: usize| (1..=n).fold(1.0, |acc, i| acc * i as f64);
    0.25f64.powi((j + l + k) as i32) / (fact(j) * fact(j + k) * fact(l) * fact(l + k))
}

/// Per-outcome gains averaged over one Alice region × one Bob region.
fn region_pair_gains(a: &PartyMoments, b: &PartyMoments, ch: &ChannelParams) -> [f64; 2] {
    let p = a.max_power().min(b.max_power());
    let h_terms = eps_plus_bessel(p);
    let v_terms = eps_plus_bessel(p);

    // (E₀ + j₀)(E₁ + j₁): the k = 0 part, non-negative term by term.
    let mut even = 0.0;
    for &(fa0, fb0, c0) in &h_terms {
        for &(fa1, fb1, c1) in &v_terms {
            even += c0 * c1 * a.get(fa0, fa1) * b.get(fb0, fb1);
        }
    }
    // k ≥ 1 terms of the addition theorem; they carry the phase dependence.
    let mut odd = [0.0; 2];
    for k in 1..=p {
        let window = a.window[k] * b.window[k];
        if window == 0.0 {
            continue;
        }
        let mut sum = 0.0;
        let mut j = 0;
        while 2 * j + k <= p {
            let mut l = 0;
            while 2 * l + k <= p {
                let (f, g) = (Fun::Pow(2 * j + k), Fun::Pow(2 * l + k));
                sum += graf_coefficient(j, l, k) * a.get(f, g) * b.get(f, g);
                l += 1;
            }
            j += 1;
        }
        let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
        odd[BellOutcome::PsiMinus.index()] += 2.0 * sign * window * sum;
        odd[BellOutcome::PsiPlus.index()] += 2.0 * window * sum;
    }
    let mut d1 = 0.0;
    for &(fa, fb, c) in &v_terms {
        d1 += c * a.get(Fun::Damp, fa) * b.get(Fun::Damp, fb);
    }
    for &(fa, fb, c) in &h_terms {
        d1 += c * a.get(fa, Fun::Damp) * b.get(fb, Fun::Damp);
    }
    let vac = a.get(Fun::Damp, Fun::Damp) * b.get(Fun::Damp, Fun::Damp);
    let y = 1.0 - ch.p_d;
    odd.map(|o| (2.0 * y * y * ((even + o).max(0.0) + ch.p_d * d1 + ch.p_d * ch.p_d * vac)).clamp(0.0, 1.0))
}

fn pair_entry(basis: Basis, a: &[PartyMoments; 2], b: &[PartyMoments; 2], ch: &ChannelParams) -> PairEntry {
    // Bit weights are equal by the μ_H ↔ μ_V and φ → φ + π symmetries of the shaped source.
    let mut entry = PairEntry::default();
    for (bit_a, ma) in a.iter().enumerate() {
        for (bit_b, mb) in b.iter().enumerate() {
            let g = region_pair_gains(ma, mb, ch);
            for outcome in BellOutcome::ALL {
                let q = 0.25 * g[outcome.index()];
                entry.gain[outcome.index()] += q;
                entry.error_gain[outcome.index()] += if is_error(basis, outcome, bit_a as u8, bit_b as u8) {
                    (1.0 - ch.e_d) * q
                } else {
                    ch.e_d * q
                };
            }
        }
    }
    entry
}
