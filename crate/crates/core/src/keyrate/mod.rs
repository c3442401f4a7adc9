//! Secret key rate of the passive protocol, an active three-intensity baseline, and the
//! parameter search.
//!
//! R = P_{S_χ^Z} P_{S_χ'^Z} { ⟨P₁₁⟩ Y₁₁^{Z,L} [1 − H(e₁₁^{X,U})] − f_e ⟨Q⟩ H(⟨T⟩/⟨Q⟩) },
//! all expectations taken over the Z-basis χ × χ region pair.

mod optimize;

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

pub use optimize::{nelder_mead, optimize_rate, NelderMead, OptimizeOptions, Optimized, Protocol, SearchPoint};

use crate::channel::{bell_gains, is_error, poisson, BellOutcome, ChannelParams, EncodedState};
use crate::decoy::{decoy_bounds, DecoyBounds};
use crate::error::{invalid, Error, Result};
use crate::expectations::{GainTable, PairEntry};
use crate::quadrature::QuadratureSpec;
use crate::regions::{Basis, Decoy, RegionParams};
use crate::source::{shaping_acceptance_rate, SourceParams};

/// H(x) = −x log₂x − (1−x) log₂(1−x), with H(0) = H(1) = 0.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain { function: "binary_entropy", value: x });
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    pub source: SourceParams,
    pub regions: RegionParams,
    pub channel: ChannelParams,
    /// Error-correction inefficiency f_e ≥ 1.
    pub f_e: f64,
    /// Photon-number cut of the decoy programs (same for both parties).
    pub cut: usize,
    /// Multiply the rate by the squared shaping acceptance, so that it counts emitted rather
    /// than kept pulses.
    pub include_shaping_loss: bool,
    pub quad: QuadratureSpec,
    /// Active baseline only: probability that one party picks the key setting (Z basis,
    /// signal intensity). The default is a uniform choice among 2 bases × 3 intensities.
    pub active_key_setting: f64,
}

/// Uniform choice of basis and intensity in the active baseline.
pub const UNIFORM_KEY_SETTING: f64 = 1.0 / 6.0;

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_e >= 1.0 && self.f_e.is_finite()) {
            return Err(invalid("f_e", "must be finite and at least 1"));
        }
        if !(self.active_key_setting > 0.0 && self.active_key_setting <= 1.0) {
            return Err(invalid("active_key_setting", "must lie in (0, 1]"));
        }
        if self.cut < 1 {
            return Err(invalid("cut", "must be at least 1"));
        }
        self.regions.validate()?;
        self.channel.validate()?;
        self.quad.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateResult {
    /// Secret bits per emitted pulse pair, floored at zero.
    pub rate: f64,
    /// The bracket of the rate formula before flooring.
    pub raw: f64,
    pub y11_z_lower: f64,
    pub e11_x_upper: f64,
    /// P_{S_χ^Z} P_{S_χ'^Z}, times the shaping loss when it is included.
    pub sift_prefactor: f64,
    pub gain: f64,
    pub error_gain: f64,
    pub p11: f64,
    pub bounds: DecoyBounds,
}

impl KeyRateResult {
    /// ⟨T⟩/⟨Q⟩ of the key-generation pair (1/2 when nothing is detected).
    pub fn qber(&self) -> f64 {
        if self.gain > 0.0 {
            self.error_gain / self.gain
        } else {
            0.5
        }
    }
}

/// Evaluate the rate formula on a finished gain table. `prefactor` multiplies the sifting
/// probability of the Z χ × χ pair.
pub fn rate_from_table(table: &GainTable, f_e: f64, prefactor: f64) -> Result<KeyRateResult> {
    let bounds = decoy_bounds(table)?;
    let (chi, z) = (Decoy::Chi, Basis::Z);
    let gain = table.gain(z, chi, chi);
    let error_gain = table.error_gain(z, chi, chi);
    let p11 = table.pnm(z, chi, chi, 1, 1);
    let sift_prefactor = table.sifting(z, chi, chi) * prefactor;
    let qber = if gain > 0.0 { (error_gain / gain).clamp(0.0, 1.0) } else { 0.5 };
    let privacy = p11 * bounds.y11_z_lower * (1.0 - binary_entropy(bounds.e11_x_upper)?);
    let leak = f_e * gain * binary_entropy(qber)?;
    let raw = sift_prefactor * (privacy - leak);
    Ok(KeyRateResult {
        rate: raw.max(0.0),
        raw,
        y11_z_lower: bounds.y11_z_lower,
        e11_x_upper: bounds.e11_x_upper,
        sift_prefactor,
        gain,
        error_gain,
        p11,
        bounds,
    })
}

pub fn passive_table(cfg: &ProtocolConfig) -> Result<GainTable> {
    cfg.validate()?;
    GainTable::compute(&cfg.source, &cfg.regions, &cfg.channel, &cfg.quad, cfg.cut)
}

pub fn passive_rate(cfg: &ProtocolConfig) -> Result<KeyRateResult> {
    let table = passive_table(cfg)?;
    let shaping = if cfg.include_shaping_loss {
        let q = shaping_acceptance_rate(&cfg.source);
        q * q
    } else {
        1.0
    };
    rate_from_table(&table, cfg.f_e, shaping)
}

/// Signal, decoy and weakest intensity of the active baseline (same for both parties).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveIntensities {
    pub signal: f64,
    pub decoy: f64,
    pub weak: f64,
}

impl ActiveIntensities {
    pub fn new(signal: f64, decoy: f64, weak: f64) -> Result<Self> {
        let s = Self { signal, decoy, weak };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weak >= 0.0 && self.weak < self.decoy && self.decoy < self.signal && self.signal.is_finite()) {
            return Err(invalid("intensities", "need 0 ≤ weak < decoy < signal"));
        }
        Ok(())
    }

    pub fn get(&self, decoy: Decoy) -> f64 {
        match decoy {
            Decoy::Chi => self.signal,
            Decoy::Nu => self.decoy,
            Decoy::Omega => self.weak,
        }
    }
}

/// Gain table of an active source: ideal BB84 polarization states at fixed intensities and
/// Poisson photon numbers. Sifting entries are 1; the setting probability is applied by
/// [`active_rate`].
pub fn active_table(ch: &ChannelParams, mu: &ActiveIntensities, cut: usize) -> Result<GainTable> {
    ch.validate()?;
    mu.validate()?;
    let mut entries = [[[PairEntry::default(); 3]; 3]; 2];
    for basis in Basis::ALL {
        for i in Decoy::ALL {
            for j in Decoy::ALL {
                let entry = &mut entries[basis.index()][i.index()][j.index()];
                for bit_a in 0..2u8 {
                    for bit_b in 0..2u8 {
                        let a = EncodedState::bb84(basis, bit_a, mu.get(i));
                        let b = EncodedState::bb84(basis, bit_b, mu.get(j));
                        let g = bell_gains(&a, &b, ch);
                        for outcome in BellOutcome::ALL {
                            let q = 0.25 * g.get(outcome);
                            entry.gain[outcome.index()] += q;
                            entry.error_gain[outcome.index()] +=
                                if is_error(basis, outcome, bit_a, bit_b) { (1.0 - ch.e_d) * q } else { ch.e_d * q };
                        }
                    }
                }
            }
        }
    }
    let marginals: [[Vec<f64>; 3]; 2] =
        core::array::from_fn(|_| core::array::from_fn(|d| (0..=cut).map(|n| poisson(n, mu.get(Decoy::ALL[d]))).collect()));
    Ok(GainTable {
        cut,
        entries,
        pnm_a: marginals.clone(),
        pnm_b: marginals,
        sifting_a: [[1.0; 3]; 2],
        sifting_b: [[1.0; 3]; 2],
    })
}

/// Active three-intensity rate with the same decoy programs and rate formula, the prefactor
/// being `active_key_setting²`. The source and regions of `cfg` are not used.
pub fn active_rate(cfg: &ProtocolConfig, mu: &ActiveIntensities) -> Result<KeyRateResult> {
    cfg.validate()?;
    let table = active_table(&cfg.channel, mu, cfg.cut)?;
    rate_from_table(&table, cfg.f_e, cfg.active_key_setting * cfg.active_key_setting)
}
