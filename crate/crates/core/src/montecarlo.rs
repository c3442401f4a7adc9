//! Event-level simulation of source → fiber → beam splitter → four threshold detectors.
//!
//! Each trial draws one shaped, classified pulse per party with its own global phase, computes
//! the coherent intensity reaching every detector, and lets each detector click independently
//! with probability 1 − (1 − p_d)e^{−I}. Exactly two clicks in one of the four Bell patterns
//! give Ψ⁺ (1H 1V, 2H 2V) or Ψ⁻ (1H 2V, 1V 2H); anything else is invalid.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::channel::{is_error, BellOutcome, ChannelParams};
use crate::expectations::GainTable;
use crate::regions::{classify, Basis, Decoy, RegionLabel, RegionParams};
use crate::source::{sample_shaped, SourceParams, SourceSample};

/// Mean photon numbers arriving at D1H, D2H, D1V, D2V.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorIntensities {
    pub i_1h: f64,
    pub i_2h: f64,
    pub i_1v: f64,
    pub i_2v: f64,
}

impl DetectorIntensities {
    pub fn as_array(&self) -> [f64; 4] {
        [self.i_1h, self.i_2h, self.i_1v, self.i_2v]
    }
}

/// One party's pulse after the fiber, as H and V amplitudes (re, im).
fn amplitudes(s: &SourceSample, eta: f64) -> [(f64, f64); 2] {
    let (sg, cg) = s.phi_g.sin_cos();
    let (sv, cv) = (s.phi_g + s.phi).sin_cos();
    let (h, v) = ((eta * s.mu_h).sqrt(), (eta * s.mu_v).sqrt());
    [(h * cg, h * sg), (v * cv, v * sv)]
}

/// Intensities behind the 50:50 splitter: port 1 carries (a − b)/√2, port 2 (a + b)/√2, per
/// polarization. The azimuth φ of each sample rides on its V amplitude, the global phase
/// φ_G on both.
pub fn detector_intensities(a: &SourceSample, b: &SourceSample, ch: &ChannelParams) -> DetectorIntensities {
    let [ah, av] = amplitudes(a, ch.eta_a);
    let [bh, bv] = amplitudes(b, ch.eta_b);
    let port = |x: (f64, f64), y: (f64, f64), sign: f64| {
        let (re, im) = (x.0 + sign * y.0, x.1 + sign * y.1);
        0.5 * (re * re + im * im)
    };
    DetectorIntensities {
        i_1h: port(ah, bh, -1.0),
        i_2h: port(ah, bh, 1.0),
        i_1v: port(av, bv, -1.0),
        i_2v: port(av, bv, 1.0),
    }
}

pub fn click_probability(intensity: f64, p_d: f64) -> f64 {
    1.0 - (1.0 - p_d) * (-intensity).exp()
}

/// Bell outcome of a click pattern [1H, 2H, 1V, 2V].
pub fn bell_outcome(clicks: [bool; 4]) -> Option<BellOutcome> {
    match clicks {
        [true, false, false, true] | [false, true, true, false] => Some(BellOutcome::PsiMinus),
        [true, false, true, false] | [false, true, false, true] => Some(BellOutcome::PsiPlus),
        _ => None,
    }
}

/// Index of a classified pulse: basis, bit, innermost decoy.
const LABELS: usize = 12;
/// Ψ⁻, Ψ⁺, invalid.
const OUTCOMES: usize = 3;

fn label_index(l: &RegionLabel) -> usize {
    l.basis.index() * 6 + l.bit as usize * 3 + l.innermost.index()
}

fn label_at(k: usize) -> RegionLabel {
    RegionLabel { basis: Basis::ALL[k / 6], bit: ((k / 3) % 2) as u8, innermost: Decoy::ALL[k % 3] }
}

/// Counts per (Alice label, Bob label, outcome), where Bob's bit is the recorded one (after
/// the misalignment flip).
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTally {
    counts: Vec<u64>,
    /// Pulses drawn from the natural source, per party summed.
    pub emitted: u64,
    /// Pulses that passed shaping, per party summed.
    pub accepted: u64,
    /// Classified pairs, i.e. trials.
    pub classified: u64,
    /// Clicks per detector [1H, 2H, 1V, 2V].
    pub clicks: [u64; 4],
    /// Σ of click probabilities per detector, for the threshold-model check.
    pub expected_clicks: [f64; 4],
}

impl Default for TrialTally {
    fn default() -> Self {
        Self::new()
    }
}

impl TrialTally {
    pub fn new() -> Self {
        Self {
            counts: vec![0; LABELS * LABELS * OUTCOMES],
            emitted: 0,
            accepted: 0,
            classified: 0,
            clicks: [0; 4],
            expected_clicks: [0.0; 4],
        }
    }

    fn slot(a: &RegionLabel, b: &RegionLabel, outcome: Option<BellOutcome>) -> usize {
        let o = outcome.map_or(2, |o| o.index());
        (label_index(a) * LABELS + label_index(b)) * OUTCOMES + o
    }

    pub fn record(&mut self, a: &RegionLabel, b: &RegionLabel, outcome: Option<BellOutcome>) {
        self.counts[Self::slot(a, b, outcome)] += 1;
        self.classified += 1;
    }

    pub fn count(&self, a: &RegionLabel, b: &RegionLabel, outcome: Option<BellOutcome>) -> u64 {
        self.counts[Self::slot(a, b, outcome)]
    }

    /// All non-empty cells as (Alice label, Bob label, outcome, count).
    pub fn cells(&self) -> impl Iterator<Item = (RegionLabel, RegionLabel, Option<BellOutcome>, u64)> + '_ {
        self.counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(k, &c)| {
            let o = match k % OUTCOMES {
                0 => Some(BellOutcome::PsiMinus),
                1 => Some(BellOutcome::PsiPlus),
                _ => None,
            };
            (label_at(k / OUTCOMES / LABELS), label_at(k / OUTCOMES % LABELS), o, c)
        })
    }

    /// Add another tally; the result does not depend on the order of merges.
    pub fn merge(&mut self, other: &TrialTally) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.emitted += other.emitted;
        self.accepted += other.accepted;
        self.classified += other.classified;
        for k in 0..4 {
            self.clicks[k] += other.clicks[k];
            self.expected_clicks[k] += other.expected_clicks[k];
        }
    }

    /// Pair statistics of one (basis, decoy_i, decoy_j) region pair: number of pairs, gain
    /// counts per outcome and error counts per outcome.
    pub fn pair_counts(&self, basis: Basis, i: Decoy, j: Decoy) -> PairCounts {
        let mut out = PairCounts::default();
        for ka in 0..LABELS {
            let la = label_at(ka);
            if la.basis != basis || !la.is_member(i) {
                continue;
            }
            for kb in 0..LABELS {
                let lb = label_at(kb);
                if lb.basis != basis || !lb.is_member(j) {
                    continue;
                }
                let base = (ka * LABELS + kb) * OUTCOMES;
                for o in 0..OUTCOMES {
                    out.pairs += self.counts[base + o];
                }
                for outcome in BellOutcome::ALL {
                    let c = self.counts[base + outcome.index()];
                    out.gain[outcome.index()] += c;
                    if is_error(basis, outcome, la.bit, lb.bit) {
                        out.error[outcome.index()] += c;
                    }
                }
            }
        }
        out
    }

    /// Fraction of natural pulses kept by shaping.
    pub fn acceptance_rate(&self) -> f64 {
        if self.emitted == 0 {
            0.0
        } else {
            self.accepted as f64 / self.emitted as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairCounts {
    pub pairs: u64,
    pub gain: [u64; 2],
    pub error: [u64; 2],
}

/// Draw shaped pulses until one is classified into some region.
fn classified_pulse<R: Rng + ?Sized>(
    rng: &mut R,
    sp: &SourceParams,
    rp: &RegionParams,
    tally: &mut TrialTally,
) -> (SourceSample, RegionLabel) {
    loop {
        let (s, emitted) = sample_shaped(rng, sp);
        tally.emitted += emitted;
        tally.accepted += 1;
        if let Some(label) = classify(&s, rp, sp) {
            return (s, label);
        }
    }
}

/// Simulate `n_trials` classified pulse pairs. Both parties use the same source and regions;
/// misalignment flips Bob's recorded bit with probability e_d.
pub fn simulate_trials<R: Rng + ?Sized>(
    n_trials: u64,
    sp: &SourceParams,
    rp: &RegionParams,
    ch: &ChannelParams,
    rng: &mut R,
) -> TrialTally {
    let mut tally = TrialTally::new();
    for _ in 0..n_trials {
        let (sa, la) = classified_pulse(rng, sp, rp, &mut tally);
        let (sb, mut lb) = classified_pulse(rng, sp, rp, &mut tally);
        let intensities = detector_intensities(&sa, &sb, ch).as_array();
        let mut clicks = [false; 4];
        for (k, i) in intensities.iter().enumerate() {
            let p = click_probability(*i, ch.p_d);
            tally.expected_clicks[k] += p;
            clicks[k] = rng.random::<f64>() < p;
            tally.clicks[k] += clicks[k] as u64;
        }
        if rng.random::<f64>() < ch.e_d {
            lb.bit ^= 1;
        }
        tally.record(&la, &lb, bell_outcome(clicks));
    }
    tally
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Gain,
    ErrorGain,
}

/// One compared cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellReport {
    pub basis: Basis,
    pub decoy_i: Decoy,
    pub decoy_j: Decoy,
    pub quantity: Quantity,
    pub outcome: BellOutcome,
    pub pairs: u64,
    pub count: u64,
    pub empirical: f64,
    pub analytic: f64,
    /// (count − n·p)/√(n·p(1 − p)) for the analytic probability p, continuity-corrected.
    pub z: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub cells: Vec<CellReport>,
    pub threshold: f64,
}

impl Comparison {
    pub fn flagged(&self) -> impl Iterator<Item = &CellReport> {
        self.cells.iter().filter(|c| c.flagged)
    }

    pub fn passed(&self) -> bool {
        self.flagged().next().is_none()
    }

    pub fn max_abs_z(&self) -> f64 {
        self.cells.iter().map(|c| c.z.abs()).fold(0.0, f64::max)
    }
}

/// Binomial z-score of every (basis, decoy pair, quantity, outcome) cell; |z| > `threshold` and
/// empty cells are flagged.
pub fn compare_to_analytic(tally: &TrialTally, table: &GainTable, threshold: f64) -> Comparison {
    let mut cells = Vec::new();
    for basis in Basis::ALL {
        for i in Decoy::ALL {
            for j in Decoy::ALL {
                let counts = tally.pair_counts(basis, i, j);
                let entry = table.entry(basis, i, j);
                for quantity in [Quantity::Gain, Quantity::ErrorGain] {
                    for outcome in BellOutcome::ALL {
                        let (count, analytic) = match quantity {
                            Quantity::Gain => (counts.gain[outcome.index()], entry.gain[outcome.index()]),
                            Quantity::ErrorGain => (counts.error[outcome.index()], entry.error_gain[outcome.index()]),
                        };
                        let n = counts.pairs;
                        let (empirical, z) = if n == 0 {
                            (f64::NAN, f64::NAN)
                        } else {
                            let e = count as f64 / n as f64;
                            // In counts, with a continuity correction of ½ so that a single
                            // event in a cell expecting 0.03 is not read as a 5σ excess.
                            let sd = (n as f64 * analytic * (1.0 - analytic)).sqrt();
                            let diff = count as f64 - n as f64 * analytic;
                            let z = if e == analytic {
                                0.0
                            } else if sd > 0.0 {
                                diff.signum() * (diff.abs() - 0.5).max(0.0) / sd
                            } else {
                                f64::INFINITY
                            };
                            (e, z)
                        };
                        let flagged = n == 0 || !(z.abs() <= threshold);
                        cells.push(CellReport {
                            basis,
                            decoy_i: i,
                            decoy_j: j,
                            quantity,
                            outcome,
                            pairs: n,
                            count,
                            empirical,
                            analytic,
                            z,
                            flagged,
                        });
                    }
                }
            }
        }
    }
    Comparison { cells, threshold }
}
