//! Derivative-free search over the free protocol parameters.
//!
//! Bounded parameters are mapped from ℝⁿ through logistic transforms, so the simplex moves
//! freely and every trial point is valid. The objective is the unfloored rate, which still
//! has a slope where the floored rate is flat at zero.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, FRAC_PI_4};
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{active_rate, passive_rate, ActiveIntensities, KeyRateResult, ProtocolConfig};
use crate::channel::ChannelParams;
use crate::error::Result;
use crate::regions::RegionParams;
use crate::source::SourceParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Passive,
    Active,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOptions {
    pub seed: u64,
    /// Number of Nelder–Mead runs. The first three start from a coarse grid in the peak
    /// intensity (template, half, double); further runs at seeded perturbations of the template.
    pub restarts: usize,
    /// Objective evaluations allowed per run.
    pub max_evals: usize,
    /// Relative spread of simplex values at which a run stops.
    pub tolerance: f64,
    /// Keep the template's convergence check on for every trial point (slow). When off, the
    /// search runs unchecked and only the winner is re-evaluated with the check.
    pub check_every_point: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self { seed: 1, restarts: 3, max_evals: 400, tolerance: 1e-6, check_every_point: false }
    }
}

/// Parameters found by the search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchPoint {
    Passive { source: SourceParams, regions: RegionParams },
    Active(ActiveIntensities),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Optimized {
    pub result: KeyRateResult,
    pub point: SearchPoint,
    pub evaluations: usize,
    /// No positive rate was found anywhere the search went.
    pub all_zero: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMead {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Minimize `f` from `x0` with an initial simplex of edge `step`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], step: f64, max_evals: usize, tolerance: f64) -> NelderMead {
    let n = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut pts: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(x0, &mut evals);
    pts.push((x0.to_vec(), v0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = eval(&x, &mut evals);
        pts.push((x, v));
    }
    let along = |c: &[f64], w: &[f64], t: f64| -> Vec<f64> { c.iter().zip(w).map(|(c, w)| c + t * (w - c)).collect() };
    while evals < max_evals {
        pts.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (pts[0].1, pts[n].1);
        if (worst - best).abs() <= tolerance * best.abs() + 1e-300 {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &pts[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let xr = along(&centroid, &pts[n].0, -1.0);
        let fr = eval(&xr, &mut evals);
        if fr < best {
            let xe = along(&centroid, &pts[n].0, -2.0);
            let fe = eval(&xe, &mut evals);
            pts[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < pts[n - 1].1 {
            pts[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst {
            let xc = along(&centroid, &xr, 0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(&centroid, &pts[n].0, 0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < worst.min(fr) {
            pts[n] = (xc, fc);
            continue;
        }
        let x_best = pts[0].0.clone();
        for p in pts.iter_mut().skip(1) {
            p.0 = along(&x_best, &p.0, 0.5);
            p.1 = eval(&p.0, &mut evals);
        }
    }
    pts.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = pts.swap_remove(0);
    NelderMead { x, value, evaluations: evals }
}

/// Logistic map of ℝ onto the open interval (lo, hi).
fn squeeze(x: f64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) / (1.0 + (-x).exp())
}

fn unsqueeze(v: f64, lo: f64, hi: f64) -> f64 {
    let p = ((v - lo) / (hi - lo)).clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

// Floors keep the search away from corners where decoy regions or levels nearly coincide
// and the decoy programs lose all precision.
const MIN_ANGLE: f64 = 1e-3;
const MU_RANGE: (f64, f64) = (0.01, 1.0);
const RATIO_RANGE: (f64, f64) = (0.02, 0.98);

/// (μ_max, Δ_Z, Δ_X as a share of what Δ_Z leaves, Δ_φ, t₁, t₂/t₁).
fn passive_from(x: &[f64]) -> Result<(SourceParams, RegionParams)> {
    let dz = squeeze(x[1], MIN_ANGLE, FRAC_PI_4 - 3.0 * MIN_ANGLE);
    let dx = squeeze(x[2], MIN_ANGLE, FRAC_PI_4 - dz - MIN_ANGLE);
    let dphi = squeeze(x[3], MIN_ANGLE, FRAC_PI_2);
    let t1 = squeeze(x[4], RATIO_RANGE.0, RATIO_RANGE.1);
    let t2 = t1 * squeeze(x[5], RATIO_RANGE.0, RATIO_RANGE.1);
    let regions = RegionParams::new(dz, dx, dphi, t1, t2)?;
    Ok((SourceParams::from_mu_max(squeeze(x[0], MU_RANGE.0, MU_RANGE.1))?, regions))
}

fn passive_to(sp: &SourceParams, rp: &RegionParams) -> Vec<f64> {
    vec![
        unsqueeze(sp.mu_max(), MU_RANGE.0, MU_RANGE.1),
        unsqueeze(rp.delta_z, MIN_ANGLE, FRAC_PI_4 - 3.0 * MIN_ANGLE),
        unsqueeze(rp.delta_x, MIN_ANGLE, FRAC_PI_4 - rp.delta_z - MIN_ANGLE),
        unsqueeze(rp.delta_phi, MIN_ANGLE, FRAC_PI_2),
        unsqueeze(rp.t1, RATIO_RANGE.0, RATIO_RANGE.1),
        unsqueeze(rp.t2 / rp.t1, RATIO_RANGE.0, RATIO_RANGE.1),
    ]
}

/// (μ_signal, μ_decoy/μ_signal); the weakest level is vacuum.
fn active_from(x: &[f64]) -> Result<ActiveIntensities> {
    let signal = squeeze(x[0], MU_RANGE.0, MU_RANGE.1);
    ActiveIntensities::new(signal, signal * squeeze(x[1], RATIO_RANGE.0, RATIO_RANGE.1), 0.0)
}

fn with_distance(template: &ProtocolConfig, distance: f64) -> Result<ProtocolConfig> {
    let ch = &template.channel;
    let mut cfg = *template;
    cfg.channel = ChannelParams::symmetric(ch.eta_d, ch.alpha, distance, ch.p_d, ch.e_d)?;
    Ok(cfg)
}

/// Maximize the rate at `distance` (total length, relay in the middle) starting from the
/// template's parameters. For the active protocol the template's source and regions are
/// ignored and the search starts from μ = (0.4, 0.1, 0).
pub fn optimize_rate(
    template: &ProtocolConfig,
    distance: f64,
    protocol: Protocol,
    opts: &OptimizeOptions,
) -> Result<Optimized> {
    let cfg = with_distance(template, distance)?;
    cfg.validate()?;
    let mut search_cfg = cfg;
    if !opts.check_every_point {
        search_cfg.quad.check_convergence = false;
    }
    let evaluate = |x: &[f64], c: &ProtocolConfig| -> Result<(KeyRateResult, SearchPoint)> {
        match protocol {
            Protocol::Passive => {
                let (source, regions) = passive_from(x)?;
                let mut c = *c;
                c.source = source;
                c.regions = regions;
                Ok((passive_rate(&c)?, SearchPoint::Passive { source, regions }))
            }
            Protocol::Active => {
                let mu = active_from(x)?;
                Ok((active_rate(c, &mu)?, SearchPoint::Active(mu)))
            }
        }
    };
    let start = match protocol {
        Protocol::Passive => passive_to(&cfg.source, &cfg.regions),
        Protocol::Active => vec![unsqueeze(0.4, MU_RANGE.0, MU_RANGE.1), unsqueeze(0.25, RATIO_RANGE.0, RATIO_RANGE.1)],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut any_positive = false;
    let mut evaluations = 0;
    let mut best: Option<NelderMead> = None;
    for run in 0..opts.restarts.max(1) {
        let x0: Vec<f64> = match run {
            0 => start.clone(),
            1 | 2 => {
                let mu = squeeze(start[0], MU_RANGE.0, MU_RANGE.1) * if run == 1 { 0.5 } else { 2.0 };
                let mut x = start.clone();
                x[0] = unsqueeze(mu.clamp(0.02, 0.95), MU_RANGE.0, MU_RANGE.1);
                x
            }
            _ => start.iter().map(|x| x + rng.random_range(-1.5..1.5)).collect(),
        };
        let objective = |x: &[f64]| match evaluate(x, &search_cfg) {
            Ok((r, _)) => {
                any_positive |= r.rate > 0.0;
                -r.raw
            }
            // Unevaluable corners are worse than any real configuration.
            Err(_) => f64::INFINITY,
        };
        let nm = nelder_mead(objective, &x0, 0.5, opts.max_evals, opts.tolerance);
        evaluations += nm.evaluations;
        if best.as_ref().map_or(true, |b| nm.value < b.value) {
            best = Some(nm);
        }
    }
    let best = best.expect("at least one run");
    let (result, point) = evaluate(&best.x, &cfg)?;
    Ok(Optimized { result, point, evaluations, all_zero: !any_positive && result.rate == 0.0 })
}
