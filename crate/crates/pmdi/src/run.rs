//! Command bodies. Each returns its text output so the binary only handles IO and exit codes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use pmdi_core::decoy::{DecoyLp, Direction, Observable};
use pmdi_core::expectations::GainTable;
use pmdi_core::keyrate::{
    active_rate, optimize_rate, passive_rate, passive_table, ActiveIntensities, KeyRateResult, Optimized, Protocol,
    ProtocolConfig, SearchPoint,
};
use pmdi_core::montecarlo::{compare_to_analytic, simulate_trials, Comparison, TrialTally};
use pmdi_core::regions::Basis;
use pmdi_core::Result;

use crate::config::RunConfig;
use crate::output::{sci, SweepRow};

/// Trials per Monte Carlo work unit. Fixed, so results do not depend on the thread count.
pub const CHUNK: u64 = 1 << 16;

/// Passive result at one distance, optionally optimized.
pub fn passive_at(cfg: &RunConfig, distance: f64, optimize: bool) -> Result<(KeyRateResult, ProtocolConfig)> {
    let mut p = cfg.at_distance(distance)?;
    if optimize {
        let o = optimize_rate(&p, distance, Protocol::Passive, &cfg.optimize)?;
        if let SearchPoint::Passive { source, regions } = o.point {
            p.source = source;
            p.regions = regions;
        }
        return Ok((o.result, p));
    }
    Ok((passive_rate(&p)?, p))
}

pub fn active_at(cfg: &RunConfig, distance: f64, optimize: bool) -> Result<(KeyRateResult, ActiveIntensities)> {
    let p = cfg.at_distance(distance)?;
    if optimize {
        let o = optimize_rate(&p, distance, Protocol::Active, &cfg.optimize)?;
        if let SearchPoint::Active(mu) = o.point {
            return Ok((o.result, mu));
        }
    }
    Ok((active_rate(&p, &cfg.active)?, cfg.active))
}

/// Sweep rows in input order; distances are evaluated in parallel.
pub fn sweep(cfg: &RunConfig, optimize: bool) -> Result<Vec<SweepRow>> {
    cfg.distances
        .par_iter()
        .map(|&distance| {
            let (passive, _) = passive_at(cfg, distance, optimize)?;
            let (active, _) = active_at(cfg, distance, optimize)?;
            Ok(SweepRow { distance, passive, active_rate: active.rate })
        })
        .collect()
}

pub fn baseline_csv(cfg: &RunConfig, optimize: bool) -> Result<String> {
    let rows: Vec<(f64, KeyRateResult, ActiveIntensities)> = cfg
        .distances
        .par_iter()
        .map(|&d| active_at(cfg, d, optimize).map(|(r, mu)| (d, r, mu)))
        .collect::<Result<_>>()?;
    let mut out = String::from(crate::output::BASELINE_HEADER);
    out.push('\n');
    for (d, r, mu) in rows {
        let fields = [d, r.rate, mu.signal, mu.decoy, mu.weak, r.y11_z_lower, r.e11_x_upper, r.gain, r.error_gain];
        out.push_str(&fields.map(sci).join(","));
        out.push('\n');
    }
    Ok(out)
}

/// The three decoy programs behind the passive bounds, named for file output.
pub fn decoy_programs(table: &GainTable) -> [(&'static str, DecoyLp); 3] {
    [
        ("y11_z_lower", DecoyLp::build(table, Basis::Z, Observable::Gain, Direction::Minimize)),
        ("y11_x_lower", DecoyLp::build(table, Basis::X, Observable::Gain, Direction::Minimize)),
        ("b11_x_upper", DecoyLp::build(table, Basis::X, Observable::ErrorGain, Direction::Maximize)),
    ]
}

pub fn passive_programs(cfg: &ProtocolConfig) -> Result<[(&'static str, DecoyLp); 3]> {
    Ok(decoy_programs(&passive_table(cfg)?))
}

pub fn optimized_parameters(o: &Optimized) -> String {
    let mut out = String::new();
    match o.point {
        SearchPoint::Passive { source, regions } => {
            for (k, v) in [
                ("mu_max", source.mu_max()),
                ("delta_z", regions.delta_z),
                ("delta_x", regions.delta_x),
                ("delta_phi", regions.delta_phi),
                ("t1", regions.t1),
                ("t2", regions.t2),
            ] {
                out.push_str(&format!("{k}={}\n", sci(v)));
            }
        }
        SearchPoint::Active(mu) => {
            for (k, v) in [("active_signal", mu.signal), ("active_decoy", mu.decoy), ("active_weak", mu.weak)] {
                out.push_str(&format!("{k}={}\n", sci(v)));
            }
        }
    }
    out.push_str(&format!("evaluations={}\nall_zero={}\n", o.evaluations, o.all_zero));
    out
}

/// Monte Carlo over `trials` classified pairs at the first configured distance, in fixed-size
/// chunks; chunk k draws from stream k of the seed, and chunks are merged in order.
pub fn simulate(cfg: &RunConfig, protocol: &ProtocolConfig, trials: u64) -> TrialTally {
    let chunks = trials.div_ceil(CHUNK);
    let tallies: Vec<TrialTally> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let n = CHUNK.min(trials - k * CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k);
            simulate_trials(n, &protocol.source, &protocol.regions, &protocol.channel, &mut rng)
        })
        .collect();
    let mut total = TrialTally::new();
    for t in &tallies {
        total.merge(t);
    }
    total
}

pub struct Verification {
    pub tally: TrialTally,
    pub comparison: Comparison,
}

pub fn verify(cfg: &RunConfig) -> Result<Verification> {
    let distance = cfg.distances.first().copied().unwrap_or(0.0);
    let protocol = cfg.at_distance(distance)?;
    let mut table = passive_table(&protocol)?;
    if cfg.perturb_analytic != 0.0 {
        for entry in table.entries.iter_mut().flatten().flatten() {
            for k in 0..2 {
                entry.gain[k] = (entry.gain[k] * (1.0 + cfg.perturb_analytic)).clamp(0.0, 1.0);
                entry.error_gain[k] = (entry.error_gain[k] * (1.0 + cfg.perturb_analytic)).clamp(0.0, 1.0);
            }
        }
    }
    let tally = simulate(cfg, &protocol, cfg.trials);
    let comparison = compare_to_analytic(&tally, &table, cfg.z_threshold);
    Ok(Verification { tally, comparison })
}
