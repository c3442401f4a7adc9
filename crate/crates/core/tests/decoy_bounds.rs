//! Decoy bounds against yields forward-computed from the channel model.

use pmdi_core::channel::{is_error, single_photon_yields, BellGains, BellOutcome, ChannelParams};
use pmdi_core::decoy::{decoy_bounds, e11_x_upper, y11_z_lower};
use pmdi_core::expectations::{yprime, GainTable};
use pmdi_core::keyrate::{active_table, ActiveIntensities};
use pmdi_core::quadrature::QuadratureSpec;
use pmdi_core::regions::{Basis, RegionParams};
use pmdi_core::source::SourceParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Single-photon polarization amplitudes of a pulse at Bloch angle θ_μ.
fn amplitudes(theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    ((c / (s + c)).sqrt(), (s / (s + c)).sqrt())
}

fn mean_cos(rp: &RegionParams, basis: Basis, bit: u8) -> f64 {
    match rp.phase_window(basis, bit) {
        None => 0.0,
        Some((center, half)) => center.cos() * half.sin() / half,
    }
}

/// Y'₁₁ (total yield) and b'₁₁ (misalignment-mixed error yield), averaged over the four bit
/// pairs of the basis. In Z the bit is fixed by the band, so only matching-band pairs count.
fn truth(basis: Basis, rp: &RegionParams, ch: &ChannelParams, quad: &QuadratureSpec) -> (f64, f64) {
    let bits_at = |theta: f64| -> Vec<u8> {
        match basis {
            Basis::Z => vec![if theta < core::f64::consts::FRAC_PI_4 { 0 } else { 1 }],
            Basis::X => vec![0, 1],
        }
    };
    let per_pair = |t1: f64, t2: f64, error: bool| -> f64 {
        let (ba, bb) = (bits_at(t1), bits_at(t2));
        let mut sum = 0.0;
        for &a in &ba {
            for &b in &bb {
                let cos_phase = mean_cos(rp, basis, a) * mean_cos(rp, basis, b);
                let g: BellGains = single_photon_yields(amplitudes(t1), amplitudes(t2), cos_phase, ch);
                for o in BellOutcome::ALL {
                    let q = g.get(o);
                    sum += if !error {
                        q
                    } else if is_error(basis, o, a, b) {
                        (1.0 - ch.e_d) * q
                    } else {
                        ch.e_d * q
                    };
                }
            }
        }
        sum / (ba.len() * bb.len()) as f64
    };
    let y = yprime(1, 1, basis, rp, |a, b| per_pair(a, b, false), quad);
    let t = yprime(1, 1, basis, rp, |a, b| per_pair(a, b, true), quad);
    (y, t)
}

struct Case {
    sp: SourceParams,
    rp: RegionParams,
    ch: ChannelParams,
}

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let mu = rng.random_range(0.1..0.8);
    let dz = rng.random_range(0.02..0.3);
    let dx = rng.random_range(0.02..(0.3f64).min(core::f64::consts::FRAC_PI_4 - dz - 0.01));
    let dphi = rng.random_range(0.05..1.0);
    let t1 = rng.random_range(0.3..0.9);
    let t2 = t1 * rng.random_range(0.05..0.8);
    let distance = rng.random_range(0.0..100.0);
    let p_d = 10f64.powf(rng.random_range(-8.0..-5.0));
    let e_d = rng.random_range(0.0..0.03);
    let eta_d = rng.random_range(0.3..0.9);
    Case {
        sp: SourceParams::from_mu_max(mu).unwrap(),
        rp: RegionParams::new(dz, dx, dphi, t1, t2).unwrap(),
        ch: ChannelParams::symmetric(eta_d, 0.2, distance, p_d, e_d).unwrap(),
    }
}

#[test]
fn bounds_bracket_the_true_single_photon_quantities() {
    let quad = QuadratureSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut informative = 0;
    for k in 0..20 {
        let c = random_case(&mut rng);
        let table = GainTable::compute(&c.sp, &c.rp, &c.ch, &quad, 6).unwrap();
        let bounds = decoy_bounds(&table).unwrap();
        let (y_z, _) = truth(Basis::Z, &c.rp, &c.ch, &quad);
        let (y_x, t_x) = truth(Basis::X, &c.rp, &c.ch, &quad);
        let e_x = t_x / y_x;
        assert!(bounds.y11_z_lower <= y_z * (1.0 + 1e-9), "case {k}: Y11 lower {} > true {y_z}", bounds.y11_z_lower);
        assert!(bounds.e11_x_upper >= e_x * (1.0 - 1e-9), "case {k}: e11 upper {} < true {e_x}", bounds.e11_x_upper);
        assert!(bounds.y11_x_lower <= y_x * (1.0 + 1e-9), "case {k}");
        assert!(bounds.b11_x_upper >= t_x * (1.0 - 1e-9), "case {k}");
        informative += (bounds.y11_z_lower > 0.0 && bounds.e11_x_upper < 0.5) as usize;
    }
    // Vacuous bounds would bracket anything.
    assert!(informative >= 10, "{informative}");
}

#[test]
fn active_bounds_bracket_point_state_truth() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let s = core::f64::consts::FRAC_1_SQRT_2;
    for k in 0..10 {
        let signal = rng.random_range(0.2..0.8);
        let mu = ActiveIntensities::new(signal, signal * rng.random_range(0.05..0.6), 0.0).unwrap();
        let ch = ChannelParams::symmetric(0.7, 0.2, rng.random_range(0.0..100.0), 1e-7, 0.015).unwrap();
        let table = active_table(&ch, &mu, 6).unwrap();
        // Z: H/V pairs, X: ± diagonal pairs, ¼ each.
        let z = [(1.0, 0.0), (0.0, 1.0)];
        let mut y_z = 0.0;
        for a in z {
            for b in z {
                y_z += 0.25 * single_photon_yields(a, b, 0.0, &ch).total();
            }
        }
        let (mut y_x, mut t_x) = (0.0, 0.0);
        for a in 0..2u8 {
            for b in 0..2u8 {
                let cos_phase = if a == b { 1.0 } else { -1.0 };
                let g = single_photon_yields((s, s), (s, s), cos_phase, &ch);
                for o in BellOutcome::ALL {
                    y_x += 0.25 * g.get(o);
                    t_x += 0.25 * g.get(o) * if is_error(Basis::X, o, a, b) { 1.0 - ch.e_d } else { ch.e_d };
                }
            }
        }
        let y_lower = y11_z_lower(&table).unwrap();
        let e_upper = e11_x_upper(&table).unwrap();
        assert!(y_lower <= y_z * (1.0 + 1e-9), "case {k}: {y_lower} > {y_z}");
        assert!(e_upper >= t_x / y_x * (1.0 - 1e-9), "case {k}: {e_upper} < {}", t_x / y_x);
    }
}

fn noise_free_case(t2: f64) -> (GainTable, f64) {
    let quad = QuadratureSpec::default();
    let sp = SourceParams::from_mu_max(0.5).unwrap();
    let rp = RegionParams::new(0.1, 0.1, 0.3, 0.5, t2).unwrap();
    let ch = ChannelParams::symmetric(0.7, 0.2, 20.0, 0.0, 0.0).unwrap();
    let table = GainTable::compute(&sp, &rp, &ch, &quad, 6).unwrap();
    let (y, _) = truth(Basis::Z, &rp, &ch, &quad);
    (table, y)
}

#[test]
fn shrinking_weakest_decoy_tightens_the_yield_bound() {
    let mut last_gap = f64::INFINITY;
    let mut first_gap = None;
    for t2 in [0.4, 0.3, 0.2, 0.1, 0.05, 0.02] {
        let (table, y) = noise_free_case(t2);
        let gap = y - y11_z_lower(&table).unwrap();
        assert!(gap >= -1e-12 * y, "t2 = {t2}: bound above truth by {}", -gap);
        assert!(gap <= last_gap * (1.0 + 1e-9), "t2 = {t2}: gap {gap} grew from {last_gap}");
        first_gap.get_or_insert(gap);
        last_gap = gap;
    }
    // The remaining gap comes from the fixed middle decoy.
    assert!(last_gap < 0.6 * first_gap.unwrap(), "{last_gap} vs {first_gap:?}");
}

#[test]
fn ideal_active_error_bound_vanishes_as_levels_separate() {
    let ch = ChannelParams::symmetric(1.0, 0.2, 10.0, 0.0, 0.0).unwrap();
    let mut last = f64::INFINITY;
    for ratio in [0.5, 0.25, 0.1, 0.05, 0.02] {
        let mu = ActiveIntensities::new(0.4, 0.4 * ratio, 0.0).unwrap();
        let e = e11_x_upper(&active_table(&ch, &mu, 6).unwrap()).unwrap();
        assert!(e <= last * (1.0 + 1e-9), "ratio {ratio}: {e} > {last}");
        last = e;
    }
    assert!(last < 0.01, "{last}");
}

/// A larger photon-number cut shrinks the unknown tail, so it may tighten the bounds by about
/// the tail mass; every cut must still bracket the truth.
#[test]
fn every_photon_cut_brackets_the_truth() {
    let quad = QuadratureSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for k in 0..5 {
        let c = random_case(&mut rng);
        let (y_z, _) = truth(Basis::Z, &c.rp, &c.ch, &quad);
        let (y_x, t_x) = truth(Basis::X, &c.rp, &c.ch, &quad);
        for cut in [2, 4, 6, 8, 10] {
            let b = decoy_bounds(&GainTable::compute(&c.sp, &c.rp, &c.ch, &quad, cut).unwrap()).unwrap();
            assert!(b.y11_z_lower <= y_z * (1.0 + 1e-9), "case {k}, cut {cut}: {b:?}");
            assert!(b.e11_x_upper >= t_x / y_x * (1.0 - 1e-9), "case {k}, cut {cut}: {b:?}");
        }
    }
}
