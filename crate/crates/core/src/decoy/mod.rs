//! Decoy-state linear programs for Y₁₁^{Z,L} and e₁₁^{X,U}.
//!
//! Unknowns are the yields Y_nm (or error yields b_nm = e_nm Y_nm) for n, m ≤ cut. Each of
//! the 9 decoy pairs gives ⟨Q⟩ − (1 − Σ⟨P_nm⟩) ≤ Σ ⟨P_nm⟩ Y_nm ≤ ⟨Q⟩, the slack absorbing all
//! photon numbers beyond the cut.

mod simplex;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

pub use simplex::{solve_lp, Constraint, Direction, LinearProgram, LpSolution, Sense};

use crate::error::Result;
use crate::expectations::GainTable;
use crate::regions::{Basis, Decoy};

/// A decoy program together with variable names for export.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoyLp {
    pub cut: usize,
    pub lp: LinearProgram,
    pub names: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyBounds {
    pub y11_z_lower: f64,
    pub e11_x_upper: f64,
    pub y11_x_lower: f64,
    pub b11_x_upper: f64,
}

/// Which observed quantity the program constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    Gain,
    ErrorGain,
}

/// Relative size below which a ⟨P_nm⟩ coefficient is dropped from its row.
const NEGLIGIBLE: f64 = 1e-13;

fn var(n: usize, m: usize, cut: usize) -> usize {
    n * (cut + 1) + m
}

impl DecoyLp {
    /// Optimize the (1,1) variable of `basis` under the constraints of `observable`.
    pub fn build(table: &GainTable, basis: Basis, observable: Observable, direction: Direction) -> Self {
        let cut = table.cut;
        let size = (cut + 1) * (cut + 1);
        let mut objective = vec![0.0; size];
        objective[var(1, 1, cut)] = 1.0;
        let mut lp = LinearProgram::new(objective, direction);
        lp.upper = vec![1.0; size];
        for i in Decoy::ALL {
            for j in Decoy::ALL {
                let mut coeffs = vec![0.0; size];
                for n in 0..=cut {
                    for m in 0..=cut {
                        coeffs[var(n, m, cut)] = table.pnm(basis, i, j, n, m);
                    }
                }
                // Coefficients below double precision of the row only make the program
                // ill-conditioned. Dropping them relaxes the upper side, and their largest
                // possible contribution (yield 1) is moved into the lower side's slack.
                let row_mass: f64 = coeffs.iter().sum();
                let mut dropped = 0.0;
                for c in coeffs.iter_mut() {
                    if *c < NEGLIGIBLE * row_mass {
                        dropped += *c;
                        *c = 0.0;
                    }
                }
                let observed = match observable {
                    Observable::Gain => table.gain(basis, i, j),
                    Observable::ErrorGain => table.error_gain(basis, i, j),
                };
                let tail = (1.0 - table.pnm_mass(basis, i, j)).max(0.0);
                let lower = observed - tail - dropped;
                // A non-positive lower side is implied by Y ≥ 0 and only adds a degenerate row.
                if lower > 0.0 {
                    lp.push(coeffs.clone(), Sense::Ge, lower);
                }
                lp.push(coeffs, Sense::Le, observed);
            }
        }
        let prefix = match observable {
            Observable::Gain => "y",
            Observable::ErrorGain => "b",
        };
        let names = (0..=cut)
            .flat_map(|n| (0..=cut).map(move |m| (n, m)))
            .map(|(n, m)| format!("{prefix}_{n}_{m}"))
            .collect();
        Self { cut, lp, names }
    }

    pub fn solve(&self) -> Result<LpSolution> {
        solve_lp(&self.lp)
    }
}

/// Y₁₁^{Z,L}.
pub fn y11_z_lower(table: &GainTable) -> Result<f64> {
    let s = DecoyLp::build(table, Basis::Z, Observable::Gain, Direction::Minimize).solve()?;
    Ok(s.value.clamp(0.0, 1.0))
}

/// e₁₁^{X,U} by two programs: Y₁₁^{X,L} from the gains, b₁₁^U from the error gains, and
/// e = min(b/Y, 1/2) (1/2 when Y₁₁^{X,L} = 0).
pub fn e11_x_upper(table: &GainTable) -> Result<f64> {
    let (e, _, _) = e11_x_parts(table)?;
    Ok(e)
}

fn e11_x_parts(table: &GainTable) -> Result<(f64, f64, f64)> {
    let y = DecoyLp::build(table, Basis::X, Observable::Gain, Direction::Minimize).solve()?.value.clamp(0.0, 1.0);
    let b = DecoyLp::build(table, Basis::X, Observable::ErrorGain, Direction::Maximize).solve()?.value.clamp(0.0, 1.0);
    let e = if y > 0.0 { (b / y).min(0.5) } else { 0.5 };
    Ok((e, y, b))
}

pub fn decoy_bounds(table: &GainTable) -> Result<DecoyBounds> {
    let y11_z_lower = y11_z_lower(table)?;
    let (e11_x_upper, y11_x_lower, b11_x_upper) = e11_x_parts(table)?;
    Ok(DecoyBounds { y11_z_lower, e11_x_upper, y11_x_lower, b11_x_upper })
}
