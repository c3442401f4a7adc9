//! CSV, key=value, SVG and LP-format writers. Everything here is plain string building so
//! output is byte-for-byte reproducible.

use std::fmt::Write as _;

use pmdi_core::decoy::{DecoyLp, Direction, Sense};
use pmdi_core::keyrate::KeyRateResult;
use pmdi_core::montecarlo::{Comparison, Quantity, TrialTally};

/// Scientific notation with 13 significant digits.
pub fn sci(x: f64) -> String {
    format!("{x:.12e}")
}

pub const SWEEP_HEADER: &str = "distance_km,rate_passive,rate_active,y11_lower,e11_upper,gain,error_gain,sift_prefactor";

/// One sweep row. The bound and gain columns describe the passive protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub distance: f64,
    pub passive: KeyRateResult,
    pub active_rate: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        let p = &r.passive;
        let fields = [r.distance, p.rate, r.active_rate, p.y11_z_lower, p.e11_x_upper, p.gain, p.error_gain, p.sift_prefactor];
        out.push_str(&fields.map(sci).join(","));
        out.push('\n');
    }
    out
}

pub const BASELINE_HEADER: &str = "distance_km,rate_active,mu_signal,mu_decoy,mu_weak,y11_lower,e11_upper,gain,error_gain";

pub fn key_values(prefix: &str, r: &KeyRateResult) -> String {
    let mut out = String::new();
    for (k, v) in [
        ("rate", r.rate),
        ("rate_unfloored", r.raw),
        ("y11_z_lower", r.y11_z_lower),
        ("e11_x_upper", r.e11_x_upper),
        ("y11_x_lower", r.bounds.y11_x_lower),
        ("b11_x_upper", r.bounds.b11_x_upper),
        ("sift_prefactor", r.sift_prefactor),
        ("gain", r.gain),
        ("error_gain", r.error_gain),
        ("qber", r.qber()),
        ("p11", r.p11),
    ] {
        let _ = writeln!(out, "{prefix}{k}={}", sci(v));
    }
    out
}

pub fn comparison_table(c: &Comparison) -> String {
    let mut out = String::from("basis,decoy_a,decoy_b,quantity,outcome,pairs,count,empirical,analytic,z,flagged\n");
    for cell in &c.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            cell.basis,
            cell.decoy_i.name(),
            cell.decoy_j.name(),
            match cell.quantity {
                Quantity::Gain => "gain",
                Quantity::ErrorGain => "error_gain",
            },
            cell.outcome.name(),
            cell.pairs,
            cell.count,
            sci(cell.empirical),
            sci(cell.analytic),
            sci(cell.z),
            cell.flagged as u8,
        );
    }
    out
}

/// Raw tally: one row per non-empty (Alice label, Bob label, outcome) cell.
pub fn tally_csv(t: &TrialTally) -> String {
    let mut out = String::from("basis_a,bit_a,decoy_a,basis_b,bit_b,decoy_b,outcome,count\n");
    for (a, b, o, c) in t.cells() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{c}",
            a.basis,
            a.bit,
            a.innermost.name(),
            b.basis,
            b.bit,
            b.innermost.name(),
            o.map_or("invalid", |o| o.name()),
        );
    }
    out
}

/// CPLEX LP text for one decoy program.
pub fn lp_text(lp: &DecoyLp) -> String {
    let p = &lp.lp;
    let term = |c: f64, name: &str| format!("{} {} {name}", if c < 0.0 { "-" } else { "+" }, sci(c.abs()));
    let mut out = String::new();
    out.push_str(match p.direction {
        Direction::Minimize => "Minimize\n",
        Direction::Maximize => "Maximize\n",
    });
    let objective: Vec<String> =
        p.objective.iter().zip(&lp.names).filter(|(c, _)| **c != 0.0).map(|(c, n)| term(*c, n)).collect();
    let _ = writeln!(out, " obj: {}", objective.join(" "));
    out.push_str("Subject To\n");
    for (k, c) in p.constraints.iter().enumerate() {
        let terms: Vec<String> =
            c.coeffs.iter().zip(&lp.names).filter(|(a, _)| **a != 0.0).map(|(a, n)| term(*a, n)).collect();
        let lhs = if terms.is_empty() { format!("0 {}", lp.names[0]) } else { terms.join(" ") };
        let sense = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " c{k}: {lhs} {sense} {}", sci(c.rhs));
    }
    out.push_str("Bounds\n");
    for (name, u) in lp.names.iter().zip(&p.upper) {
        if u.is_finite() {
            let _ = writeln!(out, " 0 <= {name} <= {}", sci(*u));
        } else {
            let _ = writeln!(out, " {name} >= 0");
        }
    }
    out.push_str("End\n");
    out
}

/// A named curve for [`svg_plot`].
pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// Line chart with a log₁₀ y axis. Non-positive values are left out (they have no place on a
/// log axis), splitting the line there.
pub fn svg_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const LEFT: f64 = 80.0;
    const RIGHT: f64 = 150.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 50.0;
    let positive = || series.iter().flat_map(|s| s.points.iter()).filter(|p| p.1 > 0.0 && p.1.is_finite());
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for p in &s.points {
            x0 = x0.min(p.0);
            x1 = x1.max(p.0);
        }
    }
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in positive() {
        y0 = y0.min(p.1.log10().floor());
        y1 = y1.max(p.1.log10().ceil());
    }
    if !y0.is_finite() {
        (y0, y1) = (-1.0, 0.0);
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| TOP + (y1 - y.log10()) / (y1 - y0) * (H - TOP - BOTTOM);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let (bx, by) = (LEFT, H - BOTTOM);
    let _ = writeln!(out, r#"<path d="M{bx} {TOP} V{by} H{}" fill="none" stroke="black"/>"#, W - RIGHT);
    for d in (y0 as i32)..=(y1 as i32) {
        let y = py(10f64.powi(d));
        let _ = writeln!(out, r##"<path d="M{LEFT} {y:.2} H{}" stroke="#ddd"/>"##, W - RIGHT);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">1e{d}</text>"#, LEFT - 6.0, y + 4.0);
    }
    for k in 0..=5 {
        let x = x0 + (x1 - x0) * k as f64 / 5.0;
        let _ = writeln!(out, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, px(x), by + 18.0, trim_number(x));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (LEFT + W - RIGHT) / 2.0, H - 10.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="20" y="{0}" text-anchor="middle" transform="rotate(-90 20 {0})">{1}</text>"#,
        (TOP + by) / 2.0,
        escape(y_label)
    );
    for (k, s) in series.iter().enumerate() {
        let mut d = String::new();
        let mut pen_down = false;
        for &(x, y) in &s.points {
            if y > 0.0 && y.is_finite() {
                let _ = write!(d, "{}{:.2} {:.2} ", if pen_down { "L" } else { "M" }, px(x), py(y));
                pen_down = true;
            } else {
                pen_down = false;
            }
        }
        if !d.is_empty() {
            let _ = writeln!(out, r#"<path d="{}" fill="none" stroke="{}" stroke-width="2"/>"#, d.trim_end(), s.color);
        }
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = W - RIGHT + 10.0;
        let _ = writeln!(out, r#"<path d="M{lx} {ly} h20" stroke="{}" stroke-width="2"/>"#, s.color);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(s.label));
    }
    out.push_str("</svg>\n");
    out
}

fn trim_number(x: f64) -> String {
    let s = format!("{x:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
