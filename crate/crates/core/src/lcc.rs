//! Two-terminal LCC converter equations in physical units.
//!
//! The rectifier and inverter obey
//!
//! ```text
//! V_R = V_I + I·R
//! V = N·((3√2/π)·E·cos θ − (3/π)·X·I)       θ = α at R, γ at I
//! cos φ = cos θ − X·I / (√2·E)
//! P = V·I,  Q = P·tan φ
//! ```
//!
//! with `E = V_ac·T`, the valve-side line-to-line voltage of the converter
//! transformer.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BusIndex, ControlMode, LccLink};

const K_VOLTAGE: f64 = 3.0 * SQRT_2 / PI;
const K_DROP: f64 = 3.0 / PI;

/// Quantities that ended on a bound while solving a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitFlag {
    Alpha,
    Gamma,
    TapR,
    TapI,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConverterSolution {
    /// kV.
    pub v_dc_r: f64,
    pub v_dc_i: f64,
    /// kA.
    pub i_dc: f64,
    /// Degrees.
    pub alpha: f64,
    pub gamma: f64,
    pub phi_r: f64,
    pub phi_i: f64,
    pub tap_r: f64,
    pub tap_i: f64,
    /// MW and MVAr drawn from the rectifier AC bus.
    pub p_r: f64,
    pub q_r: f64,
    /// MW delivered to and MVAr drawn from the inverter AC bus.
    pub p_i: f64,
    pub q_i: f64,
    pub limit_flags: Vec<LimitFlag>,
}

impl ConverterSolution {
    /// Whether both control angles lie inside the link's ranges.
    pub fn angles_in_range(&self, link: &LccLink) -> bool {
        within(self.alpha, link.alpha_range) && within(self.gamma, link.gamma_range)
    }
}

fn within(angle: f64, [lo, hi]: [f64; 2]) -> bool {
    angle >= lo && angle <= hi
}

/// Power drawn from an AC bus by a converter, per unit on the system base.
/// Negative `p_dc` is a source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcInjection {
    pub bus: BusIndex,
    pub p_dc: f64,
    pub q_dc: f64,
}

/// AC terminal voltage seen by a converter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcTerminal {
    pub v_pu: f64,
    pub base_kv: f64,
}

impl AcTerminal {
    pub fn kv(&self) -> f64 {
        self.v_pu * self.base_kv
    }
}

/// One converter station's view of the link.
struct Station {
    bridges: f64,
    xc: f64,
    v_ac_kv: f64,
    range: [f64; 2],
    tap: f64,
}

/// Solved angle state of one station at a fixed tap.
struct Firing {
    cos: f64,
    angle: f64,
    e: f64,
}

impl Station {
    fn cos_angle(&self, v_dc: f64, i_dc: f64, tap: f64) -> (f64, f64) {
        let e = self.v_ac_kv * tap;
        (
            (v_dc / self.bridges + K_DROP * self.xc * i_dc) / (K_VOLTAGE * e),
            e,
        )
    }

    fn firing(&self, v_dc: f64, i_dc: f64, tap: f64) -> Option<Firing> {
        let (cos, e) = self.cos_angle(v_dc, i_dc, tap);
        (cos > 0.0 && cos <= 1.0).then(|| Firing {
            cos,
            angle: cos.acos().to_degrees(),
            e,
        })
    }

    /// Resolve the angle, moving the tap along its grid only when the angle
    /// at the current tap is out of range. Among in-range taps the one with
    /// the angle nearest the lower bound wins. When no grid tap reaches the
    /// range, the closest feasible one is returned with the bound flag set.
    /// `Err` carries the cosine when no tap gives a valid angle.
    fn resolve(
        &self,
        v_dc: f64,
        i_dc: f64,
        link: &LccLink,
    ) -> std::result::Result<(f64, Firing, bool), f64> {
        let [lo, hi] = self.range;
        if let Some(f) = self.firing(v_dc, i_dc, self.tap) {
            if within(f.angle, self.range) {
                return Ok((self.tap, f, false));
            }
        }
        let grid = {
            let below = ((self.tap - link.tap_min) / link.tap_step + 1e-9).floor() as i64;
            let above = ((link.tap_max - self.tap) / link.tap_step + 1e-9).floor() as i64;
            (-below.max(0)..=above.max(0)).map(|k| self.tap + k as f64 * link.tap_step)
        };
        let distance = |a: f64| if a < lo { lo - a } else { (a - hi).max(0.0) };
        let mut best: Option<(f64, Firing)> = None;
        let mut in_range = false;
        for tap in grid {
            let Some(f) = self.firing(v_dc, i_dc, tap) else {
                continue;
            };
            let inside = within(f.angle, self.range);
            let better = match &best {
                None => true,
                Some(_) if inside && !in_range => true,
                Some((_, b)) if inside => f.angle - lo < b.angle - lo,
                Some(_) if in_range => false,
                Some((_, b)) => distance(f.angle) < distance(b.angle),
            };
            if better {
                in_range |= inside;
                best = Some((tap, f));
            }
        }
        match best {
            Some((tap, f)) => Ok((tap, f, !in_range)),
            None => Err(self.cos_angle(v_dc, i_dc, self.tap).0),
        }
    }
}

/// DC current for the link's control mode.
pub fn dc_current(link: &LccLink) -> Result<f64> {
    match link.control {
        ControlMode::CurrentVoltage => Ok(link.i_set),
        ControlMode::PowerVoltage => {
            // r·I² + V·I − P = 0 in kV, kA, MW.
            let (r, v, p) = (link.r_dc, link.v_set, link.p_set);
            if r == 0.0 {
                return Ok(p / v);
            }
            let disc = v * v + 4.0 * r * p;
            if !(disc >= 0.0) {
                return Err(Error::Internal(format!("negative discriminant {disc}")));
            }
            // Rationalized root, stable for small r.
            Ok(2.0 * p / (v + disc.sqrt()))
        }
    }
}

/// Solve one link for given AC terminal voltages. `index` only labels
/// errors.
pub fn solve_dc_link(
    index: usize,
    link: &LccLink,
    rectifier: AcTerminal,
    inverter: AcTerminal,
) -> Result<ConverterSolution> {
    if !(rectifier.v_pu > 0.0 && inverter.v_pu > 0.0) {
        return Err(Error::Argument(format!(
            "dc link {index}: AC terminal voltages must be positive"
        )));
    }
    let i_dc = dc_current(link)?;
    let v_dc_i = link.v_set;
    let v_dc_r = v_dc_i + i_dc * link.r_dc;

    let rect = Station {
        bridges: link.bridges_r as f64,
        xc: link.xc_r,
        v_ac_kv: rectifier.kv(),
        range: link.alpha_range,
        tap: link.tap_r,
    };
    let inv = Station {
        bridges: link.bridges_i as f64,
        xc: link.xc_i,
        v_ac_kv: inverter.kv(),
        range: link.gamma_range,
        tap: link.tap_i,
    };
    let infeasible = |quantity, value| Error::InfeasibleLink {
        link: index,
        quantity,
        value,
    };
    let (tap_r, fr, bound_r) = rect
        .resolve(v_dc_r, i_dc, link)
        .map_err(|c| infeasible("cos_alpha", c))?;
    let (tap_i, fi, bound_i) = inv
        .resolve(v_dc_i, i_dc, link)
        .map_err(|c| infeasible("cos_gamma", c))?;

    let power_factor =
        |f: &Firing, xc: f64| (f.cos - xc * i_dc / (SQRT_2 * f.e)).clamp(-1.0, 1.0).acos();
    let phi_r = power_factor(&fr, link.xc_r);
    let phi_i = power_factor(&fi, link.xc_i);
    let p_r = v_dc_r * i_dc;
    let p_i = v_dc_i * i_dc;

    let mut limit_flags = Vec::new();
    if bound_r {
        limit_flags.extend([LimitFlag::Alpha, LimitFlag::TapR]);
    }
    if bound_i {
        limit_flags.extend([LimitFlag::Gamma, LimitFlag::TapI]);
    }

    Ok(ConverterSolution {
        v_dc_r,
        v_dc_i,
        i_dc,
        alpha: fr.angle,
        gamma: fi.angle,
        phi_r: phi_r.to_degrees(),
        phi_i: phi_i.to_degrees(),
        tap_r,
        tap_i,
        p_r,
        q_r: p_r * phi_r.tan(),
        p_i,
        q_i: p_i * phi_i.tan(),
        limit_flags,
    })
}

/// Rectifier and inverter bus injections of a solved link.
pub fn converter_injections(
    sol: &ConverterSolution,
    terminals: (BusIndex, BusIndex),
    base_mva: f64,
) -> [DcInjection; 2] {
    [
        DcInjection {
            bus: terminals.0,
            p_dc: sol.p_r / base_mva,
            q_dc: sol.q_r / base_mva,
        },
        DcInjection {
            bus: terminals.1,
            p_dc: -sol.p_i / base_mva,
            q_dc: sol.q_i / base_mva,
        },
    ]
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn table_one() -> LccLink {
        LccLink {
            r_bus: 119,
            i_bus: 120,
            bridges_r: 4,
            bridges_i: 4,
            control: ControlMode::PowerVoltage,
            p_set: 100.0,
            v_set: 460.0,
            i_set: 0.0,
            xc_r: 6.8,
            xc_i: 6.8,
            r_dc: 6.2,
            tap_r: 0.7478,
            tap_i: 0.7478,
            tap_step: 0.005,
            tap_min: 0.5,
            tap_max: 1.2,
            alpha_range: [15.0, 20.0],
            gamma_range: [18.0, 20.0],
            in_service: true,
        }
    }

    fn term(v_pu: f64) -> AcTerminal {
        AcTerminal {
            v_pu,
            base_kv: 115.0,
        }
    }

    fn bisect_current(r: f64, v: f64, p: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, p / v);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if r * mid * mid + v * mid - p > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quadratic_root_matches_bisection() {
        let link = table_one();
        let i = dc_current(&link).unwrap();
        let oracle = bisect_current(6.2, 460.0, 100.0);
        assert!((i - oracle).abs() < 1e-12);
        assert!((i - 0.2167).abs() < 1e-4);
        let p = (460.0 + 6.2 * i) * i;
        assert!((p - 100.0).abs() / 100.0 < 1e-9);
    }

    #[test]
    fn lossless_line() {
        let mut link = table_one();
        link.r_dc = 0.0;
        let s = solve_dc_link(0, &link, term(1.0), term(1.0)).unwrap();
        assert_eq!(s.i_dc, 100.0 / 460.0);
        assert_eq!(s.v_dc_r, s.v_dc_i);
        assert_eq!(s.p_r, s.p_i);
    }

    #[test]
    fn line_equation_and_power_balance() {
        let s = solve_dc_link(0, &table_one(), term(1.0), term(0.98)).unwrap();
        assert_eq!(s.v_dc_r, s.v_dc_i + s.i_dc * 6.2);
        let loss = s.i_dc * s.i_dc * 6.2;
        assert!((s.p_r - s.p_i - loss).abs() <= 4.0 * f64::EPSILON * s.p_r);
        assert!(s.q_r > 0.0 && s.q_i > 0.0);
        assert!(s.angles_in_range(&table_one()));
    }

    #[test]
    fn zero_current_power_factor_equals_firing_angle() {
        let mut link = table_one();
        link.control = ControlMode::CurrentVoltage;
        link.i_set = 0.0;
        link.alpha_range = [1.0, 89.0];
        link.gamma_range = [1.0, 89.0];
        let s = solve_dc_link(0, &link, term(1.0), term(1.0)).unwrap();
        assert_eq!(s.phi_r, s.alpha);
        assert_eq!(s.phi_i, s.gamma);
        let e = 115.0 * link.tap_r;
        let v = link.bridges_r as f64 * K_VOLTAGE * e * s.alpha.to_radians().cos();
        assert!((v - s.v_dc_r).abs() < 1e-9);
        let inj = converter_injections(&s, (0, 1), 100.0);
        assert_eq!(inj[0].p_dc, 0.0);
        assert_eq!(inj[1].q_dc, 0.0);
    }

    #[test]
    fn tap_moves_only_out_of_range_side() {
        let link = table_one();
        let s = solve_dc_link(0, &link, term(1.0), term(1.0)).unwrap();
        let fresh = |tap: f64, v: f64, xc: f64| {
            ((v / 4.0 + K_DROP * xc * s.i_dc) / (K_VOLTAGE * 115.0 * tap))
                .acos()
                .to_degrees()
        };
        assert!((fresh(s.tap_r, s.v_dc_r, 6.8) - s.alpha).abs() < 1e-9);
        assert!((fresh(s.tap_i, s.v_dc_i, 6.8) - s.gamma).abs() < 1e-9);
        // Nearest feasible tap to the lower bound: one step down leaves range.
        if s.tap_r != link.tap_r {
            assert!(fresh(s.tap_r - link.tap_step, s.v_dc_r, 6.8) < 15.0);
        }
        assert!(s.limit_flags.is_empty());
    }

    #[test]
    fn exhausted_taps_flag_or_fail() {
        let mut link = table_one();
        link.tap_max = 0.76;
        link.tap_min = 0.74;
        match solve_dc_link(3, &link, term(0.3), term(1.0)) {
            Err(Error::InfeasibleLink {
                link: 3, quantity, ..
            }) => assert_eq!(quantity, "cos_alpha"),
            other => panic!("{other:?}"),
        }
        link.alpha_range = [1.0, 2.0];
        let s = solve_dc_link(0, &link, term(1.0), term(1.0)).unwrap();
        assert!(s.limit_flags.contains(&LimitFlag::Alpha));
        assert!(!s.angles_in_range(&link));
    }

    #[test]
    fn injections_from_tan_phi() {
        let s = ConverterSolution {
            v_dc_r: 500.0,
            v_dc_i: 500.0,
            i_dc: 0.2,
            alpha: 30.0,
            gamma: 30.0,
            phi_r: 30.0,
            phi_i: 30.0,
            tap_r: 1.0,
            tap_i: 1.0,
            p_r: 100.0,
            q_r: 100.0 * 30f64.to_radians().tan(),
            p_i: 100.0,
            q_i: 0.0,
            limit_flags: vec![],
        };
        let [r, i] = converter_injections(&s, (4, 9), 100.0);
        assert_eq!(r.bus, 4);
        assert_eq!(r.p_dc, 1.0);
        assert!((r.q_dc - 0.5774).abs() < 1e-4);
        assert_eq!(i.p_dc, -1.0);
    }
}
