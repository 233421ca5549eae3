//! Pointwise pipe hydraulics.
//!
//! Everything here is a pure function of a signed volume flow `q`
//! (m^3/s), a pipe geometry, and the physical constants. Head loss over
//! a pipe of length `l` is `l * U(q) + M(q)`, where `U` is the
//! Darcy-Weisbach resistance per unit length and `M = m * q * |q|` is
//! the lumped minor loss. `U` and `M` are odd in `q`, so the same
//! formulas hold regardless of flow direction.
//!
//! Friction model: laminar `f = 64/Re` below `Re = 2000`, Swamee-Jain
//! above `Re = 4000`, and a linear bridge in `Re` across the
//! transitional band so that `U` stays continuous and strictly
//! increasing for the root finder. The laminar branch of `U` is
//! evaluated in closed form, which cancels the `1/Re` singularity and
//! makes `U(0) = 0` exact.

use std::f64::consts::{LN_10, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flow regime below this Reynolds number is laminar.
pub const RE_LAMINAR_MAX: f64 = 2000.0;
/// Flow regime above this Reynolds number is turbulent.
pub const RE_TURBULENT_MIN: f64 = 4000.0;
/// Swamee-Jain is only trusted up to this relative roughness.
pub const MAX_RELATIVE_ROUGHNESS: f64 = 1e-2;

/// Gravitational acceleration and kinematic viscosity shared by every
/// hydraulic formula. The defaults are SI values for water near 20 C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Gravitational acceleration (m/s^2).
    pub gravity: f64,
    /// Kinematic viscosity (m^2/s).
    pub kinematic_viscosity: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self { gravity: 9.80665, kinematic_viscosity: 1e-6 }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        if self.gravity <= 0.0 || !self.gravity.is_finite() {
            return Err(Error::InvalidConstants(format!(
                "gravity must be positive, got {}",
                self.gravity
            )));
        }
        if self.kinematic_viscosity <= 0.0 || !self.kinematic_viscosity.is_finite() {
            return Err(Error::InvalidConstants(format!(
                "kinematic viscosity must be positive, got {}",
                self.kinematic_viscosity
            )));
        }
        Ok(())
    }
}

/// Length, diameter, roughness and minor-loss coefficient of one pipe.
/// All SI: meters for the first three, minor loss in head per flow^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipeGeometry {
    pub length: f64,
    pub diameter: f64,
    pub roughness: f64,
    pub minor_loss: f64,
}

impl PipeGeometry {
    pub fn new(length: f64, diameter: f64, roughness: f64, minor_loss: f64) -> Result<Self> {
        let geom = Self { length, diameter, roughness, minor_loss };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if self.length <= 0.0 || !self.length.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "length must be positive, got {}",
                self.length
            )));
        }
        self.validate_section()
    }

    /// Validates everything except the length. Zero-length sections
    /// appear internally when a pipe is split at a leak sitting exactly
    /// on a junction.
    pub(crate) fn validate_section(&self) -> Result<()> {
        if self.diameter <= 0.0 || !self.diameter.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "diameter must be positive, got {}",
                self.diameter
            )));
        }
        if self.roughness < 0.0 || !self.roughness.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "roughness must be non-negative, got {}",
                self.roughness
            )));
        }
        if self.relative_roughness() > MAX_RELATIVE_ROUGHNESS {
            return Err(Error::InvalidGeometry(format!(
                "relative roughness {} exceeds Swamee-Jain validity bound {}",
                self.relative_roughness(),
                MAX_RELATIVE_ROUGHNESS
            )));
        }
        if self.minor_loss < 0.0 || !self.minor_loss.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "minor loss must be non-negative, got {}",
                self.minor_loss
            )));
        }
        Ok(())
    }

    pub fn relative_roughness(&self) -> f64 {
        self.roughness / self.diameter
    }

    /// Same pipe cross-section with a different length. Used when a
    /// pipe is split by an auxiliary leak vertex; `length` may be zero.
    pub(crate) fn section(&self, length: f64) -> Self {
        Self { length, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowRegime {
    Laminar,
    Transitional,
    Turbulent,
}

pub fn flow_regime(reynolds: f64) -> FlowRegime {
    if reynolds < RE_LAMINAR_MAX {
        FlowRegime::Laminar
    } else if reynolds > RE_TURBULENT_MIN {
        FlowRegime::Turbulent
    } else {
        FlowRegime::Transitional
    }
}

/// Everything the head-loss relation needs at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipeFlowTerms {
    pub reynolds: f64,
    pub regime: FlowRegime,
    /// Darcy friction factor; `+inf` at exactly zero flow, where only
    /// `resistance` (which is zero there) is meaningful.
    pub friction: f64,
    /// Resistance `U`, head per unit length, odd in `q`.
    pub resistance: f64,
    /// Minor loss `M = m q |q|`, head, odd in `q`.
    pub minor: f64,
    /// `dU/dq`, non-negative everywhere.
    pub d_resistance_dq: f64,
}

/// Reynolds number `4 |q| / (pi nu d)` for a circular pipe.
pub fn reynolds(flow: f64, diameter: f64, consts: &PhysicalConstants) -> Result<f64> {
    consts.validate()?;
    if diameter <= 0.0 || !diameter.is_finite() {
        return Err(Error::InvalidGeometry(format!(
            "diameter must be positive, got {diameter}"
        )));
    }
    Ok(4.0 * flow.abs() / (PI * consts.kinematic_viscosity * diameter))
}

/// Darcy friction factor. Laminar `64/Re`, Swamee-Jain when turbulent,
/// linear interpolation in `Re` across the transitional band.
///
/// At `q = 0` the factor diverges (`+inf`); use [`resistance_term`],
/// which is finite there.
pub fn friction_factor(flow: f64, geom: &PipeGeometry, consts: &PhysicalConstants) -> Result<f64> {
    geom.validate_section()?;
    let re = reynolds(flow, geom.diameter, consts)?;
    Ok(friction_from_reynolds(re, geom))
}

fn swamee_jain(reynolds: f64, geom: &PipeGeometry) -> f64 {
    let arg = geom.roughness / (3.7 * geom.diameter) + 5.74 / reynolds.powf(0.9);
    0.25 / arg.log10().powi(2)
}

fn friction_from_reynolds(re: f64, geom: &PipeGeometry) -> f64 {
    match flow_regime(re) {
        FlowRegime::Laminar => 64.0 / re,
        FlowRegime::Turbulent => swamee_jain(re, geom),
        FlowRegime::Transitional => {
            let f_lam = 64.0 / RE_LAMINAR_MAX;
            let f_turb = swamee_jain(RE_TURBULENT_MIN, geom);
            f_lam + (re - RE_LAMINAR_MAX) * (f_turb - f_lam) / (RE_TURBULENT_MIN - RE_LAMINAR_MAX)
        }
    }
}

/// Resistance term `U = 8 f q |q| / (d^5 pi^2 g)`, head per unit
/// length. Odd in `q`, continuous through `q = 0` (laminar closed form
/// `U = 128 nu q / (pi g d^4)`), strictly increasing.
pub fn resistance_term(flow: f64, geom: &PipeGeometry, consts: &PhysicalConstants) -> Result<f64> {
    geom.validate_section()?;
    let re = reynolds(flow, geom.diameter, consts)?;
    Ok(resistance_from_reynolds(flow, re, geom, consts))
}

fn resistance_from_reynolds(
    flow: f64,
    re: f64,
    geom: &PipeGeometry,
    consts: &PhysicalConstants,
) -> f64 {
    if re < RE_LAMINAR_MAX {
        128.0 * consts.kinematic_viscosity * flow / (PI * consts.gravity * geom.diameter.powi(4))
    } else {
        let f = friction_from_reynolds(re, geom);
        8.0 * f * flow * flow.abs() / (geom.diameter.powi(5) * PI * PI * consts.gravity)
    }
}

/// Minor loss `M = m q |q|`, head. Zero when the coefficient is zero.
pub fn minor_loss_term(flow: f64, geom: &PipeGeometry) -> f64 {
    geom.minor_loss * flow * flow.abs()
}

/// Head loss `l U(q) + M(q)` over the whole pipe; same sign as `q`.
pub fn head_loss(flow: f64, geom: &PipeGeometry, consts: &PhysicalConstants) -> Result<f64> {
    let u = resistance_term(flow, geom, consts)?;
    Ok(geom.length * u + minor_loss_term(flow, geom))
}

/// Analytic `dU/dq`.
///
/// Exactly at the regime seams `Re in {2000, 4000}` the derivative is
/// discontinuous and this returns [`Error::RegimeBoundary`]; callers
/// nudge `q` by an ulp-scale amount instead.
pub fn d_resistance_dq(
    flow: f64,
    geom: &PipeGeometry,
    consts: &PhysicalConstants,
) -> Result<f64> {
    geom.validate_section()?;
    let re = reynolds(flow, geom.diameter, consts)?;
    if re == RE_LAMINAR_MAX || re == RE_TURBULENT_MIN {
        return Err(Error::RegimeBoundary { reynolds: re });
    }
    let d = geom.diameter;
    if re < RE_LAMINAR_MAX {
        return Ok(128.0 * consts.kinematic_viscosity / (PI * consts.gravity * d.powi(4)));
    }
    let k = 8.0 / (d.powi(5) * PI * PI * consts.gravity);
    let dre_dq = 4.0 / (PI * consts.kinematic_viscosity * d);
    let (f, df_dre) = if re > RE_TURBULENT_MIN {
        let arg = geom.roughness / (3.7 * d) + 5.74 / re.powf(0.9);
        let lg = arg.log10();
        let darg_dre = -0.9 * 5.74 * re.powf(-1.9);
        let dlg_dre = darg_dre / (arg * LN_10);
        (0.25 / (lg * lg), -0.5 / lg.powi(3) * dlg_dre)
    } else {
        let f_lam = 64.0 / RE_LAMINAR_MAX;
        let slope = (swamee_jain(RE_TURBULENT_MIN, geom) - f_lam)
            / (RE_TURBULENT_MIN - RE_LAMINAR_MAX);
        (f_lam + (re - RE_LAMINAR_MAX) * slope, slope)
    };
    // U = k f(Re) q|q| with Re = dre_dq |q|, so
    // dU/dq = k (f'(Re) dre_dq q^2 + 2 f |q|).
    Ok(k * (df_dre * dre_dq * flow * flow + 2.0 * f * flow.abs()))
}

/// `d_resistance_dq` with an ulp-scale nudge applied when the flow sits
/// exactly on a regime seam. Used for diagnostics where a hard error
/// would be unhelpful.
pub(crate) fn d_resistance_dq_nudged(
    flow: f64,
    geom: &PipeGeometry,
    consts: &PhysicalConstants,
) -> Result<f64> {
    match d_resistance_dq(flow, geom, consts) {
        Err(Error::RegimeBoundary { .. }) => {
            let nudged = if flow == 0.0 { f64::MIN_POSITIVE } else { flow * (1.0 + 1e-12) };
            d_resistance_dq(nudged, geom, consts)
        }
        other => other,
    }
}

/// All flow terms at one operating point.
pub fn flow_terms(flow: f64, geom: &PipeGeometry, consts: &PhysicalConstants) -> Result<PipeFlowTerms> {
    let re = reynolds(flow, geom.diameter, consts)?;
    geom.validate_section()?;
    Ok(PipeFlowTerms {
        reynolds: re,
        regime: flow_regime(re),
        friction: friction_from_reynolds(re, geom),
        resistance: resistance_from_reynolds(flow, re, geom, consts),
        minor: minor_loss_term(flow, geom),
        d_resistance_dq: d_resistance_dq_nudged(flow, geom, consts)?,
    })
}
