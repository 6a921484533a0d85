//! Macroscopic freezing estimate: Stokes-Einstein diffusion, the displacement
//! accumulated during one observation, and the Fubini-Study angle between
//! packets that far apart.
//!
//! All quantities are SI and unit-tagged; constructors reject non-positive
//! or non-finite values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! unit {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub f64);

        impl $name {
            pub fn value(self) -> f64 {
                self.0
            }
        }
    };
}

unit!(Meters);
unit!(Seconds);
unit!(Kelvin);
unit!(
    /// Dynamic viscosity, N s / m^2.
    PascalSeconds
);
unit!(JoulesPerKelvin);
unit!(SquareMetersPerSecond);
unit!(Radians);

pub const BOLTZMANN: JoulesPerKelvin = JoulesPerKelvin(1.380649e-23);
/// Dynamic viscosity of air at room temperature.
pub const AIR_VISCOSITY: PascalSeconds = PascalSeconds(1.8e-5);
/// Rounded viscosity used for the order-of-magnitude estimate.
pub const ROUNDED_VISCOSITY: PascalSeconds = PascalSeconds(1e-5);
/// Order-of-magnitude diffusion coefficient carried through the reference chain.
pub const REFERENCE_DIFFUSION: SquareMetersPerSecond = SquareMetersPerSecond(1e-12);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroScenario {
    pub radius: Meters,
    pub temperature: Kelvin,
    pub viscosity: PascalSeconds,
    pub observation_time: Seconds,
    /// Packet width used for the angle.
    pub resolution_sigma: Meters,
    /// Measurement resolution length; its angle is the default threshold.
    pub wavelength: Meters,
    pub boltzmann: JoulesPerKelvin,
    /// Spatial dimension of the displacement.
    pub dimension: u32,
}

impl MacroScenario {
    pub fn new(
        radius: Meters,
        temperature: Kelvin,
        viscosity: PascalSeconds,
        observation_time: Seconds,
        resolution_sigma: Meters,
        wavelength: Meters,
    ) -> Result<Self> {
        let s = Self {
            radius,
            temperature,
            viscosity,
            observation_time,
            resolution_sigma,
            wavelength,
            boltzmann: BOLTZMANN,
            dimension: 3,
        };
        s.validate()?;
        Ok(s)
    }

    /// A 1 mm sphere in still room-temperature air, observed with visible light.
    pub fn paper_1mm() -> Self {
        Self {
            radius: Meters(1e-3),
            temperature: Kelvin(293.0),
            viscosity: AIR_VISCOSITY,
            observation_time: Seconds(1e-13),
            resolution_sigma: Meters(1e-5),
            wavelength: Meters(1e-5),
            boltzmann: BOLTZMANN,
            dimension: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("radius", self.radius.0),
            ("temperature", self.temperature.0),
            ("viscosity", self.viscosity.0),
            ("observation_time", self.observation_time.0),
            ("resolution_sigma", self.resolution_sigma.0),
            ("wavelength", self.wavelength.0),
            ("boltzmann", self.boltzmann.0),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.dimension == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_radius(self, radius: Meters) -> Self {
        Self { radius, ..self }
    }

    pub fn with_viscosity(self, viscosity: PascalSeconds) -> Self {
        Self { viscosity, ..self }
    }
}

/// `D = k_B T / (6 pi eta r)`.
pub fn stokes_einstein(s: &MacroScenario) -> SquareMetersPerSecond {
    SquareMetersPerSecond(s.boltzmann.0 * s.temperature.0 / (6.0 * std::f64::consts::PI * s.viscosity.0 * s.radius.0))
}

/// Per-axis `sqrt(2 D t)`.
pub fn displacement_rms(d: SquareMetersPerSecond, t: Seconds) -> Meters {
    displacement_rms_in(d, t, 1)
}

/// `sqrt(2 dim D t)`, the RMS length of a `dim`-dimensional displacement.
pub fn displacement_rms_in(d: SquareMetersPerSecond, t: Seconds, dim: u32) -> Meters {
    Meters((2.0 * dim as f64 * d.0.max(0.0) * t.0.max(0.0)).sqrt())
}

/// `theta = arccos(exp(-delta^2 / (8 sigma^2)))`, evaluated as
/// `asin(sqrt(-expm1(-delta^2 / (4 sigma^2))))` to keep precision when
/// `delta << sigma`.
pub fn fs_angle_of_displacement(delta: Meters, sigma: Meters) -> Radians {
    let x = delta.0 * delta.0 / (4.0 * sigma.0 * sigma.0);
    Radians((-(-x).exp_m1()).sqrt().asin())
}

/// Small-displacement limit `delta / (2 sigma)`.
pub fn fs_angle_asymptote(delta: Meters, sigma: Meters) -> Radians {
    Radians(delta.0 / (2.0 * sigma.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub diffusion: SquareMetersPerSecond,
    pub displacement_per_axis: Meters,
    pub displacement: Meters,
    pub theta_per_axis: Radians,
    pub theta: Radians,
    pub theta_asymptote: Radians,
}

/// `D -> delta -> theta` for the scenario's time, width and dimension.
pub fn chain(s: &MacroScenario, d: SquareMetersPerSecond) -> Chain {
    let per_axis = displacement_rms(d, s.observation_time);
    let spatial = displacement_rms_in(d, s.observation_time, s.dimension);
    Chain {
        diffusion: d,
        displacement_per_axis: per_axis,
        displacement: spatial,
        theta_per_axis: fs_angle_of_displacement(per_axis, s.resolution_sigma),
        theta: fs_angle_of_displacement(spatial, s.resolution_sigma),
        theta_asymptote: fs_angle_asymptote(spatial, s.resolution_sigma),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreezingReport {
    pub scenario: MacroScenario,
    /// Stokes-Einstein with the scenario's viscosity.
    pub direct: Chain,
    /// Stokes-Einstein with the rounded viscosity.
    pub rounded_viscosity: Chain,
    /// Order-of-magnitude coefficient carried through the same steps.
    pub reference: Chain,
    /// `reference D / direct D`.
    pub discrepancy_ratio: f64,
    pub note: String,
    pub theta_min: Radians,
    pub frozen: bool,
    pub reference_frozen: bool,
}

/// Angle of one resolution length, the default resolvability threshold.
pub fn default_theta_min(s: &MacroScenario) -> Radians {
    fs_angle_of_displacement(s.wavelength, s.resolution_sigma)
}

pub fn freezing_report(s: &MacroScenario, theta_min: Option<Radians>) -> Result<FreezingReport> {
    s.validate()?;
    let theta_min = theta_min.unwrap_or_else(|| default_theta_min(s));
    if !(theta_min.0 > 0.0) {
        return Err(Error::InvalidParameter("theta_min must be positive".into()));
    }
    let direct = chain(s, stokes_einstein(s));
    let rounded_viscosity = chain(s, stokes_einstein(&s.with_viscosity(ROUNDED_VISCOSITY)));
    let reference = chain(s, REFERENCE_DIFFUSION);
    let discrepancy_ratio = REFERENCE_DIFFUSION.0 / direct.diffusion.0;
    let note = format!(
        "Stokes-Einstein gives D = {:.3e} m^2/s (eta = {:.1e}) and {:.3e} m^2/s (eta = {:.1e}); \
         the order-of-magnitude value D = {:.0e} m^2/s is {:.1}x larger than the direct value. \
         Both chains are reported; the verdict uses the direct one.",
        direct.diffusion.0,
        s.viscosity.0,
        rounded_viscosity.diffusion.0,
        ROUNDED_VISCOSITY.0,
        REFERENCE_DIFFUSION.0,
        discrepancy_ratio,
    );
    Ok(FreezingReport {
        scenario: *s,
        frozen: direct.theta.0 < theta_min.0,
        reference_frozen: reference.theta.0 < theta_min.0,
        direct,
        rounded_viscosity,
        reference,
        discrepancy_ratio,
        note,
        theta_min,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub radius: Meters,
    pub diffusion: SquareMetersPerSecond,
    pub displacement: Meters,
    pub theta: Radians,
    pub frozen: bool,
}

/// `n` radii spaced evenly in `log r` over `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && n >= 2) {
        return Err(Error::InvalidParameter("log sweep needs 0 < lo < hi and n >= 2".into()));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect())
}

/// Direct chain over a set of radii, other parameters fixed.
pub fn freezing_sweep(s: &MacroScenario, radii: &[f64], theta_min: Option<Radians>) -> Result<Vec<SweepRow>> {
    let theta_min = theta_min.unwrap_or_else(|| default_theta_min(s));
    radii
        .iter()
        .map(|&r| {
            let sr = s.with_radius(Meters(r));
            sr.validate()?;
            let c = chain(&sr, stokes_einstein(&sr));
            Ok(SweepRow {
                radius: Meters(r),
                diffusion: c.diffusion,
                displacement: c.displacement,
                theta: c.theta,
                frozen: c.theta.0 < theta_min.0,
            })
        })
        .collect()
}
