//! Laboratory parameters of the ring-BEC cavity and the model constants
//! derived from them.
//!
//! Everything is SI: masses in kg, lengths in m, angular frequencies and
//! rates in rad/s, powers in W.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HBAR: f64 = 1.054_571_817e-34;
pub const AMU: f64 = 1.660_539_066_60e-27;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Sodium D-line wavelength, used for the default cavity frequency.
pub const SODIUM_D_WAVELENGTH: f64 = 589e-9;

/// Threshold used for the "much greater than" constraints.
pub const STRONG_INEQUALITY: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter `{name}` must be strictly positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("oam_index must be at least 1, got {0}")]
    OamIndex(i64),
    #[error("winding_number must be non-negative, got {0}")]
    WindingNumber(i64),
    #[error("atom_count must be at least 1")]
    AtomCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalParams {
    pub atom_mass: f64,
    pub scattering_length: f64,
    pub ring_radius: f64,
    pub trap_freq_rho: f64,
    pub trap_freq_z: f64,
    pub atom_count: u64,
    pub winding_number: i64,
    pub oam_index: i64,
    pub atom_photon_coupling: f64,
    pub atomic_detuning: f64,
    pub cavity_decay: f64,
    pub mechanical_decay: f64,
    pub control_power: f64,
    pub signal_power: f64,
    pub optical_frequency: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self::reference()
    }
}

impl PhysicalParams {
    /// Sodium ring condensate at `G~/gamma0 ~ 4`: `L_p = 20`, `l = 130`,
    /// `N = 2e4`.
    pub fn reference() -> Self {
        let two_pi = 2.0 * PI;
        let gamma0 = two_pi * 1e3;
        Self {
            atom_mass: 23.0 * AMU,
            scattering_length: 0.1e-9,
            ring_radius: 10e-6,
            trap_freq_rho: two_pi * 840.0,
            trap_freq_z: two_pi * 840.0,
            atom_count: 20_000,
            winding_number: 20,
            oam_index: 130,
            atom_photon_coupling: two_pi * 0.36e6,
            atomic_detuning: 300.0 * two_pi * 9.8e6,
            cavity_decay: gamma0,
            mechanical_decay: 1.7e-5 * gamma0,
            // 8.6e-7 mW and 8.6e-9 mW
            control_power: 8.6e-10,
            signal_power: 8.6e-12,
            optical_frequency: two_pi * SPEED_OF_LIGHT / SODIUM_D_WAVELENGTH,
        }
    }

    /// The `G~/gamma0 ~ 8` set: `L_p = 25`, `N = 8e4`, control 1.45e-6 mW.
    pub fn strong_coupling() -> Self {
        Self {
            winding_number: 25,
            atom_count: 80_000,
            control_power: 1.45e-9,
            ..Self::reference()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("atom_mass", self.atom_mass),
            ("scattering_length", self.scattering_length),
            ("ring_radius", self.ring_radius),
            ("trap_freq_rho", self.trap_freq_rho),
            ("trap_freq_z", self.trap_freq_z),
            ("atom_photon_coupling", self.atom_photon_coupling),
            ("atomic_detuning", self.atomic_detuning),
            ("cavity_decay", self.cavity_decay),
            ("mechanical_decay", self.mechanical_decay),
            ("control_power", self.control_power),
            ("signal_power", self.signal_power),
            ("optical_frequency", self.optical_frequency),
        ];
        for (name, value) in positive {
            // also rejects NaN
            if !(value > 0.0) || !value.is_finite() {
                return Err(ModelError::NonPositive { name, value });
            }
        }
        if self.atom_count == 0 {
            return Err(ModelError::AtomCount);
        }
        if self.oam_index < 1 {
            return Err(ModelError::OamIndex(self.oam_index));
        }
        if self.winding_number < 0 {
            return Err(ModelError::WindingNumber(self.winding_number));
        }
        Ok(())
    }

    pub fn moment_of_inertia(&self) -> f64 {
        self.atom_mass * self.ring_radius * self.ring_radius
    }

    /// Rotational frequency `hbar w^2 / 2I` of winding number `w`.
    pub fn rotational_frequency(&self, winding: i64) -> f64 {
        let w = winding as f64;
        HBAR * w * w / (2.0 * self.moment_of_inertia())
    }

    /// Two-body coupling `g = 2 hbar w_rho a / R` (J).
    pub fn two_body_coupling(&self) -> f64 {
        2.0 * HBAR * self.trap_freq_rho * self.scattering_length / self.ring_radius
    }

    /// `g~ = g / (4 pi hbar)` in rad/s.
    pub fn interaction_strength(&self) -> f64 {
        self.two_body_coupling() / (4.0 * PI * HBAR)
    }

    /// Upper bound on the atom number for quasi-1D ring dynamics.
    pub fn quasi_1d_atom_limit(&self) -> f64 {
        4.0 * self.ring_radius / (3.0 * self.scattering_length)
            * (PI * self.trap_freq_rho / self.trap_freq_z).sqrt()
    }

    /// Cavity pump rate `sqrt(P gamma0 / hbar w0)` for input power `power`.
    pub fn pump_rate(&self, power: f64) -> f64 {
        (power * self.cavity_decay / (HBAR * self.optical_frequency)).sqrt()
    }
}

/// Mean-field detuning `4 g~ N` of the side modes.
pub fn interaction_shift(params: &PhysicalParams) -> f64 {
    4.0 * params.interaction_strength() * params.atom_count as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub moment_of_inertia: f64,
    pub omega_p: f64,
    pub omega_c: f64,
    pub omega_d: f64,
    pub lattice_depth: f64,
    pub bare_coupling: f64,
    pub pump_rate_control: f64,
    pub pump_rate_signal: f64,
    pub steady_amplitude: f64,
    pub boosted_coupling: f64,
    pub interaction_strength: f64,
    pub interaction_shift: f64,
    pub swap_time: f64,
    /// Control power consistent with `boosted_coupling` (W). Equals the
    /// input power unless the coupling was overridden.
    pub implied_control_power: f64,
}

/// Steady intracavity amplitude `|eps / (gamma0/2 - i Delta)|` with the
/// control detuned to the lower sideband, `Delta = -omega_c`.
fn steady_amplitude(pump_rate: f64, cavity_decay: f64, omega_c: f64) -> f64 {
    let detuning = -omega_c;
    (C64::new(pump_rate, 0.0) / C64::new(cavity_decay / 2.0, -detuning)).norm()
}

pub fn derive(params: &PhysicalParams) -> Result<DerivedParams, ModelError> {
    params.validate()?;
    let inertia = params.moment_of_inertia();
    let lp = params.winding_number;
    let l2 = 2 * params.oam_index;
    let omega_c = params.rotational_frequency(lp + l2);
    let omega_d = params.rotational_frequency(lp - l2);
    let lattice_depth = params.atom_photon_coupling.powi(2) / params.atomic_detuning;
    let bare_coupling = lattice_depth * (params.atom_count as f64 / 8.0).sqrt();
    let pump_rate_control = params.pump_rate(params.control_power);
    let alpha = steady_amplitude(pump_rate_control, params.cavity_decay, omega_c);
    let boosted = bare_coupling * alpha / 2f64.sqrt();
    Ok(DerivedParams {
        moment_of_inertia: inertia,
        omega_p: params.rotational_frequency(lp),
        omega_c,
        omega_d,
        lattice_depth,
        bare_coupling,
        pump_rate_control,
        pump_rate_signal: params.pump_rate(params.signal_power),
        steady_amplitude: alpha,
        boosted_coupling: boosted,
        interaction_strength: params.interaction_strength(),
        interaction_shift: interaction_shift(params),
        swap_time: PI / (2.0 * boosted),
        implied_control_power: params.control_power,
    })
}

impl DerivedParams {
    /// Re-anchor on a prescribed boosted coupling (rad/s). The steady
    /// amplitude, pump rate and implied power follow from it.
    pub fn with_boosted_coupling(
        &self,
        params: &PhysicalParams,
        boosted: f64,
    ) -> Result<DerivedParams, ModelError> {
        if !(boosted > 0.0) {
            return Err(ModelError::NonPositive {
                name: "boosted_coupling",
                value: boosted,
            });
        }
        let alpha = 2f64.sqrt() * boosted / self.bare_coupling;
        let pump = alpha * C64::new(params.cavity_decay / 2.0, self.omega_c).norm();
        Ok(DerivedParams {
            steady_amplitude: alpha,
            boosted_coupling: boosted,
            pump_rate_control: pump,
            swap_time: PI / (2.0 * boosted),
            implied_control_power: pump * pump * HBAR * params.optical_frequency
                / params.cavity_decay,
            ..self.clone()
        })
    }
}

/// Control power (W) that produces the boosted coupling `boosted`.
pub fn required_control_power(params: &PhysicalParams, boosted: f64) -> Result<f64, ModelError> {
    Ok(derive(params)?
        .with_boosted_coupling(params, boosted)?
        .implied_control_power)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub ok: bool,
    /// Dimensionless; the check passes when `margin > threshold`.
    pub margin: f64,
    pub threshold: f64,
}

impl ConstraintCheck {
    fn new(margin: f64, threshold: f64) -> Self {
        Self {
            ok: margin > threshold,
            margin,
            threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    /// `N_max / N`.
    pub quasi_1d: ConstraintCheck,
    /// `min(w_c, w_d) / 4 g~ N`.
    pub bogoliubov: ConstraintCheck,
    /// Chemical potential over lattice depth `U0 |alpha|^2`.
    pub lattice_weak: ConstraintCheck,
    /// `min(w_c, w_d) / gamma0`.
    pub sideband_resolved: ConstraintCheck,
    /// `|w_c - w_d| / gamma0`.
    pub mode_separation: ConstraintCheck,
}

impl ConstraintReport {
    pub fn all_ok(&self) -> bool {
        self.checks().iter().all(|(_, c)| c.ok)
    }

    pub fn checks(&self) -> [(&'static str, ConstraintCheck); 5] {
        [
            ("quasi_1d", self.quasi_1d),
            ("bogoliubov", self.bogoliubov),
            ("lattice_weak", self.lattice_weak),
            ("sideband_resolved", self.sideband_resolved),
            ("mode_separation", self.mode_separation),
        ]
    }

    pub fn failed(&self) -> Vec<&'static str> {
        self.checks()
            .iter()
            .filter(|(_, c)| !c.ok)
            .map(|(n, _)| *n)
            .collect()
    }
}

/// Evaluates every parameter-space constraint. Violations are reported, never
/// raised.
pub fn check_constraints(params: &PhysicalParams, derived: &DerivedParams) -> ConstraintReport {
    let n = params.atom_count as f64;
    let shift = derived.interaction_shift;
    let slow = derived.omega_c.min(derived.omega_d);
    let gamma0 = params.cavity_decay;

    let quasi_1d = ConstraintCheck::new(params.quasi_1d_atom_limit() / n, 1.0);
    let bogoliubov = ConstraintCheck::new(
        if shift > 0.0 { slow / shift } else { f64::INFINITY },
        STRONG_INEQUALITY,
    );
    let lattice = derived.lattice_depth * derived.steady_amplitude.powi(2);
    let chemical = derived.omega_p + 2.0 * derived.interaction_strength * n;
    // "weaker than": ratio above one
    let lattice_weak = ConstraintCheck::new(chemical / lattice, 1.0);
    let sideband_resolved = ConstraintCheck::new(slow / gamma0, STRONG_INEQUALITY);
    let mode_separation = ConstraintCheck::new(
        (derived.omega_c - derived.omega_d).abs() / gamma0,
        STRONG_INEQUALITY,
    );
    ConstraintReport {
        quasi_1d,
        bogoliubov,
        lattice_weak,
        sideband_resolved,
        mode_separation,
    }
}
