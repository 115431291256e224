//! Physical constants, characteristic scales and the dimensionless groups used
//! by the solver.
//!
//! Energies are measured in units of `K_B T_L`, lengths in `length_scale`,
//! times in `time_scale` and potentials in `potential_scale`. Momentum is
//! written as `k = k_scale * sqrt(r) * (mu, ...)` so that the radial variable
//! `r` is the kinetic energy of a parabolic band. The azimuthal integral
//! (a factor of 2 pi) is folded into the density, Poisson and collision groups.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Electron rest mass [kg].
const ELECTRON_MASS: f64 = 9.109_383_7e-31;
/// Vacuum permittivity [F/m].
const VACUUM_PERMITTIVITY: f64 = 8.854_187_8e-12;

/// Silicon lattice data used to derive the default phonon couplings.
const SI_DENSITY: f64 = 2330.0; // kg/m^3
const SI_SOUND_VELOCITY: f64 = 9040.0; // m/s
const SI_ACOUSTIC_DEFORMATION_EV: f64 = 9.0; // eV
const SI_OPTICAL_DEFORMATION_EV_PER_M: f64 = 11.4e10; // eV/m

/// Raw physical inputs, SI units except where noted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalConstants {
    /// Reduced Planck constant [J s].
    pub hbar: f64,
    /// Boltzmann constant [J/K].
    pub k_boltzmann: f64,
    /// Elementary charge [C]; also the J/eV conversion.
    pub electron_charge: f64,
    /// Effective mass [kg].
    pub effective_mass: f64,
    /// Mean lattice temperature [K].
    pub lattice_temperature: f64,
    /// Optical phonon energy [eV].
    pub phonon_energy: f64,
    pub relative_permittivity: f64,
    /// Optical (inelastic) coupling K [J m^3 / s].
    pub optical_coupling: f64,
    /// Acoustic (elastic) coupling K0 [J m^3 / s].
    pub acoustic_coupling: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        let hbar = 1.0546e-34;
        let k_boltzmann = 1.3805e-23;
        let electron_charge = 1.60218e-19;
        let lattice_temperature = 300.0;
        let phonon_energy = 0.063;
        let (optical_coupling, acoustic_coupling) = silicon_couplings(
            hbar,
            k_boltzmann * lattice_temperature,
            phonon_energy * electron_charge,
            electron_charge,
        );
        PhysicalConstants {
            hbar,
            k_boltzmann,
            electron_charge,
            effective_mass: 0.32 * ELECTRON_MASS,
            lattice_temperature,
            phonon_energy,
            relative_permittivity: 11.7,
            optical_coupling,
            acoustic_coupling,
        }
    }
}

/// Non-polar optical and acoustic couplings of silicon:
/// `K = (D_t K)^2 / (8 pi^2 rho omega_p)` and
/// `K0 = K_B T_L Xi_d^2 / (4 pi^2 hbar rho v_s^2)`.
pub fn silicon_couplings(hbar: f64, kt_joule: f64, phonon_joule: f64, charge: f64) -> (f64, f64) {
    let omega = phonon_joule / hbar;
    let dtk = SI_OPTICAL_DEFORMATION_EV_PER_M * charge;
    let optical = dtk * dtk / (8.0 * PI * PI * SI_DENSITY * omega);
    let xi = SI_ACOUSTIC_DEFORMATION_EV * charge;
    let acoustic = kt_joule * xi * xi / (4.0 * PI * PI * hbar * SI_DENSITY * SI_SOUND_VELOCITY.powi(2));
    (optical, acoustic)
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("hbar", self.hbar),
            ("k_boltzmann", self.k_boltzmann),
            ("electron_charge", self.electron_charge),
            ("effective_mass", self.effective_mass),
            ("lattice_temperature", self.lattice_temperature),
            ("phonon_energy", self.phonon_energy),
            ("relative_permittivity", self.relative_permittivity),
            ("optical_coupling", self.optical_coupling),
            ("acoustic_coupling", self.acoustic_coupling),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!(
                    "physical constant `{name}` must be finite and positive, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// Optional overrides applied on top of the derived scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingOverrides {
    /// Divisor of the random interval: `z in [-beta/N, beta/N]`.
    pub n_divisor: f64,
    /// Energy cutoff in units of `K_B T_L`.
    pub r_max: f64,
    /// Length scale [m].
    pub length_scale: f64,
    /// Time scale [s].
    pub time_scale: f64,
    /// Potential scale [V].
    pub potential_scale: f64,
    /// Force coefficient; derived from the scales when absent.
    pub c_e: Option<f64>,
    /// Poisson coefficient; derived from the scales when absent.
    pub c_p: Option<f64>,
    /// Round `beta = 1/(K_B T_L)` to this many significant digits before
    /// forming `A`. The published constant chain carries 8 digits.
    pub beta_significant_digits: Option<u32>,
}

impl Default for ScalingOverrides {
    fn default() -> Self {
        ScalingOverrides {
            n_divisor: 30.0,
            r_max: 36.0,
            length_scale: 1.0e-6,
            time_scale: 1.0e-12,
            potential_scale: 1.0,
            c_e: None,
            c_p: None,
            beta_significant_digits: Some(8),
        }
    }
}

/// Every derived constant the solver uses. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingContext {
    pub constants: PhysicalConstants,
    /// `K_B T_L` [J].
    pub kt_joule: f64,
    /// `K_B T_L` [eV].
    pub kt_ev: f64,
    /// `beta = 1/(K_B T_L)` [1/J], after optional rounding.
    pub beta: f64,
    /// Phonon energy [J].
    pub phonon_joule: f64,
    /// `A = beta * hbar omega_p`.
    pub a: f64,
    pub n_divisor: f64,
    /// `B = A / N`.
    pub b: f64,
    /// Bose occupation `1/(e^A - 1)`.
    pub n_q: f64,
    /// `sqrt(2 m* K_B T_L) / hbar` [1/m].
    pub k_scale: f64,
    pub length_scale: f64,
    pub time_scale: f64,
    pub potential_scale: f64,
    /// x-advection coefficient: `a1 = c_v sqrt(r) mu`.
    pub c_v: f64,
    /// Force coefficient in `a4`, `a5`.
    pub c_e: f64,
    /// Poisson coefficient: `eps_r V'' = c_P (rho - N_D)`.
    pub c_p: f64,
    /// Dimensionless acoustic (elastic) collision group.
    pub rate_acoustic: f64,
    /// Dimensionless optical (inelastic) collision group.
    pub rate_optical: f64,
    /// Physical density [1/m^3] represented by one unit of dimensionless density.
    pub density_scale: f64,
    pub r_max: f64,
    pub beta_significant_digits: Option<u32>,
    #[serde(skip)]
    audit: Vec<String>,
}

/// Bose–Einstein phonon occupation `1/(e^a - 1)`.
pub fn phonon_occupation(a: f64) -> Result<f64> {
    if !(a > 0.0) || a.is_nan() {
        return Err(Error::Domain(format!(
            "phonon occupation needs a positive exponent, got {a}"
        )));
    }
    Ok(1.0 / a.exp_m1())
}

fn round_significant(x: f64, digits: u32) -> f64 {
    let digits = digits.max(1) as usize;
    format!("{:.*e}", digits - 1, x)
        .parse()
        .expect("formatted float parses")
}

/// Derive every dimensionless group from raw constants and overrides.
pub fn build_scaling(constants: PhysicalConstants, overrides: ScalingOverrides) -> Result<ScalingContext> {
    constants.validate()?;
    let o = overrides;
    for (name, v) in [
        ("n_divisor", o.n_divisor),
        ("r_max", o.r_max),
        ("length_scale", o.length_scale),
        ("time_scale", o.time_scale),
        ("potential_scale", o.potential_scale),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Config(format!(
                "scaling `{name}` must be finite and positive, got {v}"
            )));
        }
    }
    if o.n_divisor <= 1.0 {
        return Err(Error::Config(format!(
            "n_divisor must exceed 1 so the random temperature stays positive, got {}",
            o.n_divisor
        )));
    }
    for (name, v) in [("c_e", o.c_e), ("c_p", o.c_p)] {
        if let Some(v) = v {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "override `{name}` must be finite and positive, got {v}"
                )));
            }
        }
    }

    let c = constants;
    let mut audit = Vec::new();
    let mut log = |line: String| audit.push(line);

    let kt_joule = c.k_boltzmann * c.lattice_temperature;
    let kt_ev = kt_joule / c.electron_charge;
    log(format!(
        "kT          = {kt_joule:.10e} J = {kt_ev:.10} eV   (k_B * T_L)"
    ));
    let beta_exact = 1.0 / kt_joule;
    let beta = match o.beta_significant_digits {
        Some(d) => round_significant(beta_exact, d),
        None => beta_exact,
    };
    log(format!(
        "beta        = {beta:.10e} 1/J   (1/kT = {beta_exact:.10e}, rounded to {:?} digits)",
        o.beta_significant_digits
    ));
    let phonon_joule = c.phonon_energy * c.electron_charge;
    log(format!(
        "hbar w_p    = {phonon_joule:.10e} J   (phonon_energy * q)"
    ));
    let a = beta * phonon_joule;
    let b = a / o.n_divisor;
    let n_q = phonon_occupation(a)?;
    log(format!("A           = {a:.12}   (beta * hbar w_p)"));
    log(format!("N           = {}", o.n_divisor));
    log(format!("B           = {b:.12}   (A / N)"));
    log(format!("n_q         = {n_q:.12}   (1/(e^A - 1))"));
    if o.r_max <= a {
        return Err(Error::Config(format!(
            "r_max = {} must exceed the phonon shell A = {a}",
            o.r_max
        )));
    }

    let k_scale = (2.0 * c.effective_mass * kt_joule).sqrt() / c.hbar;
    log(format!("k_scale     = {k_scale:.10e} 1/m   (sqrt(2 m* kT)/hbar)"));
    let thermal_speed = (2.0 * kt_joule / c.effective_mass).sqrt();
    let c_v = o.time_scale / o.length_scale * thermal_speed;
    log(format!("c_v         = {c_v:.10}   (t*/l* sqrt(2 kT/m*))"));
    let field_scale = o.potential_scale / o.length_scale;
    let c_e_derived = o.time_scale * c.electron_charge * field_scale / (c.hbar * k_scale);
    let c_e = o.c_e.unwrap_or(c_e_derived);
    log(format!(
        "c_E         = {c_e:.10}   (t* q (V*/l*) / (hbar k_scale) = {c_e_derived:.10}{})",
        if o.c_e.is_some() { ", overridden" } else { "" }
    ));
    let density_scale = 2.0 * PI * k_scale.powi(3);
    log(format!(
        "rho scale   = {density_scale:.10e} 1/m^3   (2 pi k_scale^3)"
    ));
    let c_p_derived = c.electron_charge * density_scale * o.length_scale.powi(2)
        / (VACUUM_PERMITTIVITY * o.potential_scale);
    let c_p = o.c_p.unwrap_or(c_p_derived);
    log(format!(
        "c_P         = {c_p:.10e}   (q rho_scale l*^2 / (eps0 V*) = {c_p_derived:.10e}{})",
        if o.c_p.is_some() { ", overridden" } else { "" }
    ));
    let collision_group = o.time_scale * density_scale / kt_joule;
    let rate_acoustic = collision_group * c.acoustic_coupling;
    let rate_optical = collision_group * c.optical_coupling;
    log(format!(
        "rate_ac     = {rate_acoustic:.10}   (t* K0 2 pi k_scale^3 / kT, K0 = {:.6e})",
        c.acoustic_coupling
    ));
    log(format!(
        "rate_op     = {rate_optical:.10}   (t* K 2 pi k_scale^3 / kT, K = {:.6e})",
        c.optical_coupling
    ));
    log(format!("r_max       = {}", o.r_max));
    log(format!(
        "scales      : l* = {:e} m, t* = {:e} s, V* = {} V",
        o.length_scale, o.time_scale, o.potential_scale
    ));

    Ok(ScalingContext {
        constants: c,
        kt_joule,
        kt_ev,
        beta,
        phonon_joule,
        a,
        n_divisor: o.n_divisor,
        b,
        n_q,
        k_scale,
        length_scale: o.length_scale,
        time_scale: o.time_scale,
        potential_scale: o.potential_scale,
        c_v,
        c_e,
        c_p,
        rate_acoustic,
        rate_optical,
        density_scale,
        r_max: o.r_max,
        beta_significant_digits: o.beta_significant_digits,
        audit,
    })
}

impl ScalingContext {
    /// Defaults throughout.
    pub fn paper_defaults() -> ScalingContext {
        build_scaling(PhysicalConstants::default(), ScalingOverrides::default())
            .expect("default constants are valid")
    }

    /// Copy with a different random-interval divisor.
    pub fn with_n_divisor(&self, n: f64) -> Result<ScalingContext> {
        let mut o = self.overrides();
        o.n_divisor = n;
        build_scaling(self.constants, o)
    }

    pub fn overrides(&self) -> ScalingOverrides {
        ScalingOverrides {
            n_divisor: self.n_divisor,
            r_max: self.r_max,
            length_scale: self.length_scale,
            time_scale: self.time_scale,
            potential_scale: self.potential_scale,
            c_e: Some(self.c_e),
            c_p: Some(self.c_p),
            beta_significant_digits: self.beta_significant_digits,
        }
    }

    /// `A` recomputed from eV quantities rather than joules.
    pub fn a_from_ev(&self) -> f64 {
        // beta in 1/eV times the phonon energy in eV
        self.constants.phonon_energy * (self.beta * self.constants.electron_charge)
    }

    /// Convert a doping density [1/m^3] to solver units.
    pub fn doping_to_dimensionless(&self, per_m3: f64) -> f64 {
        per_m3 / self.density_scale
    }

    /// Convert a bias [V] to solver units.
    pub fn bias_to_dimensionless(&self, volts: f64) -> f64 {
        volts / self.potential_scale
    }

    pub fn audit_lines(&self) -> &[String] {
        &self.audit
    }

    /// Human-readable derivation record.
    pub fn audit_text(&self) -> String {
        let mut s = String::from("# derived scaling\n");
        for line in &self.audit {
            let _ = writeln!(s, "{line}");
        }
        s
    }
}
