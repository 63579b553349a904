//! Unit convention used by the bundled configurations: lengths in micrometers,
//! times in milliseconds, and `hbar = 1`.
//!
//! The solvers themselves are unit-agnostic; only the example set-ups and the
//! CLI defaults rely on these constants.

/// Reduced Planck constant, CODATA 2018 (J s), six significant digits.
pub const HBAR_SI: f64 = 1.05457e-34;
/// Atomic mass constant, CODATA 2018 (kg), six significant digits.
pub const ATOMIC_MASS_SI: f64 = 1.66054e-27;

/// Constants of the micrometer / millisecond / `hbar = 1` system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitSystem {
    /// Meters per length unit.
    pub length_unit: f64,
    /// Seconds per time unit.
    pub time_unit: f64,
    /// Action unit; exactly one.
    pub hbar: f64,
    /// Nucleon mass in `hbar * ms / um^2`.
    pub nucleon_mass: f64,
}

impl Default for UnitSystem {
    fn default() -> Self {
        Self {
            length_unit: 1e-6,
            time_unit: 1e-3,
            hbar: 1.0,
            nucleon_mass: nucleon_mass_in_units(),
        }
    }
}

impl UnitSystem {
    /// Mass of an atom with the given mass number.
    pub fn atom_mass(&self, mass_number: f64) -> f64 {
        mass_number * self.nucleon_mass
    }
}

/// Nucleon mass `M L^2 / (hbar T)` with `L = 1 um` and `T = 1 ms`.
pub fn nucleon_mass_in_units() -> f64 {
    ATOMIC_MASS_SI * 1e-6 * 1e-6 / (HBAR_SI * 1e-3)
}

/// Mass of a rubidium-87 atom.
pub fn rb87_mass() -> f64 {
    87.0 * nucleon_mass_in_units()
}
