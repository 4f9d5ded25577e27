//! Physical constants (CODATA 2018) and conversions into engine units.
//!
//! Engine units: energy as angular frequency in rad/µs (E/ħ), time in µs,
//! length in Å, magnetic field in T. A gyromagnetic tensor is expressed as
//! energy per tesla, i.e. rad µs⁻¹ T⁻¹.

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Bohr magneton, J/T.
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
/// Nuclear magneton, J/T.
pub const NUCLEAR_MAGNETON: f64 = 5.050_783_746_1e-27;
/// µ0 / 4π, T m / A.
pub const MU0_OVER_4PI: f64 = 1.000_000_000_55e-7;
/// Proton gyromagnetic ratio, rad s⁻¹ T⁻¹.
pub const GAMMA_PROTON_SI: f64 = 2.675_221_874_4e8;
/// Deuteron gyromagnetic ratio, rad s⁻¹ T⁻¹.
pub const GAMMA_DEUTERON_SI: f64 = 4.106_627_7e7;
/// ¹³C gyromagnetic ratio, rad s⁻¹ T⁻¹.
pub const GAMMA_C13_SI: f64 = 6.728_284e7;
/// ¹⁹F gyromagnetic ratio, rad s⁻¹ T⁻¹.
pub const GAMMA_F19_SI: f64 = 2.518_148e8;

/// µ_B/ħ in rad µs⁻¹ T⁻¹.
pub const BOHR_MAGNETON_ENGINE: f64 = BOHR_MAGNETON / HBAR * 1e-6;
/// µ_N/ħ in rad µs⁻¹ T⁻¹.
pub const NUCLEAR_MAGNETON_ENGINE: f64 = NUCLEAR_MAGNETON / HBAR * 1e-6;
/// 1 meV in rad/µs.
pub const MEV: f64 = ELEMENTARY_CHARGE * 1e-3 / HBAR * 1e-6;
/// 1 µeV in rad/µs.
pub const UEV: f64 = MEV * 1e-3;
/// 1 MHz (cyclic) in rad/µs.
pub const MHZ: f64 = std::f64::consts::TAU;

/// Point-dipole prefactor: (µ0/4π)·ħ expressed so that
/// `DIPOLAR_PREFACTOR * g1 * g2 / r^3` is in rad/µs when `g1`, `g2` are in
/// rad µs⁻¹ T⁻¹ and `r` in Å.
pub const DIPOLAR_PREFACTOR: f64 = MU0_OVER_4PI * HBAR * 1e36;

/// Energy units accepted in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyUnit {
    Mev,
    Uev,
    Mhz,
    RadPerUs,
}

impl EnergyUnit {
    pub fn to_engine(self, value: f64) -> f64 {
        value * self.factor()
    }

    pub fn from_engine(self, value: f64) -> f64 {
        value / self.factor()
    }

    pub fn factor(self) -> f64 {
        match self {
            EnergyUnit::Mev => MEV,
            EnergyUnit::Uev => UEV,
            EnergyUnit::Mhz => MHZ,
            EnergyUnit::RadPerUs => 1.0,
        }
    }
}

/// Nuclear species known to the loader: (label, spin, γ in rad µs⁻¹ T⁻¹).
pub fn species(label: &str) -> Option<(f64, f64)> {
    let (s, gamma) = match label.to_ascii_lowercase().as_str() {
        "proton" | "h" | "1h" => (0.5, GAMMA_PROTON_SI),
        "deuteron" | "d" | "2h" => (1.0, GAMMA_DEUTERON_SI),
        "c13" | "13c" => (0.5, GAMMA_C13_SI),
        "f19" | "19f" => (0.5, GAMMA_F19_SI),
        _ => return None,
    };
    Some((s, gamma * 1e-6))
}
