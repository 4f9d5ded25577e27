//! Built-in experiments.

use std::f64::consts::{PI, TAU};

use crate::bench::bath::BathSpec;
use crate::bench::config::*;
use crate::geom::Vec3;
use crate::units::EnergyUnit;
use crate::{Error, Result};

pub const SCENARIOS: [&str; 4] = ["giant_spin", "five_spin", "qudit6", "qudit6_uncoupled"];

/// Bath used by every scenario unless overridden.
pub const DEFAULT_BATH_SIZE: usize = 1000;
pub const DEFAULT_BATH_RADIUS: f64 = 20.0;
pub const DEFAULT_MIN_DIST: f64 = 3.0;
pub const DEFAULT_SEED: u64 = 1;

pub fn scenario(name: &str) -> Result<ExperimentConfig> {
    match name {
        "giant_spin" => Ok(giant_spin()),
        "five_spin" => Ok(five_spin()),
        "qudit6" => Ok(qudit6()),
        "qudit6_uncoupled" => Ok(qudit6_uncoupled()),
        _ => Err(Error::Config(format!(
            "unknown scenario '{name}' (known: {})",
            SCENARIOS.join(", ")
        ))),
    }
}

fn default_bath() -> BathConfig {
    BathConfig {
        sites: None,
        generate: Some(BathSpec::new(DEFAULT_BATH_SIZE, DEFAULT_BATH_RADIUS, DEFAULT_MIN_DIST, DEFAULT_SEED)),
        coupling_cutoff: None,
        min_distance: None,
        realizations: 1,
    }
}

fn site(position: Vec3, gamma: f64, label: &str) -> SystemSiteConfig {
    SystemSiteConfig {
        position,
        spin: 0.5,
        gamma: TensorInput::Scalar(gamma),
        zfs: None,
        self_tensor: None,
        label: label.into(),
    }
}

/// Isotropic exchange `j` with a z Dzyaloshinskii–Moriya term of `j/10`.
fn afm(i: usize, l: usize, j: f64) -> CouplingConfig {
    CouplingConfig {
        sites: [i, l],
        exchange: Some([j, j, j, j / 10.0]),
        tensor: None,
    }
}

fn base(name: &str, energy: EnergyUnit, system: SystemConfig, field: FieldConfig, t_max_us: f64) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        name: name.into(),
        units: Units { energy },
        system,
        bath: default_bath(),
        field,
        states: StateSelection::default(),
        pairs: PairSelection::All,
        pulses: PulseConfig::default(),
        grid: GridConfig { t_max_us, points: 201 },
        cce: CceConfig::default(),
        output: OutputConfig::default(),
    }
}

/// S = 10 with axial and rhombic anisotropy in a small axial field.
pub fn giant_spin() -> ExperimentConfig {
    let d = 25.0;
    let system = SystemConfig {
        sites: vec![SystemSiteConfig {
            position: [0.0; 3],
            spin: 10.0,
            gamma: TensorInput::Scalar(2.0),
            zfs: Some(Zfs { d, e: 0.02 * d }),
            self_tensor: None,
            label: "giant".into(),
        }],
        couplings: Vec::new(),
    };
    let mut cfg = base("giant_spin", EnergyUnit::Uev, system, FieldConfig::along_z(0.07), 0.3);
    cfg.states = StateSelection::List((0..7).collect());
    cfg
}

/// Triangle of radius 3 Å in the xy plane with the first vertex on +x,
/// plus two apices on the z axis.
pub fn bipyramid() -> Vec<Vec3> {
    let r = 3.0;
    let mut p: Vec<Vec3> = (0..3)
        .map(|k| {
            let a = TAU * k as f64 / 3.0;
            [r * a.cos(), r * a.sin(), 0.0]
        })
        .collect();
    p.push([0.0, 0.0, r]);
    p.push([0.0, 0.0, -r]);
    p
}

/// Five spins 1/2: antiferromagnetic triangle (0.3 meV) coupled to two
/// apices (0.1 meV); the apices do not couple to each other.
pub fn five_spin() -> ExperimentConfig {
    let sites = bipyramid()
        .into_iter()
        .enumerate()
        .map(|(k, p)| site(p, 2.2, &format!("s{}", k + 1)))
        .collect();
    let mut couplings = vec![afm(0, 1, 0.3), afm(1, 2, 0.3), afm(2, 0, 0.3)];
    for m in [3, 4] {
        for t in 0..3 {
            couplings.push(afm(t, m, 0.1));
        }
    }
    let system = SystemConfig { sites, couplings };
    let mut cfg = base("five_spin", EnergyUnit::Mev, system, FieldConfig::along_z(1.0), 150.0);
    cfg.states = StateSelection::List(vec![1, 3, 9, 14, 21, 26]);
    cfg
}

/// Five-spin geometry plus a sixth spin at the centre, with slightly
/// distorted couplings and g factors and a tilted field.
pub fn qudit6() -> ExperimentConfig {
    let mut pos = bipyramid();
    pos.push([0.0; 3]);
    let gammas = [2.210, 2.200, 2.180, 2.190, 2.205, 2.195];
    let sites = pos
        .into_iter()
        .zip(gammas)
        .enumerate()
        .map(|(k, (p, g))| site(p, g, &format!("s{}", k + 1)))
        .collect();
    let j12 = 0.5;
    let j14 = 0.1;
    let j16 = 1.1 * j12;
    let j46 = 1.05 * j14;
    // Site indices are zero-based; the triangle bonds run cyclically.
    let couplings = vec![
        afm(0, 1, j12),
        afm(1, 2, 1.01 * j12),
        afm(2, 0, 1.08 * j12),
        afm(0, 3, j14),
        afm(1, 3, 0.95 * j14),
        afm(2, 3, 1.03 * j14),
        afm(0, 4, 1.10 * j14),
        afm(1, 4, 0.89 * j14),
        afm(2, 4, 0.98 * j14),
        afm(3, 4, 0.1 * j12),
        afm(0, 5, j16),
        afm(1, 5, 1.05 * j16),
        afm(2, 5, 0.93 * j16),
        afm(3, 5, j46),
        afm(4, 5, 0.92 * j46),
    ];
    let system = SystemConfig { sites, couplings };
    let mut cfg = base(
        "qudit6",
        EnergyUnit::Mev,
        system,
        FieldConfig::tilted_about_y(1.0, PI / 18.0),
        150.0,
    );
    cfg.states = StateSelection::LowMagnetization {
        max_abs_sz: 0.02,
        count: 7,
    };
    cfg
}

/// [`qudit6`] with every system coupling removed; one reference pair.
pub fn qudit6_uncoupled() -> ExperimentConfig {
    let mut cfg = qudit6().without_system_couplings();
    cfg.name = "qudit6_uncoupled".into();
    cfg.states = StateSelection::LowMagnetization {
        max_abs_sz: 0.02,
        count: 2,
    };
    cfg.grid.t_max_us = 100.0;
    cfg
}

/// Replace the generated bath by one of `n` spins at the same density.
pub fn with_bath_size(mut cfg: ExperimentConfig, n: usize) -> ExperimentConfig {
    if let Some(g) = cfg.bath.generate.as_mut() {
        g.radius *= (n as f64 / g.n as f64).cbrt();
        g.n = n;
    }
    cfg
}
