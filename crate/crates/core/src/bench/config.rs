//! JSON experiment configuration.
//!
//! Energies of system tensors are given in `units.energy`; system
//! gyromagnetic factors in µ_B, explicit bath ones in µ_N; lengths in Å,
//! fields in T, times in µs.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bench::bath::{generate_bath, BathSpec};
use crate::cce::{PulseSequence, Schedule};
use crate::geom::{self, Tensor3, Vec3};
use crate::model::{exchange_tensor, zfs_tensor, InteractionTable, SpinModel, SpinSite};
use crate::units::{species, EnergyUnit, BOHR_MAGNETON_ENGINE, NUCLEAR_MAGNETON_ENGINE};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub units: Units,
    pub system: SystemConfig,
    pub bath: BathConfig,
    pub field: FieldConfig,
    #[serde(default)]
    pub states: StateSelection,
    #[serde(default)]
    pub pairs: PairSelection,
    #[serde(default)]
    pub pulses: PulseConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub cce: CceConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub energy: EnergyUnit,
}

impl Default for Units {
    fn default() -> Self {
        Units { energy: EnergyUnit::Mev }
    }
}

/// Scalar (isotropic) or full tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TensorInput {
    Scalar(f64),
    Tensor(Tensor3),
}

impl TensorInput {
    pub fn tensor(&self) -> Tensor3 {
        match self {
            TensorInput::Scalar(g) => geom::diag3(*g, *g, *g),
            TensorInput::Tensor(t) => *t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Zfs {
    pub d: f64,
    #[serde(default)]
    pub e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSiteConfig {
    pub position: Vec3,
    pub spin: f64,
    /// µ_B.
    pub gamma: TensorInput,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zfs: Option<Zfs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_tensor: Option<Tensor3>,
    #[serde(default)]
    pub label: String,
}

/// `exchange = [jx, jy, jz, kz]` or a raw `tensor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub sites: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exchange: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tensor: Option<Tensor3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub sites: Vec<SystemSiteConfig>,
    #[serde(default)]
    pub couplings: Vec<CouplingConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSiteConfig {
    pub position: Vec3,
    #[serde(default = "proton")]
    pub species: String,
    /// Overrides the species spin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spin: Option<f64>,
    /// µ_N; overrides the species value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<TensorInput>,
}

fn proton() -> String {
    "proton".into()
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<Vec<BathSiteConfig>>,
    /// Random bath; an empty exclusion list is filled with the system
    /// positions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<BathSpec>,
    /// Bath pairs farther apart than this (Å) get no intrinsic coupling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling_cutoff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_distance: Option<f64>,
    /// Generated baths only: number of seeds averaged, starting at the
    /// spec seed.
    #[serde(default = "one")]
    pub realizations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    /// T.
    pub magnitude: f64,
    pub direction: Vec3,
}

impl FieldConfig {
    pub fn along_z(magnitude: f64) -> Self {
        FieldConfig {
            magnitude,
            direction: [0.0, 0.0, 1.0],
        }
    }

    /// `ẑ` rotated by `angle` about `ŷ`.
    pub fn tilted_about_y(magnitude: f64, angle: f64) -> Self {
        FieldConfig {
            magnitude,
            direction: [angle.sin(), 0.0, angle.cos()],
        }
    }

    pub fn vector(&self) -> Result<Vec3> {
        let n = geom::norm(&self.direction);
        if !(n > 0.0) || !self.magnitude.is_finite() {
            return Err(Error::Config("field direction must be nonzero and magnitude finite".into()));
        }
        Ok(self.direction.map(|x| self.magnitude * x / n))
    }
}

/// Which system eigenstates to study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSelection {
    List(Vec<usize>),
    /// The `count` lowest states with `|⟨S^z_total⟩| < max_abs_sz` and no
    /// level closer than the SW gap floor.
    LowMagnetization { max_abs_sz: f64, count: usize },
}

impl Default for StateSelection {
    fn default() -> Self {
        StateSelection::List(Vec::new())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSelection {
    /// Every unordered pair of the selected states.
    #[default]
    All,
    List(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    pub k: u32,
    /// Explicit segment fractions (2k of them, or 1 for k = 0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fractions: Option<Vec<f64>>,
}

impl Default for PulseConfig {
    fn default() -> Self {
        PulseConfig { k: 1, fractions: None }
    }
}

impl PulseConfig {
    pub fn sequence(&self) -> Result<PulseSequence> {
        let p = match &self.fractions {
            None => PulseSequence {
                k: self.k,
                schedule: Schedule::Uniform,
            },
            Some(f) => PulseSequence::with_fractions(self.k, f.clone())?,
        };
        p.validate()?;
        Ok(p)
    }
}

fn default_points() -> usize {
    201
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t_max_us: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BathStateConfig {
    #[default]
    MaximallyMixed,
    /// Every bath spin fully polarised along one direction.
    Polarized(Vec3),
}

fn two() -> usize {
    2
}

fn two_u32() -> u32 {
    2
}

fn default_samples() -> usize {
    crate::metrics::DEFAULT_SAMPLE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CceConfig {
    #[serde(default = "two")]
    pub order: usize,
    /// Å; `None` keeps every pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_cutoff: Option<f64>,
    /// Conditional Hamiltonians at first or second SW order.
    #[serde(default = "two_u32")]
    pub sw_order: u32,
    /// In `units.energy`; default derived from the spectrum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_floor: Option<f64>,
    /// Drop near-degenerate partners from the second-order sums instead
    /// of aborting.
    #[serde(default)]
    pub allow_near_degenerate: bool,
    /// Re-run at 1.5× the pair cutoff and fail if any trace moves by more
    /// than 1%.
    #[serde(default)]
    pub convergence_check: bool,
    /// Singletons and pairs sampled for the commutator statistic; 0 skips it.
    #[serde(default = "default_samples")]
    pub commutator_samples: usize,
    #[serde(default)]
    pub bath_state: BathStateConfig,
}

impl Default for CceConfig {
    fn default() -> Self {
        CceConfig {
            order: 2,
            pair_cutoff: None,
            sw_order: 2,
            gap_floor: None,
            allow_near_degenerate: false,
            convergence_check: false,
            commutator_samples: default_samples(),
            bath_state: BathStateConfig::MaximallyMixed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.system.sites.is_empty() {
            return Err(Error::Config("system needs at least one site".into()));
        }
        match (&self.bath.sites, &self.bath.generate) {
            (Some(_), Some(_)) => return Err(Error::Config("bath: give either sites or generate, not both".into())),
            (None, None) => return Err(Error::Config("bath: sites or generate required".into())),
            (Some(s), None) if s.is_empty() => return Err(Error::Config("bath: empty site list".into())),
            (Some(_), None) if self.bath.realizations != 1 => {
                return Err(Error::Config("bath: realizations apply to generated baths only".into()))
            }
            _ => {}
        }
        if self.bath.realizations == 0 {
            return Err(Error::Config("bath: realizations must be at least 1".into()));
        }
        for c in &self.system.couplings {
            if c.exchange.is_some() == c.tensor.is_some() {
                return Err(Error::Config(format!(
                    "coupling {:?}: give exactly one of exchange or tensor",
                    c.sites
                )));
            }
        }
        if !(self.grid.t_max_us > 0.0 && self.grid.t_max_us.is_finite()) || self.grid.points < 2 {
            return Err(Error::Config("grid needs t_max_us > 0 and at least 2 points".into()));
        }
        if self.cce.order == 0 {
            return Err(Error::Config("cce.order must be at least 1".into()));
        }
        crate::effective::SwOrder::from_int(self.cce.sw_order)?;
        self.pulses.sequence()?;
        self.field.vector()?;
        Ok(())
    }

    pub fn energy(&self, value: f64) -> f64 {
        self.units.energy.to_engine(value)
    }

    pub fn system_sites(&self) -> Vec<SpinSite> {
        self.system
            .sites
            .iter()
            .map(|s| {
                let gamma = geom::scale3(&s.gamma.tensor(), BOHR_MAGNETON_ENGINE);
                let mut site = SpinSite::new(s.position, s.spin, gamma, s.label.clone());
                let mut t = s.self_tensor.map(|t| geom::scale3(&t, self.units.energy.factor()));
                if let Some(z) = s.zfs {
                    let zt = zfs_tensor(self.energy(z.d), self.energy(z.e));
                    t = Some(match t {
                        Some(x) => geom::add3(&x, &zt),
                        None => zt,
                    });
                }
                if let Some(t) = t {
                    site = site.with_self_tensor(t);
                }
                site
            })
            .collect()
    }

    pub fn system_couplings(&self) -> Result<InteractionTable> {
        let mut table = InteractionTable::new();
        for c in &self.system.couplings {
            let t = match (c.exchange, c.tensor) {
                (Some([jx, jy, jz, kz]), None) => {
                    exchange_tensor(self.energy(jx), self.energy(jy), self.energy(jz), self.energy(kz))
                }
                (None, Some(t)) => geom::scale3(&t, self.units.energy.factor()),
                _ => unreachable!("validated"),
            };
            table.insert(c.sites[0], c.sites[1], t)?;
        }
        Ok(table)
    }

    /// Spec of bath realisation `r`, exclusion filled in.
    pub fn bath_spec(&self, r: usize) -> Option<BathSpec> {
        self.bath.generate.as_ref().map(|g| {
            let mut spec = g.clone();
            spec.seed = g.seed.wrapping_add(r as u64);
            if spec.exclusion.is_empty() {
                spec.exclusion = self.system.sites.iter().map(|s| s.position).collect();
            }
            spec
        })
    }

    pub fn bath_sites(&self, r: usize) -> Result<Vec<SpinSite>> {
        if let Some(spec) = self.bath_spec(r) {
            return generate_bath(&spec);
        }
        let sites = self.bath.sites.as_ref().expect("validated");
        sites
            .iter()
            .map(|b| {
                let (s0, g0) = species(&b.species)
                    .ok_or_else(|| Error::Config(format!("unknown bath species '{}'", b.species)))?;
                let gamma = match &b.gamma {
                    Some(g) => geom::scale3(&g.tensor(), NUCLEAR_MAGNETON_ENGINE),
                    None => geom::diag3(g0, g0, g0),
                };
                Ok(SpinSite::new(b.position, b.spin.unwrap_or(s0), gamma, b.species.clone()))
            })
            .collect()
    }

    /// The model for bath realisation `r`.
    pub fn build_model(&self, r: usize) -> Result<SpinModel> {
        let mut builder = SpinModel::builder()
            .system_sites(self.system_sites())
            .system_couplings(self.system_couplings()?)
            .bath_sites(self.bath_sites(r)?)
            .field(self.field.vector()?)
            .bath_cutoff(self.bath.coupling_cutoff);
        if let Some(d) = self.bath.min_distance {
            builder = builder.min_distance(d);
        }
        builder.build()
    }

    /// The central system alone, without a bath.
    pub fn build_system_model(&self) -> Result<SpinModel> {
        SpinModel::builder()
            .system_sites(self.system_sites())
            .system_couplings(self.system_couplings()?)
            .field(self.field.vector()?)
            .build()
    }

    /// The same experiment with every inter-site system coupling removed.
    pub fn without_system_couplings(&self) -> Self {
        let mut c = self.clone();
        c.system.couplings.clear();
        c
    }
}
