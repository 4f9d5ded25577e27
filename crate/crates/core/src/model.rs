//! Central system + nuclear bath: sites, interaction tensors and the
//! assembly of the system, bath and system-bath Hamiltonian pieces.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geom::{self, Tensor3, Vec3};
use crate::spinops::{embed, hermitian_residual, scale, spin_matrices_for, Spin};
use crate::units::DIPOLAR_PREFACTOR;
use crate::{CMat, Error, Result, C64};

/// Default minimum distance between a bath spin and any other spin, Å.
pub const DEFAULT_MIN_DISTANCE: f64 = 3.0;

/// Relative tolerance for the assembled system Hamiltonian to count as
/// Hermitian.
const ASSEMBLY_HERMITIAN_TOL: f64 = 1e-12;

/// A single spin of the central system or of the bath.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinSite {
    /// Position in Å.
    pub position: Vec3,
    pub spin: f64,
    /// Gyromagnetic tensor in rad µs⁻¹ T⁻¹; the Zeeman term is `B·gamma·S`.
    pub gamma: Tensor3,
    /// Zero-field-splitting (system) or quadrupole (bath) tensor, rad/µs.
    pub self_tensor: Option<Tensor3>,
    pub label: String,
}

impl SpinSite {
    pub fn new(position: Vec3, spin: f64, gamma: Tensor3, label: impl Into<String>) -> Self {
        SpinSite {
            position,
            spin,
            gamma,
            self_tensor: None,
            label: label.into(),
        }
    }

    pub fn isotropic(position: Vec3, spin: f64, gamma: f64, label: impl Into<String>) -> Self {
        Self::new(position, spin, geom::diag3(gamma, gamma, gamma), label)
    }

    pub fn with_self_tensor(mut self, tensor: Tensor3) -> Self {
        self.self_tensor = Some(tensor);
        self
    }

    pub fn spin(&self) -> Result<Spin> {
        Spin::new(self.spin)
    }

    pub fn dim(&self) -> usize {
        Spin::new(self.spin).map(|s| s.dim()).unwrap_or(0)
    }

    fn validate(&self, what: &str, index: usize) -> Result<()> {
        Spin::new(self.spin)?;
        if self.position.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel(format!("{what} site {index} has a non-finite position")));
        }
        if let Some(t) = &self.self_tensor {
            let scale = geom::frobenius3(t).max(1.0);
            if !geom::is_symmetric3(t, 1e-12 * scale) {
                return Err(Error::InvalidModel(format!(
                    "{what} site {index}: self-interaction tensor is not symmetric"
                )));
            }
        }
        Ok(())
    }
}

/// `diag(−D/3 + E, −D/3 − E, 2D/3)`.
pub fn zfs_tensor(d: f64, e: f64) -> Tensor3 {
    geom::diag3(-d / 3.0 + e, -d / 3.0 - e, 2.0 * d / 3.0)
}

/// Exchange tensor with an antisymmetric (Dzyaloshinskii–Moriya) z part:
/// `[[jx, kz, 0], [−kz, jy, 0], [0, 0, jz]]`.
pub fn exchange_tensor(jx: f64, jy: f64, jz: f64, kz: f64) -> Tensor3 {
    [[jx, kz, 0.0], [-kz, jy, 0.0], [0.0, 0.0, jz]]
}

/// Pairwise tensors between sites of one list, keyed by `(i, j)` with
/// `i < j`. The stored tensor multiplies `S_i` on the left and `S_j` on the
/// right.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InteractionTable {
    entries: BTreeMap<(usize, usize), Tensor3>,
}

impl InteractionTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert the tensor `t` coupling `S_i · t · S_j`. Pairs given with
    /// `i > j` are stored transposed; repeated pairs accumulate.
    pub fn insert(&mut self, i: usize, j: usize, t: Tensor3) -> Result<()> {
        if i == j {
            return Err(Error::InvalidModel(format!(
                "self pair ({i}, {i}) belongs in the site self tensor"
            )));
        }
        let (key, t) = if i < j {
            ((i, j), t)
        } else {
            ((j, i), geom::transpose3(&t))
        };
        let slot = self.entries.entry(key).or_insert(geom::ZERO3);
        *slot = geom::add3(slot, &t);
        Ok(())
    }

    /// Tensor oriented with `S_i` on the left.
    pub fn get(&self, i: usize, j: usize) -> Option<Tensor3> {
        if i < j {
            self.entries.get(&(i, j)).copied()
        } else {
            self.entries.get(&(j, i)).map(geom::transpose3)
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &Tensor3)> + '_ {
        self.entries.iter().map(|(&(i, j), t)| (i, j, t))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        InteractionTable {
            entries: self.entries.iter().map(|(k, t)| (*k, geom::scale3(t, factor))).collect(),
        }
    }

    fn validate(&self, n: usize, what: &'static str) -> Result<()> {
        for (i, j, _) in self.iter() {
            if j >= n {
                return Err(Error::IndexOutOfRange { what, index: j, len: n });
            }
            debug_assert!(i < j);
        }
        Ok(())
    }
}

/// Dense system × bath table of `A^{ij}` tensors (`S_i · A · I_j`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemBathTable {
    n_system: usize,
    n_bath: usize,
    tensors: Vec<Tensor3>,
}

impl SystemBathTable {
    pub fn zeros(n_system: usize, n_bath: usize) -> Self {
        SystemBathTable {
            n_system,
            n_bath,
            tensors: vec![geom::ZERO3; n_system * n_bath],
        }
    }

    pub fn get(&self, system: usize, bath: usize) -> &Tensor3 {
        &self.tensors[system * self.n_bath + bath]
    }

    pub fn set(&mut self, system: usize, bath: usize, t: Tensor3) {
        self.tensors[system * self.n_bath + bath] = t;
    }

    pub fn n_system(&self) -> usize {
        self.n_system
    }

    pub fn n_bath(&self) -> usize {
        self.n_bath
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &Tensor3)> + '_ {
        self.tensors
            .iter()
            .enumerate()
            .map(move |(k, t)| (k / self.n_bath.max(1), k % self.n_bath.max(1), t))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SystemBathTable {
            tensors: self.tensors.iter().map(|t| geom::scale3(t, factor)).collect(),
            ..*self
        }
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.tensors.iter().flatten().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Whether a coupling table was filled by the point-dipole formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingSource {
    Auto,
    Explicit,
}

/// Point-dipole interaction tensor between spins at `pos_i` and `pos_j`
/// with gyromagnetic tensors `g_i`, `g_j` (rad µs⁻¹ T⁻¹), in rad/µs.
pub fn dipolar_tensor(pos_i: &Vec3, pos_j: &Vec3, g_i: &Tensor3, g_j: &Tensor3) -> Result<Tensor3> {
    let r = geom::sub(pos_j, pos_i);
    let dist = geom::norm(&r);
    if !(dist > 1e-12) {
        return Err(Error::Singularity(format!(
            "positions {pos_i:?} and {pos_j:?} coincide"
        )));
    }
    let prefactor = DIPOLAR_PREFACTOR / dist.powi(3);
    // Moments are mu^a = sum_mu g[a][mu] S^mu, so contractions run over the
    // first tensor index.
    let gi_r = geom::vec_mat(&r, g_i);
    let gj_r = geom::vec_mat(&r, g_j);
    let gi_gj = geom::matmul3(&geom::transpose3(g_i), g_j);
    let inv_r2 = 1.0 / (dist * dist);
    let mut out = geom::ZERO3;
    for mu in 0..3 {
        for nu in 0..3 {
            out[mu][nu] = prefactor * (gi_gj[mu][nu] - 3.0 * gi_r[mu] * gj_r[nu] * inv_r2);
        }
    }
    Ok(out)
}

/// Central system, bath, all pairwise tensors and the external field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinModel {
    pub system_sites: Vec<SpinSite>,
    pub bath_sites: Vec<SpinSite>,
    /// `D^{ij}` between system sites.
    pub system_couplings: InteractionTable,
    /// `J^{ij}` between bath sites.
    pub bath_couplings: InteractionTable,
    /// `A^{ij}` from system site i to bath site j.
    pub system_bath: SystemBathTable,
    /// External field, T.
    pub field: Vec3,
    pub min_distance: f64,
    pub bath_source: CouplingSource,
    pub system_bath_source: CouplingSource,
    /// Distance cutoff used when the bath table was filled automatically.
    pub bath_cutoff: Option<f64>,
}

/// Builder for [`SpinModel`]; auto-fills dipolar tables unless explicit
/// ones are supplied.
#[derive(Debug, Clone, Default)]
pub struct ModelBuilder {
    system_sites: Vec<SpinSite>,
    bath_sites: Vec<SpinSite>,
    system_couplings: InteractionTable,
    bath_couplings: Option<InteractionTable>,
    system_bath: Option<SystemBathTable>,
    field: Vec3,
    min_distance: Option<f64>,
    bath_cutoff: Option<f64>,
}

impl ModelBuilder {
    pub fn system_site(mut self, site: SpinSite) -> Self {
        self.system_sites.push(site);
        self
    }

    pub fn system_sites(mut self, sites: impl IntoIterator<Item = SpinSite>) -> Self {
        self.system_sites.extend(sites);
        self
    }

    pub fn bath_sites(mut self, sites: impl IntoIterator<Item = SpinSite>) -> Self {
        self.bath_sites.extend(sites);
        self
    }

    pub fn system_coupling(mut self, i: usize, j: usize, t: Tensor3) -> Result<Self> {
        self.system_couplings.insert(i, j, t)?;
        Ok(self)
    }

    pub fn system_couplings(mut self, table: InteractionTable) -> Self {
        self.system_couplings = table;
        self
    }

    pub fn bath_couplings(mut self, table: InteractionTable) -> Self {
        self.bath_couplings = Some(table);
        self
    }

    pub fn system_bath_couplings(mut self, table: SystemBathTable) -> Self {
        self.system_bath = Some(table);
        self
    }

    pub fn field(mut self, field: Vec3) -> Self {
        self.field = field;
        self
    }

    pub fn min_distance(mut self, d: f64) -> Self {
        self.min_distance = Some(d);
        self
    }

    /// Only bath pairs closer than `cutoff` (Å) get an automatic coupling.
    pub fn bath_cutoff(mut self, cutoff: Option<f64>) -> Self {
        self.bath_cutoff = cutoff;
        self
    }

    pub fn build(self) -> Result<SpinModel> {
        let min_distance = self.min_distance.unwrap_or(DEFAULT_MIN_DISTANCE);
        for (i, s) in self.system_sites.iter().enumerate() {
            s.validate("system", i)?;
        }
        for (i, s) in self.bath_sites.iter().enumerate() {
            s.validate("bath", i)?;
        }
        if self.field.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel("non-finite field".into()));
        }
        self.system_couplings
            .validate(self.system_sites.len(), "system sites")?;
        check_min_distances(&self.system_sites, &self.bath_sites, min_distance)?;

        let (bath_couplings, bath_source) = match self.bath_couplings {
            Some(t) => {
                t.validate(self.bath_sites.len(), "bath sites")?;
                (t, CouplingSource::Explicit)
            }
            None => (
                auto_bath_couplings(&self.bath_sites, self.bath_cutoff)?,
                CouplingSource::Auto,
            ),
        };
        let (system_bath, system_bath_source) = match self.system_bath {
            Some(t) => {
                if t.n_system() != self.system_sites.len() || t.n_bath() != self.bath_sites.len() {
                    return Err(Error::Shape(format!(
                        "system-bath table is {}x{}, model has {} system and {} bath sites",
                        t.n_system(),
                        t.n_bath(),
                        self.system_sites.len(),
                        self.bath_sites.len()
                    )));
                }
                (t, CouplingSource::Explicit)
            }
            None => (
                point_dipole_system_bath(&self.system_sites, &self.bath_sites)?,
                CouplingSource::Auto,
            ),
        };
        Ok(SpinModel {
            system_sites: self.system_sites,
            bath_sites: self.bath_sites,
            system_couplings: self.system_couplings,
            bath_couplings,
            system_bath,
            field: self.field,
            min_distance,
            bath_source,
            system_bath_source,
            bath_cutoff: self.bath_cutoff,
        })
    }
}

fn check_min_distances(system: &[SpinSite], bath: &[SpinSite], min: f64) -> Result<()> {
    // System sites may legitimately share a position (electron and nucleus
    // of one ion), so only pairs involving a bath spin are checked.
    let tol = 1e-9;
    for (j, b) in bath.iter().enumerate() {
        for (i, s) in system.iter().enumerate() {
            let d = geom::distance(&s.position, &b.position);
            if d < min - tol {
                return Err(Error::InvalidModel(format!(
                    "bath site {j} is {d:.3} Å from system site {i}, below the minimum {min} Å"
                )));
            }
        }
        for (l, other) in bath.iter().enumerate().skip(j + 1) {
            let d = geom::distance(&other.position, &b.position);
            if d < min - tol {
                return Err(Error::InvalidModel(format!(
                    "bath sites {j} and {l} are {d:.3} Å apart, below the minimum {min} Å"
                )));
            }
        }
    }
    Ok(())
}

fn auto_bath_couplings(bath: &[SpinSite], cutoff: Option<f64>) -> Result<InteractionTable> {
    let mut table = InteractionTable::new();
    for (j, a) in bath.iter().enumerate() {
        for (l, b) in bath.iter().enumerate().skip(j + 1) {
            if let Some(c) = cutoff {
                if geom::distance(&a.position, &b.position) > c {
                    continue;
                }
            }
            table.insert(j, l, dipolar_tensor(&a.position, &b.position, &a.gamma, &b.gamma)?)?;
        }
    }
    Ok(table)
}

fn point_dipole_system_bath(system: &[SpinSite], bath: &[SpinSite]) -> Result<SystemBathTable> {
    let mut table = SystemBathTable::zeros(system.len(), bath.len());
    for (i, s) in system.iter().enumerate() {
        for (j, b) in bath.iter().enumerate() {
            table.set(i, j, dipolar_tensor(&s.position, &b.position, &s.gamma, &b.gamma)?);
        }
    }
    Ok(table)
}

/// Per-bath-site Zeeman vectors and the bath coupling pieces of `H_B`.
#[derive(Debug, Clone)]
pub struct BathTerms {
    /// `b_j = B·γ^j`, rad/µs.
    pub zeeman: Vec<Vec3>,
    pub couplings: InteractionTable,
    /// Quadrupole tensors (absent for I = 1/2 baths).
    pub self_tensors: Vec<Option<Tensor3>>,
    pub spins: Vec<Spin>,
}

impl SpinModel {
    pub fn builder() -> ModelBuilder {
        ModelBuilder::default()
    }

    pub fn n_system(&self) -> usize {
        self.system_sites.len()
    }

    pub fn n_bath(&self) -> usize {
        self.bath_sites.len()
    }

    pub fn system_dims(&self) -> Vec<usize> {
        self.system_sites.iter().map(SpinSite::dim).collect()
    }

    pub fn system_dim(&self) -> usize {
        self.system_dims().iter().product()
    }

    /// Same geometry with every system-bath tensor multiplied by `factor`.
    pub fn with_scaled_system_bath(&self, factor: f64) -> SpinModel {
        let mut m = self.clone();
        m.system_bath = self.system_bath.scaled(factor);
        m.system_bath_source = CouplingSource::Explicit;
        m
    }

    /// Same model with all system-system couplings removed.
    pub fn uncoupled(&self) -> SpinModel {
        let mut m = self.clone();
        m.system_couplings = InteractionTable::new();
        m
    }

    /// Largest relative deviation of an auto-filled system-bath table from
    /// the point-dipole formula (zero for explicit tables).
    pub fn auto_coupling_deviation(&self) -> Result<f64> {
        if self.system_bath_source == CouplingSource::Explicit {
            return Ok(0.0);
        }
        let reference = point_dipole_system_bath(&self.system_sites, &self.bath_sites)?;
        let mut worst: f64 = 0.0;
        for ((_, _, a), (_, _, b)) in self.system_bath.iter().zip(reference.iter()) {
            let scale = geom::frobenius3(b);
            if scale > 0.0 {
                let diff = geom::frobenius3(&geom::add3(a, &geom::scale3(b, -1.0)));
                worst = worst.max(diff / scale);
            }
        }
        Ok(worst)
    }
}

/// `Σ_i B·Γ^i·S_i + Σ_{i<j} S_i·D^{ij}·S_j + Σ_i S_i·D^{ii}·S_i` on the
/// system product space.
pub fn build_system_hamiltonian(model: &SpinModel) -> Result<CMat> {
    if model.system_sites.is_empty() {
        return Err(Error::InvalidModel("model has no system sites".into()));
    }
    let dims = model.system_dims();
    let ops = embedded_spin_ops(model, &dims)?;
    let total: usize = dims.iter().product();
    let mut h = CMat::zeros(total, total);

    for (site, ops_i) in model.system_sites.iter().zip(&ops) {
        let field = geom::vec_mat(&model.field, &site.gamma);
        for nu in 0..3 {
            if field[nu] != 0.0 {
                h += scale(&ops_i[nu], C64::new(field[nu], 0.0));
            }
        }
        if let Some(t) = &site.self_tensor {
            add_bilinear(&mut h, t, &ops_i, &ops_i);
        }
    }
    for (i, j, t) in model.system_couplings.iter() {
        if i >= ops.len() || j >= ops.len() {
            return Err(Error::IndexOutOfRange {
                what: "system sites",
                index: i.max(j),
                len: ops.len(),
            });
        }
        add_bilinear(&mut h, t, &ops[i], &ops[j]);
    }

    let residual = hermitian_residual(&h);
    if residual > ASSEMBLY_HERMITIAN_TOL {
        return Err(Error::NumericalContract(format!(
            "system Hamiltonian assembled non-Hermitian (residual {residual:.3e})"
        )));
    }
    Ok(h)
}

/// Embedded `[S^x, S^y, S^z]` for every system site.
pub fn embedded_spin_ops(model: &SpinModel, dims: &[usize]) -> Result<Vec<[CMat; 3]>> {
    model
        .system_sites
        .iter()
        .enumerate()
        .map(|(k, site)| {
            let set = spin_matrices_for(site.spin()?);
            Ok([
                embed(&set.sx, k, dims)?.matrix,
                embed(&set.sy, k, dims)?.matrix,
                embed(&set.sz, k, dims)?.matrix,
            ])
        })
        .collect()
}

/// `h += Σ_{µν} t[µ][ν] a^µ b^ν`.
fn add_bilinear(h: &mut CMat, t: &Tensor3, a: &[CMat; 3], b: &[CMat; 3]) {
    for mu in 0..3 {
        let mut row = CMat::zeros(h.nrows(), h.ncols());
        let mut any = false;
        for nu in 0..3 {
            if t[mu][nu] != 0.0 {
                row += scale(&b[nu], C64::new(t[mu][nu], 0.0));
                any = true;
            }
        }
        if any {
            *h += &a[mu] * &row;
        }
    }
}

pub fn build_bath_hamiltonian_terms(model: &SpinModel) -> Result<BathTerms> {
    if model.bath_sites.is_empty() {
        return Err(Error::InvalidModel("model has no bath sites".into()));
    }
    let zeeman = model
        .bath_sites
        .iter()
        .map(|s| geom::vec_mat(&model.field, &s.gamma))
        .collect();
    let spins = model
        .bath_sites
        .iter()
        .map(SpinSite::spin)
        .collect::<Result<Vec<_>>>()?;
    Ok(BathTerms {
        zeeman,
        couplings: model.bath_couplings.clone(),
        self_tensors: model.bath_sites.iter().map(|s| s.self_tensor).collect(),
        spins,
    })
}

/// Point-dipole `A^{ij}` for every (system, bath) pair.
pub fn system_bath_couplings(model: &SpinModel) -> Result<SystemBathTable> {
    point_dipole_system_bath(&model.system_sites, &model.bath_sites)
}
