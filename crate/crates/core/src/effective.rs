//! Conditional bath Hamiltonians from a Schrieffer-Wolff treatment of the
//! system-bath coupling.
//!
//! For a system eigenstate ψ the bath sees
//!
//! ```text
//! H^ψ = E_ψ + Σ_j (b_j + h_j(ψ))·I_j + Σ_{j<l} I_j·(J^{jl} + X^{jl}(ψ))·I_l
//!           + Σ_j Σ_{νρ} T^{jj}_{νρ}(ψ) I_j^ν I_j^ρ
//! ```
//!
//! where `h_j(ψ) = Σ_i ⟨ψ|S_i|ψ⟩·A^{ij}` and the second-order tensor over
//! ordered bath pairs is
//!
//! ```text
//! T^{jl}_{νρ}(ψ) = Σ_{ψ'≠ψ} u_{jν}(ψ,ψ') conj(u_{lρ}(ψ,ψ')) / (E_ψ − E_ψ')
//! u_{jν}(ψ,ψ')   = Σ_{i,µ} ⟨ψ|S_i^µ|ψ'⟩ A^{ij}_{µν}.
//! ```
//!
//! `T^{lj} = conj(T^{jl})ᵀ`, so an unordered pair contributes the real
//! tensor `X^{jl} = 2 Re T^{jl}` and the single-site block `T^{jj}` is a
//! Hermitian complex 3×3. `T` is kept factorised as one channel per
//! intermediate state ψ', which makes any pair tensor O(#channels) to
//! evaluate and avoids materialising N² tensors for large baths.

use std::sync::Arc;

use crate::geom::{self, Tensor3, Vec3};
use crate::model::{build_bath_hamiltonian_terms, build_system_hamiltonian, embedded_spin_ops, BathTerms, SpinModel};
use crate::spinops::{eigh, Spin};
use crate::{CMat, Error, Result, C64};

/// Imaginary residue tolerated in an expectation value of a Hermitian
/// operator before it counts as a numerical-contract violation.
const EXPECTATION_IMAG_TOL: f64 = 1e-10;

/// Channels whose largest coupling component is below this fraction of the
/// largest system-bath tensor entry are dropped; selection rules make many
/// matrix elements vanish identically and those partners carry no
/// perturbative weight whatever their energy gap.
const NEGLIGIBLE_CHANNEL: f64 = 1e-10;

/// Diagonalised central system plus everything the conditional
/// Hamiltonians and metrics need from it.
#[derive(Debug, Clone)]
pub struct SystemEigenbasis {
    /// Ascending eigenvalues, rad/µs.
    pub energies: Vec<f64>,
    /// Eigenvectors as columns.
    pub states: CMat,
    /// `local_expectations[ψ][k] = [⟨ψ|S_k^x|ψ⟩, ⟨ψ|S_k^y|ψ⟩, ⟨ψ|S_k^z|ψ⟩]`.
    pub local_expectations: Vec<Vec<Vec3>>,
    /// Spin operators of every site rotated into the eigenbasis.
    eigen_ops: Vec<[CMat; 3]>,
    pub site_gammas: Vec<Tensor3>,
    pub site_positions: Vec<Vec3>,
}

impl SystemEigenbasis {
    pub fn n_states(&self) -> usize {
        self.energies.len()
    }

    pub fn n_sites(&self) -> usize {
        self.eigen_ops.len()
    }

    pub fn expectation(&self, psi: usize, site: usize) -> Vec3 {
        self.local_expectations[psi][site]
    }

    /// `Σ_k ⟨ψ|S_k|ψ⟩`.
    pub fn total_expectation(&self, psi: usize) -> Vec3 {
        let mut out = [0.0; 3];
        for v in &self.local_expectations[psi] {
            for a in 0..3 {
                out[a] += v[a];
            }
        }
        out
    }

    /// `⟨ψ|S_site^axis|φ⟩`.
    pub fn matrix_element(&self, psi: usize, phi: usize, site: usize, axis: usize) -> C64 {
        self.eigen_ops[site][axis][(psi, phi)]
    }

    /// `S_site^axis` in the eigenbasis.
    pub fn eigen_operator(&self, site: usize, axis: usize) -> &CMat {
        &self.eigen_ops[site][axis]
    }

    fn check_state(&self, psi: usize) -> Result<()> {
        if psi >= self.n_states() {
            return Err(Error::IndexOutOfRange {
                what: "system eigenstates",
                index: psi,
                len: self.n_states(),
            });
        }
        Ok(())
    }

    /// Default SW gap floor: 10⁻³ × the median spacing between adjacent
    /// levels, ignoring exact degeneracies (spacings below 10⁻⁹ of the
    /// spectral width).
    pub fn default_gap_floor(&self) -> f64 {
        let width = self.energies.last().copied().unwrap_or(0.0) - self.energies.first().copied().unwrap_or(0.0);
        let mut gaps: Vec<f64> = self
            .energies
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|g| *g > 1e-9 * width)
            .collect();
        if gaps.is_empty() {
            return 0.0;
        }
        gaps.sort_by(f64::total_cmp);
        let mid = gaps.len() / 2;
        let median = if gaps.len() % 2 == 1 {
            gaps[mid]
        } else {
            0.5 * (gaps[mid - 1] + gaps[mid])
        };
        1e-3 * median
    }
}

/// Diagonalise `H_S` and tabulate local spin expectations.
pub fn diagonalize_system(model: &SpinModel) -> Result<SystemEigenbasis> {
    let h = build_system_hamiltonian(model)?;
    let dims = model.system_dims();
    let eig = eigh(&h)?;
    let v = &eig.vectors;
    let ops = embedded_spin_ops(model, &dims)?;
    let eigen_ops: Vec<[CMat; 3]> = ops
        .iter()
        .map(|site| {
            [
                v.adjoint() * &site[0] * v,
                v.adjoint() * &site[1] * v,
                v.adjoint() * &site[2] * v,
            ]
        })
        .collect();
    let n = eig.values.len();
    let mut local = vec![vec![[0.0; 3]; eigen_ops.len()]; n];
    for (psi, row) in local.iter_mut().enumerate() {
        for (k, site) in eigen_ops.iter().enumerate() {
            for a in 0..3 {
                let z = site[a][(psi, psi)];
                if z.im.abs() > EXPECTATION_IMAG_TOL * (1.0 + z.re.abs()) {
                    return Err(Error::NumericalContract(format!(
                        "expectation <{psi}|S_{k}^{a}|{psi}> has imaginary part {:.3e}",
                        z.im
                    )));
                }
                row[k][a] = z.re;
            }
        }
    }
    Ok(SystemEigenbasis {
        energies: eig.values,
        states: eig.vectors,
        local_expectations: local,
        eigen_ops,
        site_gammas: model.system_sites.iter().map(|s| s.gamma).collect(),
        site_positions: model.system_sites.iter().map(|s| s.position).collect(),
    })
}

/// Perturbative order of the conditional Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SwOrder {
    #[serde(rename = "1")]
    First,
    #[serde(rename = "2")]
    Second,
}

impl SwOrder {
    pub fn from_int(order: u32) -> Result<Self> {
        match order {
            1 => Ok(SwOrder::First),
            2 => Ok(SwOrder::Second),
            other => Err(Error::Config(format!("SW order must be 1 or 2, got {other}"))),
        }
    }

    pub fn as_int(self) -> u32 {
        match self {
            SwOrder::First => 1,
            SwOrder::Second => 2,
        }
    }
}

/// One intermediate-state term of the second-order tensor.
#[derive(Debug, Clone)]
pub struct Channel {
    pub partner: usize,
    /// `1 / (E_ψ − E_ψ')`.
    pub inv_gap: f64,
    /// `u_j(ψ,ψ')` for every bath site.
    pub coupling: Vec<[C64; 3]>,
}

/// Factorised `T^{jl}(ψ)`.
#[derive(Debug, Clone, Default)]
pub struct SecondOrderTerms {
    pub channels: Vec<Channel>,
}

impl SecondOrderTerms {
    /// Ordered-pair tensor `T^{jl}` (complex).
    pub fn ordered(&self, j: usize, l: usize) -> [[C64; 3]; 3] {
        let mut out = [[C64::new(0.0, 0.0); 3]; 3];
        for c in &self.channels {
            let uj = &c.coupling[j];
            let ul = &c.coupling[l];
            for nu in 0..3 {
                let a = uj[nu] * c.inv_gap;
                for rho in 0..3 {
                    out[nu][rho] += a * ul[rho].conj();
                }
            }
        }
        out
    }

    /// Effective real tensor of the unordered pair, `2 Re T^{jl}`, oriented
    /// with `I_j` on the left.
    pub fn pair(&self, j: usize, l: usize) -> Tensor3 {
        let t = self.ordered(j, l);
        let mut out = geom::ZERO3;
        for nu in 0..3 {
            for rho in 0..3 {
                out[nu][rho] = 2.0 * t[nu][rho].re;
            }
        }
        out
    }

    /// Hermitian single-site block `T^{jj}`.
    pub fn single(&self, j: usize) -> [[C64; 3]; 3] {
        self.ordered(j, j)
    }
}

/// `H^ψ` restricted to nothing yet: the ingredients from which any
/// cluster Hamiltonian is assembled.
#[derive(Debug, Clone)]
pub struct ConditionalHamiltonian {
    pub state_index: usize,
    /// `E_ψ`.
    pub offset: f64,
    /// `h_j(ψ)`.
    pub first_order_fields: Vec<Vec3>,
    pub second_order: Option<SecondOrderTerms>,
    pub bath: Arc<BathTerms>,
}

impl ConditionalHamiltonian {
    pub fn includes_second_order(&self) -> bool {
        self.second_order.is_some()
    }

    pub fn n_bath(&self) -> usize {
        self.first_order_fields.len()
    }

    pub fn spins(&self) -> &[Spin] {
        &self.bath.spins
    }

    /// `b_j + h_j`.
    pub fn linear_field(&self, j: usize) -> Vec3 {
        let b = self.bath.zeeman[j];
        let h = self.first_order_fields[j];
        [b[0] + h[0], b[1] + h[1], b[2] + h[2]]
    }

    /// Full real pair tensor `J^{jl} + X^{jl}` with `I_j` on the left.
    pub fn pair_tensor(&self, j: usize, l: usize) -> Tensor3 {
        let mut t = self.bath.couplings.get(j, l).unwrap_or(geom::ZERO3);
        if let Some(so) = &self.second_order {
            t = geom::add3(&t, &so.pair(j, l));
        }
        t
    }

    /// Single-site quadratic block: quadrupole tensor plus `T^{jj}`.
    pub fn single_site_tensor(&self, j: usize) -> [[C64; 3]; 3] {
        let mut out = [[C64::new(0.0, 0.0); 3]; 3];
        if let Some(q) = &self.bath.self_tensors[j] {
            for a in 0..3 {
                for b in 0..3 {
                    out[a][b] += q[a][b];
                }
            }
        }
        if let Some(so) = &self.second_order {
            let t = so.single(j);
            for a in 0..3 {
                for b in 0..3 {
                    out[a][b] += t[a][b];
                }
            }
        }
        out
    }

    /// Magnitude of the field that second-order terms can exert on spin
    /// `j`: `Σ_l ‖T^{jl}‖_F · I_l` (ordered tensors, `l = j` included).
    pub fn second_order_field_bound(&self, j: usize) -> f64 {
        let Some(so) = &self.second_order else {
            return 0.0;
        };
        (0..self.n_bath())
            .map(|l| {
                let t = so.ordered(j, l);
                let f: f64 = t.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                f * self.bath.spins[l].value()
            })
            .sum()
    }
}

/// Options for [`conditional_hamiltonian`].
#[derive(Debug, Clone)]
pub struct ConditionalOptions {
    pub order: SwOrder,
    /// Minimum |E_ψ − E_ψ'| allowed for a contributing intermediate state.
    pub gap_floor: f64,
    /// Intermediate states the caller explicitly drops from the second-order
    /// sum.
    pub exclude: Vec<usize>,
}

impl ConditionalOptions {
    pub fn new(order: SwOrder, gap_floor: f64) -> Self {
        ConditionalOptions {
            order,
            gap_floor,
            exclude: Vec::new(),
        }
    }
}

/// `u_j(ψ,φ)` for every bath site.
fn coupling_vectors(basis: &SystemEigenbasis, model: &SpinModel, psi: usize, phi: usize) -> Vec<[C64; 3]> {
    let table = &model.system_bath;
    let n_sys = basis.n_sites();
    let elems: Vec<[C64; 3]> = (0..n_sys)
        .map(|i| {
            [
                basis.matrix_element(psi, phi, i, 0),
                basis.matrix_element(psi, phi, i, 1),
                basis.matrix_element(psi, phi, i, 2),
            ]
        })
        .collect();
    (0..table.n_bath())
        .map(|j| {
            let mut u = [C64::new(0.0, 0.0); 3];
            for (i, e) in elems.iter().enumerate() {
                let a = table.get(i, j);
                for mu in 0..3 {
                    if e[mu] == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for nu in 0..3 {
                        u[nu] += e[mu] * a[mu][nu];
                    }
                }
            }
            u
        })
        .collect()
}

/// Build `H^ψ` for the given model and eigenbasis.
pub fn conditional_hamiltonian(
    basis: &SystemEigenbasis,
    model: &SpinModel,
    bath: &Arc<BathTerms>,
    psi: usize,
    options: &ConditionalOptions,
) -> Result<ConditionalHamiltonian> {
    basis.check_state(psi)?;
    if model.system_bath.n_system() != basis.n_sites() {
        return Err(Error::Shape("eigenbasis and model disagree on system size".into()));
    }
    let table = &model.system_bath;
    let first: Vec<Vec3> = (0..table.n_bath())
        .map(|j| {
            let mut h = [0.0; 3];
            for i in 0..basis.n_sites() {
                let m = basis.expectation(psi, i);
                let f = geom::vec_mat(&m, table.get(i, j));
                for a in 0..3 {
                    h[a] += f[a];
                }
            }
            h
        })
        .collect();

    let second_order = match options.order {
        SwOrder::First => None,
        SwOrder::Second => {
            let scale = table.max_abs_entry();
            let mut channels = Vec::new();
            for phi in 0..basis.n_states() {
                if phi == psi || options.exclude.contains(&phi) {
                    continue;
                }
                let coupling = coupling_vectors(basis, model, psi, phi);
                let largest = coupling.iter().flatten().fold(0.0_f64, |m, z| m.max(z.norm()));
                if largest <= NEGLIGIBLE_CHANNEL * scale {
                    continue;
                }
                let gap = basis.energies[psi] - basis.energies[phi];
                if !(gap.abs() > options.gap_floor) || gap == 0.0 {
                    return Err(Error::SwValidity {
                        state: psi,
                        partner: phi,
                        gap: gap.abs(),
                        floor: options.gap_floor,
                    });
                }
                channels.push(Channel {
                    partner: phi,
                    inv_gap: 1.0 / gap,
                    coupling,
                });
            }
            Some(SecondOrderTerms { channels })
        }
    };

    Ok(ConditionalHamiltonian {
        state_index: psi,
        offset: basis.energies[psi],
        first_order_fields: first,
        second_order,
        bath: Arc::clone(bath),
    })
}

/// Everything needed to build conditional Hamiltonians for a model: the
/// eigenbasis, the shared bath terms and the chosen options.
#[derive(Debug, Clone)]
pub struct ConditionalFactory<'a> {
    pub model: &'a SpinModel,
    pub basis: SystemEigenbasis,
    pub bath: Arc<BathTerms>,
}

impl<'a> ConditionalFactory<'a> {
    pub fn new(model: &'a SpinModel) -> Result<Self> {
        Ok(ConditionalFactory {
            model,
            basis: diagonalize_system(model)?,
            bath: Arc::new(build_bath_hamiltonian_terms(model)?),
        })
    }

    pub fn build(&self, psi: usize, options: &ConditionalOptions) -> Result<ConditionalHamiltonian> {
        conditional_hamiltonian(&self.basis, self.model, &self.bath, psi, options)
    }
}

/// A pair of levels closer than the SW gap floor.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct NearDegeneracy {
    pub state: usize,
    pub partner: usize,
    pub gap: f64,
}

/// Every (requested state, any other state) pair whose gap is below
/// `gap_floor`. An empty list means the SW construction is trustworthy for
/// the requested states.
pub fn sw_validity_report(basis: &SystemEigenbasis, states: &[usize], gap_floor: f64) -> Vec<NearDegeneracy> {
    let mut out = Vec::new();
    for &psi in states {
        if psi >= basis.n_states() {
            continue;
        }
        for phi in 0..basis.n_states() {
            if phi == psi {
                continue;
            }
            let gap = (basis.energies[psi] - basis.energies[phi]).abs();
            if gap < gap_floor {
                out.push(NearDegeneracy {
                    state: psi,
                    partner: phi,
                    gap,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{zfs_tensor, SpinSite, SystemBathTable};
    use crate::units::{BOHR_MAGNETON_ENGINE, GAMMA_PROTON_SI, UEV};

    const GP: f64 = GAMMA_PROTON_SI * 1e-6;

    fn one_spin_model(bath: Vec<Vec3>) -> SpinModel {
        SpinModel::builder()
            .system_site(SpinSite::isotropic([0.0; 3], 0.5, 2.0 * BOHR_MAGNETON_ENGINE, "e"))
            .bath_sites(bath.into_iter().map(|p| SpinSite::isotropic(p, 0.5, GP, "H")))
            .field([0.0, 0.0, 0.1])
            .build()
            .unwrap()
    }

    fn giant_model() -> SpinModel {
        let site = SpinSite::isotropic([0.0; 3], 10.0, 2.0 * BOHR_MAGNETON_ENGINE, "S")
            .with_self_tensor(zfs_tensor(25.0 * UEV, 0.5 * UEV));
        SpinModel::builder()
            .system_site(site)
            .bath_sites([
                SpinSite::isotropic([0.0, 0.0, 3.2], 0.5, GP, "H"),
                SpinSite::isotropic([4.0, 1.0, -2.0], 0.5, GP, "H"),
                SpinSite::isotropic([-3.0, 5.0, 1.0], 0.5, GP, "H"),
            ])
            .field([0.0, 0.0, 0.07])
            .build()
            .unwrap()
    }

    #[test]
    fn zeeman_ground_state_is_antialigned() {
        let model = one_spin_model(vec![[0.0, 0.0, 4.0]]);
        let basis = diagonalize_system(&model).unwrap();
        assert!((basis.expectation(0, 0)[2] + 0.5).abs() < 1e-12);
        assert!((basis.expectation(1, 0)[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn giant_spin_transverse_expectations_vanish() {
        let basis = diagonalize_system(&giant_model()).unwrap();
        for psi in 0..21 {
            let e = basis.expectation(psi, 0);
            assert!(e[0].abs() < 1e-10 && e[1].abs() < 1e-10, "{psi}: {e:?}");
        }
    }

    #[test]
    fn first_order_fields_match_direct_contraction() {
        let model = giant_model();
        let f = ConditionalFactory::new(&model).unwrap();
        for psi in [0, 3, 7] {
            let ch = f.build(psi, &ConditionalOptions::new(SwOrder::First, 0.0)).unwrap();
            assert!(ch.second_order.is_none());
            for j in 0..3 {
                let a = model.system_bath.get(0, j);
                let m = basis_exp(&f.basis, psi);
                for nu in 0..3 {
                    let direct: f64 = (0..3).map(|mu| m[mu] * a[mu][nu]).sum();
                    assert!((direct - ch.first_order_fields[j][nu]).abs() < 1e-12);
                }
            }
        }
    }

    fn basis_exp(b: &SystemEigenbasis, psi: usize) -> Vec3 {
        b.expectation(psi, 0)
    }

    #[test]
    fn zero_coupling_gives_bare_bath() {
        let model = giant_model();
        let zeroed = SpinModel {
            system_bath: SystemBathTable::zeros(1, 3),
            ..model
        };
        let f = ConditionalFactory::new(&zeroed).unwrap();
        let ch = f.build(2, &ConditionalOptions::new(SwOrder::Second, 0.0)).unwrap();
        assert!(ch.first_order_fields.iter().flatten().all(|x| *x == 0.0));
        let so = ch.second_order.as_ref().unwrap();
        assert!(so.channels.is_empty());
        assert_eq!(ch.pair_tensor(0, 1), zeroed.bath_couplings.get(0, 1).unwrap());
    }

    #[test]
    fn second_order_scales_quadratically() {
        let model = giant_model();
        let lam = 3.0;
        let scaled = model.with_scaled_system_bath(lam);
        let opts = ConditionalOptions::new(SwOrder::Second, 0.0);
        let a = ConditionalFactory::new(&model).unwrap().build(4, &opts).unwrap();
        let b = ConditionalFactory::new(&scaled).unwrap().build(4, &opts).unwrap();
        let (sa, sb) = (a.second_order.unwrap(), b.second_order.unwrap());
        for j in 0..3 {
            for nu in 0..3 {
                let (x, y) = (a.first_order_fields[j][nu], b.first_order_fields[j][nu]);
                assert!((y - lam * x).abs() <= 1e-12 * y.abs().max(1e-300));
            }
            for l in 0..3 {
                let (x, y) = (sa.ordered(j, l), sb.ordered(j, l));
                for nu in 0..3 {
                    for rho in 0..3 {
                        let d = (y[nu][rho] - x[nu][rho] * lam * lam).norm();
                        assert!(d <= 1e-12 * y[nu][rho].norm().max(1e-300));
                    }
                }
            }
        }
    }

    #[test]
    fn single_site_block_is_hermitian() {
        let model = giant_model();
        let ch = ConditionalFactory::new(&model)
            .unwrap()
            .build(5, &ConditionalOptions::new(SwOrder::Second, 0.0))
            .unwrap();
        let t = ch.single_site_tensor(0);
        for a in 0..3 {
            for b in 0..3 {
                assert!((t[a][b] - t[b][a].conj()).norm() < 1e-15 * (1.0 + t[a][b].norm()));
            }
        }
    }

    #[test]
    fn near_degenerate_partner_is_rejected() {
        // Zero field: the doublet is degenerate and S^x connects it.
        let model = SpinModel::builder()
            .system_site(SpinSite::isotropic([0.0; 3], 0.5, 2.0 * BOHR_MAGNETON_ENGINE, "e"))
            .bath_sites([SpinSite::isotropic([0.0, 0.0, 4.0], 0.5, GP, "H")])
            .build()
            .unwrap();
        let f = ConditionalFactory::new(&model).unwrap();
        let err = f.build(0, &ConditionalOptions::new(SwOrder::Second, 1.0)).unwrap_err();
        assert!(matches!(err, Error::SwValidity { .. }));
        let mut opts = ConditionalOptions::new(SwOrder::Second, 1.0);
        opts.exclude.push(1);
        assert!(f.build(0, &opts).is_ok());
    }

    #[test]
    fn validity_report_extremes() {
        let basis = diagonalize_system(&giant_model()).unwrap();
        assert!(sw_validity_report(&basis, &[0, 1, 2], 1e-9).is_empty());
        let width = basis.energies[20] - basis.energies[0];
        assert_eq!(sw_validity_report(&basis, &[0, 1], 2.0 * width).len(), 40);
    }

    #[test]
    fn first_order_depends_only_on_expectation_vector() {
        // A single spin-1/2 in a field along z: both eigenstates have
        // <S> = ±(0,0,1/2); flip the field to swap them.
        let up = one_spin_model(vec![[1.0, 2.0, 4.0], [-3.0, 0.5, 2.5]]);
        let mut down = up.clone();
        down.field = [0.0, 0.0, -0.1];
        let opts = ConditionalOptions::new(SwOrder::First, 0.0);
        let a = ConditionalFactory::new(&up).unwrap().build(1, &opts).unwrap();
        let b = ConditionalFactory::new(&down).unwrap().build(0, &opts).unwrap();
        for j in 0..2 {
            for nu in 0..3 {
                assert!((a.first_order_fields[j][nu] - b.first_order_fields[j][nu]).abs() < 1e-12);
            }
        }
    }
}
