//! Conditional Hamiltonians restricted to a cluster, with every spin
//! outside the cluster replaced by its mean-field average.

use std::collections::HashMap;

use crate::cce::cluster::Cluster;
use crate::cce::state::{BathState, SiteMoments};
use crate::effective::ConditionalHamiltonian;
use crate::geom::{self, Tensor3, Vec3};
use crate::spinops::{add_local_operator, kron, scale, spin_matrices_for, Spin, SpinMatrixSet};
use crate::{CMat, Error, Result, C64};

/// Spin matrices and their pairwise products for one spin value.
#[derive(Debug, Clone)]
pub(crate) struct SpinTable {
    pub ops: [CMat; 3],
    /// `ops[ν] * ops[ρ]`.
    pub products: [[CMat; 3]; 3],
}

impl SpinTable {
    fn new(set: SpinMatrixSet) -> Self {
        let ops = [set.sx, set.sy, set.sz];
        let products = std::array::from_fn(|a| std::array::from_fn(|b| &ops[a] * &ops[b]));
        SpinTable { ops, products }
    }
}

pub(crate) fn spin_tables(spins: &[Spin]) -> HashMap<Spin, SpinTable> {
    let mut out = HashMap::new();
    for s in spins {
        out.entry(*s).or_insert_with(|| SpinTable::new(spin_matrices_for(*s)));
    }
    out
}

/// `Σ_ν f_ν s^ν + Σ_{νρ} q_{νρ} s^ν s^ρ`.
pub(crate) fn single_site_operator(table: &SpinTable, field: &Vec3, quad: &[[C64; 3]; 3]) -> CMat {
    let d = table.ops[0].nrows();
    let mut op = CMat::zeros(d, d);
    for nu in 0..3 {
        if field[nu] != 0.0 {
            op += scale(&table.ops[nu], C64::new(field[nu], 0.0));
        }
        for rho in 0..3 {
            if quad[nu][rho] != C64::new(0.0, 0.0) {
                op += scale(&table.products[nu][rho], quad[nu][rho]);
            }
        }
    }
    op
}

/// `Σ_{νρ} x_{νρ} s_a^ν ⊗ s_b^ρ`.
pub(crate) fn pair_operator(a: &SpinTable, b: &SpinTable, x: &[[C64; 3]; 3]) -> CMat {
    let (da, db) = (a.ops[0].nrows(), b.ops[0].nrows());
    let mut op = CMat::zeros(da * db, da * db);
    for nu in 0..3 {
        let mut right = CMat::zeros(db, db);
        let mut any = false;
        for rho in 0..3 {
            if x[nu][rho] != C64::new(0.0, 0.0) {
                right += scale(&b.ops[rho], x[nu][rho]);
                any = true;
            }
        }
        if any {
            op += kron(&a.ops[nu], &right);
        }
    }
    op
}

pub(crate) fn real_to_complex(t: &Tensor3) -> [[C64; 3]; 3] {
    std::array::from_fn(|a| std::array::from_fn(|b| C64::new(t[a][b], 0.0)))
}

/// A conditional Hamiltonian combined with a bath state: mean fields and
/// scalar averages of the whole bath are precomputed once so any cluster
/// can be materialised in time independent of the bath size.
#[derive(Debug)]
pub struct PreparedConditional<'a> {
    pub ch: &'a ConditionalHamiltonian,
    moments: Vec<SiteMoments>,
    mixed: bool,
    /// `Σ_{l≠j} (J^{jl} + X^{jl}) ⟨I_l⟩`.
    mean_field: Vec<Vec3>,
    /// Average of the single-site terms of spin l.
    site_scalar: Vec<f64>,
    /// Average of the whole bath operator (offset excluded).
    total_scalar: f64,
    tables: HashMap<Spin, SpinTable>,
}

impl<'a> PreparedConditional<'a> {
    pub fn new(ch: &'a ConditionalHamiltonian, state: &BathState) -> Result<Self> {
        let spins = ch.spins();
        let n = spins.len();
        state.validate(spins)?;
        let moments: Vec<SiteMoments> = (0..n).map(|j| state.moments(j, spins[j])).collect();
        let mixed = state.is_maximally_mixed();

        let mut mean_field = vec![[0.0; 3]; n];
        if !mixed {
            for (j, l, t) in ch.bath.couplings.iter() {
                let fj = geom::mat_vec(t, &moments[l].mean);
                let fl = geom::vec_mat(&moments[j].mean, t);
                for a in 0..3 {
                    mean_field[j][a] += fj[a];
                    mean_field[l][a] += fl[a];
                }
            }
            if let Some(so) = &ch.second_order {
                for c in &so.channels {
                    let dots: Vec<C64> = c
                        .coupling
                        .iter()
                        .zip(&moments)
                        .map(|(u, m)| (0..3).map(|r| u[r].conj() * m.mean[r]).sum())
                        .collect();
                    let total: C64 = dots.iter().sum();
                    for j in 0..n {
                        let w = (total - dots[j]) * c.inv_gap;
                        for a in 0..3 {
                            mean_field[j][a] += 2.0 * (c.coupling[j][a] * w).re;
                        }
                    }
                }
            }
        }

        let mut site_scalar = Vec::with_capacity(n);
        for j in 0..n {
            let m = &moments[j];
            let lin = geom::dot(&ch.linear_field(j), &m.mean);
            let q = ch.single_site_tensor(j);
            let mut quad = C64::new(0.0, 0.0);
            for a in 0..3 {
                for b in 0..3 {
                    quad += q[a][b] * m.second[a][b];
                }
            }
            site_scalar.push(lin + quad.re);
        }
        let pair_scalar: f64 = 0.5 * (0..n).map(|j| geom::dot(&moments[j].mean, &mean_field[j])).sum::<f64>();
        let total_scalar = site_scalar.iter().sum::<f64>() + pair_scalar;

        Ok(PreparedConditional {
            ch,
            moments,
            mixed,
            mean_field,
            site_scalar,
            total_scalar,
            tables: spin_tables(spins),
        })
    }

    pub fn is_maximally_mixed(&self) -> bool {
        self.mixed
    }

    /// Scalar part of the cluster Hamiltonian: `E_ψ` plus the mean-field
    /// average of everything that does not involve a cluster spin.
    pub fn cluster_scalar(&self, members: &[usize]) -> f64 {
        let mut s = self.total_scalar;
        for &l in members {
            s -= self.site_scalar[l];
            if !self.mixed {
                s -= geom::dot(&self.moments[l].mean, &self.mean_field[l]);
            }
        }
        if !self.mixed {
            for (p, &l) in members.iter().enumerate() {
                for &m in &members[p + 1..] {
                    let x = self.ch.pair_tensor(l, m);
                    s += geom::dot(&self.moments[l].mean, &geom::mat_vec(&x, &self.moments[m].mean));
                }
            }
        }
        self.ch.offset + s
    }

    /// Linear field on cluster spin `j` including the mean field of every
    /// spin outside `members`.
    pub fn cluster_field(&self, j: usize, members: &[usize]) -> Vec3 {
        let mut f = self.ch.linear_field(j);
        if !self.mixed {
            let mut mf = self.mean_field[j];
            for &l in members {
                if l != j {
                    let inside = geom::mat_vec(&self.ch.pair_tensor(j, l), &self.moments[l].mean);
                    for a in 0..3 {
                        mf[a] -= inside[a];
                    }
                }
            }
            for a in 0..3 {
                f[a] += mf[a];
            }
        }
        f
    }

    /// The cluster Hamiltonian, dimension `∏(2I_m + 1)`.
    pub fn cluster_hamiltonian(&self, cluster: &Cluster) -> Result<CMat> {
        let members = cluster.members();
        let spins = self.ch.spins();
        if let Some(&bad) = members.iter().find(|&&m| m >= spins.len()) {
            return Err(Error::IndexOutOfRange {
                what: "bath sites",
                index: bad,
                len: spins.len(),
            });
        }
        let dims: Vec<usize> = members.iter().map(|&m| spins[m].dim()).collect();
        let d: usize = dims.iter().product();
        let mut h = CMat::zeros(d, d);
        let scalar = self.cluster_scalar(members);
        for i in 0..d {
            h[(i, i)] = C64::new(scalar, 0.0);
        }
        for (p, &j) in members.iter().enumerate() {
            let table = &self.tables[&spins[j]];
            let op = single_site_operator(table, &self.cluster_field(j, members), &self.ch.single_site_tensor(j));
            add_local_operator(&mut h, &dims, &[p], &op)?;
        }
        for (p, &j) in members.iter().enumerate() {
            for (q, &l) in members.iter().enumerate().skip(p + 1) {
                let x = self.ch.pair_tensor(j, l);
                if x == geom::ZERO3 {
                    continue;
                }
                let op = pair_operator(&self.tables[&spins[j]], &self.tables[&spins[l]], &real_to_complex(&x));
                add_local_operator(&mut h, &dims, &[p, q], &op)?;
            }
        }
        Ok(h)
    }
}

/// `(Hα_C, Hβ_C)` for one cluster.
pub fn cluster_hamiltonians(
    h_alpha: &ConditionalHamiltonian,
    h_beta: &ConditionalHamiltonian,
    cluster: &Cluster,
    state: &BathState,
) -> Result<(CMat, CMat)> {
    let a = PreparedConditional::new(h_alpha, state)?;
    let b = PreparedConditional::new(h_beta, state)?;
    Ok((a.cluster_hamiltonian(cluster)?, b.cluster_hamiltonian(cluster)?))
}

/// Density matrix of the cluster, `⊗_m ρ_m`; `None` for the maximally
/// mixed state.
pub fn cluster_density(state: &BathState, spins: &[Spin], cluster: &Cluster) -> Option<CMat> {
    match state {
        BathState::MaximallyMixed => None,
        BathState::Product(_) => {
            let mut rho = CMat::from_fn(1, 1, |_, _| C64::new(1.0, 0.0));
            for &m in cluster.members() {
                rho = kron(&rho, &state.site_matrix(m, spins[m]));
            }
            Some(rho)
        }
    }
}
