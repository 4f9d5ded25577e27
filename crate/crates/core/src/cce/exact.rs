//! Direct evaluation of the coherence factor on the full bath space, used
//! as the validation oracle for the expansion.

use crate::cce::hamiltonian::{cluster_density, pair_operator, real_to_complex, single_site_operator, spin_tables};
use crate::cce::cluster::Cluster;
use crate::cce::kernel::cluster_coherence;
use crate::cce::pulses::PulseSequence;
use crate::cce::state::BathState;
use crate::cce::trace::{CoherenceTrace, TraceMeta};
use crate::effective::ConditionalHamiltonian;
use crate::spinops::{add_local_operator, hermitian_residual};
use crate::{CMat, Error, Result, C64};

/// Largest bath Hilbert dimension the oracle will materialise.
pub const EXACT_DIM_LIMIT: usize = 1 << 14;

const ASSEMBLY_TOL: f64 = 1e-12;

/// `H^ψ` on the whole bath, written term by term from its definition:
/// second-order tensors are summed over ordered pairs with their complex
/// coefficients.
pub fn full_bath_hamiltonian(ch: &ConditionalHamiltonian) -> Result<CMat> {
    let spins = ch.spins();
    let dims: Vec<usize> = spins.iter().map(|s| s.dim()).collect();
    let d = dims.iter().try_fold(1usize, |acc, &x| acc.checked_mul(x)).unwrap_or(usize::MAX);
    if d > EXACT_DIM_LIMIT {
        return Err(Error::DimensionGuard {
            dim: d,
            limit: EXACT_DIM_LIMIT,
        });
    }
    let tables = spin_tables(spins);
    let n = spins.len();
    let mut h = CMat::zeros(d, d);
    for i in 0..d {
        h[(i, i)] = C64::new(ch.offset, 0.0);
    }
    let zero3 = [[C64::new(0.0, 0.0); 3]; 3];
    for j in 0..n {
        let t = &tables[&spins[j]];
        let lin = single_site_operator(t, &ch.linear_field(j), &zero3);
        add_local_operator(&mut h, &dims, &[j], &lin)?;
        if let Some(q) = &ch.bath.self_tensors[j] {
            add_local_operator(&mut h, &dims, &[j], &single_site_operator(t, &[0.0; 3], &real_to_complex(q)))?;
        }
        if let Some(so) = &ch.second_order {
            add_local_operator(&mut h, &dims, &[j], &single_site_operator(t, &[0.0; 3], &so.single(j)))?;
        }
    }
    for (j, l, t) in ch.bath.couplings.iter() {
        let op = pair_operator(&tables[&spins[j]], &tables[&spins[l]], &real_to_complex(t));
        add_local_operator(&mut h, &dims, &[j, l], &op)?;
    }
    if let Some(so) = &ch.second_order {
        for j in 0..n {
            for l in 0..n {
                if j == l {
                    continue;
                }
                let t = so.ordered(j, l);
                // Written on the sites in ascending order.
                let (first, second, coeff) = if j < l {
                    (j, l, t)
                } else {
                    (l, j, std::array::from_fn(|a| std::array::from_fn(|b| t[b][a])))
                };
                let op = pair_operator(&tables[&spins[first]], &tables[&spins[second]], &coeff);
                add_local_operator(&mut h, &dims, &[first, second], &op)?;
            }
        }
    }
    let residual = hermitian_residual(&h);
    if residual > ASSEMBLY_TOL {
        return Err(Error::NumericalContract(format!(
            "full bath Hamiltonian is not Hermitian (relative residual {residual:.3e})"
        )));
    }
    Ok(h)
}

pub fn exact_coherence(
    h_alpha: &ConditionalHamiltonian,
    h_beta: &ConditionalHamiltonian,
    pulses: &PulseSequence,
    times: &[f64],
    state: &BathState,
) -> Result<CoherenceTrace> {
    let ha = full_bath_hamiltonian(h_alpha)?;
    let hb = full_bath_hamiltonian(h_beta)?;
    let spins = h_alpha.spins();
    state.validate(spins)?;
    let everything = Cluster::new((0..spins.len()).collect())?;
    let rho = cluster_density(state, spins, &everything);
    let values = cluster_coherence(&ha, &hb, pulses, times, rho.as_ref())?;
    Ok(CoherenceTrace {
        times: times.to_vec(),
        values,
        pair: (h_alpha.state_index, h_beta.state_index),
        meta: TraceMeta {
            method: "exact".into(),
            cce_order: spins.len(),
            pair_cutoff: None,
            seed: None,
            pulse_k: pulses.k,
            sw_order: if h_alpha.includes_second_order() { 2 } else { 1 },
            clusters: 1,
            guard_hits: 0,
        },
    })
}
