//! Conditional Hamiltonians against direct diagonalisation of system + bath.

use spinbath::bench::{self, config::BathSiteConfig};
use spinbath::cce::full_bath_hamiltonian;
use spinbath::effective::{ConditionalFactory, ConditionalOptions, SwOrder};
use spinbath::model::{build_system_hamiltonian, InteractionTable, SpinModel};
use spinbath::spinops::eigh;
use spinbath::C64;

fn proton(position: [f64; 3]) -> BathSiteConfig {
    BathSiteConfig {
        position,
        species: "proton".into(),
        spin: None,
        gamma: None,
    }
}

/// Bath spins promoted to system sites, so one Hamiltonian holds everything.
fn merged(model: &SpinModel) -> SpinModel {
    let n = model.n_system();
    let mut table = InteractionTable::new();
    for (i, j, t) in model.system_couplings.iter() {
        table.insert(i, j, *t).unwrap();
    }
    for (i, j, t) in model.system_bath.iter() {
        table.insert(i, n + j, *t).unwrap();
    }
    for (j, l, t) in model.bath_couplings.iter() {
        table.insert(n + j, n + l, *t).unwrap();
    }
    let sites = model.system_sites.iter().chain(&model.bath_sites).cloned();
    SpinModel::builder()
        .system_sites(sites)
        .system_couplings(table)
        .field(model.field)
        .build()
        .unwrap()
}

/// Largest deviation between the exact levels adiabatically connected to
/// `psi` and the spectrum of `H^ψ` (which carries `E_ψ`).
fn level_error(model: &SpinModel, psi: usize, order: SwOrder) -> f64 {
    let factory = ConditionalFactory::new(model).unwrap();
    let ch = factory.build(psi, &ConditionalOptions::new(order, 0.0)).unwrap();
    let hb = full_bath_hamiltonian(&ch).unwrap();
    let db = hb.nrows();
    let predicted = eigh(&hb).unwrap().values;

    let full = eigh(&build_system_hamiltonian(&merged(model)).unwrap()).unwrap();
    let ds = factory.basis.n_states();
    let v = &factory.basis.states;
    let mut weighted: Vec<(f64, f64)> = (0..full.dim())
        .map(|k| {
            let w: f64 = (0..db)
                .map(|b| {
                    (0..ds)
                        .map(|s| v[(s, psi)].conj() * full.vectors[(s * db + b, k)])
                        .sum::<C64>()
                        .norm_sqr()
                })
                .sum();
            (w, full.values[k])
        })
        .collect();
    weighted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut exact: Vec<f64> = weighted[..db].iter().map(|p| p.1).collect();
    exact.sort_by(f64::total_cmp);
    exact.iter().zip(&predicted).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

#[test]
fn second_order_levels_track_exact_spectrum() {
    let mut cfg = bench::scenario("five_spin").unwrap();
    cfg.bath.generate = None;
    cfg.bath.sites = Some(vec![proton([0.0; 3]), proton([5.0, 0.0, 3.0])]);
    let model = cfg.build_model(0).unwrap();
    for psi in [1, 3, 9, 14] {
        let e1 = level_error(&model, psi, SwOrder::First);
        let e2 = level_error(&model, psi, SwOrder::Second);
        println!("state {psi}: first-order error {e1:.3e}, second-order error {e2:.3e} rad/us");
        assert!(e2 < 0.05 * e1, "state {psi}: {e2:.3e} vs {e1:.3e}");
    }
}

