#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinbath::bench::{self, BathSpec, ExperimentConfig};
use spinbath::cce::{enumerate_clusters, Cluster};
use spinbath::effective::{ConditionalFactory, ConditionalHamiltonian, ConditionalOptions, SwOrder};
use spinbath::model::SpinModel;
use spinbath::spinops::{adjoint, scale};
use spinbath::{CMat, C64};

pub fn random_hermitian(d: usize, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = CMat::from_fn(d, d, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    scale(&(&a + &adjoint(&a)), C64::new(0.5, 0.0))
}

/// Built-in scenario with a generated bath of `n` spins in a `radius` ball.
pub fn with_small_bath(name: &str, n: usize, radius: f64, seed: u64) -> ExperimentConfig {
    let mut cfg = bench::scenario(name).unwrap();
    let exclusion = cfg.system.sites.iter().map(|s| s.position).collect();
    cfg.bath.generate = Some(BathSpec::new(n, radius, 3.0, seed).with_exclusion(exclusion));
    cfg
}

/// Conditional Hamiltonians of `states`, in order, plus the model and all
/// clusters up to `order`.
pub struct Setup {
    pub model: SpinModel,
    pub conditionals: Vec<ConditionalHamiltonian>,
    pub clusters: Vec<Cluster>,
}

pub fn setup(cfg: &ExperimentConfig, states: &[usize], sw: SwOrder, order: usize) -> Setup {
    let model = cfg.build_model(0).unwrap();
    let factory = ConditionalFactory::new(&model).unwrap();
    let floor = factory.basis.default_gap_floor();
    let conditionals = states
        .iter()
        .map(|&s| factory.build(s, &ConditionalOptions::new(sw, floor)).unwrap())
        .collect();
    let clusters = enumerate_clusters(&model, order, None).unwrap();
    Setup {
        model,
        conditionals,
        clusters,
    }
}

/// Giant spin with `n` protons close enough to matter on the giant-spin
/// timescale.
pub fn giant_small(n: usize, seed: u64) -> ExperimentConfig {
    with_small_bath("giant_spin", n, 7.0, seed)
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
