//! The cluster correlation expansion.
//!
//! `L̃_C = L_C / Π_{S ⊊ C} L̃_S` (the empty cluster included) and
//! `L ≈ Π_C L̃_C` over the enumerated family. Clusters are processed level
//! by level; within a level the work is split in fixed-size chunks whose
//! partial products are multiplied in canonical order, so the result does
//! not depend on the number of worker threads.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::cce::cluster::{canonical_sort, check_closure, Cluster};
use crate::cce::hamiltonian::{cluster_density, PreparedConditional};
use crate::cce::kernel::EchoKernel;
use crate::cce::pulses::PulseSequence;
use crate::cce::state::BathState;
use crate::cce::trace::{CoherenceTrace, TraceMeta};
use crate::effective::ConditionalHamiltonian;
use crate::spinops::eigh;
use crate::{Error, Result, C64};

/// Denominators smaller than this make the cluster contribute one.
pub const DIVISION_GUARD: f64 = 1e-12;

const CHUNK: usize = 64;
/// Chunks evaluated between two folds into the running product.
const BLOCK: usize = 64;

fn one() -> C64 {
    C64::new(1.0, 0.0)
}

struct Engine<'a> {
    prepared: Vec<PreparedConditional<'a>>,
    pairs: &'a [(usize, usize)],
    state: &'a BathState,
    pulses: &'a PulseSequence,
    times: &'a [f64],
}

impl Engine<'_> {
    /// Raw cluster coherence of every pair, pair-major.
    fn raw(&self, cluster: &Cluster) -> Result<Vec<C64>> {
        let eig = self
            .prepared
            .iter()
            .map(|p| eigh(&p.cluster_hamiltonian(cluster)?))
            .collect::<Result<Vec<_>>>()?;
        let rho = cluster_density(self.state, self.prepared[0].ch.spins(), cluster);
        let mut out = Vec::with_capacity(self.pairs.len() * self.times.len());
        for &(a, b) in self.pairs {
            out.extend(EchoKernel::from_eigen(&eig[a], &eig[b], rho.as_ref())?.evaluate(self.pulses, self.times)?);
        }
        Ok(out)
    }
}

/// Stored reduced contributions of the lower levels.
#[derive(Default)]
struct Store {
    values: Vec<Vec<C64>>,
    index: HashMap<Vec<usize>, usize>,
}

impl Store {
    fn get(&self, members: &[usize]) -> Option<&Vec<C64>> {
        self.index.get(members).map(|&i| &self.values[i])
    }

    fn insert(&mut self, members: Vec<usize>, v: Vec<C64>) {
        self.index.insert(members, self.values.len());
        self.values.push(v);
    }
}

/// Options for [`cce_coherence`].
#[derive(Debug, Clone)]
pub struct CceOptions {
    /// Largest cluster size kept in the product.
    pub max_order: usize,
    /// Recorded in the trace metadata only.
    pub pair_cutoff: Option<f64>,
    pub seed: Option<u64>,
}

impl CceOptions {
    pub fn new(max_order: usize) -> Self {
        CceOptions {
            max_order,
            pair_cutoff: None,
            seed: None,
        }
    }
}

pub fn cce_coherence(
    h_alpha: &ConditionalHamiltonian,
    h_beta: &ConditionalHamiltonian,
    clusters: &[Cluster],
    pulses: &PulseSequence,
    times: &[f64],
    state: &BathState,
    options: &CceOptions,
) -> Result<CoherenceTrace> {
    let mut traces = cce_coherence_pairs(&[h_alpha, h_beta], &[(0, 1)], clusters, pulses, times, state, options)?;
    Ok(traces.remove(0))
}

/// [`cce_coherence`] for several pairs at once. `pairs` index into
/// `conditionals`; each cluster Hamiltonian is diagonalized once per
/// conditional and shared by every pair that uses it. Each trace is
/// identical to the one the single-pair call returns.
pub fn cce_coherence_pairs(
    conditionals: &[&ConditionalHamiltonian],
    pairs: &[(usize, usize)],
    clusters: &[Cluster],
    pulses: &PulseSequence,
    times: &[f64],
    state: &BathState,
    options: &CceOptions,
) -> Result<Vec<CoherenceTrace>> {
    if options.max_order == 0 {
        return Err(Error::Config("CCE order must be at least 1".into()));
    }
    let Some(first) = conditionals.first() else {
        return Err(Error::Config("no conditional Hamiltonians given".into()));
    };
    if conditionals.iter().any(|c| c.spins() != first.spins()) {
        return Err(Error::Shape("conditional Hamiltonians describe different baths".into()));
    }
    if let Some(&(a, b)) = pairs.iter().find(|&&(a, b)| a.max(b) >= conditionals.len()) {
        return Err(Error::IndexOutOfRange {
            what: "conditional Hamiltonians",
            index: a.max(b),
            len: conditionals.len(),
        });
    }
    pulses.validate()?;
    let n_bath = first.n_bath();
    let mut family: Vec<Cluster> = clusters
        .iter()
        .filter(|c| c.order() >= 1 && c.order() <= options.max_order)
        .cloned()
        .collect();
    if let Some(bad) = family.iter().flat_map(|c| c.members()).find(|&&m| m >= n_bath) {
        return Err(Error::IndexOutOfRange {
            what: "bath sites",
            index: *bad,
            len: n_bath,
        });
    }
    canonical_sort(&mut family);
    family.dedup();
    check_closure(&family)?;

    let engine = Engine {
        prepared: conditionals
            .iter()
            .map(|c| PreparedConditional::new(c, state))
            .collect::<Result<_>>()?,
        pairs,
        state,
        pulses,
        times,
    };
    let nt = times.len();
    let width = pairs.len() * nt;
    let empty = engine.raw(&Cluster::empty())?;
    let mut product = empty.clone();
    let mut store = Store::default();
    store.insert(Vec::new(), empty);
    let mut guard_hits = vec![0usize; pairs.len()];

    let top = family.last().map(|c| c.order()).unwrap_or(0);
    let mut start = 0;
    for order in 1..=top {
        let end = start + family[start..].iter().take_while(|c| c.order() == order).count();
        let level = &family[start..end];
        start = end;
        let keep = order < top;
        let mut kept_iter = level.iter();
        for block in level.chunks(CHUNK * BLOCK) {
            let store_ref = &store;
            let chunks: Vec<ChunkResult> = block
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut partial = vec![one(); width];
                    let mut kept = Vec::new();
                    let mut hits = vec![0; pairs.len()];
                    for c in chunk {
                        let raw = engine.raw(c)?;
                        let reduced = reduce(c, raw, nt, store_ref, &mut hits);
                        for (p, r) in partial.iter_mut().zip(&reduced) {
                            *p *= r;
                        }
                        if keep {
                            kept.push(reduced);
                        }
                    }
                    Ok(ChunkResult { partial, kept, hits })
                })
                .collect::<Result<Vec<_>>>()?;
            for chunk in chunks {
                for (p, r) in product.iter_mut().zip(&chunk.partial) {
                    *p *= r;
                }
                for (g, h) in guard_hits.iter_mut().zip(&chunk.hits) {
                    *g += h;
                }
                for v in chunk.kept {
                    let c = kept_iter.next().expect("one stored value per cluster");
                    store.insert(c.members().to_vec(), v);
                }
            }
        }
    }

    Ok(pairs
        .iter()
        .enumerate()
        .zip(guard_hits)
        .map(|((p, &(a, b)), hits)| CoherenceTrace {
            times: times.to_vec(),
            values: product[p * nt..(p + 1) * nt].to_vec(),
            pair: (conditionals[a].state_index, conditionals[b].state_index),
            meta: TraceMeta {
                method: "cce".into(),
                cce_order: options.max_order,
                pair_cutoff: options.pair_cutoff,
                seed: options.seed,
                pulse_k: pulses.k,
                sw_order: if conditionals[a].includes_second_order() { 2 } else { 1 },
                clusters: family.len(),
                guard_hits: hits,
            },
        })
        .collect())
}

struct ChunkResult {
    partial: Vec<C64>,
    kept: Vec<Vec<C64>>,
    hits: Vec<usize>,
}

/// Divide by every stored proper sub-cluster.
fn reduce(cluster: &Cluster, mut raw: Vec<C64>, nt: usize, store: &Store, hits: &mut [usize]) -> Vec<C64> {
    let s = cluster.order();
    let mut denom = vec![one(); raw.len()];
    for mask in 0..(1usize << s) - 1 {
        let sub = cluster.subset(mask);
        if let Some(v) = store.get(sub.members()) {
            for (d, x) in denom.iter_mut().zip(v) {
                *d *= x;
            }
        }
    }
    for (i, (r, d)) in raw.iter_mut().zip(&denom).enumerate() {
        if d.norm() < DIVISION_GUARD {
            *r = one();
            hits[i / nt] += 1;
        } else {
            *r /= d;
        }
    }
    raw
}
