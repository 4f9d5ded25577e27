use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bench::config::{BathStateConfig, ExperimentConfig, PairSelection, StateSelection};
use crate::cce::{
    cce_coherence, cce_coherence_pairs, enumerate_clusters, exact_coherence, uniform_grid, BathState, CceOptions,
    CoherenceTrace, TraceMeta,
};
use crate::effective::{
    sw_validity_report, ConditionalFactory, ConditionalHamiltonian, ConditionalOptions, NearDegeneracy, SwOrder,
    SystemEigenbasis,
};
use crate::metrics::{commutator_diagnostic, pair_metrics, strongest_clusters, PairMetrics, SiteClassPartition};
use crate::model::SpinModel;
use crate::{Error, Result, C64};

/// Level at which the time axis is normalised.
pub const NORMALIZATION_LEVEL: f64 = 1e-3;

/// Largest trace change tolerated by the cutoff convergence check.
pub const CONVERGENCE_TOL: f64 = 0.01;

/// Everything needed to regenerate a run.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub program: &'static str,
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub states: Vec<usize>,
    pub pairs: Vec<(usize, usize)>,
    pub bath_seeds: Vec<u64>,
    pub n_bath: usize,
    /// rad/µs.
    pub gap_floor: f64,
    pub near_degeneracies: Vec<NearDegeneracy>,
    pub clusters: usize,
    pub guard_hits: usize,
    /// Largest trace change when the pair cutoff is raised by 1.5×.
    pub convergence_change: Option<f64>,
    /// Time at which the fastest trace first drops below the
    /// normalisation level.
    pub t_ref_us: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub traces: Vec<CoherenceTrace>,
    pub metrics: Vec<PairMetrics>,
    pub manifest: Manifest,
}

impl ExperimentResult {
    pub fn trace(&self, alpha: usize, beta: usize) -> Option<&CoherenceTrace> {
        self.traces.iter().find(|t| t.pair == (alpha, beta))
    }
}

/// One row of [`scan_pairs`].
#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub alpha: usize,
    pub beta: usize,
    pub delta: f64,
    pub clock_mismatch: f64,
    pub transition_moment: f64,
    /// `None` when |L| stays above 0.5 on the grid.
    pub t_half: Option<f64>,
}

/// Eigenstates chosen by the selection rule.
pub fn resolve_states(selection: &StateSelection, basis: &SystemEigenbasis, gap_floor: f64) -> Result<Vec<usize>> {
    let n = basis.n_states();
    match selection {
        StateSelection::List(v) => {
            if let Some(&bad) = v.iter().find(|&&s| s >= n) {
                return Err(Error::Config(format!("state {bad} outside the {n}-level spectrum")));
            }
            Ok(v.clone())
        }
        StateSelection::LowMagnetization { max_abs_sz, count } => {
            let e = &basis.energies;
            let picked: Vec<usize> = (0..n)
                .filter(|&s| basis.total_expectation(s)[2].abs() < *max_abs_sz)
                .filter(|&s| {
                    let below = s > 0 && e[s] - e[s - 1] <= gap_floor;
                    let above = s + 1 < n && e[s + 1] - e[s] <= gap_floor;
                    !below && !above
                })
                .take(*count)
                .collect();
            if picked.len() < *count {
                return Err(Error::Config(format!(
                    "only {} nondegenerate states with |Sz| < {max_abs_sz}, {count} requested",
                    picked.len()
                )));
            }
            Ok(picked)
        }
    }
}

pub fn resolve_pairs(selection: &PairSelection, states: &[usize], n_states: usize) -> Result<Vec<(usize, usize)>> {
    match selection {
        PairSelection::All => {
            let mut out = Vec::new();
            for (i, &a) in states.iter().enumerate() {
                for &b in &states[i + 1..] {
                    out.push((a, b));
                }
            }
            Ok(out)
        }
        PairSelection::List(v) => {
            if let Some(&(a, b)) = v.iter().find(|(a, b)| *a >= n_states || *b >= n_states) {
                return Err(Error::Config(format!("pair ({a}, {b}) outside the {n_states}-level spectrum")));
            }
            Ok(v.clone())
        }
    }
}

fn bath_state(cfg: &ExperimentConfig, model: &SpinModel) -> Result<BathState> {
    match &cfg.cce.bath_state {
        BathStateConfig::MaximallyMixed => Ok(BathState::MaximallyMixed),
        BathStateConfig::Polarized(dir) => {
            let spins = model
                .bath_sites
                .iter()
                .map(|s| s.spin())
                .collect::<Result<Vec<_>>>()?;
            BathState::polarized(&spins, &vec![*dir; spins.len()])
        }
    }
}

fn gap_floor(cfg: &ExperimentConfig, basis: &SystemEigenbasis) -> f64 {
    cfg.cce.gap_floor.map(|g| cfg.energy(g)).unwrap_or_else(|| basis.default_gap_floor())
}

/// Conditional Hamiltonians for every state in `states`.
fn conditionals(
    cfg: &ExperimentConfig,
    factory: &ConditionalFactory,
    states: &[usize],
    floor: f64,
    report: &[NearDegeneracy],
) -> Result<BTreeMap<usize, ConditionalHamiltonian>> {
    let order = SwOrder::from_int(cfg.cce.sw_order)?;
    let mut out = BTreeMap::new();
    for &s in states {
        let mut opts = ConditionalOptions::new(order, floor);
        if cfg.cce.allow_near_degenerate {
            opts.exclude = report.iter().filter(|r| r.state == s).map(|r| r.partner).collect();
        }
        out.insert(s, factory.build(s, &opts)?);
    }
    Ok(out)
}

fn involved(pairs: &[(usize, usize)]) -> Vec<usize> {
    let mut v: Vec<usize> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Traces, metrics and manifest for a configured experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let pulses = cfg.pulses.sequence()?;
    let times = uniform_grid(cfg.grid.t_max_us, cfg.grid.points);
    let realizations = cfg.bath.realizations;

    let mut states = Vec::new();
    let mut pairs = Vec::new();
    let mut metrics: Vec<PairMetrics> = Vec::new();
    let mut sums: Vec<Vec<C64>> = Vec::new();
    let mut metas: Vec<TraceMeta> = Vec::new();
    let mut seeds = Vec::new();
    let mut n_bath = 0;
    let mut floor = 0.0;
    let mut report = Vec::new();
    let mut guard_hits = 0;
    let mut n_clusters = 0;
    let mut convergence: Option<f64> = None;

    for r in 0..realizations {
        if let Some(spec) = cfg.bath_spec(r) {
            seeds.push(spec.seed);
        }
        let model = cfg.build_model(r)?;
        let factory = ConditionalFactory::new(&model)?;
        let basis = &factory.basis;
        if r == 0 {
            floor = gap_floor(cfg, basis);
            states = resolve_states(&cfg.states, basis, floor)?;
            pairs = resolve_pairs(&cfg.pairs, &states, basis.n_states())?;
            let partition = SiteClassPartition::of(basis);
            metrics = pairs
                .iter()
                .map(|&(a, b)| pair_metrics(basis, &partition, a, b))
                .collect::<Result<_>>()?;
            report = sw_validity_report(basis, &involved(&pairs), floor);
            n_bath = model.n_bath();
            sums = vec![vec![C64::new(0.0, 0.0); times.len()]; pairs.len()];
        }
        let chs = conditionals(cfg, &factory, &involved(&pairs), floor, &report)?;
        let clusters = enumerate_clusters(&model, cfg.cce.order, cfg.cce.pair_cutoff)?;
        n_clusters = clusters.len();
        let state = bath_state(cfg, &model)?;
        let mut opts = CceOptions::new(cfg.cce.order);
        opts.pair_cutoff = cfg.cce.pair_cutoff;
        opts.seed = cfg.bath_spec(r).map(|s| s.seed);
        let wider = match (cfg.cce.convergence_check, cfg.cce.pair_cutoff) {
            (true, Some(c)) => Some(enumerate_clusters(&model, cfg.cce.order, Some(1.5 * c))?),
            _ => None,
        };
        let sample = if r == 0 && cfg.cce.commutator_samples > 0 {
            strongest_clusters(&model, cfg.cce.commutator_samples)
        } else {
            Vec::new()
        };
        let used = involved(&pairs);
        let list: Vec<&ConditionalHamiltonian> = used.iter().map(|s| &chs[s]).collect();
        let slot = |s: usize| used.binary_search(&s).expect("state is involved");
        let indexed: Vec<(usize, usize)> = pairs.iter().map(|&(a, b)| (slot(a), slot(b))).collect();
        let traces = cce_coherence_pairs(&list, &indexed, &clusters, &pulses, &times, &state, &opts)?;
        if let Some(w) = &wider {
            let wide = cce_coherence_pairs(&list, &indexed, w, &pulses, &times, &state, &opts)?;
            for (t, v) in traces.iter().zip(&wide) {
                let change = t.max_deviation(v);
                convergence = Some(convergence.unwrap_or(0.0).max(change));
            }
        }
        for (p, (&(a, b), trace)) in pairs.iter().zip(traces).enumerate() {
            guard_hits += trace.meta.guard_hits;
            if !sample.is_empty() {
                metrics[p].commutator_norm = Some(commutator_diagnostic(&chs[&a], &chs[&b], &sample)?.max);
            }
            for (s, v) in sums[p].iter_mut().zip(&trace.values) {
                *s += v;
            }
            if r == 0 {
                metas.push(trace.meta);
            } else {
                metas[p].guard_hits += trace.meta.guard_hits;
            }
        }
    }
    if let Some(change) = convergence {
        if change > CONVERGENCE_TOL {
            return Err(Error::NumericalContract(format!(
                "traces moved by {change:.3e} when the pair cutoff was raised by 1.5x"
            )));
        }
    }

    let norm = 1.0 / realizations as f64;
    let traces: Vec<CoherenceTrace> = pairs
        .iter()
        .zip(sums)
        .zip(metas)
        .map(|((&pair, values), meta)| CoherenceTrace {
            times: times.clone(),
            values: values.into_iter().map(|v| v * norm).collect(),
            pair,
            meta,
        })
        .collect();
    let t_ref_us = traces
        .iter()
        .filter_map(|t| t.time_below(NORMALIZATION_LEVEL))
        .min_by(f64::total_cmp);
    Ok(ExperimentResult {
        manifest: Manifest {
            program: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            config: cfg.clone(),
            states,
            pairs,
            bath_seeds: seeds,
            n_bath,
            gap_floor: floor,
            near_degeneracies: report,
            clusters: n_clusters,
            guard_hits,
            convergence_change: convergence,
            t_ref_us,
        },
        traces,
        metrics,
    })
}

/// Pair table for every pair of `states`, sorted by Δ.
pub fn scan_pairs(cfg: &ExperimentConfig, states: &[usize]) -> Result<Vec<ScanRow>> {
    if states.len() < 2 {
        return Ok(Vec::new());
    }
    let mut c = cfg.clone();
    c.states = StateSelection::List(states.to_vec());
    c.pairs = PairSelection::All;
    let result = run_experiment(&c)?;
    Ok(scan_rows(&result))
}

pub fn scan_rows(result: &ExperimentResult) -> Vec<ScanRow> {
    let mut rows: Vec<ScanRow> = result
        .metrics
        .iter()
        .zip(&result.traces)
        .map(|(m, t)| ScanRow {
            alpha: m.pair.0,
            beta: m.pair.1,
            delta: m.delta,
            clock_mismatch: m.clock_mismatch,
            transition_moment: m.transition_moment,
            t_half: t.time_below(0.5),
        })
        .collect();
    rows.sort_by(|a, b| a.delta.total_cmp(&b.delta).then((a.alpha, a.beta).cmp(&(b.alpha, b.beta))));
    rows
}

/// Δ, clock mismatch and transition moment only; no dynamics.
pub fn pair_table(cfg: &ExperimentConfig, pairs: Option<&[(usize, usize)]>) -> Result<Vec<PairMetrics>> {
    let model = cfg.build_system_model()?;
    let basis = crate::effective::diagonalize_system(&model)?;
    let floor = gap_floor(cfg, &basis);
    let pairs = match pairs {
        Some(p) => resolve_pairs(&PairSelection::List(p.to_vec()), &[], basis.n_states())?,
        None => {
            let states = resolve_states(&cfg.states, &basis, floor)?;
            resolve_pairs(&cfg.pairs, &states, basis.n_states())?
        }
    };
    let partition = SiteClassPartition::of(&basis);
    pairs.iter().map(|&(a, b)| pair_metrics(&basis, &partition, a, b)).collect()
}

/// System spectrum in the configured energy unit.
#[derive(Debug, Clone, Serialize)]
pub struct Spectrum {
    pub energies: Vec<f64>,
    /// `[state][site] = ⟨S_x⟩, ⟨S_y⟩, ⟨S_z⟩`.
    pub local_expectations: Vec<Vec<[f64; 3]>>,
    pub total_sz: Vec<f64>,
}

pub fn spectrum(cfg: &ExperimentConfig) -> Result<Spectrum> {
    let basis = crate::effective::diagonalize_system(&cfg.build_system_model()?)?;
    Ok(Spectrum {
        energies: basis.energies.iter().map(|&e| cfg.units.energy.from_engine(e)).collect(),
        total_sz: (0..basis.n_states()).map(|s| basis.total_expectation(s)[2]).collect(),
        local_expectations: basis.local_expectations,
    })
}

/// CCE against direct evaluation for one pair.
#[derive(Debug, Clone, Serialize)]
pub struct OracleRow {
    pub alpha: usize,
    pub beta: usize,
    pub max_deviation: f64,
}

/// Compare the configured CCE with the exact coherence for every pair
/// (first bath realisation; the bath must be small).
pub fn oracle(cfg: &ExperimentConfig) -> Result<Vec<OracleRow>> {
    cfg.validate()?;
    let pulses = cfg.pulses.sequence()?;
    let times = uniform_grid(cfg.grid.t_max_us, cfg.grid.points);
    let model = cfg.build_model(0)?;
    let factory = ConditionalFactory::new(&model)?;
    let floor = gap_floor(cfg, &factory.basis);
    let states = resolve_states(&cfg.states, &factory.basis, floor)?;
    let pairs = resolve_pairs(&cfg.pairs, &states, factory.basis.n_states())?;
    let report = sw_validity_report(&factory.basis, &involved(&pairs), floor);
    let chs = conditionals(cfg, &factory, &involved(&pairs), floor, &report)?;
    let clusters = enumerate_clusters(&model, cfg.cce.order, cfg.cce.pair_cutoff)?;
    let state = bath_state(cfg, &model)?;
    let opts = CceOptions::new(cfg.cce.order);
    pairs
        .iter()
        .map(|&(a, b)| {
            let approx = cce_coherence(&chs[&a], &chs[&b], &clusters, &pulses, &times, &state, &opts)?;
            let exact = exact_coherence(&chs[&a], &chs[&b], &pulses, &times, &state)?;
            Ok(OracleRow {
                alpha: a,
                beta: b,
                max_deviation: approx.max_deviation(&exact),
            })
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "beyond-grid".into())
}

/// Manifest JSON and its SHA-256.
pub fn manifest_json(manifest: &Manifest) -> Result<(String, String)> {
    let text = serde_json::to_string_pretty(manifest)?;
    let hash = hex::encode(Sha256::digest(text.as_bytes()));
    Ok((text, hash))
}

pub fn write_trace_csv(out: &mut impl Write, trace: &CoherenceTrace, t_ref: Option<f64>, hash: &str) -> Result<()> {
    writeln!(out, "# manifest_sha256: {hash}")?;
    writeln!(out, "# pair: {} {}", trace.pair.0, trace.pair.1)?;
    writeln!(out, "t_us,t_norm,re_L,im_L,abs_L,abs_L_sq")?;
    for (t, v) in trace.times.iter().zip(&trace.values) {
        let t_norm = t_ref.map(|r| (t / r).to_string()).unwrap_or_else(|| "nan".into());
        writeln!(out, "{t},{t_norm},{},{},{},{}", v.re, v.im, v.norm(), v.norm_sqr())?;
    }
    Ok(())
}

/// Writes `manifest.json`, one `pair_<a>_<b>.csv` per trace and
/// `summary.csv`; returns the written paths.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let (manifest, hash) = manifest_json(&result.manifest)?;
    let mut written = Vec::new();
    let path = dir.join("manifest.json");
    std::fs::write(&path, &manifest)?;
    written.push(path);
    for trace in &result.traces {
        let path = dir.join(format!("pair_{}_{}.csv", trace.pair.0, trace.pair.1));
        let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
        write_trace_csv(&mut f, trace, result.manifest.t_ref_us, &hash)?;
        f.flush()?;
        written.push(path);
    }
    let path = dir.join("summary.csv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(f, "# manifest_sha256: {hash}")?;
    writeln!(f, "alpha,beta,delta,clock_mismatch,transition_moment,commutator_norm,t_half_us,t_1e-3_us")?;
    for (m, t) in result.metrics.iter().zip(&result.traces) {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{}",
            m.pair.0,
            m.pair.1,
            m.delta,
            m.clock_mismatch,
            m.transition_moment,
            m.commutator_norm.map(|x| x.to_string()).unwrap_or_default(),
            fmt_opt(t.time_below(0.5)),
            fmt_opt(t.time_below(NORMALIZATION_LEVEL)),
        )?;
    }
    f.flush()?;
    written.push(path);
    Ok(written)
}
