use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spinbath::bench::{self, BathSpec, ExperimentConfig};
use spinbath::metrics::{lambda_estimate, sw_ratio_estimate, ContinuumParams};
use spinbath::units::{species, BOHR_MAGNETON_ENGINE, UEV};
use spinbath::Error;

#[derive(Parser)]
#[command(name = "spinbath", version, about = "Spin-bath decoherence of molecular spin qudits")]
struct Cli {
    /// Worker threads for the cluster expansion (0 = all cores).
    #[arg(long, global = true, env = "SPINBATH_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// Config file, or the name of a built-in scenario.
    config: String,
    /// Replace a generated bath by one of this many spins at equal density.
    #[arg(long)]
    bath_size: Option<usize>,
    /// Override the bath seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Coherence traces and pair metrics.
    Simulate {
        #[command(flatten)]
        source: Source,
        /// Output directory (default: the config's, else ./spinbath-out/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Δ, clock mismatch and transition moment per pair.
    Delta {
        #[command(flatten)]
        source: Source,
        /// Pairs as `a,b`; default: the config's pairs.
        #[arg(long, num_args = 1.., value_parser = parse_pair)]
        pairs: Vec<(usize, usize)>,
    },
    /// Eigenvalues and local spin expectations.
    Spectrum {
        #[command(flatten)]
        source: Source,
    },
    /// Generate a random bath from a JSON spec.
    BathGen {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the cluster expansion with direct evaluation (small baths).
    Oracle {
        #[command(flatten)]
        source: Source,
    },
    /// Pair table sorted by Δ with half-decay times.
    Scan {
        #[command(flatten)]
        source: Source,
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        states: Vec<usize>,
    },
    /// Print the resolved config (e.g. of a scenario) as JSON.
    Config {
        #[command(flatten)]
        source: Source,
    },
    /// Continuum estimates of the second-order terms.
    Estimate {
        #[arg(value_enum)]
        which: Estimator,
        #[command(flatten)]
        params: EstimateArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Estimator {
    SwRatio,
    Lambda,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, default_value_t = 1.0)]
    m_z: f64,
    /// Level spacing, µeV.
    #[arg(long, default_value_t = 100.0)]
    gap_uev: f64,
    /// System g factor, µ_B.
    #[arg(long, default_value_t = 2.0)]
    gamma_e: f64,
    #[arg(long, default_value = "proton")]
    species: String,
    /// Å.
    #[arg(long, default_value_t = 3.0)]
    r_min: f64,
    /// Å; `inf` allowed for sw-ratio.
    #[arg(long, default_value_t = 20.0)]
    r_max: f64,
    /// Minimum bath-bath distance, Å.
    #[arg(long, default_value_t = 3.0)]
    l: f64,
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected a,b, got '{s}'"))?;
    let p = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("'{x}': {e}"));
    Ok((p(a)?, p(b)?))
}

fn load(source: &Source) -> spinbath::Result<ExperimentConfig> {
    let path = Path::new(&source.config);
    let mut cfg = if path.exists() {
        ExperimentConfig::load(path)?
    } else if bench::SCENARIOS.contains(&source.config.as_str()) {
        bench::scenario(&source.config)?
    } else {
        return Err(Error::Config(format!(
            "'{}' is neither a file nor a scenario ({})",
            source.config,
            bench::SCENARIOS.join(", ")
        )));
    };
    if let Some(n) = source.bath_size {
        cfg = bench::with_bath_size(cfg, n);
    }
    if let (Some(seed), Some(g)) = (source.seed, cfg.bath.generate.as_mut()) {
        g.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::SwValidity { .. } => 3,
        Error::NumericalContract(_) | Error::Quadrature { .. } => 4,
        _ => 2,
    }
}

fn json<T: serde::Serialize>(v: &T) -> spinbath::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> spinbath::Result<()> {
    match cli.command {
        Command::Simulate { source, out } => {
            let cfg = load(&source)?;
            let dir = out
                .or_else(|| cfg.output.dir.clone())
                .unwrap_or_else(|| PathBuf::from("spinbath-out").join(&cfg.name));
            let result = bench::run_experiment(&cfg)?;
            for p in bench::write_outputs(&result, &dir)? {
                eprintln!("wrote {}", p.display());
            }
            println!("alpha,beta,delta,t_half_us");
            for row in bench::scan_rows(&result) {
                let t = row.t_half.map(|t| t.to_string()).unwrap_or_else(|| "beyond-grid".into());
                println!("{},{},{:.4},{}", row.alpha, row.beta, row.delta, t);
            }
        }
        Command::Delta { source, pairs } => {
            let cfg = load(&source)?;
            let pairs = (!pairs.is_empty()).then_some(pairs);
            json(&bench::pair_table(&cfg, pairs.as_deref())?)?;
        }
        Command::Spectrum { source } => json(&bench::spectrum(&load(&source)?)?)?,
        Command::BathGen { spec, out } => {
            let text = std::fs::read_to_string(&spec)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", spec.display())))?;
            let spec: BathSpec = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            let positions = bench::generate_positions(&spec)?;
            let sites: Vec<_> = positions
                .iter()
                .map(|p| serde_json::json!({"position": p, "species": spec.species}))
                .collect();
            let text = serde_json::to_string_pretty(&serde_json::json!({ "sites": sites }))?;
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => println!("{text}"),
            }
        }
        Command::Oracle { source } => {
            let rows = bench::oracle(&load(&source)?)?;
            let worst = rows.iter().map(|r| r.max_deviation).fold(0.0, f64::max);
            json(&rows)?;
            println!("max deviation {worst:.3e}");
        }
        Command::Scan { source, states } => json(&bench::scan_pairs(&load(&source)?, &states)?)?,
        Command::Config { source } => println!("{}", load(&source)?.to_json()?),
        Command::Estimate { which, params } => {
            let (_, gamma_n) = species(&params.species)
                .ok_or_else(|| Error::Config(format!("unknown species '{}'", params.species)))?;
            let p = ContinuumParams {
                m_z: params.m_z,
                gap: params.gap_uev * UEV,
                gamma_e: params.gamma_e * BOHR_MAGNETON_ENGINE,
                gamma_n,
                r_min: params.r_min,
                r_max: params.r_max,
                l: params.l,
            };
            match which {
                Estimator::SwRatio => println!("{}", sw_ratio_estimate(&p)?),
                Estimator::Lambda => json(&lambda_estimate(&p)?)?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
