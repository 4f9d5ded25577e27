use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{self, Vec3};
use crate::model::SpinSite;
use crate::units::species;
use crate::{Error, Result};

/// Rejection-sampling budget per spin before switching to relaxation.
pub const ATTEMPTS_PER_SPIN: usize = 2_000;
/// Relaxation sweeps allowed to remove the remaining overlaps.
pub const MAX_SWEEPS: usize = 20_000;
/// Random close packing of hard spheres; denser requests are refused.
const CLOSE_PACKING: f64 = 0.64;

/// Random bath: `n` spins uniformly in a ball, pairwise at least
/// `min_dist` apart and at least `min_dist` from every excluded point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSpec {
    pub n: usize,
    /// Å.
    pub radius: f64,
    /// Å.
    pub min_dist: f64,
    #[serde(default = "default_species")]
    pub species: String,
    #[serde(default)]
    pub seed: u64,
    /// Usually the system site positions.
    #[serde(default)]
    pub exclusion: Vec<Vec3>,
}

fn default_species() -> String {
    "proton".into()
}

impl BathSpec {
    pub fn new(n: usize, radius: f64, min_dist: f64, seed: u64) -> Self {
        BathSpec {
            n,
            radius,
            min_dist,
            species: default_species(),
            seed,
            exclusion: Vec::new(),
        }
    }

    pub fn with_exclusion(mut self, points: Vec<Vec3>) -> Self {
        self.exclusion = points;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("bath must contain at least one spin".into()));
        }
        if !(self.min_dist > 0.0 && self.radius > self.min_dist) {
            return Err(Error::Config(format!(
                "bath needs radius > min_dist > 0, got radius {} and min_dist {}",
                self.radius, self.min_dist
            )));
        }
        if species(&self.species).is_none() {
            return Err(Error::Config(format!("unknown bath species '{}'", self.species)));
        }
        Ok(())
    }
}

/// Bucket grid with cell edge `min_dist`, so a proximity query only visits
/// the 27 surrounding cells.
struct Grid {
    cell: f64,
    cells: std::collections::HashMap<[i64; 3], Vec<Vec3>>,
}

impl Grid {
    fn key(&self, p: &Vec3) -> [i64; 3] {
        p.map(|x| (x / self.cell).floor() as i64)
    }

    fn too_close(&self, p: &Vec3, min: f64) -> bool {
        let k = self.key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(pts) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        if pts.iter().any(|q| geom::distance(p, q) < min) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    fn insert(&mut self, p: Vec3) {
        let k = self.key(&p);
        self.cells.entry(k).or_default().push(p);
    }
}

/// Positions only; see [`generate_bath`].
///
/// Random sequential placement first. Spins that do not fit within the
/// attempt budget are dropped in anywhere and the overlaps are then pushed
/// apart pairwise until every constraint holds, which reaches packings that
/// sequential placement alone jams below.
pub fn generate_positions(spec: &BathSpec) -> Result<Vec<Vec3>> {
    spec.validate()?;
    let half = spec.min_dist / 2.0;
    let fraction = spec.n as f64 * half.powi(3) / (spec.radius + half).powi(3);
    if fraction > CLOSE_PACKING {
        return Err(Error::Generation(format!(
            "{} spins {} Å apart cannot fit in a {} Å ball (packing fraction {fraction:.2})",
            spec.n, spec.min_dist, spec.radius
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut grid = Grid {
        cell: spec.min_dist,
        cells: Default::default(),
    };
    let mut out = Vec::with_capacity(spec.n);
    let budget = ATTEMPTS_PER_SPIN.saturating_mul(spec.n);
    let mut attempts = 0usize;
    while out.len() < spec.n && attempts < budget {
        attempts += 1;
        let p = sample_ball(&mut rng, spec.radius);
        if excluded(spec, &p) || grid.too_close(&p, spec.min_dist) {
            continue;
        }
        grid.insert(p);
        out.push(p);
    }
    if out.len() < spec.n {
        while out.len() < spec.n {
            let p = sample_ball(&mut rng, spec.radius);
            if !excluded(spec, &p) {
                out.push(p);
            }
        }
        relax(spec, &mut out, &mut rng)?;
    }
    Ok(out)
}

fn sample_ball(rng: &mut ChaCha8Rng, radius: f64) -> Vec3 {
    loop {
        let p: Vec3 = std::array::from_fn(|_| radius * (2.0 * rng.random::<f64>() - 1.0));
        if geom::dot(&p, &p) <= radius * radius {
            return p;
        }
    }
}

fn excluded(spec: &BathSpec, p: &Vec3) -> bool {
    spec.exclusion.iter().any(|q| geom::distance(p, q) < spec.min_dist)
}

/// Pairwise overlap removal with the ball and exclusion zones as hard walls.
fn relax(spec: &BathSpec, pts: &mut [Vec3], rng: &mut ChaCha8Rng) -> Result<()> {
    // Push to slightly beyond contact so rounding cannot leave a pair short.
    let target = spec.min_dist * (1.0 + 1e-9);
    let reach = spec.min_dist * (1.0 + 1e-6);
    for _ in 0..MAX_SWEEPS {
        let mut buckets: std::collections::HashMap<[i64; 3], Vec<usize>> = Default::default();
        for (i, p) in pts.iter().enumerate() {
            buckets.entry(p.map(|x| (x / spec.min_dist).floor() as i64)).or_default().push(i);
        }
        let mut shift = vec![[0.0; 3]; pts.len()];
        let mut overlaps = 0usize;
        for (i, p) in pts.iter().enumerate() {
            let k = p.map(|x| (x / spec.min_dist).floor() as i64);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(idx) = buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) else {
                            continue;
                        };
                        for &j in idx.iter().filter(|&&j| j > i) {
                            let d = geom::distance(p, &pts[j]);
                            if d >= spec.min_dist {
                                continue;
                            }
                            overlaps += 1;
                            let u = if d > 1e-12 {
                                std::array::from_fn(|a| (pts[j][a] - p[a]) / d)
                            } else {
                                random_direction(rng)
                            };
                            let push = (target - d) / 2.0;
                            for a in 0..3 {
                                shift[i][a] -= push * u[a];
                                shift[j][a] += push * u[a];
                            }
                        }
                    }
                }
            }
        }
        if overlaps == 0 {
            return Ok(());
        }
        for (p, s) in pts.iter_mut().zip(&shift) {
            for a in 0..3 {
                p[a] += s[a];
            }
            let r = geom::norm(p);
            if r > spec.radius {
                *p = p.map(|x| x * spec.radius / r);
            }
            for q in &spec.exclusion {
                let d = geom::distance(p, q);
                if d < spec.min_dist {
                    let u = if d > 1e-12 {
                        std::array::from_fn(|a| (p[a] - q[a]) / d)
                    } else {
                        random_direction(rng)
                    };
                    *p = std::array::from_fn(|a| q[a] + reach * u[a]);
                }
            }
        }
    }
    Err(Error::Generation(format!(
        "overlaps remain after {MAX_SWEEPS} relaxation sweeps ({} spins, {} Å apart, {} Å ball)",
        spec.n, spec.min_dist, spec.radius
    )))
}

fn random_direction(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = sample_ball(rng, 1.0);
        let n = geom::norm(&v);
        if n > 1e-3 {
            return v.map(|x| x / n);
        }
    }
}

/// Deterministic for a fixed spec.
pub fn generate_bath(spec: &BathSpec) -> Result<Vec<SpinSite>> {
    let (spin, gamma) = species(&spec.species).ok_or_else(|| Error::Config(format!("unknown species '{}'", spec.species)))?;
    Ok(generate_positions(spec)?
        .into_iter()
        .map(|p| SpinSite::isotropic(p, spin, gamma, spec.species.clone()))
        .collect())
}
