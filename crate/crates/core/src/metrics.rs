//! Design metrics: the Δ parameter, clock-transition mismatch, numerical
//! commutator norms and the continuum estimates of how large the
//! second-order conditional terms are.

use std::f64::consts::PI;

use crate::cce::{BathState, Cluster, PreparedConditional};
use crate::effective::{ConditionalHamiltonian, SystemEigenbasis};
use crate::geom::{self, Vec3};
use crate::model::SpinModel;
use crate::units::{BOHR_MAGNETON_ENGINE, DIPOLAR_PREFACTOR};
use crate::{CMat, Error, Result};

/// Sites closer than this (Å) count as sharing one position.
pub const POSITION_TOL: f64 = 1e-6;

/// Relative tolerance of the continuum integral in [`lambda_estimate`].
pub const QUADRATURE_RTOL: f64 = 1e-6;

/// Default number of singletons and of pairs sampled by
/// [`strongest_clusters`].
pub const DEFAULT_SAMPLE: usize = 50;

/// System sites grouped by coincident position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteClassPartition {
    pub classes: Vec<Vec<usize>>,
}

impl SiteClassPartition {
    pub fn from_positions(positions: &[Vec3]) -> Self {
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for (i, p) in positions.iter().enumerate() {
            match classes
                .iter_mut()
                .find(|c| geom::distance(&positions[c[0]], p) <= POSITION_TOL)
            {
                Some(c) => c.push(i),
                None => classes.push(vec![i]),
            }
        }
        SiteClassPartition { classes }
    }

    pub fn of(basis: &SystemEigenbasis) -> Self {
        Self::from_positions(&basis.site_positions)
    }

    /// Every site in its own class.
    pub fn singletons(n: usize) -> Self {
        SiteClassPartition {
            classes: (0..n).map(|i| vec![i]).collect(),
        }
    }
}

fn check_pair(basis: &SystemEigenbasis, alpha: usize, beta: usize) -> Result<()> {
    for s in [alpha, beta] {
        if s >= basis.n_states() {
            return Err(Error::IndexOutOfRange {
                what: "system eigenstates",
                index: s,
                len: basis.n_states(),
            });
        }
    }
    Ok(())
}

/// `Σ_µ Γ^i_{ηµ}(⟨β|S_i^µ|β⟩ − ⟨α|S_i^µ|α⟩)` for every site, in µ_B.
fn moment_shifts(basis: &SystemEigenbasis, alpha: usize, beta: usize) -> Vec<Vec3> {
    (0..basis.n_sites())
        .map(|i| {
            let d = geom::sub(&basis.expectation(beta, i), &basis.expectation(alpha, i));
            let m = geom::mat_vec(&basis.site_gammas[i], &d);
            m.map(|x| x / BOHR_MAGNETON_ENGINE)
        })
        .collect()
}

/// Δ in µ_B.
pub fn delta_parameter(
    basis: &SystemEigenbasis,
    partition: &SiteClassPartition,
    alpha: usize,
    beta: usize,
) -> Result<f64> {
    check_pair(basis, alpha, beta)?;
    let shifts = moment_shifts(basis, alpha, beta);
    let mut delta = 0.0;
    for class in &partition.classes {
        for eta in 0..3 {
            let s: f64 = class.iter().map(|&i| shifts[i][eta]).sum();
            delta += s.abs();
        }
    }
    Ok(delta)
}

/// Change of the total z magnetic moment between the two states, µ_B.
pub fn clock_mismatch(basis: &SystemEigenbasis, alpha: usize, beta: usize) -> Result<f64> {
    check_pair(basis, alpha, beta)?;
    Ok(moment_shifts(basis, alpha, beta).iter().map(|m| m[2]).sum::<f64>().abs())
}

/// `|⟨α|Σ_k Γ^k·S_k|β⟩|`, µ_B.
pub fn transition_moment(basis: &SystemEigenbasis, alpha: usize, beta: usize) -> Result<f64> {
    check_pair(basis, alpha, beta)?;
    let mut total = 0.0;
    for eta in 0..3 {
        let mut c = crate::C64::new(0.0, 0.0);
        for i in 0..basis.n_sites() {
            for mu in 0..3 {
                c += basis.matrix_element(alpha, beta, i, mu) * basis.site_gammas[i][eta][mu];
            }
        }
        total += c.norm_sqr();
    }
    Ok(total.sqrt() / BOHR_MAGNETON_ENGINE)
}

/// Per-pair design metrics.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PairMetrics {
    pub pair: (usize, usize),
    pub delta: f64,
    pub clock_mismatch: f64,
    pub transition_moment: f64,
    /// Largest sampled `‖[Hα_C, Hβ_C]‖_F`, when computed.
    pub commutator_norm: Option<f64>,
}

pub fn pair_metrics(
    basis: &SystemEigenbasis,
    partition: &SiteClassPartition,
    alpha: usize,
    beta: usize,
) -> Result<PairMetrics> {
    Ok(PairMetrics {
        pair: (alpha, beta),
        delta: delta_parameter(basis, partition, alpha, beta)?,
        clock_mismatch: clock_mismatch(basis, alpha, beta)?,
        transition_moment: transition_moment(basis, alpha, beta)?,
        commutator_norm: None,
    })
}

/// Summary of commutator norms over sampled clusters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CommutatorStats {
    pub max: f64,
    pub mean: f64,
    /// Largest `‖Hα_C − tr(Hα_C)/d‖_F` over the sample, the natural scale
    /// of the bath couplings seen by the clusters.
    pub scale: f64,
    pub samples: usize,
}

fn traceless_norm(h: &CMat) -> f64 {
    let d = h.nrows();
    let mean = (0..d).map(|i| h[(i, i)]).sum::<crate::C64>() / d as f64;
    let mut s = 0.0;
    for j in 0..d {
        for i in 0..d {
            let mut z = h[(i, j)];
            if i == j {
                z -= mean;
            }
            s += z.norm_sqr();
        }
    }
    s.sqrt()
}

/// Frobenius norms of `[Hα_C, Hβ_C]` over the given clusters, with the
/// bath maximally mixed (no mean-field terms).
pub fn commutator_diagnostic(
    h_alpha: &ConditionalHamiltonian,
    h_beta: &ConditionalHamiltonian,
    clusters: &[Cluster],
) -> Result<CommutatorStats> {
    let state = BathState::MaximallyMixed;
    let a = PreparedConditional::new(h_alpha, &state)?;
    let b = PreparedConditional::new(h_beta, &state)?;
    let mut max: f64 = 0.0;
    let mut sum = 0.0;
    let mut scale: f64 = 0.0;
    for c in clusters {
        if c.order() > 2 {
            return Err(Error::Config(format!(
                "commutator diagnostic takes clusters of order at most 2, got {:?}",
                c.members()
            )));
        }
        let ha = a.cluster_hamiltonian(c)?;
        let hb = b.cluster_hamiltonian(c)?;
        let n = (&ha * &hb - &hb * &ha).norm_l2();
        max = max.max(n);
        sum += n;
        scale = scale.max(traceless_norm(&ha));
    }
    Ok(CommutatorStats {
        max,
        mean: if clusters.is_empty() { 0.0 } else { sum / clusters.len() as f64 },
        scale,
        samples: clusters.len(),
    })
}

/// The `count` bath spins most strongly coupled to the system and the
/// `count` most strongly coupled bath pairs, strongest first.
pub fn strongest_clusters(model: &SpinModel, count: usize) -> Vec<Cluster> {
    let mut singles: Vec<(f64, usize)> = (0..model.n_bath())
        .map(|j| {
            let s: f64 = (0..model.n_system())
                .map(|i| geom::frobenius3(model.system_bath.get(i, j)))
                .sum();
            (s, j)
        })
        .collect();
    singles.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let mut pairs: Vec<(f64, usize, usize)> = model
        .bath_couplings
        .iter()
        .map(|(j, l, t)| (geom::frobenius3(t), j, l))
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    singles
        .iter()
        .take(count)
        .map(|&(_, j)| Cluster::single(j))
        .chain(pairs.iter().take(count).map(|&(_, j, l)| Cluster::pair(j, l)))
        .collect()
}

/// Field that the second-order terms can exert on bath spin `j`, relative
/// to the size of its first-order coupling `Σ_i ‖A^{ij}‖_F · s_i`.
///
/// The first-order coupling magnitude is used as the reference instead of
/// the field `h_j(ψ)` itself, which vanishes for states with zero
/// magnetisation even though the couplings do not.
pub fn hierarchy_ratio_at(model: &SpinModel, ch: &ConditionalHamiltonian, j: usize) -> f64 {
    let first: f64 = (0..model.n_system())
        .map(|i| geom::frobenius3(model.system_bath.get(i, j)) * model.system_sites[i].spin)
        .sum();
    if first == 0.0 {
        return 0.0;
    }
    ch.second_order_field_bound(j) / first
}

/// Largest [`hierarchy_ratio_at`] over the bath.
pub fn hierarchy_ratio(model: &SpinModel, ch: &ConditionalHamiltonian) -> f64 {
    (0..model.n_bath())
        .map(|j| hierarchy_ratio_at(model, ch, j))
        .fold(0.0, f64::max)
}

/// Inputs of the continuum estimates, engine units.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ContinuumParams {
    /// Magnetic quantum number of the state.
    pub m_z: f64,
    /// Typical system level spacing, rad/µs.
    pub gap: f64,
    /// System gyromagnetic factor, rad µs⁻¹ T⁻¹.
    pub gamma_e: f64,
    /// Bath gyromagnetic factor, rad µs⁻¹ T⁻¹.
    pub gamma_n: f64,
    /// Inner radius of the bath shell, Å.
    pub r_min: f64,
    /// Outer radius, Å; may be infinite for the ratio estimate.
    pub r_max: f64,
    /// Minimum bath-bath distance, Å.
    pub l: f64,
}

impl ContinuumParams {
    /// Representative molecular-magnet values: `m_z = 1`, gap 0.1 meV,
    /// `Γ = 2 µ_B`, protons, bath between 3 and 20 Å with 3 Å spacing.
    pub fn typical() -> Self {
        ContinuumParams {
            m_z: 1.0,
            gap: 0.1 * crate::units::MEV,
            gamma_e: 2.0 * BOHR_MAGNETON_ENGINE,
            gamma_n: crate::units::GAMMA_PROTON_SI * 1e-6,
            r_min: 3.0,
            r_max: 20.0,
            l: 3.0,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.r_min > 0.0 && self.r_max >= self.r_min) {
            return Err(Error::Config(format!(
                "need 0 < r_min <= r_max, got r_min = {}, r_max = {}",
                self.r_min, self.r_max
            )));
        }
        if !(self.gap.is_finite() && self.gap > 0.0) {
            return Err(Error::Config(format!("gap must be positive, got {}", self.gap)));
        }
        Ok(())
    }
}

/// Continuum estimate of the second- to first-order system-bath coupling
/// ratio for one bath spin: `(m µ0 ħ Γγ / 2ΔE)(1/r_min² − 1/r_max²)`, with
/// lengths in Å.
pub fn sw_ratio_estimate(p: &ContinuumParams) -> Result<f64> {
    p.check()?;
    let mu0_hbar = 4.0 * PI * DIPOLAR_PREFACTOR;
    let shell = 1.0 / (p.r_min * p.r_min) - 1.0 / (p.r_max * p.r_max);
    Ok(p.m_z * mu0_hbar * p.gamma_e * p.gamma_n / (2.0 * p.gap) * shell)
}

/// Result of [`lambda_estimate`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LambdaEstimate {
    pub value: f64,
    /// The triple integral over the bath shell.
    pub integral: f64,
    /// Estimated absolute error of `integral`.
    pub integral_error: f64,
}

/// Mean ratio of induced to intrinsic bath-bath coupling for a uniform
/// spherical shell of bath spins.
pub fn lambda_estimate(p: &ContinuumParams) -> Result<LambdaEstimate> {
    p.check()?;
    if !p.r_max.is_finite() || p.r_max <= p.r_min {
        return Err(Error::Config("lambda estimate needs a finite r_max > r_min".into()));
    }
    if !(p.l > 0.0) {
        return Err(Error::Config(format!("minimum distance must be positive, got {}", p.l)));
    }
    let (integral, integral_error) = shell_integral(p.r_min, p.r_max, p.l)?;
    let mu0_hbar = 4.0 * PI * DIPOLAR_PREFACTOR;
    let (r2min, r2max) = (p.r_min * p.r_min, p.r_max * p.r_max);
    let pre = mu0_hbar * (p.gamma_e * p.m_z).powi(2) / (8.0 * p.gap) * (r2max - r2min) / (r2max * r2max * r2min * r2min);
    Ok(LambdaEstimate {
        value: pre / integral,
        integral,
        integral_error,
    })
}

/// `∫∫ dr₁ dr₂ ∫_{t}^{π} dθ / (r₁² + r₂² − 2r₁r₂ cos θ)^{3/2}` over
/// `[r_min, r_max]²`, where `t` is the angle at which the two spins sit `l`
/// apart. Returns the value and an error estimate.
pub fn shell_integral(r_min: f64, r_max: f64, l: f64) -> Result<(f64, f64)> {
    let coarse = nested(r_min, r_max, l, 1e-3 * (r_max - r_min) / (l * l));
    let requested = QUADRATURE_RTOL * coarse.0.abs();
    let (value, err) = nested(r_min, r_max, l, 0.1 * requested);
    if !(value > 0.0) || err > requested {
        return Err(Error::Quadrature {
            achieved: err / value.abs(),
            requested: QUADRATURE_RTOL,
        });
    }
    Ok((value, err))
}

/// Breakpoints of `[a, b]` at the listed interior points.
fn pieces(a: f64, b: f64, cuts: &[f64]) -> Vec<(f64, f64)> {
    let mut pts = vec![a];
    let mut inner: Vec<f64> = cuts.iter().copied().filter(|&c| c > a && c < b).collect();
    inner.sort_by(f64::total_cmp);
    pts.extend(inner);
    pts.push(b);
    pts.windows(2).filter(|w| w[1] > w[0]).map(|w| (w[0], w[1])).collect()
}

fn lower_angle(r1: f64, r2: f64, l: f64) -> f64 {
    ((r1 * r1 + r2 * r2 - l * l) / (2.0 * r1 * r2)).clamp(-1.0, 1.0).acos()
}

fn angular(r1: f64, r2: f64, l: f64, tol: f64) -> (f64, f64) {
    let t = lower_angle(r1, r2, l);
    if t >= PI {
        return (0.0, 0.0);
    }
    let a = r1 * r1 + r2 * r2;
    let b = 2.0 * r1 * r2;
    let out = quadrature::integrate(|th| (a - b * th.cos()).powf(-1.5), t, PI, tol);
    (out.integral, out.error_estimate)
}

/// Outer integrals split where the angular limit switches on
/// (`|r₁ − r₂| = l`), so each piece is smooth in its interior.
fn nested(r_min: f64, r_max: f64, l: f64, tol: f64) -> (f64, f64) {
    let width = r_max - r_min;
    let inner_tol = tol / (width * width * 10.0);
    let middle_tol = tol / (width * 10.0);
    let err = std::cell::Cell::new(0.0_f64);
    let middle = |r1: f64| -> f64 {
        let mut total = 0.0;
        for (a, b) in pieces(r_min, r_max, &[r1 - l, r1 + l]) {
            let out = quadrature::integrate(
                |r2| {
                    let (v, e) = angular(r1, r2, l, inner_tol);
                    err.set(err.get().max(e));
                    v
                },
                a,
                b,
                middle_tol,
            );
            total += out.integral;
        }
        total
    };
    let mut value = 0.0;
    let mut outer_err = 0.0;
    for (a, b) in pieces(r_min, r_max, &[r_min + l, r_max - l]) {
        let out = quadrature::integrate(&middle, a, b, tol / 3.0);
        value += out.integral;
        outer_err += out.error_estimate;
    }
    (value, outer_err + err.get() * width * width)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_groups_coincident_sites() {
        let p = SiteClassPartition::from_positions(&[[0.0; 3], [1.0, 0.0, 0.0], [0.0, 0.0, 1e-8]]);
        assert_eq!(p.classes, vec![vec![0, 2], vec![1]]);
    }

    #[test]
    fn ratio_vanishes_on_empty_shell_and_is_linear_in_m() {
        let mut p = ContinuumParams::typical();
        p.r_max = p.r_min;
        assert_eq!(sw_ratio_estimate(&p).unwrap(), 0.0);
        let mut p = ContinuumParams::typical();
        let r1 = sw_ratio_estimate(&p).unwrap();
        p.m_z = 3.0;
        assert!((sw_ratio_estimate(&p).unwrap() - 3.0 * r1).abs() < 1e-15 * r1.abs().max(1.0));
    }

    #[test]
    fn pieces_split_at_interior_cuts() {
        assert_eq!(pieces(0.0, 4.0, &[-1.0, 1.0, 3.0, 5.0]), vec![(0.0, 1.0), (1.0, 3.0), (3.0, 4.0)]);
    }

    #[test]
    fn shell_integral_is_positive_and_converged() {
        let (v, e) = shell_integral(3.0, 10.0, 3.0).unwrap();
        assert!(v > 0.0);
        assert!(e <= QUADRATURE_RTOL * v);
        // Nested scipy quadrature of the same integral.
        assert!((v - 0.540_773_265_067_639_3).abs() < 1e-5 * v);
    }
}
