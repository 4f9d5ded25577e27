//! `L_C(t) = tr(U^β(t)† U^α(t) ρ_C)` for one pair of cluster Hamiltonians.
//!
//! Everything is evaluated in the eigenbasis of `Hα`, where its propagator
//! is diagonal and the `Hβ` propagator is `P = M diag(e^{−iµτ}) M†` with
//! `M = Vα† Vβ`. For the Hahn echo on a maximally mixed state the trace
//! collapses to `(1/d) Σ_{ik} |P_ki|² e^{−i(λ_i − λ_k)τ}`, one matrix
//! product per time point.
//!
//! Both spectra are stored relative to their means. The dropped phase
//! `e^{−i(c_α − c_β)(T_even − T_odd)}` is restored at the end; it is one
//! for every schedule that spends equal time in each branch.

use faer::linalg::matmul::matmul;
use faer::{Accum, Par};
use rayon::prelude::*;

use crate::cce::pulses::{PulseSequence, Schedule};
use crate::spinops::{eigh, Eigh};
use crate::{CMat, Error, Result, C64};

/// Below this dimension products are done with plain loops.
const SMALL: usize = 8;
/// From this dimension on, time points are spread over the worker threads.
const PARALLEL_DIM: usize = 64;

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

fn mul_into(dst: &mut CMat, a: &CMat, b: &CMat) {
    let n = a.nrows();
    if n <= SMALL {
        for i in 0..n {
            for j in 0..b.ncols() {
                let mut s = zero();
                for k in 0..a.ncols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                dst[(i, j)] = s;
            }
        }
    } else {
        matmul(dst.as_mut(), Accum::Replace, a.as_ref(), b.as_ref(), C64::new(1.0, 0.0), Par::Seq);
    }
}

/// Precomputed pair of eigendecompositions.
pub struct EchoKernel {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// Mean of the α spectrum minus mean of the β spectrum.
    shift: f64,
    /// `Vα† Vβ`.
    overlap: CMat,
    /// The same, row-major.
    rows: Vec<C64>,
    /// `Vα† ρ Vα`, `None` for the maximally mixed state.
    rho: Option<CMat>,
}

impl EchoKernel {
    pub fn new(h_alpha: &CMat, h_beta: &CMat, rho: Option<&CMat>) -> Result<Self> {
        if h_alpha.nrows() != h_beta.nrows() || h_alpha.ncols() != h_beta.ncols() {
            return Err(Error::Shape(format!(
                "conditional Hamiltonians are {}x{} and {}x{}",
                h_alpha.nrows(),
                h_alpha.ncols(),
                h_beta.nrows(),
                h_beta.ncols()
            )));
        }
        let ea = eigh(h_alpha)?;
        let eb = eigh(h_beta)?;
        Self::from_eigen(&ea, &eb, rho)
    }

    pub fn from_eigen(ea: &Eigh, eb: &Eigh, rho: Option<&CMat>) -> Result<Self> {
        let d = ea.dim();
        let mut overlap = CMat::zeros(d, d);
        let va_h = ea.vectors.adjoint().to_owned();
        mul_into(&mut overlap, &va_h, &eb.vectors);
        let rho = match rho {
            None => None,
            Some(r) => {
                if r.nrows() != d || r.ncols() != d {
                    return Err(Error::Shape("cluster density has the wrong dimension".into()));
                }
                let mut tmp = CMat::zeros(d, d);
                mul_into(&mut tmp, &va_h, r);
                let mut out = CMat::zeros(d, d);
                mul_into(&mut out, &tmp, &ea.vectors);
                Some(out)
            }
        };
        let rows = (0..d * d).map(|x| overlap[(x / d, x % d)]).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ca, cb) = (mean(&ea.values), mean(&eb.values));
        Ok(EchoKernel {
            alpha: ea.values.iter().map(|x| x - ca).collect(),
            beta: eb.values.iter().map(|x| x - cb).collect(),
            shift: ca - cb,
            overlap,
            rows,
            rho,
        })
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// `P = M diag(e^{−iµτ}) M†`.
    fn beta_propagator(&self, tau: f64, scaled: &mut CMat, out: &mut CMat) {
        let d = self.dim();
        for (m, &mu) in self.beta.iter().enumerate() {
            let b = C64::cis(-mu * tau);
            for k in 0..d {
                scaled[(k, m)] = self.overlap[(k, m)] * b;
            }
        }
        if d <= SMALL {
            for k in 0..d {
                for i in 0..d {
                    let mut s = zero();
                    for m in 0..d {
                        s += scaled[(k, m)] * self.overlap[(i, m)].conj();
                    }
                    out[(k, i)] = s;
                }
            }
        } else {
            matmul(
                out.as_mut(),
                Accum::Replace,
                scaled.as_ref(),
                self.overlap.adjoint(),
                C64::new(1.0, 0.0),
                Par::Seq,
            );
        }
    }

    fn phases(values: &[f64], tau: f64) -> Vec<C64> {
        values.iter().map(|&l| C64::cis(-l * tau)).collect()
    }

    /// Hahn echo on the maximally mixed state for small `d`, on flat
    /// buffers; same operation order as the general path.
    fn echo_small(&self, tau: f64, a: &mut [C64], scaled: &mut [C64]) -> C64 {
        let d = self.dim();
        for (x, &l) in a.iter_mut().zip(&self.alpha) {
            *x = C64::cis(-l * tau);
        }
        for (m, &mu) in self.beta.iter().enumerate() {
            let b = C64::cis(-mu * tau);
            for k in 0..d {
                scaled[k * d + m] = self.rows[k * d + m] * b;
            }
        }
        let mut s = zero();
        for k in 0..d {
            let sk = &scaled[k * d..(k + 1) * d];
            let mut row = zero();
            for i in 0..d {
                let ri = &self.rows[i * d..(i + 1) * d];
                let mut p = zero();
                for (x, y) in sk.iter().zip(ri) {
                    p += x * y.conj();
                }
                row += a[i] * p.norm_sqr();
            }
            s += a[k].conj() * row;
        }
        s / d as f64
    }

    /// `tr(Uβ† Uα ρ)` with both propagators in the α eigenbasis.
    fn trace_with_state(&self, u_alpha: &CMat, u_beta: &CMat) -> C64 {
        let d = self.dim();
        match &self.rho {
            None => {
                let mut s = zero();
                for j in 0..d {
                    for i in 0..d {
                        s += u_beta[(i, j)].conj() * u_alpha[(i, j)];
                    }
                }
                s / d as f64
            }
            Some(rho) => {
                let mut ur = CMat::zeros(d, d);
                mul_into(&mut ur, u_alpha, rho);
                let mut s = zero();
                for j in 0..d {
                    for i in 0..d {
                        s += u_beta[(i, j)].conj() * ur[(i, j)];
                    }
                }
                s
            }
        }
    }

    pub fn evaluate(&self, pulses: &PulseSequence, times: &[f64]) -> Result<Vec<C64>> {
        pulses.validate()?;
        let d = self.dim();
        if d < PARALLEL_DIM {
            let mut buf = Buffers::new(d);
            times.iter().map(|&t| self.value_at(pulses, t, &mut buf)).collect()
        } else {
            times
                .par_iter()
                .map_init(|| Buffers::new(d), |buf, &t| self.value_at(pulses, t, buf))
                .collect()
        }
    }

    fn value_at(&self, pulses: &PulseSequence, t: f64, buf: &mut Buffers) -> Result<C64> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Config(format!("invalid time {t}")));
        }
        if t == 0.0 {
            return Ok(C64::new(1.0, 0.0));
        }
        let d = self.dim();
        let Buffers {
            scaled,
            p,
            flat_a,
            flat_scaled,
        } = buf;
        let value = match &pulses.schedule {
            Schedule::Uniform => {
                let n = pulses.n_segments();
                let tau = t / n as f64;
                if pulses.k == 1 && self.rho.is_none() && d <= SMALL {
                    return Ok(self.echo_small(tau, flat_a, flat_scaled));
                }
                self.beta_propagator(tau, scaled, p);
                let a = Self::phases(&self.alpha, tau);
                if pulses.k == 1 && self.rho.is_none() {
                    let mut s = zero();
                    for k in 0..d {
                        let mut row = zero();
                        for i in 0..d {
                            row += a[i] * p[(k, i)].norm_sqr();
                        }
                        s += a[k].conj() * row;
                    }
                    s / d as f64
                } else if pulses.k == 0 {
                    let ua = CMat::from_fn(d, d, |i, j| if i == j { a[i] } else { zero() });
                    self.trace_with_state(&ua, p)
                } else {
                    // One period: α segment then β segment (and the
                    // reverse for the other branch).
                    let pd = CMat::from_fn(d, d, |i, j| p[(i, j)] * a[j]);
                    let dp = CMat::from_fn(d, d, |i, j| a[i] * p[(i, j)]);
                    let mut ua = pd.clone();
                    let mut ub = dp.clone();
                    let mut tmp = CMat::zeros(d, d);
                    for _ in 1..pulses.k {
                        mul_into(&mut tmp, &pd, &ua);
                        std::mem::swap(&mut ua, &mut tmp);
                        mul_into(&mut tmp, &dp, &ub);
                        std::mem::swap(&mut ub, &mut tmp);
                    }
                    self.trace_with_state(&ua, &ub)
                }
            }
            Schedule::Fractions(_) => {
                let mut ua = CMat::identity(d, d);
                let mut ub = CMat::identity(d, d);
                let mut tmp = CMat::zeros(d, d);
                for (s, &seg) in pulses.segments(t).iter().enumerate() {
                    self.beta_propagator(seg, scaled, p);
                    let a = Self::phases(&self.alpha, seg);
                    let diag = CMat::from_fn(d, d, |i, j| if i == j { a[i] } else { zero() });
                    let (ea, eb) = if s % 2 == 0 { (&diag, &*p) } else { (&*p, &diag) };
                    mul_into(&mut tmp, ea, &ua);
                    std::mem::swap(&mut ua, &mut tmp);
                    mul_into(&mut tmp, eb, &ub);
                    std::mem::swap(&mut ub, &mut tmp);
                }
                self.trace_with_state(&ua, &ub)
            }
        };
        let imbalance = match (&pulses.schedule, pulses.k) {
            (Schedule::Uniform, 0) => t,
            (Schedule::Uniform, _) => 0.0,
            (Schedule::Fractions(_), _) => pulses
                .segments(t)
                .iter()
                .enumerate()
                .map(|(s, x)| if s % 2 == 0 { *x } else { -x })
                .sum(),
        };
        Ok(if imbalance == 0.0 {
            value
        } else {
            value * C64::cis(-self.shift * imbalance)
        })
    }
}

/// Per-thread scratch space for one time point.
struct Buffers {
    scaled: CMat,
    p: CMat,
    flat_a: Vec<C64>,
    flat_scaled: Vec<C64>,
}

impl Buffers {
    fn new(d: usize) -> Self {
        Buffers {
            scaled: CMat::zeros(d, d),
            p: CMat::zeros(d, d),
            flat_a: vec![zero(); d],
            flat_scaled: vec![zero(); d * d],
        }
    }
}

/// Coherence factor of one cluster; `rho = None` means maximally mixed.
pub fn cluster_coherence(
    h_alpha: &CMat,
    h_beta: &CMat,
    pulses: &PulseSequence,
    times: &[f64],
    rho: Option<&CMat>,
) -> Result<Vec<C64>> {
    EchoKernel::new(h_alpha, h_beta, rho)?.evaluate(pulses, times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinops::{propagator, scale, spin_matrices};

    fn direct(ha: &CMat, hb: &CMat, pulses: &PulseSequence, t: f64, rho: Option<&CMat>) -> C64 {
        let d = ha.nrows();
        let mut ua = CMat::identity(d, d);
        let mut ub = CMat::identity(d, d);
        for (s, seg) in pulses.segments(t).into_iter().enumerate() {
            let (first, second) = if s % 2 == 0 { (ha, hb) } else { (hb, ha) };
            ua = propagator(first, seg).unwrap() * ua;
            ub = propagator(second, seg).unwrap() * ub;
        }
        let prod = ub.adjoint() * ua;
        let prod = match rho {
            Some(r) => &prod * r,
            None => scale(&prod, C64::new(1.0 / d as f64, 0.0)),
        };
        crate::spinops::trace(&prod)
    }

    fn random_hermitian(d: usize, seed: u64) -> CMat {
        let mut x = seed;
        let mut next = move || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((x >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a = CMat::from_fn(d, d, |_, _| C64::new(next(), next()));
        let ah = a.adjoint().to_owned();
        scale(&(a + ah), C64::new(0.5, 0.0))
    }

    #[test]
    fn identical_hamiltonians_give_unity() {
        let h = random_hermitian(4, 7);
        for k in 0..3 {
            let l = cluster_coherence(&h, &h, &PulseSequence::cpmg(k), &[0.0, 0.7, 3.1], None).unwrap();
            for v in l {
                assert!((v - C64::new(1.0, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn matches_direct_products() {
        let ha = random_hermitian(4, 1);
        let hb = random_hermitian(4, 2);
        let rho = {
            let r = random_hermitian(4, 3);
            let p = &r * &r;
            let tr = crate::spinops::trace(&p);
            scale(&p, C64::new(1.0, 0.0) / tr)
        };
        let times = [0.0, 0.3, 1.7, 4.2];
        for pulses in [
            PulseSequence::free_induction(),
            PulseSequence::hahn_echo(),
            PulseSequence::cpmg(3),
            PulseSequence::with_fractions(2, vec![0.1, 0.4, 0.3, 0.2]).unwrap(),
        ] {
            for rho in [None, Some(&rho)] {
                let fast = cluster_coherence(&ha, &hb, &pulses, &times, rho).unwrap();
                for (&t, v) in times.iter().zip(&fast) {
                    let d = direct(&ha, &hb, &pulses, t, rho);
                    assert!((v - d).norm() < 1e-12, "{pulses:?} t={t}: {v} vs {d}");
                }
            }
        }
    }

    #[test]
    fn large_dimension_path_matches() {
        let ha = random_hermitian(12, 11);
        let hb = random_hermitian(12, 12);
        let times = [0.0, 0.5, 2.0];
        let fast = cluster_coherence(&ha, &hb, &PulseSequence::hahn_echo(), &times, None).unwrap();
        for (&t, v) in times.iter().zip(&fast) {
            assert!((v - direct(&ha, &hb, &PulseSequence::hahn_echo(), t, None)).norm() < 1e-12);
        }
    }

    #[test]
    fn parallel_time_points_match_direct_products() {
        let ha = random_hermitian(PARALLEL_DIM, 21);
        let hb = random_hermitian(PARALLEL_DIM, 22);
        let times = [0.0, 0.4, 1.3];
        for pulses in [PulseSequence::free_induction(), PulseSequence::hahn_echo(), PulseSequence::cpmg(2)] {
            let fast = cluster_coherence(&ha, &hb, &pulses, &times, None).unwrap();
            for (&t, v) in times.iter().zip(&fast) {
                assert!((v - direct(&ha, &hb, &pulses, t, None)).norm() < 1e-11, "{pulses:?} t={t}");
            }
        }
    }

    #[test]
    fn spin_half_echo_against_explicit_exponentials() {
        // H^α = ω_α I^z, H^β = ω_β I^x; four 2×2 exponentials written out.
        let s = spin_matrices(0.5).unwrap();
        let (wa, wb) = (1.3, 0.8);
        let ha = scale(&s.sz, C64::new(wa, 0.0));
        let hb = scale(&s.sx, C64::new(wb, 0.0));
        let t = 2.4;
        let tau = t / 2.0;
        let ea = |x: f64| {
            let m = [[C64::cis(-wa * x / 2.0), zero()], [zero(), C64::cis(wa * x / 2.0)]];
            m
        };
        let eb = |x: f64| {
            let (c, sn) = ((wb * x / 2.0).cos(), (wb * x / 2.0).sin());
            [[C64::new(c, 0.0), C64::new(0.0, -sn)], [C64::new(0.0, -sn), C64::new(c, 0.0)]]
        };
        let mul = |a: [[C64; 2]; 2], b: [[C64; 2]; 2]| {
            let mut o = [[zero(); 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        o[i][j] += a[i][k] * b[k][j];
                    }
                }
            }
            o
        };
        let ua = mul(eb(tau), ea(tau));
        let ub = mul(ea(tau), eb(tau));
        let mut expected = zero();
        for i in 0..2 {
            for j in 0..2 {
                expected += ub[i][j].conj() * ua[i][j];
            }
        }
        expected /= 2.0;
        let l = cluster_coherence(&ha, &hb, &PulseSequence::hahn_echo(), &[t], None).unwrap();
        assert!((l[0] - expected).norm() < 1e-13);
    }
}
