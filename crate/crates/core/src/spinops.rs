//! Dense complex kernels specialised for spin systems.
//!
//! Basis convention, fixed crate-wide: within a site the states are ordered
//! by descending magnetic quantum number (m = s, s-1, ..., -s); product
//! spaces list sites in declaration order, the first site being the most
//! significant factor of the Kronecker product.

use faer::Side;

use crate::{CMat, Error, Result, C64};

/// Largest spin quantum number accepted by [`spin_matrices`].
pub const MAX_SPIN: f64 = 20.0;

/// Relative Frobenius tolerance for accepting a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// A spin quantum number, stored as `2s` so half-integers are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Spin {
    twice: u32,
}

impl Spin {
    pub const HALF: Spin = Spin { twice: 1 };

    pub fn new(s: f64) -> Result<Self> {
        let twice = 2.0 * s;
        if !s.is_finite() || s < 0.0 || s > MAX_SPIN || (twice - twice.round()).abs() > 1e-9 {
            return Err(Error::InvalidSpin(s));
        }
        Ok(Spin {
            twice: twice.round() as u32,
        })
    }

    pub fn from_twice(twice: u32) -> Result<Self> {
        Self::new(twice as f64 / 2.0)
    }

    pub fn value(self) -> f64 {
        self.twice as f64 / 2.0
    }

    pub fn twice(self) -> u32 {
        self.twice
    }

    /// Hilbert-space dimension 2s+1.
    pub fn dim(self) -> usize {
        self.twice as usize + 1
    }

    /// s(s+1).
    pub fn casimir(self) -> f64 {
        let s = self.value();
        s * (s + 1.0)
    }
}

impl std::fmt::Display for Spin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.twice % 2 == 0 {
            write!(f, "{}", self.twice / 2)
        } else {
            write!(f, "{}/2", self.twice)
        }
    }
}

/// Angular-momentum matrices for one spin in the |s, m⟩ basis.
#[derive(Debug, Clone)]
pub struct SpinMatrixSet {
    pub spin: Spin,
    pub sx: CMat,
    pub sy: CMat,
    pub sz: CMat,
}

impl SpinMatrixSet {
    pub fn dim(&self) -> usize {
        self.spin.dim()
    }

    /// `[sx, sy, sz]`, indexable by Cartesian axis.
    pub fn components(&self) -> [&CMat; 3] {
        [&self.sx, &self.sy, &self.sz]
    }
}

pub fn spin_matrices(s: f64) -> Result<SpinMatrixSet> {
    Ok(spin_matrices_for(Spin::new(s)?))
}

pub fn spin_matrices_for(spin: Spin) -> SpinMatrixSet {
    let dim = spin.dim();
    let s = spin.value();
    let m_of = |n: usize| s - n as f64;
    // S+ |m> = sqrt(s(s+1) - m(m+1)) |m+1>; |m+1> sits one index above |m>.
    let raise = |row: usize, col: usize| -> f64 {
        if row + 1 == col {
            let m = m_of(col);
            (spin.casimir() - m * (m + 1.0)).max(0.0).sqrt()
        } else {
            0.0
        }
    };
    let sx = CMat::from_fn(dim, dim, |i, j| C64::new(0.5 * (raise(i, j) + raise(j, i)), 0.0));
    let sy = CMat::from_fn(dim, dim, |i, j| C64::new(0.0, -0.5 * (raise(i, j) - raise(j, i))));
    let sz = CMat::from_fn(dim, dim, |i, j| {
        if i == j {
            C64::new(m_of(i), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    SpinMatrixSet { spin, sx, sy, sz }
}

/// An operator on a product space together with its factor dimensions.
#[derive(Debug, Clone)]
pub struct ProductOperator {
    pub site_dims: Vec<usize>,
    pub matrix: CMat,
}

impl ProductOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `1 ⊗ … ⊗ op ⊗ … ⊗ 1` with `op` acting on `site`.
pub fn embed(op: &CMat, site: usize, site_dims: &[usize]) -> Result<ProductOperator> {
    let Some(&d_site) = site_dims.get(site) else {
        return Err(Error::Shape(format!(
            "site {site} outside a {}-site product space",
            site_dims.len()
        )));
    };
    if op.nrows() != d_site || op.ncols() != d_site {
        return Err(Error::Shape(format!(
            "operator is {}x{} but site {site} has dimension {d_site}",
            op.nrows(),
            op.ncols()
        )));
    }
    let left: usize = site_dims[..site].iter().product();
    let right: usize = site_dims[site + 1..].iter().product();
    let total = left * d_site * right;
    let mut out = CMat::zeros(total, total);
    for a in 0..left {
        for j in 0..d_site {
            for i in 0..d_site {
                let v = op[(i, j)];
                if v == C64::new(0.0, 0.0) {
                    continue;
                }
                let base_i = (a * d_site + i) * right;
                let base_j = (a * d_site + j) * right;
                for c in 0..right {
                    out[(base_i + c, base_j + c)] = v;
                }
            }
        }
    }
    Ok(ProductOperator {
        site_dims: site_dims.to_vec(),
        matrix: out,
    })
}

/// `h += op` where `op` acts on the listed (strictly ascending) sites of a
/// product space and as the identity elsewhere; `op` is written in the
/// product basis of those sites, in the order given.
pub fn add_local_operator(h: &mut CMat, site_dims: &[usize], sites: &[usize], op: &CMat) -> Result<()> {
    let total: usize = site_dims.iter().product();
    if h.nrows() != total || h.ncols() != total {
        return Err(Error::Shape(format!(
            "target is {}x{} but the product space has dimension {total}",
            h.nrows(),
            h.ncols()
        )));
    }
    if sites.windows(2).any(|w| w[0] >= w[1]) || sites.last().is_some_and(|&s| s >= site_dims.len()) {
        return Err(Error::Shape(format!("invalid local site list {sites:?}")));
    }
    let local: usize = sites.iter().map(|&s| site_dims[s]).product();
    if op.nrows() != local || op.ncols() != local {
        return Err(Error::Shape(format!(
            "local operator is {}x{}, sites span dimension {local}",
            op.nrows(),
            op.ncols()
        )));
    }
    let mut strides = vec![1usize; site_dims.len()];
    for k in (0..site_dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * site_dims[k + 1];
    }
    // Offset in the full index of every local basis state.
    let mut offsets = vec![0usize; local];
    for (r, off) in offsets.iter_mut().enumerate() {
        let mut rem = r;
        for &s in sites.iter().rev() {
            let d = site_dims[s];
            *off += (rem % d) * strides[s];
            rem /= d;
        }
    }
    for base in 0..total {
        if sites.iter().any(|&s| (base / strides[s]) % site_dims[s] != 0) {
            continue;
        }
        for (c, &oc) in offsets.iter().enumerate() {
            for (r, &or) in offsets.iter().enumerate() {
                let v = op[(r, c)];
                if v != C64::new(0.0, 0.0) {
                    h[(base + or, base + oc)] += v;
                }
            }
        }
    }
    Ok(())
}

/// `c · a`.
pub fn scale(a: &CMat, c: C64) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * c)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ra, ca) = (a.nrows(), a.ncols());
    let (rb, cb) = (b.nrows(), b.ncols());
    CMat::from_fn(ra * rb, ca * cb, |i, j| a[(i / rb, j / cb)] * b[(i % rb, j % cb)])
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn adjoint(a: &CMat) -> CMat {
    a.adjoint().to_owned()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn frobenius(a: &CMat) -> f64 {
    a.norm_l2()
}

pub fn trace(a: &CMat) -> C64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// ‖A − A†‖_F / ‖A‖_F (zero for the zero matrix).
pub fn hermitian_residual(a: &CMat) -> f64 {
    let norm = a.norm_l2();
    if norm == 0.0 {
        return 0.0;
    }
    (a - a.adjoint()).norm_l2() / norm
}

/// ‖U†U − 1‖_F.
pub fn unitarity_residual(u: &CMat) -> f64 {
    (u.adjoint() * u - identity(u.ncols())).norm_l2()
}

/// Eigendecomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct Eigh {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Unitary matrix whose columns are the eigenvectors.
    pub vectors: CMat,
}

impl Eigh {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V diag(f(λ)) V†`.
    pub fn apply_fn(&self, f: impl Fn(f64) -> C64) -> CMat {
        let n = self.dim();
        let mut scaled = self.vectors.clone();
        for (j, &lambda) in self.values.iter().enumerate() {
            let w = f(lambda);
            for i in 0..n {
                scaled[(i, j)] *= w;
            }
        }
        &scaled * self.vectors.adjoint()
    }

    /// exp(−iHt).
    pub fn propagator(&self, t: f64) -> CMat {
        self.apply_fn(|lambda| C64::from_polar(1.0, -lambda * t))
    }

    pub fn reconstruct(&self) -> CMat {
        self.apply_fn(|lambda| C64::new(lambda, 0.0))
    }
}

pub fn eigh(h: &CMat) -> Result<Eigh> {
    if h.nrows() != h.ncols() {
        return Err(Error::Shape(format!(
            "eigh needs a square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let residual = hermitian_residual(h);
    if residual > HERMITIAN_TOL {
        return Err(Error::NumericalContract(format!(
            "matrix is not Hermitian (relative residual {residual:.3e})"
        )));
    }
    let n = h.nrows();
    if n == 0 {
        return Ok(Eigh {
            values: Vec::new(),
            vectors: CMat::zeros(0, 0),
        });
    }
    let sym = CMat::from_fn(n, n, |i, j| (h[(i, j)] + h[(j, i)].conj()) * 0.5);
    let evd = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::NumericalContract(format!("eigendecomposition failed: {e:?}")))?;
    let values: Vec<f64> = (0..n).map(|i| evd.S()[i].re).collect();
    Ok(Eigh {
        values,
        vectors: evd.U().to_owned(),
    })
}

/// exp(−iHt) for Hermitian `h`.
pub fn propagator(h: &CMat, t: f64) -> Result<CMat> {
    if !t.is_finite() {
        return Err(Error::NumericalContract(format!("non-finite time {t}")));
    }
    Ok(eigh(h)?.propagator(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn diag(values: &[f64]) -> CMat {
        CMat::from_fn(values.len(), values.len(), |i, j| {
            if i == j {
                c(values[i])
            } else {
                c(0.0)
            }
        })
    }

    #[test]
    fn spin_half_defining_representation() {
        let s = spin_matrices(0.5).unwrap();
        assert_eq!(s.dim(), 2);
        assert_eq!(s.sz[(0, 0)], c(0.5));
        assert_eq!(s.sz[(1, 1)], c(-0.5));
        assert!((s.sx[(0, 1)] - c(0.5)).norm() < 1e-15);
        assert!((s.sy[(0, 1)] - C64::new(0.0, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn spin_one_ladder() {
        let s = spin_matrices(1.0).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for (i, m) in [1.0, 0.0, -1.0].iter().enumerate() {
            assert_eq!(s.sz[(i, i)], c(*m));
        }
        assert!((s.sx[(0, 1)] - c(r)).norm() < 1e-15);
        assert!((s.sx[(1, 2)] - c(r)).norm() < 1e-15);
        assert_eq!(s.sx[(0, 2)], c(0.0));
    }

    #[test]
    fn spin_ten_casimir() {
        let s = spin_matrices(10.0).unwrap();
        assert_eq!(s.dim(), 21);
        let s2 = &s.sx * &s.sx + &s.sy * &s.sy + &s.sz * &s.sz;
        assert!((s2 - scale(&identity(21), c(110.0))).norm_l2() < 1e-12);
    }

    #[test]
    fn invalid_spins_rejected() {
        for s in [0.3, -0.5, 20.5, f64::NAN] {
            assert!(matches!(spin_matrices(s), Err(Error::InvalidSpin(_))));
        }
        assert_eq!(Spin::new(1.5).unwrap().to_string(), "3/2");
        assert_eq!(Spin::new(2.0).unwrap().to_string(), "2");
    }

    #[test]
    fn embed_identity_and_trace() {
        let id2 = identity(2);
        let e = embed(&id2, 0, &[2, 2]).unwrap();
        assert!((e.matrix - identity(4)).norm_l2() < 1e-15);

        let s = spin_matrices(1.0).unwrap();
        let op = &s.sz * &s.sz + &s.sx;
        let e = embed(&op, 1, &[2, 3, 4]).unwrap();
        assert_eq!(e.dim(), 24);
        assert!((trace(&e.matrix) - trace(&op) * c(8.0)).norm() < 1e-12);
    }

    #[test]
    fn embed_disjoint_sites_commute() {
        let s = spin_matrices(0.5).unwrap();
        let a = embed(&(&s.sx + &s.sz), 0, &[2, 2]).unwrap().matrix;
        let b = embed(&s.sy, 1, &[2, 2]).unwrap().matrix;
        assert!(commutator(&a, &b).norm_l2() < 1e-15);
    }

    #[test]
    fn embed_shape_errors() {
        let s = spin_matrices(0.5).unwrap();
        assert!(matches!(embed(&s.sx, 0, &[3]), Err(Error::Shape(_))));
        assert!(matches!(embed(&s.sx, 2, &[2, 2]), Err(Error::Shape(_))));
    }

    #[test]
    fn embed_matches_kron() {
        let s = spin_matrices(1.0).unwrap();
        let e = embed(&s.sy, 1, &[2, 3, 2]).unwrap().matrix;
        let k = kron(&kron(&identity(2), &s.sy), &identity(2));
        assert!((e - k).norm_l2() < 1e-15);
    }

    #[test]
    fn local_operator_matches_embedded_product() {
        let half = spin_matrices(0.5).unwrap();
        let one = spin_matrices(1.0).unwrap();
        let dims = [2, 3, 2, 2];
        let local = kron(&one.sx, &(&half.sy + &half.sz));
        let mut h = CMat::zeros(24, 24);
        add_local_operator(&mut h, &dims, &[1, 3], &local).unwrap();
        let a = embed(&one.sx, 1, &dims).unwrap().matrix;
        let b = embed(&(&half.sy + &half.sz), 3, &dims).unwrap().matrix;
        assert!((h - a * b).norm_l2() < 1e-14);

        let mut g = CMat::zeros(24, 24);
        add_local_operator(&mut g, &dims, &[2], &half.sx).unwrap();
        assert!((&g - embed(&half.sx, 2, &dims).unwrap().matrix).norm_l2() < 1e-15);
        assert!(add_local_operator(&mut g, &dims, &[3, 1], &local).is_err());
    }

    #[test]
    fn eigh_sorted() {
        let e = eigh(&diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
        let pauli_x = CMat::from_fn(2, 2, |i, j| if i != j { c(1.0) } else { c(0.0) });
        let e = eigh(&pauli_x).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigh_rejects_non_hermitian() {
        let m = CMat::from_fn(2, 2, |i, j| if i < j { c(1.0) } else { c(0.0) });
        assert!(matches!(eigh(&m), Err(Error::NumericalContract(_))));
    }

    #[test]
    fn propagator_of_zeeman_is_diagonal_phase() {
        let s = spin_matrices(0.5).unwrap();
        let omega = 2.7;
        let t = 0.9;
        let u = propagator(&scale(&s.sz, c(omega)), t).unwrap();
        assert!((u[(0, 0)] - C64::from_polar(1.0, -omega * t / 2.0)).norm() < 1e-14);
        assert!((u[(1, 1)] - C64::from_polar(1.0, omega * t / 2.0)).norm() < 1e-14);
        assert!(u[(0, 1)].norm() < 1e-14);
        let id = propagator(&scale(&s.sx, c(omega)), 0.0).unwrap();
        assert!((id - identity(2)).norm_l2() < 1e-14);
    }
}
