use crate::geom::Vec3;
use crate::spinops::{hermitian_residual, scale, spin_matrices_for, trace, Spin};
use crate::{CMat, Error, Result, C64};

/// Product initial state of the bath.
#[derive(Debug, Clone, Default)]
pub enum BathState {
    /// `1/(2I+1)` on every site (infinite-temperature bath).
    #[default]
    MaximallyMixed,
    /// One density matrix per bath site.
    Product(Vec<CMat>),
}

/// First and second moments of one site's state.
#[derive(Debug, Clone, Copy)]
pub struct SiteMoments {
    /// `⟨I⟩`.
    pub mean: Vec3,
    /// `⟨I^ν I^ρ⟩`.
    pub second: [[C64; 3]; 3],
}

impl BathState {
    pub fn is_maximally_mixed(&self) -> bool {
        matches!(self, BathState::MaximallyMixed)
    }

    /// Positive semidefinite with unit trace on every site, within 1e-12.
    pub fn validate(&self, spins: &[Spin]) -> Result<()> {
        let BathState::Product(rhos) = self else {
            return Ok(());
        };
        if rhos.len() != spins.len() {
            return Err(Error::Shape(format!(
                "bath state has {} site matrices for {} bath spins",
                rhos.len(),
                spins.len()
            )));
        }
        for (j, (rho, spin)) in rhos.iter().zip(spins).enumerate() {
            if rho.nrows() != spin.dim() || rho.ncols() != spin.dim() {
                return Err(Error::Shape(format!("bath state {j} has the wrong dimension")));
            }
            if hermitian_residual(rho) > 1e-12 {
                return Err(Error::InvalidModel(format!("bath state {j} is not Hermitian")));
            }
            let tr = trace(rho);
            if (tr - C64::new(1.0, 0.0)).norm() > 1e-12 {
                return Err(Error::InvalidModel(format!("bath state {j} has trace {tr}")));
            }
            let eig = crate::spinops::eigh(rho)?;
            if eig.values.first().copied().unwrap_or(0.0) < -1e-12 {
                return Err(Error::InvalidModel(format!("bath state {j} is not positive semidefinite")));
            }
        }
        Ok(())
    }

    /// Density matrix of site `j`.
    pub fn site_matrix(&self, j: usize, spin: Spin) -> CMat {
        match self {
            BathState::MaximallyMixed => {
                let d = spin.dim();
                CMat::from_fn(d, d, |a, b| if a == b { C64::new(1.0 / d as f64, 0.0) } else { C64::new(0.0, 0.0) })
            }
            BathState::Product(rhos) => rhos[j].clone(),
        }
    }

    pub fn moments(&self, j: usize, spin: Spin) -> SiteMoments {
        match self {
            BathState::MaximallyMixed => {
                let c = spin.casimir() / 3.0;
                let mut second = [[C64::new(0.0, 0.0); 3]; 3];
                for (a, row) in second.iter_mut().enumerate() {
                    row[a] = C64::new(c, 0.0);
                }
                SiteMoments { mean: [0.0; 3], second }
            }
            BathState::Product(rhos) => {
                let rho = &rhos[j];
                let set = spin_matrices_for(spin);
                let ops = set.components();
                let mut mean = [0.0; 3];
                let mut second = [[C64::new(0.0, 0.0); 3]; 3];
                for a in 0..3 {
                    mean[a] = trace(&(rho * ops[a])).re;
                    for b in 0..3 {
                        second[a][b] = trace(&(rho * (ops[a] * ops[b])));
                    }
                }
                SiteMoments { mean, second }
            }
        }
    }

    /// Pure states fully polarised along the given per-site directions.
    pub fn polarized(spins: &[Spin], direction: &[Vec3]) -> Result<Self> {
        if spins.len() != direction.len() {
            return Err(Error::Shape("one direction per bath spin expected".into()));
        }
        let mut out = Vec::with_capacity(spins.len());
        for (spin, dir) in spins.iter().zip(direction) {
            let norm = crate::geom::norm(dir);
            if !(norm > 0.0) {
                return Err(Error::InvalidModel("polarisation direction must be nonzero".into()));
            }
            let set = spin_matrices_for(*spin);
            let ops = set.components();
            let n = spin.dim();
            let mut h = CMat::zeros(n, n);
            for a in 0..3 {
                h += scale(ops[a], C64::new(-dir[a] / norm, 0.0));
            }
            let eig = crate::spinops::eigh(&h)?;
            let v = eig.vectors.col(0);
            out.push(CMat::from_fn(n, n, |a, b| v[a] * v[b].conj()));
        }
        Ok(BathState::Product(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_moments() {
        let m = BathState::MaximallyMixed.moments(0, Spin::HALF);
        assert_eq!(m.mean, [0.0; 3]);
        assert!((m.second[2][2].re - 0.25).abs() < 1e-15);
        assert_eq!(m.second[0][1], C64::new(0.0, 0.0));
    }

    #[test]
    fn polarized_state_moments() {
        let st = BathState::polarized(&[Spin::HALF], &[[0.0, 0.0, 1.0]]).unwrap();
        st.validate(&[Spin::HALF]).unwrap();
        let m = st.moments(0, Spin::HALF);
        assert!((m.mean[2] - 0.5).abs() < 1e-12);
        // I^x I^y = i I^z / 2 for spin 1/2.
        assert!((m.second[0][1] - C64::new(0.0, 0.25)).norm() < 1e-12);
    }

    #[test]
    fn invalid_state_rejected() {
        let bad = CMat::from_fn(2, 2, |a, b| if a == b { C64::new(0.7, 0.0) } else { C64::new(0.0, 0.0) });
        assert!(BathState::Product(vec![bad]).validate(&[Spin::HALF]).is_err());
    }
}
