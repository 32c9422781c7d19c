//! Isotropic linear-elastic material parameters and the Voigt constitutive
//! matrix for plane strain / plane stress.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlaneRegime {
    PlaneStrain,
    PlaneStress,
}

/// Material parameters. `lambda` is the regime-effective Lame parameter so
/// that the Voigt matrix is always `[[l+2m, l, 0], [l, l+2m, 0], [0, 0, m]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub e: f64,
    pub nu: f64,
    pub lambda: f64,
    pub mu: f64,
    pub regime: PlaneRegime,
}

impl MaterialParams {
    pub fn new(e: f64, nu: f64, regime: PlaneRegime) -> Result<Self> {
        if e <= 0.0 {
            return Err(Error::Precondition(format!("Young's modulus must be positive, got {e}")));
        }
        if nu <= -1.0 || nu >= 0.5 {
            if nu == 0.5 {
                return Err(Error::Precondition("nu = 0.5 is incompressible".into()));
            }
            return Err(Error::Precondition(format!("Poisson ratio must lie in (-1, 0.5), got {nu}")));
        }
        let mu = e / (2.0 * (1.0 + nu));
        let lambda = match regime {
            PlaneRegime::PlaneStrain => e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)),
            PlaneRegime::PlaneStress => e * nu / (1.0 - nu * nu),
        };
        Ok(MaterialParams { e, nu, lambda, mu, regime })
    }
}

/// 3x3 SPD constitutive matrix in Voigt order (eps_xx, eps_yy, gamma_xy),
/// engineering shear strain.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstitutiveMatrix {
    pub d: Matrix3<f64>,
}

impl ConstitutiveMatrix {
    pub fn inverse(&self) -> Matrix3<f64> {
        self.d.try_inverse().expect("constitutive matrix is SPD")
    }
}

/// Build the Voigt constitutive matrix from material parameters.
pub fn constitutive_matrix(params: &MaterialParams) -> Result<ConstitutiveMatrix> {
    if params.nu == 0.5 {
        return Err(Error::Precondition("nu = 0.5 is incompressible".into()));
    }
    let l = params.lambda;
    let m = params.mu;
    let d = Matrix3::new(l + 2.0 * m, l, 0.0, l, l + 2.0 * m, 0.0, 0.0, 0.0, m);
    Ok(ConstitutiveMatrix { d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lame_parameters() {
        let m = MaterialParams::new(1.0, 0.3, PlaneRegime::PlaneStrain).unwrap();
        assert_relative_eq!(m.mu, 1.0 / 2.6, epsilon = 1e-15); // 0.384615...
        assert_relative_eq!(m.lambda, 0.3 / (1.3 * 0.4), epsilon = 1e-15); // 0.576923...
    }

    #[test]
    fn zero_poisson_is_diagonal() {
        let m = MaterialParams::new(1.0, 0.0, PlaneRegime::PlaneStrain).unwrap();
        let d = constitutive_matrix(&m).unwrap().d;
        assert_relative_eq!(m.lambda, 0.0);
        assert_relative_eq!(d[(0, 0)], 2.0 * m.mu);
        assert_relative_eq!(d[(1, 1)], 2.0 * m.mu);
        assert_relative_eq!(d[(2, 2)], m.mu);
        assert_relative_eq!(d[(0, 1)], 0.0);
    }

    #[test]
    fn incompressible_rejected() {
        assert!(MaterialParams::new(1.0, 0.5, PlaneRegime::PlaneStrain).is_err());
    }

    #[test]
    fn plane_stress_lambda() {
        let m = MaterialParams::new(1.0, 0.3, PlaneRegime::PlaneStress).unwrap();
        assert_relative_eq!(m.lambda, 0.3 / 0.91, epsilon = 1e-15);
        // Plane stress D(0,0) must equal E/(1-nu^2).
        let d = constitutive_matrix(&m).unwrap().d;
        assert_relative_eq!(d[(0, 0)], 1.0 / 0.91, epsilon = 1e-14);
    }
}
