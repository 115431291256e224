//! Scalar random input, its density and the first-order Legendre chaos basis.
//!
//! Coefficients are indexed from zero: `alpha[0]` is the mean mode and
//! `alpha[1]` the first-order fluctuation mode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;

/// Chaos order used throughout (`P = 1`, two modes).
pub const MODES: usize = 2;

/// Uniform random input on the reference interval.
///
/// Physical perturbation `z` relates to the reference variable `w` through
/// `z = w * beta / N`, and `pi(w) = 1/2` on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomModel {
    /// Half-width of the support of `z` (in the unit of `beta`).
    pub half_width: f64,
}

impl RandomModel {
    pub fn uniform(beta: f64, n_divisor: f64) -> RandomModel {
        RandomModel {
            half_width: beta / n_divisor,
        }
    }

    /// Density in the reference variable.
    pub fn density(&self, w: f64) -> f64 {
        if (-1.0..=1.0).contains(&w) {
            0.5
        } else {
            0.0
        }
    }

    pub fn to_reference(&self, z: f64) -> f64 {
        z / self.half_width
    }

    pub fn to_physical(&self, w: f64) -> f64 {
        w * self.half_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `(1, w)`, Gram matrix `diag(1, 1/3)`.
    PaperUnnormalized,
    /// `(1, sqrt(3) w)`, Gram matrix identity.
    #[default]
    Orthonormal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GpcBasis {
    pub normalization: Normalization,
    /// Scale of the first-order polynomial: `Psi_1(w) = scale * w`.
    pub scale: f64,
    /// `<Psi_i Psi_j pi>`.
    pub gram: [[f64; MODES]; MODES],
}

impl GpcBasis {
    pub fn new(normalization: Normalization, quad: &QuadratureRule) -> GpcBasis {
        let scale = match normalization {
            Normalization::PaperUnnormalized => 1.0,
            Normalization::Orthonormal => 3f64.sqrt(),
        };
        let mut basis = GpcBasis {
            normalization,
            scale,
            gram: [[0.0; MODES]; MODES],
        };
        for i in 0..MODES {
            for j in 0..MODES {
                basis.gram[i][j] = 0.5 * quad.integrate(|w| basis.eval(i, w) * basis.eval(j, w));
            }
        }
        basis
    }

    pub fn eval(&self, mode: usize, w: f64) -> f64 {
        match mode {
            0 => 1.0,
            1 => self.scale * w,
            _ => panic!("chaos mode {mode} out of range"),
        }
    }

    /// Change of coordinates from this basis to another: `alpha_other = T alpha_self`.
    pub fn convert(&self, coeffs: [f64; MODES], to: &GpcBasis) -> [f64; MODES] {
        [coeffs[0], coeffs[1] * self.scale / to.scale]
    }

    pub fn reconstruct(&self, coeffs: &[f64; MODES], w: f64) -> f64 {
        (0..MODES).map(|k| coeffs[k] * self.eval(k, w)).sum()
    }
}

/// L2(pi) projection of `f(w)` onto the chaos basis.
pub fn project(f: impl Fn(f64) -> f64, basis: &GpcBasis, quad: &QuadratureRule) -> Result<[f64; MODES]> {
    let rhs: Vec<f64> = (0..MODES)
        .map(|i| 0.5 * quad.integrate(|w| f(w) * basis.eval(i, w)))
        .collect();
    let g = basis.gram;
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    if det.abs() < 1e-300 {
        return Err(Error::Numerical("singular chaos gram matrix".into()));
    }
    Ok([
        (g[1][1] * rhs[0] - g[0][1] * rhs[1]) / det,
        (g[0][0] * rhs[1] - g[1][0] * rhs[0]) / det,
    ])
}

/// Mean, variance and standard deviation of a chaos expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChaosStatistics {
    pub mean: f64,
    pub variance: f64,
    pub stddev: f64,
}

pub fn statistics(coeffs: &[f64; MODES], basis: &GpcBasis) -> ChaosStatistics {
    let variance: f64 = (1..MODES).map(|k| coeffs[k] * coeffs[k] * basis.gram[k][k]).sum();
    ChaosStatistics {
        mean: coeffs[0],
        variance,
        stddev: variance.sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quad() -> QuadratureRule {
        QuadratureRule::gauss_legendre(64).unwrap()
    }

    #[test]
    fn gram_matrices() {
        let q = quad();
        let p = GpcBasis::new(Normalization::PaperUnnormalized, &q);
        let o = GpcBasis::new(Normalization::Orthonormal, &q);
        let expect_p = [[1.0, 0.0], [0.0, 1.0 / 3.0]];
        let expect_o = [[1.0, 0.0], [0.0, 1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((p.gram[i][j] - expect_p[i][j]).abs() < 1e-14);
                assert!((o.gram[i][j] - expect_o[i][j]).abs() < 1e-14);
            }
        }
        assert!((p.gram[0][1] - p.gram[1][0]).abs() < 1e-15);
    }

    #[test]
    fn density_integrates_to_one() {
        let m = RandomModel::uniform(1.0, 30.0);
        assert!((quad().integrate(|w| m.density(w)) - 1.0).abs() < 1e-14);
        assert!((m.to_physical(m.to_reference(0.01)) - 0.01).abs() < 1e-16);
    }

    #[test]
    fn projection_examples() {
        let q = quad();
        let p = GpcBasis::new(Normalization::PaperUnnormalized, &q);
        assert_eq!(
            project(|_| 1.0, &p, &q).unwrap().map(|v| (v * 1e12).round()),
            [1e12, 0.0]
        );
        let c = project(|w| w, &p, &q).unwrap();
        assert!(c[0].abs() < 1e-15 && (c[1] - 1.0).abs() < 1e-14);
        // oracle: int w^2 / 2 over [-1,1] with a fine composite midpoint rule
        let oracle: f64 = {
            let n = 200_000;
            let h = 2.0 / n as f64;
            (0..n)
                .map(|i| {
                    let w = -1.0 + (i as f64 + 0.5) * h;
                    0.5 * w * w * h
                })
                .sum()
        };
        let c = project(|w| w * w, &p, &q).unwrap();
        assert!((c[0] - oracle).abs() < 1e-9);
        assert!((c[0] - 1.0 / 3.0).abs() < 1e-14);
        assert!(c[1].abs() < 1e-14);
    }

    #[test]
    fn statistics_examples() {
        let q = quad();
        let p = GpcBasis::new(Normalization::PaperUnnormalized, &q);
        let o = GpcBasis::new(Normalization::Orthonormal, &q);
        let s = statistics(&[3.0, 0.0], &o);
        assert_eq!((s.mean, s.variance), (3.0, 0.0));
        assert!((statistics(&[0.0, 1.0], &o).variance - 1.0).abs() < 1e-14);
        assert!((statistics(&[0.0, 1.0], &p).variance - 1.0 / 3.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn round_trip_on_span(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let q = quad();
            for norm in [Normalization::PaperUnnormalized, Normalization::Orthonormal] {
                let basis = GpcBasis::new(norm, &q);
                let c = project(|w| basis.reconstruct(&[a, b], w), &basis, &q).unwrap();
                prop_assert!((c[0] - a).abs() < 1e-13 && (c[1] - b).abs() < 1e-13);
            }
        }

        #[test]
        fn statistics_invariant_under_normalization(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let q = quad();
            let p = GpcBasis::new(Normalization::PaperUnnormalized, &q);
            let o = GpcBasis::new(Normalization::Orthonormal, &q);
            // the same function f(w) = a + b w in both bases
            let sp = statistics(&[a, b], &p);
            let so = statistics(&p.convert([a, b], &o), &o);
            prop_assert!((sp.mean - so.mean).abs() < 1e-12);
            prop_assert!((sp.variance - so.variance).abs() < 1e-12);
            prop_assert!(sp.variance >= 0.0);
        }
    }
}
