//! Chaos-projected collision kernels.
//!
//! Random lattice temperature: the 2x2 matrices `C-`, `C+` and the
//! recombination split. Random phonon energy: pointwise evaluators for the
//! kernel matrix `B(g)` as a function of the energy gap `g = eps - eps'`
//! (in units of `k_B T_L`), both with and without the first-order
//! distributional expansion in the random variable.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gpc::{GpcBasis, Normalization, MODES};
use crate::polylog;
use crate::quadrature::QuadratureRule;
use crate::scaling::ScalingContext;

pub type Mat2 = [[f64; MODES]; MODES];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

pub fn mat_add(a: &Mat2, b: &Mat2, s: f64) -> Mat2 {
    let mut out = *a;
    for i in 0..MODES {
        for j in 0..MODES {
            out[i][j] += s * b[i][j];
        }
    }
    out
}

pub fn mat_scale(a: &Mat2, s: f64) -> Mat2 {
    a.map(|row| row.map(|v| v * s))
}

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; MODES]; MODES];
    for i in 0..MODES {
        for j in 0..MODES {
            out[i][j] = (0..MODES).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat_inverse(a: &Mat2) -> Result<Mat2> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det.abs() < 1e-300 {
        return Err(Error::Numerical("singular 2x2 matrix".into()));
    }
    Ok([[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]])
}

pub fn mat_apply(a: &Mat2, v: &[f64; MODES]) -> [f64; MODES] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

/// Kernel matrices for the random-temperature model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelMatrices {
    pub normalization: Normalization,
    pub gram: Mat2,
    pub c_minus: Mat2,
    /// `C- + I`.
    pub c_plus: Mat2,
    /// `C- - n_q I`.
    pub recomb_split: Mat2,
    pub n_q: f64,
    pub a: f64,
    pub b: f64,
    pub n_divisor: f64,
    /// Dimensionless optical rate `K`.
    pub k_optical: f64,
    /// Dimensionless acoustic rate `K0`.
    pub k0_acoustic: f64,
}

impl KernelMatrices {
    pub fn new(scaling: &ScalingContext, basis: &GpcBasis, quad: &QuadratureRule) -> Result<Self> {
        let c_minus = compute_c_minus(scaling, basis, quad)?;
        Ok(Self::from_c_minus(c_minus, scaling, basis))
    }

    pub fn from_c_minus(c_minus: Mat2, scaling: &ScalingContext, basis: &GpcBasis) -> Self {
        let mut k = KernelMatrices {
            normalization: basis.normalization,
            gram: basis.gram,
            c_minus,
            c_plus: mat_add(&c_minus, &IDENTITY, 1.0),
            recomb_split: [[0.0; MODES]; MODES],
            n_q: scaling.n_q,
            a: scaling.a,
            b: scaling.b,
            n_divisor: scaling.n_divisor,
            k_optical: scaling.rate_optical,
            k0_acoustic: scaling.rate_acoustic,
        };
        k.recomb_split = split_recombination(&k);
        k
    }

    /// `Gram^-1 C-`: the absorption-gain/emission-loss coupling acting on
    /// chaos coefficients. Equals `C-` in the orthonormal basis.
    pub fn galerkin_minus(&self) -> Mat2 {
        let ginv = mat_inverse(&self.gram).expect("gram matrix is positive definite");
        mat_mul(&ginv, &self.c_minus)
    }

    /// `Gram^-1 (C- + Gram)`. Equals `C+` in the orthonormal basis.
    pub fn galerkin_plus(&self) -> Mat2 {
        mat_add(&self.galerkin_minus(), &IDENTITY, 1.0)
    }

    /// `Gram^-1 C- - n_q I`, the recombination correction acting on coefficients.
    pub fn galerkin_split(&self) -> Mat2 {
        mat_add(&self.galerkin_minus(), &IDENTITY, -self.n_q)
    }
}

fn check_divisor(n: f64) -> Result<()> {
    if !(n > 1.0) || !n.is_finite() {
        return Err(Error::Domain(format!(
            "random-interval divisor N = {n} must exceed 1"
        )));
    }
    Ok(())
}

/// `C-_ij = (1/2) int_{-1}^{1} Psi_i Psi_j / (exp(A (1 + w/N)) - 1) dw`.
pub fn compute_c_minus(scaling: &ScalingContext, basis: &GpcBasis, quad: &QuadratureRule) -> Result<Mat2> {
    check_divisor(scaling.n_divisor)?;
    let (a, n) = (scaling.a, scaling.n_divisor);
    let bose = |w: f64| 1.0 / (a * (1.0 + w / n)).exp_m1();
    let mut c = [[0.0; MODES]; MODES];
    for i in 0..MODES {
        for j in i..MODES {
            let v = 0.5 * quad.integrate(|w| basis.eval(i, w) * basis.eval(j, w) * bose(w));
            c[i][j] = v;
            c[j][i] = v;
        }
    }
    Ok(c)
}

/// Closed-form `C-` in the `(1, w)` basis from the log/dilog/trilog
/// antiderivatives of `x^k / (exp(A + Bx) - 1)`.
pub fn compute_c_minus_analytic(scaling: &ScalingContext) -> Result<Mat2> {
    check_divisor(scaling.n_divisor)?;
    let (a, b) = (scaling.a, scaling.b);
    let m = if b.abs() < 1e-3 {
        bose_moments_series(a, b)
    } else {
        let f0 = |x: f64| polylog::re_log_one_minus_exp(a + b * x) / b - x;
        let f1 = |x: f64| {
            let y = a + b * x;
            polylog::re_li2(y.exp()) / (b * b) + x * polylog::re_log_one_minus_exp(y) / b - 0.5 * x * x
        };
        let f2 = |x: f64| {
            let y = a + b * x;
            -2.0 * polylog::re_li3(y.exp()) / (b * b * b)
                + 2.0 * x * polylog::re_li2(y.exp()) / (b * b)
                + x * x * polylog::re_log_one_minus_exp(y) / b
                - x * x * x / 3.0
        };
        [f0(1.0) - f0(-1.0), f1(1.0) - f1(-1.0), f2(1.0) - f2(-1.0)]
    };
    Ok([[0.5 * m[0], 0.5 * m[1]], [0.5 * m[1], 0.5 * m[2]]])
}

/// `int_{-1}^{1} x^k n(A + Bx) dx` for `k = 0, 1, 2` from the Taylor
/// series of the Bose function in `B`.
fn bose_moments_series(a: f64, b: f64) -> [f64; 3] {
    let coeffs = polylog::bose_taylor(a, 12);
    let mono = |p: usize| {
        if p.is_multiple_of(2) {
            2.0 / (p as f64 + 1.0)
        } else {
            0.0
        }
    };
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut bj = 1.0;
        for (j, c) in coeffs.iter().enumerate() {
            *o += c * bj * mono(j + k);
            bj *= b;
        }
    }
    out
}

/// `C- - n_q I`.
pub fn split_recombination(kernels: &KernelMatrices) -> Mat2 {
    mat_add(&kernels.c_minus, &IDENTITY, -kernels.n_q)
}

/// Which expansion of the random phonon energy a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhononEnergyVariant {
    DistributionalDerivative,
    CharacteristicFunction,
}

/// A delta-supported contribution `weight * delta(g - location)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaShell {
    pub location: f64,
    pub weight: Mat2,
}

/// Kernel matrix at one energy gap, in units of `K` with the `1/M` factor
/// left to the caller.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhononEnergyKernelSample {
    pub gap: f64,
    pub variant: PhononEnergyVariant,
    /// Pointwise (non-delta) part.
    pub b_matrix: Mat2,
    /// `g = 0`: the elastic `K0 I` term applies.
    pub elastic_shell: bool,
    /// Delta shells located exactly at this gap (distributional variant).
    pub shells: Vec<DeltaShell>,
    /// Emission-branch shift and whether its gate is open.
    pub z_emission: f64,
    pub emission_open: bool,
    /// Absorption-branch shift and whether its gate is open.
    pub z_absorption: f64,
    pub absorption_open: bool,
}

/// Random phonon-energy model: `hbar omega + z`, `z` uniform on `[-delta, delta]`
/// in units of `k_B T_L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhononEnergyModel {
    pub a: f64,
    pub n_q: f64,
    pub half_width: f64,
}

impl PhononEnergyModel {
    /// Window half-width `1/N` (dimensionless `beta = 1`).
    pub fn from_scaling(scaling: &ScalingContext) -> Self {
        Self::with_half_width(scaling, 1.0 / scaling.n_divisor)
    }

    pub fn with_half_width(scaling: &ScalingContext, half_width: f64) -> Self {
        PhononEnergyModel {
            a: scaling.a,
            n_q: scaling.n_q,
            half_width,
        }
    }

    fn gate(&self, z: f64) -> bool {
        z.abs() <= self.half_width
    }

    /// Density of `z` on its support.
    pub fn density(&self) -> f64 {
        0.5 / self.half_width
    }

    fn psi_outer(&self, basis: &GpcBasis, z: f64) -> Mat2 {
        let w = z / self.half_width;
        let mut m = [[0.0; MODES]; MODES];
        for i in 0..MODES {
            for j in 0..MODES {
                m[i][j] = basis.eval(i, w) * basis.eval(j, w);
            }
        }
        m
    }

    /// `Z_ij = int Psi_i Psi_j pi(z) z dz` over the support.
    pub fn z_moment(&self, basis: &GpcBasis, quad: &QuadratureRule) -> Mat2 {
        let mut m = [[0.0; MODES]; MODES];
        for i in 0..MODES {
            for j in 0..MODES {
                m[i][j] = self.half_width * 0.5 * quad.integrate(|w| basis.eval(i, w) * basis.eval(j, w) * w);
            }
        }
        m
    }

    /// `d/dz [Psi_i Psi_j pi z]` on the support.
    pub fn d_psi_pi_z(&self, basis: &GpcBasis, z: f64) -> Mat2 {
        let d = self.half_width;
        let s = basis.scale;
        let pi = self.density();
        // Psi_0 = 1, Psi_1 = s z / d
        [
            [pi, 2.0 * s * z / d * pi],
            [2.0 * s * z / d * pi, 3.0 * s * s * z * z / (d * d) * pi],
        ]
    }

    /// All delta shells of the distributional-derivative kernel, in units of
    /// `K` (the elastic shell carries `K0 / K` in its weight).
    pub fn delta_shells(&self, basis: &GpcBasis, quad: &QuadratureRule, k0_over_k: f64) -> Vec<DeltaShell> {
        let z = self.z_moment(basis, quad);
        let ea = self.a.exp();
        let dn = -ea / (ea - 1.0).powi(2);
        let corr = mat_scale(&z, dn);
        vec![
            DeltaShell {
                location: 0.0,
                weight: mat_scale(&IDENTITY, k0_over_k),
            },
            DeltaShell {
                location: -self.a,
                weight: mat_add(&mat_scale(&IDENTITY, self.n_q + 1.0), &corr, 1.0),
            },
            DeltaShell {
                location: self.a,
                weight: mat_add(&mat_scale(&IDENTITY, self.n_q), &corr, 1.0),
            },
        ]
    }
}

/// Characteristic-function form of `B(g)`, no expansion in `z`.
pub fn eval_phonon_energy_b_full(
    gap: f64,
    model: &PhononEnergyModel,
    basis: &GpcBasis,
) -> PhononEnergyKernelSample {
    let z1 = -gap - model.a;
    let z2 = gap - model.a;
    let (o1, o2) = (model.gate(z1), model.gate(z2));
    // pi = 1/2 per unit reference variable
    let mut b = [[0.0; MODES]; MODES];
    if o1 {
        let f = 0.5 / (-(-(model.a + z1)).exp_m1());
        b = mat_add(&b, &model.psi_outer(basis, z1), f);
    }
    if o2 {
        let f = 0.5 / (model.a + z2).exp_m1();
        b = mat_add(&b, &model.psi_outer(basis, z2), f);
    }
    PhononEnergyKernelSample {
        gap,
        variant: PhononEnergyVariant::CharacteristicFunction,
        b_matrix: b,
        elastic_shell: gap == 0.0,
        shells: Vec::new(),
        z_emission: z1,
        emission_open: o1,
        z_absorption: z2,
        absorption_open: o2,
    }
}

/// First-order distributional expansion of `B(g)`.
///
/// `b_matrix` holds the transferred-derivative boundary terms
/// `-(1 + n_q) d_z[Psi Psi pi z] chi` at `z = -(g + A)` plus
/// `-n_q d_z[Psi Psi pi z] chi` at `z = g - A`.
pub fn eval_phonon_energy_b_distderiv(
    gap: f64,
    model: &PhononEnergyModel,
    basis: &GpcBasis,
    quad: &QuadratureRule,
    k0_over_k: f64,
) -> PhononEnergyKernelSample {
    let z1 = -(gap + model.a);
    let z2 = gap - model.a;
    let (o1, o2) = (model.gate(z1), model.gate(z2));
    let mut b = [[0.0; MODES]; MODES];
    if o1 {
        b = mat_add(&b, &model.d_psi_pi_z(basis, z1), -(1.0 + model.n_q));
    }
    if o2 {
        b = mat_add(&b, &model.d_psi_pi_z(basis, z2), -model.n_q);
    }
    let shells = model
        .delta_shells(basis, quad, k0_over_k)
        .into_iter()
        .filter(|s| s.location == gap)
        .collect();
    PhononEnergyKernelSample {
        gap,
        variant: PhononEnergyVariant::DistributionalDerivative,
        b_matrix: b,
        elastic_shell: gap == 0.0,
        shells,
        z_emission: z1,
        emission_open: o1,
        z_absorption: z2,
        absorption_open: o2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn setup(norm: Normalization) -> (ScalingContext, GpcBasis, QuadratureRule) {
        let s = ScalingContext::paper_defaults();
        let q = QuadratureRule::gauss_legendre(64).unwrap();
        let b = GpcBasis::new(norm, &q);
        (s, b, q)
    }

    fn trapezoid_c00(a: f64, n: f64, nodes: usize) -> f64 {
        let h = 2.0 / nodes as f64;
        let f = |w: f64| 0.5 / (a * (1.0 + w / n)).exp_m1();
        let mut s = 0.5 * (f(-1.0) + f(1.0));
        for k in 1..nodes {
            s += f(-1.0 + k as f64 * h);
        }
        s * h
    }

    #[test]
    fn c_minus_matches_published_matrix() {
        let (s, b, q) = setup(Normalization::PaperUnnormalized);
        let c = compute_c_minus(&s, &b, &q).unwrap();
        let expect = [[0.0959125, -0.00284506], [-0.00284506, 0.03200755]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((c[i][j] - expect[i][j]).abs() < 5e-6, "{c:?}");
            }
        }
        assert_eq!(c[0][1], c[1][0]);
    }

    #[test]
    fn analytic_route_agrees_with_quadrature() {
        let (s, b, q) = setup(Normalization::PaperUnnormalized);
        let c = compute_c_minus(&s, &b, &q).unwrap();
        let an = compute_c_minus_analytic(&s).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((c[i][j] - an[i][j]).abs() < 1e-8, "{c:?} vs {an:?}");
            }
        }
        // pre-halving (0,0) value
        assert!((2.0 * an[0][0] - 0.191825).abs() < 1e-5);
    }

    #[test]
    fn trapezoid_oracle() {
        let (s, b, q) = setup(Normalization::PaperUnnormalized);
        let c = compute_c_minus(&s, &b, &q).unwrap();
        let t = trapezoid_c00(s.a, s.n_divisor, 1_000_000);
        assert!((c[0][0] - t).abs() < 1e-9);
    }

    #[test]
    fn large_n_limit() {
        let (s, b, q) = setup(Normalization::PaperUnnormalized);
        let big = s.with_n_divisor(1e9).unwrap();
        let c = compute_c_minus(&big, &b, &q).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((c[i][j] - s.n_q * b.gram[i][j]).abs() < 1e-8);
            }
        }
        let an = compute_c_minus_analytic(&big).unwrap();
        assert!((an[0][0] - s.n_q).abs() < 1e-10);
        let small_b = s.with_n_divisor(5000.0).unwrap();
        let an = compute_c_minus_analytic(&small_b).unwrap();
        let qc = compute_c_minus(&small_b, &b, &q).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((an[i][j] - qc[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn divisor_must_exceed_one() {
        let (s, b, q) = setup(Normalization::PaperUnnormalized);
        let mut bad = s.clone();
        bad.n_divisor = 1.0;
        assert!(matches!(compute_c_minus(&bad, &b, &q), Err(Error::Domain(_))));
        assert!(compute_c_minus_analytic(&bad).is_err());
    }

    #[test]
    fn split_and_plus() {
        let (s, b, q) = setup(Normalization::PaperUnnormalized);
        let k = KernelMatrices::new(&s, &b, &q).unwrap();
        let expect = [[0.00013765729, -0.00284506], [-0.00284506, -0.06376729271]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((k.recomb_split[i][j] - expect[i][j]).abs() < 5e-6);
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((k.c_plus[i][j] - k.c_minus[i][j] - id).abs() < 1e-14);
                assert!((k.recomb_split[i][j] - (k.c_plus[i][j] - (k.n_q + 1.0) * id)).abs() < 1e-14);
            }
        }
        let tr = k.recomb_split[0][0] + k.recomb_split[1][1];
        assert!((tr - (k.c_minus[0][0] + k.c_minus[1][1] - 2.0 * k.n_q)).abs() < 1e-15);
    }

    #[test]
    fn zero_uncertainty_split_vanishes() {
        let (s, b, _) = setup(Normalization::Orthonormal);
        let k = KernelMatrices::from_c_minus(mat_scale(&IDENTITY, s.n_q), &s, &b);
        assert!(k.recomb_split.iter().flatten().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn galerkin_matrices_match_orthonormal() {
        let (s, p, q) = setup(Normalization::PaperUnnormalized);
        let o = GpcBasis::new(Normalization::Orthonormal, &q);
        let kp = KernelMatrices::new(&s, &p, &q).unwrap();
        let ko = KernelMatrices::new(&s, &o, &q).unwrap();
        // same operator in two coordinate systems: D^-1 (G^-1 C) D with D = diag(1, sqrt 3)
        let d = [[1.0, 0.0], [0.0, 3f64.sqrt()]];
        let dinv = mat_inverse(&d).unwrap();
        let gp = mat_mul(&mat_mul(&dinv, &kp.galerkin_minus()), &d);
        for i in 0..2 {
            for j in 0..2 {
                assert!((gp[i][j] - ko.galerkin_minus()[i][j]).abs() < 1e-14);
                assert!((ko.galerkin_minus()[i][j] - ko.c_minus[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn cauchy_schwarz_and_monotone_in_n() {
        let (s, b, q) = setup(Normalization::Orthonormal);
        let mut offs = Vec::new();
        let mut prev_off = f64::INFINITY;
        let mut prev_dev = f64::INFINITY;
        for n in [30.0, 300.0, 3000.0] {
            let c = compute_c_minus(&s.with_n_divisor(n).unwrap(), &b, &q).unwrap();
            let bound = c[0][0] * (b.gram[1][1] * b.gram[0][0]).sqrt() / b.gram[0][0];
            assert!(c[0][1].abs() <= bound);
            assert!(c[0][1].abs() <= (c[0][0] * c[1][1]).sqrt());
            let off = c[0][1].abs();
            let dev = (c[0][0] - s.n_q).abs().max((c[1][1] - s.n_q).abs());
            assert!(off < prev_off && dev < prev_dev);
            prev_off = off;
            prev_dev = dev;
            offs.push(off);
        }
        // first order in 1/N
        assert!((offs[0] / offs[2] / 100.0 - 1.0).abs() < 1e-2);
    }

    #[test]
    fn full_variant_shell_values() {
        let (s, b, _) = setup(Normalization::PaperUnnormalized);
        let m = PhononEnergyModel::from_scaling(&s);
        let em = eval_phonon_energy_b_full(-s.a, &m, &b);
        assert!(em.emission_open && !em.absorption_open);
        let oracle = 0.5 / (1.0 - (-s.a).exp());
        assert!((em.b_matrix[0][0] - oracle).abs() < 1e-12);
        assert!((em.b_matrix[0][0] - 0.5479).abs() < 1e-4);
        assert_eq!(em.b_matrix[0][1], 0.0);
        let ab = eval_phonon_energy_b_full(s.a, &m, &b);
        assert!((ab.b_matrix[0][0] - 0.5 * s.n_q).abs() < 1e-12);
        assert!((ab.b_matrix[0][0] - 0.04788742).abs() < 1e-6);
        // off-shell point inside the emission window
        let z = 0.4 * m.half_width;
        let g = -z - s.a;
        let v = eval_phonon_energy_b_full(g, &m, &b);
        let w = z / m.half_width;
        let scalar = 0.5 / (1.0 - (-(s.a + z)).exp());
        assert!((v.b_matrix[1][1] - w * w * scalar).abs() < 1e-12);
    }

    #[test]
    fn gates_closed_give_zero() {
        let (s, b, q) = setup(Normalization::Orthonormal);
        let m = PhononEnergyModel::from_scaling(&s);
        for g in [0.3, -1.0, 1.9, 5.0, -4.0] {
            let f = eval_phonon_energy_b_full(g, &m, &b);
            assert!(f.b_matrix.iter().flatten().all(|&v| v == 0.0));
            let d = eval_phonon_energy_b_distderiv(g, &m, &b, &q, 0.5);
            assert!(d.b_matrix.iter().flatten().all(|&v| v == 0.0));
            assert!(d.shells.is_empty());
        }
    }

    #[test]
    fn distributional_weights() {
        let (s, b, q) = setup(Normalization::PaperUnnormalized);
        let m = PhononEnergyModel::from_scaling(&s);
        let z = m.z_moment(&b, &q);
        assert!((z[0][1] - m.half_width / 3.0).abs() < 1e-15);
        assert!(z[0][0].abs() < 1e-16 && z[1][1].abs() < 1e-16);
        // (0,0) boundary term at an interior point
        let d = m.d_psi_pi_z(&b, 0.3 * m.half_width);
        assert!((-d[0][0] + s.n_divisor / 2.0).abs() < 1e-12);
        // symbolic derivative vs. central difference of the product
        let prod = |z: f64| {
            let w = z / m.half_width;
            [1.0, w, w * w].map(|p| p * m.density() * z)
        };
        let z0 = -0.7 * m.half_width;
        let h = 1e-7 * m.half_width;
        let fd: Vec<f64> = (0..3)
            .map(|k| (prod(z0 + h)[k] - prod(z0 - h)[k]) / (2.0 * h))
            .collect();
        let d = m.d_psi_pi_z(&b, z0);
        assert!((d[0][0] - fd[0]).abs() < 1e-6);
        assert!((d[0][1] - fd[1]).abs() < 1e-6);
        assert!((d[1][1] - fd[2]).abs() < 1e-6);
        let shells = m.delta_shells(&b, &q, 0.25);
        let ea = s.a.exp();
        let corr = -ea / (ea - 1.0).powi(2) * m.half_width / 3.0;
        assert!((shells[1].weight[0][1] - corr).abs() < 1e-12);
        assert!((shells[1].weight[0][0] - (s.n_q + 1.0)).abs() < 1e-15);
        assert!((shells[2].weight[1][1] - s.n_q).abs() < 1e-15);
        assert_eq!(shells[0].weight[0][0], 0.25);
        let on = eval_phonon_energy_b_distderiv(s.a, &m, &b, &q, 0.25);
        assert_eq!(on.shells.len(), 1);
        assert_eq!(on.shells[0].location, s.a);
    }

    proptest! {
        #[test]
        fn full_variant_continuous_inside_gate(t in -0.95f64..0.95) {
            let (s, b, _) = setup(Normalization::Orthonormal);
            let m = PhononEnergyModel::from_scaling(&s);
            let g = -s.a - t * m.half_width;
            let h = 1e-9;
            let lo = eval_phonon_energy_b_full(g - h, &m, &b).b_matrix;
            let hi = eval_phonon_energy_b_full(g + h, &m, &b).b_matrix;
            for i in 0..2 {
                for j in 0..2 {
                    prop_assert!((lo[i][j] - hi[i][j]).abs() < 1e-5);
                }
            }
        }
    }
}
