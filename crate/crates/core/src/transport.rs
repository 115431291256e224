//! DG transport in `(x, r, mu)` under azimuthal symmetry.
//!
//! The divergence-form equation `d_t Phi + d_x(a1 Phi) + d_r(a4 Phi) + d_mu(a5 Phi)`
//! is discretised with the P1 basis and an upwind flux. Every coefficient is
//! a product of one factor per dimension, so volume and face integrals are
//! products of exact one-dimensional moments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpc::MODES;
use crate::grid::{DofField, PhaseGrid};
use crate::quadrature::QuadratureRule;
use crate::scaling::ScalingContext;

/// Pointwise transport coefficients in `(r, mu, phi)` for a field vector `E`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransportCoefficients {
    pub c_v: f64,
    pub c_e: f64,
}

impl TransportCoefficients {
    pub fn from_scaling(s: &ScalingContext) -> Self {
        TransportCoefficients {
            c_v: s.c_v,
            c_e: s.c_e,
        }
    }

    fn sin_theta(mu: f64) -> f64 {
        (1.0 - mu * mu).max(0.0).sqrt()
    }

    pub fn a1(&self, r: f64, mu: f64) -> f64 {
        self.c_v * r.sqrt() * mu
    }

    pub fn a2(&self, r: f64, mu: f64, phi: f64) -> f64 {
        self.c_v * r.sqrt() * Self::sin_theta(mu) * phi.cos()
    }

    pub fn a3(&self, r: f64, mu: f64, phi: f64) -> f64 {
        self.c_v * r.sqrt() * Self::sin_theta(mu) * phi.sin()
    }

    pub fn a4(&self, r: f64, mu: f64, phi: f64, e: [f64; 3]) -> f64 {
        let st = Self::sin_theta(mu);
        let er = [mu, st * phi.cos(), st * phi.sin()];
        -2.0 * self.c_e * r.sqrt() * dot(er, e)
    }

    pub fn a5(&self, r: f64, mu: f64, phi: f64, e: [f64; 3]) -> f64 {
        let st = Self::sin_theta(mu);
        if st == 0.0 {
            return 0.0;
        }
        let emu = [st, -mu * phi.cos(), -mu * phi.sin()];
        -self.c_e * st / r.sqrt() * dot(emu, e)
    }

    pub fn a6(&self, r: f64, mu: f64, phi: f64, e: [f64; 3]) -> f64 {
        let ephi = [0.0, -phi.sin(), phi.cos()];
        -self.c_e / (r.sqrt() * Self::sin_theta(mu)) * dot(ephi, e)
    }

    /// `a4` for a field along `x`.
    pub fn a4_x(&self, r: f64, mu: f64, ex: f64) -> f64 {
        -2.0 * self.c_e * r.sqrt() * mu * ex
    }

    /// `a5` for a field along `x`.
    pub fn a5_x(&self, r: f64, mu: f64, ex: f64) -> f64 {
        if mu.abs() == 1.0 {
            return 0.0;
        }
        -self.c_e * (1.0 - mu * mu) / r.sqrt() * ex
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Treatment of the `x = 0` and `x = L` faces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum XBoundary {
    /// Inflow ghost = boundary-cell trace rescaled so its density equals the target.
    ChargeNeutral { left: f64, right: f64 },
    /// Zero inflow.
    Vacuum,
    /// Test-only periodic wrap.
    Periodic,
}

/// Outward mass flux (per unit time) through the domain boundary, per component.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct BoundaryFlux {
    pub x_left: [f64; MODES],
    pub x_right: [f64; MODES],
    pub r_top: [f64; MODES],
}

impl BoundaryFlux {
    pub fn total(&self, c: usize) -> f64 {
        self.x_left[c] + self.x_right[c] + self.r_top[c]
    }

    /// Net particle current leaving through the contacts, component `c`.
    pub fn contact_current(&self, c: usize) -> f64 {
        self.x_right[c] - self.x_left[c]
    }

    fn add(&mut self, o: &BoundaryFlux) {
        for c in 0..MODES {
            self.x_left[c] += o.x_left[c];
            self.x_right[c] += o.x_right[c];
            self.r_top[c] += o.r_top[c];
        }
    }

    pub fn scaled(&self, s: f64) -> BoundaryFlux {
        let f = |v: [f64; MODES]| v.map(|x| x * s);
        BoundaryFlux {
            x_left: f(self.x_left),
            x_right: f(self.x_right),
            r_top: f(self.r_top),
        }
    }

    pub fn combine(&self, s: f64, o: &BoundaryFlux) -> BoundaryFlux {
        let mut out = *self;
        out.add(&o.scaled(s));
        out
    }
}

type Mom = [f64; 3];

/// `int_a^b r^q xi^p dr`, `p = 0, 1, 2`, exact for `q` in `{-1/2, 0, 1/2}`.
fn r_moments(a: f64, b: f64, q: f64, rule: &QuadratureRule) -> Mom {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mut out = [0.0; 3];
    for (s, w) in rule.mapped(a.sqrt(), b.sqrt()) {
        let r = s * s;
        let xi = (r - c) / h;
        let v = if q == 0.5 {
            s
        } else if q == -0.5 {
            if s == 0.0 {
                continue;
            }
            1.0 / s
        } else {
            1.0
        };
        let base = v * 2.0 * s * w;
        out[0] += base;
        out[1] += base * xi;
        out[2] += base * xi * xi;
    }
    out
}

/// `int g(mu) xi^p dmu` for polynomial `g`, split at `mu = 0`.
fn mu_moments(a: f64, b: f64, g: impl Fn(f64) -> f64, rule: &QuadratureRule) -> Mom {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mut out = [0.0; 3];
    let mut pieces = vec![(a, b)];
    if a < 0.0 && b > 0.0 {
        pieces = vec![(a, 0.0), (0.0, b)];
    }
    for (lo, hi) in pieces {
        for (mu, w) in rule.mapped(lo, hi) {
            let xi = (mu - c) / h;
            let v = g(mu) * w;
            out[0] += v;
            out[1] += v * xi;
            out[2] += v * xi * xi;
        }
    }
    out
}

/// `(dx/2) int_lo^hi (e0 + e1 xi) xi^p dxi`.
fn linear_moments(e0: f64, e1: f64, lo: f64, hi: f64, dx: f64) -> Mom {
    let pw = |p: i32| hi.powi(p) - lo.powi(p);
    let mut out = [0.0; 3];
    for (p, o) in out.iter_mut().enumerate() {
        let p = p as i32;
        *o = 0.5 * dx * (e0 * pw(p + 1) / (p + 1) as f64 + e1 * pw(p + 2) / (p + 2) as f64);
    }
    out
}

/// x-moments of `E`, `E+`, `E-` on one cell.
#[derive(Debug, Clone, Copy)]
struct FieldMoments {
    full: Mom,
    pos: Mom,
    neg: Mom,
}

fn field_moments(e0: f64, e1: f64, dx: f64) -> FieldMoments {
    let full = linear_moments(e0, e1, -1.0, 1.0, dx);
    let zero = [0.0; 3];
    let (pos, neg) = if e1 == 0.0 {
        if e0 >= 0.0 {
            (full, zero)
        } else {
            (zero, full)
        }
    } else {
        let root = (-e0 / e1).clamp(-1.0, 1.0);
        let lower = linear_moments(e0, e1, -1.0, root, dx);
        let upper = linear_moments(e0, e1, root, 1.0, dx);
        if e1 > 0.0 {
            (upper, lower)
        } else {
            (lower, upper)
        }
    };
    FieldMoments { full, pos, neg }
}

/// Which side supplies the upwind trace.
#[derive(Clone, Copy)]
enum Side {
    Lower,
    Upper,
}

/// Face integral `int a Phi_hat v` over the two tangential dimensions.
///
/// Traces are in the reduced basis `(1, xi_1, xi_2)`; the coefficient is
/// `coef * g1 * g2` summed over the pieces.
#[inline]
fn face_flux(lower: &Mom, upper: &Mom, pieces: &[(f64, &Mom, &Mom, Side)]) -> Mom {
    const E1: [usize; 3] = [0, 1, 0];
    const E2: [usize; 3] = [0, 0, 1];
    let mut f = [0.0; 3];
    for &(coef, m1, m2, side) in pieces {
        if coef == 0.0 {
            continue;
        }
        let u = match side {
            Side::Lower => lower,
            Side::Upper => upper,
        };
        for q in 0..3 {
            let mut acc = 0.0;
            for b in 0..3 {
                acc += u[b] * m1[E1[q] + E1[b]] * m2[E2[q] + E2[b]];
            }
            f[q] += coef * acc;
        }
    }
    f
}

/// Basis exponents `(x, r, mu)` of `T, X, R, M`.
const EXPS: [[usize; 3]; 4] = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]];

#[inline]
fn volume(u: &[f64; 4], mx: &Mom, mr: &Mom, mm: &Mom) -> f64 {
    (0..4)
        .map(|b| u[b] * mx[EXPS[b][0]] * mr[EXPS[b][1]] * mm[EXPS[b][2]])
        .sum()
}

/// Precomputed geometry for the transport residual.
#[derive(Debug, Clone)]
pub struct TransportOperator {
    pub coeffs: TransportCoefficients,
    grid: PhaseGrid,
    one_x: Vec<Mom>,
    sqrt_r: Vec<Mom>,
    inv_sqrt_r: Vec<Mom>,
    mu: Vec<Mom>,
    mu_pos: Vec<Mom>,
    mu_neg: Vec<Mom>,
    one_minus_mu2: Vec<Mom>,
    sqrt_r_edge: Vec<f64>,
    sin2_mu_edge: Vec<f64>,
}

impl TransportOperator {
    pub fn new(grid: &PhaseGrid, coeffs: TransportCoefficients) -> TransportOperator {
        let rule = QuadratureRule::gauss_legendre(4).expect("four-point rule");
        let r_mom = |q: f64| -> Vec<Mom> {
            (0..grid.nr)
                .map(|k| r_moments(grid.r_edges[k], grid.r_edges[k + 1], q, &rule))
                .collect()
        };
        let mu_mom = |g: &dyn Fn(f64) -> f64| -> Vec<Mom> {
            (0..grid.nmu)
                .map(|m| mu_moments(grid.mu_edges[m], grid.mu_edges[m + 1], g, &rule))
                .collect()
        };
        TransportOperator {
            coeffs,
            grid: grid.clone(),
            one_x: (0..grid.nx)
                .map(|i| linear_moments(1.0, 0.0, -1.0, 1.0, grid.dx(i)))
                .collect(),
            sqrt_r: r_mom(0.5),
            inv_sqrt_r: r_mom(-0.5),
            mu: mu_mom(&|m| m),
            mu_pos: mu_mom(&|m| m.max(0.0)),
            mu_neg: mu_mom(&|m| m.min(0.0)),
            one_minus_mu2: mu_mom(&|m| 1.0 - m * m),
            sqrt_r_edge: grid.r_edges.iter().map(|r| r.sqrt()).collect(),
            sin2_mu_edge: grid.mu_edges.iter().map(|m| 1.0 - m * m).collect(),
        }
    }

    pub fn from_scaling(grid: &PhaseGrid, scaling: &ScalingContext) -> TransportOperator {
        TransportOperator::new(grid, TransportCoefficients::from_scaling(scaling))
    }

    /// Largest `sum_d |a_d| / h_d` over cells; `a5` uses its cell-average radial factor.
    pub fn max_rate(&self, efield_mean: &[f64], efield_slope: &[f64]) -> f64 {
        let g = &self.grid;
        let (cv, ce) = (self.coeffs.c_v, self.coeffs.c_e.abs());
        let mut best: f64 = 0.0;
        for i in 0..g.nx {
            let emax = efield_mean[i].abs() + efield_slope[i].abs();
            for k in 0..g.nr {
                let sr = self.sqrt_r_edge[k + 1];
                let inv = self.inv_sqrt_r[k][0] / g.dr(k);
                for m in 0..g.nmu {
                    let (a, b) = (g.mu_edges[m], g.mu_edges[m + 1]);
                    let mu_max = a.abs().max(b.abs());
                    let sin2 = if a < 0.0 && b > 0.0 {
                        1.0
                    } else {
                        (1.0 - a * a).max(1.0 - b * b)
                    };
                    let rate = cv * sr * mu_max / g.dx(i)
                        + 2.0 * ce * sr * mu_max * emax / g.dr(k)
                        + ce * sin2 * inv * emax / g.dmu(m);
                    best = best.max(rate);
                }
            }
        }
        best
    }

    /// Ghost scale factors `target / rho` at the two contacts.
    pub fn contact_scales(&self, field: &DofField, left: f64, right: f64) -> Result<(f64, f64)> {
        let g = &self.grid;
        let c = &field.comps[0];
        let trace = |i: usize, s: f64| -> f64 {
            let mut rho = 0.0;
            for k in 0..g.nr {
                for m in 0..g.nmu {
                    let idx = g.index(i, k, m);
                    rho += (c.t[idx] + s * c.x[idx]) * g.dr(k) * g.dmu(m);
                }
            }
            rho
        };
        let (rl, rr) = (trace(0, -1.0), trace(g.nx - 1, 1.0));
        for (name, rho) in [("left", rl), ("right", rr)] {
            if !(rho > 0.0) || !rho.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-positive density {rho:e} at the {name} contact; cannot rescale the inflow ghost"
                )));
            }
        }
        Ok((left / rl, right / rr))
    }

    /// Add the transport rate of change to `out`; returns the outward boundary fluxes.
    pub fn apply(
        &self,
        field: &DofField,
        efield_mean: &[f64],
        efield_slope: &[f64],
        boundary: XBoundary,
        out: &mut DofField,
    ) -> Result<BoundaryFlux> {
        let g = &self.grid;
        let (nx, nr, nmu) = (g.nx, g.nr, g.nmu);
        let ghost = match boundary {
            XBoundary::ChargeNeutral { left, right } => Some(self.contact_scales(field, left, right)?),
            XBoundary::Vacuum => Some((0.0, 0.0)),
            XBoundary::Periodic => None,
        };
        let cv = self.coeffs.c_v;
        let ce = self.coeffs.c_e;
        let slab = g.slab();
        let fm: Vec<FieldMoments> = (0..nx)
            .map(|i| field_moments(efield_mean[i], efield_slope[i], g.dx(i)))
            .collect();
        let f = &field.comps;
        let load =
            |c: usize, idx: usize| -> [f64; 4] { [f[c].t[idx], f[c].x[idx], f[c].r[idx], f[c].m[idx]] };

        let flux = out
            .slabs_mut(slab)
            .into_par_iter()
            .enumerate()
            .map(|(i, outs)| {
                let mut tally = BoundaryFlux::default();
                let dx = g.dx(i);
                let e = &fm[i];
                let ox = &self.one_x[i];
                for c in 0..MODES {
                    for k in 0..nr {
                        let dr = g.dr(k);
                        for m in 0..nmu {
                            let dmu = g.dmu(m);
                            let loc = k * nmu + m;
                            let u = load(c, i * slab + loc);
                            let mut res = [0.0; 4];

                            // volume terms
                            res[1] += 2.0 / dx * cv * volume(&u, ox, &self.sqrt_r[k], &self.mu[m]);
                            res[2] +=
                                2.0 / dr * (-2.0 * ce) * volume(&u, &e.full, &self.sqrt_r[k], &self.mu[m]);
                            res[3] += 2.0 / dmu
                                * (-ce)
                                * volume(&u, &e.full, &self.inv_sqrt_r[k], &self.one_minus_mu2[m]);

                            // x faces, tangential (r, mu)
                            let xt = |u: &[f64; 4], s: f64| [u[0] + s * u[1], u[2], u[3]];
                            let xpieces = [
                                (cv, &self.sqrt_r[k], &self.mu_pos[m], Side::Lower),
                                (cv, &self.sqrt_r[k], &self.mu_neg[m], Side::Upper),
                            ];
                            let own_lo = xt(&u, -1.0);
                            let own_hi = xt(&u, 1.0);
                            let left_nb = if i > 0 {
                                Some(xt(&load(c, (i - 1) * slab + loc), 1.0))
                            } else {
                                match ghost {
                                    Some((s, _)) => Some(own_lo.map(|v| s * v)),
                                    None => Some(xt(&load(c, (nx - 1) * slab + loc), 1.0)),
                                }
                            };
                            let right_nb = if i + 1 < nx {
                                Some(xt(&load(c, (i + 1) * slab + loc), -1.0))
                            } else {
                                match ghost {
                                    Some((_, s)) => Some(own_hi.map(|v| s * v)),
                                    None => Some(xt(&load(c, loc), -1.0)),
                                }
                            };
                            let fr = face_flux(&own_hi, &right_nb.unwrap(), &xpieces);
                            let fl = face_flux(&left_nb.unwrap(), &own_lo, &xpieces);
                            res[0] += fl[0] - fr[0];
                            res[2] += fl[1] - fr[1];
                            res[3] += fl[2] - fr[2];
                            res[1] -= fl[0] + fr[0];
                            if ghost.is_some() {
                                if i == 0 {
                                    tally.x_left[c] -= fl[0];
                                }
                                if i + 1 == nx {
                                    tally.x_right[c] += fr[0];
                                }
                            }

                            // r faces, tangential (x, mu)
                            let rt = |u: &[f64; 4], s: f64| [u[0] + s * u[2], u[1], u[3]];
                            let rpieces = |coef: f64| {
                                [
                                    (coef, &e.pos, &self.mu_pos[m], Side::Upper),
                                    (coef, &e.neg, &self.mu_neg[m], Side::Upper),
                                    (coef, &e.pos, &self.mu_neg[m], Side::Lower),
                                    (coef, &e.neg, &self.mu_pos[m], Side::Lower),
                                ]
                            };
                            let own_lo = rt(&u, -1.0);
                            let own_hi = rt(&u, 1.0);
                            let top = -2.0 * ce * self.sqrt_r_edge[k + 1];
                            let upper_nb = if k + 1 < nr {
                                rt(&load(c, i * slab + loc + nmu), -1.0)
                            } else {
                                [0.0; 3]
                            };
                            let fr = face_flux(&own_hi, &upper_nb, &rpieces(top));
                            let bottom = -2.0 * ce * self.sqrt_r_edge[k];
                            let fl = if k > 0 {
                                let lower_nb = rt(&load(c, i * slab + loc - nmu), 1.0);
                                face_flux(&lower_nb, &own_lo, &rpieces(bottom))
                            } else {
                                debug_assert_eq!(bottom, 0.0);
                                [0.0; 3]
                            };
                            res[0] += fl[0] - fr[0];
                            res[1] += fl[1] - fr[1];
                            res[3] += fl[2] - fr[2];
                            res[2] -= fl[0] + fr[0];
                            if k + 1 == nr {
                                tally.r_top[c] += fr[0];
                            }

                            // mu faces, tangential (x, r)
                            let mt = |u: &[f64; 4], s: f64| [u[0] + s * u[3], u[1], u[2]];
                            let mpieces = |coef: f64| {
                                [
                                    (coef, &e.pos, &self.inv_sqrt_r[k], Side::Upper),
                                    (coef, &e.neg, &self.inv_sqrt_r[k], Side::Lower),
                                ]
                            };
                            let own_lo = mt(&u, -1.0);
                            let own_hi = mt(&u, 1.0);
                            let fr = if m + 1 < nmu {
                                let nb = mt(&load(c, i * slab + loc + 1), -1.0);
                                face_flux(&own_hi, &nb, &mpieces(-ce * self.sin2_mu_edge[m + 1]))
                            } else {
                                debug_assert_eq!(self.sin2_mu_edge[m + 1], 0.0);
                                [0.0; 3]
                            };
                            let fl = if m > 0 {
                                let nb = mt(&load(c, i * slab + loc - 1), 1.0);
                                face_flux(&nb, &own_lo, &mpieces(-ce * self.sin2_mu_edge[m]))
                            } else {
                                debug_assert_eq!(self.sin2_mu_edge[m], 0.0);
                                [0.0; 3]
                            };
                            res[0] += fl[0] - fr[0];
                            res[1] += fl[1] - fr[1];
                            res[2] += fl[2] - fr[2];
                            res[3] -= fl[0] + fr[0];

                            let vol = dx * dr * dmu;
                            outs[c][0][loc] += res[0] / vol;
                            for a in 1..4 {
                                outs[c][a][loc] += 3.0 * res[a] / vol;
                            }
                        }
                    }
                }
                tally
            })
            .reduce(BoundaryFlux::default, |mut a, b| {
                a.add(&b);
                a
            });
        Ok(flux)
    }
}
