//! Cartesian `(x, r, mu)` grid, the P1 DG basis and the coefficient storage.
//!
//! On a cell with centre `(x_i, r_k, mu_m)` and widths `(dx, dr, dmu)` the
//! local expansion is `T + X xi_x + R xi_r + M xi_mu` with
//! `xi_x = (x - x_i) / (dx / 2)` and so on. The basis is orthogonal with
//! mass matrix `vol * diag(1, 1/3, 1/3, 1/3)`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpc::MODES;
use crate::quadrature::QuadratureRule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub nx: usize,
    pub nr: usize,
    pub nmu: usize,
    pub x_edges: Vec<f64>,
    pub r_edges: Vec<f64>,
    pub mu_edges: Vec<f64>,
}

fn uniform_edges(n: usize, a: f64, b: f64) -> Vec<f64> {
    let mut e: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    e[0] = a;
    e[n] = b;
    e
}

fn check_edges(name: &str, e: &[f64], lo: f64, hi: f64) -> Result<()> {
    if e.len() < 2 {
        return Err(Error::Config(format!("{name}: need at least one cell")));
    }
    if e[0] != lo || e[e.len() - 1] != hi {
        return Err(Error::Config(format!(
            "{name}: edges must span [{lo}, {hi}], got [{}, {}]",
            e[0],
            e[e.len() - 1]
        )));
    }
    if e.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config(format!("{name}: edges must increase strictly")));
    }
    Ok(())
}

impl PhaseGrid {
    pub fn uniform(nx: usize, nr: usize, nmu: usize, r_max: f64) -> Result<PhaseGrid> {
        if nx == 0 || nr == 0 || nmu == 0 {
            return Err(Error::Config("grid cell counts must be positive".into()));
        }
        if !(r_max > 0.0) {
            return Err(Error::Config(format!("r_max = {r_max} must be positive")));
        }
        PhaseGrid::from_edges(
            uniform_edges(nx, 0.0, 1.0),
            uniform_edges(nr, 0.0, r_max),
            uniform_edges(nmu, -1.0, 1.0),
        )
    }

    pub fn from_edges(x_edges: Vec<f64>, r_edges: Vec<f64>, mu_edges: Vec<f64>) -> Result<Self> {
        check_edges("x", &x_edges, 0.0, 1.0)?;
        let r_max = *r_edges.last().unwrap_or(&0.0);
        check_edges("r", &r_edges, 0.0, r_max)?;
        check_edges("mu", &mu_edges, -1.0, 1.0)?;
        Ok(PhaseGrid {
            nx: x_edges.len() - 1,
            nr: r_edges.len() - 1,
            nmu: mu_edges.len() - 1,
            x_edges,
            r_edges,
            mu_edges,
        })
    }

    pub fn r_max(&self) -> f64 {
        self.r_edges[self.nr]
    }

    pub fn cells(&self) -> usize {
        self.nx * self.nr * self.nmu
    }

    /// Cells per x-slab.
    pub fn slab(&self) -> usize {
        self.nr * self.nmu
    }

    #[inline]
    pub fn index(&self, i: usize, k: usize, m: usize) -> usize {
        (i * self.nr + k) * self.nmu + m
    }

    pub fn unindex(&self, idx: usize) -> (usize, usize, usize) {
        let m = idx % self.nmu;
        let k = (idx / self.nmu) % self.nr;
        (idx / self.slab(), k, m)
    }

    #[inline]
    pub fn dx(&self, i: usize) -> f64 {
        self.x_edges[i + 1] - self.x_edges[i]
    }
    #[inline]
    pub fn dr(&self, k: usize) -> f64 {
        self.r_edges[k + 1] - self.r_edges[k]
    }
    #[inline]
    pub fn dmu(&self, m: usize) -> f64 {
        self.mu_edges[m + 1] - self.mu_edges[m]
    }
    #[inline]
    pub fn xc(&self, i: usize) -> f64 {
        0.5 * (self.x_edges[i] + self.x_edges[i + 1])
    }
    #[inline]
    pub fn rc(&self, k: usize) -> f64 {
        0.5 * (self.r_edges[k] + self.r_edges[k + 1])
    }
    #[inline]
    pub fn muc(&self, m: usize) -> f64 {
        0.5 * (self.mu_edges[m] + self.mu_edges[m + 1])
    }

    pub fn volume(&self, i: usize, k: usize, m: usize) -> f64 {
        self.dx(i) * self.dr(k) * self.dmu(m)
    }

    pub fn x_centers(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.xc(i)).collect()
    }

    /// Cell containing `v`; the last cell owns the right endpoint.
    pub fn locate(edges: &[f64], v: f64) -> Option<usize> {
        let n = edges.len() - 1;
        if !(v >= edges[0] && v <= edges[n]) {
            return None;
        }
        let p = edges.partition_point(|&e| e <= v);
        Some(p.saturating_sub(1).min(n - 1))
    }

    pub fn locate_point(&self, x: f64, r: f64, mu: f64) -> Result<(usize, usize, usize)> {
        match (
            Self::locate(&self.x_edges, x),
            Self::locate(&self.r_edges, r),
            Self::locate(&self.mu_edges, mu),
        ) {
            (Some(i), Some(k), Some(m)) => Ok((i, k, m)),
            _ => Err(Error::Domain(format!(
                "point ({x}, {r}, {mu}) lies outside the phase domain"
            ))),
        }
    }

    /// Scaled local coordinates of a point inside cell `(i, k, m)`.
    pub fn local(&self, (i, k, m): (usize, usize, usize), x: f64, r: f64, mu: f64) -> [f64; 3] {
        [
            (x - self.xc(i)) / (0.5 * self.dx(i)),
            (r - self.rc(k)) / (0.5 * self.dr(k)),
            (mu - self.muc(m)) / (0.5 * self.dmu(m)),
        ]
    }

    pub fn same_shape(&self, other: &PhaseGrid) -> bool {
        self == other
    }
}

/// P1 coefficients of one chaos component, struct-of-arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coeffs {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub m: Vec<f64>,
}

impl Coeffs {
    pub fn zeros(n: usize) -> Coeffs {
        Coeffs {
            t: vec![0.0; n],
            x: vec![0.0; n],
            r: vec![0.0; n],
            m: vec![0.0; n],
        }
    }

    pub fn arrays(&self) -> [&Vec<f64>; 4] {
        [&self.t, &self.x, &self.r, &self.m]
    }

    pub fn arrays_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.t, &mut self.x, &mut self.r, &mut self.m]
    }

    #[inline]
    pub fn eval(&self, idx: usize, xi: [f64; 3]) -> f64 {
        self.t[idx] + self.x[idx] * xi[0] + self.r[idx] * xi[1] + self.m[idx] * xi[2]
    }
}

/// Coefficients of both chaos components over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofField {
    pub comps: [Coeffs; MODES],
}

impl DofField {
    pub fn zeros(grid: &PhaseGrid) -> DofField {
        let n = grid.cells();
        DofField {
            comps: [Coeffs::zeros(n), Coeffs::zeros(n)],
        }
    }

    pub fn len(&self) -> usize {
        self.comps[0].t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &DofField) {
        for c in 0..MODES {
            for (a, b) in self.comps[c]
                .arrays_mut()
                .into_iter()
                .zip(other.comps[c].arrays())
            {
                for (u, v) in a.iter_mut().zip(b) {
                    *u += s * v;
                }
            }
        }
    }

    /// Disjoint mutable views of the coefficients, one per x-slab.
    pub fn slabs_mut(&mut self, slab: usize) -> Vec<[[&mut [f64]; 4]; MODES]> {
        fn split(c: &mut Coeffs, slab: usize) -> Vec<[&mut [f64]; 4]> {
            c.t.chunks_mut(slab)
                .zip(c.x.chunks_mut(slab))
                .zip(c.r.chunks_mut(slab))
                .zip(c.m.chunks_mut(slab))
                .map(|(((t, x), r), m)| [t, x, r, m])
                .collect()
        }
        let [c0, c1] = &mut self.comps;
        split(c0, slab)
            .into_iter()
            .zip(split(c1, slab))
            .map(|(a, b)| [a, b])
            .collect()
    }

    pub fn scale(&mut self, s: f64) {
        for c in 0..MODES {
            for a in self.comps[c].arrays_mut() {
                a.iter_mut().for_each(|v| *v *= s);
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.comps
            .iter()
            .all(|c| c.arrays().iter().all(|a| a.iter().all(|v| v.is_finite())))
    }

    /// First non-finite coefficient as `(component, cell)`.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        for (c, comp) in self.comps.iter().enumerate() {
            for a in comp.arrays() {
                if let Some(p) = a.iter().position(|v| !v.is_finite()) {
                    return Some((c, p));
                }
            }
        }
        None
    }

    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.arrays())
            .flat_map(|a| a.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &DofField) -> f64 {
        let mut out: f64 = 0.0;
        for c in 0..MODES {
            for (a, b) in self.comps[c].arrays().into_iter().zip(other.comps[c].arrays()) {
                for (u, v) in a.iter().zip(b) {
                    out = out.max((u - v).abs());
                }
            }
        }
        out
    }

    /// `int Phi_c` over the whole phase domain.
    pub fn mass(&self, grid: &PhaseGrid, component: usize) -> f64 {
        let t = &self.comps[component].t;
        let mut total = 0.0;
        for i in 0..grid.nx {
            let mut slab = 0.0;
            for k in 0..grid.nr {
                for m in 0..grid.nmu {
                    slab += t[grid.index(i, k, m)] * grid.dr(k) * grid.dmu(m);
                }
            }
            total += slab * grid.dx(i);
        }
        total
    }

    /// Evaluate component `c` at a physical point.
    pub fn evaluate(&self, grid: &PhaseGrid, component: usize, x: f64, r: f64, mu: f64) -> Result<f64> {
        if component >= MODES {
            return Err(Error::Domain(format!("chaos component {component} out of range")));
        }
        let cell = grid.locate_point(x, r, mu)?;
        let xi = grid.local(cell, x, r, mu);
        Ok(self.comps[component].eval(grid.index(cell.0, cell.1, cell.2), xi))
    }

    /// Write `(component, i, k, m, T, X, R, M)` rows plus a JSON header with the edges.
    pub fn write_snapshot(&self, grid: &PhaseGrid, csv: &Path, header: &Path, time: f64) -> Result<()> {
        let mut out = String::with_capacity(self.len() * 2 * 80);
        out.push_str("component,i,k,m,T,X,R,M\n");
        for c in 0..MODES {
            let comp = &self.comps[c];
            for idx in 0..self.len() {
                let (i, k, m) = grid.unindex(idx);
                out.push_str(&format!(
                    "{c},{i},{k},{m},{:e},{:e},{:e},{:e}\n",
                    comp.t[idx], comp.x[idx], comp.r[idx], comp.m[idx]
                ));
            }
        }
        let mut f = fs::File::create(csv).map_err(|e| Error::io(csv, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(csv, e))?;
        let head = serde_json::json!({
            "time": time,
            "components": MODES,
            "layout": "index = (i * nr + k) * nmu + m",
            "basis": "T + X xi_x + R xi_r + M xi_mu",
            "grid": grid,
        });
        fs::write(header, serde_json::to_string_pretty(&head).expect("json"))
            .map_err(|e| Error::io(header, e))
    }
}

/// Tensor-product Gauss rule on the reference cell `[-1, 1]^3`.
#[derive(Debug, Clone)]
pub struct CellQuadrature {
    pub rule: QuadratureRule,
}

impl CellQuadrature {
    pub fn new(points_per_dim: usize) -> Result<CellQuadrature> {
        Ok(CellQuadrature {
            rule: QuadratureRule::gauss_legendre(points_per_dim)?,
        })
    }

    /// Iterate `([xi_x, xi_r, xi_mu], weight)` with weights summing to 8.
    pub fn points(&self) -> impl Iterator<Item = ([f64; 3], f64)> + '_ {
        let q = &self.rule;
        (0..q.len()).flat_map(move |a| {
            (0..q.len()).flat_map(move |b| {
                (0..q.len()).map(move |c| {
                    (
                        [q.nodes[a], q.nodes[b], q.nodes[c]],
                        q.weights[a] * q.weights[b] * q.weights[c],
                    )
                })
            })
        })
    }
}

impl Default for CellQuadrature {
    fn default() -> Self {
        CellQuadrature::new(2).expect("two-point rule")
    }
}

/// Per-cell L2 projection of `f(x, r, mu)` onto P1.
pub fn l2_project(
    f: impl Fn(f64, f64, f64) -> f64 + Sync,
    grid: &PhaseGrid,
    quad: &CellQuadrature,
) -> Coeffs {
    let mut out = Coeffs::zeros(grid.cells());
    for idx in 0..grid.cells() {
        let (i, k, m) = grid.unindex(idx);
        let (mut s0, mut sx, mut sr, mut sm) = (0.0, 0.0, 0.0, 0.0);
        for (xi, w) in quad.points() {
            let v = f(
                grid.xc(i) + 0.5 * grid.dx(i) * xi[0],
                grid.rc(k) + 0.5 * grid.dr(k) * xi[1],
                grid.muc(m) + 0.5 * grid.dmu(m) * xi[2],
            ) * w
                / 8.0;
            s0 += v;
            sx += v * xi[0];
            sr += v * xi[1];
            sm += v * xi[2];
        }
        out.t[idx] = s0;
        out.x[idx] = 3.0 * sx;
        out.r[idx] = 3.0 * sr;
        out.m[idx] = 3.0 * sm;
    }
    out
}

/// P1 projection `(T_k, R_k)` of `e^{-r} sqrt(r) / 2` on each r-cell.
///
/// Integrates in `s = sqrt(r)` so the integrand is smooth at the origin.
pub fn maxwellian_projection(grid: &PhaseGrid) -> (Vec<f64>, Vec<f64>) {
    let q = QuadratureRule::gauss_legendre(24).expect("24-point rule");
    let mut t = Vec::with_capacity(grid.nr);
    let mut r = Vec::with_capacity(grid.nr);
    for k in 0..grid.nr {
        let (a, b) = (grid.r_edges[k], grid.r_edges[k + 1]);
        let (rc, h) = (grid.rc(k), 0.5 * grid.dr(k));
        let mut m0 = 0.0;
        let mut m1 = 0.0;
        for (s, w) in q.mapped(a.sqrt(), b.sqrt()) {
            let rr = s * s;
            // dr = 2 s ds
            let v = (-rr).exp() * s / 2.0 * 2.0 * s * w;
            m0 += v;
            m1 += v * (rr - rc) / h;
        }
        t.push(m0 / (b - a));
        r.push(3.0 * m1 / (b - a));
    }
    (t, r)
}
