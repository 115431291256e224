//! Charge density, doping profile and the 1D Poisson solve.
//!
//! Dimensionless form: `eps_r V'' = c_P (rho - N_D)`, `E = -V'`,
//! `V(0) = 0`, `V(1) = V0`. The source is P1 per x-cell, so `V` is a
//! piecewise cubic integrated in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DofField, PhaseGrid};
use crate::scaling::ScalingContext;

/// n+ / n / n+ doping profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceProfile {
    /// Device length [m].
    pub length: f64,
    /// Contact doping [1/m^3].
    pub n_plus: f64,
    /// Channel doping [1/m^3].
    pub n_channel: f64,
    /// Channel start and end as fractions of the length.
    pub channel_start: f64,
    pub channel_end: f64,
    /// Applied bias [V].
    pub bias: f64,
}

impl Default for DeviceProfile {
    fn default() -> Self {
        DeviceProfile {
            length: 1e-6,
            n_plus: 5e23,
            n_channel: 2e21,
            channel_start: 0.3,
            channel_end: 0.7,
            bias: 0.5,
        }
    }
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.n_plus > 0.0 && self.n_channel > 0.0) {
            return Err(Error::Config(
                "device length and doping levels must be positive".into(),
            ));
        }
        if !(0.0 < self.channel_start && self.channel_start < self.channel_end && self.channel_end < 1.0) {
            return Err(Error::Config(format!(
                "channel [{}, {}] must lie strictly inside (0, 1)",
                self.channel_start, self.channel_end
            )));
        }
        if !self.bias.is_finite() {
            return Err(Error::Config("bias must be finite".into()));
        }
        Ok(())
    }

    /// Uniform doping at the contact level: a neutral, field-free device at zero bias.
    pub fn uniform(n: f64) -> DeviceProfile {
        DeviceProfile {
            n_plus: n,
            n_channel: n,
            bias: 0.0,
            ..Default::default()
        }
    }

    /// Dimensionless doping at `x`.
    pub fn doping(&self, x: f64, scaling: &ScalingContext) -> f64 {
        let n = if x > self.channel_start && x < self.channel_end {
            self.n_channel
        } else {
            self.n_plus
        };
        scaling.doping_to_dimensionless(n)
    }

    /// Exact P1 projection `(mean, slope coefficient)` of the doping on `[a, b]`.
    pub fn doping_cell(&self, a: f64, b: f64, scaling: &ScalingContext) -> (f64, f64) {
        let h = b - a;
        let c = 0.5 * (a + b);
        let mut pieces = vec![a];
        for j in [self.channel_start, self.channel_end] {
            if j > a && j < b {
                pieces.push(j);
            }
        }
        pieces.push(b);
        let (mut m0, mut m1) = (0.0, 0.0);
        for w in pieces.windows(2) {
            let v = self.doping(0.5 * (w[0] + w[1]), scaling);
            // int xi over [w0, w1] with xi = (x - c) / (h/2)
            let len = w[1] - w[0];
            m0 += v * len;
            m1 += v * len * (0.5 * (w[0] + w[1]) - c) / (0.5 * h);
        }
        (m0 / h, 3.0 * m1 / h)
    }

    pub fn bias_dimensionless(&self, scaling: &ScalingContext) -> f64 {
        scaling.bias_to_dimensionless(self.bias)
    }
}

/// Charge density of component 0 as P1 data per x-cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Density {
    pub mean: Vec<f64>,
    pub slope: Vec<f64>,
}

impl Density {
    pub fn eval(&self, grid: &PhaseGrid, x: f64) -> f64 {
        let i = PhaseGrid::locate(&grid.x_edges, x).expect("x inside the device");
        let xi = (x - grid.xc(i)) / (0.5 * grid.dx(i));
        self.mean[i] + self.slope[i] * xi
    }
}

/// `rho(x) = sum_{k,m} [T + X xi_x] dr dmu`.
pub fn compute_density(field: &DofField, grid: &PhaseGrid) -> Density {
    let c = &field.comps[0];
    let mut mean = vec![0.0; grid.nx];
    let mut slope = vec![0.0; grid.nx];
    for i in 0..grid.nx {
        for k in 0..grid.nr {
            let dr = grid.dr(k);
            for m in 0..grid.nmu {
                let idx = grid.index(i, k, m);
                let w = dr * grid.dmu(m);
                mean[i] += c.t[idx] * w;
                slope[i] += c.x[idx] * w;
            }
        }
    }
    Density { mean, slope }
}

/// Potential and field from one Poisson solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldProfile {
    pub x_edges: Vec<f64>,
    /// `V` at cell edges.
    pub potential: Vec<f64>,
    /// P1 projection of `E` per cell: mean and slope coefficient.
    pub efield_mean: Vec<f64>,
    pub efield_slope: Vec<f64>,
    /// Per-cell data for exact evaluation.
    v_prime_left: Vec<f64>,
    source_mean: Vec<f64>,
    source_slope: Vec<f64>,
    kappa: f64,
}

impl FieldProfile {
    fn cell(&self, x: f64) -> (usize, f64) {
        let i = PhaseGrid::locate(&self.x_edges, x).expect("x inside the device");
        (i, x - self.x_edges[i])
    }

    /// Exact `V(x)` of the piecewise-cubic solution.
    pub fn potential_at(&self, x: f64) -> f64 {
        let (i, t) = self.cell(x);
        let h = self.x_edges[i + 1] - self.x_edges[i];
        let (s0, s1) = (self.source_mean[i], self.source_slope[i]);
        self.potential[i]
            + self.v_prime_left[i] * t
            + self.kappa * ((s0 - s1) * t * t / 2.0 + s1 * t * t * t / (3.0 * h))
    }

    /// Exact `E(x) = -V'(x)`.
    pub fn efield_at(&self, x: f64) -> f64 {
        let (i, t) = self.cell(x);
        let h = self.x_edges[i + 1] - self.x_edges[i];
        let (s0, s1) = (self.source_mean[i], self.source_slope[i]);
        -(self.v_prime_left[i] + self.kappa * ((s0 - s1) * t + s1 * t * t / h))
    }

    /// `eps_r V'' - c_P (rho - N_D)` at the midpoint of cell `i`, divided by `eps_r`.
    pub fn residual_at_midpoint(&self, i: usize) -> f64 {
        // V'' = kappa * s exactly; evaluate by differencing E around the midpoint
        let h = self.x_edges[i + 1] - self.x_edges[i];
        let xm = 0.5 * (self.x_edges[i] + self.x_edges[i + 1]);
        let d = 1e-3 * h;
        let vpp = -(self.efield_at(xm + d) - self.efield_at(xm - d)) / (2.0 * d);
        vpp - self.kappa * self.source_mean[i]
    }
}

/// Solve with `rho - N_D` given as P1 data per cell.
pub fn solve_poisson_source(
    grid: &PhaseGrid,
    source_mean: &[f64],
    source_slope: &[f64],
    kappa: f64,
    v0: f64,
) -> FieldProfile {
    let nx = grid.nx;
    // S1(x) = int_0^x s,  S2(x) = int_0^x S1
    let mut s1_left = vec![0.0; nx + 1];
    let mut s2_left = vec![0.0; nx + 1];
    for i in 0..nx {
        let h = grid.dx(i);
        let (a, b) = (source_mean[i], source_slope[i]);
        s1_left[i + 1] = s1_left[i] + a * h;
        s2_left[i + 1] = s2_left[i] + s1_left[i] * h + ((a - b) / 2.0 + b / 3.0) * h * h;
    }
    let vp0 = v0 - kappa * s2_left[nx];
    let mut potential = vec![0.0; nx + 1];
    let mut v_prime_left = vec![0.0; nx];
    for i in 0..=nx {
        let x = grid.x_edges[i];
        potential[i] = vp0 * x + kappa * s2_left[i];
        if i < nx {
            v_prime_left[i] = vp0 + kappa * s1_left[i];
        }
    }
    potential[0] = 0.0;
    potential[nx] = v0;
    let mut fp = FieldProfile {
        x_edges: grid.x_edges.clone(),
        potential,
        efield_mean: vec![0.0; nx],
        efield_slope: vec![0.0; nx],
        v_prime_left,
        source_mean: source_mean.to_vec(),
        source_slope: source_slope.to_vec(),
        kappa,
    };
    for i in 0..nx {
        let h = grid.dx(i);
        let (a, b) = (source_mean[i], source_slope[i]);
        // E(t) = -(vp + kappa[(a - b) t + b t^2 / h]), t = h (1 + xi) / 2
        // mean over xi and 3 * mean of E xi, in closed form
        let vp = fp.v_prime_left[i];
        let mean_t = h / 2.0;
        let mean_t2 = h * h / 3.0;
        let mean_t_xi = h / 6.0;
        let mean_t2_xi = h * h / 6.0;
        fp.efield_mean[i] = -(vp + kappa * ((a - b) * mean_t + b * mean_t2 / h));
        fp.efield_slope[i] = -3.0 * kappa * ((a - b) * mean_t_xi + b * mean_t2_xi / h);
    }
    fp
}

/// Solve for the device: `rho` from the field, doping from the profile.
pub fn solve_poisson(
    rho: &Density,
    grid: &PhaseGrid,
    profile: &DeviceProfile,
    scaling: &ScalingContext,
) -> FieldProfile {
    let mut s0 = Vec::with_capacity(grid.nx);
    let mut s1 = Vec::with_capacity(grid.nx);
    for i in 0..grid.nx {
        let (d0, d1) = profile.doping_cell(grid.x_edges[i], grid.x_edges[i + 1], scaling);
        s0.push(rho.mean[i] - d0);
        s1.push(rho.slope[i] - d1);
    }
    let kappa = scaling.c_p / scaling.constants.relative_permittivity;
    solve_poisson_source(grid, &s0, &s1, kappa, profile.bias_dimensionless(scaling))
}
