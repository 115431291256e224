//! Time stepping of the coupled system and moment extraction.
//!
//! Each Heun stage recomputes the density, solves Poisson, and evaluates
//! transport plus collision on the current state.

use serde::{Deserialize, Serialize};

use crate::collision::{apply_collision, CollisionMode, CollisionOperator, DensityOfStates};
use crate::error::{Error, Result};
use crate::gpc::{statistics, GpcBasis, Normalization, MODES};
use crate::grid::{maxwellian_projection, DofField, PhaseGrid};
use crate::kernels::KernelMatrices;
use crate::poisson::{compute_density, solve_poisson, DeviceProfile, FieldProfile};
use crate::quadrature::QuadratureRule;
use crate::scaling::{build_scaling, PhysicalConstants, ScalingContext, ScalingOverrides};
use crate::transport::{BoundaryFlux, TransportOperator, XBoundary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    StochasticRecombination,
    NoRecombination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub nr: usize,
    pub nmu: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            nx: 50,
            nr: 24,
            nmu: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollisionConfig {
    pub enabled: bool,
    /// Apply the recombination correction as a separate pass.
    pub split: bool,
    pub density_of_states: DensityOfStates,
    /// Gauss points per shell sub-interval.
    pub shell_order: usize,
}

impl Default for CollisionConfig {
    fn default() -> Self {
        CollisionConfig {
            enabled: true,
            split: false,
            density_of_states: DensityOfStates::WellBalanced,
            shell_order: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomConfig {
    pub basis: Normalization,
    /// Gauss points for the chaos integrals.
    pub quadrature_points: usize,
}

impl Default for RandomConfig {
    fn default() -> Self {
        RandomConfig {
            basis: Normalization::Orthonormal,
            quadrature_points: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Moment output interval [ps].
    pub moment_interval: f64,
    /// Phase-space snapshot interval [ps]; the final state is always written.
    pub snapshot_interval: Option<f64>,
    /// Progress log interval in steps.
    pub log_every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            moment_interval: 1.0,
            snapshot_interval: None,
            log_every: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub mode: RunMode,
    /// [ps]
    pub final_time: f64,
    pub cfl: f64,
    /// Hard cap on the number of steps; 0 means none.
    pub max_steps: usize,
    pub grid: GridConfig,
    pub device: DeviceProfile,
    pub collision: CollisionConfig,
    pub random: RandomConfig,
    pub scaling: ScalingOverrides,
    pub output: OutputConfig,
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            mode: RunMode::StochasticRecombination,
            final_time: 10.0,
            cfl: 0.3,
            max_steps: 0,
            grid: GridConfig::default(),
            device: DeviceProfile::default(),
            collision: CollisionConfig::default(),
            random: RandomConfig::default(),
            scaling: ScalingOverrides::default(),
            output: OutputConfig::default(),
            threads: 0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.final_time > 0.0) {
            return Err(Error::Config(format!(
                "final_time = {} must be positive",
                self.final_time
            )));
        }
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(Error::Config(format!("cfl = {} must lie in (0, 1)", self.cfl)));
        }
        if self.grid.nx == 0 || self.grid.nr == 0 || self.grid.nmu == 0 {
            return Err(Error::Config("grid cell counts must be positive".into()));
        }
        if !(self.output.moment_interval > 0.0) {
            return Err(Error::Config("output.moment_interval must be positive".into()));
        }
        if let Some(s) = self.output.snapshot_interval {
            if !(s > 0.0) {
                return Err(Error::Config("output.snapshot_interval must be positive".into()));
            }
        }
        if self.collision.shell_order == 0 {
            return Err(Error::Config("collision.shell_order must be positive".into()));
        }
        self.device.validate()
    }

    pub fn collision_mode(&self) -> CollisionMode {
        match (self.mode, self.collision.split) {
            (RunMode::NoRecombination, _) => CollisionMode::NoRecombination,
            (RunMode::StochasticRecombination, false) => CollisionMode::Full,
            (RunMode::StochasticRecombination, true) => CollisionMode::Split,
        }
    }
}

/// Component-0 charge-neutral initial state: `C(x) N_D(x) e^{-r} sqrt(r) / 2`.
pub fn initial_condition(grid: &PhaseGrid, profile: &DeviceProfile, scaling: &ScalingContext) -> DofField {
    let (t, r) = maxwellian_projection(grid);
    let mu_len: f64 = (0..grid.nmu).map(|m| grid.dmu(m)).sum();
    let rho_m: f64 = (0..grid.nr).map(|k| t[k] * grid.dr(k)).sum::<f64>() * mu_len;
    let mut f = DofField::zeros(grid);
    let c = &mut f.comps[0];
    for i in 0..grid.nx {
        let (d0, d1) = profile.doping_cell(grid.x_edges[i], grid.x_edges[i + 1], scaling);
        for k in 0..grid.nr {
            for m in 0..grid.nmu {
                let idx = grid.index(i, k, m);
                c.t[idx] = d0 * t[k] / rho_m;
                c.x[idx] = d1 * t[k] / rho_m;
                c.r[idx] = d0 * r[k] / rho_m;
            }
        }
    }
    f
}

/// Mass bookkeeping for one step, per component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub dt: f64,
    pub mass_before: [f64; MODES],
    pub mass_after: [f64; MODES],
    /// `dt`-weighted outward boundary flux over the step.
    pub boundary: BoundaryFlux,
    /// `dt`-weighted mass produced by the collision operator.
    pub collision_source: [f64; MODES],
}

impl StepRecord {
    /// `|dM + boundary outflow| / M`, ignoring the collision source.
    pub fn boundary_defect(&self, c: usize) -> f64 {
        let d = self.mass_after[c] - self.mass_before[c] + self.boundary.total(c);
        d.abs() / self.mass_before[0].abs()
    }

    /// Same, with the collision source included.
    pub fn full_defect(&self, c: usize) -> f64 {
        let d = self.mass_after[c] - self.mass_before[c] + self.boundary.total(c) - self.collision_source[c];
        d.abs() / self.mass_before[0].abs()
    }
}

struct Residual {
    rate: DofField,
    flux: BoundaryFlux,
    collision_mass: [f64; MODES],
    field: FieldProfile,
}

/// Solver state and precomputed operators.
pub struct Simulation {
    pub config: SimulationConfig,
    pub scaling: ScalingContext,
    pub grid: PhaseGrid,
    pub basis: GpcBasis,
    pub kernels: KernelMatrices,
    pub collision: Option<CollisionOperator>,
    pub transport: TransportOperator,
    pub state: DofField,
    pub time: f64,
    pub steps: usize,
    pub field: FieldProfile,
    pub boundary: XBoundary,
    pub ledger: Vec<StepRecord>,
    pool: Option<rayon::ThreadPool>,
}

impl Simulation {
    pub fn new(config: SimulationConfig) -> Result<Simulation> {
        Simulation::with_constants(config, PhysicalConstants::default())
    }

    pub fn with_constants(config: SimulationConfig, constants: PhysicalConstants) -> Result<Simulation> {
        config.validate()?;
        let scaling = build_scaling(constants, config.scaling)?;
        let grid = PhaseGrid::uniform(config.grid.nx, config.grid.nr, config.grid.nmu, scaling.r_max)?;
        let quad = QuadratureRule::gauss_legendre(config.random.quadrature_points)?;
        let basis = GpcBasis::new(config.random.basis, &quad);
        let kernels = KernelMatrices::new(&scaling, &basis, &quad)?;
        let collision = if config.collision.enabled {
            Some(CollisionOperator::build(
                &grid,
                &scaling,
                &kernels,
                config.collision_mode(),
                config.collision.density_of_states,
                config.collision.shell_order,
            )?)
        } else {
            None
        };
        let transport = TransportOperator::from_scaling(&grid, &scaling);
        let state = initial_condition(&grid, &config.device, &scaling);
        let boundary = XBoundary::ChargeNeutral {
            left: config.device.doping(0.0, &scaling),
            right: config.device.doping(1.0, &scaling),
        };
        let field = solve_poisson(&compute_density(&state, &grid), &grid, &config.device, &scaling);
        let pool = if config.threads > 0 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.threads)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Simulation {
            config,
            scaling,
            grid,
            basis,
            kernels,
            collision,
            transport,
            state,
            time: 0.0,
            steps: 0,
            field,
            boundary,
            ledger: Vec::new(),
            pool,
        })
    }

    fn residual(&self, u: &DofField) -> Result<Residual> {
        let g = &self.grid;
        let field = solve_poisson(&compute_density(u, g), g, &self.config.device, &self.scaling);
        let mut rate = DofField::zeros(g);
        let mut collision_mass = [0.0; MODES];
        if let Some(op) = &self.collision {
            apply_collision(u, op, g, &mut rate);
            for (c, m) in collision_mass.iter_mut().enumerate() {
                *m = rate.mass(g, c);
            }
        }
        let flux = self.transport.apply(
            u,
            &field.efield_mean,
            &field.efield_slope,
            self.boundary,
            &mut rate,
        )?;
        Ok(Residual {
            rate,
            flux,
            collision_mass,
            field,
        })
    }

    /// CFL step for the current state.
    pub fn stable_dt(&self) -> f64 {
        let mut rate = self
            .transport
            .max_rate(&self.field.efield_mean, &self.field.efield_slope);
        if let Some(op) = &self.collision {
            rate += op.max_loss_rate();
        }
        self.config.cfl / rate
    }

    /// One Heun step of size at most `dt_max`.
    pub fn step(&mut self, dt_max: f64) -> Result<StepRecord> {
        let run = |s: &mut Simulation| -> Result<StepRecord> {
            let g = &s.grid;
            let dt = s.stable_dt().min(dt_max);
            let before = [s.state.mass(g, 0), s.state.mass(g, 1)];
            let r1 = s.residual(&s.state)?;
            let mut u1 = s.state.clone();
            u1.axpy(dt, &r1.rate);
            let r2 = s.residual(&u1)?;
            let mut next = s.state.clone();
            next.axpy(0.5 * dt, &r1.rate);
            next.axpy(0.5 * dt, &r2.rate);
            if let Some((c, idx)) = next.first_non_finite() {
                let (i, k, m) = g.unindex(idx);
                return Err(Error::Numerical(format!(
                    "non-finite coefficient at step {} (t = {:.6} ps), component {c}, cell (i={i}, k={k}, m={m})",
                    s.steps + 1,
                    s.time + dt
                )));
            }
            let after = [next.mass(g, 0), next.mass(g, 1)];
            let boundary = r1.flux.scaled(0.5 * dt).combine(0.5 * dt, &r2.flux);
            let mut collision_source = [0.0; MODES];
            for c in 0..MODES {
                collision_source[c] = 0.5 * dt * (r1.collision_mass[c] + r2.collision_mass[c]);
            }
            s.state = next;
            s.time += dt;
            s.steps += 1;
            s.field = r2.field;
            let rec = StepRecord {
                step: s.steps,
                time: s.time,
                dt,
                mass_before: before,
                mass_after: after,
                boundary,
                collision_source,
            };
            s.ledger.push(rec);
            Ok(rec)
        };
        match self.pool.take() {
            Some(pool) => {
                let out = pool.install(|| run(self));
                self.pool = Some(pool);
                out
            }
            None => run(self),
        }
    }

    /// Advance to `t_end`, landing on it exactly.
    pub fn advance_to(&mut self, t_end: f64) -> Result<()> {
        while self.time < t_end * (1.0 - 1e-14) {
            if self.config.max_steps > 0 && self.steps >= self.config.max_steps {
                break;
            }
            let rec = self.step(t_end - self.time)?;
            let every = self.config.output.log_every;
            if every > 0 && rec.step % every == 0 {
                log::info!(
                    "step {:>7}  t = {:.5} ps  dt = {:.3e}  mass = {:.6e}",
                    rec.step,
                    rec.time,
                    rec.dt,
                    rec.mass_after[0]
                );
            }
        }
        Ok(())
    }

    /// Refresh the stored field from the current state.
    pub fn refresh_field(&mut self) {
        self.field = solve_poisson(
            &compute_density(&self.state, &self.grid),
            &self.grid,
            &self.config.device,
            &self.scaling,
        );
    }

    pub fn moments(&self) -> MomentSet {
        extract_moments(
            &self.state,
            &self.grid,
            &self.field,
            &self.basis,
            &self.scaling,
            self.time,
        )
    }
}

/// Macroscopic and statistical output at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub time: f64,
    pub x: Vec<f64>,
    pub density: Vec<f64>,
    /// `int a1 Phi_0`, the particle flux along x.
    pub momentum: Vec<f64>,
    /// Mean energy per particle in `K_B T_L`.
    pub energy: Vec<f64>,
    pub velocity: Vec<f64>,
    pub efield: Vec<f64>,
    pub potential: Vec<f64>,
    /// Cells where `rho <= 0` and velocity/energy were set to zero.
    pub degenerate: Vec<usize>,
    /// Cell-average `E[f]`, `Var[f]`, `S[f]` in grid order.
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub stddev: Vec<f64>,
}

pub fn extract_moments(
    state: &DofField,
    grid: &PhaseGrid,
    field: &FieldProfile,
    basis: &GpcBasis,
    scaling: &ScalingContext,
    time: f64,
) -> MomentSet {
    let rule = QuadratureRule::gauss_legendre(4).expect("four-point rule");
    let sqrt_r: Vec<[f64; 2]> = (0..grid.nr)
        .map(|k| {
            let (a, b) = (grid.r_edges[k], grid.r_edges[k + 1]);
            let (c, h) = (grid.rc(k), 0.5 * grid.dr(k));
            let mut m = [0.0; 2];
            for (s, w) in rule.mapped(a.sqrt(), b.sqrt()) {
                let v = s * 2.0 * s * w;
                m[0] += v;
                m[1] += v * (s * s - c) / h;
            }
            m
        })
        .collect();
    let c0 = &state.comps[0];
    let n = grid.nx;
    let mut ms = MomentSet {
        time,
        x: grid.x_centers(),
        density: vec![0.0; n],
        momentum: vec![0.0; n],
        energy: vec![0.0; n],
        velocity: vec![0.0; n],
        efield: field.efield_mean.clone(),
        potential: grid.x_centers().iter().map(|&x| field.potential_at(x)).collect(),
        degenerate: Vec::new(),
        mean: Vec::with_capacity(grid.cells()),
        variance: Vec::with_capacity(grid.cells()),
        stddev: Vec::with_capacity(grid.cells()),
    };
    for i in 0..n {
        let (mut rho, mut mom, mut en) = (0.0, 0.0, 0.0);
        for k in 0..grid.nr {
            let dr = grid.dr(k);
            for m in 0..grid.nmu {
                let idx = grid.index(i, k, m);
                let (t, r, mu) = (c0.t[idx], c0.r[idx], c0.m[idx]);
                let dmu = grid.dmu(m);
                rho += t * dr * dmu;
                en += (t * dr * grid.rc(k) + r * dr * dr / 6.0) * dmu;
                // int sqrt(r) mu (T + R xi_r + M xi_mu)
                let mu_int = dmu * grid.muc(m);
                let mu_xi = dmu * dmu / 6.0;
                mom += (t * sqrt_r[k][0] + r * sqrt_r[k][1]) * mu_int + mu * sqrt_r[k][0] * mu_xi;
            }
        }
        ms.density[i] = rho;
        ms.momentum[i] = scaling.c_v * mom;
        if rho > 0.0 {
            ms.energy[i] = en / rho;
            ms.velocity[i] = ms.momentum[i] / rho;
        } else {
            ms.degenerate.push(i);
        }
    }
    for idx in 0..grid.cells() {
        let st = statistics(&[state.comps[0].t[idx], state.comps[1].t[idx]], basis);
        ms.mean.push(st.mean);
        ms.variance.push(st.variance);
        ms.stddev.push(st.stddev);
    }
    ms
}

/// Differences between two moment series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentDifference {
    pub name: String,
    /// `max |a - b| / max |a|` over x and time.
    pub max_relative: f64,
    /// `||a - b||_2 / ||a||_2` over x and time.
    pub l2_relative: f64,
    pub differs: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub tolerance: f64,
    pub moments: Vec<MomentDifference>,
    /// Per-x relative difference profiles at the last common time.
    pub profiles: Vec<(String, Vec<f64>)>,
    pub x: Vec<f64>,
    pub time: f64,
}

impl ComparisonReport {
    pub fn get(&self, name: &str) -> Option<&MomentDifference> {
        self.moments.iter().find(|m| m.name == name)
    }

    pub fn differing(&self) -> Vec<&str> {
        self.moments
            .iter()
            .filter(|m| m.differs)
            .map(|m| m.name.as_str())
            .collect()
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "comparison at t = {} ps, tolerance {:e}\n",
            self.time, self.tolerance
        );
        for m in &self.moments {
            s.push_str(&format!(
                "{:<10} max_rel = {:.6e}  l2_rel = {:.6e}  {}\n",
                m.name,
                m.max_relative,
                m.l2_relative,
                if m.differs { "DIFFERS" } else { "agrees" }
            ));
        }
        s
    }
}

fn named(ms: &MomentSet) -> [(&'static str, &Vec<f64>); 6] {
    [
        ("density", &ms.density),
        ("momentum", &ms.momentum),
        ("energy", &ms.energy),
        ("velocity", &ms.velocity),
        ("efield", &ms.efield),
        ("potential", &ms.potential),
    ]
}

pub fn compare_runs(a: &[MomentSet], b: &[MomentSet], tolerance: f64) -> Result<ComparisonReport> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::Usage(format!(
            "moment series lengths differ or are empty ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    for (p, q) in a.iter().zip(b) {
        if p.x.len() != q.x.len() || p.x.iter().zip(&q.x).any(|(u, v)| (u - v).abs() > 1e-12) {
            return Err(Error::Usage("runs use different x grids".into()));
        }
        if (p.time - q.time).abs() > 1e-9 * p.time.abs().max(1.0) {
            return Err(Error::Usage(format!(
                "output times differ: {} vs {}",
                p.time, q.time
            )));
        }
    }
    let mut moments = Vec::new();
    for j in 0..6 {
        let name = named(&a[0])[j].0;
        let (mut dmax, mut amax, mut d2, mut a2) = (0.0f64, 0.0f64, 0.0, 0.0);
        for (p, q) in a.iter().zip(b) {
            let (u, v) = (named(p)[j].1, named(q)[j].1);
            for (x, y) in u.iter().zip(v) {
                dmax = dmax.max((x - y).abs());
                amax = amax.max(x.abs());
                d2 += (x - y) * (x - y);
                a2 += x * x;
            }
        }
        let rel = |d: f64, s: f64| {
            if s > 0.0 {
                d / s
            } else if d > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        };
        let max_relative = rel(dmax, amax);
        moments.push(MomentDifference {
            name: name.to_string(),
            max_relative,
            l2_relative: rel(d2.sqrt(), a2.sqrt()),
            differs: max_relative > tolerance,
        });
    }
    let (la, lb) = (a.last().unwrap(), b.last().unwrap());
    let profiles = (0..6)
        .map(|j| {
            let (name, u) = named(la)[j];
            let v = named(lb)[j].1;
            let scale = u.iter().fold(0.0f64, |s, x| s.max(x.abs()));
            let prof = u
                .iter()
                .zip(v)
                .map(|(x, y)| if scale > 0.0 { (x - y) / scale } else { 0.0 })
                .collect();
            (name.to_string(), prof)
        })
        .collect();
    Ok(ComparisonReport {
        tolerance,
        moments,
        profiles,
        x: la.x.clone(),
        time: la.time,
    })
}

/// Relative deviation of the current from its spatial mean: `max |M - <M>| / |<M>|`.
pub fn current_flatness(ms: &MomentSet) -> f64 {
    let n = ms.momentum.len() as f64;
    let mean = ms.momentum.iter().sum::<f64>() / n;
    ms.momentum.iter().map(|m| (m - mean).abs()).fold(0.0, f64::max) / mean.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mode: RunMode) -> SimulationConfig {
        SimulationConfig {
            mode,
            final_time: 0.05,
            grid: GridConfig {
                nx: 10,
                nr: 24,
                nmu: 4,
            },
            ..Default::default()
        }
    }

    #[test]
    fn config_validation() {
        let mut c = SimulationConfig::default();
        c.validate().unwrap();
        c.cfl = 1.0;
        assert!(c.validate().is_err());
        c.cfl = 0.3;
        c.final_time = 0.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn initial_condition_is_neutral() {
        let sim = Simulation::new(small(RunMode::StochasticRecombination)).unwrap();
        let rho = compute_density(&sim.state, &sim.grid);
        for i in 0..sim.grid.nx {
            let (d0, _) =
                sim.config
                    .device
                    .doping_cell(sim.grid.x_edges[i], sim.grid.x_edges[i + 1], &sim.scaling);
            assert!((rho.mean[i] - d0).abs() <= 1e-10 * d0);
        }
        assert!(sim.state.comps[1]
            .arrays()
            .iter()
            .all(|a| a.iter().all(|&v| v == 0.0)));
        // linear in the doping
        let mut p = sim.config.device;
        p.n_plus *= 2.0;
        p.n_channel *= 2.0;
        let mut twice = initial_condition(&sim.grid, &p, &sim.scaling);
        twice.axpy(-2.0, &sim.state);
        assert!(twice.max_abs() <= 1e-15 * sim.state.max_abs());
    }

    #[test]
    fn initial_energy_is_three_halves() {
        let sim = Simulation::new(small(RunMode::StochasticRecombination)).unwrap();
        let ms = sim.moments();
        for e in &ms.energy {
            assert!((e - 1.5).abs() < 1e-9, "{e}");
        }
        // isotropic: no current
        for (m, r) in ms.momentum.iter().zip(&ms.density) {
            assert!(m.abs() <= 1e-12 * r);
        }
    }

    #[test]
    fn zero_bias_uniform_equilibrium_is_fixed() {
        let mut cfg = small(RunMode::StochasticRecombination);
        cfg.device = DeviceProfile::uniform(5e23);
        let mut sim = Simulation::new(cfg).unwrap();
        let start = sim.state.clone();
        for _ in 0..20 {
            sim.step(f64::INFINITY).unwrap();
        }
        assert!(sim.state.max_abs_diff(&start) <= 1e-8 * start.max_abs());
    }

    #[test]
    fn heun_structure_matches_transport_oracle() {
        let mut cfg = small(RunMode::NoRecombination);
        cfg.collision.enabled = false;
        cfg.device = DeviceProfile::uniform(5e23);
        let mut sim = Simulation::new(cfg).unwrap();
        // perturb so transport is active, keeping E = 0 (uniform doping and x-independent perturbation)
        for idx in 0..sim.grid.cells() {
            let (_, _, m) = sim.grid.unindex(idx);
            sim.state.comps[0].t[idx] *= 1.0 + 0.2 * sim.grid.muc(m);
        }
        let u0 = sim.state.clone();
        let dt = sim.stable_dt();
        let z = vec![0.0; sim.grid.nx];
        let bnd = sim.boundary;
        let l = |u: &DofField| {
            let mut out = DofField::zeros(&sim.grid);
            sim.transport.apply(u, &z, &z, bnd, &mut out).unwrap();
            out
        };
        let k1 = l(&u0);
        let mut u1 = u0.clone();
        u1.axpy(dt, &k1);
        let k2 = l(&u1);
        let mut want = u0.clone();
        want.axpy(0.5 * dt, &k1);
        want.axpy(0.5 * dt, &k2);
        sim.step(dt).unwrap();
        assert!(sim.state.max_abs_diff(&want) <= 1e-14 * want.max_abs());
    }

    #[test]
    fn mass_is_accounted_by_boundary_flux() {
        let mut sim = Simulation::new(small(RunMode::NoRecombination)).unwrap();
        for _ in 0..10 {
            let rec = sim.step(f64::INFINITY).unwrap();
            for c in 0..MODES {
                assert!(rec.boundary_defect(c) < 1e-10, "{:?}", rec);
            }
        }
        let mut sim = Simulation::new(small(RunMode::StochasticRecombination)).unwrap();
        for _ in 0..5 {
            let rec = sim.step(f64::INFINITY).unwrap();
            for c in 0..MODES {
                assert!(rec.full_defect(c) < 1e-10, "{:?}", rec);
            }
        }
    }

    #[test]
    fn no_recombination_run_has_zero_variance() {
        let mut sim = Simulation::new(small(RunMode::NoRecombination)).unwrap();
        sim.advance_to(0.02).unwrap();
        assert!(sim.state.comps[1]
            .arrays()
            .iter()
            .all(|a| a.iter().all(|&v| v == 0.0)));
        let ms = sim.moments();
        assert!(ms.variance.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn recombination_run_grows_variance() {
        let mut sim = Simulation::new(small(RunMode::StochasticRecombination)).unwrap();
        sim.advance_to(0.02).unwrap();
        assert!((sim.time - 0.02).abs() < 1e-15);
        let ms = sim.moments();
        assert!(ms.variance.iter().all(|&v| v >= 0.0));
        assert!(ms.variance.iter().any(|&v| v > 0.0));
    }

    #[test]
    fn nan_state_aborts_with_location() {
        let mut sim = Simulation::new(small(RunMode::NoRecombination)).unwrap();
        let idx = sim.grid.index(3, 2, 1);
        sim.state.comps[0].r[idx] = f64::NAN;
        match sim.step(f64::INFINITY) {
            Err(Error::Numerical(msg)) => assert!(msg.contains("component"), "{msg}"),
            other => panic!("expected numerical failure, got {other:?}"),
        }
    }

    #[test]
    fn compare_identical_and_mismatched() {
        let sim = Simulation::new(small(RunMode::NoRecombination)).unwrap();
        let a = vec![sim.moments()];
        let rep = compare_runs(&a, &a, 1e-3).unwrap();
        assert!(rep.moments.iter().all(|m| m.max_relative == 0.0 && !m.differs));
        let mut cfg = small(RunMode::NoRecombination);
        cfg.grid.nx = 20;
        let other = Simulation::new(cfg).unwrap();
        assert!(matches!(
            compare_runs(&a, &[other.moments()], 1e-3),
            Err(Error::Usage(_))
        ));
        assert!(compare_runs(&a, &[], 1e-3).is_err());
    }

    #[test]
    fn split_and_full_runs_agree() {
        let mut a = Simulation::new(small(RunMode::StochasticRecombination)).unwrap();
        let mut cfg = small(RunMode::StochasticRecombination);
        cfg.collision.split = true;
        let mut b = Simulation::new(cfg).unwrap();
        for _ in 0..3 {
            a.step(f64::INFINITY).unwrap();
            b.step(f64::INFINITY).unwrap();
        }
        assert!(a.state.max_abs_diff(&b.state) <= 1e-12 * a.state.max_abs());
    }
}
