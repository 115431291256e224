//! Discrete two-component collision operator.
//!
//! Partners sit on the shells `r' = r` (acoustic, elastic) and
//! `r' = r -+ A` (optical emission/absorption). With `J(r)` the density of
//! states in the transformed variables, the operator reads, per chaos vector,
//!
//! ```text
//! C(Phi)(r, mu) = K  [ J(r) C+ Phibar(r + A) + J(r) C- Phibar(r - A)
//!                    - 2 e^{-A} J(r + A) C+ Phi(r, mu) - 2 e^{A} J(r - A) C- Phi(r, mu) ]
//!               + K0 [ J(r) Phibar(r) - 2 J(r) Phi(r, mu) ]
//! ```
//!
//! with `Phibar = int Phi dmu` and partners outside `[0, r_max]` dropped.
//! Each shell pair is integrated with one set of Gauss nodes for gain and
//! loss alike.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpc::MODES;
use crate::grid::{maxwellian_projection, DofField, PhaseGrid};
use crate::kernels::{mat_add, mat_scale, KernelMatrices, Mat2, IDENTITY};
use crate::quadrature::QuadratureRule;
use crate::scaling::ScalingContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CollisionMode {
    /// Gain and loss with the full `C+` / `C-` matrices.
    #[default]
    Full,
    /// Deterministic scalar kernel plus the recombination correction, applied separately.
    Split,
    /// `C+ -> (n_q + 1) I`, `C- -> n_q I`: the components decouple.
    NoRecombination,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DensityOfStates {
    /// `J(r) = sqrt(r) / 2`.
    Analytic,
    /// `J(r) = e^r m_h(r)` with `m_h` the P1 projection of `e^{-r} sqrt(r) / 2`,
    /// so the projected Maxwellian is an exact discrete equilibrium.
    #[default]
    WellBalanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ShellKind {
    /// Target at `r`, source at `r + A`; weight `K C+`.
    EmissionGain,
    /// Target at `r`, source at `r - A`; weight `K C-`.
    AbsorptionGain,
    /// Target and source in the same cell; weight `K0 I`.
    Elastic,
}

/// Gain coupling between an r-cell pair.
///
/// `overlap[a][b] = int J(r_target) xi_target^a xi_source^b` over the
/// target-cell stretch of the shell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShellCoupling {
    pub kind: ShellKind,
    pub target: usize,
    pub source: usize,
    pub overlap: [[f64; 2]; 2],
}

/// Loss moments `Lambda_a = int lambda(r) xi^a dr`, `a = 0, 1, 2`, per r-cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct LossMoments {
    /// Absorption out of the cell (partner above), weight `K C+`.
    pub absorption: [f64; 3],
    /// Emission out of the cell (partner below), weight `K C-`.
    pub emission: [f64; 3],
    /// Elastic, weight `K0 I`.
    pub elastic: [f64; 3],
}

#[derive(Debug, Clone, Serialize)]
pub struct ShellCouplings {
    pub couplings: Vec<ShellCoupling>,
    pub loss: Vec<LossMoments>,
    pub dos: DensityOfStates,
    pub dr: Vec<f64>,
    pub dmu: Vec<f64>,
}

/// Density of states evaluated inside r-cells.
struct Jacobian {
    dos: DensityOfStates,
    edges: Vec<f64>,
    t: Vec<f64>,
    r: Vec<f64>,
}

impl Jacobian {
    fn new(grid: &PhaseGrid, dos: DensityOfStates) -> Result<Jacobian> {
        let (t, r) = maxwellian_projection(grid);
        if dos == DensityOfStates::WellBalanced {
            for k in 0..grid.nr {
                if !(t[k] - r[k].abs() > 0.0) {
                    return Err(Error::Config(format!(
                        "projected Maxwellian is not positive in r-cell {k}; refine the r grid"
                    )));
                }
            }
        }
        Ok(Jacobian {
            dos,
            edges: grid.r_edges.clone(),
            t,
            r,
        })
    }

    fn xi(&self, k: usize, v: f64) -> f64 {
        let (a, b) = (self.edges[k], self.edges[k + 1]);
        (v - 0.5 * (a + b)) / (0.5 * (b - a))
    }

    fn eval(&self, k: usize, v: f64) -> f64 {
        match self.dos {
            DensityOfStates::Analytic => 0.5 * v.max(0.0).sqrt(),
            DensityOfStates::WellBalanced => v.exp() * (self.t[k] + self.r[k] * self.xi(k, v)),
        }
    }
}

fn cell_of(edges: &[f64], v: f64) -> usize {
    PhaseGrid::locate(edges, v).expect("shell point inside the r domain")
}

/// Precompute shell couplings and loss moments on the r grid.
pub fn build_shell_couplings(
    grid: &PhaseGrid,
    scaling: &ScalingContext,
    dos: DensityOfStates,
    order: usize,
) -> Result<ShellCouplings> {
    let a = scaling.a;
    let r_max = grid.r_max();
    if r_max <= a {
        return Err(Error::Config(format!(
            "r_max = {r_max} must exceed the phonon shell A = {a}"
        )));
    }
    let q = QuadratureRule::gauss_legendre(order)?;
    let jac = Jacobian::new(grid, dos)?;
    let edges = &grid.r_edges;
    let mut map: BTreeMap<(ShellKind, usize, usize), [[f64; 2]; 2]> = BTreeMap::new();
    let mut loss = vec![LossMoments::default(); grid.nr];
    let (ea, ema) = (a.exp(), (-a).exp());

    // pair stretches (r, r + A) split where either end crosses an edge
    let top = r_max - a;
    let mut cuts: Vec<f64> = edges
        .iter()
        .flat_map(|&e| [e, e - a])
        .filter(|&v| v >= 0.0 && v <= top)
        .collect();
    cuts.push(0.0);
    cuts.push(top);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() <= 1e-13 * r_max);
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi - lo <= 1e-13 * r_max {
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let k = cell_of(edges, mid);
        let kp = cell_of(edges, mid + a);
        let mut em = [[0.0; 2]; 2];
        let mut ab = [[0.0; 2]; 2];
        for (r, wq) in q.mapped(lo, hi) {
            let u = r + a;
            let (xr, xu) = (jac.xi(k, r), jac.xi(kp, u));
            let (jr, ju) = (jac.eval(k, r), jac.eval(kp, u));
            let pr = [1.0, xr];
            let pu = [1.0, xu];
            for i in 0..2 {
                for j in 0..2 {
                    em[i][j] += wq * jr * pr[i] * pu[j];
                    ab[i][j] += wq * ju * pu[i] * pr[j];
                }
            }
            let la = wq * 2.0 * ema * ju;
            let le = wq * 2.0 * ea * jr;
            for p in 0..3 {
                loss[k].absorption[p] += la * xr.powi(p as i32);
                loss[kp].emission[p] += le * xu.powi(p as i32);
            }
        }
        add_overlap(&mut map, (ShellKind::EmissionGain, k, kp), em);
        add_overlap(&mut map, (ShellKind::AbsorptionGain, kp, k), ab);
    }

    for k in 0..grid.nr {
        let mut el = [[0.0; 2]; 2];
        for (r, wq) in q.mapped(edges[k], edges[k + 1]) {
            let x = jac.xi(k, r);
            let j = jac.eval(k, r);
            let p = [1.0, x];
            for i in 0..2 {
                for jj in 0..2 {
                    el[i][jj] += wq * j * p[i] * p[jj];
                }
            }
            for p in 0..3 {
                loss[k].elastic[p] += wq * 2.0 * j * x.powi(p as i32);
            }
        }
        add_overlap(&mut map, (ShellKind::Elastic, k, k), el);
    }

    let couplings = map
        .into_iter()
        .map(|((kind, target, source), overlap)| ShellCoupling {
            kind,
            target,
            source,
            overlap,
        })
        .collect();
    Ok(ShellCouplings {
        couplings,
        loss,
        dos,
        dr: (0..grid.nr).map(|k| grid.dr(k)).collect(),
        dmu: (0..grid.nmu).map(|m| grid.dmu(m)).collect(),
    })
}

fn add_overlap(
    map: &mut BTreeMap<(ShellKind, usize, usize), [[f64; 2]; 2]>,
    key: (ShellKind, usize, usize),
    o: [[f64; 2]; 2],
) {
    let e = map.entry(key).or_insert([[0.0; 2]; 2]);
    for i in 0..2 {
        for j in 0..2 {
            e[i][j] += o[i][j];
        }
    }
}

/// Rate-scaled chaos matrices for each shell kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShellMatrices {
    /// Emission gain / absorption loss.
    pub plus: Mat2,
    /// Absorption gain / emission loss.
    pub minus: Mat2,
    pub elastic: Mat2,
}

impl ShellMatrices {
    fn of(kernels: &KernelMatrices, plus: Mat2, minus: Mat2, elastic: f64) -> ShellMatrices {
        ShellMatrices {
            plus: mat_scale(&plus, kernels.k_optical),
            minus: mat_scale(&minus, kernels.k_optical),
            elastic: mat_scale(&IDENTITY, elastic),
        }
    }

    fn gain(&self, kind: ShellKind) -> &Mat2 {
        match kind {
            ShellKind::EmissionGain => &self.plus,
            ShellKind::AbsorptionGain => &self.minus,
            ShellKind::Elastic => &self.elastic,
        }
    }
}

/// Assembled operator: couplings plus chaos matrices for the chosen mode.
#[derive(Debug, Clone, Serialize)]
pub struct CollisionOperator {
    pub shells: ShellCouplings,
    pub mode: CollisionMode,
    /// One or two passes (`Split` applies the deterministic part and the correction separately).
    pub passes: Vec<ShellMatrices>,
    /// Per r-cell loss matrices `L_a = sum_kind M_kind Lambda_a^kind`, per pass.
    loss_mats: Vec<Vec<[Mat2; 3]>>,
}

impl CollisionOperator {
    pub fn new(shells: ShellCouplings, kernels: &KernelMatrices, mode: CollisionMode) -> Self {
        let nq = kernels.n_q;
        let k0 = kernels.k0_acoustic;
        let passes = match mode {
            CollisionMode::Full => vec![ShellMatrices::of(
                kernels,
                kernels.galerkin_plus(),
                kernels.galerkin_minus(),
                k0,
            )],
            CollisionMode::NoRecombination => vec![ShellMatrices::of(
                kernels,
                mat_scale(&IDENTITY, nq + 1.0),
                mat_scale(&IDENTITY, nq),
                k0,
            )],
            CollisionMode::Split => {
                let r = kernels.galerkin_split();
                vec![
                    ShellMatrices::of(
                        kernels,
                        mat_scale(&IDENTITY, nq + 1.0),
                        mat_scale(&IDENTITY, nq),
                        k0,
                    ),
                    ShellMatrices::of(kernels, r, r, 0.0),
                ]
            }
        };
        let loss_mats = passes
            .iter()
            .map(|p| {
                shells
                    .loss
                    .iter()
                    .map(|l| {
                        let mut out = [[[0.0; 2]; 2]; 3];
                        for (a, o) in out.iter_mut().enumerate() {
                            let m = mat_scale(&p.plus, l.absorption[a]);
                            let m = mat_add(&m, &p.minus, l.emission[a]);
                            *o = mat_add(&m, &p.elastic, l.elastic[a]);
                        }
                        out
                    })
                    .collect()
            })
            .collect();
        CollisionOperator {
            shells,
            mode,
            passes,
            loss_mats,
        }
    }

    pub fn build(
        grid: &PhaseGrid,
        scaling: &ScalingContext,
        kernels: &KernelMatrices,
        mode: CollisionMode,
        dos: DensityOfStates,
        order: usize,
    ) -> Result<Self> {
        let shells = build_shell_couplings(grid, scaling, dos, order)?;
        Ok(CollisionOperator::new(shells, kernels, mode))
    }

    /// Largest loss rate, for time-step diagnostics.
    pub fn max_loss_rate(&self) -> f64 {
        let mut out: f64 = 0.0;
        for k in 0..self.shells.loss.len() {
            let mut l0 = [[0.0; 2]; 2];
            for lm in &self.loss_mats {
                l0 = mat_add(&l0, &lm[k][0], 1.0);
            }
            let s: f64 = l0.iter().flatten().map(|v| v.abs()).sum();
            out = out.max(s / self.shells.dr[k]);
        }
        out
    }
}

/// Add `C(field)` to `out`.
pub fn apply_collision(field: &DofField, op: &CollisionOperator, grid: &PhaseGrid, out: &mut DofField) {
    let slab = grid.slab();
    let (nr, nmu) = (grid.nr, grid.nmu);
    let [o0, o1] = &mut out.comps;
    let f = &field.comps;
    o0.t.par_chunks_mut(slab)
        .zip(o0.x.par_chunks_mut(slab))
        .zip(o0.r.par_chunks_mut(slab))
        .zip(o0.m.par_chunks_mut(slab))
        .zip(
            o1.t.par_chunks_mut(slab)
                .zip(o1.x.par_chunks_mut(slab))
                .zip(o1.r.par_chunks_mut(slab))
                .zip(o1.m.par_chunks_mut(slab)),
        )
        .enumerate()
        .for_each(|(i, ((((t0, x0), r0), m0), (((t1, x1), r1), m1)))| {
            let base = i * slab;
            let outs: [[&mut [f64]; 4]; MODES] = [[t0, x0, r0, m0], [t1, x1, r1, m1]];
            // mu-integrated T, R, X per component and r-cell
            let mut sbar = vec![[[0.0; 3]; MODES]; nr];
            for (k, sk) in sbar.iter_mut().enumerate() {
                for (c, sc) in sk.iter_mut().enumerate() {
                    for m in 0..nmu {
                        let idx = base + k * nmu + m;
                        let w = op.shells.dmu[m];
                        sc[0] += w * f[c].t[idx];
                        sc[1] += w * f[c].r[idx];
                        sc[2] += w * f[c].x[idx];
                    }
                }
            }
            for (pass, mats) in op.passes.iter().enumerate() {
                let mut gain = vec![[[0.0; 3]; MODES]; nr];
                for cp in &op.shells.couplings {
                    let mat = mats.gain(cp.kind);
                    let s = &sbar[cp.source];
                    let o = &cp.overlap;
                    let h = op.shells.dr[cp.target];
                    for (c, row) in mat.iter().enumerate() {
                        let mix = |b: usize| row[0] * s[0][b] + row[1] * s[1][b];
                        let (wt, wr, wx) = (mix(0), mix(1), mix(2));
                        let g = &mut gain[cp.target][c];
                        g[0] += (o[0][0] * wt + o[0][1] * wr) / h;
                        g[1] += 3.0 * (o[1][0] * wt + o[1][1] * wr) / h;
                        g[2] += o[0][0] * wx / h;
                    }
                }
                let lm = &op.loss_mats[pass];
                for k in 0..nr {
                    let h = op.shells.dr[k];
                    let [l0, l1, l2] = &lm[k];
                    for m in 0..nmu {
                        let loc = k * nmu + m;
                        let idx = base + loc;
                        let t = [f[0].t[idx], f[1].t[idx]];
                        let r = [f[0].r[idx], f[1].r[idx]];
                        let x = [f[0].x[idx], f[1].x[idx]];
                        let mu = [f[0].m[idx], f[1].m[idx]];
                        for c in 0..MODES {
                            let dot = |l: &Mat2, v: &[f64; 2]| l[c][0] * v[0] + l[c][1] * v[1];
                            let lt = (dot(l0, &t) + dot(l1, &r)) / h;
                            let lr = 3.0 * (dot(l1, &t) + dot(l2, &r)) / h;
                            let lx = dot(l0, &x) / h;
                            let lmu = dot(l0, &mu) / h;
                            let g = &gain[k][c];
                            outs[c][0][loc] += g[0] - lt;
                            outs[c][1][loc] += g[2] - lx;
                            outs[c][2][loc] += g[1] - lr;
                            outs[c][3][loc] -= lmu;
                        }
                    }
                }
            }
        });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpc::{GpcBasis, Normalization};
    use proptest::prelude::*;

    struct Setup {
        grid: PhaseGrid,
        scaling: ScalingContext,
        kernels: KernelMatrices,
    }

    fn setup(nx: usize, nr: usize, nmu: usize, r_max: f64) -> Setup {
        let q = QuadratureRule::gauss_legendre(64).unwrap();
        let b = GpcBasis::new(Normalization::Orthonormal, &q);
        let mut o = ScalingContext::paper_defaults().overrides();
        o.r_max = r_max;
        let scaling = crate::scaling::build_scaling(ScalingContext::paper_defaults().constants, o).unwrap();
        let kernels = KernelMatrices::new(&scaling, &b, &q).unwrap();
        Setup {
            grid: PhaseGrid::uniform(nx, nr, nmu, r_max).unwrap(),
            scaling,
            kernels,
        }
    }

    fn op(s: &Setup, mode: CollisionMode, dos: DensityOfStates) -> CollisionOperator {
        op_order(s, mode, dos, 3)
    }

    fn op_order(s: &Setup, mode: CollisionMode, dos: DensityOfStates, order: usize) -> CollisionOperator {
        CollisionOperator::build(&s.grid, &s.scaling, &s.kernels, mode, dos, order).unwrap()
    }

    fn random_field(grid: &PhaseGrid, seed: u64, positive: bool) -> DofField {
        let mut s = seed ^ 0x9E37_79B9_7F4A_7C15;
        let mut next = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut f = DofField::zeros(grid);
        for c in 0..MODES {
            let comp = &mut f.comps[c];
            for idx in 0..grid.cells() {
                let t = if positive { 1.0 + next() } else { next() - 0.5 };
                comp.t[idx] = t;
                comp.x[idx] = 0.3 * (next() - 0.5);
                comp.r[idx] = 0.3 * (next() - 0.5);
                comp.m[idx] = 0.3 * (next() - 0.5);
            }
        }
        f
    }

    fn apply(f: &DofField, op: &CollisionOperator, g: &PhaseGrid) -> DofField {
        let mut out = DofField::zeros(g);
        apply_collision(f, op, g, &mut out);
        out
    }

    fn equilibrium(g: &PhaseGrid) -> DofField {
        let (t, r) = maxwellian_projection(g);
        let mut f = DofField::zeros(g);
        for idx in 0..g.cells() {
            let (_, k, _) = g.unindex(idx);
            f.comps[0].t[idx] = t[k];
            f.comps[0].r[idx] = r[k];
        }
        f
    }

    #[test]
    fn rejects_short_r_domain() {
        let s = setup(1, 4, 2, 12.0);
        let short = PhaseGrid::uniform(1, 4, 2, 2.0).unwrap();
        assert!(build_shell_couplings(&short, &s.scaling, DensityOfStates::Analytic, 3).is_err());
    }

    #[test]
    fn elastic_couples_only_same_cell_and_low_cells_lack_emission() {
        let s = setup(1, 12, 2, 12.0);
        let sh = build_shell_couplings(&s.grid, &s.scaling, DensityOfStates::Analytic, 3).unwrap();
        for c in &sh.couplings {
            match c.kind {
                ShellKind::Elastic => assert_eq!(c.target, c.source),
                ShellKind::EmissionGain => assert!(c.source > c.target),
                ShellKind::AbsorptionGain => assert!(c.source < c.target),
            }
        }
        // first cell [0, 1] lies below A: no emission out of it, no absorption gain into it
        assert_eq!(sh.loss[0].emission, [0.0; 3]);
        assert!(!sh
            .couplings
            .iter()
            .any(|c| c.kind == ShellKind::AbsorptionGain && c.target == 0));
        assert!(sh.loss[0].absorption[0] > 0.0);
        // top cell cannot absorb
        assert_eq!(sh.loss[11].absorption, [0.0; 3]);
    }

    #[test]
    fn shell_weights_match_midpoint_brute_force() {
        // total emission-gain weight per target cell = int_{cell, r + A <= r_max} sqrt(r)/2 dr
        let s = setup(1, 4, 2, 8.0);
        // sqrt(r) has a cusp at 0, so a high Gauss order is needed for the comparison
        let sh = build_shell_couplings(&s.grid, &s.scaling, DensityOfStates::Analytic, 24).unwrap();
        let a = s.scaling.a;
        let n = 400_000;
        for k in 0..4 {
            let (lo, hi) = (s.grid.r_edges[k], s.grid.r_edges[k + 1]);
            let h = (hi - lo) / n as f64;
            let mut brute = 0.0;
            let mut brute_up = 0.0;
            for j in 0..n {
                let r = lo + (j as f64 + 0.5) * h;
                if r + a <= 8.0 {
                    brute += 0.5 * r.sqrt() * h;
                }
                if r - a >= 0.0 {
                    brute_up += 0.5 * (r - a).sqrt() * h;
                }
            }
            let got: f64 = sh
                .couplings
                .iter()
                .filter(|c| c.kind == ShellKind::EmissionGain && c.target == k)
                .map(|c| c.overlap[0][0])
                .sum();
            assert!((got - brute).abs() < 1e-4 * (1.0 + brute), "k={k} {got} {brute}");
            let em: f64 = sh.loss[k].emission[0];
            let e = 2.0 * a.exp() * brute_up;
            assert!((em - e).abs() < 1e-4 * (1.0 + e), "k={k} {em} {e}");
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn pointwise_collision(
        f: &DofField,
        g: &PhaseGrid,
        jac: &Jacobian,
        mats: &ShellMatrices,
        a: f64,
        i: usize,
        r: f64,
        mu: f64,
    ) -> [f64; 2] {
        let x = g.xc(i);
        let val = |c: usize, r: f64, mu: f64| f.evaluate(g, c, x, r, mu).unwrap();
        let bar = |c: usize, r: f64| {
            (0..g.nmu)
                .map(|m| {
                    let mc = g.muc(m);
                    let k = cell_of(&g.r_edges, r);
                    let idx = g.index(i, k, m);
                    let xi = jac.xi(k, r);
                    let _ = mc;
                    (f.comps[c].t[idx] + f.comps[c].r[idx] * xi) * g.dmu(m)
                })
                .sum::<f64>()
        };
        let j = |r: f64| jac.eval(cell_of(&g.r_edges, r), r);
        let rm = g.r_max();
        let phi = [val(0, r, mu), val(1, r, mu)];
        let mut out = [0.0; 2];
        for c in 0..2 {
            let mut v = 0.0;
            for d in 0..2 {
                if r + a <= rm {
                    v += j(r) * mats.plus[c][d] * bar(d, r + a);
                    v -= 2.0 * (-a).exp() * j(r + a) * mats.plus[c][d] * phi[d];
                }
                if r - a >= 0.0 {
                    v += j(r) * mats.minus[c][d] * bar(d, r - a);
                    v -= 2.0 * a.exp() * j(r - a) * mats.minus[c][d] * phi[d];
                }
                v += j(r) * mats.elastic[c][d] * bar(d, r);
                v -= 2.0 * j(r) * mats.elastic[c][d] * phi[d];
            }
            out[c] = v;
        }
        out
    }

    #[test]
    fn assembled_operator_matches_pointwise_projection() {
        let s = setup(1, 4, 2, 8.0);
        for dos in [DensityOfStates::Analytic, DensityOfStates::WellBalanced] {
            let op = op_order(&s, CollisionMode::Full, dos, 24);
            let f = random_field(&s.grid, 7, false);
            let d = apply(&f, &op, &s.grid);
            let jac = Jacobian::new(&s.grid, dos).unwrap();
            let g = &s.grid;
            let n = 4000;
            for idx in 0..g.cells() {
                let (i, k, m) = g.unindex(idx);
                let (lo, hi) = (g.r_edges[k], g.r_edges[k + 1]);
                let h = (hi - lo) / n as f64;
                let mut proj = [[0.0; 4]; 2];
                for jr in 0..n {
                    let r = lo + (jr as f64 + 0.5) * h;
                    let xr = jac.xi(k, r);
                    // collision is linear in mu: two-point Gauss is exact
                    for &xm in &[-1.0 / 3f64.sqrt(), 1.0 / 3f64.sqrt()] {
                        let mu = g.muc(m) + 0.5 * g.dmu(m) * xm;
                        let v = pointwise_collision(&f, g, &jac, &op.passes[0], s.scaling.a, i, r, mu);
                        for c in 0..2 {
                            proj[c][0] += v[c] * h / (hi - lo) * 0.5;
                            proj[c][2] += 3.0 * v[c] * xr * h / (hi - lo) * 0.5;
                            proj[c][3] += 3.0 * v[c] * xm * h / (hi - lo) * 0.5;
                        }
                    }
                }
                for c in 0..2 {
                    let got = [d.comps[c].t[idx], 0.0, d.comps[c].r[idx], d.comps[c].m[idx]];
                    for p in [0, 2, 3] {
                        let scale = 1.0 + proj[c][p].abs();
                        assert!(
                            (got[p] - proj[c][p]).abs() < 2e-3 * scale,
                            "{dos:?} cell {idx} comp {c} coeff {p}: {} vs {}",
                            got[p],
                            proj[c][p]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn dense_operator_reproduces_application() {
        let s = setup(1, 4, 2, 8.0);
        let op = op(&s, CollisionMode::Full, DensityOfStates::WellBalanced);
        let g = &s.grid;
        let n = g.cells();
        let flat = |f: &DofField| -> Vec<f64> {
            f.comps
                .iter()
                .flat_map(|c| c.arrays().into_iter().flat_map(|a| a.iter().copied()))
                .collect()
        };
        let dim = 2 * 4 * n;
        let mut dense = vec![vec![0.0; dim]; dim];
        for col in 0..dim {
            let mut e = DofField::zeros(g);
            let (c, rest) = (col / (4 * n), col % (4 * n));
            e.comps[c].arrays_mut()[rest / n][rest % n] = 1.0;
            let out = flat(&apply(&e, &op, g));
            for row in 0..dim {
                dense[row][col] = out[row];
            }
        }
        let f = random_field(g, 11, false);
        let v = flat(&f);
        let got = flat(&apply(&f, &op, g));
        for row in 0..dim {
            let want: f64 = (0..dim).map(|c| dense[row][c] * v[c]).sum();
            assert!((got[row] - want).abs() < 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn zero_field_gives_zero() {
        let s = setup(2, 6, 4, 12.0);
        let op = op(&s, CollisionMode::Full, DensityOfStates::WellBalanced);
        let d = apply(&DofField::zeros(&s.grid), &op, &s.grid);
        assert_eq!(d.max_abs(), 0.0);
    }

    #[test]
    fn projected_maxwellian_is_discrete_equilibrium() {
        let s = setup(2, 24, 4, 36.0);
        let f = equilibrium(&s.grid);
        for mode in [
            CollisionMode::Full,
            CollisionMode::Split,
            CollisionMode::NoRecombination,
        ] {
            let op = op(&s, mode, DensityOfStates::WellBalanced);
            let d = apply(&f, &op, &s.grid);
            let rel = d.max_abs() / f.max_abs();
            assert!(rel < 1e-12, "{mode:?}: {rel}");
        }
        // the analytic density of states is balanced only up to discretisation error
        let op = op(&s, CollisionMode::NoRecombination, DensityOfStates::Analytic);
        let d = apply(&f, &op, &s.grid);
        let rel = d.max_abs() / f.max_abs();
        assert!(rel > 1e-12 && rel < 0.5);
    }

    #[test]
    fn full_and_split_agree() {
        let s = setup(3, 24, 6, 36.0);
        let f = random_field(&s.grid, 3, true);
        let a = apply(
            &f,
            &op(&s, CollisionMode::Full, DensityOfStates::WellBalanced),
            &s.grid,
        );
        let b = apply(
            &f,
            &op(&s, CollisionMode::Split, DensityOfStates::WellBalanced),
            &s.grid,
        );
        let scale = a.max_abs();
        assert!(a.max_abs_diff(&b) <= 1e-12 * scale);
    }

    #[test]
    fn no_recombination_keeps_component_one_zero() {
        let s = setup(2, 24, 4, 36.0);
        let mut f = random_field(&s.grid, 5, true);
        f.comps[1] = crate::grid::Coeffs::zeros(s.grid.cells());
        let d = apply(
            &f,
            &op(&s, CollisionMode::NoRecombination, DensityOfStates::WellBalanced),
            &s.grid,
        );
        assert!(d.comps[1].arrays().iter().all(|a| a.iter().all(|&v| v == 0.0)));
        let d = apply(
            &f,
            &op(&s, CollisionMode::Full, DensityOfStates::WellBalanced),
            &s.grid,
        );
        assert!(d.comps[1].t.iter().any(|&v| v != 0.0));
    }

    fn mass_defect(d: &DofField, f: &DofField, g: &PhaseGrid, c: usize) -> f64 {
        let total: f64 = (0..g.cells())
            .map(|idx| {
                let (i, k, m) = g.unindex(idx);
                f.comps[c].t[idx].abs() * g.volume(i, k, m)
            })
            .sum();
        d.mass(g, c).abs() / total
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn deterministic_kernel_conserves_mass(seed in any::<u64>()) {
            let s = setup(2, 24, 4, 36.0);
            let f = random_field(&s.grid, seed, true);
            for dos in [DensityOfStates::Analytic, DensityOfStates::WellBalanced] {
                let d = apply(&f, &op(&s, CollisionMode::NoRecombination, dos), &s.grid);
                for c in 0..2 {
                    prop_assert!(mass_defect(&d, &f, &s.grid, c) <= 1e-11);
                }
            }
        }

        #[test]
        fn collision_is_linear(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let s = setup(2, 8, 4, 12.0);
            let op = op(&s, CollisionMode::Full, DensityOfStates::WellBalanced);
            let f = random_field(&s.grid, seed, false);
            let g = random_field(&s.grid, seed.wrapping_add(1), false);
            let mut comb = f.clone();
            comb.scale(a);
            comb.axpy(b, &g);
            let lhs = apply(&comb, &op, &s.grid);
            let mut rhs = apply(&f, &op, &s.grid);
            rhs.scale(a);
            rhs.axpy(b, &apply(&g, &op, &s.grid));
            prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12 * (1.0 + rhs.max_abs()));
        }
    }

    #[test]
    fn recombination_mass_defect_is_proportional_to_split() {
        // the chaos-matrix form exchanges mass between components at a rate set by C- - n_q I
        let s = setup(2, 24, 4, 36.0);
        let p = random_field(&s.grid, 9, true);
        let d = apply(
            &p,
            &op(&s, CollisionMode::Full, DensityOfStates::WellBalanced),
            &s.grid,
        );
        let defect = mass_defect(&d, &p, &s.grid, 0);
        assert!(defect > 1e-9);
        let kernels = KernelMatrices::from_c_minus(
            mat_scale(&IDENTITY, s.scaling.n_q),
            &s.scaling,
            &GpcBasis::new(
                Normalization::Orthonormal,
                &QuadratureRule::gauss_legendre(8).unwrap(),
            ),
        );
        let op0 = CollisionOperator::build(
            &s.grid,
            &s.scaling,
            &kernels,
            CollisionMode::Full,
            DensityOfStates::WellBalanced,
            3,
        )
        .unwrap();
        let d0 = apply(&p, &op0, &s.grid);
        assert!(mass_defect(&d0, &p, &s.grid, 0) < 1e-12);
    }
}
