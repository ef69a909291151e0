//! Interior marching scheme on the (a, b) lattice.
//!
//! In double-null coordinates the principal part becomes
//!
//!     A^{λμ}∂²_{λμ} = C_ab ∂_a∂_b + C_aa ∂²_a + C_bb ∂²_b
//!                   + mixed null-transverse terms + the transverse block,
//!
//! with C_ab = 2(A⁰⁰ − A¹¹), C_aa = A⁰⁰ − 2A⁰¹ + A¹¹, C_bb = A⁰⁰ + 2A⁰¹ + A¹¹.
//! The box scheme writes the equation at each cell center, where the cross
//! derivative has the exact four-corner stencil; the unknown corner value is
//! obtained by a frozen-coefficient fixed point. C_aa and C_bb are the
//! characteristic residuals of the b = const and a = const planes: for
//! admissible data they vanish on the matching null surface, which is what
//! keeps the scheme second order even though their one-sided stencils lose an
//! order in the first cell rows.
//!
//! Fronts ia + ib = s are filled in order; cells on a front never read each
//! other (transverse derivatives are taken at already-filled nodes only), so
//! a front is evaluated in parallel and the result is deterministic.

use crate::einstein::{self, EnergyTrace, MetricField, SYM_PAIRS};
use crate::error::{Error, Result};
use crate::field::{
    diff1_line, diff1_periodic, diff2_line, diff2_periodic, WedgeField,
};
use crate::geometry::{WedgeGrid, WedgeSpec};
use crate::system::{
    assemble_coefficients, characteristic_residual, verify_signature, GoursatData,
    QuasilinearSystem,
};
use crate::tol;
use rayon::prelude::*;
use std::collections::VecDeque;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Periodic checkpointing of the completed band.
#[derive(Debug, Clone)]
pub struct CheckpointCfg {
    pub path: PathBuf,
    /// Dump after every front whose index is a multiple of this.
    pub every: usize,
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    /// Admissibility bound on the characteristic residual of the data.
    pub char_tol: f64,
    /// Admissibility bound on the corner mismatch of the data.
    pub corner_tol: f64,
    /// Blow-up guard on |u|.
    pub bound: f64,
    pub checkpoint: Option<CheckpointCfg>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            char_tol: 1e-10,
            corner_tol: tol::EXACT,
            bound: 1e8,
            checkpoint: None,
        }
    }
}

/// Per-front record of the inner iterations.
#[derive(Debug, Clone)]
pub struct FrontDiag {
    pub s: usize,
    /// Slice time x⁰ = s·h/2.
    pub t: f64,
    pub cells: usize,
    pub max_sweeps: usize,
    pub max_residual: f64,
    pub sup_u: f64,
    pub sup_du: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub fronts: Vec<FrontDiag>,
    pub max_abs_u: f64,
    pub max_abs_du: f64,
    pub max_sweeps: usize,
    pub total_cells: usize,
}

impl Diagnostics {
    fn absorb(&mut self, f: &FrontDiag) {
        self.max_abs_u = self.max_abs_u.max(f.sup_u);
        self.max_abs_du = self.max_abs_du.max(f.sup_du);
        self.max_sweeps = self.max_sweeps.max(f.max_sweeps);
        self.total_cells += f.cells;
        self.fronts.push(f.clone());
    }
}

/// Solution in progress: the field, the last completed front, diagnostics.
/// Data nodes are written once at construction and never touched again.
#[derive(Debug, Clone)]
pub struct EvolutionState {
    pub u: WedgeField,
    /// Every in-wedge node with ia + ib ≤ front is filled.
    pub front: usize,
    pub diag: Diagnostics,
    window: FrontWindow,
}

/// Completed evolution.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub u: WedgeField,
    pub diag: Diagnostics,
}

/// Transverse-derivative slabs of one (a, b) node: ∂₂, ∂₃, ∂₂₂, ∂₃₃, ∂₂₃ of
/// every component at every transverse index.
#[derive(Debug, Clone)]
struct NodeDerivs {
    d2: Vec<f64>,
    d3: Vec<f64>,
    d22: Vec<f64>,
    d33: Vec<f64>,
    d23: Vec<f64>,
}

#[derive(Debug, Clone)]
struct FrontDerivs {
    s: usize,
    /// Indexed by ia (ib = s − ia); None outside the wedge.
    nodes: Vec<Option<NodeDerivs>>,
}

/// Rolling cache of the three fronts a cell's stencil reaches back to.
#[derive(Debug, Clone, Default)]
struct FrontWindow {
    fronts: VecDeque<FrontDerivs>,
}

fn slab_of(u: &WedgeField, ia: usize, ib: usize) -> Vec<f64> {
    let g = &u.grid;
    let n = u.ncomp;
    let mut out = vec![0.0; (g.n2 + 1) * (g.n3 + 1) * n];
    for i2 in 0..=g.n2 {
        for i3 in 0..=g.n3 {
            let k = (i2 * (g.n3 + 1) + i3) * n;
            out[k..k + n].copy_from_slice(u.get(ia, ib, i2, i3));
        }
    }
    out
}

/// Line-wise transverse derivative of a slab; axis2 selects x² (else x³).
fn slab_deriv(
    slab: &[f64],
    n2: usize,
    n3: usize,
    ncomp: usize,
    ht: f64,
    periodic: bool,
    axis2: bool,
    second: bool,
) -> Vec<f64> {
    let mut out = vec![0.0; slab.len()];
    let idx = |i2: usize, i3: usize, c: usize| (i2 * (n3 + 1) + i3) * ncomp + c;
    let (len, outer) = if axis2 { (n2 + 1, n3) } else { (n3 + 1, n2) };
    for io in 0..=outer {
        for c in 0..ncomp {
            let mut get = |i: usize| {
                if axis2 {
                    slab[idx(i, io, c)]
                } else {
                    slab[idx(io, i, c)]
                }
            };
            let mut vals = vec![0.0; len];
            let mut put = |i: usize, v: f64| vals[i] = v;
            match (periodic, second) {
                (true, false) => diff1_periodic(len, ht, &mut get, &mut put),
                (true, true) => diff2_periodic(len, ht, &mut get, &mut put),
                (false, false) => diff1_line(len, ht, &mut get, &mut put),
                (false, true) => diff2_line(len, ht, &mut get, &mut put),
            }
            for (i, v) in vals.iter().enumerate() {
                if axis2 {
                    out[idx(i, io, c)] = *v;
                } else {
                    out[idx(io, i, c)] = *v;
                }
            }
        }
    }
    out
}

impl NodeDerivs {
    fn build(u: &WedgeField, ia: usize, ib: usize) -> NodeDerivs {
        let g = &u.grid;
        let (n2, n3, n, ht, per) = (g.n2, g.n3, u.ncomp, g.ht(), g.spec.periodic);
        let v = slab_of(u, ia, ib);
        let d2 = slab_deriv(&v, n2, n3, n, ht, per, true, false);
        let d3 = slab_deriv(&v, n2, n3, n, ht, per, false, false);
        let d22 = slab_deriv(&v, n2, n3, n, ht, per, true, true);
        let d33 = slab_deriv(&v, n2, n3, n, ht, per, false, true);
        let d23 = slab_deriv(&d2, n2, n3, n, ht, per, false, false);
        NodeDerivs { d2, d3, d22, d33, d23 }
    }
}

impl FrontDerivs {
    fn build(u: &WedgeField, s: usize) -> FrontDerivs {
        let g = u.grid.clone();
        let nodes = (0..=s.min(g.n_diag))
            .map(|ia| {
                let ib = s - ia;
                if g.in_wedge(ia, ib) {
                    Some(NodeDerivs::build(u, ia, ib))
                } else {
                    None
                }
            })
            .collect();
        FrontDerivs { s, nodes }
    }
}

impl FrontWindow {
    /// Makes the fronts target−1, target−2, target−3 available.
    fn ensure(&mut self, u: &WedgeField, target: usize) {
        let lo = target.saturating_sub(3);
        self.fronts.retain(|f| f.s >= lo && f.s < target);
        for s in lo..target {
            if !self.fronts.iter().any(|f| f.s == s) {
                self.fronts.push_back(FrontDerivs::build(u, s));
            }
        }
    }

    fn node(&self, ia: usize, ib: usize) -> &NodeDerivs {
        let s = ia + ib;
        self.fronts
            .iter()
            .find(|f| f.s == s)
            .and_then(|f| f.nodes[ia].as_ref())
            .expect("stencil node outside the cached window")
    }
}

/// One-sided weights for f''(0) from samples at ξ·h, ξ = ½, −½, −3/2, −5/2
/// (exact for cubics). The three-point fallback loses an order; it is used
/// only next to a data surface, where the coefficient it multiplies vanishes
/// for admissible data.
const D2_W4: [f64; 4] = [1.5, -3.5, 2.5, -0.5];
const D2_W3: [f64; 3] = [1.0, -2.0, 1.0];

struct CellDiag {
    sweeps: usize,
    residual: f64,
    sup_du: f64,
}

#[allow(clippy::too_many_arguments)]
fn cell_solve(
    u: &WedgeField,
    sys: &QuasilinearSystem,
    win: &FrontWindow,
    ia: usize,
    ib: usize,
    i2: usize,
    i3: usize,
    opts: &EvolveOptions,
) -> Result<(Vec<f64>, CellDiag)> {
    let g = &u.grid;
    let n = sys.n;
    let h = g.h();
    let h2 = h * h;
    let at = |ja: usize, jb: usize| u.get(ja, jb, i2, i3);
    let uw = at(ia - 1, ib);
    let us = at(ia, ib - 1);
    let usw = at(ia - 1, ib - 1);
    let xc = [
        0.5 * (g.a(ia) - 0.5 * h + g.b(ib) - 0.5 * h),
        0.5 * ((g.b(ib) - 0.5 * h) - (g.a(ia) - 0.5 * h)),
        g.x2(i2),
        g.x3(i3),
    ];
    let here = || format!("cell (ia={ia}, ib={ib}, i2={i2}, i3={i3}), center x⁰={:.4}, x¹={:.4}", xc[0], xc[1]);

    // ∂²_a estimate split into the part multiplying the unknown corner and
    // the rest; rows ib and ib−1 averaged to center the estimate in b.
    let (waa, len_a): (&[f64], usize) = if ia >= 3 {
        (&D2_W4, 4)
    } else if ia == 2 {
        (&D2_W3, 3)
    } else {
        (&[], 0)
    };
    let (wbb, len_b): (&[f64], usize) = if ib >= 3 {
        (&D2_W4, 4)
    } else if ib == 2 {
        (&D2_W3, 3)
    } else {
        (&[], 0)
    };
    let mut daa_fix = vec![0.0; n];
    let mut dbb_fix = vec![0.0; n];
    for r in 0..n {
        for (j, w) in waa.iter().enumerate().take(len_a) {
            daa_fix[r] += w * at(ia - j, ib - 1)[r];
            if j >= 1 {
                daa_fix[r] += w * at(ia - j, ib)[r];
            }
        }
        for (j, w) in wbb.iter().enumerate().take(len_b) {
            dbb_fix[r] += w * at(ia - 1, ib - j)[r];
            if j >= 1 {
                dbb_fix[r] += w * at(ia, ib - j)[r];
            }
        }
        daa_fix[r] /= 2.0 * h2;
        dbb_fix[r] /= 2.0 * h2;
    }
    let daa_p = if len_a > 0 { waa[0] / (2.0 * h2) } else { 0.0 };
    let dbb_p = if len_b > 0 { wbb[0] / (2.0 * h2) } else { 0.0 };

    // Transverse derivatives at the center: W/S averages are second-order
    // (the two nodes sit at opposite offsets from the center).
    let nw = win.node(ia - 1, ib);
    let ns = win.node(ia, ib - 1);
    let nsw = win.node(ia - 1, ib - 1);
    let ti = (i2 * (g.n3 + 1) + i3) * n;
    let avg = |a: &[f64], b: &[f64], r: usize| 0.5 * (a[ti + r] + b[ti + r]);
    let mut t2 = vec![0.0; n];
    let mut t3 = vec![0.0; n];
    let mut t22 = vec![0.0; n];
    let mut t33 = vec![0.0; n];
    let mut t23 = vec![0.0; n];
    for r in 0..n {
        t2[r] = avg(&nw.d2, &ns.d2, r);
        t3[r] = avg(&nw.d3, &ns.d3, r);
        t22[r] = avg(&nw.d22, &ns.d22, r);
        t33[r] = avg(&nw.d33, &ns.d33, r);
        t23[r] = avg(&nw.d23, &ns.d23, r);
    }

    // Mixed null-transverse derivatives: difference of transverse-derivative
    // slabs across the cell, extrapolated one row/column back to land on the
    // center (first order next to a surface, second order elsewhere).
    let mut ma2 = vec![0.0; n];
    let mut ma3 = vec![0.0; n];
    let mut mb2 = vec![0.0; n];
    let mut mb3 = vec![0.0; n];
    for r in 0..n {
        let da2 = (ns.d2[ti + r] - nsw.d2[ti + r]) / h;
        let da3 = (ns.d3[ti + r] - nsw.d3[ti + r]) / h;
        if ib >= 2 {
            let n0 = win.node(ia, ib - 2);
            let n1 = win.node(ia - 1, ib - 2);
            ma2[r] = 1.5 * da2 - 0.5 * (n0.d2[ti + r] - n1.d2[ti + r]) / h;
            ma3[r] = 1.5 * da3 - 0.5 * (n0.d3[ti + r] - n1.d3[ti + r]) / h;
        } else {
            ma2[r] = da2;
            ma3[r] = da3;
        }
        let db2 = (nw.d2[ti + r] - nsw.d2[ti + r]) / h;
        let db3 = (nw.d3[ti + r] - nsw.d3[ti + r]) / h;
        if ia >= 2 {
            let n0 = win.node(ia - 2, ib);
            let n1 = win.node(ia - 2, ib - 1);
            mb2[r] = 1.5 * db2 - 0.5 * (n0.d2[ti + r] - n1.d2[ti + r]) / h;
            mb3[r] = 1.5 * db3 - 0.5 * (n0.d3[ti + r] - n1.d3[ti + r]) / h;
        } else {
            mb2[r] = db2;
            mb3[r] = db3;
        }
    }

    // Second-order predictor, exact for u = F(a) + G(b).
    let mut up: Vec<f64> = (0..n).map(|r| uw[r] + us[r] - usw[r]).collect();
    let mut uc = vec![0.0; n];
    let mut du = vec![[0.0; 4]; n];
    let mut fbuf = vec![0.0; n];
    let mut res_prev = f64::INFINITY;
    let mut streak = 0usize;
    let mut res = f64::NAN;
    for sweep in 0..tol::MAX_INNER_SWEEPS {
        for r in 0..n {
            uc[r] = 0.25 * (up[r] + uw[r] + us[r] + usw[r]);
        }
        let a = assemble_coefficients(sys, xc, &uc);
        if a.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerics(format!(
                "coefficients not finite at {}",
                here()
            )));
        }
        let sig = verify_signature(&a);
        if !sig.ok {
            return Err(Error::Numerics(format!(
                "hyperbolicity lost at {}: witness eigenvalue {:.6e}",
                here(),
                sig.witness.unwrap_or(f64::NAN)
            )));
        }
        let c_ab = 2.0 * (a[0][0] - a[1][1]);
        let c_aa = a[0][0] - 2.0 * a[0][1] + a[1][1];
        let c_bb = a[0][0] + 2.0 * a[0][1] + a[1][1];
        let cma2 = 2.0 * (a[0][2] - a[1][2]);
        let cmb2 = 2.0 * (a[0][2] + a[1][2]);
        let cma3 = 2.0 * (a[0][3] - a[1][3]);
        let cmb3 = 2.0 * (a[0][3] + a[1][3]);
        let lcoef = c_ab / h2 + c_aa * daa_p + c_bb * dbb_p;
        if lcoef.abs() <= 1e-10 * (c_ab.abs() / h2).max(1.0) {
            return Err(Error::Numerics(format!(
                "cell equation degenerates (corner coefficient {lcoef:.3e}) at {}",
                here()
            )));
        }
        let mut sup_du: f64 = 0.0;
        for r in 0..n {
            let da = (us[r] - usw[r] + up[r] - uw[r]) / (2.0 * h);
            let db = (uw[r] - usw[r] + up[r] - us[r]) / (2.0 * h);
            du[r] = [da + db, db - da, t2[r], t3[r]];
            for v in du[r] {
                sup_du = sup_du.max(v.abs());
            }
        }
        (sys.f)(xc, &uc, &du, &mut fbuf);
        res = 0.0;
        let mut delta: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for r in 0..n {
            let cross = (up[r] - uw[r] - us[r] + usw[r]) / h2;
            let e = c_ab * cross
                + c_aa * (daa_fix[r] + daa_p * up[r])
                + c_bb * (dbb_fix[r] + dbb_p * up[r])
                + cma2 * ma2[r]
                + cma3 * ma3[r]
                + cmb2 * mb2[r]
                + cmb3 * mb3[r]
                + a[2][2] * t22[r]
                + 2.0 * a[2][3] * t23[r]
                + a[3][3] * t33[r]
                + fbuf[r];
            if !e.is_finite() {
                return Err(Error::Numerics(format!(
                    "equation residual not finite at {}",
                    here()
                )));
            }
            res = res.max(e.abs());
            let d = -e / lcoef;
            up[r] += d;
            delta = delta.max(d.abs());
            scale = scale.max(up[r].abs());
        }
        if up.iter().any(|v| !v.is_finite()) || scale > opts.bound {
            return Err(Error::Divergence(format!(
                "solution blow-up (|u| > {:.1e}) during the inner iteration at {}",
                opts.bound,
                here()
            )));
        }
        if res > res_prev {
            streak += 1;
            if streak >= tol::DIVERGENCE_STREAK {
                return Err(Error::Divergence(format!(
                    "inner iteration residual grew {} consecutive sweeps \
                     (last {res:.3e}) at {}",
                    tol::DIVERGENCE_STREAK,
                    here()
                )));
            }
        } else {
            streak = 0;
        }
        res_prev = res;
        if delta <= tol::INNER_FIXED_POINT * scale {
            return Ok((
                up,
                CellDiag {
                    sweeps: sweep + 1,
                    residual: res,
                    sup_du,
                },
            ));
        }
    }
    Err(Error::Divergence(format!(
        "inner iteration did not converge in {} sweeps (residual {res:.3e}) at {}",
        tol::MAX_INNER_SWEEPS,
        here()
    )))
}

fn write_data_nodes(u: &mut WedgeField, data: &GoursatData) {
    let g = u.grid.clone();
    let phi1 = data.phi(1);
    let phi2 = data.phi(2);
    for j in 0..=g.n_diag {
        for i2 in 0..=g.n2 {
            for i3 in 0..=g.n3 {
                u.set(0, j, i2, i3, phi1.get(j, i2, i3));
                if j > 0 {
                    u.set(j, 0, i2, i3, phi2.get(j, i2, i3));
                }
            }
        }
    }
}

fn validate_data(
    sys: &QuasilinearSystem,
    data: &GoursatData,
    grid: &Arc<WedgeGrid>,
    opts: &EvolveOptions,
) -> Result<()> {
    if data.ncomp() != sys.n {
        return Err(Error::Config(format!(
            "data has {} components, system {} expects {}",
            data.ncomp(),
            sys.name,
            sys.n
        )));
    }
    for w in [1u8, 2u8] {
        if *data.surface_grid(w) != grid.surface(w) {
            return Err(Error::Config(format!(
                "data surface lattice S{w} does not match the wedge grid"
            )));
        }
    }
    if data.corner.max_mismatch > opts.corner_tol {
        return Err(Error::Data(format!(
            "incompatible data: φ¹ ≠ φ² on Γ (corner mismatch {:.3e} exceeds {:.1e})",
            data.corner.max_mismatch, opts.corner_tol
        )));
    }
    for w in [1u8, 2u8] {
        let r = characteristic_residual(sys, data, w).sup();
        if r > opts.char_tol {
            return Err(Error::Data(format!(
                "data on S{w} is not characteristic: residual {r:.3e} exceeds {:.1e}",
                opts.char_tol
            )));
        }
    }
    Ok(())
}

impl EvolutionState {
    /// Validates the data against the system and seeds the field with it.
    pub fn from_data(
        sys: &QuasilinearSystem,
        data: &GoursatData,
        grid: Arc<WedgeGrid>,
        opts: &EvolveOptions,
    ) -> Result<EvolutionState> {
        validate_data(sys, data, &grid, opts)?;
        let front = 1.min(grid.n_diag);
        let mut u = WedgeField::new(grid, sys.n);
        write_data_nodes(&mut u, data);
        Ok(EvolutionState {
            u,
            front,
            diag: Diagnostics::default(),
            window: FrontWindow::default(),
        })
    }
}

/// Advances the completed front by one: solves every cell on front + 1.
pub fn step(
    state: &mut EvolutionState,
    sys: &QuasilinearSystem,
    opts: &EvolveOptions,
) -> Result<()> {
    let grid = state.u.grid.clone();
    let s = state.front + 1;
    if s > grid.n_diag {
        return Err(Error::Config("evolution already complete".into()));
    }
    state.window.ensure(&state.u, s);
    let mut tasks = Vec::new();
    for ia in 1..s {
        let ib = s - ia;
        if ib >= 1 && grid.in_wedge(ia, ib) {
            for i2 in 0..=grid.n2 {
                for i3 in 0..=grid.n3 {
                    tasks.push((ia, ib, i2, i3));
                }
            }
        }
    }
    let u = &state.u;
    let window = &state.window;
    let results: Vec<Result<(Vec<f64>, CellDiag)>> = tasks
        .par_iter()
        .map(|&(ia, ib, i2, i3)| cell_solve(u, sys, window, ia, ib, i2, i3, opts))
        .collect();
    let mut fd = FrontDiag {
        s,
        t: s as f64 * grid.h() * 0.5,
        cells: tasks.len(),
        max_sweeps: 0,
        max_residual: 0.0,
        sup_u: 0.0,
        sup_du: 0.0,
    };
    let mut values = Vec::with_capacity(tasks.len());
    for (task, r) in tasks.iter().zip(results) {
        let (vals, cd) = r?;
        fd.max_sweeps = fd.max_sweeps.max(cd.sweeps);
        fd.max_residual = fd.max_residual.max(cd.residual);
        fd.sup_du = fd.sup_du.max(cd.sup_du);
        for v in &vals {
            fd.sup_u = fd.sup_u.max(v.abs());
        }
        values.push((*task, vals));
    }
    for ((ia, ib, i2, i3), vals) in values {
        state.u.set(ia, ib, i2, i3, &vals);
    }
    state.diag.absorb(&fd);
    state.front = s;
    Ok(())
}

fn drive(
    state: &mut EvolutionState,
    sys: &QuasilinearSystem,
    opts: &EvolveOptions,
) -> Result<()> {
    let n_diag = state.u.grid.n_diag;
    while state.front < n_diag {
        step(state, sys, opts)?;
        if let Some(cfg) = &opts.checkpoint {
            if cfg.every > 0 && state.front % cfg.every == 0 {
                save_checkpoint(&cfg.path, state)?;
            }
        }
    }
    state.u.check_filled()?;
    Ok(())
}

/// Fills the whole truncated wedge from Goursat data.
pub fn evolve(
    sys: &QuasilinearSystem,
    data: &GoursatData,
    grid: Arc<WedgeGrid>,
    opts: &EvolveOptions,
) -> Result<Evolution> {
    let mut state = EvolutionState::from_data(sys, data, grid, opts)?;
    drive(&mut state, sys, opts)?;
    Ok(Evolution {
        u: state.u,
        diag: state.diag,
    })
}

/// Continues a checkpointed evolution. The data fields supply the surface
/// nodes beyond the checkpointed band; diagnostics cover only the resumed
/// fronts.
pub fn resume(
    sys: &QuasilinearSystem,
    data: &GoursatData,
    mut state: EvolutionState,
    opts: &EvolveOptions,
) -> Result<Evolution> {
    let grid = state.u.grid.clone();
    validate_data(sys, data, &grid, opts)?;
    write_data_nodes(&mut state.u, data);
    drive(&mut state, sys, opts)?;
    Ok(Evolution {
        u: state.u,
        diag: state.diag,
    })
}

/// Equation residual A^{λμ}(x,u)∂²_{λμ}u + f(x,u,∂u) evaluated with the
/// field-level stencils; independent of the marching discretization. Accuracy
/// degrades within a few spacings of the caps, as for any composed stencil.
pub fn pde_residual(sys: &QuasilinearSystem, u: &WedgeField) -> WedgeField {
    assert_eq!(u.ncomp, sys.n);
    let g = u.grid.clone();
    let d1: Vec<WedgeField> = (0..4).map(|mu| u.deriv_cart(mu)).collect();
    let d2: Vec<WedgeField> = SYM_PAIRS
        .iter()
        .map(|&(m, nn)| u.second_deriv_cart(m, nn))
        .collect();
    let mut out = WedgeField::new(g.clone(), sys.n);
    let mut du = vec![[0.0; 4]; sys.n];
    let mut fbuf = vec![0.0; sys.n];
    let mut buf = vec![0.0; sys.n];
    for ib in 0..=g.n_diag {
        for ia in 0..=g.row_amax[ib] {
            for i2 in 0..=g.n2 {
                for i3 in 0..=g.n3 {
                    let x = g.point(ia, ib, i2, i3);
                    let uv = u.get(ia, ib, i2, i3);
                    let a = assemble_coefficients(sys, x, uv);
                    for r in 0..sys.n {
                        for mu in 0..4 {
                            du[r][mu] = d1[mu].at(ia, ib, i2, i3, r);
                        }
                    }
                    (sys.f)(x, uv, &du, &mut fbuf);
                    for (r, b) in buf.iter_mut().enumerate() {
                        let mut v = fbuf[r];
                        for (p, &(m, nn)) in SYM_PAIRS.iter().enumerate() {
                            let mult = if m == nn { 1.0 } else { 2.0 };
                            v += mult * a[m][nn] * d2[p].at(ia, ib, i2, i3, r);
                        }
                        *b = v;
                    }
                    out.set(ia, ib, i2, i3, &buf);
                }
            }
        }
    }
    out
}

/// Einstein evolution with gauge and energy monitors.
#[derive(Debug, Clone)]
pub struct EinsteinEvolution {
    pub evolution: Evolution,
    /// (slice time, max |Γ^λ| on the slice).
    pub gauge_trace: Vec<(f64, f64)>,
    pub gauge_sup: f64,
    /// Slice energies of [∂₀g]. The trace starts at the first slice of
    /// nonzero extent: the corner slice is a single x¹ station and its
    /// integral is identically zero.
    pub energy: EnergyTrace,
}

/// Evolves the ten metric components of plane-symmetric data (fields constant
/// in x², x³) by the reduced system and monitors the gauge vector and the
/// transversal-derivative energy per slice.
pub fn evolve_einstein_plane_symmetric(
    data: &GoursatData,
    grid: Arc<WedgeGrid>,
    opts: &EvolveOptions,
) -> Result<EinsteinEvolution> {
    if data.ncomp() != 10 {
        return Err(Error::Config(
            "metric evolution needs 10-component data".into(),
        ));
    }
    for w in [1u8, 2u8] {
        let phi = data.phi(w);
        let sg = &phi.grid;
        for j in 0..=sg.n1 {
            let base = phi.get(j, 0, 0);
            for i2 in 0..=sg.n2 {
                for i3 in 0..=sg.n3 {
                    let v = phi.get(j, i2, i3);
                    for c in 0..10 {
                        if (v[c] - base[c]).abs() > 1e-10 {
                            return Err(Error::Data(format!(
                                "data on S{w} varies across the transverse box \
                                 (station {j}, component {c}); plane symmetry required"
                            )));
                        }
                    }
                }
            }
        }
    }
    let sys = einstein::einstein_reduced_system();
    let evolution = evolve(&sys, data, grid.clone(), opts)?;
    let mf = MetricField::from_field(evolution.u.clone())?;
    let gam = einstein::gauge_vector(&mf);
    let mut gauge_trace = Vec::new();
    let mut gauge_sup: f64 = 0.0;
    let k = evolution.u.deriv_cart(0);
    let mut energy = EnergyTrace::default();
    for s in 0..=grid.n_diag {
        let mut m: f64 = 0.0;
        for (a0, a1) in grid.slice_runs(s) {
            for ia in a0..=a1 {
                let ib = s - ia;
                for i2 in 0..=grid.n2 {
                    for i3 in 0..=grid.n3 {
                        for v in gam.get(ia, ib, i2, i3) {
                            m = m.max(v.abs());
                        }
                    }
                }
            }
        }
        let t = s as f64 * grid.h() * 0.5;
        gauge_trace.push((t, m));
        gauge_sup = gauge_sup.max(m);
        if s >= 1 {
            energy.push(t, einstein::energy(&k, s));
        }
    }
    Ok(EinsteinEvolution {
        evolution,
        gauge_trace,
        gauge_sup,
        energy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtentStatus {
    /// Succeeded at the requested σ₀.
    Converged,
    /// Succeeded after halving σ.
    Shrunk,
    /// No σ ≥ 4h worked.
    Failed,
}

#[derive(Debug, Clone)]
pub struct ExtentEntry {
    pub t: f64,
    /// Largest σ at which the evolution completed (the empirical extent).
    pub f_sigma: f64,
    pub status: ExtentStatus,
    /// Sup of |u|, |∂u|, …, |∂⁴u| over the solved wedge (derivatives measured
    /// away from the caps, where composed stencils stay accurate).
    pub k0: Option<[f64; 5]>,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct ExtentMap {
    pub entries: Vec<ExtentEntry>,
}

fn multi_indices(k: usize) -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for i0 in 0..=k {
        for i1 in 0..=k - i0 {
            for i2 in 0..=k - i0 - i1 {
                out.push([i0, i1, i2, k - i0 - i1 - i2]);
            }
        }
    }
    out
}

/// Sup of |u| and its derivatives up to fourth order. Zeroth order over the
/// whole wedge; derivatives over the interior x⁰ ≤ 0.75·T, a,b ≥ 3h.
pub fn k0_diagnostic(u: &WedgeField) -> [f64; 5] {
    let g = u.grid.clone();
    let (t, h) = (g.spec.t_max, g.h());
    let pred = move |x: [f64; 4]| {
        let a = x[0] - x[1];
        let b = x[0] + x[1];
        x[0] <= 0.75 * t + 1e-12 && a >= 3.0 * h - 1e-12 && b >= 3.0 * h - 1e-12
    };
    let mut zero = WedgeField::new(g, u.ncomp);
    zero.fill(&|_, out| out.fill(0.0));
    let mut k0 = [0.0; 5];
    k0[0] = u.sup();
    for (ord, slot) in k0.iter_mut().enumerate().skip(1) {
        for alpha in multi_indices(ord) {
            *slot = slot.max(u.deriv_multi(alpha).sup_diff_where(&zero, &pred));
        }
    }
    k0
}

/// Empirical extent map T ↦ f(T): for each T, evolve on the (T, σ) wedge,
/// halving σ from σ₀ on failure down to 4h. The data provider is called per
/// wedge because the lattice changes with (T, σ).
pub fn semi_global_extent(
    sys: &QuasilinearSystem,
    data_for: &dyn Fn(&Arc<WedgeGrid>) -> Result<GoursatData>,
    template: &WedgeSpec,
    t_list: &[f64],
    sigma0: f64,
    opts: &EvolveOptions,
) -> Result<ExtentMap> {
    if t_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("T list must be strictly increasing".into()));
    }
    if !(sigma0 > 0.0) {
        return Err(Error::Config(format!("σ₀ must be positive, got {sigma0}")));
    }
    let sigma_min = 4.0 * template.h_null;
    let mut map = ExtentMap::default();
    for &t in t_list {
        let mut sigma = sigma0;
        let entry = loop {
            let mut spec = template.clone();
            spec.t_max = t;
            spec.sigma = sigma;
            let grid = Arc::new(WedgeGrid::build(&spec)?);
            let data = data_for(&grid)?;
            match evolve(sys, &data, grid, opts) {
                Ok(ev) => {
                    break ExtentEntry {
                        t,
                        f_sigma: sigma,
                        status: if sigma == sigma0 {
                            ExtentStatus::Converged
                        } else {
                            ExtentStatus::Shrunk
                        },
                        k0: Some(k0_diagnostic(&ev.u)),
                        detail: String::new(),
                    };
                }
                Err(e) => {
                    let next = 0.5 * sigma;
                    if next < sigma_min * (1.0 - 1e-12) {
                        break ExtentEntry {
                            t,
                            f_sigma: 0.0,
                            status: ExtentStatus::Failed,
                            k0: None,
                            detail: e.to_string(),
                        };
                    }
                    sigma = next;
                }
            }
        };
        map.entries.push(entry);
    }
    Ok(map)
}

const CKPT_MAGIC: &[u8; 8] = b"GOURSAT1";

fn io_err(e: std::io::Error) -> Error {
    Error::Data(format!("checkpoint io: {e}"))
}

/// Dumps the completed band (all fronts up to `state.front`) with enough
/// header to validate a restart against the same lattice.
pub fn save_checkpoint(path: &Path, state: &EvolutionState) -> Result<()> {
    let g = &state.u.grid;
    let f = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(f);
    w.write_all(CKPT_MAGIC).map_err(io_err)?;
    for v in [
        g.n_diag as u64,
        g.n2 as u64,
        g.n3 as u64,
        state.u.ncomp as u64,
        state.front as u64,
        g.spec.periodic as u64,
    ] {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    for v in [
        g.h(),
        g.ht(),
        g.spec.t_max,
        g.spec.sigma,
        g.spec.b2.0,
        g.spec.b2.1,
        g.spec.b3.0,
        g.spec.b3.1,
    ] {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    for ib in 0..=g.n_diag {
        for ia in 0..=g.row_amax[ib] {
            if ia + ib > state.front {
                continue;
            }
            for i2 in 0..=g.n2 {
                for i3 in 0..=g.n3 {
                    for &v in state.u.get(ia, ib, i2, i3) {
                        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
                    }
                }
            }
        }
    }
    w.flush().map_err(io_err)
}

/// Loads a band dump; the grid and component count must match the header
/// exactly. Diagnostics are not persisted: the restarted state reports only
/// the fronts it computes.
pub fn load_checkpoint(
    path: &Path,
    grid: Arc<WedgeGrid>,
    ncomp: usize,
) -> Result<EvolutionState> {
    let f = std::fs::File::open(path).map_err(io_err)?;
    let mut r = std::io::BufReader::new(f);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != CKPT_MAGIC {
        return Err(Error::Data("not a checkpoint file".into()));
    }
    let mut u64buf = [0u8; 8];
    let mut next_u64 = |r: &mut dyn Read| -> Result<u64> {
        r.read_exact(&mut u64buf).map_err(io_err)?;
        Ok(u64::from_le_bytes(u64buf))
    };
    let n_diag = next_u64(&mut r)? as usize;
    let n2 = next_u64(&mut r)? as usize;
    let n3 = next_u64(&mut r)? as usize;
    let nc = next_u64(&mut r)? as usize;
    let front = next_u64(&mut r)? as usize;
    let periodic = next_u64(&mut r)? != 0;
    let mut floats = [0.0; 8];
    for v in &mut floats {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(io_err)?;
        *v = f64::from_le_bytes(b);
    }
    let g = &grid;
    let expect = [
        g.h(),
        g.ht(),
        g.spec.t_max,
        g.spec.sigma,
        g.spec.b2.0,
        g.spec.b2.1,
        g.spec.b3.0,
        g.spec.b3.1,
    ];
    if n_diag != g.n_diag
        || n2 != g.n2
        || n3 != g.n3
        || nc != ncomp
        || periodic != g.spec.periodic
        || floats
            .iter()
            .zip(&expect)
            .any(|(a, b)| a.to_bits() != b.to_bits())
    {
        return Err(Error::Config(
            "checkpoint header does not match the requested lattice".into(),
        ));
    }
    let mut u = WedgeField::new(grid.clone(), ncomp);
    let mut vals = vec![0.0; ncomp];
    for ib in 0..=g.n_diag {
        for ia in 0..=g.row_amax[ib] {
            if ia + ib > front {
                continue;
            }
            for i2 in 0..=g.n2 {
                for i3 in 0..=g.n3 {
                    for v in vals.iter_mut() {
                        let mut b = [0u8; 8];
                        r.read_exact(&mut b).map_err(io_err)?;
                        *v = f64::from_le_bytes(b);
                    }
                    u.set(ia, ib, i2, i3, &vals);
                }
            }
        }
    }
    Ok(EvolutionState {
        u,
        front,
        diag: Diagnostics::default(),
        window: FrontWindow::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::einstein::{metrics, Metric, ETA_LOWER};
    use crate::geometry::{W1, W2};
    use crate::system::{catalog, Principal, SourceFn, ETA};

    fn wedge(t: f64, sigma: f64, h: f64, ht: f64) -> Arc<WedgeGrid> {
        Arc::new(WedgeGrid::build(&WedgeSpec::new(t, sigma, h, ht)).unwrap())
    }

    fn data_scalar(grid: &Arc<WedgeGrid>, f: &dyn Fn([f64; 4]) -> f64) -> GoursatData {
        let mut v = WedgeField::new(grid.clone(), 1);
        v.fill_scalar(f);
        GoursatData::from_fields(v.restrict(W1).unwrap(), v.restrict(W2).unwrap()).unwrap()
    }

    #[test]
    fn zero_data_zero_source_stays_zero() {
        let grid = wedge(0.5, 10.0, 0.125, 1.0);
        for sys in [catalog::linear_wave(None), catalog::semilinear_cubic(None)] {
            let data = data_scalar(&grid, &|_| 0.0);
            let ev = evolve(&sys, &data, grid.clone(), &EvolveOptions::default()).unwrap();
            assert_eq!(ev.u.sup(), 0.0, "system {}", sys.name);
        }
    }

    #[test]
    fn dalembert_closed_form_is_reproduced_exactly() {
        // For A = η and transverse-independent data the scheme's cell update
        // is u(P) = u(W) + u(S) − u(SW), which F(a) + G(b) satisfies
        // identically; the only error is round-off accumulation.
        let grid = wedge(0.5, 10.0, 0.0625, 1.0);
        let fa = |a: f64| 0.3 * (1.7 * a).sin() + 0.1 * a;
        let gb = |b: f64| -0.2 * (0.9 * b).cos() + 0.4 * b * b;
        let exact = move |x: [f64; 4]| fa(x[0] - x[1]) + gb(x[0] + x[1]);
        let data = data_scalar(&grid, &exact);
        let ev = evolve(
            &catalog::linear_wave(None),
            &data,
            grid.clone(),
            &EvolveOptions::default(),
        )
        .unwrap();
        let mut want = WedgeField::new(grid.clone(), 1);
        want.fill_scalar(&exact);
        assert!(
            ev.u.sup_diff(&want) <= 1e-12,
            "sup err {}",
            ev.u.sup_diff(&want)
        );
        assert!(ev.diag.max_sweeps <= 2);
    }

    #[test]
    fn manufactured_wave_converges_second_order() {
        // □u + s = 0 with u = sin(k·x + φ): s = (k₀²−k₁²−k₂²−k₃²)sin(k·x+φ).
        // Transverse lattice periodic with harmonic wavenumbers: the problem
        // posed on null data alone has no transverse boundary condition, so a
        // bounded box would inject an extrapolation mismatch at its walls.
        // Eight points per period at the coarsest level keeps the centered
        // stencils in their asymptotic regime.
        let tau = std::f64::consts::TAU;
        let k = [1.1_f64, 0.3, tau, tau];
        let phase = 0.4;
        let arg = move |x: [f64; 4]| k[0] * x[0] + k[1] * x[1] + k[2] * x[2] + k[3] * x[3] + phase;
        let exact = move |x: [f64; 4]| arg(x).sin();
        let m2 = k[0] * k[0] - k[1] * k[1] - k[2] * k[2] - k[3] * k[3];
        let src: SourceFn = Arc::new(move |x| m2 * arg(x).sin());
        let sys = catalog::linear_wave(Some(src));
        let mut errs = Vec::new();
        let mut res_errs = Vec::new();
        for h in [0.125, 0.0625, 0.03125] {
            let spec = WedgeSpec {
                t_max: 0.5,
                sigma: 10.0,
                b2: (0.0, 1.0),
                b3: (0.0, 1.0),
                h_null: h,
                h_trans: h,
                periodic: true,
            };
            let grid = Arc::new(WedgeGrid::build(&spec).unwrap());
            let data = data_scalar(&grid, &exact);
            let ev = evolve(&sys, &data, grid.clone(), &EvolveOptions::default()).unwrap();
            let mut want = WedgeField::new(grid.clone(), 1);
            want.fill_scalar(&exact);
            errs.push(ev.u.sup_diff(&want));
            assert!(ev.diag.max_sweeps <= 3);
            // Independent-stencil equation residual, interior region.
            let res = pde_residual(&sys, &ev.u);
            let zero = {
                let mut z = WedgeField::new(grid.clone(), 1);
                z.fill_scalar(&|_| 0.0);
                z
            };
            // Fixed interior region, identical across levels, far enough
            // from the null planes for fully centered composed stencils.
            let pred = move |x: [f64; 4]| {
                let (a, b) = (x[0] - x[1], x[0] + x[1]);
                x[0] <= 0.375 && a >= 0.19 && b >= 0.19
            };
            res_errs.push(res.sup_diff_where(&zero, &pred));
        }
        let order = (errs[0] / errs[2]).log2() / 2.0;
        assert!(
            (1.8..=2.6).contains(&order),
            "order {order}, errs {errs:?}"
        );
        let res_order = (res_errs[0] / res_errs[2]).log2() / 2.0;
        assert!(res_order > 1.5, "residual order {res_order}: {res_errs:?}");
    }

    #[test]
    fn manufactured_quasilinear_converges_and_contracts() {
        // (1+εu)∂₀₀u − Δu + s = 0 with u = (x⁰²−x¹²)·q(x): the solution
        // vanishes on both null planes, so the data is characteristic.
        let eps = 0.5;
        let q = |x: [f64; 4]| 0.2 * (1.3 * x[0] + 0.4 * x[1]).sin() + 0.3;
        let exact = move |x: [f64; 4]| (x[0] * x[0] - x[1] * x[1]) * q(x);
        let src: SourceFn = Arc::new(move |x: [f64; 4]| {
            let p = x[0] * x[0] - x[1] * x[1];
            let th = 1.3 * x[0] + 0.4 * x[1];
            let (s, c) = th.sin_cos();
            let d00 = 2.0 * (0.2 * s + 0.3) + 4.0 * x[0] * 0.2 * 1.3 * c
                - p * 0.2 * 1.3 * 1.3 * s;
            let d11 = -2.0 * (0.2 * s + 0.3) - 4.0 * x[1] * 0.2 * 0.4 * c
                - p * 0.2 * 0.4 * 0.4 * s;
            let u = p * (0.2 * s + 0.3);
            -((1.0 + eps * u) * d00 - d11)
        });
        let sys = catalog::quasilinear_demo(eps, Some(src));
        let mut errs = Vec::new();
        for h in [0.25, 0.125, 0.0625] {
            let grid = wedge(0.5, 10.0, h, 1.0);
            let data = data_scalar(&grid, &exact);
            let ev = evolve(&sys, &data, grid.clone(), &EvolveOptions::default()).unwrap();
            assert!(ev.diag.max_sweeps <= 5, "sweeps {}", ev.diag.max_sweeps);
            let mut want = WedgeField::new(grid.clone(), 1);
            want.fill_scalar(&exact);
            errs.push(ev.u.sup_diff(&want));
        }
        let order = (errs[0] / errs[2]).log2() / 2.0;
        assert!(
            (1.8..=2.8).contains(&order),
            "order {order}, errs {errs:?}"
        );
    }

    #[test]
    fn data_nodes_are_preserved_bitwise() {
        let grid = wedge(0.5, 10.0, 0.125, 0.25);
        let data = data_scalar(&grid, &|x| (x[0] + 0.3 * x[2]).sin() + x[1] * x[3]);
        let ev = evolve(
            &catalog::semilinear_cubic(None),
            &data,
            grid.clone(),
            &EvolveOptions::default(),
        )
        .unwrap();
        for w in [W1, W2] {
            let r = ev.u.restrict(w).unwrap();
            assert_eq!(r.sup_diff(data.phi(w)), 0.0, "surface {w}");
        }
    }

    #[test]
    fn perturbations_respect_the_discrete_cone() {
        // The scheme reads values only at smaller-or-equal (ia, ib), so a
        // data bump on S¹ at station j₀ cannot reach nodes with ib < j₀.
        let grid = wedge(0.5, 10.0, 0.0625, 1.0);
        let f = |x: [f64; 4]| 0.2 * (x[0] + 0.5 * x[1]).cos();
        let base = data_scalar(&grid, &f);
        let sys = catalog::semilinear_cubic(None);
        let opts = EvolveOptions::default();
        let ev0 = evolve(&sys, &base, grid.clone(), &opts).unwrap();
        let j0 = grid.n_diag - 3;
        let mut phi1 = base.phi(W1).clone();
        for i2 in 0..=grid.n2 {
            for i3 in 0..=grid.n3 {
                let v = phi1.at(j0, i2, i3, 0);
                phi1.set_at(j0, i2, i3, 0, v + 1e-3);
            }
        }
        let bumped = GoursatData::from_fields(phi1, base.phi(W2).clone()).unwrap();
        let ev1 = evolve(&sys, &bumped, grid.clone(), &opts).unwrap();
        let mut outside: f64 = 0.0;
        let mut inside: f64 = 0.0;
        for ib in 0..=grid.n_diag {
            for ia in 0..=grid.row_amax[ib] {
                let d = (ev0.u.at(ia, ib, 0, 0, 0) - ev1.u.at(ia, ib, 0, 0, 0)).abs();
                if ib < j0 {
                    outside = outside.max(d);
                } else {
                    inside = inside.max(d);
                }
            }
        }
        assert_eq!(outside, 0.0, "influence leaked outside the cone");
        assert!(inside > 1e-4, "bump had no effect at all");
    }

    #[test]
    fn hyperbolicity_loss_is_reported_with_location() {
        // A⁰⁰ = 1 − 6ab stays characteristic on both planes (ab = 0 there)
        // but loses its signature deep in the wedge.
        let sys = QuasilinearSystem {
            name: "focusing_demo".into(),
            principal: Principal::Raw(Arc::new(|x: [f64; 4], _u: &[f64]| {
                let ab = (x[0] - x[1]) * (x[0] + x[1]);
                let mut a = ETA;
                a[0][0] = 1.0 - 6.0 * ab;
                a
            })),
            ..catalog::linear_wave(None)
        };
        let grid = wedge(1.0, 10.0, 0.0625, 1.0);
        let data = data_scalar(&grid, &|_| 0.0);
        let err = evolve(&sys, &data, grid, &EvolveOptions::default()).unwrap_err();
        match err {
            Error::Numerics(msg) => {
                assert!(msg.contains("hyperbolicity"), "{msg}");
                assert!(msg.contains("ia="), "{msg}");
            }
            other => panic!("expected numerics error, got {other:?}"),
        }
    }

    #[test]
    fn non_contracting_inner_iteration_is_reported() {
        let sys = QuasilinearSystem {
            name: "stiff_square".into(),
            f: Arc::new(|_x, u: &[f64], _du, out: &mut [f64]| {
                out[0] = 1e6 * u[0] * u[0]
            }),
            ..catalog::linear_wave(None)
        };
        let grid = wedge(0.5, 10.0, 0.0625, 1.0);
        let data = data_scalar(&grid, &|_| 1.0);
        let opts = EvolveOptions {
            bound: f64::INFINITY,
            ..Default::default()
        };
        let err = evolve(&sys, &data, grid, &opts).unwrap_err();
        match err {
            Error::Divergence(msg) => {
                assert!(
                    msg.contains("grew") || msg.contains("did not converge"),
                    "{msg}"
                )
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn non_characteristic_data_is_rejected() {
        // The demo system's characteristic residual is εu, so nonzero
        // constant data violates admissibility.
        let sys = catalog::quasilinear_demo(0.5, None);
        let grid = wedge(0.5, 10.0, 0.125, 1.0);
        let data = data_scalar(&grid, &|_| 1.0);
        let err = evolve(&sys, &data, grid, &EvolveOptions::default()).unwrap_err();
        assert!(
            matches!(err, Error::Data(ref m) if m.contains("characteristic")),
            "{err:?}"
        );
    }

    #[test]
    fn einstein_minkowski_is_exact() {
        let grid = wedge(0.5, 10.0, 0.125, 1.0);
        let mut v = WedgeField::new(grid.clone(), 10);
        v.fill(&|_, out| out.copy_from_slice(&ETA_LOWER));
        let data =
            GoursatData::from_fields(v.restrict(W1).unwrap(), v.restrict(W2).unwrap()).unwrap();
        let ev =
            evolve_einstein_plane_symmetric(&data, grid.clone(), &EvolveOptions::default())
                .unwrap();
        assert_eq!(ev.evolution.u.sup_diff(&v), 0.0);
        assert_eq!(ev.gauge_sup, 0.0);
        assert!(ev.energy.e.iter().all(|&e| e == 0.0));
        let rep = einstein::gronwall_check(&ev.energy, 0.0);
        assert!(rep.pass);
        assert_eq!(rep.c_hat, 0.0);
    }

    /// Plane-symmetric conformal-form data: g = diag(Ω, −Ω, −Ωh₂₂, −Ωh₃₃)
    /// with det h = 1, functions of (x⁰, x¹) only. Exactly characteristic
    /// for the reduced system.
    fn conformal_plane_data(grid: &Arc<WedgeGrid>) -> GoursatData {
        let met = |x: [f64; 4]| {
            let om = 1.0 + 0.1 * x[0];
            let lam = 0.2 * x[1];
            let mut g = [0.0; 10];
            g[0] = om;
            g[4] = -om;
            g[7] = -om * lam.exp();
            g[9] = -om * (-lam).exp();
            g
        };
        let mut v = WedgeField::new(grid.clone(), 10);
        v.fill(&|x, out| out.copy_from_slice(&met(x)));
        GoursatData::from_fields(v.restrict(W1).unwrap(), v.restrict(W2).unwrap()).unwrap()
    }

    #[test]
    fn einstein_plane_symmetric_self_converges_and_monitors() {
        let opts = EvolveOptions::default();
        let mut runs = Vec::new();
        for h in [0.0625, 0.03125, 0.015625] {
            let grid = wedge(0.5, 10.0, h, 1.0);
            let data = conformal_plane_data(&grid);
            let ev = evolve_einstein_plane_symmetric(&data, grid.clone(), &opts).unwrap();
            assert!(ev.energy.e[0] > 0.0);
            let rep = einstein::gronwall_check(&ev.energy, 1e3);
            assert!(rep.c_hat.is_finite(), "{}", rep.detail);
            runs.push((grid, ev));
        }
        // Self-convergence on shared nodes of consecutive levels.
        let diff = |coarse: usize| {
            let (g, e0) = &runs[coarse];
            let (_, e1) = &runs[coarse + 1];
            let mut d = 0.0_f64;
            for ib in 0..=g.n_diag {
                for ia in 0..=g.row_amax[ib] {
                    for c in 0..10 {
                        d = d.max(
                            (e0.evolution.u.at(ia, ib, 0, 0, c)
                                - e1.evolution.u.at(2 * ia, 2 * ib, 0, 0, c))
                            .abs(),
                        );
                    }
                }
            }
            d
        };
        let (d0, d1) = (diff(0), diff(1));
        let order = (d0 / d1).log2();
        assert!(order > 1.8, "order {order}: {d0:.3e} vs {d1:.3e}");
    }

    #[test]
    fn einstein_tt_wave_residual_is_small_and_shrinks() {
        let met = metrics::LinearizedTtWave {
            eps: 1e-3,
            omega: 1.3,
            cross: false,
        };
        let sys = einstein::einstein_reduced_system();
        let mut res = Vec::new();
        for h in [0.0625, 0.03125] {
            let grid = wedge(0.5, 10.0, h, 1.0);
            let mut v = WedgeField::new(grid.clone(), 10);
            v.fill(&|x, out| out.copy_from_slice(&met.g(x)));
            let data = GoursatData::from_fields(
                v.restrict(W1).unwrap(),
                v.restrict(W2).unwrap(),
            )
            .unwrap();
            let ev = evolve_einstein_plane_symmetric(&data, grid.clone(), &EvolveOptions::default())
                .unwrap();
            let r = pde_residual(&sys, &ev.evolution.u);
            let mut zero = WedgeField::new(grid.clone(), 10);
            zero.fill(&|_, out| out.fill(0.0));
            let t = grid.spec.t_max;
            let pred = move |x: [f64; 4]| {
                let (a, b) = (x[0] - x[1], x[0] + x[1]);
                x[0] <= 0.75 * t && a >= 3.5 * h && b >= 3.5 * h
            };
            res.push(r.sup_diff_where(&zero, &pred));
        }
        assert!(res[0] <= 1e-4, "residual {res:?}");
        assert!(res[1] < res[0], "residual should shrink: {res:?}");
    }

    #[test]
    fn checkpoint_restart_is_bitwise_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("band.ckpt");
        let grid = wedge(0.5, 10.0, 0.125, 0.25);
        let data = data_scalar(&grid, &|x| (x[0] * 1.2 + 0.3 * x[2] - 0.2 * x[3]).sin());
        let sys = catalog::semilinear_cubic(None);
        let opts = EvolveOptions {
            checkpoint: Some(CheckpointCfg {
                path: path.clone(),
                every: 3,
            }),
            ..Default::default()
        };
        let full = evolve(&sys, &data, grid.clone(), &opts).unwrap();
        // The last dump is at front 6 of 8; resuming must reproduce the
        // remaining fronts bit for bit.
        let state = load_checkpoint(&path, grid.clone(), 1).unwrap();
        assert_eq!(state.front, 6);
        let resumed = resume(&sys, &data, state, &EvolveOptions::default()).unwrap();
        assert_eq!(full.u.sup_diff(&resumed.u), 0.0);
        // A mismatched lattice is rejected.
        let other = wedge(0.5, 10.0, 0.0625, 0.25);
        let err = load_checkpoint(&path, other, 1).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err:?}");
    }

    #[test]
    fn extent_map_statuses_and_monotonicity() {
        let h = 0.0625;
        let template = WedgeSpec::new(1.0, 1.0, h, 1.0);
        let data_for =
            |grid: &Arc<WedgeGrid>| -> Result<GoursatData> { Ok(data_scalar(grid, &|_| 0.0)) };
        let opts = EvolveOptions::default();

        // Empty T list gives an empty map.
        let sys = catalog::linear_wave(None);
        let map = semi_global_extent(&sys, &data_for, &template, &[], 1.0, &opts).unwrap();
        assert!(map.entries.is_empty());

        // A linear system succeeds everywhere at σ₀.
        let map =
            semi_global_extent(&sys, &data_for, &template, &[0.25, 0.5], 1.0, &opts).unwrap();
        assert!(map
            .entries
            .iter()
            .all(|e| e.status == ExtentStatus::Converged && e.f_sigma == 1.0));
        assert!(map.entries.iter().all(|e| e.k0.is_some()));

        // A⁰⁰ = 1 − 6ab breaks once ab grows past 1/6; σ-halving brackets it.
        let focusing = QuasilinearSystem {
            name: "focusing_demo".into(),
            principal: Principal::Raw(Arc::new(|x: [f64; 4], _u: &[f64]| {
                let ab = (x[0] - x[1]) * (x[0] + x[1]);
                let mut a = ETA;
                a[0][0] = 1.0 - 6.0 * ab;
                a
            })),
            ..catalog::linear_wave(None)
        };
        let map =
            semi_global_extent(&focusing, &data_for, &template, &[0.375, 1.0], 1.0, &opts)
                .unwrap();
        assert_eq!(map.entries[0].status, ExtentStatus::Converged);
        assert_eq!(map.entries[1].status, ExtentStatus::Shrunk);
        assert_eq!(map.entries[1].f_sigma, 0.25);
        assert!(map.entries[0].f_sigma >= map.entries[1].f_sigma);

        // A run that fails even at σ_min is marked failed and keeps its
        // diagnosis; other entries are unaffected.
        let hard = QuasilinearSystem {
            name: "hard_focusing".into(),
            principal: Principal::Raw(Arc::new(|x: [f64; 4], _u: &[f64]| {
                let ab = (x[0] - x[1]) * (x[0] + x[1]);
                let mut a = ETA;
                a[0][0] = 1.0 - 200.0 * ab;
                a
            })),
            ..catalog::linear_wave(None)
        };
        let map = semi_global_extent(&hard, &data_for, &template, &[1.0], 1.0, &opts).unwrap();
        assert_eq!(map.entries[0].status, ExtentStatus::Failed);
        assert!(map.entries[0].k0.is_none());
        assert!(map.entries[0].detail.contains("hyperbolicity"));
    }

    #[test]
    fn k0_diagnostic_orders() {
        // u = x⁰: |u| ≤ T, |∂u| = 1, higher derivatives 0.
        let grid = wedge(0.5, 10.0, 0.0625, 1.0);
        let mut v = WedgeField::new(grid.clone(), 1);
        v.fill_scalar(&|x| x[0]);
        let k0 = k0_diagnostic(&v);
        assert!((k0[0] - 0.5).abs() < 1e-12);
        assert!((k0[1] - 1.0).abs() < 1e-9);
        for &higher in &k0[2..] {
            assert!(higher < 1e-8, "{k0:?}");
        }
    }
}
