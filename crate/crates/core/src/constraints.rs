//! Transport of the transverse derivatives K = [∂₀u] along the null data
//! surfaces, and assembly/validation of conformal initial data.
//!
//! Restricting the reduced vacuum equations to a null plane S^w eliminates
//! the second transverse derivative (its coefficient is the characteristic
//! residual, zero on a null surface) and leaves a first-order transport
//! system for K driven by the surface data:
//!
//!     −c_i ∂_i K_{αβ} − ½[g^{ij}] ∂_i∂_j [g_{αβ}] + Q_{αβ}|_sub = 0,
//!     c_i = [g^{0i}] + (−1)^w [g^{1i}],
//!
//! where Q|_sub is the lower-order form with the transverse-derivative slots
//! replaced through the restriction identity (∂₀g ↦ K, ∂₁g ↦ ∂₁[g] + (−1)^w K,
//! ∂_a g ↦ ∂_a[g]). Near Minkowski c₁ = ∓1, so the system marches outward in
//! x¹ from the corner.

use crate::einstein::{
    christoffel_point, gauge_vector_point, invert_metric, q_lower_order_point, Metric, Sym4,
    SYM_IDX,
};
use crate::error::{Error, Result};
use crate::field::{diff1_line, diff1_periodic, SAxis, SurfaceField};
use crate::geometry::{restriction_sign, SurfaceGrid};
use crate::system::GoursatData;
use crate::tol;
use rayon::prelude::*;
use std::sync::Arc;

/// Surface data at one evaluation point: restricted values with intrinsic
/// tangential derivatives. Order of `d1`: ∂₁, ∂₂, ∂₃; order of `d2`:
/// ∂₁₁, ∂₁₂, ∂₁₃, ∂₂₂, ∂₂₃, ∂₃₃.
#[derive(Debug, Clone, Copy)]
pub struct SurfacePoint {
    pub g: Sym4,
    pub d1: [Sym4; 3],
    pub d2: [Sym4; 6],
}

/// Provider of surface metric data, continuous in x¹ (the march integrator
/// samples between stations) and nodal in the transverse directions.
pub trait SurfaceSource: Sync {
    fn grid(&self) -> &SurfaceGrid;
    /// Evaluate at true (signed) x¹ and transverse node (i2, i3).
    fn eval(&self, x1: f64, i2: usize, i3: usize) -> SurfacePoint;
}

/// Exact surface restriction of an analytic metric; all tangential
/// derivatives by the chain rule along x⁰ = ±x¹.
pub struct AnalyticSurface {
    pub metric: Arc<dyn Metric>,
    pub grid: SurfaceGrid,
}

impl SurfaceSource for AnalyticSurface {
    fn grid(&self) -> &SurfaceGrid {
        &self.grid
    }

    fn eval(&self, x1: f64, i2: usize, i3: usize) -> SurfacePoint {
        let s = crate::geometry::surface_sign(self.grid.w);
        let x = [s * x1, x1, self.grid.x2(i2), self.grid.x3(i3)];
        let g = self.metric.g(x);
        let dg = self.metric.dg(x);
        let d2g = self.metric.d2g(x);
        let pair = |m: usize, n: usize| SYM_IDX[m][n];
        let mut p = SurfacePoint {
            g,
            d1: [[0.0; 10]; 3],
            d2: [[0.0; 10]; 6],
        };
        for c in 0..10 {
            p.d1[0][c] = s * dg[0][c] + dg[1][c];
            p.d1[1][c] = dg[2][c];
            p.d1[2][c] = dg[3][c];
            p.d2[0][c] = d2g[pair(0, 0)][c] + 2.0 * s * d2g[pair(0, 1)][c] + d2g[pair(1, 1)][c];
            p.d2[1][c] = s * d2g[pair(0, 2)][c] + d2g[pair(1, 2)][c];
            p.d2[2][c] = s * d2g[pair(0, 3)][c] + d2g[pair(1, 3)][c];
            p.d2[3][c] = d2g[pair(2, 2)][c];
            p.d2[4][c] = d2g[pair(2, 3)][c];
            p.d2[5][c] = d2g[pair(3, 3)][c];
        }
        p
    }
}

/// Sampled surface data: tangential derivatives by the shared stencil policy,
/// cubic Lagrange interpolation along the station coordinate in between. At
/// lattice stations the interpolation reproduces nodal values exactly.
pub struct SampledSurface {
    grid: SurfaceGrid,
    /// g, ∂₁, ∂₂, ∂₃, ∂₁₁, ∂₁₂, ∂₁₃, ∂₂₂, ∂₂₃, ∂₃₃ (each ncomp of g).
    fields: Vec<SurfaceField>,
}

impl SampledSurface {
    pub fn from_field(g: &SurfaceField) -> Result<Self> {
        if g.grid.n1 < 3 {
            return Err(Error::Data(
                "sampled surface needs at least 4 stations for cubic interpolation".into(),
            ));
        }
        g.check_filled()?;
        let d1 = g.deriv_axis(SAxis::X1);
        let d2 = g.deriv_axis(SAxis::X2);
        let d3 = g.deriv_axis(SAxis::X3);
        let fields = vec![
            g.clone(),
            d1.clone(),
            d2.clone(),
            d3.clone(),
            g.second_deriv_axis(SAxis::X1),
            d1.deriv_axis(SAxis::X2),
            d1.deriv_axis(SAxis::X3),
            g.second_deriv_axis(SAxis::X2),
            d2.deriv_axis(SAxis::X3),
            g.second_deriv_axis(SAxis::X3),
        ];
        Ok(SampledSurface {
            grid: g.grid.clone(),
            fields,
        })
    }

    fn interp(&self, f: &SurfaceField, s: f64, i2: usize, i3: usize, out: &mut Sym4) {
        // Cubic Lagrange on the 4-station window around s (station units).
        let n1 = self.grid.n1;
        let j0 = (s.floor() as isize - 1).clamp(0, n1 as isize - 3) as usize;
        let t = s - j0 as f64;
        let mut w = [0.0; 4];
        for (m, wm) in w.iter_mut().enumerate() {
            let mut v = 1.0;
            for k in 0..4 {
                if k != m {
                    v *= (t - k as f64) / (m as f64 - k as f64);
                }
            }
            *wm = v;
        }
        for (c, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|m| w[m] * f.at(j0 + m, i2, i3, c)).sum();
        }
    }
}

impl SurfaceSource for SampledSurface {
    fn grid(&self) -> &SurfaceGrid {
        &self.grid
    }

    fn eval(&self, x1: f64, i2: usize, i3: usize) -> SurfacePoint {
        let s = crate::geometry::surface_sign(self.grid.w) * x1 / self.grid.h1;
        let mut p = SurfacePoint {
            g: [0.0; 10],
            d1: [[0.0; 10]; 3],
            d2: [[0.0; 10]; 6],
        };
        self.interp(&self.fields[0], s, i2, i3, &mut p.g);
        for i in 0..3 {
            let f = &self.fields[1 + i];
            let mut buf = [0.0; 10];
            self.interp(f, s, i2, i3, &mut buf);
            p.d1[i] = buf;
        }
        for i in 0..6 {
            let f = &self.fields[4 + i];
            let mut buf = [0.0; 10];
            self.interp(f, s, i2, i3, &mut buf);
            p.d2[i] = buf;
        }
        p
    }
}

/// Full coordinate gradient reconstructed from surface data and K through the
/// restriction identity: ∂₀g = K, ∂₁g = ∂₁[g] + (−1)^w K, ∂_a g = ∂_a[g].
pub fn substituted_gradient(d1: &[Sym4; 3], k: &Sym4, w: u8) -> [Sym4; 4] {
    let s = restriction_sign(w);
    let mut dg = [[0.0; 10]; 4];
    dg[0] = *k;
    for c in 0..10 {
        dg[1][c] = d1[0][c] + s * k[c];
    }
    dg[2] = d1[1];
    dg[3] = d1[2];
    dg
}

/// Transport coefficients c_i = [g^{0i}] + (−1)^w [g^{1i}] of ∂_i K.
pub fn transport_coefficients(ginv: &Sym4, w: u8) -> [f64; 3] {
    let s = restriction_sign(w);
    [
        ginv[SYM_IDX[0][1]] + s * ginv[SYM_IDX[1][1]],
        ginv[SYM_IDX[0][2]] + s * ginv[SYM_IDX[1][2]],
        ginv[SYM_IDX[0][3]] + s * ginv[SYM_IDX[1][3]],
    ]
}

/// The transport residual at one point: −c_i∂_iK − ½[g^{ij}]∂_ij[g] + Q|_sub.
/// Vanishes when K is the transverse derivative of a reduced-vacuum solution.
pub fn transport_rhs_point(p: &SurfacePoint, k: &Sym4, dk: &[Sym4; 3], w: u8) -> Result<Sym4> {
    let ginv = invert_metric(&p.g)?;
    let c = transport_coefficients(&ginv, w);
    let dg = substituted_gradient(&p.d1, k, w);
    let q = q_lower_order_point(&ginv, &dg);
    // Σ_{i,j=1..3} g^{ij} ∂_ij[g], pair slots (11,12,13,22,23,33).
    let pairs: [(usize, usize, f64); 6] = [
        (1, 1, 1.0),
        (1, 2, 2.0),
        (1, 3, 2.0),
        (2, 2, 1.0),
        (2, 3, 2.0),
        (3, 3, 1.0),
    ];
    let mut out = [0.0; 10];
    for comp in 0..10 {
        let mut v = q[comp];
        for i in 0..3 {
            v -= c[i] * dk[i][comp];
        }
        for (slot, &(i, j, mult)) in pairs.iter().enumerate() {
            v -= 0.5 * mult * ginv[SYM_IDX[i][j]] * p.d2[slot][comp];
        }
        out[comp] = v;
    }
    Ok(out)
}

/// Transport residual over the whole surface lattice; ∂K by the shared
/// stencil policy.
pub fn transport_rhs(src: &dyn SurfaceSource, k: &SurfaceField) -> Result<SurfaceField> {
    let g = src.grid();
    if k.grid != *g || k.ncomp != 10 {
        return Err(Error::Config(
            "K field does not live on the source's lattice".into(),
        ));
    }
    let dk = [
        k.deriv_axis(SAxis::X1),
        k.deriv_axis(SAxis::X2),
        k.deriv_axis(SAxis::X3),
    ];
    let mut out = SurfaceField::new(g.clone(), 10);
    for j in 0..=g.n1 {
        for i2 in 0..=g.n2 {
            for i3 in 0..=g.n3 {
                let p = src.eval(g.x1(j), i2, i3);
                let mut kk = [0.0; 10];
                kk.copy_from_slice(k.get(j, i2, i3));
                let mut d = [[0.0; 10]; 3];
                for (i, f) in dk.iter().enumerate() {
                    d[i].copy_from_slice(f.get(j, i2, i3));
                }
                let r = transport_rhs_point(&p, &kk, &d, g.w)?;
                out.set(j, i2, i3, &r);
            }
        }
    }
    Ok(out)
}

/// Splits Q|_sub by K-degree: (constant, linear, quadratic). Exact for the
/// quadratic form Q: even/odd evaluation, no fitting.
pub fn q_split(p: &SurfacePoint, k: &Sym4, w: u8) -> Result<(Sym4, Sym4, Sym4)> {
    let ginv = invert_metric(&p.g)?;
    let zero = [0.0; 10];
    let mut neg = *k;
    for v in &mut neg {
        *v = -*v;
    }
    let q0 = q_lower_order_point(&ginv, &substituted_gradient(&p.d1, &zero, w));
    let qp = q_lower_order_point(&ginv, &substituted_gradient(&p.d1, k, w));
    let qm = q_lower_order_point(&ginv, &substituted_gradient(&p.d1, &neg, w));
    let mut q1 = [0.0; 10];
    let mut q2 = [0.0; 10];
    for c in 0..10 {
        q1[c] = 0.5 * (qp[c] - qm[c]);
        q2[c] = 0.5 * (qp[c] + qm[c]) - q0[c];
    }
    Ok((q0, q1, q2))
}

/// Gauge vector evaluated on the surface through the substituted gradient.
pub fn surface_gauge_vector(p: &SurfacePoint, k: &Sym4, w: u8) -> Result<[f64; 4]> {
    let ginv = invert_metric(&p.g)?;
    let dg = substituted_gradient(&p.d1, k, w);
    let gamma = christoffel_point(&ginv, &dg);
    Ok(gauge_vector_point(&ginv, &gamma))
}

/// Result of a transport march: K on the surface lattice and the final
/// march position.
#[derive(Debug, Clone)]
pub struct TransportState {
    pub k: SurfaceField,
    /// Signed x¹ the march reached (the outer station).
    pub x1_end: f64,
}

/// Values on the corner lattice Γ (transverse nodes only).
#[derive(Debug, Clone)]
pub struct CornerValues {
    pub ncomp: usize,
    pub n2: usize,
    pub n3: usize,
    pub data: Vec<f64>,
}

impl CornerValues {
    pub fn zeros(ncomp: usize, n2: usize, n3: usize) -> Self {
        CornerValues {
            ncomp,
            n2,
            n3,
            data: vec![0.0; ncomp * (n2 + 1) * (n3 + 1)],
        }
    }

    fn idx(&self, i2: usize, i3: usize) -> usize {
        (i2 * (self.n3 + 1) + i3) * self.ncomp
    }

    pub fn at(&self, i2: usize, i3: usize) -> &[f64] {
        let i = self.idx(i2, i3);
        &self.data[i..i + self.ncomp]
    }

    pub fn set(&mut self, i2: usize, i3: usize, vals: &[f64]) {
        let i = self.idx(i2, i3);
        self.data[i..i + self.ncomp].copy_from_slice(vals);
    }
}

/// A first-order march problem c·∂₁K + rest(x, K, ∂₂K, ∂₃K) = 0 in the
/// surface's signed x¹.
pub trait TransportModel: Sync {
    fn ncomp(&self) -> usize;
    /// Coefficient of ∂₁K (scalar, shared by all components).
    fn principal(&self, x1: f64, i2: usize, i3: usize) -> Result<f64>;
    /// Residual minus the principal term.
    fn rest(
        &self,
        x1: f64,
        i2: usize,
        i3: usize,
        k: &[f64],
        dk2: &[f64],
        dk3: &[f64],
        out: &mut [f64],
    ) -> Result<()>;
}

/// The vacuum transport as a march model.
pub struct EinsteinTransport<'a> {
    pub src: &'a dyn SurfaceSource,
}

impl EinsteinTransport<'_> {
    fn w(&self) -> u8 {
        self.src.grid().w
    }
}

impl TransportModel for EinsteinTransport<'_> {
    fn ncomp(&self) -> usize {
        10
    }

    fn principal(&self, x1: f64, i2: usize, i3: usize) -> Result<f64> {
        let p = self.src.eval(x1, i2, i3);
        let ginv = invert_metric(&p.g)?;
        Ok(-transport_coefficients(&ginv, self.w())[0])
    }

    fn rest(
        &self,
        x1: f64,
        i2: usize,
        i3: usize,
        k: &[f64],
        dk2: &[f64],
        dk3: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        let p = self.src.eval(x1, i2, i3);
        let ginv = invert_metric(&p.g)?;
        let w = self.w();
        let c = transport_coefficients(&ginv, w);
        let mut kk = [0.0; 10];
        kk.copy_from_slice(k);
        let dg = substituted_gradient(&p.d1, &kk, w);
        let q = q_lower_order_point(&ginv, &dg);
        let pairs: [(usize, usize, f64); 6] = [
            (1, 1, 1.0),
            (1, 2, 2.0),
            (1, 3, 2.0),
            (2, 2, 1.0),
            (2, 3, 2.0),
            (3, 3, 1.0),
        ];
        for comp in 0..10 {
            let mut v = q[comp] - c[1] * dk2[comp] - c[2] * dk3[comp];
            for (slot, &(i, j, mult)) in pairs.iter().enumerate() {
                v -= 0.5 * mult * ginv[SYM_IDX[i][j]] * p.d2[slot][comp];
            }
            out[comp] = v;
        }
        Ok(())
    }
}

/// Transverse derivatives of the march state by the shared stencil policy.
fn state_transverse_derivs(
    state: &[f64],
    n: usize,
    n2: usize,
    n3: usize,
    ht: f64,
    periodic: bool,
) -> (Vec<f64>, Vec<f64>) {
    let node = |i2: usize, i3: usize, c: usize| (i2 * (n3 + 1) + i3) * n + c;
    let mut d2 = vec![0.0; state.len()];
    let mut d3 = vec![0.0; state.len()];
    for i3 in 0..=n3 {
        for c in 0..n {
            let mut get = |i: usize| state[node(i, i3, c)];
            let mut put = |i: usize, v: f64| d2[node(i, i3, c)] = v;
            if periodic {
                diff1_periodic(n2 + 1, ht, &mut get, &mut put);
            } else {
                diff1_line(n2 + 1, ht, &mut get, &mut put);
            }
        }
    }
    for i2 in 0..=n2 {
        for c in 0..n {
            let mut get = |i: usize| state[node(i2, i, c)];
            let mut put = |i: usize, v: f64| d3[node(i2, i, c)] = v;
            if periodic {
                diff1_periodic(n3 + 1, ht, &mut get, &mut put);
            } else {
                diff1_line(n3 + 1, ht, &mut get, &mut put);
            }
        }
    }
    (d2, d3)
}

fn march_rhs(
    model: &dyn TransportModel,
    grid: &SurfaceGrid,
    x1: f64,
    state: &[f64],
    corner_sign: &[f64],
) -> Result<Vec<f64>> {
    let n = model.ncomp();
    let (d2, d3) = state_transverse_derivs(state, n, grid.n2, grid.n3, grid.h_trans, grid.periodic);
    let nodes: Vec<(usize, usize)> = (0..=grid.n2)
        .flat_map(|i2| (0..=grid.n3).map(move |i3| (i2, i3)))
        .collect();
    let chunks: Result<Vec<Vec<f64>>> = nodes
        .par_iter()
        .map(|&(i2, i3)| {
            let base = (i2 * (grid.n3 + 1) + i3) * n;
            let c1 = model.principal(x1, i2, i3)?;
            // Degenerate when the coefficient vanishes outright or has
            // crossed zero since the corner (a transversal crossing never
            // lands on zero exactly).
            if c1.abs() <= tol::STRUCTURAL || c1 * corner_sign[i2 * (grid.n3 + 1) + i3] < 0.0 {
                return Err(Error::Numerics(format!(
                    "transport principal coefficient degenerates at x¹ = {x1:.6}, \
                     transverse node ({i2}, {i3}): c = {c1:.3e}"
                )));
            }
            let mut rest = vec![0.0; n];
            model.rest(
                x1,
                i2,
                i3,
                &state[base..base + n],
                &d2[base..base + n],
                &d3[base..base + n],
                &mut rest,
            )?;
            for v in &mut rest {
                *v = -*v / c1;
            }
            Ok(rest)
        })
        .collect();
    let chunks = chunks?;
    let mut out = vec![0.0; state.len()];
    for (slot, chunk) in nodes.iter().zip(chunks) {
        let base = (slot.0 * (grid.n3 + 1) + slot.1) * n;
        out[base..base + n].copy_from_slice(&chunk);
    }
    Ok(out)
}

/// Marches K outward in |x¹| from the corner by the classical 4-stage
/// single-step integrator over the station lattice, transverse derivatives
/// centered. The corner station is the prescribed data, bit for bit.
pub fn solve_transport(
    model: &dyn TransportModel,
    grid: &SurfaceGrid,
    corner: &CornerValues,
    bound: f64,
) -> Result<TransportState> {
    let n = model.ncomp();
    if corner.ncomp != n || corner.n2 != grid.n2 || corner.n3 != grid.n3 {
        return Err(Error::Config(
            "corner data shape does not match the surface lattice".into(),
        ));
    }
    let mut k = SurfaceField::new(grid.clone(), n);
    let mut state = corner.data.clone();
    let mut corner_sign = vec![0.0; (grid.n2 + 1) * (grid.n3 + 1)];
    for i2 in 0..=grid.n2 {
        for i3 in 0..=grid.n3 {
            corner_sign[i2 * (grid.n3 + 1) + i3] =
                model.principal(grid.x1(0), i2, i3)?.signum();
        }
    }
    let write =
        |k: &mut SurfaceField, j: usize, state: &[f64]| {
            for i2 in 0..=grid.n2 {
                for i3 in 0..=grid.n3 {
                    let base = (i2 * (grid.n3 + 1) + i3) * n;
                    k.set(j, i2, i3, &state[base..base + n]);
                }
            }
        };
    write(&mut k, 0, &state);
    let axpy = |y: &[f64], a: f64, x: &[f64]| -> Vec<f64> {
        y.iter().zip(x).map(|(u, v)| u + a * v).collect()
    };
    for j in 0..grid.n1 {
        let x1 = grid.x1(j);
        let dx = grid.x1(j + 1) - x1;
        let k1 = march_rhs(model, grid, x1, &state, &corner_sign)?;
        let k2 = march_rhs(model, grid, x1 + 0.5 * dx, &axpy(&state, 0.5 * dx, &k1), &corner_sign)?;
        let k3 = march_rhs(model, grid, x1 + 0.5 * dx, &axpy(&state, 0.5 * dx, &k2), &corner_sign)?;
        let k4 = march_rhs(model, grid, x1 + dx, &axpy(&state, dx, &k3), &corner_sign)?;
        for (i, v) in state.iter_mut().enumerate() {
            *v += dx / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let sup = state.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if !sup.is_finite() || sup > bound {
            return Err(Error::Divergence(format!(
                "transport blow-up: |K| = {sup:.3e} exceeds {bound:.3e} at x¹ = {:.6} \
                 (station {})",
                grid.x1(j + 1),
                j + 1
            )));
        }
        write(&mut k, j + 1, &state);
    }
    Ok(TransportState {
        k,
        x1_end: grid.x1(grid.n1),
    })
}

/// Einstein transport: marches the 10 metric K-components over a surface.
pub fn solve_einstein_transport(
    src: &dyn SurfaceSource,
    corner: &CornerValues,
    bound: f64,
) -> Result<TransportState> {
    let model = EinsteinTransport { src };
    solve_transport(&model, &src.grid().clone(), corner, bound)
}

/// Corner K from the two surface data sets: on Γ the outward derivatives
/// differ only through the transverse derivative, K = ½(d₁[u]¹ − d₁[u]²).
pub fn corner_k_from_sources(
    s1: &dyn SurfaceSource,
    s2: &dyn SurfaceSource,
) -> Result<CornerValues> {
    let (g1, g2) = (s1.grid(), s2.grid());
    if g1.n2 != g2.n2 || g1.n3 != g2.n3 {
        return Err(Error::Config("surface lattices disagree on Γ".into()));
    }
    let mut out = CornerValues::zeros(10, g1.n2, g1.n3);
    for i2 in 0..=g1.n2 {
        for i3 in 0..=g1.n3 {
            let p1 = s1.eval(0.0, i2, i3);
            let p2 = s2.eval(0.0, i2, i3);
            let mut k = [0.0; 10];
            for c in 0..10 {
                k[c] = 0.5 * (p1.d1[0][c] - p2.d1[0][c]);
            }
            out.set(i2, i3, &k);
        }
    }
    Ok(out)
}

/// Conformal corner data: the free functions of the data construction.
#[derive(Debug, Clone)]
pub struct CornerData {
    /// Ω̃ on Γ, row-major over (i2, i3).
    pub omega: Vec<f64>,
    /// Prescribed ∂₀Ω and ∂₁Ω on Γ.
    pub omega_d0: Vec<f64>,
    pub omega_d1: Vec<f64>,
    /// Prescribed g₀₂,₁ and g₀₃,₁ on Γ.
    pub b12: Vec<f64>,
    pub b13: Vec<f64>,
    /// Unit-determinant positive 2×2 fields (h₂₂, h₂₃, h₃₃) on D¹ and D².
    pub h: [SurfaceField; 2],
}

impl CornerData {
    /// Flat data: h the identity, Ω̃ ≡ 1, all corner derivatives zero.
    pub fn flat(g1: SurfaceGrid, g2: SurfaceGrid) -> Self {
        let nt = (g1.n2 + 1) * (g1.n3 + 1);
        let mut h1 = SurfaceField::new(g1, 3);
        h1.fill(&|_, _, _, out| {
            out[0] = 1.0;
            out[1] = 0.0;
            out[2] = 1.0;
        });
        let mut h2 = SurfaceField::new(g2, 3);
        h2.fill(&|_, _, _, out| {
            out[0] = 1.0;
            out[1] = 0.0;
            out[2] = 1.0;
        });
        CornerData {
            omega: vec![1.0; nt],
            omega_d0: vec![0.0; nt],
            omega_d1: vec![0.0; nt],
            b12: vec![0.0; nt],
            b13: vec![0.0; nt],
            h: [h1, h2],
        }
    }

    /// Checks det h = 1 (tolerance 10⁻¹⁰), positive definiteness, matching
    /// transverse lattices, and node-wise agreement of h¹ and h² on Γ.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let (g1, g2) = (&self.h[0].grid, &self.h[1].grid);
        if g1.n2 != g2.n2 || g1.n3 != g2.n3 {
            problems.push("h¹ and h² transverse lattices disagree".to_string());
        }
        let nt = (g1.n2 + 1) * (g1.n3 + 1);
        for (name, v) in [
            ("omega", &self.omega),
            ("omega_d0", &self.omega_d0),
            ("omega_d1", &self.omega_d1),
            ("b12", &self.b12),
            ("b13", &self.b13),
        ] {
            if v.len() != nt {
                problems.push(format!("{name} has {} values, corner has {nt}", v.len()));
            }
        }
        for (wi, h) in self.h.iter().enumerate() {
            let g = &h.grid;
            'scan: for j in 0..=g.n1 {
                for i2 in 0..=g.n2 {
                    for i3 in 0..=g.n3 {
                        let v = h.get(j, i2, i3);
                        let det = v[0] * v[2] - v[1] * v[1];
                        if (det - 1.0).abs() > tol::STRUCTURAL {
                            problems.push(format!(
                                "det h^{} = {det:.12} at station ({j}, {i2}, {i3}); must be 1",
                                wi + 1
                            ));
                            break 'scan;
                        }
                        if v[0] <= 0.0 || det <= 0.0 {
                            problems.push(format!(
                                "h^{} is not positive definite at station ({j}, {i2}, {i3})",
                                wi + 1
                            ));
                            break 'scan;
                        }
                    }
                }
            }
        }
        if problems.is_empty() {
            for i2 in 0..=g1.n2 {
                for i3 in 0..=g1.n3 {
                    let a = self.h[0].get(0, i2, i3);
                    let b = self.h[1].get(0, i2, i3);
                    for c in 0..3 {
                        if (a[c] - b[c]).abs() > tol::EXACT {
                            problems.push(format!(
                                "h¹ and h² disagree on Γ at ({i2}, {i3}) by {:.3e}",
                                (a[c] - b[c]).abs()
                            ));
                        }
                    }
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Data(problems.join("; ")))
        }
    }
}

/// Assembled conformal data with the corner records carried alongside.
#[derive(Debug, Clone)]
pub struct ConformalAssembly {
    pub data: GoursatData,
    /// Ω restricted to Γ (equals Ω̃).
    pub omega_gamma: Vec<f64>,
    /// The prescribed corner assignments: ∂₀Ω, ∂₁Ω, g₀₂,₁, g₀₃,₁ on Γ.
    pub omega_d0: Vec<f64>,
    pub omega_d1: Vec<f64>,
    pub g02_1: Vec<f64>,
    pub g03_1: Vec<f64>,
}

/// Default Ω: the corner value extended constant along each surface. A
/// stand-in for the Raychaudhuri-type hierarchy that actually determines Ω;
/// callers may pass any positive field instead.
pub fn omega_constant_extension(corner: &CornerData) -> [SurfaceField; 2] {
    core::array::from_fn(|i| {
        let g = corner.h[i].grid.clone();
        let mut f = SurfaceField::new(g.clone(), 1);
        for j in 0..=g.n1 {
            for i2 in 0..=g.n2 {
                for i3 in 0..=g.n3 {
                    f.set_at(j, i2, i3, 0, corner.omega[i2 * (g.n3 + 1) + i3]);
                }
            }
        }
        f
    })
}

/// Builds the metric surface data g_{ab} = −Ω·h_{ab} on the 2×2 transverse
/// block (the sign places the block in the (+,−,−,−) signature; flat data
/// reduce to Minkowski exactly), with the null block in the Ω-scaled flat
/// form g₀₀ = Ω, g₁₁ = −Ω and all mixed components zero. The assembled data
/// satisfy the characteristic condition identically for any Ω > 0.
pub fn assemble_conformal_data(
    corner: &CornerData,
    omega: &[SurfaceField; 2],
) -> Result<ConformalAssembly> {
    corner.validate()?;
    let mut phis = Vec::with_capacity(2);
    for (i, om) in omega.iter().enumerate() {
        if om.ncomp != 1 {
            return Err(Error::Config("Ω must be a scalar field".into()));
        }
        let g = &corner.h[i].grid;
        if om.grid != *g {
            return Err(Error::Config("Ω lattice does not match h lattice".into()));
        }
        let mut phi = SurfaceField::new(g.clone(), 10);
        for j in 0..=g.n1 {
            for i2 in 0..=g.n2 {
                for i3 in 0..=g.n3 {
                    let o = om.at(j, i2, i3, 0);
                    if !(o > 0.0) {
                        return Err(Error::Data(format!(
                            "Ω must be positive; got {o} at station ({j}, {i2}, {i3}) of S{}",
                            i + 1
                        )));
                    }
                    let h = corner.h[i].get(j, i2, i3);
                    let mut v = [0.0; 10];
                    v[SYM_IDX[0][0]] = o;
                    v[SYM_IDX[1][1]] = -o;
                    v[SYM_IDX[2][2]] = -o * h[0];
                    v[SYM_IDX[2][3]] = -o * h[1];
                    v[SYM_IDX[3][3]] = -o * h[2];
                    phi.set(j, i2, i3, &v);
                }
            }
        }
        phis.push(phi);
    }
    let phi2 = phis.pop().unwrap();
    let phi1 = phis.pop().unwrap();
    // Ω on Γ must be the prescribed Ω̃ on both surfaces.
    let g = &corner.h[0].grid;
    for (i, om) in omega.iter().enumerate() {
        for i2 in 0..=g.n2 {
            for i3 in 0..=g.n3 {
                let d = (om.at(0, i2, i3, 0) - corner.omega[i2 * (g.n3 + 1) + i3]).abs();
                if d > tol::EXACT {
                    return Err(Error::Data(format!(
                        "Ω on S{} restricted to Γ deviates from Ω̃ by {d:.3e} at ({i2}, {i3})",
                        i + 1
                    )));
                }
            }
        }
    }
    Ok(ConformalAssembly {
        data: GoursatData::from_fields(phi1, phi2)?,
        omega_gamma: corner.omega.clone(),
        omega_d0: corner.omega_d0.clone(),
        omega_d1: corner.omega_d1.clone(),
        g02_1: corner.b12.clone(),
        g03_1: corner.b13.clone(),
    })
}

/// Corner compatibility verdict on assembled Goursat data.
#[derive(Debug, Clone)]
pub struct CompatibilityReport {
    pub max_mismatch: f64,
    pub per_component: Vec<f64>,
    pub pass: bool,
}

pub fn corner_compatibility(data: &GoursatData) -> CompatibilityReport {
    CompatibilityReport {
        max_mismatch: data.corner.max_mismatch,
        per_component: data.corner.per_component.clone(),
        pass: data.corner.max_mismatch <= tol::EXACT,
    }
}
