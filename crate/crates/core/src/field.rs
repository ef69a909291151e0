//! Grid fields on the wedge and on the null planes, with the shared
//! finite-difference stencil policy.
//!
//! Storage is dense over the lattice bounding box with NaN at masked or
//! not-yet-filled nodes, so any read of an unwritten node poisons the result
//! instead of silently using stale zeros.
//!
//! Stencil policy (used by every module so cross-module identities compare
//! like with like): first derivatives are centered in the interior and
//! one-sided third order (4-point) at line ends, so that composed mixed
//! second derivatives remain second order at the ends; direct second
//! derivatives are centered interior with one-sided second order (4-point)
//! ends. Lines shorter than the stencil fall back to lower order; length-1
//! lines get zero. Periodic transverse lines wrap (the duplicated endpoint
//! node carries the same value as node 0).

use crate::error::{Error, Result};
use crate::geometry::{SurfaceGrid, WedgeGrid};
use std::sync::Arc;

/// Lattice direction on the wedge. A and B are the null directions; the
/// Cartesian time/space derivatives are combinations (see `deriv_cart`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    A,
    B,
    X2,
    X3,
}

/// Lattice direction on a null plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SAxis {
    X1,
    X2,
    X3,
}

/// First derivative along a contiguous line of `len` nodes with spacing `h`.
/// Centered interior; 4-point third-order one-sided ends (falling back for
/// short lines). `get`/`put` address line-local indices.
pub fn diff1_line(
    len: usize,
    h: f64,
    get: &mut dyn FnMut(usize) -> f64,
    put: &mut dyn FnMut(usize, f64),
) {
    match len {
        0 => {}
        1 => put(0, 0.0),
        2 => {
            let d = (get(1) - get(0)) / h;
            put(0, d);
            put(1, d);
        }
        3 => {
            put(0, (-3.0 * get(0) + 4.0 * get(1) - get(2)) / (2.0 * h));
            put(1, (get(2) - get(0)) / (2.0 * h));
            put(2, (3.0 * get(2) - 4.0 * get(1) + get(0)) / (2.0 * h));
        }
        _ => {
            put(
                0,
                (-11.0 * get(0) + 18.0 * get(1) - 9.0 * get(2) + 2.0 * get(3)) / (6.0 * h),
            );
            for i in 1..len - 1 {
                put(i, (get(i + 1) - get(i - 1)) / (2.0 * h));
            }
            let n = len - 1;
            put(
                n,
                (11.0 * get(n) - 18.0 * get(n - 1) + 9.0 * get(n - 2) - 2.0 * get(n - 3))
                    / (6.0 * h),
            );
        }
    }
}

/// Second derivative along a contiguous line; centered interior, 4-point
/// second-order one-sided ends.
pub fn diff2_line(
    len: usize,
    h: f64,
    get: &mut dyn FnMut(usize) -> f64,
    put: &mut dyn FnMut(usize, f64),
) {
    let h2 = h * h;
    match len {
        0 => {}
        1 | 2 => {
            for i in 0..len {
                put(i, 0.0);
            }
        }
        3 => {
            let d = (get(0) - 2.0 * get(1) + get(2)) / h2;
            put(0, d);
            put(1, d);
            put(2, d);
        }
        _ => {
            put(
                0,
                (2.0 * get(0) - 5.0 * get(1) + 4.0 * get(2) - get(3)) / h2,
            );
            for i in 1..len - 1 {
                put(i, (get(i - 1) - 2.0 * get(i) + get(i + 1)) / h2);
            }
            let n = len - 1;
            put(
                n,
                (2.0 * get(n) - 5.0 * get(n - 1) + 4.0 * get(n - 2) - get(n - 3)) / h2,
            );
        }
    }
}

/// Periodic first derivative: `len` nodes where node len−1 duplicates node 0.
pub fn diff1_periodic(
    len: usize,
    h: f64,
    get: &mut dyn FnMut(usize) -> f64,
    put: &mut dyn FnMut(usize, f64),
) {
    let m = len - 1; // number of distinct nodes (period)
    if m < 2 {
        for i in 0..len {
            put(i, 0.0);
        }
        return;
    }
    for i in 0..len {
        let j = i % m;
        let ip = (j + 1) % m;
        let im = (j + m - 1) % m;
        put(i, (get(ip) - get(im)) / (2.0 * h));
    }
}

/// Periodic second derivative, same indexing as `diff1_periodic`.
pub fn diff2_periodic(
    len: usize,
    h: f64,
    get: &mut dyn FnMut(usize) -> f64,
    put: &mut dyn FnMut(usize, f64),
) {
    let m = len - 1;
    if m < 2 {
        for i in 0..len {
            put(i, 0.0);
        }
        return;
    }
    for i in 0..len {
        let j = i % m;
        let ip = (j + 1) % m;
        let im = (j + m - 1) % m;
        put(i, (get(im) - 2.0 * get(j) + get(ip)) / (h * h));
    }
}

/// Trapezoid weights for n+1 equispaced nodes spanning n cells of width h.
/// The same weights integrate periodic data exactly as the rectangle rule
/// (the two half-weighted endpoints are the same node).
pub fn trapezoid_weights(n_nodes: usize, h: f64) -> Vec<f64> {
    if n_nodes == 0 {
        return Vec::new();
    }
    if n_nodes == 1 {
        return vec![0.0];
    }
    let mut w = vec![h; n_nodes];
    w[0] = 0.5 * h;
    w[n_nodes - 1] = 0.5 * h;
    w
}

/// Multi-component field on the wedge lattice.
#[derive(Debug, Clone)]
pub struct WedgeField {
    pub grid: Arc<WedgeGrid>,
    pub ncomp: usize,
    data: Vec<f64>,
}

impl WedgeField {
    /// NaN-initialized field (reads of unwritten nodes poison downstream).
    pub fn new(grid: Arc<WedgeGrid>, ncomp: usize) -> Self {
        let n = (grid.n_diag + 1) * (grid.n_diag + 1) * (grid.n2 + 1) * (grid.n3 + 1) * ncomp;
        WedgeField {
            grid,
            ncomp,
            data: vec![f64::NAN; n],
        }
    }

    #[inline]
    pub fn idx(&self, ia: usize, ib: usize, i2: usize, i3: usize) -> usize {
        let g = &self.grid;
        (((ia * (g.n_diag + 1) + ib) * (g.n2 + 1) + i2) * (g.n3 + 1) + i3) * self.ncomp
    }

    #[inline]
    pub fn get(&self, ia: usize, ib: usize, i2: usize, i3: usize) -> &[f64] {
        let k = self.idx(ia, ib, i2, i3);
        &self.data[k..k + self.ncomp]
    }

    #[inline]
    pub fn at(&self, ia: usize, ib: usize, i2: usize, i3: usize, c: usize) -> f64 {
        self.data[self.idx(ia, ib, i2, i3) + c]
    }

    #[inline]
    pub fn set(&mut self, ia: usize, ib: usize, i2: usize, i3: usize, vals: &[f64]) {
        let k = self.idx(ia, ib, i2, i3);
        self.data[k..k + self.ncomp].copy_from_slice(vals);
    }

    #[inline]
    pub fn set_at(&mut self, ia: usize, ib: usize, i2: usize, i3: usize, c: usize, v: f64) {
        let k = self.idx(ia, ib, i2, i3) + c;
        self.data[k] = v;
    }

    /// Fill every unmasked node from a per-point evaluator writing all
    /// components into the provided buffer.
    pub fn fill(&mut self, f: &dyn Fn([f64; 4], &mut [f64])) {
        let grid = self.grid.clone();
        let mut buf = vec![0.0; self.ncomp];
        for ib in 0..=grid.n_diag {
            for ia in 0..=grid.row_amax[ib] {
                for i2 in 0..=grid.n2 {
                    for i3 in 0..=grid.n3 {
                        f(grid.point(ia, ib, i2, i3), &mut buf);
                        self.set(ia, ib, i2, i3, &buf);
                    }
                }
            }
        }
    }

    /// Fill a scalar (1-component) field.
    pub fn fill_scalar(&mut self, f: &dyn Fn([f64; 4]) -> f64) {
        assert_eq!(self.ncomp, 1);
        self.fill(&|x, out| out[0] = f(x));
    }

    /// True iff every unmasked node holds finite values.
    pub fn check_filled(&self) -> Result<()> {
        let g = &self.grid;
        for ib in 0..=g.n_diag {
            for ia in 0..=g.row_amax[ib] {
                for i2 in 0..=g.n2 {
                    for i3 in 0..=g.n3 {
                        if self.get(ia, ib, i2, i3).iter().any(|v| !v.is_finite()) {
                            return Err(Error::Numerics(format!(
                                "non-finite value at node (ia={ia}, ib={ib}, i2={i2}, i3={i3})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Max |value| over unmasked nodes, ignoring NaN (use `check_filled`
    /// first when NaN must be an error).
    pub fn sup(&self) -> f64 {
        let g = &self.grid;
        let mut m: f64 = 0.0;
        for ib in 0..=g.n_diag {
            for ia in 0..=g.row_amax[ib] {
                for i2 in 0..=g.n2 {
                    for i3 in 0..=g.n3 {
                        for v in self.get(ia, ib, i2, i3) {
                            if v.is_finite() {
                                m = m.max(v.abs());
                            }
                        }
                    }
                }
            }
        }
        m
    }

    /// Max |self − other| over unmasked nodes (NaN-ignoring, like `sup`).
    pub fn sup_diff(&self, other: &WedgeField) -> f64 {
        assert_eq!(self.ncomp, other.ncomp);
        let g = &self.grid;
        let mut m: f64 = 0.0;
        for ib in 0..=g.n_diag {
            for ia in 0..=g.row_amax[ib] {
                for i2 in 0..=g.n2 {
                    for i3 in 0..=g.n3 {
                        let a = self.get(ia, ib, i2, i3);
                        let b = other.get(ia, ib, i2, i3);
                        for c in 0..self.ncomp {
                            let d = (a[c] - b[c]).abs();
                            if d.is_finite() {
                                m = m.max(d);
                            }
                        }
                    }
                }
            }
        }
        m
    }

    /// Max |self − other| over unmasked nodes whose coordinates satisfy the
    /// predicate. Stencil quality degrades within a few h of the caps (lines
    /// there are too short for full one-sided stencils), so order-of-accuracy
    /// measurements restrict to an interior region, typically x⁰ ≤ 0.75·T.
    pub fn sup_diff_where(&self, other: &WedgeField, pred: &dyn Fn([f64; 4]) -> bool) -> f64 {
        assert_eq!(self.ncomp, other.ncomp);
        let g = &self.grid;
        let mut m: f64 = 0.0;
        for ib in 0..=g.n_diag {
            for ia in 0..=g.row_amax[ib] {
                if !pred(g.point(ia, ib, 0, 0)) {
                    continue;
                }
                for i2 in 0..=g.n2 {
                    for i3 in 0..=g.n3 {
                        let a = self.get(ia, ib, i2, i3);
                        let b = other.get(ia, ib, i2, i3);
                        for c in 0..self.ncomp {
                            let d = (a[c] - b[c]).abs();
                            if d.is_finite() {
                                m = m.max(d);
                            }
                        }
                    }
                }
            }
        }
        m
    }

    /// Derivative along a lattice axis; same component count.
    pub fn deriv_axis(&self, axis: Axis) -> WedgeField {
        self.apply_line_op(axis, false)
    }

    /// Direct second derivative along a lattice axis.
    pub fn second_deriv_axis(&self, axis: Axis) -> WedgeField {
        self.apply_line_op(axis, true)
    }

    fn apply_line_op(&self, axis: Axis, second: bool) -> WedgeField {
        let mut out = WedgeField::new(self.grid.clone(), self.ncomp);
        let g = self.grid.clone();
        let periodic = g.spec.periodic;
        match axis {
            Axis::A => {
                for ib in 0..=g.n_diag {
                    let len = g.row_amax[ib] + 1;
                    for i2 in 0..=g.n2 {
                        for i3 in 0..=g.n3 {
                            for c in 0..self.ncomp {
                                let mut get = |i: usize| self.at(i, ib, i2, i3, c);
                                let mut vals = vec![0.0; len];
                                let mut put = |i: usize, v: f64| vals[i] = v;
                                if second {
                                    diff2_line(len, g.h(), &mut get, &mut put);
                                } else {
                                    diff1_line(len, g.h(), &mut get, &mut put);
                                }
                                for (i, v) in vals.iter().enumerate() {
                                    out.set_at(i, ib, i2, i3, c, *v);
                                }
                            }
                        }
                    }
                }
            }
            Axis::B => {
                for ia in 0..=g.n_diag {
                    if g.col_bmax.len() <= ia {
                        continue;
                    }
                    let len = g.col_bmax[ia] + 1;
                    for i2 in 0..=g.n2 {
                        for i3 in 0..=g.n3 {
                            for c in 0..self.ncomp {
                                let mut get = |i: usize| self.at(ia, i, i2, i3, c);
                                let mut vals = vec![0.0; len];
                                let mut put = |i: usize, v: f64| vals[i] = v;
                                if second {
                                    diff2_line(len, g.h(), &mut get, &mut put);
                                } else {
                                    diff1_line(len, g.h(), &mut get, &mut put);
                                }
                                for (i, v) in vals.iter().enumerate() {
                                    out.set_at(ia, i, i2, i3, c, *v);
                                }
                            }
                        }
                    }
                }
            }
            Axis::X2 | Axis::X3 => {
                let len = if axis == Axis::X2 { g.n2 + 1 } else { g.n3 + 1 };
                for ib in 0..=g.n_diag {
                    for ia in 0..=g.row_amax[ib] {
                        let other = if axis == Axis::X2 { g.n3 } else { g.n2 };
                        for io in 0..=other {
                            for c in 0..self.ncomp {
                                let mut get = |i: usize| match axis {
                                    Axis::X2 => self.at(ia, ib, i, io, c),
                                    _ => self.at(ia, ib, io, i, c),
                                };
                                let mut vals = vec![0.0; len];
                                let mut put = |i: usize, v: f64| vals[i] = v;
                                match (periodic, second) {
                                    (true, false) => diff1_periodic(len, g.ht(), &mut get, &mut put),
                                    (true, true) => diff2_periodic(len, g.ht(), &mut get, &mut put),
                                    (false, false) => diff1_line(len, g.ht(), &mut get, &mut put),
                                    (false, true) => diff2_line(len, g.ht(), &mut get, &mut put),
                                }
                                for (i, v) in vals.iter().enumerate() {
                                    match axis {
                                        Axis::X2 => out.set_at(ia, ib, i, io, c, *v),
                                        _ => out.set_at(ia, ib, io, i, c, *v),
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Cartesian derivative ∂_μ: ∂₀ = ∂_a + ∂_b, ∂₁ = ∂_b − ∂_a.
    pub fn deriv_cart(&self, mu: usize) -> WedgeField {
        match mu {
            0 => self.deriv_axis(Axis::A).add(&self.deriv_axis(Axis::B)),
            1 => self.deriv_axis(Axis::B).sub(&self.deriv_axis(Axis::A)),
            2 => self.deriv_axis(Axis::X2),
            3 => self.deriv_axis(Axis::X3),
            _ => panic!("mu out of range"),
        }
    }

    /// Cartesian second derivative ∂_μ∂_ν using direct null-direction second
    /// stencils where possible: ∂₀₀ = ∂_aa + 2∂_ab + ∂_bb, ∂₀₁ = ∂_bb − ∂_aa,
    /// ∂₁₁ = ∂_aa − 2∂_ab + ∂_bb; mixed terms by composition.
    pub fn second_deriv_cart(&self, mu: usize, nu: usize) -> WedgeField {
        let (m, n) = if mu <= nu { (mu, nu) } else { (nu, mu) };
        match (m, n) {
            (0, 0) => {
                let aa = self.second_deriv_axis(Axis::A);
                let bb = self.second_deriv_axis(Axis::B);
                let ab = self.deriv_axis(Axis::A).deriv_axis(Axis::B);
                aa.add(&bb).add(&ab.scale(2.0))
            }
            (0, 1) => {
                let aa = self.second_deriv_axis(Axis::A);
                let bb = self.second_deriv_axis(Axis::B);
                bb.sub(&aa)
            }
            (1, 1) => {
                let aa = self.second_deriv_axis(Axis::A);
                let bb = self.second_deriv_axis(Axis::B);
                let ab = self.deriv_axis(Axis::A).deriv_axis(Axis::B);
                aa.add(&bb).sub(&ab.scale(2.0))
            }
            (0, 2) | (0, 3) | (1, 2) | (1, 3) => {
                let t = if n == 2 { Axis::X2 } else { Axis::X3 };
                self.deriv_axis(t).deriv_cart(m)
            }
            (2, 2) => self.second_deriv_axis(Axis::X2),
            (3, 3) => self.second_deriv_axis(Axis::X3),
            (2, 3) => self.deriv_axis(Axis::X2).deriv_axis(Axis::X3),
            _ => unreachable!(),
        }
    }

    /// Apply D^α for a Cartesian multi-index α, second derivatives first so
    /// the accurate direct stencils are used where they exist.
    pub fn deriv_multi(&self, alpha: [usize; 4]) -> WedgeField {
        let mut rem = alpha;
        let mut cur = self.clone();
        // Peel pairs (direct second stencils), then singles.
        for mu in 0..4 {
            while rem[mu] >= 2 {
                cur = cur.second_deriv_cart(mu, mu);
                rem[mu] -= 2;
            }
        }
        for mu in 0..4 {
            while rem[mu] >= 1 {
                cur = cur.deriv_cart(mu);
                rem[mu] -= 1;
            }
        }
        cur
    }

    pub fn add(&self, other: &WedgeField) -> WedgeField {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &WedgeField) -> WedgeField {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> WedgeField {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= s;
        }
        out
    }

    fn zip(&self, other: &WedgeField, f: impl Fn(f64, f64) -> f64) -> WedgeField {
        assert_eq!(self.ncomp, other.ncomp);
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(other.data.iter()) {
            *v = f(*v, *w);
        }
        out
    }

    /// Multilinear interpolation at an ambient point: bilinear over the
    /// enclosing (a, b) cell and bilinear transversely (wrapping when
    /// periodic, clamping otherwise). The null cell must lie in the wedge;
    /// zero-weight corners on an exact lattice line are not required.
    pub fn value_at(&self, x: [f64; 4], out: &mut [f64]) -> Result<()> {
        let g = &self.grid;
        let h = g.h();
        let fa = (x[0] - x[1]) / h;
        let fb = (x[0] + x[1]) / h;
        let n = g.n_diag as f64;
        if fa < -1e-9 || fb < -1e-9 || fa > n + 1e-9 || fb > n + 1e-9 {
            return Err(Error::DomainCoverage(format!(
                "point (x⁰ = {:.6}, x¹ = {:.6}) lies outside the null range of the wedge",
                x[0], x[1]
            )));
        }
        let (ia0, ta) = clamp_cell(fa, g.n_diag);
        let (ib0, tb) = clamp_cell(fb, g.n_diag);
        let ia1 = if ta == 0.0 { ia0 } else { ia0 + 1 };
        let ib1 = if tb == 0.0 { ib0 } else { ib0 + 1 };
        // The mask is downward closed, so the far corner decides.
        if !g.in_wedge(ia1, ib1) {
            return Err(Error::DomainCoverage(format!(
                "point (x⁰ = {:.6}, x¹ = {:.6}) falls in a null cell truncated by the wedge caps",
                x[0], x[1]
            )));
        }
        let (k0, tk) = transverse_cell((x[2] - g.spec.b2.0) / g.ht(), g.n2, g.spec.periodic);
        let (l0, tl) = transverse_cell((x[3] - g.spec.b3.0) / g.ht(), g.n3, g.spec.periodic);
        let k1 = if g.spec.periodic { wrap_next(k0, g.n2) } else { (k0 + 1).min(g.n2) };
        let l1 = if g.spec.periodic { wrap_next(l0, g.n3) } else { (l0 + 1).min(g.n3) };
        for c in 0..self.ncomp {
            let mut v = 0.0;
            for (ja, wa) in [(ia0, 1.0 - ta), (ia1, ta)] {
                if wa == 0.0 {
                    continue;
                }
                for (jb, wb) in [(ib0, 1.0 - tb), (ib1, tb)] {
                    if wb == 0.0 {
                        continue;
                    }
                    let c00 = self.at(ja, jb, k0, l0, c);
                    let c10 = self.at(ja, jb, k1, l0, c);
                    let c01 = self.at(ja, jb, k0, l1, c);
                    let c11 = self.at(ja, jb, k1, l1, c);
                    let c0 = c00 + (c10 - c00) * tk;
                    let c1 = c01 + (c11 - c01) * tk;
                    v += wa * wb * (c0 + (c1 - c0) * tl);
                }
            }
            out[c] = v;
        }
        Ok(())
    }

    /// Restriction [v]^w: row copy onto the null-plane lattice; errors if any
    /// required node is unfilled.
    pub fn restrict(&self, w: u8) -> Result<SurfaceField> {
        let sg = self.grid.surface(w);
        let mut out = SurfaceField::new(sg, self.ncomp);
        for j in 0..=out.grid.n1 {
            let (ia, ib) = if w == crate::geometry::W1 { (0, j) } else { (j, 0) };
            for i2 in 0..=self.grid.n2 {
                for i3 in 0..=self.grid.n3 {
                    let vals = self.get(ia, ib, i2, i3);
                    if vals.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Data(format!(
                            "field undefined on S^{w} at station {j}, transverse ({i2},{i3})"
                        )));
                    }
                    out.set(j, i2, i3, vals);
                }
            }
        }
        Ok(out)
    }
}

/// Multi-component field on a null-plane lattice (full box, no mask).
#[derive(Debug, Clone)]
pub struct SurfaceField {
    pub grid: SurfaceGrid,
    pub ncomp: usize,
    data: Vec<f64>,
}

impl SurfaceField {
    pub fn new(grid: SurfaceGrid, ncomp: usize) -> Self {
        let n = (grid.n1 + 1) * (grid.n2 + 1) * (grid.n3 + 1) * ncomp;
        SurfaceField {
            grid,
            ncomp,
            data: vec![f64::NAN; n],
        }
    }

    #[inline]
    pub fn idx(&self, j: usize, i2: usize, i3: usize) -> usize {
        ((j * (self.grid.n2 + 1) + i2) * (self.grid.n3 + 1) + i3) * self.ncomp
    }

    #[inline]
    pub fn get(&self, j: usize, i2: usize, i3: usize) -> &[f64] {
        let k = self.idx(j, i2, i3);
        &self.data[k..k + self.ncomp]
    }

    #[inline]
    pub fn at(&self, j: usize, i2: usize, i3: usize, c: usize) -> f64 {
        self.data[self.idx(j, i2, i3) + c]
    }

    #[inline]
    pub fn set(&mut self, j: usize, i2: usize, i3: usize, vals: &[f64]) {
        let k = self.idx(j, i2, i3);
        self.data[k..k + self.ncomp].copy_from_slice(vals);
    }

    #[inline]
    pub fn set_at(&mut self, j: usize, i2: usize, i3: usize, c: usize, v: f64) {
        let k = self.idx(j, i2, i3) + c;
        self.data[k] = v;
    }

    /// Fill from an evaluator of the intrinsic coordinates (x¹, x², x³).
    pub fn fill(&mut self, f: &dyn Fn(f64, f64, f64, &mut [f64])) {
        let g = self.grid.clone();
        let mut buf = vec![0.0; self.ncomp];
        for j in 0..=g.n1 {
            for i2 in 0..=g.n2 {
                for i3 in 0..=g.n3 {
                    f(g.x1(j), g.x2(i2), g.x3(i3), &mut buf);
                    self.set(j, i2, i3, &buf);
                }
            }
        }
    }

    pub fn check_filled(&self) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerics(
                "surface field contains non-finite values".into(),
            ));
        }
        Ok(())
    }

    pub fn sup(&self) -> f64 {
        self.data
            .iter()
            .filter(|v| v.is_finite())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn sup_diff(&self, other: &SurfaceField) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .filter(|d| d.is_finite())
            .fold(0.0_f64, |m, d| m.max(d))
    }

    /// Tangential derivative along an intrinsic axis. The x¹ axis accounts
    /// for the signed station parametrization (x¹ = ±j·h₁).
    pub fn deriv_axis(&self, axis: SAxis) -> SurfaceField {
        self.apply_line_op(axis, false)
    }

    pub fn second_deriv_axis(&self, axis: SAxis) -> SurfaceField {
        self.apply_line_op(axis, true)
    }

    fn apply_line_op(&self, axis: SAxis, second: bool) -> SurfaceField {
        let g = self.grid.clone();
        let mut out = SurfaceField::new(g.clone(), self.ncomp);
        let periodic = g.periodic && axis != SAxis::X1;
        // Station index j increases in the direction of sign·x¹; a first
        // derivative in x¹ therefore carries the surface sign, a second
        // derivative does not.
        let (len, h, sgn) = match axis {
            SAxis::X1 => (
                g.n1 + 1,
                g.h1,
                crate::geometry::surface_sign(g.w),
            ),
            SAxis::X2 => (g.n2 + 1, g.h_trans, 1.0),
            SAxis::X3 => (g.n3 + 1, g.h_trans, 1.0),
        };
        let scale = if second { 1.0 } else { sgn };
        let (outer1, outer2) = match axis {
            SAxis::X1 => (g.n2, g.n3),
            SAxis::X2 => (g.n1, g.n3),
            SAxis::X3 => (g.n1, g.n2),
        };
        for o1 in 0..=outer1 {
            for o2 in 0..=outer2 {
                for c in 0..self.ncomp {
                    let mut get = |i: usize| match axis {
                        SAxis::X1 => self.at(i, o1, o2, c),
                        SAxis::X2 => self.at(o1, i, o2, c),
                        SAxis::X3 => self.at(o1, o2, i, c),
                    };
                    let mut vals = vec![0.0; len];
                    let mut put = |i: usize, v: f64| vals[i] = v;
                    match (periodic, second) {
                        (true, false) => diff1_periodic(len, h, &mut get, &mut put),
                        (true, true) => diff2_periodic(len, h, &mut get, &mut put),
                        (false, false) => diff1_line(len, h, &mut get, &mut put),
                        (false, true) => diff2_line(len, h, &mut get, &mut put),
                    }
                    for (i, v) in vals.iter().enumerate() {
                        let vs = *v * scale;
                        match axis {
                            SAxis::X1 => out.set_at(i, o1, o2, c, vs),
                            SAxis::X2 => out.set_at(o1, i, o2, c, vs),
                            SAxis::X3 => out.set_at(o1, o2, i, c, vs),
                        }
                    }
                }
            }
        }
        out
    }

    pub fn add(&self, other: &SurfaceField) -> SurfaceField {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SurfaceField) -> SurfaceField {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> SurfaceField {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= s;
        }
        out
    }

    fn zip(&self, other: &SurfaceField, f: impl Fn(f64, f64) -> f64) -> SurfaceField {
        assert_eq!(self.ncomp, other.ncomp);
        assert_eq!(self.grid, other.grid);
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(other.data.iter()) {
            *v = f(*v, *w);
        }
        out
    }

    /// Trilinear interpolation at intrinsic coordinates; clamps to the box
    /// unless transverse-periodic, in which case transverse coordinates wrap.
    pub fn value_at(&self, x1: f64, x2: f64, x3: f64, out: &mut [f64]) {
        let g = &self.grid;
        // Station coordinate: j = |x¹|/h₁ along the plane's own sign.
        let s = crate::geometry::surface_sign(g.w) * x1 / g.h1;
        let (j0, tj) = clamp_cell(s, g.n1);
        let (k0, tk) = transverse_cell((x2 - g.b2.0) / g.h_trans, g.n2, g.periodic);
        let (l0, tl) = transverse_cell((x3 - g.b3.0) / g.h_trans, g.n3, g.periodic);
        let j1 = (j0 + 1).min(g.n1);
        let k1 = if g.periodic { wrap_next(k0, g.n2) } else { (k0 + 1).min(g.n2) };
        let l1 = if g.periodic { wrap_next(l0, g.n3) } else { (l0 + 1).min(g.n3) };
        for c in 0..self.ncomp {
            let c000 = self.at(j0, k0, l0, c);
            let c100 = self.at(j1, k0, l0, c);
            let c010 = self.at(j0, k1, l0, c);
            let c110 = self.at(j1, k1, l0, c);
            let c001 = self.at(j0, k0, l1, c);
            let c101 = self.at(j1, k0, l1, c);
            let c011 = self.at(j0, k1, l1, c);
            let c111 = self.at(j1, k1, l1, c);
            let c00 = c000 + (c100 - c000) * tj;
            let c01 = c001 + (c101 - c001) * tj;
            let c10 = c010 + (c110 - c010) * tj;
            let c11 = c011 + (c111 - c011) * tj;
            let c0 = c00 + (c10 - c00) * tk;
            let c1 = c01 + (c11 - c01) * tk;
            out[c] = c0 + (c1 - c0) * tl;
        }
    }
}

fn clamp_cell(s: f64, n: usize) -> (usize, f64) {
    if s <= 0.0 {
        return (0, 0.0);
    }
    let i = s.floor() as usize;
    if i >= n {
        (n.saturating_sub(1), 1.0)
    } else {
        (i, s - i as f64)
    }
}

fn transverse_cell(s: f64, n: usize, periodic: bool) -> (usize, f64) {
    if !periodic {
        return clamp_cell(s, n);
    }
    let m = n as f64;
    let mut r = s % m;
    if r < 0.0 {
        r += m;
    }
    let i = (r.floor() as usize).min(n - 1);
    (i, r - i as f64)
}

fn wrap_next(i: usize, n: usize) -> usize {
    if i + 1 >= n {
        0
    } else {
        i + 1
    }
}
