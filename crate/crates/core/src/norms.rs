//! Weighted Sobolev-type norms on null surfaces, slices, and the wedge.
//!
//! The families, for a vector field v:
//! * slice norm H^p(Σ_τ^w): transverse 2D integral at a fixed station of S^w,
//!   summing squared spatial derivatives ∂^α, α ∈ ℕ³, |α| ≤ p;
//! * H^p(S_t^w): 3D integral over the surface up to x⁰ = t; E^p(S_t^w): max
//!   of the slice norms over stations τ ∈ {h, 2h, …, t};
//! * H^p(G_τ): 3D integral over the wedge slice x⁰ = τ of squared Cartesian
//!   derivatives D^α, α ∈ ℕ⁴; K^p(𝒴_t): τ-weighted L² of the slice profile,
//!   ∫τ^{−1}H^p(G_τ)²dτ; E^p(𝒴_t): sup of τ^{−1/2}H^p(G_τ);
//! * script 𝒦/𝓔 families: sums of the above over time derivatives ∂₀^k v
//!   with order 2(p−k)−1, k from 0 (plain) or 1 (the "₁" variants), plus the
//!   combined wedge norms, exact root-sum-squares with K^p/E^p.
//!
//! The τ^{−1} quadrature starts at τ₁ = h; the omitted ]0, h[ segment is
//! recorded as a truncation note. For fields vanishing on Γ at the rate these
//! spaces encode the integrand is bounded and the truncation is O(h); for
//! generic fields the value is a truncated norm, reported as such.

use crate::error::{Error, Result};
use crate::field::{SAxis, SurfaceField, WedgeField};
use std::collections::BTreeMap;

/// Named norm values plus the quadrature bookkeeping.
#[derive(Debug, Clone, Default)]
pub struct NormReport {
    pub values: BTreeMap<String, f64>,
    pub p: usize,
    pub h_null: f64,
    pub h_trans: f64,
    /// Which τ-slices entered quadratures, and any truncations.
    pub notes: Vec<String>,
}

impl NormReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

fn multi3(p: usize) -> Vec<[usize; 3]> {
    let mut v = Vec::new();
    for a in 0..=p {
        for b in 0..=(p - a) {
            for c in 0..=(p - a - b) {
                v.push([a, b, c]);
            }
        }
    }
    v
}

fn multi4(p: usize) -> Vec<[usize; 4]> {
    let mut v = Vec::new();
    for a in 0..=p {
        for b in 0..=(p - a) {
            for c in 0..=(p - a - b) {
                for d in 0..=(p - a - b - c) {
                    v.push([a, b, c, d]);
                }
            }
        }
    }
    v
}

fn surface_deriv_multi(v: &SurfaceField, alpha: [usize; 3]) -> SurfaceField {
    let axes = [SAxis::X1, SAxis::X2, SAxis::X3];
    let mut f = v.clone();
    for (i, &axis) in axes.iter().enumerate() {
        let mut k = alpha[i];
        while k >= 2 {
            f = f.second_deriv_axis(axis);
            k -= 2;
        }
        if k == 1 {
            f = f.deriv_axis(axis);
        }
    }
    f
}

/// All ∂^α v for |α| ≤ p on the surface lattice.
fn surface_derivs(v: &SurfaceField, p: usize) -> Vec<SurfaceField> {
    multi3(p)
        .into_iter()
        .map(|a| surface_deriv_multi(v, a))
        .collect()
}

fn wedge_derivs(v: &WedgeField, p: usize) -> Vec<WedgeField> {
    multi4(p).into_iter().map(|a| v.deriv_multi(a)).collect()
}

fn line_weights(n_nodes: usize, h: f64) -> Vec<f64> {
    crate::field::trapezoid_weights(n_nodes, h)
}

fn check_extent(v_len: usize, p: usize, what: &str) -> Result<()> {
    if p >= 1 && v_len < 4 {
        return Err(Error::Data(format!(
            "{what} has {v_len} stations, too short for order-{p} derivative stencils"
        )));
    }
    Ok(())
}

/// Station index of x⁰ = t on the surface lattice (spacing h/2), or an error
/// when t is off-grid or beyond the extent.
fn surface_station(v: &SurfaceField, t: f64) -> Result<usize> {
    let h1 = v.grid.h1;
    let j = (t / h1).round() as isize;
    if j < 0 || (t - j as f64 * h1).abs() > 1e-9 * (1.0 + t.abs()) {
        return Err(Error::Data(format!("slice parameter t = {t} is off-grid")));
    }
    let j = j as usize;
    if j > v.grid.n1 {
        return Err(Error::Data(format!(
            "slice parameter t = {t} exceeds the surface extent {}",
            v.grid.n1 as f64 * h1
        )));
    }
    Ok(j)
}

fn slice_norm_precomputed(derivs: &[SurfaceField], j: usize) -> f64 {
    let g = &derivs[0].grid;
    let w2 = line_weights(g.n2 + 1, g.h_trans);
    let w3 = line_weights(g.n3 + 1, g.h_trans);
    let mut sum = 0.0;
    for i2 in 0..=g.n2 {
        for i3 in 0..=g.n3 {
            let wt = w2[i2] * w3[i3];
            let mut node = 0.0;
            for d in derivs {
                for c in 0..d.ncomp {
                    let v = d.at(j, i2, i3, c);
                    node += v * v;
                }
            }
            sum += wt * node;
        }
    }
    sum.sqrt()
}

/// ‖v‖_{H^p(Σ_t^w)}: transverse integral of squared spatial derivatives at
/// the station x⁰ = t of the surface carrying v.
pub fn slice_norm(v: &SurfaceField, p: usize, t: f64) -> Result<f64> {
    check_extent(v.grid.n1 + 1, p, "null surface")?;
    check_extent(v.grid.n2 + 1, p, "transverse grid (x2)")?;
    check_extent(v.grid.n3 + 1, p, "transverse grid (x3)")?;
    let j = surface_station(v, t)?;
    let derivs = surface_derivs(v, p);
    Ok(slice_norm_precomputed(&derivs, j))
}

#[derive(Debug, Clone)]
pub struct SurfaceNorms {
    /// ‖v‖_{H^p(S_t^w)}.
    pub h: f64,
    /// ‖v‖_{E^p(S_t^w)} = max over stations τ ∈ {h, 2h, …, t}.
    pub e: f64,
    /// (τ, slice norm) pairs entering E.
    pub slices: Vec<(f64, f64)>,
}

/// H^p and E^p over the surface region x⁰ ≤ t.
pub fn null_surface_norms(v: &SurfaceField, p: usize, t: f64) -> Result<SurfaceNorms> {
    check_extent(v.grid.n1 + 1, p, "null surface")?;
    check_extent(v.grid.n2 + 1, p, "transverse grid (x2)")?;
    check_extent(v.grid.n3 + 1, p, "transverse grid (x3)")?;
    let jt = surface_station(v, t)?;
    let derivs = surface_derivs(v, p);
    let g = &v.grid;
    let w1 = line_weights(jt + 1, g.h1);
    let w2 = line_weights(g.n2 + 1, g.h_trans);
    let w3 = line_weights(g.n3 + 1, g.h_trans);
    let mut sum = 0.0;
    for j in 0..=jt {
        for i2 in 0..=g.n2 {
            for i3 in 0..=g.n3 {
                let wt = w1[j] * w2[i2] * w3[i3];
                let mut node = 0.0;
                for d in &derivs {
                    for c in 0..d.ncomp {
                        let val = d.at(j, i2, i3, c);
                        node += val * val;
                    }
                }
                sum += wt * node;
            }
        }
    }
    // E stations stride h = 2·h1.
    let mut slices = Vec::new();
    let mut e: f64 = 0.0;
    let mut j = 2;
    while j <= jt {
        let tau = j as f64 * g.h1;
        let s = slice_norm_precomputed(&derivs, j);
        e = e.max(s);
        slices.push((tau, s));
        j += 2;
    }
    Ok(SurfaceNorms { h: sum.sqrt(), e, slices })
}

#[derive(Debug, Clone)]
pub struct WedgeNorms {
    /// (τ, H^p(G_τ)) at the stations τ ∈ {h, 2h, …, t}.
    pub profile: Vec<(f64, f64)>,
    /// K^p(𝒴_t): τ-trapezoid of τ^{−1}H² over [h, t].
    pub k: f64,
    /// E^p(𝒴_t): max of τ^{−1/2}H over the stations.
    pub e: f64,
    pub notes: Vec<String>,
}

fn wedge_slice_norm(derivs: &[WedgeField], s: usize) -> f64 {
    let g = &derivs[0].grid;
    let w2 = line_weights(g.n2 + 1, g.ht());
    let w3 = line_weights(g.n3 + 1, g.ht());
    let mut sum = 0.0;
    for (ia0, ia1) in g.slice_runs(s) {
        let run = line_weights(ia1 - ia0 + 1, g.h());
        for ia in ia0..=ia1 {
            let ib = s - ia;
            let wrun = run[ia - ia0];
            for i2 in 0..=g.n2 {
                for i3 in 0..=g.n3 {
                    let wt = wrun * w2[i2] * w3[i3];
                    let mut node = 0.0;
                    for d in derivs {
                        for c in 0..d.ncomp {
                            let v = d.at(ia, ib, i2, i3, c);
                            if v.is_finite() {
                                node += v * v;
                            }
                        }
                    }
                    sum += wt * node;
                }
            }
        }
    }
    sum.sqrt()
}

/// Slice profile H^p(G_τ), K^p(𝒴_t) and E^p(𝒴_t) for a wedge field.
pub fn wedge_norms(v: &WedgeField, p: usize, t: f64) -> Result<WedgeNorms> {
    let g = &v.grid;
    check_extent(g.n2 + 1, p, "transverse grid (x2)")?;
    check_extent(g.n3 + 1, p, "transverse grid (x3)")?;
    let h = g.h();
    let kmax = (t / h).round() as isize;
    if kmax < 1 || (t - kmax as f64 * h).abs() > 1e-9 * (1.0 + t.abs()) {
        return Err(Error::Data(format!(
            "wedge norm horizon t = {t} is off the τ-station grid (h = {h})"
        )));
    }
    let kmax = kmax as usize;
    if 2 * kmax > g.n_diag {
        return Err(Error::Data(format!(
            "wedge norm horizon t = {t} exceeds the grid extent"
        )));
    }
    let derivs = wedge_derivs(v, p);
    let mut profile = Vec::with_capacity(kmax);
    let mut e: f64 = 0.0;
    for k in 1..=kmax {
        let tau = k as f64 * h;
        let hs = wedge_slice_norm(&derivs, 2 * k);
        e = e.max(hs / tau.sqrt());
        profile.push((tau, hs));
    }
    // Trapezoid of τ^{−1}H² over [h, t]; ]0, h[ omitted.
    let wts = line_weights(kmax, h);
    let mut ksq = 0.0;
    for (k, &(tau, hs)) in profile.iter().enumerate() {
        ksq += wts[k] * hs * hs / tau;
    }
    let notes = vec![format!(
        "K-quadrature over tau in [{h}, {t}] at {kmax} stations; ]0, {h}[ omitted"
    )];
    Ok(WedgeNorms {
        profile,
        k: ksq.sqrt(),
        e,
        notes,
    })
}

/// Script-norm report: the Γ- and surface-indexed sums over time derivatives
/// plus the combined wedge norms.
#[derive(Debug, Clone)]
pub struct ScriptNorms {
    pub start_k: usize,
    /// 𝒦^p(Γ, S^w, 𝒴), indexed by w−1.
    pub gamma: [f64; 2],
    /// 𝒦^p(S_t^w, 𝒴).
    pub k_surface: [f64; 2],
    /// 𝓔^p(S_t^w, 𝒴).
    pub e_surface: [f64; 2],
    /// K^p(𝒴_t), E^p(𝒴_t) of the field itself.
    pub k_wedge: f64,
    pub e_wedge: f64,
    /// 𝒦^p(𝒴_t), 𝓔^p(𝒴_t): root-sum-squares of the above.
    pub combined_k: f64,
    pub combined_e: f64,
    pub report: NormReport,
}

/// Computes the 𝒦/𝓔 families with k running from `start_k` (0 for the plain
/// norms, 1 for the "₁" variants). p = 0 yields empty sums: all zeros and a
/// warning note.
pub fn script_norms(
    v: &WedgeField,
    p: usize,
    t: f64,
    start_k: usize,
) -> Result<ScriptNorms> {
    let mut report = NormReport {
        p,
        h_null: v.grid.h(),
        h_trans: v.grid.ht(),
        ..NormReport::default()
    };
    let sub = if start_k == 0 { "" } else { "1" };
    if p == 0 {
        report
            .notes
            .push("p = 0: script norms are empty sums, all values 0".into());
        let wn = wedge_norms(v, 0, t)?;
        report.values.insert("K(Y_t)".into(), wn.k);
        report.values.insert("E(Y_t)".into(), wn.e);
        for w in [1u8, 2u8] {
            report.values.insert(format!("scriptK{sub}(Gamma,S{w})"), 0.0);
            report.values.insert(format!("scriptK{sub}(S{w}_t)"), 0.0);
            report.values.insert(format!("scriptE{sub}(S{w}_t)"), 0.0);
        }
        let ck = (wn.k * wn.k).sqrt();
        let ce = (wn.e * wn.e).sqrt();
        report.values.insert(format!("scriptK{sub}(Y_t)"), ck);
        report.values.insert(format!("scriptE{sub}(Y_t)"), ce);
        return Ok(ScriptNorms {
            start_k,
            gamma: [0.0; 2],
            k_surface: [0.0; 2],
            e_surface: [0.0; 2],
            k_wedge: wn.k,
            e_wedge: wn.e,
            combined_k: ck,
            combined_e: ce,
            report,
        });
    }
    // ∂₀^k v on the wedge, restricted per surface.
    let mut gamma_sq = [0.0_f64; 2];
    let mut ks_sq = [0.0_f64; 2];
    let mut es_sq = [0.0_f64; 2];
    let mut dt = v.clone();
    for k in 0..=(p - 1) {
        if k > 0 {
            dt = dt.deriv_cart(0);
        }
        if k < start_k {
            continue;
        }
        let q = 2 * (p - k) - 1;
        for w in [1u8, 2u8] {
            let r = dt.restrict(w)?;
            let g = slice_norm(&r, q, 0.0)?;
            gamma_sq[(w - 1) as usize] += g * g;
            let sn = null_surface_norms(&r, q, t)?;
            ks_sq[(w - 1) as usize] += sn.h * sn.h;
            es_sq[(w - 1) as usize] += sn.e * sn.e;
        }
    }
    let wn = wedge_norms(v, p, t)?;
    report.notes.extend(wn.notes.iter().cloned());
    let gamma = [gamma_sq[0].sqrt(), gamma_sq[1].sqrt()];
    let k_surface = [ks_sq[0].sqrt(), ks_sq[1].sqrt()];
    let e_surface = [es_sq[0].sqrt(), es_sq[1].sqrt()];
    // Combined norms: fixed summation order wedge + S¹ + S², so the
    // sum-of-squares identity is reproducible bit for bit.
    let combined_k =
        (wn.k.powi(2) + k_surface[0].powi(2) + k_surface[1].powi(2)).sqrt();
    let combined_e =
        (wn.e.powi(2) + e_surface[0].powi(2) + e_surface[1].powi(2)).sqrt();
    report.values.insert("K(Y_t)".into(), wn.k);
    report.values.insert("E(Y_t)".into(), wn.e);
    for w in [1usize, 2usize] {
        report
            .values
            .insert(format!("scriptK{sub}(Gamma,S{w})"), gamma[w - 1]);
        report
            .values
            .insert(format!("scriptK{sub}(S{w}_t)"), k_surface[w - 1]);
        report
            .values
            .insert(format!("scriptE{sub}(S{w}_t)"), e_surface[w - 1]);
    }
    report.values.insert(format!("scriptK{sub}(Y_t)"), combined_k);
    report.values.insert(format!("scriptE{sub}(Y_t)"), combined_e);
    Ok(ScriptNorms {
        start_k,
        gamma,
        k_surface,
        e_surface,
        k_wedge: wn.k,
        e_wedge: wn.e,
        combined_k,
        combined_e,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{WedgeGrid, WedgeSpec, W1};
    use std::sync::Arc;

    fn wedge(h: f64) -> Arc<WedgeGrid> {
        Arc::new(WedgeGrid::build(&WedgeSpec::new(0.5, 1.0, h, 0.125)).unwrap())
    }

    fn surface(h: f64) -> SurfaceField {
        let mut v = WedgeField::new(wedge(h), 1);
        v.fill_scalar(&|_| 1.0);
        v.restrict(W1).unwrap()
    }

    #[test]
    fn slice_norm_constant_and_coordinate() {
        let mut v = surface(0.125);
        assert!((slice_norm(&v, 0, 0.25).unwrap() - 1.0).abs() < 1e-12);
        // All derivatives of a constant vanish: p = 3 gives the same value.
        assert!((slice_norm(&v, 3, 0.25).unwrap() - 1.0).abs() < 1e-12);
        // v = x²: ∫₀¹ (x²)² dx² = 1/3, trapezoid error O(h²).
        v.fill(&|_x1, x2, _x3, out| out[0] = x2);
        let got = slice_norm(&v, 0, 0.25).unwrap();
        let h = 0.125;
        assert!(
            (got - (1.0f64 / 3.0).sqrt()).abs() < h * h,
            "got {got}"
        );
    }

    #[test]
    fn surface_norms_constant_and_support() {
        let v = surface(0.0625);
        let t = 0.25;
        let n = null_surface_norms(&v, 0, t).unwrap();
        assert!((n.h - t.sqrt()).abs() < 1e-12, "H = {}", n.h);
        assert!((n.e - 1.0).abs() < 1e-12);
        // Support in τ > t/2: E sees only the supported slices.
        let mut w = surface(0.0625);
        w.fill(&|x1, _x2, _x3, out| out[0] = if x1.abs() > t / 2.0 { 2.0 } else { 0.0 });
        let n = null_surface_norms(&w, 0, t).unwrap();
        assert!((n.e - 2.0).abs() < 1e-12);
    }

    #[test]
    fn wedge_norms_constant_closed_forms() {
        let g = wedge(0.0625);
        let mut v = WedgeField::new(g, 1);
        let c = 3.0;
        v.fill_scalar(&|_| c);
        let t = 0.5;
        let h = 0.0625;
        let area = 1.0;
        let wn = wedge_norms(&v, 0, t).unwrap();
        // K truncates ]0, h[: exact value c√(2·area·(t−h)).
        let k_exact = c * (2.0 * area * (t - h)).sqrt();
        assert!((wn.k - k_exact).abs() < 1e-10, "K = {}, want {}", wn.k, k_exact);
        assert!((wn.k - c * (2.0 * area * t).sqrt()).abs() < c * 2.0 * h);
        let e_exact = c * (2.0 * area).sqrt();
        assert!((wn.e - e_exact).abs() < 1e-10);
        for &(tau, hs) in &wn.profile {
            assert!((hs - c * (2.0 * tau * area).sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn script_norms_sum_of_squares_is_exact() {
        let g = wedge(0.125);
        let mut v = WedgeField::new(g, 1);
        v.fill_scalar(&|x| (x[0] + 0.3 * x[1]).sin() + 0.2 * x[2]);
        let s = script_norms(&v, 2, 0.5, 0).unwrap();
        let lhs = s.combined_k.powi(2);
        let rhs = s.k_wedge.powi(2) + s.k_surface[0].powi(2) + s.k_surface[1].powi(2);
        assert_eq!(lhs.sqrt(), rhs.sqrt());
        let lhs = s.combined_e.powi(2);
        let rhs = s.e_wedge.powi(2) + s.e_surface[0].powi(2) + s.e_surface[1].powi(2);
        assert_eq!(lhs.sqrt(), rhs.sqrt());
        // start_k = 1 drops the k = 0 terms, so the surface parts shrink.
        let s1 = script_norms(&v, 2, 0.5, 1).unwrap();
        assert!(s1.k_surface[0] <= s.k_surface[0]);
        assert_eq!(s1.k_wedge, s.k_wedge);
    }

    #[test]
    fn script_norms_p1_single_term_and_p0_warning() {
        let g = wedge(0.125);
        let mut v = WedgeField::new(g, 1);
        v.fill_scalar(&|x| x[1] + 2.0 * x[2]);
        let s = script_norms(&v, 1, 0.5, 0).unwrap();
        // p = 1: single k = 0 term of order 1.
        let r = v.restrict(1).unwrap();
        let n = null_surface_norms(&r, 1, 0.5).unwrap();
        assert!((s.k_surface[0] - n.h).abs() < 1e-12);
        let s1 = script_norms(&v, 1, 0.5, 1).unwrap();
        assert_eq!(s1.k_surface, [0.0, 0.0]);
        let s0 = script_norms(&v, 0, 0.5, 0).unwrap();
        assert_eq!(s0.combined_k, s0.k_wedge);
        assert!(!s0.report.notes.is_empty());
    }

    #[test]
    fn norms_are_homogeneous_and_monotone() {
        let g = wedge(0.125);
        let mut v = WedgeField::new(g.clone(), 1);
        v.fill_scalar(&|x| (x[0] - 0.4 * x[3]).cos());
        let v5 = v.scale(-5.0);
        let w0 = wedge_norms(&v, 2, 0.5).unwrap();
        let w5 = wedge_norms(&v5, 2, 0.5).unwrap();
        assert!((w5.k - 5.0 * w0.k).abs() <= 1e-12 * w5.k.max(1.0));
        assert!((w5.e - 5.0 * w0.e).abs() <= 1e-12 * w5.e.max(1.0));
        // Monotone in p and in t.
        let w3 = wedge_norms(&v, 3, 0.5).unwrap();
        assert!(w3.k >= w0.k);
        let wt = wedge_norms(&v, 2, 0.375).unwrap();
        assert!(wt.k <= w0.k);
        let r = v.restrict(2).unwrap();
        let a = null_surface_norms(&r, 1, 0.25).unwrap();
        let b = null_surface_norms(&r, 2, 0.25).unwrap();
        assert!(b.h >= a.h);
    }

    #[test]
    fn off_grid_and_short_grid_errors() {
        let v = surface(0.125);
        assert!(slice_norm(&v, 0, 0.23).is_err());
        assert!(slice_norm(&v, 0, 9.0).is_err());
        let tiny = Arc::new(WedgeGrid::build(&WedgeSpec::new(0.5, 1.0, 0.125, 0.5)).unwrap());
        let mut v = WedgeField::new(tiny, 1);
        v.fill_scalar(&|_| 1.0);
        // Two transverse stations cannot carry order-1 stencils.
        let r = v.restrict(W1).unwrap();
        assert!(slice_norm(&r, 1, 0.25).is_err());
        assert!(slice_norm(&r, 0, 0.25).is_ok());
    }
}
