//! Flat-background cone-integral representation of the Goursat solution and
//! the Picard iteration built on it.
//!
//! For the flat operator □u = −f, the value at an interior apex M₀ is
//! recovered from the backward light cone C⁻(M₀): the cone meets the data
//! surfaces S¹ ∪ S² along a closed curve, and
//!
//!   4π u(M₀) = ∮ 𝓙 dω + ∮ dω ∫₀^ψ λ₁ (−f) dλ₁,   dω = sin λ₂ dλ₂ dλ₃,
//!
//! where ψ(λ₂, λ₃) is the parameter at which the ray with direction
//! p = (sin λ₂ cos λ₃, sin λ₂ sin λ₃, cos λ₂) first reaches a data surface,
//! and 𝓙 is a boundary functional of the data and its first derivatives
//! evaluated at the hit,
//!
//!   𝓙 = u + ψ (∂₀u + p·∇u) − Σ_h m^{hh} (∂_{λ_h}p·∇u) ∂_{λ_h}ψ,
//!
//! with the round metric factors m²² = 1, m³³ = 1/sin²λ₂. The retarded volume
//! kernel λ₁ is the flat reduction of the general cone kernel. Both pieces are
//! validated against the marching solver rather than asserted: on linear
//! problems the two constructive routes must agree.
//!
//! The transport of the auxiliary matrix Ω along bicharacteristics is kept as
//! a generic linear ODE integrator so that non-flat coefficient matrices can
//! be plugged in later; in the flat specialization H ≡ 0 and Ω stays at its
//! initial value, which is why the cone formulas above close without it.
//!
//! [`picard_iterate`] drives [`kirchhoff_apply`] as a fixed-point map from the
//! additive data extension, recording sup-distances, contraction ratios, and
//! the deviation-ball check; divergence is reported as data, not as an error.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{SAxis, SurfaceField, WedgeField};
use crate::geometry::{
    in_causal_domain, restriction_sign, surface_sign, CausalBounds, WedgeGrid, W1, W2,
};
use crate::system::GoursatData;
use crate::tol;

/// One backward ray of the cone C⁻(M₀): apex, angles, spatial direction,
/// and the hit parameter ψ at which it reaches a data surface.
#[derive(Debug, Clone, Copy)]
pub struct ConeRay {
    pub apex: [f64; 4],
    pub lam2: f64,
    pub lam3: f64,
    /// Unit spatial direction (p₁, p₂, p₃).
    pub p: [f64; 3],
    /// First surface-hit parameter; the hit point is `point(psi)`.
    pub psi: f64,
    /// Which plane is hit (1 or 2).
    pub surface: u8,
    /// Apex already on a data surface: ψ = 0 and the cone is degenerate.
    pub boundary: bool,
}

impl ConeRay {
    /// Spatial direction for the given angles.
    pub fn direction(lam2: f64, lam3: f64) -> [f64; 3] {
        [
            lam2.sin() * lam3.cos(),
            lam2.sin() * lam3.sin(),
            lam2.cos(),
        ]
    }

    /// Ambient point at parameter λ₁ (time decreases at unit rate).
    pub fn point(&self, lam1: f64) -> [f64; 4] {
        [
            self.apex[0] - lam1,
            self.apex[1] + lam1 * self.p[0],
            self.apex[2] + lam1 * self.p[1],
            self.apex[3] + lam1 * self.p[2],
        ]
    }

    pub fn hit_point(&self) -> [f64; 4] {
        self.point(self.psi)
    }

    /// |x⁰ − s_w x¹| at the hit; zero when the hit equation is satisfied.
    pub fn hit_residual(&self) -> f64 {
        let x = self.hit_point();
        (x[0] - surface_sign(self.surface) * x[1]).abs()
    }
}

/// First intersection of the backward ray from `apex` with S¹ ∪ S².
///
/// Solved in closed form per plane: the hit equation x⁰ = s_w x¹ gives
/// ψ_w = (x⁰₀ − s_w x¹₀)/(1 + s_w q) with q = p₁, valid when the hit lands on
/// the physical half-plane (s_w x¹ ≥ 0); the smaller valid candidate is the
/// first crossing. An apex on a surface returns ψ = 0 flagged as boundary; an
/// apex below both planes is rejected.
pub fn psi_hit(apex: [f64; 4], lam2: f64, lam3: f64) -> Result<ConeRay> {
    let depth = apex[0] - apex[1].abs();
    if depth < 0.0 {
        return Err(Error::Data(format!(
            "cone apex (x⁰ = {:.6}, x¹ = {:.6}) lies outside the wedge closure",
            apex[0], apex[1]
        )));
    }
    let p = ConeRay::direction(lam2, lam3);
    let q = p[0];
    if depth == 0.0 {
        let surface = if apex[1] >= 0.0 { W1 } else { W2 };
        return Ok(ConeRay {
            apex,
            lam2,
            lam3,
            p,
            psi: 0.0,
            surface,
            boundary: true,
        });
    }
    let mut best: Option<(f64, u8)> = None;
    for w in [W1, W2] {
        let s = surface_sign(w);
        let den = 1.0 + s * q;
        if den <= 0.0 {
            continue;
        }
        let cand = (apex[0] - s * apex[1]) / den;
        // Sign consistency: the hit must satisfy s·x¹ ≥ 0, equivalently
        // x⁰ ≥ 0, i.e. ψ ≤ x⁰₀; the other plane catches the rest.
        if s * (apex[1] + cand * q) < -1e-12 {
            continue;
        }
        if best.map_or(true, |(b, _)| cand < b) {
            best = Some((cand, w));
        }
    }
    let (psi, surface) = best.ok_or_else(|| {
        Error::Numerics(format!(
            "no surface hit for the ray from ({:.4}, {:.4}, {:.4}, {:.4}) \
             at λ₂ = {lam2:.4}, λ₃ = {lam3:.4}",
            apex[0], apex[1], apex[2], apex[3]
        ))
    })?;
    Ok(ConeRay {
        apex,
        lam2,
        lam3,
        p,
        psi,
        surface,
        boundary: false,
    })
}

/// Independent root solve of the hit equation by bisection on
/// g(λ) = (x⁰₀ − λ) − |x¹₀ + λq|, which is concave with g(0) ≥ 0 and a unique
/// sign change. Used to cross-check the closed form.
pub fn psi_bisect(apex: [f64; 4], lam2: f64, lam3: f64) -> Result<f64> {
    let depth = apex[0] - apex[1].abs();
    if depth < 0.0 {
        return Err(Error::Data(format!(
            "cone apex (x⁰ = {:.6}, x¹ = {:.6}) lies outside the wedge closure",
            apex[0], apex[1]
        )));
    }
    let q = ConeRay::direction(lam2, lam3)[0];
    let g = |lam: f64| (apex[0] - lam) - (apex[1] + lam * q).abs();
    let mut lo = 0.0;
    // The steeper branch has slope ≤ −1 and intercept ≤ x⁰₀ + |x¹₀|, so g is
    // negative here.
    let mut hi = apex[0] + apex[1].abs() + 1.0;
    while hi - lo > tol::ROOT {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Ω profile snapshot along a ray.
#[derive(Debug, Clone)]
pub struct OmegaState {
    pub lam1: f64,
    pub omega: DMatrix<f64>,
}

impl OmegaState {
    /// Ω̂ = (Ω − Ω₀)/λ₁ away from the apex; callers use
    /// [`omega_hat_profile`] for the λ₁ → 0 limit.
    pub fn hat(&self, omega0: &DMatrix<f64>) -> DMatrix<f64> {
        (&self.omega - omega0) / self.lam1
    }
}

/// Initial transport state: identity block over zeros, the matrix form of
/// (δ, 0, 0).
pub fn omega_initial(rows: usize, cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows.min(cols) {
        m[(i, i)] = 1.0;
    }
    m
}

/// Integrates the linear transport Ω' = H(λ₁)Ω from Ω₀ over λ₁ ∈ [0, ψ] with
/// a classical 4-stage step; the profile has `steps + 1` states. An evaluator
/// failure aborts the ray with its position attached.
pub fn transport_omega(
    h_eval: &dyn Fn(f64) -> Result<DMatrix<f64>>,
    ray: &ConeRay,
    steps: usize,
    omega0: &DMatrix<f64>,
) -> Result<Vec<OmegaState>> {
    if steps == 0 {
        return Err(Error::Config(
            "Ω transport needs at least one integration step".into(),
        ));
    }
    let mut states = Vec::with_capacity(steps + 1);
    states.push(OmegaState {
        lam1: 0.0,
        omega: omega0.clone(),
    });
    if ray.psi == 0.0 {
        return Ok(states);
    }
    let at = |lam: f64| -> Result<DMatrix<f64>> {
        let h = h_eval(lam).map_err(|e| annotate_ray_abort(e, lam, ray))?;
        if h.nrows() != h.ncols() || h.ncols() != omega0.nrows() {
            return Err(Error::Config(format!(
                "transport matrix is {}×{} but Ω has {} rows",
                h.nrows(),
                h.ncols(),
                omega0.nrows()
            )));
        }
        Ok(h)
    };
    let dt = ray.psi / steps as f64;
    let mut om = omega0.clone();
    for k in 0..steps {
        let lam = k as f64 * dt;
        let h1 = at(lam)?;
        let h2 = at(lam + 0.5 * dt)?;
        let h4 = at(lam + dt)?;
        let k1 = &h1 * &om;
        let y2 = &om + &k1 * (0.5 * dt);
        let k2 = &h2 * &y2;
        let y3 = &om + &k2 * (0.5 * dt);
        let k3 = &h2 * &y3;
        let y4 = &om + &k3 * dt;
        let k4 = &h4 * &y4;
        om += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        let lam1 = if k + 1 == steps {
            ray.psi
        } else {
            (k + 1) as f64 * dt
        };
        states.push(OmegaState {
            lam1,
            omega: om.clone(),
        });
    }
    Ok(states)
}

/// Ω̂ along the profile; the λ₁ = 0 entry uses the forward difference at the
/// first positive node as the one-sided limit.
pub fn omega_hat_profile(profile: &[OmegaState], omega0: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    profile
        .iter()
        .map(|st| {
            if st.lam1 > 0.0 {
                st.hat(omega0)
            } else if let Some(next) = profile.iter().find(|s| s.lam1 > 0.0) {
                next.hat(omega0)
            } else {
                DMatrix::zeros(omega0.nrows(), omega0.ncols())
            }
        })
        .collect()
}

fn annotate_ray_abort(e: Error, lam: f64, ray: &ConeRay) -> Error {
    let msg = format!(
        "ray from apex ({:.4}, {:.4}, {:.4}, {:.4}) aborted at λ₁ = {lam:.6}: {e}",
        ray.apex[0], ray.apex[1], ray.apex[2], ray.apex[3]
    );
    match e {
        Error::Config(_) => Error::Config(msg),
        Error::Data(_) => Error::Data(msg),
        Error::Divergence(_) => Error::Divergence(msg),
        Error::DomainCoverage(_) => Error::DomainCoverage(msg),
        Error::Numerics(_) => Error::Numerics(msg),
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1], by Newton refinement of the
/// three-term recurrence; nodes ascend and weights sum to 2.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (z, 1.0);
            for j in 1..n {
                let p2 = p1;
                p1 = p0;
                p0 = (((2 * j + 1) as f64) * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() <= 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Node counts of the cone quadrature: Gauss–Legendre in the polar angle λ₂
/// and along the ray in λ₁, uniform (trapezoid on a period) in the azimuth λ₃.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConeQuadrature {
    pub n_polar: usize,
    pub n_azimuth: usize,
    pub n_radial: usize,
}

impl Default for ConeQuadrature {
    fn default() -> Self {
        ConeQuadrature {
            n_polar: 32,
            n_azimuth: 64,
            n_radial: 8,
        }
    }
}

/// Scalar semilinear right-hand side f(x, u, ∂u) for the volume kernel.
/// When `uses_gradient` is false the gradient slabs of the iterate are not
/// built and f receives zeros.
pub struct SemilinearSource<'a> {
    pub f: &'a (dyn Fn([f64; 4], f64, [f64; 4]) -> f64 + Sync),
    pub uses_gradient: bool,
}

fn zero_f(_x: [f64; 4], _u: f64, _du: [f64; 4]) -> f64 {
    0.0
}

/// The homogeneous right-hand side f ≡ 0.
pub fn zero_source() -> SemilinearSource<'static> {
    SemilinearSource {
        f: &zero_f,
        uses_gradient: false,
    }
}

/// One angular quadrature sample: direction, its angle derivatives, the
/// azimuthal metric factor, and the combined weight w₂ w₃ sin λ₂.
struct AngularSample {
    p: [f64; 3],
    dp2: [f64; 3],
    dp3: [f64; 3],
    inv_sin2: f64,
    weight: f64,
}

fn angular_samples(quad: &ConeQuadrature) -> Vec<AngularSample> {
    let (x2, w2) = gauss_legendre(quad.n_polar);
    let mut samples = Vec::with_capacity(quad.n_polar * quad.n_azimuth);
    let w3 = TAU / quad.n_azimuth as f64;
    for (xi, wi) in x2.iter().zip(w2.iter()) {
        let lam2 = 0.5 * PI * (xi + 1.0);
        let (s2, c2) = lam2.sin_cos();
        for j in 0..quad.n_azimuth {
            let lam3 = TAU * j as f64 / quad.n_azimuth as f64;
            let (s3, c3) = lam3.sin_cos();
            samples.push(AngularSample {
                p: [s2 * c3, s2 * s3, c2],
                dp2: [c2 * c3, c2 * s3, -s2],
                dp3: [-s2 * s3, s2 * c3, 0.0],
                inv_sin2: 1.0 / (s2 * s2),
                weight: wi * 0.5 * PI * w3 * s2,
            });
        }
    }
    samples
}

/// Data-surface fields bundled with their tangential lattice derivatives.
struct SurfaceBundle<'a> {
    phi: &'a SurfaceField,
    k: &'a SurfaceField,
    d1: SurfaceField,
    d2: SurfaceField,
    d3: SurfaceField,
}

impl<'a> SurfaceBundle<'a> {
    fn build(data: &'a GoursatData, w: u8) -> Result<SurfaceBundle<'a>> {
        let phi = data.phi(w);
        let k = data.k[(w - 1) as usize].as_ref().ok_or_else(|| {
            Error::Data(format!(
                "transversal derivative K missing on S^{w}; supply it with the data \
                 or run the constraint transport first"
            ))
        })?;
        if k.grid != phi.grid || k.ncomp != phi.ncomp {
            return Err(Error::Config(format!(
                "K on S^{w} does not live on the data lattice"
            )));
        }
        Ok(SurfaceBundle {
            phi,
            k,
            d1: phi.deriv_axis(SAxis::X1),
            d2: phi.deriv_axis(SAxis::X2),
            d3: phi.deriv_axis(SAxis::X3),
        })
    }

    /// (u, ∂₀u, spatial gradient) at a surface point, by interpolation of the
    /// data, K, and the tangential derivatives; ∂₁u recombines the tangential
    /// slope with K through the restriction identity.
    fn sample(&self, x: [f64; 4]) -> (f64, f64, [f64; 3]) {
        let w = self.phi.grid.w;
        let mut b = [0.0];
        self.phi.value_at(x[1], x[2], x[3], &mut b);
        let uu = b[0];
        self.k.value_at(x[1], x[2], x[3], &mut b);
        let kk = b[0];
        self.d1.value_at(x[1], x[2], x[3], &mut b);
        let d1v = b[0];
        self.d2.value_at(x[1], x[2], x[3], &mut b);
        let d2v = b[0];
        self.d3.value_at(x[1], x[2], x[3], &mut b);
        let d3v = b[0];
        (uu, kk, [d1v + restriction_sign(w) * kk, d2v, d3v])
    }
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// One application of the cone-integral map Θ: boundary functional of the
/// Goursat data plus the retarded volume potential of −f evaluated on the
/// current iterate, at every interior lattice apex. Surface nodes of the
/// output are copied from the data.
///
/// The transverse box must contain every backward cone: on a bounded
/// (non-periodic) box this fails with a coverage error naming the first
/// offending apex, so cone runs normally use periodic transverse lattices.
pub fn kirchhoff_apply(
    u: &WedgeField,
    data: &GoursatData,
    source: &SemilinearSource,
    quad: &ConeQuadrature,
) -> Result<WedgeField> {
    let grid = u.grid.clone();
    if u.ncomp != 1 || data.ncomp() != 1 {
        return Err(Error::Config(
            "the cone-integral representation is implemented for scalar fields".into(),
        ));
    }
    if quad.n_polar == 0 || quad.n_azimuth == 0 || quad.n_radial == 0 {
        return Err(Error::Config("cone quadrature needs at least one node per direction".into()));
    }
    for w in [W1, W2] {
        if *data.surface_grid(w) != grid.surface(w) {
            return Err(Error::Config(format!(
                "Goursat data on S^{w} does not match the wedge lattice"
            )));
        }
    }
    let bundles = [SurfaceBundle::build(data, W1)?, SurfaceBundle::build(data, W2)?];
    let du: Option<[WedgeField; 4]> = if source.uses_gradient {
        Some([
            u.deriv_cart(0),
            u.deriv_cart(1),
            u.deriv_cart(2),
            u.deriv_cart(3),
        ])
    } else {
        None
    };
    let samples = angular_samples(quad);
    let (xr, wr) = gauss_legendre(quad.n_radial);

    let mut tasks = Vec::new();
    for ib in 1..=grid.n_diag {
        for ia in 1..=grid.row_amax[ib] {
            for i2 in 0..=grid.n2 {
                for i3 in 0..=grid.n3 {
                    tasks.push((ia, ib, i2, i3));
                }
            }
        }
    }
    let results: Vec<Result<f64>> = tasks
        .par_iter()
        .map(|&(ia, ib, i2, i3)| {
            apex_value(
                &grid,
                (ia, ib, i2, i3),
                u,
                du.as_ref(),
                &bundles,
                source,
                &samples,
                (&xr, &wr),
            )
        })
        .collect();

    let mut out = WedgeField::new(grid.clone(), 1);
    for j in 0..=grid.n_diag {
        for i2 in 0..=grid.n2 {
            for i3 in 0..=grid.n3 {
                out.set(0, j, i2, i3, bundles[0].phi.get(j, i2, i3));
                if j > 0 {
                    out.set(j, 0, i2, i3, bundles[1].phi.get(j, i2, i3));
                }
            }
        }
    }
    for (&(ia, ib, i2, i3), res) in tasks.iter().zip(results) {
        let v = res?;
        out.set_at(ia, ib, i2, i3, 0, v);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn apex_value(
    grid: &Arc<WedgeGrid>,
    node: (usize, usize, usize, usize),
    u: &WedgeField,
    du: Option<&[WedgeField; 4]>,
    bundles: &[SurfaceBundle; 2],
    source: &SemilinearSource,
    samples: &[AngularSample],
    radial: (&[f64], &[f64]),
) -> Result<f64> {
    let (ia, ib, i2, i3) = node;
    let apex = grid.point(ia, ib, i2, i3);
    let t0 = apex[0];
    if !grid.spec.periodic {
        let b2 = grid.spec.b2;
        let b3 = grid.spec.b3;
        if apex[2] - t0 < b2.0 - 1e-9
            || apex[2] + t0 > b2.1 + 1e-9
            || apex[3] - t0 < b3.0 - 1e-9
            || apex[3] + t0 > b3.1 + 1e-9
        {
            return Err(Error::DomainCoverage(format!(
                "backward cone from apex (ia = {ia}, ib = {ib}, i₂ = {i2}, i₃ = {i3}) at \
                 ({:.4}, {:.4}, {:.4}, {:.4}) leaves the transverse box; widen it or make it periodic",
                apex[0], apex[1], apex[2], apex[3]
            )));
        }
    }
    let (xr, wr) = radial;
    let mut buf = [0.0];
    let mut acc = 0.0;
    for s in samples {
        let q = s.p[0];
        let ray = psi_hit_with_direction(apex, s.p);
        let w = ray.0;
        let psi = ray.1;
        let sw = surface_sign(w);
        let hit = [
            apex[0] - psi,
            apex[1] + psi * s.p[0],
            apex[2] + psi * s.p[1],
            apex[3] + psi * s.p[2],
        ];
        let (uu, kk, grad) = bundles[(w - 1) as usize].sample(hit);
        // ∂_hψ from implicit differentiation of the hit equation; the chosen
        // branch keeps 1 + s_w q ≥ depth/x⁰₀ > 0 for interior apices.
        let den = 1.0 + sw * q;
        let dpsi2 = -sw * psi * s.dp2[0] / den;
        let dpsi3 = -sw * psi * s.dp3[0] / den;
        let jay = uu + psi * (kk + dot3(&s.p, &grad))
            - dot3(&s.dp2, &grad) * dpsi2
            - s.inv_sin2 * dot3(&s.dp3, &grad) * dpsi3;
        let mut val = jay;
        if psi > 0.0 {
            for (xm, wm) in xr.iter().zip(wr.iter()) {
                let lam = 0.5 * psi * (xm + 1.0);
                let wt = 0.5 * psi * wm;
                let x = [
                    apex[0] - lam,
                    apex[1] + lam * s.p[0],
                    apex[2] + lam * s.p[1],
                    apex[3] + lam * s.p[2],
                ];
                u.value_at(x, &mut buf)?;
                let uv = buf[0];
                let g4 = match du {
                    Some(d) => {
                        let mut g = [0.0; 4];
                        for (mu, field) in d.iter().enumerate() {
                            field.value_at(x, &mut buf)?;
                            g[mu] = buf[0];
                        }
                        g
                    }
                    None => [0.0; 4],
                };
                val += wt * lam * (-(source.f)(x, uv, g4));
            }
        }
        acc += s.weight * val;
    }
    Ok(acc / (4.0 * PI))
}

/// Hit solve specialized to a precomputed direction; the apex is interior, so
/// a valid branch always exists.
fn psi_hit_with_direction(apex: [f64; 4], p: [f64; 3]) -> (u8, f64) {
    let q = p[0];
    let mut best: Option<(f64, u8)> = None;
    for w in [W1, W2] {
        let s = surface_sign(w);
        let den = 1.0 + s * q;
        if den <= 0.0 {
            continue;
        }
        let cand = (apex[0] - s * apex[1]) / den;
        if s * (apex[1] + cand * q) < -1e-12 {
            continue;
        }
        if best.map_or(true, |(b, _)| cand < b) {
            best = Some((cand, w));
        }
    }
    let (psi, w) = best.expect("interior apex always hits a data surface");
    (w, psi)
}

/// Additive extension Φ(a, b) = φ¹(b) + φ²(a) − φ¹(0) of the Goursat data
/// into the wedge; exact for separated null profiles and the natural Picard
/// initial guess.
pub fn data_extension(grid: &Arc<WedgeGrid>, data: &GoursatData) -> Result<WedgeField> {
    for w in [W1, W2] {
        if *data.surface_grid(w) != grid.surface(w) {
            return Err(Error::Config(format!(
                "Goursat data on S^{w} does not match the wedge lattice"
            )));
        }
    }
    let ncomp = data.ncomp();
    let p1 = data.phi(W1);
    let p2 = data.phi(W2);
    let mut out = WedgeField::new(grid.clone(), ncomp);
    let mut buf = vec![0.0; ncomp];
    for ib in 0..=grid.n_diag {
        for ia in 0..=grid.row_amax[ib] {
            for i2 in 0..=grid.n2 {
                for i3 in 0..=grid.n3 {
                    for (c, slot) in buf.iter_mut().enumerate() {
                        *slot = p1.at(ib, i2, i3, c) + p2.at(ia, i2, i3, c)
                            - p1.at(0, i2, i3, c);
                    }
                    out.set(ia, ib, i2, i3, &buf);
                }
            }
        }
    }
    Ok(out)
}

/// Deviation-ball check of the final iterate against the data extension.
#[derive(Debug, Clone, Copy)]
pub struct BallCheck {
    /// Configured radius (∞ when no bound was supplied).
    pub l: f64,
    pub sup_deviation: f64,
    pub within: bool,
}

/// Contraction diagnostics of the Picard iteration. `d[k]` is the sup-distance
/// between consecutive iterates; ratios ≥ 1 are recorded, and five in a row
/// set the `diverged` verdict without raising an error.
#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub d: Vec<f64>,
    pub ratios: Vec<f64>,
    pub final_residual: f64,
    pub iterations: usize,
    pub diverged: bool,
    pub ball: BallCheck,
}

#[derive(Debug, Clone, Copy)]
pub struct PicardOptions {
    /// Stop once the sup-change drops below this.
    pub tol: f64,
    pub max_iter: usize,
    pub quad: ConeQuadrature,
    /// When set, every interior lattice node must satisfy the causal-domain
    /// predicate, and its ball radius (if any) feeds the deviation check.
    pub bounds: Option<CausalBounds>,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            tol: 1e-10,
            max_iter: 40,
            quad: ConeQuadrature::default(),
            bounds: None,
        }
    }
}

/// Fixed-point iteration u ← Θu from the data extension. Returns the last
/// iterate together with the full trace; divergence is a verdict in the
/// trace, while lattice and data defects are errors.
pub fn picard_iterate(
    source: &SemilinearSource,
    data: &GoursatData,
    grid: Arc<WedgeGrid>,
    opts: &PicardOptions,
) -> Result<(WedgeField, IterationTrace)> {
    if opts.max_iter == 0 {
        return Err(Error::Config("picard iteration needs max_iter ≥ 1".into()));
    }
    if let Some(bounds) = &opts.bounds {
        for ib in 1..=grid.n_diag {
            for ia in 1..=grid.row_amax[ib] {
                let x = grid.point(ia, ib, 0, 0);
                if !in_causal_domain(x, bounds) {
                    return Err(Error::Data(format!(
                        "lattice node (ia = {ia}, ib = {ib}) at (x⁰ = {:.4}, x¹ = {:.4}) \
                         lies outside the causal sub-wedge",
                        x[0], x[1]
                    )));
                }
            }
        }
    }
    let phi_ext = data_extension(&grid, data)?;
    let mut u = phi_ext.clone();
    let mut d_hist: Vec<f64> = Vec::new();
    let mut ratios: Vec<f64> = Vec::new();
    let mut diverged = false;
    let mut streak = 0usize;
    for _ in 0..opts.max_iter {
        let next = kirchhoff_apply(&u, data, source, &opts.quad)?;
        let d = next.sup_diff(&u);
        u = next;
        if let Some(prev) = d_hist.last() {
            let r = d / prev;
            if r >= 1.0 {
                streak += 1;
            } else {
                streak = 0;
            }
            ratios.push(r);
        }
        d_hist.push(d);
        if !d.is_finite() {
            diverged = true;
            break;
        }
        if d <= opts.tol {
            break;
        }
        if streak >= tol::DIVERGENCE_STREAK {
            diverged = true;
            break;
        }
    }
    let sup_deviation = u.sup_diff(&phi_ext);
    let l = opts
        .bounds
        .as_ref()
        .and_then(|b| b.l)
        .unwrap_or(f64::INFINITY);
    let trace = IterationTrace {
        final_residual: d_hist.last().copied().unwrap_or(0.0),
        iterations: d_hist.len(),
        diverged,
        ball: BallCheck {
            l,
            sup_deviation,
            within: sup_deviation <= l,
        },
        d: d_hist,
        ratios,
    };
    Ok((u, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{evolve, EvolveOptions};
    use crate::geometry::WedgeSpec;
    use crate::system::catalog;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wedge(t: f64, sigma: f64, h: f64, ht: f64, periodic: bool) -> Arc<WedgeGrid> {
        let mut spec = WedgeSpec::new(t, sigma, h, ht);
        spec.periodic = periodic;
        Arc::new(WedgeGrid::build(&spec).unwrap())
    }

    /// Goursat data for a known solution: restrictions of u plus its exact
    /// time derivative as K.
    fn data_with_k(
        grid: &Arc<WedgeGrid>,
        u: &dyn Fn([f64; 4]) -> f64,
        dt: &dyn Fn([f64; 4]) -> f64,
    ) -> GoursatData {
        let mut phis = Vec::new();
        let mut ks = Vec::new();
        for w in [W1, W2] {
            let sg = grid.surface(w);
            let mut phi = SurfaceField::new(sg.clone(), 1);
            let embed = sg.clone();
            phi.fill(&|x1, x2, x3, out| out[0] = u(embed.embed(x1, x2, x3)));
            let mut k = SurfaceField::new(sg.clone(), 1);
            let embed = sg.clone();
            k.fill(&|x1, x2, x3, out| out[0] = dt(embed.embed(x1, x2, x3)));
            phis.push(phi);
            ks.push(k);
        }
        let k2 = ks.pop().unwrap();
        let k1 = ks.pop().unwrap();
        let phi2 = phis.pop().unwrap();
        let phi1 = phis.pop().unwrap();
        let mut data = GoursatData::from_fields(phi1, phi2).unwrap();
        data.k = [Some(k1), Some(k2)];
        data
    }

    fn exact_field(grid: &Arc<WedgeGrid>, u: &dyn Fn([f64; 4]) -> f64) -> WedgeField {
        let mut f = WedgeField::new(grid.clone(), 1);
        f.fill_scalar(u);
        f
    }

    #[test]
    fn rays_are_unit_and_hits_satisfy_the_surface_equation() {
        let apices = [
            [0.4, 0.1, 0.2, -0.3],
            [0.7, -0.55, 0.0, 0.9],
            [0.05, 0.0, -1.0, 2.0],
        ];
        let (x2, _) = gauss_legendre(12);
        for apex in apices {
            for xi in &x2 {
                let lam2 = 0.5 * PI * (xi + 1.0);
                for j in 0..16 {
                    let lam3 = TAU * j as f64 / 16.0;
                    let ray = psi_hit(apex, lam2, lam3).unwrap();
                    let norm = dot3(&ray.p, &ray.p).sqrt();
                    assert!((norm - 1.0).abs() <= 1e-14);
                    assert!(ray.hit_residual() <= 1e-12, "residual {}", ray.hit_residual());
                    assert!(ray.psi > 0.0 && ray.psi <= apex[0] + 1e-12);
                    let hit = ray.hit_point();
                    assert!(surface_sign(ray.surface) * hit[1] >= -1e-12);
                }
            }
        }
    }

    #[test]
    fn hit_examples_match_the_closed_forms() {
        let t0 = 0.73;
        let apex = [t0, 0.0, 0.4, -0.2];
        let straight = psi_hit(apex, 0.0, 1.1).unwrap();
        assert!((straight.psi - t0).abs() <= 1e-15);
        let grazing = psi_hit(apex, 0.5 * PI, 0.0).unwrap();
        assert!((grazing.psi - 0.5 * t0).abs() <= 1e-15);
        assert_eq!(grazing.surface, W1);
        for (lam2, lam3) in [(0.3, 0.9), (1.2, 2.5), (2.4, 4.0), (1.9, 5.8)] {
            let ray = psi_hit(apex, lam2, lam3).unwrap();
            let q = (lam2.sin() * lam3.cos()).abs();
            assert!((ray.psi - t0 / (1.0 + q)).abs() <= 1e-12);
            let mirrored = psi_hit(apex, lam2, PI - lam3).unwrap();
            assert!((ray.psi - mirrored.psi).abs() <= 1e-12);
        }
    }

    #[test]
    fn boundary_apices_are_flagged_and_outside_apices_rejected() {
        let on_s1 = psi_hit([0.3, 0.3, 0.0, 0.0], 1.0, 2.0).unwrap();
        assert!(on_s1.boundary);
        assert_eq!(on_s1.psi, 0.0);
        assert_eq!(on_s1.surface, W1);
        let on_s2 = psi_hit([0.3, -0.3, 0.0, 0.0], 1.0, 2.0).unwrap();
        assert!(on_s2.boundary);
        assert_eq!(on_s2.surface, W2);
        let err = psi_hit([0.2, 0.5, 0.0, 0.0], 1.0, 2.0).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn closed_form_hits_match_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..300 {
            let t0 = rng.gen_range(0.05..1.0);
            let y1 = rng.gen_range(-0.999..0.999) * t0;
            let apex = [t0, y1, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let lam2 = rng.gen_range(1e-3..PI - 1e-3);
            let lam3 = rng.gen_range(0.0..TAU);
            let closed = psi_hit(apex, lam2, lam3).unwrap().psi;
            let bis = psi_bisect(apex, lam2, lam3).unwrap();
            assert!(
                (closed - bis).abs() <= 1e-11,
                "closed {closed} vs bisect {bis}"
            );
        }
    }

    #[test]
    fn gauss_legendre_reproduces_known_rules_and_exactness() {
        let (x1, w1) = gauss_legendre(1);
        assert!(x1[0].abs() <= 1e-15 && (w1[0] - 2.0).abs() <= 1e-15);
        let (x2, w2) = gauss_legendre(2);
        let r = 1.0 / 3.0_f64.sqrt();
        assert!((x2[0] + r).abs() <= 1e-15 && (x2[1] - r).abs() <= 1e-15);
        assert!((w2[0] - 1.0).abs() <= 1e-15 && (w2[1] - 1.0).abs() <= 1e-15);
        let (x3, w3) = gauss_legendre(3);
        let r3 = (3.0_f64 / 5.0).sqrt();
        assert!((x3[0] + r3).abs() <= 1e-14 && x3[1].abs() <= 1e-14 && (x3[2] - r3).abs() <= 1e-14);
        assert!((w3[0] - 5.0 / 9.0).abs() <= 1e-14 && (w3[1] - 8.0 / 9.0).abs() <= 1e-14);
        // n nodes are exact through degree 2n − 1.
        let (x5, w5) = gauss_legendre(5);
        let int_x8: f64 = x5.iter().zip(&w5).map(|(x, w)| w * x.powi(8)).sum();
        assert!((int_x8 - 2.0 / 9.0).abs() <= 1e-14);
        let total: f64 = w5.iter().sum();
        assert!((total - 2.0).abs() <= 1e-14);
        // The angular product rule integrates the sphere measure to 4π.
        let total_sphere: f64 = angular_samples(&ConeQuadrature {
            n_polar: 8,
            n_azimuth: 12,
            n_radial: 1,
        })
        .iter()
        .map(|s| s.weight)
        .sum();
        assert!((total_sphere - 4.0 * PI).abs() <= 1e-10);
    }

    #[test]
    fn omega_transport_matches_closed_forms() {
        let ray = psi_hit([0.5, 0.0, 0.0, 0.0], 1.0, 0.7).unwrap();

        let zero = |_: f64| Ok(DMatrix::zeros(2, 2));
        let omega0 = omega_initial(2, 2);
        let profile = transport_omega(&zero, &ray, 7, &omega0).unwrap();
        assert_eq!(profile.len(), 8);
        for st in &profile {
            assert_eq!(st.omega, omega0);
        }

        let c = 0.8;
        let scalar = move |_: f64| Ok(DMatrix::from_element(1, 1, c));
        let o1 = omega_initial(1, 1);
        let err_of = |steps: usize| {
            let prof = transport_omega(&scalar, &ray, steps, &o1).unwrap();
            let last = prof.last().unwrap();
            (last.omega[(0, 0)] - (c * ray.psi).exp()).abs()
        };
        let e8 = err_of(8);
        let e16 = err_of(16);
        assert!(e8 <= 1e-8);
        assert!(e16 <= e8 / 10.0, "e8 {e8}, e16 {e16}");

        let nil = |_: f64| {
            let mut h = DMatrix::zeros(2, 2);
            h[(0, 1)] = 1.0;
            Ok(h)
        };
        let prof = transport_omega(&nil, &ray, 5, &omega0).unwrap();
        let last = &prof.last().unwrap().omega;
        let mut expect = omega_initial(2, 2);
        expect[(0, 1)] = ray.psi;
        assert!((last - expect).abs().max() <= 1e-15);

        let hats = omega_hat_profile(&prof, &omega0);
        assert!(hats[0].iter().all(|v| v.is_finite()));
        // Ω̂ of the nilpotent flow is constant: (Ω(λ) − I)/λ = H.
        assert!((hats[0][(0, 1)] - 1.0).abs() <= 1e-12);
        assert!((hats.last().unwrap()[(0, 1)] - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn omega_transport_reports_evaluator_failures_with_position() {
        let ray = psi_hit([0.5, 0.1, 0.0, 0.0], 1.3, 0.2).unwrap();
        let bad = |lam: f64| {
            if lam > 0.5 * ray.psi {
                Err(Error::Numerics("coefficients blew up".into()))
            } else {
                Ok(DMatrix::zeros(1, 1))
            }
        };
        let err = transport_omega(&bad, &ray, 10, &omega_initial(1, 1)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("λ₁"), "message: {msg}");
        assert!(msg.contains("aborted"), "message: {msg}");
        let zero_steps = transport_omega(&bad, &ray, 0, &omega_initial(1, 1)).unwrap_err();
        assert!(matches!(zero_steps, Error::Config(_)));
    }

    #[test]
    fn zero_data_and_zero_source_give_the_zero_field() {
        let grid = wedge(0.5, 0.5, 0.125, 0.5, true);
        let data = data_with_k(&grid, &|_| 0.0, &|_| 0.0);
        let phi = data_extension(&grid, &data).unwrap();
        let out = kirchhoff_apply(&phi, &data, &zero_source(), &ConeQuadrature::default()).unwrap();
        assert_eq!(out.sup(), 0.0);
    }

    #[test]
    fn cone_integral_matches_the_marching_solver_on_linear_data() {
        let u = |x: [f64; 4]| 0.3 * (0.9 * (x[0] - x[1])).cos() + (1.2 * (x[0] + x[1])).sin();
        let dt = |x: [f64; 4]| {
            -0.27 * (0.9 * (x[0] - x[1])).sin() + 1.2 * (1.2 * (x[0] + x[1])).cos()
        };
        let sys = catalog::linear_wave(None);
        let mut discs = Vec::new();
        for (h, quad) in [
            (
                0.125,
                ConeQuadrature {
                    n_polar: 24,
                    n_azimuth: 48,
                    n_radial: 4,
                },
            ),
            (
                0.0625,
                ConeQuadrature {
                    n_polar: 48,
                    n_azimuth: 96,
                    n_radial: 4,
                },
            ),
        ] {
            let grid = wedge(0.5, 0.5, h, 0.5, true);
            let data = data_with_k(&grid, &u, &dt);
            let march = evolve(&sys, &data, grid.clone(), &EvolveOptions::default()).unwrap();
            let exact = exact_field(&grid, &u);
            assert!(march.u.sup_diff(&exact) <= 1e-11);
            let phi = data_extension(&grid, &data).unwrap();
            let cone = kirchhoff_apply(&phi, &data, &zero_source(), &quad).unwrap();
            discs.push(cone.sup_diff(&march.u));
        }
        // The two constructive routes agree up to the cone discretization,
        // which shrinks under simultaneous lattice and quadrature refinement.
        assert!(discs[0] <= 2e-2, "coarse discrepancy {}", discs[0]);
        assert!(
            discs[1] <= 0.45 * discs[0],
            "discrepancies did not shrink: {:?}",
            discs
        );
    }

    #[test]
    fn manufactured_fixed_point_shrinks_under_simultaneous_refinement() {
        let u = |x: [f64; 4]| (1.1 * x[0] + 0.3 * x[1] + 0.4).sin();
        let dt = |x: [f64; 4]| 1.1 * (1.1 * x[0] + 0.3 * x[1] + 0.4).cos();
        // □u = −1.12 u, so f(x, u) = 1.12 u makes u a fixed point of Θ.
        let f = |_x: [f64; 4], uv: f64, _du: [f64; 4]| 1.12 * uv;
        let source = SemilinearSource {
            f: &f,
            uses_gradient: false,
        };
        let mut errs = Vec::new();
        for (h, quad) in [
            (
                0.125,
                ConeQuadrature {
                    n_polar: 16,
                    n_azimuth: 32,
                    n_radial: 4,
                },
            ),
            (
                0.0625,
                ConeQuadrature {
                    n_polar: 32,
                    n_azimuth: 64,
                    n_radial: 6,
                },
            ),
        ] {
            let grid = wedge(0.5, 0.5, h, 0.5, true);
            let data = data_with_k(&grid, &u, &dt);
            let exact = exact_field(&grid, &u);
            let image = kirchhoff_apply(&exact, &data, &source, &quad).unwrap();
            errs.push(image.sup_diff(&exact));
        }
        assert!(errs[0] <= 2e-2, "coarse fixed-point error {}", errs[0]);
        assert!(
            errs[1] <= 0.6 * errs[0],
            "errors did not shrink: {:?}",
            errs
        );
    }

    #[test]
    fn zero_source_picard_converges_after_one_application() {
        let grid = wedge(0.5, 0.5, 0.125, 0.5, true);
        let u = |x: [f64; 4]| 0.3 * (0.9 * (x[0] - x[1])).cos() + (1.2 * (x[0] + x[1])).sin();
        let dt = |x: [f64; 4]| {
            -0.27 * (0.9 * (x[0] - x[1])).sin() + 1.2 * (1.2 * (x[0] + x[1])).cos()
        };
        let data = data_with_k(&grid, &u, &dt);
        let opts = PicardOptions {
            quad: ConeQuadrature {
                n_polar: 8,
                n_azimuth: 16,
                n_radial: 2,
            },
            ..PicardOptions::default()
        };
        let (_, trace) = picard_iterate(&zero_source(), &data, grid, &opts).unwrap();
        // Θ is constant in u, so the second application changes nothing.
        assert_eq!(trace.d.len(), 2);
        assert!(trace.d[0] > 0.0);
        assert_eq!(trace.d[1], 0.0);
        assert!(!trace.diverged);
        assert_eq!(trace.final_residual, 0.0);
    }

    #[test]
    fn picard_contracts_on_a_small_cubic_problem() {
        let eps = 0.1;
        let u = move |x: [f64; 4]| eps * (1.1 * x[0] + 0.3 * x[1] + 0.4).sin();
        let dt = move |x: [f64; 4]| eps * 1.1 * (1.1 * x[0] + 0.3 * x[1] + 0.4).cos();
        // f = u³ + s with s chosen so that the manufactured u solves □u = −f.
        let f = move |x: [f64; 4], uv: f64, _du: [f64; 4]| {
            let ue = u(x);
            uv.powi(3) + 1.12 * ue - ue.powi(3)
        };
        let source = SemilinearSource {
            f: &f,
            uses_gradient: false,
        };
        let grid = wedge(0.5, 0.5, 0.125, 0.5, true);
        let data = data_with_k(&grid, &u, &dt);
        let mut bounds = CausalBounds::new(1.0, 1.0, 1.0).unwrap();
        bounds.l = Some(0.5);
        let opts = PicardOptions {
            tol: 1e-9,
            max_iter: 20,
            quad: ConeQuadrature {
                n_polar: 16,
                n_azimuth: 32,
                n_radial: 4,
            },
            bounds: Some(bounds),
        };
        let (sol, trace) = picard_iterate(&source, &data, grid.clone(), &opts).unwrap();
        assert!(!trace.diverged);
        assert!(trace.d.last().copied().unwrap() <= 1e-9);
        assert!(
            trace.ratios.iter().all(|r| *r < 0.9),
            "ratios {:?}",
            trace.ratios
        );
        let exact = exact_field(&grid, &u);
        let err = sol.sup_diff(&exact);
        assert!(err <= 5e-3, "picard limit error {err}");
        assert!(trace.ball.within);
        assert!(trace.ball.sup_deviation <= 0.1);
    }

    #[test]
    fn picard_returns_a_divergence_verdict_on_a_tall_wedge() {
        let grid = wedge(1.5, 1.5, 0.25, 1.0, true);
        let data = data_with_k(&grid, &|_| 2.0, &|_| 0.0);
        // □u = u³ with data of size 2: the retarded potential reinforces the
        // data and the iterates grow without bound.
        let f = |_x: [f64; 4], uv: f64, _du: [f64; 4]| -uv.powi(3);
        let source = SemilinearSource {
            f: &f,
            uses_gradient: false,
        };
        let opts = PicardOptions {
            tol: 1e-10,
            max_iter: 15,
            quad: ConeQuadrature {
                n_polar: 8,
                n_azimuth: 8,
                n_radial: 4,
            },
            bounds: None,
        };
        let (_, trace) = picard_iterate(&source, &data, grid, &opts).unwrap();
        assert!(trace.diverged);
        assert!(trace.ratios.iter().any(|r| *r >= 1.0));
        assert!(!trace.d.is_empty());
    }

    #[test]
    fn bounded_transverse_boxes_report_the_offending_apex() {
        let grid = wedge(0.5, 0.5, 0.125, 0.5, false);
        let data = data_with_k(&grid, &|_| 0.0, &|_| 0.0);
        let phi = data_extension(&grid, &data).unwrap();
        let err =
            kirchhoff_apply(&phi, &data, &zero_source(), &ConeQuadrature::default()).unwrap_err();
        match &err {
            Error::DomainCoverage(msg) => {
                assert!(msg.contains("apex"), "message: {msg}");
                assert!(msg.contains("i₂ = 0"), "message: {msg}");
            }
            other => panic!("expected a coverage error, got {other}"),
        }
    }

    #[test]
    fn missing_transversal_derivative_is_a_data_error() {
        let grid = wedge(0.5, 0.5, 0.125, 0.5, true);
        let mut data = data_with_k(&grid, &|_| 0.0, &|_| 0.0);
        data.k[1] = None;
        let phi = data_extension(&grid, &data).unwrap();
        let err =
            kirchhoff_apply(&phi, &data, &zero_source(), &ConeQuadrature::default()).unwrap_err();
        match &err {
            Error::Data(msg) => assert!(msg.contains('K'), "message: {msg}"),
            other => panic!("expected a data error, got {other}"),
        }
    }

    #[test]
    fn picard_rejects_lattices_outside_the_causal_bounds() {
        let grid = wedge(0.5, 0.5, 0.125, 0.5, true);
        let data = data_with_k(&grid, &|_| 0.0, &|_| 0.0);
        let bounds = CausalBounds::new(0.5, 0.1, 0.05).unwrap();
        let opts = PicardOptions {
            bounds: Some(bounds),
            ..PicardOptions::default()
        };
        let err = picard_iterate(&zero_source(), &data, grid, &opts).unwrap_err();
        match &err {
            Error::Data(msg) => assert!(msg.contains("causal"), "message: {msg}"),
            other => panic!("expected a data error, got {other}"),
        }
    }
}
