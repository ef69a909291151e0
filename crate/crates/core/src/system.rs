//! Quasilinear system descriptions and the structural hypothesis probes.
//!
//! A system is Σ_{λμ} A^{λμ}(x, u) ∂_λ∂_μ u_r + f_r(x, u, ∂u) = 0 with a
//! shared symmetric principal coefficient A. The preferred representation is
//! the affine split A(x, u) = Σ_m u_m A₁^m(x) + A₂(x); a raw evaluator form
//! exists for coefficient families that are not affine in the unknowns (the
//! inverse metric of the reduced Einstein system being the canonical case —
//! the affinity probe is expected to report it, not hide it).
//!
//! The probes are numerical second-difference tests, not symbolic: the
//! evaluators are black boxes.

use crate::error::{Error, Result};
use crate::field::SurfaceField;
use crate::geometry::{restriction_sign, surface_sign, SurfaceGrid};
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

pub type Mat4 = [[f64; 4]; 4];

/// Minkowski coefficients η = diag(1, −1, −1, −1).
pub const ETA: Mat4 = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, -1.0, 0.0, 0.0],
    [0.0, 0.0, -1.0, 0.0],
    [0.0, 0.0, 0.0, -1.0],
];

pub type SourceFn = Arc<dyn Fn([f64; 4]) -> f64 + Send + Sync>;

/// Principal coefficient evaluator.
#[derive(Clone)]
pub enum Principal {
    /// Affine split: A(x, u) = Σ_m u_m·A₁^m(x) + A₂(x).
    /// The evaluator writes the n matrices A₁^m into the slice.
    Split {
        a1: Arc<dyn Fn([f64; 4], &mut [Mat4]) + Send + Sync>,
        a2: Arc<dyn Fn([f64; 4]) -> Mat4 + Send + Sync>,
    },
    /// General pointwise evaluator A(x, u).
    Raw(Arc<dyn Fn([f64; 4], &[f64]) -> Mat4 + Send + Sync>),
}

#[derive(Clone)]
pub struct QuasilinearSystem {
    pub name: String,
    /// Number of unknowns.
    pub n: usize,
    pub principal: Principal,
    /// Source evaluator f_r(x, u, ∂u); `du[r][μ]` holds ∂_μ u_r.
    pub f: Arc<dyn Fn([f64; 4], &[f64], &[[f64; 4]], &mut [f64]) + Send + Sync>,
    /// Whether f actually reads ∂u (lets integral solvers skip gradient
    /// reconstruction when it does not).
    pub source_uses_gradient: bool,
    /// Reference point (x₀, a_r, a_{rλ}) at which A must equal η.
    pub ref_x: [f64; 4],
    pub ref_u: Vec<f64>,
    pub ref_du: Vec<[f64; 4]>,
}

impl std::fmt::Debug for QuasilinearSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QuasilinearSystem")
            .field("name", &self.name)
            .field("n", &self.n)
            .finish()
    }
}

/// A^{λμ}(x, u) as the exact affine combination (split form) or the raw
/// evaluator output.
pub fn assemble_coefficients(sys: &QuasilinearSystem, x: [f64; 4], u: &[f64]) -> Mat4 {
    match &sys.principal {
        Principal::Split { a1, a2 } => {
            let mut mats = vec![[[0.0; 4]; 4]; sys.n];
            a1(x, &mut mats);
            let mut a = a2(x);
            for (m, mat) in mats.iter().enumerate() {
                for l in 0..4 {
                    for g in 0..4 {
                        a[l][g] += u[m] * mat[l][g];
                    }
                }
            }
            a
        }
        Principal::Raw(eval) => eval(x, u),
    }
}

/// Verdict of the signature check A⁰⁰ > 0 with negative definite spatial block.
#[derive(Debug, Clone)]
pub struct SignatureReport {
    pub ok: bool,
    pub a00: f64,
    /// Eigenvalues of the spatial 3×3 block, ascending.
    pub spatial_eigenvalues: [f64; 3],
    /// The violating eigenvalue (or A⁰⁰) when not ok.
    pub witness: Option<f64>,
}

/// Hyperbolicity signature (+, −, −, −): A⁰⁰ > 0 and the spatial block
/// negative definite.
pub fn verify_signature(a: &Mat4) -> SignatureReport {
    let spatial = Matrix3::new(
        a[1][1], a[1][2], a[1][3], a[2][1], a[2][2], a[2][3], a[3][1], a[3][2], a[3][3],
    );
    let sym = spatial.symmetric_eigen();
    let mut eigs = [sym.eigenvalues[0], sym.eigenvalues[1], sym.eigenvalues[2]];
    eigs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let a00 = a[0][0];
    if a00 <= 0.0 {
        return SignatureReport {
            ok: false,
            a00,
            spatial_eigenvalues: eigs,
            witness: Some(a00),
        };
    }
    let max_eig = eigs[2];
    if max_eig >= 0.0 {
        return SignatureReport {
            ok: false,
            a00,
            spatial_eigenvalues: eigs,
            witness: Some(max_eig),
        };
    }
    SignatureReport {
        ok: true,
        a00,
        spatial_eigenvalues: eigs,
        witness: None,
    }
}

/// Sampling region for the linearity probes.
#[derive(Debug, Clone)]
pub struct SampleBox {
    pub x_lo: [f64; 4],
    pub x_hi: [f64; 4],
    /// Unknowns sampled in ref_u ± u_scale.
    pub u_scale: f64,
    /// Tangential-derivative slots sampled in ±du_scale.
    pub du_scale: f64,
    /// Probe step δ of the second differences.
    pub delta: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for SampleBox {
    fn default() -> Self {
        SampleBox {
            x_lo: [0.0, -1.0, 0.0, 0.0],
            x_hi: [1.0, 1.0, 1.0, 1.0],
            u_scale: 0.5,
            du_scale: 1.0,
            delta: 0.5,
            samples: 64,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearityReport {
    pub pass: bool,
    pub max_second_difference: f64,
    pub scale: f64,
    pub threshold: f64,
    pub delta: f64,
    pub samples: usize,
}

const LINEARITY_RTOL: f64 = 1e-10;

fn sample_x(rng: &mut ChaCha8Rng, sb: &SampleBox) -> [f64; 4] {
    let mut x = [0.0; 4];
    for d in 0..4 {
        x[d] = sb.x_lo[d] + rng.gen::<f64>() * (sb.x_hi[d] - sb.x_lo[d]);
    }
    x
}

/// Affinity of A in u: second differences of `assemble_coefficients` over
/// component-direction pairs. Round-off small for split systems by
/// construction; O(δ²) output flags raw evaluators with genuine u-curvature.
pub fn check_g0_linearity(sys: &QuasilinearSystem, sb: &SampleBox) -> LinearityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(sb.seed);
    let mut max_d2: f64 = 0.0;
    let mut scale: f64 = 0.0;
    let d = sb.delta;
    for _ in 0..sb.samples {
        let x = sample_x(&mut rng, sb);
        let mut u: Vec<f64> = sys.ref_u.clone();
        for v in &mut u {
            *v += (rng.gen::<f64>() * 2.0 - 1.0) * sb.u_scale;
        }
        let m = rng.gen_range(0..sys.n);
        let k = rng.gen_range(0..sys.n);
        let mut um = u.clone();
        um[m] += d;
        let mut uk = u.clone();
        uk[k] += d;
        let mut umk = um.clone();
        umk[k] += d;
        let a00 = assemble_coefficients(sys, x, &u);
        let am = assemble_coefficients(sys, x, &um);
        let ak = assemble_coefficients(sys, x, &uk);
        let amk = assemble_coefficients(sys, x, &umk);
        for l in 0..4 {
            for g in 0..4 {
                let d2 = amk[l][g] - am[l][g] - ak[l][g] + a00[l][g];
                max_d2 = max_d2.max(d2.abs());
                scale = scale.max(a00[l][g].abs()).max(amk[l][g].abs());
            }
        }
    }
    let threshold = LINEARITY_RTOL * scale.max(1e-300);
    LinearityReport {
        pass: max_d2 <= threshold,
        max_second_difference: max_d2,
        scale,
        threshold,
        delta: d,
        samples: sb.samples,
    }
}

/// Linearity of the restricted source in the transversal-derivative slots.
///
/// Substitutes x ↦ ((−1)^{w−1}x¹, x¹, x², x³) and the restriction identity
/// [∂_i u]^w = ∂_i[u]^w + (−1)^w δ_{1i} q (q the [∂₀u]^w slot), then takes
/// second differences of f in the q slots.
pub fn check_g1_linearity(sys: &QuasilinearSystem, w: u8, sb: &SampleBox) -> LinearityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(sb.seed ^ 0x5e0_1e55);
    let n = sys.n;
    let rsign = restriction_sign(w);
    let ssign = surface_sign(w);
    let mut max_d2: f64 = 0.0;
    let mut scale: f64 = 0.0;
    let d = sb.delta;
    let eval = |x_sub: [f64; 4], u: &[f64], dtan: &[[f64; 3]], q: &[f64], out: &mut [f64]| {
        let mut du = vec![[0.0; 4]; n];
        for r in 0..n {
            du[r][0] = q[r];
            du[r][1] = dtan[r][0] + rsign * q[r];
            du[r][2] = dtan[r][1];
            du[r][3] = dtan[r][2];
        }
        (sys.f)(x_sub, u, &du, out);
    };
    for _ in 0..sb.samples {
        let xr = sample_x(&mut rng, sb);
        let x1 = xr[1];
        let x_sub = [ssign * x1, x1, xr[2], xr[3]];
        let mut u: Vec<f64> = sys.ref_u.clone();
        for v in &mut u {
            *v += (rng.gen::<f64>() * 2.0 - 1.0) * sb.u_scale;
        }
        let mut dtan = vec![[0.0; 3]; n];
        for row in &mut dtan {
            for v in row.iter_mut() {
                *v = (rng.gen::<f64>() * 2.0 - 1.0) * sb.du_scale;
            }
        }
        let mut q = vec![0.0; n];
        for v in &mut q {
            *v = (rng.gen::<f64>() * 2.0 - 1.0) * sb.du_scale;
        }
        let m = rng.gen_range(0..n);
        let k = rng.gen_range(0..n);
        let mut qm = q.clone();
        qm[m] += d;
        let mut qk = q.clone();
        qk[k] += d;
        let mut qmk = qm.clone();
        qmk[k] += d;
        let mut f00 = vec![0.0; n];
        let mut fm = vec![0.0; n];
        let mut fk = vec![0.0; n];
        let mut fmk = vec![0.0; n];
        eval(x_sub, &u, &dtan, &q, &mut f00);
        eval(x_sub, &u, &dtan, &qm, &mut fm);
        eval(x_sub, &u, &dtan, &qk, &mut fk);
        eval(x_sub, &u, &dtan, &qmk, &mut fmk);
        for r in 0..n {
            let d2 = fmk[r] - fm[r] - fk[r] + f00[r];
            max_d2 = max_d2.max(d2.abs());
            scale = scale.max(f00[r].abs()).max(fmk[r].abs());
        }
    }
    let threshold = LINEARITY_RTOL * scale.max(1e-300);
    LinearityReport {
        pass: max_d2 <= threshold,
        max_second_difference: max_d2,
        scale,
        threshold,
        delta: d,
        samples: sb.samples,
    }
}

#[derive(Debug, Clone)]
pub struct NullConditionReport {
    pub pass: bool,
    pub max_violation: f64,
    pub scale: f64,
    pub witness: Option<[f64; 4]>,
}

/// Deterministic null directions: the axis-aligned vectors plus a Fibonacci
/// sphere of (1, n̂) with |n̂| = 1; all satisfy η^{μν}ξ_μξ_ν = 0 exactly up to
/// round-off.
fn null_directions() -> Vec<[f64; 4]> {
    let mut dirs = vec![
        [1.0, 1.0, 0.0, 0.0],
        [1.0, -1.0, 0.0, 0.0],
        [1.0, 0.0, 1.0, 0.0],
        [1.0, 0.0, -1.0, 0.0],
        [1.0, 0.0, 0.0, 1.0],
        [1.0, 0.0, 0.0, -1.0],
    ];
    let n = 50;
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    for i in 0..n {
        let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
        let r = (1.0 - z * z).sqrt();
        let phi = golden * i as f64;
        dirs.push([1.0, r * phi.cos(), r * phi.sin(), z]);
    }
    dirs
}

/// Klainerman-type nullity: Q^{μν}ξ_μξ_ν = 0 on all sampled null directions.
pub fn null_condition_check(q: &Mat4) -> NullConditionReport {
    let mut scale: f64 = 0.0;
    for row in q.iter() {
        for v in row {
            scale = scale.max(v.abs());
        }
    }
    let mut max_violation: f64 = 0.0;
    let mut witness = None;
    for xi in null_directions() {
        let mut val = 0.0;
        for m in 0..4 {
            for nn in 0..4 {
                val += q[m][nn] * xi[m] * xi[nn];
            }
        }
        if val.abs() > max_violation {
            max_violation = val.abs();
            witness = Some(xi);
        }
    }
    let pass = max_violation <= 1e-12 * scale.max(1.0);
    NullConditionReport {
        pass,
        max_violation,
        scale,
        witness: if pass { None } else { witness },
    }
}

/// Goursat data: sampled fields on both null-plane lattices, the corner
/// compatibility record, and the transversal derivatives once a transport
/// solve has filled them.
#[derive(Debug, Clone)]
pub struct GoursatData {
    phi: [SurfaceField; 2],
    pub corner: CornerRecord,
    pub k: [Option<SurfaceField>; 2],
}

#[derive(Debug, Clone)]
pub struct CornerRecord {
    pub max_mismatch: f64,
    pub per_component: Vec<f64>,
}

impl GoursatData {
    /// Validates grid compatibility, computes the corner record.
    pub fn from_fields(phi1: SurfaceField, phi2: SurfaceField) -> Result<Self> {
        if phi1.grid.w != 1 || phi2.grid.w != 2 {
            return Err(Error::Config(
                "Goursat data fields must live on S¹ and S² in that order".into(),
            ));
        }
        if phi1.ncomp != phi2.ncomp
            || phi1.grid.n2 != phi2.grid.n2
            || phi1.grid.n3 != phi2.grid.n3
            || phi1.grid.n1 != phi2.grid.n1
        {
            return Err(Error::Config(
                "Goursat data fields have incompatible shapes".into(),
            ));
        }
        phi1.check_filled()?;
        phi2.check_filled()?;
        let corner = corner_record(&phi1, &phi2);
        Ok(GoursatData {
            phi: [phi1, phi2],
            corner,
            k: [None, None],
        })
    }

    pub fn phi(&self, w: u8) -> &SurfaceField {
        &self.phi[(w - 1) as usize]
    }

    pub fn ncomp(&self) -> usize {
        self.phi[0].ncomp
    }

    pub fn surface_grid(&self, w: u8) -> &SurfaceGrid {
        &self.phi[(w - 1) as usize].grid
    }
}

fn corner_record(phi1: &SurfaceField, phi2: &SurfaceField) -> CornerRecord {
    let n = phi1.ncomp;
    let mut per = vec![0.0_f64; n];
    for i2 in 0..=phi1.grid.n2 {
        for i3 in 0..=phi1.grid.n3 {
            let a = phi1.get(0, i2, i3);
            let b = phi2.get(0, i2, i3);
            for c in 0..n {
                per[c] = per[c].max((a[c] - b[c]).abs());
            }
        }
    }
    let max = per.iter().cloned().fold(0.0_f64, f64::max);
    CornerRecord {
        max_mismatch: max,
        per_component: per,
    }
}

/// Characteristic residual A⁰⁰ + 2(−1)^w A⁰¹ + A¹¹ at every station of D^w,
/// with A evaluated at the surface point and the data value there.
pub fn characteristic_residual(
    sys: &QuasilinearSystem,
    data: &GoursatData,
    w: u8,
) -> SurfaceField {
    let phi = data.phi(w);
    let g = phi.grid.clone();
    let rsign = restriction_sign(w);
    let mut out = SurfaceField::new(g.clone(), 1);
    for j in 0..=g.n1 {
        for i2 in 0..=g.n2 {
            for i3 in 0..=g.n3 {
                let x = g.point(j, i2, i3);
                let u = phi.get(j, i2, i3);
                let a = assemble_coefficients(sys, x, u);
                let res = a[0][0] + 2.0 * rsign * a[0][1] + a[1][1];
                out.set_at(j, i2, i3, 0, res);
            }
        }
    }
    out
}

/// Built-in systems addressable by name.
pub mod catalog {
    use super::*;

    fn zero_a1(n: usize) -> Arc<dyn Fn([f64; 4], &mut [Mat4]) + Send + Sync> {
        let _ = n;
        Arc::new(|_x, mats: &mut [Mat4]| {
            for m in mats.iter_mut() {
                *m = [[0.0; 4]; 4];
            }
        })
    }

    /// □u + s(x) = 0 in signature convention A = η.
    pub fn linear_wave(source: Option<SourceFn>) -> QuasilinearSystem {
        let f: Arc<dyn Fn([f64; 4], &[f64], &[[f64; 4]], &mut [f64]) + Send + Sync> =
            match source {
                Some(s) => Arc::new(move |x, _u, _du, out: &mut [f64]| out[0] = s(x)),
                None => Arc::new(|_x, _u, _du, out: &mut [f64]| out[0] = 0.0),
            };
        QuasilinearSystem {
            name: "linear_wave".into(),
            n: 1,
            principal: Principal::Split {
                a1: zero_a1(1),
                a2: Arc::new(|_x| ETA),
            },
            f,
            source_uses_gradient: false,
            ref_x: [0.0; 4],
            ref_u: vec![0.0],
            ref_du: vec![[0.0; 4]],
        }
    }

    /// □u + u³ + s(x) = 0.
    pub fn semilinear_cubic(source: Option<SourceFn>) -> QuasilinearSystem {
        let f: Arc<dyn Fn([f64; 4], &[f64], &[[f64; 4]], &mut [f64]) + Send + Sync> =
            match source {
                Some(s) => {
                    Arc::new(move |x, u: &[f64], _du, out: &mut [f64]| {
                        out[0] = u[0] * u[0] * u[0] + s(x)
                    })
                }
                None => Arc::new(|_x, u: &[f64], _du, out: &mut [f64]| {
                    out[0] = u[0] * u[0] * u[0]
                }),
            };
        QuasilinearSystem {
            name: "semilinear_cubic".into(),
            n: 1,
            principal: Principal::Split {
                a1: zero_a1(1),
                a2: Arc::new(|_x| ETA),
            },
            f,
            source_uses_gradient: false,
            ref_x: [0.0; 4],
            ref_u: vec![0.0],
            ref_du: vec![[0.0; 4]],
        }
    }

    /// (1 + εu)∂₀₀u − Δu + s(x) = 0: the minimal genuinely quasilinear case.
    pub fn quasilinear_demo(eps: f64, source: Option<SourceFn>) -> QuasilinearSystem {
        let a1: Arc<dyn Fn([f64; 4], &mut [Mat4]) + Send + Sync> =
            Arc::new(move |_x, mats: &mut [Mat4]| {
                mats[0] = [[0.0; 4]; 4];
                mats[0][0][0] = eps;
            });
        let f: Arc<dyn Fn([f64; 4], &[f64], &[[f64; 4]], &mut [f64]) + Send + Sync> =
            match source {
                Some(s) => Arc::new(move |x, _u, _du, out: &mut [f64]| out[0] = s(x)),
                None => Arc::new(|_x, _u, _du, out: &mut [f64]| out[0] = 0.0),
            };
        QuasilinearSystem {
            name: "quasilinear_demo".into(),
            n: 1,
            principal: Principal::Split {
                a1,
                a2: Arc::new(|_x| ETA),
            },
            f,
            source_uses_gradient: false,
            ref_x: [0.0; 4],
            ref_u: vec![0.0],
            ref_du: vec![[0.0; 4]],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assemble_is_the_affine_combination() {
        // A₁^{00,0} = 1, A₂ = η, u = (0.1): A⁰⁰ = 1.1, rest Minkowski.
        let sys = catalog::quasilinear_demo(1.0, None);
        let a = assemble_coefficients(&sys, [0.0; 4], &[0.1]);
        assert_eq!(a[0][0], 1.1);
        assert_eq!(a[1][1], -1.0);
        assert_eq!(a[0][1], 0.0);
        // Semilinear degeneration: A = η for every u.
        let sys = catalog::linear_wave(None);
        for u in [-3.0, 0.0, 2.5] {
            assert_eq!(assemble_coefficients(&sys, [0.3, 0.1, 0.0, 0.0], &[u]), ETA);
        }
    }

    #[test]
    fn reference_point_gives_eta() {
        for sys in [
            catalog::linear_wave(None),
            catalog::semilinear_cubic(None),
            catalog::quasilinear_demo(0.3, None),
        ] {
            let a = assemble_coefficients(&sys, sys.ref_x, &sys.ref_u);
            assert_eq!(a, ETA, "system {}", sys.name);
        }
    }

    #[test]
    fn signature_verdicts() {
        assert!(verify_signature(&ETA).ok);
        let bad = [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, -1.0, 0.0],
            [0.0, 0.0, 0.0, -1.0],
        ];
        let rep = verify_signature(&bad);
        assert!(!rep.ok);
        assert!((rep.witness.unwrap() - 1.0).abs() < 1e-12);
        // Small symmetric perturbations keep the signature.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let mut a = ETA;
            for l in 0..4 {
                for g in l..4 {
                    let p = (rng.gen::<f64>() - 0.5) * 0.02;
                    a[l][g] += p;
                    if g != l {
                        a[g][l] += p;
                    }
                }
            }
            assert!(verify_signature(&a).ok);
        }
    }

    #[test]
    fn g0_passes_split_fails_quadratic_raw() {
        let sb = SampleBox::default();
        let rep = check_g0_linearity(&catalog::quasilinear_demo(0.7, None), &sb);
        assert!(rep.pass);
        assert!(rep.max_second_difference <= 1e-14);
        // Raw A⁰⁰ = 1 + u² has second difference exactly 2δ².
        let raw = QuasilinearSystem {
            name: "raw_quadratic".into(),
            n: 1,
            principal: Principal::Raw(Arc::new(|_x, u: &[f64]| {
                let mut a = ETA;
                a[0][0] = 1.0 + u[0] * u[0];
                a
            })),
            f: Arc::new(|_x, _u, _du, out: &mut [f64]| out[0] = 0.0),
            source_uses_gradient: false,
            ref_x: [0.0; 4],
            ref_u: vec![0.0],
            ref_du: vec![[0.0; 4]],
        };
        let rep = check_g0_linearity(&raw, &sb);
        assert!(!rep.pass);
        let expect = 2.0 * sb.delta * sb.delta;
        assert!(
            (rep.max_second_difference - expect).abs() <= 0.01 * expect,
            "got {} want {}",
            rep.max_second_difference,
            expect
        );
    }

    #[test]
    fn g1_null_form_cancels_and_time_square_fails() {
        // f = η^{μν}∂_μu∂_νu: the [∂₀u]² contributions cancel after the
        // restriction substitution, so the probe sees an affine function.
        let q0 = QuasilinearSystem {
            name: "null_form".into(),
            n: 1,
            principal: Principal::Split {
                a1: Arc::new(|_x, mats: &mut [Mat4]| mats[0] = [[0.0; 4]; 4]),
                a2: Arc::new(|_x| ETA),
            },
            f: Arc::new(|_x, _u, du: &[[f64; 4]], out: &mut [f64]| {
                out[0] = du[0][0] * du[0][0]
                    - du[0][1] * du[0][1]
                    - du[0][2] * du[0][2]
                    - du[0][3] * du[0][3];
            }),
            source_uses_gradient: true,
            ref_x: [0.0; 4],
            ref_u: vec![0.0],
            ref_du: vec![[0.0; 4]],
        };
        let sb = SampleBox::default();
        for w in [1, 2] {
            let rep = check_g1_linearity(&q0, w, &sb);
            assert!(rep.pass, "w={w}: {rep:?}");
        }
        // f = (∂₀u)² fails with residual exactly 2δ².
        let t2 = QuasilinearSystem {
            f: Arc::new(|_x, _u, du: &[[f64; 4]], out: &mut [f64]| {
                out[0] = du[0][0] * du[0][0]
            }),
            name: "time_square".into(),
            ..q0.clone()
        };
        for w in [1, 2] {
            let rep = check_g1_linearity(&t2, w, &sb);
            assert!(!rep.pass);
            let expect = 2.0 * sb.delta * sb.delta;
            assert!((rep.max_second_difference - expect).abs() <= 0.01 * expect);
        }
    }

    #[test]
    fn null_condition_examples() {
        let mut q = [[0.0; 4]; 4];
        assert!(null_condition_check(&q).pass);
        assert!(null_condition_check(&ETA).pass);
        q[0][0] = 1.0;
        let rep = null_condition_check(&q);
        assert!(!rep.pass);
        assert!(rep.max_violation >= 1.0 - 1e-12);
    }

    #[test]
    fn goursat_corner_record() {
        use crate::field::WedgeField;
        use crate::geometry::{WedgeGrid, WedgeSpec, W1, W2};
        use std::sync::Arc as A;
        let g = A::new(WedgeGrid::build(&WedgeSpec::new(0.5, 1.0, 0.25, 0.5)).unwrap());
        let mut v = WedgeField::new(g.clone(), 1);
        v.fill_scalar(&|x| x[0] + 2.0 * x[2]);
        let phi1 = v.restrict(W1).unwrap();
        let mut phi2 = v.restrict(W2).unwrap();
        let data = GoursatData::from_fields(phi1.clone(), phi2.clone()).unwrap();
        assert_eq!(data.corner.max_mismatch, 0.0);
        // A shifted φ² reports the shift.
        for i2 in 0..=phi2.grid.n2 {
            for i3 in 0..=phi2.grid.n3 {
                let v = phi2.at(0, i2, i3, 0);
                phi2.set_at(0, i2, i3, 0, v + 1e-3);
            }
        }
        let data = GoursatData::from_fields(phi1, phi2).unwrap();
        assert!((data.corner.max_mismatch - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn characteristic_residual_minkowski_and_constant() {
        use crate::field::WedgeField;
        use crate::geometry::{WedgeGrid, WedgeSpec, W1, W2};
        use std::sync::Arc as A;
        let g = A::new(WedgeGrid::build(&WedgeSpec::new(0.5, 1.0, 0.125, 0.25)).unwrap());
        let mut v = WedgeField::new(g.clone(), 1);
        v.fill_scalar(&|x| x[0] * x[1] + x[2]);
        let data =
            GoursatData::from_fields(v.restrict(W1).unwrap(), v.restrict(W2).unwrap()).unwrap();
        let sys = catalog::linear_wave(None);
        for w in [W1, W2] {
            assert_eq!(characteristic_residual(&sys, &data, w).sup(), 0.0);
        }
        // Constant coefficients A⁰⁰ = 2, A⁰¹ = 0, A¹¹ = −1: residual ≡ 1.
        let skew = QuasilinearSystem {
            principal: Principal::Raw(Arc::new(|_x, _u| {
                let mut a = ETA;
                a[0][0] = 2.0;
                a
            })),
            ..catalog::linear_wave(None)
        };
        for w in [W1, W2] {
            let r = characteristic_residual(&skew, &data, w);
            for j in 0..=r.grid.n1 {
                assert_eq!(r.at(j, 0, 0, 0), 1.0);
            }
        }
    }
}
