//! Wedge geometry and its discrete grids.
//!
//! The continuum objects: the wedge 𝒴 = {x⁰ ≥ |x¹|, (x²,x³) ∈ B}, its null
//! boundary planes S¹: x⁰ = x¹ and S²: x⁰ = −x¹, their corner Γ = S¹ ∩ S²,
//! the time cap x⁰ ≤ T and the hyperboloidal cap (x⁰)² − (x¹)² ≤ σ². In
//! double-null coordinates a = x⁰ − x¹, b = x⁰ + x¹ the wedge is a ≥ 0,
//! b ≥ 0; the caps read (a + b)/2 ≤ T and a·b ≤ σ², so the truncated wedge
//! is a lower set of the (a,b) lattice and both caps are realized by node
//! masking. The downward-set structure is what the marching scheme and the
//! slice quadratures rely on; this module owns it.
//!
//! The characteristic-condition check itself needs coefficient evaluators and
//! therefore lives with them (see [`crate::system::characteristic_residual`],
//! re-exported here).

use crate::error::{Error, Result};

pub use crate::system::characteristic_residual;

/// Index of the null plane S¹: x⁰ = x¹ (the a = 0 plane).
pub const W1: u8 = 1;
/// Index of the null plane S²: x⁰ = −x¹ (the b = 0 plane).
pub const W2: u8 = 2;

/// (−1)^{w−1}: the sign relating x⁰ and x¹ on S^w.
pub fn surface_sign(w: u8) -> f64 {
    debug_assert!(w == W1 || w == W2);
    if w == W1 {
        1.0
    } else {
        -1.0
    }
}

/// (−1)^w: the sign in the restriction identity
/// [∂_i v]^w = ∂_i [v]^w + (−1)^w δ_{1i} [∂₀ v]^w.
pub fn restriction_sign(w: u8) -> f64 {
    -surface_sign(w)
}

/// Continuum description of the truncated wedge and its grid spacings.
#[derive(Debug, Clone, PartialEq)]
pub struct WedgeSpec {
    /// Time extent T of the cap x⁰ ≤ T.
    pub t_max: f64,
    /// Hyperboloid parameter σ of the cap (x⁰)² − (x¹)² ≤ σ².
    pub sigma: f64,
    /// Transverse rectangle [b₂⁻, b₂⁺] for x².
    pub b2: (f64, f64),
    /// Transverse rectangle [b₃⁻, b₃⁺] for x³.
    pub b3: (f64, f64),
    /// Null-direction spacing (both a and b).
    pub h_null: f64,
    /// Transverse spacing (both x² and x³).
    pub h_trans: f64,
    /// Periodic identification of the transverse rectangle's opposite edges.
    pub periodic: bool,
}

/// Relative slack for "on the boundary" mask decisions; keeps nodes that land
/// exactly on a cap inside the closed region despite rounding.
const MASK_SLACK: f64 = 1e-12;

fn divides_evenly(extent: f64, h: f64) -> bool {
    let n = extent / h;
    (n - n.round()).abs() <= 1e-9 * n.round().max(1.0) && n.round() >= 1.0
}

impl WedgeSpec {
    /// Convenience constructor with the transverse box [0,1]² and open
    /// (non-periodic) transverse boundary.
    pub fn new(t_max: f64, sigma: f64, h_null: f64, h_trans: f64) -> Self {
        WedgeSpec {
            t_max,
            sigma,
            b2: (0.0, 1.0),
            b3: (0.0, 1.0),
            h_null,
            h_trans,
            periodic: false,
        }
    }

    /// Checks every invariant and reports all violations, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.t_max > 0.0) {
            problems.push(format!("t_max must be > 0 (got {})", self.t_max));
        }
        if !(self.sigma > 0.0) {
            problems.push(format!("sigma must be > 0 (got {})", self.sigma));
        }
        if !(self.h_null > 0.0) {
            problems.push(format!("h_null must be > 0 (got {})", self.h_null));
        }
        if !(self.h_trans > 0.0) {
            problems.push(format!("h_trans must be > 0 (got {})", self.h_trans));
        }
        if !(self.b2.1 > self.b2.0) {
            problems.push(format!(
                "transverse extent b2 is degenerate: [{}, {}]",
                self.b2.0, self.b2.1
            ));
        }
        if !(self.b3.1 > self.b3.0) {
            problems.push(format!(
                "transverse extent b3 is degenerate: [{}, {}]",
                self.b3.0, self.b3.1
            ));
        }
        if problems.is_empty() {
            if !divides_evenly(2.0 * self.t_max, self.h_null) {
                problems.push(format!(
                    "h_null = {} must divide 2*t_max = {} into whole cells",
                    self.h_null,
                    2.0 * self.t_max
                ));
            }
            if !divides_evenly(self.b2.1 - self.b2.0, self.h_trans) {
                problems.push(format!(
                    "h_trans = {} must divide the b2 extent {}",
                    self.h_trans,
                    self.b2.1 - self.b2.0
                ));
            }
            if !divides_evenly(self.b3.1 - self.b3.0, self.h_trans) {
                problems.push(format!(
                    "h_trans = {} must divide the b3 extent {}",
                    self.h_trans,
                    self.b3.1 - self.b3.0
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Area of the transverse rectangle B.
    pub fn transverse_area(&self) -> f64 {
        (self.b2.1 - self.b2.0) * (self.b3.1 - self.b3.0)
    }
}

/// Discrete wedge: a uniform (a,b) lattice tensored with a uniform transverse
/// lattice, with node masks realizing the caps.
///
/// Node indices are (i_a, i_b, i₂, i₃) with a = i_a·h, b = i_b·h,
/// x² = b₂⁻ + i₂·h_t, x³ = b₃⁻ + i₃·h_t. A node is in the truncated wedge iff
/// i_a + i_b ≤ n_diag and i_a·i_b ≤ ab_limit; both conditions are monotone,
/// so the unmasked set is a lower set and `row_amax` describes it completely.
#[derive(Debug, Clone)]
pub struct WedgeGrid {
    pub spec: WedgeSpec,
    /// Maximal diagonal index: i_a + i_b ≤ n_diag ⟺ x⁰ ≤ T.
    pub n_diag: usize,
    /// i_a·i_b ≤ ab_limit ⟺ a·b ≤ σ² (up to mask slack, precomputed).
    ab_limit: f64,
    /// Largest admissible i_a per i_b (row description of the lower set).
    pub row_amax: Vec<usize>,
    /// Largest admissible i_b per i_a (column description, by symmetry).
    pub col_bmax: Vec<usize>,
    /// Transverse node counts: i₂ ∈ 0..=n2, i₃ ∈ 0..=n3.
    pub n2: usize,
    pub n3: usize,
}

impl WedgeGrid {
    pub fn build(spec: &WedgeSpec) -> Result<WedgeGrid> {
        spec.validate()?;
        let n_diag = (2.0 * spec.t_max / spec.h_null).round() as usize;
        let n2 = ((spec.b2.1 - spec.b2.0) / spec.h_trans).round() as usize;
        let n3 = ((spec.b3.1 - spec.b3.0) / spec.h_trans).round() as usize;
        let ratio = spec.sigma * spec.sigma / (spec.h_null * spec.h_null);
        let ab_limit = ratio * (1.0 + MASK_SLACK) + MASK_SLACK;
        let row_amax: Vec<usize> = (0..=n_diag)
            .map(|ib| {
                let cap_t = n_diag - ib;
                if ib == 0 {
                    cap_t
                } else {
                    let cap_sigma = (ab_limit / ib as f64).floor() as usize;
                    cap_t.min(cap_sigma)
                }
            })
            .collect();
        let col_bmax = row_amax.clone();
        Ok(WedgeGrid {
            spec: spec.clone(),
            n_diag,
            ab_limit,
            row_amax,
            col_bmax,
            n2,
            n3,
        })
    }

    pub fn h(&self) -> f64 {
        self.spec.h_null
    }

    pub fn ht(&self) -> f64 {
        self.spec.h_trans
    }

    /// Membership mask for the truncated wedge 𝒴_{T,σ}.
    pub fn in_wedge(&self, ia: usize, ib: usize) -> bool {
        ia + ib <= self.n_diag && (ia as f64) * (ib as f64) <= self.ab_limit
    }

    /// Mask for the null plane S¹ (a = 0).
    pub fn on_s1(&self, ia: usize, ib: usize) -> bool {
        ia == 0 && self.in_wedge(ia, ib)
    }

    /// Mask for the null plane S² (b = 0).
    pub fn on_s2(&self, ia: usize, ib: usize) -> bool {
        ib == 0 && self.in_wedge(ia, ib)
    }

    /// Mask for the corner Γ (a = b = 0).
    pub fn on_gamma(&self, ia: usize, ib: usize) -> bool {
        ia == 0 && ib == 0
    }

    /// Mask for nodes lying on the hyperboloidal cap P_σ (a·b = σ² up to slack).
    pub fn on_sigma_cap(&self, ia: usize, ib: usize) -> bool {
        let h2 = self.h() * self.h();
        let ab = (ia as f64) * (ib as f64) * h2;
        let s2 = self.spec.sigma * self.spec.sigma;
        self.in_wedge(ia, ib) && (ab - s2).abs() <= MASK_SLACK * s2.max(1.0)
    }

    pub fn a(&self, ia: usize) -> f64 {
        ia as f64 * self.h()
    }

    pub fn b(&self, ib: usize) -> f64 {
        ib as f64 * self.h()
    }

    pub fn x0(&self, ia: usize, ib: usize) -> f64 {
        0.5 * (self.a(ia) + self.b(ib))
    }

    pub fn x1(&self, ia: usize, ib: usize) -> f64 {
        0.5 * (self.b(ib) - self.a(ia))
    }

    pub fn x2(&self, i2: usize) -> f64 {
        self.spec.b2.0 + i2 as f64 * self.ht()
    }

    pub fn x3(&self, i3: usize) -> f64 {
        self.spec.b3.0 + i3 as f64 * self.ht()
    }

    pub fn point(&self, ia: usize, ib: usize, i2: usize, i3: usize) -> [f64; 4] {
        [
            self.x0(ia, ib),
            self.x1(ia, ib),
            self.x2(i2),
            self.x3(i3),
        ]
    }

    /// Number of unmasked (i_a, i_b) pairs.
    pub fn null_node_count(&self) -> usize {
        self.row_amax.iter().map(|&m| m + 1).sum()
    }

    /// Diagonal slice index s = i_a + i_b of the slice G_τ with τ = s·h/2.
    /// Returns the maximal contiguous runs of i_a on that slice (the σ cap can
    /// split a slice into two tails near the top of the wedge).
    pub fn slice_runs(&self, s: usize) -> Vec<(usize, usize)> {
        let mut runs = Vec::new();
        if s > self.n_diag {
            return runs;
        }
        let mut start: Option<usize> = None;
        for ia in 0..=s {
            let ib = s - ia;
            if self.in_wedge(ia, ib) {
                if start.is_none() {
                    start = Some(ia);
                }
            } else if let Some(st) = start.take() {
                runs.push((st, ia - 1));
            }
        }
        if let Some(st) = start {
            runs.push((st, s));
        }
        runs
    }

    /// All diagonal slice indices, 0..=n_diag.
    pub fn slice_count(&self) -> usize {
        self.n_diag + 1
    }

    /// The lattice of the null plane S^w as a surface grid.
    pub fn surface(&self, w: u8) -> SurfaceGrid {
        SurfaceGrid {
            w,
            n1: self.n_diag,
            h1: 0.5 * self.h(),
            b2: self.spec.b2,
            b3: self.spec.b3,
            h_trans: self.ht(),
            n2: self.n2,
            n3: self.n3,
            periodic: self.spec.periodic,
        }
    }
}

/// Lattice of a null plane S^w, parametrized by the arclength station
/// j ∈ 0..=n1 (x¹ = ±j·h/2, x⁰ = j·h/2) and the transverse indices.
///
/// Station j of the w = 1 grid coincides with wedge node (0, j); station j of
/// the w = 2 grid with wedge node (j, 0). Restriction of a wedge field is a
/// row copy, never an interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGrid {
    pub w: u8,
    /// Last station index along the surface.
    pub n1: usize,
    /// Station spacing in x¹ (= h_null/2).
    pub h1: f64,
    pub b2: (f64, f64),
    pub b3: (f64, f64),
    pub h_trans: f64,
    pub n2: usize,
    pub n3: usize,
    pub periodic: bool,
}

impl SurfaceGrid {
    /// Signed x¹ at station j.
    pub fn x1(&self, j: usize) -> f64 {
        surface_sign(self.w) * j as f64 * self.h1
    }

    /// x⁰ at station j (equals |x¹|).
    pub fn x0(&self, j: usize) -> f64 {
        j as f64 * self.h1
    }

    pub fn x2(&self, i2: usize) -> f64 {
        self.b2.0 + i2 as f64 * self.h_trans
    }

    pub fn x3(&self, i3: usize) -> f64 {
        self.b3.0 + i3 as f64 * self.h_trans
    }

    /// Ambient coordinates of station (j, i2, i3).
    pub fn point(&self, j: usize, i2: usize, i3: usize) -> [f64; 4] {
        [self.x0(j), self.x1(j), self.x2(i2), self.x3(i3)]
    }

    /// Ambient coordinates of the surface point with given intrinsic (x¹,x²,x³).
    pub fn embed(&self, x1: f64, x2: f64, x3: f64) -> [f64; 4] {
        [surface_sign(self.w) * x1, x1, x2, x3]
    }
}

/// Constants of the causal sub-domain 𝒟(C, M, B) in which every backward cone
/// from an interior point reaches the data surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CausalBounds {
    pub c: f64,
    pub m: f64,
    pub b: f64,
    /// Optional contraction-ball radius carried along for reporting.
    pub l: Option<f64>,
}

impl CausalBounds {
    pub fn new(c: f64, m: f64, b: f64) -> Result<Self> {
        if c > 0.0 && m > 0.0 && b > 0.0 {
            Ok(CausalBounds { c, m, b, l: None })
        } else {
            Err(Error::Config(format!(
                "causal bounds must be strictly positive (got C={c}, M={m}, B={b})"
            )))
        }
    }
}

/// Membership in 𝒟(C, M, B): with a = x⁰ − |x¹|, the point qualifies iff
/// 0 < a < M and (a ≤ C|x¹|, or x⁰ < B).
pub fn in_causal_domain(x: [f64; 4], bounds: &CausalBounds) -> bool {
    let depth = x[0] - x[1].abs();
    if !(depth > 0.0 && depth < bounds.m) {
        return false;
    }
    depth <= bounds.c * x[1].abs() || x[0] < bounds.b
}
