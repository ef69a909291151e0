//! Trigonometric test fields with exact derivatives.
//!
//! Randomized smooth functions are used throughout the test suite wherever an
//! identity must hold for "arbitrary smooth data": each is a short sum of
//! sine waves, so values, gradients and Hessians are available in closed form
//! and the only error in a discrete identity is the scheme's own truncation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One wave a·sin(k·x + φ).
#[derive(Debug, Clone)]
pub struct TrigTerm {
    pub amp: f64,
    pub k: [f64; 4],
    pub phase: f64,
}

impl TrigTerm {
    fn arg(&self, x: [f64; 4]) -> f64 {
        self.k[0] * x[0] + self.k[1] * x[1] + self.k[2] * x[2] + self.k[3] * x[3] + self.phase
    }
}

/// Finite sum of waves plus a constant.
#[derive(Debug, Clone, Default)]
pub struct SmoothMap {
    pub offset: f64,
    pub terms: Vec<TrigTerm>,
}

impl SmoothMap {
    pub fn constant(c: f64) -> Self {
        SmoothMap {
            offset: c,
            terms: Vec::new(),
        }
    }

    /// `n_terms` waves with amplitudes summing to at most `amp` and wave
    /// numbers in [−k_max, k_max].
    pub fn random(rng: &mut ChaCha8Rng, n_terms: usize, amp: f64, k_max: f64) -> Self {
        let mut terms = Vec::with_capacity(n_terms);
        for _ in 0..n_terms {
            let mut k = [0.0; 4];
            for v in &mut k {
                *v = (rng.gen::<f64>() * 2.0 - 1.0) * k_max;
            }
            terms.push(TrigTerm {
                amp: rng.gen::<f64>() * amp / n_terms as f64,
                k,
                phase: rng.gen::<f64>() * std::f64::consts::TAU,
            });
        }
        SmoothMap { offset: 0.0, terms }
    }

    pub fn value(&self, x: [f64; 4]) -> f64 {
        let mut v = self.offset;
        for t in &self.terms {
            v += t.amp * t.arg(x).sin();
        }
        v
    }

    /// Exact ∂_μ.
    pub fn grad(&self, x: [f64; 4]) -> [f64; 4] {
        let mut g = [0.0; 4];
        for t in &self.terms {
            let c = t.amp * t.arg(x).cos();
            for mu in 0..4 {
                g[mu] += c * t.k[mu];
            }
        }
        g
    }

    /// Exact ∂_μ∂_ν.
    pub fn hess(&self, x: [f64; 4]) -> [[f64; 4]; 4] {
        let mut h = [[0.0; 4]; 4];
        for t in &self.terms {
            let s = -t.amp * t.arg(x).sin();
            for mu in 0..4 {
                for nu in 0..4 {
                    h[mu][nu] += s * t.k[mu] * t.k[nu];
                }
            }
        }
        h
    }

    /// Exact ∂_μ∂_ν∂_λ.
    pub fn third(&self, x: [f64; 4], mu: usize, nu: usize, la: usize) -> f64 {
        let mut v = 0.0;
        for t in &self.terms {
            v += -t.amp * t.arg(x).cos() * t.k[mu] * t.k[nu] * t.k[la];
        }
        v
    }
}

/// Step for one-sided value-only probes: cube root of machine epsilon, the
/// usual optimum for central differences of smooth functions.
pub const FD_STEP: f64 = 6.055454452393343e-6;

/// Central-difference gradient for evaluators without analytic derivatives.
pub fn fd_grad(f: &dyn Fn([f64; 4]) -> f64, x: [f64; 4], scale: f64) -> [f64; 4] {
    let h = FD_STEP * scale.max(1.0);
    let mut g = [0.0; 4];
    for mu in 0..4 {
        let mut xp = x;
        let mut xm = x;
        xp[mu] += h;
        xm[mu] -= h;
        g[mu] = (f(xp) - f(xm)) / (2.0 * h);
    }
    g
}
