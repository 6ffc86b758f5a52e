//! First-order analysis of the closed loop.
//!
//! Around a point `x`, `NF(x + δ) ≈ NF(x) + J δ`. Replacing the Jacobian by
//! `μ·I`, with `μ = tr(J) / D` the mean diagonal entry, turns the loop update
//! into the scalar recursion `e ← (1 − Δt·λ·μ)·e`. This module estimates `μ`
//! without forming `J`, and evaluates the gain interval and contraction
//! factors that recursion implies.
//!
//! # Estimating μ
//!
//! For Rademacher probes `v` (entries ±1), `E[vᵀ J v] = tr(J)`, and `J v` is
//! available from a forward difference of `NF`. Two probe spaces are offered:
//!
//! * [`ProbeSpace::Full`] perturbs the high-resolution input directly.
//! * [`ProbeSpace::LowRes`] (the default) uses the cyclic identity
//!   `tr(J_SR · J_UR) = tr(J_UR · J_SR)`: probes live in the `d`-dimensional
//!   low-resolution space and the SR output is pulled back through the linear
//!   part of UR. The estimand is identical, but the `D − d` null directions
//!   of `J` no longer contribute variance.
//!
//! The finite-difference step actually realized in floating point,
//! `vᵀ((x + εv) − x)`, is used as the divisor instead of the nominal `ε·n`,
//! so that an identity map estimates exactly one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{dot, ImageTensor};
use crate::nf::NfSystem;

pub const DEFAULT_PROBES: usize = 8;
pub const DEFAULT_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeSpace {
    /// Probes of dimension `D` applied to the input of `NF`.
    Full,
    /// Probes of dimension `d` applied between UR and SR.
    #[default]
    LowRes,
}

/// Randomized estimate of the mean Jacobian diagonal of `NF`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuEstimate {
    pub mu: f64,
    pub probes: usize,
    pub epsilon: f64,
    /// Sample standard deviation of the per-probe values over `√probes`.
    pub stderr: f64,
    pub space: ProbeSpace,
    /// High-resolution dimension `D` the estimate is normalized by.
    pub dim: usize,
    /// Low-resolution dimension `d`, an upper bound on the rank of `J`.
    pub low_res_dim: usize,
}

impl MuEstimate {
    /// `μ·D/d`: the mean Jacobian eigenvalue over the (at most
    /// `d`-dimensional) range of `NF`, assuming the range is full.
    pub fn range_mu(&self) -> f64 {
        self.mu * self.dim as f64 / self.low_res_dim as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuOptions {
    pub probes: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub space: ProbeSpace,
}

impl Default for MuOptions {
    fn default() -> Self {
        MuOptions {
            probes: DEFAULT_PROBES,
            epsilon: DEFAULT_EPSILON,
            seed: 0,
            space: ProbeSpace::default(),
        }
    }
}

type ProbeMap<'a> = dyn Fn(&ImageTensor) -> Result<ImageTensor> + 'a;

/// Estimates `μ = tr(J_NF(x_ref)) / D` with `probes` Rademacher probes in the
/// default probe space.
pub fn estimate_mu(sys: &NfSystem, x_ref: &ImageTensor, probes: usize, epsilon: f64, seed: u64) -> Result<MuEstimate> {
    estimate_mu_with(
        sys,
        x_ref,
        &MuOptions {
            probes,
            epsilon,
            seed,
            space: ProbeSpace::default(),
        },
    )
}

pub fn estimate_mu_with(sys: &NfSystem, x_ref: &ImageTensor, opts: &MuOptions) -> Result<MuEstimate> {
    if opts.probes == 0 {
        return Err(Error::Validation("at least one probe is required".into()));
    }
    if !(opts.epsilon > 0.0 && opts.epsilon.is_finite()) {
        return Err(Error::Validation(format!(
            "finite-difference step must be positive, got {}",
            opts.epsilon
        )));
    }
    let dim = x_ref.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let (base_point, probe_map): (ImageTensor, Box<ProbeMap<'_>>) =
        match opts.space {
            ProbeSpace::Full => (x_ref.clone(), Box::new(|p| sys.apply(p))),
            ProbeSpace::LowRes => (
                sys.ur().apply(x_ref)?,
                Box::new(|p| sys.sr().apply(p)),
            ),
        };
    let probe_dim = base_point.len();
    let base_out = probe_map(&base_point)?;

    let mut samples = Vec::with_capacity(opts.probes);
    for _ in 0..opts.probes {
        let v: Vec<f64> = (0..probe_dim)
            .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let perturbed: Vec<f64> = base_point
            .data()
            .iter()
            .zip(&v)
            .map(|(x, s)| x + opts.epsilon * s)
            .collect();
        let realized: Vec<f64> = perturbed
            .iter()
            .zip(base_point.data())
            .map(|(p, x)| p - x)
            .collect();
        let (h, w, c) = base_point.dims();
        let perturbed = ImageTensor::new(h, w, c, perturbed)?;
        let diff = probe_map(&perturbed)?.sub(&base_out)?;
        let response = match opts.space {
            ProbeSpace::Full => diff,
            ProbeSpace::LowRes => sys.ur().apply_linear(&diff)?,
        };
        let num = dot(&v, response.data()) * probe_dim as f64;
        let den = dot(&v, &realized) * dim as f64;
        samples.push(num / den);
    }

    let n = samples.len() as f64;
    let mu = samples.iter().sum::<f64>() / n;
    let stderr = if samples.len() > 1 {
        let var = samples.iter().map(|s| (s - mu).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    if !mu.is_finite() {
        return Err(Error::Validation("linearization coefficient is not finite".into()));
    }
    Ok(MuEstimate {
        mu,
        probes: opts.probes,
        epsilon: opts.epsilon,
        stderr,
        space: opts.space,
        dim,
        low_res_dim: sys.low_res_dim(dim),
    })
}

/// Open interval of gains whose Frobenius contraction factor is below one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaBounds {
    pub lo: f64,
    pub hi: f64,
    pub degenerate: bool,
    center: f64,
}

impl LambdaBounds {
    /// `1 / (Δt·μ)`, the gain that cancels the linearized error in one step.
    pub fn midpoint(&self) -> f64 {
        self.center
    }

    pub fn contains(&self, lambda: f64) -> bool {
        self.lo < lambda && lambda < self.hi
    }
}

/// Gains satisfying `|1 − Δt·λ·μ|·√D < 1`:
/// `(1 ∓ 1/√D) / (Δt·μ)`, endpoints swapped when `μ < 0`.
pub fn lambda_bounds(mu: f64, dt: f64, dim: usize) -> Result<LambdaBounds> {
    if mu == 0.0 {
        return Err(Error::SingularGain(mu));
    }
    if !mu.is_finite() {
        return Err(Error::Validation(format!("mu must be finite, got {mu}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Validation(format!("dt must be positive, got {dt}")));
    }
    if dim == 0 {
        return Err(Error::Validation("dimension must be at least 1".into()));
    }
    let center = 1.0 / (dt * mu);
    let r = 1.0 / (dim as f64).sqrt();
    let a = (1.0 - r) / (dt * mu);
    let b = (1.0 + r) / (dt * mu);
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    Ok(LambdaBounds {
        lo,
        hi,
        degenerate: hi - lo < 1e-12,
        center,
    })
}

/// Contraction factors of the linearized update for gain `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionFactors {
    /// `|1 − Δt·λ·μ|·√D`
    pub frobenius: f64,
    /// `|1 − Δt·λ·μ|`
    pub spectral: f64,
}

pub fn contraction_factors(lambda: f64, mu: f64, dt: f64, dim: usize) -> ContractionFactors {
    let spectral = (1.0 - dt * lambda * mu).abs();
    ContractionFactors {
        frobenius: spectral * (dim as f64).sqrt(),
        spectral,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resample::{ResampleMethod, ScaleFactor};
    use crate::sr::SrOperator;
    use crate::ur::UrOperator;

    fn identity_system() -> NfSystem {
        NfSystem::new(
            UrOperator::downsample(ResampleMethod::Area, ScaleFactor::X1),
            SrOperator::nearest(ScaleFactor::X1),
        )
        .unwrap()
    }

    fn scaled_identity(c: f64) -> NfSystem {
        NfSystem::new(
            UrOperator::downsample(ResampleMethod::Area, ScaleFactor::X1),
            SrOperator::custom(ScaleFactor::X1, move |x| Ok(x.scale(c))),
        )
        .unwrap()
    }

    fn probe_image() -> ImageTensor {
        ImageTensor::from_fn(6, 6, 1, |y, x, _| ((y * 5 + x * 3) % 7) as f64 / 7.0).unwrap()
    }

    #[test]
    fn identity_estimates_exactly_one() {
        for space in [ProbeSpace::Full, ProbeSpace::LowRes] {
            let opts = MuOptions { probes: 8, epsilon: 1e-3, seed: 3, space };
            let est = estimate_mu_with(&identity_system(), &probe_image(), &opts).unwrap();
            assert_eq!(est.mu, 1.0, "{space:?}");
            assert_eq!(est.stderr, 0.0);
        }
    }

    #[test]
    fn scaled_identity_estimates_scale() {
        for space in [ProbeSpace::Full, ProbeSpace::LowRes] {
            let opts = MuOptions { probes: 8, epsilon: 1e-3, seed: 11, space };
            let est = estimate_mu_with(&scaled_identity(0.7), &probe_image(), &opts).unwrap();
            assert!((est.mu - 0.7).abs() < 1e-9, "{space:?}: {}", est.mu);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let sys = identity_system();
        let x = probe_image();
        assert!(estimate_mu(&sys, &x, 0, 1e-3, 0).is_err());
        assert!(estimate_mu(&sys, &x, 4, 0.0, 0).is_err());
        assert!(estimate_mu(&sys, &x, 4, -1e-3, 0).is_err());
    }

    #[test]
    fn seeded_estimates_repeat() {
        let sys = NfSystem::new(
            UrOperator::downsample(ResampleMethod::Area, ScaleFactor::X2),
            SrOperator::bilinear(ScaleFactor::X2),
        )
        .unwrap();
        let x = probe_image();
        let a = estimate_mu(&sys, &x, 5, 1e-3, 9).unwrap();
        let b = estimate_mu(&sys, &x, 5, 1e-3, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.low_res_dim, 9);
        assert_eq!(a.dim, 36);
    }

    #[test]
    fn bounds_examples() {
        let b = lambda_bounds(1.0, 1.0, 4).unwrap();
        assert_eq!((b.lo, b.hi), (0.5, 1.5));
        let b = lambda_bounds(-1.0, 1.0, 4).unwrap();
        assert_eq!((b.lo, b.hi), (-1.5, -0.5));
        let b = lambda_bounds(2.0, 0.5, 1).unwrap();
        assert_eq!((b.lo, b.hi), (0.0, 2.0));
        assert!(matches!(lambda_bounds(0.0, 1.0, 4), Err(Error::SingularGain(_))));
        assert!(lambda_bounds(1.0, 0.0, 4).is_err());
        assert!(lambda_bounds(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn factor_examples() {
        let f = contraction_factors(2.0, 0.5, 1.0, 16);
        assert_eq!((f.spectral, f.frobenius), (0.0, 0.0));
        let f = contraction_factors(0.0, 0.3, 1.0, 16);
        assert_eq!((f.spectral, f.frobenius), (1.0, 4.0));
        let b = lambda_bounds(0.8, 0.5, 25).unwrap();
        for end in [b.lo, b.hi] {
            let f = contraction_factors(end, 0.8, 0.5, 25);
            assert!((f.frobenius - 1.0).abs() < 1e-12);
        }
    }
}
