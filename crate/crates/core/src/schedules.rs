//! Noise schedules and the forward/backward action noising formulas.
//!
//! Time is continuous on `[0, T]`. Training samples `t` uniformly; inference
//! walks a descending uniform grid (see [`ScheduleSpec::inference_grid`]).
//!
//! Two forward processes are supported:
//!
//! * [`NoiseVariant::Drift`]: `ã = sqrt(ᾱ)·a + sqrt(1-ᾱ)·ε`, the usual DDPM
//!   process which shrinks the action towards the origin.
//! * [`NoiseVariant::NoDrift`]: `ã = a + sqrt(1-ᾱ)·ε`, which diffuses the
//!   action in place so the latent stays near the region being looked at.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA_MIN: f64 = 1e-4;
pub const DEFAULT_ALPHA_MAX: f64 = 1.0 - 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleFamily {
    Linear,
    Cos2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseVariant {
    Drift,
    NoDrift,
}

impl NoiseVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseVariant::Drift => "drift",
            NoiseVariant::NoDrift => "no_drift",
        }
    }
}

impl std::fmt::Display for NoiseVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NoiseVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drift" => Ok(NoiseVariant::Drift),
            "no_drift" | "no-drift" | "nodrift" => Ok(NoiseVariant::NoDrift),
            other => Err(Error::Config(format!("unknown noise variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub family: ScheduleFamily,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_alpha_max")]
    pub alpha_max: f64,
    #[serde(default = "default_alpha_min")]
    pub alpha_min: f64,
}

fn default_horizon() -> f64 {
    1.0
}
fn default_alpha_max() -> f64 {
    DEFAULT_ALPHA_MAX
}
fn default_alpha_min() -> f64 {
    DEFAULT_ALPHA_MIN
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self::linear()
    }
}

impl ScheduleSpec {
    pub fn new(
        family: ScheduleFamily,
        horizon: f64,
        alpha_min: f64,
        alpha_max: f64,
    ) -> Result<Self> {
        let spec = Self {
            family,
            horizon,
            alpha_max,
            alpha_min,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn linear() -> Self {
        Self {
            family: ScheduleFamily::Linear,
            horizon: 1.0,
            alpha_max: DEFAULT_ALPHA_MAX,
            alpha_min: DEFAULT_ALPHA_MIN,
        }
    }

    pub fn cos2() -> Self {
        Self {
            family: ScheduleFamily::Cos2,
            ..Self::linear()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.alpha_max > 0.0 && self.alpha_max < 1.0) {
            return Err(Error::Config(format!(
                "alpha_max must lie in (0,1), got {}",
                self.alpha_max
            )));
        }
        if !(self.alpha_min > 0.0 && self.alpha_min < self.alpha_max) {
            return Err(Error::Config(format!(
                "alpha_min must lie in (0, alpha_max), got {}",
                self.alpha_min
            )));
        }
        Ok(())
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::TimeDomain {
                t,
                horizon: self.horizon,
            })
        }
    }

    /// Aggregated schedule coefficient ᾱ(t), clamped to `[alpha_min, alpha_max]`.
    pub fn alpha_bar(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let s = t / self.horizon;
        let raw = match self.family {
            ScheduleFamily::Linear => 1.0 - s,
            ScheduleFamily::Cos2 => (FRAC_PI_2 * s).cos().powi(2),
        };
        Ok(raw.clamp(self.alpha_min, self.alpha_max))
    }

    /// Noise scale `sqrt(1 - ᾱ(t))`.
    pub fn sigma(&self, t: f64) -> Result<f64> {
        Ok((1.0 - self.alpha_bar(t)?).sqrt())
    }

    /// Smallest time at which the unclamped schedule reaches `alpha_bar`.
    ///
    /// Only meaningful for values inside the clamp range.
    pub fn time_for_alpha_bar(&self, alpha_bar: f64) -> Result<f64> {
        if !(self.alpha_min..=self.alpha_max).contains(&alpha_bar) {
            return Err(Error::Config(format!(
                "alpha_bar {alpha_bar} outside [{}, {}]",
                self.alpha_min, self.alpha_max
            )));
        }
        let s = match self.family {
            ScheduleFamily::Linear => 1.0 - alpha_bar,
            ScheduleFamily::Cos2 => alpha_bar.sqrt().acos() / FRAC_PI_2,
        };
        Ok((s * self.horizon).clamp(0.0, self.horizon))
    }

    /// Descending uniform grid `T, T(n-1)/n, ..., T/n` used at inference.
    /// The step taken at `grid[k]` renoises to `grid[k+1]` (or 0 after the last).
    pub fn inference_grid(&self, n_steps: usize) -> Vec<f64> {
        (0..n_steps)
            .map(|k| self.horizon * (n_steps - k) as f64 / n_steps as f64)
            .collect()
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(Error::shape(
            format!("length {}", a.len()),
            format!("length {}", b.len()),
        ))
    }
}

/// `sqrt(ᾱ)·a + sqrt(1-ᾱ)·ε`
pub fn noise_with_drift(a: &[f64], t: f64, eps: &[f64], spec: &ScheduleSpec) -> Result<Vec<f64>> {
    check_dims(a, eps)?;
    let ab = spec.alpha_bar(t)?;
    Ok(drift_mix(a, eps, ab))
}

/// `a + sqrt(1-ᾱ)·ε`
pub fn noise_without_drift(
    a: &[f64],
    t: f64,
    eps: &[f64],
    spec: &ScheduleSpec,
) -> Result<Vec<f64>> {
    check_dims(a, eps)?;
    let ab = spec.alpha_bar(t)?;
    Ok(diffuse(a, eps, ab))
}

pub fn noise(
    variant: NoiseVariant,
    a: &[f64],
    t: f64,
    eps: &[f64],
    spec: &ScheduleSpec,
) -> Result<Vec<f64>> {
    match variant {
        NoiseVariant::Drift => noise_with_drift(a, t, eps, spec),
        NoiseVariant::NoDrift => noise_without_drift(a, t, eps, spec),
    }
}

/// Forward noising at an explicit ᾱ, bypassing the schedule.
pub fn noise_at(variant: NoiseVariant, a: &[f64], alpha_bar: f64, eps: &[f64]) -> Result<Vec<f64>> {
    check_dims(a, eps)?;
    Ok(match variant {
        NoiseVariant::Drift => drift_mix(a, eps, alpha_bar),
        NoiseVariant::NoDrift => diffuse(a, eps, alpha_bar),
    })
}

fn drift_mix(a: &[f64], eps: &[f64], ab: f64) -> Vec<f64> {
    let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
    a.iter().zip(eps).map(|(&x, &e)| sa * x + sn * e).collect()
}

fn diffuse(a: &[f64], eps: &[f64], ab: f64) -> Vec<f64> {
    let sn = (1.0 - ab).sqrt();
    a.iter().zip(eps).map(|(&x, &e)| x + sn * e).collect()
}

/// Point estimate of the clean action from a latent and a predicted noise.
pub fn denoise_point_estimate(
    a_t: &[f64],
    eps_hat: &[f64],
    t: f64,
    spec: &ScheduleSpec,
    variant: NoiseVariant,
) -> Result<Vec<f64>> {
    check_dims(a_t, eps_hat)?;
    let ab = spec.alpha_bar(t)?;
    let sn = (1.0 - ab).sqrt();
    let residual = a_t.iter().zip(eps_hat).map(|(&x, &e)| x - sn * e);
    Ok(match variant {
        NoiseVariant::NoDrift => residual.collect(),
        NoiseVariant::Drift => {
            let inv = 1.0 / ab.sqrt();
            residual.map(|r| r * inv).collect()
        }
    })
}

/// Sample the next latent at `t_prev` around a point estimate.
pub fn renoise(
    a0_hat: &[f64],
    t_prev: f64,
    eps: &[f64],
    spec: &ScheduleSpec,
    variant: NoiseVariant,
) -> Result<Vec<f64>> {
    noise(variant, a0_hat, t_prev, eps, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wide(family: ScheduleFamily) -> ScheduleSpec {
        ScheduleSpec::new(family, 1.0, 1e-9, 1.0 - 1e-9).unwrap()
    }

    #[test]
    fn linear_start_hits_upper_clamp() {
        let s = ScheduleSpec::linear();
        assert!((s.alpha_bar(0.0).unwrap() - 0.9999).abs() < 1e-15);
        assert!((s.alpha_bar(1.0).unwrap() - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn midpoints() {
        assert!((wide(ScheduleFamily::Linear).alpha_bar(0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!((wide(ScheduleFamily::Cos2).alpha_bar(0.5).unwrap() - 0.5).abs() < 1e-15);
        let s = ScheduleSpec::new(ScheduleFamily::Linear, 4.0, 1e-9, 1.0 - 1e-9).unwrap();
        assert!((s.alpha_bar(2.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn out_of_domain_time() {
        let s = ScheduleSpec::linear();
        assert!(matches!(s.alpha_bar(-0.1), Err(Error::TimeDomain { .. })));
        assert!(matches!(s.alpha_bar(1.0001), Err(Error::TimeDomain { .. })));
    }

    #[test]
    fn rejects_bad_clamps() {
        assert!(ScheduleSpec::new(ScheduleFamily::Linear, 1.0, 0.5, 0.4).is_err());
        assert!(ScheduleSpec::new(ScheduleFamily::Linear, 1.0, 0.1, 1.0).is_err());
        assert!(ScheduleSpec::new(ScheduleFamily::Linear, 0.0, 0.1, 0.9).is_err());
    }

    #[test]
    fn monotone_and_bounded() {
        for spec in [ScheduleSpec::linear(), ScheduleSpec::cos2()] {
            let mut prev = f64::INFINITY;
            for i in 0..=1000 {
                let ab = spec.alpha_bar(i as f64 / 1000.0).unwrap();
                assert!(ab <= prev);
                assert!(ab >= spec.alpha_min && ab <= spec.alpha_max);
                prev = ab;
            }
        }
    }

    #[test]
    fn time_for_alpha_bar_inverts() {
        for spec in [ScheduleSpec::linear(), ScheduleSpec::cos2()] {
            for ab in [0.19, 0.36, 0.75] {
                let t = spec.time_for_alpha_bar(ab).unwrap();
                assert!((spec.alpha_bar(t).unwrap() - ab).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_input_scaling() {
        let spec = ScheduleSpec::linear();
        let t = spec.time_for_alpha_bar(0.75).unwrap();
        let out = noise_with_drift(&[0.0, 0.0], t, &[0.3, -1.2], &spec).unwrap();
        assert!((out[0] - 0.15).abs() < 1e-12 && (out[1] + 0.6).abs() < 1e-12);
    }

    #[test]
    fn identity_limit_at_t0() {
        let spec = ScheduleSpec::linear();
        let eps = [1.7, -0.4];
        let out = noise_with_drift(&[0.4, -0.2], 0.0, &eps, &spec).unwrap();
        let bound = (1.0 - spec.alpha_max).sqrt() * (1.7f64.hypot(0.4)) + 1e-4;
        assert!((out[0] - 0.4).hypot(out[1] + 0.2) <= bound);
    }

    #[test]
    fn no_drift_substitution() {
        let spec = ScheduleSpec::linear();
        let t = spec.time_for_alpha_bar(0.75).unwrap();
        let out = noise_without_drift(&[0.4, -0.2], t, &[1.0, 1.0], &spec).unwrap();
        assert!((out[0] - 0.9).abs() < 1e-12 && (out[1] - 0.3).abs() < 1e-12);
        let same = noise_without_drift(&[0.4, -0.2], 0.37, &[0.0, 0.0], &spec).unwrap();
        assert_eq!(same, vec![0.4, -0.2]);
    }

    #[test]
    fn shape_errors() {
        let spec = ScheduleSpec::linear();
        assert!(matches!(
            noise_with_drift(&[0.0], 0.5, &[0.0, 1.0], &spec),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(
            denoise_point_estimate(&[0.0], &[], 0.5, &spec, NoiseVariant::Drift),
            Err(Error::Shape { .. })
        ));
        assert!(renoise(&[0.0, 1.0], 0.5, &[1.0], &spec, NoiseVariant::NoDrift).is_err());
    }

    #[test]
    fn zero_eps_hat() {
        let spec = ScheduleSpec::linear();
        let a = [0.3, -0.8];
        let t = spec.time_for_alpha_bar(0.25).unwrap();
        let nd = denoise_point_estimate(&a, &[0.0, 0.0], t, &spec, NoiseVariant::NoDrift).unwrap();
        assert_eq!(nd, a.to_vec());
        let d = denoise_point_estimate(&a, &[0.0, 0.0], t, &spec, NoiseVariant::Drift).unwrap();
        assert!((d[0] - 0.6).abs() < 1e-12 && (d[1] + 1.6).abs() < 1e-12);
    }

    #[test]
    fn renoise_terminal_and_zero_eps() {
        let spec = ScheduleSpec::linear();
        let a = [0.1, 0.2, -0.3];
        assert_eq!(
            renoise(&a, 0.6, &[0.0; 3], &spec, NoiseVariant::NoDrift).unwrap(),
            a.to_vec()
        );
        let out = renoise(&a, 0.0, &[1.0, -1.0, 1.0], &spec, NoiseVariant::Drift).unwrap();
        let bound = (1.0 - spec.alpha_max).sqrt() * 3f64.sqrt() + 1e-4;
        let err: f64 = out
            .iter()
            .zip(&a)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err <= bound);
    }

    #[test]
    fn grid_descends_to_one_step() {
        let g = ScheduleSpec::linear().inference_grid(4);
        assert_eq!(g, vec![1.0, 0.75, 0.5, 0.25]);
        assert_eq!(ScheduleSpec::linear().inference_grid(1), vec![1.0]);
    }

    #[test]
    fn variant_parse() {
        assert_eq!(
            "no_drift".parse::<NoiseVariant>().unwrap(),
            NoiseVariant::NoDrift
        );
        assert_eq!(
            "drift".parse::<NoiseVariant>().unwrap(),
            NoiseVariant::Drift
        );
        assert!("x".parse::<NoiseVariant>().is_err());
    }
}
