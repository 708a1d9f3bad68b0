//! Noise and entanglement-generation arithmetic.
//!
//! Fidelity is a scalar lower bound throughout: depolarising decay while
//! stored, product rule on swap.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Speed of light in fibre, km/s.
pub const FIBRE_C_KM_S: f64 = 2.0e5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub p: f64,
    pub f_th: f64,
    pub p0: f64,
    pub t_th: u64,
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return invalid(format!("p must be in (0,1], got {}", self.p));
        }
        if !(self.f_th > 0.25 && self.f_th < 1.0) {
            return invalid(format!("F_th must be in (1/4,1), got {}", self.f_th));
        }
        if !(self.p0 > 0.0 && self.p0 <= 1.0) {
            return invalid(format!("P_0 must be in (0,1], got {}", self.p0));
        }
        if self.t_th < 1 {
            return invalid("T_th must be >= 1");
        }
        Ok(())
    }
}

pub fn fidelity_after_storage(p: f64, t: u64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return invalid(format!("p must be in (0,1], got {p}"));
    }
    Ok(fidelity_unchecked(p, t))
}

#[inline]
pub(crate) fn fidelity_unchecked(p: f64, t: u64) -> f64 {
    0.25 + 0.75 * (2.0 * t as f64 * p.ln()).exp()
}

/// Largest `T` with `F(T) > F_th`. `Ok(None)` means storage never
/// degrades (p = 1).
pub fn derive_t_threshold(p: f64, f_th: f64) -> Result<Option<u64>> {
    if !(f_th > 0.25 && f_th < 1.0) {
        return invalid(format!("F_th must be in (1/4,1), got {f_th}"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return invalid(format!("p must be in (0,1], got {p}"));
    }
    if p == 1.0 {
        return Ok(None);
    }
    let bound = (4.0 * f_th / 3.0 - 1.0 / 3.0).ln() / (2.0 * p.ln());
    let mut t = bound.floor().max(0.0) as u64;
    // floor of the bound can land on the wrong side when it is (nearly) integral
    while t > 0 && fidelity_unchecked(p, t) <= f_th {
        t -= 1;
    }
    while fidelity_unchecked(p, t + 1) > f_th {
        t += 1;
    }
    if t == 0 {
        return Err(Error::InvalidParameter(format!(
            "F_th={f_th} is not reachable after a single step with p={p}"
        )));
    }
    Ok(Some(t))
}

/// Probability that all `d` elementary links succeed inside one window.
pub fn window_success_prob(p0: f64, t_th: u64, d: u32) -> f64 {
    let one = -((t_th as f64) * (-p0).ln_1p()).exp_m1();
    one.powi(d as i32)
}

pub fn swap_fidelity(f1: f64, f2: f64) -> f64 {
    f1 * f2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidelityBound {
    pub value: f64,
    pub links_consumed: usize,
    /// worst single-link fidelity on the path
    pub per_link_fidelity: f64,
}

pub fn path_fidelity_bound(link_fidelities: &[f64]) -> Result<FidelityBound> {
    if link_fidelities.is_empty() {
        return invalid("empty path");
    }
    if let Some(f) = link_fidelities.iter().find(|f| !(0.25..=1.0).contains(*f)) {
        return invalid(format!("link fidelity {f} outside [1/4,1]"));
    }
    let value = link_fidelities.iter().copied().fold(1.0, swap_fidelity);
    let worst = link_fidelities.iter().copied().fold(1.0, f64::min);
    Ok(FidelityBound {
        value,
        links_consumed: link_fidelities.len(),
        per_link_fidelity: worst,
    })
}

pub fn step_duration_seconds(dist_phys_km: f64) -> f64 {
    dist_phys_km / FIBRE_C_KM_S
}

// ---------------------------------------------------------------------------
// sampling

/// Steps until one elementary link succeeds (support 1, 2, ...).
pub fn sample_elementary_time<R: Rng + ?Sized>(p0: f64, rng: &mut R) -> u64 {
    if p0 >= 1.0 {
        return 1;
    }
    geometric_failures(p0, rng).saturating_add(1)
}

/// Failures before the first success. `rand_distr`'s sampler cannot set
/// itself up once 1 - p rounds to 1, so very small p is drawn by inversion.
fn geometric_failures<R: Rng + ?Sized>(p: f64, rng: &mut R) -> u64 {
    if p >= 1e-9 {
        return Geometric::new(p).expect("p in (0,1)").sample(rng);
    }
    let u: f64 = 1.0 - rng.random::<f64>();
    let k = (u.ln() / (-p).ln_1p()).floor();
    if k >= u64::MAX as f64 {
        u64::MAX
    } else {
        k as u64
    }
}

/// Elementary success step conditioned on landing in `1..=r`.
pub fn sample_truncated<R: Rng + ?Sized>(p0: f64, r: u64, rng: &mut R) -> u64 {
    if p0 >= 1.0 || r <= 1 {
        return 1;
    }
    let ln_q = (-p0).ln_1p();
    let mass = -(ln_q * r as f64).exp_m1();
    let u: f64 = rng.random();
    let t = ((-u * mass).ln_1p() / ln_q).ceil();
    (t as u64).clamp(1, r)
}

fn sample_failed_windows<R: Rng + ?Sized>(q: f64, rng: &mut R) -> u64 {
    if q >= 1.0 {
        0
    } else if q <= 0.0 {
        u64::MAX
    } else {
        geometric_failures(q, rng)
    }
}

/// How windows are laid out on the time axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WindowMode {
    /// each slot opens its own window on entering generation
    #[default]
    PerSlot,
    /// windows aligned to multiples of T_th on the global clock
    Global,
}

/// Steps (counted from `start`, exclusive) until a batch of elementary
/// links, given as segment counts, all succeed inside a common window.
///
/// Returns the completion offset and the per-entry completion offset
/// within the successful window's time frame.
pub fn sample_batch_ready<R: Rng + ?Sized>(
    p0: f64,
    window: Option<u64>,
    mode: WindowMode,
    start: u64,
    segments: &[u32],
    rng: &mut R,
) -> (u64, Vec<u64>) {
    let total_segments: u64 = segments.iter().map(|&d| d as u64).sum();
    let Some(t) = window else {
        // no expiry: every elementary link just needs to succeed once
        let ready: Vec<u64> = segments
            .iter()
            .map(|&d| {
                (0..d)
                    .map(|_| sample_elementary_time(p0, rng))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        return (ready.iter().copied().max().unwrap_or(0), ready);
    };
    let q_full = if total_segments == 0 {
        1.0
    } else {
        window_success_prob(p0, t, 1).powf(total_segments as f64)
    };

    let mut offset = 0u64;
    let mut len = t;
    if mode == WindowMode::Global {
        // first window may be partial
        let r = (start / t + 1) * t - start;
        if r < t {
            let q_r = window_success_prob(p0, r, 1).powf(total_segments as f64);
            if rng.random::<f64>() < q_r {
                len = r;
            } else {
                offset = r;
            }
        }
    }
    if len == t {
        let w = sample_failed_windows(q_full, rng);
        offset = offset.saturating_add(w.saturating_mul(t));
    }
    let ready: Vec<u64> = segments
        .iter()
        .map(|&d| {
            (0..d)
                .map(|_| sample_truncated(p0, len, rng))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let last = ready.iter().copied().max().unwrap_or(0);
    (
        offset.saturating_add(last),
        ready
            .into_iter()
            .map(|r| offset.saturating_add(r))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::SmallRng;
    use rand::SeedableRng;

    #[test]
    fn fidelity_values() {
        assert_eq!(fidelity_after_storage(1.0, 500).unwrap(), 1.0);
        assert_eq!(fidelity_after_storage(0.7, 0).unwrap(), 1.0);
        let f = fidelity_after_storage(0.9993, 1000).unwrap();
        assert!((f - 0.434857).abs() < 1e-5, "{f}");
        assert!(fidelity_after_storage(0.0, 1).is_err());
        assert!(fidelity_after_storage(1.1, 1).is_err());
        assert!((fidelity_after_storage(0.9993, 10_000_000).unwrap() - 0.25).abs() < 1e-6);
    }

    #[test]
    fn threshold() {
        assert_eq!(derive_t_threshold(0.9993, 0.8).unwrap(), Some(221));
        assert_eq!(derive_t_threshold(0.999845, 0.8).unwrap(), Some(1000));
        assert_eq!(derive_t_threshold(1.0, 0.8).unwrap(), None);
        assert!(derive_t_threshold(0.9993, 0.2).is_err());
        // F_th just below F(1)
        let f1 = fidelity_after_storage(0.99, 1).unwrap();
        assert_eq!(derive_t_threshold(0.99, f1 - 1e-9).unwrap(), Some(1));
    }

    #[test]
    fn window_prob() {
        let q = window_success_prob(0.0003, 1000, 1);
        assert!((q - 0.2592151).abs() < 1e-6);
        assert!((window_success_prob(0.0003, 1000, 2) - 0.0671925).abs() < 1e-6);
        assert!((window_success_prob(0.0003, 1000, 3) - 0.0174173).abs() < 1e-6);
        assert_eq!(window_success_prob(1.0, 10, 5), 1.0);
    }

    #[test]
    fn swaps() {
        assert_eq!(swap_fidelity(1.0, 0.9), 0.9);
        assert!((swap_fidelity(0.95, 0.95) - 0.9025).abs() < 1e-15);
        let b = path_fidelity_bound(&[0.9, 0.9, 0.9]).unwrap();
        assert!((b.value - 0.729).abs() < 1e-12);
        assert_eq!(b.links_consumed, 3);
        assert_eq!(path_fidelity_bound(&[0.8]).unwrap().value, 0.8);
        assert!(path_fidelity_bound(&[]).is_err());
    }

    #[test]
    fn truncated_in_range() {
        let mut rng = SmallRng::seed_from_u64(1);
        for r in [1u64, 2, 7, 1000] {
            for _ in 0..2000 {
                let t = sample_truncated(0.0003, r, &mut rng);
                assert!((1..=r).contains(&t));
            }
        }
    }

    #[test]
    fn batch_p0_one() {
        let mut rng = SmallRng::seed_from_u64(3);
        let (t, r) = sample_batch_ready(1.0, Some(1000), WindowMode::PerSlot, 0, &[3, 1], &mut rng);
        assert_eq!(t, 1);
        assert_eq!(r, vec![1, 1]);
    }

    #[test]
    fn vanishing_probabilities_still_sample() {
        let mut rng = SmallRng::seed_from_u64(4);
        // q ~ 0.26^40: 1 - q rounds to 1
        let (t, _) =
            sample_batch_ready(0.0003, Some(1000), WindowMode::PerSlot, 0, &[40], &mut rng);
        assert!(t > 1_000_000_000_000);
        let p = 1e-12;
        let mean = (0..20_000)
            .map(|_| geometric_failures(p, &mut rng) as f64)
            .sum::<f64>()
            / 20_000.0;
        assert!((mean * p - 1.0).abs() < 0.05, "{mean}");
    }
}
