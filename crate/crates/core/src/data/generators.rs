//! Synthetic manifold samples.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, DatasetMeta, NormalizationRecord};
use super::transforms::normalize_unit_cube;
use crate::error::{CaeError, Result};

/// Where Gaussian noise enters the toy surface sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseStage {
    /// Added to the raw surface coordinates, before unit-cube scaling.
    #[default]
    Raw,
    /// Added after the sample has been scaled into the unit cube.
    Normalized,
}

/// The toy surface `(4x sin y, x y^2, 20 cos x / (y^2 + 1))`.
pub fn toy_surface(x: f64, y: f64) -> [f64; 3] {
    [4.0 * x * y.sin(), x * y * y, 20.0 * x.cos() / (y * y + 1.0)]
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        return Err(CaeError::Argument("a dataset needs at least one point".into()));
    }
    Ok(())
}

/// Uniform sample of the toy surface over `[1, 2]^2`, scaled into `[0, 1]^3`.
/// Labels hold the parameters `x` and `y`.
pub fn gen_toy(n: usize, seed: u64, sigma: f64) -> Result<Dataset> {
    gen_toy_staged(n, seed, sigma, NoiseStage::Raw)
}

pub fn gen_toy_staged(n: usize, seed: u64, sigma: f64, stage: NoiseStage) -> Result<Dataset> {
    gen_toy_scaled(n, seed, sigma, stage, None)
}

/// As [`gen_toy_staged`], scaled with a given record (for example that of a
/// training sample) instead of the sample's own extremes.
pub fn gen_toy_scaled(
    n: usize,
    seed: u64,
    sigma: f64,
    stage: NoiseStage,
    scaling: Option<&NormalizationRecord>,
) -> Result<Dataset> {
    check_count(n)?;
    if !(sigma >= 0.0) {
        return Err(CaeError::Argument(format!("noise level must be >= 0, got {sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::with_capacity(2 * n);
    let mut points = Vec::with_capacity(3 * n);
    for _ in 0..n {
        let x = rng.random_range(1.0..=2.0);
        let y = rng.random_range(1.0..=2.0);
        params.extend([x, y]);
        points.extend(toy_surface(x, y));
    }
    let mut noise = |points: &mut Vec<f64>| {
        if sigma > 0.0 {
            for v in points.iter_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *v += sigma * e;
            }
        }
    };
    if stage == NoiseStage::Raw {
        noise(&mut points);
    }
    let raw = Dataset::with_labels(points, 3, params, vec!["x".into(), "y".into()])?;
    let (normalized, record) = match scaling {
        Some(rec) => {
            let pts: Vec<f64> = raw.points().flat_map(|p| rec.apply(p)).collect();
            (raw.map_points(3, pts)?, rec.clone())
        }
        None => normalize_unit_cube(&raw)?,
    };
    let mut points = normalized.raw_points().to_vec();
    if stage == NoiseStage::Normalized {
        noise(&mut points);
    }
    let mut out = normalized.map_points(3, points)?;
    out.meta = DatasetMeta {
        generator: "toy".into(),
        seed: Some(seed),
        sigma,
        normalization: Some(record),
        unitary: None,
    };
    Ok(out)
}

/// Uniform sample of the unit circle. Label `theta` is the angle.
pub fn gen_circle(n: usize, seed: u64) -> Result<Dataset> {
    check_count(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(2 * n);
    let mut theta = Vec::with_capacity(n);
    for _ in 0..n {
        let t = rng.random_range(0.0..2.0 * PI);
        points.extend(circle_point(t));
        theta.push(t);
    }
    let mut out = Dataset::with_labels(points, 2, theta, vec!["theta".into()])?;
    out.meta = DatasetMeta {
        generator: "circle".into(),
        seed: Some(seed),
        ..DatasetMeta::default()
    };
    Ok(out)
}

pub fn circle_point(theta: f64) -> [f64; 2] {
    [theta.cos(), theta.sin()]
}

/// Unscaled S-curve point for parameter `t` in `[-3pi/2, 3pi/2]` and height `y`.
pub fn s_curve_point(t: f64, y: f64) -> [f64; 3] {
    [t.sin(), y, t.signum() * (t.cos() - 1.0)]
}

/// Uniform scaling applied to S-curve samples so they fill `[-4, 4]^3`
/// along the widest axis: `p -> 2 (x, y - 1, z)`.
pub fn s_curve_rescale(p: [f64; 3]) -> [f64; 3] {
    [2.0 * p[0], 2.0 * (p[1] - 1.0), 2.0 * p[2]]
}

/// S-curve with `t ~ U[-3pi/2, 3pi/2]` and `y ~ U[0, 2]`. Labels are `t`
/// (unit-speed, so an arc-length coordinate) and `y`.
pub fn gen_s_curve(n: usize, seed: u64) -> Result<Dataset> {
    check_count(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(3 * n);
    let mut labels = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let t = rng.random_range(-1.5 * PI..=1.5 * PI);
        let y = rng.random_range(0.0..=2.0);
        points.extend(s_curve_rescale(s_curve_point(t, y)));
        labels.extend([t, y]);
    }
    let mut out = Dataset::with_labels(points, 3, labels, vec!["t".into(), "y".into()])?;
    out.meta = DatasetMeta {
        generator: "s_curve".into(),
        seed: Some(seed),
        ..DatasetMeta::default()
    };
    Ok(out)
}

/// Swiss roll `(t cos t, h, t sin t)` with `t = 1.5 pi (1 + 2u)` and `h ~ U[0, 21]`.
pub fn gen_swiss_roll(n: usize, seed: u64) -> Result<Dataset> {
    check_count(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(3 * n);
    let mut labels = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let t = 1.5 * PI * (1.0 + 2.0 * rng.random::<f64>());
        let h = 21.0 * rng.random::<f64>();
        points.extend([t * t.cos(), h, t * t.sin()]);
        labels.extend([t, h]);
    }
    let mut out = Dataset::with_labels(points, 3, labels, vec!["t".into(), "h".into()])?;
    out.meta = DatasetMeta {
        generator: "swiss_roll".into(),
        seed: Some(seed),
        ..DatasetMeta::default()
    };
    Ok(out)
}

/// A curved three-dimensional hypersurface in `R^4`:
/// `(u, v, w) -> (u, v, w, (sin(pi u) cos(pi v) + w^2) / 2)` over `[0, 1]^3`.
pub fn gen_hypersurface3(n: usize, seed: u64) -> Result<Dataset> {
    check_count(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(4 * n);
    let mut labels = Vec::with_capacity(3 * n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        let w: f64 = rng.random();
        let h = 0.5 * ((PI * u).sin() * (PI * v).cos() + w * w);
        points.extend([u, v, w, h]);
        labels.extend([u, v, w]);
    }
    let mut out = Dataset::with_labels(points, 4, labels, vec!["u".into(), "v".into(), "w".into()])?;
    out.meta = DatasetMeta {
        generator: "hypersurface3".into(),
        seed: Some(seed),
        ..DatasetMeta::default()
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_surface_values() {
        let p = toy_surface(1.0, 1.0);
        assert!((p[0] - 3.365_883_939_231_586).abs() < 1e-12);
        assert_eq!(p[1], 1.0);
        assert!((p[2] - 5.403_023_058_681_398).abs() < 1e-12);
        assert_eq!(toy_surface(2.0, 1.0)[1], 2.0);
    }

    #[test]
    fn toy_is_deterministic_and_in_unit_cube() {
        let a = gen_toy(300, 5, 0.0).unwrap();
        let b = gen_toy(300, 5, 0.0).unwrap();
        assert_eq!(a, b);
        for p in a.points() {
            assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_eq!(a.label_names(), &["x".to_string(), "y".to_string()]);
        let noisy = gen_toy(300, 5, 0.1).unwrap();
        assert_ne!(noisy, a);
        let staged = gen_toy_staged(300, 5, 0.1, NoiseStage::Normalized).unwrap();
        assert!(staged.points().flatten().any(|v| *v < 0.0 || *v > 1.0));
    }

    #[test]
    fn toy_points_lie_on_the_normalized_surface() {
        let d = gen_toy(50, 2, 0.0).unwrap();
        let rec = d.meta.normalization.clone().unwrap();
        for i in 0..d.len() {
            let expect = rec.apply(&toy_surface(d.label(i, 0), d.label(i, 1)));
            for (a, b) in d.point(i).iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn circle_points_are_unit() {
        assert_eq!(circle_point(0.0), [1.0, 0.0]);
        let d = gen_circle(400, 3).unwrap();
        for p in d.points() {
            assert!(((p[0] * p[0] + p[1] * p[1]).sqrt() - 1.0).abs() < 1e-12);
        }
        let m = d.mean();
        let bound = 4.0 / (d.len() as f64).sqrt();
        assert!(m[0].abs() < bound && m[1].abs() < bound);
    }

    #[test]
    fn s_curve_parametrization() {
        assert_eq!(s_curve_point(0.0, 0.0), [0.0, 0.0, 0.0]);
        assert!((s_curve_point(PI / 2.0, 0.3)[0] - 1.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let t = rng.random_range(-1.5 * PI..=1.5 * PI);
            let p = s_curve_point(t, 1.0);
            let r = p[0] * p[0] + (p[2].abs() - 1.0).powi(2);
            assert!((r - 1.0).abs() < 1e-12);
        }
        let d = gen_s_curve(500, 1).unwrap();
        assert!(d.points().flatten().all(|v| v.abs() <= 4.0 + 1e-12));
    }

    #[test]
    fn zero_points_is_an_error() {
        assert!(gen_circle(0, 0).is_err());
        assert!(gen_toy(0, 0, 0.0).is_err());
    }
}
