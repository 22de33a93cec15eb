//! Synthetic ellipse phantoms with coil maps, bias field and phase.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::encoding::CoilSensitivities;
use crate::error::{Error, Result};
use crate::numerics::{ComplexArray, RealArray};
use crate::rng::ChainRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub size: usize,
    pub ellipses: usize,
    pub coils: usize,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self { size: 32, ellipses: 6, coils: 4, seed: 0 }
    }
}

/// Ground truth for one synthetic acquisition.
#[derive(Clone, Debug)]
pub struct Phantom {
    pub image: RealArray,
    pub coils: CoilSensitivities,
    pub bias: RealArray,
    pub phase: ComplexArray,
}

/// Deterministic phantom for `spec.seed`.
pub fn make_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    if spec.size < 16 {
        return Err(Error::InvalidArgument(format!("phantom size must be ≥ 16, got {}", spec.size)));
    }
    if spec.coils == 0 {
        return Err(Error::InvalidArgument("at least one coil is required".into()));
    }
    let n = spec.size;
    let mut rng = ChainRng::derive(spec.seed, 0);
    let image = ellipse_image(n, spec.ellipses, &mut rng);
    Ok(Phantom {
        image,
        coils: coil_maps(n, spec.coils, &mut ChainRng::derive(spec.seed, 1))?,
        bias: bias_field(n, &mut ChainRng::derive(spec.seed, 2)),
        phase: smooth_phase(n, &mut ChainRng::derive(spec.seed, 3)),
    })
}

/// `count` magnitude phantoms of side `size` for training.
pub fn phantom_dataset(count: usize, size: usize, ellipses: usize, seed: u64) -> Vec<RealArray> {
    (0..count)
        .map(|i| ellipse_image(size, ellipses, &mut ChainRng::derive(seed, 1000 + i as u64)))
        .collect()
}

fn coord(i: usize, n: usize) -> f64 {
    2.0 * (i as f64 + 0.5) / n as f64 - 1.0
}

/// A head-like outer ellipse with smaller inner ellipses of random intensity, in `[0, 1]`.
pub fn ellipse_image(n: usize, ellipses: usize, rng: &mut ChainRng) -> RealArray {
    let mut img = vec![0.0; n * n];
    let paint = |cy: f64, cx: f64, ay: f64, ax: f64, theta: f64, value: f64, img: &mut [f64]| {
        let (s, c) = theta.sin_cos();
        for i in 0..n {
            for j in 0..n {
                let (y, x) = (coord(i, n) - cy, coord(j, n) - cx);
                let (u, v) = (c * x + s * y, -s * x + c * y);
                if (u / ax).powi(2) + (v / ay).powi(2) <= 1.0 {
                    img[i * n + j] += value;
                }
            }
        }
    };
    let outer_y = 0.75 + 0.15 * rng.uniform();
    let outer_x = 0.6 + 0.15 * rng.uniform();
    paint(0.0, 0.0, outer_y, outer_x, 0.0, 0.7, &mut img);
    paint(0.0, 0.0, outer_y - 0.08, outer_x - 0.08, 0.0, -0.3, &mut img);
    for _ in 0..ellipses {
        let cy = (rng.uniform() - 0.5) * outer_y;
        let cx = (rng.uniform() - 0.5) * outer_x;
        let ay = 0.08 + 0.25 * rng.uniform();
        let ax = 0.08 + 0.25 * rng.uniform();
        let theta = PI * rng.uniform();
        let value = 0.6 * rng.uniform() - 0.2;
        paint(cy, cx, ay, ax, theta, value, &mut img);
    }
    RealArray::new(vec![n, n], img.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()).expect("finite phantom")
}

/// Gaussian coil profiles placed around the object, normalized to `SᴴS = I`.
fn coil_maps(n: usize, coils: usize, rng: &mut ChainRng) -> Result<CoilSensitivities> {
    let offset = 2.0 * PI * rng.uniform();
    let maps = ComplexArray::from_fn(&[coils, n, n], |idx| {
        let c = idx / (n * n);
        let (i, j) = ((idx / n) % n, idx % n);
        let angle = offset + 2.0 * PI * c as f64 / coils as f64;
        let (cy, cx) = (1.2 * angle.sin(), 1.2 * angle.cos());
        let d2 = (coord(i, n) - cy).powi(2) + (coord(j, n) - cx).powi(2);
        let mag = (-d2 / 1.5).exp();
        Complex64::from_polar(mag, 0.5 * angle + 0.3 * coord(j, n))
    });
    CoilSensitivities::normalized(maps)
}

/// Second-order polynomial bias rescaled into `[0.8, 1.2]`.
fn bias_field(n: usize, rng: &mut ChainRng) -> RealArray {
    let a: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
    let raw = RealArray::from_fn(&[n, n], |idx| {
        let (y, x) = (coord(idx / n, n), coord(idx % n, n));
        a[0] * x + a[1] * y + a[2] * x * y + a[3] * x * x + a[4] * y * y
    });
    let (lo, hi) = raw.data().iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    let span = (hi - lo).max(1e-12);
    raw.map(|v| 0.8 + 0.4 * (v - lo) / span)
}

/// Unit-modulus phase built from low-frequency sinusoids.
fn smooth_phase(n: usize, rng: &mut ChainRng) -> ComplexArray {
    let (a, b) = (rng.uniform() * PI, rng.uniform() * PI);
    let (fy, fx) = (0.5 + rng.uniform(), 0.5 + rng.uniform());
    ComplexArray::from_fn(&[n, n], |idx| {
        let (y, x) = (coord(idx / n, n), coord(idx % n, n));
        Complex64::from_polar(1.0, a * (PI * fy * y).sin() + b * (PI * fx * x).cos())
    })
}
