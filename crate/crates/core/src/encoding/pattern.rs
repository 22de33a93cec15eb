//! Cartesian phase-encode line masks chosen by point-spread-function quality.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::ChainRng;

/// Number of central k-space lines that every mask samples.
pub const CENTRAL_LINES: usize = 15;

/// Which phase-encode lines (axis 0 of the padded k-space grid) are acquired.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UndersamplingPattern {
    mask: Vec<bool>,
    acceleration: f64,
    #[serde(default = "default_central")]
    central: usize,
}

fn default_central() -> usize {
    CENTRAL_LINES
}

impl UndersamplingPattern {
    pub fn new(mask: Vec<bool>, acceleration: f64) -> Result<Self> {
        if mask.is_empty() || !mask.iter().any(|&m| m) {
            return Err(Error::InvalidArgument("pattern must sample at least one line".into()));
        }
        if !(acceleration >= 1.0) {
            return Err(Error::InvalidArgument(format!("acceleration must be ≥ 1, got {acceleration}")));
        }
        Ok(Self { mask, acceleration, central: CENTRAL_LINES })
    }

    /// Declares how many centered lines the mask guarantees (used to locate the noise region).
    pub fn with_central(mut self, central: usize) -> Result<Self> {
        if central == 0 || !central_range(self.height(), central).all(|i| self.mask[i]) {
            return Err(Error::InvalidArgument(format!("the {central} central lines are not all sampled")));
        }
        self.central = central;
        Ok(self)
    }

    pub fn full(height: usize) -> Self {
        Self { mask: vec![true; height], acceleration: 1.0, central: CENTRAL_LINES }
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn height(&self) -> usize {
        self.mask.len()
    }

    pub fn acceleration(&self) -> f64 {
        self.acceleration
    }

    /// Indices of acquired lines in increasing order.
    pub fn sampled_lines(&self) -> Vec<usize> {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
    }

    pub fn sampled_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// The centered block of always-acquired lines, clipped to the grid.
    pub fn central_lines(&self) -> std::ops::Range<usize> {
        central_range(self.height(), self.central)
    }
}

fn central_range(height: usize, central: usize) -> std::ops::Range<usize> {
    let n = central.min(height);
    let start = (height / 2).saturating_sub(n / 2);
    start..start + n
}

/// `|PSF(0)| / max_{k≠0} |PSF(k)|` with the PSF the inverse DFT of the line mask.
pub fn peak_to_side_ratio(mask: &[bool]) -> f64 {
    let mut buf: Vec<Complex64> = mask.iter().map(|&m| Complex64::new(if m { 1.0 } else { 0.0 }, 0.0)).collect();
    FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
    let side = buf[1..].iter().map(|v| v.norm()).fold(0.0, f64::max);
    if side <= 1e-12 * buf[0].norm() {
        f64::INFINITY
    } else {
        buf[0].norm() / side
    }
}

/// Draws `candidates` random masks and keeps the one with the best PSF peak-to-side ratio.
///
/// Every mask acquires the [`CENTRAL_LINES`] central lines; the rest of the `round(height / R)` budget is
/// spread uniformly without replacement over the remaining lines. Candidate `i` uses its own
/// stream of `seed`, so a larger candidate pool always contains the smaller one.
pub fn generate_pattern(height: usize, r: f64, candidates: usize, seed: u64) -> Result<UndersamplingPattern> {
    generate_pattern_with_center(height, r, candidates, seed, CENTRAL_LINES)
}

/// [`generate_pattern`] with a custom number of guaranteed central lines, for grids too
/// small to afford fifteen.
pub fn generate_pattern_with_center(
    height: usize,
    r: f64,
    candidates: usize,
    seed: u64,
    central: usize,
) -> Result<UndersamplingPattern> {
    if !(r >= 1.0) || candidates == 0 || central == 0 || height < central {
        return Err(Error::InvalidArgument(format!(
            "need R ≥ 1, candidates ≥ 1 and height ≥ {central} (got R = {r}, candidates = {candidates}, height = {height})"
        )));
    }
    let budget = ((height as f64 / r).round() as usize).min(height);
    if budget < central {
        return Err(Error::Infeasible(format!(
            "budget of {budget} lines at R = {r} cannot hold the {central} central lines"
        )));
    }
    let center = central_range(height, central);
    let outer: Vec<usize> = (0..height).filter(|i| !center.contains(i)).collect();
    let mut best: Option<(f64, Vec<bool>)> = None;
    for c in 0..candidates {
        let mut rng = ChainRng::derive(seed, c as u64);
        let mut pool = outer.clone();
        rng.shuffle(&mut pool);
        let mut mask = vec![false; height];
        center.clone().for_each(|i| mask[i] = true);
        pool.iter().take(budget - central).for_each(|&i| mask[i] = true);
        let score = peak_to_side_ratio(&mask);
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, mask));
        }
    }
    let (_, mask) = best.expect("at least one candidate");
    UndersamplingPattern::new(mask, r)?.with_central(central)
}
