//! Empirical Gaussian latent prior with block-diagonal covariance and KS channel ranking.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{check_latent, Encoder};
use crate::error::{Error, Result};
use crate::numerics::RealArray;
use crate::rng::ChainRng;

/// One-sample Kolmogorov–Smirnov test against `N(0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sided KS test against the standard normal with the asymptotic Kolmogorov p-value
/// `2 Σ_{k=1}^{100} (−1)^{k−1} exp(−2k²λ²)`, `λ = √n·D`.
pub fn ks_test(samples: &[f64]) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let statistic = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    Ok(KsResult { statistic, p_value: kolmogorov_survival(n.sqrt() * statistic) })
}

fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.05 {
        return 1.0;
    }
    let sum: f64 = (1..=100)
        .map(|k| {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
        })
        .sum();
    (2.0 * sum).clamp(0.0, 1.0)
}

/// A dense Gaussian block over a subset of flattened latent indices.
#[derive(Clone, Debug)]
pub struct PriorBlock {
    indices: Vec<usize>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl PriorBlock {
    pub fn new(indices: Vec<usize>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != indices.len() || cov.ncols() != indices.len() {
            return Err(Error::Shape(format!("{} indices for a {}×{} block", indices.len(), cov.nrows(), cov.ncols())));
        }
        if (&cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) {
            return Err(Error::InvalidArgument("prior block is not symmetric".into()));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("prior block is not positive definite".into()))?;
        Ok(Self { indices, cov, chol })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

/// `p(z) = N(μpr, Σpr)` with block-diagonal `Σpr`.
#[derive(Clone, Debug)]
pub struct EmpiricalPrior {
    mean: RealArray,
    blocks: Vec<PriorBlock>,
    ranking: Vec<usize>,
    ks: Vec<KsResult>,
}

impl EmpiricalPrior {
    /// Blocks must partition the flattened latent indices.
    pub fn from_blocks(mean: RealArray, blocks: Vec<PriorBlock>) -> Result<Self> {
        let mut seen = vec![false; mean.len()];
        for i in blocks.iter().flat_map(|b| b.indices.iter()) {
            if *i >= seen.len() || std::mem::replace(&mut seen[*i], true) {
                return Err(Error::InvalidArgument(format!("latent index {i} is out of range or repeated")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument("prior blocks do not cover the latent".into()));
        }
        Ok(Self { mean, blocks, ranking: Vec::new(), ks: Vec::new() })
    }

    /// `N(0, I)` over `shape`.
    pub fn standard(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        let blocks = (0..n)
            .map(|i| PriorBlock::new(vec![i], DMatrix::identity(1, 1)).expect("unit block"))
            .collect();
        Self::from_blocks(RealArray::zeros(shape), blocks).expect("partition")
    }

    /// Fits mean and block covariance to latent samples of shape `[D, L1, L2]`.
    ///
    /// Channels are ranked by ascending KS p-value against `N(0, 1)` (pooled over positions,
    /// ties broken by larger statistic); the `k` least Gaussian share one dense block and
    /// every other channel gets its own spatial block. Each block is regularized by
    /// `1e-6 × mean diagonal`.
    pub fn from_samples(samples: &[RealArray], k: usize) -> Result<Self> {
        let first = samples.first().ok_or(Error::TooFewSamples { needed: 2, got: 0 })?;
        let shape = first.shape().to_vec();
        if shape.len() != 3 {
            return Err(Error::Shape(format!("latent samples must be [D, L1, L2], got {shape:?}")));
        }
        let (d, plane) = (shape[0], shape[1] * shape[2]);
        if k > d {
            return Err(Error::InvalidArgument(format!("K = {k} exceeds {d} channels")));
        }
        for s in samples {
            check_latent(&shape, s)?;
        }
        let largest = if k > 0 { k * plane } else { plane };
        if samples.len() < largest.max(2) {
            return Err(Error::Rank { required: largest.max(2), got: samples.len() });
        }
        let t = samples.len() as f64;
        let mut mean = vec![0.0; first.len()];
        for s in samples {
            mean.iter_mut().zip(s.data()).for_each(|(m, v)| *m += v / t);
        }

        let ks: Vec<KsResult> = (0..d)
            .map(|c| {
                let pooled: Vec<f64> =
                    samples.iter().flat_map(|s| s.data()[c * plane..(c + 1) * plane].iter().copied()).collect();
                ks_test(&pooled)
            })
            .collect::<Result<_>>()?;
        let mut ranking: Vec<usize> = (0..d).collect();
        ranking.sort_by(|&a, &b| {
            ks[a].p_value.total_cmp(&ks[b].p_value).then(ks[b].statistic.total_cmp(&ks[a].statistic))
        });

        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut joint: Vec<usize> = ranking[..k].to_vec();
        joint.sort_unstable();
        if !joint.is_empty() {
            groups.push(joint.iter().flat_map(|&c| c * plane..(c + 1) * plane).collect());
        }
        let mut rest: Vec<usize> = ranking[k..].to_vec();
        rest.sort_unstable();
        groups.extend(rest.iter().map(|&c| (c * plane..(c + 1) * plane).collect()));

        let blocks = groups
            .into_iter()
            .map(|idx| {
                let n = idx.len();
                let mut cov = DMatrix::<f64>::zeros(n, n);
                for s in samples {
                    let v = DVector::from_iterator(n, idx.iter().map(|&i| s.data()[i] - mean[i]));
                    cov.ger(1.0, &v, &v, 1.0);
                }
                cov /= t - 1.0;
                let eps = 1e-6 * cov.diagonal().mean();
                let eps = if eps > 0.0 { eps } else { 1e-12 };
                for i in 0..n {
                    cov[(i, i)] += eps;
                }
                cov = (&cov + cov.transpose()) * 0.5;
                PriorBlock::new(idx, cov).map_err(|_| Error::Rank { required: n, got: samples.len() })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut prior = Self::from_blocks(RealArray::new(shape, mean)?, blocks)?;
        prior.ranking = ranking;
        prior.ks = ks;
        Ok(prior)
    }

    pub fn mean(&self) -> &RealArray {
        &self.mean
    }

    pub fn shape(&self) -> &[usize] {
        self.mean.shape()
    }

    pub fn blocks(&self) -> &[PriorBlock] {
        &self.blocks
    }

    /// Attaches a channel ranking and its KS results, e.g. after loading from disk.
    pub fn with_ranking(mut self, ranking: Vec<usize>, ks: Vec<KsResult>) -> Result<Self> {
        let channels = self.mean.shape().first().copied().unwrap_or(0);
        if ranking.len() != ks.len() || ranking.iter().any(|&c| c >= channels) {
            return Err(Error::InvalidArgument(format!("ranking {ranking:?} for {channels} channels")));
        }
        self.ranking = ranking;
        self.ks = ks;
        Ok(self)
    }

    /// Channels from least to most Gaussian (empty unless fitted from samples).
    pub fn ranking(&self) -> &[usize] {
        &self.ranking
    }

    pub fn ks_results(&self) -> &[KsResult] {
        &self.ks
    }

    /// `log N(z; μpr, Σpr)` without the normalizing constant, and `−Σpr⁻¹(z − μpr)`.
    pub fn logpdf_and_grad(&self, z: &RealArray) -> Result<(f64, RealArray)> {
        check_latent(self.mean.shape(), z)?;
        let mut grad = RealArray::zeros(z.shape());
        let mut logp = 0.0;
        for b in &self.blocks {
            let r = DVector::from_iterator(b.indices.len(), b.indices.iter().map(|&i| z.data()[i] - self.mean.data()[i]));
            let sol = b.chol.solve(&r);
            logp -= 0.5 * r.dot(&sol);
            for (&i, v) in b.indices.iter().zip(sol.iter()) {
                grad.data_mut()[i] = -v;
            }
        }
        Ok((logp, grad))
    }

    /// `Σpr · v`.
    pub fn apply_covariance(&self, v: &RealArray) -> Result<RealArray> {
        self.blockwise(v, |b, x| &b.cov * x)
    }

    /// `Σpr⁻¹ · v`.
    pub fn apply_precision(&self, v: &RealArray) -> Result<RealArray> {
        self.blockwise(v, |b, x| b.chol.solve(x))
    }

    fn blockwise(&self, v: &RealArray, f: impl Fn(&PriorBlock, &DVector<f64>) -> DVector<f64>) -> Result<RealArray> {
        check_latent(self.mean.shape(), v)?;
        let mut out = RealArray::zeros(v.shape());
        for b in &self.blocks {
            let x = DVector::from_iterator(b.indices.len(), b.indices.iter().map(|&i| v.data()[i]));
            for (&i, y) in b.indices.iter().zip(f(b, &x).iter()) {
                out.data_mut()[i] = *y;
            }
        }
        Ok(out)
    }

    /// Dense `Σpr` over flattened indices.
    pub fn dense_covariance(&self) -> DMatrix<f64> {
        let n = self.mean.len();
        let mut m = DMatrix::zeros(n, n);
        for b in &self.blocks {
            for (a, &i) in b.indices.iter().enumerate() {
                for (c, &j) in b.indices.iter().enumerate() {
                    m[(i, j)] = b.cov[(a, c)];
                }
            }
        }
        m
    }

    pub fn sample(&self, rng: &mut ChainRng) -> RealArray {
        let mut out = self.mean.clone();
        for b in &self.blocks {
            let e = DVector::from_vec(rng.normals(b.indices.len()));
            let x = b.chol.l() * e;
            for (&i, v) in b.indices.iter().zip(x.iter()) {
                out.data_mut()[i] += v;
            }
        }
        out
    }
}

/// `log p(z)` up to a constant and its gradient.
pub fn prior_logpdf_and_grad(prior: &EmpiricalPrior, z: &RealArray) -> Result<(f64, RealArray)> {
    prior.logpdf_and_grad(z)
}

/// Encodes `t` draws `z ~ q(z|x)` cycling over `dataset` and fits an [`EmpiricalPrior`].
pub fn estimate_empirical_prior(
    encoder: &dyn Encoder,
    dataset: &[RealArray],
    t: usize,
    k: usize,
    seed: u64,
) -> Result<EmpiricalPrior> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    let encoded: Vec<(RealArray, RealArray)> = dataset.iter().map(|x| encoder.encode(x)).collect::<Result<_>>()?;
    let mut rng = ChainRng::derive(seed, 0);
    let samples: Vec<RealArray> = (0..t)
        .map(|i| {
            let (mu, sigma) = &encoded[i % encoded.len()];
            let eps = rng.normals(mu.len());
            RealArray::new(
                mu.shape().to_vec(),
                mu.data().iter().zip(sigma.data()).zip(eps).map(|((m, s), e)| m + s * e).collect(),
            )
        })
        .collect::<Result<_>>()?;
    EmpiricalPrior::from_samples(&samples, k)
}
