//! Persistence of the trained VAE and the empirical prior as array bundles.

use std::path::Path;

use nalgebra::DMatrix;

use super::bundle::ArrayBundle;
use crate::error::{Error, Result};
use crate::numerics::RealArray;
use crate::prior::{ConvArchitecture, ConvDecoder, ConvEncoder, EmpiricalPrior, KsResult, PriorBlock, TrainingReport};

pub fn save_vae(dir: &Path, encoder: &ConvEncoder, decoder: &ConvDecoder, report: Option<&TrainingReport>) -> Result<()> {
    let mut b = ArrayBundle::new();
    for (name, p) in encoder.parameters().into_iter().chain(decoder.parameters()) {
        b.insert_real(name, p.clone())?;
    }
    b.set_meta("architecture", decoder.architecture())?;
    if let Some(r) = report {
        b.set_meta("training", r)?;
    }
    b.write(dir)
}

pub fn load_vae(dir: &Path) -> Result<(ConvEncoder, ConvDecoder)> {
    let b = ArrayBundle::read(dir)?;
    let arch: ConvArchitecture = b.meta("architecture")?;
    let collect = |names: Vec<&str>| names.into_iter().map(|n| b.real(n).cloned()).collect::<Result<Vec<_>>>();
    let encoder = ConvEncoder::from_parameters(arch, collect(ConvEncoder::parameter_names())?)?;
    let decoder = ConvDecoder::from_parameters(arch, collect(ConvDecoder::parameter_names())?)?;
    Ok((encoder, decoder))
}

pub fn save_prior(dir: &Path, prior: &EmpiricalPrior) -> Result<()> {
    let mut b = ArrayBundle::new();
    b.insert_real("mean", prior.mean().clone())?;
    for (i, block) in prior.blocks().iter().enumerate() {
        let idx = block.indices();
        b.insert_real(&format!("block{i}.indices"), RealArray::new(vec![idx.len()], idx.iter().map(|&k| k as f64).collect())?)?;
        let cov = block.covariance();
        // nalgebra is column-major; the bundle stores row-major.
        let data = (0..cov.nrows()).flat_map(|r| (0..cov.ncols()).map(move |c| cov[(r, c)])).collect();
        b.insert_real(&format!("block{i}.covariance"), RealArray::new(vec![cov.nrows(), cov.ncols()], data)?)?;
    }
    b.set_meta("blocks", &prior.blocks().len())?;
    b.set_meta("ranking", &prior.ranking())?;
    b.set_meta("ks", &prior.ks_results())?;
    b.write(dir)
}

pub fn load_prior(dir: &Path) -> Result<EmpiricalPrior> {
    let b = ArrayBundle::read(dir)?;
    let count: usize = b.meta("blocks")?;
    let blocks = (0..count)
        .map(|i| {
            let idx = b.real(&format!("block{i}.indices"))?;
            let cov = b.real(&format!("block{i}.covariance"))?;
            let n = idx.len();
            if cov.shape() != [n, n] || idx.data().iter().any(|v| v.fract() != 0.0 || *v < 0.0) {
                return Err(Error::Format(format!("prior block {i} is malformed")));
            }
            PriorBlock::new(idx.data().iter().map(|&v| v as usize).collect(), DMatrix::from_row_slice(n, n, cov.data()))
        })
        .collect::<Result<Vec<_>>>()?;
    let ranking: Vec<usize> = b.meta("ranking")?;
    let ks: Vec<KsResult> = b.meta("ks")?;
    EmpiricalPrior::from_blocks(b.real("mean")?.clone(), blocks)?.with_ranking(ranking, ks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::Decoder;
    use crate::rng::ChainRng;

    #[test]
    fn vae_round_trip() {
        let arch = ConvArchitecture { image: (16, 16), latent_channels: 2, patch: 4, hidden: 3, sigma_x: 0.1 };
        let mut rng = ChainRng::seed_from_u64(1);
        let enc = ConvEncoder::init(arch, &mut rng).unwrap();
        let dec = ConvDecoder::init(arch, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_vae(dir.path(), &enc, &dec, None).unwrap();
        let (enc2, dec2) = load_vae(dir.path()).unwrap();
        let z = RealArray::from_fn(&dec.latent_shape(), |_| rng.normal());
        assert_eq!(dec.decode(&z).unwrap(), dec2.decode(&z).unwrap());
        let x = dec.decode_real(&z).unwrap();
        use crate::prior::Encoder;
        assert_eq!(enc.encode(&x).unwrap(), enc2.encode(&x).unwrap());
    }

    #[test]
    fn prior_round_trip() {
        let mut rng = ChainRng::seed_from_u64(2);
        let samples: Vec<RealArray> = (0..200).map(|_| RealArray::from_fn(&[3, 2, 2], |_| rng.normal())).collect();
        let prior = EmpiricalPrior::from_samples(&samples, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_prior(dir.path(), &prior).unwrap();
        let back = load_prior(dir.path()).unwrap();
        assert_eq!(back.ranking(), prior.ranking());
        assert_eq!(back.ks_results(), prior.ks_results());
        let z = RealArray::from_fn(&[3, 2, 2], |_| rng.normal());
        assert_eq!(back.logpdf_and_grad(&z).unwrap(), prior.logpdf_and_grad(&z).unwrap());
    }
}
