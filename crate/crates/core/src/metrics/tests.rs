use num_complex::Complex64;

use super::*;
use crate::numerics::DenseMatrix;

fn random_image(rng: &mut ChainRng, h: usize, w: usize) -> RealArray {
    RealArray::from_fn(&[h, w], |_| rng.uniform())
}

#[test]
fn kspace_error_zero_for_consistent_data() {
    let mut rng = ChainRng::seed_from_u64(1);
    let a = DenseMatrix::new(6, 4, (0..24).map(|_| Complex64::new(rng.normal(), rng.normal())).collect()).unwrap();
    let x = ComplexArray::from_fn(&[4], |_| Complex64::new(rng.normal(), 0.0));
    let y = a.apply(&x).unwrap();
    assert_eq!(kspace_abs_error(&x, &a, &y).unwrap(), 0.0);
}

#[test]
fn kspace_error_matches_loop() {
    let mut rng = ChainRng::seed_from_u64(2);
    let a = DenseMatrix::new(6, 4, (0..24).map(|_| Complex64::new(rng.normal(), rng.normal())).collect()).unwrap();
    let x = ComplexArray::from_fn(&[4], |_| Complex64::new(rng.normal(), rng.normal()));
    let y = ComplexArray::from_fn(&[6], |_| Complex64::new(rng.normal(), rng.normal()));
    let mut total = 0.0;
    for i in 0..6 {
        let mut ex = Complex64::new(0.0, 0.0);
        for j in 0..4 {
            ex += a.get(i, j) * x.data()[j];
        }
        total += (ex - y.data()[i]).norm();
    }
    assert!((kspace_abs_error(&x, &a, &y).unwrap() - total / 6.0).abs() <= 1e-12);
}

#[test]
fn identical_images() {
    let mut rng = ChainRng::seed_from_u64(3);
    let r = random_image(&mut rng, 4, 4);
    let m = image_metrics(&r, &r, &[true; 16]).unwrap();
    assert_eq!(m, ImageMetrics { rmse_percent: 0.0, nmse: 0.0, psnr: PSNR_CAP });
}

#[test]
fn constant_offset_psnr() {
    let mut rng = ChainRng::seed_from_u64(4);
    let mut r = random_image(&mut rng, 4, 4);
    r.data_mut()[5] = 1.0;
    let c = 0.03;
    let x = r.map(|v| v + c);
    let m = image_metrics(&x, &r, &[true; 16]).unwrap();
    assert!((m.psnr + 20.0 * c.log10()).abs() <= 1e-10);
}

#[test]
fn metrics_match_direct_formulas() {
    let mut rng = ChainRng::seed_from_u64(5);
    let r = random_image(&mut rng, 5, 3);
    let x = random_image(&mut rng, 5, 3);
    let mask: Vec<bool> = (0..15).map(|i| i % 3 != 0).collect();
    let m = image_metrics(&x, &r, &mask).unwrap();
    let (mut num, mut den, mut err, mut energy) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..15 {
        let d = x.data()[i] - r.data()[i];
        if mask[i] {
            num += d * d;
            den += r.data()[i] * r.data()[i];
        }
        err += d * d;
        energy += r.data()[i] * r.data()[i];
    }
    let peak = r.data().iter().cloned().fold(0.0, f64::max);
    assert!((m.rmse_percent - 100.0 * (num / den).sqrt()).abs() <= 1e-10);
    assert!((m.nmse - err / energy).abs() <= 1e-10);
    assert!((m.psnr - 20.0 * (peak / (err / 15.0).sqrt()).log10()).abs() <= 1e-10);
}

#[test]
fn zero_reference_is_an_error() {
    let z = RealArray::zeros(&[2, 2]);
    assert!(matches!(image_metrics(&z, &z, &[true; 4]), Err(Error::ZeroReference)));
}

fn set_of(samples: Vec<RealArray>) -> SampleSet {
    let reference = RealArray::from_fn(samples[0].shape(), |_| 1.0);
    let n = reference.len();
    SampleSet::new(samples, reference, vec![true; n], 0).unwrap()
}

#[test]
fn pairwise_rmse_cases() {
    let mut rng = ChainRng::seed_from_u64(6);
    let a = random_image(&mut rng, 4, 4);
    let same = set_of(vec![a.clone(); 5]);
    assert_eq!(pairwise_rmse(&same, 100, &mut rng).unwrap().mean, 0.0);

    let b = random_image(&mut rng, 4, 4);
    let pair = set_of(vec![a.clone(), b.clone()]);
    let single = 100.0 * masked_diff_norm(&a, &b, &pair.mask) / 4.0;
    let s = pairwise_rmse(&pair, 50, &mut rng).unwrap();
    assert!((s.mean - single).abs() <= 1e-12 * single);

    assert!(matches!(pairwise_rmse(&set_of(vec![a]), 10, &mut rng), Err(Error::TooFewSamples { needed: 2, got: 1 })));
}

#[test]
fn pair_selection_is_deterministic_and_distinct() {
    let p1 = pair_indices(7, 500, &mut ChainRng::seed_from_u64(7));
    let p2 = pair_indices(7, 500, &mut ChainRng::seed_from_u64(7));
    assert_eq!(p1, p2);
    assert!(p1.iter().all(|&(i, j)| i < j && j < 7));
}

#[test]
fn pairwise_rmse_is_permutation_invariant_for_a_fixed_pair_list() {
    let mut rng = ChainRng::seed_from_u64(8);
    let samples: Vec<RealArray> = (0..6).map(|_| random_image(&mut rng, 3, 3)).collect();
    let perm = [3, 0, 5, 1, 4, 2];
    let pairs = pair_indices(6, 40, &mut ChainRng::seed_from_u64(9));
    let mask = [true; 9];
    let f = |s: &[RealArray], i: usize, j: usize| masked_diff_norm(&s[i], &s[j], &mask);
    let permuted: Vec<RealArray> = perm.iter().map(|&k| samples[k].clone()).collect();
    let mut inv = [0; 6];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    for &(i, j) in &pairs {
        assert_eq!(f(&samples, i, j), f(&permuted, inv[i], inv[j]).max(f(&permuted, inv[j], inv[i])));
    }
}

#[test]
fn statistics_cases() {
    let mut rng = ChainRng::seed_from_u64(10);
    let a = random_image(&mut rng, 3, 4);
    let b = random_image(&mut rng, 3, 4);
    let st = sample_statistics(&[a.clone(), a.clone(), a.clone()], &[], 4).unwrap();
    assert!(st.std.data().iter().all(|&v| v == 0.0));
    let st = sample_statistics(&[a.clone(), b.clone()], &[(1, 2)], 2).unwrap();
    for i in 0..12 {
        let expected = (a.data()[i] - b.data()[i]).abs() / 2f64.sqrt();
        assert!((st.std.data()[i] - expected).abs() <= 1e-15);
    }
    assert_eq!(st.histograms[0].counts.iter().sum::<usize>(), 2);
    assert_eq!(st.histograms[0].pixel, (1, 2));
    assert!(sample_statistics(&[a], &[], 2).is_err());
}

#[test]
fn statistics_match_streaming_computation() {
    let mut rng = ChainRng::seed_from_u64(11);
    let samples: Vec<RealArray> = (0..50).map(|_| random_image(&mut rng, 4, 4)).collect();
    let st = sample_statistics(&samples, &[], 3).unwrap();
    // Welford's update.
    let mut mean = vec![0.0; 16];
    let mut m2 = vec![0.0; 16];
    for (k, s) in samples.iter().enumerate() {
        for i in 0..16 {
            let d = s.data()[i] - mean[i];
            mean[i] += d / (k + 1) as f64;
            m2[i] += d * (s.data()[i] - mean[i]);
        }
    }
    for i in 0..16 {
        assert!((st.mean.data()[i] - mean[i]).abs() <= 1e-12);
        assert!((st.std.data()[i] - (m2[i] / 49.0).sqrt()).abs() <= 1e-12);
    }
}

#[test]
fn directionality_cases() {
    let mut rng = ChainRng::seed_from_u64(12);
    let noise = RealArray::from_fn(&[100, 100], |_| rng.normal());
    let mask = vec![true; 10_000];
    let ratio = directionality_statistic(&noise, &mask, 0).unwrap();
    assert!((0.9..=1.1).contains(&ratio), "{ratio}");

    let rows = RealArray::from_fn(&[8, 8], |i| (i / 8) as f64);
    assert_eq!(directionality_statistic(&rows, &[true; 64], 0).unwrap(), DIRECTIONALITY_CAP);
    assert_eq!(directionality_statistic(&rows, &[true; 64], 1).unwrap(), 0.0);
    assert_eq!(directionality_statistic(&RealArray::zeros(&[8, 8]), &[true; 64], 0).unwrap(), 1.0);
    assert!(matches!(directionality_statistic(&rows, &[false; 64], 0), Err(Error::EmptyRegion)));
}

#[test]
fn mask_threshold_and_closing() {
    let mut img = RealArray::from_fn(&[8, 8], |i| if (2..6).contains(&(i / 8)) && (2..6).contains(&(i % 8)) { 1.0 } else { 0.0 });
    img.data_mut()[3 * 8 + 3] = 0.0; // a hole the closing fills
    let mask = foreground_mask(&img, 0.1).unwrap();
    assert!(mask[3 * 8 + 3]);
    assert!(!mask[0]);
    assert_eq!(mask.iter().filter(|&&m| m).count(), 16);
}

#[test]
fn report_aggregates_are_recomputable() {
    let mut rng = ChainRng::seed_from_u64(13);
    let samples: Vec<RealArray> = (0..5).map(|_| random_image(&mut rng, 4, 4)).collect();
    let set = set_of(samples);
    let k = [0.1, 0.2, 0.3, 0.4, 0.5];
    let ctx = ReportContext { method: "l-mala".into(), r: 2.0, noise_scale: 1.0, pairs: 20, seed: 3 };
    let rep = metrics_report(&set, Some(&k), &ctx).unwrap();
    let rm: Vec<f64> = rep.per_sample.iter().map(|m| m.rmse_percent).collect();
    assert_eq!(rep.rmse_percent, Summary::of(&rm));
    assert_eq!(rep.kspace_error, Some(Summary::of(&k)));
    assert_eq!(rep, metrics_report(&set, Some(&k), &ctx).unwrap());
    let json = serde_json::to_string(&rep).unwrap();
    let back: MetricsReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, rep);
    let mut csv = Vec::new();
    write_csv(&[rep.clone()], &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), 1 + rep.rows().len());
    assert!(text.lines().nth(1).unwrap().starts_with("l-mala,2,1,rmse_percent,"));
}
