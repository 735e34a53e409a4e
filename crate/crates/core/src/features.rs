//! The 114-element feature vector.
//!
//! Layout, with channels in [`Channel::ALL`] order:
//!
//! | indices  | content                                                   |
//! |----------|-----------------------------------------------------------|
//! | 0..36    | time domain (max, min, mean) per channel, channel-major    |
//! | 36..72   | DFT magnitude (max, min, mean) per channel                 |
//! | 72..84   | time-domain energy per channel                             |
//! | 84..96   | frequency-domain energy per channel                        |
//! | 96..114  | per-axis correlation for the sensor pairs in [`CORRELATION_PAIRS`] |
//!
//! Every sequence is first shifted so it starts at zero. The spectrum is the
//! magnitude of the DFT after zero-padding to the next power of two, and all
//! bins (not just the first half) enter the statistics.

use std::cell::RefCell;
use std::io::Write;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Channel, PinEntrySegment, Sensor, CHANNEL_COUNT};

pub const FEATURE_COUNT: usize = 114;

pub const TIME_STATS: usize = 0;
pub const FREQ_STATS: usize = 36;
pub const TIME_ENERGY: usize = 72;
pub const FREQ_ENERGY: usize = 84;
pub const CORRELATIONS: usize = 96;

/// Sensor pairs whose per-axis correlations fill indices 96..114.
pub const CORRELATION_PAIRS: [(Sensor, Sensor); 6] = [
    (Sensor::Ori, Sensor::Acc),
    (Sensor::Ori, Sensor::AccG),
    (Sensor::Ori, Sensor::RotR),
    (Sensor::Acc, Sensor::AccG),
    (Sensor::Acc, Sensor::RotR),
    (Sensor::AccG, Sensor::RotR),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: String,
    pub user_id: String,
}

/// Subtracts the first value from every element.
pub fn preprocess(seq: &[f64]) -> Result<Vec<f64>> {
    let first = *seq.first().ok_or_else(|| Error::invalid("empty sequence"))?;
    Ok(seq.iter().map(|v| v - first).collect())
}

/// `(max, min, mean)` of a non-empty, NaN-free sequence.
pub fn basic_stats(seq: &[f64]) -> Result<(f64, f64, f64)> {
    if seq.is_empty() {
        return Err(Error::invalid("empty sequence"));
    }
    if seq.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("sequence contains NaN"));
    }
    let (mut max, mut min, mut sum) = (f64::NEG_INFINITY, f64::INFINITY, 0.0);
    for &v in seq {
        max = max.max(v);
        min = min.min(v);
        sum += v;
    }
    Ok((max, min, sum / seq.len() as f64))
}

pub fn energy(seq: &[f64]) -> Result<f64> {
    if seq.is_empty() {
        return Err(Error::invalid("empty sequence"));
    }
    Ok(seq.iter().map(|v| v * v).sum())
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Magnitudes of all `N` bins of the DFT of `seq` zero-padded to
/// `N = seq.len().next_power_of_two()`.
pub fn dft_magnitude(seq: &[f64]) -> Result<Vec<f64>> {
    if seq.len() < 2 {
        return Err(Error::invalid(format!(
            "DFT needs at least 2 samples, got {}",
            seq.len()
        )));
    }
    let n = seq.len().next_power_of_two();
    let mut buf: Vec<Complex<f64>> = seq.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(n, Complex::new(0.0, 0.0));
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n));
    fft.process(&mut buf);
    Ok(buf.iter().map(|c| c.norm()).collect())
}

/// Pearson correlation with sample covariance. Unequal lengths are truncated
/// to the shorter sequence; a zero-variance input yields 0.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len().min(b.len());
    if n < 2 {
        return Err(Error::invalid(format!(
            "correlation needs at least 2 paired samples, got {n}"
        )));
    }
    let (a, b) = (&a[..n], &b[..n]);
    let mean_a = a.iter().sum::<f64>() / n as f64;
    let mean_b = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // The 1/(n-1) factors cancel.
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

fn per_channel<T>(c: Channel, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Channel {
        channel: c,
        source: Box::new(e),
    })
}

/// Builds the feature vector of one segment.
pub fn extract(segment: &PinEntrySegment) -> Result<FeatureVector> {
    segment.check()?;
    let mut values = vec![0.0; FEATURE_COUNT];
    let mut pre: Vec<Vec<f64>> = Vec::with_capacity(CHANNEL_COUNT);
    for c in Channel::ALL {
        let i = c.index();
        let seq = per_channel(c, preprocess(segment.channel(c)))?;
        let (max, min, mean) = per_channel(c, basic_stats(&seq))?;
        values[TIME_STATS + 3 * i..TIME_STATS + 3 * i + 3].copy_from_slice(&[max, min, mean]);
        values[TIME_ENERGY + i] = per_channel(c, energy(&seq))?;

        let spectrum = per_channel(c, dft_magnitude(&seq))?;
        let (max, min, mean) = per_channel(c, basic_stats(&spectrum))?;
        values[FREQ_STATS + 3 * i..FREQ_STATS + 3 * i + 3].copy_from_slice(&[max, min, mean]);
        values[FREQ_ENERGY + i] = per_channel(c, energy(&spectrum))?;
        pre.push(seq);
    }
    for (p, (left, right)) in CORRELATION_PAIRS.iter().enumerate() {
        for axis in 0..3 {
            let (cl, cr) = (left.channel(axis), right.channel(axis));
            values[CORRELATIONS + 3 * p + axis] =
                per_channel(cl, correlation(&pre[cl.index()], &pre[cr.index()]))?;
        }
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("feature {i} is not finite")));
    }
    Ok(FeatureVector {
        values,
        label: segment.label.clone(),
        user_id: segment.user_id.clone(),
    })
}

/// Extracts every segment in parallel; output order matches input order.
pub fn extract_all<'a, I>(segments: I) -> Result<Vec<FeatureVector>>
where
    I: IntoParallelIterator<Item = &'a PinEntrySegment>,
    I::Iter: IndexedParallelIterator,
{
    segments.into_par_iter().map(extract).collect()
}

/// Column name of feature `i` in the CSV export (`f000`..`f113`).
pub fn feature_name(i: usize) -> String {
    format!("f{i:03}")
}

/// Writes the feature matrix as CSV with header `label,user_id,f000..f113`.
/// Values use the shortest representation that parses back to the same f64.
pub fn write_feature_csv<W: Write>(out: W, rows: &[FeatureVector]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["label".to_string(), "user_id".to_string()];
    header.extend((0..FEATURE_COUNT).map(feature_name));
    w.write_record(&header)?;
    for row in rows {
        if row.values.len() != FEATURE_COUNT {
            return Err(Error::Dimension {
                expected: FEATURE_COUNT,
                actual: row.values.len(),
            });
        }
        let mut rec = Vec::with_capacity(FEATURE_COUNT + 2);
        rec.push(row.label.clone());
        rec.push(row.user_id.clone());
        rec.extend(row.values.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<feature csv>", e))?;
    Ok(())
}

pub fn read_feature_csv<R: std::io::Read>(input: R) -> Result<Vec<FeatureVector>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let expected: Vec<String> = ["label".to_string(), "user_id".to_string()]
        .into_iter()
        .chain((0..FEATURE_COUNT).map(feature_name))
        .collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::invalid(
            "feature CSV header must be label,user_id,f000..f113",
        ));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let values = rec
            .iter()
            .skip(2)
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line: i + 2,
                        message: format!("bad feature value {s:?}"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(FeatureVector {
            values,
            label: rec[0].to_string(),
            user_id: rec[1].to_string(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_seq(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-10.0..10.0)).collect()
    }

    #[test]
    fn preprocess_examples() {
        assert_eq!(preprocess(&[5.0, 7.0, 6.0]).unwrap(), vec![0.0, 2.0, 1.0]);
        assert_eq!(preprocess(&[3.5; 3]).unwrap(), vec![0.0; 3]);
        assert!(preprocess(&[]).is_err());
    }

    #[test]
    fn preprocess_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..50 {
            let x = random_seq(&mut rng, n);
            let once = preprocess(&x).unwrap();
            let twice = preprocess(&once).unwrap();
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn basic_stats_examples() {
        assert_eq!(basic_stats(&[0.0, 2.0, 1.0]).unwrap(), (2.0, 0.0, 1.0));
        assert_eq!(basic_stats(&[-3.0]).unwrap(), (-3.0, -3.0, -3.0));
        assert!(basic_stats(&[]).is_err());
        assert!(basic_stats(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn basic_stats_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_seq(&mut rng, 1000);
        let (max, min, mean) = basic_stats(&x).unwrap();
        let mut omax = x[0];
        let mut omin = x[0];
        let mut total = 0.0;
        for i in 0..x.len() {
            if x[i] > omax {
                omax = x[i];
            }
            if x[i] < omin {
                omin = x[i];
            }
            total += x[i];
        }
        let omean = total / 1000.0;
        assert_eq!(max, omax);
        assert_eq!(min, omin);
        assert!((mean - omean).abs() <= 1e-12 * omean.abs().max(1e-300));
    }

    #[test]
    fn energy_examples() {
        assert_eq!(energy(&[1.0, 2.0, 2.0]).unwrap(), 9.0);
        assert_eq!(energy(&[0.0; 7]).unwrap(), 0.0);
        assert!(energy(&[]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_seq(&mut rng, 777);
        let mut naive = 0.0;
        for v in &x {
            naive += v.powi(2);
        }
        assert!((energy(&x).unwrap() - naive).abs() <= 1e-9 * naive);
    }

    #[test]
    fn dft_examples() {
        let c = 2.5;
        let m = dft_magnitude(&[c; 4]).unwrap();
        assert_eq!(m.len(), 4);
        assert!((m[0] - 4.0 * c).abs() < 1e-12);
        assert!(m[1..].iter().all(|v| v.abs() < 1e-12));
        let m = dft_magnitude(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(m.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(dft_magnitude(&[]).is_err());
        assert!(dft_magnitude(&[1.0]).is_err());
        assert_eq!(dft_magnitude(&[1.0; 5]).unwrap().len(), 8);
    }

    fn naive_dft(x: &[f64]) -> Vec<f64> {
        let n = x.len().next_power_of_two();
        (0..n)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (j, v) in x.iter().enumerate() {
                    let ang = -2.0 * std::f64::consts::PI * (k * j % n) as f64 / n as f64;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                re.hypot(im)
            })
            .collect()
    }

    #[test]
    fn dft_matches_naive_length_37() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_seq(&mut rng, 37);
        let fast = dft_magnitude(&x).unwrap();
        let slow = naive_dft(&x);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn correlation_examples() {
        assert!((correlation(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((correlation(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(correlation(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        // Truncation to the shorter sequence.
        assert!((correlation(&[1.0, 2.0, 3.0, 100.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(correlation(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn all_zero_segment_gives_zero_vector() {
        let seg = PinEntrySegment::new(vec![vec![0.0; 8]; 12], "1234", "u", true).unwrap();
        let fv = extract(&seg).unwrap();
        assert_eq!(fv.values, vec![0.0; FEATURE_COUNT]);
    }

    #[test]
    fn extract_layout_spot_checks() {
        let mut channels = vec![vec![0.0; 4]; 12];
        channels[Channel::AccY.index()] = vec![5.0, 7.0, 6.0, 5.0];
        channels[Channel::OriGamma.index()] = vec![1.0, 2.0, 3.0, 4.0];
        channels[Channel::AccZ.index()] = vec![0.0, -1.0, -2.0, -3.0];
        let seg = PinEntrySegment::new(channels, "1", "u", true).unwrap();
        let f = extract(&seg).unwrap().values;
        // acc.y preprocessed = [0, 2, 1, 0]
        assert_eq!(&f[3..6], &[2.0, 0.0, 0.75]);
        assert_eq!(f[TIME_ENERGY + 1], 5.0);
        // ori.gamma vs acc.z are perfectly anti-correlated: pair 0, axis 2.
        assert!((f[CORRELATIONS + 2] + 1.0).abs() < 1e-12);
        // DC bin of acc.y spectrum is the sum 3.
        assert!((f[FREQ_STATS + 3] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn channel_errors_name_the_channel() {
        let mut channels = vec![vec![0.0; 4]; 12];
        channels[Channel::RotRGamma.index()][2] = f64::NAN;
        let seg = PinEntrySegment::new(channels, "1", "u", true).unwrap();
        let err = extract(&seg).unwrap_err();
        assert!(err.to_string().starts_with("channel rotR.gamma"), "{err}");
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<FeatureVector> = (0..3)
            .map(|i| FeatureVector {
                values: (0..FEATURE_COUNT).map(|_| rng.random::<f64>() * 1e3 - 5e2).collect(),
                label: format!("{i:04}"),
                user_id: "user,with comma".into(),
            })
            .collect();
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("label,user_id,f000,f001,"));
        assert!(text.lines().next().unwrap().ends_with(",f113"));
        assert_eq!(read_feature_csv(&buf[..]).unwrap(), rows);
    }

    proptest! {
        #[test]
        fn correlation_bounded_symmetric_and_sign_flip(
            pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..200),
            a in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0],
            b in -100.0f64..100.0,
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let r = correlation(&x, &y).unwrap();
            prop_assert!(r.abs() <= 1.0 + 1e-12);
            prop_assert_eq!(r, correlation(&y, &x).unwrap());
            let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let flipped = correlation(&ax, &y).unwrap();
            prop_assert!((flipped - a.signum() * r).abs() < 1e-9);
        }

        #[test]
        fn parseval_for_power_of_two_lengths(
            exp in 1u32..9,
            seed in any::<u64>(),
        ) {
            let n = 1usize << exp;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_seq(&mut rng, n);
            let spec: f64 = dft_magnitude(&x).unwrap().iter().map(|m| m * m).sum();
            let time = n as f64 * energy(&x).unwrap();
            prop_assert!((spec - time).abs() <= 1e-6 * time.max(1e-300));
        }

        #[test]
        fn energies_are_non_negative(seed in any::<u64>(), len in 2usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let channels = (0..12).map(|_| random_seq(&mut rng, len)).collect();
            let seg = PinEntrySegment::new(channels, "1", "u", true).unwrap();
            let f = extract(&seg).unwrap();
            prop_assert_eq!(f.values.len(), FEATURE_COUNT);
            prop_assert!(f.values[TIME_ENERGY..CORRELATIONS].iter().all(|v| *v >= 0.0));
            prop_assert_eq!(f.clone(), extract(&seg).unwrap());
        }
    }
}
