//! Hand-crafted descriptors: 1000-bin quantized colour histograms over masked
//! regions, plus the vector utilities (normalisation, cosine, weighted
//! concatenation) used by retrieval baselines.

use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::scalar::{dot, norm, Scalar};

/// Number of colour bins: a uniform 10×10×10 grid over the RGB cube.
pub const HISTOGRAM_BINS: usize = 1000;

const LEVELS: u32 = 10;

/// Norms at or below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;

/// Maps an 8-bit RGB colour to its bin in `0..1000`.
#[inline]
pub fn quantize_color(r: u8, g: u8, b: u8) -> usize {
    let q = |c: u8| (u32::from(c) * LEVELS / 256) as usize;
    100 * q(r) + 10 * q(g) + q(b)
}

/// Normalised colour histogram of the pixels selected by `mask`.
pub fn color_histogram<T: Scalar>(image: &Image, mask: &Mask) -> Result<Vec<T>> {
    if image.width() != mask.width() || image.height() != mask.height() {
        return Err(Error::DimensionMismatch {
            expected: image.width() * image.height(),
            got: mask.width() * mask.height(),
        });
    }
    let mut counts = vec![0u64; HISTOGRAM_BINS];
    let mut total = 0u64;
    for (px, &inside) in image.pixels().iter().zip(mask.bits()) {
        if inside {
            counts[quantize_color(px[0], px[1], px[2])] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyMask);
    }
    let inv = 1.0 / total as f64;
    Ok(counts.into_iter().map(|c| T::lit(c as f64 * inv)).collect())
}

pub fn l2_normalize<T: Scalar>(v: &[T]) -> Result<Vec<T>> {
    let n = norm(v);
    if !n.is_finite() || n.as_f64() <= ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|&x| x / n).collect())
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine_sim<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na.as_f64() <= ZERO_NORM || nb.as_f64() <= ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    let c = dot(a, b) / (na * nb);
    Ok(c.max(-T::one()).min(T::one()))
}

/// Concatenates `wᵢ · normalize(partᵢ)` and normalises the result.
pub fn concat_descriptors<T: Scalar>(parts: &[&[T]], weights: &[T]) -> Result<Vec<T>> {
    if parts.is_empty() {
        return Err(Error::LengthMismatch("no descriptors to concatenate".into()));
    }
    if parts.len() != weights.len() {
        return Err(Error::LengthMismatch(format!(
            "{} descriptors but {} weights",
            parts.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= T::zero())) || weights.iter().all(|w| *w == T::zero()) {
        return Err(Error::InvalidConfig(
            "weights must be non-negative with at least one positive".into(),
        ));
    }
    let mut out = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for (part, &w) in parts.iter().zip(weights) {
        let unit = l2_normalize(part)?;
        out.extend(unit.into_iter().map(|x| x * w));
    }
    l2_normalize(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    #[test]
    fn quantize_corners_and_midpoint() {
        assert_eq!(quantize_color(0, 0, 0), 0);
        assert_eq!(quantize_color(255, 255, 255), 999);
        assert_eq!(quantize_color(128, 0, 0), 500);
        assert_eq!(quantize_color(255, 0, 0), 900);
    }

    #[test]
    fn quantize_is_surjective() {
        let mut seen = vec![false; HISTOGRAM_BINS];
        // bin edges sit at multiples of 25.6; step 25 lands in every bin
        for r in (0..=255u16).step_by(25) {
            for g in (0..=255u16).step_by(25) {
                for b in (0..=255u16).step_by(25) {
                    seen[quantize_color(r as u8, g as u8, b as u8)] = true;
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn uniform_red_histogram() {
        let img = Image::filled(4, 3, [255, 0, 0]).unwrap();
        let h: Vec<f64> = color_histogram(&img, &Mask::full(4, 3).unwrap()).unwrap();
        assert_eq!(h.len(), 1000);
        assert_eq!(h[900], 1.0);
        assert_eq!(h.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn empty_mask_and_mismatch() {
        let img = Image::filled(2, 2, [1, 2, 3]).unwrap();
        let empty = Mask::new(2, 2, vec![false; 4]).unwrap();
        assert!(matches!(
            color_histogram::<f32>(&img, &empty),
            Err(Error::EmptyMask)
        ));
        let other = Mask::full(3, 2).unwrap();
        assert!(matches!(
            color_histogram::<f32>(&img, &other),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn oracle_histogram(image: &Image, mask: &Mask) -> HashMap<usize, f64> {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        let mut n = 0;
        for y in 0..image.height() {
            for x in 0..image.width() {
                if mask.get(x, y) {
                    let [r, g, b] = image.get(x, y);
                    let bin = 100 * (r as usize * 10 / 256)
                        + 10 * (g as usize * 10 / 256)
                        + (b as usize * 10 / 256);
                    *counts.entry(bin).or_default() += 1;
                    n += 1;
                }
            }
        }
        counts
            .into_iter()
            .map(|(k, c)| (k, c as f64 / n as f64))
            .collect()
    }

    #[test]
    fn two_pixel_histogram_matches_oracle() {
        let img = Image::new(3, 1, vec![[0, 0, 0], [9, 9, 9], [255, 255, 255]]).unwrap();
        let mask = Mask::from_rows(&["101"]).unwrap();
        let h: Vec<f64> = color_histogram(&img, &mask).unwrap();
        let oracle = oracle_histogram(&img, &mask);
        assert_eq!(oracle.len(), 2);
        assert_eq!(h[0], 0.5);
        assert_eq!(h[999], 0.5);
        for (bin, &v) in h.iter().enumerate() {
            assert_eq!(v, *oracle.get(&bin).unwrap_or(&0.0));
        }
    }

    #[test]
    fn normalize_examples() {
        let v = l2_normalize(&[3.0f64, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-12 && (v[1] - 0.8).abs() < 1e-12);
        assert_eq!(l2_normalize(&[0.0f64, 1.0]).unwrap(), vec![0.0, 1.0]);
        assert!(matches!(l2_normalize(&[0.0f32, 0.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn cosine_examples() {
        let a = [0.3f64, -2.0, 5.0];
        assert!((cosine_sim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_sim(&[1.0f64, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_sim(&[1.0f64, 1.0], &[1.0, 0.0]).unwrap() - 0.7071).abs() < 1e-4);
        assert!(matches!(
            cosine_sim(&[0.0f64, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn concat_examples() {
        let p = [2.0f64, 0.0, 0.0];
        assert_eq!(concat_descriptors(&[&p], &[1.0]).unwrap(), l2_normalize(&p).unwrap());

        let q = [0.0f64, 5.0];
        let out = concat_descriptors(&[&p, &q], &[1.0, 0.0]).unwrap();
        assert_eq!(&out[3..], &[0.0, 0.0]);

        let a = [1.0f64, 0.0];
        let b = [0.0f64, 1.0];
        let out = concat_descriptors(&[&a, &b], &[1.0, 1.0]).unwrap();
        let s = 1.0 / 2f64.sqrt();
        for (got, want) in out.iter().zip([s, 0.0, 0.0, s]) {
            assert!((got - want).abs() < 1e-12);
        }

        assert!(concat_descriptors::<f64>(&[&a], &[1.0, 1.0]).is_err());
        assert!(concat_descriptors::<f64>(&[&a, &b], &[0.0, 0.0]).is_err());
        assert!(concat_descriptors::<f64>(&[&a, &[0.0, 0.0]], &[1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn quantize_total_and_in_range(r: u8, g: u8, b: u8) {
            let bin = quantize_color(r, g, b);
            prop_assert!(bin < HISTOGRAM_BINS);
            prop_assert_eq!(bin, 100 * (r as usize * 10 / 256) + 10 * (g as usize * 10 / 256) + b as usize * 10 / 256);
        }

        #[test]
        fn histogram_sums_to_one_and_ignores_order(
            px in proptest::collection::vec(any::<[u8; 3]>(), 1..64),
            bits in proptest::collection::vec(any::<bool>(), 64),
            rot in 0usize..64,
        ) {
            let n = px.len();
            let mut bits: Vec<bool> = bits[..n].to_vec();
            bits[0] = true;
            let img = Image::new(n, 1, px.clone()).unwrap();
            let mask = Mask::new(n, 1, bits.clone()).unwrap();
            let h: Vec<f64> = color_histogram(&img, &mask).unwrap();
            prop_assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-6);

            let k = rot % n;
            let mut px2 = px;
            px2.rotate_left(k);
            bits.rotate_left(k);
            let h2: Vec<f64> = color_histogram(
                &Image::new(n, 1, px2).unwrap(),
                &Mask::new(n, 1, bits).unwrap(),
            ).unwrap();
            prop_assert_eq!(h, h2);
        }

        #[test]
        fn cosine_symmetric_and_scale_invariant(
            a in proptest::collection::vec(-10.0f64..10.0, 5),
            b in proptest::collection::vec(-10.0f64..10.0, 5),
            c in 0.01f64..100.0,
        ) {
            prop_assume!(norm(&a) > 1e-3 && norm(&b) > 1e-3);
            let ab = cosine_sim(&a, &b).unwrap();
            prop_assert!((ab - cosine_sim(&b, &a).unwrap()).abs() < 1e-12);
            let ca: Vec<f64> = a.iter().map(|x| x * c).collect();
            prop_assert!((ab - cosine_sim(&ca, &b).unwrap()).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }

        #[test]
        fn concat_is_unit_norm(
            a in proptest::collection::vec(-10.0f64..10.0, 1..8),
            b in proptest::collection::vec(-10.0f64..10.0, 1..8),
            wa in 0.0f64..3.0,
            wb in 0.01f64..3.0,
        ) {
            prop_assume!(norm(&a) > 1e-3 && norm(&b) > 1e-3);
            let out = concat_descriptors(&[&a, &b], &[wa, wb]).unwrap();
            prop_assert!((norm(&out) - 1.0).abs() < 1e-6);
        }
    }
}
