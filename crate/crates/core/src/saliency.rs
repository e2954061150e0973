//! Boolean map saliency. Channels of an opponent color space are thresholded
//! into boolean maps; regions not connected to the image border are the
//! salient ones. Every reduction is carried out in a fixed order (and with
//! symmetric-pair blur accumulation), so flipping the input flips the output
//! bit-exactly.

use crate::gaze::{gaussian_blur, DenseMap};
use crate::img::RgbImage;

/// Binary field over pixels, one entry per pixel in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BooleanMap {
    pub w: usize,
    pub h: usize,
    pub bits: Vec<bool>,
}

/// Opponent decomposition: intensity, R-G, B-(R+G)/2. A simplification of
/// the Lab space the published algorithm uses.
pub fn opponent_channels(img: &RgbImage) -> [Vec<f64>; 3] {
    let n = img.w * img.h;
    let mut intensity = vec![0.0; n];
    let mut rg = vec![0.0; n];
    let mut by = vec![0.0; n];
    for i in 0..n {
        let p = &img.data()[i * 3..i * 3 + 3];
        let (r, g, b) = (p[0] as f64, p[1] as f64, p[2] as f64);
        intensity[i] = (r + g + b) / 3.0;
        rg[i] = r - g;
        by[i] = b - (r + g) / 2.0;
    }
    [intensity, rg, by]
}

fn rescale_to_255(channel: &mut [f64]) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in channel.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi > lo {
        let span = hi - lo;
        for v in channel.iter_mut() {
            *v = (*v - lo) / span * 255.0;
        }
    } else {
        for v in channel.iter_mut() {
            *v = 0.0;
        }
    }
}

/// Thresholds each rescaled opponent channel at theta in {0, delta, 2*delta,
/// ...} up to 255, emitting the map (channel > theta) and its complement.
pub fn boolean_maps(img: &RgbImage, delta: u32) -> Vec<BooleanMap> {
    let delta = delta.max(1);
    let mut channels = opponent_channels(img);
    for c in channels.iter_mut() {
        rescale_to_255(c);
    }
    let mut maps = Vec::new();
    for channel in &channels {
        let mut theta = 0u32;
        while theta <= 255 {
            let t = theta as f64;
            let bits: Vec<bool> = channel.iter().map(|&v| v > t).collect();
            let complement: Vec<bool> = bits.iter().map(|&b| !b).collect();
            maps.push(BooleanMap {
                w: img.w,
                h: img.h,
                bits,
            });
            maps.push(BooleanMap {
                w: img.w,
                h: img.h,
                bits: complement,
            });
            theta += delta;
        }
    }
    maps
}

/// Surroundedness: flood-fill from every border pixel across same-valued
/// 4-connected regions; pixels the fill never reaches are enclosed and get
/// 1, the rest 0. The result is L2-normalized when nonzero.
pub fn attention_from_map(map: &BooleanMap) -> DenseMap {
    let (w, h) = (map.w, map.h);
    let mut reached = vec![false; w * h];
    let mut stack: Vec<usize> = Vec::new();
    let seed = |idx: usize, stack: &mut Vec<usize>, reached: &mut Vec<bool>| {
        if !reached[idx] {
            reached[idx] = true;
            stack.push(idx);
        }
    };
    for x in 0..w {
        seed(x, &mut stack, &mut reached);
        seed((h - 1) * w + x, &mut stack, &mut reached);
    }
    for y in 0..h {
        seed(y * w, &mut stack, &mut reached);
        seed(y * w + (w - 1), &mut stack, &mut reached);
    }
    while let Some(idx) = stack.pop() {
        let (x, y) = (idx % w, idx / w);
        let val = map.bits[idx];
        let mut visit = |nx: usize, ny: usize| {
            let nidx = ny * w + nx;
            if !reached[nidx] && map.bits[nidx] == val {
                reached[nidx] = true;
                stack.push(nidx);
            }
        };
        if x > 0 {
            visit(x - 1, y);
        }
        if x + 1 < w {
            visit(x + 1, y);
        }
        if y > 0 {
            visit(x, y - 1);
        }
        if y + 1 < h {
            visit(x, y + 1);
        }
    }
    let surrounded = reached.iter().filter(|&&r| !r).count();
    let mut data = vec![0.0; w * h];
    if surrounded > 0 {
        // Marked pixels carry 1 before normalization, so the L2 norm is
        // sqrt(count): integer-derived, identical under any pixel permutation.
        let inv = 1.0 / (surrounded as f64).sqrt();
        for (d, &r) in data.iter_mut().zip(&reached) {
            if !r {
                *d = inv;
            }
        }
    }
    DenseMap { w, h, data }
}

/// Blur width used when the caller does not fix one: 0.03 * max(h, w).
pub fn default_blur_sigma(img: &RgbImage) -> f64 {
    0.03 * img.w.max(img.h) as f64
}

/// Full pipeline: mean attention over all boolean maps, Gaussian blur, then
/// max-normalization to [0, 1].
pub fn bms_saliency(img: &RgbImage, delta: u32, blur_sigma: f64) -> DenseMap {
    let maps = boolean_maps(img, delta);
    let n = img.w * img.h;
    let mut acc = vec![0.0f64; n];
    for map in &maps {
        let att = attention_from_map(map);
        for (a, v) in acc.iter_mut().zip(&att.data) {
            *a += v;
        }
    }
    let count = maps.len() as f64;
    for a in acc.iter_mut() {
        *a /= count;
    }
    let mut data = if blur_sigma > 0.0 {
        gaussian_blur(img.w, img.h, &acc, blur_sigma)
    } else {
        acc
    };
    let mx = data.iter().cloned().fold(0.0f64, f64::max);
    if mx > 0.0 {
        for v in data.iter_mut() {
            *v /= mx;
        }
    }
    DenseMap {
        w: img.w,
        h: img.h,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_tone_4x4() -> RgbImage {
        // Left half dark, right half bright.
        let mut img = RgbImage::new(4, 4).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let v = if x < 2 { 10 } else { 200 };
                img.set(x, y, [v, v, v]);
            }
        }
        img
    }

    #[test]
    fn constant_image_maps_are_trivial() {
        let img = RgbImage::filled(6, 4, [90, 90, 90]).unwrap();
        for map in boolean_maps(&img, 64) {
            let ones = map.bits.iter().filter(|&&b| b).count();
            assert!(ones == 0 || ones == 24, "map must be all ones or all zeros");
        }
    }

    #[test]
    fn delta_128_yields_twelve_maps() {
        let img = two_tone_4x4();
        assert_eq!(boolean_maps(&img, 128).len(), 12);
    }

    #[test]
    fn two_tone_maps_match_hand_enumeration() {
        // Intensity rescales to 0 (left) and 255 (right); the color-opponent
        // channels are constant, hence zero. With delta 128, thresholds are
        // {0, 128}: for intensity, channel > theta marks exactly the right
        // half both times; constant channels compare 0 > theta, never true.
        let img = two_tone_4x4();
        let maps = boolean_maps(&img, 128);
        let right_half: Vec<bool> = (0..16).map(|i| i % 4 >= 2).collect();
        let left_half: Vec<bool> = right_half.iter().map(|&b| !b).collect();
        let all_false = vec![false; 16];
        let all_true = vec![true; 16];
        let expected: Vec<&Vec<bool>> = vec![
            &right_half,
            &left_half, // intensity, theta 0
            &right_half,
            &left_half, // intensity, theta 128
            &all_false,
            &all_true, // R-G, theta 0
            &all_false,
            &all_true, // R-G, theta 128
            &all_false,
            &all_true, // B-(R+G)/2, theta 0
            &all_false,
            &all_true, // B-(R+G)/2, theta 128
        ];
        for (map, want) in maps.iter().zip(expected) {
            assert_eq!(&map.bits, want);
        }
    }

    #[test]
    fn all_zero_map_has_zero_attention() {
        let map = BooleanMap {
            w: 5,
            h: 4,
            bits: vec![false; 20],
        };
        let att = attention_from_map(&map);
        assert!(att.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn interior_blob_is_the_only_surrounded_region() {
        // 8x8: blob A touches the border, blob B is interior.
        let mut bits = vec![false; 64];
        for &(x, y) in &[(0usize, 0usize), (1, 0), (0, 1)] {
            bits[y * 8 + x] = true;
        }
        let blob_b = [(4usize, 4usize), (5, 4), (4, 5), (5, 5)];
        for &(x, y) in &blob_b {
            bits[y * 8 + x] = true;
        }
        let map = BooleanMap { w: 8, h: 8, bits };
        let att = attention_from_map(&map);
        // Flood-fill oracle: exactly blob B marked, value 1/sqrt(4).
        for y in 0..8 {
            for x in 0..8 {
                let want = if blob_b.contains(&(x, y)) { 0.5 } else { 0.0 };
                assert_eq!(att.data[y * 8 + x], want, "at ({x},{y})");
            }
        }
    }

    #[test]
    fn constant_image_has_zero_saliency() {
        let img = RgbImage::filled(16, 16, [77, 140, 20]).unwrap();
        let sal = bms_saliency(&img, 8, default_blur_sigma(&img));
        assert!(sal.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bright_square_on_dark_ground_is_salient_inside() {
        let mut img = RgbImage::filled(32, 32, [20, 20, 20]).unwrap();
        for y in 10..22 {
            for x in 10..22 {
                img.set(x, y, [230, 230, 230]);
            }
        }
        let sal = bms_saliency(&img, 8, default_blur_sigma(&img));
        let mut inside = (0.0, 0usize);
        let mut outside = (0.0, 0usize);
        for y in 0..32 {
            for x in 0..32 {
                let v = sal.data[y * 32 + x];
                if (10..22).contains(&x) && (10..22).contains(&y) {
                    inside = (inside.0 + v, inside.1 + 1);
                } else {
                    outside = (outside.0 + v, outside.1 + 1);
                }
            }
        }
        let mean_in = inside.0 / inside.1 as f64;
        let mean_out = outside.0 / outside.1 as f64;
        assert!(
            mean_in >= 5.0 * mean_out,
            "inside {mean_in} vs outside {mean_out}"
        );
        let mx = sal.data.iter().cloned().fold(0.0f64, f64::max);
        assert!((mx - 1.0).abs() < 1e-15);
        assert!(sal.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn horizontal_flip_equivariance_is_exact() {
        let mut img = RgbImage::filled(20, 14, [15, 40, 90]).unwrap();
        // An off-center blob plus a second distractor.
        for y in 3..8 {
            for x in 2..7 {
                img.set(x, y, [240, 60, 10]);
            }
        }
        for y in 9..12 {
            for x in 13..17 {
                img.set(x, y, [10, 220, 180]);
            }
        }
        let sal = bms_saliency(&img, 8, default_blur_sigma(&img));
        let sal_flipped = bms_saliency(&img.flip_horizontal(), 8, default_blur_sigma(&img));
        for y in 0..14 {
            for x in 0..20 {
                let a = sal.data[y * 20 + x];
                let b = sal_flipped.data[y * 20 + (19 - x)];
                assert!(
                    a.to_bits() == b.to_bits(),
                    "mismatch at ({x},{y}): {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn integer_brightness_shift_keeps_map_set_with_delta_1() {
        let mut img = RgbImage::new(6, 6).unwrap();
        for y in 0..6 {
            for x in 0..6 {
                let v = ((x * 13 + y * 29) % 90) as u8;
                img.set(x, y, [v, v.saturating_add(5), v]);
            }
        }
        let mut shifted = RgbImage::new(6, 6).unwrap();
        for y in 0..6 {
            for x in 0..6 {
                let [r, g, b] = img.get(x, y);
                shifted.set(x, y, [r + 60, g + 60, b + 60]);
            }
        }
        let set_of = |img: &RgbImage| {
            let mut maps: Vec<Vec<bool>> =
                boolean_maps(img, 1).into_iter().map(|m| m.bits).collect();
            maps.sort();
            maps.dedup();
            maps
        };
        assert_eq!(set_of(&img), set_of(&shifted));
    }
}
