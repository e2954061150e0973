//! Toy feature extractor standing in for a CNN: per grid cell an 8-bin
//! histogram per channel, an edge-density scalar and the mean intensity,
//! concatenated and unit-normalized. Values are rounded to f32 precision so
//! the in-memory grid survives a feature-file round trip bit-exactly.

use crate::attention::FeatureGrid;
use crate::img::RgbImage;

/// 3 channels x 8 bins + edge density + mean intensity.
pub const TOY_FEATURE_DIM: usize = 26;

pub fn toy_extract(img: &RgbImage, grid_h: usize, grid_w: usize) -> FeatureGrid {
    assert!(grid_h >= 1 && grid_w >= 1, "grid dims must be positive");
    assert!(
        img.h >= grid_h && img.w >= grid_w,
        "image dims must cover the grid"
    );
    let mut values = Vec::with_capacity(grid_h * grid_w * TOY_FEATURE_DIM);
    for gy in 0..grid_h {
        let y0 = gy * img.h / grid_h;
        let y1 = (gy + 1) * img.h / grid_h;
        for gx in 0..grid_w {
            let x0 = gx * img.w / grid_w;
            let x1 = (gx + 1) * img.w / grid_w;
            let mut feat = [0.0f64; TOY_FEATURE_DIM];
            let count = ((y1 - y0) * (x1 - x0)) as f64;
            let mut intensity_sum = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    let [r, g, b] = img.get(x, y);
                    feat[(r >> 5) as usize] += 1.0;
                    feat[8 + (g >> 5) as usize] += 1.0;
                    feat[16 + (b >> 5) as usize] += 1.0;
                    intensity_sum += (r as f64 + g as f64 + b as f64) / 3.0;
                }
            }
            for bin in feat.iter_mut().take(24) {
                *bin /= count;
            }
            // Edge density: mean absolute intensity difference across
            // horizontally and vertically adjacent pixel pairs in the cell.
            let lum = |x: usize, y: usize| -> f64 {
                let [r, g, b] = img.get(x, y);
                (r as f64 + g as f64 + b as f64) / 3.0
            };
            let mut edge_sum = 0.0;
            let mut edge_pairs = 0usize;
            for y in y0..y1 {
                for x in x0..x1 {
                    if x + 1 < x1 {
                        edge_sum += (lum(x + 1, y) - lum(x, y)).abs();
                        edge_pairs += 1;
                    }
                    if y + 1 < y1 {
                        edge_sum += (lum(x, y + 1) - lum(x, y)).abs();
                        edge_pairs += 1;
                    }
                }
            }
            feat[24] = if edge_pairs > 0 {
                edge_sum / (edge_pairs as f64 * 255.0)
            } else {
                0.0
            };
            feat[25] = intensity_sum / (count * 255.0);

            let norm: f64 = feat.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in feat.iter_mut() {
                    *v /= norm;
                }
            }
            // Storage precision applied up front.
            values.extend(feat.iter().map(|&v| v as f32 as f64));
        }
    }
    FeatureGrid::new(grid_h, grid_w, TOY_FEATURE_DIM, values).expect("extractor output is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_gray_image_has_identical_unit_cells() {
        let img = RgbImage::filled(30, 20, [128, 128, 128]).unwrap();
        let grid = toy_extract(&img, 2, 3);
        let first = grid.region(0).to_vec();
        for i in 1..grid.regions() {
            assert_eq!(grid.region(i), &first[..], "cell {i}");
        }
        // Edge density zero, histogram mass in bin 4 (128 >> 5).
        assert_eq!(first[24], 0.0);
        assert!(first[4] > 0.0);
    }

    #[test]
    fn cells_have_unit_norm() {
        let mut img = RgbImage::new(16, 16).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                img.set(x, y, [(x * 16) as u8, (y * 16) as u8, 200]);
            }
        }
        let grid = toy_extract(&img, 4, 4);
        for i in 0..grid.regions() {
            let norm: f64 = grid.region(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-7, "cell {i} norm {norm}");
        }
    }

    #[test]
    fn half_red_half_blue_matches_pixel_count_oracle() {
        // Top half pure red, bottom half pure blue, 2x1 grid.
        let mut img = RgbImage::new(4, 4).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                img.set(x, y, if y < 2 { [255, 0, 0] } else { [0, 0, 255] });
            }
        }
        let grid = toy_extract(&img, 2, 1);
        let top = grid.region(0);
        let bottom = grid.region(1);

        // Oracle: every top pixel lands in R bin 7, G bin 0, B bin 0; the
        // cell is uniform so edge density is 0 and intensity is 255/3/255.
        let mut expect = [0.0f64; TOY_FEATURE_DIM];
        expect[7] = 1.0;
        expect[8] = 1.0;
        expect[16] = 1.0;
        expect[25] = 1.0 / 3.0;
        let norm: f64 = expect.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in expect.iter_mut() {
            *v /= norm;
        }
        for (got, want) in top.iter().zip(&expect) {
            assert!((got - want).abs() < 1e-7, "top {got} vs {want}");
        }
        // Bottom mirrors into the blue bins: R bin 0, G bin 0, B bin 7.
        assert!(bottom[0] > 0.0 && bottom[16 + 7] > 0.0);
        assert_eq!(bottom[7], 0.0);
    }

    #[test]
    fn values_are_f32_exact() {
        let mut img = RgbImage::new(9, 7).unwrap();
        for y in 0..7 {
            for x in 0..9 {
                img.set(x, y, [(x * 28) as u8, (y * 36) as u8, 77]);
            }
        }
        let grid = toy_extract(&img, 3, 3);
        for &v in grid.values() {
            assert_eq!(v, v as f32 as f64);
        }
    }
}
