//! Encoder, local implicit decoder, resampling and checkpoints.

pub mod checkpoint;
pub mod encoder;
pub mod grid;
pub mod model;
pub mod resample;

pub use encoder::{receptive_field, EncoderConfig, RfMode};
pub use grid::QueryGrid;
pub use model::{query_plan, DecoderConfig, LocalInr, ModelConfig, QueryPlan};
pub use resample::{cubic, downsample_bicubic, resize_bicubic, sample_bilinear, scaled_extent, upsample_bicubic};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freqloss::{total_loss_graph_with, weights_at, FreqLossConfig};
    use crate::image::Image;
    use crate::numerics::{check_gradient, prng, GradCheckOptions, Graph, Tensor};
    use rand::Rng;

    fn small_config(ensemble: bool) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig { channels: 4, depth: 2, kernel: 3, dilation: 1, rf_mode: RfMode::Baseline },
            decoder: DecoderConfig { hidden: 8, layers: 3, unfold_radius: 1, ensemble, lr_skip: true, zero_init_output: false },
        }
    }

    fn random_image(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = prng(seed);
        Image::from_fn(h, w, 3, |_, _, _| rng.gen::<f64>())
    }

    #[test]
    fn encoder_output_shape() {
        let cfg = ModelConfig { encoder: EncoderConfig { channels: 32, depth: 2, ..Default::default() }, ..Default::default() };
        let model = LocalInr::new(cfg, 1).unwrap();
        let f = model.encode(&random_image(16, 24, 2)).unwrap();
        assert_eq!(f.shape(), &[32, 16, 24]);
    }

    #[test]
    fn zero_blocks_reduce_encoder_to_embedding() {
        let mut model = LocalInr::new(small_config(true), 4).unwrap();
        model.zero_encoder_blocks();
        let lr = random_image(5, 6, 3);
        let f = model.encode(&lr).unwrap();
        let w = model.param("encoder.stem.w").unwrap().data().to_vec();
        let b = model.param("encoder.stem.b").unwrap().data().to_vec();
        for c in 0..4 {
            for y in 0..5 {
                for x in 0..6 {
                    let want = b[c] + (0..3).map(|k| w[c * 3 + k] * lr.get(y, x, k)).sum::<f64>();
                    assert!((f.data()[(c * 5 + y) * 6 + x] - want).abs() < 1e-12);
                }
            }
        }
        // a zero image sees only the embedding bias
        let z = model.encode(&Image::zeros(3, 3, 3)).unwrap();
        assert!(z.data().iter().enumerate().all(|(i, v)| *v == b[i / 9]));
    }

    #[test]
    fn unit_scale_zero_decoder_returns_input() {
        let mut model = LocalInr::new(small_config(false), 5).unwrap();
        model.zero_decoder_output();
        let lr = random_image(7, 5, 6);
        let out = model.upscale(&lr, (1.0, 1.0)).unwrap();
        assert_eq!(out.dims(), lr.dims());
        assert!(out.data().iter().zip(lr.data()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn ensemble_weight_at_latent_center() {
        let (h, w) = (4, 5);
        let grid = QueryGrid {
            coords: vec![[grid::pixel_center(1, h), grid::pixel_center(2, w)]],
            cells: vec![[0.1, 0.1]],
            scale: (1.0, 1.0),
            target: None,
        };
        let plan = query_plan(&grid, h, w, true);
        let mut on_center = 0.0;
        for k in 0..4 {
            if plan.latent[k] == w + 2 {
                on_center += plan.weights[k];
            } else {
                assert!(plan.weights[k] < 1e-6, "member {k}: {}", plan.weights[k]);
            }
        }
        assert!((on_center - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ensemble_weights_partition_unity() {
        let mut rng = prng(8);
        let coords: Vec<[f64; 2]> = (0..500).map(|_| [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)]).collect();
        let grid = QueryGrid { cells: vec![[0.05, 0.07]; coords.len()], coords, scale: (3.0, 3.0), target: None };
        for (h, w) in [(1, 1), (3, 7), (12, 12)] {
            let plan = query_plan(&grid, h, w, true);
            for group in plan.weights.chunks(4) {
                assert!((group.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn decoder_input_width_contract() {
        let cfg = small_config(true);
        let model = LocalInr::new(cfg.clone(), 0).unwrap();
        let rows = model.param("decoder.l0.w_feat").unwrap().shape()[0] + model.param("decoder.l0.w_pos").unwrap().shape()[0];
        assert_eq!(rows, cfg.decoder_input_width());
        assert_eq!(rows, 4 * 9 + 2 + 2);
    }

    /// Per-query decoding written out with explicit loops: concatenated
    /// input row, dense layers, area blend, bilinear skip.
    fn scalar_reference(model: &LocalInr, lr: &Image, grid: &QueryGrid) -> Vec<[f64; 3]> {
        let cfg = &model.config;
        let feat = model.encode(lr).unwrap();
        let (c, h, w) = (cfg.encoder.channels, lr.height(), lr.width());
        let f = |ch: usize, y: isize, x: isize| {
            if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                0.0
            } else {
                feat.data()[(ch * h + y as usize) * w + x as usize]
            }
        };
        let w_feat = model.param("decoder.l0.w_feat").unwrap();
        let w_pos = model.param("decoder.l0.w_pos").unwrap();
        let mut layers: Vec<(Vec<Vec<f64>>, Vec<f64>)> = Vec::new();
        let width0 = w_feat.shape()[1];
        let mut first = Vec::new();
        for r in 0..w_feat.shape()[0] {
            first.push(w_feat.data()[r * width0..(r + 1) * width0].to_vec());
        }
        for r in 0..4 {
            first.push(w_pos.data()[r * width0..(r + 1) * width0].to_vec());
        }
        layers.push((first, model.param("decoder.l0.b").unwrap().data().to_vec()));
        for l in 1..cfg.decoder.layers {
            let wt = model.param(&format!("decoder.l{l}.w")).unwrap();
            let n = wt.shape()[1];
            let rows = (0..wt.shape()[0]).map(|r| wt.data()[r * n..(r + 1) * n].to_vec()).collect();
            layers.push((rows, model.param(&format!("decoder.l{l}.b")).unwrap().data().to_vec()));
        }
        let mut out = Vec::new();
        for (q, coord) in grid.coords.iter().enumerate() {
            let mut preds = Vec::new();
            let mut areas = Vec::new();
            for (vy, vx) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
                let cy = (coord[0] + vy / h as f64 + 1e-6).clamp(-1.0 + 1e-6, 1.0 - 1e-6);
                let cx = (coord[1] + vx / w as f64 + 1e-6).clamp(-1.0 + 1e-6, 1.0 - 1e-6);
                let iy = (((cy + 1.0) / 2.0 * h as f64).floor() as usize).min(h - 1);
                let ix = (((cx + 1.0) / 2.0 * w as f64).floor() as usize).min(w - 1);
                let mut input = Vec::new();
                for ch in 0..c {
                    for dy in -1..=1isize {
                        for dx in -1..=1isize {
                            input.push(f(ch, iy as isize + dy, ix as isize + dx));
                        }
                    }
                }
                let ry = (coord[0] - (-1.0 + (2 * iy + 1) as f64 / h as f64)) * h as f64;
                let rx = (coord[1] - (-1.0 + (2 * ix + 1) as f64 / w as f64)) * w as f64;
                input.extend([ry, rx, grid.cells[q][0] * h as f64, grid.cells[q][1] * w as f64]);
                let mut act = input;
                for (li, (rows, bias)) in layers.iter().enumerate() {
                    let mut next = bias.clone();
                    for (i, a) in act.iter().enumerate() {
                        for (j, v) in next.iter_mut().enumerate() {
                            *v += a * rows[i][j];
                        }
                    }
                    if li + 1 < layers.len() {
                        next.iter_mut().for_each(|v| *v = v.max(0.0));
                    }
                    act = next;
                }
                preds.push(act);
                areas.push((ry * rx).abs() + 1e-9);
            }
            let total: f64 = areas.iter().sum();
            let mut rgb = [0.0; 3];
            for k in 0..4 {
                for ch in 0..3 {
                    rgb[ch] += preds[k][ch] * areas[3 - k] / total;
                }
            }
            // bilinear skip, border clamped
            let py = ((coord[0] + 1.0) / 2.0 * h as f64 - 0.5).clamp(0.0, (h - 1) as f64);
            let px = ((coord[1] + 1.0) / 2.0 * w as f64 - 0.5).clamp(0.0, (w - 1) as f64);
            let (y0, x0) = (py.floor() as usize, px.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
            let (fy, fx) = (py - y0 as f64, px - x0 as f64);
            for ch in 0..3 {
                rgb[ch] += (1.0 - fy) * ((1.0 - fx) * lr.get(y0, x0, ch) + fx * lr.get(y0, x1, ch))
                    + fy * ((1.0 - fx) * lr.get(y1, x0, ch) + fx * lr.get(y1, x1, ch));
            }
            out.push(rgb);
        }
        out
    }

    #[test]
    fn matches_scalar_reference_on_two_by_two() {
        let cfg = ModelConfig {
            encoder: EncoderConfig { channels: 2, depth: 1, ..Default::default() },
            decoder: DecoderConfig { hidden: 3, layers: 2, unfold_radius: 1, ensemble: true, lr_skip: true, zero_init_output: false },
        };
        let mut model = LocalInr::new(cfg, 9).unwrap();
        // hand-set decoder weights
        for (name, t) in model.params_mut() {
            if name.starts_with("decoder") {
                let n = t.len();
                t.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = ((i * 7 % 11) as f64 - 5.0) / (5.0 + n as f64));
            }
        }
        let lr = random_image(2, 2, 10);
        let grid = QueryGrid::full(2, 2, (2.0, 2.0)).unwrap();
        let got = model.query_rgb(&model.encode(&lr).unwrap(), &lr, &grid).unwrap();
        let want = scalar_reference(&model, &lr, &grid);
        assert_eq!(got.len(), 16);
        for (a, b) in got.iter().zip(&want) {
            for ch in 0..3 {
                assert!((a[ch] - b[ch]).abs() < 1e-10, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn resolution_contract_and_empty_grid() {
        let model = LocalInr::new(small_config(true), 11).unwrap();
        let lr = random_image(5, 4, 12);
        for (ry, rx) in [(1.0, 1.0), (2.0, 3.0), (2.5, 1.3), (4.0, 4.0)] {
            let out = model.upscale(&lr, (ry, rx)).unwrap();
            assert_eq!((out.height(), out.width()), (resample::scaled_extent(5, ry), resample::scaled_extent(4, rx)));
        }
        let empty = QueryGrid { coords: vec![], cells: vec![], scale: (2.0, 2.0), target: None };
        assert!(model.query_rgb(&model.encode(&lr).unwrap(), &lr, &empty).unwrap().is_empty());
    }

    #[test]
    fn nearby_queries_decode_continuously() {
        let model = LocalInr::new(small_config(false), 13).unwrap();
        let lr = random_image(6, 6, 14);
        let feats = model.encode(&lr).unwrap();
        let mut rng = prng(15);
        for _ in 0..50 {
            let c = [rng.gen_range(-0.95..0.95), rng.gen_range(-0.95..0.95)];
            let grid = QueryGrid {
                coords: vec![c, [c[0] + 5e-7, c[1] - 5e-7]],
                cells: vec![[0.1, 0.1]; 2],
                scale: (2.0, 2.0),
                target: None,
            };
            let plan = query_plan(&grid, 6, 6, false);
            if plan.latent[0] != plan.latent[1] {
                continue;
            }
            let out = model.query_rgb(&feats, &lr, &grid).unwrap();
            for ch in 0..3 {
                assert!((out[0][ch] - out[1][ch]).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        let model = LocalInr::new(small_config(true), 16).unwrap();
        let lr = random_image(6, 6, 17);
        let grid = QueryGrid::full(6, 6, (2.0, 2.0)).unwrap();
        let hr = random_image(12, 12, 18);
        let loss_cfg = FreqLossConfig { lambda: 0.5, ..Default::default() };
        let current = model.upscale(&lr, (2.0, 2.0)).unwrap();
        let weights = weights_at(&hr, &current, &loss_cfg).unwrap();
        let opts = GradCheckOptions { rel_tol: 1e-2, samples: 20, ..Default::default() };
        let mut rng = prng(19);
        for name in ["encoder.block1.w", "decoder.l1.w"] {
            let idx = model.params().iter().position(|(n, _)| n == name).unwrap();
            let x: Tensor = model.params()[idx].1.clone();
            let report = check_gradient(
                name,
                &x,
                |g: &mut Graph, v| {
                    let mut vars = model.insert_params(g);
                    vars[idx] = v;
                    let out = model.forward_raster(g, &vars, &lr, &grid)?;
                    Ok(total_loss_graph_with(g, &hr, out, &loss_cfg, Some(&weights))?.total)
                },
                &opts,
                &mut rng,
            )
            .unwrap();
            assert!(report.passed, "{report:?}");
        }
    }
}
