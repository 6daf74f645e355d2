use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sscnn_core::analysis::{conditional_autocorrelation, conditional_correlation, ControlSet};
use sscnn_core::attnnorm::{attn_norm_spatial, attn_norm_temporal, attn_norm_temporal_var, EPS};
use sscnn_core::data::{make_windows, Normalizer, SeriesTable, SplitFractions};
use sscnn_core::fusion::{polynomial_regression, polynomial_regression_var, FusionParams};
use sscnn_core::numcore::{causal_conv1d, grad_check, masked_row_softmax, Mask, Tensor};
use sscnn_core::selection::{
    build_seasonal_inference, build_short_term_inference, build_spatial_inference, MapLayout, SeasonalParams,
    ShortTermParams,
};

fn gaussian(seed: u64, shape: &[usize], std: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, std).unwrap();
    let len = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..len).map(|_| n.sample(&mut rng)).collect()).unwrap()
}

fn seasonal(seed: u64, cycle: usize, t_in: usize) -> SeasonalParams {
    let tau = t_in / cycle;
    SeasonalParams {
        cycle,
        w_se: gaussian(seed, &[tau, tau], 2.0),
        w_se_hat: gaussian(seed + 1, &[1, tau], 2.0),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..8, cols in 1usize..8, scale in 0.1f64..50.0, seed: u64) {
        let w = gaussian(seed, &[rows, cols], scale);
        let mask = Mask::from_fn(rows, cols, |i, j| !(i + j + seed as usize).is_multiple_of(3) || j == i % cols);
        let p = masked_row_softmax(&w, &mask).unwrap();
        for i in 0..rows {
            let sum: f64 = (0..cols).map(|j| p.at2(i, j)).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            for j in 0..cols {
                prop_assert!(mask.get(i, j) || p.at2(i, j) == 0.0);
            }
        }
    }

    #[test]
    fn conv_keeps_length(n in 1usize..4, t in 1usize..12, c_in in 1usize..4, c_out in 1usize..4, k in 1usize..4, seed: u64) {
        let x = gaussian(seed, &[n, t, c_in], 1.0);
        let kernel = gaussian(seed + 1, &[k, c_in, c_out], 1.0);
        let bias = gaussian(seed + 2, &[c_out], 1.0);
        let y = causal_conv1d(&x, &kernel, &bias).unwrap();
        prop_assert_eq!(y.shape(), &[n, t, c_out][..]);
        prop_assert_eq!(y, causal_conv1d(&x, &kernel, &bias).unwrap());
    }

    #[test]
    fn seasonal_inference_reproduces_periodic_input(cycle in 1usize..6, tau in 1usize..6, n in 1usize..3, seed: u64) {
        let t_in = cycle * tau;
        let map = build_seasonal_inference(&seasonal(seed, cycle, t_in), t_in).unwrap();
        let pattern = gaussian(seed + 7, &[n, cycle, 1], 3.0);
        let h = Tensor::tensor3(n, t_in, 1, (0..n).flat_map(|s| (0..t_in).map(move |t| (s, t))).map(|(s, t)| pattern.at3(s, t % cycle, 0)).collect()).unwrap();
        let out = attn_norm_temporal(&h, &map, EPS).unwrap();
        prop_assert!(out.mu.max_abs_diff(&h) < 1e-12);
    }

    #[test]
    fn row_shift_leaves_maps_unchanged(cycle in 1usize..5, tau in 1usize..5, delta in 1usize..5, shift in -30.0f64..30.0, seed: u64) {
        let t_in = cycle * tau;
        let delta = delta.min(t_in);
        let p = seasonal(seed, cycle, t_in);
        let mut shifted = p.clone();
        for v in shifted.w_se.data_mut() {
            *v += shift;
        }
        let a = build_seasonal_inference(&p, t_in).unwrap();
        let b = build_seasonal_inference(&shifted, t_in).unwrap();
        prop_assert!(a.values().max_abs_diff(b.values()) < 1e-12);

        let st = ShortTermParams { window: delta, w_st: gaussian(seed, &[delta], 2.0), w_st_hat: gaussian(seed + 1, &[delta, delta], 2.0) };
        let mut st_shifted = st.clone();
        for v in st_shifted.w_st.data_mut() {
            *v += shift;
        }
        let a = build_short_term_inference(&st, t_in).unwrap();
        let b = build_short_term_inference(&st_shifted, t_in).unwrap();
        prop_assert!(a.values().max_abs_diff(b.values()) < 1e-12);
    }

    #[test]
    fn attn_norm_reconstructs_and_respects_the_floor(n in 1usize..4, cycle in 1usize..5, tau in 1usize..5, d in 1usize..4, scale in 1e-3f64..1e3, seed: u64) {
        let t_in = cycle * tau;
        let h = gaussian(seed, &[n, t_in, d], scale);
        let temporal = attn_norm_temporal(&h, &build_seasonal_inference(&seasonal(seed, cycle, t_in), t_in).unwrap(), EPS).unwrap();
        let spatial = attn_norm_spatial(&h, &build_spatial_inference(&h).unwrap(), EPS).unwrap();
        for out in [&temporal, &spatial] {
            for i in 0..h.len() {
                let back = out.mu.data()[i] + out.sigma.data()[i] * out.residual.data()[i];
                prop_assert!((back - h.data()[i]).abs() <= 1e-12 * (1.0 + h.data()[i].abs()));
                prop_assert!(out.sigma.data()[i].powi(2) >= EPS * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn attn_norm_is_affine_equivariant(a in 0.5f64..4.0, b in -10.0f64..10.0, seed: u64) {
        // variance of every window is far above eps
        let (n, t, d) = (2, 12, 2);
        let h = gaussian(seed, &[n, t, d], 1e2);
        let map = build_short_term_inference(&ShortTermParams { window: 4, w_st: gaussian(seed, &[4], 1.0), w_st_hat: Tensor::zeros(&[4, 4]) }, t).unwrap();
        let moved = h.map(|x| a * x + b);
        let base = attn_norm_temporal(&h, &map, EPS).unwrap();
        let out = attn_norm_temporal(&moved, &map, EPS).unwrap();
        for i in 0..h.len() {
            let mu = a * base.mu.data()[i] + b;
            prop_assert!((out.mu.data()[i] - mu).abs() <= 1e-9 * (1.0 + mu.abs()));
            // rows of a single point have only the eps variance
            if base.sigma.data()[i].powi(2) >= 1e6 * EPS {
                let r = base.residual.data()[i];
                prop_assert!((out.residual.data()[i] - r).abs() <= 1e-6 * r.abs().max(1.0));
            }
        }
    }

    #[test]
    fn chained_blocks_keep_shapes(n in 1usize..4, cycle in 1usize..4, tau in 1usize..4, d in 1usize..3, seed: u64) {
        let t_in = cycle * tau;
        let h = gaussian(seed, &[n, t_in, d], 1.0);
        let first = attn_norm_temporal(&h, &build_seasonal_inference(&seasonal(seed, cycle, t_in), t_in).unwrap(), EPS).unwrap();
        let window = t_in.min(3);
        let st = ShortTermParams { window, w_st: gaussian(seed, &[window], 1.0), w_st_hat: Tensor::zeros(&[window, window]) };
        let second = attn_norm_temporal(&first.residual, &build_short_term_inference(&st, t_in).unwrap(), EPS).unwrap();
        let third = attn_norm_spatial(&second.residual, &build_spatial_inference(&second.residual).unwrap(), EPS).unwrap();
        for t in [&first, &second, &third] {
            prop_assert_eq!(t.mu.shape(), h.shape());
            prop_assert_eq!(t.sigma.shape(), h.shape());
            prop_assert_eq!(t.residual.shape(), h.shape());
        }
    }

    #[test]
    fn correlations_stay_in_unit_interval(n in 8usize..60, k in 0usize..4, tau in 0usize..6, seed: u64) {
        let cols: Vec<Vec<f64>> = (0..k).map(|i| gaussian(seed + i as u64, &[n], 1.0).into_data()).collect();
        let z = ControlSet::from_columns(cols).unwrap();
        let x = gaussian(seed + 10, &[n], 1.0).into_data();
        let y: Vec<f64> = x.iter().zip(gaussian(seed + 11, &[n], 0.1).data()).map(|(a, e)| -a + e).collect();
        if let Some(r) = conditional_correlation(&x, &y, &z).unwrap().value() {
            prop_assert!(r.abs() <= 1.0 + 1e-12);
        }
        if let Some(r) = conditional_autocorrelation(&y, &z, tau.min(n - 1)).unwrap().value() {
            prop_assert!(r.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn windows_never_cross_their_split(len in 60usize..300, t_in in 1usize..12, t_out in 1usize..8) {
        let raw = SeriesTable::new(vec!["a".into()], vec![(0..len).map(|t| t as f64).collect()], None).unwrap();
        let split = SplitFractions::default();
        let ranges = split.ranges(len).unwrap();
        let sets = make_windows(Arc::new(raw.clone()), t_in, t_out, split);
        if let Ok(sets) = sets {
            for (set, range) in sets.iter().zip(&ranges) {
                for i in 0..set.len() {
                    let (x, y) = set.get(i).unwrap();
                    prop_assert!(x.data()[0] as usize >= range.start);
                    prop_assert!((y.data()[t_out - 1] as usize) < range.end);
                }
            }
        }
        let norm = Normalizer::fit(&raw, ranges[0].clone()).unwrap();
        let mean = (ranges[0].start + ranges[0].end - 1) as f64 / 2.0;
        prop_assert!((norm.mean[0] - mean).abs() < 1e-9);
        let back = norm.invert_table(&norm.apply(&raw).unwrap()).unwrap();
        for (a, b) in back.channel(0).iter().zip(raw.channel(0)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    // Composite tape operations used by the model against central differences.
    #[test]
    fn tape_blocks_match_finite_differences(n in 1usize..3, cycle in 1usize..4, tau in 1usize..4, d in 1usize..3, k in 1usize..3, seed: u64) {
        let t_in = cycle * tau;
        let layout = MapLayout::seasonal_inference(cycle, t_in).unwrap();
        let h = gaussian(seed, &[n, t_in, d], 1.0);
        let logits = gaussian(seed + 1, &[tau, tau], 1.0);
        let target = gaussian(seed + 2, &[n, t_in, d], 1.0);
        let report = grad_check(
            |tape, v| {
                let map = layout.build_var(tape, v[1])?;
                let t = attn_norm_temporal_var(tape, v[0], map, Some(layout.support().clone()), EPS)?;
                let prod = tape.mul(t.residual, t.mu)?;
                let s = tape.add(prod, t.sigma)?;
                let diff = tape.sub(s, v[2])?;
                let sq = tape.square(diff)?;
                tape.mean(sq)
            },
            &[h, logits, target],
            1e-5,
            1e-4,
        )
        .unwrap();
        prop_assert!(report.passed, "relative error {}", report.max_rel_error);

        let s = gaussian(seed + 3, &[n, t_in, 8 * d], 1.0);
        let p = FusionParams::random(d, k, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut point = vec![s];
        point.extend(p.tensors().into_iter().cloned());
        let report = grad_check(
            |tape, v| {
                let fv = sscnn_core::fusion::FusionVars {
                    conv_a: v[1], bias_a: v[2], conv_b: v[3], bias_b: v[4], conv_mix: v[5], bias_mix: v[6],
                };
                let out = polynomial_regression_var(tape, v[0], &fv)?;
                let sq = tape.square(out)?;
                tape.mean(sq)
            },
            &point,
            1e-5,
            1e-4,
        )
        .unwrap();
        prop_assert!(report.passed, "relative error {}", report.max_rel_error);
    }
}

#[test]
fn fusion_is_linear_without_the_mix_kernel() {
    let (d, k) = (3, 2);
    let mut p = FusionParams::random(d, k, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    p.conv_mix = Tensor::zeros(p.conv_mix.shape());
    p.bias_mix = Tensor::zeros(p.bias_mix.shape());
    p.bias_a = Tensor::zeros(p.bias_a.shape());
    let s1 = gaussian(1, &[2, 7, 8 * d], 1.0);
    let s2 = gaussian(2, &[2, 7, 8 * d], 1.0);
    let sum = Tensor::new(s1.shape().to_vec(), s1.data().iter().zip(s2.data()).map(|(a, b)| 2.0 * a - 3.0 * b).collect()).unwrap();
    let (y1, y2) = (polynomial_regression(&s1, &p).unwrap(), polynomial_regression(&s2, &p).unwrap());
    let combo = Tensor::new(y1.shape().to_vec(), y1.data().iter().zip(y2.data()).map(|(a, b)| 2.0 * a - 3.0 * b).collect()).unwrap();
    assert!(polynomial_regression(&sum, &p).unwrap().max_abs_diff(&combo) < 1e-12);
}
