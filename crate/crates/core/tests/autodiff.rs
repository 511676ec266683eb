//! Operation-level checks of the autodiff engine against scalar-loop oracles
//! and central differences.

use babynet_core::autodiff::{conv3d_direct, Conv3dSpec, Mode, RunningStats};
use babynet_core::gradcheck::{check_graph, GradCheckOptions};
use babynet_core::rng;
use babynet_core::{Error, Graph, Parameter, Tensor};
use rand::Rng;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng::seeded(seed);
    Tensor::from_fn(shape, |_| r.gen_range(-1.0..1.0))
}

fn assert_close(a: &[f32], b: &[f32], tol: f32) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "index {i}: {x} vs {y}");
    }
}

// Oracle: textbook 7-deep loop written against raw indices.
fn conv_oracle(
    x: &Tensor,
    w: &Tensor,
    b: Option<&Tensor>,
    stride: [usize; 3],
    pad: [usize; 3],
) -> (Vec<usize>, Vec<f32>) {
    let xs = x.shape();
    let ws = w.shape();
    let out_len = |i: usize| (xs[2 + i] + 2 * pad[i] - ws[2 + i]) / stride[i] + 1;
    let (ot, oh, ow) = (out_len(0), out_len(1), out_len(2));
    let shape = vec![xs[0], ws[0], ot, oh, ow];
    let mut out = Vec::new();
    for n in 0..xs[0] {
        for co in 0..ws[0] {
            for t in 0..ot {
                for h in 0..oh {
                    for wi in 0..ow {
                        let mut acc = b.map_or(0.0, |b| b.data()[co]);
                        for ci in 0..xs[1] {
                            for kt in 0..ws[2] {
                                for kh in 0..ws[3] {
                                    for kw in 0..ws[4] {
                                        let it = (t * stride[0] + kt) as i64 - pad[0] as i64;
                                        let ih = (h * stride[1] + kh) as i64 - pad[1] as i64;
                                        let iw = (wi * stride[2] + kw) as i64 - pad[2] as i64;
                                        if it < 0
                                            || ih < 0
                                            || iw < 0
                                            || it >= xs[2] as i64
                                            || ih >= xs[3] as i64
                                            || iw >= xs[4] as i64
                                        {
                                            continue;
                                        }
                                        acc += x.get(&[n, ci, it as usize, ih as usize, iw as usize])
                                            * w.get(&[co, ci, kt, kh, kw]);
                                    }
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
    }
    (shape, out)
}

// input shape, weight shape, stride, padding
type ConvCase = (&'static [usize], &'static [usize], [usize; 3], [usize; 3]);

#[test]
fn conv3d_matches_loop_oracle() {
    let cases: &[ConvCase] = &[
        (&[1, 1, 5, 1, 1], &[1, 1, 3, 1, 1], [1, 1, 1], [1, 0, 0]),
        (&[2, 2, 3, 4, 5], &[3, 2, 3, 3, 3], [1, 2, 2], [1, 1, 1]),
        (&[1, 3, 4, 4, 4], &[2, 3, 1, 1, 1], [2, 2, 2], [0, 0, 0]),
        (&[1, 1, 4, 6, 6], &[2, 1, 3, 5, 5], [1, 2, 2], [1, 2, 2]),
    ];
    for (i, &(xs, ws, stride, pad)) in cases.iter().enumerate() {
        let x = random(xs, 10 + i as u64);
        let w = random(ws, 20 + i as u64);
        let b = random(&[ws[0]], 30 + i as u64);
        let (shape, want) = conv_oracle(&x, &w, Some(&b), stride, pad);
        let spec = Conv3dSpec::new(stride, pad);

        let mut g = Graph::new();
        let (xv, wv, bv) = (g.constant(x.clone()), g.constant(w.clone()), g.constant(b.clone()));
        let y = g.conv3d(xv, wv, Some(bv), spec).unwrap();
        assert_eq!(g.shape(y), shape.as_slice());
        assert_close(g.value(y).data(), &want, 1e-5);

        let direct = conv3d_direct(&x, &w, Some(&b), spec).unwrap();
        assert_close(direct.data(), g.value(y).data(), 1e-5);
    }
}

#[test]
fn conv3d_stem_geometry() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[1, 1, 16, 64, 64]));
    let w = g.constant(Tensor::zeros(&[64, 1, 3, 7, 7]));
    let y = g
        .conv3d(x, w, None, Conv3dSpec::new([1, 2, 2], [1, 3, 3]))
        .unwrap();
    assert_eq!(g.shape(y), &[1, 64, 16, 32, 32]);
}

#[test]
fn conv3d_identity_kernel() {
    let x = random(&[1, 1, 3, 4, 5], 1);
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let w = g.constant(Tensor::full(&[1, 1, 1, 1, 1], 1.0));
    let y = g.conv3d(xv, w, None, Conv3dSpec::unit()).unwrap();
    assert_eq!(g.value(y), &x);
}

#[test]
fn conv3d_channel_mismatch_reports_both_shapes() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[1, 2, 3, 3, 3]));
    let w = g.constant(Tensor::zeros(&[4, 3, 1, 1, 1]));
    match g.conv3d(x, w, None, Conv3dSpec::unit()) {
        Err(Error::Shape { lhs, rhs, .. }) => {
            assert_eq!(lhs, vec![1, 2, 3, 3, 3]);
            assert_eq!(rhs, vec![4, 3, 1, 1, 1]);
        }
        other => panic!("expected shape error, got {other:?}"),
    }
}

#[test]
fn conv3d_gradients() {
    let mut params = vec![
        Parameter::new("x", random(&[2, 2, 3, 4, 4], 3)),
        Parameter::new("w", random(&[3, 2, 3, 3, 3], 4)),
        Parameter::new("b", random(&[3], 5)),
    ];
    let probe = random(&[2, 3, 2, 2, 2], 6);
    let report = check_graph(
        &mut params,
        |g, v| {
            let y = g.conv3d(v[0], v[1], Some(v[2]), Conv3dSpec::new([2, 2, 2], [1, 1, 1]))?;
            let p = g.constant(probe.clone());
            let prod = g.mul(y, p)?;
            Ok(g.sum(prod))
        },
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.passed(), "max rel error {} {:?}", report.max_rel_error(), report.worst());
}

fn bn_oracle(x: &Tensor, gamma: &[f32], beta: &[f32], eps: f64) -> Vec<f32> {
    let s = x.shape();
    let (n, c) = (s[0], s[1]);
    let vol: usize = s[2..].iter().product();
    let mut out = vec![0.0; x.numel()];
    for ch in 0..c {
        let mut vals = Vec::new();
        for b in 0..n {
            for i in 0..vol {
                vals.push(x.data()[(b * c + ch) * vol + i] as f64);
            }
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
        for b in 0..n {
            for i in 0..vol {
                let idx = (b * c + ch) * vol + i;
                let xh = (x.data()[idx] as f64 - mean) / (var + eps).sqrt();
                out[idx] = (gamma[ch] as f64 * xh + beta[ch] as f64) as f32;
            }
        }
    }
    out
}

#[test]
fn batch_norm_matches_scalar_oracle() {
    let x = random(&[2, 3, 2, 4, 4], 7);
    let gamma = [0.5, 1.5, -1.0];
    let beta = [0.1, -0.2, 0.3];
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let gv = g.constant(Tensor::new(&[3], gamma.to_vec()).unwrap());
    let bv = g.constant(Tensor::new(&[3], beta.to_vec()).unwrap());
    let running = RunningStats::new(3);
    let (y, moments) = g.batch_norm(xv, gv, bv, &running, Mode::Train, 1e-5).unwrap();
    assert_close(g.value(y).data(), &bn_oracle(&x, &gamma, &beta, 1e-5), 1e-5);

    let mut running = running;
    running.update(&moments.unwrap(), 0.1);
    assert!(running.is_initialized());
}

#[test]
fn batch_norm_constant_input_yields_beta() {
    let x = Tensor::from_fn(&[2, 2, 1, 2, 2], |i| if (i / 4) % 2 == 0 { 3.0 } else { -7.0 });
    let mut g = Graph::new();
    let xv = g.constant(x);
    let gv = g.constant(Tensor::full(&[2], 2.0));
    let bv = g.constant(Tensor::new(&[2], vec![0.25, -0.5]).unwrap());
    let (y, _) = g
        .batch_norm(xv, gv, bv, &RunningStats::new(2), Mode::Train, 1e-5)
        .unwrap();
    for (i, v) in g.value(y).data().iter().enumerate() {
        let want = if (i / 4) % 2 == 0 { 0.25 } else { -0.5 };
        assert_eq!(*v, want);
    }
}

#[test]
fn batch_norm_output_is_standardized() {
    let x = Tensor::from_fn(&[4, 2, 2, 3, 3], |i| ((i * 37) % 101) as f32 * 0.3 - 5.0);
    let mut g = Graph::new();
    let xv = g.constant(x);
    let gv = g.constant(Tensor::full(&[2], 1.0));
    let bv = g.constant(Tensor::zeros(&[2]));
    let (y, _) = g
        .batch_norm(xv, gv, bv, &RunningStats::new(2), Mode::Train, 1e-5)
        .unwrap();
    let y = g.value(y);
    for ch in 0..2 {
        let vals: Vec<f64> = (0..4)
            .flat_map(|b| {
                let start = (b * 2 + ch) * 18;
                y.data()[start..start + 18].iter().map(|&v| v as f64)
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 1e-4, "{mean}");
        assert!((var - 1.0).abs() < 1e-4, "{var}");
    }
}

#[test]
fn batch_norm_eval_requires_running_stats() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[1, 2, 1, 1, 1]));
    let gv = g.constant(Tensor::full(&[2], 1.0));
    let bv = g.constant(Tensor::zeros(&[2]));
    let err = g
        .batch_norm(x, gv, bv, &RunningStats::new(2), Mode::Eval, 1e-5)
        .unwrap_err();
    assert_eq!(err, Error::UninitializedStats);
}

#[test]
fn batch_norm_gradients_both_modes() {
    for mode in [Mode::Train, Mode::Eval] {
        let running = RunningStats::from_values(vec![0.1, -0.2], vec![0.8, 1.3]).unwrap();
        let probe = random(&[2, 2, 2, 2, 2], 8);
        let mut params = vec![
            Parameter::new("x", random(&[2, 2, 2, 2, 2], 9)),
            Parameter::new("gamma", Tensor::new(&[2], vec![1.2, 0.7]).unwrap()),
            Parameter::new("beta", Tensor::new(&[2], vec![0.1, -0.3]).unwrap()),
        ];
        let report = check_graph(
            &mut params,
            |g, v| {
                let (y, _) = g.batch_norm(v[0], v[1], v[2], &running, mode, 1e-5)?;
                let p = g.constant(probe.clone());
                let prod = g.mul(y, p)?;
                Ok(g.sum(prod))
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.passed(), "{mode:?}: {}", report.max_rel_error());
    }
}

#[test]
fn relu_values_and_gradients() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::new(&[3], vec![-1.0, 0.0, 2.0]).unwrap().with_requires_grad(true));
    let y = g.relu(x);
    assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
    let s = g.sum(y);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[0.0, 0.0, 1.0]);

    let mut g = Graph::new();
    let x = g.leaf(Tensor::new(&[2], vec![-1.0, 3.0]).unwrap().with_requires_grad(true));
    let y = g.relu(x);
    let s = g.sum(y);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[0.0, 1.0]);

    let mut g = Graph::new();
    let x = g.leaf(Tensor::full(&[4], -2.0).with_requires_grad(true));
    let y = g.relu(x);
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    let s = g.sum(y);
    g.backward(s).unwrap();
    assert!(g.grad(x).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn linear_matches_dot_oracle() {
    let x = random(&[3, 5], 11);
    let w = random(&[4, 5], 12);
    let b = random(&[4], 13);
    let mut g = Graph::new();
    let (xv, wv, bv) = (g.constant(x.clone()), g.constant(w.clone()), g.constant(b.clone()));
    let y = g.linear(xv, wv, Some(bv)).unwrap();
    let mut want = Vec::new();
    for n in 0..3 {
        for o in 0..4 {
            let mut acc = b.data()[o];
            for f in 0..5 {
                acc += x.get(&[n, f]) * w.get(&[o, f]);
            }
            want.push(acc);
        }
    }
    assert_close(g.value(y).data(), &want, 1e-5);

    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let eye = g.constant(Tensor::from_fn(&[5, 5], |i| if i % 6 == 0 { 1.0 } else { 0.0 }));
    let zero = g.constant(Tensor::zeros(&[5]));
    let y = g.linear(xv, eye, Some(zero)).unwrap();
    assert_eq!(g.value(y), &x);

    let mut g = Graph::new();
    let xv = g.constant(Tensor::zeros(&[1, 512]));
    let wv = g.constant(Tensor::zeros(&[1, 512]));
    let bv = g.constant(Tensor::zeros(&[1]));
    let y = g.linear(xv, wv, Some(bv)).unwrap();
    assert_eq!(g.shape(y), &[1, 1]);
    let bad = g.constant(Tensor::zeros(&[1, 4]));
    assert!(matches!(g.linear(xv, bad, None), Err(Error::Shape { .. })));
}

#[test]
fn linear_mse_gradcheck() {
    let target = random(&[6, 2], 14);
    let mut params = vec![
        Parameter::new("x", random(&[6, 3], 15)),
        Parameter::new("w", random(&[2, 3], 16)),
        Parameter::new("b", random(&[2], 17)),
    ];
    let report = check_graph(
        &mut params,
        |g, v| {
            let y = g.linear(v[0], v[1], Some(v[2]))?;
            let t = g.constant(target.clone());
            g.mse_loss(y, t)
        },
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.max_rel_error() < 1e-3, "{}", report.max_rel_error());
}

#[test]
fn softmax_properties() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[3]));
    let y = g.softmax(x);
    assert_close(g.value(y).data(), &[1.0 / 3.0; 3], 1e-7);

    let x = g.constant(Tensor::new(&[2], vec![1000.0, 0.0]).unwrap());
    let y = g.softmax(x);
    let v = g.value(y).data();
    assert!(v.iter().all(|x| x.is_finite()));
    assert_close(v, &[1.0, 0.0], 1e-7);

    let x = g.constant(Tensor::from_fn(&[4, 7], |i| ((i * 13) % 17) as f32 * 150.0 - 1000.0));
    let y = g.softmax(x);
    for row in g.value(y).data().chunks(7) {
        let s: f32 = row.iter().sum();
        assert!((s - 1.0).abs() < 1e-6, "{s}");
        assert!(row.iter().all(|&p| p >= 0.0));
    }
}

#[test]
fn softmax_gradcheck() {
    let probe = random(&[3, 5], 18);
    let mut params = vec![Parameter::new("x", random(&[3, 5], 19))];
    let report = check_graph(
        &mut params,
        |g, v| {
            let y = g.softmax(v[0]);
            let p = g.constant(probe.clone());
            let prod = g.mul(y, p)?;
            Ok(g.sum(prod))
        },
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.passed(), "{}", report.max_rel_error());
}

#[test]
fn matmul_matches_loop_oracle() {
    let a = random(&[2, 3], 20);
    let b = random(&[3, 2], 21);
    let mut g = Graph::new();
    let (av, bv) = (g.constant(a.clone()), g.constant(b.clone()));
    let c = g.matmul(av, bv).unwrap();
    let mut want = vec![0.0; 4];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..3 {
                want[i * 2 + j] += a.get(&[i, k]) * b.get(&[k, j]);
            }
        }
    }
    assert_close(g.value(c).data(), &want, 1e-6);

    let eye = g.constant(Tensor::from_fn(&[2, 2], |i| if i % 3 == 0 { 1.0 } else { 0.0 }));
    let c2 = g.matmul(eye, c).unwrap();
    assert_eq!(g.value(c2).data(), g.value(c).data());

    // Two identical batch entries give two identical outputs.
    let mut batched = a.data().to_vec();
    batched.extend_from_slice(a.data());
    let mut batched_b = b.data().to_vec();
    batched_b.extend_from_slice(b.data());
    let ab = g.constant(Tensor::new(&[2, 2, 3], batched).unwrap());
    let bb = g.constant(Tensor::new(&[2, 3, 2], batched_b).unwrap());
    let cb = g.matmul(ab, bb).unwrap();
    let out = g.value(cb).data();
    assert_eq!(&out[..4], &out[4..]);
    assert_close(&out[..4], &want, 1e-6);

    assert!(matches!(g.matmul(ab, av), Err(Error::Shape { .. })));
}

#[test]
fn matmul_gradcheck() {
    let mut params = vec![
        Parameter::new("a", random(&[2, 3, 4], 22)),
        Parameter::new("b", random(&[2, 4, 2], 23)),
    ];
    let probe = random(&[2, 3, 2], 24);
    let report = check_graph(
        &mut params,
        |g, v| {
            let c = g.matmul(v[0], v[1])?;
            let p = g.constant(probe.clone());
            let prod = g.mul(c, p)?;
            Ok(g.sum(prod))
        },
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.passed(), "{}", report.max_rel_error());
}

#[test]
fn global_avg_pool_values_and_gradient() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::full(&[2, 3, 2, 2, 2], 4.5).with_requires_grad(true));
    let y = g.global_avg_pool(x).unwrap();
    assert_eq!(g.shape(y), &[2, 3]);
    assert!(g.value(y).data().iter().all(|&v| v == 4.5));
    let s = g.sum(y);
    g.backward(s).unwrap();
    assert!(g.grad(x).unwrap().iter().all(|&v| v == 1.0 / 8.0));

    let x = g.constant(Tensor::new(&[1, 1, 2, 1, 1], vec![1.0, 3.0]).unwrap());
    let y = g.global_avg_pool(x).unwrap();
    assert_eq!(g.value(y).data(), &[2.0]);
}

#[test]
fn conv_relu_gap_chain_gradcheck() {
    // Input is shifted so that every pre-activation stays well away from the
    // ReLU kink at 0.
    let w = random(&[3, 2, 2, 2, 2], 25);
    let x0 = random(&[1, 2, 3, 3, 3], 26);
    let mut g = Graph::new();
    let (xv, wv) = (g.constant(x0.clone()), g.constant(w.clone()));
    let pre = g.conv3d(xv, wv, None, Conv3dSpec::unit()).unwrap();
    let bias: Vec<f32> = (0..3)
        .map(|c| {
            let vals = &g.value(pre).data()[c * 8..(c + 1) * 8];
            let m = vals.iter().copied().fold(f32::INFINITY, f32::min);
            if m.abs() < 0.05 { 0.1 } else { 0.0 }
        })
        .collect();
    let mut params = vec![
        Parameter::new("x", x0),
        Parameter::new("w", w),
        Parameter::new("b", Tensor::new(&[3], bias).unwrap()),
    ];
    let report = check_graph(
        &mut params,
        |g, v| {
            let y = g.conv3d(v[0], v[1], Some(v[2]), Conv3dSpec::unit())?;
            let y = g.relu(y);
            let p = g.global_avg_pool(y)?;
            let sq = g.mul(p, p)?;
            Ok(g.sum(sq))
        },
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.max_rel_error() < 1e-2, "{}", report.max_rel_error());
}

#[test]
fn backward_accumulation_contract() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::from_fn(&[2, 3], |i| i as f32).with_requires_grad(true));
    let s = g.sum(x);
    g.backward(s).unwrap();
    assert!(g.grad(x).unwrap().iter().all(|&v| v == 1.0));
    g.backward(s).unwrap();
    assert!(g.grad(x).unwrap().iter().all(|&v| v == 2.0));
    g.zero_grad();
    assert!(g.grad(x).is_none());

    let mut g = Graph::new();
    let x = g.leaf(Tensor::new(&[2], vec![1.0, 2.0]).unwrap().with_requires_grad(true));
    let sq = g.mul(x, x).unwrap();
    let s = g.sum(sq);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[2.0, 4.0]);

    // One tensor feeding two consumers.
    let mut g = Graph::new();
    let x = g.leaf(Tensor::zeros(&[3]).with_requires_grad(true));
    let a = g.sum(x);
    let b = g.sum(x);
    let s = g.add(a, b).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[2.0, 2.0, 2.0]);

    let y = g.scale(x, 2.0);
    assert!(matches!(g.backward(y), Err(Error::NonScalarLoss(_))));
}

#[test]
fn broadcast_add_and_permute_gradcheck() {
    let mut params = vec![
        Parameter::new("a", random(&[1, 3, 4, 1], 27)),
        Parameter::new("b", random(&[1, 3, 1, 5], 28)),
        Parameter::new("c", random(&[2, 3, 1, 1], 29)),
    ];
    let probe = random(&[3, 2, 4, 5], 30);
    let report = check_graph(
        &mut params,
        |g, v| {
            let ab = g.add(v[0], v[1])?;
            let abc = g.add(ab, v[2])?;
            let p = g.permute(abc, &[1, 0, 2, 3])?;
            let q = g.constant(probe.clone());
            let prod = g.mul(p, q)?;
            Ok(g.sum(prod))
        },
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.passed(), "{}", report.max_rel_error());
}

#[test]
fn permute_moves_elements() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::from_fn(&[2, 3, 4], |i| i as f32));
    let y = g.permute(x, &[2, 0, 1]).unwrap();
    assert_eq!(g.shape(y), &[4, 2, 3]);
    let (xv, yv) = (g.value(x).clone(), g.value(y).clone());
    for a in 0..2 {
        for b in 0..3 {
            for c in 0..4 {
                assert_eq!(yv.get(&[c, a, b]), xv.get(&[a, b, c]));
            }
        }
    }
    assert!(g.permute(x, &[0, 0, 1]).is_err());
}

#[test]
fn mse_loss_values_and_gradient() {
    let mut g = Graph::new();
    let p = g.leaf(Tensor::new(&[2, 1], vec![2.0, 4.0]).unwrap().with_requires_grad(true));
    let t = g.constant(Tensor::new(&[2, 1], vec![3.0, 3.0]).unwrap());
    let l = g.mse_loss(p, t).unwrap();
    assert_eq!(g.value(l).data(), &[1.0]);
    g.backward(l).unwrap();
    assert_eq!(g.grad(p).unwrap(), &[-1.0, 1.0]);

    let same = g.mse_loss(t, t).unwrap();
    assert_eq!(g.value(same).data(), &[0.0]);

    let target = random(&[4, 1], 31);
    let mut params = vec![Parameter::new("pred", random(&[4, 1], 32))];
    let report = check_graph(
        &mut params,
        |g, v| {
            let t = g.constant(target.clone());
            g.mse_loss(v[0], t)
        },
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.passed());
}
