use std::collections::BTreeMap;

use privseg_core::nn::*;
use privseg_tensor::rng::CounterRng;
use privseg_tensor::{grad_check, Tensor};

fn rand_tensor(rng: &mut CounterRng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new((0..n).map(|_| rng.uniform(lo, hi)).collect(), shape).unwrap()
}

fn binary(rng: &mut CounterRng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new((0..n).map(|_| if rng.next_f64() < 0.4 { 1.0 } else { 0.0 }).collect(), shape).unwrap()
}

/// Splits a flat parameter vector into the model's tensors, differentiably.
fn unflatten_tensor(model: &Model, theta: &Tensor) -> Vec<Tensor> {
    let mut at = 0;
    model
        .params()
        .iter()
        .map(|(_, t)| {
            let n = t.numel();
            let p = theta.slice(0, at, n).unwrap().reshape(t.shape()).unwrap();
            at += n;
            p
        })
        .collect()
}

#[test]
fn output_shape_contract() {
    let m = build_model(&ModelSpec::new(BackboneStyle::Plain), 0).unwrap();
    let x = Tensor::zeros(&[2, 1, 32, 32]).unwrap();
    assert_eq!(m.forward(m.params(), &x).unwrap().shape(), &[2, 1, 32, 32]);
    let bad = Tensor::zeros(&[1, 1, 20, 20]).unwrap();
    let err = m.forward(m.params(), &bad).unwrap_err().to_string();
    assert!(err.contains("divisible"), "{err}");
}

#[test]
fn build_is_deterministic() {
    for style in BackboneStyle::UNETS {
        let spec = ModelSpec::new(style);
        let a = build_model(&spec, 42).unwrap();
        let b = build_model(&spec, 42).unwrap();
        assert_eq!(a.params(), b.params());
        assert!(a.params().names().eq(b.params().names()));
        let c = build_model(&spec, 43).unwrap();
        assert_ne!(a.params().flatten(), c.params().flatten());
    }
}

#[test]
fn default_specs_are_lite_and_dilated_is_smallest_but_not_cheapest() {
    let mut counts = Vec::new();
    for style in BackboneStyle::UNETS {
        let m = build_model(&ModelSpec::new(style), 0).unwrap();
        let p = count_params(&m);
        assert!((1_000..=50_000).contains(&p), "{style}: {p}");
        assert_eq!(p, m.params().flatten().len());
        counts.push((style, p, count_macs(&m, &[1, 32, 32]).unwrap()));
    }
    let min_p = counts.iter().min_by_key(|c| c.1).unwrap();
    let min_m = counts.iter().min_by_key(|c| c.2).unwrap();
    assert_eq!(min_p.0, BackboneStyle::Dilated);
    assert_ne!(min_m.0, BackboneStyle::Dilated);
}

#[test]
fn single_conv_counts() {
    let m = build_model(&ModelSpec::single_conv(8, 3), 0).unwrap();
    let p = m.params();
    let conv = p.get("features.weight").unwrap().numel() + p.get("features.bias").unwrap().numel();
    assert_eq!(conv, 80);
    // the 1x1 head adds 8 weights + 1 bias and 8·32·32 MACs
    assert_eq!(count_params(&m), 80 + 9);
    assert_eq!(count_macs(&m, &[1, 32, 32]).unwrap(), 73_728 + 8 * 32 * 32);
}

#[test]
fn instance_norm_examples() {
    let one = Tensor::ones(&[1]).unwrap();
    let zero = Tensor::zeros(&[1]).unwrap();
    let c = Tensor::full(&[1, 1, 2, 2], 3.0).unwrap();
    assert!(instance_norm(&c, &one, &zero, NORM_EPS).unwrap().data().iter().all(|&v| v == 0.0));

    let x = Tensor::new(vec![1.0, 3.0], &[1, 1, 1, 2]).unwrap();
    assert_eq!(instance_norm(&x, &one, &zero, 0.0).unwrap().data(), &[-1.0, 1.0]);

    let degenerate = Tensor::ones(&[1, 1, 1, 1]).unwrap();
    assert!(instance_norm(&degenerate, &one, &zero, NORM_EPS).is_err());
}

#[test]
fn instance_norm_statistics() {
    let mut rng = CounterRng::new(5, 0);
    let (n, c, hw) = (3, 4, 36);
    let x = rand_tensor(&mut rng, &[n, c, 6, 6], -2.0, 5.0);
    let gain = Tensor::ones(&[c]).unwrap();
    let bias = Tensor::zeros(&[c]).unwrap();
    let y = instance_norm(&x, &gain, &bias, NORM_EPS).unwrap();
    for s in 0..n * c {
        let xs = &x.data()[s * hw..(s + 1) * hw];
        let ys = &y.data()[s * hw..(s + 1) * hw];
        let xm = xs.iter().sum::<f64>() / hw as f64;
        let xv = xs.iter().map(|v| (v - xm).powi(2)).sum::<f64>() / hw as f64;
        let m = ys.iter().sum::<f64>() / hw as f64;
        let v = ys.iter().map(|v| (v - m).powi(2)).sum::<f64>() / hw as f64;
        assert!(m.abs() < 1e-10);
        // with eps the variance is xv / (xv + eps)
        let expect = xv / (xv + NORM_EPS);
        assert!((v - expect).abs() < 1e-12);
        assert!((v - 1.0).abs() < 1e-5);
    }
}

#[test]
fn instance_norm_gradient() {
    let mut rng = CounterRng::new(6, 0);
    let x = rand_tensor(&mut rng, &[2, 3, 3, 3], -1.0, 1.0);
    let gain = rand_tensor(&mut rng, &[3], 0.5, 1.5);
    let bias = rand_tensor(&mut rng, &[3], -0.5, 0.5);
    let proj = rand_tensor(&mut rng, &[2, 3, 3, 3], -1.0, 1.0);
    let r = grad_check(|t| Ok(instance_norm(t, &gain, &bias, NORM_EPS).unwrap().mul(&proj)?.sum()), &x, 1e-5).unwrap();
    assert!(r.max_rel_err < 1e-5, "{}", r.max_rel_err);
}

#[test]
fn dice_score_examples() {
    let m = |v: &[f64]| Tensor::new(v.to_vec(), &[1, 1, 2, 4]).unwrap();
    let a = m(&[1., 1., 1., 1., 0., 0., 0., 0.]);
    let b = m(&[0., 0., 1., 1., 1., 1., 0., 0.]);
    let disjoint = m(&[0., 0., 0., 0., 1., 1., 1., 1.]);
    let empty = m(&[0.; 8]);
    assert_eq!(dice_score(&a, &a).unwrap(), 1.0);
    assert_eq!(dice_score(&a, &disjoint).unwrap(), 0.0);
    assert_eq!(dice_score(&a, &b).unwrap(), 0.5);
    assert_eq!(dice_score(&b, &a).unwrap(), 0.5);
    assert_eq!(dice_score(&empty, &empty).unwrap(), 1.0);
    assert!(dice_score(&m(&[0.5; 8]), &a).is_err());
}

#[test]
fn dice_loss_limits() {
    let t = Tensor::new(vec![1., 0., 0., 1.], &[1, 1, 2, 2]).unwrap();
    let perfect = Tensor::new(vec![60., -60., -60., 60.], &[1, 1, 2, 2]).unwrap();
    assert!(dice_loss(&perfect, &t).unwrap().item().unwrap() < 1e-12);
    let zeros = Tensor::zeros(&[1, 1, 2, 2]).unwrap();
    let neg = Tensor::full(&[1, 1, 2, 2], -60.0).unwrap();
    assert!(dice_loss(&neg, &zeros).unwrap().item().unwrap() < 1e-12);
}

#[test]
fn dice_loss_gradient() {
    let mut rng = CounterRng::new(7, 0);
    let logits = rand_tensor(&mut rng, &[1, 1, 8, 8], -2.0, 2.0);
    let target = binary(&mut rng, &[1, 1, 8, 8]);
    let r = grad_check(|x| Ok(dice_loss(x, &target).unwrap()), &logits, 1e-5).unwrap();
    assert!(r.max_rel_err < 1e-5, "{}", r.max_rel_err);
}

#[test]
fn full_backbones_pass_grad_check() {
    let mut rng = CounterRng::new(8, 0);
    let x = rand_tensor(&mut rng, &[1, 1, 16, 16], 0.0, 1.0);
    let y = binary(&mut rng, &[1, 1, 16, 16]);
    for style in BackboneStyle::UNETS {
        let spec = ModelSpec::new(style).with_base_channels(2).with_depth(2);
        let m = build_model(&spec, 3).unwrap();
        let theta = Tensor::new(m.params().flatten(), &[count_params(&m)]).unwrap();
        let f = |t: &Tensor| Ok(dice_loss(&m.forward_tensors(&unflatten_tensor(&m, t), &x).unwrap(), &y).unwrap());
        let r = grad_check(f, &theta, 1e-6).unwrap();
        assert!(r.max_rel_err < 1e-4, "{style}: {}", r.max_rel_err);
    }
}

#[test]
fn zeroed_residual_branches_give_skip_path() {
    let m = build_model(&ModelSpec::new(BackboneStyle::Residual), 1).unwrap();
    let zeroed: Vec<(String, Tensor)> = m
        .params()
        .iter()
        .map(|(n, t)| {
            let branch = n.contains(".0.") || n.contains(".1.");
            let t = if branch { Tensor::zeros(t.shape()).unwrap() } else { t.clone() };
            (n.to_string(), t)
        })
        .collect();
    let p = ParamSet::new(zeroed).unwrap();
    let mut rng = CounterRng::new(9, 0);
    let x = rand_tensor(&mut rng, &[2, 1, 16, 16], 0.0, 1.0);
    assert_eq!(m.forward(&p, &x).unwrap(), m.forward_skip_only(&p, &x).unwrap());
}

#[test]
fn samples_do_not_interact() {
    // no running statistics: a sample's output ignores its batch mates
    let mut rng = CounterRng::new(10, 0);
    for style in BackboneStyle::UNETS {
        let m = build_model(&ModelSpec::new(style).with_base_channels(4), 2).unwrap();
        let a = rand_tensor(&mut rng, &[1, 1, 16, 16], 0.0, 1.0);
        let b = rand_tensor(&mut rng, &[1, 1, 16, 16], 0.0, 1.0);
        let alone = m.forward(m.params(), &a).unwrap();
        let _ = m.forward(m.params(), &b).unwrap();
        let again = m.forward(m.params(), &a).unwrap();
        let batched = m.forward(m.params(), &Tensor::concat(&[a, b], 0).unwrap()).unwrap();
        assert_eq!(alone, again);
        for (u, v) in alone.data().iter().zip(&batched.data()[..256]) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}

#[test]
fn param_set_round_trips() {
    let m = build_model(&ModelSpec::new(BackboneStyle::DepthwiseSeparable), 4).unwrap();
    let p = m.params();
    let flat = p.flatten();
    assert_eq!(p.unflatten(&flat).unwrap(), *p);
    let mut meta = BTreeMap::new();
    meta.insert("seed".to_string(), "4".to_string());
    let (back, meta2) = ParamSet::from_bytes(&p.to_bytes(&meta).unwrap()).unwrap();
    assert_eq!(back, *p);
    assert!(back.names().eq(p.names()));
    assert_eq!(meta, meta2);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.params");
    p.save(&path, &meta).unwrap();
    assert_eq!(ParamSet::load(&path).unwrap().0, *p);
}

#[test]
fn param_set_rejects_duplicates_and_bad_layouts() {
    let t = Tensor::zeros(&[2]).unwrap();
    assert!(ParamSet::new(vec![("a".into(), t.clone()), ("a".into(), t.clone())]).is_err());
    let p = ParamSet::new(vec![("a".into(), t)]).unwrap();
    assert!(p.unflatten(&[1.0, 2.0, 3.0]).is_err());
    assert!(ParamSet::from_bytes(b"garbage").is_err());
}

#[test]
fn per_sample_grads_sum_to_batch_gradient() {
    let m = build_model(&ModelSpec::new(BackboneStyle::Plain).with_base_channels(4), 5).unwrap();
    let mut rng = CounterRng::new(11, 0);
    let xs: Vec<Tensor> = (0..3).map(|_| rand_tensor(&mut rng, &[1, 1, 16, 16], 0.0, 1.0)).collect();
    let ys: Vec<Tensor> = (0..3).map(|_| binary(&mut rng, &[1, 1, 16, 16])).collect();
    let pairs: Vec<(Tensor, Tensor)> = xs.iter().cloned().zip(ys.iter().cloned()).collect();
    let per = per_sample_grads(&m, m.params(), &pairs).unwrap();
    let (_, batch) = loss_and_grad(
        &m,
        m.params(),
        &Tensor::concat(&xs, 0).unwrap(),
        &Tensor::concat(&ys, 0).unwrap(),
    )
    .unwrap();
    for (i, g) in batch.iter().enumerate() {
        let s: f64 = per.iter().map(|(_, p)| p[i]).sum();
        assert!((s - 3.0 * g).abs() < 1e-9);
    }
}

#[test]
fn optimizers() {
    let mut sgd = Optimizer::new(OptimizerConfig::sgd(0.5), 2);
    let mut p = vec![1.0, 2.0];
    sgd.step(&mut p, &[2.0, -4.0]);
    assert_eq!(p, vec![0.0, 4.0]);

    // first Adam step moves each coordinate by lr·sign(g)
    let mut adam = Optimizer::new(OptimizerConfig::adam(0.1), 2);
    let mut p = vec![0.0, 0.0];
    adam.step(&mut p, &[3.0, -0.01]);
    assert!((p[0] + 0.1).abs() < 1e-6 && (p[1] - 0.1).abs() < 1e-4);
    assert_eq!(adam.steps(), 1);
    assert_eq!("adam".parse::<OptimizerKind>().unwrap(), OptimizerKind::Adam);
}
