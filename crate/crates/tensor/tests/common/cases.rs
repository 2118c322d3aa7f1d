//! Randomized inputs for every primitive, shared by the gradient tests and
//! the workspace acceptance suite.
#![allow(dead_code)]

use privseg_tensor::rng::CounterRng;
use privseg_tensor::{Conv2dConfig, Result, Tensor};

pub const SEEDS: u64 = 20;
pub const PRIMITIVE_TOL: f64 = 1e-5;

pub fn rand_tensor(rng: &mut CounterRng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new((0..n).map(|_| rng.uniform(lo, hi)).collect(), shape).unwrap()
}

/// Reduces an op's output to a scalar through fixed random weights, so every
/// output element receives a distinct upstream gradient.
pub fn project(t: &Tensor, rng_seed: u64) -> Result<Tensor> {
    let mut rng = CounterRng::new(rng_seed, 99);
    let r = rand_tensor(&mut rng, t.shape(), -1.0, 1.0);
    t.dot(&r)
}

pub type Case = (&'static str, Vec<Tensor>, Box<dyn Fn(&[Tensor]) -> Result<Tensor>>);

pub fn cases(seed: u64) -> Vec<Case> {
    let mut rng = CounterRng::new(seed, 1);
    let mut r = |shape: &[usize]| rand_tensor(&mut rng, shape, -1.0, 1.0);
    let mut cases: Vec<Case> = vec![
        ("add", vec![r(&[3, 4]), r(&[3, 4])], Box::new(|t| t[0].add(&t[1]))),
        ("sub", vec![r(&[3, 4]), r(&[3, 4])], Box::new(|t| t[0].sub(&t[1]))),
        ("mul", vec![r(&[3, 4]), r(&[3, 4])], Box::new(|t| t[0].mul(&t[1]))),
        ("mul_scalar_tensor", vec![r(&[3, 4]), r(&[1])], Box::new(|t| t[0].mul(&t[1]))),
        ("neg", vec![r(&[5])], Box::new(|t| Ok(t[0].neg()))),
        ("affine_scalar", vec![r(&[5])], Box::new(|t| Ok(t[0].mul_scalar(-1.5).add_scalar(0.3)))),
        ("exp", vec![r(&[2, 3])], Box::new(|t| Ok(t[0].exp()))),
        ("relu", vec![r(&[4, 4])], Box::new(|t| Ok(t[0].relu()))),
        ("sigmoid", vec![r(&[4, 4]).mul_scalar(3.0)], Box::new(|t| Ok(t[0].sigmoid()))),
        ("sum", vec![r(&[2, 3, 2])], Box::new(|t| Ok(t[0].sum()))),
        ("mean", vec![r(&[2, 3, 2])], Box::new(|t| Ok(t[0].mean()))),
        ("expand", vec![r(&[1])], Box::new(|t| t[0].expand(&[3, 2]))),
        ("matmul", vec![r(&[3, 4]), r(&[4, 2])], Box::new(|t| t[0].matmul(&t[1]))),
        ("transpose", vec![r(&[3, 4])], Box::new(|t| t[0].transpose())),
        ("reshape", vec![r(&[3, 4])], Box::new(|t| t[0].reshape(&[2, 6]))),
        ("concat", vec![r(&[1, 2, 3, 3]), r(&[1, 3, 3, 3])], Box::new(|t| Tensor::concat(t, 1))),
        ("slice", vec![r(&[2, 5, 3])], Box::new(|t| t[0].slice(1, 1, 3))),
        ("pad", vec![r(&[1, 2, 3, 3])], Box::new(|t| t[0].pad_spatial(1))),
        ("channel_sum", vec![r(&[2, 3, 2, 2])], Box::new(|t| t[0].channel_sum())),
        ("channel_broadcast", vec![r(&[3])], Box::new(|t| t[0].channel_broadcast(&[2, 3, 2, 2]))),
        ("spatial_sum", vec![r(&[2, 3, 2, 2])], Box::new(|t| t[0].spatial_sum())),
        ("spatial_broadcast", vec![r(&[2, 3])], Box::new(|t| t[0].spatial_broadcast(2, 3))),
        ("transposed_conv2d", vec![r(&[1, 3, 3, 3]), r(&[3, 2, 2, 2])], Box::new(|t| t[0].conv_transpose2d(&t[1]))),
    ];
    let pos = |rng: &mut CounterRng, shape: &[usize]| rand_tensor(rng, shape, 0.5, 2.0);
    let mut prng = CounterRng::new(seed, 2);
    cases.push(("div", vec![r(&[3, 3]), pos(&mut prng, &[3, 3])], Box::new(|t| t[0].div(&t[1]))));
    cases.push(("log", vec![pos(&mut prng, &[6])], Box::new(|t| Ok(t[0].log()))));
    cases.push(("powf", vec![pos(&mut prng, &[6])], Box::new(|t| Ok(t[0].powf(2.5)))));
    cases.push(("powf_neg", vec![pos(&mut prng, &[6])], Box::new(|t| Ok(t[0].powf(-0.5)))));

    let convs = [
        ("conv2d_s1_p1", Conv2dConfig::new(1, 1), 2, 3, 3),
        ("conv2d_s2", Conv2dConfig::new(2, 1), 2, 3, 3),
        ("conv2d_dil2", Conv2dConfig::new(1, 2).with_dilation(2), 2, 2, 3),
        ("conv2d_dil4", Conv2dConfig::new(1, 4).with_dilation(4), 1, 2, 3),
        ("conv2d_depthwise", Conv2dConfig::new(1, 1).with_groups(3), 3, 3, 3),
        ("conv2d_1x1", Conv2dConfig::default(), 3, 2, 1),
    ];
    for (name, cfg, cin, cout, k) in convs {
        let x = r(&[2, cin, 6, 6]);
        let w = r(&[cout, cin / cfg.groups, k, k]);
        cases.push((name, vec![x.clone(), w.clone()], Box::new(move |t| t[0].conv2d(&t[1], cfg))));
        let y = x.conv2d(&w, cfg).unwrap();
        let gy = r(y.shape());
        cases.push((
            "conv2d_input_grad",
            vec![gy.clone(), w.clone()],
            Box::new(move |t| Tensor::conv2d_input_grad(&t[0], &t[1], (6, 6), cfg)),
        ));
        cases.push((
            "conv2d_weight_grad",
            vec![x.clone(), gy],
            Box::new(move |t| Tensor::conv2d_weight_grad(&t[0], &t[1], (k, k), cfg)),
        ));
    }
    cases
}
