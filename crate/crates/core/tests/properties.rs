use proptest::prelude::*;

use sgao::grammar::{export_parse_graph, import_parse_graph, parse_graph, reconstruct_from_layer};
use sgao::io::{Checkpoint, Dtype};
use sgao::ops::{conv2d, deconv2d, deconv2d_output_extent, topk};
use sgao::rng::Stream;
use sgao::{Generator, GeneratorConfig, Tensor};

fn tensor(shape: [usize; 3], seed: u64) -> Tensor {
    Stream::new(seed).normal_tensor(&shape, 1.0)
}

fn small_ints(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-3i32..4).prop_map(f64::from), n)
}

/// `[c_in, k, k, c_out]` → `[c_out, k, k, c_in]`.
fn swap_channels(ker: &Tensor) -> Tensor {
    let s = ker.shape();
    let (ci, k, co) = (s[0], s[1], s[3]);
    let mut out = Tensor::zeros(&[co, k, k, ci]);
    for a in 0..ci {
        for x in 0..k {
            for y in 0..k {
                for b in 0..co {
                    out.set(&[b, x, y, a], ker.get(&[a, x, y, b]));
                }
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn topk_keeps_the_k_largest(data in (1usize..30).prop_flat_map(small_ints), k in 0usize..35) {
        let n = data.len();
        let t = Tensor::from_vec(&[n, 1, 1], data.clone()).unwrap();
        let r = topk(&t, k);
        prop_assert_eq!(r.k_effective, k.min(n));
        prop_assert_eq!(r.mask.sum() as usize, k.min(n));
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| data[b].total_cmp(&data[a]));
        prop_assert_eq!(&r.indices, &order[..k.min(n)].to_vec());
        for i in 0..n {
            let kept = r.mask.data()[i] == 1.0;
            prop_assert_eq!(r.values.data()[i], if kept { data[i] } else { 0.0 });
        }
    }

    #[test]
    fn topk_is_idempotent_on_positive_survivors(data in prop::collection::vec(0.01f64..5.0, 1..40), k in 1usize..45) {
        let t = Tensor::from_vec(&[data.len(), 1, 1], data).unwrap();
        let once = topk(&t, k);
        let twice = topk(&once.values, k);
        prop_assert_eq!(twice.mask, once.mask.clone());
        prop_assert_eq!(twice.values, once.values);
    }

    #[test]
    fn deconv_output_extent(n in 1usize..8, k in 1usize..7, s in 1usize..5, p in 0usize..3) {
        let expect = ((n - 1) * s + k) as i64 - 2 * p as i64;
        match deconv2d_output_extent(n, k, s, p) {
            Ok(e) => prop_assert_eq!(e as i64, expect),
            Err(_) => prop_assert!(expect <= 0),
        }
    }

    #[test]
    fn deconv_is_linear_without_bias(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, stride in 1usize..4, pad in 0usize..2) {
        let u = tensor([3, 2, 2], seed);
        let v = tensor([3, 2, 2], seed ^ 1);
        let ker = Stream::new(seed ^ 2).normal_tensor(&[2, 4, 4, 3], 1.0);
        let zero = Tensor::zeros(&[3]);
        let f = |x: &Tensor| deconv2d(x, &ker, &zero, stride, pad).unwrap();
        let lhs = f(&u.scale(a).add(&v.scale(b)).unwrap());
        let rhs = f(&u).scale(a).add(&f(&v).scale(b)).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12 * (1.0 + lhs.norm()));
    }

    #[test]
    fn conv_is_adjoint_of_deconv(seed in any::<u64>(), stride in 1usize..4, pad in 0usize..2) {
        let x = tensor([3, 2, 2], seed);
        let ker = Stream::new(seed ^ 3).normal_tensor(&[2, 4, 4, 3], 1.0);
        let out = deconv2d(&x, &ker, &Tensor::zeros(&[3]), stride, pad).unwrap();
        let s = out.shape();
        let y = tensor([s[0], s[1], s[2]], seed ^ 4);
        let back = conv2d(&y, &swap_channels(&ker), &Tensor::zeros(&[2]), stride, pad).unwrap();
        prop_assert_eq!(back.shape(), x.shape());
        let (l, r) = (out.dot(&y).unwrap(), x.dot(&back).unwrap());
        prop_assert!((l - r).abs() < 1e-10 * (1.0 + l.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn frozen_linearization_holds(param_seed in any::<u64>(), z_seed in any::<u64>()) {
        let g = Generator::init(GeneratorConfig::default(), param_seed).unwrap();
        let z = Stream::new(z_seed).normal_tensor(&[20], 1.0);
        let trace = g.trace(&z).unwrap();
        prop_assert_eq!(&g.reevaluate_frozen(&trace, &z).unwrap(), &trace.output);
        for layer in 0..trace.layers.len() {
            let y = reconstruct_from_layer(&g, &trace, layer).unwrap();
            prop_assert!(y.max_abs_diff(&trace.output).unwrap() < 1e-9);
        }
    }

    #[test]
    fn parse_graph_json_round_trips(param_seed in any::<u64>(), z_seed in any::<u64>(), scale in 0.1f64..10.0) {
        let g = Generator::init(GeneratorConfig::default(), param_seed).unwrap();
        let z = Stream::new(z_seed).normal_tensor(&[20], scale);
        let pg = parse_graph(&g.trace(&z).unwrap()).unwrap();
        let text = export_parse_graph(&pg).unwrap();
        let back = import_parse_graph(&text).unwrap();
        prop_assert_eq!(&back, &pg);
        prop_assert_eq!(export_parse_graph(&back).unwrap(), text);
    }

    #[test]
    fn checkpoint_round_trips(seed in any::<u64>()) {
        let g = Generator::init(GeneratorConfig::default(), seed).unwrap();
        let ck = Checkpoint::from_generator(&g, seed);
        let exact = Checkpoint::from_bytes(&ck.to_bytes(Dtype::F64).unwrap()).unwrap();
        prop_assert_eq!(exact.generator().unwrap(), g.clone());
        let narrow = Checkpoint::from_bytes(&ck.to_bytes(Dtype::F32).unwrap()).unwrap();
        for ((na, a), (nb, b)) in narrow.tensors.iter().zip(&ck.tensors) {
            prop_assert_eq!(na, nb);
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert_eq!(*x, *y as f32 as f64);
            }
        }
    }
}
