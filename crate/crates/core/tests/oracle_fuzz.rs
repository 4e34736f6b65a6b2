use pane_core::chain::{pane_explain, pane_layer_to_layer};
use pane_core::grad::{backward_input_grad, boundary_grads, GradMode, GradRequest};
use pane_core::model::{forward, Conv2d, Layer, LayerSpec, ModelGraph};
use pane_core::oracle::{composed_linearization_row, dense_oracle, im2col_indices};
use pane_core::synth::{random_input, random_model, rng, RandomModelOptions};
use pane_core::Tensor;
use rand::Rng;

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().chain(a).fold(1e-300f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

#[test]
fn fast_chain_matches_dense_oracle_on_200_models() {
    let mut r = rng(7);
    for i in 0..200 {
        let opts = RandomModelOptions {
            bias: i % 3 != 0,
            norm: i % 2 == 0,
            max_side: 8,
        };
        let model = random_model(&mut r, opts);
        let trace = forward(&model, &random_input(&mut r, model.input_shape())).unwrap();
        for k in 0..model.class_count() {
            let fast = pane_explain(&model, &trace, k).unwrap();
            let dense = dense_oracle(&model, &trace, k).unwrap();
            assert!(max_rel(fast.pos.data(), dense.pos.data()) <= 1e-9, "model {i} class {k} pos");
            assert!(max_rel(fast.neg.data(), dense.neg.data()) <= 1e-9, "model {i} class {k} neg");
        }
    }
}

#[test]
fn total_excitation_equals_plain_gradient() {
    // pos + neg is the bias-stripped linearization, whose row is the input gradient.
    let mut r = rng(8);
    for _ in 0..50 {
        let model = random_model(&mut r, RandomModelOptions { norm: true, ..Default::default() });
        let trace = forward(&model, &random_input(&mut r, model.input_shape())).unwrap();
        let k = trace.logits().argmax();
        let pair = pane_explain(&model, &trace, k).unwrap();
        let grad = backward_input_grad(&GradRequest::new(&model, &trace, k)).unwrap();
        let lin = composed_linearization_row(&model, &trace, k).unwrap();
        assert!(max_rel(pair.sum().data(), grad.data()) <= 1e-9);
        assert!(max_rel(&lin, grad.data()) <= 1e-9);
    }
}

#[test]
fn layer_to_layer_full_span_matches_explain() {
    let mut r = rng(9);
    for _ in 0..30 {
        let model = random_model(&mut r, RandomModelOptions::default());
        let trace = forward(&model, &random_input(&mut r, model.input_shape())).unwrap();
        let n = model.layers().len();
        let dense = pane_layer_to_layer(&model, &trace, n, 0, None).unwrap();
        for k in 0..model.class_count() {
            let pair = pane_explain(&model, &trace, k).unwrap();
            assert_eq!(dense.pos_row(k), pair.pos.data());
            assert_eq!(dense.neg_row(k), pair.neg.data());
        }
    }
}

#[test]
fn boundary_gradients_end_at_the_seed() {
    let mut r = rng(10);
    let model = random_model(&mut r, RandomModelOptions::default());
    let trace = forward(&model, &random_input(&mut r, model.input_shape())).unwrap();
    let seed = Tensor::one_hot(model.class_count(), 0);
    let grads = boundary_grads(&model, &trace, &seed, GradMode::Plain).unwrap();
    assert_eq!(grads.len(), model.layers().len() + 1);
    assert_eq!(grads.last().unwrap(), &seed);
}

#[test]
fn convolution_matches_explicit_im2col() {
    let mut r = rng(11);
    for _ in 0..100 {
        let (c, h, w) = (r.gen_range(1..=3), r.gen_range(3..=9), r.gen_range(3..=9));
        let o = r.gen_range(1..=4);
        let k = r.gen_range(1..=3);
        let stride = r.gen_range(1..=2);
        let pad = r.gen_range(0..=1);
        let wt: Vec<f64> = (0..o * c * k * k).map(|_| r.gen_range(-1.0..1.0)).collect();
        let bias: Vec<f64> = (0..o).map(|_| r.gen_range(-1.0..1.0)).collect();
        let conv = Conv2d::new(
            Tensor::from_vec(vec![o, c, k, k], wt.clone()).unwrap(),
            Tensor::from_vec(vec![o], bias.clone()).unwrap(),
            stride,
            pad,
        )
        .unwrap();
        let layers = vec![LayerSpec::new("conv", Layer::Conv2d(conv)), LayerSpec::new("flat", Layer::Flatten)];
        let model = ModelGraph::new("conv", vec![c, h, w], layers, None).unwrap();
        let x = random_input(&mut r, &[c, h, w]);
        let got = forward(&model, &x).unwrap().records()[0].output.clone();

        let (cols, oh, ow) = im2col_indices(&[c, h, w], (k, k), stride, pad);
        let rows = c * k * k;
        let mut want = vec![0.0; o * oh * ow];
        for oc in 0..o {
            for p in 0..oh * ow {
                let mut acc = bias[oc];
                for row in 0..rows {
                    if let Some(src) = cols[row * oh * ow + p] {
                        acc += wt[oc * rows + row] * x.data()[src];
                    }
                }
                want[oc * oh * ow + p] = acc;
            }
        }
        assert_eq!(got.shape(), &[o, oh, ow]);
        assert!(max_rel(got.data(), &want) <= 1e-12);
    }
}

#[test]
fn dense_oracle_refuses_oversized_boundaries() {
    let mut r = rng(12);
    let conv = Conv2d::new(
        Tensor::from_vec(vec![5, 1, 1, 1], (0..5).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap(),
        Tensor::zeros(&[5]),
        1,
        0,
    )
    .unwrap();
    let layers = vec![LayerSpec::new("conv", Layer::Conv2d(conv)), LayerSpec::new("flat", Layer::Flatten)];
    let model = ModelGraph::new("wide", vec![1, 30, 30], layers, None).unwrap();
    let trace = forward(&model, &random_input(&mut r, &[1, 30, 30])).unwrap();
    assert!(matches!(dense_oracle(&model, &trace, 0), Err(pane_core::Error::SizeGuard { .. })));
}
