//! Seeded random models and the synthetic two-class fixture.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{forward, BatchNorm, Conv2d, InputNorm, Layer, LayerSpec, Linear, ModelGraph, Pool};
use crate::tensor::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy)]
pub struct RandomModelOptions {
    pub bias: bool,
    pub norm: bool,
    /// Largest input height/width.
    pub max_side: usize,
}

impl Default for RandomModelOptions {
    fn default() -> Self {
        RandomModelOptions {
            bias: true,
            norm: false,
            max_side: 10,
        }
    }
}

fn uniform_tensor(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_parts(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect())
}

fn maybe_bias(rng: &mut impl Rng, n: usize, bias: bool) -> Tensor<f64> {
    if bias {
        uniform_tensor(rng, &[n], 0.3)
    } else {
        Tensor::zeros(&[n])
    }
}

/// A small random CNN mixing every supported layer kind.
///
/// Shape: one or two conv blocks (conv, optional batch-norm, optional ReLU,
/// optional pooling), flatten, an optional hidden linear layer, then a
/// 2–3 way linear head.
pub fn random_model(rng: &mut impl Rng, opts: RandomModelOptions) -> ModelGraph<f64> {
    let c0 = rng.gen_range(1..=3);
    let h0 = rng.gen_range(5..=opts.max_side.max(5));
    let w0 = rng.gen_range(5..=opts.max_side.max(5));
    let mut layers = Vec::new();
    let (mut c, mut h, mut w) = (c0, h0, w0);
    let blocks = rng.gen_range(1..=2);
    for b in 0..blocks {
        let k = rng.gen_range(1..=3.min(h).min(w));
        let pad = if k > 1 { rng.gen_range(0..=1) } else { 0 };
        let stride = if h.min(w) >= 7 { rng.gen_range(1..=2) } else { 1 };
        let co = rng.gen_range(2..=4);
        let fan_in = (c * k * k) as f64;
        let conv = Conv2d::new(
            uniform_tensor(rng, &[co, c, k, k], 1.7 / fan_in.sqrt()),
            maybe_bias(rng, co, opts.bias),
            stride,
            pad,
        )
        .expect("consistent conv");
        let (oh, ow) = conv.output_hw(h, w).expect("kernel fits");
        layers.push(LayerSpec::new(format!("conv{b}"), Layer::Conv2d(conv)));
        (c, h, w) = (co, oh, ow);
        if rng.gen_bool(0.6) {
            let gamma = Tensor::from_parts(
                vec![c],
                (0..c)
                    .map(|_| {
                        let g: f64 = rng.gen_range(0.5..1.5);
                        if rng.gen_bool(0.25) {
                            -g
                        } else {
                            g
                        }
                    })
                    .collect(),
            );
            let (beta, mean) = if opts.bias {
                (uniform_tensor(rng, &[c], 0.3), uniform_tensor(rng, &[c], 0.3))
            } else {
                (Tensor::zeros(&[c]), Tensor::zeros(&[c]))
            };
            let var = Tensor::from_parts(vec![c], (0..c).map(|_| rng.gen_range(0.3..2.0)).collect());
            let bn = BatchNorm::new(gamma, beta, mean, var, 1e-5).expect("valid batch-norm");
            layers.push(LayerSpec::new(format!("bn{b}"), Layer::BatchNorm(bn)));
        }
        if rng.gen_bool(0.8) {
            layers.push(LayerSpec::new(format!("relu{b}"), Layer::Relu));
        }
        if h >= 2 && w >= 2 && rng.gen_bool(0.75) {
            let stride = rng.gen_range(1..=2);
            let pool = Pool::new(2, 2, stride).expect("valid pool");
            let (oh, ow) = pool.output_hw(h, w).expect("window fits");
            let layer = if rng.gen_bool(0.5) {
                Layer::MaxPool2d(pool)
            } else {
                Layer::AvgPool2d(pool)
            };
            layers.push(LayerSpec::new(format!("pool{b}"), layer));
            (h, w) = (oh, ow);
        }
    }
    layers.push(LayerSpec::new("flatten", Layer::Flatten));
    let mut features = c * h * w;
    if rng.gen_bool(0.5) {
        let hidden = rng.gen_range(3..=6);
        let lin = Linear::new(
            uniform_tensor(rng, &[hidden, features], 1.7 / (features as f64).sqrt()),
            maybe_bias(rng, hidden, opts.bias),
        )
        .expect("consistent linear");
        layers.push(LayerSpec::new("hidden", Layer::Linear(lin)));
        if rng.gen_bool(0.7) {
            layers.push(LayerSpec::new("relu_h", Layer::Relu));
        }
        features = hidden;
    }
    let classes = rng.gen_range(2..=3);
    let head = Linear::new(
        uniform_tensor(rng, &[classes, features], 1.7 / (features as f64).sqrt()),
        maybe_bias(rng, classes, opts.bias),
    )
    .expect("consistent head");
    layers.push(LayerSpec::new("head", Layer::Linear(head)));
    let norm = opts.norm.then(|| {
        let mean = (0..c0)
            .map(|_| if opts.bias { rng.gen_range(-0.5..0.5) } else { 0.0 })
            .collect();
        let std = (0..c0).map(|_| rng.gen_range(0.5..2.0)).collect();
        InputNorm::new(mean, std).expect("valid normalization")
    });
    ModelGraph::new("random", vec![c0, h0, w0], layers, norm).expect("generator builds valid graphs")
}

/// Uniform input in `±[0.05, 2]`, never exactly zero.
pub fn random_input(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m: f64 = rng.gen_range(0.05..2.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_parts(shape.to_vec(), data)
}

pub const FIXTURE_SIDE: usize = 32;
const BACKGROUND: f64 = 40.0;

/// One synthetic image: a warm (class 0) or cool (class 1) disc on a
/// noisy dark background, at 0–255 scale with every value `>= 1`.
pub fn fixture_image(rng: &mut impl Rng, label: usize) -> Tensor<f64> {
    let s = FIXTURE_SIDE;
    let plane = s * s;
    let mut data = vec![0.0; 3 * plane];
    let base: [f64; 3] = std::array::from_fn(|_| rng.gen_range(BACKGROUND - 20.0..BACKGROUND + 20.0));
    let nz = BACKGROUND / 3.0;
    for (i, v) in data.iter_mut().enumerate() {
        *v = base[i / plane] + rng.gen_range(-nz..nz);
    }
    let cy: f64 = rng.gen_range(8.0..24.0);
    let cx: f64 = rng.gen_range(8.0..24.0);
    let r: f64 = rng.gen_range(4.5..8.0);
    let color: [f64; 3] = if label == 0 {
        [215.0, 125.0, 55.0]
    } else {
        [55.0, 125.0, 215.0]
    };
    for y in 0..s {
        for x in 0..s {
            let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
            if d <= r {
                for (ch, &c) in color.iter().enumerate() {
                    data[ch * plane + y * s + x] = c + rng.gen_range(-25.0..25.0);
                }
            }
        }
    }
    for v in &mut data {
        *v = v.round().clamp(1.0, 255.0);
    }
    Tensor::from_parts(vec![3, s, s], data)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureReport {
    pub train_accuracy: f64,
    pub train_samples: usize,
}

/// Builds the fixture CNN: seeded random convolutions, batch-norm statistics
/// measured on the training images and a logistic-regression head.
///
/// The head is antisymmetric (`logit_1 = -logit_0`), so the top-1 logit is
/// always positive.
pub fn build_fixture_model(seed: u64, train: &[(Tensor<f64>, usize)]) -> (ModelGraph<f64>, FixtureReport) {
    let mut rng = rng(seed);
    let s = FIXTURE_SIDE;
    // Input normalization from training statistics.
    let plane = s * s;
    let mut mean = [0.0f64; 3];
    let mut sq = [0.0f64; 3];
    for (img, _) in train {
        for (i, &v) in img.data().iter().enumerate() {
            mean[i / plane] += v;
            sq[i / plane] += v * v;
        }
    }
    let count = (train.len() * plane) as f64;
    let mean: Vec<f64> = mean.iter().map(|m| m / count).collect();
    let std: Vec<f64> = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| (q / count - m * m).max(1e-6).sqrt())
        .collect();
    let norm = InputNorm::new(round32(&mean), round32(&std)).unwrap();

    let c1 = 8;
    let conv1 = Conv2d::new(
        Tensor::from_parts(vec![c1, 3, 3, 3], round32(&uniform_tensor(&mut rng, &[c1, 3, 3, 3], 0.4).into_data())),
        Tensor::from_parts(vec![c1], round32(&uniform_tensor(&mut rng, &[c1], 0.1).into_data())),
        1,
        1,
    )
    .unwrap();
    let c2 = 8;
    let conv2 = Conv2d::new(
        Tensor::from_parts(vec![c2, c1, 3, 3], round32(&uniform_tensor(&mut rng, &[c2, c1, 3, 3], 0.25).into_data())),
        Tensor::zeros(&[c2]),
        1,
        1,
    )
    .unwrap();
    let pool = Pool::new(2, 2, 2).unwrap();
    let stem = vec![
        LayerSpec::new("conv1", Layer::Conv2d(conv1)),
        LayerSpec::new("relu1", Layer::Relu),
        LayerSpec::new("pool1", Layer::MaxPool2d(pool)),
        LayerSpec::new("conv2", Layer::Conv2d(conv2)),
    ];
    let feat_probe = ModelGraph::new("probe", vec![3, s, s], with_flat_head(&stem, c2 * 16 * 16), Some(norm.clone()))
        .unwrap();
    // Batch-norm statistics over conv2 outputs.
    let mut m2 = vec![0.0; c2];
    let mut q2 = vec![0.0; c2];
    let cells = 16 * 16;
    for (img, _) in train {
        let t = forward(&feat_probe, img).unwrap();
        for (i, &v) in t.layer_output(3).data().iter().enumerate() {
            m2[i / cells] += v;
            q2[i / cells] += v * v;
        }
    }
    let n2 = (train.len() * cells) as f64;
    let m2: Vec<f64> = m2.iter().map(|v| v / n2).collect();
    let v2: Vec<f64> = q2.iter().zip(&m2).map(|(q, m)| (q / n2 - m * m).max(1e-6)).collect();
    let gamma: Vec<f64> = (0..c2).map(|_| rng.gen_range(0.8..1.2)).collect();
    let beta: Vec<f64> = (0..c2).map(|_| rng.gen_range(-0.2..0.4)).collect();
    let bn = BatchNorm::new(
        Tensor::from_parts(vec![c2], round32(&gamma)),
        Tensor::from_parts(vec![c2], round32(&beta)),
        Tensor::from_parts(vec![c2], round32(&m2)),
        Tensor::from_parts(vec![c2], round32(&v2)),
        1e-5f32 as f64,
    )
    .unwrap();
    let mut body = stem.clone();
    body.push(LayerSpec::new("bn2", Layer::BatchNorm(bn)));
    body.push(LayerSpec::new("relu2", Layer::Relu));
    body.push(LayerSpec::new("pool2", Layer::MaxPool2d(Pool::new(4, 4, 4).unwrap())));
    body.push(LayerSpec::new("flatten", Layer::Flatten));
    let features = c2 * 4 * 4;

    // Features for the head.
    let probe_layers = {
        let mut l = body.clone();
        l.push(LayerSpec::new(
            "id",
            Layer::Linear(Linear::new(identity(features), Tensor::zeros(&[features])).unwrap()),
        ));
        l
    };
    let fprobe = ModelGraph::new("features", vec![3, s, s], probe_layers, Some(norm.clone())).unwrap();
    let feats: Vec<Vec<f64>> = train
        .iter()
        .map(|(img, _)| forward(&fprobe, img).unwrap().logits().data().to_vec())
        .collect();
    let labels: Vec<f64> = train.iter().map(|(_, l)| *l as f64).collect();
    let (v, c) = logistic_regression(&feats, &labels, 1e-2, 600);
    // Moderate logit scale: median |margin| near 2.5.
    let mut margins: Vec<f64> = feats
        .iter()
        .map(|f| (f.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + c).abs())
        .collect();
    margins.sort_by(f64::total_cmp);
    let scale = 2.5 / margins[margins.len() / 2].max(1e-9);
    let half: Vec<f64> = v.iter().map(|x| 0.5 * x * scale).collect();
    let mut w = vec![0.0; 2 * features];
    for j in 0..features {
        w[j] = -half[j];
        w[features + j] = half[j];
    }
    let hb = 0.5 * c * scale;
    let head = Linear::new(
        Tensor::from_parts(vec![2, features], round32(&w)),
        Tensor::from_parts(vec![2], round32(&[-hb, hb])),
    )
    .unwrap();
    body.push(LayerSpec::new("fc", Layer::Linear(head)));
    let model = ModelGraph::new("pane-fixture", vec![3, s, s], body, Some(norm)).unwrap();
    let correct = train
        .iter()
        .filter(|(img, l)| forward(&model, img).unwrap().logits().argmax() == *l)
        .count();
    let report = FixtureReport {
        train_accuracy: correct as f64 / train.len() as f64,
        train_samples: train.len(),
    };
    (model, report)
}

fn with_flat_head(stem: &[LayerSpec<f64>], features: usize) -> Vec<LayerSpec<f64>> {
    let mut l = stem.to_vec();
    l.push(LayerSpec::new("flatten", Layer::Flatten));
    l.push(LayerSpec::new(
        "fc",
        Layer::Linear(Linear::new(Tensor::zeros(&[1, features]), Tensor::zeros(&[1])).unwrap()),
    ));
    l
}

fn identity(n: usize) -> Tensor<f64> {
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        d[i * n + i] = 1.0;
    }
    Tensor::from_parts(vec![n, n], d)
}

/// Values representable in the 32-bit weight file, so the f64 model equals the loaded one.
fn round32(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x as f32 as f64).collect()
}

/// L2-regularized logistic regression by full-batch gradient descent.
fn logistic_regression(x: &[Vec<f64>], y: &[f64], l2: f64, iters: usize) -> (Vec<f64>, f64) {
    let d = x[0].len();
    let n = x.len() as f64;
    // Standardize features for conditioning, then fold back.
    let mut mu = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for row in x {
        for j in 0..d {
            mu[j] += row[j] / n;
        }
    }
    for row in x {
        for j in 0..d {
            sd[j] += (row[j] - mu[j]).powi(2) / n;
        }
    }
    let sd: Vec<f64> = sd.iter().map(|v| v.sqrt().max(1e-6)).collect();
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|row| (0..d).map(|j| (row[j] - mu[j]) / sd[j]).collect())
        .collect();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let lr = 0.5;
    for _ in 0..iters {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (row, &t) in z.iter().zip(y) {
            let s: f64 = row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b;
            let p = 1.0 / (1.0 + (-s).exp());
            let e = p - t;
            for j in 0..d {
                gw[j] += e * row[j] / n;
            }
            gb += e / n;
        }
        for j in 0..d {
            w[j] -= lr * (gw[j] + l2 * w[j]);
        }
        b -= lr * gb;
    }
    let v: Vec<f64> = (0..d).map(|j| w[j] / sd[j]).collect();
    let c = b - (0..d).map(|j| w[j] * mu[j] / sd[j]).sum::<f64>();
    (v, c)
}

/// Generates `count` labelled images, alternating classes.
pub fn fixture_images(seed: u64, count: usize) -> Vec<(Tensor<f64>, usize)> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let label = i % 2;
            (fixture_image(&mut r, label), label)
        })
        .collect()
}
