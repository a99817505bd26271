use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xmodal::nn::{
    Branch, CoarseDepthNet, CoarseDepthNetConfig, ConfidenceNet, ConfidenceNetConfig, FusionNet,
    FusionNetConfig, Model, ModelConfig,
};
use xmodal::tensor::{Tape, Tensor};

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(lo..hi)).collect(),
    )
    .unwrap()
}

#[test]
fn coarse_output_shape_and_range() {
    let net = CoarseDepthNet::new(CoarseDepthNetConfig::rgb()).unwrap();
    let params = net.init(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let tape = Tape::new();
    let p = params.bind_frozen(&tape);
    let x = tape.constant(rand_tensor(&mut rng, &[3, 16, 24], 0.0, 1.0));
    let d = net.forward(&p, &x).unwrap();
    assert_eq!(d.shape(), vec![1, 16, 24]);
    assert!(d.value().data().iter().all(|&v| v > 1.0 && v < 25.0));
}

#[test]
fn coarse_rejects_indivisible_extent() {
    let net = CoarseDepthNet::new(CoarseDepthNetConfig::thermal()).unwrap();
    let params = net.init(0).unwrap();
    let tape = Tape::new();
    let x = tape.constant(Tensor::zeros(vec![1, 12, 12]));
    assert!(net.forward(&params.bind_frozen(&tape), &x).is_err());
}

#[test]
fn coarse_config_invariants() {
    let bad = CoarseDepthNetConfig {
        d_min: 3.0,
        d_max: 2.0,
        ..CoarseDepthNetConfig::rgb()
    };
    assert!(CoarseDepthNet::new(bad).is_err());
    let bad = CoarseDepthNetConfig {
        levels: 0,
        ..CoarseDepthNetConfig::rgb()
    };
    assert!(CoarseDepthNet::new(bad).is_err());
}

#[test]
fn different_seeds_give_different_outputs() {
    let net = CoarseDepthNet::new(CoarseDepthNetConfig::rgb()).unwrap();
    let (a, b) = (net.init(1).unwrap(), net.init(2).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let img = rand_tensor(&mut rng, &[3, 8, 8], 0.0, 1.0);
    let tape = Tape::new();
    let x = tape.constant(img);
    let da = net.forward(&a.bind_frozen(&tape), &x).unwrap().value();
    let db = net.forward(&b.bind_frozen(&tape), &x).unwrap().value();
    assert_ne!(da.data(), db.data());
}

#[test]
fn coarse_networks_share_no_storage() {
    let model = Model::new(&ModelConfig::default()).unwrap();
    let mut params = model.init(9).unwrap();
    let before = params.coarse_thr.clone();
    let name = params.coarse_rgb.iter().next().unwrap().0.to_string();
    let shape = params.coarse_rgb.get(&name).unwrap().shape().to_vec();
    params
        .coarse_rgb
        .set(&name, Tensor::full(shape, 0.123))
        .unwrap();
    assert_eq!(params.coarse_thr, before);
    assert_ne!(params.coarse_rgb.seed(), params.coarse_thr.seed());
}

fn confidence_inputs(rng: &mut ChaCha8Rng, h: usize, w: usize) -> [Tensor; 4] {
    [
        rand_tensor(rng, &[3, h, w], 0.0, 1.0),
        rand_tensor(rng, &[1, h, w], 0.0, 1.0),
        rand_tensor(rng, &[1, h, w], 2.0, 20.0),
        rand_tensor(rng, &[1, h, w], 2.0, 20.0),
    ]
}

#[test]
fn confidence_contract_and_hole_rule() {
    let net = ConfidenceNet::new(ConfidenceNetConfig::default()).unwrap();
    let params = net.init(4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let [a, b, c, d] = confidence_inputs(&mut rng, 8, 8);
    let valid: Vec<bool> = (0..64).map(|i| i % 5 != 0).collect();
    let tape = Tape::new();
    let p = params.bind_frozen(&tape);
    let [a, b, c, d] = [a, b, c, d].map(|t| tape.constant(t));
    let pair = net.forward(&p, &a, &b, &c, &d, &valid).unwrap();
    let (cr, ct) = (pair.c_rgb.value(), pair.c_thr.value());
    assert_eq!(cr.shape(), &[1, 8, 8]);
    for (i, &ok) in valid.iter().enumerate() {
        let v = cr.data()[i];
        if ok {
            assert!(v > 0.0 && v < 1.0);
        } else {
            assert_eq!(v, 1.0);
        }
        assert!((v + ct.data()[i] - 1.0).abs() < 1e-15);
    }
}

#[test]
fn confidence_does_not_backprop_into_depths() {
    let net = ConfidenceNet::new(ConfidenceNetConfig::default()).unwrap();
    let params = net.init(4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let [a, b, c, d] = confidence_inputs(&mut rng, 8, 8);
    let tape = Tape::new();
    let p = params.bind(&tape);
    let a = tape.constant(a);
    let b = tape.constant(b);
    let c = tape.leaf(c, true);
    let d = tape.leaf(d, true);
    let pair = net.forward(&p, &a, &b, &c, &d, &[true; 64]).unwrap();
    tape.backward(pair.c_rgb.sum()).unwrap();
    assert!(c.grad().unwrap().data().iter().all(|&g| g == 0.0));
    assert!(d.grad().unwrap().data().iter().all(|&g| g == 0.0));
}

fn fusion_setup() -> (FusionNet, xmodal::nn::NetworkParams) {
    let net = FusionNet::new(FusionNetConfig::default()).unwrap();
    let params = net.init(11).unwrap();
    (net, params)
}

#[test]
fn branch_zero_confidence_gives_constant_features() {
    let (net, params) = fusion_setup();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tape = Tape::new();
    let p = params.bind_frozen(&tape);
    let img = tape.constant(rand_tensor(&mut rng, &[3, 8, 8], 0.0, 1.0));
    let depth = tape.constant(rand_tensor(&mut rng, &[1, 8, 8], 2.0, 20.0));
    let zero = tape.constant(Tensor::zeros(vec![1, 8, 8]));
    let f = net
        .branch_features(&p, Branch::Rgb, &img, &depth, &zero)
        .unwrap()
        .value();
    for ch in f.data().chunks(64) {
        assert!(ch.iter().all(|&v| v == ch[0]));
    }
}

#[test]
fn branch_mul_stage_is_linear_in_confidence() {
    let (net, params) = fusion_setup();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tape = Tape::new();
    let p = params.bind_frozen(&tape);
    let img = tape.constant(rand_tensor(&mut rng, &[1, 8, 8], 0.0, 1.0));
    let depth = tape.constant(rand_tensor(&mut rng, &[1, 8, 8], 2.0, 20.0));
    let c = rand_tensor(&mut rng, &[1, 8, 8], 0.0, 0.5);
    let one = tape.constant(Tensor::ones(vec![1, 8, 8]));
    let c1 = tape.constant(c.clone());
    let c2 = tape.constant(c.map(|v| 2.0 * v));
    let (w1, _) = net
        .branch_stages(&p, Branch::Thr, &img, &depth, &c1)
        .unwrap();
    let (w2, _) = net
        .branch_stages(&p, Branch::Thr, &img, &depth, &c2)
        .unwrap();
    let (w_id, _) = net
        .branch_stages(&p, Branch::Thr, &img, &depth, &one)
        .unwrap();
    for (a, b) in w1.value().data().iter().zip(w2.value().data()) {
        assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
    // C = 1 leaves the conv output untouched: the weighted stage equals the
    // conv applied directly.
    let x = tape.concat(&[img, depth.scale(1.0 / 25.0)], 0).unwrap();
    let w = p.get("branch_thr.conv.weight").unwrap();
    let b = p.get("branch_thr.conv.bias").unwrap();
    let direct = x.conv2d(&w, &b, 1, 1).unwrap();
    assert_eq!(w_id.value().data(), direct.value().data());
}

#[test]
fn attention_rows_are_stochastic_and_output_aligned() {
    let (net, params) = fusion_setup();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let tape = Tape::new();
    let p = params.bind_frozen(&tape);
    let a = tape.constant(rand_tensor(&mut rng, &[8, 16, 16], -1.0, 1.0));
    let b = tape.constant(rand_tensor(&mut rng, &[8, 16, 16], -1.0, 1.0));
    let out = net.attention(&p, &a, &b).unwrap();
    assert_eq!(out.rgb.shape(), vec![8, 16, 16]);
    assert_eq!(out.weights_rgb.len(), 2);
    for w in out.weights_rgb.iter().chain(&out.weights_thr) {
        let w = w.value();
        assert_eq!(w.shape(), &[16, 16]);
        for row in w.data().chunks(16) {
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn single_token_attention_is_value_projection() {
    let cfg = FusionNetConfig {
        token_downsample: 4,
        ..FusionNetConfig::default()
    };
    let net = FusionNet::new(cfg).unwrap();
    let params = net.init(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tape = Tape::new();
    let p = params.bind_frozen(&tape);
    // 4x4 with downsample 4 is one token.
    let a = tape.constant(rand_tensor(&mut rng, &[8, 4, 4], -1.0, 1.0));
    let b = tape.constant(rand_tensor(&mut rng, &[8, 4, 4], -1.0, 1.0));
    let out = net.attention(&p, &a, &b).unwrap();
    let tok = b
        .resize_bilinear(1, 1)
        .unwrap()
        .reshape(&[8, 1])
        .unwrap()
        .transpose()
        .unwrap();
    let v = tok.matmul(&p.get("attn.wv1").unwrap()).unwrap();
    let want = v.matmul(&p.get("attn.wo1").unwrap()).unwrap().value();
    let got = out.rgb.value();
    for c in 0..8 {
        for i in 0..16 {
            assert!((got.data()[c * 16 + i] - want.data()[c]).abs() < 1e-14);
        }
    }
    assert_eq!(out.weights_rgb[0].value().data(), &[1.0]);
}

#[test]
fn uniform_logits_average_values() {
    // Identical tokens give identical Q·Kᵀ rows, so outputs are plain means.
    let (net, params) = fusion_setup();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let tape = Tape::new();
    let p = params.bind_frozen(&tape);
    let col = rand_tensor(&mut rng, &[8, 1, 1], -1.0, 1.0);
    let flat: Vec<f64> = col.data().iter().flat_map(|&v| [v; 64]).collect();
    let a = tape.constant(Tensor::new(vec![8, 8, 8], flat).unwrap());
    let b = tape.constant(rand_tensor(&mut rng, &[8, 8, 8], -1.0, 1.0));
    let out = net.attention(&p, &a, &b).unwrap();
    for w in &out.weights_rgb {
        assert!(w.value().data().iter().all(|&v| (v - 0.25).abs() < 1e-12));
    }
}

fn fusion_forward_value(net: &FusionNet, seed: u64, input_seed: u64) -> Tensor {
    let params = net.init(seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(input_seed);
    let tape = Tape::new();
    let p = params.bind_frozen(&tape);
    let i_rgb = tape.constant(rand_tensor(&mut rng, &[3, 8, 8], 0.0, 1.0));
    let i_thr = tape.constant(rand_tensor(&mut rng, &[1, 8, 8], 0.0, 1.0));
    let d_rgb = tape.constant(rand_tensor(&mut rng, &[1, 8, 8], 2.0, 20.0));
    let d_thr = tape.constant(rand_tensor(&mut rng, &[1, 8, 8], 2.0, 20.0));
    let c = tape.constant(rand_tensor(&mut rng, &[1, 8, 8], 0.0, 1.0));
    let c_thr = c.affine(-1.0, 1.0);
    let d = net
        .forward(&p, &i_rgb, &i_thr, &d_rgb, &d_thr, &c, &c_thr)
        .unwrap();
    (*d.value()).clone()
}

#[test]
fn fusion_contract_and_determinism() {
    let (net, _) = fusion_setup();
    let a = fusion_forward_value(&net, 5, 5);
    let b = fusion_forward_value(&net, 5, 5);
    assert_eq!(a.shape(), &[1, 8, 8]);
    assert!(a.data().iter().all(|&v| v > 1.0 && v < 25.0));
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn fusion_rejects_bad_heads() {
    let cfg = FusionNetConfig {
        feature_channels: 9,
        heads: 2,
        ..FusionNetConfig::default()
    };
    assert!(FusionNet::new(cfg).is_err());
}

#[test]
fn outputs_finite_over_many_seeds() {
    let model = Model::new(&ModelConfig::default()).unwrap();
    for seed in 0..1000u64 {
        let params = model.init(seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        let tape = Tape::new();
        let rgb = tape.constant(rand_tensor(&mut rng, &[3, 8, 8], 0.0, 1.0));
        let thr = tape.constant(rand_tensor(&mut rng, &[1, 8, 8], 0.0, 1.0));
        let d_rgb = model
            .coarse_rgb
            .forward(&params.coarse_rgb.bind_frozen(&tape), &rgb)
            .unwrap();
        let d_thr = model
            .coarse_thr
            .forward(&params.coarse_thr.bind_frozen(&tape), &thr)
            .unwrap();
        let pair = model
            .confidence
            .forward(
                &params.confidence.bind_frozen(&tape),
                &rgb,
                &thr,
                &d_rgb,
                &d_thr,
                &[true; 64],
            )
            .unwrap();
        let d = model
            .fusion
            .forward(
                &params.fusion.bind_frozen(&tape),
                &rgb,
                &thr,
                &d_rgb,
                &d_thr,
                &pair.c_rgb,
                &pair.c_thr,
            )
            .unwrap();
        for v in [d_rgb, d_thr, pair.c_rgb, d] {
            assert!(v.value().is_finite(), "seed {seed}");
        }
        let dv = d.value();
        assert!(
            dv.data().iter().all(|&x| x > 1.0 && x < 25.0),
            "seed {seed}"
        );
    }
}

#[test]
fn model_checkpoint_roundtrip() {
    let model = Model::new(&ModelConfig::default()).unwrap();
    let params = model.init(1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.xmdw");
    params.save(&path).unwrap();
    let mut other = model.init(2).unwrap();
    assert_ne!(other, params);
    other.load_into(&path).unwrap();
    assert_eq!(other.flatten(), params.flatten());

    let small = Model::new(&ModelConfig {
        fusion: FusionNetConfig {
            feature_channels: 4,
            ..FusionNetConfig::default()
        },
        ..ModelConfig::default()
    })
    .unwrap();
    let mut wrong = small.init(0).unwrap();
    assert!(wrong.load_into(&path).is_err());
}
