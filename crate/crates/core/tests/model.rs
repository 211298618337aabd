mod common;

use common::{manifest, random_batch, tiny_config};
use fedmm::datastore::EncoderKind;
use fedmm::model::{
    forward_loss, loss_and_grad, predict, Architecture, EvalMode, FusionScheme, Mode, ModelConfig,
    MultimodalClassifier, SampleInput,
};
use fedmm::numerics::finite_diff_check;
use fedmm::rng::{self, Stream};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bimodal(fusion: FusionScheme, a: EncoderKind, b: EncoderKind) -> Architecture {
    let m = manifest(&[("a", 2, 6, a), ("b", 3, 5, b)], 3);
    Architecture::new(&m, tiny_config(4, fusion, 2)).unwrap()
}

fn grad_error(arch: &Architecture, seed: u64, with_dropout: bool, drop_some: bool) -> f64 {
    let model = MultimodalClassifier::<f64>::init(arch.clone(), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 77);
    let batch = random_batch(arch, 3, &mut rng, |j, i| drop_some && j == 1 && i == 0);
    let labels = vec![Some(0), Some(2), Some(1)];
    let loss = |p: &fedmm::numerics::ParamSet<f64>| {
        if with_dropout {
            let mut r = rng::stream(seed, Stream::LocalTraining, &[]);
            forward_loss(arch, p, &batch, &labels, Mode::Train(&mut r)).map(|(l, _)| l)
        } else {
            forward_loss(arch, p, &batch, &labels, EvalMode::Eval).map(|(l, _)| l)
        }
    };
    let (_, grads) = if with_dropout {
        let mut r = rng::stream(seed, Stream::LocalTraining, &[]);
        loss_and_grad(arch, &model.params, &batch, &labels, None, Mode::Train(&mut r)).unwrap()
    } else {
        loss_and_grad(arch, &model.params, &batch, &labels, None, EvalMode::Eval).unwrap()
    };
    finite_diff_check(loss, &model.params, &grads, 1e-4).unwrap()
}

#[test]
fn gradients_match_finite_differences_for_every_variant() {
    for fusion in [FusionScheme::Concat, FusionScheme::Attention] {
        for (a, b) in [
            (EncoderKind::ConvRnn, EncoderKind::RnnOnly),
            (EncoderKind::RnnOnly, EncoderKind::ConvRnn),
        ] {
            let arch = bimodal(fusion, a, b);
            for (seed, dropout, drop_some) in [(1, false, false), (2, true, false), (3, true, true)] {
                let err = grad_error(&arch, seed, dropout, drop_some);
                assert!(err < 1e-4, "{fusion:?} {a:?}/{b:?} seed {seed}: rel err {err}");
            }
        }
    }
}

#[test]
fn logit_scale_gradient_matches_finite_differences() {
    let arch = bimodal(FusionScheme::Attention, EncoderKind::ConvRnn, EncoderKind::RnnOnly);
    let model = MultimodalClassifier::<f64>::init(arch.clone(), 5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let batch = random_batch(&arch, 2, &mut rng, |_, _| false);
    let labels = vec![Some(1), Some(0)];
    let scale = [1.0, 0.5, 0.5];
    let (_, grads) = loss_and_grad(&arch, &model.params, &batch, &labels, Some(&scale), EvalMode::Eval).unwrap();
    let loss = |p: &fedmm::numerics::ParamSet<f64>| {
        let logits = predict(&arch, p, &batch)?;
        let mut scaled = logits.clone();
        for r in 0..scaled.rows() {
            for (v, s) in scaled.row_mut(r).iter_mut().zip(scale) {
                *v *= s;
            }
        }
        fedmm::numerics::softmax_cross_entropy(&scaled, &[1, 0]).map(|ce| ce.loss)
    };
    let err = finite_diff_check(loss, &model.params, &grads, 1e-4).unwrap();
    assert!(err < 1e-4, "rel err {err}");
}

#[test]
fn untrained_loss_is_near_log_c() {
    let m = manifest(&[("a", 4, 16, EncoderKind::ConvRnn), ("b", 6, 8, EncoderKind::RnnOnly)], 4);
    let arch = Architecture::new(&m, ModelConfig::default()).unwrap();
    let model = MultimodalClassifier::<f64>::init(arch.clone(), 11);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let batch = random_batch(&arch, 8, &mut rng, |_, _| false);
    let labels: Vec<_> = (0..8).map(|i| Some(i % 4)).collect();
    let (loss, _) = forward_loss(&arch, &model.params, &batch, &labels, EvalMode::Eval).unwrap();
    assert!((loss - 4f64.ln()).abs() < 0.2, "loss {loss}");
}

#[test]
fn eval_is_deterministic_and_train_mode_is_seeded() {
    let arch = bimodal(FusionScheme::Attention, EncoderKind::ConvRnn, EncoderKind::RnnOnly);
    let model = MultimodalClassifier::<f64>::init(arch.clone(), 3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batch = random_batch(&arch, 4, &mut rng, |_, _| false);
    let bits = |t: &fedmm::numerics::Tensor<f64>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&model.predict(&batch).unwrap()), bits(&model.predict(&batch).unwrap()));

    let labels = vec![Some(0); 4];
    let run = |s: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(s);
        forward_loss(&arch, &model.params, &batch, &labels, Mode::Train(&mut r)).unwrap().0
    };
    assert_eq!(run(9).to_bits(), run(9).to_bits());
    assert_ne!(run(9), run(10));
}

#[test]
fn unlabeled_sample_in_loss_batch_is_rejected() {
    let arch = bimodal(FusionScheme::Concat, EncoderKind::ConvRnn, EncoderKind::RnnOnly);
    let model = MultimodalClassifier::<f64>::init(arch.clone(), 3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batch = random_batch(&arch, 2, &mut rng, |_, _| false);
    let err = forward_loss(&arch, &model.params, &batch, &[Some(0), None], EvalMode::Eval).unwrap_err();
    assert!(matches!(err, fedmm::Error::Contract(_)), "{err}");
}

#[test]
fn unimodal_model_ignores_other_modalities() {
    let m = manifest(&[("a", 2, 6, EncoderKind::ConvRnn), ("b", 3, 5, EncoderKind::RnnOnly)], 3);
    let cfg = tiny_config(4, FusionScheme::Attention, 2);
    let bi = MultimodalClassifier::<f64>::build(&m, cfg.clone(), 1).unwrap();
    let uni = MultimodalClassifier::<f64>::build_unimodal(&m, cfg.clone(), "a", 1).unwrap();
    assert!(uni.num_params() < bi.num_params());
    assert!(MultimodalClassifier::<f64>::build_unimodal(&m, cfg, "zzz", 1).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let full = random_batch(&bi.arch, 3, &mut rng, |_, _| false);
    let only_a: Vec<_> = full.iter().map(|s| SampleInput { parts: vec![s.parts[0].clone()] }).collect();
    let logits = uni.predict(&only_a).unwrap();
    assert_eq!(logits.shape(), &[3, 3]);
}

#[test]
fn unimodal_equals_bimodal_concat_with_other_modality_masked() {
    // Concat fusion with `b` masked feeds zeros into the second half of fc1,
    // so copying the first half of fc1.w reproduces the unimodal network.
    let m = manifest(&[("a", 2, 6, EncoderKind::ConvRnn), ("b", 3, 5, EncoderKind::RnnOnly)], 3);
    let cfg = tiny_config(4, FusionScheme::Concat, 1);
    let bi = MultimodalClassifier::<f64>::build(&m, cfg.clone(), 8).unwrap();
    let mut uni_params = fedmm::numerics::ParamSet::new();
    let uni_arch = bi.arch.unimodal("a").unwrap();
    for (name, shape, _) in uni_arch.layout() {
        let t = if name == "cls.fc1.w" {
            let w = bi.params.get(&name).unwrap();
            let rows = w.rows();
            let cols = shape[1];
            let data = (0..rows).flat_map(|r| w.row(r)[..cols].to_vec()).collect();
            fedmm::numerics::Tensor::matrix(rows, cols, data).unwrap()
        } else {
            bi.params.get(&name).unwrap().clone()
        };
        uni_params.insert(name, t);
    }
    let uni = MultimodalClassifier::with_params(uni_arch, uni_params).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let masked_b = random_batch(&bi.arch, 4, &mut rng, |_, i| i == 1);
    let only_a: Vec<_> = masked_b.iter().map(|s| SampleInput { parts: vec![s.parts[0].clone()] }).collect();
    let lb = bi.predict(&masked_b).unwrap();
    let lu = uni.predict(&only_a).unwrap();
    for (x, y) in lb.data().iter().zip(lu.data()) {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
}

#[test]
fn attention_model_output_ignores_masked_modality_values() {
    let arch = bimodal(FusionScheme::Attention, EncoderKind::ConvRnn, EncoderKind::RnnOnly);
    let model = MultimodalClassifier::<f64>::init(arch.clone(), 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_batch(&arch, 2, &mut rng, |_, i| i == 1);
    let b = random_batch(&arch, 2, &mut rng, |_, i| i == 1);
    let mixed: Vec<_> = a
        .iter()
        .zip(&b)
        .map(|(x, y)| SampleInput { parts: vec![x.parts[0].clone(), y.parts[1].clone()] })
        .collect();
    assert_eq!(model.predict(&a).unwrap(), model.predict(&mixed).unwrap());
}

#[test]
fn f32_and_f64_models_agree_roughly() {
    let arch = bimodal(FusionScheme::Attention, EncoderKind::ConvRnn, EncoderKind::RnnOnly);
    let m64 = MultimodalClassifier::<f64>::init(arch.clone(), 12);
    let m32 = MultimodalClassifier::<f32>::with_params(arch.clone(), m64.params.cast()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let batch = random_batch(&arch, 2, &mut rng, |_, _| false);
    let batch32: Vec<SampleInput<f32>> = batch
        .iter()
        .map(|s| SampleInput { parts: s.parts.iter().map(|p| p.as_ref().map(|t| t.cast())).collect() })
        .collect();
    let l64 = m64.predict(&batch).unwrap();
    let l32 = m32.predict(&batch32).unwrap();
    for (x, y) in l64.data().iter().zip(l32.data()) {
        assert!((x - *y as f64).abs() < 1e-4);
    }
}

#[test]
fn encoder_equals_manual_layer_composition() {
    use fedmm::model::encode_modality;
    use fedmm::numerics::{conv1d_forward, gru_forward, relu, GruWeights, Tensor};

    let m = manifest(&[("a", 2, 9, EncoderKind::ConvRnn), ("b", 3, 5, EncoderKind::RnnOnly)], 3);
    let arch = Architecture::new(&m, tiny_config(4, FusionScheme::Concat, 1)).unwrap();
    let model = MultimodalClassifier::<f64>::init(arch.clone(), 17);
    let p = &model.params;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = common::random_tensor(9, 2, &mut rng);

    let mut cur = x.clone();
    for l in 0..2 {
        let k = p.get(&format!("enc.a.conv{l}.kernel")).unwrap();
        let b = p.get(&format!("enc.a.conv{l}.bias")).unwrap();
        cur = relu(&conv1d_forward(&cur, k, b, 1).unwrap());
    }
    let w = GruWeights::from_params(p, "enc.a.gru.").unwrap();
    let expected = gru_forward(&cur, w, &Tensor::zeros(&[4])).unwrap();
    let got = encode_modality(&arch, p, 0, Some(&x)).unwrap();
    assert!(!got.masked);
    assert_eq!(got.rows.shape(), expected.shape());
    for (a, b) in got.rows.data().iter().zip(expected.data()) {
        assert!((a - b).abs() <= 1e-12);
    }

    let y = common::random_tensor(5, 3, &mut rng);
    let w = GruWeights::from_params(p, "enc.b.gru.").unwrap();
    let expected = gru_forward(&y, w, &Tensor::zeros(&[4])).unwrap();
    assert_eq!(encode_modality(&arch, p, 1, Some(&y)).unwrap().rows, expected);

    let masked = encode_modality(&arch, p, 1, None).unwrap();
    assert!(masked.masked);
    assert_eq!(masked.rows, Tensor::zeros(&[1, 4]));
}
