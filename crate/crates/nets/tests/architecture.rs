use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdalm_core::dsp::{apply_mask, log_mel, MagnitudeSpectrogram, MelFilterbank, StftConfig};
use rdalm_nets::layers::{sigmoid, GlobalMaxPool};
use rdalm_nets::{
    Adam, Classifier, Discriminator, Extractor, ExtractorArch, LayerSpec, MaskedLogMel, Module, Optimizer,
    Separator, SeparatorArch, Tensor,
};

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn walk(specs: &[LayerSpec]) -> Vec<(String, usize, usize, usize, usize)> {
    specs
        .iter()
        .map(|s| (s.kind.clone(), s.in_channels, s.out_channels, s.kernel, s.stride))
        .collect()
}

#[test]
fn separator_default_layer_walk() {
    let m = Separator::new(&SeparatorArch::default(), 0).unwrap();
    let audit = m.audit();
    assert_eq!(audit.len(), 13);
    let enc: Vec<usize> = audit[..6].iter().map(|l| l.out_channels).collect();
    assert_eq!(enc, vec![16, 32, 64, 128, 256, 512]);
    for l in &audit[..6] {
        assert_eq!((l.kind.as_str(), l.kernel, l.stride), ("conv2d", 5, 2));
        assert_eq!(l.post, vec!["batch_norm", "leaky_relu"]);
    }
    let dec: Vec<usize> = audit[6..12].iter().map(|l| l.out_channels).collect();
    assert_eq!(dec, vec![256, 128, 64, 32, 16, 16]);
    let dec_in: Vec<usize> = audit[6..12].iter().map(|l| l.in_channels).collect();
    assert_eq!(dec_in, vec![512, 512, 256, 128, 64, 32]);
    for l in &audit[6..12] {
        assert_eq!((l.kind.as_str(), l.kernel, l.stride), ("conv_transpose2d", 5, 2));
        assert!(l.post.contains(&"relu".to_string()));
    }
    assert_eq!(walk(&audit[12..]), vec![("conv2d".into(), 16, 1, 1, 1)]);
    assert_eq!(audit[12].post, vec!["sigmoid"]);
}

#[test]
fn extractor_default_layer_walk() {
    let f = Extractor::new(&ExtractorArch::default(), 0).unwrap();
    let audit = f.audit();
    let convs: Vec<_> = walk(&audit[..4]);
    assert_eq!(
        convs,
        vec![
            ("conv2d".into(), 1, 64, 3, 1),
            ("conv2d".into(), 64, 128, 3, 1),
            ("conv2d".into(), 128, 256, 3, 1),
            ("conv2d".into(), 256, 512, 3, 1),
        ]
    );
    for (i, l) in audit[..4].iter().enumerate() {
        assert_eq!(l.post[..2], ["relu".to_string(), "batch_norm".to_string()]);
        assert_eq!(l.post.contains(&"max_pool2x2".to_string()), i < 3);
    }
    assert_eq!(audit[4].kind, "global_max_pool");
    assert_eq!(walk(&audit[5..]), vec![("linear".into(), 512, 64, 0, 0)]);
}

#[test]
fn heads_layer_walk() {
    let d = Discriminator::new(0);
    let widths: Vec<(usize, usize)> = d.audit().iter().map(|l| (l.in_channels, l.out_channels)).collect();
    assert_eq!(widths, vec![(64, 48), (48, 32), (32, 16), (16, 1)]);
    assert_eq!(d.audit()[3].post, vec!["sigmoid"]);
    let c = Classifier::new(0);
    assert_eq!(walk(&c.audit()), vec![("linear".into(), 64, 3, 0, 0)]);
}

#[test]
fn separator_mask_is_bounded_and_shaped_at_full_size() {
    let mut m = Separator::new(&SeparatorArch::default(), 4).unwrap();
    assert_eq!(m.padded_dims(101, 1025), (128, 1088));
    let geo = StftConfig::from_timing(44_100, 32.0, 10.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let spec = MagnitudeSpectrogram::new(101, 1025, (0..101 * 1025).map(|_| rng.random_range(0.0..30.0)).collect(), &geo).unwrap();
    let mask = m.separate(&spec).unwrap();
    assert_eq!((mask.frames, mask.bins), (101, 1025));
    assert!(mask.values.iter().all(|v| *v > 0.0 && *v < 1.0));
    let again = m.separate(&spec).unwrap();
    assert_eq!(mask, again);
}

#[test]
fn separator_rejects_unpadded_input() {
    let mut m = Separator::new(&SeparatorArch { base_filters: 2, depth: 3, kernel: 5 }, 0).unwrap();
    let x = Tensor::zeros(&[1, 1, 12, 16]);
    assert!(m.forward_tensor(&x, false).is_err());
}

#[test]
fn extractor_outputs_latent_and_rejects_wrong_band_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut f = Extractor::new(&ExtractorArch { widths: [4, 4, 8, 8] }, 3).unwrap();
    let x = rand_tensor(&[2, 1, 20, 64], &mut rng, -5.0, 5.0);
    let z = f.forward(&x, false).unwrap();
    assert_eq!(z.shape(), &[2, 64]);
    assert_eq!(f.forward(&x, false).unwrap(), z);
    assert!(f.forward(&rand_tensor(&[1, 1, 20, 40], &mut rng, 0.0, 1.0), false).is_err());
}

#[test]
fn global_max_pool_ignores_time_duplication() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let (c, t, w) = (3, rng.random_range(1..6), rng.random_range(1..5));
        let x = rand_tensor(&[1, c, t, w], &mut rng, -3.0, 3.0);
        let mut doubled = Vec::new();
        for ch in 0..c {
            let plane = &x.data()[ch * t * w..(ch + 1) * t * w];
            doubled.extend_from_slice(plane);
            doubled.extend_from_slice(plane);
        }
        let xd = Tensor::new(&[1, c, 2 * t, w], doubled).unwrap();
        let mut p = GlobalMaxPool::default();
        assert_eq!(p.forward(&x, false), p.forward(&xd, false));
    }
}

#[test]
fn classifier_contracts() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let z = rand_tensor(&[5, 64], &mut rng, -2.0, 2.0);
    let mut c = Classifier::new(7);
    for p in c.params_mut() {
        p.value.iter_mut().for_each(|v| *v = 0.0);
    }
    for row in c.forward(&z) {
        for v in row {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }
    let mut c = Classifier::new(7);
    let base = c.forward(&z);
    c.fc.bias.value.iter_mut().for_each(|b| *b += 3.7);
    for (a, b) in base.iter().zip(c.forward(&z)) {
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-12);
        }
    }
    // Independent softmax(Wz + b).
    let (w, b) = (c.fc.weight.value.clone(), c.fc.bias.value.clone());
    for (i, row) in c.forward(&z).iter().enumerate() {
        let zi = z.sample(i);
        let logits: Vec<f64> = (0..3).map(|k| b[k] + (0..64).map(|j| w[k * 64 + j] * zi[j]).sum::<f64>()).collect();
        let s: f64 = logits.iter().map(|l| l.exp()).sum();
        for k in 0..3 {
            assert!((row[k] - logits[k].exp() / s).abs() < 1e-6);
        }
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn discriminator_contracts() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let z = rand_tensor(&[6, 64], &mut rng, -2.0, 2.0);
    let mut zero = Discriminator::new(1);
    for p in zero.params_mut() {
        p.value.iter_mut().for_each(|v| *v = 0.0);
    }
    assert!(zero.forward(&z).iter().all(|s| *s == 0.5));

    let mut d = Discriminator::new(2);
    let got = d.forward(&z);
    let params: Vec<(Vec<f64>, Vec<f64>)> = d
        .params()
        .chunks(2)
        .map(|wb| (wb[0].value.clone(), wb[1].value.clone()))
        .collect();
    for (i, s) in got.iter().enumerate() {
        let mut h = z.sample(i).to_vec();
        for (l, (w, b)) in params.iter().enumerate() {
            let out = b.len();
            let inp = h.len();
            h = (0..out).map(|o| b[o] + (0..inp).map(|j| w[o * inp + j] * h[j]).sum::<f64>()).collect();
            if l < 3 {
                h.iter_mut().for_each(|v| {
                    if *v < 0.0 {
                        *v *= 0.01
                    }
                });
            }
        }
        assert!((s - sigmoid(h[0])).abs() < 1e-6);
        assert!(*s > 0.0 && *s < 1.0);
    }

    let mut d_prime = Discriminator::new(99);
    assert_ne!(d_prime.forward(&z), got);
    d_prime.copy_from(&d).unwrap();
    assert_eq!(d_prime.param_hash(), d.param_hash());
    assert_eq!(d_prime.forward(&z), got);
}

#[test]
fn frozen_network_survives_an_optimizer_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut m = Separator::new(&SeparatorArch { base_filters: 2, depth: 2, kernel: 5 }, 1).unwrap();
    m.set_frozen(true);
    let x = rand_tensor(&[2, 1, 8, 8], &mut rng, 0.0, 1.0);
    let y = m.forward_tensor(&x, false).unwrap();
    m.forward_tensor(&x, true).unwrap();
    m.backward(&y);
    assert!(m.params().iter().all(|p| p.grad.iter().all(|g| *g == 0.0)));
    for p in m.params_mut() {
        p.grad.iter_mut().for_each(|g| *g = 1.0);
    }
    Adam::new(0.1).step(m.params_mut()).unwrap();
    // Buffers move in training mode, so compare parameters only.
    let mut fresh = Separator::new(&SeparatorArch { base_filters: 2, depth: 2, kernel: 5 }, 1).unwrap();
    fresh.set_frozen(true);
    for (a, b) in m.params().iter().zip(fresh.params()) {
        assert_eq!(a.value, b.value);
    }
}

#[test]
fn seeded_init_is_reproducible() {
    let arch = ExtractorArch { widths: [4, 4, 4, 4] };
    assert_eq!(Extractor::new(&arch, 3).unwrap().param_hash(), Extractor::new(&arch, 3).unwrap().param_hash());
    assert_ne!(Extractor::new(&arch, 3).unwrap().param_hash(), Extractor::new(&arch, 4).unwrap().param_hash());
    assert_eq!(Discriminator::new(1).param_hash(), Discriminator::new(1).param_hash());
    assert_ne!(Discriminator::new(1).param_hash(), Discriminator::new(2).param_hash());
    let s = SeparatorArch { base_filters: 2, depth: 3, kernel: 5 };
    assert_eq!(Separator::new(&s, 5).unwrap().param_hash(), Separator::new(&s, 5).unwrap().param_hash());
    for p in Extractor::new(&arch, 3).unwrap().params() {
        if p.name.ends_with("gamma") {
            assert!(p.value.iter().all(|v| *v == 1.0));
        }
        if p.name.ends_with("beta") {
            assert!(p.value.iter().all(|v| *v == 0.0));
        }
    }
}

#[test]
fn golden_forward_snapshot() {
    // Recorded from the first run; guards init and forward against drift.
    let mut f = Extractor::new(&ExtractorArch { widths: [2, 2, 2, 2] }, 42).unwrap();
    let x = Tensor::new(&[1, 1, 8, 64], (0..512).map(|i| ((i * 7 % 13) as f64 - 6.0) / 6.0).collect()).unwrap();
    let z = f.forward(&x, false).unwrap();
    let mut d = Discriminator::new(42);
    let s = d.forward(&z)[0];
    let sum: f64 = z.data().iter().sum();
    assert!((sum - GOLDEN_Z_SUM).abs() < 1e-12, "z sum {sum:.17}");
    assert!((s - GOLDEN_SCORE).abs() < 1e-12, "score {s:.17}");
}

const GOLDEN_Z_SUM: f64 = 1.60132981546601538;
const GOLDEN_SCORE: f64 = 0.55216604859379725;

#[test]
fn masked_log_mel_agrees_with_the_reference_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let geo = StftConfig::from_timing(16_000, 32.0, 10.0);
    let (t, f) = (10, geo.bins());
    let spec = MagnitudeSpectrogram::new(t, f, (0..t * f).map(|_| rng.random_range(0.0..5.0)).collect(), &geo).unwrap();
    let (ph, pw) = (16, 272);
    let mut padded = Tensor::zeros(&[1, 1, ph, pw]);
    let mut mask_values = Vec::new();
    for r in 0..ph {
        for k in 0..pw {
            let v = rng.random_range(0.0..1.0);
            padded.data_mut()[r * pw + k] = v;
            if r < t && k < f {
                mask_values.push(v);
            }
        }
    }
    let mask = rdalm_core::dsp::SpectralMask::new(t, f, mask_values).unwrap();
    let fb = MelFilterbank::slaney(16_000, geo.fft_size, 64);
    let reference = log_mel(&apply_mask(&spec, &mask).unwrap(), &fb, 1e-10).unwrap();
    let mut front = MaskedLogMel::new(fb, 1e-10);
    let got = front.forward(&[&spec], &padded).unwrap();
    for (a, b) in got.data().iter().zip(&reference.values) {
        assert!((a - b).abs() < 1e-9);
    }
}
