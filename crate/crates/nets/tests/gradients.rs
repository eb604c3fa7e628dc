//! Analytic gradients against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdalm_core::dsp::{MagnitudeSpectrogram, MelFilterbank, StftConfig};
use rdalm_core::metrics::BatchLabels;
use rdalm_nets::{
    grl_backward, grl_forward, sigmoid_bce, softmax_cross_entropy, Classifier, Discriminator, Extractor,
    ExtractorArch, MaskedLogMel, Module, Param, Separator, SeparatorArch, Tensor,
};

const H: f64 = 1e-5;
const STEPS: [f64; 3] = [H, 1e-6, 1e-7];

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= 1e-4 * analytic.abs().max(numeric.abs()) + 1e-8
}

/// Compares `analytic[k][j]` with central differences of `loss` for up to
/// `per_param` entries of every parameter returned by `params`. A probe that
/// straddles a ReLU or max-pool kink is retried with a smaller step.
fn check_params<S>(
    sys: &mut S,
    loss: impl Fn(&mut S) -> f64,
    params: impl Fn(&mut S) -> Vec<&mut Param>,
    analytic: &[Vec<f64>],
    per_param: usize,
) {
    let shapes: Vec<usize> = params(sys).iter().map(|p| p.len()).collect();
    let mut checked = 0;
    for (k, &len) in shapes.iter().enumerate() {
        let stride = (len / per_param).max(1);
        for j in (0..len).step_by(stride) {
            let orig = params(sys)[k].value[j];
            let mut numerics = Vec::new();
            for h in STEPS {
                params(sys)[k].value[j] = orig + h;
                let up = loss(sys);
                params(sys)[k].value[j] = orig - h;
                let down = loss(sys);
                params(sys)[k].value[j] = orig;
                numerics.push((up - down) / (2.0 * h));
                if close(analytic[k][j], *numerics.last().unwrap()) {
                    break;
                }
            }
            let name = params(sys)[k].name.clone();
            assert!(
                close(analytic[k][j], *numerics.last().unwrap()),
                "{name}[{j}]: analytic {} vs numeric {numerics:?}",
                analytic[k][j]
            );
            checked += 1;
        }
    }
    assert!(checked > 0);
}

fn grads(params: Vec<&Param>) -> Vec<Vec<f64>> {
    params.into_iter().map(|p| p.grad.clone()).collect()
}

struct Adversarial {
    f: Extractor,
    c: Classifier,
    d: Discriminator,
    x: Tensor,
    labels: BatchLabels,
    speech: Vec<bool>,
}

fn adversarial_system(seed: u64) -> Adversarial {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 8;
    let events: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let speech: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    Adversarial {
        f: Extractor::new(&ExtractorArch { widths: [2, 3, 2, 3] }, seed).unwrap(),
        c: Classifier::new(seed + 1),
        d: Discriminator::new(seed + 2),
        x: rand_tensor(&[n, 1, 16, 64], &mut rng),
        labels: BatchLabels::new(&events, &speech).unwrap(),
        speech,
    }
}

/// `L_cls - lambda * L_adv`, the objective whose gradient the reversal layer
/// delivers to the extractor.
fn composite(s: &mut Adversarial, lambda: f64) -> f64 {
    let z = s.f.forward(&s.x, true).unwrap();
    let (lc, _) = softmax_cross_entropy(&s.c.logits(&z, true), &s.labels).unwrap();
    let (la, _) = sigmoid_bce(&s.d.logits(&z, true), &s.speech).unwrap();
    lc - lambda * la
}

/// Backward through C and through GRL -> D; returns the raw adversarial
/// gradient w.r.t. `z` (before reversal).
fn backward_composite(s: &mut Adversarial, lambda: f64) -> Tensor {
    s.f.zero_grad();
    s.c.zero_grad();
    s.d.zero_grad();
    let z = s.f.forward(&s.x, true).unwrap();
    let (_, dlc) = softmax_cross_entropy(&s.c.logits(&z, true), &s.labels).unwrap();
    let mut dz = s.c.backward(&dlc);
    let (_, dla) = sigmoid_bce(&s.d.logits(&grl_forward(&z), true), &s.speech).unwrap();
    let raw = s.d.backward(&dla);
    dz.add_assign(&grl_backward(&raw, lambda).unwrap());
    s.f.backward(&dz);
    raw
}

#[test]
fn reversal_gradient_matches_finite_differences() {
    for lambda in [0.0, 0.5, 1.0, 2.0] {
        let mut s = adversarial_system(11);
        backward_composite(&mut s, lambda);
        let analytic = grads(s.f.params());
        check_params(&mut s, |s| composite(s, lambda), |s| s.f.params_mut(), &analytic, 12);
    }
}

#[test]
fn reversal_is_exactly_negative_lambda_times_plain_gradient() {
    for lambda in [0.0, 0.5, 1.0, 2.0] {
        let mut s = adversarial_system(5);
        let raw = backward_composite(&mut s, lambda);
        s.f.zero_grad();
        s.f.backward(&grl_backward(&raw, lambda).unwrap());
        let reversed = grads(s.f.params());
        s.f.zero_grad();
        s.f.backward(&raw);
        let plain = grads(s.f.params());
        for (r, p) in reversed.iter().flatten().zip(plain.iter().flatten()) {
            assert_eq!(*r, -lambda * p, "lambda {lambda}");
        }
    }
}

#[test]
fn negative_lambda_is_rejected() {
    let t = Tensor::new(&[1, 2], vec![1.0, 2.0]).unwrap();
    assert!(grl_backward(&t, -0.1).is_err());
    assert!(grl_backward(&t, f64::NAN).is_err());
    assert_eq!(grl_backward(&t, 1.0).unwrap().data(), &[-1.0, -2.0]);
}

#[test]
fn discriminator_and_classifier_parameters() {
    let mut s = adversarial_system(21);
    backward_composite(&mut s, 1.0);
    let c_grads = grads(s.c.params());
    let d_grads = grads(s.d.params());
    // Heads see the un-reversed losses.
    check_params(&mut s, |s| composite(s, 0.0), |s| s.c.params_mut(), &c_grads, 50);
    check_params(&mut s, |s| -composite(s, 1.0) + composite(s, 0.0), |s| s.d.params_mut(), &d_grads, 50);
}

#[test]
fn extractor_input_gradient() {
    let mut s = adversarial_system(3);
    s.f.zero_grad();
    let z = s.f.forward(&s.x, true).unwrap();
    let (_, dlc) = softmax_cross_entropy(&s.c.logits(&z, true), &s.labels).unwrap();
    let dx = s.f.backward(&s.c.backward(&dlc));
    for j in (0..s.x.len()).step_by(97) {
        let orig = s.x.data()[j];
        s.x.data_mut()[j] = orig + H;
        let up = composite(&mut s, 0.0);
        s.x.data_mut()[j] = orig - H;
        let down = composite(&mut s, 0.0);
        s.x.data_mut()[j] = orig;
        let numeric = (up - down) / (2.0 * H);
        assert!(close(dx.data()[j], numeric), "x[{j}]: {} vs {numeric}", dx.data()[j]);
    }
}

struct MaskPath {
    m: Separator,
    front: MaskedLogMel,
    specs: Vec<MagnitudeSpectrogram>,
    weights: Vec<f64>,
}

fn mask_path(seed: u64) -> MaskPath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geo = StftConfig {
        sample_rate_hz: 4000,
        window_len: 32,
        hop: 16,
        fft_size: 32,
    };
    let (frames, bins) = (6, geo.bins());
    let specs = (0..3)
        .map(|_| {
            let v = (0..frames * bins).map(|_| rng.random_range(0.1..2.0)).collect();
            MagnitudeSpectrogram::new(frames, bins, v, &geo).unwrap()
        })
        .collect();
    MaskPath {
        m: Separator::new(
            &SeparatorArch {
                base_filters: 2,
                depth: 2,
                kernel: 5,
            },
            seed,
        )
        .unwrap(),
        front: MaskedLogMel::new(MelFilterbank::slaney(4000, 32, 64), 1e-10),
        specs,
        weights: (0..3 * frames * 64).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

fn mask_objective(p: &mut MaskPath) -> (f64, Tensor) {
    let refs: Vec<&MagnitudeSpectrogram> = p.specs.iter().collect();
    let x = p.m.pad_batch(&refs).unwrap();
    let mask = p.m.forward_tensor(&x, true).unwrap();
    let feat = p.front.forward(&refs, &mask).unwrap();
    let loss = feat.data().iter().zip(&p.weights).map(|(a, b)| a * b).sum();
    (loss, feat)
}

#[test]
fn separator_through_masked_log_mel() {
    let mut p = mask_path(8);
    p.m.zero_grad();
    let (_, feat) = mask_objective(&mut p);
    let dfeat = Tensor::new(feat.shape(), p.weights.clone()).unwrap();
    let dmask = p.front.backward(&dfeat);
    p.m.backward(&dmask);
    let analytic = grads(p.m.params());
    check_params(&mut p, |p| mask_objective(p).0, |p| p.m.params_mut(), &analytic, 10);
}
