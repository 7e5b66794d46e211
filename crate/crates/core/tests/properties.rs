use mmfuse_core::data::{PopularityTarget, TaskKind};
use mmfuse_core::decoders::{
    binary_cross_entropy, Decoder, DecoderOutput, DecoderSpec, TimeScaler,
};
use mmfuse_core::nn::{AdamConfig, AdamState, Matrix, ParamStore};
use mmfuse_core::objective::{iblbo_loss, kl_standard_normal};
use mmfuse_core::poe::{
    poe_fuse, GaussianEmbedding, GaussianExpert, ModalityEncoder, ModalitySpec, LOG_STD_CLAMP,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn experts(k: usize, dim: usize) -> impl Strategy<Value = Vec<GaussianExpert>> {
    prop::collection::vec(
        (
            prop::collection::vec(-5.0..5.0f64, dim),
            prop::collection::vec(0.05..5.0f64, dim),
        )
            .prop_map(|(mean, std)| GaussianExpert { mean, std }),
        k,
    )
}

fn expert_sets() -> impl Strategy<Value = (Vec<GaussianExpert>, bool)> {
    (1usize..5, 1usize..4, any::<bool>())
        .prop_flat_map(|(k, d, prior)| (experts(k, d), Just(prior)))
}

proptest! {
    #[test]
    fn fused_precision_is_the_sum((es, prior) in expert_sets()) {
        let f = poe_fuse(&es, prior).unwrap();
        for d in 0..f.dim() {
            let sum: f64 = es.iter().map(|e| 1.0 / (e.std[d] * e.std[d])).sum::<f64>() + if prior { 1.0 } else { 0.0 };
            let fused = 1.0 / (f.std[d] * f.std[d]);
            prop_assert!((fused - sum).abs() <= 1e-12 * sum, "{fused} vs {sum}");
        }
    }

    #[test]
    fn fusing_never_widens((es, prior) in expert_sets()) {
        let f = poe_fuse(&es, prior).unwrap();
        for d in 0..f.dim() {
            let min = es.iter().map(|e| e.std[d]).fold(f64::INFINITY, f64::min);
            // 1/sqrt(1/σ²) can round one ulp above σ for a lone expert
            prop_assert!(f.std[d] <= min * (1.0 + 1e-15));
        }
    }

    #[test]
    fn fusion_ignores_expert_order((es, prior) in expert_sets(), rot in 0usize..4) {
        let a = poe_fuse(&es, prior).unwrap();
        let mut shuffled = es.clone();
        shuffled.reverse();
        let r = rot % shuffled.len();
        shuffled.rotate_left(r);
        let b = poe_fuse(&shuffled, prior).unwrap();
        for d in 0..a.dim() {
            prop_assert!((a.mean[d] - b.mean[d]).abs() <= 1e-12 * (1.0 + a.mean[d].abs()));
            prop_assert!((a.std[d] - b.std[d]).abs() <= 1e-12 * a.std[d]);
        }
    }

    #[test]
    fn encoder_std_stays_in_the_clamp(seed in 0u64..1000, scale in 1.0..1e6f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let spec = ModalitySpec { name: "m".into(), dim: 3 };
        let enc = ModalityEncoder::new(&mut store, &spec, 4, 2, &mut rng).unwrap();
        for x in [[scale, -scale, scale], [-scale, scale, -scale]] {
            let (e, _) = enc.encode(&store, &x).unwrap();
            for s in e.std {
                prop_assert!(s >= (-LOG_STD_CLAMP).exp() * (1.0 - 1e-12));
                prop_assert!(s <= LOG_STD_CLAMP.exp() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn kl_is_non_negative(mean in prop::collection::vec(-10.0..10.0f64, 1..6), log_std in prop::collection::vec(-7.0..7.0f64, 6)) {
        let std: Vec<f64> = log_std[..mean.len()].iter().map(|l| l.exp()).collect();
        let kl = kl_standard_normal(&GaussianEmbedding { mean, std });
        prop_assert!(kl >= 0.0);
    }

    #[test]
    fn total_is_affine_in_kl(ell in -50.0..50.0f64, kl in 0.0..50.0f64, dk in 0.0..10.0f64, lambda in 0.0..100.0f64) {
        let a = iblbo_loss(ell, kl, lambda).unwrap();
        let b = iblbo_loss(ell, kl + dk, lambda).unwrap();
        prop_assert!((b.total - a.total - lambda * dk).abs() <= 1e-9 * (1.0 + a.total.abs() + b.total.abs()));
    }

    #[test]
    fn bce_is_finite_everywhere(p in prop::num::f64::ANY, y in any::<bool>()) {
        prop_assume!(!p.is_nan());
        prop_assert!(binary_cross_entropy(p, y).is_finite());
    }

    #[test]
    fn classifier_output_is_strictly_inside_unit_interval(seed in 0u64..500, z in prop::collection::vec(-1e4..1e4f64, 3)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let dec = Decoder::new(&mut store, &DecoderSpec::new(TaskKind::Classification), 3, TimeScaler::default(), &mut rng).unwrap();
        let (out, _) = dec.forward(&store, &z, None).unwrap();
        let DecoderOutput::Probability(p) = out else { panic!("classifier output") };
        prop_assert!(p > 0.0 && p < 1.0);
        let (loss, _) = dec.loss(&out, &PopularityTarget::Binary(true)).unwrap();
        prop_assert!(loss.is_finite());
    }

    #[test]
    fn temporal_output_length_follows_timestamps(seed in 0u64..500, t in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let dec = Decoder::new(&mut store, &DecoderSpec::new(TaskKind::Temporal), 2, TimeScaler { mean: 10.0, std: 5.0 }, &mut rng).unwrap();
        let ts: Vec<f64> = (1..=t).map(|i| i as f64).collect();
        let (out, _) = dec.forward(&store, &[0.3, -0.2], Some(&ts)).unwrap();
        prop_assert_eq!(out.as_sequence().unwrap().len(), t);
    }

    #[test]
    fn adam_with_zero_gradient_is_identity(values in prop::collection::vec(-3.0..3.0f64, 1..8), prior_steps in 0usize..20, lr in 1e-6..1.0f64) {
        let n = values.len();
        let mut store = ParamStore::new();
        let id = store.add("p", Matrix::from_vec(n, 1, values).unwrap()).unwrap();
        let before = store.value(id).clone();
        let mut adam = AdamState::new(&store, AdamConfig::default());
        for _ in 0..=prior_steps {
            adam.step(&mut store, lr).unwrap();
        }
        prop_assert_eq!(store.value(id), &before);
        prop_assert_eq!(adam.steps(), prior_steps as u64 + 1);
    }
}
