use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use ttrbody::adaptation::{corrupt, keypoint2d_loss, LossWeights, NoiseLevel, SequenceBuffer};
use ttrbody::body::rotation::rodrigues;
use ttrbody::body::{
    forward_kinematics, project_weak_perspective, BodyParams, BodyTemplate, CamParams, Joints3D, Keypoints2D,
    NUM_BETAS, NUM_JOINTS, THETA_DIM,
};
use ttrbody::data::{predictions_from_jsonl, predictions_to_jsonl, Prediction};
use ttrbody::metrics::{gap, mpjpe, pa_mpjpe, round2};
use ttrbody::nnet::{RegressorOutput, TemporalWindow, FEATURE_DIM, WINDOW_LEN};

fn params() -> impl Strategy<Value = BodyParams> {
    (
        prop::collection::vec(-2.0..2.0f64, THETA_DIM),
        prop::collection::vec(-2.0..2.0f64, NUM_BETAS),
    )
        .prop_map(|(theta, beta)| BodyParams { theta, beta })
}

fn joints() -> impl Strategy<Value = Joints3D> {
    prop::collection::vec(prop::array::uniform3(-500.0..500.0f64), NUM_JOINTS).prop_map(|points| Joints3D { points })
}

fn output() -> impl Strategy<Value = RegressorOutput> {
    (params(), 1e-3..1.0f64, prop::array::uniform2(-5.0..5.0f64)).prop_map(|(params, s, t)| RegressorOutput {
        params,
        cam: CamParams::new(s, t).unwrap(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rotations_are_proper(w in prop::array::uniform3(-10.0..10.0f64)) {
        let r = rodrigues(&Vector3::from(w));
        prop_assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-12);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pose_preserves_bone_lengths(p in params(), seed in 0u64..50) {
        let t = BodyTemplate::generate(seed);
        let j = forward_kinematics(&p, &t).unwrap();
        for i in 1..NUM_JOINTS {
            let a = Vector3::from(j.points[i]);
            let b = Vector3::from(j.points[t.parent[i]]);
            let want = t.bone_length(i, &p.beta);
            prop_assert!(((a - b).norm() - want).abs() <= 1e-9 * want.max(1.0));
        }
    }

    #[test]
    fn projection_is_affine_in_the_camera(p in params(), s in 1e-3..1.0f64, tx in -3.0..3.0f64, ty in -3.0..3.0f64) {
        let t = BodyTemplate::generate(1);
        let j = forward_kinematics(&p, &t).unwrap();
        let kp = project_weak_perspective(&j, &CamParams::new(s, [tx, ty]).unwrap()).unwrap();
        for (q, x) in kp.points.iter().zip(&j.points) {
            prop_assert!((q[0] - (s * x[0] + tx)).abs() < 1e-9);
            prop_assert!((q[1] - (s * x[1] + ty)).abs() < 1e-9);
        }
        prop_assert!(kp.confidence.iter().all(|c| *c == 1.0));
    }

    #[test]
    fn mpjpe_is_a_centered_distance(a in joints(), b in joints(), shift in prop::array::uniform3(-100.0..100.0f64)) {
        let e = mpjpe(&a, &b).unwrap();
        prop_assert!(e >= 0.0);
        prop_assert!((e - mpjpe(&b, &a).unwrap()).abs() < 1e-9);
        prop_assert_eq!(mpjpe(&a, &a).unwrap(), 0.0);
        let moved = Joints3D { points: a.points.iter().map(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]]).collect() };
        prop_assert!((mpjpe(&moved, &b).unwrap() - e).abs() < 1e-9);
        prop_assert!(pa_mpjpe(&a, &b).unwrap() >= 0.0);
    }

    #[test]
    fn gap_is_the_rounded_difference(a in 0.0..500.0f64, b in 0.0..500.0f64) {
        let g = gap(a, b);
        prop_assert_eq!(g, round2(b - a));
        prop_assert!((g - (b - a)).abs() <= 0.005 + 1e-9);
    }

    #[test]
    fn keypoint_loss_is_nonnegative_and_zero_on_agreement(
        pts in prop::collection::vec(prop::array::uniform2(-10.0..10.0f64), NUM_JOINTS),
        other in prop::collection::vec(prop::array::uniform2(-10.0..10.0f64), NUM_JOINTS),
        conf in prop::collection::vec(0.0..=1.0f64, NUM_JOINTS),
    ) {
        let g = Keypoints2D { points: pts.clone(), confidence: conf.clone() };
        let p = Keypoints2D { points: other, confidence: vec![1.0; NUM_JOINTS] };
        let (v, grad) = keypoint2d_loss(&p, &g).unwrap();
        prop_assert!(v >= 0.0);
        prop_assert_eq!(grad.len(), NUM_JOINTS);
        let same = Keypoints2D { points: pts, confidence: vec![1.0; NUM_JOINTS] };
        let (z, zg) = keypoint2d_loss(&same, &g).unwrap();
        prop_assert_eq!(z, 0.0);
        prop_assert!(zg.iter().all(|d| d[0] == 0.0 && d[1] == 0.0));
    }

    #[test]
    fn constant_window_aggregates_to_the_frame(f in prop::collection::vec(-5.0..5.0f64, FEATURE_DIM)) {
        let frames = vec![f.clone(); WINDOW_LEN];
        let input = TemporalWindow::around(&frames, 2).unwrap().aggregate().unwrap();
        prop_assert_eq!(&input[..FEATURE_DIM], &f[..]);
        prop_assert!(input[FEATURE_DIM..].iter().all(|d| *d == 0.0));
    }

    #[test]
    fn zero_noise_is_identity(f in prop::collection::vec(-5.0..5.0f64, FEATURE_DIM), seed in any::<u64>()) {
        use rand::SeedableRng;
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let out = corrupt(&f, NoiseLevel::from_pixel(0.0).unwrap(), &mut r).unwrap();
        prop_assert_eq!(out, f);
    }

    #[test]
    fn noise_is_reproducible_per_seed(f in prop::collection::vec(-5.0..5.0f64, FEATURE_DIM), seed in any::<u64>(), sigma in 1.0..100.0f64) {
        use rand::SeedableRng;
        let level = NoiseLevel::from_pixel(sigma).unwrap();
        let a = corrupt(&f, level, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = corrupt(&f, level, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.iter().zip(&f).any(|(x, y)| x != y));
    }

    #[test]
    fn buffer_follows_the_last_name(names in prop::collection::vec("[a-c]", 1..40)) {
        let mut buf = SequenceBuffer::new();
        prop_assert!(buf.last_sequence().is_none());
        let mut prev: Option<String> = None;
        for n in &names {
            prop_assert_eq!(buf.is_new_sequence(n), prev.as_deref() != Some(n.as_str()));
            buf.update(n);
            prop_assert_eq!(buf.last_sequence(), Some(n.as_str()));
            prop_assert!(!buf.is_new_sequence(n));
            prev = Some(n.clone());
        }
    }

    #[test]
    fn predictions_round_trip_bit_exactly(outs in prop::collection::vec(output(), 1..6)) {
        let preds: Vec<Prediction> = outs
            .into_iter()
            .enumerate()
            .map(|(i, output)| Prediction { sequence: format!("s{}", i % 2), index: i, output })
            .collect();
        let text = predictions_to_jsonl(&preds).unwrap();
        let back = predictions_from_jsonl(&text).unwrap();
        prop_assert_eq!(back.len(), preds.len());
        for (a, b) in back.iter().zip(&preds) {
            let (x, y): (Vec<u64>, Vec<u64>) = (
                a.output.to_vec().iter().map(|v| v.to_bits()).collect(),
                b.output.to_vec().iter().map(|v| v.to_bits()).collect(),
            );
            prop_assert_eq!(x, y);
        }
        prop_assert_eq!(predictions_to_jsonl(&back).unwrap(), text);
    }

    #[test]
    fn negative_loss_weights_are_rejected(l in -10.0..-1e-9f64, k in 0usize..4) {
        let mut w = LossWeights::default();
        match k {
            0 => w.lambda1 = l,
            1 => w.lambda2 = l,
            2 => w.lambda3 = l,
            _ => w.lambda4 = l,
        }
        prop_assert!(w.validate().is_err());
    }
}
