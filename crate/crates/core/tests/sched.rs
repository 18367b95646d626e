use lpvlfr::sched::{LayerRole, NetDocument, NetPlan, SchedulingNet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Evaluates a serialized net layer by layer:
/// `p = tanh(W_head h_L + W_byp [x; u; d] + b)`.
fn reference_forward(doc: &NetDocument, input: &[f64]) -> Vec<f64> {
    let mut h = input.to_vec();
    let mut pre = vec![0.0; doc.n_p];
    for layer in &doc.layers {
        let [rows, cols] = layer.shape;
        let src = match layer.role {
            LayerRole::Bypass => input,
            _ => &h[..],
        };
        assert_eq!(src.len(), cols);
        let mut out: Vec<f64> = (0..rows)
            .map(|i| (0..cols).map(|j| layer.weights[(i, j)] * src[j]).sum())
            .collect();
        if let Some(b) = &layer.bias {
            for (o, bi) in out.iter_mut().zip(b) {
                *o += bi;
            }
        }
        match layer.role {
            LayerRole::Hidden => h = out.iter().map(|v| v.tanh()).collect(),
            LayerRole::Head | LayerRole::Bypass => {
                for (p, o) in pre.iter_mut().zip(&out) {
                    *p += o;
                }
            }
        }
    }
    pre.iter().map(|v| v.tanh()).collect()
}

fn perturbed_net(seed: u64, n_d: usize, plan: &NetPlan) -> SchedulingNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = SchedulingNet::xavier_init(3, 1, n_d, 2, plan, &mut rng);
    let mut theta = vec![0.0; net.param_count()];
    net.write_params(&mut theta);
    for v in theta.iter_mut() {
        *v += rng.gen_range(-0.5..0.5);
    }
    net.read_params(&theta);
    net
}

#[test]
fn forward_matches_layerwise_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for (i, plan) in [
        NetPlan::linear(),
        NetPlan::default(),
        NetPlan { hidden: vec![5] },
    ]
    .iter()
    .enumerate()
    {
        for n_d in [0, 2] {
            let net = perturbed_net(i as u64 * 10 + n_d as u64, n_d, plan);
            let doc = net.to_document();
            for _ in 0..20 {
                let input: Vec<f64> = (0..4 + n_d).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let p = net.forward(&input[..3], &input[3..4], &input[4..]).unwrap();
                let r = reference_forward(&doc, &input);
                for (a, b) in p.iter().zip(&r) {
                    assert!((a - b).abs() < 1e-14, "{plan:?}: {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn xavier_weights_respect_their_limits() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let net = SchedulingNet::xavier_init(2, 1, 1, 3, &NetPlan::default(), &mut rng);
    let doc = net.to_document();
    assert_eq!(doc.layers.len(), 4);
    for layer in &doc.layers {
        let [rows, cols] = layer.shape;
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        assert!(layer.weights.as_slice().iter().all(|w| w.abs() <= limit));
        if let Some(b) = &layer.bias {
            assert!(b.iter().all(|v| *v == 0.0));
        }
    }
    let bypass = doc
        .layers
        .iter()
        .find(|l| l.role == LayerRole::Bypass)
        .unwrap();
    assert_eq!(bypass.shape, [3, 4]);
}

#[test]
fn json_round_trip_preserves_the_map() {
    let net = perturbed_net(33, 1, &NetPlan::default());
    let text = serde_json::to_string(&net).unwrap();
    let back: SchedulingNet = serde_json::from_str(&text).unwrap();
    assert_eq!(back, net);
    assert!(
        serde_json::from_str::<SchedulingNet>(&text.replace("\"bypass\"", "\"head\"")).is_err()
    );
}

proptest! {
    #[test]
    fn outputs_stay_in_the_open_unit_box(
        seed in 0u64..1000,
        x in prop::array::uniform3(-1e3f64..1e3),
        u in -1e3f64..1e3,
    ) {
        let net = perturbed_net(seed, 0, &NetPlan::default());
        let p = net.forward(&x, &[u], &[]).unwrap();
        prop_assert!(p.iter().all(|v| v.abs() <= 1.0));
    }
}
