mod common;

use std::sync::OnceLock;

use common::{blocked_dot, tick_schedule_oracle};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rmssd::mlp_engine::{
    bottom_stage, decompose_l0, fc_cycles, fc_forward_blocked, mlp_forward_blocked, pipeline_schedule, schedule_at,
    top_stage, Kernel, KernelAssignment, LayerPlan,
};
use rmssd::recmodel::{
    generate_workload, mlp_forward, pooled_embeddings, presets, reference_inference_blocked, rel_err, Activation,
    DenseLayer, IndexDistribution, Model,
};
use rmssd::storage::TimingParams;
use rmssd::SimTime;

fn clock(mhz: f64) -> TimingParams {
    TimingParams {
        fc_clock_mhz: mhz,
        ..TimingParams::default()
    }
}

fn equal_stack(k: usize, width: usize) -> Vec<LayerPlan> {
    LayerPlan::chain(&vec![(width, width); k], &vec![Kernel::UNIT; k])
}

#[test]
fn two_layers_overlap_to_one_group_past_one_layer() {
    // 10 x 10 with unit tiles at 1 MHz: 100 us of issue per layer
    let t = clock(1.0);
    let plans = equal_stack(2, 10);
    let s = schedule_at(&plans, 1, &t, SimTime::ZERO).unwrap();
    let oracle = tick_schedule_oracle(&[(10, 10, 1, 1); 2], 1);
    assert_eq!(s.makespan, SimTime::from_us_f64(oracle as f64));
    let fill = 1.0;
    assert!((s.makespan.as_us_f64() - 110.0).abs() <= 2.0 * fill, "{}", s.makespan);
    assert!((s.conventional.as_us_f64() - 200.0).abs() <= 2.0 * fill, "{}", s.conventional);
}

#[test]
fn eight_layer_ratio_sweep() {
    let t = clock(200.0);
    let mut last = f64::INFINITY;
    for c in [10usize, 16, 32, 64, 128] {
        let plans = equal_stack(8, c);
        let s = schedule_at(&plans, 1, &t, SimTime::ZERO).unwrap();
        let oracle = tick_schedule_oracle(&vec![(c, c, 1, 1); 8], 1);
        assert_eq!(s.makespan, t.cycles(oracle));
        let ratio = s.makespan.as_ps() as f64 / s.conventional.as_ps() as f64;
        assert!((0.5..=0.6).contains(&ratio), "C={c}: {ratio}");
        assert!(ratio < last);
        last = ratio;
        if c == 64 {
            assert!(ratio <= 0.55);
        }
    }
}

#[test]
fn doctored_schedule_fails_causality() {
    let t = clock(200.0);
    let plans = equal_stack(2, 8);
    let input = vec![SimTime::ZERO; 8];
    let mut s = pipeline_schedule(&plans, 1, &t, SimTime::ZERO, &input).unwrap();
    s.check_causality(&plans, &input).unwrap();
    s.layers[1].steps[0].start = SimTime::ZERO;
    assert!(s.check_causality(&plans, &input).is_err());
}

fn random_layers(rng: &mut ChaCha8Rng, dims: &[usize]) -> Vec<DenseLayer> {
    dims.windows(2).map(|w| DenseLayer::random(w[0], w[1], rng)).collect()
}

fn blocked_net_oracle(layers: &[DenseLayer], kr: &[usize], x: &[f32]) -> Vec<f32> {
    let mut x = x.to_vec();
    for (i, (l, &k)) in layers.iter().zip(kr).enumerate() {
        x = (0..l.outputs())
            .map(|c| {
                let v = blocked_dot(l.row(c), &x, k, &[(0, l.inputs())]) + l.bias()[c];
                if i + 1 < layers.len() {
                    v.max(0.0)
                } else {
                    v
                }
            })
            .collect();
    }
    x
}

#[test]
fn three_layer_blocked_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let layers = random_layers(&mut rng, &[37, 24, 16, 5]);
    let k = Kernel::new(4, 4);
    for _ in 0..50 {
        let x: Vec<f32> = (0..37).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect();
        let got = mlp_forward_blocked(&layers, &[k; 3], &x, Activation::Linear).unwrap();
        let want = blocked_net_oracle(&layers, &[4, 4, 4], &x);
        assert_eq!(bits(&got), bits(&want));
    }
}

#[test]
fn split_sixteen_by_thirty_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let w = DenseLayer::random(32, 16, &mut rng);
    let split = decompose_l0(&w, 8, 24).unwrap();
    let k = Kernel::new(16, 4);
    for _ in 0..100 {
        let x: Vec<f32> = (0..32).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect();
        let got = split.evaluate(&x[..8], &x[8..], k, Activation::Linear).unwrap();
        let unsplit = fc_forward_blocked(&w, k, &x, Activation::Linear).unwrap();
        for (a, b) in got.iter().zip(&unsplit) {
            assert!(rel_err(*a, *b) <= 1e-5);
        }
        let two_phase: Vec<f32> = (0..16)
            .map(|c| blocked_dot(w.row(c), &x, 16, &[(0, 8), (8, 32)]) + w.bias()[c])
            .collect();
        assert_eq!(bits(&got), bits(&two_phase));
    }
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn pow2_upto(n: usize) -> impl Strategy<Value = usize> {
    let max = usize::BITS - 1 - n.leading_zeros();
    (0..=max).prop_map(|e| 1usize << e)
}

fn stack_strategy() -> impl Strategy<Value = (Vec<(usize, usize, usize, usize)>, u64)> {
    (prop::collection::vec(1usize..24, 2..6), 1u64..4)
        .prop_flat_map(|(dims, batch)| {
            let shapes: Vec<(usize, usize)> = dims.windows(2).map(|w| (w[0], w[1])).collect();
            let ks: Vec<_> = shapes.iter().map(|&(r, c)| (pow2_upto(r), pow2_upto(c))).collect();
            (Just(shapes), ks, Just(batch))
        })
        .prop_map(|(shapes, ks, batch)| {
            (
                shapes.iter().zip(&ks).map(|(&(r, c), &(kr, kc))| (r, c, kr, kc)).collect(),
                batch,
            )
        })
}

fn plans_of(layers: &[(usize, usize, usize, usize)]) -> Vec<LayerPlan> {
    let shapes: Vec<(usize, usize)> = layers.iter().map(|l| (l.0, l.1)).collect();
    let ks: Vec<Kernel> = layers.iter().map(|l| Kernel::new(l.2, l.3)).collect();
    LayerPlan::chain(&shapes, &ks)
}

struct Desk {
    models: Vec<Model>,
}

fn desk() -> &'static Desk {
    static D: OnceLock<Desk> = OnceLock::new();
    D.get_or_init(|| Desk {
        models: presets::NAMES
            .iter()
            .map(|n| Model::random(presets::by_name(n).unwrap(), 5))
            .collect(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn schedule_matches_tick_oracle((layers, batch) in stack_strategy()) {
        let t = clock(200.0);
        let s = schedule_at(&plans_of(&layers), batch as usize, &t, SimTime::ZERO).unwrap();
        prop_assert_eq!(s.makespan, t.cycles(tick_schedule_oracle(&layers, batch)));
    }

    #[test]
    fn alternating_never_slower_than_conventional(
        (layers, batch) in stack_strategy(),
        floors in prop::collection::vec(0u64..2_000_000, 5),
        jitter in prop::collection::vec(0u64..500_000, 24),
    ) {
        let t = clock(200.0);
        let mut plans = plans_of(&layers);
        for (p, f) in plans.iter_mut().zip(&floors) {
            p.dram_floor = SimTime(*f);
        }
        let origin = SimTime(1_000);
        let input: Vec<SimTime> = jitter.iter().take(plans[0].inputs).map(|&j| origin + SimTime(j)).collect();
        let s = pipeline_schedule(&plans, batch as usize, &t, origin, &input).unwrap();
        s.check_causality(&plans, &input).unwrap();
        prop_assert!(s.makespan <= s.conventional);
        let solo: SimTime = plans.iter().map(|p| p.standalone(batch as usize, &t)).sum();
        prop_assert!(s.makespan >= plans.last().unwrap().standalone(batch as usize, &t));
        prop_assert!(solo <= s.conventional);
    }

    #[test]
    fn bigger_tiles_never_cost_more_cycles(r in 1usize..300, c in 1usize..300, b in 1usize..9, er in 0u32..8, ec in 0u32..8) {
        let kr = (1usize << er).min(1 << (usize::BITS - 1 - r.leading_zeros()));
        let kc = (1usize << ec).min(1 << (usize::BITS - 1 - c.leading_zeros()));
        let base = fc_cycles(r, c, Kernel::new(kr, kc), b).unwrap();
        if kr * 2 <= r {
            prop_assert!(fc_cycles(r, c, Kernel::new(kr * 2, kc), b).unwrap() <= base);
        }
        if kc * 2 <= c {
            prop_assert!(fc_cycles(r, c, Kernel::new(kr, kc * 2), b).unwrap() <= base);
        }
        let full = Kernel::largest(r, c);
        prop_assert!(fc_cycles(r, c, full, b).unwrap() <= base);
    }

    #[test]
    fn blocked_forward_close_to_dense(
        dims in prop::collection::vec(1usize..=256, 2..5),
        seed in any::<u64>(),
        ek in prop::collection::vec((0u32..9, 0u32..9), 4),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = random_layers(&mut rng, &dims);
        let kernels: Vec<Kernel> = layers
            .iter()
            .zip(&ek)
            .map(|(l, &(a, b))| {
                let fit = Kernel::largest(l.inputs(), l.outputs());
                Kernel::new((1 << a).min(fit.kr), (1 << b).min(fit.kc))
            })
            .collect();
        let x: Vec<f32> = (0..dims[0]).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect();
        let got = mlp_forward_blocked(&layers, &kernels, &x, Activation::Linear).unwrap();
        let dense = mlp_forward(&layers, &x, Activation::Linear).unwrap();
        for (a, b) in got.iter().zip(&dense) {
            prop_assert!(rel_err(*a, *b) <= 1e-5, "{} vs {}", a, b);
        }
        let krs: Vec<usize> = kernels.iter().map(|k| k.kr).collect();
        prop_assert_eq!(bits(&got), bits(&blocked_net_oracle(&layers, &krs, &x)));
    }

    #[test]
    fn decomposition_is_exact(r_b in 1usize..40, r_e in 1usize..80, c in 1usize..20, ek in 0u32..7, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = DenseLayer::random(r_b + r_e, c, &mut rng);
        let kr = (1usize << ek).min(1 << (usize::BITS - 1 - (r_b + r_e).leading_zeros()));
        let k = Kernel::new(kr, 1);
        let x: Vec<f32> = (0..r_b + r_e).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect();
        let s = decompose_l0(&w, r_b, r_e).unwrap();
        let got = s.evaluate(&x[..r_b], &x[r_b..], k, Activation::Linear).unwrap();
        let want: Vec<f32> = (0..c)
            .map(|o| blocked_dot(w.row(o), &x, kr, &[(0, r_b), (r_b, r_b + r_e)]) + w.bias()[o])
            .collect();
        prop_assert_eq!(bits(&got), bits(&want));
        let unit = s.evaluate(&x[..r_b], &x[r_b..], Kernel::UNIT, Activation::Linear).unwrap();
        prop_assert_eq!(bits(&unit), bits(&fc_forward_blocked(&w, Kernel::UNIT, &x, Activation::Linear).unwrap()));
    }

    #[test]
    fn device_stages_match_blocked_reference(m in 0usize..3, tile in (0u32..7, 0u32..7, 0u32..5), seed in any::<u64>()) {
        let model = &desk().models[m];
        let spec = model.spec();
        let a = KernelAssignment::uniform(spec, Kernel::new(1 << tile.0, 1 << tile.1), 1 << tile.2);
        let q = generate_workload(spec, IndexDistribution::Uniform, 3, 1, seed).unwrap().remove(0);
        let partial = bottom_stage(model, &a, &q.dense).unwrap();
        let pooled = pooled_embeddings(model, &q).unwrap();
        let got = top_stage(model, &a, partial, &pooled).unwrap();
        let want = reference_inference_blocked(model, &q, &a.block_order()).unwrap();
        prop_assert_eq!(got.to_bits(), want.to_bits());
    }
}
