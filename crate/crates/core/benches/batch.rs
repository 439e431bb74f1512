use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cobot_intent::batch::{
    batch_actuator_frames, batch_forward_kinematics, batch_sessions, batch_solve_ik, Execution,
};
use cobot_intent::kinematics::{forward_kinematics, ArmModel, JointConfig};
use cobot_intent::{DirectionVector, Scenario, SessionConfig};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn random_configs(n: usize, seed: u64) -> Vec<JointConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| JointConfig(std::array::from_fn(|_| rng.random_range(-2.5..2.5))))
        .collect()
}

fn kinematics(c: &mut Criterion) {
    let model = ArmModel::default_arm();
    let qs = random_configs(10_000, 1);
    let mut g = c.benchmark_group("fk_10k");
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| batch_forward_kinematics(exec, &model, &qs)));
    }
    g.finish();

    let seeds = random_configs(200, 2);
    let problems: Vec<_> = random_configs(200, 3)
        .iter()
        .zip(seeds)
        .map(|(q, s)| (forward_kinematics(&model, q).unwrap(), s))
        .collect();
    let mut g = c.benchmark_group("ik_200");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| batch_solve_ik(exec, &model, &problems)));
    }
    g.finish();
}

fn haptics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let inputs: Vec<_> = (0..100_000)
        .map(|_| {
            let v = Vector3::new(rng.random(), rng.random(), rng.random()) * 2.0
                - Vector3::repeat(1.0);
            (DirectionVector::new_normalize(v), rng.random_range(0.2..1.0))
        })
        .collect();
    let mut g = c.benchmark_group("haptic_100k");
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| batch_actuator_frames(exec, &inputs)));
    }
    g.finish();
}

fn sessions(c: &mut Criterion) {
    let scenario = Scenario::default_scenario();
    let mut g = c.benchmark_group("autonomy_sessions");
    g.sample_size(10);
    for n in [4usize, 8] {
        let configs: Vec<_> = (0..n as u64)
            .map(|seed| SessionConfig {
                autonomy: true,
                seed,
                session_id: format!("bench-{seed}"),
                ..SessionConfig::default()
            })
            .collect();
        for (name, exec) in MODES {
            g.bench_with_input(BenchmarkId::new(name, n), &configs, |b, cfgs| {
                b.iter(|| batch_sessions(exec, &scenario, cfgs))
            });
        }
    }
    g.finish();
}

criterion_group!(benches, kinematics, haptics, sessions);
criterion_main!(benches);
