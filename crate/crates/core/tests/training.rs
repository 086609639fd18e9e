use rand::seq::SliceRandom;
use rand::Rng;
use relmem::data::{gen_split_blobs, BlobSpec};
use relmem::eval::evaluate_model;
use relmem::optim::{OptimizerConfig, OptimizerKind};
use relmem::rng::{stream, Component};
use relmem::trainer::{
    arch_for, run_stream, train_step_er, train_step_finetune, ReplayLearner, TrainRngs,
};
use relmem::{ArchConfig, Method, Parameters, ReplayClassifier, TaskStream, TrainConfig};

fn small_spec(train_per_class: usize) -> BlobSpec {
    BlobSpec {
        train_per_class,
        test_per_class: 20,
        ..BlobSpec::default()
    }
}

fn config(method: Method, seed: u64) -> TrainConfig {
    TrainConfig {
        method,
        seed,
        test_samples: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn runs_are_deterministic_per_seed() {
    let stream = gen_split_blobs(&small_spec(30), 3, 2, 9).unwrap();
    let arch = arch_for(&stream);
    for method in [Method::Gcl, Method::Er, Method::Finetune] {
        let a = run_stream::<f64>(&stream, &arch, &config(method, 5)).unwrap();
        let b = run_stream::<f64>(&stream, &arch, &config(method, 5)).unwrap();
        assert_eq!(a.logs, b.logs, "{}", method.name());
        assert_eq!(a.results, b.results, "{}", method.name());
        let c = run_stream::<f64>(&stream, &arch, &config(method, 6)).unwrap();
        assert_ne!(a.logs, c.logs, "{}", method.name());
    }
}

fn window_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[test]
fn graph_model_context_loss_falls_over_two_tasks() {
    // 2 tasks × 2 classes × 500 / batch 10 = 200 steps
    let mut improved = 0;
    for seed in 0..5 {
        let stream = gen_split_blobs(&small_spec(500), 2, 2, seed).unwrap();
        let out =
            run_stream::<f64>(&stream, &arch_for(&stream), &config(Method::Gcl, seed)).unwrap();
        assert_eq!(out.logs.len(), 200);
        let ctx: Vec<f64> = out.logs.iter().skip(5).map(|l| l.loss_ctx).collect();
        if window_mean(&ctx[ctx.len() - 10..]) < window_mean(&ctx[..10]) {
            improved += 1;
        }
    }
    assert!(improved >= 3, "context loss fell in only {improved}/5 runs");
}

#[test]
fn finetune_loss_falls_within_one_task() {
    let mut improved = 0;
    for seed in 0..5 {
        let stream = gen_split_blobs(&small_spec(250), 1, 2, seed).unwrap();
        let out = run_stream::<f64>(&stream, &arch_for(&stream), &config(Method::Finetune, seed))
            .unwrap();
        let loss: Vec<f64> = out.logs.iter().take(50).map(|l| l.loss_total).collect();
        if window_mean(&loss[40..]) < window_mean(&loss[..10]) {
            improved += 1;
        }
    }
    assert!(improved >= 3, "loss fell in only {improved}/5 runs");
}

#[test]
fn finetune_equals_replay_without_memory() {
    let stream = gen_split_blobs(&small_spec(40), 2, 2, 1).unwrap();
    let arch = arch_for(&stream);
    let net = ReplayClassifier::init(&arch, &mut stream_rng()).unwrap();
    let er_config = TrainConfig {
        memory_capacity: 0,
        ..config(Method::Er, 0)
    };
    let ft_config = config(Method::Finetune, 0);
    let mut er = ReplayLearner::new(net.clone(), &er_config);
    let mut ft = ReplayLearner::new(net, &ft_config);
    let mut rngs = TrainRngs::new(0);
    for (t, task) in stream.tasks.iter().enumerate() {
        for (i, batch) in task.batches(10).enumerate() {
            let a = train_step_er(&mut er, batch, &er_config, &mut rngs, i, t).unwrap();
            let b = train_step_finetune(&mut ft, batch, i, t).unwrap();
            assert_eq!(a, b);
        }
    }
    assert!(er.memory.is_empty());
    assert_eq!(er.net.named_params(), ft.net.named_params());
}

fn stream_rng() -> relmem::rng::RunRng {
    stream(0, Component::Init)
}

#[test]
fn evaluation_oracles() {
    let spec = BlobSpec {
        train_per_class: 1,
        test_per_class: 500,
        ..BlobSpec::default()
    };
    let stream = gen_split_blobs(&spec, 5, 2, 3).unwrap();
    let truth = evaluate_model(
        |_, ex| Ok(ex.iter().map(|e| e.label).collect()),
        &stream.tasks,
    )
    .unwrap();
    assert_eq!(truth, vec![1.0; 5]);

    let mut rng = stream_rng();
    let random = evaluate_model(
        |_, ex| Ok(ex.iter().map(|_| rng.random_range(0..10)).collect()),
        &stream.tasks,
    )
    .unwrap();
    for acc in random {
        assert!((acc - 0.1).abs() < 0.03, "{acc}");
    }
}

fn shuffled(stream: &TaskStream, seed: u64) -> TaskStream {
    let mut out = stream.clone();
    let mut rng = stream_rng_seeded(seed);
    for task in &mut out.tasks {
        task.train.shuffle(&mut rng);
    }
    out
}

fn stream_rng_seeded(seed: u64) -> relmem::rng::RunRng {
    stream(seed, Component::Data)
}

#[test]
fn batch_order_leaves_results_stable() {
    let mut base_mean = vec![0.0; 9];
    let mut shuf_mean = vec![0.0; 9];
    for seed in 0..5 {
        let spec = BlobSpec {
            test_per_class: 100,
            ..BlobSpec::default()
        };
        let stream = gen_split_blobs(&spec, 3, 2, seed).unwrap();
        let arch = arch_for(&stream);
        let cfg = config(Method::Finetune, seed);
        let a = run_stream::<f64>(&stream, &arch, &cfg).unwrap();
        let b = run_stream::<f64>(&shuffled(&stream, seed + 100), &arch, &cfg).unwrap();
        assert_ne!(a.logs, b.logs);
        for i in 0..3 {
            for j in 0..3 {
                base_mean[i * 3 + j] += a.results.get(i, j) / 5.0;
                shuf_mean[i * 3 + j] += b.results.get(i, j) / 5.0;
            }
        }
    }
    for (a, b) in base_mean.iter().zip(&shuf_mean) {
        assert!((a - b).abs() <= 0.03, "{base_mean:?} vs {shuf_mean:?}");
    }
}

#[test]
fn split_blobs_are_linearly_separable() {
    let spec = BlobSpec {
        train_per_class: 300,
        test_per_class: 100,
        ..BlobSpec::default()
    };
    let stream = gen_split_blobs(&spec, 5, 2, 4).unwrap();
    let arch = ArchConfig {
        trunk_widths: vec![],
        ..arch_for(&stream)
    };
    let probe_config = TrainConfig {
        method: Method::Finetune,
        optimizer: OptimizerConfig {
            kind: OptimizerKind::Adam,
            lr: 0.01,
            ..OptimizerConfig::default()
        },
        ..TrainConfig::default()
    };
    let mut probe = ReplayLearner::new(
        ReplayClassifier::init(&arch, &mut stream_rng()).unwrap(),
        &probe_config,
    );
    let mut all: Vec<_> = stream.tasks.iter().flat_map(|t| t.train.clone()).collect();
    let mut rng = stream_rng_seeded(0);
    for epoch in 0..5 {
        all.shuffle(&mut rng);
        for (i, batch) in all.chunks(32).enumerate() {
            train_step_finetune(&mut probe, batch, i, epoch).unwrap();
        }
    }
    let test: Vec<_> = stream.tasks.iter().flat_map(|t| t.test.clone()).collect();
    let pred = probe.predict(&test).unwrap();
    let acc = pred
        .iter()
        .zip(&test)
        .filter(|(p, e)| **p == e.label)
        .count() as f64
        / test.len() as f64;
    assert!(acc > 0.9, "linear probe accuracy {acc}");
}
