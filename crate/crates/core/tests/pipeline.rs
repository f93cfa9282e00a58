use gs_infonce::evaluation::{evaluate_pairs, StsPair};
use gs_infonce::loss::noise_count;
use gs_infonce::trainer::{initial_params, prepare_corpus, train_on_sentences};
use gs_infonce::*;

fn corpus() -> Vec<String> {
    let topics = [["red", "apple", "fruit"], ["fast", "car", "road"], ["cold", "snow", "ice"], ["loud", "drum", "beat"]];
    let filler = ["the", "a", "of", "and", "is"];
    let mut rng = PortableRng::new(99);
    (0..64)
        .map(|i| {
            let t = &topics[i % 4];
            let mut words: Vec<&str> = vec![t[rng.below(3)], t[rng.below(3)]];
            for _ in 0..6 {
                words.push(filler[rng.below(5)]);
            }
            words.join(" ")
        })
        .collect()
}

fn pairs() -> Vec<StsPair> {
    let p = |a: &str, b: &str, g: f64| StsPair {
        sentence_a: a.into(),
        sentence_b: b.into(),
        gold_score: g,
    };
    vec![
        p("red apple the", "fruit of a apple", 5.0),
        p("fast car and", "road is fast", 5.0),
        p("cold ice", "snow the", 5.0),
        p("red apple", "loud drum", 0.0),
        p("fast road", "cold snow", 0.0),
        p("drum beat the", "fruit and", 0.0),
    ]
}

fn small_config(dir: &std::path::Path) -> TrainConfig {
    let mut cfg = TrainConfig::new(dir.join("corpus.txt"), dir.join("ckpt.bin"));
    cfg.batch_size = 8;
    cfg.steps = 30;
    cfg.dim = 8;
    cfg.eval_every = 10;
    cfg.loss = GsLossConfig::for_batch(8, 8);
    cfg
}

#[test]
fn file_based_run_matches_in_memory_run() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("corpus.txt"), corpus().join("\n")).unwrap();
    let tsv: String = pairs()
        .iter()
        .map(|p| format!("{}\t{}\t{}\n", p.sentence_a, p.sentence_b, p.gold_score))
        .collect();
    std::fs::write(dir.path().join("val.tsv"), tsv).unwrap();
    let mut cfg = small_config(dir.path());
    cfg.validation_path = Some(dir.path().join("val.tsv"));
    let from_files = train_run(&cfg).unwrap();
    let in_memory = train_on_sentences(&cfg, &corpus(), Some(&pairs())).unwrap();
    assert_eq!(from_files.log, in_memory.log);
    assert_eq!(from_files.log.steps.len(), 30);
    assert_eq!(from_files.log.evals.len(), 3);
    assert_eq!(from_files.noise_shape, (24, 8));

    let loaded = read_checkpoint(dir.path().join("ckpt.bin")).unwrap();
    assert_eq!(loaded, from_files.best_params);
    let best = from_files.best_eval.unwrap();
    let rescored = evaluate_pairs(&loaded, &from_files.vocab, &pairs(), "val").unwrap();
    assert_eq!(rescored.spearman, best.spearman);
}

#[test]
fn m_zero_run_equals_plain_infonce_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut gs = small_config(dir.path());
    gs.loss.noise.count = noise_count(0.0, gs.batch_size);
    gs.loss.lambda = 2.5;
    let mut plain = small_config(dir.path());
    plain.objective = Objective::InfoNce;
    let a = train_on_sentences(&gs, &corpus(), None).unwrap();
    let b = train_on_sentences(&plain, &corpus(), None).unwrap();
    for (x, y) in a.log.losses().iter().zip(b.log.losses()) {
        assert!((x - y).abs() <= 1e-12);
    }
    assert_eq!(a.final_params, b.final_params);
}

#[test]
fn noise_changes_the_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let gs = small_config(dir.path());
    let mut plain = small_config(dir.path());
    plain.objective = Objective::InfoNce;
    let a = train_on_sentences(&gs, &corpus(), None).unwrap();
    let b = train_on_sentences(&plain, &corpus(), None).unwrap();
    assert!(a.log.losses()[0] > b.log.losses()[0]);
}

#[test]
fn untrained_inference_is_deterministic_and_dropout_free() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let prepared = prepare_corpus(&corpus());
    let params = initial_params(&cfg, &prepared.vocab).unwrap();
    let batch = prepared.vocab.batch(corpus().iter().map(String::as_str)).unwrap();
    let a = encode(&params, &batch, 1, false).unwrap();
    let b = encode(&params, &batch, 2, false).unwrap();
    assert_eq!(a, b);
    let (v1, v2) = encode_pair(&params, &batch, 1, 2).unwrap();
    assert_ne!(v1, v2);
}

#[test]
fn f32_and_f64_losses_agree() {
    let mut rng = PortableRng::new(5);
    let rows = |rng: &mut PortableRng, n: usize| -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..6).map(|_| rng.standard_normal()).collect()).collect()
    };
    let v1 = Embeddings::from_rows(&rows(&mut rng, 4)).unwrap();
    let v2 = Embeddings::from_rows(&rows(&mut rng, 4)).unwrap();
    let noise = sample_noise::<f64>(&NoiseConfig::standard(12, 6, 3)).unwrap();
    let r64 = gs_info_nce(&v1, &v2, &noise, 0.05, 1.0).unwrap();
    let r32 = gs_info_nce(&v1.cast::<f32>(), &v2.cast::<f32>(), &noise.cast::<f32>(), 0.05f32, 1.0f32).unwrap();
    assert!((r64.mean_loss - r32.mean_loss as f64).abs() < 1e-4 * r64.mean_loss.abs().max(1.0));
}

#[test]
fn probe_sweep_is_reproducible_and_monotone() {
    let source = synthetic_embedding_source(10, 0.3, 16, 4).unwrap();
    let cfg = ProbeConfig {
        batch_sizes: vec![8, 32, 128],
        repeats: 10,
        top_k: 2,
        seed: 1,
    };
    let a = probe_sweep(&cfg, &source).unwrap();
    assert_eq!(a, probe_sweep(&cfg, &source).unwrap());
    for rank in 0..2 {
        let series: Vec<f64> = a.rows.iter().map(|r| r.means[rank]).collect();
        assert!(series.windows(2).all(|w| w[0] <= w[1]), "{series:?}");
    }
    assert_eq!(a.to_csv(), probe_sweep(&cfg, &source).unwrap().to_csv());
}

#[test]
fn gradcheck_passes_with_f64_defaults() {
    let report = run_gradcheck(&GradCheckConfig {
        trials: 5,
        ..Default::default()
    })
    .unwrap();
    assert!(report.passes(1e-5), "{report:?}");
}
