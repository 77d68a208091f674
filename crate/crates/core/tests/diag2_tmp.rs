use genrec_core::corpus::{build_sequences, leave_one_out};
use genrec_core::synthetic::{generate, SyntheticSpec};
use genrec_core::tasks::{run_stage, Stage, StageConfig};
use genrec_core::{GenRecConfig, ModelWeights, Tokenizer};

fn probe(batch: usize, lr: f32, drop: f32, epochs: usize) {
    let recs = generate(&SyntheticSpec::cyclic());
    let seqs = build_sequences(&recs);
    let tok = Tokenizer::build(&seqs, 512).unwrap();
    let splits: Vec<_> = seqs.iter().map(|s| leave_one_out(s).unwrap()).collect();
    let mut config = GenRecConfig::desk_default(tok.vocab_size(), tok.num_users(), tok.num_items());
    config.dropout = drop;
    let mut w = ModelWeights::init(config, 42).unwrap();
    let mut cfg = StageConfig::new(Stage::Pretrain);
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.base_lr = lr;
    cfg.seed = 43;
    let log = run_stage(&tok, &splits, &cfg, &mut w).unwrap();
    let losses: Vec<String> = log.epochs.iter().step_by(epochs/10.max(1)).map(|e| format!("{:.3}", e.mean_loss)).collect();
    eprintln!("batch={batch} lr={lr} drop={drop} epochs={epochs}: {}", losses.join(" "));
}

#[test]
fn diagnose2() {
    probe(16, 1e-3, 0.1, 60);
    probe(16, 3e-3, 0.1, 20);
    probe(16, 3e-3, 0.0, 20);
    probe(4, 1e-3, 0.0, 20);
}
