use creditfuse::data::{Channel, Signal, SyntheticSpec};
use creditfuse::experiment::*;
use creditfuse::model::{BaseModel, FusionConfig, FusionGroup};
use creditfuse::train::TrainConfig;

#[test]
fn dbg_sweep_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let mut fusion = FusionConfig::new(FusionGroup::G3, BaseModel::Cnn);
    fusion.filters = 16; fusion.units = 16; fusion.attn_dim = 16;
    fusion.embed_dim = 12; fusion.encoder_ff = 16; fusion.encoder_blocks = 1;
    fusion.head_hidden = 24; fusion.max_len = 16;
    let spec = ExperimentSpec {
        data: DataSource::Synthetic(SyntheticSpec { n: 280, classes: 8, signal: Signal::Joint, seed: 50 }),
        fusion,
        train: TrainConfig { epochs: 8, batch_size: 32, learning_rate: 3e-3, ..TrainConfig::default() },
        split: SplitSpec::default(),
        eval: EvalSpec { resamples: 150, slices: vec![], ..EvalSpec::default() },
        max_vocab: 500,
        out_dir: dir.path().to_path_buf(),
        seed: 1,
    };
    let t0 = std::time::Instant::now();
    let rows = run_sweep(&spec).unwrap();
    println!("sweep elapsed {:?}", t0.elapsed());
    for r in &rows {
        println!("g{} {:<5} auc {:?}", r.group, r.base, r.auc.map(|v| (v * 1000.0).round() / 1000.0));
    }
    let t1 = std::time::Instant::now();
    let singles: Vec<Vec<Channel>> = Channel::ALL.iter().map(|&c| vec![c]).collect();
    let ablation = run_ablation(&spec, &singles).unwrap();
    println!("ablation elapsed {:?}", t1.elapsed());
    for (name, rep) in &ablation {
        println!("single {name}: auc {:?}", rep.weighted_auc.map(|v| (v * 1000.0).round() / 1000.0));
    }
}
