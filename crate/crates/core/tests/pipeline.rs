//! End-to-end data-pipeline checks: planted-signal probes and the channel
//! ablation protocol on synthetic data.

use creditfuse::data::{
    generate_synthetic, split_random, Channel, Dataset, Signal, SyntheticSpec,
};
use creditfuse::experiment::{
    run_ablation, DataSource, EvalSpec, ExperimentSpec, SplitSpec,
};
use creditfuse::layers::DenseLayer;
use creditfuse::metrics::auc_weighted_ovr;
use creditfuse::model::{BaseModel, FusionConfig, FusionGroup};
use creditfuse::tensor::{cross_entropy_loss, Tensor};
use creditfuse::train::{adam_step, AdamState, TrainConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Multinomial logistic probe: one dense layer trained with Adam on fixed
/// feature vectors, returning held-out class probabilities.
fn linear_probe_auc(
    features: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
    train_n: usize,
    epochs: usize,
    seed: u64,
) -> f64 {
    let dim = features[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layer = DenseLayer::new(dim, classes, None, &mut rng);
    let params = [layer.weights.clone(), layer.bias.clone()];
    let mut adam = AdamState::new(&params);
    let cfg = TrainConfig {
        learning_rate: 0.05,
        ..TrainConfig::default()
    };

    let x_train = Tensor::from_vec(
        features[..train_n].concat(),
        &[train_n, dim],
    )
    .unwrap();
    let y_train: Vec<usize> = labels[..train_n].to_vec();
    for _ in 0..epochs {
        for p in &params {
            p.zero_grad();
        }
        let logits = layer.forward(&x_train).unwrap();
        let loss = cross_entropy_loss(&logits, &y_train).unwrap();
        loss.backward().unwrap();
        adam_step(&params, &mut adam, &cfg);
    }

    let test_n = features.len() - train_n;
    let x_test = Tensor::from_vec(features[train_n..].concat(), &[test_n, dim]).unwrap();
    let probs = layer
        .forward(&x_test)
        .unwrap()
        .softmax_lastdim()
        .unwrap()
        .value();
    let prob_rows: Vec<Vec<f64>> = probs.chunks_exact(classes).map(|r| r.to_vec()).collect();
    auc_weighted_ovr(&prob_rows, &labels[train_n..]).unwrap()
}

/// Normalized counts of the most frequent vocabulary ids, as bag-of-words
/// probe features.
fn bag_of_words(dataset: &Dataset, dims: usize) -> Vec<Vec<f64>> {
    dataset
        .samples
        .iter()
        .map(|s| {
            let mut histogram = vec![0.0; dims];
            let mut total = 0.0;
            for &t in &s.tokens {
                if (t as usize) < dims && t != creditfuse::data::PAD_ID {
                    histogram[t as usize] += 1.0;
                    total += 1.0;
                }
            }
            if total > 0.0 {
                for v in histogram.iter_mut() {
                    *v /= total;
                }
            }
            histogram
        })
        .collect()
}

#[test]
fn numeric_only_signal_is_linearly_recoverable_from_ratios_but_not_text() {
    let spec = SyntheticSpec {
        n: 400,
        classes: 8,
        signal: Signal::NumericOnly,
        seed: 31,
    };
    let (dataset, _vocab) = generate_synthetic(&spec, 32, 400).unwrap();
    let labels: Vec<usize> = dataset.samples.iter().map(|s| (s.label - 1) as usize).collect();

    let ratios: Vec<Vec<f64>> = dataset.samples.iter().map(|s| s.ratios.clone()).collect();
    let ratios_auc = linear_probe_auc(&ratios, &labels, 8, 300, 150, 1);
    assert!(ratios_auc > 0.9, "ratios probe AUC {ratios_auc}");

    // Text shuffled across samples: no label information survives.
    let mut text_features = bag_of_words(&dataset, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    text_features.shuffle(&mut rng);
    let text_auc = linear_probe_auc(&text_features, &labels, 8, 300, 150, 2);
    assert!(
        (0.45..=0.55).contains(&text_auc),
        "shuffled-text probe AUC {text_auc} outside 0.5±0.05"
    );
}

#[test]
fn text_only_signal_is_recoverable_from_text() {
    let spec = SyntheticSpec {
        n: 400,
        classes: 8,
        signal: Signal::TextOnly,
        seed: 32,
    };
    let (dataset, _vocab) = generate_synthetic(&spec, 32, 400).unwrap();
    let labels: Vec<usize> = dataset.samples.iter().map(|s| (s.label - 1) as usize).collect();
    let text_features = bag_of_words(&dataset, 128);
    let text_auc = linear_probe_auc(&text_features, &labels, 8, 300, 150, 3);
    assert!(text_auc > 0.9, "text probe AUC {text_auc}");

    let market: Vec<Vec<f64>> = dataset.samples.iter().map(|s| s.market.clone()).collect();
    let market_auc = linear_probe_auc(&market, &labels, 8, 300, 150, 4);
    assert!(
        (0.4..=0.6).contains(&market_auc),
        "market probe AUC {market_auc} should hover near chance"
    );
}

fn ablation_spec(dir: &std::path::Path) -> ExperimentSpec {
    let mut fusion = FusionConfig::new(FusionGroup::G3, BaseModel::Cnn);
    fusion.filters = 16;
    fusion.units = 16;
    fusion.attn_dim = 16;
    fusion.embed_dim = 12;
    fusion.encoder_ff = 16;
    fusion.encoder_blocks = 1;
    fusion.head_hidden = 24;
    fusion.max_len = 16;
    ExperimentSpec {
        data: DataSource::Synthetic(SyntheticSpec {
            n: 400,
            classes: 8,
            signal: Signal::TextOnly,
            seed: 41,
        }),
        fusion,
        train: TrainConfig {
            epochs: 10,
            batch_size: 32,
            learning_rate: 3e-3,
            ..TrainConfig::default()
        },
        split: SplitSpec::default(),
        eval: EvalSpec {
            resamples: 150,
            slices: vec![],
            ..EvalSpec::default()
        },
        max_vocab: 500,
        out_dir: dir.to_path_buf(),
        seed: 5,
    }
}

#[test]
fn ablation_separates_informative_from_noise_channels() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ablation_spec(dir.path());
    let reports = run_ablation(
        &spec,
        &[vec![Channel::Text], vec![Channel::Market]],
    )
    .unwrap();
    let text_auc = reports["text"].weighted_auc.unwrap();
    let market_auc = reports["market"].weighted_auc.unwrap();
    assert!(text_auc > 0.9, "text-only AUC {text_auc}");
    assert!(
        (0.43..=0.57).contains(&market_auc),
        "market-only AUC {market_auc} outside 0.5±0.07"
    );
    assert!(dir.path().join("ablation.csv").is_file());
}

#[test]
fn five_single_channel_runs_emit_keyed_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ablation_spec(dir.path());
    // Smaller and shorter; this test only checks the protocol shape.
    spec.train.epochs = 1;
    if let DataSource::Synthetic(s) = &mut spec.data {
        s.n = 80;
    }
    let subsets: Vec<Vec<Channel>> = Channel::ALL.iter().map(|&c| vec![c]).collect();
    let reports = run_ablation(&spec, &subsets).unwrap();
    assert_eq!(reports.len(), 5);
    for channel in ["bond", "ratios", "market", "covariate", "text"] {
        assert!(reports.contains_key(channel), "missing {channel}");
        assert!(reports[channel].support > 0);
    }
}

#[test]
fn random_split_on_synthetic_dataset_is_exhaustive() {
    let spec = SyntheticSpec {
        n: 123,
        classes: 8,
        signal: Signal::Joint,
        seed: 3,
    };
    let (dataset, _) = generate_synthetic(&spec, 16, 300).unwrap();
    let splits = split_random(dataset.len(), 0).unwrap();
    assert_eq!(
        splits.train.len() + splits.validation.len() + splits.test.len(),
        dataset.len()
    );
}
