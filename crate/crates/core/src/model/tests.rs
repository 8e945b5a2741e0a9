use super::*;
use crate::data::{generate_synthetic, Dataset, Signal, SyntheticSpec, Vocabulary};
use crate::tensor::{cross_entropy_loss, grad_check_sampled};
use rand::SeedableRng;

fn small_cfg(group: FusionGroup, base: BaseModel) -> FusionConfig {
    let mut cfg = FusionConfig::new(group, base);
    cfg.filters = 8;
    cfg.units = 8;
    cfg.attn_dim = 8;
    cfg.embed_dim = 8;
    cfg.encoder_ff = 12;
    cfg.encoder_blocks = 1;
    cfg.head_hidden = 12;
    cfg.max_len = 12;
    cfg
}

fn small_data() -> (Dataset, Vocabulary) {
    let spec = SyntheticSpec {
        n: 8,
        classes: 8,
        signal: Signal::Joint,
        seed: 21,
    };
    generate_synthetic(&spec, 12, 300).unwrap()
}

#[test]
fn network_a_stages_follow_base_table() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = small_cfg(FusionGroup::G1, BaseModel::Cnn);
    let net = build_network_a(BaseModel::Cnn, 45, &cfg, &mut rng).unwrap();
    assert_eq!(net.stages(), vec!["conv", "maxpool", "conv", "globavg"]);
    let net = build_network_a(BaseModel::Lstm, 45, &cfg, &mut rng).unwrap();
    assert_eq!(net.stages(), vec!["conv", "maxpool", "lstm", "globavg"]);
    let net = build_network_a(BaseModel::Gru, 45, &cfg, &mut rng).unwrap();
    assert_eq!(net.stages(), vec!["conv", "maxpool", "gru", "globavg"]);
    let net = build_network_a(BaseModel::Att, 45, &cfg, &mut rng).unwrap();
    assert_eq!(net.stages(), vec!["conv", "dropout", "attention", "globavg"]);
}

#[test]
fn network_a_output_width_is_independent_of_input_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = small_cfg(FusionGroup::G1, BaseModel::Cnn);
    for base in BaseModel::ALL {
        let mut widths = Vec::new();
        for len in [12usize, 30, 98] {
            let net = build_network_a(base, len, &cfg, &mut rng).unwrap();
            let values: Vec<f64> = (0..len).map(|i| (i as f64 * 0.37).sin()).collect();
            let (_, pooled) = net
                .forward(&values, false, &mut ChaCha8Rng::seed_from_u64(0))
                .unwrap();
            widths.push(pooled.numel());
        }
        assert!(widths.windows(2).all(|w| w[0] == w[1]), "{base:?}: {widths:?}");
    }
}

#[test]
fn network_a_adapts_pool_for_short_covariate_channel() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = small_cfg(FusionGroup::G1, BaseModel::Cnn);
    // Width-4 covariate: conv → 3 steps, pool must back off to 1 so the
    // second conv still has room.
    let net = build_network_a(BaseModel::Cnn, 4, &cfg, &mut rng).unwrap();
    let (_, pooled) = net
        .forward(&[0.1, 0.5, -0.2, 0.9], false, &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap();
    assert_eq!(pooled.numel(), cfg.filters);
}

#[test]
fn network_a_rejects_input_shorter_than_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = small_cfg(FusionGroup::G1, BaseModel::Cnn);
    assert!(matches!(
        build_network_a(BaseModel::Cnn, 1, &cfg, &mut rng),
        Err(ModelError::Build(_))
    ));
}

#[test]
fn network_b_stages_follow_base_table() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = small_cfg(FusionGroup::G1, BaseModel::Cnn);
    let net = build_network_b(BaseModel::Cnn, 100, &cfg, &mut rng).unwrap();
    assert_eq!(
        net.stages(),
        vec!["embedding", "conv", "dropout", "conv", "maxpool", "conv", "globavg"]
    );
    let net = build_network_b(BaseModel::Lstm, 100, &cfg, &mut rng).unwrap();
    assert_eq!(
        net.stages(),
        vec!["embedding", "conv", "dropout", "conv", "maxpool", "lstm", "globavg"]
    );
    let net = build_network_b(BaseModel::Att, 100, &cfg, &mut rng).unwrap();
    assert_eq!(net.stages(), vec!["embedding", "encoder", "pool"]);
}

#[test]
fn all_pad_text_keeps_logits_finite() {
    let (data, vocab) = small_data();
    for base in BaseModel::ALL {
        let cfg = small_cfg(FusionGroup::G3, base);
        let model = build_model(&cfg, vocab.size(), 7).unwrap();
        let mut sample = data.samples[0].clone();
        sample.tokens = vec![crate::data::PAD_ID; cfg.max_len];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let logits = model.forward(&[&sample], false, &mut rng).unwrap();
        assert!(
            logits.value().iter().all(|v| v.is_finite()),
            "{base:?} produced non-finite logits on all-pad text"
        );
    }
}

#[test]
fn all_sixteen_configurations_build_forward_backward() {
    let (data, vocab) = small_data();
    let batch: Vec<&crate::data::Sample> = data.samples.iter().collect();
    let labels: Vec<usize> = data.samples.iter().map(|s| (s.label - 1) as usize).collect();
    for group in FusionGroup::ALL {
        for base in BaseModel::ALL {
            let cfg = small_cfg(group, base);
            let model = build_model(&cfg, vocab.size(), 11).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let logits = model.forward(&batch, true, &mut rng).unwrap();
            assert_eq!(logits.shape(), vec![8, cfg.num_classes]);
            assert!(logits.value().iter().all(|v| v.is_finite()));
            let loss = cross_entropy_loss(&logits, &labels).unwrap();
            loss.backward().unwrap();
            for (name, p) in model.named_parameters() {
                let grad = p.grad().unwrap_or_default();
                assert!(
                    grad.iter().all(|g| g.is_finite()),
                    "group {group:?} base {base:?}: non-finite gradient in {name}"
                );
            }
        }
    }
}

#[test]
fn fusion_level_and_technique_invariants() {
    let (_, vocab) = small_data();
    for group in FusionGroup::ALL {
        for base in BaseModel::ALL {
            let cfg = small_cfg(group, base);
            let model = build_model(&cfg, vocab.size(), 3).unwrap();
            let expect_a = if group.early_fusion() { 1 } else { 4 };
            assert_eq!(model.network_a_count(), expect_a, "{group:?} {base:?}");
            let expect_cross = if group.cross_attention() { 1 } else { 0 };
            assert_eq!(model.cross_attention_count(), expect_cross, "{group:?} {base:?}");
        }
    }
}

#[test]
fn group1_network_a_parameters_are_four_times_group3() {
    let (_, vocab) = small_data();
    let count_a = |group| {
        let cfg = small_cfg(group, BaseModel::Cnn);
        let model = build_model(&cfg, vocab.size(), 5).unwrap();
        model
            .named_parameters()
            .iter()
            .filter(|(name, _)| name.starts_with("numeric."))
            .map(|(_, t)| t.numel())
            .sum::<usize>()
    };
    assert_eq!(count_a(FusionGroup::G1), 4 * count_a(FusionGroup::G3));
}

#[test]
fn parameter_count_matches_hand_counts() {
    // Dense 2→3 alone: 2·3 + 3 = 9; embedding 10×4 = 40.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let dense = DenseLayer::new(2, 3, None, &mut rng);
    assert_eq!(dense.weights.numel() + dense.bias.numel(), 9);
    let table = Tensor::param(vec![0.0; 40], &[10, 4]).unwrap();
    assert_eq!(table.numel(), 40);
}

#[test]
fn inference_forward_is_deterministic_and_batch_independent() {
    let (data, vocab) = small_data();
    let cfg = small_cfg(FusionGroup::G3, BaseModel::Cnn);
    let model = build_model(&cfg, vocab.size(), 13).unwrap();
    let batch: Vec<&crate::data::Sample> = data.samples.iter().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = model.forward(&batch, false, &mut rng).unwrap().value();
    let mut rng = ChaCha8Rng::seed_from_u64(999);
    let b = model.forward(&batch, false, &mut rng).unwrap().value();
    assert_eq!(a, b, "inference must not depend on the rng");

    // A singleton batch reproduces the corresponding row of the full batch.
    for (i, sample) in data.samples.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let single = model.forward(&[sample], false, &mut rng).unwrap().value();
        let row = &a[i * cfg.num_classes..(i + 1) * cfg.num_classes];
        for (x, y) in single.iter().zip(row.iter()) {
            assert!((x - y).abs() < 1e-6, "row {i}: {x} vs {y}");
        }
    }
}

#[test]
fn group3_cnn_gradcheck_on_sampled_parameters() {
    let (data, vocab) = small_data();
    let cfg = small_cfg(FusionGroup::G3, BaseModel::Cnn);
    let model = build_model(&cfg, vocab.size(), 17).unwrap();
    let batch: Vec<&crate::data::Sample> = data.samples.iter().take(3).collect();
    let labels: Vec<usize> = batch.iter().map(|s| (s.label - 1) as usize).collect();
    let params = model.parameters();
    let check = grad_check_sampled(
        &params,
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let logits = model.forward(&batch, false, &mut rng).unwrap();
            cross_entropy_loss(&logits, &labels).unwrap()
        },
        1e-5,
        20,
        &mut ChaCha8Rng::seed_from_u64(77),
    )
    .unwrap();
    assert!(check.max_relative_error < 1e-4, "{}", check.max_relative_error);
}

#[test]
fn concat_fusion_isolates_text_through_head_columns() {
    let (data, vocab) = small_data();
    for group in [FusionGroup::G1, FusionGroup::G3] {
        let cfg = small_cfg(group, BaseModel::Cnn);
        let model = build_model(&cfg, vocab.size(), 19).unwrap();
        let slice = model.text_feature_slice().unwrap();

        // Zero the head rows that read the text slice: logits must become
        // independent of the token sequence.
        model.head1.weights.update_data(|w| {
            let out = cfg.head_hidden;
            for row in slice.clone() {
                for c in 0..out {
                    w[row * out + c] = 0.0;
                }
            }
        });
        let sample_a = data.samples[0].clone();
        let mut sample_b = sample_a.clone();
        sample_b.tokens = data.samples[1].tokens.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let la = model.forward(&[&sample_a], false, &mut rng).unwrap().value();
        let lb = model.forward(&[&sample_b], false, &mut rng).unwrap().value();
        assert_eq!(la, lb, "group {group:?}: text leaked around the head slice");
    }
}

#[test]
fn cross_attention_fusion_reacts_to_text_changes() {
    let (data, vocab) = small_data();
    for group in [FusionGroup::G2, FusionGroup::G4] {
        let cfg = small_cfg(group, BaseModel::Cnn);
        let model = build_model(&cfg, vocab.size(), 23).unwrap();
        let sample_a = data.samples[0].clone();
        let mut sample_b = sample_a.clone();
        sample_b.tokens = data.samples[1].tokens.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let la = model.forward(&[&sample_a], false, &mut rng).unwrap().value();
        let lb = model.forward(&[&sample_b], false, &mut rng).unwrap().value();
        assert_ne!(la, lb, "group {group:?}: cross-attention ignored the text");
    }
}

#[test]
fn channel_width_mismatch_names_the_channel() {
    let (data, vocab) = small_data();
    let cfg = small_cfg(FusionGroup::G1, BaseModel::Cnn);
    let model = build_model(&cfg, vocab.size(), 29).unwrap();
    let mut sample = data.samples[0].clone();
    sample.ratios.truncate(10);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    match model.forward(&[&sample], false, &mut rng) {
        Err(ModelError::ChannelWidth { channel, expected, got }) => {
            assert_eq!(channel, "ratios");
            assert_eq!((expected, got), (45, 10));
        }
        other => panic!("expected ChannelWidth error, got {other:?}"),
    }
}

#[test]
fn ablation_subsets_shape_the_architecture() {
    let (_, vocab) = small_data();
    let cfg = small_cfg(FusionGroup::G3, BaseModel::Cnn);

    let text_only = build_model_subset(&cfg, vocab.size(), &[Channel::Text], 31).unwrap();
    assert_eq!(text_only.network_a_count(), 0);
    assert!(text_only.network_b_stages().is_some());

    let ratios_only = build_model_subset(&cfg, vocab.size(), &[Channel::Ratios], 31).unwrap();
    assert_eq!(ratios_only.network_a_count(), 1);
    assert!(ratios_only.network_b_stages().is_none());

    let all = build_model_subset(&cfg, vocab.size(), &Channel::ALL, 31).unwrap();
    let full = build_model(&cfg, vocab.size(), 31).unwrap();
    let paths = |m: &MultimodalModel| -> Vec<(String, Vec<usize>)> {
        m.named_parameters()
            .into_iter()
            .map(|(n, t)| (n, t.shape()))
            .collect()
    };
    assert_eq!(paths(&all), paths(&full));

    assert!(matches!(
        build_model_subset(&cfg, vocab.size(), &[], 31),
        Err(ModelError::EmptyChannels)
    ));
}

#[test]
fn cross_attention_groups_degrade_to_concat_without_text() {
    let (data, vocab) = small_data();
    let cfg = small_cfg(FusionGroup::G4, BaseModel::Cnn);
    let model = build_model_subset(&cfg, vocab.size(), &Channel::NUMERIC, 37).unwrap();
    assert_eq!(model.cross_attention_count(), 0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch: Vec<&crate::data::Sample> = data.samples.iter().take(2).collect();
    let logits = model.forward(&batch, false, &mut rng).unwrap();
    assert_eq!(logits.shape(), vec![2, cfg.num_classes]);
}

#[test]
fn paper_literal_form_errors_on_unequal_sequence_lengths() {
    let (data, vocab) = small_data();
    let mut cfg = small_cfg(FusionGroup::G4, BaseModel::Cnn);
    cfg.cross_attention_form = CrossAttentionForm::PaperLiteral;
    let model = build_model(&cfg, vocab.size(), 41).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    // Numeric sequence (early-fused, length 155 → conv/pool chain) and the
    // text sequence (max_len 12 chain) have different lengths here.
    match model.forward(&[&data.samples[0]], false, &mut rng) {
        Err(ModelError::Layer(LayerError::UnequalLengths { .. })) => {}
        other => panic!("expected UnequalLengths, got {other:?}"),
    }
}
