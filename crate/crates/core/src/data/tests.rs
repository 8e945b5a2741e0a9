use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn make_sample(company: &str, year: u16, month: u8, label: u8) -> Sample {
    Sample {
        company_id: company.to_string(),
        cusip: format!("{company:0>6}A01"),
        time_index: MonthIndex::new(year, month),
        agency: Agency::MR,
        bond: vec![0.0; BOND_WIDTH],
        ratios: vec![0.0; RATIOS_WIDTH],
        market: vec![0.0; MARKET_WIDTH],
        covariate: vec![0.0; COVARIATE_WIDTH],
        tokens: vec![PAD_ID; 4],
        word_count: 0,
        label,
        rating_code: 9,
        lag_months: 3,
    }
}

// ── rating map ──────────────────────────────────────────────────────

#[test]
fn rating_map_worked_rows() {
    assert_eq!(map_rating(1).unwrap(), 1); // Aaa/AAA
    assert_eq!(map_rating(9).unwrap(), 5); // Baa2/BBB
    assert_eq!(map_rating(22).unwrap(), 8); // D
}

#[test]
fn rating_map_full_table() {
    let expected: [(std::ops::RangeInclusive<u8>, u8); 8] = [
        (1..=5, 1),
        (6..=6, 2),
        (7..=7, 3),
        (8..=8, 4),
        (9..=9, 5),
        (10..=12, 6),
        (13..=15, 7),
        (16..=22, 8),
    ];
    for (range, class) in expected {
        for code in range {
            assert_eq!(map_rating(code).unwrap(), class, "code {code}");
        }
    }
}

#[test]
fn rating_map_is_total_surjective_monotone() {
    let mut seen = [false; 8];
    let mut prev = 0;
    for code in 1..=22 {
        let merged = map_rating(code).unwrap();
        assert!((1..=8).contains(&merged));
        assert!(merged >= prev, "not monotone at code {code}");
        prev = merged;
        seen[merged as usize - 1] = true;
    }
    assert!(seen.iter().all(|&s| s), "not surjective onto 1..=8");
}

#[test]
fn rating_map_rejects_out_of_range() {
    assert!(map_rating(0).is_err());
    assert!(map_rating(23).is_err());
}

#[test]
fn merged_frequencies_reproduce_reference_distribution() {
    // Percent frequencies per merged class: 9,9,9,13,15,23,14,6.
    let percents = [9usize, 9, 9, 13, 15, 23, 14, 6];
    let mut codes = Vec::new();
    for (class_idx, &pct) in percents.iter().enumerate() {
        let class = class_idx as u8 + 1;
        let members = codes_for_merged_class(class);
        for i in 0..pct * 100 {
            codes.push(members[i % members.len()]);
        }
    }
    let freqs = merged_frequencies(&codes).unwrap();
    for (f, &pct) in freqs.iter().zip(percents.iter()) {
        assert!(
            (f * 100.0 - pct as f64).abs() < 0.5,
            "{f} vs {pct}% (rounding tolerance)"
        );
    }
}

// ── text preprocessing ──────────────────────────────────────────────

#[test]
fn preprocess_replaces_url_and_drops_stop_words() {
    assert_eq!(preprocess_text("Visit https://x.co NOW!"), "visit ⟨url⟩");
}

#[test]
fn preprocess_empty_is_empty() {
    assert_eq!(preprocess_text(""), "");
}

#[test]
fn preprocess_replaces_emails_and_phones() {
    let out = preprocess_text("Contact IR@Example.COM or call 555-123-4567 today");
    assert_eq!(out, "contact ⟨email⟩ call ⟨phone⟩ today");
}

#[test]
fn preprocess_keeps_plain_figures() {
    // Years and magnitudes must not be swallowed by the phone pattern.
    let out = preprocess_text("revenue grew 2015 2016 by 1,234 units");
    assert_eq!(out, "revenue grew 2015 2016 1 234 units");
}

#[test]
fn preprocess_elides_apostrophes_and_repairs_mojibake() {
    assert_eq!(preprocess_text("We donâ€™t expect growth"), "expect growth");
    assert_eq!(preprocess_text("The companyâ€™s outlook"), "companys outlook");
}

#[test]
fn preprocess_output_is_audit_clean() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let spec = SyntheticSpec {
        n: 50,
        classes: 4,
        signal: Signal::TextOnly,
        seed: 7,
    };
    let records = generate_raw_records(&spec).unwrap();
    let _ = rng.gen::<u8>();
    for record in &records {
        let clean = preprocess_text(&record.text);
        assert!(!clean.chars().any(|c| c.is_uppercase()), "uppercase in {clean:?}");
        assert!(
            !clean.chars().any(|c| c.is_ascii_punctuation()),
            "punctuation in {clean:?}"
        );
        assert!(!clean.contains("http"), "raw URL in {clean:?}");
        assert!(!clean.contains('@'), "raw email in {clean:?}");
    }
}

// ── vocabulary ──────────────────────────────────────────────────────

#[test]
fn vocabulary_orders_by_frequency() {
    let corpus = vec!["the cat sat".to_string(), "the dog".to_string()];
    let vocab = fit_vocabulary(&corpus, 100).unwrap();
    assert_eq!(vocab.id_of("the"), RESERVED_TOKENS.len() as u32);
}

#[test]
fn vocabulary_breaks_ties_lexicographically() {
    let corpus = vec!["pear apple mango".to_string()];
    let vocab = fit_vocabulary(&corpus, 100).unwrap();
    let base = RESERVED_TOKENS.len() as u32;
    assert_eq!(vocab.id_of("apple"), base);
    assert_eq!(vocab.id_of("mango"), base + 1);
    assert_eq!(vocab.id_of("pear"), base + 2);
}

#[test]
fn vocabulary_matches_count_sort_oracle_on_zipf_corpus() {
    // Zipf-ish corpus: word k appears roughly N/k times.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut docs = Vec::new();
    for _ in 0..200 {
        let mut words = Vec::new();
        for _ in 0..30 {
            let u: f64 = rng.gen_range(0.0f64..1.0);
            let k = ((1.0 / (u + 0.02)) as usize).min(60);
            words.push(format!("w{k:03}"));
        }
        docs.push(words.join(" "));
    }
    let vocab = fit_vocabulary(&docs, 1000).unwrap();

    // Independent count-and-sort oracle.
    let mut counts: std::collections::BTreeMap<String, u64> = Default::default();
    for d in &docs {
        for w in d.split_whitespace() {
            *counts.entry(w.to_string()).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    for (rank, (word, _)) in ranked.iter().enumerate() {
        assert_eq!(
            vocab.id_of(word),
            (RESERVED_TOKENS.len() + rank) as u32,
            "word {word} at rank {rank}"
        );
    }
}

#[test]
fn vocabulary_ids_are_a_dense_bijection() {
    let corpus = vec!["alpha beta gamma delta alpha beta".to_string()];
    let vocab = fit_vocabulary(&corpus, 100).unwrap();
    for (i, token) in vocab.tokens().iter().enumerate() {
        assert_eq!(vocab.id_of(token), i as u32);
    }
    assert_eq!(vocab.size(), RESERVED_TOKENS.len() + 4);
}

#[test]
fn vocabulary_overflow_maps_to_unknown() {
    let corpus = vec!["aa bb aa cc".to_string()];
    let vocab = fit_vocabulary(&corpus, RESERVED_TOKENS.len() + 1).unwrap();
    assert_eq!(vocab.id_of("aa"), RESERVED_TOKENS.len() as u32);
    assert_eq!(vocab.id_of("bb"), UNKNOWN_ID);
    assert_eq!(vocab.id_of("cc"), UNKNOWN_ID);
}

#[test]
fn vocabulary_rejects_tiny_max_size() {
    assert!(matches!(
        fit_vocabulary(&["a".to_string()], 3),
        Err(DataError::VocabTooSmall { .. })
    ));
}

// ── encoding ────────────────────────────────────────────────────────

#[test]
fn encode_empty_string_is_all_pads() {
    let vocab = fit_vocabulary(&["hello world".to_string()], 100).unwrap();
    assert_eq!(encode_text(&vocab, "", 4), vec![PAD_ID; 4]);
}

#[test]
fn encode_oov_prefix_then_pads() {
    let vocab = fit_vocabulary(&["hello world".to_string()], 100).unwrap();
    let ids = encode_text(&vocab, "zebra quagga", 5);
    assert_eq!(ids, vec![UNKNOWN_ID, UNKNOWN_ID, PAD_ID, PAD_ID, PAD_ID]);
}

#[test]
fn encode_truncates_to_exactly_max_len() {
    let words: Vec<String> = (0..50).map(|i| format!("tok{i}")).collect();
    let doc = words.join(" ");
    let vocab = fit_vocabulary(&[doc.clone()], 1000).unwrap();
    let ids = encode_text(&vocab, &doc, 32);
    assert_eq!(ids.len(), 32);
    for (i, &id) in ids.iter().enumerate() {
        assert_eq!(id, vocab.id_of(&format!("tok{i}")));
    }
    // Always exactly max_len, for any input length.
    for len in [0usize, 1, 31, 32, 33, 50] {
        let doc = words[..len].join(" ");
        assert_eq!(encode_text(&vocab, &doc, 32).len(), 32);
    }
}

#[test]
fn encode_marker_tokens_get_reserved_ids() {
    let vocab = fit_vocabulary(&["visit ⟨url⟩ mail ⟨email⟩".to_string()], 100).unwrap();
    let ids = encode_text(&vocab, "⟨url⟩ ⟨email⟩ ⟨phone⟩", 3);
    assert_eq!(ids, vec![URL_ID, EMAIL_ID, PHONE_ID]);
}

// ── splits ──────────────────────────────────────────────────────────

#[test]
fn random_split_sizes_match_floor_rule() {
    let splits = split_random(1000, 1).unwrap();
    assert_eq!(splits.test.len(), 200);
    assert_eq!(splits.validation.len(), 160);
    assert_eq!(splits.train.len(), 640);

    let splits = split_random(27_854, 1).unwrap();
    assert_eq!(splits.test.len(), 5_570);
    assert_eq!(splits.validation.len(), 4_456);
    assert_eq!(splits.train.len(), 17_828);
}

#[test]
fn random_split_is_seed_deterministic_disjoint_exhaustive() {
    for seed in 0..20 {
        let a = split_random(101, seed).unwrap();
        let b = split_random(101, seed).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a
            .train
            .iter()
            .chain(a.validation.iter())
            .chain(a.test.iter())
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
    }
}

#[test]
fn random_split_rejects_tiny_dataset() {
    assert!(matches!(
        split_random(4, 0),
        Err(DataError::DatasetTooSmall { size: 4, minimum: 5 })
    ));
}

#[test]
fn oot_split_takes_latest_fraction() {
    let samples: Vec<Sample> = (0..10)
        .map(|i| make_sample("c1", 2020, i as u8 + 1, 1))
        .collect();
    let ds = Dataset { samples };
    let split = split_oot(&ds, 0.2).unwrap();
    assert_eq!(split.test, vec![8, 9]);
    assert_eq!(split.train_val, (0..8).collect::<Vec<_>>());
}

#[test]
fn oot_split_sends_boundary_ties_to_test() {
    let mut samples: Vec<Sample> = (0..8).map(|i| make_sample("c1", 2020, i + 1, 1)).collect();
    // Three records share the boundary month.
    samples.push(make_sample("c1", 2020, 8, 1));
    samples.push(make_sample("c1", 2020, 8, 1));
    let ds = Dataset { samples };
    let split = split_oot(&ds, 0.2).unwrap();
    // floor(10·0.2) = 2 target, but the tie block of month 8 has 3 members.
    assert_eq!(split.test, vec![7, 8, 9]);
    let max_train = split
        .train_val
        .iter()
        .map(|&i| ds.samples[i].time_index)
        .max()
        .unwrap();
    let min_test = split
        .test
        .iter()
        .map(|&i| ds.samples[i].time_index)
        .min()
        .unwrap();
    assert!(max_train < min_test);
}

#[test]
fn oot_split_has_no_timestamp_overlap() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples: Vec<Sample> = (0..500)
        .map(|_| {
            make_sample(
                "c1",
                2015 + rng.gen_range(0..8),
                rng.gen_range(1..=12),
                1,
            )
        })
        .collect();
    let ds = Dataset { samples };
    let split = split_oot(&ds, 0.2).unwrap();
    let train_times: std::collections::BTreeSet<_> = split
        .train_val
        .iter()
        .map(|&i| ds.samples[i].time_index)
        .collect();
    let test_times: std::collections::BTreeSet<_> = split
        .test
        .iter()
        .map(|&i| ds.samples[i].time_index)
        .collect();
    assert!(train_times.intersection(&test_times).next().is_none());
}

#[test]
fn oot_split_rejects_constant_timestamps() {
    let samples: Vec<Sample> = (0..10).map(|_| make_sample("c1", 2020, 5, 1)).collect();
    let ds = Dataset { samples };
    assert!(matches!(
        split_oot(&ds, 0.2),
        Err(DataError::DegenerateTimeSplit(_))
    ));
}

#[test]
fn oou_split_two_companies_one_each_side() {
    let mut samples: Vec<Sample> = (0..6).map(|_| make_sample("aaa", 2020, 1, 1)).collect();
    samples.extend((0..6).map(|_| make_sample("bbb", 2020, 2, 1)));
    let ds = Dataset { samples };
    let split = split_oou(&ds, 0.5, 9).unwrap();
    let companies = |idx: &[usize]| -> std::collections::BTreeSet<&str> {
        idx.iter().map(|&i| ds.samples[i].company_id.as_str()).collect()
    };
    assert_eq!(companies(&split.test).len(), 1);
    assert_eq!(companies(&split.train_val).len(), 1);
}

#[test]
fn oou_split_is_seed_deterministic_and_company_disjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples: Vec<Sample> = (0..400)
        .map(|_| {
            let c = format!("c{:03}", rng.gen_range(0..50));
            make_sample(&c, 2020, rng.gen_range(1..=12), 1)
        })
        .collect();
    let ds = Dataset { samples };
    let a = split_oou(&ds, 0.25, 7).unwrap();
    let b = split_oou(&ds, 0.25, 7).unwrap();
    assert_eq!(a, b);
    let train: std::collections::BTreeSet<&str> = a
        .train_val
        .iter()
        .map(|&i| ds.samples[i].company_id.as_str())
        .collect();
    let test: std::collections::BTreeSet<&str> = a
        .test
        .iter()
        .map(|&i| ds.samples[i].company_id.as_str())
        .collect();
    assert!(train.intersection(&test).next().is_none());
    assert_eq!(a.train_val.len() + a.test.len(), 400);
}

#[test]
fn oou_split_rejects_single_company() {
    let samples: Vec<Sample> = (0..10).map(|_| make_sample("only", 2020, 1, 1)).collect();
    let ds = Dataset { samples };
    assert!(matches!(split_oou(&ds, 0.5, 0), Err(DataError::SingleCompany)));
}

// ── synthetic generation ────────────────────────────────────────────

#[test]
fn synthetic_n_equals_classes_gives_one_per_class() {
    let spec = SyntheticSpec {
        n: 8,
        classes: 8,
        signal: Signal::Joint,
        seed: 3,
    };
    let (ds, _) = generate_synthetic(&spec, 16, 500).unwrap();
    let mut labels: Vec<u8> = ds.samples.iter().map(|s| s.label).collect();
    labels.sort_unstable();
    assert_eq!(labels, (1..=8).collect::<Vec<_>>());
}

#[test]
fn synthetic_is_bit_identical_under_seed() {
    let spec = SyntheticSpec {
        n: 40,
        classes: 4,
        signal: Signal::Joint,
        seed: 11,
    };
    let (a, _) = generate_synthetic(&spec, 16, 500).unwrap();
    let (b, _) = generate_synthetic(&spec, 16, 500).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.samples.iter().zip(b.samples.iter()) {
        assert_eq!(x.tokens, y.tokens);
        assert_eq!(x.ratios, y.ratios);
        assert_eq!(x.label, y.label);
        assert_eq!(x.time_index, y.time_index);
    }
}

#[test]
fn synthetic_rejects_bad_specs() {
    assert!(generate_synthetic(
        &SyntheticSpec { n: 3, classes: 8, signal: Signal::Joint, seed: 0 },
        16,
        500
    )
    .is_err());
    assert!(generate_synthetic(
        &SyntheticSpec { n: 10, classes: 1, signal: Signal::Joint, seed: 0 },
        16,
        500
    )
    .is_err());
}

#[test]
fn synthetic_joint_signal_is_planted_as_specified() {
    let spec = SyntheticSpec {
        n: 200,
        classes: 8,
        signal: Signal::Joint,
        seed: 5,
    };
    let records = generate_raw_records(&spec).unwrap();
    for r in &records {
        let label = map_rating(r.rating_code).unwrap();
        let sign = ((label - 1) % 2) as f64 * 2.0 - 1.0;
        // The designated ratio feature carries the sign at ±2 with σ=0.5.
        assert!(
            r.ratios[JOINT_SIGN_FEATURE] * sign > 0.0,
            "sign feature inconsistent for label {label}"
        );
        let topic = (label - 1) / 2;
        assert!(
            r.text.to_lowercase().contains(&format!("sig{topic}w")),
            "topic words missing for label {label}"
        );
    }
}

// ── covariates ──────────────────────────────────────────────────────

#[test]
fn covariate_vector_is_one_hot_plus_scaled_class() {
    let v = covariate_vector(Agency::SPR, 9).unwrap();
    assert_eq!(v.len(), COVARIATE_WIDTH);
    assert_eq!(&v[..3], &[0.0, 1.0, 0.0]);
    assert!((v[3] - 4.0 / 7.0).abs() < 1e-12); // merged(9) = 5 → (5−1)/7
}

// ── channel files ───────────────────────────────────────────────────

#[test]
fn channel_files_round_trip() {
    let spec = SyntheticSpec {
        n: 30,
        classes: 4,
        signal: Signal::Joint,
        seed: 2,
    };
    let records = generate_raw_records(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = write_channel_files(&records, dir.path()).unwrap();
    let (loaded, report) = load_raw_records(&paths).unwrap();
    assert_eq!(report.joined, 30);
    assert_eq!(report.dropped_missing_channel, 0);
    assert_eq!(loaded.len(), records.len());
    // Join may reorder relative to input; compare as key-indexed maps.
    let by_key = |rs: &[RawRecord]| -> std::collections::BTreeMap<String, (Vec<f64>, u8)> {
        rs.iter()
            .map(|r| {
                (
                    format!("{}|{}", r.cusip, r.time_index),
                    (r.ratios.clone(), r.rating_code),
                )
            })
            .collect()
    };
    assert_eq!(by_key(&loaded), by_key(&records));
}

#[test]
fn load_drops_rows_missing_any_channel() {
    let spec = SyntheticSpec {
        n: 40,
        classes: 4,
        signal: Signal::Joint,
        seed: 13,
    };
    let mut records = generate_raw_records(&spec).unwrap();
    // Distinct keys only, so the drop count is exact.
    let mut seen = std::collections::BTreeSet::new();
    records.retain(|r| seen.insert((r.cusip.clone(), r.time_index)));
    let n = records.len();
    assert!(n >= 20);

    let dir = tempfile::tempdir().unwrap();
    write_channel_files(&records, dir.path()).unwrap();
    // Rewrite the bond file without its last 3 rows.
    let truncated: Vec<RawRecord> = records[..n - 3].to_vec();
    let sub = tempfile::tempdir().unwrap();
    let sub_paths = write_channel_files(&truncated, sub.path()).unwrap();
    let mut paths = ChannelPaths::in_dir(dir.path());
    paths.bond = sub_paths.bond;

    let (loaded, report) = load_raw_records(&paths).unwrap();
    // Set-intersection oracle: only keys present in both label and bond sides.
    assert_eq!(loaded.len(), n - 3);
    assert_eq!(report.dropped_missing_channel, 3);
    assert_eq!(report.labeled_rows, n);
}

#[test]
fn load_disjoint_cusips_yields_empty_dataset_with_drop_count() {
    let spec = SyntheticSpec {
        n: 10,
        classes: 4,
        signal: Signal::Joint,
        seed: 4,
    };
    let records = generate_raw_records(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_channel_files(&records, dir.path()).unwrap();

    let mut renamed = records.clone();
    for r in renamed.iter_mut() {
        r.cusip = format!("ZZZ{}", &r.cusip[3..]);
    }
    let other = tempfile::tempdir().unwrap();
    let other_paths = write_channel_files(&renamed, other.path()).unwrap();

    let mut paths = ChannelPaths::in_dir(dir.path());
    paths.labels = other_paths.labels;
    let (loaded, report) = load_raw_records(&paths).unwrap();
    assert!(loaded.is_empty());
    assert_eq!(report.dropped_missing_channel, 10);
}

#[test]
fn load_rejects_malformed_rows_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        n: 5,
        classes: 4,
        signal: Signal::Joint,
        seed: 6,
    };
    let records = generate_raw_records(&spec).unwrap();
    let paths = write_channel_files(&records, dir.path()).unwrap();
    // Corrupt one numeric cell.
    let text = std::fs::read_to_string(&paths.ratios).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let corrupted = lines[2].replacen(',', ",not_a_number_", 3);
    lines[2] = &corrupted;
    std::fs::write(&paths.ratios, lines.join("\n")).unwrap();

    match load_raw_records(&paths) {
        Err(DataError::MalformedRow { file, line, .. }) => {
            assert_eq!(file, "ratios.csv");
            assert_eq!(line, 3);
        }
        other => panic!("expected MalformedRow, got {other:?}"),
    }
}

#[test]
fn load_rejects_lag_below_minimum() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        n: 5,
        classes: 4,
        signal: Signal::Joint,
        seed: 8,
    };
    let mut records = generate_raw_records(&spec).unwrap();
    records[2].lag_months = 1;
    let paths = write_channel_files(&records, dir.path()).unwrap();
    match load_raw_records(&paths) {
        Err(DataError::MalformedRow { file, .. }) => assert_eq!(file, "labels.csv"),
        other => panic!("expected lag error, got {other:?}"),
    }
}

// ── scaler ──────────────────────────────────────────────────────────

#[test]
fn scaler_imputes_missing_with_train_median_then_standardizes() {
    let mut s1 = make_sample("c1", 2020, 1, 1);
    let mut s2 = make_sample("c1", 2020, 2, 1);
    let mut s3 = make_sample("c1", 2020, 3, 1);
    s1.bond[0] = 1.0;
    s2.bond[0] = 3.0;
    s3.bond[0] = f64::NAN;
    let scaler = Scaler::fit(&[&s1, &s2, &s3]);
    // Median of {1, 3} (NaN skipped) is 2; imputed column is {1, 3, 2},
    // mean 2, std sqrt(2/3).
    let mut t = s3.clone();
    scaler.apply(&mut t);
    assert!((t.bond[0] - 0.0).abs() < 1e-12);
    let mut t1 = s1.clone();
    scaler.apply(&mut t1);
    assert!((t1.bond[0] + 1.0 / (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
}

#[test]
fn scaler_leaves_constant_features_finite() {
    let s1 = make_sample("c1", 2020, 1, 1);
    let s2 = make_sample("c1", 2020, 2, 1);
    let scaler = Scaler::fit(&[&s1, &s2]);
    let mut t = s1.clone();
    scaler.apply(&mut t);
    assert!(t.bond.iter().all(|v| v.is_finite()));
}

// ── month index ─────────────────────────────────────────────────────

#[test]
fn month_index_parses_and_orders() {
    let a: MonthIndex = "2020-09".parse().unwrap();
    let b: MonthIndex = "2020-10".parse().unwrap();
    let c: MonthIndex = "2021-01".parse().unwrap();
    assert!(a < b && b < c);
    assert_eq!(a.to_string(), "2020-09");
    assert!("2020-13".parse::<MonthIndex>().is_err());
    assert!("202-09".parse::<MonthIndex>().is_err());
    assert_eq!(MonthIndex::new(2020, 11).plus_months(3).to_string(), "2021-02");
}
