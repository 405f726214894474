//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

mod common;

use std::time::{Duration, Instant};

use common::{finite_difference_grad, flatten, relative_error};
use finedesign::ablation::{
    render_report, run_ablation_on, AblationConfig, AblationReport, AblationRow, ReportFormat,
    ReportMetadata, RunOptions, RunRecord, RunStatus, REPORT_VERSION, TOOLKIT_VERSION,
};
use finedesign::design::{
    apply_design, design_name, enumerate_designs, DesignConfig, UNCERTAIN_INDEX,
};
use finedesign::manifest::{Manifest, Polarity, Taxonomy};
use finedesign::metrics::{confusion, Predicted};
use finedesign::synthgen::{generate_test, generate_train, SynthConfig};
use finedesign::trainer::{
    adam_step, cosine_lr, train, AdamConfig, AdamState, MlpParams, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    check(
        elapsed < limit,
        format!("{what} took {elapsed:.2?}, limit {limit:?}"),
    )
}

fn default_data() -> (Manifest, Manifest) {
    let cfg = SynthConfig::default();
    (generate_train(&cfg).unwrap(), generate_test(&cfg).unwrap())
}

fn category_counts() -> Outcome {
    let start = Instant::now();
    let (train, test) = default_data();
    let elapsed = start.elapsed();
    let expected = [
        ("clear_positive", 3384),
        ("clear_negative", 3465),
        ("irregular_wearing", 587),
        ("low_quality", 2319),
        ("mask_like_occlusion", 375),
    ];
    let counts = train.summarize();
    for (name, n) in expected {
        check(
            counts.get(name) == Some(n),
            format!("{name}: {:?} != {n}", counts.get(name)),
        )?;
    }
    check(
        test.samples.len() == 1000,
        format!("test size {}", test.samples.len()),
    )?;
    let train_ids: std::collections::HashSet<&str> =
        train.samples.iter().map(|s| s.id.as_str()).collect();
    check(
        test.samples
            .iter()
            .all(|s| !train_ids.contains(s.id.as_str())),
        "test ids overlap train ids",
    )?;
    let train_points: std::collections::HashSet<Vec<u64>> = train
        .samples
        .iter()
        .map(|s| s.features.iter().map(|x| x.to_bits()).collect())
        .collect();
    check(
        test.samples.iter().all(|s| {
            !train_points.contains(&s.features.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
        }),
        "test features overlap train features",
    )?;
    within(elapsed, Duration::from_secs(5), "generation")?;
    Ok(format!(
        "counts match, 1000 disjoint test samples, {elapsed:.2?}"
    ))
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let instances = 24;
    let mut worst = 0.0f64;
    for i in 0..instances {
        let depth = 1 + i % 3;
        let mut arch = vec![rng.random_range(1..=5)];
        for _ in 0..depth {
            arch.push(rng.random_range(2..=8));
        }
        arch.push(rng.random_range(2..=4));
        let mut params = MlpParams::he_init(&arch, &mut rng);
        for l in &mut params.layers {
            for b in &mut l.bias {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        let classes = *arch.last().unwrap();
        let batch: Vec<(Vec<f64>, usize)> = (0..rng.random_range(1..=12))
            .map(|_| {
                (
                    (0..arch[0]).map(|_| rng.random_range(-2.0..2.0)).collect(),
                    rng.random_range(0..classes),
                )
            })
            .collect();
        let mut grads = MlpParams::zeros(&arch);
        params.loss_and_grad(batch.iter().map(|(x, y)| (x.as_slice(), *y)), &mut grads);
        let fd = finite_difference_grad(&params, &batch, 1e-6);
        for (a, n) in flatten(&grads).iter().zip(&fd) {
            worst = worst.max(relative_error(*a, *n, 1e-4));
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-5,
        format!("max relative error {worst:.3e} > 1e-5"),
    )?;
    within(elapsed, Duration::from_secs(10), "gradient check")?;
    Ok(format!(
        "{instances} instances, max relative error {worst:.2e}, {elapsed:.2?}"
    ))
}

fn optimizer_and_schedule() -> Outcome {
    let mut params = MlpParams::zeros(&[1, 1]);
    params.layers[0].weights[0] = 1.0;
    let mut grads = MlpParams::zeros(&[1, 1]);
    grads.layers[0].weights[0] = 2.0;
    let mut state = AdamState::new(&params);
    adam_step(
        &mut params,
        &grads,
        &mut state,
        0.001,
        &AdamConfig::default(),
    )
    .unwrap();
    let hand = 1.0 - 0.001 * (2.0 / (2.0 + 1e-8));
    let got = params.layers[0].weights[0];
    check(
        (got - hand).abs() <= 1e-9,
        format!("adam step {got} vs {hand}"),
    )?;
    check(params.layers[0].bias[0] == 0.0, "zero-gradient bias moved")?;

    let (t_total, lr0) = (1000, 1e-3);
    for (t, want) in [(0, lr0), (t_total / 2, lr0 / 2.0), (t_total, 0.0)] {
        let got = cosine_lr(t, t_total, lr0);
        check(
            (got - want).abs() <= 1e-12,
            format!("cosine_lr({t}) = {got}, want {want}"),
        )?;
    }
    Ok(format!("adam step-1 {got:.9}, cosine endpoints exact"))
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let preds = [
        Predicted::Positive,
        Predicted::Negative,
        Predicted::Uncertain,
    ];
    for set in 0..100 {
        let truth: Vec<Polarity> = (0..1000)
            .map(|_| {
                if rng.random_bool(0.5) {
                    Polarity::Positive
                } else {
                    Polarity::Negative
                }
            })
            .collect();
        let predicted: Vec<Predicted> = (0..1000).map(|_| preds[rng.random_range(0..3)]).collect();
        let m = confusion(&truth, &predicted).unwrap();

        let (mut tp, mut fa, mut pos, mut neg, mut pred_pos) =
            (0usize, 0usize, 0usize, 0usize, 0usize);
        let mut cells = [[0usize; 3]; 2];
        for (t, p) in truth.iter().zip(&predicted) {
            let r = if *t == Polarity::Positive { 0 } else { 1 };
            let c = preds.iter().position(|q| q == p).unwrap();
            cells[r][c] += 1;
            match t {
                Polarity::Positive => pos += 1,
                Polarity::Negative => neg += 1,
            }
            if *p == Predicted::Positive {
                pred_pos += 1;
                match t {
                    Polarity::Positive => tp += 1,
                    Polarity::Negative => fa += 1,
                }
            }
        }
        check(m.counts == cells, format!("set {set}: confusion differs"))?;
        check(
            m.far() == fa as f64 / neg as f64,
            format!("set {set}: far differs"),
        )?;
        check(
            m.positive_recall() == tp as f64 / pos as f64,
            format!("set {set}: recall differs"),
        )?;
        check(
            m.positive_precision() == Some(tp as f64 / pred_pos as f64),
            format!("set {set}: precision differs"),
        )?;
    }
    Ok("100 sets of 1000 match the naive tally exactly".into())
}

fn partition_properties() -> Outcome {
    let (train, _) = default_data();
    let taxonomy = &train.taxonomy;
    let designs = enumerate_designs(taxonomy);
    check(designs.len() == 8, format!("{} designs", designs.len()))?;
    let mut uncertain = Vec::new();
    for d in &designs {
        let name = design_name(d, taxonomy);
        let ds = apply_design(&train, d).map_err(|e| format!("{name}: {e}"))?;
        check(
            ds.records.len() == train.samples.len(),
            format!(
                "{name}: {} records for {} samples",
                ds.records.len(),
                train.samples.len()
            ),
        )?;
        for (s, r) in train.samples.iter().zip(&ds.records) {
            let expected = if d.extracts(&s.category) {
                UNCERTAIN_INDEX
            } else {
                match s.fallback_label {
                    Polarity::Positive => 0,
                    Polarity::Negative => 1,
                }
            };
            check(
                r.class_index == expected && r.features == s.features,
                format!("{name}: sample {} mislabeled", s.id),
            )?;
        }
        let counts = ds.class_counts();
        check(
            counts.iter().sum::<usize>() == train.samples.len(),
            format!("{name}: counts {counts:?} do not conserve"),
        )?;
        let k = if d.is_original() { 2 } else { 3 };
        check(
            ds.num_classes() == k,
            format!("{name}: {} classes", ds.num_classes()),
        )?;
        uncertain.push(counts.get(UNCERTAIN_INDEX).copied().unwrap_or(0));
    }
    for (a, da) in designs.iter().enumerate() {
        for (b, db) in designs.iter().enumerate() {
            if da.extract.iter().all(|c| db.extract.contains(c)) {
                check(
                    uncertain[a] <= uncertain[b],
                    format!(
                        "uncertain not monotone: {:?} vs {:?}",
                        da.extract, db.extract
                    ),
                )?;
            }
        }
    }
    let original = apply_design(&train, &DesignConfig::original())
        .unwrap()
        .class_counts();
    check(
        original == vec![5131, 4999],
        format!("Original counts {original:?}"),
    )?;
    let all: Vec<String> = taxonomy.ambiguous().map(|c| c.name.clone()).collect();
    let full = apply_design(&train, &DesignConfig::resolve(taxonomy, &all).unwrap())
        .unwrap()
        .class_counts();
    check(
        full == vec![3384, 3465, 3281],
        format!("full extraction counts {full:?}"),
    )?;
    Ok("8 designs: conservation, disjoint labels, monotone uncertainty, 5131/4999 and 3384/3465/3281".into())
}

fn trend_reproduction() -> Outcome {
    let (train_m, test_m) = default_data();
    let config = AblationConfig {
        train_manifest: "train.jsonl".into(),
        test_manifest: "test.jsonl".into(),
        train: TrainConfig::default(),
        seeds: (0..10).collect(),
        designs: None,
    };
    let start = Instant::now();
    let report = run_ablation_on(&config, &train_m, &test_m, RunOptions::default())
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    print!("{}", render_report(&report, ReportFormat::Markdown));

    let far = |name: &str| -> Result<f64, String> {
        report
            .row(name)
            .and_then(|r| r.mean_far)
            .ok_or_else(|| format!("no mean FAR for {name}"))
    };
    let original = far("Original")?;
    let full = far("Extract IW+LQ+MLO")?;
    let min = report
        .rows
        .iter()
        .filter_map(|r| r.mean_far)
        .fold(f64::INFINITY, f64::min);

    let mut failures = Vec::new();
    if full.partial_cmp(&original) != Some(std::cmp::Ordering::Less) {
        failures.push(format!(
            "(a) full {full:.4} not below Original {original:.4}"
        ));
    }
    if full > min {
        failures.push(format!("(b) full {full:.4} above minimum {min:.4}"));
    }
    for row in report.rows.iter().filter(|r| r.extract.len() == 1) {
        let m = row.mean_far.unwrap_or(f64::NAN);
        if m.partial_cmp(&original)
            .is_none_or(|o| o == std::cmp::Ordering::Greater)
        {
            failures.push(format!(
                "(c) {} {m:.4} above Original {original:.4}",
                row.label()
            ));
        }
    }
    if elapsed > Duration::from_secs(600) {
        failures.push(format!("ablation took {elapsed:.2?}"));
    }
    if failures.is_empty() {
        Ok(format!(
            "Original {original:.4}, full {full:.4}, {elapsed:.2?}"
        ))
    } else {
        Err(failures.join("; "))
    }
}

fn report_shape() -> Outcome {
    let taxonomy = Taxonomy::mask();
    let fars = [0.089, 0.041, 0.038, 0.058, 0.014, 0.036, 0.033, 0.008];
    let rows: Vec<AblationRow> = enumerate_designs(&taxonomy)
        .into_iter()
        .zip(fars)
        .map(|(d, far)| AblationRow {
            design_name: design_name(&d, &taxonomy),
            extract: d.extract,
            mean_far: Some(far),
            std_far: Some(0.0),
            mean_positive_recall: Some(1.0),
            mean_positive_precision: Some(1.0),
            failures: 0,
            runs: vec![RunRecord {
                seed: 0,
                run_seed: 0,
                status: RunStatus::Ok,
                far: Some(far),
                positive_recall: Some(1.0),
                positive_precision: Some(1.0),
                error: None,
            }],
        })
        .collect();
    let report = AblationReport {
        version: REPORT_VERSION,
        toolkit_version: TOOLKIT_VERSION.into(),
        metadata: ReportMetadata::default(),
        config: AblationConfig {
            train_manifest: "train.jsonl".into(),
            test_manifest: "test.jsonl".into(),
            train: TrainConfig::default(),
            seeds: vec![0],
            designs: None,
        },
        rows,
    };
    let md = render_report(&report, ReportFormat::Markdown);
    let table: Vec<(String, String)> = md
        .lines()
        .skip(2)
        .map(|l| {
            let cells: Vec<&str> = l.trim_matches('|').split('|').map(str::trim).collect();
            (cells[0].to_owned(), cells[1].to_owned())
        })
        .collect();
    let expected = [
        ("Original", "8.9%"),
        ("Extract IW only", "4.1%"),
        ("Extract LQ only", "3.8%"),
        ("Extract MLO only", "5.8%"),
        ("Extract IW+LQ", "1.4%"),
        ("Extract IW+MLO", "3.6%"),
        ("Extract LQ+MLO", "3.3%"),
        ("Extract IW+LQ+MLO", "0.8%"),
    ];
    let want: Vec<(String, String)> = expected
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    check(table == want, format!("rendered rows {table:?}"))?;
    Ok("8 rows in order, 8.9% ... 0.8% verbatim".into())
}

fn determinism() -> Outcome {
    let cfg = SynthConfig::default().with_seed(7);
    let a = generate_train(&cfg).unwrap().to_jsonl().unwrap();
    let b = generate_train(&cfg).unwrap().to_jsonl().unwrap();
    check(a == b, "train manifests differ")?;
    let ta = generate_test(&cfg).unwrap().to_jsonl().unwrap();
    let tb = generate_test(&cfg).unwrap().to_jsonl().unwrap();
    check(ta == tb, "test manifests differ")?;

    let (train_m, test_m) = default_data();
    let ds = apply_design(&train_m, &DesignConfig::original()).unwrap();
    let tc = TrainConfig {
        epochs: 5,
        seed: 3,
        ..TrainConfig::default()
    };
    let ma = train(&ds, &tc).unwrap().to_json();
    let mb = train(&ds, &tc).unwrap().to_json();
    check(ma == mb, "models differ")?;

    let config = AblationConfig {
        train_manifest: "train.jsonl".into(),
        test_manifest: "test.jsonl".into(),
        train: TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        },
        seeds: vec![0, 1, 2],
        designs: None,
    };
    let run = |workers| {
        run_ablation_on(
            &config,
            &train_m,
            &test_m,
            RunOptions {
                workers,
                log: false,
            },
        )
        .unwrap()
        .to_json()
    };
    let one = run(1);
    check(
        one == run(1),
        "ablation JSON differs between identical runs",
    )?;
    check(
        one == run(8),
        "ablation JSON differs between 1 and 8 workers",
    )?;
    Ok("manifests, models and ablation JSON byte-identical; 1 vs 8 workers".into())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("category counts and test split", category_counts),
        ("gradient oracle", gradient_oracle),
        ("optimizer and schedule exactness", optimizer_and_schedule),
        ("metric oracle", metric_oracle),
        ("partition properties", partition_properties),
        ("FAR trend over designs", trend_reproduction),
        ("report shape", report_shape),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run)
            .unwrap_or_else(|p| Err(format!("panicked: {:?}", p.downcast_ref::<String>())));
        match outcome {
            Ok(detail) => println!("acceptance {}: {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("acceptance {}: {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
