//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs as a plain binary (`harness = false`).

mod common;

use std::cell::OnceCell;
use std::fs;
use std::time::{Duration, Instant};

use alac::alignment::{mixup, sample_lambda, DistLabel};
use alac::density::rasterize;
use alac::harness::{
    benchmark_config, run_experiment, run_experiment_on, run_trial, ExperimentConfig,
    PreparedData, SummaryRow, RESULTS_FILE, SUMMARY_FILE,
};
use alac::metrics::game;
use alac::model::LatentMap;
use alac::partition::jenks_breaks;
use common::*;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn jenks_oracle() -> Outcome {
    let mut r = rng(101);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = r.random_range(1..=12);
        let k = r.random_range(1..=4);
        let values: Vec<i64> = (0..n).map(|_| r.random_range(0..30)).collect();
        let floats: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let p = jenks_breaks(&floats, k).unwrap();
        let groups: Vec<Vec<i64>> = p
            .members()
            .into_iter()
            .filter(|m| !m.is_empty())
            .map(|m| m.into_iter().map(|i| values[i]).collect())
            .collect();
        let k_eff = k.min(distinct(&values));
        if groups.len() != k_eff || scaled_objective(&groups) != brute_force_jenks(&values, k_eff) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches}/200 instances differ from enumeration"))
}

fn game_properties() -> Outcome {
    let mut r = rng(102);
    let mut worst_l0: f64 = 0.0;
    let mut violations = 0;
    for _ in 0..100 {
        let (w, h) = (r.random_range(1..24), r.random_range(1..24));
        let (a, b) = (random_map(&mut r, w, h), random_map(&mut r, w, h));
        let g: Vec<f64> = (0..4).map(|l| game(&a, &b, l).unwrap()).collect();
        worst_l0 = worst_l0.max((g[0] - (a.total() - b.total()).abs()).abs());
        violations += (0..3).filter(|&l| g[l + 1] < g[l]).count();
    }
    outcome(
        violations == 0 && worst_l0 <= 1e-9,
        format!("{violations} monotonicity violations, max |game0 - count diff| = {worst_l0:.1e} (tol 1e-9)"),
    )
}

fn mass_conservation() -> Outcome {
    let mut r = rng(103);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let (w, h) = (r.random_range(8..256), r.random_range(8..256));
        let n = r.random_range(0..400);
        let scene = random_scene(&mut r, &format!("m{i}"), w, h, n);
        let d = rasterize(&scene, r.random_range(1..=16), r.random_range(0.5..12.0)).unwrap();
        worst = worst.max((d.total() - n as f64).abs());
    }
    outcome(worst <= 1e-4, format!("max |integral - count| = {worst:.1e} (tol 1e-4)"))
}

fn gradient_checks() -> Outcome {
    let mut worst_model: f64 = 0.0;
    let mut worst_align: f64 = 0.0;
    let mut grl_ok = true;
    for seed in 0..20 {
        let inst = grad_instance(1000 + seed);
        worst_model = worst_model.max(model_fd_error(&inst));
        let check = alignment_fd_check(&inst, seed, 3.0, true);
        worst_align = worst_align.max(check.worst_rel_err);
        grl_ok &= check.grl_exact;
    }
    outcome(
        worst_model <= 1e-4 && worst_align <= 1e-4 && grl_ok,
        format!(
            "max rel err model {worst_model:.1e}, alignment {worst_align:.1e} (tol 1e-4); GRL negation exact: {grl_ok}"
        ),
    )
}

fn mixup_laws() -> Outcome {
    let mut r = rng(105);
    let z = |r: &mut rand_chacha::ChaCha8Rng| LatentMap {
        width_cells: 3,
        height_cells: 2,
        dim: 4,
        values: (0..24).map(|_| r.random_range(0.0..3.0)).collect(),
    };
    let (z1, z2) = (z(&mut r), z(&mut r));
    let mut lambda_bad = 0;
    let mut label_bad = 0;
    for _ in 0..100_000 {
        let l = sample_lambda(0.5, &mut r).unwrap();
        if !(0.5..=1.0).contains(&l) {
            lambda_bad += 1;
            continue;
        }
        let y1 = DistLabel::new(r.random_range(0.0..=1.0)).unwrap();
        let y2 = DistLabel::new(r.random_range(0.0..=1.0)).unwrap();
        let y = mixup(&z1, y1, &z2, y2, l).unwrap().y_mixed.value();
        if !(0.0..=1.0).contains(&y) {
            label_bad += 1;
        }
    }
    let end = mixup(&z1, DistLabel::LABELED, &z2, DistLabel::UNLABELED, 1.0).unwrap();
    let endpoint = end.z_mixed == z1 && end.y_mixed.value() == 0.0;
    outcome(
        lambda_bad == 0 && label_bad == 0 && endpoint,
        format!("lambda' outside [0.5,1]: {lambda_bad}/1e5, labels outside [0,1]: {label_bad}; lambda'=1 returns first sample: {endpoint}"),
    )
}

fn protocol_exactness() -> Outcome {
    let spec = alac::data::SynthSpec {
        n_scenes: 100,
        width: 64,
        height: 64,
        bands: vec![
            alac::data::CountBand::new(0.8, 0, 20),
            alac::data::CountBand::new(0.2, 50, 120),
        ],
        clustering: 0.6,
        seed: 106,
    };
    let mut problems = Vec::new();
    for budget in [20, 30, 40] {
        let cfg = ExperimentConfig {
            budget,
            batch: 10,
            trials: 2,
            epochs_per_cycle: 3,
            variants: vec!["pssw".parse().unwrap(), "pssw+grl+mx".parse().unwrap()],
            ..ExperimentConfig::with_synth(spec.clone())
        };
        let data = PreparedData::from_config(&cfg).unwrap();
        for &variant in &cfg.variants {
            let recs = run_trial(&cfg, &data, variant, 0, 7).unwrap();
            let sizes: Vec<usize> = recs.iter().map(|r| r.labeled).collect();
            let want: Vec<usize> = (1..=budget / 10).map(|t| 10 * t).collect();
            if sizes != want {
                problems.push(format!("M={budget} {variant}: sizes {sizes:?}"));
            }
        }
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_experiment(&cfg, a.path()).unwrap();
        run_experiment(&cfg, b.path()).unwrap();
        for file in [RESULTS_FILE, SUMMARY_FILE] {
            if fs::read(a.path().join(file)).unwrap() != fs::read(b.path().join(file)).unwrap() {
                problems.push(format!("M={budget}: {file} differs between identical runs"));
            }
        }
    }
    let detail = if problems.is_empty() {
        "sizes 10t with final size M for M in {20,30,40}; result files byte-identical".to_owned()
    } else {
        problems.join("; ")
    };
    outcome(problems.is_empty(), detail)
}

fn pooled_std(a: &SummaryRow, b: &SummaryRow) -> f64 {
    ((a.mae_std * a.mae_std + b.mae_std * b.mae_std) / 2.0).sqrt()
}

fn benchmark(seed: u64) -> Vec<SummaryRow> {
    let cfg = benchmark_config(seed);
    let data = PreparedData::from_config(&cfg).unwrap();
    assert_eq!((data.train.len(), data.test.len()), (300, 200));
    let out = run_experiment_on(&cfg, &data).unwrap();
    out.table.rows
}

fn main() {
    let mut all_pass = true;
    let mut report = |id: usize, name: &str, limit: Option<Duration>, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed < l);
        let pass = o.pass && in_time;
        all_pass &= pass;
        let limit_note = limit.map_or(String::new(), |l| format!(", limit {l:?}"));
        println!(
            "[{}] {id}. {name}: {} ({elapsed:.2?}{limit_note})",
            if pass { "PASS" } else { "FAIL" },
            o.detail
        );
    };

    report(1, "Jenks oracle equivalence", Some(Duration::from_secs(5)), &jenks_oracle);
    report(2, "GAME properties", Some(Duration::from_secs(5)), &game_properties);
    report(3, "Density mass conservation", None, &mass_conservation);
    report(4, "Gradient checks", None, &gradient_checks);
    report(5, "MixUp / lambda' laws", None, &mixup_laws);
    report(6, "Protocol exactness", None, &protocol_exactness);

    // criteria 7 and 8 share one benchmark run
    let rows: OnceCell<Vec<SummaryRow>> = OnceCell::new();
    let get = |name: &str| -> SummaryRow {
        rows.get()
            .expect("benchmark ran")
            .iter()
            .find(|r| r.strategy == name)
            .expect("variant ran")
            .clone()
    };
    report(7, "Trend reproduction", Some(Duration::from_secs(600)), &|| {
        let table = rows.get_or_init(|| benchmark(2024));
        let (rs, pssw, even, global) = (get("rs"), get("pssw"), get("even_partition"), get("global_diff"));
        let summary = table
            .iter()
            .map(|r| format!("{} {:.3}±{:.3}", r.strategy, r.mae_mean, r.mae_std))
            .collect::<Vec<_>>()
            .join(", ");
        outcome(
            pssw.mae_mean < rs.mae_mean
                && pssw.mae_mean <= even.mae_mean
                && pssw.mae_mean <= global.mae_mean,
            format!(
                "mean MAE over 10 trials: {summary}; need pssw < rs, pssw <= even_partition, pssw <= global_diff"
            ),
        )
    });
    report(8, "Alignment regression safety", None, &|| {
        if rows.get().is_none() {
            rows.set(benchmark(2024)).ok();
        }
        let (pssw, aligned) = (get("pssw"), get("pssw+grl+mx"));
        let slack = pooled_std(&aligned, &pssw);
        outcome(
            aligned.mae_mean <= pssw.mae_mean + slack,
            format!(
                "pssw+grl+mx {:.3} <= pssw {:.3} + pooled std {:.3} (strict improvement: {})",
                aligned.mae_mean,
                pssw.mae_mean,
                slack,
                aligned.mae_mean < pssw.mae_mean
            ),
        )
    });

    if !all_pass {
        std::process::exit(1);
    }
}
