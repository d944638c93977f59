//! Runs every acceptance criterion and prints one PASS/FAIL line for each.
//! Exits non-zero if any criterion fails.

#![allow(clippy::needless_range_loop)]

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use shuffle_rl::advantage::group_advantages;
use shuffle_rl::batch_shuffle::{shuffle_batch, sub_batches_are_distinct};
use shuffle_rl::pair_sampling::{max_min_pairs, select_pairs};
use shuffle_rl::trainer::batch_loss_and_gradient;
use shuffle_rl::{
    AbsStrategy, GenConfig, Mode, Policy, PtsStrategy, Purpose, Query, RngStream, RolloutGroup,
    RunConfig, TrainBatch, Trajectory, TrajectoryPair,
};
use shuffle_rl_cli::compare::{compare, Comparison};
use shuffle_rl_cli::config::Overrides;
use shuffle_rl_cli::runner::RunSummary;
use statrs::distribution::{ContinuousCDF, StudentsT};

const BIN: &str = env!("CARGO_BIN_EXE_shuffle-rl");
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn within(v: Verdict, started: Instant, limit_secs: f64) -> Verdict {
    let secs = started.elapsed().as_secs_f64();
    let pass = v.pass && secs < limit_secs;
    verdict(
        pass,
        format!("{}; {secs:.2}s (limit {limit_secs}s)", v.detail),
    )
}

fn trajectory(query_id: u64, idx: u32, adv: f64) -> Trajectory {
    Trajectory {
        query_id,
        rollout_index: idx,
        tokens: vec![2, 0],
        old_logprobs: vec![-0.5, -0.5],
        reward: 0.0,
        advantage: adv,
    }
}

fn group_of(adv: &[f64]) -> RolloutGroup {
    RolloutGroup {
        query: Query {
            id: 1,
            difficulty: 1,
            seed: 0,
            vocab_size: 2,
            start_value: 0,
            step_values: vec![0],
        },
        trajectories: adv
            .iter()
            .enumerate()
            .map(|(i, &a)| trajectory(1, i as u32, a))
            .collect(),
    }
}

// ---- 1 -------------------------------------------------------------------

fn direct_advantages(r: &[f64], eps: f64) -> Vec<f64> {
    let n = r.len() as f64;
    let mut mean = 0.0;
    for x in r {
        mean += x;
    }
    mean /= n;
    let mut ss = 0.0;
    for x in r {
        ss += (x - mean) * (x - mean);
    }
    let std = (ss / n).sqrt();
    if std <= eps {
        return vec![0.0; r.len()];
    }
    r.iter().map(|x| (x - mean) / std).collect()
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = RngStream::new(1001, Purpose::Test, 0, 0).rng();
    let levels = [0.0, 0.1, 0.9, 1.0];
    let mut worst = 0.0f64;
    let mut degenerate = 0;
    for case in 0..1000 {
        let n = rng.random_range(2..=32);
        let r: Vec<f64> = match case % 4 {
            0 => vec![levels[rng.random_range(0..4)]; n],
            1 => (0..n).map(|_| rng.random_range(-3.0..3.0)).collect(),
            _ => (0..n).map(|_| levels[rng.random_range(0..4)]).collect(),
        };
        let got = group_advantages(&r, 1e-8).unwrap();
        let want = direct_advantages(&r, 1e-8);
        if want.iter().all(|&a| a == 0.0) {
            degenerate += 1;
            if !got.iter().all(|a| a.to_bits() == 0) {
                return verdict(
                    false,
                    format!("case {case}: degenerate group not exactly zero"),
                );
            }
        }
        for (a, b) in got.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    within(
        verdict(
            worst < 1e-12,
            format!("max |delta| {worst:.2e} over 1000 groups ({degenerate} degenerate)"),
        ),
        start,
        1.0,
    )
}

// ---- 2 -------------------------------------------------------------------

fn oracle_rank(adv: &[f64]) -> Vec<usize> {
    let mut ranked: Vec<usize> = Vec::new();
    for i in 0..adv.len() {
        let pos = ranked.iter().take_while(|&&j| adv[j] >= adv[i]).count();
        ranked.insert(pos, i);
    }
    ranked
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let mut rng = RngStream::new(1002, Purpose::Test, 0, 0).rng();
    let mut tie_cases = 0;
    for case in 0..10_000 {
        let n = 2 * rng.random_range(1..=4usize);
        let tie_heavy = case % 2 == 0;
        let adv: Vec<f64> = (0..n)
            .map(|_| {
                if tie_heavy {
                    [-1.0, 0.0, 1.0][rng.random_range(0..3)]
                } else {
                    rng.random_range(-3.0..3.0)
                }
            })
            .collect();
        let ranked = oracle_rank(&adv);
        // ties must keep index order
        for w in ranked.windows(2) {
            if adv[w[0]] == adv[w[1]] {
                tie_cases += 1;
                if w[0] > w[1] {
                    return verdict(false, format!("oracle tie order broken in case {case}"));
                }
            }
        }
        let pairs = max_min_pairs(&group_of(&adv)).unwrap();
        for alpha in [0.5, 1.0] {
            let m = (alpha * (n / 2) as f64).floor() as usize;
            if m == 0 {
                continue;
            }
            let got = select_pairs(&pairs, alpha, PtsStrategy::MaxMinTopk, &mut rng).unwrap();
            let got: Vec<(u32, u32)> = got
                .iter()
                .map(|p| (p.hi.rollout_index, p.lo.rollout_index))
                .collect();
            let want: Vec<(u32, u32)> = (0..m)
                .map(|i| (ranked[i] as u32, ranked[n - 1 - i] as u32))
                .collect();
            if got != want {
                return verdict(
                    false,
                    format!("case {case} alpha {alpha}: {got:?} != {want:?}"),
                );
            }
        }
    }
    within(
        verdict(
            true,
            format!("10000 vectors match, {tie_cases} tied neighbours checked"),
        ),
        start,
        5.0,
    )
}

// ---- 3 -------------------------------------------------------------------

fn weighted_pair(q: u64, w: f64) -> TrajectoryPair {
    TrajectoryPair::new(trajectory(q, 0, w / 2.0), trajectory(q, 1, -w / 2.0), 0).unwrap()
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let w = [0.4, 0.3, 0.2, 0.1];
    let batch = TrainBatch::raw(
        w.iter()
            .enumerate()
            .map(|(i, &x)| weighted_pair(i as u64, x))
            .collect(),
    );
    // exhaustive ordered draws of two distinct pairs
    let mut exact = [0.0; 4];
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                let p = w[i] * w[j] / (1.0 - w[i]);
                exact[i] += p;
                exact[j] += p;
            }
        }
    }
    let shuffles = 200_000u64;
    let mut hits = [0u64; 4];
    let mut sub_batches = 0u64;
    for k in 0..shuffles {
        let out = shuffle_batch(
            &batch,
            2,
            2,
            AbsStrategy::Weighted,
            &RngStream::new(1003, Purpose::Shuffle, k, 0),
        )
        .unwrap();
        for sub in out.pairs.chunks(2) {
            sub_batches += 1;
            for p in sub {
                hits[p.hi.query_id as usize] += 1;
            }
        }
    }
    let freq: Vec<f64> = hits
        .iter()
        .map(|&h| h as f64 / sub_batches as f64)
        .collect();
    let worst = freq
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    within(
        verdict(
            worst <= 0.005,
            format!("freq {freq:.4?} vs exact {exact:.4?}, max |delta| {worst:.4}"),
        ),
        start,
        30.0,
    )
}

// ---- 4 -------------------------------------------------------------------

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let mut rng = RngStream::new(1004, Purpose::Test, 0, 0).rng();
    for case in 0..1000u64 {
        let n = rng.random_range(1..=64usize);
        let pairs: Vec<TrajectoryPair> = (0..n)
            .map(|i| {
                let w = if rng.random_bool(0.2) {
                    0.0
                } else {
                    rng.random_range(0.0..4.0)
                };
                TrajectoryPair::new(
                    trajectory(i as u64 / 4, 2 * i as u32, w / 2.0),
                    trajectory(i as u64 / 4, 2 * i as u32 + 1, -w / 2.0),
                    (i % 4) as u32,
                )
                .unwrap()
            })
            .collect();
        let batch = TrainBatch::raw(pairs);
        let divisors: Vec<usize> = (1..=n).filter(|d| n % d == 0).collect();
        let s = divisors[rng.random_range(0..divisors.len())];
        let t = n / s;
        let strategy = [
            AbsStrategy::Weighted,
            AbsStrategy::Uniform,
            AbsStrategy::Reorder,
        ][case as usize % 3];
        let out = shuffle_batch(
            &batch,
            s,
            t,
            strategy,
            &RngStream::new(1004, Purpose::Shuffle, case, 0),
        )
        .unwrap();
        if out.len() != batch.len() || !sub_batches_are_distinct(&out, t) {
            return verdict(
                false,
                format!("case {case}: n={n} S={s} T={t} {strategy:?}"),
            );
        }
    }
    within(
        verdict(
            true,
            "1000 configurations keep |B'| = |B| with distinct sub-batches",
        ),
        start,
        5.0,
    )
}

// ---- 5 -------------------------------------------------------------------

fn criterion_5() -> Verdict {
    let start = Instant::now();
    let eps = 0.2;
    let h = 1e-6;
    let mut rng = RngStream::new(1005, Purpose::Test, 0, 0).rng();
    let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
    while checked < 100 {
        let v = rng.random_range(2..=4u32);
        let depth = rng.random_range(1..=2usize);
        let size = (depth + 1) * v as usize * (v as usize + 1);
        let logits: Vec<f64> = (0..size).map(|_| rng.random_range(-1.5..1.5)).collect();
        let old: Vec<f64> = logits
            .iter()
            .map(|l| l + rng.random_range(-0.4..0.4))
            .collect();
        let mut policy = Policy::from_logits(v, depth, logits).unwrap();
        let snapshot = Policy::from_logits(v, depth, old).unwrap();
        let mut queries = HashMap::new();
        let mut trajs = Vec::new();
        for qid in 0..3u64 {
            let d = rng.random_range(1..=depth);
            let q = Query {
                id: qid,
                difficulty: d,
                seed: 0,
                vocab_size: v,
                start_value: rng.random_range(0..v),
                step_values: (0..d).map(|_| rng.random_range(0..v)).collect(),
            };
            for r in 0..2 {
                let mut t = snapshot
                    .sample_trajectory(&q, &GenConfig::training(), r, &mut rng)
                    .unwrap();
                t.advantage = rng.random_range(-2.0..2.0);
                trajs.push(t);
            }
            queries.insert(qid, q);
        }
        let near_kink = trajs.iter().any(|t| {
            let lp = policy
                .log_prob(&queries[&t.query_id], &t.tokens, &GenConfig::training())
                .unwrap();
            lp.iter().zip(&t.old_logprobs).any(|(n, o)| {
                let r = (n - o).exp();
                (r - (1.0 - eps)).abs() < 1e-4 || (r - (1.0 + eps)).abs() < 1e-4
            })
        });
        if near_kink {
            skipped += 1;
            continue;
        }
        let refs: Vec<&Trajectory> = trajs.iter().collect();
        let analytic = batch_loss_and_gradient(&policy, &refs, &queries, eps)
            .unwrap()
            .gradient;
        let mut diff = 0.0;
        let mut norm = 0.0;
        for k in 0..analytic.len() {
            let base = policy.logits()[k];
            policy.logits_mut()[k] = base + h;
            let up = batch_loss_and_gradient(&policy, &refs, &queries, eps)
                .unwrap()
                .loss;
            policy.logits_mut()[k] = base - h;
            let down = batch_loss_and_gradient(&policy, &refs, &queries, eps)
                .unwrap()
                .loss;
            policy.logits_mut()[k] = base;
            let fd = (up - down) / (2.0 * h);
            diff += (fd - analytic[k]).powi(2);
            norm += analytic[k].powi(2);
        }
        let rel = if norm == 0.0 {
            diff.sqrt()
        } else {
            (diff / norm).sqrt()
        };
        worst = worst.max(rel);
        checked += 1;
    }
    within(
        verdict(worst <= 1e-6, format!("worst relative error {worst:.2e} over 100 policies ({skipped} near a kink skipped)")),
        start,
        30.0,
    )
}

// ---- 6-10 ----------------------------------------------------------------

struct Experiment {
    comparison: Comparison,
    summaries: Vec<RunSummary>,
    max_run_secs: f64,
}

fn run_experiment(dir: &Path) -> Experiment {
    let modes = [
        Mode::Grpo,
        Mode::PtsAbs,
        Mode::PtsOnly,
        Mode::Reorder,
        Mode::RandomShuffle,
        Mode::OnlyMin,
    ];
    let comparison = compare(
        &RunConfig::default(),
        &Overrides::default(),
        &modes,
        &SEEDS,
        dir,
        0.9,
    )
    .expect("comparison runs");
    let mut summaries = Vec::new();
    let mut max_run_secs = 0.0f64;
    for entry in walk(dir) {
        if entry.file_name().is_some_and(|n| n == "summary.json") {
            summaries.push(serde_json::from_str(&fs::read_to_string(&entry).unwrap()).unwrap());
        }
        if entry.file_name().is_some_and(|n| n == "timing.txt") {
            let text = fs::read_to_string(&entry).unwrap();
            let secs: f64 = text.split_whitespace().nth(1).unwrap().parse().unwrap();
            max_run_secs = max_run_secs.max(secs);
        }
    }
    Experiment {
        comparison,
        summaries,
        max_run_secs,
    }
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn criterion_6(x: &Experiment) -> Verdict {
    let clip = x
        .summaries
        .iter()
        .filter_map(|s| s.diagnostics.as_ref())
        .map(|d| d.max_first_minibatch_clip_fraction)
        .fold(0.0, f64::max);
    let gap = x
        .summaries
        .iter()
        .filter_map(|s| s.diagnostics.as_ref())
        .map(|d| d.max_first_minibatch_abs_log_ratio)
        .fold(0.0, f64::max);
    verdict(
        clip == 0.0 && gap == 0.0 && x.summaries.len() == 30,
        format!(
            "{} runs: max first-minibatch clip fraction {clip}, max |new - old| log-prob {gap}",
            x.summaries.len()
        ),
    )
}

fn steps(x: &Experiment, mode: &str) -> Option<f64> {
    x.comparison.mode(mode).unwrap().median_steps_to_threshold
}

fn criterion_7(x: &Experiment) -> Verdict {
    let (g, p) = (steps(x, "grpo"), steps(x, "pts+abs"));
    let pass = matches!((g, p), (Some(g), Some(p)) if p <= 0.75 * g) && x.max_run_secs <= 300.0;
    verdict(
        pass,
        format!(
            "median steps to 90%: pts+abs {p:?} vs grpo {g:?} (need <= 0.75x); per-seed grpo {:?}, pts+abs {:?}; slowest run {:.1}s",
            x.comparison.mode("grpo").unwrap().steps_to_threshold,
            x.comparison.mode("pts+abs").unwrap().steps_to_threshold,
            x.max_run_secs
        ),
    )
}

fn criterion_8(x: &Experiment) -> Verdict {
    let g = x
        .comparison
        .mode("grpo")
        .unwrap()
        .median_strong_adv_frac_first200;
    let p = x
        .comparison
        .mode("pts+abs")
        .unwrap()
        .median_strong_adv_frac_first200;
    verdict(
        p > g,
        format!("fraction |A| >= 0.5 over first 200 steps: pts+abs {p:.4} vs grpo {g:.4}"),
    )
}

fn criterion_9(x: &Experiment) -> Verdict {
    let g = x.comparison.mode("grpo").unwrap();
    let p = x.comparison.mode("pts+abs").unwrap();
    let (gn, pn) = (
        g.median_nonzero_rollout_ratio_final_quarter,
        p.median_nonzero_rollout_ratio_final_quarter,
    );
    let (gt, pt) = (
        g.median_token_utilization_final_quarter,
        p.median_token_utilization_final_quarter,
    );
    verdict(
        pn > gn && pt > gt,
        format!("final quarter: nonzero ratio pts+abs {pn:.4} vs grpo {gn:.4}; token utilization {pt:.4} vs {gt:.4}"),
    )
}

/// Two-sided Welch t-test p-value.
fn welch_p(a: &[f64], b: &[f64]) -> f64 {
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let var =
        |x: &[f64], m: f64| x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (var(a, ma) / a.len() as f64, var(b, mb) / b.len() as f64);
    if va + vb == 0.0 {
        return if ma == mb { 1.0 } else { 0.0 };
    }
    let t = (ma - mb) / (va + vb).sqrt();
    let df =
        (va + vb).powi(2) / (va.powi(2) / (a.len() - 1) as f64 + vb.powi(2) / (b.len() - 1) as f64);
    2.0 * (1.0 - StudentsT::new(0.0, 1.0, df).unwrap().cdf(t.abs()))
}

fn criterion_10(x: &Experiment) -> Verdict {
    let c = &x.comparison;
    let only_min = c.mode("only_min").unwrap();
    let baseline = only_min.median_init_eval_pass1;
    let a = only_min.median_final_eval_pass1 <= baseline;

    let unreached = (c.total_steps + 1) as f64;
    let as_steps = |m: &str| -> Vec<f64> {
        c.mode(m)
            .unwrap()
            .steps_to_threshold
            .iter()
            .map(|s| s.map_or(unreached, |v| v as f64))
            .collect()
    };
    let median = |v: Vec<f64>| {
        shuffle_rl_cli::compare::median_steps(
            &v.iter().map(|&x| Some(x as u64)).collect::<Vec<_>>(),
        )
        .unwrap()
    };
    let (uniform, weighted) = (
        median(as_steps("random_shuffle")),
        median(as_steps("pts+abs")),
    );
    let b = uniform >= weighted;

    let p = welch_p(&as_steps("reorder"), &as_steps("pts"));
    let cc = p >= 0.05;
    verdict(
        a && b && cc,
        format!(
            "[{}] only_min final {:.4} vs untrained {:.4}; [{}] uniform median steps {uniform} vs weighted {weighted}; [{}] reorder vs pts Welch p = {p:.3}",
            if a { "ok" } else { "FAIL" },
            only_min.median_final_eval_pass1,
            baseline,
            if b { "ok" } else { "FAIL" },
            if cc { "ok" } else { "FAIL" },
        ),
    )
}

// ---- 11 ------------------------------------------------------------------

fn cli(args: &[&str]) -> bool {
    Command::new(BIN)
        .args(args)
        .env_remove("SHUFFLE_RL_OUT_DIR")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn collect_outputs(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    walk(dir)
        .into_iter()
        .filter(|p| {
            let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("");
            matches!(ext, "csv" | "json" | "svg" | "bin")
        })
        .map(|p| {
            (
                p.strip_prefix(dir).unwrap().to_path_buf(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn criterion_11(root: &Path) -> Verdict {
    fs::create_dir_all(root).unwrap();
    let cfg = root.join("config.json");
    fs::write(&cfg, r#"{"total_steps": 25, "eval_queries": 200}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    let mut trees = Vec::new();
    let d = root.join("run");
    for workers in ["1", "4", "2"] {
        // same paths every time, so outputs that embed paths compare too
        let _ = fs::remove_dir_all(&d);
        let s = |p: &str| d.join(p).display().to_string();
        let ok = cli(&[
            "--workers",
            workers,
            "train",
            "--config",
            cfg,
            "--seed",
            "3",
            "--out-dir",
            &s("train"),
            "--checkpoint",
            &s("train/policy.bin"),
            "--dump-batches",
            &s("train/batches"),
        ]) && cli(&[
            "--workers",
            workers,
            "eval",
            "--config",
            cfg,
            "--checkpoint",
            &s("train/policy.bin"),
            "--out-dir",
            &s("eval"),
        ]) && cli(&[
            "--workers",
            workers,
            "compare",
            "--config",
            cfg,
            "--modes",
            "grpo,pts+abs,reorder",
            "--seeds",
            "0,1",
            "--threshold",
            "0.3",
            "--out-dir",
            &s("compare"),
        ]) && cli(&[
            "--workers",
            workers,
            "plot",
            &s("compare/grpo/seed_0/metrics.csv"),
            &s("compare/pts_abs/seed_0/metrics.csv"),
            "--column",
            "eval_pass1",
            "--out",
            &s("plot.svg"),
        ]);
        if !ok {
            return verdict(false, format!("command failed with --workers {workers}"));
        }
        trees.push(collect_outputs(&d));
    }
    let files = trees[0].len();
    let differing: Vec<String> = trees[1..]
        .iter()
        .flat_map(|t| {
            t.iter()
                .zip(&trees[0])
                .filter(|(a, b)| a != b)
                .map(|(a, _)| a.0.display().to_string())
                .collect::<Vec<_>>()
        })
        .collect();
    let same = trees.iter().all(|t| t.len() == files) && differing.is_empty();
    verdict(
        same && files > 0,
        if same {
            format!("{files} CSV/JSON/SVG/binary outputs identical across --workers 1, 4, 2")
        } else {
            format!("outputs differ: {differing:?}")
        },
    )
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut results: Vec<(usize, &str, Verdict)> = vec![
        (1, "group advantage oracle", criterion_1()),
        (2, "pair selection oracle", criterion_2()),
        (3, "weighted shuffle sampling law", criterion_3()),
        (4, "shuffle size and duplication invariants", criterion_4()),
        (5, "gradient finite-difference oracle", criterion_5()),
    ];
    let started = Instant::now();
    let experiment = run_experiment(&tmp.path().join("experiment"));
    let experiment_secs = started.elapsed().as_secs_f64();
    results.push((6, "on-policy first mini-batch", criterion_6(&experiment)));
    results.push((7, "efficiency direction", criterion_7(&experiment)));
    results.push((8, "advantage collapse direction", criterion_8(&experiment)));
    results.push((9, "rollout silencing direction", criterion_9(&experiment)));
    results.push((10, "ablation directions", criterion_10(&experiment)));
    results.push((
        11,
        "determinism across worker counts",
        criterion_11(&tmp.path().join("determinism")),
    ));

    println!();
    println!(
        "acceptance ({} training runs in {experiment_secs:.1}s)",
        experiment.summaries.len()
    );
    let mut failed = 0;
    for (n, name, v) in &results {
        println!(
            "criterion {n:>2} {}: {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
