//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use matalign_core::dataset::{Condition, Split};
use matalign_core::descriptor::{color_histogram, l2_normalize, quantize_color};
use matalign_core::encoder::{batch_forward_backward_raw, batch_loss, init_params, Batch, EncoderConfig, EncoderParams};
use matalign_core::image::{Image, Mask};
use matalign_core::loss::{info_nce, info_nce_grads};
use matalign_core::maskcrop::largest_inscribed_rectangle;
use matalign_core::retrieval::{ablate, evaluate, BaselineMode, MaterialIndex, Method};
use matalign_core::subspace::{thin, KdTree};
use matalign_core::synthdata::{generate_dataset, SynthConfig};
use matalign_core::tensor::Tensor;
use matalign_core::trainer::{train, TrainConfig};
use matalign_core::Error;

type Outcome = std::result::Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 gradient exactness", gradient_exactness),
        ("2 loss calibration", loss_calibration),
        ("3 learning beats raw cosine", learning_beats_baselines),
        ("4 ablation trend", ablation_trend),
        ("5 inscribed rectangle", inscribed_rectangle),
        ("6 retrieval exactness", retrieval_exactness),
        ("7 kd-tree exactness", kdtree_exactness),
        ("8 determinism", determinism),
        ("9 histogram contract", histogram_contract),
        ("10 end-to-end smoke", end_to_end_smoke),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn unit_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    l2_normalize(&v).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn rel_err(a: &[f64], f: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(f).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(f)).max(1e-12)
}

fn gradient_exactness() -> Outcome {
    let start = Instant::now();
    let cfg = EncoderConfig {
        d_in: 6,
        d_model: 16,
        d_emb: 8,
        n_heads: 4,
        n_layers: 2,
        n_views: 4,
        mlp_hidden: 32,
    };
    let h = 1e-3;
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let p: EncoderParams<f64> = init_params(cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let batch = Batch {
            views: (0..4).map(|_| random_vec(&mut rng, cfg.n_views * cfg.d_in)).collect(),
            descriptors: (0..4).map(|_| random_vec(&mut rng, cfg.d_in)).collect(),
        };
        let (_, grads) = batch_forward_backward_raw(&p, &batch).unwrap();
        let analytic = grads.named_tensors();
        for (ti, (name, t)) in p.named_tensors().into_iter().enumerate() {
            let fd: Vec<f64> = (0..t.len())
                .map(|k| {
                    let eval = |delta: f64| {
                        let mut q = p.clone();
                        q.tensors_mut()[ti].data_mut()[k] += delta;
                        batch_loss(&q, &batch).unwrap()
                    };
                    (eval(h) - eval(-h)) / (2.0 * h)
                })
                .collect();
            let rel = rel_err(analytic[ti].1.data(), &fd);
            ensure!(rel < 1e-4, "seed {seed} tensor {name}: relative error {rel:.3e}");
            worst = worst.max(rel);
        }

        // loss gradients against the embeddings and the logit scale directly
        let m = Tensor::from_vec(&[4, 8], (0..4).flat_map(|_| unit_vec(&mut rng, 8)).collect()).unwrap();
        let q = Tensor::from_vec(&[4, 8], (0..4).flat_map(|_| unit_vec(&mut rng, 8)).collect()).unwrap();
        let t = p.logit_scale();
        let g = info_nce_grads(&m, &q, t).unwrap();
        let fd_of = |x: &Tensor<f64>, first: bool| -> Vec<f64> {
            (0..x.len())
                .map(|k| {
                    let eval = |delta: f64| {
                        let mut y = x.clone();
                        y.data_mut()[k] += delta;
                        if first {
                            info_nce(&y, &q, t).unwrap()
                        } else {
                            info_nce(&m, &y, t).unwrap()
                        }
                    };
                    (eval(h) - eval(-h)) / (2.0 * h)
                })
                .collect()
        };
        let fd_t = (info_nce(&m, &q, t + h).unwrap() - info_nce(&m, &q, t - h).unwrap()) / (2.0 * h);
        for (what, rel) in [
            ("d_mat", rel_err(g.d_mat.data(), &fd_of(&m, true))),
            ("d_part", rel_err(g.d_part.data(), &fd_of(&q, false))),
            ("d_logit_scale", rel_err(&[g.d_logit_scale], &[fd_t])),
        ] {
            ensure!(rel < 1e-4, "seed {seed} loss {what}: relative error {rel:.3e}");
            worst = worst.max(rel);
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!("worst per-tensor relative error {worst:.2e} over 5 seeds"))
}

fn loss_calibration() -> Outcome {
    let mut acc = 0.0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut batch = || Tensor::from_vec(&[64, 32], (0..64).flat_map(|_| unit_vec(&mut rng, 32)).collect()).unwrap();
        let (m, p) = (batch(), batch());
        acc += info_nce(&m, &p, 0.0f64).unwrap();
    }
    let mean = acc / 10.0;
    let target = 64f64.ln();
    let rel = (mean - target).abs() / target;
    ensure!(rel <= 0.05, "mean loss {mean:.4} vs ln 64 = {target:.4}");
    Ok(format!("mean loss {mean:.4} vs ln 64 = {target:.4} ({:.2}%)", rel * 100.0))
}

fn full_run(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 32,
        learning_rate: 1e-4,
        steps: 2000,
        seed,
        ..Default::default()
    }
}

fn learning_beats_baselines() -> Outcome {
    let start = Instant::now();
    let (mut ours, mut best_base) = (0.0, 0.0);
    let mut per_seed = Vec::new();
    for seed in 0..3u64 {
        let (ds, _) = generate_dataset(&SynthConfig {
            n_env: 3,
            n_shapes: 2,
            seed,
            ..Default::default()
        })
        .unwrap();
        let enc = EncoderConfig {
            d_in: ds.d_in,
            n_views: ds.n_views(),
            ..Default::default()
        };
        let trained = train(&full_run(seed), &ds, init_params(enc, seed).unwrap()).unwrap();
        let m = evaluate(Method::MatClip(&trained.params), &ds, Split::Test, Condition::Main).unwrap();
        let v1 = evaluate(Method::Baseline(BaselineMode::V1Max), &ds, Split::Test, Condition::Main).unwrap();
        let v2 = evaluate(Method::Baseline(BaselineMode::V2Mean), &ds, Split::Test, Condition::Main).unwrap();
        ours += m.top1 / 3.0;
        best_base += v1.top1.max(v2.top1) / 3.0;
        per_seed.push(format!("{:.1}/{:.1}/{:.1}", m.top1, v1.top1, v2.top1));
    }
    let elapsed = start.elapsed();
    let detail = format!(
        "trained Top-1 {ours:.2}% vs best baseline {best_base:.2}% (per seed matclip/v1/v2: {})",
        per_seed.join(", ")
    );
    ensure!(ours >= 80.0, "{detail}: below 80%");
    ensure!(ours >= 2.0 * best_base, "{detail}: less than twice the baseline");
    ensure!(elapsed < Duration::from_secs(300), "{detail}: took {elapsed:?}");
    Ok(detail)
}

fn ablation_trend() -> Outcome {
    let (mut full, mut single) = (0.0, 0.0);
    let mut per_seed = Vec::new();
    for seed in 0..3u64 {
        let (ds, _) = generate_dataset(&SynthConfig {
            n_env: 3,
            n_shapes: 2,
            cell_latent_rank: 8,
            seed,
            ..Default::default()
        })
        .unwrap();
        let enc = EncoderConfig {
            d_in: ds.d_in,
            ..Default::default()
        };
        let rows = ablate(&full_run(seed), enc, seed, &ds, &[(2, 3), (1, 1)]).unwrap();
        full += rows[0].top1 / 3.0;
        single += rows[1].top1 / 3.0;
        per_seed.push(format!("{:.1}/{:.1}", rows[0].top1, rows[1].top1));
    }
    let detail = format!(
        "full grid Top-1 {full:.2}% vs single cell {single:.2}% (per seed: {})",
        per_seed.join(", ")
    );
    ensure!(full >= single, "{detail}");
    Ok(detail)
}

fn brute_force_area(mask: &Mask) -> usize {
    let (w, h) = (mask.width(), mask.height());
    // prefix[y][x] = ones in the rectangle [0, x) × [0, y)
    let mut prefix = vec![vec![0usize; w + 1]; h + 1];
    for y in 0..h {
        for x in 0..w {
            prefix[y + 1][x + 1] = prefix[y][x + 1] + prefix[y + 1][x] - prefix[y][x] + mask.get(x, y) as usize;
        }
    }
    let mut best = 0;
    for y0 in 0..h {
        for y1 in y0 + 1..=h {
            for x0 in 0..w {
                for x1 in x0 + 1..=w {
                    let area = (x1 - x0) * (y1 - y0);
                    let ones = prefix[y1][x1] + prefix[y0][x0] - prefix[y0][x1] - prefix[y1][x0];
                    if ones == area && area > best {
                        best = area;
                    }
                }
            }
        }
    }
    best
}

fn inscribed_rectangle() -> Outcome {
    let start = Instant::now();
    let full = Mask::from_rows(&["11111"; 4]).unwrap();
    let r = largest_inscribed_rectangle(&full).unwrap();
    ensure!((r.x, r.y, r.w, r.h) == (0, 0, 5, 4), "full 4x5 mask gave {r:?}");
    let empty = Mask::from_rows(&["000", "000"]).unwrap();
    ensure!(
        matches!(largest_inscribed_rectangle(&empty), Err(Error::EmptyMask)),
        "empty mask did not report EmptyMask"
    );
    let l = Mask::from_rows(&["110", "110", "111"]).unwrap();
    let r = largest_inscribed_rectangle(&l).unwrap();
    ensure!((r.x, r.y, r.w, r.h) == (0, 0, 2, 3), "L-shape gave {r:?}");

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < 200 {
        let (w, h) = (rng.random_range(1..=32), rng.random_range(1..=32));
        let density: f64 = rng.random_range(0.3..0.97);
        let bits: Vec<bool> = (0..w * h).map(|_| rng.random_bool(density)).collect();
        let mask = Mask::new(w, h, bits).unwrap();
        let want = brute_force_area(&mask);
        match largest_inscribed_rectangle(&mask) {
            Err(Error::EmptyMask) => ensure!(want == 0, "EmptyMask on mask with area {want}"),
            Err(e) => return Err(format!("unexpected error {e}")),
            Ok(r) => {
                ensure!(r.area() == want, "area {} vs brute force {want} on {w}x{h}", r.area());
                ensure!(r.fits(w, h), "{r:?} outside {w}x{h}");
                let valid = (r.y..r.y + r.h).all(|y| (r.x..r.x + r.w).all(|x| mask.get(x, y)));
                ensure!(valid, "{r:?} covers a zero pixel");
            }
        }
        checked += 1;
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok("fixtures plus 200 random masks agree with brute force".into())
}

fn retrieval_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let d = 8;
    let mut rows: Vec<Vec<f32>> = Vec::new();
    for i in 0..500 {
        // every 10th entry duplicates an earlier one to force score ties
        let v = if i % 10 == 9 {
            rows[rng.random_range(0..i)].clone()
        } else {
            let v: Vec<f32> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            l2_normalize(&v).unwrap()
        };
        rows.push(v);
    }
    let ids: Vec<String> = (0..500).map(|i| format!("m{:03}", (i * 7919) % 500)).collect();
    let index = MaterialIndex::build(ids.iter().cloned().zip(rows.iter().cloned()).collect()).unwrap();
    for qi in 0..100 {
        let query = if qi % 4 == 0 {
            rows[rng.random_range(0..500)].clone()
        } else {
            let v: Vec<f32> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            l2_normalize(&v).unwrap()
        };
        let mut oracle: Vec<(String, f64)> = rows
            .iter()
            .zip(&ids)
            .map(|(r, id)| (id.clone(), r.iter().zip(&query).map(|(&a, &b)| a as f64 * b as f64).sum()))
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        for k in [1, 5, 500] {
            let got = index.rank(&query, k).unwrap();
            ensure!(got == oracle[..k], "query {qi} k {k}: ranking differs from linear scan");
        }
    }
    Ok("100 queries x 500 entries match the linear scan exactly".into())
}

fn kdtree_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for d in [2usize, 8, 32] {
        let mut points: Vec<Vec<f64>> = Vec::with_capacity(1000);
        for i in 0..1000 {
            let p = if i % 50 == 49 {
                points[rng.random_range(0..i)].clone()
            } else {
                (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
            };
            points.push(p);
        }
        let ids: Vec<String> = (0..1000).map(|i| format!("p{:04}", (i * 7) % 1000)).collect();
        let tree = KdTree::build(ids.iter().cloned().zip(points.iter().cloned()).collect()).unwrap();
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let radius = 0.3 * (d as f64).sqrt();
        for qi in 0..100 {
            let q: Vec<f64> = if qi % 5 == 0 {
                points[rng.random_range(0..1000)].clone()
            } else {
                (0..d).map(|_| rng.random_range(-1.2..1.2)).collect()
            };
            let (want_id, want_d) = points
                .iter()
                .zip(&ids)
                .map(|(p, id)| (id.as_str(), dist(p, &q)))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(b.0)))
                .unwrap();
            let (got_id, got_d) = tree.nearest(&q).unwrap();
            ensure!(
                got_id == want_id && got_d == want_d,
                "D={d} query {qi}: tree ({got_id}, {got_d}) vs scan ({want_id}, {want_d})"
            );
            ensure!(
                tree.contains(&q, radius).unwrap() == (want_d <= radius),
                "D={d} query {qi}: contains disagrees"
            );
        }
        let kept = thin(&points, radius).unwrap();
        for (a, &i) in kept.iter().enumerate() {
            for &j in &kept[a + 1..] {
                ensure!(dist(&points[i], &points[j]) > radius, "D={d}: kept {i} and {j} within radius");
            }
        }
        for (i, p) in points.iter().enumerate() {
            ensure!(
                kept.iter().any(|&k| dist(p, &points[k]) <= radius),
                "D={d}: point {i} not covered"
            );
        }
    }
    Ok("nearest/contains match linear scan for D in {2, 8, 32}; thin postconditions hold".into())
}

fn matalign(args: &[&str]) -> i32 {
    matalign_cli::run(std::iter::once("matalign").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let synth = root.join("synth.json");
    fs::write(&synth, r#"{"n_objects": 200, "n_env": 3, "n_shapes": 2}"#).unwrap();
    let data = root.join("data");
    ensure!(matalign(&["gen", "--out", p(&data), "--seed", "4", "--config", p(&synth)]) == 0, "gen failed");
    let run = |steps: u64| {
        let path = root.join(format!("run{steps}.json"));
        fs::write(&path, format!(r#"{{"train": {{"steps": {steps}, "batch_size": 16}}}}"#)).unwrap();
        path
    };
    let (half, whole) = (run(30), run(60));
    let train = |config: &Path, out: &str, resume: Option<&Path>| {
        let out = root.join(out);
        let mut args = vec!["train", "--data", p(&data), "--seed", "9", "--config", p(config), "--out", p(&out)];
        if let Some(r) = resume {
            args.extend(["--resume", p(r)]);
        }
        let args: Vec<String> = args.into_iter().map(String::from).collect();
        let code = matalign(&args.iter().map(String::as_str).collect::<Vec<_>>());
        (code, out)
    };
    let (c1, a) = train(&whole, "a", None);
    let (c2, b) = train(&whole, "b", None);
    let (c3, h) = train(&half, "h", None);
    let (c4, r) = train(&whole, "r", Some(&h.join("state.mcpt")));
    ensure!([c1, c2, c3, c4] == [0; 4], "train exit codes {:?}", [c1, c2, c3, c4]);
    let read = |dir: &Path, f: &str| fs::read(dir.join(f)).unwrap();
    for f in ["checkpoint.mcpt", "state.mcpt", "history.csv"] {
        ensure!(read(&a, f) == read(&b, f), "repeat run {f} differs");
        ensure!(read(&a, f) == read(&r, f), "resumed run {f} differs from uninterrupted run");
    }
    Ok("repeat and resumed runs are byte-identical to the uninterrupted run".into())
}

fn histogram_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let (w, h) = (rng.random_range(1..40), rng.random_range(1..40));
        let pixels: Vec<[u8; 3]> = (0..w * h).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let mut bits: Vec<bool> = (0..w * h).map(|_| rng.random_bool(0.5)).collect();
        bits[0] = true;
        let hist: Vec<f64> = color_histogram(&Image::new(w, h, pixels).unwrap(), &Mask::new(w, h, bits).unwrap()).unwrap();
        let sum: f64 = hist.iter().sum();
        ensure!((sum - 1.0).abs() <= 1e-6, "histogram sums to {sum}");
    }
    let (r, g, b) = (200u8, 77u8, 13u8);
    let bin = 100 * (r as usize * 10 / 256) + 10 * (g as usize * 10 / 256) + (b as usize * 10 / 256);
    ensure!(quantize_color(r, g, b) == bin, "quantisation disagrees with formula");
    let img = Image::new(7, 5, vec![[r, g, b]; 35]).unwrap();
    let hist: Vec<f64> = color_histogram(&img, &Mask::new(7, 5, vec![true; 35]).unwrap()).unwrap();
    ensure!(hist.len() == 1000, "{} bins", hist.len());
    for (i, &v) in hist.iter().enumerate() {
        ensure!(v == if i == bin { 1.0 } else { 0.0 }, "bin {i} holds {v}");
    }
    Ok(format!("random histograms sum to 1; uniform colour lands in bin {bin}"))
}

fn end_to_end_smoke() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let (data, split, model, eval, report) = (
        root.join("data"),
        root.join("split"),
        root.join("model"),
        root.join("eval"),
        root.join("report"),
    );
    let run_cfg = root.join("run.json");
    fs::write(&run_cfg, r#"{"train": {"steps": 100}}"#).unwrap();
    let split_file = split.join("split.json");
    let (checkpoint, metrics) = (model.join("checkpoint.mcpt"), eval.join("metrics.csv"));
    let steps: [(&str, Vec<&str>); 5] = [
        ("gen", vec!["gen", "--out", p(&data), "--seed", "0"]),
        ("split", vec!["split", "--data", p(&data), "--test-fraction", "0.25", "--seed", "1", "--out", p(&split)]),
        (
            "train",
            vec!["train", "--data", p(&data), "--split", p(&split_file), "--seed", "2", "--config", p(&run_cfg), "--out", p(&model)],
        ),
        (
            "eval",
            vec![
                "eval",
                "--data",
                p(&data),
                "--split",
                p(&split_file),
                "--checkpoint",
                p(&checkpoint),
                "--k",
                "5",
                "--out",
                p(&eval),
            ],
        ),
        ("report", vec!["report", "--inputs", p(&metrics), "--out", p(&report)]),
    ];
    for (name, args) in steps {
        let code = matalign(&args);
        ensure!(code == 0, "{name} exited {code}");
    }
    let md = fs::read_to_string(report.join("report.md")).unwrap();
    let header = "| Method | Main Evaluation T-1 | Main Evaluation T-5 | Unseen Shapes T-1 | Unseen Shapes T-5 \
                  | Unseen Lighting T-1 | Unseen Lighting T-5 | Unseen Materials T-1 | Unseen Materials T-5 |";
    ensure!(md.lines().any(|l| l == header), "report lacks the results header:\n{md}");
    for method in ["matclip", "v1", "v2"] {
        let prefix = format!("| {method} |");
        let row = md.lines().find(|l| l.starts_with(&prefix));
        ensure!(row.is_some(), "report lacks a {method} row:\n{md}");
        ensure!(row.unwrap().matches('|').count() == 10, "{method} row has the wrong column count");
    }
    Ok("gen, split, train, eval, report exit 0; report has matclip, v1, v2 rows".into())
}
