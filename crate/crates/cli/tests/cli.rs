use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use freqinr_core::numerics::prng;
use freqinr_core::Image;
use rand::Rng;

const TINY: &[&str] = &[
    "model.encoder.channels=4",
    "model.encoder.depth=2",
    "model.decoder.hidden=8",
    "model.decoder.layers=2",
    "train.lr_patch=6",
    "train.scale_max=2",
    "train.batch=1",
    "train.steps=3",
    "train.milestones=[]",
    "synthetic.train_count=2",
    "synthetic.eval_count=2",
    "synthetic.size=16",
    "eval.scales=[2]",
];

fn freqinr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freqinr")).args(args).env_remove("FREQINR_OUT").output().expect("binary runs")
}

fn with_sets<'a>(mut args: Vec<&'a str>, sets: &[&'a str]) -> Vec<&'a str> {
    for s in sets {
        args.push("--set");
        args.push(s);
    }
    args
}

fn train_tiny(out: &Path, extra: &[&str]) -> Output {
    let out = out.to_str().unwrap();
    let mut args = with_sets(vec!["train", "--out", out], TINY);
    args = with_sets(args, extra);
    freqinr(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn random_png(path: &Path, h: usize, w: usize, seed: u64) -> Image {
    let mut rng = prng(seed);
    let img = Image::from_fn(h, w, 3, |_, _, _| rng.gen_range(0..=255) as f64 / 255.0);
    img.save_png(path).unwrap();
    img
}

#[test]
fn train_with_zero_lambda_logs_but_does_not_weight_the_frequency_term() {
    let dir = tempfile::tempdir().unwrap();
    let o = train_tiny(dir.path(), &["loss.lambda=0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    for l in &lines {
        assert!(l["l_adfl"].as_f64().unwrap() > 0.0);
        assert_eq!(l["l_total"], l["l_spatial"]);
    }
    assert!(dir.path().join("model.json").exists());
    assert!(dir.path().join("model.bin").exists());
    assert!(dir.path().join("checkpoints/step-000003.json").exists());
}

#[test]
fn same_seed_gives_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(train_tiny(&a, &[]).status.success());
    assert!(train_tiny(&b, &[]).status.success());
    assert_eq!(fs::read(a.join("metrics.jsonl")).unwrap(), fs::read(b.join("metrics.jsonl")).unwrap());
    assert_eq!(fs::read(a.join("model.bin")).unwrap(), fs::read(b.join("model.bin")).unwrap());
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no-such-dir");
    let set = format!("train_dir={}", missing.display());
    let o = train_tiny(&dir.path().join("out"), &[&set]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no-such-dir"), "{}", stderr(&o));

    let o = train_tiny(&dir.path().join("out"), &["loss.lamda=0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("loss.lamda"));

    let o = freqinr(&["train", "--bogus-flag"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn non_finite_loss_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = train_tiny(dir.path(), &["train.learning_rate=1e300", "train.steps=5", "train.seed=11"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("seed 11"), "{}", stderr(&o));
}

#[test]
fn untrained_model_is_the_identity_at_unit_scale() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train_tiny(dir.path(), &["train.steps=0"]).status.success());
    let input = dir.path().join("in.png");
    random_png(&input, 9, 7, 1);
    let output = dir.path().join("out.png");
    let ckpt = dir.path().join("model.json");
    let o = freqinr(&[
        "upscale",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
        "--scale",
        "1",
        "--output",
        output.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(Image::load(&input).unwrap(), Image::load(&output).unwrap());
}

#[test]
fn upscale_uses_the_floor_rule_and_writes_the_baseline() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train_tiny(dir.path(), &[]).status.success());
    let input = dir.path().join("small.png");
    random_png(&input, 20, 20, 2);
    let ckpt = dir.path().join("model.json");
    let o = freqinr(&[
        "upscale",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
        "--scale",
        "2.5",
        "--baseline",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let sr = Image::load(&dir.path().join("small_x2.5.png")).unwrap();
    assert_eq!((sr.height(), sr.width()), (50, 50));
    let bic = Image::load(&dir.path().join("small_x2.5_bicubic.png")).unwrap();
    assert_eq!((bic.height(), bic.width()), (50, 50));

    let o = freqinr(&["upscale", "--checkpoint", "missing.json", "--input", input.to_str().unwrap(), "--scale", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_writes_deterministic_reports() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train_tiny(dir.path(), &[]).status.success());
    let ckpt = dir.path().join("model.json");
    for sub in ["e1", "e2"] {
        let out = dir.path().join(sub);
        let args = with_sets(vec!["eval", "--checkpoint", ckpt.to_str().unwrap(), "--out", out.to_str().unwrap()], TINY);
        let o = freqinr(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("Bicubic"));
    }
    for f in ["report.json", "report.txt"] {
        assert_eq!(fs::read(dir.path().join("e1").join(f)).unwrap(), fs::read(dir.path().join("e2").join(f)).unwrap());
    }
}

#[test]
fn output_directory_defaults_to_the_environment_variable() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let args = with_sets(vec!["train"], TINY);
    let o = Command::new(env!("CARGO_BIN_EXE_freqinr")).args(&args).env("FREQINR_OUT", &target).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(target.join("metrics.jsonl").exists());
}

/// Direct double-sum orthonormal DCT-II of one channel.
fn dct_oracle(img: &Image, c: usize) -> Vec<f64> {
    let (h, w, _) = img.dims();
    let alpha = |k: usize, n: usize| if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
    let mut out = vec![0.0; h * w];
    for u in 0..h {
        for v in 0..w {
            let mut s = 0.0;
            for y in 0..h {
                for x in 0..w {
                    s += img.get(y, x, c)
                        * (std::f64::consts::PI * (2 * y + 1) as f64 * u as f64 / (2 * h) as f64).cos()
                        * (std::f64::consts::PI * (2 * x + 1) as f64 * v as f64 / (2 * w) as f64).cos();
                }
            }
            out[u * w + v] = alpha(u, h) * alpha(v, w) * s;
        }
    }
    out
}

fn read_bands(path: &Path) -> Vec<f64> {
    fs::read_to_string(path).unwrap().lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect()
}

#[test]
fn spectrum_pair_matches_band_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.png"), dir.path().join("b.png"));
    let (a, b) = (random_png(&pa, 8, 12, 3), random_png(&pb, 8, 12, 4));
    let out = dir.path().join("spec");
    let o = freqinr(&["spectrum", pa.to_str().unwrap(), pb.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut sums = [0.0; 4];
    let mut counts = [0.0; 4];
    for c in 0..3 {
        let (fa, fb) = (dct_oracle(&a, c), dct_oracle(&b, c));
        for u in 0..8 {
            for v in 0..12 {
                let r = f64::max(u as f64 / 8.0, v as f64 / 12.0);
                let band = [0.25, 0.5, 0.75, f64::INFINITY].iter().position(|&t| r < t).unwrap();
                sums[band] += (fa[u * 12 + v] - fb[u * 12 + v]).abs();
                counts[band] += 1.0;
            }
        }
    }
    let got = read_bands(&out.join("bands.csv"));
    for i in 0..4 {
        assert!((got[i] - sums[i] / counts[i]).abs() < 1e-9, "band {i}: {} vs {}", got[i], sums[i] / counts[i]);
    }
    for f in ["a_dct.pgm", "b_dct.pgm", "distance_dct.pgm"] {
        assert!(fs::read(out.join(f)).unwrap().starts_with(b"P5\n12 8\n255\n"), "{f}");
    }
}

#[test]
fn spectrum_degenerate_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let pa = dir.path().join("a.png");
    random_png(&pa, 8, 8, 5);
    let out = dir.path().join("same");
    let o = freqinr(&["spectrum", pa.to_str().unwrap(), pa.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(read_bands(&out.join("bands.csv")).iter().all(|&v| v == 0.0));

    let single = dir.path().join("single");
    assert!(freqinr(&["spectrum", pa.to_str().unwrap(), "--out", single.to_str().unwrap()]).status.success());
    let files: Vec<String> = fs::read_dir(&single).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert_eq!(files, vec!["a_dct.pgm".to_string()]);

    let pb = dir.path().join("b.png");
    random_png(&pb, 8, 9, 6);
    let o = freqinr(&["spectrum", pa.to_str().unwrap(), pb.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_passes_and_reports_faults() {
    let o = freqinr(&["gradcheck"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("all "));

    let o = freqinr(&["gradcheck", "--inject-flip-adfl"]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("FAIL freqloss.adfl")), "{text}");
    assert!(!text.lines().any(|l| l.starts_with("FAIL numerics")), "{text}");

    // no finite-difference estimate agrees to 1e-12: failures expected
    let o = freqinr(&["gradcheck", "--set", "tol=1e-12"]);
    assert_eq!(o.status.code(), Some(1));
}
