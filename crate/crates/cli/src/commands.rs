use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use freqinr_core::config::RunConfig;
use freqinr_core::evaluate::{benchmark, spectral_report, BANDS};
use freqinr_core::inr::{checkpoint, upsample_bicubic, LocalInr};
use freqinr_core::selfcheck::{self, Fault, SelfCheckOptions};
use freqinr_core::spectral::{dct2, export, Spectrum};
use freqinr_core::training::{checkpoint_due, Trainer};
use freqinr_core::{Error as CoreError, Image};

use crate::{ConfigArgs, Outcome};

fn load_config(args: &ConfigArgs) -> Result<(RunConfig, PathBuf)> {
    let cfg = RunConfig::load(args.config.as_deref(), &args.overrides)?;
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok((cfg, out))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

pub fn train(args: &ConfigArgs) -> Result<Outcome> {
    let (cfg, out) = load_config(args)?;
    let data = cfg.train_images()?;
    let train_cfg = cfg.train_config();
    fs::write(out.join("config.json"), cfg.to_json()?)?;
    let mut model = LocalInr::new(cfg.model.clone(), train_cfg.seed)?;
    log::info!(
        "training {} parameters on {} images for {} steps (lambda {}, {})",
        model.num_scalars(),
        data.len(),
        train_cfg.steps,
        train_cfg.loss.lambda,
        train_cfg.loss.mode.name()
    );
    let ckpt_dir = out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir)?;
    let mut metrics = create(&out.join("metrics.jsonl"))?;
    let mut trainer = Trainer::new(train_cfg.clone(), &data)?;
    for step in 0..train_cfg.steps {
        let report = match trainer.step(&mut model) {
            Ok(r) => r,
            Err(e @ CoreError::NonFiniteLoss { .. }) => {
                metrics.flush()?;
                return Err(e).context("training aborted");
            }
            Err(e) => return Err(e.into()),
        };
        serde_json::to_writer(&mut metrics, &report.metrics)?;
        metrics.write_all(b"\n")?;
        if step % 100 == 0 || step + 1 == train_cfg.steps {
            let m = &report.metrics;
            log::info!("step {step}: l_total {:.5} l_spatial {:.5} lr {:.2e}", m.l_total, m.l_spatial, m.lr);
        }
        if checkpoint_due(&train_cfg, step) {
            checkpoint::save(&model, step + 1, &ckpt_dir.join(format!("step-{:06}.json", step + 1)))?;
        }
    }
    metrics.flush()?;
    checkpoint::save(&model, train_cfg.steps, &out.join("model.json"))?;
    println!("wrote {}", out.join("model.json").display());
    Ok(Outcome::Success)
}

pub fn eval(args: &ConfigArgs, ckpt: &Path) -> Result<Outcome> {
    let (cfg, out) = load_config(args)?;
    let (model, _) = checkpoint::load(ckpt).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    let images = cfg.eval_images()?;
    let report = benchmark(Some(&model), &images, &cfg.eval.scales, cfg.eval.crop)?;
    report.write(&out)?;
    print!("{}", report.table());
    Ok(Outcome::Success)
}

fn parse_scale(text: &str) -> Result<(f64, f64)> {
    let parse = |s: &str| s.trim().parse::<f64>().with_context(|| format!("invalid scale `{text}`"));
    let scale = match text.split_once(['x', 'X']) {
        Some((y, x)) => (parse(y)?, parse(x)?),
        None => {
            let r = parse(text)?;
            (r, r)
        }
    };
    if !(scale.0 >= 1.0 && scale.1 >= 1.0 && scale.0.is_finite() && scale.1.is_finite()) {
        return Err(CoreError::Config(format!("scale `{text}` must be >= 1")).into());
    }
    Ok(scale)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}.png"))
}

pub fn upscale(ckpt: &Path, input: &Path, scale: &str, output: Option<&Path>, baseline: bool) -> Result<Outcome> {
    let scale = parse_scale(scale)?;
    let (model, _) = checkpoint::load(ckpt).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    let lr = Image::load(input)?;
    let tag = if scale.0 == scale.1 { format!("_x{}", scale.0) } else { format!("_x{}x{}", scale.0, scale.1) };
    let output = output.map_or_else(|| sibling(input, &tag), Path::to_path_buf);
    let sr = model.upscale(&lr, scale)?;
    sr.save_png(&output)?;
    println!("wrote {} ({}x{})", output.display(), sr.height(), sr.width());
    if baseline {
        let path = sibling(&output, "_bicubic");
        upsample_bicubic(&lr, scale)?.save_png(&path)?;
        println!("wrote {}", path.display());
    }
    Ok(Outcome::Success)
}

/// Mean over channels of `|coefficient|` for each frequency.
fn magnitude_plane(s: &Spectrum) -> Vec<f64> {
    s.coeffs.chunks(s.channels).map(|c| c.iter().map(|v| v.abs()).sum::<f64>() / c.len() as f64).collect()
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into())
}

pub fn spectrum(a: &Path, b: Option<&Path>, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let img_a = Image::load(a)?;
    let img_b = b.map(Image::load).transpose()?;
    if let (Some(ib), Some(pb)) = (&img_b, b) {
        if ib.dims() != img_a.dims() {
            return Err(CoreError::Config(format!(
                "{} is {}x{} but {} is {}x{}",
                a.display(),
                img_a.height(),
                img_a.width(),
                pb.display(),
                ib.height(),
                ib.width()
            ))
            .into());
        }
    }
    let (names, imgs): (Vec<String>, Vec<&Image>) = match (&img_b, b) {
        (Some(ib), Some(pb)) if stem(a) == stem(pb) => (vec![format!("{}_a", stem(a)), format!("{}_b", stem(pb))], vec![&img_a, ib]),
        (Some(ib), Some(pb)) => (vec![stem(a), stem(pb)], vec![&img_a, ib]),
        _ => (vec![stem(a)], vec![&img_a]),
    };
    let (h, w, _) = img_a.dims();
    let spectra: Vec<Spectrum> = imgs.iter().map(|i| dct2(i)).collect();
    for (name, s) in names.iter().zip(&spectra) {
        let path = out.join(format!("{name}_dct.pgm"));
        export::write_log_pgm(&path, &magnitude_plane(s), h, w)?;
        println!("wrote {}", path.display());
    }
    if let [sa, sb] = &spectra[..] {
        let diff: Vec<f64> = sa
            .coeffs
            .chunks(sa.channels)
            .zip(sb.coeffs.chunks(sb.channels))
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>() / x.len() as f64)
            .collect();
        let map = out.join("distance_dct.pgm");
        export::write_log_pgm(&map, &diff, h, w)?;
        let bands = spectral_report(&img_a, img_b.as_ref().expect("pair"))?;
        let mut csv = String::from("band,lower,upper,mean_abs_diff\n");
        for (i, d) in bands.iter().enumerate() {
            csv.push_str(&format!("{i},{},{},{d}\n", i as f64 / BANDS as f64, (i + 1) as f64 / BANDS as f64));
        }
        let csv_path = out.join("bands.csv");
        fs::write(&csv_path, csv)?;
        println!("wrote {} and {}", map.display(), csv_path.display());
    }
    Ok(Outcome::Success)
}

pub fn gradcheck(args: &ConfigArgs, seed: u64, flip_adfl: bool) -> Result<Outcome> {
    let cfg = RunConfig::load(args.config.as_deref(), &args.overrides)?;
    let opts = SelfCheckOptions { seed, tolerance: cfg.tol, fault: flip_adfl.then_some(Fault::FlipAdflGradient) };
    let report = selfcheck::run(&opts)?;
    for line in report.lines() {
        println!("{line}");
    }
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("gradcheck.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    }
    if report.passed() {
        println!("all {} checks passed", report.checks.len());
        Ok(Outcome::Success)
    } else {
        let failed: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        println!("{} of {} checks failed: {}", failed.len(), report.checks.len(), failed.join(", "));
        Ok(Outcome::CheckFailed)
    }
}
