mod config;
mod dataset;
mod exit;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use detkit::cost::{compare_variants, model_cost, NetSpec};
use detkit::gradcheck::{rows_to_table, run_gradcheck, GradcheckOptions};
use detkit::postprocess::{letterbox, Detection};
use detkit::ppm::{draw_boxes, read_image, to_rgb, write_image};
use detkit::tensor::set_checked;
use detkit::train::*;
use serde_json::json;

use config::{Command, RunConfig};
use exit::{Class, Failure};

#[derive(Parser)]
#[command(name = "detkit", version, about = "Verification, cost modelling and a toy trainer for a small detector")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Finite-difference check of every backward pass.
    Gradcheck {
        /// Glob over operator names, e.g. `cbam_*`.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corrupt one operator's analytic gradient to confirm failures are caught.
        #[arg(long)]
        perturb: Option<String>,
        /// Also write the rows as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Cost report comparing partial-convolution and full-convolution variants.
    Bench {
        /// Net description file; defaults to the built-in toy net.
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0.25)]
        cp_fraction: f64,
        #[arg(long, default_value_t = 8)]
        bytes_per_element: u64,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Train the toy detector.
    Train(RunArgs),
    /// Score a trained net (or precomputed detections) against a dataset.
    Eval(RunArgs),
    /// Run a trained net on one PPM/PGM image.
    Detect(RunArgs),
    /// Indicator table, per-class AP and cost comparison for a trained net.
    Report(RunArgs),
    /// Write the synthetic shape dataset to a directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        image_size: usize,
        #[arg(long, default_value_t = 3)]
        classes: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` config file, applied before the command-line pairs.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key=value` settings, e.g. `weights=out.dkw epochs=50`.
    settings: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    // the library defaults to checked mode; the CLI only pays for it on request
    set_checked(std::env::var("DETKIT_VERIFY").is_ok_and(|v| v == "1"));
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.exit_code()
        }
    }
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Gradcheck {
            filter,
            cases,
            seed,
            perturb,
            json,
        } => gradcheck(GradcheckOptions { filter, cases, seed, perturb }, json.as_deref()),
        Cmd::Bench {
            spec,
            cp_fraction,
            bytes_per_element,
            json,
            csv,
        } => bench(spec.as_deref(), cp_fraction, bytes_per_element, json.as_deref(), csv.as_deref()),
        Cmd::Train(a) => train(&load(Command::Train, a)?),
        Cmd::Eval(a) => eval(&load(Command::Eval, a)?),
        Cmd::Detect(a) => detect(&load(Command::Detect, a)?),
        Cmd::Report(a) => report(&load(Command::Report, a)?),
        Cmd::Synth {
            out,
            seed,
            count,
            image_size,
            classes,
        } => {
            let data = synth_dataset(seed, count, image_size, classes)?;
            dataset::write_dir(&out, &data)?;
            println!("wrote {count} images to {}", out.display());
            Ok(())
        }
    }
}

fn load(command: Command, a: RunArgs) -> Result<RunConfig, Failure> {
    RunConfig::load(command, a.config.as_deref(), &a.settings)
}

fn check_out(p: Option<&Path>) -> Result<(), Failure> {
    if let Some(dir) = p.and_then(Path::parent).filter(|d| !d.as_os_str().is_empty()) {
        if !dir.is_dir() {
            return Err(Failure::usage(format!("output directory {} does not exist", dir.display())));
        }
    }
    Ok(())
}

fn gradcheck(opts: GradcheckOptions, json: Option<&Path>) -> Result<(), Failure> {
    check_out(json)?;
    let rows = run_gradcheck(&opts)?;
    print!("{}", rows_to_table(&rows));
    if let Some(p) = json {
        fs::write(p, serde_json::to_string_pretty(&rows)? + "\n")?;
    }
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed).map(|r| r.op.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(Class::GradcheckFailed, format!("gradient check failed for: {}", failed.join(", "))))
    }
}

fn bench(spec: Option<&Path>, cp: f64, bytes: u64, json: Option<&Path>, csv: Option<&Path>) -> Result<(), Failure> {
    check_out(json)?;
    check_out(csv)?;
    if !(cp > 0.0 && cp <= 1.0) {
        return Err(Failure::usage(format!("cp_fraction {cp} outside (0, 1]")));
    }
    if bytes == 0 {
        return Err(Failure::usage("bytes_per_element must be >= 1"));
    }
    let net = match spec {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Failure::usage(format!("cannot read net spec {}: {e}", p.display())))?;
            NetSpec::parse(&text)?
        }
        None => ToyNetConfig::default().net_spec(),
    };
    let cmp = compare_variants(&net, cp, bytes)?;
    print!("{}", cmp.to_table());
    if let Some(p) = json {
        fs::write(p, serde_json::to_string_pretty(&cmp)? + "\n")?;
    }
    if let Some(p) = csv {
        fs::write(p, cmp.to_csv())?;
    }
    Ok(())
}

fn train(cfg: &RunConfig) -> Result<(), Failure> {
    let t = &cfg.train;
    let data = match &cfg.dataset {
        Some(dir) => dataset::load_dir(dir, t.net.image_size)?,
        None => t.dataset()?,
    };
    let mut stats_out = match &cfg.stats {
        Some(p) => Some(std::io::BufWriter::new(fs::File::create(p)?)),
        None => None,
    };
    let mut net = t.init_net()?;
    let mut write_err = None;
    let stats = train_on(&mut net, &data, t, &mut |s| {
        if let Some(w) = stats_out.as_mut() {
            let line = serde_json::to_string(s).expect("stats serialize");
            if let Err(e) = writeln!(w, "{line}") {
                write_err.get_or_insert(e);
            }
        }
        if s.epoch % 20 == 0 || s.epoch == t.epochs {
            eprintln!("epoch {:>4} {:<6} lr {:.2e} loss {:.5}", s.epoch, format!("{:?}", s.phase).to_lowercase(), s.lr, s.loss);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    if let Some(mut w) = stats_out {
        w.flush()?;
    }
    let weights = cfg.weights.as_ref().expect("checked by config");
    save_weights(&net, weights)?;
    let last = stats.last().map(|s| s.loss).unwrap_or(f64::NAN);
    println!("trained {} epochs on {} images, final loss {last:.5}; weights in {}", stats.len(), data.len(), weights.display());
    Ok(())
}

/// Loads the net and rebases the run config onto the net's own architecture.
fn load_net(cfg: &RunConfig) -> Result<(ToyNet, TrainConfig), Failure> {
    let path = cfg.weights.as_ref().expect("checked by config");
    let net = load_weights(path)?;
    let mut t = cfg.train.clone();
    t.net = net.config.clone();
    Ok((net, t))
}

fn eval_data(cfg: &RunConfig, t: &TrainConfig) -> Result<Vec<Sample>, Failure> {
    match &cfg.dataset {
        Some(dir) => dataset::load_dir(dir, t.net.image_size),
        None => Ok(t.dataset()?),
    }
}

fn evaluation(cfg: &RunConfig) -> Result<Evaluation, Failure> {
    if let Some(p) = &cfg.predictions {
        let t = &cfg.train;
        let data = eval_data(cfg, t)?;
        let dets: Vec<Vec<Detection>> = serde_json::from_str(&fs::read_to_string(p)?)?;
        let gts: Vec<_> = data.iter().map(|s| s.targets.clone()).collect();
        let mut ev = evaluate(&dets, &gts, t.eval_iou, t.net.num_classes)?;
        if cfg.weights.is_some() {
            let (net, _) = load_net(cfg)?;
            ev.summary = ev.summary.with_cost(&model_cost(&net.config.net_spec(), cfg.bytes_per_element)?);
        }
        return Ok(ev);
    }
    let (net, t) = load_net(cfg)?;
    let data = eval_data(cfg, &t)?;
    let mut ev = evaluate_net(&net, &data, &t)?;
    ev.summary = ev.summary.with_cost(&model_cost(&net.config.net_spec(), cfg.bytes_per_element)?);
    Ok(ev)
}

fn eval(cfg: &RunConfig) -> Result<(), Failure> {
    let ev = evaluation(cfg)?;
    let s = &ev.summary;
    fs::write(cfg.summary.as_ref().expect("checked by config"), serde_json::to_string_pretty(s)? + "\n")?;
    if let Some(p) = &cfg.curve {
        fs::write(p, ev.curve.to_csv())?;
    }
    println!(
        "precision {:.4} recall {:.4} f1 {:.4} ap {:.4} map {:.4} ({} tp, {} fp, {} gt)",
        s.precision, s.recall, s.f1, s.ap, s.map, s.true_positives, s.false_positives, s.ground_truths
    );
    Ok(())
}

fn detect(cfg: &RunConfig) -> Result<(), Failure> {
    let (net, t) = load_net(cfg)?;
    let path = cfg.image.as_ref().expect("checked by config");
    let original = read_image(path).map_err(|e| Failure::from_image(path, e))?;
    let rgb = to_rgb(&original).map_err(|e| Failure::from_image(path, e))?;
    let size = net.config.image_size;
    let (input, tf) = letterbox(&rgb, size, size)?;
    let mut spec = net.config.decode_spec();
    spec.score_threshold = t.score_threshold;
    let dets: Vec<Detection> = net
        .detect(&input, &spec, t.nms_iou)?
        .remove(0)
        .into_iter()
        .map(|d| Detection {
            bbox: tf.to_original(&d.bbox),
            ..d
        })
        .collect();
    let doc = json!({
        "image": path.display().to_string(),
        "width": original.w(),
        "height": original.h(),
        "detections": dets,
    });
    let text = serde_json::to_string_pretty(&doc)? + "\n";
    match &cfg.detections {
        Some(p) => fs::write(p, &text)?,
        None => print!("{text}"),
    }
    if let Some(p) = &cfg.overlay {
        write_image(p, &draw_boxes(&rgb, &dets)?)?;
    }
    if cfg.detections.is_some() {
        println!("{} detections", dets.len());
    }
    Ok(())
}

fn report(cfg: &RunConfig) -> Result<(), Failure> {
    let (net, _) = load_net(cfg)?;
    let ev = evaluation(cfg)?;
    let cmp = compare_variants(&net.config.net_spec(), net.config.cp_fraction, cfg.bytes_per_element)?;
    let s = &ev.summary;
    let mut out = String::new();
    out += &format!("{:<22} {:>12}\n", "indicator", "value");
    out += &format!("{:<22} {:>12.4}\n", "precision", s.precision);
    out += &format!("{:<22} {:>12.4}\n", "recall", s.recall);
    out += &format!("{:<22} {:>12.4}\n", "f1", s.f1);
    out += &format!("{:<22} {:>12.4}\n", "ap (pr curve area)", s.ap);
    out += &format!("{:<22} {:>12.4}\n", "model size (MB)", s.model_size_mb);
    out += &format!("{:<22} {:>12}\n", "computation (MACs)", s.computation_macs);
    out += &format!("\n{:<8} {:>6} {:>6} {:>8}\n", "class", "gt", "dets", "ap");
    for c in &s.per_class {
        out += &format!("{:<8} {:>6} {:>6} {:>8.4}\n", c.class, c.ground_truths, c.detections, c.ap);
    }
    out += &format!(
        "\nfull-convolution twin: params {} -> {}, macs {} -> {}\n",
        cmp.full.totals.params, cmp.pconv.totals.params, cmp.full.totals.macs, cmp.pconv.totals.macs
    );
    print!("{out}");
    if let Some(p) = &cfg.report {
        let doc = json!({ "summary": s, "comparison": cmp });
        fs::write(p, serde_json::to_string_pretty(&doc)? + "\n")?;
    }
    Ok(())
}
