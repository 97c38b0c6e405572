//! `posediff` command-line tool: dataset synthesis, training, inference,
//! evaluation, sampler sweeps, component ablations and schedule inspection.
//!
//! Every configuration key is also a `--key value` flag. Values resolve in
//! the order: profile, `--config` file, remaining flags.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Arg, ArgMatches, Command};

use posediff_core::config::{ConfigError, KEYS};
use posediff_core::eval::{self, SamplerSettings, SweepAxis};
use posediff_core::synth::{self, SynthOptions};
use posediff_core::train::{self, train_log_csv, Trainer};
use posediff_core::{Components, Config, DiffusionSchedule, Error, FrameSample, Model, Pose};

const CHECKPOINT: &str = "model.ckpt";
const CONFIG: &str = "config.txt";
const TRAIN_LOG: &str = "train_log.csv";

fn config_args(cmd: Command, seed_required: bool) -> Command {
    let cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .value_parser(clap::value_parser!(PathBuf))
            .help("Line-oriented `key = value` configuration file"),
    );
    KEYS.iter().fold(cmd, |cmd, &key| {
        let arg = Arg::new(key)
            .long(key)
            .value_name("VALUE")
            .help_heading("Configuration")
            .allow_hyphen_values(true);
        cmd.arg(if key == "seed" { arg.required(seed_required) } else { arg })
    })
}

fn path_arg(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .value_name("PATH")
        .value_parser(clap::value_parser!(PathBuf))
        .required(true)
        .help(help)
}

fn cli() -> Command {
    Command::new("posediff")
        .about("Diffusion-based 3D hand-joint estimation from depth frames")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(config_args(
            Command::new("synth")
                .about("Generate a synthetic depth dataset")
                .arg(path_arg("out", "Output dataset directory")),
            true,
        ))
        .subcommand(config_args(
            Command::new("train")
                .about("Train a model; writes model.ckpt, config.txt and train_log.csv")
                .arg(path_arg("data", "Training dataset directory"))
                .arg(path_arg("out", "Output model directory")),
            true,
        ))
        .subcommand(config_args(
            Command::new("infer")
                .about("Predict joints for every frame of a dataset")
                .arg(path_arg("model", "Trained model directory"))
                .arg(path_arg("data", "Dataset directory"))
                .arg(path_arg("out", "Prediction CSV file")),
            false,
        ))
        .subcommand(config_args(
            Command::new("eval")
                .about("Evaluate a model; writes metrics.csv and predictions.csv")
                .arg(path_arg("model", "Trained model directory"))
                .arg(path_arg("data", "Held-out dataset directory"))
                .arg(path_arg("out", "Output directory"))
                .arg(
                    path_arg("train", "Training dataset, enables the mean-pose and nearest-neighbor baselines")
                        .required(false),
                ),
            false,
        ))
        .subcommand(config_args(
            Command::new("sweep")
                .about("Mean error over a range of timesteps or hypotheses")
                .arg(path_arg("model", "Trained model directory"))
                .arg(path_arg("data", "Held-out dataset directory"))
                .arg(path_arg("out", "Sweep CSV file"))
                .arg(
                    Arg::new("axis")
                        .long("axis")
                        .required(true)
                        .value_parser(["timesteps", "hypotheses"]),
                )
                .arg(
                    Arg::new("values")
                        .long("values")
                        .required(true)
                        .value_delimiter(',')
                        .value_parser(clap::value_parser!(usize))
                        .help("Comma-separated values, e.g. 1,2,5,10"),
                ),
            false,
        ))
        .subcommand(config_args(
            Command::new("ablate")
                .about("Train and evaluate component variants with the same budget")
                .arg(path_arg("data", "Training dataset directory"))
                .arg(path_arg("test", "Held-out dataset directory"))
                .arg(path_arg("out", "Ablation CSV file"))
                .arg(
                    Arg::new("variants")
                        .long("variants")
                        .value_delimiter(',')
                        .help("Component sets such as `LC,JC+LC+JI` (default: the full ladder)"),
                ),
            false,
        ))
        .subcommand(config_args(
            Command::new("schedule-dump")
                .about("Print the noise schedule as CSV")
                .arg(path_arg("out", "Write to a file instead of standard output").required(false)),
            false,
        ))
}

/// Profile, then config file, then every other flag.
fn resolve_config(base: Config, m: &ArgMatches) -> Result<Config> {
    let mut config = base;
    if let Some(p) = m.get_one::<String>("profile") {
        config.set("profile", p)?;
    }
    if let Some(path) = m.get_one::<PathBuf>("config") {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        config.apply_text(&text)?;
    }
    for &key in KEYS.iter().filter(|k| **k != "profile") {
        if let Some(v) = m.get_one::<String>(key) {
            config.set(key, v)?;
        }
    }
    config.validate()?;
    Ok(config)
}

fn path<'a>(m: &'a ArgMatches, name: &str) -> &'a Path {
    m.get_one::<PathBuf>(name).expect("required argument")
}

fn load_model(m: &ArgMatches) -> Result<Model> {
    let dir = path(m, "model");
    let cfg_path = dir.join(CONFIG);
    let text = fs::read_to_string(&cfg_path).with_context(|| format!("reading {}", cfg_path.display()))?;
    let stored = Config::parse_text(&text)?;
    let config = resolve_config(stored, m)?;
    // Overriding an architecture key makes the checkpoint fail to load.
    Ok(Model::load(&config, &dir.join(CHECKPOINT))?)
}

fn load_samples(dir: &Path, config: &Config) -> Result<Vec<FrameSample>> {
    let dataset = synth::read_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))?;
    Ok(train::prepare_samples(&dataset, config)?)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn parse_variant(text: &str) -> Result<Components> {
    let mut c = Components { jc: false, lc: false, ji: false, kc: false, mh: false };
    if text.trim().eq_ignore_ascii_case("none") {
        return Ok(c);
    }
    for part in text.split('+') {
        match part.trim().to_ascii_uppercase().as_str() {
            "JC" => c.jc = true,
            "LC" => c.lc = true,
            "JI" => c.ji = true,
            "KC" => c.kc = true,
            "MH" => c.mh = true,
            other => bail!("unknown component `{other}` in variant `{text}`"),
        }
    }
    Ok(c)
}

fn cmd_synth(m: &ArgMatches) -> Result<()> {
    let config = resolve_config(Config::default(), m)?;
    let out = path(m, "out");
    let dataset = synth::generate(&SynthOptions {
        joints: config.joints,
        count: config.count,
        seed: config.seed,
        occluder: config.occluder,
    })?;
    synth::write_dataset(&dataset, out)?;
    println!(
        "wrote {} frames ({} joints, {}x{}) to {}",
        dataset.frames.len(),
        dataset.joints,
        dataset.width,
        dataset.height,
        out.display()
    );
    Ok(())
}

fn cmd_train(m: &ArgMatches) -> Result<()> {
    let config = resolve_config(Config::default(), m)?;
    let out = path(m, "out");
    let samples = load_samples(path(m, "data"), &config)?;
    let model = Model::new(&config)?;
    println!(
        "training {} parameters on {} frames for {} epochs ({})",
        model.store.num_values(),
        samples.len(),
        config.epochs,
        config.components.label()
    );
    let mut trainer = Trainer::new(model);
    let reports = trainer.fit(&samples, |r| println!("{r}"))?;
    fs::create_dir_all(out)?;
    trainer.model.save(&out.join(CHECKPOINT))?;
    write(&out.join(CONFIG), &config.to_text())?;
    write(&out.join(TRAIN_LOG), &train_log_csv(&reports))?;
    println!("saved model to {}", out.display());
    Ok(())
}

fn predict_all(model: &Model, samples: &[FrameSample]) -> Result<Vec<Pose>> {
    let settings = SamplerSettings::from_config(&model.config);
    samples
        .iter()
        .map(|s| Ok(eval::predict_frame(model, s, settings)?))
        .collect()
}

fn cmd_infer(m: &ArgMatches) -> Result<()> {
    let model = load_model(m)?;
    let samples = load_samples(path(m, "data"), &model.config)?;
    let predictions = predict_all(&model, &samples)?;
    let out = path(m, "out");
    write(out, &eval::predictions_csv(&predictions))?;
    println!("wrote {} predictions to {}", predictions.len(), out.display());
    Ok(())
}

fn cmd_eval(m: &ArgMatches) -> Result<()> {
    let model = load_model(m)?;
    let test = load_samples(path(m, "data"), &model.config)?;
    let settings = SamplerSettings::from_config(&model.config);
    let result = eval::evaluate(&model, &test, settings)?;
    let out = path(m, "out");
    write(&out.join("metrics.csv"), &result.report.to_csv())?;
    write(&out.join("predictions.csv"), &eval::predictions_csv(&result.predictions))?;
    println!(
        "T' = {}, H = {}: {}",
        settings.timesteps, settings.hypotheses, result.report
    );
    if let Some(train_dir) = m.get_one::<PathBuf>("train") {
        let train = load_samples(train_dir, &model.config)?;
        let truth: Vec<Pose> = test.iter().map(|s| s.joints_mm.clone()).collect();
        let mean = eval::mean_joint_error(&eval::mean_pose_baseline(&train, &test)?, &truth)?;
        let nn = eval::mean_joint_error(&eval::nearest_neighbor_baseline(&train, &test)?, &truth)?;
        write(
            &out.join("baselines.csv"),
            &format!(
                "method,mean_error_mm\nmodel,{:.6}\nmean_pose,{mean:.6}\nnearest_neighbor,{nn:.6}\n",
                result.report.mean_error_mm
            ),
        )?;
        println!("baselines: mean pose {mean:.3} mm, nearest neighbor {nn:.3} mm");
    }
    Ok(())
}

fn cmd_sweep(m: &ArgMatches) -> Result<()> {
    let model = load_model(m)?;
    let samples = load_samples(path(m, "data"), &model.config)?;
    let axis: SweepAxis = m.get_one::<String>("axis").expect("required").parse()?;
    let values: Vec<usize> = m.get_many::<usize>("values").expect("required").copied().collect();
    let rows = eval::sweep(&model, &samples, axis, &values, SamplerSettings::from_config(&model.config))?;
    for r in &rows {
        println!("{} = {:>3}: {:.3} mm", r.axis, r.value, r.mean_error_mm);
    }
    write(path(m, "out"), &eval::sweep_csv(&rows))
}

fn cmd_ablate(m: &ArgMatches) -> Result<()> {
    let config = resolve_config(Config::default(), m)?;
    let variants = match m.get_many::<String>("variants") {
        Some(v) => v.map(|s| parse_variant(s)).collect::<Result<Vec<_>>>()?,
        None => eval::ablation_rows(),
    };
    for v in &variants {
        v.validate()?;
    }
    let train = load_samples(path(m, "data"), &config)?;
    let test = load_samples(path(m, "test"), &config)?;
    let results = eval::ablate(&config, &variants, &train, &test, |c, r| {
        println!("[{}] {r}", c.label())
    })?;
    for r in &results {
        println!("{:<16} {:.3} mm", r.components.label(), r.report.mean_error_mm);
    }
    write(path(m, "out"), &eval::ablation_csv(&results))
}

fn cmd_schedule_dump(m: &ArgMatches) -> Result<()> {
    let config = resolve_config(Config::default(), m)?;
    let csv = DiffusionSchedule::new(config.kind, config.total_steps)?.to_csv();
    match m.get_one::<PathBuf>("out") {
        Some(out) => write(out, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn run(matches: &ArgMatches) -> Result<()> {
    match matches.subcommand() {
        Some(("synth", m)) => cmd_synth(m),
        Some(("train", m)) => cmd_train(m),
        Some(("infer", m)) => cmd_infer(m),
        Some(("eval", m)) => cmd_eval(m),
        Some(("sweep", m)) => cmd_sweep(m),
        Some(("ablate", m)) => cmd_ablate(m),
        Some(("schedule-dump", m)) => cmd_schedule_dump(m),
        _ => unreachable!("subcommand is required"),
    }
}

/// Unknown configuration keys are usage errors (exit 2); everything else
/// that fails is a precondition failure (exit 1).
fn exit_code(err: &anyhow::Error) -> u8 {
    let unknown = err.chain().any(|e| {
        matches!(e.downcast_ref::<ConfigError>(), Some(ConfigError::UnknownKey(_)))
            || matches!(e.downcast_ref::<Error>(), Some(Error::ConfigKey(ConfigError::UnknownKey(_))))
    });
    if unknown {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let matches = cli().get_matches_from(std::env::args_os());
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
