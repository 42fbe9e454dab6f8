//! `ncache`: data generation, training, evaluation and scheduler benchmarks.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Arg, ArgAction, ArgMatches, Command};

use neural_cache::eval::{ablation_configs, evaluate_protocol, run_ablation, warp_distance_sweep};
use neural_cache::scene::Dataset;
use neural_cache::scheduler::{
    run_parallel, run_sequential, simulate_schedule, simulate_sync_overhead, Mode, ModelWorker, Run, SleepWorker,
    TimingReport,
};
use neural_cache::training::{load_checkpoint, save_checkpoint, train, Models};

use config::{Backend, RunConfig};

const OUT_ROOT_ENV: &str = "NCACHE_OUT_ROOT";

const SUBCOMMANDS: &[(&str, &str)] = &[
    ("gen-data", "Render a synthetic capture to <out>/dataset"),
    ("train", "Train texture, generator and warp head; writes model.nckp and train_log.csv"),
    ("eval", "Score a checkpoint under one protocol; writes eval_<protocol>.json"),
    ("bench", "Stream frames through the scheduler; writes timing.csv and timing.json"),
    ("ablate", "Train and score the warp-head ablation rows; writes ablation.csv"),
    ("sweep-warp", "Score warping against cache distance; writes sweep.csv"),
    ("simulate", "Run the schedule on a virtual clock; writes trace.csv, timing.csv and summary.json"),
];

fn command() -> Command {
    let mut root = Command::new("ncache")
        .about("Neural-cache rendering: data, training, evaluation and scheduling")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for (name, about) in SUBCOMMANDS {
        let mut sub = Command::new(*name)
            .about(*about)
            .arg(Arg::new("config").long("config").value_name("FILE").help("key=value file applied before flags"))
            .arg(
                Arg::new("out_root")
                    .long("out-root")
                    .env(OUT_ROOT_ENV)
                    .default_value("runs")
                    .help("root of the default output directory <root>/<subcommand>"),
            );
        for (key, doc) in RunConfig::KEYS {
            sub = sub.arg(
                Arg::new(*key).long(key.replace('_', "-")).value_name("VALUE").action(ArgAction::Set).help(*doc),
            );
        }
        root = root.subcommand(sub);
    }
    root
}

fn resolve(name: &str, m: &ArgMatches) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = m.get_one::<String>("config") {
        cfg.load_file(Path::new(path))?;
    }
    for (key, _) in RunConfig::KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    if cfg.out.is_empty() {
        let root = m.get_one::<String>("out_root").map(String::as_str).unwrap_or("runs");
        cfg.out = Path::new(root).join(name).to_string_lossy().into_owned();
    }
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn dataset(cfg: &RunConfig) -> Result<Dataset> {
    if cfg.data.is_empty() {
        Ok(Dataset::generate(&cfg.dataset_spec())?)
    } else {
        Dataset::load(Path::new(&cfg.data)).with_context(|| format!("cannot load dataset {}", cfg.data))
    }
}

fn models(cfg: &RunConfig, required: bool) -> Result<Models> {
    let mut m = Models::new(&cfg.model_config())?;
    if cfg.checkpoint.is_empty() {
        if required {
            bail!("this subcommand needs a trained model: pass --checkpoint <file>");
        }
    } else {
        load_checkpoint(&mut m, Path::new(&cfg.checkpoint))?;
    }
    Ok(m)
}

fn split(cfg: &RunConfig, ds: &Dataset) -> (Vec<neural_cache::scene::Frame>, Vec<neural_cache::scene::Frame>) {
    let (a, b) = ds.split(1.0 - cfg.test_fraction);
    (a.to_vec(), b.to_vec())
}

fn gen_data(cfg: &RunConfig, out: &Path) -> Result<String> {
    let ds = Dataset::generate(&cfg.dataset_spec())?;
    let dir = out.join("dataset");
    ds.save(&dir)?;
    Ok(format!("wrote {} frames to {}", ds.len(), dir.display()))
}

fn train_cmd(cfg: &RunConfig, out: &Path) -> Result<String> {
    let ds = dataset(cfg)?;
    let (train_frames, _) = split(cfg, &ds);
    let mut m = models(cfg, false)?;
    let log_path = out.join("train_log.csv");
    let file = fs::File::create(&log_path).with_context(|| format!("cannot write {}", log_path.display()))?;
    let mut log = BufWriter::new(file);
    let epochs = train(&mut m, &train_frames, &cfg.train_config(), cfg.loss_mode, Some(&mut log))?;
    drop(log);
    let ckpt = out.join("model.nckp");
    save_checkpoint(&m, &ckpt)?;
    let last = epochs.last().map(|e| e.losses.total).unwrap_or(f64::NAN);
    Ok(format!("trained {} epochs on {} frames, final loss {last:.5}; checkpoint {}", epochs.len(), train_frames.len(), ckpt.display()))
}

fn eval_cmd(cfg: &RunConfig, out: &Path) -> Result<String> {
    let ds = dataset(cfg)?;
    let m = models(cfg, true)?;
    let r = evaluate_protocol(cfg.protocol, &m, &ds, &cfg.protocol_config())?;
    let json = r.to_json();
    write(&out.join(format!("eval_{}.json", cfg.protocol)), &json)?;
    Ok(json)
}

fn save_report(report: &TimingReport, out: &Path) -> Result<String> {
    report.write_csv(&out.join("timing.csv"))?;
    report.write_json(&out.join("timing.json"))?;
    Ok(report.to_json())
}

fn bench_cmd(cfg: &RunConfig, out: &Path) -> Result<String> {
    let sched = cfg.scheduler();
    let report = match cfg.backend {
        Backend::Sleep => {
            let stream: Vec<usize> = (0..cfg.bench_frames).collect();
            let w = SleepWorker::new(cfg.tg_ms, cfg.tw_ms);
            let run: Run<()> = match sched.mode {
                Mode::Sequential => run_sequential(&stream, &mut w.clone(), &sched)?,
                Mode::Parallel => run_parallel(&stream, vec![w; sched.n_workers], &sched)?,
            };
            run.report
        }
        Backend::Model => {
            let ds = dataset(cfg)?;
            let m = models(cfg, false)?;
            let n = cfg.bench_frames.min(ds.len());
            let stream = &ds.frames[..n];
            match sched.mode {
                Mode::Sequential => run_sequential(stream, &mut ModelWorker::new(&m), &sched)?.report,
                Mode::Parallel => {
                    let workers = (0..sched.n_workers).map(|_| ModelWorker::new(&m)).collect();
                    run_parallel(stream, workers, &sched)?.report
                }
            }
        }
    };
    save_report(&report, out)
}

fn ablate_cmd(cfg: &RunConfig, out: &Path) -> Result<String> {
    let ds = dataset(cfg)?;
    let (train_frames, test) = split(cfg, &ds);
    let m = models(cfg, true)?;
    let tc = neural_cache::training::TrainConfig { epochs: cfg.ablation_epochs, ..cfg.train_config() };
    let table = run_ablation(&m, &train_frames, &test, &ablation_configs(), &tc)?;
    let csv = table.to_csv();
    write(&out.join("ablation.csv"), &csv)?;
    Ok(csv.trim_end().to_string())
}

fn sweep_cmd(cfg: &RunConfig, out: &Path) -> Result<String> {
    let ds = dataset(cfg)?;
    let (_, test) = split(cfg, &ds);
    let m = models(cfg, true)?;
    let s = warp_distance_sweep(&m, &test, cfg.d_max)?;
    let csv = s.to_csv();
    write(&out.join("sweep.csv"), &csv)?;
    Ok(format!("{}fit: slope {:.4} dB/frame, intercept {:.3} dB, r2 {:.4}", csv, s.fit.slope, s.fit.intercept, s.fit.r2))
}

fn simulate_cmd(cfg: &RunConfig, out: &Path) -> Result<String> {
    let d = cfg.durations();
    let sim = simulate_schedule(&cfg.scheduler(), &d, cfg.bench_frames)?;
    let mut trace = String::from("time_ms,kind,role,frame,worker\n");
    for e in &sim.trace {
        let kind = serde_json::to_value(e.kind)?;
        let worker = e.worker.map(|w| w.to_string()).unwrap_or_default();
        writeln!(trace, "{},{},{},{},{worker}", e.time_ms, kind.as_str().unwrap_or(""), e.role.as_str(), e.frame)?;
    }
    write(&out.join("trace.csv"), &trace)?;
    sim.report.write_csv(&out.join("timing.csv"))?;
    let mut summary = serde_json::to_value(sim.report.summary())?;
    let sync = simulate_sync_overhead(&d, cfg.num_warps, cfg.bench_frames.max(2 * cfg.num_warps + 2))?;
    summary["sync_overhead_ms"] = serde_json::json!(sync.overhead_ms);
    let json = serde_json::to_string_pretty(&summary)?;
    write(&out.join("summary.json"), &json)?;
    Ok(json)
}

fn run(name: &str, m: &ArgMatches) -> Result<String> {
    let cfg = resolve(name, m)?;
    let out: PathBuf = cfg.out_dir();
    fs::create_dir_all(&out).with_context(|| format!("cannot create output directory {}", out.display()))?;
    write(&out.join("config.txt"), &cfg.to_text())?;
    match name {
        "gen-data" => gen_data(&cfg, &out),
        "train" => train_cmd(&cfg, &out),
        "eval" => eval_cmd(&cfg, &out),
        "bench" => bench_cmd(&cfg, &out),
        "ablate" => ablate_cmd(&cfg, &out),
        "sweep-warp" => sweep_cmd(&cfg, &out),
        "simulate" => simulate_cmd(&cfg, &out),
        other => bail!("unknown subcommand `{other}`"),
    }
}

fn main() -> ExitCode {
    let matches = command().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand required");
    match run(name, sub) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
