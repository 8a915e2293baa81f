use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use collab_drive::baselines::{brute_force, BRUTE_FORCE_MAX_LINKS};
use collab_drive::formation::{fuzz_topology, write_trace_csv, FuzzConfig};
use collab_drive::gnnbeam::{
    evaluate, train, write_loss_csv, EvalConfig, GnnModel, GraphConfig, InstanceSource, Method,
    RoadInstanceGenerator, TrainConfig,
};
use collab_drive::nncore::mix;
use collab_drive::rfmodel::{LinkCoupling, LinkGeometry};
use collab_drive::sim::{
    emit_plot_script, run_scenario, sweep_align, write_links_csv, BeamformingMethod, PlotData,
    ScenarioConfig, SimError,
};

#[derive(Parser, Debug)]
#[command(
    name = "collab-drive",
    version,
    about = "Collaborative-driving mmWave V2V simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed` from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving every output file; created if missing.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Slotted scenario: metrics.csv, links.csv, trace.csv and a plot script.
    Run {
        #[command(flatten)]
        common: Common,
        /// GNN checkpoint; overrides `scenario.checkpoint`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Alignment overhead of every scheme over `align.sweep_widths_deg`.
    SweepAlign {
        #[command(flatten)]
        common: Common,
    },
    /// Trains the GNN; writes model.ckpt and loss.csv.
    TrainGnn {
        #[command(flatten)]
        common: Common,
    },
    /// Compares GNN, WMMSE, random and (for small instances) the oracle.
    EvalBeamforming {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Exhaustive search over activation and beamwidth on small instances.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
    /// Random join/leave bursts with invariant checks at every quiescent point.
    FuzzTopology {
        #[command(flatten)]
        common: Common,
        /// Overrides `fuzz.events`.
        #[arg(long)]
        events: Option<usize>,
    },
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { common, checkpoint } => cmd_run(&common, checkpoint),
        Command::SweepAlign { common } => cmd_sweep(&common),
        Command::TrainGnn { common } => cmd_train(&common),
        Command::EvalBeamforming { common, checkpoint } => cmd_eval(&common, checkpoint),
        Command::Oracle { common } => cmd_oracle(&common),
        Command::FuzzTopology { common, events } => cmd_fuzz(&common, events),
    }
}

/// Loads the configuration and prepares the output directory.
fn setup(common: &Common) -> Result<ScenarioConfig, Failure> {
    let text = match &common.config {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| Failure::Validation(format!("cannot read config {}: {e}", p.display())))?,
        None => String::new(),
    };
    let cfg = ScenarioConfig::parse(&text, common.seed).map_err(|e| {
        let origin = common
            .config
            .as_ref()
            .map_or("config".into(), |p| p.display().to_string());
        Failure::Validation(format!("{origin}: {e}"))
    })?;
    fs::create_dir_all(&common.out_dir)?;
    Ok(cfg)
}

fn load_model(path: &Path) -> Result<GnnModel, Failure> {
    let file = File::open(path).map_err(|e| {
        Failure::Validation(format!("cannot open checkpoint {}: {e}", path.display()))
    })?;
    GnnModel::read_from(BufReader::new(file))
        .map_err(|e| Failure::Validation(format!("bad checkpoint {}: {e}", path.display())))
}

fn write_file(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), Failure> {
    let mut out = BufWriter::new(File::create(path)?);
    f(&mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_run(common: &Common, checkpoint: Option<PathBuf>) -> Result<(), Failure> {
    let mut cfg = setup(common)?;
    if checkpoint.is_some() {
        cfg.checkpoint = checkpoint;
    }
    let model = match (&cfg.checkpoint, cfg.method) {
        (Some(p), BeamformingMethod::Gnn) => Some(load_model(p)?),
        _ => None,
    };
    let out = run_scenario(&cfg, model.as_ref())?;
    emit_plot_script(PlotData::Metrics(&out.records), &common.out_dir, "metrics")?;
    write_file(&common.out_dir.join("links.csv"), |w| {
        write_links_csv(w, &out.records)
    })?;
    write_file(&common.out_dir.join("trace.csv"), |w| {
        write_trace_csv(w, &out.trace)
    })?;
    let total: f64 = out.records.iter().map(|r| r.sum_capacity_bps).sum();
    println!(
        "{} slots, method {}, scheme {}, mean sum capacity {:.6e} bit/s",
        out.records.len(),
        cfg.method.as_str(),
        cfg.scheme,
        total / out.records.len() as f64
    );
    Ok(())
}

fn cmd_sweep(common: &Common) -> Result<(), Failure> {
    let cfg = setup(common)?;
    let rows = sweep_align(&cfg, &cfg.sweep_widths_deg)?;
    emit_plot_script(PlotData::Overhead(&rows), &common.out_dir, "overhead")?;
    println!("beamwidth_deg,scheme,overhead_s,gap_vs_baseline_pct");
    for r in &rows {
        println!(
            "{},{},{:.6e},{:.2}",
            r.beamwidth_deg, r.scheme, r.overhead_s, r.gap_vs_baseline_pct
        );
    }
    Ok(())
}

fn road_source(cfg: &ScenarioConfig, links: usize, seed: u64) -> RoadInstanceGenerator {
    RoadInstanceGenerator {
        links,
        lanes: cfg.road.lanes as usize,
        lane_width_m: cfg.road.lane_width_m,
        road_length_m: cfg.road.length_m,
        seed,
        ..RoadInstanceGenerator::default()
    }
}

fn cmd_train(common: &Common) -> Result<(), Failure> {
    let cfg = setup(common)?;
    let tc = TrainConfig {
        learning_rate: cfg.train.learning_rate,
        epochs: cfg.train.epochs,
        instances_per_epoch: cfg.train.instances_per_epoch,
        seed: cfg.seed,
        norm: None,
        rf: cfg.rf,
    };
    let source = road_source(&cfg, cfg.train.links, cfg.seed);
    let mut rng = rand_seeded(mix(cfg.seed, 0x696e_6974));
    let model = GnnModel::new(GraphConfig::default(), &mut rng).map_err(runtime)?;
    let outcome = train(model, &source, &tc).map_err(runtime)?;
    write_file(&common.out_dir.join("model.ckpt"), |w| {
        outcome.model.write_to(w).map_err(std::io::Error::other)
    })?;
    write_file(&common.out_dir.join("loss.csv"), |w| {
        write_loss_csv(w, &outcome.trace)
    })?;
    println!(
        "epochs {}, loss {:.6e} -> {:.6e}",
        outcome.trace.len(),
        outcome.trace.first().copied().unwrap_or(f64::NAN),
        outcome.trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn rand_seeded(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

/// Evaluation instances, drawn from a stream independent of training.
fn eval_instances(cfg: &ScenarioConfig) -> Result<Vec<Vec<LinkGeometry>>, Failure> {
    let source = road_source(cfg, cfg.eval.links, mix(cfg.seed, 0x6576_616c));
    (0..cfg.eval.instances)
        .map(|k| source.instance(0, k).map_err(runtime))
        .collect()
}

fn cmd_eval(common: &Common, checkpoint: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = setup(common)?;
    let path = checkpoint
        .or_else(|| cfg.checkpoint.clone())
        .ok_or_else(|| {
            Failure::Validation("eval-beamforming needs --checkpoint or scenario.checkpoint".into())
        })?;
    let model = load_model(&path)?;
    let instances = eval_instances(&cfg)?;
    let ec = EvalConfig {
        rf: cfg.rf,
        wmmse: cfg.wmmse,
        wmmse_width_deg: cfg.wmmse_width_deg,
        random_seed: mix(cfg.seed, 0x72_6e64),
    };
    let report = evaluate(&model, &instances, &ec).map_err(runtime)?;
    emit_plot_script(PlotData::Eval(&report), &common.out_dir, "eval")?;
    for m in Method::ALL {
        if let (Some(cap), Some(t)) = (report.mean_capacity(m), report.median_wall_time(m)) {
            println!("{m}: mean capacity {cap:.6e} bit/s, median wall time {t:.3e} s");
        }
    }
    Ok(())
}

fn cmd_oracle(common: &Common) -> Result<(), Failure> {
    let cfg = setup(common)?;
    if cfg.eval.links > BRUTE_FORCE_MAX_LINKS {
        return Err(Failure::Validation(format!(
            "oracle is limited to {BRUTE_FORCE_MAX_LINKS} links, eval.links = {}",
            cfg.eval.links
        )));
    }
    let instances = eval_instances(&cfg)?;
    write_file(&common.out_dir.join("oracle.csv"), |w| {
        writeln!(w, "instance_id,active,beamwidth_deg,sum_capacity_bps")?;
        for (id, links) in instances.iter().enumerate() {
            let coupling = LinkCoupling::new(links, &cfg.rf).map_err(std::io::Error::other)?;
            let (d, cap) = brute_force(&coupling).map_err(std::io::Error::other)?;
            let active: Vec<&str> = d
                .active
                .iter()
                .map(|&a| if a { "1" } else { "0" })
                .collect();
            let widths: Vec<String> = d.beamwidth_deg.iter().map(u8::to_string).collect();
            writeln!(w, "{id},{},{},{cap}", active.join(" "), widths.join(" "))?;
        }
        Ok(())
    })?;
    println!("{} instances written to oracle.csv", instances.len());
    Ok(())
}

fn cmd_fuzz(common: &Common, events: Option<usize>) -> Result<(), Failure> {
    let cfg = setup(common)?;
    let fc = FuzzConfig {
        vehicles: cfg.fuzz.vehicles,
        events: events.unwrap_or(cfg.fuzz.events),
        max_burst: cfg.fuzz.max_burst,
        area_m: cfg.fuzz.area_m,
        drop_probability: cfg.fuzz.drop_probability,
        seed: cfg.seed,
    };
    if fc.events == 0 {
        return Err(Failure::Validation("--events must be >= 1".into()));
    }
    let report = fuzz_topology(&fc).map_err(runtime)?;
    write_file(&common.out_dir.join("fuzz.csv"), |w| {
        writeln!(
            w,
            "seed,events,quiescent_points,final_groups,messages_sent,sim_time_s"
        )?;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fc.seed,
            report.events_applied,
            report.quiescent_points,
            report.final_groups,
            report.messages_sent,
            report.sim_time_s
        )
    })?;
    println!(
        "{} events, {} quiescent points, invariants held; {} groups at the end",
        report.events_applied, report.quiescent_points, report.final_groups
    );
    Ok(())
}
