//! `warp-lnn`: train logic networks, compile them to LUT netlists, and
//! evaluate or inspect the netlists.
//!
//! Option precedence is flags > config file > built-in defaults. Every command
//! writes only to the paths it is given; exit status is 0 on success, 1 on
//! configuration, data or I/O errors, 2 on usage errors and 3 when training
//! diverges.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use warp_lnn::config::{DataConfig, DatasetKind, EncoderKind};
use warp_lnn::datasets::{idx_dir, load_idx_dir, load_source};
use warp_lnn::network::TrainOptions;
use warp_lnn::{build_network, train, Dataset, Error, ForwardMode, Netlist, Network, NetworkConfig, Result};

#[derive(Parser)]
#[command(name = "warp-lnn", version, about = "Walsh-parametrized logic networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network; writes metrics.jsonl, checkpoint.json, model.netlist and config.toml.
    Train(TrainArgs),
    /// Evaluate a netlist on a dataset split and print a JSON report.
    Eval(EvalArgs),
    /// Print gate histograms, table entropy and parameter counts of a netlist.
    Inspect(InspectArgs),
    /// Compile a checkpoint into a netlist.
    Compile(CompileArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Dataset source.
    #[arg(long, value_parser = parse_from_str::<DatasetKind>)]
    dataset: Option<DatasetKind>,
    /// IDX directory (mnist/fashion) or CSV file.
    #[arg(long)]
    data_path: Option<PathBuf>,
    /// Seed of synthetic generation and of the train/validation split.
    #[arg(long)]
    data_seed: Option<u64>,
    /// Use only the first N samples of the source.
    #[arg(long)]
    limit: Option<usize>,
}

impl DataArgs {
    fn apply(&self, data: &mut DataConfig) {
        if let Some(k) = self.dataset {
            if k != data.kind {
                data.path = None;
            }
            data.kind = k;
        }
        if let Some(p) = &self.data_path {
            data.path = Some(p.clone());
        }
        if let Some(s) = self.data_seed {
            data.seed = s;
        }
        if let Some(n) = self.limit {
            data.limit = Some(n);
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Forward mode of every layer.
    #[arg(long, value_parser = parse_from_str::<ForwardMode>)]
    mode: Option<ForwardMode>,
    /// Fan-in of every layer.
    #[arg(long)]
    arity: Option<usize>,
    /// Repeat each declared layer this many times.
    #[arg(long)]
    depth_factor: Option<usize>,
    /// Worker thread cap.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_parser = parse_from_str::<EncoderKind>)]
    encoder: Option<EncoderKind>,
    #[arg(long)]
    bits_per_feature: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Evaluation cadence in steps; 0 evaluates at every epoch end.
    #[arg(long)]
    eval_every: Option<u64>,
    /// Log 0 instead of elapsed time so metrics are byte-reproducible.
    #[arg(long)]
    no_wallclock: bool,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Split {
    /// The 20% validation part of the training source.
    Val,
    /// The 80% training part of the training source.
    Train,
    /// The held-out test archive (mnist/fashion only).
    Test,
    /// Every sample of the training source.
    All,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    netlist: PathBuf,
    /// Configuration whose `[data]` section selects the dataset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "val")]
    split: Split,
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct InspectArgs {
    netlist: PathBuf,
    /// Emit the summary as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CompileArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_from_str<T: std::str::FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Inspect(a) => cmd_inspect(&a),
        Command::Compile(a) => cmd_compile(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Diverged { .. } => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn set_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn effective_config(a: &TrainArgs) -> Result<NetworkConfig> {
    let mut cfg = match &a.config {
        Some(p) => NetworkConfig::load(p)?,
        None => NetworkConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(m) = a.mode {
        cfg.set_mode(m);
    }
    if let Some(n) = a.arity {
        cfg.set_arity(n);
    }
    if let Some(d) = a.depth_factor {
        cfg.depth_factor = d;
    }
    if let Some(k) = a.encoder {
        cfg.encoder.kind = k;
    }
    if let Some(l) = a.bits_per_feature {
        cfg.encoder.bits_per_feature = l;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(e) = a.eval_every {
        cfg.eval_every = e;
    }
    a.data.apply(&mut cfg.data);
    Ok(cfg)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    set_threads(a.threads)?;
    let mut cfg = effective_config(a)?;
    let source = load_source(&cfg.data)?;
    if cfg.classes != source.classes {
        eprintln!("note: using the dataset's {} classes (config had {})", source.classes, cfg.classes);
        cfg.classes = source.classes;
    }
    cfg.validate()?;
    let (train_set, val) = source.split_80_20(cfg.data.seed);
    let mut net = build_network(cfg.clone(), &train_set)?;

    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("config.toml"), cfg.to_toml_string())?;
    let mut metrics = BufWriter::new(fs::File::create(a.out.join("metrics.jsonl"))?);
    let mut opts = TrainOptions::from_config(&net);
    opts.wallclock = !a.no_wallclock;
    let records = train(&mut net, &train_set, &val, &opts, |m| {
        serde_json::to_writer(&mut metrics, m)?;
        metrics.write_all(b"\n")?;
        metrics.flush()?;
        Ok(())
    })?;
    net.save_checkpoint(&a.out.join("checkpoint.json"))?;
    net.compile().save(&a.out.join("model.netlist"))?;
    if let Some(last) = records.last() {
        println!("{}", serde_json::to_string(last)?);
    }
    Ok(())
}

fn eval_dataset(a: &EvalArgs) -> Result<Dataset> {
    let mut data = match &a.config {
        Some(p) => NetworkConfig::load(p)?.data,
        None => DataConfig::default(),
    };
    a.data.apply(&mut data);
    match a.split {
        Split::Test => match data.kind {
            DatasetKind::Mnist | DatasetKind::Fashion => load_idx_dir(&idx_dir(data.kind, data.path.as_deref()), true),
            _ => Err(Error::Config("the test split exists only for mnist and fashion".into())),
        },
        split => {
            let source = load_source(&data)?;
            Ok(match split {
                Split::All => source,
                Split::Train => source.split_80_20(data.seed).0,
                _ => source.split_80_20(data.seed).1,
            })
        }
    }
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    set_threads(a.threads)?;
    let netlist = Netlist::load(&a.netlist)?;
    let ds = eval_dataset(a)?;
    if ds.is_empty() {
        return Err(Error::Dataset("evaluation set is empty".into()));
    }
    let classes = netlist.group_sum.classes;
    if let Some(&bad) = ds.labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Dataset(format!("label {bad} outside the netlist's {classes} classes")));
    }
    let started = Instant::now();
    let pred = netlist.predict_dataset(&ds)?;
    let secs = started.elapsed().as_secs_f64();
    let mut confusion = vec![vec![0u64; classes]; classes];
    for (&y, &p) in ds.labels.iter().zip(&pred) {
        confusion[y][p] += 1;
    }
    let correct: u64 = (0..classes).map(|c| confusion[c][c]).sum();
    let report = json!({
        "netlist": a.netlist.display().to_string(),
        "dataset": ds.provenance,
        "split": split_name(a.split),
        "samples": ds.len(),
        "correct": correct,
        "accuracy": warp_lnn::network::accuracy(&pred, &ds.labels),
        "classes": classes,
        "confusion": confusion,
        "samples_per_sec": ds.len() as f64 / secs.max(1e-9),
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn split_name(s: Split) -> &'static str {
    match s {
        Split::Val => "val",
        Split::Train => "train",
        Split::Test => "test",
        Split::All => "all",
    }
}

fn cmd_inspect(a: &InspectArgs) -> Result<()> {
    let netlist = Netlist::load(&a.netlist)?;
    let summary = netlist.summary();
    if a.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
        return Ok(());
    }
    let mut out = String::new();
    print_summary(&mut out, &a.netlist, &netlist, &summary);
    print!("{out}");
    Ok(())
}

fn print_summary(out: &mut String, path: &Path, netlist: &Netlist, s: &warp_lnn::discrete::NetlistSummary) {
    use std::fmt::Write as _;
    let pct = |c: usize, n: usize| 100.0 * c as f64 / n.max(1) as f64;
    writeln!(out, "netlist {}", path.display()).unwrap();
    writeln!(out, "seed {}  config {}", netlist.seed, if netlist.config_digest.is_empty() { "-" } else { &netlist.config_digest }).unwrap();
    writeln!(
        out,
        "encoder {} features x {} bits = {} inputs",
        s.features,
        s.bits_per_feature,
        s.features * s.bits_per_feature
    )
    .unwrap();
    writeln!(out, "groupsum {} classes x {} nodes, tau {}", s.classes, s.group_size, netlist.group_sum.tau).unwrap();
    let dlgn = if s.dlgn_equivalent_params == usize::MAX { "overflow".to_string() } else { s.dlgn_equivalent_params.to_string() };
    writeln!(out, "parameters warp {}  dlgn-equivalent {}", s.warp_params, dlgn).unwrap();
    for l in &s.layers {
        writeln!(out, "layer {}: {} -> {} nodes", l.index, l.input_width, l.nodes).unwrap();
        let arities: Vec<String> = l
            .arity_counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(n, c)| format!("n={}:{}", n + 1, c))
            .collect();
        writeln!(out, "  arity {}", arities.join(" ")).unwrap();
        writeln!(
            out,
            "  entropy bits mean {:.4} min {:.4} max {:.4}",
            l.entropy_mean, l.entropy_min, l.entropy_max
        )
        .unwrap();
        writeln!(
            out,
            "  constant {} ({:.1}%)  pass-through {} ({:.1}%)",
            l.constant_nodes,
            pct(l.constant_nodes, l.nodes),
            l.pass_through_nodes,
            pct(l.pass_through_nodes, l.nodes)
        )
        .unwrap();
        let two_input = l.arity_counts[1];
        if two_input > 0 {
            writeln!(out, "  gates (two-input nodes):").unwrap();
            for (name, c) in l.gate_histogram() {
                writeln!(out, "    {name:<12} {c:>8} {:>6.1}%", pct(c, two_input)).unwrap();
            }
        }
    }
}

fn cmd_compile(a: &CompileArgs) -> Result<()> {
    let net = Network::load_checkpoint(&a.checkpoint)?;
    net.compile().save(&a.out)
}
