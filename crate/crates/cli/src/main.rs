//! `evico` — command-line workbench for the cross-supervised
//! dual-classifier segmentation method: dataset generation, training,
//! evaluation, the loss ablation, the labeled-ratio sweep, and
//! uncertainty-map export.
//!
//! Every configuration key doubles as a `--key value` flag; flags override
//! the `--config` file, and each run writes its fully-resolved settings so
//! it can be reproduced bit-exactly.

mod config;

use std::collections::BTreeMap;
use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use evico::metrics::{self, SurfaceOptions};
use evico::netmodel::ModelParams;
use evico::synthdata::{self, Dataset};
use evico::trainer::{
    self, ablation_csv, evaluate_model, export_uncertainty_maps, persist_run, run_ablation,
    run_ratio_sweep, sweep_csv, SWEEP_FRACTIONS,
};
use evico::Error;

use config::{describe, AppConfig, SetError, KEY_ORDER};

/// Flags that route files and drivers rather than configuration values.
const RESERVED: [&str; 6] = ["config", "out", "data", "checkpoint", "seeds", "fractions"];

const COMMANDS: [(&str, &str); 6] = [
    ("gen-data", "generate the synthetic benchmark and write it to disk"),
    ("train", "train a model; logs losses, evaluations, and a checkpoint"),
    ("eval", "evaluate a checkpoint on a dataset's test split"),
    ("ablate", "run the five-setting loss ablation"),
    ("sweep", "compare supervised baseline vs full method across labeled fractions"),
    ("export-maps", "write confidence graymaps and contour overlays for the test split"),
];

fn main() {
    let args: Vec<String> = env::args().skip(1).collect();
    std::process::exit(run(&args));
}

/// Errors split by exit code: usage problems (2) vs application errors
/// (config 3, anything else 1).
enum CliError {
    Usage(String),
    App(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::App(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn run(args: &[String]) -> i32 {
    match dispatch(args) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: usage: {msg}");
            2
        }
        Err(CliError::App(e)) => match e {
            Error::Config(_) | Error::Format { .. } => {
                eprintln!("error: config: {e}");
                3
            }
            other => {
                eprintln!("error: runtime: {other}");
                1
            }
        },
    }
}

fn dispatch(args: &[String]) -> CliResult<()> {
    let Some(command) = args.first() else {
        print_help(None);
        return Ok(());
    };
    match command.as_str() {
        "--help" | "-h" | "help" => {
            print_help(None);
            Ok(())
        }
        "gen-data" | "train" | "eval" | "ablate" | "sweep" | "export-maps" => {
            command_entry(command, &args[1..])
        }
        other => Err(CliError::Usage(format!(
            "unknown command '{other}' (expected one of: gen-data, train, eval, ablate, \
             sweep, export-maps)"
        ))),
    }
}

fn command_entry(command: &str, rest: &[String]) -> CliResult<()> {
    let flags = parse_flags(rest)?;
    if flags.iter().any(|(k, _)| k == "help") {
        print_help(Some(command));
        return Ok(());
    }
    let (cfg, reserved) = resolve_config(&flags)?;
    let out = out_dir(&reserved, command);
    match command {
        "gen-data" => cmd_gen_data(cfg, &out),
        "train" => cmd_train(cfg, &reserved, &out),
        "eval" => cmd_eval(cfg, &reserved, &out),
        "ablate" => cmd_ablate(cfg, &reserved, &out),
        "sweep" => cmd_sweep(cfg, &reserved, &out),
        "export-maps" => cmd_export_maps(cfg, &reserved, &out),
        _ => unreachable!("dispatch filters commands"),
    }
}

/// Splits the argument list into `(key, value)` pairs. Accepts
/// `--key=value` and `--key value`; flag names map to config keys by
/// turning hyphens into underscores (dots stay).
fn parse_flags(args: &[String]) -> CliResult<Vec<(String, String)>> {
    let mut flags = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let arg = &args[i];
        if arg == "--help" || arg == "-h" {
            flags.push(("help".into(), String::new()));
            i += 1;
            continue;
        }
        let Some(body) = arg.strip_prefix("--") else {
            return Err(CliError::Usage(format!("unexpected argument '{arg}'")));
        };
        if let Some((key, value)) = body.split_once('=') {
            flags.push((normalize_key(key), value.to_string()));
            i += 1;
        } else {
            let Some(value) = args.get(i + 1) else {
                return Err(CliError::Usage(format!("flag --{body} needs a value")));
            };
            flags.push((normalize_key(body), value.clone()));
            i += 2;
        }
    }
    Ok(flags)
}

fn normalize_key(key: &str) -> String {
    key.replace('-', "_")
}

/// Builds the effective config: defaults, then the `--config` file, then
/// the remaining flags in order. Reserved routing flags come back
/// separately.
fn resolve_config(
    flags: &[(String, String)],
) -> CliResult<(AppConfig, BTreeMap<String, String>)> {
    let mut cfg = AppConfig::default();
    let mut reserved = BTreeMap::new();
    for (key, value) in flags {
        if RESERVED.contains(&key.as_str()) {
            reserved.insert(key.clone(), value.clone());
        }
    }
    if let Some(path) = reserved.get("config") {
        config::apply_file(&mut cfg, Path::new(path))?;
    }
    for (key, value) in flags {
        if RESERVED.contains(&key.as_str()) {
            continue;
        }
        match cfg.set(key, value) {
            Ok(()) => {}
            Err(SetError::UnknownKey) => {
                return Err(CliError::Usage(format!("unknown flag --{key}")));
            }
            Err(SetError::Invalid(detail)) => {
                return Err(CliError::App(Error::Config(detail)));
            }
        }
    }
    cfg.validate()?;
    Ok((cfg, reserved))
}

/// Output directory: `--out`, else `$EVICO_OUT/<command>`, else
/// `./evico-out/<command>`.
fn out_dir(reserved: &BTreeMap<String, String>, command: &str) -> PathBuf {
    if let Some(dir) = reserved.get("out") {
        return PathBuf::from(dir);
    }
    match env::var("EVICO_OUT") {
        Ok(root) if !root.is_empty() => PathBuf::from(root).join(command),
        _ => PathBuf::from("evico-out").join(command),
    }
}

/// Loads `--data` if given (adopting its recipe into the resolved config),
/// otherwise generates the dataset the config describes.
fn obtain_dataset(
    cfg: &mut AppConfig,
    reserved: &BTreeMap<String, String>,
) -> CliResult<Dataset> {
    match reserved.get("data") {
        Some(dir) => {
            let dataset = synthdata::load(Path::new(dir))?;
            cfg.data = dataset.spec.clone();
            Ok(dataset)
        }
        None => Ok(synthdata::generate(&cfg.data)?),
    }
}

fn write_resolved(dir: &Path, cfg: &AppConfig) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("config.resolved");
    fs::write(&path, cfg.serialize()).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

fn write_file(dir: &Path, name: &str, content: &str) -> CliResult<()> {
    let path = dir.join(name);
    fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

fn require<'a>(
    reserved: &'a BTreeMap<String, String>,
    key: &str,
    command: &str,
) -> CliResult<&'a String> {
    reserved
        .get(key)
        .ok_or_else(|| CliError::Usage(format!("{command} needs --{key}")))
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> CliResult<Vec<T>> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<T>()
                .map_err(|_| CliError::App(Error::Config(format!("bad {what} '{tok}'"))))
        })
        .collect()
}

fn cmd_gen_data(cfg: AppConfig, out: &Path) -> CliResult<()> {
    let dataset = synthdata::generate(&cfg.data)?;
    synthdata::dump(&dataset, out)?;
    write_resolved(out, &cfg)?;
    println!(
        "wrote {} train ({} labeled) / {} test samples to {}",
        dataset.train.len(),
        dataset.labeled_indices().len(),
        dataset.test.len(),
        out.display()
    );
    Ok(())
}

fn cmd_train(
    mut cfg: AppConfig,
    reserved: &BTreeMap<String, String>,
    out: &Path,
) -> CliResult<()> {
    let dataset = obtain_dataset(&mut cfg, reserved)?;
    let (model, mut record) = trainer::train(&cfg.train, &dataset)?;
    write_resolved(out, &cfg)?;
    persist_run(out, &model, &mut record)?;
    let fin = record
        .final_eval()
        .ok_or_else(|| Error::Contract("training produced no final evaluation".into()))?;
    println!(
        "trained {} iterations in {:.1}s; final dice {:.2}% jaccard {:.2}% asd {:.2} \
         hd95 {:.2}; artifacts in {}",
        cfg.train.max_iterations,
        record.duration.as_secs_f64(),
        fin.dice,
        fin.jaccard,
        fin.asd,
        fin.hd95,
        out.display()
    );
    Ok(())
}

fn cmd_eval(
    mut cfg: AppConfig,
    reserved: &BTreeMap<String, String>,
    out: &Path,
) -> CliResult<()> {
    let checkpoint = require(reserved, "checkpoint", "eval")?;
    let model = ModelParams::<f64>::load(Path::new(checkpoint))?;
    let dataset = obtain_dataset(&mut cfg, reserved)?;
    let eval = evaluate_model(
        &model,
        &dataset.test,
        cfg.train.eval_head,
        cfg.train.activation,
        SurfaceOptions { pooled: cfg.train.pooled_percentiles },
    )?;
    write_resolved(out, &cfg)?;
    write_file(out, "metrics.csv", &metrics::to_csv(&eval))?;
    println!("{}", eval.summary());
    Ok(())
}

fn cmd_ablate(
    mut cfg: AppConfig,
    reserved: &BTreeMap<String, String>,
    out: &Path,
) -> CliResult<()> {
    let seeds: Vec<u64> = match reserved.get("seeds") {
        Some(list) => parse_list(list, "seed")?,
        None => vec![1, 2, 3],
    };
    let dataset = obtain_dataset(&mut cfg, reserved)?;
    let rows = run_ablation(&cfg.train, &dataset, &seeds)?;
    let table = ablation_csv(&rows);
    write_resolved(out, &cfg)?;
    write_file(out, "ablation.csv", &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_sweep(
    cfg: AppConfig,
    reserved: &BTreeMap<String, String>,
    out: &Path,
) -> CliResult<()> {
    let fractions: Vec<f64> = match reserved.get("fractions") {
        Some(list) => parse_list(list, "fraction")?,
        None => SWEEP_FRACTIONS.to_vec(),
    };
    let rows = run_ratio_sweep(&cfg.train, &cfg.data, &fractions)?;
    let table = sweep_csv(&rows);
    write_resolved(out, &cfg)?;
    write_file(out, "sweep.csv", &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_export_maps(
    mut cfg: AppConfig,
    reserved: &BTreeMap<String, String>,
    out: &Path,
) -> CliResult<()> {
    let checkpoint = require(reserved, "checkpoint", "export-maps")?;
    let model = ModelParams::<f64>::load(Path::new(checkpoint))?;
    let dataset = obtain_dataset(&mut cfg, reserved)?;
    let written = export_uncertainty_maps(&model, &dataset.test, cfg.train.activation, out)?;
    write_resolved(out, &cfg)?;
    println!("wrote {} map files to {}", written.len(), out.display());
    Ok(())
}

fn print_help(command: Option<&str>) {
    match command {
        None => {
            println!("evico — cross-supervised dual-classifier segmentation workbench");
            println!();
            println!("usage: evico <command> [--flag value | --flag=value ...]");
            println!();
            println!("commands:");
            for (name, blurb) in COMMANDS {
                println!("  {name:<12} {blurb}");
            }
        }
        Some(name) => {
            println!("usage: evico {name} [--flag value | --flag=value ...]");
        }
    }
    println!();
    println!("routing flags:");
    println!("  --config <file>      apply a `key = value` settings file before other flags");
    println!("  --out <dir>          output directory (default $EVICO_OUT/<command>, else ./evico-out/<command>)");
    println!("  --data <dir>         load a generated dataset instead of regenerating (sweep regenerates per fraction)");
    println!("  --checkpoint <file>  model checkpoint to load (eval, export-maps)");
    println!("  --seeds <a,b,...>    seeds for ablate (default 1,2,3)");
    println!("  --fractions <list>   labeled fractions for sweep (default 0.05,0.1,0.15,0.2,0.25)");
    println!("  --help               this text");
    println!();
    println!("configuration keys (defaults shown; each is also a --key flag):");
    let defaults = AppConfig::default();
    for key in KEY_ORDER {
        let value = defaults.get(key).expect("every listed key has a default");
        println!("  {:<24} {}", format!("{key} = {value}"), describe(key));
    }
    println!();
    println!("exit codes: 0 success, 1 runtime failure, 2 usage error, 3 invalid configuration");
}
