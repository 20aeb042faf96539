//! Command-line surface: key generation, data prep, training, the epsilon
//! sweep, the attack harness, and ownership verification.
//!
//! Exit codes: 0 success / OWNED, 1 verification failure, 2 config error,
//! 3 runtime abort.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use isnn::attacks::{forge_attack, retrain_attack, uap_attack, AttackConfig, AttackReport, UapConfig};
use isnn::datapipe::{
    build_illegal, build_legal, load_idx, load_isds, save_isds, synth, LabelMode, LabeledDataset,
};
use isnn::evaluator::{
    accuracy, compute_baseline, design_goal_report, report_table, verify_ownership, GoalInputs,
    LabelSource,
};
use isnn::keying::{
    derive_perturbation, encrypt_copyright, generate_key, read_key_file, write_key_file,
    KeyMaterial, NoiseType,
};
use isnn::nn::cnn_s;
use isnn::pgm::{read_pgm, write_pgm, GrayImage};
use isnn::plot::{line_plot, Series};
use isnn::rng::{namespaced_seed, per_index_seed};
use isnn::trainer::{
    history_to_csv, load_checkpoint, save_checkpoint, train_isnn, train_plain, CheckpointMeta,
    EvalSets, IllegalSpec, LambdaMode, Method, TrainConfig, TrainOutcome,
};

#[derive(Parser)]
#[command(name = "isnn", version, about = "Input-sensitive neural network toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a 48-byte key file (256-bit key + 128-bit nonce).
    Keygen {
        #[arg(long)]
        out: PathBuf,
        /// Deterministic key derivation for reproducible runs.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
    },
    /// Generate the built-in synthetic digit corpus plus a copyright mark.
    SynthData {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 4000)]
        train: usize,
        #[arg(long, default_value_t = 1000)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a protected (or plain) model from a JSON run config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train the (method x epsilon) grid and emit the summary table.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated intensities, e.g. 1,2,4,8,16.
        #[arg(long, default_value = "1,2,4,8,16")]
        epsilons: String,
    },
    /// Run one adversary against a checkpoint.
    Attack {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        config: PathBuf,
    },
    /// Verify ownership of a checkpoint with a key and copyright image.
    Verify {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        copyright: PathBuf,
        /// Clean holdout dataset (ISDS), disjoint from training data.
        #[arg(long)]
        holdout: PathBuf,
        #[arg(long, default_value_t = 0.30)]
        tau: f64,
        /// Defaults to the intensity recorded in the checkpoint.
        #[arg(long)]
        epsilon: Option<i64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

// ---------------------------------------------------------------------------
// Run configuration

fn default_lambda() -> f64 {
    1.0
}
fn default_lambda_mode() -> String {
    "fixed".into()
}
fn default_tau() -> f64 {
    0.30
}
fn default_fraction() -> f64 {
    0.1
}
fn default_iters() -> usize {
    10
}
fn default_attack_kind() -> String {
    "any".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataSection {
    #[serde(default)]
    train_isds: Option<PathBuf>,
    #[serde(default)]
    test_isds: Option<PathBuf>,
    #[serde(default)]
    train_images_idx: Option<PathBuf>,
    #[serde(default)]
    train_labels_idx: Option<PathBuf>,
    #[serde(default)]
    test_images_idx: Option<PathBuf>,
    #[serde(default)]
    test_labels_idx: Option<PathBuf>,
    key_file: PathBuf,
    copyright_pgm: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    arch: String,
    num_classes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IsnnSection {
    /// "lc", "li" or "plain".
    method: String,
    epsilon: i64,
    #[serde(default = "default_lambda")]
    lambda: f64,
    #[serde(default = "default_lambda_mode")]
    lambda_mode: String,
    /// Stamp a fresh illegal noise field every epoch instead of a fixed set.
    #[serde(default)]
    refresh_illegal: bool,
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    epochs: usize,
    lr: f64,
    momentum: f64,
    batch_size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttackSection {
    #[serde(default = "default_attack_kind")]
    kind: String,
    #[serde(default = "default_fraction")]
    fraction: f64,
    #[serde(default = "default_iters")]
    iters: usize,
    #[serde(default)]
    alpha: Option<f64>,
    /// Fine-tuning epochs for retrain/forge; defaults to 2x defender epochs.
    #[serde(default)]
    epochs: Option<usize>,
}

fn default_attack_section() -> AttackSection {
    AttackSection {
        kind: default_attack_kind(),
        fraction: default_fraction(),
        iters: default_iters(),
        alpha: None,
        epochs: None,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalSection {
    /// Unprotected optimum; measured by an internal plain run when absent.
    #[serde(default)]
    p_opt: Option<f64>,
    #[serde(default = "default_tau")]
    tau: f64,
}

fn default_eval_section() -> EvalSection {
    EvalSection {
        p_opt: None,
        tau: default_tau(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutSection {
    dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    data: DataSection,
    model: ModelSection,
    isnn: IsnnSection,
    train: TrainSection,
    #[serde(default = "default_attack_section")]
    attack: AttackSection,
    #[serde(default = "default_eval_section")]
    eval: EvalSection,
    out: OutSection,
}

// ---------------------------------------------------------------------------
// Error-to-exit-code plumbing

enum CliError {
    Config(String),
    Runtime(String),
    NotOwned,
}

impl From<isnn::IsnnError> for CliError {
    fn from(e: isnn::IsnnError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn config_err<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::NotOwned) => ExitCode::from(1),
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.cmd {
        Cmd::Keygen { out, seed, force } => cmd_keygen(&out, seed, force),
        Cmd::SynthData {
            out_dir,
            train,
            test,
            seed,
        } => cmd_synth_data(&out_dir, train, test, seed),
        Cmd::Train { config } => cmd_train(&config),
        Cmd::Sweep { config, epsilons } => cmd_sweep(&config, &epsilons),
        Cmd::Attack {
            checkpoint,
            kind,
            config,
        } => cmd_attack(&checkpoint, &kind, &config),
        Cmd::Verify {
            checkpoint,
            key,
            copyright,
            holdout,
            tau,
            epsilon,
            seed,
        } => cmd_verify(&checkpoint, &key, &copyright, &holdout, tau, epsilon, seed),
    }
}

// ---------------------------------------------------------------------------
// Commands

fn cmd_keygen(out: &Path, seed: Option<u64>, force: bool) -> CliResult<()> {
    let entropy: Vec<u8> = match seed {
        Some(s) => {
            let mut rng = isnn::rng::chacha(s);
            (0..48).map(|_| rand::Rng::random::<u8>(&mut rng)).collect()
        }
        None => {
            let mut buf = vec![0u8; 48];
            getrandom_fill(&mut buf)?;
            buf
        }
    };
    let km = generate_key(&entropy)?;
    write_key_file(out, &km, force)?;
    println!("wrote {}", out.display());
    Ok(())
}

/// OS randomness via the rand crate's thread rng.
fn getrandom_fill(buf: &mut [u8]) -> CliResult<()> {
    rand::Rng::fill(&mut rand::rng(), buf);
    Ok(())
}

fn cmd_synth_data(out_dir: &Path, train: usize, test: usize, seed: u64) -> CliResult<()> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let train_ds = synth::generate(train, per_index_seed(seed, 0))?;
    let test_ds = synth::generate(test, per_index_seed(seed, 1))?;
    save_isds(&train_ds, &out_dir.join("train.isds"))?;
    save_isds(&test_ds, &out_dir.join("test.isds"))?;
    write_pgm(&out_dir.join("copyright.pgm"), &synth::copyright_image(28))?;
    println!(
        "wrote {} train / {} test samples and copyright.pgm to {}",
        train,
        test,
        out_dir.display()
    );
    Ok(())
}

fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let cfg: RunConfig = match serde_json::from_str(&text) {
        Ok(c) => c,
        Err(e) => return config_err(format!("{}: {e}", path.display())),
    };
    if !matches!(cfg.isnn.method.as_str(), "lc" | "li" | "plain") {
        return config_err(format!(
            "isnn.method must be lc, li or plain, got {:?}",
            cfg.isnn.method
        ));
    }
    if !matches!(cfg.isnn.lambda_mode.as_str(), "fixed" | "ratio") {
        return config_err(format!(
            "isnn.lambda_mode must be fixed or ratio, got {:?}",
            cfg.isnn.lambda_mode
        ));
    }
    if cfg.model.arch != "cnn-s" {
        return config_err(format!("model.arch: only cnn-s is available, got {:?}", cfg.model.arch));
    }
    if !(0..=16).contains(&cfg.isnn.epsilon) {
        return config_err(format!("isnn.epsilon must be in 0..=16, got {}", cfg.isnn.epsilon));
    }
    Ok(cfg)
}

fn load_split(data: &DataSection, split: &str) -> CliResult<LabeledDataset> {
    let (isds, images, labels) = if split == "train" {
        (&data.train_isds, &data.train_images_idx, &data.train_labels_idx)
    } else {
        (&data.test_isds, &data.test_images_idx, &data.test_labels_idx)
    };
    match (isds, images, labels) {
        (Some(p), _, _) => Ok(load_isds(p)?),
        (None, Some(im), Some(lb)) => Ok(load_idx(im, lb)?),
        _ => config_err(format!(
            "data.{split}: provide either {split}_isds or both {split}_images_idx and {split}_labels_idx"
        )),
    }
}

fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(format!("{:x}", h.finalize()))
}

fn write_text(path: &Path, content: &str) -> CliResult<()> {
    fs::write(path, content).map_err(|e| io_err(path, e))
}

/// Resolved config + input hashes into the output directory, so every run is
/// self-describing.
fn write_provenance(cfg: &RunConfig, out_dir: &Path) -> CliResult<()> {
    let resolved = serde_json::to_string_pretty(cfg).expect("config serializes");
    write_text(&out_dir.join("resolved-config.json"), &resolved)?;
    let mut hashes = serde_json::Map::new();
    let mut push = |name: &str, p: &Option<PathBuf>| -> CliResult<()> {
        if let Some(p) = p {
            hashes.insert(name.into(), sha256_file(p)?.into());
        }
        Ok(())
    };
    push("train_isds", &cfg.data.train_isds)?;
    push("test_isds", &cfg.data.test_isds)?;
    push("train_images_idx", &cfg.data.train_images_idx)?;
    push("train_labels_idx", &cfg.data.train_labels_idx)?;
    push("test_images_idx", &cfg.data.test_images_idx)?;
    push("test_labels_idx", &cfg.data.test_labels_idx)?;
    push("key_file", &Some(cfg.data.key_file.clone()))?;
    push("copyright_pgm", &Some(cfg.data.copyright_pgm.clone()))?;
    let manifest = serde_json::json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "input_sha256": hashes,
    });
    write_text(
        &out_dir.join("inputs.json"),
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
}

fn train_config_from(cfg: &RunConfig, method: Method, epsilon: i64, seed: u64) -> TrainConfig {
    TrainConfig {
        method,
        lambda: cfg.isnn.lambda,
        lambda_mode: if cfg.isnn.lambda_mode == "ratio" {
            LambdaMode::Ratio
        } else {
            LambdaMode::Fixed
        },
        epsilon,
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        learning_rate: cfg.train.lr,
        momentum: cfg.train.momentum,
        seed,
        ..TrainConfig::default()
    }
}

/// Measure the unprotected optimum, either from config or a plain run.
fn resolve_p_opt(
    cfg: &RunConfig,
    clean_train: &LabeledDataset,
    clean_test: &LabeledDataset,
) -> CliResult<f64> {
    if let Some(p) = cfg.eval.p_opt {
        return Ok(p);
    }
    eprintln!("eval.p_opt not given; measuring it with a plain training run");
    let mut model = cnn_s(clean_train.shape, cfg.model.num_classes)?;
    model.init_kaiming(namespaced_seed(cfg.isnn.seed, "plain-baseline"));
    let tc = train_config_from(cfg, Method::Lc, 0, namespaced_seed(cfg.isnn.seed, "plain-baseline"));
    let out = train_plain(model, clean_train, &EvalSets::default(), &tc)?;
    Ok(accuracy(&out.model, clean_test, LabelSource::True)?)
}

fn cmd_train(config_path: &Path) -> CliResult<()> {
    let cfg = load_config(config_path)?;
    let out_dir = cfg.out.dir.clone();
    fs::create_dir_all(&out_dir).map_err(|e| io_err(&out_dir, e))?;
    write_provenance(&cfg, &out_dir)?;

    let clean_train = load_split(&cfg.data, "train")?;
    let clean_test = load_split(&cfg.data, "test")?;
    let key = read_key_file(&cfg.data.key_file)?;
    let mark = read_pgm(&cfg.data.copyright_pgm)?;
    let seed = cfg.isnn.seed;

    let mut model = cnn_s(clean_train.shape, cfg.model.num_classes)?;
    model.init_kaiming(namespaced_seed(seed, "init"));

    if cfg.isnn.method == "plain" {
        let tc = train_config_from(&cfg, Method::Lc, 0, seed);
        let eval = EvalSets {
            clean: Some(&clean_test),
            ..EvalSets::default()
        };
        let out = train_plain(model, &clean_train, &eval, &tc)?;
        check_abort(&out)?;
        let p_opt = accuracy(&out.model, &clean_test, LabelSource::True)?;
        let baseline_t = compute_baseline(p_opt)?;
        let meta = CheckpointMeta {
            method: None,
            epsilon: 0,
            seed,
            epochs_trained: out.history.len(),
            sha256_m: None,
            baseline_t: Some(baseline_t),
        };
        save_checkpoint(&out_dir.join("model.isnn"), &out.model, &meta)?;
        write_text(&out_dir.join("history.csv"), &history_to_csv(&out.history))?;
        let report = serde_json::json!({ "p_opt": p_opt, "baseline_t": baseline_t });
        write_text(
            &out_dir.join("report.json"),
            &serde_json::to_string_pretty(&report).expect("serializes"),
        )?;
        println!("plain model: p_opt {p_opt:.4}, baseline {baseline_t:.4}");
        return Ok(());
    }

    let epsilon = cfg.isnn.epsilon;
    if epsilon == 0 {
        eprintln!("warning: epsilon = 0 stamps nothing; protection is void and D_T equals the clean data");
    }
    let (method, label_mode) = if cfg.isnn.method == "li" {
        (Method::Li, LabelMode::Li)
    } else {
        (Method::Lc, LabelMode::Lc)
    };

    let payload = encrypt_copyright(&key, &mark, clean_train.shape)?;
    let delta = derive_perturbation(&payload, epsilon)?;
    let legal_train = build_legal(&clean_train, &delta)?;
    let legal_test = build_legal(&clean_test, &delta)?;
    let illegal_train = build_illegal(
        &clean_train,
        epsilon,
        NoiseType::Uniform,
        label_mode,
        namespaced_seed(seed, "illegal-train"),
    )?;
    let illegal_test = build_illegal(
        &clean_test,
        epsilon,
        NoiseType::Uniform,
        LabelMode::Lc,
        namespaced_seed(seed, "illegal-test"),
    )?;

    let p_opt = resolve_p_opt(&cfg, &clean_train, &clean_test)?;
    let baseline_t = compute_baseline(p_opt)?;

    let tc = train_config_from(&cfg, method, epsilon, seed);
    let eval = EvalSets {
        legal: Some(&legal_test),
        illegal: Some(&illegal_test),
        clean: Some(&clean_test),
    };
    let illegal_spec = if cfg.isnn.refresh_illegal {
        IllegalSpec::RefreshedPerEpoch {
            clean: &clean_train,
            noise: NoiseType::Uniform,
            mode: label_mode,
        }
    } else {
        IllegalSpec::Fixed(&illegal_train)
    };
    let out = train_isnn(model, &legal_train, &illegal_spec, &eval, &tc)?;
    check_abort(&out)?;

    let meta = CheckpointMeta {
        method: Some(method),
        epsilon,
        seed,
        epochs_trained: out.history.len(),
        sha256_m: Some(payload.sha256_hex()),
        baseline_t: Some(baseline_t),
    };
    save_checkpoint(&out_dir.join("model.isnn"), &out.model, &meta)?;
    write_text(&out_dir.join("history.csv"), &history_to_csv(&out.history))?;

    let sets = GoalInputs {
        legal: &legal_test,
        illegal: &illegal_test,
        clean: &clean_test,
        holdout: &clean_test,
    };
    let report = design_goal_report(
        &out.model,
        &key,
        &payload,
        &mark,
        &sets,
        p_opt,
        epsilon,
        &[],
        cfg.eval.tau,
        namespaced_seed(seed, "verify"),
    )?;
    write_text(
        &out_dir.join("report.json"),
        &serde_json::to_string_pretty(&report).expect("serializes"),
    )?;
    let table = report_table(&report);
    write_text(&out_dir.join("report.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn check_abort(out: &TrainOutcome) -> CliResult<()> {
    if let Some(why) = &out.aborted {
        return Err(CliError::Runtime(format!("training aborted: {why}")));
    }
    Ok(())
}

fn cmd_sweep(config_path: &Path, epsilons: &str) -> CliResult<()> {
    let base = load_config(config_path)?;
    let eps_list: Vec<i64> = epsilons
        .split(',')
        .map(|s| s.trim().parse::<i64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("--epsilons: {e}")))?;
    if eps_list.iter().any(|e| !(0..=16).contains(e)) {
        return config_err("--epsilons values must be in 0..=16");
    }
    let out_dir = base.out.dir.clone();
    fs::create_dir_all(&out_dir).map_err(|e| io_err(&out_dir, e))?;

    let clean_train = load_split(&base.data, "train")?;
    let clean_test = load_split(&base.data, "test")?;
    let p_opt = resolve_p_opt(&base, &clean_train, &clean_test)?;

    let mut csv = String::from("method,epsilon,acc_legal,acc_illegal,acc_clean\n");
    let mut text = format!(
        "p_opt {:.4}  baseline {:.4}\n{:<6} {:>3}  {:>8} {:>8} {:>8}\n",
        p_opt,
        compute_baseline(p_opt)?,
        "method",
        "eps",
        "D_T",
        "D_F",
        "D"
    );
    let sweep_seed = namespaced_seed(base.isnn.seed, "sweep");
    for (mi, method) in ["lc", "li"].iter().enumerate() {
        for (ei, &eps) in eps_list.iter().enumerate() {
            let cell = (mi * eps_list.len() + ei) as u64;
            let mut cfg = base.clone();
            cfg.isnn.method = method.to_string();
            cfg.isnn.epsilon = eps;
            cfg.isnn.seed = per_index_seed(sweep_seed, cell);
            cfg.eval.p_opt = Some(p_opt);
            cfg.out.dir = out_dir.join(format!("{method}-eps{eps}"));
            let tmp = out_dir.join(format!("{method}-eps{eps}.json"));
            write_text(&tmp, &serde_json::to_string_pretty(&cfg).expect("serializes"))?;
            cmd_train(&tmp)?;
            // Re-read the cell's report for the three accuracies.
            let report: serde_json::Value = serde_json::from_str(
                &fs::read_to_string(cfg.out.dir.join("report.json"))
                    .map_err(|e| io_err(&cfg.out.dir, e))?,
            )
            .map_err(|e| CliError::Runtime(e.to_string()))?;
            let g = |k: &str| report[k].as_f64().unwrap_or(f64::NAN);
            let (dt, df, dc) = (g("p_buyer"), g("p_adv_illegal"), g("p_adv_clean"));
            csv.push_str(&format!("{method},{eps},{dt},{df},{dc}\n"));
            text.push_str(&format!(
                "{method:<6} {eps:>3}  {dt:>8.4} {df:>8.4} {dc:>8.4}\n"
            ));
        }
    }
    write_text(&out_dir.join("sweep.csv"), &csv)?;
    write_text(&out_dir.join("sweep.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_attack(checkpoint: &Path, kind: &str, config_path: &Path) -> CliResult<()> {
    let cfg = load_config(config_path)?;
    if cfg.attack.kind != "any" && cfg.attack.kind != kind {
        return config_err(format!(
            "--kind {kind} conflicts with attack.kind {:?} in the config",
            cfg.attack.kind
        ));
    }
    let ckpt = load_checkpoint(checkpoint)?;
    let out_dir = cfg.out.dir.clone();
    fs::create_dir_all(&out_dir).map_err(|e| io_err(&out_dir, e))?;
    write_provenance(&cfg, &out_dir)?;

    let clean_train = load_split(&cfg.data, "train")?;
    let clean_test = load_split(&cfg.data, "test")?;
    let key = read_key_file(&cfg.data.key_file)?;
    let mark = read_pgm(&cfg.data.copyright_pgm)?;
    let epsilon = if ckpt.meta.epsilon > 0 {
        ckpt.meta.epsilon
    } else {
        cfg.isnn.epsilon
    };
    let baseline_t = match (ckpt.meta.baseline_t, cfg.eval.p_opt) {
        (Some(t), _) => t,
        (None, Some(p)) => compute_baseline(p)?,
        (None, None) => {
            return config_err("checkpoint has no baseline and eval.p_opt is not set")
        }
    };

    // The owner's keyed test set, used to watch whether the mark survives.
    let payload = encrypt_copyright(&key, &mark, clean_test.shape)?;
    let delta = derive_perturbation(&payload, epsilon)?;
    let legal_test = build_legal(&clean_test, &delta)?;

    let acfg = AttackConfig {
        epochs: cfg.attack.epochs.unwrap_or(cfg.train.epochs * 2),
        batch_size: cfg.train.batch_size,
        learning_rate: cfg.train.lr,
        momentum: cfg.train.momentum,
        seed: cfg.isnn.seed,
    };
    let report: AttackReport = match kind {
        "retrain" => {
            let (_, report) = retrain_attack(
                &ckpt.model,
                &clean_train,
                &clean_test,
                Some(&legal_test),
                baseline_t,
                &acfg,
            )?;
            report
        }
        "forge" => {
            let (_, report) = forge_attack(
                &ckpt.model,
                &clean_train,
                &clean_test,
                Some(&legal_test),
                epsilon,
                baseline_t,
                &acfg,
            )?;
            report
        }
        "uap" => {
            let ucfg = UapConfig {
                epsilon,
                iterations: cfg.attack.iters,
                alpha: cfg.attack.alpha,
                batch_size: cfg.train.batch_size,
                data_fraction: cfg.attack.fraction,
                seed: cfg.isnn.seed,
            };
            let (state, report) =
                uap_attack(&ckpt.model, &clean_train, &clean_test, baseline_t, &ucfg, None)?;
            write_text(
                &out_dir.join("uap-state.json"),
                &serde_json::to_string_pretty(&state).expect("serializes"),
            )?;
            report
        }
        other => return config_err(format!("unknown attack kind {other:?}")),
    };

    write_text(
        &out_dir.join(format!("attack-{kind}.json")),
        &serde_json::to_string_pretty(&report).expect("serializes"),
    )?;
    write_text(&out_dir.join(format!("attack-{kind}.csv")), &report.to_csv())?;
    let mut series = Vec::new();
    let mut push = |name: &str, get: fn(&isnn::attacks::AttackRow) -> f64| {
        let pts: Vec<(f64, f64)> = report
            .rows
            .iter()
            .map(|r| (r.step as f64, get(r)))
            .collect();
        if pts.iter().any(|(_, y)| y.is_finite()) {
            series.push(Series {
                name: name.into(),
                points: pts,
            });
        }
    };
    push("clean", |r| r.acc_clean);
    push("legal", |r| r.acc_legal);
    push("attacker", |r| r.acc_attacker);
    let svg = line_plot(
        &format!("{kind} attack"),
        "epoch",
        "accuracy",
        &series,
    )?;
    write_text(&out_dir.join(format!("attack-{kind}.svg")), &svg)?;
    println!(
        "{kind}: sup adversary accuracy {:.4} vs baseline {:.4} -> {}",
        report.final_adv_accuracy,
        report.baseline_t,
        if report.secure { "SECURE" } else { "INSECURE" }
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    checkpoint: &Path,
    key_path: &Path,
    copyright: &Path,
    holdout: &Path,
    tau: f64,
    epsilon: Option<i64>,
    seed: u64,
) -> CliResult<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let key: KeyMaterial = read_key_file(key_path)?;
    let mark: GrayImage = read_pgm(copyright)?;
    let holdout_ds = load_isds(holdout)?;
    let epsilon = epsilon.unwrap_or(ckpt.meta.epsilon);
    let baseline_t = ckpt.meta.baseline_t.unwrap_or(0.0);

    if let Some(stored) = &ckpt.meta.sha256_m {
        let recomputed = encrypt_copyright(&key, &mark, holdout_ds.shape)?.sha256_hex();
        if &recomputed != stored {
            eprintln!("warning: recomputed ciphertext digest does not match the checkpoint; wrong key or copyright image?");
        }
    }

    let ev = verify_ownership(
        &ckpt.model,
        &key,
        &mark,
        &holdout_ds,
        epsilon,
        tau,
        baseline_t,
        seed,
    )?;
    println!(
        "{}\nacc_legal {:.4}  acc_clean {:.4}  random {:?}  gap {:.4}  tau {:.2}  baseline {:.4}",
        if ev.owned { "OWNED" } else { "NOT_OWNED" },
        ev.acc_legal,
        ev.acc_clean,
        ev.acc_random.iter().map(|a| (a * 1e4).round() / 1e4).collect::<Vec<_>>(),
        ev.gap,
        ev.tau,
        ev.baseline_t
    );
    if ev.owned {
        Ok(())
    } else {
        Err(CliError::NotOwned)
    }
}
