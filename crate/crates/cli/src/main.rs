//! Command-line driver for the codec: quantizer training, encoding and
//! decoding, degradation simulation with replayable manifests, batch
//! evaluation, binary file inspection, and the task-mode table.
//!
//! Exit codes: 0 success, 2 input/config error, 3 codec mismatch (tokens and
//! model disagree), 4 internal invariant violation (a bug, reported via
//! panic).

use clap::{Parser, Subcommand, ValueEnum};
use hcodec::codec::{self, CodecConfig, CodecStacks};
use hcodec::conditioning::{validate_table, TokenVocab};
use hcodec::degrade::{
    replay_chain, run_chain, AppliedOp, AssetPool, ChainConfig, ChainLog, TaskPreset,
};
use hcodec::framerate::{aggregate, segment_by_similarity, AggregationConfig};
use hcodec::metrics::{mel_loss, rate_report, si_snr, snr, stft_loss, SpectralLossConfig};
use hcodec::quantizer::{rvq_encode, train_rvq, RvqStack, StreamKind, TrainConfig};
use hcodec::signal::{FeatureMatrix, Waveform};
use hcodec::store;
use hcodec::wav::{read_wav, write_wav};
use hcodec::{Error, Result};
use rayon::prelude::*;
use serde::Deserialize;
use std::fs;
use std::path::{Path, PathBuf};

const CONFIG_FILE: &str = "config.json";
const ACOUSTIC_FILE: &str = "acoustic.hcbk";
const SEMANTIC_FILE: &str = "semantic.hcbk";

#[derive(Parser)]
#[command(
    name = "hcodec",
    version,
    about = "Dual-stream audio tokenizer: train, encode, decode, degrade, evaluate"
)]
struct Cli {
    /// Worker threads for batch commands (default: one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train both quantizer stacks on a set of clips and write a model
    /// directory (config.json + acoustic.hcbk + semantic.hcbk).
    Train(TrainArgs),
    /// Encode wav files to token files, printing a rate/distortion line per
    /// input.
    Encode(BatchArgs),
    /// Decode token files back to wav.
    Decode(BatchArgs),
    /// Run the degradation chain over clips and write a replayable manifest.
    Degrade(DegradeArgs),
    /// Encode+decode a corpus and write a CSV of rate and distortion
    /// metrics.
    Eval(EvalArgs),
    /// Print the header and summary of token/feature/codebook files.
    Inspect(InspectArgs),
    /// Print the task-mode conditioning table and reserved token ids.
    Modes(ModesArgs),
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Training clips (wav, one shared sample rate).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,

    /// Output directory for the trained model.
    #[arg(long)]
    model_dir: PathBuf,

    /// Codec configuration JSON; defaults to the 16 kHz speech profile.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override the codebook size of both streams.
    #[arg(long)]
    k: Option<usize>,

    /// Override the layer count of both streams.
    #[arg(long)]
    nq: Option<usize>,

    /// Enable similarity-driven frame aggregation with default settings.
    #[arg(long)]
    dynamic: bool,

    /// Training seed.
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Refinement iterations per codebook layer.
    #[arg(long, default_value_t = 12)]
    iters: usize,

    /// Additional streaming-average passes per layer.
    #[arg(long, default_value_t = 1)]
    ema_passes: usize,
}

#[derive(clap::Args)]
struct BatchArgs {
    /// Input files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,

    /// Model directory produced by `train`.
    #[arg(long)]
    model_dir: PathBuf,

    /// Output directory; defaults to writing next to each input.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    /// Full restoration chain.
    Standard,
    /// Extraction preset: interfering speaker always present, SIR in
    /// [-5, 5] dB.
    Tse,
    /// Separation preset: mixing only, SIR in [-5, 20] dB.
    Lass,
}

impl From<TaskArg> for TaskPreset {
    fn from(t: TaskArg) -> TaskPreset {
        match t {
            TaskArg::Standard => TaskPreset::Standard,
            TaskArg::Tse => TaskPreset::Tse,
            TaskArg::Lass => TaskPreset::Lass,
        }
    }
}

#[derive(clap::Args)]
struct DegradeArgs {
    /// Clean input clips (ignored with --replay).
    inputs: Vec<PathBuf>,

    /// Output directory for degraded clips (and the default manifest
    /// location). Optional with --replay.
    #[arg(long)]
    out_dir: Option<PathBuf>,

    /// Manifest CSV path; defaults to <out-dir>/manifest.csv.
    #[arg(long)]
    manifest: Option<PathBuf>,

    /// Degradation preset.
    #[arg(long, value_enum, default_value_t = TaskArg::Standard)]
    task: TaskArg,

    /// Master seed; clip i runs with seed + i.
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Replay a previously written manifest and verify the outputs are
    /// reproduced byte for byte.
    #[arg(long)]
    replay: Option<PathBuf>,
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Input wav files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,

    /// Model directory produced by `train`.
    #[arg(long)]
    model_dir: PathBuf,

    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct InspectArgs {
    /// Token (.htok), feature (.hfea), or codebook (.hcbk) files.
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

#[derive(clap::Args)]
struct ModesArgs {
    /// Codebook size the token ids are derived from.
    #[arg(long, default_value_t = 1024)]
    k: u16,

    /// Maximum segment duration the token ids are derived from.
    #[arg(long, default_value_t = 8)]
    d_max: u8,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    std::panic::set_hook(Box::new(|info| {
        eprintln!("internal invariant violated: {info}");
    }));
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(cli)));
    let code = match outcome {
        Ok(Ok(())) => 0,
        Ok(Err(err)) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
        Err(_) => 4,
    };
    std::process::exit(code);
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::CodecMismatch(_) => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::InvalidConfig("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    }
    match cli.cmd {
        Cmd::Train(args) => cmd_train(args),
        Cmd::Encode(args) => cmd_encode(args),
        Cmd::Decode(args) => cmd_decode(args),
        Cmd::Degrade(args) => cmd_degrade(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::Inspect(args) => cmd_inspect(args),
        Cmd::Modes(args) => cmd_modes(args),
    }
}

fn echo_config(cfg: &CodecConfig) {
    eprintln!(
        "resolved config: {}",
        serde_json::to_string(cfg).expect("config serialization cannot fail")
    );
}

fn load_model(dir: &Path) -> Result<(CodecConfig, CodecStacks<f64>)> {
    let cfg_path = dir.join(CONFIG_FILE);
    let cfg_text = fs::read_to_string(&cfg_path)?;
    let cfg: CodecConfig = serde_json::from_str(&cfg_text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", cfg_path.display())))?;
    cfg.validate()?;
    let acoustic = store::read_codebooks::<f64>(dir.join(ACOUSTIC_FILE))?;
    let semantic = store::read_codebooks::<f64>(dir.join(SEMANTIC_FILE))?;
    let stacks = CodecStacks::new(acoustic, semantic)?;
    stacks.check_against(&cfg)?;
    Ok((cfg, stacks))
}

/// Output path for `input` with a new extension, optionally redirected into
/// `out_dir`.
fn output_path(input: &Path, out_dir: Option<&Path>, ext: &str) -> Result<PathBuf> {
    let stem = input
        .file_stem()
        .ok_or_else(|| Error::InvalidConfig(format!("no file name in {}", input.display())))?;
    Ok(match out_dir {
        Some(dir) => dir.join(stem).with_extension(ext),
        None => input.with_extension(ext),
    })
}

/// Prints per-file lines in input order; the first failure aborts with its
/// error after all earlier successes have been printed.
fn emit_ordered(results: Vec<Result<String>>) -> Result<()> {
    for r in results {
        println!("{}", r?);
    }
    Ok(())
}

// ---------------------------------------------------------------- train --

fn resolve_config(args: &TrainArgs) -> Result<CodecConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
        }
        None => CodecConfig::speech_16k(),
    };
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(nq) = args.nq {
        cfg.nq_acoustic = nq;
        cfg.nq_semantic = nq;
    }
    if args.dynamic && cfg.dynamic.is_none() {
        cfg.dynamic = Some(AggregationConfig::default());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn concat_features(parts: Vec<FeatureMatrix<f64>>) -> Result<FeatureMatrix<f64>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidConfig("no training inputs".into()))?;
    let (d, fps, kind) = (first.d(), first.fps, first.kind);
    let mut data = Vec::new();
    let mut t = 0usize;
    for p in &parts {
        if p.d() != d {
            return Err(Error::ShapeMismatch(format!(
                "feature width {} != {} across training clips",
                p.d(),
                d
            )));
        }
        data.extend_from_slice(p.data());
        t += p.t();
    }
    FeatureMatrix::new(data, t, d, fps, kind)
}

/// Per-layer residual energy on the training set. Greedy layer-by-layer
/// quantization makes this non-increasing; the acceptance checks assert it,
/// the trainer reports it.
fn report_residuals(
    label: &str,
    stack: &RvqStack<f64>,
    features: &FeatureMatrix<f64>,
) -> Result<()> {
    let grid = rvq_encode(stack, features)?;
    let (t, d) = (features.t(), features.d());
    let input_energy: f64 = features.data().iter().map(|v| v * v).sum::<f64>() / t as f64;
    println!("[{label}] mean input energy per frame: {input_energy:.6e}");
    let mut recon = vec![0.0f64; t * d];
    for l in 0..stack.nq() {
        let book = stack.layer(l);
        for ti in 0..t {
            let entry = book.entry(grid.layer(l)[ti] as usize);
            for (j, e) in entry.iter().enumerate() {
                recon[ti * d + j] += *e;
            }
        }
        let energy: f64 = features
            .data()
            .iter()
            .zip(recon.iter())
            .map(|(f, r)| (f - r) * (f - r))
            .sum::<f64>()
            / t as f64;
        println!("[{label}] residual energy after layer {l}: {energy:.6e}");
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = resolve_config(&args)?;
    echo_config(&cfg);

    let mut sample_rate: Option<u32> = None;
    let mut acoustic_parts = Vec::new();
    let mut semantic_parts = Vec::new();
    for path in &args.inputs {
        let w: Waveform<f64> = read_wav(path)?;
        match sample_rate {
            None => sample_rate = Some(w.sample_rate),
            Some(sr) if sr != w.sample_rate => {
                return Err(Error::InvalidConfig(format!(
                    "{} is {} Hz, earlier clips are {sr} Hz",
                    path.display(),
                    w.sample_rate
                )))
            }
            _ => {}
        }
        let acoustic = codec::acoustic_features(&w, &cfg)?;
        let semantic = codec::semantic_proxy(&w, &cfg)?;
        // In dynamic mode the quantizers see aggregated frames, so train on
        // exactly that representation.
        let (acoustic, semantic) = match &cfg.dynamic {
            None => (acoustic, semantic),
            Some(agg) => {
                let p = segment_by_similarity(&semantic, agg)?;
                (aggregate(&acoustic, &p)?, aggregate(&semantic, &p)?)
            }
        };
        acoustic_parts.push(acoustic);
        semantic_parts.push(semantic);
    }
    let acoustic = concat_features(acoustic_parts)?;
    let semantic = concat_features(semantic_parts)?;
    eprintln!(
        "training on {} frames (acoustic D={}, semantic D={})",
        acoustic.t(),
        acoustic.d(),
        semantic.d()
    );

    let tc = |nq: usize, seed: u64| TrainConfig {
        nq,
        k: cfg.k,
        seed,
        iters: args.iters,
        ema_passes: args.ema_passes,
        ema_decay: 0.99,
    };
    let acoustic_stack = train_rvq(
        &acoustic,
        &tc(cfg.nq_acoustic, args.seed),
        StreamKind::Acoustic,
    )?;
    let semantic_stack = train_rvq(
        &semantic,
        &tc(cfg.nq_semantic, args.seed.wrapping_add(0x9E37_79B9_7F4A_7C15)),
        StreamKind::Semantic,
    )?;
    report_residuals("acoustic", &acoustic_stack, &acoustic)?;
    report_residuals("semantic", &semantic_stack, &semantic)?;

    fs::create_dir_all(&args.model_dir)?;
    fs::write(
        args.model_dir.join(CONFIG_FILE),
        serde_json::to_string_pretty(&cfg)
            .map_err(|e| Error::InvalidConfig(format!("config serialization: {e}")))?,
    )?;
    store::write_codebooks(&acoustic_stack, args.model_dir.join(ACOUSTIC_FILE))?;
    store::write_codebooks(&semantic_stack, args.model_dir.join(SEMANTIC_FILE))?;
    let stacks = CodecStacks::new(acoustic_stack, semantic_stack)?;
    println!(
        "model written to {} (fingerprint {:016x})",
        args.model_dir.display(),
        codec::fingerprint(&cfg, &stacks)
    );
    Ok(())
}

// ------------------------------------------------------- encode / decode --

fn cmd_encode(args: BatchArgs) -> Result<()> {
    let (cfg, stacks) = load_model(&args.model_dir)?;
    echo_config(&cfg);
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir)?;
    }
    let loss_cfg = SpectralLossConfig::default();
    let results: Vec<Result<String>> = args
        .inputs
        .par_iter()
        .map(|path| {
            let w: Waveform<f64> = read_wav(path)?;
            let enc = codec::encode(&w, &cfg, &stacks)?;
            let out_path = output_path(path, args.out_dir.as_deref(), "htok")?;
            store::write_tokens(&enc, &out_path)?;
            let rate = rate_report(&enc)?;
            let decoded = codec::decode(&enc, &cfg, &stacks)?;
            let sl = stft_loss(&w, &decoded, &loss_cfg)?;
            let ml = mel_loss(&w, &decoded, &loss_cfg)?;
            Ok(format!(
                "{} -> {}: {:.2}s, fps_eff {:.3}, bps {:.1} (flat {:.1}), stft_loss {:.5}, mel_loss {:.5}",
                path.display(),
                out_path.display(),
                enc.original_len as f64 / enc.sample_rate as f64,
                rate.fps_effective,
                rate.bps_duration_aware,
                rate.bps_simple,
                sl,
                ml
            ))
        })
        .collect();
    emit_ordered(results)
}

fn cmd_decode(args: BatchArgs) -> Result<()> {
    let (cfg, stacks) = load_model(&args.model_dir)?;
    echo_config(&cfg);
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir)?;
    }
    let results: Vec<Result<String>> = args
        .inputs
        .par_iter()
        .map(|path| {
            let enc = store::read_tokens(path)?;
            let w: Waveform<f64> = codec::decode(&enc, &cfg, &stacks)?;
            let out_path = match &args.out_dir {
                Some(dir) => output_path(path, Some(dir), "wav")?,
                // Next to the input, with a suffix so a sibling source wav
                // is never clobbered.
                None => output_path(path, None, "decoded.wav")?,
            };
            write_wav(&w, &out_path)?;
            Ok(format!(
                "{} -> {}: {:.2}s at {} Hz",
                path.display(),
                out_path.display(),
                w.duration_secs(),
                w.sample_rate
            ))
        })
        .collect();
    emit_ordered(results)
}

// -------------------------------------------------------------- degrade --

fn op_label(op: &AppliedOp) -> String {
    match op {
        AppliedOp::AdditiveNoise { snr_db, .. } => format!("noise(snr={snr_db:.1}dB)"),
        AppliedOp::Reverb { t60_secs, .. } => format!("reverb(t60={t60_secs:.2}s)"),
        AppliedOp::Clipping { q_lo, q_hi } => format!("clip(q=[{q_lo:.3},{q_hi:.3}])"),
        AppliedOp::Bandwidth { cutoff_hz } => format!("bandwidth({cutoff_hz:.0}Hz)"),
        AppliedOp::PacketLoss { rate, .. } => format!("packet_loss(rate={rate:.3})"),
        AppliedOp::Interferer { sir_db, .. } => format!("interferer(sir={sir_db:.1}dB)"),
    }
}

#[derive(Deserialize, serde::Serialize)]
struct ManifestRow {
    clean: String,
    degraded: String,
    seed: u64,
    ops: String,
}

fn cmd_degrade(args: DegradeArgs) -> Result<()> {
    if let Some(manifest) = &args.replay {
        return replay_manifest(manifest, args.out_dir.as_deref());
    }
    if args.inputs.is_empty() {
        return Err(Error::InvalidConfig(
            "no inputs (pass clips, or --replay with a manifest)".into(),
        ));
    }
    let out_dir = args.out_dir.as_deref().ok_or_else(|| {
        Error::InvalidConfig("--out-dir is required when degrading clips".into())
    })?;
    fs::create_dir_all(out_dir)?;
    let pool = AssetPool::<f64>::synthetic();
    let preset: TaskPreset = args.task.into();

    let results: Vec<Result<(String, ManifestRow)>> = args
        .inputs
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let w: Waveform<f64> = read_wav(path)?;
            let chain = ChainConfig::for_task(preset, args.seed.wrapping_add(i as u64));
            let (degraded, log) = run_chain(&w, &chain, &pool)?;
            let stem = path
                .file_stem()
                .ok_or_else(|| {
                    Error::InvalidConfig(format!("no file name in {}", path.display()))
                })?
                .to_string_lossy()
                .into_owned();
            let out_path = out_dir.join(format!("{stem}.degraded.wav"));
            write_wav(&degraded, &out_path)?;
            let labels: Vec<String> = log.ops.iter().map(op_label).collect();
            let line = format!(
                "{} -> {} (seed {}): [{}]",
                path.display(),
                out_path.display(),
                log.seed,
                labels.join(", ")
            );
            let row = ManifestRow {
                clean: path.display().to_string(),
                degraded: out_path.display().to_string(),
                seed: log.seed,
                ops: serde_json::to_string(&log.ops)
                    .map_err(|e| Error::InvalidConfig(format!("op serialization: {e}")))?,
            };
            Ok((line, row))
        })
        .collect();

    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| out_dir.join("manifest.csv"));
    let mut writer = csv::Writer::from_path(&manifest_path).map_err(csv_err)?;
    let mut lines = Vec::new();
    for r in results {
        let (line, row) = r?;
        writer.serialize(row).map_err(csv_err)?;
        lines.push(line);
    }
    writer.flush()?;
    for line in lines {
        println!("{line}");
    }
    println!("manifest written to {}", manifest_path.display());
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidConfig(format!("csv: {e}"))
}

/// Re-applies every chain in a manifest and checks the rewritten wavs are
/// byte-identical to the originals.
fn replay_manifest(manifest: &Path, out_dir: Option<&Path>) -> Result<()> {
    let mut reader = csv::Reader::from_path(manifest).map_err(csv_err)?;
    let pool = AssetPool::<f64>::synthetic();
    let scratch = out_dir
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    fs::create_dir_all(&scratch)?;
    let mut mismatches = 0usize;
    let mut rows = 0usize;
    for record in reader.deserialize::<ManifestRow>() {
        let row = record.map_err(csv_err)?;
        rows += 1;
        let clean: Waveform<f64> = read_wav(Path::new(&row.clean))?;
        let ops = serde_json::from_str(&row.ops)
            .map_err(|e| Error::InvalidConfig(format!("bad ops in manifest row {rows}: {e}")))?;
        let log = ChainLog {
            seed: row.seed,
            ops,
        };
        let replayed = replay_chain(&clean, &log, &pool)?;
        let stem = Path::new(&row.degraded)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("row{rows}"));
        let replay_path = scratch.join(format!("{stem}.replay.wav"));
        write_wav(&replayed, &replay_path)?;
        let original = Path::new(&row.degraded);
        if original.exists() {
            if fs::read(original)? == fs::read(&replay_path)? {
                println!("{}: replay bit-identical", row.degraded);
            } else {
                println!("{}: REPLAY MISMATCH", row.degraded);
                mismatches += 1;
            }
        } else {
            println!(
                "{}: original absent, replay written to {}",
                row.degraded,
                replay_path.display()
            );
        }
    }
    if mismatches > 0 {
        return Err(Error::InvalidConfig(format!(
            "{mismatches} of {rows} replays differ from the recorded outputs"
        )));
    }
    println!("{rows} replays verified");
    Ok(())
}

// ----------------------------------------------------------------- eval --

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let (cfg, stacks) = load_model(&args.model_dir)?;
    echo_config(&cfg);
    let loss_cfg = SpectralLossConfig::default();

    #[derive(serde::Serialize)]
    struct EvalRow {
        path: String,
        seconds: f64,
        sample_rate: u32,
        frames: usize,
        fps_nominal: f64,
        fps_effective: f64,
        nq_total: usize,
        bits_per_code: u32,
        bps_simple: f64,
        bps_duration_aware: f64,
        stft_loss: f64,
        mel_loss: f64,
        snr_db: f64,
        si_snr_db: f64,
    }

    let results: Vec<Result<EvalRow>> = args
        .inputs
        .par_iter()
        .map(|path| {
            let w: Waveform<f64> = read_wav(path)?;
            let enc = codec::encode(&w, &cfg, &stacks)?;
            let rate = rate_report(&enc)?;
            let decoded = codec::decode(&enc, &cfg, &stacks)?;
            Ok(EvalRow {
                path: path.display().to_string(),
                seconds: w.duration_secs(),
                sample_rate: w.sample_rate,
                frames: enc.acoustic.t(),
                fps_nominal: rate.fps_nominal,
                fps_effective: rate.fps_effective,
                nq_total: rate.nq_total,
                bits_per_code: rate.bits_per_code,
                bps_simple: rate.bps_simple,
                bps_duration_aware: rate.bps_duration_aware,
                stft_loss: stft_loss(&w, &decoded, &loss_cfg)?,
                mel_loss: mel_loss(&w, &decoded, &loss_cfg)?,
                snr_db: snr(&w, &decoded)?,
                si_snr_db: si_snr(&w, &decoded)?,
            })
        })
        .collect();

    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        rows.push(r?);
    }
    match &args.out {
        Some(path) => {
            let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
            for row in &rows {
                writer.serialize(row).map_err(csv_err)?;
            }
            writer.flush()?;
            println!("wrote {} rows to {}", rows.len(), path.display());
        }
        None => {
            let mut writer = csv::Writer::from_writer(std::io::stdout());
            for row in &rows {
                writer.serialize(row).map_err(csv_err)?;
            }
            writer.flush()?;
        }
    }
    Ok(())
}

// -------------------------------------------------------------- inspect --

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    for path in &args.files {
        let bytes = fs::read(path)?;
        println!("{}:", path.display());
        match bytes.get(0..4) {
            Some(b"HTOK") => inspect_tokens(&bytes)?,
            Some(b"HFEA") => inspect_features(&bytes)?,
            Some(b"HCBK") => inspect_codebooks(&bytes)?,
            _ => return Err(Error::NotATokenFile),
        }
    }
    Ok(())
}

fn inspect_tokens(bytes: &[u8]) -> Result<()> {
    let enc = store::parse_tokens(bytes)?;
    let seconds = enc.original_len as f64 / enc.sample_rate as f64;
    println!(
        "  tokens: {} Hz, {:.3}s ({} samples), fingerprint {:016x}",
        enc.sample_rate, seconds, enc.original_len, enc.fingerprint
    );
    println!(
        "  grid: T={}, layers {}+{}, K={}, d_max={}, nominal {:.3} fps",
        enc.acoustic.t(),
        enc.acoustic.nq(),
        enc.semantic.nq(),
        enc.k,
        enc.d_max,
        enc.fps_nominal.as_f64()
    );
    match &enc.partition {
        None => println!("  frame rate: fixed"),
        Some(p) => {
            let mut hist = vec![0usize; enc.d_max + 1];
            for &d in p.durations() {
                hist[d as usize] += 1;
            }
            let total: usize = p.total_frames();
            println!(
                "  frame rate: dynamic, {} segments over {} frames ({:.3} fps effective)",
                p.len(),
                total,
                p.len() as f64 / seconds
            );
            let pairs: Vec<String> = (1..=enc.d_max)
                .filter(|&d| hist[d] > 0)
                .map(|d| format!("{d}x{}", hist[d]))
                .collect();
            println!("  durations: {}", pairs.join(", "));
        }
    }
    Ok(())
}

fn inspect_features(bytes: &[u8]) -> Result<()> {
    let (fm, fps) = store::parse_features::<f64>(bytes)?;
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for &v in fm.data() {
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v;
    }
    println!(
        "  features: T={}, D={}, {:.3} fps, values in [{:.4}, {:.4}], mean {:.4}",
        fm.t(),
        fm.d(),
        fps.as_f64(),
        lo,
        hi,
        sum / fm.data().len() as f64
    );
    Ok(())
}

fn inspect_codebooks(bytes: &[u8]) -> Result<()> {
    let stack = store::parse_codebooks::<f64>(bytes)?;
    println!(
        "  codebooks: {:?} stream, {} layers, K={}, D={}",
        stack.stream,
        stack.nq(),
        stack.k(),
        stack.d()
    );
    for l in 0..stack.nq() {
        let book = stack.layer(l);
        let mean_norm: f64 = (0..book.k())
            .map(|i| {
                book.entry(i)
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt()
            })
            .sum::<f64>()
            / book.k() as f64;
        println!("  layer {l}: mean entry norm {mean_norm:.6}");
    }
    Ok(())
}

// ---------------------------------------------------------------- modes --

fn cmd_modes(args: ModesArgs) -> Result<()> {
    let vocab = TokenVocab::new(args.k, args.d_max)?;
    println!(
        "token vocabulary for K={}, d_max={}: {} audio codes, PAD {}, generation marker {}, total {}",
        args.k,
        args.d_max,
        vocab.code_count(),
        vocab.pad_id(),
        vocab.generation_start_id(),
        vocab.vocab_size()
    );
    println!();
    println!("{:<6} {:>9}  {:<38} aliases", "mode", "token", "conditions");
    for row in validate_table() {
        let conds: Vec<&str> = row.conditions.iter().map(|c| c.name()).collect();
        let aliases = if row.aliases.is_empty() {
            String::new()
        } else {
            row.aliases.join(", ")
        };
        println!(
            "{:<6} {:>9}  {:<38} {}",
            row.mode.canonical_name(),
            vocab.task_token_id(row.mode),
            format!("[{}]", conds.join(", ")),
            aliases
        );
    }
    Ok(())
}
