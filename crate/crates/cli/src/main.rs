//! `ambsc`: command-line front end for the backscatter simulator and reader.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use backscatter::capture::{write_capture, CaptureReader};
use backscatter::config::ToolkitConfig;
use backscatter::detector::{validate, DecodeReport, Decoder};
use backscatter::eval::{bench_throughput, run_sweep, simulate, SweepAxis, SweepSpec};
use backscatter::frame::{fm0_encode_repeated, FrameBits, PixelImage, SyncWord};
use backscatter::{CaptureFormat, Complex};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Parser)]
#[command(name = "ambsc", version, about = "Ambient backscatter link simulator and energy-detector reader")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn an image file into frame bits or FM0 switch levels.
    Encode {
        /// `#`/`.` text image.
        image: PathBuf,
        /// Sync word in hex (defaults to the built-in word).
        #[arg(long)]
        sync: Option<String>,
        /// Emit FM0 levels instead of frame bits.
        #[arg(long)]
        levels: bool,
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
        #[arg(long)]
        initial_level: bool,
        /// Output file (stdout when omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Simulate a tag transmission and write the received IQ capture.
    Simulate {
        #[arg(short, long)]
        config: PathBuf,
        /// Image to send, overriding the one in the config.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "cf32le")]
        format: CaptureFormat,
        /// Complex gain applied before writing; defaults to 1 for cf32le and
        /// to 0.25 / rms for cu8 so the 8-bit range is not clipped.
        #[arg(long)]
        gain: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        center_freq_hz: f64,
        /// Capture file; the sidecar is written next to it as `<file>.json`.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Decode a capture and print the received images.
    Decode {
        capture: PathBuf,
        #[arg(short, long)]
        config: PathBuf,
        /// Capture format; taken from the sidecar when present, else cf32le.
        #[arg(long)]
        format: Option<CaptureFormat>,
        /// Capture sample rate; taken from the sidecar when present, else 1/t1.
        #[arg(long)]
        sample_rate: Option<f64>,
        /// Write per-stage traces as CSV.
        #[arg(long)]
        traces: Option<PathBuf>,
        /// Write the JSON report to a file instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Decode even if the configuration violates a parameter constraint.
        #[arg(long)]
        force: bool,
    },
    /// Run a Monte-Carlo sweep described by a JSON file.
    Sweep {
        spec: PathBuf,
        /// CSV output (stdout when omitted).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// JSON summary output.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Check a configuration against the parameter constraints.
    Validate {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Measure decoder throughput on a synthetic buffer.
    Bench {
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        #[arg(long, value_enum, default_value_t = Precision::F32)]
        precision: Precision,
    },
    /// Print a preset configuration file.
    PrintConfig {
        #[arg(long, value_enum, default_value_t = Preset::Tv)]
        preset: Preset,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Tv,
    FiveG,
}

/// Sweep description file: the grid plus a full toolkit configuration.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    axis: SweepAxis,
    grid: Vec<f64>,
    trials_per_point: usize,
    rng_seed: u64,
    config: ToolkitConfig,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    sample_rate_hz: f64,
    center_freq_hz: f64,
    format: CaptureFormat,
    seed: u64,
    gain: f64,
    config: ToolkitConfig,
    truth: Truth,
}

#[derive(Serialize, Deserialize)]
struct Truth {
    image: PixelImage,
    sync_hex: SyncWord,
    repetitions: usize,
    start_offset_s: f64,
    sync_starts_s: Vec<f64>,
    duration_s: f64,
}

enum Failure {
    /// Constraint violation or no frame found.
    Negative(String),
    /// Usage, configuration or I/O problem.
    Usage(String),
}

impl From<backscatter::Error> for Failure {
    fn from(e: backscatter::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Encode {
            image,
            sync,
            levels,
            repetitions,
            initial_level,
            output,
        } => encode(&image, sync.as_deref(), levels, repetitions, initial_level, output.as_deref()),
        Command::Simulate {
            config,
            image,
            seed,
            format,
            gain,
            center_freq_hz,
            output,
        } => simulate_cmd(&config, image.as_deref(), seed, format, gain, center_freq_hz, &output),
        Command::Decode {
            capture,
            config,
            format,
            sample_rate,
            traces,
            report,
            force,
        } => decode_cmd(&capture, &config, format, sample_rate, traces.as_deref(), report.as_deref(), force),
        Command::Sweep { spec, csv, json } => sweep_cmd(&spec, csv.as_deref(), json.as_deref()),
        Command::Validate { config } => validate_cmd(&config),
        Command::Bench { duration, precision } => bench_cmd(duration, precision),
        Command::PrintConfig { preset } => print_config(preset),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Negative(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write_text(path: Option<&Path>, text: &str) -> CmdResult {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display()))),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Usage(e.to_string())),
    }
}

fn load_image(path: &Path) -> Result<PixelImage, Failure> {
    Ok(read_text(path)?.parse::<PixelImage>()?)
}

fn bit_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn encode(
    image: &Path,
    sync: Option<&str>,
    levels: bool,
    repetitions: usize,
    initial_level: bool,
    output: Option<&Path>,
) -> CmdResult {
    let img = load_image(image)?;
    let sync = sync.map(SyncWord::from_hex).transpose()?.unwrap_or_default();
    let frame = FrameBits::from_image(&img, sync)?;
    if repetitions == 0 {
        return Err(Failure::Usage("repetitions must be at least 1".into()));
    }
    let line = if levels {
        bit_string(&fm0_encode_repeated(&frame, repetitions, initial_level).levels)
    } else {
        bit_string(&frame.bits()).repeat(repetitions)
    };
    write_text(output, &format!("{line}\n"))
}

fn sidecar_path(capture: &Path) -> PathBuf {
    let mut name = capture.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

fn simulate_cmd(
    config: &Path,
    image: Option<&Path>,
    seed: u64,
    format: CaptureFormat,
    gain: Option<f64>,
    center_freq_hz: f64,
    output: &Path,
) -> CmdResult {
    let cfg = ToolkitConfig::load(config)?;
    let image = image.map(load_image).transpose()?;
    let link = cfg.to_link(image)?;
    if let Err(violations) = validate(&link.detector, &link.source) {
        for v in violations {
            eprintln!("warning: {v}");
        }
    }
    let (mut rx, plan) = simulate::<f32>(&link, seed)?;
    let gain = gain.unwrap_or(match format {
        CaptureFormat::Cf32le => 1.0,
        CaptureFormat::Cu8 => 0.25 / rx.mean_power().sqrt().max(f64::MIN_POSITIVE),
    });
    if gain != 1.0 {
        rx = rx.scaled(Complex::new(gain, 0.0));
    }
    rx.center_freq = center_freq_hz;
    let stats = write_capture(&rx, output, format)?;
    if stats.clipped > 0 {
        eprintln!("warning: {} components clipped", stats.clipped);
    }
    let mut echoed = cfg.clone();
    echoed.tag.image = Some(link.image.clone());
    let sidecar = Sidecar {
        sample_rate_hz: rx.sample_rate,
        center_freq_hz,
        format,
        seed,
        gain,
        config: echoed,
        truth: Truth {
            image: link.image.clone(),
            sync_hex: link.detector.sync,
            repetitions: link.tag.repetitions,
            start_offset_s: plan.waveform.start_offset,
            sync_starts_s: plan.sync_starts,
            duration_s: plan.duration,
        },
    };
    let path = sidecar_path(output);
    write_text(Some(&path), &(serde_json::to_string_pretty(&sidecar)? + "\n"))?;
    eprintln!("wrote {} samples to {} ({})", stats.samples, output.display(), path.display());
    Ok(())
}

fn report_json(report: &DecodeReport) -> serde_json::Value {
    let frames: Vec<_> = report
        .frames
        .iter()
        .map(|f| {
            json!({
                "image": f.image,
                "score": f.score,
                "timing_offset_s": f.timing_offset_s,
                "fm0_violations": f.fm0_violations,
            })
        })
        .collect();
    json!({
        "status": report.status,
        "sync_hex": report.sync,
        "best_score": report.best_score,
        "chosen_offset_s": report.chosen_offset_s,
        "symbol_bits": report.symbol_stream.len(),
        "fm0_violations": report.fm0_violations,
        "frames": frames,
    })
}

fn decode_cmd(
    capture: &Path,
    config: &Path,
    format: Option<CaptureFormat>,
    sample_rate: Option<f64>,
    traces: Option<&Path>,
    report_path: Option<&Path>,
    force: bool,
) -> CmdResult {
    let cfg = ToolkitConfig::load(config)?;
    let mut detector = cfg.detector_config();
    detector.keep_traces = traces.is_some();
    if let Err(violations) = validate(&detector, &cfg.source_profile(0)) {
        let msg: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        if !force {
            return Err(Failure::Negative(msg.join("\n")));
        }
        msg.iter().for_each(|m| eprintln!("warning: {m}"));
    }
    let sidecar_file = sidecar_path(capture);
    let sidecar: Option<Sidecar> = if sidecar_file.exists() {
        Some(serde_json::from_str(&read_text(&sidecar_file)?)?)
    } else {
        None
    };
    let format = format
        .or(sidecar.as_ref().map(|s| s.format))
        .unwrap_or(CaptureFormat::Cf32le);
    let rate = sample_rate
        .or(sidecar.as_ref().map(|s| s.sample_rate_hz))
        .unwrap_or(detector.f1());
    if ((rate - detector.f1()) / detector.f1()).abs() > 1e-9 {
        return Err(Failure::Usage(format!(
            "capture sample rate {rate} Hz differs from the configured 1/t1 = {} Hz",
            detector.f1()
        )));
    }

    let mut reader = CaptureReader::open(capture, format)?;
    let mut decoder = Decoder::<f32>::new(&detector)?;
    let mut chunk: Vec<Complex<f32>> = Vec::new();
    loop {
        chunk.clear();
        if reader.read_chunk(1 << 16, &mut chunk)? == 0 {
            break;
        }
        decoder.push(&chunk);
    }
    if decoder.samples_seen() == 0 {
        return Err(Failure::Usage(format!("{} holds no samples", capture.display())));
    }
    let report = decoder.finish()?;

    if let (Some(path), Some(t)) = (traces, &report.stage_traces) {
        write_text(Some(path), &t.to_csv())?;
    }
    for (i, f) in report.frames.iter().enumerate() {
        println!("frame {} (score {:.3}, t = {:.6} s)", i, f.score, f.timing_offset_s);
        print!("{}", f.image);
    }
    let json = serde_json::to_string_pretty(&report_json(&report))? + "\n";
    match report_path {
        Some(p) => write_text(Some(p), &json)?,
        None => print!("{json}"),
    }
    if report.is_decoded() {
        Ok(())
    } else {
        Err(Failure::Negative(format!("no frame decoded: {:?}", report.status)))
    }
}

fn sweep_cmd(spec: &Path, csv: Option<&Path>, json_out: Option<&Path>) -> CmdResult {
    let file: SweepFile = serde_json::from_str(&read_text(spec)?)?;
    let spec = SweepSpec {
        axis: file.axis,
        grid: file.grid,
        trials_per_point: file.trials_per_point,
        base: file.config.to_link(None)?,
        rng_seed: file.rng_seed,
    };
    let result = run_sweep(&spec)?;
    write_text(csv, &result.to_csv())?;
    if let Some(p) = json_out {
        let mut summary = serde_json::to_value(&result)?;
        summary["config"] = serde_json::to_value(&file.config)?;
        write_text(Some(p), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    }
    Ok(())
}

fn validate_cmd(config: &Path) -> CmdResult {
    let cfg = ToolkitConfig::load(config)?;
    match validate(&cfg.detector_config(), &cfg.source_profile(0)) {
        Ok(()) => {
            println!("ok");
            Ok(())
        }
        Err(violations) => {
            for v in &violations {
                println!("{v}");
            }
            Err(Failure::Negative(format!("{} constraint(s) violated", violations.len())))
        }
    }
}

fn bench_cmd(duration: f64, precision: Precision) -> CmdResult {
    let r = match precision {
        Precision::F32 => bench_throughput::<f32>(duration)?,
        Precision::F64 => bench_throughput::<f64>(duration)?,
    };
    println!("{}", serde_json::to_string_pretty(&r)?);
    Ok(())
}

fn print_config(preset: Preset) -> CmdResult {
    let cfg = match preset {
        Preset::Tv => ToolkitConfig::tv(),
        Preset::FiveG => ToolkitConfig::five_g(),
    };
    write_text(None, &(cfg.to_json()? + "\n"))
}
