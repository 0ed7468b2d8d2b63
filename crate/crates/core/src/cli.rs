//! `railscope` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use crate::analysis::{self, plot, DetectParams, Window};
use crate::capture::{self, CaptureConfig};
use crate::dut_synth::Scenario;
use crate::timebase;
use crate::trace_codec::{self, TraceFile};

pub const SEED_ENV: &str = "RAILSCOPE_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "railscope",
    version,
    about = "Synthesize, capture and analyze multi-rail power traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    VisualServoing,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AnalysisKind {
    Energy,
    Spectrum,
    Frames,
    Compare,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ChannelKind {
    Current,
    Voltage,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a scenario document.
    Synth {
        #[arg(long, value_enum, default_value = "visual-servoing")]
        preset: Preset,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the acquisition model over a scenario and write a trace.
    Capture {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seconds recorded after the trigger.
        #[arg(long, default_value_t = capture::DEFAULT_POSTTRIGGER_S)]
        posttrigger: f64,
        /// Seconds kept before the trigger (at least 0.150).
        #[arg(long, default_value_t = capture::DEFAULT_PRETRIGGER_S)]
        pretrigger: f64,
        #[arg(long, default_value_t = capture::DEFAULT_BLOCK_FRAMES)]
        block_frames: u16,
        /// Aggregate PMBus poll rate.
        #[arg(long, default_value_t = capture::DEFAULT_PMBUS_RATE_SPS)]
        pmbus_rate: u32,
        /// Comma-separated rail names to poll (default: DUT rails).
        #[arg(long, value_delimiter = ',')]
        pmbus_rails: Option<Vec<String>>,
        /// Use the single-threaded reference pipeline.
        #[arg(long)]
        sequential: bool,
    },
    /// Decode a trace; print a summary and optionally export CSV.
    Decode {
        trace: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Volts and amperes instead of raw codes.
        #[arg(long)]
        units: bool,
        #[arg(long, value_delimiter = ',')]
        rails: Option<Vec<String>>,
    },
    /// Export a trace as CSV (to standard output unless --out is given).
    Export {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        units: bool,
        #[arg(long, value_delimiter = ',')]
        rails: Option<Vec<String>>,
    },
    /// Print an analysis table as CSV.
    Analyze {
        #[arg(value_enum)]
        kind: AnalysisKind,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        rail: String,
        /// Window start, seconds of trace time.
        #[arg(long)]
        from: Option<f64>,
        /// Window end, seconds of trace time.
        #[arg(long)]
        to: Option<f64>,
        #[arg(long)]
        plot: Option<PathBuf>,
        #[arg(long, default_value = "hann")]
        window: Window,
        #[arg(long, value_enum, default_value = "current")]
        channel: ChannelKind,
        #[arg(long)]
        k_sigma: Option<f64>,
        #[arg(long)]
        baseline_window: Option<f64>,
        #[arg(long)]
        min_duration: Option<f64>,
        #[arg(long)]
        hysteresis: Option<f64>,
    },
}

/// Entry point used by the binary: reads the process environment.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let seed = std::env::var(SEED_ENV).ok();
    run(
        args,
        seed.as_deref(),
        &mut stdout.lock(),
        &mut stderr.lock(),
    )
}

/// Runs one invocation with explicit streams and seed override.
pub fn run<I, T>(
    args: I,
    seed_override: Option<&str>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    1
                }
            };
        }
    };
    let seed = match seed_override.map(str::parse::<u64>).transpose() {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {SEED_ENV} must be an unsigned integer: {e}");
            return 1;
        }
    };
    match execute(cli.command, seed, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            2
        }
    }
}

fn read_trace(path: &Path, err: &mut dyn Write) -> Result<TraceFile> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let decoded =
        trace_codec::decode(&bytes).with_context(|| format!("decoding {}", path.display()))?;
    if decoded.warnings > 0 {
        writeln!(
            err,
            "warning: dropped {} truncated record(s)",
            decoded.warnings
        )?;
    }
    Ok(decoded.trace)
}

fn read_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut scenario = Scenario::from_json(&text)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

fn names(rails: &Option<Vec<String>>) -> Vec<&str> {
    rails.iter().flatten().map(String::as_str).collect()
}

fn execute(
    command: Command,
    seed: Option<u64>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<()> {
    match command {
        Command::Synth { preset, out: path } => {
            let mut scenario = match preset {
                Preset::VisualServoing => Scenario::visual_servoing(),
            };
            if let Some(seed) = seed {
                scenario.seed = seed;
            }
            fs::write(&path, scenario.to_json())
                .with_context(|| format!("writing {}", path.display()))?;
            writeln!(err, "wrote scenario to {}", path.display())?;
        }
        Command::Capture {
            scenario,
            out: path,
            posttrigger,
            pretrigger,
            block_frames,
            pmbus_rate,
            pmbus_rails,
            sequential,
        } => {
            let scenario = read_scenario(&scenario, seed)?;
            let mut config = CaptureConfig::for_scenario(&scenario);
            config.posttrigger_s = posttrigger;
            config.pretrigger_s = pretrigger;
            config.block_frames = block_frames;
            config.pmbus_rate_sps = pmbus_rate;
            if let Some(list) = &pmbus_rails {
                config.pmbus_rails = list
                    .iter()
                    .map(|name| {
                        scenario
                            .rail_by_name(name)
                            .map(|r| r.config.rail_id)
                            .ok_or_else(|| anyhow!("unknown rail `{name}`"))
                    })
                    .collect::<Result<_>>()?;
            }
            writeln!(
                err,
                "capturing {} s scenario at {} SPS",
                scenario.duration_s, config.adc.sample_rate_hz
            )?;
            let cap = if sequential {
                capture::run_capture_sequential(&scenario, &config)?
            } else {
                capture::run_capture(&scenario, &config)?
            };
            let file =
                fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            trace_codec::encode_to(&cap.trace, std::io::BufWriter::new(file))
                .with_context(|| format!("writing {}", path.display()))?;
            let t = &cap.trace;
            writeln!(
                err,
                "trigger at frame {} ({:.6} s); {} frames in {} blocks, {} PMBus records",
                cap.trigger_frame,
                t.triggers[0].timestamp_ns as f64 * 1e-9,
                t.frame_count(),
                t.blocks.len(),
                t.pmbus.len()
            )?;
            if cap.pre_truncated {
                writeln!(err, "note: pre-trigger window truncated at scenario start")?;
            }
            if cap.post_truncated {
                writeln!(err, "note: post-trigger window truncated at scenario end")?;
            }
        }
        Command::Decode {
            trace,
            csv,
            units,
            rails,
        } => {
            let t = read_trace(&trace, err)?;
            let (first, last) = t.span_ns().unwrap_or((0, 0));
            writeln!(
                out,
                "sample_rate_hz,rails,blocks,frames,pmbus_records,triggers,first_ns,last_ns"
            )?;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                t.header.sample_rate_hz,
                t.header.rails.len(),
                t.blocks.len(),
                t.frame_count(),
                t.pmbus.len(),
                t.triggers.len(),
                first,
                last
            )?;
            if let Some(path) = csv {
                let text = trace_codec::export_csv(&t, &names(&rails), units)?;
                fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Export {
            trace,
            out: path,
            units,
            rails,
        } => {
            let t = read_trace(&trace, err)?;
            let text = trace_codec::export_csv(&t, &names(&rails), units)?;
            match path {
                Some(path) => {
                    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?
                }
                None => out.write_all(text.as_bytes())?,
            }
        }
        Command::Analyze {
            kind,
            trace,
            rail,
            from,
            to,
            plot: plot_path,
            window,
            channel,
            k_sigma,
            baseline_window,
            min_duration,
            hysteresis,
        } => {
            let t = read_trace(&trace, err)?;
            let mut params = DetectParams::for_rate(t.header.sample_rate_hz);
            params.k_sigma = k_sigma.unwrap_or(params.k_sigma);
            params.baseline_window_s = baseline_window.unwrap_or(params.baseline_window_s);
            params.min_duration_s = min_duration.unwrap_or(params.min_duration_s);
            params.hysteresis_fraction = hysteresis.unwrap_or(params.hysteresis_fraction);
            let request = AnalyzeRequest {
                trace: &t,
                rail: &rail,
                from,
                to,
                window,
                channel,
                params,
            };
            let svg = analyze(kind, &request, out, err)?;
            if let (Some(path), Some(svg)) = (plot_path, svg) {
                fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
            }
        }
    }
    Ok(())
}

struct AnalyzeRequest<'a> {
    trace: &'a TraceFile,
    rail: &'a str,
    from: Option<f64>,
    to: Option<f64>,
    window: Window,
    channel: ChannelKind,
    params: DetectParams,
}

impl AnalyzeRequest<'_> {
    /// Requested window in ns, defaulting to the whole trace and snapped
    /// onto frame stamps.
    fn window_ns(&self) -> Result<(u64, u64)> {
        let (first, last) = self
            .trace
            .span_ns()
            .ok_or(analysis::AnalysisError::EmptyTrace)?;
        let fs = self.trace.header.sample_rate_hz;
        let snap = |t: f64, up: bool| {
            let k = if up {
                timebase::tick_at_or_after(t, fs)
            } else {
                timebase::tick_at_or_before(t, fs)
            };
            timebase::timestamp_of_frame(k, fs)
        };
        let t0 = self.from.map_or(first, |t| snap(t, true));
        let t1 = self.to.map_or(last, |t| snap(t, false));
        Ok((t0, t1))
    }
}

fn analyze(
    kind: AnalysisKind,
    req: &AnalyzeRequest<'_>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<Option<String>> {
    let trace = req.trace;
    let rail_cfg = trace
        .rail(req.rail)
        .ok_or_else(|| anyhow!("unknown rail `{}`", req.rail))?;
    let fs = trace.header.sample_rate_hz;
    let (t0, t1) = req.window_ns()?;
    let timestamps = trace.frame_timestamps();
    let secs = |ns: &[u64]| ns.iter().map(|t| *t as f64 * 1e-9).collect::<Vec<_>>();

    match kind {
        AnalysisKind::Energy => {
            let e = analysis::energy(trace, req.rail, t0, t1)?;
            writeln!(out, "rail,t0_s,t1_s,frames,energy_j,mean_power_w")?;
            writeln!(
                out,
                "{},{:.9},{:.9},{},{:.9e},{:.9e}",
                req.rail,
                t0 as f64 * 1e-9,
                t1 as f64 * 1e-9,
                e.frames,
                e.joules,
                e.mean_power_w(fs)
            )?;
            let ps = analysis::power_series(trace, req.rail)?;
            Ok(Some(plot::line_plot(
                &format!("{} power", req.rail),
                "time [s]",
                "power [W]",
                &secs(&ps.timestamps_ns),
                &ps.power_w,
            )))
        }
        AnalysisKind::Spectrum => {
            let start = timestamps.partition_point(|t| *t < t0);
            let end = timestamps.partition_point(|t| *t <= t1);
            let ch = match req.channel {
                ChannelKind::Current => rail_cfg.i_channel,
                ChannelKind::Voltage => rail_cfg.v_channel,
            };
            let s = analysis::psd(trace, ch, start, end.saturating_sub(start), req.window)?;
            writeln!(out, "frequency_hz,power")?;
            for (k, p) in s.magnitudes.iter().enumerate() {
                writeln!(out, "{:.6},{:.9e}", s.frequency(k), p)?;
            }
            if let Some((f, _)) = s.dominant_peak(s.bin_hz * 3.0) {
                writeln!(
                    err,
                    "dominant non-DC peak at {f:.1} Hz (bin {:.3} Hz)",
                    s.bin_hz
                )?;
            }
            let freqs: Vec<f64> = (0..s.magnitudes.len()).map(|k| s.frequency(k)).collect();
            let db: Vec<f64> = s
                .magnitudes
                .iter()
                .map(|p| 10.0 * p.max(1e-300).log10())
                .collect();
            Ok(Some(plot::line_plot(
                &format!("{} spectrum", req.rail),
                "frequency [Hz]",
                "power [dB]",
                &freqs,
                &db,
            )))
        }
        AnalysisKind::Frames => {
            let events = analysis::detect_frames(trace, req.rail, &req.params)?;
            writeln!(out, "t_start_ns,t_end_ns,peak_current_a")?;
            for e in events.iter().filter(|e| (t0..=t1).contains(&e.t_start_ns)) {
                writeln!(
                    out,
                    "{},{},{:.6}",
                    e.t_start_ns, e.t_end_ns, e.peak_current_a
                )?;
            }
            let amps = analysis::current_series(trace, rail_cfg);
            Ok(Some(plot::line_plot(
                &format!("{} current", req.rail),
                "time [s]",
                "current [A]",
                &secs(&timestamps),
                &amps,
            )))
        }
        AnalysisKind::Compare => {
            let c = analysis::compare_pmbus(trace, req.rail, &req.params)?;
            writeln!(out, "rail,records,frames,highrate_mean_a,pmbus_mean_a,mean_abs_error_a,recall,detectable")?;
            writeln!(
                out,
                "{},{},{},{:.6},{:.6},{:.6},{:.4},{}",
                req.rail,
                c.records,
                c.frames,
                c.highrate_mean_a,
                c.pmbus_mean_a,
                c.mean_abs_error_a,
                c.recall,
                c.detectable
            )?;
            if req.from.is_some() || req.to.is_some() {
                writeln!(err, "note: compare always uses the whole trace")?;
            }
            let amps = analysis::current_series(trace, rail_cfg);
            Ok(Some(plot::line_plot(
                &format!("{} current", req.rail),
                "time [s]",
                "current [A]",
                &secs(&timestamps),
                &amps,
            )))
        }
    }
}
