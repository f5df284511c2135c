//! `evtrack` command line: dataset simulation, target-edge initialization,
//! training, tracking, evaluation, and gradient checking.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/parse error, 3 numerical
//! check failure. `EVTRACK_THREADS` caps the worker fan-out of the parallel
//! kernels.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use evtrack::config::RunConfig;
use evtrack::dataset::{
    build_synthetic_sequence, discover_sequences, load_sequence, write_sequence, LoadedSequence,
};
use evtrack::error::Error;
use evtrack::evaluation::{evaluate, Curve, TrackRun};
use evtrack::events::BoundingBox;
use evtrack::io;
use evtrack::net::{
    grad_check, load_weights, make_label_map, save_weights, GradCheckConfig, Network,
    NetworkConfig,
};
use evtrack::simulator::{
    make_init_sequence, simulate_events, Background, Frame, FrameSequence, ShapeKind,
    SyntheticSpec,
};
use evtrack::tracker::{init_target, step, TrackerConfig};
use evtrack::trainer::{split_sequences, Trainer};
use evtrack::Tensor3;

#[derive(Parser)]
#[command(
    name = "evtrack",
    about = "Event-camera object tracking: simulate, train, track, evaluate",
    version,
    disable_help_subcommand = true
)]
struct Cli {
    /// Configuration file (flat `key = value`); defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the configured random seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Print progress to stderr.
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an event sequence directory, either from grayscale frames
    /// or from a synthetic moving shape.
    Simulate(SimulateArgs),
    /// Render the micro-translation initialization events for a frame and
    /// target box.
    InitTarget(InitTargetArgs),
    /// Train the Siamese feature extractor on a dataset of sequences.
    Train(TrainArgs),
    /// Run the tracker over a sequence.
    Track(TrackArgs),
    /// Compute tracking metrics for a tracker output file.
    Eval(EvalArgs),
    /// Verify analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Output directory (one sequence, or `--count` numbered sequences).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Directory of 8-bit PGM frames plus `timestamps.txt` (and optionally
    /// `groundtruth.txt`).
    #[arg(long, value_name = "DIR", conflicts_with = "shape")]
    frames_dir: Option<PathBuf>,
    /// Synthetic shape kind: square, disc, or bar.
    #[arg(long, value_name = "KIND")]
    shape: Option<String>,
    /// Shape size in pixels (square side, disc diameter, bar width).
    #[arg(long, default_value_t = 24.0)]
    size: f64,
    /// Sensor size as WIDTHxHEIGHT.
    #[arg(long, default_value = "128x96", value_name = "WxH")]
    sensor: String,
    /// Velocity in px/s as VX,VY.
    #[arg(long, default_value = "50,0", value_name = "VX,VY")]
    velocity: String,
    /// Sequence duration in seconds.
    #[arg(long, default_value_t = 2.0, value_name = "SECONDS")]
    duration_s: f64,
    /// Rendered frame rate.
    #[arg(long, default_value_t = 200.0)]
    fps: f64,
    /// Background intensity in [0, 1].
    #[arg(long, default_value_t = 0.9)]
    background: f64,
    /// Shape intensity in [0, 1].
    #[arg(long, default_value_t = 0.1)]
    foreground: f64,
    /// Number of varied synthetic sequences to generate.
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Also write the events in the text format.
    #[arg(long)]
    text: bool,
}

#[derive(Args)]
struct InitTargetArgs {
    /// Grayscale PGM frame.
    #[arg(long, value_name = "FILE")]
    frame: PathBuf,
    /// Target box as CX,CY,W,H.
    #[arg(long, value_name = "CX,CY,W,H")]
    bbox: String,
    /// Output event file (binary; `--text` for the text format).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long)]
    text: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset root: a directory of sequence directories.
    #[arg(long, value_name = "DIR")]
    dataset: PathBuf,
    /// Weights file to write (updated after every epoch).
    #[arg(long, value_name = "FILE")]
    out_weights: PathBuf,
    /// Per-epoch loss log CSV (`epoch,lr,mean_loss`).
    #[arg(long, value_name = "FILE")]
    loss_log: Option<PathBuf>,
}

#[derive(Args)]
struct TrackArgs {
    /// Sequence directory.
    #[arg(long, value_name = "DIR")]
    sequence: PathBuf,
    /// Trained weights file.
    #[arg(long, value_name = "FILE")]
    weights: PathBuf,
    /// Tracker output CSV.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Ignore the initialization segment and form the exemplar from the
    /// first event window instead.
    #[arg(long)]
    no_init: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Tracker output CSV.
    #[arg(long, value_name = "FILE")]
    track: PathBuf,
    /// Sequence directory; ground truth is sampled at each window end.
    #[arg(long, value_name = "DIR", conflicts_with = "groundtruth")]
    sequence: Option<PathBuf>,
    /// Ground-truth file aligned line-by-line with the track rows.
    #[arg(long, value_name = "FILE")]
    groundtruth: Option<PathBuf>,
    /// Output directory for the report and curve CSVs.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Also render the curves as PGM rasters.
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Parameter coordinates to sample.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes, anything else is a
            // usage error.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let threads = match std::env::var("EVTRACK_THREADS") {
        Ok(v) => match v.parse::<usize>() {
            Ok(n) => Some(n),
            Err(_) => {
                eprintln!("error: EVTRACK_THREADS must be a non-negative integer, got `{v}`");
                return ExitCode::from(1);
            }
        },
        Err(_) => None,
    };
    evtrack::configure_threads(threads);

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => 1,
        Error::NumericalCheck(_) => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let verbose = cli.verbose;
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&config, &args, verbose),
        Command::InitTarget(args) => cmd_init_target(&config, &args),
        Command::Train(args) => cmd_train(&config, &args, verbose),
        Command::Track(args) => cmd_track(&config, &args, verbose),
        Command::Eval(args) => cmd_eval(&args),
        Command::Gradcheck(args) => cmd_gradcheck(&config, &args),
    }
}

fn parse_pair(s: &str, what: &str) -> Result<(f64, f64), Error> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "{what} must be two comma-separated numbers, got `{s}`"
        )));
    }
    let a = parts[0].trim().parse::<f64>();
    let b = parts[1].trim().parse::<f64>();
    match (a, b) {
        (Ok(a), Ok(b)) => Ok((a, b)),
        _ => Err(Error::InvalidArgument(format!("bad {what}: `{s}`"))),
    }
}

fn parse_sensor(s: &str) -> Result<(usize, usize), Error> {
    let parts: Vec<&str> = s.split('x').collect();
    if parts.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "sensor must be WIDTHxHEIGHT, got `{s}`"
        )));
    }
    match (parts[0].parse::<usize>(), parts[1].parse::<usize>()) {
        (Ok(w), Ok(h)) if w > 0 && h > 0 => Ok((w, h)),
        _ => Err(Error::InvalidArgument(format!("bad sensor size `{s}`"))),
    }
}

fn parse_bbox(s: &str) -> Result<BoundingBox, Error> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::InvalidArgument(format!("bad box `{s}`, expected CX,CY,W,H")))?;
    if vals.len() != 4 {
        return Err(Error::InvalidArgument(format!(
            "box needs 4 fields, got {}",
            vals.len()
        )));
    }
    BoundingBox::new(vals[0], vals[1], vals[2], vals[3])
}

fn shape_of(kind: &str, size: f64) -> Result<ShapeKind, Error> {
    if size <= 0.0 {
        return Err(Error::InvalidArgument("shape size must be positive".into()));
    }
    match kind {
        "square" => Ok(ShapeKind::Square { side: size }),
        "disc" => Ok(ShapeKind::Disc {
            radius: size / 2.0,
        }),
        "bar" => Ok(ShapeKind::Bar {
            width: size,
            height: (size / 2.5).max(2.0),
        }),
        other => Err(Error::InvalidArgument(format!(
            "unknown shape `{other}` (square, disc, bar)"
        ))),
    }
}

fn cmd_simulate(config: &RunConfig, args: &SimulateArgs, verbose: bool) -> Result<(), Error> {
    if let Some(frames_dir) = &args.frames_dir {
        return simulate_from_frames(config, frames_dir, &args.out, args.text, verbose);
    }
    let shape_kind = args
        .shape
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("need --frames-dir or --shape".into()))?;
    let (gw, gh) = parse_sensor(&args.sensor)?;
    let velocity = parse_pair(&args.velocity, "velocity")?;
    let duration_us = (args.duration_s * 1e6).round() as u64;
    if duration_us == 0 {
        return Err(Error::InvalidArgument("duration must be positive".into()));
    }

    for index in 0..args.count.max(1) {
        let mut shape = shape_of(shape_kind, args.size)?;
        let mut velocity = velocity;
        if args.count > 1 {
            // Deterministic per-sequence variation.
            let mut rng =
                ChaCha8Rng::seed_from_u64(config.seed ^ (index as u64).wrapping_mul(0x9e3779b97f4a7c15));
            shape = match index % 3 {
                0 => ShapeKind::Square { side: args.size },
                1 => ShapeKind::Disc {
                    radius: args.size / 2.0,
                },
                _ => ShapeKind::Bar {
                    width: args.size,
                    height: (args.size / 2.5).max(2.0),
                },
            };
            let speed = rng.gen_range(30.0..60.0);
            let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            velocity = (speed * angle.cos(), speed * angle.sin());
        }
        // Center the trajectory so it stays inside the sensor.
        let travel = (
            velocity.0 * duration_us as f64 * 1e-6,
            velocity.1 * duration_us as f64 * 1e-6,
        );
        let start = (
            gw as f64 / 2.0 - travel.0 / 2.0,
            gh as f64 / 2.0 - travel.1 / 2.0,
        );
        let spec = SyntheticSpec {
            shape,
            geometry: (gw, gh),
            start,
            velocity,
            duration_us,
            fps: args.fps,
            background: Background::Plain(args.background as f32),
            foreground: args.foreground as f32,
        };
        let dir = if args.count > 1 {
            args.out.join(format!("seq_{index:03}"))
        } else {
            args.out.clone()
        };
        let description = format!("synthetic {shape_kind} seed={} index={index}", config.seed);
        build_synthetic_sequence(&spec, &config.sim_config(), &dir, &description)?;
        if args.text {
            let seq = load_sequence(&dir)?;
            io::write_events_text(&dir.join("events.txt"), &seq.events)?;
        }
        if verbose {
            eprintln!("wrote sequence {}", dir.display());
        }
    }
    Ok(())
}

fn simulate_from_frames(
    config: &RunConfig,
    frames_dir: &Path,
    out: &Path,
    text: bool,
    verbose: bool,
) -> Result<(), Error> {
    let mut frame_files: Vec<PathBuf> = std::fs::read_dir(frames_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
        .collect();
    frame_files.sort();
    if frame_files.len() < 2 {
        return Err(Error::format(
            "frame directory",
            format!("need at least 2 PGM frames, found {}", frame_files.len()),
        ));
    }
    let timestamps = io::read_timestamps(&frames_dir.join("timestamps.txt"))?;
    if timestamps.len() != frame_files.len() {
        return Err(Error::format(
            "frame directory",
            format!(
                "{} frames but {} timestamps",
                frame_files.len(),
                timestamps.len()
            ),
        ));
    }
    let mut frames = Vec::with_capacity(frame_files.len());
    for f in &frame_files {
        let (w, h, pixels) = io::read_pgm(f)?;
        let data: Vec<f32> = pixels.iter().map(|&p| p as f32 / 255.0).collect();
        frames.push(Frame::new(w, h, data)?);
    }
    let seq = FrameSequence::new(frames, timestamps.clone())?;
    let events = simulate_events(&seq, &config.sim_config())?;

    let gt_path = frames_dir.join("groundtruth.txt");
    let (groundtruth, init_events) = if gt_path.is_file() {
        let gt = io::read_groundtruth(&gt_path)?;
        if gt.len() != timestamps.len() {
            return Err(Error::format(
                "frame directory",
                format!("{} ground-truth boxes but {} timestamps", gt.len(), timestamps.len()),
            ));
        }
        let init_seq = make_init_sequence(&seq.frames()[0], &gt[0])?;
        let init = simulate_events(&init_seq, &config.sim_config())?;
        (gt, Some(init))
    } else {
        // Without annotation the whole sensor is the nominal target.
        let g = seq.geometry();
        let full = BoundingBox::new(
            g.width() as f64 / 2.0,
            g.height() as f64 / 2.0,
            g.width() as f64,
            g.height() as f64,
        )?;
        (vec![full; timestamps.len()], None)
    };

    write_sequence(
        out,
        seq.geometry(),
        &events,
        &groundtruth,
        &timestamps,
        init_events.as_deref(),
        &format!("simulated from {}", frames_dir.display()),
    )?;
    if text {
        io::write_events_text(&out.join("events.txt"), &events)?;
    }
    if verbose {
        eprintln!("wrote sequence {} ({} events)", out.display(), events.len());
    }
    Ok(())
}

fn cmd_init_target(config: &RunConfig, args: &InitTargetArgs) -> Result<(), Error> {
    let (w, h, pixels) = io::read_pgm(&args.frame)?;
    let data: Vec<f32> = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    let frame = Frame::new(w, h, data)?;
    let bbox = parse_bbox(&args.bbox)?;
    let seq = make_init_sequence(&frame, &bbox)?;
    let events = simulate_events(&seq, &config.sim_config())?;
    if args.text {
        io::write_events_text(&args.out, &events)?;
    } else {
        io::write_events_binary(&args.out, &events, seq.geometry())?;
    }
    Ok(())
}

fn cmd_train(config: &RunConfig, args: &TrainArgs, verbose: bool) -> Result<(), Error> {
    let dirs = discover_sequences(&args.dataset)?;
    if dirs.is_empty() {
        return Err(Error::format(
            "dataset",
            format!("no sequence directories under {}", args.dataset.display()),
        ));
    }
    let mut sequences = Vec::with_capacity(dirs.len());
    for dir in &dirs {
        sequences.push(load_sequence(dir)?);
    }
    let (train_set, held_out): (Vec<LoadedSequence>, _) =
        split_sequences(sequences, config.train.train_fraction, config.seed);
    if verbose {
        eprintln!(
            "training on {} sequences, {} held out",
            train_set.len(),
            held_out.len()
        );
    }

    let mut trainer = Trainer::new(&train_set, config)?;
    let bins = config.embedding.bins as u32;
    let out_weights = args.out_weights.clone();
    let mut log_rows: Vec<(usize, f64, f64)> = Vec::new();
    let report = trainer.run(|log, net| {
        save_weights(net, bins, &out_weights)?;
        log_rows.push((log.epoch, log.lr, log.mean_loss));
        if verbose {
            eprintln!("epoch {:3}  lr {:.3e}  loss {:.6}", log.epoch, log.lr, log.mean_loss);
        }
        Ok(())
    })?;

    if let Some(log_path) = &args.loss_log {
        let mut buf = String::from("epoch,lr,mean_loss\n");
        for (e, lr, loss) in &log_rows {
            buf.push_str(&format!("{e},{lr},{loss}\n"));
        }
        io::atomic_write(log_path, buf.as_bytes())?;
    }
    if verbose {
        eprintln!(
            "trained {} epochs on {} pairs",
            report.epochs.len(),
            report.pair_count
        );
    }
    Ok(())
}

fn cmd_track(config: &RunConfig, args: &TrackArgs, verbose: bool) -> Result<(), Error> {
    let seq = load_sequence(&args.sequence)?;
    let (net, bins) = load_weights(&args.weights)?;
    let mut tracker_config: TrackerConfig = config.tracker_config();
    tracker_config.embedding.bins = bins as usize;
    if net.input_channels() != tracker_config.embedding.channels() {
        return Err(Error::format(
            "weights file",
            format!(
                "network consumes {} channels but embedding `{}` with {} bins produces {}",
                net.input_channels(),
                tracker_config.embedding.method.name(),
                bins,
                tracker_config.embedding.channels()
            ),
        ));
    }

    let windows = seq.windows(tracker_config.window_us)?;
    let init_box = seq.groundtruth[0];
    let init_window = if args.no_init {
        None
    } else {
        seq.init_window()?
    };
    let mut state = match &init_window {
        Some(w) => init_target(w, init_box, &net, &tracker_config)?,
        None => {
            let first = windows
                .first()
                .ok_or_else(|| Error::format("sequence", "no event windows"))?;
            init_target(first, init_box, &net, &tracker_config)
                .map_err(|e| match e {
                    Error::EmptyInitialization => Error::EmptyInitialization,
                    other => other,
                })?
        }
    };

    let mut records = Vec::with_capacity(windows.len());
    for window in &windows {
        let bbox = step(&mut state, window, &net, &tracker_config)?;
        records.push(io::TrackRecord {
            t_start: window.t_start(),
            t_end: window.t_end(),
            bbox,
            skipped: state.paused(),
        });
    }
    io::write_track(&args.out, &records)?;
    if verbose {
        let skipped = records.iter().filter(|r| r.skipped).count();
        eprintln!(
            "tracked {} windows ({} skipped, {} network evals)",
            records.len(),
            skipped,
            state.network_evals()
        );
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), Error> {
    let records = io::read_track(&args.track)?;
    if records.is_empty() {
        return Err(Error::format("track file", "no rows"));
    }
    let predictions: Vec<BoundingBox> = records.iter().map(|r| r.bbox).collect();
    let (ground_truth, name) = if let Some(seq_dir) = &args.sequence {
        let seq = load_sequence(seq_dir)?;
        let gt = records.iter().map(|r| seq.gt_at(r.t_end)).collect();
        (gt, seq.name)
    } else if let Some(gt_path) = &args.groundtruth {
        let gt = io::read_groundtruth(gt_path)?;
        if gt.len() != records.len() {
            return Err(Error::format(
                "evaluation input",
                format!(
                    "track has {} rows but ground truth has {} boxes",
                    records.len(),
                    gt.len()
                ),
            ));
        }
        (gt, "run".to_string())
    } else {
        return Err(Error::InvalidArgument(
            "need --sequence or --groundtruth".into(),
        ));
    };

    let run = TrackRun::new(predictions, ground_truth)?;
    let report = evaluate(&run);

    std::fs::create_dir_all(&args.out_dir)?;
    let report_csv = format!(
        "sequence,success_score,precision_score,success_rate\n{},{},{},{}\n",
        name, report.success_score, report.precision_score, report.success_rate
    );
    io::atomic_write(&args.out_dir.join("report.csv"), report_csv.as_bytes())?;
    write_curve(&args.out_dir.join("success_curve.csv"), &report.success_curve)?;
    write_curve(
        &args.out_dir.join("precision_curve.csv"),
        &report.precision_curve,
    )?;
    if args.plot {
        plot_curve(&args.out_dir.join("success_curve.pgm"), &report.success_curve)?;
        plot_curve(
            &args.out_dir.join("precision_curve.pgm"),
            &report.precision_curve,
        )?;
    }
    println!(
        "success_score {:.4}  precision_score {:.4}  success_rate {:.4}",
        report.success_score, report.precision_score, report.success_rate
    );
    Ok(())
}

fn write_curve(path: &Path, curve: &Curve) -> Result<(), Error> {
    let mut buf = String::from("threshold,value\n");
    for (t, v) in curve.thresholds.iter().zip(&curve.values) {
        buf.push_str(&format!("{t},{v}\n"));
    }
    io::atomic_write(path, buf.as_bytes())
}

/// Minimal raster: the curve in black on white, 256x256, origin bottom-left.
fn plot_curve(path: &Path, curve: &Curve) -> Result<(), Error> {
    const N: usize = 256;
    let mut pixels = vec![255u8; N * N];
    for (t, v) in curve.thresholds.iter().zip(&curve.values) {
        let x = (t * (N - 1) as f64).round() as usize;
        let y = ((1.0 - v) * (N - 1) as f64).round() as usize;
        for dy in 0..2 {
            let yy = (y + dy).min(N - 1);
            pixels[yy * N + x] = 0;
        }
    }
    io::write_pgm(path, N, N, &pixels)
}

fn cmd_gradcheck(config: &RunConfig, args: &GradcheckArgs) -> Result<(), Error> {
    let channels = config.embedding.channels();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let net_config = NetworkConfig::reduced(channels, [8, 12, 16, 16, 12]);
    let net: Network<f64> = Network::new(&net_config, &mut rng);

    // 95 -> 2x2 exemplar features, 111 -> 4x4 search features, 3x3 scores.
    let mut exemplar = Tensor3::<f64>::zeros(channels, 95, 95);
    for v in exemplar.data_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let mut search = Tensor3::<f64>::zeros(channels, 111, 111);
    for v in search.data_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let label = make_label_map(3, 3, 1.0)?;
    let check = GradCheckConfig {
        epsilon: args.epsilon,
        samples: args.samples,
        score_scale: 1e-2,
    };
    let report = grad_check(&net, &exemplar, &search, &label, check, &mut rng)?;

    const THRESHOLD: f64 = 1e-5;
    let pass = report.max_rel_error < THRESHOLD;
    println!(
        "gradcheck: max relative error {:.3e} over {} samples (worst {}), threshold {THRESHOLD:e}: {}",
        report.max_rel_error,
        report.samples,
        report.worst_param,
        if pass { "PASS" } else { "FAIL" }
    );
    if pass {
        Ok(())
    } else {
        Err(Error::NumericalCheck(format!(
            "gradient check failed: max relative error {:.3e} >= {THRESHOLD:e}",
            report.max_rel_error
        )))
    }
}
