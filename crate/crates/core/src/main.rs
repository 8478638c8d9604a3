use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use diffneuro::config::{Config, Document};
use diffneuro::device::{analyze_loop, iv_sweep, MemristorState, SweepSpec};
use diffneuro::eval::{self, LabelMask, MetricReport};
use diffneuro::io::{self, Manifest};
use diffneuro::tactile::grasp::{nociception_scenario, verify, GraspLoop};
use diffneuro::tactile::{run_scenario, GraspScenario};
use diffneuro::vision::synth::{generate, shipped_suite, SyntheticVideo, SyntheticVideoSpec};
use diffneuro::vision::{
    amplitude_spectrum, compress, Frame, Grid, GridSpec, OrientationTracker, SaliencyMap,
    VisionPipeline,
};

#[derive(Parser)]
#[command(name = "diffneuro", version, about = "Differential neuromorphic perception simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file layered over the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Memristor characterisation.
    Device {
        #[command(subcommand)]
        cmd: DeviceCmd,
        #[command(flatten)]
        common: Common,
    },
    /// Closed-loop grasp scenarios.
    Tactile {
        #[command(subcommand)]
        cmd: TactileCmd,
        #[command(flatten)]
        common: Common,
    },
    /// Visual saliency pipeline.
    Vision {
        #[command(subcommand)]
        cmd: VisionCmd,
        #[command(flatten)]
        common: Common,
    },
    /// Synthetic video generation.
    Synth {
        #[command(subcommand)]
        cmd: SynthCmd,
        #[command(flatten)]
        common: Common,
    },
    /// Offline metrics.
    Eval {
        #[command(subcommand)]
        cmd: EvalCmd,
        #[command(flatten)]
        common: Common,
    },
    /// Per-frame and per-step latency.
    Bench {
        #[arg(long, default_value_t = 2000)]
        iterations: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum DeviceCmd {
    /// Sine sweep through a series resistor with a pinch check.
    Sweep {
        #[arg(long, default_value_t = 0.5)]
        pp: f64,
        #[arg(long, default_value_t = 10.0)]
        freq: f64,
        #[arg(long, default_value_t = 10_000.0)]
        rs: f64,
        #[arg(long, default_value_t = 400)]
        samples: u32,
        #[arg(long, default_value_t = 3)]
        periods: u32,
        /// Initial resistance (defaults to the mid-band center).
        #[arg(long)]
        r0: Option<f64>,
    },
}

#[derive(Subcommand)]
enum TactileCmd {
    /// Run a scenario file and check its expected markers.
    Run {
        scenario: PathBuf,
    },
}

#[derive(Subcommand)]
enum VisionCmd {
    /// Saliency maps for a PGM directory or raw frame file.
    Run {
        frames: PathBuf,
        /// Label masks, one per frame or one per transition.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        parallel: bool,
    },
}

#[derive(Subcommand)]
enum SynthCmd {
    /// Write frames and ground-truth masks.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the shipped evaluation suite instead of a single video.
        #[arg(long)]
        suite: bool,
        #[arg(long, default_value_t = 20)]
        frames: usize,
        #[arg(long, default_value_t = 320)]
        width: usize,
        #[arg(long, default_value_t = 200)]
        height: usize,
        #[arg(long, default_value_t = 3)]
        size: usize,
        #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
        vx: i64,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        vy: i64,
        #[arg(long, default_value_t = 2)]
        x0: i64,
        #[arg(long, default_value_t = 11)]
        y0: i64,
        #[arg(long, default_value_t = 0.4)]
        background: f64,
        #[arg(long, default_value_t = 1.4)]
        object: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        wrap: bool,
    },
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Label recall of saliency PGMs (0 = salient).
    Overlap {
        maps: PathBuf,
        labels: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<(Config, Vec<Document>)> {
    match &common.config {
        Some(p) => {
            let doc = Document::read(p)?;
            Ok((Config::from_documents(std::slice::from_ref(&doc))?, vec![doc]))
        }
        None => Ok((Config::default(), Vec::new())),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Device { cmd, common } => match cmd {
            DeviceCmd::Sweep {
                pp,
                freq,
                rs,
                samples,
                periods,
                r0,
            } => device_sweep(
                &common,
                SweepSpec {
                    peak_to_peak: pp,
                    frequency: freq,
                    series_resistance: rs,
                    samples_per_period: samples,
                    periods,
                },
                r0,
            ),
        },
        Cmd::Tactile { cmd, common } => match cmd {
            TactileCmd::Run { scenario } => tactile_run(&common, &scenario),
        },
        Cmd::Vision { cmd, common } => match cmd {
            VisionCmd::Run {
                frames,
                labels,
                parallel,
            } => vision_run(&common, &frames, labels.as_deref(), parallel),
        },
        Cmd::Synth { cmd, common } => match cmd {
            SynthCmd::Gen {
                seed,
                suite,
                frames,
                width,
                height,
                size,
                vx,
                vy,
                x0,
                y0,
                background,
                object,
                noise,
                wrap,
            } => {
                let spec = SyntheticVideoSpec {
                    width,
                    height,
                    frames,
                    object_size: (size, size),
                    start: (x0, y0),
                    velocity: (vx, vy),
                    background,
                    object,
                    noise,
                    wrap,
                    ..SyntheticVideoSpec::default()
                };
                synth_gen(&common, suite, spec, seed)
            }
        },
        Cmd::Eval { cmd, common } => match cmd {
            EvalCmd::Overlap { maps, labels } => eval_overlap(&common, &maps, &labels),
        },
        Cmd::Bench { iterations, common } => bench(&common, iterations),
    }
}

fn device_sweep(common: &Common, spec: SweepSpec, r0: Option<f64>) -> Result<ExitCode> {
    let (cfg, _) = load_config(common)?;
    let start = Instant::now();
    let r0 = r0.unwrap_or(cfg.table.bands.mid_center);
    let initial = MemristorState::from_resistance(r0, &cfg.device)?;
    let trace = iv_sweep(&spec, &cfg.device, initial)?;
    let la = analyze_loop(&trace, spec.samples_per_period as usize);
    let elapsed = start.elapsed();

    let out = &common.out;
    io::write_file(&out.join("sweep.csv"), io::sweep_csv(&trace))?;
    let summary = format!(
        "pinched = {}\nhysteretic = {}\nmax_origin_current_a = {:.6e}\nloop_area_va = {:.6e}\nrelative_area = {:.6e}\nrows = {}\n",
        la.is_pinched(),
        la.is_hysteretic(),
        la.max_origin_current(),
        la.area,
        la.relative_area,
        trace.len()
    );
    io::write_file(&out.join("pinch.txt"), &summary)?;
    let mut m = Manifest::new("device sweep", &cfg.fingerprint());
    m.push("outputs", "sweep.csv pinch.txt");
    m.push("wall_s", elapsed.as_secs_f64());
    m.write(&out.join("manifest.txt"))?;
    print!("{summary}");
    println!(
        "pinch check: {}",
        if la.is_pinched() && la.is_hysteretic() { "pass" } else { "fail" }
    );
    Ok(ExitCode::SUCCESS)
}

fn tactile_run(common: &Common, path: &Path) -> Result<ExitCode> {
    let (cfg, _) = load_config(common)?;
    let scenario = GraspScenario::load(path)?;
    let start = Instant::now();
    let trace = run_scenario(&scenario, &cfg)?;
    let elapsed = start.elapsed();
    let report = verify(&trace, &scenario);
    let resolved = cfg.with_overrides(&scenario.overrides)?;

    let mut text = format!("scenario = {}\nsteps = {}\n", scenario.name, trace.rows.len());
    let amp = eval::amplification_ratio(&trace, &trace.unity_baseline())?;
    text.push_str(&format!("amplification_pct = {amp:.3}\n"));
    if let Some(a) = scenario.checks.adaptation {
        if let Ok(v) = eval::adaptation_level(&trace, a.at_s) {
            text.push_str(&format!("adaptation_output_pct = {v:.3}\n"));
        }
        if let Ok(v) = eval::state_adaptation_level(&trace, a.at_s, resolved.gain.g_min) {
            text.push_str(&format!("adaptation_state_pct = {v:.3}\n"));
        }
    }
    for (i, m) in trace.markers() {
        text.push_str(&format!("event = {:.3} {m}\n", trace.rows[i].t));
    }
    text.push_str(&report.to_text());

    let out = &common.out;
    io::write_file(&out.join("trace.csv"), trace.to_csv())?;
    io::write_file(&out.join("report.txt"), &text)?;
    let mut m = Manifest::new("tactile run", &resolved.fingerprint());
    m.push("scenario", path.display());
    m.push("outputs", "trace.csv report.txt");
    m.push("wall_s", elapsed.as_secs_f64());
    m.write(&out.join("manifest.txt"))?;

    print!("{text}");
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("scenario checks failed:");
        for f in report.failures() {
            eprintln!("  {}: {}", f.name, f.detail);
        }
        Ok(ExitCode::from(1))
    }
}

fn median_and_p99(mut v: Vec<f64>) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    v.sort_by(f64::total_cmp);
    let at = |q: f64| v[((v.len() - 1) as f64 * q).round() as usize];
    (at(0.5), at(0.99))
}

fn vision_run(common: &Common, frames_path: &Path, labels: Option<&Path>, parallel: bool) -> Result<ExitCode> {
    let (cfg, _) = load_config(common)?;
    let frames = io::load_frames(frames_path)?;
    if frames.len() < 2 {
        bail!("{}: need at least 2 frames, found {}", frames_path.display(), frames.len());
    }
    let out = &common.out;
    let mut pipeline = VisionPipeline::new(&cfg).with_parallel(parallel);
    let mut tracker = OrientationTracker::new(cfg.vision.orientation_frames);
    let mut maps = Vec::with_capacity(frames.len() - 1);
    let mut times = Vec::with_capacity(frames.len());
    let mut orient = String::from("map,dx,dy,magnitude\n");
    for f in &frames {
        let t0 = Instant::now();
        let map = pipeline.push(f)?;
        times.push(t0.elapsed().as_secs_f64());
        if let Some(map) = map {
            let i = maps.len();
            match tracker.push(map.clone()) {
                Some(o) => orient.push_str(&format!("{i},{:.6},{:.6},{:.6}\n", o.dx, o.dy, o.magnitude)),
                None => orient.push_str(&format!("{i},,,\n")),
            }
            io::write_file(&out.join(format!("maps/{i:04}.pgm")), io::saliency_pgm(&map))?;
            io::write_file(
                &out.join(format!("resistance/{i:04}.csv")),
                io::grid_csv(map.cols, &map.resistance),
            )?;
            maps.push(map);
        }
    }
    io::write_file(&out.join("orientation.csv"), orient)?;

    let spec = pipeline.spec().context("pipeline saw no frames")?;
    let last = compress(&frames[frames.len() - 1], &spec)?;
    let before = compress(&frames[frames.len() - 2], &spec)?;
    let diff = Grid::new(
        last.cols,
        last.rows,
        last.values.iter().zip(&before.values).map(|(a, b)| (a - b).abs()).collect(),
    )?;
    io::write_file(&out.join("spectrum_compressed.csv"), io::grid_csv(spec.cols, &amplitude_spectrum(&last)))?;
    io::write_file(&out.join("spectrum_differential.csv"), io::grid_csv(spec.cols, &amplitude_spectrum(&diff)))?;

    let mut m = Manifest::new("vision run", &cfg.fingerprint());
    m.push("frames", frames_path.display());
    m.push("grid", format!("{}x{} blocks of {}x{}", spec.cols, spec.rows, spec.block_w, spec.block_h));
    if let Some(lp) = labels {
        let mut masks = io::load_masks(lp)?;
        if masks.len() == frames.len() {
            masks.remove(0);
        }
        let r = eval::overlap_rate(&maps, &masks)?;
        let report = overlap_report(&r, &cfg);
        io::write_file(&out.join("overlap.txt"), report.to_text())?;
        io::write_file(&out.join("overlap.csv"), report.to_csv())?;
        println!("overlap recall = {:.4} (jaccard {:.4})", r.recall, r.jaccard);
        m.push("labels", lp.display());
    }
    let (p50, p99) = median_and_p99(times[1..].to_vec());
    m.push("frame_p50_s", p50);
    m.push("frame_p99_s", p99);
    m.write(&out.join("manifest.txt"))?;
    println!("maps = {}", maps.len());
    println!("median per-frame time = {:.1} us (p99 {:.1} us)", p50 * 1e6, p99 * 1e6);
    Ok(ExitCode::SUCCESS)
}

fn overlap_report(r: &eval::OverlapReport, cfg: &Config) -> MetricReport {
    let mut notes = vec![format!("jaccard = {}", r.jaccard)];
    if !r.vacuous_frames.is_empty() {
        notes.push(format!(
            "vacuous label frames counted as 1.0: {:?}",
            r.vacuous_frames
        ));
    }
    MetricReport {
        name: "overlap_recall".into(),
        value: r.recall,
        per_frame: r.per_frame.clone(),
        fingerprint: cfg.fingerprint(),
        notes,
    }
}

fn write_video(dir: &Path, v: &SyntheticVideo) -> Result<()> {
    for (i, (f, l)) in v.frames.iter().zip(&v.labels).enumerate() {
        io::write_pgm(&dir.join(format!("frames/{i:04}.pgm")), f)?;
        io::write_file(&dir.join(format!("labels/{i:04}.pgm")), io::mask_to_pgm(l))?;
    }
    let s = &v.spec;
    let mut m = Manifest::new("synth gen", "-");
    m.push("seed", v.seed);
    m.push("size", format!("{}x{}", s.width, s.height));
    m.push("frames", s.frames);
    m.push("object_cells", format!("{}x{}", s.object_size.0, s.object_size.1));
    m.push("velocity", format!("{},{}", s.velocity.0, s.velocity.1));
    m.push("noise", s.noise);
    m.write(&dir.join("manifest.txt"))?;
    Ok(())
}

fn synth_gen(common: &Common, suite: bool, spec: SyntheticVideoSpec, seed: u64) -> Result<ExitCode> {
    let (cfg, _) = load_config(common)?;
    if suite {
        for (i, (spec, seed)) in shipped_suite().iter().enumerate() {
            let spec = SyntheticVideoSpec {
                cols: cfg.vision.cols,
                rows: cfg.vision.rows,
                ..*spec
            };
            write_video(&common.out.join(format!("video_{i:02}")), &generate(&spec, *seed)?)?;
        }
        println!("wrote {} videos to {}", shipped_suite().len(), common.out.display());
    } else {
        let spec = SyntheticVideoSpec {
            cols: cfg.vision.cols,
            rows: cfg.vision.rows,
            ..spec
        };
        write_video(&common.out, &generate(&spec, seed)?)?;
        println!("wrote {} frames to {}", spec.frames, common.out.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn eval_overlap(common: &Common, maps_dir: &Path, labels_dir: &Path) -> Result<ExitCode> {
    let (cfg, _) = load_config(common)?;
    let maps: Vec<SaliencyMap> = io::pgm_files(maps_dir)?
        .iter()
        .map(|p| {
            let f = io::read_pgm(p)?;
            let bin = f.data.iter().map(|&b| u8::from(b >= 128)).collect();
            Ok(SaliencyMap::from_binary(f.width, f.height, bin, cfg.vision.binarize_threshold)?)
        })
        .collect::<Result<_>>()?;
    let mut labels: Vec<LabelMask> = io::load_masks(labels_dir)?;
    if labels.len() == maps.len() + 1 {
        labels.remove(0);
    }
    let r = eval::overlap_rate(&maps, &labels)?;
    let report = overlap_report(&r, &cfg);
    io::write_file(&common.out.join("overlap.txt"), report.to_text())?;
    io::write_file(&common.out.join("overlap.csv"), report.to_csv())?;
    print!("{}", report.to_text());
    Ok(ExitCode::SUCCESS)
}

fn bench(common: &Common, iterations: usize) -> Result<ExitCode> {
    let (cfg, _) = load_config(common)?;
    let iterations = iterations.max(10);

    let spec = SyntheticVideoSpec {
        width: 1920,
        height: 900,
        frames: 16,
        noise: 0.05,
        ..SyntheticVideoSpec::default()
    };
    let video = generate(&spec, 1)?;
    let grid = GridSpec::for_frame(1920, 900, cfg.vision.cols, cfg.vision.rows)?;
    let mut pipeline = VisionPipeline::new(&cfg);
    pipeline.push(&video.frames[0])?;
    let mut frame_times = Vec::with_capacity(iterations);
    for i in 0..iterations {
        let f: &Frame = &video.frames[1 + i % (video.frames.len() - 1)];
        let t0 = Instant::now();
        pipeline.push(f)?;
        frame_times.push(t0.elapsed().as_secs_f64());
    }

    let sc = nociception_scenario(8.0, iterations);
    let mut lp = GraspLoop::new(&sc, &cfg)?;
    let mut step_times = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let t0 = Instant::now();
        lp.step()?;
        step_times.push(t0.elapsed().as_secs_f64());
    }

    let (fp50, fp99) = median_and_p99(frame_times);
    let (sp50, sp99) = median_and_p99(step_times);
    let text = format!(
        "frame_pipeline ({}x{} -> {}x{}): p50 = {:.1} us, p99 = {:.1} us\n\
         tactile_step: p50 = {:.2} us, p99 = {:.2} us\n",
        spec.width,
        spec.height,
        grid.cols,
        grid.rows,
        fp50 * 1e6,
        fp99 * 1e6,
        sp50 * 1e6,
        sp99 * 1e6,
    );
    io::write_file(&common.out.join("bench.txt"), &text)?;
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}
