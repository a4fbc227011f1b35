//! `epof`: preprocess 360-degree videos, replay head traces, render GRF
//! masks, transform questionnaire scores and serve projects.
//!
//! Exit status is 0 on success, 1 for invalid input and 2 for I/O failures.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use epof_core::ssq::{self, SsqError};
use epof_core::store::{
    read_trace, resume_preprocess, write_epof_csv, PreprocessSettings, Project, ProjectManifest, RunOptions, StoreError,
};
use epof_core::{
    build_pixel_map, render_viewport, Aggregation, EquirectFrame, FlowParams, GridParams, GrfConfig, ViewportSpec, DEFAULT_K,
};

#[derive(Parser)]
#[command(name = "epof", version, about = "Viewport-aware optical flow for 360-degree video")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregationArg {
    Mean,
    P95,
}

#[derive(Subcommand)]
enum Command {
    /// Build the flow matrix for a directory of equirect PNG frames.
    Preprocess {
        frames_dir: PathBuf,
        /// Output directory for manifest.json, progress rows and the matrix.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30.0)]
        fps: f64,
        #[arg(long, default_value_t = 107.0)]
        hfov: f64,
        #[arg(long, default_value_t = 107.0)]
        vfov: f64,
        #[arg(long, default_value_t = 15.0)]
        hstep: f64,
        #[arg(long, default_value_t = 7.5)]
        vstep: f64,
        /// Tile width in pixels; height follows from the FOV ratio.
        #[arg(long, default_value_t = 128)]
        tile_width: u32,
        #[arg(long, default_value_t = 15.0)]
        alpha: f32,
        #[arg(long, default_value_t = 100)]
        iterations: u32,
        #[arg(long, default_value_t = 3)]
        levels: u32,
        #[arg(long, value_enum, default_value_t = AggregationArg::Mean)]
        aggregation: AggregationArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        id: Option<String>,
        /// Stop after computing this many windows (resume later).
        #[arg(long)]
        max_windows: Option<usize>,
    },
    /// Continue an interrupted preprocess run.
    Resume {
        manifest: PathBuf,
        /// Frame directory, if it moved since preprocessing.
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long)]
        max_windows: Option<usize>,
    },
    /// Replay a head trace (t,yaw,pitch,roll CSV) into per-frame EPOF.
    Epof {
        manifest: PathBuf,
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
    },
    /// Render one GRF mask PNG per frame along a head trace.
    GrfRender {
        manifest: PathBuf,
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 512)]
        width: u32,
        #[arg(long, default_value_t = 512)]
        height: u32,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
    },
    /// Print flow matrix percentiles.
    Percentiles {
        manifest: PathBuf,
        /// Percentiles in [0, 1].
        #[arg(long = "p", default_values_t = [0.1, 0.5, 0.9])]
        ps: Vec<f64>,
    },
    /// Normalize questionnaire scores by susceptibility and optical flow.
    TransformSsq {
        csv: PathBuf,
        /// Participants with less exposure are excluded (0 keeps all).
        #[arg(long, default_value_t = ssq::DEFAULT_MIN_OF)]
        min_of: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve projects over HTTP with a live WebSocket channel.
    Serve {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Render one perspective viewport from an equirect image.
    RenderViewport {
        frame: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        yaw: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        pitch: f64,
        #[arg(long, default_value_t = 107.0)]
        hfov: f64,
        #[arg(long, default_value_t = 512)]
        width: u32,
        #[arg(long, default_value_t = 512)]
        height: u32,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: io::Error) -> Self {
        Self {
            code: 2,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        Self {
            code: if e.is_io() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

impl From<SsqError> for Failure {
    fn from(e: SsqError) -> Self {
        let io = match &e {
            SsqError::Io(_) => true,
            SsqError::Csv(c) => c.is_io_error(),
            _ => false,
        };
        Self {
            code: if io { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path, e))
}

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| Failure::io(path, e))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Preprocess {
            frames_dir,
            out,
            fps,
            hfov,
            vfov,
            hstep,
            vstep,
            tile_width,
            alpha,
            iterations,
            levels,
            aggregation,
            seed,
            id,
            max_windows,
        } => {
            let settings = PreprocessSettings {
                fps,
                grid: GridParams {
                    hfov_deg: hfov,
                    vfov_deg: vfov,
                    h_step_deg: hstep,
                    v_step_deg: vstep,
                },
                tile_width,
                flow: FlowParams {
                    alpha,
                    iterations,
                    pyramid_levels: levels,
                },
                aggregation: match aggregation {
                    AggregationArg::Mean => Aggregation::Mean,
                    AggregationArg::P95 => Aggregation::P95,
                },
                grf: GrfConfig {
                    seed,
                    ..GrfConfig::default()
                },
                video_id: id,
            };
            fs::create_dir_all(&out).map_err(|e| Failure::io(&out, e))?;
            let manifest_path = out.join("manifest.json");
            let opts = RunOptions {
                max_windows,
                ..RunOptions::default()
            };
            let m = epof_core::store::preprocess(&frames_dir, &settings, &manifest_path, opts)?;
            report_progress(&m, &manifest_path)
        }
        Command::Resume {
            manifest,
            frames,
            max_windows,
        } => {
            let opts = RunOptions {
                max_windows,
                ..RunOptions::default()
            };
            let m = resume_preprocess(&manifest, frames.as_deref(), opts)?;
            report_progress(&m, &manifest)
        }
        Command::Epof { manifest, trace, out, k } => {
            let project = Project::open(&manifest)?;
            let trace = read_trace(open(&trace)?)?;
            let rows = project.replay(&trace, k)?;
            let mut w = create(&out)?;
            write_epof_csv(&mut w, &rows)?;
            w.flush().map_err(|e| Failure::io(&out, e))?;
            eprintln!("wrote {} frames to {}", rows.len(), out.display());
            Ok(())
        }
        Command::GrfRender {
            manifest,
            trace,
            out,
            width,
            height,
            k,
        } => {
            let project = Project::open(&manifest)?;
            let trace = read_trace(open(&trace)?)?;
            let paths = project.render_masks(&trace, k, width, height, &out)?;
            eprintln!("wrote {} masks to {}", paths.len(), out.display());
            Ok(())
        }
        Command::Percentiles { manifest, ps } => {
            let project = Project::open(&manifest)?;
            let values = project.matrix.percentiles(&ps).map_err(|e| Failure::invalid(e.to_string()))?;
            let mut stdout = io::stdout().lock();
            for (p, v) in ps.iter().zip(values) {
                writeln!(stdout, "p{}\t{v}", p * 100.0).map_err(|e| Failure::io(Path::new("stdout"), e))?;
            }
            Ok(())
        }
        Command::TransformSsq { csv, min_of, out } => {
            let records = ssq::read_participants(open(&csv)?)?;
            let (kept, excluded) = ssq::exclusion_filter(&records, min_of);
            for r in &excluded {
                eprintln!("excluded {}: OF {} below {min_of}", r.id, r.optical_flow);
            }
            let scores = ssq::transform_scores(&kept)?;
            match out {
                Some(path) => {
                    let mut w = create(&path)?;
                    ssq::write_transformed(&mut w, &kept, &scores)?;
                    w.flush().map_err(|e| Failure::io(&path, e))?;
                }
                None => ssq::write_transformed(io::stdout().lock(), &kept, &scores)?,
            }
            Ok(())
        }
        Command::Serve { manifests, port, host } => {
            let videos = manifests
                .iter()
                .map(epof_serve::Video::open)
                .collect::<Result<Vec<_>, _>>()?;
            let state = epof_serve::AppState::new(videos)?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::io(Path::new("runtime"), e))?;
            rt.block_on(async {
                let addr = format!("{host}:{port}");
                let listener = tokio::net::TcpListener::bind(&addr)
                    .await
                    .map_err(|e| Failure::io(Path::new(&addr), e))?;
                eprintln!("listening on http://{}", listener.local_addr().map_err(|e| Failure::io(Path::new(&addr), e))?);
                epof_serve::serve(listener, state).await.map_err(|e| Failure::io(Path::new(&addr), e))
            })
        }
        Command::RenderViewport {
            frame,
            out,
            yaw,
            pitch,
            hfov,
            width,
            height,
        } => {
            let img = image::open(&frame)
                .map_err(|e| match e {
                    image::ImageError::IoError(io) => Failure::io(&frame, io),
                    other => Failure::invalid(format!("{}: {other}", frame.display())),
                })?
                .to_rgb8();
            let eq = EquirectFrame::new(img).map_err(|e| Failure::invalid(e.to_string()))?;
            let vp = ViewportSpec::new(yaw, pitch, hfov, width, height).map_err(|e| Failure::invalid(e.to_string()))?;
            let map = build_pixel_map(&vp, eq.width(), eq.height()).map_err(|e| Failure::invalid(e.to_string()))?;
            let view = render_viewport(&eq, &map).map_err(|e| Failure::invalid(e.to_string()))?;
            view.save(&out).map_err(|e| match e {
                image::ImageError::IoError(io) => Failure::io(&out, io),
                other => Failure::invalid(format!("{}: {other}", out.display())),
            })
        }
    }
}

fn report_progress(m: &ProjectManifest, manifest_path: &Path) -> Result<(), Failure> {
    if m.is_complete() {
        let p = m.percentiles.expect("complete manifest has percentiles");
        eprintln!(
            "{}: {} windows x {} frames, p10 {:.4}, p90 {:.4}",
            manifest_path.display(),
            m.grid.n_windows,
            m.video.frame_count,
            p.p10,
            p.p90
        );
    } else {
        let pending = epof_core::store::pending_windows(m, manifest_path)?;
        eprintln!(
            "{}: {} of {} windows still pending; run `epof resume {}`",
            manifest_path.display(),
            pending.len(),
            m.grid.n_windows,
            manifest_path.display()
        );
    }
    Ok(())
}
