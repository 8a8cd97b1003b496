//! `fpm`: simulate acquisitions, correct LED misalignment, reconstruct and
//! benchmark the correction methods.
//!
//! Exit codes: 0 success, 2 configuration error, 3 input-data error,
//! 4 failed assertion.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod pipeline;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fpm_core::field::ComplexField;
use fpm_core::forward::{
    band_limit, generate_dataset, make_ideal_pupil, synthesized_na, synthetic_object, AcquisitionStack,
};
use fpm_core::io;
use fpm_core::FpmError;
use serde::Serialize;

use config::RunConfig;
use pipeline::{run_method, MethodSummary, Mode};

const TRUTH_FILE: &str = "truth.npy";

#[derive(Parser)]
#[command(
    name = "fpm",
    version,
    about = "Fourier ptychographic microscopy with LED misalignment correction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an acquisition stack into `paths.stack_dir`.
    Simulate(Common),
    /// Optionally correct, then reconstruct into `paths.out_dir`.
    Reconstruct(RunArgs),
    /// Run only the correction search.
    Correct(RunArgs),
    /// Run every correction method on the same stack and tabulate them.
    Bench(BenchArgs),
    /// Compare `paths.out_dir/object.npy` with the simulated truth.
    Evaluate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    correct: Option<Mode>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Fail with exit code 4 unless the global search beats the per-LED baseline on wall time.
    #[arg(long)]
    assert_order: bool,
}

#[derive(Debug)]
enum CliError {
    Core(FpmError),
    Assertion(String),
}

impl From<FpmError> for CliError {
    fn from(e: FpmError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(FpmError::Config(_)) => 2,
            CliError::Core(_) => 3,
            CliError::Assertion(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Assertion(msg) => write!(f, "assertion failed: {msg}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = set_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code());
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn set_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("FPM_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| FpmError::Config(format!("FPM_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| FpmError::Config(e.to_string()))?;
    Ok(())
}

fn load(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(c) => simulate(&load(&c)?),
        Command::Reconstruct(a) => reconstruct(&load(&a.common)?, a.correct.unwrap_or(Mode::None)),
        Command::Correct(a) => correct(&load(&a.common)?, a.correct.unwrap_or(Mode::Mcfpm)),
        Command::Bench(a) => bench(&load(&a.common)?, a.assert_order),
        Command::Evaluate(c) => evaluate(&load(&c)?),
    }
}

fn object_from_images(cfg: &RunConfig, amplitude: &Path) -> CliResult<ComplexField> {
    let seg = cfg.segment()?;
    let amp = io::read_grayscale(amplitude)?;
    let shape_ok = |dim: (usize, usize)| dim == (seg.hr_size, seg.hr_size);
    if !shape_ok(amp.dim()) {
        return Err(FpmError::Input(format!(
            "{}: image is {:?}, expected {}x{}",
            amplitude.display(),
            amp.dim(),
            seg.hr_size,
            seg.hr_size
        ))
        .into());
    }
    let phase = match &cfg.object.phase_path {
        Some(p) => {
            let img = io::read_grayscale(p)?;
            if !shape_ok(img.dim()) {
                return Err(FpmError::Input(format!(
                    "{}: image is {:?}, expected {:?}",
                    p.display(),
                    img.dim(),
                    amp.dim()
                ))
                .into());
            }
            img.mapv(|v| cfg.object.phase_range_rad * (v - 0.5))
        }
        None => amp.mapv(|_| 0.0),
    };
    Ok(ComplexField::from_amplitude_phase(&amp, &phase, seg.hr_pitch())?)
}

fn simulate(cfg: &RunConfig) -> CliResult<()> {
    let seg = cfg.segment()?;
    let nominal = cfg.geometry()?;
    let truth_geom = cfg.true_geometry()?;
    let na = synthesized_na(&truth_geom, &seg, cfg.objective_na)?;
    let object = match &cfg.object.amplitude_path {
        Some(p) => band_limit(&object_from_images(cfg, p)?, na, nominal.wavelength),
        None => synthetic_object(&seg, nominal.wavelength, na, cfg.object.phase_range_rad, cfg.seed)?,
    };
    let pupil = make_ideal_pupil(seg.lr_size, seg.lr_pitch, cfg.objective_na, nominal.wavelength)?;
    let stack = generate_dataset(&object, &truth_geom, &nominal, &seg, &pupil, &cfg.noise())?;
    let dir = &cfg.paths.stack_dir;
    io::write_stack(dir, &stack)?;
    io::write_npy_complex(&dir.join(TRUTH_FILE), &object)?;
    println!("wrote {} images to {}", stack.len(), dir.display());
    Ok(())
}

fn read_truth(stack_dir: &Path, stack: &AcquisitionStack) -> CliResult<Option<ComplexField>> {
    let path = stack_dir.join(TRUTH_FILE);
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(io::read_npy_complex(&path, stack.segment.hr_pitch())?))
}

/// The stack as written, with the config's segment and NA checked against it.
fn read_stack(cfg: &RunConfig) -> CliResult<AcquisitionStack> {
    let stack = io::read_stack(&cfg.paths.stack_dir)?;
    if stack.segment.lr_size != cfg.segment.lr_size || stack.segment.hr_size != cfg.segment.hr_size {
        return Err(FpmError::Config(format!(
            "config segment {}->{} does not match the stack's {}->{}",
            cfg.segment.lr_size, cfg.segment.hr_size, stack.segment.lr_size, stack.segment.hr_size
        ))
        .into());
    }
    Ok(stack)
}

#[derive(Serialize)]
struct CorrectionReport<'a> {
    method: Mode,
    #[serde(flatten)]
    result: Option<&'a fpm_core::correction::CorrectionResult>,
    shift_estimate_m: (f64, f64),
    trace_path: Option<PathBuf>,
    /// Per-LED wave vectors (rad/m), for methods that move LEDs individually.
    wave_vectors: Option<Vec<(i32, i32, f64, f64)>>,
}

fn write_correction(out: &Path, run: &pipeline::MethodRun) -> CliResult<()> {
    let trace_path = match &run.correction {
        Some(c) => {
            let p = io::output_path(out, "trace.csv")?;
            io::write_trace_csv(&p, &c.evaluations)?;
            Some(p)
        }
        None => None,
    };
    let wave_vectors = matches!(run.mode, Mode::Sa | Mode::McfpmLocal).then(|| {
        run.plan
            .iter()
            .map(|i| (i.led.m, i.led.n, i.wave_vector.kx, i.wave_vector.ky))
            .collect()
    });
    let report = CorrectionReport {
        method: run.mode,
        result: run.correction.as_ref(),
        shift_estimate_m: run.shift,
        trace_path,
        wave_vectors,
    };
    io::write_json(&io::output_path(out, "correction.json")?, &report)?;
    Ok(())
}

fn reconstruct(cfg: &RunConfig, mode: Mode) -> CliResult<()> {
    let stack = read_stack(cfg)?;
    let truth = read_truth(&cfg.paths.stack_dir, &stack)?;
    let run = run_method(&stack, cfg, mode)?;
    let out = &cfg.paths.out_dir;
    io::write_field_pngs(
        &io::output_path(out, "amplitude.png")?,
        &out.join("phase.png"),
        &run.object,
    )?;
    io::write_npy_complex(&out.join("object.npy"), &run.object)?;
    io::write_npy_complex(&out.join("pupil.npy"), &run.state.pupil.mask)?;
    io::write_cost_csv(&out.join("cost.csv"), &run.state.cost_history)?;
    write_correction(out, &run)?;
    if let Some(report) = run.report(&stack, truth.as_ref())? {
        io::write_json(&out.join("report.json"), &report)?;
        println!(
            "{mode}: amplitude rmse {:.4} (rel {:.4}), phase rmse {:.4} rad",
            report.field.rmse_amplitude, report.field.rmse_amplitude_rel, report.field.rmse_phase
        );
    }
    println!(
        "{mode}: shift estimate ({:.4}, {:.4}) mm, {:.1} s",
        run.shift.0 * 1e3,
        run.shift.1 * 1e3,
        run.wall_time
    );
    Ok(())
}

fn correct(cfg: &RunConfig, mode: Mode) -> CliResult<()> {
    if mode == Mode::None {
        return Err(FpmError::Config("`correct` needs a correction method".into()).into());
    }
    let stack = read_stack(cfg)?;
    let run = run_method(&stack, cfg, mode)?;
    write_correction(&cfg.paths.out_dir, &run)?;
    println!(
        "{mode}: shift estimate ({:.4}, {:.4}) mm",
        run.shift.0 * 1e3,
        run.shift.1 * 1e3
    );
    Ok(())
}

fn bench(cfg: &RunConfig, assert_order: bool) -> CliResult<()> {
    let stack = read_stack(cfg)?;
    let truth = read_truth(&cfg.paths.stack_dir, &stack)?;
    let mut rows: Vec<MethodSummary> = Vec::new();
    for mode in Mode::ALL {
        let run = run_method(&stack, cfg, mode)?;
        let row = run.summary(&stack, truth.as_ref())?;
        println!(
            "{:<12} {:>8.1} s  evals {:>7}  syntheses {:>9}",
            mode.to_string(),
            row.wall_time_s,
            row.n_cost_evals,
            row.n_forward_syntheses
        );
        rows.push(row);
    }
    let out = &cfg.paths.out_dir;
    io::write_json(&io::output_path(out, "bench.json")?, &rows)?;
    write_bench_csv(&out.join("bench.csv"), &rows)?;

    if assert_order {
        let time = |m: Mode| {
            rows.iter()
                .find(|r| r.method == m)
                .map(|r| r.wall_time_s)
                .unwrap_or(f64::NAN)
        };
        let (mc, sa) = (time(Mode::Mcfpm), time(Mode::Sa));
        if !(mc < sa) {
            return Err(CliError::Assertion(format!(
                "mcfpm took {mc:.1} s, per-LED search {sa:.1} s"
            )));
        }
    }
    Ok(())
}

fn write_bench_csv(path: &Path, rows: &[MethodSummary]) -> CliResult<()> {
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    let mut text = String::from(
        "method,wall_time_s,n_cost_evals,n_forward_syntheses,shift_dx_mm,shift_dy_mm,final_data_misfit,\
         rmse_amplitude,rmse_amplitude_rel,rmse_phase,shift_error_dx_mm,shift_error_dy_mm,disorder_metric_mm\n",
    );
    for r in rows {
        let err = r.shift_error_mm;
        text += &format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.method,
            r.wall_time_s,
            r.n_cost_evals,
            r.n_forward_syntheses,
            r.shift_estimate_mm[0],
            r.shift_estimate_mm[1],
            r.final_data_misfit,
            opt(r.rmse_amplitude),
            opt(r.rmse_amplitude_rel),
            opt(r.rmse_phase),
            opt(err.map(|e| e[0])),
            opt(err.map(|e| e[1])),
            r.disorder_metric_mm
        );
    }
    fs::write(path, text).map_err(|source| {
        FpmError::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

fn evaluate(cfg: &RunConfig) -> CliResult<()> {
    let stack = read_stack(cfg)?;
    let truth = read_truth(&cfg.paths.stack_dir, &stack)?
        .ok_or_else(|| FpmError::Input(format!("no {TRUTH_FILE} in {}", cfg.paths.stack_dir.display())))?;
    let object = io::read_npy_complex(&cfg.paths.out_dir.join("object.npy"), stack.segment.hr_pitch())?;
    let field = fpm_core::metrics::compare_fields(&object, &truth, Default::default())?;
    let report = fpm_core::metrics::EvalReport::new(field);
    io::write_json(&cfg.paths.out_dir.join("evaluation.json"), &report)?;
    println!(
        "amplitude rmse {:.4} (rel {:.4}), phase rmse {:.4} rad, psnr {:.1} dB",
        field.rmse_amplitude, field.rmse_amplitude_rel, field.rmse_phase, field.psnr_amplitude
    );
    Ok(())
}
