//! Command-line driver.
//!
//! Every subcommand reads a [`RunConfig`] (optional `--config` file, then
//! `--key value` overrides) and writes its outputs plus a manifest under the
//! output directory. Failures print one line
//! `error: category=<cat> message="<text>"` to stderr.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use spectral_homotopy::oracle::random_family_checks;
use spectral_homotopy::report::{
    self, correspondence_csv, file_tag, normalization, parse_events_csv, parse_trajectories_csv, write_outputs,
    EventRow,
};
use spectral_homotopy::track::{self, mode_number, Homotopy, Labeler};
use spectral_homotopy::{
    build_correspondence, disc_modes, emit_summary, square_modes, Error, RunConfig, RunManifest,
    SymmetryFamily,
};

/// Default output directory when neither `--out` nor the config sets one.
pub const OUT_ENV: &str = "SPECTRAL_HOMOTOPY_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "spectral-homotopy", version, about = "Neumann-Laplacian eigenvalue homotopies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// circleH, circleF or carpetG<j>.
    #[arg(long)]
    map: Option<String>,
    /// Comma-separated families (1++, 1+-, 1-+, 1--, 2) or `all`.
    #[arg(long, visible_alias = "families")]
    family: Option<String>,
    /// Point count or comma-separated parameter list.
    #[arg(long)]
    grid: Option<String>,
    /// Target mesh size; fractions such as 1/64 are accepted.
    #[arg(long)]
    h: Option<String>,
    /// Eigenvalues per family (including the constant mode).
    #[arg(long = "n", visible_alias = "n-modes")]
    n: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    threshold: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Output directory (default: $SPECTRAL_HOMOTOPY_OUT, else ./spectral-homotopy-out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve at a single parameter and print the spectrum.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        t: f64,
    },
    /// Sweep the homotopy, track modes, classify events and emit reports.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Record candidate events without refining them.
        #[arg(long)]
        no_refine: bool,
    },
    /// Refine and classify the events stored in the output directory.
    Classify {
        #[command(flatten)]
        common: Common,
        /// Half-width of the refinement window around each event.
        #[arg(long, default_value_t = 0.1)]
        window: f64,
    },
    /// Print closed-form square or disc spectra.
    Oracle {
        #[arg(long, value_parser = ["square", "circle"])]
        shape: String,
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Print `label,normalized_value` CSV instead of `label:value`.
        #[arg(long)]
        csv: bool,
    },
    /// Check eigenvalue derivative formulas on random symmetric matrix families.
    Perturb {
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 12)]
        max_dim: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Re-emit plots and manifest from stored CSV outputs.
    Report {
        #[command(flatten)]
        common: Common,
        /// Directory holding trajectories.csv, events.csv and manifest.txt
        /// (default: the output directory).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Measure relative gaps on known square coincidences.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug)]
struct Failure {
    code: i32,
    category: String,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::Argument(_) => EXIT_USAGE,
            Error::Io(_) | Error::Format(_) => EXIT_IO,
            _ => EXIT_NUMERICAL,
        };
        Failure {
            code,
            category: e.category().to_string(),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

type Outcome = Result<(), Failure>;

/// Run with process arguments (including the program name); returns the exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return EXIT_OK;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            let _ = writeln!(err, "error: category=usage message=\"{}\"", escape(first));
            return EXIT_USAGE;
        }
    };
    let result = match cli.command {
        Command::Solve { common, t } => solve(&common, t, out),
        Command::Sweep { common, no_refine } => sweep(&common, no_refine, out),
        Command::Classify { common, window } => classify(&common, window, out),
        Command::Oracle { shape, family, count, csv } => oracle(&shape, &family, count, csv, out),
        Command::Perturb { count, max_dim, seed } => perturb(count, max_dim, seed, out),
        Command::Report { common, input } => report_cmd(&common, input, out),
        Command::Calibrate { common } => calibrate(&common, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: category={} message=\"{}\"", f.category, escape(&f.message));
            f.code
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ")
}

fn config(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::from(Error::Config(format!("cannot read {}: {e}", p.display()))))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if cfg.out_dir == RunConfig::default().out_dir {
        if let Some(dir) = std::env::var_os(OUT_ENV).filter(|d| !d.is_empty()) {
            cfg.out_dir = PathBuf::from(dir);
        }
    }
    let overrides = [
        ("map", &common.map),
        ("families", &common.family),
        ("grid", &common.grid),
        ("h", &common.h),
        ("n_modes", &common.n),
        ("tol", &common.tol),
        ("threshold", &common.threshold),
        ("seed", &common.seed),
    ];
    for (k, v) in overrides {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, body: &str) -> Outcome {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, body)?;
    Ok(())
}

fn solve(common: &Common, t: f64, out: &mut dyn Write) -> Outcome {
    let cfg = config(common)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Argument(format!("--t {t} outside [0, 1]")).into());
    }
    let started = Instant::now();
    let mut manifest = RunManifest::new(&cfg);
    let scale = normalization(cfg.map);
    let mut csv = String::from("family,index,lambda_raw,lambda_normalized,residual\n");
    writeln!(out, "# map={} t={t} h={}", cfg.map, cfg.h)?;
    for &family in &cfg.families {
        let hom = Homotopy::new(cfg.map, family, cfg.h, cfg.sweep_options())?;
        let snap = hom.solve(t)?;
        writeln!(out, "family {family}")?;
        for i in 0..cfg.n_modes.min(snap.spectrum.len()) {
            let lam = snap.spectrum.eigenvalues[i];
            let res = snap.spectrum.residuals[i];
            writeln!(out, "{i:>3} {:>14.6} {:>12.6} {res:.2e}", lam, lam * scale)?;
            csv.push_str(&format!(
                "{family},{i},{},{},{}\n",
                report::fmt_real(lam),
                report::fmt_real(lam * scale),
                report::fmt_real(res)
            ));
        }
    }
    manifest.stages.push(("solve".into(), started.elapsed().as_secs_f64()));
    write_file(&cfg.out_dir.join("spectrum.csv"), &csv)?;
    write_file(&cfg.out_dir.join("manifest.txt"), &manifest.to_text())?;
    Ok(())
}

fn sweep(common: &Common, no_refine: bool, out: &mut dyn Write) -> Outcome {
    let cfg = config(common)?;
    let mut manifest = RunManifest::new(&cfg);
    let grid = cfg.t_grid();
    let mut sets = Vec::new();
    for &family in &cfg.families {
        let started = Instant::now();
        let mut opts = cfg.sweep_options();
        opts.refine = !no_refine;
        let hom = Homotopy::new(cfg.map, family, cfg.h, opts)?;
        let set = track::sweep_with(&hom, &grid)?;
        let (ls, le) = Labeler::for_map(cfg.map);
        let corr = build_correspondence(&set, ls, le)?;
        write_file(
            &cfg.out_dir.join(format!("correspondence_{}.csv", file_tag(family))),
            &correspondence_csv(&corr),
        )?;
        writeln!(out, "family {family}: {} parameters, {} events", set.t_grid.len(), set.events.len())?;
        for e in &set.events {
            writeln!(
                out,
                "  modes {}/{} t*={:.5} min_E={:.3e} {}",
                mode_number(family, e.pair.0),
                mode_number(family, e.pair.1),
                e.t_star,
                e.min_e,
                e.kind
            )?;
        }
        manifest
            .stages
            .push((format!("sweep.{}", file_tag(family)), started.elapsed().as_secs_f64()));
        sets.push(set);
    }
    let emitted = emit_summary(&sets, &cfg.out_dir, &manifest)?;
    writeln!(out, "wrote {}", emitted.trajectories.display())?;
    Ok(())
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| {
        Failure::from(Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
    })
}

fn classify(common: &Common, window: f64, out: &mut dyn Write) -> Outcome {
    let cfg = config(common)?;
    if window.is_nan() || window <= 0.0 {
        return Err(Error::Config(format!("window {window} must be positive")).into());
    }
    let manifest_path = cfg.out_dir.join("manifest.txt");
    let mut manifest = RunManifest::parse(&read(&manifest_path)?)?;
    let stored = manifest
        .config
        .clone()
        .ok_or_else(|| Failure::from(Error::Format("manifest lacks a configuration".into())))?;
    let events_path = cfg.out_dir.join("events.csv");
    let events = parse_events_csv(&read(&events_path)?)?;
    let started = Instant::now();
    let offset = report::t_offset(stored.map);
    let lo = if stored.map.reversed_time() { track::SweepOptions::default().carpet_delta } else { 0.0 };
    let mut refined = Vec::with_capacity(events.len());
    for e in &events {
        let base = if e.family.has_constant() { 0 } else { 1 };
        let pair = (e.mode_a - base, e.mode_b - base);
        let t = e.t_star - offset;
        let win = ((t - window).max(lo), (t + window).min(1.0));
        let ev = spectral_homotopy::refine_event(stored.map, e.family, pair, win, stored.h)?;
        writeln!(
            out,
            "family {} modes {}/{}: t*={:.5} min_E={:.3e} {} (swap {})",
            e.family, e.mode_a, e.mode_b, ev.t_star, ev.min_e, ev.kind, ev.swap_detected
        )?;
        refined.push(EventRow {
            family: e.family,
            mode_a: e.mode_a,
            mode_b: e.mode_b,
            t_star: offset + ev.t_star,
            min_e: ev.min_e,
            kind: ev.kind,
        });
    }
    write_file(&events_path, &report::events_csv(&refined))?;
    manifest.stages.push(("classify".into(), started.elapsed().as_secs_f64()));
    write_file(&manifest_path, &manifest.to_text())?;
    Ok(())
}

fn oracle(shape: &str, family: &str, count: usize, csv: bool, out: &mut dyn Write) -> Outcome {
    let family: SymmetryFamily = family.parse()?;
    let labels = match shape {
        "square" => square_modes(family, count),
        _ => disc_modes(family, count)?,
    };
    if csv {
        writeln!(out, "label,normalized_value")?;
    }
    for l in labels {
        let label = if l.is_constant() { "(0,0)".to_string() } else { l.table_label() };
        if csv {
            writeln!(out, "\"{label}\",{}", report::fmt_real(l.normalized_value))?;
        } else {
            writeln!(out, "{label}:{}", l.normalized_value)?;
        }
    }
    Ok(())
}

fn perturb(count: usize, max_dim: usize, seed: u64, out: &mut dyn Write) -> Outcome {
    let reports = random_family_checks(count, max_dim, seed)?;
    let mut worst = (0.0f64, 0.0f64);
    let mut approaches = 0;
    let mut repelling = 0;
    for (i, r) in reports.iter().enumerate() {
        let rep = r.approaches.iter().filter(|a| a.repels()).count();
        writeln!(
            out,
            "family {i:>2} n={:>2} t={:+.4} lambda'_err={:.2e} lambda''_err={:.2e} approaches={} repelling={rep}",
            r.dim,
            r.t,
            r.d1_error,
            r.d2_error,
            r.approaches.len()
        )?;
        worst = (worst.0.max(r.d1_error), worst.1.max(r.d2_error));
        approaches += r.approaches.len();
        repelling += rep;
    }
    writeln!(
        out,
        "worst lambda' error {:.2e}, worst lambda'' error {:.2e}, {repelling}/{approaches} near-approaches repel",
        worst.0, worst.1
    )?;
    if worst.0 > 1e-6 || worst.1 > 1e-4 || repelling != approaches {
        return Err(Error::Tracking("derivative formulas disagree with finite differences".into()).into());
    }
    Ok(())
}

fn report_cmd(common: &Common, input: Option<PathBuf>, out: &mut dyn Write) -> Outcome {
    let cfg = config(common)?;
    let input = input.unwrap_or_else(|| cfg.out_dir.clone());
    let rows = parse_trajectories_csv(&read(&input.join("trajectories.csv"))?)?;
    let events = parse_events_csv(&read(&input.join("events.csv"))?)?;
    let manifest = RunManifest::parse(&read(&input.join("manifest.txt"))?)?;
    let mut families: Vec<SymmetryFamily> = rows.iter().map(|r| r.family).collect();
    families.sort();
    families.dedup();
    let emitted = write_outputs(&cfg.out_dir, &families, &rows, &events, &manifest)?;
    writeln!(out, "wrote {} plots under {}", emitted.plots.len(), cfg.out_dir.display())?;
    Ok(())
}

fn calibrate(common: &Common, out: &mut dyn Write) -> Outcome {
    let cfg = config(common)?;
    let started = Instant::now();
    let cal = track::calibrate_threshold(&cfg.families, cfg.h, cfg.n_modes)?;
    let mut csv = String::from("family,label_a,label_b,index,E\n");
    for c in &cal.coincidences {
        let (a, b) = (c.labels.0.table_label(), c.labels.1.table_label());
        writeln!(out, "family {} {a}/{b} index {} E={:.3e}", c.family, c.index, c.gap)?;
        csv.push_str(&format!(
            "{},\"{a}\",\"{b}\",{},{}\n",
            c.family,
            c.index,
            report::fmt_real(c.gap)
        ));
    }
    writeln!(out, "calibrated threshold {:.3e} at h = {}", cal.threshold, cal.h)?;
    let mut manifest = RunManifest::new(&cfg);
    manifest.calibrated_threshold = Some(cal.threshold);
    manifest.stages.push(("calibrate".into(), started.elapsed().as_secs_f64()));
    write_file(&cfg.out_dir.join("calibration.csv"), &csv)?;
    write_file(&cfg.out_dir.join("manifest.txt"), &manifest.to_text())?;
    Ok(())
}

