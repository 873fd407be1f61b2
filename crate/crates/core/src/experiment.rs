//! Runs a configured experiment and writes its artifacts.
//!
//! Every run produces `manifest.txt` (key=value, including the normalized
//! configuration) and, depending on the kind, CSV tables, `certificate.txt`
//! and SVG plots. A failed run writes `error.txt` instead of results. Files
//! are written to a temporary name in the output directory and renamed into
//! place.
//!
//! Exit codes: 0 when every check passes, 2 when a certificate or bound
//! fails, 1 on an execution error.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::lyapunov::{check, eval_l2, Certificate, Verdict};
use crate::paths::SeedSpec;
use crate::plot::{render_svg, Plot, Series};
use crate::sde::integrate_direct_run;
use crate::stability::{
    duality_gaps, estimate_moment, estimate_stay_probability, per_path, thread_count, StabilityReport,
};

pub const MANIFEST_HEADER: &str = "# tcsde run manifest";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Pass,
    CheckFailed,
    ExecutionError,
}

impl ExitStatus {
    pub fn code(&self) -> i32 {
        match self {
            ExitStatus::Pass => 0,
            ExitStatus::CheckFailed => 2,
            ExitStatus::ExecutionError => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: ExitStatus,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

struct Artifacts {
    files: Vec<(String, String)>,
    summary: Vec<String>,
    passed: bool,
}

impl Artifacts {
    fn new() -> Self {
        Self {
            files: Vec::new(),
            summary: Vec::new(),
            passed: true,
        }
    }

    fn file(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    fn note(&mut self, line: String) {
        self.summary.push(line);
    }

    fn require(&mut self, ok: bool) {
        self.passed &= ok;
    }
}

/// Writes `contents` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::Builder::new().prefix(&format!(".{name}.")).tempfile_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    let target = dir.join(name);
    tmp.persist(&target).map_err(|e| Error::Io(e.error.to_string()))?;
    Ok(target)
}

/// FNV-1a over the normalized configuration.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in cfg.to_normalized().bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Recovers configuration text from a manifest written by [`run_experiment`].
pub fn config_text_from_manifest(manifest: &str) -> Option<String> {
    if !manifest.starts_with(MANIFEST_HEADER) {
        return None;
    }
    let mut out = String::new();
    for line in manifest.lines() {
        if let Some(rest) = line.strip_prefix("config.") {
            let (k, v) = rest.split_once('=')?;
            let _ = writeln!(out, "{k} = {v}");
        }
    }
    Some(out)
}

fn moment_plot(title: &str, rep: &StabilityReport) -> String {
    let est: Vec<(f64, f64)> = rep.rows.iter().map(|r| (r.t, r.estimate)).collect();
    let band = rep.rows.iter().map(|r| (r.t, r.ci_lo, r.ci_hi)).collect();
    let mut plot = Plot::new(title, "t", "estimate")
        .with_series(Series::line("estimate", est).with_markers())
        .with_band(band);
    if rep.rows.iter().all(|r| r.bound.is_some()) {
        let bound = rep.rows.iter().map(|r| (r.t, r.bound.unwrap())).collect();
        plot = plot.with_series(Series::line("bound", bound).dashed());
    }
    render_svg(&plot)
}

fn stay_csv(rep: &StabilityReport, min: f64) -> String {
    let mut s = String::from("t,estimate,ci_lo,ci_hi,required,pass\n");
    for r in &rep.rows {
        let _ = writeln!(
            s,
            "{},{:.12e},{:.12e},{:.12e},{},{}",
            r.t,
            r.estimate,
            r.ci_lo,
            r.ci_hi,
            min,
            r.estimate >= min
        );
    }
    s
}

fn certificate_step(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Certificate> {
    let spec = cfg.tc_spec()?;
    let vc = cfg.candidate()?;
    let report = vc.check_invariants(&cfg.criteria.t1, 200, SeedSpec::new(cfg.mc.seed, u64::MAX));
    if !report.passed() {
        return Err(Error::Precondition(format!(
            "candidate {} is inconsistent: {}",
            vc.name,
            report.issues.join("; ")
        )));
    }
    let cert = check(&vc, &spec.coefficients, &spec.nu, &cfg.stability_criteria())?;
    let mut text = cert.render();
    if cfg.kind == ExperimentKind::ReproduceExample1 {
        let l2 = eval_l2(
            &vc,
            &spec.coefficients,
            &spec.nu,
            &cfg.integrator.quadrature,
            0.0,
            0.0,
            1.0,
        )?;
        let _ = writeln!(text, "L2V at x = 1: {l2:.6}");
    }
    art.file("certificate.txt", text);
    art.note(format!(
        "certificate: {} ({})",
        cert.verdict.word(),
        cert.theorem.name()
    ));
    art.require(cert.verdict == Verdict::Pass);
    Ok(cert)
}

fn moment_step(cfg: &ExperimentConfig, art: &mut Artifacts, bound_from: Option<&Certificate>) -> Result<()> {
    let spec = cfg.tc_spec()?;
    let mut rep = estimate_moment(&spec, &cfg.integrator, &cfg.mc.mc(), cfg.mc.p)?;
    let x0p = spec.x0.abs().powf(cfg.mc.p);
    let bound = match bound_from.and_then(|c| c.predicted_bound) {
        Some(b) => Some((b.factor, b.rate)),
        None if cfg.mc.bound_rate >= 0.0 => Some((cfg.mc.bound_factor, cfg.mc.bound_rate)),
        None => None,
    };
    if let Some((factor, rate)) = bound {
        rep.apply_bound(|t| factor * x0p * (-rate * t).exp(), cfg.mc.slack);
    }
    if rep.rows.iter().filter(|r| r.estimate > 0.0).count() >= 3 && rep.rows.iter().all(|r| r.estimate > 0.0) {
        let fit = rep.fit_decay()?;
        art.note(format!(
            "decay fit: C = {:.6}, lambda = {:.6}, max relative residual {:.3e}",
            fit.c, fit.lambda, fit.max_rel_residual
        ));
    }
    for r in &rep.rows {
        art.note(format!(
            "E|X({})|^{} = {:.6} [{:.6}, {:.6}]{}",
            r.t,
            cfg.mc.p,
            r.estimate,
            r.ci_lo,
            r.ci_hi,
            match (r.bound, r.pass) {
                (Some(b), Some(p)) => format!(" bound {b:.6} {}", if p { "pass" } else { "FAIL" }),
                _ => String::new(),
            }
        ));
    }
    if rep.blowups > 0 {
        art.note(format!("blow-ups: {} of {} paths", rep.blowups, rep.paths));
    }
    if !rep.valid {
        art.note("moment estimate invalid: more than 1% of paths blew up".into());
    }
    art.require(rep.passed());
    art.file("moment.csv", rep.to_csv());
    if cfg.output.svg {
        art.file("moment.svg", moment_plot("moment decay", &rep));
    }
    Ok(())
}

fn stay_step(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let spec = cfg.tc_spec()?;
    let rep = estimate_stay_probability(&spec, &cfg.integrator, &cfg.mc.mc(), cfg.mc.radius, cfg.mc.stay_horizon)?;
    let last = rep.rows.last().expect("stay report has a row at the horizon");
    art.note(format!(
        "P(sup_(t<={}) |X| < {}) = {:.4} [{:.4}, {:.4}], required {}",
        last.t, cfg.mc.radius, last.estimate, last.ci_lo, last.ci_hi, cfg.mc.stay_min
    ));
    art.require(last.estimate >= cfg.mc.stay_min);
    art.file("stay.csv", stay_csv(&rep, cfg.mc.stay_min));
    if cfg.output.svg {
        let pts = rep.rows.iter().map(|r| (r.t, r.estimate)).collect();
        let band = rep.rows.iter().map(|r| (r.t, r.ci_lo, r.ci_hi)).collect();
        let plot = Plot::new("stay probability", "T", "probability")
            .with_series(Series::line("estimate", pts).with_markers())
            .with_band(band);
        art.file("stay.svg", render_svg(&plot));
    }
    Ok(())
}

fn simulate_step(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let spec = cfg.tc_spec()?;
    let runs = per_path(cfg.mc.paths, cfg.mc.seed, |_, seed| {
        integrate_direct_run(&spec, &cfg.integrator, seed)
    })?;
    let mut csv = String::from("path,t,clock,x\n");
    let mut plot = Plot::new("sample paths", "t", "X(t)");
    for (i, run) in runs.into_iter().enumerate() {
        let run = run?;
        for (n, (&t, &x)) in run.path.grid().iter().zip(run.path.values()).enumerate() {
            let _ = writeln!(csv, "{i},{t},{},{x:.12e}", run.clock.value(n));
        }
        if i < 6 {
            let pts = run
                .path
                .grid()
                .iter()
                .copied()
                .zip(run.path.values().iter().copied())
                .collect();
            plot = plot.with_series(Series::line(format!("path {i}"), pts));
        }
    }
    art.note(format!(
        "simulated {} paths on [0, {}]",
        cfg.mc.paths, cfg.integrator.horizon
    ));
    art.file("paths.csv", csv);
    if cfg.output.svg {
        art.file("paths.svg", render_svg(&plot));
    }
    Ok(())
}

fn duality_step(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let spec = cfg.tc_spec()?;
    let rows = duality_gaps(&spec, &cfg.integrator, &cfg.mc.mc(), &cfg.mc.duality_steps)?;
    let mut csv = String::from("dt,mean_max_gap,ci_lo,ci_hi\n");
    for r in &rows {
        let (lo, hi) = r.gap.ci();
        let _ = writeln!(csv, "{},{:.12e},{:.12e},{:.12e}", r.dt, r.gap.mean, lo, hi);
        art.note(format!("dt = {}: mean max gap {:.6}", r.dt, r.gap.mean));
    }
    let monotone = rows.windows(2).all(|w| w[1].gap.mean < w[0].gap.mean);
    let last = rows.last().map(|r| r.gap.mean).unwrap_or(f64::NAN);
    let small = last < cfg.mc.duality_threshold;
    art.note(format!(
        "monotone decrease: {monotone}; finest gap {last:.6} below {}: {small}",
        cfg.mc.duality_threshold
    ));
    art.require(monotone && small);
    art.file("duality.csv", csv);
    if cfg.output.svg {
        let pts = rows.iter().map(|r| (r.dt, r.gap.mean)).collect();
        let plot =
            Plot::new("direct vs duality", "dt", "mean max gap").with_series(Series::line("gap", pts).with_markers());
        art.file("duality.svg", render_svg(&plot));
    }
    Ok(())
}

fn execute(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let mut art = Artifacts::new();
    match cfg.kind {
        ExperimentKind::Simulate => simulate_step(cfg, &mut art)?,
        ExperimentKind::VerifyLyapunov => {
            certificate_step(cfg, &mut art)?;
        }
        ExperimentKind::EstimateStability => {
            moment_step(cfg, &mut art, None)?;
            if cfg.mc.radius > 0.0 {
                stay_step(cfg, &mut art)?;
            }
        }
        ExperimentKind::CheckDuality => duality_step(cfg, &mut art)?,
        ExperimentKind::ReproduceExample1 => {
            certificate_step(cfg, &mut art)?;
            stay_step(cfg, &mut art)?;
        }
        ExperimentKind::ReproduceExample2 => {
            let cert = certificate_step(cfg, &mut art)?;
            moment_step(cfg, &mut art, Some(&cert))?;
        }
    }
    Ok(art)
}

fn manifest(
    cfg: &ExperimentConfig,
    status: ExitStatus,
    elapsed: f64,
    files: &[String],
    error: Option<&Error>,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MANIFEST_HEADER}");
    let _ = writeln!(s, "tool=tcsde");
    let _ = writeln!(s, "version={}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "experiment={}", cfg.kind.name());
    let _ = writeln!(
        s,
        "status={}",
        if error.is_some() {
            "error"
        } else if status == ExitStatus::Pass {
            "pass"
        } else {
            "fail"
        }
    );
    let _ = writeln!(s, "exit_code={}", status.code());
    let _ = writeln!(s, "seed={}", cfg.mc.seed);
    let _ = writeln!(s, "paths={}", cfg.mc.paths);
    let requested = thread_count().unwrap_or(0);
    let used = if requested == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        requested
    };
    let _ = writeln!(s, "threads_requested={requested}");
    let _ = writeln!(s, "threads_used={used}");
    let _ = writeln!(s, "config_hash={}", config_hash(cfg));
    let _ = writeln!(s, "elapsed_seconds={elapsed:.3}");
    let _ = writeln!(s, "artifacts={}", files.join(","));
    for (k, v) in cfg.to_key_values() {
        let _ = writeln!(s, "config.{k}={v}");
    }
    s
}

/// Runs the experiment, writes its artifacts and reports the exit status.
pub fn run_experiment(cfg: &ExperimentConfig) -> RunOutcome {
    let start = Instant::now();
    let dir = cfg.output.dir.clone();
    let result = execute(cfg);
    let elapsed = start.elapsed().as_secs_f64();
    let mut written = Vec::new();
    let (status, summary, error) = match result {
        Ok(art) => {
            let status = if art.passed {
                ExitStatus::Pass
            } else {
                ExitStatus::CheckFailed
            };
            let mut io_error = None;
            for (name, contents) in &art.files {
                match write_atomic(&dir, name, contents) {
                    Ok(p) => written.push(p),
                    Err(e) => {
                        io_error = Some(e);
                        break;
                    }
                }
            }
            match io_error {
                None => (status, art.summary.join("\n"), None),
                Some(e) => (ExitStatus::ExecutionError, e.to_string(), Some(e)),
            }
        }
        Err(e) => (ExitStatus::ExecutionError, e.to_string(), Some(e)),
    };
    if let Some(e) = &error {
        let record = format!(
            "status=error\nkind={}\nexperiment={}\nmessage={}\n",
            e.kind(),
            cfg.kind.name(),
            e.to_string().replace('\n', " ")
        );
        if let Ok(p) = write_atomic(&dir, "error.txt", &record) {
            written.push(p);
        }
    }
    let names: Vec<String> = written
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let text = manifest(cfg, status, elapsed, &names, error.as_ref());
    if let Ok(p) = write_atomic(&dir, "manifest.txt", &text) {
        written.push(p);
    }
    RunOutcome {
        status,
        files: written,
        summary,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;

    fn small(kind: ExperimentKind, dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::defaults(kind);
        cfg.mc.paths = 20;
        cfg.mc.stay_horizon = 1.0;
        cfg.integrator.dt = 1e-2;
        cfg.mc.duality_steps = vec![2e-2, 1e-2];
        cfg.criteria.x_points = 21;
        cfg.criteria.scatter = 0;
        cfg.output.dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(dir.path(), "a.txt", "one").unwrap();
        let p = write_atomic(dir.path(), "a.txt", "two").unwrap();
        assert_eq!(std::fs::read_to_string(p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn verify_example_two_passes() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&small(ExperimentKind::VerifyLyapunov, dir.path()));
        assert_eq!(out.status, ExitStatus::Pass, "{}", out.summary);
        let cert = std::fs::read_to_string(dir.path().join("certificate.txt")).unwrap();
        assert!(cert.starts_with("YES\n"));
    }

    #[test]
    fn failing_certificate_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(ExperimentKind::VerifyLyapunov, dir.path());
        cfg.sde.f.state = 1.0;
        let out = run_experiment(&cfg);
        assert_eq!(out.status.code(), 2);
        let cert = std::fs::read_to_string(dir.path().join("certificate.txt")).unwrap();
        assert!(cert.starts_with("NO\n"));
    }

    #[test]
    fn execution_error_writes_record() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(ExperimentKind::VerifyLyapunov, dir.path());
        cfg.criteria.alpha1 = 0.0;
        let out = run_experiment(&cfg);
        assert_eq!(out.status.code(), 1);
        let rec = std::fs::read_to_string(dir.path().join("error.txt")).unwrap();
        assert!(rec.contains("kind=criteria"));
        let man = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        assert!(man.contains("status=error"));
    }

    #[test]
    fn manifest_reproduces_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(ExperimentKind::Simulate, dir.path());
        cfg.mc.paths = 3;
        cfg.output.svg = true;
        let out = run_experiment(&cfg);
        assert_eq!(out.status, ExitStatus::Pass, "{}", out.summary);
        let man = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        let text = config_text_from_manifest(&man).unwrap();
        assert_eq!(parse_config_str(&text, "manifest").unwrap(), cfg);
        assert!(dir.path().join("paths.svg").exists());
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for d in [&a, &b] {
            let out = run_experiment(&small(ExperimentKind::EstimateStability, d.path()));
            assert_ne!(out.status, ExitStatus::ExecutionError, "{}", out.summary);
        }
        let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("moment.csv")).unwrap();
        assert_eq!(read(&a), read(&b));
    }
}
