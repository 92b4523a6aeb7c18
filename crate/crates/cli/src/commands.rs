//! Pipeline stages. Each stage reads the artifacts of earlier stages from
//! the output directory and writes its own subdirectory:
//!
//! ```text
//! <output_dir>/train/       manifest.json, ckpt_*.hscp, loss.csv
//! <output_dir>/eigen/       spectrum.csv, stats.csv, vectors/*.hsev
//! <output_dir>/track/       curvature_series.csv
//! <output_dir>/probe/       profiles.csv
//! <output_dir>/fit/         fits.csv
//! <output_dir>/linesearch/  linesearch.csv
//! <output_dir>/improve/     improve.csv
//! <output_dir>/negcurve/    negcurve_log.csv, comparison.csv
//! ```
//!
//! Every stage directory also receives `config.resolved.toml`.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use hessianscope::analysis::{
    curvature_over_time, directional_loss_profile, improvement_report, quadratic_fit, LineSearchResult, StepGrid,
};
use hessianscope::eigen::{lanczos_extreme_flagged, EigenPair, Side};
use hessianscope::io::{
    eigenvector_path, load_trajectory, read_eigenvector, save_trajectory, write_atomic, write_eigenvector, Manifest,
    Trajectory, FORMAT_VERSION, MOMENTUM_COMPOSITION,
};
use hessianscope::negcurve::{run_alternating, NegCurveConfig};
use hessianscope::par;
use hessianscope::svg::{Mark, Plot, Series};
use hessianscope::train::{train_objective, Schedule};
use hessianscope::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::config::{Resolved, RESOLVED_CONFIG_FILE};
use crate::error::CliError;
use crate::problem::{Operator, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Options {
    /// Upper bound on concurrently analyzed directions or solves.
    pub jobs: usize,
    pub svg: bool,
    /// Record the wall-clock time in the trajectory manifest.
    pub timestamp: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options { jobs: 1, svg: false, timestamp: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Train,
    Eigen,
    Track,
    Probe,
    Fit,
    LineSearch,
    Improve,
    NegCurve,
}

impl Stage {
    pub fn dir_name(self) -> &'static str {
        match self {
            Stage::Train => "train",
            Stage::Eigen => "eigen",
            Stage::Track => "track",
            Stage::Probe => "probe",
            Stage::Fit => "fit",
            Stage::LineSearch => "linesearch",
            Stage::Improve => "improve",
            Stage::NegCurve => "negcurve",
        }
    }
}

pub struct Context {
    pub resolved: Resolved,
    pub opts: Options,
    pub problem: Problem,
}

/// One row of `spectrum.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub t: u64,
    pub side: Side,
    pub rank: usize,
    pub lambda: f64,
    pub residual: f64,
    pub converged: u8,
    /// Relative to the eigen stage directory.
    pub vecfile: String,
}

#[derive(Debug, Clone, Serialize)]
struct SolveStats {
    t: u64,
    side: Side,
    k: usize,
    converged: usize,
    applications: u64,
    subset_id: String,
    l2: f64,
}

#[derive(Debug, Clone, Serialize)]
struct LossRow {
    step: u64,
    loss: f64,
    lr: f64,
}

#[derive(Debug, Clone, Serialize)]
struct SeriesRow {
    side: Side,
    rank: usize,
    t0: u64,
    lambda_t0: f64,
    t: u64,
    curvature: f64,
}

#[derive(Debug, Clone, Serialize)]
struct ProfileRow {
    side: Side,
    i: usize,
    lambda: f64,
    converged: u8,
    projection: f64,
    alpha_max: f64,
    alpha: f64,
    true_loss: Option<f64>,
    quad_model: f64,
}

#[derive(Debug, Clone, Serialize)]
struct FitRow {
    side: Side,
    i: usize,
    lambda: f64,
    converged: u8,
    range: f64,
    y: Option<f64>,
    c0: Option<f64>,
    c1: Option<f64>,
    c2: Option<f64>,
    residual: Option<f64>,
    degenerate: u8,
}

#[derive(Debug, Clone, Serialize)]
struct LineSearchRow {
    side: Side,
    i: usize,
    lambda: f64,
    converged: u8,
    projection: f64,
    alpha_star: f64,
    inv_alpha_star: Option<f64>,
    achieved_loss: f64,
    #[serde(rename = "delta_L")]
    delta_l: f64,
    boundary: u8,
    degenerate: u8,
}

#[derive(Debug, Clone, Serialize)]
struct ImproveRow {
    side: Side,
    i: usize,
    lambda: f64,
    converged: u8,
    projection: f64,
    alpha_star: f64,
    inv_alpha_star: Option<f64>,
    #[serde(rename = "delta_L")]
    delta_l: f64,
    abs_alpha_lambda: f64,
    boundary: u8,
    degenerate: u8,
}

#[derive(Debug, Clone, Serialize)]
struct NegCurveLogRow {
    t: u64,
    loss: f64,
    lambda: f64,
    g_dot_v: Option<f64>,
    fired: u8,
}

#[derive(Debug, Clone, Serialize)]
struct ComparisonRow {
    run: &'static str,
    steps: u64,
    final_loss: f64,
    fired_steps: usize,
    hvp_calls: u64,
    eta: Option<f64>,
}

/// An eigenpair read back from the eigen stage.
#[derive(Debug, Clone)]
pub struct SpectrumEntry {
    pub t: u64,
    pub side: Side,
    pub rank: usize,
    pub converged: bool,
    pub pair: EigenPair,
}

fn flag(b: bool) -> u8 {
    u8::from(b)
}

fn csv_bytes<T: Serialize>(rows: &[T], header: &[&str]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), CliError> {
    let bytes = csv_bytes(rows, header)?;
    write_atomic(path, &bytes).map_err(|e| map_io(e, path))
}

fn map_io(e: CoreError, path: &Path) -> CliError {
    match e {
        CoreError::Io(source) => CliError::io(path, source),
        other => CliError::Core(other),
    }
}

impl Context {
    pub fn new(resolved: Resolved, opts: Options) -> Result<Context, CliError> {
        let problem = Problem::build(&resolved.config)?;
        Ok(Context { resolved, opts, problem })
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.resolved.config.output_dir.join(stage.dir_name())
    }

    fn prepare(&self, stage: Stage) -> Result<PathBuf, CliError> {
        let dir = self.stage_dir(stage);
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let path = dir.join(RESOLVED_CONFIG_FILE);
        write_atomic(&path, self.resolved.text.as_bytes()).map_err(|e| map_io(e, &path))?;
        Ok(dir)
    }

    fn write_svg(&self, path: PathBuf, plot: &Plot) -> Result<(), CliError> {
        if self.opts.svg {
            write_atomic(&path, plot.render().as_bytes()).map_err(|e| map_io(e, &path))?;
        }
        Ok(())
    }

    pub fn trajectory(&self) -> Result<Trajectory, CliError> {
        let dir = self.stage_dir(Stage::Train);
        let t = load_trajectory(&dir).map_err(|e| match e {
            CoreError::Io(ref io) if io.kind() == ErrorKind::NotFound => {
                CliError::Missing(format!("no trajectory in {}; run `train` first", dir.display()))
            }
            other => map_io(other, &dir),
        })?;
        if t.manifest.dim != self.problem.dim() {
            return Err(CliError::Config(format!(
                "trajectory has d = {} but the configured problem has d = {}",
                t.manifest.dim,
                self.problem.dim()
            )));
        }
        Ok(t)
    }

    /// Every eigenpair recorded by the eigen stage.
    pub fn spectrum(&self) -> Result<Vec<SpectrumEntry>, CliError> {
        let dir = self.stage_dir(Stage::Eigen);
        let path = dir.join("spectrum.csv");
        if !path.is_file() {
            return Err(CliError::Missing(format!("{} not found; run `eigen` first", path.display())));
        }
        let mut reader = csv::Reader::from_path(&path)?;
        let mut out = Vec::new();
        for row in reader.deserialize() {
            let row: SpectrumRow = row?;
            let vpath = dir.join(&row.vecfile);
            let (t, pair) = read_eigenvector(&vpath).map_err(|e| map_io(e, &vpath))?;
            if t != row.t {
                return Err(CliError::Missing(format!("{} holds step {t}, spectrum.csv says {}", row.vecfile, row.t)));
            }
            pair.vector.check_dim(self.problem.dim())?;
            out.push(SpectrumEntry { t, side: row.side, rank: row.rank, converged: row.converged == 1, pair });
        }
        if out.is_empty() {
            return Err(CliError::Missing(format!("{} lists no eigenpairs", path.display())));
        }
        Ok(out)
    }

    fn entries_at(&self, spectrum: &[SpectrumEntry], step: u64) -> Result<Vec<SpectrumEntry>, CliError> {
        let at: Vec<SpectrumEntry> = spectrum.iter().filter(|e| e.t == step).cloned().collect();
        if at.is_empty() {
            let mut steps: Vec<u64> = spectrum.iter().map(|e| e.t).collect();
            steps.dedup();
            return Err(CliError::Missing(format!("no eigenpairs at step {step}; decomposed steps: {steps:?}")));
        }
        Ok(at)
    }

    fn analysis_step(&self, spectrum: &[SpectrumEntry]) -> u64 {
        self.resolved.config.analysis.at_step.unwrap_or_else(|| spectrum.iter().map(|e| e.t).max().expect("non-empty"))
    }

    pub fn train(&self) -> Result<Trajectory, CliError> {
        let cfg = &self.resolved.config;
        let dir = self.prepare(Stage::Train)?;
        let op = self.problem.training_operator()?;
        let schedule = Schedule {
            total_steps: cfg.train.total_steps,
            checkpoint_every: cfg.train.checkpoint_every,
            seed: cfg.seeds().batches,
        };
        let rms = cfg.train.rmsprop();
        let checkpoints = train_objective(&op, self.problem.initial_params()?, &rms, schedule)?;
        let timestamp = self
            .opts
            .timestamp
            .then(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0).to_string());
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            dim: self.problem.dim(),
            model: self.problem.model().cloned(),
            provenance: self.problem.provenance(),
            trainer: rms,
            momentum_composition: MOMENTUM_COMPOSITION.to_string(),
            batch_seed: schedule.seed,
            total_steps: schedule.total_steps,
            checkpoint_every: schedule.checkpoint_every,
            config_hash: self.resolved.hash.clone(),
            steps: Vec::new(),
            files: Vec::new(),
            timestamp,
        };
        let trajectory = Trajectory { manifest, checkpoints };
        save_trajectory(&dir, &trajectory).map_err(|e| map_io(e, &dir))?;
        let rows: Vec<LossRow> =
            trajectory.checkpoints.iter().map(|c| LossRow { step: c.step, loss: c.loss, lr: c.lr }).collect();
        write_csv(&dir.join("loss.csv"), &rows, &["step", "loss", "lr"])?;
        let pts = rows.iter().map(|r| (r.step as f64, r.loss)).collect();
        self.write_svg(
            dir.join("loss.svg"),
            &Plot::new("Training loss", "step", "loss").with_series(Series::new("full-set loss", pts, Mark::Line)),
        )?;
        Ok(trajectory)
    }

    pub fn eigen(&self) -> Result<Vec<SpectrumRow>, CliError> {
        let cfg = &self.resolved.config;
        let traj = self.trajectory()?;
        let d = self.problem.dim();
        if cfg.eigen.k > d {
            return Err(CliError::Config(format!("eigen.k = {} exceeds d = {d}", cfg.eigen.k)));
        }
        let steps = cfg.eigen.steps.clone().unwrap_or_else(|| vec![*traj.steps().last().expect("non-empty")]);
        let mut jobs = Vec::new();
        for &t in &steps {
            let c = traj.checkpoint(t)?;
            for &side in &cfg.eigen.sides {
                jobs.push((c, side));
            }
        }
        let dir = self.prepare(Stage::Eigen)?;
        let vec_dir = dir.join("vectors");
        fs::create_dir_all(&vec_dir).map_err(|e| CliError::io(&vec_dir, e))?;
        let (op, subset_id) = self.problem.analysis_operator()?;
        let lanczos = cfg.lanczos();
        let reports = par::map(self.opts.jobs, &jobs, |(c, side)| {
            lanczos_extreme_flagged(&op, &c.theta, cfg.eigen.k, *side, &lanczos)
        });
        let mut rows = Vec::new();
        let mut stats = Vec::new();
        let mut unconverged = Vec::new();
        for ((c, side), report) in jobs.iter().zip(reports) {
            let report = report?;
            for (rank, (pair, &ok)) in report.pairs.iter().zip(&report.converged).enumerate() {
                let path = eigenvector_path(&vec_dir, c.step, *side, rank);
                write_eigenvector(&path, c.step, pair).map_err(|e| map_io(e, &path))?;
                let rel = path.strip_prefix(&dir).expect("inside stage dir").to_string_lossy().replace('\\', "/");
                rows.push(SpectrumRow {
                    t: c.step,
                    side: *side,
                    rank,
                    lambda: pair.lambda,
                    residual: pair.residual,
                    converged: flag(ok),
                    vecfile: rel,
                });
                if !ok {
                    unconverged.push(pair.residual);
                }
            }
            stats.push(SolveStats {
                t: c.step,
                side: *side,
                k: report.k,
                converged: report.converged.iter().filter(|&&x| x).count(),
                applications: report.applications,
                subset_id: subset_id.clone(),
                l2: report.l2,
            });
        }
        write_csv(&dir.join("spectrum.csv"), &rows, &[])?;
        write_csv(&dir.join("stats.csv"), &stats, &[])?;
        if self.opts.svg {
            for &t in &steps {
                let mut plot = Plot::new(format!("Extreme eigenvalues at step {t}"), "rank", "eigenvalue");
                for &side in &cfg.eigen.sides {
                    let pts =
                        rows.iter().filter(|r| r.t == t && r.side == side).map(|r| (r.rank as f64, r.lambda)).collect();
                    plot = plot.with_series(Series::new(side.to_string(), pts, Mark::Points));
                }
                self.write_svg(dir.join(format!("spectrum_t{t}.svg")), &plot)?;
            }
        }
        if !unconverged.is_empty() && !cfg.eigen.allow_unconverged {
            return Err(CoreError::NonConverged { residuals: unconverged }.into());
        }
        Ok(rows)
    }

    pub fn track(&self) -> Result<(), CliError> {
        let traj = self.trajectory()?;
        let spectrum = self.spectrum()?;
        let t0 =
            self.resolved.config.analysis.t0.unwrap_or_else(|| spectrum.iter().map(|e| e.t).min().expect("non-empty"));
        traj.checkpoint(t0)?;
        let probes = self.entries_at(&spectrum, t0)?;
        let (op, _) = self.problem.analysis_operator()?;
        let dir = self.prepare(Stage::Track)?;
        let series = par::map(self.opts.jobs, &probes, |p| curvature_over_time(&op, &traj.checkpoints, t0, &p.pair));
        let mut rows = Vec::new();
        let mut plot = Plot::new(format!("Curvature of step-{t0} eigenvectors over training"), "step", "vᵀH(t)v");
        for (p, s) in probes.iter().zip(series) {
            let s = s?;
            for &(t, curvature) in &s.samples {
                rows.push(SeriesRow { side: p.side, rank: p.rank, t0, lambda_t0: p.pair.lambda, t, curvature });
            }
            let pts = s.samples.iter().map(|&(t, c)| (t as f64, c)).collect();
            plot = plot.with_series(Series::new(format!("{} {}", p.side, p.rank), pts, Mark::Line));
        }
        write_csv(&dir.join("curvature_series.csv"), &rows, &[])?;
        self.write_svg(dir.join("curvature_series.svg"), &plot)
    }

    fn at_step_entries(&self) -> Result<(Trajectory, u64, Vec<SpectrumEntry>), CliError> {
        let traj = self.trajectory()?;
        let spectrum = self.spectrum()?;
        let at = self.analysis_step(&spectrum);
        traj.checkpoint(at)?;
        let entries = self.entries_at(&spectrum, at)?;
        Ok((traj, at, entries))
    }

    pub fn probe(&self) -> Result<(), CliError> {
        let a = &self.resolved.config.analysis;
        let (traj, at, entries) = self.at_step_entries()?;
        let theta = &traj.checkpoint(at)?.theta;
        let (op, _) = self.problem.analysis_operator()?;
        let dir = self.prepare(Stage::Probe)?;
        let tasks: Vec<(&SpectrumEntry, f64)> =
            entries.iter().flat_map(|e| a.profile_alpha_max.iter().map(move |&r| (e, r))).collect();
        let profiles = par::map(self.opts.jobs, &tasks, |(e, r)| {
            directional_loss_profile(&op, theta, &e.pair, *r, a.profile_points)
        });
        let mut rows = Vec::new();
        for ((e, r), p) in tasks.iter().zip(profiles) {
            let p = p?;
            for ((&alpha, &true_loss), &quad_model) in p.alphas.iter().zip(&p.true_loss).zip(&p.quad_model) {
                rows.push(ProfileRow {
                    side: e.side,
                    i: e.rank,
                    lambda: e.pair.lambda,
                    converged: flag(e.converged),
                    projection: p.projection,
                    alpha_max: *r,
                    alpha,
                    true_loss,
                    quad_model,
                });
            }
            if self.opts.svg && e.rank == 0 {
                let truth = p.alphas.iter().zip(&p.true_loss).filter_map(|(&x, l)| l.map(|l| (x, l))).collect();
                let model = p.alphas.iter().zip(&p.quad_model).map(|(&x, &m)| (x, m)).collect();
                let plot =
                    Plot::new(format!("{} {} (λ = {:.4}) at step {at}", e.side, e.rank, e.pair.lambda), "α", "loss")
                        .with_series(Series::new("true loss", truth, Mark::Line))
                        .with_series(Series::new("quadratic model", model, Mark::Dashed));
                self.write_svg(dir.join(format!("profile_{}_{}_range{r}.svg", e.side, e.rank)), &plot)?;
            }
        }
        write_csv(&dir.join("profiles.csv"), &rows, &[])
    }

    pub fn fit(&self) -> Result<(), CliError> {
        let a = &self.resolved.config.analysis;
        let (traj, at, entries) = self.at_step_entries()?;
        let theta = &traj.checkpoint(at)?.theta;
        let (op, _) = self.problem.analysis_operator()?;
        let dir = self.prepare(Stage::Fit)?;
        let tasks: Vec<(&SpectrumEntry, f64)> =
            a.fit_ranges.iter().flat_map(|&r| entries.iter().map(move |e| (e, r))).collect();
        let fits = par::map(self.opts.jobs, &tasks, |(e, r)| {
            directional_loss_profile(&op, theta, &e.pair, *r, a.profile_points).map(|p| quadratic_fit(&p))
        });
        let mut rows = Vec::new();
        for ((e, r), f) in tasks.iter().zip(fits) {
            let f = f?;
            rows.push(FitRow {
                side: e.side,
                i: e.rank,
                lambda: e.pair.lambda,
                converged: flag(e.converged),
                range: *r,
                y: f.curvature,
                c0: f.coefficients.map(|c| c[0]),
                c1: f.coefficients.map(|c| c[1]),
                c2: f.coefficients.map(|c| c[2]),
                residual: (!f.degenerate).then_some(f.residual),
                degenerate: flag(f.degenerate),
            });
        }
        if self.opts.svg {
            for &r in &a.fit_ranges {
                let pts =
                    rows.iter().filter(|row| row.range == r).filter_map(|row| row.y.map(|y| (row.lambda, y))).collect();
                let mut plot = Plot::new(format!("Local vs fitted curvature, α ∈ [−{r}, {r}]"), "λ", "fitted y")
                    .with_series(Series::new("directions", pts, Mark::Points));
                plot.identity_line = true;
                self.write_svg(dir.join(format!("fits_range{r}.svg")), &plot)?;
            }
        }
        write_csv(&dir.join("fits.csv"), &rows, &[])
    }

    fn line_searches(&self) -> Result<(Vec<SpectrumEntry>, Vec<LineSearchResult>), CliError> {
        let a = &self.resolved.config.analysis;
        let (traj, at, entries) = self.at_step_entries()?;
        let theta = &traj.checkpoint(at)?.theta;
        let (op, _): (Operator, _) = self.problem.analysis_operator()?;
        let grid = StepGrid {
            alpha_min: a.linesearch_alpha_min,
            alpha_max: a.linesearch_alpha_max,
            per_sign: a.linesearch_per_sign,
            golden_iters: a.golden_iters,
        };
        let pairs: Vec<EigenPair> = entries.iter().map(|e| e.pair.clone()).collect();
        let results = improvement_report(&op, theta, &pairs, &grid, self.opts.jobs)?;
        Ok((entries, results))
    }

    fn write_linesearch(&self, entries: &[SpectrumEntry], results: &[LineSearchResult]) -> Result<(), CliError> {
        let dir = self.prepare(Stage::LineSearch)?;
        let rows: Vec<LineSearchRow> = entries
            .iter()
            .zip(results)
            .map(|(e, r)| LineSearchRow {
                side: e.side,
                i: e.rank,
                lambda: r.lambda,
                converged: flag(e.converged),
                projection: r.projection,
                alpha_star: r.alpha_star,
                inv_alpha_star: (r.alpha_star != 0.0).then(|| r.inv_alpha_star()),
                achieved_loss: r.achieved_loss,
                delta_l: r.improvement,
                boundary: flag(r.boundary),
                degenerate: flag(r.degenerate),
            })
            .collect();
        let pts = rows.iter().filter_map(|r| r.inv_alpha_star.map(|i| (r.lambda, i))).collect();
        let mut plot = Plot::new("Inverse optimal step vs eigenvalue", "λ", "1/α*").with_series(Series::new(
            "directions",
            pts,
            Mark::Points,
        ));
        plot.identity_line = true;
        self.write_svg(dir.join("linesearch.svg"), &plot)?;
        write_csv(&dir.join("linesearch.csv"), &rows, &[])
    }

    fn write_improve(&self, entries: &[SpectrumEntry], results: &[LineSearchResult]) -> Result<(), CliError> {
        let dir = self.prepare(Stage::Improve)?;
        let rows: Vec<ImproveRow> = entries
            .iter()
            .zip(results)
            .map(|(e, r)| ImproveRow {
                side: e.side,
                i: e.rank,
                lambda: r.lambda,
                converged: flag(e.converged),
                projection: r.projection,
                alpha_star: r.alpha_star,
                inv_alpha_star: (r.alpha_star != 0.0).then(|| r.inv_alpha_star()),
                delta_l: r.improvement,
                abs_alpha_lambda: r.abs_alpha_lambda(),
                boundary: flag(r.boundary),
                degenerate: flag(r.degenerate),
            })
            .collect();
        let pts = rows.iter().map(|r| (r.lambda, r.delta_l)).collect();
        self.write_svg(
            dir.join("improve.svg"),
            &Plot::new("Best loss improvement per direction", "λ", "ΔL").with_series(Series::new(
                "directions",
                pts,
                Mark::Points,
            )),
        )?;
        write_csv(&dir.join("improve.csv"), &rows, &[])
    }

    pub fn linesearch(&self) -> Result<(), CliError> {
        let (entries, results) = self.line_searches()?;
        self.write_linesearch(&entries, &results)
    }

    pub fn improve(&self) -> Result<(), CliError> {
        let (entries, results) = self.line_searches()?;
        self.write_improve(&entries, &results)
    }

    pub fn negcurve(&self) -> Result<(), CliError> {
        let cfg = &self.resolved.config;
        let seeds = cfg.seeds();
        let train_op = self.problem.training_operator()?;
        let (subset_op, _) = self.problem.analysis_operator()?;
        let ncfg = NegCurveConfig { seed: seeds.tracker.wrapping_add(cfg.negcurve.seed), ..cfg.negcurve.clone() };
        let rms = cfg.train.rmsprop();
        let theta0 = self.problem.initial_params()?;
        let total = cfg.train.total_steps;
        let dir = self.prepare(Stage::NegCurve)?;

        let schedule = Schedule { total_steps: total, checkpoint_every: 0, seed: seeds.batches };
        let baseline = train_objective(&train_op, theta0.clone(), &rms, schedule)?;
        let baseline_loss = baseline.last().expect("final checkpoint").loss;
        let run = if ncfg.minibatch_tracker {
            run_alternating(&train_op, &train_op, theta0, &rms, &ncfg, total, seeds.batches)?
        } else {
            run_alternating(&train_op, &subset_op, theta0, &rms, &ncfg, total, seeds.batches)?
        };
        let log: Vec<NegCurveLogRow> = run
            .log
            .iter()
            .map(|l| NegCurveLogRow {
                t: l.t,
                loss: l.loss,
                lambda: l.lambda,
                g_dot_v: l.g_dot_v.is_finite().then_some(l.g_dot_v),
                fired: flag(l.fired),
            })
            .collect();
        write_csv(&dir.join("negcurve_log.csv"), &log, &["t", "loss", "lambda", "g_dot_v", "fired"])?;
        let comparison = [
            ComparisonRow {
                run: "rmsprop",
                steps: total,
                final_loss: baseline_loss,
                fired_steps: 0,
                hvp_calls: 0,
                eta: None,
            },
            ComparisonRow {
                run: "alternating",
                steps: total,
                final_loss: run.final_loss,
                fired_steps: run.fired_count(),
                hvp_calls: run.hvp_calls,
                eta: Some(run.eta),
            },
        ];
        write_csv(&dir.join("comparison.csv"), &comparison, &[])?;
        let lam = log.iter().map(|l| (l.t as f64, l.lambda)).collect();
        self.write_svg(
            dir.join("tracked_curvature.svg"),
            &Plot::new("Tracked smallest curvature", "step", "λ̃").with_series(Series::new("λ̃", lam, Mark::Line)),
        )
    }

    /// Every stage in pipeline order.
    pub fn all(&self) -> Result<(), CliError> {
        self.train()?;
        self.eigen()?;
        self.track()?;
        self.probe()?;
        self.fit()?;
        let (entries, results) = self.line_searches()?;
        self.write_linesearch(&entries, &results)?;
        self.write_improve(&entries, &results)?;
        self.negcurve()
    }
}
