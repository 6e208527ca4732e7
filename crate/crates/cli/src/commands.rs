//! One pipeline per subcommand. Each writes its artifacts through
//! [`Context`] and returns the outcome recorded in the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use serde::Serialize;
use wkam_core::evolve::{
    normalize_spec, solve_adjoint, solve_cauchy_regularized, solve_ergodic, CauchyRun,
    ErgodicSolution,
};
use wkam_core::grid::{mollify, Dissipation};
use wkam_core::mather::{
    assemble_lp, measure_from_adjoint, sample_optimal_vertices, solve_mather_lp, uniqueness_set,
    DiscreteMeasure, HolonomyLp, MatherLpSolution, SimplexOptions, VelocityGrid, ATOM_BUDGET,
};
use wkam_core::suite::{run_suite, SuiteOptions};
use wkam_core::verify::{
    check_comparison, eikonal_solutions, example_measure, Verdict, ZERO_SET_TOLERANCE,
};
use wkam_core::{check_assumptions, CouplingMatrix, Family, GridFunction, HamiltonianSpec, PeriodicGrid};

use crate::config::{ConfigError, Format, RunConfig};
use crate::manifest::{Outcome, RunInfo};
use crate::output;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Run(#[from] wkam_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for anything the user can fix in the configuration, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use wkam_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Run(
                E::Config(_)
                | E::InvalidParameter(_)
                | E::Potential(_)
                | E::Precondition(_)
                | E::UnsupportedDimension(_)
                | E::DimensionMismatch { .. }
                | E::ComponentIndex { .. }
                | E::AtomBudget { .. },
            ) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Output directory, artifact list and the constants a manifest records.
pub struct Context {
    pub cfg: Option<RunConfig>,
    pub out: PathBuf,
    pub artifacts: Vec<String>,
    pub tolerances: BTreeMap<String, f64>,
    pub constants: BTreeMap<String, f64>,
    pub runs: Vec<RunInfo>,
}

impl Context {
    pub fn new(cfg: Option<RunConfig>, out: PathBuf) -> Result<Self> {
        fs::create_dir_all(&out)?;
        Ok(Self {
            cfg,
            out,
            artifacts: Vec::new(),
            tolerances: BTreeMap::new(),
            constants: BTreeMap::new(),
            runs: Vec::new(),
        })
    }

    fn cfg(&self) -> &RunConfig {
        self.cfg.as_ref().expect("every command except suite loads a config")
    }

    fn wants(&self, f: Format) -> bool {
        self.cfg.as_ref().map_or(true, |c| c.has_format(f))
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.out.join(name), bytes)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        if self.wants(Format::Json) {
            let bytes = serde_json::to_vec_pretty(value).map_err(wkam_core::Error::from)?;
            self.write(name, &bytes)?;
        }
        Ok(())
    }

    fn emit(
        &mut self,
        format: Format,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> wkam_core::Result<()>,
    ) -> Result<()> {
        if self.wants(format) {
            let mut buf = Vec::new();
            f(&mut buf)?;
            self.write(name, &buf)?;
        }
        Ok(())
    }

    fn function(&mut self, stem: &str, v: &GridFunction) -> Result<()> {
        self.emit(Format::Csv, &format!("{stem}.csv"), |b| output::grid_function_csv(v, b))?;
        self.emit(Format::Gnuplot, &format!("{stem}.dat"), |b| output::grid_function_dat(v, b))
    }

    fn measure(&mut self, stem: &str, mu: &DiscreteMeasure) -> Result<()> {
        self.emit(Format::Csv, &format!("{stem}.csv"), |b| mu.write_csv(b))?;
        self.emit(Format::Gnuplot, &format!("{stem}.dat"), |b| output::measure_dat(mu, b))
    }

    fn slab(&mut self, stem: &str, slab: &wkam_core::evolve::TimeSlab) -> Result<()> {
        let thin = output::thin(slab, self.cfg().output.frames)?;
        self.emit(Format::Csv, &format!("{stem}.csv"), |b| thin.write_csv(b))?;
        self.emit(Format::Gnuplot, &format!("{stem}.dat"), |b| output::slab_dat(&thin, b))
    }

    fn tolerance(&mut self, key: &str, value: f64) {
        self.tolerances.insert(key.into(), value);
    }

    fn constant(&mut self, key: &str, value: f64) {
        self.constants.insert(key.into(), value);
    }

    fn record_run(&mut self, label: String, run: &CauchyRun) {
        let dissipation = match run.dissipation {
            Dissipation::Global(t) => format!("global({t})"),
            Dissipation::Local => "local".into(),
        };
        self.runs.push(RunInfo {
            label,
            epsilon: run.epsilon,
            dt: run.dt,
            steps: run.steps,
            theta: run.theta,
            dissipation,
        });
    }
}

struct Problem {
    spec: HamiltonianSpec,
    c: CouplingMatrix,
    grid: PeriodicGrid,
}

fn problem(ctx: &mut Context) -> Result<Problem> {
    let cfg = ctx.cfg();
    let p = Problem {
        spec: cfg.spec()?,
        c: cfg.coupling()?,
        grid: cfg.grid()?,
    };
    let (d, n, m, shift) = (cfg.problem.dim, cfg.discretization.n, cfg.problem.components, cfg.problem.shift);
    ctx.constant("dim", d as f64);
    ctx.constant("n", n as f64);
    ctx.constant("components", m as f64);
    ctx.constant("h", p.grid.h());
    ctx.constant("shift", shift);
    Ok(p)
}

fn ergodic_solution(ctx: &mut Context, p: &Problem) -> Result<ErgodicSolution> {
    let opts = ctx.cfg().ergodic_options();
    ctx.tolerance("ergodic_residual", opts.tolerance);
    ctx.constant("ergodic_max_iterations", opts.max_iterations as f64);
    for (k, a) in opts.alphas.iter().enumerate() {
        ctx.constant(&format!("discount_{k}"), *a);
    }
    Ok(solve_ergodic(&p.spec, &p.c, &p.grid, &opts)?)
}

fn velocity_grid(ctx: &mut Context, p: &Problem, lipschitz: Option<f64>) -> Result<VelocityGrid> {
    let lip = match (ctx.cfg().discretization.q_max, lipschitz) {
        (Some(_), _) => 0.0,
        (None, Some(l)) => l,
        (None, None) => ergodic_solution(ctx, p)?.v.lipschitz(),
    };
    let vg = ctx.cfg().velocity_grid(&p.spec, &p.grid, lip)?;
    ctx.constant("n_q", vg.n_q() as f64);
    ctx.constant("q_max", vg.q_max());
    ctx.constant("h_q", vg.spacing());
    Ok(vg)
}

fn simplex(ctx: &mut Context) -> SimplexOptions {
    let o = ctx.cfg().simplex_options();
    ctx.tolerance("lp_reduced_cost", o.tolerance);
    ctx.tolerance("lp_pivot", o.pivot_tolerance);
    ctx.tolerance("lp_feasibility", o.feasibility_tolerance);
    ctx.constant("lp_max_iterations", o.max_iterations as f64);
    ctx.constant("lp_refactor_every", o.refactor_every as f64);
    o
}

fn eps_label(eps: f64) -> String {
    format!("eps_{eps}")
}

/// The `ε⁴`-mollified stationary solution, evolved on `[0, 1]` under the
/// normalized Hamiltonian.
fn evolve_stationary(ctx: &mut Context, spec: &HamiltonianSpec, p: &Problem, v: &GridFunction, eps: f64) -> Result<CauchyRun> {
    ctx.constant("safety", ctx.cfg().discretization.safety);
    ctx.constant(&format!("mollifier_{}", eps_label(eps)), eps.powi(4));
    let init = mollify(v, eps.powi(4))?;
    let run = solve_cauchy_regularized(spec, &p.c, eps, &init, &ctx.cfg().cauchy_options())?;
    ctx.record_run(eps_label(eps), &run);
    Ok(run)
}

/// Stationary solution and the Hamiltonian shifted so that `λ = 0`.
fn stationary(ctx: &mut Context, p: &Problem) -> Result<(ErgodicSolution, HamiltonianSpec)> {
    let sol = ergodic_solution(ctx, p)?;
    ctx.constant("lambda", sol.lambda_long_time);
    let spec = normalize_spec(&p.spec, sol.lambda_long_time);
    Ok((sol, spec))
}

fn source(ctx: &mut Context, grid: &PeriodicGrid) -> (usize, usize) {
    ctx.tolerance("adjoint_mass", 1e-10);
    ctx.tolerance("adjoint_min_before_clip", -1e-12);
    let a = &ctx.cfg().adjoint;
    let src = (grid.nearest_node(&a.x0), a.component - 1);
    ctx.constant("x0_node", src.0 as f64);
    ctx.constant("source_component", (src.1 + 1) as f64);
    src
}

pub fn check(ctx: &mut Context) -> Result<Outcome> {
    let p = problem(ctx)?;
    let (samples, p_max) = (ctx.cfg().solver.assumption_samples, ctx.cfg().solver.p_max);
    ctx.constant("assumption_samples", samples as f64);
    ctx.constant("p_max", p_max);
    let report = check_assumptions(&p.spec, &p.c, samples, p_max);
    ctx.json("assumptions.json", &report)?;
    let failed: Vec<&str> = report.checks().iter().filter(|c| !c.passed).map(|c| c.name).collect();
    Ok(Outcome {
        passed: failed.is_empty(),
        detail: if failed.is_empty() {
            format!("all assumptions hold on |p| ≤ {}", report.p_max)
        } else {
            format!("failed: {}", failed.join(", "))
        },
    })
}

pub fn ergodic(ctx: &mut Context) -> Result<Outcome> {
    let p = problem(ctx)?;
    let sol = ergodic_solution(ctx, &p)?;
    ctx.json("ergodic.json", &sol)?;
    ctx.function("v", &sol.v)?;
    let flag = if sol.flagged { " (long-time cross-check disagrees)" } else { "" };
    Ok(Outcome {
        passed: true,
        detail: format!("lambda = {:.6}, residual {:.1e}{flag}", sol.lambda, sol.residual),
    })
}

#[derive(Serialize)]
struct CauchyReport {
    epsilon: f64,
    dt: f64,
    steps: usize,
    theta: f64,
    max_lipschitz: f64,
    /// `max_t |u^ε(t) - v|`.
    deviation: f64,
}

pub fn cauchy(ctx: &mut Context) -> Result<Outcome> {
    let p = problem(ctx)?;
    let (sol, spec) = stationary(ctx, &p)?;
    let mut reports = Vec::new();
    for eps in ctx.cfg().discretization.eps.clone() {
        let run = evolve_stationary(ctx, &spec, &p, &sol.v, eps)?;
        reports.push(CauchyReport {
            epsilon: eps,
            dt: run.dt,
            steps: run.steps,
            theta: run.theta,
            max_lipschitz: run.slab.frames().iter().map(|f| f.lipschitz()).fold(0.0, f64::max),
            deviation: run.slab.max_deviation(&sol.v)?,
        });
        ctx.slab(&format!("u_{}", eps_label(eps)), &run.slab)?;
    }
    ctx.json("cauchy.json", &reports)?;
    let devs: Vec<String> = reports.iter().map(|r| format!("{:.2e}", r.deviation)).collect();
    Ok(Outcome {
        passed: true,
        detail: format!("max |u - v| = [{}]", devs.join(", ")),
    })
}

pub fn adjoint(ctx: &mut Context) -> Result<Outcome> {
    let p = problem(ctx)?;
    let (sol, spec) = stationary(ctx, &p)?;
    let (x0, k) = source(ctx, &p.grid);
    let mut summaries = Vec::new();
    for eps in ctx.cfg().discretization.eps.clone() {
        let run = evolve_stationary(ctx, &spec, &p, &sol.v, eps)?;
        let sigma = solve_adjoint(&spec, &p.c, eps, &run.slab, x0, k)?;
        ctx.slab(&format!("sigma_{}", eps_label(eps)), &sigma.slab)?;
        summaries.push(sigma.summary());
    }
    ctx.json("adjoint.json", &summaries)?;
    let ok = summaries.iter().all(|s| s.max_mass_error <= 1e-10 && s.min_before_clip >= -1e-12);
    let worst = summaries.iter().map(|s| s.max_mass_error).fold(0.0, f64::max);
    Ok(Outcome {
        passed: ok,
        detail: format!("{} solves, worst mass error {worst:.1e}", summaries.len()),
    })
}

fn lp_solution(ctx: &mut Context, p: &Problem) -> Result<(HolonomyLp, MatherLpSolution, SimplexOptions)> {
    let vg = velocity_grid(ctx, p, None)?;
    let opts = simplex(ctx);
    let lp = assemble_lp(&p.spec, &p.c, &p.grid, &vg, ATOM_BUDGET)?;
    ctx.constant("eta", lp.eta());
    ctx.constant("atoms", lp.atoms() as f64);
    ctx.constant("rows", lp.rows() as f64);
    let sol = solve_mather_lp(&lp, &opts)?;
    Ok((lp, sol, opts))
}

pub fn mather_lp(ctx: &mut Context) -> Result<Outcome> {
    let p = problem(ctx)?;
    let (lp, sol, _) = lp_solution(ctx, &p)?;
    let summary = sol.summary(&lp, &p.c)?;
    ctx.json("mather_lp.json", &summary)?;
    ctx.measure("measure", &sol.measure)?;
    ctx.tolerance("row_violation", 1e-8);
    Ok(Outcome {
        passed: summary.row_violation <= 1e-8,
        detail: format!(
            "value {:.3e} (lambda = {:.3e}), {} atoms in the support, row violation {:.1e}",
            summary.value, summary.lambda, summary.support_size, summary.row_violation
        ),
    })
}

#[derive(Serialize)]
struct AdjointMeasureReport {
    epsilon: f64,
    #[serde(flatten)]
    summary: wkam_core::mather::MeasureSummary,
}

pub fn mather_adjoint(ctx: &mut Context) -> Result<Outcome> {
    let p = problem(ctx)?;
    let (sol, spec) = stationary(ctx, &p)?;
    let vg = velocity_grid(ctx, &p, Some(sol.v.lipschitz()))?;
    let (x0, k) = source(ctx, &p.grid);
    let mut reports = Vec::new();
    for eps in ctx.cfg().discretization.eps.clone() {
        let run = evolve_stationary(ctx, &spec, &p, &sol.v, eps)?;
        let sigma = solve_adjoint(&spec, &p.c, eps, &run.slab, x0, k)?;
        let mu = measure_from_adjoint(&spec, &run.slab, &sigma, &vg)?;
        ctx.measure(&format!("mu_{}", eps_label(eps)), &mu)?;
        reports.push(AdjointMeasureReport {
            epsilon: eps,
            summary: mu.summary(&spec, &p.c)?,
        });
    }
    ctx.json("mather_adjoint.json", &reports)?;
    let parts: Vec<String> = reports
        .iter()
        .map(|r| format!("ε={}: action {:.2e}, residual {:.2e}", r.epsilon, r.summary.action, r.summary.holonomy_residual))
        .collect();
    Ok(Outcome {
        passed: true,
        detail: parts.join("; "),
    })
}

/// LP vertices of the optimal face: the solution and the sampled ones.
fn optimal_measures(ctx: &mut Context, p: &Problem) -> Result<Vec<DiscreteMeasure>> {
    let (lp, sol, opts) = lp_solution(ctx, p)?;
    let (samples, seed) = (ctx.cfg().solver.samples, ctx.cfg().solver.seed);
    ctx.constant("samples", samples as f64);
    ctx.constant("seed", seed as f64);
    let mut out = vec![sol.measure.clone()];
    out.extend(sample_optimal_vertices(&lp, &sol, samples, seed, &opts)?);
    Ok(out)
}

pub fn compare(ctx: &mut Context) -> Result<Outcome> {
    let p = problem(ctx)?;
    if p.grid.dim() != 1 || !matches!(p.spec.family, Family::Quadratic) || p.spec.shift != 0.0 {
        return Err(ConfigError(
            "compare: explicit solutions need d = 1, the quadratic family and no shift".into(),
        )
        .into());
    }
    let cfg = ctx.cfg().clone();
    let c = &cfg.compare;
    let nodes = |xs: &[f64]| -> Vec<usize> { xs.iter().map(|x| p.grid.nearest_node(&[*x])).collect() };
    let mut v1 = eikonal_solutions(&p.spec.potential, &nodes(&c.anchors_1), &p.grid)?;
    let mut v2 = eikonal_solutions(&p.spec.potential, &nodes(&c.anchors_2), &p.grid)?;
    v1.add_constant(c.shift_1);
    v2.add_constant(c.shift_2);
    let mut measures = optimal_measures(ctx, &p)?;
    let vg = *measures[0].vgrid();
    for node in 0..p.grid.nodes() {
        if p.spec.potential.value(&p.grid.coords(node)[..1], 0) <= ZERO_SET_TOLERANCE {
            measures.push(example_measure(&p.spec.potential, &p.grid, &vg, node)?);
        }
    }
    let tol_con = c.tol_con.unwrap_or(c.tol_hyp + 4.0 * p.grid.h());
    ctx.tolerance("tol_hyp", c.tol_hyp);
    ctx.tolerance("tol_con", tol_con);
    ctx.tolerance("zero_set", ZERO_SET_TOLERANCE);
    let report = check_comparison(&v1, &v2, &measures, c.tol_hyp, tol_con)?;
    ctx.json("compare.json", &report)?;
    ctx.emit(Format::Csv, "integrals.csv", |b| report.write_csv(b))?;
    ctx.function("v1", &v1)?;
    ctx.function("v2", &v2)?;
    Ok(Outcome {
        passed: report.verdict != Verdict::Fail,
        detail: format!(
            "{:?} over {} measures: hypothesis margin {:.2e}, conclusion margin {:.2e}{}",
            report.verdict,
            measures.len(),
            report.hypothesis_margin,
            report.conclusion_margin,
            if report.note.is_empty() { String::new() } else { format!(" ({})", report.note) }
        ),
    })
}

#[derive(Serialize)]
struct SetReport {
    measures: usize,
    threshold: f64,
    size: usize,
    /// `(x, i)` with 1-based `i`.
    members: Vec<(Vec<f64>, usize)>,
}

pub fn uniqueness(ctx: &mut Context) -> Result<Outcome> {
    let p = problem(ctx)?;
    let measures = optimal_measures(ctx, &p)?;
    let threshold = ctx.cfg().solver.mass_threshold;
    ctx.tolerance("mass_threshold", threshold);
    let set = uniqueness_set(&measures, threshold)?;
    let d = p.grid.dim();
    let report = SetReport {
        measures: measures.len(),
        threshold,
        size: set.len(),
        members: set.iter().map(|(x, i)| (p.grid.coords(x)[..d].to_vec(), i + 1)).collect(),
    };
    ctx.json("uniqueness_set.json", &report)?;
    ctx.emit(Format::Csv, "uniqueness_set.csv", |b| set.write_csv(b))?;
    Ok(Outcome {
        passed: !set.is_empty(),
        detail: format!("{} (node, component) pairs from {} measures", set.len(), measures.len()),
    })
}

pub fn suite(ctx: &mut Context, seed: Option<u64>) -> Result<Outcome> {
    let mut opts = SuiteOptions::default();
    if let Some(cfg) = &ctx.cfg {
        opts.seed = cfg.solver.seed;
        opts.samples = cfg.solver.samples;
    }
    if let Some(s) = seed {
        opts.seed = s;
    }
    ctx.constant("seed", opts.seed as f64);
    ctx.constant("samples", opts.samples as f64);
    let run = run_suite(&opts)?;
    for name in run.write(&ctx.out)? {
        ctx.artifacts.push(name);
    }
    for c in &run.report.criteria {
        println!("{}", c.line());
    }
    let failed = run.report.criteria.iter().filter(|c| !c.passed).count();
    Ok(Outcome {
        passed: failed == 0,
        detail: format!("{} of {} criteria passed", run.report.criteria.len() - failed, run.report.criteria.len()),
    })
}
