use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use obsplace_core::dynamics::{build_fault_schedule, measure, simulate, FaultTiming, Trajectory};
use obsplace_core::estimation::{run_batch, run_seeds, EstimatorConfig, ScenarioSpec};
use obsplace_core::experiments::{run_comparison, run_sweep, ComparisonOptions};
use obsplace_core::gramian::{
    empirical_gramian, min_max_eigenvalue, per_generator_bank, GramianConfig,
};
use obsplace_core::network::{
    init_steady_state, solve_power_flow, MachineModel, PowerFlowSolution, PowerSystemCase,
    ReducedModel,
};
use obsplace_core::placement::{solve, MadsOptions};
use obsplace_core::robustness::{robustness_study, RobustnessOptions};
use obsplace_core::Error;
use serde::Serialize;
use serde_json::Value;

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::manifest::ExperimentManifest;
use crate::output::{ids, is_json, num, write_csv, write_json};

/// Everything a subcommand needs besides its own flags.
struct Ctx<'a> {
    global: &'a GlobalArgs,
    subcommand: &'static str,
    case: PowerSystemCase,
    case_bytes: Vec<u8>,
}

impl Ctx<'_> {
    fn manifest(&self, settings: &impl Serialize, output: Option<&Path>) -> ExperimentManifest {
        let path = self
            .global
            .case
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        ExperimentManifest::new(
            self.subcommand,
            Some((&path, &self.case_bytes)),
            model_name(self.global.model),
            serde_json::to_value(settings).unwrap_or(Value::Null),
            self.global.seed,
            output.map(|p| p.display().to_string()),
        )
    }

    fn note(&self, msg: impl AsRef<str>) {
        if !self.global.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn elapsed(&self, start: Instant) -> f64 {
        if self.global.no_timing {
            0.0
        } else {
            start.elapsed().as_secs_f64()
        }
    }

    fn power_flow(&self) -> CliResult<PowerFlowSolution> {
        let pf = solve_power_flow(&self.case, 1e-8, 30)?;
        if !pf.converged {
            return Err(Error::PowerFlowDiverged {
                max_mismatch: pf.max_mismatch,
            }
            .into());
        }
        Ok(pf)
    }

    fn model(&self, pf: &PowerFlowSolution) -> CliResult<ReducedModel> {
        Ok(init_steady_state(&self.case, pf, self.global.model)?)
    }

    fn mads(&self, s: &SolverArgs) -> MadsOptions {
        MadsOptions {
            seed: self.global.seed,
            budget: s.budget,
            ..MadsOptions::default()
        }
    }

    /// 1-based generator ids to positions.
    fn sites(&self, gen_ids: &[usize]) -> CliResult<Vec<usize>> {
        let g = self.case.n_gen();
        let mut out = Vec::with_capacity(gen_ids.len());
        for &id in gen_ids {
            if id == 0 || id > g {
                return Err(Error::InvalidArgument(format!(
                    "generator {id} does not exist (case has 1..={g})"
                ))
                .into());
            }
            if out.contains(&(id - 1)) {
                return Err(Error::InvalidArgument(format!("generator {id} listed twice")).into());
            }
            out.push(id - 1);
        }
        out.sort_unstable();
        Ok(out)
    }
}

fn model_name(kind: MachineModel) -> &'static str {
    match kind {
        MachineModel::Classical => "m1",
        MachineModel::Transient => "m2",
    }
}

fn grid(g: &GridArgs) -> GramianConfig {
    GramianConfig::with_grid(g.tf, g.dt)
}

fn load<'a>(global: &'a GlobalArgs, subcommand: &'static str) -> CliResult<Ctx<'a>> {
    let path = global
        .case
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("{subcommand} needs --case <file>")))?;
    let case_bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let text = String::from_utf8_lossy(&case_bytes);
    let case = PowerSystemCase::from_json_str(&text, &path.display().to_string())?;
    Ok(Ctx {
        global,
        subcommand,
        case,
        case_bytes,
    })
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let ctx = load(&cli.global, cli.command.name())?;
    match &cli.command {
        Command::Pf(a) => pf(&ctx, a),
        Command::Simulate(a) => simulate_cmd(&ctx, a),
        Command::Gramian(a) => gramian(&ctx, a),
        Command::Place(a) => place(&ctx, a),
        Command::Estimate(a) => estimate(&ctx, a),
        Command::Robustness(a) => robustness(&ctx, a),
        Command::Sweep(a) => sweep(&ctx, a),
        Command::Compare(a) => compare(&ctx, a),
    }
}

#[derive(Serialize)]
struct BusRecord {
    id: usize,
    v_mag: f64,
    v_ang_deg: f64,
    p_inj: f64,
    q_inj: f64,
}

#[derive(Serialize)]
struct PfReport {
    converged: bool,
    iterations: usize,
    max_mismatch: f64,
    buses: Vec<BusRecord>,
}

fn pf(ctx: &Ctx, a: &PfArgs) -> CliResult<()> {
    let sol = solve_power_flow(&ctx.case, a.tol, a.max_iter)?;
    let report = PfReport {
        converged: sol.converged,
        iterations: sol.iterations,
        max_mismatch: sol.max_mismatch,
        buses: ctx
            .case
            .buses
            .iter()
            .enumerate()
            .map(|(k, b)| BusRecord {
                id: b.id,
                v_mag: sol.v_mag[k],
                v_ang_deg: sol.v_ang[k].to_degrees(),
                p_inj: sol.p_inj[k],
                q_inj: sol.q_inj[k],
            })
            .collect(),
    };
    let out = ctx.global.out.as_deref();
    write_json(out, &report, &ctx.manifest(a, out))?;
    if !sol.converged {
        return Err(Error::PowerFlowDiverged {
            max_mismatch: sol.max_mismatch,
        }
        .into());
    }
    Ok(())
}

fn output_names(kind: MachineModel, sites: &[usize]) -> Vec<String> {
    let types: &[&str] = match kind {
        MachineModel::Classical => &["delta", "omega"],
        MachineModel::Transient => &["e_real", "e_imag", "i_real", "i_imag"],
    };
    types
        .iter()
        .flat_map(|t| sites.iter().map(move |s| format!("{t}_{}", s + 1)))
        .collect()
}

fn series_rows(times: &[f64], columns: &[&[Vec<f64>]]) -> Vec<Vec<String>> {
    times
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let mut row = vec![num(*t)];
            for col in columns {
                row.extend(col[k].iter().map(|v| num(*v)));
            }
            row
        })
        .collect()
}

fn to_rows<'a, V: 'a>(v: impl IntoIterator<Item = &'a V>) -> Vec<Vec<f64>>
where
    &'a V: IntoIterator<Item = &'a f64>,
{
    v.into_iter()
        .map(|x| x.into_iter().copied().collect())
        .collect()
}

fn simulate_cmd(ctx: &Ctx, a: &SimulateArgs) -> CliResult<()> {
    let pf = ctx.power_flow()?;
    let model = ctx.model(&pf)?;
    let mut x = model.x0.clone();
    for &(gen, off) in &a.offsets {
        let s = ctx.sites(&[gen])?[0];
        x[model.layout.delta(s)] += off;
    }
    let all: Vec<usize> = (0..model.n_gen()).collect();
    let (traj, outputs): (Trajectory, Vec<Vec<f64>>) = match a.fault {
        Some(branch) => {
            let schedule = build_fault_schedule(
                &ctx.case,
                &pf,
                ctx.global.model,
                branch,
                FaultTiming::default(),
            )?;
            let traj = schedule.simulate(&x, a.horizon, a.dt)?;
            let ys = traj
                .states
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    measure(schedule.stage_at_step(k, traj.dt), s, &all)
                        .map(|y| y.iter().copied().collect())
                })
                .collect::<Result<_, _>>()?;
            (traj, ys)
        }
        None => {
            let traj = simulate(&model, &x, a.horizon, a.dt)?;
            let ys = traj
                .states
                .iter()
                .map(|s| measure(&model, s, &all).map(|y| y.iter().copied().collect()))
                .collect::<Result<_, _>>()?;
            (traj, ys)
        }
    };
    ctx.note(format!("simulated {} steps", traj.len() - 1));
    let times = traj.times();
    let out = ctx.global.out.as_deref();
    let mut header = vec!["time".to_string()];
    header.extend(model.layout.state_names());
    write_csv(
        out,
        &header,
        &series_rows(&times, &[&to_rows(&traj.states)]),
        &ctx.manifest(a, out),
    )?;
    if let Some(path) = &a.outputs {
        let mut header = vec!["time".to_string()];
        header.extend(output_names(ctx.global.model, &all));
        write_csv(
            Some(path),
            &header,
            &series_rows(&times, &[&outputs]),
            &ctx.manifest(a, Some(path)),
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct GramianReport {
    pmu_at: Vec<usize>,
    n: usize,
    state_names: Vec<String>,
    /// Row-major.
    matrix: Vec<f64>,
    config_fingerprint: String,
    logdet: f64,
    sigma_min: f64,
    sigma_max: f64,
    wall_time_s: f64,
}

fn gramian(ctx: &Ctx, a: &GramianArgs) -> CliResult<()> {
    let start = Instant::now();
    let pf = ctx.power_flow()?;
    let model = ctx.model(&pf)?;
    let sites = ctx.sites(&a.pmu_at)?;
    let cfg = grid(&a.grid);
    let w = empirical_gramian(&model, &sites, &cfg)?;
    let (sigma_min, sigma_max) = w.extreme_eigenvalues();
    let report = GramianReport {
        pmu_at: sites.iter().map(|s| s + 1).collect(),
        n: w.n,
        state_names: model.layout.state_names(),
        matrix: w.matrix.transpose().iter().copied().collect(),
        config_fingerprint: cfg.fingerprint(),
        logdet: w.logdet(),
        sigma_min,
        sigma_max,
        wall_time_s: ctx.elapsed(start),
    };
    let out = ctx.global.out.as_deref();
    write_json(out, &report, &ctx.manifest(a, out))
}

#[derive(Serialize)]
struct PlaceReport {
    placement: Vec<usize>,
    logdet: f64,
    sigma_min: f64,
    solver: obsplace_core::placement::Solver,
    evaluations: usize,
    converged: bool,
    wall_time_s: f64,
}

fn place(ctx: &Ctx, a: &PlaceArgs) -> CliResult<()> {
    let start = Instant::now();
    let pf = ctx.power_flow()?;
    let model = ctx.model(&pf)?;
    let bank = per_generator_bank(&model, &grid(&a.grid))?;
    let p = solve(&bank, a.pmus, a.solver.solver, &ctx.mads(&a.solver))?;
    let (sigma_min, _) = min_max_eigenvalue(&bank.sum(&p.sites()))?;
    let report = PlaceReport {
        placement: p.ids(),
        logdet: p.objective,
        sigma_min,
        solver: p.solver,
        evaluations: p.evaluations,
        converged: p.converged,
        wall_time_s: ctx.elapsed(start),
    };
    let out = ctx.global.out.as_deref();
    write_json(out, &report, &ctx.manifest(a, out))
}

fn scenario_spec(s: &ScenarioArgs) -> CliResult<ScenarioSpec> {
    match (s.scenario, s.fault) {
        (ScenarioArg::Method1, None) => Ok(ScenarioSpec::Method1 {
            n_perturbed: s.perturbed,
        }),
        (ScenarioArg::Method2, Some(branch)) => Ok(ScenarioSpec::Method2 { branch }),
        (ScenarioArg::Method1, Some(_)) => Err(CliError::Usage(
            "--fault only applies to --scenario method2".into(),
        )),
        (ScenarioArg::Method2, None) => Err(CliError::Usage(
            "--scenario method2 needs --fault FROM:TO".into(),
        )),
    }
}

#[derive(Serialize)]
struct RunRecord {
    run: usize,
    scenario_seed: u64,
    noise_seed: u64,
    diverged: bool,
    e_delta: f64,
    e_omega: f64,
    n_delta: usize,
    n_omega: usize,
    refactorizations: usize,
    trajectory: Option<String>,
}

#[derive(Serialize)]
struct EstimateReport {
    placement: Vec<usize>,
    runs: usize,
    e_delta_mean: f64,
    e_omega_mean: f64,
    n_delta_mean: f64,
    diverged_count: usize,
    per_run: Vec<RunRecord>,
    wall_time_s: f64,
}

fn estimate(ctx: &Ctx, a: &EstimateArgs) -> CliResult<()> {
    let start = Instant::now();
    let dir: PathBuf = ctx
        .global
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("estimate needs --out <dir>".into()))?;
    let spec = scenario_spec(&a.scenario)?;
    let pf = ctx.power_flow()?;
    let model = ctx.model(&pf)?;
    let sites = ctx.sites(&a.placement)?;
    let cfg = EstimatorConfig::for_omega0(model.omega0);
    let s = &a.scenario;
    let make = |seed| spec.build(&ctx.case, &pf, &model, seed, s.horizon, cfg.substep);
    let batch = run_batch(
        make,
        std::slice::from_ref(&sites),
        s.runs,
        ctx.global.seed,
        &cfg,
        true,
    )?;
    ctx.note(format!("{} runs done", s.runs));
    fs::create_dir_all(&dir).map_err(|e| CliError::output(dir.display(), e))?;

    let mut per_run = Vec::with_capacity(s.runs);
    for (r, runs) in batch.runs.iter().enumerate() {
        let run = &runs[0];
        let (scenario_seed, noise_seed) = run_seeds(ctx.global.seed, r as u64);
        let trajectory = if a.summary_only {
            None
        } else {
            let name = format!("run_{r:04}.csv");
            let names = run.layout.state_names();
            let mut header = vec!["time".to_string()];
            header.extend(names.iter().map(|n| format!("true_{n}")));
            header.extend(names.iter().map(|n| format!("est_{n}")));
            header.extend(
                output_names(ctx.global.model, &sites)
                    .iter()
                    .map(|n| format!("meas_{n}")),
            );
            let truth = to_rows(&run.truth);
            let est = to_rows(&run.estimate);
            let meas = to_rows(&run.measurements);
            let rows = series_rows(&run.times(), &[&truth, &est, &meas]);
            let path = dir.join(&name);
            write_csv(Some(&path), &header, &rows, &ctx.manifest(a, Some(&path)))?;
            Some(name)
        };
        per_run.push(RunRecord {
            run: r,
            scenario_seed,
            noise_seed,
            diverged: run.diverged,
            e_delta: run.metrics.e_delta,
            e_omega: run.metrics.e_omega,
            n_delta: run.metrics.n_delta,
            n_omega: run.metrics.n_omega,
            refactorizations: run.refactorizations,
            trajectory,
        });
    }
    let sum = &batch.summaries[0];
    let report = EstimateReport {
        placement: sites.iter().map(|s| s + 1).collect(),
        runs: sum.runs,
        e_delta_mean: sum.e_delta_mean,
        e_omega_mean: sum.e_omega_mean,
        n_delta_mean: sum.n_delta_mean,
        diverged_count: sum.diverged_count,
        per_run,
        wall_time_s: ctx.elapsed(start),
    };
    let path = dir.join("summary.json");
    write_json(Some(&path), &report, &ctx.manifest(a, Some(&path)))
}

fn robustness(ctx: &Ctx, a: &RobustnessArgs) -> CliResult<()> {
    let pf = ctx.power_flow()?;
    let opts = RobustnessOptions {
        mode: a.mode,
        kind: ctx.global.model,
        pmus: a.pmus_range.clone().collect(),
        solver: a.solver,
        mads: MadsOptions::with_seed(ctx.global.seed),
        gramian: grid(&a.grid),
        cases: a.cases,
        gamma: a.gamma,
        seed: ctx.global.seed,
        branches: (!a.branches.is_empty()).then(|| a.branches.clone()),
    };
    let report = robustness_study(&ctx.case, &pf, &opts)?;
    for c in report.cases.iter().filter(|c| c.skipped.is_some()) {
        ctx.note(format!(
            "skipped {:?}: {}",
            c.descriptor,
            c.skipped.as_deref().unwrap_or("")
        ));
    }
    let out = ctx.global.out.as_deref();
    write_json(out, &report, &ctx.manifest(a, out))
}

fn full_range(
    r: &Option<std::ops::RangeInclusive<usize>>,
    g: usize,
) -> std::ops::RangeInclusive<usize> {
    r.clone().unwrap_or(1..=g)
}

fn sweep(ctx: &Ctx, a: &SweepArgs) -> CliResult<()> {
    let pf = ctx.power_flow()?;
    let model = ctx.model(&pf)?;
    let bank = per_generator_bank(&model, &grid(&a.grid))?;
    let range = full_range(&a.pmus_range, model.n_gen());
    let mut rows = run_sweep(&bank, range, a.solver.solver, &ctx.mads(&a.solver))?;
    if ctx.global.no_timing {
        rows.iter_mut().for_each(|r| r.time_s = 0.0);
    }
    let out = ctx.global.out.as_deref();
    let manifest = ctx.manifest(a, out);
    if is_json(out) {
        return write_json(out, &serde_json::json!({ "rows": rows }), &manifest);
    }
    let header = [
        "g_bar",
        "logdet",
        "sigma_min",
        "placement",
        "evaluations",
        "converged",
        "time_s",
    ]
    .map(String::from);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.g_bar.to_string(),
                num(r.logdet),
                num(r.sigma_min),
                ids(&r.placement),
                r.evaluations.to_string(),
                r.converged.to_string(),
                num(r.time_s),
            ]
        })
        .collect();
    write_csv(out, &header, &table, &manifest)
}

fn compare(ctx: &Ctx, a: &CompareArgs) -> CliResult<()> {
    let spec = scenario_spec(&a.scenario)?;
    let pf = ctx.power_flow()?;
    let model = ctx.model(&pf)?;
    let bank = per_generator_bank(&model, &grid(&a.grid))?;
    let range = full_range(&a.pmus_range, model.n_gen());
    let opts = ComparisonOptions {
        runs: a.scenario.runs,
        seed: ctx.global.seed,
        scenario: spec,
        horizon: a.scenario.horizon,
        solver: a.solver.solver,
        mads: ctx.mads(&a.solver),
    };
    let cfg = EstimatorConfig::for_omega0(model.omega0);
    let mut rows = run_comparison(&ctx.case, &pf, &model, &bank, range, &opts, &cfg)?;
    for r in &mut rows {
        r.optimal.placement = r.optimal_placement.clone();
    }
    let out = ctx.global.out.as_deref();
    let manifest = ctx.manifest(a, out);
    if is_json(out) {
        return write_json(out, &serde_json::json!({ "rows": rows }), &manifest);
    }
    let header = [
        "g_bar",
        "optimal_placement",
        "e_delta_optimal",
        "e_delta_random",
        "e_omega_optimal",
        "e_omega_random",
        "n_delta_optimal",
        "n_delta_random",
        "diverged_optimal",
        "diverged_random",
    ]
    .map(String::from);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.g_bar.to_string(),
                ids(&r.optimal_placement),
                num(r.optimal.e_delta_mean),
                num(r.random.e_delta_mean),
                num(r.optimal.e_omega_mean),
                num(r.random.e_omega_mean),
                num(r.optimal.n_delta_mean),
                num(r.random.n_delta_mean),
                r.optimal.diverged_count.to_string(),
                r.random.diverged_count.to_string(),
            ]
        })
        .collect();
    write_csv(out, &header, &table, &manifest)
}
