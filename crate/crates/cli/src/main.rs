use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use ferment::equilibrium::{gf_equilibrium, tf_equilibrium};
use ferment::experiment::{build_instance, run_experiment, run_gf, run_mf, run_tf, select, ExperimentConfig, Instance};
use ferment::ocp::summarize;
use ferment::selection::SelectionResult;
use ferment::turnpike::dissipativity_certificate;
use ferment::{FermentError, Trajectory};
use log::info;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "ferment", version, about = "Optimal control of ferment in opinion networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment configuration
    #[arg(long)]
    config: PathBuf,
    /// output directory; overrides the config's `output`
    #[arg(long)]
    out: Option<PathBuf>,
    /// worker threads; overrides `ensemble.parallel_workers`
    #[arg(long)]
    workers: Option<usize>,
    /// overrides `ensemble.base_seed`
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Free trajectory and the trajectory holding the equilibrium control
    Simulate(Common),
    SolveTf(Common),
    SolveGf(Common),
    /// One max-min solve per configured budget
    SolveMf(Common),
    /// Every configured method at every `m`
    SelectNodes(Common),
    TurnpikeReport(Common),
    /// Seeded ensemble over the configured grid
    Experiment(Common),
    /// Runs the built-in closed-form checks
    Selfcheck {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Ctx {
    cfg: ExperimentConfig,
    out: PathBuf,
    hash: String,
}

impl Ctx {
    fn load(c: &Common) -> anyhow::Result<Self> {
        let mut cfg = ExperimentConfig::from_file(&c.config).with_context(|| format!("reading {}", c.config.display()))?;
        if let Some(w) = c.workers {
            cfg.ensemble.parallel_workers = w;
        }
        if let Some(s) = c.seed {
            cfg.ensemble.base_seed = s;
        }
        let out = c.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        let hash = cfg.hash();
        Ok(Self { cfg, out, hash })
    }

    fn instance(&self) -> anyhow::Result<Instance> {
        Ok(build_instance(&self.cfg, self.cfg.seed(0))?)
    }

    fn provenance(&self, seed: u64) -> String {
        format!("config_sha256={} seed={seed}", self.hash)
    }

    fn stamp(&self, seed: u64, mut body: Value) -> Value {
        body["config_sha256"] = json!(self.hash);
        body["seed"] = json!(seed);
        body
    }

    fn write_json(&self, name: &str, v: &Value) -> anyhow::Result<()> {
        let path = self.out.join(name);
        fs::write(&path, serde_json::to_string_pretty(v)? + "\n").with_context(|| format!("writing {}", path.display()))
    }

    fn write_traj(&self, stem: &str, t: &Trajectory, seed: u64) -> anyhow::Result<()> {
        let p = self.provenance(seed);
        t.write_state_csv(File::create(self.out.join(format!("{stem}_x.csv")))?, Some(&p))?;
        t.write_control_csv(File::create(self.out.join(format!("{stem}_u.csv")))?, Some(&p))?;
        Ok(())
    }

    /// First configured method at the first configured `m`.
    fn selection(&self, inst: &Instance) -> anyhow::Result<SelectionResult> {
        Ok(select(&self.cfg, inst, self.cfg.selection.methods[0], self.cfg.selection.m[0])?)
    }
}

fn simulate(c: &Common) -> anyhow::Result<()> {
    let ctx = Ctx::load(c)?;
    let inst = ctx.instance()?;
    let horizon = ctx.cfg.problem.horizon;
    let free = inst.base.simulate(&inst.x0, &[], horizon)?;
    ctx.write_traj("free", &free, inst.seed)?;
    let sel = ctx.selection(&inst)?;
    let model = inst.base.with_controlled(sel.nodes.clone())?;
    let eq = tf_equilibrium(&model, &inst.tau)?;
    let held = model.simulate(&inst.x0, &vec![eq.u_e.clone(); horizon], horizon)?;
    ctx.write_traj("held", &held, inst.seed)?;
    let summary = json!({ "nodes": sel.nodes, "equilibrium": eq.to_json(), "held_cost": held.cost });
    ctx.write_json("summary.json", &ctx.stamp(inst.seed, summary))
}

fn solve_tf(c: &Common) -> anyhow::Result<()> {
    let ctx = Ctx::load(c)?;
    let inst = ctx.instance()?;
    let sel = ctx.selection(&inst)?;
    let out = run_tf(&ctx.cfg, &inst, &sel.nodes)?;
    ctx.write_traj("tf", &out.solution.trajectory, inst.seed)?;
    let mut summary = serde_json::to_value(summarize(&out.solution, &out.equilibrium))?;
    summary["nodes"] = json!(sel.nodes);
    summary["d_star"] = json!(out.bound.map(|b| b.1));
    summary["first_order_residual"] = json!(out.first_order_residual);
    info!("J* = {}", out.solution.cost);
    ctx.write_json("summary.json", &ctx.stamp(inst.seed, summary))
}

fn solve_gf(c: &Common) -> anyhow::Result<()> {
    let ctx = Ctx::load(c)?;
    let inst = ctx.instance()?;
    let sel = ctx.selection(&inst)?;
    let sol = run_gf(&ctx.cfg, &inst, &sel.nodes)?;
    let model = inst.base.with_controlled(sel.nodes.clone())?;
    let p = &ctx.cfg.problem;
    let eq = gf_equilibrium(&model, ctx.cfg.model.tau, p.k, p.a)?;
    ctx.write_traj("gf", &sol.trajectory, inst.seed)?;
    let mut summary = serde_json::to_value(summarize(&sol, &eq))?;
    summary["nodes"] = json!(sel.nodes);
    ctx.write_json("summary.json", &ctx.stamp(inst.seed, summary))
}

fn solve_mf(c: &Common) -> anyhow::Result<()> {
    let ctx = Ctx::load(c)?;
    let inst = ctx.instance()?;
    let sel = ctx.selection(&inst)?;
    let mut runs = Vec::new();
    for &budget in &ctx.cfg.problem.budget {
        let sol = run_mf(&ctx.cfg, &inst, &sel.nodes, budget)?;
        ctx.write_traj(&format!("mf_C{budget}"), &sol.trajectory, inst.seed)?;
        runs.push(sol.to_json());
    }
    ctx.write_json("summary.json", &ctx.stamp(inst.seed, json!({ "nodes": sel.nodes, "runs": runs })))
}

fn select_nodes(c: &Common) -> anyhow::Result<()> {
    let ctx = Ctx::load(c)?;
    let inst = ctx.instance()?;
    let mut results = Vec::new();
    let mut infeasible = None;
    for &method in &ctx.cfg.selection.methods {
        for &m in &ctx.cfg.selection.m {
            match select(&ctx.cfg, &inst, method, m) {
                Ok(r) => results.push(r.to_json()),
                Err(e) if e.is_infeasible() => {
                    results.push(json!({ "method": method, "m": m, "infeasible": e.to_string() }));
                    infeasible.get_or_insert(e);
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    ctx.write_json("selection.json", &ctx.stamp(inst.seed, json!({ "results": results })))?;
    match infeasible {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn turnpike(c: &Common) -> anyhow::Result<()> {
    let ctx = Ctx::load(c)?;
    let inst = ctx.instance()?;
    let sel = ctx.selection(&inst)?;
    let out = run_tf(&ctx.cfg, &inst, &sel.nodes)?;
    let cert = dissipativity_certificate(inst.base.a())?;
    out.turnpike.write_csv(File::create(ctx.out.join("turnpike.csv"))?, Some(&ctx.provenance(inst.seed)))?;
    let summary = json!({
        "nodes": sel.nodes,
        "report": out.turnpike.to_json(),
        "cost": out.solution.cost,
        "equilibrium_cost": out.equilibrium.cost,
        "d_star": out.bound.map(|b| b.1),
        "certificate": cert,
    });
    ctx.write_json("turnpike.json", &ctx.stamp(inst.seed, summary))
}

fn experiment(c: &Common) -> anyhow::Result<()> {
    let ctx = Ctx::load(c)?;
    let bundle = run_experiment(&ctx.cfg, Some(&ctx.out))?;
    let label = if ctx.cfg.problem.kind == ferment::experiment::ProblemKind::Mf { "budget" } else { "m" };
    print!("{}", bundle.table_csv(label));
    Ok(())
}

fn selfcheck(out: Option<&Path>) -> anyhow::Result<()> {
    let checks = ferment::selfcheck::run();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("selfcheck.json"), serde_json::to_string_pretty(&checks)? + "\n")?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        bail!("{failed} check(s) failed");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::SolveTf(c) => solve_tf(c),
        Command::SolveGf(c) => solve_gf(c),
        Command::SolveMf(c) => solve_mf(c),
        Command::SelectNodes(c) => select_nodes(c),
        Command::TurnpikeReport(c) => turnpike(c),
        Command::Experiment(c) => experiment(c),
        Command::Selfcheck { out } => selfcheck(out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<FermentError>() {
                Some(fe) if fe.is_infeasible() => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
