//! Experiment runners. Each writes its CSV tables into the output
//! directory and returns the data that goes into report.json.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use sectlab_core::compound_linalg::{multiplicative_compound, RealMatrix};
use sectlab_core::ergodic_stats::{
    condition_verdicts, fit_lebergodic, lebesgue_recurrence_profile, slowdown_sweep, sr_average, sweep::nondecreasing,
    tau_loglaw_fit, tv_distance, EmpiricalMeasure, ErgodicReport, GridSpec, SweepConfig, Verdict,
};
use sectlab_core::field_library::{
    equilibria, field_eval, field_jacobian, CylinderField, CylinderFieldEval, Reversed, SingularityTag,
};
use sectlab_core::flow_engine::{fmt17, integrate, integrate_field, integrate_variational, transition_map};
use sectlab_core::suspension::{orbit_generate_many, OrbitConfig, OrbitOptions, OrbitOutcome, SolenoidSpec};

use crate::config::{Experiment, ExperimentConfig};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StoppedOrbit {
    pub seed: u64,
    pub returns: u64,
    pub error: String,
}

/// Everything a run produced. Serialized as report.json; holds no
/// timestamps so identical inputs give identical bytes.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub experiment: Experiment,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub results: Value,
    pub checks: Vec<Check>,
    /// Withheld verdicts, as "seed N: NAME".
    pub inconclusive: Vec<String>,
    pub stopped_orbits: Vec<StoppedOrbit>,
    pub files: Vec<String>,
}

impl RunReport {
    /// Reasons a --strict run exits nonzero.
    pub fn strict_failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self.checks.iter().filter(|c| !c.ok).map(|c| format!("check failed: {}", c.name)).collect();
        out.extend(self.inconclusive.iter().map(|v| format!("inconclusive: {v}")));
        out.extend(self.stopped_orbits.iter().map(|o| format!("orbit {} stopped after {} returns: {}", o.seed, o.returns, o.error)));
        out
    }
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    out: &'a Path,
    files: Vec<String>,
    checks: Vec<Check>,
    inconclusive: Vec<String>,
    stopped: Vec<StoppedOrbit>,
}

impl Ctx<'_> {
    fn check(&mut self, name: impl Into<String>, ok: bool) {
        self.checks.push(Check { name: name.into(), ok });
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let path = self.out.join(name);
        let f = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(f));
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn solenoid(&self) -> &SolenoidSpec {
        self.cfg.solenoid.as_ref().expect("validated: glued models carry a solenoid")
    }

    /// Runs the configured orbits; stopped orbits are recorded and kept.
    fn orbits(&mut self, options: OrbitOptions) -> Vec<OrbitOutcome> {
        let cfg = self.cfg;
        let ocfg = OrbitConfig { integrator: cfg.integrator, seed: cfg.seed, options };
        let seeds = cfg.orbit_seeds();
        let mut kept = Vec::new();
        for (seed, r) in seeds.iter().zip(orbit_generate_many(self.solenoid(), &cfg.model, &seeds, cfg.n_returns, &ocfg)) {
            match r {
                Ok(o) => {
                    if let Some(e) = &o.terminated {
                        self.stopped.push(StoppedOrbit { seed: o.seed, returns: o.ledger.total_returns, error: e.to_string() });
                    }
                    kept.push(o);
                }
                Err(e) => self.stopped.push(StoppedOrbit { seed: *seed, returns: 0, error: e.to_string() }),
            }
        }
        kept
    }

    fn verdicts(&mut self, o: &OrbitOutcome) -> Result<ErgodicReport> {
        let slope = tau_loglaw_fit(&o.ledger.taus(), &o.ledger.entry_distances()).ok().map(|f| f.slope);
        let rep = condition_verdicts(&o.acc, o.seed, slope)?;
        for (name, v) in &rep.verdicts {
            if *v == Verdict::Inconclusive {
                self.inconclusive.push(format!("seed {}: {name}", o.seed));
            }
        }
        Ok(rep)
    }
}

pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    let issues = cfg.check();
    if !issues.is_empty() {
        let text: Vec<String> = issues.iter().map(|i| i.to_string()).collect();
        bail!("invalid config: {}", text.join("; "));
    }
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut ctx = Ctx { cfg, out, files: Vec::new(), checks: Vec::new(), inconclusive: Vec::new(), stopped: Vec::new() };
    let results = match cfg.experiment() {
        Experiment::Equilibria => run_equilibria(&mut ctx)?,
        Experiment::Transition => run_transition(&mut ctx)?,
        Experiment::Symmetry => run_symmetry(&mut ctx)?,
        Experiment::CompoundCheck => run_compound(&mut ctx)?,
        Experiment::Birkhoff => run_birkhoff(&mut ctx)?,
        Experiment::Recurrence => run_recurrence(&mut ctx)?,
        Experiment::Measure => run_measure(&mut ctx)?,
        Experiment::SlowdownSweep => run_sweep(&mut ctx)?,
        Experiment::Psectional => run_psectional(&mut ctx)?,
    };
    let mut files = ctx.files;
    files.push("report.json".into());
    let report = RunReport {
        experiment: cfg.experiment(),
        seed: cfg.seed,
        config: cfg.clone(),
        results,
        checks: ctx.checks,
        inconclusive: ctx.inconclusive,
        stopped_orbits: ctx.stopped,
        files,
    };
    let path = out.join("report.json");
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(report)
}

/// Output directory: flag, then SECTLAB_OUT, then the config, then
/// ./sectlab-out.
pub fn resolve_output_dir(flag: Option<&Path>, env: Option<&str>, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(e) = env.filter(|e| !e.is_empty()) {
        return PathBuf::from(e);
    }
    cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("sectlab-out"))
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| fmt17(*x)).collect::<Vec<_>>().join(" ")
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn run_equilibria(ctx: &mut Ctx) -> Result<Value> {
    let eqs = equilibria(&ctx.cfg.model)?;
    let rows: Vec<Vec<String>> = eqs
        .iter()
        .map(|e| {
            let spec: Vec<String> = e.cu_spectrum.iter().map(|(re, im)| format!("{}{}{}i", fmt17(*re), if *im < 0.0 { '-' } else { '+' }, fmt17(im.abs()))).collect();
            let (tag, ls, lu) = match &e.sing_class {
                Some(c) => (format!("{:?}", c.tag), fmt17(c.lambda_s), fmt17(c.lambda_u)),
                None => ("NotSaddle".into(), String::new(), String::new()),
            };
            vec![e.name.clone(), join(&e.location), spec.join(" "), tag, ls, lu]
        })
        .collect();
    ctx.csv("equilibria.csv", &["name", "location", "cu_spectrum", "class", "lambda_s", "lambda_u"], &rows)?;
    let named = |n: &str| eqs.iter().find(|e| e.name == n).and_then(|e| e.sing_class.map(|c| c.tag));
    match ctx.cfg.model.cylinder_field() {
        CylinderField::Y1 | CylinderField::Y2 | CylinderField::Y4 => {
            ctx.check("sigma1 is Rovella-like", named("sigma1") == Some(SingularityTag::GeneralizedRovellaLike));
            ctx.check("sigma2 is Lorenz-like", named("sigma2") == Some(SingularityTag::GeneralizedLorenzLike));
        }
        CylinderField::Y0 | CylinderField::Y3 => {
            for n in ["sigma1", "sigma2"] {
                ctx.check(format!("{n} is a non-sectional saddle"), named(n) == Some(SingularityTag::NonSectionalSaddle));
            }
        }
        _ => {}
    }
    Ok(serde_json::to_value(&eqs)?)
}

fn default_entries(h: usize) -> Vec<Vec<f64>> {
    let grid = [0.5, -0.5, 1.0, -1.0, 1.7, -1.7, 2.5, -2.5];
    grid.iter()
        .map(|&a| {
            let mut x = vec![0.0; h];
            x[0] = a;
            for (i, v) in x.iter_mut().enumerate().skip(1) {
                *v = 0.4 * a / i as f64;
            }
            x
        })
        .collect()
}

fn entries(ctx: &Ctx) -> Vec<Vec<f64>> {
    if ctx.cfg.params.entries.is_empty() {
        default_entries(ctx.cfg.model.horizontal_dim())
    } else {
        ctx.cfg.params.entries.clone()
    }
}

/// Reversible under flipping the vertical coordinate and time.
fn reversible(cf: CylinderField) -> bool {
    matches!(cf, CylinderField::Y0 | CylinderField::Y1 | CylinderField::Y3 | CylinderField::Y4)
}

fn run_transition(ctx: &mut Ctx) -> Result<Value> {
    let m = &ctx.cfg.model;
    let mut rows = Vec::new();
    let mut results = Vec::new();
    let (mut worst, mut failed, mut longest_far) = (0.0f64, 0usize, 0.0f64);
    for x in entries(ctx) {
        match transition_map(m, &x, &ctx.cfg.integrator) {
            Ok((exit, tau)) => {
                let dev = max_dev(&exit, &x);
                worst = worst.max(dev);
                if x[0].abs() >= 2.0 {
                    longest_far = longest_far.max(tau);
                }
                rows.push(vec![join(&x), join(&exit), fmt17(tau), fmt17(dev)]);
                results.push(json!({ "entry": x, "exit": exit, "tau": tau, "displacement": dev }));
            }
            Err(e) => {
                failed += 1;
                rows.push(vec![join(&x), String::new(), String::new(), String::new()]);
                results.push(json!({ "entry": x, "error": e.to_string() }));
            }
        }
    }
    ctx.csv("transition.csv", &["entry", "exit", "tau", "displacement"], &rows)?;
    ctx.check(format!("{failed} entries failed to cross"), failed == 0);
    let cf = m.cylinder_field();
    if reversible(cf) {
        ctx.check(format!("exit equals entry, max |x_out - x_in| = {worst:.1e}"), worst < 1e-5);
    }
    let bound = match cf {
        CylinderField::Y0 => Some(16.0),
        CylinderField::Y1 => Some(8.0),
        _ => None,
    };
    if let Some(b) = bound {
        ctx.check(format!("crossings with |x| >= 2 take at most {b} (longest {longest_far:.3})"), longest_far <= b);
    }
    Ok(json!({ "transitions": results, "max_displacement": worst }))
}

fn run_symmetry(ctx: &mut Ctx) -> Result<Value> {
    let m = ctx.cfg.model.clone();
    let icfg = ctx.cfg.integrator;
    let d = m.dim();
    let field = CylinderFieldEval::new(&m);
    // The flow from (x, -v) is the time-reversed mirror of the flow from (x, v).
    let mut rows = Vec::new();
    let mut mirror_worst = 0.0f64;
    for x in entries(ctx) {
        let (_, tau) = transition_map(&m, &x, &icfg)?;
        let mut lo = x.clone();
        lo.push(-2.0);
        let mut hi = x.clone();
        hi.push(2.0);
        let fwd = integrate(&m, &lo, tau, &icfg)?;
        let mirror = integrate_field(Reversed(&field), &hi, tau, &icfg)?;
        let mut worst = 0.0f64;
        for i in 0..=1000 {
            let t = tau * i as f64 / 1000.0;
            let (a, mut b) = (fwd.sample(t), mirror.sample(t));
            b[d - 1] = -b[d - 1];
            worst = worst.max(max_dev(&a, &b));
        }
        mirror_worst = mirror_worst.max(worst);
        rows.push(vec![join(&x), fmt17(tau), fmt17(worst)]);
    }
    ctx.csv("symmetry.csv", &["entry", "tau", "mirror_deviation"], &rows)?;
    ctx.check(format!("mirror trajectories agree, max deviation {mirror_worst:.1e}"), mirror_worst < 1e-6);
    let mut results = json!({ "mirror_max_deviation": mirror_worst });

    let cf = m.cylinder_field();
    if matches!(cf, CylinderField::Y0 | CylinderField::Y1) {
        // The axis flows from sigma2 down into sigma1, so the connection is
        // followed backwards from just above sigma1.
        let y0 = -1.0 + 1e-6;
        let t_end = 60.0 * 5.0 / cf.vertical_gain();
        let back = integrate_field(Reversed(&field), &[0.0, y0], t_end, &icfg)?;
        let x_max = (0..=2000).map(|i| back.sample(t_end * i as f64 / 2000.0)[0].abs()).fold(0.0, f64::max);
        let w = &back.final_state;
        let dist = w[0].hypot(w[1] - 1.0);
        ctx.check(format!("backward axis orbit reaches sigma2 (distance {dist:.1e})"), dist < 1e-6);
        ctx.check(format!("axis is invariant (|x| <= {x_max:.1e})"), x_max < 1e-9);
        results["axis_connection"] = json!({ "start": [0.0, y0], "time": t_end, "end": w, "distance_to_sigma2": dist });
    }
    if cf.is_rotational() {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
        let mut worst = 0.0f64;
        for _ in 0..ctx.cfg.params.samples {
            let w: Vec<f64> = (0..d).map(|i| if i + 1 < d { rng.gen_range(-2.5..2.5) } else { rng.gen_range(-2.0..2.0) }).collect();
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            let (c, s) = (a.cos(), a.sin());
            let mut rot = RealMatrix::identity(d, d);
            rot[(0, 0)] = c;
            rot[(0, 1)] = -s;
            rot[(1, 0)] = s;
            rot[(1, 1)] = c;
            let rw: Vec<f64> = (&rot * RealMatrix::from_column_slice(d, 1, &w)).iter().copied().collect();
            let f = RealMatrix::from_column_slice(d, 1, &field_eval(&m, &w)?);
            let rf = RealMatrix::from_column_slice(d, 1, &field_eval(&m, &rw)?);
            worst = worst.max((&rot * f - rf).amax());
            let j = field_jacobian(&m, &w)?;
            let rj = field_jacobian(&m, &rw)?;
            worst = worst.max((&rot * j * rot.transpose() - rj).amax());
        }
        ctx.check(format!("rotational equivariance of field and Jacobian, max error {worst:.1e}"), worst < 1e-12);
        results["equivariance_max_error"] = json!(worst);
    }
    Ok(results)
}

fn run_compound(ctx: &mut Ctx) -> Result<Value> {
    let m = &ctx.cfg.model;
    let d = m.dim();
    let w0 = ctx.cfg.params.initial.clone().unwrap_or_else(|| (0..d).map(|i| 0.3 - 0.1 * i as f64).collect());
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for k in 1..=4 {
        let t = ctx.cfg.t_end * k as f64 / 4.0;
        let vs = integrate_variational(m, &w0, t, &ctx.cfg.integrator)?;
        let direct = vs.compound();
        let from_dphi = multiplicative_compound(&vs.dphi(), 2)?;
        let err = (&from_dphi - &direct).norm() / direct.norm();
        worst = worst.max(err);
        rows.push(vec![
            fmt17(t),
            fmt17(err),
            fmt17(vs.log_abs_det()),
            fmt17(vs.log_wedge_inv(2)?),
            fmt17(vs.psi_cu_integral),
            join(&vs.point),
        ]);
    }
    ctx.csv("compound.csv", &["t", "rel_error", "log_abs_det", "log_wedge2_inv", "psi_cu_integral", "point"], &rows)?;
    ctx.check(format!("wedge^2 Dphi_T matches the compound cocycle, max rel error {worst:.1e}"), worst < 1e-6);
    Ok(json!({ "initial": w0, "max_rel_error": worst }))
}

fn verdict_cols(r: &ErgodicReport) -> Vec<String> {
    ["wNU2SE", "NU2SE", "wASE", "SR", "wSR"]
        .iter()
        .map(|k| r.verdicts.get(*k).map(|v| format!("{v:?}").to_lowercase()).unwrap_or_default())
        .collect()
}

fn run_birkhoff(ctx: &mut Ctx) -> Result<Value> {
    let outs = ctx.orbits(ctx.cfg.orbit.clone());
    let (mut rows, mut sr_rows, mut wsr_rows) = (Vec::new(), Vec::new(), Vec::new());
    let mut reports = Vec::new();
    for o in &outs {
        let name = format!("ledger_{}.csv", o.seed);
        let path = ctx.out.join(&name);
        o.ledger.write_csv(BufWriter::new(File::create(&path).with_context(|| format!("cannot write {}", path.display()))?))?;
        ctx.files.push(name);
        let r = ctx.verdicts(o)?;
        let mut row = vec![
            r.seed.to_string(),
            r.n_iterates.to_string(),
            r.n_returns.to_string(),
            r.n_crossings.to_string(),
            fmt17(r.total_time),
            fmt17(r.psi_cu_avg),
            fmt17(r.nu2se_margin),
            fmt17(r.wase_rate),
            fmt17(r.tau_mean),
            fmt17(r.tau_max),
            r.tau_loglaw_slope.map(fmt17).unwrap_or_default(),
        ];
        row.extend(verdict_cols(&r));
        rows.push(row);
        for v in &r.sr_values {
            sr_rows.push(vec![r.seed.to_string(), fmt17(v.delta), fmt17(v.discrete), fmt17(v.continuous)]);
        }
        for v in &r.wsr_frequencies {
            wsr_rows.push(vec![r.seed.to_string(), fmt17(v.r), fmt17(v.frequency), fmt17(v.time_fraction)]);
        }
        reports.push(r);
    }
    ctx.csv(
        "orbits.csv",
        &[
            "seed", "n_iterates", "n_returns", "n_crossings", "total_time", "psi_cu_avg", "nu2se_margin", "wase_rate",
            "tau_mean", "tau_max", "tau_loglaw_slope", "wNU2SE", "NU2SE", "wASE", "SR", "wSR",
        ],
        &rows,
    )?;
    ctx.csv("sr.csv", &["seed", "delta", "discrete", "continuous"], &sr_rows)?;
    ctx.csv("wsr.csv", &["seed", "r", "frequency", "time_fraction"], &wsr_rows)?;
    Ok(json!({ "reports": reports }))
}

fn run_recurrence(ctx: &mut Ctx) -> Result<Value> {
    let mut deltas = ctx.cfg.orbit.deltas.clone();
    deltas.sort_by(|a, b| b.total_cmp(a));
    deltas.dedup();
    let spec = ctx.solenoid().clone();
    let m = ctx.cfg.model.clone();
    let prof = lebesgue_recurrence_profile(&m, &spec, &deltas, ctx.cfg.params.profile_nodes, &ctx.cfg.integrator)?;
    let pairs: Vec<(f64, f64)> = deltas.iter().copied().zip(prof.values.iter().copied()).collect();
    let (c_prime, flags) = fit_lebergodic(&pairs, 1.0)?;
    let options = OrbitOptions { deltas: deltas.clone(), continuous_sr: true, ..ctx.cfg.orbit.clone() };
    let outs = ctx.orbits(options);
    let n = outs.len().max(1) as f64;
    let (mut disc, mut cont) = (vec![0.0; deltas.len()], vec![0.0; deltas.len()]);
    for o in &outs {
        for (i, &d) in deltas.iter().enumerate() {
            disc[i] += sr_average(&o.acc, d)? / n;
            cont[i] += o.acc.continuous_sr(d)? / n;
        }
    }
    let rows: Vec<Vec<String>> = (0..deltas.len())
        .map(|i| vec![fmt17(deltas[i]), fmt17(prof.values[i]), fmt17(disc[i]), fmt17(cont[i])])
        .collect();
    ctx.csv("recurrence.csv", &["delta", "lebesgue_profile", "orbit_discrete", "orbit_continuous"], &rows)?;
    let dec = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0]);
    ctx.check("Lebesgue profile nonincreasing as delta shrinks", dec(&prof.values));
    ctx.check(format!("one constant C' = {c_prime:.3e} bounds every radius"), flags.iter().all(|f| *f));
    ctx.check("orbit averages nonincreasing as delta shrinks", outs.is_empty() || (dec(&disc) && dec(&cont)));
    Ok(json!({
        "deltas": deltas,
        "profile": prof,
        "c_prime": c_prime,
        "orbit_discrete": disc,
        "orbit_continuous": cont,
        "orbits": outs.len(),
    }))
}

fn run_measure(ctx: &mut Ctx) -> Result<Value> {
    let grid = ctx.cfg.orbit.measure.unwrap_or_default();
    let options = OrbitOptions { measure: Some(grid), ..ctx.cfg.orbit.clone() };
    let outs = ctx.orbits(options);
    let measures: Vec<(u64, &EmpiricalMeasure)> = outs.iter().filter_map(|o| o.measure.as_ref().map(|m| (o.seed, m))).collect();
    let mut merged = EmpiricalMeasure::new(grid);
    for (_, m) in &measures {
        merged.merge(m)?;
    }
    let mut pairs = Vec::new();
    let mut pair_rows = Vec::new();
    for i in 0..measures.len() {
        for j in i + 1..measures.len() {
            let tv = tv_distance(measures[i].1, measures[j].1)?;
            pair_rows.push(vec![measures[i].0.to_string(), measures[j].0.to_string(), fmt17(tv)]);
            pairs.push(json!({ "seeds": [measures[i].0, measures[j].0], "tv": tv }));
        }
    }
    let max_tv = pairs.iter().filter_map(|p| p["tv"].as_f64()).fold(0.0, f64::max);
    let GridSpec { nx, ny } = grid;
    let weights = merged.normalized();
    let rows: Vec<Vec<String>> = (0..nx * ny)
        .map(|c| {
            let (i, j) = (c / ny, c % ny);
            vec![i.to_string(), j.to_string(), fmt17(i as f64 / nx as f64), fmt17(j as f64 / ny as f64), fmt17(weights[c])]
        })
        .collect();
    ctx.csv("measure.csv", &["i", "j", "a_lo", "b_lo", "weight"], &rows)?;
    ctx.csv("measure_tv.csv", &["seed_a", "seed_b", "tv"], &pair_rows)?;
    Ok(json!({ "grid": grid, "orbits": measures.len(), "pairwise_tv": pairs, "max_tv": max_tv }))
}

fn run_sweep(ctx: &mut Ctx) -> Result<Value> {
    let h = ctx.cfg.model.horizontal_dim();
    let entries = if ctx.cfg.params.entries.is_empty() {
        [[0.5, 0.2], [1.0, 0.0], [0.1, 0.3], [2.0, 1.0]]
            .iter()
            .map(|e| (0..h).map(|i| e.get(i).copied().unwrap_or(0.1)).collect())
            .collect()
    } else {
        ctx.cfg.params.entries.clone()
    };
    let scfg = SweepConfig {
        model: ctx.cfg.model.clone(),
        solenoid: ctx.solenoid().clone(),
        zeta0: ctx.cfg.params.zeta0_grid.clone(),
        n_returns: ctx.cfg.n_returns,
        seeds: ctx.cfg.orbit_seeds(),
        entries: entries.clone(),
        p: ctx.cfg.params.p,
        integrator: ctx.cfg.integrator,
    };
    let sweep = slowdown_sweep(&scfg)?;
    let rows: Vec<Vec<String>> = sweep
        .iter()
        .map(|r| {
            vec![
                fmt17(r.zeta0),
                r.n_iterates.to_string(),
                fmt17(r.total_time),
                fmt17(r.psi_cu_avg),
                fmt17(r.psi_p_avg),
                fmt17(r.p_margin),
                fmt17(r.tau_mean),
                fmt17(r.expected_ratio),
                join(&r.sigma_ratios),
                r.terminated_orbits.to_string(),
            ]
        })
        .collect();
    ctx.csv(
        "sweep.csv",
        &["zeta0", "n_iterates", "total_time", "psi_cu_avg", "psi_p_avg", "p_margin", "tau_mean", "expected_ratio", "sigma_ratios", "stopped_orbits"],
        &rows,
    )?;
    let psi: Vec<f64> = sweep.iter().map(|r| r.psi_cu_avg).collect();
    let worst = sweep
        .iter()
        .flat_map(|r| r.sigma_ratios.iter().map(move |s| (s / r.expected_ratio - 1.0).abs()))
        .fold(0.0, f64::max);
    ctx.check(format!("sigma integrals scale as 1/(1 - zeta0), max deviation {:.1}%", 100.0 * worst), worst < 0.1);
    ctx.check("psi_cu averages nondecreasing in zeta0", nondecreasing(&psi, 0.0));
    ctx.check(format!("order-{} margins positive", ctx.cfg.params.p), sweep.iter().all(|r| r.p_margin > 0.0));
    let stopped: usize = sweep.iter().map(|r| r.terminated_orbits).sum();
    if stopped > 0 {
        ctx.stopped.push(StoppedOrbit { seed: ctx.cfg.seed, returns: 0, error: format!("{stopped} sweep orbits stopped early") });
    }
    let first = sweep.iter().find(|r| r.psi_cu_avg >= 0.0).map(|r| r.zeta0);
    Ok(json!({ "entries": entries, "rows": sweep, "first_nonnegative_zeta0": first }))
}

fn run_psectional(ctx: &mut Ctx) -> Result<Value> {
    let d = ctx.cfg.model.dim();
    let mut options = ctx.cfg.orbit.clone();
    if options.p_orders.is_empty() {
        options.p_orders = (3..=d).collect();
    }
    let orders = options.p_orders.clone();
    let outs = ctx.orbits(options);
    let mut rows = Vec::new();
    let mut per_order: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut reports = Vec::new();
    for o in &outs {
        let r = ctx.verdicts(o)?;
        rows.push(vec![o.seed.to_string(), "2".into(), fmt17(r.psi_cu_avg), fmt17(r.nu2se_margin), r.converged["psi_cu"].to_string()]);
        for ps in &r.p_sectional {
            rows.push(vec![o.seed.to_string(), ps.p.to_string(), fmt17(ps.average), fmt17(ps.margin), ps.converged.to_string()]);
            per_order.entry(ps.p).or_default().push(ps.margin);
        }
        reports.push(r);
    }
    ctx.csv("psectional.csv", &["seed", "p", "average", "margin", "converged"], &rows)?;
    for p in orders {
        let m = per_order.get(&p).map(|v| v.iter().cloned().fold(f64::INFINITY, f64::min)).unwrap_or(f64::NAN);
        ctx.check(format!("order-{p} margin positive on every orbit (smallest {m:.4})"), m > 0.0);
    }
    Ok(json!({ "reports": reports }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_both_signs() {
        let e = default_entries(2);
        assert_eq!(e.len(), 8);
        assert_eq!(e[0], vec![0.5, 0.2]);
        assert_eq!(e[1], vec![-0.5, -0.2]);
        assert_eq!(default_entries(1)[7], vec![-2.5]);
    }

    #[test]
    fn output_dir_precedence() {
        let mut cfg = crate::config::parse_config("[model]\nfamily = \"Y0\"\n").unwrap();
        assert_eq!(resolve_output_dir(None, None, &cfg), PathBuf::from("sectlab-out"));
        cfg.output_dir = Some("from-config".into());
        assert_eq!(resolve_output_dir(None, Some(""), &cfg), PathBuf::from("from-config"));
        assert_eq!(resolve_output_dir(None, Some("env"), &cfg), PathBuf::from("env"));
        assert_eq!(resolve_output_dir(Some(Path::new("flag")), Some("env"), &cfg), PathBuf::from("flag"));
    }
}
