use std::path::{Path, PathBuf};

use serde::Serialize;
use sls_core::distributed::{self, DistributedOptions, DistributedStatus};
use sls_core::lti::{make_chain_system, simulate_closed_loop, spectral_radius};
use sls_core::saturation::{run_compensated, run_naive_saturated, Compensator, CompensatorBank, SaturatedRun};
use sls_core::synthesis::{
    synthesize_centralized, InfeasibilityReport, SynthesisOptions, SynthesisResult, SynthesisStatus,
};
use sls_core::verify::{check_robust_feasibility, compensator_gain, small_gain_margin, worst_case_disturbance, GainReport};
use sls_core::{DMatrix, DVector, FirResponse};

use crate::config::{read_artifact, Experiment};
use crate::output::{ensure_dir, series, write_csv, write_json};
use crate::{Failure, Mode};

/// Slack below this counts as a violation.
const SLACK_TOL: f64 = 1e-6;

fn out_dir(exp: &Experiment, out: Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = out.unwrap_or_else(|| {
        let o = &exp.config.output;
        if o.is_absolute() {
            o.clone()
        } else {
            exp.base.join(o)
        }
    });
    ensure_dir(&dir)?;
    Ok(dir)
}

fn synthesis_options(exp: &Experiment) -> SynthesisOptions {
    SynthesisOptions {
        settings: exp.config.settings(),
        ..SynthesisOptions::default()
    }
}

fn compensator_path(dir: &Path, node: usize) -> PathBuf {
    dir.join(format!("node_{node}.json"))
}

fn load_phi(exp: &Experiment, path: &Path) -> Result<FirResponse, Failure> {
    let phi: FirResponse = read_artifact(path)?;
    if phi.n() != exp.sys.n() || phi.m() != exp.sys.m() || phi.horizon() != exp.config.horizon {
        return Err(Failure::Config(format!(
            "{}: response is {}x{} with T = {}, config expects {}x{} with T = {}",
            path.display(),
            phi.n(),
            phi.m(),
            phi.horizon(),
            exp.sys.n(),
            exp.sys.m(),
            exp.config.horizon
        )));
    }
    Ok(phi)
}

#[derive(Serialize)]
struct SynthSummary {
    mode: &'static str,
    status: SynthesisStatus,
    cost: f64,
    solver_iterations: usize,
    kkt_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    rounds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    distributed_status: Option<DistributedStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    infeasibility: Option<InfeasibilityReport>,
    /// nodes without a compensator (the naive response is used there)
    #[serde(skip_serializing_if = "Vec::is_empty")]
    compensators_missing: Vec<usize>,
}

pub fn synth(
    config: &Path,
    mode: Mode,
    alpha: Option<f64>,
    eps: Option<f64>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let exp = Experiment::load(config)?;
    let dir = out_dir(&exp, out)?;
    let opts = synthesis_options(&exp);
    let (result, run) = match mode {
        Mode::Centralized => (synthesize_centralized(&exp.sys, &exp.spec, &exp.support, &opts)?, None),
        Mode::Distributed => {
            let d = &exp.config.distributed;
            let eps = eps.unwrap_or(d.epsilon);
            if !(eps > 0.0) || alpha.is_some_and(|a| !(a > 0.0)) {
                return Err(Failure::Config("--eps and --alpha must be positive".into()));
            }
            let mut settings = DistributedOptions::default().settings;
            settings.tol = exp.config.solver.tol;
            let dopts = DistributedOptions {
                alpha: alpha.or(d.alpha),
                epsilon: eps,
                max_rounds: d.max_rounds,
                seed: seed.unwrap_or(d.seed),
                settings,
                ..DistributedOptions::default()
            };
            let run = distributed::run(&exp.sys, &exp.spec, &exp.support, &dopts)?;
            write_csv(
                &dir.join("trace.csv"),
                &[
                    ("command", "synth --mode distributed".into()),
                    ("epsilon", eps.to_string()),
                    ("status", format!("{:?}", run.status)),
                ],
                |w| run.write_trace_csv(w),
            )?;
            (run.result.clone(), Some(run))
        }
    };

    let mut summary = SynthSummary {
        mode: match mode {
            Mode::Centralized => "centralized",
            Mode::Distributed => "distributed",
        },
        status: result.status,
        cost: result.cost,
        solver_iterations: result.iterations,
        kkt_residual: result.kkt.max(),
        rounds: run.as_ref().map(|r| r.trace.len()),
        distributed_status: run.as_ref().map(|r| r.status),
        infeasibility: result.infeasibility.clone(),
        compensators_missing: Vec::new(),
    };

    if result.status == SynthesisStatus::Infeasible {
        write_json(&dir.join("synth.json"), &summary)?;
        let what = result.infeasibility.as_ref().map_or_else(|| "no certificate".into(), |r| r.summary());
        return Err(Failure::Infeasible(format!("synthesis is infeasible: {what}")));
    }
    write_artifacts(&dir, &result)?;
    if exp.config.saturation.is_some() {
        summary.compensators_missing = write_compensators(&exp, &dir.join("compensators"), &opts)?;
    }
    write_json(&dir.join("synth.json"), &summary)?;
    println!("status {:?}", result.status);
    println!("cost {}", result.cost);
    if let Some(run) = &run {
        println!("rounds {} ({:?})", run.trace.len(), run.status);
        if !run.converged() {
            return Err(Failure::Other(format!(
                "distributed iteration stopped without converging ({:?}); the best iterate was written",
                run.status
            )));
        }
    }
    if result.status == SynthesisStatus::MaxIter {
        return Err(Failure::Other("solver hit its iteration limit; the last iterate was written".into()));
    }
    Ok(())
}

fn write_artifacts(dir: &Path, result: &SynthesisResult) -> Result<(), Failure> {
    write_json(&dir.join("phi.json"), &result.phi)?;
    write_json(&dir.join("certificate.json"), &result.cert)
}

fn write_compensators(exp: &Experiment, dir: &Path, opts: &SynthesisOptions) -> Result<Vec<usize>, Failure> {
    ensure_dir(dir)?;
    let (bank, failed) = CompensatorBank::synthesize_all(&exp.sys, &exp.support, opts)?;
    for c in bank.iter() {
        write_json(&compensator_path(dir, c.saturated_node), &c.phi_bar)?;
    }
    for &i in &failed {
        log::warn!("no compensator for node {i}; it falls back to the nominal response");
    }
    Ok(failed)
}

#[derive(Serialize)]
struct VerifySummary {
    min_slack: f64,
    binding_row: usize,
    violated_rows: Vec<usize>,
    row: usize,
    bound: f64,
    worst_case: f64,
    simulated_peak: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    small_gain: Option<GainReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    compensator_gains: Vec<(usize, GainReport)>,
}

#[allow(clippy::too_many_arguments)]
pub fn verify(
    config: &Path,
    phi_path: &Path,
    row: Option<usize>,
    grid: usize,
    model: Option<&Path>,
    compensators: Option<&Path>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let exp = Experiment::load(config)?;
    let phi = load_phi(&exp, phi_path)?;
    let dir = out_dir(&exp, out)?;
    if grid == 0 {
        return Err(Failure::Config("--grid must be positive".into()));
    }
    let spec = &exp.spec;
    let audit = check_robust_feasibility(&phi, spec)?;
    write_csv(
        &dir.join("slack.csv"),
        &[("command", "verify".into()), ("phi", phi_path.display().to_string())],
        |w| audit.write_csv(w, |r| format!("worst_case_row_{r}")),
    )?;

    let row = row.unwrap_or_else(|| audit.binding_row());
    if row >= spec.p() {
        return Err(Failure::Config(format!("row {row} out of range (p = {})", spec.p())));
    }
    let wc = worst_case_disturbance(&phi, spec, row)?;
    let mut w = wc.w_seq.clone();
    w.resize(2 * phi.horizon(), DVector::zeros(exp.sys.n()));
    let traj = simulate_closed_loop(&phi, &w);
    let h_row = spec.h_mat().row(row);
    let values: Vec<f64> = traj
        .x_seq
        .iter()
        .zip(&traj.u_seq)
        .map(|(x, u)| {
            let xu = DVector::from_iterator(x.len() + u.len(), x.iter().chain(u.iter()).copied());
            (h_row * xu)[0]
        })
        .collect();
    let peak = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let meta = |what: &str| {
        vec![
            ("command", "verify".to_string()),
            ("series", what.to_string()),
            ("row", row.to_string()),
            ("bound", spec.h()[row].to_string()),
        ]
    };
    write_csv(&dir.join("worst_case_w.csv"), &meta("worst-case disturbance"), |out| series(out, "w", &wc.w_seq))?;
    write_csv(&dir.join("worst_case_trajectory.csv"), &meta("state and input under the worst case"), |out| {
        let (n, m) = (exp.sys.n(), exp.sys.m());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=m).map(|i| format!("u{i}")));
        header.push("row_value".into());
        writeln!(out, "{}", header.join(","))?;
        for (t, ((x, u), v)) in traj.x_seq.iter().zip(&traj.u_seq).zip(&values).enumerate() {
            let cells: Vec<String> = x.iter().chain(u.iter()).map(f64::to_string).collect();
            writeln!(out, "{t},{},{v}", cells.join(","))?;
        }
        Ok(())
    })?;

    let small_gain = match model {
        Some(p) => {
            let rows: Vec<Vec<f64>> = read_artifact(p)?;
            let n = exp.sys.n();
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(Failure::Config(format!("{}: model must be {n}x{n}", p.display())));
            }
            let a_hat = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
            if spectral_radius(exp.sys.a()) >= 1.0 {
                log::warn!("plant is not strictly stable; small-gain check skipped");
                None
            } else {
                Some(small_gain_margin(&exp.sys, &a_hat, &phi, grid)?)
            }
        }
        None => None,
    };
    let mut compensator_gains = Vec::new();
    if let Some(cdir) = compensators {
        for i in 0..exp.sys.n() {
            let p = compensator_path(cdir, i);
            if p.is_file() {
                let c = load_phi(&exp, &p)?;
                compensator_gains.push((i, compensator_gain(c.phi_u(), grid)?));
            }
        }
    }

    let summary = VerifySummary {
        min_slack: audit.min_slack(),
        binding_row: audit.binding_row(),
        violated_rows: audit.violated_rows(SLACK_TOL),
        row,
        bound: spec.h()[row],
        worst_case: wc.achieved_value,
        simulated_peak: peak,
        small_gain,
        compensator_gains,
    };
    write_json(&dir.join("verify.json"), &summary)?;
    println!("min slack {} (row {})", summary.min_slack, summary.binding_row);
    println!("row {row}: bound {}, worst case {}, simulated peak {peak}", summary.bound, summary.worst_case);
    if let Some(g) = &summary.small_gain {
        println!("small-gain margin {} ({:?})", g.margin, g.verdict);
    }
    if summary.min_slack < -SLACK_TOL {
        return Err(Failure::NegativeSlack(format!(
            "rows {:?} exceed their bounds",
            summary.violated_rows
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulateSummary {
    steps: usize,
    naive_saturation_steps: usize,
    compensated_saturation_steps: usize,
    /// energy is summed from the step after the last saturation event
    energy_from: usize,
    naive_energy: f64,
    compensated_energy: f64,
    energy_ratio: f64,
    /// nodes running without a compensator
    #[serde(skip_serializing_if = "Vec::is_empty")]
    fallback_nodes: Vec<usize>,
}

pub fn simulate(
    config: &Path,
    phi_path: &Path,
    compensators: Option<&Path>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let exp = Experiment::load(config)?;
    let phi = load_phi(&exp, phi_path)?;
    let dir = out_dir(&exp, out)?;
    let input_box = exp.input_box()?;
    let w = exp.disturbance(&phi, seed)?;
    let steps = exp.config.simulation.steps;

    let (bank, fallback) = match compensators {
        Some(cdir) => {
            let mut bank = CompensatorBank::empty(exp.sys.n());
            let mut missing = Vec::new();
            for i in 0..exp.sys.n() {
                let p = compensator_path(cdir, i);
                if p.is_file() {
                    bank.insert(Compensator {
                        phi_bar: load_phi(&exp, &p)?,
                        saturated_node: i,
                    });
                } else {
                    missing.push(i);
                }
            }
            (bank, missing)
        }
        None => CompensatorBank::synthesize_all(&exp.sys, &exp.support, &synthesis_options(&exp))?,
    };
    if !fallback.is_empty() {
        log::warn!("nodes {fallback:?} have no compensator and run the naive realization");
    }

    let naive = run_naive_saturated(&exp.sys, &phi, input_box.as_ref(), &w, steps);
    let comp = run_compensated(&exp.sys, &phi, &bank, input_box.as_ref(), &w, steps)?;
    let from = naive.last_saturation().max(comp.last_saturation()).map_or(0, |t| t + 1);
    let (a, b) = (naive.energy_from(from), comp.energy_from(from));
    let ratio = if a == 0.0 && b == 0.0 { 1.0 } else { b / a };

    let fallback_note = if fallback.is_empty() {
        "none".to_string()
    } else {
        format!("{fallback:?}")
    };
    let write = |name: &str, label: &str, run: &SaturatedRun| {
        write_csv(
            &dir.join(name),
            &[
                ("command", "simulate".into()),
                ("loop", label.into()),
                ("steps", steps.to_string()),
                ("naive_fallback_nodes", fallback_note.clone()),
            ],
            |out| run.write_csv(out),
        )
    };
    write("naive.csv", "naive", &naive)?;
    write("compensated.csv", "compensated", &comp)?;
    let summary = SimulateSummary {
        steps,
        naive_saturation_steps: naive.saturated.iter().filter(|s| s.iter().any(|&b| b)).count(),
        compensated_saturation_steps: comp.saturated.iter().filter(|s| s.iter().any(|&b| b)).count(),
        energy_from: from,
        naive_energy: a,
        compensated_energy: b,
        energy_ratio: ratio,
        fallback_nodes: fallback,
    };
    write_json(&dir.join("simulate.json"), &summary)?;
    println!("energy ratio compensated/naive {ratio} (from step {from}: {b} vs {a})");
    Ok(())
}

pub fn chain_gen(n: usize, alpha: f64, rho: f64, out: &Path) -> Result<(), Failure> {
    let sys = make_chain_system(n, alpha, rho).map_err(|e| Failure::Config(e.to_string()))?;
    ensure_dir(out)?;
    let path = out.join("system.json");
    write_json(&path, &sys)?;
    println!("{}", path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use sls_core::synthesis::certified_bounds;

    #[test]
    fn certified_bounds_are_exported_consistently() {
        // certificate JSON round-trips bit for bit
        let sys = make_chain_system(3, 0.4, 1.0).unwrap();
        let spec = sls_core::RobustSpec::from_box(&[1.0; 3], &[3.0; 3], &[4.0; 3], 2).unwrap();
        let support = sls_core::lti::locality_support(&sys, 1, 2);
        let r = synthesize_centralized(&sys, &spec, &support, &SynthesisOptions::default()).unwrap();
        let text = sls_core::json::to_json(&r.cert).unwrap();
        let back: sls_core::DualCertificate = sls_core::json::from_json(&text).unwrap();
        assert_eq!(back, r.cert);
        assert_eq!(certified_bounds(&back, &spec), certified_bounds(&r.cert, &spec));
    }
}
