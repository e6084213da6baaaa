//! `apsm` command-line front end.
//!
//! Exit codes: 0 on success, 2 on usage or configuration errors, 1 on runtime
//! errors and failed validation suites. Errors are printed as one line on stderr.

mod args;

use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use serde_json::json;

use apsm::detectors::{detect, DetectorKind};
use apsm::engine::{apsm_run, diagnose};
use apsm::cost::QuadraticResidualCost;
use apsm::mimo::symbol_errors;
use apsm::sim::{run_ser_vs_iter, run_ser_vs_snr, Execution, Format};
use apsm::validate::{
    attracting_suite, convergence_runs, feasible_fraction, prox_oracle_suite, quasi_fejer_suite,
    RunSetup, SuiteReport,
};
use apsm::{g17, Error, RealVector, Result};

use args::{Cli, Command, DetectArgs, DiagnoseArgs, SweepArgs, ValidateArgs};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("apsm: usage error: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            let kind = if e.is_config() { "config error" } else { "error" };
            eprintln!("apsm: {kind}: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::SerIter(a) => sweep(&a, true),
        Command::SerSnr(a) => sweep(&a, false),
        Command::Detect(a) => detect_cmd(&a),
        Command::Diagnose(a) => diagnose_cmd(&a),
        Command::Validate(a) => validate_cmd(&a),
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn sweep(a: &SweepArgs, per_iteration: bool) -> Result<ExitCode> {
    let cfg = a.exp.resolve()?;
    let exec = a.execution()?;
    let table = if per_iteration {
        run_ser_vs_iter(&cfg, exec)?
    } else {
        run_ser_vs_snr(&cfg, exec)?
    };
    let text = table.render(Format::from(a.format), a.std_error)?;
    write_output(a.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn detect_cmd(a: &DetectArgs) -> Result<ExitCode> {
    let cfg = a.exp.resolve()?;
    let c = cfg.constellation();
    let inst = cfg.instance(a.trial)?;

    if a.dump_trace {
        let kind = cfg
            .detectors
            .iter()
            .copied()
            .find(|d| d.is_iterative())
            .ok_or_else(|| Error::config("--dump-trace needs an APSM detector"))?;
        let acfg = cfg.apsm_config(kind).expect("iterative detector");
        let det = detect(kind, &inst, &c, &acfg, &cfg.box_solver)?;
        let trace = det.trace.expect("APSM detection carries a trace");
        write_output(a.out.as_deref(), &trace.to_csv_string())?;
        return Ok(ExitCode::SUCCESS);
    }

    let cost = QuadraticResidualCost::new(inst.h.clone(), inst.y.clone())?;
    let mut rows = Vec::new();
    for &kind in &cfg.detectors {
        let acfg = cfg
            .apsm_config(kind)
            .unwrap_or_else(|| apsm::cost::ApsmConfig::for_variant(apsm::cost::Variant::Plain));
        let det = detect(kind, &inst, &c, &acfg, &cfg.box_solver)?;
        let errors = symbol_errors(&det.x_hat, &inst.s, &c)?;
        let residual = cost.residual_sq_direct(&det.x_hat)?;
        rows.push((kind, errors, residual, det.x_hat));
    }

    let text = match Format::from(a.format) {
        Format::Csv => {
            let mut out = String::from("detector,symbol_errors,symbols,residual_sq\n");
            for (kind, errors, residual, _) in &rows {
                out.push_str(&format!("{kind},{errors},{},{}\n", cfg.k, g17(*residual)));
            }
            out
        }
        Format::Json => {
            let items: Vec<_> = rows
                .iter()
                .map(|(kind, errors, residual, x)| {
                    json!({
                        "detector": kind,
                        "symbol_errors": errors,
                        "symbols": cfg.k,
                        "residual_sq": residual,
                        "x_hat": x.as_slice(),
                    })
                })
                .collect();
            let doc = json!({ "seed": inst.seed, "sigma2": inst.sigma2, "detections": items });
            serde_json::to_string_pretty(&doc)? + "\n"
        }
    };
    write_output(a.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn diagnose_cmd(a: &DiagnoseArgs) -> Result<ExitCode> {
    let cfg = a.exp.resolve()?;
    let c = cfg.constellation();
    let inst = cfg.instance(a.trial)?;
    let cost = QuadraticResidualCost::new(inst.h.clone(), inst.y.clone())?;
    let kinds: Vec<DetectorKind> = cfg.detectors.iter().copied().filter(|d| d.is_iterative()).collect();
    if kinds.is_empty() {
        return Err(Error::config("diagnose needs at least one APSM detector"));
    }
    let mut reports = Vec::new();
    for kind in kinds {
        let mut acfg = cfg.apsm_config(kind).expect("iterative detector");
        acfg.record_iterates = true;
        let out = apsm_run(&cost, &acfg, &c, &RealVector::zeros(cost.dim()))?;
        let report = diagnose(&out.trace, &inst.s, &cost, &acfg)?;
        reports.push(json!({
            "detector": kind,
            "final_theta": out.trace.final_theta(),
            "symbol_errors": symbol_errors(&out.x, &inst.s, &c)?,
            "report": report,
        }));
    }
    let doc = json!({
        "trial": a.trial,
        "seed": inst.seed,
        "snr_db": cfg.snr_db[0],
        "sigma2": inst.sigma2,
        "runs": reports,
    });
    write_output(a.out.as_deref(), &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    Ok(ExitCode::SUCCESS)
}

fn suite_line(r: &SuiteReport) -> String {
    format!(
        "{}: checked={} passed={} failed={} max_excess={} -> {}",
        r.name,
        r.checked,
        r.passed(),
        r.failed,
        g17(r.max_excess),
        if r.all_passed() { "PASS" } else { "FAIL" }
    )
}

fn validate_cmd(a: &ValidateArgs) -> Result<ExitCode> {
    if !(a.mu > 0.0 && a.mu < 2.0) {
        return Err(Error::config(format!("--mu must lie in (0, 2), got {}", a.mu)));
    }
    if a.trials == 0 || a.checks == 0 || a.prox_draws == 0 || a.iters == 0 {
        return Err(Error::config("suite sizes must be at least 1"));
    }
    if a.workers == Some(0) {
        return Err(Error::config("--workers must be at least 1"));
    }
    let exec = Execution::from_workers(a.workers);
    let setup = RunSetup {
        trials: a.trials,
        max_iters: a.iters,
        master_seed: a.seed,
        ..RunSetup::default()
    };
    let runs = convergence_runs(&setup, exec)?;
    let suites = [
        quasi_fejer_suite(&runs),
        attracting_suite(a.checks, a.mu, a.seed)?,
        prox_oracle_suite(a.prox_draws, a.seed, exec)?,
    ];
    let mut stdout = io::stdout().lock();
    let mut emit = |line: String| writeln!(stdout, "{line}").map_err(|e| Error::io("<stdout>", e));
    for v in &setup.variants {
        let (hits, total) = feasible_fraction(&runs, *v);
        emit(format!("feasibility[{v}]: {hits}/{total} runs end with theta = 0"))?;
    }
    for s in &suites {
        emit(suite_line(s))?;
    }
    let all = suites.iter().all(SuiteReport::all_passed);
    emit(format!("validate: {}", if all { "PASS" } else { "FAIL" }))?;
    Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
