//! Scenario runner: responses, oracles, CSV artifacts and the check report.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Scenario;
use crate::diagnostics::{
    self, contraction_envelope, envelope_constant, kernel_bound_of, kernel_ck_norm, mixing_rate, unit_uniform,
};
use crate::error::{Error, Result};
use crate::fourier::{self, convolve_gaussian, Norm, SpectralFunction};
use crate::maps::check_expansion;
use crate::oracle::{
    self, compare_densities, finite_difference_response, monte_carlo_stationary, ulam_matrix, ulam_stationary,
    BinnedDensity, Comparison, TrajectoryEstimate, HISTOGRAM_BINS,
};
use crate::par;
use crate::response::{
    neumann_partial_sum, stationary_density, Discretization, ResponseReport, ResponseSolver,
};
use crate::transfer::{apply, build_transfer_with, OperatorMatrix};

pub const MASS_TEST_COUNT: usize = 50;
pub const RESOLVENT_TEST_COUNT: usize = 20;
pub const REGULARIZATION_TEST_COUNT: usize = 20;
pub const REGULARIZATION_MAX_ORDER: u32 = 4;
/// Predicted Neumann tail required before comparing against the direct solve.
pub const NEUMANN_TAIL: f64 = 1e-9;
pub const NEUMANN_MAX_TERMS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: String,
    pub threshold: String,
    pub verdict: Verdict,
}

impl Check {
    fn bound(name: &str, measured: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            measured: sci(measured),
            threshold: format!("< {}", sci(limit)),
            verdict: if measured < limit { Verdict::Pass } else { Verdict::Fail },
        }
    }

    fn range(name: &str, measured: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            measured: format!("{measured:.6}"),
            threshold: format!("in [{lo}, {hi}]"),
            verdict: if (lo..=hi).contains(&measured) { Verdict::Pass } else { Verdict::Fail },
        }
    }

    fn at_least(name: &str, measured: f64, lo: f64) -> Self {
        Self {
            name: name.into(),
            measured: format!("{measured:.6}"),
            threshold: format!(">= {lo}"),
            verdict: if measured >= lo { Verdict::Pass } else { Verdict::Fail },
        }
    }

    fn not_applicable(name: &str, why: &str) -> Self {
        Self {
            name: name.into(),
            measured: "-".into(),
            threshold: "-".into(),
            verdict: Verdict::NotApplicable(why.into()),
        }
    }

    fn failed(name: &str, err: &Error) -> Self {
        Self {
            name: name.into(),
            measured: format!("error: {err}"),
            threshold: "-".into(),
            verdict: Verdict::Fail,
        }
    }
}

fn sci(x: f64) -> String {
    format!("{x:.6e}")
}

/// 17 significant digits.
fn csv_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Everything `run_scenario` measured.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub report: Option<ResponseReport>,
    pub comparisons: Vec<Comparison>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.verdict != Verdict::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

/// Maximum over the fine grid of `|f - g|`.
fn max_error(f: &SpectralFunction, g: &SpectralFunction) -> f64 {
    fourier::norm(&(f - g), Norm::Ck(0))
}

struct Artifacts {
    perturbed: Vec<(f64, SpectralFunction)>,
    mixing: Option<(Vec<f64>, Option<Vec<f64>>)>,
    ly: Vec<(u32, f64, f64)>,
    remainders: Vec<(f64, f64, f64)>,
    histograms: Vec<(String, BinnedDensity, Option<u64>)>,
}

/// Runs every check of a scenario and writes its artifacts into `out_dir`.
pub fn run_scenario(s: &Scenario, out_dir: &Path) -> Result<RunOutcome> {
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    let mut art = Artifacts {
        perturbed: Vec::new(),
        mixing: None,
        ly: Vec::new(),
        remainders: Vec::new(),
        histograms: Vec::new(),
    };
    let fam = s.family();
    let num = &s.numerics;
    let tol = &num.tol;
    let disc = Discretization::new(num.order, num.quadrature);

    let solver_and_report = ResponseSolver::new(fam.clone(), disc).and_then(|solver| {
        let rep = solver.respond()?;
        Ok((solver, rep))
    });
    let (solver, rep) = match solver_and_report {
        Ok(v) => v,
        Err(e) => {
            checks.push(Check::failed("stationary_and_response", &e));
            let outcome = RunOutcome {
                checks,
                notes,
                report: None,
                comparisons: Vec::new(),
            };
            write_report(s, &outcome, out_dir)?;
            return Ok(outcome);
        }
    };
    let h0 = rep.h0.h.clone();
    notes.extend(rep.diagnostics.unchecked.iter().map(|u| format!("unchecked: {u}")));
    notes.push(format!("stationary solve method: {:?}", rep.h0.method));

    // operators at +-delta, each assembled and solved independently
    let signed: Vec<f64> = num.deltas.iter().flat_map(|&d| [d, -d]).collect();
    let sweep = par::map_slice(par::Exec::default(), &signed, |&d| -> Result<(f64, OperatorMatrix, SpectralFunction)> {
        let op = build_transfer_with(par::Exec::Sequential, &fam, d, num.order, num.quadrature)?;
        let h = stationary_density(&op)?.h;
        Ok((d, op, h))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>();
    let sweep = match sweep {
        Ok(v) => Some(v),
        Err(e) => {
            checks.push(Check::failed("perturbed_stationary_sweep", &e));
            None
        }
    };

    // Markov conservation
    let mut defect = solver.l0().markov_defect().max(solver.base().markov_defect());
    if let Some(sw) = &sweep {
        defect = sw.iter().map(|(_, op, _)| op.markov_defect()).fold(defect, f64::max);
    }
    checks.push(Check::bound("markov_defect", defect, tol.markov));
    let mut rng = ChaCha8Rng::seed_from_u64(num.seed);
    let mass = diagnostics::test_set(num.order, MASS_TEST_COUNT, num.seed ^ 0x6d61_7373)
        .iter()
        .map(|g| {
            let f = g + &SpectralFunction::constant(num.order, 4.0 * unit_uniform(&mut rng) - 2.0);
            apply(solver.l0(), &f).map(|lf| (lf.mean() - f.mean()).abs())
        })
        .collect::<Result<Vec<_>>>();
    match mass {
        Ok(v) => checks.push(Check::bound("mass_conservation", v.into_iter().fold(0.0, f64::max), tol.markov)),
        Err(e) => checks.push(Check::failed("mass_conservation", &e)),
    }

    checks.push(Check::bound("stationary_residual", rep.h0.residual, tol.residual));
    checks.push(Check::bound("linear_resolvent_residual", rep.diagnostics.linear_resolvent_residual, tol.residual));
    checks.push(Check::bound(
        "quadratic_resolvent_residual",
        rep.diagnostics.quadratic_resolvent_residual,
        tol.residual,
    ));

    // resolvent identity on random mean-zero data
    let gs = diagnostics::test_set(num.order, RESOLVENT_TEST_COUNT, num.seed ^ 0x7265_736f);
    let solved = gs.iter().map(|g| solver.resolvent().solve(g)).collect::<Result<Vec<_>>>();
    match &solved {
        Ok(v) => checks.push(Check::bound(
            "resolvent_identity",
            v.iter().map(|r| r.residual).fold(0.0, f64::max),
            tol.residual,
        )),
        Err(e) => checks.push(Check::failed("resolvent_identity", e)),
    }

    // convergence to equilibrium
    let mixing = mixing_rate(solver.l0(), num.mixing_steps.max(40), num.mixing_strong, num.mixing_weak);
    match (&mixing, &solved) {
        (Ok(mix), Ok(v)) => {
            let l1 = mixing_rate(solver.l0(), num.mixing_steps.max(40), Norm::L1, Norm::L1);
            let predicted = l1
                .ok()
                .and_then(|m| m.terms_for_tail(fourier::norm(&gs[0], Norm::L1), NEUMANN_TAIL, NEUMANN_MAX_TERMS));
            match predicted {
                Some(n) => match neumann_partial_sum(solver.l0(), &gs[0], n + 1) {
                    Ok(ns) => {
                        let dev = fourier::norm(&(&ns.value - &v[0].value), Norm::L1);
                        let mut c = Check::bound("neumann_agreement", dev, tol.neumann);
                        c.measured = format!("{} ({} terms)", c.measured, n + 1);
                        checks.push(c);
                    }
                    Err(e) => checks.push(Check::failed("neumann_agreement", &e)),
                },
                None => checks.push(Check {
                    name: "neumann_agreement".into(),
                    measured: "measured mixing does not predict a tail below 1e-9".into(),
                    threshold: format!("< {}", sci(tol.neumann)),
                    verdict: Verdict::Fail,
                }),
            }
            let rates = mix.rates[..num.mixing_steps].to_vec();
            match &s.noise {
                Some(kernel) => {
                    let l = kernel_bound_of(kernel);
                    if let Some(w) = &l.warning {
                        notes.push(w.clone());
                    }
                    checks.push(Check {
                        name: "kernel_lower_bound".into(),
                        measured: sci(l.l),
                        threshold: "> 0".into(),
                        verdict: if l.l > 0.0 { Verdict::Pass } else { Verdict::Fail },
                    });
                    let c = envelope_constant(kernel, num.mixing_weak);
                    let env = contraction_envelope(c, l.l, num.mixing_steps);
                    let worst = rates.iter().zip(&env).map(|(a, e)| a / e).fold(0.0, f64::max);
                    checks.push(Check {
                        name: "mixing_envelope".into(),
                        measured: format!("max a_n / envelope = {}", sci(worst)),
                        threshold: format!("<= 1 for n <= {}", num.mixing_steps),
                        verdict: if worst <= 1.0 { Verdict::Pass } else { Verdict::Fail },
                    });
                    art.mixing = Some((rates, Some(env)));
                }
                None => {
                    checks.push(Check::not_applicable("kernel_lower_bound", "deterministic scenario"));
                    checks.push(Check::not_applicable(
                        "mixing_envelope",
                        "deterministic scenario; rates written to diagnostics.csv",
                    ));
                    art.mixing = Some((rates, None));
                }
            }
        }
        (Err(e), _) => checks.push(Check::failed("neumann_agreement", e)),
        (_, Err(e)) => checks.push(Check::failed("neumann_agreement", e)),
    }

    // regularization inequality
    match &s.noise {
        Some(kernel) => {
            let fs = diagnostics::test_set(num.order, REGULARIZATION_TEST_COUNT, num.seed ^ 0x7265_6775);
            let mut worst: f64 = 0.0;
            for (i, g) in fs.iter().enumerate() {
                let f = g + &SpectralFunction::constant(num.order, 0.5 * i as f64);
                let conv = convolve_gaussian(&f, kernel);
                let l1 = fourier::norm(&f, Norm::L1);
                for j in 0..=REGULARIZATION_MAX_ORDER {
                    worst = worst.max(fourier::norm(&conv, Norm::Ck(j)) / (kernel_ck_norm(kernel, j) * l1));
                }
            }
            checks.push(Check {
                name: "regularization_inequality".into(),
                measured: format!("max ratio {worst:.12}"),
                threshold: format!("<= 1 + {}", sci(tol.regularization)),
                verdict: if worst <= 1.0 + tol.regularization { Verdict::Pass } else { Verdict::Fail },
            });
            checks.push(Check::not_applicable("expansion", "noisy scenario; only non-singularity is required"));
        }
        None => {
            checks.push(Check::not_applicable("regularization_inequality", "deterministic scenario"));
            match check_expansion(&s.map) {
                Ok(alpha) => checks.push(Check::bound("expansion", alpha, 1.0)),
                Err(e) => checks.push(Check::failed("expansion", &e)),
            }
            for k in 1..=num.ly_k {
                match diagnostics::lasota_yorke_constants(&fam, 0.0, k, num.ly_steps, disc) {
                    Ok(ly) => art.ly.push((k, ly.alpha_k, ly.b_k)),
                    Err(e) => notes.push(format!("Lasota-Yorke k={k}: {e}")),
                }
            }
        }
    }

    // closed forms
    match s.doubling_sin_amplitude() {
        Some(b) => {
            let n = num.order;
            let hdot = SpectralFunction::cos_mode(n, 1, -2.0 * PI * b);
            let qr = (4.0 * PI * PI * b * b)
                * &(&SpectralFunction::cos_mode(n, 2, 1.0) + &SpectralFunction::cos_mode(n, 1, 1.0));
            checks.push(Check::bound("golden_linear", max_error(&rep.h_dot, &hdot), tol.golden_linear));
            checks.push(Check::bound("golden_quadratic", max_error(&rep.qr_limit, &qr), tol.golden_quadratic));
            checks.push(Check::bound(
                "golden_second_derivative",
                max_error(&rep.h_ddot, &qr.scale(2.0)),
                tol.golden_second,
            ));
        }
        None => {
            for name in ["golden_linear", "golden_quadratic", "golden_second_derivative"] {
                checks.push(Check::not_applicable(name, "no closed form for this scenario"));
            }
        }
    }

    // Taylor remainders and finite differences
    if let Some(sw) = &sweep {
        let pos: Vec<(f64, SpectralFunction)> =
            sw.iter().filter(|(d, _, _)| *d > 0.0).map(|(d, _, h)| (*d, h.clone())).collect();
        match crate::response::taylor_remainders(&h0, &rep.h_dot, &rep.qr_limit, &pos, num.weak_norm) {
            Ok(r) => {
                art.remainders = r.deltas.iter().zip(&r.first).zip(&r.second).map(|((d, a), b)| (*d, *a, *b)).collect();
                checks.push(Check::range(
                    &format!("slope_first_order_{}", num.weak_norm.label()),
                    r.slope_first.slope,
                    tol.slope_first_min,
                    tol.slope_first_max,
                ));
                checks.push(Check::at_least(
                    &format!("slope_second_order_{}", num.weak_norm.label()),
                    r.slope_second.slope,
                    tol.slope_second_min,
                ));
            }
            Err(e) => checks.push(Check::failed("taylor_remainders", &e)),
        }
        let lookup = |d: f64| -> Result<SpectralFunction> {
            if d == 0.0 {
                return Ok(h0.clone());
            }
            sw.iter()
                .find(|(x, _, _)| *x == d)
                .map(|(_, _, h)| h.clone())
                .ok_or_else(|| Error::InvalidInput(format!("no stationary density at delta {d}")))
        };
        match finite_difference_response(lookup, &num.deltas, Norm::L1) {
            Ok(fd) => {
                checks.push(Check::bound(
                    "fd_linear_response_L1",
                    fourier::norm(&(&fd.h_dot - &rep.h_dot), Norm::L1),
                    tol.fd_linear,
                ));
                checks.push(Check::bound(
                    "fd_second_derivative_L1",
                    fourier::norm(&(&fd.h_ddot - &rep.h_ddot), Norm::L1),
                    tol.fd_second,
                ));
                notes.extend(fd.warnings.iter().map(|w| format!("finite differences: {w}")));
            }
            Err(e) => checks.push(Check::failed("fd_linear_response_L1", &e)),
        }
        art.perturbed = pos;
    }

    // Ulam and Monte Carlo
    let spectral512 = BinnedDensity::from_spectral(&h0, HISTOGRAM_BINS);
    let mut densities: Vec<(String, BinnedDensity)> = vec![("spectral".into(), spectral512.clone())];
    art.histograms.push(("histogram_spectral.csv".into(), spectral512, None));
    let mut mc_bound = f64::INFINITY;
    if num.ulam_bins > 0 {
        match ulam_matrix(&fam, 0.0, num.ulam_bins).and_then(|u| ulam_stationary(&u)) {
            Ok(st) => {
                let spectral = BinnedDensity::from_spectral(&h0, num.ulam_bins);
                let l1 = spectral.l1_distance(&st.density)?;
                let mut c = Check::bound(&format!("ulam_l1_{}_bins", num.ulam_bins), l1, tol.ulam);
                c.measured = format!("{} ({} iterations)", c.measured, st.iterations);
                checks.push(c);
                densities.push(("ulam".into(), st.density.coarsen(HISTOGRAM_BINS)?));
                art.histograms.push(("histogram_ulam.csv".into(), st.density, None));
            }
            Err(e) => checks.push(Check::failed("ulam_l1", &e)),
        }
    } else {
        checks.push(Check::not_applicable("ulam_l1", "ulam_bins = 0"));
    }
    if s.noise.is_none() {
        checks.push(Check::not_applicable(
            "monte_carlo_l1",
            "deterministic scenario; floating-point orbits of expanding maps do not sample h0",
        ));
    } else if num.mc_steps == 0 {
        checks.push(Check::not_applicable("monte_carlo_l1", "mc_steps = 0"));
    } else {
        match monte_carlo_stationary(&fam, 0.0, num.mc_steps, num.mc_burn_in, num.seed) {
            Ok(TrajectoryEstimate {
                histogram,
                stderr_proxy,
                warning,
                seed,
                ..
            }) => {
                mc_bound = tol.mc_sigmas * stderr_proxy * (HISTOGRAM_BINS as f64).sqrt();
                let l1 = densities[0].1.l1_distance(&histogram)?;
                checks.push(Check::bound("monte_carlo_l1", l1, mc_bound));
                if let Some(w) = warning {
                    notes.push(w);
                }
                densities.push(("monte_carlo".into(), histogram.clone()));
                art.histograms.push(("histogram_monte_carlo.csv".into(), histogram, Some(seed)));
            }
            Err(e) => checks.push(Check::failed("monte_carlo_l1", &e)),
        }
    }
    let comparisons = compare_report(&densities, tol.ulam, mc_bound)?;

    let outcome = RunOutcome {
        checks,
        notes,
        report: Some(rep),
        comparisons,
    };
    write_artifacts(s, &outcome, &art, out_dir)?;
    write_report(s, &outcome, out_dir)?;
    Ok(outcome)
}

/// Pairwise distances of the spectral, Ulam and Monte Carlo densities on 512
/// bins. Pairs with the Monte Carlo histogram use the statistical bound.
pub fn compare_report(densities: &[(String, BinnedDensity)], ulam_tol: f64, mc_bound: f64) -> Result<Vec<Comparison>> {
    let items: Vec<(&str, &BinnedDensity)> = densities.iter().map(|(n, d)| (n.as_str(), d)).collect();
    let tols = [
        (("spectral", "ulam"), ulam_tol),
        (("spectral", "monte_carlo"), mc_bound),
        (("ulam", "monte_carlo"), mc_bound),
    ];
    compare_densities(&items, &tols, HISTOGRAM_BINS)
}

fn io_err(path: &Path, e: io::Error) -> Error {
    Error::InvalidInput(format!("cannot write {}: {e}", path.display()))
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| io_err(&path, e))
}

fn header(s: &Scenario) -> String {
    format!("# scenario={} seed={}\n", s.name, s.numerics.seed)
}

fn sampled_csv(s: &Scenario, f: &SpectralFunction) -> Result<String> {
    let n = s.output.grid;
    let mut out = header(s);
    out.push_str("x,value\n");
    for i in 0..n {
        let x = i as f64 / n as f64;
        writeln!(out, "{},{}", csv_num(x), csv_num(f.eval(x))).expect("string write");
    }
    Ok(out)
}

fn write_artifacts(s: &Scenario, o: &RunOutcome, art: &Artifacts, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let Some(rep) = &o.report else {
        return Ok(());
    };
    write_file(dir, "h0.csv", &sampled_csv(s, &rep.h0.h)?)?;
    write_file(dir, "hdot.csv", &sampled_csv(s, &rep.h_dot)?)?;
    write_file(dir, "qr.csv", &sampled_csv(s, &rep.qr_limit)?)?;

    let mut rem = header(s);
    rem.push_str("delta,first_order,second_order\n");
    for (d, a, b) in &art.remainders {
        writeln!(rem, "{},{},{}", csv_num(*d), csv_num(*a), csv_num(*b)).expect("string write");
    }
    write_file(dir, "remainders.csv", &rem)?;

    let mut diag = header(s);
    diag.push_str("n,a_n,envelope\n");
    if let Some((rates, env)) = &art.mixing {
        for (i, a) in rates.iter().enumerate() {
            let e = env.as_ref().map_or(String::new(), |e| csv_num(e[i]));
            writeln!(diag, "{},{},{}", i + 1, csv_num(*a), e).expect("string write");
        }
    }
    write_file(dir, "diagnostics.csv", &diag)?;

    if s.noise.is_none() {
        let mut ly = header(s);
        ly.push_str("k,alpha_k,B_k\n");
        for (k, a, b) in &art.ly {
            writeln!(ly, "{k},{},{}", csv_num(*a), csv_num(*b)).expect("string write");
        }
        write_file(dir, "lasota_yorke.csv", &ly)?;
    }

    let mut sweep = header(s);
    sweep.push_str("delta,x,value\n");
    let n = s.output.grid;
    for (d, h) in &art.perturbed {
        for i in 0..n {
            let x = i as f64 / n as f64;
            writeln!(sweep, "{},{},{}", csv_num(*d), csv_num(x), csv_num(h.eval(x))).expect("string write");
        }
    }
    write_file(dir, "perturbed.csv", &sweep)?;

    for (name, h, seed) in &art.histograms {
        let path = dir.join(name);
        let mut buf = Vec::new();
        writeln!(buf, "# scenario={}", s.name).map_err(|e| io_err(&path, e))?;
        oracle::write_histogram_csv(&mut buf, h, seed.or(Some(s.numerics.seed))).map_err(|e| io_err(&path, e))?;
        fs::write(&path, buf).map_err(|e| io_err(&path, e))?;
    }

    let mut cmp = header(s);
    cmp.push_str("pair,l1,max,l1_tolerance,pass\n");
    for c in &o.comparisons {
        writeln!(cmp, "{},{},{},{},{}", c.pair, csv_num(c.l1), csv_num(c.max), csv_num(c.l1_tolerance), c.pass)
            .expect("string write");
    }
    write_file(dir, "comparison.csv", &cmp)?;
    Ok(())
}

/// Human-readable table of every check.
pub fn render_report(s: &Scenario, o: &RunOutcome) -> String {
    let mut out = String::new();
    let num = &s.numerics;
    let noise = s.noise.map_or("none".to_string(), |k| format!("xi = {}", k.xi()));
    let _ = writeln!(out, "scenario {}", s.name);
    let _ = writeln!(out, "map {}, noise {noise}", s.kind);
    let _ = writeln!(
        out,
        "order {}, quadrature {}, weak norm {}, seed {}",
        num.order,
        num.quadrature,
        num.weak_norm.label(),
        num.seed
    );
    let deltas: Vec<String> = num.deltas.iter().map(|d| format!("{d:e}")).collect();
    let _ = writeln!(out, "deltas +-{{{}}}", deltas.join(", "));
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<34} {:<44} {:<26} verdict", "check", "measured", "threshold");
    for c in &o.checks {
        let verdict = match &c.verdict {
            Verdict::Pass => "PASS".to_string(),
            Verdict::Fail => "FAIL".to_string(),
            Verdict::NotApplicable(why) => format!("NOT APPLICABLE ({why})"),
        };
        let _ = writeln!(out, "{:<34} {:<44} {:<26} {verdict}", c.name, c.measured, c.threshold);
    }
    if !o.comparisons.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<28} {:<16} {:<16} {:<16} pass", "density pair (512 bins)", "L1", "max", "L1 tolerance");
        for c in &o.comparisons {
            let _ = writeln!(
                out,
                "{:<28} {:<16} {:<16} {:<16} {}",
                c.pair,
                sci(c.l1),
                sci(c.max),
                sci(c.l1_tolerance),
                c.pass
            );
        }
    }
    if !o.notes.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "notes");
        for n in &o.notes {
            let _ = writeln!(out, "  {n}");
        }
    }
    let count = |f: fn(&Verdict) -> bool| o.checks.iter().filter(|c| f(&c.verdict)).count();
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "result {}: {} passed, {} failed, {} not applicable",
        if o.passed() { "PASS" } else { "FAIL" },
        count(|v| *v == Verdict::Pass),
        count(|v| *v == Verdict::Fail),
        count(|v| matches!(v, Verdict::NotApplicable(_))),
    );
    out
}

fn write_report(s: &Scenario, o: &RunOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_file(dir, "report.txt", &render_report(s, o))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_densities_compare_to_zero() {
        let d = BinnedDensity::new(vec![1.0 / 512.0; 512]).unwrap();
        let rows = compare_report(
            &[("spectral".into(), d.clone()), ("ulam".into(), d.clone()), ("monte_carlo".into(), d)],
            2e-3,
            0.1,
        )
        .unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.l1 == 0.0 && r.max == 0.0 && r.pass));
    }

    #[test]
    fn small_doubling_run() {
        let text = "name = small\n[map]\nkind = doubling\n[perturbation]\ns1_sin = 1\n[numerics]\norder = 16\nulam_bins = 512\n";
        let s = Scenario::parse(text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let o = run_scenario(&s, dir.path()).unwrap();
        let report = fs::read_to_string(dir.path().join("report.txt")).unwrap();
        assert!(o.passed(), "{report}");
        assert!(report.contains("NOT APPLICABLE"));
        for f in ["h0.csv", "hdot.csv", "qr.csv", "remainders.csv", "diagnostics.csv", "lasota_yorke.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let h0 = fs::read_to_string(dir.path().join("h0.csv")).unwrap();
        assert_eq!(h0.lines().count(), 2 + 1024);
        let (x, v) = h0.lines().nth(2).unwrap().split_once(',').unwrap();
        assert_eq!(x, "0.0000000000000000e0");
        assert!((v.parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
    }
}
