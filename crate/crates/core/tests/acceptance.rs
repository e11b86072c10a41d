//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use circle_response::diagnostics::{
    contraction_envelope, envelope_constant, kernel_ck_norm, kernel_lower_bound, mixing_rate, taylor_slope, test_set,
};
use circle_response::fourier::{convolve_gaussian, norm};
use circle_response::oracle::{
    finite_difference_response, monte_carlo_stationary, ulam_matrix, ulam_stationary, BinnedDensity, HISTOGRAM_BINS,
};
use circle_response::response::{neumann_partial_sum, Discretization, ResponseSolver};
use circle_response::transfer::{apply, build_transfer};
use circle_response::{
    DiffeoFamily, MapFamily, NoiseKernel, Norm, OperatorMatrix, Scenario, SpectralFunction, TrigMap, TrigPoly,
};

struct Line {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn shipped(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    Scenario::parse(&std::fs::read_to_string(path).expect("shipped config")).expect("valid config")
}

fn doubling_family() -> MapFamily {
    MapFamily::new(
        TrigMap::doubling(),
        DiffeoFamily::first_order(TrigPoly::sin_mode(1, 1.0), 0.05).unwrap(),
        None,
    )
}

fn sup(f: &SpectralFunction, g: &SpectralFunction) -> f64 {
    norm(&(f - g), Norm::Ck(0))
}

fn secs(d: Duration) -> String {
    format!("{:.3}s", d.as_secs_f64())
}

const SPEC_DELTAS: [f64; 4] = [1e-2, 5e-3, 2.5e-3, 1.25e-3];

fn criterion_1() -> Line {
    let t = Instant::now();
    let solver = ResponseSolver::new(doubling_family(), Discretization::new(32, 256)).unwrap();
    let rep = solver.respond().unwrap();
    let elapsed = t.elapsed();
    let err = sup(&rep.h_dot, &SpectralFunction::cos_mode(32, 1, -2.0 * PI));
    Line {
        id: 1,
        title: "doubling linear response, N=32 M=256",
        pass: err < 1e-10 && elapsed < Duration::from_secs(1),
        detail: format!("max error {err:.3e} (< 1e-10), runtime {} (< 1s)", secs(elapsed)),
    }
}

fn criterion_2() -> Line {
    let t = Instant::now();
    let solver = ResponseSolver::new(doubling_family(), Discretization::new(32, 256)).unwrap();
    let rep = solver.respond().unwrap();
    let elapsed = t.elapsed();
    let shape = &SpectralFunction::cos_mode(32, 2, 1.0) + &SpectralFunction::cos_mode(32, 1, 1.0);
    let qr = sup(&rep.qr_limit, &shape.scale(4.0 * PI * PI));
    let hdd = sup(&rep.h_ddot, &shape.scale(8.0 * PI * PI));
    Line {
        id: 2,
        title: "doubling quadratic response",
        pass: qr < 1e-8 && hdd < 2e-8 && elapsed < Duration::from_secs(2),
        detail: format!(
            "qr_limit error {qr:.3e} (< 1e-8), h_ddot error {hdd:.3e} (< 2e-8), runtime {} (< 2s)",
            secs(elapsed)
        ),
    }
}

struct SlopeRun {
    name: String,
    first: f64,
    second: f64,
    elapsed: Duration,
    grid_ok: bool,
}

fn slopes(name: &str) -> SlopeRun {
    let s = shipped(name);
    let t = Instant::now();
    let solver = ResponseSolver::new(s.family(), Discretization::new(s.numerics.order, s.numerics.quadrature)).unwrap();
    let rep = solver.respond().unwrap();
    let r = solver.remainders(&rep, &s.numerics.deltas, s.numerics.weak_norm).unwrap();
    SlopeRun {
        name: format!("{} ({})", s.name, s.numerics.weak_norm.label()),
        first: r.slope_first.slope,
        second: r.slope_second.slope,
        elapsed: t.elapsed(),
        grid_ok: s.numerics.deltas == SPEC_DELTAS,
    }
}

fn criteria_3_4() -> (Line, Line) {
    let runs = [slopes("doubling.cfg"), slopes("arnold.cfg")];
    let fast = runs.iter().all(|r| r.elapsed < Duration::from_secs(30) && r.grid_ok);
    let pass3 = fast && runs.iter().all(|r| (1.9..=2.1).contains(&r.first));
    let pass4 = fast && runs.iter().all(|r| r.second >= 2.7);
    let fmt = |f: &dyn Fn(&SlopeRun) -> f64| {
        runs.iter()
            .map(|r| format!("{} {:.4} in {}", r.name, f(r), secs(r.elapsed)))
            .collect::<Vec<_>>()
            .join(", ")
    };
    (
        Line {
            id: 3,
            title: "first-order remainder slope",
            pass: pass3,
            detail: format!("{} (in [1.9, 2.1], < 30s)", fmt(&|r| r.first)),
        },
        Line {
            id: 4,
            title: "second-order remainder slope",
            pass: pass4,
            detail: format!("{} (>= 2.7, < 30s)", fmt(&|r| r.second)),
        },
    )
}

fn criterion_5() -> Line {
    let s = shipped("arnold.cfg");
    let t = Instant::now();
    let fam = s.family();
    let solver = ResponseSolver::new(fam.clone(), Discretization::new(s.numerics.order, s.numerics.quadrature)).unwrap();
    let h0 = solver.respond().unwrap().h0.h;
    let bins = 4096;
    let ulam = ulam_stationary(&ulam_matrix(&fam, 0.0, bins).unwrap()).unwrap();
    let ulam_l1 = BinnedDensity::from_spectral(&h0, bins).l1_distance(&ulam.density).unwrap();
    let mc = monte_carlo_stationary(&fam, 0.0, 1_000_000, s.numerics.mc_burn_in, s.numerics.seed).unwrap();
    let mc_l1 = BinnedDensity::from_spectral(&h0, HISTOGRAM_BINS).l1_distance(&mc.histogram).unwrap();
    let bound = 5.0 * mc.stderr_proxy * (HISTOGRAM_BINS as f64).sqrt();
    let elapsed = t.elapsed();
    Line {
        id: 5,
        title: "noisy Arnold cross-oracle agreement",
        pass: ulam_l1 < 2e-3 && mc_l1 < bound && elapsed < Duration::from_secs(60),
        detail: format!(
            "Ulam L1 {ulam_l1:.3e} (< 2e-3 at 4096 bins), Monte Carlo L1 {mc_l1:.3e} (< {bound:.3e}, seed {}), runtime {} (< 60s)",
            mc.seed,
            secs(elapsed)
        ),
    }
}

/// `(L0, base, L_{+-delta}...)` of a shipped scenario.
fn operators(s: &Scenario) -> (ResponseSolver, Vec<OperatorMatrix>) {
    let (n, m) = (s.numerics.order, s.numerics.quadrature);
    let solver = ResponseSolver::new(s.family(), Discretization::new(n, m)).unwrap();
    let mut ops = vec![solver.l0().clone(), solver.base().clone()];
    for &d in &s.numerics.deltas {
        for sd in [d, -d] {
            ops.push(build_transfer(solver.family(), sd, n, m).unwrap());
        }
    }
    (solver, ops)
}

fn random_functions(order: usize, count: usize, seed: u64) -> Vec<SpectralFunction> {
    test_set(order, count, seed)
        .into_iter()
        .enumerate()
        .map(|(i, g)| &g + &SpectralFunction::constant(order, 1.0 - 0.07 * i as f64))
        .collect()
}

fn criterion_6() -> Line {
    let mut worst_defect: f64 = 0.0;
    let mut worst_mass: f64 = 0.0;
    let mut count = 0;
    for name in ["doubling.cfg", "arnold.cfg"] {
        let s = shipped(name);
        let (solver, ops) = operators(&s);
        count += ops.len();
        worst_defect = ops.iter().map(|o| o.markov_defect()).fold(worst_defect, f64::max);
        for f in random_functions(s.numerics.order, 50, 0x6d61_7373) {
            let lf = apply(solver.l0(), &f).unwrap();
            worst_mass = worst_mass.max((lf.mean() - f.mean()).abs());
        }
    }
    Line {
        id: 6,
        title: "Markov conservation",
        pass: worst_defect < 1e-10 && worst_mass < 1e-10,
        detail: format!(
            "max markov_defect {worst_defect:.3e} over {count} operators (< 1e-10), max |mean(Lf) - mean(f)| {worst_mass:.3e} over 50 f per scenario (< 1e-10)"
        ),
    }
}

fn criterion_7() -> Line {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["doubling.cfg", "arnold.cfg"] {
        let s = shipped(name);
        let solver = ResponseSolver::new(s.family(), Discretization::new(s.numerics.order, s.numerics.quadrature)).unwrap();
        let gs = test_set(s.numerics.order, 20, 0x7265_736f);
        let mut worst_res: f64 = 0.0;
        let mut worst_neumann: f64 = 0.0;
        let mut max_terms = 0;
        let mix = mixing_rate(solver.l0(), 40, Norm::L1, Norm::L1).unwrap();
        for g in &gs {
            let v = solver.resolvent().solve(g).unwrap();
            worst_res = worst_res.max(v.residual);
            match mix.terms_for_tail(norm(g, Norm::L1), 1e-9, 100_000) {
                Some(n) => {
                    let ns = neumann_partial_sum(solver.l0(), g, n + 1).unwrap();
                    worst_neumann = worst_neumann.max(norm(&(&ns.value - &v.value), Norm::L1));
                    max_terms = max_terms.max(n + 1);
                }
                None => worst_neumann = f64::INFINITY,
            }
        }
        pass &= worst_res < 1e-10 && worst_neumann < 1e-8;
        parts.push(format!(
            "{}: residual {worst_res:.3e} (< 1e-10), Neumann {worst_neumann:.3e} with <= {max_terms} terms (< 1e-8)",
            s.name
        ));
    }
    Line {
        id: 7,
        title: "resolvent identity",
        pass,
        detail: parts.join("; "),
    }
}

fn criterion_8() -> Line {
    let s = shipped("arnold.cfg");
    let kernel = s.noise.expect("arnold scenario is noisy");
    let solver = ResponseSolver::new(s.family(), Discretization::new(s.numerics.order, s.numerics.quadrature)).unwrap();
    let mix = mixing_rate(solver.l0(), 20, Norm::Ck(1), Norm::Ck(0)).unwrap();
    let l = kernel_lower_bound(solver.family(), 0.0).unwrap().l;
    let c = envelope_constant(&kernel, Norm::Ck(0));
    let env = contraction_envelope(c, l, 20);
    let worst = mix.rates.iter().zip(&env).map(|(a, e)| a / e).fold(0.0, f64::max);
    Line {
        id: 8,
        title: "convergence-to-equilibrium envelope, xi = 0.1",
        pass: kernel.xi() == 0.1 && mix.rates.len() == 20 && worst <= 1.0,
        detail: format!("max a_n / (C (1-l)^(n-1)) = {worst:.3e} for n <= 20 (<= 1), l = {l:.3e}, C_meas = {c:.6}"),
    }
}

fn criterion_9() -> Line {
    let kernel = NoiseKernel::new(0.1).unwrap();
    let mut worst: f64 = 0.0;
    for f in random_functions(48, 20, 0x7265_6775) {
        let conv = convolve_gaussian(&f, &kernel);
        let l1 = norm(&f, Norm::L1);
        for j in 0..=4 {
            worst = worst.max(norm(&conv, Norm::Ck(j)) / (kernel_ck_norm(&kernel, j) * l1));
        }
    }
    Line {
        id: 9,
        title: "regularization inequality",
        pass: worst <= 1.0 + 1e-10,
        detail: format!("max ||rho * f||_Cj / (||rho~||_Cj ||f||_L1) = {worst:.6} over 20 f, j <= 4 (<= 1 + 1e-10)"),
    }
}

fn criterion_10() -> Line {
    let n = 8;
    let h0 = SpectralFunction::constant(n, 1.0);
    let v = &SpectralFunction::cos_mode(n, 1, -2.0 * PI) + &SpectralFunction::sin_mode(n, 3, 0.25);
    let w = &SpectralFunction::cos_mode(n, 2, 4.0 * PI * PI) + &SpectralFunction::sin_mode(n, 5, -1.5);
    let fd = finite_difference_response(|d| Ok(&(&h0 + &v.scale(d)) + &w.scale(d * d)), &SPEC_DELTAS, Norm::L1).unwrap();
    let fd_err = sup(&fd.h_dot, &v).max(sup(&fd.h_ddot, &w.scale(2.0)));
    let deltas: [f64; 5] = [1e-1, 5e-2, 2.5e-2, 1.25e-2, 6.25e-3];
    let fit = |p: i32| {
        let pts: Vec<(f64, f64)> = deltas.iter().map(|&d| (d, 3.7 * d.powi(p))).collect();
        (taylor_slope(&pts).unwrap().slope - p as f64).abs()
    };
    let (e2, e3) = (fit(2), fit(3));
    Line {
        id: 10,
        title: "finite-difference oracle exactness",
        pass: fd_err < 1e-10 && e2 < 1e-10 && e3 < 1e-10,
        detail: format!("centered difference error {fd_err:.3e} (< 1e-10), slope errors {e2:.1e} / {e3:.1e} for exponents 2 / 3 (< 1e-10)"),
    }
}

fn main() {
    let (c3, c4) = criteria_3_4();
    let lines = vec![
        criterion_1(),
        criterion_2(),
        c3,
        c4,
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(),
        criterion_10(),
    ];
    for l in &lines {
        println!(
            "criterion {:>2} {} {}: {}",
            l.id,
            if l.pass { "PASS" } else { "FAIL" },
            l.title,
            l.detail
        );
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    println!("acceptance: {} of {} criteria passed", lines.len() - failed, lines.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
