//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line with its measured
//! runtime; the test fails if any criterion fails.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use effdim::concentration::moment_tensor;
use effdim::entropy::{build_cover, eps_entropy_bound, kb_mb, m_eps, unit_entropy_bound, verify_cover, volumetric_lower_bound, EllipsoidAxes};
use effdim::erm::{precondition_experiment, ErmProblem, LossKind, PrecondConfig};
use effdim::numerics::{sym_eigh, DenseMatrix};
use effdim::smoothing::{calibrate_gap_constant, smoothing_comparison, theta_sequence, SmoothExperimentConfig, SmoothingMode};
use effdim::spectrum::max_norm_bound;
use effdim::{make_spectrum, sample_gaussian, CovarianceSpectrum, RngStream, SpectrumKind, SymMatrix};
use effdim_cli::{load, run, Overrides};
use serde_json::Value;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Runs one criterion, prints its line, and returns whether it passed within the time limit.
fn criterion(id: u32, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed < l);
    let pass = o.pass && in_time;
    let budget = match limit {
        Some(l) => format!("{:.2}s < {}s", elapsed.as_secs_f64(), l.as_secs_f64()),
        None => format!("{:.2}s", elapsed.as_secs_f64()),
    };
    let line = format!(
        "criterion {id:>2} [{}] {name}: {} ({budget}{})\n",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        if in_time { "" } else { ", over time limit" }
    );
    // written to the raw handle so the line shows even when output is captured
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    pass
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn random_spectrum(rng: &mut RngStream, d: usize) -> CovarianceSpectrum<f64> {
    let mut s: Vec<f64> = (0..d).map(|_| 0.01 + rng.uniform::<f64>()).collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    CovarianceSpectrum::new(s, None).unwrap()
}

/// `Tr(Σ^{1/r}) / ‖Σ^{1/r}‖_op` straight from the eigenvalues `σ_i²`.
fn deff_oracle(sigmas: &[f64], r: u32) -> f64 {
    let p: Vec<f64> = sigmas.iter().map(|s| (s * s).powf(1.0 / r as f64)).collect();
    p.iter().sum::<f64>() / p.iter().cloned().fold(0.0, f64::max)
}

fn c1_effective_dimensions() -> Outcome {
    let s = CovarianceSpectrum::<f64>::new(vec![2.0, 1.0], None).unwrap();
    let (d1, d2) = (s.effective_dimension(1), s.effective_dimension(2));
    let hand = (d1 - 1.25).abs() <= 1e-12 && (d2 - 1.5).abs() <= 1e-12;
    let iso = (1..=50).all(|d| {
        let s = make_spectrum(&SpectrumKind::Isotropic, d, 1.7).unwrap();
        (1..=4).all(|r| s.effective_dimension(r) == d as f64)
    });
    let mut rng = RngStream::new(101, 0);
    let mut monotone = true;
    let mut oracle_err: f64 = 0.0;
    for _ in 0..1000 {
        let d = 1 + rng.uniform_index(50);
        let s = random_spectrum(&mut rng, d);
        let v: Vec<f64> = (1..=5).map(|r| s.effective_dimension(r)).collect();
        monotone &= v.windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-12));
        for r in 1..=5 {
            oracle_err = oracle_err.max((v[r as usize - 1] - deff_oracle(s.sigmas(), r)).abs() / d as f64);
        }
    }
    outcome(
        hand && iso && monotone && oracle_err < 1e-12,
        format!("d_eff(1)={d1}, d_eff(2)={d2}, isotropic exact={iso}, monotone on 1000 spectra={monotone}, max rel. oracle error {oracle_err:.1e}"),
    )
}

fn c2_entropy_formulas() -> Outcome {
    let e = EllipsoidAxes::new(vec![4.0, 2.0, 0.5]).unwrap();
    let (kb, mb) = kb_mb(&e);
    let mut ok = (kb - 8f64.ln()).abs() < 1e-10 && mb == 2;
    let (kb0, mb0) = kb_mb(&EllipsoidAxes::new(vec![0.9, 0.5]).unwrap());
    ok &= kb0 == 0.0 && mb0 == 0;
    let (kbe, mbe) = kb_mb(&EllipsoidAxes::new(vec![std::f64::consts::E; 2]).unwrap());
    ok &= (kbe - 2.0).abs() < 1e-10 && mbe == 2;
    let unit = unit_entropy_bound(&e, 1.0).unwrap().total;
    let want = 8f64.ln() + 3f64.ln() + (4f64.ln() * 2.0 * 3f64.ln()).sqrt();
    ok &= (unit - want).abs() < 1e-10;
    let small = unit_entropy_bound(&EllipsoidAxes::new(vec![1.0, 0.7, 0.2]).unwrap(), 1.0).unwrap().total;
    ok &= (small - 3f64.ln()).abs() < 1e-10;
    let s = CovarianceSpectrum::new(vec![2.0, 1.0, 0.1], None).unwrap();
    ok &= m_eps(&s, 0.4) == 2;
    let b = eps_entropy_bound(&s, 0.4, 1, 1.0).unwrap();
    ok &= (b.exact_sum - ((2.0f64 / 0.8).ln() + (1.0f64 / 0.8).ln())).abs() < 1e-10;
    let hand = ok;

    let mut rng = RngStream::new(202, 0);
    let grid: Vec<f64> = (1..=50).map(|k| k as f64 / 50.0).collect();
    let (mut monotone, mut count_bound) = (true, true);
    for _ in 0..100 {
        let d = 1 + rng.uniform_index(40);
        let s = random_spectrum(&mut rng, d);
        for r in 1..=3u32 {
            let vals: Vec<_> = grid.iter().map(|&eps| eps_entropy_bound(&s, eps, r, 1.0).unwrap()).collect();
            monotone &= vals.windows(2).all(|w| w[1].exact_total <= w[0].exact_total + 1e-12 && w[1].total <= w[0].total + 1e-12);
            for &eps in &grid {
                let count = s.sigmas().iter().filter(|&&v| v > eps * s.sigmas()[0]).count() as f64;
                count_bound &= count <= 1.0 + (deff_oracle(s.sigmas(), r) - 1.0) * eps.powf(-2.0 / r as f64) + 1e-9;
            }
        }
    }
    outcome(
        hand && monotone && count_bound,
        format!("hand values={hand}, unit bound {unit:.4}, non-increasing in eps={monotone}, m_eps count bound={count_bound}"),
    )
}

fn c3_cover() -> Outcome {
    let e = EllipsoidAxes::new(vec![4.0, 2.0, 0.5]).unwrap();
    let cover = build_cover(&e, 1.0).unwrap();
    let report = verify_cover(&cover, &e, 100_000, &RngStream::new(303, 0)).unwrap();
    let ln_n = (cover.len() as f64).ln();
    let vol_oracle: f64 = [4.0f64, 2.0, 0.5].iter().map(|b| b.ln()).sum();
    let lower = volumetric_lower_bound(&e, 1.0);
    let holed = cover.without_cluster(&[0.0, 0.0, 0.0], 0.1);
    let control = verify_cover(&holed, &e, 100_000, &RngStream::new(303, 1)).unwrap();
    outcome(
        report.violations == 0 && ln_n >= lower && ln_n >= vol_oracle && control.violations > 0,
        format!(
            "{} centers, {} violations / 1e5, ln N = {ln_n:.3} >= {lower:.3}; negative control ({} centers) {} violations",
            cover.len(),
            report.violations,
            holed.len(),
            control.violations
        ),
    )
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run_in_process(cfg: &Path, out: &Path) -> Value {
    let (c, p) = load(cfg, &Overrides { output_dir: Some(out.to_path_buf()), ..Default::default() }).unwrap();
    run(&c, &p).unwrap();
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

const C4: &str = r#"{"subcommand":"concentration","master_seed":4,"parameters":{
  "spectra":[{"id":"isotropic","spectrum":{"generate":{"kind":"isotropic"},"d":5}}],
  "n_grid":[64,128,256,512,1024,2048,4096],"trials":200,"r":2,"centered":true}}"#;

const C5: &str = r#"{"subcommand":"concentration","master_seed":5,"parameters":{
  "spectra":[{"id":"isotropic","spectrum":{"generate":{"kind":"isotropic"},"d":40}},
             {"id":"power_law","spectrum":{"generate":{"kind":"power_law","alpha":1.0},"d":40}}],
  "n_grid":[256],"trials":100,"r":2,"centered":true}}"#;

const C10: &str = r#"{"subcommand":"smooth","master_seed":7,"parameters":{
  "loss":"hinge","spectrum":{"generate":{"kind":"power_law","alpha":1.0},"d":64},
  "n":2000,"m":16,"iters":2000,"radius":1.0,"target_gap":0.01,"seeds":10}}"#;

fn c4_scaling(dir: &Path) -> Outcome {
    let cfg = write(dir, "c4.json", C4);
    let s = run_in_process(&cfg, &dir.join("c4"));
    let slope = s["slopes"][0]["slope"].as_f64().unwrap();
    let ci = &s["slopes"][0]["ci95"];
    outcome((-0.6..=-0.4).contains(&slope), format!("log-log slope {slope:.4} (95% CI [{:.4}, {:.4}]), target [-0.6, -0.4]", ci[0].as_f64().unwrap(), ci[1].as_f64().unwrap()))
}

fn c5_anisotropy(dir: &Path) -> Outcome {
    let cfg = write(dir, "c5.json", C5);
    let s = run_in_process(&cfg, &dir.join("c5"));
    let mean = |id: &str| s["cells"].as_array().unwrap().iter().find(|c| c["spectrum_id"] == id).unwrap()["mean"].as_f64().unwrap();
    let (iso, pl) = (mean("isotropic"), mean("power_law"));
    let reduction = 1.0 - pl / iso;
    outcome(reduction >= 0.2, format!("mean deviation isotropic {iso:.4}, power-law {pl:.4}, reduction {:.1}% (need >= 20%)", 100.0 * reduction))
}

fn c6_tensor_moments() -> Outcome {
    let sigmas = [1.5, 1.0, 0.6];
    let mut rng = RngStream::new(606, 0);
    let g: Vec<f64> = rng.normals(9);
    let sym = SymMatrix::from_fn(3, |i, j| g[3 * i + j] + g[3 * j + i]);
    let basis: DenseMatrix<f64> = sym_eigh(&sym, 1e-14).unwrap().vectors;
    let s = CovarianceSpectrum::new(sigmas.to_vec(), Some(basis.clone())).unwrap();
    // Σ_ij = Σ_k B_ik σ_k² B_jk
    let cov = |i: usize, j: usize| (0..3).map(|k| basis[(i, k)] * sigmas[k] * sigmas[k] * basis[(j, k)]).sum::<f64>();
    let x = sample_gaussian(&s, 1_000_000, &mut rng.substream(1)).unwrap();
    let (m4, se4) = moment_tensor(&x, 4).unwrap();
    let (m3, se3) = moment_tensor(&x, 3).unwrap();
    let mut worst4: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let wick = cov(i, j) * cov(k, l) + cov(i, k) * cov(j, l) + cov(i, l) * cov(j, k);
                    let idx = [i, j, k, l];
                    worst4 = worst4.max((m4.get(&idx) - wick).abs() / se4.get(&idx));
                }
            }
        }
    }
    let mut worst3: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                worst3 = worst3.max(m3.get(&[i, j, k]).abs() / se3.get(&[i, j, k]));
            }
        }
    }
    outcome(worst4 <= 5.0 && worst3 <= 5.0, format!("max |mean - Wick|/stderr (p=4) {worst4:.2}, max |mean|/stderr (p=3) {worst3:.2}, limit 5"))
}

fn c7_max_norm_tail() -> Outcome {
    let s = make_spectrum(&SpectrumKind::Isotropic, 10, 1.0).unwrap();
    let trials = 10_000;
    let mut parts = Vec::new();
    let mut pass = true;
    for (k, delta) in [0.1f64, 0.01].into_iter().enumerate() {
        let bound = max_norm_bound(&s, 100, delta).unwrap();
        let root = RngStream::new(707, k as u64);
        let exceed = (0..trials)
            .filter(|&t| {
                let x = sample_gaussian(&s, 100, &mut root.substream(t as u64)).unwrap();
                x.rows().map(|a| a.iter().map(|v| v * v).sum::<f64>()).fold(0.0, f64::max) > bound
            })
            .count();
        let freq = exceed as f64 / trials as f64;
        let slack = 2.576 * (delta * (1.0 - delta) / trials as f64).sqrt();
        pass &= freq <= delta + slack;
        parts.push(format!("delta={delta}: {freq:.4} <= {:.4}", delta + slack));
    }
    outcome(pass, format!("exceedance frequency {}", parts.join(", ")))
}

fn c8_preconditioning() -> Outcome {
    let lambda = 1e-2;
    let cfg = PrecondConfig {
        loss: LossKind::Logistic,
        spectrum: make_spectrum(&SpectrumKind::PowerLaw { alpha: 1.0 }, 20, 1.0).unwrap(),
        n: 2000,
        n_aux: 2000,
        lambda,
        iters: 60,
        vanilla_factor: 20,
        target_gap: 1e-6,
        radius: None,
        truth_norm: 1.0,
        restarts: 16,
        search_iters: 60,
        probes: 50,
        inner_tol: 1e-12,
    };
    let r = precondition_experiment(&cfg, 7).unwrap();
    let kappa = 1.0 + 2.0 * r.mu_hat / lambda;
    let sandwich = r.condition.per_probe.len() == 50 && r.condition.l_rel <= 1.0 + 1e-9 && r.condition.sigma_rel >= 1.0 / kappa - 1e-9;
    let rate = r.max_ratio <= 1.0 - 1.0 / kappa + 0.05;
    let faster = match (r.rounds_precond, r.rounds_vanilla) {
        (Some(p), Some(v)) => p < v,
        (Some(_), None) => true,
        _ => false,
    };
    outcome(
        sandwich && rate && faster,
        format!(
            "mu_hat {:.4}, L_rel {:.6}, sigma_rel {:.4} >= {:.4}, max gap ratio {:.4} <= {:.4}, rounds to 1e-6: {:?} vs vanilla {:?}",
            r.mu_hat,
            r.condition.l_rel,
            r.condition.sigma_rel,
            1.0 / kappa,
            r.max_ratio,
            1.0 - 1.0 / kappa + 0.05,
            r.rounds_precond,
            r.rounds_vanilla
        ),
    )
}

fn hinge_problem(kind: SpectrumKind<f64>, d: usize, n: usize, seed: u64) -> (ErmProblem<f64>, CovarianceSpectrum<f64>) {
    let s = make_spectrum(&kind, d, 1.0).unwrap();
    let mut rng = RngStream::new(seed, 0);
    let x = sample_gaussian(&s, n, &mut rng).unwrap();
    let labels = (0..n).map(|_| if rng.uniform::<f64>() < 0.5 { 1.0 } else { -1.0 }).collect();
    (ErmProblem::new(LossKind::Hinge, x, labels, 0.0).unwrap(), s)
}

fn c9_smoothing_sandwich() -> Outcome {
    let th = theta_sequence::<f64>(10_000).unwrap();
    let identity = th[0] == 1.0 && (0..10_000).all(|t| {
        let lhs = (1.0 - th[t + 1]) / (th[t + 1] * th[t + 1]);
        let rhs = 1.0 / (th[t] * th[t]);
        ((lhs - rhs) / rhs).abs() <= 1e-12
    });

    let (p, s) = hinge_problem(SpectrumKind::Isotropic, 16, 200, 909);
    let iso = calibrate_gap_constant(&p, &s, SmoothingMode::Isotropic, &[0.5, 0.2], Some(1.0), 1.0, 20, 2000, 0.05, &RngStream::new(909, 1)).unwrap();
    let max_row = p.data().rows().map(|a| a.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
    let bound_ok = iso.points.iter().all(|q| (q.bound - q.gamma * max_row * 4.0).abs() <= 1e-12 * q.bound);
    let iso_sandwich = iso.all_hold() && bound_ok;

    let gammas = [1.0, 0.5, 0.25, 0.1];
    let (p, s) = hinge_problem(SpectrumKind::PowerLaw { alpha: 1.0 }, 16, 200, 919);
    let fitted = calibrate_gap_constant(&p, &s, SmoothingMode::NonIsotropic, &gammas, None, 1.0, 20, 2000, 0.05, &RngStream::new(919, 1)).unwrap();
    let c = fitted.constant;
    let aniso_gap = c > 0.0 && fitted.all_hold();
    outcome(
        identity && iso_sandwich && aniso_gap,
        format!(
            "theta identity={identity}, isotropic sandwich at 20 points x 2 gammas={iso_sandwich}, non-isotropic gap with frozen C={c:.4} across gammas {gammas:?}={aniso_gap}"
        ),
    )
}

fn c10_smoothing_advantage() -> Outcome {
    let v: Value = serde_json::from_str(C10).unwrap();
    let cfg: SmoothExperimentConfig<f64> = serde_json::from_value(v["parameters"].clone()).unwrap();
    let c = smoothing_comparison(&cfg, v["master_seed"].as_u64().unwrap()).unwrap();
    let paired_wins = (0..cfg.seeds)
        .filter(|&k| {
            let it = |m: SmoothingMode| c.outcomes.iter().find(|o| o.seed == k && o.mode == m).unwrap().iterations;
            it(SmoothingMode::NonIsotropic) < it(SmoothingMode::Isotropic)
        })
        .count();
    outcome(
        c.median_non_isotropic < c.median_isotropic,
        format!(
            "median iterations to gap 1e-2: non-isotropic {} vs isotropic {} ({paired_wins}/{} paired seeds faster)",
            c.median_non_isotropic, c.median_isotropic, cfg.seeds
        ),
    )
}

fn cli_run(cfg: &Path, out: &Path, jobs: usize) -> bool {
    Command::new(env!("CARGO_BIN_EXE_effdim"))
        .arg(serde_json::from_str::<Value>(&fs::read_to_string(cfg).unwrap()).unwrap()["subcommand"].as_str().unwrap())
        .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", &jobs.to_string()])
        .env_remove("TOOL_SEED")
        .env_remove("TOOL_JOBS")
        .stdout(Stdio::null())
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn c11_determinism(dir: &Path) -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, text, csv) in [("c4", C4, "concentration.csv"), ("c10", C10, "smooth.csv")] {
        let cfg = write(dir, &format!("{name}-det.json"), text);
        let (a, b) = (dir.join(format!("{name}-j1")), dir.join(format!("{name}-j4")));
        let ran = cli_run(&cfg, &a, 1) && cli_run(&cfg, &b, 4);
        let same = ran
            && [csv, "summary.json"].iter().all(|f| fs::read(a.join(f)).ok().is_some_and(|x| Some(x) == fs::read(b.join(f)).ok()));
        pass &= same;
        parts.push(format!("{name} jobs=1 vs jobs=4 identical={same}"));
    }
    outcome(pass, parts.join(", "))
}

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let results = [
        criterion(1, "effective dimensions", secs(1), c1_effective_dimensions),
        criterion(2, "entropy formulas", secs(10), c2_entropy_formulas),
        criterion(3, "covering validity", secs(60), c3_cover),
        criterion(4, "concentration scaling", secs(600), || c4_scaling(d)),
        criterion(5, "anisotropy benefit", secs(600), || c5_anisotropy(d)),
        criterion(6, "tensor moments", secs(120), c6_tensor_moments),
        criterion(7, "max-norm tail", secs(60), c7_max_norm_tail),
        criterion(8, "statistical preconditioning", secs(300), c8_preconditioning),
        criterion(9, "smoothing schedules and sandwich", secs(120), c9_smoothing_sandwich),
        criterion(10, "non-isotropic smoothing advantage", secs(600), c10_smoothing_advantage),
        criterion(11, "determinism across parallelism", None, || c11_determinism(d)),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, &p)| !p).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
