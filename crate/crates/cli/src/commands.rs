use std::path::Path;
use std::time::Instant;

use flqr::estimator::{fit, fit_family, predict, FitConfig, FitResult};
use flqr::funcdata::{load_curves, load_sample, write_curves, FunctionalSample, GridFunction};
use flqr::inference::{pointwise_ci, quantile_ci, scb, PointwiseCi};
use flqr::monotonize::{monotonize, QuantilePath};
use flqr::rkhs::{build_gram, SobolevKernel};
use flqr::simharness::{
    generate, run_coverage_experiment, run_mise_experiment, CoverageOptions, ErrorFamily, McOptions, Method, SimDesign,
};
use flqr::spectrum::{solve_eigensystem, EigenSystem};
use flqr::tuning::{cross_validate_gram, rot_bandwidth_gram, TuningConfig};
use serde::Serialize;

use crate::args::*;
use crate::output::{emit, prefix_column, to_json, FitArtifact, SampleData};
use crate::CliError;

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Fit(a) => run_fit(a),
        Command::Predict(a) => run_predict(a),
        Command::Ci(a) => run_ci(a),
        Command::Scb(a) => run_scb(a),
        Command::QuantileCi(a) => run_quantile_ci(a),
        Command::Monotonize(a) => run_monotonize(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Bench(a) => run_bench(a),
    }
}

fn fit_config(t: &TuningArgs, seed: u64) -> Result<FitConfig, CliError> {
    let mut config = FitConfig::default();
    config.gd.tol = t.tol;
    config.gd.max_iter = t.max_iter;
    config.tuning.gd.max_iter = t.max_iter;
    config.tuning.folds = t.folds;
    config.tuning.seed = seed;
    config.tuning.rule = t.lambda_rule.into();
    if let Some(g) = &t.lambda_grid {
        config.tuning.lambda_grid = g.clone();
    }
    if let Some(h) = t.h {
        if !(h > 0.0 && h.is_finite()) {
            return Err(CliError::Usage(format!("--h must be positive, got {h}")));
        }
    }
    if let Some(l) = t.lambda {
        if !(l > 0.0 && l.is_finite()) {
            return Err(CliError::Usage(format!("--lambda must be positive, got {l}")));
        }
    }
    Ok(config)
}

/// Input files are checked up front so the message names the missing one.
fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Io(format!("{}: no such file", path.display())))
    }
}

fn run_fit(a: FitArgs) -> Result<(), CliError> {
    let config = fit_config(&a.tuning, a.seed)?;
    require_file(&a.curves)?;
    require_file(&a.y)?;
    let sample = load_sample(&a.curves, &a.y)?;
    if a.tuning.lambda.is_none() {
        config.tuning.validate(sample.n())?;
    }
    let mut art = FitArtifact {
        format_rev: FORMAT_REV,
        config: config.clone(),
        fit: None,
        family: None,
        sample: SampleData::from_sample(&sample),
    };
    match (a.tau, &a.taus) {
        (Some(tau), _) => {
            let f = fit(&sample, tau, a.tuning.h, a.tuning.lambda, &config)?;
            report_fit(&f);
            if let Some(p) = &a.beta_out {
                emit(Some(p), &f.beta_csv())?;
            }
            art.fit = Some(f);
        }
        (None, Some(taus)) => {
            if a.beta_out.is_some() {
                return Err(CliError::Usage("--beta-out needs a single --tau".into()));
            }
            if a.tuning.h.is_some() {
                return Err(CliError::Usage("--h applies to a single --tau; levels use their own rule-of-thumb h".into()));
            }
            let fam = fit_family(&sample, taus, a.tuning.lambda, a.shared_lambda, &config)?;
            fam.fits.iter().flatten().for_each(report_fit);
            art.family = Some(fam);
        }
        (None, None) => return Err(CliError::Usage("give --tau or --taus".into())),
    }
    emit(a.out.as_deref(), &to_json(&art)?)
}

fn report_fit(f: &FitResult) {
    log::info!(
        "tau {}: lambda {:e}, h {:.4}, {} iterations, |grad| {:.2e}, {:?}",
        f.tau,
        f.lambda,
        f.h,
        f.trace.iterations,
        f.trace.final_grad_norm,
        f.trace.status
    );
    if !f.trace.converged() {
        log::warn!("tau {}: optimizer stopped before reaching the tolerance", f.tau);
    }
}

/// New curves on the artifact's grid.
fn load_new_curves(path: &Path, art: &FitArtifact) -> Result<Vec<GridFunction>, CliError> {
    require_file(path)?;
    let (grid, rows) = load_curves(path)?;
    if grid.points() != art.sample.grid.as_slice() {
        return Err(flqr::FlqrError::GridMismatch.into());
    }
    let grid = art.fits().first().map(|f| f.grid().clone()).unwrap_or(grid);
    rows.into_iter()
        .map(|r| GridFunction::new(grid.clone(), r).map_err(Into::into))
        .collect()
}

fn nonempty(art: &FitArtifact) -> Result<Vec<&FitResult>, CliError> {
    let fits = art.fits();
    if fits.is_empty() {
        return Err(CliError::Usage("the artifact holds no successful fit".into()));
    }
    Ok(fits)
}

fn run_predict(a: PredictArgs) -> Result<(), CliError> {
    let art = FitArtifact::load(&a.fit)?;
    let fits = nonempty(&art)?;
    let curves = load_new_curves(&a.curves, &art)?;
    #[derive(Serialize)]
    struct Row {
        curve: usize,
        tau: f64,
        prediction: f64,
    }
    let mut rows = Vec::new();
    for (i, x) in curves.iter().enumerate() {
        for f in &fits {
            rows.push(Row {
                curve: i,
                tau: f.tau,
                prediction: predict(f, x)?,
            });
        }
    }
    let text = match a.format {
        Format::Json => to_json(&rows)?,
        Format::Csv => {
            let mut s = String::from("curve,tau,prediction\n");
            for r in &rows {
                s.push_str(&format!("{},{},{}\n", r.curve, r.tau, r.prediction));
            }
            s
        }
    };
    emit(a.out.as_deref(), &text)
}

fn eigensystems<'a>(
    art: &'a FitArtifact,
    n_eig: usize,
) -> Result<(FunctionalSample, Vec<(&'a FitResult, EigenSystem)>), CliError> {
    let sample = art.sample.to_sample()?;
    let pairs = nonempty(art)?
        .into_iter()
        .map(|f| Ok((f, solve_eigensystem(&sample, f.b_hat, n_eig, None)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok((sample, pairs))
}

fn run_ci(a: CiArgs) -> Result<(), CliError> {
    let art = FitArtifact::load(&a.fit)?;
    let (_, pairs) = eigensystems(&art, a.n_eig)?;
    let mut all: Vec<PointwiseCi> = Vec::new();
    let mut csv = String::new();
    for (k, (f, es)) in pairs.iter().enumerate() {
        let points = a.t.clone().unwrap_or_else(|| f.grid().points().to_vec());
        let cis = points
            .iter()
            .map(|&t| pointwise_ci(f, es, t, a.level))
            .collect::<flqr::Result<Vec<_>>>()?;
        csv.push_str(&prefix_column("tau", &f.tau.to_string(), &flqr::inference::pointwise_csv(&cis), k == 0));
        all.extend(cis);
    }
    let text = match a.format {
        Format::Json => to_json(&all)?,
        Format::Csv => csv,
    };
    emit(a.out.as_deref(), &text)
}

fn run_scb(a: ScbArgs) -> Result<(), CliError> {
    let art = FitArtifact::load(&a.fit)?;
    let (_, pairs) = eigensystems(&art, a.n_eig)?;
    let mut bands = Vec::new();
    let mut csv = String::new();
    for (k, (f, es)) in pairs.iter().enumerate() {
        let band = scb(f, es, a.level, a.paths, a.seed)?;
        log::info!("tau {}: q = {:.4}", f.tau, band.q_alpha);
        csv.push_str(&prefix_column("tau", &f.tau.to_string(), &band.to_csv(), k == 0));
        bands.push(band);
    }
    let text = match a.format {
        Format::Json => to_json(&bands)?,
        Format::Csv => csv,
    };
    emit(a.out.as_deref(), &text)
}

fn run_quantile_ci(a: QuantileCiArgs) -> Result<(), CliError> {
    let art = FitArtifact::load(&a.fit)?;
    let curves = load_new_curves(&a.x0, &art)?;
    let (_, pairs) = eigensystems(&art, a.n_eig)?;
    #[derive(Serialize)]
    struct Row {
        curve: usize,
        tau: f64,
        center: f64,
        lower: f64,
        upper: f64,
        half_width: f64,
        sigma2: f64,
    }
    let mut rows = Vec::new();
    for (i, x) in curves.iter().enumerate() {
        for (f, es) in &pairs {
            let ci = quantile_ci(f, es, x, a.level)?;
            rows.push(Row {
                curve: i,
                tau: f.tau,
                center: ci.center,
                lower: ci.lower(),
                upper: ci.upper(),
                half_width: ci.half_width,
                sigma2: ci.sigma2,
            });
        }
    }
    let text = match a.format {
        Format::Json => to_json(&rows)?,
        Format::Csv => {
            let mut s = String::from("curve,tau,center,lower,upper,half_width,sigma2\n");
            for r in &rows {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.curve, r.tau, r.center, r.lower, r.upper, r.half_width, r.sigma2
                ));
            }
            s
        }
    };
    emit(a.out.as_deref(), &text)
}

/// Reads a `tau,value` CSV with a header row.
fn read_path(path: &Path) -> Result<QuantilePath, CliError> {
    require_file(path)?;
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let (mut taus, mut values) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let field = |j: usize| -> Result<f64, CliError> {
            rec.get(j)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| {
                    flqr::FlqrError::ParseError {
                        line: i + 2,
                        message: format!("expected two numbers `tau,value`, got {:?}", rec),
                    }
                    .into()
                })
        };
        taus.push(field(0)?);
        values.push(field(1)?);
    }
    Ok(QuantilePath::new(taus, values)?)
}

fn run_monotonize(a: MonotonizeArgs) -> Result<(), CliError> {
    let mut paths = Vec::new();
    if let Some(p) = &a.path {
        paths.push(monotonize(&read_path(p)?, a.weight)?);
    } else if let (Some(fit_path), Some(x0)) = (&a.fit, &a.x0) {
        let art = FitArtifact::load(fit_path)?;
        let fam = art
            .family
            .as_ref()
            .ok_or_else(|| CliError::Usage("monotonizing needs an artifact from `fit --taus`".into()))?;
        for x in load_new_curves(x0, &art)? {
            let (taus, values): (Vec<f64>, Vec<f64>) = fam.predict_path(&x)?.into_iter().unzip();
            paths.push(monotonize(&QuantilePath::new(taus, values)?, a.weight)?);
        }
    } else {
        return Err(CliError::Usage("give --path, or --fit with --x0".into()));
    }
    let text = match a.format {
        Format::Json => to_json(&paths)?,
        Format::Csv => {
            let mut s = String::new();
            for (i, p) in paths.iter().enumerate() {
                s.push_str(&prefix_column("curve", &i.to_string(), &p.to_csv(), i == 0));
            }
            s
        }
    };
    emit(a.out.as_deref(), &text)
}

fn design(family: DesignArg, n: usize, snr: f64, seed: u64) -> Result<SimDesign, CliError> {
    let fam = match family {
        DesignArg::Normal => ErrorFamily::Normal,
        DesignArg::T3 => ErrorFamily::StudentT3,
    };
    let d = SimDesign::new(n, fam, snr, seed);
    d.validate()?;
    Ok(d)
}

fn run_simulate(a: SimulateArgs) -> Result<(), CliError> {
    let d = design(a.design, a.n, a.snr, a.seed)?;
    let mut mc = McOptions::new(a.taus.clone(), a.reps);
    mc.fit = fit_config(&a.tuning, a.seed)?;
    mc.shared_lambda = a.shared_lambda;
    mc.lambda = a.tuning.lambda;
    if a.tuning.h.is_some() {
        return Err(CliError::Usage("simulate always uses the rule-of-thumb h".into()));
    }
    let report = match a.experiment {
        ExperimentArg::Sample => return write_sample(&d, &a),
        ExperimentArg::Mise => {
            let methods: Vec<Method> = a
                .methods
                .iter()
                .map(|m| match m {
                    MethodArg::Rkhs => Method::Rkhs,
                    MethodArg::Fpca => Method::Fpca,
                })
                .collect();
            run_mise_experiment(&d, &mc, &methods)?
        }
        ExperimentArg::Coverage => {
            let mut opts = CoverageOptions::new(a.taus.clone(), a.t_points.clone(), a.reps);
            opts.mc = mc;
            opts.level = a.level;
            opts.n_eig = a.n_eig;
            opts.quantile_ci = a.quantile_ci;
            opts.scb_paths = a.scb_paths;
            run_coverage_experiment(&d, &opts)?
        }
    };
    for s in &report.summary {
        log::info!("{} tau {} {}: {:.4e} (se {:.2e}, {} reps)", s.method, s.tau, s.metric, s.mean, s.se, s.count);
    }
    if !report.failures.is_empty() {
        log::warn!("{} of {} replicates failed", report.failures.len(), report.n_replicates);
    }
    log::info!("finished in {:.1} s", report.runtime_secs);
    let text = match a.format {
        Format::Json => report.to_json()? + "\n",
        Format::Csv => report.to_csv(),
    };
    emit(a.out.as_deref(), &text)
}

fn write_sample(d: &SimDesign, a: &SimulateArgs) -> Result<(), CliError> {
    let (Some(curves), Some(y)) = (&a.curves_out, &a.y_out) else {
        return Err(CliError::Usage("the sample experiment needs --curves-out and --y-out".into()));
    };
    let s = generate(d)?.sample;
    let mut buf = Vec::new();
    write_curves(&mut buf, s.grid(), (0..s.n()).map(|i| s.curve_values(i)))?;
    emit(Some(curves), &String::from_utf8(buf).expect("formatted numbers are ASCII"))?;
    let ys: String = s.responses().iter().map(|v| format!("{v}\n")).collect();
    emit(Some(y), &ys)
}

fn run_bench(a: BenchArgs) -> Result<(), CliError> {
    if a.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    #[derive(Serialize, Default)]
    struct Timing {
        n: usize,
        reps: usize,
        gram_secs: f64,
        bandwidth_secs: f64,
        cv_secs: f64,
        fit_secs: f64,
        fit_iterations: f64,
        spectrum_secs: f64,
        scb_secs: f64,
    }
    let mut t = Timing {
        n: a.n,
        reps: a.reps,
        ..Default::default()
    };
    for r in 0..a.reps {
        let seed = a.seed.wrapping_add(r as u64);
        let sim = generate(&design(DesignArg::Normal, a.n, 10.0, seed)?)?;
        let s = &sim.sample;
        let clock = Instant::now();
        let kern = SobolevKernel::cubic(s.grid().clone())?;
        let gram = build_gram(s, &kern)?;
        t.gram_secs += clock.elapsed().as_secs_f64();
        let clock = Instant::now();
        let h = rot_bandwidth_gram(&gram, s.responses(), a.tau)?;
        t.bandwidth_secs += clock.elapsed().as_secs_f64();
        let lambda = match a.lambda {
            Some(l) => l,
            None => {
                let clock = Instant::now();
                let tuning = TuningConfig {
                    seed,
                    ..TuningConfig::default()
                };
                let l = cross_validate_gram(&gram, s.responses(), a.tau, h, &tuning)?.0;
                t.cv_secs += clock.elapsed().as_secs_f64();
                l
            }
        };
        let clock = Instant::now();
        let f = flqr::estimator::fit_gram(s, &gram, a.tau, Some(h), Some(lambda), &FitConfig::default(), None)?;
        t.fit_secs += clock.elapsed().as_secs_f64();
        t.fit_iterations += f.trace.iterations as f64;
        let clock = Instant::now();
        let es = solve_eigensystem(s, f.b_hat, flqr::spectrum::DEFAULT_N_EIG, None)?;
        t.spectrum_secs += clock.elapsed().as_secs_f64();
        let clock = Instant::now();
        scb(&f, &es, 0.95, flqr::inference::DEFAULT_PATHS, seed)?;
        t.scb_secs += clock.elapsed().as_secs_f64();
    }
    let k = a.reps as f64;
    for v in [
        &mut t.gram_secs,
        &mut t.bandwidth_secs,
        &mut t.cv_secs,
        &mut t.fit_secs,
        &mut t.fit_iterations,
        &mut t.spectrum_secs,
        &mut t.scb_secs,
    ] {
        *v /= k;
    }
    emit(a.out.as_deref(), &to_json(&t)?)
}
