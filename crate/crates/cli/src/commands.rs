use std::io::Write;

use pg_limits::hard_instances::{
    corollary_nullspace_bound, default_policy, dimension_curse_bound, lower_bound_theorem1,
    scalar_lower_bound, ExperimentBudget, Lemma4Check, LowerBoundCertificate, Perturbation,
};
use pg_limits::linalg::{spectral_radius, top_left_singular};
use pg_limits::lqr::{
    closed_loop_gramian, exact_policy_gradient, lqr_cost, solve_dare_optimal, solve_lyapunov_value,
    DARE_TOL, DEFAULT_TOL,
};
use pg_limits::partial_obs::{
    default_policy_po, innovation_gramian, lower_bound_theorem2, markov_parameter_sweep,
    scalar_po_bound, OutputSystem,
};
use pg_limits::serde_matrix::to_rows;
use pg_limits::sim::{figure1_experiment, EstimatorMethod, Figure1Config};
use pg_limits::{Controller, CostSpec, Mat, StateSpaceSystem};
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::output::{csv_table, figure1_csv, figure1_svg, fmt_float, fmt_opt, write_atomic};
use crate::schema::{read_matrix, Instance, SystemFile};

pub fn run(cli: Cli, stdout: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Gradient(args) => gradient(&args, stdout),
        Command::Certificate { mode } => certificate(&mode, stdout),
        Command::Figure1(args) => figure1(&args, stdout),
        Command::Sweep { kind } => sweep(&kind, stdout),
    }
}

fn emit(stdout: &mut dyn Write, bytes: &[u8]) -> CliResult<()> {
    stdout
        .write_all(bytes)
        .and_then(|_| stdout.flush())
        .map_err(|e| CliError::io("stdout", e))
}

fn emit_to(target: Option<&std::path::Path>, stdout: &mut dyn Write, bytes: &[u8]) -> CliResult<()> {
    match target {
        Some(path) => write_atomic(path, bytes),
        None => emit(stdout, bytes),
    }
}

fn json_line(v: &impl Serialize) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("report serializes");
    s.push(b'\n');
    s
}

fn scalar_instance(s: &ScalarSystemArgs) -> CliResult<Instance> {
    Ok(Instance {
        system: StateSpaceSystem::scalar(s.a, s.b, s.sigma2)?,
        cost: CostSpec::scalar(s.q, s.r)?,
        output: None,
    })
}

impl BudgetArgs {
    pub fn budget(&self) -> CliResult<ExperimentBudget> {
        Ok(match self.nt {
            Some(nt) => ExperimentBudget::from_total(nt, self.beta)?,
            None => ExperimentBudget::new(self.n.unwrap_or(1), self.t.unwrap_or(10_000), self.beta)?,
        })
    }
}

fn gradient(args: &GradientArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let inst = match &args.system {
        Some(path) => SystemFile::read(path)?.instance()?,
        None => scalar_instance(&args.scalar)?,
    };
    let (sys, cost) = (&inst.system, &inst.cost);
    let k = match (&args.gain, args.k.as_deref()) {
        (Some(path), _) => Controller::new(read_matrix(path)?),
        (None, None | Some("optimal")) => solve_dare_optimal(sys, cost, DARE_TOL)?.1,
        (None, Some(text)) => {
            let v: f64 = text
                .parse()
                .map_err(|_| CliError::Validation(format!("--k expects a number or 'optimal', got '{text}'")))?;
            if sys.state_dim() != 1 || sys.input_dim() != 1 {
                return Err(CliError::Validation("--k is only valid for scalar systems; use --gain".into()));
            }
            Controller::scalar(v)
        }
    };
    let rho = spectral_radius(&sys.closed_loop(&k)?)?;
    let grad = exact_policy_gradient(sys, cost, &k)?;
    let p = solve_lyapunov_value(sys, cost, &k, DEFAULT_TOL)?;
    let gamma = closed_loop_gramian(sys, &k, DEFAULT_TOL)?;
    let report = json!({
        "gradient": to_rows(&grad),
        "cost": lqr_cost(sys, cost, &k)?,
        "P": to_rows(&p.p),
        "Gamma": to_rows(&gamma.gamma),
        "spectral_radius": rho,
        "K": to_rows(&k.gain),
        "system": SystemFile::from_instance(&inst),
    });
    emit(stdout, &json_line(&report))
}

#[derive(Serialize)]
struct CertificateReport<'a> {
    mode: &'a str,
    budget: ExperimentBudget,
    parameters: serde_json::Value,
    #[serde(flatten)]
    certificate: &'a LowerBoundCertificate,
    #[serde(skip_serializing_if = "Option::is_none")]
    lemma4: Option<&'a Lemma4Check>,
}

const CERT_HEADER: [&str; 10] = [
    "mode",
    "N",
    "T",
    "beta",
    "bound_value",
    "gradient_gap",
    "kl_value",
    "vacuous",
    "kl_upper_bound",
    "rate_quantity",
];

fn cert_row(mode: &str, b: &ExperimentBudget, c: &LowerBoundCertificate) -> Vec<String> {
    vec![
        mode.to_string(),
        b.n.to_string(),
        b.t.to_string(),
        fmt_float(b.beta),
        fmt_float(c.bound_value),
        fmt_float(c.gradient_gap),
        fmt_float(c.kl_value),
        c.vacuous.to_string(),
        fmt_opt(c.kl_upper_bound),
        fmt_opt(c.rate_quantity),
    ]
}

fn emit_certificate(
    out: &OutputArgs,
    stdout: &mut dyn Write,
    report: CertificateReport<'_>,
) -> CliResult<()> {
    let bytes = match out.format {
        Format::Json => json_line(&report),
        Format::Csv => csv_table(&CERT_HEADER, &[cert_row(report.mode, &report.budget, report.certificate)])?,
    };
    emit_to(out.output.as_deref(), stdout, &bytes)
}

/// `scale · u e₁ᵀ` with `u` the top left-singular vector of `P Acl Γ`, which
/// maximizes `‖ΔᵀP Acl Γ‖` over unit-norm `Δ` of rank one.
fn gap_direction(p: &Mat, acl: &Mat, gamma: &Mat, du: usize, scale: f64) -> Perturbation {
    let (_, u) = top_left_singular(&(p * acl * gamma));
    let mut delta = Mat::zeros(u.len(), du);
    delta.set_column(0, &(u * scale));
    Perturbation::new(delta)
}

/// `u wᵀ` with `w` spanning the left nullspace of `K⋆ᵀ` (so `ΔK⋆ = 0`) and `u` the
/// gap-maximizing direction.
fn nullspace_direction(p: &Mat, acl: &Mat, gamma: &Mat, k: &Mat) -> Perturbation {
    let (_, u) = top_left_singular(&(p * acl * gamma));
    let eig = (k * k.transpose()).symmetric_eigen();
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &v)| if v < best.1 { (i, v) } else { best });
    let w = eig.eigenvectors.column(imin).into_owned();
    Perturbation::new(u * w.transpose())
}

fn read_delta(args: &SystemCertArgs) -> CliResult<Option<Perturbation>> {
    args.delta
        .as_deref()
        .map(|p| read_matrix(p).map(Perturbation::new))
        .transpose()
}

fn system_parameters(args: &SystemCertArgs) -> serde_json::Value {
    json!({ "system": args.system.display().to_string() })
}

fn certificate(mode: &CertificateMode, stdout: &mut dyn Write) -> CliResult<()> {
    match mode {
        CertificateMode::Theorem1(args) => {
            let inst = SystemFile::read(&args.system)?.instance()?;
            let budget = args.budget.budget()?;
            let (sys, cost) = (&inst.system, &inst.cost);
            let delta = match read_delta(args)? {
                Some(d) => d,
                None => {
                    let (p, k) = solve_dare_optimal(sys, cost, DARE_TOL)?;
                    let gamma = closed_loop_gramian(sys, &k, DEFAULT_TOL)?;
                    let scale = args.delta_scale.unwrap_or(1.0 / (budget.beta * budget.total_steps()).sqrt());
                    gap_direction(&p.p, &sys.closed_loop(&k)?, &gamma.gamma, sys.input_dim(), scale)
                }
            };
            let policy = default_policy(sys, cost, &budget)?;
            let cert = lower_bound_theorem1(sys, cost, &delta, &policy, &budget)?;
            emit_certificate(&args.out, stdout, CertificateReport {
                mode: "theorem1",
                budget,
                parameters: system_parameters(args),
                certificate: &cert,
                lemma4: None,
            })
        }
        CertificateMode::Corollary1(args) => {
            let inst = SystemFile::read(&args.system)?.instance()?;
            let budget = args.budget.budget()?;
            let (sys, cost) = (&inst.system, &inst.cost);
            let delta = match read_delta(args)? {
                Some(d) => d,
                None => {
                    let (p, k) = solve_dare_optimal(sys, cost, DARE_TOL)?;
                    let gamma = closed_loop_gramian(sys, &k, DEFAULT_TOL)?;
                    nullspace_direction(&p.p, &sys.closed_loop(&k)?, &gamma.gamma, &k.gain)
                }
            };
            let cert = corollary_nullspace_bound(sys, cost, &budget, &delta)?;
            emit_certificate(&args.out, stdout, CertificateReport {
                mode: "corollary1",
                budget,
                parameters: system_parameters(args),
                certificate: &cert,
                lemma4: None,
            })
        }
        CertificateMode::Scalar { system, budget, out } => {
            let budget = budget.budget()?;
            let cert = scalar_lower_bound(system.a, system.b, system.q, system.r, system.sigma2, &budget)?;
            emit_certificate(out, stdout, CertificateReport {
                mode: "scalar",
                budget,
                parameters: json!({
                    "a": system.a, "b": system.b, "q": system.q, "r": system.r, "sigma2": system.sigma2
                }),
                certificate: &cert,
                lemma4: None,
            })
        }
        CertificateMode::Theorem2(args) => {
            let inst = SystemFile::read(&args.system)?.instance()?;
            let g: &OutputSystem = inst
                .output
                .as_ref()
                .ok_or_else(|| CliError::Validation("theorem2 needs C and SigmaV in the system file".into()))?;
            let budget = args.budget.budget()?;
            let cost = &inst.cost;
            let delta = match read_delta(args)? {
                Some(d) => d,
                None => {
                    let (p, k) = solve_dare_optimal(&g.state_feedback(), cost, DARE_TOL)?;
                    let gamma = innovation_gramian(g, &k, DEFAULT_TOL)?;
                    let scale = args.delta_scale.unwrap_or(1.0 / (budget.beta * budget.total_steps()).sqrt());
                    let acl = g.state_feedback().closed_loop(&k)?;
                    gap_direction(&p.p, &acl, &gamma.gamma, g.input_dim(), scale)
                }
            };
            let policy = default_policy_po(g, cost, &budget)?;
            let cert = lower_bound_theorem2(g, cost, &delta, &policy, &budget)?;
            emit_certificate(&args.out, stdout, CertificateReport {
                mode: "theorem2",
                budget,
                parameters: system_parameters(args),
                certificate: &cert,
                lemma4: None,
            })
        }
        CertificateMode::ScalarPo(args) => {
            let budget = args.budget.budget()?;
            let (b, c) = match args.m {
                Some(m) => {
                    if !(m > 0.0 && m.is_finite()) || !(args.s > 0.0 && args.s.is_finite()) {
                        return Err(CliError::Validation(format!(
                            "--m and --s must be positive, got m={m}, s={}",
                            args.s
                        )));
                    }
                    (m.sqrt() * args.s, m.sqrt() / args.s)
                }
                None => (args.b.unwrap_or(1.0), args.c.unwrap_or(1.0)),
            };
            let cert = scalar_po_bound(args.a, b, c, &budget)?;
            emit_certificate(&args.out, stdout, CertificateReport {
                mode: "scalar-po",
                budget,
                parameters: json!({ "a": args.a, "b": b, "c": c, "m": b * c }),
                certificate: &cert,
                lemma4: None,
            })
        }
        CertificateMode::Curse(args) => {
            let budget = args.budget.budget()?;
            let curse = dimension_curse_bound(args.dx, args.rho, &budget)?;
            emit_certificate(&args.out, stdout, CertificateReport {
                mode: "curse",
                budget,
                parameters: json!({ "dx": args.dx, "rho": args.rho }),
                certificate: &curse.certificate,
                lemma4: Some(&curse.lemma4),
            })
        }
    }
}

pub fn parse_methods(text: &str) -> CliResult<Vec<EstimatorMethod>> {
    let mut methods = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m = match item {
            "plugin" | "plugin_ls" => EstimatorMethod::PluginLs,
            "zeroth" | "zeroth_order" => EstimatorMethod::ZerothOrder,
            other => {
                return Err(CliError::Validation(format!(
                    "unknown estimator '{other}', expected plugin or zeroth"
                )))
            }
        };
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        return Err(CliError::Validation("--methods selects no estimator".into()));
    }
    Ok(methods)
}

pub fn load_figure1_config(args: &Figure1Args) -> CliResult<Figure1Config> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
            serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        }
        None => Figure1Config::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(methods) = &args.methods {
        config.methods = parse_methods(methods)?;
    }
    config.validate()?;
    Ok(config)
}

fn figure1(args: &Figure1Args, stdout: &mut dyn Write) -> CliResult<()> {
    let config = load_figure1_config(args)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers)
        .build()
        .map_err(|e| CliError::Validation(format!("--workers: {e}")))?;
    let result = pool.install(|| figure1_experiment(&config))?;
    write_atomic(&args.output, &figure1_csv(&result.rows)?)?;
    if let Some(svg) = &args.svg {
        write_atomic(svg, figure1_svg(&result.rows).as_bytes())?;
    }
    let summary = json!({
        "output": args.output.display().to_string(),
        "svg": args.svg.as_ref().map(|p| p.display().to_string()),
        "rows": result.rows.len(),
        "evaluation_gain": result.evaluation_gain,
        "seed": config.seed,
    });
    emit(stdout, &json_line(&summary))
}

/// `1, 10^-0.5, ..., 10^-3`.
fn default_log_grid() -> Vec<f64> {
    (0..7).map(|i| 10f64.powf(-0.5 * i as f64)).collect()
}

pub fn parse_grid(text: Option<&str>, default: Vec<f64>) -> CliResult<Vec<f64>> {
    let Some(text) = text else {
        return Ok(default);
    };
    let grid: Vec<f64> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| CliError::Validation(format!("grid entry '{s}' is not a number")))
        })
        .collect::<CliResult<_>>()?;
    if grid.is_empty() {
        return Err(CliError::Validation("grid is empty".into()));
    }
    Ok(grid)
}

fn sweep(kind: &SweepKind, stdout: &mut dyn Write) -> CliResult<()> {
    let (bytes, target) = match kind {
        SweepKind::BSweep { a, grid, budget, out } => {
            let grid = parse_grid(grid.as_deref(), default_log_grid())?;
            let budget = budget.budget()?;
            let rows = grid
                .iter()
                .map(|&b| {
                    let c = scalar_lower_bound(*a, b, 1.0, 1.0, 1.0, &budget)?;
                    Ok(vec![
                        fmt_float(b),
                        fmt_float(c.bound_value),
                        fmt_float(c.gradient_gap),
                        fmt_float(c.kl_value),
                        c.vacuous.to_string(),
                        fmt_opt(c.rate_quantity),
                    ])
                })
                .collect::<CliResult<Vec<_>>>()?;
            let header = ["b", "bound_value", "gradient_gap", "kl_value", "vacuous", "rate_quantity"];
            (csv_table(&header, &rows)?, out.output.clone())
        }
        SweepKind::Markov { a, s, grid, budget, out } => {
            let grid = parse_grid(grid.as_deref(), default_log_grid())?;
            let budget = budget.budget()?;
            let rows = markov_parameter_sweep(*a, &grid, *s, &budget)?
                .iter()
                .map(|r| {
                    vec![
                        fmt_float(r.m),
                        fmt_float(r.b),
                        fmt_float(r.c),
                        fmt_float(r.closed_form_bound),
                        fmt_float(r.bound_value),
                        fmt_float(r.kl_value),
                        r.vacuous.to_string(),
                    ]
                })
                .collect::<Vec<_>>();
            let header = ["m", "b", "c", "closed_form_bound", "bound_value", "kl_value", "vacuous"];
            (csv_table(&header, &rows)?, out.output.clone())
        }
        SweepKind::Dimension { rho, grid, budget, out } => {
            let grid = parse_grid(grid.as_deref(), vec![4.0, 5.0, 6.0, 7.0, 8.0])?;
            let budget = budget.budget()?;
            let mut prev: Option<f64> = None;
            let mut rows = Vec::new();
            for &d in &grid {
                if !(d >= 1.0 && d.fract() == 0.0) {
                    return Err(CliError::Validation(format!("state dimension must be a positive integer, got {d}")));
                }
                let c = dimension_curse_bound(d as usize, *rho, &budget)?;
                let bound = c.certificate.bound_value;
                rows.push(vec![
                    (d as usize).to_string(),
                    fmt_float(bound),
                    fmt_float(c.certificate.gradient_gap),
                    fmt_float(c.certificate.kl_value),
                    c.certificate.vacuous.to_string(),
                    fmt_float(c.lemma4.ratio()),
                    prev.map(|p| fmt_float(bound / p)).unwrap_or_default(),
                ]);
                prev = Some(bound);
            }
            let header = ["dx", "bound_value", "gradient_gap", "kl_value", "vacuous", "lemma4_ratio", "ratio"];
            (csv_table(&header, &rows)?, out.output.clone())
        }
    };
    emit_to(target.as_deref(), stdout, &bytes)
}
