use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use s3geo::action::ActionBranch;
use s3geo::cli::{
    cmd_action, cmd_action_scan, cmd_connect, cmd_distance, cmd_geodesic, cmd_kernel, cmd_kernel_scan, cmd_verify,
    exit_code, ActionRequest, CommandOutput, ConfigLayer, Format, GeodesicSpec, RunConfig,
};
use s3geo::geodesics_cartesian::GeodesicParams;
use s3geo::kernel::KernelConfig;
use s3geo::s3_core::{from_hyper, HyperPoint, S3Point};
use s3geo::{Error, Result};

#[derive(Parser)]
#[command(name = "s3geo", version, about = "Sub-Riemannian geodesics, actions and heat-kernel quadrature on S^3")]
struct Cli {
    #[command(flatten)]
    global: GlobalFlags,
    #[command(subcommand)]
    command: Command,
}

/// Settings that override the config file, which overrides the defaults.
#[derive(Args)]
struct GlobalFlags {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<String>,
    #[arg(long, global = true)]
    rtol: Option<f64>,
    #[arg(long, global = true)]
    atol: Option<f64>,
    #[arg(long, global = true)]
    fd_step: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    n_min: Option<i32>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    n_max: Option<i32>,
    #[arg(long, global = true)]
    chart_eps: Option<f64>,
    /// json or csv.
    #[arg(long, global = true)]
    format: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Vertical scale of the hyperspherical model.
    #[arg(long, global = true)]
    kappa: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a geodesic from the identity.
    Geodesic(GeodesicArgs),
    /// Enumerate geodesics from the identity to an endpoint.
    Connect(ConnectArgs),
    /// Distance from the base point through the critical action.
    Distance(DistanceArgs),
    /// Modified action, or a scan of the restricted action in tau.
    Action(ActionArgs),
    /// Heat-kernel quadrature with a constant volume element.
    Kernel(KernelArgs),
    /// Run a randomized invariant suite.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GeodesicArgs {
    #[arg(long = "B", allow_hyphen_values = true, required_unless_present = "vertical")]
    b: Option<f64>,
    #[arg(long = "C", allow_hyphen_values = true, required_unless_present = "vertical")]
    c: Option<f64>,
    #[arg(long = "D", allow_hyphen_values = true, required_unless_present = "vertical")]
    d: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    t: f64,
    /// Member of the family reaching `(cos omega, sin omega, 0, 0)`.
    #[arg(long, requires_all = ["omega", "n"], conflicts_with_all = ["b", "c", "d"])]
    vertical: bool,
    #[arg(long, allow_hyphen_values = true)]
    omega: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    n: Option<i32>,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// CSV path; the sidecar goes to `<out>.json`.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct ConnectArgs {
    /// Endpoint `x1,x2,x3,x4`, or `zeta1,zeta2,eta` with `--hyper`.
    #[arg(long, allow_hyphen_values = true)]
    point: String,
    #[arg(long)]
    hyper: bool,
}

#[derive(Args)]
struct DistanceArgs {
    /// Target `zeta1,zeta2,eta`.
    #[arg(long, allow_hyphen_values = true)]
    target: String,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
    eta0: f64,
}

#[derive(Args)]
struct ActionArgs {
    /// Target `zeta1,zeta2,eta`.
    #[arg(long, allow_hyphen_values = true)]
    target: String,
    /// Momenta `psi1,psi2`.
    #[arg(long, allow_hyphen_values = true, required_unless_present = "scan")]
    psi: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    sign: i8,
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Compare the closed form with quadrature.
    #[arg(long)]
    cross_check: bool,
    /// Scan the restricted action over tau instead.
    #[arg(long, value_parser = ["tau"])]
    scan: Option<String>,
    #[arg(long, default_value_t = 0.01)]
    tau_min: f64,
    #[arg(long, default_value_t = 2.0)]
    tau_max: f64,
    #[arg(long, default_value_t = 200)]
    steps: usize,
}

#[derive(Args)]
struct KernelArgs {
    /// Target `zeta1,zeta2,eta`.
    #[arg(long, allow_hyphen_values = true)]
    target: String,
    #[arg(long, default_value_t = 1.0)]
    u: f64,
    #[arg(long, default_value_t = 2.0)]
    q: f64,
    #[arg(long, default_value_t = 1.0)]
    c_norm: f64,
    /// Half-width of the tau window.
    #[arg(long)]
    truncation: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pole_exclusion: f64,
    /// Relative tolerance of the quadrature and the window-doubling check.
    #[arg(long, default_value_t = 1e-8)]
    kernel_rtol: f64,
    /// Value of the constant volume element.
    #[arg(long, default_value_t = 1.0)]
    volume: f64,
    /// Scan over comma-separated values of u instead.
    #[arg(long, value_parser = ["u"])]
    scan: Option<String>,
    #[arg(long)]
    values: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    suite: String,
    #[arg(long, default_value_t = 50)]
    count: usize,
}

fn parse_list(s: &str, len: Option<usize>) -> Result<Vec<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| Error::DomainError(format!("cannot parse '{x}' as a number"))))
        .collect::<Result<_>>()?;
    match len {
        Some(n) if v.len() != n => Err(Error::DomainError(format!("expected {n} comma-separated numbers in '{s}'"))),
        _ => Ok(v),
    }
}

fn parse_hyper(s: &str) -> Result<HyperPoint> {
    let v = parse_list(s, Some(3))?;
    Ok(HyperPoint { zeta1: v[0], zeta2: v[1], eta: v[2] })
}

fn resolve_config(g: &GlobalFlags) -> Result<RunConfig> {
    let file = match &g.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::InvalidConfig(format!("cannot read config file {path}: {e}")))?;
            Some(ConfigLayer::parse(&text)?)
        }
        None => None,
    };
    let flags = ConfigLayer {
        rtol: g.rtol,
        atol: g.atol,
        fd_step: g.fd_step,
        n_min: g.n_min,
        n_max: g.n_max,
        chart_eps: g.chart_eps,
        format: g.format.as_deref().map(str::parse::<Format>).transpose()?,
        seed: g.seed,
        kappa: g.kappa,
    };
    RunConfig::resolve(file.as_ref(), &flags)
}

fn run(cli: Cli) -> Result<CommandOutput> {
    let cfg = resolve_config(&cli.global)?;
    match cli.command {
        Command::Geodesic(a) => {
            let spec = if a.vertical {
                GeodesicSpec::Vertical { omega: a.omega.unwrap_or_default(), t: a.t, n: a.n.unwrap_or_default() }
            } else {
                GeodesicSpec::Params(GeodesicParams {
                    b: a.b.unwrap_or_default(),
                    c: a.c.unwrap_or_default(),
                    d: a.d.unwrap_or_default(),
                    t: a.t,
                })
            };
            cmd_geodesic(&cfg, &spec, a.samples, a.out.as_deref())
        }
        Command::Connect(a) => {
            let target = if a.hyper {
                from_hyper(&parse_hyper(&a.point)?)
            } else {
                let v = parse_list(&a.point, Some(4))?;
                S3Point::new([v[0], v[1], v[2], v[3]])?
            };
            cmd_connect(&cfg, &target)
        }
        Command::Distance(a) => cmd_distance(&cfg, &parse_hyper(&a.target)?, a.eta0),
        Command::Action(a) => {
            let target = parse_hyper(&a.target)?;
            if a.scan.is_some() {
                return cmd_action_scan(&cfg, &target, a.tau_min, a.tau_max, a.steps);
            }
            let psi = parse_list(a.psi.as_deref().unwrap_or_default(), Some(2))?;
            if a.sign != 1 && a.sign != -1 {
                return Err(Error::DomainError("sign must be 1 or -1".into()));
            }
            let req = ActionRequest {
                target,
                psi: (psi[0], psi[1]),
                t: a.t,
                branch: ActionBranch { sign: a.sign, index: a.index },
                cross_check: a.cross_check,
            };
            cmd_action(&cfg, &req)
        }
        Command::Kernel(a) => {
            let target = parse_hyper(&a.target)?;
            let kc = KernelConfig {
                u: a.u,
                q: a.q,
                c_norm: a.c_norm,
                tau_truncation: a.truncation,
                pole_exclusion: a.pole_exclusion,
                rtol: a.kernel_rtol,
                kappa: cfg.kappa,
            };
            if a.scan.is_some() {
                let values = a.values.ok_or_else(|| Error::DomainError("--scan u needs --values".into()))?;
                return cmd_kernel_scan(&cfg, &kc, &target, a.volume, &parse_list(&values, None)?);
            }
            cmd_kernel(&cfg, &kc, &target, a.volume)
        }
        Command::Verify(a) => cmd_verify(&cfg, &a.suite, a.count),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            for (path, bytes) in &out.files {
                if let Err(e) = std::fs::write(path, bytes) {
                    eprintln!("error: cannot write {path}: {e}");
                    return ExitCode::from(2);
                }
            }
            print!("{}", out.stdout);
            ExitCode::from(out.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
