//! Configuration, structured output and the command bodies behind the `s3geo` binary.
//! Every command returns its complete output as a string so that runs are reproducible
//! byte for byte and can be checked without spawning a process.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fmt::Write as _;
use std::io;

use serde::Serialize;
use serde_json::{json, Value};

use crate::action::{
    distance, modified_action, restricted_action, restricted_poles, restricted_radius,
    ActionBranch, ActionOptions, DistanceOptions,
};
use crate::error::{Error, Result};
use crate::geodesics_cartesian::{
    arc_length, connect, enumerate_vertical, geodesic_cotangent_lift, geodesic_point, geodesic_velocity,
    GeodesicParams, CURVATURE_GRID,
};
use crate::geodesics_hyperspherical::{BvpOptions, HyperModel};
use crate::hamiltonian::{integrate, IntegrateOptions};
use crate::kernel::{kernel_quadrature, ConstantVolume, KernelConfig};
use crate::ode::OdeOptions;
use crate::s3_core::{max_abs_diff, velocity_decompose, HyperPoint, S3Point};
use crate::verify::run_suite;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Largest endpoint miss, closed form or shooting, of a connecting geodesic marked verified.
pub const SHOOTING_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(Error::InvalidConfig(format!("format must be json or csv, got '{other}'"))),
        }
    }
}

/// Settings shared by all commands. `fd_step` is recorded for provenance; the library
/// checks use their fixed calibrated step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub rtol: f64,
    pub atol: f64,
    pub fd_step: f64,
    pub n_min: i32,
    pub n_max: i32,
    pub chart_eps: f64,
    pub format: Format,
    pub seed: u64,
    pub kappa: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            rtol: 1e-10,
            atol: 1e-12,
            fd_step: 1e-5,
            n_min: -8,
            n_max: 8,
            chart_eps: 1e-8,
            format: Format::Json,
            seed: 0,
            kappa: 4.0,
        }
    }
}

/// Partial settings from one source; later layers override earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigLayer {
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub fd_step: Option<f64>,
    pub n_min: Option<i32>,
    pub n_max: Option<i32>,
    pub chart_eps: Option<f64>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
    pub kappa: Option<f64>,
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::InvalidConfig(format!("cannot parse {key} = '{v}'")))
}

impl ConfigLayer {
    /// Flat `key = value` lines; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut layer = ConfigLayer::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "rtol" => layer.rtol = Some(parse_value(k, v)?),
                "atol" => layer.atol = Some(parse_value(k, v)?),
                "fd_step" => layer.fd_step = Some(parse_value(k, v)?),
                "n_min" => layer.n_min = Some(parse_value(k, v)?),
                "n_max" => layer.n_max = Some(parse_value(k, v)?),
                "chart_eps" => layer.chart_eps = Some(parse_value(k, v)?),
                "format" => layer.format = Some(v.parse()?),
                "seed" => layer.seed = Some(parse_value(k, v)?),
                "kappa" => layer.kappa = Some(parse_value(k, v)?),
                other => return Err(Error::InvalidConfig(format!("line {}: unknown key '{other}'", i + 1))),
            }
        }
        Ok(layer)
    }

    fn apply(&self, c: &mut RunConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(rtol, atol, fd_step, n_min, n_max, chart_eps, format, seed, kappa);
    }
}

impl RunConfig {
    /// Defaults, then the file layer, then the flag layer.
    pub fn resolve(file: Option<&ConfigLayer>, flags: &ConfigLayer) -> Result<Self> {
        let mut c = RunConfig::default();
        if let Some(f) = file {
            f.apply(&mut c);
        }
        flags.apply(&mut c);
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("rtol", self.rtol), ("atol", self.atol), ("fd_step", self.fd_step), ("chart_eps", self.chart_eps)];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} = {v} must be positive")));
            }
        }
        if self.n_min > self.n_max {
            return Err(Error::InvalidConfig(format!("n_min = {} exceeds n_max = {}", self.n_min, self.n_max)));
        }
        HyperModel::new(self.kappa).map(|_| ())
    }

    fn model(&self) -> HyperModel {
        HyperModel { kappa: self.kappa }
    }

    fn check_eta(&self, eta: f64) -> Result<()> {
        if eta > self.chart_eps && eta < FRAC_PI_2 - self.chart_eps {
            Ok(())
        } else {
            Err(Error::ChartBoundary { eta })
        }
    }
}

/// Writes every float with 17 significant digits so values round-trip exactly.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{v:.16e}")
    }
}

pub fn to_json(v: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
    v.serialize(&mut ser).expect("in-memory serialization");
    String::from_utf8(buf).expect("serde_json writes UTF-8") + "\n"
}

fn envelope(cfg: &RunConfig, command: &str, body: Value) -> Value {
    json!({
        "version": VERSION,
        "command": command,
        "config": serde_json::to_value(cfg).expect("plain struct"),
        "result": body,
    })
}

fn csv_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        String::new()
    }
}

/// Output of one command: the primary text and its exit code; side files come back with
/// their paths so the caller decides where bytes land.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub stdout: String,
    pub files: BTreeMap<String, String>,
    pub code: i32,
}

impl CommandOutput {
    fn ok(stdout: String) -> Self {
        CommandOutput { stdout, files: BTreeMap::new(), code: 0 }
    }
}

/// Exit status for a library error: 3 when no solution exists in range, 1 when a numerical
/// invariant could not be met, 2 for everything the caller can fix.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NoSolutionInBranchRange { .. } | Error::NoCriticalPointFound => 3,
        Error::NonConvergent { .. }
        | Error::StepSizeUnderflow { .. }
        | Error::BranchMismatch { .. }
        | Error::BranchInconsistency { .. }
        | Error::IllConditioned { .. } => 1,
        _ => 2,
    }
}

pub enum GeodesicSpec {
    Params(GeodesicParams),
    Vertical { omega: f64, t: f64, n: i32 },
}

pub fn cmd_geodesic(cfg: &RunConfig, spec: &GeodesicSpec, samples: usize, out: Option<&str>) -> Result<CommandOutput> {
    if samples < 2 {
        return Err(Error::DomainError("samples must be at least 2".into()));
    }
    let (params, vertical) = match *spec {
        GeodesicSpec::Params(p) => {
            if !(p.t > 0.0) {
                return Err(Error::DomainError(format!("t = {} must be positive", p.t)));
            }
            (p, None)
        }
        GeodesicSpec::Vertical { omega, t, n } => {
            let v = enumerate_vertical(omega, t, n)?;
            (v.params, Some(v))
        }
    };
    let mut csv = String::from("s,x1,x2,x3,x4,defect\n");
    let mut defect = 0.0f64;
    let mut norm = 0.0f64;
    let mut last = S3Point::IDENTITY;
    for i in 0..=samples {
        let s = params.t * i as f64 / samples as f64;
        let x = geodesic_point(&params, s)?;
        let d = velocity_decompose(&x, &geodesic_velocity(&params, s)?).c.abs();
        defect = defect.max(d);
        let c = x.coords();
        norm = norm.max((c.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs());
        let _ = writeln!(csv, "{},{},{},{},{},{}", csv_float(s), csv_float(c[0]), csv_float(c[1]), csv_float(c[2]),
            csv_float(c[3]), csv_float(d));
        last = x;
    }
    let mut body = json!({
        "params": {"b": params.b, "c": params.c, "d": params.d, "t": params.t},
        "length": arc_length(&params)?,
        "hamiltonian": params.energy(),
        "max_horizontality_defect": defect,
        "max_norm_error": norm,
        "endpoint": last.coords().to_vec(),
        "samples": samples + 1,
    });
    if let Some(v) = vertical {
        body["vertical"] = json!({
            "n": v.n,
            "omega_hat": v.omega_hat,
            "length": v.length,
            "nominal_length": v.nominal_length,
        });
    }
    let sidecar = to_json(&envelope(cfg, "geodesic", body));
    let mut output = CommandOutput::ok(String::new());
    match out {
        Some(path) => {
            output.files.insert(path.to_string(), csv);
            output.files.insert(format!("{path}.json"), sidecar.clone());
            output.stdout = sidecar;
        }
        None if cfg.format == Format::Csv => output.stdout = csv,
        None => output.stdout = sidecar,
    }
    Ok(output)
}

fn shooting_error(cfg: &RunConfig, p: &GeodesicParams, target: &S3Point) -> Result<f64> {
    let opts = IntegrateOptions {
        ode: OdeOptions { rtol: cfg.rtol, atol: cfg.atol, ..OdeOptions::default() },
        samples: 1,
        renormalize: false,
    };
    let tr = integrate(&geodesic_cotangent_lift(p, 0.0)?, p.t, &opts)?;
    let end = tr.samples.last().expect("integrate returns the end point").1.x;
    Ok(max_abs_diff(&end, &target.coords()))
}

pub fn cmd_connect(cfg: &RunConfig, target: &S3Point) -> Result<CommandOutput> {
    let sols = connect(target, cfg.n_min, cfg.n_max, CURVATURE_GRID)?;
    if sols.is_empty() {
        return Err(Error::NoSolutionInBranchRange { n_min: cfg.n_min, n_max: cfg.n_max });
    }
    let mut list = Vec::new();
    for (i, s) in sols.iter().enumerate() {
        let shoot = shooting_error(cfg, &s.params, target)?;
        list.push(json!({
            "label": s.label,
            "params": {"b": s.params.b, "c": s.params.c, "d": s.params.d, "t": s.params.t},
            "length": s.length,
            "endpoint_error": s.endpoint_error,
            "shooting_error": shoot,
            "verified": s.endpoint_error.max(shoot) < SHOOTING_TOL,
            "minimizer": i == 0,
        }));
    }
    let body = json!({"target": target.coords().to_vec(), "solutions": list});
    Ok(CommandOutput::ok(to_json(&envelope(cfg, "connect", body))))
}

pub fn cmd_distance(cfg: &RunConfig, target: &HyperPoint, eta0: f64) -> Result<CommandOutput> {
    cfg.check_eta(target.eta)?;
    cfg.check_eta(eta0)?;
    let opts = DistanceOptions {
        bvp: BvpOptions { n_min: cfg.n_min, n_max: cfg.n_max, ..BvpOptions::default() },
        ..DistanceOptions::default()
    };
    let d = distance(&cfg.model(), target, eta0, &opts)?;
    let body = json!({
        "target": [target.zeta1, target.zeta2, target.eta],
        "eta0": eta0,
        "distance": d.distance,
        "length": d.length,
        "psi1": d.psi1,
        "psi2": d.psi2,
        "n": d.branch.index,
        "sign": d.branch.sign,
        "H": d.hamiltonian,
        "candidates": d.candidates,
        "residuals": {"critical": d.critical_residual.to_vec(), "hj": d.hj_residual},
    });
    Ok(CommandOutput::ok(to_json(&envelope(cfg, "distance", body))))
}

pub struct ActionRequest {
    pub target: HyperPoint,
    pub psi: (f64, f64),
    pub t: f64,
    pub branch: ActionBranch,
    pub cross_check: bool,
}

pub fn cmd_action(cfg: &RunConfig, req: &ActionRequest) -> Result<CommandOutput> {
    cfg.check_eta(req.target.eta)?;
    let opts = ActionOptions { cross_check: req.cross_check, ..ActionOptions::default() };
    let p = &req.target;
    let ev = modified_action(&cfg.model(), p.zeta1, p.zeta2, FRAC_PI_4, p.eta, req.psi.0, req.psi.1, req.t, req.branch,
        &opts)?;
    let body = json!({
        "target": [p.zeta1, p.zeta2, p.eta],
        "psi": [req.psi.0, req.psi.1],
        "t": req.t,
        "branch": {"sign": req.branch.sign, "index": req.branch.index},
        "value": ev.value,
        "a_branch": ev.a_branch,
        "method": format!("{:?}", ev.method),
        "grad": ev.grad.map(|g| g.to_vec()),
        "cross_check_error": ev.cross_check_error,
    });
    Ok(CommandOutput::ok(to_json(&envelope(cfg, "action", body))))
}

/// `τ ↦ (A, f, distance to the nearest pole)` for the restricted action, `A` with the
/// principal arctan and `f` continued through the poles. Failed evaluations are left empty.
pub fn cmd_action_scan(cfg: &RunConfig, target: &HyperPoint, tau_min: f64, tau_max: f64, steps: usize) -> Result<CommandOutput> {
    cfg.check_eta(target.eta)?;
    if !(tau_min > 0.0 && tau_max > tau_min) || steps == 0 {
        return Err(Error::DomainError("need 0 < tau_min < tau_max and steps > 0".into()));
    }
    let model = cfg.model();
    let poles = restricted_poles(&model, target.eta, tau_max + 1.0)?;
    let taus: Vec<f64> = (0..=steps).map(|i| tau_min + (tau_max - tau_min) * i as f64 / steps as f64).collect();
    let rows: Vec<[f64; 4]> = taus
        .iter()
        .map(|&tau| {
            let a = restricted_radius(&model, tau, target.eta).map_or(f64::NAN, |r| r * r);
            let f = restricted_action(&model, tau, target.zeta1, target.zeta2, target.eta).unwrap_or(f64::NAN);
            let gap = poles.iter().map(|p| (p - tau).abs()).fold(f64::INFINITY, f64::min);
            [tau, a, f, gap]
        })
        .collect();
    let stdout = match cfg.format {
        Format::Csv => {
            let mut s = String::from("tau,A,f,pole_distance\n");
            for r in &rows {
                let _ = writeln!(s, "{},{},{},{}", csv_float(r[0]), csv_float(r[1]), csv_float(r[2]), csv_float(r[3]));
            }
            s
        }
        Format::Json => {
            let body = json!({
                "target": [target.zeta1, target.zeta2, target.eta],
                "poles": poles,
                "rows": rows.iter().map(|r| json!({"tau": r[0], "A": r[1], "f": r[2], "pole_distance": r[3]})).collect::<Vec<_>>(),
            });
            to_json(&envelope(cfg, "action", body))
        }
    };
    Ok(CommandOutput::ok(stdout))
}

pub fn cmd_kernel(cfg: &RunConfig, kc: &KernelConfig, target: &HyperPoint, volume: f64) -> Result<CommandOutput> {
    cfg.check_eta(target.eta)?;
    let r = kernel_quadrature(kc, target, &ConstantVolume(volume))?;
    let body = json!({
        "target": [target.zeta1, target.zeta2, target.eta],
        "u": kc.u,
        "q": kc.q,
        "volume": volume,
        "value": r.value,
        "error_estimate": r.error_estimate,
        "abs_integral": r.abs_integral,
        "truncation": r.truncation,
        "pole_count": r.pole_count,
        "window_change": r.window_change,
        "exclusion_change": r.exclusion_change,
    });
    Ok(CommandOutput::ok(to_json(&envelope(cfg, "kernel", body))))
}

/// Kernel values over several `u`, evaluated on worker threads and assembled in input order.
pub fn cmd_kernel_scan(cfg: &RunConfig, kc: &KernelConfig, target: &HyperPoint, volume: f64, us: &[f64]) -> Result<CommandOutput> {
    cfg.check_eta(target.eta)?;
    if us.is_empty() {
        return Err(Error::DomainError("scan needs at least one u".into()));
    }
    let results: Vec<Result<(f64, f64)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = us
            .iter()
            .map(|&u| {
                scope.spawn(move || {
                    let r = kernel_quadrature(&KernelConfig { u, ..*kc }, target, &ConstantVolume(volume))?;
                    Ok((r.value, r.error_estimate))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("kernel worker panicked")).collect()
    });
    let rows: Vec<(f64, f64, f64)> =
        us.iter().zip(results).map(|(&u, r)| r.map(|(v, e)| (u, v, e))).collect::<Result<_>>()?;
    let stdout = match cfg.format {
        Format::Csv => {
            let mut s = String::from("u,value,error_estimate\n");
            for (u, v, e) in &rows {
                let _ = writeln!(s, "{},{},{}", csv_float(*u), csv_float(*v), csv_float(*e));
            }
            s
        }
        Format::Json => {
            let body = json!({
                "target": [target.zeta1, target.zeta2, target.eta],
                "rows": rows.iter().map(|(u, v, e)| json!({"u": u, "value": v, "error_estimate": e})).collect::<Vec<_>>(),
            });
            to_json(&envelope(cfg, "kernel", body))
        }
    };
    Ok(CommandOutput::ok(stdout))
}

pub fn cmd_verify(cfg: &RunConfig, suite: &str, count: usize) -> Result<CommandOutput> {
    let report = run_suite(suite, cfg.seed, count)?;
    let pass = report.pass;
    let body = serde_json::to_value(&report).expect("plain struct");
    let mut out = CommandOutput::ok(to_json(&envelope(cfg, "verify", body)));
    out.code = if pass { 0 } else { 1 };
    Ok(out)
}
