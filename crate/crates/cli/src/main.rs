mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use surfdiff::diagnostics::{counterexample_phi_eps, diagnose, DiagnoseOptions};
use surfdiff::fd::Stencil;
use surfdiff::grid::{read_two_columns, write_columns};
use surfdiff::mild::{reconstruct_U, reconstruct_on, self_similarity_residual, solve_similarity_profile, CornerData, SimilarityProfile, SolverConfig};
use surfdiff::oracle::{corner_initial_height, corner_initial_slope, derivative_march, time_march, MarchConfig};
use surfdiff::semigroup::regularizing_constants;
use surfdiff::surface_calculus::{geometry_with, geometry_with_slope};
use surfdiff::{Error, FarField, GridFunction, KernelConfig, KernelTable, UniformGrid};

#[derive(Parser, Debug)]
#[command(name = "surfdiff", version, about = "Self-similar corner solutions of planar surface diffusion", args_override_self = true)]
struct Cli {
    /// output root; every command writes below it
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// `key = value` file mirroring the long flags; its values win over the command line
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate the biharmonic heat kernel and its derivatives
    Kernel(KernelArgs),
    /// Compute the self-similar profile for corner data and reconstruct heights
    Solve(SolveArgs),
    /// Run the geometric diagnostics on a profile
    Diagnose(DiagnoseArgs),
    /// Compare the mild solution against direct time stepping
    OracleCompare(OracleArgs),
}

#[derive(Args, Debug, Clone)]
struct KernelArgs {
    #[arg(long, default_value_t = 40.0)]
    eta_max: f64,
    #[arg(long, default_value_t = 8192)]
    nodes: usize,
    #[arg(long, default_value_t = 1e-14)]
    quad_tol: f64,
}

impl KernelArgs {
    fn config(&self) -> KernelConfig {
        KernelConfig { eta_max: self.eta_max, n_nodes: self.nodes, quad_tol: self.quad_tol }
    }
}

#[derive(Args, Debug, Clone)]
struct TableArgs {
    #[arg(long, default_value_t = 40.0)]
    eta_max: f64,
    #[arg(long, default_value_t = 8192)]
    kernel_nodes: usize,
}

impl TableArgs {
    fn build(&self) -> surfdiff::Result<KernelTable> {
        KernelTable::build(KernelConfig { eta_max: self.eta_max, n_nodes: self.kernel_nodes, ..KernelConfig::default() })
    }
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    a: f64,
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    b: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    #[arg(long, default_value_t = 64)]
    quad_nodes: usize,
    #[arg(long, default_value_t = 0.3)]
    slope_cap: f64,
    #[arg(long, default_value_t = 40.0)]
    half_width: f64,
    #[arg(long, default_value_t = 8192)]
    nodes: usize,
    #[command(flatten)]
    table: TableArgs,
}

impl SolverArgs {
    fn corner(&self) -> CornerData {
        CornerData::new(self.a, self.b)
    }

    fn config(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            quad_nodes: self.quad_nodes,
            slope_cap: self.slope_cap,
            half_width: self.half_width,
            nodes: self.nodes,
        }
    }

    fn json(&self) -> Value {
        json!({
            "a": self.a, "b": self.b, "tol": self.tol, "max_iter": self.max_iter,
            "quad_nodes": self.quad_nodes, "slope_cap": self.slope_cap,
            "half_width": self.half_width, "nodes": self.nodes,
            "eta_max": self.table.eta_max, "kernel_nodes": self.table.kernel_nodes,
        })
    }
}

#[derive(Args, Debug, Clone)]
struct SolveArgs {
    #[command(flatten)]
    solver: SolverArgs,
    /// times at which the height is reconstructed
    #[arg(long, value_delimiter = ',', default_value = "0.1,1,10")]
    times: Vec<f64>,
    /// parameter sweep `a=start:step:end` (or `b=...`), one run per value
    #[arg(long)]
    sweep: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StencilArg {
    Second,
    Fourth,
}

impl From<StencilArg> for Stencil {
    fn from(s: StencilArg) -> Self {
        match s {
            StencilArg::Second => Stencil::Second,
            StencilArg::Fourth => Stencil::Fourth,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct DiagnoseArgs {
    /// height CSV with columns `x,phi` (header required)
    #[arg(long, conflicts_with_all = ["from_solve", "counterexample"])]
    profile: Option<PathBuf>,
    /// solve for the corner given by `--a/--b` and diagnose `U(·,1)`
    #[arg(long)]
    from_solve: bool,
    /// the flattened-corner graph with a plateau of half-width `--eps`
    #[arg(long)]
    counterexample: bool,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 4.0)]
    extent: f64,
    #[arg(long)]
    mollified: bool,
    #[arg(long, value_enum, default_value = "second")]
    stencil: StencilArg,
    #[arg(long, default_value_t = 1e-4)]
    identity_tol: f64,
    #[arg(long, default_value_t = 1e-10)]
    inequality_tol: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    esp_alpha: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    esp_beta: f64,
    #[arg(long, allow_hyphen_values = true)]
    l1_slope: Option<f64>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug, Clone)]
struct OracleArgs {
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 20.0)]
    march_half_width: f64,
    #[arg(long, default_value_t = 2048)]
    march_nodes: usize,
    #[arg(long, default_value_t = 1e-7)]
    dt_min: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt_max: f64,
    #[arg(long, default_value_t = 8.0)]
    mollify_cells: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1")]
    snapshots: Vec<f64>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::PicardDivergence { .. }
        | Error::NoConvergence { .. }
        | Error::OracleInstability { .. }
        | Error::KernelQuadratureFailure { .. }
        | Error::NonFiniteGeometry { .. }
        | Error::StaleProfile => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let argv = match config::resolve_argv(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let out = cli.out_dir.clone();
    let result = match &cli.command {
        Command::Kernel(a) => cmd_kernel(a, &out),
        Command::Solve(a) => cmd_solve(a, &out),
        Command::Diagnose(a) => cmd_diagnose(a, &out),
        Command::OracleCompare(a) => cmd_oracle_compare(a, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn cmd_kernel(args: &KernelArgs, out: &Path) -> surfdiff::Result<()> {
    let table = KernelTable::build(args.config())?;
    let dir = out.join("kernel");
    std::fs::create_dir_all(&dir)?;
    table.write_csv(&dir.join("kernel.csv"))?;
    let g0 = table.g(0, 0.0);
    let exact = surfdiff::semigroup::g_at_origin();
    let fit_grid = UniformGrid::centered(20.0, 4096)?;
    let mut fits = Vec::new();
    for ell in 1..=2 {
        fits.push(regularizing_constants(&table, ell, (1e-2, 1e2), 9, fit_grid)?);
    }
    println!("g(0)        = {g0:.12}  (Gamma(5/4)/pi = {exact:.12})");
    println!("integral g  = {:.12}", table.mass());
    for f in &fits {
        println!("decay l={}   exponent {:+.5}  constant {:.6}", f.ell, f.exponent, f.constant);
    }
    let summary = json!({ "g0": g0, "g0_exact": exact, "mass": table.mass(), "regularizing": fits });
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    manifest::write(&dir, "kernel", json!({ "eta_max": args.eta_max, "nodes": args.nodes, "quad_tol": args.quad_tol }))
}

fn parse_sweep(spec: &str) -> surfdiff::Result<(String, Vec<f64>)> {
    let bad = || Error::Config(format!("sweep must look like a=start:step:end, got {spec:?}"));
    let (key, range) = spec.split_once('=').ok_or_else(bad)?;
    let key = key.trim().to_lowercase();
    if key != "a" && key != "b" {
        return Err(Error::Config(format!("can only sweep a or b, not {key:?}")));
    }
    let parts: Vec<f64> = range.split(':').map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_, _>>()?;
    let [start, step, end] = parts[..] else { return Err(bad()) };
    if !(step > 0.0) || end < start {
        return Err(bad());
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    Ok((key, (0..count).map(|i| start + i as f64 * step).collect()))
}

fn cmd_solve(args: &SolveArgs, out: &Path) -> surfdiff::Result<()> {
    for &t in &args.times {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidTime(t));
        }
    }
    let table = args.solver.table.build()?;
    let Some(spec) = &args.sweep else {
        let dir = out.join("solve");
        return solve_one(&args.solver, &args.times, &table, &dir);
    };
    let (key, values) = parse_sweep(spec)?;
    let root = out.join("sweep");
    std::fs::create_dir_all(&root)?;
    let runs: Vec<(f64, surfdiff::Result<()>)> = values
        .par_iter()
        .map(|&v| {
            let mut s = args.solver.clone();
            if key == "a" {
                s.a = v;
            } else {
                s.b = v;
            }
            (v, solve_one(&s, &args.times, &table, &root.join(format!("{key}={v}"))))
        })
        .collect();
    let mut rows = Vec::new();
    let mut first_err = None;
    for (v, r) in runs {
        let status = match &r {
            Ok(()) => "ok".to_string(),
            Err(e) => e.to_string(),
        };
        println!("{key} = {v:<8} {status}");
        rows.push(json!({ key.as_str(): v, "status": status }));
        if let Err(e) = r {
            first_err.get_or_insert(e);
        }
    }
    std::fs::write(root.join("sweep.json"), serde_json::to_string_pretty(&rows)?)?;
    manifest::write(&root, "solve --sweep", json!({ "sweep": spec, "times": args.times, "solver": args.solver.json() }))?;
    first_err.map_or(Ok(()), Err)
}

fn solve_one(args: &SolverArgs, times: &[f64], table: &KernelTable, dir: &Path) -> surfdiff::Result<()> {
    std::fs::create_dir_all(dir)?;
    let corner = args.corner();
    let profile = match solve_similarity_profile(corner, args.config(), table) {
        Ok(p) => p,
        Err(e) => {
            if let Error::PicardDivergence { history } = &e {
                let iters: Vec<f64> = (1..=history.len()).map(|i| i as f64).collect();
                write_columns(&dir.join("history.csv"), &["iteration", "update"], &[&iters, history])?;
            }
            return Err(e);
        }
    };
    profile.write(dir)?;
    let mut solutions = Vec::new();
    for &t in times {
        let sol = reconstruct_U(&profile, t, table)?;
        sol.write_csv(&dir.join(format!("U_t{t}.csv")))?;
        solutions.push(json!({ "t": t, "slope_mismatch": sol.slope_mismatch, "distance_to_data": sol.distance_to_data() }));
    }
    let mut residuals = Vec::new();
    for sigma in [0.5, 2.0] {
        residuals.push(json!({ "sigma": sigma, "t": 1.0, "residual": self_similarity_residual(&profile, sigma, 1.0, table)? }));
    }
    let origin = profile.psi.grid().origin_index().expect("centered grid");
    let u1 = reconstruct_U(&profile, 1.0, table)?;
    let mut notes = Vec::new();
    if corner.is_linear() {
        notes.push(format!("A = -B: the data are a line, the profile is the constant slope {}", corner.a));
    }
    let meta = json!({
        "a": corner.a,
        "b": corner.b,
        "iterations": profile.iterations,
        "residual_history": profile.residual_history,
        "phi0": u1.u.ys[origin],
        "reconstructions": solutions,
        "self_similarity": residuals,
        "notes": notes,
    });
    std::fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&meta)?)?;
    println!(
        "A = {}, B = {}: converged in {} iterations (last update {:.2e}), phi(0) = {:.10}",
        corner.a,
        corner.b,
        profile.iterations,
        profile.residual_history.last().copied().unwrap_or(0.0),
        u1.u.ys[origin]
    );
    for n in &notes {
        println!("note: {n}");
    }
    manifest::write(dir, "solve", json!({ "solver": args.json(), "times": times }))
}

fn profile_geometry(profile: &SimilarityProfile, table: &KernelTable, stencil: Stencil) -> surfdiff::Result<(GridFunction, surfdiff::surface_calculus::CurveGeometry)> {
    let u1 = reconstruct_U(profile, 1.0, table)?;
    let geom = geometry_with_slope(&u1.u, &profile.psi, stencil)?;
    Ok((u1.u, geom))
}

fn cmd_diagnose(args: &DiagnoseArgs, out: &Path) -> surfdiff::Result<()> {
    let dir = out.join("diagnose");
    std::fs::create_dir_all(&dir)?;
    let stencil: Stencil = args.stencil.into();
    let mut cfg = json!({
        "stencil": format!("{:?}", args.stencil).to_lowercase(),
        "identity_tol": args.identity_tol,
        "inequality_tol": args.inequality_tol,
        "esp_alpha": args.esp_alpha,
        "esp_beta": args.esp_beta,
        "l1_slope": args.l1_slope,
    });
    if args.counterexample {
        let c = counterexample_phi_eps(args.solver.a, args.eps, args.extent, args.mollified)?;
        write_columns(&dir.join("counterexample.csv"), &["x", "phi", "d", "gap"], &[&c.phi.xs, &c.phi.ys, &c.d.ys, &c.gap.ys])?;
        let report = json!({
            "a": c.a, "eps": c.eps, "mollified": c.mollified,
            "expected_gap": c.expected_gap, "gap_error": c.gap_error,
            "slope_fit": c.slope_fit, "expected_slope": c.expected_slope,
        });
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
        println!("flattened corner A = {}, eps = {}{}", c.a, c.eps, if c.mollified { " (mollified)" } else { "" });
        println!("|x| - s for y > eps : {:.12} (expected {:.12}, error {:.2e})", c.expected_gap + c.gap_error, c.expected_gap, c.gap_error);
        println!("fitted slope of D   : {:.9} (expected {:.9})", c.slope_fit, c.expected_slope);
        println!("note: D grows linearly, so D/|x| does not tend to zero");
        cfg["counterexample"] = json!({ "a": args.solver.a, "eps": args.eps, "extent": args.extent, "mollified": args.mollified });
        return manifest::write(&dir, "diagnose --counterexample", cfg);
    }

    let (phi, geom, far) = if let Some(path) = &args.profile {
        let (xs, ys) = read_two_columns(path)?;
        if xs.len() < 2 {
            return Err(Error::Malformed(format!("{}: needs at least two rows", path.display())));
        }
        let n = xs.len();
        let h = (xs[n - 1] - xs[0]) / (n - 1) as f64;
        let far = FarField::linear((ys[1] - ys[0]) / h, (ys[n - 1] - ys[n - 2]) / h);
        let phi = GridFunction::new(xs, ys, far)?;
        let geom = geometry_with(&phi, stencil)?;
        cfg["profile"] = json!(path.display().to_string());
        (phi, geom, far)
    } else if args.from_solve {
        let table = args.solver.table.build()?;
        let profile = solve_similarity_profile(args.solver.corner(), args.solver.config(), &table)?;
        let (phi, geom) = profile_geometry(&profile, &table, stencil)?;
        cfg["solver"] = args.solver.json();
        (phi, geom, FarField::linear(-args.solver.b, args.solver.a))
    } else {
        return Err(Error::Config("diagnose needs one of --profile, --from-solve or --counterexample".into()));
    };
    let opts = DiagnoseOptions {
        identity_tol: args.identity_tol,
        inequality_tol: args.inequality_tol,
        esp_alpha: args.esp_alpha,
        esp_beta: args.esp_beta,
        l1_slope: args.l1_slope,
        ..DiagnoseOptions::default()
    };
    let report = diagnose(&geom, &far, opts)?;
    report.write(&dir)?;
    write_columns(&dir.join("phi.csv"), &["x", "phi"], &[&phi.xs, &phi.ys])?;
    print!("{}", report.table());
    manifest::write(&dir, "diagnose", cfg)
}

fn cmd_oracle_compare(args: &OracleArgs, out: &Path) -> surfdiff::Result<()> {
    let s = &args.solver;
    if args.march_half_width > s.half_width {
        return Err(Error::GridMismatch(format!(
            "march domain half-width {} exceeds the solver domain half-width {}",
            args.march_half_width, s.half_width
        )));
    }
    let t_end = args.snapshots.iter().copied().fold(f64::NAN, f64::max);
    let march = MarchConfig {
        half_width: args.march_half_width,
        nodes: args.march_nodes,
        dt_min: args.dt_min,
        dt_max: args.dt_max,
        t_end,
        slopes: (-s.b, s.a),
        mollify_cells: args.mollify_cells,
        snapshots: args.snapshots.clone(),
        ..MarchConfig::default()
    };
    let table = s.table.build()?;
    let profile = solve_similarity_profile(s.corner(), s.config(), &table)?;
    let u0 = corner_initial_height(s.a, s.b, &march)?;
    let v0 = corner_initial_slope(s.a, s.b, &march)?;
    let (heights, slopes) = rayon::join(|| time_march(&u0, &march), || derivative_march(&v0, &march));
    let (heights, slopes) = (heights?, slopes?);
    let grid = march.grid()?;
    let pgrid = profile.psi.grid();
    let dir = out.join("oracle");
    heights.write(&dir.join("height"), "u")?;
    slopes.write(&dir.join("slope"), "v")?;

    let inner = grid.inner_range(0.9);
    let mut ts = Vec::new();
    let mut du = Vec::new();
    let mut dv = Vec::new();
    println!("mollification width sigma = {:.6}", march.mollification_width());
    println!("{:>8} {:>14} {:>14}", "t", "sup|U - u|", "sup|psi - v|");
    for (hs, vs) in heights.snapshots.iter().zip(&slopes.snapshots) {
        let t = hs.t;
        let mild = reconstruct_on(&profile, t, grid, &table)?;
        let scale = t.powf(-0.25);
        let (mut eu, mut ev) = (0.0_f64, 0.0_f64);
        for j in inner.clone() {
            eu = eu.max((mild.u.ys[j] - hs.state.ys[j]).abs());
            let xi = grid.x(j) * scale;
            let psi = surfdiff::fd::interpolate(&profile.psi.ys, pgrid.x0, pgrid.h, xi)
                .unwrap_or(if xi < 0.0 { profile.psi.far.left } else { profile.psi.far.right });
            ev = ev.max((psi - vs.state.ys[j]).abs());
        }
        println!("{t:>8} {eu:>14.4e} {ev:>14.4e}");
        ts.push(t);
        du.push(eu);
        dv.push(ev);
    }
    write_columns(&dir.join("comparison.csv"), &["t", "sup_height_diff", "sup_slope_diff"], &[&ts, &du, &dv])?;
    let max_u = du.iter().copied().fold(0.0, f64::max);
    println!("max sup difference {max_u:.4e}");
    let summary = json!({
        "mollification_width": march.mollification_width(),
        "max_height_diff": max_u,
        "max_slope_diff": dv.iter().copied().fold(0.0, f64::max),
        "steps": heights.steps,
    });
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    manifest::write(&dir, "oracle-compare", json!({ "solver": s.json(), "march": march }))
}
