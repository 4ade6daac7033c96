//! One function per subcommand. Each returns a JSON result, CSV rows and any
//! flags raised along the way; rendering and exit codes live in `lib.rs`.

use std::f64::consts::PI;

use lattice_fermi::fermi::{
    curvature_closed_form, curvature_graph, solve_graph, transversality_cross, zero_curvature_locus, Axis, Branch,
    FermiPatch,
};
use lattice_fermi::newton::{adaptedness_and_exponent, newton_polyhedron};
use lattice_fermi::oscillatory::{decay_scan_with, CutoffSpec, DEFAULT_MAX_INTERVALS};
use lattice_fermi::resolvent::{
    holder_equivalence_test, threshold_scan_with, uniformity_scan, uniformity_z_grid, DenseOperator, LinearOperator,
    NormOptions, ThresholdScanOptions,
};
use lattice_fermi::taylor::{classify_normal_form, normal_form_coefficients, taylor_expand, TaylorModel};
use lattice_fermi::torus::{critical_points, h0, EnergyLevel, ThresholdKind, TorusPoint};
use lattice_fermi::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Config;
use crate::{CliError, Command};

/// Time-domain panel cap for the resolvent kernel when `budget = 0`.
pub const DEFAULT_MAX_PANELS: usize = 200_000;

/// What a command produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub result: Value,
    /// CSV body with header.
    pub csv: String,
    /// Budget exhaustion that left part of the result unreliable.
    pub partial: Option<String>,
    /// Checks the command evaluated and found failing.
    pub failed_checks: Vec<String>,
}

fn rows_to_csv<T: Serialize>(rows: &[T]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::internal(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::internal(e.to_string()))
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::internal(e.to_string()))
}

pub fn run_command(cmd: Command, cfg: &Config) -> Result<Outcome, CliError> {
    match cmd {
        Command::Thresholds => thresholds(),
        Command::CurvatureScan => curvature_scan(cfg),
        Command::DegenerateLocus => degenerate_locus(cfg),
        Command::Taylor => taylor(cfg),
        Command::Newton => newton(cfg),
        Command::Decay => decay(cfg),
        Command::ResolventScan => resolvent_scan(cfg),
        Command::HolderTest => holder_test(cfg),
    }
}

/// Energy from `lambda`, else the preset, else the command default.
pub fn resolve_lambda(cmd: Command, cfg: &Config) -> Result<f64, CliError> {
    if let Some(l) = cfg.f64("lambda") {
        return Ok(l);
    }
    Ok(match cfg.raw("preset") {
        "band-i" => 2.0,
        "band-iii" => 5.0,
        "umbilic" => 6.0,
        "near-threshold" => 3.95,
        _ => match cmd {
            Command::Taylor | Command::Newton => 6.0,
            _ => 2.0,
        },
    })
}

fn energy(cmd: Command, cfg: &Config) -> Result<EnergyLevel, CliError> {
    Ok(EnergyLevel::new(resolve_lambda(cmd, cfg)?)?)
}

/// Resolves `at` to a point of `M_lambda`.
pub fn resolve_point(at: &str, level: EnergyLevel) -> Result<TorusPoint, CliError> {
    let e = level.e;
    match at {
        "auto" => {
            let mut best: Option<TorusPoint> = None;
            for k in 0..=500 {
                let t = k as f64 / 1000.0;
                if let Ok(s) = solve_graph([t, 0.0], level, Axis::X3, Branch::Plus) {
                    let p = TorusPoint::new([t, 0.0, s]);
                    if p.b[2].abs() >= 0.3 {
                        return Ok(p);
                    }
                    if best.map_or(true, |q| p.b[2].abs() > q.b[2].abs()) {
                        best = Some(p);
                    }
                }
            }
            best.filter(|p| p.b[2].abs() > 1e-6)
                .ok_or_else(|| CliError::validation(format!("no chart point found at lambda = {}", level.lambda)))
        }
        "umbilic" => {
            if (level.lambda - 6.0).abs() > 1e-12 {
                return Err(CliError::validation("`at = umbilic` needs lambda = 6"));
            }
            Ok(TorusPoint::new([0.25; 3]))
        }
        "special-axis" => {
            if !(-1.0..=1.0).contains(&e) {
                return Err(CliError::validation("`at = special-axis` needs lambda in [4, 8]"));
            }
            Ok(TorusPoint::new([0.25, e.acos() / (2.0 * PI), 0.25]))
        }
        // the locus point with the strongest cubic term along the null
        // direction, i.e. the one farthest from the special-axis case
        "generic" => {
            let mut best: Option<(f64, TorusPoint)> = None;
            for lp in zero_curvature_locus(level, 256) {
                if !lp.transversal || lp.point.a.iter().filter(|a| a.abs() < 1e-8).count() >= 2 {
                    continue;
                }
                let Some(c) = null_cubic(lp.point) else { continue };
                if best.map_or(true, |(b, _)| c > b) {
                    best = Some((c, lp.point));
                }
            }
            best.map(|(_, p)| p)
                .ok_or_else(|| CliError::validation(format!("no generic degenerate point at lambda = {}", level.lambda)))
        }
        _ if at.starts_with("locus:") => {
            let i: usize = at["locus:".len()..]
                .parse()
                .map_err(|_| CliError::validation(format!("bad locus index in `{at}`")))?;
            let pts = zero_curvature_locus(level, 256);
            let n = pts.len();
            pts.get(i)
                .map(|lp| lp.point)
                .ok_or_else(|| CliError::validation(format!("locus index {i} out of range ({n} points)")))
        }
        _ => {
            let xs: Vec<f64> = at.split(',').filter_map(crate::config::parse_f64).collect();
            if xs.len() != 3 || at.split(',').count() != 3 {
                return Err(CliError::validation(format!("cannot read point `{at}`")));
            }
            let p = TorusPoint::new([xs[0], xs[1], xs[2]]);
            if (h0(&p) - level.lambda).abs() > 1e-9 {
                return Err(CliError::validation(format!(
                    "point {at} has h0 = {}, not lambda = {}",
                    h0(&p),
                    level.lambda
                )));
            }
            Ok(p)
        }
    }
}

/// `|alpha_111|` in the principal frame, with `eta_1` the null direction.
fn null_cubic(p: TorusPoint) -> Option<f64> {
    let patch = FermiPatch::at(p).ok()?;
    let m = taylor_expand(&patch, patch.base_free(), 3, true).ok()?;
    let c = if m.coeff(2, 0).abs() <= m.coeff(0, 2).abs() { m.coeff(3, 0) } else { m.coeff(0, 3) };
    Some(c.abs())
}

fn patch_for(p: TorusPoint) -> Result<FermiPatch, CliError> {
    Ok(FermiPatch::at(p)?)
}

#[derive(Serialize)]
struct ThresholdRow {
    xi1: f64,
    xi2: f64,
    xi3: f64,
    energy: f64,
    kind: ThresholdKind,
}

fn thresholds() -> Result<Outcome, CliError> {
    let rows: Vec<ThresholdRow> = critical_points()
        .into_iter()
        .map(|t| ThresholdRow { xi1: t.point.xi[0], xi2: t.point.xi[1], xi3: t.point.xi[2], energy: t.energy, kind: t.kind })
        .collect();
    Ok(Outcome { result: json!({ "points": to_value(&rows)? }), csv: rows_to_csv(&rows)?, partial: None, failed_checks: vec![] })
}

#[derive(Serialize)]
struct CurvatureRow {
    xi1: f64,
    xi2: f64,
    xi3: f64,
    solved_axis: usize,
    k_closed: f64,
    k_graph: f64,
    rel_diff: f64,
}

/// `n` random points of `M_lambda`: uniform free coordinates over a random
/// axis and branch, kept when they lie over the surface.
pub fn random_surface_points(level: EnergyLevel, n: usize, seed: u64) -> Vec<TorusPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n && attempts < 1000 * n.max(1) {
        attempts += 1;
        let axis = rng.gen_range(1..=3);
        let free: [f64; 2] = [rng.gen(), rng.gen()];
        let branch = if rng.gen() { Branch::Plus } else { Branch::Minus };
        let ax = Axis::from_one_based(axis).expect("axis in 1..=3");
        if let Ok(t) = solve_graph(free, level, ax, branch) {
            let [i, j] = ax.free();
            let mut xi = [0.0; 3];
            xi[i] = free[0];
            xi[j] = free[1];
            xi[ax.index()] = t;
            let p = TorusPoint::new(xi);
            if p.b.iter().any(|b| b.abs() > 1e-3) {
                out.push(p);
            }
        }
    }
    out
}

fn curvature_scan(cfg: &Config) -> Result<Outcome, CliError> {
    let level = energy(Command::CurvatureScan, cfg)?;
    if level.lambda <= 0.0 || level.lambda >= 12.0 {
        return Err(CliError::validation("curvature-scan needs lambda in (0, 12)"));
    }
    let n = cfg.usize("points");
    let pts = random_surface_points(level, n, cfg.u64("seed"));
    let mut rows = Vec::with_capacity(pts.len());
    for p in pts {
        let patch = patch_for(p)?;
        let (k, _) = curvature_closed_form(&p)?;
        let kg = curvature_graph(&patch, patch.base_free())?;
        rows.push(CurvatureRow {
            xi1: p.xi[0],
            xi2: p.xi[1],
            xi3: p.xi[2],
            solved_axis: patch.solved_axis.index() + 1,
            k_closed: k,
            k_graph: kg,
            rel_diff: if k == 0.0 { (k - kg).abs() } else { ((k - kg) / k).abs() },
        });
    }
    let max_rel = rows.iter().map(|r| r.rel_diff).fold(0.0, f64::max);
    let tol = cfg.f64("tol.curvature").unwrap_or(1e-9);
    let mut failed = vec![];
    if max_rel > tol {
        failed.push(format!("curvature formulas differ by {max_rel:e} > {tol:e}"));
    }
    if rows.len() < n {
        failed.push(format!("only {} of {n} surface points found", rows.len()));
    }
    let result = json!({
        "lambda": level.lambda,
        "points": rows.len(),
        "max_rel_diff": max_rel,
        "tolerance": tol,
        "pass": failed.is_empty(),
    });
    Ok(Outcome { result, csv: rows_to_csv(&rows)?, partial: None, failed_checks: failed })
}

#[derive(Serialize)]
struct LocusRow {
    xi1: f64,
    xi2: f64,
    xi3: f64,
    energy: f64,
    curvature: f64,
    umbilic: bool,
    transversal: bool,
    cross_norm: f64,
}

fn degenerate_locus(cfg: &Config) -> Result<Outcome, CliError> {
    let level = energy(Command::DegenerateLocus, cfg)?;
    if level.lambda <= 0.0 || level.lambda >= 12.0 {
        return Err(CliError::validation("degenerate-locus needs lambda in (0, 12)"));
    }
    let grid = cfg.usize("grid");
    if grid < 8 {
        return Err(CliError::validation("grid must be at least 8"));
    }
    let pts = zero_curvature_locus(level, grid);
    let mut rows = Vec::with_capacity(pts.len());
    for lp in &pts {
        let cross = transversality_cross(&lp.point);
        rows.push(LocusRow {
            xi1: lp.point.xi[0],
            xi2: lp.point.xi[1],
            xi3: lp.point.xi[2],
            energy: lp.energy,
            curvature: curvature_closed_form(&lp.point)?.0,
            umbilic: lp.umbilic,
            transversal: lp.transversal,
            cross_norm: cross.iter().map(|v| v * v).sum::<f64>().sqrt(),
        });
    }
    let result = json!({
        "lambda": level.lambda,
        "count": rows.len(),
        "umbilic_count": pts.iter().filter(|p| p.umbilic).count(),
        "points": to_value(&rows)?,
    });
    Ok(Outcome { result, csv: rows_to_csv(&rows)?, partial: None, failed_checks: vec![] })
}

/// Expansion at the configured point, rotated per `rotate`.
fn expansion(cmd: Command, cfg: &Config) -> Result<(EnergyLevel, TorusPoint, TaylorModel, bool), CliError> {
    let level = energy(cmd, cfg)?;
    let p = resolve_point(cfg.raw("at"), level)?;
    let patch = patch_for(p)?;
    let degree = cfg.usize("degree");
    let c = patch.base_free();
    let (model, rotated) = match cfg.raw("rotate") {
        "true" => (taylor_expand(&patch, c, degree, true)?, true),
        "false" => (taylor_expand(&patch, c, degree, false)?, false),
        _ => match taylor_expand(&patch, c, degree, true) {
            Ok(m) => (m, true),
            Err(Error::EigenvalueCollision(_)) => (taylor_expand(&patch, c, degree, false)?, false),
            Err(e) => return Err(e.into()),
        },
    };
    Ok((level, p, model, rotated))
}

#[derive(Serialize)]
struct TermRow {
    j1: usize,
    j2: usize,
    value: f64,
}

fn taylor(cfg: &Config) -> Result<Outcome, CliError> {
    let (level, p, model, rotated) = expansion(Command::Taylor, cfg)?;
    let rows: Vec<TermRow> = model.coeffs.iter().map(|t| TermRow { j1: t.j[0], j2: t.j[1], value: t.value }).collect();
    let classification = if model.degree >= 4 {
        match classify_normal_form(&model, level) {
            Ok(c) => to_value(&c)?,
            Err(e) => json!({ "unclassified": e.to_string() }),
        }
    } else {
        Value::Null
    };
    let coefficients: serde_json::Map<String, Value> =
        normal_form_coefficients(&model).into_iter().map(|(k, v)| (k, json!(v))).collect();
    let result = json!({
        "lambda": level.lambda,
        "point": p.xi,
        "rotated": rotated,
        "model": to_value(&model)?,
        "normal_form_coefficients": coefficients,
        "classification": classification,
    });
    Ok(Outcome { result, csv: rows_to_csv(&rows)?, partial: None, failed_checks: vec![] })
}

#[derive(Serialize)]
struct VertexRow {
    j1: String,
    j2: String,
}

fn newton(cfg: &Config) -> Result<Outcome, CliError> {
    let (level, p, model, rotated) = expansion(Command::Newton, cfg)?;
    let data = newton_polyhedron(&model)?;
    let (adapted, exponent) = adaptedness_and_exponent(&data);
    let rows: Vec<VertexRow> =
        data.polyhedron_vertices.iter().map(|v| VertexRow { j1: v[0].to_string(), j2: v[1].to_string() }).collect();
    let result = json!({
        "lambda": level.lambda,
        "point": p.xi,
        "rotated": rotated,
        "newton": to_value(&data)?,
        "adapted": adapted,
        "exponent": exponent.map(|r| r.to_string()),
    });
    Ok(Outcome { result, csv: rows_to_csv(&rows)?, partial: None, failed_checks: vec![] })
}

fn decay(cfg: &Config) -> Result<Outcome, CliError> {
    let level = energy(Command::Decay, cfg)?;
    let p = resolve_point(cfg.raw("at"), level)?;
    let patch = patch_for(p)?;
    let radius = cfg.f64("cutoff_radius").unwrap_or(0.08);
    if !(radius > 0.0) {
        return Err(CliError::validation("cutoff_radius must be positive"));
    }
    let cutoff = CutoffSpec::bump(patch.base_free(), radius.min(patch.radius));
    let budget = match cfg.usize("budget") {
        0 => DEFAULT_MAX_INTERVALS,
        b => b,
    };
    let scan = decay_scan_with(
        &patch,
        &cutoff,
        cfg.usize("directions"),
        cfg.f64("r_min").unwrap_or(16.0),
        cfg.f64("r_max").unwrap_or(4096.0),
        budget,
    )?;
    let rows = scan.rows();
    let tainted = scan.fits.iter().filter(|f| f.tainted).count();
    let partial = (tainted > 0).then(|| format!("{tainted} fits use samples beyond the quadrature budget {budget}"));
    let result = json!({
        "lambda": level.lambda,
        "point": p.xi,
        "cutoff": to_value(&cutoff)?,
        "min_exponent": scan.min_exponent,
        "argmin": scan.argmin,
        "tainted_fits": tainted,
        "fits": scan.fits.iter().map(|f| json!({
            "direction": f.direction,
            "is_normal": f.is_normal,
            "fitted_exponent": f.fitted_exponent,
            "fit_residual": f.fit_residual,
            "tainted": f.tainted,
            "predicted": f.predicted.map(|r| r.to_string()),
        })).collect::<Vec<_>>(),
    });
    Ok(Outcome { result, csv: rows_to_csv(&rows)?, partial, failed_checks: vec![] })
}

fn norm_options(cfg: &Config) -> NormOptions {
    NormOptions {
        restarts: cfg.usize("restarts").max(1),
        tolerance: cfg.f64("tol.norm").unwrap_or(1e-8),
        max_iterations: cfg.usize("max_iterations").max(1),
        seed: cfg.u64("seed"),
    }
}

fn resolvent_scan(cfg: &Config) -> Result<Outcome, CliError> {
    let p = cfg.f64("p").unwrap_or(1.25);
    let norm = norm_options(cfg);
    let section = cfg.usize("section_radius");
    let grid_n = cfg.usize("grid_n");
    if cfg.raw("mode") == "uniformity" {
        let report = uniformity_scan(&uniformity_z_grid(), p, [section, 2 * section], grid_n, &norm)?;
        let rows = report.rows();
        let partial = (!report.converged).then(|| "some norm iterations hit max_iterations".to_string());
        return Ok(Outcome { result: to_value(&report)?, csv: rows_to_csv(&rows)?, partial, failed_checks: vec![] });
    }
    let mut thresholds = Vec::new();
    for k in cfg.list("thresholds") {
        if k.fract() != 0.0 || !(0.0..=3.0).contains(&k) {
            return Err(CliError::validation(format!("threshold index {k} not in 0..=3")));
        }
        thresholds.push(k as u8);
    }
    let opts = ThresholdScanOptions {
        section_radius: section,
        box_radius: cfg.usize("box_radius"),
        grid_n,
        max_panels: match cfg.usize("budget") {
            0 => DEFAULT_MAX_PANELS,
            b => b,
        },
        thresholds,
        norm,
    };
    let r = cfg.f64("r").unwrap_or(10.0 / 3.0);
    let report = threshold_scan_with(p, r, &cfg.list("eps"), cfg.usize("seeds"), &opts)?;
    let rows = report.rows();
    let unconverged = report.converged.iter().filter(|c| !**c).count();
    let partial = (unconverged > 0).then(|| format!("{unconverged} norm iterations hit max_iterations"));
    Ok(Outcome { result: to_value(&report)?, csv: rows_to_csv(&rows)?, partial, failed_checks: vec![] })
}

/// Random real matrices with entries uniform in `[-1, 1]` and both sizes
/// uniform in `1..=max_dim`.
pub fn random_matrices(count: usize, max_dim: usize, seed: u64) -> Vec<DenseOperator> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let rows = rng.gen_range(1..=max_dim);
            let cols = rng.gen_range(1..=max_dim);
            let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            DenseOperator::from_real(rows, cols, &data).expect("sizes match")
        })
        .collect()
}

#[derive(Serialize)]
struct HolderRow {
    matrix: usize,
    rows: usize,
    cols: usize,
    p: f64,
    r: f64,
    c_direct: f64,
    c_weighted: f64,
    difference: f64,
}

fn holder_test(cfg: &Config) -> Result<Outcome, CliError> {
    let max_dim = cfg.usize("max_dim");
    if max_dim == 0 || max_dim > 32 {
        return Err(CliError::validation("max_dim must lie in 1..=32"));
    }
    let ps = cfg.list("p_list");
    if ps.iter().any(|p| !(1.0..=2.0).contains(p)) {
        return Err(CliError::validation("p_list entries must lie in [1, 2]"));
    }
    let seed = cfg.u64("seed");
    let trials = cfg.usize("trials");
    let mats = random_matrices(cfg.usize("matrices"), max_dim, seed);
    let mut rows = Vec::new();
    for (m, a) in mats.iter().enumerate() {
        for &p in &ps {
            let h = holder_equivalence_test(a, p, trials, seed.wrapping_add(1 + m as u64))?;
            rows.push(HolderRow {
                matrix: m,
                rows: a.rows(),
                cols: a.cols(),
                p,
                r: h.r,
                c_direct: h.c_direct,
                c_weighted: h.c_weighted,
                difference: h.c_weighted - h.c_direct,
            });
        }
    }
    let max_excess = rows.iter().map(|r| r.difference).fold(f64::NEG_INFINITY, f64::max);
    let max_shortfall = rows.iter().map(|r| -r.difference).fold(f64::NEG_INFINITY, f64::max);
    let (tol_up, tol_down) = (cfg.f64("tol.holder").unwrap_or(1e-6), cfg.f64("tol.recovery").unwrap_or(1e-3));
    let mut failed = vec![];
    if max_excess > tol_up {
        failed.push(format!("c_weighted exceeds c_direct by {max_excess:e}"));
    }
    if max_shortfall > tol_down {
        failed.push(format!("c_weighted falls short of c_direct by {max_shortfall:e}"));
    }
    let result = json!({
        "matrices": mats.len(),
        "p_list": ps,
        "max_excess": max_excess,
        "max_shortfall": max_shortfall,
        "pass": failed.is_empty(),
        "results": to_value(&rows)?,
    });
    Ok(Outcome { result, csv: rows_to_csv(&rows)?, partial: None, failed_checks: failed })
}
