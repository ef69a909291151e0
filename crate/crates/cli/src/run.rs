//! Pipeline orchestration: builds the configured problem, runs the named
//! command, and persists CSV tables plus one metadata sidecar per run.
//!
//! Output tables contain only shortest-round-trip decimal numbers, so a rerun
//! with the same config and seed reproduces them byte for byte; wall-clock
//! timings live in the metadata file, which makes no such promise.

use std::fs;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use goursat::constraints::{
    corner_compatibility, corner_k_from_sources, solve_einstein_transport, AnalyticSurface,
};
use goursat::einstein::{einstein_reduced_system, metrics, Metric, SYM_PAIRS};
use goursat::evolution::{
    evolve, evolve_einstein_plane_symmetric, load_checkpoint, resume, CheckpointCfg, Diagnostics,
    EvolveOptions, FrontDiag,
};
use goursat::field::{SurfaceField, WedgeField};
use goursat::geometry::{SurfaceGrid, WedgeGrid, WedgeSpec, W1, W2};
use goursat::kirchhoff::{picard_iterate, ConeQuadrature, PicardOptions, SemilinearSource};
use goursat::norms::script_norms;
use goursat::system::{
    assemble_coefficients, catalog, characteristic_residual, check_g0_linearity,
    check_g1_linearity, null_condition_check, verify_signature, GoursatData, QuasilinearSystem,
    SampleBox, SourceFn, ETA,
};
use goursat::{tol, Error, Result};

use crate::config::{self, fmt_f64, RunConfig};
use crate::expr::Expr;
use crate::CommonArgs;

pub fn run(command: &str, args: &CommonArgs) -> Result<String> {
    let text = fs::read_to_string(&args.config).map_err(|e| {
        Error::Config(format!(
            "cannot read config file {}: {e}",
            args.config.display()
        ))
    })?;
    let mut cfg = config::parse_config(&text)?;
    if !cfg.command.is_empty() && cfg.command != command {
        return Err(Error::Config(format!(
            "config names command `{}` but `{command}` was invoked",
            cfg.command
        )));
    }
    if let Some(out) = &args.out {
        cfg.out = out.display().to_string();
    }
    if let Some(l) = args.levels {
        cfg.levels = l;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let mut out = Outputs::new(&cfg, command)?;
    let verdict = match command {
        "evolve" => cmd_evolve(&cfg, &mut out),
        "constraints" => cmd_constraints(&cfg, &mut out),
        "kirchhoff" => cmd_kirchhoff(&cfg, &mut out),
        "norms" => cmd_norms(&cfg, &mut out),
        "convergence" => cmd_convergence(&cfg, &mut out),
        "checks" => cmd_checks(&cfg, &mut out),
        other => Err(Error::Config(format!("unknown command `{other}`"))),
    };
    match verdict {
        Ok(summary) => {
            out.put("status", "ok");
            out.finish()?;
            Ok(summary)
        }
        Err(e) => {
            // Keep whatever was produced and record why the run stopped.
            out.put("status", e.to_string());
            let _ = out.finish();
            Err(e)
        }
    }
}

/// Run artifacts: the output directory, accumulated metadata, and a start
/// time for the recorded wall-clock duration.
struct Outputs {
    dir: PathBuf,
    meta: Vec<(String, String)>,
    started: Instant,
}

impl Outputs {
    fn new(cfg: &RunConfig, command: &str) -> Result<Self> {
        let dir = PathBuf::from(&cfg.out);
        fs::create_dir_all(&dir).map_err(|e| {
            Error::Config(format!(
                "cannot create output directory {}: {e}",
                dir.display()
            ))
        })?;
        let mut o = Outputs {
            dir,
            meta: Vec::new(),
            started: Instant::now(),
        };
        o.put("command", command);
        o.put("tool", concat!("goursat-cli ", env!("CARGO_PKG_VERSION")));
        o.put("core", concat!("goursat ", env!("CARGO_PKG_VERSION")));
        o.put("explicit_keys", cfg.explicit_keys());
        for line in config::serialize(cfg).lines() {
            if let Some((k, v)) = line.split_once(" = ") {
                o.put(format!("config.{k}"), v);
            }
        }
        Ok(o)
    }

    fn put(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.meta.push((key.into(), value.into()));
    }

    fn put_f(&mut self, key: &str, value: f64) {
        self.put(key, fmt_f64(value));
    }

    fn csv(&self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let mut s = String::with_capacity(64 + rows.len() * 32);
        s.push_str(&header.join(","));
        s.push('\n');
        for r in rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        let path = self.dir.join(name);
        fs::write(&path, s)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
    }

    fn finish(mut self) -> Result<()> {
        self.put(
            "elapsed_seconds",
            format!("{:.3}", self.started.elapsed().as_secs_f64()),
        );
        let mut s = String::new();
        for (k, v) in &self.meta {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(v);
            s.push('\n');
        }
        let path = self.dir.join("metadata.txt");
        fs::write(&path, s)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
    }
}

fn header(fixed: &[&str], comps: &[String]) -> Vec<String> {
    fixed
        .iter()
        .map(|s| s.to_string())
        .chain(comps.iter().cloned())
        .collect()
}

fn comp_names(n: usize) -> Vec<String> {
    match n {
        1 => vec!["u".to_string()],
        10 => SYM_PAIRS
            .iter()
            .map(|(a, b)| format!("g{a}{b}"))
            .collect(),
        _ => (0..n).map(|c| format!("u{c}")).collect(),
    }
}

fn build_grid_spec(cfg: &RunConfig) -> WedgeSpec {
    let mut spec = WedgeSpec::new(cfg.t_max, cfg.sigma, cfg.h_null, cfg.h_trans);
    spec.b2 = (cfg.b2_min, cfg.b2_max);
    spec.b3 = (cfg.b3_min, cfg.b3_max);
    spec.periodic = cfg.boundary == "periodic";
    spec
}

fn build_grid(cfg: &RunConfig) -> Result<Arc<WedgeGrid>> {
    Ok(Arc::new(WedgeGrid::build(&build_grid_spec(cfg))?))
}

fn put_grid(out: &mut Outputs, g: &WedgeGrid) {
    out.put("grid.n_diag", g.n_diag.to_string());
    out.put("grid.n2", g.n2.to_string());
    out.put("grid.n3", g.n3.to_string());
    out.put_f("grid.h", g.h());
    out.put_f("grid.h_trans", g.ht());
    out.put("grid.null_nodes", g.null_node_count().to_string());
}

fn source_fn(cfg: &RunConfig) -> Option<SourceFn> {
    if let Expr::Num(v) = cfg.source.ast {
        if v == 0.0 {
            return None;
        }
    }
    let ast = cfg.source.ast.clone();
    Some(Arc::new(move |x| ast.eval(x)))
}

fn build_system(cfg: &RunConfig) -> Result<QuasilinearSystem> {
    match cfg.system.as_str() {
        "linear_wave" => Ok(catalog::linear_wave(source_fn(cfg))),
        "semilinear_cubic" => Ok(catalog::semilinear_cubic(source_fn(cfg))),
        "quasilinear_demo" => Ok(catalog::quasilinear_demo(cfg.epsilon, source_fn(cfg))),
        "einstein" => Ok(einstein_reduced_system()),
        other => Err(Error::Config(format!("unknown system `{other}`"))),
    }
}

fn surface_from_expr(g: SurfaceGrid, e: &Expr) -> SurfaceField {
    let mut f = SurfaceField::new(g.clone(), 1);
    f.fill(&|x1, x2, x3, out| out[0] = e.eval(g.embed(x1, x2, x3)));
    f
}

fn scalar_data(cfg: &RunConfig, grid: &Arc<WedgeGrid>) -> Result<GoursatData> {
    let (e1, e2) = match (&cfg.data_phi1, &cfg.data_phi2) {
        (Some(a), Some(b)) => (&a.ast, &b.ast),
        _ => (&cfg.data.ast, &cfg.data.ast),
    };
    let phi1 = surface_from_expr(grid.surface(W1), e1);
    let phi2 = surface_from_expr(grid.surface(W2), e2);
    GoursatData::from_fields(phi1, phi2)
}

fn metric_of(cfg: &RunConfig) -> Arc<dyn Metric> {
    match cfg.metric.as_str() {
        "flrw" => Arc::new(metrics::FlrwFlat {
            c1: cfg.flrw_c1,
            c2: cfg.flrw_c2,
        }),
        "tt_wave" => Arc::new(metrics::LinearizedTtWave {
            eps: cfg.tt_eps,
            omega: cfg.tt_omega,
            cross: cfg.tt_cross,
        }),
        _ => Arc::new(metrics::Minkowski),
    }
}

/// Goursat data for the metric system: the configured metric family
/// restricted to both null planes.
fn metric_data(cfg: &RunConfig, grid: &Arc<WedgeGrid>) -> Result<GoursatData> {
    let m = metric_of(cfg);
    let mut phis = Vec::with_capacity(2);
    for w in [W1, W2] {
        let g = grid.surface(w);
        let mut f = SurfaceField::new(g.clone(), 10);
        f.fill(&|x1, x2, x3, out| out.copy_from_slice(&m.g(g.embed(x1, x2, x3))));
        phis.push(f);
    }
    let phi2 = phis.pop().unwrap();
    let phi1 = phis.pop().unwrap();
    GoursatData::from_fields(phi1, phi2)
}

fn wedge_csv(out: &Outputs, name: &str, u: &WedgeField) -> Result<()> {
    let g = &u.grid;
    let comps = comp_names(u.ncomp);
    let mut rows = Vec::new();
    for ia in 0..=g.n_diag {
        for ib in 0..=g.n_diag {
            if !g.in_wedge(ia, ib) {
                continue;
            }
            for i2 in 0..=g.n2 {
                for i3 in 0..=g.n3 {
                    let x = g.point(ia, ib, i2, i3);
                    let mut row = vec![
                        ia.to_string(),
                        ib.to_string(),
                        i2.to_string(),
                        i3.to_string(),
                        fmt_f64(x[0]),
                        fmt_f64(x[1]),
                        fmt_f64(x[2]),
                        fmt_f64(x[3]),
                    ];
                    row.extend(u.get(ia, ib, i2, i3).iter().map(|v| fmt_f64(*v)));
                    rows.push(row);
                }
            }
        }
    }
    out.csv(
        name,
        &header(&["ia", "ib", "i2", "i3", "x0", "x1", "x2", "x3"], &comps),
        &rows,
    )
}

fn surface_csv(out: &Outputs, name: &str, f: &SurfaceField, comps: &[String]) -> Result<()> {
    let g = &f.grid;
    let mut rows = Vec::new();
    for j in 0..=g.n1 {
        for i2 in 0..=g.n2 {
            for i3 in 0..=g.n3 {
                let x = g.point(j, i2, i3);
                let mut row = vec![
                    j.to_string(),
                    i2.to_string(),
                    i3.to_string(),
                    fmt_f64(x[0]),
                    fmt_f64(x[1]),
                    fmt_f64(x[2]),
                    fmt_f64(x[3]),
                ];
                row.extend(f.get(j, i2, i3).iter().map(|v| fmt_f64(*v)));
                rows.push(row);
            }
        }
    }
    out.csv(
        name,
        &header(&["j", "i2", "i3", "x0", "x1", "x2", "x3"], comps),
        &rows,
    )
}

fn fronts_csv(out: &Outputs, fronts: &[FrontDiag]) -> Result<()> {
    let rows: Vec<Vec<String>> = fronts
        .iter()
        .map(|f| {
            vec![
                f.s.to_string(),
                fmt_f64(f.t),
                f.cells.to_string(),
                f.max_sweeps.to_string(),
                fmt_f64(f.max_residual),
                fmt_f64(f.sup_u),
                fmt_f64(f.sup_du),
            ]
        })
        .collect();
    out.csv(
        "fronts.csv",
        &header(
            &["s", "t", "cells", "max_sweeps", "max_residual", "sup_u", "sup_du"],
            &[],
        ),
        &rows,
    )
}

fn put_diag(out: &mut Outputs, d: &Diagnostics) {
    out.put_f("diag.max_abs_u", d.max_abs_u);
    out.put_f("diag.max_abs_du", d.max_abs_du);
    out.put("diag.max_sweeps", d.max_sweeps.to_string());
    out.put("diag.total_cells", d.total_cells.to_string());
    out.put("diag.fronts", d.fronts.len().to_string());
}

fn evolve_options(cfg: &RunConfig, out: &Outputs) -> EvolveOptions {
    let mut o = EvolveOptions {
        bound: cfg.bound,
        ..EvolveOptions::default()
    };
    if cfg.checkpoint_every > 0 {
        o.checkpoint = Some(CheckpointCfg {
            path: out.dir.join(&cfg.checkpoint_path),
            every: cfg.checkpoint_every,
        });
    }
    o
}

fn cmd_evolve(cfg: &RunConfig, out: &mut Outputs) -> Result<String> {
    let grid = build_grid(cfg)?;
    put_grid(out, &grid);
    let opts = evolve_options(cfg, out);
    if cfg.system == "einstein" {
        let data = metric_data(cfg, &grid)?;
        let ee = evolve_einstein_plane_symmetric(&data, grid, &opts)?;
        wedge_csv(out, "fields.csv", &ee.evolution.u)?;
        fronts_csv(out, &ee.evolution.diag.fronts)?;
        let gauge: Vec<Vec<String>> = ee
            .gauge_trace
            .iter()
            .map(|(t, g)| vec![fmt_f64(*t), fmt_f64(*g)])
            .collect();
        out.csv("gauge.csv", &header(&["t", "gauge_sup"], &[]), &gauge)?;
        let energy: Vec<Vec<String>> = ee
            .energy
            .times
            .iter()
            .zip(&ee.energy.e)
            .map(|(t, e)| vec![fmt_f64(*t), fmt_f64(*e)])
            .collect();
        out.csv("energy.csv", &header(&["t", "energy"], &[]), &energy)?;
        put_diag(out, &ee.evolution.diag);
        out.put_f("gauge_sup", ee.gauge_sup);
        Ok(format!(
            "evolve: {} fronts, max |u| = {}, max |Γ| = {}; wrote fields.csv, fronts.csv, gauge.csv, energy.csv",
            ee.evolution.diag.fronts.len(),
            fmt_f64(ee.evolution.diag.max_abs_u),
            fmt_f64(ee.gauge_sup)
        ))
    } else {
        let sys = build_system(cfg)?;
        let data = scalar_data(cfg, &grid)?;
        let ev = match &cfg.data_file {
            Some(path) => {
                let state = load_checkpoint(std::path::Path::new(path), grid, sys.n)?;
                out.put("resumed_from", path.clone());
                resume(&sys, &data, state, &opts)?
            }
            None => evolve(&sys, &data, grid, &opts)?,
        };
        wedge_csv(out, "fields.csv", &ev.u)?;
        fronts_csv(out, &ev.diag.fronts)?;
        put_diag(out, &ev.diag);
        Ok(format!(
            "evolve: {} fronts, max |u| = {}; wrote fields.csv, fronts.csv",
            ev.diag.fronts.len(),
            fmt_f64(ev.diag.max_abs_u)
        ))
    }
}

fn cmd_constraints(cfg: &RunConfig, out: &mut Outputs) -> Result<String> {
    let grid = build_grid(cfg)?;
    put_grid(out, &grid);
    let m = metric_of(cfg);
    let s1 = AnalyticSurface {
        metric: m.clone(),
        grid: grid.surface(W1),
    };
    let s2 = AnalyticSurface {
        metric: m,
        grid: grid.surface(W2),
    };
    let corner = corner_k_from_sources(&s1, &s2)?;
    let t1 = solve_einstein_transport(&s1, &corner, cfg.bound)?;
    let t2 = solve_einstein_transport(&s2, &corner, cfg.bound)?;
    let knames: Vec<String> = comp_names(10).iter().map(|n| format!("k_{n}")).collect();
    surface_csv(out, "k1.csv", &t1.k, &knames)?;
    surface_csv(out, "k2.csv", &t2.k, &knames)?;
    out.put_f("transport.x1_end_s1", t1.x1_end);
    out.put_f("transport.x1_end_s2", t2.x1_end);
    out.put_f("transport.sup_k_s1", t1.k.sup());
    out.put_f("transport.sup_k_s2", t2.k.sup());
    let comp = corner_compatibility(&metric_data(cfg, &grid)?);
    out.put_f("corner.max_mismatch", comp.max_mismatch);
    out.put("corner.pass", comp.pass.to_string());
    Ok(format!(
        "constraints: transported K on both planes (sup {} / {}); wrote k1.csv, k2.csv",
        fmt_f64(t1.k.sup()),
        fmt_f64(t2.k.sup())
    ))
}

fn cmd_kirchhoff(cfg: &RunConfig, out: &mut Outputs) -> Result<String> {
    let grid = build_grid(cfg)?;
    put_grid(out, &grid);
    let mut data = scalar_data(cfg, &grid)?;
    let mut ks = Vec::with_capacity(2);
    for (w, key) in [(W1, &cfg.data_k1), (W2, &cfg.data_k2)] {
        let g = grid.surface(w);
        let k = match key {
            Some(e) => surface_from_expr(g, &e.ast),
            None => {
                let mut f = SurfaceField::new(g, 1);
                f.fill(&|_, _, _, outv| outv[0] = 0.0);
                f
            }
        };
        ks.push(k);
    }
    let k2 = ks.pop().unwrap();
    let k1 = ks.pop().unwrap();
    data.k = [Some(k1), Some(k2)];
    if cfg.data_k1.is_none() {
        out.put("note.k_default", "transversal derivative K taken as 0 on both planes");
    }
    let src_ast = cfg.source.ast.clone();
    let f: Box<dyn Fn([f64; 4], f64, [f64; 4]) -> f64 + Sync> = match cfg.system.as_str() {
        "linear_wave" => Box::new(move |x, _u, _du| src_ast.eval(x)),
        "semilinear_cubic" => Box::new(move |x, u, _du| u * u * u + src_ast.eval(x)),
        other => {
            return Err(Error::Config(format!(
                "kirchhoff integrates semilinear problems; system `{other}` is not supported \
                 (use linear_wave or semilinear_cubic)"
            )))
        }
    };
    let source = SemilinearSource {
        f: &*f,
        uses_gradient: false,
    };
    let opts = PicardOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        quad: ConeQuadrature {
            n_polar: cfg.quad_polar,
            n_azimuth: cfg.quad_azimuth,
            n_radial: cfg.quad_radial,
        },
        bounds: None,
    };
    let (u, trace) = picard_iterate(&source, &data, grid, &opts)?;
    wedge_csv(out, "field.csv", &u)?;
    let mut rows = Vec::new();
    for (k, d) in trace.d.iter().enumerate() {
        let ratio = if k == 0 {
            String::new()
        } else {
            fmt_f64(trace.ratios[k - 1])
        };
        rows.push(vec![(k + 1).to_string(), fmt_f64(*d), ratio]);
    }
    out.csv(
        "trace.csv",
        &header(&["application", "sup_update", "ratio"], &[]),
        &rows,
    )?;
    out.put("picard.iterations", trace.iterations.to_string());
    out.put_f("picard.final_residual", trace.final_residual);
    out.put("picard.diverged", trace.diverged.to_string());
    out.put_f("picard.ball_radius", trace.ball.l);
    out.put_f("picard.ball_sup_deviation", trace.ball.sup_deviation);
    out.put("picard.ball_within", trace.ball.within.to_string());
    if trace.diverged {
        return Err(Error::Divergence(format!(
            "Picard iteration diverged after {} applications (last update {})",
            trace.iterations,
            fmt_f64(*trace.d.last().unwrap())
        )));
    }
    Ok(format!(
        "kirchhoff: converged in {} applications (final update {}); wrote field.csv, trace.csv",
        trace.iterations,
        fmt_f64(trace.final_residual)
    ))
}

fn cmd_norms(cfg: &RunConfig, out: &mut Outputs) -> Result<String> {
    let grid = build_grid(cfg)?;
    put_grid(out, &grid);
    let mut v = WedgeField::new(grid, 1);
    let ast = &cfg.data.ast;
    v.fill_scalar(&|x| ast.eval(x));
    let plain = script_norms(&v, cfg.norm_p, cfg.norm_t, 0)?;
    let shifted = script_norms(&v, cfg.norm_p, cfg.norm_t, 1)?;
    let mut values = plain.report.values.clone();
    values.extend(shifted.report.values.clone());
    let rows: Vec<Vec<String>> = values
        .iter()
        .map(|(k, val)| vec![k.clone(), fmt_f64(*val)])
        .collect();
    out.csv("norms.csv", &header(&["norm", "value"], &[]), &rows)?;
    for (i, n) in plain
        .report
        .notes
        .iter()
        .chain(&shifted.report.notes)
        .enumerate()
    {
        out.put(format!("note.{i}"), n.clone());
    }
    out.put_f("norms.combined_k", plain.combined_k);
    out.put_f("norms.combined_e", plain.combined_e);
    Ok(format!(
        "norms: {} values at t = {}, p = {}; wrote norms.csv",
        rows.len(),
        fmt_f64(cfg.norm_t),
        cfg.norm_p
    ))
}

/// The manufactured source s(x) that makes `u_ex` solve the configured
/// system: each catalog family reads A(u)∂²u + f(u) + s = 0.
fn manufactured_source(cfg: &RunConfig, u_ex: &Expr) -> Result<Expr> {
    let boxed = u_ex
        .dalembertian()
        .map_err(|e| Error::Config(format!("key `data`: {e}")))?;
    let s = match cfg.system.as_str() {
        "linear_wave" => Expr::Neg(Box::new(boxed)),
        "semilinear_cubic" => Expr::Neg(Box::new(Expr::Add(
            Box::new(boxed),
            Box::new(Expr::Pow(
                Box::new(u_ex.clone()),
                Box::new(Expr::Num(3.0)),
            )),
        ))),
        "quasilinear_demo" => {
            let d00 = u_ex
                .deriv(0)
                .and_then(|d| d.deriv(0))
                .map_err(|e| Error::Config(format!("key `data`: {e}")))?;
            Expr::Neg(Box::new(Expr::Add(
                Box::new(boxed),
                Box::new(Expr::Mul(
                    Box::new(Expr::Num(cfg.epsilon)),
                    Box::new(Expr::Mul(Box::new(u_ex.clone()), Box::new(d00))),
                )),
            )))
        }
        other => {
            return Err(Error::Config(format!(
                "convergence measures the scalar marching scheme; system `{other}` is not \
                 supported"
            )))
        }
    };
    Ok(crate::expr::simplify(s))
}

fn cmd_convergence(cfg: &RunConfig, out: &mut Outputs) -> Result<String> {
    if cfg.data_phi1.is_some() {
        return Err(Error::Config(
            "convergence needs a single manufactured solution in `data`, not per-plane fields"
                .to_string(),
        ));
    }
    let u_ex = cfg.data.ast.clone();
    let s_ast = manufactured_source(cfg, &u_ex)?;
    out.put("manufactured_source", s_ast.to_string());
    let src: SourceFn = {
        let s = s_ast.clone();
        Arc::new(move |x| s.eval(x))
    };
    let sys = match cfg.system.as_str() {
        "linear_wave" => catalog::linear_wave(Some(src)),
        "semilinear_cubic" => catalog::semilinear_cubic(Some(src)),
        _ => catalog::quasilinear_demo(cfg.epsilon, Some(src)),
    };
    let base = build_grid_spec(cfg);
    let mut rows = Vec::new();
    let mut errors: Vec<f64> = Vec::new();
    let mut orders: Vec<f64> = Vec::new();
    for level in 0..cfg.levels {
        let scale = 2f64.powi(level as i32);
        let mut spec = base.clone();
        spec.h_null = base.h_null / scale;
        spec.h_trans = base.h_trans / scale;
        let grid = Arc::new(WedgeGrid::build(&spec)?);
        let started = Instant::now();
        let data = {
            let phi1 = surface_from_expr(grid.surface(W1), &u_ex);
            let phi2 = surface_from_expr(grid.surface(W2), &u_ex);
            GoursatData::from_fields(phi1, phi2)?
        };
        let ev = evolve(&sys, &data, grid.clone(), &evolve_options(cfg, out))?;
        let mut exact = WedgeField::new(grid, 1);
        exact.fill_scalar(&|x| u_ex.eval(x));
        let err = ev.u.sup_diff(&exact);
        let order = if level == 0 {
            String::new()
        } else {
            let o = (errors[level - 1] / err).log2();
            orders.push(o);
            fmt_f64(o)
        };
        errors.push(err);
        out.put(
            format!("level.{level}.seconds"),
            format!("{:.3}", started.elapsed().as_secs_f64()),
        );
        rows.push(vec![
            level.to_string(),
            fmt_f64(spec.h_null),
            fmt_f64(spec.h_trans),
            fmt_f64(err),
            order,
        ]);
    }
    out.csv(
        "convergence.csv",
        &header(&["level", "h_null", "h_trans", "sup_error", "observed_order"], &[]),
        &rows,
    )?;
    if errors.iter().all(|e| *e <= 1e-12) {
        out.put(
            "note.exact",
            "scheme is exact to round-off on this data; observed orders are not meaningful",
        );
    }
    Ok(format!(
        "convergence: errors [{}], orders [{}]; wrote convergence.csv",
        errors.iter().map(|e| fmt_f64(*e)).collect::<Vec<_>>().join(", "),
        orders.iter().map(|o| fmt_f64(*o)).collect::<Vec<_>>().join(", ")
    ))
}

fn cmd_checks(cfg: &RunConfig, out: &mut Outputs) -> Result<String> {
    let grid = build_grid(cfg)?;
    put_grid(out, &grid);
    let sys = build_system(cfg)?;
    let data = if cfg.system == "einstein" {
        metric_data(cfg, &grid)?
    } else {
        scalar_data(cfg, &grid)?
    };
    let sb = SampleBox {
        seed: cfg.seed,
        ..SampleBox::default()
    };
    // (name, pass, measured statistic, threshold text)
    let mut checks: Vec<(String, bool, f64, String)> = Vec::new();
    let a = assemble_coefficients(&sys, sys.ref_x, &sys.ref_u);
    let sig = verify_signature(&a);
    let margin = sig.a00.min(-sig.spatial_eigenvalues[2]);
    checks.push(("signature".to_string(), sig.ok, margin, "> 0".to_string()));
    let g0 = check_g0_linearity(&sys, &sb);
    checks.push((
        "g0_linearity".to_string(),
        g0.pass,
        g0.max_second_difference,
        fmt_f64(g0.threshold),
    ));
    for w in [W1, W2] {
        let g1 = check_g1_linearity(&sys, w, &sb);
        checks.push((
            format!("g1_linearity_s{w}"),
            g1.pass,
            g1.max_second_difference,
            fmt_f64(g1.threshold),
        ));
    }
    let nc = null_condition_check(&ETA);
    checks.push((
        "null_condition_q0".to_string(),
        nc.pass,
        nc.max_violation,
        "null directions of Q".to_string(),
    ));
    for w in [W1, W2] {
        let r = characteristic_residual(&sys, &data, w).sup();
        checks.push((
            format!("characteristic_s{w}"),
            r <= tol::STRUCTURAL,
            r,
            fmt_f64(tol::STRUCTURAL),
        ));
    }
    let comp = corner_compatibility(&data);
    checks.push((
        "corner_compatibility".to_string(),
        comp.pass,
        comp.max_mismatch,
        fmt_f64(tol::EXACT),
    ));
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|(n, p, v, t)| vec![n.clone(), p.to_string(), fmt_f64(*v), t.clone()])
        .collect();
    out.csv(
        "checks.csv",
        &header(&["check", "pass", "statistic", "threshold"], &[]),
        &rows,
    )?;
    let failed: Vec<&str> = checks
        .iter()
        .filter(|(_, p, _, _)| !*p)
        .map(|(n, _, _, _)| n.as_str())
        .collect();
    let total = checks.len();
    if failed.is_empty() {
        Ok(format!("checks: {total}/{total} passed; wrote checks.csv"))
    } else {
        Err(Error::Data(format!(
            "hypothesis checks failed: {}",
            failed.join(", ")
        )))
    }
}
