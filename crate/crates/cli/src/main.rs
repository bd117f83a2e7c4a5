use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use m2track::eikonal::{fast_march, SourceSet, Stop};
use m2track::geodesic::Geodesic;
use m2track::grid::io::{self, MarkerKind, Polyline};
use m2track::grid::Field2;
use m2track::pipeline::eval::{dilate, mistake_ratio_of_polylines};
use m2track::pipeline::phantom::{s_curve, y_tree, y_tree_angled, Phantom, TubeStyle};
use m2track::pipeline::{candidates, write_tree_outputs, Annotated, CostKind, MetricKind, Session, TrackingConfig};
use m2track::{Error, Result};

#[derive(Parser)]
#[command(name = "m2track", version, about = "Geodesic tracking of vessels in orientation scores")]
struct Cli {
    #[command(flatten)]
    opts: Overrides,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Command-line overrides of the configuration file.
#[derive(Args)]
struct Overrides {
    /// TOML configuration file.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    image: Option<PathBuf>,
    #[arg(long, global = true)]
    mask: Option<PathBuf>,
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    ntheta: Option<usize>,
    #[arg(long, global = true, value_enum)]
    metric: Option<Metric>,
    #[arg(long, global = true)]
    xi: Option<f64>,
    #[arg(long, global = true)]
    zeta: Option<f64>,
    #[arg(long, global = true)]
    eps: Option<f64>,
    #[arg(long, global = true)]
    lambda_dd: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    LeftInvariant,
    DataDriven,
    Mixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Thin,
    Thick,
}

#[derive(Clone, Copy, ValueEnum)]
enum Figure {
    /// Data-driven vs left-invariant tracking on an S-curve.
    Curvature,
    /// Two-run tracking of a Y-shaped tree.
    Tree,
    /// Per-tree tracking of a wide Y, with in-place rotations.
    Rotation,
}

#[derive(Subcommand)]
enum Cmd {
    /// Orientation score: raw field plus max-over-θ projection.
    Lift,
    /// Cost field: raw field plus min-over-θ projection.
    Cost {
        #[arg(long, value_enum, default_value = "thin")]
        run: Which,
    },
    /// Full fast-marching sweep from the seeds: distance map and acceptance order.
    Solve,
    /// Single geodesic from a point to another (default: first tip to first seed).
    Track {
        /// Start as `x,y` or `x,y,θ`.
        #[arg(long, value_parser = parse_point)]
        from: Option<Annotated>,
        /// End (the fast-marching source) as `x,y` or `x,y,θ`.
        #[arg(long, value_parser = parse_point)]
        to: Option<Annotated>,
    },
    /// Vascular-tree tracking from the configured points.
    Tree {
        /// One sweep per seed over its labelled tips instead of two runs.
        #[arg(long)]
        per_tree: bool,
    },
    /// Mistake ratio of geodesic CSVs against a vessel mask.
    Eval {
        /// Geodesic CSV files, or directories searched for `*.csv`.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Grow the mask by one pixel first.
        #[arg(long)]
        dilate: bool,
    },
    /// Demonstration figures on synthetic phantoms.
    Figure {
        #[arg(value_enum)]
        which: Figure,
    },
}

fn parse_point(s: &str) -> std::result::Result<Annotated, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [x, y] => Ok(Annotated::new(x, y, None)),
        [x, y, t] => Ok(Annotated::new(x, y, Some(t))),
        _ => Err("expected x,y or x,y,θ".into()),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Toml(_)
        | Error::InvalidParameter(_)
        | Error::Domain { .. }
        | Error::DimensionMismatch(_)
        | Error::EmptySources => 2,
        Error::Unreachable => 3,
        Error::IllConditioned { .. } | Error::Stencil { .. } | Error::Numerical(_) | Error::Backtrack { .. } => 4,
        Error::Io(_) | Error::Image(_) | Error::Csv(_) | Error::UnsupportedImage { .. } | Error::FieldFormat(_) => 5,
    }
}

fn load_config(o: &Overrides) -> Result<TrackingConfig> {
    let mut cfg = match &o.config {
        Some(p) => TrackingConfig::load(p)?,
        None => TrackingConfig::default(),
    };
    if let Some(p) = &o.image {
        cfg.image = Some(p.clone());
    }
    if let Some(p) = &o.mask {
        cfg.mask = Some(p.clone());
    }
    if let Some(p) = &o.output {
        cfg.output = p.clone();
    }
    if let Some(n) = o.ntheta {
        cfg.ntheta = n;
    }
    if let Some(m) = o.metric {
        cfg.metric = match m {
            Metric::LeftInvariant => MetricKind::LeftInvariant,
            Metric::DataDriven => MetricKind::DataDriven,
            Metric::Mixed => MetricKind::Mixed,
        };
    }
    let m = &mut cfg.model;
    for (dst, src) in [(&mut m.xi, o.xi), (&mut m.zeta, o.zeta), (&mut m.eps, o.eps), (&mut m.lambda_dd, o.lambda_dd)] {
        if let Some(v) = src {
            *dst = v;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output_dir(cfg: &TrackingConfig) -> Result<&Path> {
    std::fs::create_dir_all(&cfg.output)?;
    Ok(&cfg.output)
}

fn markers(cfg: &TrackingConfig) -> Result<Vec<((f64, f64), MarkerKind)>> {
    let p = &cfg.points;
    let mut out = Vec::new();
    for (list, kind) in [
        (p.seeds()?, MarkerKind::Seed),
        (p.bifurcations()?, MarkerKind::Bifurcation),
        (p.tips()?, MarkerKind::Tip),
    ] {
        out.extend(list.iter().map(|a| ((a.x, a.y), kind)));
    }
    Ok(out)
}

fn load_mask(path: &Path) -> Result<Field2> {
    let m = io::load_image(path)?;
    Ok(Field2 {
        data: m.data.iter().map(|&v| if v > 0.5 { 1.0 } else { 0.0 }).collect(),
        ..m
    })
}

fn lift(cfg: TrackingConfig) -> Result<()> {
    let s = Session::from_config(cfg)?;
    let dir = output_dir(&s.cfg)?;
    io::write_field(&s.score, dir.join("score.m2f"))?;
    let proj = s.score.max_projection();
    io::save_gray(&proj, 0.0, proj.max_abs().max(f64::MIN_POSITIVE), dir.join("score_max.png"))?;
    println!("orientation score {}x{}x{} written to {}", s.grid().nx, s.grid().ny, s.grid().ntheta, dir.display());
    Ok(())
}

fn cost(cfg: TrackingConfig, run: Which) -> Result<()> {
    let s = Session::from_config(cfg)?;
    let c = s.cost(match run {
        Which::Thin => &s.cfg.cost,
        Which::Thick => &s.cfg.cost_thick,
    })?;
    let dir = output_dir(&s.cfg)?;
    io::write_field(&c.cost, dir.join("cost.m2f"))?;
    io::save_gray(&c.cost.min_projection(), 0.0, 1.0, dir.join("cost_min.png"))?;
    if let Some(v) = &c.vesselness {
        io::write_field(v, dir.join("vesselness.m2f"))?;
    }
    println!("cost written to {}", dir.display());
    Ok(())
}

fn solve(cfg: TrackingConfig) -> Result<()> {
    let s = Session::from_config(cfg)?;
    let geo = s.geometry(s.cost(&s.cfg.cost)?.cost)?;
    let g = s.grid();
    let mut voxels = Vec::new();
    for p in s.cfg.points.seeds()? {
        for c in candidates(&geo.cost, &p)? {
            voxels.push(g.nearest_voxel(&c)?);
        }
    }
    let map = fast_march(&geo.stencils, &SourceSet::new(&g, voxels)?, &Stop::Full)?;
    let dir = output_dir(&s.cfg)?;
    map.write(dir.join("distance.m2f"))?;
    map.write_order(dir.join("order.m2f"))?;
    let reached = map.values.values.iter().filter(|v| v.is_finite()).count();
    println!("{reached} of {} voxels reached; maps written to {}", g.len(), dir.display());
    Ok(())
}

fn track(cfg: TrackingConfig, from: Option<Annotated>, to: Option<Annotated>) -> Result<()> {
    let first = |l: Vec<Annotated>, what: &str| {
        l.first()
            .copied()
            .ok_or_else(|| Error::Config(format!("no {what} given; pass it on the command line or in the configuration")))
    };
    let from = match from {
        Some(p) => p,
        None => first(cfg.points.tips()?, "start point (tip)")?,
    };
    let to = match to {
        Some(p) => p,
        None => first(cfg.points.seeds()?, "end point (seed)")?,
    };
    let s = Session::from_config(cfg)?;
    let g = s.track_single(&from, &to)?.geodesic;
    let dir = output_dir(&s.cfg)?;
    g.write_csv(dir.join("track.csv"))?;
    let line = Polyline {
        points: g.spatial(),
        color: io::RUN1_COLOR,
    };
    let marks = [((from.x, from.y), MarkerKind::Tip), ((to.x, to.y), MarkerKind::Seed)];
    io::save_overlay(&s.image, &[line], &marks, dir.join("track.png"))?;
    println!("{} samples, length {:.4}", g.len(), g.length);
    if let Some(m) = &s.cfg.mask {
        let e = mistake_ratio_of_polylines(&[&g.spatial()], &load_mask(m)?, false)?;
        println!("mistake ratio {e:.4}");
    }
    Ok(())
}

fn tree(cfg: TrackingConfig, per_tree: bool) -> Result<()> {
    let s = Session::from_config(cfg)?;
    let r = if per_tree { s.track_per_tree()? } else { s.track_tree_two_runs()? };
    let dir = output_dir(&s.cfg)?;
    write_tree_outputs(&s, &r, dir)?;
    let fails = r.failures();
    println!("{} sweeps, {} geodesics, {} failures", r.sweeps, r.geodesics().len(), fails.len());
    for f in fails {
        if let Err(e) = &f.result {
            eprintln!("{} {}: {e}", f.run.tag(), f.index);
        }
    }
    if let Some(m) = &s.cfg.mask {
        let curves: Vec<Vec<(f64, f64)>> = r.geodesics().iter().map(|g| g.spatial()).collect();
        let refs: Vec<&[(f64, f64)]> = curves.iter().map(|c| c.as_slice()).collect();
        if !refs.is_empty() {
            println!("mistake ratio {:.4}", mistake_ratio_of_polylines(&refs, &load_mask(m)?, false)?);
        }
    }
    Ok(())
}

fn csv_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<Vec<_>>>()?
                .into_iter()
                .filter(|f| f.extension().is_some_and(|x| x == "csv"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn eval(cfg: TrackingConfig, paths: &[PathBuf], dilate_mask: bool) -> Result<()> {
    let mask_path = cfg.mask.as_ref().ok_or_else(|| Error::Config("eval needs a mask (--mask)".into()))?;
    let mask = load_mask(mask_path)?;
    let mut all = Vec::new();
    for f in csv_files(paths)? {
        let line: Vec<(f64, f64)> = io::read_polyline_csv(&f)?.iter().map(|r| (r.x, r.y)).collect();
        if line.is_empty() {
            continue;
        }
        let e = mistake_ratio_of_polylines(&[&line], &mask, dilate_mask)?;
        println!("{}\t{e:.4}", f.display());
        all.push(line);
    }
    let refs: Vec<&[(f64, f64)]> = all.iter().map(|c| c.as_slice()).collect();
    println!("all\t{:.4}", mistake_ratio_of_polylines(&refs, &mask, dilate_mask)?);
    if dilate_mask {
        io::save_gray(&dilate(&mask), 0.0, 1.0, cfg.output.join("mask_dilated.png")).ok();
    }
    Ok(())
}

fn phantom_config(base: &TrackingConfig, ph: &Phantom) -> TrackingConfig {
    let pt = |a: &Annotated| match a.theta {
        Some(t) => vec![a.x, a.y, t],
        None => vec![a.x, a.y],
    };
    let mut cfg = base.clone();
    cfg.points.seeds = ph.seeds.iter().map(pt).collect();
    cfg.points.tips = ph.tips.iter().map(pt).collect();
    cfg.points.bifurcations = ph.bifurcations.iter().map(pt).collect();
    cfg.points.tip_seeds = ph.tip_seeds.clone();
    cfg
}

fn figure(base: TrackingConfig, which: Figure) -> Result<()> {
    let dir = output_dir(&base)?.to_path_buf();
    let style = TubeStyle::default();
    match which {
        Figure::Curvature => {
            let ph = s_curve(96, 64, 2.0, 0.3, &style);
            let mut cfg = phantom_config(&base, &ph);
            cfg.ntheta = 8;
            cfg.cost.kind = CostKind::Score;
            cfg.cost.score_contrast = 200.0;
            cfg.model.zeta = 0.25;
            cfg.model.lambda_dd = 100.0;
            let mut lines = Vec::new();
            for (metric, color, tag) in [
                (MetricKind::DataDriven, [255, 64, 64], "data_driven"),
                (MetricKind::LeftInvariant, [64, 160, 255], "left_invariant"),
            ] {
                let s = Session::new(TrackingConfig { metric, ..cfg.clone() }, ph.image.clone())?;
                match s.track_single(&ph.tips[0], &ph.seeds[0]) {
                    Ok(t) => {
                        t.geodesic.write_csv(dir.join(format!("curvature_{tag}.csv")))?;
                        let e = mistake_ratio_of_polylines(&[&t.geodesic.spatial()], &ph.mask, false)?;
                        println!("{tag}: mistake ratio {e:.4}");
                        lines.push(Polyline {
                            points: t.geodesic.spatial(),
                            color,
                        });
                    }
                    Err(e) => println!("{tag}: {e}"),
                }
            }
            let marks = [((ph.tips[0].x, ph.tips[0].y), MarkerKind::Tip), ((ph.seeds[0].x, ph.seeds[0].y), MarkerKind::Seed)];
            io::save_overlay(&ph.image, &lines, &marks, dir.join("curvature.png"))
        }
        Figure::Tree | Figure::Rotation => {
            let (ph, per_tree) = match which {
                Figure::Tree => (y_tree(128, 128, &style), false),
                _ => (y_tree_angled(96, 96, 100f64.to_radians(), &style), true),
            };
            let mut cfg = phantom_config(&base, &ph);
            cfg.output = dir.join(if per_tree { "rotation" } else { "tree" });
            if per_tree {
                cfg.metric = MetricKind::LeftInvariant;
            }
            let s = Session::new(cfg, ph.image.clone())?;
            let r = if per_tree { s.track_per_tree()? } else { s.track_tree_two_runs()? };
            write_tree_outputs(&s, &r, &s.cfg.output)?;
            let g: Vec<&Geodesic> = r.geodesics();
            let curves: Vec<Vec<(f64, f64)>> = g.iter().map(|g| g.spatial()).collect();
            let refs: Vec<&[(f64, f64)]> = curves.iter().map(|c| c.as_slice()).collect();
            if !refs.is_empty() {
                println!("mistake ratio {:.4}", mistake_ratio_of_polylines(&refs, &ph.mask, false)?);
            }
            io::save_gray(&ph.mask, 0.0, 1.0, s.cfg.output.join("mask.png"))?;
            io::save_overlay(&ph.image, &[], &markers(&s.cfg)?, s.cfg.output.join("points.png"))?;
            println!("{} geodesics, {} failures, written to {}", g.len(), r.failures().len(), s.cfg.output.display());
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.opts)?;
    match cli.cmd {
        Cmd::Lift => lift(cfg),
        Cmd::Cost { run } => cost(cfg, run),
        Cmd::Solve => solve(cfg),
        Cmd::Track { from, to } => track(cfg, from, to),
        Cmd::Tree { per_tree } => tree(cfg, per_tree),
        Cmd::Eval { paths, dilate } => eval(cfg, &paths, dilate),
        Cmd::Figure { which } => figure(cfg, which),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
