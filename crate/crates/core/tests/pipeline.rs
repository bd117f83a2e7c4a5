use m2track::geodesic::Geodesic;
use m2track::pipeline::eval::{centreline_coverage, in_place_rotation_samples, mistake_ratio};
use m2track::pipeline::phantom::{y_tree, y_tree_angled, Phantom, TubeStyle};
use m2track::pipeline::{write_tree_outputs, Annotated, MetricKind, Run, Session, TrackingConfig};

fn as_point(a: &Annotated) -> Vec<f64> {
    match a.theta {
        Some(t) => vec![a.x, a.y, t],
        None => vec![a.x, a.y],
    }
}

fn session(ph: &Phantom, ntheta: usize, metric: MetricKind) -> Session {
    let mut cfg = TrackingConfig { ntheta, metric, ..Default::default() };
    cfg.points.seeds = ph.seeds.iter().map(as_point).collect();
    cfg.points.tips = ph.tips.iter().map(as_point).collect();
    cfg.points.bifurcations = ph.bifurcations.iter().map(as_point).collect();
    cfg.points.tip_seeds = ph.tip_seeds.clone();
    Session::new(cfg, ph.image.clone()).unwrap()
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn hausdorff(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let one = |u: &[(f64, f64)], v: &[(f64, f64)]| {
        u.iter()
            .map(|&p| v.iter().map(|&q| dist(p, q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one(a, b).max(one(b, a))
}

fn last_xy(g: &Geodesic) -> (f64, f64) {
    let p = g.points.last().unwrap();
    (p.x, p.y)
}

#[test]
fn two_runs_end_at_bifurcation_and_seed() {
    let ph = y_tree(96, 96, &TubeStyle::default());
    let s = session(&ph, 16, MetricKind::DataDriven);
    let r = s.track_tree_two_runs().unwrap();
    assert_eq!(r.sweeps, 2);
    assert!(r.failures().is_empty(), "{:?}", r.failures());
    let bif = (ph.bifurcations[0].x, ph.bifurcations[0].y);
    let seed = (ph.seeds[0].x, ph.seeds[0].y);
    for p in &r.paths {
        let g = p.result.as_ref().unwrap();
        let target = if p.run == Run::TipToBifurcation { bif } else { seed };
        assert!(dist(last_xy(g), target) < 1.0, "{:?} ends at {:?}", p.run, last_xy(g));
    }
    assert_eq!(r.paths.iter().filter(|p| p.run == Run::TipToBifurcation).count(), 2);

    let curves: Vec<Vec<(f64, f64)>> = r.geodesics().iter().map(|g| g.spatial()).collect();
    let refs: Vec<&[(f64, f64)]> = curves.iter().map(|c| c.as_slice()).collect();
    let cov = centreline_coverage(&refs, &ph.centrelines(), 96, 96, 2.0);
    assert!(cov >= 0.95, "coverage {cov}");
    assert!(mistake_ratio(&r.geodesics(), &ph.mask, false).unwrap() <= 0.02);
}

#[test]
fn per_tree_branches_share_the_trunk() {
    let ph = y_tree(96, 96, &TubeStyle::default());
    let s = session(&ph, 16, MetricKind::DataDriven);
    let r = s.track_per_tree().unwrap();
    assert_eq!(r.sweeps, 1);
    let g = r.geodesics();
    assert_eq!(g.len(), 2, "{:?}", r.failures());
    // trunk samples: below the bifurcation
    let bif_y = ph.bifurcations[0].y;
    let trunk = |g: &Geodesic| -> Vec<(f64, f64)> { g.spatial().into_iter().filter(|p| p.1 > bif_y + 2.0).collect() };
    let (a, b) = (trunk(g[0]), trunk(g[1]));
    assert!(!a.is_empty() && !b.is_empty());
    let close = a
        .iter()
        .filter(|&&p| b.iter().any(|&q| dist(p, q) <= 2.0))
        .count();
    assert!(close as f64 >= 0.9 * a.len() as f64, "{close} of {}", a.len());
}

#[test]
fn sharp_branching_rotates_in_place_at_the_bifurcation() {
    let ph = y_tree_angled(96, 96, 100f64.to_radians(), &TubeStyle::default());
    let s = session(&ph, 16, MetricKind::LeftInvariant);
    let r = s.track_per_tree().unwrap();
    let bif = (ph.bifurcations[0].x, ph.bifurcations[0].y);
    let mut found = 0;
    for g in r.geodesics() {
        for i in in_place_rotation_samples(g, 5.0, 1.0) {
            let p = g.points[i];
            assert!(dist((p.x, p.y), bif) <= 3.0, "rotation at ({:.1}, {:.1})", p.x, p.y);
            found += 1;
        }
    }
    assert!(found > 0);
}

#[test]
fn outputs_are_deterministic() {
    let ph = y_tree(64, 64, &TubeStyle::default());
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let s = session(&ph, 8, MetricKind::DataDriven);
        let r = s.track_tree_two_runs().unwrap();
        write_tree_outputs(&s, &r, d.path()).unwrap();
    }
    let mut names: Vec<_> = std::fs::read_dir(dirs[0].path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|n| n.to_string_lossy().ends_with(".csv"))
        .collect();
    names.sort();
    assert!(!names.is_empty());
    for n in names {
        let a = std::fs::read(dirs[0].path().join(&n)).unwrap();
        let b = std::fs::read(dirs[1].path().join(&n)).unwrap();
        assert!(a == b, "{n:?} differs");
    }
}

#[test]
fn quarter_turn_rotates_the_tree() {
    let ph = y_tree(64, 64, &TubeStyle::default());
    let rot = ph.rotate_quarter();
    let run = |ph: &Phantom| {
        let r = session(ph, 8, MetricKind::DataDriven).track_tree_two_runs().unwrap();
        assert!(r.failures().is_empty());
        r.paths.iter().map(|p| p.result.as_ref().unwrap().spatial()).collect::<Vec<_>>()
    };
    let (a, b) = (run(&ph), run(&rot));
    assert_eq!(a.len(), b.len());
    let m = 63.0;
    for (ca, cb) in a.iter().zip(&b) {
        let turned: Vec<(f64, f64)> = ca.iter().map(|&(x, y)| (m - y, x)).collect();
        let d = hausdorff(&turned, cb);
        assert!(d <= 2.0, "hausdorff {d}");
    }
}
