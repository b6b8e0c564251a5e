use isac_core::dts::{run_dts, DtsConfig, TrackStatus};
use isac_core::geometry::Point;
use isac_core::metrics::ser_metrics;
use isac_core::netmgmt::{onoff_schedule, DemandMap, NetObjective};
use isac_core::omr::{ring_probes, run_omr, OmrConfig};
use isac_core::scene::{build_scene, propagate, ScenarioConfig, Scene};
use isac_core::ser::{reconstruct_scene, SerOptions};
use proptest::prelude::*;
use std::path::Path;

fn load(name: &str) -> (ScenarioConfig, Scene) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    let config = ScenarioConfig::from_json_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let scene = build_scene(&config, 0).unwrap();
    (config, scene)
}

#[test]
fn three_targets_end_up_on_confirmed_tracks() {
    let (config, scene) = load("dts_three_targets.json");
    let ofdm = config.ofdm.unwrap();
    let cfg = DtsConfig::default();
    let run = run_dts(&scene, 0, &ofdm, &cfg, 30, 5).unwrap();
    let last = run.frames.last().unwrap();
    let truth = propagate(&scene, last.time).unwrap();
    let confirmed: Vec<Point> = last
        .tracks
        .iter()
        .filter(|t| t.status == TrackStatus::Confirmed)
        .map(|t| Point::new(t.state[0], t.state[1]))
        .collect();
    assert_eq!(confirmed.len(), truth.targets.len());
    for t in &truth.targets {
        let d = confirmed.iter().map(|p| p.distance(t.position)).fold(f64::INFINITY, f64::min);
        assert!(d < 1.0, "target {} is {d:.2} m from the nearest track", t.id);
    }
}

#[test]
fn phantom_support_is_recovered() {
    let (_, scene) = load("omr_phantom.json");
    let grid = scene.material_grid.unwrap();
    let probes = ring_probes(&grid, 1.5, 8, 8, &[3e9, 4e9, 5e9, 6e9]);
    let run = run_omr(&grid, &probes, &OmrConfig::default(), 3).unwrap();
    let truth: Vec<usize> = (0..grid.contrast.len()).filter(|&i| grid.contrast[i].norm() > 0.0).collect();
    let mut support = run.support.clone();
    support.sort_unstable();
    assert_eq!(support, truth);
    let labels: std::collections::BTreeSet<_> = run.materials.iter().map(|(_, m)| m.cluster_label.unwrap()).collect();
    assert_eq!(labels.len(), 3, "each phantom material gets its own cluster");
}

#[test]
fn desk_scatterers_are_located_within_decimetres() {
    let (config, scene) = load("desk_e2e.json");
    let ofdm = config.ofdm.unwrap();
    let truth: Vec<Point> = scene.sesps.iter().map(|s| s.position).collect();
    for bs in 0..scene.bs.len() {
        let points: Vec<Point> = reconstruct_scene(&scene, bs, &ofdm, &SerOptions::default(), 0)
            .unwrap()
            .into_iter()
            .flat_map(|(_, r)| r.map.points.into_iter().map(|p| p.position))
            .collect();
        let m = ser_metrics(&points, &truth).unwrap();
        assert!(m.n_points >= truth.len(), "bs {bs}: {} points", m.n_points);
        assert!(m.median_error < 0.3, "bs {bs}: median {:.3} m", m.median_error);
    }
}

#[test]
fn campus_onoff_trace_never_decreases() {
    let (_, scene) = load("net_campus.json");
    let demand = DemandMap::uniform(&scene.bounds, 10.0).unwrap();
    let obj = NetObjective {
        coverage_radius: 80.0,
        energy_cost: 3.0,
        interference_weight: 1e6,
        ..NetObjective::default()
    };
    let s = onoff_schedule(&scene, &demand, &obj).unwrap();
    assert_eq!(s.on.len(), scene.bs.len());
    assert!(s.trace.windows(2).all(|w| w[1] >= w[0]), "{:?}", s.trace);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn propagation_composes(a in 0.0..2.0f64, b in 0.0..2.0f64) {
        let (_, scene) = load("dts_three_targets.json");
        let two = propagate(&propagate(&scene, a).unwrap(), b).unwrap();
        let one = propagate(&scene, a + b).unwrap();
        for (x, y) in two.targets.iter().zip(&one.targets) {
            prop_assert!(x.position.distance(y.position) < 1e-9);
        }
    }
}
