use std::fs;
use std::sync::Arc;

use proptest::prelude::*;
use riesz_flow::io::{self, Field};
use riesz_flow::{CliError, RunConfig};
use riesz_flow_core::flow::diagnostics;
use riesz_flow_core::{build_intertwining_kernel, build_sphere, Geometry, GeometryKind, SphereScheme};

fn circle(count: usize) -> Arc<Geometry> {
    Arc::new(build_sphere(1, count, SphereScheme::UniformAngle).unwrap())
}

#[test]
fn geometry_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    for g in [
        build_sphere(1, 32, SphereScheme::UniformAngle).unwrap(),
        build_sphere(2, 40, SphereScheme::Fibonacci).unwrap(),
        build_sphere(2, 40, SphereScheme::EqualArea).unwrap(),
    ] {
        for with_d in [true, false] {
            let p = dir.path().join("g.geom");
            io::save_geometry(&p, &g, with_d).unwrap();
            let back = io::load_geometry(&p).unwrap();
            assert_eq!(back.nodes(), g.nodes());
            assert_eq!(back.weights(), g.weights());
            assert_eq!(back.kind(), g.kind());
            assert_eq!(back.total_volume(), g.total_volume());
            assert_eq!(back.chordal_table(), g.chordal_table());
            if with_d {
                assert_eq!(back, g);
            }
        }
    }
}

#[test]
fn kernel_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let g = circle(48);
    let k = build_intertwining_kernel(g.clone(), 0.25).unwrap();
    let p = dir.path().join("k.kernel");
    io::save_kernel(&p, &k).unwrap();
    let back = io::load_kernel(&p, g).unwrap();
    assert_eq!(back.matrix(), k.matrix());
    assert_eq!(back.header(), k.header());
}

#[test]
fn asymmetric_kernel_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let g = circle(16);
    let k = build_intertwining_kernel(g.clone(), 0.25).unwrap();
    let text = io::kernel_to_string(&k);
    // Perturb the first off-diagonal entry of the first row only.
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let row = lines.iter().position(|l| l == "matrix").unwrap() + 1;
    let mut vals: Vec<f64> = lines[row].split(' ').map(|v| v.parse().unwrap()).collect();
    vals[1] *= 1.01;
    lines[row] = vals.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ");
    let p = dir.path().join("k.kernel");
    fs::write(&p, lines.join("\n")).unwrap();
    let err = io::load_kernel(&p, g).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("symmetr"), "{err}");
}

#[test]
fn kernel_for_other_geometry_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let k = build_intertwining_kernel(circle(16), 0.25).unwrap();
    let p = dir.path().join("k.kernel");
    io::save_kernel(&p, &k).unwrap();
    assert!(matches!(io::load_kernel(&p, circle(32)), Err(CliError::Config(_))));
}

#[test]
fn malformed_files_report_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("f.field");
    fs::write(&p, "# riesz-flow field\ncount 3\nvalues\n1.0\nabc\n2.0\n").unwrap();
    match io::load_field(&p) {
        Err(CliError::Parse { line, msg, .. }) => {
            assert_eq!(line, 5);
            assert!(msg.contains("abc"));
        }
        other => panic!("{other:?}"),
    }
    fs::write(&p, "# riesz-flow field\ncount 3\nvalues\n1.0\n").unwrap();
    assert!(matches!(io::load_field(&p), Err(CliError::Parse { .. })));
    fs::write(&p, "count 3\nvalues\n1\n2\n3\n").unwrap();
    assert!(matches!(io::load_field(&p), Err(CliError::Parse { line: 1, .. })));
    fs::write(&p, "# riesz-flow field\ncount 2\nvalues\n1\n2\n3\n").unwrap();
    assert!(matches!(io::load_field(&p), Err(CliError::Parse { line: 6, .. })));
}

#[test]
fn invalid_geometry_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let g = build_sphere(1, 8, SphereScheme::UniformAngle).unwrap();
    let text = io::geometry_to_string(&g, false);
    // Duplicate the first node over the second.
    let mut lines: Vec<&str> = text.lines().collect();
    let first = lines.iter().position(|l| *l == "nodes").unwrap() + 1;
    lines[first + 1] = lines[first];
    let p = dir.path().join("g.geom");
    fs::write(&p, lines.join("\n")).unwrap();
    let err = io::load_geometry(&p).unwrap_err();
    assert!(err.to_string().contains("coincident"), "{err}");

    let bad_weight = text.replacen("weights\n", "weights\n-1.0\n", 1).replacen("\n0.7853981633974483\n", "\n", 1);
    fs::write(&p, bad_weight).unwrap();
    assert!(io::load_geometry(&p).is_err());
}

#[test]
fn point_cloud_without_distances_uses_great_circles() {
    let dir = tempfile::tempdir().unwrap();
    let g = build_sphere(1, 12, SphereScheme::UniformAngle).unwrap();
    let cloud = Geometry::from_parts(1, 2, g.nodes().to_vec(), g.weights().to_vec(), None, GeometryKind::PointCloud)
        .unwrap();
    let p = dir.path().join("c.geom");
    io::save_geometry(&p, &cloud, false).unwrap();
    let back = io::load_geometry(&p).unwrap();
    assert_eq!(back.kind(), GeometryKind::PointCloud);
    assert_eq!(back.geodesic_table(), cloud.geodesic_table());
}

#[test]
fn diagnostics_csv_has_seventeen_digits() {
    let dir = tempfile::tempdir().unwrap();
    let g = circle(16);
    let k = build_intertwining_kernel(g, 0.25).unwrap();
    let u: Vec<f64> = (0..16).map(|i| 1.0 + 0.1 * i as f64).collect();
    let q = [1.0, 2.0, 0.5];
    let rec = diagnostics(&k, &u, 2.0, &q);
    let p = dir.path().join("d.csv");
    io::write_diagnostics(&p, &q, &[rec.clone(), rec.clone()]).unwrap();
    let text = fs::read_to_string(&p).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, "t,V,a,J,M_1,M_2,M_0.5,G,Z,harnack,ps_residual,dt");
    let (cols, rows) = io::read_diagnostics(&p).unwrap();
    assert_eq!(cols.len(), 12);
    assert_eq!(rows[1][1], rec.v);
    assert_eq!(rows[1][7], rec.g);
    for cell in text.lines().nth(1).unwrap().split(',') {
        let mantissa = cell.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
        assert_eq!(mantissa.len(), 17, "{cell}");
    }
}

#[test]
fn manifest_append_accumulates_entries() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("manifest.toml");
    for i in 0..3 {
        let mut t = toml::Table::new();
        t.insert("i".into(), toml::Value::Integer(i));
        io::append_to_manifest(&p, "entry", t).unwrap();
    }
    let t = io::read_toml(&p).unwrap();
    assert_eq!(t["entry"].as_array().unwrap().len(), 3);
    assert!(!dir.path().join("manifest.toml.tmp").exists());
}

#[test]
fn config_validation_lists_every_violation() {
    let cfg = RunConfig {
        sigma: 0.5,
        m: Some(-0.5),
        t_end: 0.0,
        regime: "sideways".into(),
        u0: "const:-1".into(),
        nodes: 4,
        ..RunConfig::default()
    };
    match cfg.validate() {
        Err(CliError::Violations(v)) => {
            assert_eq!(v.len(), 6, "{v:?}");
            assert!(v.iter().any(|s| s.contains("sigma")));
            assert!(v.iter().any(|s| s.contains("m = -0.5")));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn config_edge_cases() {
    let base = RunConfig::default();
    let sigma_at_half = RunConfig { sigma: 0.5, ..base.clone() };
    assert!(sigma_at_half.validate().is_err());
    let m_zero = RunConfig { m: Some(0.0), ..base.clone() };
    assert!(m_zero.validate().is_err());
    let exploratory = RunConfig { m: Some(0.2), regime: "raw".into(), ..base.clone() };
    let v = exploratory.validate().unwrap();
    assert_eq!(v.warnings.len(), 1);
    assert!(base.validate().unwrap().warnings.is_empty());
    let scheme = RunConfig { n: 2, scheme: "uniform_angle".into(), sigma: 0.5, ..base.clone() };
    assert!(scheme.validate().is_err());
    let missing = RunConfig { geometry_file: Some("/nonexistent/g.geom".into()), ..base };
    assert!(matches!(missing.validate(), Err(CliError::Violations(v)) if v[0].contains("does not exist")));
}

#[test]
fn unknown_keys_are_listed_with_other_violations() {
    let t: toml::Table = "sigma = 0.75\nbogus = 1\nalso_bogus = \"x\"".parse().unwrap();
    match RunConfig::from_table_validated(t) {
        Err(CliError::Violations(v)) => assert_eq!(v.len(), 3, "{v:?}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn presets_are_valid() {
    for name in riesz_flow::presets::names() {
        let t = riesz_flow::presets::preset(name).unwrap();
        let (cfg, _) = RunConfig::from_table_validated(t).unwrap();
        assert_eq!(cfg.name, name);
    }
    assert!(riesz_flow::presets::preset("no-such").is_err());
}

#[test]
fn config_table_round_trip() {
    let cfg = RunConfig { m: Some(2.0), u0_volume: Some(1.0), q_set: vec![2.0, 1.5], ..RunConfig::default() };
    assert_eq!(RunConfig::from_table(cfg.to_table()).unwrap(), cfg);
}

proptest! {
    #[test]
    fn field_round_trip(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..40),
                        t in prop::option::of(-1e6f64..1e6)) {
        let f = Field { values, t };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.field");
        io::save_field(&p, &f).unwrap();
        let back = io::load_field(&p).unwrap();
        prop_assert_eq!(back.t, f.t);
        prop_assert_eq!(back.values.len(), f.values.len());
        for (a, b) in back.values.iter().zip(&f.values) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
