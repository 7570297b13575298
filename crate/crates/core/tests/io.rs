use glmscreen::construct::{fractional_factorial, min_support_poisson, FactorialSpec};
use glmscreen::selection::{select, Criterion};
use glmscreen::{Dataset, Design, DesignKind, DesignMeta, Family, ModelSpace, PriorSpec};

#[test]
fn design_json_round_trips_through_a_file() {
    let prior = PriorSpec::signed_uniform(4, 1.0).unwrap();
    let design = min_support_poisson(&prior, 4).unwrap();
    let meta = DesignMeta {
        seed: Some(11),
        source: Some("construct".into()),
        objective: Some(1.25),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("design.json");
    std::fs::write(&path, design.to_json(Some(&meta)).unwrap()).unwrap();
    let (back, back_meta) = Design::read_json(&path).unwrap();
    assert_eq!(back, design);
    assert_eq!(back_meta.unwrap().seed, Some(11));
}

#[test]
fn exact_design_keeps_counts() {
    let spec = FactorialSpec::from_catalogue(5, 1).unwrap();
    let design = fractional_factorial(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ff.json");
    std::fs::write(&path, design.to_json(None).unwrap()).unwrap();
    let (back, meta) = Design::read_json(&path).unwrap();
    assert!(meta.is_none());
    assert_eq!(back.kind(), DesignKind::Exact);
    assert_eq!(back.runs(), Some(16));
}

#[test]
fn malformed_design_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"q\": 1, \"kind\": \"approximate\", \"points\": [[2.0]], \"weights\": [1.0]}").unwrap();
    assert!(Design::read_json(&path).is_err());
    assert!(Design::read_json(&dir.path().join("missing.json")).is_err());
}

#[test]
fn dataset_csv_round_trip_and_selection() {
    let x: Vec<Vec<f64>> = (0..24).map(|i| vec![if i % 2 == 0 { -1.0 } else { 1.0 }, ((i / 2) % 3) as f64 - 1.0]).collect();
    let y: Vec<f64> = x.iter().enumerate().map(|(i, r)| if r[0] > 0.0 { 8.0 + (i % 3) as f64 } else { (i % 2) as f64 }).collect();
    let data = Dataset::new(Family::poisson(), x, y).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    data.write_csv(std::fs::File::create(&path).unwrap(), false).unwrap();
    let back = Dataset::read_csv_path(Family::poisson(), &path).unwrap();
    assert_eq!(back.x(), data.x());
    assert_eq!(back.y(), data.y());

    let space = ModelSpace::enumerate(2, 2).unwrap();
    let a = select(&space, &data, Family::poisson(), Criterion::Aic).unwrap();
    let b = select(&space, &back, Family::poisson(), Criterion::Aic).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert!(a.active.contains(&1));
}
