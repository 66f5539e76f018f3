use failsafe_stop::field::{
    encode_pgm, from_csv_reader, generate_brownian, generate_scenario, read_csv, render_pgm, write_csv, GridShape,
    MovingBand, ScenarioSpec, StaticZone,
};
use failsafe_stop::kinematics::trajectory_fan;
use failsafe_stop::{Error, PenaltyField, PlanParams};

fn shape(n_t: usize, n_s: usize) -> GridShape {
    GridShape { n_t, n_s, dt: 0.1, ds: 0.25 }
}

#[test]
fn brownian_mean_is_central() {
    // measured over 40 seeds: means stay within [0.27, 0.70]
    let means: Vec<f64> =
        (0..40u64).map(|seed| generate_brownian(seed, shape(100, 400), 8).unwrap().stats().2).collect();
    assert!(means.iter().all(|m| (0.2..0.8).contains(m)), "{means:?}");
    let (min, max, mean) = generate_brownian(1, shape(100, 400), 8).unwrap().stats();
    assert!(min.abs() < 1e-12 && (max - 1.0).abs() < 1e-12);
    assert!(mean > 0.2 && mean < 0.8);
}

#[test]
fn csv_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.csv");
    let field = generate_brownian(5, shape(20, 50), 4).unwrap();
    write_csv(&field, &path).unwrap();
    let back = read_csv(&path).unwrap();
    assert_eq!((back.n_t(), back.n_s(), back.dt(), back.ds()), (20, 50, 0.1, 0.25));
    for (a, b) in field.values().iter().zip(back.values()) {
        assert!((a - b).abs() <= 1e-9);
    }
}

#[test]
fn csv_errors_name_the_line() {
    let text = "# t0=0 dt=0.1 ds=0.25 nt=2 ns=3\n0,0,0\n0,-1,0\n";
    match from_csv_reader(text.as_bytes()) {
        Err(Error::Format { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    let text = "# t0=0 dt=0.1 ds=0.25 nt=3 ns=2\n0,0\n0,0\n";
    assert!(matches!(from_csv_reader(text.as_bytes()), Err(Error::Format { .. })));
    assert!(matches!(read_csv("/nonexistent/field.csv"), Err(Error::Io(_))));
}

#[test]
fn scenario_band_and_zone() {
    let spec = ScenarioSpec {
        bands: vec![MovingBand { s0: 20.0, speed: 10.0, width: 0.5, weight: 1.0 }],
        zones: vec![StaticZone { s_from: 40.0, s_to: 50.0, weight: 0.5 }],
    };
    let f = generate_scenario(&spec, shape(10, 400)).unwrap();
    // row 1 is 0.1 s in: the band centre has moved to 21 m, column 84
    assert_eq!(f.value(1, 84), 1.0);
    assert_eq!(f.value(1, 80), 0.0);
    for row in 0..10 {
        assert_eq!(f.value(row, 160), 0.5);
        assert_eq!(f.value(row, 200), 0.5);
        assert_eq!(f.value(row, 159), 0.0);
        assert_eq!(f.value(row, 201), 0.0);
    }
}

#[test]
fn pgm_file_with_fan() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.pgm");
    let field = PenaltyField::constant(0.1, 0.5, 30, 100, 0.0).unwrap();
    let p = PlanParams { v0: 15.0, ..PlanParams::default() };
    let fan = trajectory_fan(&p, p.a_prev, 0.1, 30, 5);
    render_pgm(&field, Some(&fan), &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(bytes, encode_pgm(&field, Some(&fan)));
    let header = b"P5\n100 30\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    let pixels = &bytes[header.len()..];
    assert_eq!(pixels.len(), 3000);
    // 1.5 m into row 1 at 0.5 m columns
    assert_eq!(pixels[100 + 3], 255);
    assert_eq!(pixels[100 + 10], 0);
}
