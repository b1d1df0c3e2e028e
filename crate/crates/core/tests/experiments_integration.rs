use sr_core::experiments::{
    pipeline_system, run_pipeline_comparison, run_pipeline_on, ExperimentConfig, Pipeline, PipelineParams,
};
use sr_core::io::{load_matrix_csv, write_matrix_csv};
use sr_core::{FormatSpec, Matrix, RoundingMode};

fn q48() -> FormatSpec {
    "q4.8".parse().unwrap()
}

#[test]
fn input_only_is_no_worse_than_full_on_a_well_conditioned_system() {
    let cfg = ExperimentConfig::new(q48(), vec![RoundingMode::SrProportional], 11, 200);
    let r = run_pipeline_comparison(&cfg, &PipelineParams { rows: 100, cols: 4 }).unwrap();
    let input = r.row(RoundingMode::SrProportional, Pipeline::InputOnly).unwrap();
    let full = r.row(RoundingMode::SrProportional, Pipeline::Full).unwrap();
    assert_eq!(input.failed, 0);
    let (a, b) = (input.error.unwrap(), full.error.unwrap());
    assert!(a.median <= b.median, "input-only {} vs full {}", a.median, b.median);
    assert_eq!(r.to_table().to_csv_string(), run_pipeline_comparison(&cfg, &PipelineParams { rows: 100, cols: 4 }).unwrap().to_table().to_csv_string());
}

#[test]
fn identity_system_is_solved_exactly_by_both_pipelines() {
    let cfg = ExperimentConfig::new(q48(), vec![RoundingMode::NearestEven, RoundingMode::SrProportional], 1, 30);
    let x = [0.5, -1.25, 2.0];
    let r = run_pipeline_on(&cfg, &Matrix::identity(3), &x).unwrap();
    for row in &r.rows {
        assert_eq!(row.failed, 0);
        assert_eq!(row.error.unwrap().q95, 0.0);
    }
}

#[test]
fn pipeline_system_fits_the_grid_range() {
    let (a, x) = pipeline_system(4, &PipelineParams { rows: 100, cols: 4 }).unwrap();
    assert!(a.data().iter().all(|v| v.abs() <= 0.5));
    assert_eq!(x, vec![1.0, -0.5, 0.25, 0.75]);
}

#[test]
fn matrix_csv_round_trip_is_bit_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("m.csv");
    let a = Matrix::from_rows(&[vec![0.1, -1.0 / 3.0], vec![1e-300, 6.02214076e23], vec![f64::MIN_POSITIVE, -0.0]]).unwrap();
    write_matrix_csv(&a, &path).unwrap();
    let b = load_matrix_csv(&path).unwrap();
    assert_eq!((b.rows(), b.cols()), (3, 2));
    for (x, y) in a.data().iter().zip(b.data()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}
