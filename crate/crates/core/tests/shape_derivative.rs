use std::path::PathBuf;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shapemap::io::msh::read_msh;
use shapemap::mesh::generate::{generate_disk_in_square, Ellipse};
use shapemap::mesh::Mesh;
use shapemap::models::flow::FlowParams;
use shapemap::models::target::TrackingTarget;
use shapemap::models::transmission::{make_desired_state, TransmissionParams};
use shapemap::par::Exec;
use shapemap::shape_grad::check::{central_difference_check, cutoff_translation, smooth_random_field, typical_edge_length, DEFAULT_STEPS};
use shapemap::shape_grad::flow::FlowProblem;
use shapemap::shape_grad::transmission::TransmissionProblem;
use shapemap::shape_grad::ShapeProblem;

fn pipes_coarse() -> Arc<Mesh> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets/pipes/pipes_coarse.msh");
    Arc::new(read_msh(path).unwrap())
}

fn paper_ellipse() -> Ellipse {
    Ellipse { center: [0.5, 0.5], semi_major: 0.3, semi_minor: 0.15, angle: 30f64.to_radians() }
}

fn transmission_problem(params: TransmissionParams, reference: &Arc<Mesh>) -> TransmissionProblem {
    let target = make_desired_state(&TransmissionParams::default(), paper_ellipse(), 24, reference, Exec::default()).unwrap();
    TransmissionProblem::new(params, Arc::new(TrackingTarget::eulerian(&target).unwrap()))
}

fn check_random_fields(problem: &dyn ShapeProblem, mesh: &Arc<Mesh>, seed: u64, count: usize) {
    let fixed = problem.fixed_nodes(mesh).unwrap();
    let amplitude = 6.0 * typical_edge_length(mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..count {
        let v = smooth_random_field(mesh, &fixed, amplitude, &mut rng);
        let report = central_difference_check(problem, mesh, &v, &DEFAULT_STEPS).unwrap();
        eprintln!("field {k}: {report:?} order {}", report.order());
        assert!(report.order() >= 1.8, "field {k}: {report:?}");
    }
}

#[test]
fn linear_transmission_derivative_has_second_order_differences() {
    let mesh = Arc::new(generate_disk_in_square(0.2, 16).unwrap());
    let problem = transmission_problem(TransmissionParams::default().linear(), &mesh);
    check_random_fields(&problem, &mesh, 1, 5);
}

#[test]
fn semilinear_transmission_derivative_has_second_order_differences() {
    let mesh = Arc::new(generate_disk_in_square(0.2, 12).unwrap());
    let problem = transmission_problem(TransmissionParams::default(), &mesh);
    check_random_fields(&problem, &mesh, 2, 5);
}

#[test]
fn mesh_attached_target_derivative_has_second_order_differences() {
    let mesh = Arc::new(generate_disk_in_square(0.2, 16).unwrap());
    let target = make_desired_state(&TransmissionParams::default(), paper_ellipse(), 24, &mesh, Exec::default()).unwrap();
    let problem = TransmissionProblem::new(TransmissionParams::default().linear(), Arc::new(TrackingTarget::nodal(&target).unwrap()));
    check_random_fields(&problem, &mesh, 4, 5);
}

#[test]
fn interface_translation_matches_differences() {
    let mesh = Arc::new(generate_disk_in_square(0.2, 16).unwrap());
    let problem = transmission_problem(TransmissionParams::default().linear(), &mesh);
    let v = cutoff_translation(&mesh, [0.5, 0.5], 0.22, 0.4, [0.4, -0.3]);
    let report = central_difference_check(&problem, &mesh, &v, &DEFAULT_STEPS).unwrap();
    assert!(report.order() >= 1.8, "{report:?}");
}

#[test]
fn stokes_rates_derivative_has_second_order_differences() {
    let mesh = pipes_coarse();
    let problem = FlowProblem::new(FlowParams::default().stokes(), vec![1.0 / 3.0; 3]);
    check_random_fields(&problem, &mesh, 3, 5);
}

#[test]
fn navier_stokes_rates_derivative_has_second_order_differences() {
    let mesh = pipes_coarse();
    let problem = FlowProblem::new(FlowParams::default(), vec![1.0 / 3.0; 3]);
    check_random_fields(&problem, &mesh, 4, 5);
}

