use dgnet::experiment::{assemble_for, build_space};
use dgnet::fe_space::interpolate;
use dgnet::oracle::{l2_error, manufactured_problem, solve_fe_minimizer};
use dgnet::par;
use dgnet::resnet::{forward, init_params, NetDims};
use dgnet::training::{train_collocation, train_fe, TrainConfig, TrainMode};
use dgnet::quadrature::triangle_rule;

fn small_config(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, component_every: 10, ..TrainConfig::default() }
}

#[test]
fn fe_training_end_to_end() {
    let problem = manufactured_problem("sine").unwrap();
    let space = build_space(&problem, 6).unwrap();
    let form = assemble_for(&problem, &space, 2, 60.0, true).unwrap();
    let params = init_params(NetDims::new(2, 16, 2).unwrap(), 4);

    let report = train_fe(&params, &form, &space, &small_config(200)).unwrap();
    assert_eq!(report.epochs(), 200);
    assert!(report.final_loss < report.history[0].loss);

    // epoch 0 is evaluated at the initial network
    let u0 = interpolate(&space, |p| forward(&params, &[p]).unwrap()[0]).unwrap();
    let e0 = form.value(&u0);
    assert!((report.history[0].loss - e0).abs() <= 1e-12 * e0.abs());

    let oracle = solve_fe_minimizer(&form).unwrap();
    assert!(report.final_loss >= oracle.energy - 1e-8);

    let err = l2_error(&report.final_params, &problem, space.mesh(), 6).unwrap();
    assert!(err.is_finite() && err > 0.0);
}

#[test]
fn single_worker_runs_are_bitwise_reproducible() {
    let problem = manufactured_problem("sine").unwrap();
    let space = build_space(&problem, 4).unwrap();
    let form = assemble_for(&problem, &space, 2, 60.0, true).unwrap();
    let params = init_params(NetDims::new(2, 8, 2).unwrap(), 9);
    let cfg = small_config(40);
    let run = || par::single_worker(|| train_fe(&params, &form, &space, &cfg).unwrap());
    let (a, b) = (run(), run());
    let losses = |r: &dgnet::training::RunReport| r.history.iter().map(|h| h.loss.to_bits()).collect::<Vec<_>>();
    assert_eq!(losses(&a), losses(&b));
    assert_eq!(a.final_params, b.final_params);

    // the default pool reduces in the same order
    let c = train_fe(&params, &form, &space, &cfg).unwrap();
    assert_eq!(losses(&a), losses(&c));
}

#[test]
fn collocation_end_to_end() {
    let problem = manufactured_problem("sine").unwrap();
    let space = build_space(&problem, 4).unwrap();
    let rule = triangle_rule(2).unwrap();
    let params = init_params(NetDims::new(2, 8, 1).unwrap(), 2);
    let cfg = TrainConfig { mode: TrainMode::Collocation, ..small_config(100) };
    let report = train_collocation(&params, &space, &rule, &problem, &cfg).unwrap();
    assert!(report.final_loss < report.history[0].loss);
    assert_eq!(report.training_points, space.num_elements() * rule.len() + space.boundary_dofs.len());
}

#[test]
fn lshape_pipeline() {
    let problem = manufactured_problem("lshape").unwrap();
    let space = build_space(&problem, 0).unwrap();
    let form = assemble_for(&problem, &space, 1, 60.0, true).unwrap();
    let oracle = solve_fe_minimizer(&form).unwrap();
    let params = init_params(NetDims::new(2, 8, 1).unwrap(), 0);
    let report = train_fe(&params, &form, &space, &small_config(50)).unwrap();
    assert!(report.final_loss >= oracle.energy - 1e-8);
}
