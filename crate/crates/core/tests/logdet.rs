mod common;

use std::sync::Arc;

use common::{gaussian, log_abs_det, numeric_jacobian, randomize, rel_err, spec};
use flowbridge_core::flow::{CouplingBlock, Haar1d, Haar2d, PermutationLayer};
use flowbridge_core::params::ParamStore;
use flowbridge_core::ConditionSelector::{Domain as D, DomainTissue as DY, Unconditioned as Free};
use flowbridge_core::{Condition, Domain, FlowModel, Graph, InputShape, LinearOperator, RngStream, Tensor, TissueLabel};

const H: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn row(x: &[f64]) -> Tensor<f64> {
    Tensor::new(vec![1, x.len()], x.to_vec()).unwrap()
}

#[test]
fn coupling_logdet_matches_numeric_jacobian() {
    let mut rng = RngStream::new(11);
    for d in [2, 4, 8] {
        let mut store = ParamStore::new();
        let block = CouplingBlock::new(&mut store, "c", d, d / 2, 3, &[16, 16], 1.0, &mut rng).unwrap();
        randomize(&mut store, &mut rng, 1.5);
        let cond = Tensor::new(vec![1, 3], vec![0.0, 1.0, 0.0]).unwrap();
        let run = |x: &[f64]| {
            let mut g = Graph::new();
            let b = store.bind(&mut g, false);
            let xv = g.constant(row(x));
            let c = g.constant(cond.clone());
            let (y, ld) = block.forward(&mut g, &b, xv, Some(c)).unwrap();
            (g.value(y).data().to_vec(), g.value(ld).item())
        };
        for _ in 0..5 {
            let x: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let (_, analytic) = run(&x);
            let num = log_abs_det(numeric_jacobian(|p| run(p).0, &x, H));
            assert!(analytic.abs() > 1e-3, "degenerate test block");
            assert!(rel_err(analytic, num) < TOL, "d={d}: {analytic} vs {num}");
            assert!((analytic.exp() - num.exp()).abs() / num.exp() < TOL);
        }
    }
}

#[test]
fn permutation_and_haar_have_zero_logdet() {
    let mut rng = RngStream::new(4);
    let ops: Vec<Arc<dyn LinearOperator<f64>>> = vec![
        Arc::new(Haar1d::new(2, 1).unwrap()),
        Arc::new(Haar1d::new(2, 2).unwrap()),
        Arc::new(Haar1d::new(4, 1).unwrap()),
        Arc::new(Haar1d::new(8, 1).unwrap()),
        Arc::new(Haar2d::new(2, 2, 1).unwrap()),
        Arc::new(Haar2d::new(2, 2, 2).unwrap()),
    ];
    for op in ops {
        let d = op.dim();
        let x: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let run = |p: &[f64]| {
            let mut g = Graph::new();
            let xv = g.constant(row(p));
            let y = g.linear_map(xv, op.clone(), false).unwrap();
            g.value(y).data().to_vec()
        };
        let num = log_abs_det(numeric_jacobian(run, &x, H));
        assert!(num.abs() < TOL, "haar d={d}: {num}");
    }
    for d in [2, 4, 8] {
        let perm = PermutationLayer::random(d, &mut rng);
        let x: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let run = |p: &[f64]| {
            let mut g = Graph::new();
            let xv = g.constant(row(p));
            let y = perm.forward(&mut g, xv).unwrap();
            g.value(y).data().to_vec()
        };
        assert!(log_abs_det(numeric_jacobian(run, &x, H)).abs() < TOL);
    }
}

fn check_model(model: &FlowModel<f64>, cond: &Condition, rng: &mut RngStream) {
    let d = model.dim();
    let encode = |p: &[f64]| model.encode(&row(p), std::slice::from_ref(cond)).unwrap();
    for _ in 0..3 {
        let x: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let analytic = encode(&x).1[0];
        let num = log_abs_det(numeric_jacobian(|p| encode(p).0.into_data(), &x, H));
        assert!(rel_err(analytic, num) < TOL, "d={d}: {analytic} vs {num}");
    }
}

#[test]
fn two_block_models_match_numeric_jacobian() {
    let mut rng = RngStream::new(21);
    let cases = [
        (InputShape::Sequence { length: 2, channels: 1 }, vec![2], vec![DY, Free]),
        (InputShape::Sequence { length: 4, channels: 1 }, vec![1, 1], vec![DY, D]),
        (InputShape::Sequence { length: 8, channels: 1 }, vec![2], vec![DY, DY]),
        (InputShape::Grid { height: 2, width: 2, channels: 1 }, vec![1, 1], vec![DY, D]),
        (InputShape::Grid { height: 2, width: 2, channels: 2 }, vec![2], vec![DY, Free]),
    ];
    for (shape, blocks, sel) in cases {
        let s = spec(shape, blocks, sel, 3);
        let mut model = FlowModel::build(s, &rng).unwrap();
        randomize(model.params_mut(), &mut rng, 1.0);
        let fit = gaussian(&mut rng, 50, shape.dim()).map(|v| 2.0 * v + 0.3);
        model.fit_standardizer(&fit).unwrap();
        let tissue = match shape {
            InputShape::Sequence { .. } => TissueLabel::Class(2),
            InputShape::Grid { .. } => TissueLabel::Map(vec![0, 1, 2, 2]),
        };
        check_model(&model, &Condition::new(Domain::Real, tissue), &mut rng);
    }
}
