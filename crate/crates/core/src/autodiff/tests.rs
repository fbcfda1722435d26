use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

const STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
const ABS_FLOOR: f64 = 1e-7;

/// Central-difference check of every input element against the tape.
fn check_fd<F>(inputs: &[Tensor], build: F)
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|t| tape.var(t.clone())).collect();
    let loss = build(&tape, &vars);
    let grads = tape.backward(loss).unwrap();

    let eval = |probe: &[Tensor]| {
        let tape = Tape::new();
        let vars: Vec<_> = probe.iter().map(|t| tape.var(t.clone())).collect();
        build(&tape, &vars).value().item().unwrap()
    };
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]);
        for i in 0..input.numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * STEP);
            let a = analytic.data()[i];
            let err = (a - numeric).abs();
            assert!(
                err <= ABS_FLOOR || err <= REL_TOL * a.abs().max(numeric.abs()),
                "input {k} element {i}: tape {a} vs finite difference {numeric}"
            );
        }
    }
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn m(rows: &[&[f64]]) -> Tensor {
    Tensor::from_rows(rows).unwrap()
}

#[test]
fn matmul_examples() {
    let tape = Tape::new();
    let eye = tape.constant(m(&[&[1.0, 0.0], &[0.0, 1.0]]));
    let col = tape.constant(m(&[&[3.0], &[4.0]]));
    assert_eq!(eye.matmul(col).unwrap().value(), m(&[&[3.0], &[4.0]]));

    let row = tape.constant(m(&[&[1.0, 2.0]]));
    assert_eq!(row.matmul(col).unwrap().value(), m(&[&[11.0]]));
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let tape = Tape::new();
    let a = tape.constant(Tensor::zeros([2, 3]));
    let b = tape.constant(Tensor::zeros([2, 3]));
    match a.matmul(b) {
        Err(Error::Shape { lhs, rhs, .. }) => {
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2, 3]);
        }
        other => panic!("expected shape error, got {other:?}"),
    }
}

#[test]
fn matmul_sum_gradient_is_row_sums_of_b() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(&[3, 4], &mut rng);
    let b = random(&[4, 2], &mut rng);
    let tape = Tape::new();
    let (va, vb) = (tape.var(a.clone()), tape.var(b.clone()));
    let loss = va.matmul(vb).unwrap().sum();
    let grad = tape.backward(loss).unwrap().get(va);
    for i in 0..3 {
        for k in 0..4 {
            let row_sum: f64 = b.row(k).iter().sum();
            assert!((grad.at(&[i, k]) - row_sum).abs() < 1e-12);
        }
    }
    check_fd(&[a, b], |_, v| v[0].matmul(v[1]).unwrap().sum());
}

#[test]
fn elementwise_examples() {
    let tape = Tape::new();
    let zero = tape.constant(Tensor::scalar(0.0));
    assert_eq!(zero.sigmoid().value().item().unwrap(), 0.5);
    assert_eq!(zero.tanh().value().item().unwrap(), 0.0);
    let a = tape.constant(Tensor::vector(vec![2.0, 3.0]));
    let b = tape.constant(Tensor::vector(vec![4.0, 5.0]));
    assert_eq!(a.mul(b).unwrap().value().data(), &[8.0, 15.0]);
    let c = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
    assert!(matches!(a.add(c), Err(Error::Shape { .. })));
    assert!(matches!(a.mul(c), Err(Error::Shape { .. })));
}

#[test]
fn elementwise_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&[2, 3], &mut rng);
    let y = random(&[2, 3], &mut rng);
    let bias = random(&[3], &mut rng);
    let w = random(&[4, 3], &mut rng);
    check_fd(&[x.clone(), y.clone()], |_, v| v[0].add(v[1]).unwrap().tanh().sum());
    check_fd(&[x.clone(), y.clone()], |_, v| v[0].sub(v[1]).unwrap().sigmoid().sum());
    check_fd(&[x.clone(), y.clone()], |_, v| v[0].mul(v[1]).unwrap().scale(1.5).sum());
    check_fd(&[x.clone(), bias], |_, v| v[0].add_bias(v[1]).unwrap().tanh().sum());
    check_fd(&[x, w], |_, v| v[0].matmul_nt(v[1]).unwrap().sigmoid().sum());
}

#[test]
fn concat_examples() {
    let tape = Tape::new();
    let a = tape.var(Tensor::vector(vec![1.0, 2.0]));
    let b = tape.var(Tensor::vector(vec![3.0]));
    let ab = a.concat(b).unwrap();
    assert_eq!(ab.value().data(), &[1.0, 2.0, 3.0]);

    let empty = tape.constant(Tensor::vector(vec![]));
    let c = tape.constant(Tensor::vector(vec![3.0, 4.0]));
    assert_eq!(empty.concat(c).unwrap().value().data(), &[3.0, 4.0]);

    // adjoint splits at p
    let g = tape.constant(Tensor::vector(vec![10.0, 20.0, 30.0]));
    let loss = ab.mul(g).unwrap().sum();
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.get(a).data(), &[10.0, 20.0]);
    assert_eq!(grads.get(b).data(), &[30.0]);

    let bad = tape.constant(Tensor::zeros([3, 1]));
    let a2 = tape.constant(Tensor::zeros([2, 2]));
    assert!(matches!(a2.concat(bad), Err(Error::Shape { .. })));
}

#[test]
fn concat_and_sequence_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random(&[2, 3], &mut rng);
    let b = random(&[2, 2], &mut rng);
    let w = random(&[5], &mut rng);
    check_fd(&[a, b, w], |_, v| {
        v[0].concat(v[1]).unwrap().add_bias(v[2]).unwrap().tanh().sum()
    });

    let s0 = random(&[2, 3], &mut rng);
    let s1 = random(&[2, 3], &mut rng);
    let weights = random(&[2, 2], &mut rng);
    check_fd(&[s0, s1, weights], |_, v| {
        let seq = stack_steps(&[v[0], v[1]]).unwrap();
        let a = v[2].masked_softmax(&[2, 1]).unwrap();
        let pooled = weighted_pool(a, seq).unwrap();
        let again = seq.select_step(1).unwrap();
        pooled.mul(again).unwrap().tanh().sum()
    });
}

#[test]
fn gather_and_reshape_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let table = random(&[4, 3], &mut rng);
    check_fd(&[table], |_, v| {
        // row 2 used twice, row 0 never
        let rows = v[0].gather_rows(&[2, 1, 2, 3]).unwrap();
        rows.reshape([2, 6]).unwrap().tanh().sum()
    });
    let tape = Tape::new();
    let t = tape.var(Tensor::zeros([2, 2]));
    assert!(t.gather_rows(&[2]).is_err());
}

#[test]
fn cross_entropy_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let logits = random(&[3, 4], &mut rng);
    check_fd(&[logits], |_, v| v[0].scale(3.0).softmax_cross_entropy(&[0, 3, 1]).unwrap());
}

#[test]
fn masked_softmax_examples() {
    let tape = Tape::new();
    let uniform = tape.constant(Tensor::vector(vec![0.0; 3])).masked_softmax(&[3]).unwrap();
    for v in uniform.value().data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    let pad = tape
        .constant(Tensor::vector(vec![5.0, 5.0, f64::NEG_INFINITY]))
        .masked_softmax(&[2])
        .unwrap();
    assert_eq!(pad.value().data(), &[0.5, 0.5, 0.0]);

    // direct e^x / Σe^x evaluation
    let out = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0])).masked_softmax(&[3]).unwrap();
    let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
    for (i, v) in out.value().data().iter().enumerate() {
        assert!((v - ((i + 1) as f64).exp() / z).abs() < 1e-15);
    }

    let x = tape.constant(Tensor::vector(vec![1.0, 2.0]));
    assert!(matches!(x.masked_softmax(&[0]), Err(Error::EmptySequence)));
    assert!(x.masked_softmax(&[3]).is_err());
}

#[test]
fn backward_examples() {
    let tape = Tape::new();
    let x = tape.var(Tensor::scalar(3.0));
    let g = tape.backward(x).unwrap();
    assert_eq!(g.get(x).item().unwrap(), 1.0);

    let tape = Tape::new();
    let x = tape.var(Tensor::vector(vec![1.0, 2.0]));
    let loss = x.mul(x).unwrap().sum();
    assert_eq!(tape.backward(loss).unwrap().get(x).data(), &[2.0, 4.0]);

    // non-scalar loss
    assert!(matches!(tape.backward(x), Err(Error::Contract(_))));

    // unreachable leaf gets zeros
    let tape = Tape::new();
    let used = tape.var(Tensor::vector(vec![1.0]));
    let unused = tape.var(Tensor::vector(vec![5.0, 6.0]));
    let g = tape.backward(used.sum()).unwrap();
    assert!(!g.reached(unused));
    assert_eq!(g.get(unused).data(), &[0.0, 0.0]);
}

#[test]
fn fan_out_accumulates() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random(&[2, 3], &mut rng);
    fn branch_a(v: Var<'_>) -> Var<'_> {
        v.tanh().sum()
    }
    fn branch_b(v: Var<'_>) -> Var<'_> {
        v.sigmoid().scale(2.0).sum()
    }

    let grad_of = |f: &dyn for<'t> Fn(Var<'t>) -> Var<'t>| {
        let tape = Tape::new();
        let v = tape.var(x.clone());
        let loss = f(v);
        tape.backward(loss).unwrap().get(v)
    };
    let ga = grad_of(&|v| branch_a(v));
    let gb = grad_of(&|v| branch_b(v));
    let both = grad_of(&|v| branch_a(v).add(branch_b(v)).unwrap());
    for i in 0..x.numel() {
        assert!((both.data()[i] - ga.data()[i] - gb.data()[i]).abs() < 1e-15);
    }
}

#[test]
fn constants_receive_no_gradient() {
    let tape = Tape::new();
    let x = tape.var(Tensor::vector(vec![1.0, 2.0]));
    let c = tape.constant(Tensor::vector(vec![3.0, 4.0]));
    let g = tape.backward(x.mul(c).unwrap().sum()).unwrap();
    assert_eq!(g.get(x).data(), &[3.0, 4.0]);
    assert!(!g.reached(c));
}

proptest! {
    #[test]
    fn masked_softmax_is_a_distribution_over_valid_positions(
        scores in prop::collection::vec(-30.0f64..30.0, 1..12),
        cut in 0usize..12,
    ) {
        let len = 1 + cut % scores.len();
        let tape = Tape::new();
        let out = tape.constant(Tensor::vector(scores.clone())).masked_softmax(&[len]).unwrap().value();
        let total: f64 = out.data()[..len].iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        prop_assert!(out.data()[..len].iter().all(|&v| v >= 0.0));
        prop_assert!(out.data()[len..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_composite_matches_finite_differences(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(&[2, 3], &mut rng);
        let w = random(&[3, 3], &mut rng);
        let b = random(&[3], &mut rng);
        check_fd(&[a, w, b], |_, v| {
            let z = v[0].matmul_nt(v[1]).unwrap().add_bias(v[2]).unwrap();
            let g = z.sigmoid().mul(v[0]).unwrap();
            g.add(z.tanh()).unwrap().masked_softmax(&[3, 2]).unwrap().mul(z).unwrap().sum()
        });
    }
}
