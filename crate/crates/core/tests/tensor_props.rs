use pirnn::tensor::{grad_check, GradCheckConfig, Tape, Tensor, TensorError, Var};
use proptest::prelude::*;

/// Values kept away from 0 and from ±0.5 so relu and clamp kinks are never
/// straddled by a finite-difference step.
fn smooth_value() -> impl Strategy<Value = f64> {
    prop_oneof![-2.0..-0.55f64, -0.45..-0.05f64, 0.05..0.45f64, 0.55..2.0f64]
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(smooth_value(), rows * cols).prop_map(move |d| Tensor::new(vec![rows, cols], d).unwrap())
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (1..=8usize, 1..=8usize)
}

/// Contracts `out` with a fixed ramp so every output element carries a
/// distinct weight into the scalar loss.
fn contract(tape: &mut Tape, out: Var) -> Result<Var, TensorError> {
    let shape = tape.shape(out).to_vec();
    let n: usize = shape.iter().product();
    let w = tape.constant(shape, (0..n).map(|i| 0.3 + 0.1 * (i % 7) as f64).collect())?;
    let p = tape.mul(out, w)?;
    Ok(tape.sum(p))
}

fn check<F>(f: F, params: &[Tensor]) -> Result<(), TestCaseError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>,
{
    let loss = |tape: &mut Tape, v: &[Var]| -> Result<Var, TensorError> {
        let out = f(tape, v)?;
        contract(tape, out)
    };
    let report = grad_check(&loss, params, GradCheckConfig::default()).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(report.passed, "max rel error {} at {:?}", report.max_rel_error, report.worst);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binary_ops_same_shape(ab in dims().prop_flat_map(|(r, c)| (matrix(r, c), matrix(r, c)))) {
        let params = [ab.0, ab.1];
        check(|t, v| t.add(v[0], v[1]), &params)?;
        check(|t, v| t.sub(v[0], v[1]), &params)?;
        check(|t, v| t.mul(v[0], v[1]), &params)?;
        check(|t, v| t.div(v[0], v[1]), &params)?;
    }

    #[test]
    fn binary_ops_broadcast_rows(a in dims().prop_flat_map(|(r, c)| (matrix(r, c), matrix(1, c)))) {
        let (x, row) = a;
        let flat = Tensor::new(vec![row.len()], row.data().to_vec()).unwrap();
        for b in [row, flat] {
            let params = [x.clone(), b];
            check(|t, v| t.add(v[0], v[1]), &params)?;
            check(|t, v| t.sub(v[1], v[0]), &params)?;
            check(|t, v| t.mul(v[0], v[1]), &params)?;
            check(|t, v| t.div(v[0], v[1]), &params)?;
        }
    }

    #[test]
    fn matmul_grad(ab in (1..=8usize, 1..=8usize, 1..=8usize).prop_flat_map(|(m, k, n)| (matrix(m, k), matrix(k, n)))) {
        check(|t, v| t.matmul(v[0], v[1]), &[ab.0, ab.1])?;
    }

    #[test]
    fn unary_ops(x in dims().prop_flat_map(|(r, c)| matrix(r, c))) {
        let p = [x];
        check(|t, v| Ok(t.sigmoid(v[0])), &p)?;
        check(|t, v| Ok(t.tanh(v[0])), &p)?;
        check(|t, v| Ok(t.softplus(v[0])), &p)?;
        check(|t, v| Ok(t.relu(v[0])), &p)?;
        check(|t, v| Ok(t.square(v[0])), &p)?;
        check(|t, v| { let s = t.square(v[0]); let s = t.affine(s, 1.0, 0.1); Ok(t.sqrt(s)) }, &p)?;
        check(|t, v| Ok(t.affine(v[0], -1.5, 0.25)), &p)?;
        check(|t, v| Ok(t.clamp(v[0], -0.5, 0.5)), &p)?;
    }

    #[test]
    fn reductions_and_reshaping(x in (2..=8usize, 2..=8usize).prop_flat_map(|(r, c)| matrix(r, c))) {
        let (r, c) = (x.shape()[0], x.shape()[1]);
        let p = [x];
        check(|t, v| Ok(t.sum(v[0])), &p)?;
        check(|t, v| Ok(t.mean(v[0])), &p)?;
        check(|t, v| t.mean_rows(v[0]), &p)?;
        check(|t, v| t.slice_cols(v[0], 1, c), &p)?;
        check(|t, v| t.slice_rows(v[0], 0, r - 1), &p)?;
        check(|t, v| { let s = t.square(v[0]); t.concat_cols(&[v[0], s]) }, &p)?;
        check(|t, v| { let s = t.tanh(v[0]); t.concat_rows(&[s, v[0], s]) }, &p)?;
    }
}

#[test]
fn reuse_sums_path_gradients() {
    let mut tape = Tape::new();
    let x = tape.leaf(&Tensor::scalar(3.0).with_grad());
    let y = tape.add(x, x).unwrap();
    let g = tape.backward(y).unwrap();
    assert_eq!(g.wrt(x).unwrap(), &[2.0]);
}

#[test]
fn replay_is_bit_identical() {
    let run = || {
        let mut tape = Tape::new();
        let a = tape.leaf(&Tensor::new(vec![3, 2], vec![0.1, -0.7, 1.3, 0.2, -0.4, 0.9]).unwrap().with_grad());
        let b = tape.leaf(&Tensor::new(vec![2, 4], (0..8).map(|i| 0.11 * i as f64 - 0.3).collect()).unwrap().with_grad());
        let m = tape.matmul(a, b).unwrap();
        let s = tape.tanh(m);
        let sp = tape.softplus(s);
        let l = tape.mean(sp);
        let value = tape.item(l);
        let g = tape.backward(l).unwrap();
        (value.to_bits(), g.wrt(a).unwrap().to_vec(), g.wrt(b).unwrap().to_vec())
    };
    let (v1, ga1, gb1) = run();
    let (v2, ga2, gb2) = run();
    assert_eq!(v1, v2);
    assert!(ga1.iter().zip(&ga2).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert!(gb1.iter().zip(&gb2).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn broadcast_beyond_leading_axis_rejected() {
    let mut tape = Tape::new();
    let a = tape.leaf(&Tensor::zeros(vec![3, 4]));
    let b = tape.leaf(&Tensor::zeros(vec![3, 1]));
    assert!(matches!(tape.add(a, b), Err(TensorError::ShapeMismatch { .. })));
}
