mod common;

use common::{op_cases, op_gradcheck};
use topoformer::autodiff::{Graph, Tensor};

#[test]
fn every_op_matches_finite_differences() {
    for (i, case) in op_cases().iter().enumerate() {
        let worst = op_gradcheck(case, 100, 1000 + i as u64).unwrap();
        assert!(worst < 1e-4, "{}: relative error {worst:e}", case.name);
    }
}

#[test]
fn two_layer_mlp_gradients() {
    let case = common::OpCase {
        name: "mlp",
        shapes: vec![vec![6, 4], vec![4, 8], vec![8], vec![8, 3], vec![3]],
        build: |g, v| {
            let h = g.matmul(v[0], v[1])?;
            let h = g.add(h, v[2])?;
            let h = g.gelu(h)?;
            let o = g.matmul(h, v[3])?;
            let o = g.add(o, v[4])?;
            let t = g.constant(Tensor::full(&[6, 3], 0.25))?;
            g.mse_loss(o, t)
        },
    };
    assert!(op_gradcheck(&case, 10, 77).unwrap() < 1e-4);
}

#[test]
fn forward_is_bit_identical_and_backward_repeatable() {
    let run = || {
        let mut g = Graph::new();
        let x = g
            .leaf(Tensor::from_fn(&[4, 6], |i| (i as f64 * 0.37).sin()))
            .unwrap();
        let s = g.softmax(x).unwrap();
        let l = g.sum_last(s).unwrap();
        let y = g.mul(l, l).unwrap();
        let loss = g.mean(y).unwrap();
        g.backward(loss).unwrap();
        let first = g.grad(x).unwrap().to_vec();
        g.zero_grad();
        g.backward(loss).unwrap();
        assert_eq!(first, g.grad(x).unwrap());
        (g.value(s).clone(), first)
    };
    assert_eq!(run(), run());
}
