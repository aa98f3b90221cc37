//! Dense tensors with reverse-mode automatic differentiation.

mod array;
mod error;
pub mod gradcheck;
mod graph;
mod params;

pub use array::{numel, Tensor};
pub use error::TensorError;
pub use gradcheck::{grad_check, relative_error, GradReport, ParamReport, DEFAULT_STEP, REL_ERR_EPS_ABS};
pub use graph::{row_major_strides, Graph, NodeGrads, Var, LAYER_NORM_EPS};
pub use params::{Gradients, NamedParam, ParamId, ParamStore};

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn identity_matmul() {
        let mut g = Graph::new();
        let i3 = g.constant(Tensor::eye(3));
        let a = g.constant(Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let c = g.matmul(i3, a).unwrap();
        assert_eq!(g.value(c), g.value(a));
    }

    #[test]
    fn uniform_softmax() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[4], 1.0));
        let y = g.softmax(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.25; 4]);
    }

    #[test]
    fn constant_layer_norm_is_zero() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[4], 5.0));
        let y = g.layer_norm(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0; 4]);
    }

    #[test]
    fn empty_axis_errors() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[3, 0]));
        assert!(matches!(
            g.softmax(x),
            Err(TensorError::EmptyAxis { op: "softmax", .. })
        ));
        assert!(matches!(
            g.layer_norm(x),
            Err(TensorError::EmptyAxis { op: "layer_norm", .. })
        ));
    }

    #[test]
    fn shape_mismatch_names_op_and_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[4, 2]));
        let err = g.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            TensorError::ShapeMismatch {
                op: "matmul",
                lhs: vec![2, 3],
                rhs: vec![4, 2]
            }
        );
        let c = g.constant(Tensor::zeros(&[3, 2]));
        assert!(matches!(g.add(a, c), Err(TensorError::ShapeMismatch { op: "add", .. })));
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut store = ParamStore::new();
        let p = store.add("x", Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let mut g = Graph::new();
        let x = g.param(&store, p);
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.params().get(p).unwrap(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn matmul_sum_gradient_by_hand() {
        // loss = sum(A B): dA[i,k] = sum_j B[k,j], dB[k,j] = sum_i A[i,k]
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = store.add("b", Tensor::new(vec![2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap());
        let mut g = Graph::new();
        let (va, vb) = (g.param(&store, a), g.param(&store, b));
        let c = g.matmul(va, vb).unwrap();
        let loss = g.sum(c);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.params().get(a).unwrap(), &[11.0, 15.0, 11.0, 15.0]);
        assert_eq!(grads.params().get(b).unwrap(), &[4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[2]));
        assert!(matches!(g.backward(x), Err(TensorError::NonScalarLoss { .. })));
    }

    #[test]
    fn shared_param_accumulates() {
        let mut store = ParamStore::new();
        let p = store.add("w", Tensor::from_vec(vec![3.0]));
        let mut g = Graph::new();
        let w1 = g.param(&store, p);
        let w2 = g.param(&store, p);
        assert_eq!(w1, w2);
        let a = g.scale(w1, 2.0);
        let b = g.scale(w2, 5.0);
        let s = g.add(a, b).unwrap();
        let loss = g.sum(s);
        assert_eq!(g.backward(loss).unwrap().params().get(p).unwrap(), &[7.0]);
    }

    #[test]
    fn detached_constant_gets_no_param_gradient() {
        let mut store = ParamStore::new();
        let p = store.add("w", Tensor::from_vec(vec![1.0]));
        let unused = store.add("u", Tensor::from_vec(vec![1.0]));
        let mut g = Graph::new();
        let w = g.param(&store, p);
        let c = g.constant(store.get(unused).clone());
        let m = g.mul(w, c).unwrap();
        let loss = g.sum(m);
        let grads = g.backward(loss).unwrap();
        assert!(grads.params().get(unused).is_none());
    }
}
