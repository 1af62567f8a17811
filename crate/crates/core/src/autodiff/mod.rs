//! Reverse-mode differentiation, dense layers and Adam.

mod adam;
mod checkpoint;
mod mlp;
mod params;
mod tape;

pub use adam::{adam_step, adam_step_scaled, lr_schedule, AdamConfig};
pub use checkpoint::{load_params, save_params, MOMENTS_FILE, PARAMS_FILE, PARAMS_META};
pub use mlp::{mlp_forward, register_mlp, Activation, MlpSpec};
pub use params::{BlockId, ParamBlock, ParamStore};
pub use tape::{CustomOp, Matrix, Tape, Var};

/// Relative error with an absolute floor, for gradient checks.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_gradient() {
        let mut store = ParamStore::new();
        let mut tape = Tape::new();
        let theta = tape.input(Matrix::column(vec![3.0]));
        let sq = tape.square(theta);
        let loss = tape.mean(sq);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(tape.grad(theta).unwrap().data, vec![6.0]);
        assert_eq!(tape.last_backward_visits(), tape.len());
    }

    #[test]
    fn untouched_block_has_zero_gradient() {
        let mut store = ParamStore::new();
        let spec = MlpSpec::new(vec![2, 3, 1], Activation::Relu);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        register_mlp(&mut store, "used", &spec, false, &mut rng).unwrap();
        register_mlp(&mut store, "idle", &spec, false, &mut rng).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::from_vec(2, 2, vec![0.3, -0.7, 1.1, 0.2]).unwrap());
        let y = mlp_forward(&mut tape, &store, "used", x, &spec).unwrap();
        let loss = tape.mean(y);
        tape.backward(loss, &mut store).unwrap();
        for b in store.blocks().iter().filter(|b| b.name.starts_with("idle")) {
            assert!(b.grad.iter().all(|&g| g == 0.0));
        }
        assert!(store.get("used.1.weight").unwrap().grad.iter().any(|&g| g != 0.0));
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut store = ParamStore::new();
        let mut tape = Tape::new();
        let x = tape.input(Matrix::column(vec![1.0, 2.0]));
        let y = tape.square(x);
        assert!(matches!(tape.backward(y, &mut store), Err(crate::error::Error::Contract(_))));
    }

    fn mlp_loss(store: &ParamStore, spec: &MlpSpec, input: &Matrix) -> (Tape, Var) {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let h = mlp_forward(&mut tape, store, "net", x, spec).unwrap();
        let s = tape.square(h);
        let e = tape.exp(h);
        let c = tape.concat(&[s, e]).unwrap();
        let loss = tape.mean(c);
        (tape, loss)
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let spec = MlpSpec::new(vec![3, 5, 2], Activation::Relu);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::new();
        register_mlp(&mut store, "net", &spec, false, &mut rng).unwrap();
        for b in store.blocks_mut() {
            b.value.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        }
        let input = Matrix::from_vec(4, 3, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();

        let (mut tape, loss) = mlp_loss(&store, &spec, &input);
        tape.backward(loss, &mut store).unwrap();
        let analytic: Vec<Vec<f64>> = store.blocks().iter().map(|b| b.grad.clone()).collect();

        let h = 1e-5;
        for bi in 0..store.blocks().len() {
            for i in 0..store.blocks()[bi].len() {
                let orig = store.blocks()[bi].value[i];
                store.blocks_mut()[bi].value[i] = orig + h;
                let (t, l) = mlp_loss(&store, &spec, &input);
                let up = t.value(l).data[0];
                store.blocks_mut()[bi].value[i] = orig - h;
                let (t, l) = mlp_loss(&store, &spec, &input);
                let down = t.value(l).data[0];
                store.blocks_mut()[bi].value[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let err = relative_error(analytic[bi][i], numeric);
                assert!(err < 1e-4, "{}[{i}]: {} vs {numeric}", store.blocks()[bi].name, analytic[bi][i]);
            }
        }
    }

    #[test]
    fn elementwise_ops_gradients() {
        // f = mean(sigmoid(a) * (a - b) + 0.5 * ||[a, b]||)
        let a0 = vec![0.3, -1.2, 2.0];
        let b0 = vec![1.0, 0.4, -0.6];
        let f = |a: &[f64], b: &[f64]| -> (Tape, Var, Var, Var) {
            let mut tape = Tape::new();
            let a = tape.input(Matrix::column(a.to_vec()));
            let b = tape.input(Matrix::column(b.to_vec()));
            let s = tape.sigmoid(a);
            let d = tape.sub(a, b).unwrap();
            let p = tape.mul(s, d).unwrap();
            let ab = tape.concat(&[a, b]).unwrap();
            let n = tape.row_norm(ab);
            let n = tape.scale(n, 0.5);
            let sum = tape.add(p, n).unwrap();
            let m = tape.mean(sum);
            (tape, m, a, b)
        };
        let mut store = ParamStore::new();
        let (mut tape, m, a, b) = f(&a0, &b0);
        tape.backward(m, &mut store).unwrap();
        let ga = tape.grad(a).unwrap().data.clone();
        let gb = tape.grad(b).unwrap().data.clone();
        let h = 1e-5;
        for i in 0..3 {
            let eval = |da: f64, db: f64| {
                let mut a = a0.clone();
                let mut b = b0.clone();
                a[i] += da;
                b[i] += db;
                let (t, m, _, _) = f(&a, &b);
                t.value(m).data[0]
            };
            let na = (eval(h, 0.0) - eval(-h, 0.0)) / (2.0 * h);
            let nb = (eval(0.0, h) - eval(0.0, -h)) / (2.0 * h);
            assert!(relative_error(ga[i], na) < 1e-4);
            assert!(relative_error(gb[i], nb) < 1e-4);
        }
    }

    #[test]
    fn slice_routes_gradient_to_columns() {
        let mut store = ParamStore::new();
        let mut tape = Tape::new();
        let x = tape.input(Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let s = tape.slice(x, 1, 2).unwrap();
        let q = tape.square(s);
        let m = tape.mean(q);
        tape.backward(m, &mut store).unwrap();
        assert_eq!(tape.grad(x).unwrap().data, vec![0.0, 1.0, 1.5, 0.0, 2.5, 3.0]);
    }
}
