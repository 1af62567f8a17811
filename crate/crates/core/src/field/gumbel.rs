use rand::distributions::Open01;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GumbelMode {
    Stochastic,
    Deterministic,
}

/// Difference of two independent standard Gumbel draws (logistic noise).
pub fn gumbel_difference(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.sample(Open01);
    let u2: f64 = rng.sample(Open01);
    -(-u1.ln()).ln() + (-u2.ln()).ln()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `sigmoid((logit + g₁ − g₂) / τ)` when stochastic, `sigmoid(logit / τ)`
/// otherwise.
pub fn gumbel_sigmoid(logit: f64, tau: f64, mode: GumbelMode, rng: &mut impl Rng) -> f64 {
    let noise = match mode {
        GumbelMode::Stochastic => gumbel_difference(rng),
        GumbelMode::Deterministic => 0.0,
    };
    sigmoid((logit + noise) / tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{relative_error, Matrix, ParamStore, Tape};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn deterministic_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for tau in [0.1, 1.0, 3.0] {
            assert_eq!(gumbel_sigmoid(0.0, tau, GumbelMode::Deterministic, &mut rng), 0.5);
        }
        let v = gumbel_sigmoid(4.0, 0.5, GumbelMode::Deterministic, &mut rng);
        assert!((v - 1.0 / (1.0 + (-8f64).exp())).abs() < 1e-15);
        assert!((v - 0.99966).abs() < 1e-5);
    }

    fn mc(tau: f64, draws: usize) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let mut sum = 0.0;
        let mut middle = 0usize;
        for _ in 0..draws {
            let a = gumbel_sigmoid(0.0, tau, GumbelMode::Stochastic, &mut rng);
            sum += a;
            middle += (a > 0.05 && a < 0.95) as usize;
        }
        (sum / draws as f64, middle as f64 / draws as f64)
    }

    #[test]
    fn monte_carlo_matches_logistic_closed_form() {
        // g₁ − g₂ is standard logistic, so P(0.05 < α < 0.95) at logit 0 is
        // P(|L| < τ ln 19) = tanh(τ ln 19 / 2).
        for tau in [0.1, 0.03] {
            let (mean, middle) = mc(tau, 100_000);
            let closed = (tau * 19f64.ln() / 2.0).tanh();
            assert!((mean - 0.5).abs() < 0.01, "tau {tau}: mean {mean}");
            assert!((middle - closed).abs() < 0.005, "tau {tau}: {middle} vs {closed}");
        }
        assert!(mc(0.03, 100_000).1 < 0.05);
    }

    #[test]
    fn frozen_noise_gradient() {
        // On the tape the noise is a constant; d/dlogit matches finite differences.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let logits: Vec<f64> = (0..6).map(|i| -1.5 + 0.6 * i as f64).collect();
        let noise: Vec<f64> = (0..6).map(|_| gumbel_difference(&mut rng)).collect();
        let tau = 0.7;
        let f = |l: &[f64]| -> (Tape, crate::autodiff::Var, crate::autodiff::Var) {
            let mut tape = Tape::new();
            let x = tape.input(Matrix::column(l.to_vec()));
            let g = tape.constant(Matrix::column(noise.clone()));
            let s = tape.add(x, g).unwrap();
            let s = tape.scale(s, 1.0 / tau);
            let a = tape.sigmoid(s);
            let q = tape.square(a);
            let m = tape.mean(q);
            (tape, m, x)
        };
        let (mut tape, m, x) = f(&logits);
        tape.backward(m, &mut ParamStore::new()).unwrap();
        let g = tape.grad(x).unwrap().data.clone();
        for i in 0..6 {
            let mut up = logits.clone();
            up[i] += 1e-5;
            let mut dn = logits.clone();
            dn[i] -= 1e-5;
            let (tu, mu, _) = f(&up);
            let (td, md, _) = f(&dn);
            let numeric = (tu.value(mu).data[0] - td.value(md).data[0]) / 2e-5;
            assert!(relative_error(g[i], numeric) < 1e-4);
        }
        let direct: f64 =
            logits.iter().zip(&noise).map(|(l, n)| sigmoid((l + n) / tau).powi(2)).sum::<f64>() / 6.0;
        assert!((tape.value(m).data[0] - direct).abs() < 1e-15);
    }
}
