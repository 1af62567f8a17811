use crate::autodiff::{Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::field::WarpPresence;

/// Weighted sum of the four training terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub occupancy: f64,
    pub prior: f64,
    pub motion: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_rt: f64,
    pub l_oc: f64,
    pub l_p: f64,
    pub l_m: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn combine(l_rt: f64, l_oc: f64, l_p: f64, l_m: f64, w: &LossWeights) -> Self {
        let total = l_rt + w.occupancy * l_oc + w.prior * l_p + w.motion * l_m;
        Self { l_rt, l_oc, l_p, l_m, total }
    }

    pub fn is_finite(&self) -> bool {
        [self.l_rt, self.l_oc, self.l_p, self.l_m, self.total].iter().all(|v| v.is_finite())
    }
}

/// Mean squared error between rendered and measured power.
pub fn loss_rt(tape: &mut Tape, rendered: Var, targets: &[f64]) -> Result<Var> {
    let t = tape.constant(Matrix::column(targets.to_vec()));
    let diff = tape.sub(rendered, t)?;
    let sq = tape.square(diff);
    Ok(tape.mean(sq))
}

fn mask(presence: &[bool]) -> Matrix {
    Matrix::column(presence.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect())
}

/// Squared occupancy disagreement with both warped neighbors, averaged over
/// all samples; absent neighbors contribute zero.
pub fn loss_oc(tape: &mut Tape, alpha: Var, prev: Var, next: Var, presence: &WarpPresence) -> Result<Var> {
    let n = tape.value(alpha).rows;
    if presence.prev.len() != n || presence.next.len() != n {
        return Err(Error::Shape(format!("{n} occupancies but {} / {} presence flags", presence.prev.len(), presence.next.len())));
    }
    let mut side = |other: Var, flags: &[bool]| -> Result<Var> {
        let d = tape.sub(alpha, other)?;
        let sq = tape.square(d);
        let m = tape.constant(mask(flags));
        tape.mul(sq, m)
    };
    let a = side(prev, &presence.prev)?;
    let b = side(next, &presence.next)?;
    let sum = tape.add(a, b)?;
    Ok(tape.mean(sum))
}

/// Mean occupancy.
pub fn loss_p(tape: &mut Tape, alpha: Var) -> Var {
    tape.mean(alpha)
}

/// Mean of `‖Δx⁻‖ + ‖Δx⁺‖` over the `n × 6` flow rows.
pub fn loss_m(tape: &mut Tape, flow: Var) -> Result<Var> {
    if tape.value(flow).cols != 6 {
        return Err(Error::Shape(format!("flow has {} columns, expected 6", tape.value(flow).cols)));
    }
    let back = tape.slice(flow, 0, 3)?;
    let fwd = tape.slice(flow, 3, 3)?;
    let nb = tape.row_norm(back);
    let nf = tape.row_norm(fwd);
    let s = tape.add(nb, nf)?;
    Ok(tape.mean(s))
}

/// `l_rt + λ_oc·l_oc + λ_p·l_p + λ_m·l_m` on the tape, summed in the same
/// order as [`LossBreakdown::combine`].
pub fn total_loss(tape: &mut Tape, terms: [Var; 4], w: &LossWeights) -> Result<Var> {
    let [rt, oc, p, m] = terms;
    let oc = tape.scale(oc, w.occupancy);
    let p = tape.scale(p, w.prior);
    let m = tape.scale(m, w.motion);
    let acc = tape.add(rt, oc)?;
    let acc = tape.add(acc, p)?;
    tape.add(acc, m)
}
