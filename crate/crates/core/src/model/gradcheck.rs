//! Central finite-difference check of the analytic gradients.

use super::data::Sample;
use super::mask::WindowPlan;
use super::{CshtModel, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientCheck {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, 1e-6)`.
    pub worst_relative_error: f64,
    pub checked: usize,
}

/// Compares every dense parameter partial and every ambient coordinate of
/// the embedding rows touched by `plan` against central differences with
/// step `h`. The model is restored before returning.
pub fn finite_difference_check(
    model: &mut CshtModel,
    plan: &WindowPlan,
    sample: &Sample,
    h: f64,
) -> Result<GradientCheck> {
    let (_, g) = model.loss_gradients(plan, &sample.values, sample)?;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for i in 0..model.params().len() {
        let orig = model.params()[i];
        model.params_mut()[i] = orig + h;
        let up = model.sample_loss(plan, &sample.values, sample);
        model.params_mut()[i] = orig - h;
        let down = model.sample_loss(plan, &sample.values, sample);
        model.params_mut()[i] = orig;
        worst = worst.max(rel(g.params[i], (up? - down?) / (2.0 * h)));
        checked += 1;
    }
    for (row, grad) in &g.embedding {
        for (c, &analytic) in grad.iter().enumerate() {
            let orig = model.embedding().row(*row)[c];
            model.embedding_mut().row_mut(*row)[c] = orig + h;
            let up = model.sample_loss(plan, &sample.values, sample);
            model.embedding_mut().row_mut(*row)[c] = orig - h;
            let down = model.sample_loss(plan, &sample.values, sample);
            model.embedding_mut().row_mut(*row)[c] = orig;
            worst = worst.max(rel(analytic, (up? - down?) / (2.0 * h)));
            checked += 1;
        }
    }
    Ok(GradientCheck { worst_relative_error: worst, checked })
}
