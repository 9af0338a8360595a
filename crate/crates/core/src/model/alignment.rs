use super::mask::WindowPlan;
use super::network::AttentionWeights;

/// Running mean of per-(sample, layer, head) alignment ratios.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AlignmentAccumulator {
    sum: f64,
    count: usize,
}

impl AlignmentAccumulator {
    pub fn add(&mut self, attention: &AttentionWeights, plan: &WindowPlan) {
        for layer in &attention.weights {
            for head in layer {
                if let Some(r) = head_alignment(head, &attention.allowed, plan) {
                    self.sum += r;
                    self.count += 1;
                }
            }
        }
    }

    pub fn merge(&mut self, other: &AlignmentAccumulator) {
        self.sum += other.sum;
        self.count += other.count;
    }

    /// `None` when no head placed any cross-node mass on a target row.
    pub fn value(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

fn head_alignment(weights: &[Vec<f64>], allowed: &[Vec<usize>], plan: &WindowPlan) -> Option<f64> {
    let mut sanctioned = 0.0;
    let mut cross = 0.0;
    for i in 0..plan.n_targets {
        let parents = &plan.sanctioned[i];
        for (&j, &w) in allowed[i].iter().zip(&weights[i]) {
            if j == i {
                continue;
            }
            cross += w;
            if parents.binary_search(&j).is_ok() {
                sanctioned += w;
            }
        }
    }
    (cross > 0.0).then(|| sanctioned / cross)
}

/// Share of cross-node attention mass on target rows that falls on
/// graph-sanctioned parents, averaged over layers and heads. Self-attention
/// is excluded from both sides.
pub fn causal_alignment(attention: &AttentionWeights, plan: &WindowPlan) -> Option<f64> {
    let mut acc = AlignmentAccumulator::default();
    acc.add(attention, plan);
    acc.value()
}
