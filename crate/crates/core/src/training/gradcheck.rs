//! Central finite-difference check of analytic gradients.

use serde::Serialize;

use crate::autograd::{Tape, Var};
use crate::checkpoint::Checkpoint;
use crate::data::Sample;
use crate::error::{MiclError, Result};
use crate::params::{BoundParams, ParamStore};

/// Gradient magnitudes below this are compared in absolute terms.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupError {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub eps: f64,
    pub groups: Vec<GroupError>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&GroupError> {
        self.groups
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    pub fn failing(&self, tolerance: f64) -> Vec<&GroupError> {
        self.groups.iter().filter(|g| !(g.max_rel_error < tolerance)).collect()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Entries to probe: all of them, or the `limit / 2` largest analytic
/// gradients plus evenly spaced others.
fn probe_indices(analytic: &[f64], limit: Option<usize>) -> Vec<usize> {
    let n = analytic.len();
    let Some(limit) = limit.filter(|&l| l < n) else {
        return (0..n).collect();
    };
    let mut by_size: Vec<usize> = (0..n).collect();
    by_size.sort_by(|&a, &b| analytic[b].abs().total_cmp(&analytic[a].abs()).then(a.cmp(&b)));
    let mut picked: Vec<usize> = by_size.into_iter().take(limit / 2).collect();
    let spread = limit - picked.len();
    for k in 0..spread {
        let i = k * n / spread;
        if !picked.contains(&i) {
            picked.push(i);
        }
    }
    picked.sort_unstable();
    picked
}

/// Compares the tape gradient of `loss` with central differences for every
/// tensor of `store`, probing at most `limit` entries per tensor.
pub fn check_gradients<F>(store: &ParamStore, eps: f64, limit: Option<usize>, loss: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &BoundParams) -> Result<Var>,
{
    if !(1e-5..=1e-3).contains(&eps) {
        return Err(MiclError::Config(format!("finite-difference step {eps} must lie in [1e-5, 1e-3]")));
    }
    let evaluate = |s: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let p = s.bind(&mut tape);
        let l = loss(&mut tape, &p)?;
        let v = tape.scalar_value(l);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(MiclError::Numerical("non-finite loss during gradient check".into()))
        }
    };

    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let l = loss(&mut tape, &p)?;
    let grads = tape.backward(l);
    let analytic = p.gradients(store, &grads);

    let mut probe = store.clone();
    let mut groups = Vec::with_capacity(store.len());
    for (id, g) in store.ids().zip(&analytic) {
        let mut group = GroupError {
            name: store.name(id).to_string(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            checked: 0,
        };
        for i in probe_indices(g.data(), limit) {
            let original = store.get(id).data()[i];
            probe.get_mut(id).data_mut()[i] = original + eps;
            let up = evaluate(&probe)?;
            probe.get_mut(id).data_mut()[i] = original - eps;
            let down = evaluate(&probe)?;
            probe.get_mut(id).data_mut()[i] = original;
            let numeric = (up - down) / (2.0 * eps);
            let a = g.data()[i];
            group.max_rel_error = group.max_rel_error.max(relative_error(a, numeric));
            group.max_abs_error = group.max_abs_error.max((a - numeric).abs());
            group.checked += 1;
        }
        groups.push(group);
    }
    Ok(GradCheckReport { eps, groups })
}

/// Checks the total training loss of `checkpoint` on `batch`.
pub fn grad_check(
    checkpoint: &Checkpoint,
    batch: &[Sample],
    tau: f64,
    lambda: f64,
    eps: f64,
    limit: Option<usize>,
) -> Result<GradCheckReport> {
    let (model, store) = checkpoint.restore()?;
    let prepared = batch.iter().map(|s| model.prepare(s)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<_> = prepared.iter().collect();
    check_gradients(&store, eps, limit, |tape, p| {
        Ok(model.batch_loss(tape, p, &refs, tau, lambda)?.0.total)
    })
}
