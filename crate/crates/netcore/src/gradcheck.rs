//! Central finite-difference validation of analytic gradients.

use crate::error::Result;
use crate::graph::Graph;
use crate::module::Module;
use crate::optim::LossOutput;

/// Denominator floor for the relative error, so entries whose true gradient is
/// zero are judged on absolute error.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (tensor name, flat index) of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares the analytic gradient of `loss_fn` at `model` with central differences of
/// step `step` for every tensor entry.
pub fn grad_check<M, F>(model: &M, step: f64, loss_fn: F) -> Result<GradCheckReport>
where
    M: Module + Clone,
    F: Fn(&mut Graph, &M) -> Result<LossOutput>,
{
    let mut g = Graph::new();
    let (loss, leaves) = loss_fn(&mut g, model)?;
    let grads = g.backward(loss);
    let analytic: Vec<_> = leaves.iter().map(|&id| grads.get(id)).collect();

    let eval = |m: &M| -> Result<f64> {
        let mut g = Graph::new();
        let (loss, _) = loss_fn(&mut g, m)?;
        Ok(g.scalar(loss))
    };

    let names: Vec<String> = model.named_tensors().into_iter().map(|(n, _)| n).collect();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, checked: 0 };
    let mut probe = model.clone();
    for (ti, a) in analytic.iter().enumerate() {
        for flat in 0..a.len() {
            let orig = get_entry(&probe, ti, flat);
            set_entry(&mut probe, ti, flat, orig + step);
            let plus = eval(&probe)?;
            set_entry(&mut probe, ti, flat, orig - step);
            let minus = eval(&probe)?;
            set_entry(&mut probe, ti, flat, orig);
            let numeric = (plus - minus) / (2.0 * step);
            let an = a.as_slice().expect("standard layout")[flat];
            let e = relative_error(an, numeric);
            report.checked += 1;
            if report.worst.is_none() || e > report.max_rel_error {
                report.max_rel_error = e;
                report.worst = Some((names[ti].clone(), flat));
            }
        }
    }
    Ok(report)
}

fn get_entry<M: Module>(m: &M, ti: usize, flat: usize) -> f64 {
    m.tensors()[ti].as_slice().expect("standard layout")[flat]
}

fn set_entry<M: Module>(m: &mut M, ti: usize, flat: usize, value: f64) {
    m.tensors_mut()[ti].as_slice_mut().expect("standard layout")[flat] = value;
}
