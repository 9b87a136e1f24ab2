//! Central finite-difference verification of reverse-mode gradients.

mod suite;

use rand::seq::index::sample;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::{named_rng, ParamId, ParamStore};

pub use suite::{
    check_block, check_model_config, run_suite, well_conditioned_draw, BlockKind, SuiteResult, CHECK_SIZE, FULL_MODEL_EPS,
};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub eps: f64,
    pub tolerance: f64,
    /// Elements checked per parameter; `None` checks every element.
    pub max_elements: Option<usize>,
    pub seed: u64,
    /// Only parameters whose name starts with this prefix are checked.
    pub prefix: Option<String>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            tolerance: 1e-4,
            max_elements: None,
            seed: 0,
            prefix: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    /// Elements passed over because the perturbation crossed a kink.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
    pub pass: bool,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    /// Worst error per group of the first `depth` dotted name components.
    pub fn by_group(&self, depth: usize) -> Vec<(String, f64)> {
        let mut groups: Vec<(String, f64)> = Vec::new();
        for p in &self.params {
            let key = p.name.split('.').take(depth).collect::<Vec<_>>().join(".");
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, e)) => *e = e.max(p.max_rel_error),
                None => groups.push((key, p.max_rel_error)),
            }
        }
        groups
    }

    pub fn failing(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(move |p| p.max_rel_error > self.tolerance)
    }
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn evaluate<F>(store: &ParamStore<f64>, loss_fn: &mut F, name: &str) -> Result<(f64, Vec<u32>)>
where
    F: FnMut(&mut Tape<'_, f64>) -> Result<Var>,
{
    let mut tape = Tape::new(store);
    tape.record_branches();
    let out = loss_fn(&mut tape)?;
    let value = tape.value(out);
    if value.len() != 1 {
        return Err(Error::shape("gradient check loss must be scalar"));
    }
    let v = value.data()[0];
    if !v.is_finite() {
        return Err(Error::numerical(name, format!("loss evaluated to {v}")));
    }
    Ok((v, tape.branch_pattern().unwrap_or_default().to_vec()))
}

/// Compares reverse-mode gradients of `loss_fn` against central differences
/// `(f(θ+ε) − f(θ−ε)) / 2ε` for every (sampled) element of every parameter.
/// Elements whose two perturbations land on different sides of a LeakyReLU or
/// channel-max kink are not differentiable there and get replaced by another draw.
///
/// `loss_fn` receives a fresh tape bound to `store` and must return a scalar.
pub fn grad_check<F>(store: &mut ParamStore<f64>, mut loss_fn: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape<'_, f64>) -> Result<Var>,
{
    grad_check_with(store, &mut loss_fn, opts, |_| {})
}

/// Like [`grad_check`] with a hook that may alter the tape before backward
/// (used to build negative controls).
pub fn grad_check_with<F, H>(
    store: &mut ParamStore<f64>,
    loss_fn: &mut F,
    opts: &GradCheckOptions,
    mut prepare: H,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape<'_, f64>) -> Result<Var>,
    H: FnMut(&mut Tape<'_, f64>),
{
    let analytic = {
        let mut tape = Tape::new(store);
        prepare(&mut tape);
        let out = loss_fn(&mut tape)?;
        let v = tape.value(out).data()[0];
        if !v.is_finite() {
            return Err(Error::numerical("loss", format!("loss evaluated to {v}")));
        }
        tape.backward(out)?.into_param_grads()
    };

    let ids: Vec<ParamId> = store
        .ids()
        .filter(|&id| match &opts.prefix {
            Some(p) => store.get(id).name.starts_with(p.as_str()),
            None => true,
        })
        .collect();

    let mut params = Vec::with_capacity(ids.len());
    for id in ids {
        let name = store.get(id).name.clone();
        let len = store.value(id).len();
        // candidates in random order; elements whose ±eps perturbation changes
        // the branch taken at a kink are skipped and the next one is drawn
        let mut candidates: Vec<usize> = match opts.max_elements {
            Some(k) if k < len => {
                let mut rng = named_rng(opts.seed, &name);
                sample(&mut rng, len, len).into_vec()
            }
            _ => (0..len).collect(),
        };
        let wanted = opts.max_elements.unwrap_or(len).min(len);
        let mut check = ParamCheck {
            name: name.clone(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
            checked: 0,
            skipped: 0,
        };
        for i in candidates.drain(..) {
            if check.checked == wanted {
                break;
            }
            let a = analytic[id.index()].as_ref().map_or(0.0, |g| g.data()[i]);
            let original = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = original + opts.eps;
            let plus = evaluate(store, loss_fn, &name);
            store.value_mut(id).data_mut()[i] = original - opts.eps;
            let minus = evaluate(store, loss_fn, &name);
            store.value_mut(id).data_mut()[i] = original;
            let ((plus, plus_branches), (minus, minus_branches)) = (plus?, minus?);
            if plus_branches != minus_branches {
                check.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * opts.eps);
            let err = relative_error(a, numeric);
            if err > check.max_rel_error || check.checked == 0 {
                check.max_rel_error = err;
                check.worst_index = i;
                check.analytic = a;
                check.numeric = numeric;
            }
            check.checked += 1;
        }
        params.push(check);
    }
    let pass = params.iter().all(|p| p.max_rel_error <= opts.tolerance);
    Ok(GradCheckReport {
        params,
        tolerance: opts.tolerance,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Init;
    use crate::tensor::Tensor;

    #[test]
    fn sum_of_parameters_passes_exactly() {
        let mut store = ParamStore::<f64>::new(3);
        let a = store.register("a", &[4], Init::FanIn(1)).unwrap();
        let b = store.register("b", &[2, 3], Init::FanIn(1)).unwrap();
        let report = grad_check(
            &mut store,
            |tape| {
                let (pa, pb) = (tape.param(a), tape.param(b));
                let sa = tape.sum(pa);
                let sb = tape.sum(pb);
                tape.add(sa, sb)
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.pass);
        assert!(report.max_rel_error() <= 1e-10, "{report:?}");
    }

    #[test]
    fn constant_loss_passes() {
        let mut store = ParamStore::<f64>::new(0);
        store.register("a", &[3], Init::FanIn(1)).unwrap();
        let report = grad_check(
            &mut store,
            |tape| Ok(tape.constant(Tensor::scalar(0.0))),
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.pass);
        assert_eq!(report.max_rel_error(), 0.0);
    }

    #[test]
    fn non_finite_loss_names_parameter() {
        let mut store = ParamStore::<f64>::new(0);
        let a = store.insert("weights.a", Tensor::from_vec(&[1], vec![0.0]).unwrap()).unwrap();
        // the loss turns NaN as soon as the parameter is nudged below zero
        let err = grad_check(
            &mut store,
            |tape| {
                let p = tape.param(a);
                let s = tape.sum(p);
                let v = tape.value(s).data()[0];
                if v < 0.0 {
                    Ok(tape.constant(Tensor::scalar(f64::NAN)))
                } else {
                    Ok(s)
                }
            },
            &GradCheckOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Numerical { ref name, .. } if name == "weights.a"), "{err}");
    }

    #[test]
    fn fault_injection_is_detected() {
        let mut store = ParamStore::<f64>::new(1);
        let w = store.register("conv.weight", &[1, 1, 3, 3], Init::FanIn(9)).unwrap();
        let x = Tensor::<f64>::from_fn(&[1, 1, 4, 4], |i| (i as f64 * 0.3).sin());
        let mut loss = |tape: &mut Tape<'_, f64>| {
            let xi = tape.constant(x.clone());
            let pw = tape.param(w);
            let y = tape.conv2d(xi, pw, None, 1, 1)?;
            Ok(tape.sum(y))
        };
        let opts = GradCheckOptions::default();
        let good = grad_check_with(&mut store, &mut loss, &opts, |_| {}).unwrap();
        assert!(good.pass);
        let bad = grad_check_with(&mut store, &mut loss, &opts, |t| t.inject_weight_grad_fault(1.5)).unwrap();
        assert!(!bad.pass);
    }
}
