//! Central-difference verification of analytic gradients.

use alloc::string::String;
use alloc::vec::Vec;

use super::{Graph, ParamStore, TensorError, Var};

/// Floor on the relative-error denominator: gradients smaller than this are
/// compared in absolute terms, where central-difference roundoff dominates.
pub const REL_ERR_EPS_ABS: f64 = 1e-8;

/// Default finite-difference step.
pub const DEFAULT_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamReport {
    pub name: String,
    pub max_rel_err: f64,
    /// Element index at which `max_rel_err` occurs.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub params: Vec<ParamReport>,
    pub max_rel_err: f64,
    pub evaluated: usize,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(REL_ERR_EPS_ABS);
    (a - b).abs() / denom
}

/// Compares `backward` against the five-point central difference
/// `(8(f(p+h) - f(p-h)) - (f(p+2h) - f(p-2h))) / 12h` for every element of
/// every parameter in `store`.
///
/// `f` builds the scalar objective on a fresh graph. `store` is perturbed in
/// place and restored before returning.
pub fn grad_check<E, F>(store: &mut ParamStore, h: f64, mut f: F) -> Result<GradReport, E>
where
    E: From<TensorError>,
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var, E>,
{
    let mut g = Graph::new();
    let loss = f(&mut g, store)?;
    let analytic = g.backward(loss)?.into_params();

    let mut eval = |store: &ParamStore, pid: usize, idx: usize| -> Result<f64, E> {
        let mut g = Graph::new();
        let l = f(&mut g, store)?;
        let v = g.value(l).item();
        if !v.is_finite() {
            return Err(TensorError::NonFinite { param: pid, index: idx }.into());
        }
        Ok(v)
    };

    let mut params = Vec::with_capacity(store.len());
    let mut global = 0.0f64;
    let mut evaluated = 0;
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.get(id).len();
        let grad = analytic.get(id);
        let mut rep = ParamReport {
            name: String::from(store.name(id)),
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..n {
            let orig = store.get(id).data()[i];
            let mut at = |store: &mut ParamStore, offset: f64| -> Result<f64, E> {
                store.get_mut(id).data_mut()[i] = orig + offset;
                eval(store, id.0, i)
            };
            let stencil = [at(store, 2.0 * h), at(store, h), at(store, -h), at(store, -2.0 * h)];
            store.get_mut(id).data_mut()[i] = orig;
            let [p2, p1, m1, m2] = stencil;
            let (p2, p1, m1, m2) = (p2?, p1?, m1?, m2?);
            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
            let a = grad.map_or(0.0, |g| g[i]);
            let err = relative_error(a, numeric);
            if err > rep.max_rel_err || i == 0 {
                rep.max_rel_err = rep.max_rel_err.max(err);
                rep.worst_index = i;
                rep.analytic = a;
                rep.numeric = numeric;
            }
            evaluated += 1;
        }
        global = global.max(rep.max_rel_err);
        params.push(rep);
    }
    Ok(GradReport {
        params,
        max_rel_err: global,
        evaluated,
    })
}
