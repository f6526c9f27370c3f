use super::{Graph, NumericError, ParamStore, Var};

/// Gradients smaller than this are compared in absolute terms.
const REL_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, 1e-6)`.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel: f64,
    pub checked: usize,
}

/// Compares the analytic gradient of the scalar built by `f` against central
/// differences with step `h`, over every parameter scalar.
pub fn finite_difference_check<F>(store: &ParamStore, h: f64, f: F) -> Result<GradCheck, NumericError>
where
    F: Fn(&mut Graph) -> Result<Var, NumericError>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let loss = f(&mut g)?;
        g.backward(loss)?
    };
    let eval = |s: &ParamStore| -> Result<f64, NumericError> {
        let mut g = Graph::new(s);
        let loss = f(&mut g)?;
        Ok(g.value(loss).item())
    };
    let mut work = store.clone();
    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    for id in store.ids() {
        for k in 0..store.value(id).data().len() {
            let x = store.value(id).data()[k];
            work.value_mut(id).data_mut()[k] = x + h;
            let up = eval(&work)?;
            work.value_mut(id).data_mut()[k] = x - h;
            let down = eval(&work)?;
            work.value_mut(id).data_mut()[k] = x;
            let numeric = (up - down) / (2.0 * h);
            max_rel = max_rel.max(rel_error(analytic.get(id).data()[k], numeric));
            checked += 1;
        }
    }
    Ok(GradCheck { max_rel, checked })
}
