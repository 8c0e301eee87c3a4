//! Central finite-difference validation of tape gradients.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{Graph, NumericError, ParamStore, Precision, Var};
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Finite-difference step per coordinate.
    pub step: f64,
    /// Pass threshold on the maximum relative error.
    pub tol: f64,
    /// Denominator floor: relative error is `|a - n| / max(|a|, |n|, floor)`.
    pub floor: f64,
    /// Check at most this many randomly chosen coordinates per parameter.
    pub max_coords_per_param: Option<usize>,
    pub seed: u64,
    /// Fourth-order stencil `f(x±h)`, `f(x±2h)`; truncation error drops
    /// from `O(h^2)` to `O(h^4)`, so a larger `step` keeps roundoff low.
    pub five_point: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tol: 1e-6,
            floor: 1e-4,
            max_coords_per_param: None,
            seed: 0,
            five_point: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    pub pass: bool,
}

fn eval<F>(params: &ParamStore, f: &F) -> Result<f64, NumericError>
where
    F: Fn(&mut Graph) -> Result<Var, NumericError>,
{
    let mut g = Graph::with_precision(params, Precision::F64);
    let out = f(&mut g)?;
    let t = g.value(out);
    if t.numel() != 1 {
        return Err(NumericError::Dimension("grad_check needs a scalar function"));
    }
    let v = t.data()[0];
    if !v.is_finite() {
        return Err(NumericError::Evaluation);
    }
    Ok(v)
}

/// Compares analytic gradients of the scalar `f` with central differences,
/// always at 64-bit precision.
pub fn grad_check<F>(params: &ParamStore, f: F, cfg: &GradCheckConfig) -> Result<GradCheckReport, NumericError>
where
    F: Fn(&mut Graph) -> Result<Var, NumericError>,
{
    let grads = {
        let mut g = Graph::with_precision(params, Precision::F64);
        let out = f(&mut g)?;
        if !g.value(out).data()[0].is_finite() {
            return Err(NumericError::Evaluation);
        }
        g.backward(out)?
    };

    let mut rng = Rng::seed(cfg.seed);
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
        pass: true,
    };
    for id in 0..params.len() {
        let n = params.by_id(id).numel();
        let coords: Vec<usize> = match cfg.max_coords_per_param {
            Some(k) if k < n => (0..k).map(|_| rng.below(n)).collect(),
            _ => (0..n).collect(),
        };
        for c in coords {
            let orig = params.by_id(id).data()[c];
            let mut at = |dx: f64| {
                work.by_id_mut(id).data_mut()[c] = orig + dx;
                let v = eval(&work, &f);
                work.by_id_mut(id).data_mut()[c] = orig;
                v
            };
            let h = cfg.step;
            let numeric = if cfg.five_point {
                (8.0 * (at(h)? - at(-h)?) - (at(2.0 * h)? - at(-2.0 * h)?)) / (12.0 * h)
            } else {
                (at(h)? - at(-h)?) / (2.0 * h)
            };
            let analytic = grads.by_id(id).data()[c];
            let denom = libm::fabs(analytic).max(libm::fabs(numeric)).max(cfg.floor);
            let rel = libm::fabs(analytic - numeric) / denom;
            report.checked += 1;
            if report.worst.is_none() || rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((params.name(id).to_string(), c));
            }
        }
    }
    report.pass = report.max_rel_err <= cfg.tol;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Tensor;

    #[test]
    fn quadratic_at_three() {
        let mut p = ParamStore::new();
        p.insert("x", Tensor::vector(alloc::vec![3.0])).unwrap();
        let f = |g: &mut Graph| {
            let x = g.param("x")?;
            let y = g.mul(x, x)?;
            g.sum(y)
        };
        let mut g = Graph::new(&p);
        let out = f(&mut g).unwrap();
        let grads = g.backward(out).unwrap();
        assert_eq!(grads.by_id(0).data()[0], 6.0);
        let r = grad_check(&p, f, &GradCheckConfig { tol: 1e-9, ..Default::default() }).unwrap();
        assert!(r.pass && r.max_rel_err < 1e-9, "{}", r.max_rel_err);
    }

    #[test]
    fn linear_function_is_exact() {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::vector(alloc::vec![0.5, -1.25, 2.0])).unwrap();
        let f = |g: &mut Graph| {
            let w = g.param("w")?;
            let c = g.input(Tensor::vector(alloc::vec![3.0, 0.25, -4.0]))?;
            let y = g.mul(w, c)?;
            g.sum(y)
        };
        let r = grad_check(&p, f, &GradCheckConfig { tol: 1e-9, ..Default::default() }).unwrap();
        assert!(r.max_rel_err < 1e-9, "{}", r.max_rel_err);
    }

    #[test]
    fn five_point_stencil_is_exact_on_quartics() {
        let mut p = ParamStore::new();
        p.insert("x", Tensor::vector(alloc::vec![0.7])).unwrap();
        let f = |g: &mut Graph| {
            let x = g.param("x")?;
            let x2 = g.mul(x, x)?;
            let x4 = g.mul(x2, x2)?;
            g.sum(x4)
        };
        let coarse = GradCheckConfig { step: 1e-2, ..Default::default() };
        let fine = GradCheckConfig { five_point: true, ..coarse.clone() };
        let a = grad_check(&p, f, &coarse).unwrap().max_rel_err;
        let b = grad_check(&p, f, &fine).unwrap().max_rel_err;
        assert!(a > 1e-5, "{a}");
        assert!(b < 1e-12, "{b}");
    }

    #[test]
    fn non_finite_function_is_an_error() {
        let mut p = ParamStore::new();
        p.insert("x", Tensor::vector(alloc::vec![1e200])).unwrap();
        let f = |g: &mut Graph| {
            let x = g.param("x")?;
            let y = g.mul(x, x)?;
            g.sum(y)
        };
        assert!(grad_check(&p, f, &GradCheckConfig::default()).is_err());
    }
}
