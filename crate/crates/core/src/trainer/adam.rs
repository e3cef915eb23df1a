//! Adam with bias correction, in a dense form for the network and a sparse
//! form for the feature tables.

use crate::encoding::TableGrads;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-15,
        }
    }
}

/// First and second moment estimates, shaped like the parameters they track.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<R> {
    pub m: Vec<R>,
    pub v: Vec<R>,
}

impl<R: Real> Moments<R> {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![R::zero(); len],
            v: vec![R::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// Per-step constants of the update rule.
#[derive(Clone, Copy, Debug)]
struct Coeffs<R> {
    b1: R,
    b2: R,
    one_minus_b1: R,
    one_minus_b2: R,
    step_size: R,
    inv_bc2: R,
    eps: R,
}

impl<R: Real> Coeffs<R> {
    fn new(cfg: &AdamConfig, lr: f64, step: u64) -> Result<Self> {
        if step == 0 {
            return Err(Error::config("Adam step counter starts at 1"));
        }
        let bc1 = 1.0 - cfg.beta1.powf(step as f64);
        let bc2 = 1.0 - cfg.beta2.powf(step as f64);
        Ok(Self {
            b1: R::lit(cfg.beta1),
            b2: R::lit(cfg.beta2),
            one_minus_b1: R::lit(1.0 - cfg.beta1),
            one_minus_b2: R::lit(1.0 - cfg.beta2),
            step_size: R::lit(lr / bc1),
            inv_bc2: R::lit(1.0 / bc2),
            eps: R::lit(cfg.eps),
        })
    }

    /// `m ← β1 m + (1-β1) g`, `v ← β2 v + (1-β2) g²`,
    /// `p ← p - lr m̂ / (sqrt(v̂) + ε)`.
    #[inline]
    fn apply(&self, p: &mut [R], g: &[R], m: &mut [R], v: &mut [R]) {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = self.b1 * m[i] + self.one_minus_b1 * gi;
            v[i] = self.b2 * v[i] + self.one_minus_b2 * gi * gi;
            let denom = (v[i] * self.inv_bc2).sqrt() + self.eps;
            p[i] -= self.step_size * m[i] / denom;
        }
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::ShapeMismatch { expected, got });
    }
    Ok(())
}

/// Dense update of every parameter. `step` is the 1-based update count.
pub fn adam_step<R: Real>(params: &mut [R], grads: &[R], moments: &mut Moments<R>, lr: f64, step: u64, cfg: &AdamConfig) -> Result<()> {
    check_len(params.len(), grads.len())?;
    check_len(params.len(), moments.len())?;
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    let c = Coeffs::new(cfg, lr, step)?;
    c.apply(params, grads, &mut moments.m, &mut moments.v);
    Ok(())
}

/// Updates only the entries of `table` listed as touched in `grads`; all
/// other entries keep both their values and their moments.
pub fn sparse_adam_step<R: Real>(
    table: &mut [R],
    grads: &TableGrads<R>,
    table_index: usize,
    moments: &mut Moments<R>,
    lr: f64,
    step: u64,
    cfg: &AdamConfig,
) -> Result<()> {
    check_len(table.len(), moments.len())?;
    check_len(table.len(), grads.values[table_index].len())?;
    let touched = grads.touched(table_index);
    for &e in touched {
        if grads.entry(table_index, e).iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
    }
    let c = Coeffs::new(cfg, lr, step)?;
    let f = grads.features();
    for &e in touched {
        let r = e as usize * f..(e as usize + 1) * f;
        c.apply(
            &mut table[r.clone()],
            grads.entry(table_index, e),
            &mut moments.m[r.clone()],
            &mut moments.v[r],
        );
    }
    Ok(())
}
