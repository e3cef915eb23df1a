//! Front-to-back volume compositing and its reverse pass.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Transmittance below which inference may stop marching a ray.
pub const EARLY_STOP_TRANSMITTANCE: f64 = 1e-4;

/// Ordered samples along one ray.
#[derive(Clone, Copy, Debug)]
pub struct SampleSpan<'a, R> {
    /// Ray parameter of each sample, used only to check ordering.
    pub t: &'a [R],
    pub delta: &'a [R],
    pub sigma: &'a [R],
    pub color: &'a [[R; 3]],
}

impl<'a, R: Real> SampleSpan<'a, R> {
    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n = self.delta.len();
        for len in [self.t.len(), self.sigma.len(), self.color.len()] {
            if len != n {
                return Err(Error::ShapeMismatch { expected: n, got: len });
            }
        }
        for i in 0..n {
            if !(self.delta[i] > R::zero()) {
                return Err(Error::NegativeInterval(i));
            }
            if i > 0 && !(self.t[i] > self.t[i - 1]) {
                return Err(Error::UnorderedSamples(i));
            }
        }
        Ok(())
    }
}

/// Result of compositing one ray.
#[derive(Clone, Debug, PartialEq)]
pub struct Composite<R> {
    pub color: [R; 3],
    /// `w_i = T_i (1 - exp(-σ_i δ_i))`
    pub weights: Vec<R>,
    /// `T_i`, transmittance in front of sample `i`.
    pub transmittance: Vec<R>,
    /// Transmittance behind the last processed sample.
    pub final_transmittance: R,
    pub background: [R; 3],
}

impl<R: Real> Composite<R> {
    /// `Σ w_i + T_final`, which is 1 up to rounding.
    pub fn total_mass(&self) -> R {
        self.weights.iter().copied().sum::<R>() + self.final_transmittance
    }
}

/// `Ĉ = Σ T_i (1 - e^{-σ_i δ_i}) c_i + T_final · background`.
///
/// With `early_stop = Some(eps)` marching stops once `T_i < eps`; the skipped
/// samples get zero weight. Leave it `None` whenever gradients are needed.
pub fn composite<R: Real>(samples: SampleSpan<'_, R>, background: [R; 3], early_stop: Option<R>) -> Result<Composite<R>> {
    samples.check()?;
    let n = samples.len();
    let mut weights = vec![R::zero(); n];
    let mut transmittance = vec![R::zero(); n];
    let mut color = [R::zero(); 3];
    let mut trans = R::one();
    for i in 0..n {
        transmittance[i] = trans;
        if let Some(eps) = early_stop {
            if trans < eps {
                continue;
            }
        }
        let survive = (-samples.sigma[i] * samples.delta[i]).exp();
        let w = trans * (R::one() - survive);
        weights[i] = w;
        for k in 0..3 {
            color[k] += w * samples.color[i][k];
        }
        trans = trans * survive;
    }
    for k in 0..3 {
        color[k] += trans * background[k];
    }
    Ok(Composite {
        color,
        weights,
        transmittance,
        final_transmittance: trans,
        background,
    })
}

/// Gradients of a scalar loss with respect to every `σ_i` and `c_i`, given
/// `dL/dĈ`, in one back-to-front sweep:
///
/// `dL/dc_i = w_i g` and
/// `dL/dσ_i = δ_i (T_{i+1} c_i·g - Σ_{k>i} w_k c_k·g - T_final bg·g)`.
pub fn composite_backward<R: Real>(
    samples: SampleSpan<'_, R>,
    forward: &Composite<R>,
    d_color: [R; 3],
) -> Result<(Vec<R>, Vec<[R; 3]>)> {
    let n = samples.len();
    if forward.weights.len() != n || forward.transmittance.len() != n {
        return Err(Error::MissingCache);
    }
    let dotg = |c: &[R; 3]| c[0] * d_color[0] + c[1] * d_color[1] + c[2] * d_color[2];
    let mut d_sigma = vec![R::zero(); n];
    let mut d_rgb = vec![[R::zero(); 3]; n];
    let mut behind = forward.final_transmittance * dotg(&forward.background);
    let mut next_trans = forward.final_transmittance;
    for i in (0..n).rev() {
        let w = forward.weights[i];
        let cg = dotg(&samples.color[i]);
        d_rgb[i] = [w * d_color[0], w * d_color[1], w * d_color[2]];
        d_sigma[i] = samples.delta[i] * (next_trans * cg - behind);
        behind += w * cg;
        next_trans = forward.transmittance[i];
    }
    Ok((d_sigma, d_rgb))
}
