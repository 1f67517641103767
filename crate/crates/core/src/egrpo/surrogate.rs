use crate::error::{Error, Result};
use crate::policy::{self, accumulate_grad_kl, accumulate_grad_logprob, forward, Choice, FeatureVector, Gradient, PolicyParams};

/// One scored sample of the surrogate batch.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateEntry {
    pub x: FeatureVector,
    pub choice: Choice,
    /// Log-probability under the frozen sampling policy.
    pub logp_old: f64,
    pub a_loc: f64,
    /// Terminal credit; absent until the episode's outcome is known.
    pub a_glob: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurrogateHyper {
    pub eps: f64,
    pub lambda_r: f64,
    pub beta: f64,
}

#[derive(Clone, Debug)]
pub struct SurrogateOutput {
    pub objective: f64,
    pub gradient: Gradient,
    pub kl_mean: f64,
    /// Share of advantage terms whose ratio was clipped.
    pub clip_fraction: f64,
}

/// `min(rho*a, clip(rho, 1-eps, 1+eps)*a)` and its derivative in `rho`.
pub fn clipped_term(rho: f64, a: f64, eps: f64) -> (f64, f64) {
    let clipped = rho.clamp(1.0 - eps, 1.0 + eps);
    let plain = rho * a;
    let capped = clipped * a;
    if plain <= capped {
        (plain, a)
    } else {
        (capped, 0.0)
    }
}

/// Clipped surrogate with optional terminal credit and reference KL, plus its gradient.
///
/// The ratio's denominator and both advantages are constants.
pub fn surrogate_and_grad(
    params: &PolicyParams,
    params_ref: &PolicyParams,
    batch: &[SurrogateEntry],
    hyper: SurrogateHyper,
) -> Result<SurrogateOutput> {
    if batch.is_empty() {
        return Err(Error::Contract("surrogate batch is empty".into()));
    }
    if !(hyper.eps > 0.0 && hyper.eps < 1.0) {
        return Err(Error::Contract(format!("clip epsilon {} outside (0, 1)", hyper.eps)));
    }
    let n = batch.len() as f64;
    let mut gradient = params.zeros_like();
    let mut objective = 0.0;
    let mut kl_total = 0.0;
    let mut clipped = 0usize;
    let mut terms = 0usize;
    for e in batch {
        let heads = forward(params, &e.x)?;
        let rho = (heads.log_prob(e.choice) - e.logp_old).exp();
        if !rho.is_finite() {
            return Err(Error::TrainingAborted(format!("probability ratio overflowed ({rho})")));
        }
        let (loc, dloc) = clipped_term(rho, e.a_loc, hyper.eps);
        let mut value = loc;
        let mut drho = dloc;
        terms += 1;
        clipped += usize::from(dloc == 0.0 && e.a_loc != 0.0);
        if let Some(g) = e.a_glob {
            let (glob, dglob) = clipped_term(rho, g, hyper.eps);
            value += hyper.lambda_r * glob;
            drho += hyper.lambda_r * dglob;
            terms += 1;
            clipped += usize::from(dglob == 0.0 && g != 0.0);
        }
        objective += value / n;
        if drho != 0.0 {
            // d rho / d theta = rho * grad log pi
            accumulate_grad_logprob(&heads, &e.x, e.choice, drho * rho / n, &mut gradient);
        }
        if hyper.beta != 0.0 {
            let ref_heads = forward(params_ref, &e.x)?;
            let kl = policy::kl_divergence(&heads, &ref_heads);
            kl_total += kl;
            objective -= hyper.beta * kl / n;
            accumulate_grad_kl(&heads, &ref_heads, &e.x, -hyper.beta / n, &mut gradient);
        } else {
            kl_total += policy::kl_divergence(&heads, &forward(params_ref, &e.x)?);
        }
    }
    Ok(SurrogateOutput { objective, gradient, kl_mean: kl_total / n, clip_fraction: clipped as f64 / terms as f64 })
}
