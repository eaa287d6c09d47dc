//! Recovering aperture and focus from a defocused observation.
//!
//! Given the sharp image, its depth and a defocused observation, `fit_lens`
//! runs projected Adam on the reconstruction loss
//! `(1 − λ)·L1 + λ·D-SSIM` of the rendered frame against the observation,
//! using the renderer's forward-mode lens derivatives. Once the lens has
//! settled (and the adaptation threshold is reached) pixels are reweighted by
//! a sigmoid of their distance from the focal plane, in both the loss and the
//! per-pixel aperture.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{DepthMap, Image, CHANNELS};
use crate::metrics::{l1, ssim, ssim_weighted_grad, SsimConfig};
use crate::optics::{CocProfile, GammaSpec, LensParams};
use crate::render::DefocusRenderer;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const MAX_BACKTRACKS: usize = 4;
/// Step scale growth after an accepted step.
const STEP_GROWTH: f64 = 1.25;
/// Below this step scale the lens is held fixed for the rest of the phase.
const MIN_STEP_SCALE: f64 = 1.0 / 1024.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Weight of the D-SSIM term.
    pub lambda_rec: f64,
    /// Steepness of the adaptation sigmoid.
    pub adapt_a: f64,
    /// Center of the adaptation sigmoid, in disparity units.
    pub adapt_b: f64,
    /// Iteration at which adaptation may start; `None` means a third of
    /// `max_iters`.
    pub adapt_t: Option<usize>,
    pub adaptation: bool,
    pub max_iters: usize,
    pub lr_aperture: f64,
    pub lr_focus: f64,
    /// Per-iteration multiplicative step-size decay, restarted when
    /// adaptation begins.
    pub lr_decay: f64,
    pub init_aperture: f64,
    pub init_focus: f64,
    /// Largest parameter movement over `convergence_window` iterations that
    /// still counts as converged.
    pub tolerance: f64,
    pub convergence_window: usize,
    /// Reject steps that increase the objective and retry with half the step.
    pub line_search: bool,
    pub aperture_bounds: [f64; 2],
    pub focus_bounds: [f64; 2],
    pub profile: CocProfile,
    pub gamma: GammaSpec,
    pub ssim: SsimConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda_rec: 0.2,
            adapt_a: 15.0,
            adapt_b: 0.3,
            adapt_t: None,
            adaptation: true,
            max_iters: 150,
            lr_aperture: 0.05,
            lr_focus: 0.05,
            lr_decay: 0.985,
            init_aperture: 0.3,
            init_focus: 0.5,
            tolerance: 2e-3,
            convergence_window: 50,
            line_search: false,
            aperture_bounds: [0.0, 2.0],
            focus_bounds: [0.01, 1.0],
            profile: CocProfile::default(),
            gamma: GammaSpec::default(),
            ssim: SsimConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, reason: String| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(field, reason))
            }
        };
        check(
            (0.0..=1.0).contains(&self.lambda_rec),
            "lambda_rec",
            format!("must be in [0, 1], got {}", self.lambda_rec),
        )?;
        check(
            self.adapt_a > 0.0,
            "adapt_a",
            format!("must be > 0, got {}", self.adapt_a),
        )?;
        check(self.adapt_b.is_finite(), "adapt_b", "must be finite".into())?;
        check(self.max_iters > 0, "max_iters", "must be > 0".into())?;
        check(
            self.lr_aperture > 0.0,
            "lr_aperture",
            format!("must be > 0, got {}", self.lr_aperture),
        )?;
        check(
            self.lr_focus > 0.0,
            "lr_focus",
            format!("must be > 0, got {}", self.lr_focus),
        )?;
        check(
            self.lr_decay > 0.0 && self.lr_decay <= 1.0,
            "lr_decay",
            format!("must be in (0, 1], got {}", self.lr_decay),
        )?;
        check(
            self.tolerance > 0.0,
            "tolerance",
            format!("must be > 0, got {}", self.tolerance),
        )?;
        check(
            self.convergence_window > 0,
            "convergence_window",
            "must be > 0".into(),
        )?;
        let [a_lo, a_hi] = self.aperture_bounds;
        check(
            a_lo >= 0.0 && a_hi > a_lo,
            "aperture_bounds",
            format!("need 0 <= lo < hi, got [{a_lo}, {a_hi}]"),
        )?;
        let [f_lo, f_hi] = self.focus_bounds;
        check(
            f_lo > 0.0 && f_hi <= 1.0 && f_hi > f_lo,
            "focus_bounds",
            format!("need 0 < lo < hi <= 1, got [{f_lo}, {f_hi}]"),
        )?;
        check(
            (a_lo..=a_hi).contains(&self.init_aperture),
            "init_aperture",
            format!("{} outside aperture_bounds", self.init_aperture),
        )?;
        check(
            (f_lo..=f_hi).contains(&self.init_focus),
            "init_focus",
            format!("{} outside focus_bounds", self.init_focus),
        )?;
        self.profile.validate()?;
        self.gamma.validate()?;
        self.ssim.validate()
    }

    pub fn adaptation_threshold(&self) -> usize {
        self.adapt_t.unwrap_or(self.max_iters / 3)
    }

    fn project(&self, aperture: f64, focus: f64) -> (f64, f64) {
        (
            aperture.clamp(self.aperture_bounds[0], self.aperture_bounds[1]),
            focus.clamp(self.focus_bounds[0], self.focus_bounds[1]),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub aperture: f64,
    pub focus: f64,
    /// Reconstruction loss of the unweighted render against the observation.
    pub loss: f64,
    /// The objective actually minimized at this step (Ψ-weighted once
    /// adaptation is active).
    pub objective: f64,
    pub adapted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub entries: Vec<TraceEntry>,
    pub converged: bool,
    pub converged_at: Option<usize>,
    pub adaptation_started: Option<usize>,
    pub best_iteration: usize,
    pub rejected_steps: usize,
    pub psi: Option<PsiStats>,
}

impl FitTrace {
    /// One JSON object per line: iteration, aperture, focus, loss.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.entries {
            let line = serde_json::json!({
                "iteration": e.iteration,
                "aperture": e.aperture,
                "focus": e.focus,
                "loss": e.loss,
            });
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Structural dissimilarity `(1 − SSIM)/2`.
pub fn dssim(x: &Image, y: &Image) -> Result<f64> {
    Ok((1.0 - ssim(x, y, &SsimConfig::default())?.mean) / 2.0)
}

/// `(1 − λ)·L1 + λ·D-SSIM`.
pub fn loss_rec(render: &Image, observed: &Image, lambda_rec: f64) -> Result<f64> {
    render.same_dims(observed, "reconstruction loss")?;
    let mut loss = (1.0 - lambda_rec) * l1(render, observed)?;
    if lambda_rec > 0.0 {
        loss += lambda_rec * dssim(render, observed)?;
    }
    Ok(loss)
}

/// Ψ per pixel: 1 before iteration `t`, then `1/(1 + exp(−a(x − b)))` of the
/// distance `x = |ρ_F − ρ|` from the focal plane.
pub fn adaptation_weight(x: &[f64], iterations: usize, cfg: &FitConfig) -> Vec<f64> {
    if iterations < cfg.adaptation_threshold() {
        return vec![1.0; x.len()];
    }
    x.iter()
        .map(|&xi| sigmoid(cfg.adapt_a * (xi - cfg.adapt_b)))
        .collect()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Ψ evaluated at the current focus, independent of the iteration gate.
pub fn focus_weights(disparity: &[f64], focus: f64, cfg: &FitConfig) -> Vec<f64> {
    disparity
        .iter()
        .map(|&rho| sigmoid(cfg.adapt_a * ((focus - rho).abs() - cfg.adapt_b)))
        .collect()
}

/// Objective value and its lens gradient at one parameter setting.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub objective: f64,
    pub d_aperture: f64,
    pub d_focus: f64,
    pub render: Image,
}

/// Ψ-weighted reconstruction objective and its gradient with respect to the
/// rendered display values.
///
/// `mean_p Ψ_p·(1 − λ)·|D − I|_p + λ·mean_valid Ψ_p·(1 − SSIM_p)/2`, which is
/// exactly [`loss_rec`] when Ψ is absent.
pub fn weighted_loss_rec(
    render: &Image,
    observed: &Image,
    lambda_rec: f64,
    ssim_cfg: &SsimConfig,
    psi: Option<&[f64]>,
) -> Result<(f64, Vec<f64>)> {
    render.same_dims(observed, "reconstruction loss")?;
    let n = render.data().len() as f64;
    let weight = |p: usize| psi.map_or(1.0, |w| w[p]);

    let mut value = 0.0;
    let mut grad = vec![0.0; render.data().len()];
    for (k, (d, o)) in render.data().iter().zip(observed.data()).enumerate() {
        let wp = weight(k / CHANNELS) * (1.0 - lambda_rec) / n;
        value += wp * (d - o).abs();
        grad[k] = wp * sign(d - o);
    }
    if lambda_rec > 0.0 {
        let (ssim_value, ssim_grad) = ssim_weighted_grad(render, observed, ssim_cfg, psi)?;
        let psi_mean = match psi {
            None => 1.0,
            Some(w) => {
                let (rw, rh) = (render.width(), render.height());
                let half = ssim_cfg.window / 2;
                let mut sum = 0.0;
                for y in half..rh - half {
                    for x in half..rw - half {
                        sum += w[y * rw + x];
                    }
                }
                sum / ((rw - 2 * half) * (rh - 2 * half)) as f64
            }
        };
        value += lambda_rec * 0.5 * (psi_mean - ssim_value);
        for (g, s) in grad.iter_mut().zip(ssim_grad) {
            *g -= lambda_rec * 0.5 * s;
        }
    }
    Ok((value, grad))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Renders at `lens` and evaluates the (optionally Ψ-weighted) objective and
/// its lens gradient. Ψ, when given, scales both the loss and the aperture and
/// is treated as a constant.
pub fn evaluate(
    renderer: &DefocusRenderer,
    observed: &Image,
    lens: &LensParams,
    lambda_rec: f64,
    ssim_cfg: &SsimConfig,
    psi: Option<&[f64]>,
) -> Result<LossEval> {
    let (rendered, grads) = renderer.render_with_grad(lens, psi)?;
    let (objective, d_render) =
        weighted_loss_rec(&rendered.image, observed, lambda_rec, ssim_cfg, psi)?;
    let d_aperture = d_render
        .iter()
        .zip(&grads.d_aperture)
        .map(|(a, b)| a * b)
        .sum();
    let d_focus = d_render
        .iter()
        .zip(&grads.d_focus)
        .map(|(a, b)| a * b)
        .sum();
    Ok(LossEval {
        objective,
        d_aperture,
        d_focus,
        render: rendered.image,
    })
}

struct Adam {
    m: [f64; 2],
    v: [f64; 2],
    t: i32,
}

impl Adam {
    fn new() -> Self {
        Self {
            m: [0.0; 2],
            v: [0.0; 2],
            t: 0,
        }
    }

    fn direction(&mut self, grad: [f64; 2], lr: [f64; 2]) -> [f64; 2] {
        self.t += 1;
        let mut dir = [0.0; 2];
        for k in 0..2 {
            self.m[k] = ADAM_BETA1 * self.m[k] + (1.0 - ADAM_BETA1) * grad[k];
            self.v[k] = ADAM_BETA2 * self.v[k] + (1.0 - ADAM_BETA2) * grad[k] * grad[k];
            let m_hat = self.m[k] / (1.0 - ADAM_BETA1.powi(self.t));
            let v_hat = self.v[k] / (1.0 - ADAM_BETA2.powi(self.t));
            dir[k] = lr[k] * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        dir
    }
}

/// Recovers aperture and focus of `observed` given the sharp image and depth.
///
/// Returns the parameters with the lowest reconstruction loss seen, together
/// with the optimization trace. Running out of iterations is reported in the
/// trace, not as an error; a non-finite objective is an error.
pub fn fit_lens(
    sharp: &Image,
    depth: &DepthMap,
    observed: &Image,
    cfg: &FitConfig,
) -> Result<(LensParams, FitTrace)> {
    cfg.validate()?;
    sharp.same_dims(observed, "sharp vs observed")?;
    if observed.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::domain("observed image values must lie in [0, 1]"));
    }
    let renderer = DefocusRenderer::new(sharp, depth, &cfg.profile, &cfg.gamma)?;
    fit_with_renderer(&renderer, observed, cfg)
}

pub fn fit_with_renderer(
    renderer: &DefocusRenderer,
    observed: &Image,
    cfg: &FitConfig,
) -> Result<(LensParams, FitTrace)> {
    let threshold = cfg.adaptation_threshold();
    let window = cfg.convergence_window;
    let lr = [cfg.lr_aperture, cfg.lr_focus];
    let mut trace = FitTrace::default();

    let (a0, f0) = cfg.project(cfg.init_aperture, cfg.init_focus);
    let mut lens = LensParams::new(a0, f0)?;
    let mut adapted = false;
    let mut psi: Option<Vec<f64>> = None;
    let mut adam = Adam::new();
    // persistent line-search scale; the lens is frozen once it underflows
    let mut scale = 1.0;
    let mut stalled = false;

    let eval_at = |lens: &LensParams, psi: Option<&[f64]>| -> Result<LossEval> {
        evaluate(renderer, observed, lens, cfg.lambda_rec, &cfg.ssim, psi)
    };
    let plain_loss = |lens: &LensParams, current: &LossEval, adapted: bool| -> Result<f64> {
        if !adapted {
            return Ok(current.objective);
        }
        let plain = renderer.render(lens)?;
        loss_rec(&plain.image, observed, cfg.lambda_rec)
    };

    let mut current = eval_at(&lens, None)?;
    let mut best = (current.objective, lens, 0usize);
    trace.entries.push(TraceEntry {
        iteration: 0,
        aperture: lens.aperture,
        focus: lens.focus,
        loss: current.objective,
        objective: current.objective,
        adapted: false,
    });

    for iteration in 1..cfg.max_iters {
        if !current.objective.is_finite() {
            return Err(Error::Divergence {
                iteration,
                trace: Box::new(trace),
            });
        }

        let converged_now = is_converged(&trace.entries, window, cfg.tolerance);
        if converged_now && trace.converged_at.is_none() {
            trace.converged_at = Some(iteration);
        }
        if cfg.adaptation && !adapted && iteration >= threshold && trace.converged_at.is_some() {
            adapted = true;
            trace.adaptation_started = Some(iteration);
            adam = Adam::new();
            scale = 1.0;
            stalled = false;
            let weights = focus_weights(renderer.disparity(), lens.focus, cfg);
            current = eval_at(&lens, Some(&weights))?;
            psi = Some(weights);
        } else if converged_now
            && (!cfg.adaptation
                || (adapted && iteration >= trace.adaptation_started.unwrap_or(0) + window))
        {
            break;
        }

        if stalled {
            if adapted {
                break;
            }
            trace.entries.push(TraceEntry {
                iteration,
                aperture: lens.aperture,
                focus: lens.focus,
                loss: current.objective,
                objective: current.objective,
                adapted,
            });
            continue;
        }

        let fresh = adam.t == 0;
        let phase_start = trace.adaptation_started.unwrap_or(0);
        let decay = cfg.lr_decay.powi((iteration - phase_start) as i32);
        let dir = adam.direction(
            [current.d_aperture, current.d_focus],
            [lr[0] * decay, lr[1] * decay],
        );
        let mut accepted = None;
        for _ in 0..=MAX_BACKTRACKS {
            let (a, f) = cfg.project(lens.aperture - scale * dir[0], lens.focus - scale * dir[1]);
            let trial_lens = LensParams::new(a, f)?;
            let trial_psi = psi
                .as_ref()
                .map(|_| focus_weights(renderer.disparity(), f, cfg));
            let trial = eval_at(&trial_lens, trial_psi.as_deref())?;
            if !trial.objective.is_finite() {
                trace.entries.push(TraceEntry {
                    iteration,
                    aperture: a,
                    focus: f,
                    loss: trial.objective,
                    objective: trial.objective,
                    adapted,
                });
                return Err(Error::Divergence {
                    iteration,
                    trace: Box::new(trace),
                });
            }
            if !cfg.line_search || trial.objective <= current.objective {
                accepted = Some((trial_lens, trial, trial_psi));
                break;
            }
            trace.rejected_steps += 1;
            scale *= 0.5;
            if scale < MIN_STEP_SCALE {
                break;
            }
        }

        match accepted {
            Some((trial_lens, trial, trial_psi)) => {
                lens = trial_lens;
                current = trial;
                if trial_psi.is_some() {
                    psi = trial_psi;
                }
                scale = (scale * STEP_GROWTH).min(1.0);
            }
            None => {
                // stale momentum can point uphill; retry from a fresh direction
                stalled = fresh && scale < MIN_STEP_SCALE;
                adam = Adam::new();
                scale = scale.max(MIN_STEP_SCALE);
            }
        }
        let loss = plain_loss(&lens, &current, adapted)?;
        if loss < best.0 {
            best = (loss, lens, iteration);
        }
        trace.entries.push(TraceEntry {
            iteration,
            aperture: lens.aperture,
            focus: lens.focus,
            loss,
            objective: current.objective,
            adapted,
        });
    }

    trace.converged = is_converged(&trace.entries, window, cfg.tolerance);
    trace.best_iteration = best.2;
    trace.psi = psi.as_deref().map(psi_stats);
    Ok((best.1, trace))
}

fn is_converged(entries: &[TraceEntry], window: usize, tolerance: f64) -> bool {
    if entries.len() <= window {
        return false;
    }
    let last = &entries[entries.len() - 1];
    entries[entries.len() - 1 - window..].iter().all(|e| {
        (e.aperture - last.aperture).abs() < tolerance && (e.focus - last.focus).abs() < tolerance
    })
}

fn psi_stats(psi: &[f64]) -> PsiStats {
    let (min, max, sum) = psi.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, 0.0),
        |(lo, hi, s), &v| (lo.min(v), hi.max(v), s + v),
    );
    PsiStats {
        min,
        max,
        mean: sum / psi.len() as f64,
    }
}

/// Mean absolute aperture and focus errors between fitted and reference
/// parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LensError {
    pub delta_aperture: f64,
    pub delta_focus: f64,
}

pub fn lens_error(fitted: &[LensParams], gt: &[LensParams]) -> Result<LensError> {
    if fitted.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "fitted vs reference lens lists",
            left: fitted.len(),
            right: gt.len(),
        });
    }
    if fitted.is_empty() {
        return Err(Error::domain("lens error needs at least one pair"));
    }
    let n = fitted.len() as f64;
    let (da, df) = fitted.iter().zip(gt).fold((0.0, 0.0), |(da, df), (f, g)| {
        (
            da + (f.aperture - g.aperture).abs(),
            df + (f.focus - g.focus).abs(),
        )
    });
    Ok(LensError {
        delta_aperture: da / n,
        delta_focus: df / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()])
    }

    #[test]
    fn dssim_properties() {
        let x = noise(16, 16, 1);
        assert_eq!(dssim(&x, &x).unwrap(), 0.0);
        let y = noise(16, 16, 2);
        assert_eq!(dssim(&x, &y).unwrap(), dssim(&y, &x).unwrap());
        let neg = x.map(|v| 1.0 - v);
        assert!(dssim(&x, &neg).unwrap() > 0.9);
    }

    #[test]
    fn loss_rec_values() {
        let x = noise(16, 16, 3);
        for lambda in [0.0, 0.2, 1.0] {
            assert_eq!(loss_rec(&x, &x, lambda).unwrap(), 0.0);
        }
        let a = Image::filled(16, 16, [0.3; 3]);
        let b = Image::filled(16, 16, [0.4; 3]);
        assert!((loss_rec(&a, &b, 0.0).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(FitConfig::default().lambda_rec, 0.2);
        assert!(loss_rec(&a, &Image::filled(15, 16, [0.3; 3]), 0.2).is_err());
    }

    #[test]
    fn weighted_loss_reduces_to_plain() {
        let x = noise(16, 14, 4);
        let y = noise(16, 14, 5);
        let plain = loss_rec(&x, &y, 0.2).unwrap();
        let ones = vec![1.0; 16 * 14];
        let (w1, _) = weighted_loss_rec(&x, &y, 0.2, &SsimConfig::default(), Some(&ones)).unwrap();
        let (w0, _) = weighted_loss_rec(&x, &y, 0.2, &SsimConfig::default(), None).unwrap();
        assert!((plain - w0).abs() < 1e-14);
        assert!((plain - w1).abs() < 1e-14);
    }

    #[test]
    fn adaptation_schedule() {
        let cfg = FitConfig {
            adapt_t: Some(10),
            ..FitConfig::default()
        };
        let x = [0.0, 0.3, 0.5, 1.0];
        assert_eq!(adaptation_weight(&x, 0, &cfg), vec![1.0; 4]);
        assert_eq!(adaptation_weight(&x, 9, &cfg), vec![1.0; 4]);
        let psi = adaptation_weight(&x, 10, &cfg);
        assert_eq!(psi[1], 0.5);
        assert!((psi[2] - 0.952_574_126_822_433_4).abs() < 1e-12);
        assert!(psi.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn steeper_sigmoid() {
        let base = FitConfig {
            adapt_t: Some(0),
            ..FitConfig::default()
        };
        let steep = FitConfig {
            adapt_a: 30.0,
            ..base.clone()
        };
        let eps = 0.05;
        let x = [0.3 - eps, 0.3, 0.3 + eps];
        let p = adaptation_weight(&x, 0, &base);
        let q = adaptation_weight(&x, 0, &steep);
        assert!(q[0] < p[0]);
        assert_eq!(q[1], 0.5);
        assert!(q[2] > p[2]);
    }

    #[test]
    fn lens_error_values() {
        let gt = [LensParams::new(0.5, 0.2).unwrap()];
        assert_eq!(
            lens_error(&gt, &gt).unwrap(),
            LensError {
                delta_aperture: 0.0,
                delta_focus: 0.0
            }
        );
        let fitted = [LensParams::new(0.6, 0.2).unwrap()];
        let e = lens_error(&fitted, &gt).unwrap();
        assert!((e.delta_aperture - 0.1).abs() < 1e-12);
        assert_eq!(e.delta_focus, 0.0);
        assert!(lens_error(&fitted, &[]).is_err());
        assert!(lens_error(&[], &[]).is_err());
    }

    #[test]
    fn config_validation_names_field() {
        let cfg = FitConfig {
            lambda_rec: 1.5,
            ..FitConfig::default()
        };
        match cfg.validate() {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "lambda_rec"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
