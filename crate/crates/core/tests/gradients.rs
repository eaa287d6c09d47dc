mod common;

use common::{noise_image, random_depth, rng};
use lensdof_core::fit::{evaluate, loss_rec, weighted_loss_rec};
use lensdof_core::metrics::SsimConfig;
use lensdof_core::{CocProfile, DefocusRenderer, GammaSpec, Image, LensParams};
use rand::Rng;

const H: f64 = 1e-4;

/// Observation kept 0.25 away from the render at every value so the L1 term
/// stays differentiable under ±H perturbations.
fn offset_observation(render: &Image, rng: &mut impl Rng) -> Image {
    let data = render
        .data()
        .iter()
        .map(|&v| {
            let up = rng.random_bool(0.5);
            if (up && v + 0.25 <= 1.0) || v - 0.25 < 0.0 {
                v + 0.25
            } else {
                v - 0.25
            }
        })
        .collect();
    Image::new(render.width(), render.height(), data).unwrap()
}

fn close(analytic: f64, numeric: f64) -> bool {
    if numeric.abs() < 1e-3 {
        (analytic - numeric).abs() < 1e-6
    } else {
        ((analytic - numeric) / numeric).abs() < 1e-3
    }
}

#[test]
fn lens_gradient_matches_central_differences() {
    let mut rng = rng(21);
    let mut checked = 0;
    while checked < 12 {
        let color = noise_image(16, 16, &mut rng);
        let depth = random_depth(16, 16, &mut rng);
        let renderer = DefocusRenderer::new(
            &color,
            &depth,
            &CocProfile::default(),
            &GammaSpec::default(),
        )
        .unwrap();
        let focus = rng.random_range(0.05..0.95);
        // |F − ρ| is not differentiable where the focal plane meets a pixel
        if renderer
            .disparity()
            .iter()
            .any(|rho| (rho - focus).abs() < 1e-3)
        {
            continue;
        }
        let lens = LensParams::new(rng.random_range(0.1..1.5), focus).unwrap();
        let observed = offset_observation(&renderer.render(&lens).unwrap().image, &mut rng);
        let loss = |a: f64, f: f64| {
            let img = renderer
                .render(&LensParams::new(a, f).unwrap())
                .unwrap()
                .image;
            loss_rec(&img, &observed, 0.2).unwrap()
        };
        let eval = evaluate(
            &renderer,
            &observed,
            &lens,
            0.2,
            &SsimConfig::default(),
            None,
        )
        .unwrap();
        let num_a =
            (loss(lens.aperture + H, lens.focus) - loss(lens.aperture - H, lens.focus)) / (2.0 * H);
        let num_f =
            (loss(lens.aperture, lens.focus + H) - loss(lens.aperture, lens.focus - H)) / (2.0 * H);
        assert!(
            close(eval.d_aperture, num_a),
            "dA {} vs {num_a}",
            eval.d_aperture
        );
        assert!(close(eval.d_focus, num_f), "dF {} vs {num_f}", eval.d_focus);
        checked += 1;
    }
}

#[test]
fn objective_matches_plain_loss() {
    let mut rng = rng(22);
    let color = noise_image(20, 18, &mut rng);
    let depth = random_depth(20, 18, &mut rng);
    let renderer = DefocusRenderer::new(
        &color,
        &depth,
        &CocProfile::default(),
        &GammaSpec::default(),
    )
    .unwrap();
    let observed = noise_image(20, 18, &mut rng);
    let lens = LensParams::new(0.4, 0.6).unwrap();
    let eval = evaluate(
        &renderer,
        &observed,
        &lens,
        0.2,
        &SsimConfig::default(),
        None,
    )
    .unwrap();
    let plain = loss_rec(&eval.render, &observed, 0.2).unwrap();
    assert!((eval.objective - plain).abs() < 1e-12);
}

#[test]
fn weighted_loss_gradient_matches_differences() {
    let mut rng = rng(23);
    let x = noise_image(16, 16, &mut rng);
    let y = offset_observation(&x, &mut rng);
    let psi: Vec<f64> = (0..256).map(|_| rng.random_range(0.05..1.0)).collect();
    let (_, grad) = weighted_loss_rec(&x, &y, 0.2, &SsimConfig::default(), Some(&psi)).unwrap();
    for k in [0usize, 77, 300, 511, 767] {
        let bump = |delta: f64| {
            let mut data = x.data().to_vec();
            data[k] += delta;
            let xi = Image::new(16, 16, data).unwrap();
            weighted_loss_rec(&xi, &y, 0.2, &SsimConfig::default(), Some(&psi))
                .unwrap()
                .0
        };
        let numeric = (bump(1e-6) - bump(-1e-6)) / 2e-6;
        assert!(
            (grad[k] - numeric).abs() < 1e-7,
            "{k}: {} vs {numeric}",
            grad[k]
        );
    }
}

#[test]
fn weighted_render_gradient_matches_differences() {
    let mut rng = rng(24);
    let color = noise_image(16, 16, &mut rng);
    let depth = random_depth(16, 16, &mut rng);
    let renderer = DefocusRenderer::new(
        &color,
        &depth,
        &CocProfile::default(),
        &GammaSpec::default(),
    )
    .unwrap();
    let weights: Vec<f64> = (0..256).map(|_| rng.random_range(0.2..1.0)).collect();
    let lens = LensParams::new(0.7, 0.37).unwrap();
    let (_, grads) = renderer.render_with_grad(&lens, Some(&weights)).unwrap();
    let at = |a: f64| {
        renderer
            .render_weighted(&LensParams::new(a, lens.focus).unwrap(), &weights)
            .unwrap()
            .image
    };
    let (plus, minus) = (at(lens.aperture + H), at(lens.aperture - H));
    for k in 0..plus.data().len() {
        let numeric = (plus.data()[k] - minus.data()[k]) / (2.0 * H);
        assert!((grads.d_aperture[k] - numeric).abs() < 1e-5 * (1.0 + numeric.abs()));
    }
}
