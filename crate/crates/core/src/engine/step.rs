//! Single iterations of DGD, NDGD and gradient descent on `Q_alpha`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{NdgdError, Result};
use crate::objectives::{LiftedPoint, ObjectiveSet};
use crate::topology::MixingMatrix;

fn check_shapes(obj: &ObjectiveSet, w: &MixingMatrix, x: &LiftedPoint) -> Result<()> {
    if x.m() != obj.m() || x.n() != obj.n() || w.m() != obj.m() {
        return Err(NdgdError::Parameter(format!(
            "shape mismatch: point ({}, {}), objective ({}, {}), mixing {}",
            x.m(),
            x.n(),
            obj.m(),
            obj.n(),
            w.m()
        )));
    }
    Ok(())
}

/// `Ŵ x̂ - alpha ∇F(x̂)`: each agent averages its neighbours' blocks through
/// its row of `W` and takes a local gradient step.
pub fn dgd_step(obj: &ObjectiveSet, w: &MixingMatrix, alpha: f64, x: &LiftedPoint) -> Result<LiftedPoint> {
    check_shapes(obj, w, x)?;
    let mixed = w.mix(x.as_slice(), x.n());
    let grad = obj.f_grad(x);
    Ok(x.with_data(mixed.into_iter().zip(grad).map(|(v, g)| v - alpha * g).collect()))
}

/// `x̂ - alpha ∇Q_alpha(x̂)`.
pub fn gdq_step(obj: &ObjectiveSet, w: &MixingMatrix, alpha: f64, x: &LiftedPoint) -> Result<LiftedPoint> {
    let (_, grad) = obj.q_value_grad(w, alpha, x)?;
    Ok(x.with_data(x.as_slice().iter().zip(grad).map(|(v, g)| v - alpha * g).collect()))
}

/// `Ŵ x̂ - alpha (∇F(x̂) + noise)`.
pub fn ndgd_step(
    obj: &ObjectiveSet,
    w: &MixingMatrix,
    alpha: f64,
    x: &LiftedPoint,
    noise: &[f64],
) -> Result<LiftedPoint> {
    check_shapes(obj, w, x)?;
    if noise.len() != x.as_slice().len() {
        return Err(NdgdError::Parameter(format!("noise has length {}, expected {}", noise.len(), x.as_slice().len())));
    }
    let mixed = w.mix(x.as_slice(), x.n());
    let grad = obj.f_grad(x);
    Ok(x.with_data(mixed.into_iter().zip(grad).zip(noise).map(|((v, g), e)| v - alpha * (g + e)).collect()))
}

/// I.i.d. `N(0, sigma²)` entries, drawn agent by agent.
pub fn sample_perturbation<R: Rng + ?Sized>(m: usize, n: usize, sigma: f64, rng: &mut R) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; m * n];
    }
    (0..m * n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{make_quartic, random_quartic_coeffs, DomainBox};
    use crate::rng::stream_rng;
    use crate::topology::{build_regular_graph, lazy_metropolis_mixing};

    fn setup() -> (ObjectiveSet, MixingMatrix) {
        let g = build_regular_graph(8, 3, 2).unwrap();
        (make_quartic(&random_quartic_coeffs(8, 4)).unwrap(), lazy_metropolis_mixing(&g).unwrap())
    }

    #[test]
    fn stationary_consensus_is_fixed_point() {
        let m = 6;
        let obj = make_quartic(&vec![(1.0, 1.0, 1.0, -1.0); m]).unwrap();
        let w = lazy_metropolis_mixing(&build_regular_graph(m, 2, 0).unwrap()).unwrap();
        let x = LiftedPoint::consensual(m, &[0.0, 1.0 / 2f64.sqrt()]);
        let next = dgd_step(&obj, &w, 0.1, &x).unwrap();
        for (a, b) in next.as_slice().iter().zip(x.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_step_is_pure_mixing() {
        let (obj, w) = setup();
        let x = LiftedPoint::new(8, 2, (0..16).map(|v| v as f64 * 0.1).collect()).unwrap();
        assert_eq!(dgd_step(&obj, &w, 0.0, &x).unwrap().as_slice(), w.mix(x.as_slice(), 2).as_slice());
    }

    #[test]
    fn dgd_matches_gdq_on_random_states() {
        let (obj, w) = setup();
        let mut rng = stream_rng(1, 0);
        let bx = DomainBox::cube(16, 2.0).unwrap();
        for _ in 0..1000 {
            let x = LiftedPoint::new(8, 2, bx.sample(&mut rng)).unwrap();
            let alpha = 0.01 + 0.3 * rng.random::<f64>();
            let a = dgd_step(&obj, &w, alpha, &x).unwrap();
            let b = gdq_step(&obj, &w, alpha, &x).unwrap();
            for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((u - v).abs() <= 1e-13 * u.abs().max(1.0));
            }
        }
    }

    #[test]
    fn zero_noise_ndgd_equals_dgd() {
        let (obj, w) = setup();
        let x = LiftedPoint::new(8, 2, (0..16).map(|v| (v as f64).cos()).collect()).unwrap();
        let zero = vec![0.0; 16];
        assert_eq!(ndgd_step(&obj, &w, 0.05, &x, &zero).unwrap(), dgd_step(&obj, &w, 0.05, &x).unwrap());
    }

    #[test]
    fn ndgd_matches_noisy_gd_on_q() {
        let (obj, w) = setup();
        let mut rng = stream_rng(3, 0);
        let bx = DomainBox::cube(16, 2.0).unwrap();
        for _ in 0..200 {
            let x = LiftedPoint::new(8, 2, bx.sample(&mut rng)).unwrap();
            let noise = sample_perturbation(8, 2, 0.3, &mut rng);
            let alpha = 0.05;
            let a = ndgd_step(&obj, &w, alpha, &x, &noise).unwrap();
            let (_, gq) = obj.q_value_grad(&w, alpha, &x).unwrap();
            for k in 0..16 {
                let b = x.as_slice()[k] - alpha * (gq[k] + noise[k]);
                assert!((a.as_slice()[k] - b).abs() <= 1e-13 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn noise_length_checked() {
        let (obj, w) = setup();
        let x = LiftedPoint::zeros(8, 2);
        assert!(ndgd_step(&obj, &w, 0.1, &x, &[0.0; 3]).is_err());
    }

    #[test]
    fn perturbation_zero_sigma_and_determinism() {
        let mut rng = stream_rng(0, 0);
        assert!(sample_perturbation(3, 2, 0.0, &mut rng).iter().all(|v| *v == 0.0));
        let a = sample_perturbation(4, 2, 0.7, &mut stream_rng(9, 2));
        let b = sample_perturbation(4, 2, 0.7, &mut stream_rng(9, 2));
        assert_eq!(a, b);
    }

    #[test]
    fn perturbation_second_moment() {
        let (m, n, sigma) = (20, 2, 0.3);
        let mut rng = stream_rng(11, 0);
        let draws = 100_000;
        let mean: f64 = (0..draws)
            .map(|_| sample_perturbation(m, n, sigma, &mut rng).iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            / draws as f64;
        let expect = (m * n) as f64 * sigma * sigma;
        assert!((mean - expect).abs() < 0.02 * expect, "{mean} vs {expect}");
    }

    #[test]
    fn ndgd_mean_step_is_dgd_step() {
        let (obj, w) = setup();
        let x = LiftedPoint::new(8, 2, (0..16).map(|v| (v as f64 * 0.7).sin()).collect()).unwrap();
        let (alpha, sigma) = (0.1, 0.5);
        let draws = 10_000;
        let mut rng = stream_rng(5, 0);
        let mut mean = [0.0; 16];
        for _ in 0..draws {
            let noise = sample_perturbation(8, 2, sigma, &mut rng);
            for (acc, v) in mean.iter_mut().zip(ndgd_step(&obj, &w, alpha, &x, &noise).unwrap().as_slice()) {
                *acc += v / draws as f64;
            }
        }
        let det = dgd_step(&obj, &w, alpha, &x).unwrap();
        let mc_sd = alpha * sigma / (draws as f64).sqrt();
        for (a, b) in mean.iter().zip(det.as_slice()) {
            assert!((a - b).abs() <= 4.0 * mc_sd, "{a} vs {b}");
        }
    }
}
