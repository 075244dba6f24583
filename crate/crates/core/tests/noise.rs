use std::f64::consts::PI;

use proptest::prelude::*;
use sacfem::dynamics::{integrate_coupled, Checkpoints, CoupledLevel, JointExactNoise, PolynomialDrift, Scheme, Stepper};
use sacfem::fem::FemSpace;
use sacfem::noise::{fill_increments, tags, ConvolutionSampler, CoupledConvolution, CovarianceSpec, ProjectedNoise, StreamKey};

/// Discrete Dirichlet Laplacian eigenvalues of P1 on a uniform mesh.
fn lambda_h(n: usize, i: usize) -> f64 {
    let h = 1.0 / n as f64;
    let c = (i as f64 * PI * h).cos();
    6.0 / (h * h) * (1.0 - c) / (2.0 + c)
}

fn sample_variances(sampler: &ConvolutionSampler, dim: usize, draws: u64, seed: u64) -> Vec<f64> {
    let mut sum = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    for s in 0..draws {
        sampler.sample_into(&mut StreamKey::new(seed, s, 0, tags::EXACT_CONVOLUTION).rng(), &mut buf);
        for (a, b) in sum.iter_mut().zip(&buf) {
            *a += b * b;
        }
    }
    sum.iter().map(|s| s / draws as f64).collect()
}

/// For `Q = I` and large truncation `Σ_k G_ik² → ‖e_i^h‖² = 1`, so each
/// discrete mode of the one-step integral has variance `(1 − e^{−2λdt})/(2λ)`.
#[test]
fn white_noise_one_step_variance_matches_closed_form() {
    let n = 16;
    let space = FemSpace::uniform(1.0, n).unwrap();
    let spec = CovarianceSpec::white(4096).unwrap();
    let projected = ProjectedNoise::new(&space, 4096);
    let dt = 0.01;
    let sampler = ConvolutionSampler::new(&space, &spec, &projected, dt).unwrap();
    let draws = 20_000;
    let var = sample_variances(&sampler, space.dim(), draws, 1);
    for (i, v) in var.iter().enumerate() {
        let l = lambda_h(n, i + 1);
        let want = -(-2.0 * l * dt).exp_m1() / (2.0 * l);
        let tol = 5.0 * want * (2.0 / draws as f64).sqrt() + 1e-5 * want;
        assert!((v - want).abs() <= tol, "mode {}: {v} vs {want}", i + 1);
    }
}

#[test]
fn composed_substeps_have_the_one_step_law() {
    let space = FemSpace::uniform(1.0, 8).unwrap();
    let spec = CovarianceSpec::power_decay(2.0, 1024).unwrap();
    let projected = ProjectedNoise::new(&space, 1024);
    let dt = 0.02;
    let sub = 8;
    let whole = ConvolutionSampler::new(&space, &spec, &projected, dt).unwrap();
    let part = ConvolutionSampler::new(&space, &spec, &projected, dt / sub as f64).unwrap();
    let draws = 20_000u64;
    let dim = space.dim();
    let one = sample_variances(&whole, dim, draws, 2);
    let mut composed = vec![0.0; dim];
    let mut acc = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    for s in 0..draws {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for j in 0..sub {
            part.sample_into(&mut StreamKey::new(3, s, j as u64, tags::EXACT_CONVOLUTION).rng(), &mut buf);
            for ((a, d), b) in acc.iter_mut().zip(part.decay()).zip(&buf) {
                *a = d * *a + b;
            }
        }
        for (c, a) in composed.iter_mut().zip(&acc) {
            *c += a * a / draws as f64;
        }
    }
    for i in 0..dim {
        let tol = 5.0 * one[i] * (4.0 / draws as f64).sqrt();
        assert!((one[i] - composed[i]).abs() <= tol, "mode {}: {} vs {}", i + 1, one[i], composed[i]);
    }
}

/// Stationary lag-one autocorrelation of each mode equals the decay factor.
#[test]
fn stationary_autocorrelation_is_the_decay() {
    let n = 8;
    let space = FemSpace::uniform(1.0, n).unwrap();
    let spec = CovarianceSpec::white(2048).unwrap();
    let projected = ProjectedNoise::new(&space, 2048);
    let dt = 0.002;
    let sampler = ConvolutionSampler::new(&space, &spec, &projected, dt).unwrap();
    let dim = space.dim();
    let mut z = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    let burn = 2000;
    let steps = 400_000;
    let (mut c0, mut c1) = (vec![0.0; dim], vec![0.0; dim]);
    for s in 0..burn + steps {
        sampler.sample_into(&mut StreamKey::new(4, 0, s as u64, tags::EXACT_CONVOLUTION).rng(), &mut buf);
        for i in 0..dim {
            let prev = z[i];
            z[i] = sampler.decay()[i] * prev + buf[i];
            if s >= burn {
                c0[i] += prev * prev;
                c1[i] += prev * z[i];
            }
        }
    }
    let l1 = lambda_h(n, 1);
    let stat = c0[0] / steps as f64;
    assert!((stat - 1.0 / (2.0 * l1)).abs() < 0.05 / (2.0 * l1), "stationary variance {stat}");
    let rho = c1[0] / c0[0];
    let want = (-l1 * dt).exp();
    assert!((rho - want).abs() < 2e-3, "{rho} vs {want}");
}

/// With zero drift a coupled run is the eigen-coordinate recursion
/// `c ← e^{−λδ}c + ξ_j` on every level, whatever the level's step ratio.
#[test]
fn coupled_zero_drift_matches_manual_recursion() {
    let spaces: Vec<FemSpace> = [2u32, 3, 5].iter().map(|l| FemSpace::uniform(1.0, 1 << l).unwrap()).collect();
    let spec = CovarianceSpec::power_decay(2.0, 256).unwrap();
    let projected: Vec<ProjectedNoise> = spaces.iter().map(|s| ProjectedNoise::new(s, 256)).collect();
    let dt = 1.0 / 64.0;
    let sr: Vec<&FemSpace> = spaces.iter().collect();
    let pr: Vec<&ProjectedNoise> = projected.iter().collect();
    let joint = CoupledConvolution::new(&sr, &pr, &spec, dt).unwrap();
    let ratios = [4usize, 2, 1];
    let zero = PolynomialDrift::zero();
    let steppers: Vec<Stepper> = spaces
        .iter()
        .zip(ratios)
        .map(|(s, r)| Stepper::new(s, &zero, Scheme::SplittingExactFlow, dt * r as f64).unwrap())
        .collect();
    let levels: Vec<CoupledLevel> = spaces
        .iter()
        .zip(&steppers)
        .zip(ratios)
        .map(|((space, stepper), ratio)| CoupledLevel { space, stepper, ratio })
        .collect();
    let x0: Vec<_> = spaces.iter().map(|s| s.interpolate(|x| (PI * x).sin() + 0.3 * (4.0 * PI * x).sin())).collect();
    let key = StreamKey::new(5, 0, 0, tags::EXACT_CONVOLUTION);
    let fine_steps = 32;
    let tr = integrate_coupled(&levels, fine_steps, &mut JointExactNoise { sampler: &joint, key }, &x0, Checkpoints::None)
        .unwrap();

    let mut coeffs: Vec<Vec<f64>> = spaces.iter().zip(&x0).map(|(s, x)| s.to_eigen(&x.nodal)).collect();
    let mut draws: Vec<Vec<f64>> = spaces.iter().map(|s| vec![0.0; s.dim()]).collect();
    for j in 0..fine_steps {
        draws.iter_mut().for_each(|d| d.iter_mut().for_each(|v| *v = 0.0));
        joint.sample_into(&mut key.at_step(j as u64).rng(), &mut draws);
        for (l, c) in coeffs.iter_mut().enumerate() {
            for ((ci, d), xi) in c.iter_mut().zip(joint.decay(l)).zip(&draws[l]) {
                *ci = d * *ci + xi;
            }
        }
    }
    for (l, space) in spaces.iter().enumerate() {
        let want = space.from_eigen(&coeffs[l]);
        let err = want.iter().zip(&tr[l].final_state.nodal).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "level {l}: {err}");
    }
}

/// Coarse and fine levels of the joint sampler see the same Brownian path, so
/// their lowest modes are almost perfectly correlated.
#[test]
fn joint_levels_are_strongly_correlated() {
    let spaces = [FemSpace::uniform(1.0, 8).unwrap(), FemSpace::uniform(1.0, 64).unwrap()];
    let spec = CovarianceSpec::power_decay(2.0, 512).unwrap();
    let projected: Vec<ProjectedNoise> = spaces.iter().map(|s| ProjectedNoise::new(s, 512)).collect();
    let joint = CoupledConvolution::new(&[&spaces[0], &spaces[1]], &[&projected[0], &projected[1]], &spec, 0.05).unwrap();
    let mut outs = vec![vec![0.0; 7], vec![0.0; 63]];
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for s in 0..5000 {
        outs.iter_mut().for_each(|o| o.iter_mut().for_each(|v| *v = 0.0));
        joint.sample_into(&mut StreamKey::new(6, s, 0, tags::EXACT_CONVOLUTION).rng(), &mut outs);
        let (a, b) = (outs[0][0], outs[1][0]);
        saa += a * a;
        sbb += b * b;
        sab += a * b;
    }
    let corr = (sab / (saa * sbb).sqrt()).abs();
    assert!(corr > 0.99, "{corr}");
}

proptest! {
    #[test]
    fn streams_are_pure_functions_of_their_key(
        seed in any::<u64>(), sample in any::<u64>(), step in 0u64..1_000_000, tag in 0u64..4,
    ) {
        let spec = CovarianceSpec::power_decay(2.0, 16).unwrap();
        let key = StreamKey::new(seed, sample, step, tag);
        let (mut a, mut b, mut c) = (vec![0.0; 16], vec![0.0; 16], vec![0.0; 16]);
        fill_increments(&spec, 0.1, key, &mut a);
        fill_increments(&spec, 0.1, key, &mut b);
        fill_increments(&spec, 0.1, StreamKey::new(seed, sample, step, tag + 4), &mut c);
        prop_assert_eq!(&a, &b);
        prop_assert_ne!(&a, &c);
    }
}
