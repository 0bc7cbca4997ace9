use super::*;
use crate::eqbasis::BasisMode;
use crate::groupseq::GroupFamily;
use crate::netcore::LayerSpec;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn spec(family: GroupFamily, layers: &[(&str, &str, &str)], loss: LossKind) -> NetworkSpec {
    NetworkSpec {
        family,
        layers: layers
            .iter()
            .map(|(i, o, a)| LayerSpec::new(i.parse().unwrap(), o.parse().unwrap(), a.parse().unwrap()))
            .collect(),
        mode: BasisMode::Free,
        loss,
        fixed_bilinear: false,
    }
}

/// Largest per-coordinate relative gap between the gradient and central differences.
fn fd_gap(net: &mut Network, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let h = 1e-5;
    let (_, g) = grad(net, x, y).unwrap();
    let p0 = net.flat_params();
    let mut worst = 0.0f64;
    for i in 0..p0.len() {
        let mut p = p0.clone();
        p[i] = p0[i] + h;
        net.set_flat_params(&p).unwrap();
        let up = mean_loss(net, x, y).unwrap();
        p[i] = p0[i] - h;
        net.set_flat_params(&p).unwrap();
        let dn = mean_loss(net, x, y).unwrap();
        let fd = (up - dn) / (2.0 * h);
        let scale = g[i].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((g[i] - fd).abs() / scale);
    }
    net.set_flat_params(&p0).unwrap();
    worst
}

#[test]
fn gradients_match_finite_differences() {
    let cases = [
        (
            spec(
                GroupFamily::SymmetricSn,
                &[("V^2", "S + 2*V + V^2", "bilinear+tanh"), ("S + 2*V + V^2", "V", "identity")],
                LossKind::SquaredSine,
            ),
            3,
        ),
        (
            spec(
                GroupFamily::OrthogonalOn,
                &[
                    ("2*V", "3*S + V + V^2", "bilinear+gated"),
                    ("3*S + V + V^2", "3*S + V + V^2", "gated"),
                    ("3*S + V + V^2", "S", "identity"),
                ],
                LossKind::Mse,
            ),
            3,
        ),
        (
            spec(
                GroupFamily::SymmetricSn,
                &[("V", "S + V", "tanh"), ("S + V", "V^2", "identity")],
                LossKind::Mse,
            ),
            4,
        ),
    ];
    for (k, (s, n)) in cases.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let mut net = Network::random(s, n, &mut rng).unwrap();
        // Larger coefficients so every nonlinearity is exercised away from zero.
        let p: Vec<f64> = net.flat_params().iter().map(|v| 5.0 * v).collect();
        net.set_flat_params(&p).unwrap();
        let x = gaussian(net.input_dim(), 4, 10 + k as u64);
        let y = gaussian(net.output_dim(), 4, 20 + k as u64);
        let gap = fd_gap(&mut net, &x, &y);
        assert!(gap <= 1e-4, "case {k}: {gap:e}");
    }
}

#[test]
fn linear_gradient_matches_least_squares() {
    let s = spec(GroupFamily::SymmetricSn, &[("V + V^2", "S + V", "identity")], LossKind::Mse);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = Network::random(s, 3, &mut rng).unwrap();
    let x = gaussian(net.input_dim(), 1, 4);
    let y = gaussian(net.output_dim(), 1, 5);
    let (_, g) = grad(&net, &x, &y).unwrap();
    let (w, b) = net.layer_affine(0);
    let r = DMatrix::from_fn(y.nrows(), 1, |i, _| (w * &x)[(i, 0)] + b[i] - y[(i, 0)]);
    let m = y.nrows() as f64;
    let dw = &r * x.transpose() * (2.0 / m);
    let wb = net.weight_basis(0);
    let bb = net.bias_basis(0);
    let mut want = wb.project(&dw).unwrap();
    want.extend(bb.project(&(&r * (2.0 / m))).unwrap());
    assert_eq!(g.len(), want.len());
    for (a, b) in g.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn zero_residual_gives_zero_gradient() {
    let s = Task::Trace.default_spec(BasisMode::Compatible);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = Network::random(s, 3, &mut rng).unwrap();
    let x = gaussian(9, 6, 1);
    let y = net.forward(&x).unwrap();
    let (loss, g) = grad(&net, &x, &y).unwrap();
    assert_eq!(loss, 0.0);
    assert!(g.iter().all(|&v| v == 0.0));
    assert!(grad(&net, &DMatrix::zeros(9, 0), &DMatrix::zeros(1, 0)).is_err());
}

#[test]
fn adam_descends_a_quadratic() {
    let target = [1.0, -2.0, 0.5];
    let mut p = vec![0.0; 3];
    let mut adam = Adam::new(3, &Hyperparams::default());
    let loss = |p: &[f64]| p.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 2.0;
    let mut last = loss(&p);
    for _ in 0..200 {
        let g: Vec<f64> = p.iter().zip(&target).map(|(a, b)| a - b).collect();
        adam.step(&mut p, &g, &[true; 3]);
        let now = loss(&p);
        assert!(now <= last);
        last = now;
    }
    let mut q = vec![0.0; 2];
    Adam::new(2, &Hyperparams::default()).step(&mut q, &[1.0, 1.0], &[true, false]);
    assert_eq!(q[1], 0.0);
}

#[test]
fn seeds_mix_streams() {
    assert_eq!(derive_seed(1, &[2, 3]), derive_seed(1, &[2, 3]));
    assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
    assert_ne!(derive_seed(1, &[0]), derive_seed(2, &[0]));
}

#[test]
fn training_preconditions() {
    let s = Task::Trace.default_spec(BasisMode::Compatible);
    let empty = Dataset::generate(Task::Trace, 5, 0, 1).unwrap();
    assert!(train(&s, &empty, &Hyperparams::default()).is_err());
    let low = Dataset::generate(Task::Trace, 1, 10, 1).unwrap();
    assert!(train(&s, &low, &Hyperparams::default()).is_err());
}

#[test]
fn training_is_reproducible_and_improves() {
    let s = Task::Trace.default_spec(BasisMode::Compatible);
    let data = Dataset::generate(Task::Trace, 3, 200, 11).unwrap();
    let hp = Hyperparams {
        epochs: 60,
        lr: 1e-2,
        ..Hyperparams::default()
    };
    let (a, ra) = train(&s, &data, &hp).unwrap();
    let (b, rb) = train(&s, &data, &hp).unwrap();
    assert_eq!(a.flat_params(), b.flat_params());
    assert_eq!(ra, rb);
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let init = Network::random(s, 3, &mut rng).unwrap();
    let (_, val) = data.split(180);
    assert!(ra.val_loss < mean_loss(&init, &val.inputs, &val.targets).unwrap());
}
