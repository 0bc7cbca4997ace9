use super::*;
use crate::conseq::action;
use crate::linalg::SparseOperator;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn parse(s: &str) -> SeqExpr {
    s.parse().unwrap()
}

fn spec(family: GroupFamily, mode: BasisMode, layers: &[(&str, &str, &str)]) -> NetworkSpec {
    NetworkSpec {
        family,
        layers: layers
            .iter()
            .map(|(i, o, a)| LayerSpec::new(parse(i), parse(o), a.parse().unwrap()))
            .collect(),
        mode,
        loss: LossKind::Mse,
        fixed_bilinear: false,
    }
}

fn single_layer(family: GroupFamily, input: &str, output: &str, n: usize, w: &DMatrix<f64>) -> Network {
    let s = spec(family, BasisMode::Free, &[(input, output, "identity")]);
    let (wb, bb) = s.layer_bases(0, n).unwrap();
    let (coeffs, residual) = wb.coefficients(w).unwrap();
    assert!(residual < 1e-12);
    let params = LayerParams {
        weight: coeffs,
        bias: vec![0.0; bb.len()],
        activation: vec![],
    };
    Network::new(s, n, vec![params]).unwrap()
}

#[test]
fn identity_layer_is_identity() {
    let net = single_layer(GroupFamily::SymmetricSn, "V", "V", 4, &DMatrix::identity(4, 4));
    let x = [0.5, -1.0, 2.0, 3.5];
    let y = net.forward_vec(&x).unwrap();
    for (a, b) in x.iter().zip(&y) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn trace_layer_from_basis_coefficients() {
    let n = 3;
    let row = DMatrix::from_fn(1, n * n, |_, p| if p / n == p % n { 1.0 } else { 0.0 });
    let net = single_layer(GroupFamily::SymmetricSn, "V^2", "S", n, &row);
    let eye: Vec<f64> = (0..n * n).map(|p| if p / n == p % n { 1.0 } else { 0.0 }).collect();
    assert!((net.forward_vec(&eye).unwrap()[0] - 3.0).abs() < 1e-12);
    assert!(net.forward_vec(&eye[..4]).is_err());
}

fn equivariance_defect(net: &Network, seeds: std::ops::Range<u64>) -> f64 {
    let n = net.level();
    let family = net.spec().family;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let x = DMatrix::from_fn(net.input_dim(), 1, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let fx = net.forward(&x).unwrap();
    let mut worst = 0.0f64;
    for seed in seeds {
        let g = SparseOperator::from_dense(&family.random_element(n, seed));
        let ri = action(net.spec().input(), &g).unwrap();
        let ro = action(net.spec().output(), &g).unwrap();
        let gx = DMatrix::from_column_slice(x.nrows(), 1, &ri.mul_vec(x.as_slice()).unwrap());
        let lhs = net.forward(&gx).unwrap();
        let rhs = ro.mul_vec(fx.as_slice()).unwrap();
        let err: f64 = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(err / (1.0 + fx.norm()));
    }
    worst
}

use rand::Rng;

#[test]
fn random_networks_are_equivariant() {
    let cases = [
        spec(
            GroupFamily::SymmetricSn,
            BasisMode::Free,
            &[("V^2", "2*V + V^2", "bilinear+relu"), ("2*V + V^2", "V", "identity")],
        ),
        spec(
            GroupFamily::OrthogonalOn,
            BasisMode::Compatible,
            &[("2*V", "3*S + V + V^2", "bilinear+gated"), ("3*S + V + V^2", "S", "identity")],
        ),
        spec(
            GroupFamily::SpecialOrthogonalSOn,
            BasisMode::Free,
            &[("V", "V + V^2", "identity"), ("V + V^2", "V", "identity")],
        ),
    ];
    for s in cases {
        for n in [3, 4] {
            let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
            let net = Network::random(s.clone(), n, &mut rng).unwrap();
            let d = equivariance_defect(&net, 0..5);
            assert!(d <= 1e-10, "{:?} n={n}: {d:e}", s.family);
        }
    }
}

#[test]
fn bilinear_keeps_the_hidden_shape() {
    let s = spec(
        GroupFamily::SymmetricSn,
        BasisMode::Free,
        &[("V", "S + V + V^2", "bilinear+identity")],
    );
    for n in 1..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::random(s.clone(), n, &mut rng).unwrap();
        assert_eq!(net.output_dim(), 1 + n + n * n);
    }
}

#[test]
fn validation_rejects_broken_specs() {
    let chain = spec(
        GroupFamily::SymmetricSn,
        BasisMode::Free,
        &[("V", "V^2", "relu"), ("V", "S", "identity")],
    );
    assert!(matches!(chain.validate(), Err(Error::InvalidSpec(_))));
    let gates = spec(GroupFamily::OrthogonalOn, BasisMode::Free, &[("V", "S + 2*V", "gated")]);
    assert!(gates.validate().unwrap_err().is_config_error());
    let sig = spec(GroupFamily::SymmetricSn, BasisMode::Compatible, &[("V", "V", "sigmoid")]);
    assert!(sig.validate().is_err());
    let empty = NetworkSpec {
        layers: vec![],
        ..sig
    };
    assert!(empty.validate().is_err());
}

#[test]
fn flat_parameters_round_trip() {
    let s = Task::Trace.default_spec(BasisMode::Compatible);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut net = Network::random(s, 3, &mut rng).unwrap();
    let mut p = net.flat_params();
    assert_eq!(p.len(), net.num_params());
    p[0] += 1.0;
    net.set_flat_params(&p).unwrap();
    assert_eq!(net.params(0).weight[0], p[0]);
    assert!(net.set_flat_params(&p[1..]).is_err());
}

#[test]
fn fixed_bilinear_coefficients_are_frozen() {
    let mut s = Task::Trace.default_spec(BasisMode::Free);
    s.fixed_bilinear = true;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = Network::random(s, 3, &mut rng).unwrap();
    assert!(net.params(0).activation.iter().all(|&c| c == 1.0));
    let frozen = net.trainable_mask().iter().filter(|m| !**m).count();
    assert_eq!(frozen, net.params(0).activation.len() + net.params(1).activation.len());
}

#[test]
fn serialization_round_trip() {
    let s = Task::OrthInvariance.default_spec(BasisMode::Compatible);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let net = Network::random(s, 3, &mut rng).unwrap();
    let text = net.to_json().unwrap();
    let back = Network::from_json(&text).unwrap();
    assert_eq!(back.to_trained(), net.to_trained());
    let x = [0.1, 0.2, -0.3, 1.0, 0.5, -0.5];
    assert_eq!(back.forward_vec(&x).unwrap(), net.forward_vec(&x).unwrap());
    let tampered = text.replacen("\"weight_checksum\": \"", "\"weight_checksum\": \"0", 1);
    assert!(Network::from_json(&tampered).is_err());
}

