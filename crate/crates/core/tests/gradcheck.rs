use mssnet_core::autodiff::GradCheckOptions;
use mssnet_core::model::ModelConfig;
use mssnet_core::verify::{check_gradients, check_layers};
use mssnet_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn every_layer_type() {
    let opts = GradCheckOptions {
        samples_per_variable: 16,
        ..GradCheckOptions::default()
    };
    let checks = check_layers(opts).unwrap();
    assert_eq!(checks.len(), 18);
    for c in &checks {
        for v in &c.report.variables {
            assert!(v.checked > 0, "{}: {} unchecked", c.layer, v.name);
            assert!(v.grad_scale > 1e-6, "{}: {} has a vanishing gradient", c.layer, v.name);
        }
        if let Some(w) = c.report.failures().next() {
            panic!("{}: {} relative error {:.3e}", c.layer, w.name, w.max_rel_error);
        }
    }
}

#[test]
fn tighter_tolerance_on_smooth_layers() {
    let opts = GradCheckOptions {
        tol: 1e-6,
        seed: 3,
        ..GradCheckOptions::default()
    };
    for c in check_layers(opts).unwrap() {
        if ["conv", "bilinear", "pixel", "dft2", "concat", "square"].iter().any(|p| c.layer.starts_with(p)) {
            assert!(c.report.passed(), "{}: {:?}", c.layer, c.report.worst());
        }
    }
}

#[test]
fn tiny_network_end_to_end() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = Tensor::uniform([1, 3, 16, 16], 0.0, 1.0, &mut rng);
    let rep = check_gradients(&ModelConfig::tiny(), &x, GradCheckOptions::default()).unwrap();
    assert!(rep.variables.len() > 100);
    let w = rep.worst().unwrap();
    assert!(rep.passed(), "{} relative error {:.3e}", w.name, w.max_rel_error);
}
