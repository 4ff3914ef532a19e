use splk_core::data::{gen_gp_sample, mse};
use splk_core::gp_full::{fit_full_gp, FullGpModel};
use splk_core::{FitOptions, KernelParams};

#[test]
fn recovers_generating_hyperparameters() {
    // The signal variance of one sample path is only identified to about
    // sqrt(2ℓ/L) in log space, so the box spans 60 lengthscales.
    let truth = KernelParams::new(1.0, vec![0.5], 0.01).unwrap();
    for seed in [1, 2, 3] {
        let data = gen_gp_sample(200, &truth, (0.0, 30.0), seed).unwrap();
        let init = KernelParams::new(0.5, vec![1.5], 0.1).unwrap();
        let model = fit_full_gp(&data, &init, &FitOptions::full_gp().raw_targets().with_seed(seed)).unwrap();
        let at_truth = FullGpModel::with_params(&data, &truth, false).unwrap();
        assert!(model.log_marginal_likelihood() >= at_truth.log_marginal_likelihood() - 1e-9);
        let p = model.params();
        let errs = [
            (p.signal_variance().ln() - 1.0f64.ln()).abs(),
            (p.lengthscales()[0].ln() - 0.5f64.ln()).abs(),
            (p.noise_variance().ln() - 0.01f64.ln()).abs(),
        ];
        assert!(errs.iter().all(|e| *e < 0.5), "seed {seed}: log errors {errs:?}");
    }
}

#[test]
fn memorizes_noiseless_training_data() {
    let p = KernelParams::new(1.0, vec![1.0, 1.0], 1e-4).unwrap();
    let data = gen_gp_sample(150, &p, (0.0, 10.0), 8).unwrap();
    let fixed = KernelParams::with_jitter(1.0, vec![1.0, 1.0], 1e-10, 1e-12).unwrap();
    let model = FullGpModel::with_params(&data, &fixed, false).unwrap();
    let pred: Vec<f64> = model.predict_many(&data.inputs).unwrap().iter().map(|p| p.mean).collect();
    let actual: Vec<f64> = data.targets.iter().copied().collect();
    assert!(mse(&pred, &actual).unwrap() < 1e-6);
}
