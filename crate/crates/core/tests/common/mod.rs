//! Shared test utilities: the finite-difference gradient oracle and small
//! dataset builders. The oracle only evaluates the model's forward pass; it
//! never touches the analytic backward code it is used to check.
#![allow(dead_code)] // each integration test binary uses a subset

use miml_core::model::{ModelDims, ModelKind, ModelParams};
use miml_core::rng::RngStream;
use miml_core::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;

/// Guarded relative error between an analytic and a numeric derivative.
/// The floor keeps finite-difference noise on near-zero gradients from
/// registering as disagreement.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

/// Scalar objective for gradient checking: sum(c * S) over bag scores, with
/// a fixed random cotangent c. Train-mode forward with a fixed dropout seed
/// so every evaluation sees identical masks.
pub struct GradCheckObjective {
    pub x: Tensor,
    pub cotangent: Tensor,
    pub forward_seed: u64,
}

impl GradCheckObjective {
    pub fn new(dims: ModelDims, batch: usize, data_seed: u64) -> GradCheckObjective {
        let mut rng = RngStream::from_seed(data_seed);
        let x_data: Vec<f64> = (0..batch * dims.bag_size * dims.feature_dim)
            .map(|_| rng.next_f64())
            .collect();
        let c_data: Vec<f64> = (0..batch * dims.n_labels)
            .map(|_| rng.uniform(-1.0, 1.0))
            .collect();
        GradCheckObjective {
            x: Tensor::from_vec(&[batch, dims.bag_size, dims.feature_dim], x_data).unwrap(),
            cotangent: Tensor::from_vec(&[batch, dims.n_labels], c_data).unwrap(),
            forward_seed: data_seed ^ 0xD00D,
        }
    }

    pub fn value(&self, params: &mut ModelParams) -> f64 {
        let mut rng = RngStream::from_seed(self.forward_seed);
        let pass = params.forward_train(&self.x, &mut rng).unwrap();
        pass.bag_scores
            .data()
            .iter()
            .zip(self.cotangent.data())
            .map(|(s, c)| s * c)
            .sum()
    }

    /// Central finite difference of the objective in one parameter
    /// coordinate, identified by tensor name and flat index.
    pub fn fd_grad(&self, params: &mut ModelParams, name: &str, index: usize) -> f64 {
        let perturb = |params: &mut ModelParams, delta: f64| {
            let mut slots = params.learnable_mut();
            let (_, tensor) = slots
                .iter_mut()
                .find(|(n, _)| n == name)
                .unwrap_or_else(|| panic!("no parameter named {name}"));
            tensor.data_mut()[index] += delta;
        };
        perturb(params, FD_STEP);
        let plus = self.value(params);
        perturb(params, -2.0 * FD_STEP);
        let minus = self.value(params);
        perturb(params, FD_STEP);
        (plus - minus) / (2.0 * FD_STEP)
    }
}

/// Checks every coordinate of every learnable tensor (or a deterministic
/// subsample of `per_tensor` coordinates when given), returning the maximum
/// guarded relative error observed.
pub fn max_grad_check_error(
    params: &mut ModelParams,
    objective: &GradCheckObjective,
    per_tensor: Option<usize>,
    coord_seed: u64,
) -> f64 {
    let mut rng = RngStream::from_seed(coord_seed);
    let mut dropout_rng = RngStream::from_seed(objective.forward_seed);
    let pass = params.forward_train(&objective.x, &mut dropout_rng).unwrap();
    let trace = pass.trace.expect("train-mode trace");
    let grads = params.backward(&trace, &objective.cotangent).unwrap();

    let names: Vec<(String, usize)> = params
        .learnable()
        .iter()
        .map(|(n, t)| (n.clone(), t.len()))
        .collect();

    let mut worst = 0.0f64;
    for (name, len) in names {
        let analytic = grads.get(&name).expect("gradient for every tensor").clone();
        let coords: Vec<usize> = match per_tensor {
            Some(k) if k < len => rng.sample_indices(len, k),
            _ => (0..len).collect(),
        };
        for idx in coords {
            let numeric = objective.fd_grad(params, &name, idx);
            let err = rel_err(analytic.data()[idx], numeric);
            if err > worst {
                worst = err;
            }
        }
    }
    worst
}

/// Fresh model for gradient checks.
pub fn init_model(kind: ModelKind, dims: ModelDims, dropout: f64, seed: u64) -> ModelParams {
    ModelParams::init(kind, dims, dropout, (16, 12), &mut RngStream::from_seed(seed))
}

use miml_core::data::{generate_synthetic, Dataset, SynthSpec};

/// Small separable synthetic dataset with validation carved out.
pub fn small_synth(n_bags: usize, seed: u64, val_fraction: f64) -> Dataset {
    let spec = SynthSpec {
        n_bags,
        n_labels: 3,
        bag_size: 5,
        feature_dim: 8,
        positives_per_bag: (1, 2),
        observe_rate: 1.0,
        noise_scale: 0.06,
        seed,
        test_fraction: 0.2,
    };
    let (ds, _) = generate_synthetic(&spec).unwrap();
    ds.split_validation(val_fraction, &mut RngStream::from_seed(seed ^ 0xABCD))
        .unwrap()
}
