use hetero_mia::dataset::{gen_synthetic, SyntheticSpec, TabularDataset};
use hetero_mia::model::{
    accuracy, init_model, loss_and_grad, predict, train, Architecture, ModelParams, TrainConfig,
};
use hetero_mia::rng::rng_from_seed;
use rand::Rng;

fn blobs(seed: u64) -> TabularDataset {
    let spec = SyntheticSpec::isotropic(
        2,
        2,
        &[
            ("g", 0, vec![-2.0, -2.0], 0.25, 100),
            ("g", 1, vec![2.0, 2.0], 0.25, 100),
        ],
    );
    gen_synthetic(&spec, seed).unwrap()
}

fn perturbed(params: &ModelParams, k: usize, delta: f64) -> ModelParams {
    let mut p = params.clone();
    *p.values_mut().nth(k).unwrap() += delta;
    p
}

#[test]
fn gradient_matches_central_differences() {
    let arch = Architecture::new(5, &[7, 6], 3).unwrap();
    let mut rng = rng_from_seed(11);
    let mut params = init_model(&arch, 4).unwrap();
    // nonzero biases so every coordinate carries signal
    for v in params.values_mut() {
        *v += rng.random_range(-0.1..0.1);
    }
    let xs: Vec<Vec<f64>> = (0..8)
        .map(|_| (0..5).map(|_| rng.random_range(-1.5..1.5)).collect())
        .collect();
    let batch: Vec<(&[f64], usize)> = xs
        .iter()
        .enumerate()
        .map(|(i, x)| (x.as_slice(), i % 3))
        .collect();
    let l2 = 0.01;
    let (_, grad) = loss_and_grad(&params, &batch, l2).unwrap();
    let analytic: Vec<f64> = grad.values().copied().collect();

    let n = params.num_params();
    assert!(n >= 100);
    let h = 1e-5;
    let mut checked = 0;
    for _ in 0..150 {
        let k = rng.random_range(0..n);
        let up = loss_and_grad(&perturbed(&params, k, h), &batch, l2)
            .unwrap()
            .0;
        let down = loss_and_grad(&perturbed(&params, k, -h), &batch, l2)
            .unwrap()
            .0;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[k];
        let scale = a.abs().max(numeric.abs());
        // absolute floor for coordinates whose gradient is numerically zero
        assert!(
            (a - numeric).abs() <= 1e-4 * scale + 1e-8,
            "coordinate {k}: analytic {a}, numeric {numeric}"
        );
        checked += 1;
    }
    assert!(checked >= 100);
}

#[test]
fn separable_blobs_are_learned() {
    let ds = blobs(5);
    let rows: Vec<usize> = (0..ds.len()).collect();
    let arch = Architecture::new(2, &[16], 2).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.05,
        epochs: 200,
        batch_size: 16,
        seed: 9,
        l2: 0.0,
    };
    let (params, history) = train(init_model(&arch, 3).unwrap(), &ds, &rows, &cfg).unwrap();
    assert!(accuracy(&params, &ds, &rows).unwrap() >= 0.95);
    assert!(history.last().unwrap() < history.first().unwrap());
}

/// Plain binary logistic regression by full-batch gradient descent.
fn logistic_oracle(ds: &TabularDataset, lr: f64, steps: usize) -> (Vec<f64>, f64) {
    let d = ds.dim();
    let n = ds.len() as f64;
    let (mut w, mut b) = (vec![0.0; d], 0.0);
    for _ in 0..steps {
        let (mut gw, mut gb) = (vec![0.0; d], 0.0);
        for i in 0..ds.len() {
            let x = ds.row(i);
            let z: f64 = w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b;
            let err = 1.0 / (1.0 + (-z).exp()) - ds.label(i) as f64;
            for (g, v) in gw.iter_mut().zip(x) {
                *g += err * v / n;
            }
            gb += err / n;
        }
        for (a, g) in w.iter_mut().zip(&gw) {
            *a -= lr * g;
        }
        b -= lr * gb;
    }
    (w, b)
}

#[test]
fn logistic_oracle_separates_blobs() {
    let ds = blobs(5);
    let (w, b) = logistic_oracle(&ds, 0.5, 300);
    let correct = (0..ds.len())
        .filter(|&i| {
            let z: f64 = w.iter().zip(ds.row(i)).map(|(a, v)| a * v).sum::<f64>() + b;
            usize::from(z > 0.0) == ds.label(i)
        })
        .count();
    assert!(correct as f64 / ds.len() as f64 >= 0.95);
}

#[test]
fn softmax_regression_matches_logistic_oracle() {
    // Without hidden layers and K = 2, full-batch gradient descent on the
    // softmax model moves the logit difference exactly like logistic
    // regression with twice the learning rate.
    let ds = blobs(6);
    let rows: Vec<usize> = (0..ds.len()).collect();
    let arch = Architecture::new(2, &[], 2).unwrap();
    let lr = 0.25;
    let steps = 300;
    let cfg = TrainConfig {
        learning_rate: lr,
        epochs: steps,
        batch_size: ds.len(),
        seed: 0,
        l2: 0.0,
    };
    let (params, _) = train(ModelParams::zeros(&arch).unwrap(), &ds, &rows, &cfg).unwrap();
    let (w, b) = logistic_oracle(&ds, 2.0 * lr, steps);
    let layer = &params.layers[0];
    for j in 0..2 {
        let diff = layer.weights[1][j] - layer.weights[0][j];
        assert!(
            (diff - w[j]).abs() < 1e-9 * w[j].abs().max(1.0),
            "{diff} vs {}",
            w[j]
        );
    }
    assert!(((layer.biases[1] - layer.biases[0]) - b).abs() < 1e-9 * b.abs().max(1.0));
    for i in (0..ds.len()).step_by(17) {
        let z: f64 = w.iter().zip(ds.row(i)).map(|(a, v)| a * v).sum::<f64>() + b;
        let p1 = predict(&params, ds.row(i)).unwrap()[1];
        assert!((p1 - 1.0 / (1.0 + (-z).exp())).abs() < 1e-9);
    }
}

#[test]
fn loss_limits() {
    let arch = Architecture::new(3, &[4], 2).unwrap();
    let zero = ModelParams::zeros(&arch).unwrap();
    let x = [0.3, -0.2, 1.0];
    let (loss, _) = loss_and_grad(&zero, &[(&x, 1)], 0.0).unwrap();
    assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    assert_eq!(predict(&zero, &x).unwrap(), vec![0.5, 0.5]);
    assert!(loss_and_grad(&zero, &[(&x, 2)], 0.0).is_err());
    assert!(loss_and_grad(&zero, &[], 0.0).is_err());
}
