mod common;

use common::{balanced_alt, batch_means, mean_and_se, table1};
use tandem_core::estimators::{ExactRatio, WeightFunction};
use tandem_core::kernels::{KernelKind, KernelSpec};
use tandem_core::ratio::{
    bandwidth_specs, delta_residual, weighted_loss, Normalization, TransitionBatch,
};
use tandem_core::rng::RngStream;
use tandem_core::simulate::sample_trajectory;
use tandem_core::QueueState;

#[test]
fn exact_ratio_residual_is_orthogonal_to_kernel_features() {
    let (p, q) = (table1(), balanced_alt());
    let exact = ExactRatio::new(&p, &q).unwrap();
    let t = sample_trajectory(&q, 100_000, QueueState::EMPTY, RngStream::new(31, 0)).unwrap();
    let batch = TransitionBatch::all_pairs(&t.states, &p, &q).unwrap();
    let norm = Normalization::fit(t.samples());
    let anchor = norm.kernel_point(QueueState::new(2, 1));
    for kind in KernelKind::ALL {
        let spec = KernelSpec::new(kind, 1.0).unwrap();
        let values: Vec<f64> = batch
            .pairs()
            .iter()
            .map(|pair| {
                let f = spec.eval(&norm.kernel_point(pair.to), &anchor);
                f * delta_residual(&exact, pair.ratio, pair.from, pair.to)
            })
            .collect();
        let (mean, se) = batch_means(&values, 50);
        assert!(mean.abs() <= 3.0 * se, "{kind}: mean {mean:e}, se {se:e}");
    }
}

#[test]
fn constant_weight_residual_is_not_orthogonal() {
    // the same statistic detects a wrong ratio
    let (p, q) = (table1(), balanced_alt());
    let t = sample_trajectory(&q, 100_000, QueueState::EMPTY, RngStream::new(32, 0)).unwrap();
    let batch = TransitionBatch::all_pairs(&t.states, &p, &q).unwrap();
    let norm = Normalization::fit(t.samples());
    let one = |_: QueueState| 1.0;
    let values: Vec<f64> = batch
        .pairs()
        .iter()
        .map(|pair| norm.kernel_point(pair.to)[0] * delta_residual(&one, pair.ratio, pair.from, pair.to))
        .collect();
    let (mean, se) = batch_means(&values, 50);
    assert!(mean.abs() > 10.0 * se, "mean {mean:e}, se {se:e}");
}

#[test]
fn exact_ratio_loss_is_within_bootstrap_noise() {
    let (p, q) = (table1(), balanced_alt());
    let exact = ExactRatio::new(&p, &q).unwrap();
    let t = sample_trajectory(&q, 50_000, QueueState::EMPTY, RngStream::new(33, 0)).unwrap();
    let batch = TransitionBatch::all_pairs(t.samples(), &p, &q).unwrap();
    let norm = Normalization::fit(t.samples());
    let specs = bandwidth_specs(&KernelKind::ALL, &batch, &norm).unwrap();
    let loss = weighted_loss(&exact, &batch, &specs, &norm, 0.0).total();

    let mut rng = RngStream::new(33, 1).rng();
    let n = batch.len();
    let boot: Vec<f64> = (0..200)
        .map(|_| {
            let idx: Vec<usize> = (0..n).map(|_| rng.below(n as u64) as usize).collect();
            weighted_loss(&exact, &batch.resample(&idx).unwrap(), &specs, &norm, 0.0).total()
        })
        .collect();
    let (_, se) = mean_and_se(&boot);
    let sd = se * (boot.len() as f64).sqrt();
    assert!(loss < 10.0 * sd, "loss {loss:e}, bootstrap sd {sd:e}");

    // a flat weight is far outside that band
    let flat = weighted_loss(&|_: QueueState| 1.0, &batch, &specs, &norm, 0.0).total();
    assert!(flat > loss && exact.weight(QueueState::EMPTY) > 1.0);
}
