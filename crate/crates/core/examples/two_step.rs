//! End-to-end drive of the two-step pipeline as an external consumer:
//! train a small LCDM bundle, fit all three weight posteriors on it, and
//! print predictive summaries against the deterministic solution.

use bundle_uq::bayes::{
    bbb_train, build_dataset, nlm_fit, nlm_predict, nuts_fit, predictive, BbbConfig,
    LikelihoodSpec,
};
use bundle_uq::models::{ModelId, ModelSpec};
use bundle_uq::rngutil;
use bundle_uq::train::{train, TrainConfig};
use ndarray::array;

fn main() {
    let cfg = TrainConfig {
        model_id: ModelId::Lcdm,
        hidden: vec![16, 16],
        iterations: 3000,
        samples_per_dim: 32,
        lr: 1e-3,
        lr_floor: None,
        seed: 42,
    };
    let t0 = std::time::Instant::now();
    let det = train(&cfg).expect("step-one training");
    println!(
        "step one: final residual loss {:.3e} after {} iters ({:.1?})",
        det.final_loss,
        cfg.iterations,
        t0.elapsed()
    );

    let spec = ModelSpec::new(ModelId::Lcdm);
    let like = LikelihoodSpec::Homoscedastic(0.05);
    let mut rng = rngutil::stream_rng(42, "verify-dataset");
    let set = build_dataset(&det, &like, 12, &mut rng).expect("dataset");
    println!("dataset: {} rows, sigma floor {:.3e}", set.len(), set.sigma_floor);

    let points = array![[0.5, 0.3], [1.5, 0.25], [2.5, 0.35]];
    let truth = det.evaluate(&points).expect("det eval");

    // NLM on the trained net's features.
    let nlm = nlm_fit(&det.params, &set, &like, 1.0).expect("nlm fit");
    let nlm_sum = nlm_predict(&nlm, &points).expect("nlm predict");

    // BBB over a small fresh net.
    let bbb_cfg = BbbConfig {
        prior_std: 1.0,
        iterations: 2000,
        lr: 1e-2,
        mc_samples: 1,
    };
    let mut rng_b = rngutil::stream_rng(42, "verify-bbb");
    let bbb = bbb_train(&spec, &[2, 8, 1], &set, &like, &bbb_cfg, None, &mut rng_b)
        .expect("bbb train");
    let mut rng_bp = rngutil::stream_rng(42, "verify-bbb-pred");
    let bbb_sum = predictive(&bbb, &spec, &like, &points, 64, false, &mut rng_bp)
        .expect("bbb predictive");

    // NUTS over an even smaller net, warm-started cold.
    let mut rng_n = rngutil::stream_rng(42, "verify-nuts");
    let nuts = nuts_fit(&spec, &[2, 4, 1], &set, &like, 1.0, 300, 150, None, &mut rng_n)
        .expect("nuts fit");
    let mut rng_np = rngutil::stream_rng(42, "verify-nuts-pred");
    let nuts_sum = predictive(&nuts, &spec, &like, &points, 100, false, &mut rng_np)
        .expect("nuts predictive");

    println!("\n  z     omega |  det      | nlm mean  (std)    | bbb mean  (std)    | nuts mean (std)");
    for i in 0..points.nrows() {
        println!(
            "  {:.2}  {:.2}  |  {:.4}  | {:.4} ({:.4})  | {:.4} ({:.4})  | {:.4} ({:.4})",
            points[[i, 0]],
            points[[i, 1]],
            truth[[i, 0]],
            nlm_sum.mean[[i, 0]],
            nlm_sum.std[[i, 0]],
            bbb_sum.mean[[i, 0]],
            bbb_sum.std[[i, 0]],
            nuts_sum.mean[[i, 0]],
            nuts_sum.std[[i, 0]],
        );
    }

    // Checks: all finite, stds at or above the likelihood width for the
    // gaussian-likelihood methods, means within a few sigma of the
    // deterministic solution.
    let mut fails = 0;
    for (name, sum) in [("nlm", &nlm_sum), ("bbb", &bbb_sum), ("nuts", &nuts_sum)] {
        for i in 0..points.nrows() {
            let (m, s) = (sum.mean[[i, 0]], sum.std[[i, 0]]);
            if !(m.is_finite() && s.is_finite()) {
                println!("FAIL {name}: non-finite at row {i}");
                fails += 1;
            }
            if s < 0.05 {
                println!("FAIL {name}: std {s} below likelihood width at row {i}");
                fails += 1;
            }
            if (m - truth[[i, 0]]).abs() > 5.0 * s {
                println!(
                    "FAIL {name}: mean {m} is {:.1} sigma from det {}",
                    (m - truth[[i, 0]]).abs() / s,
                    truth[[i, 0]]
                );
                fails += 1;
            }
        }
    }
    if fails == 0 {
        println!("\nPASS: all three posteriors produce finite, width-respecting predictions near the deterministic solution");
    } else {
        println!("\nFAIL: {fails} check(s) failed");
        std::process::exit(1);
    }
}
