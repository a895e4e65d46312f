use maxnet::train::{init_params, loss_gradient, masked_mse_loss};
use maxnet::{Activation, FieldSample, ObservationSet, SpacetimePoint, TrainConfig};
use std::time::Instant;

fn main() {
    for &w in &[1000usize, 2500] {
        let config = TrainConfig {
            width_half: w,
            activation: Activation::Tanh,
            ..TrainConfig::default()
        };
        let params = init_params(&config);
        let n = 1000usize;
        let mut pts = Vec::new();
        let mut tg = Vec::new();
        let mut mk = Vec::new();
        for i in 0..n {
            let s = i as f64 / n as f64;
            pts.push(SpacetimePoint::new(0.0, s, (s * 1.7) % 1.0, (s * 2.3) % 1.0));
            tg.push(FieldSample::from_components([s, 1.0 - s, 0.1, 0.2, 0.3, 0.4]));
            mk.push(ObservationSet::FULL_MASK);
        }
        let obs = ObservationSet::new(pts, tg, mk).unwrap();
        let reps = 5;
        let mut acc = 0.0;
        let t0 = Instant::now();
        for _ in 0..reps {
            acc += masked_mse_loss(&params, &obs).unwrap();
        }
        let fwd = t0.elapsed().as_secs_f64() / reps as f64;
        let t1 = Instant::now();
        for _ in 0..reps {
            acc += loss_gradient(&params, &obs).unwrap().0;
        }
        let grad = t1.elapsed().as_secs_f64() / reps as f64;
        println!(
            "w={w}: forward {:.1} ms, fused grad {:.1} ms, ratio {:.2} (acc {acc:.3e})",
            fwd * 1e3,
            grad * 1e3,
            grad / fwd
        );
    }
}
