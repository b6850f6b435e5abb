use muskat::brinkman::mms_level;
use muskat::Tolerances;
use std::time::Instant;

fn main() {
    let tol = Tolerances::default();
    let mut prev: Option<f64> = None;
    for n in [32usize, 64, 128] {
        let t0 = Instant::now();
        let row = mms_level(n, tol).unwrap();
        let dt = t0.elapsed().as_secs_f64();
        let ratio = prev.map(|p| p / row.velocity_error_l2);
        println!(
            "n = {:4}  err = {:.6e}  ratio = {:?}  time = {:.2}s",
            n, row.velocity_error_l2, ratio, dt
        );
        prev = Some(row.velocity_error_l2);
    }
}
