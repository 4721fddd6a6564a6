use ndarray::Array2;
use std::time::Instant;

fn main() {
    for &(m, k, n) in &[(100usize, 784usize, 256usize), (100, 256, 256), (256, 100, 784), (100, 256, 10)] {
        let a = Array2::<f64>::from_elem((m, k), 0.5);
        let b = Array2::<f64>::from_elem((k, n), 0.25);
        let mut c = a.dot(&b);
        let t = Instant::now();
        let iters = 200;
        for _ in 0..iters {
            c = a.dot(&b);
        }
        let dt = t.elapsed().as_secs_f64();
        let flops = 2.0 * (m * k * n) as f64 * iters as f64;
        println!("({m}x{k})·({k}x{n}): {:.2} GFLOP/s  [{:.3} ms/iter]  sink={}", flops / dt / 1e9, dt / iters as f64 * 1e3, c[[0,0]]);
    }
}
