use gibbslab::indepset::*;
use std::time::Instant;
fn main() {
    for n in [12usize, 16, 20] {
        for path in [WisPath::II, WisPath::I] {
            let t0 = Instant::now();
            let pl = wis_path_length(n, path, None).unwrap();
            let t1 = t0.elapsed();
            let t0 = Instant::now();
            let ta = wis_t_a(n, path, None).unwrap();
            println!("n={} path {:?}: l={:.3} ({:.1}s quad) t_a={:.1} eps_a={:.4} ({:.1}s)",
                n, path, pl.length, t1.as_secs_f32(), ta.t_a, ta.epsilon_a, t0.elapsed().as_secs_f32());
        }
    }
}
