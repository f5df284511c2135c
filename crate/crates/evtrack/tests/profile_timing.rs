use std::time::Instant;

use evtrack::net::{siamese_backward, siamese_train_pass, logistic_loss, make_label_map, Network, NetworkConfig};
use evtrack::Tensor3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
#[ignore]
fn profile_forward_backward() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = NetworkConfig::canonical(18);
    let mut net: Network<f32> = Network::new(&cfg, &mut rng);
    let mut ex = Tensor3::<f32>::zeros(18, 127, 127);
    for v in ex.data_mut() { *v = rng.gen_range(0.0..1.0); }
    let mut se = Tensor3::<f32>::zeros(18, 255, 255);
    for v in se.data_mut() { *v = rng.gen_range(0.0..1.0); }

    let t0 = Instant::now();
    let f = net.forward(&se).unwrap();
    println!("eval forward 255: {:.1} ms {:?}", t0.elapsed().as_secs_f64()*1e3, f.dims());
    let t0 = Instant::now();
    let f2 = net.forward(&ex).unwrap();
    println!("eval forward 127: {:.1} ms {:?}", t0.elapsed().as_secs_f64()*1e3, f2.dims());

    let t0 = Instant::now();
    let pass = siamese_train_pass(&mut net, &ex, &se, true).unwrap();
    println!("siamese train fwd: {:.1} ms", t0.elapsed().as_secs_f64()*1e3);

    let label = make_label_map(17, 17, 3.0).unwrap();
    let (_, d) = logistic_loss(&pass.score, &label).unwrap();
    let t0 = Instant::now();
    let _g = siamese_backward(&net, &pass, &d).unwrap();
    println!("siamese backward: {:.1} ms", t0.elapsed().as_secs_f64()*1e3);
}
