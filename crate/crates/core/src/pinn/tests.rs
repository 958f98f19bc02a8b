use super::*;
use crate::evalkit::nmse_freq;
use crate::sma::{fibonacci_directions, REFERENCE_RADIUS};
use crate::specfun::Enclosure;
use crate::synth::{plane_wave_field, PlaneWaveSpec};
use ndarray::Array1;
use rand::Rng;

fn small_config(width: usize, layers: usize, w: usize) -> TrainConfig {
    TrainConfig { hidden_width: width, hidden_layers: layers, rowdy_w: w, ..TrainConfig::default() }
}

/// Small model with every parameter class perturbed away from its initial value.
fn jittered_model(k: usize, seed: u64) -> PinnModel {
    let freqs: Vec<f64> = (1..=k).map(|j| 20.0 * j as f64).collect();
    let mut model = init_params(&small_config(8, 2, 2), &freqs, REFERENCE_RADIUS, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let mut flat = model.to_flat();
    for v in &mut flat {
        *v += rng.gen_range(-0.2..0.2);
    }
    model.set_flat(&flat).unwrap();
    model.pressure_scale = 0.7;
    model
}

fn random_obs(q: usize, model: &PinnModel, seed: u64) -> ObservationSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs: Vec<Direction> = (0..q)
        .map(|_| Direction::new(rng.gen_range(0.1..3.0), rng.gen_range(0.0..6.0)))
        .collect();
    let p = (0..q * model.bin_count())
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    ObservationSet::new(dirs, p, model.frequencies.clone(), model.radius).unwrap()
}

fn colloc(s: usize) -> Vec<[f64; 3]> {
    fibonacci_directions(s).iter().map(|d| d.unit_vector()).collect()
}

fn max_relative_gradient_error(model: &PinnModel, obs: &ObservationSet, pts: &[[f64; 3]], lambda: f64) -> f64 {
    let (_, g) = loss_grad(model, obs, pts, lambda).unwrap();
    let analytic = g.to_flat();
    let floor = 1e-3 * analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let theta = model.to_flat();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let at = |delta: f64| {
            let mut m = model.clone();
            let mut t = theta.clone();
            t[i] += delta;
            m.set_flat(&t).unwrap();
            loss(&m, obs, pts, lambda).unwrap().total
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let err = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(floor);
        worst = worst.max(err);
    }
    worst
}

#[test]
fn init_is_seeded_and_bounded() {
    let cfg = TrainConfig::default();
    let a = init_params(&cfg, &[10.0, 20.0], REFERENCE_RADIUS, 3).unwrap();
    let b = init_params(&cfg, &[10.0, 20.0], REFERENCE_RADIUS, 3).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, init_params(&cfg, &[10.0, 20.0], REFERENCE_RADIUS, 4).unwrap());
    let bound = (6.0f64 / 512.0).sqrt() / 5.0;
    for net in [&a.real_net, &a.imag_net] {
        assert_eq!(net.layers.len(), 5);
        assert!(net.layers[0].weights.iter().all(|w| w.abs() <= 1.0 / 3.0));
        for layer in &net.layers[1..] {
            assert!(layer.weights.iter().all(|w| w.abs() <= bound));
            assert!(layer.biases.iter().all(|b| *b == 0.0));
        }
        for layer in &net.layers[..4] {
            match &layer.activation {
                Activation::Rowdy(p) => {
                    assert_eq!(p.n, vec![1.0; 6]);
                    assert_eq!(p.alpha, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
                }
                Activation::Identity => panic!("hidden layer without rowdy activation"),
            }
        }
    }
    let omegas: Vec<f64> = a.real_net.layers[..4]
        .iter()
        .map(|l| match &l.activation {
            Activation::Rowdy(p) => p.omega0,
            Activation::Identity => 0.0,
        })
        .collect();
    assert_eq!(omegas, vec![1.0, 5.0, 5.0, 5.0]);
}

#[test]
fn flat_parameters_round_trip() {
    let mut m = jittered_model(3, 1);
    let flat = m.to_flat();
    assert_eq!(flat.len(), m.param_count());
    let copy = m.clone();
    m.set_flat(&flat).unwrap();
    assert_eq!(m, copy);
    assert!(m.set_flat(&flat[1..]).is_err());
    let mut longer = flat.clone();
    longer.push(0.0);
    assert!(m.set_flat(&longer).is_err());
}

fn single_unit_model(w: [f64; 3]) -> PinnModel {
    let hidden = Layer {
        weights: Array2::from_shape_vec((1, 3), w.to_vec()).unwrap(),
        biases: Array1::zeros(1),
        activation: Activation::Rowdy(RowdyActivationParams::new(1.0, vec![0.0, 0.0], vec![1.0, 2.0]).unwrap()),
    };
    let out = Layer {
        weights: Array2::from_elem((1, 1), 1.0),
        biases: Array1::zeros(1),
        activation: Activation::Identity,
    };
    let net = MlpParams::new(vec![hidden, out]).unwrap();
    PinnModel::new(net.clone(), net, vec![1.0], 1.0, 1.0, 1.0).unwrap()
}

#[test]
fn forward_examples() {
    let mut m = jittered_model(4, 2);
    let x = [0.0, 0.6, 0.8];
    assert_eq!(forward(&m, x), forward(&m, x));
    for net in [&mut m.real_net, &mut m.imag_net] {
        let last = net.layers.last_mut().unwrap();
        last.weights.fill(0.0);
        last.biases.fill(0.0);
    }
    let (re, im) = forward(&m, x);
    assert!(re.iter().chain(&im).all(|v| *v == 0.0));

    let w = [0.3, -1.2, 0.5];
    let single = single_unit_model(w);
    let p = [0.48, 0.6, 0.64];
    let (re, _) = forward(&single, p);
    assert_eq!(re[0], (w[0] * p[0] + w[1] * p[1] + w[2] * p[2]).sin());
    let (v, lap) = laplacian(&single, p);
    let arg = w[0] * p[0] + w[1] * p[1] + w[2] * p[2];
    let w2 = w.iter().map(|x| x * x).sum::<f64>();
    assert!((v[0].re - arg.sin()).abs() < 1e-15);
    assert!((lap[0].re + w2 * arg.sin()).abs() < 1e-14);
}

#[test]
fn affine_network_has_zero_laplacian() {
    let mut m = jittered_model(3, 5);
    for net in [&mut m.real_net, &mut m.imag_net] {
        for layer in &mut net.layers {
            layer.activation = Activation::Identity;
        }
    }
    let (_, lap) = laplacian(&m, [0.0, 0.0, 1.0]);
    assert!(lap.iter().all(|l| *l == Complex64::new(0.0, 0.0)));
}

fn fd_laplacian_of(model: &PinnModel, x: [f64; 3], h: f64) -> Vec<Complex64> {
    let eval = |p: [f64; 3]| {
        let (re, im) = forward(model, p);
        re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect::<Vec<_>>()
    };
    let centre = eval(x);
    let mut lap = vec![Complex64::new(0.0, 0.0); centre.len()];
    for i in 0..3 {
        let mut xp = x;
        let mut xm = x;
        xp[i] += h;
        xm[i] -= h;
        let (fp, fm) = (eval(xp), eval(xm));
        for j in 0..lap.len() {
            lap[j] += (fp[j] - centre[j] * 2.0 + fm[j]) / (h * h);
        }
    }
    lap
}

#[test]
fn laplacian_matches_finite_differences() {
    let cfg = small_config(64, 3, 6);
    let m = init_params(&cfg, &[10.0, 30.0, 60.0], REFERENCE_RADIUS, 11).unwrap();
    for d in fibonacci_directions(5) {
        let x = d.unit_vector();
        let (_, lap) = laplacian(&m, x);
        let fd = fd_laplacian_of(&m, x, 1e-4);
        let scale = lap.iter().fold(0.0f64, |s, v| s.max(v.norm()));
        for (a, b) in lap.iter().zip(&fd) {
            assert!((a - b).norm() <= 1e-5 * scale, "{a} vs {b}");
        }
    }
}

#[test]
fn laplacian_is_linear_in_the_readout() {
    let a = jittered_model(2, 7);
    let mut b = a.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for net in [&mut b.real_net, &mut b.imag_net] {
        let last = net.layers.last_mut().unwrap();
        last.weights.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        last.biases.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
    }
    let (ca, cb) = (0.3, -1.7);
    let mut comb = a.clone();
    for (dst, (na, nb)) in [&mut comb.real_net, &mut comb.imag_net]
        .into_iter()
        .zip([(&a.real_net, &b.real_net), (&a.imag_net, &b.imag_net)])
    {
        let last = dst.layers.last_mut().unwrap();
        let (la, lb) = (na.layers.last().unwrap(), nb.layers.last().unwrap());
        last.weights = &la.weights * ca + &lb.weights * cb;
        last.biases = &la.biases * ca + &lb.biases * cb;
    }
    let x = [0.36, 0.48, 0.8];
    let (_, la) = laplacian(&a, x);
    let (_, lb) = laplacian(&b, x);
    let (_, lc) = laplacian(&comb, x);
    for j in 0..2 {
        assert!((lc[j] - (la[j] * ca + lb[j] * cb)).norm() < 1e-10);
    }
}

#[test]
fn loss_examples() {
    let mut m = jittered_model(3, 4);
    m.pressure_scale = 1.0;
    let dirs = fibonacci_directions(6);
    let g = ArrayGeometry::targets(m.radius, dirs.clone(), Enclosure::Open).unwrap();
    let exact = predict(&m, &g).unwrap();
    let obs = ObservationSet::from_field(&exact).unwrap();
    let pts = colloc(5);
    let t = loss(&m, &obs, &pts, 0.0).unwrap();
    assert_eq!(t.total, 0.0);
    assert_eq!(t.data, 0.0);
    assert!(t.pde > 0.0);

    let mut zero = m.clone();
    for net in [&mut zero.real_net, &mut zero.imag_net] {
        let last = net.layers.last_mut().unwrap();
        last.weights.fill(0.0);
        last.biases.fill(0.0);
    }
    let target = random_obs(6, &m, 2);
    let mean_sq = target.pressures().iter().map(|p| p.norm_sqr()).sum::<f64>() / target.pressures().len() as f64;
    let t = loss(&zero, &target, &pts, 0.5).unwrap();
    assert!((t.data - mean_sq).abs() < 1e-14);
    assert_eq!(t.pde, 0.0);
    assert_eq!(t.total, t.data);

    let mismatched = ObservationSet::new(dirs, vec![Complex64::new(0.0, 0.0); 6], vec![1.0], m.radius).unwrap();
    assert!(loss(&m, &mismatched, &pts, 0.0).is_err());
}

#[test]
fn plane_wave_has_vanishing_pde_term() {
    let kappa = [0.5, 1.7, 4.0];
    let d = Direction::new(1.1, 0.4).unit_vector();
    let eval = |x: [f64; 3]| {
        let phase = d[0] * x[0] + d[1] * x[1] + d[2] * x[2];
        let v: Vec<Complex64> = kappa.iter().map(|k| Complex64::from_polar(1.0, k * phase)).collect();
        let lap = v.iter().zip(&kappa).map(|(p, k)| p * -(k * k)).collect();
        (v, lap)
    };
    let pts = colloc(50);
    let pde = pde_term_with(eval, &kappa, &pts);
    let scale = kappa.iter().map(|k| k.powi(4)).sum::<f64>() / 3.0;
    assert!(pde < 1e-12 * scale);
}

#[test]
fn data_gradient_matches_finite_differences() {
    let m = jittered_model(2, 21);
    let obs = random_obs(5, &m, 22);
    let err = max_relative_gradient_error(&m, &obs, &colloc(7), 0.0);
    assert!(err < 1e-5, "max relative error {err}");
}

#[test]
fn pde_gradient_matches_finite_differences() {
    let m = jittered_model(2, 31);
    let obs = random_obs(5, &m, 32);
    let err = max_relative_gradient_error(&m, &obs, &colloc(7), 1.0);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn unreachable_unit_has_zero_gradient() {
    let mut m = jittered_model(2, 41);
    let hidden = 3;
    for net in [&mut m.real_net, &mut m.imag_net] {
        net.layers.last_mut().unwrap().weights.column_mut(hidden).fill(0.0);
    }
    let obs = random_obs(5, &m, 42);
    let (_, g) = loss_grad(&m, &obs, &colloc(7), 1.0).unwrap();
    for net in [&g.real_net, &g.imag_net] {
        let layer = &net.layers[1];
        assert!(layer.weights.row(hidden).iter().all(|v| *v == 0.0));
        assert_eq!(layer.biases[hidden], 0.0);
    }
}

#[test]
fn cosine_schedule() {
    let cfg = TrainConfig::default();
    assert_eq!(cosine_lr(0, &cfg), 1e-4);
    assert_eq!(cosine_lr(cfg.iterations, &cfg), 0.0);
    assert!((cosine_lr(cfg.iterations / 2, &cfg) - 5e-5).abs() < 1e-20);
    let floor = TrainConfig { lr_min: 1e-6, ..cfg };
    assert_eq!(cosine_lr(floor.iterations, &floor), 1e-6);
}

#[test]
fn adam_minimises_a_quadratic() {
    let mut x = vec![3.0, -2.0];
    let mut adam = Adam::new(2, 0.9, 0.999, 1e-8);
    for _ in 0..2000 {
        let g = vec![2.0 * x[0], 20.0 * x[1]];
        adam.step(&mut x, &g, 0.05);
    }
    assert!(x[0].abs() < 1e-3 && x[1].abs() < 1e-3);
}

fn plane_wave_obs(q: usize, k: usize) -> (ObservationSet, ArrayGeometry) {
    let g = ArrayGeometry::with_uniform_weights(REFERENCE_RADIUS, fibonacci_directions(q), Enclosure::Open).unwrap();
    let spec = PlaneWaveSpec { direction: Direction::new(1.0, 0.5), amplitude: Complex64::new(0.01, 0.0) };
    let ks: Vec<f64> = (1..=k).map(|j| 6.0 * j as f64).collect();
    let cols: Vec<Vec<Complex64>> = ks.iter().map(|&kk| plane_wave_field(&spec, &g, kk, None).unwrap()).collect();
    let p = (0..q * k).map(|i| cols[i % k][i / k]).collect();
    (ObservationSet::new(g.capsules().to_vec(), p, ks, g.radius()).unwrap(), g)
}

#[test]
fn training_descends_and_is_deterministic() {
    let (obs, _) = plane_wave_obs(9, 8);
    let cfg = TrainConfig { iterations: 200, collocation_count: 16, ..small_config(32, 2, 6) };
    let (m1, t1) = train(&obs, &cfg).unwrap();
    let (m2, t2) = train(&obs, &cfg).unwrap();
    assert_eq!(t1, t2);
    assert_eq!(m1, m2);
    assert_eq!(t1.len(), 200);
    assert!(t1.last().unwrap().data < t1[0].data);
    assert!((m1.pressure_scale - 0.01).abs() < 1e-12);

    let plain = TrainConfig { lambda_pde: 0.0, ..cfg.clone() };
    let (_, t0) = train(&obs, &plain).unwrap();
    assert!(t0.iter().all(|t| t.pde == 0.0 && t.total == t.data));
    assert_eq!(t0[0].data, t1[0].data);
    assert!(t1[0].pde > 0.0);
}

#[test]
fn training_rejects_non_finite_loss() {
    let (obs, _) = plane_wave_obs(4, 2);
    let cfg = TrainConfig { iterations: 5, lr0: 1e300, lambda_pde: 1e300, collocation_count: 4, ..small_config(8, 1, 0) };
    assert!(matches!(train(&obs, &cfg), Err(Error::NonFiniteLoss { .. })));
}

#[test]
fn predict_contract() {
    let m = jittered_model(3, 8);
    let empty = ArrayGeometry::targets(m.radius, Vec::new(), Enclosure::Open).unwrap();
    let f = predict(&m, &empty).unwrap();
    assert_eq!(f.capsule_count(), 0);
    assert_eq!(f.bin_count(), 3);

    let dirs = fibonacci_directions(7);
    let fwd = predict(&m, &ArrayGeometry::targets(m.radius, dirs.clone(), Enclosure::Open).unwrap()).unwrap();
    let mut rev = dirs.clone();
    rev.reverse();
    let bwd = predict(&m, &ArrayGeometry::targets(m.radius, rev, Enclosure::Open).unwrap()).unwrap();
    for q in 0..7 {
        assert_eq!(fwd.row(q), bwd.row(6 - q));
        let (re, im) = forward(&m, dirs[q].unit_vector());
        for j in 0..3 {
            assert_eq!(fwd.at(q, j), Complex64::new(re[j], im[j]));
        }
    }
}

#[test]
fn training_fits_capsule_data() {
    let (obs, g) = plane_wave_obs(9, 4);
    let cfg = TrainConfig {
        iterations: 1500,
        lr0: 1e-3,
        collocation_count: 16,
        ..small_config(32, 2, 6)
    };
    let (m, _) = train(&obs, &cfg).unwrap();
    let pred = predict(&m, &g).unwrap();
    let reference =
        ComplexPressureField::new(g.clone(), obs.frequencies().to_vec(), obs.pressures().to_vec()).unwrap();
    let report = nmse_freq(&pred, &reference).unwrap();
    assert!(report.overall_db < -20.0, "NMSE {} dB", report.overall_db);
}
