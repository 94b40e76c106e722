mod common;

use common::SEED;
use roughflow::continuity::*;
use roughflow::fbm::circulant_fbm;
use roughflow::flow::{inverse_flow, solve_transformed, Drift, TransformedDrift};
use roughflow::transport::*;
use roughflow::{Error, TimeGrid};

fn grid(n: usize) -> TimeGrid {
    TimeGrid::unit(1.0, n).unwrap()
}

fn gauss(center: f64, width: f64) -> Gaussian {
    Gaussian { amp: 1.0, center: vec![center], width }
}

struct Sum(Gaussian, Gaussian);

impl ScalarField for Sum {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.0.value(x) + self.1.value(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let mut g = [0.0];
        self.0.gradient(x, out);
        self.1.gradient(x, &mut g);
        out[0] += g[0];
    }
}

#[test]
fn transport_respects_initial_data_and_the_maximum_principle() {
    let p = circulant_fbm(0.1, 1, grid(1024), SEED).unwrap();
    let b = Drift::sign(1);
    let u0 = Gaussian { amp: 2.0, center: vec![0.2], width: 0.4 };
    let lat = Lattice::cube(1, -2.0, 2.0, 81).unwrap();
    let u = solve_transport(&u0, &b, &p, &grid(16), &lat, 1024).unwrap();
    for (p, x) in lat.points().iter().enumerate() {
        assert_eq!(u.slice(0)[p], u0.value(x));
    }
    assert!(u.values().iter().all(|v| (0.0..=2.0).contains(v)));
}

#[test]
fn zero_drift_leaves_the_data_unchanged() {
    let p = circulant_fbm(0.2, 2, grid(256), SEED).unwrap();
    let u0 = Gaussian { amp: 1.0, center: vec![0.0, 0.3], width: 0.5 };
    let lat = Lattice::cube(2, -1.0, 1.0, 21).unwrap();
    let u = solve_transport(&u0, &Drift::zero(2), &p, &grid(8), &lat, 256).unwrap();
    for i in 0..=8 {
        assert_eq!(u.slice(i), u.slice(0));
    }
}

#[test]
fn solution_is_constant_along_characteristics() {
    let n = 2048;
    let p = circulant_fbm(0.2, 1, grid(n), SEED).unwrap();
    let b = Drift::bump(1.0, vec![0.0], 0.5).unwrap();
    let u0 = gauss(0.1, 0.6);
    let lat = Lattice::cube(1, -3.0, 3.0, 1201).unwrap();
    let u = solve_transport(&u0, &b, &p, &grid(4), &lat, n).unwrap();
    let h = lat.spacing();
    for y in [-0.8, -0.2, 0.0, 0.4, 1.1] {
        let tr = solve_transformed(&b, &[y], 0.0, &p, n).unwrap();
        for i in 1..=4 {
            let x = tr.state(i * n / 4)[0];
            let s = (x + 3.0) / h;
            let j = s.floor() as usize;
            let f = s - j as f64;
            let interp = (1.0 - f) * u.slice(i)[j] + f * u.slice(i)[j + 1];
            // interpolation error h^2 |u''| / 8 plus the O(dt^(1/2)) flow round trip
            assert!((interp - u0.value(&[y])).abs() < 2e-2, "y={y}, i={i}");
        }
    }
}

#[test]
fn superposition_is_exact() {
    let p = circulant_fbm(0.1, 1, grid(512), SEED).unwrap();
    let b = Drift::sign(1).mollified(4).unwrap();
    let lat = Lattice::cube(1, -2.0, 2.0, 41).unwrap();
    let tg = grid(4);
    let (f, g) = (gauss(-0.5, 0.3), gauss(0.7, 0.5));
    let uf = solve_transport(&f, &b, &p, &tg, &lat, 512).unwrap();
    let ug = solve_transport(&g, &b, &p, &tg, &lat, 512).unwrap();
    let us = solve_transport(&Sum(f, g), &b, &p, &tg, &lat, 512).unwrap();
    for ((s, a), c) in us.values().iter().zip(uf.values()).zip(ug.values()) {
        assert_eq!(*s, a + c);
    }
}

#[test]
fn transport_is_translation_equivariant() {
    let p = circulant_fbm(0.25, 1, grid(512), SEED).unwrap();
    let a = 0.5;
    let lat = Lattice::cube(1, -2.0, 2.0, 17).unwrap();
    let moved = Lattice::cube(1, -2.0 + a, 2.0 + a, 17).unwrap();
    let u = solve_transport(&gauss(0.0, 0.5), &Drift::bump(1.0, vec![0.2], 0.4).unwrap(), &p, &grid(4), &lat, 512)
        .unwrap();
    let v = solve_transport(&gauss(a, 0.5), &Drift::bump(1.0, vec![0.2 + a], 0.4).unwrap(), &p, &grid(4), &moved, 512)
        .unwrap();
    for (x, y) in u.values().iter().zip(v.values()) {
        assert!((x - y).abs() < 1e-10);
    }
}

#[test]
fn weak_residual_rejects_escaping_supports() {
    let p = circulant_fbm(0.2, 1, grid(64), SEED).unwrap();
    let b = Drift::sign(1);
    let lat = Lattice::cube(1, -1.0, 1.0, 41).unwrap();
    let u = solve_transport(&gauss(0.0, 0.5), &b, &p, &grid(8), &lat, 64).unwrap();
    let star = TransformedDrift::new(&b, &p).unwrap();
    let wide = TestPair::spanning(1.0, BumpField::new(vec![0.0], vec![1.0]).unwrap()).unwrap();
    assert!(matches!(weak_residual(&u, &star, &wide), Err(Error::SupportEscape(_))));
    let late = TestPair::new((0.5, 1.5), BumpField::new(vec![0.0], vec![0.5]).unwrap()).unwrap();
    assert!(matches!(weak_residual(&u, &star, &late), Err(Error::SupportEscape(_))));
    let ok = TestPair::spanning(1.0, BumpField::new(vec![0.0], vec![0.5]).unwrap()).unwrap();
    assert!(weak_residual(&u, &star, &ok).is_ok());
}

#[test]
fn upwind_enforces_the_cfl_bound() {
    let p = circulant_fbm(0.2, 2, grid(64), SEED).unwrap();
    let b = Drift::constant(vec![1.0, 1.0]);
    let star = TransformedDrift::new(&b, &p).unwrap();
    let lat = Lattice::cube(2, -1.0, 1.0, 21).unwrap();
    let u0 = Gaussian { amp: 1.0, center: vec![0.0, 0.0], width: 0.3 };
    // h = 0.1, |b|_inf = sqrt(2): dt = 1/16 gives 0.0625 * sqrt(2) * sqrt(2) / 0.1 = 1.25
    assert!(matches!(upwind_reference(&u0, &star, &grid(16), &lat), Err(Error::Cfl(_))));
    assert!(upwind_reference(&u0, &star, &grid(64), &lat).is_ok());
}

#[test]
fn upwind_tracks_the_characteristics_solution() {
    let n = 1024;
    let p = circulant_fbm(0.2, 1, grid(n), SEED).unwrap();
    let b = Drift::bump(0.8, vec![0.0], 0.5).unwrap();
    let star = TransformedDrift::new(&b, &p).unwrap();
    let lat = Lattice::cube(1, -3.0, 3.0, 601).unwrap();
    let u0 = gauss(0.0, 0.5);
    let up = upwind_reference(&u0, &star, &grid(n), &lat).unwrap();
    let ch = solve_transport(&u0, &b, &p, &grid(n), &lat, n).unwrap();
    let rel = up.l1_distance(&ch, n).unwrap() / ch.l1_norm(n);
    assert!(rel < 2e-2, "{rel}");
}

fn density(lat: Lattice) -> GridDensity {
    GridDensity::from_fn(lat, |x| (-x.iter().map(|v| v * v).sum::<f64>() / 0.5).exp()).unwrap()
}

#[test]
fn particles_carry_their_mass() {
    let p = circulant_fbm(0.1, 2, grid(256), SEED).unwrap();
    let d0 = density(Lattice::cube(2, -2.0, 2.0, 41).unwrap());
    let ens = ParticleEnsemble::from_density(&d0, 2).unwrap();
    assert!((ens.total_mass() - d0.mass()).abs() < 1e-12 * d0.mass());
    let moved = push_forward(&ens, &Drift::sign(2), &p, 1.0, 256).unwrap();
    assert_eq!(moved.total_mass(), ens.total_mass());
    assert_eq!(test_integral(&moved, |_| 1.0), test_integral(&ens, |_| 1.0));
    assert!(moved.weights().iter().all(|w| *w >= 0.0));
}

#[test]
fn finite_volume_conserves_mass_and_positivity() {
    let p = circulant_fbm(0.1, 1, grid(512), SEED).unwrap();
    let b = Drift::sign(1);
    let star = TransformedDrift::new(&b, &p).unwrap();
    let d0 = density(Lattice::cube(1, -1.0, 1.0, 101).unwrap());
    let sol = fv_reference(&d0, &star, &grid(512)).unwrap();
    for (dens, out) in sol.densities.iter().zip(&sol.outflow) {
        assert!(dens.values.iter().all(|v| *v >= 0.0));
        assert!((dens.mass() + out - d0.mass()).abs() < 1e-12);
    }
    assert!(*sol.outflow.last().unwrap() > 0.0);
    assert!(matches!(fv_reference(&d0, &star, &grid(32)), Err(Error::Cfl(_))));
}

#[test]
fn push_forward_is_translation_equivariant() {
    let p = circulant_fbm(0.2, 1, grid(512), SEED).unwrap();
    let a = 0.75;
    let lat = Lattice::cube(1, -2.0, 2.0, 41).unwrap();
    let moved = Lattice::cube(1, -2.0 + a, 2.0 + a, 41).unwrap();
    let e = ParticleEnsemble::from_density(&density(lat), 3).unwrap();
    let f = ParticleEnsemble::from_density(
        &GridDensity::from_fn(moved, |x| (-(x[0] - a) * (x[0] - a) / 0.5).exp()).unwrap(),
        3,
    )
    .unwrap();
    let pe = push_forward(&e, &Drift::bump(1.0, vec![0.1], 0.3).unwrap(), &p, 1.0, 512).unwrap();
    let pf = push_forward(&f, &Drift::bump(1.0, vec![0.1 + a], 0.3).unwrap(), &p, 1.0, 512).unwrap();
    for (x, y) in pe.positions().iter().zip(pf.positions()) {
        assert!((x + a - y).abs() < 1e-10);
    }
}

#[test]
fn perturbed_frame_adds_the_path_increment() {
    let p = circulant_fbm(0.3, 1, grid(128), SEED).unwrap();
    let e = ParticleEnsemble::new(1, vec![-0.5, 0.0, 0.5], vec![1.0, 1.0, 1.0]).unwrap();
    let b = Drift::sign(1);
    let hat = push_forward_in(Frame::Transformed, &e, &b, &p, 1.0, 128).unwrap();
    let per = push_forward_in(Frame::Perturbed, &e, &b, &p, 1.0, 128).unwrap();
    let inc = p.value(128)[0] - p.value(0)[0];
    for (x, y) in hat.positions().iter().zip(per.positions()) {
        assert!((x + inc - y).abs() < 1e-12);
    }
    let back = inverse_flow(&b, &[hat.position(1)[0]], 1.0, &p, 128).unwrap();
    assert!(back[0].abs() < 0.2);
}
