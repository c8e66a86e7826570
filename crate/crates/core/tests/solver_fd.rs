use fpinfo::potential::{choose_beta, steady_state, SchrodingerPotential};
use fpinfo::solver_fd::{build_transition_kernel, evolve, evolve_gamma};
use fpinfo::{DensityField, Grid, Potential, PotentialFamily};

fn normal(grid: &Grid, m: f64, var: f64) -> DensityField {
    DensityField::from_fn(grid.clone(), |x| {
        (-(x[0] - m) * (x[0] - m) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    })
    .unwrap()
}

fn rel_entropy(mu: &[f64], nu: &[f64], w: &[f64]) -> f64 {
    mu.iter()
        .zip(nu)
        .zip(w)
        .filter(|((m, _), _)| **m > 0.0)
        .map(|((m, n), w)| w * m * (m / n).ln())
        .sum()
}

#[test]
fn steady_state_is_fixed_for_each_family() {
    let g = Grid::line(-6.0, 6.0, 241).unwrap();
    let families = [
        PotentialFamily::Quadratic { alpha: 1.0 },
        PotentialFamily::Quadratic { alpha: 2.5 },
        PotentialFamily::EvenQuartic { a: 1.0, b: 0.5 },
        PotentialFamily::Constant { v0: 0.0 },
    ];
    for fam in families {
        let p = Potential::on_grid(fam, &g).unwrap();
        let nu = steady_state(&p, &g).unwrap().density;
        let traj = evolve(&nu, &p, 2.0, 0.01, &[0.5, 2.0]).unwrap();
        for f in &traj.fields {
            let err = f
                .values()
                .iter()
                .zip(nu.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err <= 1e-6, "fixed point drift {err}");
        }
    }
}

#[test]
fn constant_potential_equilibrates_to_uniform() {
    let g = Grid::line(0.0, 1.0, 65).unwrap();
    let p = Potential::constant(&g).unwrap();
    let bump = DensityField::from_fn(g.clone(), |x: [f64; 2]| (-(x[0] - 0.3).powi(2) / 0.005).exp()).unwrap();
    let traj = evolve(&bump, &p, 3.0, 0.01, &[3.0]).unwrap();
    let last = traj.fields.last().unwrap();
    assert!(last.values().iter().all(|v| (v - 1.0).abs() < 1e-6));
}

#[test]
fn wide_gaussian_relaxes_with_ou_variance() {
    let g = Grid::line(-12.0, 12.0, 961).unwrap();
    let p = Potential::quadratic(1.0, &g).unwrap();
    let mu0 = normal(&g, 0.0, 4.0);
    let traj = evolve(&mu0, &p, 0.5, 1e-4, &[0.5]).unwrap();
    let var = traj.fields[1].variance()[0];
    let exact = 4.0 * (-1.0f64).exp() + 1.0 - (-1.0f64).exp();
    assert!((exact - 2.1036).abs() < 1e-4);
    assert!((var - exact).abs() < 1e-3, "variance {var} vs {exact}");
    assert_eq!(traj.times, vec![0.0, 0.5]);
}

#[test]
fn mass_positivity_and_entropy_decay() {
    let g = Grid::line(-8.0, 8.0, 321).unwrap();
    let p = Potential::on_grid(PotentialFamily::EvenQuartic { a: 0.5, b: 0.0 }, &g).unwrap();
    let nu = steady_state(&p, &g).unwrap().density;
    let mu0 = DensityField::from_fn(g.clone(), |x: [f64; 2]| {
        (-(x[0] - 2.0).powi(2) * 4.0).exp() + 0.2 * (-(x[0] + 3.0).powi(2)).exp()
    })
    .unwrap();
    let save: Vec<f64> = (1..=20).map(|k| 0.1 * k as f64).collect();
    let traj = evolve(&mu0, &p, 2.0, g.h(0) * g.h(0), &save).unwrap();
    assert!(traj.max_mass_error() <= 1e-8);
    let w = g.weights();
    let mut prev = f64::INFINITY;
    for f in &traj.fields {
        assert!(f.values().iter().all(|v| *v >= 0.0));
        let h = rel_entropy(f.values(), nu.values(), &w);
        assert!(h <= prev + 1e-10);
        prev = h;
    }
}

#[test]
fn two_dimensional_flow_conserves_and_keeps_steady_state() {
    let g = Grid::square(-5.0, 5.0, 81).unwrap();
    let p = Potential::quadratic(1.0, &g).unwrap();
    let nu = steady_state(&p, &g).unwrap().density;
    let traj = evolve(&nu, &p, 0.5, 0.01, &[0.5]).unwrap();
    let err = traj.fields[1]
        .values()
        .iter()
        .zip(nu.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err <= 1e-6);
    let mu0 = DensityField::from_fn(g.clone(), |x: [f64; 2]| {
        (-(x[0] - 1.0).powi(2) - 2.0 * x[1] * x[1]).exp()
    })
    .unwrap();
    let traj = evolve(&mu0, &p, 1.0, 0.01, &[0.5, 1.0]).unwrap();
    assert!(traj.max_mass_error() <= 1e-8);
    let m = traj.fields[2].mean();
    assert!((m[0] - (-1.0f64).exp()).abs() < 5e-3, "mean {m:?}");
}

#[test]
fn ground_state_gamma_is_stationary() {
    let g = Grid::line(-8.0, 8.0, 513).unwrap();
    let p = Potential::quadratic(1.0, &g).unwrap();
    let beta = choose_beta(&p, &g, 0.1).unwrap();
    let sp = SchrodingerPotential::new(&p, beta).unwrap();
    let v = p.sample(&g).unwrap();
    let gamma0: Vec<f64> = v.iter().map(|v: &f64| (-v / 2.0).exp()).collect();
    let traj = evolve_gamma(&gamma0, &g, &sp, 1.0, 1e-3, &[1.0]).unwrap();
    let drift = (0..g.len())
        .filter(|&i| g.node(i)[0].abs() <= 6.0)
        .map(|i| (traj.fields[0][i] - gamma0[i]).abs())
        .fold(0.0, f64::max);
    assert!(drift <= 1e-4, "drift {drift}");
}

#[test]
fn gamma_and_density_solvers_agree() {
    let g = Grid::line(-8.0, 8.0, 513).unwrap();
    let p = Potential::quadratic(1.0, &g).unwrap();
    let mu0 = normal(&g, 1.0, 1.0);
    let dt = 1e-3;
    let traj = evolve(&mu0, &p, 0.5, dt, &[0.5]).unwrap();
    let beta = choose_beta(&p, &g, 0.1).unwrap();
    let sp = SchrodingerPotential::new(&p, beta).unwrap();
    let v = p.sample(&g).unwrap();
    let gamma0: Vec<f64> = mu0.values().iter().zip(&v).map(|(m, v)| m * (v / 2.0).exp()).collect();
    let gt = evolve_gamma(&gamma0, &g, &sp, 0.5, dt, &[0.5]).unwrap();
    let back = gt.densities(&p).unwrap();
    let err = (0..g.len())
        .filter(|&i| g.node(i)[0].abs() <= 6.0)
        .map(|i| (back[0][i] - traj.fields[1].values()[i]).abs())
        .fold(0.0, f64::max);
    assert!(err <= 1e-4, "cross-solver gap {err}");
}

#[test]
fn heat_flow_is_gamma_with_zero_potential() {
    let g = Grid::line(-10.0, 10.0, 401).unwrap();
    let p = Potential::constant(&g).unwrap();
    let sp = SchrodingerPotential::new(&p, 0.0).unwrap();
    let gamma0 = normal(&g, 0.0, 1.0).into_values();
    let traj = evolve_gamma(&gamma0, &g, &sp, 0.5, 1e-3, &[0.5]).unwrap();
    // heat flow with unit diffusivity doubles: variance 1 + 2t
    let exact = normal(&g, 0.0, 2.0);
    let err = traj.fields[0]
        .iter()
        .zip(exact.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-3, "{err}");
}

#[test]
fn unbounded_gamma_is_rejected() {
    let g = Grid::line(-8.0, 8.0, 257).unwrap();
    let p = Potential::quadratic(1.0, &g).unwrap();
    let sp = SchrodingerPotential::new(&p, 0.6).unwrap();
    let v = p.sample(&g).unwrap();
    let wide = normal(&g, 0.0, 4.0);
    let gamma0: Vec<f64> = wide.values().iter().zip(&v).map(|(m, v)| m * (v / 2.0).exp()).collect();
    let err = evolve_gamma(&gamma0, &g, &sp, 1.0, 1e-2, &[1.0]).unwrap_err();
    assert_eq!(err.kind(), fpinfo::ErrorKind::Config);
}

#[test]
fn kernel_columns_follow_ou_law() {
    let g = Grid::line(-8.0, 8.0, 257).unwrap();
    let h = g.h(0);
    let p = Potential::quadratic(1.0, &g).unwrap();
    let t = 0.5;
    let k = build_transition_kernel(&p, &g, t, h * h, 2.0 * h).unwrap();
    let w = g.weights();
    for j in (0..g.len()).step_by(8) {
        let y = g.node(j)[0];
        if y.abs() > 5.0 {
            continue;
        }
        let col = k.column(j);
        let mass: f64 = col.iter().zip(&w).map(|(c, w)| c * w).sum();
        assert!((mass - 1.0).abs() <= 1e-6);
        assert!(col.iter().all(|c| *c >= 0.0));
        let mean: f64 = (0..g.len()).map(|i| w[i] * col[i] * g.node(i)[0]).sum();
        assert!((mean - y * (-t).exp()).abs() <= 2.0 * h, "column {j}: mean {mean}");
    }
}

#[test]
fn kernel_at_tiny_time_is_the_mollified_delta() {
    let g = Grid::line(-4.0, 4.0, 129).unwrap();
    let h = g.h(0);
    let p = Potential::quadratic(1.0, &g).unwrap();
    let k = build_transition_kernel(&p, &g, 1e-9, 1e-9, 2.0 * h).unwrap();
    let d = fpinfo::field::mollified_delta(&g, &g.node(64)[..1], 2.0 * h).unwrap();
    let err = k
        .column(64)
        .iter()
        .zip(d.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-6 * d.max_value());
}

#[test]
fn single_precision_flow_conserves_mass() {
    let g = fpinfo::field::Grid::<f32>::line(-6.0, 6.0, 121).unwrap();
    let p = fpinfo::potential::Potential::quadratic(1.0f32, &g).unwrap();
    let mu0 =
        fpinfo::field::DensityField::from_fn(g.clone(), |x: [f32; 2]| (-(x[0] - 1.0) * (x[0] - 1.0)).exp()).unwrap();
    let traj = evolve(&mu0, &p, 1.0, 0.01, &[1.0]).unwrap();
    assert!((traj.fields[1].mass() - 1.0).abs() < 1e-4);
}
