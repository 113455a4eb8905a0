use thermophase::fem::{FeFunction, FemSpace};
use thermophase::linalg::{solve, SolverKind};
use thermophase::mesh::{build_uniform, refine};
use thermophase::model::{MobilityMatrix, ModelParams};
use thermophase::scheme::{SolverConfig, Stepper};

// L2 projection of a closed-form function using the same edge-midpoint rule.
fn project(space: &FemSpace, g: impl Fn(f64, f64) -> f64) -> FeFunction {
    let n = space.mesh.n;
    let h = 1.0 / n as f64;
    let area = h * h / 2.0;
    let idx = |i: usize, j: usize| (j % n) * n + (i % n);
    // barycentric edge midpoints, weight 1/3 each
    let bary: [[f64; 3]; 3] = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
    let mut b = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            let (x0, y0) = (i as f64 * h, j as f64 * h);
            let a = idx(i, j);
            let bi = idx(i + 1, j);
            let c = idx(i, j + 1);
            let d = idx(i + 1, j + 1);
            // triangles [a,b,d] and [a,d,c], physical corners unwrapped
            let tris = [
                ([a, bi, d], [[x0, y0], [x0 + h, y0], [x0 + h, y0 + h]]),
                ([a, d, c], [[x0, y0], [x0 + h, y0 + h], [x0, y0 + h]]),
            ];
            for (nodes, xy) in tris {
                for q in 0..3 {
                    let bq = &bary[q];
                    let px = bq[0] * xy[0][0] + bq[1] * xy[1][0] + bq[2] * xy[2][0];
                    let py = bq[0] * xy[0][1] + bq[1] * xy[1][1] + bq[2] * xy[2][1];
                    let w = area / 3.0 * g(px, py);
                    for v in 0..3 {
                        b[nodes[v]] += w * bq[v];
                    }
                }
            }
        }
    }
    let (c, _) = solve(&space.mass, &b, 1e-14, SolverKind::Direct).unwrap();
    FeFunction::new(c)
}

fn main() {
    let mut args = std::env::args().skip(1);
    let nc: usize = args.next().unwrap().parse().unwrap();
    let tau: f64 = args.next().unwrap().parse().unwrap();
    let interp_mode: bool = args.next().unwrap().parse().unwrap();
    let include_t0: bool = args.next().unwrap().parse().unwrap();
    let alpha: f64 = args.next().unwrap().parse().unwrap();
    let k = nc;
    let mut p = ModelParams::default();
    p.alpha = alpha;
    p.lambda = alpha;
    let mob = MobilityMatrix::convergence();
    let n_steps = (0.16f64 / tau).round() as usize;
    let cm = build_uniform(nc).unwrap();
    let (fm, _) = refine(&cm).unwrap();
    let coarse = FemSpace::new(cm);
    let fine = FemSpace::new(fm);
    let (_, prol) = refine(&coarse.mesh).unwrap();
    let cfg_c = SolverConfig { tau, t_final: 0.16, ..SolverConfig::default() };
    let cfg_f = SolverConfig { tau: tau / 2.0, ..cfg_c.clone() };
    let sc = Stepper::new(&coarse, &p, &mob, cfg_c).unwrap();
    let sf = Stepper::new(&fine, &p, &mob, cfg_f).unwrap();
    let pi2 = 2.0 * std::f64::consts::PI;
    let r0 = |x: f64, y: f64| 0.5 + 0.01 * (pi2 * x).cos() * (pi2 * y).cos();
    let t0 = |x: f64, y: f64| 1.0 + 0.6 * (pi2 * x).sin() * (pi2 * y).sin();
    let init = |sp: &FemSpace, g: &dyn Fn(f64, f64) -> f64| -> FeFunction {
        if interp_mode { sp.interpolate(g).unwrap() } else { project(sp, g) }
    };
    let mut c = sc
        .initialize_state(init(&coarse, &r0), init(&coarse, &t0), init(&coarse, &r0))
        .unwrap();
    let mut f = sf
        .initialize_state(init(&fine, &r0), init(&fine, &t0), init(&fine, &r0))
        .unwrap();
    let diff = |a: &FeFunction, b: &FeFunction| {
        let mut d = prol.apply(&a.coeffs);
        for (dv, fv) in d.iter_mut().zip(&b.coeffs) {
            *dv -= fv;
        }
        FeFunction::new(d)
    };
    let (mut er, mut et, mut ee, mut emr, mut egt, mut eme) = (0f64, 0f64, 0f64, 0f64, 0f64, 0f64);
    if include_t0 {
        er = fine.norm_h1(&diff(&c.rho, &f.rho)).powi(2);
        et = fine.norm_l2(&diff(&c.theta, &f.theta)).powi(2);
        ee = fine.norm_h1(&diff(&c.eta, &f.eta)).powi(2);
        emr = tau * fine.norm_h1(&diff(&c.mu_rho, &f.mu_rho)).powi(2);
        egt = tau * fine.norm_h1(&diff(&c.theta, &f.theta)).powi(2);
        eme = tau * fine.norm_l2(&diff(&c.mu_eta, &f.mu_eta)).powi(2);
    }
    let mut eme_h1 = 0f64;
    for _ in 0..n_steps {
        c = sc.step(&c).unwrap().0;
        let m = sf.step(&f).unwrap().0;
        f = sf.step(&m).unwrap().0;
        er = er.max(fine.norm_h1(&diff(&c.rho, &f.rho)).powi(2));
        et = et.max(fine.norm_l2(&diff(&c.theta, &f.theta)).powi(2));
        ee = ee.max(fine.norm_h1(&diff(&c.eta, &f.eta)).powi(2));
        emr += tau * fine.norm_h1(&diff(&c.mu_rho, &f.mu_rho)).powi(2);
        egt += tau * fine.norm_h1(&diff(&c.theta, &f.theta)).powi(2);
        eme += tau * fine.norm_l2(&diff(&c.mu_eta, &f.mu_eta)).powi(2);
        eme_h1 += tau * fine.norm_h1(&diff(&c.mu_eta, &f.mu_eta)).powi(2);
    }
    println!(
        "k={k}: e_rho {er:.3e}  e_theta {et:.3e}  e_eta {ee:.3e}  e_mu_rho {emr:.3e}  e_grad_th {egt:.3e}  e_mu_eta {eme:.3e}  e_mu_eta_h1 {eme_h1:.3e}  e_total {:.3e}",
        er + et + ee + emr + egt + eme
    );
}
