//! Scratch: harmonic decomposition of the trained field error.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use euvwg::geometry::{LayerPattern, LayerSpec, MaskStack, PlaneWaveSource};
use euvwg::matching::solve_stack;
use euvwg::numerics::{c64, C64};
use euvwg::pinn::{train_pinn, PinnConfig};

fn main() {
    let l_x = TAU / FRAC_1_SQRT_2;
    let stack = MaskStack::new_2d(
        vec![LayerSpec {
            thickness: PI / FRAC_1_SQRT_2,
            pattern: LayerPattern::Uniform { eps: C64::ONE },
        }],
        l_x,
    )
    .unwrap();
    let source = PlaneWaveSource::te(TAU, 45.0);
    let reference = solve_stack(&stack, &source, 4, 0).unwrap();
    let cfg = PinnConfig {
        hidden: vec![16, 16],
        intervals: 24,
        adam_epochs: 2000,
        adam_lr: 3e-3,
        lbfgs_epochs: 10,
        lbfgs_iters: 30,
        boundary_harmonics: 4,
        fourier_features: 2,
        seed: 2,
        ..PinnConfig::default()
    };
    let (model, rep) = train_pinn(&stack, &source, &cfg, Some(&reference)).unwrap();
    println!(
        "loss {:?} rel {:.3e}",
        rep.final_loss,
        rep.field_rel_l2.unwrap()
    );

    // Re-evaluate the trained network's loss on denser collocation grids:
    // a jump exposes content the training grid cannot see.
    use euvwg::pinn::{build_collocation, pinn_problem, training_loss_and_grad};
    let prob = pinn_problem(&stack, &source).unwrap();
    for n in [12usize, 18, 24, 36, 48] {
        let colloc = build_collocation(&stack, n, 0).unwrap();
        let mut c2 = cfg.clone();
        c2.intervals = n;
        let (parts, _) = training_loss_and_grad(&model.net, &prob, &colloc, &c2).unwrap();
        println!(
            "intervals {n:>2}: total {:.3e} r {:.3e} bc {:.3e}",
            parts.total, parts.l_r, parts.l_bc
        );
    }

    // Error field on a 48 x 9 grid, DFT in x per row, RMS over rows per m.
    let nx = 48;
    let depth = stack.total_thickness();
    let xs: Vec<f64> = (0..nx).map(|i| l_x * i as f64 / nx as f64).collect();
    let zs: Vec<f64> = (0..9).map(|k| -depth * k as f64 / 8.0).collect();
    let got = model.field_grid(&xs, &zs).unwrap();
    let want = reference.field_grid(&xs, &zs).unwrap();
    let kappa = TAU / l_x;
    for m in -6i64..=6 {
        let mut rms = 0.0;
        let mut rms_ref = 0.0;
        for (iz, _) in zs.iter().enumerate() {
            let mut acc = C64::ZERO;
            let mut acc_ref = C64::ZERO;
            for (ix, &x) in xs.iter().enumerate() {
                let d = got[ix + nx * iz] - want.values[ix + nx * iz];
                let ph = c64(0.0, kappa * m as f64 * x).exp();
                acc += d * ph;
                acc_ref += want.values[ix + nx * iz] * ph;
            }
            rms += (acc / nx as f64).norm_sqr();
            rms_ref += (acc_ref / nx as f64).norm_sqr();
        }
        println!(
            "m {m:+}: err {:.3e}  ref {:.3e}",
            (rms / 9.0).sqrt(),
            (rms_ref / 9.0).sqrt()
        );
    }

    // Profile of the m = +1 error along z.
    for (iz, &z) in zs.iter().enumerate() {
        let mut acc = C64::ZERO;
        for (ix, &x) in xs.iter().enumerate() {
            let d = got[ix + nx * iz] - want.values[ix + nx * iz];
            acc += d * c64(0.0, kappa * x).exp();
        }
        acc /= nx as f64;
        println!("z {z:+.3}: m+1 err {:.3e} phase {:+.2}", acc.norm(), acc.arg());
    }
}
