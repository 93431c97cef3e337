//! Scratch sweep for the field-network schedule on the benchmark problems.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use euvwg::geometry::{LayerPattern, LayerSpec, MaskStack, PlaneWaveSource};
use euvwg::matching::solve_stack;
use euvwg::numerics::{c64, C64};
use euvwg::pinn::{train_pinn, PinnConfig};

fn uniform(thickness: f64, eps: C64) -> LayerSpec {
    LayerSpec {
        thickness,
        pattern: LayerPattern::Uniform { eps },
    }
}

fn problem(which: usize) -> MaskStack {
    let h = PI / FRAC_1_SQRT_2;
    let l_x = TAU / FRAC_1_SQRT_2;
    let eps4 = c64(4.0, 0.0);
    let vac = || uniform(h, C64::ONE);
    let (layers, sub) = match which {
        1 => (vec![uniform(2.0 * h, C64::ONE)], C64::ONE),
        2 => (vec![vac(), uniform(h, eps4)], eps4),
        _ => (vec![vac(), uniform(h, eps4), vac()], C64::ONE),
    };
    MaskStack::new_2d(layers, l_x)
        .unwrap()
        .with_substrate(sub)
        .unwrap()
}

fn main() {
    let source = PlaneWaveSource::te(TAU, 45.0);
    let base = PinnConfig::default();
    let sweep: Vec<(&str, PinnConfig)> = vec![
        (
            "f32",
            PinnConfig {
                hidden: vec![32, 32],
                intervals: 64,
                boundary_harmonics: 8,
                adam_epochs: 1500,
                adam_lr: 3e-3,
                lbfgs_epochs: 20,
                lbfgs_iters: 25,
                ..base.clone()
            },
        ),
        (
            "f48",
            PinnConfig {
                hidden: vec![48, 48],
                intervals: 64,
                boundary_harmonics: 8,
                adam_epochs: 1500,
                adam_lr: 3e-3,
                lbfgs_epochs: 30,
                lbfgs_iters: 25,
                ..base.clone()
            },
        ),
        (
            "f32-f6",
            PinnConfig {
                hidden: vec![32, 32],
                intervals: 64,
                boundary_harmonics: 12,
                adam_epochs: 1500,
                adam_lr: 3e-3,
                lbfgs_epochs: 20,
                lbfgs_iters: 25,
                fourier_features: 6,
                ..base.clone()
            },
        ),
    ];
    for which in [1usize, 2, 3] {
        let stack = problem(which);
        let reference = solve_stack(&stack, &source, 10, 0).unwrap();
        for (name, cfg) in &sweep {
            let mut cfg = cfg.clone();
            cfg.seed = 1;
            match train_pinn(&stack, &source, &cfg, Some(&reference)) {
                Ok((_, report)) => println!(
                    "p{which} {name}: loss {:.3e} (r {:.2e} bc {:.2e}) relL2 {:.3e} in {:.0}s",
                    report.final_loss.total,
                    report.final_loss.l_r,
                    report.final_loss.l_bc,
                    report.field_rel_l2.unwrap(),
                    report.train_seconds
                ),
                Err(e) => println!("p{which} {name}: FAILED {e}"),
            }
        }
    }
}
