use euvwg::geometry::{LayerPattern, LayerSpec, MaskStack, PlaneWaveSource};
use euvwg::matching::solve_stack;
use euvwg::pinn::{train_pinn, PinnConfig};
use euvwg::c64;
use std::f64::consts::TAU;

fn main() {
    let sq = std::f64::consts::FRAC_1_SQRT_2;
    let l_x = TAU / sq;
    let stack = MaskStack::new_2d(
        vec![LayerSpec { thickness: std::f64::consts::PI / sq, pattern: LayerPattern::Uniform { eps: c64(1.0, 0.0) } }],
        l_x,
    ).unwrap();
    let source = PlaneWaveSource::te(TAU, 45.0);
    let reference = solve_stack(&stack, &source, 4, 0).unwrap();

    for (hidden, adam, lr, le, li) in [
        (vec![16usize, 16], 1500usize, 3e-3, 4usize, 20usize),
        (vec![24, 24], 1500, 3e-3, 4, 20),
        (vec![16, 16], 3000, 3e-3, 6, 20),
    ] {
        let cfg = PinnConfig {
            hidden: hidden.clone(), intervals: 12, adam_epochs: adam, adam_lr: lr,
            lbfgs_epochs: le, lbfgs_iters: li, boundary_harmonics: 2, seed: 2,
            ..PinnConfig::default()
        };
        let t0 = std::time::Instant::now();
        let (_, rep) = train_pinn(&stack, &source, &cfg, Some(&reference)).unwrap();
        println!(
            "hidden {hidden:?} adam {adam}@{lr:.0e} lbfgs {le}x{li}: loss {:.3e} (r {:.2e} bc {:.2e}) relL2 {:.3e} in {:.1}s",
            rep.final_loss.total, rep.final_loss.l_r, rep.final_loss.l_bc,
            rep.field_rel_l2.unwrap(), t0.elapsed().as_secs_f64()
        );
    }
}
