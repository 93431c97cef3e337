//! Solver strategies behind one trait, selected by name at runtime.
//!
//! Three strategies solve the same scattering problem in different ways:
//! "wg" assembles and factors the global system directly, "wgno" infers
//! the amplitude vector with a trained network (training one on the spot
//! when no checkpoint is given), and "pinn" fits the field itself. The
//! registry maps names to boxed strategies so a runner can pick one from
//! configuration without knowing the concrete types.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::geometry::{MaskStack, PlaneWaveSource};
use crate::matching::{solve_stack, OrderTable, WgSolution};
use crate::numerics::C64;
use crate::pinn::{train_pinn, PinnConfig, PinnModel, PinnReport};
use crate::wgno::{assemble_instance, train_wgno, TrainReport, WgnoConfig, WgnoModel};

/// One scattering task: a stack, an incident wave, and the truncation.
#[derive(Clone, Debug)]
pub struct DiffractionProblem {
    pub stack: MaskStack,
    pub source: PlaneWaveSource,
    pub n_x: usize,
    pub n_y: usize,
}

/// What a strategy hands back: either modal amplitudes with everything
/// derived from them, or a trained field model.
pub enum Solution {
    Modal(Box<WgSolution>),
    Field(Box<PinnModel>),
}

impl Solution {
    /// Total field sampled on a rectangle, x-fastest. Errors for vector
    /// modal solutions, which expose order amplitudes instead.
    pub fn field_grid(&self, xs: &[f64], zs: &[f64]) -> Result<Vec<C64>> {
        match self {
            Solution::Modal(sol) => Ok(sol.field_grid(xs, zs)?.values),
            Solution::Field(model) => model.field_grid(xs, zs),
        }
    }

    /// Per-order power fractions; only modal solutions carry them.
    pub fn efficiencies(&self) -> Option<OrderTable> {
        match self {
            Solution::Modal(sol) => Some(sol.efficiencies()),
            Solution::Field(_) => None,
        }
    }

    /// Relative residual of the amplitude vector in the global system;
    /// meaningless for a field model.
    pub fn rel_residual(&self) -> Option<f64> {
        match self {
            Solution::Modal(sol) => Some(sol.rel_residual),
            Solution::Field(_) => None,
        }
    }
}

/// Solve result plus whatever training evidence the strategy produced.
pub struct SolveOutcome {
    pub solver: String,
    pub solution: Solution,
    pub wgno: Option<TrainReport>,
    pub pinn: Option<PinnReport>,
}

impl SolveOutcome {
    fn bare(solver: &str, solution: Solution) -> SolveOutcome {
        SolveOutcome {
            solver: solver.into(),
            solution,
            wgno: None,
            pinn: None,
        }
    }
}

pub trait DiffractionSolver {
    fn name(&self) -> &str;
    fn solve(&self, problem: &DiffractionProblem) -> Result<SolveOutcome>;
}

/// Direct assembly and LU solve of the global system.
pub struct WgDirect;

impl DiffractionSolver for WgDirect {
    fn name(&self) -> &str {
        "wg"
    }

    fn solve(&self, problem: &DiffractionProblem) -> Result<SolveOutcome> {
        let sol = solve_stack(&problem.stack, &problem.source, problem.n_x, problem.n_y)?;
        Ok(SolveOutcome::bare("wg", Solution::Modal(Box::new(sol))))
    }
}

/// Amplitude surrogate: load a checkpoint when given one, otherwise train
/// on the problem instance, then infer and interpret like a direct solve.
pub struct WgnoSolver {
    pub config: WgnoConfig,
    pub checkpoint: Option<PathBuf>,
}

impl WgnoSolver {
    pub fn with_defaults() -> WgnoSolver {
        WgnoSolver {
            config: WgnoConfig::default(),
            checkpoint: None,
        }
    }
}

impl DiffractionSolver for WgnoSolver {
    fn name(&self) -> &str {
        "wgno"
    }

    fn solve(&self, problem: &DiffractionProblem) -> Result<SolveOutcome> {
        let inst = assemble_instance(&problem.stack, &problem.source, problem.n_x, problem.n_y)?;
        let (model, report) = match &self.checkpoint {
            Some(path) => (WgnoModel::load(path)?, None),
            None => {
                let (model, report) = train_wgno(&inst.system, &inst.spectra, &self.config)?;
                (model, Some(report))
            }
        };
        let a = model.infer(&inst.system, &inst.spectra)?;
        let sol = inst.system.interpret(&a)?;
        Ok(SolveOutcome {
            solver: "wgno".into(),
            solution: Solution::Modal(Box::new(sol)),
            wgno: report,
            pinn: None,
        })
    }
}

/// Field surrogate: fits the total field directly; the truncation knobs of
/// the problem do not apply.
pub struct PinnSolver {
    pub config: PinnConfig,
    pub checkpoint: Option<PathBuf>,
}

impl PinnSolver {
    pub fn with_defaults() -> PinnSolver {
        PinnSolver {
            config: PinnConfig::default(),
            checkpoint: None,
        }
    }
}

impl DiffractionSolver for PinnSolver {
    fn name(&self) -> &str {
        "pinn"
    }

    fn solve(&self, problem: &DiffractionProblem) -> Result<SolveOutcome> {
        let (model, report) = match &self.checkpoint {
            Some(path) => (PinnModel::load(path)?, None),
            None => {
                let (model, report) =
                    train_pinn(&problem.stack, &problem.source, &self.config, None)?;
                (model, Some(report))
            }
        };
        Ok(SolveOutcome {
            solver: "pinn".into(),
            solution: Solution::Field(Box::new(model)),
            wgno: None,
            pinn: report,
        })
    }
}

/// Name-keyed strategy collection. Registering a name twice replaces the
/// earlier strategy, so a runner can override defaults with configured
/// instances.
pub struct SolverRegistry {
    entries: Vec<Box<dyn DiffractionSolver>>,
}

impl SolverRegistry {
    pub fn new() -> SolverRegistry {
        SolverRegistry {
            entries: Vec::new(),
        }
    }

    /// All three strategies with default configurations.
    pub fn with_defaults() -> SolverRegistry {
        let mut reg = SolverRegistry::new();
        reg.register(Box::new(WgDirect));
        reg.register(Box::new(WgnoSolver::with_defaults()));
        reg.register(Box::new(PinnSolver::with_defaults()));
        reg
    }

    pub fn register(&mut self, solver: Box<dyn DiffractionSolver>) {
        match self
            .entries
            .iter_mut()
            .find(|e| e.name() == solver.name())
        {
            Some(slot) => *slot = solver,
            None => self.entries.push(solver),
        }
    }

    pub fn get(&self, name: &str) -> Result<&dyn DiffractionSolver> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .map(|e| e.as_ref())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown solver {name:?}; registered: {}",
                    self.names().join(", ")
                ))
            })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name()).collect()
    }
}

impl Default for SolverRegistry {
    fn default() -> Self {
        SolverRegistry::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{LayerPattern, LayerSpec};
    use crate::numerics::c64;
    use std::f64::consts::TAU;

    fn slab_problem() -> DiffractionProblem {
        let l_x = TAU / std::f64::consts::FRAC_1_SQRT_2;
        let stack = MaskStack::new_2d(
            vec![LayerSpec {
                thickness: 0.8,
                pattern: LayerPattern::HoleInX {
                    eps_background: c64(4.0, 0.0),
                    eps_hole: c64(1.0, 0.0),
                    center: 0.25 * l_x,
                    width: 0.5 * l_x,
                },
            }],
            l_x,
        )
        .unwrap();
        DiffractionProblem {
            stack,
            source: PlaneWaveSource::te(TAU, 45.0),
            n_x: 3,
            n_y: 0,
        }
    }

    fn quick_wgno() -> WgnoConfig {
        WgnoConfig {
            hidden: vec![16],
            stage1_epochs: 60,
            stage2_epochs: 10,
            stage1_lr: 1e-2,
            stage2_lr: 1e-3,
            seed: 3,
            ..WgnoConfig::default()
        }
    }

    fn quick_pinn() -> PinnConfig {
        PinnConfig {
            hidden: vec![6],
            intervals: 4,
            adam_epochs: 5,
            lbfgs_epochs: 1,
            lbfgs_iters: 3,
            boundary_harmonics: 1,
            fourier_features: 0,
            seed: 1,
            ..PinnConfig::default()
        }
    }

    #[test]
    fn registry_selects_strategies_by_name() {
        let reg = SolverRegistry::with_defaults();
        assert_eq!(reg.names(), vec!["wg", "wgno", "pinn"]);
        assert_eq!(reg.get("wg").unwrap().name(), "wg");
        let err = match reg.get("fdtd") {
            Err(e) => e.to_string(),
            Ok(_) => panic!("lookup should fail"),
        };
        assert!(err.contains("wg, wgno, pinn"), "{err}");
    }

    struct Stub;
    impl DiffractionSolver for Stub {
        fn name(&self) -> &str {
            "wg"
        }
        fn solve(&self, _: &DiffractionProblem) -> Result<SolveOutcome> {
            Err(Error::Config("stub".into()))
        }
    }

    #[test]
    fn registering_a_name_twice_replaces_the_strategy() {
        let mut reg = SolverRegistry::with_defaults();
        let n = reg.names().len();
        reg.register(Box::new(Stub));
        assert_eq!(reg.names().len(), n);
        let err = match reg.get("wg").unwrap().solve(&slab_problem()) {
            Err(e) => e.to_string(),
            Ok(_) => panic!("the stub should refuse to solve"),
        };
        assert!(err.contains("stub"));
    }

    #[test]
    fn direct_strategy_solves_the_system() {
        let prob = slab_problem();
        let out = WgDirect.solve(&prob).unwrap();
        assert_eq!(out.solver, "wg");
        assert!(out.solution.rel_residual().unwrap() <= 1e-12);
        let table = out.solution.efficiencies().unwrap();
        let power: f64 = table.total_reflectance() + table.total_transmittance();
        assert!((power - 1.0).abs() <= 1e-10, "power sum {power}");
        assert!(out.wgno.is_none() && out.pinn.is_none());
    }

    #[test]
    fn surrogate_strategy_trains_then_loads_a_checkpoint() {
        let prob = slab_problem();
        let trained = WgnoSolver {
            config: quick_wgno(),
            checkpoint: None,
        };
        let out = trained.solve(&prob).unwrap();
        assert_eq!(out.solver, "wgno");
        let report = out.wgno.as_ref().unwrap();
        assert!(report.final_rel_residual.is_finite());
        let direct = out.solution.rel_residual().unwrap();
        assert!((direct - report.final_rel_residual).abs() <= 1e-12 * direct.max(1.0));

        // Persist a model, then solve through the checkpoint path: same
        // amplitudes, no training report.
        let inst = assemble_instance(&prob.stack, &prob.source, prob.n_x, prob.n_y).unwrap();
        let (model, _) = train_wgno(&inst.system, &inst.spectra, &quick_wgno()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("surrogate.json");
        model.save(&path).unwrap();
        let loaded = WgnoSolver {
            config: quick_wgno(),
            checkpoint: Some(path),
        };
        let out2 = loaded.solve(&prob).unwrap();
        assert!(out2.wgno.is_none());
        let a1 = model.infer(&inst.system, &inst.spectra).unwrap();
        let sol2 = match &out2.solution {
            Solution::Modal(sol) => sol,
            _ => panic!("expected a modal solution"),
        };
        assert_eq!(sol2.r.data, a1.data[..sol2.r.data.len()]);
    }

    #[test]
    fn field_strategy_returns_a_model() {
        let l_x = TAU / std::f64::consts::FRAC_1_SQRT_2;
        let stack = MaskStack::new_2d(
            vec![LayerSpec {
                thickness: 1.0,
                pattern: LayerPattern::Uniform { eps: c64(4.0, 0.0) },
            }],
            l_x,
        )
        .unwrap();
        let prob = DiffractionProblem {
            stack,
            source: PlaneWaveSource::te(TAU, 45.0),
            n_x: 2,
            n_y: 0,
        };
        let out = PinnSolver {
            config: quick_pinn(),
            checkpoint: None,
        }
        .solve(&prob)
        .unwrap();
        assert_eq!(out.solver, "pinn");
        assert!(out.pinn.is_some());
        assert!(out.solution.rel_residual().is_none());
        assert!(out.solution.efficiencies().is_none());
        let vals = out.solution.field_grid(&[1.0, 2.0], &[-0.5]).unwrap();
        assert_eq!(vals.len(), 2);
        assert!(vals.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
    }
}
