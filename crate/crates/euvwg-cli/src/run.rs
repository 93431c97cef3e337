//! Mode dispatch: each mode turns a resolved run into artifacts in the
//! output directory plus one metrics document. Training modes loop over
//! `seeds` consecutive seeds and report per-seed metrics with mean and
//! sample deviation.

use std::path::Path;
use std::time::Instant;

use euvwg::geometry::MaskStack;
use euvwg::matching::{field_rel_l2, solve_stack, FieldGrid, WgSolution};
use euvwg::modes::OperatorKind;
use euvwg::pinn::{pinn_field_rel_l2, train_pinn, PinnModel};
use euvwg::solver::{
    DiffractionProblem, PinnSolver, Solution, SolverRegistry, WgDirect, WgnoSolver,
};
use euvwg::wgno::{
    assemble_instance, sample_family, train_wgno, train_wgno_pool, WgnoInstance, WgnoModel,
};
use euvwg::{Error, Result};

use crate::config::{GridSpec, Mode, RunConfig};
use crate::export::{write_field_csv, write_field_raw, write_orders_csv, FieldExport};
use crate::presets::{resolve, ResolvedRun};
use crate::report::{seed_stats, MetricsReport, SeedMetrics};

/// Registry used by `solve`: the direct solver plus both surrogates bound
/// to this run's configuration.
pub fn registry_for(cfg: &RunConfig) -> SolverRegistry {
    let mut registry = SolverRegistry::new();
    registry.register(Box::new(WgDirect));
    registry.register(Box::new(WgnoSolver {
        config: cfg.wgno.clone(),
        checkpoint: cfg.checkpoint.clone(),
    }));
    registry.register(Box::new(PinnSolver {
        config: cfg.pinn.clone(),
        checkpoint: cfg.checkpoint.clone(),
    }));
    registry
}

/// Export axes: x covers one period half-open (the endpoint repeats the
/// origin), z spans the stack inclusive of both faces.
fn field_axes(stack: &MaskStack, grid: &GridSpec) -> (Vec<f64>, Vec<f64>) {
    let depth = stack.total_thickness();
    let xs = (0..grid.nx)
        .map(|i| stack.l_x * i as f64 / grid.nx as f64)
        .collect();
    let zs = (0..grid.nz)
        .map(|k| -depth + depth * k as f64 / (grid.nz - 1) as f64)
        .collect();
    (xs, zs)
}

fn scalar_component(kind: OperatorKind) -> Option<&'static str> {
    match kind {
        OperatorKind::Te2d => Some("Ey"),
        OperatorKind::Tm2d => Some("Hy"),
        OperatorKind::Vector3d => None,
    }
}

/// Amplitude-space error over the stacked reflected and transmitted
/// spectra; the comparison that stays meaningful for vector runs, where
/// scalar field maps do not exist.
pub fn amplitude_rel_l2(candidate: &WgSolution, reference: &WgSolution) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (c, r) in candidate
        .r
        .data
        .iter()
        .zip(&reference.r.data)
        .chain(candidate.t.data.iter().zip(&reference.t.data))
    {
        num += (c - r).norm_sqr();
        den += r.norm_sqr();
    }
    (num / den).sqrt()
}

fn export_field(
    out_dir: &Path,
    component: &str,
    grid: &FieldGrid,
    artifacts: &mut Vec<String>,
) -> Result<()> {
    let export = FieldExport { component, grid };
    write_field_csv(&out_dir.join("field.csv"), &export)?;
    write_field_raw(&out_dir.join("field.bin"), &export)?;
    artifacts.push("field.csv".into());
    artifacts.push("field.bin".into());
    Ok(())
}

fn export_orders(
    out_dir: &Path,
    solution: &WgSolution,
    report: &mut MetricsReport,
) -> Result<()> {
    let table = solution.efficiencies();
    report.total_reflectance = Some(table.total_reflectance());
    report.total_transmittance = Some(table.total_transmittance());
    write_orders_csv(&out_dir.join("orders.csv"), &table)?;
    report.artifacts.push("orders.csv".into());
    Ok(())
}

/// Run one configured mode end to end, writing artifacts into `out_dir`.
pub fn execute(cfg: &RunConfig, out_dir: &Path) -> Result<MetricsReport> {
    cfg.validate()?;
    let mode = cfg
        .mode
        .clone()
        .ok_or_else(|| Error::Config("no mode given on the command line or in the config".into()))?;
    let run = resolve(cfg)?;
    std::fs::create_dir_all(out_dir)?;
    let mut report = match mode {
        Mode::Solve => run_solve(cfg, &run, out_dir)?,
        Mode::TrainWgno => run_train_wgno(cfg, &run, out_dir)?,
        Mode::InferWgno => run_infer_wgno(cfg, &run, out_dir)?,
        Mode::TrainPinn => run_train_pinn(cfg, &run, out_dir)?,
        Mode::Eval => run_eval(cfg, &run, out_dir)?,
        Mode::Validate => {
            return Err(Error::Config(
                "validate runs through the acceptance entry point".into(),
            ))
        }
    };
    report.preset = run.preset.clone();
    report.n_x = run.n_x;
    report.n_y = run.n_y;
    let mut notes = run.notes.clone();
    notes.append(&mut report.notes);
    report.notes = notes;
    report.seed_stats = seed_stats(&report.seed_metrics);
    report.save(&out_dir.join("metrics.json"))?;
    Ok(report)
}

fn run_solve(cfg: &RunConfig, run: &ResolvedRun, out_dir: &Path) -> Result<MetricsReport> {
    let registry = registry_for(cfg);
    let solver = registry.get(cfg.solver.as_deref().unwrap_or("wg"))?;
    let problem = DiffractionProblem {
        stack: run.stack.clone(),
        source: run.source.clone(),
        n_x: run.n_x,
        n_y: run.n_y,
    };
    let t0 = Instant::now();
    let outcome = solver.solve(&problem)?;
    let solve_seconds = t0.elapsed().as_secs_f64();

    let mut report = MetricsReport::new("solve", &outcome.solver, cfg.clone());
    report.solve_seconds = Some(solve_seconds);
    report.rel_residual = outcome.solution.rel_residual();

    let (xs, zs) = field_axes(&run.stack, &cfg.grid);
    match &outcome.solution {
        Solution::Modal(sol) => {
            export_orders(out_dir, sol, &mut report)?;
            match scalar_component(sol.kind) {
                Some(component) => {
                    let grid = sol.field_grid(&xs, &zs)?;
                    export_field(out_dir, component, &grid, &mut report.artifacts)?;
                }
                None => report
                    .notes
                    .push("vector runs export order tables, not field maps".into()),
            }
        }
        Solution::Field(model) => {
            let grid = FieldGrid {
                values: model.field_grid(&xs, &zs)?,
                xs,
                zs,
            };
            export_field(out_dir, "Ey", &grid, &mut report.artifacts)?;
        }
    }

    if let Some(tr) = &outcome.wgno {
        report.seed_metrics.push(SeedMetrics {
            seed: tr.seed,
            rel_residual: Some(tr.final_rel_residual),
            field_rel_l2: tr.field_rel_l2,
            final_loss: tr.loss_curve.last().copied(),
            train_seconds: Some(tr.train_seconds),
            inference_seconds: None,
        });
    }
    if let Some(pr) = &outcome.pinn {
        report.seed_metrics.push(SeedMetrics {
            seed: pr.seed,
            rel_residual: None,
            field_rel_l2: pr.field_rel_l2,
            final_loss: Some(pr.final_loss.total),
            train_seconds: Some(pr.train_seconds),
            inference_seconds: None,
        });
    }
    Ok(report)
}

/// Training pool: the resolved stack alone, or a sampled geometry family
/// around it.
fn training_pool(cfg: &RunConfig, run: &ResolvedRun) -> Result<Vec<WgnoInstance>> {
    match &cfg.family {
        None => Ok(vec![assemble_instance(
            &run.stack, &run.source, run.n_x, run.n_y,
        )?]),
        Some(spec) => sample_family(&run.stack, spec, cfg.wgno.seed)?
            .iter()
            .map(|stack| assemble_instance(stack, &run.source, run.n_x, run.n_y))
            .collect(),
    }
}

fn run_train_wgno(cfg: &RunConfig, run: &ResolvedRun, out_dir: &Path) -> Result<MetricsReport> {
    let mut report = MetricsReport::new("train-wgno", "wgno", cfg.clone());
    let pool = training_pool(cfg, run)?;
    if pool.len() > 1 {
        report
            .notes
            .push(format!("trained on a family pool of {} stacks", pool.len()));
    }
    let scalar = scalar_component(operator_kind_of(run)).is_some();
    for i in 0..cfg.seeds {
        let mut wcfg = cfg.wgno.clone();
        wcfg.seed = cfg.wgno.seed.wrapping_add(i as u64);
        let (model, tr) = if pool.len() == 1 {
            train_wgno(&pool[0].system, &pool[0].spectra, &wcfg)?
        } else {
            train_wgno_pool(&pool, &wcfg)?
        };
        let t0 = Instant::now();
        let a = model.infer(&pool[0].system, &pool[0].spectra)?;
        let inference_seconds = t0.elapsed().as_secs_f64();
        let rel_residual = pool[0].system.residual_of(&a)?;
        let candidate = pool[0].system.interpret(&a)?;
        let reference = pool[0].system.solve()?;
        let l2 = if scalar {
            field_rel_l2(&candidate, &reference, 64, 64)?
        } else {
            amplitude_rel_l2(&candidate, &reference)
        };
        let name = format!("wgno-seed{}.json", wcfg.seed);
        model.save(&out_dir.join(&name))?;
        report.artifacts.push(name);
        report.seed_metrics.push(SeedMetrics {
            seed: wcfg.seed,
            rel_residual: Some(rel_residual),
            field_rel_l2: Some(l2),
            final_loss: tr.loss_curve.last().copied(),
            train_seconds: Some(tr.train_seconds),
            inference_seconds: Some(inference_seconds),
        });
    }
    Ok(report)
}

fn run_infer_wgno(cfg: &RunConfig, run: &ResolvedRun, out_dir: &Path) -> Result<MetricsReport> {
    let path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("infer-wgno needs a checkpoint".into()))?;
    let model = WgnoModel::load(path)?;
    let inst = assemble_instance(&run.stack, &run.source, run.n_x, run.n_y)?;
    let t0 = Instant::now();
    let a = model.infer(&inst.system, &inst.spectra)?;
    let inference_seconds = t0.elapsed().as_secs_f64();
    let solution = inst.system.interpret(&a)?;

    let mut report = MetricsReport::new("infer-wgno", "wgno", cfg.clone());
    report.rel_residual = Some(solution.rel_residual);
    report.solve_seconds = Some(inference_seconds);
    export_orders(out_dir, &solution, &mut report)?;
    if let Some(component) = scalar_component(solution.kind) {
        let (xs, zs) = field_axes(&run.stack, &cfg.grid);
        let grid = solution.field_grid(&xs, &zs)?;
        export_field(out_dir, component, &grid, &mut report.artifacts)?;
    }
    Ok(report)
}

fn run_train_pinn(cfg: &RunConfig, run: &ResolvedRun, out_dir: &Path) -> Result<MetricsReport> {
    let mut report = MetricsReport::new("train-pinn", "pinn", cfg.clone());
    let reference = solve_stack(&run.stack, &run.source, run.n_x, run.n_y)?;
    for i in 0..cfg.seeds {
        let mut pcfg = cfg.pinn.clone();
        pcfg.seed = cfg.pinn.seed.wrapping_add(i as u64);
        let (model, pr) = train_pinn(&run.stack, &run.source, &pcfg, Some(&reference))?;
        let name = format!("pinn-seed{}.json", pcfg.seed);
        model.save(&out_dir.join(&name))?;
        report.artifacts.push(name);
        if i == 0 {
            let (xs, zs) = field_axes(&run.stack, &cfg.grid);
            let grid = FieldGrid {
                values: model.field_grid(&xs, &zs)?,
                xs,
                zs,
            };
            export_field(out_dir, "Ey", &grid, &mut report.artifacts)?;
        }
        report.seed_metrics.push(SeedMetrics {
            seed: pcfg.seed,
            rel_residual: None,
            field_rel_l2: pr.field_rel_l2,
            final_loss: Some(pr.final_loss.total),
            train_seconds: Some(pr.train_seconds),
            inference_seconds: None,
        });
    }
    Ok(report)
}

/// Checkpoint files are JSON with a `kind` discriminator; peek at it to
/// decide which model family to load.
fn checkpoint_kind(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("checkpoint parse: {e}")))?;
    value
        .get("kind")
        .and_then(|k| k.as_str())
        .map(str::to_string)
        .ok_or_else(|| Error::Config("checkpoint carries no kind tag".into()))
}

fn run_eval(cfg: &RunConfig, run: &ResolvedRun, out_dir: &Path) -> Result<MetricsReport> {
    let path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("eval needs a checkpoint".into()))?;
    let reference = solve_stack(&run.stack, &run.source, run.n_x, run.n_y)?;
    let (xs, zs) = field_axes(&run.stack, &cfg.grid);
    match checkpoint_kind(path)?.as_str() {
        "wgno" => {
            let model = WgnoModel::load(path)?;
            let inst = assemble_instance(&run.stack, &run.source, run.n_x, run.n_y)?;
            let t0 = Instant::now();
            let a = model.infer(&inst.system, &inst.spectra)?;
            let inference_seconds = t0.elapsed().as_secs_f64();
            let candidate = inst.system.interpret(&a)?;
            let mut report = MetricsReport::new("eval", "wgno", cfg.clone());
            report.rel_residual = Some(candidate.rel_residual);
            report.solve_seconds = Some(inference_seconds);
            report.field_rel_l2 = Some(match scalar_component(candidate.kind) {
                Some(component) => {
                    let grid = candidate.field_grid(&xs, &zs)?;
                    export_field(out_dir, component, &grid, &mut report.artifacts)?;
                    field_rel_l2(&candidate, &reference, cfg.grid.nx, cfg.grid.nz)?
                }
                None => {
                    report
                        .notes
                        .push("vector checkpoints compare in amplitude space".into());
                    amplitude_rel_l2(&candidate, &reference)
                }
            });
            export_orders(out_dir, &candidate, &mut report)?;
            Ok(report)
        }
        "pinn" => {
            let model = PinnModel::load(path)?;
            let mut report = MetricsReport::new("eval", "pinn", cfg.clone());
            let t0 = Instant::now();
            let grid = FieldGrid {
                values: model.field_grid(&xs, &zs)?,
                xs: xs.clone(),
                zs: zs.clone(),
            };
            report.solve_seconds = Some(t0.elapsed().as_secs_f64());
            export_field(out_dir, "Ey", &grid, &mut report.artifacts)?;
            // Same 101 x 101 midpoint sampling the training report uses, so
            // evaluating a fresh checkpoint reproduces its training metric.
            report.field_rel_l2 = Some(pinn_field_rel_l2(&model, &reference, 101, 101)?);
            Ok(report)
        }
        other => Err(Error::Config(format!(
            "checkpoint kind {other:?} is neither wgno nor pinn"
        ))),
    }
}

fn operator_kind_of(run: &ResolvedRun) -> OperatorKind {
    euvwg::matching::operator_kind(&run.source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::MaskSpec;

    fn quick_wgno() -> euvwg::wgno::WgnoConfig {
        euvwg::wgno::WgnoConfig {
            hidden: vec![16, 16],
            stage1_epochs: 40,
            stage2_epochs: 10,
            ..Default::default()
        }
    }

    fn quick_pinn() -> euvwg::pinn::PinnConfig {
        euvwg::pinn::PinnConfig {
            hidden: vec![6],
            intervals: 4,
            boundary_harmonics: 1,
            adam_epochs: 5,
            lbfgs_epochs: 1,
            lbfgs_iters: 3,
            fourier_features: 0,
            ..Default::default()
        }
    }

    fn quick_grid() -> GridSpec {
        GridSpec { nx: 8, nz: 9 }
    }

    #[test]
    fn solve_writes_field_orders_and_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::for_preset("test2", Mode::Solve);
        cfg.grid = quick_grid();
        let report = execute(&cfg, dir.path()).unwrap();
        assert!(report.rel_residual.unwrap() < 1e-12);
        let sum = report.total_reflectance.unwrap() + report.total_transmittance.unwrap();
        assert!((sum - 1.0).abs() < 1e-10, "lossless stack conserves energy");
        for name in ["orders.csv", "field.csv", "field.bin", "metrics.json"] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        assert_eq!(report.preset.as_deref(), Some("test2"));
        assert!(report.notes.iter().any(|n| n.contains("m0 = 1")));
    }

    #[test]
    fn wgno_training_saves_one_checkpoint_per_seed() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::for_preset("test1", Mode::TrainWgno);
        cfg.n_x = Some(2);
        cfg.seeds = 2;
        cfg.wgno = quick_wgno();
        let report = execute(&cfg, dir.path()).unwrap();
        assert_eq!(report.seed_metrics.len(), 2);
        assert!(dir.path().join("wgno-seed0.json").exists());
        assert!(dir.path().join("wgno-seed1.json").exists());
        let stats = report.seed_stats.unwrap();
        assert_eq!(stats.n, 2);
        assert!(stats.rel_residual.is_some());
        assert!(stats.train_seconds.is_some());
    }

    #[test]
    fn checkpoints_round_trip_through_infer_and_eval() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::for_preset("test1", Mode::TrainWgno);
        cfg.n_x = Some(2);
        cfg.wgno = quick_wgno();
        cfg.grid = quick_grid();
        execute(&cfg, dir.path()).unwrap();

        cfg.mode = Some(Mode::Eval);
        cfg.checkpoint = Some(dir.path().join("wgno-seed0.json"));
        let eval_dir = tempfile::tempdir().unwrap();
        let report = execute(&cfg, eval_dir.path()).unwrap();
        assert!(report.field_rel_l2.is_some());
        assert!(report.rel_residual.is_some());

        cfg.mode = Some(Mode::InferWgno);
        let infer_dir = tempfile::tempdir().unwrap();
        let report = execute(&cfg, infer_dir.path()).unwrap();
        assert!(infer_dir.path().join("orders.csv").exists());
        assert!(report.rel_residual.is_some());

        cfg.checkpoint = None;
        let err = match execute(&cfg, infer_dir.path()) {
            Err(e) => e.to_string(),
            Ok(_) => panic!("missing checkpoint must fail"),
        };
        assert!(err.contains("checkpoint"), "{err}");
    }

    #[test]
    fn pinn_training_reports_field_error_and_saves_models() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::for_preset("test1", Mode::TrainPinn);
        cfg.pinn = quick_pinn();
        cfg.grid = quick_grid();
        let report = execute(&cfg, dir.path()).unwrap();
        assert_eq!(report.seed_metrics.len(), 1);
        assert!(report.seed_metrics[0].field_rel_l2.is_some());
        assert!(dir.path().join("pinn-seed0.json").exists());
        assert!(dir.path().join("field.csv").exists());

        cfg.mode = Some(Mode::Eval);
        cfg.checkpoint = Some(dir.path().join("pinn-seed0.json"));
        let eval_dir = tempfile::tempdir().unwrap();
        let eval = execute(&cfg, eval_dir.path()).unwrap();
        let trained = report.seed_metrics[0].field_rel_l2.unwrap();
        let evaled = eval.field_rel_l2.unwrap();
        assert!((trained - evaled).abs() < 1e-12, "{trained} vs {evaled}");
    }

    #[test]
    fn repeated_runs_share_a_determinism_key() {
        let mut cfg = RunConfig::for_preset("test1", Mode::TrainWgno);
        cfg.n_x = Some(2);
        cfg.wgno = quick_wgno();
        let a = execute(&cfg, tempfile::tempdir().unwrap().path()).unwrap();
        let b = execute(&cfg, tempfile::tempdir().unwrap().path()).unwrap();
        assert_eq!(
            a.determinism_key().unwrap(),
            b.determinism_key().unwrap()
        );
    }

    #[test]
    fn inline_masks_run_with_an_explicit_source() {
        use euvwg::geometry::{LayerPattern, LayerSpec, PlaneWaveSource};
        use euvwg::numerics::c64;
        let stack = MaskStack::new_2d(
            vec![LayerSpec {
                thickness: 1.0,
                pattern: LayerPattern::Uniform { eps: c64(2.0, 0.0) },
            }],
            4.0,
        )
        .unwrap();
        let mut cfg = RunConfig {
            mask: MaskSpec::Inline(Box::new(stack)),
            source: Some(PlaneWaveSource::te(4.0, 0.0)),
            ..RunConfig::for_preset("test1", Mode::Solve)
        };
        cfg.grid = quick_grid();
        let dir = tempfile::tempdir().unwrap();
        let report = execute(&cfg, dir.path()).unwrap();
        assert!(report.rel_residual.unwrap() < 1e-12);
        assert!(report.preset.is_none());
    }
}
