//! Named experiment setups and config resolution.
//!
//! The three `test*` presets are dimensionless benchmark problems with
//! analytic solutions (k0 = 1, 45 degree incidence, TE). The mask presets
//! model a reflective absorber stack at 13.5 and 11.2 nm: TaBO and TaBN
//! absorber with a centered hole of width L_x/2, a thin Ru cap, and a
//! Mo/Si mirror. The `_pinn` variants shrink the stack (10 nm TaBN, one
//! Mo/Si pair) to what a field network can resolve. 3D variants replace
//! the sharp hole with a smooth pad profile and take a vector source.
//!
//! The mask period is not part of the published stack description; these
//! presets pin L_x = lambda / sin(6 deg), which makes the 6 degree source
//! commensurate with the grid at incident order m0 = 1 with no snapping.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use euvwg::geometry::{
    LayerPattern, LayerSpec, MaskStack, MaterialTable, PlaneWaveSource,
};
use euvwg::numerics::{c64, C64};
use euvwg::{Error, Result};

use crate::config::{MaskSpec, RunConfig};

/// A fully resolved run: concrete stack, source, and truncation. Field
/// exports and comparisons sample one period in x and the stack depth in z.
#[derive(Clone, Debug)]
pub struct ResolvedRun {
    pub preset: Option<String>,
    pub stack: MaskStack,
    pub source: PlaneWaveSource,
    pub n_x: usize,
    pub n_y: usize,
    pub notes: Vec<String>,
}

pub const PRESET_NAMES: [&str; 9] = [
    "test1",
    "test2",
    "test3",
    "mask2d_13.5",
    "mask2d_11.2",
    "mask2d_13.5_pinn",
    "mask2d_11.2_pinn",
    "mask3d_13.5",
    "mask3d_11.2",
];

/// Placeholder optical constants compiled into the binary; a `materials`
/// path in the config replaces them.
pub fn builtin_materials() -> MaterialTable {
    MaterialTable::parse_csv(include_str!("../data/materials.csv"))
        .expect("the built-in materials table parses")
}

fn uniform(thickness: f64, eps: C64) -> LayerSpec {
    LayerSpec {
        thickness,
        pattern: LayerPattern::Uniform { eps },
    }
}

/// The benchmark problems share one geometry scale: k_x = k_z = 1/sqrt(2)
/// (45 degrees at k0 = 1), one period L_x = 2 pi / k_x, and a height unit
/// h = pi / k_z. The stacks carry explicit vacuum padding so the region
/// every solver trains and reports on covers the same window around the
/// material: h of vacuum above each interface and h of medium below.
fn test_preset(which: usize) -> Result<ResolvedRun> {
    let kz = FRAC_1_SQRT_2;
    let l_x = TAU / kz;
    let h = PI / kz;
    let eps4 = c64(4.0, 0.0);
    let vac = || uniform(h, C64::ONE);
    let (layers, substrate) = match which {
        1 => (vec![uniform(2.0 * h, C64::ONE)], C64::ONE),
        2 => (vec![vac(), uniform(h, eps4)], eps4),
        3 => (vec![vac(), uniform(h, eps4), vac()], C64::ONE),
        _ => unreachable!(),
    };
    let stack = MaskStack::new_2d(layers, l_x)?.with_substrate(substrate)?;
    Ok(ResolvedRun {
        preset: Some(format!("test{which}")),
        stack,
        source: PlaneWaveSource::te(TAU, 45.0),
        n_x: 10,
        n_y: 0,
        notes: Vec::new(),
    })
}

struct MaskRecipe {
    wavelength_nm: f64,
    mo_nm: f64,
    si_nm: f64,
    taben_nm: f64,
    bilayers: usize,
    three_d: bool,
}

fn mask_preset(recipe: &MaskRecipe, table: &MaterialTable) -> Result<ResolvedRun> {
    let lambda = recipe.wavelength_nm;
    let theta = 6.0f64;
    let l_x = lambda / theta.to_radians().sin();
    let eps_of = |name: &str| -> Result<C64> {
        Ok(table.lookup(name, lambda)?.permittivity())
    };

    let absorber = |eps: C64| -> LayerPattern {
        if recipe.three_d {
            LayerPattern::TanhPad {
                eps_background: eps,
                eps_hole: C64::ONE,
                a: l_x / 4.0,
                b: Some(l_x / 4.0),
                d: lambda / 10.0,
            }
        } else {
            LayerPattern::HoleInX {
                eps_background: eps,
                eps_hole: C64::ONE,
                center: l_x / 2.0,
                width: l_x / 2.0,
            }
        }
    };

    let mut layers = vec![
        LayerSpec {
            thickness: 10.0,
            pattern: absorber(eps_of("TaBO")?),
        },
        LayerSpec {
            thickness: recipe.taben_nm,
            pattern: absorber(eps_of("TaBN")?),
        },
        uniform(2.0, eps_of("Ru")?),
    ];
    let (eps_mo, eps_si) = (eps_of("Mo")?, eps_of("Si")?);
    for _ in 0..recipe.bilayers {
        layers.push(uniform(recipe.mo_nm, eps_mo));
        layers.push(uniform(recipe.si_nm, eps_si));
    }

    let (stack, source, n_x, n_y) = if recipe.three_d {
        let stack = MaskStack::new_3d(layers, l_x, l_x)?.with_substrate(eps_si)?;
        let source = PlaneWaveSource::vector(lambda, theta, 0.0, [C64::ONE, C64::ZERO]);
        (stack, source, 2, 2)
    } else {
        let stack = MaskStack::new_2d(layers, l_x)?.with_substrate(eps_si)?;
        (stack, PlaneWaveSource::te(lambda, theta), 10, 0)
    };
    Ok(ResolvedRun {
        preset: None,
        stack,
        source,
        n_x,
        n_y,
        notes: Vec::new(),
    })
}

fn build_preset(name: &str, table: &MaterialTable) -> Result<ResolvedRun> {
    let mut run = match name {
        "test1" => test_preset(1)?,
        "test2" => test_preset(2)?,
        "test3" => test_preset(3)?,
        _ => {
            let (wl, taben, bilayers) = match name {
                "mask2d_13.5" | "mask3d_13.5" => (13.5, 60.0, 31),
                "mask2d_11.2" | "mask3d_11.2" => (11.2, 60.0, 31),
                "mask2d_13.5_pinn" => (13.5, 10.0, 1),
                "mask2d_11.2_pinn" => (11.2, 10.0, 1),
                _ => {
                    return Err(Error::Config(format!(
                        "unknown preset {name:?}; available: {}",
                        PRESET_NAMES.join(", ")
                    )))
                }
            };
            let (mo, si) = if wl == 13.5 { (3.0, 4.0) } else { (2.49, 3.32) };
            mask_preset(
                &MaskRecipe {
                    wavelength_nm: wl,
                    mo_nm: mo,
                    si_nm: si,
                    taben_nm: taben,
                    bilayers,
                    three_d: name.starts_with("mask3d"),
                },
                table,
            )?
        }
    };
    run.preset = Some(name.to_string());
    Ok(run)
}

/// Turn a config into a concrete run: resolve the preset or inline mask,
/// apply truncation overrides, and snap or reject incommensurate sources.
/// The notes always record the incident order so a report is self-locating
/// on the harmonic grid.
pub fn resolve(cfg: &RunConfig) -> Result<ResolvedRun> {
    let table = match &cfg.materials {
        Some(path) => MaterialTable::load(path)?,
        None => builtin_materials(),
    };
    let mut run = match &cfg.mask {
        MaskSpec::Preset(name) => build_preset(name, &table)?,
        MaskSpec::Inline(stack) => {
            let source = cfg.source.clone().ok_or_else(|| {
                Error::Config("an inline mask needs an explicit source".into())
            })?;
            ResolvedRun {
                preset: None,
                stack: (**stack).clone(),
                source,
                n_x: 5,
                n_y: if stack.l_y.is_some() { 5 } else { 0 },
                notes: Vec::new(),
            }
        }
    };
    // The config's source overrides a preset's default when given.
    if let (MaskSpec::Preset(_), Some(source)) = (&cfg.mask, &cfg.source) {
        run.source = source.clone();
    }
    if let Some(n_x) = cfg.n_x {
        run.n_x = n_x;
    }
    if let Some(n_y) = cfg.n_y {
        run.n_y = n_y;
    }

    if cfg.snap_incidence {
        let snapped = run.source.snapped_to(&run.stack)?;
        if snapped != run.source {
            run.notes.push(format!(
                "incidence snapped: theta {:.9} -> {:.9} deg, phi {:.9} -> {:.9} deg",
                run.source.theta_deg, snapped.theta_deg, run.source.phi_deg, snapped.phi_deg
            ));
        }
        run.source = snapped;
    }
    let (k0x, k0y, _) = run.source.k_components();
    let kappa_x = TAU / run.stack.l_x;
    let m0 = (k0x / kappa_x).round() as i64;
    let n0 = match run.stack.l_y {
        Some(ly) => (k0y / (TAU / ly)).round() as i64,
        None => 0,
    };
    run.notes.push(format!(
        "incident order m0 = {m0}, n0 = {n0}; kappa_x = {kappa_x:.9e}"
    ));
    Ok(run)
}
