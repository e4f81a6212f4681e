use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use helmscat_core::{
    analytic_disk_field, measure, plane_wave, reconstruct_fbs, relative_error, solve_lis, AcquisitionGeometry,
    Complex64, DataFidelity, DiskScene, GreenKernel, Grid2D, HelmholtzModel, KrylovConfig, MeasurementSet, MgConfig,
    ModelKind, RealField2D, Reconstruction, ReconstructionConfig, Scene, SensorOperator, SolveReport, SolverConfig,
};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::formats::{bench_csv, history_csv, measurements_csv, parse_measurements, reports_csv, BenchRow, FieldFile};

/// Files produced by a command, written only once the command succeeds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outputs {
    pub files: Vec<(String, Vec<u8>)>,
    pub warnings: Vec<String>,
}

impl Outputs {
    fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }

    /// Writes every file into `dir`, removing what was written on failure.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
        let mut staged = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let mut tmp = tempfile::NamedTempFile::new_in(dir)
                .map_err(|e| CliError::io(format!("staging {name}"), e))?;
            std::io::Write::write_all(&mut tmp, bytes).map_err(|e| CliError::io(format!("writing {name}"), e))?;
            staged.push((tmp, dir.join(name)));
        }
        let mut written: Vec<PathBuf> = Vec::with_capacity(staged.len());
        for (tmp, path) in staged {
            if let Err(e) = tmp.persist(&path) {
                for p in &written {
                    let _ = std::fs::remove_file(p);
                }
                return Err(CliError::io(format!("writing {}", path.display()), e.error));
            }
            written.push(path);
        }
        Ok(written)
    }
}

/// Object placed in the region of interest.
#[derive(Clone, Debug, PartialEq)]
pub enum SceneKind {
    Disk { radius: f64, eta: f64, center: [f64; 2] },
    Phantom { eta: f64, inclusion_eta: f64 },
    File(PathBuf),
}

impl SceneKind {
    pub fn from_config(cfg: &RunConfig, wavelength: f64) -> Result<Option<Self>, CliError> {
        let Some(kind) = cfg.raw("scene") else {
            return Ok(None);
        };
        let scene = match kind {
            "disk" => SceneKind::Disk {
                radius: cfg.get_or("disk_radius", 1.25 * wavelength)?,
                eta: cfg.get_or("disk_eta", 2.2)?,
                center: [cfg.get_or("disk_center_x", 0.0)?, cfg.get_or("disk_center_y", 0.0)?],
            },
            "phantom" => SceneKind::Phantom {
                eta: cfg.get_or("phantom_eta", 1.05)?,
                inclusion_eta: cfg.get_or("phantom_inclusion_eta", 1.1)?,
            },
            "file" => SceneKind::File(cfg.require::<String>("scene_file")?.into()),
            other => return Err(CliError::config(format!("unknown scene `{other}` (disk, phantom or file)"))),
        };
        Ok(Some(scene))
    }

    /// Refractive index sampled on `grid`; `eta_b` outside the object.
    pub fn index_map(&self, grid: &Grid2D, eta_b: f64) -> Result<RealField2D, CliError> {
        let side = grid.side_length();
        let field = match self {
            SceneKind::Disk { radius, eta, center } => RealField2D::from_fn(*grid, |x| {
                if (x[0] - center[0]).hypot(x[1] - center[1]) < *radius {
                    *eta
                } else {
                    eta_b
                }
            })?,
            SceneKind::Phantom { eta, inclusion_eta } => RealField2D::from_fn(*grid, |x| {
                let centre = [grid.origin()[0] + 0.5 * side, grid.origin()[1] + 0.5 * side];
                let (dx, dy) = (x[0] - centre[0], x[1] - centre[1]);
                if (dx - 0.1 * side).hypot(dy + 0.05 * side) < 0.125 * side {
                    *inclusion_eta
                } else if dx.hypot(dy) < 0.3 * side {
                    *eta
                } else {
                    eta_b
                }
            })?,
            SceneKind::File(path) => {
                let file = FieldFile::read(path)?;
                let s = grid.points_per_side();
                if file.rows as usize != s || file.cols as usize != s {
                    return Err(CliError::config(format!(
                        "scene file is {}x{}, grid is {s}x{s}",
                        file.rows, file.cols
                    )));
                }
                match file.data {
                    crate::formats::FieldData::Real(v) => RealField2D::from_vec(*grid, v)?,
                    crate::formats::FieldData::Complex(_) => {
                        return Err(CliError::config("scene file must hold a real index map"))
                    }
                }
            }
        };
        Ok(field)
    }
}

fn grid_from(cfg: &RunConfig, points_key: &str) -> Result<Grid2D, CliError> {
    let points: usize = match points_key {
        "points" => cfg.require("points")?,
        key => cfg.get_or(key, cfg.require("points")?)?,
    };
    Ok(Grid2D::centered(points, cfg.require("side")?)?)
}

fn scene_on(cfg: &RunConfig, grid: Grid2D) -> Result<Scene, CliError> {
    Ok(Scene::new(grid, cfg.require("wavelength")?, cfg.get_or("eta_b", 1.0)?)?)
}

fn krylov_from(cfg: &RunConfig) -> Result<KrylovConfig, CliError> {
    let k = KrylovConfig {
        tolerance: cfg.get_or("tolerance", 1e-6)?,
        max_iter: cfg.get_or("max_iter", 500)?,
    };
    k.validate()?;
    Ok(k)
}

fn solver_from(cfg: &RunConfig, abl_key: &str, levels_key: &str) -> Result<SolverConfig, CliError> {
    let abl_default: usize = cfg.get_or("abl_points", 32)?;
    let levels_default: usize = cfg.get_or("mg_levels", 3)?;
    let cycle_type = match cfg.raw("cycle").unwrap_or("V") {
        "V" | "v" => 1,
        "W" | "w" => 2,
        other => return Err(CliError::config(format!("cycle must be V or W, got `{other}`"))),
    };
    let mg = MgConfig {
        levels: cfg.get_or(levels_key, levels_default)?,
        nu1: cfg.get_or("nu1", 1)?,
        nu2: cfg.get_or("nu2", 1)?,
        omega: cfg.get_or("omega", 0.8)?,
        cycle_type,
    };
    mg.validate()?;
    Ok(SolverConfig {
        abl_points: cfg.get_or(abl_key, abl_default)?,
        beta: cfg.get_or("beta", 0.15)?,
        mg,
        krylov: krylov_from(cfg)?,
    })
}

fn geometry_from(cfg: &RunConfig, side: f64) -> Result<AcquisitionGeometry, CliError> {
    let sensors: usize = cfg.get_or("sensors", 360)?;
    Ok(AcquisitionGeometry::circular(
        cfg.get_or("views", 1)?,
        sensors,
        cfg.get_or("sensor_radius", side)?,
        cfg.get_or("active_sensors", sensors.div_ceil(3))?,
        [0.0, 0.0],
    )?)
}

fn model_kind(cfg: &RunConfig) -> Result<ModelKind, CliError> {
    match cfg.raw("model").unwrap_or("mgh") {
        "mgh" | "MGH" => Ok(ModelKind::Mgh),
        "lis" | "LiS" => Ok(ModelKind::Lis),
        other => Err(CliError::config(format!("model must be mgh or lis, got `{other}`"))),
    }
}

/// Data of every view together with the solver reports.
pub fn simulate_data(cfg: &RunConfig) -> Result<(AcquisitionGeometry, MeasurementSet, Vec<SolveReport>, Vec<String>), CliError> {
    let grid = grid_from(cfg, "points")?;
    let scene = scene_on(cfg, grid)?;
    let kind = SceneKind::from_config(cfg, scene.wavelength)?
        .ok_or_else(|| CliError::config("missing required key `scene`"))?;
    let solver = solver_from(cfg, "abl_points", "mg_levels")?;
    let geometry = geometry_from(cfg, grid.side_length())?;
    let model = model_kind(cfg)?;
    let f = scene.potential_from_index(&kind.index_map(&grid, scene.eta_b)?)?;
    let sensors = SensorOperator::new(&grid, geometry.sensors(), scene.k0(), scene.eta_b)?;
    let mut warnings = Vec::new();
    let results: Vec<Result<(Vec<Complex64>, SolveReport), helmscat_core::Error>> = match model {
        ModelKind::Mgh => {
            let helm = HelmholtzModel::new(&scene, &f, &solver)?;
            warnings.extend(helm.hierarchy().resolution_warning());
            (0..geometry.num_views())
                .into_par_iter()
                .map(|q| {
                    let (u, rep) = helm.total_field(geometry.direction(q))?;
                    Ok((measure(&sensors, geometry.active(q), &f, u.values()), rep))
                })
                .collect()
        }
        ModelKind::Lis => {
            let kernel = GreenKernel::new(grid, scene.k0(), scene.eta_b)?;
            (0..geometry.num_views())
                .into_par_iter()
                .map(|q| helmscat_core::forward_lis(&scene, &geometry, &sensors, &kernel, &f, q, &solver.krylov))
                .collect()
        }
    };
    let mut views = Vec::with_capacity(results.len());
    let mut reports = Vec::with_capacity(results.len());
    for r in results {
        let (y, rep) = r.map_err(CliError::Solver)?;
        views.push(y);
        reports.push(rep);
    }
    Ok((geometry, MeasurementSet { views }, reports, warnings))
}

pub fn simulate(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let (geometry, data, reports, warnings) = simulate_data(cfg)?;
    let mut out = Outputs {
        warnings,
        ..Outputs::default()
    };
    out.add("measurements.csv", measurements_csv(&data, &geometry));
    out.add("reports.csv", reports_csv(&reports));
    Ok(out)
}

/// Result of a reconstruction run.
#[derive(Clone, Debug)]
pub struct ReconstructRun {
    pub scene: Scene,
    pub reconstruction: Reconstruction,
    pub eta: RealField2D,
    pub eta_true: Option<RealField2D>,
}

pub fn reconstruct_run(cfg: &RunConfig) -> Result<ReconstructRun, CliError> {
    let data_grid = grid_from(cfg, "points")?;
    let recon_grid = grid_from(cfg, "recon_points")?;
    let scene = scene_on(cfg, recon_grid)?;
    let kind = SceneKind::from_config(cfg, scene.wavelength)?;
    let geometry = geometry_from(cfg, recon_grid.side_length())?;
    let data = match cfg.raw("measurements") {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {path}"), e))?;
            parse_measurements(&text, &geometry, path)?
        }
        None => {
            if kind.is_none() {
                return Err(CliError::config("reconstruction needs `measurements` or `scene`"));
            }
            simulate_data(cfg)?.1
        }
    };
    let eta_true = match &kind {
        Some(SceneKind::File(_)) if recon_grid != data_grid => None,
        Some(k) => Some(k.index_map(&recon_grid, scene.eta_b)?),
        None => None,
    };
    let solver = solver_from(cfg, "recon_abl_points", "recon_mg_levels")?;
    let sensors = SensorOperator::new(&recon_grid, geometry.sensors(), scene.k0(), scene.eta_b)?;
    let views = geometry.num_views();
    let rc = ReconstructionConfig {
        gamma: cfg.get_or("gamma", 9e-4)?,
        tau: cfg.get_or("tau", 4.5e-3)?,
        iterations: cfg.get_or("iterations", 250)?,
        subset_size: cfg.get_or("subset_size", views.min(6))?,
        seed: cfg.get_or("seed", 0)?,
        inner_prox_iterations: cfg.get_or("inner_prox_iterations", 50)?,
    };
    rc.validate(views)?;
    let problem = DataFidelity::new(scene, geometry, sensors, data, solver)?;
    let reconstruction =
        reconstruct_fbs(&problem, &rc, None, eta_true.as_ref()).map_err(|e| CliError::Solver(e.source))?;
    let eta = scene.index_from_potential(&reconstruction.potential)?;
    Ok(ReconstructRun {
        scene,
        reconstruction,
        eta,
        eta_true,
    })
}

pub fn reconstruct(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let timing = cfg.flag("timing")?;
    let run = reconstruct_run(cfg)?;
    let s = run.scene.grid.points_per_side() as u32;
    let mut out = Outputs::default();
    out.add("eta.hsf", FieldFile::real(s, s, run.eta.values().to_vec()).encode());
    out.add(
        "potential.hsf",
        FieldFile::real(s, s, run.reconstruction.potential.values().to_vec()).encode(),
    );
    out.add("history.csv", history_csv(&run.reconstruction.history.entries, timing));
    Ok(out)
}

/// One disk solve per (radius, contrast, model), in sweep order.
pub fn bench_rows(cfg: &RunConfig) -> Result<Vec<BenchRow>, CliError> {
    let grid = grid_from(cfg, "points")?;
    let scene = scene_on(cfg, grid)?;
    let solver = solver_from(cfg, "abl_points", "mg_levels")?;
    let timing = cfg.flag("timing")?;
    let eb = scene.eta_b;
    let default_eta: f64 = cfg.get_or("disk_eta", 2.2)?;
    let contrasts = cfg
        .list::<f64>("contrasts")?
        .unwrap_or_else(|| vec![(default_eta * default_eta) / (eb * eb) - 1.0]);
    let radii = cfg
        .list::<f64>("radii")?
        .unwrap_or(vec![cfg.get_or("disk_radius", 1.25 * scene.wavelength)?]);
    let mut models = Vec::new();
    for m in cfg.raw("models").unwrap_or("lis,mgh").split(',') {
        models.push(match m.trim() {
            "lis" | "LiS" => ModelKind::Lis,
            "mgh" | "MGH" => ModelKind::Mgh,
            other => return Err(CliError::config(format!("unknown model `{other}` in models"))),
        });
    }
    let direction = [0.0, -1.0];
    let k2 = scene.k0().powi(2);
    let kernel = if models.contains(&ModelKind::Lis) {
        Some(GreenKernel::new(grid, scene.k0(), eb)?)
    } else {
        None
    };
    let u_in = plane_wave(&grid, direction, scene.k0(), eb, scene.u0);
    let mut rows = Vec::new();
    for &radius in &radii {
        for &contrast in &contrasts {
            if !(contrast > -1.0) {
                return Err(CliError::config(format!("contrast must exceed -1, got {contrast}")));
            }
            let eta = eb * (1.0 + contrast).sqrt();
            let disk = DiskScene::new(radius, eta, eb, scene.wavelength, [0.0, 0.0])?.with_amplitude(scene.u0);
            let reference = analytic_disk_field(&disk, &grid, direction)?;
            let f = RealField2D::from_fn(grid, |x| {
                if x[0].hypot(x[1]) < radius {
                    k2 * (eta * eta - eb * eb)
                } else {
                    0.0
                }
            })?;
            for &model in &models {
                let start = Instant::now();
                let (u, report) = match model {
                    ModelKind::Mgh => HelmholtzModel::new(&scene, &f, &solver)?
                        .total_field(direction)
                        .map_err(CliError::Solver)?,
                    ModelKind::Lis => {
                        let k = kernel.as_ref().expect("kernel built when LiS is requested");
                        let (u, report) = solve_lis(k, &f, &u_in, &solver.krylov)?;
                        if !report.converged {
                            return Err(CliError::Solver(helmscat_core::Error::NotConverged { report }));
                        }
                        (u, report)
                    }
                };
                let seconds = start.elapsed().as_secs_f64();
                rows.push(BenchRow {
                    contrast,
                    radius,
                    model: match model {
                        ModelKind::Mgh => "MGH",
                        ModelKind::Lis => "LiS",
                    },
                    iterations: report.iterations,
                    wall_seconds: timing.then_some(seconds),
                    relative_error: relative_error(u.values(), reference.values())?,
                });
            }
        }
    }
    Ok(rows)
}

pub fn bench(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let rows = bench_rows(cfg)?;
    let mut out = Outputs::default();
    out.add("bench.csv", bench_csv(&rows));
    Ok(out)
}
