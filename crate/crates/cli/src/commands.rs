//! Command implementations. Each writes deterministic outputs under the
//! configured output directory.

use std::fs;
use std::path::{Path, PathBuf};

use prnu_core::attack::ForgerySidecar;
use prnu_core::experiment::{
    run_cell, run_multi_cell, CellOptions, CellResult, CellSpec, Method, PooledOptions, World, WorldImages,
};
use prnu_core::fingerprint::{calibrate_threshold, detect_many};
use prnu_core::seed::{derive_path, derive_seed};
use prnu_core::sim::{generate_bench, Manifest, Role};
use prnu_core::stats::roc_auc;
use prnu_core::{estimate_fingerprint, load_raster, make_bench, save_pgm, save_raster, Fingerprint, SCHEMA_VERSION};
use serde::Serialize;

use crate::config::{ExperimentConfig, Preset};
use crate::error::CliError;
use crate::report::{
    candidate_rows, multi_rows, pooled_rows, write_csv, write_json, write_summary, CellRow, Params,
};
use crate::TriangleKind;

/// Tag deriving the experiment world seed from the root seed.
pub const WORLD_TAG: u64 = 0x57_4f52_4c44;
/// Tag of the attack seeds used by the `attack` command.
const ATTACK_TAG: u64 = 2;

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path, CliError> {
    fs::create_dir_all(&cfg.output)?;
    Ok(&cfg.output)
}

fn load_manifest(cfg: &ExperimentConfig) -> Result<(Manifest, PathBuf), CliError> {
    let path = cfg.manifest()?;
    let manifest = Manifest::load(path)?;
    for role in Role::ALL {
        if manifest.count(role) == 0 {
            return Err(CliError::Data(format!(
                "`manifest` {} lists no `{}` images",
                path.display(),
                role.as_str()
            )));
        }
    }
    let dir = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    Ok((manifest, dir))
}

fn world_from(images: WorldImages, cfg: &ExperimentConfig) -> Result<World, CliError> {
    let mut world = World::build(images, cfg.detector.pfa, cfg.denoise(), derive_seed(cfg.seed, WORLD_TAG))?;
    world.predenoise_sigma = cfg.attack.predenoise_sigma;
    Ok(world)
}

fn load_world(cfg: &ExperimentConfig) -> Result<(Manifest, World), CliError> {
    let path = cfg.manifest()?;
    load_manifest(cfg)?;
    let (manifest, images) = WorldImages::from_manifest(path)?;
    Ok((manifest, world_from(images, cfg)?))
}

/// `N` plus fitting images must fit in the owner's pool.
fn check_pool(world: &World, key: &str, n: usize, extra: usize) -> Result<(), CliError> {
    if n + extra > world.pool.len() {
        return Err(CliError::config(
            key,
            format!(
                "N={n} plus {extra} model-fitting images exceeds the owner pool of {}",
                world.pool.len()
            ),
        ));
    }
    Ok(())
}

fn side(world: &World) -> usize {
    let (w, h) = world.dims();
    w.max(h)
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let bench = cfg.dataset.bench_config(cfg.seed, Preset::Desk)?;
    let out = out_dir(cfg)?;
    let manifest = make_bench(&bench, out)?;
    write_json(&out.join("dataset.json"), &bench)?;
    println!("wrote {} images to {}", manifest.files.len(), out.join("manifest.json").display());
    Ok(())
}

#[derive(Serialize)]
struct FingerprintInfo {
    path: PathBuf,
    source_count: usize,
    width: usize,
    height: usize,
}

pub fn fingerprint(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let (manifest, dir) = load_manifest(cfg)?;
    let flats = manifest.load_images(&dir, Role::AliceFlat)?;
    let k = estimate_fingerprint(&flats, &cfg.denoise())?;
    let out = out_dir(cfg)?;
    let path = out.join("fingerprint.prnu");
    save_raster(k.raster(), &path)?;
    let (width, height) = k.dims();
    let info = FingerprintInfo {
        path: PathBuf::from("fingerprint.prnu"),
        source_count: k.source_count(),
        width,
        height,
    };
    write_summary(&out.join("fingerprint.json"), "fingerprint", cfg, &info)?;
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct IdentifyRow {
    path: PathBuf,
    role: &'static str,
    camera_id: String,
    rho: f64,
    threshold: f64,
    identified: bool,
    pfa: f64,
    sigma: f64,
    seed: u64,
}

#[derive(Serialize)]
struct IdentifySummary {
    threshold: f64,
    pfa: f64,
    negatives: usize,
    /// Fraction of each role's images attributed to the owner.
    identified_rate: Vec<(&'static str, f64)>,
    /// Owner pool images against negatives.
    roc_auc: f64,
}

pub fn identify(cfg: &ExperimentConfig, fingerprint: Option<&Path>) -> Result<(), CliError> {
    let (manifest, dir) = load_manifest(cfg)?;
    let p = cfg.denoise();
    let k = match fingerprint {
        Some(path) => Fingerprint::new(load_raster(path)?, 1)?,
        None => estimate_fingerprint(&manifest.load_images(&dir, Role::AliceFlat)?, &p)?,
    };
    let mut rows = Vec::new();
    let mut scores = Vec::new();
    for role in Role::ALL {
        let images = manifest.load_images(&dir, role)?;
        scores.push((role, detect_many(&images, &k, &p)?));
    }
    let negatives = &scores.iter().find(|(r, _)| *r == Role::Negative).expect("all roles scored").1;
    let model = calibrate_threshold(negatives, cfg.detector.pfa)?;
    let mut identified_rate = Vec::new();
    for (role, s) in &scores {
        let entries: Vec<_> = manifest.entries(*role).collect();
        for (e, &rho) in entries.iter().zip(s) {
            rows.push(IdentifyRow {
                path: e.path.clone(),
                role: role.as_str(),
                camera_id: e.camera_id.clone(),
                rho,
                threshold: model.threshold,
                identified: model.decide(rho),
                pfa: cfg.detector.pfa,
                sigma: cfg.detector.sigma,
                seed: cfg.seed,
            });
        }
        let hits = s.iter().filter(|&&rho| model.decide(rho)).count();
        identified_rate.push((role.as_str(), hits as f64 / s.len() as f64));
    }
    let pool = &scores.iter().find(|(r, _)| *r == Role::AlicePool).expect("all roles scored").1;
    let summary = IdentifySummary {
        threshold: model.threshold,
        pfa: cfg.detector.pfa,
        negatives: negatives.len(),
        identified_rate,
        roc_auc: roc_auc(pool, negatives),
    };
    let out = out_dir(cfg)?;
    write_csv(&out.join("identify.csv"), &rows)?;
    write_summary(&out.join("identify.json"), "identify", cfg, &summary)?;
    println!("t1 = {:.6}, AUC = {:.4}", summary.threshold, summary.roc_auc);
    Ok(())
}

crate::report::row! {
    AttackRow {
        target: usize,
        target_path: PathBuf,
        forgery_path: PathBuf,
        attack_seed: u64,
        overall_psnr: f64,
        rho: f64,
        threshold: f64,
        identified: bool,
        flagged_blocks: usize,
    }
}

#[derive(Serialize)]
struct AttackSidecar<'a> {
    #[serde(flatten)]
    record: ForgerySidecar,
    method: &'static str,
    #[serde(rename = "N")]
    n: usize,
    root_seed: u64,
    target_path: &'a Path,
    stolen: Vec<&'a Path>,
    rho: f64,
    identified: bool,
}

pub fn attack(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let (manifest, world) = load_world(cfg)?;
    let at = &cfg.attack;
    check_pool(&world, "attack.n", at.n, 0)?;
    if at.targets == 0 || at.targets > world.targets.len() {
        return Err(CliError::config(
            "attack.targets",
            format!("must lie in 1..={} (targets in manifest)", world.targets.len()),
        ));
    }
    let roles = world.draw_roles(0, at.n, 0)?;
    let stolen = world.stolen_set(&roles.stolen)?;
    let pool_paths: Vec<&Path> = manifest.entries(Role::AlicePool).map(|e| e.path.as_path()).collect();
    let target_paths: Vec<&Path> = manifest.entries(Role::EveTarget).map(|e| e.path.as_path()).collect();
    let method = at.method();
    let out = out_dir(cfg)?;
    fs::create_dir_all(out.join("forgeries"))?;
    let mut rows = Vec::new();
    for (t, (target, &target_path)) in world.targets.iter().zip(&target_paths).take(at.targets).enumerate() {
        let attack_seed = derive_path(cfg.seed, &[ATTACK_TAG, t as u64]);
        let forgery = world.forge(method, target, &stolen, at.a, attack_seed)?;
        let name = PathBuf::from("forgeries").join(format!("forgery_{t:04}.pgm"));
        save_pgm(&forgery.record.forged, out.join(&name))?;
        let identified = world.detector.decide(forgery.rho);
        let sidecar = AttackSidecar {
            record: forgery.record.sidecar(),
            method: Params::new(method, side(&world), at.n, at.a, cfg.seed).method,
            n: at.n,
            root_seed: cfg.seed,
            target_path,
            stolen: roles.stolen.iter().map(|&i| pool_paths[i]).collect(),
            rho: forgery.rho,
            identified,
        };
        write_json(&out.join(name.with_extension("json")), &sidecar)?;
        rows.push(crate::report::with_params!(
            Params::new(method, side(&world), at.n, at.a, cfg.seed),
            AttackRow {
                target: t,
                target_path: target_path.to_path_buf(),
                forgery_path: name,
                attack_seed,
                overall_psnr: forgery.record.overall_psnr,
                rho: forgery.rho,
                threshold: world.detector.threshold,
                identified,
                flagged_blocks: forgery.record.flagged_blocks(),
            }
        ));
    }
    write_csv(&out.join("attack.csv"), &rows)?;
    println!("wrote {} forgeries to {}", rows.len(), out.join("forgeries").display());
    Ok(())
}

#[derive(Serialize)]
struct ForgerySummary {
    forgery: usize,
    target: usize,
    attack_seed: u64,
    rho: f64,
    identified: bool,
    overall_psnr: f64,
    lambda: f64,
    eta: f64,
    model_mean: f64,
    model_sd: f64,
    t2: f64,
    p_d: f64,
    max_statistic: f64,
    null_flags: usize,
    pooled_p_d: Vec<f64>,
}

#[derive(Serialize)]
struct CellSummary {
    row: CellRow,
    null_flags: usize,
    null_evaluations: usize,
    pooled_ratios: Vec<f64>,
    pooled_p_d: Vec<f64>,
    forgeries: Vec<ForgerySummary>,
}

fn cell_summary(cell: &CellResult, side: usize, seed: u64) -> CellSummary {
    let (null_flags, null_evaluations) = cell.null_flag_rate();
    CellSummary {
        row: CellRow::new(cell, side, seed),
        null_flags,
        null_evaluations,
        pooled_ratios: cell.options.pooled.as_ref().map_or_else(Vec::new, |p| p.ratios.clone()),
        pooled_p_d: cell.pooled_p_d(),
        forgeries: cell
            .outcomes
            .iter()
            .map(|o| ForgerySummary {
                forgery: o.forgery,
                target: o.target,
                attack_seed: o.attack_seed,
                rho: o.rho,
                identified: o.identified,
                overall_psnr: o.overall_psnr,
                lambda: o.fit.lambda,
                eta: o.fit.eta,
                model_mean: o.model.mean,
                model_sd: o.model.sd,
                t2: o.t2,
                p_d: o.p_d,
                max_statistic: o.max_statistic,
                null_flags: o.null_flags(),
                pooled_p_d: o.pooled_p_d.clone(),
            })
            .collect(),
    }
}

fn cell_options(cfg: &ExperimentConfig, pooled: bool) -> CellOptions {
    CellOptions {
        forgeries: cfg.triangle.forgeries,
        fit_count: cfg.triangle.fit_count,
        triangle_pfa: cfg.triangle.pfa,
        null_candidates: cfg.triangle.null_candidates,
        pooled: pooled.then(|| PooledOptions {
            ratios: cfg.pooled.ratios.clone(),
            k: cfg.pooled.k,
            repetitions: cfg.pooled.repetitions,
        }),
    }
}

pub fn triangle(cfg: &ExperimentConfig, kind: TriangleKind) -> Result<(), CliError> {
    let (_, world) = load_world(cfg)?;
    let at = &cfg.attack;
    check_pool(&world, "attack.n", at.n, cfg.triangle.fit_count)?;
    let spec = CellSpec {
        method: at.method(),
        n: at.n,
        a: at.a,
    };
    let side = side(&world);
    let out = out_dir(cfg)?;
    match kind {
        TriangleKind::Individual => {
            let cell = run_cell(&world, spec, &cell_options(cfg, false))?;
            write_csv(&out.join("triangle_individual.csv"), &candidate_rows(&cell, side, cfg.seed))?;
            let summary = cell_summary(&cell, side, cfg.seed);
            write_summary(&out.join("triangle_individual.json"), "triangle individual", cfg, &summary)?;
            println!("P_D = {:.4}, max statistic = {:.6}", cell.p_d(), cell.max_statistic());
        }
        TriangleKind::Pooled => {
            let cell = run_cell(&world, spec, &cell_options(cfg, true))?;
            write_csv(&out.join("triangle_pooled.csv"), &pooled_rows(&cell, side, cfg.seed, true))?;
            let summary = cell_summary(&cell, side, cfg.seed);
            write_summary(&out.join("triangle_pooled.json"), "triangle pooled", cfg, &summary)?;
            println!("pooled P_D over N/N_c {:?}: {:?}", cfg.pooled.ratios, cell.pooled_p_d());
        }
        TriangleKind::Multi => {
            let res = run_multi_cell(&world, spec, cfg.triangle.forgeries, cfg.triangle.fit_count, cfg.triangle.pfa)?;
            write_csv(&out.join("triangle_multi.csv"), &multi_rows(&res, side, cfg.seed))?;
            write_summary(&out.join("triangle_multi.json"), "triangle multi", cfg, &res)?;
            println!("mean P_D = {:.4}", res.mean_p_d);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchSummary {
    schema_version: u32,
    dataset: String,
    threshold: f64,
    cells: Vec<CellRow>,
    pooled: Vec<crate::report::PooledRow>,
    multi: Vec<crate::report::MultiRow>,
    l_sweep: Vec<CellRow>,
    /// Largest interior P_D(l) is at least both endpoint values.
    l_sweep_interior_max: bool,
}

/// Whether the largest interior value is at least both endpoints.
pub fn interior_max(values: &[f64]) -> bool {
    if values.len() < 3 {
        return false;
    }
    let inner = values[1..values.len() - 1].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    inner >= values[0] && inner >= values[values.len() - 1]
}

pub fn bench(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let (world, dataset) = match &cfg.manifest {
        Some(path) => (load_world(cfg)?.1, path.display().to_string()),
        None => {
            let bc = cfg.dataset.bench_config(cfg.seed, Preset::Attack)?;
            let data = generate_bench(&bc)?;
            (world_from(WorldImages::from_bench(&data), cfg)?, "in-memory simulation".to_string())
        }
    };
    let b = &cfg.bench;
    let side = side(&world);
    let fit = cfg.triangle.fit_count;
    for &n in &b.n {
        check_pool(&world, "bench.n", n, fit)?;
    }
    check_pool(&world, "bench.focus_n", b.focus_n, fit)?;
    let out = out_dir(cfg)?;

    // Identification and individual-test grid.
    let mut methods = vec![Method::Conventional];
    methods.extend(b.r.iter().map(|&r| Method::Block { l: b.l, r }));
    let plain = cell_options(cfg, false);
    let mut cells = Vec::new();
    for &method in &methods {
        for &n in &b.n {
            for &a in &b.a {
                log::info!("cell {} N={n} A={a}", method.label());
                let cell = run_cell(&world, CellSpec { method, n, a }, &plain)?;
                cells.push(CellRow::new(&cell, side, cfg.seed));
            }
        }
    }
    write_csv(&out.join("bench_cells.csv"), &cells)?;

    // Pooled and multiple-forgeries tests at the focus point.
    let focus = |method| CellSpec {
        method,
        n: b.focus_n,
        a: b.focus_a,
    };
    let pair = [
        Method::Conventional,
        Method::Block {
            l: b.l,
            r: cfg.attack.r,
        },
    ];
    let mut pooled = Vec::new();
    let mut multi = Vec::new();
    for method in pair {
        log::info!("pooled and multi {}", method.label());
        let cell = run_cell(&world, focus(method), &cell_options(cfg, true))?;
        pooled.extend(pooled_rows(&cell, side, cfg.seed, false));
        let res = run_multi_cell(&world, focus(method), b.multi_forgeries, fit, cfg.triangle.pfa)?;
        multi.extend(multi_rows(&res, side, cfg.seed));
    }
    write_csv(&out.join("bench_pooled.csv"), &pooled)?;
    write_csv(&out.join("bench_multi.csv"), &multi)?;

    // Block-size sweep.
    let mut l_sweep = Vec::new();
    for &l in &b.l_sweep {
        log::info!("l-sweep l={l}");
        let cell = run_cell(&world, focus(Method::Block { l, r: cfg.attack.r }), &plain)?;
        l_sweep.push(CellRow::new(&cell, side, cfg.seed));
    }
    write_csv(&out.join("bench_lsweep.csv"), &l_sweep)?;

    let summary = BenchSummary {
        schema_version: SCHEMA_VERSION,
        dataset,
        threshold: world.detector.threshold,
        l_sweep_interior_max: interior_max(&l_sweep.iter().map(|r| r.p_d).collect::<Vec<_>>()),
        cells,
        pooled,
        multi: multi.into_iter().filter(|m| m.forgery.is_none()).collect(),
        l_sweep,
    };
    write_summary(&out.join("bench_summary.json"), "bench", cfg, &summary)?;
    println!("wrote bench reports to {}", out.display());
    Ok(())
}
