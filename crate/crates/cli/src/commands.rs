use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use modalem::fit::{select_model, FitConfig, FITTABLE_MODELS};
use modalem::mixture::io::{read_model, write_model, MODEL_FORMAT_VERSION};
use modalem::postprocess::{
    attraction_partition_grid, density_threshold, lattice_nodes, modal_cluster_detailed, ClusterConfig, Denoise,
    REASSIGNMENT_RULE,
};
use modalem::synth::{gauss_skewnormal, separated_gaussians, Sample};
use modalem::{GaussianMixture, MemConfig, ModelName};
use serde_json::{json, Value};

use crate::table::{coordinate_header, fmt_f64, read_matrix, CsvOut};
use crate::CliError;
use crate::{
    Cli, ClusterArgs, Command, DenoiseArg, DensityGridArgs, FitArgs, GridArgs, MemArgs, PartitionGridArgs, SynthArgs,
};

/// Version stamped into every JSON output.
const FORMAT_VERSION: u32 = 1;

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::input("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::compute(format!("thread pool: {e}")))?;
    }
    fs::create_dir_all(&cli.out_dir).map_err(|e| CliError::input(format!("{}: {e}", cli.out_dir.display())))?;
    let ctx = Context {
        out_dir: cli.out_dir.clone(),
        started: Instant::now(),
    };
    match &cli.command {
        Command::Fit(a) => fit(&ctx, a),
        Command::Cluster(a) => cluster(&ctx, a),
        Command::DensityGrid(a) => density_grid(&ctx, a),
        Command::PartitionGrid(a) => partition_grid(&ctx, a),
        Command::Synth(a) => synth(&ctx, a),
    }
}

struct Context {
    out_dir: PathBuf,
    started: Instant,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn write_json(&self, name: &str, value: &Value) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::compute(e.to_string()))?;
        text.push('\n');
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }

    /// Run record: everything that affects the outputs plus timing.
    fn manifest(
        &self,
        subcommand: &str,
        inputs: Value,
        settings: Value,
        results: Value,
        warnings: Vec<String>,
    ) -> Value {
        json!({
            "format_version": FORMAT_VERSION,
            "subcommand": subcommand,
            "software": {"name": "modalem", "version": modalem::VERSION},
            "command_line": std::env::args().skip(1).collect::<Vec<_>>(),
            "inputs": inputs,
            "settings": settings,
            "threads": rayon::current_num_threads(),
            "results": results,
            "warnings": warnings,
            "wall_time_seconds": self.started.elapsed().as_secs_f64(),
        })
    }
}

fn load_model(path: &Path) -> Result<GaussianMixture, CliError> {
    if !path.exists() {
        return Err(CliError::input(format!("{}: no such file", path.display())));
    }
    read_model(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn load_data(path: &Path) -> Result<nalgebra::DMatrix<f64>, CliError> {
    if !path.exists() {
        return Err(CliError::input(format!("{}: no such file", path.display())));
    }
    read_matrix(path)
}

fn parse_components(spec: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::input(format!("--components: cannot parse {spec:?}"));
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim) {
        if let Some((lo, hi)) = part.split_once(':') {
            let lo: usize = lo.trim().parse().map_err(|_| bad())?;
            let hi: usize = hi.trim().parse().map_err(|_| bad())?;
            if lo > hi {
                return Err(bad());
            }
            out.extend(lo..=hi);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn parse_models(spec: &str) -> Result<Vec<ModelName>, CliError> {
    let mut out = Vec::new();
    for name in spec.split(',').map(str::trim) {
        let m: ModelName = name
            .parse()
            .map_err(|_| CliError::input(format!("--models: unknown model {name:?}")))?;
        if !FITTABLE_MODELS.contains(&m) {
            return Err(CliError::input(format!(
                "--models: {m} cannot be fitted (supported: EII, VII, EEI, VVI, EEE, VVV)"
            )));
        }
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

fn parse_floats(flag: &str, spec: &str, count: usize) -> Result<Vec<f64>, CliError> {
    let vals: Result<Vec<f64>, _> = spec.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if v.len() == count && v.iter().all(|x| x.is_finite()) => Ok(v),
        _ => Err(CliError::input(format!(
            "{flag}: expected {count} comma-separated numbers, got {spec:?}"
        ))),
    }
}

fn fit(ctx: &Context, a: &FitArgs) -> Result<(), CliError> {
    let x = load_data(&a.data)?;
    let config = FitConfig {
        components: parse_components(&a.components)?,
        models: parse_models(&a.models)?,
        tolerance: a.em_tol,
        max_iterations: a.em_max_iter,
        restarts: a.restarts,
        seed: a.seed,
    };
    config.validate()?;
    let sel = select_model(&x, &config)?;
    let best = &sel.best;
    write_model(ctx.path("model.json"), &best.mixture, true)?;

    let mut warnings = Vec::new();
    if !best.converged {
        warnings.push(format!(
            "selected EM run stopped at the iteration cap ({})",
            config.max_iterations
        ));
    }
    let failed = sel.table.iter().filter(|s| s.error.is_some()).count();
    if failed > 0 {
        warnings.push(format!("{failed} (G, model) pairs failed to fit"));
    }
    let selected = json!({
        "model": best.mixture.model(),
        "G": best.mixture.n_components(),
        "bic": best.bic,
        "log_likelihood": best.log_likelihood,
        "n_parameters": best.n_parameters,
        "converged": best.converged,
        "iterations": best.iterations,
    });
    let manifest = ctx.manifest(
        "fit",
        json!({"data": a.data, "n": x.nrows(), "d": x.ncols()}),
        json!(config),
        json!({"selected": selected.clone()}),
        warnings.clone(),
    );
    ctx.write_json(
        "fit_report.json",
        &json!({
            "format_version": FORMAT_VERSION,
            "model_format_version": MODEL_FORMAT_VERSION,
            "selected": selected,
            "table": sel.table,
            "seed": config.seed,
            "warnings": warnings,
            "manifest": manifest,
        }),
    )
}

fn cluster_config(m: &MemArgs, record_paths: bool) -> Result<ClusterConfig, CliError> {
    let config = ClusterConfig {
        mem: MemConfig {
            tolerance: m.epsilon,
            max_iterations: m.max_iter,
            damping: !m.no_damping,
            damping_rate: m.beta,
            record_paths,
        },
        merge_tol: m.merge_tol,
        denoise: match m.denoise {
            DenoiseArg::None => Denoise::None,
            DenoiseArg::Gaussian => Denoise::Gaussian,
            DenoiseArg::Databox => Denoise::DataBox,
            DenoiseArg::Pcabox => Denoise::PcaBox,
            DenoiseArg::Min => Denoise::Min,
        },
        alpha: m.alpha,
    };
    config.mem.validate()?;
    if let Some(t) = m.merge_tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::input(format!("--merge-tol must be positive, got {t}")));
        }
    }
    if !(m.alpha > 0.0 && m.alpha < 1.0) {
        return Err(CliError::input(format!("--alpha must lie in (0, 1), got {}", m.alpha)));
    }
    Ok(config)
}

fn mem_settings(config: &ClusterConfig, merge_tol: f64) -> Value {
    json!({
        "epsilon": config.mem.tolerance,
        "max_iter": config.mem.max_iterations,
        "damping": config.mem.damping,
        "beta": config.mem.damping_rate,
        "merge_tol": config.merge_tol,
        "merge_tol_resolved": merge_tol,
        "denoise": config.denoise,
        "alpha": config.alpha,
        "reassignment_rule": REASSIGNMENT_RULE,
    })
}

fn one_based(label: usize) -> String {
    (label + 1).to_string()
}

fn iteration_field(at: Option<usize>) -> String {
    at.map(|t| t.to_string()).unwrap_or_default()
}

fn cluster(ctx: &Context, a: &ClusterArgs) -> Result<(), CliError> {
    let mixture = load_model(&a.model)?;
    let x = load_data(&a.data)?;
    if x.ncols() != mixture.dim() {
        return Err(CliError::input(format!(
            "dimension mismatch: model has d = {}, {} has {} columns",
            mixture.dim(),
            a.data.display(),
            x.ncols()
        )));
    }
    let config = cluster_config(&a.mem, a.paths)?;
    let (partition, mem) = modal_cluster_detailed(&mixture, &x, &config)?;
    let d = mixture.dim();

    let mut csv = CsvOut::new(&["row".into(), "label".into(), "converged_iteration".into()]);
    for (i, &label) in partition.labels.iter().enumerate() {
        csv.row([
            (i + 1).to_string(),
            one_based(label),
            iteration_field(mem.converged_at[i]),
        ]);
    }
    csv.write(&ctx.path("partition.csv"))?;

    let mut modes = Vec::new();
    for r in 0..partition.modes.nrows() {
        modes.push(json!({
            "label": r + 1,
            "location": partition.modes.row(r).iter().collect::<Vec<_>>(),
            "log_density": partition.mode_log_density[r],
            "retained": true,
        }));
    }
    for r in 0..partition.dropped_modes.nrows() {
        modes.push(json!({
            "label": null,
            "location": partition.dropped_modes.row(r).iter().collect::<Vec<_>>(),
            "log_density": partition.dropped_log_density[r],
            "retained": false,
        }));
    }
    let volume = partition.volume.as_ref();
    ctx.write_json(
        "modes.json",
        &json!({
            "format_version": FORMAT_VERSION,
            "d": d,
            "n_retained": partition.modes.nrows(),
            "n_dropped": partition.dropped_modes.nrows(),
            "modes": modes,
            "log_volume_used": partition.log_volume_used(),
            "volume_method": volume.map(|v| v.method),
            "alpha": volume.and_then(|v| v.alpha),
            "log_density_threshold": volume.map(density_threshold),
            "all_below_threshold": partition.all_below_threshold,
            "merge_tol": partition.merge_tol,
            "reassignment_rule": REASSIGNMENT_RULE,
            "reassigned_points": partition.reassigned,
        }),
    )?;

    if let Some(paths) = &mem.paths {
        let mut header = vec!["t".to_string(), "row".to_string()];
        header.extend(coordinate_header(d));
        let mut csv = CsvOut::new(&header);
        for (t, step) in paths.iter().enumerate() {
            for i in 0..step.nrows() {
                let mut fields = vec![t.to_string(), (i + 1).to_string()];
                fields.extend(step.row(i).iter().map(|&v| fmt_f64(v)));
                csv.row(fields);
            }
        }
        csv.write(&ctx.path("paths.csv"))?;
    }

    let mut warnings = Vec::new();
    if !mem.unconverged.is_empty() {
        warnings.push(format!(
            "{} of {} points did not converge within {} iterations",
            mem.unconverged.len(),
            x.nrows(),
            config.mem.max_iterations
        ));
    }
    if partition.all_below_threshold {
        warnings.push("every mode lies below the noise density threshold; all modes kept".into());
    }
    let manifest = ctx.manifest(
        "cluster",
        json!({"model": a.model, "data": a.data, "n": x.nrows(), "d": d}),
        json!({"mem": mem_settings(&config, partition.merge_tol), "paths": a.paths}),
        json!({
            "iterations": mem.iterations,
            "converged": mem.converged(),
            "unconverged_rows": mem.unconverged.iter().map(|&i| i + 1).collect::<Vec<_>>(),
            "n_clusters": partition.n_clusters(),
        }),
        warnings,
    );
    ctx.write_json("manifest.json", &manifest)
}

type Lattice = ([(f64, f64); 2], [usize; 2]);

fn resolve_grid(mixture: &GaussianMixture, g: &GridArgs) -> Result<Lattice, CliError> {
    if mixture.dim() != 2 {
        return Err(CliError::input(format!(
            "grid output needs a bivariate model, got d = {}",
            mixture.dim()
        )));
    }
    let bounds = match &g.bounds {
        Some(spec) => {
            let v = parse_floats("--bounds", spec, 4)?;
            [(v[0], v[1]), (v[2], v[3])]
        }
        None => {
            let (mean, cov) = mixture.marginal_moments();
            let half = |j: usize| 3.0 * cov[(j, j)].sqrt();
            [
                (mean[0] - half(0), mean[0] + half(0)),
                (mean[1] - half(1), mean[1] + half(1)),
            ]
        }
    };
    let res: Result<Vec<usize>, _> = g.resolution.split(',').map(|s| s.trim().parse::<usize>()).collect();
    let resolution = match res.as_deref() {
        Ok([n]) => [*n, *n],
        Ok([nx, ny]) => [*nx, *ny],
        _ => {
            return Err(CliError::input(format!(
                "--resolution: expected \"n\" or \"nx,ny\", got {:?}",
                g.resolution
            )))
        }
    };
    if resolution.contains(&0) {
        return Err(CliError::input("--resolution must be at least 1 on each axis"));
    }
    Ok((bounds, resolution))
}

fn grid_settings(bounds: &[(f64, f64); 2], resolution: &[usize; 2]) -> Value {
    json!({
        "bounds": [bounds[0].0, bounds[0].1, bounds[1].0, bounds[1].1],
        "resolution": resolution,
    })
}

fn density_grid(ctx: &Context, a: &DensityGridArgs) -> Result<(), CliError> {
    let mixture = load_model(&a.model)?;
    let (bounds, resolution) = resolve_grid(&mixture, &a.grid)?;
    let (_, _, nodes) = lattice_nodes(bounds, resolution)?;
    let ld = mixture.log_density(&nodes)?;
    let mut csv = CsvOut::new(&["x".into(), "y".into(), "log_density".into()]);
    for i in 0..nodes.nrows() {
        csv.row([fmt_f64(nodes[(i, 0)]), fmt_f64(nodes[(i, 1)]), fmt_f64(ld[i])]);
    }
    csv.write(&ctx.path("grid.csv"))?;
    let manifest = ctx.manifest(
        "density-grid",
        json!({"model": a.model}),
        grid_settings(&bounds, &resolution),
        json!({"nodes": nodes.nrows()}),
        vec![],
    );
    ctx.write_json("grid_manifest.json", &manifest)
}

fn partition_grid(ctx: &Context, a: &PartitionGridArgs) -> Result<(), CliError> {
    let mixture = load_model(&a.model)?;
    let (bounds, resolution) = resolve_grid(&mixture, &a.grid)?;
    let config = cluster_config(&a.mem, false)?;
    let grid = attraction_partition_grid(&mixture, bounds, resolution, &config)?;
    let mut csv = CsvOut::new(&["x".into(), "y".into(), "label".into(), "converged_iteration".into()]);
    for (iy, &y) in grid.ys.iter().enumerate() {
        for (ix, &x) in grid.xs.iter().enumerate() {
            let idx = iy * grid.xs.len() + ix;
            csv.row([
                fmt_f64(x),
                fmt_f64(y),
                one_based(grid.labels[idx]),
                iteration_field(grid.converged_at[idx]),
            ]);
        }
    }
    csv.write(&ctx.path("regions.csv"))?;
    let unconverged = grid.converged_at.iter().filter(|c| c.is_none()).count();
    let mut warnings = Vec::new();
    if unconverged > 0 {
        warnings.push(format!("{unconverged} lattice nodes did not converge"));
    }
    let manifest = ctx.manifest(
        "partition-grid",
        json!({"model": a.model}),
        json!({
            "grid": grid_settings(&bounds, &resolution),
            "mem": mem_settings(&config, grid.partition.merge_tol),
        }),
        json!({
            "iterations": grid.partition.iterations,
            "n_regions": grid.partition.n_clusters(),
            "modes": (0..grid.partition.modes.nrows())
                .map(|r| grid.partition.modes.row(r).iter().copied().collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        }),
        warnings,
    );
    ctx.write_json("regions_manifest.json", &manifest)
}

fn synth(ctx: &Context, a: &SynthArgs) -> Result<(), CliError> {
    if a.n == 0 {
        return Err(CliError::input("--n must be at least 1"));
    }
    let (sample, settings): (Sample, Value) = match a.name.as_str() {
        "gauss-skewnormal" => {
            let skew = parse_floats("--skew", &a.skew, 2)?;
            let s = gauss_skewnormal(a.n, a.seed, [skew[0], skew[1]])?;
            (s, json!({"skew": skew}))
        }
        "separated-gaussians" => {
            let (_, s) = separated_gaussians(a.components, a.dim, a.sep, a.n, a.seed)?;
            (s, json!({"components": a.components, "dim": a.dim, "sep": a.sep}))
        }
        other => {
            return Err(CliError::input(format!(
                "unknown generator {other:?} (available: gauss-skewnormal, separated-gaussians)"
            )))
        }
    };
    let d = sample.data.ncols();
    let mut data = CsvOut::new(&coordinate_header(d));
    for i in 0..sample.data.nrows() {
        data.row(sample.data.row(i).iter().map(|&v| fmt_f64(v)));
    }
    data.write(&ctx.path("data.csv"))?;
    let mut truth = CsvOut::new(&["row".into(), "label".into()]);
    for (i, &l) in sample.labels.iter().enumerate() {
        truth.row([(i + 1).to_string(), one_based(l)]);
    }
    truth.write(&ctx.path("truth.csv"))?;
    let manifest = ctx.manifest(
        "synth",
        json!({}),
        json!({"generator": a.name, "n": a.n, "seed": a.seed, "rng": "ChaCha20", "parameters": settings}),
        json!({"rows": sample.data.nrows(), "d": d}),
        vec![],
    );
    ctx.write_json("synth_manifest.json", &manifest)
}
