mod files;
mod formats;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mapcd_core::eval::METRICS_CSV_HEADER;
use mapcd_core::noprompt::verdicts_to_csv;
use mapcd_core::pipeline::{self, DetectConfig, PipelineInputs};
use mapcd_core::prompt::prompts_to_json;
use mapcd_core::synth::ChangeFractions;
use mapcd_core::{
    detect_changes_noprompt, detect_changes_prompt, evaluate, export_prompts, fuse, generate_scene,
    label_components, ChangeMap, LabelRaster, MetricsRecord, SceneParams,
};

use files::{
    core_failure, load_change_map, load_instances, load_legend, load_masks, load_prompted,
    load_raster, read_text, same_dims, save_instances, write_file, CliResult, Failure,
};
use formats::FORMATS;

/// Land-cover change detection between class rasters and segmenter masks.
#[derive(Parser, Debug)]
#[command(name = "mapcd", version, after_help = FORMATS)]
struct Cli {
    /// `key = value` file with detection tunables; flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for per-instance work (0 = one per core)
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// More log output on stderr (-v info, -vv debug); RUST_LOG also works
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Label connected same-class regions of a class raster
    #[command(after_long_help = FORMATS)]
    Ccl {
        /// Class raster (P5)
        #[arg(long)]
        raster: PathBuf,
        /// Legend; when given, every raster class must appear in it
        #[arg(long)]
        legend: Option<PathBuf>,
        /// Instance dump (JSON)
        #[arg(long)]
        out: PathBuf,
        /// Instance map as a 16-bit graymap
        #[arg(long, value_name = "PGM")]
        map_out: Option<PathBuf>,
        #[command(flatten)]
        label: LabelOpts,
    },

    /// Export background instances as box and mask prompts
    #[command(after_long_help = FORMATS)]
    Prompts {
        #[arg(long)]
        instances: PathBuf,
        #[arg(long)]
        legend: PathBuf,
        /// Prompt export (JSON)
        #[arg(long)]
        out: PathBuf,
    },

    /// Strategy 1: aggregate segmenter masks per instance
    #[command(name = "detect-noprompt", after_long_help = FORMATS)]
    DetectNoprompt {
        #[arg(long)]
        instances: PathBuf,
        /// Mask set (JSON)
        #[arg(long)]
        masks: PathBuf,
        /// Change map (P5)
        #[arg(long)]
        out: PathBuf,
        /// Per-instance verdicts (CSV)
        #[arg(long, value_name = "CSV")]
        verdicts: Option<PathBuf>,
        #[command(flatten)]
        agg: AggregationOpts,
    },

    /// Strategy 2: unrecognized pixels inside prompted background instances
    #[command(name = "detect-prompt", after_long_help = FORMATS)]
    DetectPrompt {
        #[arg(long)]
        instances: PathBuf,
        /// Prompted results (JSON)
        #[arg(long)]
        prompted: PathBuf,
        #[arg(long)]
        legend: PathBuf,
        /// Change map (P5)
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        blob: BlobOpts,
    },

    /// Pixelwise OR of two change maps
    #[command(after_long_help = FORMATS)]
    Fuse {
        a: PathBuf,
        b: PathBuf,
        out: PathBuf,
    },

    /// Score a predicted change map against ground truth
    #[command(after_long_help = FORMATS)]
    Eval {
        pred: PathBuf,
        truth: PathBuf,
        /// Metrics CSV
        #[arg(long)]
        out: PathBuf,
        /// Value of the dataset column (default: stem of PRED)
        #[arg(long)]
        dataset: Option<String>,
    },

    /// Generate a synthetic scene with known changes
    #[command(after_long_help = FORMATS)]
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        width: u32,
        #[arg(long, default_value_t = 256)]
        height: u32,
        #[arg(long, default_value_t = 12)]
        objects: u32,
        /// Fraction of objects whose shape changes
        #[arg(long, default_value_t = 0.2)]
        shape_change: f64,
        /// Fraction of objects removed from the optical side
        #[arg(long, default_value_t = 0.2)]
        removal: f64,
        /// Fraction of objects that only appear on the optical side
        #[arg(long, default_value_t = 0.1)]
        new_object: f64,
        /// Each optical object is split into 1..=K masks
        #[arg(long, default_value_t = 3)]
        split_k: u32,
        /// Maximum boundary jitter of optical objects, in pixels
        #[arg(long, default_value_t = 0)]
        boundary_noise: u32,
        /// Receives map.pgm, legend.txt, masks.json, prompted.json,
        /// truth.pgm and manifest.json
        #[arg(long)]
        out_dir: PathBuf,
    },

    /// Render a change map as a graymap, optionally with a color overlay
    #[command(after_long_help = FORMATS)]
    Render {
        change: PathBuf,
        /// 8-bit graymap (0 / 255)
        #[arg(long)]
        out: PathBuf,
        /// Color overlay (P6) with changed pixels in red
        #[arg(long, value_name = "PPM")]
        overlay: Option<PathBuf>,
        /// Class raster drawn in gray under the overlay
        #[arg(long, requires = "overlay")]
        base: Option<PathBuf>,
    },

    /// Run the whole chain: label, both strategies, fuse, evaluate
    #[command(after_long_help = FORMATS)]
    Run {
        #[arg(long)]
        raster: PathBuf,
        #[arg(long)]
        legend: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        /// Prompted results; strategy 2 is skipped without them
        #[arg(long)]
        prompted: Option<PathBuf>,
        /// Ground truth; metrics.csv is written when given
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "run")]
        dataset: String,
        #[command(flatten)]
        label: LabelOpts,
        #[command(flatten)]
        agg: AggregationOpts,
        #[command(flatten)]
        blob: BlobOpts,
    },
}

#[derive(Args, Debug, Default)]
struct LabelOpts {
    /// 4 or 8 [default: 4]
    #[arg(long)]
    connectivity: Option<u32>,
    /// Components smaller than this are dropped [default: 16]
    #[arg(long)]
    min_area: Option<u64>,
    /// Comma-separated class codes that are never labeled
    #[arg(long, value_name = "CODES")]
    ignore_codes: Option<String>,
}

#[derive(Args, Debug, Default)]
struct AggregationOpts {
    /// Overlap threshold [default: 0.5]
    #[arg(long)]
    theta: Option<f64>,
    /// Pixels a mask must share with an instance to be merged [default: 8]
    #[arg(long)]
    min_intersection: Option<u64>,
    /// Merges without improvement before giving up [default: 3]
    #[arg(long)]
    patience: Option<u32>,
    /// Veto unchanged verdicts whose shape disagrees (on/off) [default: off]
    #[arg(long, value_name = "on|off")]
    shape_check: Option<String>,
    #[arg(long)]
    area_band_lo: Option<f64>,
    #[arg(long)]
    area_band_hi: Option<f64>,
    #[arg(long)]
    aspect_band_lo: Option<f64>,
    #[arg(long)]
    aspect_band_hi: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct BlobOpts {
    /// Unrecognized blobs smaller than this are ignored [default: 16]
    #[arg(long)]
    min_blob_area: Option<u64>,
}

fn push<T: ToString>(out: &mut Vec<(&'static str, String)>, key: &'static str, v: &Option<T>) {
    if let Some(v) = v {
        out.push((key, v.to_string()));
    }
}

impl LabelOpts {
    fn overrides(&self, out: &mut Vec<(&'static str, String)>) {
        push(out, "connectivity", &self.connectivity);
        push(out, "min_area", &self.min_area);
        push(out, "ignore_codes", &self.ignore_codes);
    }
}

impl AggregationOpts {
    fn overrides(&self, out: &mut Vec<(&'static str, String)>) {
        push(out, "theta", &self.theta);
        push(out, "min_intersection", &self.min_intersection);
        push(out, "patience", &self.patience);
        push(out, "shape_check", &self.shape_check);
        push(out, "area_band_lo", &self.area_band_lo);
        push(out, "area_band_hi", &self.area_band_hi);
        push(out, "aspect_band_lo", &self.aspect_band_lo);
        push(out, "aspect_band_hi", &self.aspect_band_hi);
    }
}

impl BlobOpts {
    fn overrides(&self, out: &mut Vec<(&'static str, String)>) {
        push(out, "min_blob_area", &self.min_blob_area);
    }
}

/// Defaults, then the config file, then flags.
fn build_config(cli: &Cli) -> CliResult<DetectConfig> {
    let mut config = DetectConfig::default();
    if let Some(path) = &cli.config {
        config
            .apply_text(&read_text(path)?)
            .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    }
    let mut flags = Vec::new();
    match &cli.command {
        Command::Ccl { label, .. } => label.overrides(&mut flags),
        Command::DetectNoprompt { agg, .. } => agg.overrides(&mut flags),
        Command::DetectPrompt { blob, .. } => blob.overrides(&mut flags),
        Command::Run {
            label, agg, blob, ..
        } => {
            label.overrides(&mut flags);
            agg.overrides(&mut flags);
            blob.overrides(&mut flags);
        }
        _ => {}
    }
    push(&mut flags, "workers", &cli.workers);
    for (k, v) in flags {
        config
            .set(k, &v)
            .map_err(|e| Failure::Usage(format!("--{}: {e}", k.replace('_', "-"))))?;
    }
    config.validate().map_err(core_failure)?;
    Ok(config)
}

fn metrics_csv(m: &MetricsRecord, dataset: &str) -> String {
    format!("{METRICS_CSV_HEADER}\n{}\n", m.csv_row(dataset))
}

fn encode_ppm(width: u32, height: u32, rgb: &[u8]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

/// Gray level per class code, spread over 40..=200 by code rank.
fn gray_levels(raster: &LabelRaster) -> impl Fn(u16) -> u8 {
    let mut codes: Vec<u16> = raster.pixels().to_vec();
    codes.sort_unstable();
    codes.dedup();
    let span = (codes.len().max(2) - 1) as u32;
    move |c| {
        let rank = codes.binary_search(&c).unwrap_or(0) as u32;
        (40 + rank * 160 / span) as u8
    }
}

fn render_overlay(change: &ChangeMap, base: Option<&LabelRaster>) -> Vec<u8> {
    let level = base.map(gray_levels);
    let mut rgb = Vec::with_capacity(change.bits().len() * 3);
    for (i, &c) in change.bits().iter().enumerate() {
        if c {
            rgb.extend_from_slice(&[255, 0, 0]);
        } else {
            let g = match (&level, base) {
                (Some(f), Some(r)) => f(r.pixels()[i]),
                _ => 0,
            };
            rgb.extend_from_slice(&[g, g, g]);
        }
    }
    rgb
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

fn execute(cli: &Cli) -> CliResult<()> {
    let config = build_config(cli)?;
    config
        .install(|| dispatch(cli, &config))
        .map_err(core_failure)?
}

fn dispatch(cli: &Cli, config: &DetectConfig) -> CliResult<()> {
    match &cli.command {
        Command::Ccl {
            raster,
            legend,
            out,
            map_out,
            ..
        } => {
            let r = load_raster(raster)?;
            if let Some(path) = legend {
                load_legend(path)?.check_raster(&r).map_err(|e| {
                    Failure::Data(format!("{} vs {}: {e}", raster.display(), path.display()))
                })?;
            }
            let (map, instances) = label_components(&r, &config.label).map_err(core_failure)?;
            log::info!("{}: {} instances", raster.display(), instances.len());
            save_instances(out, r.width(), r.height(), &instances)?;
            if let Some(path) = map_out {
                write_file(path, map.to_pgm().map_err(core_failure)?)?;
            }
        }

        Command::Prompts {
            instances,
            legend,
            out,
        } => {
            let dump = load_instances(instances)?;
            let legend_v = load_legend(legend)?;
            let prompts = export_prompts(&dump.instances, &legend_v).map_err(|e| {
                Failure::Data(format!(
                    "{} vs {}: {e}",
                    instances.display(),
                    legend.display()
                ))
            })?;
            log::info!("{} prompts", prompts.len());
            write_file(out, prompts_to_json(&prompts))?;
        }

        Command::DetectNoprompt {
            instances,
            masks,
            out,
            verdicts,
            ..
        } => {
            let dump = load_instances(instances)?;
            let set = load_masks(masks)?;
            same_dims(instances, (dump.width, dump.height), masks, set.dims())?;
            let (map, v) = detect_changes_noprompt(&dump.instances, &set, &config.aggregation)
                .map_err(core_failure)?;
            log::info!(
                "{} of {} instances changed",
                v.iter().filter(|v| v.changed).count(),
                v.len()
            );
            write_file(out, map.to_pgm())?;
            if let Some(path) = verdicts {
                write_file(path, verdicts_to_csv(&v))?;
            }
        }

        Command::DetectPrompt {
            instances,
            prompted,
            legend,
            out,
            ..
        } => {
            let dump = load_instances(instances)?;
            let results = load_prompted(prompted)?;
            let legend_v = load_legend(legend)?;
            same_dims(
                instances,
                (dump.width, dump.height),
                prompted,
                (results.width, results.height),
            )?;
            let det =
                detect_changes_prompt(&dump.instances, &results, &legend_v, config.min_blob_area)
                    .map_err(|e| {
                    Failure::Data(format!(
                        "{} vs {}: {e}",
                        prompted.display(),
                        instances.display()
                    ))
                })?;
            for w in &det.warnings {
                log::warn!("{w}");
            }
            write_file(out, det.change_map.to_pgm())?;
        }

        Command::Fuse { a, b, out } => {
            let (ma, mb) = (load_change_map(a)?, load_change_map(b)?);
            same_dims(a, ma.dims(), b, mb.dims())?;
            write_file(out, fuse(&ma, &mb).map_err(core_failure)?.to_pgm())?;
        }

        Command::Eval {
            pred,
            truth,
            out,
            dataset,
        } => {
            let (p, t) = (load_change_map(pred)?, load_change_map(truth)?);
            same_dims(pred, p.dims(), truth, t.dims())?;
            let m = evaluate(&p, &t).map_err(core_failure)?;
            let name = dataset.clone().unwrap_or_else(|| stem(pred));
            log::info!("{}", m.csv_row(&name));
            write_file(out, metrics_csv(&m, &name))?;
        }

        Command::Synth {
            seed,
            width,
            height,
            objects,
            shape_change,
            removal,
            new_object,
            split_k,
            boundary_noise,
            out_dir,
        } => {
            let params = SceneParams {
                seed: *seed,
                width: *width,
                height: *height,
                n_objects: *objects,
                change_fractions: ChangeFractions::new(*shape_change, *removal, *new_object),
                split_k: *split_k,
                boundary_noise: *boundary_noise,
            };
            let scene = generate_scene(&params).map_err(core_failure)?;
            write_file(&out_dir.join("map.pgm"), scene.raster.to_pgm())?;
            write_file(&out_dir.join("legend.txt"), scene.legend.to_text())?;
            write_file(&out_dir.join("masks.json"), scene.masks.to_json())?;
            write_file(&out_dir.join("prompted.json"), scene.prompted.to_json())?;
            write_file(&out_dir.join("truth.pgm"), scene.truth.to_pgm())?;
            write_file(&out_dir.join("manifest.json"), scene.manifest_json())?;
        }

        Command::Render {
            change,
            out,
            overlay,
            base,
        } => {
            let c = load_change_map(change)?;
            write_file(out, c.to_pgm())?;
            if let Some(path) = overlay {
                let b = base.as_deref().map(load_raster).transpose()?;
                if let (Some(r), Some(bp)) = (&b, base) {
                    same_dims(change, c.dims(), bp, r.dims())?;
                }
                let (w, h) = c.dims();
                write_file(path, encode_ppm(w, h, &render_overlay(&c, b.as_ref())))?;
            }
        }

        Command::Run {
            raster,
            legend,
            masks,
            prompted,
            truth,
            out_dir,
            dataset,
            ..
        } => {
            let r = load_raster(raster)?;
            let legend_v = load_legend(legend)?;
            let set = load_masks(masks)?;
            same_dims(raster, r.dims(), masks, set.dims())?;
            let results = prompted.as_deref().map(load_prompted).transpose()?;
            if let (Some(p), Some(res)) = (prompted, &results) {
                same_dims(raster, r.dims(), p, (res.width, res.height))?;
            }
            let t = truth.as_deref().map(load_change_map).transpose()?;
            if let (Some(p), Some(tm)) = (truth, &t) {
                same_dims(raster, r.dims(), p, tm.dims())?;
            }
            legend_v.check_raster(&r).map_err(|e| {
                Failure::Data(format!("{} vs {}: {e}", raster.display(), legend.display()))
            })?;
            let out = pipeline::run(
                &PipelineInputs {
                    raster: &r,
                    legend: &legend_v,
                    masks: &set,
                    prompted: results.as_ref(),
                    truth: t.as_ref(),
                },
                config,
            )
            .map_err(core_failure)?;
            save_instances(
                &out_dir.join("instances.json"),
                r.width(),
                r.height(),
                &out.instances,
            )?;
            write_file(&out_dir.join("noprompt.pgm"), out.noprompt.to_pgm())?;
            write_file(
                &out_dir.join("verdicts.csv"),
                verdicts_to_csv(&out.verdicts),
            )?;
            if let Some(p) = &out.prompt {
                for w in &p.warnings {
                    log::warn!("{w}");
                }
                write_file(&out_dir.join("prompt.pgm"), p.change_map.to_pgm())?;
            }
            write_file(&out_dir.join("fused.pgm"), out.fused.to_pgm())?;
            if let Some(m) = &out.metrics {
                write_file(&out_dir.join("metrics.csv"), metrics_csv(m, dataset))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();

    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("mapcd: error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
