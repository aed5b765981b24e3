use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use portanet::complexity::{complexity, table};
use portanet::devices::{load_profile, load_profile_dir, partition, DeviceProfile};
use portanet::frontier::{enumerate_and_evaluate, summary_table, FrontierConfig, QuantSetting};
use portanet::graph::{load, save, DataType, Graph};
use portanet::interp::{self, Precision};
use portanet::latency::{estimate, graph_resolution_sweep, sweep_csv, Resolution};
use portanet::metrics::{l2_per_pixel, psnr, ssim};
use portanet::pruning::{prune, PruneOptions};
use portanet::quant::{calibrate, error_report, quantize_graph};
use portanet::rewrite::Pass;
use portanet::zoo::{build, Activation, ArchSpec, Family, Upsample};
use portanet::Tensor;

#[derive(Parser)]
#[command(name = "portanet", version, about = "Portability analysis and optimization for mobile image-restoration networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a zoo architecture and write its graph.
    Build {
        #[arg(long, default_value = "unet")]
        family: Family,
        /// tc|d2s|bilinear (family default if omitted)
        #[arg(long)]
        upsample: Option<Upsample>,
        #[arg(long = "act", default_value = "relu")]
        activation: Activation,
        #[arg(long, default_value_t = 720)]
        height: usize,
        #[arg(long, default_value_t = 1280)]
        width: usize,
        /// Base channel count (family default if omitted)
        #[arg(long)]
        channels: Option<usize>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Per-layer MACs, parameters and activation memory.
    Analyze {
        graph: PathBuf,
        /// Print the JSON report instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Assign nodes to accelerator or CPU under a device profile.
    Partition {
        graph: PathBuf,
        /// Bundled profile name or TOML path.
        #[arg(long)]
        profile: String,
        #[arg(long, default_value = "f16")]
        dtype: DataType,
    },
    /// Estimate latency, optionally across resolutions.
    Latency {
        graph: PathBuf,
        #[arg(long)]
        profile: String,
        #[arg(long, default_value = "f16")]
        dtype: DataType,
        /// Comma-separated resolutions, e.g. 360p,720p or 640x360.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<String>>,
        /// Write the sweep as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Apply a portability rewrite pass.
    Rewrite {
        graph: PathBuf,
        /// tc2d2s|tc2bilinear|relu2prelu|prelu2relu
        #[arg(long)]
        pass: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Prune channels toward a MAC-reduction target.
    Prune {
        graph: PathBuf,
        #[arg(long)]
        target: f64,
        #[arg(long, default_value_t = 4)]
        round_to: usize,
        #[arg(long, default_value_t = 4)]
        min_channels: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Calibrate and attach quantization parameters.
    Quantize {
        graph: PathBuf,
        #[arg(long)]
        bits: u8,
        /// Directory of .bin calibration tensors.
        #[arg(long)]
        calib: Option<PathBuf>,
        /// Number of seeded random calibration inputs when no directory is given.
        #[arg(long, default_value_t = 8)]
        random: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Numeric error of a quantized graph against its float source.
    Qerror {
        float: PathBuf,
        quant: PathBuf,
        #[arg(long)]
        probes: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        random: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Execute a graph on tensor files.
    Run {
        graph: PathBuf,
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        #[arg(long, default_value = "f32")]
        precision: Precision,
        /// Output file; with several graph outputs, `.N` is inserted before the extension.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compare two tensor files.
    Metric {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        psnr: bool,
        #[arg(long)]
        ssim: bool,
        #[arg(long, default_value_t = 1.0)]
        peak: f64,
    },
    /// Sweep rewrite, prune and quantization variants and report the frontier.
    Frontier {
        #[arg(long, default_value = "unet")]
        family: Family,
        /// Directory of profile TOMLs or comma-separated bundled names (all bundled if omitted).
        #[arg(long)]
        profiles: Option<String>,
        #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.5")]
        prune: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "float,8,16")]
        quant: Vec<QuantSetting>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 720)]
        height: usize,
        #[arg(long, default_value_t = 1280)]
        width: usize,
        /// Square resolution for numeric evaluation.
        #[arg(long, default_value_t = 64)]
        eval_size: usize,
        #[arg(long, default_value_t = 256)]
        cap: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn load_graph(path: &Path) -> Result<Graph> {
    let g = load(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(g.resolved()?)
}

fn load_tensor(path: &Path) -> Result<Tensor> {
    Tensor::load(path).with_context(|| format!("loading {}", path.display()))
}

/// Inputs for a single-input graph: every `.bin` in `dir` (sorted), or
/// `count` seeded uniform [0, 1) tensors.
fn input_set(graph: &Graph, dir: Option<&Path>, count: usize, seed: u64) -> Result<Vec<Vec<Tensor>>> {
    if let Some(dir) = dir {
        if graph.inputs.len() != 1 {
            bail!("tensor directories need a single-input graph; this one has {}", graph.inputs.len());
        }
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "bin"))
            .collect();
        paths.sort();
        if paths.is_empty() {
            bail!("no .bin tensors in {}", dir.display());
        }
        return paths.iter().map(|p| Ok(vec![load_tensor(p)?])).collect();
    }
    Ok((0..count)
        .map(|i| {
            graph
                .inputs
                .iter()
                .enumerate()
                .map(|(k, spec)| Tensor::random(spec.shape, seed.wrapping_mul(1_000).wrapping_add((i * 16 + k) as u64), 0.0, 1.0))
                .collect()
        })
        .collect())
}

fn profiles_arg(arg: Option<&str>) -> Result<Vec<DeviceProfile>> {
    match arg {
        None => Ok(DeviceProfile::all_bundled()),
        Some(s) if Path::new(s).is_dir() => Ok(load_profile_dir(s)?),
        Some(s) => s.split(',').map(|p| Ok(load_profile(p.trim())?)).collect(),
    }
}

fn output_path(base: &Path, index: usize, total: usize) -> PathBuf {
    if total == 1 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().unwrap_or_default().to_string_lossy();
    let name = match base.extension() {
        Some(ext) => format!("{stem}.{index}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{index}"),
    };
    base.with_file_name(name)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Build {
            family,
            upsample,
            activation,
            height,
            width,
            channels,
            depth,
            seed,
            output,
        } => {
            let mut spec = ArchSpec::default_for(family)
                .with_activation(activation)
                .with_input_hw(height, width)
                .with_seed(seed);
            if let Some(u) = upsample {
                spec = spec.with_upsample(u);
            }
            if let Some(c) = channels {
                spec.base_channels = c;
            }
            if let Some(d) = depth {
                spec.depth = d;
            }
            let g = build(&spec)?;
            save(&g, &output)?;
            let r = complexity(&g)?;
            println!(
                "{} nodes, {:.2} GMAC, {} weight bytes -> {}",
                g.nodes.len(),
                r.total_macs as f64 / 1e9,
                r.total_weight_bytes,
                output.display()
            );
        }
        Command::Analyze { graph, json } => {
            let g = load_graph(&graph)?;
            let r = complexity(&g)?;
            if json {
                print_json(&r)?;
            } else {
                print!("{}", table(&g, &r));
            }
        }
        Command::Partition { graph, profile, dtype } => {
            let g = load_graph(&graph)?;
            let p = load_profile(&profile)?;
            print_json(&partition(&g, &p, dtype)?)?;
        }
        Command::Latency {
            graph,
            profile,
            dtype,
            sweep,
            csv,
        } => {
            let g = load_graph(&graph)?;
            let p = load_profile(&profile)?;
            match sweep {
                None => {
                    let plan = partition(&g, &p, dtype)?;
                    if !plan.deployable() {
                        eprintln!("warning: deployment fails on {}: {} rule(s) hit", p.name, plan.failures.len());
                    }
                    print_json(&estimate(&g, &plan, &p)?)?;
                }
                Some(list) => {
                    let res = list.iter().map(|s| s.parse()).collect::<Result<Vec<Resolution>, _>>()?;
                    let rows = graph_resolution_sweep(&g, &p, dtype, &res)?;
                    print_json(&rows)?;
                    if let Some(path) = csv {
                        std::fs::write(&path, sweep_csv(&rows))?;
                    }
                }
            }
        }
        Command::Rewrite { graph, pass, output } => {
            let g = load_graph(&graph)?;
            let pass: Pass = pass.parse()?;
            let out = pass.apply(&g)?;
            save(&out, &output)?;
            println!(
                "{pass}: {} -> {} nodes, {:.3} -> {:.3} GMAC",
                g.nodes.len(),
                out.nodes.len(),
                complexity(&g)?.total_macs as f64 / 1e9,
                complexity(&out)?.total_macs as f64 / 1e9
            );
        }
        Command::Prune {
            graph,
            target,
            round_to,
            min_channels,
            output,
        } => {
            let g = load_graph(&graph)?;
            let opts = PruneOptions {
                round_to,
                min_channels,
                ..Default::default()
            };
            let r = prune(&g, target, &opts)?;
            if let Some(w) = &r.report.warning {
                eprintln!("warning: {w:?}");
            }
            save(&r.graph, &output)?;
            print_json(&r.report)?;
        }
        Command::Quantize {
            graph,
            bits,
            calib,
            random,
            seed,
            output,
        } => {
            let g = load_graph(&graph)?;
            let inputs = input_set(&g, calib.as_deref(), random, seed)?;
            let ranges = calibrate(&g, &inputs)?;
            let q = quantize_graph(&g, bits, &ranges)?;
            save(&q, &output)?;
            println!("{bits}-bit, {} tensors calibrated on {} inputs -> {}", ranges.len(), inputs.len(), output.display());
        }
        Command::Qerror {
            float,
            quant,
            probes,
            random,
            seed,
            json,
        } => {
            let f = load_graph(&float)?;
            let q = load_graph(&quant)?;
            let probes = input_set(&f, probes.as_deref(), random, seed)?;
            let r = error_report(&f, &q, &probes)?;
            if json {
                print_json(&r)?;
            } else {
                let bits = q.quant.as_ref().map_or("float".to_string(), |i| format!("{}-bit", i.bits));
                println!("{:<10} {:>12} {:>14}", "setting", "PSNR (dB)", "L2 per pixel");
                println!("{:<10} {:>12} {:>14.3e}", bits, r.psnr_db.to_string(), r.l2_per_pixel);
                println!("{} probes, PSNR std {:.2} dB, L2 std {:.3e}", r.per_image.len(), r.psnr_std_db, r.l2_std);
            }
        }
        Command::Run {
            graph,
            input,
            precision,
            output,
        } => {
            let g = load_graph(&graph)?;
            let inputs = input.iter().map(|p| load_tensor(p)).collect::<Result<Vec<_>>>()?;
            let outs = interp::run(&g, &inputs, precision)?;
            for (i, (name, t)) in g.outputs.iter().zip(&outs).enumerate() {
                let (lo, hi) = t.min_max().unwrap_or((0.0, 0.0));
                println!("{name}: {:?} min {lo:.6} max {hi:.6}", t.shape);
                if let Some(base) = &output {
                    t.save(output_path(base, i, outs.len()))?;
                }
            }
        }
        Command::Metric {
            a,
            b,
            psnr: want_psnr,
            ssim: want_ssim,
            peak,
        } => {
            let (x, y) = (load_tensor(&a)?, load_tensor(&b)?);
            let mut report = serde_json::Map::new();
            report.insert("l2_per_pixel".into(), serde_json::to_value(l2_per_pixel(&x, &y)?)?);
            if want_psnr || !want_ssim {
                report.insert("psnr_db".into(), serde_json::to_value(psnr(&x, &y, peak)?)?);
            }
            if want_ssim {
                report.insert("ssim".into(), serde_json::to_value(ssim(&x, &y)?)?);
            }
            print_json(&report)?;
        }
        Command::Frontier {
            family,
            profiles,
            prune,
            quant,
            seed,
            height,
            width,
            eval_size,
            cap,
            output,
        } => {
            let base = ArchSpec::default_for(family).with_input_hw(height, width).with_seed(seed);
            let mut config = FrontierConfig::new(base);
            config.prune_targets = prune;
            config.quant = quant;
            config.eval_hw = (eval_size, eval_size);
            config.variant_cap = cap;
            let profiles = profiles_arg(profiles.as_deref())?;
            let report = enumerate_and_evaluate(&config, &profiles)?;
            print!("{}", summary_table(&report));
            for v in report.variants.iter().filter(|v| v.error.is_some()) {
                eprintln!("warning: {}: {}", v.name, v.error.as_deref().unwrap_or_default());
            }
            if let Some(path) = output {
                std::fs::write(&path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
            }
        }
    }
    Ok(())
}
