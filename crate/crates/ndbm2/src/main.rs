//! Command-line front end: padding inspection, cost reporting, wall-clock
//! benchmarking, forward execution, and model export/import.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ndbm2::bench::bench;
use ndbm2::exec::{forward_with_threads, resolve_threads};
use ndbm2::format::{self, read_tensor_entry, write_tensor_entry};
use ndbm2::report::{render, ReportFormat};
use ndbm2_core::rng::SeededRng;
use ndbm2_core::ssd::Mamba2Config;
use ndbm2_core::{align_pad, count_macs, BiMamba2NdModel, TensorNd};

#[derive(Parser)]
#[command(
    name = "ndbm2",
    version,
    about = "Bidirectional state-space pipeline over 1D/2D/3D data"
)]
struct Cli {
    /// Cap internal parallelism (default: machine parallelism, or NDBM2_THREADS)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Show the alignment padding for a spatial shape
    PadCalc(PadCalcArgs),
    /// Print the analytical parameter and MAC report
    Flops(FlopsArgs),
    /// Time the forward pass (median over repeats after warmup)
    Bench(BenchArgs),
    /// Run the forward pass and write the output tensor
    Run(RunArgs),
    /// Build a seeded model and write it to a model file
    Export(ExportArgs),
    /// Load a model file, validate it, and print its configuration
    Import(ImportArgs),
}

#[derive(Args)]
struct ShapeArgs {
    /// Spatial extents, comma-separated (e.g. 1024 or 129,127)
    #[arg(long)]
    shape: String,
    /// Spatial rank; inferred from --shape when omitted, cross-checked otherwise
    #[arg(long)]
    rank: Option<usize>,
}

impl ShapeArgs {
    fn parse(&self) -> Result<Vec<usize>> {
        let extents: Vec<usize> = self
            .shape
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .with_context(|| format!("bad extent '{s}'"))
            })
            .collect::<Result<_>>()?;
        if extents.is_empty() || extents.len() > 3 {
            bail!("shape must have 1 to 3 extents, got {}", extents.len());
        }
        if extents.contains(&0) {
            bail!("extents must be >= 1");
        }
        if let Some(rank) = self.rank {
            if rank != extents.len() {
                bail!(
                    "--rank {} disagrees with --shape rank {}",
                    rank,
                    extents.len()
                );
            }
        }
        Ok(extents)
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Input channels
    #[arg(long, default_value_t = 64)]
    c_in: usize,
    /// Output channels
    #[arg(long, default_value_t = 64)]
    c_out: usize,
    /// Core feature width
    #[arg(long, default_value_t = 128)]
    d_model: usize,
    /// Add the backward core
    #[arg(long)]
    bidirectional: bool,
    /// Weight-initialisation seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ModelArgs {
    fn build(&self, spatial_rank: usize) -> Result<BiMamba2NdModel<f32>> {
        let cfg = Mamba2Config {
            d_model: self.d_model,
            ..Default::default()
        };
        BiMamba2NdModel::init_random(
            cfg,
            self.c_in,
            self.c_out,
            spatial_rank,
            self.bidirectional,
            self.seed,
        )
        .map_err(Into::into)
    }
}

#[derive(Args)]
struct PadCalcArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[arg(long, default_value = "table")]
    format: ReportFormat,
}

#[derive(Args)]
struct FlopsArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Batch size used for the MAC count
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(long, default_value = "table")]
    format: ReportFormat,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    /// Timed runs (median reported)
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Discarded runs before timing
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    #[arg(long, default_value = "table")]
    format: ReportFormat,
}

#[derive(Args)]
struct RunArgs {
    /// Load the model from a file instead of seeding one
    #[arg(long, conflicts_with_all = ["c_in", "c_out", "d_model", "bidirectional"])]
    model: Option<PathBuf>,
    #[command(flatten)]
    model_args: ModelArgs,
    /// Read the input tensor from a file (raw tensor-entry layout)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Spatial extents for a seeded random input (ignored with --input)
    #[arg(long)]
    shape: Option<String>,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    /// Where the output tensor is written
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Spatial rank the model is built for
    #[arg(long, default_value_t = 1)]
    rank: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ImportArgs {
    #[arg(long)]
    input: PathBuf,
}

fn shape_label(extents: &[usize]) -> String {
    extents
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join("x")
}

fn cmd_pad_calc(args: &PadCalcArgs) -> Result<()> {
    let spatial = args.shape.parse()?;
    // a 1-element probe per channel/batch is enough to compute the record
    let mut shape = vec![1usize, 1usize];
    shape.extend_from_slice(&spatial);
    let probe = TensorNd::<f32>::zeros(&shape)?;
    let (_, rec) = align_pad(&probe, spatial.len())?;
    let equal = if rec.is_noop() { "TRUE" } else { "FALSE" };
    match args.format {
        ReportFormat::Table => {
            println!("input   {}", shape_label(&rec.original_shape));
            println!("padded  {}", shape_label(&rec.padded_shape));
            println!("tokens  {}", rec.padded_tokens());
            println!("equal   {equal}");
        }
        ReportFormat::Tsv => {
            println!(
                "{}\t{}\t{}\t{}",
                shape_label(&rec.original_shape),
                shape_label(&rec.padded_shape),
                rec.padded_tokens(),
                equal
            );
        }
    }
    Ok(())
}

fn cmd_flops(args: &FlopsArgs) -> Result<()> {
    let spatial = args.shape.parse()?;
    let model = args.model.build(spatial.len())?;
    let report = count_macs(&model, args.batch, &spatial)?;
    print!("{}", render(&report, args.format));
    Ok(())
}

fn cmd_bench(args: &BenchArgs, threads: usize) -> Result<()> {
    let spatial = args.shape.parse()?;
    let model = args.model.build(spatial.len())?;
    let report = bench(
        &model,
        args.batch,
        &spatial,
        args.repeats,
        args.warmup,
        args.model.seed,
        threads,
    )?;
    if args.format == ReportFormat::Table {
        println!(
            "shape {}  batch {}  threads {}  seed {}",
            shape_label(&spatial),
            args.batch,
            threads,
            args.model.seed
        );
    } else {
        println!("# threads\t{threads}");
    }
    print!("{}", render(&report, args.format));
    Ok(())
}

fn cmd_run(args: &RunArgs, threads: usize) -> Result<()> {
    let (model, model_desc) = match &args.model {
        Some(path) => {
            let mut reader = BufReader::new(
                File::open(path).with_context(|| format!("open {}", path.display()))?,
            );
            let model = format::load(&mut reader)?;
            (model, format!("file {}", path.display()))
        }
        None => {
            let rank = match (&args.input, &args.shape) {
                (Some(_), _) => None, // inferred from the input tensor below
                (None, Some(shape)) => Some(shape.split(',').count()),
                (None, None) => bail!("either --input or --shape is required"),
            };
            match rank {
                Some(r) => (
                    args.model_args.build(r)?,
                    format!("seed {}", args.model_args.seed),
                ),
                None => {
                    // peek the input shape first
                    let path = args.input.as_ref().expect("checked above");
                    let mut reader = BufReader::new(
                        File::open(path).with_context(|| format!("open {}", path.display()))?,
                    );
                    let (_, t) = read_tensor_entry(&mut reader)?;
                    if t.rank() < 3 {
                        bail!("input tensor must be (batch, channels, spatial...)");
                    }
                    (
                        args.model_args.build(t.rank() - 2)?,
                        format!("seed {}", args.model_args.seed),
                    )
                }
            }
        }
    };

    let x = match &args.input {
        Some(path) => {
            let mut reader = BufReader::new(
                File::open(path).with_context(|| format!("open {}", path.display()))?,
            );
            let (_, t) = read_tensor_entry(&mut reader)?;
            t
        }
        None => {
            let shape_arg = args.shape.as_ref().expect("checked above");
            let spatial = ShapeArgs {
                shape: shape_arg.clone(),
                rank: None,
            }
            .parse()?;
            let mut full = vec![args.batch, model.c_in];
            full.extend_from_slice(&spatial);
            // input stream seeded independently of the weights
            let mut rng = SeededRng::new(args.model_args.seed ^ 0x5EED_1234_ABCD_0001);
            TensorNd::from_fn(&full, |_| rng.next_symmetric(1.0f32))?
        }
    };
    if x.rank() != model.spatial_rank + 2 {
        bail!(
            "input rank {} does not match model spatial rank {}",
            x.rank(),
            model.spatial_rank
        );
    }
    if x.shape()[1] != model.c_in {
        bail!(
            "input has {} channels, model expects {}",
            x.shape()[1],
            model.c_in
        );
    }

    let y = forward_with_threads(&model, &x, threads)?;

    let mut writer = BufWriter::new(
        File::create(&args.output).with_context(|| format!("create {}", args.output.display()))?,
    );
    write_tensor_entry(&mut writer, "output", &y)?;
    writer.flush()?;

    println!("model   {model_desc}");
    println!("input   {}", shape_label(x.shape()));
    println!("output  {}", shape_label(y.shape()));
    println!("seed    {}", args.model_args.seed);
    Ok(())
}

fn cmd_export(args: &ExportArgs) -> Result<()> {
    if !(1..=3).contains(&args.rank) {
        bail!("--rank must be 1, 2, or 3");
    }
    let model = args.model.build(args.rank)?;
    let mut writer = BufWriter::new(
        File::create(&args.output).with_context(|| format!("create {}", args.output.display()))?,
    );
    format::save(&model, &mut writer)?;
    writer.flush()?;
    let params = ndbm2_core::count_params(&model)?;
    println!("wrote {}", args.output.display());
    print_summary(&model, params.params_total);
    Ok(())
}

fn cmd_import(args: &ImportArgs) -> Result<()> {
    let mut reader = BufReader::new(
        File::open(&args.input).with_context(|| format!("open {}", args.input.display()))?,
    );
    let model = format::load(&mut reader)?;
    let params = ndbm2_core::count_params(&model)?;
    println!("loaded {}", args.input.display());
    print_summary(&model, params.params_total);
    println!("validation ok");
    Ok(())
}

fn print_summary(model: &BiMamba2NdModel<f32>, params: u64) {
    println!(
        "c_in {}  c_out {}  rank {}  bidirectional {}  premix {}",
        model.c_in,
        model.c_out,
        model.spatial_rank,
        model.bidirectional,
        model.premix.is_some()
    );
    let cfg = &model.cfg;
    println!(
        "d_model {}  d_state {}  expand {}  headdim {}  d_conv {}  chunk {}  ngroups {}",
        cfg.d_model, cfg.d_state, cfg.expand, cfg.headdim, cfg.d_conv, cfg.chunk, cfg.ngroups
    );
    println!("params  {params}");
}

fn main() {
    let cli = Cli::parse();
    let threads = resolve_threads(cli.threads);
    let result = match &cli.command {
        Command::PadCalc(args) => cmd_pad_calc(args),
        Command::Flops(args) => cmd_flops(args),
        Command::Bench(args) => cmd_bench(args, threads),
        Command::Run(args) => cmd_run(args, threads),
        Command::Export(args) => cmd_export(args),
        Command::Import(args) => cmd_import(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
