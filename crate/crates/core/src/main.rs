use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use gmfdfa::cascade::{analytic_h, analytic_spread, generate, CascadeParams};
use gmfdfa::cli::ingest::write_columns;
use gmfdfa::cli::output::{write_sweep_csv, write_timing, SWEEP_CSV};
use gmfdfa::cli::{cascade_sweep, emit_outputs, render_table, run_analysis, AnalysisConfig, PriceSeries, SweepConfig};
use gmfdfa::{DetrendConfig, Error, ErrorClass, QGrid};

#[derive(Parser)]
#[command(name = "gmfdfa", version, about = "Multifractal analysis with bias-aware measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyse a price CSV or a generated cascade.
    Analyze(AnalyzeArgs),
    /// Simulated versus theoretical spread over a range of cascade parameters.
    Sweep(SweepArgs),
    /// Write a binomial cascade to CSV (columns index, increment, price).
    Cascade(CascadeArgs),
    /// Print the closed-form cascade exponents.
    Theory(TheoryArgs),
    /// Print the default configuration file.
    DefaultConfig,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// key = value configuration file; flags below override it.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Column name, zero-based index or "last".
    #[arg(long)]
    column: Option<String>,
    #[arg(long)]
    delimiter: Option<String>,
    /// auto, yes or no.
    #[arg(long)]
    header: Option<String>,
    #[arg(long)]
    cascade_a: Option<f64>,
    #[arg(long)]
    cascade_depth: Option<u32>,
    /// Comma-separated list, or "all".
    #[arg(long)]
    transforms: Option<String>,
    #[arg(long)]
    max_q: Option<f64>,
    #[arg(long)]
    q_step: Option<f64>,
    #[arg(long)]
    tau_min: Option<usize>,
    #[arg(long)]
    tau_max: Option<usize>,
    #[arg(long)]
    tau_count: Option<usize>,
    #[arg(long)]
    fit_min: Option<usize>,
    #[arg(long)]
    fit_max: Option<usize>,
    #[arg(long)]
    detrend_order: Option<usize>,
    #[arg(long)]
    integrate: Option<bool>,
    #[arg(long)]
    window: Option<usize>,
    /// phase_randomized, shuffle or gaussian_matched.
    #[arg(long)]
    surrogate: Option<String>,
    /// Surrogate replicas; 0 skips the bias ribbon.
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    confidence: Option<f64>,
    /// simultaneous or pointwise.
    #[arg(long)]
    envelope: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Extra key=value overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl AnalyzeArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        fn s<T: ToString>(v: &Option<T>) -> Option<String> {
            v.as_ref().map(|t| t.to_string())
        }
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        [
            ("input", path(&self.input)),
            ("column", s(&self.column)),
            ("delimiter", s(&self.delimiter)),
            ("header", s(&self.header)),
            ("cascade_a", s(&self.cascade_a)),
            ("cascade_depth", s(&self.cascade_depth)),
            ("transforms", s(&self.transforms)),
            ("max_q", s(&self.max_q)),
            ("q_step", s(&self.q_step)),
            ("tau_min", s(&self.tau_min)),
            ("tau_max", s(&self.tau_max)),
            ("tau_count", s(&self.tau_count)),
            ("fit_min", s(&self.fit_min)),
            ("fit_max", s(&self.fit_max)),
            ("detrend_order", s(&self.detrend_order)),
            ("integrate", s(&self.integrate)),
            ("window", s(&self.window)),
            ("surrogate", s(&self.surrogate)),
            ("replicas", s(&self.replicas)),
            ("confidence", s(&self.confidence)),
            ("envelope", s(&self.envelope)),
            ("seed", s(&self.seed)),
            ("output_dir", path(&self.output)),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }

    fn config(&self) -> Result<AnalysisConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => AnalysisConfig::from_file(path)?,
            None => AnalysisConfig::default(),
        };
        // a source given on the command line replaces the one in the file
        if self.input.is_some() {
            cfg.cascade_a = None;
        }
        if self.cascade_a.is_some() {
            cfg.input = None;
        }
        for (key, value) in self.overrides() {
            cfg.set(key, &value)?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 0.51)]
    a_min: f64,
    #[arg(long, default_value_t = 0.95)]
    a_max: f64,
    #[arg(long, default_value_t = 0.01)]
    a_step: f64,
    #[arg(long, default_value_t = 16)]
    depth: u32,
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 15.0)]
    max_q: f64,
    #[arg(long, default_value_t = 0.25)]
    q_step: f64,
    #[arg(long, default_value_t = 2)]
    detrend_order: usize,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CascadeArgs {
    #[arg(long)]
    a: f64,
    #[arg(long, default_value_t = 16)]
    depth: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct TheoryArgs {
    #[arg(long)]
    a: f64,
    #[arg(long, default_value_t = 15.0)]
    max_q: f64,
    #[arg(long, default_value_t = 0.25)]
    q_step: f64,
}

fn analyze(args: &AnalyzeArgs) -> Result<(), Error> {
    let cfg = args.config()?;
    let start = Instant::now();
    let bundle = run_analysis(&cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    print!("{}", render_table(&bundle));
    if let Some(dir) = &cfg.output_dir {
        for path in emit_outputs(&bundle, dir)? {
            eprintln!("wrote {}", path.display());
        }
        write_timing(dir, seconds)?;
    }
    eprintln!("finished in {seconds:.2} s");
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<(), Error> {
    if !(args.a_step > 0.0) || args.a_max < args.a_min {
        return Err(Error::Config("sweep range must satisfy a_min <= a_max and a_step > 0".into()));
    }
    let n = ((args.a_max - args.a_min) / args.a_step + 1e-9).floor() as usize;
    // rounded to the step's precision so that 0.51 + 4 * 0.01 prints as 0.55
    let a_values = (0..=n)
        .map(|i| ((args.a_min + i as f64 * args.a_step) * 1e9).round() / 1e9)
        .collect();
    let cfg = SweepConfig {
        a_values,
        depth: args.depth,
        seeds: args.seeds,
        base_seed: args.seed,
        q_grid: QGrid::new(args.max_q, args.q_step)?,
        detrend: DetrendConfig::new(args.detrend_order, true)?,
    };
    let rows = cascade_sweep(&cfg)?;
    println!("{:>6} {:>10} {:>10} {:>10}", "a", "theory", "dh", "dh_l2");
    for r in &rows {
        println!("{:>6.2} {:>10.4} {:>10.4} {:>10.4}", r.a, r.delta_h_theory, r.delta_h, r.delta_h2);
    }
    if let Some(dir) = &args.output {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(SWEEP_CSV);
        write_sweep_csv(&path, &rows)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cascade(args: &CascadeArgs) -> Result<(), Error> {
    let dx = generate(&CascadeParams::new(args.a, args.depth, args.seed)?)?;
    let data = PriceSeries::from_increments(dx, 1.0)?;
    let index: Vec<f64> = (0..data.prices.len()).map(|i| i as f64).collect();
    // the price column has one more row than the increments
    let mut inc = vec![0.0];
    inc.extend_from_slice(data.increments.values());
    write_columns(&args.output, &[("index", &index), ("increment", &inc), ("price", data.prices.values())])?;
    eprintln!("wrote {}", args.output.display());
    Ok(())
}

fn theory(args: &TheoryArgs) -> Result<(), Error> {
    let grid = QGrid::new(args.max_q, args.q_step)?;
    println!("q,h");
    for q in grid.values() {
        println!("{q},{}", analytic_h(args.a, *q)?);
    }
    eprintln!("spread h(-Q) - h(Q) = {}", analytic_spread(args.a, args.max_q)?);
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numerical => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Sweep(a) => sweep(a),
        Command::Cascade(a) => cascade(a),
        Command::Theory(a) => theory(a),
        Command::DefaultConfig => {
            print!("{}", AnalysisConfig::default().to_text());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
