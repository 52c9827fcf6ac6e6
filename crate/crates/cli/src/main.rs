use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use izhrecon::io::{self, ReportFile};
use izhrecon::network::{generate_network, GeneratorConfig, DEFAULT_WEIGHT_RANGE};
use izhrecon::pipeline::{self, NetworkModel, ReconstructionConfig};
use izhrecon::{Error, NeuronParameters, SimulationConfig, TraceMatrix, WeightMatrix};

const AFTER_HELP: &str = "\
Exit codes:
  0  success
  1  unexpected failure (e.g. output not writable)
  2  invalid arguments or input files
  3  generate: no network found in which every neuron spikes
  4  reconstruct: at least one neuron could not be fitted (partial output written)";

#[derive(Parser)]
#[command(name = "izhrecon", version, about = "Simulate Izhikevich networks and reconstruct them from membrane traces", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a seeded random network; writes <prefix>.traces.csv and <prefix>.truth.json
    Generate(GenerateArgs),
    /// Recover cell parameters and weights; writes <out>.model.json, <out>.report.json, <out>.history.csv
    Reconstruct(ReconstructArgs),
    /// Compare a reconstructed model with ground truth
    Evaluate(EvaluateArgs),
    /// Emit CSV datasets for plotting
    Plotdata(PlotArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of neurons (taken from --model when omitted)
    #[arg(long)]
    neurons: Option<usize>,
    /// Number of recorded samples
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model file supplying per-neuron parameters and dt
    #[arg(long)]
    model: Option<PathBuf>,
    /// Use the weights stored in --model instead of drawing random ones
    #[arg(long, requires = "model")]
    model_weights: bool,
    /// Uniform weight range
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    weight_range: Option<Vec<f64>>,
    /// Integration step in ms (ignored with --model)
    #[arg(long, default_value_t = izhrecon::model::DEFAULT_DT)]
    dt: f64,
    #[arg(long, default_value_t = 2)]
    min_spikes: usize,
    #[arg(long, default_value_t = 100)]
    max_attempts: usize,
    #[arg(long)]
    no_self_connections: bool,
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    traces: PathBuf,
    /// GA configuration JSON; defaults apply when omitted
    #[arg(long)]
    ga_config: Option<PathBuf>,
    /// Skip the GA and fit weights with these parameters
    #[arg(long)]
    known_params: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    recon: PathBuf,
    /// Resimulation length in steps; 0 skips the trajectory comparison
    #[arg(long, default_value_t = 1000)]
    horizon: usize,
    /// Metrics CSV destination
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Report JSON: emits <out>.fitness.csv and <out>.params.csv
    #[arg(long)]
    report: Option<PathBuf>,
    /// Error surface over (a, b): emits <out>.surface.csv (needs --traces, --truth)
    #[arg(long)]
    surface: bool,
    /// Side-by-side resimulation: emits <out>.trajectory.csv (needs --truth, --recon)
    #[arg(long)]
    trajectory: bool,
    #[arg(long)]
    traces: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    recon: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    neuron: usize,
    /// Lattice points per axis for --surface
    #[arg(long, default_value_t = 50)]
    grid: usize,
    #[arg(long, default_value_t = 1000)]
    horizon: usize,
    #[arg(long)]
    out: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::GenerationExhausted { .. } => 3,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write(path: &Path, bytes: &[u8]) -> CliResult {
    io::write_atomic(path, bytes).map_err(|e| Failure {
        code: 1,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn load<T>(what: &str, path: &Path, f: impl FnOnce(&Path) -> izhrecon::Result<T>) -> CliResult<T> {
    f(path).map_err(|e| Failure::usage(format!("{what} {}: {e}", path.display())))
}

fn generate(args: GenerateArgs) -> CliResult {
    let base = args.model.as_deref().map(|p| load("model", p, io::read_model)).transpose()?;
    let n = match (&base, args.neurons) {
        (Some(m), Some(n)) if m.n() != n => {
            return Err(Failure::usage(format!("--neurons {n} disagrees with model size {}", m.n())))
        }
        (Some(m), _) => m.n(),
        (None, Some(n)) => n,
        (None, None) => return Err(Failure::usage("either --neurons or --model is required")),
    };
    if n == 0 {
        return Err(Failure::usage("--neurons must be positive"));
    }
    let (params, dt) = match &base {
        Some(m) => (m.params.clone(), m.dt),
        None => (vec![NeuronParameters::INTRINSICALLY_BURSTING; n], args.dt),
    };
    if args.steps < n + 1 {
        eprintln!(
            "warning: {} steps is below the n+1 = {} samples needed to fit {n} weights per neuron",
            args.steps,
            n + 1
        );
    }
    let mut sim = SimulationConfig::new(dt, args.steps);
    sim.allow_self_connections = !args.no_self_connections;

    let (weights, trace) = if args.model_weights {
        let model = base.expect("--model-weights requires --model");
        let mut weights = model.weights.clone();
        if !sim.allow_self_connections {
            weights.zero_diagonal();
        }
        let trace = izhrecon::model::simulate(&params, &weights, &sim)?;
        if trace.spike_counts().iter().any(|&c| c < args.min_spikes) {
            eprintln!("warning: some neurons fire fewer than {} spikes", args.min_spikes);
        }
        (weights, trace)
    } else {
        let range = match args.weight_range.as_deref() {
            Some(&[lo, hi]) => (lo, hi),
            _ => DEFAULT_WEIGHT_RANGE,
        };
        let gen = GeneratorConfig {
            weight_range: range,
            min_spikes: args.min_spikes,
            max_attempts: args.max_attempts,
        };
        let net = generate_network(&params, &sim, &gen, args.seed)?;
        if net.attempt > 0 {
            println!("accepted weight draw {} (earlier draws left neurons silent)", net.attempt);
        }
        (net.weights, net.trace)
    };

    let model = NetworkModel::new(params, weights, dt)?;
    let traces_path = with_suffix(&args.out_prefix, ".traces.csv");
    let truth_path = with_suffix(&args.out_prefix, ".truth.json");
    write(&traces_path, &io::trace_to_csv(&trace)?)?;
    write(&truth_path, &io::model_to_json(&model)?)?;
    println!("wrote {} and {}", traces_path.display(), truth_path.display());
    for (j, c) in trace.spike_counts().iter().enumerate() {
        println!("neuron {j}: {c} spikes");
    }
    Ok(())
}

fn reconstruct_known(trace: &TraceMatrix, known: &NetworkModel) -> (NetworkModel, ReportFile) {
    let n = trace.n();
    let mut weights = WeightMatrix::zeros(n);
    let mut records = Vec::with_capacity(n);
    for (i, p) in known.params.iter().enumerate() {
        let (mse, usable, failure) = match pipeline::fitness(p, trace, i) {
            Ok(eval) => {
                weights.set_row(i, &eval.weights);
                (eval.mse, eval.usable_transitions, None)
            }
            Err(e) => (pipeline::FITNESS_SENTINEL, 0, Some(e.to_string())),
        };
        records.push(io::NeuronRecord {
            neuron: i,
            params: *p,
            mse,
            usable_transitions: usable,
            failed_evaluations: usize::from(failure.is_some()),
            failure,
            history: Vec::new(),
        });
    }
    let model = NetworkModel {
        params: known.params.clone(),
        weights,
        dt: trace.dt(),
    };
    let report = ReportFile {
        mode: "known-params".into(),
        max_abs_weight_error: Some(model.weights.max_abs_diff(&known.weights)),
        neurons: records,
    };
    (model, report)
}

fn reconstruct(args: ReconstructArgs) -> CliResult {
    let trace = load("traces", &args.traces, io::read_trace)?;
    let cfg = match &args.ga_config {
        Some(p) => load("GA config", p, io::read_ga_config)?,
        None => ReconstructionConfig::default(),
    };
    let start = Instant::now();
    let (model, report) = match &args.known_params {
        Some(path) => {
            let known = load("model", path, io::read_model)?;
            if known.n() != trace.n() {
                return Err(Failure::usage(format!(
                    "model has {} neurons, traces have {}",
                    known.n(),
                    trace.n()
                )));
            }
            if (known.dt - trace.dt()).abs() > 1e-9 * known.dt {
                return Err(Failure::usage(format!(
                    "model dt {} disagrees with trace dt {}",
                    known.dt,
                    trace.dt()
                )));
            }
            reconstruct_known(&trace, &known)
        }
        None => {
            let (model, report) = pipeline::reconstruct_network(&trace, &cfg)?;
            (model, ReportFile::from_report(&report))
        }
    };
    let elapsed = start.elapsed();

    let model_path = with_suffix(&args.out, ".model.json");
    write(&model_path, &io::model_to_json(&model)?)?;
    write(&with_suffix(&args.out, ".report.json"), &io::report_to_json(&report)?)?;
    write(&with_suffix(&args.out, ".history.csv"), &io::history_to_csv(&report)?)?;

    for r in &report.neurons {
        match &r.failure {
            None => println!("neuron {}: mse {:e}, {} usable transitions", r.neuron, r.mse, r.usable_transitions),
            Some(f) => println!("neuron {}: FAILED ({f})", r.neuron),
        }
    }
    if let Some(e) = report.max_abs_weight_error {
        println!("max abs weight error vs supplied model: {e:e}");
    }
    println!("wrote {} in {:.3} s", model_path.display(), elapsed.as_secs_f64());

    let failed = report.neurons.iter().filter(|r| r.failure.is_some()).count();
    if failed > 0 {
        return Err(Failure {
            code: 4,
            message: format!("{failed} neuron(s) could not be reconstructed"),
        });
    }
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> CliResult {
    let truth = load("truth", &args.truth, io::read_model)?;
    let recon = load("reconstruction", &args.recon, io::read_model)?;
    let m = pipeline::evaluate_model(&truth, &recon, args.horizon)?;
    println!("max abs weight error: {:e}", m.max_abs_weight_error);
    for (name, e) in ["a", "b", "c", "d", "u0"].iter().zip(m.param_errors) {
        println!("max abs error {name}: {e:e}");
    }
    if let Some(mse) = m.trajectory_mse {
        println!("trajectory mse over {} steps: {mse:e}", args.horizon);
    }
    if let Some(out) = &args.out {
        write(out, &io::metrics_csv(&m)?)?;
    }
    Ok(())
}

fn plotdata(args: PlotArgs) -> CliResult {
    if args.report.is_none() && !args.surface && !args.trajectory {
        return Err(Failure::usage("nothing to do: pass --report, --surface or --trajectory"));
    }
    if let Some(path) = &args.report {
        let report = load("report", path, io::read_report)?;
        let neuron = report
            .neurons
            .iter()
            .find(|r| r.neuron == args.neuron)
            .ok_or_else(|| Failure::usage(format!("report has no neuron {}", args.neuron)))?;
        write(&with_suffix(&args.out, ".fitness.csv"), &io::fitness_curve_csv(&neuron.history)?)?;
        write(&with_suffix(&args.out, ".params.csv"), &io::parameter_curve_csv(&neuron.history)?)?;
    }
    if args.surface {
        let (Some(traces), Some(truth)) = (&args.traces, &args.truth) else {
            return Err(Failure::usage("--surface needs --traces and --truth"));
        };
        let trace = load("traces", traces, io::read_trace)?;
        let truth = load("truth", truth, io::read_model)?;
        if args.neuron >= trace.n() || truth.n() != trace.n() {
            return Err(Failure::usage("neuron index or model size does not match the traces"));
        }
        let ranges = izhrecon::ga::ParameterRanges::default();
        let a = pipeline::linspace(ranges.a.0, ranges.a.1, args.grid);
        let b = pipeline::linspace(ranges.b.0, ranges.b.1, args.grid);
        let opts = ReconstructionConfig::default().assemble_options();
        let points = pipeline::error_surface(&trace, args.neuron, &a, &b, &truth.params[args.neuron], &opts);
        write(&with_suffix(&args.out, ".surface.csv"), &io::surface_csv(&points)?)?;
    }
    if args.trajectory {
        let (Some(truth), Some(recon)) = (&args.truth, &args.recon) else {
            return Err(Failure::usage("--trajectory needs --truth and --recon"));
        };
        let truth = load("truth", truth, io::read_model)?;
        let recon = load("reconstruction", recon, io::read_model)?;
        if truth.n() != recon.n() {
            return Err(Failure::usage("models differ in size"));
        }
        let steps = args.horizon.max(2);
        let a = truth.simulate(steps)?;
        let b = recon.simulate(steps)?;
        write(&with_suffix(&args.out, ".trajectory.csv"), &io::trajectory_csv(&a, &b)?)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Plotdata(a) => plotdata(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
