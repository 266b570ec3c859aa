use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hetmpc::bench::{bench_suite, render, Frac};
use hetmpc::circuit::random::seeded_inputs;
use hetmpc::circuit::{evaluate_cleartext, Circuit, Inputs};
use hetmpc::harness::{load_circuit, run_scenario_file, Outcome};
use hetmpc::party::PartyId;
use hetmpc::ring::Width;
use hetmpc::runner::{run3, run4, seed_from, Backend, Homogenize, RunError, RunOptions, RunReport};
use hetmpc::transport::NetProfile;

const EXIT_USAGE: u8 = 2;
const EXIT_ABORT: u8 = 3;

#[derive(Parser)]
#[command(name = "hetmpc", version, about = "Three- and four-party computation over Z_2^k")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a circuit under one of the protocols.
    Run(RunArgs),
    /// Evaluate a circuit in the clear.
    Eval(EvalArgs),
    /// Compare measured per-gate costs with the reference constants.
    Bench {
        #[arg(long)]
        json: bool,
    },
    /// Run attack scenarios.
    Attack {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Proto {
    #[value(name = "3pc")]
    Three,
    #[value(name = "4pc")]
    Four,
}

#[derive(Clone, Copy, ValueEnum)]
enum Transport {
    Sim,
    Tcp,
}

#[derive(Args)]
struct CircuitArgs {
    /// Circuit file (`.txt`/`.bristol` for Bristol fashion).
    circuit: PathBuf,
    /// Ring bit width, overriding the circuit's.
    #[arg(long)]
    ring: Option<u32>,
    /// JSON map of input names to values, inline or as a file. Missing
    /// inputs are drawn from the seed.
    #[arg(long)]
    inputs: Option<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    circuit: CircuitArgs,
    #[arg(long, value_enum, default_value = "3pc")]
    proto: Proto,
    #[arg(long, value_enum, default_value = "sim")]
    transport: Transport,
    /// Network profile (JSON): link latencies and bandwidths, TCP endpoints.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// off, perm or rotate.
    #[arg(long, default_value = "off")]
    homogenize: Homogenize,
    #[arg(long, default_value_t = 10)]
    checkpoint_interval: usize,
    #[arg(long)]
    fair: bool,
    #[arg(long)]
    god: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    circuit: CircuitArgs,
    /// Plain evaluation; the only mode, accepted for symmetry with `run`.
    #[arg(long)]
    clear: bool,
}

enum Fail {
    Usage(String),
    Abort(String),
    Other(String),
}

impl From<RunError> for Fail {
    fn from(e: RunError) -> Fail {
        match e {
            RunError::Usage(m) => Fail::Usage(m),
            RunError::Circuit(e) => Fail::Usage(e.to_string()),
            e => Fail::Other(e.to_string()),
        }
    }
}

fn parse_inputs(arg: &str) -> Result<Inputs, Fail> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|e| Fail::Usage(format!("{arg}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| Fail::Usage(format!("inputs: {e}")))
}

fn load(a: &CircuitArgs) -> Result<(Circuit, Inputs), Fail> {
    let mut c = load_circuit(&a.circuit).map_err(|e| Fail::Usage(e.to_string()))?;
    if let Some(k) = a.ring {
        let w = Width::try_from(k).map_err(|e| Fail::Usage(format!("--ring {k}: {e}")))?;
        c = c.with_width(w);
    }
    let given = match &a.inputs {
        Some(s) => parse_inputs(s)?,
        None => Inputs::new(),
    };
    if let Some(name) = given.keys().find(|n| !c.inputs().any(|g| &c.wire_name(g.id) == *n)) {
        return Err(Fail::Usage(format!("circuit has no input named `{name}`")));
    }
    let x = seeded_inputs(&c, &given, a.seed);
    Ok((c, x))
}

fn print_outputs(c: &Circuit, values: &std::collections::BTreeMap<u32, u64>) {
    for (id, v) in values {
        println!("{} = {v}", c.wire_name(*id));
    }
}

fn profile(path: &Option<PathBuf>, transport: Transport) -> Result<NetProfile, Fail> {
    match path {
        Some(p) => NetProfile::load(p).map_err(|e| Fail::Usage(format!("{}: {e}", p.display()))),
        None => match transport {
            Transport::Sim => Ok(NetProfile::new()),
            Transport::Tcp => Err(Fail::Usage("--transport tcp needs --profile".into())),
        },
    }
}

/// Multiplication elements per directed channel per gate per instance.
fn channel_fractions(r: &RunReport, gates: u64) -> String {
    let t = r.metrics.mul_traffic();
    let d = gates * r.instances as u64;
    let mut s = format!("{:<8} {:>10} {:>10} {:>10}\n", "channel", "offline", "online", "total");
    for ((a, b), (off, on)) in &t.per_channel {
        s += &format!("{:<8} {:>10} {:>10} {:>10}\n", format!("{a}->{b}"), Frac(*off, d), Frac(*on, d), Frac(off + on, d));
    }
    s
}

fn cmd_run(a: &RunArgs) -> Result<(), Fail> {
    let (c, x) = load(&a.circuit)?;
    let net = profile(&a.profile, a.transport)?;
    let opts = RunOptions {
        backend: match a.transport {
            Transport::Sim => Backend::Sim(net),
            Transport::Tcp => Backend::Tcp(net),
        },
        seed: seed_from(a.circuit.seed),
        homogenize: a.homogenize,
        checkpoint_interval: a.checkpoint_interval,
        fair: a.fair,
        god: a.god,
        ..RunOptions::default()
    };
    let r = match a.proto {
        Proto::Three => {
            if a.fair || a.god {
                return Err(Fail::Usage("--fair and --god need --proto 4pc".into()));
            }
            run3(&c, &x, &opts)?
        }
        Proto::Four => run4(&c, &x, &opts)?,
    };
    let gates = c.muls().len() as u64;
    let values = r.honest_output(None);
    if a.json {
        let outputs: serde_json::Map<String, serde_json::Value> = values
            .iter()
            .flatten()
            .map(|(id, v)| (c.wire_name(*id), serde_json::json!(v)))
            .collect();
        let doc = serde_json::json!({
            "outputs": outputs,
            "aborted": values.is_none(),
            "instances": r.instances,
            "mul_gates": gates,
            "depth": c.depth(),
            "resets": r.resets,
            "elapsed_ms": r.elapsed_ms,
            "metrics": r.metrics.to_json(gates),
        });
        println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
    } else {
        if let Some(v) = &values {
            print_outputs(&c, v);
        }
        println!();
        print!("{}", r.metrics.table(gates));
        if gates > 0 {
            println!();
            print!("{}", channel_fractions(&r, gates));
        }
        println!("\ninstances {}  mul gates {}  depth {}  elapsed {:.3} ms", r.instances, gates, c.depth(), r.elapsed_ms);
        if a.god {
            println!("resets {}", r.resets);
        }
    }
    match values {
        Some(_) => Ok(()),
        None => {
            let why: Vec<String> = r
                .outputs
                .iter()
                .filter_map(|(p, o)| o.as_ref().err().map(|e| format!("{p}: {e}")))
                .collect();
            Err(Fail::Abort(if why.is_empty() { "outputs disagree".into() } else { why.join("; ") }))
        }
    }
}

fn cmd_eval(a: &EvalArgs) -> Result<(), Fail> {
    let (c, x) = load(&a.circuit)?;
    let out = evaluate_cleartext(&c, &x).map_err(|e| Fail::Usage(e.to_string()))?;
    print_outputs(&c, &out);
    Ok(())
}

fn cmd_bench(json: bool) -> Result<(), Fail> {
    let rows = bench_suite(&RunOptions::default())?;
    if json {
        println!("{}", serde_json::to_string_pretty(&rows).expect("json"));
    } else {
        print!("{}", render(&rows));
    }
    match rows.iter().filter(|r| !r.pass).count() {
        0 => Ok(()),
        n => Err(Fail::Other(format!("{n} rows differ from the expected constants"))),
    }
}

fn describe(o: &Outcome) -> String {
    let list = |ps: &[PartyId]| ps.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",");
    match o {
        Outcome::Output { values } => format!("output {values:?}"),
        Outcome::Abort { pairs, checks } => {
            let pairs: Vec<String> = pairs.iter().map(|(a, b)| format!("{a}-{b}")).collect();
            format!("abort pairs [{}] checks {checks:?}", pairs.join(" "))
        }
        Outcome::GodOutput { values, resets, excluded } => {
            format!("output after {resets} resets, excluded [{}] {values:?}", list(excluded))
        }
        Outcome::Split { outputs, aborts } => format!("SPLIT output [{}] abort [{}]", list(outputs), list(aborts)),
    }
}

fn cmd_attack(paths: &[PathBuf], json: bool) -> Result<(), Fail> {
    let mut reports = Vec::new();
    for p in paths {
        let (sc, r) = run_scenario_file(Path::new(p), &RunOptions::default()).map_err(|e| Fail::Usage(e.to_string()))?;
        let name = if sc.name.is_empty() { p.display().to_string() } else { sc.name.clone() };
        if json {
            reports.push(serde_json::json!({ "name": name, "corrupt": sc.corrupt, "tampered": r.tampered, "result": r.outcome }));
        } else {
            println!("{name}: corrupt {} tampered {} -> {}", sc.corrupt, r.tampered, describe(&r.outcome));
        }
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&reports).expect("json"));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Bench { json } => cmd_bench(*json),
        Cmd::Attack { scenarios, json } => cmd_attack(scenarios, *json),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Fail::Abort(m)) => {
            eprintln!("abort: {m}");
            ExitCode::from(EXIT_ABORT)
        }
        Err(Fail::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::FAILURE
        }
    }
}
