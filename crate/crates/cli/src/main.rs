use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::TcpListener;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use prac_core::fountain::{self, DegreeDistribution, FountainSpec, PeelingDecoder};
use prac_core::gf256::FieldMatrix;
use prac_core::keycode::{mds_audit, KeyGenerator};
use prac_core::netproto::{self, DelayModel, NetGroups, NetMasterOptions};
use prac_core::prac::{audit_privacy, hide_x_run, GroupSpec};
use prac_core::simulate::{self, AdversaryRule, C3pWorkers, Scenario, Scheme, ServiceScale, SimConfig};
use prac_core::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_FAILED: u8 = 3;
const EXIT_TIMEOUT: u8 = 4;

#[derive(Parser)]
#[command(name = "prac", version, about = "Private rateless adaptive coded matrix-vector multiplication")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run simulated trials and write one CSV row per trial.
    Simulate(SimulateArgs),
    /// Evaluate the closed-form completion-time estimates for a config.
    Estimate(EstimateArgs),
    /// Check that every z packets of a round determine its keys and reveal nothing.
    AuditPrivacy(AuditArgs),
    /// Measure the fountain decoding overhead.
    FountainOverhead(OverheadArgs),
    /// Serve one master session on a TCP endpoint.
    NetWorker(WorkerArgs),
    /// Compute A x on networked workers.
    NetMaster(MasterArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Prac,
    Staircase,
    C3p,
    Gc3p,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Fastest,
    Slowest,
    Random,
}

impl From<RuleArg> for AdversaryRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Fastest => AdversaryRule::Fastest,
            RuleArg::Slowest => AdversaryRule::Slowest,
            RuleArg::Random => AdversaryRule::Random,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    PerRow,
    PerTask,
}

#[derive(Clone, Copy, ValueEnum)]
enum C3pArg {
    All,
    NMinusZ,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// 1, 2, 3, clustered, homogeneous:RATE or custom:R1,R2,...
    #[arg(long, default_value = "1")]
    scenario: String,
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 13)]
    z: usize,
    /// Row blocks; defaults to m.
    #[arg(long)]
    b: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    m: usize,
    #[arg(long, default_value_t = 1000)]
    ell: usize,
    #[arg(long, value_enum, default_value = "random")]
    adversary_rule: RuleArg,
    #[arg(long, value_enum, default_value = "per-row")]
    scale: ScaleArg,
    #[arg(long, value_enum, default_value = "all")]
    c3p_workers: C3pArg,
    #[arg(long, env = "PRAC_SEED", default_value_t = 1)]
    seed: u64,
}

impl ConfigArgs {
    fn config(&self) -> Result<SimConfig, Error> {
        let scenario = Scenario::parse(&self.scenario)?;
        let mut c = SimConfig::new(self.n, self.z, self.b.unwrap_or(self.m), scenario, self.seed);
        c.m = self.m;
        c.ell = self.ell;
        c.adversary_rule = self.adversary_rule.into();
        c.scale = match self.scale {
            ScaleArg::PerRow => ServiceScale::PerRow,
            ScaleArg::PerTask => ServiceScale::PerTask,
        };
        c.c3p_workers = match self.c3p_workers {
            C3pArg::All => C3pWorkers::All,
            C3pArg::NMinusZ => C3pWorkers::NMinusZ,
        };
        c.validate()?;
        Ok(c)
    }

    fn manifest(&self) -> String {
        format!(
            "scenario={} n={} z={} b={} m={} ell={} adversary_rule={} scale={} c3p_workers={} seed={}",
            self.scenario,
            self.n,
            self.z,
            self.b.map_or("m".to_string(), |b| b.to_string()),
            self.m,
            self.ell,
            AdversaryRule::from(self.adversary_rule).label(),
            match self.scale {
                ScaleArg::PerRow => "per-row",
                ScaleArg::PerTask => "per-task",
            },
            match self.c3p_workers {
                C3pArg::All => "all",
                C3pArg::NMinusZ => "n-minus-z",
            },
            self.seed
        )
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "all")]
    scheme: SchemeArg,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Vary one of n, z, b, m, ell over an inclusive range: `z:1..40` or `n:10..100:10`.
    #[arg(long)]
    sweep: Option<String>,
    /// Give every scheme the same per-trial delays.
    #[arg(long)]
    paired: bool,
    /// CSV destination; standard output if absent.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Fountain overhead in packets; nominal 5% of b if absent.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Measure the overhead from this many simulated runs instead.
    #[arg(long)]
    measure_trials: Option<usize>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    z: usize,
    #[arg(long, default_value_t = 16)]
    rounds: usize,
    #[arg(long, env = "PRAC_SEED", default_value_t = 1)]
    seed: u64,
    /// Overwrite the last generator row with the one before it.
    #[arg(long)]
    corrupt: bool,
}

#[derive(Args)]
struct OverheadArgs {
    #[arg(long, default_value_t = 1000)]
    b: usize,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = fountain::DEFAULT_C)]
    c: f64,
    #[arg(long, default_value_t = fountain::DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, env = "PRAC_SEED", default_value_t = 1)]
    seed: u64,
    /// Also decode the six-block walkthrough packet set.
    #[arg(long)]
    walkthrough: bool,
    /// Per-trial CSV destination.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct WorkerArgs {
    #[arg(long, default_value = "127.0.0.1:0")]
    listen: String,
    /// Mean of the exponential artificial delay per packet, seconds.
    #[arg(long)]
    delay_mean: Option<f64>,
    #[arg(long, env = "PRAC_SEED", default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct MasterArgs {
    /// Comma-separated host:port list.
    #[arg(long, value_delimiter = ',', required = true)]
    workers: Vec<String>,
    #[arg(long, default_value_t = 2)]
    z: usize,
    #[arg(long, default_value_t = 60)]
    m: usize,
    #[arg(long, default_value_t = 1000)]
    ell: usize,
    /// Row blocks; defaults to m.
    #[arg(long)]
    b: Option<usize>,
    #[arg(long, env = "PRAC_SEED", default_value_t = 1)]
    seed: u64,
    /// Seconds before giving up.
    #[arg(long, default_value_t = 120.0)]
    timeout: f64,
    /// Compare with a local multiplication and print PASS or FAIL.
    #[arg(long)]
    verify: bool,
    /// Hide x too: the first `split` workers see x + u, the others u.
    #[arg(long)]
    hide_x: bool,
    #[arg(long)]
    split: Option<usize>,
    /// Collusion bound of the second group; defaults to z.
    #[arg(long)]
    z2: Option<usize>,
}

enum Failure {
    Usage(String),
    Failed(String),
    Timeout(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) => Failure::Usage(e.to_string()),
            Error::Timeout(_) => Failure::Timeout(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::AuditPrivacy(a) => cmd_audit(a),
        Command::FountainOverhead(a) => cmd_overhead(a),
        Command::NetWorker(a) => cmd_worker(a),
        Command::NetMaster(a) => cmd_master(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Failed(m)) => {
            eprintln!("{m}");
            ExitCode::from(EXIT_FAILED)
        }
        Err(Failure::Timeout(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_TIMEOUT)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::FAILURE
        }
    }
}

fn output(path: &Option<String>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

struct Sweep {
    param: String,
    values: Vec<usize>,
}

fn parse_sweep(s: &str) -> Result<Sweep, Failure> {
    let bad = || Failure::Usage(format!("bad sweep {s:?}: expected PARAM:FROM..TO[:STEP]"));
    let mut parts = s.split(':');
    let param = parts.next().ok_or_else(bad)?.to_string();
    if !["n", "z", "b", "m", "ell"].contains(&param.as_str()) {
        return Err(Failure::Usage(format!("cannot sweep {param:?}; use n, z, b, m or ell")));
    }
    let (from, to) = parts.next().and_then(|r| r.split_once("..")).ok_or_else(bad)?;
    let from: usize = from.parse().map_err(|_| bad())?;
    let to: usize = to.parse().map_err(|_| bad())?;
    let step: usize = match parts.next() {
        Some(st) => st.parse().map_err(|_| bad())?,
        None => 1,
    };
    if step == 0 || from > to || parts.next().is_some() {
        return Err(bad());
    }
    Ok(Sweep { param, values: (from..=to).step_by(step).collect() })
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), Failure> {
    if a.trials == 0 {
        return Err(Failure::Usage("--trials must be at least 1".into()));
    }
    let schemes: Vec<Scheme> = match a.scheme {
        SchemeArg::All => Scheme::ALL.to_vec(),
        SchemeArg::Prac => vec![Scheme::Prac],
        SchemeArg::Staircase => vec![Scheme::Staircase],
        SchemeArg::C3p => vec![Scheme::C3p],
        SchemeArg::Gc3p => vec![Scheme::Gc3p],
    };
    let points: Vec<ConfigArgs> = match &a.sweep {
        None => vec![a.config.clone()],
        Some(s) => {
            let sweep = parse_sweep(s)?;
            sweep
                .values
                .iter()
                .map(|&v| {
                    let mut c = a.config.clone();
                    match sweep.param.as_str() {
                        "n" => c.n = v,
                        "z" => c.z = v,
                        "b" => c.b = Some(v),
                        "m" => c.m = v,
                        _ => c.ell = v,
                    }
                    c
                })
                .collect()
        }
    };
    let configs = points.iter().map(|p| p.config()).collect::<Result<Vec<_>, _>>()?;

    let manifest = format!(
        "prac simulate scheme={} trials={} paired={} sweep={} {}",
        schemes.iter().map(|s| s.label()).collect::<Vec<_>>().join("+"),
        a.trials,
        a.paired,
        a.sweep.as_deref().unwrap_or("none"),
        a.config.manifest()
    );
    let mut records = Vec::new();
    let mut summary = String::new();
    for c in &configs {
        for &s in &schemes {
            let res = simulate::batch(c, s, a.trials, a.paired)?;
            summary.push_str(&format!(
                "{:<9} n={:<3} z={:<3} b={:<5} m={:<5} mean={:.4}s ci95=±{:.4}s eps={:.1}\n",
                s.label(),
                c.n,
                c.z,
                c.b,
                c.m,
                res.summary.mean,
                res.summary.ci95,
                res.mean_epsilon()
            ));
            records.extend(res.records);
        }
    }
    let mut out = output(&a.out)?;
    simulate::write_csv(&mut out, &manifest, &records)?;
    out.flush()?;
    if a.out.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    Ok(())
}

fn cmd_estimate(a: EstimateArgs) -> Result<(), Failure> {
    let c = a.config.config()?;
    if c.z == 0 {
        return Err(Failure::Usage("estimates need z >= 1".into()));
    }
    let epsilon = match (a.epsilon, a.measure_trials) {
        (Some(_), Some(_)) => return Err(Failure::Usage("give --epsilon or --measure-trials, not both".into())),
        (Some(e), None) => e,
        (None, Some(t)) => simulate::batch(&c, Scheme::Prac, t, false)?.mean_epsilon(),
        (None, None) => 0.05 * c.b as f64,
    };
    let betas = simulate::expected_betas(&c, simulate::trial_seed(c.seed, Scheme::Prac, 0, true))?;
    let t3 = simulate::theorem3_estimate(&betas, c.z, c.b, epsilon)?;
    let d_star = simulate::staircase_dstar(&betas, c.z, c.b)?;
    let t4 = simulate::theorem4_bound(&betas, c.z, d_star, c.b, epsilon)?;
    let slowest = betas.iter().cloned().fold(0.0, f64::max);
    println!("# prac estimate epsilon={epsilon} {}", a.config.manifest());
    println!("epsilon_packets     {epsilon:.3}");
    println!("prac_estimate_s     {t3:.6}");
    println!("homogeneous_slow_s  {:.6}", (c.b as f64 + epsilon) * slowest / (c.n - c.z) as f64);
    println!("staircase_d_star    {d_star}");
    println!("gap_lower_bound_s   {t4:.6}");
    Ok(())
}

fn cmd_audit(a: AuditArgs) -> Result<(), Failure> {
    if a.n > 20 {
        return Err(Failure::Usage(format!("exhaustive audit supports n <= 20, got {}", a.n)));
    }
    let mut gen = KeyGenerator::build(a.n, a.z)?;
    if a.corrupt {
        let g = gen.matrix();
        let mut rows: Vec<Vec<u8>> = (0..g.rows()).map(|r| g.row(r).to_vec()).collect();
        let n = rows.len();
        rows[n - 1] = rows[n - 2].clone();
        gen = KeyGenerator::from_matrix(FieldMatrix::from_rows(&rows)?)?;
    }
    let structural = mds_audit(gen.matrix());
    let report = audit_privacy(&gen, a.rounds, a.seed)?;
    println!("# prac audit-privacy n={} z={} rounds={} corrupt={} seed={}", a.n, a.z, a.rounds, a.corrupt, a.seed);
    match &structural {
        Ok(k) => println!("generator           all {k} {}x{} submatrices invertible", a.z, a.z),
        Err(rows) => println!("generator           singular rows {rows:?}"),
    }
    println!("subsets_checked     {}", report.subsets_checked);
    println!("keys_recovered      {}", report.keys_recovered);
    println!("pad_bytes           {}", report.pad_bytes);
    println!("pad_chi2_p          {:.4}", report.pad_p_value);
    for f in &report.failures {
        println!("FAIL {f}");
    }
    if structural.is_ok() && report.passed() {
        println!("PASS");
        Ok(())
    } else {
        Err(Failure::Failed("FAIL".into()))
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn cmd_overhead(a: OverheadArgs) -> Result<(), Failure> {
    if a.b == 0 || a.trials == 0 {
        return Err(Failure::Usage("--b and --trials must be at least 1".into()));
    }
    let dist = DegreeDistribution::robust_soliton(a.b, a.c, a.delta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let packets: Vec<usize> = (0..a.trials).map(|_| fountain::packets_to_decode(&dist, &mut rng)).collect();
    let mut ratios: Vec<f64> = packets.iter().map(|&p| (p - a.b) as f64 / a.b as f64).collect();
    let manifest = format!(
        "prac fountain-overhead b={} trials={} c={} delta={} seed={}",
        a.b, a.trials, a.c, a.delta, a.seed
    );
    if a.out.is_some() {
        let mut out = output(&a.out)?;
        writeln!(out, "# {manifest}")?;
        writeln!(out, "trial,packets,epsilon,epsilon_over_b")?;
        for (t, (&p, r)) in packets.iter().zip(&ratios).enumerate() {
            writeln!(out, "{t},{p},{},{r}", p - a.b)?;
        }
        out.flush()?;
    }
    ratios.sort_by(f64::total_cmp);
    println!("# {manifest}");
    for (label, q) in [("min", 0.0), ("q10", 0.1), ("median", 0.5), ("q90", 0.9), ("max", 1.0)] {
        println!("{:<24}{:.4}", format!("epsilon_over_b_{label}"), quantile(&ratios, q));
    }
    println!("{:<24}{:.4}", "nominal", 0.05);
    if a.walkthrough {
        walkthrough()?;
    }
    Ok(())
}

fn walkthrough() -> Result<(), Failure> {
    let sets: [&[u32]; 7] = [&[3], &[2, 3, 5], &[2], &[3, 4], &[1], &[0], &[1, 2]];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let blocks: Vec<FieldMatrix> = (0..6).map(|_| FieldMatrix::random(1, 4, &mut rng)).collect();
    let mut dec = PeelingDecoder::new(6, 4);
    let mut complete_at = None;
    for (i, s) in sets.iter().enumerate() {
        let spec = FountainSpec::new(s.to_vec(), 6)?;
        let payload = fountain::encode(&blocks, &spec)?;
        dec.ingest(&spec, payload.as_bytes())?;
        if complete_at.is_none() && dec.is_complete() {
            complete_at = Some(i + 1);
        }
    }
    let ok = dec.is_complete() && dec.decoded()?.iter().zip(&blocks).all(|(d, b)| *d == b.as_bytes());
    println!(
        "walkthrough             {} packets for 6 blocks: epsilon = {}; peeling completes at packet {}; {}",
        sets.len(),
        sets.len() - 6,
        complete_at.map_or("-".into(), |k| k.to_string()),
        if ok { "decoded" } else { "NOT decoded" }
    );
    if ok {
        Ok(())
    } else {
        Err(Failure::Failed("walkthrough packet set did not decode".into()))
    }
}

fn cmd_worker(a: WorkerArgs) -> Result<(), Failure> {
    let delay = match a.delay_mean {
        Some(m) => DelayModel::exponential(m, a.seed)?,
        None => DelayModel::None,
    };
    let listener = TcpListener::bind(&a.listen)?;
    println!("listening on {}", listener.local_addr()?);
    io::stdout().flush()?;
    let stats = netproto::run_worker(&listener, &delay)?;
    println!(
        "stopped: packets={} results={} discarded={} delay={:.3}s",
        stats.packets,
        stats.results_sent,
        stats.discarded,
        stats.total_delay.as_secs_f64()
    );
    Ok(())
}

fn cmd_master(a: MasterArgs) -> Result<(), Failure> {
    let b = a.b.unwrap_or(a.m);
    if !(a.timeout.is_finite() && a.timeout > 0.0) {
        return Err(Failure::Usage("--timeout must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let am = FieldMatrix::random(a.m, a.ell, &mut rng);
    let x: Vec<u8> = (0..a.ell).map(|_| rng.random()).collect();
    let mut opts = NetMasterOptions::new(a.z, b, a.seed);
    opts.timeout = Duration::from_secs_f64(a.timeout);

    let (output, report) = if a.hide_x {
        let split = a.split.unwrap_or(a.workers.len() / 2);
        if split == 0 || split >= a.workers.len() {
            return Err(Failure::Usage(format!("--split {split} must leave workers in both groups")));
        }
        let specs = [
            GroupSpec { n: split, z: a.z },
            GroupSpec { n: a.workers.len() - split, z: a.z2.unwrap_or(a.z) },
        ];
        let mut groups = NetGroups {
            endpoints: [a.workers[..split].to_vec(), a.workers[split..].to_vec()],
            opts,
            runs: Vec::new(),
        };
        let out = hide_x_run(&am, &x, specs, &mut groups, &mut rng)?;
        let raw = FieldMatrix::column(x.clone()).to_bytes();
        let leaked = (0..split).any(|w| {
            groups.runs[0]
                .transcript
                .sent_payloads(w)
                .any(|p| p == raw.as_slice() || p == x.as_slice())
        });
        let mut checks = Vec::new();
        for (g, run) in groups.runs.iter().enumerate() {
            run.transcript
                .check_causality()
                .and_then(|_| run.transcript.check_stop(specs[g].n))
                .unwrap_or_else(|e| checks.push(format!("group {}: {e}", g + 1)));
        }
        if leaked {
            checks.push("group 1 was sent raw x".into());
        }
        let elapsed: f64 = groups.runs.iter().map(|r| r.elapsed.as_secs_f64()).sum();
        let packets: usize = groups.runs.iter().map(|r| r.packets_sent).sum();
        println!("groups              {} + {} workers, x hidden from group 1: {}", specs[0].n, specs[1].n, !leaked);
        (out, (elapsed, packets, checks))
    } else {
        let run = netproto::run_master(&a.workers, &am, &x, &opts)?;
        let mut checks = Vec::new();
        if let Err(e) = run.transcript.check_causality() {
            checks.push(e);
        }
        if let Err(e) = run.transcript.check_stop(a.workers.len()) {
            checks.push(e);
        }
        (run.output.clone(), (run.elapsed.as_secs_f64(), run.packets_sent, checks))
    };
    let (elapsed, packets, checks) = report;
    println!("# prac net-master workers={} z={} m={} ell={} b={b} seed={}", a.workers.len(), a.z, a.m, a.ell, a.seed);
    println!("elapsed_s           {elapsed:.3}");
    println!("packets_sent        {packets}");
    for c in &checks {
        println!("transcript          {c}");
    }
    if a.verify {
        let want = am.mat_vec_mul(&FieldMatrix::column(x))?;
        if output == want && checks.is_empty() {
            println!("PASS");
        } else {
            println!("FAIL");
            return Err(Failure::Failed("verification failed".into()));
        }
    }
    Ok(())
}
