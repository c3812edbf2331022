//! Subcommand implementations.

use std::fs::{self, File};
use std::io::{self, BufReader, Read, Write};
use std::time::Instant;

use anyhow::{anyhow, Context};
use serde::Serialize;
use serde_json::{json, Value};

use uflstream::core::{format_update, Stream};
use uflstream::estimators::{
    one_pass_estimate, random_order_estimate, two_pass_pass1, two_pass_pass2, Backend,
    EstimateReport, HashChoice, OnePassConfig, Pass1State, TwoPassConfig,
};
use uflstream::harness::{
    generate, run_experiment, to_csv, Algo, BhmAnswer, ExperimentConfig, GenKind, GeneratorSpec,
    Order,
};
use uflstream::hashing::{self, Construction, HashParams};
use uflstream::oracle::{compute_rp_matrix, exact_opt_candidates, mp_facilities_matrix, PointMatrix, MAX_EXACT_CANDIDATES};
use uflstream::prf::{derive, domain};

use crate::{
    AlgoArg, AlgoParams, Answer, BenchArgs, Cli, Command, ConstructionArg, EstimateArgs, Format,
    GenArgs, HashVerifyArgs, InstanceArgs, Kind, OracleArgs, PassArg,
};

pub enum Failure {
    /// Bad flags or an input the subcommand cannot take; exit code 1.
    Usage(String),
    /// Anything that went wrong while running; exit code 2.
    Runtime(anyhow::Error),
    /// The report was written but is flagged unreliable; exit code 2.
    Unreliable,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn usage<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Usage(msg.into()))
}

pub fn run(cli: &Cli) -> CmdResult {
    let log = Log(cli.verbose);
    match &cli.command {
        Command::Gen(a) => gen(cli, a, log),
        Command::Oracle(a) => oracle(cli, a, log),
        Command::HashVerify(a) => hash_verify(cli, a),
        Command::Estimate(a) => estimate(cli, a, log),
        Command::Bench(a) => bench(cli, a, log),
    }
}

#[derive(Clone, Copy)]
struct Log(bool);

impl Log {
    fn say(self, msg: impl AsRef<str>) {
        if self.0 {
            eprintln!("[uflstream] {}", msg.as_ref());
        }
    }
}

/// Run configuration embedded in every artifact.
fn config_value(cli: &Cli) -> Value {
    json!({ "version": env!("CARGO_PKG_VERSION"), "command": cli.command })
}

fn emit(output: &Option<String>, text: &str) -> anyhow::Result<()> {
    match output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {path}")),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn json_line<T: Serialize>(v: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string(v)?;
    s.push('\n');
    Ok(s)
}

fn read_stream(path: &str) -> anyhow::Result<Stream> {
    let s = if path == "-" {
        Stream::read(io::stdin().lock())
    } else {
        let file = File::open(path).with_context(|| format!("opening {path}"))?;
        Stream::read(BufReader::new(file))
    };
    s.with_context(|| format!("reading stream {path}"))
}

fn check_instance_args(a: &InstanceArgs) -> CmdResult {
    if !(0.0..1.0).contains(&a.deletion_rate) {
        return usage(format!("--deletion-rate must lie in [0, 1), got {}", a.deletion_rate));
    }
    if !(a.f > 0.0 && a.f.is_finite()) {
        return usage(format!("--f must be positive, got {}", a.f));
    }
    if let Some(r) = a.radius {
        if !(r >= 0.0) {
            return usage(format!("--radius must be nonnegative, got {r}"));
        }
    }
    Ok(())
}

fn gen_spec(kind: Kind, n: usize, a: &InstanceArgs, seed: u64) -> GeneratorSpec {
    let kind = match kind {
        Kind::Uniform => GenKind::Uniform,
        Kind::Clustered => GenKind::Clustered { k: a.k, radius: a.radius.unwrap_or(a.delta as f64 / 100.0) },
        Kind::ExampleHard => GenKind::ExampleHard,
        Kind::Bhm => GenKind::Bhm {
            answer: match a.answer {
                Answer::Yes => BhmAnswer::Yes,
                Answer::No => BhmAnswer::No,
            },
        },
    };
    let mut spec = GeneratorSpec::new(kind, n, a.d, a.delta, a.f, seed);
    spec.deletion_rate = a.deletion_rate;
    spec.order = if a.shuffle { Order::Shuffled } else { Order::Given };
    spec
}

fn gen(cli: &Cli, a: &GenArgs, log: Log) -> CmdResult {
    check_instance_args(&a.instance)?;
    let spec = gen_spec(a.kind, a.n, &a.instance, a.seed);
    let g = generate(&spec).context("generating instance")?;
    log.say(format!("{} updates, {} final points, {}", g.updates.len(), g.points.len(), g.instance.header()));
    let mut text = String::new();
    text.push_str(&g.instance.header());
    text.push('\n');
    text.push_str(&format!("# config {}\n", serde_json::to_string(&config_value(cli))?));
    for u in &g.updates {
        text.push_str(&format_update(u));
        text.push('\n');
    }
    emit(&a.output, &text)?;
    Ok(())
}

fn oracle(cli: &Cli, a: &OracleArgs, log: Log) -> CmdResult {
    let stream = read_stream(&a.stream)?;
    let f = stream.instance.f;
    let points = stream.final_points();
    log.say(format!("{} final points", points.len()));
    let mut text = String::new();
    if points.is_empty() {
        text.push_str(&json_line(&json!({
            "kind": "summary", "config": config_value(cli), "instance": stream.instance,
            "n": 0, "sum_rp": 0.0, "mp_cost": 0.0, "facilities": [],
        }))?);
        emit(&a.output, &text)?;
        return Ok(());
    }
    let m = PointMatrix::from_points(&points)?;
    let rp = compute_rp_matrix(&m, f)?;
    let mp = mp_facilities_matrix(&m, f, &rp)?;
    let mut summary = json!({
        "kind": "summary",
        "config": config_value(cli),
        "instance": stream.instance,
        "n": points.len(),
        "sum_rp": rp.sum(),
        "mp_cost": mp.cost,
        "facilities": mp.facilities.iter().map(|&k| points[k].coords()).collect::<Vec<_>>(),
    });
    if a.exact {
        if points.len() > MAX_EXACT_CANDIDATES {
            return usage(format!("--exact needs at most {MAX_EXACT_CANDIDATES} points, stream has {}", points.len()));
        }
        let opt = exact_opt_candidates(&points, f, &points)?;
        summary["exact_opt"] = json!(opt.cost);
    }
    text.push_str(&json_line(&summary)?);
    let mut open = vec![false; points.len()];
    for &k in &mp.facilities {
        open[k] = true;
    }
    for (k, p) in points.iter().enumerate() {
        text.push_str(&json_line(&json!({
            "kind": "point",
            "index": k,
            "coords": p.coords(),
            "r_p": rp.values[k],
            "level": rp.level_of(k),
            "facility": open[k],
        }))?);
    }
    emit(&a.output, &text)?;
    Ok(())
}

fn construction(c: ConstructionArg) -> Construction {
    match c {
        ConstructionArg::Grid => Construction::Grid,
        ConstructionArg::Face => Construction::Face,
        ConstructionArg::Carve => Construction::Carve,
    }
}

fn hash_verify(cli: &Cli, a: &HashVerifyArgs) -> CmdResult {
    if a.d == 0 || !(a.ell > 0.0) {
        return usage("--d must be positive and --ell must be positive");
    }
    let params = match (a.construction, a.gamma) {
        (ConstructionArg::Grid, _) => HashParams::grid(a.d, a.ell),
        (ConstructionArg::Face, None) => HashParams::face(a.d, a.ell),
        (ConstructionArg::Face, Some(g)) => HashParams::face_with_gamma(a.d, a.ell, g),
        (ConstructionArg::Carve, g) => {
            HashParams::carve(a.d, a.ell, g.unwrap_or(2.0 * a.d as f64), derive(a.seed, domain::CARVE, &[]))
        }
    };
    let params = match params {
        Ok(p) => p,
        Err(e) => return usage(e.to_string()),
    };
    let hash = hashing::build(params)?;
    let report = hashing::verify_hash(hash.as_ref(), a.trials, a.seed);
    let ok = report.diameter_ok && report.consistency_ok;
    emit(&a.output, &json_line(&json!({ "config": config_value(cli), "report": report }))?)?;
    if ok {
        Ok(())
    } else {
        Err(Failure::Runtime(anyhow!("hash verification failed")))
    }
}

fn hash_choice(p: &AlgoParams) -> HashChoice {
    HashChoice { construction: construction(p.construction), gamma: p.gamma }
}

fn two_pass_config(p: &AlgoParams) -> TwoPassConfig {
    TwoPassConfig { m: p.m, hash: hash_choice(p), batch: p.batch }
}

fn one_pass_config(p: &AlgoParams) -> OnePassConfig {
    OnePassConfig {
        hash: hash_choice(p),
        m: p.m,
        t: p.t,
        c: p.c,
        fallback_k: p.fallback_k,
        backend: Backend::Deferred,
    }
}

fn check_algo_params(p: &AlgoParams) -> CmdResult {
    if let Some(g) = p.gamma {
        if !(g > 1.0 && g.is_finite()) {
            return usage(format!("--gamma must exceed 1, got {g}"));
        }
    }
    if p.m == Some(0) || p.t == Some(0) || p.batch == 0 {
        return usage("--m, --t and --batch must be positive");
    }
    if !(p.c >= 0.0) {
        return usage(format!("--c must be nonnegative, got {}", p.c));
    }
    Ok(())
}

fn warn_gamma(p: &AlgoParams, d: usize) {
    if let (ConstructionArg::Face, Some(g)) = (p.construction, p.gamma) {
        let floor = hashing::min_face_gamma(d);
        if g < floor {
            eprintln!("warning: --gamma {g} is below the face-hash floor {floor:.4} for d={d}; using {floor:.4}");
        }
    }
}

/// Two-pass input must be replayable: a regular file.
fn replayable(path: &str) -> CmdResult {
    if path == "-" {
        return usage("two-pass estimation reads the stream twice and needs a file, not stdin");
    }
    match fs::metadata(path) {
        Ok(m) if m.is_file() => Ok(()),
        Ok(_) => usage(format!("two-pass estimation reads the stream twice; {path} is not a regular file")),
        Err(e) => Err(Failure::Runtime(anyhow!(e).context(format!("opening {path}")))),
    }
}

#[derive(Serialize)]
struct OfflineReport {
    algo: &'static str,
    estimate: f64,
    sum_rp: f64,
    mp_cost: f64,
    n: usize,
}

fn estimate(cli: &Cli, a: &EstimateArgs, log: Log) -> CmdResult {
    check_algo_params(&a.params)?;
    if a.pass != PassArg::Both && a.algo != AlgoArg::TwoPass {
        return usage("--pass applies to two-pass only");
    }
    let start = Instant::now();
    let report: EstimateReport = match a.algo {
        AlgoArg::TwoPass => {
            replayable(&a.stream)?;
            let sidecar = a.sidecar.clone().unwrap_or_else(|| format!("{}.pass1", a.stream));
            let cfg = two_pass_config(&a.params);
            if a.pass != PassArg::Second {
                let stream = read_stream(&a.stream)?;
                warn_gamma(&a.params, stream.instance.d);
                log.say(format!("pass 1 over {} updates", stream.updates.len()));
                let state = two_pass_pass1(&stream.updates, &stream.instance, a.seed, &cfg)?;
                fs::write(&sidecar, state.to_bytes()?).with_context(|| format!("writing {sidecar}"))?;
                if a.pass == PassArg::First {
                    let out = json!({
                        "config": config_value(cli),
                        "sidecar": sidecar,
                        "m": state.m,
                        "records": state.records.len(),
                        "space_cells": state.space_cells,
                    });
                    emit(&a.output, &json_line(&out)?)?;
                    return Ok(());
                }
            }
            let mut bytes = Vec::new();
            File::open(&sidecar)
                .and_then(|mut f| f.read_to_end(&mut bytes))
                .with_context(|| format!("reading {sidecar}"))?;
            let state = Pass1State::from_bytes(&bytes).with_context(|| format!("decoding {sidecar}"))?;
            if state.seed != a.seed || state.config != cfg {
                return usage(format!("{sidecar} was written with another seed or configuration"));
            }
            let stream = read_stream(&a.stream)?;
            log.say(format!("pass 2 over {} updates", stream.updates.len()));
            two_pass_pass2(&stream.updates, &state)?
        }
        AlgoArg::RandomOrder => {
            let stream = read_stream(&a.stream)?;
            warn_gamma(&a.params, stream.instance.d);
            random_order_estimate(&stream.updates, &stream.instance, a.seed, &two_pass_config(&a.params))
                .map_err(|e| match e {
                    uflstream::Error::Unsupported(msg) => Failure::Usage(msg),
                    e => e.into(),
                })?
        }
        AlgoArg::OnePass => {
            let stream = read_stream(&a.stream)?;
            warn_gamma(&a.params, stream.instance.d);
            one_pass_estimate(&stream.updates, &stream.instance, a.seed, &one_pass_config(&a.params))?
        }
        AlgoArg::Offline => {
            let stream = read_stream(&a.stream)?;
            let points = stream.final_points();
            let (sum_rp, mp_cost) = if points.is_empty() {
                (0.0, 0.0)
            } else {
                let m = PointMatrix::from_points(&points)?;
                let rp = compute_rp_matrix(&m, stream.instance.f)?;
                (rp.sum(), mp_facilities_matrix(&m, stream.instance.f, &rp)?.cost)
            };
            let rep = OfflineReport { algo: "offline", estimate: sum_rp, sum_rp, mp_cost, n: points.len() };
            let text = if a.json {
                let mut out = json!({ "config": config_value(cli), "report": rep });
                if a.timings {
                    out["timings_ms"] = json!({ "total": start.elapsed().as_secs_f64() * 1e3 });
                }
                json_line(&out)?
            } else {
                format!("offline: sum_rp {sum_rp} mp_cost {mp_cost} n {}\n", rep.n)
            };
            emit(&a.output, &text)?;
            return Ok(());
        }
    };
    let mut report = report;
    if !a.trace {
        report.trace.clear();
    }
    let text = if a.json {
        let mut out = json!({ "config": config_value(cli), "report": report });
        if a.timings {
            out["timings_ms"] = json!({ "total": start.elapsed().as_secs_f64() * 1e3 });
        }
        json_line(&out)?
    } else {
        let mut s = format!("{}: estimate {}", report.algo, report.estimate);
        if report.fallback {
            s.push_str(&format!(" (fallback; main branch {})", report.main_estimate));
        }
        s.push_str(&format!(
            "\nsamples {} nil {} failed {} space_cells {}{}\n",
            report.samples_drawn,
            report.nil_samples,
            report.failed_samples,
            report.space_cells,
            if report.unreliable { "\nUNRELIABLE" } else { "" }
        ));
        for n in &report.notes {
            s.push_str(&format!("note: {n}\n"));
        }
        s
    };
    emit(&a.output, &text)?;
    if report.unreliable {
        return Err(Failure::Unreliable);
    }
    Ok(())
}

fn bench(cli: &Cli, a: &BenchArgs, log: Log) -> CmdResult {
    check_instance_args(&a.instance)?;
    check_algo_params(&a.params)?;
    if a.kinds.is_empty() || a.n.is_empty() || a.algos.is_empty() {
        return usage("--kinds, --n and --algos must be nonempty");
    }
    let mut specs = Vec::new();
    for &kind in &a.kinds {
        for &n in &a.n {
            let seed = derive(a.seed, domain::GENERATOR, &[specs.len() as u64]);
            specs.push(gen_spec(kind, n, &a.instance, seed));
        }
    }
    let cfg = ExperimentConfig {
        algos: a
            .algos
            .iter()
            .map(|x| match x {
                AlgoArg::TwoPass => Algo::TwoPass,
                AlgoArg::RandomOrder => Algo::RandomOrder,
                AlgoArg::OnePass => Algo::OnePass,
                AlgoArg::Offline => Algo::Offline,
            })
            .collect(),
        repetitions: a.reps,
        two_pass: two_pass_config(&a.params),
        one_pass: one_pass_config(&a.params),
    };
    log.say(format!("{} instances x {} algorithms", specs.len(), cfg.algos.len()));
    let (table, timings) = run_experiment(&specs, &cfg)?;
    let text = match a.format {
        Format::Csv => to_csv(&table),
        Format::Json => {
            let mut out = json!({ "config": config_value(cli), "specs": specs, "table": table });
            if a.timings {
                out["timings_ms"] = json!(timings);
            }
            json_line(&out)?
        }
    };
    emit(&a.output, &text)?;
    Ok(())
}
