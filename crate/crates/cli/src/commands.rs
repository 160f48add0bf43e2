use std::io::Write as _;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use tcpa_core::certs::CertificateChain;
use tcpa_core::crypto::{hash, measure, KeyPair};
use tcpa_core::harness::{format_table, load_corpus, run_bench, BenchConfig, Modes};
use tcpa_core::protocol::{
    consumer_verify, provider_run, receive_forward, send_forward, serve_ic, ProtocolError, ProtocolMessage,
    ProviderParams, Registry, StreamTransport, Transcript,
};
use tcpa_core::solver::export_smtlib;
use tcpa_core::symexec::{init_analysis, PropertySet};
use tcpa_core::tee::platform_setup;
use tcpa_core::wasm::{assemble_text, count_instructions, parse_module, Module};
use tcpa_core::{run_concrete, AnalyzerConfig, BuilderConfig, TraceResult};

use crate::inputs::{self, exit, EXIT_ADDR_IN_USE, EXIT_BAD_INPUT};
use crate::{BoundsArgs, ImageArgs, ModeArg, TrustArgs};

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn assemble_file(input: &Path) -> Result<(Vec<u8>, tcpa_core::SourceMap)> {
    let text = inputs::read_text(input)?;
    assemble_text(&text).map_err(|e| exit(EXIT_BAD_INPUT, format!("{}: {e}", input.display())))
}

/// `.wasm` files are decoded, anything else is assembled first.
fn load_module(input: &Path) -> Result<Module> {
    let bytes = if input.extension().is_some_and(|e| e == "wasm") {
        inputs::read(input)?
    } else {
        assemble_file(input)?.0
    };
    parse_module(&bytes).map_err(|e| exit(EXIT_BAD_INPUT, format!("{}: {e}", input.display())))
}

pub fn assemble(input: &Path, out: &Path, map: Option<&Path>) -> Result<ExitCode> {
    let (bytes, src_map) = assemble_file(input)?;
    write(out, &bytes)?;
    if let Some(m) = map {
        write(m, src_map.to_text().as_bytes())?;
    }
    println!("{} bytes, {} mapped instructions", bytes.len(), src_map.len());
    Ok(ExitCode::SUCCESS)
}

pub fn parse(input: &Path) -> Result<ExitCode> {
    let m = load_module(input)?;
    println!("functions {}", m.functions.len());
    println!("instructions {}", count_instructions(&m));
    for e in &m.exports {
        println!("export {} {:?} {}", e.name, e.kind, e.index);
    }
    Ok(ExitCode::SUCCESS)
}

pub fn run(input: &Path, entry: &str, args: &[i64], fuel: u64) -> Result<ExitCode> {
    let m = load_module(input)?;
    match run_concrete(&m, entry, args, fuel)? {
        TraceResult::Terminated(vals) => {
            let vals: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
            println!("returned [{}]", vals.join(", "));
            Ok(ExitCode::SUCCESS)
        }
        TraceResult::Trapped { kind, offset } => {
            println!("trapped {kind} at offset {offset}");
            Ok(ExitCode::FAILURE)
        }
        TraceResult::OutOfFuel => {
            println!("out of fuel");
            Ok(ExitCode::FAILURE)
        }
    }
}

pub fn analyze(input: &Path, props: &Path, bounds: &BoundsArgs, smt_dir: Option<&Path>) -> Result<ExitCode> {
    let (bytes, map) = assemble_file(input)?;
    let module = parse_module(&bytes)?;
    let properties = inputs::load_properties(props)?;
    let analysis = init_analysis(module, map, properties)?;
    let ex = analysis.explore_detailed(&inputs::bounds(bounds));
    if let Some(dir) = smt_dir {
        std::fs::create_dir_all(dir)?;
        for (i, rec) in ex.paths.iter().enumerate() {
            write(&dir.join(format!("path{i:05}.smt2")), export_smtlib(&rec.path_condition).as_bytes())?;
        }
    }
    print!("{}", ex.report.to_text());
    Ok(if ex.report.outcomes.iter().all(|o| o.outcome == tcpa_core::Outcome::Valid) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

pub fn params(out_dir: &Path, bounds: &BoundsArgs, return_executable: bool) -> Result<ExitCode> {
    std::fs::create_dir_all(out_dir)?;
    let x = AnalyzerConfig::with_bounds(inputs::bounds(bounds));
    let b = BuilderConfig {
        return_executable,
        ..BuilderConfig::default()
    };
    write(&out_dir.join("x.bin"), &x.to_bytes())?;
    write(&out_dir.join("b.bin"), &b.to_bytes())?;
    println!("wrote {} and {}", out_dir.join("x.bin").display(), out_dir.join("b.bin").display());
    Ok(ExitCode::SUCCESS)
}

pub fn measure_images(images: &ImageArgs) -> Result<(inputs::Images, tcpa_core::Measurement)> {
    let im = inputs::load_images(images)?;
    let m = measure(&im.x, &im.b, &im.p);
    Ok((im, m))
}

pub fn measure_cmd(images: &ImageArgs) -> Result<ExitCode> {
    let (_, m) = measure_images(images)?;
    println!("{m}");
    Ok(ExitCode::SUCCESS)
}


pub fn rot_pub(seed: u64) -> Result<ExitCode> {
    println!("{}", hex::encode(inputs::manufacturer(seed).rot_public()));
    Ok(ExitCode::SUCCESS)
}

pub fn keygen(out: &Path) -> Result<ExitCode> {
    let key = KeyPair::generate(&mut inputs::rng()?);
    write(out, hex::encode(key.secret_bytes()).as_bytes())?;
    println!("{}", hex::encode(key.public()));
    Ok(ExitCode::SUCCESS)
}

pub fn registry_create(props: &Path, provider_key: &Path, consumer_key: &Path, out: &Path) -> Result<ExitCode> {
    let properties: PropertySet = inputs::load_properties(props)?;
    let reg = Registry::create(properties, &inputs::read_key(provider_key)?, &inputs::read_key(consumer_key)?);
    write(out, &reg.encode())?;
    Ok(ExitCode::SUCCESS)
}

pub fn registry_verify(path: &Path, provider_pub: &str, consumer_pub: &str) -> Result<ExitCode> {
    let reg = Registry::decode(&inputs::read(path)?).map_err(|e| exit(EXIT_BAD_INPUT, e.to_string()))?;
    match reg.verify(
        &inputs::parse_key(provider_pub, "--provider-pub")?,
        &inputs::parse_key(consumer_pub, "--consumer-pub")?,
    ) {
        Ok(p) => {
            println!("verified {} properties", p.len());
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            println!("rejected: {e}");
            Ok(ExitCode::FAILURE)
        }
    }
}

fn bind(addr: &str) -> Result<TcpListener> {
    TcpListener::bind(addr).map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => exit(EXIT_ADDR_IN_USE, format!("{addr} is already in use")),
        _ => anyhow!("cannot listen on {addr}: {e}"),
    })
}

/// Announces the bound address on stdout so callers can use port 0.
fn announce(listener: &TcpListener) -> Result<()> {
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    Ok(())
}

pub fn ic(listen: &str, images: &ImageArgs, manufacturer_seed: u64) -> Result<ExitCode> {
    let im = inputs::load_images(images)?;
    let man = inputs::manufacturer(manufacturer_seed);
    let platform = platform_setup(&man, &mut inputs::rng()?);
    let (id, icc) = platform
        .load_ic(&im.x, &im.b, &im.p)
        .map_err(|e| exit(EXIT_BAD_INPUT, e.to_string()))?;
    log::info!("IC {id} measurement {}", icc.m_ic);
    let listener = bind(listen)?;
    announce(&listener)?;
    serve_ic(&listener, &platform, id, Transcript::new())?;
    Ok(ExitCode::SUCCESS)
}

pub struct ProviderArgs {
    pub connect: String,
    pub images: ImageArgs,
    pub trust: TrustArgs,
    pub source: PathBuf,
    pub executable: Option<PathBuf>,
    pub origin_key: Option<PathBuf>,
    pub out: PathBuf,
    pub forward: Option<String>,
}

fn provider_exit(e: &ProtocolError) -> u8 {
    match e {
        ProtocolError::AttestationFailed(_) => 4,
        ProtocolError::NegotiationFailed(_) => 5,
        ProtocolError::TransportError(_) | ProtocolError::Closed => 6,
        ProtocolError::IcError { .. } => 7,
        ProtocolError::ResultRejected(_) | ProtocolError::Unexpected { .. } | ProtocolError::Aborted => 8,
    }
}

pub fn provider(a: ProviderArgs) -> Result<ExitCode> {
    let im = inputs::load_images(&a.images)?;
    let rot_pub = inputs::rot_public(&a.trust)?;
    let source = inputs::read_text(&a.source)?;
    let executable = match &a.executable {
        Some(p) => inputs::read(p)?,
        None => {
            let b = BuilderConfig::from_bytes(&im.b)?;
            tcpa_core::build_executable(&b, &source)?.0
        }
    };
    let origin_key = a.origin_key.as_deref().map(inputs::read_key).transpose()?;
    let mut rng = inputs::rng()?;
    let stream = std::net::TcpStream::connect(&a.connect)
        .map_err(|e| exit(6, format!("cannot connect to {}: {e}", a.connect)))?;
    let mut transport = StreamTransport::new(stream, Transcript::new());
    let params = ProviderParams {
        session: rand_session(&mut rng),
        rot_pub,
        x_code: im.x,
        b_config: im.b,
        p_props: im.p,
        source,
        executable,
        origin_key,
    };
    let out = provider_run(&mut transport, params, &mut rng).map_err(|e| exit(provider_exit(&e), e.to_string()))?;
    write(&a.out, &out.chain().encode())?;
    println!("chain written to {}", a.out.display());
    println!("h_s {}", hex::encode(out.cc.h_s));
    println!("eo {}", out.cc.report.eo);
    for o in &out.cc.report.outcomes {
        println!("property {} {}", o.id, o.outcome);
    }
    if let Some(addr) = &a.forward {
        send_forward(addr.as_str(), &out.forward(), Transcript::new()).map_err(|e| exit(6, e.to_string()))?;
        println!("forwarded to {addr}");
    }
    Ok(ExitCode::SUCCESS)
}

fn rand_session(rng: &mut dyn tcpa_core::crypto::SecureRng) -> u64 {
    rng.next_u64()
}

pub fn consumer(
    chain: Option<&Path>,
    listen: Option<&str>,
    images: &ImageArgs,
    trust: &TrustArgs,
    origin_pub: Option<&str>,
) -> Result<ExitCode> {
    let im = inputs::load_images(images)?;
    let rot_pub = inputs::rot_public(trust)?;
    let a_pub = origin_pub.map(|h| inputs::parse_key(h, "--origin-pub")).transpose()?;
    let chain = match (chain, listen) {
        (Some(path), _) => {
            CertificateChain::decode(&inputs::read(path)?).map_err(|e| exit(EXIT_BAD_INPUT, format!("{}: {e}", path.display())))?
        }
        (None, Some(addr)) => {
            let listener = bind(addr)?;
            announce(&listener)?;
            match receive_forward(&listener, Transcript::new())? {
                ProtocolMessage::Forward { pc, icc, cc, oc } => CertificateChain { pc, icc, cc, oc },
                other => return Err(anyhow!("expected Forward, received {}", other.kind_name())),
            }
        }
        (None, None) => return Err(anyhow!("either --chain or --listen is required")),
    };
    let verdict = consumer_verify(&chain, &rot_pub, &im.x, &im.b, &im.p, a_pub.as_ref().map(|k| &k[..]));
    println!("{verdict}");
    if let tcpa_core::certs::CcExecutable::Embedded(e) = &chain.cc.executable {
        log::info!("certified executable digest {}", hex::encode(hash(e)));
    }
    Ok(if verdict.is_accepted() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

pub fn bench(corpus: &Path, bounds: &BoundsArgs, mode: ModeArg, reps: u32, out: Option<&Path>) -> Result<ExitCode> {
    let jobs = load_corpus(corpus).map_err(|e| exit(EXIT_BAD_INPUT, format!("{}: {e}", corpus.display())))?;
    if jobs.is_empty() {
        return Err(exit(EXIT_BAD_INPUT, format!("no .wat files in {}", corpus.display())));
    }
    let seed = match std::env::var("TCPA_SEED") {
        Ok(s) => s.trim().parse().context("TCPA_SEED must be an unsigned integer")?,
        Err(_) => 0,
    };
    let cfg = BenchConfig {
        analyzer: AnalyzerConfig::with_bounds(inputs::bounds(bounds)),
        builder: BuilderConfig::default(),
        modes: match mode {
            ModeArg::Plain => Modes::Plain,
            ModeArg::Isolated => Modes::Isolated,
            ModeArg::Both => Modes::Both,
        },
        repetitions: reps,
        seed,
    };
    let records = run_bench(&jobs, &cfg);
    let table = format_table(&records);
    print!("{table}");
    if let Some(path) = out {
        write(path, table.as_bytes())?;
    }
    Ok(ExitCode::SUCCESS)
}
