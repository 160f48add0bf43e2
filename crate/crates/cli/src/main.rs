//! `tcpa`: one binary for every role in the protocol plus the developer
//! tools around it.
//!
//! Exit codes: 0 success or `accepted`; 1 `rejected` or a general failure;
//! 2 an input file that cannot be read or decoded; 3 a listen address
//! already in use; 4-8 provider failures (attestation, negotiation,
//! transport, IC error, result rejected).

mod commands;
mod inputs;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tcpa_core::harness::TrackingAllocator;

#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator;

#[derive(Parser)]
#[command(name = "tcpa", version, about = "Confidential program analysis with attested results")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Exploration and solver limits; they become part of the analyzer image.
#[derive(Args, Clone, Debug)]
pub struct BoundsArgs {
    #[arg(long = "bounds.max-paths", default_value_t = 4096)]
    pub max_paths: u64,
    #[arg(long = "bounds.max-depth", default_value_t = 1_000_000)]
    pub max_depth: u64,
    #[arg(long = "bounds.unroll", default_value_t = 8)]
    pub unroll: u32,
    /// Per-query solver time budget in milliseconds.
    #[arg(long = "solver.ms", default_value_t = 1000)]
    pub solver_ms: u64,
    /// Largest search space the solver enumerates exhaustively.
    #[arg(long = "solver.enum", default_value_t = 65536)]
    pub solver_enum: u64,
}

/// Where the root-of-trust public key comes from.
#[derive(Args, Clone, Debug)]
pub struct TrustArgs {
    /// Root-of-trust public key, hex.
    #[arg(long, conflicts_with = "manufacturer_seed")]
    pub rot_pub: Option<String>,
    /// Derive the simulated manufacturer from this seed.
    #[arg(long, default_value_t = 0)]
    pub manufacturer_seed: u64,
}

/// The agreed (X, B, P) images.
#[derive(Args, Clone, Debug)]
pub struct ImageArgs {
    /// Analyzer image, as written by `tcpa params`.
    #[arg(long = "x")]
    pub x_code: std::path::PathBuf,
    /// Builder configuration image, as written by `tcpa params`.
    #[arg(long = "b")]
    pub b_config: std::path::PathBuf,
    /// Property file: text, canonical bytes, or a `.tcpr` registry.
    #[arg(long)]
    pub props: std::path::PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    Plain,
    Isolated,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble a text-format module to binary.
    Assemble {
        input: std::path::PathBuf,
        #[arg(long, short)]
        out: std::path::PathBuf,
        /// Also write the offset-to-source map.
        #[arg(long)]
        map: Option<std::path::PathBuf>,
    },
    /// Decode and validate a binary module and summarize it.
    Parse { input: std::path::PathBuf },
    /// Run an exported function with the reference interpreter.
    Run {
        /// `.wat` or `.wasm` module.
        input: std::path::PathBuf,
        entry: String,
        #[arg(allow_negative_numbers = true)]
        args: Vec<i64>,
        #[arg(long, default_value_t = 10_000_000)]
        fuel: u64,
    },
    /// Symbolically check properties of a text-format module.
    Analyze {
        input: std::path::PathBuf,
        #[arg(long)]
        props: std::path::PathBuf,
        #[command(flatten)]
        bounds: BoundsArgs,
        /// Write every explored path condition as SMT-LIB into this directory.
        #[arg(long)]
        smt_dir: Option<std::path::PathBuf>,
    },
    /// Write the analyzer and builder images that parties agree on.
    Params {
        #[arg(long)]
        out_dir: std::path::PathBuf,
        #[command(flatten)]
        bounds: BoundsArgs,
        /// Have the IC return its own build instead of comparing.
        #[arg(long)]
        return_executable: bool,
    },
    /// Print the expected measurement of (X, B, P).
    Measure {
        #[command(flatten)]
        images: ImageArgs,
    },
    /// Print the root-of-trust public key of a seeded manufacturer.
    RotPub {
        #[arg(long, default_value_t = 0)]
        manufacturer_seed: u64,
    },
    /// Create a signing key; writes the secret, prints the public key.
    Keygen {
        #[arg(long, short)]
        out: std::path::PathBuf,
    },
    /// Dual-signed property registry files.
    #[command(subcommand)]
    Registry(RegistryCommand),
    /// Host an isolated computation and serve one provider session.
    Ic {
        /// `host:port` to listen on; port 0 picks a free one and prints it.
        #[arg(long)]
        listen: String,
        #[command(flatten)]
        images: ImageArgs,
        #[arg(long, default_value_t = 0)]
        manufacturer_seed: u64,
    },
    /// Submit source and executable for attested analysis.
    Provider {
        /// Address of the IC host, `host:port`.
        #[arg(long)]
        connect: String,
        #[command(flatten)]
        images: ImageArgs,
        #[command(flatten)]
        trust: TrustArgs,
        /// Text-format source S.
        #[arg(long)]
        source: std::path::PathBuf,
        /// Shipped executable E; defaults to building S.
        #[arg(long)]
        executable: Option<std::path::PathBuf>,
        /// Secret key file; when given, an origin certificate is issued.
        #[arg(long)]
        origin_key: Option<std::path::PathBuf>,
        /// Where to write the certificate chain.
        #[arg(long, default_value = "chain.tcpc")]
        out: std::path::PathBuf,
        /// Also deliver the chain to a listening consumer.
        #[arg(long)]
        forward: Option<String>,
    },
    /// Verify a certificate chain against the agreed parameters.
    Consumer {
        /// Chain file; alternatively use --listen.
        #[arg(long, required_unless_present = "listen")]
        chain: Option<std::path::PathBuf>,
        /// Receive the chain from a provider instead of a file.
        #[arg(long)]
        listen: Option<String>,
        #[command(flatten)]
        images: ImageArgs,
        #[command(flatten)]
        trust: TrustArgs,
        /// Provider origin key, hex; enables the origin check.
        #[arg(long)]
        origin_pub: Option<String>,
    },
    /// Measure plain vs isolated analysis cost over a corpus directory.
    Bench {
        corpus: std::path::PathBuf,
        #[command(flatten)]
        bounds: BoundsArgs,
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
        #[arg(long, default_value_t = 3)]
        reps: u32,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
}

#[derive(Subcommand)]
enum RegistryCommand {
    Create {
        #[arg(long)]
        props: std::path::PathBuf,
        #[arg(long)]
        provider_key: std::path::PathBuf,
        #[arg(long)]
        consumer_key: std::path::PathBuf,
        #[arg(long, short)]
        out: std::path::PathBuf,
    },
    Verify {
        registry: std::path::PathBuf,
        #[arg(long)]
        provider_pub: String,
        #[arg(long)]
        consumer_pub: String,
    },
}

fn main() -> ExitCode {
    TrackingAllocator::activate();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Assemble { input, out, map } => commands::assemble(&input, &out, map.as_deref()),
        Command::Parse { input } => commands::parse(&input),
        Command::Run { input, entry, args, fuel } => commands::run(&input, &entry, &args, fuel),
        Command::Analyze {
            input,
            props,
            bounds,
            smt_dir,
        } => commands::analyze(&input, &props, &bounds, smt_dir.as_deref()),
        Command::Params {
            out_dir,
            bounds,
            return_executable,
        } => commands::params(&out_dir, &bounds, return_executable),
        Command::Measure { images } => commands::measure_cmd(&images),
        Command::RotPub { manufacturer_seed } => commands::rot_pub(manufacturer_seed),
        Command::Keygen { out } => commands::keygen(&out),
        Command::Registry(RegistryCommand::Create {
            props,
            provider_key,
            consumer_key,
            out,
        }) => commands::registry_create(&props, &provider_key, &consumer_key, &out),
        Command::Registry(RegistryCommand::Verify {
            registry,
            provider_pub,
            consumer_pub,
        }) => commands::registry_verify(&registry, &provider_pub, &consumer_pub),
        Command::Ic {
            listen,
            images,
            manufacturer_seed,
        } => commands::ic(&listen, &images, manufacturer_seed),
        Command::Provider {
            connect,
            images,
            trust,
            source,
            executable,
            origin_key,
            out,
            forward,
        } => commands::provider(commands::ProviderArgs {
            connect,
            images,
            trust,
            source,
            executable,
            origin_key,
            out,
            forward,
        }),
        Command::Consumer {
            chain,
            listen,
            images,
            trust,
            origin_pub,
        } => commands::consumer(chain.as_deref(), listen.as_deref(), &images, &trust, origin_pub.as_deref()),
        Command::Bench {
            corpus,
            bounds,
            mode,
            reps,
            out,
        } => commands::bench(&corpus, &bounds, mode, reps, out.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let code = e.downcast_ref::<inputs::Exit>().map_or(1, |x| x.0);
            eprintln!("tcpa: {e:#}");
            ExitCode::from(code)
        }
    }
}
