use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rand::rngs::OsRng;

use shvebox_core::bench::run_bench;
use shvebox_core::compile::{compile_filter, compile_patterns, EncryptedFilter, EncryptedRuleDb};
use shvebox_core::config::Config;
use shvebox_core::crypto::{shve_enc, MasterKey, Prf, MASTER_KEY_LEN};
use shvebox_core::engine::{Inspector, Match, ScanMode, Verdict};
use shvebox_core::gateway::{payloads_from_hex_lines, stream, FrameWriter, Gateway, PacketSource, SourcePacket};
use shvebox_core::oracle::plain_match;
use shvebox_core::rules::{parse_ruleset, Rule};
use shvebox_core::service::{Client, Server};
use shvebox_core::wire::FrameReader;

#[derive(Parser)]
#[command(name = "shvebox", version, about = "Encrypted pattern matching for inspection middleboxes")]
struct Cli {
    /// Optional `key = value` config file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a fresh 16-byte master key. Never overwrites.
    Keygen {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Encrypt a ruleset into a pattern database and a filter.
    Compile {
        #[command(flatten)]
        key: KeyArg,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[command(flatten)]
        files: DbArgs,
    },
    /// Encrypt payloads into frames, written to a file/stdout or sent to a server.
    Encrypt {
        #[command(flatten)]
        key: KeyArg,
        /// Payload file, `-` for stdin.
        #[arg(long, default_value = "-")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = InputFormat::Hex)]
        format: InputFormat,
        /// Frame output file, `-` for stdout. Ignored with --connect.
        #[arg(long, default_value = "-")]
        out: PathBuf,
        /// Send frames to a running `serve` and print the verdicts.
        #[arg(long)]
        connect: Option<String>,
        #[arg(long, default_value_t = 0)]
        first_id: u64,
    },
    /// Inspect a stored frame stream, printing one verdict record per frame.
    Inspect {
        #[command(flatten)]
        files: DbArgs,
        /// Frame file, `-` for stdin.
        #[arg(long, default_value = "-")]
        input: PathBuf,
        /// Query every trapdoor instead of filtering first.
        #[arg(long)]
        no_filter: bool,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Serve inspection over TCP.
    Serve {
        #[command(flatten)]
        files: DbArgs,
        #[arg(long)]
        listen: Option<String>,
    },
    /// Encrypt and inspect payloads, comparing every verdict with the plaintext matcher.
    Verify {
        #[command(flatten)]
        key: KeyArg,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = InputFormat::Hex)]
        format: InputFormat,
        /// Use these compiled files instead of compiling in memory.
        #[arg(long, requires = "filter")]
        db: Option<PathBuf>,
        #[arg(long, requires = "db")]
        filter: Option<PathBuf>,
        #[arg(long)]
        no_filter: bool,
    },
    /// Time filtered and full-scan inspection on a synthetic corpus.
    Bench {
        #[arg(long)]
        rules: Option<usize>,
        #[arg(long)]
        packets: Option<usize>,
        #[arg(long)]
        min_len: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        malicious: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Skip the full-scan baseline.
        #[arg(long)]
        no_baseline: bool,
    },
}

#[derive(Args)]
struct KeyArg {
    /// Master key file; defaults to $SHVEBOX_KEY, then the config file.
    #[arg(long)]
    key: Option<PathBuf>,
}

#[derive(Args)]
struct DbArgs {
    #[arg(long)]
    db: Option<PathBuf>,
    #[arg(long)]
    filter: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum InputFormat {
    /// One hex-encoded payload per line.
    Hex,
    /// The whole input is one payload, segmented at 1500 bytes.
    Raw,
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    if path == Path::new("-") {
        io::stdin().read_to_end(&mut buf)?;
    } else {
        buf = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    }
    Ok(buf)
}

fn output(path: &Path) -> Result<Box<dyn Write>> {
    Ok(if path == Path::new("-") {
        Box::new(BufWriter::new(io::stdout().lock()))
    } else {
        Box::new(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
    })
}

fn load_key(path: &Path) -> Result<MasterKey> {
    let bytes = fs::read(path).with_context(|| format!("reading key {}", path.display()))?;
    MasterKey::from_bytes(&bytes).with_context(|| format!("key file {}", path.display()))
}

fn load_rules(path: &Path) -> Result<Vec<Rule>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_ruleset(&text).with_context(|| format!("in {}", path.display()))
}

fn load_inspector(db: &Path, filter: &Path) -> Result<Inspector> {
    let db_bytes = fs::read(db).with_context(|| format!("reading {}", db.display()))?;
    let f_bytes = fs::read(filter).with_context(|| format!("reading {}", filter.display()))?;
    let db = EncryptedRuleDb::from_bytes(&db_bytes).with_context(|| format!("loading {}", db.display()))?;
    let f = EncryptedFilter::from_bytes(&f_bytes).with_context(|| format!("loading {}", filter.display()))?;
    Ok(Inspector::new(db, f))
}

fn payloads(input: &Path, format: InputFormat) -> Result<Vec<Vec<u8>>> {
    let data = read_input(input)?;
    Ok(match format {
        InputFormat::Hex => payloads_from_hex_lines(std::str::from_utf8(&data).context("hex input is not UTF-8")?)?,
        InputFormat::Raw => vec![data],
    })
}

fn scan_mode(no_filter: bool) -> ScanMode {
    if no_filter { ScanMode::FullScan } else { ScanMode::Filtered }
}

fn keygen(cfg: &Config, out: Option<PathBuf>) -> Result<()> {
    let path = out.unwrap_or_else(|| cfg.key_path.clone());
    let key = MasterKey::generate(&mut OsRng);
    let mut f = OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(&path)
        .with_context(|| format!("refusing to write key to {}", path.display()))?;
    f.write_all(key.as_bytes())?;
    info!("wrote {MASTER_KEY_LEN}-byte key to {}", path.display());
    Ok(())
}

fn compile(cfg: &Config, key: KeyArg, rules: Option<PathBuf>, files: DbArgs) -> Result<()> {
    let msk = load_key(&key.key.unwrap_or_else(|| cfg.key_path.clone()))?;
    let rules_path = rules.or_else(|| cfg.rules_path.clone()).context("no ruleset given (--rules)")?;
    let rules = load_rules(&rules_path)?;
    let db = compile_patterns(&msk, &rules, &mut OsRng);
    let filter = compile_filter(&msk, &rules, &mut OsRng);
    let db_path = files.db.unwrap_or_else(|| cfg.db_path.clone());
    let f_path = files.filter.unwrap_or_else(|| cfg.filter_path.clone());
    db.write_to(BufWriter::new(File::create(&db_path)?))?;
    filter.write_to(BufWriter::new(File::create(&f_path)?))?;
    println!("rules {}", rules.len());
    println!("db entries {} ({} bytes)", db.len(), db.serialized_len());
    println!(
        "filter f1 {} f2 {} f3 {} ({} bytes)",
        filter.f1.len(),
        filter.f2.len(),
        filter.f3.len(),
        filter.serialized_len()
    );
    Ok(())
}

fn encrypt(
    cfg: &Config,
    key: KeyArg,
    input: &Path,
    format: InputFormat,
    out: &Path,
    connect: Option<String>,
    first_id: u64,
) -> Result<()> {
    let msk = load_key(&key.key.unwrap_or_else(|| cfg.key_path.clone()))?;
    let gw = Gateway::new(&msk);
    let source = PacketSource::starting_at(payloads(input, format)?.into_iter(), first_id);
    match connect.or_else(|| cfg.connect.clone()) {
        None => {
            let mut sink = FrameWriter(output(out)?);
            let n = stream(&gw, source, &mut sink)?;
            sink.0.flush()?;
            info!("wrote {n} frames");
        }
        Some(addr) => {
            let client = Client::connect(&addr).with_context(|| format!("connecting to {addr}"))?;
            let packets: Vec<_> = source
                .map(|p: SourcePacket| gw.preprocess(&p.payload, p.packet_id))
                .collect::<shvebox_core::Result<_>>()?;
            let mut w = output(Path::new("-"))?;
            match client.run(packets) {
                Ok(verdicts) => {
                    for v in &verdicts {
                        writeln!(w, "{v}")?;
                    }
                }
                Err(e) => {
                    for v in &e.verdicts {
                        writeln!(w, "{v}")?;
                    }
                    w.flush()?;
                    return Err(e.into());
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn inspect(cfg: &Config, files: DbArgs, input: &Path, no_filter: bool, workers: Option<usize>) -> Result<()> {
    let insp = load_inspector(
        &files.db.unwrap_or_else(|| cfg.db_path.clone()),
        &files.filter.unwrap_or_else(|| cfg.filter_path.clone()),
    )?;
    let workers = workers.unwrap_or(cfg.workers);
    if workers == 0 {
        bail!("workers must be at least 1");
    }
    let mode = scan_mode(no_filter);
    let src: Box<dyn Read> = if input == Path::new("-") {
        Box::new(io::stdin().lock())
    } else {
        Box::new(File::open(input).with_context(|| format!("opening {}", input.display()))?)
    };
    let mut w = output(Path::new("-"))?;
    let mut batch = Vec::new();
    let mut errors = 0usize;
    let flush = |batch: &mut Vec<_>, w: &mut Box<dyn Write>| -> io::Result<()> {
        for v in insp.inspect_batch(batch, mode, workers) {
            writeln!(w, "{v}")?;
        }
        batch.clear();
        Ok(())
    };
    for (index, item) in FrameReader::new(io::BufReader::new(src)).enumerate() {
        match item {
            Ok(pkt) => {
                batch.push(pkt);
                if batch.len() >= 256 * workers {
                    flush(&mut batch, &mut w)?;
                }
            }
            Err(e) => {
                flush(&mut batch, &mut w)?;
                errors += 1;
                writeln!(w, "error, frame {index}: {e}")?;
            }
        }
    }
    flush(&mut batch, &mut w)?;
    w.flush()?;
    if errors > 0 {
        log::warn!("{errors} malformed frames");
    }
    Ok(())
}

fn serve(cfg: &Config, files: DbArgs, listen: Option<String>) -> Result<()> {
    let insp = load_inspector(
        &files.db.unwrap_or_else(|| cfg.db_path.clone()),
        &files.filter.unwrap_or_else(|| cfg.filter_path.clone()),
    )?;
    let addr = listen.unwrap_or_else(|| cfg.listen.clone());
    let server = Server::bind(&addr, Arc::new(insp)).with_context(|| format!("binding {addr}"))?;
    // scripts parse this line to learn the port when binding to :0
    println!("listening on {}", server.local_addr()?);
    io::stdout().flush()?;
    server.run()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn verify(
    cfg: &Config,
    key: KeyArg,
    rules: Option<PathBuf>,
    input: &Path,
    format: InputFormat,
    db: Option<PathBuf>,
    filter: Option<PathBuf>,
    no_filter: bool,
) -> Result<bool> {
    let msk = load_key(&key.key.unwrap_or_else(|| cfg.key_path.clone()))?;
    let rules_path = rules.or_else(|| cfg.rules_path.clone()).context("no ruleset given (--rules)")?;
    let rules = load_rules(&rules_path)?;
    let insp = match (db, filter) {
        (Some(d), Some(f)) => load_inspector(&d, &f)?,
        _ => Inspector::new(compile_patterns(&msk, &rules, &mut OsRng), compile_filter(&msk, &rules, &mut OsRng)),
    };
    let prf = Prf::new(&msk);
    let mode = scan_mode(no_filter);
    let (mut packets, mut matched, mut bad) = (0usize, 0usize, 0usize);
    for p in PacketSource::new(payloads(input, format)?.into_iter()) {
        let pkt = shve_enc(&prf, &p.payload, p.packet_id)?;
        let got = insp.inspect_counted(&pkt, mode).0;
        let want = Verdict::new(p.packet_id, plain_match(&rules, &p.payload).into_iter().map(Match::from).collect());
        packets += 1;
        matched += usize::from(!want.matches.is_empty());
        if got != want {
            bad += 1;
            println!("mismatch: got {got} want {want}");
        }
    }
    println!("packets {packets} matched {matched} discrepancies {bad}");
    Ok(bad == 0)
}

#[allow(clippy::too_many_arguments)]
fn bench(
    cfg: &Config,
    rules: Option<usize>,
    packets: Option<usize>,
    min_len: Option<usize>,
    max_len: Option<usize>,
    malicious: Option<f64>,
    seed: Option<u64>,
    no_baseline: bool,
) -> Result<()> {
    let mut c = cfg.clone();
    let b = &mut c.bench;
    b.rules = rules.unwrap_or(b.rules);
    b.packets = packets.unwrap_or(b.packets);
    b.min_len = min_len.unwrap_or(b.min_len);
    b.max_len = max_len.unwrap_or(b.max_len);
    b.malicious_fraction = malicious.unwrap_or(b.malicious_fraction);
    b.seed = seed.unwrap_or(b.seed);
    c.validate()?;
    let msk = MasterKey::generate(&mut OsRng);
    print!("{}", run_bench(&msk, &c.bench, !no_baseline));
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p).with_context(|| format!("config {}", p.display()))?,
        None => Config::default(),
    }
    .with_env();
    match cli.cmd {
        Cmd::Keygen { out } => keygen(&cfg, out)?,
        Cmd::Compile { key, rules, files } => compile(&cfg, key, rules, files)?,
        Cmd::Encrypt { key, input, format, out, connect, first_id } => {
            encrypt(&cfg, key, &input, format, &out, connect, first_id)?
        }
        Cmd::Inspect { files, input, no_filter, workers } => inspect(&cfg, files, &input, no_filter, workers)?,
        Cmd::Serve { files, listen } => serve(&cfg, files, listen)?,
        Cmd::Verify { key, rules, input, format, db, filter, no_filter } => {
            return verify(&cfg, key, rules, &input, format, db, filter, no_filter)
        }
        Cmd::Bench { rules, packets, min_len, max_len, malicious, seed, no_baseline } => {
            bench(&cfg, rules, packets, min_len, max_len, malicious, seed, no_baseline)?
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
