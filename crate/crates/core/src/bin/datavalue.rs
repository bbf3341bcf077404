//! `datavalue` command-line tool.
//!
//! Exit codes: 0 success, 2 malformed input, 3 dimension mismatch, 4 no
//! buyer component above the threshold, 5 transport failure or timeout,
//! 6 protocol violation. Data goes to stdout (or `--out`), diagnostics to
//! stderr.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use datavalue_core::datasets::{load_csv, matrix_table, sample_gaussian, write_csv, CovarianceSpecFile, GaussianSpec};
use datavalue_core::protocol::net::{buyer_client, seller_client, Broker, BrokerOptions};
use datavalue_core::protocol::wire::ValuationPayload;
use datavalue_core::protocol::{buyer_prepare_query, run_session};
use datavalue_core::{DataMatrix, Error, ValuationConfig, ValuationReport};

#[derive(Parser)]
#[command(name = "datavalue", version, about = "Diversity and relevance of seller data against a buyer baseline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a zero-mean Gaussian matrix from a covariance spec file.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Value seller CSVs against a buyer CSV in-process.
    Value(ValueArgs),
    /// Same as `value`, but through a loopback broker over TCP.
    Simulate(ValueArgs),
    /// Run a broker; prints one JSON line per completed valuation.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Exit after this many buyer sessions have finished.
        #[arg(long)]
        max_sessions: Option<usize>,
        #[command(flatten)]
        valuation: ValuationFlags,
        #[arg(long, default_value_t = 30)]
        timeout: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Connect to a broker as buyer or seller.
    Client(ClientArgs),
    /// Turn a valuation CSV into relevance/diversity scatter data.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also draw a static SVG scatter plot.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct ValuationFlags {
    /// Buyer components with eigenvalue at or below this are ignored.
    #[arg(long, default_value_t = 1e-2)]
    threshold: f64,
    /// Diversity share of the combined value; the column stays empty without it.
    #[arg(long)]
    alpha: Option<f64>,
    /// File of per-component weights (comma or whitespace separated).
    #[arg(long)]
    weights: Option<PathBuf>,
}

impl ValuationFlags {
    fn config(&self) -> Result<ValuationConfig, Error> {
        let mut config = ValuationConfig::default().with_threshold(self.threshold);
        if let Some(a) = self.alpha {
            config = config.with_alpha(a);
        }
        if let Some(path) = &self.weights {
            config = config.with_weights(read_weights(path)?);
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct ValueArgs {
    #[arg(long)]
    buyer: PathBuf,
    /// Seller data as `PATH` or `ID=PATH`; repeatable.
    #[arg(long = "seller", required = true, num_args = 1..)]
    sellers: Vec<String>,
    #[command(flatten)]
    valuation: ValuationFlags,
    /// Random directions mixed into the query.
    #[arg(long, default_value_t = 0)]
    decoys: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClientRole {
    Buyer,
    Seller,
}

#[derive(Args)]
struct ClientArgs {
    #[arg(long, value_enum)]
    role: ClientRole,
    #[arg(long)]
    connect: String,
    /// Buyer data (buyer role).
    #[arg(long)]
    buyer: Option<PathBuf>,
    /// Seller data as `PATH` or `ID=PATH` (seller role).
    #[arg(long)]
    seller: Option<String>,
    /// Number of sellers the buyer waits for.
    #[arg(long, default_value_t = 1)]
    sellers: usize,
    /// Session to join (seller role) or to open (buyer role; defaults to
    /// one derived from the seed).
    #[arg(long)]
    session: Option<String>,
    #[command(flatten)]
    valuation: ValuationFlags,
    #[arg(long, default_value_t = 0)]
    decoys: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    timeout: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Dimension(_) => 3,
        Error::EmptySelection(_) => 4,
        Error::Transport(_) | Error::Timeout(_) => 5,
        Error::ProtocolViolation(_) | Error::Session(_) => 6,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("datavalue: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Synth { spec, n, seed, out } => synth(&spec, n, seed, out.as_deref()),
        Command::Value(args) => value(&args, false),
        Command::Simulate(args) => value(&args, true),
        Command::Serve { listen, max_sessions, valuation, timeout, out } => {
            serve(&listen, max_sessions, &valuation, timeout, out.as_deref())
        }
        Command::Client(args) => client(&args),
        Command::Report { input, out, svg } => report(&input, out.as_deref(), svg.as_deref()),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_matrix(path: &Path) -> Result<DataMatrix, Error> {
    let table = load_csv(path).map_err(|e| match e {
        Error::Io(io) => Error::Io(io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })?;
    table.to_matrix()
}

fn read_weights(path: &Path) -> Result<Vec<f64>, Error> {
    fs::read_to_string(path)?
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::InvalidData(format!("bad weight {t:?} in {}", path.display())))
        })
        .collect()
}

/// `ID=PATH` or `PATH`; the id defaults to the file stem, or `self` when the
/// file is the buyer's own.
fn seller_spec(arg: &str, buyer: Option<&Path>) -> (String, PathBuf) {
    if let Some((id, path)) = arg.split_once('=') {
        if !id.is_empty() && !id.contains(['/', '\\']) {
            return (id.to_owned(), PathBuf::from(path));
        }
    }
    let path = PathBuf::from(arg);
    let same = buyer.is_some_and(|b| match (fs::canonicalize(b), fs::canonicalize(&path)) {
        (Ok(a), Ok(c)) => a == c,
        _ => b == path,
    });
    let id = if same {
        "self".to_owned()
    } else {
        path.file_stem().map_or_else(|| arg.to_owned(), |s| s.to_string_lossy().into_owned())
    };
    (id, path)
}

fn synth(spec: &Path, n: usize, seed: u64, out: Option<&Path>) -> Result<(), Error> {
    let covariance = CovarianceSpecFile::parse(&fs::read_to_string(spec)?)?;
    let x = sample_gaussian(&GaussianSpec { covariance, n, seed })?;
    let mut w = output(out)?;
    write_csv(&matrix_table(&x), &mut w)?;
    w.flush()?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn write_rows(out: Option<&Path>, rows: &[(String, f64, f64, Option<f64>)]) -> Result<(), Error> {
    let mut w = output(out)?;
    writeln!(w, "seller_id,diversity,relevance,combined")?;
    for (id, d, r, c) in rows {
        writeln!(w, "{},{d:?},{r:?},{}", csv_field(id), fmt_opt(*c))?;
    }
    w.flush()?;
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn check_weights(config: &ValuationConfig, dim: usize) -> Result<(), Error> {
    match &config.weights {
        Some(w) if w.len() != dim => {
            Err(Error::Dimension(format!("{} weights for {dim} features", w.len())))
        }
        _ => Ok(()),
    }
}

fn value(args: &ValueArgs, over_tcp: bool) -> Result<(), Error> {
    let config = args.valuation.config()?;
    let buyer = load_matrix(&args.buyer)?;
    check_weights(&config, buyer.cols())?;
    let mut ids = Vec::new();
    let mut sellers = Vec::new();
    for s in &args.sellers {
        let (id, path) = seller_spec(s, Some(&args.buyer));
        if ids.contains(&id) {
            return Err(Error::InvalidData(format!("seller id {id:?} given twice")));
        }
        let m = load_matrix(&path)?;
        if m.cols() != buyer.cols() {
            return Err(Error::Dimension(format!(
                "buyer has {} features, seller {id} has {}",
                buyer.cols(),
                m.cols()
            )));
        }
        ids.push(id);
        sellers.push(m);
    }
    let reports: Vec<(f64, f64, Option<f64>)> = if over_tcp {
        simulate(&buyer, &ids, &sellers, args, &config)?
    } else {
        run_session(&buyer, &sellers, args.decoys, &config, args.seed)?
            .into_iter()
            .map(|o| (o.report.diversity, o.report.relevance, o.report.combined))
            .collect()
    };
    let rows: Vec<_> = ids.into_iter().zip(reports).map(|(id, (d, r, c))| (id, d, r, c)).collect();
    write_rows(args.out.as_deref(), &rows)
}

fn simulate(
    buyer: &DataMatrix,
    ids: &[String],
    sellers: &[DataMatrix],
    args: &ValueArgs,
    config: &ValuationConfig,
) -> Result<Vec<(f64, f64, Option<f64>)>, Error> {
    let timeout = Duration::from_secs(30);
    let broker = Broker::bind(
        "127.0.0.1:0",
        BrokerOptions { config: config.clone(), step_timeout: timeout, max_sessions: Some(1) },
    )?;
    let addr = broker.local_addr()?;
    let server = broker.spawn();
    let (query, secret) = buyer_prepare_query(buyer, args.decoys, config, args.seed)?;
    let session = query.session_id.clone();

    let payloads = thread::scope(|scope| {
        let buyer_side = scope.spawn(|| buyer_client(addr, &query, &secret, sellers.len(), timeout));
        let seller_sides: Vec<_> = ids
            .iter()
            .zip(sellers)
            .map(|(id, m)| {
                let session = session.as_str();
                scope.spawn(move || seller_client(addr, session, id, m, timeout))
            })
            .collect();
        for s in seller_sides {
            s.join().expect("seller thread")?;
        }
        buyer_side.join().expect("buyer thread")
    })?;
    server.join().expect("broker thread")?;

    let mut by_seller: HashMap<String, ValuationPayload> = payloads
        .into_iter()
        .filter_map(|p| p.seller.clone().map(|s| (s, p)))
        .collect();
    ids.iter()
        .map(|id| {
            by_seller
                .remove(id)
                .map(|p| (p.diversity, p.relevance, p.combined))
                .ok_or_else(|| Error::ProtocolViolation(format!("no valuation for seller {id}")))
        })
        .collect()
}

#[derive(Serialize)]
struct OutcomeLine<'a> {
    session_id: &'a str,
    seller: &'a str,
    report: ValuationReport,
}

fn serve(
    listen: &str,
    max_sessions: Option<usize>,
    flags: &ValuationFlags,
    timeout: u64,
    out: Option<&Path>,
) -> Result<(), Error> {
    let config = flags.config()?;
    let (tx, rx) = mpsc::channel();
    let broker = Broker::bind(
        listen,
        BrokerOptions { config: config.clone(), step_timeout: Duration::from_secs(timeout), max_sessions },
    )?
    .with_events(tx);
    eprintln!("datavalue: broker listening on {}", broker.local_addr()?);
    let server = broker.spawn();
    let mut w = output(out)?;
    for event in rx {
        let line = OutcomeLine {
            session_id: &event.session_id,
            seller: &event.seller,
            report: event.valuation.into_report(config.clone()),
        };
        writeln!(w, "{}", serde_json::to_string(&line).expect("outcome serializes"))?;
        w.flush()?;
    }
    server.join().expect("broker thread")
}

fn client(args: &ClientArgs) -> Result<(), Error> {
    let config = args.valuation.config()?;
    let timeout = Duration::from_secs(args.timeout);
    match args.role {
        ClientRole::Buyer => {
            let path = args
                .buyer
                .as_ref()
                .ok_or_else(|| Error::InvalidData("--buyer is required for the buyer role".into()))?;
            let buyer = load_matrix(path)?;
            check_weights(&config, buyer.cols())?;
            let (mut query, mut secret) = buyer_prepare_query(&buyer, args.decoys, &config, args.seed)?;
            if let Some(s) = &args.session {
                query.session_id = s.clone();
                secret.session_id = s.clone();
            }
            eprintln!("datavalue: session {}", query.session_id);
            let payloads = buyer_client(args.connect.as_str(), &query, &secret, args.sellers, timeout)?;
            let rows: Vec<_> = payloads
                .into_iter()
                .map(|p| (p.seller.unwrap_or_default(), p.diversity, p.relevance, p.combined))
                .collect();
            write_rows(args.out.as_deref(), &rows)
        }
        ClientRole::Seller => {
            let spec = args
                .seller
                .as_ref()
                .ok_or_else(|| Error::InvalidData("--seller is required for the seller role".into()))?;
            let session = args
                .session
                .as_ref()
                .ok_or_else(|| Error::InvalidData("--session is required for the seller role".into()))?;
            let (id, path) = seller_spec(spec, None);
            let data = load_matrix(&path)?;
            let p = seller_client(args.connect.as_str(), session, &id, &data, timeout)?;
            write_rows(args.out.as_deref(), &[(id, p.diversity, p.relevance, p.combined)])
        }
    }
}

struct Point {
    seller: String,
    diversity: f64,
    relevance: f64,
}

fn read_report(path: &Path) -> Result<Vec<Point>, Error> {
    let parse_err = |e: csv::Error| Error::Parse {
        line: e.position().map_or(0, csv::Position::line),
        message: e.to_string(),
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidData(format!("{other:?}")),
    })?;
    let header = rdr.headers().map_err(parse_err)?.clone();
    if header.iter().collect::<Vec<_>>() != ["seller_id", "diversity", "relevance", "combined"] {
        return Err(Error::Parse {
            line: 1,
            message: "header must be seller_id,diversity,relevance,combined".into(),
        });
    }
    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(parse_err)?;
        let line = i as u64 + 2;
        let unit = |field: &str, text: &str| -> Result<f64, Error> {
            match text.trim().parse::<f64>() {
                Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
                Ok(v) => Err(Error::Parse { line, message: format!("{field} {v} outside [0, 1]") }),
                Err(_) => Err(Error::Parse { line, message: format!("{field} {text:?} is not a number") }),
            }
        };
        let diversity = unit("diversity", &rec[1])?;
        let relevance = unit("relevance", &rec[2])?;
        if !rec[3].trim().is_empty() {
            unit("combined", &rec[3])?;
        }
        points.push(Point { seller: rec[0].to_owned(), diversity, relevance });
    }
    Ok(points)
}

fn report(input: &Path, out: Option<&Path>, svg: Option<&Path>) -> Result<(), Error> {
    let points = read_report(input)?;
    let mut w = output(out)?;
    writeln!(w, "relevance,diversity")?;
    for p in &points {
        writeln!(w, "{:?},{:?}", p.relevance, p.diversity)?;
    }
    w.flush()?;
    if let Some(path) = svg {
        fs::write(path, scatter_svg(&points))?;
    }
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn scatter_svg(points: &[Point]) -> String {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 50.0;
    let x = |r: f64| PAD + r * SIZE;
    let y = |d: f64| PAD + (1.0 - d) * SIZE;
    let total = SIZE + 2.0 * PAD;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{total}\" height=\"{total}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect x=\"{PAD}\" y=\"{PAD}\" width=\"{SIZE}\" height=\"{SIZE}\" fill=\"none\" stroke=\"black\"/>\n"
    );
    for k in 0..=4 {
        let t = f64::from(k) / 4.0;
        s += &format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{t}</text>\n<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{t}</text>\n",
            x(t), PAD + SIZE + 18.0, PAD - 6.0, y(t) + 4.0
        );
    }
    s += &format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">relevance</text>\n\
         <text x=\"14\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">diversity</text>\n",
        PAD + SIZE / 2.0, total - 8.0, PAD + SIZE / 2.0, PAD + SIZE / 2.0
    );
    for p in points {
        s += &format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"steelblue\"/>\n<text x=\"{:.2}\" y=\"{:.2}\">{}</text>\n",
            x(p.relevance), y(p.diversity), x(p.relevance) + 6.0, y(p.diversity) - 6.0, xml_escape(&p.seller)
        );
    }
    s += "</svg>\n";
    s
}
