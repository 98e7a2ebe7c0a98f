//! Command-line interface.
//!
//! Exit codes: 0 on success, 1 on I/O or numerical failures, 2 on invalid
//! input, 3 when the answer is a negative verdict (not attainable, not
//! elliptical, a failed diagnostic, or a reproduction outside tolerance).

use std::ffi::OsString;
use std::fs;
use std::io::{self, Read, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use concordance_core::attainability::Limits;
use concordance_core::elliptical::McConfig;
use concordance_core::subset::pair_labels;
use concordance_core::{extend_to_full, signature_from_weights, weights_from_signature, MixtureWeights};
use serde::Serialize;
use serde_json::{json, Value};

use crate::api::{self, ServiceConfig};
use crate::error::{ApiError, Error, Result};
use crate::fraction::{parse_label, parse_labels, parse_list};
use crate::ops::{self, BoundsRequest, EllipticalRequest, EstimateOptions, KendallRequest, MatrixKind, TLimitModeDoc};
use crate::ops::{TiePolicy, VertexMethodDoc, VerticesRequest};
use crate::parallel;
use crate::reproduce;
use crate::schema::{GroupWeightsDoc, MatrixDoc, ScaleDoc, SignatureDoc, SkeletalDoc, WeightsDoc};
use crate::table::{read_matrix, read_samples, rows_to_csv, ColumnRef, CsvOptions};

#[derive(Parser, Debug)]
#[command(name = "concordance", version, about = "Concordance signatures, attainability and extremal mixtures")]
pub struct Cli {
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output file (a directory for `reproduce`); stdout by default.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the coefficient matrix A_d.
    Amatrix {
        #[arg(long)]
        d: usize,
    },
    /// Mixture weights of a complete even signature.
    Solve(SignatureInput),
    /// Signature of a mixture.
    Signature {
        #[command(flatten)]
        weights: WeightsInput,
        /// Include odd subsets.
        #[arg(long)]
        full: bool,
    },
    /// Attainability of a partial signature.
    Check(SignatureInput),
    /// Bounds on missing entries of a partial signature.
    Bounds {
        #[command(flatten)]
        signature: SignatureInput,
        /// Target label such as 1,2,3,4 (repeatable); all missing labels by default.
        #[arg(long = "target")]
        targets: Vec<String>,
        /// Also list the vertices of the projection onto the targets.
        #[arg(long)]
        vertices: bool,
    },
    /// Vertices of the polytope of attainable weights.
    Vertices {
        #[command(flatten)]
        signature: SignatureInput,
        /// Label to project onto (repeatable).
        #[arg(long = "project")]
        project: Vec<String>,
        #[arg(long, value_enum, default_value_t = EnumerationMethod::BasisGraph)]
        method: EnumerationMethod,
    },
    /// Empirical signature of a CSV sample.
    Estimate {
        file: PathBuf,
        #[command(flatten)]
        csv: CsvArgs,
        #[arg(long, value_enum, default_value_t = Ties::Reject)]
        ties: Ties,
        /// Bootstrap resamples for standard errors.
        #[arg(long, num_args = 0..=1, default_missing_value = "500")]
        bootstrap: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Signature of an elliptical copula.
    Elliptical {
        #[command(flatten)]
        matrix: MatrixInput,
        #[command(flatten)]
        mc: McArgs,
        /// Only test whether the Kendall matrix is elliptical and in the cut polytope.
        #[arg(long)]
        check: bool,
    },
    /// Extremal mixture approached by the t copula as the degrees of freedom vanish.
    Tlimit {
        #[command(flatten)]
        matrix: MatrixInput,
        #[command(flatten)]
        mc: McArgs,
        #[arg(long, value_enum, default_value_t = TLimitArg::Analytic)]
        mode: TLimitArg,
    },
    /// Solve the collapsed system of an equiconcordant signature.
    Skeletal {
        #[arg(long)]
        d: usize,
        /// Skeletal signature (1, κ_2, κ_4, ...).
        #[arg(long, conflicts_with = "groups", allow_hyphen_values = true)]
        k: Option<String>,
        /// Expand group weights into mixture weights instead.
        #[arg(long, allow_hyphen_values = true)]
        groups: Option<String>,
    },
    /// Print the collapsed matrix B_d.
    Bmatrix {
        #[arg(long)]
        d: usize,
    },
    /// Draw a sample from an extremal mixture.
    Sample {
        #[command(flatten)]
        weights: WeightsInput,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
    },
    /// Test whether a sample looks like an extremal mixture.
    Validate {
        file: PathBuf,
        #[command(flatten)]
        csv: CsvArgs,
        #[arg(long, default_value_t = ops::DEFAULT_LEVEL)]
        level: f64,
    },
    /// Regenerate the published tables into --out and check them.
    Reproduce {
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
        #[arg(long, default_value_t = 10_000_000)]
        mc_samples: u64,
    },
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
struct SignatureInput {
    /// Signature JSON document (`-` for stdin).
    #[arg(long, conflicts_with_all = ["pairs", "values"])]
    signature: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    /// Pair values in lexicographic order, e.g. 7/24,7/24,7/24.
    #[arg(long, allow_hyphen_values = true)]
    pairs: Option<String>,
    /// Labels for --values, separated by `;`, e.g. "1,2,3,4;1,2,3,5".
    #[arg(long, requires = "values")]
    labels: Option<String>,
    #[arg(long, requires = "labels", allow_hyphen_values = true)]
    values: Option<String>,
    /// Values are Kendall's tau rather than concordance probabilities.
    #[arg(long)]
    tau: bool,
}

#[derive(Args, Debug)]
struct WeightsInput {
    /// Weights JSON document (`-` for stdin).
    #[arg(long, conflicts_with = "w")]
    weights: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    w: Option<String>,
}

#[derive(Args, Debug)]
struct MatrixInput {
    /// Matrix as JSON rows or header-less CSV.
    #[arg(long, conflicts_with = "pairs")]
    matrix: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    /// Off-diagonal entries in lexicographic order.
    #[arg(long, allow_hyphen_values = true)]
    pairs: Option<String>,
    /// Entries are Kendall's tau rather than linear correlations.
    #[arg(long)]
    tau: bool,
}

#[derive(Args, Debug)]
struct McArgs {
    #[arg(long)]
    mc_samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct CsvArgs {
    /// Replace prices by log-returns.
    #[arg(long)]
    log_returns: bool,
    /// Columns to keep, by 1-based index or header name.
    #[arg(long, value_delimiter = ',')]
    columns: Vec<String>,
    /// Leading columns to drop, e.g. a date.
    #[arg(long, default_value_t = 0)]
    skip_columns: usize,
    #[arg(long, conflicts_with = "no_header")]
    header: bool,
    #[arg(long)]
    no_header: bool,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, env = "CONCORDANCE_BIND", default_value = "127.0.0.1")]
    bind: IpAddr,
    #[arg(long, env = "CONCORDANCE_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "CONCORDANCE_DIM_CAP", default_value_t = concordance_core::signature::DEFAULT_DIM_CAP)]
    dim_cap: usize,
    #[arg(long, env = "CONCORDANCE_MC_SAMPLES", default_value_t = 1_000_000)]
    mc_samples: u64,
    #[arg(long, env = "CONCORDANCE_SEED", default_value_t = 0x5eed)]
    seed: u64,
    #[arg(long, env = "CONCORDANCE_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Allowed browser origin (repeatable; `*` for any).
    #[arg(long = "cors-origin", env = "CONCORDANCE_CORS_ORIGINS", value_delimiter = ',')]
    cors_origins: Vec<String>,
    /// Milliseconds a request waits for its job before answering 202.
    #[arg(long, env = "CONCORDANCE_SYNC_WAIT_MS", default_value_t = 2000)]
    sync_wait_ms: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EnumerationMethod {
    BasisGraph,
    Combinations,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Ties {
    Reject,
    Split,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TLimitArg {
    Analytic,
    MonteCarlo,
}

/// What a command produced.
struct Outcome {
    json: Value,
    csv: Option<String>,
    /// False for negative verdicts.
    positive: bool,
    message: Option<&'static str>,
    compact: bool,
}

impl Outcome {
    fn new(value: &impl Serialize) -> Result<Self> {
        Ok(Self { json: serde_json::to_value(value)?, csv: None, positive: true, message: None, compact: false })
    }

    fn csv(mut self, text: String) -> Self {
        self.csv = Some(text);
        self
    }

    fn compact(mut self) -> Self {
        self.compact = true;
        self
    }

    fn verdict(mut self, positive: bool, message: &'static str) -> Self {
        self.positive = positive;
        if !positive {
            self.message = Some(message);
        }
        self
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    if path == Path::new("-") {
        let mut buf = Vec::new();
        io::stdin().read_to_end(&mut buf)?;
        Ok(buf)
    } else {
        Ok(fs::read(path)?)
    }
}

fn need_d(d: Option<usize>) -> Result<usize> {
    d.ok_or_else(|| Error::Invalid("--d is required without a document".into()))
}

impl SignatureInput {
    fn doc(&self) -> Result<SignatureDoc> {
        let mut doc = match &self.signature {
            Some(path) => serde_json::from_slice::<SignatureDoc>(&read_input(path)?)?,
            None => {
                let d = need_d(self.d)?;
                let mut labels = Vec::new();
                let mut values = Vec::new();
                if let Some(p) = &self.pairs {
                    values = parse_list(p)?;
                    labels = pair_labels(d).iter().skip(1).map(|s| s.members()).collect();
                    if values.len() != labels.len() {
                        return Err(Error::Invalid(format!(
                            "--pairs needs {} values for d = {d}, got {}",
                            labels.len(),
                            values.len()
                        )));
                    }
                }
                if let (Some(l), Some(v)) = (&self.labels, &self.values) {
                    labels.extend(parse_labels(l)?);
                    values.extend(parse_list(v)?);
                }
                SignatureDoc { d, labels, values, scale: None }
            }
        };
        if self.tau {
            doc.scale = Some(ScaleDoc::Tau);
        }
        Ok(doc)
    }
}

impl WeightsInput {
    fn weights(&self) -> Result<MixtureWeights> {
        let doc = match (&self.weights, &self.w) {
            (Some(path), _) => serde_json::from_slice::<WeightsDoc>(&read_input(path)?)?,
            (None, Some(w)) => WeightsDoc { d: need_d(self.d)?, w: parse_list(w)? },
            (None, None) => return Err(Error::Invalid("give --weights FILE or --d with --w".into())),
        };
        doc.to_weights()
    }
}

impl MatrixInput {
    fn rows(&self) -> Result<Vec<Vec<f64>>> {
        if let Some(path) = &self.matrix {
            let bytes = read_input(path)?;
            let json = path.extension().is_some_and(|e| e == "json")
                || bytes.iter().find(|b| !b.is_ascii_whitespace()).is_some_and(|&b| b == b'[' || b == b'{');
            return if json {
                Ok(serde_json::from_slice::<MatrixDoc>(&bytes)?.rows().to_vec())
            } else {
                read_matrix(&bytes[..])
            };
        }
        let d = need_d(self.d)?;
        let pairs = parse_list(self.pairs.as_deref().ok_or_else(|| Error::Invalid("give --matrix or --pairs".into()))?)?;
        if pairs.len() != d * (d - 1) / 2 {
            return Err(Error::Invalid(format!("--pairs needs {} values for d = {d}", d * (d - 1) / 2)));
        }
        let mut rows = vec![vec![1.0; d]; d];
        let mut it = pairs.into_iter();
        for i in 0..d {
            for j in i + 1..d {
                let v = it.next().unwrap_or_default();
                rows[i][j] = v;
                rows[j][i] = v;
            }
        }
        Ok(rows)
    }

    fn request(&self, mc: &McArgs) -> Result<EllipticalRequest> {
        Ok(EllipticalRequest {
            matrix: self.rows()?,
            kind: if self.tau { MatrixKind::Kendall } else { MatrixKind::Correlation },
            samples: mc.mc_samples,
            seed: mc.seed,
        })
    }
}

impl CsvArgs {
    fn options(&self) -> CsvOptions {
        CsvOptions {
            header: if self.header {
                Some(true)
            } else if self.no_header {
                Some(false)
            } else {
                None
            },
            log_returns: self.log_returns,
            columns: (!self.columns.is_empty()).then(|| self.columns.iter().map(|c| ColumnRef::parse(c)).collect()),
            skip_columns: self.skip_columns,
        }
    }
}

fn label_text(l: &[usize]) -> String {
    let inner: Vec<String> = l.iter().map(usize::to_string).collect();
    format!("{{{}}}", inner.join(","))
}

fn csv_table(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io_err = |e: csv::Error| Error::Io(io::Error::other(e));
    w.write_record(header).map_err(io_err)?;
    for r in rows {
        w.write_record(r).map_err(io_err)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Io(io::Error::other(e.to_string())))?)
        .map_err(|e| Error::Invalid(e.to_string()))
}

fn signature_csv(doc: &SignatureDoc) -> Result<String> {
    let rows = doc.labels.iter().zip(&doc.values).map(|(l, v)| vec![label_text(l), v.to_string()]).collect();
    csv_table(&["label", "kappa"], rows)
}

fn weights_csv(w: &[f64]) -> Result<String> {
    let rows = w.iter().enumerate().map(|(k, v)| vec![(k + 1).to_string(), v.to_string()]).collect();
    csv_table(&["k", "w"], rows)
}

fn matrix_csv<T: ToString>(rows: &[Vec<T>]) -> String {
    rows.iter().map(|r| r.iter().map(T::to_string).collect::<Vec<_>>().join(",") + "\n").collect()
}

fn mc_defaults() -> McConfig {
    McConfig::default()
}

fn execute(cli: &Cli) -> Result<Outcome> {
    let limits = Limits::default();
    match &cli.command {
        Command::Amatrix { d } => {
            let rows = ops::amatrix(*d, &limits)?;
            Ok(Outcome::new(&rows)?.csv(matrix_csv(&rows)).compact())
        }
        Command::Solve(input) => {
            let even = input.doc()?.to_even()?;
            match weights_from_signature(&even) {
                Ok(w) => Ok(Outcome::new(&WeightsDoc::from_weights(&w))?.csv(weights_csv(w.as_slice())?)),
                Err(e @ concordance_core::Error::NotAttainable { .. }) => {
                    let detail = ApiError::from(&Error::Core(e));
                    Ok(Outcome::new(&detail)?.verdict(false, "not attainable"))
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Signature { weights, full } => {
            let w = weights.weights()?;
            let even = signature_from_weights(&w);
            let doc = if *full { SignatureDoc::from_full(&extend_to_full(&even)) } else { SignatureDoc::from_even(&even) };
            Ok(Outcome::new(&doc)?.csv(signature_csv(&doc)?))
        }
        Command::Check(input) => {
            let cert = ops::attainability(&input.doc()?, &limits)?;
            let feasible = cert.feasible;
            Ok(Outcome::new(&cert)?.verdict(feasible, "not attainable"))
        }
        Command::Bounds { signature, targets, vertices } => {
            let targets = if targets.is_empty() {
                None
            } else {
                Some(targets.iter().map(|t| parse_label(t)).collect::<Result<Vec<_>>>()?)
            };
            let req = BoundsRequest { signature: signature.doc()?, targets, vertices: *vertices };
            let doc = ops::bounds(&req, &limits, None)?;
            let rows = doc
                .targets
                .iter()
                .zip(doc.lower.iter().zip(&doc.upper))
                .map(|(t, (lo, hi))| vec![label_text(t), lo.to_string(), hi.to_string()])
                .collect();
            let text = csv_table(&["label", "lower", "upper"], rows)?;
            Ok(Outcome::new(&doc)?.csv(text))
        }
        Command::Vertices { signature, project, method } => {
            let project = if project.is_empty() {
                None
            } else {
                Some(project.iter().map(|t| parse_label(t)).collect::<Result<Vec<_>>>()?)
            };
            let method = match method {
                EnumerationMethod::BasisGraph => VertexMethodDoc::BasisGraph,
                EnumerationMethod::Combinations => VertexMethodDoc::Combinations,
            };
            let req = VerticesRequest { signature: signature.doc()?, project, method };
            let doc = ops::vertices(&req, &limits, None)?;
            let csv = match &doc.projection {
                Some(p) => matrix_csv(&p.points),
                None => matrix_csv(&doc.vertices),
            };
            Ok(Outcome::new(&doc)?.csv(csv))
        }
        Command::Estimate { file, csv, ties, bootstrap, seed } => {
            let data = read_samples(&read_input(file)?[..], &csv.options())?;
            let opts = EstimateOptions {
                ties: match ties {
                    Ties::Reject => TiePolicy::Reject,
                    Ties::Split => TiePolicy::Split,
                },
                bootstrap: *bootstrap,
                seed: *seed,
            };
            let doc = ops::estimate(&data, &opts)?;
            let text = signature_csv(&doc.signature)?;
            Ok(Outcome::new(&doc)?.csv(text))
        }
        Command::Elliptical { matrix, mc, check } => {
            if *check {
                let doc = ops::elliptical_check(&KendallRequest { matrix: matrix.rows()? })?;
                let ok = doc.elliptical.attainable;
                return Ok(Outcome::new(&doc)?.verdict(ok, "not elliptical"));
            }
            let doc = ops::elliptical(&matrix.request(mc)?, &mc_defaults(), None)?;
            let text = signature_csv(&doc.signature)?;
            Ok(Outcome::new(&doc)?.csv(text))
        }
        Command::Tlimit { matrix, mc, mode } => {
            let req = ops::TLimitRequest {
                matrix: matrix.request(mc)?,
                mode: match mode {
                    TLimitArg::Analytic => TLimitModeDoc::Analytic,
                    TLimitArg::MonteCarlo => TLimitModeDoc::MonteCarlo,
                },
            };
            let doc = ops::tlimit(&req, &mc_defaults(), None)?;
            let text = weights_csv(&doc.w)?;
            Ok(Outcome::new(&doc)?.csv(text))
        }
        Command::Skeletal { d, k, groups } => match (k, groups) {
            (Some(k), None) => {
                let doc = ops::skeletal(&SkeletalDoc { d: *d, k: parse_list(k)? }, &limits)?;
                let ok = doc.attainable;
                Ok(Outcome::new(&doc)?.verdict(ok, "not attainable"))
            }
            (None, Some(v)) => {
                let doc = ops::expand(&GroupWeightsDoc { d: *d, v: parse_list(v)? }, &limits)?;
                let text = weights_csv(&doc.w)?;
                Ok(Outcome::new(&doc)?.csv(text))
            }
            _ => Err(Error::Invalid("give --k or --groups".into())),
        },
        Command::Bmatrix { d } => {
            let doc = ops::bmatrix(*d)?;
            let text = matrix_csv(&doc.exact);
            Ok(Outcome::new(&doc)?.csv(text))
        }
        Command::Sample { weights, n, seed } => {
            let w = weights.weights()?;
            let s = parallel::sample_mixture(&w, *n, *seed)?;
            let d = s.d;
            let header: Vec<String> = (1..=d).map(|j| format!("u{j}")).collect();
            let text = rows_to_csv(Some(&header), d, &s.values)?;
            let rows: Vec<Vec<f64>> = s.values.chunks(d).map(<[f64]>::to_vec).collect();
            Ok(Outcome::new(&json!({ "d": d, "n": s.n, "seed": s.seed, "rows": rows }))?.csv(text))
        }
        Command::Validate { file, csv, level } => {
            let data = read_samples(&read_input(file)?[..], &csv.options())?;
            let doc = ops::validate(&data, *level)?;
            let ok = doc.joint.pass;
            Ok(Outcome::new(&doc)?.verdict(ok, "not an extremal mixture"))
        }
        Command::Reproduce { seed, mc_samples } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("reproduction"));
            let report = reproduce::run(&reproduce::Options { out, seed: *seed, mc_samples: *mc_samples })?;
            for c in &report.checks {
                eprintln!("{} {} ({:.2}s)", if c.pass { "PASS" } else { "FAIL" }, c.name, c.seconds);
                for f in &c.failures {
                    eprintln!("     {f}");
                }
            }
            let ok = report.pass;
            Ok(Outcome::new(&report)?.verdict(ok, "reproduction outside tolerance"))
        }
        Command::Serve(args) => {
            let config = ServiceConfig {
                limits: Limits { dim_cap: args.dim_cap, ..Limits::default() },
                mc: McConfig::new(args.mc_samples, args.seed)?,
                sync_wait: Duration::from_millis(args.sync_wait_ms),
                cors_origins: if args.cors_origins.is_empty() {
                    ServiceConfig::default().cors_origins
                } else {
                    args.cors_origins.clone()
                },
                data_dir: args.data_dir.clone(),
                ..ServiceConfig::default()
            };
            let addr = SocketAddr::new(args.bind, args.port);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(api::serve(addr, config))?;
            Ok(Outcome::new(&Value::Null)?)
        }
    }
}

fn emit(cli: &Cli, outcome: &Outcome) -> Result<()> {
    if matches!(cli.command, Command::Serve(_)) {
        return Ok(());
    }
    let text = match (cli.format, &outcome.csv) {
        (Format::Csv, Some(csv)) => csv.clone(),
        (Format::Csv, None) => return Err(Error::Invalid("this command has no CSV output".into())),
        (Format::Json, _) if outcome.compact => serde_json::to_string(&outcome.json)? + "\n",
        (Format::Json, _) => serde_json::to_string_pretty(&outcome.json)? + "\n",
    };
    match (&cli.out, &cli.command) {
        (Some(path), cmd) if !matches!(cmd, Command::Reproduce { .. }) => fs::write(path, text)?,
        _ => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn exit_code(e: &Error) -> i32 {
    if e.is_infeasibility() {
        return 3;
    }
    match ApiError::from(e).status {
        400 | 404 | 409 | 413 | 422 => 2,
        _ => 1,
    }
}

/// Runs the command line and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = execute(&cli).and_then(|outcome| emit(&cli, &outcome).map(|_| outcome));
    match result {
        Ok(outcome) if outcome.positive => 0,
        Ok(outcome) => {
            eprintln!("{}", outcome.message.unwrap_or("negative verdict"));
            3
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
