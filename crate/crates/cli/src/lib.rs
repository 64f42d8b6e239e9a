//! Command-line front end: argument and config handling plus the crawl,
//! audit and output pipeline behind `demodocus crawl`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Deserialize;

use demodocus_core::analysis::{ReachabilityMode, DEFAULT_GAP_RATIO};
use demodocus_core::crawler::{crawl, CrawlConfig, CrawlResult, PageDriver};
use demodocus_core::dot::export_dot;
use demodocus_core::equivalence::{EquivalenceConfig, Strategy};
use demodocus_core::report::{audit, emit_report, Audit, AuditOptions, Format};
use demodocus_core::sim::load_fixture;
use demodocus_core::users::{builtin_models, LowVisionThresholds, UserModel, NON_DISABLED};
use demodocus_webdriver::{resolve_endpoint, SessionOptions, WebDriverSession, ENDPOINT_ENV};

pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VIOLATIONS: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "demodocus", version, about = "Crawl a page and report states some users cannot reach")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Commands,
}

#[derive(Debug, Subcommand)]
pub enum Commands {
    /// Crawl a page or fixture and audit it for each user model.
    Crawl(CrawlArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DriverKind {
    /// Fixture file replayed in memory.
    Sim,
    /// Live browser through a WebDriver remote end.
    Webdriver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyKind {
    Pipeline,
    Template,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Text,
}

#[derive(Debug, Clone, Args)]
pub struct CrawlArgs {
    /// URI to crawl, or a fixture file for the simulated driver.
    pub input: String,
    /// Defaults to `sim` when INPUT is an existing file, `webdriver` otherwise.
    #[arg(long, value_enum)]
    pub driver: Option<DriverKind>,
    /// Comma-separated user models (omni, keyboard, lowvision, screenreader, nondisabled).
    #[arg(long, value_delimiter = ',')]
    pub users: Option<Vec<String>>,
    /// Model the others are compared against.
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyKind>,
    #[arg(long)]
    pub max_states: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Try every action on every target instead of pruning by listeners.
    #[arg(long)]
    pub exhaustive: bool,
    /// Only flag states whose own incoming edges are unusable, starting from
    /// any state the disabled user can occupy.
    #[arg(long)]
    pub strict: bool,
    /// Report file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
    /// Graphviz file for the crawled graph.
    #[arg(long)]
    pub dot: Option<PathBuf>,
    /// User whose scores and violations decorate the DOT output.
    #[arg(long)]
    pub dot_user: Option<String>,
    /// TOML file with crawl, user and driver settings. Flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = ENDPOINT_ENV)]
    pub webdriver_url: Option<String>,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub crawl: Option<CrawlConfig>,
    pub users: Option<Vec<String>>,
    pub baseline: Option<String>,
    pub strict: Option<bool>,
    pub gap_ratio: Option<f64>,
    pub low_vision: Option<LowVisionThresholds>,
    pub webdriver: Option<WebDriverConfig>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct WebDriverConfig {
    pub url: Option<String>,
    #[serde(flatten)]
    pub session: SessionOptions,
}

pub fn load_config(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

/// Everything a crawl needs after merging flags over the config file.
#[derive(Debug, Clone)]
pub struct Settings {
    pub input: String,
    pub driver: DriverKind,
    pub crawl: CrawlConfig,
    pub audit: AuditOptions,
    pub low_vision: LowVisionThresholds,
    pub webdriver_url: Option<String>,
    pub session: SessionOptions,
}

pub fn settings(args: &CrawlArgs) -> Result<Settings> {
    let file = match &args.config {
        Some(p) => load_config(p)?,
        None => FileConfig::default(),
    };
    let mut crawl = file.crawl.clone().unwrap_or_default();
    if let Some(n) = args.max_states {
        crawl.max_states = n;
    }
    if let Some(n) = args.max_depth {
        crawl.max_depth = n;
    }
    if args.exhaustive {
        crawl.exhaustive = true;
    }
    match args.strategy {
        Some(StrategyKind::Template) => crawl.strategy = Strategy::Template,
        Some(StrategyKind::Pipeline) if !matches!(crawl.strategy, Strategy::Pipeline(_)) => {
            crawl.strategy = Strategy::Pipeline(EquivalenceConfig::default())
        }
        _ => {}
    }

    let low_vision = file.low_vision.unwrap_or_default();
    let model = |name: &str| UserModel::by_name(name.trim(), low_vision).map_err(anyhow::Error::from);
    let users = match args.users.as_ref().or(file.users.as_ref()) {
        Some(names) => names.iter().filter(|n| !n.trim().is_empty()).map(|n| model(n)).collect::<Result<Vec<_>>>()?,
        None => builtin_models()
            .into_iter()
            .map(|u| if u.name == demodocus_core::users::LOW_VISION { UserModel::low_vision(low_vision) } else { u })
            .collect(),
    };
    if users.is_empty() {
        bail!("no user models selected");
    }
    let baseline = model(args.baseline.as_deref().or(file.baseline.as_deref()).unwrap_or(NON_DISABLED))?;
    let strict = args.strict || file.strict.unwrap_or(false);
    let gap_ratio = file.gap_ratio.unwrap_or(DEFAULT_GAP_RATIO);
    if gap_ratio.is_nan() || gap_ratio <= 0.0 {
        bail!("gap_ratio must be positive");
    }
    let audit = AuditOptions {
        baseline,
        users,
        mode: if strict { ReachabilityMode::IncomingEdge } else { ReachabilityMode::Transitive },
        gap_ratio,
    };

    let wd = file.webdriver.unwrap_or_default();
    let driver = args.driver.unwrap_or(if Path::new(&args.input).is_file() {
        DriverKind::Sim
    } else {
        DriverKind::Webdriver
    });
    let mut session = wd.session;
    session.stabilization_wait_ms = crawl.stabilization_wait;
    Ok(Settings {
        input: args.input.clone(),
        driver,
        crawl,
        audit,
        low_vision,
        webdriver_url: resolve_endpoint(args.webdriver_url.as_deref().or(wd.url.as_deref())),
        session,
    })
}

fn crawl_with<D: PageDriver>(mut driver: D, s: &Settings) -> Result<CrawlResult> {
    let result = crawl(&mut driver, &s.input, &s.crawl);
    let closed = driver.close();
    let result = result?;
    closed.context("closing the page driver")?;
    Ok(result)
}

pub fn run_crawl(s: &Settings) -> Result<Audit> {
    let result = match s.driver {
        DriverKind::Sim => {
            let model = load_fixture(&s.input)?;
            crawl_with(model.simulate(), s)?
        }
        DriverKind::Webdriver => {
            let Some(url) = &s.webdriver_url else {
                bail!("no WebDriver endpoint: pass --webdriver-url or set {ENDPOINT_ENV}");
            };
            let session = WebDriverSession::connect(url, s.session.clone())?;
            crawl_with(session, s)?
        }
    };
    info!("crawled {} states, {} edges", result.graph.state_count(), result.graph.edges.len());
    Ok(audit(result, &s.audit)?)
}

/// Files and bytes produced by one run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub report: Vec<u8>,
    pub dot: Option<String>,
    pub violations: usize,
}

fn driver_name(d: DriverKind) -> &'static str {
    match d {
        DriverKind::Sim => "sim",
        DriverKind::Webdriver => "webdriver",
    }
}

/// Runs `crawl` and writes the requested outputs. Standard output is left to
/// the caller when `--out` is absent.
pub fn execute(args: &CrawlArgs) -> Result<Outcome> {
    let s = settings(args)?;
    let a = run_crawl(&s)?;
    let report = a.report(&s.input, driver_name(s.driver), &s.crawl, s.low_vision);
    let format = match args.format {
        OutputFormat::Json => Format::Json,
        OutputFormat::Text => Format::Text,
    };
    let bytes = emit_report(&report, format)?;
    if let Some(out) = &args.out {
        fs::write(out, &bytes).with_context(|| format!("cannot write {}", out.display()))?;
    }

    let dot = if let Some(path) = &args.dot {
        let disabled: Vec<&str> = s.audit.disability_models().map(|u| u.name.as_str()).collect();
        let user = args.dot_user.as_deref().or(match disabled.as_slice() {
            [only] => Some(*only),
            _ => None,
        });
        let overlay = match user {
            Some(u) => Some(a.overlay(u).with_context(|| format!("user `{u}` was not evaluated"))?),
            None => None,
        };
        let text = export_dot(&a.graph, overlay.as_ref());
        fs::write(path, &text).with_context(|| format!("cannot write {}", path.display()))?;
        Some(text)
    } else {
        None
    };

    let violations = report.violations.len();
    Ok(Outcome {
        exit_code: if violations > 0 { EXIT_VIOLATIONS } else { EXIT_CLEAN },
        report: bytes,
        dot,
        violations,
    })
}
