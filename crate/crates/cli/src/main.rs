//! `pdm`: the marketplace model from the command line. Risk scoring,
//! price quoting, and license compliance run as one-shot calculators;
//! `simulate` runs a whole scenario and writes its ledger and report,
//! which `report` can recompute from the ledger alone.

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pdm_core::license::Action;
use pdm_core::sim::{metrics_from_ledger, run_scenario, ScenarioConfig, ScenarioMetrics};
use pdm_core::{
    assess_risk, check_action, enforced_listing_price, recommend_price, ComplianceVerdict,
    EventLog, HarmImpactVector, License, LicenseTemplate, Lifespan, MemberId, PricingParams,
    Purpose,
};

#[derive(Parser)]
#[command(
    name = "pdm",
    version,
    about = "Deterministic personal-data marketplace model",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Score the privacy harm of a prospective listing.
    AssessRisk {
        /// Distorting-harm impact, 0..=5.
        #[arg(long)]
        distortion: u8,
        /// Revealing-harm impact, 0..=5.
        #[arg(long)]
        revelation: u8,
        /// Intruding-harm impact, 0..=5.
        #[arg(long)]
        intrusion: u8,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Quote a recommended price for a dataset under given license terms.
    Price {
        #[arg(long)]
        distortion: u8,
        #[arg(long)]
        revelation: u8,
        #[arg(long)]
        intrusion: u8,
        /// Number of data points.
        #[arg(long)]
        quantity: u64,
        /// Noise level the seller will inject, 0..=1.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// License duration in ticks (default 365 when not perpetual).
        #[arg(long, conflicts_with = "perpetual")]
        lifespan_ticks: Option<u64>,
        #[arg(long)]
        perpetual: bool,
        #[arg(long)]
        exclusive: bool,
        /// Allow the buyer to resell.
        #[arg(long)]
        resale: bool,
        /// Allow third-party feature extraction.
        #[arg(long)]
        extraction: bool,
        /// Demand index, clamped by the pricing parameters.
        #[arg(long, default_value_t = 1.0)]
        demand: f64,
        #[arg(long, default_value_t = 1.0)]
        base_unit_value: f64,
        /// Seller's gross ask per point; adds the enforced listing price to
        /// the output.
        #[arg(long)]
        ask_per_point: Option<f64>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Check an action against a granted license.
    LicenseCheck {
        /// Path to a license JSON file.
        #[arg(long)]
        license: PathBuf,
        /// Intended purpose, e.g. product_optimization or resale.
        #[arg(long)]
        purpose: String,
        #[arg(long)]
        tick: u64,
        /// Acting member id; defaults to the license's buyer.
        #[arg(long)]
        actor: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run a scenario and write ledger.jsonl, metrics.json, and
    /// trajectories.csv into --out.
    Simulate {
        /// Path to a scenario config JSON file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute a scenario report from an exported ledger.
    Report {
        /// Path to a ledger.jsonl file.
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

enum CliError {
    Domain(pdm_core::Error),
    File { path: PathBuf, message: String },
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Domain(e) => write!(f, "{}: {e}", e.name()),
            CliError::File { path, message } => write!(f, "{}: {message}", path.display()),
        }
    }
}

impl From<pdm_core::Error> for CliError {
    fn from(e: pdm_core::Error) -> Self {
        CliError::Domain(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(output) => {
            print!("{output}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<String, CliError> {
    match command {
        Command::AssessRisk {
            distortion,
            revelation,
            intrusion,
            format,
        } => {
            let risk = assess_risk(HarmImpactVector::new(distortion, revelation, intrusion)?)?;
            Ok(match format {
                Format::Json => to_json(&risk),
                Format::Text => format!(
                    "raw score:  {} / 30\nnormalized: {:.4}\nband:       {:?}\n",
                    risk.raw_score, risk.normalized, risk.band
                ),
            })
        }
        Command::Price {
            distortion,
            revelation,
            intrusion,
            quantity,
            noise,
            lifespan_ticks,
            perpetual,
            exclusive,
            resale,
            extraction,
            demand,
            base_unit_value,
            ask_per_point,
            format,
        } => {
            let risk = assess_risk(HarmImpactVector::new(distortion, revelation, intrusion)?)?;
            let lifespan = if perpetual {
                Lifespan::Perpetual
            } else {
                Lifespan::Ticks(lifespan_ticks.unwrap_or(365))
            };
            let template = LicenseTemplate::new(
                exclusive,
                lifespan,
                [Purpose::ProductOptimization],
                resale,
                extraction,
            );
            let params = PricingParams::default();
            let quote = recommend_price(
                base_unit_value,
                quantity,
                &risk,
                noise,
                &template,
                demand,
                &params,
            )?;
            let enforced = ask_per_point
                .map(|ask| enforced_listing_price(ask, noise, &params))
                .transpose()?;
            Ok(match format {
                Format::Json => {
                    let mut value = serde_json::json!({
                        "quote": quote,
                        "recommended_per_point": quote.recommended / quantity as f64,
                    });
                    if let Some(price) = enforced {
                        value["enforced_price_per_point"] = serde_json::json!(price);
                        value["enforced_price_total"] =
                            serde_json::json!(price * quantity as f64);
                    }
                    pretty(&value)
                }
                Format::Text => {
                    let f = quote.factors;
                    let mut out = format!(
                        "risk premium:     {:.6}\nnoise discount:   {:.6}\n\
                         exclusivity:      {:.6}\nresale uplift:    {:.6}\n\
                         lifespan factor:  {:.6}\ndemand index:     {:.6}\n\
                         recommended:      {:.6}\nper point:        {:.6}\n",
                        f.risk_premium,
                        f.noise_discount,
                        f.exclusivity,
                        f.resale,
                        f.lifespan,
                        f.demand,
                        quote.recommended,
                        quote.recommended / quantity as f64,
                    );
                    if let Some(price) = enforced {
                        out.push_str(&format!(
                            "enforced/point:   {:.6}\nenforced total:   {:.6}\n",
                            price,
                            price * quantity as f64
                        ));
                    }
                    out
                }
            })
        }
        Command::LicenseCheck {
            license,
            purpose,
            tick,
            actor,
            format,
        } => {
            let text = read_file(&license)?;
            let parsed: License = parse_json(&license, &text)?;
            let purpose = parse_purpose(&purpose)?;
            let actor = actor.map_or_else(|| parsed.buyer.clone(), MemberId::new);
            let verdict = check_action(
                &parsed,
                &Action {
                    actor,
                    purpose,
                    tick,
                },
            )?;
            Ok(match format {
                Format::Json => to_json(&verdict),
                Format::Text => match verdict {
                    ComplianceVerdict::Compliant => "compliant\n".to_string(),
                    ComplianceVerdict::Violation(kind) => format!("violation: {kind:?}\n"),
                },
            })
        }
        Command::Simulate { config, out, seed } => {
            let text = read_file(&config)?;
            let mut scenario: ScenarioConfig = parse_json(&config, &text)?;
            if let Some(seed) = seed {
                scenario.seed = seed;
            }
            let (log, metrics) = run_scenario(&scenario)?;

            fs::create_dir_all(&out).map_err(|e| file_error(&out, e))?;
            let ledger_path = out.join("ledger.jsonl");
            let metrics_path = out.join("metrics.json");
            let csv_path = out.join("trajectories.csv");
            fs::write(&ledger_path, log.export_jsonl()).map_err(|e| file_error(&ledger_path, e))?;
            fs::write(&metrics_path, render_metrics_json(&metrics))
                .map_err(|e| file_error(&metrics_path, e))?;
            fs::write(&csv_path, render_trajectories_csv(&metrics))
                .map_err(|e| file_error(&csv_path, e))?;

            Ok(format!(
                "simulated {} ticks: {} events, {} settled\nledger hash: {}\nwrote {}, {}, {}\n",
                scenario.ticks,
                log.len(),
                metrics.settled_count,
                metrics.event_log_hash,
                ledger_path.display(),
                metrics_path.display(),
                csv_path.display(),
            ))
        }
        Command::Report { ledger, format } => {
            let text = read_file(&ledger)?;
            let log = EventLog::parse_jsonl(&text)?;
            let metrics = metrics_from_ledger(&log)?;
            Ok(match format {
                Format::Json => render_metrics_json(&metrics),
                Format::Text => render_metrics_text(&metrics),
            })
        }
    }
}

fn read_file(path: &PathBuf) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| file_error(path, e))
}

fn file_error(path: &PathBuf, e: std::io::Error) -> CliError {
    CliError::File {
        path: path.clone(),
        message: e.to_string(),
    }
}

/// Parses JSON with the field path included in failures, so a config typo
/// reports as `agents[2].count: invalid type` rather than a line number.
fn parse_json<T: serde::de::DeserializeOwned>(
    path: &PathBuf,
    text: &str,
) -> Result<T, CliError> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| CliError::File {
        path: path.clone(),
        message: format!("{}: {}", e.path(), e.inner()),
    })
}

fn parse_purpose(s: &str) -> Result<Purpose, CliError> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
        let names: Vec<String> = Purpose::ALL
            .iter()
            .map(|p| {
                serde_json::to_value(p)
                    .expect("purpose serializes")
                    .as_str()
                    .expect("purpose is a string")
                    .to_string()
            })
            .collect();
        CliError::Domain(pdm_core::Error::ConfigError {
            path: "purpose".to_string(),
            message: format!("unknown purpose {s:?}; one of: {}", names.join(", ")),
        })
    })
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    pretty(&serde_json::to_value(value).expect("serializable"))
}

fn pretty(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// The canonical metrics.json rendering; `report --format json` must byte-
/// match what `simulate` wrote.
fn render_metrics_json(metrics: &ScenarioMetrics) -> String {
    let mut s = serde_json::to_string_pretty(metrics).expect("metrics serialize");
    s.push('\n');
    s
}

fn render_trajectories_csv(metrics: &ScenarioMetrics) -> String {
    let mut out = String::from("member,tick,score\n");
    for (member, points) in &metrics.reputation_trajectories {
        for p in points {
            out.push_str(&format!("{member},{},{}\n", p.tick, p.score));
        }
    }
    out
}

fn render_metrics_text(m: &ScenarioMetrics) -> String {
    let mut out = String::new();
    out.push_str(&format!("settled:               {}\n", m.settled_count));
    if m.aborted_by_reason.is_empty() {
        out.push_str("aborted:               none\n");
    } else {
        let parts: Vec<String> = m
            .aborted_by_reason
            .iter()
            .map(|(reason, n)| format!("{reason} x{n}"))
            .collect();
        out.push_str(&format!("aborted:               {}\n", parts.join(", ")));
    }
    for (band, mean) in &m.mean_unit_price_by_noise_band {
        out.push_str(&format!("mean price {band}: {mean:.6}\n"));
    }
    if let Some(v) = m.honest_cost_per_point {
        out.push_str(&format!("honest cost/point:     {v:.6}\n"));
    }
    if let Some(v) = m.adversary_cost_per_point {
        out.push_str(&format!("adversary cost/point:  {v:.6}\n"));
    }
    match m.junk_expulsion_tick {
        Some(t) => out.push_str(&format!("junk seller expelled:  tick {t}\n")),
        None => out.push_str("junk seller expelled:  never\n"),
    }
    match m.farmer_suspension_tick {
        Some(t) => out.push_str(&format!("farmer suspended:      tick {t}\n")),
        None => out.push_str("farmer suspended:      never\n"),
    }
    out.push_str(&format!(
        "members tracked:       {}\n",
        m.reputation_trajectories.len()
    ));
    out.push_str(&format!("ledger hash:           {}\n", m.event_log_hash));
    out
}
