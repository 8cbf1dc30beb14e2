use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use parley::config::Settings;
use parley::domain::{RoomId, SystemClock};
use parley::persistence::{self, FileStore};
use parley::study::analysis::{analyze, write_construct_csv, AnalysisOptions};
use parley::study::assignment::assign_couples;
use parley::study::questionnaire::{read_responses_csv, Construct};
use parley::study::topics::{score_ratings_csv, select_balanced_topics, Band, TopicScore};
use parley::study::Condition;

#[derive(Parser)]
#[command(
    name = "parley",
    version,
    about = "Mediated two-party chat server and study tooling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the chat server.
    Serve(Settings),
    /// Write every record of a room as JSON lines.
    ExportRoom {
        #[arg(long, env = "PARLEY_DATA_DIR")]
        data_dir: PathBuf,
        room: String,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Hard-delete a room, leaving only a tombstone.
    PurgeRoom {
        #[arg(long, env = "PARLEY_DATA_DIR")]
        data_dir: PathBuf,
        room: String,
    },
    /// Load records written by export-room.
    ImportRoom {
        #[arg(long, env = "PARLEY_DATA_DIR")]
        data_dir: PathBuf,
        file: PathBuf,
    },
    /// Score partner topic ratings and pick balanced topics per couple.
    ScoreTopics {
        ratings: PathBuf,
        #[arg(long, default_value_t = 8.0)]
        band_lo: f64,
        #[arg(long, default_value_t = 16.0)]
        band_hi: f64,
    },
    /// Counterbalanced condition orderings for N couples.
    Assign {
        #[arg(long)]
        couples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Topic ratings CSV with couple_id values c1..cN to attach topics.
        #[arg(long)]
        ratings: Option<PathBuf>,
    },
    /// Reliability, medians and nonparametric tests over a questionnaire CSV.
    Analyze {
        responses: PathBuf,
        /// `all` or a comma list such as C1,C3.
        #[arg(long, default_value = "all")]
        construct: String,
        /// Comma list of friedman, wilcoxon.
        #[arg(long, default_value = "friedman,wilcoxon")]
        tests: String,
        #[arg(long, default_value_t = 6)]
        bonferroni: usize,
        /// Also write per-respondent construct scores here.
        #[arg(long)]
        scores_csv: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(io::stderr)
        .init();
    match Cli::parse().command {
        Command::Serve(settings) => serve(settings).await,
        Command::ExportRoom {
            data_dir,
            room,
            out,
        } => {
            let store = FileStore::open(&data_dir)?;
            let room = RoomId::parse(&room)?;
            let mut sink: Box<dyn Write> = match out {
                Some(p) => {
                    Box::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?)
                }
                None => Box::new(io::stdout().lock()),
            };
            let n = persistence::export_room(&store, &room, &mut sink)?;
            eprintln!("exported {n} records");
            Ok(())
        }
        Command::PurgeRoom { data_dir, room } => {
            let store = FileStore::open(&data_dir)?;
            let n = persistence::purge_room(&store, &RoomId::parse(&room)?, chrono::Utc::now())?;
            eprintln!("purged {n} records");
            Ok(())
        }
        Command::ImportRoom { data_dir, file } => {
            let store = FileStore::open(&data_dir)?;
            let mut input = BufReader::new(
                File::open(&file).with_context(|| format!("opening {}", file.display()))?,
            );
            let n = persistence::import_records(&store, &mut input)?;
            eprintln!("imported {n} records");
            Ok(())
        }
        Command::ScoreTopics {
            ratings,
            band_lo,
            band_hi,
        } => score_topics(
            ratings,
            Band {
                lo: band_lo,
                hi: band_hi,
            },
        ),
        Command::Assign {
            couples,
            seed,
            ratings,
        } => assign(couples, seed, ratings),
        Command::Analyze {
            responses,
            construct,
            tests,
            bonferroni,
            scores_csv,
            json,
        } => {
            let opts = analysis_options(&construct, &tests, bonferroni)?;
            let data = read_responses_csv(
                File::open(&responses)
                    .with_context(|| format!("opening {}", responses.display()))?,
            )?;
            let report = analyze(&data, &opts)?;
            if let Some(p) = scores_csv {
                write_construct_csv(&data, File::create(&p)?)?;
            }
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.render_text());
            }
            Ok(())
        }
    }
}

async fn serve(settings: Settings) -> Result<()> {
    let store = settings.store()?;
    if let Some(days) = settings.retention_days {
        let purged = persistence::purge_expired(&*store, days, chrono::Utc::now())?;
        if !purged.is_empty() {
            tracing::info!(rooms = purged.len(), "retention purge");
        }
    }
    let gateway = parley::assemble(store, settings.classifier()?, Arc::new(SystemClock));
    let listener = tokio::net::TcpListener::bind(settings.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, backend = ?settings.backend, "listening");
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    parley::transport::serve(listener, gateway, settings.liveness(), shutdown).await?;
    Ok(())
}

fn score_topics(path: PathBuf, band: Band) -> Result<()> {
    let scores = score_ratings_csv(
        File::open(&path).with_context(|| format!("opening {}", path.display()))?,
    )?;
    println!("couple_id,topic_id,final_score,in_band");
    for s in &scores {
        println!(
            "{},{},{:.2},{}",
            s.couple_id,
            s.topic_id,
            s.final_score,
            band.contains(s.final_score)
        );
    }
    let mut couples: Vec<&str> = scores.iter().map(|s| s.couple_id.as_str()).collect();
    couples.dedup();
    for couple in couples {
        let own: Vec<TopicScore> = scores
            .iter()
            .filter(|s| s.couple_id == couple)
            .map(|s| TopicScore {
                topic_id: s.topic_id.clone(),
                final_score: s.final_score,
            })
            .collect();
        match select_balanced_topics(&own, &Condition::ALL, band) {
            Ok(a) => {
                let picks: Vec<String> = a
                    .picks
                    .iter()
                    .map(|p| format!("{}={}", p.condition, p.topic_id))
                    .collect();
                eprintln!(
                    "# {couple}: {} (max diff {:.2})",
                    picks.join(" "),
                    a.max_pairwise_diff
                );
            }
            Err(e) => eprintln!("# {couple}: {e}"),
        }
    }
    Ok(())
}

fn assign(n: usize, seed: u64, ratings: Option<PathBuf>) -> Result<()> {
    if n == 0 {
        bail!("--couples must be at least 1");
    }
    let scores = match ratings {
        Some(p) => {
            score_ratings_csv(File::open(&p).with_context(|| format!("opening {}", p.display()))?)?
        }
        None => Vec::new(),
    };
    let couples: Vec<(String, Option<Vec<TopicScore>>)> = (1..=n)
        .map(|i| {
            let id = format!("c{i}");
            let own: Vec<TopicScore> = scores
                .iter()
                .filter(|s| s.couple_id == id)
                .map(|s| TopicScore {
                    topic_id: s.topic_id.clone(),
                    final_score: s.final_score,
                })
                .collect();
            let own = (!own.is_empty()).then_some(own);
            (id, own)
        })
        .collect();
    let out = assign_couples(&couples, seed, Band::default())?;
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn analysis_options(construct: &str, tests: &str, bonferroni: usize) -> Result<AnalysisOptions> {
    let constructs = if construct.trim().eq_ignore_ascii_case("all") {
        Construct::ALL.to_vec()
    } else {
        construct
            .split(',')
            .map(|c| c.trim().parse::<Construct>())
            .collect::<Result<_, _>>()?
    };
    let mut opts = AnalysisOptions {
        constructs,
        friedman: false,
        wilcoxon: false,
        bonferroni_m: bonferroni,
    };
    for t in tests.split(',').map(str::trim) {
        match t {
            "friedman" => opts.friedman = true,
            "wilcoxon" => opts.wilcoxon = true,
            other => bail!("unknown test {other:?}; expected friedman or wilcoxon"),
        }
    }
    Ok(opts)
}
