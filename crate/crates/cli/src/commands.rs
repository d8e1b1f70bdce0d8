//! Implementations of the `marsim` subcommands.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use marsim::metrics::{
    earth_pages, earth_row, render_gain_curve, render_hit_ratios, render_per_session,
    render_scatter, render_summary, HitRatioRow, RatioReport, SummaryRow, TableFormat,
};
use marsim::retrieval::quality::quality_training_split;
use marsim::retrieval::{
    cache_hit_ratios, derived_qrels, generate_corpus, make_query_pool, read_corpus_jsonl,
    read_qrels, read_topics_jsonl, select_cache, train_quality, write_corpus_jsonl, write_qrels,
    write_topics_jsonl, Corpus, CorpusGenConfig, Document, Index, QualityScores,
    QualityTrainParams,
};
use marsim::sessionlog::{
    from_canonical_json, synthesize_log, to_canonical_json, LogSynthConfig, TopicQueries,
};
use marsim::simkernel::LinkConfig;
use marsim::strategies::{
    replay_baseline, replay_serp_prefetch, replay_static_cache, suggestion_matches,
    topical_prefetch_hits, FileSuggestions, SessionOutcome,
};
use marsim::totalrecall::{
    run_scenario, GainCurve, PreparedCorpus, RecallError, RecallScenario, ScenarioKind, StopRule,
};

use crate::output::Manifest;
use crate::{
    usage, CacheEvalArgs, Command, Format, GenCorpusArgs, GenLogArgs, Policy, RecallSimArgs,
    ReportArgs, Scenario, SessionsSimArgs, SuggestEvalArgs,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::GenCorpus(args) => gen_corpus(args),
        Command::GenLog(args) => gen_log(args),
        Command::SessionsSim(args) => sessions_sim(args),
        Command::RecallSim(args) => recall_sim(args),
        Command::CacheEval(args) => cache_eval(args),
        Command::SuggestEval(args) => suggest_eval(args),
        Command::Report(args) => report(args),
    }
}

// ---------------------------------------------------------------- helpers

fn check_fraction(value: f64, flag: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(usage(format!("{flag} must lie in [0, 1], got {value}")));
    }
    Ok(())
}

fn check_positive(value: usize, flag: &str) -> Result<()> {
    if value == 0 {
        return Err(usage(format!("{flag} must be at least 1")));
    }
    Ok(())
}

fn link_from_rtt(rtt_min: f64) -> Result<LinkConfig> {
    if !rtt_min.is_finite() || rtt_min < 0.0 {
        return Err(usage(format!("--rtt-min must be a non-negative number, got {rtt_min}")));
    }
    Ok(LinkConfig::from_rtt_minutes(rtt_min))
}

fn load_corpus_docs(manifest: &mut Manifest, path: &Path) -> Result<Vec<Document>> {
    let text = manifest.read_input(path)?;
    read_corpus_jsonl(&text).with_context(|| format!("parsing corpus {}", path.display()))
}

/// Reads a docid-per-line file; blank lines and `#` comments are skipped.
fn read_docid_lines(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

fn table_format(format: Format) -> TableFormat {
    match format {
        Format::Csv => TableFormat::Csv,
        Format::Tsv => TableFormat::Tsv,
    }
}

fn table_ext(format: Format) -> &'static str {
    match format {
        Format::Csv => "csv",
        Format::Tsv => "tsv",
    }
}

/// Keeps only filename-safe characters of a label.
fn sanitize(label: &str) -> String {
    let out: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '-' })
        .collect();
    if out.is_empty() {
        "run".to_string()
    } else {
        out
    }
}

fn fmt_opt6(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.6}")).unwrap_or_default()
}

// ------------------------------------------------------------- gen-corpus

fn gen_corpus(args: GenCorpusArgs) -> Result<()> {
    check_positive(args.docs, "--docs")?;
    check_positive(args.topics, "--topics")?;
    check_positive(args.words_per_doc, "--words-per-doc")?;
    check_positive(args.queries_per_topic, "--queries-per-topic")?;
    check_fraction(args.prevalence, "--prevalence")?;
    check_fraction(args.spam_fraction, "--spam-fraction")?;

    let config = CorpusGenConfig {
        n_docs: args.docs,
        n_topics: args.topics,
        prevalence: args.prevalence,
        spam_fraction: args.spam_fraction,
        words_per_doc: args.words_per_doc,
        seed: args.seed,
    };
    let corpus = generate_corpus(&config);
    let pool = make_query_pool(&corpus, args.queries_per_topic, args.seed);
    let qrels = derived_qrels(&corpus);

    let mut manifest = Manifest::new("gen-corpus", &args, Some(args.seed), &args.out)?;
    manifest.write_output("corpus.jsonl", &write_corpus_jsonl(&corpus.docs))?;
    manifest.write_output("topics.jsonl", &write_topics_jsonl(&corpus.topics))?;
    manifest.write_output("qrels.txt", &write_qrels(&qrels))?;
    let mut queries = serde_json::to_string_pretty(&pool).context("serializing query pool")?;
    queries.push('\n');
    manifest.write_output("queries.json", &queries)?;
    manifest.finish()
}

// ---------------------------------------------------------------- gen-log

fn gen_log(args: GenLogArgs) -> Result<()> {
    check_positive(args.sessions, "--sessions")?;
    let queries_path =
        args.queries.clone().unwrap_or_else(|| args.corpus.with_file_name("queries.json"));

    let mut manifest = Manifest::new("gen-log", &args, Some(args.seed), &args.out)?;
    let docs = load_corpus_docs(&mut manifest, &args.corpus)?;
    let pool: Vec<TopicQueries> = serde_json::from_str(&manifest.read_input(&queries_path)?)
        .with_context(|| format!("parsing query pool {}", queries_path.display()))?;

    let index = Index::build(&docs)?;
    let corpus = Corpus { docs, topics: Vec::new() };
    let config = LogSynthConfig {
        n_sessions: args.sessions,
        seed: args.seed,
        ..LogSynthConfig::default()
    };
    let log = synthesize_log(&corpus, &index, &pool, &config)?;

    manifest.write_output("log.json", &to_canonical_json(&log))?;
    manifest.finish()
}

// ------------------------------------------------------------ sessions-sim

/// One session's replay outcome plus the Earth-side page count, the pair
/// every downstream ratio needs. `outcomes.json` is a list of these.
#[derive(Serialize, Deserialize)]
struct OutcomeRecord {
    earth_pages: u64,
    #[serde(flatten)]
    outcome: SessionOutcome,
}

/// Self-describing outcome file: which policy and link produced the records.
#[derive(Serialize, Deserialize)]
struct OutcomesFile {
    policy: String,
    rtt_min: f64,
    records: Vec<OutcomeRecord>,
}

fn forbid(flag_value: bool, flag: &str, policy: Policy) -> Result<()> {
    if flag_value {
        return Err(usage(format!("{flag} does not apply to --policy {}", policy.name())));
    }
    Ok(())
}

fn sessions_sim(args: SessionsSimArgs) -> Result<()> {
    let link = link_from_rtt(args.rtt_min)?;
    let policy = args.policy;

    // Conditional flags: each is required by exactly one policy.
    match policy {
        Policy::Baseline | Policy::Serp => {
            forbid(args.k.is_some(), "--k", policy)?;
            forbid(args.cache_fraction.is_some(), "--cache-fraction", policy)?;
            forbid(args.cache_file.is_some(), "--cache-file", policy)?;
            forbid(args.corpus.is_some(), "--corpus", policy)?;
            forbid(args.suggestions.is_some(), "--suggestions", policy)?;
        }
        Policy::Topical => {
            if args.k.is_none() {
                return Err(usage("--k is required with --policy topical"));
            }
            if args.corpus.is_none() {
                return Err(usage("--corpus is required with --policy topical"));
            }
            forbid(args.cache_fraction.is_some(), "--cache-fraction", policy)?;
            forbid(args.cache_file.is_some(), "--cache-file", policy)?;
            forbid(args.suggestions.is_some(), "--suggestions", policy)?;
        }
        Policy::Suggest => {
            if args.suggestions.is_none() {
                return Err(usage("--suggestions is required with --policy suggest"));
            }
            forbid(args.k.is_some(), "--k", policy)?;
            forbid(args.cache_fraction.is_some(), "--cache-fraction", policy)?;
            forbid(args.cache_file.is_some(), "--cache-file", policy)?;
            forbid(args.corpus.is_some(), "--corpus", policy)?;
        }
        Policy::Cache => {
            forbid(args.k.is_some(), "--k", policy)?;
            forbid(args.suggestions.is_some(), "--suggestions", policy)?;
            match (&args.cache_fraction, &args.cache_file) {
                (Some(_), Some(_)) => {
                    return Err(usage("--cache-fraction conflicts with --cache-file"));
                }
                (None, None) => {
                    return Err(usage(
                        "--policy cache needs --cache-fraction (with --corpus) or --cache-file",
                    ));
                }
                (Some(f), None) => {
                    check_fraction(*f, "--cache-fraction")?;
                    if args.corpus.is_none() {
                        return Err(usage("--corpus is required with --cache-fraction"));
                    }
                }
                (None, Some(_)) => {
                    forbid(args.corpus.is_some(), "--corpus", policy)?;
                }
            }
        }
    }
    if let Some(k) = args.k {
        check_positive(k, "--k")?;
    }

    let mut manifest = Manifest::new("sessions-sim", &args, Some(args.seed), &args.out)?;
    let log = from_canonical_json(&manifest.read_input(&args.log)?)
        .with_context(|| format!("parsing session log {}", args.log.display()))?;

    match policy {
        Policy::Topical => {
            let docs = load_corpus_docs(&mut manifest, args.corpus.as_ref().unwrap())?;
            let index = Index::build(&docs)?;
            let k = args.k.unwrap();
            let hits = topical_prefetch_hits(&log, &index, k);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["k", "hits", "candidates", "ratio", "unknown_docids"])?;
            w.write_record([
                k.to_string(),
                hits.hits.to_string(),
                hits.candidates.to_string(),
                fmt_opt6(hits.ratio()),
                hits.unknown_docids.len().to_string(),
            ])?;
            let table = String::from_utf8(w.into_inner()?)?;
            manifest.write_output("topical.csv", &table)?;
        }
        Policy::Suggest => {
            let path = args.suggestions.as_ref().unwrap();
            let table = suggestion_table(&mut manifest, &log, path)?;
            manifest.write_output("suggest.csv", &table)?;
        }
        Policy::Baseline | Policy::Serp | Policy::Cache => {
            let cache = match policy {
                Policy::Cache => Some(resolve_cache(&mut manifest, &args)?),
                _ => None,
            };
            let records: Vec<OutcomeRecord> = log
                .sessions
                .iter()
                .map(|s| OutcomeRecord {
                    earth_pages: earth_pages(s),
                    outcome: match (&policy, &cache) {
                        (Policy::Baseline, _) => replay_baseline(s, &link),
                        (Policy::Serp, _) => replay_serp_prefetch(s, &link),
                        (Policy::Cache, Some(set)) => replay_static_cache(s, set, &link),
                        _ => unreachable!("cache set resolved above"),
                    },
                })
                .collect();
            write_outcomes(&mut manifest, policy.name(), args.rtt_min, records)?;
        }
    }
    manifest.finish()
}

/// Builds the static cache set: either the docids listed in a file, or
/// the top fraction of the corpus by trained quality score.
fn resolve_cache(manifest: &mut Manifest, args: &SessionsSimArgs) -> Result<BTreeSet<String>> {
    if let Some(path) = &args.cache_file {
        let cache = read_docid_lines(&manifest.read_input(path)?);
        if cache.is_empty() {
            bail!("cache file {} lists no docids", path.display());
        }
        return Ok(cache);
    }
    let fraction = args.cache_fraction.expect("checked by flag validation");
    let docs = load_corpus_docs(manifest, args.corpus.as_ref().expect("checked"))?;
    let model = train_quality_model(&docs, args.seed)?;
    Ok(select_cache(&model, &docs, fraction))
}

fn train_quality_model(
    docs: &[Document],
    seed: u64,
) -> Result<marsim::retrieval::QualityModel> {
    let (positives, negatives) = quality_training_split(docs, 3000, seed);
    let params = QualityTrainParams { seed, ..QualityTrainParams::default() };
    Ok(train_quality(positives.iter().copied(), negatives.iter().copied(), &params)?)
}

/// Writes outcomes.csv, outcomes.json, and summary.csv for a replay run.
fn write_outcomes(
    manifest: &mut Manifest,
    policy_name: &str,
    rtt_min: f64,
    records: Vec<OutcomeRecord>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "session_id",
        "earth_time_s",
        "mars_time_s",
        "wait_time_s",
        "blocking_waits",
        "pages_transferred",
    ])?;
    for r in &records {
        let o = &r.outcome;
        w.write_record([
            o.session_id.clone(),
            format!("{:.3}", o.earth_time_s),
            format!("{:.3}", o.mars_time_s),
            format!("{:.3}", o.wait_time_s),
            o.blocking_waits.to_string(),
            o.pages_transferred.to_string(),
        ])?;
    }
    let table = String::from_utf8(w.into_inner()?)?;
    manifest.write_output("outcomes.csv", &table)?;

    let file = OutcomesFile { policy: policy_name.to_string(), rtt_min, records };
    let mut json = serde_json::to_string_pretty(&file).context("serializing outcomes")?;
    json.push('\n');
    manifest.write_output("outcomes.json", &json)?;

    let earth =
        earth_row(file.records.iter().map(|r| (r.earth_pages, r.outcome.earth_time_s)));
    let ratios = RatioReport::from_pairs(file.records.iter().map(|r| (r.earth_pages, &r.outcome)));
    let mars = SummaryRow::from_report(&format!("Mars {policy_name}"), file.rtt_min, &ratios);
    let summary = render_summary(&[earth, mars], TableFormat::Csv);
    manifest.write_output("summary.csv", &summary)?;
    Ok(())
}

fn suggestion_table(
    manifest: &mut Manifest,
    log: &marsim::sessionlog::SessionLog,
    suggestions: &Path,
) -> Result<String> {
    let provider = FileSuggestions::from_json_str(&manifest.read_input(suggestions)?)
        .with_context(|| format!("parsing suggestions {}", suggestions.display()))?;
    let matches = suggestion_matches(log, &provider);
    let ratio = if matches.total_later_queries == 0 {
        None
    } else {
        Some(matches.matched_later_queries as f64 / matches.total_later_queries as f64)
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["matched_later_queries", "total_later_queries", "ratio"])?;
    w.write_record([
        matches.matched_later_queries.to_string(),
        matches.total_later_queries.to_string(),
        fmt_opt6(ratio),
    ])?;
    Ok(String::from_utf8(w.into_inner()?)?)
}

// -------------------------------------------------------------- recall-sim

fn recall_sim(args: RecallSimArgs) -> Result<()> {
    let link = link_from_rtt(args.rtt_min)?;
    let kind = match args.scenario {
        Scenario::Earth => ScenarioKind::EarthTar,
        Scenario::EarthLat => ScenarioKind::EarthTarLatency,
        Scenario::MarsNocache => ScenarioKind::MarsTarNoCache,
        Scenario::MarsCache => ScenarioKind::MarsTarWithCache,
    };
    let wants_cache = kind == ScenarioKind::MarsTarWithCache;
    if wants_cache {
        if args.cache_seed.is_some() && args.cache_first.is_some() {
            return Err(usage("--cache-seed conflicts with --cache-first"));
        }
        if args.cache_seed.is_none() && args.cache_first.is_none() {
            return Err(usage(
                "--scenario mars-cache needs --cache-seed FILE or --cache-first N",
            ));
        }
    } else {
        if args.cache_seed.is_some() {
            return Err(usage("--cache-seed only applies to --scenario mars-cache"));
        }
        if args.cache_first.is_some() {
            return Err(usage("--cache-first only applies to --scenario mars-cache"));
        }
    }
    if let Some(budget) = args.budget_s {
        if !budget.is_finite() || budget < 0.0 {
            return Err(usage(format!(
                "--budget-s must be a non-negative number, got {budget}"
            )));
        }
    }
    if let Some(target) = args.recall_target {
        check_fraction(target, "--recall-target")?;
    }

    let topics_path =
        args.topics.clone().unwrap_or_else(|| args.corpus.with_file_name("topics.jsonl"));

    let mut manifest = Manifest::new("recall-sim", &args, Some(args.seed), &args.out)?;
    let docs = load_corpus_docs(&mut manifest, &args.corpus)?;
    let topics = read_topics_jsonl(&manifest.read_input(&topics_path)?)
        .with_context(|| format!("parsing topics {}", topics_path.display()))?;
    let qrels = read_qrels(&manifest.read_input(&args.qrels)?)
        .with_context(|| format!("parsing qrels {}", args.qrels.display()))?;
    if topics.is_empty() {
        bail!("no topics in {}", topics_path.display());
    }

    let cache_seed: Option<BTreeSet<String>> = if wants_cache {
        Some(if let Some(path) = &args.cache_seed {
            let ids = read_docid_lines(&manifest.read_input(path)?);
            if ids.is_empty() {
                bail!("cache seed file {} lists no docids", path.display());
            }
            ids
        } else {
            let n = args.cache_first.unwrap();
            if n == 0 || n > docs.len() {
                return Err(usage(format!(
                    "--cache-first must lie in [1, {}] for this corpus, got {n}",
                    docs.len()
                )));
            }
            docs.iter().take(n).map(|d| d.docid.clone()).collect()
        })
    } else {
        None
    };

    let corpus = Corpus { docs, topics };
    let prepared = PreparedCorpus::from_corpus(&corpus);
    let scenario = RecallScenario {
        kind,
        link,
        cache_seed,
        seed: args.seed,
        cal: Default::default(),
        watermark: args.watermark,
    };
    let stop = StopRule { time_budget_s: args.budget_s, recall_target: args.recall_target };

    let mut curves: Vec<(String, GainCurve)> = Vec::new();
    for topic in &corpus.topics {
        match run_scenario(&prepared, topic, &qrels, &scenario, stop) {
            Ok(curve) => curves.push((topic.topic.clone(), curve)),
            Err(err @ (RecallError::UnknownTopic(_) | RecallError::NoRelevantDocs(_))) => {
                eprintln!("warning: skipping topic {:?}: {err}", topic.topic);
            }
            Err(err) => return Err(err.into()),
        }
    }
    if curves.is_empty() {
        bail!("no topic produced a gain curve");
    }

    for (topic, curve) in &curves {
        let name = format!("gain-{}.csv", sanitize(topic));
        manifest.write_output(&name, &render_gain_curve(curve, TableFormat::Csv))?;
    }
    manifest.write_output("aggregate.csv", &aggregate_table(&curves)?)?;
    manifest.finish()
}

/// Per-topic campaign summary plus a cross-topic mean row. The
/// time-to-80%-recall column is empty for topics that never got there,
/// and its mean averages only the topics that did.
fn aggregate_table(curves: &[(String, GainCurve)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "topic",
        "relevant_total",
        "judged",
        "docs_shipped",
        "transmitted",
        "final_recall",
        "time_to_recall80_s",
    ])?;
    for (topic, curve) in curves {
        w.write_record([
            topic.clone(),
            curve.relevant_total.to_string(),
            curve.judged.to_string(),
            curve.docs_shipped.to_string(),
            curve.transmitted.to_string(),
            format!("{:.6}", curve.final_recall()),
            curve.time_to_recall(0.8).map(|t| format!("{t:.3}")).unwrap_or_default(),
        ])?;
    }
    let n = curves.len() as f64;
    let mean = |f: &dyn Fn(&GainCurve) -> f64| -> f64 {
        curves.iter().map(|(_, c)| f(c)).sum::<f64>() / n
    };
    let t80: Vec<f64> = curves.iter().filter_map(|(_, c)| c.time_to_recall(0.8)).collect();
    w.write_record([
        "mean".to_string(),
        format!("{:.3}", mean(&|c| c.relevant_total as f64)),
        format!("{:.3}", mean(&|c| c.judged as f64)),
        format!("{:.3}", mean(&|c| c.docs_shipped as f64)),
        format!("{:.3}", mean(&|c| c.transmitted as f64)),
        format!("{:.6}", mean(&|c| c.final_recall())),
        if t80.is_empty() {
            String::new()
        } else {
            format!("{:.3}", t80.iter().sum::<f64>() / t80.len() as f64)
        },
    ])?;
    Ok(String::from_utf8(w.into_inner()?)?)
}

// -------------------------------------------------------------- cache-eval

fn cache_eval(args: CacheEvalArgs) -> Result<()> {
    let mut fractions = Vec::new();
    for part in args.fractions.split(',') {
        let part = part.trim();
        let value: f64 = part
            .parse()
            .map_err(|_| usage(format!("--fractions has a non-numeric entry {part:?}")))?;
        if !(value > 0.0 && value <= 1.0) {
            return Err(usage(format!("--fractions entries must lie in (0, 1], got {value}")));
        }
        fractions.push(value);
    }
    if fractions.is_empty() {
        return Err(usage("--fractions lists no values"));
    }

    let mut manifest = Manifest::new("cache-eval", &args, Some(args.seed), &args.out)?;
    let log = from_canonical_json(&manifest.read_input(&args.log)?)
        .with_context(|| format!("parsing session log {}", args.log.display()))?;
    let docs = load_corpus_docs(&mut manifest, &args.corpus)?;
    let model = train_quality_model(&docs, args.seed)?;
    let scores = QualityScores::compute(&model, &docs);

    let rows: Vec<HitRatioRow> = fractions
        .iter()
        .map(|&fraction| {
            let ratios = cache_hit_ratios(&log, &scores.select(fraction));
            HitRatioRow {
                fraction,
                clicked_ratio: ratios.clicked_ratio(),
                serp_ratio: ratios.serp_ratio(),
            }
        })
        .collect();
    manifest.write_output("hit_ratios.csv", &render_hit_ratios(&rows, TableFormat::Csv))?;
    manifest.finish()
}

// ------------------------------------------------------------ suggest-eval

fn suggest_eval(args: SuggestEvalArgs) -> Result<()> {
    let mut manifest = Manifest::new("suggest-eval", &args, None, &args.out)?;
    let log = from_canonical_json(&manifest.read_input(&args.log)?)
        .with_context(|| format!("parsing session log {}", args.log.display()))?;
    let table = suggestion_table(&mut manifest, &log, &args.suggestions)?;
    manifest.write_output("suggest.csv", &table)?;
    manifest.finish()
}

// ------------------------------------------------------------------ report

fn report(args: ReportArgs) -> Result<()> {
    let out = args.out.clone().unwrap_or_else(|| args.input.join("report"));
    let format = table_format(args.format);
    let ext = table_ext(args.format);

    // An outcomes.json directly in --in, then one in each direct
    // subdirectory, in name order.
    let mut found: Vec<(String, PathBuf)> = Vec::new();
    let direct = args.input.join("outcomes.json");
    if direct.is_file() {
        found.push((String::new(), direct));
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for dir in subdirs {
        let candidate = dir.join("outcomes.json");
        if candidate.is_file() {
            let label = dir.file_name().map(|n| n.to_string_lossy().into_owned());
            found.push((label.unwrap_or_default(), candidate));
        }
    }
    if found.is_empty() {
        bail!("no outcomes.json found in {} or its direct subdirectories", args.input.display());
    }

    let mut manifest = Manifest::new("report", &args, None, &out)?;
    let mut used = BTreeSet::new();
    let mut summary_rows: Vec<SummaryRow> = Vec::new();
    for (dir_label, path) in &found {
        let file: OutcomesFile = serde_json::from_str(&manifest.read_input(path)?)
            .with_context(|| format!("parsing {}", path.display()))?;

        let base = sanitize(if dir_label.is_empty() { &file.policy } else { dir_label });
        let mut label = base.clone();
        let mut n = 1;
        while !used.insert(label.clone()) {
            n += 1;
            label = format!("{base}-{n}");
        }

        let ratios =
            RatioReport::from_pairs(file.records.iter().map(|r| (r.earth_pages, &r.outcome)));
        let scatter: Vec<(f64, u64)> = file
            .records
            .iter()
            .map(|r| (r.outcome.mars_time_s, r.outcome.pages_transferred))
            .collect();
        manifest
            .write_output(&format!("{label}-ratios.{ext}"), &render_per_session(&ratios, format))?;
        manifest.write_output(
            &format!("{label}-exclusions.{ext}"),
            &render_exclusions_table(&ratios, format),
        )?;
        manifest.write_output(&format!("{label}-scatter.{ext}"), &render_scatter(&scatter, format))?;

        if summary_rows.is_empty() {
            summary_rows.push(earth_row(
                file.records.iter().map(|r| (r.earth_pages, r.outcome.earth_time_s)),
            ));
        }
        summary_rows.push(SummaryRow::from_report(
            &format!("Mars {}", file.policy),
            file.rtt_min,
            &ratios,
        ));
    }
    manifest.write_output(&format!("summary.{ext}"), &render_summary(&summary_rows, format))?;
    manifest.finish()
}

fn render_exclusions_table(report: &RatioReport, format: TableFormat) -> String {
    marsim::metrics::render_exclusions(report, format)
}
