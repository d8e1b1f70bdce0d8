//! Effort and data ratios, their macro averages, and plot-ready tables.
//!
//! A session replayed behind the link yields a [`SessionOutcome`]; this
//! module turns outcomes into per-session ratios and aggregates:
//!
//! - effort ratio `E` = time to complete the session on Mars over the time
//!   the same session took on Earth;
//! - data ratio `D` = pages transferred to Mars over pages transferred on
//!   Earth, where Earth counts one page per query and per click with no
//!   de-duplication (no local caching is assumed on the Earth side).
//!
//! Aggregates are macro averages — the mean of per-session ratios, never
//! the ratio of pooled sums. The two disagree whenever per-session ratios
//! vary, and only the macro form weights every session equally.

use serde::{Deserialize, Serialize};

use crate::sessionlog::Session;
use crate::strategies::SessionOutcome;
use crate::totalrecall::GainCurve;

/// Effort ratio for one session: Mars time over Earth time.
///
/// `None` when the session took no time on Earth (nothing to compare
/// against); such sessions are excluded from averages.
pub fn effort_ratio(outcome: &SessionOutcome) -> Option<f64> {
    (outcome.earth_time_s > 0.0).then(|| outcome.mars_time_s / outcome.earth_time_s)
}

/// Data ratio for one session: pages transferred to Mars over pages
/// transferred on Earth. `None` when Earth transferred no pages.
pub fn data_ratio(outcome: &SessionOutcome, earth_pages: u64) -> Option<f64> {
    (earth_pages > 0).then(|| outcome.pages_transferred as f64 / earth_pages as f64)
}

/// Pages transferred on Earth: one per query plus one per click, with no
/// de-duplication — an Earth browser is assumed to fetch every time.
pub fn earth_pages(session: &Session) -> u64 {
    session.interactions.len() as u64
        + session.interactions.iter().map(|i| i.clicks.len() as u64).sum::<u64>()
}

/// Ratios for one included session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRatios {
    pub session_id: String,
    pub effort: f64,
    pub data: f64,
}

/// Why a session contributes no ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExclusionReason {
    ZeroEarthTime,
    ZeroEarthPages,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::ZeroEarthTime => "zero-earth-time",
            ExclusionReason::ZeroEarthPages => "zero-earth-pages",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub session_id: String,
    pub reason: ExclusionReason,
}

/// Per-session ratios plus their macro averages.
///
/// All aggregate fields are means over `per_session` only; excluded
/// sessions are listed but contribute nothing. An empty report carries
/// zero in every aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub per_session: Vec<SessionRatios>,
    pub excluded: Vec<Exclusion>,
    /// Mean of per-session effort ratios.
    pub macro_e: f64,
    /// Mean of per-session data ratios.
    pub macro_d: f64,
    /// Mean Mars completion time of included sessions, seconds.
    pub avg_time_s: f64,
    /// Mean pages transferred to Mars over included sessions.
    pub avg_pages: f64,
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

impl RatioReport {
    /// Builds the report from `(session, outcome)` pairs. Sessions with
    /// zero Earth duration or zero Earth pages are excluded and listed.
    pub fn build<'a>(
        pairs: impl IntoIterator<Item = (&'a Session, &'a SessionOutcome)>,
    ) -> RatioReport {
        RatioReport::from_pairs(pairs.into_iter().map(|(session, outcome)| {
            debug_assert_eq!(session.id, outcome.session_id, "misaligned session/outcome pair");
            (earth_pages(session), outcome)
        }))
    }

    /// As [`RatioReport::build`], but from already-counted Earth pages —
    /// the form stored in simulation output files.
    pub fn from_pairs<'a>(
        pairs: impl IntoIterator<Item = (u64, &'a SessionOutcome)>,
    ) -> RatioReport {
        let mut per_session = Vec::new();
        let mut excluded = Vec::new();
        let mut times = Vec::new();
        let mut pages = Vec::new();
        for (earth_pages, outcome) in pairs {
            let Some(effort) = effort_ratio(outcome) else {
                excluded.push(Exclusion {
                    session_id: outcome.session_id.clone(),
                    reason: ExclusionReason::ZeroEarthTime,
                });
                continue;
            };
            let Some(data) = data_ratio(outcome, earth_pages) else {
                excluded.push(Exclusion {
                    session_id: outcome.session_id.clone(),
                    reason: ExclusionReason::ZeroEarthPages,
                });
                continue;
            };
            per_session.push(SessionRatios {
                session_id: outcome.session_id.clone(),
                effort,
                data,
            });
            times.push(outcome.mars_time_s);
            pages.push(outcome.pages_transferred as f64);
        }
        let n = per_session.len();
        RatioReport {
            macro_e: mean(per_session.iter().map(|r| r.effort), n),
            macro_d: mean(per_session.iter().map(|r| r.data), n),
            avg_time_s: mean(times.into_iter(), n),
            avg_pages: mean(pages.into_iter(), n),
            per_session,
            excluded,
        }
    }

    pub fn included(&self) -> usize {
        self.per_session.len()
    }
}

/// The Earth-side reference line of the summary table: `E = D = 1` by
/// definition, averages over Earth durations and Earth pages. Takes
/// `(earth_pages, earth_time_s)` per session and applies the same
/// zero-time / zero-pages exclusions as [`RatioReport`].
pub fn earth_row(pairs: impl IntoIterator<Item = (u64, f64)>) -> SummaryRow {
    let mut times = Vec::new();
    let mut pages = Vec::new();
    for (p, t) in pairs {
        if t > 0.0 && p > 0 {
            times.push(t);
            pages.push(p as f64);
        }
    }
    let n = times.len();
    SummaryRow {
        location: "Earth".to_string(),
        lag_min: 0.0,
        avg_time_s: mean(times.into_iter(), n),
        avg_pages: mean(pages.into_iter(), n),
        effort: if n == 0 { 0.0 } else { 1.0 },
        data: if n == 0 { 0.0 } else { 1.0 },
    }
}

/// One line of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub location: String,
    pub lag_min: f64,
    pub avg_time_s: f64,
    pub avg_pages: f64,
    pub effort: f64,
    pub data: f64,
}

impl SummaryRow {
    pub fn from_report(location: &str, lag_min: f64, report: &RatioReport) -> SummaryRow {
        SummaryRow {
            location: location.to_string(),
            lag_min,
            avg_time_s: report.avg_time_s,
            avg_pages: report.avg_pages,
            effort: report.macro_e,
            data: report.macro_d,
        }
    }
}

/// Output encoding of the tabular renderings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Tsv,
}

impl TableFormat {
    fn delimiter(self) -> u8 {
        match self {
            TableFormat::Csv => b',',
            TableFormat::Tsv => b'\t',
        }
    }
}

fn table_writer(format: TableFormat) -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().delimiter(format.delimiter()).from_writer(Vec::new())
}

fn into_string(writer: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(writer.into_inner().expect("in-memory flush cannot fail"))
        .expect("rendered tables are UTF-8")
}

/// Lags are whole minutes in the usual configurations; render them without
/// a decimal point unless they genuinely have a fraction.
fn fmt_lag(lag_min: f64) -> String {
    if lag_min.fract() == 0.0 {
        format!("{}", lag_min as i64)
    } else {
        format!("{lag_min}")
    }
}

fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}

/// `location, lag_min, avg_time_s, avg_pages, E, D` — one row per
/// configuration, e.g. `Earth,0,237.500,3.000,1.000,1.000`.
pub fn render_summary(rows: &[SummaryRow], format: TableFormat) -> String {
    let mut w = table_writer(format);
    w.write_record(["location", "lag_min", "avg_time_s", "avg_pages", "E", "D"])
        .expect("in-memory write cannot fail");
    for row in rows {
        w.write_record([
            row.location.as_str(),
            &fmt_lag(row.lag_min),
            &fmt3(row.avg_time_s),
            &fmt3(row.avg_pages),
            &fmt3(row.effort),
            &fmt3(row.data),
        ])
        .expect("in-memory write cannot fail");
    }
    into_string(w)
}

/// `session_id, E, D` for every included session.
pub fn render_per_session(report: &RatioReport, format: TableFormat) -> String {
    let mut w = table_writer(format);
    w.write_record(["session_id", "E", "D"]).expect("in-memory write cannot fail");
    for row in &report.per_session {
        w.write_record([row.session_id.as_str(), &fmt3(row.effort), &fmt3(row.data)])
            .expect("in-memory write cannot fail");
    }
    into_string(w)
}

/// `session_id, reason` for every excluded session.
pub fn render_exclusions(report: &RatioReport, format: TableFormat) -> String {
    let mut w = table_writer(format);
    w.write_record(["session_id", "reason"]).expect("in-memory write cannot fail");
    for row in &report.excluded {
        w.write_record([row.session_id.as_str(), row.reason.as_str()])
            .expect("in-memory write cannot fail");
    }
    into_string(w)
}

/// Per-session scatter data: `duration_s, pages`.
pub fn render_scatter(points: &[(f64, u64)], format: TableFormat) -> String {
    let mut w = table_writer(format);
    w.write_record(["duration_s", "pages"]).expect("in-memory write cannot fail");
    for &(duration, pages) in points {
        w.write_record([fmt3(duration), pages.to_string()]).expect("in-memory write cannot fail");
    }
    into_string(w)
}

/// One cache-size evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitRatioRow {
    pub fraction: f64,
    pub clicked_ratio: Option<f64>,
    pub serp_ratio: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// `fraction, clicked_ratio, serp_ratio`; undefined ratios (no trials)
/// render as empty cells.
pub fn render_hit_ratios(rows: &[HitRatioRow], format: TableFormat) -> String {
    let mut w = table_writer(format);
    w.write_record(["fraction", "clicked_ratio", "serp_ratio"])
        .expect("in-memory write cannot fail");
    for row in rows {
        w.write_record([
            format!("{}", row.fraction),
            fmt_opt(row.clicked_ratio),
            fmt_opt(row.serp_ratio),
        ])
        .expect("in-memory write cannot fail");
    }
    into_string(w)
}

/// `time_s, recall, shipped` — one row per judgment on the gain curve.
pub fn render_gain_curve(curve: &GainCurve, format: TableFormat) -> String {
    let mut w = table_writer(format);
    w.write_record(["time_s", "recall", "shipped"]).expect("in-memory write cannot fail");
    for p in &curve.points {
        w.write_record([fmt3(p.time_s), format!("{:.6}", p.recall), p.docs_shipped.to_string()])
            .expect("in-memory write cannot fail");
    }
    into_string(w)
}
