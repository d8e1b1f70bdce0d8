//! Lenient parser for session-track-style XML logs.
//!
//! The dialect: a root element containing `<session>` elements; each session
//! holds `<interaction num=".." starttime=".." type="..">` elements with a
//! `<query>`, a `<results>` list of `<result rank="..">` entries (each with
//! `<url>`, `<clueweb12id>` or `<docid>`, `<title>`, `<snippet>`), and an
//! optional `<clicked>` list of `<click starttime=".." endtime="..">`
//! entries identifying their target by `<docid>` or by `<rank>` within the
//! same interaction's results.
//!
//! Unknown elements are skipped. Clicks that cannot be resolved to a docid
//! and results without a docid are dropped rather than invented; sessions
//! with no interactions are dropped. Missing mandatory attributes (`num` and
//! `starttime` on interactions, `rank` on results, `starttime` on clicks)
//! are schema errors. Malformed XML is reported with line and column.

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{
    Click, Interaction, InteractionKind, ResultEntry, Session, SessionLog, SessionLogError,
};

/// Parses a whole XML document into a session log.
pub fn parse_xml_str(xml: &str) -> Result<SessionLog, SessionLogError> {
    Parser::new(xml).run()
}

fn line_col(s: &str, byte_pos: usize) -> (usize, usize) {
    let upto = &s.as_bytes()[..byte_pos.min(s.len())];
    let line = 1 + upto.iter().filter(|&&b| b == b'\n').count();
    let col = 1 + upto.iter().rev().take_while(|&&b| b != b'\n').count();
    (line, col)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TextTarget {
    Query,
    ResultUrl,
    ResultDocid,
    ResultTitle,
    ResultSnippet,
    ClickDocid,
    ClickRank,
}

#[derive(Default)]
struct PendingResult {
    rank: u32,
    docid: String,
    url: String,
    title: String,
    snippet: String,
}

struct PendingClick {
    starttime_s: f64,
    endtime_s: Option<f64>,
    docid: String,
    rank_text: String,
}

struct PendingInteraction {
    num: u32,
    starttime_s: f64,
    type_attr: Option<String>,
    query: String,
    results: Vec<ResultEntry>,
    clicks: Vec<PendingClick>,
}

/// An interaction paired with its raw `type` attribute, which can only be
/// resolved to a kind once the whole session is ordered.
type TaggedInteraction = (Interaction, Option<String>);

struct Parser<'a> {
    xml: &'a str,
    reader: Reader<&'a [u8]>,
    sessions: Vec<Session>,
    session_ordinal: usize,
    cur_session: Option<(String, Vec<TaggedInteraction>)>,
    cur_inter: Option<PendingInteraction>,
    cur_result: Option<PendingResult>,
    cur_click: Option<PendingClick>,
    text_target: Option<TextTarget>,
}

impl<'a> Parser<'a> {
    fn new(xml: &'a str) -> Parser<'a> {
        let mut reader = Reader::from_str(xml);
        reader.config_mut().trim_text(true);
        Parser {
            xml,
            reader,
            sessions: Vec::new(),
            session_ordinal: 0,
            cur_session: None,
            cur_inter: None,
            cur_result: None,
            cur_click: None,
            text_target: None,
        }
    }

    fn xml_error(&self, msg: String) -> SessionLogError {
        let (line, col) = line_col(self.xml, self.reader.buffer_position() as usize);
        SessionLogError::Xml { line, col, msg }
    }

    fn run(mut self) -> Result<SessionLog, SessionLogError> {
        loop {
            let ev = match self.reader.read_event() {
                Ok(ev) => ev,
                Err(e) => return Err(self.xml_error(e.to_string())),
            };
            match ev {
                Event::Start(e) => self.on_start(&e, false)?,
                Event::Empty(e) => self.on_start(&e, true)?,
                Event::End(e) => {
                    let name = e.name().as_ref().to_vec();
                    self.on_end(&name)?;
                }
                Event::Text(t) => {
                    let text = t.unescape().map_err(|e| self.xml_error(e.to_string()))?;
                    self.on_text(&text);
                }
                Event::CData(t) => {
                    let text = String::from_utf8_lossy(&t).into_owned();
                    self.on_text(&text);
                }
                Event::Eof => break,
                _ => {}
            }
        }
        // Tolerate a truncated document: close whatever is still open.
        self.on_end(b"interaction")?;
        self.finish_session()?;
        Ok(SessionLog::new(self.sessions))
    }

    fn attr(&self, e: &BytesStart, name: &[u8]) -> Result<Option<String>, SessionLogError> {
        for attr in e.attributes() {
            let attr = attr.map_err(|err| self.xml_error(err.to_string()))?;
            if attr.key.as_ref() == name {
                let v = attr.unescape_value().map_err(|err| self.xml_error(err.to_string()))?;
                return Ok(Some(v.into_owned()));
            }
        }
        Ok(None)
    }

    fn required_attr(&self, e: &BytesStart, element: &str, name: &str) -> Result<String, SessionLogError> {
        self.attr(e, name.as_bytes())?.ok_or_else(|| SessionLogError::Schema {
            element: element.to_string(),
            detail: format!("missing mandatory attribute {name:?}"),
        })
    }

    fn parse_num<T: std::str::FromStr>(&self, element: &str, name: &str, raw: &str) -> Result<T, SessionLogError> {
        raw.trim().parse().map_err(|_| SessionLogError::Schema {
            element: element.to_string(),
            detail: format!("attribute {name:?} is not a number: {raw:?}"),
        })
    }

    fn on_start(&mut self, e: &BytesStart, empty: bool) -> Result<(), SessionLogError> {
        match e.name().as_ref() {
            b"session" => {
                self.finish_session()?;
                self.session_ordinal += 1;
                let id = match self.attr(e, b"num")? {
                    Some(v) => v,
                    None => match self.attr(e, b"id")? {
                        Some(v) => v,
                        None => self.session_ordinal.to_string(),
                    },
                };
                self.cur_session = Some((id, Vec::new()));
            }
            b"interaction" if self.cur_session.is_some() => {
                self.finish_interaction();
                let num_raw = self.required_attr(e, "interaction", "num")?;
                let start_raw = self.required_attr(e, "interaction", "starttime")?;
                self.cur_inter = Some(PendingInteraction {
                    num: self.parse_num("interaction", "num", &num_raw)?,
                    starttime_s: self.parse_num("interaction", "starttime", &start_raw)?,
                    type_attr: self.attr(e, b"type")?,
                    query: String::new(),
                    results: Vec::new(),
                    clicks: Vec::new(),
                });
                if empty {
                    self.finish_interaction();
                }
            }
            b"query" if self.cur_inter.is_some() && self.cur_result.is_none() && self.cur_click.is_none() => {
                self.text_target = Some(TextTarget::Query);
            }
            b"result" if self.cur_inter.is_some() => {
                let rank_raw = self.required_attr(e, "result", "rank")?;
                let rank = self.parse_num("result", "rank", &rank_raw)?;
                self.cur_result = Some(PendingResult { rank, ..PendingResult::default() });
                if empty {
                    self.on_end(b"result")?;
                }
            }
            b"url" if self.cur_result.is_some() => self.text_target = Some(TextTarget::ResultUrl),
            b"title" if self.cur_result.is_some() => self.text_target = Some(TextTarget::ResultTitle),
            b"snippet" if self.cur_result.is_some() => self.text_target = Some(TextTarget::ResultSnippet),
            b"clueweb12id" | b"docid" if self.cur_result.is_some() => {
                self.text_target = Some(TextTarget::ResultDocid);
            }
            b"clueweb12id" | b"docid" if self.cur_click.is_some() => {
                self.text_target = Some(TextTarget::ClickDocid);
            }
            b"click" if self.cur_inter.is_some() => {
                let start_raw = self.required_attr(e, "click", "starttime")?;
                let starttime_s = self.parse_num("click", "starttime", &start_raw)?;
                let endtime_s = match self.attr(e, b"endtime")? {
                    Some(raw) => Some(self.parse_num("click", "endtime", &raw)?),
                    None => None,
                };
                let docid = self.attr(e, b"docid")?.unwrap_or_default();
                self.cur_click =
                    Some(PendingClick { starttime_s, endtime_s, docid, rank_text: String::new() });
                if empty {
                    self.on_end(b"click")?;
                }
            }
            b"rank" if self.cur_click.is_some() => self.text_target = Some(TextTarget::ClickRank),
            _ => {}
        }
        Ok(())
    }

    fn on_text(&mut self, text: &str) {
        let Some(target) = self.text_target else { return };
        let slot = match target {
            TextTarget::Query => self.cur_inter.as_mut().map(|i| &mut i.query),
            TextTarget::ResultUrl => self.cur_result.as_mut().map(|r| &mut r.url),
            TextTarget::ResultDocid => self.cur_result.as_mut().map(|r| &mut r.docid),
            TextTarget::ResultTitle => self.cur_result.as_mut().map(|r| &mut r.title),
            TextTarget::ResultSnippet => self.cur_result.as_mut().map(|r| &mut r.snippet),
            TextTarget::ClickDocid => self.cur_click.as_mut().map(|c| &mut c.docid),
            TextTarget::ClickRank => self.cur_click.as_mut().map(|c| &mut c.rank_text),
        };
        if let Some(slot) = slot {
            if !slot.is_empty() {
                slot.push(' ');
            }
            slot.push_str(text);
        }
    }

    fn on_end(&mut self, name: &[u8]) -> Result<(), SessionLogError> {
        self.text_target = None;
        match name {
            b"result" => {
                if let (Some(r), Some(inter)) = (self.cur_result.take(), self.cur_inter.as_mut()) {
                    // A result with no docid identifies nothing; drop it.
                    if !r.docid.trim().is_empty() {
                        inter.results.push(ResultEntry {
                            rank: r.rank,
                            docid: r.docid.trim().to_string(),
                            url: non_empty(r.url),
                            title: non_empty(r.title),
                            snippet: non_empty(r.snippet),
                        });
                    }
                }
            }
            b"click" => {
                if let (Some(c), Some(inter)) = (self.cur_click.take(), self.cur_inter.as_mut()) {
                    inter.clicks.push(c);
                }
            }
            b"interaction" => self.finish_interaction(),
            b"session" => self.finish_session()?,
            _ => {}
        }
        Ok(())
    }

    fn finish_interaction(&mut self) {
        self.cur_result = None;
        self.cur_click = None;
        let Some(p) = self.cur_inter.take() else { return };
        let Some((_, interactions)) = self.cur_session.as_mut() else { return };
        let mut clicks = Vec::new();
        for c in p.clicks {
            let docid = if !c.docid.trim().is_empty() {
                c.docid.trim().to_string()
            } else if let Ok(rank) = c.rank_text.trim().parse::<u32>() {
                match p.results.iter().find(|r| r.rank == rank) {
                    Some(r) => r.docid.clone(),
                    None => continue, // rank points at nothing; drop, never invent
                }
            } else {
                continue;
            };
            clicks.push(Click { docid, starttime_s: c.starttime_s, endtime_s: c.endtime_s });
        }
        interactions.push((
            Interaction {
                num: p.num,
                starttime_s: p.starttime_s,
                kind: InteractionKind::Initial, // finalized at session close
                query: p.query.trim().to_string(),
                results: p.results,
                clicks,
            },
            p.type_attr,
        ));
    }

    fn finish_session(&mut self) -> Result<(), SessionLogError> {
        self.finish_interaction();
        let Some((id, mut tagged)) = self.cur_session.take() else { return Ok(()) };
        if tagged.is_empty() {
            return Ok(()); // nothing usable in this session
        }
        tagged.sort_by(|a, b| a.0.starttime_s.total_cmp(&b.0.starttime_s));
        let interactions = tagged
            .into_iter()
            .enumerate()
            .map(|(idx, (mut inter, type_attr))| {
                inter.kind = match type_attr.as_deref() {
                    Some("reformulate") => InteractionKind::Reformulate,
                    Some(_) => InteractionKind::Initial,
                    None if idx == 0 => InteractionKind::Initial,
                    None => InteractionKind::Reformulate,
                };
                inter
            })
            .collect();
        if self.sessions.iter().any(|s| s.id == id) {
            return Err(SessionLogError::DuplicateSessionId { id });
        }
        self.sessions.push(Session { id, interactions });
        Ok(())
    }
}

fn non_empty(s: String) -> Option<String> {
    let t = s.trim();
    if t.is_empty() {
        None
    } else {
        Some(t.to_string())
    }
}
