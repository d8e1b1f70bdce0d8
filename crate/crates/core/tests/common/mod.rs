//! Event-driven replays of the session policies, built directly on the
//! simulation kernel. The library computes each policy's costs in closed
//! form; the walkers here act the same user out message by message —
//! requests cross the link, responses come back, stalls emerge from event
//! timing — so the two derivations check each other.

use std::collections::{BTreeMap, BTreeSet};

use marsim::sessionlog::{session_duration, Session};
use marsim::simkernel::{Endpoint, Kernel, LinkConfig, SimTime};

/// What an event-driven replay measured for one session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Walked {
    pub mars_time_s: f64,
    pub blocking_waits: u64,
    pub pages_transferred: u64,
}

/// Bare request/response traffic for the fully blocking policies.
#[derive(Debug, Clone)]
enum Ping {
    Request,
    Response,
}

/// Sends a request at `at` (clamped to the kernel clock), has the peer
/// bounce it back, and runs the kernel until the response lands. Returns
/// the resumption time.
fn block_round_trip(kernel: &mut Kernel<Ping>, at: f64) -> f64 {
    let at = SimTime::from_secs(at.max(kernel.clock().secs()));
    let earth_rx = kernel
        .transmit(Ping::Request, Endpoint::Mars, Endpoint::Earth, at)
        .expect("request transmit");
    let mut resume: Option<SimTime> = None;
    kernel.run_until(earth_rx, |k, ev| {
        if matches!(ev.payload, Ping::Request) {
            let back = k
                .transmit(Ping::Response, Endpoint::Earth, Endpoint::Mars, ev.at)
                .expect("response transmit");
            resume = Some(back);
        }
    });
    let resume = resume.expect("request was dispatched");
    kernel.run_until(resume, |_, _| {});
    resume.secs()
}

/// Baseline policy: the user stops at every first-occurrence query and at
/// the first click on each page, waiting out a full round trip each time.
/// Repeats are free. One page crosses per stall.
pub fn walk_baseline(session: &Session, link: &LinkConfig) -> Walked {
    let mut kernel: Kernel<Ping> = Kernel::new(*link);
    let mut shift = 0.0_f64;
    let mut waits = 0_u64;
    let mut pages = 0_u64;
    let mut seen_queries: BTreeSet<&str> = BTreeSet::new();
    let mut seen_pages: BTreeSet<&str> = BTreeSet::new();
    for inter in &session.interactions {
        if seen_queries.insert(&inter.query) {
            shift = block_round_trip(&mut kernel, inter.starttime_s + shift) - inter.starttime_s;
            waits += 1;
            pages += 1;
        }
        for click in &inter.clicks {
            if seen_pages.insert(&click.docid) {
                shift =
                    block_round_trip(&mut kernel, click.starttime_s + shift) - click.starttime_s;
                waits += 1;
                pages += 1;
            }
        }
    }
    Walked {
        mars_time_s: session_duration(session) + shift,
        blocking_waits: waits,
        pages_transferred: pages,
    }
}

/// SERP pre-fetch policy: each first-occurrence query blocks one round
/// trip and its response carries the SERP plus every linked page not yet
/// transferred; clicks on carried pages are free, clicks on pages nothing
/// shipped cost a demand round trip.
pub fn walk_serp_prefetch(session: &Session, link: &LinkConfig) -> Walked {
    let mut kernel: Kernel<Ping> = Kernel::new(*link);
    let mut shift = 0.0_f64;
    let mut waits = 0_u64;
    let mut pages = 0_u64;
    let mut seen_queries: BTreeSet<&str> = BTreeSet::new();
    let mut transferred: BTreeSet<&str> = BTreeSet::new();
    for inter in &session.interactions {
        if seen_queries.insert(&inter.query) {
            shift = block_round_trip(&mut kernel, inter.starttime_s + shift) - inter.starttime_s;
            waits += 1;
            pages += 1;
            for res in &inter.results {
                if transferred.insert(&res.docid) {
                    pages += 1;
                }
            }
        }
        for click in &inter.clicks {
            if transferred.insert(&click.docid) {
                shift =
                    block_round_trip(&mut kernel, click.starttime_s + shift) - click.starttime_s;
                waits += 1;
                pages += 1;
            }
        }
    }
    Walked {
        mars_time_s: session_duration(session) + shift,
        blocking_waits: waits,
        pages_transferred: pages,
    }
}

/// Static-cache traffic. Queries list the docids the local SERP shows, so
/// Earth knows which full pages to put aboard the response.
#[derive(Debug, Clone)]
enum CacheMsg {
    Query { docids: Vec<String> },
    Serp { aboard: Vec<String> },
    Demand { docid: String },
    Page { docid: String },
}

/// Kernel-side state of the cache walk, advanced by [`pump`].
struct CacheNet<'a> {
    cache: &'a BTreeSet<String>,
    /// Earth's dedup of shipped docids, updated when requests arrive.
    earth_sent: BTreeSet<String>,
    /// Mars-side landing times per docid.
    arrived: BTreeMap<String, f64>,
    pages: u64,
}

/// Dispatches kernel events up to `until`: Earth answers requests,
/// filtering out cached and already-shipped pages; Mars logs landings and
/// counts transferred pages.
fn pump(kernel: &mut Kernel<CacheMsg>, until: SimTime, net: &mut CacheNet) {
    kernel.run_until(until, |k, ev| match (ev.endpoint, ev.payload) {
        (Endpoint::Earth, CacheMsg::Query { docids }) => {
            let aboard: Vec<String> = docids
                .into_iter()
                .filter(|d| !net.cache.contains(d) && net.earth_sent.insert(d.clone()))
                .collect();
            k.transmit(CacheMsg::Serp { aboard }, Endpoint::Earth, Endpoint::Mars, ev.at)
                .expect("serp transmit");
        }
        (Endpoint::Earth, CacheMsg::Demand { docid }) => {
            net.earth_sent.insert(docid.clone());
            k.transmit(CacheMsg::Page { docid }, Endpoint::Earth, Endpoint::Mars, ev.at)
                .expect("page transmit");
        }
        (Endpoint::Mars, CacheMsg::Serp { aboard }) => {
            net.pages += 1; // the SERP page itself
            for docid in aboard {
                net.pages += 1;
                net.arrived.insert(docid, ev.at.secs());
            }
        }
        (Endpoint::Mars, CacheMsg::Page { docid }) => {
            net.pages += 1;
            net.arrived.insert(docid, ev.at.secs());
        }
        _ => unreachable!("message delivered back to its sender"),
    });
}

/// Static-cache policy: queries go out at their log times without
/// blocking; the user browses the locally reconstructed SERP and stalls
/// only at a click on a page that is neither cached nor landed — for the
/// remainder of an in-flight transfer, or a full demand round trip for a
/// page no SERP has listed. Cached pages never cross the link.
pub fn walk_static_cache(
    session: &Session,
    cache: &BTreeSet<String>,
    link: &LinkConfig,
) -> Walked {
    let mut kernel: Kernel<CacheMsg> = Kernel::new(*link);
    let mut net =
        CacheNet { cache, earth_sent: BTreeSet::new(), arrived: BTreeMap::new(), pages: 0 };
    let mut shift = 0.0_f64;
    let mut waits = 0_u64;
    let mut seen_queries: BTreeSet<&str> = BTreeSet::new();
    // Docids some transmitted query's SERP has listed; their full pages
    // are aboard a response, landed or still in flight.
    let mut promised: BTreeSet<&str> = BTreeSet::new();

    for inter in &session.interactions {
        if seen_queries.insert(&inter.query) {
            let sent_at = inter.starttime_s + shift;
            let at = SimTime::from_secs(sent_at.max(kernel.clock().secs()));
            let docids: Vec<String> = inter.results.iter().map(|r| r.docid.clone()).collect();
            kernel
                .transmit(CacheMsg::Query { docids }, Endpoint::Mars, Endpoint::Earth, at)
                .expect("query transmit");
            for res in &inter.results {
                if !cache.contains(&res.docid) {
                    promised.insert(&res.docid);
                }
            }
        }
        for click in &inter.clicks {
            let click_at = click.starttime_s + shift;
            let d = click.docid.as_str();
            if cache.contains(d) {
                continue;
            }
            // Let everything due by now land before deciding.
            let t = SimTime::from_secs(click_at.max(kernel.clock().secs()));
            pump(&mut kernel, t, &mut net);
            if let Some(&landed) = net.arrived.get(d) {
                debug_assert!(landed <= click_at + 1e-9);
                continue;
            }
            if promised.contains(d) {
                // The full page is aboard an in-flight response: advance
                // the kernel until it lands and charge the user the gap.
                while !net.arrived.contains_key(d) {
                    let next = kernel.peek_next_at().expect("promised page is in flight");
                    pump(&mut kernel, next, &mut net);
                }
                let wait = net.arrived[d] - click_at;
                if wait > 0.0 {
                    shift += wait;
                    waits += 1;
                }
            } else {
                // No SERP has listed this page: fetch it on demand.
                let arrival = kernel
                    .transmit(
                        CacheMsg::Demand { docid: d.to_string() },
                        Endpoint::Mars,
                        Endpoint::Earth,
                        t,
                    )
                    .expect("demand transmit")
                    .after(kernel.link().one_way_delay_s);
                while !net.arrived.contains_key(d) {
                    let next = kernel.peek_next_at().expect("demanded page is in flight");
                    pump(&mut kernel, next, &mut net);
                }
                debug_assert!((net.arrived[d] - arrival.secs()).abs() < 1e-9);
                let wait = net.arrived[d] - click_at;
                if wait > 0.0 {
                    shift += wait;
                    waits += 1;
                }
            }
        }
    }
    // The session is over at the log's end plus accumulated stalls, but
    // in-flight responses still count toward transfer totals.
    while let Some(next) = kernel.peek_next_at() {
        pump(&mut kernel, next, &mut net);
    }
    Walked {
        mars_time_s: session_duration(session) + shift,
        blocking_waits: waits,
        pages_transferred: net.pages,
    }
}
