//! LOBSTER message/orderbook ingestion: parse the CSV pair, classify rows into
//! the four event types, build the state sequence, and assemble
//! calibration-ready histories.
//!
//! Message rows carry `(time, label, order id, size, price, direction)` with
//! prices in 1e-4 currency and times in seconds after midnight at nanosecond
//! resolution; orderbook row `k` is the book configuration after message `k`.
//! Label mapping: executions (4/5) become sell or buy market orders depending
//! on the side they consume; submissions and cancellations (1/2/3) become
//! deflationary or inflationary limit events *only when they move the
//! mid-price*, which is what the counting processes actually measure. Cross
//! trades (6) and halts (7) are dropped with counts reported; their book rows
//! still feed the running mid so silent auction moves do not leak into the
//! event stream.

use crate::error::IngestError;
use crate::hawkes::{EventRecord, History};
use crate::lob::{discretise_imbalance, queue_imbalance, StateVariable};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// One parsed message-file row.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMessage {
    /// Nanoseconds after midnight.
    pub time_ns: i64,
    /// LOBSTER event label, 1..=7.
    pub label: u8,
    pub order_id: i64,
    pub size: f64,
    /// Units of 1e-4 currency.
    pub price: i64,
    /// +1 buy (bid side), -1 sell (ask side).
    pub direction: i32,
}

/// One parsed orderbook-file row at a fixed depth.
#[derive(Debug, Clone, PartialEq)]
pub struct BookRow {
    pub ask_prices: Vec<i64>,
    pub ask_sizes: Vec<f64>,
    pub bid_prices: Vec<i64>,
    pub bid_sizes: Vec<f64>,
}

impl BookRow {
    pub fn mid(&self) -> f64 {
        0.5 * (self.ask_prices[0] + self.bid_prices[0]) as f64
    }

    /// Interleaved `(ask1, bid1, ask2, bid2, ...)` sizes.
    pub fn interleaved(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.ask_sizes.len());
        for i in 0..self.ask_sizes.len() {
            v.push(self.ask_sizes[i]);
            v.push(self.bid_sizes[i]);
        }
        v
    }
}

/// A message joined with the book configuration it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinedRow {
    pub message: RawMessage,
    pub book: BookRow,
    /// 1-based line number in the source files.
    pub line: usize,
}

/// Parse outcome: joined rows plus the malformed lines that were skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseOutput {
    pub rows: Vec<JoinedRow>,
    pub malformed: Vec<(usize, String)>,
}

/// Parses `seconds.fraction` into integer nanoseconds without a float detour.
fn parse_time_ns(text: &str) -> Result<i64, String> {
    let (secs, frac) = match text.split_once('.') {
        Some((s, f)) => (s, f),
        None => (text, ""),
    };
    let secs: i64 = secs.parse().map_err(|_| format!("bad seconds field {text:?}"))?;
    if frac.len() > 9 || frac.chars().any(|c| !c.is_ascii_digit()) {
        return Err(format!("bad fractional seconds {text:?}"));
    }
    let mut ns: i64 = 0;
    if !frac.is_empty() {
        ns = frac.parse::<i64>().map_err(|_| format!("bad fractional seconds {text:?}"))?;
        for _ in frac.len()..9 {
            ns *= 10;
        }
    }
    Ok(secs * 1_000_000_000 + ns)
}

fn parse_message_line(line: &str) -> Result<RawMessage, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() < 6 {
        return Err(format!("expected 6 message columns, got {}", fields.len()));
    }
    let time_ns = parse_time_ns(fields[0])?;
    let label: u8 = fields[1].parse().map_err(|_| "bad label".to_string())?;
    if !(1..=7).contains(&label) {
        return Err(format!("label {label} outside 1..=7"));
    }
    let order_id: i64 = fields[2].parse().map_err(|_| "bad order id".to_string())?;
    let size: f64 = fields[3].parse().map_err(|_| "bad size".to_string())?;
    let price: i64 = fields[4].parse().map_err(|_| "bad price".to_string())?;
    if (1..=5).contains(&label) && price <= 0 {
        return Err(format!("non-positive price {price} for label {label}"));
    }
    let direction: i32 = fields[5].parse().map_err(|_| "bad direction".to_string())?;
    if direction != 1 && direction != -1 {
        return Err(format!("direction {direction} outside {{-1, 1}}"));
    }
    Ok(RawMessage { time_ns, label, order_id, size, price, direction })
}

fn parse_book_line(line: &str, depth: usize) -> Result<BookRow, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() < 4 * depth {
        return Err(format!("expected {} orderbook columns, got {}", 4 * depth, fields.len()));
    }
    let mut row = BookRow {
        ask_prices: Vec::with_capacity(depth),
        ask_sizes: Vec::with_capacity(depth),
        bid_prices: Vec::with_capacity(depth),
        bid_sizes: Vec::with_capacity(depth),
    };
    for level in 0..depth {
        let base = 4 * level;
        row.ask_prices.push(fields[base].parse().map_err(|_| "bad ask price".to_string())?);
        row.ask_sizes.push(fields[base + 1].parse().map_err(|_| "bad ask size".to_string())?);
        row.bid_prices.push(fields[base + 2].parse().map_err(|_| "bad bid price".to_string())?);
        row.bid_sizes.push(fields[base + 3].parse().map_err(|_| "bad bid size".to_string())?);
    }
    Ok(row)
}

/// Streaming join of a LOBSTER message/orderbook pair at the given depth.
///
/// Row counts must agree. Malformed rows are skipped and reported with their
/// line numbers unless `strict` is set, in which case the first one is a hard
/// error.
pub fn parse_pair(
    message_path: &Path,
    orderbook_path: &Path,
    depth: usize,
    strict: bool,
) -> Result<ParseOutput, IngestError> {
    let open = |path: &Path| -> Result<BufReader<std::fs::File>, IngestError> {
        std::fs::File::open(path)
            .map(BufReader::new)
            .map_err(|e| IngestError::Io { path: path.display().to_string(), source: e })
    };
    let read_lines = |path: &Path| -> Result<Vec<String>, IngestError> {
        let mut out = Vec::new();
        for line in open(path)?.lines() {
            let line =
                line.map_err(|e| IngestError::Io { path: path.display().to_string(), source: e })?;
            if !line.trim().is_empty() && !line.starts_with('#') {
                out.push(line);
            }
        }
        Ok(out)
    };
    let messages = read_lines(message_path)?;
    let books = read_lines(orderbook_path)?;
    if messages.len() != books.len() {
        return Err(IngestError::RowCountMismatch { messages: messages.len(), books: books.len() });
    }
    let mut rows = Vec::with_capacity(messages.len());
    let mut malformed = Vec::new();
    for (i, (m, b)) in messages.iter().zip(&books).enumerate() {
        let line = i + 1;
        let parsed = parse_message_line(m).and_then(|message| {
            parse_book_line(b, depth).map(|book| JoinedRow { message, book, line })
        });
        match parsed {
            Ok(row) => rows.push(row),
            Err(reason) => {
                if strict {
                    return Err(IngestError::MalformedRow {
                        path: message_path.display().to_string(),
                        line,
                        reason,
                    });
                }
                malformed.push((line, reason));
            }
        }
    }
    Ok(ParseOutput { rows, malformed })
}

/// One classified market event with the book context it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedEvent {
    pub time_ns: i64,
    /// Event label 1..=4.
    pub event_type: u8,
    pub state: StateVariable,
    pub imbalance: f64,
    /// Mid-price in 1e-4 currency; lives on the half-tick grid.
    pub mid: f64,
    /// Interleaved raw sizes at the parse depth, for volume modelling.
    pub raw_volumes: Vec<f64>,
}

impl ClassifiedEvent {
    /// Volumes over the first `n` levels normalised to sum to one.
    pub fn normalised_volumes(&self, n: usize) -> Option<Vec<f64>> {
        if self.raw_volumes.len() < 2 * n {
            return None;
        }
        let slice = &self.raw_volumes[..2 * n];
        let total: f64 = slice.iter().sum();
        if total <= 0.0 {
            return None;
        }
        Some(slice.iter().map(|&v| v / total).collect())
    }
}

/// Classification summary counters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassifyStats {
    pub dropped_halts: usize,
    pub dropped_cross_trades: usize,
    pub dropped_unmoved_limit_rows: usize,
    pub skipped_degenerate_books: usize,
}

/// Classifies joined rows into the four event types with their states.
///
/// `seed_mid` is the mid-price in force before the first row; without it the
/// first row cannot register a mid move. Mid moves are measured row to row
/// over the raw file, so book effects of dropped rows (6/7) shift the
/// reference mid without emitting events.
pub fn classify(
    rows: &[JoinedRow],
    n: usize,
    k: u32,
    seed_mid: Option<f64>,
) -> (Vec<ClassifiedEvent>, ClassifyStats) {
    let mut events = Vec::with_capacity(rows.len());
    let mut stats = ClassifyStats::default();
    let mut prev_mid = seed_mid;
    for row in rows {
        let mid = row.book.mid();
        let delta = prev_mid.map(|p| mid - p).unwrap_or(0.0);
        prev_mid = Some(mid);
        let side_is_bid = row.message.direction == 1;
        let event_type: Option<u8> = match row.message.label {
            4 | 5 => Some(if side_is_bid { 1 } else { 2 }),
            1 => Some(if side_is_bid { 4 } else { 3 }),
            2 | 3 => Some(if side_is_bid { 3 } else { 4 }),
            6 => {
                stats.dropped_cross_trades += 1;
                None
            }
            7 => {
                stats.dropped_halts += 1;
                None
            }
            _ => None,
        };
        let Some(event_type) = event_type else { continue };
        // Limit-order rows only count when they actually moved the mid.
        if matches!(row.message.label, 1..=3) && delta == 0.0 {
            stats.dropped_unmoved_limit_rows += 1;
            continue;
        }
        let x1 = if delta > 0.0 {
            1
        } else if delta < 0.0 {
            -1
        } else {
            0
        };
        let imbalance = match queue_imbalance(&row.book.bid_sizes, &row.book.ask_sizes, n) {
            Ok(i) => i,
            Err(_) => {
                stats.skipped_degenerate_books += 1;
                continue;
            }
        };
        let x2 = discretise_imbalance(imbalance, k).expect("imbalance in range");
        let state = StateVariable::new(x1, x2, k).expect("valid state");
        events.push(ClassifiedEvent {
            time_ns: row.message.time_ns,
            event_type,
            state,
            imbalance,
            mid,
            raw_volumes: row.book.interleaved(),
        });
    }
    (events, stats)
}

/// Dedup summary counters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DedupStats {
    /// Price-move rows absorbed into a same-nanosecond execution.
    pub absorbed_price_moves: usize,
    /// Tie groups that cancelled to no net mid move and were dropped.
    pub dropped_cancelling_groups: usize,
    /// Events nudged forward to restore strictly increasing times.
    pub nudged_ties: usize,
}

/// Collapses equal-timestamp runs so event times are strictly increasing.
///
/// Within a tied group executions win: price-move rows merge into the last
/// execution's state update. A group of pure price moves merges to one event
/// carrying the net move (dropped if the moves cancel). Residual execution
/// ties are spaced a nanosecond apart, below any inter-event gap that
/// matters at this resolution.
pub fn dedup_and_order(events: Vec<ClassifiedEvent>) -> (Vec<ClassifiedEvent>, DedupStats) {
    let mut stats = DedupStats::default();
    let mut out: Vec<ClassifiedEvent> = Vec::with_capacity(events.len());
    let mut prev_out_mid: Option<f64> = None;
    let mut i = 0usize;
    while i < events.len() {
        let mut j = i + 1;
        while j < events.len() && events[j].time_ns == events[i].time_ns {
            j += 1;
        }
        let group = &events[i..j];
        let group_pre_mid = prev_out_mid.unwrap_or(group[0].mid);
        let last = group.last().unwrap();
        let execs: Vec<&ClassifiedEvent> =
            group.iter().filter(|e| e.event_type == 1 || e.event_type == 2).collect();
        if group.len() == 1 {
            out.push(group[0].clone());
        } else if !execs.is_empty() {
            stats.absorbed_price_moves += group.len() - execs.len();
            for (idx, exec) in execs.iter().enumerate() {
                let mut ev = (*exec).clone();
                if idx == execs.len() - 1 {
                    // The final execution carries the group's closing state.
                    let net = last.mid - group_pre_mid;
                    let x1 = if net > 0.0 {
                        1
                    } else if net < 0.0 {
                        -1
                    } else {
                        0
                    };
                    ev.state = StateVariable::new(x1, last.state.x2, last.state.k).unwrap();
                    ev.imbalance = last.imbalance;
                    ev.mid = last.mid;
                    ev.raw_volumes = last.raw_volumes.clone();
                }
                out.push(ev);
            }
        } else {
            // Pure price-move group: one event with the net move.
            let net = last.mid - group_pre_mid;
            if net == 0.0 {
                stats.dropped_cancelling_groups += 1;
            } else {
                let mut ev = group[0].clone();
                let x1 = if net > 0.0 { 1 } else { -1 };
                ev.state = StateVariable::new(x1, last.state.x2, last.state.k).unwrap();
                ev.imbalance = last.imbalance;
                ev.mid = last.mid;
                ev.raw_volumes = last.raw_volumes.clone();
                out.push(ev);
            }
        }
        if let Some(last_pushed) = out.last() {
            prev_out_mid = Some(last_pushed.mid);
        }
        i = j;
    }
    // Residual ties (several executions in one nanosecond) get 1 ns spacing.
    for idx in 1..out.len() {
        if out[idx].time_ns <= out[idx - 1].time_ns {
            out[idx].time_ns = out[idx - 1].time_ns + 1;
            stats.nudged_ties += 1;
        }
    }
    (out, stats)
}

/// Re-emits mid-price-move events on a coarser tick grid: types 3/4 fire only
/// when the cumulated mid displacement reaches `multiple` ticks, and imbalance
/// buckets are recomputed over queues merged `multiple` at a time.
///
/// `multiple = 1` returns the input unchanged.
pub fn renormalise_tick(
    events: &[ClassifiedEvent],
    multiple: u32,
    tick_size: i64,
    n: usize,
    k: u32,
) -> Vec<ClassifiedEvent> {
    if multiple <= 1 {
        return events.to_vec();
    }
    let m = multiple as f64;
    let threshold = m * tick_size as f64;
    let merged_imbalance = |raw: &[f64]| -> Option<f64> {
        // raw is interleaved (ask1, bid1, ...); merge `multiple` adjacent
        // queues per side, then take n merged levels.
        let levels = raw.len() / 2;
        let merged_depth = levels / multiple as usize;
        if merged_depth == 0 {
            return None;
        }
        let take = merged_depth.min(n);
        let mut bid = 0.0;
        let mut ask = 0.0;
        for level in 0..take * multiple as usize {
            ask += raw[2 * level];
            bid += raw[2 * level + 1];
        }
        if bid + ask <= 0.0 {
            None
        } else {
            Some((bid - ask) / (bid + ask))
        }
    };
    let mut out = Vec::with_capacity(events.len());
    let mut cum = 0.0f64;
    let mut prev_mid: Option<f64> = None;
    for ev in events {
        if let Some(p) = prev_mid {
            cum += ev.mid - p;
        }
        prev_mid = Some(ev.mid);
        let crossing = if cum >= threshold {
            cum -= threshold;
            1
        } else if cum <= -threshold {
            cum += threshold;
            -1
        } else {
            0
        };
        let is_exec = ev.event_type == 1 || ev.event_type == 2;
        if !is_exec && crossing == 0 {
            continue;
        }
        let imbalance = match merged_imbalance(&ev.raw_volumes) {
            Some(i) => i,
            None => ev.imbalance,
        };
        let x2 = discretise_imbalance(imbalance, k).expect("imbalance in range");
        let mut renorm = ev.clone();
        renorm.imbalance = imbalance;
        renorm.state = StateVariable::new(crossing, x2, k).expect("valid state");
        out.push(renorm);
    }
    out
}

/// Converts classified events into an engine history.
///
/// Event labels 1..=4 map to engine slots 0..=3; times are rebased to the
/// first event (exact integer subtraction, so nanosecond ordering survives the
/// float conversion). The state before the first event is unobserved and
/// defaults to the first event's state.
pub fn assemble_history(events: &[ClassifiedEvent]) -> Option<(History, i64)> {
    let first = events.first()?;
    let base_ns = first.time_ns;
    let records: Vec<EventRecord> = events
        .iter()
        .map(|ev| EventRecord {
            time: (ev.time_ns - base_ns) as f64 * 1e-9,
            event_type: (ev.event_type - 1) as usize,
            state_after: ev.state.flat_index(),
        })
        .collect();
    let history = History::new(first.state.flat_index(), records).ok()?;
    Some((history, base_ns))
}

/// Groups each event's normalised volume vector by its flat state index, the
/// shape the Dirichlet fitter consumes.
pub fn volumes_by_state(events: &[ClassifiedEvent], n: usize, k: u32) -> Vec<Vec<Vec<f64>>> {
    let mut buckets = vec![Vec::new(); StateVariable::state_count(k)];
    for ev in events {
        if let Some(v) = ev.normalised_volumes(n) {
            buckets[ev.state.flat_index()].push(v);
        }
    }
    buckets
}

/// Writes the canonical event CSV: `time_ns, event_type, x1, x2, imbalance, mid`.
///
/// `header_lines` are emitted first as `#`-prefixed comments.
pub fn write_events_csv(
    events: &[ClassifiedEvent],
    path: &Path,
    header_lines: &[String],
) -> Result<(), IngestError> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| IngestError::Io { path: path.display().to_string(), source: e })?;
    let mut write = |s: String| -> Result<(), IngestError> {
        writeln!(f, "{s}").map_err(|e| IngestError::Io { path: path.display().to_string(), source: e })
    };
    for h in header_lines {
        write(format!("# {h}"))?;
    }
    write("time_ns,event_type,x1,x2,imbalance,mid".to_string())?;
    for ev in events {
        write(format!(
            "{},{},{},{},{},{}",
            ev.time_ns, ev.event_type, ev.state.x1, ev.state.x2, ev.imbalance, ev.mid
        ))?;
    }
    Ok(())
}

/// Reads the canonical event CSV back; volumes are not part of the canonical
/// format, so the returned events carry empty volume vectors.
pub fn read_events_csv(path: &Path, k: u32) -> Result<Vec<ClassifiedEvent>, IngestError> {
    let f = std::fs::File::open(path)
        .map_err(|e| IngestError::Io { path: path.display().to_string(), source: e })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line =
            line.map_err(|e| IngestError::Io { path: path.display().to_string(), source: e })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with("time_ns") {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        let bail = |reason: &str| IngestError::MalformedRow {
            path: path.display().to_string(),
            line: i + 1,
            reason: reason.to_string(),
        };
        if fields.len() != 6 {
            return Err(bail("expected 6 columns"));
        }
        let time_ns: i64 = fields[0].parse().map_err(|_| bail("bad time_ns"))?;
        let event_type: u8 = fields[1].parse().map_err(|_| bail("bad event_type"))?;
        let x1: i32 = fields[2].parse().map_err(|_| bail("bad x1"))?;
        let x2: i32 = fields[3].parse().map_err(|_| bail("bad x2"))?;
        let imbalance: f64 = fields[4].parse().map_err(|_| bail("bad imbalance"))?;
        let mid: f64 = fields[5].parse().map_err(|_| bail("bad mid"))?;
        let state = StateVariable::new(x1, x2, k)
            .map_err(|e| bail(&format!("bad state: {e}")))?;
        out.push(ClassifiedEvent {
            time_ns,
            event_type,
            state,
            imbalance,
            mid,
            raw_volumes: Vec::new(),
        });
    }
    Ok(out)
}

/// Writes the normalised-volume CSV for Dirichlet fitting:
/// `time_ns, state, v1..v2n` with volumes interleaved `(ask1, bid1, ...)`.
pub fn write_volumes_csv(
    events: &[ClassifiedEvent],
    n: usize,
    path: &Path,
    header_lines: &[String],
) -> Result<(), IngestError> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| IngestError::Io { path: path.display().to_string(), source: e })?;
    let mut write = |s: String| -> Result<(), IngestError> {
        writeln!(f, "{s}").map_err(|e| IngestError::Io { path: path.display().to_string(), source: e })
    };
    for h in header_lines {
        write(format!("# {h}"))?;
    }
    let cols: Vec<String> = (1..=2 * n).map(|i| format!("v{i}")).collect();
    write(format!("time_ns,state,{}", cols.join(",")))?;
    for ev in events {
        if let Some(v) = ev.normalised_volumes(n) {
            let vals: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
            write(format!("{},{},{}", ev.time_ns, ev.state.flat_index(), vals.join(",")))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(time: &str, label: u8, size: f64, price: i64, dir: i32) -> String {
        format!("{time},{label},1,{size},{price},{dir}")
    }

    fn book(ask1: i64, av1: f64, bid1: i64, bv1: f64) -> String {
        format!("{ask1},{av1},{bid1},{bv1},{},{},{},{}", ask1 + 100, 100.0, bid1 - 100, 100.0)
    }

    fn write_pair(dir: &Path, messages: &[String], books: &[String]) -> (std::path::PathBuf, std::path::PathBuf) {
        let m = dir.join("message.csv");
        let b = dir.join("orderbook.csv");
        std::fs::write(&m, messages.join("\n")).unwrap();
        std::fs::write(&b, books.join("\n")).unwrap();
        (m, b)
    }

    #[test]
    fn time_parsing_is_exact() {
        assert_eq!(parse_time_ns("35400.092452").unwrap(), 35_400_092_452_000);
        assert_eq!(parse_time_ns("35400").unwrap(), 35_400_000_000_000);
        assert_eq!(parse_time_ns("0.000000001").unwrap(), 1);
        assert!(parse_time_ns("1.0000000001").is_err());
    }

    #[test]
    fn parse_pair_joins_and_reports() {
        let dir = std::env::temp_dir().join("sdhawkes_parse_test");
        std::fs::create_dir_all(&dir).unwrap();
        let (m, b) = write_pair(
            &dir,
            &[
                msg("10.5", 4, 100.0, 10100, -1),
                "garbage,row".to_string(),
                msg("10.7", 1, 50.0, 10000, 1),
            ],
            &vec![book(10100, 200.0, 10000, 300.0); 3],
        );
        let out = parse_pair(&m, &b, 2, false).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert_eq!(out.malformed.len(), 1);
        assert_eq!(out.malformed[0].0, 2);
        // Strict mode turns the skip into a hard error.
        assert!(parse_pair(&m, &b, 2, true).is_err());
    }

    #[test]
    fn parse_pair_rejects_mismatched_counts() {
        let dir = std::env::temp_dir().join("sdhawkes_mismatch_test");
        std::fs::create_dir_all(&dir).unwrap();
        let (m, b) = write_pair(
            &dir,
            &[msg("1.0", 4, 10.0, 10100, -1), msg("2.0", 4, 10.0, 10100, -1)],
            &[book(10100, 100.0, 10000, 100.0)],
        );
        match parse_pair(&m, &b, 2, false) {
            Err(IngestError::RowCountMismatch { messages, books }) => {
                assert_eq!((messages, books), (2, 1));
            }
            other => panic!("expected row count mismatch, got {other:?}"),
        }
    }

    #[test]
    fn empty_files_give_empty_output() {
        let dir = std::env::temp_dir().join("sdhawkes_empty_test");
        std::fs::create_dir_all(&dir).unwrap();
        let (m, b) = write_pair(&dir, &[], &[]);
        let out = parse_pair(&m, &b, 2, false).unwrap();
        assert!(out.rows.is_empty());
    }

    fn joined(time: &str, label: u8, dir: i32, ask1: i64, av: f64, bid1: i64, bv: f64) -> JoinedRow {
        JoinedRow {
            message: parse_message_line(&msg(time, label, 10.0, ask1, dir)).unwrap(),
            book: parse_book_line(&book(ask1, av, bid1, bv), 2).unwrap(),
            line: 0,
        }
    }

    #[test]
    fn classification_follows_label_table() {
        // Execution on the ask side is a buy market order (type 2).
        let rows =
            vec![joined("1.0", 4, -1, 10100, 100.0, 10000, 100.0)];
        let (events, _) = classify(&rows, 2, 3, None);
        assert_eq!(events[0].event_type, 2);
        // Bid-side cancellation that moves the mid down is deflationary.
        let rows = vec![
            joined("1.0", 4, -1, 10100, 100.0, 10000, 100.0),
            joined("2.0", 3, 1, 10100, 100.0, 9900, 100.0),
        ];
        let (events, _) = classify(&rows, 2, 3, None);
        assert_eq!(events[1].event_type, 3);
        assert_eq!(events[1].state.x1, -1);
    }

    #[test]
    fn unmoved_limit_rows_are_dropped() {
        let rows = vec![
            joined("1.0", 4, -1, 10100, 100.0, 10000, 100.0),
            joined("2.0", 1, 1, 10100, 100.0, 10000, 150.0),
        ];
        let (events, stats) = classify(&rows, 2, 3, None);
        assert_eq!(events.len(), 1);
        assert_eq!(stats.dropped_unmoved_limit_rows, 1);
    }

    #[test]
    fn halts_and_cross_trades_shift_the_mid_silently() {
        let rows = vec![
            joined("1.0", 4, -1, 10100, 100.0, 10000, 100.0),
            // A cross trade moves the book without emitting an event.
            joined("2.0", 6, 1, 10300, 100.0, 10200, 100.0),
            // The next execution sees the shifted reference mid.
            joined("3.0", 4, -1, 10300, 50.0, 10200, 100.0),
        ];
        let (events, stats) = classify(&rows, 2, 3, None);
        assert_eq!(events.len(), 2);
        assert_eq!(stats.dropped_cross_trades, 1);
        assert_eq!(events[1].state.x1, 0); // mid unchanged relative to the cross row
    }

    #[test]
    fn dedup_merges_price_move_into_execution() {
        let rows = vec![
            joined("1.0", 4, -1, 10100, 100.0, 10000, 100.0),
            joined("2.0", 4, 1, 10100, 100.0, 10000, 90.0),
            joined("2.0", 3, 1, 10100, 100.0, 9900, 80.0),
        ];
        let (events, _) = classify(&rows, 2, 3, None);
        assert_eq!(events.len(), 3);
        let (deduped, stats) = dedup_and_order(events);
        assert_eq!(deduped.len(), 2);
        assert_eq!(stats.absorbed_price_moves, 1);
        let merged = &deduped[1];
        assert_eq!(merged.event_type, 1); // the execution survives
        assert_eq!(merged.state.x1, -1); // carrying the price drop
        assert_eq!(merged.mid, 10000.0);
    }

    #[test]
    fn dedup_merges_pure_price_move_groups() {
        let mk = |mid_bid: i64| joined("5.0", 3, 1, 10100, 100.0, mid_bid, 80.0);
        let warmup = joined("1.0", 4, -1, 10100, 100.0, 10000, 100.0);
        let rows = vec![warmup, mk(9900), mk(9800), mk(9700)];
        let (events, _) = classify(&rows, 2, 3, None);
        assert_eq!(events.len(), 4);
        let (deduped, _) = dedup_and_order(events);
        assert_eq!(deduped.len(), 2);
        assert_eq!(deduped[1].event_type, 3);
        assert_eq!(deduped[1].state.x1, -1);
        assert_eq!(deduped[1].mid, 0.5 * (10100.0 + 9700.0));
    }

    #[test]
    fn dedup_identity_on_distinct_times() {
        let rows = vec![
            joined("1.0", 4, -1, 10100, 100.0, 10000, 100.0),
            joined("2.0", 4, -1, 10100, 80.0, 10000, 100.0),
        ];
        let (events, _) = classify(&rows, 2, 3, None);
        let (deduped, stats) = dedup_and_order(events.clone());
        assert_eq!(deduped, events);
        assert_eq!(stats, DedupStats::default());
    }

    #[test]
    fn renormalise_identity_and_threshold() {
        let rows = vec![
            joined("1.0", 4, -1, 10100, 100.0, 10000, 100.0),
            joined("2.0", 3, 1, 10100, 100.0, 9900, 100.0),
            joined("3.0", 1, -1, 10000, 100.0, 9900, 100.0),
            joined("4.0", 3, 1, 10000, 100.0, 9800, 100.0),
            joined("5.0", 1, -1, 9900, 100.0, 9800, 100.0),
        ];
        let (events, _) = classify(&rows, 2, 3, None);
        assert_eq!(events.len(), 5);
        let same = renormalise_tick(&events, 1, 100, 2, 3);
        assert_eq!(same, events);
        // Monotone four half-tick declines at tick multiple 2: the cumulated
        // move crosses 2 ticks once over these rows.
        let coarse = renormalise_tick(&events, 2, 100, 1, 3);
        let moves: Vec<u8> =
            coarse.iter().filter(|e| e.event_type >= 3).map(|e| e.event_type).collect();
        assert_eq!(moves.len(), 1);
        assert_eq!(moves[0], 3);
    }

    #[test]
    fn renormalise_alternating_moves_never_fire() {
        // Mid alternates up and down one tick: cumulated change never
        // reaches two ticks.
        let mut rows = vec![joined("1.0", 4, -1, 10100, 100.0, 10000, 100.0)];
        for i in 0..6 {
            let (a, b) = if i % 2 == 0 { (10200, 10100) } else { (10100, 10000) };
            rows.push(joined(&format!("{}.0", i + 2), if i % 2 == 0 { 1 } else { 3 }, 1, a, 100.0, b, 100.0));
        }
        let (events, _) = classify(&rows, 2, 3, None);
        assert!(events.len() > 4);
        let coarse = renormalise_tick(&events, 2, 100, 1, 3);
        assert!(coarse.iter().all(|e| e.event_type < 3));
    }

    #[test]
    fn history_assembly_rebases_and_maps_labels() {
        let rows = vec![
            joined("35400.000000001", 4, -1, 10100, 100.0, 10000, 100.0),
            joined("35400.000000002", 4, 1, 10100, 100.0, 10000, 100.0),
        ];
        let (events, _) = classify(&rows, 2, 3, None);
        let (history, base) = assemble_history(&events).unwrap();
        assert_eq!(base, 35_400_000_000_001);
        assert_eq!(history.events.len(), 2);
        assert_eq!(history.events[0].time, 0.0);
        assert!((history.events[1].time - 1e-9).abs() < 1e-18);
        assert_eq!(history.events[0].event_type, 1); // label 2 -> slot 1
        assert_eq!(history.events[1].event_type, 0); // label 1 -> slot 0
    }

    #[test]
    fn event_csv_round_trip_is_identical() {
        let rows = vec![
            joined("35400.092452", 4, -1, 460700, 200.0, 460600, 900.0),
            joined("35400.113776", 4, 1, 460700, 200.0, 460600, 1578.0),
        ];
        let (events, _) = classify(&rows, 2, 3, None);
        let dir = std::env::temp_dir().join("sdhawkes_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("events.csv");
        write_events_csv(&events, &path, &["seed=1".to_string()]).unwrap();
        let back = read_events_csv(&path, 3).unwrap();
        assert_eq!(back.len(), events.len());
        for (a, b) in events.iter().zip(&back) {
            assert_eq!(a.time_ns, b.time_ns);
            assert_eq!(a.event_type, b.event_type);
            assert_eq!(a.state, b.state);
            assert_eq!(a.imbalance, b.imbalance);
            assert_eq!(a.mid, b.mid);
        }
    }
}
