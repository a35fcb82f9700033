//! The four-agent workflow: event-info extraction, tweet retrieval and
//! analysis, mobility reasoning, and the evaluator feedback loop.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agents::backend::{CompletionBackend, CompletionRequest, PromptKind};
use crate::agents::logic::LogicStore;
use crate::agents::prompts::{
    parse_numbered_sections, render_template, EI_SECTIONS, EVALUATOR_GLOBAL_TEMPLATE,
    EVALUATOR_VENUE_TEMPLATE, EVENT_INFO_TEMPLATE, MOBILITY_ANALYSIS_TEMPLATE, TA_SECTIONS,
    TWEET_ANALYSIS_TEMPLATE, TWEET_QUERIES_TEMPLATE,
};
use crate::agents::query::{match_tweets, parse_query, QueryAst};
use crate::agents::stats::ErrorStats;
use crate::datamodel::events::{EventRecord, Tweet};
use crate::datamodel::synth::category_terms;
use crate::error::{Error, Result};
use crate::textctx::{CategoryTexts, TextContext};

/// How far back another event at the same venue counts as "recent".
pub const RECENT_DAYS: i64 = 7;

/// Up to three re-prompts appending this note when a reply fails its
/// structural parse.
const REFLECTION_NOTE: &str = "Reflection: the previous reply did not match the required \
output structure. Re-read the requirements and answer again, following the structure exactly.";

const MAX_ATTEMPTS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasicEventInfo {
    pub event_type: String,
    pub venue_location: String,
    pub event_time: String,
    pub event_content: String,
    pub target_audience: String,
    pub scale_importance: String,
}

impl BasicEventInfo {
    /// The six sections re-rendered as the block downstream prompts
    /// embed.
    pub fn render_block(&self) -> String {
        let fields = [
            &self.event_type,
            &self.venue_location,
            &self.event_time,
            &self.event_content,
            &self.target_audience,
            &self.scale_importance,
        ];
        EI_SECTIONS
            .iter()
            .zip(fields)
            .enumerate()
            .map(|(i, (title, body))| format!("{}. {title}: {body}", i + 1))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SocialAnalysis {
    pub attention: String,
    pub participation: String,
    pub sentiment: String,
    pub topics: String,
}

/// The analyzer's JSON output contract: exactly these three keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MobilityContext {
    #[serde(rename = "filtered event info")]
    pub filtered_event_info: String,
    #[serde(rename = "filtered public reactions")]
    pub filtered_public_reactions: String,
    #[serde(rename = "traffic conditions")]
    pub traffic_conditions: String,
}

impl MobilityContext {
    pub fn into_text_context(self, event_id: &str) -> TextContext {
        TextContext {
            event_id: event_id.to_string(),
            category_texts: CategoryTexts {
                event_info: self.filtered_event_info,
                public_reactions: self.filtered_public_reactions,
                traffic_conditions: self.traffic_conditions,
            },
        }
    }
}

fn complete_with_reflection<T>(
    backend: &dyn CompletionBackend,
    mut req: CompletionRequest,
    parse: impl Fn(&str) -> Result<T>,
) -> Result<T> {
    let mut last_err = None;
    for _ in 0..MAX_ATTEMPTS {
        let reply = backend.complete(&req)?;
        match parse(&reply) {
            Ok(v) => return Ok(v),
            Err(e) => {
                last_err = Some(e);
                req.prompt = format!("{}\n\n{REFLECTION_NOTE}", req.prompt);
            }
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Display name for a venue: first segment of the venue_directory
/// payload when present, else the raw venue id.
pub fn venue_display_name(event: &EventRecord) -> String {
    event
        .raw_text
        .get("venue_directory")
        .and_then(|s| s.split(',').next())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| event.venue_id.clone())
}

fn event_metadata_block(event: &EventRecord) -> String {
    let mut block = format!(
        "Venue: {} ({})\nDate: {}\nStart: {}\nEnd: {}\nCategories: {}\n",
        venue_display_name(event),
        event.venue_id,
        event.date,
        event.start_time.format("%H:%M"),
        event.end_time.format("%H:%M"),
        event
            .categories
            .iter()
            .map(|c| c.label())
            .collect::<Vec<_>>()
            .join(", "),
    );
    for (source, text) in &event.raw_text {
        block.push_str(&format!("Source {source}: {text}\n"));
    }
    block
}

pub fn run_event_info_extractor(
    event: &EventRecord,
    backend: &dyn CompletionBackend,
) -> Result<BasicEventInfo> {
    event.validate()?;
    let prompt = render_template(
        EVENT_INFO_TEMPLATE,
        &[("event_metadata", event_metadata_block(event).as_str())],
    );
    let terms = category_terms(event.primary_category()).join(" / ");
    let duration_h =
        (event.end_time - event.start_time).num_minutes() as f64 / 60.0;
    let req = CompletionRequest::new(PromptKind::EventInfo, prompt)
        .with("event_id", &event.event_id)
        .with("venue_id", &event.venue_id)
        .with("venue_location", event.raw_text.get("venue_directory").cloned().unwrap_or_else(|| event.venue_id.clone()))
        .with("category", event.primary_category().label())
        .with("category_terms", terms)
        .with("calendar", event.raw_text.get("calendar").cloned().unwrap_or_default())
        .with("date", event.date.to_string())
        .with("start", event.start_time.format("%H:%M").to_string())
        .with("end", event.end_time.format("%H:%M").to_string())
        .with("duration_h", format!("{duration_h}"));
    complete_with_reflection(backend, req, |reply| {
        let s = parse_numbered_sections(reply, &EI_SECTIONS)?;
        let info = BasicEventInfo {
            event_type: s[0].clone(),
            venue_location: s[1].clone(),
            event_time: s[2].clone(),
            event_content: s[3].clone(),
            target_audience: s[4].clone(),
            scale_importance: s[5].clone(),
        };
        if info.event_type.is_empty() || info.scale_importance.is_empty() {
            return Err(Error::Pipeline {
                message: "event info sections must be nonempty".into(),
                reply: reply.to_string(),
            });
        }
        Ok(info)
    })
}

const TERM_STOPLIST: [&str; 5] = ["event", "gathering", "events", "style", "the"];

fn derive_event_terms(info: &BasicEventInfo) -> Vec<String> {
    let mut terms: Vec<String> = Vec::new();
    for tok in info.event_type.split(|c: char| !c.is_alphanumeric()) {
        let t = tok.trim();
        if t.len() >= 3
            && !TERM_STOPLIST.contains(&t.to_lowercase().as_str())
            && !terms.iter().any(|x| x.eq_ignore_ascii_case(t))
        {
            terms.push(t.to_string());
        }
        if terms.len() == 4 {
            break;
        }
    }
    if let Some(name) = info.venue_location.split(',').next() {
        let tag: String = name
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect::<String>()
            .to_lowercase();
        if !tag.is_empty() {
            terms.push(format!("#{tag}"));
        }
    }
    terms
}

fn derive_location_terms(info: &BasicEventInfo) -> Vec<String> {
    info.venue_location
        .split(',')
        .take(2)
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty() && !s.chars().all(|c| c.is_numeric()))
        .collect()
}

/// TA step 1: five query strings, each parsed against the grammar.
pub fn build_queries(
    info: &BasicEventInfo,
    backend: &dyn CompletionBackend,
) -> Result<Vec<QueryAst>> {
    let prompt = render_template(
        TWEET_QUERIES_TEMPLATE,
        &[("basic_event_information", info.render_block().as_str())],
    );
    let req = CompletionRequest::new(PromptKind::TweetQueries, prompt)
        .with("event_terms", derive_event_terms(info).join(";"))
        .with("location_terms", derive_location_terms(info).join(";"));
    complete_with_reflection(backend, req, |reply| {
        let mut queries = Vec::new();
        for line in reply.lines().map(str::trim).filter(|l| !l.is_empty()) {
            queries.push(parse_query(line)?);
        }
        if queries.len() < 5 {
            return Err(Error::Pipeline {
                message: format!("expected 5 queries, got {}", queries.len()),
                reply: reply.to_string(),
            });
        }
        queries.truncate(5);
        Ok(queries)
    })
}

/// TA step 2: filter the corpus with the queries, then analyze the
/// matched tweets.
pub fn run_tweet_analyzer(
    info: &BasicEventInfo,
    tweets: &[Tweet],
    queries: &[QueryAst],
    backend: &dyn CompletionBackend,
) -> Result<(SocialAnalysis, Vec<Tweet>)> {
    let matched = match_tweets(tweets, queries);
    let joined = matched
        .iter()
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join("\n");
    let prompt = render_template(
        TWEET_ANALYSIS_TEMPLATE,
        &[
            ("basic_event_information", info.render_block().as_str()),
            ("tweets", if joined.is_empty() { "(none)" } else { &joined }),
        ],
    );
    let req = CompletionRequest::new(PromptKind::TweetAnalysis, prompt)
        .with("matched_count", matched.len().to_string())
        .with("matched_tweets", &joined);
    let analysis = complete_with_reflection(backend, req, |reply| {
        let s = parse_numbered_sections(reply, &TA_SECTIONS)?;
        Ok(SocialAnalysis {
            attention: s[0].clone(),
            participation: s[1].clone(),
            sentiment: s[2].clone(),
            topics: s[3].clone(),
        })
    })?;
    Ok((analysis, matched))
}

/// Other events at the same venue on the same day or up to
/// [`RECENT_DAYS`] before.
pub fn recent_proximate_events<'a>(
    all_events: &'a [EventRecord],
    event: &EventRecord,
) -> Vec<&'a EventRecord> {
    let mut recent: Vec<&EventRecord> = all_events
        .iter()
        .filter(|other| {
            other.event_id != event.event_id && other.venue_id == event.venue_id && {
                let delta = (event.date - other.date).num_days();
                (0..=RECENT_DAYS).contains(&delta)
            }
        })
        .collect();
    recent.sort_by(|a, b| a.date.cmp(&b.date).then(a.event_id.cmp(&b.event_id)));
    recent
}

fn extract_json_object(reply: &str) -> Result<MobilityContext> {
    let start = reply.find('{');
    let end = reply.rfind('}');
    let (Some(start), Some(end)) = (start, end) else {
        return Err(Error::AgentJson {
            message: "no JSON object in reply".into(),
            reply: reply.to_string(),
        });
    };
    serde_json::from_str(&reply[start..=end]).map_err(|e| Error::AgentJson {
        message: e.to_string(),
        reply: reply.to_string(),
    })
}

pub fn run_mobility_analyzer(
    info: &BasicEventInfo,
    event: &EventRecord,
    recent: &[&EventRecord],
    social: &SocialAnalysis,
    logic: &LogicStore,
    backend: &dyn CompletionBackend,
) -> Result<MobilityContext> {
    if logic.logic_global.trim().is_empty() {
        return Err(Error::Validation(
            "mobility analyzer needs a nonempty global screening logic".into(),
        ));
    }
    let recent_block = if recent.is_empty() {
        String::new()
    } else {
        let mut block = String::from("Recent events at this venue:\n");
        for r in recent {
            block.push_str(&format!(
                "- {}: {} ({})\n",
                r.date,
                r.categories
                    .iter()
                    .map(|c| c.label())
                    .collect::<Vec<_>>()
                    .join(", "),
                r.event_id
            ));
        }
        block.push('\n');
        block
    };
    let venue_logic = logic.venue_logic(&event.venue_id).unwrap_or("");
    let logic_text = if venue_logic.is_empty() {
        logic.logic_global.clone()
    } else {
        format!(
            "{}\n\nVenue-specific guidance for {}:\n{}",
            logic.logic_global,
            venue_display_name(event),
            venue_logic
        )
    };
    let prompt = render_template(
        MOBILITY_ANALYSIS_TEMPLATE,
        &[
            ("basic_event_information", info.render_block().as_str()),
            ("recent_events_block", recent_block.as_str()),
            (
                "social_media_analysis",
                format!(
                    "Attention: {}\nParticipation: {}\nSentiment: {}\nTopics: {}",
                    social.attention, social.participation, social.sentiment, social.topics
                )
                .as_str(),
            ),
            ("logic", logic_text.as_str()),
        ],
    );
    let req = CompletionRequest::new(PromptKind::MobilityAnalysis, prompt)
        .with("event_type", &info.event_type)
        .with("event_time", &info.event_time)
        .with("scale_importance", &info.scale_importance)
        .with("attention", &social.attention)
        .with("participation", &social.participation)
        .with("venue_name", venue_display_name(event))
        .with("logic_global", &logic.logic_global)
        .with("logic_venue", venue_logic)
        .with("recent_count", recent.len().to_string());
    complete_with_reflection(backend, req, |reply| extract_json_object(reply))
}

/// Everything one event's pipeline run produces.
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub info: BasicEventInfo,
    pub queries: Vec<QueryAst>,
    pub matched: Vec<Tweet>,
    pub social: SocialAnalysis,
    pub mobility: MobilityContext,
    pub context: TextContext,
}

/// The retrieval window: tweets from the 30 days preceding the event.
pub fn tweets_preceding<'a>(tweets: &'a [Tweet], event: &EventRecord) -> Vec<&'a Tweet> {
    let from = event.start_time - chrono::Duration::days(30);
    tweets
        .iter()
        .filter(|t| t.created_at >= from && t.created_at < event.start_time)
        .collect()
}

/// EI -> TA -> MA for one event day.
pub fn run_event_pipeline(
    event: &EventRecord,
    all_events: &[EventRecord],
    tweets: &[Tweet],
    logic: &LogicStore,
    backend: &dyn CompletionBackend,
) -> Result<PipelineOutput> {
    let info = run_event_info_extractor(event, backend)?;
    let queries = build_queries(&info, backend)?;
    let window: Vec<Tweet> = tweets_preceding(tweets, event).into_iter().cloned().collect();
    let (social, matched) = run_tweet_analyzer(&info, &window, &queries, backend)?;
    let recent = recent_proximate_events(all_events, event);
    let mobility = run_mobility_analyzer(&info, event, &recent, &social, logic, backend)?;
    let context = mobility.clone().into_text_context(&event.event_id);
    Ok(PipelineOutput {
        info,
        queries,
        matched,
        social,
        mobility,
        context,
    })
}

fn worst_key(stats: &[crate::agents::stats::BucketStat]) -> String {
    stats
        .iter()
        .max_by(|a, b| {
            a.mae
                .partial_cmp(&b.mae)
                .unwrap()
                .then_with(|| b.key.cmp(&a.key))
        })
        .map(|s| s.key.clone())
        .unwrap_or_default()
}

/// Evaluator pass: revise the global screening logic from the error
/// statistics, plus a venue-specific revision per flagged venue. The
/// store is only mutated after every backend call has succeeded.
pub fn run_evaluator(
    stats: &ErrorStats,
    store: &mut LogicStore,
    backend: &dyn CompletionBackend,
) -> Result<u64> {
    if stats.total_windows == 0 {
        return Err(Error::Validation(
            "evaluator needs nonempty error statistics".into(),
        ));
    }
    let global_prompt = render_template(
        EVALUATOR_GLOBAL_TEMPLATE,
        &[
            ("errors_by_weekday", ErrorStats::render_breakdown(&stats.by_weekday).as_str()),
            ("errors_by_time_of_day", ErrorStats::render_breakdown(&stats.by_hour).as_str()),
            ("errors_by_event_type", ErrorStats::render_breakdown(&stats.by_category).as_str()),
            ("logic_global", store.logic_global.as_str()),
        ],
    );
    let global_req = CompletionRequest::new(PromptKind::EvaluatorGlobal, global_prompt)
        .with("worst_weekday", worst_key(&stats.by_weekday))
        .with("worst_hour", format!("{}:00", worst_key(&stats.by_hour)))
        .with("worst_category", worst_key(&stats.by_category))
        .with("logic_global", &store.logic_global);
    let new_global = backend.complete(&global_req)?;

    let mut venue_updates = BTreeMap::new();
    for venue in &stats.flagged_venues {
        let bucket = stats
            .by_venue
            .iter()
            .find(|b| &b.key == venue)
            .expect("flagged venue has a bucket");
        let profile = format!(
            "MAE {:.3} over {} windows (overall {:.3}); worst buckets: {}",
            bucket.mae,
            bucket.windows,
            stats.overall_mae,
            stats.worst.join(", ")
        );
        let current = store.venue_logic(venue).unwrap_or("(none yet)");
        let prompt = render_template(
            EVALUATOR_VENUE_TEMPLATE,
            &[
                ("venue_name", venue.as_str()),
                ("high_error_profile", profile.as_str()),
                ("logic_venue", current),
            ],
        );
        let req = CompletionRequest::new(PromptKind::EvaluatorVenue, prompt)
            .with("venue_name", venue)
            .with("high_error_profile", profile)
            .with("logic_venue", current);
        let reply = backend.complete(&req)?;
        venue_updates.insert(venue.clone(), reply);
    }

    store.apply_update(Some(new_global), venue_updates);
    Ok(store.revision)
}
