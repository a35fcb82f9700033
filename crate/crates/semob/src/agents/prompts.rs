//! Prompt templates and the section-parsing contract.
//!
//! Templates ship as text files with `{placeholder}` slots. Replies
//! are parsed by exact match on the numbered section titles, which are
//! part of the prompt contract.

use crate::error::{Error, Result};

pub const EVENT_INFO_TEMPLATE: &str = include_str!("../../templates/event_info.txt");
pub const TWEET_QUERIES_TEMPLATE: &str = include_str!("../../templates/tweet_queries.txt");
pub const TWEET_ANALYSIS_TEMPLATE: &str = include_str!("../../templates/tweet_analysis.txt");
pub const MOBILITY_ANALYSIS_TEMPLATE: &str =
    include_str!("../../templates/mobility_analysis.txt");
pub const EVALUATOR_GLOBAL_TEMPLATE: &str =
    include_str!("../../templates/evaluator_global.txt");
pub const EVALUATOR_VENUE_TEMPLATE: &str = include_str!("../../templates/evaluator_venue.txt");

pub const EI_SECTIONS: [&str; 6] = [
    "Event Type",
    "Event Venue and Location Information",
    "Event Time",
    "Event Content",
    "Target Audience",
    "Event Scale or Importance",
];

pub const TA_SECTIONS: [&str; 4] = [
    "Social Media Attention and Reasons",
    "Public Participation Willingness and Audience Characteristics with Reasons",
    "Sentiment Distribution and Reasons",
    "Main Discussion Topics",
];

/// Substitute `{name}` slots. Unknown braces (e.g. JSON examples in
/// the template body) are left untouched.
pub fn render_template(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in slots {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

/// Split a reply into the given numbered sections ("1. Title: body").
/// A missing heading is a structured-parse error naming the section.
pub fn parse_numbered_sections(reply: &str, titles: &[&str]) -> Result<Vec<String>> {
    let mut positions = Vec::with_capacity(titles.len());
    for (i, title) in titles.iter().enumerate() {
        let heading = format!("{}. {}:", i + 1, title);
        match reply.find(&heading) {
            Some(pos) => positions.push((pos, pos + heading.len())),
            None => {
                return Err(Error::StructuredParse {
                    section: title.to_string(),
                    reply: reply.to_string(),
                })
            }
        }
    }
    let mut sections = Vec::with_capacity(titles.len());
    for (i, &(_, body_start)) in positions.iter().enumerate() {
        let body_end = positions
            .get(i + 1)
            .map(|&(next_start, _)| next_start)
            .unwrap_or(reply.len());
        sections.push(reply[body_start..body_end].trim().to_string());
    }
    Ok(sections)
}
