//! The boolean search-query grammar and tweet matching.
//!
//! ```text
//! query := group "AND" group
//! group := "(" term ("OR" term)* ")"
//! ```
//!
//! Keywords are case-insensitive. A term is a quoted phrase, a
//! hashtag, or any run of words up to the next OR / closing paren.
//! Errors carry the byte offset where parsing failed.

use serde::{Deserialize, Serialize};

use crate::datamodel::events::Tweet;
use crate::error::{Error, Result};

/// Exactly two OR-groups joined by AND.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryAst {
    pub event_terms: Vec<String>,
    pub location_terms: Vec<String>,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::QueryParse {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    /// Next whitespace/paren/quote-delimited word without consuming it.
    fn peek_word(&self) -> Option<(&'a str, usize)> {
        let rest = &self.src[self.pos..];
        let mut end = 0;
        for c in rest.chars() {
            if c.is_whitespace() || c == '(' || c == ')' || c == '"' {
                break;
            }
            end += c.len_utf8();
        }
        (end > 0).then_some((&rest[..end], end))
    }

    fn group(&mut self) -> Result<Vec<String>> {
        self.skip_ws();
        if !self.eat('(') {
            return self.err("expected '('");
        }
        let mut terms = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                None => return self.err("unbalanced parentheses: expected ')'"),
                Some(')') => {
                    if terms.is_empty() {
                        return self.err("empty group");
                    }
                    self.pos += 1;
                    return Ok(terms);
                }
                Some('"') => {
                    self.pos += 1;
                    let start = self.pos;
                    let Some(close) = self.src[start..].find('"') else {
                        self.pos = self.src.len();
                        return self.err("unterminated quote");
                    };
                    let term = self.src[start..start + close].trim().to_string();
                    self.pos = start + close + 1;
                    if term.is_empty() {
                        return self.err("empty quoted term");
                    }
                    terms.push(term);
                    self.expect_or_or_close()?;
                }
                Some(_) => {
                    // bare term: words up to OR or ')'
                    let mut words: Vec<&str> = Vec::new();
                    loop {
                        self.skip_ws();
                        match self.peek() {
                            Some(')') | None => break,
                            Some('(') => return self.err("unexpected '(' inside group"),
                            Some('"') => break,
                            _ => {}
                        }
                        let Some((word, len)) = self.peek_word() else {
                            break;
                        };
                        if word.eq_ignore_ascii_case("or") {
                            break;
                        }
                        if word.eq_ignore_ascii_case("and") {
                            return self.err("'AND' not allowed inside a group");
                        }
                        self.pos += len;
                        words.push(word);
                    }
                    if words.is_empty() {
                        return self.err("expected term");
                    }
                    terms.push(words.join(" "));
                    self.expect_or_or_close()?;
                }
            }
        }
    }

    /// After a term: either OR (consume it) or ')' (leave for caller).
    fn expect_or_or_close(&mut self) -> Result<()> {
        self.skip_ws();
        match self.peek() {
            Some(')') => Ok(()),
            None => self.err("unbalanced parentheses: expected ')'"),
            _ => {
                if let Some((word, len)) = self.peek_word() {
                    if word.eq_ignore_ascii_case("or") {
                        self.pos += len;
                        self.skip_ws();
                        return match self.peek() {
                            None | Some(')') => self.err("expected term"),
                            _ => Ok(()),
                        };
                    }
                }
                Ok(())
            }
        }
    }
}

pub fn parse_query(s: &str) -> Result<QueryAst> {
    let mut p = Parser { src: s, pos: 0 };
    let event_terms = p.group()?;
    p.skip_ws();
    match p.peek_word() {
        Some((word, len)) if word.eq_ignore_ascii_case("and") => p.pos += len,
        _ => return p.err("expected 'AND' between groups"),
    }
    let location_terms = p.group()?;
    p.skip_ws();
    if p.pos != s.len() {
        return p.err("trailing input after second group");
    }
    Ok(QueryAst {
        event_terms,
        location_terms,
    })
}

/// Canonical text form; terms containing whitespace are quoted so the
/// output reparses to an identical AST.
pub fn render(ast: &QueryAst) -> String {
    let fmt_group = |terms: &[String]| {
        let inner: Vec<String> = terms
            .iter()
            .map(|t| {
                if t.chars().any(char::is_whitespace) {
                    format!("\"{t}\"")
                } else {
                    t.clone()
                }
            })
            .collect();
        format!("({})", inner.join(" OR "))
    };
    format!(
        "{} AND {}",
        fmt_group(&ast.event_terms),
        fmt_group(&ast.location_terms)
    )
}

fn normalize(text: &str) -> String {
    text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

fn contains_term(normalized_text: &str, term: &str) -> bool {
    normalized_text.contains(&normalize(term))
}

/// A tweet matches a query when each of its two groups has at least
/// one term contained (case-insensitively) in the tweet text.
pub fn query_matches(ast: &QueryAst, text: &str) -> bool {
    let norm = normalize(text);
    ast.event_terms.iter().any(|t| contains_term(&norm, t))
        && ast.location_terms.iter().any(|t| contains_term(&norm, t))
}

/// Tweets matched by any query, deduplicated by normalized text and
/// returned in normalized-text order (set semantics).
pub fn match_tweets(tweets: &[Tweet], queries: &[QueryAst]) -> Vec<Tweet> {
    let mut seen = std::collections::BTreeMap::new();
    for tweet in tweets {
        let norm = normalize(&tweet.text);
        if seen.contains_key(&norm) {
            continue;
        }
        if queries.iter().any(|q| query_matches(q, &tweet.text)) {
            seen.insert(norm, tweet.clone());
        }
    }
    seen.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    #[test]
    fn minimal_query() {
        let ast = parse_query("(a) AND (b)").unwrap();
        assert_eq!(ast.event_terms, vec!["a"]);
        assert_eq!(ast.location_terms, vec!["b"]);
    }

    #[test]
    fn multiword_phrases_and_hashtags() {
        let ast = parse_query("(lakers OR nba) AND (crypto arena OR LA)").unwrap();
        assert_eq!(ast.event_terms, vec!["lakers", "nba"]);
        assert_eq!(ast.location_terms, vec!["crypto arena", "LA"]);

        let ast = parse_query("(#finals OR \"big game\") and (downtown)").unwrap();
        assert_eq!(ast.event_terms, vec!["#finals", "big game"]);
        assert_eq!(ast.location_terms, vec!["downtown"]);
    }

    #[test]
    fn truncated_query_errors_at_offset_ten() {
        match parse_query("(lakers OR") {
            Err(Error::QueryParse { offset, .. }) => assert_eq!(offset, 10),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_queries_report_positions() {
        for (q, expect_at) in [
            ("lakers AND (LA)", 0usize),
            ("() AND (LA)", 1),
            ("(a) (b)", 4),
            ("(a) AND (b) trailing", 12),
            ("(a OR ) AND (b)", 6),
        ] {
            match parse_query(q) {
                Err(Error::QueryParse { offset, .. }) => {
                    assert_eq!(offset, expect_at, "query {q:?}")
                }
                other => panic!("query {q:?}: expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn render_parse_round_trip() {
        let queries = [
            "(a) AND (b)",
            "(lakers OR nba OR #finals) AND (crypto arena OR LA)",
            "(\"opening ceremony\" OR parade) and (harbor center OR \"los angeles\")",
        ];
        for q in queries {
            let ast = parse_query(q).unwrap();
            let rendered = render(&ast);
            let again = parse_query(&rendered).unwrap();
            assert_eq!(ast, again, "round trip failed for {q:?}");
            assert_eq!(render(&again), rendered);
        }
    }

    fn tw(id: usize, text: &str) -> Tweet {
        Tweet {
            id: format!("t{id}"),
            text: text.to_string(),
            created_at: Utc.with_ymd_and_hms(2019, 3, 1, 12, 0, 0).unwrap(),
        }
    }

    #[test]
    fn matching_needs_both_groups() {
        let q = parse_query("(a OR b OR c) AND (x OR y)").unwrap();
        assert!(query_matches(&q, "b something y"));
        // containment is substring-based, so probe with letter-free text
        assert!(!query_matches(&q, "b group missing second"));
        assert!(!query_matches(&q, "x group missing first"));
    }

    #[test]
    fn match_is_order_independent_and_deduplicated() {
        let q = vec![parse_query("(game) AND (arena)").unwrap()];
        let tweets = vec![
            tw(0, "Game tonight at the arena"),
            tw(1, "game TONIGHT at   the arena"),
            tw(2, "nothing relevant"),
            tw(3, "Arena hosting the big game"),
        ];
        let a = match_tweets(&tweets, &q);
        let mut reversed = tweets.clone();
        reversed.reverse();
        let b = match_tweets(&reversed, &q);
        let texts_a: Vec<String> = a.iter().map(|t| normalize(&t.text)).collect();
        let texts_b: Vec<String> = b.iter().map(|t| normalize(&t.text)).collect();
        assert_eq!(texts_a, texts_b);
        assert_eq!(a.len(), 2); // 0 and 1 normalize identically
    }

    #[test]
    fn empty_tweet_list_matches_nothing() {
        let q = vec![parse_query("(a) AND (b)").unwrap()];
        assert!(match_tweets(&[], &q).is_empty());
    }

    /// Brute-force oracle: double loop over tweets and queries with
    /// naive containment.
    #[test]
    fn twenty_tweet_fixture_matches_oracle() {
        let queries = vec![
            parse_query("(game OR match) AND (vista arena OR los angeles)").unwrap(),
            parse_query("(concert) AND (riverside bowl)").unwrap(),
        ];
        let tweets: Vec<Tweet> = (0..20)
            .map(|i| {
                let text = match i % 5 {
                    0 => format!("big GAME at Vista Arena number {i}"),
                    1 => format!("concert vibes at riverside bowl {i}"),
                    2 => format!("random chatter {i}"),
                    3 => format!("match day in Los Angeles {i}"),
                    _ => format!("concert somewhere else {i}"),
                };
                tw(i, &text)
            })
            .collect();
        let got: Vec<String> = match_tweets(&tweets, &queries)
            .iter()
            .map(|t| t.id.clone())
            .collect();
        let mut want: Vec<(String, String)> = tweets
            .iter()
            .filter(|t| {
                let lower = normalize(&t.text);
                queries.iter().any(|q| {
                    q.event_terms.iter().any(|term| lower.contains(&normalize(term)))
                        && q
                            .location_terms
                            .iter()
                            .any(|term| lower.contains(&normalize(term)))
                })
            })
            .map(|t| (normalize(&t.text), t.id.clone()))
            .collect();
        want.sort();
        let want_ids: Vec<String> = want.into_iter().map(|(_, id)| id).collect();
        assert_eq!(got, want_ids);
    }
}
