use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{FactualityLevel, RatingDb, SourceCategory};
use crate::transcript::Transcript;

/// Citation volume and exposure figures for one assistant, or for the whole
/// run when `assistant` is `None`. Shares are fractions; they are `None` when
/// their denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitationStats {
    pub assistant: Option<String>,
    pub chats: usize,
    pub total_sources: usize,
    pub unique_domains: usize,
    pub avg_sources_per_chat: Option<f64>,
    pub refused: usize,
    pub avg_response_words: Option<f64>,
    pub fact_checking_citation_share: Option<f64>,
    pub chats_with_fact_checking_share: Option<f64>,
    pub chats_with_disinformation_share: Option<f64>,
    pub social_media_citation_share: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn stats_of(assistant: Option<String>, run: &[&Transcript], db: &RatingDb) -> CitationStats {
    let mut total = 0;
    let mut domains = BTreeSet::new();
    let mut refused = 0;
    let mut words = 0;
    let mut fc_citations = 0;
    let mut social = 0;
    let mut chats_fc = 0;
    let mut chats_disinfo = 0;
    for t in run {
        total += t.citations.len();
        refused += usize::from(t.refused);
        words += t.response_text.split_whitespace().count();
        let mut has_fc = false;
        let mut has_disinfo = false;
        for c in &t.citations {
            domains.insert(c.domain.as_str());
            match db.lookup(&c.domain).category {
                SourceCategory::FactChecking => {
                    fc_citations += 1;
                    has_fc = true;
                }
                SourceCategory::SocialMedia => social += 1,
                SourceCategory::Disinformation => has_disinfo = true,
                _ => {}
            }
        }
        chats_fc += usize::from(has_fc);
        chats_disinfo += usize::from(has_disinfo);
    }
    let chats = run.len();
    CitationStats {
        assistant,
        chats,
        total_sources: total,
        unique_domains: domains.len(),
        avg_sources_per_chat: ratio(total, chats),
        refused,
        avg_response_words: ratio(words, chats),
        fact_checking_citation_share: ratio(fc_citations, total),
        chats_with_fact_checking_share: ratio(chats_fc, chats),
        chats_with_disinformation_share: ratio(chats_disinfo, chats),
        social_media_citation_share: ratio(social, total),
    }
}

/// One record per assistant (sorted by id) followed by the run-wide record.
pub fn citation_stats(run: &[Transcript], db: &RatingDb) -> Vec<CitationStats> {
    let mut by_assistant: BTreeMap<&str, Vec<&Transcript>> = BTreeMap::new();
    for t in run {
        by_assistant.entry(&t.assistant_id).or_default().push(t);
    }
    let mut out: Vec<_> = by_assistant
        .into_iter()
        .map(|(a, ts)| stats_of(Some(a.to_string()), &ts, db))
        .collect();
    out.push(stats_of(None, &run.iter().collect::<Vec<_>>(), db));
    out
}

/// Histogram of cited sources over the eight factuality levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Distribution {
    pub assistant: Option<String>,
    pub counts: BTreeMap<FactualityLevel, u64>,
}

impl Distribution {
    fn empty(assistant: Option<String>) -> Self {
        Self {
            assistant,
            counts: FactualityLevel::ALL.iter().map(|&l| (l, 0)).collect(),
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn count(&self, level: FactualityLevel) -> u64 {
        self.counts.get(&level).copied().unwrap_or(0)
    }

    /// Zero for every level of an empty histogram.
    pub fn share(&self, level: FactualityLevel) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.count(level) as f64 / total as f64
        }
    }
}

/// Per-assistant histograms (sorted by id) followed by the run-wide one.
pub fn factuality_distribution(run: &[Transcript], db: &RatingDb) -> Vec<Distribution> {
    let mut per: BTreeMap<&str, Distribution> = BTreeMap::new();
    let mut overall = Distribution::empty(None);
    for t in run {
        let d = per
            .entry(&t.assistant_id)
            .or_insert_with(|| Distribution::empty(Some(t.assistant_id.clone())));
        for c in &t.citations {
            let level = db.lookup(&c.domain).factuality;
            *d.counts.entry(level).or_default() += 1;
            *overall.counts.entry(level).or_default() += 1;
        }
    }
    let mut out: Vec<_> = per.into_values().collect();
    out.push(overall);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Role;
    use crate::transcript::Citation;

    fn db() -> RatingDb {
        RatingDb::from_reader(
            "domain,factuality,category,origin\n\
             checks.org,High,FactChecking,CuratedList\n\
             fake.ru,VeryLow,Disinformation,CuratedList\n\
             social.com,Mixed,SocialMedia,CuratedList\n\
             low.org,Low,Other,MBFC\n"
                .as_bytes(),
        )
        .unwrap()
    }

    fn chat(assistant: &str, text: &str, domains: &[&str]) -> Transcript {
        Transcript {
            assistant_id: assistant.into(),
            claim_id: "H1".into(),
            topic: None,
            role: Role::FactChecker,
            template_id: 1,
            response_text: text.into(),
            segments: Vec::new(),
            citations: domains
                .iter()
                .enumerate()
                .map(|(i, d)| Citation::new(i as u32 + 1, &format!("https://{d}/a")).unwrap())
                .collect(),
            refused: text.is_empty(),
            thinking_mode: false,
        }
    }

    #[test]
    fn stats_count_chats_and_shares() {
        let mut run: Vec<_> = (0..10)
            .map(|i| {
                let domains: Vec<&str> = match i {
                    0..=2 => vec!["fake.ru", "checks.org", "x.org", "y.org", "z.org", "w.org"],
                    _ => vec!["checks.org", "social.com", "x.org", "y.org", "z.org", "w.org"],
                };
                chat("a", "one two three four", &domains)
            })
            .collect();
        run[9].response_text.clear();
        run[9].refused = true;
        let stats = citation_stats(&run, &db());
        assert_eq!(stats.len(), 2);
        let s = &stats[1];
        assert_eq!(s.total_sources, 60);
        assert_eq!(s.avg_sources_per_chat, Some(6.0));
        assert_eq!(s.chats_with_disinformation_share, Some(0.3));
        assert_eq!(s.chats_with_fact_checking_share, Some(1.0));
        assert_eq!(s.fact_checking_citation_share, Some(10.0 / 60.0));
        assert_eq!(s.social_media_citation_share, Some(7.0 / 60.0));
        assert_eq!(s.unique_domains, 7);
        assert_eq!(s.refused, 1);
        assert_eq!(s.avg_response_words, Some(3.6));
    }

    #[test]
    fn distribution_shares() {
        let run = vec![chat("a", "x", &["checks.org"; 4]), chat("a", "x", &["low.org"])];
        let d = &factuality_distribution(&run, &db())[0];
        assert_eq!(d.share(FactualityLevel::High), 0.8);
        assert_eq!(d.share(FactualityLevel::Low), 0.2);
        assert_eq!(d.total(), 5);
        let empty = factuality_distribution(&[], &db());
        assert_eq!(empty.len(), 1);
        assert_eq!(empty[0].counts.len(), 8);
        assert!(FactualityLevel::ALL.iter().all(|&l| empty[0].share(l) == 0.0));
    }
}
