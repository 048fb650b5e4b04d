use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::labels::{Technique, ToolLabel};

use super::{CorpusError, CorpusRecord};

fn pct(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 / total as f64 * 100.0
    }
}

/// Counts and percentages for one group of apps. Error-tagged records count
/// toward `total` and `errors` only; every percentage excludes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub total: usize,
    pub analysed: usize,
    pub errors: usize,
    pub obfuscated: usize,
    pub non_obfuscated: usize,
    pub obfuscated_pct: f64,
    /// Share of obfuscated apps per tool; empty when nothing is obfuscated.
    pub tool_pcts: BTreeMap<ToolLabel, f64>,
    /// Share of obfuscated apps using each technique, alone or combined;
    /// empty when nothing is obfuscated.
    pub technique_pcts: BTreeMap<Technique, f64>,
    /// Share of obfuscated apps using two or more techniques.
    pub multi_technique_pct: f64,
}

impl GroupStats {
    pub fn of<'a>(records: impl IntoIterator<Item = &'a CorpusRecord>) -> Self {
        let mut total = 0;
        let mut errors = 0;
        let mut obfuscated = 0;
        let mut non_obfuscated = 0;
        let mut tools: BTreeMap<ToolLabel, usize> = BTreeMap::new();
        let mut techniques: BTreeMap<Technique, usize> = BTreeMap::new();
        let mut multi = 0;
        for r in records {
            total += 1;
            let a = &r.analysis;
            match a.obfuscated {
                _ if a.is_error() => errors += 1,
                None => errors += 1,
                Some(false) => non_obfuscated += 1,
                Some(true) => {
                    obfuscated += 1;
                    if let Some(tool) = a.tool {
                        *tools.entry(tool).or_default() += 1;
                    }
                    if let Some(set) = a.techniques {
                        for t in set.iter() {
                            *techniques.entry(t).or_default() += 1;
                        }
                        if set.len() >= 2 {
                            multi += 1;
                        }
                    }
                }
            }
        }
        let (tool_pcts, technique_pcts) = if obfuscated == 0 {
            (BTreeMap::new(), BTreeMap::new())
        } else {
            (
                ToolLabel::ALL
                    .into_iter()
                    .map(|t| (t, pct(tools.get(&t).copied().unwrap_or(0), obfuscated)))
                    .collect(),
                Technique::ALL
                    .into_iter()
                    .map(|t| (t, pct(techniques.get(&t).copied().unwrap_or(0), obfuscated)))
                    .collect(),
            )
        };
        let analysed = obfuscated + non_obfuscated;
        GroupStats {
            total,
            analysed,
            errors,
            obfuscated,
            non_obfuscated,
            obfuscated_pct: pct(obfuscated, analysed),
            tool_pcts,
            technique_pcts,
            multi_technique_pct: pct(multi, obfuscated),
        }
    }
}

fn group_by<K: Ord>(
    records: &[CorpusRecord],
    key: impl Fn(&CorpusRecord) -> K,
) -> BTreeMap<K, GroupStats> {
    let mut groups: BTreeMap<K, Vec<&CorpusRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(key(r)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(k, rs)| (k, GroupStats::of(rs)))
        .collect()
}

/// Per `last_update_year`; years without apps are absent.
pub fn aggregate_by_year(records: &[CorpusRecord]) -> BTreeMap<i32, GroupStats> {
    group_by(records, |r| r.metadata.last_update_year)
}

pub fn aggregate_by_genre(records: &[CorpusRecord]) -> BTreeMap<String, GroupStats> {
    group_by(records, |r| r.metadata.genre.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DeveloperBucket {
    #[serde(rename = ">80%")]
    AtLeast80,
    #[serde(rename = "60–80%")]
    From60,
    #[serde(rename = "40–60%")]
    From40,
    #[serde(rename = "<40%")]
    Below40,
    #[serde(rename = "none")]
    None,
}

impl DeveloperBucket {
    pub const ALL: [DeveloperBucket; 5] = [
        DeveloperBucket::AtLeast80,
        DeveloperBucket::From60,
        DeveloperBucket::From40,
        DeveloperBucket::Below40,
        DeveloperBucket::None,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DeveloperBucket::AtLeast80 => ">80%",
            DeveloperBucket::From60 => "60–80%",
            DeveloperBucket::From40 => "40–60%",
            DeveloperBucket::Below40 => "<40%",
            DeveloperBucket::None => "none",
        }
    }
}

/// Band of an obfuscated share `obfuscated / analysed`, with lower-closed
/// bands: 0 is `none`, then (0, 40), [40, 60), [60, 80), [80, 100].
/// Compared in integers so that e.g. 8 of 10 lands exactly on 80%.
pub fn bucket_for(obfuscated: usize, analysed: usize) -> DeveloperBucket {
    let o = obfuscated as u128 * 100;
    let a = analysed as u128;
    if obfuscated == 0 {
        DeveloperBucket::None
    } else if o >= 80 * a {
        DeveloperBucket::AtLeast80
    } else if o >= 60 * a {
        DeveloperBucket::From60
    } else if o >= 40 * a {
        DeveloperBucket::From40
    } else {
        DeveloperBucket::Below40
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeveloperDetail {
    pub developer: String,
    pub apps: usize,
    pub obfuscated: usize,
    pub obfuscated_pct: f64,
    pub bucket: DeveloperBucket,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCount {
    pub bucket: DeveloperBucket,
    pub developers: usize,
}

/// Developers with exactly one analysed app.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingleAppSummary {
    pub developers: usize,
    pub obfuscated: usize,
    pub tool_counts: BTreeMap<ToolLabel, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeveloperReport {
    pub top_n: usize,
    /// All five buckets, from `>80%` down to `none`.
    pub buckets: Vec<BucketCount>,
    /// The ranked top developers.
    pub developers: Vec<DeveloperDetail>,
    pub single_app: SingleAppSummary,
}

/// Ranks developers by analysed app count (descending, ties by name) and
/// buckets the top `top_n`. Error-tagged records are ignored.
pub fn developer_buckets(records: &[CorpusRecord], top_n: usize) -> Result<DeveloperReport, CorpusError> {
    if top_n == 0 {
        return Err(CorpusError::InvalidTopN);
    }
    #[derive(Default)]
    struct Tally {
        apps: usize,
        obfuscated: usize,
        tools: Vec<ToolLabel>,
    }
    let mut by_dev: HashMap<&str, Tally> = HashMap::new();
    for r in records {
        let Some(obf) = r.analysis.obfuscated.filter(|_| !r.analysis.is_error()) else {
            continue;
        };
        let t = by_dev.entry(r.metadata.developer.as_str()).or_default();
        t.apps += 1;
        if obf {
            t.obfuscated += 1;
            if let Some(tool) = r.analysis.tool {
                t.tools.push(tool);
            }
        }
    }

    let mut single_app = SingleAppSummary {
        developers: 0,
        obfuscated: 0,
        tool_counts: ToolLabel::ALL.into_iter().map(|t| (t, 0)).collect(),
    };
    for t in by_dev.values().filter(|t| t.apps == 1) {
        single_app.developers += 1;
        single_app.obfuscated += t.obfuscated;
        for tool in &t.tools {
            *single_app.tool_counts.entry(*tool).or_default() += 1;
        }
    }

    let mut ranked: Vec<(&str, Tally)> = by_dev.into_iter().collect();
    ranked.sort_by(|a, b| b.1.apps.cmp(&a.1.apps).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(top_n);
    let developers: Vec<DeveloperDetail> = ranked
        .into_iter()
        .map(|(name, t)| DeveloperDetail {
            developer: name.to_string(),
            apps: t.apps,
            obfuscated: t.obfuscated,
            obfuscated_pct: pct(t.obfuscated, t.apps),
            bucket: bucket_for(t.obfuscated, t.apps),
        })
        .collect();
    let buckets = DeveloperBucket::ALL
        .into_iter()
        .map(|b| BucketCount {
            bucket: b,
            developers: developers.iter().filter(|d| d.bucket == b).count(),
        })
        .collect();
    Ok(DeveloperReport {
        top_n,
        buckets,
        developers,
        single_app,
    })
}

/// One row of the top-k table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKRow {
    /// `"1k"`, `"500"`, or `"<largest>+"` for the remainder row.
    pub top_k: String,
    pub total_apps: usize,
    pub obfuscation_pct: f64,
    pub proguard_pct: f64,
    pub allatori_pct: f64,
    pub dasho_pct: f64,
    pub other_pct: f64,
    pub ir_pct: f64,
    pub cf_pct: f64,
    pub se_pct: f64,
}

impl TopKRow {
    fn of(label: String, records: &[&CorpusRecord]) -> Self {
        let s = GroupStats::of(records.iter().copied());
        let tool = |t| s.tool_pcts.get(&t).copied().unwrap_or(0.0);
        let tech = |t| s.technique_pcts.get(&t).copied().unwrap_or(0.0);
        TopKRow {
            top_k: label,
            total_apps: s.total,
            obfuscation_pct: s.obfuscated_pct,
            proguard_pct: tool(ToolLabel::ProGuard),
            allatori_pct: tool(ToolLabel::Allatori),
            dasho_pct: tool(ToolLabel::DashO),
            other_pct: tool(ToolLabel::Other),
            ir_pct: tech(Technique::IR),
            cf_pct: tech(Technique::CF),
            se_pct: tech(Technique::SE),
        }
    }
}

/// `1000` becomes `"1k"`; other values print as is.
pub fn topk_label(k: usize) -> String {
    if k >= 1000 && k.is_multiple_of(1000) {
        format!("{}k", k / 1000)
    } else {
        k.to_string()
    }
}

fn rank_order(a: &CorpusRecord, b: &CorpusRecord) -> Ordering {
    let (x, y) = (&a.metadata, &b.metadata);
    y.downloads
        .cmp(&x.downloads)
        .then_with(|| y.avg_rating.total_cmp(&x.avg_rating))
        .then_with(|| y.rating_count.cmp(&x.rating_count))
        .then_with(|| x.app_id.cmp(&y.app_id))
}

/// Rows for each top-k prefix under (downloads, rating, rating count) order,
/// then one row for everything past the largest k.
pub fn rank_top_k(records: &[CorpusRecord], ks: &[usize]) -> Result<Vec<TopKRow>, CorpusError> {
    if ks.is_empty() || ks[0] == 0 || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CorpusError::InvalidKs(ks.to_vec()));
    }
    let largest = ks[ks.len() - 1];
    if largest > records.len() {
        return Err(CorpusError::KTooLarge {
            k: largest,
            available: records.len(),
        });
    }
    let mut sorted: Vec<&CorpusRecord> = records.iter().collect();
    sorted.sort_by(|a, b| rank_order(a, b));
    let mut rows: Vec<TopKRow> = ks
        .iter()
        .map(|&k| TopKRow::of(topk_label(k), &sorted[..k]))
        .collect();
    rows.push(TopKRow::of(format!("{}+", topk_label(largest)), &sorted[largest..]));
    Ok(rows)
}
