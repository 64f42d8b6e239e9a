//! End-to-end audit of a crawl result and its serializable report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{detect_violations, score_usability, AnalysisError, ReachabilityMode, UsabilityGap, UsabilityScorecard, Violation, DEFAULT_GAP_RATIO};
use crate::crawler::{evaluate_users, CrawlConfig, CrawlResult, CrawlStats};
use crate::dot::Overlay;
use crate::graph::{Edge, StateGraph, StateId};
use crate::users::{builtin_models, LowVisionThresholds, UserModel, OMNI};

pub const SCHEMA_VERSION: &str = "1.0";
pub const TOOL_NAME: &str = "demodocus";

#[derive(Debug, Clone)]
pub struct AuditOptions {
    /// Realistic user without a disability that the others are compared to.
    pub baseline: UserModel,
    pub users: Vec<UserModel>,
    pub mode: ReachabilityMode,
    pub gap_ratio: f64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions {
            baseline: UserModel::non_disabled(),
            users: builtin_models(),
            mode: ReachabilityMode::Transitive,
            gap_ratio: DEFAULT_GAP_RATIO,
        }
    }
}

impl AuditOptions {
    /// Baseline first, then the requested users without repeats.
    pub fn all_users(&self) -> Vec<UserModel> {
        let mut seen = BTreeSet::from([self.baseline.name.clone()]);
        let mut out = vec![self.baseline.clone()];
        for u in &self.users {
            if seen.insert(u.name.clone()) {
                out.push(u.clone());
            }
        }
        out
    }

    /// Users compared against the baseline for violations.
    pub fn disability_models(&self) -> impl Iterator<Item = &UserModel> {
        self.users
            .iter()
            .filter(|u| u.name != OMNI && u.name != self.baseline.name)
    }
}

#[derive(Debug, Clone)]
pub struct Audit {
    /// The omni graph with per-user scores and access paths attached.
    pub graph: StateGraph,
    pub subgraphs: BTreeMap<String, StateGraph>,
    pub violations: Vec<Violation>,
    pub scorecard: UsabilityScorecard,
    pub truncated: bool,
    pub stats: CrawlStats,
    pub mode: ReachabilityMode,
    pub baseline: String,
    pub users: Vec<String>,
}

pub fn audit(result: CrawlResult, opts: &AuditOptions) -> Result<Audit, AnalysisError> {
    let mut graph = result.graph;
    let all = opts.all_users();
    let subgraphs = evaluate_users(&mut graph, &all);
    let g_n = &subgraphs[&opts.baseline.name];
    let mut violations = Vec::new();
    for d in opts.disability_models() {
        violations.extend(detect_violations(&graph, g_n, &subgraphs[&d.name], d, opts.mode)?);
    }
    let scorecard = score_usability(&graph, &all, &opts.baseline.name, opts.gap_ratio);
    Ok(Audit {
        graph,
        subgraphs,
        violations,
        scorecard,
        truncated: result.truncated,
        stats: result.stats,
        mode: opts.mode,
        baseline: opts.baseline.name.clone(),
        users: all.iter().map(|u| u.name.clone()).collect(),
    })
}

fn omni_index(g: &StateGraph, e: &Edge) -> Option<usize> {
    g.edges
        .iter()
        .position(|o| o.identity() == e.identity() && o.to == e.to)
}

impl Audit {
    pub fn violations_for(&self, user: &str) -> BTreeSet<StateId> {
        self.violations
            .iter()
            .filter(|v| v.disabled_user == user)
            .map(|v| v.state)
            .collect()
    }

    /// DOT decoration for `user`; `None` if the user was not evaluated.
    pub fn overlay(&self, user: &str) -> Option<Overlay> {
        let sub = self.subgraphs.get(user)?;
        let scores = self.graph.state_ids().into_iter().map(|id| (id, self.scorecard.score(user, id))).collect();
        let usable: BTreeSet<usize> = sub.edges.iter().filter_map(|e| omni_index(&self.graph, e)).collect();
        Some(Overlay {
            user: user.to_string(),
            scores,
            violations: self.violations_for(user),
            blocked_edges: (0..self.graph.edges.len()).filter(|i| !usable.contains(i)).collect(),
        })
    }

    pub fn report(&self, input: &str, driver: &str, crawl: &CrawlConfig, low_vision: LowVisionThresholds) -> Report {
        let g = &self.graph;
        let states = g
            .states
            .values()
            .map(|s| StateRecord {
                id: s.id,
                targets: s.targets.len(),
                unstable_regions: s.template.unstable_paths.iter().map(|p| p.to_string()).collect(),
            })
            .collect();
        let edges = g
            .edges
            .iter()
            .enumerate()
            .map(|(i, e)| EdgeRecord {
                index: i,
                from: e.from,
                to: e.to,
                action: e.action.to_string(),
                target: g.target_label(e),
                scores: e.scores.iter().map(|(u, s)| (u.clone(), s.total)).collect(),
            })
            .collect();
        let users = self
            .subgraphs
            .iter()
            .map(|(name, sub)| {
                let mut edges: Vec<usize> = sub.edges.iter().filter_map(|e| omni_index(g, e)).collect();
                edges.sort_unstable();
                (
                    name.clone(),
                    UserSummary {
                        states: sub.state_ids().into_iter().collect(),
                        edges,
                    },
                )
            })
            .collect();
        let mut scorecard = Vec::new();
        for (user, per_state) in &self.scorecard.scores {
            for (id, entry) in per_state {
                let path = entry.path.as_ref();
                scorecard.push(ScoreRecord {
                    user: user.clone(),
                    state: *id,
                    score: entry.score,
                    path: path.map(|p| p.states.clone()).unwrap_or_default(),
                    interactions: path
                        .map(|p| p.edges.iter().map(|&i| g.edge_label(&g.edges[i])).collect())
                        .unwrap_or_default(),
                });
            }
        }
        Report {
            schema_version: SCHEMA_VERSION.to_string(),
            tool: ToolInfo {
                name: TOOL_NAME.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
            input: input.to_string(),
            driver: driver.to_string(),
            config: ReportConfig {
                crawl: crawl.clone(),
                baseline: self.baseline.clone(),
                users: self.users.clone(),
                reachability: self.mode,
                gap_ratio: self.scorecard.gap_ratio,
                low_vision,
            },
            crawl: CrawlSummary {
                states: g.state_count(),
                edges: g.edges.len(),
                truncated: self.truncated,
                stats: self.stats.clone(),
            },
            states,
            edges,
            users,
            violations: self.violations.clone(),
            scorecard,
            usability_gaps: self.scorecard.gaps.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub crawl: CrawlConfig,
    pub baseline: String,
    pub users: Vec<String>,
    pub reachability: ReachabilityMode,
    pub gap_ratio: f64,
    pub low_vision: LowVisionThresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrawlSummary {
    pub states: usize,
    pub edges: usize,
    pub truncated: bool,
    pub stats: CrawlStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub id: StateId,
    pub targets: usize,
    pub unstable_regions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub index: usize,
    pub from: StateId,
    pub to: StateId,
    pub action: String,
    pub target: String,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSummary {
    pub states: Vec<StateId>,
    /// Indices into the report's edge list.
    pub edges: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub user: String,
    pub state: StateId,
    pub score: f64,
    pub path: Vec<StateId>,
    pub interactions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub tool: ToolInfo,
    pub input: String,
    pub driver: String,
    pub config: ReportConfig,
    pub crawl: CrawlSummary,
    pub states: Vec<StateRecord>,
    pub edges: Vec<EdgeRecord>,
    pub users: BTreeMap<String, UserSummary>,
    pub violations: Vec<Violation>,
    pub scorecard: Vec<ScoreRecord>,
    pub usability_gaps: Vec<UsabilityGap>,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report is inconsistent: {0}")]
    ConsistencyError(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Text,
}

impl Report {
    pub fn reachable(&self, user: &str) -> Option<BTreeSet<StateId>> {
        self.users.get(user).map(|u| u.states.iter().copied().collect())
    }

    /// Cross-checks violations and scores against the user subgraphs.
    pub fn check_consistency(&self) -> Result<(), ReportError> {
        let fail = |m: String| Err(ReportError::ConsistencyError(m));
        let Some(base) = self.reachable(&self.config.baseline) else {
            return fail(format!("baseline `{}` has no subgraph", self.config.baseline));
        };
        for v in &self.violations {
            let Some(dis) = self.reachable(&v.disabled_user) else {
                return fail(format!("violation names unknown user `{}`", v.disabled_user));
            };
            if !base.contains(&v.state) {
                return fail(format!("state {} is flagged but the baseline cannot reach it", v.state));
            }
            if dis.contains(&v.state) {
                return fail(format!("state {} is flagged but {} reaches it", v.state, v.disabled_user));
            }
            if v.enabling_edges.is_empty() {
                return fail(format!("violation at state {} has no enabling edge", v.state));
            }
        }
        if self.config.reachability == ReachabilityMode::Transitive {
            for user in &self.config.users {
                if user == OMNI || *user == self.config.baseline {
                    continue;
                }
                let dis = self.reachable(user).unwrap_or_default();
                let flagged: BTreeSet<StateId> = self
                    .violations
                    .iter()
                    .filter(|v| &v.disabled_user == user)
                    .map(|v| v.state)
                    .collect();
                let expected: BTreeSet<StateId> = base.difference(&dis).copied().collect();
                if flagged != expected {
                    return fail(format!("violations for {user} are {flagged:?}, subgraphs imply {expected:?}"));
                }
            }
        }
        for s in &self.scorecard {
            let reachable = self.reachable(&s.user).is_some_and(|r| r.contains(&s.state));
            if (s.score > 0.0) != reachable {
                return fail(format!("score {} for {} at state {} disagrees with reachability", s.score, s.user, s.state));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} report (schema {})", self.tool.name, self.tool.version, self.schema_version);
        let _ = writeln!(out, "input: {} (driver: {})", self.input, self.driver);
        let _ = writeln!(
            out,
            "crawl: {} states, {} edges{}",
            self.crawl.states,
            self.crawl.edges,
            if self.crawl.truncated { ", truncated by budget" } else { "" }
        );
        let _ = writeln!(out, "baseline: {}", self.config.baseline);
        let _ = writeln!(out, "users:");
        for (name, u) in &self.users {
            let _ = writeln!(out, "  {name}: {}/{} states, {} edges", u.states.len(), self.crawl.states, u.edges.len());
        }
        let _ = writeln!(out, "violations: {}", self.violations.len());
        for v in &self.violations {
            let cap = serde_json::to_value(v.missing_capability)
                .ok()
                .and_then(|x| x.as_str().map(str::to_string))
                .unwrap_or_default();
            let _ = writeln!(out, "  state {} unreachable for {} ({cap})", v.state, v.disabled_user);
            let _ = writeln!(out, "    {}", v.remediation_hint);
        }
        let _ = writeln!(out, "usability gaps (ratio {}): {}", self.config.gap_ratio, self.usability_gaps.len());
        for gap in &self.usability_gaps {
            let _ = writeln!(
                out,
                "  state {} for {}: {:.4} vs baseline {:.4}",
                gap.state, gap.user, gap.score, gap.baseline_score
            );
        }
        out
    }
}

/// Serializes `r` after checking it for consistency.
pub fn emit_report(r: &Report, format: Format) -> Result<Vec<u8>, ReportError> {
    r.check_consistency()?;
    match format {
        Format::Json => {
            let mut bytes = serde_json::to_vec_pretty(r)?;
            bytes.push(b'\n');
            Ok(bytes)
        }
        Format::Text => Ok(r.to_text().into_bytes()),
    }
}
