//! The ordered triple classification rules and a reachability lint for them.

use serde::Serialize;

use super::PipelineConfig;
use crate::diff::{GroupStats, Membership};
use crate::model::{Bound, Date, Label, ObjectValue, TimeInterval};

/// Everything a rule may look at for one triple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripleContext {
    pub object: ObjectValue,
    pub interval: TimeInterval,
    pub membership: Membership,
    pub stats: GroupStats,
    pub subject_in_e_plus: bool,
    pub subject_in_f_minus: bool,
    pub relation_is_death: bool,
    pub relation_is_temporal_functional: bool,
    pub object_in_e_plus: bool,
}

impl TripleContext {
    fn t_start(&self) -> Bound {
        self.interval.start
    }

    fn t_end(&self) -> Bound {
        self.interval.end
    }
}

pub struct Rule {
    /// 1-based position in the list.
    pub number: u8,
    pub label: Label,
    pub text: &'static str,
    pub when: fn(&TripleContext, Date, Date) -> bool,
}

fn death_rule_holds(c: &TripleContext, t_old: Date, t_new: Date) -> bool {
    c.membership == Membership::NewOnly
        && c.stats.n == 1
        && c.object.as_date().is_some_and(|d| Bound::At(d).within(t_old, t_new))
}

fn temporal_swap_holds(c: &TripleContext, t_old: Date, t_new: Date) -> bool {
    c.relation_is_temporal_functional
        && c.stats.n_minus == 1
        && c.stats.n_plus == 1
        && c.stats.n_zero == 0
        && c.membership == Membership::NewOnly
        && c.t_start().within(t_old, t_new)
}

pub const RULES: [Rule; 18] = [
    Rule { number: 1, label: Label::New, text: "s in E+", when: |c, _, _| c.subject_in_e_plus },
    Rule { number: 2, label: Label::Unknown, text: "s not in F-", when: |c, _, _| !c.subject_in_f_minus },
    Rule {
        number: 3,
        label: Label::New,
        text: "r is death and (s,r,o) in F+ and n = 1 and T_old < o < T_new",
        when: |c, o, n| c.relation_is_death && death_rule_holds(c, o, n),
    },
    Rule {
        number: 4,
        label: Label::Unknown,
        text: "r is death and not rule 3",
        when: |c, o, n| c.relation_is_death && !death_rule_holds(c, o, n),
    },
    Rule { number: 5, label: Label::Unknown, text: "t_start > t_end", when: |c, _, _| c.t_start().gt(&c.t_end()) },
    Rule {
        number: 6,
        label: Label::New,
        text: "r is temporal and n- = 1 and n+ = 1 and n0 = 0 and (s,r,o) in F+ and T_old < t_start < T_new",
        when: temporal_swap_holds,
    },
    Rule {
        number: 7,
        label: Label::New,
        text: "rule 6 and (t_end = +inf or t_end > T_new)",
        when: |c, o, n| {
            temporal_swap_holds(c, o, n) && (c.t_end() == Bound::PosInf || c.t_end().gt_date(n))
        },
    },
    Rule {
        number: 8,
        label: Label::Ignore,
        text: "(s,r,o) in F+ and T_old < t_start < T_new and t_end < T_old",
        when: |c, o, n| c.membership == Membership::NewOnly && c.t_start().within(o, n) && c.t_end().lt_date(o),
    },
    Rule {
        number: 9,
        label: Label::Static,
        text: "t_end = +inf and t_start < T_old",
        when: |c, o, _| c.t_end() == Bound::PosInf && c.t_start().lt_date(o),
    },
    Rule {
        number: 10,
        label: Label::New,
        text: "t_end = +inf and T_old < t_start < T_new",
        when: |c, o, n| c.t_end() == Bound::PosInf && c.t_start().within(o, n),
    },
    Rule { number: 11, label: Label::Ignore, text: "t_start > T_old", when: |c, o, _| c.t_start().gt_date(o) },
    Rule {
        number: 12,
        label: Label::Ignore,
        text: "T_old < t_start < T_new and T_old < t_end < T_new",
        when: |c, o, n| c.t_start().within(o, n) && c.t_end().within(o, n),
    },
    Rule {
        number: 13,
        label: Label::Obsolete,
        text: "t_start < T_old and T_old < t_end < T_new",
        when: |c, o, n| c.t_start().lt_date(o) && c.t_end().within(o, n),
    },
    Rule {
        number: 14,
        label: Label::Static,
        text: "t_start < T_old and t_end > T_new",
        when: |c, o, n| c.t_start().lt_date(o) && c.t_end().gt_date(n),
    },
    Rule {
        number: 15,
        label: Label::Obsolete,
        text: "T_old < t_end < T_new",
        when: |c, o, n| c.t_end().within(o, n),
    },
    Rule { number: 16, label: Label::Static, text: "t_end > T_new", when: |c, _, n| c.t_end().gt_date(n) },
    Rule {
        number: 17,
        label: Label::Ignore,
        text: "(s,r,o) in F- and t_end < T_old",
        when: |c, o, _| c.membership == Membership::OldOnly && c.t_end().lt_date(o),
    },
    Rule {
        number: 18,
        label: Label::New,
        text: "(s,r,o) in F+ and o in E+",
        when: |c, _, _| c.membership == Membership::NewOnly && c.object_in_e_plus,
    },
];

/// Number of the first rule that fires, if any.
pub fn first_matching_rule(ctx: &TripleContext, cfg: &PipelineConfig) -> Option<u8> {
    RULES.iter().find(|r| (r.when)(ctx, cfg.t_old, cfg.t_new)).map(|r| r.number)
}

pub fn classify_triple(ctx: &TripleContext, cfg: &PipelineConfig) -> Label {
    match first_matching_rule(ctx, cfg) {
        Some(n) => RULES[n as usize - 1].label,
        None => Label::Unknown,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LintReport {
    /// How many enumerated contexts each rule decided, indexed by rule number - 1.
    pub decided: Vec<u64>,
    /// Contexts no rule fired on (they default to unknown).
    pub fallthrough: u64,
    pub contexts: u64,
    pub unreachable: Vec<u8>,
}

impl std::fmt::Display for LintReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "enumerated {} contexts", self.contexts)?;
        for (rule, count) in RULES.iter().zip(&self.decided) {
            let mark = if *count == 0 { "UNREACHABLE" } else { "" };
            let label = rule.label.to_string();
            writeln!(f, "rule {:>2} -> {label:<8} {count:>9} {mark:<11}  [{}]", rule.number, rule.text)?;
        }
        writeln!(f, "no rule fired: {}", self.fallthrough)?;
        writeln!(f, "unreachable rules: {:?}", self.unreachable)
    }
}

/// Finds rules that can never fire first.
///
/// Enumerates every context over a date grid that puts a point on, and on each
/// side of, both reference dates (plus the infinities), all memberships, group
/// counts up to 2 and every flag combination, keeping only contexts that a real
/// diff could produce. Each rule condition only compares dates against `T_old`
/// and `T_new` or against each other, so this grid covers every distinct case.
pub fn lint_rules(cfg: &PipelineConfig) -> LintReport {
    let (o, n) = (cfg.t_old, cfg.t_new);
    let mut points: Vec<Bound> = vec![Bound::NegInf];
    for d in [o.add_days(-2), o.add_days(-1), o, o.add_days(1), o.add_days(2), n.add_days(-1), n, n.add_days(1), n.add_days(2)] {
        points.push(Bound::At(d));
    }
    points.push(Bound::PosInf);
    points.sort();
    points.dedup();

    let mut objects: Vec<ObjectValue> = vec![ObjectValue::NoValue];
    objects.extend(points.iter().filter_map(|b| b.date()).map(|time| ObjectValue::Time { time }));

    let mut decided = vec![0u64; RULES.len()];
    let mut fallthrough = 0u64;
    let mut contexts = 0u64;
    let memberships = [Membership::OldOnly, Membership::Both, Membership::NewOnly];

    for &start in &points {
        for &end in &points {
            let interval = TimeInterval::new(start, end);
            for membership in memberships {
                for counts in 0..27u32 {
                    let stats = GroupStats {
                        n_minus: (counts % 3) as usize,
                        n_zero: (counts / 3 % 3) as usize,
                        n_plus: (counts / 9) as usize,
                        n: 0,
                    };
                    let stats = GroupStats { n: stats.n_minus + stats.n_zero + stats.n_plus, ..stats };
                    let own = match membership {
                        Membership::OldOnly => stats.n_minus,
                        Membership::Both => stats.n_zero,
                        Membership::NewOnly => stats.n_plus,
                    };
                    if own == 0 {
                        continue;
                    }
                    for flags in 0..32u32 {
                        let bit = |i: u32| flags & (1 << i) != 0;
                        let (s_new, s_old, death, tf, o_new) = (bit(0), bit(1), bit(2), bit(3), bit(4));
                        // A new subject only occurs in F+, and any F- entry of the
                        // group puts its subject in F-.
                        if s_new && (s_old || membership != Membership::NewOnly || stats.n_minus + stats.n_zero > 0) {
                            continue;
                        }
                        if stats.n_minus > 0 && !s_old {
                            continue;
                        }
                        let object_choices: &[ObjectValue] = if death { &objects } else { &objects[..1] };
                        for object in object_choices {
                            let ctx = TripleContext {
                                object: object.clone(),
                                interval,
                                membership,
                                stats,
                                subject_in_e_plus: s_new,
                                subject_in_f_minus: s_old,
                                relation_is_death: death,
                                relation_is_temporal_functional: tf,
                                object_in_e_plus: o_new,
                            };
                            contexts += 1;
                            match first_matching_rule(&ctx, cfg) {
                                Some(r) => decided[r as usize - 1] += 1,
                                None => fallthrough += 1,
                            }
                        }
                    }
                }
            }
        }
    }

    let unreachable =
        decided.iter().enumerate().filter(|(_, c)| **c == 0).map(|(i, _)| (i + 1) as u8).collect();
    LintReport { decided, fallthrough, contexts, unreachable }
}
