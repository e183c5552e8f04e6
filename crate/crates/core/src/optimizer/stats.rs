use std::collections::{BTreeMap, HashSet};

use serde::Serialize;

use crate::error::Result;
use crate::model::{ConjunctiveQuery, Database, Semiring, Value};

/// Cardinality-estimation fidelity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CeMode {
    /// Exact sizes from a dry run on the instance.
    Accurate,
    /// Uniformity and independence over distinct counts.
    #[default]
    Estimated,
    /// Upper bounds: Cartesian products unless a key caps a side.
    WorstCase,
}

impl CeMode {
    pub fn name(self) -> &'static str {
        match self {
            CeMode::Accurate => "accurate",
            CeMode::Estimated => "estimated",
            CeMode::WorstCase => "worst_case",
        }
    }

    pub fn parse_name(s: &str) -> Option<CeMode> {
        match s {
            "accurate" => Some(CeMode::Accurate),
            "estimated" => Some(CeMode::Estimated),
            "worst_case" | "worst-case" => Some(CeMode::WorstCase),
            _ => None,
        }
    }
}

/// Per-relation statistics.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TableStats {
    pub cardinality: u64,
    pub distinct: BTreeMap<String, u64>,
    /// Sorted sample of each attribute's values at evenly spaced ranks.
    #[serde(skip)]
    pub quantiles: BTreeMap<String, Vec<Value>>,
}

impl TableStats {
    pub fn ndv(&self, attr: &str) -> u64 {
        self.distinct.get(attr).copied().unwrap_or(self.cardinality).min(self.cardinality).max(1)
    }

    /// Fraction of quantile points satisfying `keep`; `None` without quantiles.
    pub fn quantile_fraction(&self, attr: &str, keep: impl Fn(&Value) -> bool) -> Option<f64> {
        let q = self.quantiles.get(attr).filter(|q| !q.is_empty())?;
        Some(q.iter().filter(|v| keep(v)).count() as f64 / q.len() as f64)
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Stats {
    pub mode: CeMode,
    pub tables: BTreeMap<String, TableStats>,
}

/// Number of quantile points kept per attribute.
pub const QUANTILE_POINTS: usize = 21;

impl Stats {
    /// Every relation at `cardinality` rows with all-distinct columns.
    pub fn uniform(query: &ConjunctiveQuery, cardinality: u64) -> Self {
        let tables = query
            .relations
            .iter()
            .map(|r| {
                let distinct = r.attrs.iter().map(|a| (a.clone(), cardinality)).collect();
                (
                    r.name.clone(),
                    TableStats {
                        cardinality,
                        distinct,
                        quantiles: BTreeMap::new(),
                    },
                )
            })
            .collect();
        Self {
            mode: CeMode::Estimated,
            tables,
        }
    }

    pub fn with_mode(mut self, mode: CeMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn table(&self, name: &str) -> Option<&TableStats> {
        self.tables.get(name)
    }

    /// Checks that distinct counts stay within cardinality and quantiles are
    /// sorted.
    pub fn is_consistent(&self) -> bool {
        self.tables.values().all(|t| {
            t.distinct.values().all(|&d| d <= t.cardinality)
                && t.quantiles.values().all(|q| q.windows(2).all(|w| w[0].compare(&w[1]).is_none_or(|o| o.is_le())))
        })
    }
}

/// Exact statistics for the relations `query` reads.
pub fn collect_stats<S: Semiring>(query: &ConjunctiveQuery, db: &Database<S>, mode: CeMode) -> Result<Stats> {
    let mut tables = BTreeMap::new();
    for e in &query.relations {
        let rel = db.require(&e.name)?;
        let mut t = TableStats {
            cardinality: rel.len() as u64,
            ..Default::default()
        };
        for (p, a) in rel.schema().iter().enumerate() {
            let distinct: HashSet<&Value> = rel.rows().iter().map(|r| &r[p]).collect();
            t.distinct.insert(a.name.clone(), distinct.len() as u64);
            let mut vals: Vec<&Value> = rel.rows().iter().map(|r| &r[p]).collect();
            vals.sort_by(|x, y| x.compare(y).unwrap_or_else(|| x.cmp(y)));
            if !vals.is_empty() {
                let q = (0..QUANTILE_POINTS)
                    .map(|k| vals[k * (vals.len() - 1) / (QUANTILE_POINTS - 1)].clone())
                    .collect();
                t.quantiles.insert(a.name.clone(), q);
            }
        }
        tables.insert(e.name.clone(), t);
    }
    Ok(Stats { mode, tables })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::Counting;

    #[test]
    fn collected_stats_are_exact() {
        let q = fixtures::q1();
        let s = collect_stats(&q, &fixtures::appendix_db::<Counting>(), CeMode::Accurate).unwrap();
        let r5 = s.table("R5").unwrap();
        assert_eq!(r5.cardinality, 3);
        assert_eq!(r5.ndv("x7"), 2);
        assert_eq!(s.table("R2").unwrap().ndv("x5"), 1);
        assert!(s.is_consistent());
        assert_eq!(r5.quantile_fraction("x4", |v| *v >= Value::Int(2)), Some(11.0 / 21.0));
    }

    #[test]
    fn uniform_stats_cover_every_relation() {
        let s = Stats::uniform(&fixtures::q1(), 1000);
        assert_eq!(s.tables.len(), 6);
        assert_eq!(s.table("R1").unwrap().ndv("x3"), 1000);
    }
}
