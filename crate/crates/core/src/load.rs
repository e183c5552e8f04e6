//! CSV input and output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{
    AnnotatedRelation, AnnotationSource, Attribute, ConjunctiveQuery, Database, DomainKind, Semiring, Value,
};

struct RawTable {
    path: PathBuf,
    /// Attribute columns, parallel to the entry's attributes.
    cols: Vec<Vec<String>>,
    annot: Option<Vec<String>>,
}

fn read_raw(path: &Path, columns: &[String], annot: Option<&str>) -> Result<RawTable> {
    let data_err = |message: String| Error::Data {
        path: path.display().to_string(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data_err(e.to_string()))?;
    let header = rdr.headers().map_err(|e| data_err(e.to_string()))?.clone();
    let pos = |c: &str| {
        header
            .iter()
            .position(|h| h == c)
            .ok_or_else(|| data_err(format!("no column `{c}`")))
    };
    let idx: Vec<usize> = columns.iter().map(|c| pos(c)).collect::<Result<_>>()?;
    let aidx = annot.map(pos).transpose()?;
    let mut cols = vec![Vec::new(); idx.len()];
    let mut ann = aidx.map(|_| Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| data_err(e.to_string()))?;
        for (k, &i) in idx.iter().enumerate() {
            cols[k].push(rec.get(i).unwrap_or("").to_string());
        }
        if let (Some(i), Some(a)) = (aidx, ann.as_mut()) {
            a.push(rec.get(i).unwrap_or("").to_string());
        }
    }
    Ok(RawTable {
        path: path.to_path_buf(),
        cols,
        annot: ann,
    })
}

/// Location of an entry's data: its `file=` binding, else `{dir}/{name}.csv`.
pub fn table_path(query: &ConjunctiveQuery, i: usize, dir: Option<&Path>) -> Option<PathBuf> {
    let e = &query.relations[i];
    e.source
        .as_ref()
        .map(|s| s.path.clone())
        .or_else(|| dir.map(|d| d.join(format!("{}.csv", e.name))))
}

/// Loads every relation of `query`. Undeclared attribute domains are
/// inferred jointly over all columns bound to the attribute, so join keys
/// agree across relations.
pub fn load_database<S: Semiring>(query: &ConjunctiveQuery, dir: Option<&Path>) -> Result<Database<S>> {
    let mut raws = Vec::with_capacity(query.n());
    for (i, e) in query.relations.iter().enumerate() {
        let path = table_path(query, i, dir).ok_or_else(|| Error::MissingRelation(e.name.clone()))?;
        let columns = e.source.as_ref().map_or_else(|| e.attrs.clone(), |s| s.columns.clone());
        let annot = match &e.annotation {
            AnnotationSource::Column(c) => Some(c.as_str()),
            AnnotationSource::One => None,
        };
        raws.push(read_raw(&path, &columns, annot)?);
    }
    let mut kinds: BTreeMap<&str, DomainKind> = BTreeMap::new();
    for a in &query.attributes {
        if let Some(k) = a.kind {
            kinds.insert(&a.name, k);
            continue;
        }
        let mut kind: Option<DomainKind> = None;
        for (e, raw) in query.relations.iter().zip(&raws) {
            let Some(p) = e.attrs.iter().position(|x| x == &a.name) else { continue };
            for v in &raw.cols[p] {
                let k = Value::infer_kind(v);
                kind = Some(match kind {
                    None => k,
                    Some(prev) => prev.unify(k).unwrap_or(DomainKind::String),
                });
            }
        }
        kinds.insert(&a.name, kind.unwrap_or(DomainKind::Integer));
    }
    let mut db = Database::new();
    for (e, raw) in query.relations.iter().zip(raws) {
        let schema: Vec<Attribute> = e.attrs.iter().map(|a| Attribute::new(a.clone(), kinds[a.as_str()])).collect();
        let n = raw.cols.first().map_or(0, Vec::len);
        let mut rows = Vec::with_capacity(n);
        let at = |r: usize, m: String| Error::Data {
            path: raw.path.display().to_string(),
            message: format!("row {}: {m}", r + 2),
        };
        for r in 0..n {
            let row = schema
                .iter()
                .zip(&raw.cols)
                .map(|(a, c)| Value::parse(&c[r], a.kind.expect("kind assigned")).map_err(|err| at(r, err.to_string())))
                .collect::<Result<Vec<Value>>>()?;
            rows.push(row.into_boxed_slice());
        }
        let annotations = match &raw.annot {
            Some(col) => Some(
                col.iter()
                    .enumerate()
                    .map(|(r, v)| {
                        let value = Value::parse(v, Value::infer_kind(v)).map_err(|err| at(r, err.to_string()))?;
                        S::from_value(&value).ok_or_else(|| at(r, format!("`{v}` is not a {} annotation", S::KIND)))
                    })
                    .collect::<Result<Vec<S::Elem>>>()?,
            ),
            None => None,
        };
        let rel = AnnotatedRelation::new(e.name.clone(), schema, rows, annotations)?;
        db.insert(if rel.is_annotated() { rel } else { rel.annotate_default() });
    }
    Ok(db)
}

/// Writes `rel` with a header row; annotations go to `annot` when given.
pub fn write_csv<S: Semiring>(rel: &AnnotatedRelation<S>, path: &Path, annot: Option<&str>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = rel.attr_names();
    if let Some(a) = annot {
        header.push(a);
    }
    w.write_record(&header)?;
    for (row, ann) in rel.iter() {
        let mut rec: Vec<String> = row.iter().map(Value::to_string).collect();
        if annot.is_some() {
            rec.push(ann.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::SumProduct;

    #[test]
    fn round_trip_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let q = fixtures::q1();
        let db = fixtures::appendix_db::<SumProduct>();
        for e in &q.relations {
            let annot = match &e.annotation {
                AnnotationSource::Column(c) => Some(c.as_str()),
                AnnotationSource::One => None,
            };
            write_csv(db.get(&e.name).unwrap(), &dir.path().join(format!("{}.csv", e.name)), annot).unwrap();
        }
        let back: Database<SumProduct> = load_database(&q, Some(dir.path())).unwrap();
        for e in &q.relations {
            assert!(back.get(&e.name).unwrap().same_as(db.get(&e.name).unwrap()), "{}", e.name);
        }
        assert_eq!(back.get("R6").unwrap().schema()[1].kind, Some(DomainKind::String));
    }

    #[test]
    fn bad_cells_report_the_row() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("R.csv"), "a\n1\n2\n").unwrap();
        let q = crate::queryfile::parse_query_str("relation R(a:int)\n", None).unwrap().query;
        let db: Database<SumProduct> = load_database(&q, Some(dir.path())).unwrap();
        assert_eq!(db.get("R").unwrap().len(), 2);
        std::fs::write(dir.path().join("R.csv"), "a\n1\nx\n").unwrap();
        let e = load_database::<SumProduct>(&q, Some(dir.path())).unwrap_err();
        assert!(e.to_string().contains("row 3"), "{e}");
        assert!(load_database::<SumProduct>(&q, None).is_err());
    }
}
