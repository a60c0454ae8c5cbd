//! On-disk formats.
//!
//! Annotations are comma-separated with a header row. Required columns are
//! `id` and `final_score`; `action`, `dd` and `judge_1 .. judge_K` are
//! optional. An empty `dd` cell means the difficulty degree is unknown.
//!
//! ```text
//! id,action,final_score,dd,judge_1,judge_2,judge_3
//! s00000,diving,24.0,1.6,5.0,5.0,5.5
//! ```
//!
//! Features are line oriented. Each sample starts with a header line followed
//! by `N` rows of `D` whitespace-separated reals (row-major):
//!
//! ```text
//! # comment lines and blank lines are ignored
//! sample <id> <N> <D>
//! <D reals>
//! ...
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::multipath::{fuse_rule, JudgePanel, MultiplierSource};
use crate::nethead::FeatureMatrix;
use crate::textio::{parse_usize, write_reals, LineReader};

use super::{DatasetManifest, SampleRecord};

/// Allowed gap between the recorded final score and the fused judge panel.
pub const FUSION_TOLERANCE: f64 = 1e-6;

/// One parsed annotation line.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRow {
    pub id: String,
    pub action: Option<String>,
    pub final_score: f64,
    pub dd: Option<f64>,
    pub judges: Vec<f64>,
}

pub fn read_annotations<R: Read>(reader: R, source_name: &str) -> Result<Vec<AnnotationRow>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| Error::parse(source_name, 1, e.to_string()))?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let id_col = column("id").ok_or_else(|| Error::parse(source_name, 1, "missing `id` column"))?;
    let score_col =
        column("final_score").ok_or_else(|| Error::parse(source_name, 1, "missing `final_score` column"))?;
    let dd_col = column("dd");
    let action_col = column("action");
    let mut judge_cols = Vec::new();
    while let Some(c) = column(&format!("judge_{}", judge_cols.len() + 1)) {
        judge_cols.push(c);
    }
    let stray = headers.iter().filter(|h| h.starts_with("judge_")).count();
    if stray != judge_cols.len() {
        return Err(Error::parse(source_name, 1, "judge columns must be numbered judge_1..judge_K"));
    }

    let mut rows = Vec::new();
    for record in csv.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(source_name, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |c: usize| record.get(c).unwrap_or("");
        let real = |c: usize, what: &str| -> Result<f64> {
            field(c)
                .parse::<f64>()
                .map_err(|_| Error::parse(source_name, line, format!("bad {what} `{}`", field(c))))
        };
        let id = field(id_col).to_string();
        if id.is_empty() {
            return Err(Error::parse(source_name, line, "empty id"));
        }
        let final_score = real(score_col, "final_score")?;
        let dd = match dd_col {
            Some(c) if !field(c).is_empty() => Some(real(c, "dd")?),
            _ => None,
        };
        let action = action_col.map(field).filter(|a| !a.is_empty()).map(str::to_string);
        let judges = judge_cols
            .iter()
            .enumerate()
            .map(|(k, &c)| real(c, &format!("judge_{}", k + 1)))
            .collect::<Result<Vec<_>>>()?;
        rows.push(AnnotationRow {
            id,
            action,
            final_score,
            dd,
            judges,
        });
    }
    Ok(rows)
}

pub fn write_annotations<W: Write>(w: W, rows: &[AnnotationRow]) -> Result<()> {
    let k = rows.first().map_or(0, |r| r.judges.len());
    if rows.iter().any(|r| r.judges.len() != k) {
        return Err(Error::Validation("annotation rows differ in judge count".into()));
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["id".to_string(), "action".into(), "final_score".into(), "dd".into()];
    header.extend((1..=k).map(|i| format!("judge_{i}")));
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    out.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut fields = vec![
            r.id.clone(),
            r.action.clone().unwrap_or_default(),
            format!("{:?}", r.final_score),
            r.dd.map(|d| format!("{d:?}")).unwrap_or_default(),
        ];
        fields.extend(r.judges.iter().map(|j| format!("{j:?}")));
        out.write_record(&fields).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a features file into a map keyed by sample id.
pub fn read_features<R: BufRead>(reader: R, source_name: &str) -> Result<BTreeMap<String, FeatureMatrix>> {
    let mut r = LineReader::new(reader, source_name);
    let mut out = BTreeMap::new();
    while r.peek()?.is_some() {
        let header = r.expect_keyword("sample")?;
        let (id, n, d) = match header.as_slice() {
            [id, n, d] => (id.clone(), parse_usize(&r, n, "segment count")?, parse_usize(&r, d, "dimension")?),
            _ => return Err(r.error("sample header needs `sample <id> <N> <D>`")),
        };
        let header_line = r.line_no();
        let mut flat = Vec::with_capacity(n * d);
        for _ in 0..n {
            flat.extend(r.read_reals(d, &format!("features of {id}"))?);
        }
        let arr = Array2::from_shape_vec((n, d), flat).map_err(|e| r.error(e.to_string()))?;
        let matrix = FeatureMatrix::new(arr)
            .map_err(|e| Error::parse(source_name, header_line, format!("sample {id}: {e}")))?;
        if out.insert(id.clone(), matrix).is_some() {
            return Err(Error::parse(source_name, header_line, format!("duplicate sample {id}")));
        }
    }
    Ok(out)
}

pub fn write_features<'a, W, I>(w: &mut W, samples: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a FeatureMatrix)>,
{
    writeln!(w, "# usdl features: `sample <id> <N> <D>` then N rows of D reals")?;
    for (id, f) in samples {
        if id.is_empty() || id.contains(char::is_whitespace) {
            return Err(Error::Validation(format!("sample id `{id}` must be non-empty without whitespace")));
        }
        writeln!(w, "sample {id} {} {}", f.num_segments(), f.dim())?;
        for row in f.view().rows() {
            write_reals(w, &row.to_vec())?;
        }
    }
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path)?;
    let manifest: DatasetManifest = toml::from_str(&text)
        .map_err(|e| Error::parse(path.display().to_string(), 0, e.to_string()))?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let text = toml::to_string(manifest).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Records in id order, the manifest, and any non-fatal validation warnings.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub records: Vec<SampleRecord>,
    pub warnings: Vec<String>,
}

/// Loads and cross-validates the three dataset files.
pub fn load_dataset(manifest_path: &Path, features_path: &Path, annotations_path: &Path) -> Result<LoadedDataset> {
    let manifest = read_manifest(manifest_path)?;
    let features = read_features(
        BufReader::new(File::open(features_path)?),
        &features_path.display().to_string(),
    )?;
    let rows = read_annotations(
        File::open(annotations_path)?,
        &annotations_path.display().to_string(),
    )?;
    assemble(manifest, features, rows)
}

fn assemble(
    manifest: DatasetManifest,
    mut features: BTreeMap<String, FeatureMatrix>,
    rows: Vec<AnnotationRow>,
) -> Result<LoadedDataset> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut problems: Vec<String> = Vec::new();
    let mut warnings = Vec::new();
    let mut seen = BTreeSet::new();
    let mut records = Vec::with_capacity(rows.len());
    let range = manifest.judge_range;

    for row in rows {
        let id = row.id;
        if !seen.insert(id.clone()) {
            problems.push(format!("{id}: duplicate annotation"));
            continue;
        }
        let Some(matrix) = features.remove(&id) else {
            problems.push(format!("{id}: no features"));
            continue;
        };
        if !(row.final_score >= manifest.score_min && row.final_score <= manifest.score_max) {
            problems.push(format!(
                "{id}: final score {} outside [{}, {}]",
                row.final_score, manifest.score_min, manifest.score_max
            ));
        }
        if row.judges.len() != manifest.judge_count {
            problems.push(format!(
                "{id}: {} judge scores, manifest declares {}",
                row.judges.len(),
                manifest.judge_count
            ));
            continue;
        }
        let panel = if row.judges.is_empty() {
            None
        } else {
            if let Some(&s) = row
                .judges
                .iter()
                .find(|&&s| s < range.min || s > range.max || !range.on_grid(s))
            {
                problems.push(format!("{id}: judge score {s} not on the judge grid"));
            }
            match JudgePanel::new(row.judges, row.dd) {
                Ok(panel) => Some(panel),
                Err(e) => {
                    problems.push(format!("{id}: {e}"));
                    continue;
                }
            }
        };
        if let Some(panel) = &panel {
            let multiplier = match manifest.fusion_rule.multiplier_source {
                MultiplierSource::None => Some(1.0),
                MultiplierSource::GroundTruthDd | MultiplierSource::PredictedDd => panel.difficulty_degree,
            };
            if let Some(dd) = multiplier {
                let fused = fuse_rule(&panel.judge_scores, &manifest.fusion_rule, dd)?;
                if (fused - row.final_score).abs() > FUSION_TOLERANCE {
                    let msg = format!(
                        "{id}: judge panel fuses to {fused} but final score is {}",
                        row.final_score
                    );
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
            }
        }
        records.push(SampleRecord {
            id,
            features: matrix,
            final_score: row.final_score,
            judge_panel: panel,
            action_class: row.action,
        });
    }

    for id in manifest.split.train.iter().chain(&manifest.split.test) {
        if !seen.contains(id) {
            problems.push(format!("{id}: listed in split but not annotated"));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems.join("; ")));
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(LoadedDataset {
        manifest,
        records,
        warnings,
    })
}

/// Paths of the three files making up a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFiles {
    pub manifest: PathBuf,
    pub features: PathBuf,
    pub annotations: PathBuf,
}

impl DatasetFiles {
    /// Conventional names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            manifest: dir.join("manifest.toml"),
            features: dir.join("features.txt"),
            annotations: dir.join("annotations.csv"),
        }
    }
}

/// Writes `manifest.toml`, `features.txt` and `annotations.csv` into `dir`.
pub fn write_dataset(dir: &Path, manifest: &DatasetManifest, records: &[SampleRecord]) -> Result<DatasetFiles> {
    std::fs::create_dir_all(dir)?;
    let files = DatasetFiles::in_dir(dir);
    write_manifest(&files.manifest, manifest)?;

    let mut w = BufWriter::new(File::create(&files.features)?);
    write_features(&mut w, records.iter().map(|r| (r.id.as_str(), &r.features)))?;
    w.flush()?;

    let rows: Vec<AnnotationRow> = records
        .iter()
        .map(|r| AnnotationRow {
            id: r.id.clone(),
            action: r.action_class.clone(),
            final_score: r.final_score,
            dd: r.judge_panel.as_ref().and_then(|p| p.difficulty_degree),
            judges: r.judge_panel.as_ref().map(|p| p.judge_scores.clone()).unwrap_or_default(),
        })
        .collect();
    write_annotations(BufWriter::new(File::create(&files.annotations)?), &rows)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{JudgeRange, Split};
    use crate::multipath::FusionRule;

    fn manifest(judge_count: usize) -> DatasetManifest {
        DatasetManifest {
            name: "t".into(),
            score_min: 0.0,
            score_max: 120.0,
            judge_count,
            judge_range: JudgeRange::DIVING,
            fusion_rule: FusionRule {
                drop_low: 1,
                drop_high: 1,
                multiplier_source: MultiplierSource::GroundTruthDd,
            },
            split: Split::default(),
        }
    }

    const FEATURES: &str = "\
# three samples
sample b 2 3
0.1 0.2 0.3
0.4 0.5 0.6

sample a 1 3
1 2 3
sample c 1 3
-1 -2 -3e-5
";

    #[test]
    fn features_parse() {
        let f = read_features(FEATURES.as_bytes(), "f").unwrap();
        assert_eq!(f.keys().collect::<Vec<_>>(), ["a", "b", "c"]);
        assert_eq!(f["b"].num_segments(), 2);
        assert_eq!(f["c"].row(0)[2], -3e-5);
    }

    #[test]
    fn features_errors_carry_line() {
        let bad = "sample a 2 2\n1 2\n3\n";
        match read_features(bad.as_bytes(), "bad.txt") {
            Err(Error::Parse { source_name, line, .. }) => {
                assert_eq!(source_name, "bad.txt");
                assert_eq!(line, 3);
            }
            other => panic!("{other:?}"),
        }
        assert!(read_features("sample a 1 1\nNaN\n".as_bytes(), "n").is_err());
        assert!(read_features("sample a 1 1\n1\nsample a 1 1\n2\n".as_bytes(), "d").is_err());
    }

    #[test]
    fn three_record_fixture_in_id_order() {
        let ann = "\
id,final_score,dd,judge_1,judge_2,judge_3
c,10.0,2.0,5.0,5.0,5.5
a,8.0,1.0,7.5,8.0,9.0
b,13.5,1.5,9.0,9.0,9.0
";
        let features = read_features(FEATURES.as_bytes(), "f").unwrap();
        let rows = read_annotations(ann.as_bytes(), "a").unwrap();
        let loaded = assemble(manifest(3), features, rows).unwrap();
        let ids: Vec<&str> = loaded.records.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert!(loaded.warnings.is_empty());
        assert_eq!(loaded.records[1].judge_panel.as_ref().unwrap().difficulty_degree, Some(1.5));
    }

    #[test]
    fn fusion_mismatch_warns_with_id() {
        let ann = "id,final_score,dd,judge_1,judge_2,judge_3\na,9.0,1.0,7.5,8.0,9.0\n";
        let features = read_features(FEATURES.as_bytes(), "f").unwrap();
        let loaded = assemble(manifest(3), features, read_annotations(ann.as_bytes(), "a").unwrap()).unwrap();
        assert_eq!(loaded.records.len(), 1);
        assert_eq!(loaded.warnings.len(), 1);
        assert!(loaded.warnings[0].starts_with("a:"));
    }

    #[test]
    fn empty_annotations_rejected() {
        let features = read_features(FEATURES.as_bytes(), "f").unwrap();
        let rows = read_annotations("id,final_score\n".as_bytes(), "a").unwrap();
        assert!(matches!(assemble(manifest(0), features, rows), Err(Error::EmptyDataset)));
    }

    #[test]
    fn validation_lists_offenders() {
        let ann = "id,final_score\na,8.0\nzz,1.0\nb,500.0\n";
        let features = read_features(FEATURES.as_bytes(), "f").unwrap();
        match assemble(manifest(0), features, read_annotations(ann.as_bytes(), "a").unwrap()) {
            Err(Error::Validation(msg)) => {
                assert!(msg.contains("zz"));
                assert!(msg.contains("b: final score"));
                assert!(!msg.contains("a:"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn annotation_parse_errors() {
        assert!(read_annotations("name,final_score\nx,1\n".as_bytes(), "a").is_err());
        match read_annotations("id,final_score\nx,1\ny,abc\n".as_bytes(), "ann.csv") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(read_annotations("id,final_score,judge_2\nx,1,2\n".as_bytes(), "a").is_err());
    }
}
