//! Probability records, the superclass taxonomy and ground-truth error labels.
//!
//! A [`ProbRecord`] carries one sample's probability vector as exported by the
//! base classifier. The [`SuperclassMap`] groups fine-grained classes into
//! coarse superclasses; whether a misclassification stays inside its superclass
//! decides its [`ErrorKind`].

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum(probs) == 1` under strict validation.
pub const SUM_TOLERANCE: f64 = 1e-6;

/// Index of the largest entry; ties go to the lowest index.
///
/// Returns `None` for an empty slice or one containing a non-finite value.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return None;
        }
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbRecord {
    pub id: String,
    pub probs: Vec<f64>,
    #[serde(default)]
    pub true_label: Option<usize>,
}

impl ProbRecord {
    pub fn new(id: impl Into<String>, probs: Vec<f64>, true_label: Option<usize>) -> Self {
        Self {
            id: id.into(),
            probs,
            true_label,
        }
    }

    /// The base classifier's prediction: argmax of `probs`, lowest index on ties.
    pub fn predicted_class(&self) -> Result<usize> {
        if self.probs.is_empty() {
            return Err(self.invalid("empty probability vector"));
        }
        argmax(&self.probs).ok_or_else(|| self.invalid("non-finite probability"))
    }

    /// Largest probability (the base model's top-1 confidence).
    pub fn top_confidence(&self) -> Result<f64> {
        Ok(self.probs[self.predicted_class()?])
    }

    /// Checks the record against a class count, optionally renormalizing the
    /// probabilities in place instead of rejecting a sum off by more than
    /// [`SUM_TOLERANCE`].
    pub fn validate(&mut self, n_classes: usize, mode: SumValidation) -> Result<()> {
        if self.probs.len() != n_classes {
            return Err(self.invalid(&format!(
                "expected {n_classes} probabilities, got {}",
                self.probs.len()
            )));
        }
        if let Some(bad) = self.probs.iter().find(|p| !p.is_finite()) {
            return Err(self.invalid(&format!("non-finite probability {bad}")));
        }
        if let Some(bad) = self.probs.iter().find(|p| **p < 0.0 || **p > 1.0) {
            return Err(self.invalid(&format!("probability {bad} outside [0, 1]")));
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            match mode {
                SumValidation::Strict => {
                    return Err(self.invalid(&format!("probabilities sum to {sum}")));
                }
                SumValidation::Renormalize => {
                    if sum <= 0.0 {
                        return Err(self.invalid("probabilities sum to zero"));
                    }
                    self.probs.iter_mut().for_each(|p| *p /= sum);
                }
            }
        }
        if let Some(label) = self.true_label {
            if label >= n_classes {
                return Err(self.invalid(&format!("true_label {label} outside [0, {n_classes})")));
            }
        }
        Ok(())
    }

    fn invalid(&self, reason: &str) -> Error {
        Error::InvalidRecord {
            id: Some(self.id.clone()),
            reason: reason.to_string(),
        }
    }
}

/// How [`ProbRecord::validate`] treats vectors whose sum drifts from 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SumValidation {
    #[default]
    Strict,
    Renormalize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Correct,
    HumanLike,
    NonHuman,
}

impl ErrorKind {
    /// Kind of a prediction given the true class.
    pub fn classify(predicted: usize, truth: usize, map: &SuperclassMap) -> Self {
        if predicted == truth {
            ErrorKind::Correct
        } else if map.superclass_of(predicted) == map.superclass_of(truth) {
            ErrorKind::HumanLike
        } else {
            ErrorKind::NonHuman
        }
    }

    pub fn is_error(self) -> bool {
        self != ErrorKind::Correct
    }
}

/// Ground-truth error kind of a labeled record's base prediction.
pub fn label_error_kind(record: &ProbRecord, map: &SuperclassMap) -> Result<ErrorKind> {
    let truth = record
        .true_label
        .ok_or_else(|| Error::Unlabeled(record.id.clone()))?;
    let predicted = record.predicted_class()?;
    check_class(map, predicted)?;
    check_class(map, truth)?;
    Ok(ErrorKind::classify(predicted, truth, map))
}

fn check_class(map: &SuperclassMap, class: usize) -> Result<()> {
    if class >= map.n_classes() {
        return Err(Error::Shape {
            expected: map.n_classes(),
            got: class + 1,
        });
    }
    Ok(())
}

/// On-disk layout of a superclass map.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MapFile {
    classes: Vec<String>,
    superclasses: Vec<String>,
    assignment: Vec<usize>,
}

/// Assignment of every fine-grained class to exactly one superclass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MapFile", into = "MapFile")]
pub struct SuperclassMap {
    class_names: Vec<String>,
    superclass_names: Vec<String>,
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl SuperclassMap {
    pub fn new(
        class_names: Vec<String>,
        superclass_names: Vec<String>,
        assignment: Vec<usize>,
    ) -> Result<Self> {
        if class_names.is_empty() {
            return Err(Error::InvalidMap("no classes".into()));
        }
        if assignment.len() != class_names.len() {
            return Err(Error::InvalidMap(format!(
                "{} classes but {} assignments",
                class_names.len(),
                assignment.len()
            )));
        }
        if superclass_names.len() < 2 {
            return Err(Error::InvalidMap(format!(
                "need at least 2 superclasses, got {}",
                superclass_names.len()
            )));
        }
        let mut members = vec![Vec::new(); superclass_names.len()];
        for (class, &sc) in assignment.iter().enumerate() {
            if sc >= superclass_names.len() {
                return Err(Error::InvalidMap(format!(
                    "class {class} assigned to superclass {sc}, only {} exist",
                    superclass_names.len()
                )));
            }
            members[sc].push(class);
        }
        if let Some(empty) = members.iter().position(Vec::is_empty) {
            return Err(Error::InvalidMap(format!(
                "superclass `{}` has no member classes",
                superclass_names[empty]
            )));
        }
        Ok(Self {
            class_names,
            superclass_names,
            assignment,
            members,
        })
    }

    /// Contiguous superclasses of the given sizes with generated names
    /// (`c0, c1, ...` and `s0, s1, ...`).
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let assignment: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(sc, &n)| std::iter::repeat_n(sc, n))
            .collect();
        let classes = (0..assignment.len()).map(|i| format!("c{i}")).collect();
        let superclasses = (0..sizes.len()).map(|i| format!("s{i}")).collect();
        Self::new(classes, superclasses, assignment)
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_superclasses(&self) -> usize {
        self.superclass_names.len()
    }

    /// Superclass of `class`. Panics if `class >= n_classes()`.
    pub fn superclass_of(&self, class: usize) -> usize {
        self.assignment[class]
    }

    pub fn members(&self, superclass: usize) -> &[usize] {
        &self.members[superclass]
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn superclass_names(&self) -> &[String] {
        &self.superclass_names
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }
}

impl TryFrom<MapFile> for SuperclassMap {
    type Error = Error;

    fn try_from(file: MapFile) -> Result<Self> {
        SuperclassMap::new(file.classes, file.superclasses, file.assignment)
    }
}

impl From<SuperclassMap> for MapFile {
    fn from(map: SuperclassMap) -> Self {
        MapFile {
            classes: map.class_names,
            superclasses: map.superclass_names,
            assignment: map.assignment,
        }
    }
}

/// Validated records sharing one class count and taxonomy.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<ProbRecord>,
    superclasses: SuperclassMap,
}

impl Dataset {
    pub fn new(
        mut records: Vec<ProbRecord>,
        superclasses: SuperclassMap,
        mode: SumValidation,
    ) -> Result<Self> {
        let k = superclasses.n_classes();
        for record in &mut records {
            record.validate(k, mode)?;
        }
        Ok(Self {
            records,
            superclasses,
        })
    }

    pub fn records(&self) -> &[ProbRecord] {
        &self.records
    }

    pub fn superclasses(&self) -> &SuperclassMap {
        &self.superclasses
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.superclasses.n_classes()
    }

    pub fn into_records(self) -> Vec<ProbRecord> {
        self.records
    }

    /// Sub-dataset made of the records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            superclasses: self.superclasses.clone(),
        }
    }

    /// Ground-truth kind of every record; fails listing all unlabeled ids.
    pub fn error_kinds(&self) -> Result<Vec<ErrorKind>> {
        self.require_labels()?;
        self.records
            .iter()
            .map(|r| label_error_kind(r, &self.superclasses))
            .collect()
    }

    pub fn require_labels(&self) -> Result<()> {
        let missing: Vec<String> = self
            .records
            .iter()
            .filter(|r| r.true_label.is_none())
            .map(|r| r.id.clone())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::UnlabeledRecords(missing))
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for record in &self.records {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Reads a JSONL record stream, validating every line against `map`.
///
/// Blank lines are skipped. Errors carry the 1-based line number.
pub fn load_dataset<R: BufRead>(
    source: R,
    map: &SuperclassMap,
    mode: SumValidation,
) -> Result<Dataset> {
    let k = map.n_classes();
    let mut records = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut record: ProbRecord = serde_json::from_str(&line).map_err(|e| Error::Line {
            line: line_no,
            reason: e.to_string(),
        })?;
        record.validate(k, mode).map_err(|e| Error::Line {
            line: line_no,
            reason: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(Dataset {
        records,
        superclasses: map.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> SuperclassMap {
        SuperclassMap::from_sizes(&[2, 2]).unwrap()
    }

    fn rec(probs: &[f64], label: Option<usize>) -> ProbRecord {
        ProbRecord::new("r", probs.to_vec(), label)
    }

    #[test]
    fn predicted_class_examples() {
        assert_eq!(rec(&[0.1, 0.7, 0.2], None).predicted_class().unwrap(), 1);
        assert_eq!(rec(&[0.5, 0.5], None).predicted_class().unwrap(), 0);
        assert_eq!(
            rec(&[0.25, 0.25, 0.25, 0.25], None)
                .predicted_class()
                .unwrap(),
            0
        );
    }

    #[test]
    fn predicted_class_rejects_bad_vectors() {
        assert!(rec(&[], None).predicted_class().is_err());
        assert!(rec(&[0.2, f64::NAN], None).predicted_class().is_err());
        assert!(rec(&[f64::INFINITY, 0.0], None).predicted_class().is_err());
    }

    #[test]
    fn error_kind_examples() {
        let map = two_by_two();
        let kind = |p: &[f64]| label_error_kind(&rec(p, Some(0)), &map).unwrap();
        assert_eq!(kind(&[0.6, 0.1, 0.2, 0.1]), ErrorKind::Correct);
        assert_eq!(kind(&[0.1, 0.6, 0.2, 0.1]), ErrorKind::HumanLike);
        assert_eq!(kind(&[0.1, 0.1, 0.6, 0.2]), ErrorKind::NonHuman);
    }

    #[test]
    fn error_kind_needs_label() {
        let err = label_error_kind(&rec(&[0.6, 0.1, 0.2, 0.1], None), &two_by_two());
        assert!(matches!(err, Err(Error::Unlabeled(_))));
    }

    #[test]
    fn map_rejects_single_superclass_and_empty_members() {
        let names = |n: usize| (0..n).map(|i| i.to_string()).collect::<Vec<_>>();
        assert!(SuperclassMap::new(names(3), names(1), vec![0, 0, 0]).is_err());
        assert!(SuperclassMap::new(names(3), names(3), vec![0, 0, 1]).is_err());
        assert!(SuperclassMap::new(names(3), names(2), vec![0, 2, 1]).is_err());
        assert!(SuperclassMap::new(names(3), names(2), vec![0, 1]).is_err());
    }

    #[test]
    fn map_file_schema() {
        let json = r#"{"classes":["a","b","c"],"superclasses":["x","y"],"assignment":[0,1,1]}"#;
        let map: SuperclassMap = serde_json::from_str(json).unwrap();
        assert_eq!(map.members(1), &[1, 2]);
        assert_eq!(serde_json::to_string(&map).unwrap(), json);
        let bad = r#"{"classes":["a","b"],"superclasses":["x","y"],"assignment":[0,0]}"#;
        assert!(serde_json::from_str::<SuperclassMap>(bad).is_err());
    }

    fn seven() -> SuperclassMap {
        SuperclassMap::from_sizes(&[4, 3]).unwrap()
    }

    #[test]
    fn load_happy_path() {
        let text = "\
{\"id\":\"a\",\"probs\":[0.4,0.1,0.1,0.1,0.1,0.1,0.1],\"true_label\":0}
{\"id\":\"b\",\"probs\":[0.1,0.4,0.1,0.1,0.1,0.1,0.1],\"true_label\":null}

{\"id\":\"c\",\"probs\":[0.1,0.1,0.4,0.1,0.1,0.1,0.1]}
";
        let ds = load_dataset(text.as_bytes(), &seven(), SumValidation::Strict).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.records()[2].true_label, None);
    }

    #[test]
    fn load_names_offending_line() {
        let text = "\
{\"id\":\"a\",\"probs\":[0.4,0.1,0.1,0.1,0.1,0.1,0.1],\"true_label\":0}
{\"id\":\"b\",\"probs\":[0.4,0.1,0.1,0.2,0.1,0.1],\"true_label\":0}
";
        let err = load_dataset(text.as_bytes(), &seven(), SumValidation::Strict).unwrap_err();
        assert!(matches!(err, Error::Line { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn load_rejects_malformed_and_out_of_range() {
        let map = seven();
        let bad_json = "{\"id\":\"a\",\"probs\":[0.4,";
        assert!(matches!(
            load_dataset(bad_json.as_bytes(), &map, SumValidation::Strict),
            Err(Error::Line { line: 1, .. })
        ));
        let bad_label = "{\"id\":\"a\",\"probs\":[0.4,0.1,0.1,0.1,0.1,0.1,0.1],\"true_label\":7}";
        assert!(load_dataset(bad_label.as_bytes(), &map, SumValidation::Strict).is_err());
        let negative = "{\"id\":\"a\",\"probs\":[0.5,0.1,0.1,0.1,0.1,0.3,-0.2]}";
        assert!(load_dataset(negative.as_bytes(), &map, SumValidation::Strict).is_err());
    }

    #[test]
    fn sum_validation_modes() {
        let short = "{\"id\":\"a\",\"probs\":[0.2,0.1,0.1,0.1,0.1,0.1,0.1],\"true_label\":0}";
        assert!(load_dataset(short.as_bytes(), &seven(), SumValidation::Strict).is_err());
        let ds = load_dataset(short.as_bytes(), &seven(), SumValidation::Renormalize).unwrap();
        let sum: f64 = ds.records()[0].probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!((ds.records()[0].probs[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn error_kinds_lists_every_unlabeled_id() {
        let map = two_by_two();
        let records = vec![
            ProbRecord::new("x", vec![0.7, 0.1, 0.1, 0.1], None),
            ProbRecord::new("y", vec![0.7, 0.1, 0.1, 0.1], Some(0)),
            ProbRecord::new("z", vec![0.7, 0.1, 0.1, 0.1], None),
        ];
        let ds = Dataset::new(records, map, SumValidation::Strict).unwrap();
        match ds.error_kinds() {
            Err(Error::UnlabeledRecords(ids)) => assert_eq!(ids, vec!["x", "z"]),
            other => panic!("unexpected {other:?}"),
        }
    }
}
