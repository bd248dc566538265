//! Built-in superclass taxonomies for the three reference domains.

use crate::error::{Error, Result};
use crate::types::SuperclassMap;

const CAT_BREEDS: [&str; 12] = [
    "Abyssinian",
    "Bengal",
    "Birman",
    "Bombay",
    "British_Shorthair",
    "Egyptian_Mau",
    "Maine_Coon",
    "Persian",
    "Ragdoll",
    "Russian_Blue",
    "Siamese",
    "Sphynx",
];

const DOG_BREEDS: [&str; 25] = [
    "american_bulldog",
    "american_pit_bull_terrier",
    "basset_hound",
    "beagle",
    "boxer",
    "chihuahua",
    "english_cocker_spaniel",
    "english_setter",
    "german_shorthaired",
    "great_pyrenees",
    "havanese",
    "japanese_chin",
    "keeshond",
    "leonberger",
    "miniature_pinscher",
    "newfoundland",
    "pomeranian",
    "pug",
    "saint_bernard",
    "samoyed",
    "scottish_terrier",
    "shiba_inu",
    "staffordshire_bull_terrier",
    "wheaten_terrier",
    "yorkshire_terrier",
];

pub const PRESET_NAMES: [&str; 3] = ["animal", "isic", "sicap"];

/// 37 pet breeds: cats (0..12) versus dogs (12..37).
pub fn animal() -> SuperclassMap {
    let classes = CAT_BREEDS
        .iter()
        .chain(DOG_BREEDS.iter())
        .map(|s| s.to_string())
        .collect();
    let assignment = (0..37).map(|i| usize::from(i >= 12)).collect();
    SuperclassMap::new(classes, vec!["cat".into(), "dog".into()], assignment)
        .expect("static taxonomy is valid")
}

/// Seven skin-lesion diagnoses. Benign: NV, BKL, DF, VASC. Malignant: MEL, BCC, AKIEC.
pub fn isic() -> SuperclassMap {
    let table = [
        ("MEL", 1),
        ("NV", 0),
        ("BCC", 1),
        ("AKIEC", 1),
        ("BKL", 0),
        ("DF", 0),
        ("VASC", 0),
    ];
    build(&table)
}

/// Prostate tissue: non-cancerous is benign, Gleason grades 3 to 5 are malignant.
pub fn sicap() -> SuperclassMap {
    build(&[("NC", 0), ("G3", 1), ("G4", 1), ("G5", 1)])
}

fn build(table: &[(&str, usize)]) -> SuperclassMap {
    SuperclassMap::new(
        table.iter().map(|(n, _)| n.to_string()).collect(),
        vec!["benign".into(), "malignant".into()],
        table.iter().map(|(_, s)| *s).collect(),
    )
    .expect("static taxonomy is valid")
}

pub fn by_name(name: &str) -> Result<SuperclassMap> {
    match name {
        "animal" => Ok(animal()),
        "isic" => Ok(isic()),
        "sicap" => Ok(sicap()),
        other => Err(Error::Config(format!(
            "unknown preset `{other}` (expected one of {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        let a = animal();
        assert_eq!(
            (a.n_classes(), a.members(0).len(), a.members(1).len()),
            (37, 12, 25)
        );
        let i = isic();
        let benign: Vec<&str> = i
            .members(0)
            .iter()
            .map(|&c| i.class_names()[c].as_str())
            .collect();
        assert_eq!(benign, ["NV", "BKL", "DF", "VASC"]);
        let s = sicap();
        assert_eq!(s.members(0), &[0]);
        assert_eq!(s.members(1), &[1, 2, 3]);
        assert!(by_name("mnist").is_err());
    }
}
