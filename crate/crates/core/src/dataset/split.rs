use std::collections::{BTreeSet, HashSet};
use std::hash::Hasher;

use fnv::FnvHasher;

use super::{normalize_brand, Dataset};
use crate::error::{Error, Result};

/// Number of hash buckets the holdout fraction is resolved against.
pub const HOLDOUT_BUCKETS: u64 = 10_000;

/// 64-bit FNV-1a over the UTF-8 bytes of `image_id`.
pub fn image_hash(image_id: &str) -> u64 {
    let mut hasher = FnvHasher::default();
    hasher.write(image_id.as_bytes());
    hasher.finish()
}

fn in_holdout(image_id: &str, fraction: f64) -> bool {
    ((image_hash(image_id) % HOLDOUT_BUCKETS) as f64) < fraction * HOLDOUT_BUCKETS as f64
}

/// Drops every RoI of the given brands, then every image left without RoIs.
///
/// Images that had no RoIs to begin with are kept.
pub fn exclude_brands(dataset: &Dataset, brands: &BTreeSet<String>) -> Dataset {
    if brands.is_empty() {
        return dataset.clone();
    }
    let brands: HashSet<String> = brands.iter().map(|b| normalize_brand(b)).collect();
    let images = dataset
        .images()
        .iter()
        .filter_map(|image| {
            let had_rois = !image.rois.is_empty();
            let mut image = image.clone();
            image.rois.retain(|r| !brands.contains(r.brand()));
            (!had_rois || !image.rois.is_empty()).then_some(image)
        })
        .collect();
    Dataset::new(dataset.name.clone(), dataset.version.clone(), images)
        .expect("subset of a valid dataset is valid")
}

/// Deterministic image-level split into `(train, validation)`.
///
/// An image is held out iff its FNV-1a hash modulo [`HOLDOUT_BUCKETS`] falls
/// below `fraction * HOLDOUT_BUCKETS`.
pub fn holdout_split(dataset: &Dataset, fraction: f64) -> Result<(Dataset, Dataset)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::OutOfRange {
            name: "holdout fraction",
            value: fraction,
            range: "[0, 1]",
        });
    }
    let (validation, train): (Vec<_>, Vec<_>) = dataset
        .images()
        .iter()
        .cloned()
        .partition(|image| in_holdout(&image.image_id, fraction));
    let part = |images| {
        Dataset::new(dataset.name.clone(), dataset.version.clone(), images)
            .expect("subset of a valid dataset is valid")
    };
    Ok((part(train), part(validation)))
}

/// Union of two datasets; `a`'s images come first. Keeps `a`'s name.
pub fn merge(a: &Dataset, b: &Dataset) -> Result<Dataset> {
    let images = a.images().iter().chain(b.images()).cloned().collect();
    Dataset::new(a.name.clone(), a.version.clone(), images)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;

    fn ds(images: Vec<crate::dataset::ImageRecord>) -> Dataset {
        Dataset::new("d", "", images).unwrap()
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn fnv1a_reference_values() {
        // published FNV-1a 64 test vectors
        assert_eq!(image_hash(""), 0xcbf29ce484222325);
        assert_eq!(image_hash("a"), 0xaf63dc4c8601ec8c);
        assert_eq!(image_hash("foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn exclude_nothing_is_identity() {
        let d = ds(vec![image("1", 50, 50, vec![roi(0, 0, 5, 5, "a")])]);
        assert_eq!(exclude_brands(&d, &BTreeSet::new()), d);
    }

    #[test]
    fn exclude_one_brand() {
        let d = ds(vec![
            image("1", 50, 50, vec![roi(0, 0, 5, 5, "a"), roi(10, 0, 5, 5, "b")]),
            image("2", 50, 50, vec![roi(0, 0, 5, 5, "b")]),
        ]);
        let out = exclude_brands(&d, &set(&["A"]));
        assert_eq!(out.brands(), BTreeSet::from(["b"]));
        assert_eq!(out.len(), 2);
        assert_eq!(out.n_rois(), 2);
    }

    #[test]
    fn fully_emptied_image_dropped_distractor_kept() {
        let d = ds(vec![
            image("1", 50, 50, vec![roi(0, 0, 5, 5, "a"), roi(10, 0, 5, 5, "b")]),
            image("2", 50, 50, vec![roi(0, 0, 5, 5, "c")]),
            image("3", 50, 50, vec![]),
        ]);
        let out = exclude_brands(&d, &set(&["a", "b"]));
        let ids: Vec<_> = out.images().iter().map(|i| i.image_id.as_str()).collect();
        assert_eq!(ids, ["2", "3"]);
    }

    #[test]
    fn holdout_extremes() {
        let d = ds((0..50).map(|i| image(&i.to_string(), 5, 5, vec![])).collect());
        let (train, val) = holdout_split(&d, 0.0).unwrap();
        assert_eq!((train.len(), val.len()), (50, 0));
        let (train, val) = holdout_split(&d, 1.0).unwrap();
        assert_eq!((train.len(), val.len()), (0, 50));
        assert!(holdout_split(&d, 1.5).is_err());
        assert!(holdout_split(&d, -0.1).is_err());
    }

    #[test]
    fn merge_identity_and_conflict() {
        let d = ds(vec![image("x", 5, 5, vec![])]);
        assert_eq!(merge(&d, &Dataset::empty("e")).unwrap(), d);
        let err = merge(&d, &d).unwrap_err();
        assert!(matches!(err, Error::DuplicateImage(id) if id == "x"));
    }

    #[test]
    fn merge_disjoint() {
        let a = ds(vec![image("1", 5, 5, vec![]), image("2", 5, 5, vec![])]);
        let b = ds((3..6).map(|i| image(&i.to_string(), 5, 5, vec![])).collect());
        assert_eq!(merge(&a, &b).unwrap().len(), 5);
    }
}
