mod common;

use std::collections::BTreeMap;
use std::path::Path;

use image::{Rgb, RgbImage};
use proptest::prelude::*;

use common::{corpus, fast_tools, snapshot};
use tikzbench::dataset::{
    build_dataset, compute_stats, inspect_flags, parse_c2c_query, read_records, split_file_name, split_provenance,
    BuildOptions, DatasetError, Inspection, InspectRules, QueryKind, QueryRecord, Split,
};

fn build(out: &Path, seed: u64) -> tikzbench::dataset::BuildSummary {
    let mut opts = BuildOptions::new(fast_tools(out));
    opts.split_seed = seed;
    build_dataset(&corpus(), out, &opts).unwrap()
}

fn all_records(out: &Path) -> BTreeMap<Split, Vec<QueryRecord>> {
    let mut m = BTreeMap::new();
    for split in [Split::Train, Split::Test] {
        for kind in [QueryKind::S2C, QueryKind::C2C] {
            let recs = read_records(&out.join(split_file_name(split, kind))).unwrap();
            assert!(recs.iter().all(|r| r.kind == kind));
            m.entry(split).or_insert_with(Vec::new).extend(recs);
        }
    }
    m
}

#[test]
fn build_is_deterministic_and_well_formed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sa = build(a.path(), 42);
    let sb = build(b.path(), 42);
    assert_eq!(sa, sb);
    assert_eq!(sa.sources, 5);
    assert!(sa.rejected.is_empty(), "{:?}", sa.rejected);
    assert_eq!(sa.emitted, 10);
    assert_eq!(snapshot(a.path()), snapshot(b.path()));

    let records = all_records(a.path());
    for r in records.values().flatten() {
        assert!(!r.answer.trim().is_empty());
        assert!(!r.inspection.is_rejected());
        match r.kind {
            QueryKind::S2C => {
                let p = a.path().join(r.image_path.as_ref().expect("S2C records carry an image"));
                let img = image::open(&p).unwrap();
                assert_eq!((img.width(), img.height()), (800, 600), "{}", p.display());
            }
            QueryKind::C2C => {
                let (sketch, _) = parse_c2c_query(&r.query).expect("C2C query embeds sketch code");
                assert!(sketch.contains("tikzpicture"));
            }
        }
    }

    let stats: tikzbench::dataset::CorpusStats =
        serde_json::from_slice(&std::fs::read(a.path().join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats, compute_stats(&records, 42));
    let mut total = 0;
    for (split, kinds) in &stats.cells {
        for (kind, cell) in kinds {
            let n = records[split].iter().filter(|r| r.kind == *kind).count();
            assert_eq!(cell.count, n);
            total += n;
            for s in [&cell.query, &cell.answer].into_iter().flatten() {
                assert!(s.min as f64 <= s.avg && s.avg <= s.max as f64);
            }
        }
    }
    assert_eq!(stats.total, total);
}

#[test]
fn splits_follow_provenance() {
    let out = tempfile::tempdir().unwrap();
    build(out.path(), 7);
    let records = all_records(out.path());
    let train: Vec<&str> = records[&Split::Train].iter().map(|r| r.provenance.as_str()).collect();
    for r in &records[&Split::Test] {
        assert!(!train.contains(&r.provenance.as_str()), "{} leaks across splits", r.provenance);
    }
}

#[test]
fn empty_source_is_an_error() {
    let src = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let opts = BuildOptions::new(fast_tools(out.path()));
    assert!(matches!(build_dataset(src.path(), out.path(), &opts), Err(DatasetError::EmptySource(_))));
}

#[test]
fn broken_sources_are_excluded() {
    let src = tempfile::tempdir().unwrap();
    std::fs::copy(corpus().join("mlp.tex"), src.path().join("mlp.tex")).unwrap();
    std::fs::write(src.path().join("broken.tex"), "\\begin{tikzpicture}\n\\draw (0,0) -- (1,1)\n").unwrap();
    let out = tempfile::tempdir().unwrap();
    let s = build_dataset(src.path(), out.path(), &BuildOptions::new(fast_tools(out.path()))).unwrap();
    assert_eq!(s.sources, 2);
    assert_eq!(s.emitted, 2);
    assert_eq!(s.rejected.len(), 1);
    assert_eq!(s.rejected[0].0, "broken");
}

fn record(query: &str) -> QueryRecord {
    QueryRecord {
        id: "x-s2c".into(),
        kind: QueryKind::S2C,
        query: query.into(),
        image_path: Some("images/x.png".into()),
        answer: "\\begin{tikzpicture}\\end{tikzpicture}".into(),
        category: Default::default(),
        provenance: "x".into(),
        inspection: Inspection::Unreviewed,
    }
}

fn drawing(w: u32, h: u32, x0: u32, x1: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    for x in x0..x1 {
        for y in 20..40 {
            if x == x0 || x + 1 == x1 || y == 20 || y == 39 {
                img.put_pixel(x, y, Rgb([0, 0, 0]));
            }
        }
    }
    img
}

#[test]
fn inspection_rules() {
    let rules = InspectRules::default();
    assert_eq!(
        inspect_flags(&record("Draw this:\n```\ncode\n```"), None, &rules),
        Inspection::Rejected("code-in-query".into())
    );
    assert_eq!(
        inspect_flags(&record("Draw it"), Some(&drawing(100, 60, 50, 100)), &rules),
        Inspection::Rejected("truncated".into())
    );
    assert_eq!(inspect_flags(&record("Draw it"), Some(&drawing(100, 60, 20, 80)), &rules), Inspection::Unreviewed);
    let blank = RgbImage::from_pixel(50, 50, Rgb([255, 255, 255]));
    assert_eq!(inspect_flags(&record("Draw it"), Some(&blank), &rules), Inspection::Rejected("blank".into()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_is_a_seeded_partition(n in 0usize..40, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("src/{i:02}")).collect();
        let a = split_provenance(&ids, seed);
        let mut shuffled = ids.clone();
        shuffled.reverse();
        prop_assert_eq!(&a, &split_provenance(&shuffled, seed));
        prop_assert_eq!(a.len(), n);
        let train = a.values().filter(|s| **s == Split::Train).count();
        prop_assert_eq!(train, (0.8 * n as f64).round() as usize);
    }
}
