#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use conpack::packing::{PackItem, PackPlan, PackingConfig};
use rand::Rng;

/// Check the partition, capacity, padding and composition invariants.
pub fn check_plan(items: &[PackItem], plan: &PackPlan, cfg: &PackingConfig) -> Result<(), String> {
    let cap = u64::from(cfg.capacity);
    if plan.capacity() != cfg.capacity {
        return Err(format!("plan capacity {} != {}", plan.capacity(), cfg.capacity));
    }
    let mut want: HashMap<&PackItem, i64> = HashMap::new();
    for it in items {
        *want.entry(it).or_default() += 1;
    }
    for it in plan.items() {
        *want.entry(it).or_default() -= 1;
    }
    if let Some((it, d)) = want.iter().find(|(_, d)| **d != 0) {
        return Err(format!("partition broken at {:?} (delta {d})", it.id));
    }
    for (i, p) in plan.packs().iter().enumerate() {
        let total: u64 = p.items().iter().map(|x| u64::from(x.length)).sum();
        if p.is_empty() {
            return Err(format!("pack {i} is empty"));
        }
        if total != p.total() || total > cap {
            return Err(format!("pack {i} holds {total} of {cap}"));
        }
        if p.padding(cfg.capacity) + total != cap {
            return Err(format!("pack {i} padding {} wrong", p.padding(cfg.capacity)));
        }
        if cfg.max_samples_per_pack.is_some_and(|m| p.len() > m) {
            return Err(format!("pack {i} has {} items", p.len()));
        }
        if cfg.max_sources_per_pack.is_some_and(|m| p.distinct_sources() > m) {
            return Err(format!("pack {i} mixes {} sources", p.distinct_sources()));
        }
    }
    if let Some(it) = plan.overflow().iter().find(|x| u64::from(x.length) <= cap) {
        return Err(format!("{:?} overflowed but fits", it.id));
    }
    Ok(())
}

pub fn random_items(rng: &mut impl Rng, n: usize, max_len: u32, sources: usize) -> Vec<PackItem> {
    (0..n)
        .map(|i| {
            PackItem::new(
                format!("s{i:05}"),
                rng.gen_range(1..=max_len),
                format!("src{}", rng.gen_range(0..sources)),
            )
        })
        .collect()
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_conpack")
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn conpack")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "conpack {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Every file in `dir`, sorted by name.
pub fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .collect();
    v.sort();
    v
}

/// Compare two output directories byte for byte.
pub fn same_dirs(a: &Path, b: &Path) -> Result<usize, String> {
    let (fa, fb) = (files(a), files(b));
    let names = |v: &[PathBuf]| v.iter().map(|p| p.file_name().unwrap().to_owned()).collect::<Vec<_>>();
    if names(&fa) != names(&fb) {
        return Err(format!("file sets differ: {:?} vs {:?}", names(&fa), names(&fb)));
    }
    for (x, y) in fa.iter().zip(&fb) {
        if std::fs::read(x).unwrap() != std::fs::read(y).unwrap() {
            return Err(format!("{} differs", x.file_name().unwrap().to_string_lossy()));
        }
    }
    Ok(fa.len())
}
