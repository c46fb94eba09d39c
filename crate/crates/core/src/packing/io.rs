//! Plan files: one JSON object per pack, then one trailing object carrying
//! the stats and the overflow list.
//!
//! ```text
//! {"pack":0,"capacity":8192,"items":[{"id":"a","len":700,"off":0,"src":"web"},...],"pad":12}
//! ...
//! {"stats":{...},"overflow":[{"id":"z","len":9000,"src":"doc"}]}
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{packing_stats, Pack, PackItem, PackPlan, PackingStats};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct ItemRecord {
    id: String,
    len: u32,
    off: u64,
    src: String,
}

#[derive(Serialize, Deserialize)]
struct PackRecord {
    pack: usize,
    capacity: u32,
    items: Vec<ItemRecord>,
    pad: u64,
}

#[derive(Serialize, Deserialize)]
struct OverflowRecord {
    id: String,
    len: u32,
    src: String,
}

#[derive(Serialize, Deserialize)]
struct Trailer {
    stats: PackingStats,
    overflow: Vec<OverflowRecord>,
}

pub fn write_plan<W: Write>(mut writer: W, plan: &PackPlan, min_utilization: f64) -> Result<()> {
    let json = |e: serde_json::Error| Error::Stream(e.into());
    for (index, pack) in plan.packs().iter().enumerate() {
        let record = PackRecord {
            pack: index,
            capacity: plan.capacity(),
            items: pack
                .items()
                .iter()
                .zip(pack.offsets())
                .map(|(item, off)| ItemRecord {
                    id: item.id.clone(),
                    len: item.length,
                    off,
                    src: item.source.clone(),
                })
                .collect(),
            pad: pack.padding(plan.capacity()),
        };
        serde_json::to_writer(&mut writer, &record).map_err(json)?;
        writer.write_all(b"\n")?;
    }
    let trailer = Trailer {
        stats: packing_stats(plan, min_utilization),
        overflow: plan
            .overflow()
            .iter()
            .map(|i| OverflowRecord {
                id: i.id.clone(),
                len: i.length,
                src: i.source.clone(),
            })
            .collect(),
    };
    serde_json::to_writer(&mut writer, &trailer).map_err(json)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

/// Parse and validate a plan file: offsets and padding must match the item
/// lengths, packs must fit, the trailer must agree with the packs, and no
/// sample id may appear twice.
pub fn read_plan<R: BufRead>(reader: R) -> Result<(PackPlan, PackingStats)> {
    let mut lines = Vec::new();
    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            lines.push((ln + 1, line));
        }
    }
    let (trailer_line, trailer_text) = lines
        .pop()
        .ok_or(Error::Parse {
            line: 1,
            message: "plan file is empty".into(),
        })?;
    let trailer: Trailer = serde_json::from_str(&trailer_text).map_err(|e| Error::Parse {
        line: trailer_line,
        message: format!("bad trailing stats record: {e}"),
    })?;
    let capacity = trailer.stats.capacity;

    let mut packs = Vec::with_capacity(lines.len());
    for (line, text) in lines {
        let bad = |message: String| Error::Parse { line, message };
        let record: PackRecord = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if record.pack != packs.len() {
            return Err(bad(format!(
                "pack number {} out of sequence (expected {})",
                record.pack,
                packs.len()
            )));
        }
        if record.capacity != capacity {
            return Err(bad(format!(
                "capacity {} disagrees with {capacity}",
                record.capacity
            )));
        }
        let mut expected_off = 0u64;
        let mut items = Vec::with_capacity(record.items.len());
        for it in record.items {
            if it.off != expected_off {
                return Err(bad(format!("item {:?} has offset {}, expected {expected_off}", it.id, it.off)));
            }
            if it.len == 0 {
                return Err(bad(format!("item {:?} has zero length", it.id)));
            }
            expected_off += u64::from(it.len);
            items.push(PackItem {
                id: it.id,
                length: it.len,
                source: it.src,
            });
        }
        let pack = Pack::new(items).map_err(|_| bad("empty pack".into()))?;
        if pack.total() > u64::from(capacity) {
            return Err(bad(format!("pack holds {} tokens, over capacity {capacity}", pack.total())));
        }
        if record.pad != pack.padding(capacity) {
            return Err(bad(format!(
                "padding {} disagrees with {}",
                record.pad,
                pack.padding(capacity)
            )));
        }
        packs.push(pack);
    }

    let overflow = trailer
        .overflow
        .into_iter()
        .map(|o| PackItem {
            id: o.id,
            length: o.len,
            source: o.src,
        })
        .collect();
    let plan = PackPlan::new(capacity, packs, overflow)?;
    plan.ensure_unique_ids()?;
    let stats = trailer.stats;
    if stats.num_packs != plan.packs().len() || stats.overflow_count != plan.overflow().len() {
        return Err(Error::Parse {
            line: trailer_line,
            message: "trailing stats disagree with the packs".into(),
        });
    }
    Ok((plan, stats))
}

pub fn save_plan(path: impl AsRef<Path>, plan: &PackPlan, min_utilization: f64) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_plan(BufWriter::new(file), plan, min_utilization)
}

pub fn load_plan_with_stats(path: impl AsRef<Path>) -> Result<(PackPlan, PackingStats)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_plan(BufReader::new(file))
}

pub fn load_plan(path: impl AsRef<Path>) -> Result<PackPlan> {
    load_plan_with_stats(path).map(|(plan, _)| plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packing::pack_ffd;

    fn items(lengths: &[u32]) -> Vec<PackItem> {
        lengths
            .iter()
            .enumerate()
            .map(|(i, &l)| PackItem::new(format!("s{i}"), l, "web"))
            .collect()
    }

    fn emit(plan: &PackPlan) -> String {
        let mut buf = Vec::new();
        write_plan(&mut buf, plan, 0.9).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn record_layout() {
        let plan = pack_ffd(&items(&[5, 3]), 10).unwrap();
        let text = emit(&plan);
        let first = text.lines().next().unwrap();
        assert_eq!(
            first,
            r#"{"pack":0,"capacity":10,"items":[{"id":"s0","len":5,"off":0,"src":"web"},{"id":"s1","len":3,"off":5,"src":"web"}],"pad":2}"#
        );
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().last().unwrap().starts_with(r#"{"stats":{"capacity":10,"#));
    }

    #[test]
    fn round_trip_with_overflow() {
        let plan = pack_ffd(&items(&[5, 5, 4, 3, 3, 12]), 10).unwrap();
        let (back, stats) = read_plan(emit(&plan).as_bytes()).unwrap();
        assert_eq!(back, plan);
        assert_eq!(stats.overflow_count, 1);
    }

    #[test]
    fn empty_plan_round_trips() {
        let plan = pack_ffd(&[], 10).unwrap();
        assert_eq!(read_plan(emit(&plan).as_bytes()).unwrap().0, plan);
    }

    #[test]
    fn rejects_duplicate_ids() {
        let mut its = items(&[6, 6]);
        its[1].id = "s0".into();
        let plan = pack_ffd(&its, 10).unwrap();
        assert!(matches!(read_plan(emit(&plan).as_bytes()), Err(Error::Partition(_))));
    }

    #[test]
    fn rejects_tampered_records() {
        let text = emit(&pack_ffd(&items(&[5, 3]), 10).unwrap());
        for (from, to) in [
            (r#""off":5"#, r#""off":4"#),
            (r#""pad":2"#, r#""pad":3"#),
            (r#""pack":0"#, r#""pack":1"#),
            (r#""num_packs":1"#, r#""num_packs":2"#),
        ] {
            let bad = text.replacen(from, to, 1);
            assert!(read_plan(bad.as_bytes()).is_err(), "accepted {to}");
        }
        assert!(read_plan(&b""[..]).is_err());
        assert!(read_plan(&b"not json\n"[..]).is_err());
    }
}
