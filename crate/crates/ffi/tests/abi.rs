use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use conpack_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn path(p: &Path) -> CString {
    c(p.to_str().unwrap())
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(cp_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(cp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn estimate_tokens_matches_grid() {
    let mut out = 0u64;
    unsafe {
        assert_eq!(cp_estimate_tokens(336, 336, 0, 14, 2, &mut out), CpStatus::Ok);
        assert_eq!(out, 144);
        assert_eq!(cp_estimate_tokens(448, 448, 0, 14, 2, &mut out), CpStatus::Ok);
        assert_eq!(out, 256);
        assert_eq!(cp_estimate_tokens(0, 0, 57, 14, 2, &mut out), CpStatus::Ok);
        assert_eq!(out, 57);
        assert_eq!(cp_estimate_tokens(8, 8, 0, 14, 2, &mut out), CpStatus::InvalidData);
    }
    assert!(!last_error().is_empty());
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        assert_eq!(cp_estimate_tokens(336, 336, 0, 14, 2, ptr::null_mut()), CpStatus::NullPointer);
        let mut plan = ptr::null_mut();
        assert_eq!(cp_plan_load(ptr::null(), &mut plan), CpStatus::NullPointer);
        assert!(plan.is_null());
        assert_eq!(cp_plan_num_packs(ptr::null()), 0);
        cp_plan_free(ptr::null_mut());
    }
}

#[test]
fn pack_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let items = cp_items_new();
        for (id, len) in [("a", 6), ("b", 5), ("c", 4), ("d", 3), ("e", 2)] {
            assert_eq!(cp_items_push(items, c(id).as_ptr(), c("web").as_ptr(), len), CpStatus::Ok);
        }
        assert_eq!(cp_items_len(items), 5);
        assert_eq!(cp_items_push(items, c("z").as_ptr(), c("web").as_ptr(), 0), CpStatus::InvalidData);

        let mut cfg = cp_packing_config_default();
        cfg.capacity = 10;
        cfg.strategy = CpStrategy::Ffd;
        let mut plan = ptr::null_mut();
        assert_eq!(cp_pack(items, &cfg, &mut plan), CpStatus::Ok);
        assert_eq!(cp_plan_num_packs(plan), 2);
        assert_eq!(cp_plan_overflow_len(plan), 0);

        let mut packs = Vec::new();
        for p in 0..cp_plan_num_packs(plan) {
            let mut ids = Vec::new();
            for i in 0..cp_plan_pack_len(plan, p) {
                let (mut len, mut off, mut id) = (0u32, 0u64, ptr::null_mut());
                assert_eq!(cp_plan_item(plan, p, i, &mut len, &mut off, &mut id), CpStatus::Ok);
                ids.push(CStr::from_ptr(id).to_str().unwrap().to_owned());
                cp_string_free(id);
            }
            packs.push(ids);
        }
        assert_eq!(packs, [vec!["a", "c"], vec!["b", "d", "e"]]);
        let (mut len, mut off) = (0u32, 0u64);
        assert_eq!(
            cp_plan_item(plan, 5, 0, &mut len, &mut off, ptr::null_mut()),
            CpStatus::OutOfBounds
        );

        let mut stats = std::mem::zeroed::<CpPackingStats>();
        assert_eq!(cp_plan_stats(plan, 0.95, &mut stats), CpStatus::Ok);
        assert_eq!(stats.total_tokens, 20);
        assert_eq!(stats.padding_tokens, 0);
        assert!((stats.compression_ratio - 2.5).abs() < 1e-12);

        let file = path(&dir.path().join("plan.jsonl"));
        assert_eq!(cp_plan_save(plan, file.as_ptr(), 0.95), CpStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(cp_plan_load(file.as_ptr(), &mut back), CpStatus::Ok);
        assert_eq!(cp_plan_num_packs(back), 2);
        cp_plan_free(back);
        cp_plan_free(plan);

        let mut empty = ptr::null_mut();
        let none = cp_items_new();
        assert_eq!(cp_pack(none, &cfg, &mut empty), CpStatus::Ok);
        assert_eq!(cp_plan_stats(empty, 0.95, &mut stats), CpStatus::Ok);
        assert!(stats.empty && stats.utilization.is_nan());
        cp_plan_free(empty);
        cp_items_free(none);
        cp_items_free(items);
    }
}

#[test]
fn topk_weights_and_sampling() {
    let dir = tempfile::tempdir().unwrap();
    let tsv = dir.path().join("vocab.tsv");
    std::fs::write(&tsv, "0\tcat\n1\tdog\n2\tcar\n").unwrap();
    unsafe {
        let concept_data: [f32; 6] = [1.0, 0.0, 0.0, 1.0, -1.0, 0.0];
        let mut concepts = ptr::null_mut();
        assert_eq!(cp_embeddings_from_data(3, 2, concept_data.as_ptr(), &mut concepts), CpStatus::Ok);
        let emb = path(&dir.path().join("concepts.emb"));
        assert_eq!(cp_embeddings_save(concepts, emb.as_ptr()), CpStatus::Ok);
        let mut vocab = ptr::null_mut();
        assert_eq!(cp_vocabulary_load(path(&tsv).as_ptr(), emb.as_ptr(), &mut vocab), CpStatus::Ok);
        assert_eq!(cp_vocabulary_size(vocab), 3);

        let image_data: [f32; 6] = [2.0, 0.1, 0.1, 3.0, 1.0, 1.0];
        let mut images = ptr::null_mut();
        assert_eq!(cp_embeddings_from_data(3, 2, image_data.as_ptr(), &mut images), CpStatus::Ok);
        let mut unit = ptr::null_mut();
        assert_eq!(cp_embeddings_normalize(images, &mut unit), CpStatus::Ok);
        let mut row = [0f32; 6];
        assert_eq!(cp_embeddings_copy(unit, row.as_mut_ptr(), 6), CpStatus::Ok);
        assert!((row[0].hypot(row[1]) - 1.0).abs() < 1e-6);

        let mut a = ptr::null_mut();
        assert_eq!(cp_topk(images, vocab, 4, &mut a), CpStatus::InvalidArgument);
        assert_eq!(cp_topk(images, vocab, 1, &mut a), CpStatus::Ok);
        assert_eq!(cp_assignments_len(a), 3);
        assert_eq!(cp_assignments_k(a, 0), 1);
        let (mut idx, mut sim) = ([0usize; 1], [0f64; 1]);
        assert_eq!(cp_assignments_get(a, 1, idx.as_mut_ptr(), sim.as_mut_ptr(), 1), CpStatus::Ok);
        assert_eq!(idx[0], 1);
        let mut caption = ptr::null_mut();
        assert_eq!(cp_pseudo_caption(a, 0, vocab, &mut caption), CpStatus::Ok);
        assert_eq!(CStr::from_ptr(caption).to_str().unwrap(), "cat");
        cp_string_free(caption);

        let mut w = [0f64; 3];
        assert_eq!(cp_image_weights(a, 3, CpWeightMode::Mean, w.as_mut_ptr(), 3), CpStatus::Ok);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // cat appears twice, dog once, car never
        assert!((w[1] - 0.5).abs() < 1e-12 && (w[0] - 0.25).abs() < 1e-12);

        let mut picked = [usize::MAX; 2];
        assert_eq!(cp_sample_balanced(w.as_ptr(), 3, 2, 9, false, picked.as_mut_ptr()), CpStatus::Ok);
        assert_ne!(picked[0], picked[1]);
        assert_eq!(cp_sample_balanced(w.as_ptr(), 3, 4, 9, false, picked.as_mut_ptr()), CpStatus::InvalidArgument);

        let file = path(&dir.path().join("a.jsonl"));
        assert_eq!(cp_assignments_save(a, file.as_ptr()), CpStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(cp_assignments_load(file.as_ptr(), &mut back), CpStatus::Ok);
        assert_eq!(cp_assignments_len(back), 3);

        for h in [a, back] {
            cp_assignments_free(h);
        }
        cp_vocabulary_free(vocab);
        for h in [concepts, images, unit] {
            cp_embeddings_free(h);
        }
    }
}

#[test]
fn missing_file_is_io_error() {
    let mut m = ptr::null_mut();
    let status = unsafe { cp_embeddings_load(c("/nonexistent/x.emb").as_ptr(), &mut m) };
    assert_eq!(status, CpStatus::Io);
    assert!(last_error().contains("/nonexistent/x.emb"));
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/conpack.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["cp_pack", "cp_topk", "cp_plan_stats", "cp_last_error_message", "CpStatus"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"conpack.h\"\nint main(void){CpPackingConfig c=cp_packing_config_default();return (int)c.capacity==0;}\n",
    )
    .unwrap();
    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    else {
        eprintln!("cc not available; skipped C compile check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
