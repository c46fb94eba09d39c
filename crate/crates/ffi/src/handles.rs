use std::ffi::c_char;
use std::slice;

use conpack::balance::{self, ImageWeightVector, WeightMode};
use conpack::concepts::{self, ConceptAssignment, ConceptVocabulary, EmbeddingMatrix};
use conpack::manifest::{self, ImageSize, SampleRecord};
use conpack::packing::{self, PackItem, PackPlan, PackingConfig, Strategy};

use crate::status::{guard, owned_c_string, str_arg, CpStatus, FfiError};

/// Dense row-major embedding matrix.
pub struct CpEmbeddings(EmbeddingMatrix);

/// Concept names with their embeddings.
pub struct CpVocabulary(ConceptVocabulary);

/// Ranked top-K concepts for a list of samples.
pub struct CpAssignments(Vec<ConceptAssignment>);

/// Growable list of items to pack.
pub struct CpItems(Vec<PackItem>);

/// A packing plan.
pub struct CpPlan(PackPlan);

/// Top-K weighting rule.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpWeightMode {
    Mean = 0,
    Sum = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpStrategy {
    Ffd = 0,
    Bucket = 1,
}

/// Packing knobs. A zero cap means "no cap".
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CpPackingConfig {
    pub capacity: u32,
    pub strategy: CpStrategy,
    pub num_buckets: u32,
    pub max_samples_per_pack: usize,
    pub min_utilization: f64,
    pub max_sources_per_pack: usize,
    pub shards: usize,
    pub seed: u64,
}

/// Plan statistics. Ratios are NaN when the plan has no packs.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CpPackingStats {
    pub capacity: u32,
    pub num_samples: usize,
    pub num_packed: usize,
    pub num_packs: usize,
    pub overflow_count: usize,
    pub total_tokens: u64,
    pub padding_tokens: u64,
    pub compression_ratio: f64,
    pub compression_ratio_with_overflow: f64,
    pub utilization: f64,
    pub success_rate: f64,
    pub min_utilization: f64,
    pub max_samples_in_pack: usize,
    pub empty: bool,
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), FfiError> {
    if out.is_null() {
        return Err(FfiError::null("output pointer"));
    }
    out.write(value);
    Ok(())
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, FfiError> {
    ptr.as_ref().ok_or_else(|| FfiError::null(what))
}

unsafe fn input<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], FfiError> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(FfiError::null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], FfiError> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(FfiError::null(what));
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

fn out_of_bounds(what: &str, index: usize, len: usize) -> FfiError {
    FfiError::new(
        CpStatus::OutOfBounds,
        format!("{what} index {index} out of range (len {len})"),
    )
}

// ---- embeddings ----------------------------------------------------------

/// Load an EMB1 embedding file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_embeddings_load(
    path: *const c_char,
    out: *mut *mut CpEmbeddings,
) -> CpStatus {
    guard(|| {
        let m = concepts::load_embeddings(str_arg(path, "path")?)?;
        put(out, boxed(CpEmbeddings(m)))
    })
}

/// Copy `rows * dim` floats into a new matrix.
///
/// # Safety
/// `data` must point to `rows * dim` floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_embeddings_from_data(
    rows: usize,
    dim: usize,
    data: *const f32,
    out: *mut *mut CpEmbeddings,
) -> CpStatus {
    guard(|| {
        let len = rows
            .checked_mul(dim)
            .ok_or_else(|| FfiError::new(CpStatus::InvalidArgument, "rows * dim overflows"))?;
        let values = input(data, len, "data")?.to_vec();
        put(out, boxed(CpEmbeddings(EmbeddingMatrix::new(rows, dim, values)?)))
    })
}

/// # Safety
/// `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_embeddings_rows(m: *const CpEmbeddings) -> usize {
    m.as_ref().map_or(0, |m| m.0.rows())
}

/// # Safety
/// `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_embeddings_dim(m: *const CpEmbeddings) -> usize {
    m.as_ref().map_or(0, |m| m.0.dim())
}

/// Copy the matrix into `buf`, which must hold `rows * dim` floats.
///
/// # Safety
/// `m` must be a live handle and `buf` writable for `len` floats.
#[no_mangle]
pub unsafe extern "C" fn cp_embeddings_copy(
    m: *const CpEmbeddings,
    buf: *mut f32,
    len: usize,
) -> CpStatus {
    guard(|| {
        let m = handle(m, "embeddings")?;
        if len < m.0.data().len() {
            return Err(FfiError::new(CpStatus::InvalidArgument, "buffer too small"));
        }
        output(buf, len, "buf")?[..m.0.data().len()].copy_from_slice(m.0.data());
        Ok(())
    })
}

/// Row-normalized copy of `m`.
///
/// # Safety
/// `m` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_embeddings_normalize(
    m: *const CpEmbeddings,
    out: *mut *mut CpEmbeddings,
) -> CpStatus {
    guard(|| {
        let n = concepts::l2_normalize(&handle(m, "embeddings")?.0)?;
        put(out, boxed(CpEmbeddings(n)))
    })
}

/// # Safety
/// `m` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cp_embeddings_save(m: *const CpEmbeddings, path: *const c_char) -> CpStatus {
    guard(|| {
        concepts::save_embeddings(str_arg(path, "path")?, &handle(m, "embeddings")?.0)?;
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cp_embeddings_free(m: *mut CpEmbeddings) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

// ---- vocabulary and assignment -------------------------------------------

/// Load a `index<TAB>name` TSV and its EMB1 embedding file.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_vocabulary_load(
    tsv_path: *const c_char,
    embeddings_path: *const c_char,
    out: *mut *mut CpVocabulary,
) -> CpStatus {
    guard(|| {
        let v = ConceptVocabulary::load(
            str_arg(tsv_path, "tsv_path")?,
            str_arg(embeddings_path, "embeddings_path")?,
        )?;
        put(out, boxed(CpVocabulary(v)))
    })
}

/// # Safety
/// `v` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_vocabulary_size(v: *const CpVocabulary) -> usize {
    v.as_ref().map_or(0, |v| v.0.size())
}

/// # Safety
/// `v` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cp_vocabulary_free(v: *mut CpVocabulary) {
    if !v.is_null() {
        drop(Box::from_raw(v));
    }
}

/// Exact top-`k` concepts for every image row.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_topk(
    images: *const CpEmbeddings,
    vocab: *const CpVocabulary,
    k: usize,
    out: *mut *mut CpAssignments,
) -> CpStatus {
    guard(|| {
        let a = concepts::topk_concepts(&handle(images, "images")?.0, &handle(vocab, "vocab")?.0, k)?;
        put(out, boxed(CpAssignments(a)))
    })
}

/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_assignments_load(
    path: *const c_char,
    out: *mut *mut CpAssignments,
) -> CpStatus {
    guard(|| {
        let a = concepts::load_assignments(str_arg(path, "path")?)?;
        put(out, boxed(CpAssignments(a)))
    })
}

/// # Safety
/// `a` must be live and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cp_assignments_save(a: *const CpAssignments, path: *const c_char) -> CpStatus {
    guard(|| {
        concepts::save_assignments(str_arg(path, "path")?, &handle(a, "assignments")?.0)?;
        Ok(())
    })
}

/// # Safety
/// `a` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_assignments_len(a: *const CpAssignments) -> usize {
    a.as_ref().map_or(0, |a| a.0.len())
}

/// Number of concepts assigned to sample `i`, or 0 when out of range.
///
/// # Safety
/// `a` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_assignments_k(a: *const CpAssignments, i: usize) -> usize {
    a.as_ref().and_then(|a| a.0.get(i)).map_or(0, |x| x.k())
}

/// Copy sample `i`'s concept indices and similarities, best first. Both
/// buffers must hold at least `cp_assignments_k(a, i)` entries.
///
/// # Safety
/// `a` must be live; buffers must be writable for `cap` entries.
#[no_mangle]
pub unsafe extern "C" fn cp_assignments_get(
    a: *const CpAssignments,
    i: usize,
    indices: *mut usize,
    similarities: *mut f64,
    cap: usize,
) -> CpStatus {
    guard(|| {
        let all = &handle(a, "assignments")?.0;
        let x = all.get(i).ok_or_else(|| out_of_bounds("sample", i, all.len()))?;
        if cap < x.k() {
            return Err(FfiError::new(CpStatus::InvalidArgument, "buffer too small"));
        }
        let idx = output(indices, cap, "indices")?;
        let sim = output(similarities, cap, "similarities")?;
        for (r, c) in x.concepts().iter().enumerate() {
            idx[r] = c.index;
            sim[r] = c.similarity;
        }
        Ok(())
    })
}

/// Pseudo-caption for sample `i`; free the result with `cp_string_free`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_pseudo_caption(
    a: *const CpAssignments,
    i: usize,
    vocab: *const CpVocabulary,
    out: *mut *mut c_char,
) -> CpStatus {
    guard(|| {
        let all = &handle(a, "assignments")?.0;
        let x = all.get(i).ok_or_else(|| out_of_bounds("sample", i, all.len()))?;
        let caption = concepts::build_pseudo_caption(x, &handle(vocab, "vocab")?.0)?;
        put(out, owned_c_string(caption))
    })
}

/// # Safety
/// `a` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cp_assignments_free(a: *mut CpAssignments) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

// ---- balancing -----------------------------------------------------------

/// Normalized inverse-frequency weight per sample, written to `weights`
/// (length `cp_assignments_len(a)`).
///
/// # Safety
/// `a` must be live; `weights` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cp_image_weights(
    a: *const CpAssignments,
    vocab_size: usize,
    mode: CpWeightMode,
    weights: *mut f64,
    len: usize,
) -> CpStatus {
    guard(|| {
        let all = &handle(a, "assignments")?.0;
        if len != all.len() {
            return Err(FfiError::new(CpStatus::InvalidArgument, "weights length must equal sample count"));
        }
        let freqs = balance::concept_frequencies(all, vocab_size)?;
        let mode = match mode {
            CpWeightMode::Mean => WeightMode::Mean,
            CpWeightMode::Sum => WeightMode::Sum,
        };
        let w = balance::image_weights(all, &freqs, mode)?;
        output(weights, len, "weights")?.copy_from_slice(w.weights());
        Ok(())
    })
}

/// Draw `n` indices from a normalized weight vector into `out`.
///
/// # Safety
/// `weights` must hold `len` doubles and `out` be writable for `n` entries.
#[no_mangle]
pub unsafe extern "C" fn cp_sample_balanced(
    weights: *const f64,
    len: usize,
    n: usize,
    seed: u64,
    replacement: bool,
    out: *mut usize,
) -> CpStatus {
    guard(|| {
        let w = ImageWeightVector::new(input(weights, len, "weights")?.to_vec())?;
        let picked = balance::sample_balanced(&w, n, seed, replacement)?;
        output(out, n, "out")?.copy_from_slice(&picked);
        Ok(())
    })
}

// ---- manifest ------------------------------------------------------------

/// Total tokens for one sample. Pass `width = height = 0` for text-only.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_estimate_tokens(
    width: u32,
    height: u32,
    text_tokens: u32,
    patch: u32,
    merge: u32,
    out: *mut u64,
) -> CpStatus {
    guard(|| {
        let rec = SampleRecord {
            image: (width > 0 || height > 0).then_some(ImageSize { w: width, h: height }),
            patch,
            merge,
            ..SampleRecord::text("ffi", "ffi", text_tokens)
        };
        put(out, manifest::estimate_tokens(&rec)?)
    })
}

// ---- packing -------------------------------------------------------------

#[no_mangle]
pub extern "C" fn cp_items_new() -> *mut CpItems {
    boxed(CpItems(Vec::new()))
}

/// Load a manifest (full records or `{"id","source","length"}` lines).
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_items_load(path: *const c_char, out: *mut *mut CpItems) -> CpStatus {
    guard(|| {
        let items = manifest::load_pack_items(str_arg(path, "path")?)?;
        put(out, boxed(CpItems(items)))
    })
}

/// # Safety
/// `items` must be live; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cp_items_push(
    items: *mut CpItems,
    id: *const c_char,
    source: *const c_char,
    length: u32,
) -> CpStatus {
    guard(|| {
        let list = items.as_mut().ok_or_else(|| FfiError::null("items"))?;
        if length == 0 {
            return Err(FfiError::new(CpStatus::InvalidData, "length must be at least 1"));
        }
        list.0
            .push(PackItem::new(str_arg(id, "id")?, length, str_arg(source, "source")?));
        Ok(())
    })
}

/// # Safety
/// `items` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_items_len(items: *const CpItems) -> usize {
    items.as_ref().map_or(0, |i| i.0.len())
}

/// # Safety
/// `items` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cp_items_free(items: *mut CpItems) {
    if !items.is_null() {
        drop(Box::from_raw(items));
    }
}

#[no_mangle]
pub extern "C" fn cp_packing_config_default() -> CpPackingConfig {
    let d = PackingConfig::default();
    CpPackingConfig {
        capacity: d.capacity,
        strategy: CpStrategy::Bucket,
        num_buckets: d.num_buckets,
        max_samples_per_pack: 0,
        min_utilization: d.min_utilization,
        max_sources_per_pack: 0,
        shards: d.shards,
        seed: d.seed,
    }
}

impl From<&CpPackingConfig> for PackingConfig {
    fn from(c: &CpPackingConfig) -> Self {
        PackingConfig {
            capacity: c.capacity,
            strategy: match c.strategy {
                CpStrategy::Ffd => Strategy::Ffd,
                CpStrategy::Bucket => Strategy::Bucket,
            },
            num_buckets: c.num_buckets,
            max_samples_per_pack: (c.max_samples_per_pack > 0).then_some(c.max_samples_per_pack),
            min_utilization: c.min_utilization,
            max_sources_per_pack: (c.max_sources_per_pack > 0).then_some(c.max_sources_per_pack),
            shards: c.shards,
            seed: c.seed,
        }
    }
}

/// # Safety
/// `items` and `config` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_pack(
    items: *const CpItems,
    config: *const CpPackingConfig,
    out: *mut *mut CpPlan,
) -> CpStatus {
    guard(|| {
        let cfg = PackingConfig::from(handle(config, "config")?);
        let plan = packing::pack(&handle(items, "items")?.0, &cfg)?;
        put(out, boxed(CpPlan(plan)))
    })
}

/// # Safety
/// `plan` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_plan_num_packs(plan: *const CpPlan) -> usize {
    plan.as_ref().map_or(0, |p| p.0.packs().len())
}

/// # Safety
/// `plan` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_plan_overflow_len(plan: *const CpPlan) -> usize {
    plan.as_ref().map_or(0, |p| p.0.overflow().len())
}

/// Number of items in pack `pack`, or 0 when out of range.
///
/// # Safety
/// `plan` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_plan_pack_len(plan: *const CpPlan, pack: usize) -> usize {
    plan.as_ref()
        .and_then(|p| p.0.packs().get(pack))
        .map_or(0, |p| p.len())
}

/// Length and offset of item `item` in pack `pack`; its id is returned as
/// an owned string through `id` when `id` is non-null.
///
/// # Safety
/// `plan` must be live; out pointers writable or null (for `id`).
#[no_mangle]
pub unsafe extern "C" fn cp_plan_item(
    plan: *const CpPlan,
    pack: usize,
    item: usize,
    length: *mut u32,
    offset: *mut u64,
    id: *mut *mut c_char,
) -> CpStatus {
    guard(|| {
        let packs = handle(plan, "plan")?.0.packs();
        let p = packs.get(pack).ok_or_else(|| out_of_bounds("pack", pack, packs.len()))?;
        let it = p.items().get(item).ok_or_else(|| out_of_bounds("item", item, p.len()))?;
        put(length, it.length)?;
        put(offset, p.offsets()[item])?;
        if !id.is_null() {
            id.write(owned_c_string(it.id.clone()));
        }
        Ok(())
    })
}

/// # Safety
/// `plan` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_plan_stats(
    plan: *const CpPlan,
    min_utilization: f64,
    out: *mut CpPackingStats,
) -> CpStatus {
    guard(|| {
        let s = packing::packing_stats(&handle(plan, "plan")?.0, min_utilization);
        let nan = |x: Option<f64>| x.unwrap_or(f64::NAN);
        put(
            out,
            CpPackingStats {
                capacity: s.capacity,
                num_samples: s.num_samples,
                num_packed: s.num_packed,
                num_packs: s.num_packs,
                overflow_count: s.overflow_count,
                total_tokens: s.total_tokens,
                padding_tokens: s.padding_tokens,
                compression_ratio: nan(s.compression_ratio),
                compression_ratio_with_overflow: nan(s.compression_ratio_with_overflow),
                utilization: nan(s.utilization),
                success_rate: nan(s.success_rate),
                min_utilization: s.min_utilization,
                max_samples_in_pack: s.max_samples_in_pack,
                empty: s.empty,
            },
        )
    })
}

/// Write the plan as JSON Lines.
///
/// # Safety
/// `plan` must be live and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cp_plan_save(
    plan: *const CpPlan,
    path: *const c_char,
    min_utilization: f64,
) -> CpStatus {
    guard(|| {
        packing::save_plan(str_arg(path, "path")?, &handle(plan, "plan")?.0, min_utilization)?;
        Ok(())
    })
}

/// Read and validate a plan file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_plan_load(path: *const c_char, out: *mut *mut CpPlan) -> CpStatus {
    guard(|| {
        let plan = packing::load_plan(str_arg(path, "path")?)?;
        put(out, boxed(CpPlan(plan)))
    })
}

/// # Safety
/// `plan` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cp_plan_free(plan: *mut CpPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}
