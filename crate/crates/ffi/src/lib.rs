//! C ABI over the mlfair library.
//!
//! Objects are opaque handles created by `mlfair_*` constructors and released
//! with the matching `*_free`. Every function returns an [`MlfairStatus`];
//! results come back through out-pointers. After a non-OK status,
//! [`mlfair_last_error`] describes the failure on the calling thread.
//! Panics never cross the boundary: they surface as `MLFAIR_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use mlfair::attributes::AttributeMatrix;
use mlfair::coarsen::{coarsen_hierarchy, Hierarchy};
use mlfair::config::PipelineConfig;
use mlfair::embed::{embed, EmbedderConfig, EmbedderKind, Embedding};
use mlfair::graph::read_edge_list;
use mlfair::metrics::{delta_dp, delta_eo, GroupedPredictions};
use mlfair::pipeline::{read_attributes, run_pipeline};
use mlfair::refine::{refine_all, train_refiner, RefineHyper};
use mlfair::{Error, Graph};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlfairStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Numeric = 3,
    Io = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlfairEmbedder {
    Spectral = 0,
    DeepWalk = 1,
}

/// Refinement hyperparameters; start from [`mlfair_refine_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlfairRefineParams {
    pub lambda_r: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub layers: usize,
    pub seed: u64,
}

pub struct MlfairGraph(Graph);
pub struct MlfairAttributes(AttributeMatrix);
pub struct MlfairHierarchy(Hierarchy);
pub struct MlfairEmbedding(Embedding);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> MlfairStatus {
    match err {
        Error::Io(_) => MlfairStatus::Io,
        e if e.is_numeric() => MlfairStatus::Numeric,
        _ => MlfairStatus::InvalidInput,
    }
}

// Internal failure: a status plus its message.
struct Fail(MlfairStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MlfairStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(MlfairStatus::InvalidInput, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MlfairStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MlfairStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MlfairStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn read_path(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = value;
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message for the last failed call on this thread, or NULL after a
/// success. The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn mlfair_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Reads a whitespace-separated `u v [w]` edge list.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlfair_graph_from_edge_file(path: *const c_char, out: *mut *mut MlfairGraph) -> MlfairStatus {
    guard(|| {
        let p = read_path(path, "path")?;
        let f = File::open(&p).map_err(|e| Fail(MlfairStatus::Io, format!("{}: {e}", p.display())))?;
        let g = read_edge_list(BufReader::new(f))?;
        emit(out, MlfairGraph(g))
    })
}

/// Builds a graph on nodes `0..n` from `m` edges. `weights` may be NULL for
/// unit weights.
///
/// # Safety
/// `src` and `dst` (and `weights` when non-NULL) must point to `m` readable
/// elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlfair_graph_from_edges(
    n: usize,
    src: *const usize,
    dst: *const usize,
    weights: *const f64,
    m: usize,
    out: *mut *mut MlfairGraph,
) -> MlfairStatus {
    guard(|| {
        let src = slice(src, m, "src")?;
        let dst = slice(dst, m, "dst")?;
        let w = if weights.is_null() { None } else { Some(slice(weights, m, "weights")?) };
        let edges = (0..m).map(|i| (src[i], dst[i], w.map_or(1.0, |w| w[i])));
        let g = Graph::from_edges(n, edges)?;
        emit(out, MlfairGraph(g))
    })
}

/// # Safety
/// `g` must be a live graph handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlfair_graph_node_count(g: *const MlfairGraph, out: *mut usize) -> MlfairStatus {
    guard(|| put(out, as_ref(g, "graph")?.0.node_count()))
}

/// Unordered edges, self-loops excluded.
///
/// # Safety
/// `g` must be a live graph handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlfair_graph_edge_count(g: *const MlfairGraph, out: *mut usize) -> MlfairStatus {
    guard(|| put(out, as_ref(g, "graph")?.0.edge_count()))
}

/// Sum of weighted degrees (self-loops count twice).
///
/// # Safety
/// `g` must be a live graph handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlfair_graph_total_degree(g: *const MlfairGraph, out: *mut f64) -> MlfairStatus {
    guard(|| put(out, as_ref(g, "graph")?.0.total_degree()))
}

/// # Safety
/// `g` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mlfair_graph_free(g: *mut MlfairGraph) {
    free(g)
}

/// One categorical attribute: node `u` has value `codes[u]` in `0..values`.
///
/// # Safety
/// `codes` must point to `n` readable elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlfair_attributes_from_codes(
    codes: *const usize,
    n: usize,
    values: usize,
    out: *mut *mut MlfairAttributes,
) -> MlfairStatus {
    guard(|| {
        let codes = slice(codes, n, "codes")?;
        let s = AttributeMatrix::from_codes("attribute", codes, values)?;
        emit(out, MlfairAttributes(s))
    })
}

/// Reads a `node,attr1,...` CSV and one-hot encodes it in `g`'s node order.
///
/// # Safety
/// `path` must be a NUL-terminated string, `g` a live graph handle and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn mlfair_attributes_from_csv(
    path: *const c_char,
    g: *const MlfairGraph,
    out: *mut *mut MlfairAttributes,
) -> MlfairStatus {
    guard(|| {
        let p = read_path(path, "path")?;
        let g = as_ref(g, "graph")?;
        let s = read_attributes(&p, &g.0)?;
        emit(out, MlfairAttributes(s))
    })
}

/// # Safety
/// `s` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mlfair_attributes_free(s: *mut MlfairAttributes) {
    free(s)
}

/// Attribute divergence `1 - 1/(1 + KL(su || sv))` of two distributions.
///
/// # Safety
/// `su` and `sv` must point to `len` readable elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlfair_divergence(su: *const f64, sv: *const f64, len: usize, out: *mut f64) -> MlfairStatus {
    guard(|| {
        let a = slice(su, len, "su")?;
        let b = slice(sv, len, "sv")?;
        put(out, mlfair::attributes::divergence(a, b)?)
    })
}

/// Coarsens `levels` times. The inputs are copied; the handles stay owned by
/// the caller.
///
/// # Safety
/// `g` and `s` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlfair_coarsen(
    g: *const MlfairGraph,
    s: *const MlfairAttributes,
    levels: usize,
    lambda_c: f64,
    out: *mut *mut MlfairHierarchy,
) -> MlfairStatus {
    guard(|| {
        let g = as_ref(g, "graph")?;
        let s = as_ref(s, "attributes")?;
        let h = coarsen_hierarchy(g.0.clone(), s.0.clone(), levels, lambda_c)?;
        emit(out, MlfairHierarchy(h))
    })
}

/// Number of coarsening steps actually taken.
///
/// # Safety
/// `h` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlfair_hierarchy_depth(h: *const MlfairHierarchy, out: *mut usize) -> MlfairStatus {
    guard(|| put(out, as_ref(h, "hierarchy")?.0.depth()))
}

/// Node count of level `level` (0 is the input graph).
///
/// # Safety
/// `h` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlfair_hierarchy_level_nodes(
    h: *const MlfairHierarchy,
    level: usize,
    out: *mut usize,
) -> MlfairStatus {
    guard(|| {
        let h = &as_ref(h, "hierarchy")?.0;
        let lv = h
            .levels
            .get(level)
            .ok_or_else(|| invalid(format!("level {level} out of range for depth {}", h.depth())))?;
        put(out, lv.graph.node_count())
    })
}

/// Copy of the coarsest graph, the one to embed before refinement.
///
/// # Safety
/// `h` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlfair_hierarchy_coarsest_graph(
    h: *const MlfairHierarchy,
    out: *mut *mut MlfairGraph,
) -> MlfairStatus {
    guard(|| {
        let h = as_ref(h, "hierarchy")?;
        emit(out, MlfairGraph(h.0.coarsest().graph.clone()))
    })
}

/// # Safety
/// `h` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mlfair_hierarchy_free(h: *mut MlfairHierarchy) {
    free(h)
}

/// Base embedding with default walk parameters for DeepWalk.
///
/// # Safety
/// `g` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlfair_embed(
    g: *const MlfairGraph,
    kind: MlfairEmbedder,
    dim: usize,
    seed: u64,
    out: *mut *mut MlfairEmbedding,
) -> MlfairStatus {
    guard(|| {
        let g = as_ref(g, "graph")?;
        let cfg = EmbedderConfig {
            kind: match kind {
                MlfairEmbedder::Spectral => EmbedderKind::Spectral,
                MlfairEmbedder::DeepWalk => EmbedderKind::DeepWalk,
            },
            dim,
            seed,
            ..Default::default()
        };
        emit(out, MlfairEmbedding(embed(&g.0, &cfg)?))
    })
}

#[no_mangle]
pub extern "C" fn mlfair_refine_params_default() -> MlfairRefineParams {
    let h = RefineHyper::default();
    MlfairRefineParams {
        lambda_r: h.lambda_r,
        gamma: h.gamma,
        epochs: h.epochs,
        learning_rate: h.learning_rate,
        layers: h.layers,
        seed: h.init_seed,
    }
}

/// Trains the refinement model on the coarsest level with `base` as input
/// and returns the unit-norm embedding of the finest level.
///
/// # Safety
/// `h` and `base` must be live handles, `params` readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mlfair_refine(
    h: *const MlfairHierarchy,
    base: *const MlfairEmbedding,
    params: *const MlfairRefineParams,
    out: *mut *mut MlfairEmbedding,
) -> MlfairStatus {
    guard(|| {
        let h = &as_ref(h, "hierarchy")?.0;
        let base = &as_ref(base, "base")?.0;
        let p = as_ref(params, "params")?;
        let hyper = RefineHyper {
            lambda_r: p.lambda_r,
            gamma: p.gamma,
            epochs: p.epochs,
            learning_rate: p.learning_rate,
            layers: p.layers,
            init_seed: p.seed,
        };
        let c = h.coarsest();
        let (model, _) = train_refiner(&c.graph, &c.attributes, base, &hyper)?;
        emit(out, MlfairEmbedding(refine_all(h, base, &model)?))
    })
}

/// # Safety
/// `e` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlfair_embedding_rows(e: *const MlfairEmbedding, out: *mut usize) -> MlfairStatus {
    guard(|| put(out, as_ref(e, "embedding")?.0.rows()))
}

/// # Safety
/// `e` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlfair_embedding_dim(e: *const MlfairEmbedding, out: *mut usize) -> MlfairStatus {
    guard(|| put(out, as_ref(e, "embedding")?.0.dim()))
}

/// Copies the embedding row-major into `buf`, which must hold exactly
/// `rows * dim` values.
///
/// # Safety
/// `e` must be a live handle and `buf` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn mlfair_embedding_copy(e: *const MlfairEmbedding, buf: *mut f64, len: usize) -> MlfairStatus {
    guard(|| {
        let m = &as_ref(e, "embedding")?.0.matrix;
        if len != m.len() {
            return Err(invalid(format!("buffer holds {len} values, embedding has {}", m.len())));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        let out = std::slice::from_raw_parts_mut(buf, len);
        let d = m.ncols();
        for i in 0..m.nrows() {
            for j in 0..d {
                out[i * d + j] = m[(i, j)];
            }
        }
        Ok(())
    })
}

/// # Safety
/// `e` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mlfair_embedding_free(e: *mut MlfairEmbedding) {
    free(e)
}

unsafe fn predictions(
    y_hat: *const usize,
    y: *const usize,
    group: *const usize,
    n: usize,
    advantaged: *const usize,
    n_advantaged: usize,
) -> Result<GroupedPredictions, Fail> {
    Ok(GroupedPredictions {
        y_hat: slice(y_hat, n, "y_hat")?.to_vec(),
        y: if y.is_null() { None } else { Some(slice(y, n, "y")?.to_vec()) },
        group: slice(group, n, "group")?.to_vec(),
        advantaged: slice(advantaged, n_advantaged, "advantaged")?.to_vec(),
    })
}

/// Demographic-parity dispersion over the advantaged classes.
///
/// # Safety
/// `y_hat` and `group` must point to `n` values, `advantaged` to
/// `n_advantaged` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlfair_delta_dp(
    y_hat: *const usize,
    group: *const usize,
    n: usize,
    advantaged: *const usize,
    n_advantaged: usize,
    out: *mut f64,
) -> MlfairStatus {
    guard(|| {
        let gp = predictions(y_hat, ptr::null(), group, n, advantaged, n_advantaged)?;
        put(out, delta_dp(&gp)?)
    })
}

/// Equality-of-opportunity dispersion over the advantaged classes.
///
/// # Safety
/// `y_hat`, `y` and `group` must point to `n` values, `advantaged` to
/// `n_advantaged` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlfair_delta_eo(
    y_hat: *const usize,
    y: *const usize,
    group: *const usize,
    n: usize,
    advantaged: *const usize,
    n_advantaged: usize,
    out: *mut f64,
) -> MlfairStatus {
    guard(|| {
        if y.is_null() {
            return Err(null("y"));
        }
        let gp = predictions(y_hat, y, group, n, advantaged, n_advantaged)?;
        put(out, delta_eo(&gp)?)
    })
}

/// Runs the full pipeline from a `key=value` config file. A non-NULL
/// `out_dir` overrides the file's output directory.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out_dir` NULL or one.
#[no_mangle]
pub unsafe extern "C" fn mlfair_pipeline_run(config_path: *const c_char, out_dir: *const c_char) -> MlfairStatus {
    guard(|| {
        let mut cfg = PipelineConfig::load(&read_path(config_path, "config_path")?)?;
        if !out_dir.is_null() {
            cfg.out_dir = Some(read_path(out_dir, "out_dir")?);
        }
        run_pipeline(&cfg)?;
        Ok(())
    })
}
