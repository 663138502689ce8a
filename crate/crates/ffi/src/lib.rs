//! C ABI over `tgat-core`.
//!
//! Graphs and models are opaque heap handles created by `*_load` /
//! `*_ingest_csv` and released by the matching `*_free`. Every fallible call
//! returns an `int32_t` status; `TGAT_OK` is zero. After a non-zero status,
//! `tgat_last_error` returns a NUL-terminated message owned by the library
//! and valid until the next call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tgat::cli::embed_settings;
use tgat::graph::{ingest_path, GraphView, IngestOptions, TemporalGraph};
use tgat::model::Checkpoint;
use tgat::training::TrainConfig;
use tgat::Error;

pub const TGAT_OK: i32 = 0;
/// A required pointer argument was null.
pub const TGAT_ERR_NULL: i32 = 1;
/// A file could not be read.
pub const TGAT_ERR_IO: i32 = 2;
/// A file was read but its contents were malformed.
pub const TGAT_ERR_PARSE: i32 = 3;
/// A configuration value was invalid.
pub const TGAT_ERR_CONFIG: i32 = 4;
/// The model could not produce an embedding (unknown node, bad time).
pub const TGAT_ERR_INFERENCE: i32 = 5;
/// The caller's output buffer is too small.
pub const TGAT_ERR_BUFFER: i32 = 6;
/// A string argument was not valid UTF-8.
pub const TGAT_ERR_UTF8: i32 = 7;
/// An internal panic was caught at the boundary.
pub const TGAT_ERR_PANIC: i32 = 99;

/// Opaque handle to an in-memory temporal graph.
pub struct TgatGraph {
    graph: TemporalGraph,
}

/// Opaque handle to a trained model and its resolved configuration.
pub struct TgatModel {
    checkpoint: Checkpoint,
    config: TrainConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let clean = message.replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(clean).unwrap_or_default());
}

fn status_of(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => TGAT_ERR_IO,
        Error::Ingest { .. } | Error::Serialization(_) | Error::Validation(_) => TGAT_ERR_PARSE,
        Error::Config(_) => TGAT_ERR_CONFIG,
        _ => TGAT_ERR_INFERENCE,
    }
}

fn guard(body: impl FnOnce() -> Result<(), (i32, String)>) -> i32 {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            TGAT_OK
        }
        Ok(Err((code, message))) => {
            set_last_error(&message);
            code
        }
        Err(_) => {
            set_last_error("internal panic");
            TGAT_ERR_PANIC
        }
    }
}

fn lift<T>(r: tgat::Result<T>) -> Result<T, (i32, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a str, (i32, String)> {
    if path.is_null() {
        return Err((TGAT_ERR_NULL, "path is null".into()));
    }
    CStr::from_ptr(path)
        .to_str()
        .map_err(|_| (TGAT_ERR_UTF8, "path is not valid UTF-8".into()))
}

fn check_out<T>(out: *mut T, what: &str) -> Result<(), (i32, String)> {
    if out.is_null() {
        Err((TGAT_ERR_NULL, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// Message for the most recent failure on this thread; empty after success.
#[no_mangle]
pub extern "C" fn tgat_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Loads a graph file written by `tgat ingest` or `tgat synth`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tgat_graph_load(path: *const c_char, out: *mut *mut TgatGraph) -> i32 {
    guard(|| {
        check_out(out, "out")?;
        let path = path_arg(path)?;
        let graph = lift(TemporalGraph::load(path))?;
        *out = Box::into_raw(Box::new(TgatGraph { graph }));
        Ok(())
    })
}

/// Reads an interaction CSV directly. `node_dim` sets the width of the
/// zero node features; `time_divisor` rescales timestamps.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tgat_graph_ingest_csv(
    path: *const c_char,
    node_dim: usize,
    time_divisor: f64,
    out: *mut *mut TgatGraph,
) -> i32 {
    guard(|| {
        check_out(out, "out")?;
        let path = path_arg(path)?;
        let options = IngestOptions {
            edge_dim: None,
            node_dim,
            time_divisor,
        };
        let graph = lift(ingest_path(path, &options))?;
        *out = Box::into_raw(Box::new(TgatGraph { graph }));
        Ok(())
    })
}

/// # Safety
/// `graph` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tgat_graph_free(graph: *mut TgatGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Node count, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tgat_graph_num_nodes(graph: *const TgatGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.graph.num_nodes())
}

/// Event count, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tgat_graph_num_events(graph: *const TgatGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.graph.num_events())
}

/// Loads a checkpoint written by `tgat train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tgat_model_load(path: *const c_char, out: *mut *mut TgatModel) -> i32 {
    guard(|| {
        check_out(out, "out")?;
        let path = path_arg(path)?;
        let checkpoint = lift(Checkpoint::load(path))?;
        let config = lift(TrainConfig::from_map(&checkpoint.metadata))?;
        *out = Box::into_raw(Box::new(TgatModel { checkpoint, config }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tgat_model_free(model: *mut TgatModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Length of one embedding vector, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tgat_model_embed_dim(model: *const TgatModel) -> usize {
    model.as_ref().map_or(0, |m| {
        let dims = &m.checkpoint.model.dims;
        if dims.layers == 0 {
            dims.node_dim
        } else {
            dims.embed_dim
        }
    })
}

/// Writes the embedding of `node` at time `t` into `out[0..out_len]`,
/// using every event of `graph` strictly before `t`. Produces exactly the
/// values printed by `tgat embed`.
///
/// # Safety
/// `model` and `graph` must be live handles; `out` must point to at least
/// `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tgat_embed(
    model: *const TgatModel,
    graph: *const TgatGraph,
    node: usize,
    t: f64,
    out: *mut f64,
    out_len: usize,
) -> i32 {
    guard(|| {
        let model = model.as_ref().ok_or((TGAT_ERR_NULL, "model is null".to_string()))?;
        let graph = graph.as_ref().ok_or((TGAT_ERR_NULL, "graph is null".to_string()))?;
        check_out(out, "out")?;
        let view = GraphView::full(&graph.graph);
        let settings = embed_settings(&model.config);
        let values = lift(model.checkpoint.model.embed(&view, node, t, &settings))?;
        if out_len < values.len() {
            return Err((
                TGAT_ERR_BUFFER,
                format!("buffer holds {out_len} values, embedding has {}", values.len()),
            ));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
        Ok(())
    })
}
