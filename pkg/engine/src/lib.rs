//! C-ABI shim around an embeddable Wasm engine.
//!
//! The host process drives the engine through four operations: compile
//! (or load a precompiled object), instantiate, initialize, call. Each
//! gets its own entry point so the embedder can time phases separately.
//! Guest modules follow the project ABI: exported linear `memory`, an
//! exported `__heap_base` global marking scratch space, and
//! `run(ptr, len) -> i64` returning a packed (out_ptr << 32 | out_len).
//!
//! All functions set a thread-local error string retrievable with
//! `wbe_last_error`. Returned buffers are owned by the caller and must
//! be released with `wbe_bytes_free`.

use std::cell::RefCell;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use wasmtime::{Config, Engine, Instance, Module, Store, Trap, TypedFunc};

const EPOCH_TICK_MS: u64 = 10;

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

pub struct WbeEngine {
    engine: Engine,
    stop: Arc<AtomicBool>,
    ticker: Option<std::thread::JoinHandle<()>>,
}

pub struct WbeModule {
    module: Module,
}

pub struct WbeInstance {
    store: Store<()>,
    instance: Instance,
    run: TypedFunc<(i32, i32), i64>,
    memory: wasmtime::Memory,
    heap_base: u32,
}

/// # Safety
/// Returns an owned handle; release with `wbe_engine_free`.
#[no_mangle]
pub extern "C" fn wbe_engine_new() -> *mut WbeEngine {
    let mut config = Config::new();
    config.epoch_interruption(true);
    let engine = match Engine::new(&config) {
        Ok(e) => e,
        Err(err) => {
            set_error(format!("engine init: {err}"));
            return std::ptr::null_mut();
        }
    };
    let stop = Arc::new(AtomicBool::new(false));
    let ticker = {
        let engine = engine.clone();
        let stop = Arc::clone(&stop);
        std::thread::spawn(move || {
            while !stop.load(Ordering::Relaxed) {
                std::thread::sleep(Duration::from_millis(EPOCH_TICK_MS));
                engine.increment_epoch();
            }
        })
    };
    Box::into_raw(Box::new(WbeEngine {
        engine,
        stop,
        ticker: Some(ticker),
    }))
}

/// # Safety
/// `engine` must come from `wbe_engine_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wbe_engine_free(engine: *mut WbeEngine) {
    if engine.is_null() {
        return;
    }
    let mut e = Box::from_raw(engine);
    e.stop.store(true, Ordering::Relaxed);
    if let Some(t) = e.ticker.take() {
        let _ = t.join();
    }
}

unsafe fn slice_arg<'a>(ptr: *const u8, len: usize) -> &'a [u8] {
    if ptr.is_null() {
        &[]
    } else {
        std::slice::from_raw_parts(ptr, len)
    }
}

/// Compile wasm bytes at load time (the JIT path).
///
/// # Safety
/// `wasm_ptr` must point at `wasm_len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn wbe_compile(
    engine: *mut WbeEngine,
    wasm_ptr: *const u8,
    wasm_len: usize,
) -> *mut WbeModule {
    let e = &(*engine).engine;
    match Module::new(e, slice_arg(wasm_ptr, wasm_len)) {
        Ok(module) => Box::into_raw(Box::new(WbeModule { module })),
        Err(err) => {
            set_error(format!("compile: {err}"));
            std::ptr::null_mut()
        }
    }
}

/// Serialize a compiled module to an engine-native precompiled object.
///
/// # Safety
/// Standard pointer contracts; output released with `wbe_bytes_free`.
#[no_mangle]
pub unsafe extern "C" fn wbe_serialize(
    module: *mut WbeModule,
    out_ptr: *mut *mut u8,
    out_len: *mut usize,
) -> i32 {
    match (*module).module.serialize() {
        Ok(bytes) => {
            let mut v = bytes.into_boxed_slice();
            *out_ptr = v.as_mut_ptr();
            *out_len = v.len();
            std::mem::forget(v);
            0
        }
        Err(err) => {
            set_error(format!("serialize: {err}"));
            -1
        }
    }
}

/// Load a precompiled object produced by `wbe_serialize` (the AOT path).
///
/// # Safety
/// The bytes must be a trusted artifact from the same engine version;
/// deserialization of attacker-controlled input is undefined behavior.
#[no_mangle]
pub unsafe extern "C" fn wbe_deserialize(
    engine: *mut WbeEngine,
    obj_ptr: *const u8,
    obj_len: usize,
) -> *mut WbeModule {
    let e = &(*engine).engine;
    match Module::deserialize(e, slice_arg(obj_ptr, obj_len)) {
        Ok(module) => Box::into_raw(Box::new(WbeModule { module })),
        Err(err) => {
            set_error(format!("deserialize: {err}"));
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `module` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wbe_module_free(module: *mut WbeModule) {
    if !module.is_null() {
        drop(Box::from_raw(module));
    }
}

/// Instantiate a compiled module: fresh store, fresh linear memory.
///
/// # Safety
/// Handles must come from this library.
#[no_mangle]
pub unsafe extern "C" fn wbe_instantiate(
    engine: *mut WbeEngine,
    module: *mut WbeModule,
) -> *mut WbeInstance {
    let e = &(*engine).engine;
    let mut store = Store::new(e, ());
    store.set_epoch_deadline(u64::MAX);
    let instance = match Instance::new(&mut store, &(*module).module, &[]) {
        Ok(i) => i,
        Err(err) => {
            set_error(format!("instantiate: {err}"));
            return std::ptr::null_mut();
        }
    };
    let run = match instance.get_typed_func::<(i32, i32), i64>(&mut store, "run") {
        Ok(f) => f,
        Err(err) => {
            set_error(format!("missing run export: {err}"));
            return std::ptr::null_mut();
        }
    };
    let memory = match instance.get_memory(&mut store, "memory") {
        Some(m) => m,
        None => {
            set_error("missing memory export");
            return std::ptr::null_mut();
        }
    };
    let heap_base = match instance
        .get_global(&mut store, "__heap_base")
        .and_then(|g| g.get(&mut store).i32())
    {
        Some(v) => v as u32,
        None => {
            set_error("missing __heap_base export");
            return std::ptr::null_mut();
        }
    };
    Box::into_raw(Box::new(WbeInstance {
        store,
        instance,
        run,
        memory,
        heap_base,
    }))
}

/// Run the module's initialization export, when present. Guests without
/// an `_initialize` export succeed trivially.
///
/// # Safety
/// `instance` must come from `wbe_instantiate`.
#[no_mangle]
pub unsafe extern "C" fn wbe_initialize(instance: *mut WbeInstance) -> i32 {
    let inst = &mut *instance;
    if let Ok(f) = inst
        .instance
        .get_typed_func::<(), ()>(&mut inst.store, "_initialize")
    {
        if let Err(err) = f.call(&mut inst.store, ()) {
            set_error(format!("_initialize: {err}"));
            return -1;
        }
    }
    0
}

/// Deliver one invocation frame and collect the guest's reply.
///
/// Returns 0 on success, 1 on guest trap, 2 on timeout, -1 on ABI errors.
///
/// # Safety
/// Standard pointer contracts; output released with `wbe_bytes_free`.
#[no_mangle]
pub unsafe extern "C" fn wbe_call_run(
    instance: *mut WbeInstance,
    in_ptr: *const u8,
    in_len: usize,
    timeout_ms: u64,
    out_ptr: *mut *mut u8,
    out_len: *mut usize,
) -> i32 {
    let inst = &mut *instance;
    let input = slice_arg(in_ptr, in_len);

    let needed = inst.heap_base as u64 + input.len() as u64;
    let have = inst.memory.data_size(&inst.store) as u64;
    if needed > have {
        let delta = needed.div_ceil(65536) - have / 65536;
        if let Err(err) = inst.memory.grow(&mut inst.store, delta) {
            set_error(format!("memory grow: {err}"));
            return -1;
        }
    }
    let base = inst.heap_base as usize;
    inst.memory.data_mut(&mut inst.store)[base..base + input.len()].copy_from_slice(input);

    let ticks = timeout_ms / EPOCH_TICK_MS + 2;
    inst.store.set_epoch_deadline(ticks);
    let packed = match inst
        .run
        .call(&mut inst.store, (base as i32, input.len() as i32))
    {
        Ok(v) => v as u64,
        Err(err) => {
            inst.store.set_epoch_deadline(u64::MAX);
            if err.downcast_ref::<Trap>() == Some(&Trap::Interrupt) {
                set_error(format!("timeout after {timeout_ms} ms"));
                return 2;
            }
            set_error(format!("trap: {err}"));
            return 1;
        }
    };
    inst.store.set_epoch_deadline(u64::MAX);

    let ptr = (packed >> 32) as usize;
    let len = (packed & 0xFFFF_FFFF) as usize;
    let data = inst.memory.data(&inst.store);
    if ptr.checked_add(len).map_or(true, |end| end > data.len()) {
        set_error("guest returned out-of-bounds buffer");
        return -1;
    }
    let mut v = data[ptr..ptr + len].to_vec().into_boxed_slice();
    *out_ptr = v.as_mut_ptr();
    *out_len = v.len();
    std::mem::forget(v);
    0
}

/// # Safety
/// `instance` must come from `wbe_instantiate` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wbe_instance_free(instance: *mut WbeInstance) {
    if !instance.is_null() {
        drop(Box::from_raw(instance));
    }
}

/// # Safety
/// `(ptr, len)` must be a buffer returned by this library.
#[no_mangle]
pub unsafe extern "C" fn wbe_bytes_free(ptr: *mut u8, len: usize) {
    if !ptr.is_null() {
        drop(Box::from_raw(std::ptr::slice_from_raw_parts_mut(ptr, len)));
    }
}

/// Copy the thread-local error message into `buf`; returns its length.
///
/// # Safety
/// `buf` must point at `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn wbe_last_error(buf: *mut u8, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let n = msg.len().min(cap);
        if n > 0 {
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf, n);
        }
        n
    })
}

/// Reference BLAKE3 (upstream implementation), used by the host's tests
/// to validate the in-guest hasher.
///
/// # Safety
/// `out32` must point at 32 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn wbe_blake3_ref(ptr: *const u8, len: usize, out32: *mut u8) {
    let digest = blake3::hash(slice_arg(ptr, len));
    std::ptr::copy_nonoverlapping(digest.as_bytes().as_ptr(), out32, 32);
}

/// Engine identification string for run metadata; returns its length.
///
/// # Safety
/// `buf` must point at `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn wbe_version(buf: *mut u8, cap: usize) -> usize {
    let s = "wasmtime-47";
    let n = s.len().min(cap);
    std::ptr::copy_nonoverlapping(s.as_ptr(), buf, n);
    n
}
