#include "wb_common.h"

#ifdef __wasm__

static uintptr_t arena_next;
static uintptr_t arena_end;

void *wb_memcpy(void *dst, const void *src, size_t n) {
    uint8_t *d = (uint8_t *)dst;
    const uint8_t *s = (const uint8_t *)src;
    for (size_t i = 0; i < n; i++) d[i] = s[i];
    return dst;
}

void *wb_memset(void *dst, int c, size_t n) {
    uint8_t *d = (uint8_t *)dst;
    for (size_t i = 0; i < n; i++) d[i] = (uint8_t)c;
    return dst;
}

int wb_memcmp(const void *a, const void *b, size_t n) {
    const uint8_t *x = (const uint8_t *)a, *y = (const uint8_t *)b;
    for (size_t i = 0; i < n; i++) {
        if (x[i] != y[i]) return x[i] < y[i] ? -1 : 1;
    }
    return 0;
}

/* clang emits calls to these for aggregate copies even in freestanding mode */
void *memcpy(void *dst, const void *src, size_t n) { return wb_memcpy(dst, src, n); }
void *memset(void *dst, int c, size_t n) { return wb_memset(dst, c, n); }

void wb_arena_init(uintptr_t start) {
    arena_next = (start + 15u) & ~(uintptr_t)15u;
    arena_end = (uintptr_t)__builtin_wasm_memory_size(0) * 65536u;
}

void *wb_alloc(size_t n) {
    uintptr_t p = arena_next;
    uintptr_t next = (p + n + 15u) & ~(uintptr_t)15u;
    if (next > arena_end) {
        size_t need = (next - arena_end + 65535u) / 65536u;
        if (__builtin_wasm_memory_grow(0, need) == (size_t)-1)
            __builtin_trap();
        arena_end = (uintptr_t)__builtin_wasm_memory_size(0) * 65536u;
    }
    arena_next = next;
    return (void *)p;
}

#else /* native build: one large static arena, reset per invocation */

#include <stdlib.h>

#define WB_NATIVE_ARENA_BYTES (288lu * 1024u * 1024u)

static uint8_t arena_buf[WB_NATIVE_ARENA_BYTES];
static size_t arena_off;

void wb_arena_init(uintptr_t start) {
    (void)start;
    arena_off = 0;
}

void *wb_alloc(size_t n) {
    size_t off = (arena_off + 15u) & ~(size_t)15u;
    if (n > WB_NATIVE_ARENA_BYTES - off) abort();
    arena_off = off + n;
    return arena_buf + off;
}

#endif
