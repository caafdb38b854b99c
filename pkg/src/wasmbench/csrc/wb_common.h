/* Shared declarations for the workflow step kernels.
 *
 * The same sources build two ways:
 *   - wasm32 guest modules (freestanding, no libc), one module per step,
 *     selected with -DWB_STEP=<n>;
 *   - a native shared library exposing every step plus the hash/crc
 *     primitives, used as the correctness oracle and by tests.
 *
 * All allocation goes through a bump arena so the wasm build needs no
 * malloc; the arena is reset at the top of every invocation.
 */
#ifndef WB_COMMON_H
#define WB_COMMON_H

#include <stddef.h>
#include <stdint.h>

#ifdef __wasm__
void *wb_memcpy(void *dst, const void *src, size_t n);
void *wb_memset(void *dst, int c, size_t n);
int wb_memcmp(const void *a, const void *b, size_t n);
#else
#include <string.h>
#define wb_memcpy memcpy
#define wb_memset memset
#define wb_memcmp memcmp
#endif

/* Bump arena. */
void wb_arena_init(uintptr_t start);
void *wb_alloc(size_t n);

/* BLAKE3, 32-byte digest of a whole buffer. */
void wb_blake3(const uint8_t *input, size_t len, uint8_t out[32]);

/* CRC32 (reflected 0xEDB88320, init and final xor 0xFFFFFFFF). */
uint32_t wb_crc32(const uint8_t *input, size_t len);

/* Step dispatch: returns a tag-prefixed buffer allocated from the arena.
 * Byte 0 is 0 for success, 1 for a step-level error; the rest is a CBOR
 * item (the result frame, or {"code","msg"} for errors). */
size_t wb_do_run(int step, const uint8_t *input, size_t len, uint8_t **out);

#endif
