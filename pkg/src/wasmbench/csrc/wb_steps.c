/* The five workflow step kernels and their CBOR framing.
 *
 * Data frames are CBOR maps with text keys; encoders emit canonical form
 * (definite lengths, shortest heads, keys sorted by encoded bytes) so a
 * given value has exactly one serialization on every backend. Decoders
 * accept any key order and skip unknown keys.
 *
 * Frame keys:
 *   data frame   {"v":1, "kind":"u8"|"f32", "payload":bytes [, "crc":uint]}
 *   matrix block {"v":1, "kind":"f32", "d":uint, "rows_from":uint,
 *                 "rows_to":uint, "payload":bytes}
 *   fan-in       {"v":1, "blocks":[bytes x4]}   (each entry a block frame)
 *   reduced      {"v":1, "kind":"f32", "digest":bytes32, "payload":bytes}
 *   final        {"v":1, "frame":bytes, "digest":bytes32 [, "verified":bool]}
 */
#include "wb_common.h"

#define WB_MAX_DIM 2048u

/* ---------------- CRC32 (reflected 0xEDB88320) ---------------- */

static uint32_t crc_table[256];
static int crc_table_ready;

uint32_t wb_crc32(const uint8_t *input, size_t len) {
    if (!crc_table_ready) {
        for (uint32_t i = 0; i < 256; i++) {
            uint32_t c = i;
            for (int k = 0; k < 8; k++)
                c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            crc_table[i] = c;
        }
        crc_table_ready = 1;
    }
    uint32_t crc = 0xFFFFFFFFu;
    for (size_t i = 0; i < len; i++)
        crc = crc_table[(crc ^ input[i]) & 0xFFu] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

/* ---------------- CBOR reader ---------------- */

typedef struct {
    const uint8_t *p;
    size_t len;
    size_t pos;
} rd_t;

static int rd_byte(rd_t *r, uint8_t *out) {
    if (r->pos >= r->len) return -1;
    *out = r->p[r->pos++];
    return 0;
}

static int rd_head(rd_t *r, int *major, uint64_t *arg) {
    uint8_t b;
    if (rd_byte(r, &b)) return -1;
    *major = b >> 5;
    uint8_t info = b & 0x1F;
    if (info < 24) {
        *arg = info;
        return 0;
    }
    int extra;
    switch (info) {
        case 24: extra = 1; break;
        case 25: extra = 2; break;
        case 26: extra = 4; break;
        case 27: extra = 8; break;
        default: return -1; /* indefinite/reserved */
    }
    if (r->pos + (size_t)extra > r->len) return -1;
    uint64_t v = 0;
    for (int i = 0; i < extra; i++) v = (v << 8) | r->p[r->pos++];
    *arg = v;
    return 0;
}

static int rd_span(rd_t *r, uint64_t n, const uint8_t **out) {
    if (n > r->len - r->pos) return -1;
    *out = r->p + r->pos;
    r->pos += (size_t)n;
    return 0;
}

static int rd_skip(rd_t *r, int depth) {
    if (depth > 16) return -1;
    int major;
    uint64_t arg;
    const uint8_t *span;
    if (rd_head(r, &major, &arg)) return -1;
    switch (major) {
        case 0:
        case 1:
            return 0;
        case 2:
        case 3:
            return rd_span(r, arg, &span);
        case 4:
            for (uint64_t i = 0; i < arg; i++)
                if (rd_skip(r, depth + 1)) return -1;
            return 0;
        case 5:
            for (uint64_t i = 0; i < arg; i++) {
                if (rd_skip(r, depth + 1)) return -1;
                if (rd_skip(r, depth + 1)) return -1;
            }
            return 0;
        case 7:
            return 0; /* simple/float: head already consumed the argument */
        default:
            return -1;
    }
}

/* Fields any step frame can carry; pointers alias the input buffer. */
typedef struct {
    const uint8_t *kind;
    uint64_t kind_len;
    const uint8_t *payload;
    uint64_t payload_len;
    int has_payload;
    uint64_t v;
    int has_v;
    uint32_t crc;
    int has_crc;
    uint64_t d;
    int has_d;
    uint64_t rows_from;
    int has_rows_from;
    uint64_t rows_to;
    int has_rows_to;
    const uint8_t *expected;
    uint64_t expected_len;
    const uint8_t *blocks[8];
    uint64_t blocks_len[8];
    int n_blocks;
    int has_blocks;
} fields_t;

static int key_is(const uint8_t *key, uint64_t key_len, const char *name) {
    uint64_t n = 0;
    while (name[n]) n++;
    return key_len == n && wb_memcmp(key, name, (size_t)n) == 0;
}

static int rd_uint(rd_t *r, uint64_t *out) {
    int major;
    if (rd_head(r, &major, out)) return -1;
    return major == 0 ? 0 : -1;
}

static int rd_bytes(rd_t *r, const uint8_t **out, uint64_t *out_len) {
    int major;
    if (rd_head(r, &major, out_len)) return -1;
    if (major != 2) return -1;
    return rd_span(r, *out_len, out);
}

static int parse_frame(const uint8_t *input, size_t len, fields_t *f) {
    rd_t r = {input, len, 0};
    wb_memset(f, 0, sizeof(*f));
    int major;
    uint64_t n_entries;
    if (rd_head(&r, &major, &n_entries) || major != 5) return -1;
    for (uint64_t e = 0; e < n_entries; e++) {
        uint64_t key_len;
        const uint8_t *key;
        if (rd_head(&r, &major, &key_len) || major != 3) return -1;
        if (rd_span(&r, key_len, &key)) return -1;
        if (key_is(key, key_len, "v")) {
            if (rd_uint(&r, &f->v)) return -1;
            f->has_v = 1;
        } else if (key_is(key, key_len, "kind")) {
            if (rd_head(&r, &major, &key_len) || major != 3) return -1;
            if (rd_span(&r, key_len, &f->kind)) return -1;
            f->kind_len = key_len;
        } else if (key_is(key, key_len, "payload")) {
            if (rd_bytes(&r, &f->payload, &f->payload_len)) return -1;
            f->has_payload = 1;
        } else if (key_is(key, key_len, "crc")) {
            uint64_t v;
            if (rd_uint(&r, &v) || v > 0xFFFFFFFFu) return -1;
            f->crc = (uint32_t)v;
            f->has_crc = 1;
        } else if (key_is(key, key_len, "d")) {
            if (rd_uint(&r, &f->d)) return -1;
            f->has_d = 1;
        } else if (key_is(key, key_len, "rows_from")) {
            if (rd_uint(&r, &f->rows_from)) return -1;
            f->has_rows_from = 1;
        } else if (key_is(key, key_len, "rows_to")) {
            if (rd_uint(&r, &f->rows_to)) return -1;
            f->has_rows_to = 1;
        } else if (key_is(key, key_len, "expected")) {
            if (rd_bytes(&r, &f->expected, &f->expected_len)) return -1;
        } else if (key_is(key, key_len, "blocks")) {
            uint64_t n;
            if (rd_head(&r, &major, &n) || major != 4 || n > 8) return -1;
            for (uint64_t i = 0; i < n; i++)
                if (rd_bytes(&r, &f->blocks[i], &f->blocks_len[i])) return -1;
            f->n_blocks = (int)n;
            f->has_blocks = 1;
        } else {
            if (rd_skip(&r, 0)) return -1; /* unknown keys ignored */
        }
    }
    if (r.pos != r.len) return -1;
    return 0;
}

/* ---------------- CBOR writer ---------------- */

typedef struct {
    uint8_t *buf;
    size_t cap;
    size_t len;
} wr_t;

static void wr_init(wr_t *w, size_t cap_hint) {
    w->cap = cap_hint < 64 ? 64 : cap_hint;
    w->buf = (uint8_t *)wb_alloc(w->cap);
    w->len = 0;
}

static void wr_ensure(wr_t *w, size_t extra) {
    if (w->len + extra <= w->cap) return;
    size_t cap = w->cap * 2;
    while (cap < w->len + extra) cap *= 2;
    uint8_t *nb = (uint8_t *)wb_alloc(cap);
    wb_memcpy(nb, w->buf, w->len);
    w->buf = nb;
    w->cap = cap;
}

static void wr_raw(wr_t *w, const uint8_t *p, size_t n) {
    wr_ensure(w, n);
    wb_memcpy(w->buf + w->len, p, n);
    w->len += n;
}

static void wr_head(wr_t *w, int major, uint64_t arg) {
    uint8_t tmp[9];
    size_t n;
    if (arg < 24) {
        tmp[0] = (uint8_t)((major << 5) | arg);
        n = 1;
    } else if (arg < 0x100) {
        tmp[0] = (uint8_t)((major << 5) | 24);
        tmp[1] = (uint8_t)arg;
        n = 2;
    } else if (arg < 0x10000) {
        tmp[0] = (uint8_t)((major << 5) | 25);
        tmp[1] = (uint8_t)(arg >> 8);
        tmp[2] = (uint8_t)arg;
        n = 3;
    } else if (arg < 0x100000000ull) {
        tmp[0] = (uint8_t)((major << 5) | 26);
        for (int i = 0; i < 4; i++) tmp[1 + i] = (uint8_t)(arg >> (24 - 8 * i));
        n = 5;
    } else {
        tmp[0] = (uint8_t)((major << 5) | 27);
        for (int i = 0; i < 8; i++) tmp[1 + i] = (uint8_t)(arg >> (56 - 8 * i));
        n = 9;
    }
    wr_raw(w, tmp, n);
}

static void wr_text(wr_t *w, const char *s) {
    size_t n = 0;
    while (s[n]) n++;
    wr_head(w, 3, n);
    wr_raw(w, (const uint8_t *)s, n);
}

static void wr_bytes(wr_t *w, const uint8_t *p, size_t n) {
    wr_head(w, 2, n);
    wr_raw(w, p, n);
}

/* ---------------- step results ---------------- */

/* Output buffers carry a one-byte tag: 0 = ok, 1 = step error. */
static size_t finish(wr_t *w, uint8_t tag, uint8_t **out) {
    /* tag byte is reserved at buf[0] by callers */
    w->buf[0] = tag;
    *out = w->buf;
    return w->len;
}

static size_t emit_error(const char *code, const char *msg, uint8_t **out) {
    wr_t w;
    wr_init(&w, 256);
    w.len = 1; /* tag byte */
    wr_head(&w, 5, 2);
    wr_text(&w, "msg"); /* canonical order: "msg" (3) before "code" (4) */
    wr_text(&w, msg);
    wr_text(&w, "code");
    wr_text(&w, code);
    return finish(&w, 1, out);
}

static int kind_is(const fields_t *f, const char *name) {
    return f->kind != 0 && key_is(f->kind, f->kind_len, name);
}

/* ---------------- S1: ingest, validate, CRC ---------------- */

static size_t run_s1(const uint8_t *input, size_t len, uint8_t **out) {
    fields_t f;
    if (parse_frame(input, len, &f) || !f.has_v || f.v != 1 || !f.has_payload || !kind_is(&f, "u8"))
        return emit_error("MalformedFrame", "expected v=1 u8 data frame", out);
    uint32_t crc = wb_crc32(f.payload, (size_t)f.payload_len);
    if (f.has_crc && f.crc != crc)
        return emit_error("ChecksumMismatch", "declared crc does not match payload", out);
    wr_t w;
    wr_init(&w, (size_t)f.payload_len + 64);
    w.len = 1;
    wr_head(&w, 5, 4);
    wr_text(&w, "v");
    wr_head(&w, 0, 1);
    wr_text(&w, "crc");
    wr_head(&w, 0, crc);
    wr_text(&w, "kind");
    wr_text(&w, "u8");
    wr_text(&w, "payload");
    wr_bytes(&w, f.payload, (size_t)f.payload_len);
    return finish(&w, 0, out);
}

/* ---------------- S2: window-normalize u8 -> f32 ---------------- */

#define S2_WINDOW 16u

static size_t run_s2(const uint8_t *input, size_t len, uint8_t **out) {
    fields_t f;
    if (parse_frame(input, len, &f) || !f.has_v || f.v != 1 || !f.has_payload || !kind_is(&f, "u8"))
        return emit_error("MalformedFrame", "expected v=1 u8 data frame", out);
    if (f.payload_len % 4 != 0)
        return emit_error("LengthNotDivisible", "payload length must be divisible by 4", out);
    size_t groups = (size_t)f.payload_len / 4;
    float *g = (float *)wb_alloc(groups * sizeof(float));
    const uint8_t *p = f.payload;
    for (size_t j = 0; j < groups; j++) {
        uint32_t s = (uint32_t)p[4 * j] + p[4 * j + 1] + p[4 * j + 2] + p[4 * j + 3];
        g[j] = (float)s / 4.0f;
    }
    float *ov = (float *)wb_alloc(groups * sizeof(float));
    for (size_t j = 0; j < groups; j++) {
        size_t lo = j >= S2_WINDOW - 1 ? j - (S2_WINDOW - 1) : 0;
        float sum = 0.0f;
        for (size_t i = lo; i <= j; i++) sum += g[i];
        float mean = sum / (float)(j - lo + 1);
        float v = (g[j] - mean) / 255.0f;
        if (v < -1.0f) v = -1.0f;
        if (v > 1.0f) v = 1.0f;
        ov[j] = v;
    }
    wr_t w;
    wr_init(&w, groups * 4 + 64);
    w.len = 1;
    wr_head(&w, 5, 3);
    wr_text(&w, "v");
    wr_head(&w, 0, 1);
    wr_text(&w, "kind");
    wr_text(&w, "f32");
    wr_text(&w, "payload");
    wr_bytes(&w, (const uint8_t *)ov, groups * 4);
    return finish(&w, 0, out);
}

/* ---------------- S3: row strip of C = A x A, 32x32 tiles ---------------- */

#define TILE 32u

static void matmul_strip(const float *a, float *c, uint32_t d, uint32_t rf, uint32_t rt) {
    /* k advances monotonically for every (i, j): bit-identical to the
     * naive ijk loop under IEEE f32 with no FMA or reassociation. */
    uint32_t rows = rt - rf;
    for (uint32_t ii = 0; ii < rows; ii += TILE) {
        uint32_t imax = ii + TILE < rows ? ii + TILE : rows;
        for (uint32_t kk = 0; kk < d; kk += TILE) {
            uint32_t kmax = kk + TILE < d ? kk + TILE : d;
            for (uint32_t jj = 0; jj < d; jj += TILE) {
                uint32_t jmax = jj + TILE < d ? jj + TILE : d;
                for (uint32_t i = ii; i < imax; i++) {
                    const float *arow = a + (size_t)(rf + i) * d;
                    float *crow = c + (size_t)i * d;
                    for (uint32_t k = kk; k < kmax; k++) {
                        float aik = arow[k];
                        const float *brow = a + (size_t)k * d;
                        for (uint32_t j = jj; j < jmax; j++)
                            crow[j] += aik * brow[j];
                    }
                }
            }
        }
    }
}

static size_t run_s3(const uint8_t *input, size_t len, uint8_t **out) {
    fields_t f;
    if (parse_frame(input, len, &f) || !f.has_v || f.v != 1 || !f.has_payload ||
        !kind_is(&f, "f32") || !f.has_d || !f.has_rows_from || !f.has_rows_to)
        return emit_error("MalformedFrame", "expected v=1 matrix block frame", out);
    uint64_t d = f.d;
    if (d == 0 || d > WB_MAX_DIM || f.payload_len != d * d * 4)
        return emit_error("DimensionMismatch", "payload is not a d*d f32 matrix", out);
    if (f.rows_from >= f.rows_to || f.rows_to > d)
        return emit_error("DimensionMismatch", "invalid row strip bounds", out);
    float *a = (float *)wb_alloc((size_t)f.payload_len);
    wb_memcpy(a, f.payload, (size_t)f.payload_len);
    uint32_t rows = (uint32_t)(f.rows_to - f.rows_from);
    size_t out_floats = (size_t)rows * (size_t)d;
    float *c = (float *)wb_alloc(out_floats * sizeof(float));
    wb_memset(c, 0, out_floats * sizeof(float));
    matmul_strip(a, c, (uint32_t)d, (uint32_t)f.rows_from, (uint32_t)f.rows_to);
    wr_t w;
    wr_init(&w, out_floats * 4 + 96);
    w.len = 1;
    wr_head(&w, 5, 6);
    wr_text(&w, "d");
    wr_head(&w, 0, d);
    wr_text(&w, "v");
    wr_head(&w, 0, 1);
    wr_text(&w, "kind");
    wr_text(&w, "f32");
    wr_text(&w, "payload");
    wr_bytes(&w, (const uint8_t *)c, out_floats * 4);
    wr_text(&w, "rows_to");
    wr_head(&w, 0, f.rows_to);
    wr_text(&w, "rows_from");
    wr_head(&w, 0, f.rows_from);
    return finish(&w, 0, out);
}

/* ---------------- S4: fan-in, assemble, partial digest ---------------- */

static size_t run_s4(const uint8_t *input, size_t len, uint8_t **out) {
    fields_t f;
    if (parse_frame(input, len, &f) || !f.has_v || f.v != 1 || !f.has_blocks)
        return emit_error("MalformedFrame", "expected v=1 fan-in frame", out);
    if (f.n_blocks != 4)
        return emit_error("IncompleteFanIn", "exactly 4 blocks required", out);
    fields_t b[4];
    for (int i = 0; i < 4; i++) {
        if (parse_frame(f.blocks[i], (size_t)f.blocks_len[i], &b[i]) || !b[i].has_v ||
            b[i].v != 1 || !b[i].has_payload || !kind_is(&b[i], "f32") || !b[i].has_d ||
            !b[i].has_rows_from || !b[i].has_rows_to)
            return emit_error("MalformedFrame", "block frame invalid", out);
    }
    /* order strips by starting row (arrival order is irrelevant) */
    int order[4] = {0, 1, 2, 3};
    for (int i = 1; i < 4; i++)
        for (int j = i; j > 0 && b[order[j]].rows_from < b[order[j - 1]].rows_from; j--) {
            int t = order[j];
            order[j] = order[j - 1];
            order[j - 1] = t;
        }
    uint64_t d = b[0].d;
    if (d == 0 || d > WB_MAX_DIM)
        return emit_error("DimensionMismatch", "invalid matrix dimension", out);
    uint64_t next_row = 0;
    for (int i = 0; i < 4; i++) {
        const fields_t *blk = &b[order[i]];
        if (blk->d != d || blk->rows_from != next_row || blk->rows_to <= blk->rows_from ||
            blk->rows_to > d || blk->payload_len != (blk->rows_to - blk->rows_from) * d * 4)
            return emit_error("IncompleteFanIn", "strips do not tile rows 0..d exactly", out);
        next_row = blk->rows_to;
    }
    if (next_row != d)
        return emit_error("IncompleteFanIn", "strips do not cover all rows", out);
    uint8_t *full = (uint8_t *)wb_alloc((size_t)(d * d * 4));
    for (int i = 0; i < 4; i++) {
        const fields_t *blk = &b[order[i]];
        wb_memcpy(full + (size_t)blk->rows_from * d * 4, blk->payload, (size_t)blk->payload_len);
    }
    uint8_t digest[32];
    wb_blake3(full, (size_t)(d * d * 4), digest);
    wr_t w;
    wr_init(&w, (size_t)(d * d * 4) + 96);
    w.len = 1;
    wr_head(&w, 5, 4);
    wr_text(&w, "v");
    wr_head(&w, 0, 1);
    wr_text(&w, "kind");
    wr_text(&w, "f32");
    wr_text(&w, "digest");
    wr_bytes(&w, digest, 32);
    wr_text(&w, "payload");
    wr_bytes(&w, full, (size_t)(d * d * 4));
    return finish(&w, 0, out);
}

/* ---------------- S5: re-encode, final digest, verify ---------------- */

static size_t run_s5(const uint8_t *input, size_t len, uint8_t **out) {
    fields_t f;
    if (parse_frame(input, len, &f) || !f.has_v || f.v != 1 || !f.has_payload ||
        !kind_is(&f, "f32") || f.payload_len == 0)
        return emit_error("MalformedFrame", "expected v=1 nonempty f32 data frame", out);
    if (f.expected && f.expected_len != 32)
        return emit_error("MalformedFrame", "expected digest must be 32 bytes", out);
    wr_t enc;
    wr_init(&enc, (size_t)f.payload_len + 64);
    wr_head(&enc, 5, 3);
    wr_text(&enc, "v");
    wr_head(&enc, 0, 1);
    wr_text(&enc, "kind");
    wr_text(&enc, "f32");
    wr_text(&enc, "payload");
    wr_bytes(&enc, f.payload, (size_t)f.payload_len);
    uint8_t digest[32];
    wb_blake3(enc.buf, enc.len, digest);
    int verified = 0;
    if (f.expected) {
        if (wb_memcmp(f.expected, digest, 32) != 0)
            return emit_error("DigestMismatch", "final digest differs from expected", out);
        verified = 1;
    }
    wr_t w;
    wr_init(&w, enc.len + 128);
    w.len = 1;
    wr_head(&w, 5, verified ? 4 : 3);
    wr_text(&w, "v");
    wr_head(&w, 0, 1);
    wr_text(&w, "frame");
    wr_bytes(&w, enc.buf, enc.len);
    wr_text(&w, "digest");
    wr_bytes(&w, digest, 32);
    if (verified) {
        wr_text(&w, "verified");
        uint8_t t = 0xF5;
        wr_raw(&w, &t, 1);
    }
    return finish(&w, 0, out);
}

/* ---------------- dispatch and entry points ---------------- */

#ifdef __wasm__

#ifndef WB_STEP
#error "guest builds must define WB_STEP"
#endif

#define WB_CONCAT(a, b) a##b
#define WB_STEP_FN(n) WB_CONCAT(run_s, n)

/* Input frame sits in linear memory at [ptr, ptr+len); the packed return
 * value is (out_ptr << 32) | out_len of the tag-prefixed result. Only the
 * selected step is referenced so the linker drops the other kernels. */
__attribute__((export_name("run"))) uint64_t run(uint32_t ptr, uint32_t len) {
    wb_arena_init((uintptr_t)ptr + len);
    uint8_t *out;
    size_t out_len = WB_STEP_FN(WB_STEP)((const uint8_t *)(uintptr_t)ptr, len, &out);
    return ((uint64_t)(uintptr_t)out << 32) | (uint64_t)out_len;
}

#else /* native oracle library */

size_t wb_do_run(int step, const uint8_t *input, size_t len, uint8_t **out) {
    switch (step) {
        case 1: return run_s1(input, len, out);
        case 2: return run_s2(input, len, out);
        case 3: return run_s3(input, len, out);
        case 4: return run_s4(input, len, out);
        case 5: return run_s5(input, len, out);
        default: return emit_error("UnknownStep", "step index out of range", out);
    }
}

#include <stdlib.h>

int wb_run(int step, const uint8_t *input, size_t len, uint8_t **out, size_t *out_len) {
    wb_arena_init(0);
    uint8_t *buf;
    size_t n = wb_do_run(step, input, len, &buf);
    uint8_t *copy = (uint8_t *)malloc(n);
    if (!copy) return -1;
    wb_memcpy(copy, buf, n);
    *out = copy;
    *out_len = n;
    return 0;
}

void wb_buf_free(uint8_t *p) { free(p); }

void wb_blake3_hash(const uint8_t *input, size_t len, uint8_t *out32) {
    wb_blake3(input, len, out32);
}

uint32_t wb_crc32_hash(const uint8_t *input, size_t len) { return wb_crc32(input, len); }

#endif
