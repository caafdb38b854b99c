/* BLAKE3 hash, one-shot, single-threaded. Tree hashing over 1 KiB chunks
 * with a chaining-value stack; only the 32-byte digest output is needed. */
#include "wb_common.h"

#define B3_CHUNK_LEN 1024u
#define B3_BLOCK_LEN 64u

#define B3_CHUNK_START 1u
#define B3_CHUNK_END 2u
#define B3_PARENT 4u
#define B3_ROOT 8u

static const uint32_t B3_IV[8] = {
    0x6A09E667u, 0xBB67AE85u, 0x3C6EF372u, 0xA54FF53Au,
    0x510E527Fu, 0x9B05688Cu, 0x1F83D9ABu, 0x5BE0CD19u,
};

static const uint8_t B3_PERM[16] = {2, 6, 3, 10, 7, 0, 4, 13, 1, 11, 12, 5, 9, 14, 15, 8};

static inline uint32_t rotr32(uint32_t x, int n) {
    return (x >> n) | (x << (32 - n));
}

static inline void b3_g(uint32_t *st, int a, int b, int c, int d, uint32_t mx, uint32_t my) {
    st[a] = st[a] + st[b] + mx;
    st[d] = rotr32(st[d] ^ st[a], 16);
    st[c] = st[c] + st[d];
    st[b] = rotr32(st[b] ^ st[c], 12);
    st[a] = st[a] + st[b] + my;
    st[d] = rotr32(st[d] ^ st[a], 8);
    st[c] = st[c] + st[d];
    st[b] = rotr32(st[b] ^ st[c], 7);
}

static void b3_compress(const uint32_t cv[8], const uint32_t block[16], uint64_t counter,
                        uint32_t block_len, uint32_t flags, uint32_t out[16]) {
    uint32_t st[16];
    uint32_t m[16];
    for (int i = 0; i < 8; i++) st[i] = cv[i];
    for (int i = 0; i < 4; i++) st[8 + i] = B3_IV[i];
    st[12] = (uint32_t)counter;
    st[13] = (uint32_t)(counter >> 32);
    st[14] = block_len;
    st[15] = flags;
    for (int i = 0; i < 16; i++) m[i] = block[i];

    for (int round = 0; round < 7; round++) {
        b3_g(st, 0, 4, 8, 12, m[0], m[1]);
        b3_g(st, 1, 5, 9, 13, m[2], m[3]);
        b3_g(st, 2, 6, 10, 14, m[4], m[5]);
        b3_g(st, 3, 7, 11, 15, m[6], m[7]);
        b3_g(st, 0, 5, 10, 15, m[8], m[9]);
        b3_g(st, 1, 6, 11, 12, m[10], m[11]);
        b3_g(st, 2, 7, 8, 13, m[12], m[13]);
        b3_g(st, 3, 4, 9, 14, m[14], m[15]);
        if (round < 6) {
            uint32_t next[16];
            for (int i = 0; i < 16; i++) next[i] = m[B3_PERM[i]];
            for (int i = 0; i < 16; i++) m[i] = next[i];
        }
    }
    for (int i = 0; i < 8; i++) {
        st[i] ^= st[i + 8];
        st[i + 8] ^= cv[i];
    }
    for (int i = 0; i < 16; i++) out[i] = st[i];
}

static void b3_words_from_le(const uint8_t *bytes, size_t len, uint32_t out[16]) {
    uint8_t buf[B3_BLOCK_LEN];
    wb_memset(buf, 0, sizeof(buf));
    wb_memcpy(buf, bytes, len);
    for (int i = 0; i < 16; i++) {
        out[i] = (uint32_t)buf[4 * i] | ((uint32_t)buf[4 * i + 1] << 8) |
                 ((uint32_t)buf[4 * i + 2] << 16) | ((uint32_t)buf[4 * i + 3] << 24);
    }
}

/* A compression input held back so the ROOT flag can be applied last. */
typedef struct {
    uint32_t cv[8];
    uint32_t block[16];
    uint64_t counter;
    uint32_t block_len;
    uint32_t flags;
} b3_output;

static void b3_output_cv(const b3_output *o, uint32_t cv[8]) {
    uint32_t tmp[16];
    b3_compress(o->cv, o->block, o->counter, o->block_len, o->flags, tmp);
    for (int i = 0; i < 8; i++) cv[i] = tmp[i];
}

/* Chunk -> pending output; all blocks but the last are folded into the CV. */
static void b3_chunk_output(const uint8_t *chunk, size_t len, uint64_t counter, b3_output *out) {
    uint32_t h[8];
    for (int i = 0; i < 8; i++) h[i] = B3_IV[i];
    size_t nblocks = len == 0 ? 1 : (len + B3_BLOCK_LEN - 1) / B3_BLOCK_LEN;
    for (size_t b = 0; b + 1 < nblocks; b++) {
        uint32_t m[16], tmp[16];
        b3_words_from_le(chunk + b * B3_BLOCK_LEN, B3_BLOCK_LEN, m);
        uint32_t flags = b == 0 ? B3_CHUNK_START : 0;
        b3_compress(h, m, counter, B3_BLOCK_LEN, flags, tmp);
        for (int i = 0; i < 8; i++) h[i] = tmp[i];
    }
    size_t last_off = (nblocks - 1) * B3_BLOCK_LEN;
    size_t last_len = len - last_off;
    for (int i = 0; i < 8; i++) out->cv[i] = h[i];
    b3_words_from_le(chunk + last_off, last_len, out->block);
    out->counter = counter;
    out->block_len = (uint32_t)last_len;
    out->flags = B3_CHUNK_END | (nblocks == 1 ? B3_CHUNK_START : 0);
}

void wb_blake3(const uint8_t *input, size_t len, uint8_t out[32]) {
    uint32_t cv_stack[54][8];
    int sp = 0;
    uint64_t n_chunks = len == 0 ? 1 : ((uint64_t)len + B3_CHUNK_LEN - 1) / B3_CHUNK_LEN;
    b3_output final_out;

    for (uint64_t ci = 0; ci < n_chunks; ci++) {
        size_t off = (size_t)ci * B3_CHUNK_LEN;
        size_t clen = ci == n_chunks - 1 ? len - off : B3_CHUNK_LEN;
        b3_output o;
        b3_chunk_output(input + off, clen, ci, &o);
        if (ci == n_chunks - 1) {
            final_out = o;
            break;
        }
        uint32_t cv[8];
        b3_output_cv(&o, cv);
        uint64_t total = ci + 1;
        while ((total & 1) == 0) {
            sp--;
            uint32_t block[16];
            for (int i = 0; i < 8; i++) block[i] = cv_stack[sp][i];
            for (int i = 0; i < 8; i++) block[8 + i] = cv[i];
            b3_output parent = {{0}, {0}, 0, B3_BLOCK_LEN, B3_PARENT};
            for (int i = 0; i < 8; i++) parent.cv[i] = B3_IV[i];
            for (int i = 0; i < 16; i++) parent.block[i] = block[i];
            b3_output_cv(&parent, cv);
            total >>= 1;
        }
        for (int i = 0; i < 8; i++) cv_stack[sp][i] = cv[i];
        sp++;
    }

    while (sp > 0) {
        uint32_t right[8];
        b3_output_cv(&final_out, right);
        sp--;
        for (int i = 0; i < 8; i++) final_out.block[i] = cv_stack[sp][i];
        for (int i = 0; i < 8; i++) final_out.block[8 + i] = right[i];
        for (int i = 0; i < 8; i++) final_out.cv[i] = B3_IV[i];
        final_out.counter = 0;
        final_out.block_len = B3_BLOCK_LEN;
        final_out.flags = B3_PARENT;
    }

    uint32_t tmp[16];
    b3_compress(final_out.cv, final_out.block, final_out.counter, final_out.block_len,
                final_out.flags | B3_ROOT, tmp);
    for (int i = 0; i < 8; i++) {
        out[4 * i] = (uint8_t)tmp[i];
        out[4 * i + 1] = (uint8_t)(tmp[i] >> 8);
        out[4 * i + 2] = (uint8_t)(tmp[i] >> 16);
        out[4 * i + 3] = (uint8_t)(tmp[i] >> 24);
    }
}
