/* Vectorizable single-precision transcendental helpers (Cephes-style
 * polynomial kernels). Range reduction is done in double so -ffast-math
 * reassociation cannot collapse the multi-part constants. Used only on the
 * float32 training path; the float64 path calls libm directly. */
#ifndef RELIGHTFIELD_FASTMATHF_H
#define RELIGHTFIELD_FASTMATHF_H

#include <math.h>
#include <stdint.h>

static inline float rlf_fast_exp(float x) {
    const float LOG2E = 1.442695040f;
    const double LN2 = 0.6931471805599453;
    if (x > 88.0f) x = 88.0f;
    if (x < -87.0f) x = -87.0f;
    float n = floorf(x * LOG2E + 0.5f);
    float r = (float)((double)x - (double)n * LN2);
    float z = r * r;
    float p = 1.9875691500e-4f;
    p = p * r + 1.3981999507e-3f;
    p = p * r + 8.3334519073e-3f;
    p = p * r + 4.1665795894e-2f;
    p = p * r + 1.6666665459e-1f;
    p = p * r + 5.0000001201e-1f;
    p = p * z + r + 1.0f;
    union { float f; int32_t i; } u;
    u.i = ((int32_t)n + 127) << 23;
    return p * u.f;
}

/* log(1 + e) for e in [0, 1] (enough for stable softplus). */
static inline float rlf_fast_log1p01(float e) {
    union { float f; int32_t i; } u;
    u.f = 1.0f + e;
    int32_t ei = ((u.i >> 23) & 0xff) - 127;
    u.i = (u.i & 0x007fffff) | 0x3f800000;
    float m = u.f;
    float fe = (float)ei;
    if (m > 1.41421356f) { m *= 0.5f; fe += 1.0f; }
    m = m - 1.0f;
    float z = m * m;
    float p = 7.0376836292e-2f;
    p = p * m - 1.1514610310e-1f;
    p = p * m + 1.1676998740e-1f;
    p = p * m - 1.2420140846e-1f;
    p = p * m + 1.4249322787e-1f;
    p = p * m - 1.6668057665e-1f;
    p = p * m + 2.0000714765e-1f;
    p = p * m - 2.4999993993e-1f;
    p = p * m + 3.3333331174e-1f;
    p = p * m * z - 0.5f * z;
    return (float)((double)m + (double)p + (double)fe * 0.6931471805599453);
}

static inline float rlf_fast_softplus(float x) {
    float ax = x > 0.0f ? -x : x;
    float mx = x > 0.0f ? x : 0.0f;
    return mx + rlf_fast_log1p01(rlf_fast_exp(ax));
}

static inline float rlf_fast_sigmoid(float x) {
    float ax = x > 0.0f ? -x : x;
    float e = rlf_fast_exp(ax);
    float s = e / (1.0f + e);
    return x > 0.0f ? 1.0f - s : s;
}

static inline float rlf_sinpoly(float z) {
    float zz = z * z;
    return ((-1.9515295891e-4f * zz + 8.3321608736e-3f) * zz - 1.6666654611e-1f) * zz * z + z;
}

static inline float rlf_cospoly(float z) {
    float zz = z * z;
    return ((2.443315711809948e-5f * zz - 1.388731625493765e-3f) * zz + 4.166664568298827e-2f) * zz * zz - 0.5f * zz + 1.0f;
}

/* Shared octant reduction: |x| -> z in [-pi/4, pi/4], octant in 0..3 plus
 * half-turn sign. Double arithmetic keeps the residual exact to ~1e-13 for
 * |x| up to ~1e6 rad. */
static inline float rlf_reduce(float ax, int32_t *octant) {
    const double PIO4 = 0.7853981633974483096;
    double j = floor((double)ax * 1.2732395447351626862);
    int32_t ji = (int32_t)j;
    if (ji & 1) { ji += 1; j += 1.0; }
    *octant = ji & 7;
    return (float)((double)ax - j * PIO4);
}

static inline float rlf_fast_sin(float x) {
    float sign = x < 0.0f ? -1.0f : 1.0f;
    float ax = fabsf(x);
    int32_t oct;
    float z = rlf_reduce(ax, &oct);
    if (oct > 3) { oct -= 4; sign = -sign; }
    float v = (oct == 1 || oct == 2) ? rlf_cospoly(z) : rlf_sinpoly(z);
    return v * sign;
}

static inline float rlf_fast_cos(float x) {
    float ax = fabsf(x);
    int32_t oct;
    float z = rlf_reduce(ax, &oct);
    float sign = 1.0f;
    if (oct > 3) { oct -= 4; sign = -sign; }
    if (oct > 1) sign = -sign;
    float v = (oct == 1 || oct == 2) ? rlf_sinpoly(z) : rlf_cospoly(z);
    return v * sign;
}

#endif
