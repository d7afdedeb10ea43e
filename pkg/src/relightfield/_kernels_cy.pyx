# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the hot kernels in kernels_py (same signatures).

float32 paths use vectorizable polynomial transcendentals (training mode);
float64 paths call libm directly (test/oracle mode accuracy).
"""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport exp, log1p, sin, cos, sqrt

cnp.import_array()

cdef extern from "_fastmathf.h":
    float rlf_fast_softplus(float x) nogil
    float rlf_fast_sigmoid(float x) nogil
    float rlf_fast_sin(float x) nogil
    float rlf_fast_cos(float x) nogil

BACKEND_NAME = "cython"


cdef inline double _softplus64(double x) nogil:
    if x > 0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


cdef inline double _sigmoid64(double x) nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def softplus(x):
    cdef cnp.ndarray xc = np.ascontiguousarray(x)
    cdef cnp.ndarray out = np.empty_like(xc)
    cdef Py_ssize_t n = xc.size, i
    cdef double* xd
    cdef double* od
    cdef float* xf
    cdef float* of
    if xc.dtype == np.float64:
        xd = <double*> cnp.PyArray_DATA(xc)
        od = <double*> cnp.PyArray_DATA(out)
        with nogil:
            for i in range(n):
                od[i] = _softplus64(xd[i])
    elif xc.dtype == np.float32:
        xf = <float*> cnp.PyArray_DATA(xc)
        of = <float*> cnp.PyArray_DATA(out)
        with nogil:
            for i in range(n):
                of[i] = rlf_fast_softplus(xf[i])
    else:
        raise TypeError(f"unsupported dtype {xc.dtype}")
    return out


def sigmoid(x):
    cdef cnp.ndarray xc = np.ascontiguousarray(x)
    cdef cnp.ndarray out = np.empty_like(xc)
    cdef Py_ssize_t n = xc.size, i
    cdef double* xd
    cdef double* od
    cdef float* xf
    cdef float* of
    if xc.dtype == np.float64:
        xd = <double*> cnp.PyArray_DATA(xc)
        od = <double*> cnp.PyArray_DATA(out)
        with nogil:
            for i in range(n):
                od[i] = _sigmoid64(xd[i])
    elif xc.dtype == np.float32:
        xf = <float*> cnp.PyArray_DATA(xc)
        of = <float*> cnp.PyArray_DATA(out)
        with nogil:
            for i in range(n):
                of[i] = rlf_fast_sigmoid(xf[i])
    else:
        raise TypeError(f"unsupported dtype {xc.dtype}")
    return out


def sincos(x):
    cdef cnp.ndarray xc = np.ascontiguousarray(x)
    cdef cnp.ndarray s = np.empty_like(xc)
    cdef cnp.ndarray c = np.empty_like(xc)
    cdef Py_ssize_t n = xc.size, i
    cdef double* xd
    cdef double* sd
    cdef double* cd
    cdef float* xf
    cdef float* sf
    cdef float* cf
    if xc.dtype == np.float64:
        xd = <double*> cnp.PyArray_DATA(xc)
        sd = <double*> cnp.PyArray_DATA(s)
        cd = <double*> cnp.PyArray_DATA(c)
        with nogil:
            for i in range(n):
                sd[i] = sin(xd[i])
                cd[i] = cos(xd[i])
    elif xc.dtype == np.float32:
        xf = <float*> cnp.PyArray_DATA(xc)
        sf = <float*> cnp.PyArray_DATA(s)
        cf = <float*> cnp.PyArray_DATA(c)
        with nogil:
            for i in range(n):
                sf[i] = rlf_fast_sin(xf[i])
            for i in range(n):
                cf[i] = rlf_fast_cos(xf[i])
    else:
        raise TypeError(f"unsupported dtype {xc.dtype}")
    return s, c


ctypedef fused real:
    float
    double


@cython.boundscheck(False)
@cython.wraparound(False)
def _adam_impl(real[::1] p, real[::1] g, real[::1] m, real[::1] v,
               double lr, double beta1, double beta2, double eps, double bc1, double bc2):
    cdef Py_ssize_t n = p.shape[0], i
    cdef double mi, vi, step = lr / bc1
    with nogil:
        for i in range(n):
            mi = beta1 * m[i] + (1.0 - beta1) * g[i]
            vi = beta2 * v[i] + (1.0 - beta2) * (<double>g[i] * <double>g[i])
            m[i] = <real>mi
            v[i] = <real>vi
            p[i] = <real>(p[i] - step * mi / (sqrt(vi / bc2) + eps))


def adam_step(p, g, m, v, lr, beta1, beta2, eps, t):
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    _adam_impl(p.reshape(-1), np.ascontiguousarray(g, dtype=p.dtype).reshape(-1),
               m.reshape(-1), v.reshape(-1), lr, beta1, beta2, eps, bc1, bc2)
