# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled simulation kernels.

Mirrors ``_pykernels`` draw for draw: two uniforms per jump from a Philox
stream, sojourn ``-log1p(-u1)/total``, category by scanning ``u2*total``
through births then deaths.
"""

import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport log1p, INFINITY
from libc.stdlib cimport malloc, free
from numpy.random cimport bitgen_t

cnp.import_array()

BACKEND = "cython"


cdef struct Model:
    int code
    int k1
    int k2
    double* lam
    double* mu
    double nu
    long K
    bint integers
    double* btab
    double* dtab
    long nrows
    int bcols
    int dcols


from gbdp._pykernels import StreamBank, make_bitgen


cdef bitgen_t* _bitgen_ptr(object bg) except NULL:
    capsule = bg.capsule
    return <bitgen_t*> PyCapsule_GetPointer(capsule, "BitGenerator")


cdef class _Params:
    """Holds contiguous copies of the rate arrays for the lifetime of a call."""
    cdef Model m
    cdef double[::1] lam_v
    cdef double[::1] mu_v
    cdef double[:, ::1] btab_v
    cdef double[:, ::1] dtab_v
    cdef double* br
    cdef double* dr

    def __cinit__(self, params):
        code, lam, mu, nu, K, integers, btab, dtab = params
        self.lam_v = np.ascontiguousarray(lam, dtype=np.float64)
        self.mu_v = np.ascontiguousarray(mu, dtype=np.float64)
        self.btab_v = np.ascontiguousarray(np.atleast_2d(btab), dtype=np.float64)
        self.dtab_v = np.ascontiguousarray(np.atleast_2d(dtab), dtype=np.float64)
        self.m.code = code
        self.m.k1 = self.lam_v.shape[0]
        self.m.k2 = self.mu_v.shape[0]
        self.m.lam = &self.lam_v[0] if self.m.k1 > 0 else NULL
        self.m.mu = &self.mu_v[0] if self.m.k2 > 0 else NULL
        self.m.nu = nu
        self.m.K = K
        self.m.integers = integers
        self.m.nrows = self.btab_v.shape[0] if code == 0 else 0
        self.m.bcols = self.btab_v.shape[1]
        self.m.dcols = self.dtab_v.shape[1]
        self.m.btab = &self.btab_v[0, 0] if self.m.nrows > 0 else NULL
        self.m.dtab = &self.dtab_v[0, 0] if self.m.nrows > 0 else NULL
        self.br = <double*> malloc((self.m.k1 + 1) * sizeof(double))
        self.dr = <double*> malloc((self.m.k2 + 1) * sizeof(double))
        if self.br == NULL or self.dr == NULL:
            raise MemoryError()

    def __dealloc__(self):
        free(self.br)
        free(self.dr)


cdef inline void _rates(Model* m, long n, double* b, double* d) noexcept nogil:
    cdef int i, j
    cdef int code = m.code
    for i in range(m.k1):
        if code == 1:
            b[i] = <double> n * m.lam[i]
        elif code == 2:
            b[i] = m.lam[i]
        elif code == 3:
            b[i] = m.nu if n == 0 else <double> n * m.lam[i]
        elif code == 4:
            b[i] = m.nu + <double> n * m.lam[i]
        elif code == 5:
            b[i] = 0.0 if n + i + 1 > m.K else <double> (m.K - n) * m.lam[i]
        else:
            b[i] = m.btab[n * m.bcols + i] if n < m.nrows else 0.0
    for j in range(m.k2):
        if code == 2:
            if m.integers or j + 1 <= n:
                d[j] = m.mu[j]
            else:
                d[j] = 0.0
        elif code == 0:
            d[j] = m.dtab[n * m.dcols + j] if (j + 1 <= n and n < m.nrows) else 0.0
        else:
            d[j] = <double> n * m.mu[j] if j + 1 <= n else 0.0


cdef inline int _step(Model* m, long n, bitgen_t* rng, double* b, double* d,
                      double* tau, long* inc) noexcept nogil:
    """Return 0 after drawing a jump, 1 when ``n`` is absorbing."""
    cdef double total = 0.0, acc = 0.0, target, u1, u2
    cdef int i, j
    cdef long last = 0
    _rates(m, n, b, d)
    for i in range(m.k1):
        total += b[i]
    for j in range(m.k2):
        total += d[j]
    if total <= 0.0:
        tau[0] = INFINITY
        inc[0] = 0
        return 1
    u1 = rng.next_double(rng.state)
    u2 = rng.next_double(rng.state)
    tau[0] = -log1p(-u1) / total
    target = u2 * total
    for i in range(m.k1):
        if b[i] > 0.0:
            acc += b[i]
            last = i + 1
            if target < acc:
                inc[0] = i + 1
                return 0
    for j in range(m.k2):
        if d[j] > 0.0:
            acc += d[j]
            last = -(j + 1)
            if target < acc:
                inc[0] = -(j + 1)
                return 0
    inc[0] = last
    return 0


def simulate_path(params, long n0, double horizon, key, stream, long max_jumps):
    cdef _Params p = _Params(params)
    bg = make_bitgen(key, stream)
    cdef bitgen_t* rng = _bitgen_ptr(bg)
    cdef double t = 0.0, tau
    cdef long n = n0, inc, count = 0, cap = 64
    cdef bint capped = False
    cdef int absorbed
    times = np.empty(cap, dtype=np.float64)
    incs = np.empty(cap, dtype=np.int64)
    cdef double[::1] tv = times
    cdef long[::1] iv = incs
    while True:
        if count >= max_jumps:
            capped = True
            break
        with nogil:
            absorbed = _step(&p.m, n, rng, p.br, p.dr, &tau, &inc)
        if absorbed or t + tau > horizon:
            break
        t += tau
        n += inc
        if count == cap:
            cap *= 2
            times = np.resize(times, cap)
            incs = np.resize(incs, cap)
            tv = times
            iv = incs
        tv[count] = t
        iv[count] = inc
        count += 1
    return times[:count].copy(), incs[:count].copy(), capped


cdef long _observe_one(Model* m, long n0, double horizon, double* q, long Q,
                       bitgen_t* rng, double* b, double* d, double* row,
                       long max_jumps) noexcept nogil:
    cdef double t = 0.0, X = 0.0, tau, tnew
    cdef long n = n0, B = n0, D = 0, inc, qi = 0, jumps = 0, capped = 0
    while True:
        if jumps >= max_jumps:
            capped = 1
            break
        if _step(m, n, rng, b, d, &tau, &inc):
            break
        tnew = t + tau
        if tnew > horizon:
            break
        while qi < Q and q[qi] < tnew:
            row[4 * qi] = n
            row[4 * qi + 1] = B
            row[4 * qi + 2] = D
            row[4 * qi + 3] = X + <double> n * (q[qi] - t)
            qi += 1
        X += <double> n * tau
        t = tnew
        n += inc
        if inc > 0:
            B += inc
        else:
            D -= inc
        jumps += 1
    while qi < Q:
        row[4 * qi] = n
        row[4 * qi + 1] = B
        row[4 * qi + 2] = D
        row[4 * qi + 3] = X + <double> n * (q[qi] - t)
        qi += 1
    return capped


def observe_batch(params, long n0, double horizon, qtimes, key, stream0, long M,
                  long max_jumps):
    cdef _Params p = _Params(params)
    cdef double[::1] q = np.ascontiguousarray(qtimes, dtype=np.float64)
    cdef long Q = q.shape[0]
    out = np.empty((M, Q, 4), dtype=np.float64)
    cdef double[:, :, ::1] ov = out
    cdef long r, capped = 0
    cdef bitgen_t* rng
    cdef double* qp = &q[0] if Q > 0 else NULL
    bank = StreamBank(key)
    rng = _bitgen_ptr(bank.bitgen)
    for r in range(M):
        bank.at(stream0 + r)
        with nogil:
            capped += _observe_one(&p.m, n0, horizon, qp, Q, rng, p.br, p.dr,
                                   &ov[r, 0, 0] if Q > 0 else NULL, max_jumps)
    return out, capped


def hitting_batch(params, long k, int weight_mode, key, stream0, long M, long max_jumps):
    cdef _Params p = _Params(params)
    Z = np.empty(M, dtype=np.float64)
    W = np.empty(M, dtype=np.float64)
    cens = np.zeros(M, dtype=bool)
    cdef double[::1] zv = Z
    cdef double[::1] wv = W
    cdef cnp.uint8_t[::1] cv = cens.view(np.uint8)
    cdef long r, n, inc, jumps
    cdef double t, w, tau
    cdef bint censored
    cdef bitgen_t* rng
    bank = StreamBank(key)
    rng = _bitgen_ptr(bank.bitgen)
    for r in range(M):
        bank.at(stream0 + r)
        with nogil:
            t = 0.0
            w = 0.0
            n = k
            jumps = 0
            censored = False
            while n != 0:
                if jumps >= max_jumps:
                    censored = True
                    break
                if _step(&p.m, n, rng, p.br, p.dr, &tau, &inc):
                    censored = True
                    break
                t += tau
                if weight_mode == 1:
                    w += <double> n * tau
                else:
                    w += 1.0 * tau
                n += inc
                jumps += 1
            if censored:
                zv[r] = INFINITY
                wv[r] = INFINITY
                cv[r] = 1
            else:
                zv[r] = t
                wv[r] = w
    return Z, W, cens
