"""Pure-Python simulation kernels.

Same API and the same random stream as the compiled ``_ckernels`` module,
so both backends produce bit-identical output for a given key and stream.
Each jump consumes two uniform doubles: ``u1`` for the sojourn and ``u2``
for the event category (births by size, then deaths by size).
"""

from math import inf, log1p

import numpy as np

BACKEND = "python"

_BUF = 256


class StreamBank:
    """One Philox generator for a key, repositioned onto stream ``s`` on demand.

    Resetting the counter is much cheaper than constructing a generator per
    path, and yields exactly the stream a fresh ``make_bitgen(key, s)`` would.
    """

    def __init__(self, key):
        self.bitgen = make_bitgen(key, 0)
        self._fresh = self.bitgen.state

    def at(self, stream):
        st = self._fresh
        st["state"]["counter"][3] = stream
        self.bitgen.state = st
        return self.bitgen


class _Uniforms:
    """Buffered uniform draws from one Philox stream."""

    def __init__(self, key, stream, bank=None):
        bank = bank or StreamBank(key)
        bank.at(stream)
        self._gen = np.random.Generator(bank.bitgen)
        self._buf = ()
        self._pos = 0

    def reset(self, bank, stream):
        bank.at(stream)
        self._buf = ()
        self._pos = 0

    def __call__(self):
        if self._pos >= len(self._buf):
            self._buf = self._gen.random(_BUF).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u


def make_bitgen(key, stream):
    return np.random.Philox(key=[key & 0xFFFFFFFFFFFFFFFF, 0], counter=[0, 0, 0, stream])


class _Rates:
    def __init__(self, params):
        code, lam, mu, nu, K, integers, btab, dtab = params
        self.code = int(code)
        self.lam = [float(x) for x in lam]
        self.mu = [float(x) for x in mu]
        self.nu = float(nu)
        self.K = int(K)
        self.integers = bool(integers)
        self.btab = np.asarray(btab, dtype=float).tolist()
        self.dtab = np.asarray(dtab, dtype=float).tolist()
        # table models pass zero vectors of the right length
        self.k1 = len(self.lam)
        self.k2 = len(self.mu)

    def __call__(self, n):
        """Return ``(birth_rates, death_rates)`` as lists of sizes 1..k."""
        code = self.code
        lam, mu = self.lam, self.mu
        if code == 1:
            b = [n * x for x in lam]
        elif code == 2:
            b = list(lam)
        elif code == 3:
            b = [self.nu] * len(lam) if n == 0 else [n * x for x in lam]
        elif code == 4:
            b = [self.nu + n * x for x in lam]
        elif code == 5:
            K = self.K
            b = [0.0 if n + i > K else (K - n) * x for i, x in enumerate(lam, 1)]
        else:
            row = self.btab[n] if n < len(self.btab) else None
            b = [row[i] if row is not None else 0.0 for i in range(self.k1)]
        if code == 2:
            if self.integers:
                d = list(mu)
            else:
                d = [0.0 if j > n else x for j, x in enumerate(mu, 1)]
        elif code == 0:
            row = self.dtab[n] if n < len(self.dtab) else None
            d = [0.0 if (j > n or row is None) else row[j - 1] for j in range(1, self.k2 + 1)]
        else:
            d = [0.0 if j > n else n * x for j, x in enumerate(mu, 1)]
        return b, d


def _pick(b, d, target):
    acc = 0.0
    last = 0
    for i, r in enumerate(b, 1):
        if r > 0.0:
            acc += r
            last = i
            if target < acc:
                return i
    for j, r in enumerate(d, 1):
        if r > 0.0:
            acc += r
            last = -j
            if target < acc:
                return -j
    return last


def _step(rates, n, draw):
    """Return ``(tau, increment)`` for one jump, or ``(inf, 0)`` when absorbed."""
    b, d = rates(n)
    total = 0.0
    for r in b:
        total += r
    for r in d:
        total += r
    if total <= 0.0:
        return inf, 0
    u1 = draw()
    u2 = draw()
    tau = -log1p(-u1) / total
    return tau, _pick(b, d, u2 * total)


def simulate_path(params, n0, horizon, key, stream, max_jumps):
    """One trajectory on ``[0, horizon]``.

    Returns ``(jump_times, increments, capped)`` where ``capped`` is true when
    ``max_jumps`` stopped the run early.
    """
    rates = _Rates(params)
    draw = _Uniforms(key, stream)
    times = []
    incs = []
    t = 0.0
    n = int(n0)
    capped = False
    while True:
        if len(times) >= max_jumps:
            capped = True
            break
        tau, inc = _step(rates, n, draw)
        if tau == inf or t + tau > horizon:
            break
        t += tau
        n += inc
        times.append(t)
        incs.append(inc)
    return np.asarray(times, dtype=np.float64), np.asarray(incs, dtype=np.int64), capped


def observe_batch(params, n0, horizon, qtimes, key, stream0, M, max_jumps):
    """Simulate ``M`` paths and observe ``(N, B, D, X)`` at each query time.

    ``X`` is the integral of the state itself.  Streams are
    ``stream0 .. stream0 + M - 1``.  Returns ``(out, capped_count)``.
    """
    rates = _Rates(params)
    q = [float(x) for x in qtimes]
    Q = len(q)
    out = np.empty((M, Q, 4), dtype=np.float64)
    capped = 0
    bank = StreamBank(key)
    draw = _Uniforms(key, stream0, bank)
    for r in range(M):
        draw.reset(bank, stream0 + r)
        t = 0.0
        n = int(n0)
        B = n
        D = 0
        X = 0.0
        qi = 0
        jumps = 0
        row = out[r]
        while True:
            if jumps >= max_jumps:
                capped += 1
                break
            tau, inc = _step(rates, n, draw)
            tnew = t + tau
            if tau == inf or tnew > horizon:
                break
            while qi < Q and q[qi] < tnew:
                row[qi, 0] = n
                row[qi, 1] = B
                row[qi, 2] = D
                row[qi, 3] = X + n * (q[qi] - t)
                qi += 1
            X += n * tau
            t = tnew
            n += inc
            if inc > 0:
                B += inc
            else:
                D -= inc
            jumps += 1
        while qi < Q:
            row[qi, 0] = n
            row[qi, 1] = B
            row[qi, 2] = D
            row[qi, 3] = X + n * (q[qi] - t)
            qi += 1
    return out, capped


def hitting_batch(params, k, weight_mode, key, stream0, M, max_jumps):
    """Run ``M`` paths from ``k`` until state 0 is entered.

    ``weight_mode`` 0 integrates ``g = 1`` and 1 integrates ``g(n) = n``.
    Returns ``(Z, W, censored)``; censored runs carry ``inf`` in Z and W.
    """
    rates = _Rates(params)
    Z = np.empty(M, dtype=np.float64)
    W = np.empty(M, dtype=np.float64)
    cens = np.zeros(M, dtype=bool)
    bank = StreamBank(key)
    draw = _Uniforms(key, stream0, bank)
    for r in range(M):
        draw.reset(bank, stream0 + r)
        t = 0.0
        w = 0.0
        n = int(k)
        jumps = 0
        while n != 0:
            if jumps >= max_jumps:
                cens[r] = True
                break
            tau, inc = _step(rates, n, draw)
            if tau == inf:
                cens[r] = True
                break
            t += tau
            w += (n if weight_mode == 1 else 1.0) * tau
            n += inc
            jumps += 1
        if cens[r]:
            Z[r] = inf
            W[r] = inf
        else:
            Z[r] = t
            W[r] = w
    return Z, W, cens
