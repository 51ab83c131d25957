"""Rate laws for the generalized birth-death process and its variants.

A :class:`ModelSpec` is an immutable description of how fast births of size
``i`` and deaths of size ``j`` happen in state ``n``.  Every other module
reads rates exclusively through :func:`birth_rate` / :func:`death_rate`, so
boundary conventions live here and nowhere else:

* a death of size ``j`` from state ``n < j`` has rate zero, except on the
  ``"integers"`` lattice of the constant-rate model, which is a free
  random walk on Z;
* a parking arrival of size ``i`` from state ``n`` with ``n + i > K`` has
  rate zero.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import DomainError, UnsupportedVariantError


class Variant(str, enum.Enum):
    TABLE = "table"
    LINEAR = "linear"
    CONSTANT = "constant"
    IMMIGRATION_ZERO = "immigration_zero"
    IMMIGRATION_ALL = "immigration_all"
    PARKING = "parking"


class EventKind(str, enum.Enum):
    BIRTH = "birth"
    DEATH = "death"


NONNEGATIVE = "nonnegative"
INTEGERS = "integers"

_KERNEL_CODES = {
    Variant.TABLE: 0,
    Variant.LINEAR: 1,
    Variant.CONSTANT: 2,
    Variant.IMMIGRATION_ZERO: 3,
    Variant.IMMIGRATION_ALL: 4,
    Variant.PARKING: 5,
}


@dataclass(frozen=True)
class EventDescriptor:
    kind: EventKind
    size: int

    @property
    def increment(self) -> int:
        return self.size if self.kind is EventKind.BIRTH else -self.size

    @classmethod
    def from_increment(cls, inc: int) -> "EventDescriptor":
        if inc == 0:
            raise DomainError("an event must change the state")
        if inc > 0:
            return cls(EventKind.BIRTH, int(inc))
        return cls(EventKind.DEATH, int(-inc))


@dataclass(frozen=True)
class DerivedConstants:
    """Scalar summaries of the rate vectors.

    ``eta`` is the mean drift per individual, ``zeta`` the second moment of
    the jump law, ``Lambda`` the total per-individual event rate and
    ``beta`` the parking relaxation rate.  ``a1, a2, b1, b2`` are the
    first and second size-weighted birth and death sums they are built from.
    """

    eta: float
    zeta: float
    xi: float
    Lambda: float
    beta: float
    a1: float
    a2: float
    b1: float
    b2: float


def _as_rate_vector(values, name) -> tuple[float, ...]:
    try:
        vec = tuple(float(v) for v in values)
    except TypeError as exc:
        raise DomainError(f"{name} must be a sequence of rates") from exc
    for v in vec:
        if not math.isfinite(v) or v < 0.0:
            raise DomainError(f"{name} entries must be finite and nonnegative, got {v!r}")
    return vec


@dataclass(frozen=True)
class ModelSpec:
    """Immutable rate law.

    Use the named constructors (:meth:`linear`, :meth:`constant`, ...)
    rather than the raw initializer.  ``table`` maps ``(n, size, kind)`` to
    a rate and is only meaningful for :attr:`Variant.TABLE`.
    """

    variant: Variant
    lam: tuple[float, ...] = ()
    mu: tuple[float, ...] = ()
    nu: float = 0.0
    capacity: int | None = None
    table: Mapping[tuple[int, int, EventKind], float] = field(default_factory=dict)
    lattice: str = NONNEGATIVE

    def __post_init__(self):
        variant = Variant(self.variant)
        object.__setattr__(self, "variant", variant)
        if self.lattice not in (NONNEGATIVE, INTEGERS):
            raise DomainError(f"unknown lattice {self.lattice!r}")
        if self.lattice == INTEGERS and variant is not Variant.CONSTANT:
            raise DomainError("only the constant-rate model may live on the integers")
        if not math.isfinite(self.nu) or self.nu < 0:
            raise DomainError("nu must be finite and nonnegative")

        if variant is Variant.TABLE:
            clean = {}
            for key, rate in dict(self.table).items():
                n, size, kind = key
                kind = EventKind(kind)
                if int(n) < 0 or int(size) < 1:
                    raise DomainError(f"bad table key {key!r}")
                rate = float(rate)
                if not math.isfinite(rate) or rate < 0:
                    raise DomainError(f"table rates must be finite and nonnegative, got {rate!r}")
                clean[(int(n), int(size), kind)] = rate
            if not clean:
                raise DomainError("a table model needs at least one entry")
            object.__setattr__(self, "table", _FrozenDict(clean))
            return

        object.__setattr__(self, "lam", _as_rate_vector(self.lam, "lambda"))
        object.__setattr__(self, "mu", _as_rate_vector(self.mu, "mu"))
        object.__setattr__(self, "table", _FrozenDict())
        if not self.lam and not self.mu:
            raise DomainError("at least one of lambda, mu must be nonempty")
        if variant is Variant.PARKING:
            if self.capacity is None:
                raise DomainError("the parking model needs a capacity K")
            K = int(self.capacity)
            if len(self.lam) >= K or len(self.mu) >= K:
                raise DomainError("parking requires K1 < K and K2 < K")
            object.__setattr__(self, "capacity", K)
        elif self.capacity is not None:
            raise DomainError("capacity is only used by the parking model")
        if variant in (Variant.IMMIGRATION_ZERO, Variant.IMMIGRATION_ALL) and self.nu <= 0:
            raise DomainError("immigration variants need nu > 0")

    # -- constructors ------------------------------------------------------
    @classmethod
    def linear(cls, lam, mu):
        return cls(Variant.LINEAR, lam, mu)

    @classmethod
    def constant(cls, lam, mu, lattice=INTEGERS):
        return cls(Variant.CONSTANT, lam, mu, lattice=lattice)

    @classmethod
    def immigration_zero(cls, lam, mu, nu):
        return cls(Variant.IMMIGRATION_ZERO, lam, mu, nu=nu)

    @classmethod
    def immigration_all(cls, lam, mu, nu):
        return cls(Variant.IMMIGRATION_ALL, lam, mu, nu=nu)

    @classmethod
    def parking(cls, lam, mu, K):
        return cls(Variant.PARKING, lam, mu, capacity=K)

    @classmethod
    def from_table(cls, entries):
        """Build a table model from ``{(n, size, kind): rate}`` or an iterable of dicts."""
        if isinstance(entries, Mapping):
            table = dict(entries)
        else:
            table = {}
            for e in entries:
                table[(int(e["n"]), int(e["size"]), EventKind(e["kind"]))] = float(e["rate"])
        return cls(Variant.TABLE, table=table)

    # -- shape -------------------------------------------------------------
    @property
    def k1(self) -> int:
        if self.variant is Variant.TABLE:
            return max((s for (_, s, k) in self.table if k is EventKind.BIRTH), default=0)
        return len(self.lam)

    @property
    def k2(self) -> int:
        if self.variant is Variant.TABLE:
            return max((s for (_, s, k) in self.table if k is EventKind.DEATH), default=0)
        return len(self.mu)

    @property
    def finite_states(self) -> int | None:
        """Largest reachable state for bounded models, else ``None``."""
        if self.variant is Variant.PARKING:
            return self.capacity
        return None

    @property
    def zero_is_absorbing(self) -> bool:
        if self.lattice == INTEGERS:
            return False
        return all(birth_rate(self, 0, i) == 0.0 for i in range(1, self.k1 + 1))

    def kernel_params(self):
        """Flat tuple consumed by the simulation kernels."""
        import numpy as np

        lam = np.asarray(self.lam, dtype=np.float64)
        mu = np.asarray(self.mu, dtype=np.float64)
        if self.variant is Variant.TABLE:
            n_rows = 1 + max(n for (n, _, _) in self.table)
            btab = np.zeros((n_rows, max(self.k1, 1)))
            dtab = np.zeros((n_rows, max(self.k2, 1)))
            for (n, s, kind), rate in self.table.items():
                (btab if kind is EventKind.BIRTH else dtab)[n, s - 1] = rate
            lam = np.zeros(self.k1)
            mu = np.zeros(self.k2)
        else:
            btab = np.zeros((0, 1))
            dtab = np.zeros((0, 1))
        return (
            _KERNEL_CODES[self.variant],
            lam,
            mu,
            float(self.nu),
            int(self.capacity or 0),
            self.lattice == INTEGERS,
            btab,
            dtab,
        )

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        d = {"variant": self.variant.value}
        if self.variant is Variant.TABLE:
            d["table"] = [
                {"n": n, "kind": kind.value, "size": s, "rate": r}
                for (n, s, kind), r in sorted(self.table.items(), key=lambda kv: (kv[0][0], kv[0][2].value, kv[0][1]))
            ]
            return d
        d["lambda"] = list(self.lam)
        d["mu"] = list(self.mu)
        if self.variant in (Variant.IMMIGRATION_ZERO, Variant.IMMIGRATION_ALL):
            d["nu"] = self.nu
        if self.variant is Variant.PARKING:
            d["capacity"] = {"K": self.capacity, "K1": self.k1, "K2": self.k2}
        if self.variant is Variant.CONSTANT:
            d["lattice"] = self.lattice
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelSpec":
        allowed = {"variant", "lambda", "mu", "nu", "capacity", "table", "lattice"}
        unknown = set(d) - allowed
        if unknown:
            raise DomainError(f"unknown model keys: {sorted(unknown)}")
        if "variant" not in d:
            raise DomainError("model is missing 'variant'")
        try:
            variant = Variant(d["variant"])
        except ValueError as exc:
            raise DomainError(f"unknown variant {d['variant']!r}") from exc
        if variant is Variant.TABLE:
            return cls.from_table(d.get("table", []))
        capacity = None
        if "capacity" in d:
            cap = d["capacity"]
            extra = set(cap) - {"K", "K1", "K2"}
            if extra:
                raise DomainError(f"unknown capacity keys: {sorted(extra)}")
            capacity = int(cap["K"])
            if "K1" in cap and int(cap["K1"]) != len(d.get("lambda", ())):
                raise DomainError("capacity.K1 must equal len(lambda)")
            if "K2" in cap and int(cap["K2"]) != len(d.get("mu", ())):
                raise DomainError("capacity.K2 must equal len(mu)")
        kwargs = dict(
            lam=d.get("lambda", ()),
            mu=d.get("mu", ()),
            nu=float(d.get("nu", 0.0)),
            capacity=capacity,
        )
        if variant is Variant.CONSTANT:
            kwargs["lattice"] = d.get("lattice", INTEGERS)
        elif "lattice" in d and d["lattice"] != NONNEGATIVE:
            raise DomainError("only the constant-rate model may live on the integers")
        return cls(variant, **kwargs)

    @classmethod
    def load(cls, path) -> "ModelSpec":
        with open(Path(path), encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


class _FrozenDict(dict):
    """A dict that refuses mutation, so specs stay hashable-by-value in spirit."""

    def _readonly(self, *args, **kwargs):
        raise TypeError("model tables are immutable")

    __setitem__ = __delitem__ = clear = pop = popitem = setdefault = update = _readonly

    def __hash__(self):
        return hash(tuple(sorted(self.items(), key=repr)))


def _check_state(spec: ModelSpec, n: int):
    if spec.lattice == NONNEGATIVE and n < 0:
        raise DomainError(f"state {n} is negative")
    if spec.variant is Variant.PARKING and n > spec.capacity:
        raise DomainError(f"state {n} exceeds the capacity K={spec.capacity}")


def birth_rate(spec: ModelSpec, n: int, i: int) -> float:
    """Rate of a birth (arrival) of size ``i`` from state ``n``."""
    if not 1 <= i <= spec.k1:
        raise DomainError(f"birth size {i} outside 1..{spec.k1}")
    _check_state(spec, n)
    v = spec.variant
    if v is Variant.TABLE:
        return spec.table.get((n, i, EventKind.BIRTH), 0.0)
    lam = spec.lam[i - 1]
    if v is Variant.LINEAR:
        return n * lam
    if v is Variant.CONSTANT:
        return lam
    if v is Variant.IMMIGRATION_ZERO:
        return spec.nu if n == 0 else n * lam
    if v is Variant.IMMIGRATION_ALL:
        return spec.nu + n * lam
    # parking: no arrival may overfill the lot
    if n + i > spec.capacity:
        return 0.0
    return (spec.capacity - n) * lam


def death_rate(spec: ModelSpec, n: int, j: int) -> float:
    """Rate of a death (departure) of size ``j`` from state ``n``."""
    if not 1 <= j <= spec.k2:
        raise DomainError(f"death size {j} outside 1..{spec.k2}")
    _check_state(spec, n)
    v = spec.variant
    if v is Variant.CONSTANT and spec.lattice == INTEGERS:
        return spec.mu[j - 1]
    if j > n:
        return 0.0
    if v is Variant.TABLE:
        return spec.table.get((n, j, EventKind.DEATH), 0.0)
    if v is Variant.CONSTANT:
        return spec.mu[j - 1]
    return n * spec.mu[j - 1]


def total_exit_rate(spec: ModelSpec, n: int) -> float:
    """Parameter of the exponential sojourn in state ``n``."""
    total = 0.0
    for i in range(1, spec.k1 + 1):
        total += birth_rate(spec, n, i)
    for j in range(1, spec.k2 + 1):
        total += death_rate(spec, n, j)
    return total


def transitions(spec: ModelSpec, n: int):
    """Yield ``(increment, rate)`` for every event with positive rate from ``n``."""
    for i in range(1, spec.k1 + 1):
        r = birth_rate(spec, n, i)
        if r > 0:
            yield i, r
    for j in range(1, spec.k2 + 1):
        r = death_rate(spec, n, j)
        if r > 0:
            yield -j, r


def derived_constants(spec: ModelSpec) -> DerivedConstants:
    if spec.variant is Variant.TABLE:
        raise UnsupportedVariantError("derived constants are undefined for a rate table")
    a1 = math.fsum(i * l for i, l in enumerate(spec.lam, 1))
    a2 = math.fsum(i * i * l for i, l in enumerate(spec.lam, 1))
    b1 = math.fsum(j * m for j, m in enumerate(spec.mu, 1))
    b2 = math.fsum(j * j * m for j, m in enumerate(spec.mu, 1))
    return DerivedConstants(
        eta=a1 - b1,
        zeta=a2 + b2,
        xi=a2 * b1 + a1 * b2,
        Lambda=math.fsum(spec.lam) + math.fsum(spec.mu),
        beta=a1 + b1,
        a1=a1,
        a2=a2,
        b1=b1,
        b2=b2,
    )


def rate_arrays(spec: ModelSpec, n):
    """Vectorized rates: ``(births, deaths)`` of shapes ``(len(n), k1)``, ``(len(n), k2)``.

    Agrees entrywise with :func:`birth_rate` / :func:`death_rate` on valid states.
    """
    import numpy as np

    n = np.asarray(n, dtype=np.int64)
    nf = n.astype(np.float64)[:, None]
    v = spec.variant
    i = np.arange(1, spec.k1 + 1)[None, :]
    j = np.arange(1, spec.k2 + 1)[None, :]
    if v is Variant.TABLE:
        b = np.zeros((n.size, spec.k1))
        d = np.zeros((n.size, spec.k2))
        for (m, s, kind), r in spec.table.items():
            hit = n == m
            if kind is EventKind.BIRTH:
                b[hit, s - 1] = r
            elif s <= m:
                d[hit, s - 1] = r
        return b, d
    lam = np.asarray(spec.lam, dtype=np.float64)[None, :]
    mu = np.asarray(spec.mu, dtype=np.float64)[None, :]
    if v is Variant.LINEAR:
        b = nf * lam
    elif v is Variant.CONSTANT:
        b = np.broadcast_to(lam, (n.size, spec.k1)).copy()
    elif v is Variant.IMMIGRATION_ZERO:
        b = np.where(n[:, None] == 0, spec.nu, nf * lam)
    elif v is Variant.IMMIGRATION_ALL:
        b = spec.nu + nf * lam
    else:
        b = np.where(n[:, None] + i > spec.capacity, 0.0, (spec.capacity - nf) * lam)
    if v is Variant.CONSTANT:
        d = np.broadcast_to(mu, (n.size, spec.k2)).copy()
        if spec.lattice == NONNEGATIVE:
            d = np.where(j > n[:, None], 0.0, d)
    else:
        d = np.where(j > n[:, None], 0.0, nf * mu)
    return b, d
