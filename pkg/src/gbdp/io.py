"""File formats: atomic writes and the CSV layouts used by the command line."""

from __future__ import annotations

import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .errors import DomainError
from .estimate import TransitionRecord


def atomic_write(path, text: str):
    """Write ``text`` to ``path`` via a temporary file and a rename; ``-`` is stdout."""
    if str(path) == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def fmt(x) -> str:
    """Shortest round-tripping text for a float; integers stay integers."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def trajectory_csv(traj) -> str:
    rows = [[fmt(0.0), fmt(traj.initial_state), "init", "0"]]
    state = traj.initial_state
    for t, inc in zip(traj.jump_times, traj.increments):
        state += int(inc)
        kind = "birth" if inc > 0 else "death"
        rows.append([fmt(float(t)), fmt(state), kind, str(abs(int(inc)))])
    return _csv(["time", "state", "event_kind", "event_size"], rows)


def functionals_csv(pf) -> str:
    rows = [
        [fmt(float(t)), fmt(int(n)), fmt(int(b)), fmt(int(d)), fmt(float(x))]
        for t, n, b, d, x in zip(
            pf.query_times, pf.population, pf.cumulative_births, pf.cumulative_deaths, pf.path_integral
        )
    ]
    return _csv(["time", "N", "B", "D", "X"], rows)


def pmf_csv(pmfs) -> str:
    rows = []
    for p in pmfs:
        for n, q in zip(p.states, p.probs):
            rows.append([fmt(p.t), fmt(int(n)), fmt(float(q))])
        rows.append([fmt(p.t), "_deficit", fmt(float(p.deficit))])
    return _csv(["t", "n", "prob"], rows)


def joint_csv(grids) -> str:
    """``t,d,b,n,prob``; axes a grid does not carry are left empty."""
    rows = []
    for g in grids:
        cols = [g.coords.get(a) for a in ("d", "b", "n")]
        if "a" in g.coords:  # parking arrivals take the births column
            cols[1] = g.coords["a"]
        keep = g.probs > 0
        idx = np.flatnonzero(keep)
        for k in idx:
            rows.append(
                [fmt(g.t)] + ["" if c is None else str(int(c[k])) for c in cols] + [fmt(float(g.probs[k]))]
            )
        rows.append([fmt(g.t), "_deficit", "", "", fmt(float(g.deficit))])
    return _csv(["t", "d", "b", "n", "prob"], rows)


def series_csv(header, rows) -> str:
    return _csv(header, [[fmt(v) if isinstance(v, (int, float, np.floating, np.integer)) else v for v in r] for r in rows])


def read_records(path) -> list[TransitionRecord]:
    """Read ``state_before,sojourn`` rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(reader.fieldnames) != {"state_before", "sojourn"}:
            raise DomainError("estimate input needs exactly the columns state_before,sojourn")
        try:
            return [TransitionRecord(int(r["state_before"]), float(r["sojourn"])) for r in reader]
        except ValueError as exc:
            raise DomainError(f"bad record: {exc}") from exc


def records_csv(records) -> str:
    return _csv(["state_before", "sojourn"], [[r.state_before, fmt(r.sojourn)] for r in records])


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"
