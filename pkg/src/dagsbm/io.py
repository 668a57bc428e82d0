"""Configuration files and run-directory formats.

A run directory holds ``trace.csv`` (one row per recorded iteration),
``z.txt``, ``sigma.txt`` and ``xi.txt`` (one space-separated row per
recorded iteration) and ``run.json`` with the settings used.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import fields
from pathlib import Path

import numpy as np

from .likelihood import PriorConfig
from .sampler import TraceRecord, TuningConfig

TRACE_COLUMNS = ("iter", "K_n", "a", "b", "r", "alpha", "theta", "gamma", "k", "loglik")


class ConfigError(ValueError):
    pass


class RunFormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config


def _convert(raw: str, like):
    if isinstance(like, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if isinstance(like, int):
        return int(raw)
    return float(raw)


def parse_config(text: str) -> tuple[PriorConfig, TuningConfig]:
    """Read ``key = value`` lines into prior and tuning settings.

    Keys are the field names of :class:`PriorConfig` and
    :class:`TuningConfig`; ``fix_xi = true`` is shorthand for
    ``update_xi = false``. Blank lines and ``#`` comments are ignored.
    """
    pri, tun = PriorConfig(), TuningConfig()
    pk = {f.name: getattr(pri, f.name) for f in fields(PriorConfig)}
    tk = {f.name: getattr(tun, f.name) for f in fields(TuningConfig)}
    pvals, tvals = {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        try:
            if key == "fix_xi":
                tvals["update_xi"] = not _convert(raw, True)
            elif key in pk:
                pvals[key] = _convert(raw, pk[key])
            elif key in tk:
                tvals[key] = _convert(raw, tk[key])
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    try:
        return PriorConfig(**{**pk, **pvals}), TuningConfig(**{**tk, **tvals})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def read_config(path) -> tuple[PriorConfig, TuningConfig]:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def format_config(priors: PriorConfig, tuning: TuningConfig) -> str:
    lines = ["# priors"]
    lines += [f"{f.name} = {getattr(priors, f.name)}" for f in fields(PriorConfig)]
    lines.append("# tuning")
    lines += [f"{f.name} = {getattr(tuning, f.name)}" for f in fields(TuningConfig)]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# traces


def _fmt(x) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return repr(x) if isinstance(x, float) else str(x)


class RunWriter:
    """Append-only writer for one chain's output files."""

    def __init__(self, out_dir, meta: dict | None = None):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self._trace = open(self.dir / "trace.csv", "w", encoding="utf-8", newline="")
        self._csv = csv.writer(self._trace)
        self._csv.writerow(TRACE_COLUMNS)
        self._rows = {name: open(self.dir / f"{name}.txt", "w", encoding="utf-8")
                      for name in ("z", "sigma", "xi")}
        self.meta = dict(meta or {})

    def write(self, rec: TraceRecord) -> None:
        self._csv.writerow([_fmt(v) for v in (rec.iteration, rec.K, rec.a, rec.b, rec.regime,
                                               rec.alpha, rec.theta, rec.gamma, rec.k, rec.loglik)])
        self._rows["z"].write(" ".join(map(str, rec.z.tolist())) + "\n")
        self._rows["sigma"].write(" ".join(map(str, rec.sigma.tolist())) + "\n")
        self._rows["xi"].write(" ".join(repr(float(x)) for x in rec.xi) + "\n")

    def close(self, **extra) -> None:
        self._trace.close()
        for fh in self._rows.values():
            fh.close()
        self.meta.update(extra)
        with open(self.dir / "run.json", "w", encoding="utf-8") as fh:
            json.dump(self.meta, fh, indent=2)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        if not self._trace.closed:
            self.close()


def read_trace(path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRACE_COLUMNS:
        raise RunFormatError(f"{path}: expected header {','.join(TRACE_COLUMNS)}")
    body = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64).reshape(-1, len(TRACE_COLUMNS))
    return {name: body[:, j] for j, name in enumerate(TRACE_COLUMNS)}


def read_rows(path, dtype=np.int64) -> np.ndarray:
    """Space-separated rows of equal length as a 2-d array."""
    with open(path, encoding="utf-8") as fh:
        rows = [ln.split() for ln in fh if ln.strip()]
    if not rows:
        return np.zeros((0, 0), dtype=dtype)
    lengths = {len(r) for r in rows}
    if len(lengths) != 1:
        raise RunFormatError(f"{path}: rows have differing lengths {sorted(lengths)}")
    return np.array(rows, dtype=np.float64).astype(dtype)


def read_run(run_dir) -> dict:
    """Load a run directory, checking that its files agree with each other."""
    d = Path(run_dir)
    for name in ("trace.csv", "z.txt", "sigma.txt", "run.json"):
        if not (d / name).exists():
            raise RunFormatError(f"{d}: missing {name}")
    with open(d / "run.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    trace = read_trace(d / "trace.csv")
    z = read_rows(d / "z.txt")
    sigma = read_rows(d / "sigma.txt")
    xi = read_rows(d / "xi.txt", np.float64) if (d / "xi.txt").exists() else None
    S = len(trace["iter"])
    for name, arr in (("z.txt", z), ("sigma.txt", sigma)):
        if len(arr) != S:
            raise RunFormatError(f"{d}: {name} has {len(arr)} rows but trace.csv has {S}")
    if S and z.shape[1] != sigma.shape[1]:
        raise RunFormatError(f"{d}: z.txt and sigma.txt disagree on the number of nodes")
    n = meta.get("n")
    if S and n is not None and z.shape[1] != n:
        raise RunFormatError(f"{d}: rows have {z.shape[1]} entries but the run has n={n}")
    return {"meta": meta, "trace": trace, "z": z, "sigma": sigma, "xi": xi}


# ---------------------------------------------------------------------------
# matrices and point estimates


def write_matrix(path, mat: np.ndarray, header, row_labels=None, row_header: str = "node") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(([row_header] if row_labels is not None else []) + [str(h) for h in header])
        for i, row in enumerate(mat):
            lead = [str(row_labels[i])] if row_labels is not None else []
            w.writerow(lead + [repr(float(x)) for x in row])


def read_matrix(path, row_labels: bool = False) -> tuple[np.ndarray, list[str], list[str] | None]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0][1:] if row_labels else rows[0]
    labels = [r[0] for r in rows[1:]] if row_labels else None
    body = [r[1:] if row_labels else r for r in rows[1:]]
    return np.array(body, dtype=np.float64).reshape(len(body), len(header)), header, labels


def write_labels(path, z) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(" ".join(map(str, np.asarray(z).tolist())) + "\n")


def read_labels(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        return np.array(fh.read().split(), dtype=np.int64)


def write_summary(path, summary: dict[str, dict]) -> None:
    cols = sorted({c for row in summary.values() for c in row}, key=lambda c: (c != "mean", c != "sd", c))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["parameter"] + cols)
        for name, row in summary.items():
            w.writerow([name] + [repr(row.get(c, math.nan)) for c in cols])


def chain_dir(out, chain: int, n_chains: int) -> Path:
    """Output directory for one of several chains: ``<out>_chain<i>``."""
    out = Path(out)
    return out if n_chains == 1 else out.with_name(f"{out.name}_chain{chain}")


def ensure_dir(path) -> Path:
    os.makedirs(path, exist_ok=True)
    return Path(path)
