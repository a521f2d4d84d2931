"""Parameter sampling, feasible decision sampling and best-response datasets."""

from __future__ import annotations

import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bestresponse import best_response
from .games import SwitchingGame
from .projection import is_feasible, project_onto_feasible

SPLIT_OFFSETS = {"train": 0, "val": 1, "test": 2}
DATA_FEAS_TOL = 1e-8


class SampleExcluded(Exception):
    """The parameter admits no usable record (empty feasible set or unbounded agent)."""


class EmptyDatasetError(ValueError):
    pass


def latin_hypercube(M, lb, ub, seed):
    """M points in the box [lb, ub], exactly one per stratum in every dimension."""
    if M < 1:
        raise ValueError("M must be >= 1")
    lb = np.atleast_1d(np.asarray(lb, dtype=float))
    ub = np.atleast_1d(np.asarray(ub, dtype=float))
    if lb.shape != ub.shape or np.any(lb > ub):
        raise ValueError("empty or malformed box")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    d = lb.size
    u = np.empty((M, d))
    for j in range(d):
        u[:, j] = (rng.permutation(M) + rng.uniform(size=M)) / M
    return lb + u * (ub - lb)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _draw_reference(game, p, rng):
    if isinstance(game, SwitchingGame):
        w = rng.dirichlet(np.ones(game.N + 1))
        return game.ell + (float(p[0]) - game.N * game.ell) * w[:game.N]
    if not (np.all(np.isfinite(game.x_lb)) and np.all(np.isfinite(game.x_ub))):
        raise ValueError("uniform decision sampling needs a finite decision box")
    return rng.uniform(game.x_lb, game.x_ub)


def _feasible_from_reference(game, p, x_ref):
    if isinstance(game, SwitchingGame):
        x = x_ref
    else:
        res = project_onto_feasible(game, p, x_ref)
        if res.status in ("infeasible", "relaxed", "unbounded"):
            raise SampleExcluded(f"no feasible decision at p={p} ({res.status})")
        x = res.x
    if not is_feasible(game, x, p, DATA_FEAS_TOL):
        raise SampleExcluded(f"projection missed the feasible set at p={p}")
    return x


def sample_feasible_point(game, p, seed):
    """Feasible decision at p: a projected uniform draw (Dirichlet for the switching game)."""
    p = np.asarray(p, dtype=float)
    return _feasible_from_reference(game, p, _draw_reference(game, p, _rng(seed)))


@dataclass
class Dataset:
    P: np.ndarray
    X: np.ndarray | None = None
    Jbar: np.ndarray | None = None
    split: str = "train"
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return self.P.shape[0]

    @property
    def has_values(self):
        return self.Jbar is not None

    def header(self):
        cols = [f"p_{j}" for j in range(self.P.shape[1])]
        if self.X is not None:
            cols += [f"x_{j}" for j in range(self.X.shape[1])]
        if self.Jbar is not None:
            cols += [f"Jbar_{j}" for j in range(self.Jbar.shape[1])]
        return cols

    def to_csv(self):
        blocks = [b for b in (self.P, self.X, self.Jbar) if b is not None]
        table = np.hstack(blocks)
        buf = io.StringIO(newline="")
        buf.write(",".join(self.header()) + "\n")
        for row in table:
            buf.write(",".join(format(float(v), ".17g") for v in row) + "\n")
        return buf.getvalue()

    def provenance_text(self):
        items = dict(self.provenance, split=self.split)
        return "".join(f"{k}={items[k]}\n" for k in sorted(items))

    @classmethod
    def from_csv(cls, text, split="train", provenance=None):
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty dataset file")
        header = [h.strip() for h in lines[0].split(",")]
        groups = {"p": [], "x": [], "Jbar": []}
        for col, name in enumerate(header):
            prefix, _, idx = name.rpartition("_")
            if prefix not in groups or not idx.isdigit():
                raise ValueError(f"unexpected dataset column {name!r}")
            groups[prefix].append(col)
        if not groups["p"]:
            raise ValueError("dataset has no parameter columns")
        rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]], dtype=float)
        rows = rows.reshape(-1, len(header))
        pick = lambda key: rows[:, groups[key]] if groups[key] else None  # noqa: E731
        return cls(pick("p"), pick("x"), pick("Jbar"), split, dict(provenance or {}))


def save_dataset(ds, path):
    from .fileio import atomic_write
    atomic_write(path, ds.to_csv())
    atomic_write(path + ".meta", ds.provenance_text())


def load_dataset(path, split=None):
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    prov = {}
    meta = path + ".meta"
    if os.path.exists(meta):
        with open(meta, encoding="utf-8") as fh:
            for ln in fh:
                k, sep, v = ln.rstrip("\n").partition("=")
                if sep:
                    prov[k] = v
    split = split or prov.pop("split", "train")
    prov.pop("split", None)
    return Dataset.from_csv(text, split, prov)


def _record(args):
    """One dataset record; returns (x, values) or None when excluded."""
    game, kind, p, x_ref = args
    try:
        if kind == "optimal":
            r = best_response(game, 0, np.zeros(0), p)
            if r.status in ("unbounded", "infeasible", "relaxed") or not np.isfinite(r.value):
                return None
            return r.x_i_star, np.array([r.value])
        x = _feasible_from_reference(game, p, x_ref)
    except SampleExcluded:
        return None
    if kind == "params":
        return x, None
    vals = np.empty(game.N)
    for i in range(game.N):
        r = best_response(game, i, x[game.others_index(i)], p)
        if r.status in ("unbounded", "infeasible") or not np.isfinite(r.value):
            return None
        vals[i] = r.value
    return x, vals


def build_dataset(game, M, split="train", seed=0, kind="game", workers=1):
    """Sample M parameters and build the records of one split.

    kind: "game" stores (p, x, Jbar); "params" stores p only; "optimal" stores
    (p, x*, J*) for single-agent problems.  Excluded parameters are dropped
    and counted in the provenance.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    if split not in SPLIT_OFFSETS:
        raise ValueError(f"unknown split {split!r}")
    if kind not in ("game", "params", "optimal"):
        raise ValueError(f"unknown dataset kind {kind!r}")
    if kind == "optimal" and game.N != 1:
        raise ValueError("optimal-solution datasets need a single-agent problem")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), SPLIT_OFFSETS[split])))
    P = latin_hypercube(M, game.p_lb, game.p_ub, rng)
    if kind == "params":
        results = [(None, None)] * M
    else:
        refs = [_draw_reference(game, P[k], rng) if kind == "game" else None for k in range(M)]
        jobs = [(game, kind, P[k], refs[k]) for k in range(M)]
        if workers and workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_record, jobs, chunksize=max(1, M // (4 * workers))))
        else:
            results = [_record(j) for j in jobs]
    keep = [k for k, r in enumerate(results) if r is not None]
    if not keep:
        raise EmptyDatasetError(f"all {M} samples were excluded")
    prov = {"game": game.name, "seed": int(seed), "M_requested": int(M),
            "M_kept": len(keep), "excluded": M - len(keep), "kind": kind}
    Pk = P[keep]
    if kind == "params":
        return Dataset(Pk, None, None, split, prov)
    X = np.array([results[k][0] for k in keep], dtype=float)
    J = np.array([results[k][1] for k in keep], dtype=float)
    return Dataset(Pk, X, J, split, prov)
