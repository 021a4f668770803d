"""Data model and bit-exact text persistence for matrices, networks and datasets.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 with two
dimensions; :func:`as_matrix` is the single validating constructor.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

ACTIVATIONS = ("tanh", "logsig", "identity")


class DescramblerError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(DescramblerError, ValueError):
    def __init__(self, message: str, path: str | os.PathLike | None = None, line: int | None = None):
        self.path = None if path is None else str(path)
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class StructureError(DescramblerError, ValueError):
    pass


class ShapeError(DescramblerError, ValueError):
    pass


class SizeError(DescramblerError, ValueError):
    pass


class DomainError(DescramblerError, ValueError):
    pass


class ConfigError(DescramblerError, ValueError):
    pass


class DivergenceError(DescramblerError, ArithmeticError):
    pass


def as_matrix(data: Any, name: str = "matrix") -> np.ndarray:
    """Return ``data`` as a finite, C-contiguous float64 2-D array.

    1-D input becomes a column. NaN and Inf are rejected.
    """
    m = np.array(data, dtype=np.float64, copy=True)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise ShapeError(f"{name}: expected 2 dimensions, got {m.ndim}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"{name}: empty matrix {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError(f"{name}: contains NaN or Inf")
    m.setflags(write=False)
    return m


# ---------------------------------------------------------------------------
# matrix files (.dmat)


def format_matrix(m: np.ndarray) -> str:
    m = as_matrix(m)
    lines = [f"{m.shape[0]} {m.shape[1]}"]
    # repr() of a Python float is the shortest string that round-trips
    lines.extend(" ".join(repr(float(v)) for v in row) for row in m)
    return "\n".join(lines) + "\n"


def parse_matrix(text: str, path: str | os.PathLike | None = None) -> np.ndarray:
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty file", path, 1)
    head = lines[0].split()
    if len(head) != 2:
        raise ParseError("header must be '<rows> <cols>'", path, 1)
    try:
        rows, cols = int(head[0]), int(head[1])
    except ValueError:
        raise ParseError("non-integer dimensions in header", path, 1) from None
    if rows < 1 or cols < 1:
        raise StructureError(f"{path}: non-positive dimensions {rows}x{cols}")
    body = [ln for ln in lines[1:]]
    while body and not body[-1].strip():
        body.pop()
    values: list[list[float]] = []
    for i, ln in enumerate(body, start=2):
        tokens = ln.split()
        try:
            values.append([float(t) for t in tokens])
        except ValueError:
            raise ParseError("malformed number", path, i) from None
    if len(values) != rows:
        raise StructureError(f"{path}: header says {rows} rows, found {len(values)}")
    for i, row in enumerate(values, start=2):
        if len(row) != cols:
            raise StructureError(f"{path}:{i}: header says {cols} columns, found {len(row)}")
    arr = np.array(values, dtype=np.float64).reshape(rows, cols)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{path}: contains NaN or Inf")
    return as_matrix(arr)


def save_matrix(m: np.ndarray, path: str | os.PathLike) -> None:
    Path(path).write_text(format_matrix(m))


def load_matrix(path: str | os.PathLike) -> np.ndarray:
    return parse_matrix(Path(path).read_text(), path)


# ---------------------------------------------------------------------------
# networks


@dataclass(frozen=True)
class Layer:
    weights: np.ndarray
    activation: str

    def __post_init__(self):
        object.__setattr__(self, "weights", as_matrix(self.weights, "weights"))
        if self.activation not in ACTIVATIONS:
            raise ParseError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape


@dataclass(frozen=True)
class FeedForwardNet:
    """Bias-free fully connected network, layers applied first to last."""

    layers: tuple[Layer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise StructureError("network has no layers")
        for i in range(len(layers) - 1):
            out_dim = layers[i].weights.shape[0]
            in_dim = layers[i + 1].weights.shape[1]
            if out_dim != in_dim:
                raise StructureError(
                    f"layer {i + 1} outputs {out_dim} values but layer {i + 2} expects {in_dim}"
                )
        object.__setattr__(self, "layers", layers)

    @classmethod
    def from_weights(cls, weights: Sequence[np.ndarray], activations: Sequence[str]) -> "FeedForwardNet":
        if len(weights) != len(activations):
            raise StructureError("weights and activations differ in length")
        return cls(tuple(Layer(w, a) for w, a in zip(weights, activations)))

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[0]

    @property
    def weights(self) -> list[np.ndarray]:
        return [layer.weights for layer in self.layers]

    @property
    def activations(self) -> list[str]:
        return [layer.activation for layer in self.layers]

    def __eq__(self, other):
        if not isinstance(other, FeedForwardNet):
            return NotImplemented
        return self.depth == other.depth and all(
            a.activation == b.activation
            and a.weights.shape == b.weights.shape
            and np.array_equal(a.weights, b.weights)
            for a, b in zip(self.layers, other.layers)
        )

    __hash__ = None


def save_network(net: FeedForwardNet, path: str | os.PathLike) -> None:
    """Write a ``.net`` manifest plus one ``.dmat`` per layer next to it."""
    path = Path(path)
    stem = path.stem
    lines = []
    for i, layer in enumerate(net.layers, start=1):
        wname = f"{stem}.layer{i}.dmat"
        save_matrix(layer.weights, path.parent / wname)
        lines.append(f"layer {i} weights={wname} activation={layer.activation}")
    path.write_text("\n".join(lines) + "\n")


def load_network(path: str | os.PathLike) -> FeedForwardNet:
    path = Path(path)
    layers = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) != 4 or tokens[0] != "layer":
            raise ParseError("expected 'layer <index> weights=<path> activation=<tag>'", path, lineno)
        try:
            index = int(tokens[1])
        except ValueError:
            raise ParseError("non-integer layer index", path, lineno) from None
        if index != len(layers) + 1:
            raise ParseError(f"layer index {index} out of order", path, lineno)
        kv = dict(tok.split("=", 1) for tok in tokens[2:] if "=" in tok)
        if set(kv) != {"weights", "activation"}:
            raise ParseError("missing weights= or activation=", path, lineno)
        if kv["activation"] not in ACTIVATIONS:
            raise ParseError(f"unknown activation {kv['activation']!r}", path, lineno)
        wpath = Path(kv["weights"])
        if not wpath.is_absolute():
            wpath = path.parent / wpath
        layers.append(Layer(load_matrix(wpath), kv["activation"]))
    return FeedForwardNet(tuple(layers))


# ---------------------------------------------------------------------------
# datasets


def _check_uniform_grid(grid: np.ndarray, name: str) -> None:
    if grid.size < 2:
        raise StructureError(f"{name}: needs at least 2 points")
    steps = np.diff(grid)
    if np.any(steps <= 0):
        raise StructureError(f"{name}: not strictly increasing")
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise StructureError(f"{name}: not uniformly spaced")


@dataclass(frozen=True)
class DeerDataset:
    """Noisy DEER traces (one per column) paired with distance distributions."""

    time_grid: np.ndarray
    dist_grid: np.ndarray
    inputs: np.ndarray
    targets: np.ndarray
    seed: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.asarray(self.time_grid, dtype=np.float64).ravel()
        r = np.asarray(self.dist_grid, dtype=np.float64).ravel()
        _check_uniform_grid(t, "time_grid")
        _check_uniform_grid(r, "dist_grid")
        x = as_matrix(self.inputs, "inputs")
        y = as_matrix(self.targets, "targets")
        if x.shape[0] != t.size:
            raise StructureError(f"inputs have {x.shape[0]} rows, time grid has {t.size} points")
        if y.shape[0] != r.size:
            raise StructureError(f"targets have {y.shape[0]} rows, distance grid has {r.size} points")
        if x.shape[1] != y.shape[1]:
            raise StructureError("inputs and targets differ in trace count")
        if np.any(y < 0):
            raise DomainError("targets must be non-negative")
        if not np.allclose(y.sum(axis=0), 1.0, rtol=0, atol=1e-9):
            raise DomainError("each target column must sum to 1")
        t.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "time_grid", t)
        object.__setattr__(self, "dist_grid", r)
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)

    @property
    def n_traces(self) -> int:
        return self.inputs.shape[1]

    def __eq__(self, other):
        if not isinstance(other, DeerDataset):
            return NotImplemented
        return (
            self.seed == other.seed
            and all(
                a.shape == b.shape and np.array_equal(a, b)
                for a, b in [
                    (self.time_grid, other.time_grid),
                    (self.dist_grid, other.dist_grid),
                    (self.inputs, other.inputs),
                    (self.targets, other.targets),
                ]
            )
        )

    __hash__ = None


def save_dataset(ds: DeerDataset, directory: str | os.PathLike) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_matrix(ds.time_grid[:, None], d / "time.dmat")
    save_matrix(ds.dist_grid[:, None], d / "dist.dmat")
    save_matrix(ds.inputs, d / "inputs.dmat")
    save_matrix(ds.targets, d / "targets.dmat")
    meta = {"seed": int(ds.seed), **ds.meta}
    (d / "meta").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_dataset(directory: str | os.PathLike) -> DeerDataset:
    d = Path(directory)
    meta_path = d / "meta"
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, meta_path, exc.lineno) from None
    seed = int(meta.pop("seed", 0))
    return DeerDataset(
        time_grid=load_matrix(d / "time.dmat").ravel(),
        dist_grid=load_matrix(d / "dist.dmat").ravel(),
        inputs=load_matrix(d / "inputs.dmat"),
        targets=load_matrix(d / "targets.dmat"),
        seed=seed,
        meta=meta,
    )
