"""Sweep plans, dataset generation, CSV persistence and train/test splits."""

from __future__ import annotations

import itertools
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from mmsizing import rfmodel
from mmsizing.errors import DomainError, SchemaError, SizingError

ENDPOINT_RTOL = 1e-9

# Sweep ranges as printed, [begin, increment, end], in the table units.
BUILTIN_RANGES = {
    "vco": (
        ("C", 50, 50, 150),
        ("L", 60, 60, 180),
        ("R_p", 300, 100, 500),
        ("W_N1", 7.5, 2.5, 12.5),
        ("W_N2", 187.5, 12.5, 212.5),
        ("W_var", 70, 10, 90),
    ),
    "pa": (
        ("L_ip", 175, 175, 350),
        ("L_is", 60, 60, 120),
        ("L_op", 360, 353, 713),
        ("L_os", 45, 45, 90),
        ("W_N1", 22, 5, 32),
        ("W_N2", 16, 5, 26),
    ),
    "lna": (
        ("C_1", 130, 50, 180),
        ("C_2", 170, 50, 220),
        ("L_d", 180, 50, 230),
        ("L_g", 850, 100, 950),
        ("L_s", 80, 10, 90),
        ("W_N1", 20, 3, 26),
        ("W_N2", 37.5, 2.5, 42.5),
    ),
    "mixer": (
        ("C", 1, 0.1, 1.1),
        ("R", 400, 100, 500),
        ("W_N1", 14, 2, 18),
        ("W_N2", 6, 2, 10),
    ),
    "cascode": (
        ("R_D", 300, 100, 400),
        ("W_N1", 26, 2, 30),
        ("W_N2", 14, 2, 18),
    ),
}


@dataclass(frozen=True)
class SweepRange:
    name: str
    begin: float
    increment: float
    end: float

    def __post_init__(self):
        if not self.increment > 0:
            raise DomainError(f"{self.name}: increment must be > 0")
        if self.begin > self.end:
            raise DomainError(f"{self.name}: empty range {self.begin}:{self.increment}:{self.end}")

    def count(self):
        span = (self.end - self.begin) / self.increment
        return int(math.floor(span * (1 + ENDPOINT_RTOL) + ENDPOINT_RTOL)) + 1

    def values(self):
        return [self.begin + i * self.increment for i in range(self.count())]


@dataclass(frozen=True)
class SweepPlan:
    block: str
    ranges: tuple

    def __post_init__(self):
        names = tuple(r.name for r in self.ranges)
        expected = tuple(n for n, _ in rfmodel.param_schema(self.block))
        if names != expected:
            raise SchemaError(f"{self.block} plan must sweep {expected}, got {names}")

    def size(self):
        return math.prod(r.count() for r in self.ranges)

    def bounds(self):
        """Per-parameter ``(low, high)`` of the grid, in schema order."""
        return [(min(v), max(v)) for v in (r.values() for r in self.ranges)]


def builtin_plan(block):
    """The sweep plan of a block, or the concatenated plans of a system."""
    if block in rfmodel.SYSTEM_BLOCKS:
        ranges = [
            SweepRange(f"{part}.{name}", b, s, e)
            for part in rfmodel.SYSTEM_BLOCKS[block]
            for name, b, s, e in BUILTIN_RANGES[part]
        ]
    elif block in BUILTIN_RANGES:
        ranges = [SweepRange(*r) for r in BUILTIN_RANGES[block]]
    else:
        raise SchemaError(f"unknown block {block!r}; expected one of {', '.join(rfmodel.BLOCKS)}")
    return SweepPlan(block, tuple(ranges))


def enumerate_grid(plan):
    """All parameter vectors of the plan; the last range varies fastest."""
    for r in plan.ranges:
        if r.count() < 1:
            raise DomainError(f"{r.name}: empty range")
    for combo in itertools.product(*(r.values() for r in plan.ranges)):
        yield rfmodel.ParamVector.from_values(plan.block, combo)


@dataclass
class Dataset:
    block: str
    param_names: tuple
    spec_names: tuple
    params: np.ndarray   # (n_rows, n_params), table units
    specs: np.ndarray    # (n_rows, n_specs)
    sim_hash: str | None = field(default=None, compare=False)

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=float).reshape(-1, len(self.param_names))
        self.specs = np.asarray(self.specs, dtype=float).reshape(-1, len(self.spec_names))
        if len(self.params) != len(self.specs):
            raise SchemaError("params and specs must have the same number of rows")
        if tuple(self.param_names) != tuple(n for n, _ in rfmodel.param_schema(self.block)):
            raise SchemaError(f"parameter columns do not match the {self.block} schema")
        if tuple(self.spec_names) != tuple(n for n, _ in rfmodel.spec_schema(self.block)):
            raise SchemaError(f"spec columns do not match the {self.block} schema")

    def __len__(self):
        return len(self.params)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.block == other.block
            and tuple(self.param_names) == tuple(other.param_names)
            and tuple(self.spec_names) == tuple(other.spec_names)
            and np.array_equal(self.params, other.params)
            and np.array_equal(self.specs, other.specs)
        )

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.block, self.param_names, self.spec_names,
                       self.params[idx], self.specs[idx], self.sim_hash)

    def param_vector(self, i):
        return rfmodel.ParamVector.from_values(self.block, self.params[i].tolist())

    def spec_vector(self, i):
        return rfmodel.SpecVector.from_values(self.block, self.specs[i].tolist())


class GenerationError(SizingError):
    """The forward model failed on a grid point."""

    def __init__(self, message, params=None):
        super().__init__(message)
        self.params = params


def _eval_chunk(args):
    block, rows, dc, op = args
    out = []
    for row in rows:
        p = rfmodel.ParamVector.from_values(block, row)
        try:
            out.append(rfmodel.evaluate(p, dc, op).as_tuple())
        except SizingError as exc:
            raise GenerationError(f"{block} evaluation failed at {dict(p.as_dict())}: {exc}", p) from exc
    return out


def generate_dataset(plan, dc=None, op=None, workers=1):
    """Evaluate the forward model at every grid point of ``plan``.

    With ``workers > 1`` rows are evaluated in chunks across processes; the
    result is assembled by index so the output does not depend on scheduling.
    """
    dc = dc or rfmodel.DeviceConstants()
    op = op or rfmodel.OperatingPoint()
    rows = [p.as_tuple() for p in enumerate_grid(plan)]
    if workers > 1 and len(rows) > 1000:
        n_chunks = workers * 4
        size = -(-len(rows) // n_chunks)
        chunks = [rows[i:i + size] for i in range(0, len(rows), size)]
        with ProcessPoolExecutor(workers) as ex:
            specs = [s for part in ex.map(_eval_chunk, [(plan.block, c, dc, op) for c in chunks]) for s in part]
    else:
        specs = _eval_chunk((plan.block, rows, dc, op))
    return Dataset(
        plan.block,
        tuple(n for n, _ in rfmodel.param_schema(plan.block)),
        tuple(n for n, _ in rfmodel.spec_schema(plan.block)),
        np.array(rows, dtype=float),
        np.array(specs, dtype=float),
        sim_hash=rfmodel.config_hash(dc, op),
    )


# --------------------------------------------------------------------------
# CSV

_HEADER_CELL = re.compile(r"^(param|spec):([^\[\]]+)\[([^\[\]]*)\]$")


def _header(block):
    cells = [f"param:{n}[{u}]" for n, u in rfmodel.param_schema(block)]
    cells += [f"spec:{n}[{u}]" for n, u in rfmodel.spec_schema(block)]
    return ",".join(cells)


def _detect_block(cells, path):
    parsed = []
    for cell in cells:
        m = _HEADER_CELL.match(cell)
        if not m:
            raise SchemaError(f"{path}:1: malformed header cell {cell!r}")
        parsed.append(m.groups())
    params = tuple((n, u) for kind, n, u in parsed if kind == "param")
    specs = tuple((n, u) for kind, n, u in parsed if kind == "spec")
    if [k for k, _, _ in parsed] != ["param"] * len(params) + ["spec"] * len(specs):
        raise SchemaError(f"{path}:1: param columns must precede spec columns")
    for block in rfmodel.BLOCKS:
        if rfmodel.param_schema(block) == params and rfmodel.spec_schema(block) == specs:
            return block
    raise SchemaError(f"{path}:1: header matches no block schema")


def save_csv(ds, path):
    """Write ``ds`` with a typed header; floats use shortest round-trip repr.

    The simulator fingerprint, when known, goes to a ``<path>.meta`` sidecar.
    """
    lines = [_header(ds.block)]
    for prow, srow in zip(ds.params.tolist(), ds.specs.tolist()):
        lines.append(",".join(repr(float(v)) for v in prow + srow))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    meta = str(path) + ".meta"
    if ds.sim_hash:
        with open(meta, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"block={ds.block}\nsim_hash={ds.sim_hash}\nrows={len(ds)}\n")
    elif os.path.exists(meta):
        os.remove(meta)


def load_csv(path, block=None):
    """Read a dataset written by :func:`save_csv`.

    If ``block`` is given the header must match that block's schema.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise SchemaError(f"{path}: empty file")
    cells = lines[0].split(",")
    detected = _detect_block(cells, path)
    if block is not None and detected != block:
        raise SchemaError(f"{path}:1: header is for block {detected!r}, expected {block!r}")
    width = len(cells)
    data = []
    for lineno, line in enumerate(lines[1:], 2):
        row = line.split(",")
        if len(row) != width:
            raise SchemaError(f"{path}:{lineno}: expected {width} cells, got {len(row)}")
        try:
            data.append([float(c) for c in row])
        except ValueError:
            bad = next(c for c in row if not _is_float(c))
            raise SchemaError(f"{path}:{lineno}: non-numeric cell {bad!r}") from None
    n_params = len(rfmodel.param_schema(detected))
    arr = np.array(data, dtype=float).reshape(-1, width)
    sim_hash = None
    meta = str(path) + ".meta"
    if os.path.exists(meta):
        with open(meta, encoding="utf-8") as fh:
            sim_hash = rfmodel.parse_kv(fh.read(), meta).get("sim_hash")
    return Dataset(
        detected,
        tuple(n for n, _ in rfmodel.param_schema(detected)),
        tuple(n for n, _ in rfmodel.spec_schema(detected)),
        arr[:, :n_params],
        arr[:, n_params:],
        sim_hash=sim_hash,
    )


def _is_float(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


# --------------------------------------------------------------------------
# splits

@dataclass(frozen=True)
class Split:
    train: tuple
    test: tuple
    seed: int
    test_fraction: float

    def validate(self, n_rows):
        tr, te = set(self.train), set(self.test)
        if tr & te:
            raise DomainError("train and test indices overlap")
        if tr | te != set(range(n_rows)) or len(tr) + len(te) != n_rows:
            raise DomainError(f"split does not partition 0..{n_rows - 1}")

    def to_dict(self):
        return {"train": list(self.train), "test": list(self.test),
                "seed": self.seed, "test_fraction": self.test_fraction}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(int(i) for i in d["train"]), tuple(int(i) for i in d["test"]),
                   int(d["seed"]), float(d["test_fraction"]))


def split(ds, seed, test_fraction=0.2):
    """Seeded shuffle, then the first ``round(f*N)`` (at least one) rows go to test."""
    n = len(ds) if not isinstance(ds, int) else ds
    if not 0 < test_fraction < 1:
        raise DomainError(f"test_fraction must lie in (0, 1), got {test_fraction!r}")
    if n < 2:
        raise DomainError("need at least 2 rows to split")
    n_test = min(max(1, round(test_fraction * n)), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    test = tuple(sorted(int(i) for i in perm[:n_test]))
    train = tuple(sorted(int(i) for i in perm[n_test:]))
    return Split(train, test, int(seed), float(test_fraction))
