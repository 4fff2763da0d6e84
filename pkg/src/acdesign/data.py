"""Dataset container, reproducible random streams, and CSV ingestion.

Header cells may carry a role suffix (``t:assign``, ``y:outcome``, ``z:iv``,
``u:latent``); bare names are covariates. The latent column only exists in
simulated data and is guarded: reading ``Dataset.U`` raises
:class:`LatentAccessError` unless the caller is inside :func:`latent_access`.
"""

from __future__ import annotations

import contextvars
import csv
import hashlib
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import BadAssignment, DataError, IoError, LatentAccessError, MissingColumn, ParseError

_UINT64_MAX = 2**64 - 1

ROLES = ("covariate", "assign", "outcome", "iv", "latent")
_ROLE_ALIASES = {
    "covariate": "covariate",
    "x": "covariate",
    "assign": "assign",
    "t": "assign",
    "treatment": "assign",
    "outcome": "outcome",
    "y": "outcome",
    "iv": "iv",
    "z": "iv",
    "instrument": "iv",
    "latent": "latent",
    "u": "latent",
    "ignore": "ignore",
}
_DEFAULT_NAMES = {"assign": "t", "outcome": "y", "iv": "z", "latent": "u"}

_latent_ok = contextvars.ContextVar("acdesign_latent_ok", default=False)


@contextmanager
def latent_access():
    """Allow reads of latent columns inside the block.

    Only the simulator and oracle diagnostics are meant to open this.
    """
    token = _latent_ok.set(True)
    try:
        yield
    finally:
        _latent_ok.reset(token)


@dataclass(frozen=True)
class RngSpec:
    """Seed plus stream id for a counter-based (Philox) generator."""

    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= int(v) <= _UINT64_MAX:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v!r}")

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def derive(self, label: str) -> "RngSpec":
        """Independent child stream named by ``label``; same seed."""
        h = hashlib.blake2b(digest_size=8)
        h.update(int(self.stream_id).to_bytes(8, "little"))
        h.update(label.encode("utf-8"))
        return RngSpec(self.seed, int.from_bytes(h.digest(), "little"))


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


class Dataset:
    """Immutable table of units.

    ``X`` is stored column-major (n x p). ``T`` holds 0/1 as int8. ``Y`` and
    ``Z`` are optional; ``U`` is the latent confounder, simulation only.
    """

    __slots__ = ("_X", "_T", "_Y", "_Z", "_U", "covariate_names", "names")

    def __init__(
        self,
        X,
        T,
        Y=None,
        Z=None,
        U=None,
        covariate_names: Sequence[str] | None = None,
        names: Mapping[str, str] | None = None,
    ):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise DataError(f"X must be 2-dimensional, got shape {X.shape}")
        n, p = X.shape
        T = np.asarray(T)
        if T.shape != (n,):
            raise DataError(f"T has shape {T.shape}, expected ({n},)")
        if T.size and not np.all((T == 0) | (T == 1)):
            raise BadAssignment("assignment values must be 0 or 1")
        if covariate_names is None:
            covariate_names = [f"x{k + 1}" for k in range(p)]
        covariate_names = tuple(str(c) for c in covariate_names)
        if len(covariate_names) != p:
            raise DataError(f"{len(covariate_names)} covariate names for {p} columns")
        if len(set(covariate_names)) != p or any(not c for c in covariate_names):
            raise DataError("covariate names must be unique and nonempty")

        Xf = np.asfortranarray(X.copy())
        Xf.flags.writeable = False
        self._X = Xf
        self._T = _frozen(T, np.int8)
        self._Y = self._Z = self._U = None
        for attr, v, label in (("_Y", Y, "Y"), ("_Z", Z, "Z"), ("_U", U, "U")):
            if v is not None:
                v = _frozen(v)
                if v.shape != (n,):
                    raise DataError(f"{label} has shape {v.shape}, expected ({n},)")
                setattr(self, attr, v)
        self.covariate_names = covariate_names
        merged = dict(_DEFAULT_NAMES)
        merged.update(names or {})
        self.names = merged

    @property
    def n(self) -> int:
        return self._X.shape[0]

    @property
    def p(self) -> int:
        return self._X.shape[1]

    @property
    def X(self) -> np.ndarray:
        return self._X

    @property
    def T(self) -> np.ndarray:
        return self._T

    @property
    def Y(self):
        return self._Y

    @property
    def Z(self):
        return self._Z

    @property
    def has_latent(self) -> bool:
        return self._U is not None

    @property
    def U(self):
        if not _latent_ok.get():
            raise LatentAccessError("latent column U read outside latent_access()")
        return self._U

    def covariate(self, name: str) -> np.ndarray:
        try:
            k = self.covariate_names.index(name)
        except ValueError:
            raise MissingColumn(f"no covariate named {name!r}") from None
        return self._X[:, k]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        pick = lambda a: None if a is None else a[idx]  # noqa: E731
        return Dataset(
            self._X[idx],
            self._T[idx],
            pick(self._Y),
            pick(self._Z),
            pick(self._U),
            self.covariate_names,
            self.names,
        )

    def without_latent(self) -> "Dataset":
        return Dataset(self._X, self._T, self._Y, self._Z, None, self.covariate_names, self.names)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.covariate_names != other.covariate_names or self.names != other.names:
            return False
        if not (np.array_equal(self._X, other._X) and np.array_equal(self._T, other._T)):
            return False
        for a, b in ((self._Y, other._Y), (self._Z, other._Z), (self._U, other._U)):
            if (a is None) != (b is None):
                return False
            if a is not None and not np.array_equal(a, b):
                return False
        return True

    __hash__ = None

    def __repr__(self):
        extras = [k for k, v in (("Y", self._Y), ("Z", self._Z), ("U", self._U)) if v is not None]
        return f"Dataset(n={self.n}, p={self.p}, extras={extras})"


# ---------------------------------------------------------------------------
# CSV


def _split_header(cell: str):
    base, sep, role = cell.partition(":")
    if not sep:
        return cell, None
    key = role.strip().lower()
    if key not in _ROLE_ALIASES:
        return cell, None
    return base, _ROLE_ALIASES[key]


def _parse_column(values: list[str], header: str, first_row: int = 1) -> np.ndarray:
    try:
        arr = np.array(values, dtype=float)
    except ValueError:
        for k, s in enumerate(values):
            try:
                float(s)
            except ValueError:
                raise ParseError(first_row + k, header, s) from None
        raise  # pragma: no cover
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        k = int(bad[0])
        raise ParseError(first_row + k, header, values[k])
    return arr


def read_table(path) -> tuple[list[str], list[list[str]]]:
    """Header and column-wise string cells of a CSV file."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header required") from None
        cols: list[list[str]] = [[] for _ in header]
        for r, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(r, header[min(len(row), len(header) - 1)], ",".join(row))
            for c, cell in enumerate(row):
                cols[c].append(cell.strip())
    return [h.strip() for h in header], cols


def read_csv(path, schema: Mapping[str, str] | None = None) -> Dataset:
    """Load a dataset, assigning column roles from ``schema`` and header suffixes.

    ``schema`` maps a header cell (with or without its suffix) to one of
    ``covariate``, ``assign``/``T``, ``outcome``/``Y``, ``iv``/``Z``,
    ``latent``/``U`` or ``ignore``. Schema entries win over suffixes.
    """
    header, cols = read_table(path)
    schema = dict(schema or {})
    bases = [_split_header(h)[0] for h in header]
    for key in schema:
        if key not in header and key not in bases:
            raise MissingColumn(f"schema names absent column {key!r}")

    roles: list[tuple[str, str]] = []
    for cell, base in zip(header, bases):
        role = _split_header(cell)[1] or "covariate"
        given = schema.get(cell, schema.get(base))
        if given is not None:
            key = str(given).strip().lower()
            if key not in _ROLE_ALIASES:
                raise DataError(f"unknown role {given!r} for column {cell!r}")
            role = _ROLE_ALIASES[key]
        roles.append((base, role))

    assign = [k for k, (_, r) in enumerate(roles) if r == "assign"]
    if len(assign) != 1:
        raise MissingColumn(f"expected exactly one assignment column, found {len(assign)}")
    for role in ("outcome", "iv", "latent"):
        if sum(r == role for _, r in roles) > 1:
            raise DataError(f"more than one {role} column")

    covs, cov_names, extras, names = [], [], {}, {}
    for k, (base, role) in enumerate(roles):
        if role == "ignore":
            continue
        arr = _parse_column(cols[k], header[k])
        if role == "covariate":
            covs.append(arr)
            cov_names.append(base)
        else:
            extras[role] = arr
            names[role] = base

    t = extras["assign"]
    if t.size and not np.all((t == 0) | (t == 1)):
        r = int(np.flatnonzero((t != 0) & (t != 1))[0])
        raise BadAssignment(f"row {r + 1}: assignment value {cols[assign[0]][r]!r} not in {{0, 1}}")
    n = t.size
    X = np.column_stack(covs) if covs else np.empty((n, 0))
    return Dataset(
        X,
        t.astype(np.int8),
        extras.get("outcome"),
        extras.get("iv"),
        extras.get("latent"),
        cov_names,
        names,
    )


def format_float(v: float) -> str:
    # repr is the shortest string that round-trips to the same double
    return repr(float(v))


def write_table(path, header: Sequence[str], columns: Sequence[Sequence[str]]) -> None:
    """Write pre-formatted string columns with LF line endings."""
    path = Path(path)
    n = len(columns[0]) if columns else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(zip(*columns) if n else [])


def dataset_columns(dataset: Dataset, include_latent: bool = False):
    """Header cells and formatted string columns for ``dataset``."""
    header, columns = [], []
    for k, name in enumerate(dataset.covariate_names):
        header.append(name)
        columns.append([format_float(v) for v in dataset.X[:, k].tolist()])
    header.append(f"{dataset.names['assign']}:assign")
    columns.append([str(int(v)) for v in dataset.T.tolist()])
    optional = [("outcome", dataset.Y), ("iv", dataset.Z)]
    if include_latent and dataset.has_latent:
        with latent_access():
            optional.append(("latent", dataset.U))
    for role, arr in optional:
        if arr is not None:
            header.append(f"{dataset.names[role]}:{role}")
            columns.append([format_float(v) for v in arr.tolist()])
    return header, columns


def write_csv(dataset: Dataset, path, include_latent: bool = False) -> None:
    """Serialize ``dataset``; the latent column is written only on request."""
    header, columns = dataset_columns(dataset, include_latent)
    try:
        write_table(path, header, columns)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
