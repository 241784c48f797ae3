"""CSV input, marker transforms and persistence of run results.

A results directory contains:

``partition.csv``
    ``index,label`` rows (1-based index).
``traces.csv``
    One row per sweep: iteration, number of clusters, alpha, log density
    and whether the sweep was stored.
``similarity.bin`` (optional)
    Magic ``ZETA``, little-endian uint64 ``C``, ``C*C`` little-endian
    float64 entries (row-major) and a little-endian uint64 checksum
    (8-byte BLAKE2b of everything before it).
``metadata.json``
    Provenance and summary values.
``draws.npz`` (optional)
    Stored posterior draws, needed to prime a sequential fit or to
    recompute point estimates.
"""

import csv
from dataclasses import dataclass, field
import hashlib
import json
import os
import re
import struct

import numpy as np

from .exceptions import (ConfigError, CorruptResultsError,
                         NumericalDomainError, ParseError)
from .fcs import read_fcs
from .linalg import SpdMatrix
from .model import ClusterParams, DataMatrix
from .sampler import PosteriorDraws

_MAGIC = b"ZETA"


# --- CSV ---------------------------------------------------------------------------

def read_csv(path):
    """Read a numeric CSV with a header row into a :class:`DataMatrix`.

    Raises
    ------
    ParseError
        Empty file, ragged row, non-numeric or non-finite cell; the message
        carries the 1-based line number.
    """
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        except csv.Error as exc:
            raise ParseError(str(exc), 1) from None
        names = [h.strip() for h in header]
        if not names or all(n == "" for n in names):
            raise ParseError("missing header", 1)
        rows = []
        try:
            for row in reader:
                line = reader.line_num
                if not row or all(c.strip() == "" for c in row):
                    continue
                if len(row) != len(names):
                    raise ParseError(f"expected {len(names)} fields, found {len(row)}", line)
                try:
                    vals = [float(c) for c in row]
                except ValueError:
                    bad = next(c for c in row if not _is_float(c))
                    raise ParseError(f"non-numeric value {bad!r}", line) from None
                if not all(np.isfinite(vals)):
                    raise ParseError("NaN or infinite value", line)
                rows.append(vals)
        except csv.Error as exc:
            raise ParseError(str(exc), reader.line_num) from None
    if not rows:
        raise ParseError("no data rows", 2)
    return DataMatrix(np.array(rows), names)


def _is_float(text):
    try:
        float(text)
        return True
    except ValueError:
        return False


def write_csv(path, data, columns=None):
    values = data.values if isinstance(data, DataMatrix) else np.asarray(data, float)
    cols = list(data.columns) if isinstance(data, DataMatrix) else list(columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in values:
            w.writerow([repr(float(v)) for v in row])


def write_labels(path, labels):
    """Write a partition as ``index,label`` rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "label"])
        for i, lab in enumerate(np.asarray(labels).ravel(), start=1):
            w.writerow([i, int(lab)])


def read_labels(path):
    """Read a partition file (``index,label`` or a single ``label`` column)."""
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", 1) from None
        if header == ["index", "label"]:
            col = 1
        elif len(header) == 1:
            col = 0
        else:
            raise ParseError("expected header 'index,label' or a single label column", 1)
        labels = []
        for row in reader:
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}",
                                 reader.line_num)
            try:
                labels.append(int(row[col]))
            except ValueError:
                raise ParseError(f"label {row[col]!r} is not an integer",
                                 reader.line_num) from None
    if not labels:
        raise ParseError("no labels", 2)
    return np.array(labels, dtype=int)


# --- transforms -------------------------------------------------------------------

@dataclass(frozen=True)
class TransformSpec:
    """``kind`` is ``"none"``, ``"arcsinh"`` (parameter = cofactor) or
    ``"boxcox"`` (parameter = lambda)."""

    kind: str = "none"
    param: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "arcsinh", "boxcox"):
            raise ConfigError(f"unknown transform {self.kind!r}")
        if self.kind == "arcsinh" and not self.param > 0:
            raise ConfigError("arcsinh cofactor must be positive")

    @classmethod
    def parse(cls, text):
        """Parse ``none``, ``arcsinh``, ``arcsinh(150)``, ``boxcox(0.5)`` and
        the ``name:value`` variants."""
        if isinstance(text, cls):
            return text
        s = str(text).strip().lower().replace(" ", "")
        m = re.fullmatch(r"(none|arcsinh|asinh|boxcox|box-cox)(?:[(:]([^()]*)\)?)?", s)
        if not m:
            raise ConfigError(f"cannot parse transform {text!r}")
        name, arg = m.group(1), m.group(2)
        name = {"asinh": "arcsinh", "box-cox": "boxcox"}.get(name, name)
        if name == "none":
            return cls()
        if arg in (None, ""):
            if name == "boxcox":
                raise ConfigError("boxcox needs a lambda, e.g. boxcox(0.5)")
            return cls("arcsinh", 150.0)
        try:
            return cls(name, float(arg))
        except ValueError:
            raise ConfigError(f"invalid transform parameter {arg!r}") from None

    def __str__(self):
        return "none" if self.kind == "none" else f"{self.kind}({self.param:g})"


def _values(data):
    return data.values if isinstance(data, DataMatrix) else np.asarray(data, dtype=float)


def _wrap(data, values):
    if isinstance(data, DataMatrix):
        return DataMatrix(values, data.columns)
    return values


def transform(data, spec):
    """Apply ``arcsinh(x / cofactor)`` or the Box-Cox transform elementwise.

    Box-Cox is ``(x^lam - 1) / lam`` (``log x`` for ``lam = 0``) and requires
    ``x > 0`` (``x >= 0`` when ``lam > 0``).
    """
    spec = TransformSpec.parse(spec)
    x = _values(data)
    if spec.kind == "none":
        return _wrap(data, x.copy())
    if spec.kind == "arcsinh":
        return _wrap(data, np.arcsinh(x / spec.param))
    lam = spec.param
    if lam > 0:
        if np.any(x < 0):
            raise NumericalDomainError("Box-Cox with lambda > 0 needs non-negative data")
    elif np.any(x <= 0):
        raise NumericalDomainError("Box-Cox with lambda <= 0 needs strictly positive data")
    if lam == 0:
        return _wrap(data, np.log(x))
    return _wrap(data, np.expm1(lam * np.log(x)) / lam if np.all(x > 0)
                 else (np.power(x, lam) - 1.0) / lam)


def inverse_transform(data, spec):
    """Inverse of :func:`transform`."""
    spec = TransformSpec.parse(spec)
    z = _values(data)
    if spec.kind == "none":
        return _wrap(data, z.copy())
    if spec.kind == "arcsinh":
        return _wrap(data, spec.param * np.sinh(z))
    lam = spec.param
    if lam == 0:
        return _wrap(data, np.exp(z))
    base = lam * z + 1.0
    if np.any(base < 0) or (lam < 0 and np.any(base <= 0)):
        raise NumericalDomainError("values outside the range of the Box-Cox transform")
    with np.errstate(divide="ignore"):
        return _wrap(data, np.exp(np.log1p(lam * z) / lam))


# --- result bundles ------------------------------------------------------------------

@dataclass
class ResultBundle:
    """Point estimate, summaries and provenance of one run."""

    partition: np.ndarray
    traces: dict = field(default_factory=dict)
    acceptance_rate: float = float("nan")
    metadata: dict = field(default_factory=dict)
    similarity: np.ndarray = None

    def __post_init__(self):
        self.partition = np.asarray(self.partition, dtype=int).ravel()
        if self.similarity is not None:
            self.similarity = np.asarray(self.similarity, dtype=float)
            n = self.partition.shape[0]
            if self.similarity.shape != (n, n):
                raise ConfigError("similarity matrix does not match the partition length")

    @classmethod
    def from_draws(cls, partition, draws, burn_in, metadata=None, similarity=None):
        """Bundle a point estimate with the per-sweep traces of ``draws``."""
        n_iter = len(draws.full_logdensity)
        stored = np.zeros(n_iter, dtype=int)
        stored[burn_in::draws.thin] = 1
        traces = {
            "iteration": np.arange(n_iter),
            "k": np.asarray(draws.full_k, dtype=int),
            "alpha": np.asarray(draws.full_alpha, dtype=float),
            "logdensity": np.asarray(draws.full_logdensity, dtype=float),
            "stored": stored,
        }
        return cls(partition, traces, float(draws.acceptance_rate), dict(metadata or {}),
                   similarity)


_TRACE_COLUMNS = ("iteration", "k", "alpha", "logdensity", "stored")
_INT_COLUMNS = {"iteration", "k", "stored"}


def write_similarity(path, zeta):
    zeta = np.ascontiguousarray(zeta, dtype="<f8")
    n = zeta.shape[0]
    if zeta.shape != (n, n):
        raise ConfigError("similarity matrix must be square")
    body = _MAGIC + struct.pack("<Q", n) + zeta.tobytes()
    digest = hashlib.blake2b(body, digest_size=8).digest()
    with open(path, "wb") as fh:
        fh.write(body + digest)


def read_similarity(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 20 or raw[:4] != _MAGIC:
        raise CorruptResultsError(f"{path}: not a similarity file")
    n = struct.unpack("<Q", raw[4:12])[0]
    expected = 12 + 8 * n * n + 8
    if len(raw) != expected:
        raise CorruptResultsError(f"{path}: expected {expected} bytes, found {len(raw)}")
    body, digest = raw[:-8], raw[-8:]
    if hashlib.blake2b(body, digest_size=8).digest() != digest:
        raise CorruptResultsError(f"{path}: checksum mismatch")
    return np.frombuffer(body, dtype="<f8", offset=12).reshape(n, n).astype(float)


def write_results(bundle, directory):
    """Write a :class:`ResultBundle` to ``directory`` (created if needed)."""
    os.makedirs(directory, exist_ok=True)
    write_labels(os.path.join(directory, "partition.csv"), bundle.partition)
    if bundle.traces:
        cols = [c for c in _TRACE_COLUMNS if c in bundle.traces]
        with open(os.path.join(directory, "traces.csv"), "w", newline="",
                  encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in zip(*(bundle.traces[c] for c in cols)):
                w.writerow([int(v) if c in _INT_COLUMNS else repr(float(v))
                            for c, v in zip(cols, row)])
    sim_path = os.path.join(directory, "similarity.bin")
    if bundle.similarity is not None:
        write_similarity(sim_path, bundle.similarity)
    elif os.path.exists(sim_path):
        os.remove(sim_path)
    meta = dict(bundle.metadata)
    meta["acceptance_rate"] = (None if not np.isfinite(bundle.acceptance_rate)
                               else float(bundle.acceptance_rate))
    meta["n_obs"] = int(bundle.partition.shape[0])
    with open(os.path.join(directory, "metadata.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_results(directory):
    """Read a results directory written by :func:`write_results`."""
    if not os.path.isdir(directory):
        raise ConfigError(f"results directory {directory!r} does not exist")
    partition = read_labels(os.path.join(directory, "partition.csv"))
    traces = {}
    trace_path = os.path.join(directory, "traces.csv")
    if os.path.exists(trace_path):
        with open(trace_path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            cols = next(reader)
            rows = [r for r in reader if r]
        for j, c in enumerate(cols):
            vals = [r[j] for r in rows]
            traces[c] = (np.array([int(v) for v in vals], dtype=int) if c in _INT_COLUMNS
                         else np.array([float(v) for v in vals]))
    meta_path = os.path.join(directory, "metadata.json")
    try:
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise CorruptResultsError(f"{meta_path} is missing") from None
    except json.JSONDecodeError as exc:
        raise CorruptResultsError(f"{meta_path}: {exc}") from None
    acc = meta.pop("acceptance_rate", None)
    meta.pop("n_obs", None)
    sim_path = os.path.join(directory, "similarity.bin")
    similarity = read_similarity(sim_path) if os.path.exists(sim_path) else None
    return ResultBundle(partition, traces, float("nan") if acc is None else float(acc),
                        meta, similarity)


# --- posterior draws ---------------------------------------------------------------

def write_draws(draws, path):
    """Save :class:`PosteriorDraws` to a compressed ``.npz`` file."""
    sizes = np.array([len(c) for c in draws.cluster_params], dtype=int)
    flat = [cp for clusters in draws.cluster_params for cp in clusters]
    d = flat[0].dim if flat else 0
    np.savez_compressed(
        path,
        partitions=np.array(draws.partitions, dtype=np.int32).reshape(len(draws.partitions), -1),
        sizes=sizes,
        xi=np.array([cp.xi for cp in flat]).reshape(-1, d),
        psi=np.array([cp.psi for cp in flat]).reshape(-1, d),
        sigma=np.array([cp.sigma.values for cp in flat]).reshape(-1, d, d),
        nu=np.array([cp.nu for cp in flat], dtype=float),
        alpha_trace=draws.alpha_trace, k_trace=draws.k_trace,
        logdensity_trace=draws.logdensity_trace,
        full_logdensity=draws.full_logdensity, full_k=draws.full_k,
        full_alpha=draws.full_alpha,
        scalars=np.array([draws.acceptance_rate, draws.seed, draws.runtime, draws.thin],
                         dtype=float),
        mode=np.array(draws.mode),
    )


def read_draws(path):
    """Inverse of :func:`write_draws`."""
    try:
        z = np.load(path, allow_pickle=False)
    except FileNotFoundError:
        raise ConfigError(f"draws file {path!r} does not exist") from None
    except (OSError, ValueError) as exc:
        raise CorruptResultsError(f"{path}: {exc}") from None
    with z:
        sizes = z["sizes"]
        xi, psi, sigma, nu = z["xi"], z["psi"], z["sigma"], z["nu"]
        params = []
        pos = 0
        for s in sizes:
            params.append([ClusterParams(xi[j], psi[j], SpdMatrix(sigma[j]), nu[j])
                           for j in range(pos, pos + s)])
            pos += s
        acc, seed, runtime, thin = z["scalars"]
        draws = PosteriorDraws(
            partitions=[p.astype(int) for p in z["partitions"]],
            cluster_params=params,
            alpha_trace=z["alpha_trace"], k_trace=z["k_trace"],
            logdensity_trace=z["logdensity_trace"],
            acceptance_rate=float(acc),
            full_logdensity=z["full_logdensity"], full_k=z["full_k"],
            full_alpha=z["full_alpha"], mode=str(z["mode"]), seed=int(seed),
            runtime=float(runtime), thin=int(thin))
    return draws


def load_data(path, transform_spec=None):
    """Read CSV or FCS (by extension) and apply an optional transform."""
    ext = os.path.splitext(str(path))[1].lower()
    if not os.path.exists(path):
        raise ConfigError(f"input file {path!r} does not exist")
    data = read_fcs(path) if ext in (".fcs", ".lmd") else read_csv(path)
    if transform_spec is not None:
        data = transform(data, transform_spec)
    return data


__all__ = [
    "ResultBundle", "TransformSpec", "inverse_transform", "load_data",
    "read_csv", "read_draws", "read_labels", "read_results", "read_similarity", "transform",
    "write_csv", "write_draws", "write_labels", "write_results", "write_similarity",
]
