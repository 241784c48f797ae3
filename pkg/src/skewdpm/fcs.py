"""Minimal reader for list-mode FCS 3.0/3.1 files with float or double data."""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import FcsFormatError, UnsupportedFeatureError
from .model import DataMatrix

HEADER_SIZE = 58
_VERSIONS = ("FCS3.0", "FCS3.1")
_LITTLE = {"1,2,3,4", "1,2,3,4,5,6,7,8"}
_BIG = {"4,3,2,1", "8,7,6,5,4,3,2,1"}
_WIDTH = {"F": 32, "D": 64}


@dataclass
class FcsHeader:
    """Segment offsets (inclusive byte positions) and TEXT keywords."""

    version: str
    text_start: int
    text_end: int
    data_start: int
    data_end: int
    analysis_start: int = 0
    analysis_end: int = 0
    keywords: dict = field(default_factory=dict)


def _offset(raw, lo, hi):
    field_ = raw[lo:hi].decode("ascii", errors="replace").strip()
    if field_ == "":
        return 0
    try:
        value = int(field_)
    except ValueError:
        raise FcsFormatError(f"header offset at bytes {lo}-{hi - 1} is not an integer: "
                             f"{field_!r}") from None
    if value < 0:
        raise FcsFormatError(f"negative header offset {value}")
    return value


def parse_text_segment(text):
    """Split a TEXT segment into an upper-cased keyword map.

    The first byte is the delimiter; a doubled delimiter inside a keyword or
    value stands for one literal delimiter character.
    """
    if len(text) < 2:
        raise FcsFormatError("TEXT segment is too short")
    delim = text[0:1]
    tokens = []
    buf = bytearray()
    i = 1
    n = len(text)
    while i < n:
        ch = text[i:i + 1]
        if ch == delim:
            if i + 1 < n and text[i + 1:i + 2] == delim:
                buf += delim
                i += 2
                continue
            tokens.append(bytes(buf))
            buf = bytearray()
        else:
            buf += ch
        i += 1
    if buf:
        tokens.append(bytes(buf))
    if len(tokens) % 2:
        raise FcsFormatError("TEXT segment has an odd number of keyword/value tokens")
    out = {}
    for key, value in zip(tokens[::2], tokens[1::2]):
        try:
            k = key.decode("utf-8").strip().upper()
            v = value.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FcsFormatError(f"TEXT segment is not valid UTF-8: {exc}") from None
        out[k] = v
    return out


def _int_keyword(kw, name):
    if name not in kw:
        raise FcsFormatError(f"required keyword {name} is missing")
    try:
        return int(kw[name].strip())
    except ValueError:
        raise FcsFormatError(f"keyword {name} is not an integer: {kw[name]!r}") from None


def read_fcs_header(raw):
    """Parse the fixed header and TEXT segment of an in-memory FCS file."""
    size = len(raw)
    if size < HEADER_SIZE:
        raise FcsFormatError(f"file is {size} bytes, shorter than the {HEADER_SIZE}-byte header")
    version = raw[:6].decode("ascii", errors="replace")
    if version not in _VERSIONS:
        raise UnsupportedFeatureError("version", version)
    text_start, text_end = _offset(raw, 10, 18), _offset(raw, 18, 26)
    data_start, data_end = _offset(raw, 26, 34), _offset(raw, 34, 42)
    ana_start, ana_end = _offset(raw, 42, 50), _offset(raw, 50, 58)
    if not HEADER_SIZE <= text_start < text_end < size:
        raise FcsFormatError(
            f"TEXT segment [{text_start}, {text_end}] lies outside the {size}-byte file")
    kw = parse_text_segment(raw[text_start:text_end + 1])
    if data_start == 0 and data_end == 0:
        data_start = _int_keyword(kw, "$BEGINDATA")
        data_end = _int_keyword(kw, "$ENDDATA")
    return FcsHeader(version, text_start, text_end, data_start, data_end,
                     ana_start, ana_end, kw)


def read_fcs(path):
    """Read a list-mode FCS file into a :class:`DataMatrix`.

    Supported: FCS3.0/3.1, ``$MODE=L``, ``$DATATYPE`` F (32-bit) or D
    (64-bit) with uniform ``$PnB``, ``$BYTEORD`` 1,2,3,4 or 4,3,2,1.
    Column names come from ``$PnN``.

    Raises
    ------
    UnsupportedFeatureError
        Names the offending keyword.
    FcsFormatError
        Truncated file, missing keywords or inconsistent offsets.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    header = read_fcs_header(raw)
    return fcs_to_matrix(raw, header)


def fcs_to_matrix(raw, header):
    kw = header.keywords
    for name in ("$PAR", "$TOT", "$DATATYPE", "$BYTEORD", "$MODE"):
        if name not in kw:
            raise FcsFormatError(f"required keyword {name} is missing")
    mode = kw["$MODE"].strip().upper()
    if mode != "L":
        raise UnsupportedFeatureError("$MODE", mode)
    dtype_code = kw["$DATATYPE"].strip().upper()
    if dtype_code not in _WIDTH:
        raise UnsupportedFeatureError("$DATATYPE", dtype_code)
    order = kw["$BYTEORD"].strip().replace(" ", "")
    if order in _LITTLE:
        endian = "<"
    elif order in _BIG:
        endian = ">"
    else:
        raise UnsupportedFeatureError("$BYTEORD", order)
    n_par = _int_keyword(kw, "$PAR")
    n_tot = _int_keyword(kw, "$TOT")
    if n_par < 1 or n_tot < 0:
        raise FcsFormatError(f"invalid $PAR={n_par} or $TOT={n_tot}")
    names = []
    for j in range(1, n_par + 1):
        bits_key, name_key = f"$P{j}B", f"$P{j}N"
        if bits_key not in kw or name_key not in kw:
            raise FcsFormatError(f"required keyword {bits_key} or {name_key} is missing")
        bits = kw[bits_key].strip()
        if bits != str(_WIDTH[dtype_code]):
            raise UnsupportedFeatureError(bits_key, bits)
        names.append(kw[name_key].strip())

    size = len(raw)
    start, end = header.data_start, header.data_end
    width = _WIDTH[dtype_code] // 8
    n_bytes = n_par * n_tot * width
    if n_tot == 0:
        raise FcsFormatError("file holds no events ($TOT=0)")
    if not (HEADER_SIZE <= start <= end < size):
        raise FcsFormatError(f"DATA segment [{start}, {end}] lies outside the {size}-byte file")
    if start <= header.text_end and header.text_start <= end:
        raise FcsFormatError("DATA and TEXT segments overlap")
    if end - start + 1 < n_bytes:
        raise FcsFormatError(
            f"DATA segment holds {end - start + 1} bytes, {n_bytes} needed for "
            f"{n_tot} events x {n_par} parameters")
    dtype = np.dtype(endian + ("f4" if dtype_code == "F" else "f8"))
    values = np.frombuffer(raw, dtype=dtype, count=n_par * n_tot, offset=start)
    values = values.astype(float).reshape(n_tot, n_par)
    if not np.all(np.isfinite(values)):
        raise FcsFormatError("DATA segment contains NaN or infinite values")
    return DataMatrix(values, names)
