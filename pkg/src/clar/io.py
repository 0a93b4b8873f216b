"""File formats for matrices, observation stacks, and run manifests.

Two interchangeable matrix encodings:

* csv — comma-separated, row-major, '.' decimal, no header row; floats
  printed with 17 significant digits so doubles round-trip exactly.
* packed-binary — magic bytes ``CLARMAT1``, then row and column counts as
  little-endian u64, then the row-major float64 little-endian payload.

Repeated observations are stored one file per repetition with suffix
``_rep<k>`` counting from 0.  Run manifests are flat ``key = value`` text
files.  All read errors name the offending file and byte offset.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import InvalidInput
from .model import RepeatedObservations, as_observations

MAGIC = b"CLARMAT1"
_HEADER_LEN = len(MAGIC) + 16
FORMATS = ("csv", "packed-binary")
_EXTENSIONS = {"csv": ".csv", "packed-binary": ".bin"}


@dataclass(frozen=True)
class MatrixFile:
    """A matrix on disk: location, encoding, and shape."""

    path: Path
    format: str
    shape: tuple


def _format_for(fmt):
    if fmt not in FORMATS:
        raise InvalidInput(f"unknown format {fmt!r}; expected one of "
                           f"{FORMATS}")
    return fmt


def extension_for(fmt):
    """Canonical file extension (.csv / .bin) for a format name."""
    return _EXTENSIONS[_format_for(fmt)]


def _as_2d(a):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise InvalidInput(f"only 2-D matrices are written, got ndim="
                           f"{a.ndim}")
    return a


def write_matrix(path, a, fmt="csv"):
    """Write one matrix; returns the MatrixFile record."""
    fmt = _format_for(fmt)
    path = Path(path)
    a = _as_2d(a)
    if fmt == "csv":
        with open(path, "w", encoding="ascii") as fh:
            for row in a:
                fh.write(",".join(format(v, ".17g") for v in row))
                fh.write("\n")
    else:
        payload = np.ascontiguousarray(a, dtype="<f8").tobytes()
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<QQ", a.shape[0], a.shape[1]))
            fh.write(payload)
    return MatrixFile(path=path, format=fmt, shape=a.shape)


def _read_csv_matrix(path):
    rows = []
    width = None
    offset = 0
    with open(path, "rb") as fh:
        for raw in fh:
            line = raw.rstrip(b"\r\n")
            if line:
                values = []
                pos = offset
                for token in line.split(b","):
                    try:
                        values.append(float(token))
                    except ValueError:
                        raise InvalidInput(
                            f"{path}: invalid float "
                            f"{token.decode('ascii', 'replace')!r} at byte "
                            f"{pos}") from None
                    pos += len(token) + 1
                if width is None:
                    width = len(values)
                elif len(values) != width:
                    raise InvalidInput(
                        f"{path}: row at byte {offset} has {len(values)} "
                        f"columns, expected {width}")
                rows.append(values)
            offset += len(raw)
    if not rows:
        raise InvalidInput(f"{path}: empty matrix file (0 bytes of data)")
    return np.array(rows, dtype=float)


def _read_binary_matrix(path):
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) or data[:len(MAGIC)] != MAGIC:
        raise InvalidInput(f"{path}: bad or missing magic bytes at byte 0 "
                           f"(expected {MAGIC.decode('ascii')})")
    if len(data) < _HEADER_LEN:
        raise InvalidInput(f"{path}: truncated header at byte {len(data)}")
    n_rows, n_cols = struct.unpack_from("<QQ", data, len(MAGIC))
    expected = _HEADER_LEN + n_rows * n_cols * 8
    if len(data) != expected:
        raise InvalidInput(
            f"{path}: expected {expected} bytes for a {n_rows}x{n_cols} "
            f"matrix, found {len(data)} (payload starts at byte "
            f"{_HEADER_LEN})")
    flat = np.frombuffer(data, dtype="<f8", offset=_HEADER_LEN)
    return flat.reshape(n_rows, n_cols).astype(float, copy=True)


def read_matrix(path):
    """Read a matrix in either format (sniffed from the magic bytes)."""
    path = Path(path)
    if not path.is_file():
        raise InvalidInput(f"{path}: no such file")
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    if head == MAGIC:
        return _read_binary_matrix(path)
    return _read_csv_matrix(path)


def _rep_path(prefix, k, fmt):
    return Path(f"{prefix}_rep{k}{extension_for(fmt)}")


def write_observations(prefix, obs, fmt="csv"):
    """Write the repetition stack as prefix_rep0, prefix_rep1, ..."""
    obs = as_observations(obs)
    fmt = _format_for(fmt)
    return [write_matrix(_rep_path(prefix, k, fmt), rep, fmt)
            for k, rep in enumerate(obs.repetitions)]


def read_observations(prefix):
    """Read a repetition stack back from a prefix (or a single file).

    A path that is itself a file is read as a single repetition; otherwise
    ``<prefix>_rep0``, ``<prefix>_rep1``, ... are collected (either
    extension) until the first missing index.
    """
    direct = Path(prefix)
    if direct.is_file():
        return RepeatedObservations(read_matrix(direct)[None])
    reps = []
    k = 0
    while True:
        candidates = [Path(f"{prefix}_rep{k}{ext}")
                      for ext in (".csv", ".bin", "")]
        found = next((c for c in candidates if c.is_file()), None)
        if found is None:
            break
        rep = read_matrix(found)
        if reps and rep.shape != reps[0].shape:
            raise InvalidInput(
                f"{found}: repetition shape {rep.shape} does not match "
                f"{reps[0].shape} of earlier repetitions")
        reps.append(rep)
        k += 1
    if not reps:
        raise InvalidInput(
            f"no observation files found for prefix {prefix} (expected "
            f"{prefix}_rep0.csv, {prefix}_rep0.bin, or a direct file path)")
    return RepeatedObservations(np.stack(reps))


def write_table(path, header, rows):
    """Result table: one header row, then rows of str/int/float cells."""
    path = Path(path)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(header))
        fh.write("\n")
        for row in rows:
            fh.write(",".join(
                format(cell, ".17g") if isinstance(cell, float) else str(cell)
                for cell in row))
            fh.write("\n")
    return path


@dataclass(frozen=True)
class RunManifest:
    """Flat, ordered key -> string mapping describing one CLI run."""

    entries: dict

    def get(self, key, default=None):
        return self.entries.get(key, default)

    def require(self, key):
        if key not in self.entries:
            raise InvalidInput(f"manifest is missing required key {key!r}")
        return self.entries[key]


def write_manifest(path, entries):
    """Serialize ``key = value`` lines; values are stringified verbatim."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in entries.items():
            key = str(key)
            if "=" in key or "\n" in key or not key.strip():
                raise InvalidInput(f"invalid manifest key {key!r}")
            value = str(value)
            if "\n" in value:
                raise InvalidInput(f"manifest value for {key!r} contains a "
                                   f"newline")
            fh.write(f"{key} = {value}\n")
    return RunManifest(entries={str(k): str(v) for k, v in entries.items()})


def read_manifest(path):
    """Parse a manifest, reporting malformed lines by byte offset."""
    path = Path(path)
    if not path.is_file():
        raise InvalidInput(f"{path}: no such file")
    entries = {}
    offset = 0
    with open(path, "rb") as fh:
        for raw in fh:
            line = raw.rstrip(b"\r\n")
            if line:
                text = line.decode("utf-8", "replace")
                key, sep, value = text.partition("=")
                if not sep or not key.strip():
                    raise InvalidInput(f"{path}: malformed manifest line at "
                                       f"byte {offset} (expected 'key = "
                                       f"value'): {text!r}")
                entries[key.strip()] = value.strip()
            offset += len(raw)
    if not entries:
        raise InvalidInput(f"{path}: empty manifest")
    return RunManifest(entries=entries)
