"""Deterministic binary cache for spectra and triad tensors.

File layout::

    b"MNSCACHE\\x01"                 magic + format version
    uint64 little-endian            length of the JSON header in bytes
    JSON header (sorted keys)       config, degree, array names/dtypes/shapes
    raw little-endian arrays        concatenated in header order

No timestamps or compression are involved, so rebuilding a cache yields a
byte-identical file and loading one reproduces fresh assembly bit for bit.
"""

import json
import os
import struct

import numpy as np

from ..exceptions import ConfigurationError
from .config import ManifoldConfig
from .table import SpectrumTable
from .triads import TriadTensor, build_triads
from .basis import default_degree
from .table import build_spectrum

MAGIC = b"MNSCACHE\x01"
ENV_VAR = "MANIFOLD_NS_CACHE"

_ARRAYS = (
    ("eigenvalues_sq", "<f8"),
    ("labels", "<i8"),
    ("shell_index", "<i8"),
    ("product_index", "<i8"),
    ("product_values", "<f8"),
    ("advection_index", "<i8"),
    ("advection_values", "<f8"),
    ("harmonic_advection", "<f8"),
)


def cache_key(config, degree):
    """File name for ``(kind, cutoff, degree)``; the cutoff is stored exactly."""
    return f"{config.kind}-{float(config.cutoff).hex()}-d{int(degree)}.mnsc"


def default_cache_root():
    return os.environ.get(ENV_VAR, os.path.join(os.path.expanduser("~"), ".cache", "manifold_ns"))


def save(path, table, triads):
    """Write ``table`` and ``triads`` to ``path`` (atomic replace)."""
    arrays = {
        "eigenvalues_sq": table.eigenvalues_sq,
        "labels": table.labels,
        "shell_index": table.shell_index,
        "product_index": triads.product_index,
        "product_values": triads.product_values,
        "advection_index": triads.advection_index,
        "advection_values": triads.advection_values,
        "harmonic_advection": triads.harmonic_advection,
    }
    header = {
        "config": {"kind": table.config.kind, "cutoff": float(table.config.cutoff).hex()},
        "degree": triads.degree,
        "arrays": [[name, dt, list(arrays[name].shape)] for name, dt in _ARRAYS],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("ascii")
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name, dt in _ARRAYS:
            fh.write(np.ascontiguousarray(arrays[name], dtype=dt).tobytes())
    os.replace(tmp, path)


def load(path, laplacian_variant="hodge"):
    """Read a cache file; returns ``(table, triads)``.

    The viscous variant does not affect the spectrum or the triads, so it is
    supplied by the caller rather than stored.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(MAGIC):
        raise ConfigurationError(f"{path} is not a spectrum cache file")
    pos = len(MAGIC)
    (hlen,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    header = json.loads(data[pos:pos + hlen].decode("ascii"))
    pos += hlen
    arrays = {}
    for name, dt, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype=dt, count=count, offset=pos).reshape(shape)
        pos += arr.nbytes
        arrays[name] = arr.astype(arr.dtype.newbyteorder("="), copy=True)
    cfg = header["config"]
    config = ManifoldConfig(cfg["kind"], float.fromhex(cfg["cutoff"]), laplacian_variant)
    table = SpectrumTable(config, arrays["eigenvalues_sq"], arrays["labels"], arrays["shell_index"])
    triads = TriadTensor(
        table,
        arrays["product_index"],
        arrays["product_values"],
        arrays["advection_index"],
        arrays["advection_values"],
        arrays["harmonic_advection"],
        header["degree"],
    )
    return table, triads


def load_or_build(config, degree=None, root=None):
    """Return ``(table, triads, path, hit)``, assembling and caching on a miss.

    ``root=False`` disables caching.
    """
    table = build_spectrum(config)
    if degree is None:
        degree = default_degree(table)
    if root is False:
        return table, build_triads(table, degree), None, False
    root = default_cache_root() if root is None else root
    path = os.path.join(root, cache_key(config, degree))
    if os.path.exists(path):
        cached_table, triads = load(path, config.laplacian_variant)
        return cached_table, triads, path, True
    triads = build_triads(table, degree)
    os.makedirs(root, exist_ok=True)
    save(path, table, triads)
    return table, triads, path, False
