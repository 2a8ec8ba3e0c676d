"""
Binary field dumps and CSV slices.

Dump layout: little-endian header ``b"CFRG"``, version (u32), n (u32),
L (f64), component count (u32), then f64 values.  Each component is written
x3-major with x1 varying fastest; components follow one another.
"""

import struct

import numpy as np

from .geometry import Lattice

MAGIC = b"CFRG"
VERSION = 1
_HEADER = struct.Struct("<4sIIdI")


def dump_field(path, values, lattice):
    """Write a scalar ``(n, n, n)`` or multi-component ``(c, n, n, n)`` field."""
    a = np.asarray(values, dtype="<f8")
    if a.shape == lattice.shape:
        a = a[None]
    if a.ndim != 4 or a.shape[1:] != lattice.shape:
        raise ValueError(f"field of shape {np.shape(values)} does not match lattice {lattice.shape}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, lattice.n, lattice.L, a.shape[0]))
        for comp in a:
            # Fortran order puts the first index (x1) fastest
            fh.write(comp.ravel(order="F").tobytes())


def load_field(path):
    """Read a dump; returns ``(values, lattice)`` with scalars squeezed to ``(n, n, n)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError("truncated header")
    magic, version, n, L, ncomp = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported dump version {version}")
    count = ncomp * n**3
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != count:
        raise ValueError(f"expected {count} values, found {body.size}")
    lattice = Lattice(n, L)
    comps = body.reshape(ncomp, n**3)
    out = np.stack([c.reshape(lattice.shape, order="F") for c in comps]).astype(float)
    return (out[0] if ncomp == 1 else out), lattice


def write_csv_slice(path, values, plane):
    """One line per x2 row of the x3 = ``plane`` slice: ``plane,v(x1=0),v(x1=1),...``."""
    a = np.asarray(values)
    sl = a[:, :, plane]
    with open(path, "w") as fh:
        for j in range(sl.shape[1]):
            fh.write(",".join([str(plane)] + [repr(float(v)) for v in sl[:, j]]) + "\n")
