"""File formats: binary matrix and plan containers, CSV observations and vectors.

All binary numbers are little-endian; floats are IEEE-754 doubles.

Covariance container::

    header  <8s I Q B B B B d d d>
            magic, version, m, kind code, inverted flag, recondition method
            code, recondition applied flag, lengthscale, kappa, parameter
    body    lower triangle, row-major (row 0: 1 value, row 1: 2 values, ...)

Plan container::

    header  <8s I Q I I B>   magic, version, m, levels, p, symmetric flag
    tree    bounds (4 doubles), leaf-cell x (m int64), leaf-cell y (m int64)
    boxes   for each box on levels 2..L ascending: rank (uint32),
            source values, source left (m_F x r), source right (m_b x r),
            and when not symmetric the three target arrays likewise
    ops     M2M, M2L, L2L blocks in ascending key order, then the near-field
            block of every leaf, all row-major
"""

import csv
import io
import math
import struct

import numpy as np

from .boxtree import BoxTree, ObservationSet
from .covmodel import (CorrelationFunction, CorrelationKind, CovarianceModel,
                       ReconditionMethod, ReconditionRecord)
from .errors import ArgumentError
from .svdfmm import BoxFactor, FmmPlan

COV_MAGIC = b"OBSCOVMX"
PLAN_MAGIC = b"OBSFMMPL"
COV_VERSION = 1
PLAN_VERSION = 1

_COV_HEADER = struct.Struct("<8sIQBBBBddd")
_PLAN_HEADER = struct.Struct("<8sIQIIB")

_KIND_CODES = {None: 0, CorrelationKind.GAUSSIAN: 1, CorrelationKind.FOAR: 2,
               CorrelationKind.SOAR: 3, CorrelationKind.MATERN52: 4}
_METHOD_CODES = {None: 0, ReconditionMethod.RIDGE_REGRESSION: 1,
                 ReconditionMethod.MINIMUM_EIGENVALUE: 2}


class FormatError(ArgumentError):
    """A file does not match the expected container layout."""


def _inverse(d):
    return {v: k for k, v in d.items()}


def _f8(a):
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


class _Reader:
    def __init__(self, data):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FormatError("file is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, st):
        return st.unpack(self.take(st.size))

    def floats(self, shape):
        n = int(np.prod(shape)) if len(shape) else 1
        arr = np.frombuffer(self.take(8 * n), dtype="<f8").astype(float)
        return arr.reshape(shape)

    def ints(self, n):
        return np.frombuffer(self.take(8 * n), dtype="<i8").astype(np.int64)

    def done(self):
        if self.pos != len(self.data):
            raise FormatError(f"{len(self.data) - self.pos} trailing bytes")


# -- covariance ------------------------------------------------------------

def covariance_to_bytes(model):
    M = model.matrix
    m = M.shape[0]
    corr = model.correlation
    rec = model.recondition
    header = _COV_HEADER.pack(
        COV_MAGIC, COV_VERSION, m,
        _KIND_CODES[corr.kind if corr else None],
        int(model.inverted),
        _METHOD_CODES[rec.method if rec else None],
        int(rec.applied) if rec else 0,
        corr.lengthscale if corr else math.nan,
        rec.kappa if rec else math.nan,
        rec.parameter if rec else math.nan,
    )
    rows, cols = np.tril_indices(m)
    return header + _f8(M[rows, cols])


def covariance_from_bytes(data):
    r = _Reader(data)
    magic, version, m, kind, inverted, method, applied, ls, kappa, param = r.unpack(_COV_HEADER)
    if magic != COV_MAGIC:
        raise FormatError("not a covariance container (bad magic)")
    if version != COV_VERSION:
        raise FormatError(f"unsupported covariance container version {version}")
    try:
        kind = _inverse(_KIND_CODES)[kind]
        method = _inverse(_METHOD_CODES)[method]
    except KeyError:
        raise FormatError("unknown kind or reconditioning code") from None
    if m < 1:
        raise FormatError("matrix dimension must be positive")
    tri = r.floats((m * (m + 1) // 2,))
    r.done()
    M = np.zeros((m, m))
    rows, cols = np.tril_indices(m)
    M[rows, cols] = tri
    M[cols, rows] = tri
    corr = CorrelationFunction(kind, ls) if kind is not None else None
    rec = ReconditionRecord(method, kappa, param, bool(applied)) if method is not None else None
    stddevs = None
    if not inverted and (rec is None or not rec.applied):
        stddevs = np.sqrt(np.diag(M))
    return CovarianceModel(matrix=M, correlation=corr, stddevs=stddevs,
                           recondition=rec, inverted=bool(inverted))


def save_covariance(path, model):
    with open(path, "wb") as fh:
        fh.write(covariance_to_bytes(model))


def load_covariance(path):
    with open(path, "rb") as fh:
        return covariance_from_bytes(fh.read())


# -- plan ------------------------------------------------------------------

def _plan_boxes(tree):
    return [b for level in range(2, tree.levels + 1) for b in tree.box_ids(level)]


def plan_to_bytes(plan):
    tree = plan.tree
    out = io.BytesIO()
    out.write(_PLAN_HEADER.pack(PLAN_MAGIC, PLAN_VERSION, tree.m, tree.levels, plan.p,
                                int(plan.symmetric)))
    out.write(_f8(tree.bounds))
    out.write(np.ascontiguousarray(tree._leaf_x, dtype="<i8").tobytes())
    out.write(np.ascontiguousarray(tree._leaf_y, dtype="<i8").tobytes())
    for b in _plan_boxes(tree):
        f = plan.factors[b]
        out.write(struct.pack("<I", f.rank))
        out.write(_f8(f.src_values) + _f8(f.src_left) + _f8(f.src_right))
        if not plan.symmetric:
            out.write(_f8(f.tgt_values) + _f8(f.tgt_left) + _f8(f.tgt_right))
    for key in sorted(plan.m2m):
        out.write(_f8(plan.m2m[key]))
    for key in sorted(plan.m2l):
        out.write(_f8(plan.m2l[key]))
    for key in sorted(plan.l2l):
        out.write(_f8(plan.l2l[key]))
    for b in tree.leaf_boxes():
        out.write(_f8(plan.near[b][2]))
    return out.getvalue()


def plan_from_bytes(data):
    r = _Reader(data)
    magic, version, m, levels, p, symmetric = r.unpack(_PLAN_HEADER)
    if magic != PLAN_MAGIC:
        raise FormatError("not a plan container (bad magic)")
    if version != PLAN_VERSION:
        raise FormatError(f"unsupported plan container version {version}")
    bounds = tuple(r.floats((4,)))
    leaf_x, leaf_y = r.ints(m), r.ints(m)
    tree = BoxTree(bounds, levels, leaf_x, leaf_y, m)
    symmetric = bool(symmetric)

    factors, degenerate = {}, set()
    for b in _plan_boxes(tree):
        idx = tree.indices(b)
        far = tree.indices_of(tree.far_field(b))
        (rank,) = r.unpack(struct.Struct("<I"))
        s = r.floats((rank,))
        uf = r.floats((far.shape[0], rank))
        vb = r.floats((idx.shape[0], rank))
        if symmetric:
            ts, tl, tr = s, vb, uf
        else:
            ts = r.floats((rank,))
            tl = r.floats((idx.shape[0], rank))
            tr = r.floats((far.shape[0], rank))
        if idx.shape[0] and rank == 0:
            degenerate.add(b)
        factors[b] = BoxFactor(b, idx, far, rank, s, uf, vb, ts, tl, tr)

    m2m_keys, m2l_keys, l2l_keys = [], [], []
    for b in _plan_boxes(tree):
        level = tree.level_of(b)
        if level < levels:
            m2m_keys += [(b, c) for c in tree.children(b)]
        m2l_keys += [(b, bp) for bp in tree.interaction_list(b)]
        if level > 2:
            l2l_keys.append(b)
    m2m = {k: r.floats((factors[k[0]].rank, factors[k[1]].rank)) for k in sorted(m2m_keys)}
    m2l = {k: r.floats((factors[k[0]].rank, factors[k[1]].rank)) for k in sorted(m2l_keys)}
    l2l = {b: r.floats((factors[b].rank, factors[tree.parent(b)].rank)) for b in sorted(l2l_keys)}
    near = {}
    for b in tree.leaf_boxes():
        idx = tree.indices(b)
        cols = tree.indices_of(tree.near_field(b))
        near[b] = (idx, cols, r.floats((idx.shape[0], cols.shape[0])))
    r.done()
    return FmmPlan(p, tree, symmetric, factors, m2m, m2l, l2l, near, frozenset(degenerate))


def save_plan(path, plan):
    with open(path, "wb") as fh:
        fh.write(plan_to_bytes(plan))


def load_plan(path):
    with open(path, "rb") as fh:
        return plan_from_bytes(fh.read())


# -- text formats ----------------------------------------------------------

def write_observations(fh, obs):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["index", "lat", "lon"])
    for i, (la, lo) in enumerate(zip(obs.lat, obs.lon)):
        w.writerow([i, repr(float(la)), repr(float(lo))])


def read_observations(fh):
    rows = list(csv.DictReader(fh))
    if not rows:
        raise FormatError("observation file has no rows")
    try:
        idx = [int(r["index"]) for r in rows]
        lat = [float(r["lat"]) for r in rows]
        lon = [float(r["lon"]) for r in rows]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad observation file: {exc}") from None
    if idx != list(range(len(rows))):
        raise FormatError("observation indices must be 0..m-1 in order")
    return ObservationSet(lat, lon)


def write_vector(fh, v):
    for x in np.asarray(v, dtype=float).ravel():
        fh.write(repr(float(x)) + "\n")


def read_vector(fh):
    vals = []
    for line in fh:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            vals.append(float(line))
        except ValueError:
            raise FormatError(f"not a number: {line!r}") from None
    return np.array(vals)
