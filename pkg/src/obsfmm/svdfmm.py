"""SVD-based fast multipole evaluation of ``q = A d`` for symmetric ``A``.

For every box ``b`` on levels 2..L the far-field block ``A(I_F, I_b)`` is
compressed by a truncated SVD. Source-side right singular vectors turn a
box's departures into a multipole expansion, translation operators move
expansions up the tree (M2M), across it (M2L) and down it (L2L), and the
target-side left singular vectors turn each leaf's local expansion back into
values. Near-field blocks are applied exactly.

Departure input may be a single vector of length ``m`` or an ``(m, n)``
array whose columns are independent vectors.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import numkernel
from .errors import ArgumentError

_EPS = np.finfo(float).eps

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BoxSvd:
    """Full thin SVD of one box's far-field block, sign-normalised."""

    left: np.ndarray    # m_F x k
    values: np.ndarray  # k
    right: np.ndarray   # m_b x k


@dataclass(eq=False)
class BoxFactor:
    """Rank-clipped factors of one box.

    ``src_left``/``src_right`` factor ``A(I_F, I_b)``; ``tgt_left``/``tgt_right``
    factor ``A(I_b, I_F)``. In the symmetric plan the target factors are the
    swapped source factors. Columns whose singular value is numerically zero
    are zeroed so they contribute nothing.
    """

    box: int
    idx: np.ndarray
    far_idx: np.ndarray
    rank: int
    src_values: np.ndarray
    src_left: np.ndarray
    src_right: np.ndarray
    tgt_values: np.ndarray
    tgt_left: np.ndarray
    tgt_right: np.ndarray


@dataclass(eq=False)
class FmmPlan:
    p: int
    tree: object
    symmetric: bool
    factors: dict
    m2m: dict           # (parent, child) -> r_parent x r_child
    m2l: dict           # (b, b') -> r_b x r_b'
    l2l: dict           # child -> r_child x r_parent
    near: dict          # leaf -> (I_b, I_N, A(I_b, I_N))
    degenerate: frozenset = field(default_factory=frozenset)

    @property
    def m(self):
        return self.tree.m

    def operator_count(self):
        return len(self.m2m), len(self.m2l), len(self.l2l)


def _far_block(A, tree, b):
    return tree.indices(b), tree.indices_of(tree.far_field(b))


def _thin_svd(block):
    if block.size == 0:
        k = min(block.shape)
        return BoxSvd(np.zeros((block.shape[0], k)), np.zeros(k), np.zeros((block.shape[1], k)))
    U, s, Vt = np.linalg.svd(block, full_matrices=False)
    U, Vt = numkernel._fix_signs(U, Vt)
    return BoxSvd(U, s, Vt.T.copy())


def factorize(A, tree, transpose=False):
    """Full thin SVDs of every far-field block on levels 2..L.

    With ``transpose`` the blocks ``A(I_b, I_F)`` are decomposed instead of
    ``A(I_F, I_b)``. The result can be passed to :func:`plan_build` for any
    rank, which avoids repeating the SVDs during a rank sweep.
    """
    A = _check_matrix(A, tree)
    out = {}
    for level in range(2, tree.levels + 1):
        for b in tree.box_ids(level):
            idx, far = _far_block(A, tree, b)
            block = A[np.ix_(idx, far)] if transpose else A[np.ix_(far, idx)]
            out[b] = _thin_svd(block)
    return out


def _check_matrix(A, tree):
    A = numkernel.as_matrix(A)
    if A.shape != (tree.m, tree.m):
        raise ArgumentError(f"matrix shape {A.shape} does not match {tree.m} observations")
    return A


def _clip(svd, r):
    left, values, right = svd.left[:, :r].copy(), svd.values[:r].copy(), svd.right[:, :r].copy()
    if r:
        tol = values[0] * max(left.shape[0], right.shape[0]) * _EPS
        dead = values <= tol
        left[:, dead] = 0.0
        right[:, dead] = 0.0
    return left, values, right


def _positions(idx, within, m):
    loc = np.full(m, -1, dtype=np.intp)
    loc[within] = np.arange(within.shape[0])
    pos = loc[idx]
    if np.any(pos < 0):
        raise AssertionError("index set is not contained in the enclosing set")
    return pos


def plan_build(A, tree, p, svds=None, symmetric=True, target_svds=None):
    """Build the plan for rank ``p``.

    ``svds`` (from :func:`factorize`) may be supplied to reuse decompositions.
    With ``symmetric=False`` the target-side factors come from a separate SVD
    of ``A(I_b, I_F)`` (``target_svds`` or computed here) instead of being
    read off the source SVD.
    """
    A = _check_matrix(A, tree)
    p = int(p)
    if p < 1:
        raise ArgumentError(f"rank must be at least 1, got {p}")
    if svds is None:
        svds = factorize(A, tree)
    if not symmetric and target_svds is None:
        target_svds = factorize(A, tree, transpose=True)

    factors, degenerate, clipped = {}, set(), 0
    for level in range(2, tree.levels + 1):
        for b in tree.box_ids(level):
            idx, far = _far_block(A, tree, b)
            r = min(p, idx.shape[0], far.shape[0])
            clipped += 0 < idx.shape[0] < p
            if idx.shape[0] and r == 0:
                degenerate.add(b)
            uf, s, vb = _clip(svds[b], r)
            if symmetric:
                tl, ts, tr = vb, s, uf
            else:
                tl, ts, tr = _clip(target_svds[b], r)
            factors[b] = BoxFactor(b, idx, far, r, s, uf, vb, ts, tl, tr)

    if clipped:
        log.warning("%d non-empty boxes hold fewer than p=%d observations; their rank is clipped",
                    clipped, p)

    m = tree.m
    m2m, m2l, l2l = {}, {}, {}
    for level in range(2, tree.levels + 1):
        for b in tree.box_ids(level):
            fb = factors[b]
            if level < tree.levels:
                for c in tree.children(b):
                    fc = factors[c]
                    rows = _positions(fc.idx, fb.idx, m)
                    m2m[(b, c)] = fb.src_right[rows].T @ fc.src_right
            for bp in tree.interaction_list(b):
                fbp = factors[bp]
                rows = _positions(fbp.idx, fb.far_idx, m)
                m2l[(b, bp)] = fb.tgt_right[rows].T @ fbp.src_right
            if level > 2:
                fp = factors[tree.parent(b)]
                rows = _positions(fp.far_idx, fb.far_idx, m)
                l2l[b] = fb.tgt_right[rows].T @ fp.tgt_right

    near = {}
    for b in tree.leaf_boxes():
        idx = tree.indices(b)
        cols = tree.indices_of(tree.near_field(b))
        near[b] = (idx, cols, A[np.ix_(idx, cols)].copy())

    return FmmPlan(p, tree, symmetric, factors, m2m, m2l, l2l, near, frozenset(degenerate))


def _as_columns(plan, d):
    d = np.asarray(d, dtype=float)
    if d.shape[0] != plan.m or d.ndim not in (1, 2):
        raise ArgumentError(f"departure shape {d.shape} does not match {plan.m} observations")
    if not np.all(np.isfinite(d)):
        raise ArgumentError("departures must be finite")
    return d, d.reshape(plan.m, -1)


def near_field_apply(plan, d):
    d, D = _as_columns(plan, d)
    q = np.zeros_like(D)
    for b in plan.tree.leaf_boxes():
        idx, cols, block = plan.near[b]
        q[idx] = block @ D[cols]
    return q.reshape(d.shape)


def expansions(plan, d):
    """Multipole and local expansions (``phi``, ``psi``) for departures ``d``.

    ``psi`` on the leaf level is the completed local expansion; on coarser
    levels it is the expansion passed down to the children.
    """
    _, D = _as_columns(plan, d)
    tree, F = plan.tree, plan.factors
    n = D.shape[1]
    phi = {}
    # Step 1: leaf multipole expansions
    for b in tree.leaf_boxes():
        phi[b] = F[b].src_right.T @ D[F[b].idx]
    # Step 2: M2M upward pass
    for level in range(tree.levels - 1, 1, -1):
        for b in tree.box_ids(level):
            acc = np.zeros((F[b].rank, n))
            for c in tree.children(b):
                acc += plan.m2m[(b, c)] @ phi[c]
            phi[b] = acc
    # Step 3: M2L from the interaction list
    psi = {}
    for level in range(2, tree.levels + 1):
        for b in tree.box_ids(level):
            acc = np.zeros((F[b].rank, n))
            for bp in tree.interaction_list(b):
                acc += plan.m2l[(b, bp)] @ phi[bp]
            psi[b] = acc
    # Steps 4-5: L2L downward pass, parents complete before children
    for level in range(3, tree.levels + 1):
        for b in tree.box_ids(level):
            psi[b] = psi[b] + plan.l2l[b] @ psi[tree.parent(b)]
    return phi, psi


def far_field_apply(plan, d):
    d, D = _as_columns(plan, d)
    _, psi = expansions(plan, D)
    q = np.zeros_like(D)
    for b in plan.tree.leaf_boxes():
        f = plan.factors[b]
        q[f.idx] = f.tgt_left @ (f.tgt_values[:, None] * psi[b])
    return q.reshape(d.shape)


def apply(plan, d):
    """Approximate ``A d``: exact near field plus compressed far field."""
    return near_field_apply(plan, d) + far_field_apply(plan, d)


def apply_dense_oracle(A, d):
    A = numkernel.as_matrix(A)
    d = np.asarray(d, dtype=float)
    if A.shape[1] != d.shape[0]:
        raise ArgumentError(f"matrix {A.shape} and vector {d.shape} do not conform")
    return A @ d


def dense_far_field(A, tree, d):
    """``A d`` restricted to far-field entries, computed densely (test oracle)."""
    A = _check_matrix(A, tree)
    d = np.asarray(d, dtype=float)
    q = np.zeros_like(d)
    for b in tree.leaf_boxes():
        idx, far = _far_block(A, tree, b)
        q[idx] = A[np.ix_(idx, far)] @ d[far]
    return q


def max_far_rank(tree):
    """Largest clipped rank any box can have: ``p`` at or above this is exact."""
    best = 0
    for level in range(2, tree.levels + 1):
        for b in tree.box_ids(level):
            m_b = tree.occupancy(b)
            m_f = tree.indices_of(tree.far_field(b)).shape[0]
            best = max(best, min(m_b, m_f))
    return best
