"""Observation-error covariance construction, reconditioning and inversion."""

import enum
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import numkernel
from .errors import ArgumentError

EARTH_RADIUS_KM = 6371.0
# Above this many observations distances are evaluated per row block instead
# of being held in one m x m table.
DISTANCE_TABLE_MAX = 10_000
_ROW_BLOCK = 1024


class CorrelationKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    FOAR = "foar"
    SOAR = "soar"
    MATERN52 = "matern52"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "").replace(" ", "")
        aliases = {"markov": "foar", "matern": "matern52", "matérn52": "matern52"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ArgumentError(f"unknown correlation kind {value!r}") from None


class ReconditionMethod(str, enum.Enum):
    RIDGE_REGRESSION = "rr"
    MINIMUM_EIGENVALUE = "me"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"ridge": "rr", "ridgeregression": "rr", "minimumeigenvalue": "me", "mineig": "me"}
        key = aliases.get(key.replace("-", "").replace("_", ""), key)
        try:
            return cls(key)
        except ValueError:
            raise ArgumentError(f"unknown reconditioning method {value!r}") from None


@dataclass(frozen=True)
class CorrelationFunction:
    kind: CorrelationKind
    lengthscale: float  # km

    def __post_init__(self):
        object.__setattr__(self, "kind", CorrelationKind.parse(self.kind))
        ls = float(self.lengthscale)
        if not (math.isfinite(ls) and ls > 0):
            raise ArgumentError(f"lengthscale must be positive and finite, got {self.lengthscale}")
        object.__setattr__(self, "lengthscale", ls)

    def __call__(self, r):
        return correlate(self.kind, r, self.lengthscale)


@dataclass(frozen=True)
class ReconditionRecord:
    """What was done to the spectrum: ``parameter`` is the ridge shift for RR
    and the eigenvalue floor for ME. ``applied`` is False for a no-op."""

    method: ReconditionMethod
    kappa: float
    parameter: float
    applied: bool = True


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """A symmetric matrix together with how it was made.

    ``inverted`` marks a stored inverse (the weighting matrix) rather than a
    covariance. ``stddevs`` may be unknown (None) for loaded, modified models.
    """

    matrix: np.ndarray
    correlation: CorrelationFunction | None = None
    stddevs: np.ndarray | None = None
    recondition: ReconditionRecord | None = None
    inverted: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def m(self):
        return self.matrix.shape[0]


def correlate(kind, r, lengthscale):
    """Correlation at great-circle distance ``r`` (km) for one of the four kinds."""
    kind = CorrelationKind.parse(kind)
    x = np.abs(np.asarray(r, dtype=float)) / float(lengthscale)
    if kind is CorrelationKind.GAUSSIAN:
        return np.exp(-0.5 * x * x)
    if kind is CorrelationKind.FOAR:
        return np.exp(-x)
    if kind is CorrelationKind.SOAR:
        return (1.0 + x) * np.exp(-x)
    sx = math.sqrt(5.0) * x
    return (1.0 + sx + sx * sx / 3.0) * np.exp(-sx)


def great_circle_distance(a, b):
    """Haversine distance in km between ``a`` and ``b`` given as (lat, lon) degrees."""
    lat1, lon1 = np.radians(a[0]), np.radians(a[1])
    lat2, lon2 = np.radians(b[0]), np.radians(b[1])
    h = (np.sin((lat2 - lat1) / 2) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2)
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def _distance_rows(obs, rows):
    lat = np.radians(obs.lat)
    lon = np.radians(obs.lon)
    la, lo = lat[rows, None], lon[rows, None]
    h = (np.sin((lat[None, :] - la) / 2) ** 2
         + np.cos(la) * np.cos(lat[None, :]) * np.sin((lon[None, :] - lo) / 2) ** 2)
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def distance_matrix(obs):
    d = _distance_rows(obs, slice(None))
    np.fill_diagonal(d, 0.0)
    return numkernel.symmetrize_lower(d)


def build_correlation(corr, obs):
    """Dense correlation matrix ``C`` for ``obs`` under ``corr``; unit diagonal."""
    if obs.m <= DISTANCE_TABLE_MAX:
        C = corr(distance_matrix(obs))
    else:
        C = np.empty((obs.m, obs.m))
        for start in range(0, obs.m, _ROW_BLOCK):
            rows = slice(start, min(start + _ROW_BLOCK, obs.m))
            C[rows] = corr(_distance_rows(obs, rows))
    np.fill_diagonal(C, 1.0)
    return numkernel.symmetrize_lower(C)


def build_covariance(C, stddevs, correlation=None):
    """``R = D C D`` with ``D = diag(stddevs)``."""
    C = numkernel.check_symmetric(C)
    sd = np.asarray(stddevs, dtype=float)
    if sd.ndim == 0:
        sd = np.full(C.shape[0], float(sd))
    if sd.shape != (C.shape[0],):
        raise ArgumentError(f"{sd.shape[0]} standard deviations for a {C.shape[0]}x{C.shape[0]} matrix")
    if np.any(sd <= 0) or not np.all(np.isfinite(sd)):
        raise ArgumentError("standard deviations must be positive and finite")
    R = sd[:, None] * C * sd[None, :]
    return CovarianceModel(matrix=numkernel.symmetrize_lower(R), correlation=correlation, stddevs=sd)


def _check_kappa(kappa):
    kappa = float(kappa)
    if not (kappa > 1 and math.isfinite(kappa)):
        raise ArgumentError(f"required condition number must exceed 1, got {kappa}")
    return kappa


def ridge_shift(lam_max, lam_min, kappa):
    return (lam_max - lam_min * kappa) / (kappa - 1.0)


def recondition_rr(model, kappa):
    """Ridge regression: add ``delta * I`` so the condition number becomes ``kappa``.

    If the matrix is already at or below ``kappa`` nothing changes and a
    warning is issued; the record then carries ``delta = 0``.
    """
    kappa = _check_kappa(kappa)
    w = numkernel.sym_eigvals(model.matrix)
    delta = ridge_shift(w[0], w[-1], kappa)
    if delta <= 0:
        warnings.warn(
            f"condition number {w[0] / w[-1]:.6g} already <= {kappa:g}; ridge shift skipped",
            RuntimeWarning, stacklevel=2,
        )
        rec = ReconditionRecord(ReconditionMethod.RIDGE_REGRESSION, kappa, 0.0, applied=False)
        return replace(model, matrix=model.matrix.copy(), recondition=rec)
    R = model.matrix.copy()
    R[np.diag_indices_from(R)] += delta
    rec = ReconditionRecord(ReconditionMethod.RIDGE_REGRESSION, kappa, float(delta))
    return replace(model, matrix=R, recondition=rec)


def recondition_me(model, kappa):
    """Minimum eigenvalue: raise every eigenvalue below ``lambda_max / kappa`` to it."""
    kappa = _check_kappa(kappa)
    eig = numkernel.sym_eig(model.matrix)
    floor = eig.values[0] / kappa
    below = eig.values < floor
    rec = ReconditionRecord(ReconditionMethod.MINIMUM_EIGENVALUE, kappa, float(floor),
                            applied=bool(below.any()))
    if not below.any():
        return replace(model, matrix=model.matrix.copy(), recondition=rec)
    lam = np.maximum(eig.values, floor)
    R = numkernel.symmetrize_lower((eig.vectors * lam) @ eig.vectors.T)
    return replace(model, matrix=R, recondition=rec)


def recondition(model, method, kappa):
    method = ReconditionMethod.parse(method)
    if method is ReconditionMethod.RIDGE_REGRESSION:
        return recondition_rr(model, kappa)
    return recondition_me(model, kappa)


def inverse_weighting(model):
    """``A = R^{-1}`` through Cholesky; raises DefinitenessError when R is not SPD."""
    matrix = model.matrix if isinstance(model, CovarianceModel) else model
    return numkernel.spd_invert(matrix)


def restrict(model, keep):
    """Model on the observation subset ``keep`` (rows/columns deleted)."""
    keep = np.asarray(keep)
    sd = None if model.stddevs is None else model.stddevs[keep]
    return replace(model, matrix=model.matrix[np.ix_(keep, keep)].copy(), stddevs=sd)


@dataclass(frozen=True)
class SingularValueFacts:
    """Leading singular values of every box's far-field sub-matrix.

    ``box_values[b]`` holds up to ``p + 1`` values; boxes in ``truncated`` had
    fewer available than requested. ``matrix_values`` are the singular
    values of the whole matrix.
    """

    p: int
    box_values: dict
    truncated: frozenset
    matrix_values: np.ndarray

    def mean_value(self, k):
        """Mean of the k-th (1-based) singular value over boxes that have one."""
        vals = [v[k - 1] for v in self.box_values.values() if v.shape[0] >= k]
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def mean_next(self):
        return self.mean_value(self.p + 1)

    @property
    def sigma_max(self):
        return float(self.matrix_values[0])


def far_field_block(A, tree, b):
    """``A(I_{F_b}, I_b)``: rows in the far field of ``b``, columns in ``b``."""
    return A[np.ix_(tree.indices_of(tree.far_field(b)), tree.indices(b))]


def singular_value_facts(A, tree, p):
    A = numkernel.check_symmetric(A)
    if A.shape[0] != tree.m:
        raise ArgumentError(f"matrix is {A.shape[0]}x{A.shape[0]} but the tree holds {tree.m} observations")
    want = int(p) + 1
    values, short = {}, set()
    for level in range(2, tree.levels + 1):
        for b in tree.box_ids(level):
            block = far_field_block(A, tree, b)
            s = numkernel.singular_values(block) if block.size else np.zeros(0)
            if s.shape[0] < want:
                short.add(b)
            values[b] = s[:want].copy()
    sigma = np.sort(np.abs(numkernel.sym_eigvals(A)))[::-1]
    return SingularValueFacts(int(p), values, frozenset(short), sigma)
