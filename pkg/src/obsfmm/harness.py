"""Synthetic observation experiments: grids, departures, error metrics, sweeps.

A scenario is a cartesian sweep over correlation kinds, lengthscales,
reconditioning choices and missing-observation fractions. For every sweep
point the covariance is built, reconditioned and inverted, one set of
departure vectors is sampled, and the SVD-FMM product is compared with the
dense product for each rank. Results are rows of a fixed CSV schema.

Seeds: sweep point ``k`` of a scenario with master seed ``s`` draws its
departures from ``SeedSequence(s, spawn_key=(k, 1))`` and its missing-
observation pattern from ``SeedSequence(s, spawn_key=(k, 0))``.
"""

import configparser
import csv
import enum
import itertools
import math
import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import covmodel, numkernel, svdfmm
from .boxtree import DEFAULT_LEAF_CAP, ObservationSet, build_tree, choose_levels
from .covmodel import CorrelationFunction, CorrelationKind, ReconditionMethod
from .errors import ArgumentError, ObsFmmError

BACKGROUND_STDDEV = 0.6
BACKGROUND_LENGTHSCALE_KM = 20.0
RESULTS_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GridSpec:
    lat_range: tuple = (54.0, 60.0)
    lon_range: tuple = (-6.0, 6.0)
    lat_count: int = 48
    lon_count: int = 72

    def __post_init__(self):
        if self.lat_count < 2 or self.lon_count < 2:
            raise ArgumentError("grid needs at least 2 points per axis")
        if not (self.lat_range[1] > self.lat_range[0] and self.lon_range[1] > self.lon_range[0]):
            raise ArgumentError("grid ranges must have positive extent")

    @property
    def m(self):
        return self.lat_count * self.lon_count

    @property
    def bounds(self):
        return (self.lon_range[0], self.lon_range[1], self.lat_range[0], self.lat_range[1])


def generate_grid(grid=GridSpec()):
    """Regular grid, endpoints included, latitude as the outer (slow) index."""
    lat = np.linspace(grid.lat_range[0], grid.lat_range[1], grid.lat_count)
    lon = np.linspace(grid.lon_range[0], grid.lon_range[1], grid.lon_count)
    LA, LO = np.meshgrid(lat, lon, indexing="ij")
    return ObservationSet(LA.ravel(), LO.ravel())


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def background_covariance(obs):
    C = covmodel.build_correlation(CorrelationFunction("soar", BACKGROUND_LENGTHSCALE_KM), obs)
    return BACKGROUND_STDDEV**2 * C


def sample_departures(R, obs, n, seed):
    """``n`` departures from ``N(0, R + B)``; returns shape ``(n, m)``.

    ``B`` is a SOAR background covariance (20 km, standard deviation 0.6).
    """
    matrix = R.matrix if isinstance(R, covmodel.CovarianceModel) else np.asarray(R, dtype=float)
    if matrix.shape[0] != obs.m:
        raise ArgumentError("covariance and observation set sizes differ")
    return numkernel.chol_sample(matrix + background_covariance(obs), _rng(seed), n)


def log_rmse(q_fmm, q_ref):
    """``log10`` of the RMSE between two vectors; ``None`` when they are identical."""
    q_fmm = np.asarray(q_fmm, dtype=float)
    q_ref = np.asarray(q_ref, dtype=float)
    if q_fmm.shape != q_ref.shape:
        raise ArgumentError(f"shapes differ: {q_fmm.shape} vs {q_ref.shape}")
    rmse = math.sqrt(float(np.mean((q_fmm - q_ref) ** 2)))
    if rmse == 0.0:
        return None
    return math.log10(rmse)


def remove_observations(obs, fraction, seed):
    """Drop a uniformly random ``fraction`` of observations.

    Returns the surviving set (re-indexed densely) and the kept original
    indices, in ascending order.
    """
    fraction = float(fraction)
    if not 0.0 <= fraction < 1.0:
        raise ArgumentError(f"fraction must lie in [0, 1), got {fraction}")
    n_drop = int(round(fraction * obs.m))
    drop = _rng(seed).choice(obs.m, size=n_drop, replace=False)
    keep = np.setdiff1d(np.arange(obs.m), drop)
    return obs.subset(keep), keep


def observation_cost(plan, d):
    """Observation penalty ``0.5 d^T A d`` with ``A d`` from the plan."""
    d = np.asarray(d, dtype=float)
    return 0.5 * float(d @ svdfmm.apply(plan, d))


# -- scenarios -------------------------------------------------------------

class ScenarioKind(str, enum.Enum):
    RANK_SWEEP = "rank-sweep"
    LENGTHSCALE_SWEEP = "lengthscale-sweep"
    RECONDITION_COMPARE = "recondition-compare"
    CORRELATION_COMPARE = "correlation-compare"
    MISSING_OBS = "missing-obs"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"ranksweep": "rank-sweep", "lengthscalesweep": "lengthscale-sweep",
                   "reconditioncompare": "recondition-compare",
                   "correlationcompare": "correlation-compare", "missingobs": "missing-obs"}
        key = aliases.get(key.replace("-", ""), key)
        try:
            return cls(key)
        except ValueError:
            raise ArgumentError(f"unknown scenario kind {value!r}") from None


@dataclass(frozen=True)
class Recondition:
    method: ReconditionMethod
    kappa: float

    @classmethod
    def parse(cls, text):
        text = str(text).strip().lower()
        if text in ("", "none"):
            return None
        method, sep, kappa = text.partition(":")
        if not sep:
            raise ArgumentError(f"reconditioning must look like 'rr:1000', got {text!r}")
        return cls(ReconditionMethod.parse(method), float(kappa))

    def label(self):
        return f"{self.method.value}:{self.kappa:g}"


_DEFAULTS = {
    ScenarioKind.RANK_SWEEP: dict(families=("foar", "soar"), lengthscales=(80.0,)),
    ScenarioKind.LENGTHSCALE_SWEEP: dict(families=("soar",), lengthscales=(80.0, 160.0, 240.0)),
    ScenarioKind.RECONDITION_COMPARE: dict(
        families=("soar",), lengthscales=(80.0,),
        reconditions=tuple(f"{m}:{k}" for m in ("rr", "me") for k in (1000, 2000, 3000))),
    ScenarioKind.CORRELATION_COMPARE: dict(
        families=("gaussian", "foar", "soar", "matern52"), lengthscales=(80.0,),
        reconditions=("rr:1000",)),
    ScenarioKind.MISSING_OBS: dict(
        families=("soar",), lengthscales=(80.0,), missing_fractions=(0.0, 0.1, 0.25)),
}


@dataclass(frozen=True)
class ExperimentScenario:
    kind: ScenarioKind
    name: str = ""
    families: tuple | None = None
    lengthscales: tuple | None = None
    reconditions: tuple | None = None
    ranks: tuple = tuple(range(1, 11))
    realizations: int = 100
    seed: int = 0
    grid: GridSpec = field(default_factory=GridSpec)
    missing_fractions: tuple | None = None
    stddev: float = 1.0
    leaf_cap: int = DEFAULT_LEAF_CAP
    levels: int | None = None
    max_missing_fraction: float = 0.25

    def __post_init__(self):
        kind = ScenarioKind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        defaults = {"reconditions": (None,), "missing_fractions": (0.0,), **_DEFAULTS[kind]}
        for key, value in defaults.items():
            if getattr(self, key) is None:
                object.__setattr__(self, key, value)
        object.__setattr__(self, "families",
                           tuple(CorrelationKind.parse(f) for f in self.families))
        object.__setattr__(self, "lengthscales", tuple(float(v) for v in self.lengthscales))
        object.__setattr__(self, "reconditions", tuple(
            r if (r is None or isinstance(r, Recondition)) else Recondition.parse(r)
            for r in self.reconditions))
        object.__setattr__(self, "ranks", tuple(int(p) for p in self.ranks))
        object.__setattr__(self, "missing_fractions", tuple(float(f) for f in self.missing_fractions))
        if not self.name:
            object.__setattr__(self, "name", kind.value)
        if self.realizations < 1:
            raise ArgumentError("realizations must be at least 1")
        if not self.ranks or min(self.ranks) < 1:
            raise ArgumentError("rank range must be non-empty and positive")
        if not self.families or not self.lengthscales:
            raise ArgumentError("need at least one correlation kind and lengthscale")
        for f in self.missing_fractions:
            if not 0.0 <= f <= self.max_missing_fraction:
                raise ArgumentError(f"missing fraction {f} outside [0, {self.max_missing_fraction}]")

    def sweep_points(self):
        return list(itertools.product(self.families, self.lengthscales,
                                      self.reconditions, self.missing_fractions))


@dataclass
class ResultRow:
    scenario: str
    point: int
    family: str
    lengthscale: float
    recondition: str
    missing_fraction: float
    m: int
    p: int
    mean_log_rmse: float
    log_mean_rmse: float
    stderr_log_rmse: float
    mean_s_next: float
    exact_count: int
    realizations: int
    seed: int
    status: str
    wall_time: float = 0.0


RESULT_COLUMNS = [f.name for f in fields(ResultRow)]


def _point_rng(seed, point, stream):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(point, stream)))


def prepare_point(sc, family, lengthscale, recon, fraction, point):
    """Observation set, covariance model, weighting matrix and tree for one sweep point."""
    full = generate_grid(sc.grid)
    obs = full
    if fraction > 0:
        obs, _ = remove_observations(full, fraction, _point_rng(sc.seed, point, 0))
    corr = CorrelationFunction(family, lengthscale)
    model = covmodel.build_covariance(covmodel.build_correlation(corr, obs), sc.stddev, corr)
    if recon is not None:
        model = covmodel.recondition(model, recon.method, recon.kappa)
    A = covmodel.inverse_weighting(model)
    levels = sc.levels or choose_levels(full.m, sc.leaf_cap)
    tree = build_tree(obs, levels, bounds=sc.grid.bounds)
    return obs, model, A, tree


def mean_singular_value(svds, k):
    """Mean k-th (1-based) singular value over all boxes that have one."""
    vals = [s.values[k - 1] for s in svds.values() if s.values.shape[0] >= k]
    return float(np.mean(vals)) if vals else float("nan")


def _summarise(logs, rmses):
    finite = [v for v in logs if v is not None]
    exact = len(logs) - len(finite)
    if not finite:
        return float("nan"), float("nan"), float("nan"), exact
    arr = np.array(finite)
    stderr = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else float("nan")
    mean_rmse = float(np.mean(rmses))
    return float(arr.mean()), math.log10(mean_rmse) if mean_rmse > 0 else float("nan"), stderr, exact


def run_point(sc, point, family, lengthscale, recon, fraction):
    label = recon.label() if recon else "none"
    base = dict(scenario=sc.name, point=point, family=family.value, lengthscale=lengthscale,
                recondition=label, missing_fraction=fraction, realizations=sc.realizations,
                seed=sc.seed)
    t0 = time.perf_counter()
    try:
        obs, model, A, tree = prepare_point(sc, family, lengthscale, recon, fraction, point)
        D = sample_departures(model, obs, sc.realizations, _point_rng(sc.seed, point, 1)).T
        ref = A @ D
        svds = svdfmm.factorize(A, tree)
    except (ObsFmmError, np.linalg.LinAlgError) as exc:
        return [ResultRow(**base, m=0, p=p, mean_log_rmse=float("nan"),
                          log_mean_rmse=float("nan"), stderr_log_rmse=float("nan"),
                          mean_s_next=float("nan"), exact_count=0,
                          status=f"failed: {type(exc).__name__}: {exc}",
                          wall_time=time.perf_counter() - t0) for p in sc.ranks]
    rows = []
    for p in sc.ranks:
        t1 = time.perf_counter()
        plan = svdfmm.plan_build(A, tree, p, svds)
        Q = svdfmm.apply(plan, D)
        logs = [log_rmse(Q[:, k], ref[:, k]) for k in range(D.shape[1])]
        rmses = np.sqrt(np.mean((Q - ref) ** 2, axis=0))
        mean_log, log_mean, stderr, exact = _summarise(logs, rmses)
        rows.append(ResultRow(**base, m=obs.m, p=p, mean_log_rmse=mean_log,
                              log_mean_rmse=log_mean, stderr_log_rmse=stderr,
                              mean_s_next=mean_singular_value(svds, p + 1), exact_count=exact,
                              status="exact" if exact == len(logs) else "ok",
                              wall_time=time.perf_counter() - t1))
    return rows


def run_scenario(sc):
    rows = []
    for point, (family, ls, recon, frac) in enumerate(sc.sweep_points()):
        rows.extend(run_point(sc, point, family, ls, recon, frac))
    return rows


# -- config and CSV --------------------------------------------------------

def _floats(text):
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _ranks(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        out.extend(range(int(lo), int(hi) + 1) if sep else [int(lo)])
    return tuple(out)


def parse_scenario_config(text):
    """Scenario from flat ``key = value`` text (``#`` starts a comment)."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",))
    try:
        parser.read_string("[scenario]\n" + text)
    except configparser.Error as exc:
        raise ArgumentError(f"bad scenario config: {exc}") from None
    cfg = dict(parser["scenario"])
    known = {"scenario", "name", "families", "lengthscales", "recondition", "ranks",
             "realizations", "seed", "lat_range", "lon_range", "lat_count", "lon_count",
             "missing_fractions", "stddev", "leaf_cap", "levels", "max_missing_fraction"}
    unknown = set(cfg) - known
    if unknown:
        raise ArgumentError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "scenario" not in cfg:
        raise ArgumentError("config must set 'scenario'")
    kw = {"kind": cfg["scenario"]}
    try:
        if "name" in cfg:
            kw["name"] = cfg["name"]
        if "families" in cfg:
            kw["families"] = tuple(f.strip() for f in cfg["families"].split(",") if f.strip())
        if "lengthscales" in cfg:
            kw["lengthscales"] = _floats(cfg["lengthscales"])
        if "recondition" in cfg:
            kw["reconditions"] = tuple(Recondition.parse(r) for r in cfg["recondition"].split(","))
        if "ranks" in cfg:
            kw["ranks"] = _ranks(cfg["ranks"])
        for key in ("realizations", "seed", "leaf_cap", "levels"):
            if key in cfg:
                kw[key] = int(cfg[key])
        for key in ("stddev", "max_missing_fraction"):
            if key in cfg:
                kw[key] = float(cfg[key])
        if "missing_fractions" in cfg:
            kw["missing_fractions"] = _floats(cfg["missing_fractions"])
        grid = {}
        for key in ("lat_range", "lon_range"):
            if key in cfg:
                grid[key] = _floats(cfg[key])
        for key in ("lat_count", "lon_count"):
            if key in cfg:
                grid[key] = int(cfg[key])
        if grid:
            kw["grid"] = GridSpec(**grid)
    except ValueError as exc:
        raise ArgumentError(f"bad scenario config value: {exc}") from None
    return ExperimentScenario(**kw)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_results(fh, rows, timings=False):
    """CSV with a schema-version comment line. Wall time is only written when
    ``timings`` is set, so default output is reproducible byte for byte."""
    cols = RESULT_COLUMNS if timings else [c for c in RESULT_COLUMNS if c != "wall_time"]
    fh.write(f"# obsfmm results schema {RESULTS_SCHEMA_VERSION}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        w.writerow([_fmt(getattr(row, c)) for c in cols])
