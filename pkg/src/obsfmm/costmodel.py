"""Analytic flop counts and communication costs for parallel mat-vec schemes.

Logarithms are base 2 (message-passing tree depth). Nothing here measures or
simulates a machine.
"""

import enum
import math
from dataclasses import dataclass

from .errors import ArgumentError


class Scheme(str, enum.Enum):
    ROW_WISE = "row-wise"
    COLUMN_WISE = "column-wise"
    BLOCK_2D = "block-2d"
    SYMMETRIC = "symmetric"
    SVD_FMM = "svd-fmm"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-").replace(" ", "-")
        aliases = {"rowwise": "row-wise", "columnwise": "column-wise", "block": "block-2d",
                   "block2d": "block-2d", "svdfmm": "svd-fmm", "fmm": "svd-fmm"}
        key = aliases.get(key.replace("-", ""), key)
        try:
            return cls(key)
        except ValueError:
            raise ArgumentError(f"unknown parallelisation scheme {value!r}") from None


@dataclass(frozen=True)
class MachineParams:
    t_s: float  # startup time per message, seconds
    t_w: float  # transfer time per word, seconds
    B: int      # workers (= leaf boxes)
    p: int
    m: int

    def __post_init__(self):
        if self.t_s < 0 or self.t_w < 0:
            raise ArgumentError("t_s and t_w must be non-negative")
        if self.B < 1 or self.m < 1 or self.p < 0:
            raise ArgumentError("B and m must be positive, p non-negative")

    @property
    def s(self):
        return self.m / self.B


@dataclass(frozen=True)
class CostRow:
    operation: str
    participants: float
    message_size: float
    time: float
    upper_bound: bool
    size_formula: str
    time_formula: str


@dataclass(frozen=True)
class SchemeCost:
    scheme: Scheme
    rows: tuple


def flops_dense(m):
    m = int(m)
    if m < 1:
        raise ArgumentError("m must be positive")
    return 2 * m * m


def flops_svdfmm(m, s, p):
    """Apply-phase operation count ``18ms + 4mp + 64(m/s)p^2`` (setup excluded)."""
    if m <= 0 or s <= 0 or p < 0:
        raise ArgumentError("m and s must be positive and p non-negative")
    value = 18 * m * s + 4 * m * p + 64 * (m / s) * p * p
    return int(value) if float(value).is_integer() else value


def crossover_m(p, s_rule=None, m_max=10**7):
    """Smallest ``m`` with ``flops_svdfmm(m, s_rule(m), p) < flops_dense(m)``.

    ``s_rule`` maps ``m`` to the mean leaf occupancy; the default keeps 64
    leaf boxes (``s = m / 64``).
    """
    if s_rule is None:
        s_rule = lambda m: m / 64  # noqa: E731
    for m in range(1, m_max + 1):
        if flops_svdfmm(m, s_rule(m), p) < flops_dense(m):
            return m
    return None


def comm_cost(scheme, params):
    scheme = Scheme.parse(scheme)
    t_s, t_w, B, p, m = params.t_s, params.t_w, params.B, params.p, params.m
    logB = math.log2(B)
    rootB = math.sqrt(B)
    rows = []

    def add(op, participants, size, size_formula, time, time_formula, upper=False):
        rows.append(CostRow(op, participants, size, time, upper, size_formula, time_formula))

    if scheme is Scheme.ROW_WISE:
        add("all-to-all broadcast", B, m / B, "m/B",
            t_s * logB + t_w * m, "t_s*log(B) + t_w*m")
    elif scheme is Scheme.COLUMN_WISE:
        add("all-to-one reduction", B, m, "m",
            (t_s + t_w * m) * logB, "(t_s + t_w*m)*log(B)")
        add("scatter", B, m / B, "m/B",
            t_s * logB + t_w * m, "t_s*log(B) + t_w*m")
    elif scheme is Scheme.BLOCK_2D:
        for op in ("one-to-all broadcast", "all-to-one reduction"):
            add(op, rootB - 1, m / rootB, "m/sqrt(B)",
                (t_s + t_w * m / rootB) * math.log2(rootB),
                "(t_s + t_w*m/sqrt(B))*log(sqrt(B))")
    elif scheme is Scheme.SYMMETRIC:
        for op in ("all-to-all broadcast", "all-to-all reduction"):
            add(op, B, m / B, "~m/B",
                t_s * logB + t_w * m, "< t_s*log(B) + t_w*m", upper=True)
    else:
        add("all-to-one reduction", 4, p, "p",
            (t_s + t_w * p) * 2.0, "(t_s + t_w*p)*log(4)")
        add("all-to-all broadcast", B, max(2 * p, m / B), "p, 2p or m/B",
            t_s * logB + t_w * m, "< t_s*log(B) + t_w*m", upper=True)
        add("one-to-all broadcast", 4, p, "p",
            (t_s + t_w * p) * 2.0, "(t_s + t_w*p)*log(4)")
    return SchemeCost(scheme, tuple(rows))


CSV_HEADER = ("scheme", "operation", "participants", "message_size", "time_seconds", "upper_bound")


def cost_table(params, schemes=tuple(Scheme)):
    """Rows for every scheme, ready for ``csv.writer``."""
    out = []
    for scheme in schemes:
        for row in comm_cost(scheme, params).rows:
            out.append((Scheme.parse(scheme).value, row.operation, _num(row.participants),
                        _num(row.message_size), repr(float(row.time)), int(row.upper_bound)))
    return out


def _num(x):
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)
