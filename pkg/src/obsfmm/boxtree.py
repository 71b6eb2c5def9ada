"""Quadtree partition of the observation domain with Z-order box numbering.

Boxes of every level except the root are numbered globally: level ``l``
occupies ``[(4**l - 4) // 3, (4**(l + 1) - 4) // 3)``. Inside a level the
local number is the Morton code of the box's grid position, with the x
(longitude) coordinate in the even bits and y (latitude) in the odd bits.
With this convention the children of ``b`` are ``4b+4 .. 4b+7``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ArgumentError, DomainError, LevelError

MIN_LEVELS = 3
DEFAULT_LEAF_CAP = 64


@dataclass(frozen=True)
class ObservationSet:
    """Observation locations in degrees; index ``i`` is position ``i``."""

    lat: np.ndarray
    lon: np.ndarray

    def __post_init__(self):
        lat = np.array(self.lat, dtype=float).ravel()
        lon = np.array(self.lon, dtype=float).ravel()
        if lat.shape != lon.shape:
            raise ArgumentError("lat and lon must have the same length")
        if lat.size < 1:
            raise ArgumentError("an observation set needs at least one point")
        if not (np.all(np.isfinite(lat)) and np.all(np.isfinite(lon))):
            raise ArgumentError("coordinates must be finite")
        if np.any(np.abs(lat) > 90):
            raise ArgumentError("latitude outside [-90, 90]")
        lat.flags.writeable = False
        lon.flags.writeable = False
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)

    @property
    def m(self):
        return self.lat.shape[0]

    def __len__(self):
        return self.m

    def subset(self, keep):
        """Observations at positions ``keep`` (re-indexed densely, order kept)."""
        keep = np.asarray(keep)
        return ObservationSet(self.lat[keep], self.lon[keep])

    def bounds(self):
        return (float(self.lon.min()), float(self.lon.max()),
                float(self.lat.min()), float(self.lat.max()))


# -- index arithmetic ------------------------------------------------------

def level_offset(level):
    return (4**level - 4) // 3


def level_of(b):
    b = int(b)
    if b < 0:
        raise ArgumentError(f"box id must be non-negative, got {b}")
    level = 1
    while b >= level_offset(level + 1):
        level += 1
    return level


def level_boxes(level):
    return range(level_offset(level), level_offset(level + 1))


def children_ids(b):
    b = int(b)
    return (4 * b + 4, 4 * b + 5, 4 * b + 6, 4 * b + 7)


def parent(b):
    b = int(b)
    if b < 4:
        raise LevelError(f"box {b} is at level 1; its parent is the unnumbered root")
    return (b - 4) // 4


def _spread_bits(v):
    out = 0
    bit = 0
    while v:
        out |= (v & 1) << (2 * bit)
        v >>= 1
        bit += 1
    return out


def _compact_bits(code):
    out = 0
    bit = 0
    while code:
        out |= (code & 1) << bit
        code >>= 2
        bit += 1
    return out


def morton_encode(x, y):
    return _spread_bits(int(x)) | (_spread_bits(int(y)) << 1)


def morton_decode(code):
    code = int(code)
    return _compact_bits(code), _compact_bits(code >> 1)


def box_grid_xy(b):
    level = level_of(b)
    return morton_decode(int(b) - level_offset(level))


def box_id(level, x, y):
    return level_offset(level) + morton_encode(x, y)


def choose_levels(m, leaf_cap=DEFAULT_LEAF_CAP):
    """Smallest level count >= 3 whose mean leaf occupancy is at most ``leaf_cap``."""
    if leaf_cap <= 0:
        raise ArgumentError("leaf_cap must be positive")
    levels = MIN_LEVELS
    while m / 4**levels > leaf_cap:
        levels += 1
    return levels


# -- the tree --------------------------------------------------------------

class BoxTree:
    """Nested boxes over a rectangle in (lon, lat), levels 1..``levels``.

    Build with :func:`build_tree`. All index arrays are read-only.
    """

    def __init__(self, bounds, levels, leaf_x, leaf_y, m):
        self.bounds = tuple(float(v) for v in bounds)
        self.levels = int(levels)
        self.m = int(m)
        self._leaf_x = leaf_x
        self._leaf_y = leaf_y
        self._box_indices = self._bin_all_levels()

    def _bin_all_levels(self):
        lists = {}
        order = np.arange(self.m)
        for level in range(1, self.levels + 1):
            shift = self.levels - level
            codes = np.array(
                [morton_encode(x, y) for x, y in zip(self._leaf_x >> shift, self._leaf_y >> shift)],
                dtype=np.int64,
            ) if self.m else np.zeros(0, dtype=np.int64)
            perm = np.lexsort((order, codes))
            sorted_codes = codes[perm]
            n_boxes = 4**level
            starts = np.searchsorted(sorted_codes, np.arange(n_boxes), side="left")
            ends = np.searchsorted(sorted_codes, np.arange(n_boxes), side="right")
            offset = level_offset(level)
            for local in range(n_boxes):
                idx = perm[starts[local]:ends[local]].copy()
                idx.flags.writeable = False
                lists[offset + local] = idx
        return lists

    @property
    def leaf_level(self):
        return self.levels

    def box_ids(self, level):
        return level_boxes(level)

    def leaf_boxes(self):
        return level_boxes(self.levels)

    def _check_box(self, b):
        b = int(b)
        if b < 0 or b >= level_offset(self.levels + 1):
            raise ArgumentError(f"box {b} is not in a {self.levels}-level tree")
        return b

    def level_of(self, b):
        return level_of(self._check_box(b))

    def indices(self, b):
        """Observation indices in box ``b``, ascending."""
        return self._box_indices[self._check_box(b)]

    def occupancy(self, b):
        return self.indices(b).shape[0]

    def children(self, b):
        b = self._check_box(b)
        if level_of(b) >= self.levels:
            raise LevelError(f"box {b} is a leaf box")
        return children_ids(b)

    def parent(self, b):
        return parent(self._check_box(b))

    def _neighbourhood(self, b):
        level = level_of(b)
        x, y = box_grid_xy(b)
        n = 2**level
        out = []
        for yy in range(max(0, y - 1), min(n, y + 2)):
            for xx in range(max(0, x - 1), min(n, x + 2)):
                out.append(box_id(level, xx, yy))
        return tuple(sorted(out))

    def _require_level2(self, b):
        b = self._check_box(b)
        if level_of(b) < 2:
            raise LevelError(f"box {b} is at level 1; near/far fields start at level 2")
        return b

    def near_field(self, b):
        """``b`` and its same-level touching neighbours, ascending."""
        return self._near_cache[self._require_level2(b)]

    def far_field(self, b):
        return self._far_cache[self._require_level2(b)]

    def interaction_list(self, b):
        """Far-field boxes of ``b`` that are children of its parent's near field."""
        return self._interaction_cache[self._require_level2(b)]

    @cached_property
    def _near_cache(self):
        return {b: self._neighbourhood(b)
                for level in range(1, self.levels + 1) for b in level_boxes(level)}

    @cached_property
    def _far_cache(self):
        out = {}
        for level in range(2, self.levels + 1):
            for b in level_boxes(level):
                near = set(self._near_cache[b])
                out[b] = tuple(c for c in level_boxes(level) if c not in near)
        return out

    @cached_property
    def _interaction_cache(self):
        out = {}
        for level in range(2, self.levels + 1):
            for b in level_boxes(level):
                if level == 2:
                    # level-1 neighbourhood is the whole level
                    out[b] = self._far_cache[b]
                    continue
                far = set(self._far_cache[b])
                cands = (c for nb in self._near_cache[parent(b)] for c in children_ids(nb))
                out[b] = tuple(sorted(c for c in cands if c in far))
        return out

    def indices_of(self, boxes):
        """Concatenated observation indices of ``boxes`` in ascending box order."""
        boxes = sorted({self._check_box(b) for b in boxes})
        if not boxes:
            return np.zeros(0, dtype=np.intp)
        if len({level_of(b) for b in boxes}) > 1:
            raise ArgumentError("indices_of needs boxes from a single level")
        return np.concatenate([self._box_indices[b] for b in boxes])

    def summary_rows(self):
        for level in range(1, self.levels + 1):
            for b in level_boxes(level):
                x, y = box_grid_xy(b)
                yield b, level, x, y, self.occupancy(b)

    def summary_table(self):
        """Tab-separated debugging table, one box per line."""
        lines = ["#box\tlevel\tx\ty\toccupancy"]
        lines += ["\t".join(str(v) for v in row) for row in self.summary_rows()]
        return "\n".join(lines) + "\n"


def _padded_bounds(obs, bounds):
    if bounds is not None:
        lon0, lon1, lat0, lat1 = (float(v) for v in bounds)
        if not (lon1 > lon0 and lat1 > lat0):
            raise DomainError(f"bounding rectangle {bounds} has zero area")
        if (obs.lon.min() < lon0 or obs.lon.max() > lon1
                or obs.lat.min() < lat0 or obs.lat.max() > lat1):
            raise DomainError("observations fall outside the given bounding rectangle")
        return lon0, lon1, lat0, lat1
    lon0, lon1, lat0, lat1 = obs.bounds()
    wx, wy = lon1 - lon0, lat1 - lat0
    if wx == 0 and wy == 0:
        if obs.m > 1:
            raise DomainError("all observations are coincident")
        wx = wy = 1.0
        lon0 -= 0.5
        lat0 -= 0.5
    elif wx == 0:
        lon0 -= wy / 2
        wx = wy
    elif wy == 0:
        lat0 -= wx / 2
        wy = wx
    return lon0, lon0 + wx, lat0, lat0 + wy


def build_tree(obs, levels, bounds=None):
    """Bin ``obs`` into a ``levels``-level quadtree.

    ``bounds`` is ``(lon_min, lon_max, lat_min, lat_max)``; the default is the
    minimal rectangle covering the observations. Cells are half-open
    ``[lo, hi)`` except on the rectangle's maximum edges, which are closed.
    """
    levels = int(levels)
    if levels < MIN_LEVELS:
        raise ArgumentError(f"need at least {MIN_LEVELS} levels, got {levels}")
    lon0, lon1, lat0, lat1 = _padded_bounds(obs, bounds)
    n = 2**levels
    ix = np.floor((obs.lon - lon0) * n / (lon1 - lon0)).astype(np.int64)
    iy = np.floor((obs.lat - lat0) * n / (lat1 - lat0)).astype(np.int64)
    ix = np.clip(ix, 0, n - 1)
    iy = np.clip(iy, 0, n - 1)
    return BoxTree((lon0, lon1, lat0, lat1), levels, ix, iy, obs.m)
