"""
Brute-force ground truth on small grids.

The relative perimeter of a voxel set counts the interior faces between a
cell inside and a cell outside; faces on the cube boundary are free. The
exhaustive search walks all k-subsets of the N = n^d cells in colex order
(Gosper's hack) and updates the face count one flipped cell at a time.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .candidates import candidate_envelope
from .config import SETTINGS
from .errors import DomainError, SizeError
from .gaussian import SQRT_2PI, gaussian_profile

logger = logging.getLogger(__name__)

FULL_CAP = 25
SYMMETRY_CAP = 30
DATA_DIR = Path(__file__).resolve().parent / "data"


class VoxelSet:
    """Indicator over the n^d grid of (0,1)^d, row-major, with cached counts."""

    def __init__(self, dimension: int, grid_n: int, indicator: Optional[Sequence[bool]] = None):
        if dimension < 1 or grid_n < 1:
            raise DomainError(f"need dimension >= 1 and grid_n >= 1, got {dimension}, {grid_n}")
        size = grid_n ** dimension
        if indicator is None:
            bits = np.zeros(size, dtype=bool)
        else:
            bits = np.array(indicator, dtype=bool).ravel()
            if bits.size != size:
                raise DomainError(f"indicator has {bits.size} cells, expected {size}")
        self.dimension = dimension
        self.grid_n = grid_n
        self.indicator = bits
        self._strides = [grid_n ** (dimension - 1 - a) for a in range(dimension)]
        self.recount()

    # constructors

    @classmethod
    def empty(cls, dimension: int, grid_n: int) -> "VoxelSet":
        return cls(dimension, grid_n)

    @classmethod
    def full(cls, dimension: int, grid_n: int) -> "VoxelSet":
        return cls(dimension, grid_n, np.ones(grid_n ** dimension, dtype=bool))

    @classmethod
    def from_cells(cls, dimension: int, grid_n: int, cells: Iterable[int]) -> "VoxelSet":
        v = cls(dimension, grid_n)
        idx = np.fromiter(cells, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= v.size):
            raise IndexError(f"cell index out of range for {v.size} cells")
        v.indicator[idx] = True
        v.recount()
        return v

    @classmethod
    def from_mask(cls, dimension: int, grid_n: int, mask: int) -> "VoxelSet":
        size = grid_n ** dimension
        return cls.from_cells(dimension, grid_n, (i for i in range(size) if mask >> i & 1))

    @classmethod
    def from_bit_matrix(cls, text: str, dimension: int) -> "VoxelSet":
        blocks = [b for b in text.strip().split("\n\n") if b.strip()]
        rows = [line.strip() for block in blocks for line in block.strip().splitlines()]
        bits = "".join(rows)
        if set(bits) - {"0", "1"}:
            raise DomainError("bit matrix may only contain '0' and '1'")
        grid_n = round(len(bits) ** (1.0 / dimension))
        if grid_n ** dimension != len(bits):
            raise DomainError(f"{len(bits)} cells do not form a {dimension}-dimensional cubic grid")
        return cls(dimension, grid_n, [c == "1" for c in bits])

    # cached quantities

    @property
    def size(self) -> int:
        return self.indicator.size

    @property
    def cell_volume(self) -> float:
        return (1.0 / self.grid_n) ** self.dimension

    @property
    def face_area(self) -> float:
        return (1.0 / self.grid_n) ** (self.dimension - 1)

    @property
    def count(self) -> int:
        return self._count

    @property
    def faces(self) -> int:
        return self._faces

    @property
    def volume(self) -> float:
        return self._count * self.cell_volume

    @property
    def perimeter(self) -> float:
        return self._faces * self.face_area

    def mask(self) -> int:
        return sum(1 << int(i) for i in np.flatnonzero(self.indicator))

    def count_faces(self) -> int:
        grid = self.indicator.reshape((self.grid_n,) * self.dimension)
        total = 0
        for axis in range(self.dimension):
            lo = np.take(grid, np.arange(self.grid_n - 1), axis=axis)
            hi = np.take(grid, np.arange(1, self.grid_n), axis=axis)
            total += int(np.count_nonzero(lo != hi))
        return total

    def recount(self) -> None:
        self._count = int(np.count_nonzero(self.indicator))
        self._faces = self.count_faces()

    def neighbors(self, index: int) -> List[int]:
        out = []
        for stride in self._strides:
            coord = (index // stride) % self.grid_n
            if coord > 0:
                out.append(index - stride)
            if coord < self.grid_n - 1:
                out.append(index + stride)
        return out

    def flip(self, index: int) -> int:
        """Toggle one cell in place; returns the change in face count."""
        if not 0 <= index < self.size:
            raise IndexError(f"cell {index} out of range [0, {self.size})")
        state = self.indicator[index]
        delta = 0
        for j in self.neighbors(index):
            delta += 1 if self.indicator[j] == state else -1
        self.indicator[index] = not state
        self._count += -1 if state else 1
        self._faces += delta
        return delta

    def complement(self) -> "VoxelSet":
        return VoxelSet(self.dimension, self.grid_n, ~self.indicator)

    def copy(self) -> "VoxelSet":
        return VoxelSet(self.dimension, self.grid_n, self.indicator.copy())

    def to_bit_matrix(self) -> str:
        n, d = self.grid_n, self.dimension
        rows = ["".join("1" if b else "0" for b in row) for row in self.indicator.reshape(-1, n)]
        if d <= 2:
            return "\n".join(rows) + "\n"
        per_layer = n ** (d - 2)
        layers = ["\n".join(rows[i:i + per_layer]) for i in range(0, len(rows), per_layer)]
        return "\n\n".join(layers) + "\n"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VoxelSet):
            return NotImplemented
        return (
            self.dimension == other.dimension
            and self.grid_n == other.grid_n
            and bool(np.array_equal(self.indicator, other.indicator))
        )

    def __repr__(self) -> str:
        return f"VoxelSet(d={self.dimension}, n={self.grid_n}, cells={self._count}, faces={self._faces})"


def discrete_volume(v: VoxelSet) -> float:
    return v.volume


def discrete_perimeter(v: VoxelSet) -> float:
    return v.perimeter


def incremental_flip(v: VoxelSet, index: int) -> VoxelSet:
    """Flip ``index`` in place and return the same set."""
    v.flip(index)
    return v


@dataclass
class OracleResult:
    dimension: int
    grid_n: int
    k: int
    faces: int
    optima: List[int]
    evaluated: int
    symmetry: bool = False
    orbit_sizes: List[int] = field(default_factory=list)

    @property
    def perimeter(self) -> float:
        return self.faces * (1.0 / self.grid_n) ** (self.dimension - 1)

    @property
    def volume(self) -> float:
        return self.k * (1.0 / self.grid_n) ** self.dimension

    def optimal_sets(self) -> List[VoxelSet]:
        return [VoxelSet.from_mask(self.dimension, self.grid_n, m) for m in self.optima]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dimension": self.dimension,
            "grid_n": self.grid_n,
            "k": self.k,
            "faces": self.faces,
            "perimeter": self.perimeter,
            "optima": [s.to_bit_matrix() for s in self.optimal_sets()],
            "evaluated": self.evaluated,
            "symmetry": self.symmetry,
        }


def _neighbor_masks(d: int, n: int) -> Tuple[List[int], List[int]]:
    probe = VoxelSet(d, n)
    masks, degrees = [], []
    for i in range(probe.size):
        nbrs = probe.neighbors(i)
        masks.append(sum(1 << j for j in nbrs))
        degrees.append(len(nbrs))
    return masks, degrees


def _scan_partition(
    d: int,
    n: int,
    k: int,
    highs: Sequence[int],
    cells: Optional[Sequence[int]] = None,
    fixed: Optional[int] = None,
) -> Tuple[int, List[int], int]:
    """
    Minimum face count over k-subsets of ``cells`` (every cell by default)
    whose largest member is ``cells[high]`` for some ``high`` in ``highs``.
    A ``fixed`` cell outside ``cells`` joins every subset.
    Returns (faces, optimal masks in colex order, subsets evaluated).
    """
    nbr, deg = _neighbor_masks(d, n)
    cells = list(range(n ** d)) if cells is None else list(cells)
    best = math.inf
    optima: List[int] = []
    evaluated = 0
    state = 0
    faces = 0

    def toggle(cell: int) -> None:
        nonlocal state, faces
        inside_nbrs = (state & nbr[cell]).bit_count()
        if state >> cell & 1:
            faces += deg[cell] - 2 * (deg[cell] - inside_nbrs)
        else:
            faces += deg[cell] - 2 * inside_nbrs
        state ^= 1 << cell

    def record() -> None:
        nonlocal best, optima, evaluated
        evaluated += 1
        if faces < best:
            best = faces
            optima = [state]
        elif faces == best:
            optima.append(state)

    if k == 0:
        if fixed is not None:
            toggle(fixed)
        record()
        return int(best), optima, evaluated

    for high in highs:
        low_k = k - 1
        state, faces = 0, 0
        if fixed is not None:
            toggle(fixed)
        toggle(cells[high])
        current = (1 << low_k) - 1
        bits = current
        while bits:
            low = bits & -bits
            toggle(cells[low.bit_length() - 1])
            bits ^= low

        limit = 1 << high
        while True:
            record()
            if low_k == 0:
                break
            # Gosper's hack: next subset of the same size in colex order
            c = current & -current
            r = current + c
            nxt = (((r ^ current) >> 2) // c) | r
            if nxt >= limit:
                break
            changed = current ^ nxt
            while changed:
                low = changed & -changed
                toggle(cells[low.bit_length() - 1])
                changed ^= low
            current = nxt

    return int(best), optima, evaluated


def _symmetry_group(d: int, n: int) -> List[np.ndarray]:
    """Cell permutations induced by the hyperoctahedral group (axis permutations and reflections)."""
    coords = np.indices((n,) * d).reshape(d, -1)
    strides = np.array([n ** (d - 1 - a) for a in range(d)])
    perms = []
    for order in itertools.permutations(range(d)):
        for flips in itertools.product((False, True), repeat=d):
            image = coords[list(order)].copy()
            for a, f in enumerate(flips):
                if f:
                    image[a] = n - 1 - image[a]
            perms.append(strides @ image)
    return perms


def _apply(mask: int, perm: np.ndarray) -> int:
    out = 0
    for i, target in enumerate(perm):
        if mask >> i & 1:
            out |= 1 << int(target)
    return out


def canonical_mask(mask: int, group: Sequence[np.ndarray]) -> int:
    return min(_apply(mask, g) for g in group)


def _orbit_units(
    d: int, n: int, k: int, group: Sequence[np.ndarray]
) -> List[Tuple[Optional[List[int]], Optional[int], List[int], int]]:
    """
    Scan units covering one member of every orbit: the smallest cell is a
    cell-orbit minimum ``low`` and every other cell c > low has orbit
    minimum >= low. Each unit is (cells, fixed, highs, free count).
    """
    orbit_min = np.min(np.stack(group), axis=0)
    units = []
    for low in range(n ** d):
        if orbit_min[low] != low:
            continue
        allowed = [c for c in range(low + 1, n ** d) if orbit_min[c] >= low]
        free = k - 1
        if free > len(allowed):
            continue
        highs = list(range(free - 1, len(allowed))) if free > 0 else []
        units.append((allowed, low, highs, free))
    return units


def exhaustive_min(
    d: int,
    grid_n: int,
    k: int,
    symmetry: bool = False,
    workers: Optional[int] = None,
    show_progress: Optional[bool] = None,
) -> OracleResult:
    """
    Exact minimum of the discrete relative perimeter over all k-cell subsets.

    Work is split by the largest cell of the subset; partitions merge by
    (min, concatenation). With ``symmetry`` the search runs at min(k, N-k)
    over one member of each orbit of the cube's symmetry group, and the
    optima are reduced to one canonical representative per orbit.
    """
    if d < 1 or grid_n < 1:
        raise DomainError("exhaustive_min needs d >= 1 and grid_n >= 1")
    size = grid_n ** d
    cap = SYMMETRY_CAP if symmetry else FULL_CAP
    if size > cap:
        raise SizeError(
            f"{grid_n}^{d} = {size} cells exceed the exhaustive cap of {cap}"
            + ("" if symmetry else " (30 with the symmetry flag)"),
            cap,
        )
    if not 0 <= k <= size:
        raise DomainError(f"k must lie in [0, {size}], got {k}")

    flipped = symmetry and k > size - k
    k_scan = size - k if flipped else k
    full = (1 << size) - 1
    group = _symmetry_group(d, grid_n) if symmetry else []

    if k_scan == 0:
        faces, optima, evaluated = 0, [0], 1
    else:
        if symmetry:
            units = _orbit_units(d, grid_n, k_scan, group)
        else:
            units = [(None, None, list(range(k_scan - 1, size)), k_scan)]
        workers = workers or SETTINGS.workers
        show = SETTINGS.show_progress if show_progress is None else show_progress
        jobs = []
        for cells, fixed, highs, free in units:
            if not highs:
                jobs.append((free, [], cells, fixed))
            elif workers > 1:
                jobs.extend((free, c, cells, fixed) for c in (highs[i::workers] for i in range(workers)) if c)
            else:
                jobs.extend((free, [h], cells, fixed) for h in highs)
        faces, optima, evaluated = math.inf, [], 0

        def merge(part: Tuple[int, List[int], int]) -> None:
            nonlocal faces, optima, evaluated
            f, opt, ev = part
            evaluated += ev
            if f < faces:
                faces, optima = f, list(opt)
            elif f == faces:
                optima.extend(opt)

        desc = f"exhaustive d={d} n={grid_n} k={k}"
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_scan_partition, d, grid_n, *job) for job in jobs]
                for fut in tqdm(futures, desc=desc, disable=not show):
                    merge(fut.result())
        else:
            for job in tqdm(jobs, desc=desc, disable=not show):
                merge(_scan_partition(d, grid_n, *job))

    if flipped:
        optima = [full ^ m for m in optima]

    orbit_sizes: List[int] = []
    if symmetry:
        optima = sorted({canonical_mask(m, group) for m in optima})
        orbit_sizes = [len({_apply(m, g) for g in group}) for m in optima]
    else:
        optima = sorted(optima)

    logger.info("exhaustive d=%d n=%d k=%d: %d faces, %d optima, %d subsets", d, grid_n, k, faces, len(optima), evaluated)
    return OracleResult(d, grid_n, k, int(faces), optima, evaluated, symmetry, orbit_sizes)


def oracle_table(
    d: int,
    grid_n: int,
    ks: Optional[Sequence[int]] = None,
    symmetry: bool = False,
    workers: Optional[int] = None,
) -> List[Dict[str, Any]]:
    """
    One row per k: exhaustive minimum, the Gaussian lower bound with its
    discretization slack 2d/n, and the ratio to the continuum candidate value.
    """
    size = grid_n ** d
    ks = list(range(1, size // 2 + 1)) if ks is None else list(ks)
    slack = 2.0 * d / grid_n
    rows = []
    for k in ks:
        res = exhaustive_min(d, grid_n, k, symmetry=symmetry, workers=workers)
        volume = res.volume
        bound = SQRT_2PI * float(gaussian_profile(volume))
        reference = float(candidate_envelope(d, [volume]).values[0])
        rows.append({
            "k": k,
            "volume": volume,
            "faces": res.faces,
            "perimeter": res.perimeter,
            "optima": len(res.optima),
            "masks": list(res.optima),
            "gaussian_bound": bound,
            "bound_slack": res.perimeter - (bound - slack),
            "continuum_ratio": res.perimeter / reference if reference > 0.0 else None,
        })
    return rows


def golden_path(d: int, grid_n: int) -> Path:
    return DATA_DIR / f"oracle_d{d}_n{grid_n}.json"


def load_golden(d: int, grid_n: int) -> Dict[str, Any]:
    path = golden_path(d, grid_n)
    if not path.exists():
        raise FileNotFoundError(f"no golden table for d={d}, n={grid_n}: {path}")
    with path.open("r", encoding="utf-8") as f:
        return json.load(f)


def compare_golden(rows: Sequence[Dict[str, Any]], golden: Dict[str, Any]) -> List[str]:
    """Mismatches between a computed table and the stored one (empty when equal)."""
    expected = {row["k"]: row for row in golden["rows"]}
    problems = []
    for row in rows:
        ref = expected.get(row["k"])
        if ref is None:
            problems.append(f"k={row['k']}: not in golden file")
            continue
        if row["faces"] != ref["faces"] or row["perimeter"] != ref["perimeter"]:
            problems.append(
                f"k={row['k']}: got faces={row['faces']} perimeter={row['perimeter']}, "
                f"golden faces={ref['faces']} perimeter={ref['perimeter']}"
            )
        if "masks" in ref and sorted(row.get("masks", [])) != sorted(ref["masks"]):
            problems.append(f"k={row['k']}: optimal sets {sorted(row.get('masks', []))} differ from golden {sorted(ref['masks'])}")
    missing = set(expected) - {row["k"] for row in rows}
    problems.extend(f"k={k}: missing from computed table" for k in sorted(missing))
    return problems
