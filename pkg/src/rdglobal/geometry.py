"""Treatment boundaries, signed distances and nearest boundary points.

A boundary is a finite set of (d-1)-simplices in R^d (segments when d = 2)
together with a membership rule for the treated region.  Distances to the
boundary are exact: each point is projected onto every face of every simplex
and the closest admissible projection is kept.  The sign of the distance is
taken from the membership rule, never from simplex orientation; points on
the boundary get ``g = 0`` and count as treated.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "HalfspaceRule",
    "PolygonRule",
    "CallableRule",
    "BoundaryGeometry",
    "SignedProjection",
    "Projections",
    "signed_distance",
    "nearest_boundary_point",
    "project_dataset",
    "quadrant_boundary",
    "read_boundary_file",
    "format_boundary_file",
]

_ATOL = 1e-12


class HalfspaceRule:
    """Treated iff ``normal_j . x >= offset_j`` for every row ``j``."""

    kind = "halfspace-intersection"

    def __init__(self, normals, offsets):
        self.normals = np.atleast_2d(np.asarray(normals, dtype=float))
        self.offsets = np.atleast_1d(np.asarray(offsets, dtype=float))
        if self.normals.shape[0] != self.offsets.shape[0]:
            raise ConfigurationError("halfspace normals and offsets differ in length")
        if self.normals.shape[0] == 0:
            raise ConfigurationError("halfspace rule needs at least one row")

    @property
    def dimension(self) -> int:
        return self.normals.shape[1]

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        lhs = X @ self.normals.T
        scale = 1.0 + np.abs(self.offsets)
        return np.all(lhs >= self.offsets - _ATOL * scale, axis=1)


class PolygonRule:
    """Even-odd rule for a simple polygon in the plane; edges count as inside."""

    kind = "polygon"

    def __init__(self, vertices):
        self.vertices = np.asarray(vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ConfigurationError("polygon membership is only defined for d = 2")
        if len(self.vertices) < 3:
            raise ConfigurationError("polygon needs at least three vertices")

    dimension = 2

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        a = self.vertices
        b = np.roll(a, -1, axis=0)
        px, py = X[:, 0:1], X[:, 1:2]
        ax, ay, bx, by = a[:, 0], a[:, 1], b[:, 0], b[:, 1]
        straddles = (ay > py) != (by > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = ax + (py - ay) * (bx - ax) / (by - ay)
        crossings = np.sum(straddles & (px < x_cross), axis=1)
        inside = crossings % 2 == 1
        # points on an edge are inside
        ab = b - a
        lengths = np.einsum("ij,ij->i", ab, ab)
        t = ((px - ax) * ab[:, 0] + (py - ay) * ab[:, 1]) / lengths
        t = np.clip(t, 0.0, 1.0)
        dx = ax + t * ab[:, 0] - px
        dy = ay + t * ab[:, 1] - py
        on_edge = np.any(dx * dx + dy * dy <= _ATOL**2 * (1.0 + lengths), axis=1)
        return inside | on_edge


class CallableRule:
    """Wrap a vectorised indicator ``fn(X) -> bool array``."""

    kind = "callable"

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], dimension: int | None = None):
        self.fn = fn
        self.dimension = dimension

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.asarray(self.fn(X), dtype=bool).reshape(len(X))


@dataclass(frozen=True)
class SignedProjection:
    g: float
    gamma: np.ndarray
    delta: int


@dataclass(frozen=True)
class Projections:
    """Signed projections of ``n`` points, stored column-wise."""

    g: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray
    simplex: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.g)

    def __getitem__(self, i) -> SignedProjection:
        return SignedProjection(g=float(self.g[i]), gamma=self.gamma[i].copy(), delta=int(self.delta[i]))

    def __iter__(self) -> Iterator[SignedProjection]:
        for i in range(len(self)):
            yield self[i]

    def take(self, idx) -> "Projections":
        return Projections(self.g[idx], self.gamma[idx], self.delta[idx], self.simplex[idx])


class BoundaryGeometry:
    """Piecewise-linear treatment boundary with a treated-region rule.

    Parameters
    ----------
    simplices : array_like, shape (m, d, d)
        ``m`` simplices, each given by its ``d`` vertices in R^d.
    membership : callable
        Vectorised treated-region indicator; must be true on every vertex.
    """

    def __init__(self, simplices, membership):
        s = np.asarray(simplices, dtype=float)
        if s.size == 0:
            raise ConfigurationError("boundary is empty")
        if s.ndim != 3 or s.shape[1] != s.shape[2]:
            raise ConfigurationError(
                f"simplices must have shape (m, d, d), got {s.shape}"
            )
        d = s.shape[2]
        if d < 2:
            raise ConfigurationError("boundary dimension must be at least 2")
        if not np.all(np.isfinite(s)):
            raise ConfigurationError("simplex coordinates must be finite")
        for j, simplex in enumerate(s):
            edges = (simplex[1:] - simplex[0]).T
            scale = max(np.abs(edges).max(), 1.0)
            sv = np.linalg.svd(edges, compute_uv=False)
            if len(sv) < d - 1 or sv[-1] <= 1e-12 * scale:
                raise ConfigurationError(f"simplex {j} is degenerate")
        dim = getattr(membership, "dimension", None)
        if dim is not None and dim != d:
            raise ConfigurationError(
                f"membership rule has dimension {dim}, boundary has {d}"
            )
        vertices = s.reshape(-1, d)
        if not np.all(membership(vertices)):
            raise ConfigurationError("membership rule must hold on every boundary vertex")
        self.simplices = s
        self.simplices.setflags(write=False)
        self.membership = membership
        self._faces = [_face_data(simplex) for simplex in s]
        self._normals = np.array([_simplex_normal(simplex) for simplex in s])

    @property
    def dimension(self) -> int:
        return self.simplices.shape[2]

    def __len__(self) -> int:
        return len(self.simplices)

    def translated(self, shift) -> "BoundaryGeometry":
        shift = np.asarray(shift, dtype=float)
        rule = CallableRule(lambda X: self.membership(X - shift), self.dimension)
        return BoundaryGeometry(self.simplices + shift, rule)

    def scaled(self, factors) -> "BoundaryGeometry":
        """Boundary in coordinates ``x / factors`` (per-axis rescaling)."""
        factors = np.asarray(factors, dtype=float)
        rule = CallableRule(lambda X: self.membership(X * factors), self.dimension)
        return BoundaryGeometry(self.simplices / factors, rule)

    def project(self, X) -> Projections:
        X = np.asarray(X, dtype=float)
        d = self.dimension
        if X.size == 0:
            return Projections(
                np.empty(0), np.empty((0, d)), np.empty(0, dtype=bool), np.empty(0, dtype=np.intp)
            )
        X = np.atleast_2d(X)
        if X.shape[1] != d:
            raise ConfigurationError(f"points have dimension {X.shape[1]}, boundary has {d}")
        if not np.all(np.isfinite(X)):
            raise ConfigurationError("points must be finite")
        n = len(X)
        best_d2 = np.full(n, np.inf)
        best_pt = np.zeros((n, d))
        best_j = np.zeros(n, dtype=np.intp)
        for j, faces in enumerate(self._faces):
            d2, pt = _project_simplex(X, faces)
            better = d2 < best_d2
            best_d2[better] = d2[better]
            best_pt[better] = pt[better]
            best_j[better] = j
        dist = np.sqrt(np.sum((X - best_pt) ** 2, axis=1))
        inside = self.membership(X)
        g = np.where(inside, dist, -dist)
        g[dist == 0.0] = 0.0
        delta = g >= 0.0
        return Projections(g, best_pt, delta, best_j)

    def treated_normals(self, points) -> np.ndarray:
        """Unit normal at boundary points, oriented into the treated region.

        The normal is that of the nearest simplex.  Orientation is decided by
        the membership rule a tiny step away; where both directions test
        alike (kinks, rule edges) the unoriented normal is returned.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        proj = self.project(points)
        normals = self._normals[proj.simplex]
        scale = np.maximum(1.0, np.abs(points).max(axis=1, initial=0.0))[:, None]
        eps = 1e-7 * scale
        fwd = self.membership(proj.gamma + eps * normals)
        back = self.membership(proj.gamma - eps * normals)
        flip = back & ~fwd
        normals = np.where(flip[:, None], -normals, normals)
        return normals


@dataclass(frozen=True)
class _Face:
    origin: np.ndarray
    edges: np.ndarray  # (d, k-1)
    gram_inv: np.ndarray | None


def _face_data(simplex: np.ndarray) -> list[_Face]:
    d = simplex.shape[0]
    faces = []
    for k in range(1, d + 1):
        for subset in itertools.combinations(range(d), k):
            verts = simplex[list(subset)]
            origin = verts[0]
            if k == 1:
                faces.append(_Face(origin, np.zeros((len(origin), 0)), None))
                continue
            edges = (verts[1:] - origin).T
            faces.append(_Face(origin, edges, np.linalg.inv(edges.T @ edges)))
    return faces


def _simplex_normal(simplex: np.ndarray) -> np.ndarray:
    edges = simplex[1:] - simplex[0]
    # The last right singular vector spans the orthogonal complement.
    return np.linalg.svd(edges.reshape(-1, simplex.shape[1]))[2][-1]


def _project_simplex(X: np.ndarray, faces: list[_Face]) -> tuple[np.ndarray, np.ndarray]:
    """Exact squared distance and nearest point from each row of X to a simplex.

    The nearest point lies in the relative interior of exactly one face, so
    the minimum over faces whose affine projection has non-negative
    barycentric coordinates is the exact projection.
    """
    n = len(X)
    best_d2 = np.full(n, np.inf)
    best_pt = np.zeros_like(X)
    for face in faces:
        rel = X - face.origin
        if face.gram_inv is None:
            pt = np.broadcast_to(face.origin, X.shape)
            admissible = np.ones(n, dtype=bool)
        else:
            lam = (rel @ face.edges) @ face.gram_inv
            admissible = np.all(lam >= 0.0, axis=1) & (lam.sum(axis=1) <= 1.0)
            pt = face.origin + lam @ face.edges.T
        d2 = np.sum((X - pt) ** 2, axis=1)
        better = admissible & (d2 < best_d2)
        best_d2[better] = d2[better]
        best_pt[better] = pt[better]
    return best_d2, best_pt


def signed_distance(x, b: BoundaryGeometry) -> float:
    """Signed Euclidean distance from ``x`` to the boundary (+ inside)."""
    return float(b.project(np.atleast_2d(x)).g[0])


def nearest_boundary_point(x, b: BoundaryGeometry) -> np.ndarray:
    """Closest boundary point; ties go to the lowest simplex index."""
    return b.project(np.atleast_2d(x)).gamma[0]


def project_dataset(X, b: BoundaryGeometry) -> Projections:
    """Row-wise signed projection, preserving order."""
    return b.project(X)


def quadrant_boundary() -> BoundaryGeometry:
    """Two unit segments bounding the treated quadrant ``x1, x2 >= 0``."""
    simplices = [[[0.0, 0.0], [1.0, 0.0]], [[0.0, 0.0], [0.0, 1.0]]]
    rule = HalfspaceRule([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])
    return BoundaryGeometry(simplices, rule)


# -- boundary files -----------------------------------------------------------

def _parse_rows(lines: list[tuple[int, str]], path) -> list[list[float]]:
    rows = []
    for lineno, text in lines:
        try:
            rows.append([float(tok) for tok in text.split()])
        except ValueError as exc:
            raise ConfigurationError(f"{path}:{lineno}: cannot parse numbers") from exc
    return rows


def read_boundary_file(path) -> BoundaryGeometry:
    """Read a boundary file.

    The file has a ``simplices`` section with one simplex per line (``d*d``
    numbers: the ``d`` vertices one after another) followed by one of::

        membership halfspace-intersection
        <normal_1> ... <normal_d> <offset>      # one row per halfspace

        membership polygon
        <x> <y>                                 # one vertex per row

    Blank lines and text after ``#`` are ignored.
    """
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigurationError(f"cannot read boundary file {path}: {exc}") from exc
    sections: dict[str, list[tuple[int, str]]] = {}
    current = None
    kind = None
    for lineno, line in enumerate(raw, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        head = text.lower().split()
        if head[0] == "simplices":
            current = "simplices"
            sections.setdefault(current, [])
            continue
        if head[0] == "membership":
            if len(head) != 2 or head[1] not in ("halfspace-intersection", "polygon"):
                raise ConfigurationError(
                    f"{path}:{lineno}: membership must be 'halfspace-intersection' or 'polygon'"
                )
            current = kind = head[1]
            sections.setdefault(current, [])
            continue
        if current is None:
            raise ConfigurationError(f"{path}:{lineno}: data before any section header")
        sections[current].append((lineno, text))
    if not sections.get("simplices"):
        raise ConfigurationError(f"{path}: boundary is empty")
    if kind is None:
        raise ConfigurationError(f"{path}: missing membership section")
    rows = _parse_rows(sections["simplices"], path)
    width = {len(r) for r in rows}
    if len(width) != 1:
        raise ConfigurationError(f"{path}: simplex rows have inconsistent lengths")
    (w,) = width
    d = int(round(np.sqrt(w)))
    if d * d != w or d < 2:
        raise ConfigurationError(f"{path}: simplex rows must hold d*d numbers (d >= 2)")
    simplices = np.asarray(rows).reshape(-1, d, d)
    mrows = _parse_rows(sections[kind], path)
    if kind == "halfspace-intersection":
        if not mrows or any(len(r) != d + 1 for r in mrows):
            raise ConfigurationError(f"{path}: halfspace rows must hold d+1 numbers")
        arr = np.asarray(mrows)
        rule = HalfspaceRule(arr[:, :d], arr[:, d])
    else:
        if d != 2:
            raise ConfigurationError(f"{path}: polygon membership requires d = 2")
        if any(len(r) != 2 for r in mrows):
            raise ConfigurationError(f"{path}: polygon rows must hold 2 numbers")
        rule = PolygonRule(mrows)
    return BoundaryGeometry(simplices, rule)


def format_boundary_file(b: BoundaryGeometry) -> str:
    """Serialise a boundary whose rule is a halfspace or polygon rule."""
    lines = ["simplices"]
    for simplex in b.simplices:
        lines.append(" ".join(repr(float(v)) for v in simplex.ravel()))
    rule = b.membership
    if isinstance(rule, HalfspaceRule):
        lines.append("membership halfspace-intersection")
        for normal, offset in zip(rule.normals, rule.offsets):
            lines.append(" ".join(repr(float(v)) for v in (*normal, offset)))
    elif isinstance(rule, PolygonRule):
        lines.append("membership polygon")
        for v in rule.vertices:
            lines.append(" ".join(repr(float(c)) for c in v))
    else:
        raise ConfigurationError("only halfspace and polygon rules can be written to a file")
    return "\n".join(lines) + "\n"

