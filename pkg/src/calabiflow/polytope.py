"""Delzant polytopes in the plane, interior lattice grids, and boundary measure.

The polytope is held in facet form l_i(x) = <x, v_i> + c_i >= 0 with primitive
integer inward normals v_i.  Vertices are derived and validated against the
Delzant condition (the two normals meeting at a vertex form a Z^2 basis).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, DomainError

_TOL = 1e-10


def _polygon_area(poly) -> float:
    """Shoelace area of a polygon given as a vertex sequence."""
    if len(poly) < 3:
        return 0.0
    x = np.asarray([p[0] for p in poly])
    y = np.asarray([p[1] for p in poly])
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _polygon_moments(poly):
    """(area, [A, Mx, My, Mxx, Mxy, Myy]) of a simple polygon.

    Moments are integrals of 1, x, y, x^2, xy, y^2 over the polygon,
    positively oriented regardless of input orientation.
    """
    if len(poly) < 3:
        return 0.0, None
    x = np.asarray([p[0] for p in poly])
    y = np.asarray([p[1] for p in poly])
    x1 = np.roll(x, -1)
    y1 = np.roll(y, -1)
    cross = x * y1 - x1 * y
    area2 = cross.sum()
    if abs(area2) < 1e-300:
        return 0.0, None
    sgn = 1.0 if area2 > 0 else -1.0
    A = 0.5 * area2
    Mx = ((x + x1) * cross).sum() / 6.0
    My = ((y + y1) * cross).sum() / 6.0
    Mxx = ((x * x + x * x1 + x1 * x1) * cross).sum() / 12.0
    Myy = ((y * y + y * y1 + y1 * y1) * cross).sum() / 12.0
    Mxy = ((x * y1 + 2 * x * y + 2 * x1 * y1 + x1 * y) * cross).sum() / 24.0
    m = sgn * np.array([A, Mx, My, Mxx, Mxy, Myy])
    return abs(A), m


def clip_halfplane(poly, a: float, b: float, c: float):
    """Clip polygon to the half-plane a*x + b*y + c >= 0 (Sutherland-Hodgman)."""
    out = []
    n = len(poly)
    if n == 0:
        return out
    for k in range(n):
        p = poly[k]
        q = poly[(k + 1) % n]
        fp = a * p[0] + b * p[1] + c
        fq = a * q[0] + b * q[1] + c
        if fp >= 0.0:
            out.append(p)
            if fq < 0.0:
                t = fp / (fp - fq)
                out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
        elif fq >= 0.0:
            t = fp / (fp - fq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def _point_segment_distance(x, a, b) -> float:
    ab = (b[0] - a[0], b[1] - a[1])
    ax = (x[0] - a[0], x[1] - a[1])
    denom = ab[0] * ab[0] + ab[1] * ab[1]
    t = 0.0 if denom == 0.0 else max(0.0, min(1.0, (ax[0] * ab[0] + ax[1] * ab[1]) / denom))
    dx = x[0] - (a[0] + t * ab[0])
    dy = x[1] - (a[1] + t * ab[1])
    return math.hypot(dx, dy)


@dataclass(frozen=True)
class DelzantPolytope:
    """Convex lattice polygon in facet presentation l_i(x) = <x, v_i> + c_i.

    normals : (d, 2) int array of primitive inward normals
    offsets : (d,) float array
    vertices : (d, 2) float array, derived, ordered counterclockwise
    """

    normals: np.ndarray
    offsets: np.ndarray
    vertices: np.ndarray = field(default=None)

    def __post_init__(self):
        normals = np.asarray(self.normals, dtype=np.int64)
        offsets = np.asarray(self.offsets, dtype=float)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "offsets", offsets)
        if normals.ndim != 2 or normals.shape[1] != 2 or normals.shape[0] < 3:
            raise DegenerateInputError("need at least 3 facets with 2d normals")
        for v in normals:
            if math.gcd(int(abs(v[0])), int(abs(v[1]))) != 1:
                raise DegenerateInputError(f"facet normal {tuple(v)} is not primitive")
        object.__setattr__(self, "vertices", self._derive_vertices())
        self._validate()

    def _derive_vertices(self) -> np.ndarray:
        d = len(self.offsets)
        cands = []
        for i in range(d):
            for j in range(i + 1, d):
                A = np.array([self.normals[i], self.normals[j]], dtype=float)
                det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
                if abs(det) < _TOL:
                    continue
                x = np.linalg.solve(A, -self.offsets[[i, j]])
                if np.all(self.facet_values(x) >= -1e-9):
                    cands.append(x)
        verts = []
        for x in cands:
            if not any(np.hypot(*(x - w)) < 1e-8 for w in verts):
                verts.append(x)
        if len(verts) < 3:
            raise DegenerateInputError("facet system has no bounded 2-cell")
        verts = np.array(verts)
        center = verts.mean(axis=0)
        order = np.argsort(np.arctan2(verts[:, 1] - center[1], verts[:, 0] - center[0]))
        return verts[order]

    def _validate(self):
        d = len(self.offsets)
        if len(self.vertices) != d:
            raise DegenerateInputError(
                f"{d} facets but {len(self.vertices)} vertices; not a simple facet presentation"
            )
        # Delzant condition at every vertex
        for x in self.vertices:
            active = np.nonzero(np.abs(self.facet_values(x)) < 1e-8)[0]
            if len(active) != 2:
                raise DegenerateInputError(f"vertex {tuple(x)} meets {len(active)} facets")
            vi, vj = self.normals[active[0]], self.normals[active[1]]
            det = int(vi[0]) * int(vj[1]) - int(vi[1]) * int(vj[0])
            if abs(det) != 1:
                raise DegenerateInputError(
                    f"normals at vertex {tuple(x)} have determinant {det}, not a Z^2 basis"
                )
        if _polygon_area(self.vertices) <= _TOL:
            raise DegenerateInputError("polytope has empty interior")
        centroid = self.vertices.mean(axis=0)
        if np.min(self.facet_values(centroid)) <= 0:
            raise DegenerateInputError("polytope has empty interior")

    # -- geometry queries (pure) -------------------------------------------

    def facet_values(self, x) -> np.ndarray:
        """l_i(x) for all facets; x is a point (2,) or an array (..., 2)."""
        x = np.asarray(x, dtype=float)
        return x @ self.normals.T.astype(float) + self.offsets

    def contains(self, x, strict: bool = True) -> bool:
        vals = self.facet_values(x)
        return bool(np.all(vals > 0) if strict else np.all(vals >= -1e-12))

    @property
    def area(self) -> float:
        return _polygon_area(self.vertices)

    @property
    def bbox(self):
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return lo, hi

    def facet_segment(self, i: int):
        """The two vertices spanning facet i."""
        on = [v for v in self.vertices if abs(self.facet_values(v)[i]) < 1e-8]
        if len(on) != 2:
            raise DegenerateInputError(f"facet {i} supports {len(on)} vertices")
        return np.asarray(on[0]), np.asarray(on[1])

    def facet_lattice_length(self, i: int) -> float:
        """Length of facet i in the lattice boundary measure.

        The measure assigns length 1 to a primitive lattice step along the
        facet, which is the normalization under which the integral of the
        Abreu scalar curvature over the polytope equals twice the total
        boundary measure.
        """
        a, b = self.facet_segment(i)
        e = b - a
        g = math.gcd(int(round(abs(e[0]))), int(round(abs(e[1])))) if (
            abs(e[0] - round(e[0])) < 1e-9 and abs(e[1] - round(e[1])) < 1e-9
        ) else 0
        if g > 0:
            return float(g)
        # non-lattice endpoints: fall back to Euclidean length over primitive step
        v = self.normals[i]
        tau = np.array([-v[1], v[0]], dtype=float)
        return float(np.hypot(*e) / np.hypot(*tau))

    def boundary_measure(self) -> float:
        return sum(self.facet_lattice_length(i) for i in range(len(self.offsets)))

    def distance_to_boundary(self, x) -> float:
        """Exact Euclidean distance from x to the boundary polygon."""
        return min(
            _point_segment_distance(x, *self.facet_segment(i))
            for i in range(len(self.offsets))
        )

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "facets": [
                {"normal": [int(v[0]), int(v[1])], "offset": float(c)}
                for v, c in zip(self.normals, self.offsets)
            ]
        }

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def from_dict(data: dict) -> DelzantPolytope:
    try:
        facets = data["facets"]
        normals = []
        offsets = []
        for f in facets:
            n = f["normal"]
            if any(float(c) != int(c) for c in n):
                raise DegenerateInputError(f"normal {n} has non-integer components")
            normals.append([int(n[0]), int(n[1])])
            offsets.append(float(f["offset"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise DegenerateInputError(f"malformed polytope data: {exc}") from exc
    return DelzantPolytope(np.array(normals), np.array(offsets))


def load_polytope(path) -> DelzantPolytope:
    with open(path) as fh:
        return from_dict(json.load(fh))


def save_polytope(P: DelzantPolytope, path) -> None:
    with open(path, "w") as fh:
        json.dump(P.to_dict(), fh, indent=2)


def standard_triangle() -> DelzantPolytope:
    """Triangle with vertices (-1,-1), (-1,2), (2,-1).

    Facets: l1 = x+1, l2 = y+1, l3 = 1-x-y.
    """
    return DelzantPolytope(
        normals=np.array([[1, 0], [0, 1], [-1, -1]]),
        offsets=np.array([1.0, 1.0, 1.0]),
    )


# ---------------------------------------------------------------------------
# interior grid


_D1_STENCILS = [
    ((-1, 1), (-0.5, 0.5), 2, "central"),
    ((0, 1, 2), (-1.5, 2.0, -0.5), 2, "one-sided"),
    ((0, -1, -2), (1.5, -2.0, 0.5), 2, "one-sided"),
    ((0, 1), (-1.0, 1.0), 1, "one-sided"),
    ((0, -1), (1.0, -1.0), 1, "one-sided"),
]

_D2_STENCILS = [
    ((-1, 0, 1), (1.0, -2.0, 1.0), 2, "central"),
    ((0, 1, 2, 3), (2.0, -5.0, 4.0, -1.0), 2, "one-sided"),
    ((0, -1, -2, -3), (2.0, -5.0, 4.0, -1.0), 2, "one-sided"),
    ((0, 1, 2), (1.0, -2.0, 1.0), 1, "one-sided"),
    ((0, -1, -2), (1.0, -2.0, 1.0), 1, "one-sided"),
]


class _AxisOperator:
    """Gather-style finite-difference operator over the node list.

    idx : (n, K) node indices, coeff : (n, K) weights; rows of quality 0 hold
    no stencil and are filled from the nearest node that has one.
    """

    def __init__(self, idx, coeff, quality, fill_src):
        self.idx = idx
        self.coeff = coeff
        self.quality = quality
        self.fill_src = fill_src

    def apply(self, f: np.ndarray) -> np.ndarray:
        out = np.einsum("nk,nk->n", f[self.idx], self.coeff)
        if self.fill_src is not None:
            bad = self.quality == 0
            out[bad] = out[self.fill_src[bad]]
        return out


class Grid:
    """Axis-aligned lattice of interior nodes with finite-difference stencils.

    Nodes are the lattice points x = anchor + h*(i, j) whose smallest facet
    value min_i l_i(x) is at least delta_min.  Construction is deterministic
    from (polytope, n, delta_min); everything derived is cached and immutable.
    """

    def __init__(self, polytope: DelzantPolytope, n: int, delta_min: float):
        if n < 2:
            raise DegenerateInputError("grid resolution must be at least 2")
        if delta_min <= 0:
            raise DegenerateInputError("delta_min must be positive")
        lo, hi = polytope.bbox
        h = (hi[0] - lo[0]) / n
        ni = int(round((hi[0] - lo[0]) / h)) + 1
        nj = int(math.floor((hi[1] - lo[1]) / h + 1e-9)) + 1
        ii, jj = np.meshgrid(np.arange(ni), np.arange(nj), indexing="ij")
        xs = lo[0] + h * ii
        ys = lo[1] + h * jj
        pts = np.stack([xs, ys], axis=-1)
        lvals = polytope.facet_values(pts.reshape(-1, 2)).reshape(ni, nj, -1)
        delta = lvals.min(axis=2)
        mask = delta >= delta_min - 1e-12

        if not mask.any():
            raise DegenerateInputError(
                f"no lattice point of spacing {h:g} clears delta_min={delta_min:g}"
            )

        self.polytope = polytope
        self.n = n
        self.delta_min = float(delta_min)
        self.h = float(h)
        self.anchor = np.asarray(lo, dtype=float)
        self.shape = (ni, nj)
        self.mask = mask
        node_id = -np.ones((ni, nj), dtype=np.int64)
        node_id[mask] = np.arange(mask.sum())
        self.node_id = node_id
        self.ij = np.stack(np.nonzero(mask), axis=1)
        self.points = pts[mask]
        self.min_facet_distance = delta[mask]
        self.n_nodes = len(self.points)

        self._ops = {}
        self._classification = None
        self._boundary_distance = None
        self._cell_weights = None
        self._ls_patch = None

    # -- stencil machinery --------------------------------------------------

    def _build_operator(self, axis: int, order: int) -> _AxisOperator:
        table = _D1_STENCILS if order == 1 else _D2_STENCILS
        scale = self.h if order == 1 else self.h * self.h
        K = max(len(t[0]) for t in table)
        idx = np.tile(np.arange(self.n_nodes)[:, None], (1, K))
        coeff = np.zeros((self.n_nodes, K))
        quality = np.zeros(self.n_nodes, dtype=np.int8)

        def neighbor(i, j, o):
            i2, j2 = (i + o, j) if axis == 0 else (i, j + o)
            if 0 <= i2 < self.shape[0] and 0 <= j2 < self.shape[1]:
                return self.node_id[i2, j2]
            return -1

        for nn, (i, j) in enumerate(self.ij):
            for offs, cs, q, _name in table:
                ids = [neighbor(i, j, o) for o in offs]
                if all(t >= 0 for t in ids):
                    idx[nn, : len(ids)] = ids
                    coeff[nn, : len(ids)] = np.asarray(cs) / scale
                    quality[nn] = q
                    break

        fill_src = None
        if (quality == 0).any():
            good = np.nonzero(quality > 0)[0]
            if len(good) == 0:
                raise DegenerateInputError("grid too sparse for finite differences")
            bad = np.nonzero(quality == 0)[0]
            fill_src = np.arange(self.n_nodes)
            d2 = ((self.points[bad][:, None, :] - self.points[good][None, :, :]) ** 2).sum(-1)
            fill_src[bad] = good[np.argmin(d2, axis=1)]
        return _AxisOperator(idx, coeff, quality, fill_src)

    def operator(self, axis: int, order: int) -> _AxisOperator:
        key = (axis, order)
        if key not in self._ops:
            self._ops[key] = self._build_operator(axis, order)
        return self._ops[key]

    def diff(self, f: np.ndarray, dx: int, dy: int) -> np.ndarray:
        """Finite-difference partial of a node field, composing per axis.

        Pure derivatives up to order 2 use a single stencil; higher orders and
        mixed derivatives compose first/second differences.
        """
        out = np.asarray(f, dtype=float)
        for axis, k in ((0, dx), (1, dy)):
            while k >= 2:
                out = self.operator(axis, 2).apply(out)
                k -= 2
            if k == 1:
                out = self.operator(axis, 1).apply(out)
        return out

    def _ls_fallback(self):
        """Least-squares quadratic jets for the near-boundary node band.

        The band covers every node within 3h of a facet in the facet-affine
        sense, plus any node the axis stencils cannot serve (corner wedges and
        consumers of their composed intermediates).  A single smooth quadratic
        fit per node kills the row-to-row alternation of one-sided stencil
        patterns along staircased facets, which otherwise injects wrong-signed
        high-frequency error into the flow's energy balance; it reproduces
        quadratic fields exactly, so the canonical inverse-Hessian field stays
        exact to roundoff.
        """
        if self._ls_patch is None:
            bad = self.min_facet_distance < 3.0 * self.h
            for axis in (0, 1):
                for order in (1, 2):
                    bad |= self.operator(axis, order).quality == 0
            # composition d/dy of the d/dx field: flag consumers of bad intermediates
            bad_x1 = self.operator(0, 1).quality == 0
            opy = self.operator(1, 1)
            touches = (np.abs(opy.coeff) > 0) & bad_x1[opy.idx]
            bad |= touches.any(axis=1)
            nodes = np.nonzero(bad)[0]
            k = min(24, self.n_nodes)
            if len(nodes) == 0:
                self._ls_patch = (nodes, np.empty((0, k), dtype=int), np.empty((0, 6, k)))
                return self._ls_patch
            _, clouds = self.kdtree.query(self.points[nodes], k=k)
            clouds = np.atleast_2d(clouds)
            d = (self.points[clouds] - self.points[nodes][:, None, :]) / self.h
            M = np.stack(
                [np.ones(d.shape[:2]), d[..., 0], d[..., 1],
                 d[..., 0] ** 2, d[..., 0] * d[..., 1], d[..., 1] ** 2],
                axis=-1,
            )  # (nb, k, 6)
            # Gaussian distance weights: neighbors fade smoothly, so the fitted
            # jets vary smoothly with node position (abrupt k-NN cloud changes
            # otherwise inject node-scale noise that fourth-order differencing
            # amplifies catastrophically along the flow)
            r2 = (d**2).sum(-1)
            omega = np.exp(-r2 / 1.5**2)
            MtW = np.swapaxes(M, 1, 2) * omega[:, None, :]  # (nb, 6, k)
            gram = MtW @ M  # (nb, 6, 6)
            pinv = np.linalg.solve(gram, MtW)  # (nb, 6, k) weighted LS solve
            self._ls_patch = (nodes, clouds, pinv)
        return self._ls_patch

    def field_jets(self, f: np.ndarray) -> dict:
        """First and second derivative fields of a node field.

        Tensor-product stencils in the interior; smooth least-squares jets on
        the near-boundary band.  Returns {(a, b): array} for 1 <= a+b <= 2.
        """
        f = np.asarray(f, dtype=float)
        out = {
            (1, 0): self.operator(0, 1).apply(f),
            (0, 1): self.operator(1, 1).apply(f),
            (2, 0): self.operator(0, 2).apply(f),
            (0, 2): self.operator(1, 2).apply(f),
            (1, 1): self.operator(1, 1).apply(self.operator(0, 1).apply(f)),
        }
        nodes, clouds, pinv = self._ls_fallback()
        if len(nodes):
            h = self.h
            c = np.einsum("nik,nk->ni", pinv, f[clouds])
            out[(1, 0)][nodes] = c[:, 1] / h
            out[(0, 1)][nodes] = c[:, 2] / h
            out[(2, 0)][nodes] = 2.0 * c[:, 3] / (h * h)
            out[(1, 1)][nodes] = c[:, 4] / (h * h)
            out[(0, 2)][nodes] = 2.0 * c[:, 5] / (h * h)
        return out

    @property
    def stencil_classification(self):
        """Per-node per-axis 'central' or 'one-sided' tag."""
        if self._classification is None:
            tags = np.empty((self.n_nodes, 2), dtype=object)
            for nn, (i, j) in enumerate(self.ij):
                for axis in (0, 1):
                    def _has(o):
                        i2, j2 = (i + o, j) if axis == 0 else (i, j + o)
                        return (
                            0 <= i2 < self.shape[0]
                            and 0 <= j2 < self.shape[1]
                            and self.node_id[i2, j2] >= 0
                        )
                    tags[nn, axis] = "central" if (_has(1) and _has(-1)) else "one-sided"
            self._classification = tags
        return self._classification

    @property
    def boundary_distance(self) -> np.ndarray:
        """Exact Euclidean distance of each node to the boundary polygon."""
        if self._boundary_distance is None:
            self._boundary_distance = np.array(
                [self.polytope.distance_to_boundary(p) for p in self.points]
            )
        return self._boundary_distance

    @property
    def kdtree(self):
        if getattr(self, "_kdtree", None) is None:
            from scipy.spatial import cKDTree

            self._kdtree = cKDTree(self.points)
        return self._kdtree

    @property
    def cell_weights(self) -> np.ndarray:
        """Quadrature weights tiling the polytope with quadratic precision.

        Full interior cells are midpoint cells of their node.  Each clipped
        boundary cell (with or without a node of its own) is distributed over
        nearby nodes so that its exact area, centroid, and second moments are
        reproduced; quadratic integrands therefore see no boundary error and
        the weights sum to the polytope area.
        """
        if self._cell_weights is None:
            self._cell_weights = self._compute_cell_weights()
        return self._cell_weights

    def _distribute_cell(self, weights, moments, center):
        """Spread a clipped cell onto nearby nodes, matching its moments.

        moments are [A, Mx, My, Mxx, Mxy, Myy] in absolute coordinates; the
        matching system is solved in coordinates scaled by h about `center`.
        Falls back to centroid-only and area-only matching if the local node
        cloud is too thin."""
        k = min(12, self.n_nodes)
        _, near = self.kdtree.query(center, k=k)
        near = np.atleast_1d(near)
        h = self.h
        xi = (self.points[near] - center) / h
        A, Mx, My, Mxx, Mxy, Myy = moments
        # scaled moments of the cell about `center`
        m6 = np.array(
            [
                A,
                (Mx - center[0] * A) / h,
                (My - center[1] * A) / h,
                (Mxx - 2 * center[0] * Mx + center[0] ** 2 * A) / h**2,
                (Mxy - center[0] * My - center[1] * Mx + center[0] * center[1] * A) / h**2,
                (Myy - 2 * center[1] * My + center[1] ** 2 * A) / h**2,
            ]
        )
        rows6 = np.stack(
            [np.ones(len(near)), xi[:, 0], xi[:, 1],
             xi[:, 0] ** 2, xi[:, 0] * xi[:, 1], xi[:, 1] ** 2]
        )
        for rows, m in ((rows6, m6), (rows6[:3], m6[:3]), (rows6[:1], m6[:1])):
            # minimum-norm weights reproducing the requested moments
            gram = rows @ rows.T
            try:
                lam = np.linalg.solve(gram, m)
            except np.linalg.LinAlgError:
                continue
            if not np.all(np.isfinite(lam)):
                continue
            resid = rows @ (rows.T @ lam) - m
            if np.max(np.abs(resid)) > 1e-9 * max(abs(A), 1e-30):
                continue
            w = rows.T @ lam
            np.add.at(weights, near, w)
            return
        weights[near[0]] += A

    def _compute_cell_weights(self) -> np.ndarray:
        P = self.polytope
        h = self.h
        ni, nj = self.shape
        lo = self.anchor
        weights = np.zeros(self.n_nodes)
        full_cell = np.zeros(self.n_nodes, dtype=bool)
        normals = P.normals.astype(float)

        for i in range(ni):
            for j in range(nj):
                cx = lo[0] + h * i
                cy = lo[1] + h * j
                corners = [
                    (cx - h / 2, cy - h / 2),
                    (cx + h / 2, cy - h / 2),
                    (cx + h / 2, cy + h / 2),
                    (cx - h / 2, cy + h / 2),
                ]
                vals = P.facet_values(np.asarray(corners))  # (4, d)
                nid = self.node_id[i, j]
                if np.all(vals >= 0):
                    if nid >= 0:
                        weights[nid] += h * h
                        full_cell[nid] = True
                    else:
                        _, m = _polygon_moments(corners)
                        self._distribute_cell(weights, m, np.array([cx, cy]))
                    continue
                if np.any(np.all(vals < 0, axis=0)):
                    # all corners on the far side of one facet: cell misses P
                    continue
                poly = corners
                for k in range(len(P.offsets)):
                    poly = clip_halfplane(poly, normals[k, 0], normals[k, 1], P.offsets[k])
                    if not poly:
                        break
                area, m = _polygon_moments(poly)
                if area <= 1e-14 * h * h or m is None:
                    continue
                self._distribute_cell(weights, m, np.array([m[1] / m[0], m[2] / m[0]]))
        self._full_cell = full_cell
        return weights

    @property
    def midpoint_correction_mask(self) -> np.ndarray:
        """Nodes whose cell is fully interior and whose stencils are central.

        On these the composite-midpoint Laplacian correction h^2/24 * lap f is
        well defined and lifts the interior rule to fourth order.
        """
        _ = self.cell_weights
        central = np.array(
            [cls0 == "central" and cls1 == "central"
             for cls0, cls1 in self.stencil_classification]
        )
        return self._full_cell & central


def build_grid(polytope: DelzantPolytope, n: int, delta_min: float) -> Grid:
    """Interior lattice grid of spacing h = (bbox width)/n, keeping nodes with
    min_i l_i >= delta_min.  Raises DegenerateInputError if no node survives."""
    return Grid(polytope, n, delta_min)


def eps_region(polytope: DelzantPolytope, grid: Grid, eps: float) -> np.ndarray:
    """Indices of grid nodes at Euclidean distance >= eps from the boundary."""
    if eps <= 0:
        raise DomainError("eps must be positive")
    return np.nonzero(grid.boundary_distance >= eps - 1e-12)[0]


# ---------------------------------------------------------------------------
# boundary quadrature


@dataclass(frozen=True)
class BoundaryQuadrature:
    """Midpoint panels on each facet against the lattice boundary measure.

    points : (M, 2), weights : (M,), facet_index : (M,).  Per-facet weights
    sum exactly to the facet's lattice length.
    """

    points: np.ndarray
    weights: np.ndarray
    facet_index: np.ndarray

    @property
    def total(self) -> float:
        return float(self.weights.sum())


def boundary_quadrature(P: DelzantPolytope, panels_per_facet: int = 2048) -> BoundaryQuadrature:
    pts = []
    wts = []
    fidx = []
    for i in range(len(P.offsets)):
        a, b = P.facet_segment(i)
        L = P.facet_lattice_length(i)
        m = max(4, panels_per_facet)
        t = (np.arange(m) + 0.5) / m
        pts.append(a[None, :] + t[:, None] * (b - a)[None, :])
        wts.append(np.full(m, L / m))
        fidx.append(np.full(m, i, dtype=np.int64))
    return BoundaryQuadrature(
        points=np.concatenate(pts),
        weights=np.concatenate(wts),
        facet_index=np.concatenate(fidx),
    )
