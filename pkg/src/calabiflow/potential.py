"""Symplectic potentials u = u_G + f on a Delzant polytope.

The singular canonical part u_G = 1/2 sum_i l_i ln l_i is always handled in
closed form; only the smooth correction f is discretized.  Derivatives of f
come from one of two providers:

* ``analytic``  -- f (or the whole potential) is a registered closed form and
  every partial up to order 4 is exact;
* ``fd``        -- f lives on the grid nodes and is differenced with the
  grid's second-order stencils (one-sided near the boundary, higher orders by
  composition).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import sympy as sp

from .errors import DomainError, NumericError
from .polytope import DelzantPolytope, Grid, from_dict as polytope_from_dict, standard_triangle

_X, _Y = sp.symbols("x y", real=True)

PARTIALS = [(a, b) for total in range(5) for a in range(total + 1) for b in [total - a]]


class ClosedForm:
    """Smooth function of (x, y) with exact partial derivatives to order 4."""

    def __init__(self, expr):
        expr = sp.sympify(expr, locals={"x": _X, "y": _Y})
        # string input may still carry foreign x/y symbols; rebind them
        expr = expr.subs({sp.Symbol("x"): _X, sp.Symbol("y"): _Y})
        self.expr = expr
        self._lambdas = {}

    def partial(self, a: int, b: int, x, y) -> np.ndarray:
        key = (a, b)
        if key not in self._lambdas:
            d = self.expr
            if a:
                d = sp.diff(d, _X, a)
            if b:
                d = sp.diff(d, _Y, b)
            self._lambdas[key] = sp.lambdify((_X, _Y), d, "numpy")
        val = self._lambdas[key](np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        out = np.asarray(val, dtype=float)
        if out.shape != np.shape(x):
            out = np.broadcast_to(out, np.shape(x)).copy()
        return out

    def __call__(self, x, y) -> np.ndarray:
        return self.partial(0, 0, x, y)


def zero_form() -> ClosedForm:
    return ClosedForm(0)


def polynomial_form(coeffs: dict) -> ClosedForm:
    """Polynomial sum c_{ab} x^a y^b from {(a, b): c}."""
    expr = sum(c * _X**a * _Y**b for (a, b), c in coeffs.items())
    return ClosedForm(expr)


def bump_form(amplitude: float, center=(0.0, 0.0), width: float = 0.8) -> ClosedForm:
    """Gaussian bump; smooth on the closed polytope."""
    cx, cy = center
    r2 = (_X - cx) ** 2 + (_Y - cy) ** 2
    return ClosedForm(amplitude * sp.exp(-r2 / width**2))


# ---------------------------------------------------------------------------
# canonical singular part


def guillemin_partials(P: DelzantPolytope, points, order: int = 4) -> dict:
    """All partials of u_G = 1/2 sum l_i ln l_i up to `order` at interior points.

    Returns {(a, b): array}.  Raises DomainError if any point is on or outside
    the boundary.
    """
    if order > 4:
        raise ValueError("derivatives supported up to order 4")
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    L = P.facet_values(pts)  # (n, d)
    if np.any(L <= 0):
        raise DomainError("point on or outside the polytope boundary")
    V = P.normals.astype(float)  # (d, 2)
    out = {}
    out[(0, 0)] = 0.5 * np.sum(L * np.log(L), axis=1)
    if order >= 1:
        g = 0.5 * (np.log(L) + 1.0) @ V  # (n, 2)
        out[(1, 0)], out[(0, 1)] = g[:, 0], g[:, 1]
    if order >= 2:
        invL = 1.0 / L
        for (a, b) in [(2, 0), (1, 1), (0, 2)]:
            comp = V[:, 0] ** a * V[:, 1] ** b  # product of normal components
            out[(a, b)] = 0.5 * invL @ comp
    if order >= 3:
        invL2 = 1.0 / L**2
        for (a, b) in [(3, 0), (2, 1), (1, 2), (0, 3)]:
            comp = V[:, 0] ** a * V[:, 1] ** b
            out[(a, b)] = -0.5 * invL2 @ comp
    if order >= 4:
        invL3 = 1.0 / L**3
        for (a, b) in [(4, 0), (3, 1), (2, 2), (1, 3), (0, 4)]:
            comp = V[:, 0] ** a * V[:, 1] ** b
            out[(a, b)] = invL3 @ comp
    if single:
        out = {k: v[0] for k, v in out.items()}
    return out


def guillemin_value(P: DelzantPolytope, points) -> np.ndarray:
    """u_G extended continuously to the closed polytope (l ln l -> 0)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    L = P.facet_values(pts)
    if np.any(L < -1e-12):
        raise DomainError("point outside the closed polytope")
    Lc = np.clip(L, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(Lc > 0, Lc * np.log(np.where(Lc > 0, Lc, 1.0)), 0.0)
    val = 0.5 * terms.sum(axis=1)
    return val if np.asarray(points).ndim > 1 else val[0]


@dataclass
class Jet:
    """Value and partial derivatives of a function at one point."""

    partials: dict

    @property
    def value(self) -> float:
        return float(self.partials[(0, 0)])

    @property
    def gradient(self) -> np.ndarray:
        p = self.partials
        return np.array([p[(1, 0)], p[(0, 1)]], dtype=float)

    @property
    def hessian(self) -> np.ndarray:
        p = self.partials
        return np.array([[p[(2, 0)], p[(1, 1)]], [p[(1, 1)], p[(0, 2)]]], dtype=float)

    def tensor(self, order: int) -> np.ndarray:
        """Symmetric derivative tensor of the given order (index = axis)."""
        shape = (2,) * order
        T = np.empty(shape)
        for idx in np.ndindex(shape):
            a = order - sum(idx)
            T[idx] = self.partials[(a, order - a)]
        return T


def _tensorize(partials: dict, order: int, n: int) -> np.ndarray:
    """Field version of Jet.tensor: (n, 2, ..., 2)."""
    T = np.empty((n,) + (2,) * order)
    for idx in np.ndindex((2,) * order):
        a = order - sum(idx)
        T[(slice(None),) + idx] = partials[(a, order - a)]
    return T


# ---------------------------------------------------------------------------


def fs_inverse_hessian(points) -> np.ndarray:
    """Inverse Hessian of the Fubini-Study potential on the standard triangle.

    (2/3) * [[(2-x)(1+x), -(1+x)(1+y)], [-(1+x)(1+y), (2-y)(1+y)]]
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    x, y = pts[:, 0], pts[:, 1]
    if np.any((x <= -1) | (y <= -1) | (x + y >= 1)):
        raise DomainError("point outside the open standard triangle")
    out = np.empty((len(pts), 2, 2))
    out[:, 0, 0] = (2 - x) * (1 + x)
    out[:, 1, 1] = (2 - y) * (1 + y)
    out[:, 0, 1] = out[:, 1, 0] = -(1 + x) * (1 + y)
    out *= 2.0 / 3.0
    return out[0] if single else out


# ---------------------------------------------------------------------------


class SymplecticPotential:
    """State variable of the flow: u = u_G + f, immutable once built."""

    def __init__(
        self,
        polytope: DelzantPolytope,
        grid: Grid,
        f_values: np.ndarray = None,
        f_form: ClosedForm = None,
        total_form: ClosedForm = None,
        provider: str = None,
    ):
        if provider is None:
            provider = "analytic" if (f_form is not None or total_form is not None) else "fd"
        if provider not in ("analytic", "fd"):
            raise ValueError(f"unknown derivative provider {provider!r}")
        if provider == "analytic" and f_form is None and total_form is None:
            raise ValueError("analytic provider needs a registered closed form")
        self.polytope = polytope
        self.grid = grid
        self.f_form = f_form
        self.total_form = total_form
        self.provider = provider
        if total_form is not None:
            self.f_values = np.zeros(grid.n_nodes)
        elif f_values is not None:
            f_values = np.asarray(f_values, dtype=float)
            if f_values.shape != (grid.n_nodes,):
                raise ValueError("f_values must have one entry per grid node")
            self.f_values = f_values
        elif f_form is not None:
            self.f_values = f_form(grid.points[:, 0], grid.points[:, 1])
        else:
            self.f_values = np.zeros(grid.n_nodes)
        self._jets = None

    # -- constructors --------------------------------------------------------

    @classmethod
    def guillemin(cls, polytope: DelzantPolytope, grid: Grid) -> "SymplecticPotential":
        """Canonical potential (f = 0), analytic derivatives."""
        return cls(polytope, grid, f_form=zero_form())

    @classmethod
    def fubini_study(cls, grid: Grid) -> "SymplecticPotential":
        """Fubini-Study potential on the standard triangle."""
        return cls.guillemin(standard_triangle(), grid)

    @classmethod
    def from_closed_form(cls, polytope, grid, f_form: ClosedForm, provider="analytic"):
        return cls(polytope, grid, f_form=f_form, provider=provider)

    @classmethod
    def from_node_values(cls, polytope, grid, f_values):
        return cls(polytope, grid, f_values=f_values, provider="fd")

    @classmethod
    def from_total_form(cls, polytope, grid, form: ClosedForm):
        """Potential given entirely by a closed form (no canonical part).

        For synthetic curvature checks, e.g. quadratics on a square.
        """
        return cls(polytope, grid, total_form=form, provider="analytic")

    def with_node_values(self, f_values) -> "SymplecticPotential":
        """Fresh fd-provider state on the same grid (used by the flow)."""
        return SymplecticPotential.from_node_values(self.polytope, self.grid, f_values)

    # -- derivative fields ----------------------------------------------------

    def jets(self, order: int = 4) -> dict:
        """Partials {(a, b): array over nodes} of u up to `order`."""
        if order > 4:
            raise ValueError("derivatives supported up to order 4")
        if self._jets is None:
            self._jets = self._compute_jets()
        return self._jets

    def _guillemin_grid_jets(self) -> dict:
        cache = getattr(self.grid, "_guillemin_jets", None)
        if cache is None:
            cache = guillemin_partials(self.polytope, self.grid.points, order=4)
            self.grid._guillemin_jets = cache
        return cache

    def _compute_jets(self) -> dict:
        x, y = self.grid.points[:, 0], self.grid.points[:, 1]
        if self.total_form is not None:
            return {(a, b): self.total_form.partial(a, b, x, y) for (a, b) in PARTIALS}
        out = {k: np.array(v) for k, v in self._guillemin_grid_jets().items()}
        if self.provider == "analytic":
            for (a, b) in PARTIALS:
                out[(a, b)] = out[(a, b)] + self.f_form.partial(a, b, x, y)
        else:
            low = self.f_jets2()
            for (a, b) in PARTIALS:
                if (a, b) == (0, 0):
                    out[(a, b)] = out[(a, b)] + self.f_values
                elif a + b <= 2:
                    out[(a, b)] = out[(a, b)] + low[(a, b)]
                else:
                    out[(a, b)] = out[(a, b)] + self.grid.diff(self.f_values, a, b)
        return out

    def f_jets2(self) -> dict:
        """First/second derivative fields of f (fd provider), cached."""
        if self.provider == "analytic":
            x, y = self.grid.points[:, 0], self.grid.points[:, 1]
            return {
                (a, b): self.f_form.partial(a, b, x, y)
                for (a, b) in PARTIALS
                if 1 <= a + b <= 2
            }
        cache = getattr(self, "_f_jets2", None)
        if cache is None:
            cache = self.grid.field_jets(self.f_values)
            self._f_jets2 = cache
        return cache

    def hessians(self) -> np.ndarray:
        """(n, 2, 2) Hessian of u at every node."""
        return _tensorize(self.jets(2), 2, self.grid.n_nodes)

    def min_hessian_eigenvalues(self) -> np.ndarray:
        H = self.hessians()
        tr = H[:, 0, 0] + H[:, 1, 1]
        det = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] ** 2
        disc = np.sqrt(np.maximum(tr * tr - 4 * det, 0.0))
        return 0.5 * (tr - disc)

    # -- pointwise evaluation --------------------------------------------------

    def node_index(self, x) -> int:
        x = np.asarray(x, dtype=float)
        _, k = self.grid.kdtree.query(x)
        return int(k)

    def evaluate(self, x, order: int = 2) -> Jet:
        """Value and partials of u at a point.

        Analytic providers accept any interior point; the fd provider requires
        a grid node (the nearest node within h/2 is used).
        """
        if order > 4:
            raise ValueError("derivatives supported up to order 4")
        x = np.asarray(x, dtype=float)
        if self.total_form is not None:
            p = {(a, b): float(self.total_form.partial(a, b, x[0], x[1]))
                 for (a, b) in PARTIALS if a + b <= order}
            return Jet(p)
        if self.provider == "analytic":
            p = guillemin_partials(self.polytope, x, order)
            for key in list(p):
                a, b = key
                p[key] = float(p[key]) + float(self.f_form.partial(a, b, x[0], x[1]))
            return Jet(p)
        k = self.node_index(x)
        if np.hypot(*(self.grid.points[k] - x)) > 0.5 * self.grid.h + 1e-12:
            raise DomainError("fd potential can only be evaluated at grid nodes")
        jets = self.jets(order)
        return Jet({key: float(jets[key][k]) for key in jets if sum(key) <= order})

    # -- off-grid sampling (monitors only) --------------------------------------

    def f_at(self, points) -> np.ndarray:
        """f at arbitrary points of the closed polytope.

        Closed forms are evaluated exactly; node data is extended by a local
        second-order Taylor step from the nearest node.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.total_form is not None:
            raise DomainError("potential has no canonical/correction split")
        if self.provider == "analytic":
            val = self.f_form(pts[:, 0], pts[:, 1])
        else:
            low = self.f_jets2()
            _, ks = self.grid.kdtree.query(pts)
            ks = np.atleast_1d(ks)
            d = pts - self.grid.points[ks]
            val = (
                self.f_values[ks]
                + low[(1, 0)][ks] * d[:, 0]
                + low[(0, 1)][ks] * d[:, 1]
                + 0.5 * (low[(2, 0)][ks] * d[:, 0] ** 2
                         + 2 * low[(1, 1)][ks] * d[:, 0] * d[:, 1]
                         + low[(0, 2)][ks] * d[:, 1] ** 2)
            )
        return val if np.asarray(points).ndim > 1 else np.atleast_1d(val)

    def value_at(self, points) -> np.ndarray:
        """u on the closed polytope (canonical part by continuity on the boundary)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        base = guillemin_value(self.polytope, pts)
        out = np.atleast_1d(base) + self.f_at(pts)
        return out if np.asarray(points).ndim > 1 else out[0]

    def gradient_at(self, x) -> np.ndarray:
        """grad u at an interior point (Taylor-extended for node data)."""
        x = np.asarray(x, dtype=float)
        gG = guillemin_partials(self.polytope, x, 1)
        g = np.array([gG[(1, 0)], gG[(0, 1)]], dtype=float)
        if self.total_form is not None:
            raise DomainError("potential has no canonical/correction split")
        if self.provider == "analytic":
            g[0] += float(self.f_form.partial(1, 0, x[0], x[1]))
            g[1] += float(self.f_form.partial(0, 1, x[0], x[1]))
        else:
            k = self.node_index(x)
            d = x - self.grid.points[k]
            low = self.f_jets2()
            g[0] += low[(1, 0)][k] + low[(2, 0)][k] * d[0] + low[(1, 1)][k] * d[1]
            g[1] += low[(0, 1)][k] + low[(1, 1)][k] * d[0] + low[(0, 2)][k] * d[1]
        return g

    def hessian_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        hG = guillemin_partials(self.polytope, x, 2)
        H = np.array([[hG[(2, 0)], hG[(1, 1)]], [hG[(1, 1)], hG[(0, 2)]]])
        if self.provider == "analytic" and self.f_form is not None:
            H[0, 0] += float(self.f_form.partial(2, 0, x[0], x[1]))
            H[0, 1] += float(self.f_form.partial(1, 1, x[0], x[1]))
            H[1, 0] = H[0, 1]
            H[1, 1] += float(self.f_form.partial(0, 2, x[0], x[1]))
        elif self.provider == "fd":
            k = self.node_index(x)
            low = self.f_jets2()
            Hf = np.array(
                [[low[(2, 0)][k], low[(1, 1)][k]], [low[(1, 1)][k], low[(0, 2)][k]]]
            )
            H = H + Hf
        return H


# ---------------------------------------------------------------------------
# Legendre transform


@dataclass(frozen=True)
class ComplexDual:
    """Legendre-dual data: xi = grad u(x), phi = <x, xi> - u(x)."""

    xi: np.ndarray
    phi: float


def legendre_dual(u: SymplecticPotential, x) -> ComplexDual:
    x = np.asarray(x, dtype=float)
    if not u.polytope.contains(x):
        raise DomainError("point outside the open polytope")
    xi = u.gradient_at(x)
    val = float(u.value_at(x))
    return ComplexDual(xi=xi, phi=float(x @ xi - val))


def legendre_inverse(u: SymplecticPotential, xi, x0=None, tol: float = 1e-12,
                     max_iter: int = 80) -> np.ndarray:
    """Solve grad u(x) = xi by damped Newton iteration with the Hessian."""
    xi = np.asarray(xi, dtype=float)
    x = np.asarray(x0, dtype=float) if x0 is not None else u.polytope.vertices.mean(axis=0)
    res = u.gradient_at(x) - xi
    for _ in range(max_iter):
        nrm = np.hypot(*res)
        if nrm < tol:
            return x
        H = u.hessian_at(x)
        step = np.linalg.solve(H, -res)
        lam = 1.0
        while lam > 1e-8:
            cand = x + lam * step
            if u.polytope.contains(cand):
                cand_res = u.gradient_at(cand) - xi
                if np.hypot(*cand_res) < nrm:
                    x, res = cand, cand_res
                    break
            lam *= 0.5
        else:
            raise NumericError(
                f"Newton inversion stalled, |grad u - xi| = {nrm:.3e}", residual=nrm
            )
    raise NumericError(
        f"Newton inversion did not converge, |grad u - xi| = {np.hypot(*res):.3e}",
        residual=float(np.hypot(*res)),
    )


# ---------------------------------------------------------------------------
# snapshots


def save_snapshot(u: SymplecticPotential, path, t: float = 0.0) -> None:
    """CSV of node values (i, j, x, y, f) plus a JSON sidecar <path>.json."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "x", "y", "f"])
        for (i, j), p, v in zip(u.grid.ij, u.grid.points, u.f_values):
            w.writerow([int(i), int(j), repr(float(p[0])), repr(float(p[1])), repr(float(v))])
    sidecar = {
        "grid_n": u.grid.n,
        "delta_min": u.grid.delta_min,
        "polytope_hash": u.polytope.content_hash(),
        "polytope": u.polytope.to_dict(),
        "t": float(t),
    }
    with open(path.with_suffix(path.suffix + ".json"), "w") as fh:
        json.dump(sidecar, fh, indent=2)


def load_snapshot(path, polytope: DelzantPolytope = None):
    """Rebuild the fd-provider potential saved by save_snapshot.

    Returns (potential, t).  If a polytope is supplied its content hash must
    match the sidecar.
    """
    path = Path(path)
    with open(path.with_suffix(path.suffix + ".json")) as fh:
        meta = json.load(fh)
    P = polytope_from_dict(meta["polytope"])
    if polytope is not None and polytope.content_hash() != meta["polytope_hash"]:
        raise DomainError("snapshot belongs to a different polytope")
    grid = Grid(P, int(meta["grid_n"]), float(meta["delta_min"]))
    rows = {}
    with open(path) as fh:
        for row in csv.DictReader(fh):
            rows[(int(row["i"]), int(row["j"]))] = float(row["f"])
    f = np.empty(grid.n_nodes)
    for k, (i, j) in enumerate(grid.ij):
        try:
            f[k] = rows[(int(i), int(j))]
        except KeyError as exc:
            raise DomainError(f"snapshot is missing node {(int(i), int(j))}") from exc
    return SymplecticPotential.from_node_values(P, grid, f), float(meta["t"])
