"""Exterior calculus for differentials carried by quad diagonals.

A differential assigns one complex value per quad to each diagonal
direction: wb on (the half-edges parallel to) the black diagonal, ww on
the white one.  Conventions, fixed once here and derived from two
normalizations (the wedge of the coordinate differentials integrates to
-4i times the quad area, and the derivative of a vertex function is exact
on linear functions):

* d(f) carries half the diagonal difference of f, so integrating along a
  diagonal path with a factor 2 per step telescopes to plain differences;
* wedge(o1, o2) = 4 * sum_Q (o1.wb * o2.ww - o1.ww * o2.wb);
* the inner product is (1/2) * wedge(o1, star(conj(o2))), which makes
  energy(d f) equal the area-weighted squared gradient sum exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .surface import BLACK, WHITE


@dataclass
class Differential:
    """Type-diamond one-form: one value per quad per diagonal color."""

    wb: np.ndarray
    ww: np.ndarray

    def __post_init__(self):
        self.wb = np.asarray(self.wb, dtype=complex)
        self.ww = np.asarray(self.ww, dtype=complex)

    def __add__(self, other):
        return Differential(self.wb + other.wb, self.ww + other.ww)

    def __sub__(self, other):
        return Differential(self.wb - other.wb, self.ww - other.ww)

    def __mul__(self, c):
        return Differential(c * self.wb, c * self.ww)

    __rmul__ = __mul__

    def conj(self):
        return Differential(np.conj(self.wb), np.conj(self.ww))

    @property
    def is_real(self):
        return float(np.max(np.abs(self.wb.imag)) + np.max(np.abs(self.ww.imag))) < 1e-13

    def norm(self):
        return float(np.sqrt(np.sum(np.abs(self.wb) ** 2 + np.abs(self.ww) ** 2)))


@dataclass
class PeriodData:
    """Periods split by diagonal color; arrays of length genus."""

    a_black: np.ndarray
    b_black: np.ndarray
    a_white: np.ndarray
    b_white: np.ndarray

    def __post_init__(self):
        self.a_black = np.atleast_1d(np.asarray(self.a_black))
        self.b_black = np.atleast_1d(np.asarray(self.b_black))
        self.a_white = np.atleast_1d(np.asarray(self.a_white))
        self.b_white = np.atleast_1d(np.asarray(self.b_white))

    @classmethod
    def zeros(cls, g, dtype=float):
        return cls(*(np.zeros(g, dtype=dtype) for _ in range(4)))

    @property
    def genus(self):
        return len(self.a_black)

    @property
    def a(self):
        """Combined a-periods: mean of the black and white measurements."""
        return 0.5 * (self.a_black + self.a_white)

    @property
    def b(self):
        return 0.5 * (self.b_black + self.b_white)

    def real(self):
        return PeriodData(self.a_black.real.copy(), self.b_black.real.copy(),
                          self.a_white.real.copy(), self.b_white.real.copy())

    def quadratic_form_vector(self):
        """Real parts ordered (a white, a black, b black, b white), the
        layout the energy quadratic form acts on."""
        return np.concatenate([self.a_white.real, self.a_black.real,
                               self.b_black.real, self.b_white.real])

    @classmethod
    def from_quadratic_form_vector(cls, v):
        g = len(v) // 4
        return cls(a_white=v[:g], a_black=v[g:2 * g],
                   b_black=v[2 * g:3 * g], b_white=v[3 * g:])

    def flat(self):
        """(a black, b black, a white, b white) concatenation."""
        return np.concatenate([self.a_black, self.b_black,
                               self.a_white, self.b_white])

    @classmethod
    def from_flat(cls, v):
        g = len(v) // 4
        return cls(a_black=v[:g], b_black=v[g:2 * g],
                   a_white=v[2 * g:3 * g], b_white=v[3 * g:])


def chart_dz(graph):
    """The coordinate differential: half of each diagonal in the quad's
    own chart.  Holomorphic on every quad by construction."""
    return Differential(graph.black_diag / 2.0, graph.white_diag / 2.0)


def chart_dz_bar(graph):
    return chart_dz(graph).conj()


def _jump_values(graph, basis, jumps):
    """Per-quad cocycle combinations (black, white) for given coefficients."""
    if jumps is None:
        return 0.0, 0.0
    cb = np.concatenate([np.atleast_1d(jumps.a_black), np.atleast_1d(jumps.b_black)])
    cw = np.concatenate([np.atleast_1d(jumps.a_white), np.atleast_1d(jumps.b_white)])
    jb = cb @ basis.sigma_black
    jw = cw @ basis.sigma_white
    return jb, jw


def exterior_derivative(graph, f, basis=None, jumps=None):
    """d of a vertex function, optionally with prescribed periods imposed
    through the homology cocycles.  Exact (all periods zero) when no
    jumps are given."""
    f = np.asarray(f)
    q = graph.quads
    db = f[q[:, 2]] - f[q[:, 0]]
    dw = f[q[:, 3]] - f[q[:, 1]]
    jb, jw = _jump_values(graph, basis, jumps)
    return Differential((db + jb) / 2.0, (dw + jw) / 2.0)


def closedness_residual(graph, omega):
    """Per-vertex boundary sums of the vertex faces; all zero iff closed.

    At a black vertex the white values of incident quads enter with +1
    where the vertex is the diagonal tail and -1 at the head; dually at
    white vertices.  Quad faces are automatically exact for this class
    of differentials (parallel edges cancel pairwise).
    """
    q = graph.quads
    res = np.zeros(graph.n_vertices, dtype=complex)
    np.add.at(res, q[:, 0], omega.ww)
    np.subtract.at(res, q[:, 2], omega.ww)
    np.add.at(res, q[:, 1], omega.wb)
    np.subtract.at(res, q[:, 3], omega.wb)
    return res


def is_closed(graph, omega, tol=1e-10):
    res = closedness_residual(graph, omega)
    worst = float(np.max(np.abs(res))) if len(res) else 0.0
    scale = max(omega.norm(), 1e-300)
    return worst <= tol * scale, worst


def star_coefficients(graph):
    """Per-quad 2x2 coefficients of the duality rotation acting on
    (wb, ww): [[c, -d], [e, -c]] with c = cot of the diagonal crossing
    angle, d and e the length-ratio over its sine."""
    z = graph.white_diag / graph.black_diag
    im = z.imag
    c = z.real / im
    d = 1.0 / im
    e = (np.abs(z) ** 2) / im
    return c, d, e


def hodge_star(graph, omega):
    """Duality rotation: squares to minus the identity; fixes the
    holomorphic condition ww = i * rho * wb as its -i eigenspace."""
    c, d, e = star_coefficients(graph)
    return Differential(c * omega.wb - d * omega.ww,
                        e * omega.wb - c * omega.ww)


def holomorphy_residual(graph, omega):
    """Per-quad defect of the discrete Cauchy-Riemann relation
    ww = i * rho * wb (equivalently, star omega = -i omega)."""
    return omega.ww - 1j * graph.diagonal_ratio * omega.wb


def is_holomorphic(graph, omega, tol=1e-10):
    cr = float(np.max(np.abs(holomorphy_residual(graph, omega))))
    _, cl = is_closed(graph, omega, tol)
    scale = max(omega.norm(), 1e-300)
    return (cr <= tol * scale and cl <= tol * scale), cr, cl


def _cmul(x, y):
    # explicit real arithmetic keeps x*y bitwise commutative (the fused
    # complex product is not), which makes the wedge exactly antisymmetric
    re = x.real * y.real - x.imag * y.imag
    im = x.real * y.imag + x.imag * y.real
    return re + 1j * im


def wedge(graph, o1, o2):
    """Surface integral of the wedge product; vertex faces contribute
    nothing for this class of forms, so it is a plain sum over quads.
    Normalized so wedge(dz, conj(dz)) = -4i * area."""
    return 4.0 * complex(np.sum(_cmul(o1.wb, o2.ww) - _cmul(o1.ww, o2.wb)))

def inner_product(graph, o1, o2):
    """Hermitian product <o1, o2> = (1/2) integral of o1 wedge star(conj o2).

    The half compensates the doubled wedge normalization (the quad faces
    of the carrier graph cover half the surface), so energy(dz) equals
    twice the area, matching the smooth Dirichlet energy of dz.
    """
    return 0.5 * wedge(graph, o1, hodge_star(graph, o2.conj()))


def energy(graph, omega):
    val = inner_product(graph, omega, omega)
    return float(val.real)


def quad_gradients(graph, f, basis=None, jumps=None):
    """Per-quad gradient of a real vertex function: the unique vector whose
    products with the two diagonals reproduce the (jump-corrected)
    diagonal differences."""
    f = np.asarray(f, dtype=float)
    q = graph.quads
    db = f[q[:, 2]] - f[q[:, 0]]
    dw = f[q[:, 3]] - f[q[:, 1]]
    jb, jw = _jump_values(graph, basis, jumps)
    db = db + jb
    dw = dw + jw
    b, w = graph.black_diag, graph.white_diag
    det = 2.0 * graph.area  # = Im(conj(b) w)
    gx = (w.imag * db - b.imag * dw) / det
    gy = (-w.real * db + b.real * dw) / det
    return np.stack([gx, gy], axis=1)


def quad_derivatives(graph, f):
    """Contour-quotient derivatives (d, dbar) of a vertex function on each
    quad: trapezoid-rule integrals of f over the midpoint parallelogram
    divided by its area form.  Exact on chart-linear functions."""
    f = np.asarray(f, dtype=complex)
    q = graph.quads
    db = f[q[:, 2]] - f[q[:, 0]]
    dw = f[q[:, 3]] - f[q[:, 1]]
    b, w = graph.black_diag, graph.white_diag
    a4 = 4.0 * graph.area
    d = 1j * (np.conj(w) * db - np.conj(b) * dw) / a4
    dbar = -1j * (w * db - b * dw) / a4
    return d, dbar


def integrate_path(graph, omega, dcycle):
    """Integral along a diagonal path: each traversed diagonal counts its
    value twice (a medial step is half a diagonal)."""
    lo, hi = (0, 2) if dcycle.color == BLACK else (1, 3)
    vals = omega.wb if dcycle.color == BLACK else omega.ww
    total = 0.0 + 0.0j
    prev_head = None
    for qd, s in dcycle.steps:
        tail, head = (lo, hi) if s > 0 else (hi, lo)
        if prev_head is not None and int(graph.quads[qd, tail]) != prev_head:
            raise ValueError("broken diagonal path: consecutive steps do "
                             "not share an endpoint")
        prev_head = int(graph.quads[qd, head])
        total += 2.0 * s * vals[qd]
    return complex(total)


def measure_periods(graph, omega, basis, warn_tol=1e-6):
    """All black/white periods against a homology basis.  Periods of
    non-closed differentials depend on the representatives; a warning
    flags that case."""
    ok, worst = is_closed(graph, omega, warn_tol)
    if not ok:
        import warnings
        warnings.warn(f"measuring periods of a non-closed differential "
                      f"(residual {worst:.3e})", stacklevel=2)
    g = basis.genus
    out = PeriodData.zeros(g, dtype=complex)
    for color, field_a, field_b in ((BLACK, "a_black", "b_black"),
                                    (WHITE, "a_white", "b_white")):
        vals = omega.wb if color == BLACK else omega.ww
        for k in range(g):
            qs, ws = basis.compiled(color, "a", k)
            getattr(out, field_a)[k] = np.sum(ws * vals[qs])
            qs, ws = basis.compiled(color, "b", k)
            getattr(out, field_b)[k] = np.sum(ws * vals[qs])
    return out
