"""Problem data for the Kerr-nonlinear Helmholtz equation

    -Δu - k²(1 + ε 1_Ω₀ |u|²) u = f   in Ω,
    ∂u/∂n + i k u = g                 on Γ_imp,
    u = 0                             on Γ_Dir,

and the two experiment setups (manufactured corner/soliton solution and the
hexagonal Kerr cavity).
"""
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.special import jv

from .quadrature import triangle_rule

PENALTY = complex(-np.sqrt(3.0) / 24.0, 0.005)
"""CIP penalty tuned for equilateral meshes (real part) with a small
stabilising imaginary part."""


@dataclass(frozen=True)
class Problem:
    """Coefficients and data of one nonlinear Helmholtz problem.

    ``k`` is the wave number outside the Kerr subdomain and ``k_inside``
    the one inside (defaults to ``k``). ``f(points)`` and
    ``g(points, normals)`` return complex arrays; ``None`` means zero.
    ``gamma`` is the CIP penalty (0 gives the plain FEM).
    """

    k: float
    epsilon: float = 0.0
    f: Optional[Callable] = None
    g: Optional[Callable] = None
    gamma: complex = 0.0
    k_inside: Optional[float] = None
    label: str = ""

    def __post_init__(self):
        if not self.k > 0 or (self.k_inside is not None and not self.k_inside > 0):
            raise ValueError("wave numbers must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if complex(self.gamma).imag < 0:
            raise ValueError("penalty must have a non-negative imaginary part")

    @property
    def k_in(self):
        return self.k if self.k_inside is None else self.k_inside

    def k_elements(self, mesh):
        """Piecewise constant wave number per triangle."""
        return np.where(mesh.in_omega0, self.k_in, self.k)

    def with_gamma(self, gamma):
        return replace(self, gamma=complex(gamma))

    def linearized(self):
        """Same data with the Kerr term switched off."""
        return replace(self, epsilon=0.0)


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form solution with its gradient and Laplacian.

    All three callables take an ``(n, 2)`` array of points; ``gradient``
    returns ``(n, 2)`` complex values.
    """

    value: Callable
    gradient: Callable
    laplacian: Callable
    label: str = ""


# ----------------------------------------------------------------------
# corner singularity + cut-off soliton
@dataclass(frozen=True)
class CornerSoliton:
    """u = χ₁(r) J_α(kr) sin(α(θ - π/40)) + χ₂(x) q√2 e^{iy√(k²+q²)} / (√ε k cosh(qx)).

    ``r, θ`` are polar coordinates about the re-entrant corner ``(2R, 0)``
    with ``θ`` in ``[0, 2π)``.
    """

    k: float
    q: float
    R: float = 0.25
    alpha: float = 20.0 / 39.0
    theta0: float = np.pi / 40.0
    epsilon: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "epsilon", self.k ** -2)

    # radial part F(r) = χ₁(r) J_α(kr), with F' and the Laplacian factor
    def _corner(self, pts, need_lap=False):
        R, k, a = self.R, self.k, self.alpha
        dx = pts[:, 0] - 2.0 * R
        dy = pts[:, 1]
        r = np.hypot(dx, dy)
        theta = np.mod(np.arctan2(dy, dx), 2.0 * np.pi)
        n = len(pts)
        val = np.zeros(n)
        grad = np.zeros((n, 2))
        lap = np.zeros(n)
        s = (r < R) & (r > 0)
        if not s.any():
            return val, grad, lap
        rs, th = r[s], theta[s]
        chi = (1.0 - rs / R) ** 2
        dchi = -2.0 * (1.0 - rs / R) / R
        d2chi = 2.0 / R ** 2
        z = k * rs
        J = jv(a, z)
        dJ = k * (jv(a - 1.0, z) - a / z * J)
        F = chi * J
        dF = dchi * J + chi * dJ
        ang = a * (th - self.theta0)
        S, C = np.sin(ang), np.cos(ang)
        val[s] = F * S
        cos_t, sin_t = np.cos(th), np.sin(th)
        g_r = dF * S
        g_t = F / rs * a * C
        grad[s, 0] = g_r * cos_t - g_t * sin_t
        grad[s, 1] = g_r * sin_t + g_t * cos_t
        if need_lap:
            # J_α(kr) solves Bessel's equation, leaving only cut-off terms
            lap[s] = (-k ** 2 * chi * J + d2chi * J + 2.0 * dchi * dJ + dchi * J / rs) * S
        return val, grad, lap

    def _soliton(self, pts, need_lap=False):
        R, k, q = self.R, self.k, self.q
        x, y = pts[:, 0], pts[:, 1]
        n = len(pts)
        val = np.zeros(n, complex)
        grad = np.zeros((n, 2), complex)
        lap = np.zeros(n, complex)
        s = np.abs(x) <= R
        if not s.any():
            return val, grad, lap
        xs, ys = x[s], y[s]
        beta = np.sqrt(k ** 2 + q ** 2)
        amp = q * np.sqrt(2.0) / (np.sqrt(self.epsilon) * k)
        wave = amp * np.exp(1j * beta * ys)
        sech = 1.0 / np.cosh(q * xs)
        tanh = np.tanh(q * xs)
        chi = (xs ** 2 - R ** 2) ** 2
        dchi = 4.0 * xs * (xs ** 2 - R ** 2)
        d2chi = 12.0 * xs ** 2 - 4.0 * R ** 2
        dsech = -q * sech * tanh
        d2sech = q ** 2 * sech * (1.0 - 2.0 * sech ** 2)
        P = chi * sech
        dP = dchi * sech + chi * dsech
        d2P = d2chi * sech + 2.0 * dchi * dsech + chi * d2sech
        val[s] = wave * P
        grad[s, 0] = wave * dP
        grad[s, 1] = 1j * beta * wave * P
        if need_lap:
            lap[s] = wave * (d2P - beta ** 2 * P)
        return val, grad, lap

    def value(self, pts):
        pts = np.atleast_2d(pts)
        return self._corner(pts)[0] + self._soliton(pts)[0]

    def gradient(self, pts):
        pts = np.atleast_2d(pts)
        return self._corner(pts)[1] + self._soliton(pts)[1]

    def laplacian(self, pts):
        pts = np.atleast_2d(pts)
        return self._corner(pts, True)[2] + self._soliton(pts, True)[2]

    def in_omega0(self, pts):
        return (np.abs(pts[:, 0]) < self.R) & (np.abs(pts[:, 1]) < self.R)

    def source(self, pts):
        """f = -Δu - k²(1 + ε 1_Ω₀ |u|²) u evaluated pointwise."""
        pts = np.atleast_2d(pts)
        v1, _, l1 = self._corner(pts, True)
        v2, _, l2 = self._soliton(pts, True)
        u = v1 + v2
        kerr = np.where(self.in_omega0(pts), self.epsilon * np.abs(u) ** 2, 0.0)
        return -(l1 + l2) - self.k ** 2 * (1.0 + kerr) * u

    def impedance_data(self, pts, normals):
        """g = ∂u/∂n + i k u."""
        pts = np.atleast_2d(pts)
        grad = self.gradient(pts)
        return np.einsum("ij,ij->i", grad, normals) + 1j * self.k * self.value(pts)


def corner_soliton_problem(k, q, R=0.25, gamma=0.0):
    """Manufactured problem on the notched domain with ``ε = k⁻²``.

    Returns
    -------
    (Problem, ExactSolution)
    """
    if not (k > 0 and q > 0 and R > 0):
        raise ValueError("k, q and R must be positive")
    u = CornerSoliton(float(k), float(q), float(R))
    problem = Problem(k=float(k), epsilon=u.epsilon, f=u.source, g=u.impedance_data,
                      gamma=complex(gamma), label=f"corner-soliton k={k} q={q}")
    exact = ExactSolution(u.value, u.gradient, u.laplacian, label=problem.label)
    return problem, exact


# ----------------------------------------------------------------------
# Kerr cavity driven by a Gaussian beam
REFERENCE_INTENSITY = 1e5


def incident_beam(I, k0):
    """u_inc = I exp(-k0² x² / 2) and its gradient."""
    def value(pts):
        pts = np.atleast_2d(pts)
        return I * np.exp(-0.5 * k0 ** 2 * pts[:, 0] ** 2) + 0j

    def gradient(pts):
        pts = np.atleast_2d(pts)
        g = np.zeros((len(pts), 2), complex)
        g[:, 0] = -k0 ** 2 * pts[:, 0] * value(pts)
        return g

    def laplacian(pts):
        pts = np.atleast_2d(pts)
        x = pts[:, 0]
        return k0 ** 2 * (k0 ** 2 * x ** 2 - 1.0) * value(pts)

    return ExactSolution(value, gradient, laplacian, label=f"beam I={I:g}")


def bistability_problem(I, k0=9.6, contrast=2.5, eps=1e-12, gamma=PENALTY):
    """Pure-impedance hexagon problem with zero source.

    The beam enters through the impedance data ``g = ∂u_inc/∂n + i k0 u_inc``.
    """
    if I < 0:
        raise ValueError("intensity must be non-negative")
    beam = incident_beam(float(I), float(k0))

    def g(pts, normals):
        return (np.einsum("ij,ij->i", beam.gradient(pts), normals)
                + 1j * k0 * beam.value(pts))

    return Problem(k=float(k0), k_inside=float(contrast * k0), epsilon=float(eps),
                   f=None, g=g, gamma=complex(gamma), label=f"bistability I={I:g}")


# ----------------------------------------------------------------------
# error norms
class ErrorNorms(NamedTuple):
    h1_rel: float
    l2_rel: float
    energy: float


def _quad_points(mesh, degree):
    bary, w = triangle_rule(degree)
    pts = np.einsum("qi,tij->tqj", bary, mesh.vertices[mesh.triangles])
    return bary, w, pts


def norms_against_exact(solution, exact, quad_degree=8, k=None):
    """Relative H¹ and L² errors and the absolute energy-norm error.

    The energy norm is ``(|v|₁² + k² ||v||₀²)^½`` with the element wave
    number of ``k`` (a :class:`Problem` or a float; defaults to 1).
    """
    if quad_degree < 1:
        raise ValueError("quad_degree must be >= 1")
    mesh = solution.space.mesh
    bary, w, pts = _quad_points(mesh, quad_degree)
    nt, nq = pts.shape[:2]
    flat = pts.reshape(-1, 2)
    u = exact.value(flat).reshape(nt, nq)
    du = exact.gradient(flat).reshape(nt, nq, 2)
    local = solution.values[mesh.triangles]
    uh = local @ bary.T
    duh = np.einsum("ti,tij->tj", local, solution.space.grads)
    e0 = np.abs(u - uh) ** 2 @ w * mesh.areas
    e1 = (np.abs(du - duh[:, None, :]) ** 2).sum(axis=2) @ w * mesh.areas
    n0 = np.abs(u) ** 2 @ w * mesh.areas
    n1 = (np.abs(du) ** 2).sum(axis=2) @ w * mesh.areas
    if k is None:
        kt = np.ones(nt)
    elif isinstance(k, Problem):
        kt = k.k_elements(mesh)
    else:
        kt = np.full(nt, float(k))
    h1 = np.sqrt((e0.sum() + e1.sum()) / (n0.sum() + n1.sum()))
    l2 = np.sqrt(e0.sum() / n0.sum())
    energy = np.sqrt(e1.sum() + (kt ** 2 * e0).sum())
    return ErrorNorms(float(h1), float(l2), float(energy))


def exact_h1_norm(mesh, exact, quad_degree=8):
    """||u||₁ of a closed-form solution over the triangulated domain."""
    bary, w, pts = _quad_points(mesh, quad_degree)
    flat = pts.reshape(-1, 2)
    dens = np.abs(exact.value(flat)) ** 2 + (np.abs(exact.gradient(flat)) ** 2).sum(axis=1)
    return float(np.sqrt((dens.reshape(len(pts), -1) @ w * mesh.areas).sum()))
