"""The two-variable Bellman function, its differential forms, mollified
variants, and numerical convexity certificates.

The central objects are

    phi(u, v) = u^p + v^q + delta * { u^2 v^(2-q)              if u^p <= v^q
                                    { (2/p) u^p + (2/q-1) v^q  if u^p >= v^q

for p >= 2, q = p/(p-1), delta = q(q-1)/8, and

    Q(zeta, eta) = -phi(|zeta|, |eta|) / 2

on C x C.  phi is C^1 everywhere and C^2 away from the interface
``u^p = v^q`` and the ray ``v = 0``; second-order quantities near those sets
are handled by mollification.

Everything here is a pure function of its arguments and safe to call from
any number of threads.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import AccuracyError, DomainError, SingularityError

# Relative threshold on |u^p - v^q| below which a point is classified as
# lying on the interface.
INTERFACE_REL_THRESHOLD = 1e-9

# Moduli below this are treated as exactly zero for certification purposes.
ZERO_MODULUS = 1e-300


class RegionLabel(enum.Enum):
    REGION1 = "region1"
    REGION2 = "region2"
    INTERFACE = "interface"


@dataclass(frozen=True)
class BellmanParams:
    """Exponent pair (p, q) and the convexity weight delta = q(q-1)/8.

    Construct with the single exponent: ``BellmanParams(3.0)``.  If q or
    delta are passed explicitly they are validated against the derived
    values to machine precision.
    """

    p: float
    q: float | None = None
    delta: float | None = None

    def __post_init__(self):
        p = float(self.p)
        if not math.isfinite(p) or p < 2.0:
            raise DomainError(f"exponent p must be finite and >= 2, got {p}")
        q = p / (p - 1.0)
        delta = q * (q - 1.0) / 8.0
        if self.q is not None and abs(self.q - q) > 4e-16 * q:
            raise DomainError(f"q={self.q} is not conjugate to p={p}")
        if self.delta is not None and abs(self.delta - delta) > 4e-16 * delta:
            raise DomainError(f"delta={self.delta} does not equal q(q-1)/8")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "delta", delta)


class ComplexPair(NamedTuple):
    """A point xi = (zeta, eta) in C^2."""

    zeta: complex
    eta: complex


class WirtingerGradient(NamedTuple):
    """The four first-order Wirtinger derivatives of Q."""

    d_zeta: complex
    d_zeta_bar: complex
    d_eta: complex
    d_eta_bar: complex


@dataclass(frozen=True)
class TauCertificate:
    """A numerically found weight tau > 0 witnessing the convexity and drift
    inequalities at one point, with the worst observed slacks."""

    tau: float
    margin_hessian: float
    margin_drift: float
    worst_direction: ComplexPair | None = None
    trivial: bool = False

    def valid(self, tol: float = 0.0) -> bool:
        return self.margin_hessian >= -tol and self.margin_drift >= -tol


@dataclass(frozen=True)
class BejazReport:
    """Joint report for the range bound (i), the convexity certificate (ii)
    and the drift bound (iii) at one point."""

    xi: ComplexPair
    prop_i_slack: float
    prop_ii: TauCertificate
    prop_iii_slack: float

    @property
    def prop_i_ok(self) -> bool:
        return self.prop_i_slack >= 0.0

    def valid(self, tol: float = 0.0) -> bool:
        return self.prop_i_ok and self.prop_ii.valid(tol)


# ---------------------------------------------------------------------------
# classification and scalar evaluation
# ---------------------------------------------------------------------------

def _check_nonneg(u: float, v: float) -> tuple[float, float]:
    u = float(u)
    v = float(v)
    if not (math.isfinite(u) and math.isfinite(v)) or u < 0.0 or v < 0.0:
        raise DomainError(f"moduli must be finite and nonnegative, got ({u}, {v})")
    return u, v


def classify(params: BellmanParams, u: float, v: float,
             threshold: float = INTERFACE_REL_THRESHOLD) -> RegionLabel:
    """Total classification of (u, v) into region 1, region 2 or interface."""
    u, v = _check_nonneg(u, v)
    t1 = u ** params.p
    t2 = v ** params.q
    if abs(t1 - t2) <= threshold * max(t1, t2, 1.0):
        return RegionLabel.INTERFACE
    return RegionLabel.REGION1 if t1 < t2 else RegionLabel.REGION2


def _phi_branch(params: BellmanParams, u: float, v: float, region1: bool) -> float:
    p, q, delta = params.p, params.q, params.delta
    base = u ** p + v ** q
    if region1:
        return base + delta * (u * u) * v ** (2.0 - q)
    return base + delta * ((2.0 / p) * u ** p + (2.0 / q - 1.0) * v ** q)


def eval_phi(params: BellmanParams, u: float, v: float) -> float:
    """Piecewise value of phi; on the interface both branches are evaluated
    and asserted to agree to relative 1e-12."""
    u, v = _check_nonneg(u, v)
    label = classify(params, u, v)
    if label is RegionLabel.INTERFACE:
        b1 = _phi_branch(params, u, v, True)
        b2 = _phi_branch(params, u, v, False)
        # normalized like the classification threshold, so points swept into
        # the interface band near the origin (tiny absolute values) pass too
        assert abs(b1 - b2) <= 1e-12 * max(abs(b1), abs(b2), 1.0), \
            f"interface branch mismatch at ({u}, {v}): {b1} vs {b2}"
        return 0.5 * (b1 + b2)
    return _phi_branch(params, u, v, label is RegionLabel.REGION1)


def phi_values(params: BellmanParams, u, v) -> np.ndarray:
    """Vectorized phi over arrays of nonnegative moduli."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if np.any(u < 0.0) or np.any(v < 0.0):
        raise DomainError("moduli must be nonnegative")
    shape = u.shape
    t = _kernels.bellman_tables(params.p, params.q, params.delta, u.ravel(), v.ravel())
    return np.asarray(t[1]).reshape(shape)


def eval_Q(params: BellmanParams, xi: ComplexPair) -> float:
    """Q(zeta, eta) = -phi(|zeta|, |eta|)/2, always nonpositive."""
    return -0.5 * eval_phi(params, abs(complex(xi[0])), abs(complex(xi[1])))


def q_values(params: BellmanParams, zeta, eta) -> np.ndarray:
    return -0.5 * phi_values(params, np.abs(zeta), np.abs(eta))


def grad_phi(params: BellmanParams, u: float, v: float,
             region: RegionLabel | None = None) -> tuple[float, float]:
    """Closed-form (phi_u, phi_v).

    ``region`` forces one branch (interface points may be evaluated by
    either).  Requesting the region-1 formula on the ray v = 0 with u > 0 is
    a singularity error since that branch contains v^(1-q).
    """
    u, v = _check_nonneg(u, v)
    p, q, delta = params.p, params.q, params.delta
    if region is None:
        label = classify(params, u, v)
        region1 = label is not RegionLabel.REGION2
    else:
        region1 = region is not RegionLabel.REGION2
    if region1:
        if v == 0.0 and u > 0.0:
            raise SingularityError("eta-zero-ray",
                                   "region-1 gradient formula is singular on v = 0")
        du = p * u ** (p - 1.0) + 2.0 * delta * u * v ** (2.0 - q)
        if u == 0.0 and v == 0.0:
            dv = 0.0
        else:
            dv = q * v ** (q - 1.0) + delta * (2.0 - q) * u * u * v ** (1.0 - q)
    else:
        du = (p + 2.0 * delta) * u ** (p - 1.0)
        dv = (q + delta * (2.0 - q)) * v ** (q - 1.0)
    return du, dv


def grad_Q(params: BellmanParams, xi: ComplexPair) -> WirtingerGradient:
    """First Wirtinger derivatives of Q via the radial chain rule.

    d_zeta Q = -(phi_u) conj(zeta) / (4 |zeta|), and analogously in eta;
    both moduli must be strictly positive.
    """
    zeta = complex(xi[0])
    eta = complex(xi[1])
    u = abs(zeta)
    v = abs(eta)
    if u == 0.0:
        raise SingularityError("zeta-zero-ray", "grad_Q undefined at |zeta| = 0")
    if v == 0.0:
        raise SingularityError("eta-zero-ray", "grad_Q undefined at |eta| = 0")
    du, dv = grad_phi(params, u, v)
    dz = -du * zeta.conjugate() / (4.0 * u)
    de = -dv * eta.conjugate() / (4.0 * v)
    return WirtingerGradient(dz, dz.conjugate(), de, de.conjugate())


def first_form(params: BellmanParams, xi: ComplexPair, sigma: ComplexPair) -> float:
    """dQ(xi) sigma, the real-valued first differential form."""
    g = grad_Q(params, xi)
    val = 2.0 * (g.d_zeta * complex(sigma[0])).real + 2.0 * (g.d_eta * complex(sigma[1])).real
    return val


def drift_slack_base(params: BellmanParams, u, v) -> np.ndarray:
    """Q(xi) - dQ(xi) xi = (u phi_u + v phi_v - phi)/2, vectorized."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    shape = u.shape
    t = _kernels.bellman_tables(params.p, params.q, params.delta, u.ravel(), v.ravel())
    phi, phi_u, phi_v = t[1], t[2], t[3]
    out = 0.5 * (u.ravel() * phi_u + v.ravel() * phi_v - phi)
    return out.reshape(shape)


# ---------------------------------------------------------------------------
# second-order forms
# ---------------------------------------------------------------------------

def _guard_second_order(params: BellmanParams, u: float, v: float,
                        interface_margin: float, modulus_floor: float) -> None:
    if u <= modulus_floor:
        raise SingularityError("zeta-zero-ray",
                               f"|zeta| = {u} is within the modulus floor {modulus_floor}")
    if v <= modulus_floor:
        raise SingularityError("eta-zero-ray",
                               f"|eta| = {v} is within the modulus floor {modulus_floor}")
    t1 = u ** params.p
    t2 = v ** params.q
    if abs(t1 - t2) <= interface_margin * max(t1, t2, 1.0):
        raise SingularityError("interface",
                               f"({u}, {v}) is within the interface margin {interface_margin}")


def _form_coeffs(params: BellmanParams, u, v):
    """Radial coefficients (crr, ctt, drr, dtt, m) of the -d2Q form."""
    t = _kernels.bellman_tables(params.p, params.q, params.delta,
                                np.atleast_1d(np.asarray(u, dtype=np.float64)).ravel(),
                                np.atleast_1d(np.asarray(v, dtype=np.float64)).ravel())
    _, _, _, _, phi_uu, phi_uv, phi_vv, phi_u_over_u, phi_v_over_v = t
    return (0.5 * phi_uu, 0.5 * phi_u_over_u, 0.5 * phi_vv, 0.5 * phi_v_over_v, 0.5 * phi_uv)


def _phases(zeta, eta):
    zeta = np.atleast_1d(np.asarray(zeta, dtype=np.complex128)).ravel()
    eta = np.atleast_1d(np.asarray(eta, dtype=np.complex128)).ravel()
    u = np.abs(zeta)
    v = np.abs(eta)
    ph1 = zeta / np.maximum(u, ZERO_MODULUS)
    ph2 = eta / np.maximum(v, ZERO_MODULUS)
    return u, v, ph1, ph2


def second_form(params: BellmanParams, xi: ComplexPair, sigma: ComplexPair,
                varsigma: ComplexPair, *,
                interface_margin: float = INTERFACE_REL_THRESHOLD,
                modulus_floor: float = 1e-12) -> float:
    """<d2Q(xi) sigma, varsigma>: real, symmetric in (sigma, varsigma).

    Only defined strictly inside region 1 or 2: the point must sit farther
    than ``interface_margin`` (relative) from the interface and farther than
    ``modulus_floor`` from the zero rays, otherwise a SingularityError names
    the offending set.  Use the mollified variant near those sets.
    """
    zeta = complex(xi[0])
    eta = complex(xi[1])
    _guard_second_order(params, abs(zeta), abs(eta), interface_margin, modulus_floor)
    u, v, ph1, ph2 = _phases([zeta], [eta])
    crr, ctt, drr, dtt, m = _form_coeffs(params, u, v)
    val = _kernels.bilinear_forms(
        crr, ctt, drr, dtt, m, ph1, ph2,
        np.array([complex(sigma[0])]), np.array([complex(sigma[1])]),
        np.array([complex(varsigma[0])]), np.array([complex(varsigma[1])]),
    )
    # kernels evaluate <-d2Q s, w>
    return -float(val[0])


def neg_hess_matrix(params: BellmanParams, xi: ComplexPair, *,
                    interface_margin: float = INTERFACE_REL_THRESHOLD,
                    modulus_floor: float = 1e-12) -> np.ndarray:
    """-d2Q(xi) as a real symmetric 4x4 matrix in the coordinates
    (Re zeta, Im zeta, Re eta, Im eta)."""
    zeta = complex(xi[0])
    eta = complex(xi[1])
    _guard_second_order(params, abs(zeta), abs(eta), interface_margin, modulus_floor)
    u, v, ph1, ph2 = _phases([zeta], [eta])
    crr, ctt, drr, dtt, m = _form_coeffs(params, u, v)
    return _assemble_neg_hess(crr, ctt, drr, dtt, m, ph1, ph2)[0]


def _assemble_neg_hess(crr, ctt, drr, dtt, m, ph1, ph2) -> np.ndarray:
    """(n, 4, 4) stack of -d2Q matrices from radial coefficients."""
    n = crr.size
    r1 = np.stack([ph1.real, ph1.imag], axis=1)
    r2 = np.stack([ph2.real, ph2.imag], axis=1)
    out = np.zeros((n, 4, 4))
    eye = np.eye(2)
    p11 = r1[:, :, None] * r1[:, None, :]
    p22 = r2[:, :, None] * r2[:, None, :]
    p12 = r1[:, :, None] * r2[:, None, :]
    out[:, :2, :2] = ctt[:, None, None] * eye + (crr - ctt)[:, None, None] * p11
    out[:, 2:, 2:] = dtt[:, None, None] * eye + (drr - dtt)[:, None, None] * p22
    out[:, :2, 2:] = m[:, None, None] * p12
    out[:, 2:, :2] = np.swapaxes(out[:, :2, 2:], 1, 2)
    return out


def pair_to_real4(sigma: ComplexPair) -> np.ndarray:
    return np.array([complex(sigma[0]).real, complex(sigma[0]).imag,
                     complex(sigma[1]).real, complex(sigma[1]).imag])


# ---------------------------------------------------------------------------
# mollification
# ---------------------------------------------------------------------------

class Mollifier:
    """Radial bump c * exp(-1/(1-|x|^2)) on the unit ball of R^4, sampled on
    a tensor-product Gauss-Legendre grid and normalized so the discrete
    weights sum to exactly one.

    ``order`` is the node count per axis; nodes falling outside the unit
    ball carry zero weight and are dropped.
    """

    def __init__(self, order: int = 8):
        if order < 2:
            raise DomainError("mollifier quadrature order must be >= 2")
        self.order = int(order)
        x, w = np.polynomial.legendre.leggauss(self.order)
        nodes = np.stack(np.meshgrid(x, x, x, x, indexing="ij"), axis=-1).reshape(-1, 4)
        weights = (w[:, None, None, None] * w[None, :, None, None]
                   * w[None, None, :, None] * w[None, None, None, :]).ravel()
        r2 = np.sum(nodes * nodes, axis=1)
        inside = r2 < 1.0
        bump = np.zeros_like(r2)
        bump[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
        weights = weights * bump
        keep = weights > 0.0
        self.nodes = nodes[keep]
        self.weights = weights[keep] / weights[keep].sum()

    def shifted_points(self, xi: ComplexPair, eps: float):
        """All quadrature points xi - eps*y as (zeta_array, eta_array)."""
        zeta = complex(xi[0])
        eta = complex(xi[1])
        y = self.nodes * eps
        zs = zeta - (y[:, 0] + 1j * y[:, 1])
        es = eta - (y[:, 2] + 1j * y[:, 3])
        return zs, es


_MOLLIFIER_CACHE: dict[int, Mollifier] = {}


def _mollifier(order: int) -> Mollifier:
    if order not in _MOLLIFIER_CACHE:
        _MOLLIFIER_CACHE[order] = Mollifier(order)
    return _MOLLIFIER_CACHE[order]


def mollified_Q(params: BellmanParams, eps: float, xi: ComplexPair,
                order: int = 8, check_tol: float | None = None) -> float:
    """Q smoothed by the mollifier at scale eps > 0.

    With ``check_tol`` set, the quadrature is repeated at order+4 nodes per
    axis and an AccuracyError is raised when the two results differ by more
    than the tolerance.
    """
    if not eps > 0.0:
        raise DomainError(f"mollification scale must be positive, got {eps}")
    val = _mollified_Q_once(params, eps, xi, order)
    if check_tol is not None:
        ref = _mollified_Q_once(params, eps, xi, order + 4)
        if abs(val - ref) > check_tol:
            raise AccuracyError(
                f"mollifier quadrature at order {order} is off by {abs(val - ref):.3e}"
                f" (> {check_tol:.3e})")
    return val


def _mollified_Q_once(params, eps, xi, order):
    mol = _mollifier(order)
    zs, es = mol.shifted_points(xi, eps)
    vals = q_values(params, zs, es)
    return float(np.dot(mol.weights, vals))


def mollified_grad_Q(params: BellmanParams, eps: float, xi: ComplexPair,
                     order: int = 8) -> WirtingerGradient:
    """Mollified first Wirtinger derivatives (the gradient is continuous, so
    this is the mollification of the almost-everywhere classical gradient)."""
    if not eps > 0.0:
        raise DomainError(f"mollification scale must be positive, got {eps}")
    mol = _mollifier(order)
    zs, es = mol.shifted_points(xi, eps)
    u = np.maximum(np.abs(zs), ZERO_MODULUS)
    v = np.maximum(np.abs(es), ZERO_MODULUS)
    t = _kernels.bellman_tables(params.p, params.q, params.delta, u, v)
    phi_u, phi_v = t[2], t[3]
    dz = np.dot(mol.weights, -phi_u * np.conj(zs) / (4.0 * u))
    de = np.dot(mol.weights, -phi_v * np.conj(es) / (4.0 * v))
    return WirtingerGradient(dz, np.conj(dz), de, np.conj(de))


def mollified_neg_hess_matrix(params: BellmanParams, eps: float, xi: ComplexPair,
                              order: int = 8) -> np.ndarray:
    """Mollified -d2Q as a 4x4 matrix.

    eps is capped at 0.45*min(|zeta|, |eta|) so every quadrature point stays
    clear of the zero rays, where the almost-everywhere Hessian is not
    integrable by this quadrature.
    """
    if not eps > 0.0:
        raise DomainError(f"mollification scale must be positive, got {eps}")
    u0 = abs(complex(xi[0]))
    v0 = abs(complex(xi[1]))
    if min(u0, v0) <= ZERO_MODULUS:
        raise SingularityError("zeta-zero-ray" if u0 <= v0 else "eta-zero-ray",
                               "mollified Hessian needs both moduli positive")
    eps = min(eps, 0.45 * min(u0, v0))
    mol = _mollifier(order)
    zs, es = mol.shifted_points(xi, eps)
    u, v, ph1, ph2 = _phases(zs, es)
    crr, ctt, drr, dtt, m = _form_coeffs(params, np.maximum(u, ZERO_MODULUS),
                                         np.maximum(v, ZERO_MODULUS))
    mats = _assemble_neg_hess(crr, ctt, drr, dtt, m, ph1, ph2)
    return np.einsum("n,nij->ij", mol.weights, mats)


def mollified_second_form(params: BellmanParams, eps: float, xi: ComplexPair,
                          sigma: ComplexPair, varsigma: ComplexPair,
                          order: int = 8) -> float:
    """Mollified <d2Q(xi) sigma, varsigma>."""
    mat = mollified_neg_hess_matrix(params, eps, xi, order)
    return -float(pair_to_real4(sigma) @ mat @ pair_to_real4(varsigma))


# ---------------------------------------------------------------------------
# direction sweeps and tau certification
# ---------------------------------------------------------------------------

# Kronecker (R3) low-discrepancy sequence on [0,1)^3; the generator is the
# plastic constant's inverse powers.
_R3_ALPHA = np.array([0.7548776662466927, 0.5698402909980532, 0.4301597090019468])


def unit_directions(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic sweep of n low-discrepancy unit directions in C^2, with
    the four coordinate directions prepended.

    Returns two complex arrays (s1, s2) of length n + 4.
    """
    if n < 0:
        raise DomainError("direction count must be nonnegative")
    i = np.arange(1, n + 1)[:, None]
    pts = np.mod(0.5 + i * _R3_ALPHA[None, :], 1.0)
    s = pts[:, 0]
    th1 = 2.0 * np.pi * pts[:, 1]
    th2 = 2.0 * np.pi * pts[:, 2]
    s1 = np.sqrt(1.0 - s) * np.exp(1j * th1)
    s2 = np.sqrt(s) * np.exp(1j * th2)
    coord1 = np.array([1.0, 1.0j, 0.0, 0.0], dtype=np.complex128)
    coord2 = np.array([0.0, 0.0, 1.0, 1.0j], dtype=np.complex128)
    return np.concatenate([coord1, s1]), np.concatenate([coord2, s2])


def _near_interface(params: BellmanParams, u: float, v: float, margin_rel: float) -> bool:
    t1 = u ** params.p
    t2 = v ** params.q
    return abs(t1 - t2) <= margin_rel * max(t1, t2, 1.0)


def find_tau(params: BellmanParams, xi: ComplexPair, direction_samples: int = 256,
             *, mollify: str | bool = "auto", eps: float | None = None,
             order: int = 8) -> TauCertificate:
    """Search for a shared weight tau certifying the convexity and drift
    inequalities at xi.

    The search runs a golden-section sweep over log tau in [1e-6, 1e6]
    (refined to relative width 1e-6) maximizing the minimum slack over
    ``direction_samples`` low-discrepancy unit directions plus the four
    coordinate directions, jointly with the drift slack.  Negative margins
    are reported, not raised.

    ``mollify="auto"`` switches to the mollified Hessian when xi is within
    the interface classification threshold; True forces it, False forbids it.

    Points with a vanishing modulus are evaluated in the radial limit: the
    corresponding block of -d2Q becomes isotropic as |zeta| -> 0 (the phase
    term carries a vanishing coefficient), and the blowup of the eta block
    on the v = 0 ray only strengthens the convexity inequality, so no
    singularity error is raised here.
    """
    zeta = complex(xi[0])
    eta = complex(xi[1])
    u = abs(zeta)
    v = abs(eta)
    if u <= ZERO_MODULUS and v <= ZERO_MODULUS:
        return TauCertificate(tau=1.0, margin_hessian=0.0, margin_drift=0.0, trivial=True)
    s1, s2 = unit_directions(direction_samples)
    want_moll = (mollify is True) or (
        mollify == "auto" and min(u, v) > ZERO_MODULUS
        and _near_interface(params, u, v, INTERFACE_REL_THRESHOLD))
    if want_moll:
        if eps is None:
            eps = min(1e-2 * max(u, v), 0.45 * min(u, v))
        mat = mollified_neg_hess_matrix(params, eps, xi, order)
        dirs4 = np.stack([s1.real, s1.imag, s2.real, s2.imag], axis=1)
        H = np.einsum("di,ij,dj->d", dirs4, mat, dirs4)[None, :]
    else:
        uu, vv, ph1, ph2 = _phases([zeta], [eta])
        crr, ctt, drr, dtt, m = _form_coeffs(params, np.maximum(uu, ZERO_MODULUS),
                                             np.maximum(vv, ZERO_MODULUS))
        H = _kernels.direction_forms(crr, ctt, drr, dtt, m, ph1, ph2, s1, s2)
    a1sq = (s1.real ** 2 + s1.imag ** 2)
    a2sq = (s2.real ** 2 + s2.imag ** 2)
    drift = drift_slack_base(params, np.array([u]), np.array([v]))
    tau, mdir, mdrift, worst = _kernels.tau_maximin(
        np.ascontiguousarray(H), a1sq, a2sq, drift,
        np.array([u * u]), np.array([v * v]), params.delta)
    k = int(worst[0])
    return TauCertificate(
        tau=float(tau[0]),
        margin_hessian=float(mdir[0]),
        margin_drift=float(mdrift[0]),
        worst_direction=ComplexPair(complex(s1[k]), complex(s2[k])),
    )


def check_bejaz(params: BellmanParams, xi: ComplexPair,
                direction_samples: int = 256) -> BejazReport:
    """Check the range bound and the tau-certified convexity/drift bounds at
    a single point; failures are encoded in the report, never raised."""
    zeta = complex(xi[0])
    eta = complex(xi[1])
    u = abs(zeta)
    v = abs(eta)
    slack_i = float(_kernels.prop_i_slack(params.p, params.q, params.delta,
                                          np.array([u]), np.array([v]))[0])
    cert = find_tau(params, xi, direction_samples)
    return BejazReport(xi=ComplexPair(zeta, eta), prop_i_slack=slack_i,
                       prop_ii=cert, prop_iii_slack=cert.margin_drift)


def certify_batch(params: BellmanParams, zetas, etas,
                  direction_samples: int = 256) -> dict:
    """Vectorized certification over arrays of points.

    Points are evaluated with the exact branch formulas; the caller is
    responsible for excluding interface margins and zero rays (see
    ``sample_certification_points``).  Returns a dict of flat arrays.
    """
    zetas = np.asarray(zetas, dtype=np.complex128).ravel()
    etas = np.asarray(etas, dtype=np.complex128).ravel()
    u, v, ph1, ph2 = _phases(zetas, etas)
    slack_i = _kernels.prop_i_slack(params.p, params.q, params.delta, u, v)
    crr, ctt, drr, dtt, m = _form_coeffs(params, u, v)
    s1, s2 = unit_directions(direction_samples)
    H = _kernels.direction_forms(crr, ctt, drr, dtt, m, ph1, ph2, s1, s2)
    a1sq = s1.real ** 2 + s1.imag ** 2
    a2sq = s2.real ** 2 + s2.imag ** 2
    drift = drift_slack_base(params, u, v)
    tau, mdir, mdrift, worst = _kernels.tau_maximin(H, a1sq, a2sq, drift,
                                                    u * u, v * v, params.delta)
    valid = (slack_i >= 0.0) & (mdir >= -1e-10) & (mdrift >= -1e-10)
    return {
        "prop_i_slack": np.asarray(slack_i),
        "tau": tau,
        "margin_hessian": mdir,
        "margin_drift": mdrift,
        "worst_direction": worst,
        "valid": valid,
    }


def sample_certification_points(params: BellmanParams, n: int,
                                rng: np.random.Generator,
                                modulus_range: tuple[float, float] = (1e-3, 10.0),
                                margin_rel: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Seeded sample of n points with log-uniform moduli in modulus_range
    and uniform phases, resampled until clear of the interface margin."""
    lo, hi = modulus_range
    llo, lhi = math.log(lo), math.log(hi)
    zetas = np.empty(n, dtype=np.complex128)
    etas = np.empty(n, dtype=np.complex128)
    need = np.ones(n, dtype=bool)
    while need.any():
        k = int(need.sum())
        u = np.exp(rng.uniform(llo, lhi, size=k))
        v = np.exp(rng.uniform(llo, lhi, size=k))
        a = rng.uniform(0.0, 2.0 * np.pi, size=k)
        b = rng.uniform(0.0, 2.0 * np.pi, size=k)
        t1 = u ** params.p
        t2 = v ** params.q
        good = np.abs(t1 - t2) > margin_rel * np.maximum(np.maximum(t1, t2), 1.0)
        idx = np.flatnonzero(need)[:k][good]
        zetas[idx] = u[good] * np.exp(1j * a[good])
        etas[idx] = v[good] * np.exp(1j * b[good])
        need[idx] = False
    return zetas, etas
