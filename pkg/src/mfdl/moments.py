"""Gaussian moments of activations and their derivatives.

The signal-propagation recursions need four expectation families, with
u1 = sqrt(qa)*z1 and u2 = sqrt(qb)*(c*z1 + sqrt(1-c^2)*z2):

    phi_sq     E[phi(sqrt(q) z)^2]
    dphi_sq    E[phi'(sqrt(q) z)^2]
    phi_cross  E[phi(u1) phi(u2)]
    dphi_cross E[phi'(u1) phi'(u2)]

Generic Gauss-Hermite quadrature is exact for polynomials and excellent for
analytic integrands at moderate variance, but it degrades badly for
integrands with kinks or jumps (HardTanh's derivative is an indicator;
measured error ~1e-2 at order 64) and for saturating functions once the
variance pushes their transition region below the node spacing (Tanh and
Erf at q >> 1).  This module therefore dispatches per activation:

  - Linear, ReLU, Erf: closed forms (orthant/arc-cosine kernels for ReLU,
    arcsine/determinant identities for Erf).
  - HardTanh: closed forms via the normal CDF; the bivariate pair uses the
    rectangle probability of a correlated Gaussian pair (Owen's T), and the
    value cross-moment integrates that rectangle over the correlation
    (Price's theorem, with a Gauss-Legendre rule in the correlation).
  - Tanh: univariate moments via a scale-adaptive composite Gauss-Legendre
    rule on the saturation variable (exact at any q); bivariate moments via
    tensor Gauss-Hermite on the supplied rule (accurate for the moderate
    fixed-point variances this package targets).

At |c| = 1 every bivariate moment reduces exactly to its univariate
counterpart, so downstream identities (e.g. the two slope quantities
coinciding at a fully correlated fixed point without dropout) hold to
machine precision rather than to quadrature tolerance.

All values are continuous extensions in q: limits as q -> 0+ are used at
q = 0 (e.g. E[phi'(sqrt(q) z)^2] -> 1/2 for ReLU).
"""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtr, owens_t

from .activations import Activation
from .errors import ConfigError
from .quadrature import QuadratureRule, expect1, expect2

_SQRT2 = math.sqrt(2.0)


def _check_q(q: float, name: str = "q") -> float:
    q = float(q)
    if not np.isfinite(q) or q < 0.0:
        raise ConfigError(f"{name} must be finite and >= 0, got {q!r}")
    return q


def _check_c(c: float) -> float:
    c = float(c)
    if not np.isfinite(c) or abs(c) > 1.0:
        raise ConfigError(f"correlation must lie in [-1, 1], got {c!r}")
    return c


# ---------------------------------------------------------------------------
# Tanh: composite Gauss-Legendre in the saturation variable.
#
# E[g(sqrt(q) z)] = int g(u) N(u; 0, q) du for even g that differs from its
# limit only on |u| <~ 15 (sech^2, sech^4).  Panel widths follow
# min(sqrt(q), 1) geometrically so both the Gaussian scale and the
# saturation scale are resolved at every q.
# ---------------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = leggauss(24)
_TANH_CUTOFF = 20.0


def _even_decay_integral(g, q: float) -> float:
    """2 * int_0^inf g(u) N(u; 0, q) du for even, rapidly decaying g."""
    if q == 0.0:
        return float(g(np.zeros(1))[0])
    s = 0.5 * min(math.sqrt(q), 1.0)
    edges = [0.0]
    while edges[-1] < _TANH_CUTOFF:
        edges.append(min(max(s, 2.0 * edges[-1]), _TANH_CUTOFF))
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
        u = mid + half * _GL_NODES
        pdf = np.exp(-u * u / (2.0 * q)) / math.sqrt(2.0 * math.pi * q)
        total += half * float(np.dot(_GL_WEIGHTS, g(u) * pdf))
    return 2.0 * total


def _sech2(u: np.ndarray) -> np.ndarray:
    return 1.0 / np.cosh(u) ** 2


def _sech4(u: np.ndarray) -> np.ndarray:
    return 1.0 / np.cosh(u) ** 4


def _tanh_sq(q: float) -> float:
    return 1.0 - _even_decay_integral(_sech2, q)


def _tanh_dsq(q: float) -> float:
    # phi' = sech^2, so phi'^2 = sech^4
    return _even_decay_integral(_sech4, q)


# ---------------------------------------------------------------------------
# HardTanh closed forms.
# ---------------------------------------------------------------------------


def _hardtanh_sq(q: float) -> float:
    if q == 0.0:
        return 0.0
    a = 1.0 / math.sqrt(q)
    pdf = math.exp(-0.5 * a * a) / math.sqrt(2.0 * math.pi)
    inside = math.erf(a / _SQRT2)  # P(|z| < a)
    return q * (inside - 2.0 * a * pdf) + (1.0 - inside)


def _hardtanh_dsq(q: float) -> float:
    if q == 0.0:
        return 1.0
    return math.erf(1.0 / math.sqrt(2.0 * q))


def bvn_cdf(h: float, k: float, r: float) -> float:
    """P(X <= h, Y <= k) for standard bivariate normal (X, Y) with corr r.

    Owen's T-function formula; |r| = 1 degenerates to the one-dimensional
    comonotone/antimonotone cases.
    """
    if abs(r) >= 1.0:
        if r >= 1.0:
            return float(ndtr(min(h, k)))
        return float(max(0.0, ndtr(h) + ndtr(k) - 1.0))
    rr = math.sqrt(1.0 - r * r)
    if h == 0.0 and k == 0.0:
        return 0.25 + math.asin(r) / (2.0 * math.pi)
    if h == 0.0:
        return float(0.5 * ndtr(k) - owens_t(k, -r / rr))
    if k == 0.0:
        return float(0.5 * ndtr(h) - owens_t(h, -r / rr))
    ah = (k - r * h) / (h * rr)
    ak = (h - r * k) / (k * rr)
    delta = 0.0 if h * k > 0.0 else 0.5
    return float(0.5 * (ndtr(h) + ndtr(k)) - owens_t(h, ah) - owens_t(k, ak) - delta)


def _rectangle_prob(alpha: float, beta: float, r) -> np.ndarray:
    """P(|X| < alpha, |Y| < beta) for standard bivariate normal, vectorized in r."""
    r = np.atleast_1d(np.asarray(r, dtype=np.float64))
    out = np.empty_like(r)
    for i, ri in enumerate(r):
        out[i] = (
            bvn_cdf(alpha, beta, ri)
            - bvn_cdf(alpha, -beta, ri)
            - bvn_cdf(-alpha, beta, ri)
            + bvn_cdf(-alpha, -beta, ri)
        )
    return out


_GL_CORR_NODES, _GL_CORR_WEIGHTS = leggauss(48)


def _hardtanh_dcross(qa: float, qb: float, c: float) -> float:
    alpha = 1.0 / math.sqrt(qa)
    beta = 1.0 / math.sqrt(qb)
    return float(_rectangle_prob(alpha, beta, c)[0])


def _hardtanh_cross(qa: float, qb: float, c: float) -> float:
    # Price's theorem: d/dc E[phi(u1) phi(u2)] = sqrt(qa*qb) E[phi'(u1) phi'(u2)],
    # and the cross moment vanishes at c = 0 because phi is odd.
    alpha = 1.0 / math.sqrt(qa)
    beta = 1.0 / math.sqrt(qb)
    half = 0.5 * c
    t = half + half * _GL_CORR_NODES
    vals = _rectangle_prob(alpha, beta, t)
    return math.sqrt(qa * qb) * half * float(np.dot(_GL_CORR_WEIGHTS, vals))


# ---------------------------------------------------------------------------
# ReLU closed forms (arc-cosine kernel family).
# ---------------------------------------------------------------------------


def _relu_cross_kernel(c: float) -> float:
    # E[relu(X) relu(Y)] for standard bivariate normal with corr c
    c = min(max(c, -1.0), 1.0)
    return (math.sqrt(max(0.0, 1.0 - c * c)) + c * (math.pi - math.acos(c))) / (
        2.0 * math.pi
    )


def _relu_dcross_kernel(c: float) -> float:
    # P(X > 0, Y > 0) orthant probability
    c = min(max(c, -1.0), 1.0)
    return 0.25 + math.asin(c) / (2.0 * math.pi)


# ---------------------------------------------------------------------------
# Erf closed forms (arcsine / determinant identities), phi(z) = erf(az) with
# a = sqrt(pi)/2.  2*a^2 = pi/2 appears throughout.
# ---------------------------------------------------------------------------

_HALF_PI = math.pi / 2.0


def _erf_sq(q: float) -> float:
    return (2.0 / math.pi) * math.asin(_HALF_PI * q / (1.0 + _HALF_PI * q))


def _erf_dsq(q: float) -> float:
    return 1.0 / math.sqrt(1.0 + math.pi * q)


def _erf_cross(qa: float, qb: float, c: float) -> float:
    arg = _HALF_PI * math.sqrt(qa * qb) * c
    arg /= math.sqrt((1.0 + _HALF_PI * qa) * (1.0 + _HALF_PI * qb))
    return (2.0 / math.pi) * math.asin(min(max(arg, -1.0), 1.0))


def _erf_dcross(qa: float, qb: float, c: float) -> float:
    det = (1.0 + _HALF_PI * qa) * (1.0 + _HALF_PI * qb) - _HALF_PI**2 * qa * qb * c * c
    return 1.0 / math.sqrt(det)


# ---------------------------------------------------------------------------
# Generic quadrature fallbacks.
# ---------------------------------------------------------------------------


def _gh_sq(act: Activation, q: float, rule: QuadratureRule) -> float:
    s = math.sqrt(q)
    return expect1(lambda z: act.value_at(s * z) ** 2, rule)


def _gh_dsq(act: Activation, q: float, rule: QuadratureRule) -> float:
    s = math.sqrt(q)
    return expect1(lambda z: act.derivative_at(s * z) ** 2, rule)


def _gh_cross(act, qa: float, qb: float, c: float, rule: QuadratureRule, deriv: bool) -> float:
    f = act.derivative_at if deriv else act.value_at
    sa, sb = math.sqrt(qa), math.sqrt(qb)
    if abs(c) == 1.0:
        sign = 1.0 if c > 0 else -1.0
        return expect1(lambda z: f(sa * z) * f(sign * sb * z), rule)
    t = math.sqrt(1.0 - c * c)
    return expect2(lambda z1, z2: f(sa * z1) * f(sb * (c * z1 + t * z2)), c, rule)


# ---------------------------------------------------------------------------
# Public dispatch.
# ---------------------------------------------------------------------------


def phi_sq(act: Activation, q: float, rule: QuadratureRule) -> float:
    """E[phi(sqrt(q) z)^2] under the standard normal measure."""
    q = _check_q(q)
    if act is Activation.LINEAR:
        return q
    if act is Activation.RELU:
        return 0.5 * q
    if act is Activation.ERF:
        return _erf_sq(q)
    if act is Activation.HARDTANH:
        return _hardtanh_sq(q)
    return _tanh_sq(q)


def dphi_sq(act: Activation, q: float, rule: QuadratureRule) -> float:
    """E[phi'(sqrt(q) z)^2] under the standard normal measure."""
    q = _check_q(q)
    if act is Activation.LINEAR:
        return 1.0
    if act is Activation.RELU:
        return 0.5
    if act is Activation.ERF:
        return _erf_dsq(q)
    if act is Activation.HARDTANH:
        return _hardtanh_dsq(q)
    return _tanh_dsq(q)


def phi_cross(act: Activation, qa: float, qb: float, c: float, rule: QuadratureRule) -> float:
    """E[phi(u1) phi(u2)] for the correlated pair construction."""
    qa = _check_q(qa, "qa")
    qb = _check_q(qb, "qb")
    c = _check_c(c)
    if qa == 0.0 or qb == 0.0:
        return 0.0  # phi(0) = 0 for every kind
    if abs(c) == 1.0 and qa == qb:
        return math.copysign(1.0, c) * phi_sq(act, qa, rule)
    if act is Activation.LINEAR:
        return math.sqrt(qa * qb) * c
    if act is Activation.RELU:
        return math.sqrt(qa * qb) * _relu_cross_kernel(c)
    if act is Activation.ERF:
        return _erf_cross(qa, qb, c)
    if act is Activation.HARDTANH:
        return _hardtanh_cross(qa, qb, c)
    return _gh_cross(act, qa, qb, c, rule, deriv=False)


def dphi_cross(act: Activation, qa: float, qb: float, c: float, rule: QuadratureRule) -> float:
    """E[phi'(u1) phi'(u2)] for the correlated pair construction."""
    qa = _check_q(qa, "qa")
    qb = _check_q(qb, "qb")
    c = _check_c(c)
    if abs(c) == 1.0 and qa == qb:
        if c > 0:
            return dphi_sq(act, qa, rule)
        # phi'(-u) = phi'(u) for every kind except ReLU, where theta(-u)theta(u) = 0
        return 0.0 if act is Activation.RELU else dphi_sq(act, qa, rule)
    if act is Activation.LINEAR:
        return 1.0
    if act is Activation.RELU:
        return _relu_dcross_kernel(c)
    if act is Activation.ERF:
        return _erf_dcross(qa, qb, c)
    if act is Activation.HARDTANH:
        return _hardtanh_dcross(qa, qb, c)
    return _gh_cross(act, qa, qb, c, rule, deriv=True)
