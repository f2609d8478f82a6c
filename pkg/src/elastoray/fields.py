"""Scalar parameter fields with exact first and second derivatives.

Material parameters (lambda, mu, rho) and foliation functions are built from
a small set of closed-form families so that the gradients and Hessians needed
by the transport equations are analytic, never gridded.  Fields support
pointwise algebra (sum, product, power, exp, log) with exact chain rules,
which keeps derived quantities such as wave speeds differentiable.

Points may be single 3-vectors of shape ``(3,)`` or batches of shape
``(..., 3)``; values, gradients and Hessians broadcast accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ScalarField:
    """Base class: a smooth function R^3 -> R with analytic derivatives."""

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # pointwise algebra -----------------------------------------------------
    def __add__(self, other):
        return SumField(self, _as_field(other))

    def __radd__(self, other):
        return SumField(_as_field(other), self)

    def __sub__(self, other):
        return SumField(self, ScaledField(_as_field(other), -1.0))

    def __rsub__(self, other):
        return SumField(_as_field(other), ScaledField(self, -1.0))

    def __mul__(self, other):
        if np.isscalar(other):
            return ScaledField(self, float(other))
        return ProductField(self, _as_field(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if np.isscalar(other):
            return ScaledField(self, 1.0 / float(other))
        return ProductField(self, PowerField(_as_field(other), -1.0))

    def __rtruediv__(self, other):
        return ScaledField(PowerField(self, -1.0), float(other))

    def __pow__(self, k):
        return PowerField(self, float(k))

    def __neg__(self):
        return ScaledField(self, -1.0)


def _as_field(v) -> ScalarField:
    if isinstance(v, ScalarField):
        return v
    return ConstantField(float(v))


def _eye_like(x: np.ndarray) -> np.ndarray:
    shape = x.shape[:-1] + (3, 3)
    out = np.zeros(shape)
    out[...] = np.eye(3)
    return out


@dataclass(frozen=True)
class ConstantField(ScalarField):
    c: float

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], self.c) if x.ndim > 1 else self.c

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (3, 3))


@dataclass(frozen=True)
class AffineField(ScalarField):
    """c0 + g . x"""

    c0: float
    g: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "g", np.asarray(self.g, dtype=float))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.c0 + x @ self.g

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.g, x.shape).copy()

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (3, 3))


@dataclass(frozen=True)
class GaussianBumpField(ScalarField):
    """amplitude * exp(-|x - center|^2 / (2 width^2))"""

    center: np.ndarray
    amplitude: float
    width: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    def value(self, x):
        d = np.asarray(x, dtype=float) - self.center
        r2 = np.sum(d * d, axis=-1)
        return self.amplitude * np.exp(-r2 / (2.0 * self.width**2))

    def gradient(self, x):
        d = np.asarray(x, dtype=float) - self.center
        v = self.value(x)
        return -d * (np.asarray(v)[..., None] / self.width**2)

    def hessian(self, x):
        d = np.asarray(x, dtype=float) - self.center
        v = np.asarray(self.value(x))[..., None, None]
        outer = d[..., :, None] * d[..., None, :]
        w2 = self.width**2
        return v * (outer / w2**2 - _eye_like(d) / w2)


@dataclass(frozen=True)
class RadialField(ScalarField):
    """Polynomial in r = |x - center|: sum_k coeffs[k] * r^k.

    Smooth away from the center; odd coefficients make the field non-smooth
    at the center itself, so keep centers outside the regions of use.
    """

    center: np.ndarray
    coeffs: tuple

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    def _r(self, x):
        d = np.asarray(x, dtype=float) - self.center
        return d, np.sqrt(np.sum(d * d, axis=-1))

    def value(self, x):
        _, r = self._r(x)
        return np.polynomial.polynomial.polyval(r, self.coeffs)

    def gradient(self, x):
        d, r = self._r(x)
        dp = np.polynomial.polynomial.polyval(r, _polyder(self.coeffs))
        rs = np.where(r == 0.0, 1.0, r)
        return d * (dp / rs)[..., None]

    def hessian(self, x):
        d, r = self._r(x)
        dp = np.polynomial.polynomial.polyval(r, _polyder(self.coeffs))
        ddp = np.polynomial.polynomial.polyval(r, _polyder(_polyder(self.coeffs)))
        rs = np.where(r == 0.0, 1.0, r)
        rh = d / rs[..., None]
        outer = rh[..., :, None] * rh[..., None, :]
        eye = _eye_like(d)
        return (
            np.asarray(ddp)[..., None, None] * outer
            + np.asarray(dp / rs)[..., None, None] * (eye - outer)
        )


def _polyder(coeffs: tuple) -> tuple:
    if len(coeffs) <= 1:
        return (0.0,)
    return tuple(k * c for k, c in enumerate(coeffs) if k > 0)


# ---------------------------------------------------------------------------
# composed fields (exact chain rules)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SumField(ScalarField):
    a: ScalarField
    b: ScalarField

    def value(self, x):
        return self.a.value(x) + self.b.value(x)

    def gradient(self, x):
        return self.a.gradient(x) + self.b.gradient(x)

    def hessian(self, x):
        return self.a.hessian(x) + self.b.hessian(x)


@dataclass(frozen=True)
class ScaledField(ScalarField):
    a: ScalarField
    s: float

    def value(self, x):
        return self.s * self.a.value(x)

    def gradient(self, x):
        return self.s * self.a.gradient(x)

    def hessian(self, x):
        return self.s * self.a.hessian(x)


@dataclass(frozen=True)
class ProductField(ScalarField):
    a: ScalarField
    b: ScalarField

    def value(self, x):
        return self.a.value(x) * self.b.value(x)

    def gradient(self, x):
        va = np.asarray(self.a.value(x))[..., None]
        vb = np.asarray(self.b.value(x))[..., None]
        return va * self.b.gradient(x) + vb * self.a.gradient(x)

    def hessian(self, x):
        va = np.asarray(self.a.value(x))[..., None, None]
        vb = np.asarray(self.b.value(x))[..., None, None]
        ga = self.a.gradient(x)
        gb = self.b.gradient(x)
        cross = ga[..., :, None] * gb[..., None, :]
        return (
            va * self.b.hessian(x)
            + vb * self.a.hessian(x)
            + cross
            + np.swapaxes(cross, -1, -2)
        )


@dataclass(frozen=True)
class PowerField(ScalarField):
    """a(x)^k for real k; a must stay positive where evaluated if k is not
    a nonnegative integer."""

    a: ScalarField
    k: float

    def value(self, x):
        return np.asarray(self.a.value(x)) ** self.k

    def gradient(self, x):
        v = np.asarray(self.a.value(x))
        return (self.k * v ** (self.k - 1.0))[..., None] * self.a.gradient(x)

    def hessian(self, x):
        v = np.asarray(self.a.value(x))
        g = self.a.gradient(x)
        outer = g[..., :, None] * g[..., None, :]
        c1 = (self.k * (self.k - 1.0) * v ** (self.k - 2.0))[..., None, None]
        c2 = (self.k * v ** (self.k - 1.0))[..., None, None]
        return c1 * outer + c2 * self.a.hessian(x)


@dataclass(frozen=True)
class ExpField(ScalarField):
    a: ScalarField

    def value(self, x):
        return np.exp(self.a.value(x))

    def gradient(self, x):
        return np.asarray(self.value(x))[..., None] * self.a.gradient(x)

    def hessian(self, x):
        v = np.asarray(self.value(x))[..., None, None]
        g = self.a.gradient(x)
        outer = g[..., :, None] * g[..., None, :]
        return v * (outer + self.a.hessian(x))


@dataclass(frozen=True)
class LogField(ScalarField):
    a: ScalarField

    def value(self, x):
        return np.log(self.a.value(x))

    def gradient(self, x):
        v = np.asarray(self.a.value(x))[..., None]
        return self.a.gradient(x) / v

    def hessian(self, x):
        v = np.asarray(self.a.value(x))
        g = self.a.gradient(x) / v[..., None]
        outer = g[..., :, None] * g[..., None, :]
        return self.a.hessian(x) / v[..., None, None] - outer


# ---------------------------------------------------------------------------
# serialization of the four scenario families
# ---------------------------------------------------------------------------

_FAMILIES = ("constant", "affine", "gaussian_bump", "radial")


def field_from_spec(spec: dict) -> ScalarField:
    """Build a field from its scenario-file descriptor."""
    fam = spec.get("family")
    if fam == "constant":
        return ConstantField(float(spec["value"]))
    if fam == "affine":
        return AffineField(float(spec["c0"]), np.asarray(spec["gradient"], dtype=float))
    if fam == "gaussian_bump":
        return GaussianBumpField(
            np.asarray(spec["center"], dtype=float),
            float(spec["amplitude"]),
            float(spec["width"]),
        )
    if fam == "radial":
        return RadialField(np.asarray(spec["center"], dtype=float), tuple(spec["coeffs"]))
    raise ValueError(f"unknown field family {fam!r}; expected one of {_FAMILIES}")


def field_to_spec(f: ScalarField) -> dict:
    if isinstance(f, ConstantField):
        return {"family": "constant", "value": f.c}
    if isinstance(f, AffineField):
        return {"family": "affine", "c0": f.c0, "gradient": list(map(float, f.g))}
    if isinstance(f, GaussianBumpField):
        return {
            "family": "gaussian_bump",
            "center": list(map(float, f.center)),
            "amplitude": f.amplitude,
            "width": f.width,
        }
    if isinstance(f, RadialField):
        return {"family": "radial", "center": list(map(float, f.center)), "coeffs": list(f.coeffs)}
    raise ValueError(f"field {type(f).__name__} is not one of the scenario families")


# ---------------------------------------------------------------------------
# finite-difference oracles (used by the test suite, exported for reuse)
# ---------------------------------------------------------------------------


def fd_gradient(f: ScalarField, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros(3)
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        out[i] = (f.value(x + e) - f.value(x - e)) / (2.0 * h)
    return out


def fd_hessian(f: ScalarField, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros((3, 3))
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        out[i] = (fd_gradient(f, x + e, h) - fd_gradient(f, x - e, h)) / (2.0 * h)
    return 0.5 * (out + out.T)
