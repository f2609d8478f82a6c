"""Piecewise-smooth isotropic elastic media.

A medium is a list of regions (each with lambda, mu, rho fields), separated
by closed interfaces given as implicit surfaces.  The implicit value orients
each interface: side "-" is where the implicit function is negative, side "+"
where it is positive, and the unit normal nu points from side- to side+.
Jump quantities [v] follow the convention (side+ value) - (side- value).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    NoFoliation,
    NonPhysical,
    OnInterfaceWithoutHint,
    OutsideAllRegions,
)
from .fields import ScalarField

ON_INTERFACE_RTOL = 1e-9


# ---------------------------------------------------------------------------
# interface shapes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlaneShape:
    point: np.ndarray
    normal: np.ndarray  # unit; implicit = (x - point) . normal

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        object.__setattr__(self, "normal", n / np.linalg.norm(n))
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))

    def implicit(self, x):
        return (np.asarray(x, dtype=float) - self.point) @ self.normal

    def implicit_gradient(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.normal, x.shape).copy()

    @property
    def natural_scale(self) -> float:
        return 1.0


@dataclass(frozen=True)
class SphereShape:
    center: np.ndarray
    radius: float  # implicit = |x - center| - radius  (side- is inside)

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    def implicit(self, x):
        d = np.asarray(x, dtype=float) - self.center
        return np.sqrt(np.sum(d * d, axis=-1)) - self.radius

    def implicit_gradient(self, x):
        d = np.asarray(x, dtype=float) - self.center
        r = np.sqrt(np.sum(d * d, axis=-1))
        r = np.where(r == 0.0, 1.0, r)
        return d / np.asarray(r)[..., None]

    @property
    def natural_scale(self) -> float:
        return self.radius


@dataclass(frozen=True)
class LevelSetShape:
    field: ScalarField
    iso: float = 0.0

    def implicit(self, x):
        return self.field.value(x) - self.iso

    def implicit_gradient(self, x):
        return self.field.gradient(x)

    @property
    def natural_scale(self) -> float:
        return 1.0


@dataclass(frozen=True)
class Interface:
    id: str
    shape: object

    def implicit(self, x):
        return self.shape.implicit(x)

    def side(self, x) -> int:
        return 1 if self.implicit(x) >= 0.0 else -1

    def normal(self, x) -> np.ndarray:
        """Unit normal oriented side- -> side+ (direction of increasing implicit)."""
        g = self.shape.implicit_gradient(x)
        n = np.linalg.norm(g, axis=-1)
        if np.any(n == 0.0):
            raise ValueError(f"degenerate level set on interface {self.id!r}")
        return g / np.asarray(n)[..., None]

    def on_interface(self, x, rtol: float = ON_INTERFACE_RTOL) -> bool:
        return abs(float(self.implicit(x))) < rtol * self.shape.natural_scale


# ---------------------------------------------------------------------------
# regions and the medium
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Region:
    """Region selected by interface side signs; holds the parameter fields."""

    name: str
    signs: dict  # interface id -> required sign (+1 / -1); absent = don't care
    lam: ScalarField
    mu: ScalarField
    rho: ScalarField

    def params(self, x):
        return self.lam.value(x), self.mu.value(x), self.rho.value(x)

    def speed(self, x, mode: str):
        lam, mu, rho = self.params(x)
        if mode == "P":
            return np.sqrt((lam + 2.0 * mu) / rho)
        if mode == "S":
            return np.sqrt(mu / rho)
        raise ValueError(f"mode must be 'P' or 'S', got {mode!r}")

    def grad_log_speed(self, x, mode: str):
        """grad log c_mode = (grad m / m - grad rho / rho) / 2, m = lam+2mu or mu."""
        rho = np.asarray(self.rho.value(x))
        grho = self.rho.gradient(x)
        if mode == "P":
            m = np.asarray(self.lam.value(x)) + 2.0 * np.asarray(self.mu.value(x))
            gm = self.lam.gradient(x) + 2.0 * self.mu.gradient(x)
        elif mode == "S":
            m = np.asarray(self.mu.value(x))
            gm = self.mu.gradient(x)
        else:
            raise ValueError(f"mode must be 'P' or 'S', got {mode!r}")
        return 0.5 * (gm / m[..., None] - grho / rho[..., None])


@dataclass(frozen=True)
class BoxDomain:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def exit_margin(self, x) -> float:
        """Positive inside, negative outside (smallest face distance)."""
        x = np.asarray(x, dtype=float)
        return float(min(np.min(x - self.lo), np.min(self.hi - x)))


@dataclass(frozen=True)
class ElasticMedium:
    regions: Sequence[Region]
    interfaces: Sequence[Interface] = ()
    foliation: Optional[ScalarField] = None
    domain: BoxDomain = dc_field(
        default_factory=lambda: BoxDomain(np.full(3, -50.0), np.full(3, 50.0))
    )

    def interface_by_id(self, iface_id: str) -> Interface:
        for itf in self.interfaces:
            if itf.id == iface_id:
                return itf
        raise KeyError(iface_id)

    # -- region resolution ---------------------------------------------------

    def region_at(self, x, side_hint: Optional[tuple] = None) -> Region:
        """Locate the region containing x.

        side_hint is an (interface_id, sign) pair used when x sits on that
        interface within tolerance.
        """
        signs = {}
        for itf in self.interfaces:
            if side_hint is not None and itf.id == side_hint[0]:
                signs[itf.id] = int(side_hint[1])
                continue
            if itf.on_interface(x):
                raise OnInterfaceWithoutHint(
                    f"point {np.asarray(x)} lies on interface {itf.id!r}; pass a side hint"
                )
            signs[itf.id] = itf.side(x)
        for region in self.regions:
            if all(signs[k] == v for k, v in region.signs.items()):
                return region
        raise OutsideAllRegions(f"no region matches side signs {signs} at {np.asarray(x)}")

    def eval_params(self, x, side_hint: Optional[tuple] = None):
        return self.region_at(x, side_hint).params(x)

    def wave_speeds(self, x, side_hint: Optional[tuple] = None):
        lam, mu, rho = self.eval_params(x, side_hint)
        if not (mu > 0.0 and 3.0 * lam + 2.0 * mu > 0.0):
            raise NonPhysical(
                f"strong convexity violated at {np.asarray(x)}: mu={mu}, 3*lam+2*mu={3*lam+2*mu}"
            )
        c_p = np.sqrt((lam + 2.0 * mu) / rho)
        c_s = np.sqrt(mu / rho)
        return c_p, c_s

    def speed(self, x, mode: str, side_hint: Optional[tuple] = None):
        c_p, c_s = self.wave_speeds(x, side_hint)
        return c_p if mode == "P" else c_s

    def grad_log_speed(self, x, mode: str, side_hint: Optional[tuple] = None):
        return self.region_at(x, side_hint).grad_log_speed(x, mode)

    # -- interface crossing ----------------------------------------------------

    def interface_crossing(self, x_start, x_end, tol: float = 1e-12):
        """Earliest interface crossing on the straight segment, or None.

        Returns (interface_id, crossing point, parameter fraction); the
        fraction is located by bisection on the implicit function to `tol`.
        """
        x0 = np.asarray(x_start, dtype=float)
        x1 = np.asarray(x_end, dtype=float)
        best = None
        for itf in self.interfaces:
            f0 = float(itf.implicit(x0))
            f1 = float(itf.implicit(x1))
            if f0 == 0.0:
                frac = 0.0
            elif f0 * f1 > 0.0:
                continue
            else:
                lo, hi = 0.0, 1.0
                flo = f0
                while hi - lo > tol:
                    mid = 0.5 * (lo + hi)
                    fm = float(itf.implicit(x0 + mid * (x1 - x0)))
                    if fm == 0.0:
                        lo = hi = mid
                        break
                    if flo * fm < 0.0:
                        hi = mid
                    else:
                        lo, flo = mid, fm
                frac = 0.5 * (lo + hi)
            if best is None or frac < best[2]:
                best = (itf.id, x0 + frac * (x1 - x0), frac)
        return best

    # -- foliation --------------------------------------------------------------

    def foliation_value(self, x) -> float:
        if self.foliation is None:
            raise NoFoliation("medium has no foliation field")
        return float(self.foliation.value(x))

    def foliation_convexity_probe(
        self,
        q: float,
        n_samples: int = 8,
        mode: str = "P",
        probe_arclength: float = 0.2,
        rng: Optional[np.random.Generator] = None,
    ) -> "FoliationProbeReport":
        """Empirically probe geodesic convexity of the level set kappa = q.

        Short mode-geodesics are launched tangent to the level set; a level
        set is convex viewed from kappa > q when tangent geodesics drift into
        kappa > q.  This is a sampled check, not a proof.
        """
        from .raytrace import PhasePoint, integrate_segment  # local import, no cycle at module load

        if self.foliation is None:
            raise NoFoliation("medium has no foliation field")
        rng = rng or np.random.default_rng(0)
        samples = []
        found = 0
        attempts = 0
        while found < n_samples and attempts < 50 * n_samples:
            attempts += 1
            x = rng.uniform(self.domain.lo * 0.5, self.domain.hi * 0.5)
            x = self._project_to_level(x, q)
            if x is None or not self.domain.contains(x):
                continue
            try:
                self.region_at(x)
            except (OnInterfaceWithoutHint, OutsideAllRegions):
                continue
            g = np.asarray(self.foliation.gradient(x))
            gn = np.linalg.norm(g)
            if gn == 0.0:
                continue
            tangent = _any_orthonormal(g / gn)[0]
            c = self.speed(x, mode)
            start = PhasePoint(t=0.0, x=x, xi=tangent / c, tau=1.0, mode=mode)
            seg, _ = integrate_segment(self, start, max_s=probe_arclength)
            drift = float(self.foliation.value(seg.x_vals[-1])) - q
            samples.append((x.copy(), drift))
            found += 1
        drifts = np.array([d for _, d in samples]) if samples else np.zeros(0)
        return FoliationProbeReport(
            q=q,
            mode=mode,
            points=[p for p, _ in samples],
            drifts=drifts,
            convex=bool(len(drifts) > 0 and np.all(drifts > -1e-9)),
        )

    def _project_to_level(self, x, q, iters: int = 60):
        x = np.asarray(x, dtype=float).copy()
        for _ in range(iters):
            v = float(self.foliation.value(x)) - q
            g = np.asarray(self.foliation.gradient(x))
            g2 = float(g @ g)
            if g2 == 0.0:
                return None
            x -= v * g / g2
            if abs(v) < 1e-13:
                return x
        return x if abs(float(self.foliation.value(x)) - q) < 1e-10 else None

    # -- validation ----------------------------------------------------------

    def validate(self, samples_per_region: int = 10_000, seed: int = 0) -> None:
        """Sample-based invariant checks; raises NonPhysical / ValueError."""
        rng = np.random.default_rng(seed)
        pts = rng.uniform(self.domain.lo, self.domain.hi, size=(samples_per_region, 3))
        for region in self.regions:
            ok = np.ones(len(pts), dtype=bool)
            for itf in self.interfaces:
                want = region.signs.get(itf.id)
                if want is None:
                    continue
                vals = np.asarray(itf.implicit(pts))
                ok &= (vals >= 0) == (want > 0)
                ok &= np.abs(vals) > 1e-9 * itf.shape.natural_scale
            sub = pts[ok]
            if len(sub) == 0:
                continue
            lam = np.asarray(region.lam.value(sub))
            mu = np.asarray(region.mu.value(sub))
            rho = np.asarray(region.rho.value(sub))
            if np.any(mu <= 0) or np.any(3.0 * lam + 2.0 * mu <= 0):
                i = int(np.argmin(np.minimum(mu, 3 * lam + 2 * mu)))
                raise NonPhysical(
                    f"strong convexity 'mu>0 and 3*lam+2*mu>0' fails in region "
                    f"{region.name!r} at sample {sub[i]}"
                )
            if np.any(rho <= 0):
                raise NonPhysical(f"rho <= 0 sampled in region {region.name!r}")
            c_p2 = (lam + 2 * mu) / rho
            c_s2 = mu / rho
            if np.any(c_p2 <= c_s2) or np.any(c_s2 <= 0):
                raise NonPhysical(f"speed ordering c_P > c_S > 0 fails in region {region.name!r}")
        self._check_interfaces_disjoint(rng)

    def _check_interfaces_disjoint(self, rng, n: int = 4000) -> None:
        if len(self.interfaces) < 2:
            return
        pts = rng.uniform(self.domain.lo, self.domain.hi, size=(n, 3))
        for i, a in enumerate(self.interfaces):
            near_a = np.abs(np.asarray(a.implicit(pts))) < 1e-6 * a.shape.natural_scale
            for b in self.interfaces[i + 1 :]:
                near_b = np.abs(np.asarray(b.implicit(pts))) < 1e-6 * b.shape.natural_scale
                if np.any(near_a & near_b):
                    raise ValueError(f"interfaces {a.id!r} and {b.id!r} intersect at sampled resolution")


@dataclass
class FoliationProbeReport:
    q: float
    mode: str
    points: list
    drifts: np.ndarray
    convex: bool


def _any_orthonormal(n: np.ndarray):
    """Two unit vectors completing n to an orthonormal frame (deterministic)."""
    n = np.asarray(n, dtype=float)
    a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(n, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return e1, e2


# convenience constructors ---------------------------------------------------


def homogeneous_medium(lam: float, mu: float, rho: float, **kw) -> ElasticMedium:
    from .fields import ConstantField

    region = Region(
        "all", {}, ConstantField(lam), ConstantField(mu), ConstantField(rho)
    )
    return ElasticMedium(regions=[region], interfaces=[], **kw)


def two_halfspace_medium(
    lam_minus, mu_minus, rho_minus, lam_plus, mu_plus, rho_plus,
    point=(0.0, 0.0, 0.0), normal=(0.0, 0.0, 1.0), **kw
) -> ElasticMedium:
    """Two half-spaces split by a plane; side- has the first parameter set."""
    from .fields import ConstantField as C

    def _f(v):
        return v if isinstance(v, ScalarField) else C(float(v))

    itf = Interface("iface0", PlaneShape(np.asarray(point), np.asarray(normal)))
    below = Region("side-", {"iface0": -1}, _f(lam_minus), _f(mu_minus), _f(rho_minus))
    above = Region("side+", {"iface0": 1}, _f(lam_plus), _f(mu_plus), _f(rho_plus))
    return ElasticMedium(regions=[below, above], interfaces=[itf], **kw)
