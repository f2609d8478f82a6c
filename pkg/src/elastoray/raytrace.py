"""P/S bicharacteristic integration and broken-ray assembly.

Rays are parametrized by Euclidean arclength s and carry a phase-space state
(t, x, xi, tau) with tau conserved.  With direction = +1 the equations are

    dx/ds = +xi/|xi|,   dxi/ds = -|xi| grad_x log c,   dt/ds = +1/c,

and the characteristic condition c(x)|xi| = |tau| is a first integral.
Interfaces join segments by Snell's law: the tangential covector is
continuous, the normal component is +/- sqrt(tau^2/c^2 - |xi_tan|^2) with c
the outgoing mode's speed on the outgoing side.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    CharacteristicViolation,
    GlancingRay,
    NoReturn,
    PolicyExhausted,
    StepFailure,
)
from .medium import ElasticMedium, Region

GLANCING_TOL = 1e-3
CRITICAL_RADICAND_TOL = 1e-12


@dataclass
class PhasePoint:
    """A point (t, x, xi) of phase space with conserved frequency tau."""

    t: float
    x: np.ndarray
    xi: np.ndarray
    tau: float = 1.0
    mode: str = "P"
    direction: int = 1

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)
        if np.linalg.norm(self.xi) == 0.0:
            raise ValueError("xi must be nonzero")

    def characteristic_residual(self, medium: ElasticMedium, side_hint=None) -> float:
        c = medium.speed(self.x, self.mode, side_hint)
        return abs(c * np.linalg.norm(self.xi) - abs(self.tau)) / abs(self.tau)

    def unit_direction(self) -> np.ndarray:
        return self.direction * self.xi / np.linalg.norm(self.xi)


def launch(medium: ElasticMedium, x, direction_vec, mode="P", tau=1.0, t=0.0,
           side_hint=None, sign=1) -> PhasePoint:
    """Phase point at x moving along direction_vec with |xi| = tau / c."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(direction_vec, dtype=float)
    d = d / np.linalg.norm(d)
    c = medium.speed(x, mode, side_hint)
    return PhasePoint(t=t, x=x, xi=(tau / c) * d, tau=tau, mode=mode, direction=sign)


class Termination(Enum):
    INTERFACE = "interface"
    DOMAIN_EXIT = "domain_exit"
    MAX_S = "max_s"
    SURFACE = "surface"  # auxiliary level-set event (lens relation)


@dataclass
class RaySegment:
    s_vals: np.ndarray
    t_vals: np.ndarray
    x_vals: np.ndarray  # (n, 3)
    xi_vals: np.ndarray  # (n, 3)
    mode: str
    direction: int
    tau: float
    region_name: str
    termination: Termination
    interface_id: Optional[str] = None
    sol: object = None  # scipy OdeSolution over [0, s_end]
    char_drift: float = 0.0

    @property
    def s_end(self) -> float:
        return float(self.s_vals[-1])

    def state_at(self, s: float) -> PhasePoint:
        y = self.sol(s)
        return PhasePoint(t=float(y[6]), x=y[0:3].copy(), xi=y[3:6].copy(),
                          tau=self.tau, mode=self.mode, direction=self.direction)

    def end_point(self) -> PhasePoint:
        return PhasePoint(t=float(self.t_vals[-1]), x=self.x_vals[-1].copy(),
                          xi=self.xi_vals[-1].copy(), tau=self.tau,
                          mode=self.mode, direction=self.direction)


def _rhs_factory(region: Region, mode: str, direction: int) -> Callable:
    def rhs(_s, y):
        x = y[0:3]
        xi = y[3:6]
        nrm = np.linalg.norm(xi)
        c = float(region.speed(x, mode))
        dx = direction * xi / nrm
        dxi = -direction * nrm * region.grad_log_speed(x, mode)
        dt = direction / c
        return np.concatenate([dx, dxi, [dt]])

    return rhs


def integrate_segment(
    medium: ElasticMedium,
    start: PhasePoint,
    max_s: float,
    rtol: float = 1e-11,
    atol: float = 1e-11,
    side_hint=None,
    departing=None,
    extra_events: Sequence = (),
    n_samples: Optional[int] = None,
    drift_fail: float = 1e-6,
):
    """Integrate one smooth-region bicharacteristic segment.

    Stops at the earliest interface hit, a domain exit, an extra level-set
    event, or max_s.  Interface hits are localized on the dense interpolant
    by bisection to 1e-12 in s.

    departing is an optional (interface_id, sign_of_normal_speed) pair that
    gates that interface's event near s = 0 so a segment may start exactly
    on the interface it just left.

    Returns (RaySegment, Termination).
    """
    region = medium.region_at(start.x, side_hint)
    rhs = _rhs_factory(region, start.mode, start.direction)
    y0 = np.concatenate([start.x, start.xi, [start.t]])

    gate_s = min(1e-6, 0.01 * max_s)
    events = []
    event_meta = []
    for itf in medium.interfaces:
        def make_event(interface=itf):
            if departing is not None and departing[0] == interface.id:
                dep_sign = float(np.sign(departing[1])) or 1.0

                def ev(s, y, interface=interface, dep_sign=dep_sign):
                    if s < gate_s:
                        return dep_sign
                    return float(interface.implicit(y[0:3]))

                return ev

            def ev(s, y, interface=interface):
                return float(interface.implicit(y[0:3]))

            return ev

        e = make_event()
        e.terminal = True
        events.append(e)
        event_meta.append(("interface", itf.id))

    def domain_event(_s, y):
        return medium.domain.exit_margin(y[0:3])

    domain_event.terminal = True
    events.append(domain_event)
    event_meta.append(("domain", None))

    for k, ee in enumerate(extra_events):
        ee.terminal = True
        events.append(ee)
        event_meta.append(("surface", k))

    try:
        res = solve_ivp(rhs, (0.0, max_s), y0, method="RK45", rtol=rtol, atol=atol,
                        dense_output=True, events=events)
    except Exception as exc:  # pragma: no cover - defensive
        raise StepFailure(str(exc)) from exc
    if not res.success:
        raise StepFailure(res.message)

    s_end = float(res.t[-1])
    termination = Termination.MAX_S
    interface_id = None
    if res.status == 1:  # event fired
        fired = [(float(te[0]), idx) for idx, te in enumerate(res.t_events) if len(te)]
        s_end, idx = min(fired)
        kind, meta = event_meta[idx]
        if kind == "interface":
            termination = Termination.INTERFACE
            interface_id = meta
            s_end = _bisect_event(events[idx], res.sol, s_end)
        elif kind == "domain":
            termination = Termination.DOMAIN_EXIT
        else:
            termination = Termination.SURFACE
            s_end = _bisect_event(events[idx], res.sol, s_end)

    if n_samples is None:
        n_samples = max(64, int(24 * s_end) + 2)
    s_vals = np.linspace(0.0, s_end, n_samples)
    ys = res.sol(s_vals)
    x_vals = ys[0:3].T
    xi_vals = ys[3:6].T
    t_vals = ys[6]

    c_vals = np.asarray(region.speed(x_vals, start.mode))
    drift = float(np.max(np.abs(c_vals * np.linalg.norm(xi_vals, axis=1) - abs(start.tau)))
                  / abs(start.tau))
    if drift > drift_fail:
        raise CharacteristicViolation(
            f"characteristic drift {drift:.3e} exceeds {drift_fail:.1e}"
        )

    seg = RaySegment(
        s_vals=s_vals, t_vals=t_vals, x_vals=x_vals, xi_vals=xi_vals,
        mode=start.mode, direction=start.direction, tau=start.tau,
        region_name=region.name, termination=termination,
        interface_id=interface_id, sol=res.sol, char_drift=drift,
    )
    return seg, termination


def _bisect_event(event: Callable, sol, s_hit: float, tol: float = 1e-12) -> float:
    """Refine an event root on the dense interpolant to |ds| <= tol."""
    lo = max(0.0, s_hit - 1e-6)
    hi = min(float(sol.t_max), s_hit + 1e-6)
    flo = event(lo, sol(lo))
    fhi = event(hi, sol(hi))
    if flo * fhi > 0:
        return s_hit
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = event(mid, sol(mid))
        if fm == 0.0:
            return mid
        if flo * fm < 0.0:
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Snell branching at interfaces
# ---------------------------------------------------------------------------


@dataclass
class Branch:
    point: PhasePoint
    kind: str  # 'R' | 'T'
    mode: str  # 'P' | 'S'
    evanescent: bool
    q_signed: complex  # coefficient of nu in the outgoing covector
    side_sign: int  # side of the interface the branch lives on
    incidence_cos: float  # |xi . nu| / |xi| of the incident ray


def snell_branches(
    medium: ElasticMedium,
    hit: PhasePoint,
    interface_id: str,
    glancing_tol: float = GLANCING_TOL,
) -> list:
    """All R/T x P/S branches at an interface hit.

    Tangential slowness is preserved exactly.  An outgoing branch with
    negative radicand tau^2/c^2 - |xi_tan|^2 is flagged evanescent; its
    q_signed stores the imaginary normal slowness with the sign chosen so
    the wave decays away from the interface on its own side.  Exactly
    critical radicands (|radicand| < 1e-12 relative) are classified
    evanescent.
    """
    itf = medium.interface_by_id(interface_id)
    nu = itf.normal(hit.x)
    xi = hit.xi
    xi_norm = np.linalg.norm(xi)
    u = hit.direction * xi / xi_norm
    cos_inc = float(u @ nu)
    if abs(cos_inc) <= glancing_tol:
        raise GlancingRay(
            f"|xi.nu|/|xi| = {abs(cos_inc):.3e} <= {glancing_tol:.1e} at {interface_id!r}"
        )
    approach = 1 if cos_inc > 0 else -1
    incident_side = -approach
    xi_tan = xi - (xi @ nu) * nu
    tan2 = float(xi_tan @ xi_tan)

    out = []
    for kind in ("R", "T"):
        side_sign = incident_side if kind == "R" else -incident_side
        for mode in ("P", "S"):
            c_out = medium.speed(hit.x, mode, side_hint=(interface_id, side_sign))
            rad = (hit.tau / c_out) ** 2 - tan2
            crit = CRITICAL_RADICAND_TOL * (hit.tau / c_out) ** 2
            if rad > crit:
                q = side_sign * np.sqrt(rad) * (1 if kind == "T" else 1)
                # propagating: normal component sign = side the branch departs into
                q_signed = complex(side_sign * np.sqrt(rad))
                xi_out = xi_tan + side_sign * np.sqrt(rad) * nu
                pt = PhasePoint(t=hit.t, x=hit.x.copy(), xi=xi_out, tau=hit.tau,
                                mode=mode, direction=hit.direction)
                evan = False
            else:
                q_signed = 1j * side_sign * np.sqrt(max(-rad, 0.0))
                pt = PhasePoint(t=hit.t, x=hit.x.copy(), xi=xi_tan if tan2 > 0 else xi,
                                tau=hit.tau, mode=mode, direction=hit.direction)
                evan = True
            out.append(Branch(point=pt, kind=kind, mode=mode, evanescent=evan,
                              q_signed=q_signed, side_sign=side_sign,
                              incidence_cos=abs(cos_inc)))
    return out


# ---------------------------------------------------------------------------
# broken rays
# ---------------------------------------------------------------------------


@dataclass
class Event:
    kind: str
    incident_mode: str
    outgoing_mode: str
    interface_id: str
    covector_in: PhasePoint
    covector_out: PhasePoint
    side_in: int
    side_out: int


@dataclass
class BrokenRay:
    segments: list
    events: list

    @property
    def total_s(self) -> float:
        return float(sum(seg.s_end for seg in self.segments))

    @property
    def total_t(self) -> float:
        return float(self.segments[-1].t_vals[-1] - self.segments[0].t_vals[0])

    def end_point(self) -> PhasePoint:
        return self.segments[-1].end_point()

    def tangential_jumps(self, medium: ElasticMedium) -> np.ndarray:
        """|xi_tan(in) - xi_tan(out)| at each event, for invariant checks."""
        jumps = []
        for ev in self.events:
            itf = medium.interface_by_id(ev.interface_id)
            nu = itf.normal(ev.covector_in.x)
            tin = ev.covector_in.xi - (ev.covector_in.xi @ nu) * nu
            tout = ev.covector_out.xi - (ev.covector_out.xi @ nu) * nu
            jumps.append(np.linalg.norm(tin - tout))
        return np.asarray(jumps)


def purely_transmitted(mode: str) -> Callable:
    def policy(_k, branches):
        for b in branches:
            if b.kind == "T" and b.mode == mode:
                return b
        raise PolicyExhausted("no transmitted branch available")

    return policy


def _policy_from(policy):
    if callable(policy):
        return policy
    if isinstance(policy, str):
        kind, mode = policy.split("-")
        if kind == "transmit":
            return purely_transmitted(mode)
        raise ValueError(f"unknown policy string {policy!r}")
    seq = list(policy)

    def from_sequence(k, branches):
        if k >= len(seq):
            raise PolicyExhausted(f"policy has no entry for event {k}")
        kind, mode = seq[k]
        for b in branches:
            if b.kind == kind and b.mode == mode:
                if b.evanescent:
                    raise PolicyExhausted(f"branch ({kind},{mode}) is evanescent at event {k}")
                return b
        raise PolicyExhausted(f"branch ({kind},{mode}) not found at event {k}")

    return from_sequence


def trace_broken_ray(
    medium: ElasticMedium,
    start: PhasePoint,
    policy="transmit-P",
    max_events: int = 8,
    max_s: float = 50.0,
    side_hint=None,
    extra_events: Sequence = (),
    rtol: float = 1e-11,
    atol: float = 1e-11,
) -> BrokenRay:
    """Concatenate segments, selecting one branch per interface event."""
    choose = _policy_from(policy)
    segments = []
    events = []
    current = start
    hint = side_hint
    departing = None
    s_budget = max_s
    for _k in range(max_events + 1):
        seg, term = integrate_segment(
            medium, current, s_budget, side_hint=hint, departing=departing,
            extra_events=extra_events, rtol=rtol, atol=atol,
        )
        segments.append(seg)
        s_budget -= seg.s_end
        if term is not Termination.INTERFACE or s_budget <= 0:
            break
        hit = seg.state_at(seg.s_end)
        branches = snell_branches(medium, hit, seg.interface_id)
        chosen = choose(len(events), branches)
        if chosen.evanescent:
            raise PolicyExhausted(
                f"policy selected evanescent branch ({chosen.kind},{chosen.mode})"
            )
        events.append(Event(
            kind="Reflect" if chosen.kind == "R" else "Transmit",
            incident_mode=hit.mode, outgoing_mode=chosen.mode,
            interface_id=seg.interface_id,
            covector_in=hit, covector_out=chosen.point,
            side_in=-chosen.side_sign if chosen.kind == "T" else chosen.side_sign,
            side_out=chosen.side_sign,
        ))
        current = chosen.point
        hint = (seg.interface_id, chosen.side_sign)
        nrm = np.linalg.norm(chosen.point.xi)
        dep_speed = chosen.point.direction * float(chosen.point.xi @ medium.interface_by_id(seg.interface_id).normal(hit.x)) / nrm
        departing = (seg.interface_id, 1 if dep_speed > 0 else -1)
    return BrokenRay(segments=segments, events=events)


# ---------------------------------------------------------------------------
# q-interior travel time and lens relation
# ---------------------------------------------------------------------------


def travel_time_and_lens(
    medium: ElasticMedium,
    x,
    xi,
    mode: str = "P",
    q: Optional[float] = None,
    max_s: float = 50.0,
    max_events: int = 16,
):
    """Trace the purely transmitted mode ray from an inward covector on the
    foliation leaf kappa = q until it returns to the leaf.

    Returns (l, exit PhasePoint, BrokenRay) where l is the elapsed time
    (the geodesic is unit speed in the mode metric, so metric length equals
    travel time).  Raises NoReturn if the ray exceeds max_s first.
    """
    if medium.foliation is None:
        raise NoReturn("medium has no foliation; cannot define the leaf")
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if q is None:
        q = float(medium.foliation.value(x))
    dkappa = np.asarray(medium.foliation.gradient(x))
    if float(xi @ dkappa) <= 0.0:
        raise ValueError("covector is not inward pointing: <xi, dkappa> <= 0")

    gate = [0.0]

    def surface_event(s, y):
        if s < 1e-6:
            return 1.0
        return float(medium.foliation.value(y[0:3])) - q

    c = medium.speed(x, mode)
    tau = c * np.linalg.norm(xi)
    start = PhasePoint(t=0.0, x=x, xi=xi, tau=tau, mode=mode, direction=1)
    ray = trace_broken_ray(
        medium, start, policy=purely_transmitted(mode), max_events=max_events,
        max_s=max_s, extra_events=[surface_event],
    )
    last = ray.segments[-1]
    if last.termination is not Termination.SURFACE:
        raise NoReturn(
            f"ray did not return to the leaf kappa={q} within s={max_s}"
        )
    exit_pt = last.end_point()
    l_time = exit_pt.t - start.t
    return float(l_time), exit_pt, ray


# ---------------------------------------------------------------------------
# branch-tree enumeration
# ---------------------------------------------------------------------------


@dataclass
class BranchEntry:
    sequence: tuple  # s in {R,T}^j, j <= depth
    modes: tuple  # mode sequence, length j+1
    ray: BrokenRay


@dataclass
class PrunedBranch:
    sequence: tuple
    modes: tuple
    reason: str


def enumerate_branch_tree(
    medium: ElasticMedium,
    start: PhasePoint,
    depth: int = 3,
    max_s: float = 50.0,
):
    """All non-evanescent, nonglancing branch sequences up to the given depth.

    Returns (entries, pruned): entries carry the traced broken ray for each
    surviving sequence; pruned records the (sequence, reason) of every branch
    dropped as evanescent or glancing.
    """
    entries: list = []
    pruned: list = []

    def walk(current: PhasePoint, seq: tuple, modes: tuple, hint, departing, s_left: float):
        seg, term = integrate_segment(medium, current, s_left, side_hint=hint,
                                      departing=departing)
        prefix_segments.append(seg)
        try:
            if term is not Termination.INTERFACE or len(seq) >= depth:
                ray = BrokenRay(segments=list(prefix_segments), events=list(prefix_events))
                entries.append(BranchEntry(sequence=seq, modes=modes, ray=ray))
                return
            hit = seg.state_at(seg.s_end)
            try:
                branches = snell_branches(medium, hit, seg.interface_id)
            except GlancingRay:
                pruned.append(PrunedBranch(sequence=seq, modes=modes, reason="glancing"))
                return
            for b in branches:
                new_seq = seq + (b.kind,)
                new_modes = modes + (b.mode,)
                if b.evanescent:
                    pruned.append(PrunedBranch(sequence=new_seq, modes=new_modes,
                                               reason="evanescent"))
                    continue
                ev = Event(
                    kind="Reflect" if b.kind == "R" else "Transmit",
                    incident_mode=hit.mode, outgoing_mode=b.mode,
                    interface_id=seg.interface_id, covector_in=hit,
                    covector_out=b.point,
                    side_in=-b.side_sign if b.kind == "T" else b.side_sign,
                    side_out=b.side_sign,
                )
                prefix_events.append(ev)
                nrm = np.linalg.norm(b.point.xi)
                nu = medium.interface_by_id(seg.interface_id).normal(hit.x)
                dep = b.point.direction * float(b.point.xi @ nu) / nrm
                walk(b.point, new_seq, new_modes,
                     (seg.interface_id, b.side_sign),
                     (seg.interface_id, 1 if dep > 0 else -1),
                     s_left - seg.s_end)
                prefix_events.pop()
        finally:
            prefix_segments.pop()

    prefix_segments: list = []
    prefix_events: list = []
    walk(start, (), (start.mode,), None, None, max_s)
    return entries, pruned
