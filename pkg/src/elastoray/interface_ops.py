"""Principal-symbol linear algebra at a boundary covector.

The 3x3 symbol of the elastic operator at (tau, xi) is

    p = -rho [ (tau^2 - c_S^2 |xi|^2) I - (c_P^2 - c_S^2) xi (x) xi ],

with eigenvalue rho (c_P^2 |xi|^2 - tau^2) on the span of xi and
rho (c_S^2 |xi|^2 - tau^2) on its orthogonal complement.  The interface
system couples an incident wave to three reflected and three transmitted
modal waves through continuity of displacement and traction; the resulting
6x6 solve yields the principal symbols of the reflection and transmission
operators as 3x3 matrices acting on displacement traces.

Sign conventions (fixed for every solve and every oracle in the tests):
  * nu points from side "-" to side "+" of the interface.
  * Propagating polarizations point along the propagation direction
    (P polarization = unit covector direction).
  * The S basis is SV = (c/tau)(q t_hat - |xi_tan| nu) in the incidence
    plane and SH = nu x t_hat, so (t_hat, SH, nu) is right-handed.
  * Evanescent branches keep an imaginary normal slowness with sign chosen
    so the wave decays away from the interface on its own side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GlancingRay, SingularSystem
from .medium import _any_orthonormal

COND_LIMIT = 1e12


# ---------------------------------------------------------------------------
# pointwise symbols
# ---------------------------------------------------------------------------


def principal_symbol(rho, c_p, c_s, tau, xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    xi2 = float(xi @ xi)
    if xi2 == 0.0:
        raise ValueError("xi must be nonzero")
    eye = np.eye(3)
    return -rho * ((tau**2 - c_s**2 * xi2) * eye - (c_p**2 - c_s**2) * np.outer(xi, xi))


def p_eigenvalues(rho, c_p, c_s, tau, xi):
    """(eigenvalue on span(xi), eigenvalue on xi-perp) of the principal symbol."""
    xi2 = float(np.asarray(xi) @ np.asarray(xi))
    return rho * (c_p**2 * xi2 - tau**2), rho * (c_s**2 * xi2 - tau**2)


def subprincipal_symbol(grad_lam, grad_mu, xi) -> np.ndarray:
    """-i [ grad_lam (x) xi + (grad_mu . xi) I + xi (x) grad_mu ]"""
    gl = np.asarray(grad_lam, dtype=float)
    gm = np.asarray(grad_mu, dtype=float)
    xi = np.asarray(xi, dtype=float)
    return -1j * (np.outer(gl, xi) + (gm @ xi) * np.eye(3) + np.outer(xi, gm))


@dataclass(frozen=True)
class PolarizationBasis:
    """Orthonormal frame {N, N1, N2} with N along xi."""

    N: np.ndarray
    N1: np.ndarray
    N2: np.ndarray

    @classmethod
    def from_xi(cls, xi, nu=None) -> "PolarizationBasis":
        """Deterministic completion; if nu is given, N1 is the in-plane (SV-like)
        direction and N2 the transverse (SH-like) one."""
        xi = np.asarray(xi, dtype=float)
        n = xi / np.linalg.norm(xi)
        if nu is not None:
            nu = np.asarray(nu, dtype=float)
            sh = np.cross(nu, n)
            nrm = np.linalg.norm(sh)
            if nrm > 1e-12:
                n2 = sh / nrm
                n1 = np.cross(n2, n)
                return cls(N=n, N1=n1, N2=n2)
        e1, e2 = _any_orthonormal(n)
        return cls(N=n, N1=e1, N2=e2)

    def as_matrix(self) -> np.ndarray:
        """Unitary V with rows (N, N1, N2); V p V^T is diagonal."""
        return np.vstack([self.N, self.N1, self.N2])


def mode_projectors(rho, c_p, c_s, tau, xi):
    """Spectral projectors (Pi_P, Pi_S) of the principal symbol.

    Constructed through the diagonalizing frame: Pi_P = V^T diag(1,0,0) V
    which reduces to xi_hat (x) xi_hat, and Pi_S = I - Pi_P.
    """
    basis = PolarizationBasis.from_xi(xi)
    v = basis.as_matrix()
    pi_p = v.T @ np.diag([1.0, 0.0, 0.0]) @ v
    pi_s = np.eye(3) - pi_p
    return pi_p, pi_s


def traction_symbol(lam, mu, nu, a, xi) -> np.ndarray:
    """Principal symbol of the traction operator on a plane wave a e^{i x.xi}:

        i [ lam (xi.a) nu + mu ((nu.xi) a + (nu.a) xi) ].

    Accepts complex a and xi (evanescent branches); the pairing is bilinear.
    """
    nu = np.asarray(nu, dtype=float)
    a = np.asarray(a, dtype=complex)
    xi = np.asarray(xi, dtype=complex)
    return 1j * (lam * (xi @ a) * nu + mu * ((nu @ xi) * a + (nu @ a) * xi))


# ---------------------------------------------------------------------------
# modal waves at a boundary covector
# ---------------------------------------------------------------------------


@dataclass
class ModalWave:
    role: str  # 'I' | 'R' | 'T'
    mode: str  # 'P' | 'SV' | 'SH'
    side: int  # +1 / -1
    xi: np.ndarray  # complex covector
    d: np.ndarray  # complex polarization (bilinear-normalized)
    traction: np.ndarray  # traction symbol per unit amplitude
    evanescent: bool
    q: complex  # nu-component of xi
    c: float  # modal speed on its side
    rho: float


def _tangent_frame(nu, xi_tan):
    nu = np.asarray(nu, dtype=float)
    xi_tan = np.asarray(xi_tan, dtype=float)
    kt = np.linalg.norm(xi_tan)
    if kt > 1e-14:
        that = xi_tan / kt
    else:
        that = _any_orthonormal(nu)[0]
    sh = np.cross(nu, that)
    return that, sh, kt


def _modal_wave(role, mode, side, params, nu, that, sh, kt, tau) -> ModalWave:
    lam, mu, rho = params
    c = np.sqrt((lam + 2 * mu) / rho) if mode == "P" else np.sqrt(mu / rho)
    rad = (tau / c) ** 2 - kt**2
    evan = rad <= 1e-12 * (tau / c) ** 2
    if not evan:
        q_mag = np.sqrt(rad)
        if role == "I":
            q = complex(-side * q_mag)  # moving toward the interface
        else:
            q = complex(side * q_mag)  # moving away, on side `side`
    else:
        q = 1j * side * np.sqrt(max(-rad, 0.0))
        if role == "I":
            raise GlancingRay("incident mode is evanescent on the incident side")
    xi = kt * that.astype(complex) + q * nu.astype(complex)
    if mode == "P":
        d = (c / tau) * xi
    elif mode == "SV":
        d = (c / tau) * (q * that.astype(complex) - kt * nu.astype(complex))
    else:  # SH
        d = sh.astype(complex)
    trac = traction_symbol(lam, mu, nu, d, xi)
    return ModalWave(role=role, mode=mode, side=side, xi=xi, d=d, traction=trac,
                     evanescent=bool(evan), q=q, c=float(c), rho=float(rho))


@dataclass
class RTMatrices:
    """Reflection/transmission principal symbols at one boundary covector."""

    M_R: np.ndarray  # 3x3 complex: incident displacement -> reflected displacement
    M_T: np.ndarray  # 3x3 complex: incident displacement -> transmitted displacement
    evanescent: dict  # (role, mode) -> bool for outgoing branches
    nu: np.ndarray
    tau: float
    xi_tan: np.ndarray
    incident_side: int
    side_minus: tuple
    side_plus: tuple
    incident_waves: dict  # mode -> ModalWave
    out_R: list  # three reflected ModalWave
    out_T: list  # three transmitted ModalWave
    amp_R: np.ndarray  # (3 out modes, 3 incident modes) amplitudes
    amp_T: np.ndarray
    condition_number: float = 0.0

    def incident_basis(self) -> np.ndarray:
        return np.column_stack([self.incident_waves[m].d for m in ("P", "SV", "SH")])

    def modal_incident_amplitudes(self, a_in) -> np.ndarray:
        return np.linalg.solve(self.incident_basis(), np.asarray(a_in, dtype=complex))

    def continuity_residual(self, a_in) -> float:
        """Relative residual of displacement+traction continuity for a_in."""
        c = self.modal_incident_amplitudes(a_in)
        disp = np.zeros(3, dtype=complex)
        trac = np.zeros(3, dtype=complex)
        scale_d = 0.0
        scale_t = 0.0
        for j, m in enumerate(("P", "SV", "SH")):
            w = self.incident_waves[m]
            disp += c[j] * w.d
            trac += c[j] * w.traction
            scale_d += abs(c[j]) * np.linalg.norm(w.d)
            scale_t += abs(c[j]) * np.linalg.norm(w.traction)
        for i, w in enumerate(self.out_R):
            a = self.amp_R[i] @ c
            disp += a * w.d
            trac += a * w.traction
        for i, w in enumerate(self.out_T):
            a = self.amp_T[i] @ c
            disp -= a * w.d
            trac -= a * w.traction
        return float(np.linalg.norm(disp) / max(scale_d, 1e-300)
                     + np.linalg.norm(trac) / max(scale_t, 1e-300))


def solve_interface_system(
    side_minus: tuple,
    side_plus: tuple,
    nu,
    tau: float,
    xi_tan,
    incident_mode: str = "P",
    incident_side: int = -1,
) -> RTMatrices:
    """Solve the interface continuity system at one boundary covector.

    side_minus/side_plus are (lam, mu, rho) tuples; nu is the unit normal
    from side- to side+; xi_tan is the shared tangential covector.  The
    incident wave comes from `incident_side`, and all three incident
    polarizations are swept so M_R and M_T are full 3x3 matrices (the
    requested incident_mode is available through them).

    Evanescent outgoing branches are retained in the solve with decaying
    imaginary normal slownesses; they are flagged in `evanescent`.
    """
    nu = np.asarray(nu, dtype=float)
    nu = nu / np.linalg.norm(nu)
    that, sh, kt = _tangent_frame(nu, xi_tan)
    inc_params = side_minus if incident_side < 0 else side_plus
    out_params = side_plus if incident_side < 0 else side_minus
    if incident_mode not in ("P", "S", "SV", "SH"):
        raise ValueError(f"incident mode {incident_mode!r}")

    incident = {}
    for m in ("P", "SV", "SH"):
        incident[m] = _modal_wave("I", m, incident_side, inc_params, nu, that, sh, kt, tau)

    out_r = [_modal_wave("R", m, incident_side, inc_params, nu, that, sh, kt, tau)
             for m in ("P", "SV", "SH")]
    out_t = [_modal_wave("T", m, -incident_side, out_params, nu, that, sh, kt, tau)
             for m in ("P", "SV", "SH")]

    # columns: [R_P, R_SV, R_SH, T_P, T_SV, T_SH]
    mat = np.zeros((6, 6), dtype=complex)
    for j, w in enumerate(out_r):
        mat[0:3, j] = w.d
        mat[3:6, j] = w.traction
    for j, w in enumerate(out_t):
        mat[0:3, 3 + j] = -w.d
        mat[3:6, 3 + j] = -w.traction

    cond = float(np.linalg.cond(mat))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularSystem(
            f"interface system condition number {cond:.3e} exceeds {COND_LIMIT:.1e} "
            f"(tau={tau}, |xi_tan|={kt:.6g}, sides={side_minus}/{side_plus})"
        )

    amp_r = np.zeros((3, 3), dtype=complex)
    amp_t = np.zeros((3, 3), dtype=complex)
    for j, m in enumerate(("P", "SV", "SH")):
        w = incident[m]
        rhs = np.concatenate([-w.d, -w.traction])
        sol = np.linalg.solve(mat, rhs)
        amp_r[:, j] = sol[0:3]
        amp_t[:, j] = sol[3:6]

    d_in = np.column_stack([incident[m].d for m in ("P", "SV", "SH")])
    u_r = np.column_stack([sum(amp_r[i, j] * out_r[i].d for i in range(3)) for j in range(3)])
    u_t = np.column_stack([sum(amp_t[i, j] * out_t[i].d for i in range(3)) for j in range(3)])
    d_in_inv = np.linalg.inv(d_in)
    m_r = u_r @ d_in_inv
    m_t = u_t @ d_in_inv

    return RTMatrices(
        M_R=m_r, M_T=m_t,
        evanescent={("R", w.mode): w.evanescent for w in out_r}
        | {("T", w.mode): w.evanescent for w in out_t},
        nu=nu, tau=tau, xi_tan=kt * that, incident_side=incident_side,
        side_minus=tuple(side_minus), side_plus=tuple(side_plus),
        incident_waves=incident, out_R=out_r, out_T=out_t,
        amp_R=amp_r, amp_T=amp_t, condition_number=cond,
    )


def energy_flux_check(rtm: RTMatrices, a_in) -> float:
    """Relative energy-flux balance residual for an incident displacement.

    Flux per modal wave is rho c |A|^2 |cos theta| with cos theta the normal
    component of the unit ray direction; evanescent branches carry none.
    """
    c_modes = rtm.modal_incident_amplitudes(a_in)
    flux_in = 0.0
    for j, m in enumerate(("P", "SV", "SH")):
        w = rtm.incident_waves[m]
        cos_t = abs(np.real(w.q)) * w.c / rtm.tau
        flux_in += w.rho * w.c * abs(c_modes[j]) ** 2 * cos_t
    flux_out = 0.0
    for waves, amps in ((rtm.out_R, rtm.amp_R), (rtm.out_T, rtm.amp_T)):
        for i, w in enumerate(waves):
            if w.evanescent:
                continue
            a = amps[i] @ c_modes
            cos_t = abs(np.real(w.q)) * w.c / rtm.tau
            flux_out += w.rho * w.c * abs(a) ** 2 * cos_t
    return abs(flux_out - flux_in) / max(flux_in, 1e-300)


def rt_matrices_at_event(medium, event) -> RTMatrices:
    """RTMatrices for a traced ray's interface event (helper for transport)."""
    itf = medium.interface_by_id(event.interface_id)
    x = event.covector_in.x
    nu = itf.normal(x)
    xi = event.covector_in.xi
    xi_tan = xi - (xi @ nu) * nu
    lam_m, mu_m, rho_m = medium.eval_params(x, side_hint=(event.interface_id, -1))
    lam_p, mu_p, rho_p = medium.eval_params(x, side_hint=(event.interface_id, 1))
    return solve_interface_system(
        (lam_m, mu_m, rho_m), (lam_p, mu_p, rho_p), nu,
        event.covector_in.tau, xi_tan,
        incident_mode=event.incident_mode, incident_side=event.side_in,
    )
