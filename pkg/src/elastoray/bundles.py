"""Companion-ray bundles: the numerical substrate for amplitude transport.

A bundle integrates a grid of rays launched around a central ray and
reconstructs spacetime derivatives of fields carried along the family by
second-order central differences in the launch parameters, combined with
exact along-ray derivatives.  Treating the launch parameters plus arclength
q = (u, v, w, s) as curvilinear coordinates y(q) = (t, x), a field V known
on the grid has

    dV/dy   = (dV/dq) (dy/dq)^{-1}
    Hess_y V = B^{-T} (Hess_q V - sum_c (dV/dy)_c Hess_q y_c) B^{-1},

with B = dy/dq.  Three launch styles are supported:

  * plane:  positions x0 + u E1 + v E2 + w D, covector xi0 everywhere
            (D = xi0/|xi0|); the initial phase x . xi0 is linear in q.
  * sphere: positions on spheres of radius d0 + w about a virtual source,
            radial covectors; realizes point-source geometry with a full
            parameter grid (homogeneous regions).
  * point:  positions on the transverse plane, covectors aimed from a
            virtual source behind the launch plane; two launch axes only,
            enough for transverse quantities such as the divergence of N.

All bundles are forward P/S rays confined to one smooth region.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import BundleBroken, CausticEncountered, StepFailure
from .medium import ElasticMedium, Region, _any_orthonormal

AXES3 = ("u", "v", "w")


def _node_grid(radius: int, n_axes: int):
    rng = range(-radius, radius + 1)
    if n_axes == 3:
        nodes = [(i, j, k) for i in rng for j in rng for k in rng]
    else:
        nodes = [(i, j) for i in rng for j in rng]
    index = {node: m for m, node in enumerate(nodes)}
    return nodes, index


@dataclass
class RayBundle:
    medium: ElasticMedium
    region: Region
    mode: str
    tau: float
    h: float
    radius: int
    n_axes: int
    kind: str  # 'plane' | 'sphere' | 'point'
    nodes: list
    index: dict
    launch_x: np.ndarray  # (n, 3)
    launch_xi: np.ndarray  # (n, 3)
    frame: tuple  # (E1, E2, D)
    s_max: float
    sol: object = None
    source_distance: float = 0.0  # sphere/point: distance from virtual source to x0

    # -- integration ---------------------------------------------------------

    def _rhs(self, _s, y):
        n = len(self.nodes)
        state = y.reshape(n, 7)
        x = state[:, 0:3]
        xi = state[:, 3:6]
        nrm = np.linalg.norm(xi, axis=1)
        c = np.asarray(self.region.speed(x, self.mode))
        glc = self.region.grad_log_speed(x, self.mode)
        out = np.empty_like(state)
        out[:, 0:3] = xi / nrm[:, None]
        out[:, 3:6] = -nrm[:, None] * glc
        out[:, 6] = 1.0 / c
        return out.ravel()

    def integrate(self, rtol: float = 1e-11, atol: float = 1e-11) -> "RayBundle":
        n = len(self.nodes)
        y0 = np.concatenate(
            [np.hstack([self.launch_x, self.launch_xi, np.zeros((n, 1))]).ravel()]
        )
        res = solve_ivp(self._rhs, (0.0, self.s_max), y0, method="RK45",
                        rtol=rtol, atol=atol, dense_output=True)
        if not res.success:
            raise StepFailure(res.message)
        self.sol = res.sol
        self._check_unbroken()
        return self

    def _check_unbroken(self, n_check: int = 17):
        for s in np.linspace(0.0, self.s_max, n_check):
            x, xi, _ = self.states(s)
            for itf in self.medium.interfaces:
                vals = np.asarray(itf.implicit(x))
                if np.any(np.sign(vals) != np.sign(vals.flat[0])) or np.any(vals == 0.0):
                    raise BundleBroken(
                        f"companion rays cross interface {itf.id!r} near s={s:.3g}"
                    )
            drift = np.abs(np.asarray(self.region.speed(x, self.mode))
                           * np.linalg.norm(xi, axis=1) - self.tau) / self.tau
            if np.max(drift) > 1e-7:
                raise BundleBroken(f"companion characteristic drift {np.max(drift):.2e}")

    # -- state access ---------------------------------------------------------

    def states(self, s: float):
        """(x (n,3), xi (n,3), t (n,)) for every node at arclength s."""
        y = self.sol(s).reshape(len(self.nodes), 7)
        return y[:, 0:3], y[:, 3:6], y[:, 6]

    def central(self) -> int:
        return self.index[(0,) * self.n_axes]

    def neighbors(self, node: tuple, axis: int, step: int = 1):
        off = list(node)
        off[axis] += step
        return self.index[tuple(off)]

    def ray_derivatives(self, s: float):
        """Exact (dt/ds, dx/ds, dN/ds, d2x/ds2, d2t/ds2) at every node."""
        x, xi, _ = self.states(s)
        nrm = np.linalg.norm(xi, axis=1)
        nhat = xi / nrm[:, None]
        c = np.asarray(self.region.speed(x, self.mode))
        glc = self.region.grad_log_speed(x, self.mode)
        dxds = nhat
        dtds = 1.0 / c
        proj = glc - nhat * np.sum(nhat * glc, axis=1)[:, None]
        dnds = -proj
        d2xds2 = dnds
        d2tds2 = -np.sum(nhat * glc, axis=1) / c
        return dtds, dxds, dnds, d2xds2, d2tds2

    # -- curvilinear derivative machinery (3-axis bundles) --------------------

    def q_jacobian(self, node: tuple, s: float) -> np.ndarray:
        """4x4 d(t,x)/d(u,v,w,s) at the node (interior nodes only)."""
        x, _, t = self.states(s)
        dtds, dxds, _, _, _ = self.ray_derivatives(s)
        m = self.index[node]
        cols = []
        for a in range(self.n_axes):
            ip = self.neighbors(node, a, +1)
            im = self.neighbors(node, a, -1)
            dt = (t[ip] - t[im]) / (2 * self.h)
            dx = (x[ip] - x[im]) / (2 * self.h)
            cols.append(np.concatenate([[dt], dx]))
        cols.append(np.concatenate([[dtds[m]], dxds[m]]))
        return np.column_stack(cols)

    def map_hessian(self, node: tuple, s: float) -> np.ndarray:
        """(4, 4, 4) array H[c, a, b] = d2 y_c / dq_a dq_b (y = (t, x))."""
        x, _, t = self.states(s)
        dtds, dxds, _, d2x, d2t = self.ray_derivatives(s)
        y = np.column_stack([t, x])  # (n, 4)
        dyds = np.column_stack([dtds, dxds])
        nq = self.n_axes + 1
        out = np.zeros((4, nq, nq))
        h = self.h
        m = self.index[node]
        for a in range(self.n_axes):
            ip = self.neighbors(node, a, +1)
            im = self.neighbors(node, a, -1)
            out[:, a, a] = (y[ip] - 2 * y[m] + y[im]) / h**2
            for b in range(a + 1, self.n_axes):
                ipp = self.neighbors(tuple(np.add(node, _unit(a, self.n_axes))), b, +1)
                ipm = self.neighbors(tuple(np.add(node, _unit(a, self.n_axes))), b, -1)
                imp = self.neighbors(tuple(np.subtract(node, _unit(a, self.n_axes))), b, +1)
                imm = self.neighbors(tuple(np.subtract(node, _unit(a, self.n_axes))), b, -1)
                mixed = (y[ipp] - y[ipm] - y[imp] + y[imm]) / (4 * h**2)
                out[:, a, b] = mixed
                out[:, b, a] = mixed
            cross = (dyds[ip] - dyds[im]) / (2 * h)
            out[:, a, -1] = cross
            out[:, -1, a] = cross
        out[:, -1, -1] = np.concatenate([[d2t[m]], d2x[m]])
        return out

    def gradient_y(self, node: tuple, s: float, values: np.ndarray,
                   dvds: np.ndarray, jac: Optional[np.ndarray] = None) -> np.ndarray:
        """Spacetime gradient of a field known on the grid.

        values: (n_nodes, m) nodal field values at arclength s;
        dvds: (m,) exact or interpolated d/ds of the field along the node ray.
        Returns (m, 4) with columns (d/dt, d/dx1, d/dx2, d/dx3).
        """
        jac = self.q_jacobian(node, s) if jac is None else jac
        nq = self.n_axes + 1
        m_dim = values.shape[1]
        dq = np.zeros((m_dim, nq), dtype=values.dtype)
        for a in range(self.n_axes):
            ip = self.neighbors(node, a, +1)
            im = self.neighbors(node, a, -1)
            dq[:, a] = (values[ip] - values[im]) / (2 * self.h)
        dq[:, -1] = dvds
        return dq @ np.linalg.inv(jac)

    def hessian_y(self, node: tuple, s: float, values: np.ndarray,
                  dvds_axis: np.ndarray, d2vds2: np.ndarray,
                  grad_y: np.ndarray, jac: Optional[np.ndarray] = None,
                  hmap: Optional[np.ndarray] = None) -> np.ndarray:
        """Spacetime Hessians of a field known on the grid.

        values: (n_nodes, m); dvds_axis: (n_nodes, m) along-ray derivative at
        every node (only the node and its axis neighbors are used);
        d2vds2: (m,) second along-ray derivative at the node;
        grad_y: (m, 4) output of gradient_y.  Returns (m, 4, 4).
        """
        jac = self.q_jacobian(node, s) if jac is None else jac
        hmap = self.map_hessian(node, s) if hmap is None else hmap
        nq = self.n_axes + 1
        m_dim = values.shape[1]
        hq = np.zeros((m_dim, nq, nq), dtype=values.dtype)
        h = self.h
        m = self.index[node]
        for a in range(self.n_axes):
            ip = self.neighbors(node, a, +1)
            im = self.neighbors(node, a, -1)
            hq[:, a, a] = (values[ip] - 2 * values[m] + values[im]) / h**2
            for b in range(a + 1, self.n_axes):
                ipp = self.neighbors(tuple(np.add(node, _unit(a, self.n_axes))), b, +1)
                ipm = self.neighbors(tuple(np.add(node, _unit(a, self.n_axes))), b, -1)
                imp = self.neighbors(tuple(np.subtract(node, _unit(a, self.n_axes))), b, +1)
                imm = self.neighbors(tuple(np.subtract(node, _unit(a, self.n_axes))), b, -1)
                mixed = (values[ipp] - values[ipm] - values[imp] + values[imm]) / (4 * h**2)
                hq[:, a, b] = mixed
                hq[:, b, a] = mixed
            cross = (dvds_axis[ip] - dvds_axis[im]) / (2 * h)
            hq[:, a, -1] = cross
            hq[:, -1, a] = cross
        hq[:, -1, -1] = d2vds2
        binv = np.linalg.inv(jac)
        out = np.zeros((m_dim, 4, 4), dtype=values.dtype)
        for i in range(m_dim):
            corr = hq[i] - np.tensordot(grad_y[i], hmap, axes=(0, 0))
            out[i] = binv.T @ corr @ binv
        return out

    def phase_hessian(self, node: tuple, s: float,
                      jac: Optional[np.ndarray] = None,
                      hmap: Optional[np.ndarray] = None) -> np.ndarray:
        """Spacetime Hessian of the eikonal phase of the launched family.

        The phase is linear in the launch parameters and constant along rays
        (plane and sphere launches), so Hess_q phi = 0 and the full Hessian
        comes from the curvilinear correction with dphi/dy = (tau_phase, xi),
        tau_phase = -tau for the forward family.
        """
        if self.n_axes != 3:
            raise BundleBroken("phase Hessian needs a 3-axis bundle")
        jac = self.q_jacobian(node, s) if jac is None else jac
        hmap = self.map_hessian(node, s) if hmap is None else hmap
        _, xi, _ = self.states(s)
        m = self.index[node]
        dphi_dy = np.concatenate([[-self.tau], xi[m]])
        binv = np.linalg.inv(jac)
        corr = -np.tensordot(dphi_dy, hmap, axes=(0, 0))
        return binv.T @ corr @ binv

    # -- divergence of N -------------------------------------------------------

    def divergence_of_N(self, s: float, node: Optional[tuple] = None) -> float:
        """Spatial divergence of the unit ray-direction field at a node.

        3-axis bundles use the full spacetime gradient; 2-axis (point)
        bundles use the transverse Jacobian in ray-centered coordinates,
        exact whenever the direction field is static (e.g. homogeneous
        regions), since N . (N . grad) N = 0 removes the longitudinal term.
        """
        node = (0,) * self.n_axes if node is None else node
        x, xi, _ = self.states(s)
        nrm = np.linalg.norm(xi, axis=1)
        nhat = xi / nrm[:, None]
        if self.n_axes == 3:
            _, _, dnds, _, _ = self.ray_derivatives(s)
            m = self.index[node]
            grad = self.gradient_y(node, s, nhat, dnds[m])
            return float(np.trace(grad[:, 1:4]))
        m = self.index[node]
        e1, e2 = _any_orthonormal(nhat[m])
        frame = np.vstack([e1, e2])
        jx = np.zeros((2, 2))
        jn = np.zeros((2, 2))
        for a in range(2):
            ip = self.neighbors(node, a, +1)
            im = self.neighbors(node, a, -1)
            dx = (x[ip] - x[im]) / (2 * self.h)
            dn = (nhat[ip] - nhat[im]) / (2 * self.h)
            jx[:, a] = frame @ dx
            jn[:, a] = frame @ dn
        det = np.linalg.det(jx)
        if abs(det) < 1e-14:
            raise CausticEncountered(f"transverse ray Jacobian singular at s={s:.6g}")
        return float(np.trace(jn @ np.linalg.inv(jx)))


def _unit(axis: int, n_axes: int):
    e = [0] * n_axes
    e[axis] = 1
    return tuple(e)


# ---------------------------------------------------------------------------
# launch constructors
# ---------------------------------------------------------------------------


def _frame_for(direction: np.ndarray):
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    e1, e2 = _any_orthonormal(d)
    return e1, e2, d


def plane_bundle(medium: ElasticMedium, x0, direction, h: float = 1e-3,
                 radius: int = 1, max_s: float = 5.0, tau: float = 1.0,
                 mode: str = "P", side_hint=None, integrate: bool = True) -> RayBundle:
    """Plane-wavefront bundle: launch grid offsets u E1 + v E2 + w D, common
    covector tau/c(x0) * D."""
    x0 = np.asarray(x0, dtype=float)
    e1, e2, d = _frame_for(direction)
    region = medium.region_at(x0, side_hint)
    c0 = float(region.speed(x0, mode))
    xi0 = (tau / c0) * d
    nodes, index = _node_grid(radius, 3)
    offs = np.array(nodes, dtype=float) * h
    launch_x = x0 + offs[:, 0:1] * e1 + offs[:, 1:2] * e2 + offs[:, 2:3] * d
    launch_xi = np.broadcast_to(xi0, launch_x.shape).copy()
    b = RayBundle(medium=medium, region=region, mode=mode, tau=tau, h=h,
                  radius=radius, n_axes=3, kind="plane", nodes=nodes, index=index,
                  launch_x=launch_x, launch_xi=launch_xi, frame=(e1, e2, d),
                  s_max=max_s)
    return b.integrate() if integrate else b


def sphere_bundle(medium: ElasticMedium, x0, direction, source_distance: float,
                  h: float = 1e-3, radius: int = 1, max_s: float = 5.0,
                  tau: float = 1.0, mode: str = "P", side_hint=None,
                  integrate: bool = True) -> RayBundle:
    """Spherical-wavefront bundle about a virtual source at
    x0 - source_distance * D; node (u, v, w) sits on the sphere of radius
    source_distance + w at angular offset set by (u, v)/source_distance.
    Covectors are radial.  Intended for homogeneous regions."""
    x0 = np.asarray(x0, dtype=float)
    e1, e2, d = _frame_for(direction)
    if source_distance <= 0:
        raise ValueError("source_distance must be positive")
    src = x0 - source_distance * d
    region = medium.region_at(x0, side_hint)
    c0 = float(region.speed(x0, mode))
    nodes, index = _node_grid(radius, 3)
    launch_x = np.empty((len(nodes), 3))
    launch_xi = np.empty((len(nodes), 3))
    for m, (i, j, k) in enumerate(nodes):
        ang = (i * h * e1 + j * h * e2) / source_distance
        dir_m = d + ang
        dir_m = dir_m / np.linalg.norm(dir_m)
        r_m = source_distance + k * h
        launch_x[m] = src + r_m * dir_m
        launch_xi[m] = (tau / c0) * dir_m
    b = RayBundle(medium=medium, region=region, mode=mode, tau=tau, h=h,
                  radius=radius, n_axes=3, kind="sphere", nodes=nodes, index=index,
                  launch_x=launch_x, launch_xi=launch_xi, frame=(e1, e2, d),
                  s_max=max_s, source_distance=source_distance)
    return b.integrate() if integrate else b


def point_bundle(medium: ElasticMedium, x0, direction, source_distance: float,
                 h: float = 1e-3, radius: int = 1, max_s: float = 5.0,
                 tau: float = 1.0, mode: str = "P", side_hint=None,
                 integrate: bool = True) -> RayBundle:
    """Point-source bundle: launch positions on the transverse plane at x0,
    covectors aimed from the virtual source at x0 - source_distance * D.
    Two launch axes; supports transverse quantities (divergence of N, b0)."""
    x0 = np.asarray(x0, dtype=float)
    e1, e2, d = _frame_for(direction)
    if source_distance <= 0:
        raise ValueError("source_distance must be positive")
    src = x0 - source_distance * d
    region = medium.region_at(x0, side_hint)
    nodes, index = _node_grid(radius, 2)
    launch_x = np.empty((len(nodes), 3))
    launch_xi = np.empty((len(nodes), 3))
    for m, (i, j) in enumerate(nodes):
        xl = x0 + i * h * e1 + j * h * e2
        dir_m = xl - src
        dir_m = dir_m / np.linalg.norm(dir_m)
        c_l = float(region.speed(xl, mode))
        launch_x[m] = xl
        launch_xi[m] = (tau / c_l) * dir_m
    b = RayBundle(medium=medium, region=region, mode=mode, tau=tau, h=h,
                  radius=radius, n_axes=2, kind="point", nodes=nodes, index=index,
                  launch_x=launch_x, launch_xi=launch_xi, frame=(e1, e2, d),
                  s_max=max_s, source_distance=source_distance)
    return b.integrate() if integrate else b
