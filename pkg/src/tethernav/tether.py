"""Multi-body tether dynamics and the steady-state catenary sag table.

A cable of reeled-out length L is a chain of ``inner_nodes`` point masses
joined by ``inner_nodes + 1`` tension-only spring-damper segments to its two
endpoints. Node mass is L * linear_density / inner_nodes and each segment's
rest length is L / (inner_nodes + 1), so total mass and length track L;
winch length changes rescale all rest lengths uniformly. Segments transfer
force only when taut; aerodynamic drag is neglected.

The sag table maps (horizontal separation, vertical separation, length) to
the depth of the cable's lowest point below the lower endpoint, precomputed
by relaxing the damped dynamics to rest. Queries interpolate trilinearly and
refuse to extrapolate.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

GRAVITY = 9.81


class TetherError(ValueError):
    """Invalid tether parameter or state."""


class RelaxationError(RuntimeError):
    """Damped settling did not converge within the time budget."""


class TableRangeError(ValueError):
    """Sag table query outside the precomputed grid (no extrapolation)."""


@dataclass(frozen=True)
class TetherParams:
    """Cable physical parameters.

    axial_stiffness is force per unit strain (EA); damping acts on the
    along-segment relative velocity of taut segments only.
    """

    linear_density: float = 0.1
    inner_nodes: int = 8
    axial_stiffness: float = 2000.0
    damping: float = 10.0
    gravity: float = GRAVITY

    def __post_init__(self):
        if self.linear_density <= 0 or self.axial_stiffness <= 0 \
                or self.damping <= 0 or self.gravity <= 0:
            raise TetherError("tether parameters must be positive")
        if self.inner_nodes < 3:
            raise TetherError("need at least 3 inner nodes")

    def node_mass(self, length: float) -> float:
        return length * self.linear_density / self.inner_nodes

    def rest_length(self, length: float) -> float:
        return length / (self.inner_nodes + 1)

    def stable_step(self, length: float) -> float:
        """Explicit-integrator step bound: 1/20 of the stiff-spring period."""
        m = self.node_mass(length)
        k = self.axial_stiffness / self.rest_length(length)
        return 2.0 * math.pi * math.sqrt(m / k) / 20.0


@dataclass
class TetherState:
    """Mutable per-cable state advanced by the simulator."""

    length: float
    node_pos: np.ndarray
    node_vel: np.ndarray

    def __post_init__(self):
        self.node_pos = np.asarray(self.node_pos, dtype=float)
        self.node_vel = np.asarray(self.node_vel, dtype=float)
        if self.length <= 0:
            raise TetherError("tether length must be positive")
        if self.node_pos.shape != self.node_vel.shape or self.node_pos.ndim != 2 \
                or self.node_pos.shape[1] != 3:
            raise TetherError("node arrays must both be (n_nodes, 3)")


def segment_force(pos_a, vel_a, pos_b, vel_b, rest_length: float,
                  params: TetherParams) -> np.ndarray:
    """Force a taut spring-damper segment applies to its `a` endpoint.

    Zero when slack (separation <= rest length) and for coincident nodes;
    the force on `b` is the exact negative.
    """
    if rest_length <= 0:
        raise TetherError("rest_length must be positive")
    d = np.asarray(pos_b, dtype=float) - np.asarray(pos_a, dtype=float)
    sep = float(np.linalg.norm(d))
    if sep <= rest_length or sep < 1e-12:
        return np.zeros(3)
    u = d / sep
    strain = (sep - rest_length) / rest_length
    rate = float((np.asarray(vel_b, dtype=float)
                  - np.asarray(vel_a, dtype=float)) @ u)
    return (params.axial_stiffness * strain + params.damping * rate) * u


def _segment_magnitudes(P, V, rest, params):
    """Tension magnitude per segment for chains P, V of shape (..., k, 3).

    Positive magnitude pulls a segment's lower-index point toward its
    higher-index point. rest broadcasts over leading axes.
    """
    d = P[..., 1:, :] - P[..., :-1, :]
    sep = np.linalg.norm(d, axis=-1)
    safe = np.maximum(sep, 1e-12)
    u = d / safe[..., None]
    dv = V[..., 1:, :] - V[..., :-1, :]
    rate = np.sum(dv * u, axis=-1)
    strain = (sep - rest) / rest
    mag = params.axial_stiffness * strain + params.damping * rate
    taut = sep > rest
    return np.where(taut, mag, 0.0), u


def _chain_accelerations(P, V, rest, node_mass, params):
    """Inner-node accelerations + endpoint forces for chains (..., k, 3)."""
    mag, u = _segment_magnitudes(P, V, rest, params)
    f_seg = mag[..., None] * u
    node_force = f_seg[..., 1:, :] - f_seg[..., :-1, :]
    acc = node_force / node_mass
    acc[..., 2] -= params.gravity
    f_first = f_seg[..., 0, :]
    f_last = -f_seg[..., -1, :]
    return acc, f_first, f_last


def tether_accelerations(state: TetherState, endpoint_a, vel_a, endpoint_b,
                         vel_b, params: TetherParams):
    """Per-node accelerations and the reaction forces on both endpoints.

    Reactions are the forces the first/last segment apply to the attached
    bodies (drone or ground station), coupling cable and vehicle models.
    """
    P = np.vstack([np.asarray(endpoint_a, dtype=float)[None, :],
                   state.node_pos,
                   np.asarray(endpoint_b, dtype=float)[None, :]])
    V = np.vstack([np.asarray(vel_a, dtype=float)[None, :],
                   state.node_vel,
                   np.asarray(vel_b, dtype=float)[None, :]])
    rest = params.rest_length(state.length)
    m = params.node_mass(state.length)
    acc, f_a, f_b = _chain_accelerations(P, V, rest, m, params)
    return acc, f_a, f_b


def step_nodes(state: TetherState, endpoint_a, vel_a, endpoint_b, vel_b,
               params: TetherParams, dt: float):
    """Advance inner nodes one semi-implicit Euler step; returns endpoint
    reaction forces evaluated at the pre-step configuration."""
    acc, f_a, f_b = tether_accelerations(state, endpoint_a, vel_a,
                                         endpoint_b, vel_b, params)
    state.node_vel += acc * dt
    state.node_pos += state.node_vel * dt
    return f_a, f_b


def mechanical_energy(state: TetherState, endpoint_a, endpoint_b,
                      params: TetherParams) -> float:
    """Kinetic + gravitational + elastic energy of one cable."""
    m = params.node_mass(state.length)
    rest = params.rest_length(state.length)
    ke = 0.5 * m * float(np.sum(state.node_vel ** 2))
    pe = m * params.gravity * float(np.sum(state.node_pos[:, 2]))
    P = np.vstack([np.asarray(endpoint_a, dtype=float)[None, :],
                   state.node_pos,
                   np.asarray(endpoint_b, dtype=float)[None, :]])
    seps = np.linalg.norm(P[1:] - P[:-1], axis=1)
    ext = np.maximum(seps - rest, 0.0)
    k_seg = params.axial_stiffness / rest
    elastic = 0.5 * k_seg * float(np.sum(ext ** 2))
    return ke + pe + elastic


def _parabolic_guess(h, v, length, n_nodes):
    """Initial node layout: chord plus a parabolic dip sized from the
    length excess (V-shape estimate when the endpoints nearly coincide)."""
    chord = np.sqrt(h ** 2 + v ** 2)
    excess = np.maximum(length - chord, 0.0)
    sag = np.where(h > 1e-6,
                   np.sqrt(3.0 * np.maximum(chord, 1e-9) * excess / 8.0),
                   np.maximum(length - np.abs(v), 0.0) / 2.0)
    s = (np.arange(n_nodes) + 1.0) / (n_nodes + 1.0)
    pos = np.zeros((h.size, n_nodes, 3))
    pos[:, :, 0] = h[:, None] * s[None, :]
    pos[:, :, 2] = v[:, None] * s[None, :] - 4.0 * sag[:, None] \
        * s[None, :] * (1.0 - s[None, :])
    return pos


def _relax_batch(h, v, lengths, params: TetherParams, speed_tol, accel_tol,
                 max_time):
    """Settle a batch of same-length cables in canonical frames.

    Endpoint A at the origin, endpoint B at (h, 0, v). Integrates the damped
    dynamics (semi-implicit Euler) with kinetic damping: whenever a cable's
    kinetic energy passes a peak its node velocities are zeroed, which
    removes the undamped transverse swing modes. Returns (positions, ok).
    """
    h = np.asarray(h, dtype=float)
    v = np.asarray(v, dtype=float)
    lengths = np.asarray(lengths, dtype=float)
    nb = h.size
    n = params.inner_nodes
    L = float(lengths[0])
    if not np.allclose(lengths, L):
        raise TetherError("relax batch requires uniform length")

    pos = _parabolic_guess(h, v, L, n)
    vel = np.zeros_like(pos)
    ends_a = np.zeros((nb, 1, 3))
    ends_b = np.zeros((nb, 1, 3))
    ends_b[:, 0, 0] = h
    ends_b[:, 0, 2] = v

    rest = params.rest_length(L)
    m = params.node_mass(L)
    dt = params.stable_step(L)
    n_steps = int(max_time / dt)
    done = np.zeros(nb, dtype=bool)
    ke_prev = np.zeros(nb)

    zeros_v = np.zeros_like(ends_a)
    for step in range(n_steps):
        P = np.concatenate([ends_a, pos, ends_b], axis=1)
        V = np.concatenate([zeros_v, vel, zeros_v], axis=1)
        acc, _, _ = _chain_accelerations(P, V, rest, m, params)
        active = ~done
        vel[active] += acc[active] * dt
        pos[active] += vel[active] * dt
        ke = 0.5 * m * np.sum(vel ** 2, axis=(1, 2))
        peaked = active & (ke < ke_prev)
        vel[peaked] = 0.0
        ke[peaked] = 0.0
        ke_prev = ke
        if step % 25 == 0 or step == n_steps - 1:
            Vs = np.concatenate([zeros_v, np.zeros_like(vel), zeros_v], axis=1)
            Ps = np.concatenate([ends_a, pos, ends_b], axis=1)
            acc_static, _, _ = _chain_accelerations(Ps, Vs, rest, m, params)
            max_acc = np.max(np.linalg.norm(acc_static, axis=-1), axis=-1)
            max_spd = np.max(np.linalg.norm(vel, axis=-1), axis=-1)
            done |= (max_acc < accel_tol) & (max_spd < speed_tol)
            if done.all():
                break
    return pos, done


def relax_to_steady_state(endpoint_a, endpoint_b, length: float,
                          params: TetherParams, speed_tol: float = 1e-3,
                          accel_tol: float = 1e-3,
                          max_time: float = 400.0) -> np.ndarray:
    """Damped settling of one cable between fixed endpoints.

    Requires length >= 0.999 * endpoint separation (near-taut allowed).
    Returns equilibrium inner-node positions in world coordinates; raises
    RelaxationError with the residual if the budget runs out.
    """
    a = np.asarray(endpoint_a, dtype=float)
    b = np.asarray(endpoint_b, dtype=float)
    d_xy = b[:2] - a[:2]
    h = float(np.hypot(d_xy[0], d_xy[1]))
    dz = float(b[2] - a[2])
    chord = math.sqrt(h ** 2 + dz ** 2)
    if length < 0.999 * chord:
        raise TetherError("length shorter than the endpoint separation")
    pos, ok = _relax_batch(np.array([h]), np.array([dz]), np.array([length]),
                           params, speed_tol, accel_tol, max_time)
    if not ok[0]:
        state = TetherState(length, pos[0], np.zeros_like(pos[0]))
        acc, _, _ = tether_accelerations(state, a, np.zeros(3), b,
                                         np.zeros(3), params)
        res = float(np.max(np.linalg.norm(acc, axis=1)))
        raise RelaxationError(
            f"no steady state within {max_time} s (acc residual {res:.3e})")
    # canonical frame -> world: rotate +x onto the XY separation direction
    if h > 1e-12:
        ex = d_xy / h
        R = np.array([[ex[0], -ex[1], 0.0],
                      [ex[1], ex[0], 0.0],
                      [0.0, 0.0, 1.0]])
    else:
        R = np.eye(3)
    return pos[0] @ R.T + a[None, :]


@dataclass(frozen=True)
class CatenaryGrid:
    """Axes of the sag table; resolutions default to 1 m per axis."""

    sep_xy_max: float = 16.0
    sep_z_max: float = 10.0
    length_min: float = 0.5
    length_max: float = 18.0
    resolution_xy: float = 1.0
    resolution_z: float = 1.0
    resolution_length: float = 1.0

    def __post_init__(self):
        if min(self.resolution_xy, self.resolution_z,
               self.resolution_length) <= 0:
            raise TetherError("grid resolutions must be positive")
        if self.sep_xy_max <= self.resolution_xy \
                or self.sep_z_max <= self.resolution_z:
            raise TetherError("grid extents must exceed one cell")
        if not 0 < self.length_min < self.length_max:
            raise TetherError("need 0 < length_min < length_max")

    def axes(self):
        h = np.arange(0.0, self.sep_xy_max + self.resolution_xy / 2,
                      self.resolution_xy)
        v = np.arange(0.0, self.sep_z_max + self.resolution_z / 2,
                      self.resolution_z)
        l = np.arange(self.length_min,
                      self.length_max + self.resolution_length / 2,
                      self.resolution_length)
        return h, v, l


def _table_hash(params: TetherParams, grid: CatenaryGrid) -> str:
    payload = {"params": {
        "linear_density": params.linear_density,
        "inner_nodes": params.inner_nodes,
        "axial_stiffness": params.axial_stiffness,
        "damping": params.damping,
        "gravity": params.gravity,
    }, "grid": {
        "sep_xy_max": grid.sep_xy_max, "sep_z_max": grid.sep_z_max,
        "length_min": grid.length_min, "length_max": grid.length_max,
        "resolution_xy": grid.resolution_xy,
        "resolution_z": grid.resolution_z,
        "resolution_length": grid.resolution_length,
    }, "version": 1}
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class CatenaryTable:
    """Precomputed sag(h, v, L): lowest-point depth below the lower endpoint.

    NaN cells mark failed relaxations; querying one raises. Sag is zero in
    the taut limit and non-decreasing in L at fixed endpoint geometry.
    """

    sep_xy: np.ndarray
    sep_z: np.ndarray
    length: np.ndarray
    sag: np.ndarray
    params_hash: str
    _interp: object = field(default=None, repr=False, compare=False)

    def interpolator(self):
        if self._interp is None:
            self._interp = RegularGridInterpolator(
                (self.sep_xy, self.sep_z, self.length), self.sag,
                method="linear", bounds_error=True)
        return self._interp

    def save(self, path):
        np.savez_compressed(path, sep_xy=self.sep_xy, sep_z=self.sep_z,
                            length=self.length, sag=self.sag,
                            params_hash=np.array(self.params_hash))

    @staticmethod
    def load(path) -> "CatenaryTable":
        data = np.load(path, allow_pickle=False)
        return CatenaryTable(data["sep_xy"], data["sep_z"], data["length"],
                             data["sag"], str(data["params_hash"]))


def build_catenary_table(params: TetherParams, grid: CatenaryGrid,
                         path=None, force: bool = False) -> CatenaryTable:
    """Build (or load from ``path`` when the params hash matches) the sag
    table. Cells with L <= chord are taut (sag 0) and skip relaxation; the
    rest settle as one vectorized batch per length value. Failed cells are
    stored NaN and propagate as errors on query.
    """
    want = _table_hash(params, grid)
    if path is not None and not force:
        try:
            table = CatenaryTable.load(path)
            if table.params_hash == want:
                return table
        except (OSError, KeyError, ValueError):
            pass
    h_ax, v_ax, l_ax = grid.axes()
    sag = np.zeros((h_ax.size, v_ax.size, l_ax.size))
    H, V = np.meshgrid(h_ax, v_ax, indexing="ij")
    chord = np.sqrt(H ** 2 + V ** 2)
    for il, L in enumerate(l_ax):
        slack = chord < L
        if not slack.any():
            continue
        hs = H[slack]
        vs = V[slack]
        pos, ok = _relax_batch(hs, vs, np.full(hs.size, L), params,
                               speed_tol=1e-3, accel_tol=1e-3, max_time=400.0)
        lowest = pos[:, :, 2].min(axis=1)
        values = np.maximum(0.0, np.minimum(0.0, vs) - lowest)
        values[~ok] = np.nan
        plane = sag[:, :, il]
        plane[slack] = values
        sag[:, :, il] = plane
    table = CatenaryTable(h_ax, v_ax, l_ax, sag, want)
    if path is not None:
        table.save(path)
    return table


def query_lowest_point(table: CatenaryTable, endpoint_a, endpoint_b,
                       length: float) -> float:
    """Absolute altitude of the steady-state cable's lowest point.

    Trilinear interpolation of the sag grid; out-of-range queries raise
    TableRangeError rather than extrapolate (the value feeds a safety
    constraint). Invariant under endpoint exchange and rotation about Z.
    """
    a = np.asarray(endpoint_a, dtype=float)
    b = np.asarray(endpoint_b, dtype=float)
    h = float(np.hypot(b[0] - a[0], b[1] - a[1]))
    v = abs(float(b[2] - a[2]))
    eps = 1e-9
    if not (table.sep_xy[0] - eps <= h <= table.sep_xy[-1] + eps
            and table.sep_z[0] - eps <= v <= table.sep_z[-1] + eps
            and table.length[0] - eps <= length <= table.length[-1] + eps):
        raise TableRangeError(
            f"query (h={h:.2f}, v={v:.2f}, L={length:.2f}) outside table grid")
    q = np.array([min(max(h, table.sep_xy[0]), table.sep_xy[-1]),
                  min(max(v, table.sep_z[0]), table.sep_z[-1]),
                  min(max(length, table.length[0]), table.length[-1])])
    s = float(table.interpolator()(q))
    if math.isnan(s):
        raise RelaxationError("query touches an invalid (non-converged) cell")
    return min(a[2], b[2]) - s
