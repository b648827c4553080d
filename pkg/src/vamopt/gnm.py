"""Gradient-navigation pedestrian dynamics.

Repulsion kernel and its isolines, the bounded direction normalizer g,
per-source repulsion gradients, and the explicit Euler step of the
speed-relaxation ODE. All functions are pure and accept numpy arrays
where it makes sense; angles are radians throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import GnmParams


@dataclass(frozen=True)
class PedestrianState:
    """Walker state: position, relaxed speed, target direction, heading."""

    x: tuple[float, float]
    w: float                      # relaxed speed, m/s (>= 0)
    n_t: tuple[float, float]      # target direction, norm <= 1
    theta: float = 0.0            # heading, radians


def angular_gain(theta, params: GnmParams):
    """Forward-focused logistic factor of the influence kernel.

    Close to 1 ahead of the walker and indistinguishable from 0 behind.
    cos(kappa*theta) is not 2pi-periodic (kappa < 1), so bearings are
    folded into (-pi, pi] first; the kappa pre-factor scales the angle
    before the cosine, so the result does not depend on the angle unit
    as long as cos matches it.
    """
    theta = np.asarray(theta, dtype=float)
    theta = np.mod(theta + np.pi, 2.0 * np.pi) - np.pi
    return 1.0 / (1.0 + np.exp(-(np.cos(params.kappa * theta) - params.x_0) / params.r_s))


def radial_kernel(r, p: float, support: float):
    """Bump profile: maximum p at r=0, exactly 0 for r >= support."""
    r = np.asarray(r, dtype=float)
    q = (r / support) ** 2
    out = np.zeros_like(q)
    inside = q < 1.0
    out[inside] = p * np.exp(1.0 / (q[inside] - 1.0))
    return out


def influence_kernel(r, theta, params: GnmParams):
    """Influence magnitude h(r)*s(theta) of a source at polar (r, theta)."""
    return radial_kernel(r, params.kernel_p, params.r_h) * angular_gain(theta, params)


def isoline_radius(theta, h_level: float, params: GnmParams):
    """Radius at which the influence equals h_level along direction theta.

    Inverts influence_kernel in r. Returns 0 where no such radius exists
    (level above the kernel maximum at that angle, i.e. the reciprocal
    log falls outside (-1, 0)).
    """
    if h_level <= 0:
        raise ValueError("h_level must be > 0")
    theta = np.asarray(theta, dtype=float)
    gain = angular_gain(theta, params)
    arg = np.where(gain > 0, h_level / (params.kernel_p * np.where(gain > 0, gain, 1.0)), np.inf)
    out = np.zeros_like(arg)
    ok = arg < np.exp(-1.0)  # log(arg) < -1  <=>  1/log(arg) in (-1, 0)
    log = np.log(np.where(ok, arg, 0.1))
    out[ok] = params.r_h * np.sqrt(1.0 + 1.0 / log[ok])
    return out if out.ndim else float(out)


def normalize_g(v, params: GnmParams):
    """Direction-preserving squash with norm capped at 1.

    Below 1 - g_eps the map is the identity; a C1 cubic ramp then rises
    to exactly 1 at norm 1, and anything longer is clipped to a unit
    vector. The zero vector maps to itself.
    """
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    rho = _g_profile(n, params.g_eps)
    scale = np.where(n > 0.0, rho / np.where(n > 0.0, n, 1.0), 0.0)
    return v * scale


def _g_profile(n, eps: float):
    n = np.asarray(n, dtype=float)
    lo = 1.0 - eps
    out = np.minimum(n, 1.0)
    blend = (n > lo) & (n < 1.0)
    s = (n[blend] - lo) / eps
    # Hermite cubic: (0, lo, slope eps) -> (1, 1, slope 0) in s-space
    out[blend] = lo * (2 * s**3 - 3 * s**2 + 1) + eps * (s**3 - 2 * s**2 + s) + (-2 * s**3 + 3 * s**2)
    return out


def pedestrian_repulsion(x_i, params: GnmParams, heading: float = 0.0):
    """Raw repulsion gradient induced by a neighbor at offset x_i.

    The observer sits at the origin; the gradient points from the
    observer toward the neighbor (consumers negate the sum to get the
    push-back). theta is the neighbor bearing relative to `heading`.
    """
    x_i = np.asarray(x_i, dtype=float)
    r = float(np.linalg.norm(x_i))
    if r == 0.0:
        raise ValueError("coincident pedestrians: repulsion undefined at the origin")
    theta = np.arctan2(x_i[1], x_i[0]) - heading
    mag = float(influence_kernel(r, theta, params))
    return mag * x_i / r


def wall_repulsion(d: float, params: GnmParams):
    """Raw gradient of a straight wall `d` meters below the observer.

    Magnitude h(d; wall_p, wall_r)/d along the wall normal, pointing
    toward the wall (negative second axis); exactly zero for d >= wall_r.
    """
    if d <= 0:
        raise ValueError("pedestrian inside wall: d must be > 0")
    mag = float(radial_kernel(d, params.wall_p, params.wall_r)) / d
    return np.array([0.0, -mag])


def desired_direction(n_t, repulsions, params: GnmParams):
    """Walking direction from the target vector and raw repulsion gradients.

    Composes the bounded normalizer: g(g(target) + g(-sum of gradients)).
    """
    n_t = np.asarray(n_t, dtype=float)
    total = np.zeros(2)
    for grad in repulsions:
        total += np.asarray(grad, dtype=float)
    return normalize_g(normalize_g(n_t, params) + normalize_g(-total, params), params)


def euler_step(state: PedestrianState, neighbors, walls, h: float,
               params: GnmParams) -> PedestrianState:
    """One explicit Euler step of the motion/speed-relaxation ODE.

    neighbors: offsets of nearby walkers relative to this one (meters);
    walls: signed wall distances, positive below the walker, negative
    above. Position advances along the composed direction, the relaxed
    speed decays toward v * ||N||.
    """
    if not (0 < h < params.tau):
        raise ValueError("step size must satisfy 0 < h < tau")
    grads = [pedestrian_repulsion(x, params, heading=state.theta) for x in neighbors]
    for d in walls:
        if d == 0:
            raise ValueError("pedestrian inside wall")
        vec = wall_repulsion(abs(d), params)
        if d < 0:  # wall above: flip the normal
            vec = -vec
        grads.append(vec)
    n_vec = desired_direction(state.n_t, grads, params)
    n_norm = float(np.linalg.norm(n_vec))
    a = 1.0 - h / params.tau
    w_new = max(0.0, state.w * a + (h * params.v / params.tau) * n_norm)
    x_new = (state.x[0] + h * state.w * n_vec[0],
             state.x[1] + h * state.w * n_vec[1])
    theta_new = float(np.arctan2(n_vec[1], n_vec[0])) if n_norm > 1e-12 else state.theta
    return replace(state, x=x_new, w=w_new, theta=theta_new)
