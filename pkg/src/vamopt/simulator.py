"""Monte Carlo street simulator with the kinematic message-trigger engine.

Pedestrians walk two sidewalks of a straight street in both directions,
interacting through the influence kernel and wall repulsion, stepped by
the explicit Euler scheme. Each pedestrian samples its own kinematics at
the positioning cadence and generates messages per the position / speed /
orientation / timer rules, yielding empirical per-trigger rates that
validate the analytic curves.

The street wraps around at its ends so density stays stationary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import Experiment, VamThresholds, derive_seed
from . import gnm

ROAD_WIDTH = 7.0          # separates the sidewalks; wider than any kernel
MAX_SPEED = 1.389         # m/s, walking-speed cap
EVENT_CLASSES = ("position", "speed", "orientation", "timer")


@dataclass
class Snapshot:
    """Kinematics reported in a pedestrian's last message."""

    position: tuple[float, float]
    speed: float
    heading: float
    time: float


@dataclass
class SimState:
    time: float
    pos: np.ndarray          # (n, 2)
    w: np.ndarray            # relaxed speeds
    speed: np.ndarray        # realized speed over the last step
    heading: np.ndarray      # radians
    sidewalk: np.ndarray     # 0 / 1
    direction: np.ndarray    # +1 / -1 along the street
    length: float
    walls: tuple[tuple[float, float], tuple[float, float]]  # y-bounds per sidewalk
    last: list[Snapshot]
    rng: np.random.Generator


def wrap_dx(dx, length: float):
    """Signed x-offset on the periodic street."""
    return (dx + 0.5 * length) % length - 0.5 * length


def wrap_angle_deg(a: float, b: float) -> float:
    """Absolute heading difference folded into [0, 180] degrees."""
    d = abs(a - b) % (2.0 * math.pi)
    if d > math.pi:
        d = 2.0 * math.pi - d
    return math.degrees(d)


def init_street(exp: Experiment, seed: int) -> SimState:
    """Place pedestrians uniformly along both sidewalks, half per direction.

    Initial relaxed speed is the desired speed; targets point along the
    street. Raises when the requested density cannot honor the 0.1 m
    pairwise spacing after 1000 redraws.
    """
    sc = exp.scenario
    if sc.n_p < 1:
        raise ValueError("need at least one pedestrian")
    n = sc.n_p
    length, width = sc.street_length, sc.sidewalk_width
    rng = np.random.default_rng(seed)

    sidewalk = np.zeros(n, dtype=int)
    sidewalk[n // 2:] = 1
    direction = np.ones(n, dtype=int)
    for s in (0, 1):
        idx = np.flatnonzero(sidewalk == s)
        direction[idx[len(idx) // 2:]] = -1

    y0 = (0.0, width)
    y1 = (width + ROAD_WIDTH, 2 * width + ROAD_WIDTH)
    walls = (y0, y1)
    margin = min(0.2, width / 4.0)

    for _ in range(1000):
        x = rng.uniform(0.0, length, size=n)
        lo = np.where(sidewalk == 0, y0[0], y1[0])
        hi = np.where(sidewalk == 0, y0[1], y1[1])
        y = rng.uniform(lo + margin, hi - margin)
        pos = np.column_stack([x, y])
        dx = wrap_dx(pos[:, 0][None, :] - pos[:, 0][:, None], length)
        dy = pos[:, 1][None, :] - pos[:, 1][:, None]
        dist = np.hypot(dx, dy)
        np.fill_diagonal(dist, np.inf)
        if dist.min() >= 0.1:
            break
    else:
        raise ValueError("density too high: could not place pedestrians "
                         "0.1 m apart after 1000 attempts")

    heading = np.where(direction > 0, 0.0, math.pi)
    state = SimState(
        time=0.0,
        pos=pos,
        w=np.full(n, exp.gnm.v),
        speed=np.full(n, exp.gnm.v),
        heading=heading.astype(float),
        sidewalk=sidewalk,
        direction=direction,
        length=length,
        walls=walls,
        last=[Snapshot((pos[i, 0], pos[i, 1]), exp.gnm.v, float(heading[i]), 0.0)
              for i in range(n)],
        rng=rng,
    )
    return state


def step(state: SimState, exp: Experiment) -> SimState:
    """Advance every pedestrian one Euler step (in place)."""
    p = exp.gnm
    n = state.pos.shape[0]
    h = p.h

    dx = wrap_dx(state.pos[:, 0][None, :] - state.pos[:, 0][:, None], state.length)
    dy = state.pos[:, 1][None, :] - state.pos[:, 1][:, None]
    dist = np.hypot(dx, dy)
    same = state.sidewalk[None, :] == state.sidewalk[:, None]
    np.fill_diagonal(dist, np.inf)
    near = same & (dist < p.r_h)

    bearing = np.arctan2(dy, dx) - state.heading[:, None]
    mag = np.where(near,
                   gnm.radial_kernel(np.where(near, dist, p.r_h), p.kernel_p, p.r_h)
                   * gnm.angular_gain(bearing, p),
                   0.0)
    scale = np.where(near, mag / np.where(near, dist, 1.0), 0.0)
    grad = np.stack([(scale * dx).sum(axis=1), (scale * dy).sum(axis=1)], axis=1)

    lo = np.where(state.sidewalk == 0, state.walls[0][0], state.walls[1][0])
    hi = np.where(state.sidewalk == 0, state.walls[0][1], state.walls[1][1])
    d_lo = np.maximum(state.pos[:, 1] - lo, 1e-6)
    d_hi = np.maximum(hi - state.pos[:, 1], 1e-6)
    wall_y = (-gnm.radial_kernel(d_lo, p.wall_p, p.wall_r) / d_lo
              + gnm.radial_kernel(d_hi, p.wall_p, p.wall_r) / d_hi)
    grad[:, 1] += wall_y

    n_t = np.column_stack([state.direction.astype(float), np.zeros(n)])
    n_vec = gnm.normalize_g(gnm.normalize_g(n_t, p) + gnm.normalize_g(-grad, p), p)
    n_norm = np.linalg.norm(n_vec, axis=1)

    state.pos[:, 0] = (state.pos[:, 0] + h * state.w * n_vec[:, 0]) % state.length
    state.pos[:, 1] += h * state.w * n_vec[:, 1]
    state.speed = state.w * n_norm
    a = 1.0 - h / p.tau
    state.w = np.minimum(np.maximum(state.w * a + (h * p.v / p.tau) * n_norm, 0.0),
                         MAX_SPEED)
    moving = n_norm > 1e-12
    state.heading = np.where(moving, np.arctan2(n_vec[:, 1], n_vec[:, 0]),
                             state.heading)
    state.time += h
    return state


def vam_trigger_check(position, speed: float, heading: float, last: Snapshot,
                      thresholds: VamThresholds, now: float,
                      wrap_length: float | None = None) -> str | None:
    """Classify the message a kinematics check would generate, if any.

    Evaluates the displacement, speed-change, orientation-change and
    timer rules against the last reported snapshot; one class per
    message, ordered position > speed > orientation > timer.
    """
    dx = position[0] - last.position[0]
    if wrap_length is not None:
        dx = wrap_dx(dx, wrap_length)
    dy = position[1] - last.position[1]
    if math.hypot(dx, dy) > thresholds.delta_pos:
        return "position"
    if abs(speed - last.speed) > thresholds.delta_speed:
        return "speed"
    if wrap_angle_deg(heading, last.heading) > thresholds.delta_orient_deg:
        return "orientation"
    if now - last.time > thresholds.t_gen_max:
        return "timer"
    return None


@dataclass(frozen=True)
class EmpiricalRates:
    """Per-trigger message counts and rates from one simulation run."""

    omega: float
    duration: float       # measurement window, seconds (after warmup)
    warmup: float
    n_p: int
    seed: int
    counts: dict
    events: tuple = ()

    @property
    def rates(self) -> dict:
        denom = self.n_p * self.duration
        return {k: self.counts[k] / denom for k in EVENT_CLASSES}

    @property
    def rate_total(self) -> float:
        return sum(self.rates.values())


def run_simulation(exp: Experiment, omega: float, duration: float = 300.0,
                   warmup: float = 100.0, seed: int = 0,
                   collect_events: bool = False) -> EmpiricalRates:
    """Run the street for warmup+duration seconds at sampling rate omega.

    Each pedestrian checks its kinematics at its own cadence 1/omega
    (randomly phased); messages inside the measurement window are counted
    by trigger class and normalized per pedestrian-second.
    """
    if duration <= 0 or omega <= 0:
        raise ValueError("duration and omega must be > 0")
    th = exp.thresholds
    state = init_street(exp, seed)
    n = exp.scenario.n_p
    period = 1.0 / omega
    next_check = state.rng.uniform(0.0, period, size=n)
    total = warmup + duration
    counts = {c: 0 for c in EVENT_CLASSES}
    events = []
    n_steps = int(round(total / exp.gnm.h))
    for _ in range(n_steps):
        step(state, exp)
        due = np.flatnonzero(next_check <= state.time)
        for i in due:
            while next_check[i] <= state.time:
                next_check[i] += period
            last = state.last[i]
            if state.time - last.time < th.t_gen_min - 1e-9:
                continue
            cls = vam_trigger_check((state.pos[i, 0], state.pos[i, 1]),
                                    float(state.speed[i]), float(state.heading[i]),
                                    last, th, state.time,
                                    wrap_length=state.length)
            if cls is None:
                continue
            state.last[i] = Snapshot((state.pos[i, 0], state.pos[i, 1]),
                                     float(state.speed[i]),
                                     float(state.heading[i]), state.time)
            if state.time > warmup:
                counts[cls] += 1
                if collect_events:
                    events.append((state.time, int(i), cls))
    return EmpiricalRates(omega=omega, duration=duration, warmup=warmup,
                          n_p=n, seed=seed, counts=counts,
                          events=tuple(events))


# ---------------------------------------------------------------------------
# validation against the analytic curve

_CLASS_TO_COMPONENT = {
    "position": "lambda_delta",
    "speed": "lambda_sigma",
    "orientation": "lambda_theta",
}


@dataclass(frozen=True)
class ErrorTable:
    """Absolute-error percentiles per trigger class, plus conservatism flags."""

    percentiles: dict          # class -> {25: v, 50: v, 75: v, 100: v}
    conservatism: dict         # class -> tuple of (omega, analytic >= emp - 2SE)
    omegas: tuple
    analytic: dict             # class -> tuple of rates
    empirical_mean: dict
    empirical_se: dict

    def conservative_for(self, omega_min: float = 0.1) -> bool:
        return all(ok for cls in self.conservatism
                   for (w, ok) in self.conservatism[cls] if w > omega_min)


def _percentiles_sorted(values, qs=(25, 50, 75, 100)) -> dict:
    """Linear-interpolation percentiles on a sorted copy."""
    vals = sorted(float(v) for v in values)
    out = {}
    for q in qs:
        if len(vals) == 1:
            out[q] = vals[0]
            continue
        pos = (q / 100.0) * (len(vals) - 1)
        lo = int(math.floor(pos))
        hi = min(lo + 1, len(vals) - 1)
        out[q] = vals[lo] + (pos - lo) * (vals[hi] - vals[lo])
    return out


def compare_rates(runs, analytic_curve) -> ErrorTable:
    """Error table between empirical runs (several seeds per omega) and the
    analytic curve on the same omega grid."""
    by_omega: dict[float, list[EmpiricalRates]] = {}
    for run in runs:
        by_omega.setdefault(run.omega, []).append(run)
    omegas = tuple(sorted(by_omega))
    curve_omegas = tuple(e.omega for e in analytic_curve.entries)
    if any(all(abs(w - cw) > 1e-9 for cw in curve_omegas) for w in omegas):
        raise ValueError("empirical grid does not match the analytic grid")

    percentiles, conservatism = {}, {}
    analytic_d, emp_mean_d, emp_se_d = {}, {}, {}
    for cls, comp in _CLASS_TO_COMPONENT.items():
        ana, mean, se = [], [], []
        for w in omegas:
            group = by_omega[w]
            vals = np.array([g.rates[cls] for g in group])
            mean.append(float(vals.mean()))
            se.append(float(vals.std(ddof=1) / math.sqrt(len(vals)))
                      if len(vals) > 1 else 0.0)
            ana.append(getattr(analytic_curve.lookup(w), comp))
        errors = [abs(a - m) for a, m in zip(ana, mean)]
        percentiles[cls] = _percentiles_sorted(errors)
        conservatism[cls] = tuple(
            (w, a >= m - 2.0 * s)
            for w, a, m, s in zip(omegas, ana, mean, se))
        analytic_d[cls] = tuple(ana)
        emp_mean_d[cls] = tuple(mean)
        emp_se_d[cls] = tuple(se)
    return ErrorTable(percentiles=percentiles, conservatism=conservatism,
                      omegas=omegas, analytic=analytic_d,
                      empirical_mean=emp_mean_d, empirical_se=emp_se_d)


def empirical_curve(exp: Experiment, seed: int, duration: float = 300.0,
                    warmup: float = 100.0, repetitions: int = 5,
                    jobs: int = 1):
    """All (omega, repetition) runs for the configured grid, derived seeds.

    Task seeds hash (seed, omega-index, repetition), so results are
    independent of scheduling; jobs > 1 fans runs out across processes.
    """
    tasks = [(w_idx, omega, rep)
             for w_idx, omega in enumerate(exp.scenario.omega_grid)
             for rep in range(repetitions)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_simulation, exp, omega, duration, warmup,
                                   derive_seed(seed, w_idx, rep))
                       for (w_idx, omega, rep) in tasks]
            return [f.result() for f in futures]
    return [run_simulation(exp, omega, duration, warmup,
                           derive_seed(seed, w_idx, rep))
            for (w_idx, omega, rep) in tasks]
