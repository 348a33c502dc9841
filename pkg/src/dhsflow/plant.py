"""Steady-state ground-truth model of a two-loop heat-exchange station.

Units follow the operating records of a district heating station: temperatures
in degC, flows in t/h, heat in GJ/h, conductances in GJ/(h*degC).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

WATER_C = 4.186e-3  # GJ/(t*degC)

PUMP_COEFFS = (0.1492, -5.177, 168.2)
PUMP_F_RANGE = (20.0, 50.0)


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class PlantParams:
    c: float = WATER_C
    ua_hx: float = 0.9
    ua_building: float = 0.426  # calibrate_building_ua() with the defaults below
    ua_pipe: float = 0.015
    t_indoor: float = 18.0
    noise_sigma_temp: float = 0.3
    noise_sigma_flow: float = 1.0
    pump_poly: tuple = PUMP_COEFFS

    def __post_init__(self):
        if self.c <= 0 or self.ua_hx <= 0:
            raise ValueError("c and ua_hx must be positive")
        if self.ua_building < 0 or self.ua_pipe < 0:
            raise ValueError("building and pipe conductances must be non-negative")
        if len(self.pump_poly) != 3:
            raise ValueError("pump_poly needs three coefficients (a2, a1, a0)")
        f = np.linspace(*PUMP_F_RANGE, 31)
        if np.any(np.polyval(self.pump_poly, f) <= 0):
            raise ValueError("pump_poly must give positive flow on [20, 50] Hz")

    def without_noise(self) -> "PlantParams":
        return replace(self, noise_sigma_temp=0.0, noise_sigma_flow=0.0)


@dataclass(frozen=True)
class StandardParams:
    """Constants of the national-standard heat demand formula."""

    k_loss: float = 42.9  # W/m^2
    area: float = 6.2e4  # m^2
    t_required: float = 18.0
    t_design: float = -22.4
    duration: float = 3600.0  # s

    def __post_init__(self):
        if self.t_required <= self.t_design:
            raise ValueError("t_required must exceed t_design")
        if min(self.k_loss, self.area, self.duration) <= 0:
            raise ValueError("k_loss, area and duration must be positive")


@dataclass
class PlantState:
    t1_supply: float
    t1_return: float
    t2_supply: float
    t2_return: float
    flow1: float
    flow2: float
    q1: float
    q2: float
    q_target: float
    t_out: float

    @property
    def tdp(self) -> float:
        return self.t1_supply - self.t1_return

    @property
    def tds(self) -> float:
        return self.t2_supply - self.t2_return


def target_heat(std: StandardParams, t_out):
    """Heat demand in GJ/h for outdoor temperature ``t_out``; zero above T0."""
    t = np.minimum(np.asarray(t_out, dtype=float), std.t_required)
    ratio = (std.t_required - t) / (std.t_required - std.t_design)
    q = std.k_loss * std.area * ratio * std.duration * 1e-9
    return float(q) if np.ndim(q) == 0 else q


def heat_quantity(c: float, flow, td):
    if np.any(np.asarray(flow) < 0):
        raise ValueError("flow must be non-negative")
    return c * flow * td


def pump_flow(f, coeffs=PUMP_COEFFS):
    """Secondary flow (t/h) produced by the circulating pump at ``f`` Hz."""
    fa = np.asarray(f, dtype=float)
    lo, hi = PUMP_F_RANGE
    if np.any(fa < lo) or np.any(fa > hi):
        raise ValueError(f"pump frequency outside [{lo}, {hi}] Hz: {f}")
    a2, a1, a0 = coeffs
    out = (a2 * fa + a1) * fa + a0
    return float(out) if out.ndim == 0 else out


def pump_frequency(flow2, coeffs=PUMP_COEFFS):
    """Invert the pump polynomial on [20, 50] Hz; flows are clipped to the reachable span."""
    a2, a1, a0 = coeffs
    lo, hi = pump_flow(PUMP_F_RANGE[0], coeffs), pump_flow(PUMP_F_RANGE[1], coeffs)
    q = np.clip(np.asarray(flow2, dtype=float), lo, hi)
    # increasing branch of the parabola
    f = (-a1 + np.sqrt(a1 * a1 - 4 * a2 * (a0 - q))) / (2 * a2)
    f = np.clip(f, *PUMP_F_RANGE)
    return float(f) if f.ndim == 0 else f


def hx_effectiveness(params: PlantParams, flow1: float, flow2: float) -> float:
    """Counter-flow effectiveness from the effectiveness-NTU relations."""
    if flow1 <= 0 or flow2 <= 0:
        raise ValueError("flows must be positive")
    c1, c2 = params.c * flow1, params.c * flow2
    c_min, c_max = min(c1, c2), max(c1, c2)
    ntu = params.ua_hx / c_min
    cr = c_min / c_max
    if abs(1.0 - cr) < 1e-12:
        return ntu / (1.0 + ntu)
    e = math.exp(-ntu * (1.0 - cr))
    return (1.0 - e) / (1.0 - cr * e)


def _balance_terms(params, t1_supply, flow1, flow2, t_out, eps, t2_return):
    c2 = params.c * flow2
    c_min = params.c * min(flow1, flow2)
    q_ex = eps * c_min * (t1_supply - t2_return)
    t2_hot = t2_return + q_ex / c2
    pipe = params.ua_pipe * (t2_hot - t_out)
    t2_supply = t2_hot - pipe / c2
    building = params.ua_building * (0.5 * (t2_supply + t2_return) - params.t_indoor)
    return q_ex, t2_supply, pipe, building


def solve_return_temp(params, t1_supply, flow1, flow2, t_out, guess=None,
                      tol=1e-9, max_iter=200):
    """Secondary return temperature at which exchanger heat equals building plus pipe loss."""
    eps = hx_effectiveness(params, flow1, flow2)

    def residual(x):
        q_ex, _, pipe, building = _balance_terms(params, t1_supply, flow1, flow2,
                                                 t_out, eps, x)
        return q_ex - building - pipe

    x0 = t1_supply if guess is None else float(guess)
    x1 = x0 - 1.0
    r0, r1 = residual(x0), residual(x1)
    for _ in range(max_iter):
        if r1 == r0:
            if r1 == 0.0:
                return x1
            break
        x2 = x1 - r1 * (x1 - x0) / (r1 - r0)
        if abs(x2 - x1) < tol:
            return x2
        x0, r0 = x1, r1
        x1, r1 = x2, residual(x2)
    if abs(residual(x1)) == 0.0:
        return x1
    raise ConvergenceError(
        f"return temperature did not converge (t1s={t1_supply}, flow1={flow1}, "
        f"flow2={flow2}, t_out={t_out})")


def plant_steady_state(params: PlantParams, std: StandardParams, t1_supply: float,
                       flow1: float, flow2: float, t_out: float,
                       rng: np.random.Generator | None = None,
                       guess: float | None = None) -> PlantState:
    """Steady operating point of the station for the given controls.

    The reported secondary supply temperature is measured after the supply-pipe
    loss, so ``q2 = c * flow2 * (t2_supply - t2_return)`` is the heat reaching the
    buildings while ``q1`` is the heat drawn from the primary loop.  Noise is only
    added when ``rng`` is given and the parameter sigmas are non-zero.
    """
    if flow1 <= 0 or flow2 <= 0:
        raise ValueError("flows must be positive")
    if t1_supply <= t_out:
        raise ValueError("primary supply must be warmer than outdoors")
    t2_return = solve_return_temp(params, t1_supply, flow1, flow2, t_out, guess=guess)
    eps = hx_effectiveness(params, flow1, flow2)
    q_ex, t2_supply, _, _ = _balance_terms(params, t1_supply, flow1, flow2, t_out,
                                           eps, t2_return)
    t1_return = t1_supply - q_ex / (params.c * flow1)

    temps = np.array([t1_supply, t1_return, t2_supply, t2_return])
    flows = np.array([flow1, flow2], dtype=float)
    if rng is not None:
        temps = temps + rng.normal(0.0, params.noise_sigma_temp, 4) \
            if params.noise_sigma_temp > 0 else temps
        flows = flows + rng.normal(0.0, params.noise_sigma_flow, 2) \
            if params.noise_sigma_flow > 0 else flows
        flows = np.maximum(flows, 0.0)
    tdp = max(temps[0] - temps[1], 0.0)
    tds = max(temps[2] - temps[3], 0.0)
    return PlantState(
        t1_supply=float(temps[0]), t1_return=float(temps[0] - tdp),
        t2_supply=float(temps[2]), t2_return=float(temps[2] - tds),
        flow1=float(flows[0]), flow2=float(flows[1]),
        q1=float(params.c * flows[0] * tdp), q2=float(params.c * flows[1] * tds),
        q_target=target_heat(std, t_out), t_out=float(t_out),
    )


def steady_heat_batch(params: PlantParams, t1_supply, flow1, flow2, t_out):
    """Vectorised noise-free (q1, q2, t2_supply, t2_return) for arrays of operating points.

    The energy balance is affine in the return temperature, so the batch path
    solves it in closed form; ``plant_steady_state`` iterates instead.
    """
    t1s, f1, f2, to = np.broadcast_arrays(*(np.asarray(a, dtype=float)
                                            for a in (t1_supply, flow1, flow2, t_out)))
    c = params.c
    c1, c2 = c * f1, c * f2
    c_min, c_max = np.minimum(c1, c2), np.maximum(c1, c2)
    ntu = params.ua_hx / c_min
    cr = c_min / c_max
    with np.errstate(invalid="ignore", divide="ignore"):
        e = np.exp(-ntu * (1.0 - cr))
        eps = np.where(np.abs(1.0 - cr) < 1e-12, ntu / (1.0 + ntu),
                       (1.0 - e) / (1.0 - cr * e))
    g = eps * c_min  # q_ex = g * (t1s - x)
    ub, up, ti = params.ua_building, params.ua_pipe, params.t_indoor
    # t2_hot = x + g (t1s - x)/c2 ; pipe = up (t2_hot - to) ; t2s = t2_hot - pipe/c2
    # residual(x) = g(t1s-x) - ub((t2s + x)/2 - ti) - pipe, affine in x
    a = g / c2
    hot_k, hot_b = 1.0 - a, a * t1s
    pipe_k, pipe_b = up * hot_k, up * (hot_b - to)
    sup_k, sup_b = hot_k - pipe_k / c2, hot_b - pipe_b / c2
    res_k = -g - ub * 0.5 * (sup_k + 1.0) - pipe_k
    res_b = g * t1s - ub * (0.5 * sup_b - ti) - pipe_b
    x = -res_b / res_k
    q1 = g * (t1s - x)
    t2s = sup_k * x + sup_b
    q2 = c2 * (t2s - x)
    return q1, q2, t2s, x


def supply_temp_schedule(t_out, seed=None, sigma: float = 2.0):
    """Operator heat curve for the primary supply temperature.

    ``seed=None`` gives the noise-free curve.
    """
    t = np.asarray(t_out, dtype=float)
    base = 70.0 - 0.9 * (t + 20.0)
    if seed is not None and sigma > 0:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        base = base + rng.normal(0.0, sigma, size=base.shape)
    out = np.clip(base, 45.0, 95.0)
    return float(out) if out.ndim == 0 else out


_PARAM_TYPES = {f.name: f for f in fields(PlantParams)}
_STD_TYPES = {f.name: f for f in fields(StandardParams)}


def params_from_mapping(mapping: dict) -> tuple[PlantParams, StandardParams]:
    """Build parameter sets from ``key = value`` config entries.

    Keys may be bare field names or prefixed with ``plant.`` / ``standard.``.
    """
    plant_kw, std_kw = {}, {}
    for key, value in mapping.items():
        section, _, name = key.rpartition(".")
        if section in ("", "plant") and name in _PARAM_TYPES:
            if name == "pump_poly":
                value = tuple(float(v) for v in str(value).replace(",", " ").split())
            else:
                value = float(value)
            plant_kw[name] = value
        elif section in ("", "standard") and name in _STD_TYPES:
            std_kw[name] = float(value)
        else:
            raise KeyError(f"unknown plant/standard key: {key}")
    return PlantParams(**plant_kw), StandardParams(**std_kw)


def calibrate_building_ua(std: StandardParams | None = None, base: PlantParams | None = None,
                          flow1: float = 77.5, pump_f: float = 42.5,
                          lo: float = 0.05, hi: float = 2.0, tol: float = 1e-10) -> float:
    """Building conductance that makes the delivered heat ``q2`` meet the design-day demand.

    The calibration point is the design outdoor temperature, the heat-curve supply
    temperature there, and controls at three quarters of their span, which leaves
    headroom for colder-than-design hours.
    """
    std = std or StandardParams()
    base = base or PlantParams()
    t_out = std.t_design
    t1s = supply_temp_schedule(t_out)
    goal = target_heat(std, t_out)
    flow2 = pump_flow(pump_f, base.pump_poly)

    def q2_at(ua):
        return steady_heat_batch(replace(base, ua_building=ua), t1s, flow1, flow2, t_out)[1]

    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if q2_at(mid) < goal:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
