"""Desk-scale surrogate grid environment for delayed voltage recovery.

The model is a K-bus lumped abstraction of the FIDVR mechanism: bus loads
split into static and single-phase-motor shares; motors stall when their
voltage stays below a threshold long enough; stalled motors draw heavily
increased reactive power; per-bus voltages relax first-order toward an
algebraic target depressed by total reactive demand through a fixed,
diagonally dominant sensitivity matrix. Shedding load removes reactive
demand (stalled motor share first) and lets voltages recover.

A control step spans 0.1 s and advances the inner dynamics with explicit
first-order integration at a much smaller substep. Rewards combine a
recovery-criterion voltage deficit, a shedding cost, and an invalid-action
penalty, with a terminal penalty when voltages have not recovered a few
seconds after fault clearance.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from gridshed.errors import ConfigError, SimulationFault

# Final recovery window of the transient voltage recovery criterion:
# the third threshold must hold from 1.5 s after fault clearance.
TVRC_FINAL_WINDOW_S = 1.5

# Tolerance for time-window comparisons built from accumulated float steps.
TIME_EPS = 1e-9

MAX_SHED_FRACTION = 0.2


@dataclass(frozen=True)
class ScenarioSpec:
    """One operating scenario: a power-flow variant plus one fault."""

    scenario_id: int
    load_scale: float
    gen_scale: float
    fault_bus: int
    fault_start: float
    fault_duration: float

    def validate(self):
        if self.load_scale <= 0:
            raise ConfigError(f"scenario {self.scenario_id}: load_scale must be > 0")
        if self.gen_scale <= 0:
            raise ConfigError(f"scenario {self.scenario_id}: gen_scale must be > 0")
        if self.fault_start < 0:
            raise ConfigError(f"scenario {self.scenario_id}: fault_start must be >= 0")
        if self.fault_duration <= 0:
            raise ConfigError(f"scenario {self.scenario_id}: fault_duration must be > 0")
        if self.fault_bus < 0:
            raise ConfigError(f"scenario {self.scenario_id}: fault_bus must be >= 0")

    @property
    def t_clear(self) -> float:
        return self.fault_start + self.fault_duration


@dataclass(frozen=True)
class ScenarioSetConfig:
    """Cross product description: power-flow variants x fault variants."""

    power_flow: tuple[tuple[float, float], ...]  # (load_scale, gen_scale)
    fault_buses: tuple[int, ...]
    fault_timings: tuple[tuple[float, float], ...]  # (start, duration)
    id_offset: int = 0


def build_scenario_set(config: ScenarioSetConfig) -> list[ScenarioSpec]:
    """Deterministic cross product ordered by (power-flow index, fault index)."""
    if not config.power_flow:
        raise ConfigError("scenario set: power_flow variant list is empty")
    if not config.fault_buses:
        raise ConfigError("scenario set: fault_buses list is empty")
    if not config.fault_timings:
        raise ConfigError("scenario set: fault_timings list is empty")
    fault_variants = [
        (bus, start, duration)
        for bus in config.fault_buses
        for start, duration in config.fault_timings
    ]
    scenarios = []
    for pf_idx, (load_scale, gen_scale) in enumerate(config.power_flow):
        for f_idx, (bus, start, duration) in enumerate(fault_variants):
            spec = ScenarioSpec(
                scenario_id=config.id_offset + pf_idx * len(fault_variants) + f_idx,
                load_scale=float(load_scale),
                gen_scale=float(gen_scale),
                fault_bus=int(bus),
                fault_start=float(start),
                fault_duration=float(duration),
            )
            spec.validate()
            scenarios.append(spec)
    return scenarios


@dataclass(frozen=True)
class RewardWeights:
    c1: float = 1.0
    c2: float = 5.0
    c3: float = 100.0
    penalty: float = -10000.0
    check_delay: float = 4.0
    final_threshold: float = 0.95

    def validate(self):
        if self.c1 < 0 or self.c2 < 0 or self.c3 < 0:
            raise ConfigError("reward weights c1, c2, c3 must be nonnegative")
        if self.penalty >= 0:
            raise ConfigError("reward penalty must be negative")
        if self.check_delay <= 0:
            raise ConfigError("reward check_delay must be > 0")
        if not 0 < self.final_threshold < 1.3:
            raise ConfigError("reward final_threshold must lie in (0, 1.3)")


@dataclass(frozen=True)
class CriterionCurve:
    """Recovery criterion: three voltage levels and two window offsets."""

    v1: float = 0.70
    v2: float = 0.80
    v3: float = 0.90
    t1: float = 0.33
    t2: float = 0.50

    def validate(self):
        if not self.v1 < self.v2 < self.v3:
            raise ConfigError(f"criterion levels must satisfy v1 < v2 < v3, got {self}")
        if not 0 < self.t1 < self.t2:
            raise ConfigError(f"criterion windows must satisfy 0 < t1 < t2, got {self}")


@dataclass(frozen=True)
class GridModelConstants:
    """Fixed physical constants of the surrogate model.

    The defaults are calibrated so that, on the shipped scenario sets,
    an uncontrolled rollout violates the recovery criterion while
    maximal shedding from fault clearance restores it.
    """

    n_buses: int = 10
    bus_loads_mw: tuple[float, ...] = (90.0, 130.0, 105.0, 150.0, 85.0, 120.0, 140.0, 95.0, 110.0, 125.0)
    motor_fraction: float = 0.33
    q_static: float = 0.2
    q_run: float = 0.4
    q_stall: float = 2.5
    sens_self: float = 0.1
    sens_decay: float = 0.3
    gen_support: float = 0.06
    fault_level: float = 0.15
    fault_region_radius: int = 1
    tau_v: float = 0.15
    inner_dt: float = 0.005
    control_dt: float = 0.1
    horizon: float = 10.0
    stall_voltage: float = 0.5
    stall_time: float = 0.05
    base_mva: float = 100.0
    min_remaining_fraction: float = 1e-3
    v_max: float = 1.3

    def validate(self):
        if self.n_buses < 1:
            raise ConfigError("n_buses must be >= 1")
        if len(self.bus_loads_mw) != self.n_buses:
            raise ConfigError(
                f"bus_loads_mw has {len(self.bus_loads_mw)} entries for n_buses={self.n_buses}"
            )
        if any(l <= 0 for l in self.bus_loads_mw):
            raise ConfigError("bus loads must be positive")
        if not 0 < self.motor_fraction < 1:
            raise ConfigError("motor_fraction must lie in (0, 1)")
        if self.inner_dt > 0.01 + TIME_EPS:
            raise ConfigError("inner_dt must be <= 0.01 s")
        n_sub = self.control_dt / self.inner_dt
        if abs(n_sub - round(n_sub)) > 1e-9:
            raise ConfigError("control_dt must be an integer multiple of inner_dt")
        if self.tau_v <= 0:
            raise ConfigError("tau_v must be > 0")
        if not 0 <= self.fault_level < self.stall_voltage:
            raise ConfigError("fault_level must lie in [0, stall_voltage)")
        if self.stall_time <= 0 or self.stall_voltage <= 0:
            raise ConfigError("stall_time and stall_voltage must be > 0")
        if self.base_mva <= 0:
            raise ConfigError("base_mva must be > 0")
        if not 0 <= self.min_remaining_fraction < 1:
            raise ConfigError("min_remaining_fraction must lie in [0, 1)")
        sens = self.sensitivity_matrix()
        off_diag = sens.sum(axis=1) - np.diag(sens)
        if np.any(off_diag >= np.diag(sens)):
            raise ConfigError("sensitivity matrix is not diagonally dominant")

    @property
    def n_substeps(self) -> int:
        return int(round(self.control_dt / self.inner_dt))

    def sensitivity_matrix(self) -> np.ndarray:
        """Ring-topology voltage/reactive sensitivity with geometric decay."""
        n = self.n_buses
        idx = np.arange(n)
        dist = np.abs(idx[:, None] - idx[None, :])
        dist = np.minimum(dist, n - dist)
        return self.sens_self * self.sens_decay ** dist

    def fault_region(self, fault_bus: int) -> np.ndarray:
        r = self.fault_region_radius
        return np.unique((fault_bus + np.arange(-r, r + 1)) % self.n_buses)


@dataclass
class BusLoadState:
    """Snapshot of one bus's load composition."""

    static_load: float
    motor_load: float
    stalled_fraction: float
    remaining_fraction: float
    stall_timer: float


@dataclass
class BusLoads:
    """Array-of-buses load bookkeeping (all MW at scenario scale)."""

    static_mw: np.ndarray
    motor_mw: np.ndarray
    stalled_mw: np.ndarray
    stall_counts: np.ndarray  # integer substeps spent below the stall voltage
    initial_mw: np.ndarray

    @classmethod
    def initial(cls, constants: GridModelConstants, load_scale: float) -> "BusLoads":
        loads = np.asarray(constants.bus_loads_mw, dtype=float) * load_scale
        motor = constants.motor_fraction * loads
        return cls(
            static_mw=loads - motor,
            motor_mw=motor,
            stalled_mw=np.zeros_like(loads),
            stall_counts=np.zeros(len(loads), dtype=np.int64),
            initial_mw=loads.copy(),
        )

    def copy(self) -> "BusLoads":
        return BusLoads(
            static_mw=self.static_mw.copy(),
            motor_mw=self.motor_mw.copy(),
            stalled_mw=self.stalled_mw.copy(),
            stall_counts=self.stall_counts.copy(),
            initial_mw=self.initial_mw.copy(),
        )

    @property
    def remaining_fractions(self) -> np.ndarray:
        return (self.static_mw + self.motor_mw) / self.initial_mw

    @property
    def stalled_fractions(self) -> np.ndarray:
        frac = np.zeros_like(self.motor_mw)
        active = self.motor_mw > 0
        frac[active] = self.stalled_mw[active] / self.motor_mw[active]
        return frac

    def bus(self, j: int, inner_dt: float) -> BusLoadState:
        return BusLoadState(
            static_load=float(self.static_mw[j]),
            motor_load=float(self.motor_mw[j]),
            stalled_fraction=float(self.stalled_fractions[j]),
            remaining_fraction=float(self.remaining_fractions[j]),
            stall_timer=float(self.stall_counts[j] * inner_dt),
        )


@dataclass
class GridState:
    """Observable state at a control boundary."""

    time: float
    voltages: np.ndarray
    remaining_fractions: np.ndarray
    done: bool = False
    failed: bool = False


def apply_shedding(loads: BusLoads, fractions: np.ndarray, min_remaining_fraction: float) -> np.ndarray:
    """Shed the given fraction of each bus's remaining load.

    The cut is proportional across the static and motor shares; within the
    motor share it removes stalled load first. Buses whose remaining
    fraction drops below the floor are disconnected entirely (their
    residual counts as shed). Returns the MW shed per bus.
    """
    f = np.asarray(fractions, dtype=float)
    remaining = loads.static_mw + loads.motor_mw
    shed_mw = f * remaining
    keep = 1.0 - f
    loads.static_mw *= keep
    new_motor = loads.motor_mw * keep
    shed_from_motor = loads.motor_mw - new_motor
    loads.stalled_mw = np.minimum(np.maximum(loads.stalled_mw - shed_from_motor, 0.0), new_motor)
    loads.motor_mw = new_motor

    lam = loads.remaining_fractions
    depleted = (lam > 0.0) & (lam < min_remaining_fraction)
    if np.any(depleted):
        shed_mw = shed_mw + np.where(depleted, loads.static_mw + loads.motor_mw, 0.0)
        loads.static_mw[depleted] = 0.0
        loads.motor_mw[depleted] = 0.0
        loads.stalled_mw[depleted] = 0.0
    return shed_mw


def motor_stall_update(
    voltages: np.ndarray,
    loads: BusLoads,
    dt: float,
    stall_voltage: float = 0.5,
    stall_time: float = 0.05,
) -> bool:
    """Advance per-bus stall timers and trip motors that dwelt too long.

    A bus whose voltage sits strictly below the stall threshold accumulates
    dwell time; once the dwell reaches the stall time, all of its remaining
    (unshed) motor load locks into the stalled mode and never recovers.
    Timers reset whenever the voltage is back at or above the threshold.
    Returns True when any bus newly stalled.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    below = voltages < stall_voltage
    loads.stall_counts[below] += 1
    loads.stall_counts[~below] = 0
    tripped = below & (loads.stall_counts * dt >= stall_time - TIME_EPS)
    new_stall = tripped & (loads.stalled_mw < loads.motor_mw)
    if np.any(new_stall):
        loads.stalled_mw[new_stall] = loads.motor_mw[new_stall]
        return True
    return False


def reactive_demand(loads: BusLoads, q_static: float, q_run: float, q_stall: float, base_mva: float) -> np.ndarray:
    """Per-bus reactive demand in per unit on the system base."""
    running = loads.motor_mw - loads.stalled_mw
    q_mvar = q_static * loads.static_mw + q_run * running + q_stall * loads.stalled_mw
    return q_mvar / base_mva


def voltage_dynamics_update(
    voltages: np.ndarray,
    v_target: np.ndarray,
    dt: float,
    tau_v: float,
    v_max: float = 1.3,
) -> np.ndarray:
    """One explicit first-order relaxation step toward the algebraic target."""
    v_new = voltages + (dt / tau_v) * (v_target - voltages)
    np.clip(v_new, 0.0, v_max, out=v_new)
    if not np.all(np.isfinite(v_new)):
        raise SimulationFault("non-finite bus voltage during integration")
    return v_new


def reward_threshold_at(t: float, t_clear: float, criterion: CriterionCurve) -> float:
    """Voltage level the reward deficit is measured against at time t."""
    if t <= t_clear:
        return 0.0
    if t < t_clear + criterion.t1:
        return criterion.v1
    if t < t_clear + criterion.t2:
        return criterion.v2
    return criterion.v3


def compute_reward(
    voltages: np.ndarray,
    t: float,
    t_clear: float,
    shed_pu: np.ndarray,
    invalid_count: int,
    weights: RewardWeights,
    criterion: CriterionCurve,
) -> tuple[float, bool]:
    """Per-step reward; returns (reward, failed).

    The terminal branch fires when any monitored voltage is still below the
    final threshold strictly later than ``check_delay`` seconds after fault
    clearance. Otherwise the reward is the criterion-deficit term minus the
    shedding cost minus the invalid-action penalty.
    """
    v = np.asarray(voltages, dtype=float)
    if t > t_clear + weights.check_delay + TIME_EPS and np.any(v < weights.final_threshold):
        return weights.penalty, True
    threshold = reward_threshold_at(t, t_clear, criterion)
    deficit = np.minimum(v - threshold, 0.0).sum() if threshold > 0.0 else 0.0
    shed_total = float(np.sum(shed_pu))
    reward = weights.c1 * deficit - weights.c2 * shed_total - weights.c3 * invalid_count
    return float(reward), False


def tvrc_threshold(dt_after_clear: float, criterion: CriterionCurve) -> float:
    """Recovery-envelope level a voltage must meet at the given offset.

    Before the first window opens there is no requirement (returns 0).
    """
    if dt_after_clear < criterion.t1:
        return 0.0
    if dt_after_clear < criterion.t2:
        return criterion.v1
    if dt_after_clear < TVRC_FINAL_WINDOW_S:
        return criterion.v2
    return criterion.v3


def check_tvrc(times: np.ndarray, voltages: np.ndarray, criterion: CriterionCurve, t_clear: float) -> bool:
    """True when every bus meets the recovery envelope at every sample.

    Comparisons are closed: a voltage exactly at the active level passes.
    """
    times = np.asarray(times, dtype=float)
    v = np.atleast_2d(np.asarray(voltages, dtype=float))
    if v.shape[0] != times.shape[0]:
        raise ValueError("times and voltage trace rows must align")
    for t, row in zip(times, v):
        level = tvrc_threshold(t - t_clear, criterion)
        if level > 0.0 and np.any(row < level):
            return False
    return True


class SurrogateGrid:
    """Single-episode simulator; never share an instance across evaluations."""

    def __init__(
        self,
        constants: GridModelConstants | None = None,
        weights: RewardWeights | None = None,
        criterion: CriterionCurve | None = None,
    ):
        self.constants = constants or GridModelConstants()
        self.weights = weights or RewardWeights()
        self.criterion = criterion or CriterionCurve()
        self.constants.validate()
        self.weights.validate()
        self.criterion.validate()
        self._sens = self.constants.sensitivity_matrix()
        base = BusLoads.initial(self.constants, 1.0)
        self._q_base = reactive_demand(
            base, self.constants.q_static, self.constants.q_run,
            self.constants.q_stall, self.constants.base_mva,
        )
        self.scenario: ScenarioSpec | None = None
        self.loads: BusLoads | None = None
        self._v: np.ndarray | None = None
        self._v0: np.ndarray | None = None
        self._v_target: np.ndarray | None = None
        self._fault_region: np.ndarray | None = None
        self._step_index = 0
        self._done = False
        self._failed = False
        self.episode_rng: np.random.Generator | None = None

    def clone(self) -> "SurrogateGrid":
        return SurrogateGrid(self.constants, self.weights, self.criterion)

    @property
    def n_buses(self) -> int:
        return self.constants.n_buses

    @property
    def t_clear(self) -> float:
        if self.scenario is None:
            raise RuntimeError("no active episode; call reset first")
        return self.scenario.t_clear

    @property
    def time(self) -> float:
        return self._step_index * self.constants.control_dt

    def reset(self, scenario: ScenarioSpec) -> GridState:
        scenario.validate()
        if not 0 <= scenario.fault_bus < self.n_buses:
            raise ConfigError(
                f"scenario {scenario.scenario_id}: fault_bus {scenario.fault_bus} "
                f"outside [0, {self.n_buses})"
            )
        self.scenario = scenario
        self.loads = BusLoads.initial(self.constants, scenario.load_scale)
        c = self.constants
        # No-load target voltage: holds the flat nominal profile at base
        # loading, with extra headroom when generation is scaled up.
        self._v0 = 1.0 + self._sens @ self._q_base + c.gen_support * (scenario.gen_scale - 1.0)
        self._refresh_target()
        self._v = self._v_target.copy()
        self._fault_region = c.fault_region(scenario.fault_bus)
        self._step_index = 0
        self._done = False
        self._failed = False
        # Reserved for stochastic model extensions; the core dynamics draw
        # nothing from it, keeping episodes bit-deterministic.
        self.episode_rng = np.random.default_rng(scenario.scenario_id)
        return self.state()

    def _refresh_target(self):
        q = reactive_demand(
            self.loads, self.constants.q_static, self.constants.q_run,
            self.constants.q_stall, self.constants.base_mva,
        )
        self._v_target = self._v0 - self._sens @ q

    def state(self) -> GridState:
        return GridState(
            time=self.time,
            voltages=self._v.copy(),
            remaining_fractions=self.loads.remaining_fractions.copy(),
            done=self._done,
            failed=self._failed,
        )

    def bus_state(self, j: int) -> BusLoadState:
        return self.loads.bus(j, self.constants.inner_dt)

    def step(self, action: np.ndarray) -> tuple[GridState, float, bool]:
        """Advance one 0.1 s control interval under a shed-fraction vector."""
        if self.scenario is None:
            raise RuntimeError("no active episode; call reset first")
        if self._done:
            raise RuntimeError("episode is done; call reset to start a new one")
        a = np.asarray(action, dtype=float)
        if a.shape != (self.n_buses,):
            raise ValueError(f"action must have shape ({self.n_buses},), got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("action contains non-finite values")
        a = np.clip(a, 0.0, MAX_SHED_FRACTION)

        c = self.constants
        lam_before = self.loads.remaining_fractions
        invalid_count = int(np.sum((a > 0.0) & (lam_before == 0.0)))
        shed_mw = apply_shedding(self.loads, a, c.min_remaining_fraction)
        self._refresh_target()

        fault_start = self.scenario.fault_start
        fault_end = self.scenario.t_clear
        base_substep = self._step_index * c.n_substeps
        v = self._v
        for s in range(c.n_substeps):
            t_sub = (base_substep + s) * c.inner_dt
            if fault_start - TIME_EPS <= t_sub < fault_end - TIME_EPS:
                v[self._fault_region] = c.fault_level
            if motor_stall_update(v, self.loads, c.inner_dt, c.stall_voltage, c.stall_time):
                self._refresh_target()
            v = voltage_dynamics_update(v, self._v_target, c.inner_dt, c.tau_v, c.v_max)
        self._v = v

        self._step_index += 1
        t_end = self.time
        reward, failed = compute_reward(
            self._v, t_end, self.scenario.t_clear, shed_mw / c.base_mva,
            invalid_count, self.weights, self.criterion,
        )
        self._failed = failed
        self._done = failed or t_end >= c.horizon - TIME_EPS
        return self.state(), reward, self._done


@dataclass
class EpisodeTrace:
    """Control-rate record of one episode."""

    times: list = field(default_factory=list)
    voltages: list = field(default_factory=list)
    remaining: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    done: list = field(default_factory=list)
    failed: list = field(default_factory=list)

    def append(self, state: GridState, reward: float):
        self.times.append(state.time)
        self.voltages.append(state.voltages.copy())
        self.remaining.append(state.remaining_fractions.copy())
        self.rewards.append(reward)
        self.done.append(state.done)
        self.failed.append(state.failed)

    def voltage_array(self) -> np.ndarray:
        return np.asarray(self.voltages)

    def time_array(self) -> np.ndarray:
        return np.asarray(self.times)

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))


def write_trace_csv(trace: EpisodeTrace, path):
    n = len(trace.voltages[0]) if trace.voltages else 0
    header = (
        ["time"]
        + [f"v_{j}" for j in range(n)]
        + [f"lam_{j}" for j in range(n)]
        + ["reward", "done", "failed"]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(trace.times)):
            row = (
                [format(trace.times[i], ".17g")]
                + [format(x, ".17g") for x in trace.voltages[i]]
                + [format(x, ".17g") for x in trace.remaining[i]]
                + [format(trace.rewards[i], ".17g"), int(trace.done[i]), int(trace.failed[i])]
            )
            writer.writerow(row)
