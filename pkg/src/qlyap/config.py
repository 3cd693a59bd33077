"""Run configuration: JSON parsing, validation, presets, serialization.

Levels are 1-based in configuration files.  Complex matrix entries are
written either as plain numbers or as ``[re, im]`` pairs.

Example::

    {
      "system": {"energies": [0.4948, 1.4529],
                 "controls": [{"pair": [1, 2]}],
                 "gains": [1.0]},
      "initial_state": {"diagonal": [0.7, 0.3]},
      "target_state": {"diagonal": [0.3, 0.7]},
      "observable": {"mode": "negative_target"},
      "simulation": {"dt": 0.01, "t_final": 50,
                     "kick": {"mode": "constant_pulse", "amplitude": 0.01, "duration": 1}}
    }
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

import numpy as np

from .control import Observable, construct_P_coherent, construct_P_negative_target, construct_P_pure
from .errors import ValidationError
from .propagate import KICK_MODES, KickPolicy, SimulationConfig
from .qla import as_density_matrix, pure_state
from .system import EQUIVALENCE_TOL, REGULARITY_TOL, ControlHamiltonian, QuantumSystem

OBSERVABLE_MODES = ("negative_target", "coherent", "pure")
STATE_FORMS = ("diagonal", "matrix", "vector")


class ConfigError(ValidationError):
    def __init__(self, where: str, message: str):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


def _require(d: dict, key: str, where: str):
    if not isinstance(d, dict):
        raise ConfigError(where, "expected an object")
    if key not in d:
        raise ConfigError(f"{where}.{key}" if where else key, "missing required field")
    return d[key]


def _check_keys(d: dict, allowed, where: str):
    if not isinstance(d, dict):
        raise ConfigError(where, "expected an object")
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(where, f"unknown field(s) {extra}")


def _number(x, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(where, f"expected a number, got {x!r}")
    if not np.isfinite(x):
        raise ConfigError(where, "must be finite")
    return float(x)


def _numbers(xs, where: str) -> list[float]:
    if not isinstance(xs, list) or not xs:
        raise ConfigError(where, "expected a non-empty list of numbers")
    return [_number(x, f"{where}[{i}]") for i, x in enumerate(xs)]


def _complex(x, where: str) -> list[float]:
    if isinstance(x, list):
        if len(x) != 2:
            raise ConfigError(where, "complex entries are [re, im] pairs")
        return [_number(x[0], where + "[0]"), _number(x[1], where + "[1]")]
    return [_number(x, where), 0.0]


def _complex_matrix(rows, where: str, n: Optional[int] = None) -> list[list[list[float]]]:
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise ConfigError(where, "expected a list of rows")
    size = len(rows)
    if n is not None and size != n:
        raise ConfigError(where, f"expected {n} rows, got {size}")
    out = []
    for i, r in enumerate(rows):
        if len(r) != size:
            raise ConfigError(f"{where}[{i}]", f"expected {size} entries, got {len(r)}")
        out.append([_complex(x, f"{where}[{i}][{j}]") for j, x in enumerate(r)])
    return out


def _to_array(cm) -> np.ndarray:
    a = np.asarray(cm, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def _from_array(A) -> list:
    A = np.asarray(A, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in A]


@dataclass
class StateSpec:
    form: str
    values: Any  # list of floats (diagonal), complex rows, or complex vector

    @classmethod
    def parse(cls, d, where: str, n: int) -> "StateSpec":
        if not isinstance(d, dict) or len(d) != 1 or next(iter(d)) not in STATE_FORMS:
            raise ConfigError(where, f"state needs exactly one of {list(STATE_FORMS)}")
        form, raw = next(iter(d.items()))
        w = f"{where}.{form}"
        if form == "diagonal":
            vals = _numbers(raw, w)
            if len(vals) != n:
                raise ConfigError(w, f"expected {n} values, got {len(vals)}")
        elif form == "matrix":
            vals = _complex_matrix(raw, w, n)
        else:
            if not isinstance(raw, list) or len(raw) != n:
                raise ConfigError(w, f"expected {n} entries")
            vals = [_complex(x, f"{w}[{i}]") for i, x in enumerate(raw)]
        spec = cls(form, vals)
        try:
            spec.build()
        except ValidationError as exc:
            raise ConfigError(where, str(exc)) from None
        return spec

    def build(self) -> np.ndarray:
        if self.form == "diagonal":
            rho = np.diag(np.asarray(self.values, dtype=float)).astype(complex)
        elif self.form == "matrix":
            rho = _to_array(self.values)
        else:
            rho = pure_state(_to_array(self.values))
        return as_density_matrix(rho)

    def to_dict(self) -> dict:
        return {self.form: copy.deepcopy(self.values)}


@dataclass
class ControlSpec:
    pair: Optional[list[int]] = None  # 1-based
    matrix: Optional[list] = None

    def build(self, n: int) -> ControlHamiltonian:
        if self.pair is not None:
            return ControlHamiltonian.from_pair(n, self.pair[0] - 1, self.pair[1] - 1)
        return ControlHamiltonian.from_matrix(_to_array(self.matrix))

    def to_dict(self) -> dict:
        return {"pair": list(self.pair)} if self.pair is not None else {"matrix": copy.deepcopy(self.matrix)}


@dataclass
class SystemSpec:
    energies: list[float]
    controls: list[ControlSpec]
    gains: list[float]

    @property
    def n(self) -> int:
        return len(self.energies)

    @classmethod
    def parse(cls, d, where: str = "system") -> "SystemSpec":
        _check_keys(d, ("n", "energies", "controls", "gains"), where)
        energies = _numbers(_require(d, "energies", where), f"{where}.energies")
        n = len(energies)
        if n < 2:
            raise ConfigError(f"{where}.energies", "need at least two levels")
        if "n" in d and d["n"] != n:
            raise ConfigError(f"{where}.n", f"n = {d['n']!r} but {n} energies were given")
        raw = _require(d, "controls", where)
        if not isinstance(raw, list) or not raw:
            raise ConfigError(f"{where}.controls", "expected a non-empty list")
        controls = []
        for i, c in enumerate(raw):
            w = f"{where}.controls[{i}]"
            if isinstance(c, list):  # shorthand: [j, k]
                c = {"pair": c}
            if not isinstance(c, dict) or len(c) != 1 or next(iter(c)) not in ("pair", "matrix"):
                raise ConfigError(w, "control needs exactly one of 'pair' or 'matrix'")
            if "pair" in c:
                p = c["pair"]
                if (
                    not isinstance(p, list)
                    or len(p) != 2
                    or not all(isinstance(x, int) and not isinstance(x, bool) for x in p)
                ):
                    raise ConfigError(w + ".pair", "expected two integer level indices")
                j, k = sorted(p)
                if not (1 <= j < k <= n):
                    raise ConfigError(w + ".pair", f"levels must be distinct and within 1..{n}")
                spec = ControlSpec(pair=[j, k])
            else:
                spec = ControlSpec(matrix=_complex_matrix(c["matrix"], w + ".matrix", n))
            try:
                spec.build(n)
            except ValidationError as exc:
                raise ConfigError(w, str(exc)) from None
            controls.append(spec)
        g = _require(d, "gains", where)
        gains = [_number(g, f"{where}.gains")] * len(controls) if not isinstance(g, list) else _numbers(g, f"{where}.gains")
        if len(gains) != len(controls):
            raise ConfigError(f"{where}.gains", f"{len(gains)} gains for {len(controls)} controls")
        for i, x in enumerate(gains):
            if not x > 0:
                raise ConfigError(f"{where}.gains[{i}]", "gains must be strictly positive")
        return cls(energies, controls, gains)

    def build(self) -> QuantumSystem:
        return QuantumSystem(np.asarray(self.energies), tuple(c.build(self.n) for c in self.controls), np.asarray(self.gains))

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "energies": list(self.energies),
            "controls": [c.to_dict() for c in self.controls],
            "gains": list(self.gains),
        }


@dataclass
class ObservableSpec:
    mode: str = "negative_target"
    lam: Optional[float] = None
    c0: Optional[float] = None
    p_l: Optional[float] = None
    p_h: Any = None  # float or list of n - 1 floats

    @classmethod
    def parse(cls, d, n: int, where: str = "observable") -> "ObservableSpec":
        _check_keys(d, ("mode", "lambda", "c0", "p_l", "p_h"), where)
        mode = d.get("mode", "negative_target")
        if mode not in OBSERVABLE_MODES:
            raise ConfigError(f"{where}.mode", f"expected one of {list(OBSERVABLE_MODES)}, got {mode!r}")
        if mode == "negative_target":
            return cls(mode)
        if mode == "coherent":
            lam = _number(d.get("lambda", -1.0), f"{where}.lambda")
            if not lam < 0:
                raise ConfigError(f"{where}.lambda", "must be negative")
            return cls(mode, lam=lam, c0=_number(d.get("c0", -1.0 / n), f"{where}.c0"))
        p_l = _number(d.get("p_l", 0.0), f"{where}.p_l")
        raw = d.get("p_h", 1.0)
        p_h = _numbers(raw, f"{where}.p_h") if isinstance(raw, list) else _number(raw, f"{where}.p_h")
        if isinstance(p_h, list) and len(p_h) != n - 1:
            raise ConfigError(f"{where}.p_h", f"expected {n - 1} values")
        if not np.all(p_l < np.asarray(p_h)):
            raise ConfigError(where, "p_l must be smaller than every p_h")
        return cls(mode, p_l=p_l, p_h=p_h)

    def build(self, rhof: np.ndarray) -> Observable:
        if self.mode == "negative_target":
            return construct_P_negative_target(rhof)
        if self.mode == "coherent":
            return construct_P_coherent(rhof, self.lam, self.c0)
        w, V = np.linalg.eigh(rhof)
        if abs(w[-1] - 1.0) > 1e-9:
            raise ValidationError("observable mode 'pure' needs a pure target state")
        psi = V[:, -1]
        psi = psi / np.linalg.norm(psi)
        return construct_P_pure(psi, self.p_l, self.p_h)

    def to_dict(self) -> dict:
        if self.mode == "negative_target":
            return {"mode": self.mode}
        if self.mode == "coherent":
            return {"mode": self.mode, "lambda": self.lam, "c0": self.c0}
        return {"mode": self.mode, "p_l": self.p_l, "p_h": copy.deepcopy(self.p_h)}


@dataclass
class KickSpec:
    mode: str = "constant_pulse"
    amplitude: float = 0.01
    duration: float = 1.0


@dataclass
class SimulationSpec:
    dt: float = 0.01
    t_final: float = 150.0
    record_stride: int = 1
    kick: KickSpec = field(default_factory=KickSpec)

    @classmethod
    def parse(cls, d, where: str = "simulation") -> "SimulationSpec":
        _check_keys(d, ("dt", "t_final", "record_stride", "kick"), where)
        dt = _number(d.get("dt", 0.01), f"{where}.dt")
        t_final = _number(d.get("t_final", 150.0), f"{where}.t_final")
        stride = d.get("record_stride", 1)
        if isinstance(stride, bool) or not isinstance(stride, int) or stride < 1:
            raise ConfigError(f"{where}.record_stride", "must be a positive integer")
        k = d.get("kick", {})
        _check_keys(k, ("mode", "amplitude", "duration"), f"{where}.kick")
        mode = k.get("mode", "constant_pulse")
        if mode not in KICK_MODES:
            raise ConfigError(f"{where}.kick.mode", f"expected one of {list(KICK_MODES)}, got {mode!r}")
        kick = KickSpec(
            mode,
            _number(k.get("amplitude", 0.01), f"{where}.kick.amplitude"),
            _number(k.get("duration", 1.0), f"{where}.kick.duration"),
        )
        spec = cls(dt, t_final, stride, kick)
        try:
            spec.build()
        except ValidationError as exc:
            raise ConfigError(where, str(exc)) from None
        return spec

    def build(self) -> SimulationConfig:
        return SimulationConfig(
            dt=self.dt,
            t_final=self.t_final,
            kick=KickPolicy(self.kick.mode, self.kick.amplitude, self.kick.duration),
            record_stride=self.record_stride,
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AnalysisSpec:
    t: float = 0.0
    sample_times: list[float] = field(default_factory=lambda: [0.0, 0.1, 0.5, 1.0])

    @classmethod
    def parse(cls, d, where: str = "analysis") -> "AnalysisSpec":
        _check_keys(d, ("t", "sample_times"), where)
        return cls(
            _number(d.get("t", 0.0), f"{where}.t"),
            _numbers(d.get("sample_times", [0.0, 0.1, 0.5, 1.0]), f"{where}.sample_times"),
        )


@dataclass
class ChecksSpec:
    regularity_tol: float = REGULARITY_TOL
    equivalence_tol: float = EQUIVALENCE_TOL

    @classmethod
    def parse(cls, d, where: str = "checks") -> "ChecksSpec":
        _check_keys(d, ("regularity_tol", "equivalence_tol"), where)
        out = cls(
            _number(d.get("regularity_tol", REGULARITY_TOL), f"{where}.regularity_tol"),
            _number(d.get("equivalence_tol", EQUIVALENCE_TOL), f"{where}.equivalence_tol"),
        )
        if not (out.regularity_tol > 0 and out.equivalence_tol > 0):
            raise ConfigError(where, "tolerances must be positive")
        return out


@dataclass
class OutputSpec:
    path: Optional[str] = None
    format: str = "csv"
    threshold: float = 0.02

    @classmethod
    def parse(cls, d, where: str = "output") -> "OutputSpec":
        _check_keys(d, ("path", "format", "threshold"), where)
        path = d.get("path")
        if path is not None and not isinstance(path, str):
            raise ConfigError(f"{where}.path", "expected a string")
        fmt = d.get("format", "csv")
        if fmt != "csv":
            raise ConfigError(f"{where}.format", "only 'csv' is supported")
        thr = _number(d.get("threshold", 0.02), f"{where}.threshold")
        if not thr > 0:
            raise ConfigError(f"{where}.threshold", "must be positive")
        return cls(path, fmt, thr)


@dataclass
class RunConfig:
    system: SystemSpec
    initial_state: StateSpec
    target_state: StateSpec
    observable: ObservableSpec = field(default_factory=ObservableSpec)
    simulation: SimulationSpec = field(default_factory=SimulationSpec)
    analysis: AnalysisSpec = field(default_factory=AnalysisSpec)
    checks: ChecksSpec = field(default_factory=ChecksSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    name: Optional[str] = None

    SECTIONS = ("name", "system", "initial_state", "target_state", "observable", "simulation", "analysis", "checks", "output")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        _check_keys(d, cls.SECTIONS, "config")
        system = SystemSpec.parse(_require(d, "system", ""))
        n = system.n
        rho0 = StateSpec.parse(_require(d, "initial_state", ""), "initial_state", n)
        rhof = StateSpec.parse(_require(d, "target_state", ""), "target_state", n)
        obs = ObservableSpec.parse(d.get("observable", {}), n)
        name = d.get("name")
        if name is not None and not isinstance(name, str):
            raise ConfigError("name", "expected a string")
        cfg = cls(
            system=system,
            initial_state=rho0,
            target_state=rhof,
            observable=obs,
            simulation=SimulationSpec.parse(d.get("simulation", {})),
            analysis=AnalysisSpec.parse(d.get("analysis", {})),
            checks=ChecksSpec.parse(d.get("checks", {})),
            output=OutputSpec.parse(d.get("output", {})),
            name=name,
        )
        try:
            cfg.build_observable()
        except ValidationError as exc:
            raise ConfigError("observable", str(exc)) from None
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}, column {exc.colno}", exc.msg) from None
        return cls.from_dict(d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def to_dict(self) -> dict:
        d = {
            "system": self.system.to_dict(),
            "initial_state": self.initial_state.to_dict(),
            "target_state": self.target_state.to_dict(),
            "observable": self.observable.to_dict(),
            "simulation": self.simulation.to_dict(),
            "analysis": asdict(self.analysis),
            "checks": asdict(self.checks),
            "output": asdict(self.output),
        }
        if self.name is not None:
            d = {"name": self.name, **d}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def build_system(self) -> QuantumSystem:
        return self.system.build()

    def build_states(self) -> tuple[np.ndarray, np.ndarray]:
        return self.initial_state.build(), self.target_state.build()

    def build_observable(self) -> Observable:
        return self.observable.build(self.target_state.build())


ENERGIES_4 = [0.4948, 1.4529, 2.3691, 3.2434]
RHO0_4 = [0.3850, 0.2758, 0.1976, 0.1416]
LADDER = [[1, 2], [2, 3], [3, 4]]
EXTRA = [[1, 3], [2, 4], [1, 4]]


def _preset_dict(pairs, energies, rho0, gains, t_final=150.0, name=None) -> dict:
    return {
        "name": name,
        "system": {"energies": energies, "controls": [{"pair": p} for p in pairs], "gains": gains},
        "initial_state": {"diagonal": rho0},
        "target_state": {"diagonal": rho0[::-1]},
        "observable": {"mode": "negative_target"},
        "simulation": {
            "dt": 0.01,
            "t_final": t_final,
            "record_stride": 1,
            "kick": {"mode": "constant_pulse", "amplitude": 0.01, "duration": 1.0},
        },
    }


PRESETS = {
    "four_level_ladder": lambda: _preset_dict(LADDER, ENERGIES_4, RHO0_4, [20.0] * 3, name="four_level_ladder"),
    "four_level_full": lambda: _preset_dict(LADDER + EXTRA, ENERGIES_4, RHO0_4, [20.0] * 6, name="four_level_full"),
    "two_level": lambda: _preset_dict([[1, 2]], ENERGIES_4[:2], [0.7, 0.3], [1.0], t_final=50.0, name="two_level"),
}

REPLICATION_PRESETS = ("four_level_ladder", "four_level_full")


def preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return RunConfig.from_dict(PRESETS[name]())
