"""Run configuration: a YAML tree with explicit units in every key.

Sections: ``alice``/``bob`` (sources), ``link``, ``detection``, ``noise``,
``plan``, ``isolation``, ``sweep``, ``decoy``, ``session`` and ``run``. Values
in the file carry the unit named by the key suffix (``_db``, ``_ps``,
``_uw``, ``_cps``, ``_hz``, ``_rad``, ``_s``); in memory everything is SI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .coexistence import Channel, ChannelPlan, IsolationBudget, NoiseModel, default_plan
from .forward import ScenarioConfig
from .model import Basis, DetectionConfig, Intensity, LinkConfig, QubitSpec, SourceConfig, ideal_specs

STATES = {"e": (Basis.Z, 0), "l": (Basis.Z, 1), "plus": (Basis.X, 0), "minus": (Basis.X, 1)}
LEVELS = {"signal": Intensity.SIGNAL, "decoy": Intensity.DECOY, "vacuum": Intensity.VACUUM}
# file value -> SI is division by these exact integers
PER_UW = 1_000_000.0
PER_PS = 1_000_000_000_000.0


def _si(value: float, per: float) -> float:
    return value / per


def _unit(value: float, per: float) -> float:
    """Shortest decimal that maps back to ``value`` exactly under :func:`_si`."""
    guess = value * per
    for digits in range(1, 18):
        cand = float(f"{guess:.{digits}g}")
        if _si(cand, per) == value:
            return cand
    return guess


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, path: str = "", line: int | None = None):
        where = f"line {line}: " if line else ""
        key = f"{path}: " if path else ""
        super().__init__(f"{where}{key}{message}")
        self.path = path
        self.line = line


@dataclass(frozen=True)
class SweepConfig:
    axis: str = "loss"
    points: tuple[float, ...] = ()
    asymmetry_db: float = 0.0

    def __post_init__(self):
        if self.axis not in ("loss", "power"):
            raise ValueError("sweep axis must be 'loss' or 'power'")
        pts = tuple(float(p) for p in self.points)
        object.__setattr__(self, "points", pts)
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("sweep points must be strictly increasing")


@dataclass(frozen=True)
class SessionConfig:
    latency: float = 1e-4  # s
    reveal_x: float = 1.0
    reveal_z: float = 0.1
    block: int = 1 << 16

    def __post_init__(self):
        if self.latency < 0:
            raise ValueError("latency must be >= 0")
        for name in ("reveal_x", "reveal_z"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.block < 1:
            raise ValueError("block must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig
    noise: NoiseModel = field(default_factory=NoiseModel)
    plan: ChannelPlan = field(default_factory=default_plan)
    isolation: IsolationBudget = field(default_factory=IsolationBudget)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    session: SessionConfig = field(default_factory=SessionConfig)
    f_ec: float = 1.12
    seed: int = 0
    rounds: int = 1_000_000
    output: str | None = None

    @property
    def launch_power(self) -> float:
        return self.plan.data_launch_power()


# ---------------------------------------------------------------- parsing


def _lines(text: str) -> dict[tuple, int]:
    """Key path -> 1-based line of its value, from the YAML node tree."""
    out: dict[tuple, int] = {}
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return out

    # mapping entries are located at their key, so a section points at its header
    def walk(node, path, line):
        out[path] = line
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                walk(v, path + (k.value,), k.start_mark.line + 1)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, path + (i,), v.start_mark.line + 1)

    if root is not None:
        walk(root, (), root.start_mark.line + 1)
    return out


class _Reader:
    def __init__(self, data, lines):
        self.data = data
        self.lines = lines
        self.used: set[tuple] = set()

    def err(self, path, msg):
        line = self.lines.get(path)
        while line is None and path:
            path = path[:-1]
            line = self.lines.get(path)
        return ConfigError(msg, ".".join(str(p) for p in path), line)

    def get(self, path, default=None, kind=float, required=False):
        node = self.data
        for p in path:
            if isinstance(node, dict) and p in node:
                node = node[p]
            elif isinstance(node, list) and isinstance(p, int) and p < len(node):
                node = node[p]
            else:
                if required:
                    raise self.err(path, "missing required key")
                return default
        self.used.add(path)
        if kind is None:
            return node
        try:
            if kind is float:
                if isinstance(node, bool):
                    raise TypeError
                val = float(node)
                if not math.isfinite(val):
                    raise ValueError
                return val
            if kind is int:
                if isinstance(node, bool):
                    raise TypeError
                f = float(node)
                if f != int(f):
                    raise ValueError
                return int(f)
            return kind(node)
        except (TypeError, ValueError):
            raise self.err(path, f"expected {kind.__name__}, got {node!r}") from None


def _wrap(r: _Reader, path, exc: ValueError) -> ConfigError:
    return exc if isinstance(exc, ConfigError) else r.err(path, str(exc))


def _unknown_keys(r: _Reader) -> None:
    """Reject keys nothing read, so a misspelled unit suffix is not ignored."""

    def walk(node, path):
        if any(u[: len(path)] == path or path[: len(u)] == u for u in r.used):
            if path in r.used or not isinstance(node, (dict, list)):
                return
            items = node.items() if isinstance(node, dict) else enumerate(node)
            for k, v in items:
                walk(v, path + (k,))
            return
        raise r.err(path, "unknown key")

    for k, v in r.data.items():
        walk(v, (k,))


def _source(r: _Reader, who: str) -> SourceConfig:
    mu = tuple(r.get((who, "mu", lvl), required=True) for lvl in LEVELS)
    p_int = tuple(r.get((who, "p_intensity", lvl), 1 / 3) for lvl in LEVELS)
    p_basis = r.get((who, "p_basis_z",), 0.5)
    specs = dict(ideal_specs())
    for lvl, inten in LEVELS.items():
        for st, (basis, bit) in STATES.items():
            m = r.get((who, "qubits", lvl, st, "m"))
            if m is None:
                continue
            phi = r.get((who, "qubits", lvl, st, "phi_rad"), 0.0)
            try:
                specs[(basis, bit, inten)] = QubitSpec(m, phi)
            except ValueError as exc:
                raise _wrap(r, (who, "qubits", lvl, st), exc) from None
    try:
        return SourceConfig(mu=mu, specs=specs, p_basis=p_basis, p_intensity=p_int)
    except ValueError as exc:
        raise _wrap(r, (who,), exc) from None


def _build(r: _Reader) -> RunConfig:
    alice = _source(r, "alice")
    bob = _source(r, "bob")
    try:
        link = LinkConfig(r.get(("link", "loss_db_alice"), required=True), r.get(("link", "loss_db_bob"), required=True))
    except ValueError as exc:
        raise _wrap(r, ("link",), exc) from None
    try:
        det = DetectionConfig(
            det_efficiency=r.get(("detection", "det_efficiency"), 1.0),
            dark_rate=r.get(("detection", "dark_cps"), 0.0),
            noise_rate=r.get(("detection", "noise_cps"), 0.0),
            window=_si(r.get(("detection", "window_ps"), 400.0), PER_PS),
            visibility=r.get(("detection", "visibility"), 1.0),
            qubit_rate=r.get(("detection", "qubit_rate_hz"), 100e6),
        )
    except ValueError as exc:
        raise _wrap(r, ("detection",), exc) from None
    try:
        noise = NoiseModel(
            r.get(("noise", "base_dark_cps"), 0.0),
            r.get(("noise", "raman_slope_cps_per_uw"), 0.0) * PER_UW,
        )
    except ValueError as exc:
        raise _wrap(r, ("noise",), exc) from None

    chans = r.get(("plan", "channels"), None, kind=None)
    if chans is None:
        plan = default_plan(_si(r.get(("plan", "data_launch_uw"), 4.68), PER_UW))
    else:
        if not isinstance(chans, list):
            raise r.err(("plan", "channels"), "expected a list of channels")
        built = []
        for i, _ in enumerate(chans):
            p = ("plan", "channels", i)
            try:
                built.append(
                    Channel(
                        r.get(p + ("name",), kind=str, required=True),
                        r.get(p + ("wavelength_nm",), required=True),
                        _si(r.get(p + ("launch_uw",), 0.0), PER_UW),
                        r.get(p + ("direction",), "co", kind=str),
                        r.get(p + ("role",), kind=str, required=True),
                    )
                )
            except ValueError as exc:
                raise _wrap(r, p, exc) from None
        try:
            plan = ChannelPlan(tuple(built))
        except ValueError as exc:
            raise _wrap(r, ("plan",), exc) from None
    try:
        iso = IsolationBudget(
            r.get(("isolation", "wdm_isolation_db"), 50.0),
            r.get(("isolation", "filter_isolation_db"), 45.0),
            r.get(("isolation", "filter_bandwidth_nm"), 2.0),
        )
    except ValueError as exc:
        raise _wrap(r, ("isolation",), exc) from None
    axis = r.get(("sweep", "axis"), "loss", kind=str)
    key = "points_db" if axis == "loss" else "points_uw"
    raw_pts = r.get(("sweep", key), [], kind=None) or []
    if not isinstance(raw_pts, list):
        raise r.err(("sweep", key), "expected a list")
    pts = [r.get(("sweep", key, i)) for i in range(len(raw_pts))]
    if axis == "power":
        pts = [_si(p, PER_UW) for p in pts]
    try:
        sweep = SweepConfig(axis, tuple(pts), r.get(("sweep", "asymmetry_db"), 0.0))
    except ValueError as exc:
        raise _wrap(r, ("sweep",), exc) from None
    try:
        session = SessionConfig(
            r.get(("session", "latency_s"), 1e-4),
            r.get(("session", "reveal_x"), 1.0),
            r.get(("session", "reveal_z"), 0.1),
            r.get(("session", "block_rounds"), 1 << 16, kind=int),
        )
    except ValueError as exc:
        raise _wrap(r, ("session",), exc) from None
    f_ec = r.get(("decoy", "f_ec"), 1.12)
    if f_ec < 1:
        raise r.err(("decoy", "f_ec"), "must be >= 1")
    seed = r.get(("run", "seed"), 0, kind=int)
    rounds = r.get(("run", "rounds"), 1_000_000, kind=int)
    if rounds < 1:
        raise r.err(("run", "rounds"), "must be >= 1")
    output = r.get(("run", "output"), None, kind=str)
    _unknown_keys(r)
    scenario = ScenarioConfig(alice, bob, link, det)
    return RunConfig(scenario, noise, plan, iso, sweep, session, f_ec, seed, rounds, output)


def loads(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", line=mark.line + 1 if mark else None) from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", line=1)
    known = {"alice", "bob", "link", "detection", "noise", "plan", "isolation", "sweep", "decoy", "session", "run"}
    lines = _lines(text)
    for k in data:
        if k not in known:
            raise ConfigError("unknown section", str(k), lines.get((k,)))
    return _build(_Reader(data, lines))


def load(path) -> RunConfig:
    return loads(Path(path).read_text())


# ------------------------------------------------------------ serialising


def _slope_unit(slope: float) -> float:
    guess = slope / PER_UW
    for digits in range(1, 18):
        cand = float(f"{guess:.{digits}g}")
        if cand * PER_UW == slope:
            return cand
    return guess


def _source_dict(src: SourceConfig) -> dict:
    return {
        "mu": {lvl: src.mu[i] for lvl, i in LEVELS.items()},
        "p_basis_z": src.p_basis,
        "p_intensity": {lvl: src.p_intensity[i] for lvl, i in LEVELS.items()},
        "qubits": {
            lvl: {st: {"m": src.spec(b, bit, i).m, "phi_rad": src.spec(b, bit, i).phi} for st, (b, bit) in STATES.items()}
            for lvl, i in LEVELS.items()
        },
    }


def to_dict(cfg: RunConfig) -> dict:
    sc = cfg.scenario
    det = sc.detection
    sweep = {"axis": cfg.sweep.axis, "asymmetry_db": cfg.sweep.asymmetry_db}
    if cfg.sweep.axis == "loss":
        sweep["points_db"] = list(cfg.sweep.points)
    else:
        sweep["points_uw"] = [_unit(p, PER_UW) for p in cfg.sweep.points]
    out = {
        "alice": _source_dict(sc.alice),
        "bob": _source_dict(sc.bob),
        "link": {"loss_db_alice": sc.link.loss_db_alice, "loss_db_bob": sc.link.loss_db_bob},
        "detection": {
            "det_efficiency": det.det_efficiency,
            "dark_cps": det.dark_rate,
            "noise_cps": det.noise_rate,
            "window_ps": _unit(det.window, PER_PS),
            "visibility": det.visibility,
            "qubit_rate_hz": det.qubit_rate,
        },
        "noise": {"base_dark_cps": cfg.noise.base_dark_rate, "raman_slope_cps_per_uw": _slope_unit(cfg.noise.raman_slope)},
        "plan": {
            "channels": [
                {
                    "name": c.name,
                    "wavelength_nm": c.wavelength_nm,
                    "launch_uw": _unit(c.launch_power, PER_UW),
                    "direction": c.direction.value,
                    "role": c.role.value,
                }
                for c in cfg.plan.channels
            ]
        },
        "isolation": {
            "wdm_isolation_db": cfg.isolation.wdm_isolation,
            "filter_isolation_db": cfg.isolation.filter_isolation,
            "filter_bandwidth_nm": cfg.isolation.filter_bandwidth,
        },
        "sweep": sweep,
        "decoy": {"f_ec": cfg.f_ec},
        "session": {
            "latency_s": cfg.session.latency,
            "reveal_x": cfg.session.reveal_x,
            "reveal_z": cfg.session.reveal_z,
            "block_rounds": cfg.session.block,
        },
        "run": {"seed": cfg.seed, "rounds": cfg.rounds},
    }
    if cfg.output is not None:
        out["run"]["output"] = cfg.output
    return out


def dumps(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def bundled(name: str) -> RunConfig:
    """Load a packaged scenario, ``"lab"`` or ``"deployed"``."""
    text = resources.files("mdiqkd").joinpath("data", f"{name}.yaml").read_text()
    return loads(text)
