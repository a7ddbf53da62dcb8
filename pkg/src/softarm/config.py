"""YAML scenario files.

Each YAML document describes one scenario (or, with a ``sweep`` block, a
cartesian family of them). Every key is checked before anything runs, and
errors name the file, line and dotted field::

    grid.yaml:14: gains.kp: must be >= 0, got -3

Layout of a document (all blocks optional)::

    name: ap-free-w1
    geometry:   {L0, r, r_e, n_ppr}
    params:     {m, K_diag, D_diag, alpha_h, beta_h, gamma_h, kappa_h, I_xx,
                 g_vec, n_nodes, fd_step, fd_step_inertia}   # controller model
    plant:      {stiffness_scale, damping_scale, <any params key>}
    gains:      {controller, kp, kd, lambda_ap, kg, gamma_K, gamma_D, tau_max,
                 theta_init, gamma_convention, projection}
    trajectory: {radius, omega, z_plane, duration, stats_window}
    payload: 0.2
    disturbance: {amplitude, bandwidth, seed}
    sensor: ideal | quantized
    dt_plant: 0.001
    dt_control: 0.001
    initial: rest | trajectory
    sweep:      {<field>: [values, ...], ...}
    chirp:      {f0, f1, amplitude, duration, actuator, dt}
    identify:   {perturbation, initial_guess, bounds, starts, seed, method, max_nfev}
"""

from __future__ import annotations

import itertools
import math
import os
import re
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np
import yaml

from .controllers import GAMMA_CONVENTIONS, THETA_INIT_MODES, ApGains, PdflGains
from .dynamics import DynamicParameters, QuadratureSettings
from .identification import DEFAULT_BOUNDS, METHODS, PARAM_NAMES, ChirpSpec
from .kinematics import RobotGeometry
from .simulation import CONTROLLERS, INITIAL_MODES, SENSOR_MODES, DisturbanceSpec, Scenario
from .trajectories import CircleSpec

BUNDLED = {
    "paper-grid": "paper_grid.yaml",
    "default": "default.yaml",
    "identify": "identify.yaml",
}


class ConfigError(ValueError):
    def __init__(self, message, source="<config>", line=None, field=None):
        self.source = source
        self.line = line
        self.field = field
        self.detail = message
        where = source if line is None else f"{source}:{line}"
        super().__init__(f"{where}: {field}: {message}" if field else f"{where}: {message}")


class _Map(dict):
    """Mapping that remembers the source line of each key."""

    def __init__(self):
        super().__init__()
        self.lines = {}
        self.line = None


class _Loader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node, deep=False):
    loader.flatten_mapping(node)
    out = _Map()
    out.line = node.start_mark.line + 1
    for knode, vnode in node.value:
        key = loader.construct_object(knode, deep=True)
        if not isinstance(key, str):
            raise ConfigError(f"keys must be strings, got {key!r}", line=knode.start_mark.line + 1)
        if key in out:
            raise ConfigError("duplicate key", line=knode.start_mark.line + 1, field=key)
        out[key] = loader.construct_object(vnode, deep=True)
        out.lines[key] = knode.start_mark.line + 1
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)
# YAML 1.1 reads "1e-5" as a string; accept exponent floats without a dot
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"""),
    list("-+0123456789"),
)


# -- field access ---------------------------------------------------------------


class _Ctx:
    """Reads and validates one block, tracking which keys were consumed."""

    def __init__(self, mapping, source, prefix=""):
        if mapping is None:
            mapping = _Map()
        self.m = mapping
        self.source = source
        self.prefix = prefix
        self.used = set()

    def error(self, key, message):
        line = self.m.lines.get(key, self.m.line) if isinstance(self.m, _Map) else None
        raise ConfigError(message, self.source, line, self.prefix + key if key else self.prefix.rstrip("."))

    def has(self, key):
        return key in self.m

    def raw(self, key, default=None):
        self.used.add(key)
        return self.m.get(key, default)

    def number(self, key, default=None, lo=None, hi=None, lo_open=False, integer=False, allow_none=False):
        if key not in self.m:
            return default
        v = self.raw(key)
        if v is None and allow_none:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.error(key, f"expected a number, got {v!r}")
        if not math.isfinite(v):
            self.error(key, f"must be finite, got {v!r}")
        if integer and int(v) != v:
            self.error(key, f"expected an integer, got {v!r}")
        if lo is not None and (v <= lo if lo_open else v < lo):
            self.error(key, f"must be {'>' if lo_open else '>='} {lo}, got {v!r}")
        if hi is not None and v > hi:
            self.error(key, f"must be <= {hi}, got {v!r}")
        return int(v) if integer else float(v)

    def choice(self, key, options, default=None):
        if key not in self.m:
            return default
        v = self.raw(key)
        if v not in options:
            self.error(key, f"must be one of {list(options)}, got {v!r}")
        return v

    def boolean(self, key, default=False):
        if key not in self.m:
            return default
        v = self.raw(key)
        if not isinstance(v, bool):
            self.error(key, f"expected true/false, got {v!r}")
        return v

    def vector(self, key, n, default=None, lo=None, lo_open=False):
        if key not in self.m:
            return default
        v = self.raw(key)
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            v = [v] * n
        if (not isinstance(v, list) or len(v) != n
                or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v)):
            self.error(key, f"expected a number or a list of {n} numbers, got {v!r}")
        arr = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(arr)):
            self.error(key, "entries must be finite")
        if lo is not None and np.any(arr <= lo if lo_open else arr < lo):
            self.error(key, f"entries must be {'>' if lo_open else '>='} {lo}, got {v!r}")
        return arr

    def block(self, key):
        if key not in self.m:
            return _Ctx(None, self.source, self.prefix + key + ".")
        v = self.raw(key)
        if v is None:
            v = _Map()
        if not isinstance(v, dict):
            self.error(key, f"expected a mapping, got {v!r}")
        return _Ctx(v, self.source, self.prefix + key + ".")

    def finish(self):
        for key in self.m:
            if key not in self.used:
                self.error(key, "unknown key")


# -- documents ------------------------------------------------------------------


def bundled_path(name: str):
    return resources.files("softarm") / "data" / BUNDLED[name]


def read_documents(source) -> list[tuple[dict, str]]:
    """Parse a path, a bundled pack name or literal YAML text into documents."""
    if isinstance(source, str) and source in BUNDLED:
        label = source
        text = bundled_path(source).read_text()
    elif isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        label = os.fspath(source)
        with open(source) as fh:
            text = fh.read()
    elif isinstance(source, str) and ("\n" in source or ":" in source):
        label, text = "<string>", source
    else:
        raise ConfigError("no such file or bundled pack", os.fspath(source))
    try:
        docs = list(yaml.load_all(text, Loader=_Loader))
    except ConfigError as exc:
        raise ConfigError(exc.detail, label, exc.line, exc.field) from None
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ConfigError(f"YAML syntax error: {exc.problem}", label,
                          None if mark is None else mark.line + 1) from None
    out = []
    for doc in docs:
        if doc is None:
            continue
        if not isinstance(doc, dict):
            raise ConfigError(f"each document must be a mapping, got {type(doc).__name__}", label)
        out.append((doc, label))
    if not out:
        raise ConfigError("empty configuration (no YAML documents)", label)
    return out


def _geometry(ctx: _Ctx) -> RobotGeometry:
    g = ctx.block("geometry")
    d = RobotGeometry()
    geo = RobotGeometry(
        L0=g.number("L0", d.L0, lo=0, lo_open=True),
        r=g.number("r", d.r, lo=0, lo_open=True),
        r_e=g.number("r_e", d.r_e, lo=0, lo_open=True),
        n_ppr=g.number("n_ppr", d.n_ppr, lo=1, integer=True),
    )
    g.finish()
    return geo


_PARAM_KEYS = ("m", "K_diag", "D_diag", "alpha_h", "beta_h", "gamma_h", "kappa_h", "I_xx", "g_vec")


def _params(p: _Ctx, base: DynamicParameters) -> DynamicParameters:
    kw = {}
    if p.has("m"):
        kw["m"] = p.number("m", lo=0, lo_open=True)
    if p.has("K_diag"):
        kw["K"] = np.diag(p.vector("K_diag", 3, lo=0))
    if p.has("D_diag"):
        kw["D"] = np.diag(p.vector("D_diag", 3, lo=0))
    for key in ("alpha_h", "beta_h", "gamma_h"):
        if p.has(key):
            kw[key] = p.number(key)
    if p.has("kappa_h"):
        kw["kappa_h"] = p.number("kappa_h", lo=0)
    if p.has("I_xx"):
        kw["I_xx"] = p.number("I_xx", lo=0)
    if p.has("g_vec"):
        kw["g_vec"] = p.vector("g_vec", 3)
    return replace(base, **kw) if kw else base


def _quad(p: _Ctx) -> QuadratureSettings:
    d = QuadratureSettings()
    return QuadratureSettings(
        n_nodes=p.number("n_nodes", d.n_nodes, lo=4, hi=256, integer=True),
        fd_step=p.number("fd_step", d.fd_step, lo=0, lo_open=True),
        fd_step_inertia=p.number("fd_step_inertia", d.fd_step_inertia, lo=0, lo_open=True),
    )


def _scenario(doc: dict, source: str, index: int) -> Scenario:
    ctx = _Ctx(doc, source)
    name = ctx.raw("name", f"scenario{index + 1}")
    if not isinstance(name, str) or not name or any(c in name for c in "/\\\0"):
        ctx.error("name", f"must be a non-empty string without path separators, got {name!r}")
    geometry = _geometry(ctx)

    p = ctx.block("params")
    nominal = _params(p, DynamicParameters())
    quad = _quad(p)
    p.finish()

    pl = ctx.block("plant")
    k_scale = pl.number("stiffness_scale", 1.0, lo=0, lo_open=True)
    d_scale = pl.number("damping_scale", 1.0, lo=0, lo_open=True)
    plant = _params(pl, nominal).scaled(k_scale, d_scale)
    pl.finish()

    g = ctx.block("gains")
    controller = g.choice("controller", CONTROLLERS, None)
    top = ctx.choice("controller", CONTROLLERS, None)
    if controller and top and controller != top:
        g.error("controller", f"conflicts with top-level controller {top!r}")
    controller = controller or top or "ap"
    pd = PdflGains(kp=g.number("kp", 900.0, lo=0), kd=g.number("kd", 60.0, lo=0))
    ap = ApGains(
        lambda_ap=g.number("lambda_ap", 8.0, lo=0),
        kg=g.number("kg", 8.0, lo=0),
        gamma_K=g.number("gamma_K", 1e-5, lo=0, lo_open=True),
        gamma_D=g.number("gamma_D", 1e-2, lo=0, lo_open=True),
        gamma_convention=g.choice("gamma_convention", GAMMA_CONVENTIONS, "inverse"),
    )
    tau_max = g.number("tau_max", 200.0, lo=0, lo_open=True)
    theta_init = "nominal"
    if g.has("theta_init"):
        v = g.m["theta_init"]
        if isinstance(v, str):
            theta_init = g.choice("theta_init", THETA_INIT_MODES)
        else:
            theta_init = g.vector("theta_init", 6)
    projection = g.boolean("projection", False)
    g.finish()

    tr = ctx.block("trajectory")
    d = CircleSpec()
    window = "final_period"
    if tr.has("stats_window"):
        v = tr.m["stats_window"]
        if isinstance(v, str):
            window = tr.choice("stats_window", ("final_period", "full"))
        else:
            window = tr.number("stats_window", lo=0, lo_open=True)
    dt_control = ctx.number("dt_control", 1e-3, lo=0, lo_open=True, hi=0.1)
    traj = CircleSpec(
        radius=tr.number("radius", d.radius, lo=0, lo_open=True),
        omega=tr.number("omega", d.omega),
        z_plane=tr.number("z_plane", d.z_plane, lo=0, lo_open=True),
        duration=tr.number("duration", d.duration, lo=0, lo_open=True),
        dt=dt_control,
    )
    if traj.duration < dt_control:
        tr.error("duration", "must be at least one control period")
    tr.finish()

    di = ctx.block("disturbance")
    dist = DisturbanceSpec(
        amplitude=di.number("amplitude", None, lo=0, allow_none=True),
        bandwidth=di.number("bandwidth", 2.0, lo=0, lo_open=True),
        seed=di.number("seed", 0, lo=0, integer=True),
    )
    di.finish()

    dt_plant = ctx.number("dt_plant", dt_control, lo=0, lo_open=True, hi=0.1)
    ratio = dt_control / dt_plant
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        ctx.error("dt_plant", f"dt_control={dt_control} must be an integer multiple of dt_plant={dt_plant}")

    sc = Scenario(
        name=name,
        geometry=geometry,
        plant=plant,
        nominal=nominal,
        quad=quad,
        controller=controller,
        pdfl=pd,
        ap=ap,
        tau_max=tau_max,
        theta_init=theta_init,
        projection=projection,
        trajectory=traj,
        stats_window=window,
        payload=ctx.number("payload", 0.0, lo=0),
        disturbance=dist,
        sensor=ctx.choice("sensor", SENSOR_MODES, "ideal"),
        dt_plant=dt_plant,
        dt_control=dt_control,
        initial=ctx.choice("initial", INITIAL_MODES, "rest"),
    )
    for key in ("sweep", "chirp", "identify"):
        ctx.used.add(key)
    ctx.finish()
    return sc


#: sweepable fields and the block they live in (None = top level)
SWEEP_FIELDS = {
    "controller": "gains", "kp": "gains", "kd": "gains", "lambda_ap": "gains", "kg": "gains",
    "gamma_K": "gains", "gamma_D": "gains", "omega": "trajectory", "radius": "trajectory",
    "payload": None, "seed": "disturbance", "stiffness_scale": "plant", "damping_scale": "plant",
    "sensor": None,
}


def expand_sweep(doc: dict, source: str) -> list[dict]:
    """Cartesian product over the ``sweep`` block; names get ``-field=value`` suffixes."""
    if "sweep" not in doc:
        return [doc]
    ctx = _Ctx(doc, source)
    sw = ctx.block("sweep")
    axes = []
    for key in sw.m:
        if key not in SWEEP_FIELDS:
            sw.error(key, f"not sweepable; choose from {sorted(SWEEP_FIELDS)}")
        values = sw.raw(key)
        if not isinstance(values, list) or not values:
            sw.error(key, "expected a non-empty list of values")
        axes.append((key, values))
    base_name = doc.get("name", "sweep")
    out = []
    for combo in itertools.product(*(v for _, v in axes)):
        new = _Map()
        new.line = getattr(doc, "line", None)
        for k, v in doc.items():
            if k == "sweep":
                continue
            new[k] = _copy_map(v)
            new.lines[k] = getattr(doc, "lines", {}).get(k)
        suffix = []
        for (key, _), value in zip(axes, combo):
            blk = SWEEP_FIELDS[key]
            line = sw.m.lines.get(key)
            if key == "controller" and "controller" in new and blk not in new:
                new["controller"] = value
            elif blk is None:
                new[key] = value
                new.lines[key] = line
            else:
                sub = new.get(blk)
                if sub is None:
                    sub = _Map()
                    sub.line = line
                    new[blk] = sub
                    new.lines[blk] = line
                if key == "controller":
                    new.pop("controller", None)
                sub[key] = value
                sub.lines[key] = line
            suffix.append(f"{key}={value}")
        new["name"] = base_name + "-" + "-".join(suffix)
        out.append(new)
    return out


def _copy_map(v):
    if isinstance(v, _Map):
        m = _Map()
        m.line = v.line
        for k, x in v.items():
            m[k] = _copy_map(x)
        m.lines = dict(v.lines)
        return m
    if isinstance(v, list):
        return [_copy_map(x) for x in v]
    return v


def load_scenarios(sources, sweep: bool = True) -> list[Scenario]:
    """Parse and validate every document of every source before returning."""
    if isinstance(sources, (str, os.PathLike)):
        sources = [sources]
    scenarios = []
    for source in sources:
        for doc, label in read_documents(source):
            if "sweep" in doc and not sweep:
                raise ConfigError("sweep blocks are only allowed with the sweep command", label,
                                  doc.lines.get("sweep"), "sweep")
            for expanded in expand_sweep(doc, label):
                scenarios.append(_scenario(expanded, label, len(scenarios)))
    names = [s.name for s in scenarios]
    dup = sorted({n for n in names if names.count(n) > 1})
    if dup:
        raise ConfigError(f"duplicate scenario names {dup}; output files would collide")
    return scenarios


# -- identification -------------------------------------------------------------


@dataclass
class IdentifyConfig:
    chirp: ChirpSpec = field(default_factory=ChirpSpec)
    geometry: RobotGeometry = field(default_factory=RobotGeometry)
    truth: DynamicParameters = field(default_factory=DynamicParameters)
    quad: QuadratureSettings = field(default_factory=QuadratureSettings)
    perturbation: float = 0.2
    initial_guess: dict | None = None
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    starts: int = 1
    seed: int = 0
    method: str = "trf"
    max_nfev: int = 200

    def guess(self) -> dict:
        if self.initial_guess is not None:
            return dict(self.initial_guess)
        t = self.truth
        true = (t.K[0, 0], t.D[0, 0], t.alpha_h, t.beta_h, t.gamma_h)
        signs = (1, -1, 1, -1, 1)
        return {k: v * (1 + s * self.perturbation) for k, v, s in zip(PARAM_NAMES, true, signs)}


def load_identify_config(source) -> IdentifyConfig:
    docs = read_documents(source)
    if len(docs) != 1:
        raise ConfigError(f"expected exactly one document, found {len(docs)}",
                          docs[0][1] if docs else os.fspath(source))
    doc, label = docs[0]
    ctx = _Ctx(doc, label)
    ctx.raw("name")
    geometry = _geometry(ctx)
    p = ctx.block("params")
    truth = _params(p, DynamicParameters())
    quad = _quad(p)
    p.finish()

    c = ctx.block("chirp")
    d = ChirpSpec()
    f0 = c.number("f0", d.f0, lo=0, lo_open=True)
    f1 = c.number("f1", d.f1, lo=0, lo_open=True)
    if not f0 < f1:
        c.error("f1" if c.has("f1") else "f0", f"need f0 < f1, got f0={f0}, f1={f1}")
    dt = c.number("dt", d.dt, lo=0, lo_open=True, hi=0.1)
    chirp = ChirpSpec(
        f0=f0, f1=f1,
        amplitude=c.number("amplitude", d.amplitude, lo=0),
        duration=c.number("duration", d.duration, lo=dt, lo_open=True),
        actuator=c.number("actuator", d.actuator, lo=0, hi=2, integer=True),
        dt=dt,
    )
    c.finish()

    i = ctx.block("identify")
    cfg = IdentifyConfig(chirp=chirp, geometry=geometry, truth=truth, quad=quad)
    cfg.perturbation = i.number("perturbation", 0.2, lo=0, hi=0.9)
    cfg.starts = i.number("starts", 1, lo=1, hi=64, integer=True)
    cfg.seed = i.number("seed", 0, lo=0, integer=True)
    cfg.method = i.choice("method", METHODS, "trf")
    cfg.max_nfev = i.number("max_nfev", 200, lo=1, integer=True)
    b = i.block("bounds")
    bounds = dict(DEFAULT_BOUNDS)
    for key in list(b.m):
        if key not in PARAM_NAMES:
            b.error(key, f"unknown parameter; choose from {list(PARAM_NAMES)}")
        pair = b.raw(key)
        if (not isinstance(pair, list) or len(pair) != 2
                or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in pair)):
            b.error(key, f"expected [low, high], got {pair!r}")
        if not pair[0] < pair[1]:
            b.error(key, f"lower bound must be below upper bound, got {pair!r}")
        bounds[key] = (float(pair[0]), float(pair[1]))
    b.finish()
    cfg.bounds = bounds
    if i.has("initial_guess"):
        g = i.block("initial_guess")
        guess = {}
        for key in PARAM_NAMES:
            if not g.has(key):
                g.error("", f"missing {key}")
            guess[key] = g.number(key)
        g.finish()
        cfg.initial_guess = guess
        where = g
    else:
        where = i
    for key, v in cfg.guess().items():
        lo, hi = bounds[key]
        if not lo <= v <= hi:
            ref = key if where is not i else "perturbation"
            where.error(ref, f"initial {key}={v:.6g} lies outside bounds [{lo}, {hi}]")
    i.finish()
    ctx.finish()
    return cfg


def load_check_settings(source=None) -> tuple[RobotGeometry, DynamicParameters, QuadratureSettings]:
    """Geometry, parameters and numerical settings for the property suite."""
    if source is None:
        return RobotGeometry(), DynamicParameters(), QuadratureSettings()
    docs = read_documents(source)
    if not docs:
        raise ConfigError("no documents", os.fspath(source))
    doc, label = docs[0]
    ctx = _Ctx(doc, label)
    geometry = _geometry(ctx)
    p = ctx.block("params")
    params = _params(p, DynamicParameters())
    quad = _quad(p)
    p.finish()
    # remaining blocks belong to other commands and are validated there
    ctx.used.update(ctx.m.keys())
    return geometry, params, quad
