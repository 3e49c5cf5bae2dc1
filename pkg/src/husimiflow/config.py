"""Scenario configuration: a flat TOML document validated into :class:`ScenarioConfig`.

Sections and keys::

    [grid]        counts, min, max (one entry per axis x1..xN, p1..pN),
                  hbar, widths (optional, flat: wx1, wp1, wx2, wp2, ...)
    [hamiltonian] expr
    [state]       kind (coherent_wigner | coherent_husimi | classical_blob |
                  classical_density | fock | mixture), center, w_c, level,
                  representation (fock only: Wigner or Husimi),
                  centers (mixture: flat list of 2N-vectors), weights
    [time]        t_final, dt, save_every
    [gauge]       kind (default | radial | poisson), origin, nodes
    [parcels]     seeds (flat list of 2N-vectors), dt
    [observables] list
    [action]      eps, shape
    [output]      dir

Errors carry the 1-based line of the offending key when it can be found.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python < 3.11
    import tomli

from .errors import ConfigError, HusimiFlowError
from .grid import Grid, make_grid
from .symbols import PolySymbol, parse_poly

STATE_KINDS = ("coherent_wigner", "coherent_husimi", "classical_blob", "classical_density", "fock", "mixture")
GAUGE_KINDS = ("default", "radial", "poisson")

_SECTIONS = {
    "grid": {"counts", "min", "max", "hbar", "widths"},
    "hamiltonian": {"expr"},
    "state": {"kind", "center", "w_c", "level", "representation", "centers", "weights"},
    "time": {"t_final", "dt", "save_every"},
    "gauge": {"kind", "origin", "nodes"},
    "parcels": {"seeds", "dt"},
    "observables": {"list"},
    "action": {"eps", "shape"},
    "output": {"dir"},
}


def _line_of(text: str, section: str | None, key: str | None = None) -> int | None:
    """Line (1-based) of ``key`` inside ``[section]``, or of the section header."""
    current = None
    header_line = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[\s*([A-Za-z0-9_.-]+)\s*\]", line)
        if m:
            current = m.group(1)
            if current == section:
                header_line = i
            continue
        if current == section and key is not None and re.match(rf"^{re.escape(key)}\s*=", line):
            return i
    return header_line


@dataclass
class ScenarioConfig:
    grid: Grid
    hamiltonian: PolySymbol
    hamiltonian_text: str
    state: dict
    t_final: float = 0.0
    dt: float = 1e-3
    save_every: int = 1
    gauge: dict = dc_field(default_factory=lambda: {"kind": "default"})
    seeds: np.ndarray | None = None
    parcel_dt: float | None = None
    observables: list = dc_field(default_factory=list)
    action: dict = dc_field(default_factory=dict)
    output_dir: str | None = None
    source: str | None = None

    @property
    def n_dof(self) -> int:
        return self.grid.n_dof


class _Checker:
    def __init__(self, text: str, data: dict):
        self.text = text
        self.data = data

    def fail(self, msg, section=None, key=None):
        raise ConfigError(msg, _line_of(self.text, section, key))

    def section(self, name, required=False) -> dict:
        sec = self.data.get(name)
        if sec is None:
            if required:
                self.fail(f"missing section [{name}]")
            return {}
        if not isinstance(sec, dict):
            self.fail(f"[{name}] must be a table", name)
        return sec

    def get(self, section, key, kind, default=None, required=False):
        sec = self.section(section)
        if key not in sec:
            if required:
                self.fail(f"[{section}] needs key '{key}'", section)
            return default
        v = sec[key]
        if kind == "float":
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                self.fail(f"[{section}] {key} must be a number", section, key)
            return float(v)
        if kind == "int":
            if isinstance(v, bool) or not isinstance(v, int):
                self.fail(f"[{section}] {key} must be an integer", section, key)
            return v
        if kind == "str":
            if not isinstance(v, str):
                self.fail(f"[{section}] {key} must be a string", section, key)
            return v
        if kind == "floats":
            if not isinstance(v, list) or any(isinstance(e, (bool, list, dict, str)) for e in v):
                self.fail(f"[{section}] {key} must be an array of numbers", section, key)
            return [float(e) for e in v]
        if kind == "ints":
            if not isinstance(v, list) or any(isinstance(e, bool) or not isinstance(e, int) for e in v):
                self.fail(f"[{section}] {key} must be an array of integers", section, key)
            return list(v)
        if kind == "strs":
            if not isinstance(v, list) or any(not isinstance(e, str) for e in v):
                self.fail(f"[{section}] {key} must be an array of strings", section, key)
            return list(v)
        raise AssertionError(kind)


def _vectors(flat, dim, chk: _Checker, section, key) -> np.ndarray:
    if len(flat) == 0 or len(flat) % dim:
        chk.fail(f"[{section}] {key} must hold a multiple of {dim} numbers", section, key)
    return np.asarray(flat, dtype=float).reshape(-1, dim)


def _inside(grid: Grid, z) -> bool:
    return all(ax.lo <= v < ax.hi for ax, v in zip(grid.axes, z))


def parse_config(text: str, source: str | None = None) -> ScenarioConfig:
    """Parse and validate a scenario document."""
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"malformed config: {e}", getattr(e, "lineno", None)) from None
    chk = _Checker(text, data)
    for name, sec in data.items():
        if name not in _SECTIONS:
            chk.fail(f"unknown section [{name}]", name)
        if isinstance(sec, dict):
            for key in sec:
                if key not in _SECTIONS[name]:
                    chk.fail(f"unknown key '{key}' in [{name}]", name, key)

    # grid
    counts = chk.get("grid", "counts", "ints", required=True)
    lo = chk.get("grid", "min", "floats", required=True)
    hi = chk.get("grid", "max", "floats", required=True)
    if not len(counts) == len(lo) == len(hi):
        chk.fail("[grid] counts, min and max must have the same length", "grid", "counts")
    hbar = chk.get("grid", "hbar", "float", 1.0)
    wflat = chk.get("grid", "widths", "floats")
    widths = None
    if wflat is not None:
        if len(wflat) != len(counts):
            chk.fail("[grid] widths needs one (w_x, w_p) pair per degree of freedom", "grid", "widths")
        widths = [(wflat[2 * i], wflat[2 * i + 1]) for i in range(len(wflat) // 2)]
    try:
        grid = make_grid(list(zip(counts, lo, hi)), hbar, widths)
    except HusimiFlowError as e:
        key = "widths" if "width" in str(e) or "hbar" in str(e) else "counts"
        chk.fail(f"[grid] {e}", "grid", key)
    nd = grid.ndim

    # hamiltonian
    expr = chk.get("hamiltonian", "expr", "str", required=True)
    try:
        h = parse_poly(expr, grid.n_dof)
    except HusimiFlowError as e:
        chk.fail(f"[hamiltonian] expr: {e}", "hamiltonian", "expr")
    if not h.is_real():
        chk.fail("[hamiltonian] expr must be real", "hamiltonian", "expr")

    # state
    kind = chk.get("state", "kind", "str", required=True)
    if kind not in STATE_KINDS:
        chk.fail(f"[state] kind must be one of {', '.join(STATE_KINDS)}", "state", "kind")
    state: dict = {"kind": kind}
    if kind in ("coherent_wigner", "coherent_husimi", "classical_blob", "classical_density"):
        c = chk.get("state", "center", "floats", [0.0] * nd)
        if len(c) != nd:
            chk.fail(f"[state] center needs {nd} numbers", "state", "center")
        if not _inside(grid, c):
            chk.fail("[state] center lies outside the box", "state", "center")
        state["center"] = c
        state["w_c"] = chk.get("state", "w_c", "float", 1.0)
    elif kind == "fock":
        state["level"] = chk.get("state", "level", "int", 0)
        rep = chk.get("state", "representation", "str", "Wigner")
        if rep not in ("Wigner", "Husimi"):
            chk.fail("[state] representation must be Wigner or Husimi", "state", "representation")
        state["representation"] = rep
    else:
        centers = _vectors(chk.get("state", "centers", "floats", required=True), nd, chk, "state", "centers")
        for c in centers:
            if not _inside(grid, c):
                chk.fail("[state] a mixture center lies outside the box", "state", "centers")
        weights = chk.get("state", "weights", "floats", [1.0 / len(centers)] * len(centers))
        if len(weights) != len(centers):
            chk.fail("[state] weights must match centers", "state", "weights")
        state["centers"] = centers.tolist()
        state["weights"] = weights
        state["w_c"] = chk.get("state", "w_c", "float", 1.0)
        rep = chk.get("state", "representation", "str", "Wigner")
        if rep not in ("Wigner", "Husimi"):
            chk.fail("[state] representation must be Wigner or Husimi", "state", "representation")
        state["representation"] = rep

    # time
    t_final = chk.get("time", "t_final", "float", 0.0)
    dt = chk.get("time", "dt", "float", 1e-3)
    save_every = chk.get("time", "save_every", "int", 1)
    if t_final < 0:
        chk.fail("[time] t_final must be nonnegative", "time", "t_final")
    if not dt > 0:
        chk.fail("[time] dt must be positive", "time", "dt")
    if save_every < 1:
        chk.fail("[time] save_every must be >= 1", "time", "save_every")

    # gauge
    gkind = chk.get("gauge", "kind", "str", "default")
    if gkind not in GAUGE_KINDS:
        chk.fail(f"[gauge] kind must be one of {', '.join(GAUGE_KINDS)}", "gauge", "kind")
    gauge = {"kind": gkind}
    origin = chk.get("gauge", "origin", "floats")
    if origin is not None:
        if len(origin) != nd:
            chk.fail(f"[gauge] origin needs {nd} numbers", "gauge", "origin")
        gauge["origin"] = origin
    nodes = chk.get("gauge", "nodes", "int")
    if nodes is not None:
        if nodes < 2:
            chk.fail("[gauge] nodes must be >= 2", "gauge", "nodes")
        gauge["nodes"] = nodes

    # parcels
    seeds = None
    sflat = chk.get("parcels", "seeds", "floats")
    if sflat is not None:
        seeds = _vectors(sflat, nd, chk, "parcels", "seeds")
        for s in seeds:
            if not _inside(grid, s):
                chk.fail("[parcels] a seed lies outside the box", "parcels", "seeds")
    pdt = chk.get("parcels", "dt", "float")
    if pdt is not None and not pdt > 0:
        chk.fail("[parcels] dt must be positive", "parcels", "dt")

    # observables
    obs = []
    for text_o in chk.get("observables", "list", "strs", []):
        try:
            obs.append((text_o, parse_poly(text_o, grid.n_dof)))
        except HusimiFlowError as e:
            chk.fail(f"[observables] {text_o!r}: {e}", "observables", "list")

    action = {}
    eps = chk.get("action", "eps", "floats")
    if eps is not None:
        if len([e for e in eps if e != 0]) < 2:
            chk.fail("[action] eps needs at least two nonzero values", "action", "eps")
        action["eps"] = eps
    shape = chk.get("action", "shape", "str")
    if shape is not None:
        if shape not in ("sine", "sine2", "bump"):
            chk.fail("[action] shape must be sine, sine2 or bump", "action", "shape")
        action["shape"] = shape

    out = chk.get("output", "dir", "str")
    return ScenarioConfig(grid, h, expr, state, t_final, dt, save_every, gauge, seeds, pdt, obs, action, out, source)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return parse_config(text, str(path))


def build_state(cfg: ScenarioConfig):
    """Initial state described by the ``[state]`` section."""
    from . import states as st

    s = cfg.state
    g = cfg.grid
    kind = s["kind"]
    if kind == "coherent_wigner":
        return st.coherent_wigner(g, s["center"], s["w_c"])
    if kind == "coherent_husimi":
        return st.coherent_husimi(g, s["center"], s["w_c"])
    if kind == "classical_blob":
        return st.classical_blob(g, s["center"])
    if kind == "classical_density":
        return st.classical_density(g, s["center"], s["w_c"])
    if kind == "fock":
        w = st.fock_wigner(g, s["level"])
        return st.smooth_state(w) if s["representation"] == "Husimi" else w
    parts = [st.coherent_wigner(g, c, s["w_c"]) for c in s["centers"]]
    mix = st.mixture(parts, s["weights"])
    return st.smooth_state(mix) if s["representation"] == "Husimi" else mix
