"""Shipped scenarios and the pipeline pieces shared by the CLI and the checks."""

from __future__ import annotations

from importlib import resources

from .config import ScenarioConfig, build_state, parse_config
from .dynamics import Trajectory, propagate
from .flux import GaugeSpec
from .states import State, smooth_state

SHIPPED = ("ho_coherent", "quartic", "ho_fock")


def scenario_text(name: str) -> str:
    if name not in SHIPPED:
        raise KeyError(f"unknown scenario {name!r}; shipped: {', '.join(SHIPPED)}")
    return resources.files("husimiflow").joinpath("scenarios", f"{name}.toml").read_text()


def load_scenario(name: str) -> ScenarioConfig:
    return parse_config(scenario_text(name), f"<shipped:{name}>")


def gauge_spec(cfg: ScenarioConfig, kind: str | None = None) -> GaugeSpec:
    g = cfg.gauge
    kind = kind or g["kind"]
    kw = {}
    if kind == "radial":
        if "origin" in g:
            kw["origin"] = tuple(g["origin"])
        if "nodes" in g:
            kw["nodes"] = g["nodes"]
    return GaugeSpec(kind, **kw)


def evolve(cfg: ScenarioConfig, t_final: float | None = None, save_every: int | None = None,
           dt: float | None = None) -> Trajectory:
    """Propagate the configured initial state; keyword overrides replace the [time] values."""
    s0 = build_state(cfg)
    return propagate(cfg.hamiltonian, s0,
                     cfg.t_final if t_final is None else t_final,
                     cfg.dt if dt is None else dt,
                     cfg.save_every if save_every is None else save_every)


def husimi_trajectory(traj: Trajectory) -> Trajectory:
    """Husimi-kind view of a trajectory; unsmoothed snapshots are smoothed one by one.

    Smoothing commutes with the evolution, so this is the smoothed run
    without the ill-conditioned direct integration.
    """
    if traj.representation.is_husimi_kind:
        return traj
    states = [smooth_state(State(s.field, s.representation, {})) for s in traj.states]
    return Trajectory(list(traj.times), states, traj.hamiltonian, dict(traj.meta, smoothed_from=traj.representation.value))
