"""Sectioned key=value configuration files for scenarios, parameters and
detection settings.  Built on :mod:`configparser`, so files round-trip
through parse -> serialize -> parse."""

from __future__ import annotations

import configparser
from pathlib import Path

import numpy as np

from .core import DataFormatError, PhysicalParams, make_grid
from .detect import DetectionConfig, default_watch_set
from .estimation import OptimizerConfig
from .simulate import ScenarioSpec, SourceSpec, default_sources
from .util import fmt17


def _vector(text: str) -> np.ndarray:
    return np.array([float(tok) for tok in text.replace(",", " ").split()])


def _fmt_vector(vec) -> str:
    return ",".join(fmt17(v) for v in np.atleast_1d(vec))


def load_config(path) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    found = cfg.read(path)
    if not found:
        raise DataFormatError(f"config file not found: {path}")
    return cfg


def save_config(cfg: configparser.ConfigParser, path) -> None:
    with open(path, "w") as fh:
        cfg.write(fh)


def params_to_config(p: PhysicalParams, obs_var: float = None) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    cfg["params"] = {
        "mu": _fmt_vector(p.mu),
        "sigma": _fmt_vector(p.sigma_diag),
        "eta": fmt17(p.eta),
        "phi": _fmt_vector(p.noise_shape_diag),
        "noise_scale": fmt17(p.noise_scale),
    }
    if obs_var is not None:
        cfg["obs"] = {"variance": fmt17(obs_var)}
    return cfg


def params_from_config(cfg: configparser.ConfigParser):
    """Returns (PhysicalParams, obs_var or None)."""
    if "params" not in cfg:
        raise DataFormatError("config lacks a [params] section")
    sec = cfg["params"]
    try:
        p = PhysicalParams(
            mu=_vector(sec["mu"]),
            sigma_diag=_vector(sec["sigma"]),
            eta=float(sec["eta"]),
            noise_shape_diag=_vector(sec["phi"]),
            noise_scale=float(sec.get("noise_scale", "1.0")),
        )
    except (KeyError, ValueError) as exc:
        raise DataFormatError(f"bad [params] section: {exc}") from exc
    obs_var = None
    if "obs" in cfg and "variance" in cfg["obs"]:
        obs_var = float(cfg["obs"]["variance"])
    return p, obs_var


def write_params(path, p: PhysicalParams, obs_var: float = None) -> None:
    save_config(params_to_config(p, obs_var), path)


def read_params(path):
    return params_from_config(load_config(path))


def scenario_to_config(spec: ScenarioSpec) -> configparser.ConfigParser:
    cfg = params_to_config(spec.params)
    cfg["grid"] = {
        "n1": str(spec.grid.n1),
        "n2": str(spec.grid.n2),
        "extent": fmt17(spec.grid.extent),
    }
    cfg["scenario"] = {
        "change_time": fmt17(spec.change_time),
        "t_end": fmt17(spec.t_end),
        "frame_dt": fmt17(spec.frame_dt),
        "substeps": str(spec.substeps),
        "noise_var": fmt17(spec.noise_var),
        "noise_family": spec.noise_family,
        "noise_range": fmt17(spec.noise_range),
        "half_diffusion": str(spec.half_diffusion).lower(),
        "seed": str(spec.seed),
    }
    cfg["init"] = {"sill": fmt17(spec.init_sill), "range": fmt17(spec.init_range)}
    if spec.sources != default_sources(spec.grid.extent):
        for i, s in enumerate(spec.sources):
            cfg[f"source{i}"] = {
                "center": _fmt_vector(s.center),
                "shape": _fmt_vector(s.shape_diag),
                "amplitude": fmt17(s.amplitude),
                "post_change_amplitude": fmt17(s.post_change_amplitude),
                "flagged": str(s.flagged).lower(),
            }
    return cfg


def scenario_from_config(cfg: configparser.ConfigParser) -> ScenarioSpec:
    p, _ = params_from_config(cfg)
    if "grid" not in cfg:
        raise DataFormatError("config lacks a [grid] section")
    g = cfg["grid"]
    grid = make_grid(int(g["n1"]), int(g["n2"]), float(g.get("extent", "1.0")))
    sec = cfg["scenario"] if "scenario" in cfg else {}
    sources = []
    for name in cfg.sections():
        if not name.startswith("source") or name == "sources":
            continue
        s = cfg[name]
        center = tuple(_vector(s["center"]))
        shape = tuple(_vector(s.get("shape", "1e-3,1e-3")))
        sources.append(SourceSpec(
            center=center, shape_diag=shape,
            amplitude=float(s.get("amplitude", "10.0")),
            post_change_amplitude=float(s.get("post_change_amplitude", "5.0")),
            flagged=s.get("flagged", "false").lower() == "true"))
    init = cfg["init"] if "init" in cfg else {}
    return ScenarioSpec(
        grid=grid,
        params=p,
        sources=tuple(sources) if sources else None,
        change_time=float(sec.get("change_time", "2.0")),
        t_end=float(sec.get("t_end", "3.3")),
        frame_dt=float(sec.get("frame_dt", "0.1")),
        substeps=int(sec.get("substeps", "8")),
        init_sill=float(init.get("sill", "1.0")),
        init_range=float(init.get("range", "0.25")),
        noise_var=float(sec.get("noise_var", "0.01")),
        noise_family=sec.get("noise_family", "iid"),
        noise_range=float(sec.get("noise_range", "0.25")),
        half_diffusion=sec.get("half_diffusion", "false").lower() == "true",
        seed=int(sec.get("seed", "0")),
    )


def read_scenario(path) -> ScenarioSpec:
    return scenario_from_config(load_config(path))


def write_scenario(path, spec: ScenarioSpec) -> None:
    save_config(scenario_to_config(spec), path)


def detection_from_config(cfg: configparser.ConfigParser) -> DetectionConfig:
    if "detection" not in cfg:
        return DetectionConfig()
    sec = cfg["detection"]
    watch = default_watch_set()
    if "watch" in sec:
        toks = [t for t in sec["watch"].replace(";", " ").split() if t]
        watch = tuple(tuple(int(v) for v in t.split(",")) for t in toks)
    return DetectionConfig(
        method=sec.get("method", "threshold"),
        baseline_window=int(sec.get("baseline_window", "10")),
        threshold=float(sec.get("threshold", "4.0")),
        cusum_drift=float(sec.get("cusum_drift", "0.5")),
        watch_set=watch,
    )


def optimizer_from_config(cfg: configparser.ConfigParser) -> OptimizerConfig:
    if "fit" not in cfg:
        return OptimizerConfig()
    sec = cfg["fit"]
    return OptimizerConfig(
        learning_rate=float(sec.get("learning_rate", "1e-3")),
        beta1=float(sec.get("beta1", "0.9")),
        beta2=float(sec.get("beta2", "0.999")),
        eps=float(sec.get("eps", "1e-8")),
        max_iters=int(sec.get("max_iters", "500")),
        grad_tol=float(sec.get("grad_tol", "1e-5")),
        fd_step=float(sec.get("fd_step", "1e-4")),
    )
