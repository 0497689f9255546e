"""INI-style pipeline configuration.

Grammar: standard ``configparser`` sections and ``key = value`` lines.
Recognised sections and keys (all optional, defaults in brackets)::

    [run]      output_dir [runs/default], global_seed [0], grid_scale [1]
    [model]    nx [64], nz [32], dx [1.0], dz [1.0], n_modes [10],
               mode_decay [3.0], mode_weight_max [100], mode_weight_min [1],
               data_scale [1.0], band_frac [0.7], target_seed [0],
               target_file [-]
    [prior]    corr_length [10], std [1.0], delta [-], gamma [-]
    [probe]    points_x [6], points_z [6], n_angles [8], rho0_frac [0.6],
               transform [sqrt], edge [taper], highpass_cutoff [0.2],
               highpass_width [0.2], basis_rank [auto], sv_threshold [0.01]
    [lowrank]  rank [20], oversample [10], power_iters [2]
    [laplace]  correction_rank [30], stride [2], rank_tol [1e-4], cg_tol [1e-10]
    [lbfgs]    memory [10], max_iters [3000], grad_reduction_tol [1e-6],
               snapshot_every [0]
    [chain]    n_samples [20000], beta [auto], burn_in [auto], thin [10],
               pilot [500], probe_points [auto]

``probe_points`` is a comma-separated list of ``iz:ix`` pairs. ``highpass_cutoff
= 0`` disables the high-pass filter. Unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class RunSection:
    output_dir: str = "runs/default"
    global_seed: int = 0
    grid_scale: float = 1.0


@dataclass(frozen=True)
class ModelSection:
    nx: int = 64
    nz: int = 32
    dx: float = 1.0
    dz: float = 1.0
    n_modes: int = 10
    mode_decay: float = 3.0
    mode_weight_max: float = 100.0
    mode_weight_min: float = 1.0
    data_scale: float = 1.0
    band_frac: float = 0.7
    target_seed: int = 0
    target_file: str | None = None   # HPF1 model field; overrides target_seed


@dataclass(frozen=True)
class PriorSection:
    corr_length: float = 10.0
    std: float = 1.0
    delta: float | None = None
    gamma: float | None = None


@dataclass(frozen=True)
class ProbeSection:
    points_x: int = 6
    points_z: int = 6
    n_angles: int = 8
    rho0_frac: float = 0.6
    transform: str = "sqrt"
    edge: str = "taper"
    highpass_cutoff: float = 0.2
    highpass_width: float = 0.2
    basis_rank: int | None = None
    sv_threshold: float = 1e-2


@dataclass(frozen=True)
class LowrankSection:
    rank: int = 20
    oversample: int = 10
    power_iters: int = 2


@dataclass(frozen=True)
class LaplaceSection:
    correction_rank: int = 30
    stride: int = 2
    rank_tol: float = 1e-4
    cg_tol: float = 1e-10


@dataclass(frozen=True)
class LbfgsSection:
    memory: int = 10
    max_iters: int = 3000
    grad_reduction_tol: float = 1e-6
    snapshot_every: int = 0


@dataclass(frozen=True)
class ChainSection:
    n_samples: int = 20000
    beta: float | None = None
    burn_in: int | None = None
    thin: int = 10
    pilot: int = 500
    probe_points: tuple | None = None


_SECTIONS = {
    "run": RunSection, "model": ModelSection, "prior": PriorSection, "probe": ProbeSection,
    "lowrank": LowrankSection, "laplace": LaplaceSection, "lbfgs": LbfgsSection,
    "chain": ChainSection,
}


@dataclass(frozen=True)
class PipelineConfig:
    run: RunSection = field(default_factory=RunSection)
    model: ModelSection = field(default_factory=ModelSection)
    prior: PriorSection = field(default_factory=PriorSection)
    probe: ProbeSection = field(default_factory=ProbeSection)
    lowrank: LowrankSection = field(default_factory=LowrankSection)
    laplace: LaplaceSection = field(default_factory=LaplaceSection)
    lbfgs: LbfgsSection = field(default_factory=LbfgsSection)
    chain: ChainSection = field(default_factory=ChainSection)

    def __post_init__(self):
        validate(self)

    @property
    def output_dir(self) -> Path:
        return Path(self.run.output_dir)

    @property
    def grid_shape(self) -> tuple[int, int]:
        s = self.run.grid_scale
        return max(int(round(self.model.nx * s)), 4), max(int(round(self.model.nz * s)), 4)

    def with_overrides(self, output_dir=None, seed=None, grid_scale=None) -> "PipelineConfig":
        run = self.run
        if output_dir is not None:
            run = replace(run, output_dir=str(output_dir))
        if seed is not None:
            run = replace(run, global_seed=int(seed))
        if grid_scale is not None:
            run = replace(run, grid_scale=float(grid_scale))
        return replace(self, run=run)

    def to_dict(self) -> dict:
        d = asdict(self)
        pts = d["chain"]["probe_points"]
        if pts is not None:
            d["chain"]["probe_points"] = [list(p) for p in pts]
        return d

    def stage_seed(self, stage: str) -> int:
        return stage_seed(self.run.global_seed, stage)


def stage_seed(global_seed: int, stage: str) -> int:
    """Per-stage seed: first word of ``SeedSequence([global_seed, crc32(stage)])``."""
    ss = np.random.SeedSequence([int(global_seed), zlib.crc32(stage.encode())])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def validate(cfg: PipelineConfig) -> None:
    m, p, pr, ch = cfg.model, cfg.prior, cfg.probe, cfg.chain
    checks = [
        (m.nx >= 4 and m.nz >= 4, "model grid must be at least 4x4"),
        (m.dx > 0 and m.dz > 0, "grid spacings must be positive"),
        (m.n_modes >= 0, "n_modes must be non-negative"),
        (m.mode_weight_max > 0 and m.mode_weight_min > 0, "mode weights must be positive"),
        (m.data_scale > 0, "data_scale must be positive"),
        (0 < m.band_frac <= 1, "band_frac must lie in (0, 1]"),
        (p.corr_length > 0 and p.std > 0, "prior corr_length and std must be positive"),
        ((p.delta is None) == (p.gamma is None), "set both prior delta and gamma or neither"),
        (p.delta is None or p.gamma is None or (p.delta > 0 and p.gamma > 0), "prior delta and gamma must be positive"),
        (pr.points_x >= 1 and pr.points_z >= 1, "need at least one PSF point per axis"),
        (pr.n_angles >= 2 and pr.n_angles % 2 == 0, "n_angles must be even and >= 2"),
        (0 < pr.rho0_frac < 1, "rho0_frac must lie in (0, 1)"),
        (pr.transform in ("none", "sqrt"), "probe transform must be none or sqrt"),
        (pr.edge in ("clamp", "taper"), "probe edge must be clamp or taper"),
        (pr.highpass_cutoff >= 0 and pr.highpass_width > 0, "invalid high-pass parameters"),
        (pr.basis_rank is None or pr.basis_rank >= 1, "basis_rank must be positive"),
        (cfg.lowrank.rank >= 1, "lowrank rank must be positive"),
        (cfg.laplace.correction_rank >= 0, "correction_rank must be non-negative"),
        (cfg.laplace.stride >= 1, "laplace stride must be positive"),
        (cfg.lbfgs.memory >= 1 and cfg.lbfgs.max_iters >= 1, "invalid lbfgs settings"),
        (ch.n_samples >= 1 and ch.thin >= 1 and ch.pilot >= 1, "invalid chain lengths"),
        (ch.beta is None or 0 < ch.beta < 1, "beta must lie in (0, 1)"),
        (ch.burn_in is None or 0 <= ch.burn_in < ch.n_samples, "burn_in must lie in [0, n_samples)"),
        (cfg.run.grid_scale > 0, "grid_scale must be positive"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)


def _parse_points(text: str) -> tuple:
    pts = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            iz, ix = item.split(":")
            pts.append((int(iz), int(ix)))
        except ValueError:
            raise ConfigError(f"bad probe point {item!r}; expected iz:ix") from None
    return tuple(pts)


def _convert(cls, name: str, raw: str):
    ftype = {f.name: f.type for f in fields(cls)}[name]
    text = raw.strip()
    if name == "probe_points":
        return None if text.lower() in ("", "auto") else _parse_points(text)
    optional = "None" in str(ftype)
    if optional and text.lower() in ("", "auto", "none"):
        return None
    try:
        if "int" in str(ftype):
            return int(text)
        if "float" in str(ftype):
            return float(text)
    except ValueError:
        raise ConfigError(f"[{name}] cannot parse {raw!r} as {ftype}") from None
    return text


def parse_config(text: str) -> PipelineConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    parts = {}
    for sec in cp.sections():
        if sec not in _SECTIONS:
            raise ConfigError(f"unknown section [{sec}]")
        cls = _SECTIONS[sec]
        known = {f.name for f in fields(cls)}
        kw = {}
        for key, raw in cp.items(sec):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            kw[key] = _convert(cls, key, raw)
        parts[sec] = cls(**kw)
    return PipelineConfig(**parts)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    return parse_config(path.read_text())


def dump_config(cfg: PipelineConfig) -> str:
    lines = []
    for sec in _SECTIONS:
        lines.append(f"[{sec}]")
        for f in fields(_SECTIONS[sec]):
            v = getattr(getattr(cfg, sec), f.name)
            if v is None:
                v = "auto"
            elif f.name == "probe_points":
                v = ", ".join(f"{a}:{b}" for a, b in v)
            lines.append(f"{f.name} = {v}")
        lines.append("")
    return "\n".join(lines)
