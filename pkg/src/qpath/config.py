"""Run configuration, JSON-schema validation and figure presets."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources

import jsonschema

from .dynamics import BlochState, PhysicalParams
from .errors import ConfigError

US = 1e-6
FIG4_HORIZONS = (0.464 * US, 0.944 * US, 1.424 * US)


def load_schema(name: str) -> dict:
    text = resources.files("qpath").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


@dataclass
class RunConfig:
    """Everything a pipeline needs, in SI units.

    ``omega_hz`` is Omega / 2 pi. The extra decay is always derived from
    ``gamma`` and ``tau``.
    """

    preset: str | None = None
    omega_hz: float = 1.08e6
    tau: float = 315e-9
    gamma: float = 3.85e6
    dt: float = 16e-9
    delta_v: float = 1.0
    scheme: str = "symmetric"
    x0: float = 0.88
    z0: float = 0.0
    n: int = 100_000
    seed: int = 2024
    duration: float = 1.424 * US
    xf: float | None = None
    zf: float | None = None
    window: float = 0.08
    selection_mode: str = "xz"
    horizons: list = field(default_factory=list)
    percentile: float = 5.0
    decay: str = "extra"
    step: float = 1e-9
    bins: int = 50
    variational: bool = False

    def params(self) -> PhysicalParams:
        try:
            return PhysicalParams.from_lab(self.omega_hz, self.tau, self.gamma,
                                           dt=self.dt, delta_v=self.delta_v, scheme=self.scheme)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def initial(self) -> BlochState:
        try:
            return BlochState(self.x0, self.z0)
        except ValueError as exc:
            raise ConfigError(f"x0/z0: {exc}") from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def validate(data: dict) -> None:
    """Raise ConfigError naming the first offending field."""
    v = jsonschema.Draft202012Validator(load_schema("run_config"))
    errors = sorted(v.iter_errors(data), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        where = ".".join(str(p) for p in e.path) or "(top level)"
        raise ConfigError(f"config field {where}: {e.message}")


PRESETS = {
    "fig2": dict(omega_hz=1.08e6, tau=315e-9, gamma=3.85e6, x0=0.88, z0=0.0),
    "fig3": dict(omega_hz=0.0, tau=1.25 * US, gamma=0.94e6, x0=0.97, z0=0.0,
                 xf=0.23, zf=-0.85, window=0.03, horizons=[1.424 * US]),
    "fig4": dict(omega_hz=1.08e6, tau=315e-9, gamma=3.85e6, x0=0.88, z0=0.0,
                 xf=-0.29, zf=0.7, window=0.08, horizons=list(FIG4_HORIZONS)),
    "figS2": dict(omega_hz=1.08e6, tau=315e-9, gamma=3.85e6, x0=0.88, z0=0.0,
                  xf=-0.683, zf=-0.227, horizons=[0.464 * US], variational=True),
    "figS3": dict(omega_hz=0.0, tau=1.25 * US, gamma=0.94e6, x0=1.0, z0=0.0,
                  horizons=[0.32 * US, 0.64 * US, 1.424 * US]),
    "figS4": dict(window=0.03, horizons=list(FIG4_HORIZONS), zf=-0.5),
}

# (label, overrides, x_F per horizon); z_F = -0.5 throughout
FIGS4_PANELS = (
    ("a", dict(omega_hz=1.08e6, tau=1.25 * US, gamma=0.94e6, x0=0.97), (-0.78, 0.7, -0.73)),
    ("b", dict(omega_hz=1.08e6, tau=315e-9, gamma=3.85e6, x0=0.88), (-0.69, 0.5, -0.73)),
    ("c", dict(omega_hz=0.58e6, tau=315e-9, gamma=3.85e6, x0=0.88), (-0.35, -0.5, -0.56)),
)

FIGS3_TARGETS = (0.2, 0.4, 0.6)


def build_config(preset: str | None = None, file_data: dict | None = None,
                 overrides: dict | None = None) -> RunConfig:
    """Merge preset < config file < explicit overrides, then validate.

    ``file_data`` may also be a run manifest, whose ``config`` entry is used.
    """
    data = {}
    if file_data:
        if "config" in file_data and isinstance(file_data["config"], dict):
            file_data = file_data["config"]
        validate(file_data)
        data.update(file_data)
    name = preset if preset is not None else data.get("preset")
    merged = {}
    if name is not None:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        merged.update(PRESETS[name])
        merged["preset"] = name
    merged.update({k: v for k, v in data.items() if k != "preset"})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    validate(merged)
    return RunConfig(**merged)
