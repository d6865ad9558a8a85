"""Run configuration: flat INI sections with unit-suffixed keys.

Every physical quantity carries its unit in the key name; angles are
degrees in files and radians internally.  Unknown sections or keys are
rejected up front so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

from .dicke import PulseSpec
from .sequences import LossSpec, NoiseSpec, SequenceSpec, TwistSpec
from .tomography import ImagingNoiseSpec
from .modes import ScatteringSpec, TrapSpec


class ConfigError(ValueError):
    pass


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_float_list(s: str):
    return [float(x) for x in s.split(",") if x.strip() != ""]


def _opt(parser):
    def parse(s: str):
        if s.strip() == "":
            return None
        return parser(s)
    return parse


# schema: section -> key -> (parser, default-as-string)
SCHEMA = {
    "run": {
        "seed": (int, "12345"),
        "out_dir": (str, "out"),
        "shots_per_theta": (int, "300"),
        "theta_grid_deg": (_parse_float_list,
                           "0,2,4,6,8,10,14,20,45,90,135,180"),
    },
    "physical": {
        "n_atoms": (int, "1250"),
        "rabi_hz": (float, "2100"),
        "f_long_hz": (float, "109"),
        "f_ax_hz": (float, "500"),
        "separation_um": (float, "0.52"),
        "mass_kg": (float, "1.44316060e-25"),
        "a00_bohr": (float, "100.4"),
        "a01_bohr": (float, "97.7"),
        "a11_bohr": (float, "95.0"),
        "twist_time_ms": (float, "12.7"),
        "free_detuning_hz": (float, "0"),
        "mw_shift_khz": (float, "7.6"),   # recorded constant; used only if
                                          # fed into free_detuning_hz
        "b_field_gauss": (float, "3.36"),  # recorded, unused
        "prep_duration_us": (_opt(float), ""),
    },
    "twist": {
        "mode": (str, "constant"),        # constant | profile | none
        "chi_per_s": (_opt(float), ""),
        "target_floor_db": (_opt(float), "-12.8"),
        "calibration_trajectories": (int, "1500"),
        "overshoot": (float, "10"),
        "profile_points": (int, "33"),
        "curve_points": (int, "7"),
    },
    "noise": {
        "phase_rms_deg": (float, "8"),
        "detuning_rms_hz": (float, "40"),
        "power_rel_rms": (float, "0.005"),
        "atom_number_rms": (float, "45"),
        "detuning_correlated": (_parse_bool, "false"),
        "detuning_on_tomography": (_parse_bool, "true"),
    },
    "loss": {
        "one_body_0_per_s": (float, "1.35"),
        "one_body_1_per_s": (float, "1.35"),
        "two_body_00_per_s": (float, "0"),
        "two_body_01_per_s": (float, "5.5e-3"),
        "two_body_11_per_s": (float, "1.9e-3"),
        "three_body_000_per_s": (float, "1.5e-6"),
    },
    "imaging": {
        "sigma_n0_atoms": (float, "9.899494936611665"),
        "sigma_n1_atoms": (float, "9.899494936611665"),
    },
    "tomography": {
        "postselect_center": (_opt(float), ""),
        "postselect_halfwidth": (float, "150"),
        "drift_window": (int, "300"),
        "drift_order": (int, "2"),
        "drift_theta_min_deg": (float, "90"),
        "drift_theta_max_deg": (float, "360"),
        "contrast": (_opt(float), ""),
    },
    "modes": {
        "grid_points": (int, "512"),
        "halfwidth_um": (_opt(float), ""),
        "transverse": (str, "eos"),
        "separations_um": (_parse_float_list, "0,0.5,1,1.5,2,3,4,6,8"),
        "tolerance": (float, "1e-10"),
    },
    "wigner": {
        "filter": (str, "hann"),
        "grid_points": (int, "257"),
        "halfwidth_spin": (_opt(float), ""),
    },
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    # ---- assembled specs ------------------------------------------------

    @property
    def rabi(self) -> float:
        return 2 * np.pi * self["physical"]["rabi_hz"]

    @property
    def twist_time(self) -> float:
        return 1e-3 * self["physical"]["twist_time_ms"]

    def trap(self) -> TrapSpec:
        p = self["physical"]
        return TrapSpec(f_long=p["f_long_hz"], f_ax=p["f_ax_hz"],
                        separation=1e-6 * p["separation_um"])

    def scattering(self) -> ScatteringSpec:
        p = self["physical"]
        return ScatteringSpec(a00=p["a00_bohr"], a01=p["a01_bohr"],
                              a11=p["a11_bohr"], mass=p["mass_kg"])

    def noise(self) -> NoiseSpec:
        n = self["noise"]
        return NoiseSpec(
            phase_rms=np.radians(n["phase_rms_deg"]),
            detuning_rms=2 * np.pi * n["detuning_rms_hz"],
            pulse_power_rel_rms=n["power_rel_rms"],
            atom_number_mean=self["physical"]["n_atoms"],
            atom_number_rms=n["atom_number_rms"],
            detuning_correlated=n["detuning_correlated"],
            detuning_on_tomography=n["detuning_on_tomography"],
        )

    def loss(self) -> LossSpec:
        lo = self["loss"]
        return LossSpec(
            rate1=(lo["one_body_0_per_s"], lo["one_body_1_per_s"]),
            rate2=(lo["two_body_00_per_s"], lo["two_body_01_per_s"],
                   lo["two_body_11_per_s"]),
            rate3=lo["three_body_000_per_s"],
        )

    def imaging(self) -> ImagingNoiseSpec:
        im = self["imaging"]
        return ImagingNoiseSpec(sigma_n0=im["sigma_n0_atoms"],
                                sigma_n1=im["sigma_n1_atoms"])

    def prepare_pulse(self) -> PulseSpec:
        p = self["physical"]
        dur = p["prep_duration_us"]
        duration = 1e-6 * dur if dur is not None else 0.5 * np.pi / self.rabi
        return PulseSpec(rabi=self.rabi, phase=0.5 * np.pi, detuning=0.0,
                         duration=duration)

    def twist(self, profile_tables=None) -> TwistSpec:
        t = self["twist"]
        free = 2 * np.pi * self["physical"]["free_detuning_hz"]
        if t["mode"] == "none":
            return TwistSpec(duration=self.twist_time, chi=0.0,
                             free_detuning=free)
        if t["mode"] == "constant":
            chi = t["chi_per_s"] if t["chi_per_s"] is not None else 1.0
            return TwistSpec(duration=self.twist_time, chi=chi,
                             free_detuning=free)
        if t["mode"] == "profile":
            if profile_tables is None:
                raise ConfigError("twist.mode = profile needs a computed "
                                  "split profile")
            times, chis = profile_tables
            return TwistSpec(duration=self.twist_time, profile_times=times,
                             profile_chi=chis, free_detuning=free)
        raise ConfigError(f"twist.mode: unknown mode {t['mode']!r}")

    def sequence(self, theta: float, twist: TwistSpec) -> SequenceSpec:
        return SequenceSpec(prepare_pulse=self.prepare_pulse(), twist=twist,
                            tomography_angle=theta)


def load_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    """Parse and validate a config file; None loads pure defaults.

    Unknown sections or keys raise ConfigError naming the offender; every
    value is parsed eagerly so type errors surface before any computation.
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    if path is not None:
        read = cp.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
    values: dict = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (parser, default) in keys.items():
            raw = default
            if cp.has_option(section, key):
                raw = cp.get(section, key)
            try:
                values[section][key] = parser(raw)
            except Exception as exc:
                raise ConfigError(
                    f"[{section}] {key}: cannot parse {raw!r}: {exc}") from exc
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key in cp.options(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in section "
                                  f"[{section}]")
    cfg = RunConfig(values=values)
    for sec, key, val in (overrides or {}).get("triples", []):
        cfg.values[sec][key] = val
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if cfg["run"]["shots_per_theta"] < 1:
        raise ConfigError("[run] shots_per_theta must be >= 1")
    if cfg["physical"]["n_atoms"] < 1:
        raise ConfigError("[physical] n_atoms must be >= 1")
    if cfg["twist"]["mode"] not in ("constant", "profile", "none"):
        raise ConfigError("[twist] mode must be constant, profile or none")
    if cfg["modes"]["transverse"] not in ("eos", "fixed"):
        raise ConfigError("[modes] transverse must be 'eos' or 'fixed'")
    if cfg["wigner"]["filter"] not in ("hann", "ram-lak"):
        raise ConfigError("[wigner] filter must be 'hann' or 'ram-lak'")
    thetas = cfg["run"]["theta_grid_deg"]
    if not thetas:
        raise ConfigError("[run] theta_grid_deg must not be empty")
    if any(not 0 <= t < 360 for t in thetas):
        raise ConfigError("[run] theta_grid_deg entries must lie in [0, 360)")


def default_config_text() -> str:
    """Complete config template with the default values."""
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (_, default) in keys.items():
            lines.append(f"{key} = {default}")
        lines.append("")
    return "\n".join(lines)
