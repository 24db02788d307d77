"""Scenario configuration: schema, profiles, parsing, hashing, seeding.

Configs are JSON with nested sections. Parsing fills every default
explicitly, so serialize(parse(text)) is the canonical form and
parse(serialize(parse(text))) == parse(text). Infinite SNRs round-trip as
the string "inf".
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .channel import ChannelScenario, OffsetTuple, PathModel
from .errors import ConfigError
from .frame import FrameSpec


@dataclass
class SyncSettings:
    enabled: bool = True
    sc_threshold: float = 0.5
    ridge_threshold_db: float = 10.0
    dtp_pad_factor: int = 16
    ddp_pad_factor: int = 16
    resampler_taps: int = 32


@dataclass
class DetectorSettings:
    guard_bins: tuple[int, int] = (12, 12)
    threshold_db: float = 12.0


@dataclass
class RadarSettings:
    range_pad: int = 4
    doppler_pad: int = 4
    detector: DetectorSettings = field(default_factory=DetectorSettings)
    pilot_fallback: bool = True


@dataclass
class ExperimentSettings:
    seed: int = 1
    repetitions: int = 1
    guard_symbols: int = 6
    workers: int = 1


@dataclass
class OutputSettings:
    directory: str = "out"
    formats: tuple[str, ...] = ("json", "csv", "bin", "png")


@dataclass
class ScenarioConfig:
    frame: FrameSpec
    placement: str
    channel: ChannelScenario
    sync: SyncSettings
    radar: RadarSettings
    experiment: ExperimentSettings
    output: OutputSettings

    def to_dict(self) -> dict:
        f = self.frame
        ch = self.channel
        return {
            "frame": {
                "n_subcarriers": f.n_subcarriers, "n_preamble": f.n_preamble,
                "n_payload": f.n_payload, "cp_len": f.cp_len,
                "pilot_spacing_freq": f.pilot_spacing_freq,
                "pilot_spacing_time": f.pilot_spacing_time,
                "bandwidth_hz": f.bandwidth, "sample_rate_hz": f.sample_rate,
                "modulation_order": f.modulation_order,
                "code_rate": str(f.code_rate), "scramble_seed": f.scramble_seed,
                "placement": self.placement,
            },
            "channel": {
                "snr_los_db": _num_out(ch.snr_los_db),
                "snr_secondary_db": [_num_out(v) for v in ch.snr_secondary_db],
                "paths": [{"gain": p.gain, "delay_s": p.delay, "doppler_hz": p.doppler}
                          for p in ch.paths],
                "offsets": {"sto_s": ch.offsets.sto, "cfo_hz": ch.offsets.cfo,
                            "cpo_rad": ch.offsets.cpo, "sfo_ppm": ch.offsets.sfo_ppm},
            },
            "sync": asdict(self.sync),
            "radar": {"range_pad": self.radar.range_pad,
                      "doppler_pad": self.radar.doppler_pad,
                      "detector": {"guard_bins": list(self.radar.detector.guard_bins),
                                   "threshold_db": self.radar.detector.threshold_db},
                      "pilot_fallback": self.radar.pilot_fallback},
            "experiment": asdict(self.experiment),
            "output": {"directory": self.output.directory,
                       "formats": list(self.output.formats)},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _num_out(v):
    return "inf" if v is not None and math.isinf(v) else v


def _num_in(v, key):
    if isinstance(v, str):
        if v.lower() in ("inf", "infinity", "+inf"):
            return math.inf
        raise ConfigError(f"expected a number, got {v!r}", key=key)
    if not isinstance(v, (int, float)):
        raise ConfigError(f"expected a number, got {type(v).__name__}", key=key)
    return float(v)


# -- profiles -----------------------------------------------------------------


def _base_profile(frame_kw: dict) -> dict:
    return {
        "frame": {**frame_kw, "modulation_order": 4, "code_rate": "2/3",
                  "scramble_seed": 0, "placement": "column"},
        "channel": {
            "snr_los_db": 15.0, "snr_secondary_db": [-20.0],
            "paths": [
                {"gain": None, "delay_s": 0.0, "doppler_hz": 0.0},
                {"gain": None, "delay_s": frame_kw["_target_delay_s"], "doppler_hz": 5e3},
            ],
            "offsets": {"sto_s": 0.0, "cfo_hz": 0.0, "cpo_rad": 0.0, "sfo_ppm": 0.0},
        },
        "sync": asdict(SyncSettings()),
        "radar": {"range_pad": 4, "doppler_pad": 4,
                  "detector": {"guard_bins": [12, 12], "threshold_db": 12.0},
                  "pilot_fallback": True},
        "experiment": asdict(ExperimentSettings()),
        "output": {"directory": "out", "formats": ["json", "csv", "bin", "png"]},
    }


def profile_dict(name: str) -> dict:
    if name == "table2":
        d = _base_profile({
            "n_subcarriers": 2048, "n_preamble": 10, "n_payload": 512, "cp_len": 512,
            "pilot_spacing_freq": 2, "pilot_spacing_time": 7,
            "bandwidth_hz": 1e9, "sample_rate_hz": 2e9,
            "_target_delay_s": 333.56e-9,
        })
    elif name == "desk":
        d = _base_profile({
            "n_subcarriers": 256, "n_preamble": 10, "n_payload": 64, "cp_len": 64,
            "pilot_spacing_freq": 2, "pilot_spacing_time": 7,
            "bandwidth_hz": 50e6, "sample_rate_hz": 100e6,
            "_target_delay_s": 200e-9,
        })
    else:
        raise ConfigError(f"unknown profile {name!r}", key="profile")
    d["frame"].pop("_target_delay_s")
    return d


PROFILE_NAMES = ("table2", "desk")


# -- parsing ------------------------------------------------------------------

_SECTIONS = ("frame", "channel", "sync", "radar", "experiment", "output")


def _merge(base: dict, override: dict, prefix: str = "") -> dict:
    out = dict(base)
    for k, v in override.items():
        key = f"{prefix}{k}"
        if k not in base:
            raise ConfigError("unknown configuration key", key=key)
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError("expected a section object", key=key)
            out[k] = _merge(base[k], v, prefix=key + ".")
        else:
            out[k] = v
    return out


def parse_config(data: dict | str, profile: str | None = None) -> ScenarioConfig:
    """Build a validated ScenarioConfig from a dict or JSON text.

    Values are overlaid on the chosen profile (the config's own "profile"
    key, the profile argument, or "desk"). Unknown keys are rejected with
    the offending key name.
    """
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be an object")
    data = dict(data)
    prof = data.pop("profile", profile) or "desk"
    base = profile_dict(prof)
    for k in data:
        if k not in _SECTIONS:
            raise ConfigError("unknown configuration key", key=k)
    merged = _merge(base, {k: v for k, v in data.items()})
    return _config_from_canonical(merged)


def _config_from_canonical(d: dict) -> ScenarioConfig:
    f = d["frame"]
    try:
        rate = Fraction(f["code_rate"])
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad code_rate {f['code_rate']!r}", key="frame.code_rate") from exc
    placement = f["placement"]
    if placement not in ("column", "random"):
        raise ConfigError(f"placement must be 'column' or 'random', got {placement!r}",
                          key="frame.placement")
    try:
        spec = FrameSpec(
            n_subcarriers=int(f["n_subcarriers"]), n_preamble=int(f["n_preamble"]),
            n_payload=int(f["n_payload"]), cp_len=int(f["cp_len"]),
            pilot_spacing_freq=int(f["pilot_spacing_freq"]),
            pilot_spacing_time=int(f["pilot_spacing_time"]),
            bandwidth=_num_in(f["bandwidth_hz"], "frame.bandwidth_hz"),
            sample_rate=_num_in(f["sample_rate_hz"], "frame.sample_rate_hz"),
            modulation_order=int(f["modulation_order"]), code_rate=rate,
            scramble_seed=int(f["scramble_seed"]))
    except ValueError as exc:
        raise ConfigError(str(exc), key="frame") from exc

    ch = d["channel"]
    try:
        paths = [PathModel(gain=None if p["gain"] is None else float(p["gain"]),
                           delay=_num_in(p["delay_s"], "channel.paths.delay_s"),
                           doppler=_num_in(p["doppler_hz"], "channel.paths.doppler_hz"))
                 for p in ch["paths"]]
        off = ch["offsets"]
        offsets = OffsetTuple(sto=_num_in(off["sto_s"], "channel.offsets.sto_s"),
                              cfo=_num_in(off["cfo_hz"], "channel.offsets.cfo_hz"),
                              cpo=_num_in(off["cpo_rad"], "channel.offsets.cpo_rad"),
                              sfo_ppm=_num_in(off["sfo_ppm"], "channel.offsets.sfo_ppm"))
        scenario = ChannelScenario(
            paths=paths, offsets=offsets,
            snr_los_db=_num_in(ch["snr_los_db"], "channel.snr_los_db"),
            snr_secondary_db=[_num_in(v, "channel.snr_secondary_db")
                              for v in ch["snr_secondary_db"]],
            noise_seed=0)
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), key="channel") from exc

    s = d["sync"]
    sync = SyncSettings(enabled=bool(s["enabled"]), sc_threshold=float(s["sc_threshold"]),
                        ridge_threshold_db=float(s["ridge_threshold_db"]),
                        dtp_pad_factor=int(s["dtp_pad_factor"]),
                        ddp_pad_factor=int(s["ddp_pad_factor"]),
                        resampler_taps=int(s["resampler_taps"]))
    r = d["radar"]
    radar = RadarSettings(range_pad=int(r["range_pad"]), doppler_pad=int(r["doppler_pad"]),
                          detector=DetectorSettings(
                              guard_bins=tuple(int(v) for v in r["detector"]["guard_bins"]),
                              threshold_db=float(r["detector"]["threshold_db"])),
                          pilot_fallback=bool(r["pilot_fallback"]))
    e = d["experiment"]
    experiment = ExperimentSettings(seed=int(e["seed"]), repetitions=int(e["repetitions"]),
                                    guard_symbols=int(e["guard_symbols"]),
                                    workers=int(e["workers"]))
    o = d["output"]
    formats = tuple(o["formats"])
    for fmt in formats:
        if fmt not in ("json", "csv", "bin", "png"):
            raise ConfigError(f"unknown output format {fmt!r}", key="output.formats")
    output = OutputSettings(directory=str(o["directory"]), formats=formats)
    return ScenarioConfig(frame=spec, placement=placement, channel=scenario,
                          sync=sync, radar=radar, experiment=experiment, output=output)


def load_config(path: str | Path | None, profile: str | None = None) -> ScenarioConfig:
    if path is None:
        return parse_config({}, profile=profile)
    text = Path(path).read_text()
    return parse_config(text, profile=profile)


def config_hash(config: ScenarioConfig) -> str:
    """Stable digest of the canonical configuration (machine-independent)."""
    return hashlib.sha256(config.to_json().encode()).hexdigest()[:16]


def derive_seed(master: int, *coords: int) -> int:
    """Pure function of (master seed, coordinates) -> independent seed."""
    ss = np.random.SeedSequence([int(master)] + [int(c) & 0x7FFFFFFF for c in coords])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
