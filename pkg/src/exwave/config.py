"""TOML configuration for the experiments and the CLI.

Sections: [grid] (spacing), [obstacle], [sigma], [q0], [q1], [[patch]],
[sim] (box, sponge, stepping, truncation), [speed], [data.*] (field presets),
[recon] (recovery controls), [decay], [contrast], [output], [experiment].
The README documents the schema; configs/ holds the canonical files.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ValidationError
from .fields import (
    BumpProfile,
    IndicatorProfile,
    SeparatedData,
    radial_bump,
    separated_gaussian,
    smooth_cutoff,
)
from .geometry import (
    Box,
    BoxObstacle,
    DomainSpec,
    NoObstacle,
    PatchSpec,
    RadialObstacle,
    SphereObstacle,
    build_domain,
)
from .outputs import config_hash as _hash
from .wavesim import InitialData, SimSettings, SpeedField, make_initial_data, uniform_speed


def load_toml(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"config file not found: {p}")
    with open(p, "rb") as fh:
        return tomllib.load(fh)


# ---------------------------------------------------------------------------
# section parsers


def _box(section: dict, name: str) -> Box:
    try:
        return Box(tuple(section["lo"]), tuple(section["hi"]))
    except KeyError as e:
        raise ValidationError(f"section [{name}] needs lo and hi") from e


def parse_obstacle(section: Optional[dict]):
    if not section or section.get("variant", "none") == "none":
        return NoObstacle()
    variant = section["variant"]
    if variant == "sphere":
        return SphereObstacle(center=tuple(section["center"]),
                              radius=float(section["radius"]))
    if variant == "box":
        return BoxObstacle(Box(tuple(section["lo"]), tuple(section["hi"])))
    if variant == "radial":
        radii = np.asarray(section["radii"], dtype=float)
        if radii.ndim == 1:
            radii = radii.reshape(section["n_theta"], -1)
        return RadialObstacle(center=tuple(section.get("center", (0.0, 0.0, 0.0))),
                              radii=radii)
    raise ValidationError(f"unknown obstacle variant {variant!r}")


def parse_domain(raw: dict) -> DomainSpec:
    for key in ("grid", "sigma", "q0", "q1", "sim"):
        if key not in raw:
            raise ValidationError(f"config is missing the [{key}] section")
    sim = raw["sim"]
    patches = [
        PatchSpec(face=p["face"],
                  lo=tuple(p["lo"]) if "lo" in p else None,
                  hi=tuple(p["hi"]) if "hi" in p else None)
        for p in raw.get("patch", [{"face": "x+"}])
    ]
    return build_domain(
        obstacle=parse_obstacle(raw.get("obstacle")),
        sigma=_box(raw["sigma"], "sigma"),
        q0=_box(raw["q0"], "q0"),
        q1=_box(raw["q1"], "q1"),
        patches=patches,
        sim_box=Box(tuple(sim["box_lo"]), tuple(sim["box_hi"])),
        h=float(raw["grid"]["h"]),
        sponge_width=float(sim.get("sponge_width", 0.0)),
    )


def _profile(section: dict):
    kind = section.get("kind", "bump")
    if kind == "indicator":
        return IndicatorProfile(float(section["a"]), float(section["b"]))
    if kind == "bump":
        return BumpProfile(
            float(section["a"]), float(section["b"]),
            sigma=float(section["sigma"]),
            cut_fraction=float(section.get("cut_fraction", 0.72)),
        )
    raise ValidationError(f"unknown profile kind {kind!r}")


@dataclass(frozen=True)
class FieldSpec:
    """One initial-data component built from a named preset."""

    kind: str
    params: dict

    def separated(self) -> Optional[SeparatedData]:
        if self.kind == "separated_gaussian":
            p = self.params
            return separated_gaussian(
                sigma=float(p["sigma"]), amplitude=float(p.get("amplitude", 1.0)),
                profile=_profile(p["profile"]),
                cut_on=float(p["cut_on"]), cut_off=float(p["cut_off"]),
            )
        if self.kind == "separated_plateau":
            p = self.params
            prof = _profile(p["profile"])
            r_on, r_off = float(p["r_on"]), float(p["r_off"])
            amp = float(p.get("amplitude", 1.0))

            def plane(x1, x2):
                r = np.sqrt(np.asarray(x1) ** 2 + np.asarray(x2) ** 2)
                return amp * smooth_cutoff(r, r_on, r_off)

            return SeparatedData(plane_func=plane, profile=prof)
        return None

    def build(self, domain: DomainSpec) -> Optional[np.ndarray]:
        if self.kind == "zero":
            return None
        sep = self.separated()
        if sep is not None:
            return sep.assemble(domain)
        if self.kind == "bump":
            p = self.params
            X, Y, Z = domain.grid.meshgrid()
            return radial_bump(X, Y, Z, center=tuple(p["center"]),
                               radius=float(p["radius"]),
                               amplitude=float(p.get("amplitude", 1.0)))
        if self.kind == "gaussian":
            p = self.params
            X, Y, Z = domain.grid.meshgrid()
            c = tuple(p["center"])
            r2 = (X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2
            vals = float(p.get("amplitude", 1.0)) * np.exp(
                -r2 / (2 * float(p["sigma"]) ** 2)
            )
            return vals * smooth_cutoff(np.sqrt(r2), float(p["cut_on"]),
                                        float(p["cut_off"]))
        raise ValidationError(f"unknown data preset {self.kind!r}")


def parse_field(section: Optional[dict]) -> FieldSpec:
    if not section:
        return FieldSpec(kind="zero", params={})
    kind = section.get("kind", "zero")
    return FieldSpec(kind=kind, params=dict(section))


def parse_speed(section: Optional[dict], domain: DomainSpec) -> SpeedField:
    if not section or section.get("kind", "uniform") == "uniform":
        return uniform_speed()
    if section["kind"] == "contrast":
        return contrast_speed(domain, **{k: v for k, v in section.items() if k != "kind"})
    raise ValidationError(f"unknown speed kind {section['kind']!r}")


def _transverse_contrast_profile(rp: np.ndarray, section: dict) -> np.ndarray:
    shape = section.get("shape", "plateau")
    if shape == "plateau":
        return smooth_cutoff(rp, float(section["r_on"]), float(section["r_off"]))
    if shape == "gaussian":
        sigma = float(section["sigma"])
        return np.exp(-(rp**2) / (2 * sigma**2)) * smooth_cutoff(
            rp, float(section["cut_on"]), float(section["cut_off"])
        )
    raise ValidationError(f"unknown contrast shape {shape!r}")


def contrast_speed(
    domain: DomainSpec,
    beta: float,
    chi_on: float,
    chi_off: float,
    rho0: float,
    center: tuple[float, float] = (0.0, 0.0),
    **shape_params,
) -> SpeedField:
    """Inverse-square-speed perturbation 1 + beta * profile(x') * chi(x3):
    a transverse plateau or truncated Gaussian times an axial window chi
    (1 inside chi_on), all supported in the background ball of radius rho0."""
    X, Y, Z = domain.grid.meshgrid()
    rp = np.sqrt((X - center[0]) ** 2 + (Y - center[1]) ** 2)
    c2_inv = 1.0 + beta * _transverse_contrast_profile(rp, shape_params) * smooth_cutoff(
        np.abs(Z), chi_on, chi_off
    )
    if np.any(c2_inv <= 0):
        raise ValidationError("speed perturbation makes inverse-square speed nonpositive")
    values = 1.0 / np.sqrt(c2_inv)
    values = np.ascontiguousarray(np.broadcast_to(values, domain.grid.dims))
    from .wavesim import speed_from_values

    return speed_from_values(domain, values, rho0=rho0)


# ---------------------------------------------------------------------------
# experiment configurations


@dataclass
class BaseConfig:
    name: str
    raw: dict
    domain: DomainSpec
    speed: SpeedField
    seed: int
    t_final: float
    dt_factor: float
    dt: Optional[float]
    taper_width: Optional[float]
    adaptive_stop: bool
    sponge_strength: Optional[float]
    out_dir: str

    def config_hash(self) -> str:
        return _hash({"name": self.name, "config": self.raw, "seed": self.seed})

    def sim_settings(self, speed: Optional[SpeedField] = None) -> SimSettings:
        return SimSettings(
            t_final=self.t_final,
            dt_factor=self.dt_factor,
            dt=self.dt,
            sponge_strength=self.sponge_strength,
        )


def _base_kwargs(name: str, raw: dict, seed_override: Optional[int]) -> dict:
    domain = parse_domain(raw)
    sim = raw["sim"]
    seed = int(seed_override if seed_override is not None
               else raw.get("experiment", {}).get("seed", 0))
    return dict(
        name=name,
        raw=raw,
        domain=domain,
        speed=parse_speed(raw.get("speed"), domain),
        seed=seed,
        t_final=float(sim["t_final"]),
        dt_factor=float(sim.get("dt_factor", 0.9)),
        dt=float(sim["dt"]) if "dt" in sim else None,
        taper_width=float(sim["taper_width"]) if "taper_width" in sim else None,
        adaptive_stop=bool(sim.get("adaptive_stop", False)),
        sponge_strength=(float(sim["sponge_strength"])
                         if "sponge_strength" in sim else None),
        out_dir=raw.get("output", {}).get("dir", "out"),
    )


@dataclass
class DecayConfig(BaseConfig):
    f_spec: FieldSpec = dc_field(default_factory=lambda: FieldSpec("zero", {}))
    g_spec: FieldSpec = dc_field(default_factory=lambda: FieldSpec("zero", {}))
    clearing_time: float = 0.0
    fit_window: Optional[tuple[float, float]] = None
    assert_decay: bool = True
    snapshot_times: tuple = ()

    def initial_data(self, domain) -> InitialData:
        return make_initial_data(domain, f=self.f_spec.build(domain),
                                 g=self.g_spec.build(domain))


@dataclass
class EndToEndConfig(BaseConfig):
    f_spec: FieldSpec = dc_field(default_factory=lambda: FieldSpec("zero", {}))
    g_spec: FieldSpec = dc_field(default_factory=lambda: FieldSpec("zero", {}))
    f_tilde_spec: FieldSpec = dc_field(default_factory=lambda: FieldSpec("zero", {}))
    g_tilde_spec: FieldSpec = dc_field(default_factory=lambda: FieldSpec("zero", {}))
    rho_list: tuple = (4.0, 8.0, 12.0, 16.0, 20.0)
    rho_max: float = 20.0
    sign: int = -1
    noise_eps: tuple = (0.0,)
    pairing_mode: str = "sbp"
    residual_region: str = "q0"
    dump_fields: bool = True

    def difference_data(self, domain) -> InitialData:
        def diff(a: FieldSpec, b: FieldSpec):
            fa, fb = a.build(domain), b.build(domain)
            if fa is None:
                return None if fb is None else -fb
            return fa if fb is None else fa - fb

        return make_initial_data(domain, f=diff(self.f_spec, self.f_tilde_spec),
                                 g=diff(self.g_spec, self.g_tilde_spec))

    def separated_truths(self, domain) -> dict[int, SeparatedData]:
        out = {}
        gsep = self.g_spec.separated()
        if gsep is not None and self.g_tilde_spec.kind == "zero":
            out[0] = gsep
        fsep = self.f_spec.separated()
        if fsep is not None and self.f_tilde_spec.kind == "zero":
            out[1] = fsep
        if not out:
            raise ValidationError(
                "end-to-end recovery needs at least one separated data component"
            )
        return out


@dataclass
class SpeedContrastConfig(BaseConfig):
    f_spec: FieldSpec = dc_field(default_factory=lambda: FieldSpec("zero", {}))
    g_spec: FieldSpec = dc_field(default_factory=lambda: FieldSpec("zero", {}))
    speed_ref: SpeedField = dc_field(default_factory=uniform_speed)
    rho_max: float = 16.0
    rho_contrast: float = 12.0
    sign: int = -1
    pairing_mode: str = "sbp"
    mask_threshold: float = 0.5
    noise_floor: float = 1e-12

    def initial_data(self, domain) -> InitialData:
        return make_initial_data(domain, f=self.f_spec.build(domain),
                                 g=self.g_spec.build(domain))

    def separated_q_truth(self, domain) -> SeparatedData:
        gsep = self.g_spec.separated()
        if gsep is None:
            raise ValidationError("speed-contrast recovery needs separated velocity data")
        return gsep

    def reference_plane(self, x1, x2) -> np.ndarray:
        gsep = self.g_spec.separated()
        return np.asarray(gsep.plane_truth(np.asarray(x1)[:, None],
                                           np.asarray(x2)[None, :]))

    def contrast_mask(self, x1, x2, ref_plane) -> np.ndarray:
        return np.abs(ref_plane) >= self.mask_threshold

    def true_speed_plane(self, x1, x2) -> np.ndarray:
        sp = self.raw.get("speed", {})
        if sp.get("kind", "uniform") == "uniform":
            return np.ones((len(x1), len(x2)))
        beta = float(sp["beta"])
        center = tuple(sp.get("center", (0.0, 0.0)))
        X1, X2 = np.meshgrid(np.asarray(x1), np.asarray(x2), indexing="ij")
        rp = np.sqrt((X1 - center[0]) ** 2 + (X2 - center[1]) ** 2)
        profile = _transverse_contrast_profile(rp, sp)
        return 1.0 / np.sqrt(1.0 + beta * profile)


def _data_specs(raw: dict) -> dict[str, FieldSpec]:
    data = raw.get("data", {})
    return {
        "f": parse_field(data.get("f")),
        "g": parse_field(data.get("g")),
        "f_tilde": parse_field(data.get("f_tilde")),
        "g_tilde": parse_field(data.get("g_tilde")),
    }


def decay_config(raw: dict, seed: Optional[int] = None) -> DecayConfig:
    kw = _base_kwargs("decay", raw, seed)
    specs = _data_specs(raw)
    d = raw.get("decay", {})
    return DecayConfig(
        **kw,
        f_spec=specs["f"],
        g_spec=specs["g"],
        clearing_time=float(d.get("clearing_time", 0.0)),
        fit_window=tuple(d["fit_window"]) if "fit_window" in d else None,
        assert_decay=bool(d.get("assert", True)),
        snapshot_times=tuple(raw.get("sim", {}).get("snapshot_times", ())),
    )


def end_to_end_config(raw: dict, seed: Optional[int] = None,
                      name: str = "end-to-end") -> EndToEndConfig:
    kw = _base_kwargs(name, raw, seed)
    specs = _data_specs(raw)
    r = raw.get("recon", {})
    return EndToEndConfig(
        **kw,
        f_spec=specs["f"],
        g_spec=specs["g"],
        f_tilde_spec=specs["f_tilde"],
        g_tilde_spec=specs["g_tilde"],
        rho_list=tuple(float(v) for v in r.get("rho_list", (4, 8, 12, 16, 20))),
        rho_max=float(r.get("rho_max", max(r.get("rho_list", [20])))),
        sign=int(r.get("sign", -1)),
        noise_eps=tuple(float(v) for v in r.get("noise_eps", (0.0,))),
        pairing_mode={"full": "sbp"}.get(str(r.get("mode", "sbp")),
                                         str(r.get("mode", "sbp"))),
        residual_region=str(r.get("residual_region", "q0")),
        dump_fields=bool(r.get("dump_fields", True)),
    )


def speed_contrast_config(raw: dict, seed: Optional[int] = None) -> SpeedContrastConfig:
    kw = _base_kwargs("speed-contrast", raw, seed)
    specs = _data_specs(raw)
    c = raw.get("contrast", {})
    r = raw.get("recon", {})
    return SpeedContrastConfig(
        **kw,
        f_spec=specs["f"],
        g_spec=specs["g"],
        speed_ref=uniform_speed(),
        rho_max=float(r.get("rho_max", 16.0)),
        rho_contrast=float(c.get("rho", 12.0)),
        sign=int(r.get("sign", -1)),
        pairing_mode=str(r.get("mode", "sbp")),
        mask_threshold=float(c.get("mask_threshold", 0.5)),
        noise_floor=float(c.get("noise_floor", 1e-12)),
    )
