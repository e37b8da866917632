"""Experiment configuration: schema, validation, and derived per-link constants.

A scenario file is YAML with units embedded in the field names (``*_hz``,
``*_w``, ``*_s``, ``*_m2`` ...). Every field has a default taken from the
reference deployment, so ``{}`` is a valid document. ``load_scenario`` checks
all physical invariants and raises an error naming the offending field;
a loaded Scenario is immutable and round-trips exactly through
``scenario_to_dict`` / ``save_scenario``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from scipy.special import ndtri

SPEED_OF_LIGHT_M_S = 2.99792458e8

# Spatial size of the encoder's bottleneck feature map: the uploaded tensor is
# 14 x 14 x c scalars per sample.
BOTTLENECK_GRID = 14 * 14


class ScenarioError(Exception):
    """Base class for configuration problems."""


class ScenarioParseError(ScenarioError):
    """The document could not be parsed at all (syntax, I/O, wrong root type)."""


class ScenarioValidationError(ScenarioError):
    """A parsed document violates an invariant; ``field`` names the culprit."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class ComputeDelayModel:
    """Distribution of the per-batch compute delay (inference plus decode), seconds.

    kinds:
      lognormal: parameterized by the mean and coefficient of variation;
      fixed:     degenerate at ``value_s`` (testing / what-if);
      empirical: resamples a measured delay list (loaded from a one-column CSV).
    """

    kind: str = "lognormal"
    mean_s: float = 0.010
    cv: float = 0.15
    value_s: float = 0.0
    samples_s: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("lognormal", "fixed", "empirical"):
            raise ScenarioValidationError("delay_dist.kind", f"unknown kind {self.kind!r}")
        if self.kind == "lognormal":
            if self.mean_s <= 0:
                raise ScenarioValidationError("delay_dist.mean_s", "must be > 0")
            if self.cv < 0:
                raise ScenarioValidationError("delay_dist.cv", "must be >= 0")
        if self.kind == "fixed" and self.value_s < 0:
            raise ScenarioValidationError("delay_dist.value_s", "must be >= 0")
        if self.kind == "empirical":
            if not self.samples_s:
                raise ScenarioValidationError("delay_dist.samples_s", "empirical kind needs samples")
            if min(self.samples_s) <= 0:
                raise ScenarioValidationError("delay_dist.samples_s", "delays must be > 0")

    def _lognormal_params(self) -> tuple[float, float]:
        # mean m, coefficient of variation v  ->  sigma^2 = ln(1+v^2), mu = ln m - sigma^2/2
        s2 = math.log1p(self.cv * self.cv)
        return math.log(self.mean_s) - 0.5 * s2, math.sqrt(s2)

    def quantile(self, q: float) -> float:
        if not 0.0 < q < 1.0:
            raise ValueError(f"quantile must be in (0,1), got {q}")
        if self.kind == "fixed":
            return self.value_s
        if self.kind == "empirical":
            return float(np.quantile(np.asarray(self.samples_s), q))
        mu, sigma = self._lognormal_params()
        return math.exp(mu + sigma * float(ndtri(q)))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n delays. Lognormal draws go through the inverse CDF of a single
        uniform block so that, at a fixed seed, samples are pointwise monotone in
        ``mean_s`` (used by the dominance property tests)."""
        if self.kind == "fixed":
            return np.full(n, self.value_s)
        if self.kind == "empirical":
            vals = np.asarray(self.samples_s)
            return vals[rng.integers(0, len(vals), size=n)]
        mu, sigma = self._lognormal_params()
        u = rng.random(n)
        return np.exp(mu + sigma * ndtri(u))

    def mean(self) -> float:
        if self.kind == "fixed":
            return self.value_s
        if self.kind == "empirical":
            return float(np.mean(self.samples_s))
        return self.mean_s


@dataclass(frozen=True)
class InferenceModelProfile:
    name: str
    gflops: float
    delay_dist: ComputeDelayModel
    delay_quantile_for_planning: float = 0.98
    # (c, per-sample accuracy) pairs, sorted by c
    accuracy_curve: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        if not self.name:
            raise ScenarioValidationError("models.name", "must be nonempty")
        if self.gflops <= 0:
            raise ScenarioValidationError(f"models[{self.name}].gflops", "must be > 0")
        if not 0.0 < self.delay_quantile_for_planning < 1.0:
            raise ScenarioValidationError(
                f"models[{self.name}].delay_quantile_for_planning", "must be in (0,1)")
        last = -1
        for c, acc in self.accuracy_curve:
            if c <= last:
                raise ScenarioValidationError(
                    f"models[{self.name}].accuracy_curve", "keys must be strictly increasing")
            last = c
            if not 0.0 <= acc <= 1.0:
                raise ScenarioValidationError(
                    f"models[{self.name}].accuracy_curve[{c}]", f"accuracy {acc} outside [0,1]")
        accs = [a for _, a in self.accuracy_curve]
        if any(b < a for a, b in zip(accs, accs[1:])):
            warnings.warn(
                f"model {self.name}: accuracy_curve not non-decreasing in c",
                stacklevel=2)

    def accuracy_for(self, c: int) -> float:
        for ck, acc in self.accuracy_curve:
            if ck == c:
                return acc
        raise KeyError(f"model {self.name} has no accuracy entry for c={c}")


@dataclass(frozen=True)
class Requirements:
    crb_theta_th_rad2: float
    r_dl_th_bps: float
    l_max_s: float
    q_min: int

    def __post_init__(self):
        for name in ("crb_theta_th_rad2", "r_dl_th_bps", "l_max_s"):
            if getattr(self, name) <= 0:
                raise ScenarioValidationError(f"requirements.{name}", "must be > 0")
        if self.q_min <= 0:
            raise ScenarioValidationError("requirements.q_min", "must be > 0")


@dataclass(frozen=True)
class Positions:
    bs_m: tuple[float, float]
    device_m: tuple[float, float]
    user_m: tuple[float, float]
    target_m: tuple[float, float]


@dataclass(frozen=True)
class Scenario:
    carrier_freq_hz: float
    sc_spacing_hz: float
    num_sc: int
    frame_duration_s: float
    n_tx: int
    n_rx: int
    noise_psd_dbm_hz: float
    noise_figure_db: float
    pathloss_exp: float
    positions: Positions
    p_ul_total_w: float
    p_dl_max_w: float
    rcs_m2: float
    requirements: Requirements
    models: tuple[InferenceModelProfile, ...]
    bottleneck_set: tuple[int, ...]
    batch_size: int
    bits_per_scalar: int
    sigma_grid: tuple[float, ...]
    total_bandwidth_hz: float | None = None
    mc_trials: int = 10_000
    element_spacing_wavelengths: float = 0.5
    random_phase: bool = False

    def __post_init__(self):
        positive = dict(
            carrier_freq_hz=self.carrier_freq_hz, sc_spacing_hz=self.sc_spacing_hz,
            frame_duration_s=self.frame_duration_s, p_ul_total_w=self.p_ul_total_w,
            p_dl_max_w=self.p_dl_max_w, rcs_m2=self.rcs_m2,
            pathloss_exp=self.pathloss_exp,
            element_spacing_wavelengths=self.element_spacing_wavelengths,
        )
        for name, val in positive.items():
            if val <= 0:
                raise ScenarioValidationError(name, "must be > 0")
        for name, val in dict(num_sc=self.num_sc, n_tx=self.n_tx, n_rx=self.n_rx,
                              batch_size=self.batch_size, bits_per_scalar=self.bits_per_scalar,
                              mc_trials=self.mc_trials).items():
            if int(val) < 1:
                raise ScenarioValidationError(name, "must be a positive integer")
        if not self.bottleneck_set:
            raise ScenarioValidationError("bottleneck_set", "must be nonempty")
        if any(b <= a for a, b in zip(self.bottleneck_set, self.bottleneck_set[1:])):
            raise ScenarioValidationError("bottleneck_set", "must be strictly increasing")
        if any(c < 1 for c in self.bottleneck_set):
            raise ScenarioValidationError("bottleneck_set", "entries must be >= 1")
        if not self.sigma_grid:
            raise ScenarioValidationError("sigma_grid", "must be nonempty")
        for s in self.sigma_grid:
            if not 0.0 <= s <= 1.0:
                raise ScenarioValidationError("sigma_grid", f"sigma {s} outside [0,1]")
        if not self.models:
            raise ScenarioValidationError("models", "must register at least one model")
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise ScenarioValidationError("models", "duplicate model names")
        if self.requirements.q_min > self.batch_size:
            raise ScenarioValidationError("requirements.q_min",
                                          f"exceeds batch_size {self.batch_size}")
        # every model must grade every representation the sweep can choose
        for m in self.models:
            have = {c for c, _ in m.accuracy_curve}
            missing = [c for c in self.bottleneck_set if c not in have]
            if missing:
                raise ScenarioValidationError(
                    f"models[{m.name}].accuracy_curve",
                    f"missing entries for bottleneck dims {missing}")
        if self.total_bandwidth_hz is not None:
            got = self.num_sc * self.sc_spacing_hz
            if abs(got - self.total_bandwidth_hz) > self.sc_spacing_hz:
                raise ScenarioValidationError(
                    "total_bandwidth_hz",
                    f"num_sc*sc_spacing = {got:.6g} differs from {self.total_bandwidth_hz:.6g} "
                    "by more than one subcarrier spacing")

    def model_by_name(self, name: str) -> InferenceModelProfile:
        for m in self.models:
            if m.name == name:
                return m
        raise KeyError(f"no model named {name!r} "
                       f"(registered: {[m.name for m in self.models]})")

    def heaviest_model(self) -> InferenceModelProfile:
        return max(self.models, key=lambda m: (m.gflops, m.name))


@dataclass(frozen=True)
class DerivedConstants:
    noise_psd_w_per_hz: float     # thermal PSD with the receiver noise figure folded in
    noise_power_w_per_sc: float   # the above times the subcarrier spacing
    wavelength_m: float
    distances_m: dict[str, float] = field(default_factory=dict)  # keys: ul, dl, target


# Reference deployment. A scenario document only needs to override what differs.
_DEFAULT_MODELS = (
    dict(name="mobilenet_v3_small", gflops=0.12,
         delay_dist=dict(kind="lognormal", mean_s=0.010, cv=0.15),
         accuracy_curve={4: 0.58, 8: 0.66, 16: 0.70, 32: 0.72}),
    dict(name="resnet50", gflops=8.18,
         delay_dist=dict(kind="lognormal", mean_s=0.014, cv=0.15),
         accuracy_curve={4: 0.64, 8: 0.72, 16: 0.78, 32: 0.80}),
    dict(name="vit_b_16", gflops=33.7,
         delay_dist=dict(kind="lognormal", mean_s=0.036, cv=0.10),
         accuracy_curve={4: 0.68, 8: 0.76, 16: 0.82, 32: 0.85}),
)

_DEFAULTS: dict = {
    "carrier_freq_hz": 10e9,
    "sc_spacing_hz": 30e3,
    "num_sc": 1666,
    "frame_duration_s": 0.010,
    "n_tx": 16,
    "n_rx": 16,
    "noise_psd_dbm_hz": -174.0,
    "noise_figure_db": 10.0,
    "pathloss_exp": 2.5,
    "positions": dict(bs_m=[0.0, 0.0], device_m=[0.0, 80.0],
                      user_m=[50.0, 55.0], target_m=[20.0, 20.0]),
    "p_ul_total_w": 0.1,
    "p_dl_max_w": 0.5,
    "rcs_m2": 1.0,
    "requirements": dict(
        # (0.3 deg)^2 in rad^2
        crb_theta_th_rad2=(0.3 * math.pi / 180.0) ** 2,
        r_dl_th_bps=200e6,
        l_max_s=0.050,
        q_min=11,
    ),
    "models": _DEFAULT_MODELS,
    "bottleneck_set": [4, 8, 16, 32],
    "batch_size": 16,
    "bits_per_scalar": 32,
    "sigma_grid_points": 101,
    "total_bandwidth_hz": None,
    "mc_trials": 10_000,
    "element_spacing_wavelengths": 0.5,
    "random_phase": False,
}


def _require_mapping(obj, field_name: str) -> dict:
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise ScenarioValidationError(field_name, f"expected a mapping, got {type(obj).__name__}")
    return obj


def _reject_unknown(d: dict, known, field_name: str):
    unknown = sorted(set(d) - set(known))
    if unknown:
        raise ScenarioValidationError(field_name, f"unknown field(s): {', '.join(unknown)}")


def _delay_model_from_dict(d: dict, base_dir: Path | None, model_name: str) -> ComputeDelayModel:
    d = _require_mapping(d, f"models[{model_name}].delay_dist")
    _reject_unknown(d, ("kind", "mean_s", "cv", "value_s", "csv_path", "samples_s"),
                    f"models[{model_name}].delay_dist")
    kind = d.get("kind", "lognormal")
    samples: tuple[float, ...] = tuple(d.get("samples_s", ()))
    if "csv_path" in d:
        p = Path(d["csv_path"])
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        try:
            text = p.read_text()
        except OSError as e:
            raise ScenarioParseError(f"cannot read delay CSV {p}: {e}") from e
        vals = [float(line) for line in text.splitlines() if line.strip()]
        samples = tuple(vals)
        kind = "empirical"
    return ComputeDelayModel(kind=kind, mean_s=float(d.get("mean_s", 0.010)),
                             cv=float(d.get("cv", 0.15)),
                             value_s=float(d.get("value_s", 0.0)),
                             samples_s=samples)


def _model_from_dict(d: dict, base_dir: Path | None) -> InferenceModelProfile:
    d = _require_mapping(d, "models[]")
    _reject_unknown(d, ("name", "gflops", "delay_dist", "delay_quantile_for_planning",
                        "accuracy_curve"), "models[]")
    name = str(d.get("name", ""))
    curve_map = _require_mapping(d.get("accuracy_curve", {}), f"models[{name}].accuracy_curve")
    curve = tuple(sorted((int(c), float(a)) for c, a in curve_map.items()))
    return InferenceModelProfile(
        name=name,
        gflops=float(d.get("gflops", 0.0)),
        delay_dist=_delay_model_from_dict(d.get("delay_dist", {}), base_dir, name),
        delay_quantile_for_planning=float(d.get("delay_quantile_for_planning", 0.98)),
        accuracy_curve=curve,
    )


def _positions_from_dict(d: dict) -> Positions:
    d = _require_mapping(d, "positions")
    _reject_unknown(d, ("bs_m", "device_m", "user_m", "target_m"), "positions")
    out = {}
    for key in ("bs_m", "device_m", "user_m", "target_m"):
        raw = d.get(key, _DEFAULTS["positions"][key])
        if not isinstance(raw, (list, tuple)) or len(raw) != 2:
            raise ScenarioValidationError(f"positions.{key}", "expected [x, y] in meters")
        out[key] = (float(raw[0]), float(raw[1]))
    return Positions(**out)


def scenario_from_dict(doc: dict, base_dir: Path | None = None) -> Scenario:
    doc = _require_mapping(doc, "<root>")
    _reject_unknown(doc, set(_DEFAULTS) | {"sigma_grid"}, "<root>")
    merged = {**_DEFAULTS, **doc}

    if "sigma_grid" in doc:
        sigma_grid = tuple(float(s) for s in doc["sigma_grid"])
    else:
        npts = int(merged["sigma_grid_points"])
        if npts < 1:
            raise ScenarioValidationError("sigma_grid_points", "must be >= 1")
        # plain floats so the grid survives yaml round-trips
        sigma_grid = tuple(float(x) for x in np.linspace(0.0, 1.0, npts)) \
            if npts > 1 else (1.0,)

    req = _require_mapping(merged["requirements"], "requirements")
    _reject_unknown(req, ("crb_theta_th_rad2", "r_dl_th_bps", "l_max_s", "q_min"),
                    "requirements")
    req = {**_DEFAULTS["requirements"], **req}

    models_raw = merged["models"]
    if not isinstance(models_raw, (list, tuple)):
        raise ScenarioValidationError("models", "expected a list of model profiles")

    tb = merged["total_bandwidth_hz"]
    return Scenario(
        carrier_freq_hz=float(merged["carrier_freq_hz"]),
        sc_spacing_hz=float(merged["sc_spacing_hz"]),
        num_sc=int(merged["num_sc"]),
        frame_duration_s=float(merged["frame_duration_s"]),
        n_tx=int(merged["n_tx"]),
        n_rx=int(merged["n_rx"]),
        noise_psd_dbm_hz=float(merged["noise_psd_dbm_hz"]),
        noise_figure_db=float(merged["noise_figure_db"]),
        pathloss_exp=float(merged["pathloss_exp"]),
        positions=_positions_from_dict(merged["positions"]),
        p_ul_total_w=float(merged["p_ul_total_w"]),
        p_dl_max_w=float(merged["p_dl_max_w"]),
        rcs_m2=float(merged["rcs_m2"]),
        requirements=Requirements(
            crb_theta_th_rad2=float(req["crb_theta_th_rad2"]),
            r_dl_th_bps=float(req["r_dl_th_bps"]),
            l_max_s=float(req["l_max_s"]),
            q_min=int(req["q_min"])),
        models=tuple(_model_from_dict(m, base_dir) for m in models_raw),
        bottleneck_set=tuple(int(c) for c in merged["bottleneck_set"]),
        batch_size=int(merged["batch_size"]),
        bits_per_scalar=int(merged["bits_per_scalar"]),
        sigma_grid=sigma_grid,
        total_bandwidth_hz=None if tb is None else float(tb),
        mc_trials=int(merged["mc_trials"]),
        element_spacing_wavelengths=float(merged["element_spacing_wavelengths"]),
        random_phase=bool(merged["random_phase"]),
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ScenarioParseError(f"cannot read {path}: {e}") from e
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ScenarioParseError(f"{path}: {e}") from e
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ScenarioParseError(f"{path}: document root must be a mapping")
    return scenario_from_dict(doc, base_dir=path.parent)


def _delay_model_to_dict(dm: ComputeDelayModel) -> dict:
    if dm.kind == "lognormal":
        return dict(kind=dm.kind, mean_s=dm.mean_s, cv=dm.cv)
    if dm.kind == "fixed":
        return dict(kind=dm.kind, value_s=dm.value_s)
    return dict(kind=dm.kind, samples_s=list(dm.samples_s))


def scenario_to_dict(s: Scenario) -> dict:
    return dict(
        carrier_freq_hz=s.carrier_freq_hz,
        sc_spacing_hz=s.sc_spacing_hz,
        num_sc=s.num_sc,
        frame_duration_s=s.frame_duration_s,
        n_tx=s.n_tx,
        n_rx=s.n_rx,
        noise_psd_dbm_hz=s.noise_psd_dbm_hz,
        noise_figure_db=s.noise_figure_db,
        pathloss_exp=s.pathloss_exp,
        positions=dict(bs_m=list(s.positions.bs_m), device_m=list(s.positions.device_m),
                       user_m=list(s.positions.user_m), target_m=list(s.positions.target_m)),
        p_ul_total_w=s.p_ul_total_w,
        p_dl_max_w=s.p_dl_max_w,
        rcs_m2=s.rcs_m2,
        requirements=dict(crb_theta_th_rad2=s.requirements.crb_theta_th_rad2,
                          r_dl_th_bps=s.requirements.r_dl_th_bps,
                          l_max_s=s.requirements.l_max_s,
                          q_min=s.requirements.q_min),
        models=[dict(name=m.name, gflops=m.gflops,
                     delay_dist=_delay_model_to_dict(m.delay_dist),
                     delay_quantile_for_planning=m.delay_quantile_for_planning,
                     accuracy_curve={c: a for c, a in m.accuracy_curve})
                for m in s.models],
        bottleneck_set=list(s.bottleneck_set),
        batch_size=s.batch_size,
        bits_per_scalar=s.bits_per_scalar,
        sigma_grid=list(s.sigma_grid),
        total_bandwidth_hz=s.total_bandwidth_hz,
        mc_trials=s.mc_trials,
        element_spacing_wavelengths=s.element_spacing_wavelengths,
        random_phase=s.random_phase,
    )


def save_scenario(s: Scenario, path: str | Path):
    Path(path).write_text(yaml.safe_dump(scenario_to_dict(s), sort_keys=False))


def derived_constants(s: Scenario) -> DerivedConstants:
    psd = 10.0 ** ((s.noise_psd_dbm_hz + s.noise_figure_db) / 10.0) * 1e-3
    bs = np.asarray(s.positions.bs_m)
    dists = {
        "ul": float(np.linalg.norm(np.asarray(s.positions.device_m) - bs)),
        "dl": float(np.linalg.norm(np.asarray(s.positions.user_m) - bs)),
        "target": float(np.linalg.norm(np.asarray(s.positions.target_m) - bs)),
    }
    return DerivedConstants(
        noise_psd_w_per_hz=psd,
        noise_power_w_per_sc=psd * s.sc_spacing_hz,
        wavelength_m=SPEED_OF_LIGHT_M_S / s.carrier_freq_hz,
        distances_m=dists,
    )
