"""Scenario configuration, initial data and orchestration of experiments."""

from __future__ import annotations

import copy
import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .analysis import (
    NormSeries,
    calibrated_constant,
    continuation_monitor,
    l2_norm,
    thresholds,
    wiener_norm,
)
from .dynamics import (
    BlowUpError,
    StepperConfig,
    complex_shift_solve,
    integrate,
    picard_mild_solve,
)
from .io import read_spectra, write_spectra
from .linear import I_norm_bound, l1_l2_multiplier_check, smoothing_check, smoothing_constant
from .spectral import SpectralField, TorusSpec, build_symbol_table

__all__ = [
    "SCHEMA_VERSION",
    "EXPERIMENTS",
    "ConfigError",
    "ScenarioConfig",
    "RunManifest",
    "make_initial_data",
    "random_gradient_field",
    "run_scenario",
    "run_many",
]

SCHEMA_VERSION = 1
EXPERIMENTS = ("simulate", "picard", "complex_shift", "modes", "thresholds", "estimates")
DATA_KINDS = ("zero", "single_mode", "random_envelope", "file")
EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP = 0, 2, 3


class ConfigError(ValueError):
    """Invalid scenario configuration (maps to exit code 2)."""


def _defaults():
    return {
        "schema_version": SCHEMA_VERSION,
        "name": "scenario",
        "domain": {"L1": float(np.pi), "L2": float(np.pi), "N1": 64, "N2": 64},
        "initial_data": {
            "kind": "random_envelope",
            "amplitude": 0.01,
            "spectral_exponent": 2.0,
            "seed": 0,
            "zero_mean": True,
            "gradient": True,
            "normalize": None,
            "mode": [1, 0],
            "path": None,
        },
        "stepper": {"dt": 1e-3, "T": 1.0, "dealias": "two_thirds", "scheme": "IFRK4"},
        "experiment": "simulate",
        "alpha": 1.0,
        "alpha_vec": None,
        "horizon": None,
        "n_levels": 10,
        "max_iters": 50,
        "M": None,
        "min_shells": 6,
        "outputs": {"dir": "ks2d_out", "csv_path": None, "spectra_every": 0, "save_every": 1},
    }


def _merge(base, over):
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = v
    return base


@dataclass
class ScenarioConfig:
    """Declarative experiment description; see :func:`ScenarioConfig.from_dict`."""

    data: dict = field(default_factory=_defaults)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(_defaults())
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(_merge(_defaults(), copy.deepcopy(d)))
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def to_json(self, path=None):
        text = json.dumps(self.data, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @property
    def sha256(self):
        return hashlib.sha256(json.dumps(self.data, sort_keys=True).encode()).hexdigest()

    def __getitem__(self, key):
        return self.data[key]

    @property
    def spec(self):
        d = self.data["domain"]
        return TorusSpec(float(d["L1"]), float(d["L2"]), int(d["N1"]), int(d["N2"]))

    @property
    def stepper(self):
        s = self.data["stepper"]
        return StepperConfig(dt=float(s["dt"]), T=float(s["T"]), scheme=s.get("scheme", "IFRK4"),
                             dealias=s.get("dealias", "two_thirds"),
                             save_every=int(self.data["outputs"].get("save_every", 1)))

    def validate(self):
        d = self.data
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {d.get('schema_version')}")
        if d["experiment"] not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {d['experiment']!r}")
        init = d["initial_data"]
        if init["kind"] not in DATA_KINDS:
            raise ConfigError(f"initial_data.kind must be one of {DATA_KINDS}, got {init['kind']!r}")
        if init["kind"] == "file" and not init.get("path"):
            raise ConfigError("initial_data.kind='file' needs initial_data.path")
        if init.get("normalize") not in (None, "wiener0", "l2"):
            raise ConfigError("initial_data.normalize must be null, 'wiener0' or 'l2'")
        if not init.get("gradient", True):
            raise ConfigError("only gradient-type data is supported (initial_data.gradient=true)")
        try:
            self.spec
            if d["experiment"] in ("simulate", "picard", "complex_shift"):
                self.stepper
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        if d["alpha_vec"] is not None and len(d["alpha_vec"]) != 2:
            raise ConfigError("alpha_vec must have two entries")
        out = d["outputs"]["dir"]
        parent = os.path.abspath(out)
        while not os.path.exists(parent):
            parent = os.path.dirname(parent)
        if not os.access(parent, os.W_OK):
            raise ConfigError(f"output directory {out!r} is not writable")


def random_gradient_field(spec, amplitude, p, seed=0, normalize=None):
    """Gradient data ``u = grad(phi)`` with random phases and a power-law envelope.

    ``phihat(k) = a |kt|^(-p-1) exp(i theta(k))``, so the velocity coefficients
    decay like ``|kt|^(-p)``.  Phases are odd under ``k -> -k``, which makes the
    field exactly real; the mean and the Nyquist modes are zero.  With
    ``normalize`` set to ``"wiener0"`` or ``"l2"`` the field is rescaled so that
    this norm equals ``amplitude``.
    """
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2 * np.pi, spec.shape)
    theta = 0.5 * (theta - np.roll(np.flip(theta, (0, 1)), (1, 1), (0, 1)))
    kabs = spec.ktilde_abs
    env = np.zeros(spec.shape)
    nz = kabs > 0
    env[nz] = kabs[nz] ** (-p - 1.0)
    f = SpectralField.from_potential(spec, env * np.exp(1j * theta))
    if normalize is None:
        return f * amplitude
    ref = wiener_norm(f) if normalize == "wiener0" else l2_norm(f)
    return f * (amplitude / ref) if amplitude else f * 0.0


def _single_mode(spec, amplitude, mode):
    """``phi = a cos(kt . x) / |kt|``: the velocity has amplitude ``a``."""
    k1, k2 = (int(m) for m in mode)
    if (k1, k2) == (0, 0):
        raise ConfigError("single_mode needs a nonzero mode")
    phihat = np.zeros(spec.shape, complex)
    kt = np.hypot(2 * np.pi * k1 / spec.L1, 2 * np.pi * k2 / spec.L2)
    try:
        phihat[spec.lattice_index(k1, k2)] += amplitude / (2 * kt)
        phihat[spec.lattice_index(-k1, -k2)] += amplitude / (2 * kt)
    except IndexError as exc:
        raise ConfigError(str(exc)) from exc
    return SpectralField.from_potential(spec, phihat)


def make_initial_data(cfg):
    """Initial field described by ``cfg['initial_data']``."""
    if not isinstance(cfg, ScenarioConfig):
        cfg = ScenarioConfig.from_dict(cfg)
    spec = cfg.spec
    init = cfg["initial_data"]
    kind = init["kind"]
    a = float(init.get("amplitude", 0.0))
    if kind == "zero" or (a == 0 and kind != "file"):
        return SpectralField.zeros(spec)
    if kind == "single_mode":
        f = _single_mode(spec, a, init.get("mode", (1, 0)))
    elif kind == "random_envelope":
        f = random_gradient_field(spec, a, float(init["spectral_exponent"]),
                                  int(init.get("seed", 0)), init.get("normalize"))
    else:
        f, _ = read_spectra(init["path"])
        if f.spec != spec:
            raise ConfigError(f"file lattice {f.spec} does not match the configured domain")
        f = f.symmetrized()
    if init.get("zero_mean", True):
        f.uhat[0, 0] = 0.0
        f.vhat[0, 0] = 0.0
    return f


@dataclass
class RunManifest:
    name: str
    experiment: str
    config_sha256: str
    version: str
    start_time: float
    end_time: float
    exit_code: int = EXIT_OK
    verdicts: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    message: str = ""

    def to_json(self, path=None):
        text = json.dumps(asdict(self), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def check_outputs(self):
        """True when every listed output exists with its recorded size."""
        return all(os.path.exists(p) and os.path.getsize(p) == n for p, n in self.outputs.items())


class _Run:
    def __init__(self, cfg):
        self.cfg = cfg
        self.dir = cfg["outputs"]["dir"]
        os.makedirs(self.dir, exist_ok=True)
        self.files = []
        self.verdicts = {}

    def path(self, name):
        p = os.path.join(self.dir, name)
        self.files.append(p)
        return p

    def json(self, name, obj):
        with open(self.path(name), "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")

    def csv_path(self):
        p = self.cfg["outputs"].get("csv_path") or os.path.join(self.dir, "norms.csv")
        self.files.append(p)
        return p

    def spectra(self, traj):
        every = int(self.cfg["outputs"].get("spectra_every") or 0)
        if every <= 0:
            return
        for i in range(0, len(traj), every):
            write_spectra(self.path(f"spectra_{i:06d}.bin"), traj[i], traj.times[i])


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o)}")


def _exp_modes(run):
    spec = run.cfg.spec
    table = build_symbol_table(spec)
    table.to_csv(run.path("symbol.csv"))
    kt1, kt2 = spec.ktilde
    growing = []
    for k1, k2 in table.growing:
        i = spec.lattice_index(k1, k2)
        growing.append({"k": [k1, k2], "ktilde": [float(kt1[i]), float(kt2[i])],
                        "sigma": float(table.sigma[i])})
    summary = {"n_growing": len(growing), "growing": growing, "A": table.A, "A_raw": table.A_raw,
               "A_argmin": list(table.A_argmin), "k0": list(table.k0), "has_gap": table.has_gap,
               "sigma_min": table.sigma_min}
    run.json("modes.json", summary)
    run.verdicts.update(n_growing=len(growing), A=table.A, has_gap=table.has_gap)
    return summary


def _exp_simulate(run):
    cfg = run.cfg
    u0 = make_initial_data(cfg)
    try:
        traj = integrate(u0, cfg.stepper)
        blow = None
    except BlowUpError as exc:
        traj, blow = exc.trajectory, exc
    series = NormSeries.from_trajectory(traj, int(cfg["min_shells"]))
    series.to_csv(run.csv_path())
    run.spectra(traj)
    M = cfg["M"]
    if M is None:
        M = 2 * l2_norm(u0) if l2_norm(u0) > 0 else 1.0
    verdict = continuation_monitor(traj, M, blowup=blow)
    run.verdicts.update(continuation=verdict.verdict, t_last=verdict.t_last, t0=verdict.t0,
                        l2_final=float(series.l2[-1]), mean_max=float(np.max(np.abs(traj.uhat[:, 0, 0]))))
    run.json("continuation.json", asdict(verdict))
    if blow is not None:
        raise blow
    return series


def _exp_picard(run):
    cfg = run.cfg
    u0 = make_initial_data(cfg)
    st = cfg["stepper"]
    horizon = cfg["horizon"]
    traj, rep = picard_mild_solve(u0, float(cfg["alpha"]), horizon=horizon,
                                  max_iters=int(cfg["max_iters"]), dt=float(st["dt"]),
                                  T=float(st["T"]), dealias=st.get("dealias", "two_thirds"))
    run.json("picard.json", asdict(rep))
    NormSeries.from_trajectory(traj, int(cfg["min_shells"])).to_csv(run.csv_path())
    run.spectra(traj)
    run.verdicts.update(converged=rep.converged, iterates=rep.iterates,
                        data_norm=rep.data_norm, threshold_r1=rep.threshold_r1)
    return rep


def _exp_complex_shift(run):
    cfg = run.cfg
    u0 = make_initial_data(cfg)
    st = cfg["stepper"]
    av = cfg["alpha_vec"]
    if av is None:
        av = [float(cfg["alpha"]), 0.0]
    pairs, sup = complex_shift_solve(u0, av, float(st["T"]), int(cfg["n_levels"]),
                                     dt=float(st["dt"]), dealias=st.get("dealias", "two_thirds"))
    run.json("complex_shift.json", {"alpha_vec": list(map(float, av)), "sup_norms": sup.tolist(),
                                    "data_l2": l2_norm(u0)})
    run.verdicts.update(max_level_sup=float(np.max(sup)), data_l2=l2_norm(u0))
    return sup


def _exp_thresholds(run):
    cfg = run.cfg
    rep = thresholds(cfg.spec, float(cfg["alpha"]), T=cfg["horizon"], M=cfg["M"])
    rep.to_json(run.path("thresholds.json"))
    run.verdicts.update(r1=rep.r1, r=rep.r, T_star=rep.T_star)
    return rep


def _exp_estimates(run):
    cfg = run.cfg
    spec = cfg.spec
    alpha = float(cfg["alpha"])
    rows = []
    for s, r in ((1, 0), (2, 0), (1, 1)):
        for t in (0.01, 0.1, 1.0):
            measured, bound = smoothing_check(spec, t, s, r)
            rows.append({"s": s, "r": r, "t": t, "measured": measured, "bound": bound,
                         "ratio": measured / bound, "C": smoothing_constant(s, r)})
    ts = np.array([0.01, 0.1, 1.0])
    meas, env, c12 = l1_l2_multiplier_check(spec, ts)
    out = {"smoothing": rows, "l1_l2": {"t": ts, "measured": meas, "envelope": env, "C": c12},
           "C_calibrated": calibrated_constant()}
    try:
        rep = I_norm_bound(spec, alpha, horizon=cfg["horizon"])
        out["operator_norms"] = asdict(rep)
    except ValueError as exc:
        out["operator_norms"] = {"error": str(exc)}
    run.json("estimates.json", out)
    run.verdicts.update(max_smoothing_ratio=max(r["ratio"] for r in rows))
    return out


_DISPATCH = {
    "modes": _exp_modes,
    "simulate": _exp_simulate,
    "picard": _exp_picard,
    "complex_shift": _exp_complex_shift,
    "thresholds": _exp_thresholds,
    "estimates": _exp_estimates,
}


def run_scenario(cfg):
    """Run one experiment and write its outputs plus ``manifest.json``.

    Returns the manifest; ``manifest.exit_code`` is 0 on success, 2 for an
    invalid configuration and 3 when the blow-up detector fired.
    """
    start = time.time()
    try:
        if not isinstance(cfg, ScenarioConfig):
            cfg = ScenarioConfig.from_dict(cfg)
    except ConfigError as exc:
        return RunManifest("invalid", "", "", __version__, start, time.time(), EXIT_CONFIG,
                           message=str(exc))
    run = _Run(cfg)
    code, msg = EXIT_OK, ""
    try:
        cfg.to_json(run.path("config.json"))
        _DISPATCH[cfg["experiment"]](run)
    except BlowUpError as exc:
        code, msg = EXIT_BLOWUP, str(exc)
        run.verdicts.setdefault("continuation", "SUSPECT")
    except ValueError as exc:
        # ConfigError and parameter errors raised by the library (e.g. no spectral gap)
        code, msg = EXIT_CONFIG, str(exc)
    manifest = RunManifest(
        name=cfg["name"], experiment=cfg["experiment"], config_sha256=cfg.sha256,
        version=__version__, start_time=start, end_time=time.time(), exit_code=code,
        verdicts=json.loads(json.dumps(run.verdicts, default=_jsonable)),
        outputs={p: os.path.getsize(p) for p in run.files if os.path.exists(p)}, message=msg,
    )
    manifest.to_json(os.path.join(run.dir, "manifest.json"))
    return manifest


def run_many(cfgs, max_workers=None):
    """Run independent scenarios concurrently (threads; numpy releases the GIL)."""
    cfgs = list(cfgs)
    dirs = [c["outputs"]["dir"] if isinstance(c, ScenarioConfig) else c.get("outputs", {}).get("dir")
            for c in cfgs]
    if len(set(dirs)) != len(dirs):
        raise ConfigError("concurrent scenarios need distinct output directories")
    with ThreadPoolExecutor(max_workers=max_workers) as ex:
        return list(ex.map(run_scenario, cfgs))
