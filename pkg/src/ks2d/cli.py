"""Command-line entry point: ``python3 -m ks2d <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import json
import sys

from .harness import ConfigError, EXIT_CONFIG, ScenarioConfig, run_many, run_scenario
from .spectral import fft_workers

SUBCOMMANDS = {
    "modes": "modes",
    "simulate": "simulate",
    "picard": "picard",
    "complex-shift": "complex_shift",
    "thresholds": "thresholds",
    "estimates": "estimates",
}


def _common(p):
    g = p.add_argument_group("domain")
    g.add_argument("--L1", type=float)
    g.add_argument("--L2", type=float)
    g.add_argument("--N1", type=int)
    g.add_argument("--N2", type=int)
    g = p.add_argument_group("initial data")
    g.add_argument("--kind", choices=["zero", "single_mode", "random_envelope", "file"])
    g.add_argument("--amplitude", type=float)
    g.add_argument("--p", dest="spectral_exponent", type=float, help="spectral exponent")
    g.add_argument("--seed", type=int)
    g.add_argument("--normalize", choices=["wiener0", "l2"])
    g.add_argument("--mode", nargs=2, type=int, metavar=("K1", "K2"))
    g.add_argument("--data-file", dest="path")
    g.add_argument("--no-zero-mean", dest="zero_mean", action="store_false", default=None)
    g = p.add_argument_group("stepper")
    g.add_argument("--dt", type=float)
    g.add_argument("--T", type=float)
    g.add_argument("--dealias", choices=["two_thirds", "none"])
    g = p.add_argument_group("experiment")
    g.add_argument("--alpha", type=float)
    g.add_argument("--alpha-vec", nargs=2, type=float, metavar=("A1", "A2"))
    g.add_argument("--horizon", type=float)
    g.add_argument("--levels", dest="n_levels", type=int)
    g.add_argument("--max-iters", type=int)
    g.add_argument("--M", type=float, help="L2 size of the data / continuation cap")
    g.add_argument("--min-shells", type=int)
    g.add_argument("--name")
    g = p.add_argument_group("outputs")
    g.add_argument("--out", dest="dir")
    g.add_argument("--csv", dest="csv_path")
    g.add_argument("--spectra-every", type=int)
    g.add_argument("--save-every", type=int)
    p.add_argument("--config", nargs="+", metavar="FILE",
                   help="JSON config(s); values in the file override flags")
    p.add_argument("--jobs", type=int, help="concurrent scenarios when several configs are given")


def build_parser():
    parser = argparse.ArgumentParser(prog="ks2d", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        _common(sub.add_parser(name))
    return parser


def _flags_to_dict(ns, experiment):
    d = {"experiment": experiment}
    sections = {
        "domain": ("L1", "L2", "N1", "N2"),
        "initial_data": ("kind", "amplitude", "spectral_exponent", "seed", "normalize", "mode",
                         "path", "zero_mean"),
        "stepper": ("dt", "T", "dealias"),
        "outputs": ("dir", "csv_path", "spectra_every", "save_every"),
    }
    for sec, keys in sections.items():
        vals = {k: getattr(ns, k) for k in keys if getattr(ns, k) is not None}
        if vals:
            d[sec] = vals
    for k in ("alpha", "horizon", "n_levels", "max_iters", "M", "min_shells", "name"):
        if getattr(ns, k) is not None:
            d[k] = getattr(ns, k)
    if ns.alpha_vec is not None:
        d["alpha_vec"] = list(ns.alpha_vec)
    if ns.path is not None and ns.kind is None:
        d["initial_data"]["kind"] = "file"
    return d


def _merge(base, over):
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = v
    return base


def _load(path, flags, experiment):
    try:
        with open(path) as fh:
            over = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(over, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    if over.get("experiment", experiment) != experiment:
        raise ConfigError(
            f"{path}: experiment {over['experiment']!r} does not match subcommand {experiment!r}"
        )
    return ScenarioConfig.from_dict(_merge(json.loads(json.dumps(flags)), over))


def _summary(m):
    line = f"{m.name}: {m.experiment} exit={m.exit_code}"
    if m.message:
        line += f" ({m.message})"
    lines = [line]
    modes = [p for p in m.outputs if p.endswith("modes.json")]
    if modes:
        with open(modes[0]) as fh:
            table = json.load(fh)
        lines.append(f"{table['n_growing']} growing modes")
        lines.extend(f"  k=({g['k'][0]:+d},{g['k'][1]:+d})  sigma={g['sigma']:.6g}"
                     for g in table["growing"])
    lines.append(json.dumps(m.verdicts, indent=2, sort_keys=True))
    return "\n".join(lines)


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    experiment = SUBCOMMANDS[ns.command]
    flags = _flags_to_dict(ns, experiment)
    try:
        if ns.config:
            cfgs = [_load(p, flags, experiment) for p in ns.config]
        else:
            cfgs = [ScenarioConfig.from_dict(flags)]
    except ConfigError as exc:
        print(f"ks2d: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if len(cfgs) == 1:
        manifests = [run_scenario(cfgs[0])]
    else:
        manifests = run_many(cfgs, max_workers=ns.jobs or fft_workers())
    for m in manifests:
        print(_summary(m))
        if m.exit_code:
            print(f"ks2d: {m.message}", file=sys.stderr)
    return max(m.exit_code for m in manifests)


if __name__ == "__main__":
    sys.exit(main())
