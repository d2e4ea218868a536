"""Command-line front end.

Subcommands:

* ``run``          translate one tensor file, writing an output tensor plus a
                   JSON manifest that fully determines a reproduction.
* ``sweep``        one run per threshold value, plus a CSV of spectral
                   correlations between each output and the source.
* ``band-report``  print the low/mid/high band-energy fractions of a tensor.

Exit codes: 0 success, 1 configuration error, 2 I/O or tensor-format error,
3 bridge/protocol error. Flags override values from ``--config``; the merged
values are echoed into the manifest, and a manifest file itself is accepted
as ``--config`` for exact reproduction.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import os
import sys

from .denoisers import AnalyticGaussianDenoiser, BridgeDenoiser
from .diffusion import COND_NULL, COND_TARGET, make_schedule
from .masks import BandSpec, KIND_ABSOLUTE, KIND_PERCENTILE, MODES, band_regions
from .pipelines import (PipelineConfig, VARIANT_INVERSION, VARIANT_RECON,
                        band_energy_fractions, run_inversion_guided, run_localized,
                        run_recon_guided, run_style_specific, schedule_from_table,
                        spectral_correlation)
from .protocol import BridgeClient, BridgeError, ENV_BRIDGE_ADDR
from .tensor_io import TensorFormatError, load_tensor, save_tensor

MANIFEST_SCHEMA = "bandsub-manifest-v1"

_CONFIG_DEFAULTS = {
    "variant": VARIANT_INVERSION,
    "mode": "low",
    "th_lp": 80, "th_hp": 5, "th_mp1": 5, "th_mp2": 80,
    "pt_lp": 60.0, "pt_hp": 5.0, "pt_mp1": 7.0, "pt_mp2": 50.0,
    "steps": 50,
    "inv_steps": None,
    "lambda": 0.5,
    "omega": 7.5,
    "seed": 0,
    "shuffle_seed": None,
    "shuffle": False,
    "shuffle_resize": "bilinear",
    "substitute_once": False,
    "substitute_full": False,
    "spill_dir": None,
    "n_train": 1000,
    "beta_start": 1e-4,
    "beta_end": 0.02,
    "denoiser": {
        "type": "analytic",
        "mu_null": 0.0, "var_null": 1.0,
        "mu_target": 1.0, "var_target": 1.0,
        "addr": None,
    },
}


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 for bad flags instead of argparse's 2
        raise ConfigError(message)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config (or manifest) file; flags override it")
    p.add_argument("--variant", choices=[VARIANT_RECON, VARIANT_INVERSION])
    p.add_argument("--mode", choices=list(MODES))
    for name in ("th-lp", "th-hp", "th-mp1", "th-mp2"):
        p.add_argument(f"--{name}", type=int, dest=name.replace("-", "_"))
    for name in ("pt-lp", "pt-hp", "pt-mp1", "pt-mp2"):
        p.add_argument(f"--{name}", type=float, dest=name.replace("-", "_"))
    p.add_argument("--steps", type=int)
    p.add_argument("--inv-steps", type=int)
    p.add_argument("--lambda", type=float, dest="lambda_", metavar="LAMBDA",
                   help="fraction of steps with substitution on")
    p.add_argument("--omega", type=float, help="classifier-free guidance scale")
    p.add_argument("--seed", type=int)
    p.add_argument("--shuffle-seed", type=int)
    p.add_argument("--shuffle", action=argparse.BooleanOptionalAction, default=None,
                   help="style-only run: spatially shuffle the guiding features")
    p.add_argument("--shuffle-resize", choices=["bilinear", "nearest"])
    p.add_argument("--substitute-once", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--substitute-full", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--spill-dir", help="park guiding features in tensor files here")
    p.add_argument("--n-train", type=int)
    p.add_argument("--beta-start", type=float)
    p.add_argument("--beta-end", type=float)
    p.add_argument("--denoiser", choices=["analytic", "bridge"])
    p.add_argument("--mu-null", type=float)
    p.add_argument("--var-null", type=float)
    p.add_argument("--mu-target", type=float)
    p.add_argument("--var-target", type=float)
    p.add_argument("--bridge-addr", help=f"host:port (default ${ENV_BRIDGE_ADDR})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bandsub", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one translation")
    p_run.add_argument("--input", required=True, help="source tensor file")
    p_run.add_argument("--outdir", required=True)
    p_run.add_argument("--mask-input", help="binary pixel mask tensor: localized run")
    _add_config_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="one run per threshold value")
    p_sweep.add_argument("--input", required=True)
    p_sweep.add_argument("--outdir", required=True)
    p_sweep.add_argument("--sweep-param", required=True,
                         choices=["pt-lp", "pt-hp", "th-lp", "th-hp"])
    p_sweep.add_argument("--sweep-values", required=True,
                         help="comma-separated threshold list")
    p_sweep.add_argument("--jobs", type=int, default=1)
    _add_config_flags(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_report = sub.add_parser("band-report", help="band-energy fractions of a tensor")
    p_report.add_argument("--input", required=True)
    p_report.add_argument("--kind", choices=[KIND_ABSOLUTE, KIND_PERCENTILE],
                          default=KIND_PERCENTILE)
    _add_config_flags(p_report)
    p_report.set_defaults(func=cmd_band_report)

    return parser


def _load_config_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]  # a manifest was passed; use its config echo
    unknown = set(data) - set(_CONFIG_DEFAULTS)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    return data


def _merge_config(args: argparse.Namespace, default_overrides: dict | None = None) -> dict:
    merged = json.loads(json.dumps(_CONFIG_DEFAULTS))  # deep copy
    if default_overrides:
        merged.update(default_overrides)
    if getattr(args, "config", None):
        file_cfg = _load_config_file(args.config)
        denoiser = file_cfg.pop("denoiser", None)
        merged.update(file_cfg)
        if denoiser:
            merged["denoiser"].update(denoiser)
    flag_map = {
        "variant": "variant", "mode": "mode",
        "th_lp": "th_lp", "th_hp": "th_hp", "th_mp1": "th_mp1", "th_mp2": "th_mp2",
        "pt_lp": "pt_lp", "pt_hp": "pt_hp", "pt_mp1": "pt_mp1", "pt_mp2": "pt_mp2",
        "steps": "steps", "inv_steps": "inv_steps", "lambda_": "lambda",
        "omega": "omega", "seed": "seed", "shuffle_seed": "shuffle_seed",
        "shuffle": "shuffle", "shuffle_resize": "shuffle_resize",
        "substitute_once": "substitute_once", "substitute_full": "substitute_full",
        "spill_dir": "spill_dir",
        "n_train": "n_train", "beta_start": "beta_start", "beta_end": "beta_end",
    }
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            merged[key] = value
    for attr, key in (("denoiser", "type"), ("mu_null", "mu_null"),
                      ("var_null", "var_null"), ("mu_target", "mu_target"),
                      ("var_target", "var_target"), ("bridge_addr", "addr")):
        value = getattr(args, attr, None)
        if value is not None:
            merged["denoiser"][key] = value
    return merged


def _pipeline_config(merged: dict) -> PipelineConfig:
    kind = KIND_ABSOLUTE if merged["variant"] == VARIANT_RECON else KIND_PERCENTILE
    band = BandSpec(
        mode=merged["mode"], kind=kind,
        th_lp=merged["th_lp"], th_hp=merged["th_hp"],
        th_mp1=merged["th_mp1"], th_mp2=merged["th_mp2"],
        pt_lp=merged["pt_lp"], pt_hp=merged["pt_hp"],
        pt_mp1=merged["pt_mp1"], pt_mp2=merged["pt_mp2"],
    )
    return PipelineConfig(
        variant=merged["variant"], band=band, steps=merged["steps"],
        inv_steps=merged["inv_steps"], switch_frac=merged["lambda"],
        guidance_scale=merged["omega"], seed=merged["seed"],
        shuffle_seed=merged["shuffle_seed"], shuffle_enabled=merged["shuffle"],
        shuffle_resize=merged["shuffle_resize"],
        substitute_once=merged["substitute_once"],
        substitute_full=merged["substitute_full"],
        spill_dir=merged["spill_dir"],
        n_train=merged["n_train"], beta_start=merged["beta_start"],
        beta_end=merged["beta_end"],
    )


def _make_denoiser(merged: dict, cfg: PipelineConfig):
    """Returns (denoiser, schedule, client or None)."""
    spec = merged["denoiser"]
    if spec["type"] == "analytic":
        schedule = make_schedule(cfg.n_train, cfg.steps, cfg.beta_start, cfg.beta_end)
        table = {COND_NULL: (spec["mu_null"], spec["var_null"]),
                 COND_TARGET: (spec["mu_target"], spec["var_target"])}
        return AnalyticGaussianDenoiser(schedule, table), schedule, None
    if spec["type"] == "bridge":
        client = BridgeClient.connect(spec.get("addr"), expected_n_train=cfg.n_train)
        n_train, alpha_bar = client.handshake()
        schedule = schedule_from_table(n_train, alpha_bar, cfg.steps)
        return BridgeDenoiser(client), schedule, client
    raise ConfigError(f"unknown denoiser type {spec['type']!r}")


def _execute(merged: dict, z0, mask) -> tuple:
    if mask is not None and merged["shuffle"]:
        raise ConfigError("--mask-input and --shuffle are mutually exclusive")
    cfg = _pipeline_config(merged)
    denoiser, schedule, client = _make_denoiser(merged, cfg)
    try:
        if mask is not None:
            report = run_localized(z0, mask, cfg, denoiser, schedule=schedule)
        elif merged["shuffle"]:
            report = run_style_specific(z0, cfg, denoiser, schedule=schedule)
        elif cfg.variant == VARIANT_RECON:
            report = run_recon_guided(z0, cfg, denoiser, schedule=schedule)
        else:
            report = run_inversion_guided(z0, cfg, denoiser, schedule=schedule)
    finally:
        if client is not None:
            client.close()
    return cfg, report


def _manifest(merged: dict, report, input_path: str, mask_path: str | None,
              output_path: str) -> dict:
    calls = dict(report.denoiser_calls)
    return {
        "schema": MANIFEST_SCHEMA,
        "config": merged,
        "input": input_path,
        "mask_input": mask_path,
        "output": output_path,
        "denoiser_calls": {**calls, "total": sum(calls.values())},
        "transform_params": (None if report.transform_params is None
                             else dataclasses.asdict(report.transform_params)),
        "trace": [dataclasses.asdict(row) for row in report.trace],
        "timing": report.timing,
    }


def _task(merged: dict, mask_path: str | None) -> str:
    if mask_path is not None:
        return "localized"
    if merged["shuffle"]:
        return "style"
    return "translate"


def cmd_run(args) -> int:
    merged = _merge_config(args)
    z0 = load_tensor(args.input)
    mask = None
    if args.mask_input:
        mask_tensor = load_tensor(args.mask_input)
        if mask_tensor.shape[0] != 1:
            raise ConfigError("--mask-input must be a single-channel tensor")
        mask = mask_tensor[0]
    cfg, report = _execute(merged, z0, mask)
    os.makedirs(args.outdir, exist_ok=True)
    output_path = os.path.join(args.outdir, "output.fbst")
    save_tensor(report.output, output_path)
    manifest = _manifest(merged, report, args.input, args.mask_input, output_path)
    manifest_path = os.path.join(args.outdir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    print(json.dumps({"task": _task(merged, args.mask_input), "output": output_path,
                      "manifest": manifest_path,
                      "denoiser_calls": manifest["denoiser_calls"]["total"]}))
    return 0


def _sweep_one(merged: dict, z0, input_path: str, outdir: str, value: float):
    run_dir = os.path.join(outdir, f"run_{value:g}")
    cfg, report = _execute(merged, z0, None)
    os.makedirs(run_dir, exist_ok=True)
    output_path = os.path.join(run_dir, "output.fbst")
    save_tensor(report.output, output_path)
    manifest = _manifest(merged, report, input_path, None, output_path)
    with open(os.path.join(run_dir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    # Correlations against the source over the *default-threshold* canonical
    # bands, so rows stay comparable while the substitution threshold sweeps.
    # The DC bin is excluded: guidance shifts the global mean, and one huge
    # offset bin would swamp a correlation meant to read band content.
    kind = KIND_ABSOLUTE if merged["variant"] == VARIANT_RECON else KIND_PERCENTILE
    regions = band_regions(BandSpec(mode=merged["mode"], kind=kind),
                           z0.shape[1], z0.shape[2])
    low_region = regions["low"].copy()
    low_region[0, 0] = 0.0
    high_region = regions["high"].copy()
    high_region[0, 0] = 0.0
    low = spectral_correlation(report.output, z0, low_region)
    high = spectral_correlation(report.output, z0, high_region)
    return value, low, high


def cmd_sweep(args) -> int:
    param = args.sweep_param.replace("-", "_")
    natural_mode = "low" if param in ("pt_lp", "th_lp") else "high"
    merged = _merge_config(args, default_overrides={"mode": natural_mode})
    raw_values = [v for v in args.sweep_values.split(",") if v.strip()]
    if not raw_values:
        raise ConfigError("--sweep-values is empty")
    values = [float(v) for v in raw_values]
    z0 = load_tensor(args.input)
    os.makedirs(args.outdir, exist_ok=True)

    def one(value: float):
        run_merged = json.loads(json.dumps(merged))
        run_merged[param] = int(value) if param.startswith("th_") else value
        return _sweep_one(run_merged, z0, args.input, args.outdir, value)

    if args.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(one, values))
    else:
        rows = [one(v) for v in values]

    csv_path = os.path.join(args.outdir, "sweep.csv")
    with open(csv_path, "w", encoding="utf-8") as f:
        f.write("threshold,low_band_corr,high_band_corr\n")
        for value, low, high in rows:
            f.write(f"{value:.12g},{low:.12g},{high:.12g}\n")
    print(csv_path)
    return 0


def cmd_band_report(args) -> int:
    merged = _merge_config(args)
    z = load_tensor(args.input)
    spec = BandSpec(
        mode=merged["mode"], kind=args.kind,
        th_lp=merged["th_lp"], th_hp=merged["th_hp"],
        th_mp1=merged["th_mp1"], th_mp2=merged["th_mp2"],
        pt_lp=merged["pt_lp"], pt_hp=merged["pt_hp"],
        pt_mp1=merged["pt_mp1"], pt_mp2=merged["pt_mp2"],
    )
    fractions = band_energy_fractions(z, spec)
    print(json.dumps({"low": fractions["low"], "mid": fractions["mid"],
                      "high": fractions["high"]}))
    return 0


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"bandsub: config error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"bandsub: config error: {exc}", file=sys.stderr)
        return 1
    except (TensorFormatError, OSError) as exc:
        print(f"bandsub: i/o error: {exc}", file=sys.stderr)
        return 2
    except BridgeError as exc:
        print(f"bandsub: bridge error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
