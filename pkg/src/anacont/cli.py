"""Command-line front end: ``synth``, ``continue`` and ``eval``.

All files are single JSON documents.  Floats are written with Python's
shortest round-trip representation, so reading a file back reproduces every
value bit for bit; complex numbers are ``[re, im]`` pairs and non-finite
values use the ``NaN``/``Infinity`` tokens of Python's ``json`` module.

Exit codes: 0 on completion, 2 for usage, parse or I/O errors, 3 when a
numerical stage fails.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
import typing

import numpy as np

from . import model as _model
from . import recover as _recover
from .errors import AnacontError, InvalidArgumentError, StageError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_STAGE = 3

DATASET_FORMAT = "anacont-dataset"
RESULT_FORMAT = "anacont-result"
CURVE_FORMAT = "anacont-curve"
FORMAT_VERSION = 1

log = logging.getLogger("anacont")


class UsageError(Exception):
    """Bad arguments or an unreadable input file (exit code 2)."""


# -- encoding ------------------------------------------------------------------

def _complex_list(values) -> list:
    return [[float(v.real), float(v.imag)] for v in np.asarray(values, dtype=complex).ravel()]


def _complex_array(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    return arr[:, 0] + 1j * arr[:, 1]


def to_jsonable(obj):
    """Plain-JSON view of arrays, numpy scalars, tuples and complex numbers."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return _complex_list(obj)
        return obj.tolist()
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _write_json(doc: dict, path: str):
    text = json.dumps(to_jsonable(doc), indent=1)
    try:
        if path == "-":
            sys.stdout.write(text + "\n")
        else:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from exc


def _read_json(path: str, fmt: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != fmt:
        raise UsageError(f"{path} is not an {fmt} file")
    return doc


# -- dataset files -------------------------------------------------------------

def dataset_to_doc(ds: _model.MatsubaraDataset) -> dict:
    """Header plus one ``[n, Im z_n, Re G_n, Im G_n]`` row per Matsubara point."""
    rows = [[n + 1, float(z.imag), float(g.real), float(g.imag)]
            for n, (z, g) in enumerate(zip(ds.points, ds.samples))]
    return {
        "format": DATASET_FORMAT,
        "version": FORMAT_VERSION,
        "beta": float(ds.beta),
        "N": ds.N,
        "sigma": ds.noise_sigma,
        "seed": ds.seed,
        "model": ds.model,
        "columns": ["n", "Im z", "Re G", "Im G"],
        "rows": rows,
    }


def dataset_from_doc(doc: dict) -> _model.MatsubaraDataset:
    try:
        beta = float(doc["beta"])
        n_points = int(doc["N"])
        rows = np.asarray(doc["rows"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed dataset file: {exc}") from exc
    if rows.ndim != 2 or rows.shape != (n_points, 4):
        raise UsageError(f"dataset header says N={n_points} but the body has shape {rows.shape}")
    if not np.array_equal(rows[:, 0], np.arange(1, n_points + 1)):
        raise UsageError("dataset rows must be numbered 1..N in order")
    grid = _model.matsubara_grid(beta, n_points)
    if not np.array_equal(rows[:, 1], grid.imag):
        raise UsageError("dataset abscissae do not match the Matsubara grid of the header beta")
    sigma = doc.get("sigma")
    seed = doc.get("seed")
    return _model.MatsubaraDataset(beta=beta, points=grid, samples=rows[:, 2] + 1j * rows[:, 3],
                                   noise_sigma=None if sigma is None else float(sigma),
                                   seed=None if seed is None else int(seed), model=doc.get("model"))


def write_dataset(ds: _model.MatsubaraDataset, path: str):
    _write_json(dataset_to_doc(ds), path)


def read_dataset(path: str) -> _model.MatsubaraDataset:
    return dataset_from_doc(_read_json(path, DATASET_FORMAT))


# -- result files --------------------------------------------------------------

def result_to_doc(rec: _recover.Reconstruction, case: str, config: _recover.PipelineConfig,
                  x) -> dict:
    x = np.asarray(x, dtype=float)
    weights = rec.weights
    pr = rec.prony
    diagnostics = dict(rec.diagnostics)
    if pr is not None:
        diagnostics.update({
            "singular_values": pr.singular_values,
            "rank": pr.rank,
            "saturated": pr.saturated,
            "hankel_rows": pr.l,
            "exterior_roots": pr.exterior_poles,
            "rejected_roots": pr.rejected_roots,
        })
    return {
        "format": RESULT_FORMAT,
        "version": FORMAT_VERSION,
        "case": case,
        "config": config.to_dict(),
        "reconstruction": {
            "kind": rec.kind,
            "poles": _complex_list(rec.poles),
            "weights": _complex_list(weights) if np.iscomplexobj(weights) else [float(w) for w in weights],
            "residual": float(rec.residual),
            "eta": rec.eta,
            "max_violation": rec.max_violation,
        },
        "diagnostics": diagnostics,
        "curve": {"x": x, "A": rec.spectral(x) if x.size else x},
    }


def reconstruction_from_doc(doc: dict) -> _recover.Reconstruction:
    try:
        r = doc["reconstruction"]
        kind = r["kind"]
        poles = _complex_array(r["poles"])
        if kind == "molecule":
            weights = np.asarray(r["weights"], dtype=float)
        else:
            weights = _complex_array(r["weights"])
        return _recover.Reconstruction(kind=kind, poles=poles, weights=weights,
                                       residual=float(r["residual"]), eta=r.get("eta"),
                                       max_violation=r.get("max_violation"))
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed result file: {exc}") from exc


def read_result(path: str) -> dict:
    return _read_json(path, RESULT_FORMAT)


# -- argument parsing -------------------------------------------------------------

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _config_flag_types():
    hints = typing.get_type_hints(_recover.PipelineConfig)
    out = {}
    for f in dataclasses.fields(_recover.PipelineConfig):
        tp = hints[f.name]
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        out[f.name] = args[0] if args else tp
    return out


def _add_config_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("pipeline configuration (each flag overrides one PipelineConfig field)")
    defaults = _recover.PipelineConfig()
    for name, tp in _config_flag_types().items():
        flag = "--" + name.replace("_", "-")
        default = getattr(defaults, name)
        kw = {"dest": "cfg_" + name, "default": None, "type": tp,
              "help": f"default: {'rule' if default is None else default}"}
        if name == "upper_poles":
            kw["choices"] = ["reflect", "discard"]
        g.add_argument(flag, **kw)


def _config_from_args(args) -> _recover.PipelineConfig:
    base = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot load config {args.config}: {exc}") from exc
        if isinstance(base, dict) and base.get("format") == RESULT_FORMAT:
            base = base["config"]
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    base.update(overrides)
    try:
        cfg = _recover.PipelineConfig.from_dict(base)
        cfg.validate()
    except (InvalidArgumentError, TypeError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc
    return cfg


def _parse_model(text: str) -> dict:
    """Inline JSON, a path to a JSON file, or a bare reference-model name."""
    if text.startswith("reference-"):
        return {"kind": text}
    try:
        spec = json.loads(text)
    except json.JSONDecodeError:
        try:
            with open(text, encoding="utf-8") as fh:
                spec = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"model spec is neither JSON nor a readable JSON file: {exc}") from exc
    if not isinstance(spec, dict):
        raise UsageError("model spec must be a JSON object")
    return spec


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="anacont", description=__doc__.split("\n")[0])
    p.add_argument("-q", "--quiet", action="store_true", help="suppress warnings")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="synthesize a noisy Matsubara dataset")
    s.add_argument("--model", required=True,
                   help="model descriptor: inline JSON, JSON file, or reference-molecule / "
                        "reference-quasiparticles / reference-gaussians")
    s.add_argument("--epsilon", type=float, default=None, help="gap of the reference molecule model")
    s.add_argument("--beta", type=float, default=100.0)
    s.add_argument("--n-points", type=int, default=128, dest="n_points")
    s.add_argument("--sigma", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--out", required=True)

    c = sub.add_parser("continue", help="run a continuation pipeline on a dataset file")
    c.add_argument("case", choices=["molecule", "cdm"])
    c.add_argument("input")
    c.add_argument("-o", "--out", required=True)
    c.add_argument("--config", help="JSON config (or a previous result file) to start from")
    c.add_argument("--x-min", type=float, default=-3.0, dest="x_min")
    c.add_argument("--x-max", type=float, default=3.0, dest="x_max")
    c.add_argument("--count", type=int, default=601)
    _add_config_flags(c)

    e = sub.add_parser("eval", help="evaluate the spectral curve of a result file")
    e.add_argument("result")
    e.add_argument("--x-min", type=float, required=True, dest="x_min")
    e.add_argument("--x-max", type=float, required=True, dest="x_max")
    e.add_argument("--count", type=int, required=True)
    e.add_argument("--eta", type=float, default=None, help="default: the eta stored in the result")
    e.add_argument("-o", "--out", required=True)
    return p


def _x_grid(x_min, x_max, count):
    if count < 2:
        raise UsageError(f"count must be at least 2, got {count}")
    if not (math.isfinite(x_min) and math.isfinite(x_max) and x_max > x_min):
        raise UsageError("need finite x-min < x-max")
    return np.linspace(x_min, x_max, count)


# -- commands --------------------------------------------------------------------

def cmd_synth(args) -> int:
    spec = _parse_model(args.model)
    if args.epsilon is not None:
        spec = dict(spec, epsilon=args.epsilon)
    try:
        m = _model.model_from_dict(spec)
        ds = _model.synthesize(m, args.beta, args.n_points, args.sigma, args.seed)
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from exc
    write_dataset(ds, args.out)
    mag = _model.average_magnitude(_model.eval_green(m, ds.points))
    print(f"M = {mag!r}")
    print(f"sigma*M = {args.sigma * mag!r}")
    return EXIT_OK


def cmd_continue(args) -> int:
    cfg = _config_from_args(args)
    x = _x_grid(args.x_min, args.x_max, args.count)
    ds = read_dataset(args.input)
    run = _recover.run_molecule_pipeline if args.case == "molecule" else _recover.run_cdm_pipeline
    if args.case == "molecule" and cfg.epsilon is None:
        raise UsageError("the molecule case needs --epsilon")
    rec = run(ds, cfg)
    _write_json(result_to_doc(rec, args.case, cfg, x), args.out)
    rank = rec.prony.rank if rec.prony is not None else 0
    print(f"rank = {rank}, poles = {rec.poles.size}, residual = {rec.residual!r}")
    return EXIT_OK


def cmd_eval(args) -> int:
    x = _x_grid(args.x_min, args.x_max, args.count)
    rec = reconstruction_from_doc(read_result(args.result))
    eta = rec.eta if args.eta is None else args.eta
    if eta is None or not eta > 0:
        raise UsageError(f"eta must be positive, got {eta}")
    _write_json({"format": CURVE_FORMAT, "version": FORMAT_VERSION, "eta": eta,
                 "x": x, "A": _recover.eval_spectral(rec, x, eta)}, args.out)
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "continue": cmd_continue, "eval": cmd_eval}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"anacont {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"anacont {args.command}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except InvalidArgumentError as exc:
        print(f"anacont {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AnacontError as exc:
        print(f"anacont {args.command}: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
