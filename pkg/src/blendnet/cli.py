"""``blendnet`` command line.

Every command is deterministic given its flags.  Options may also come from a
TOML file passed with ``--config``: top-level keys apply to every command and a
table named after the command overrides them; explicit flags win over both.
Artifacts are accompanied by a ``*.manifest.json`` sidecar holding the fully
resolved options.

Exit codes: 0 success, 2 usage or validation error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from . import attrib, chem, data, stats, svg, thermo, zoo

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3
BALANCED_WARN_ACCURACY = 0.65
TABLE_COLUMNS = ("model", "mse", "accuracy", "precision", "recall", "specificity", "f1")


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------- helpers


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def _sidecar(artifact: str | Path, command: str, opts: dict) -> None:
    artifact = Path(artifact)
    manifest = {"command": command, "version": __version__, "options": opts}
    _write(artifact.with_name(artifact.name + ".manifest.json"), _dump(manifest))


def _emit(text: str, out: str | None) -> None:
    if out:
        _write(out, text)
    else:
        sys.stdout.write(text)


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(x: float | None, digits: int = 6) -> str:
    return "" if x is None else f"{x:.{digits}f}"


def worker_slots() -> int:
    raw = os.environ.get("BLENDNET_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"BLENDNET_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("BLENDNET_THREADS must be >= 1")
    return min(n, os.cpu_count() or 1)


def _load_config(path: str | None, command: str) -> dict:
    if not path:
        return {}
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{path}: {exc}") from None
    merged = {k: v for k, v in doc.items() if not isinstance(v, dict)}
    section = doc.get(command, doc.get(command.replace("-", "_"), {}))
    if not isinstance(section, dict):
        raise UsageError(f"{path}: [{command}] must be a table")
    merged.update(section)
    out = {k.replace("-", "_"): v for k, v in merged.items()}
    if "in" in out:
        out["input"] = out.pop("in")
    return out


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Flag value if given, else config value, else built-in default."""
    cfg = _load_config(getattr(args, "config", None), args.command)
    known = set(defaults)
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise UsageError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
    opts = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        opts[key] = flag if flag is not None else cfg.get(key, default)
    return opts


def _require(opts: dict, *keys: str) -> None:
    missing = [k for k in keys if opts.get(k) in (None, "")]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _dims(opts: dict) -> zoo.Dims:
    widths = opts["decision_widths"]
    if isinstance(widths, str):
        widths = [int(w) for w in widths.split(",") if w.strip()]
    return zoo.Dims(int(opts["fp_width"]), int(opts["feature_width"]), int(opts["dense_layers"]), tuple(widths))


def _vectorize_all(entries, lam: float, radius: int, width: int):
    return [data.vectorize(e, lam, radius, width) for e in entries]


def _load_split(opts: dict):
    """Split directory (train/valid/test CSVs) or a raw CSV split on the fly."""
    if opts.get("split"):
        d = Path(opts["split"])
        if not (d / "manifest.json").exists():
            raise UsageError(f"{d}: no manifest.json; run `blendnet split` first")
        opts["mode"] = json.loads((d / "manifest.json").read_text()).get("mode", opts["mode"])
        return tuple(data.load_entries(d / f"{name}.csv") for name in ("train", "valid", "test"))
    _require(opts, "input")
    spec = data.SplitSpec(opts["mode"], int(opts["split_seed"]))
    return data.split_entries(data.load_entries(opts["input"]), spec)


def _learning_rate(opts: dict) -> float:
    if opts.get("lr") is not None:
        return float(opts["lr"])
    return zoo.default_learning_rate(opts.get("mode", "random"))


def _train_config(opts: dict, seed: int) -> zoo.TrainConfig:
    return zoo.TrainConfig(
        epochs=int(opts["epochs"]),
        batch_size=int(opts["batch_size"]),
        learning_rate=_learning_rate(opts),
        lam=float(opts["lam"]),
        seed=seed,
        checkpoint_selection=opts["selection"],
    )


# ---------------------------------------------------------------- commands

FP_DEFAULTS = {"smiles": None, "radius": 2, "width": 2048, "out": None}


def cmd_fp(args) -> int:
    opts = _resolve(args, FP_DEFAULTS)
    _require(opts, "smiles")
    fp = chem.fingerprint_smiles(opts["smiles"], int(opts["radius"]), int(opts["width"]))
    report = {
        "smiles": opts["smiles"],
        "radius": fp.radius,
        "width": fp.width,
        "popcount": fp.popcount,
        "on_bits": list(fp.on_bits()),
    }
    _emit(_dump(report), opts["out"])
    return EXIT_OK


GEN_DEFAULTS = {"n": 400, "seed": 0, "t0": 0.25, "alpha": 0.3, "radius": 2, "width": 2048, "out": None}


def cmd_gen_synth(args) -> int:
    opts = _resolve(args, GEN_DEFAULTS)
    _require(opts, "out")
    entries = data.gen_synthetic(
        int(opts["n"]), int(opts["seed"]), t0=float(opts["t0"]), alpha=float(opts["alpha"]),
        radius=int(opts["radius"]), width=int(opts["width"]),
    )
    data.write_entries(opts["out"], entries, comment=entries[0].source_id)
    _sidecar(opts["out"], "gen-synth", opts)
    rates = data.class_rates(entries)
    print(f"wrote {len(entries)} entries to {opts['out']} ({rates['incompatible_rate']}% incompatible)")
    return EXIT_OK


SPLIT_DEFAULTS = {"input": None, "out": None, "mode": "random", "seed": 0, "ratios": "0.64,0.16,0.20"}


def cmd_split(args) -> int:
    opts = _resolve(args, SPLIT_DEFAULTS)
    _require(opts, "input", "out")
    ratios = opts["ratios"]
    if isinstance(ratios, str):
        ratios = [float(r) for r in ratios.split(",")]
    spec = data.SplitSpec(opts["mode"], int(opts["seed"]), tuple(float(r) for r in ratios))
    rejects: list = []
    entries = data.load_entries(opts["input"], rejects)
    parts = data.split_entries(entries, spec)
    extra = {"options": opts, "rejected_rows": [{"row": r.row, "reason": r.reason} for r in rejects]}
    manifest = data.write_split(opts["out"], parts, spec, extra)
    for name, sub in manifest["subsets"].items():
        print(f"{name}: {sub['count']} entries, {sub['incompatible_rate']}% incompatible")
    return EXIT_OK


MODEL_DEFAULTS = {
    "variant": "HDDN",
    "fp_width": 2048,
    "feature_width": 256,
    "dense_layers": 3,
    "decision_widths": "64,16",
    "radius": 2,
    "lam": 10.0,
    "criterion": None,
}
TRAIN_DEFAULTS = {
    **MODEL_DEFAULTS,
    "split": None,
    "input": None,
    "mode": "random",
    "split_seed": 0,
    "epochs": 1000,
    "batch_size": 20,
    "lr": None,
    "seed": 0,
    "selection": "best-valid-accuracy",
    "out": None,
}


def _train_one(opts: dict, parts, variant: str, seed: int, outdir: Path | None) -> dict:
    """Train and test one model; optionally write its checkpoint and history."""
    dims = _dims(opts)
    lam, radius = float(opts["lam"]), int(opts["radius"])
    tr, va, te = (_vectorize_all(p, lam, radius, dims.fp_width) for p in parts)
    crit = None if opts["criterion"] is None else float(opts["criterion"])
    model = zoo.build_model(variant, dims, seed, lam, crit, radius)
    trained, hist = zoo.train(model, tr, va, _train_config(opts, seed), test_set=te or None)
    result = zoo.evaluate(trained, te) if te else None
    if outdir is not None:
        zoo.save_checkpoint(trained, outdir / "checkpoint.json")
        rows = hist.rows()
        header = list(rows[0]) if rows else ["epoch", "train_loss", "train_accuracy", "valid_accuracy"]
        _write(outdir / "history.csv", _csv_text(header, [[r[h] for h in header] for r in rows]))
        if rows:
            epochs = [r["epoch"] for r in rows]
            series = {"train": (epochs, hist.train_accuracy), "valid": (epochs, hist.valid_accuracy)}
            if hist.test_accuracy is not None:
                series["test"] = (epochs, hist.test_accuracy)
            _write(outdir / "accuracy.svg", svg.line_chart(series, f"{variant} accuracy", "epoch", "accuracy", markers=False))
            _write(
                outdir / "loss.svg",
                svg.line_chart({"train": (epochs, hist.train_loss)}, f"{variant} training loss", "epoch", "MSE", markers=False),
            )
    return {
        "variant": variant,
        "seed": seed,
        "selected_epoch": hist.selected_epoch,
        "test": result.report.as_dict() if result else None,
        "confusion": vars(result.cm) if result else None,
    }


def cmd_train(args) -> int:
    opts = _resolve(args, TRAIN_DEFAULTS)
    _require(opts, "out")
    if opts["variant"] not in zoo.VARIANTS:
        raise UsageError(f"unknown variant {opts['variant']!r}; choose from {', '.join(zoo.VARIANTS)}")
    parts = _load_split(opts)
    outdir = Path(opts["out"])
    summary = _train_one(opts, parts, opts["variant"], int(opts["seed"]), outdir)
    _write(outdir / "report.json", _dump(summary))
    _sidecar(outdir / "checkpoint.json", "train", {**opts, "learning_rate": _learning_rate(opts)})
    if summary["test"]:
        print(f"{opts['variant']}: test accuracy {summary['test']['accuracy']:.4f} (epoch {summary['selected_epoch']})")
    return EXIT_OK


EVAL_DEFAULTS = {"checkpoint": None, "input": None, "out": None}


def cmd_eval(args) -> int:
    opts = _resolve(args, EVAL_DEFAULTS)
    _require(opts, "checkpoint", "input")
    model = zoo.load_checkpoint(opts["checkpoint"])
    entries = data.load_entries(opts["input"])
    result = zoo.evaluate(model, _vectorize_all(entries, model.lam, model.radius, model.dims.fp_width))
    report = {
        "variant": model.variant,
        "split": Path(opts["input"]).stem,
        "count": len(entries),
        **result.report.as_dict(),
        "confusion": vars(result.cm),
    }
    _emit(_dump(report), opts["out"])
    if opts["out"]:
        _sidecar(opts["out"], "eval", opts)
    return EXIT_OK


ABLATE_DEFAULTS = {**TRAIN_DEFAULTS, "variants": ",".join(zoo.VARIANTS), "repeats": 5}
del ABLATE_DEFAULTS["variant"]


def _ablate_job(job):
    opts, parts, variant, seed, outdir = job
    return _train_one(opts, parts, variant, seed, outdir)


def ablation_table(runs: Sequence[dict], variants: Sequence[str]) -> tuple[list[dict], list[list[str]]]:
    """Per-variant mean/min/max and the flat table of means (metrics in percent)."""
    summary, rows = [], []
    for v in variants:
        reports = [stats.MetricsReport(**r["test"]) for r in runs if r["variant"] == v]
        agg = stats.summarize_runs(reports)
        summary.append({"model": v, "runs": len(reports), **agg})
        row = [v, _num(agg["mse"]["mean"] if agg["mse"] else None, 4)]
        for name in stats.METRIC_NAMES:
            row.append(_num(100.0 * agg[name]["mean"] if agg[name] else None, 2))
        rows.append(row)
    return summary, rows


def cmd_ablate(args) -> int:
    opts = _resolve(args, ABLATE_DEFAULTS)
    _require(opts, "out")
    variants = opts["variants"]
    if isinstance(variants, str):
        variants = [v.strip() for v in variants.split(",") if v.strip()]
    bad = [v for v in variants if v not in zoo.VARIANTS]
    if bad:
        raise UsageError(f"unknown variants: {', '.join(bad)}")
    repeats = int(opts["repeats"])
    if repeats < 1:
        raise UsageError("--repeats must be >= 1")
    parts = _load_split(opts)
    if not parts[2]:
        raise UsageError("test subset is empty")
    outdir = Path(opts["out"])
    base = int(opts["seed"])
    jobs = [
        (opts, parts, v, base + k, outdir / "runs" / v / f"seed{base + k}")
        for v in variants
        for k in range(repeats)
    ]
    slots = worker_slots()
    if slots > 1:
        with ProcessPoolExecutor(max_workers=slots) as pool:
            runs = list(pool.map(_ablate_job, jobs))
    else:
        runs = [_ablate_job(j) for j in jobs]

    summary, rows = ablation_table(runs, variants)
    warnings = []
    mode = opts["mode"]
    for s in summary:
        if s["model"] == "HDDN" and mode == "balanced" and s["accuracy"]:
            if s["accuracy"]["mean"] < BALANCED_WARN_ACCURACY:
                warnings.append(
                    f"HDDN balanced-division accuracy {s['accuracy']['mean']:.4f} is below {BALANCED_WARN_ACCURACY}"
                )
    report = {"split_mode": mode, "repeats": repeats, "models": summary, "runs": runs, "warnings": warnings}
    _write(outdir / "report.json", _dump(report))
    _write(outdir / "report.csv", _csv_text(TABLE_COLUMNS, rows))
    _sidecar(outdir / "report.json", "ablate", opts)
    for w in warnings:
        print("warning: " + w, file=sys.stderr)
    sys.stdout.write(_csv_text(TABLE_COLUMNS, rows))
    return EXIT_OK


PREDICT_DEFAULTS = {"checkpoint": None, "a": None, "b": None, "fraction": 0.5, "out": None}


def cmd_predict(args) -> int:
    opts = _resolve(args, PREDICT_DEFAULTS)
    _require(opts, "checkpoint", "a", "b")
    model = zoo.load_checkpoint(opts["checkpoint"])
    fa, fb = zoo.polymer_fingerprint(model, opts["a"]), zoo.polymer_fingerprint(model, opts["b"])
    frac = float(opts["fraction"])
    if not 0.0 <= frac <= 1.0:
        raise UsageError("--fraction must lie in [0, 1]")
    score = zoo.predict(model, data.vectorize_fingerprints(fa, fb, frac, False, model.lam))
    report = {
        "a": opts["a"],
        "b": opts["b"],
        "fraction_a": frac,
        "score": score,
        "criterion": model.criterion,
        "label": zoo.classify(score, model.criterion),
    }
    _emit(_dump(report), opts["out"])
    return EXIT_OK


SWEEP_DEFAULTS = {"checkpoint": None, "a": None, "b": None, "steps": 21, "out": None}


def cmd_sweep(args) -> int:
    opts = _resolve(args, SWEEP_DEFAULTS)
    _require(opts, "checkpoint", "a", "b", "out")
    model = zoo.load_checkpoint(opts["checkpoint"])
    sw = zoo.composition_sweep(model, opts["a"], opts["b"], int(opts["steps"]))
    out = Path(opts["out"])
    csv_path = out.with_suffix(".csv")
    rows = [[repr(x), repr(s), zoo.classify(s, sw.criterion)] for x, s in sw.rows()]
    _write(csv_path, _csv_text(["fraction_a", "score", "label"], rows))
    plot = svg.line_chart(
        {"score": (sw.fractions, sw.scores)},
        "composition sweep",
        "fraction of first polymer",
        "predicted score",
        hline=sw.criterion,
    )
    _write(out.with_suffix(".svg"), plot)
    _sidecar(csv_path, "sweep", opts)
    print(f"wrote {csv_path} and {out.with_suffix('.svg')}")
    return EXIT_OK


HSP_DEFAULTS = {"table": None, "a": None, "b": None, "fraction": 0.5, "threshold": 0.010, "out": None}


def cmd_hsp(args) -> int:
    opts = _resolve(args, HSP_DEFAULTS)
    _require(opts, "table", "a", "b")
    table = thermo.load_hsp_table(opts["table"])
    for key in ("a", "b"):
        if opts[key] not in table:
            raise UsageError(f"{opts[key]!r} not found in {opts['table']}")
    label, dh = thermo.hsp_classify(table[opts["a"]], table[opts["b"]], float(opts["fraction"]), float(opts["threshold"]))
    report = {
        "a": opts["a"],
        "b": opts["b"],
        "fraction_a": float(opts["fraction"]),
        "heat_of_mixing_cal_per_mol": dh,
        "threshold": float(opts["threshold"]),
        "label": label,
    }
    _emit(_dump(report), opts["out"])
    return EXIT_OK


FH_DEFAULTS = {
    "n1": None, "n2": None, "phi1": None, "phi2": None, "chi": None,
    "volume": None, "temperature": None, "delta1": None, "delta2": None, "units": "cal", "out": None,
}


def cmd_fh(args) -> int:
    opts = _resolve(args, FH_DEFAULTS)
    report: dict[str, Any] = {}
    chi = opts["chi"]
    if chi is None and opts["delta1"] is not None:
        _require(opts, "volume", "temperature", "delta1", "delta2")
        chi = thermo.chi_from_hsp(
            float(opts["volume"]), float(opts["temperature"]), float(opts["delta1"]), float(opts["delta2"]), opts["units"]
        )
        report["chi"] = chi
    if opts["n1"] is not None or opts["phi1"] is not None:
        _require(opts, "n1", "n2", "phi1", "phi2")
        if chi is None:
            raise UsageError("give --chi or the solubility-parameter inputs")
        inp = thermo.FloryHugginsInput(
            float(opts["n1"]), float(opts["n2"]), float(opts["phi1"]), float(opts["phi2"]), float(chi)
        )
        report["chi"] = float(chi)
        report["dG_over_RT"] = thermo.flory_huggins_dg(inp)
    if not report:
        raise UsageError("nothing to compute: give --n1/--n2/--phi1/--phi2 with --chi, or --volume/--temperature/--delta1/--delta2")
    _emit(_dump(report), opts["out"])
    return EXIT_OK


CONFTEST_DEFAULTS = {"n": None, "x0": None, "theta0": None, "alpha": None, "out": None}


def cmd_conftest(args) -> int:
    opts = _resolve(args, CONFTEST_DEFAULTS)
    _require(opts, "n", "x0")
    n, x0 = int(opts["n"]), int(opts["x0"])
    if (opts["theta0"] is None) == (opts["alpha"] is None):
        raise UsageError("give exactly one of --theta0 or --alpha")
    if opts["theta0"] is not None:
        theta0 = float(opts["theta0"])
        report = {"n": n, "x0": x0, "theta0": theta0, "p_value": stats.binom_pvalue(n, x0, theta0)}
    else:
        alpha = float(opts["alpha"])
        report = {"n": n, "x0": x0, "alpha": alpha, "theta0": stats.theta_at_significance(n, x0, alpha)}
    _emit(_dump(report), opts["out"])
    return EXIT_OK


ATTRIBUTE_DEFAULTS = {
    "checkpoint": None, "a": None, "b": None, "fraction": 0.5, "samples": 20000, "seed": 0,
    "dimension": None, "background": None, "out": None, "svg": None,
}


def cmd_attribute(args) -> int:
    opts = _resolve(args, ATTRIBUTE_DEFAULTS)
    _require(opts, "checkpoint", "a", "b")
    model = zoo.load_checkpoint(opts["checkpoint"])
    fa, fb = zoo.polymer_fingerprint(model, opts["a"]), zoo.polymer_fingerprint(model, opts["b"])
    inst = data.vectorize_fingerprints(fa, fb, float(opts["fraction"]), False, model.lam)
    background = None
    if opts["background"]:
        background = _vectorize_all(data.load_entries(opts["background"]), model.lam, model.radius, model.dims.fp_width)
    rep = attrib.shapley_sample(
        attrib.AttributionRequest(model, inst, background, n_samples=int(opts["samples"]), seed=int(opts["seed"]))
    )
    report = rep.as_dict()
    report["first_polymer"] = opts["a"] if inst.fp_first == fa else opts["b"]
    report["composition_first"] = inst.composition
    if opts["dimension"] is not None:
        report["dimension"] = {"bit": int(opts["dimension"]), "phi": rep.bit_value(int(opts["dimension"]))}
    _emit(_dump(report), opts["out"])
    if opts["out"]:
        _sidecar(opts["out"], "attribute", opts)
    if opts["svg"]:
        groups = {
            slot: [float(v) for (s, _), v in zip(rep.features, rep.values) if s == slot]
            for slot in ("first", "second", "composition")
        }
        _write(opts["svg"], svg.strip_chart({k: v for k, v in groups.items() if v}, "Shapley values", "phi"))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add(sub, name: str, func, help_text: str) -> argparse.ArgumentParser:
    p = sub.add_parser(name, help=help_text, description=help_text)
    p.add_argument("--config", help="TOML file with option defaults")
    p.set_defaults(func=func)
    return p


def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fp-width", type=int)
    p.add_argument("--feature-width", type=int)
    p.add_argument("--dense-layers", type=int)
    p.add_argument("--decision-widths", help="comma-separated hidden widths, e.g. 64,16")
    p.add_argument("--radius", type=int)
    p.add_argument("--lam", type=float, help="regression target for incompatible blends")
    p.add_argument("--criterion", type=float, help="decision threshold (default lam/2)")


def _train_flags(p: argparse.ArgumentParser) -> None:
    _model_flags(p)
    p.add_argument("--split", help="directory written by `blendnet split`")
    p.add_argument("--in", dest="input", help="raw dataset CSV, split on the fly")
    p.add_argument("--mode", choices=("random", "balanced"))
    p.add_argument("--split-seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float, help="learning rate (default depends on split mode)")
    p.add_argument("--seed", type=int)
    p.add_argument("--selection", choices=("best-valid-accuracy", "last"))
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blendnet", description="Polymer blend compatibility toolkit")
    parser.add_argument("--version", action="version", version=f"blendnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = _add(sub, "fp", cmd_fp, "circular fingerprint of one SMILES string")
    p.add_argument("--smiles")
    p.add_argument("--radius", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--out")

    p = _add(sub, "gen-synth", cmd_gen_synth, "generate a synthetic blend dataset with a known rule")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--t0", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--radius", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--out")

    p = _add(sub, "split", cmd_split, "split a dataset into train/valid/test")
    p.add_argument("--in", dest="input")
    p.add_argument("--out")
    p.add_argument("--mode", choices=("random", "balanced"))
    p.add_argument("--seed", type=int)
    p.add_argument("--ratios", help="train,valid,test fractions")

    p = _add(sub, "train", cmd_train, "train one model")
    p.add_argument("--variant")
    _train_flags(p)

    p = _add(sub, "eval", cmd_eval, "evaluate a checkpoint on a CSV")
    p.add_argument("--checkpoint")
    p.add_argument("--in", dest="input")
    p.add_argument("--out")

    p = _add(sub, "ablate", cmd_ablate, "train every variant several times and tabulate test metrics")
    p.add_argument("--variants", help="comma-separated subset of variants")
    p.add_argument("--repeats", type=int)
    _train_flags(p)

    for name, func, text in (
        ("predict", cmd_predict, "score one blend"),
        ("attribute", cmd_attribute, "Shapley attribution for one blend"),
    ):
        p = _add(sub, name, func, text)
        p.add_argument("--checkpoint")
        p.add_argument("--a", help="SMILES of the first polymer")
        p.add_argument("--b", help="SMILES of the second polymer")
        p.add_argument("--fraction", type=float, help="fraction of the first polymer")
        p.add_argument("--out")
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--dimension", type=int, help="fingerprint bit to report")
    p.add_argument("--background", help="CSV whose mean input serves as the baseline")
    p.add_argument("--svg", help="write a strip plot of the attributions")

    p = _add(sub, "sweep", cmd_sweep, "score a blend across the composition range")
    p.add_argument("--checkpoint")
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--steps", type=int)
    p.add_argument("--out", help="output stem; .csv and .svg are written")

    p = _add(sub, "hsp", cmd_hsp, "heat-of-mixing threshold classification")
    p.add_argument("--table", help="CSV of polymer_name,delta,density,molar_mass_repeat")
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--fraction", type=float, help="weight fraction of the first polymer")
    p.add_argument("--threshold", type=float)
    p.add_argument("--out")

    p = _add(sub, "fh", cmd_fh, "Flory-Huggins mixing free energy and interaction parameter")
    for flag in ("n1", "n2", "phi1", "phi2", "chi", "volume", "temperature", "delta1", "delta2"):
        p.add_argument("--" + flag, type=float)
    p.add_argument("--units", choices=("cal", "si"))
    p.add_argument("--out")

    p = _add(sub, "conftest", cmd_conftest, "binomial confidence test on an accuracy count")
    p.add_argument("--n", type=int)
    p.add_argument("--x0", type=int)
    p.add_argument("--theta0", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--out")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
