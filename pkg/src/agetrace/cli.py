"""``agetrace`` command line: simulate, detect, train, approximate, order, diagnose.

Exit codes: 0 success, 2 usage or validation error, 3 I/O error,
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .detection import DFI_THRESHOLD, detect_defects_dfi, site_observations
from .diagnostics import DEFAULT_THRESHOLDS, bias_report
from .errors import InvalidArgument, InvalidModel
from .estimators.knn import PixelwiseKNNModel, pixelwise_knn_classify, pixelwise_knn_train
from .estimators.ml import LikelihoodAgeModel, LikelihoodClassifier, approximate_image, fit_likelihood_model
from .estimators.naive_bayes import NBModel, nb_classify, nb_train
from .estimators.prnu import iip_place, mi_order, prnu_estimate
from .imaging import PixelCoord
from .manifest import read_manifest
from .sim.dataset import DatasetSpec, GroundTruth, synthesize_dataset
from .stats import classification_report, mae, relative_estimation_error

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_INTERNAL = 0, 2, 3, 4
ESTIMATORS = ("ml", "nb-ne", "nb-he", "nb-kde", "knn")

# documented defaults; a --config file may override them, explicit flags override both
DEFAULTS = {
    "seed": 0,
    "threshold": DFI_THRESHOLD,
    "kernel": 3,
    "session": -1,
    "estimator": "ml",
    "block_size": 200,
    "n_blocks": 45,
    "k_select": 100,
    "k_neighbors": 5,
    "val_every": 3,
    "n_sets": 20,
    "fraction": 0.8,
    **DEFAULT_THRESHOLDS,
}


class UsageError(Exception):
    pass


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return v


def load_config(path) -> dict:
    """JSON object, or ``key=value`` lines (``#`` comments, values parsed as JSON when possible)."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON config ({exc.msg})") from None
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def _resolve(args, keys) -> dict:
    cfg = load_config(args.config) if getattr(args, "config", None) else {}
    unknown = set(cfg) - set(keys)
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    out = {}
    for k in keys:
        v = getattr(args, k, None)
        out[k] = v if v is not None else cfg.get(k, DEFAULTS.get(k))
    return out


def _report(command: str, params: dict, body: dict) -> dict:
    return {"command": command, "version": __version__, "seed": params.get("seed"),
            "config": params, **body}


def _write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: not valid JSON ({exc.msg})") from None


def _scene_records(manifest, trusted: bool):
    return [r for r in manifest.select(trusted=trusted) if r.meta.kind != "dark-field"]


def _trusted(manifest):
    recs = _scene_records(manifest, True)
    if not recs:
        raise UsageError("the manifest has no labelled (trusted) scene images")
    return recs


# ---- subcommands -----------------------------------------------------------

def cmd_simulate(args) -> dict:
    spec_d = _read_json(args.spec)
    if args.seed is not None:
        spec_d["rng_seed"] = args.seed
    spec = DatasetSpec.from_dict(spec_d)
    manifest, truth = synthesize_dataset(spec, args.out)
    return _report("simulate", {"seed": spec.rng_seed, "spec": str(args.spec), "out": str(args.out)}, {
        "images": len(manifest.records),
        "defects": len(truth.defects),
        "manifest": str(Path(args.out) / "manifest.jsonl"),
    })


def cmd_detect(args) -> dict:
    p = _resolve(args, ["threshold", "session", "seed"])
    manifest = read_manifest(args.manifest)
    dark = manifest.select(kind="dark-field")
    if not dark:
        raise UsageError("the manifest has no dark-field images")
    sessions = sorted({r.session_index for r in dark})
    session = sessions[-1] if p["session"] == -1 else p["session"]
    chosen = [r for r in dark if r.session_index == session]
    if not chosen:
        raise UsageError(f"no dark-field images in session {session}")
    coords = detect_defects_dfi([manifest.load(r) for r in chosen], p["threshold"], [r.meta for r in chosen])
    return _report("detect", p, {
        "dark_fields": [r.path for r in chosen],
        "session": session,
        "count": len(coords),
        "defects": [c.as_dict() for c in coords],
    })


def _defect_coords(path) -> list:
    d = _read_json(path)
    coords = [PixelCoord.from_dict(x) for x in d.get("defects", [])]
    if not coords:
        raise UsageError(f"{path}: no defect coordinates")
    return coords


def cmd_train(args) -> dict:
    p = _resolve(args, ["estimator", "kernel", "seed", "block_size", "n_blocks", "k_select",
                        "k_neighbors", "val_every"])
    est = p["estimator"]
    if est not in ESTIMATORS:
        raise UsageError(f"estimator must be one of {ESTIMATORS}")
    manifest = read_manifest(args.manifest)
    recs = _trusted(manifest)
    images = [manifest.load(r) for r in recs]
    labels = [r.class_label for r in recs]
    if est == "knn":
        val = [i for i, _ in enumerate(recs) if i % p["val_every"] == p["val_every"] - 1]
        trn = [i for i in range(len(recs)) if i not in set(val)]
        model = pixelwise_knn_train(
            [images[i] for i in trn], [labels[i] for i in trn],
            [images[i] for i in val], [labels[i] for i in val],
            [recs[i].meta.timestamp for i in trn], [recs[i].meta.timestamp for i in val],
            p["block_size"], p["n_blocks"], p["k_select"], p["k_neighbors"], p["seed"])
        payload = {"estimator": est, "model": model.as_dict()}
    else:
        if not args.defects:
            raise UsageError(f"--defects is required for estimator {est}")
        coords = _defect_coords(args.defects)
        if est == "ml":
            model = fit_likelihood_model(images, [r.meta for r in recs], coords, p["kernel"])
            tau = float(np.median([r.meta.tau for r in recs]))
            payload = {"estimator": est, "model": model.as_dict(), "index_classes": labels, "tau": tau}
        else:
            feats, _ = site_observations(images, coords, p["kernel"])
            model = nb_train(est.split("-")[1].upper(), feats, labels)
            payload = {"estimator": est, "model": model.as_dict(), "coords": [c.as_dict() for c in coords],
                       "kernel": p["kernel"]}
    payload.update({"version": __version__, "config": p})
    _write_json(args.model_out, payload)
    return _report("train", p, {"model": str(args.model_out), "n_trusted": len(recs),
                                "classes": sorted(set(labels))})


class _Loaded:
    """Uniform predict interface over the stored estimators."""

    def __init__(self, payload: dict):
        try:
            self._load(payload)
        except (KeyError, TypeError) as exc:
            raise InvalidModel(f"malformed model file ({exc})") from None

    def _load(self, payload: dict):
        self.estimator = payload.get("estimator")
        if self.estimator not in ESTIMATORS:
            raise InvalidModel(f"unknown estimator {self.estimator!r} in model file")
        m = payload["model"]
        if self.estimator == "ml":
            self.model = LikelihoodAgeModel.from_dict(m)
            self.index_classes = payload["index_classes"]
            self.tau = payload["tau"]
        elif self.estimator == "knn":
            self.model = PixelwiseKNNModel.from_dict(m)
        else:
            self.model = NBModel.from_dict(m)
            if self.model.variant != self.estimator.split("-")[1].upper():
                raise InvalidModel("estimator name and model variant disagree")
            self.coords = [PixelCoord.from_dict(c) for c in payload["coords"]]
            self.kernel = payload.get("kernel", 3)

    def classifier(self):
        if self.estimator == "ml":
            return LikelihoodClassifier(self.model, self.index_classes, self.tau)
        if self.estimator == "knn":
            return lambda img: pixelwise_knn_classify(self.model, img)
        return lambda img: nb_classify(self.model, site_observations([img], self.coords, self.kernel)[0][0])[0]


def _true_index(trusted_times, t) -> int:
    return max(int(np.searchsorted(trusted_times, t, side="right")) - 1, 0)


def cmd_approximate(args) -> dict:
    p = _resolve(args, ["seed"])
    loaded = _Loaded(_read_json(args.model))
    manifest = read_manifest(args.manifest)
    queries = _scene_records(manifest, False)
    if not queries:
        raise UsageError("the manifest has no unlabelled query images")
    body: dict = {"estimator": loaded.estimator}
    if loaded.estimator == "ml":
        model = loaded.model
        if not model.trusted_timestamps:
            raise InvalidModel("model lacks trusted timestamps")
        times = np.asarray(model.trusted_timestamps)
        pred = [approximate_image(model, manifest.load(r), r.meta) for r in queries]
        true = [_true_index(times, r.meta.timestamp) for r in queries]
        err = mae(pred, true)
        body["queries"] = [{"path": r.path, "index": j, "true_index": t} for r, j, t in zip(queries, pred, true)]
        body["mae"] = err
        onsets = model.onset_indices()
        body["model_onsets"] = onsets
        body["relative_estimation_error"] = relative_estimation_error(err, onsets) if len(onsets) >= 2 else None
        if args.ground_truth:
            truth = GroundTruth.from_dict(_read_json(args.ground_truth))
            true_onsets = sorted({int(np.searchsorted(times, d.onset_time)) for d in truth.defects
                                  if times[0] < d.onset_time <= times[-1]})
            body["true_onsets"] = true_onsets
            body["relative_estimation_error_true_onsets"] = (
                relative_estimation_error(err, true_onsets) if len(true_onsets) >= 2 else None)
    else:
        clf = loaded.classifier()
        pred = [clf(manifest.load(r)) for r in queries]
        true = [r.session_index for r in queries]
        body["queries"] = [{"path": r.path, "class": c, "session_index": t} for r, c, t in zip(queries, pred, true)]
        body["classification"] = classification_report(pred, true).as_dict()
    return _report("approximate", p, body)


def cmd_order(args) -> dict:
    p = _resolve(args, ["seed"])
    manifest = read_manifest(args.manifest)
    recs = _trusted(manifest)
    clusters = sorted({r.session_index for r in recs})
    fields = [prnu_estimate([manifest.load(r) for r in recs if r.session_index == s], label=str(s))
              for s in clusters]
    res = mi_order(fields)
    body = {"clusters": clusters, "order": [clusters[i] for i in res.order], "tied": res.tied,
            "tied_orders": [[clusters[i] for i in o] for o in res.tied_orders],
            "correlation": res.correlation.tolist(), "score": res.score}
    ordered = [fields[i] for i in res.order]
    body["placements"] = [
        {"path": r.path, "cluster": clusters[res.order[iip_place(manifest.load(r), ordered)]],
         "session_index": r.session_index}
        for r in _scene_records(manifest, False)]
    return _report("order", p, body)


def cmd_diagnose(args) -> dict:
    p = _resolve(args, ["seed", "n_sets", "fraction", "delta1", "delta2", "delta3"])
    loaded = _Loaded(_read_json(args.model))
    manifest = read_manifest(args.manifest)
    samples: dict = {}
    for r in _trusted(manifest):
        samples.setdefault(r.class_label, []).append(manifest.load(r))
    tests = _scene_records(manifest, False)
    if not tests:
        raise UsageError("held-out query images are needed as the original test set")
    rep = bias_report(loaded.classifier(), samples, [manifest.load(r) for r in tests],
                      [r.session_index for r in tests], p["fraction"], p["n_sets"], p["seed"],
                      {k: p[k] for k in DEFAULT_THRESHOLDS})
    if args.csv:
        Path(args.csv).write_text(rep.to_csv())
    return _report("diagnose", p, {"estimator": loaded.estimator, "bias_report": rep.as_dict()})


# ---- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="agetrace", description="Temporal forensics of image sensor traces.")
    ap.add_argument("--version", action="version", version=f"agetrace {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, manifest=True):
        if manifest:
            sp.add_argument("--manifest", required=True, help="dataset manifest (JSON lines)")
        sp.add_argument("--config", help="key=value or JSON file with parameter defaults")
        sp.add_argument("--seed", type=int, help="random seed (default 0)")
        sp.add_argument("--out", help="report path (default stdout)")

    sp = sub.add_parser("simulate", help="synthesize a dataset directory from a JSON spec")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--seed", type=int, help="overrides rng_seed given in --spec")
    sp.add_argument("--report", help="run report path (default stdout)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("detect", help="locate defects in dark-field images")
    common(sp)
    sp.add_argument("--threshold", type=float, help=f"dark-field threshold (default {DFI_THRESHOLD})")
    sp.add_argument("--session", type=int, help="session whose dark fields are used (default: last)")
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("train", help="fit an age estimator on the trusted images")
    common(sp)
    sp.add_argument("--estimator", choices=ESTIMATORS)
    sp.add_argument("--defects", help="detect report with defect coordinates (ml and nb-*)")
    sp.add_argument("--model-out", required=True)
    sp.add_argument("--kernel", type=int, choices=(3, 5, 7), help="median kernel (default 3)")
    sp.add_argument("--block-size", type=_positive_int, help="knn block side (default 200)")
    sp.add_argument("--n-blocks", type=_positive_int, help="knn blocks (default 45)")
    sp.add_argument("--k-select", type=_positive_int, help="knn kept pixel classifiers per block (default 100)")
    sp.add_argument("--k-neighbors", type=_positive_int, help="knn neighbors (default 5)")
    sp.add_argument("--val-every", type=_positive_int,
                    help="every n-th trusted image goes to knn validation (default 3)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("approximate", help="estimate the age of the query images")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--ground-truth", help="simulator ground truth for onset-based metrics")
    sp.set_defaults(func=cmd_approximate)

    sp = sub.add_parser("order", help="order trusted sessions by PRNU correlation and place queries")
    common(sp)
    sp.set_defaults(func=cmd_order)

    sp = sub.add_parser("diagnose", help="average-image content-bias audit of a trained model")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--n-sets", type=_positive_int, help="average-image sets (default 20)")
    sp.add_argument("--fraction", type=float, help="subsample fraction per set (default 0.8)")
    sp.add_argument("--delta1", type=float)
    sp.add_argument("--delta2", type=float)
    sp.add_argument("--delta3", type=float)
    sp.add_argument("--csv", help="also write the accuracy table as CSV")
    sp.set_defaults(func=cmd_diagnose)
    return ap


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        report = args.func(args)
        _write_json(args.report if args.command == "simulate" else args.out, report)
    except (UsageError, InvalidArgument, InvalidModel) as exc:
        print(f"agetrace {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"agetrace {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:
        print(f"agetrace {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
