"""Command-line front end.

Subcommands: compute (metrics on embedding files), synth (toy scenario
generation), memcheck (calibrated-distance memorization report), correlate
(metric/human Pearson matrices), info (file header dump).

Exit codes: 0 success; 2 usage, input, or precondition errors; 3 when every
requested metric fails.  DGM_THREADS caps the internal worker pools.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import os
import sys

import numpy as np

from . import distributional, kernels, memorization, neighbors, reporting
from .errors import DgmError, MissingRole
from .linalg import summarize_gaussian
from .memorization import CtConfig, MemorizationConfig
from .reporting import HumanEvalRecord, MetricReport
from .store import read_embeddings, read_header, write_embeddings
from .synth import UNDERFIT_SCALES, SyntheticScenario, generate_scenario

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_ALL_FAILED = 3

METRIC_ROLES = {
    "fd": ("real", "gen"),
    "fd_inf": ("real", "gen"),
    "kd": ("real", "gen"),
    "is": ("probs",),
    "fls": ("real", "gen", "test"),
    "fls_pog": ("real", "gen", "test"),
    "prdc": ("real", "gen"),
    "rarity": ("real", "gen"),
    "vendi": ("gen",),
    "vendi_per_class": ("gen",),
    "authpct": ("real", "gen"),
    "ct": ("real", "gen", "test"),
    "ct_mod": ("real", "gen", "test"),
    "mem_ratio": ("real", "gen"),
    "asw": ("real", "gen"),
}
METRIC_NAMES = tuple(METRIC_ROLES)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except MissingRole as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DgmError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dgmeval",
        description="Generative-model evaluation metrics on embedding files.",
        epilog="Set DGM_THREADS to cap the internal worker pools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compute", help="compute metrics on embedding sets")
    c.add_argument("--real", help="real training embeddings (.dgme/.csv)")
    c.add_argument("--gen", help="generated embeddings (.dgme/.csv)")
    c.add_argument("--test", help="held-out real embeddings (.dgme/.csv)")
    c.add_argument("--probs", help="class-probability matrix (.dgme/.csv)")
    c.add_argument("--metrics", required=True,
                   help=f"comma-separated subset of: {','.join(METRIC_NAMES)}")
    c.add_argument("--out", required=True, help="report output path")
    c.add_argument("--format", choices=("json", "csv"), default="json")
    c.add_argument("--model", default=None, help="model id (default: gen file stem)")
    c.add_argument("--dataset", default=None, help="dataset id (default: real file stem)")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--k", type=int, default=5, help="neighborhood size for prdc/rarity")
    c.add_argument("--sample-cap", type=int, default=10_000)
    c.add_argument("--kernel", choices=("polynomial", "linear"), default="polynomial")
    c.add_argument("--kernel-degree", type=int, default=3)
    c.add_argument("--kernel-gamma", type=float, default=None, help="default: 1/d")
    c.add_argument("--kernel-coef0", type=float, default=1.0)
    c.add_argument("--kd-subsets", type=int, default=0,
                   help="average KD over this many seeded subsets instead of the full sets")
    c.add_argument("--kd-subset-size", type=int, default=1000)
    c.add_argument("--vendi-kernel", choices=("linear", "polynomial"), default="linear")
    c.add_argument("--vendi-no-normalize", action="store_true",
                   help="skip unit-normalizing rows before the Vendi kernel")
    c.add_argument("--fd-inf-repeats", type=int, default=1)
    c.add_argument("--tau", type=float, default=None,
                   help="calibrated-distance threshold for mem_ratio")
    c.add_argument("--mem-k", type=int, default=None,
                   help="calibration neighbors (default 50, or 3 with --intra-class)")
    c.add_argument("--intra-class", action="store_true")
    c.add_argument("--ct-cells", type=int, default=3)
    c.add_argument("--ct-pca", type=int, default=None, help="default: min(64, d)")
    c.add_argument("--ct-min-cell", type=int, default=2)
    c.add_argument("--ct-weight-by", choices=("test", "generated"), default="test")
    c.add_argument("--fls-iters", type=int, default=50)
    c.add_argument("--fls-step", type=float, default=0.5)
    c.add_argument("--fls-affine-a", type=float, default=1.0)
    c.add_argument("--fls-affine-b", type=float, default=0.0)
    c.add_argument("--is-mode", choices=("generated_marginal", "train_frequencies"),
                   default="generated_marginal")
    c.add_argument("--train-freqs", default=None,
                   help="label-frequency vector for --is-mode train_frequencies")
    c.set_defaults(func=cmd_compute)

    s = sub.add_parser("synth", help="generate a synthetic scenario")
    s.add_argument("--scenario", required=True,
                   choices=("true_distribution", "shrinkage", "memorized", "underfit"))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--scale", type=float, default=None,
                   help=f"underfit std multiplier, one of {UNDERFIT_SCALES}")
    s.add_argument("--scale-unchecked", action="store_true",
                   help="accept any positive --scale")
    s.add_argument("--n-train", type=int, default=1000)
    s.add_argument("--n-test", type=int, default=1000)
    s.add_argument("--n-gen", type=int, default=1000)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_synth)

    m = sub.add_parser("memcheck", help="calibrated-distance memorization report")
    m.add_argument("--gen", required=True)
    m.add_argument("--train", required=True)
    m.add_argument("--tau", type=float, default=None)
    m.add_argument("--k", type=int, default=None,
                   help="calibration neighbors (default 50, or 3 with --intra-class)")
    m.add_argument("--intra-class", action="store_true")
    m.add_argument("--out", required=True, help="output directory")
    m.set_defaults(func=cmd_memcheck)

    r = sub.add_parser("correlate", help="metric/human Pearson correlation matrices")
    r.add_argument("--reports", required=True, nargs="+",
                   help="metric report JSON files")
    r.add_argument("--human", required=True,
                   help='CSV with header "model,error_rate,stderr,participants"')
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(func=cmd_correlate)

    i = sub.add_parser("info", help="print an embedding file header")
    i.add_argument("path")
    i.set_defaults(func=cmd_info)
    return parser


# ---------------------------------------------------------------------------
# compute


def cmd_compute(args, parser) -> int:
    names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    if not names:
        parser.error("--metrics is empty")
    for name in names:
        if name not in METRIC_ROLES:
            parser.error(f"unknown metric {name!r}; choose from {','.join(METRIC_NAMES)}")

    sets = {}
    for role in ("real", "gen", "test"):
        path = getattr(args, role)
        if path is not None:
            sets[role] = read_embeddings(path)
    if args.probs is not None:
        sets["probs"] = read_embeddings(args.probs)

    for name in names:
        for role in METRIC_ROLES[name]:
            if role not in sets:
                raise MissingRole(role, name)
    if "mem_ratio" in names:
        if args.tau is None:
            parser.error("mem_ratio needs --tau; the threshold must be hand-tuned "
                         "per encoder and dataset")
        if not args.tau > 0:
            parser.error("--tau must be > 0")

    report = MetricReport(
        model_id=args.model or _stem(args.gen) or "model",
        dataset_id=args.dataset or _stem(args.real) or _stem(args.probs) or "dataset",
        timestamp=_timestamp(),
    )
    cache = {}
    for name in names:
        try:
            _run_metric(name, sets, args, report, cache)
        except DgmError as exc:
            report.errors[name] = str(exc)
    _write_report(report, args.out, args.format)
    succeeded = any(v is not None for v in report.values.values())
    if names and not succeeded:
        return EXIT_ALL_FAILED
    return EXIT_OK


def _run_metric(name, sets, args, report, cache):
    real = sets.get("real")
    gen = sets.get("gen")
    test = sets.get("test")
    seed = args.seed

    if name == "fd":
        for role, es in (("real", real), ("gen", gen)):
            if ("summary", role) not in cache:
                cache[("summary", role)] = summarize_gaussian(es)
        val = distributional.frechet_distance(cache[("summary", "real")],
                                              cache[("summary", "gen")])
        report.values["fd"] = val
        report.hyperparameters["fd"] = {"n_real": real.n, "n_gen": gen.n, "d": real.d}

    elif name == "fd_inf":
        val, fit = distributional.fd_infinity(real, gen, seed=seed,
                                              repeats=args.fd_inf_repeats)
        report.values["fd_inf"] = val
        report.hyperparameters["fd_inf"] = {
            "seed": seed, "repeats": args.fd_inf_repeats,
            "grid": [int(x) for x in fit.sizes],
        }
        report.details["fd_inf"] = {"sizes": [int(x) for x in fit.sizes],
                                    "fd_values": [float(x) for x in fit.values],
                                    "slope": fit.slope}

    elif name == "kd":
        spec = _kernel_spec(args, gen.d)
        val = kernels.kernel_distance(gen, real, spec, subsets=args.kd_subsets,
                                      subset_size=args.kd_subset_size, seed=seed)
        report.values["kd"] = val
        report.hyperparameters["kd"] = {
            "kernel": _kernel_echo(spec), "subsets": args.kd_subsets,
            "subset_size": args.kd_subset_size if args.kd_subsets else None,
            "seed": seed,
        }

    elif name == "is":
        freqs = _load_freqs(args.train_freqs) if args.train_freqs else None
        val = kernels.inception_style_score(sets["probs"].data,
                                            marginal_mode=args.is_mode,
                                            train_freqs=freqs)
        report.values["is"] = val
        report.hyperparameters["is"] = {"marginal_mode": args.is_mode,
                                        "n": sets["probs"].n,
                                        "classes": sets["probs"].d}

    elif name in ("fls", "fls_pog"):
        if "kde" not in cache:
            cache["kde"] = memorization.fit_mog_kde(gen, real, iters=args.fls_iters,
                                                    step=args.fls_step)
            cache["fls_pair"] = memorization.fls_metrics(
                cache["kde"], real, test,
                affine=(args.fls_affine_a, args.fls_affine_b))
        fls, pog = cache["fls_pair"]
        report.values[name] = fls if name == "fls" else pog
        report.hyperparameters[name] = {
            "iters": args.fls_iters, "step": args.fls_step,
            "affine": [args.fls_affine_a, args.fls_affine_b],
            "n_centers": gen.n,
        }

    elif name == "prdc":
        res = neighbors.prdc(gen, real, k=args.k, sample_cap=args.sample_cap,
                             seed=seed)
        report.values.update({"precision": res.precision, "recall": res.recall,
                              "density": res.density, "coverage": res.coverage})
        echo = {"k": args.k, "sample_cap": args.sample_cap, "seed": seed}
        for key in ("precision", "recall", "density", "coverage"):
            report.hyperparameters[key] = echo

    elif name == "rarity":
        index = neighbors.build_index(real, args.k)
        res = neighbors.rarity(gen, index)
        vals = res.values
        report.values["rarity_mean"] = float(vals.mean()) if vals.size else None
        report.values["rarity_on_manifold_fraction"] = res.on_manifold_fraction
        echo = {"k": args.k, "n_real": real.n, "n_gen": gen.n}
        report.hyperparameters["rarity_mean"] = echo
        report.hyperparameters["rarity_on_manifold_fraction"] = echo

    elif name == "vendi":
        spec = _vendi_spec(args, gen.d)
        res = kernels.vendi_score(gen, spec, normalize=not args.vendi_no_normalize)
        report.values["vendi"] = res.score
        report.hyperparameters["vendi"] = {"kernel": _kernel_echo(res.kernel),
                                           "normalize": res.normalized}

    elif name == "vendi_per_class":
        spec = _vendi_spec(args, gen.d)
        mean, per = kernels.per_class_vendi(gen, spec,
                                            normalize=not args.vendi_no_normalize)
        report.values["vendi_per_class"] = mean
        report.hyperparameters["vendi_per_class"] = {
            "kernel": _kernel_echo(spec.resolve(gen.d)),
            "normalize": not args.vendi_no_normalize,
        }
        report.details["vendi_per_class"] = {str(cls): score for cls, score in per}

    elif name == "authpct":
        report.values["authpct"] = memorization.auth_pct(gen, real)
        report.hyperparameters["authpct"] = {"n_real": real.n, "n_gen": gen.n}

    elif name in ("ct", "ct_mod"):
        cfg = CtConfig(cells=args.ct_cells, pca_components=args.ct_pca,
                       min_cell_count=args.ct_min_cell, seed=seed,
                       weight_by=args.ct_weight_by)
        score, cells = memorization.ct_score_full(real, gen, test, cfg,
                                                  modified=(name == "ct_mod"))
        report.values[name] = score
        report.hyperparameters[name] = {
            "cells": cfg.cells,
            "pca_components": cfg.pca_components
                               if cfg.pca_components is not None
                               else min(64, real.d),
            "min_cell_count": cfg.min_cell_count,
            "seed": seed, "weight_by": cfg.weight_by,
        }
        report.details[name] = {"cells": cells}

    elif name == "mem_ratio":
        cfg = MemorizationConfig(tau=args.tau, k=args.mem_k,
                                 intra_class=args.intra_class)
        matches = memorization.calibrated_l2(gen, real, cfg)
        report.values["mem_ratio"] = memorization.memorization_ratio(matches)
        report.hyperparameters["mem_ratio"] = {"tau": cfg.tau, "k": cfg.effective_k,
                                               "intra_class": cfg.intra_class}
        report.details["mem_ratio"] = {"l_deciles": _deciles([m.l for m in matches])}

    elif name == "asw":
        report.values["asw"] = distributional.asw(real, gen)
        report.hyperparameters["asw"] = {"n_real": real.n, "n_gen": gen.n, "d": real.d}

    else:  # pragma: no cover - guarded by the name check above
        raise AssertionError(name)


def _kernel_spec(args, d):
    return kernels.KernelSpec(kind=args.kernel, degree=args.kernel_degree,
                              gamma=args.kernel_gamma,
                              coef0=args.kernel_coef0).resolve(d)


def _vendi_spec(args, d):
    if args.vendi_kernel == "linear":
        return kernels.KernelSpec("linear")
    return kernels.KernelSpec(kind="polynomial", degree=args.kernel_degree,
                              gamma=args.kernel_gamma,
                              coef0=args.kernel_coef0).resolve(d)


def _kernel_echo(spec):
    if spec.kind == "linear":
        return {"kind": "linear"}
    return {"kind": spec.kind, "degree": spec.degree, "gamma": spec.gamma,
            "coef0": spec.coef0}


def _load_freqs(path):
    es = read_embeddings(path)
    if es.n != 1:
        raise ValueError(f"{path}: frequency input must have exactly one row")
    return es.data[0].astype(np.float64)


def _deciles(values):
    qs = np.percentile(np.asarray(values, dtype=np.float64), np.arange(0, 101, 10))
    return {f"p{p}": float(v) for p, v in zip(range(0, 101, 10), qs)}


def _stem(path):
    if not path:
        return None
    base = os.path.basename(path)
    return os.path.splitext(base)[0] or None


def _timestamp():
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        dt = datetime.datetime.fromtimestamp(int(epoch), datetime.timezone.utc)
    else:
        dt = datetime.datetime.now(datetime.timezone.utc)
    return dt.isoformat(timespec="seconds")


def _write_report(report, out, fmt):
    if fmt == "json":
        _atomic_write(out, report.to_json())
    else:
        lines = ["metric,value"]
        for key in sorted(report.values):
            val = report.values[key]
            lines.append(f"{key},{'' if val is None else repr(val)}")
        _atomic_write(out, "\n".join(lines) + "\n")


def _atomic_write(path, text):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args, parser) -> int:
    if args.scenario == "underfit" and args.scale is not None \
            and not args.scale_unchecked and args.scale not in UNDERFIT_SCALES:
        parser.error(f"--scale must be one of {UNDERFIT_SCALES} "
                     "(or pass --scale-unchecked for arbitrary positive values)")
    scenario = SyntheticScenario(kind=args.scenario, seed=args.seed,
                                 scale=args.scale, n_train=args.n_train,
                                 n_test=args.n_test, n_gen=args.n_gen,
                                 scale_unchecked=args.scale_unchecked)
    train, test, gen = generate_scenario(scenario)
    os.makedirs(args.out, exist_ok=True)
    files = {}
    for stage, es in (("train", train), ("test", test), ("gen", gen)):
        path = os.path.join(args.out, f"{stage}.dgme")
        write_embeddings(es, path)
        files[stage] = os.path.basename(path)
    from .synth import mixture_params
    means, stds = mixture_params(scenario)
    manifest = {
        "kind": scenario.kind, "seed": scenario.seed, "scale": scenario.scale,
        "n_train": scenario.n_train, "n_test": scenario.n_test,
        "n_gen": scenario.n_gen, "components": means.shape[0],
        "dim": means.shape[1],
        "means": means.tolist(),
        "cov_diagonals": (stds ** 2).tolist(),
        "files": files,
    }
    _atomic_write(os.path.join(args.out, "manifest.json"),
                  json.dumps(manifest, indent=2) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# memcheck


def cmd_memcheck(args, parser) -> int:
    if args.tau is None:
        parser.error("--tau is required: calibrated-distance thresholds need "
                     "to be hand-tuned per encoder and dataset")
    if not args.tau > 0:
        parser.error("--tau must be > 0")
    gen = read_embeddings(args.gen)
    train = read_embeddings(args.train)
    cfg = MemorizationConfig(tau=args.tau, k=args.k, intra_class=args.intra_class)
    matches = memorization.calibrated_l2(gen, train, cfg)
    ratio = memorization.memorization_ratio(matches)

    os.makedirs(args.out, exist_ok=True)
    rows = ["gen_index,train_index,l,memorized"]
    for m in matches:
        rows.append(f"{m.gen_index},{m.train_index},{m.l!r},{int(m.memorized)}")
    _atomic_write(os.path.join(args.out, "matches.csv"), "\n".join(rows) + "\n")
    summary = {
        "ratio": ratio, "tau": cfg.tau, "k": cfg.effective_k,
        "intra_class": cfg.intra_class, "n_gen": gen.n, "n_train": train.n,
        "l_deciles": _deciles([m.l for m in matches]),
    }
    _atomic_write(os.path.join(args.out, "summary.json"),
                  json.dumps(summary, indent=2) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# correlate


def cmd_correlate(args, parser) -> int:
    reports = []
    for path in args.reports:
        with open(path, "r", encoding="utf-8") as fh:
            reports.append(MetricReport.from_json(fh.read()))
    human = _read_human_csv(args.human)

    groups = {}
    for rep in reports:
        groups.setdefault(rep.dataset_id, []).append(rep)
    os.makedirs(args.out, exist_ok=True)
    failures = []
    wrote = 0
    for dataset_id in sorted(groups):
        try:
            result = reporting.correlate_reports(groups[dataset_id], human)
        except DgmError as exc:
            failures.append(f"{dataset_id}: {exc}")
            continue
        _write_correlations(args.out, dataset_id, result)
        wrote += 1
    for msg in failures:
        print(f"warning: {msg}", file=sys.stderr)
    if not wrote:
        print("error: no dataset group had enough overlapping models",
              file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def _read_human_csv(path):
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = ["model", "error_rate", "stderr", "participants"]
        if reader.fieldnames != expected:
            raise ValueError(
                f"{path}: header must be {','.join(expected)}, got {reader.fieldnames}"
            )
        out = []
        for row in reader:
            out.append(HumanEvalRecord(model_id=row["model"],
                                       error_rate=float(row["error_rate"]),
                                       stderr=float(row["stderr"]),
                                       participants=int(row["participants"])))
    return out


def _cell_dict(summary):
    if summary is None:
        return None
    return {"r": summary.r, "p": summary.p, "n": summary.n,
            "strong_and_significant": summary.strong_and_significant}


def _write_correlations(out_dir, dataset_id, result):
    safe = dataset_id.replace(os.sep, "_") or "dataset"
    rows = ["metric_a,metric_b,r,p,n,strong_and_significant"]

    def add(a, b, cell):
        if cell is None:
            rows.append(f"{a},{b},,,0,")
        else:
            rows.append(f"{a},{b},{cell.r!r},{cell.p!r},{cell.n},{int(cell.strong_and_significant)}")

    for name in result.metric_names:
        add(name, "human_error_rate", result.vs_human[name])
    for i, a in enumerate(result.metric_names):
        for b in result.metric_names[i:]:
            add(a, b, result.matrix[(a, b)])
    _atomic_write(os.path.join(out_dir, f"{safe}_correlation.csv"),
                  "\n".join(rows) + "\n")

    payload = {
        "dataset_id": dataset_id,
        "models": result.models,
        "vs_human": {k: _cell_dict(v) for k, v in result.vs_human.items()},
        "matrix": {f"{a}|{b}": _cell_dict(v) for (a, b), v in result.matrix.items()},
    }
    _atomic_write(os.path.join(out_dir, f"{safe}_flags.json"),
                  json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# info


def cmd_info(args, parser) -> int:
    head = read_header(args.path)
    for key in ("path", "version", "n", "d", "dtype", "labels",
                "encoder_id", "source_id"):
        print(f"{key}: {head[key]}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
