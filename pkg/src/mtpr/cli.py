"""Command-line interface: ``mtpr <command> [options]``.

Exit codes: 0 success, 1 recovery failure, 2 I/O, format or parameter errors.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import io as mio
from .errors import FormatError, MTPRError, ParameterError, RecoveryError
from .floral import find_floral_submatrix
from .gram import gram_extract, gram_grid
from .model import ModelParams, generate_instance
from .pipeline import evaluate_recovery, gram_eta, learn_private_images

log = logging.getLogger("mtpr")

DATA_NAME = "data.mtpr"
TRUTH_NAME = "truth.mtpt"
REPORT_NAME = "report.json"
RECOVERED_NAME = "recovered.npy"


def _threads():
    """Cap BLAS threads from MTPR_THREADS (0 or unset means library default)."""
    raw = os.environ.get("MTPR_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ParameterError(f"MTPR_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ParameterError("MTPR_THREADS must be nonnegative")
    if n == 0:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _params(a) -> ModelParams:
    return ModelParams(a.d, a.n_pub, a.n_priv, a.k_pub, a.k_priv, a.m, a.seed).validate()


def _add_model_flags(p, *, d=20000, m=1500):
    p.add_argument("--d", type=int, default=d, help="pixels per image")
    p.add_argument("--n-pub", type=int, default=0)
    p.add_argument("--n-priv", type=int, default=30)
    p.add_argument("--k-pub", type=int, default=0)
    p.add_argument("--k-priv", type=int, default=2)
    p.add_argument("--m", type=int, default=m, help="number of synthetic images")
    p.add_argument("--seed", type=int, default=0)


def cmd_generate(a) -> int:
    params = _params(a)
    inst = generate_instance(params)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    mio.write_dataset(out / DATA_NAME, inst.dataset)
    mio.write_truth(out / TRUTH_NAME, inst.truth, inst.selections, params)
    print(f"wrote {out / DATA_NAME} and {out / TRUTH_NAME}")
    return 0


def _report_doc(report, params) -> dict:
    F = report.floral
    return {
        "params": {k: getattr(params, k) for k in ("d", "n_pub", "n_priv", "k_pub", "k_priv", "m")},
        "floral": {"indices": list(F.indices), "labels": [list(F.labels[j]) for j in F.indices]},
        "ambiguity_count": report.ambiguity_count,
        "timing": report.timing,
        "diagnostics": report.diagnostics,
        "public_supports": [
            {"indices": list(s.indices), "confidence": s.confidence, "low_confidence": s.low_confidence}
            for s in report.public_supports
        ],
        "recovered_file": RECOVERED_NAME,
    }


def cmd_attack(a) -> int:
    ds = mio.read_dataset(a.input)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        report = learn_private_images(ds, public_method=a.public_method)
    except RecoveryError as err:
        mio.write_json(out / REPORT_NAME, {"error": str(err), "type": type(err).__name__})
        print(f"recovery failed: {err}", file=sys.stderr)
        return 1
    np.save(out / RECOVERED_NAME, report.recovered)
    mio.write_json(out / REPORT_NAME, _report_doc(report, ds.params))
    print(f"recovered {report.recovered.shape[0]} images; report in {out / REPORT_NAME}")
    return 0


def cmd_evaluate(a) -> int:
    path = Path(a.report)
    if path.is_dir():
        path = path / REPORT_NAME
    doc = mio.read_json(path)
    if "error" in doc:
        print(f"attack failed earlier: {doc['error']}", file=sys.stderr)
        return 1
    try:
        recovered = np.load(path.parent / doc["recovered_file"])
    except (OSError, ValueError, KeyError) as err:
        raise FormatError(f"cannot load recovered images: {err}") from err
    truth, _, params = mio.read_truth(a.truth)
    ev = evaluate_recovery(recovered, truth)
    result = {
        "exact_count": ev.exact_count,
        "max_abs_error": ev.max_abs_error,
        "matching": {str(i): j for i, j in ev.matching.items()},
        "relative_errors": {str(i): e for i, e in ev.errors.items()},
    }
    if a.out:
        mio.write_json(a.out, result)
    print(f"exact_count {ev.exact_count} of {recovered.shape[0]}; max abs error {ev.max_abs_error:.3g}")
    return 0 if ev.exact_count == recovered.shape[0] else 1


def cmd_gram(a) -> int:
    ds = mio.read_dataset(a.input)
    p = ds.params
    M = gram_extract(ds.images, gram_eta(p.k_pub, p.k_priv), gram_grid(p.k_pub, p.k_priv))
    mio.save_overlap(a.out, M)
    print(f"wrote {M.m}x{M.m} overlap matrix on grid {M.grid} to {a.out}")
    return 0


def cmd_floral(a) -> int:
    M = mio.load_overlap(a.input)
    k = a.k if a.k is not None else M.grid
    F = find_floral_submatrix(M, k)
    if F is None:
        print("no floral submatrix found", file=sys.stderr)
        return 1
    doc = {"k": k, "indices": list(F.indices), "labels": [list(F.labels[j]) for j in F.indices]}
    if a.out:
        mio.write_json(a.out, doc)
    for j in F.indices:
        print(j, " ".join(map(str, F.labels[j])))
    return 0


def cmd_selftest(a) -> int:
    from .selftest import run_selftest

    return 0 if run_selftest(seed=a.seed, verbose=True) else 1


def cmd_bench(a) -> int:
    params = _params(a)
    print(f"{'seed':>5} {'gram':>8} {'public':>8} {'subtract':>8} {'floral':>8} {'solve':>8} {'exact':>6}")
    status = 0
    for s in range(a.seeds):
        inst = generate_instance(ModelParams(**{**params.__dict__, "seed": params.seed + s}))
        t0 = time.perf_counter()
        try:
            r = learn_private_images(inst.dataset)
        except RecoveryError as err:
            print(f"{params.seed + s:>5} failed after {time.perf_counter() - t0:.2f}s: {err}")
            status = 1
            continue
        ev = evaluate_recovery(r, inst.truth)
        t = r.timing
        print(
            f"{params.seed + s:>5} "
            + " ".join(f"{t.get(k, 0.0):8.2f}" for k in ("gram", "public", "subtract", "floral", "solve"))
            + f" {ev.exact_count:>6}"
        )
    return status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mtpr", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample a dataset and its ground truth")
    _add_model_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("attack", help="recover private images from a dataset file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--public-method", choices=("threshold", "sdp"), default="threshold")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("evaluate", help="score an attack report against the truth file")
    p.add_argument("--report", required=True, help="report.json or its directory")
    p.add_argument("--truth", required=True)
    p.add_argument("--out", help="write the evaluation as JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gram", help="dump the integer overlap matrix of a dataset")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help=".npz output")
    p.set_defaults(func=cmd_gram)

    p = sub.add_parser("floral", help="search an overlap-matrix dump for a floral submatrix")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--k", type=int, help="subset size (default: the matrix grid)")
    p.add_argument("--out", help="write the assignment as JSON")
    p.set_defaults(func=cmd_floral)

    p = sub.add_parser("selftest", help="run quick randomized consistency checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("bench", help="time every attack stage on generated instances")
    _add_model_flags(p)
    p.add_argument("--seeds", type=int, default=3)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    a = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if a.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        with _threads():
            return a.func(a)
    except FormatError as err:
        print(f"error [{err.code}]: {err}", file=sys.stderr)
        return 2
    except (MTPRError, OSError, ValueError) as err:
        if isinstance(err, RecoveryError):
            print(f"recovery failed: {err}", file=sys.stderr)
            return 1
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
