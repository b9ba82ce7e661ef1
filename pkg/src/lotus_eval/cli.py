"""Command-line entry point: ``lotus-eval <command> ...``.

Exit codes: 0 success, 2 usage error, 3 I/O error, 4 validation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import formats, postproc
from .masks import MaskVolume
from .metrics import (DEFAULT_PERFECT_CAP, EvaluationMode, SubjectPair, aggregate,
                      evaluate_subjects)
from .phantom import PhantomSpec, generate_phantom
from .postproc import ProbabilityVolume
from .scoring import (ScoreCard, TeamResult, build_scorecards, rank_teams,
                      significance_matrix)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_VALIDATION = 4


class UsageError(Exception):
    pass


def _load_pairs(manifest: formats.CohortManifest) -> list[SubjectPair]:
    pairs = []
    for entry in manifest.subjects:
        try:
            gt = formats.read_mask(entry.ground_truth, entry.subject_id)
            pred = formats.read_mask(entry.prediction, entry.subject_id)
            pairs.append(SubjectPair(gt, pred, entry.subject_id))
        except OSError as exc:
            raise OSError(f"subject {entry.subject_id!r}: {exc}") from exc
        except ValueError as exc:
            raise ValueError(f"subject {entry.subject_id!r}: {exc}") from exc
    return pairs


def _modes(flag: str) -> list[EvaluationMode]:
    if flag == "both":
        return [EvaluationMode.ALL_SLICES, EvaluationMode.TUMOR_ONLY]
    return [EvaluationMode.parse(flag)]


def cmd_evaluate(args) -> int:
    manifest = formats.load_manifest(args.manifest)
    pairs = _load_pairs(manifest)
    validation = None
    if args.validation:
        val_pairs = _load_pairs(formats.load_manifest(args.validation))
        validation = aggregate(
            evaluate_subjects(val_pairs, EvaluationMode.TUMOR_ONLY, args.perfect_cap, args.boundary, args.workers),
            args.weighting)

    metrics, subjects = {}, []
    for mode in _modes(args.mode):
        evals = evaluate_subjects(pairs, mode, args.perfect_cap, args.boundary, args.workers)
        metrics[mode.value] = aggregate(evals, args.weighting)
        subjects += [formats.subject_record(e) for e in evals if e is not None]

    record = formats.ResultsRecord(
        team_id=args.team_id or manifest.team_id,
        metrics=metrics,
        subjects=subjects,
        report_score=manifest.report_score,
        validation=validation,
        settings={"boundary": args.boundary, "perfect_cap": args.perfect_cap, "weighting": args.weighting},
    )
    record.write(args.output)
    for mode, m in metrics.items():
        print(f"{record.team_id} [{mode}] dice={m.dice:.4f} msd_inv={m.msd_inverse:.4f} hd95_inv={m.hd95_inverse:.4f}")
    return EXIT_OK


def _parse_reports(items) -> dict[str, float]:
    reports = {}
    for item in items or ():
        team, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--report expects TEAM=SCORE, got {item!r}")
        reports[team] = float(value)
    return reports


def _team_result(rec: formats.ResultsRecord, report: float) -> TeamResult:
    missing = [m for m in ("all", "tumor-only") if m not in rec.metrics]
    if missing:
        raise ValueError(f"team {rec.team_id!r}: record lacks test metrics for {missing}")
    if rec.validation is None:
        raise ValueError(f"team {rec.team_id!r}: record lacks validation metrics")
    return TeamResult(rec.team_id, rec.validation, rec.metrics["all"], rec.metrics["tumor-only"],
                      report, tuple(rec.dice_samples()))


def _leaderboard_doc(cards, board) -> dict:
    return {
        "format_version": formats.FORMAT_VERSION,
        "scorecards": [c.as_dict() for c in cards],
        "leaderboard": board.as_dict(),
    }


def cmd_score(args) -> int:
    records = [formats.ResultsRecord.read(p) for p in args.records]
    ids = [r.team_id for r in records]
    dupes = sorted({t for t in ids if ids.count(t) > 1})
    if dupes:
        raise ValueError(f"duplicate team ids: {dupes}")
    reports = _parse_reports(args.report)
    unknown = set(reports) - set(ids)
    if unknown:
        raise ValueError(f"--report names unknown teams: {sorted(unknown)}")
    results = [_team_result(r, reports.get(r.team_id, r.report_score)) for r in records]
    cards = build_scorecards(results, args.scale)
    sig = None
    samples = {r.team_id: r.dice_samples for r in results}
    if len(results) >= 2 and all(samples.values()):
        sig = significance_matrix(samples, args.alpha)
    board = rank_teams(cards, sig)
    formats.atomic_write_text(args.output, json.dumps(_leaderboard_doc(cards, board), indent=2) + "\n")
    print(board.table())
    return EXIT_OK


def cmd_rank(args) -> int:
    doc = json.loads(Path(args.scorecards).read_text())
    try:
        items = doc["scorecards"] if isinstance(doc, dict) else doc
        cards = [ScoreCard.from_dict(c) for c in items]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed score card: {exc}") from None
    board = rank_teams(cards)
    if args.output:
        formats.atomic_write_text(args.output, json.dumps(_leaderboard_doc(cards, board), indent=2) + "\n")
    print(board.table())
    return EXIT_OK


def _parse_chain(text: str) -> list[tuple[str, list[str]]]:
    steps = []
    for token in filter(None, (t.strip() for t in (text or "").split(","))):
        name, *params = token.split(":")
        steps.append((name, params))
    return steps


def _numbers(name, params, kinds, required):
    if not required <= len(params) <= len(kinds):
        raise ValueError(f"step {name!r} takes {required}..{len(kinds)} parameters, got {len(params)}")
    try:
        return [k(p) for k, p in zip(kinds, params)]
    except ValueError:
        raise ValueError(f"step {name!r}: bad parameter list {params}") from None


def run_chain(data, chain: str):
    """Apply a ``name[:param...]`` comma-separated chain to a volume."""
    for name, params in _parse_chain(chain):
        is_prob = isinstance(data, ProbabilityVolume)
        if name in ("threshold", "adaptive-threshold", "hysteresis") and not is_prob:
            raise ValueError(f"step {name!r} needs a probability volume")
        if name in ("remove-small", "dilate", "erode") and is_prob:
            raise ValueError(f"step {name!r} needs a mask; threshold first")
        if name == "threshold":
            (t,) = _numbers(name, params, [float], 1)
            data = postproc.apply_threshold(data, t)
        elif name == "adaptive-threshold":
            args = _numbers(name, params, [int, int], 0)
            n_peaks = args[0] if args else postproc.DEFAULT_PEAKS
            bins = args[1] if len(args) > 1 else postproc.DEFAULT_BINS
            t = postproc.adaptive_threshold(data, n_peaks=n_peaks, bins=bins)
            data = postproc.apply_threshold(data, t.value)
        elif name == "hysteresis":
            low, high = _numbers(name, params, [float, float], 2)
            data = MaskVolume(postproc.hysteresis_threshold(data, low, high), data.spacing)
        elif name == "remove-small":
            vals = _numbers(name, params, [int, int], 1)
            conn = vals[1] if len(vals) > 1 else 8
            data = postproc.map_slices(data, lambda s: postproc.remove_small_regions(s, vals[0], conn))
        elif name in ("dilate", "erode"):
            (r,) = _numbers(name, params, [float], 1)
            se = postproc.StructuringElement.circular(r)
            op = postproc.dilate if name == "dilate" else postproc.erode
            data = postproc.map_slices(data, lambda s: op(s, se))
        else:
            raise ValueError(f"unknown post-processing step {name!r}")
    return data


def _write_any(path, data):
    if isinstance(data, ProbabilityVolume):
        formats.write_prob(path, data)
    else:
        formats.write_mask(path, data)


def cmd_postproc(args) -> int:
    data = formats.read_volume(args.input)
    _write_any(args.output, run_chain(data, args.chain))
    return EXIT_OK


def cmd_phantom(args) -> int:
    try:
        doc = json.loads(Path(args.spec).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{args.spec}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or "dims" not in doc:
        raise ValueError(f"{args.spec}: field 'dims' is required")
    try:
        spec = PhantomSpec.from_dict(doc)
    except (TypeError, KeyError) as exc:
        raise ValueError(f"{args.spec}: invalid field: {exc}") from None
    image, mask = generate_phantom(spec, seed=args.seed)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_prob(out / "image.lprb", ProbabilityVolume(image.values, image.spacing))
    formats.write_mask(out / "mask.lmsk", mask)
    print(f"wrote {out / 'image.lprb'} and {out / 'mask.lmsk'} ({mask.count} tumour voxels)")
    return EXIT_OK


def cmd_convert(args) -> int:
    src, dst = Path(args.input), Path(args.output)
    if src.suffix == ".npy":
        arr = np.load(src, allow_pickle=False)
        spacing = tuple(args.spacing)
        if dst.suffix == ".lmsk":
            formats.write_mask(dst, MaskVolume(arr, spacing))
        elif dst.suffix == ".lprb":
            formats.write_prob(dst, ProbabilityVolume(arr, spacing))
        else:
            raise UsageError("output must end in .lmsk or .lprb")
    elif dst.suffix == ".npy":
        data = formats.read_volume(src)
        arr = data.voxels.astype(np.uint8) if isinstance(data, MaskVolume) else data.values
        buf = _npy_bytes(arr)
        formats.atomic_write_bytes(dst, buf)
    else:
        raise UsageError("convert needs one side to be a .npy file")
    return EXIT_OK


def _npy_bytes(arr) -> bytes:
    import io

    buf = io.BytesIO()
    np.save(buf, arr, allow_pickle=False)
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lotus-eval", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="score a cohort of predictions against ground truth")
    p.add_argument("manifest")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--mode", choices=["all", "tumor-only", "both"], default="both")
    p.add_argument("--boundary", choices=["2d", "3d"], default="2d")
    p.add_argument("--perfect-cap", type=float, default=DEFAULT_PERFECT_CAP)
    p.add_argument("--weighting", choices=["slice", "subject"], default="slice")
    p.add_argument("--validation", help="manifest scored in tumour-only mode as the validation branch")
    p.add_argument("--team-id")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("score", help="build score cards and a leaderboard from results records")
    p.add_argument("records", nargs="+")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--scale", choices=["linear", "rank"], default="linear")
    p.add_argument("--report", action="append", metavar="TEAM=SCORE")
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("rank", help="re-rank teams from a score card file")
    p.add_argument("scorecards")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("postproc", help="apply a post-processing chain to a mask or probability volume")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--chain", default="",
                   help="e.g. 'adaptive-threshold,remove-small:10' or 'hysteresis:0.3:0.7,dilate:1'")
    p.set_defaults(func=cmd_postproc)

    p = sub.add_parser("phantom", help="render a synthetic phantom from a JSON spec")
    p.add_argument("spec")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("convert", help="convert between .npy and LMSK/LPRB")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--spacing", type=float, nargs=3, default=(1.0, 1.0, 1.0))
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        parser.error("--workers must be at least 1")
    if getattr(args, "seed", 0) < 0:
        parser.error("--seed must be non-negative")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
