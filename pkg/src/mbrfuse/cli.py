"""Command-line entry point: ``mbrfuse <subcommand> ...``.

Exit status is 0 on success, 2 on usage errors and 1 on data errors
(mismatched line counts, malformed JSON lines, bad feature files). Output
files are written atomically; a failed run never leaves a partial file.
"""

from __future__ import annotations

import argparse
import functools
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .datakit import (
    DEFAULT_MAX_SECS,
    ManifestError,
    add_gaussian_noise,
    derive_seed,
    filter_manifest,
    spec_mask,
    subsample,
)
from .io import (
    DataError,
    features_to_text,
    lines_to_text,
    manifest_to_text,
    read_config,
    read_features,
    read_lines,
    read_manifest,
    read_pool_file,
    write_atomic,
)
from .mbr import UTILITIES, PoolError, mbr_combine_corpus
from .mcd import FeatureError, mcd_align
from .metrics import SMOOTHING_METHODS, MetricError, ScoreReport, score
from .textnorm import PROFILES, NormalizationError, Normalizer, apply_profile, load_mapping

log = logging.getLogger("mbrfuse")

DATA_ERRORS = (DataError, MetricError, PoolError, ManifestError, FeatureError, NormalizationError)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument types


def _pair(kind, name):
    def parse(value: str):
        parts = value.split(",")
        if len(parts) != 2:
            raise argparse.ArgumentTypeError(f"{name} must be two comma-separated values, got {value!r}")
        try:
            return tuple(kind(p) for p in parts)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad {name} value {value!r}") from None
    return parse


def _coef_range(value: str):
    try:
        lo, hi = (int(p) for p in value.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"range must look like LO:HI, got {value!r}") from None
    if lo < 0 or hi < lo:
        raise argparse.ArgumentTypeError(f"invalid range {value!r}")
    return lo, hi


def _non_negative(kind):
    def parse(value: str):
        try:
            v = kind(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a number, got {value!r}") from None
        if v < 0:
            raise argparse.ArgumentTypeError(f"expected a value >= 0, got {value!r}")
        return v
    return parse


def _bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off", ""):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {value!r}")


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="key = value file supplying defaults for any flag")

    parser = argparse.ArgumentParser(prog="mbrfuse", description="Speech-translation evaluation and MBR system combination.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("norm", parents=[common], help="normalize a text file line by line")
    p.add_argument("--profile", choices=list(PROFILES))
    p.add_argument("--mapping", metavar="FILE", help="orthographic mapping table (TSV)")
    p.add_argument("--in", dest="input", metavar="FILE")
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(handler=cmd_norm, required=("profile", "input", "out"), inputs=("input", "mapping"))

    p = sub.add_parser("score", parents=[common], help="score hypotheses against references")
    p.add_argument("--metric", choices=["wer", "cer", "bleu", "chrf"])
    p.add_argument("--ref", metavar="FILE")
    p.add_argument("--hyp", metavar="FILE")
    p.add_argument("--profile", choices=list(PROFILES), default="iwslt-eval")
    p.add_argument("--mapping", metavar="FILE")
    p.add_argument("--json", action="store_true", help="print the full report as JSON")
    p.set_defaults(handler=cmd_score, required=("metric", "ref", "hyp"), inputs=("ref", "hyp", "mapping"))

    p = sub.add_parser("mbr", parents=[common], help="MBR selection over two merged hypothesis pools")
    p.add_argument("--pool-a", metavar="FILE")
    p.add_argument("--pool-b", metavar="FILE")
    p.add_argument("--utility", choices=list(UTILITIES), default="bleu")
    p.add_argument("--smoothing", choices=list(SMOOTHING_METHODS), default="add1")
    p.add_argument("--weights", type=_pair(float, "--weights"), metavar="WA,WB")
    p.add_argument("--exclude-self", action="store_true")
    p.add_argument("--profile", choices=list(PROFILES), default="iwslt-eval")
    p.add_argument("--mapping", metavar="FILE")
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--audit", metavar="FILE", help="write a JSON audit with expected utilities")
    p.set_defaults(handler=cmd_mbr, required=("pool_a", "pool_b", "out"), inputs=("pool_a", "pool_b", "mapping"))

    p = sub.add_parser("mcd", parents=[common], help="DTW-aligned mel-cepstral distortion")
    p.add_argument("--ref", metavar="FILE")
    p.add_argument("--hyp", metavar="FILE")
    p.add_argument("--range", type=_coef_range, default=(1, 25), metavar="LO:HI")
    p.add_argument("--band-radius", type=_non_negative(int), metavar="R")
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=cmd_mcd, required=("ref", "hyp"), inputs=("ref", "hyp"))

    p = sub.add_parser("filter", parents=[common], help="filter a JSON-lines manifest")
    p.add_argument("--manifest", metavar="FILE")
    p.add_argument("--max-duration", type=float, default=DEFAULT_MAX_SECS, metavar="S")
    p.add_argument("--ratio-min", type=float, metavar="A")
    p.add_argument("--ratio-max", type=float, metavar="B")
    p.add_argument("--sample", type=int, metavar="N", help="keep a seeded sample of N filtered records")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--report", metavar="FILE")
    p.set_defaults(handler=cmd_filter, required=("manifest", "ratio_min", "ratio_max", "out", "report"), inputs=("manifest",))

    p = sub.add_parser("augment", parents=[common], help="noise and masking on a feature file")
    p.add_argument("--feats", metavar="FILE")
    p.add_argument("--sigma", type=_non_negative(float), default=0.0)
    p.add_argument("--time-mask", type=_pair(int, "--time-mask"), default=(0, 0), metavar="W,N")
    p.add_argument("--freq-mask", type=_pair(int, "--freq-mask"), default=(0, 0), metavar="W,N")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(handler=cmd_augment, required=("feats", "seed", "out"), inputs=("feats",))
    return parser


def _subparser(parser, command):
    for action in parser._subparsers._group_actions:
        if command in action.choices:
            return action.choices[command]
    raise KeyError(command)


def _apply_config(parser, args, argv):
    """Fill flags not given on the command line from the --config file."""
    config = read_config(args.config)
    sub = _subparser(parser, args.command)
    given = {a.split("=", 1)[0] for a in argv if a.startswith("--")}
    actions = {a.dest: a for a in sub._actions}
    for key, raw in config.items():
        dest = "input" if key == "in" else key
        action = actions.get(dest)
        if action is None or dest in ("config", "help"):
            raise UsageError(f"{args.config}: unknown option {key!r} for '{args.command}'")
        if any(opt in given for opt in action.option_strings):
            continue
        try:
            if isinstance(action, argparse._StoreTrueAction):
                value = _bool(raw)
            else:
                value = action.type(raw) if action.type else raw
        except argparse.ArgumentTypeError as e:
            raise UsageError(f"{args.config}: {key}: {e}") from None
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"{args.config}: {key}: invalid choice {value!r}")
        setattr(args, dest, value)


def _validate(parser, args):
    sub = _subparser(parser, args.command)
    flag = {a.dest: a.option_strings[0] for a in sub._actions if a.option_strings}
    missing = [flag[d] for d in args.required if getattr(args, d) is None]
    if missing:
        raise UsageError(f"the following arguments are required: {', '.join(missing)}")
    for dest in args.inputs:
        path = getattr(args, dest)
        if path is not None and not Path(path).is_file():
            raise UsageError(f"{flag[dest]}: no such file: {path}")
    for dest in ("out", "report", "audit"):
        path = getattr(args, dest, None)
        if path is not None:
            parent = Path(path).resolve().parent
            if not parent.is_dir() or not os.access(parent, os.W_OK):
                raise UsageError(f"{flag[dest]}: directory not writable: {parent}")


# ---------------------------------------------------------------------------
# handlers


def _normalizer(mapping_path) -> Normalizer:
    return Normalizer(mapping=load_mapping(mapping_path)) if mapping_path else Normalizer()


def cmd_norm(args) -> int:
    normalizer = _normalizer(args.mapping)
    lines = read_lines(args.input)
    out = [normalizer.apply(line, args.profile).text for line in lines]
    write_atomic(args.out, lines_to_text(out))
    return 0


def pipeline_score(ref_file, hyp_file, metric: str, profile: str = "iwslt-eval", normalizer: Normalizer | None = None) -> ScoreReport:
    """Normalize both files with the same profile, then score them."""
    refs = read_lines(ref_file)
    hyps = read_lines(hyp_file)
    if len(refs) != len(hyps):
        raise DataError(f"line count mismatch: {ref_file} has {len(refs)} lines, {hyp_file} has {len(hyps)}")
    if not refs:
        raise DataError("empty corpus: no lines to score")
    normalizer = normalizer or Normalizer()
    return score(
        metric,
        [normalizer.apply(r, profile) for r in refs],
        [normalizer.apply(h, profile) for h in hyps],
        profile,
    )


def cmd_score(args) -> int:
    report = pipeline_score(args.ref, args.hyp, args.metric, args.profile, _normalizer(args.mapping))
    if args.json:
        print(json.dumps(report.to_dict(), ensure_ascii=False, indent=2))
    else:
        print(f"{report.metric.upper()} {report.corpus_score:.1f} (profile {report.profile}, {report.segment_count} segments)")
    return 0


def cmd_mbr(args) -> int:
    pools_a = read_pool_file(args.pool_a)
    pools_b = read_pool_file(args.pool_b)
    normalizer = None
    if args.profile != "none":
        normalizer = functools.partial(apply_profile, profile=args.profile, normalizer=_normalizer(args.mapping))
    selections = mbr_combine_corpus(
        pools_a,
        pools_b,
        args.utility,
        system_weights=args.weights,
        exclude_self=args.exclude_self,
        smoothing=args.smoothing,
        normalizer=normalizer,
    )
    audit = None
    if args.audit:
        audit = {
            "utility": args.utility,
            "smoothing": args.smoothing,
            "profile": args.profile,
            "exclude_self": args.exclude_self,
            "weights": list(args.weights) if args.weights else None,
            "segments": [
                {
                    "segment_id": s.segment_id,
                    "selected_index": s.index,
                    "system": s.hypothesis.system,
                    "rank": s.hypothesis.rank,
                    "text": s.hypothesis.text,
                    "expected_utilities": s.expected_utilities,
                }
                for s in selections
            ],
        }
    write_atomic(args.out, lines_to_text(s.hypothesis.text.replace("\n", " ") for s in selections))
    if audit is not None:
        write_atomic(args.audit, json.dumps(audit, ensure_ascii=False, indent=1) + "\n")
    log.info("mbr: selected %d segments", len(selections))
    return 0


def cmd_mcd(args) -> int:
    ref = read_features(args.ref)
    hyp = read_features(args.hyp)
    if ref.dim != hyp.dim:
        raise DataError(f"feature dimension mismatch: {args.ref} has {ref.dim} columns, {args.hyp} has {hyp.dim}")
    result = mcd_align(ref, hyp, args.range, args.band_radius)
    if args.json:
        d = result.to_dict()
        d["band_radius"] = args.band_radius
        print(json.dumps(d, indent=2))
    else:
        print(f"MCD {result.mcd:.1f} dB ({result.frames_aligned} aligned frames)")
    return 0


def cmd_filter(args) -> int:
    records = read_manifest(args.manifest)
    kept, report = filter_manifest(records, args.max_duration, args.ratio_min, args.ratio_max)
    out = report.to_dict()
    if args.sample is not None:
        if not 0 < args.sample <= len(kept):
            raise DataError(f"--sample {args.sample} out of range: {len(kept)} records left after filtering")
        kept = subsample(kept, args.sample, args.seed)
        out["sampled"] = {"count": args.sample, "seed": args.seed}
    write_atomic(args.out, manifest_to_text(kept))
    write_atomic(args.report, json.dumps(out, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_augment(args) -> int:
    feats = read_features(args.feats)
    tw, tn = args.time_mask
    fw, fn = args.freq_mask
    if min(tw, tn, fw, fn) < 0:
        raise UsageError("mask widths and counts must be >= 0")
    feats = add_gaussian_noise(feats, args.sigma, derive_seed(args.seed, "noise"))
    feats = spec_mask(feats, tw, fw, tn, fn, derive_seed(args.seed, "mask"))
    write_atomic(args.out, features_to_text(feats))
    return 0


# ---------------------------------------------------------------------------


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # --help, --version and grammar errors
        return e.code if isinstance(e.code, int) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.config:
            if not Path(args.config).is_file():
                raise UsageError(f"--config: no such file: {args.config}")
            _apply_config(parser, args, argv)
        _validate(parser, args)
    except UsageError as e:
        _subparser(parser, args.command).print_usage(sys.stderr)
        print(f"mbrfuse {args.command}: error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"mbrfuse {args.command}: error: {e}", file=sys.stderr)
        return 2
    try:
        return args.handler(args)
    except UsageError as e:
        print(f"mbrfuse {args.command}: error: {e}", file=sys.stderr)
        return 2
    except DATA_ERRORS as e:
        print(f"mbrfuse {args.command}: error: {e}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())
