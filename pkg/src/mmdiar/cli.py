"""Command-line frontend.

Exit codes: 0 success, 1 usage error, 2 data error. Diagnostics go to
stderr; results go to stdout or the ``--out`` paths.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import corpus
from .cluster import ClusterConfig
from .corpus import Diarization, TrialScore
from .errors import DataError
from .fusion import FusionConfig, adjust_affinity, e2cp_propagate
from .metrics import MetricsConfig, compute_cpwer, compute_der, jer_per_speaker
from .pipeline import MODALITIES, PipelineConfig, diarize_with_info
from .synth import SynthSpec, gen_conversation, run_ablation, transcripts_from_diarization
from .verify import (
    VerificationConfig,
    asnorm_score,
    cosine_score,
    eer_from_scores,
    min_dcf_from_scores,
)

DEFAULT_SEED = 7
MODALITY_CODES = {"a": "audio", "v": "visual", "t": "textual"}


class UsageError(Exception):
    def __init__(self, message, usage=""):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, self.format_usage())


def _read(path) -> str:
    return Path(path).read_text(encoding="utf-8")


def _write(path, text: str):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


# ------------------------------------------------------------------- configs


def _from_dict(cls, data, where):
    if not isinstance(data, dict):
        raise UsageError(f"config section {where!r} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise UsageError(f"unknown config key(s) in {where!r}: {', '.join(unknown)}")
    kwargs = dict(data)
    if cls is PipelineConfig:
        if "cluster" in kwargs:
            kwargs["cluster"] = _from_dict(ClusterConfig, kwargs["cluster"], "pipeline.cluster")
        if "fusion" in kwargs:
            kwargs["fusion"] = _from_dict(FusionConfig, kwargs["fusion"], "pipeline.fusion")
        if "modalities" in kwargs:
            kwargs["modalities"] = frozenset(kwargs["modalities"])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise UsageError(f"config section {where!r}: {e}") from None


SECTIONS = {
    "pipeline": PipelineConfig,
    "verification": VerificationConfig,
    "metrics": MetricsConfig,
    "synth": SynthSpec,
}


def load_config(path):
    """Parse a JSON config file into dataclass instances keyed by section."""
    out = {name: cls() for name, cls in SECTIONS.items()}
    if path is None:
        return out
    try:
        data = json.loads(_read(path))
    except json.JSONDecodeError as e:
        raise UsageError(f"--config: invalid JSON ({e.msg})") from None
    if not isinstance(data, dict):
        raise UsageError("--config: top level must be an object")
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise UsageError(f"unknown config section(s): {', '.join(unknown)}")
    for name, section in data.items():
        out[name] = _from_dict(SECTIONS[name], section, name)
    return out


def _override(obj, **changes):
    changes = {k: v for k, v in changes.items() if v is not None}
    try:
        return dataclasses.replace(obj, **changes) if changes else obj
    except ValueError as e:
        raise UsageError(f"invalid option value: {e}") from None


def _parse_modalities(text):
    mods = set()
    for code in text.split(","):
        code = code.strip()
        name = MODALITY_CODES.get(code, code)
        if name not in MODALITIES:
            raise UsageError(f"--modalities: unknown modality {code!r}")
        mods.add(name)
    mods.add("audio")
    return frozenset(mods)


def pipeline_config(args, cfg) -> PipelineConfig:
    pc = cfg["pipeline"]
    cluster = _override(pc.cluster, kmeans_seed=args.seed, max_speakers=args.max_speakers,
                        prune_percentile=args.prune_percentile)
    fusion = _override(pc.fusion, alpha=args.alpha)
    mods = _parse_modalities(args.modalities) if args.modalities else None
    return _override(pc, cluster=cluster, fusion=fusion, modalities=mods)


def synth_spec(args, cfg) -> SynthSpec:
    spec = cfg["synth"]
    return _override(
        spec, speakers=args.speakers, dim=args.dim, sep=args.sep, noise=args.noise,
        duration=args.duration, turn_mean=args.turn_mean,
        evidence_noise_visual=args.visual_noise, evidence_noise_textual=args.textual_noise,
        seed=args.seed, corruption=args.corruption,
    )


# ---------------------------------------------------------------- subcommands


def _diarize_job(job):
    emb_path, vis_path, txt_path, pcfg, num_speakers = job
    segs, emb = corpus.load_embedding_records(_read(emb_path))
    vis = corpus.load_evidence_stream(_read(vis_path), "visual") if vis_path else None
    txt = corpus.load_evidence_stream(_read(txt_path), "textual") if txt_path else None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        d, info = diarize_with_info(segs, emb, vis, txt, pcfg, num_speakers)
    return d, info, [str(w.message) for w in caught]


def _pool_map(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def cmd_diarize(args, cfg):
    pcfg = pipeline_config(args, cfg)
    n = len(args.embeddings)
    for flag, paths in (("--visual", args.visual), ("--textual", args.textual)):
        if paths and len(paths) != n:
            raise UsageError(f"{flag}: expected {n} file(s) to match --embeddings")
    jobs = [(e, args.visual[i] if args.visual else None, args.textual[i] if args.textual else None,
             pcfg, args.num_speakers) for i, e in enumerate(args.embeddings)]
    results = _pool_map(_diarize_job, jobs, args.jobs)
    for _, _, msgs in results:
        for m in msgs:
            print(f"warning: {m}", file=sys.stderr)
    _write(args.out, "".join(corpus.emit_rttm(d) for d, _, _ in results))
    infos = [info for _, info, _ in results]
    if args.sidecar:
        _write(args.sidecar, json.dumps({"recordings": infos}, indent=2) + "\n")
    if args.json:
        print(json.dumps({"recordings": infos}))
    elif args.out not in (None, "-"):
        for info in infos:
            print(f"{info['recording']}: {info['k']} speakers, {info['segments']} segments, "
                  f"{info['must_link']} must-link / {info['cannot_link']} cannot-link")
    return 0


def cmd_score_trials(args, cfg):
    vcfg = _override(cfg["verification"], p_target=args.p_target, asnorm_top_k=args.top_k)
    trials = corpus.load_trial_list(_read(args.trials))
    enroll = corpus.load_embedding_table(_read(args.enroll_emb))
    test = corpus.load_embedding_table(_read(args.test_emb))
    cohort = None
    if args.cohort:
        cohort = np.vstack(list(corpus.load_embedding_table(_read(args.cohort)).values()))
    scored = []
    for e, t, is_target in trials:
        if e not in enroll:
            raise DataError(f"enroll id {e!r} has no embedding")
        if t not in test:
            raise DataError(f"test id {t!r} has no embedding")
        s = cosine_score(enroll[e], test[t])
        if cohort is not None:
            s = asnorm_score(s, cohort @ enroll[e], cohort @ test[t], vcfg.asnorm_top_k)
        scored.append(TrialScore(e, t, s, is_target))
    lines = "".join(f"{s.enroll_id} {s.test_id} {s.score:.6f} "
                    f"{'target' if s.is_target else 'nontarget'}\n" for s in scored)
    if args.out:
        _write(args.out, lines)
    elif not args.json:
        sys.stdout.write(lines)
    summary = {"trials": len(scored)}
    tar = np.array([s.score for s in scored if s.is_target])
    non = np.array([s.score for s in scored if not s.is_target])
    if tar.size and non.size:
        eer, eer_thr = eer_from_scores(tar, non)
        dcf, dcf_thr = min_dcf_from_scores(tar, non, vcfg)
        summary.update(eer=eer, eer_threshold=eer_thr, min_dcf=dcf, min_dcf_threshold=dcf_thr,
                       p_target=vcfg.p_target)
    if args.json:
        print(json.dumps(summary))
    elif "eer" in summary:
        print(f"EER {100 * summary['eer']:.2f}%  minDCF(p={vcfg.p_target:g}) "
              f"{summary['min_dcf']:.4f}", file=sys.stdout if args.out else sys.stderr)
    else:
        print("warning: need targets and nontargets for EER/minDCF", file=sys.stderr)
    return 0


def cmd_eval(args, cfg):
    mcfg = _override(cfg["metrics"], collar=args.collar)
    refs = corpus.parse_rttm(_read(args.ref))
    hyps = {d.recording_id: d for d in corpus.parse_rttm(_read(args.hyp))}
    for rec in hyps:
        if rec not in {r.recording_id for r in refs}:
            print(f"warning: hypothesis recording {rec!r} not in reference", file=sys.stderr)
    if bool(args.transcripts_ref) != bool(args.transcripts_hyp):
        raise UsageError("--transcripts-ref and --transcripts-hyp go together")
    tref = corpus.load_transcript_set(_read(args.transcripts_ref)) if args.transcripts_ref else None
    thyp = corpus.load_transcript_set(_read(args.transcripts_hyp)) if args.transcripts_hyp else None
    if not refs:
        raise DataError("reference RTTM has no SPEAKER lines")

    rows, total, jers = [], None, []
    cp_edits = cp_words = 0
    for ref in refs:
        hyp = hyps.get(ref.recording_id, Diarization(ref.recording_id))
        der = compute_der(ref, hyp, mcfg)
        per = jer_per_speaker(ref, hyp)
        jers.extend(per.values())
        total = der if total is None else total + der
        row = {"recording": ref.recording_id, "der": der.der, "missed": der.missed / der.scored,
               "false_alarm": der.false_alarm / der.scored, "confusion": der.confusion / der.scored,
               "jer": float(np.mean(list(per.values())))}
        if tref is not None and ref.recording_id in tref:
            cp, pairs = compute_cpwer(tref[ref.recording_id], thyp.get(ref.recording_id, {}))
            row["cpwer"] = cp
            cp_edits += sum(pairs.values())
            cp_words += sum(len(w) for w in tref[ref.recording_id].values())
        rows.append(row)
    overall = {"recording": "OVERALL", "der": total.der, "missed": total.missed / total.scored,
               "false_alarm": total.false_alarm / total.scored,
               "confusion": total.confusion / total.scored, "jer": float(np.mean(jers))}
    if cp_words:
        overall["cpwer"] = cp_edits / cp_words
    if args.json:
        print(json.dumps({**{k: v for k, v in overall.items() if k != "recording"},
                          "scored_seconds": total.scored, "recordings": rows}))
        return 0
    header = f"{'recording':<20}{'DER%':>8}{'missed%':>9}{'FA%':>8}{'conf%':>8}{'JER%':>8}{'cpWER%':>8}"
    print(header)
    for row in rows + [overall]:
        cp = f"{100 * row['cpwer']:8.2f}" if "cpwer" in row else f"{'-':>8}"
        print(f"{row['recording']:<20}{100 * row['der']:8.2f}{100 * row['missed']:9.2f}"
              f"{100 * row['false_alarm']:8.2f}{100 * row['confusion']:8.2f}"
              f"{100 * row['jer']:8.2f}{cp}")
    return 0


def cmd_propagate(args, cfg):
    fcfg = _override(cfg["pipeline"].fusion, alpha=args.alpha)
    w = corpus.load_matrix(_read(args.affinity))
    z = corpus.load_matrix(_read(args.constraints))
    if w.shape != z.shape:
        raise DataError(f"affinity {w.shape} and constraints {z.shape} differ in size")
    if (np.max(np.abs(w - w.T)) > 1e-9 or w.min() < 0 or w.max() > 1
            or np.max(np.abs(np.diag(w) - 1)) > 1e-9):
        raise DataError("affinity must be symmetric with entries in [0, 1] and unit diagonal")
    if np.max(np.abs(z - z.T)) > 1e-9 or np.abs(z).max() > 1:
        raise DataError("constraints must be symmetric with entries in [-1, 1]")
    z = z.copy()
    np.fill_diagonal(z, 0.0)
    f = e2cp_propagate(w, z, fcfg)
    _write(args.out, corpus.dump_matrix(f))
    if args.adjusted:
        _write(args.adjusted, corpus.dump_matrix(adjust_affinity(w, f)))
    if args.json:
        iu = np.triu_indices(f.shape[0], 1)
        print(json.dumps({"n": int(f.shape[0]), "alpha": fcfg.alpha,
                          "max_abs": float(np.abs(f).max()),
                          "must_link": int(np.sum(f[iu] > 0)), "cannot_link": int(np.sum(f[iu] < 0))}),
              file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return 0


def cmd_gen_synth(args, cfg):
    spec = synth_spec(args, cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(args.n_recordings):
        s = dataclasses.replace(spec, seed=spec.seed + i)
        conv = gen_conversation(s)
        rec = conv.truth.recording_id
        words = transcripts_from_diarization(conv.truth, s.duration)
        files = {
            "embeddings": (f"{rec}.emb.jsonl", corpus.dump_embedding_records(conv.segments, conv.embeddings)),
            "visual": (f"{rec}.visual.jsonl", corpus.dump_evidence_stream(conv.visual)),
            "textual": (f"{rec}.textual.jsonl", corpus.dump_evidence_stream(conv.textual)),
            "rttm": (f"{rec}.ref.rttm", corpus.emit_rttm(conv.truth)),
            "transcripts": (f"{rec}.transcripts.jsonl", corpus.dump_transcript_set({rec: words})),
        }
        for name, text in files.values():
            (out / name).write_text(text, encoding="utf-8")
        written.append({"recording": rec, **{k: str(out / v[0]) for k, v in files.items()}})
    if args.json:
        print(json.dumps({"recordings": written}))
    else:
        for w in written:
            print(f"{w['recording']}: {w['embeddings']}")
    return 0


def cmd_ablation(args, cfg):
    spec = synth_spec(args, cfg)
    pcfg = pipeline_config(args, cfg)
    mcfg = _override(cfg["metrics"], collar=args.collar)
    report = run_ablation(spec, args.n_recordings, pcfg, mcfg,
                          transcripts=not args.no_transcripts, jobs=args.jobs)
    if args.json:
        print(json.dumps({"n_recordings": args.n_recordings, "rows": report.summary()}))
    else:
        sys.stdout.write(report.to_table())
    return 0


# -------------------------------------------------------------------- parser


def _add_pipeline_flags(p):
    p.add_argument("--modalities", help="comma list of a,v,t (audio always on)")
    p.add_argument("--alpha", type=float, help="E2CP propagation weight in [0, 1)")
    p.add_argument("--max-speakers", type=int)
    p.add_argument("--prune-percentile", type=float)


def _add_synth_flags(p):
    p.add_argument("--speakers", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--sep", type=float, help="angle between speaker centroids (rad)")
    p.add_argument("--noise", type=float, help="std of the within-speaker rotation angle (rad)")
    p.add_argument("--duration", type=float)
    p.add_argument("--turn-mean", type=float)
    p.add_argument("--visual-noise", type=float)
    p.add_argument("--textual-noise", type=float)
    p.add_argument("--corruption", choices=("mixed", "drop", "flip"))
    p.add_argument("--n-recordings", type=int, default=1)


def _add_global_flags(p, suppress):
    def d(value):
        return argparse.SUPPRESS if suppress else value

    p.add_argument("--config", default=d(None),
                   help="JSON file with pipeline/verification/metrics/synth sections")
    p.add_argument("--seed", type=int, default=d(None), help=f"random seed (default {DEFAULT_SEED})")
    p.add_argument("--jobs", type=int, default=d(1), help="parallel recordings")
    p.add_argument("--json", action="store_true", default=d(False),
                   help="print one JSON object of metrics")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mmdiar", description="Multimodal speaker diarization toolkit.")
    _add_global_flags(parser, suppress=False)
    # the same flags after the subcommand; SUPPRESS keeps earlier values
    common = _Parser(add_help=False)
    _add_global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("diarize", parents=[common], help="embeddings (+ evidence) -> RTTM")
    p.add_argument("--embeddings", nargs="+", required=True, metavar="F")
    p.add_argument("--visual", nargs="+", metavar="F")
    p.add_argument("--textual", nargs="+", metavar="F")
    p.add_argument("--out", required=True, metavar="RTTM", help="output path, '-' for stdout")
    p.add_argument("--sidecar", metavar="JSON", help="write k, eigenvalues and constraint counts")
    p.add_argument("--num-speakers", type=int, help="skip eigengap estimation")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_diarize)

    p = sub.add_parser("score-trials", parents=[common], help="cosine trial scoring, EER, minDCF")
    p.add_argument("--trials", required=True)
    p.add_argument("--enroll-emb", required=True)
    p.add_argument("--test-emb", required=True)
    p.add_argument("--cohort", help="embeddings for adaptive s-norm")
    p.add_argument("--top-k", type=int)
    p.add_argument("--p-target", type=float)
    p.add_argument("--out", help="write scored trials here instead of stdout")
    p.set_defaults(func=cmd_score_trials)

    p = sub.add_parser("eval", parents=[common], help="DER / JER / cpWER")
    p.add_argument("--ref", required=True, metavar="RTTM")
    p.add_argument("--hyp", required=True, metavar="RTTM")
    p.add_argument("--transcripts-ref", metavar="F")
    p.add_argument("--transcripts-hyp", metavar="F")
    p.add_argument("--collar", type=float)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("propagate-constraints", parents=[common], help="dump E2CP-propagated F")
    p.add_argument("--affinity", required=True)
    p.add_argument("--constraints", required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--out", help="write F here instead of stdout")
    p.add_argument("--adjusted", help="also write the adjusted affinity")
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("gen-synth", parents=[common], help="write a synthetic corpus")
    _add_synth_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("ablation", parents=[common], help="modality ablation table")
    _add_synth_flags(p)
    _add_pipeline_flags(p)
    p.add_argument("--collar", type=float)
    p.add_argument("--no-transcripts", action="store_true")
    p.set_defaults(func=cmd_ablation)
    return parser


def _check_flags(parser, argv):
    """Name an unknown flag before argparse complains about missing ones."""
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sub = parser
    for tok in argv:
        if sub is parser and tok in sub_action.choices:
            sub = sub_action.choices[tok]
        elif tok.startswith("-") and len(tok) > 1 and not _is_number(tok):
            flag = tok.split("=", 1)[0]
            if flag not in sub._option_string_actions:
                raise UsageError(f"unrecognized argument {flag}", sub.format_usage())


def _is_number(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True


def run_cli(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        _check_flags(parser, argv)
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand", parser.format_usage())
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        try:
            cfg = load_config(args.config)
        except OSError as e:
            print(f"error: --config: {e}", file=sys.stderr)
            return 2
        return args.func(args, cfg)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        if e.usage:
            print(e.usage, file=sys.stderr, end="")
        return 1
    except (DataError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
