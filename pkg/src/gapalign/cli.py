"""Batch command-line surface wiring the library into complete workflows.

Subcommands: stats, frame, decompose, align, diagnose, simulate, verify,
sample-curve, bench.  Every report embeds the tool version, the full
flag set, and SHA-256 digests of the input files; outputs are written
atomically (temp file plus rename) so interrupted jobs never leave torn
artifacts.

Exit codes: 0 success, 1 usage error, 2 data error (bad files, shape or
version mismatches), 3 numerical degeneracy (zero norms, collapsed
spectra, diverged runs).
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import __version__
from .contrastive import (
    ContrastiveBatch,
    estimate_coupling,
    grad_anchor,
    leakage_bound_check,
    moment_identity_check,
)
from .diagnostics import (
    cosine_histogram,
    js_divergence,
    knn_mixing_rate,
    knn_overlap,
    modality_gap,
    sample_complexity_curve,
)
from .errors import DataFormatError, DegenerateInputError, GapAlignError
from .frame import ReferenceFrame, build_frame, decompose_gap, leakage_ratio
from .io import (
    StatsArtifact,
    atomic_write_text,
    file_digest,
    iter_embedding_batches,
    load_artifact,
    read_embeddings,
    save_artifact,
    write_embeddings,
)
from .moments import (
    CompensatedMean,
    Float32ReplayMean,
    ModalityStats,
    MomentAccumulator,
    shrink,
    stats_of,
)
from .realign import (
    AlignmentStats,
    BlockwiseStats,
    anchor_shift,
    apply_c3_baseline,
    estimate_blockwise,
    estimate_realign,
    substitution_operator,
)
from .simulator import SimulatorConfig, gap_necessity_ablation, run_toy_training
from .spectral import effective_rank, power_law_alpha, sym_eig


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 on usage errors instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _provenance(args, inputs):
    return {
        "tool": "gapalign",
        "version": __version__,
        "flags": {k: v for k, v in vars(args).items() if k != "func"},
        "input_digests": {path: file_digest(path) for path in inputs if path},
    }


def _write_json(path, payload):
    atomic_write_text(path, json.dumps(payload, indent=1, sort_keys=True) + "\n")


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------- stats


def _cmd_stats(args):
    acc = None
    for batch in iter_embedding_batches(args.in_path, args.batch_rows):
        if acc is None:
            acc = MomentAccumulator(batch.dims, track_cov=not args.no_cov)
        acc.accumulate(batch)
    if acc is None:
        raise DataFormatError(f"{args.in_path}: no rows found")
    stats = acc.finalize()
    if stats.covariance is not None and args.shrink > 0:
        stats.covariance = shrink(stats.covariance, args.shrink)
    artifact = StatsArtifact(
        kind="modality_stats",
        payload=stats.to_payload(),
        provenance=_provenance(args, [args.in_path]),
    )
    save_artifact(artifact, args.out)
    print(f"stats: n={stats.n} dims={stats.dims} trace={stats.trace:.6g} -> {args.out}")
    return 0


# ---------------------------------------------------------------- frame


def _load_stats(path) -> ModalityStats:
    artifact = load_artifact(path)
    if artifact.kind != "modality_stats":
        raise DataFormatError(f"{path}: expected a modality_stats artifact, got {artifact.kind}")
    return ModalityStats.from_payload(artifact.payload)


def _cmd_frame(args):
    stats_x = _load_stats(args.x)
    stats_y = _load_stats(args.y)
    if stats_x.covariance is None or stats_y.covariance is None:
        raise DataFormatError("frame construction needs covariances; rerun stats without --no-cov")
    frame = build_frame(stats_x.covariance, stats_y.covariance, energy=args.energy)
    artifact = StatsArtifact(
        kind="reference_frame",
        payload=frame.to_payload(),
        provenance=_provenance(args, [args.x, args.y]),
    )
    save_artifact(artifact, args.out)
    print(f"frame: dims={frame.dims} rank={frame.rank} energy={args.energy} -> {args.out}")
    return 0


def _load_frame(path) -> ReferenceFrame:
    artifact = load_artifact(path)
    if artifact.kind != "reference_frame":
        raise DataFormatError(f"{path}: expected a reference_frame artifact, got {artifact.kind}")
    return ReferenceFrame.from_payload(artifact.payload)


# ------------------------------------------------------------ decompose


def _cmd_decompose(args):
    frame = _load_frame(args.frame)
    set_x = read_embeddings(args.x)
    set_y = read_embeddings(args.y)
    dec = decompose_gap(set_x, set_y, frame)
    rebuilt = frame.lift(dec.bias_in) + dec.bias_out + frame.lift(dec.resid_in) + dec.resid_out
    recon_err = float(np.abs(rebuilt - (set_x.data.astype(np.float64) - set_y.data)).max())
    report = {
        "rows": set_x.rows,
        "rank": frame.rank,
        "mean_gap_norm": float(np.linalg.norm(dec.mean_gap)),
        "bias_in_norm": float(np.linalg.norm(dec.bias_in)),
        "bias_out_norm": float(np.linalg.norm(dec.bias_out)),
        "resid_in_trace": float(np.mean(np.sum(dec.resid_in**2, axis=1))),
        "resid_out_trace": float(np.mean(np.sum(dec.resid_out**2, axis=1))),
        "mean_gap_leakage": leakage_ratio(dec.mean_gap, frame)
        if np.linalg.norm(dec.mean_gap) > 0
        else 0.0,
        "max_reconstruction_error": recon_err,
        "provenance": _provenance(args, [args.x, args.y, args.frame]),
    }
    _write_json(args.report, report)
    print(f"decompose: |mean gap|={report['mean_gap_norm']:.6g} "
          f"|bias_out|={report['bias_out_norm']:.6g} -> {args.report}")
    return 0


# ---------------------------------------------------------------- align


def _calibration_stats(args):
    if args.stats:
        artifact = load_artifact(args.stats)
        if artifact.kind == "alignment_stats":
            return AlignmentStats.from_payload(artifact.payload), artifact.kind
        if artifact.kind == "blockwise_stats":
            return BlockwiseStats.from_payload(artifact.payload), artifact.kind
        raise DataFormatError(f"{args.stats}: not an alignment artifact ({artifact.kind})")
    if not (args.calib_src and args.calib_tgt):
        raise DataFormatError("provide --stats or both --calib-src and --calib-tgt")
    calib_src = read_embeddings(args.calib_src)
    calib_tgt = read_embeddings(args.calib_tgt)
    if args.method == "blockwise":
        frame = build_frame(
            stats_of(calib_src, track_cov=True).covariance,
            stats_of(calib_tgt, track_cov=True).covariance,
            energy=args.energy,
        )
        return estimate_blockwise(frame, calib_src, calib_tgt, eig_floor=args.eig_floor), "blockwise_stats"
    stats = estimate_realign(stats_of(calib_src), stats_of(calib_tgt), calib_src, eps=args.eps)
    return stats, "alignment_stats"


def _cmd_align(args):
    source = read_embeddings(args.in_path)
    stats, kind = _calibration_stats(args)
    if args.save_stats:
        save_artifact(
            StatsArtifact(
                kind=kind,
                payload=stats.to_payload(),
                provenance=_provenance(args, [args.calib_src, args.calib_tgt]),
            ),
            args.save_stats,
        )
    if args.method == "realign":
        if not isinstance(stats, AlignmentStats):
            raise DataFormatError("realign needs an alignment_stats artifact")
        out = substitution_operator(source, stats)
        data = out.data
    elif args.method == "blockwise":
        if not isinstance(stats, BlockwiseStats):
            raise DataFormatError("blockwise needs a blockwise_stats artifact")
        from .realign import apply_blockwise

        data = apply_blockwise(source.data.astype(np.float64), stats)
    elif args.method == "c3":
        data = apply_c3_baseline(
            source.data, stats.mu_src, stats.mu_tgt, noise_sigma=args.sigma, rng_seed=args.seed
        )
    else:  # anchor-only
        data = anchor_shift(source.data, stats.mu_src, stats.mu_tgt)
    from .io import EmbeddingSet

    write_embeddings(EmbeddingSet(np.asarray(data), source.modality_tag), args.out)
    print(f"align[{args.method}]: {source.rows} rows -> {args.out}")
    return 0


# -------------------------------------------------------------- diagnose


def _spectrum_summary(rows):
    cov = stats_of(rows, track_cov=True).covariance
    lam = sym_eig(cov).eigenvalues
    summary = {
        "trace": float(lam.sum()),
        "effective_rank": effective_rank(lam) if lam.max() > 0 else None,
        "condition_number": float(lam[0] / max(lam[-1], 1e-12 * lam[0])) if lam[0] > 0 else 1.0,
    }
    try:
        summary["power_law_alpha"] = power_law_alpha(lam)
    except (GapAlignError, ValueError):
        summary["power_law_alpha"] = None
    return lam, summary


def _cmd_diagnose(args):
    set_a = read_embeddings(args.a)
    set_b = read_embeddings(args.b)
    mu_a = set_a.data.astype(np.float64).mean(axis=0)
    mu_b = set_b.data.astype(np.float64).mean(axis=0)
    hist_a = cosine_histogram(set_a, num_pairs=args.pairs, bins=args.bins,
                              smoothing=args.smoothing, seed=args.seed)
    hist_b = cosine_histogram(set_b, num_pairs=args.pairs, bins=args.bins,
                              smoothing=args.smoothing, seed=args.seed + 1)
    lam_a, spec_a = _spectrum_summary(set_a.data)
    lam_b, spec_b = _spectrum_summary(set_b.data)
    report = {
        "rows_a": set_a.rows,
        "rows_b": set_b.rows,
        "modality_gap": modality_gap(mu_a, mu_b),
        "js_divergence_nats": js_divergence(hist_a, hist_b),
        "js_log_base": "natural",
        "knn_mixing_rate": knn_mixing_rate(set_a, set_b, k=args.k_mix),
        "knn_mixing_definition": "pooled neighbors, fraction from the other set",
        "spectrum_a": spec_a,
        "spectrum_b": spec_b,
        "provenance": _provenance(args, [args.a, args.b, args.overlap_with]),
    }
    if args.overlap_with:
        after = read_embeddings(args.overlap_with)
        report["knn_overlap"] = knn_overlap(set_a, after, k=args.k_overlap)
    if args.plots_dir:
        import os

        os.makedirs(args.plots_dir, exist_ok=True)
        mids = 0.5 * (hist_a.bin_edges[:-1] + hist_a.bin_edges[1:])
        _write_csv(f"{args.plots_dir}/cosine_hist.csv", ["bin_center", "mass_a", "mass_b"],
                   list(zip(mids.tolist(), hist_a.masses.tolist(), hist_b.masses.tolist())))
        _write_csv(f"{args.plots_dir}/spectrum_a.csv", ["k", "eigenvalue"],
                   list(enumerate(lam_a.tolist(), start=1)))
        _write_csv(f"{args.plots_dir}/spectrum_b.csv", ["k", "eigenvalue"],
                   list(enumerate(lam_b.tolist(), start=1)))
        pooled = np.vstack([set_a.data, set_b.data]).astype(np.float64)
        centered = pooled - pooled.mean(axis=0)
        basis = sym_eig(centered.T @ centered / pooled.shape[0]).eigenvectors[:, :2]
        coords = centered @ basis
        labels = [0] * set_a.rows + [1] * set_b.rows
        _write_csv(f"{args.plots_dir}/pca_coords.csv", ["pc1", "pc2", "set"],
                   [(float(c[0]), float(c[1]), l) for c, l in zip(coords, labels)])
    _write_json(args.report, report)
    print(f"diagnose: gap={report['modality_gap']:.6g} js={report['js_divergence_nats']:.6g} "
          f"mixing={report['knn_mixing_rate']:.4f} -> {args.report}")
    return 0


# -------------------------------------------------------------- simulate


def _parse_config_file(path):
    mapping = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataFormatError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            mapping[key.strip()] = value.strip()
    return mapping


def _cmd_simulate(args):
    config = SimulatorConfig.from_mapping(_parse_config_file(args.config)) if args.config else SimulatorConfig()
    if args.ablation:
        seeds = tuple(int(s) for s in args.seeds.split(","))
        report = gap_necessity_ablation(config, seeds=seeds)
        report["provenance"] = _provenance(args, [args.config])
        _write_json(args.ablation_report, report)
        print(f"ablation: baseline/shared = {report['baseline_over_shared']:.2f} "
              f"-> {args.ablation_report}")
        return 0
    trace = run_toy_training(config)
    header = trace.header()
    lines = [f"# gapalign {__version__} freeze_step={trace.freeze_step} rank={trace.rank}"]
    lines.append(",".join(header))
    for row in trace.rows():
        lines.append(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row))
    atomic_write_text(args.trace, "\n".join(lines) + "\n")
    print(f"simulate: {len(trace.steps)} logged steps (freeze at {trace.freeze_step}, "
          f"rank {trace.rank}) -> {args.trace}")
    return 0


# ---------------------------------------------------------------- verify


def _verify_gradients(rng):
    checks = []
    for trial in range(20):
        b, d = 8, 16
        tau = [0.05, 0.5, 1.0][trial % 3]
        anchors = rng.normal(size=(b, d))
        anchors /= np.linalg.norm(anchors, axis=1, keepdims=True)
        cands = rng.normal(size=(b, d))
        cands /= np.linalg.norm(cands, axis=1, keepdims=True)
        batch = ContrastiveBatch(anchors, cands, tau)
        i = int(rng.integers(b))
        g = grad_anchor(batch, i)
        h = 1e-5
        fd = np.empty(d)
        for axis in range(d):
            plus, minus = anchors[i].copy(), anchors[i].copy()
            plus[axis] += h
            minus[axis] -= h
            up = cands @ plus / tau
            dn = cands @ minus / tau
            lu = np.log(np.exp(up - up.max()).sum()) + up.max() - up[i]
            ld = np.log(np.exp(dn - dn.max()).sum()) + dn.max() - dn[i]
            fd[axis] = (lu - ld) / (2 * h)
        checks.append(np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1.0))
    worst = max(checks)
    return [("anchor gradient vs central differences", worst < 1e-6, f"max rel err {worst:.2e}")]


def _verify_span(rng):
    worst = 0.0
    for _ in range(20):
        b, d = 8, 16
        anchors = rng.normal(size=(b, d))
        anchors /= np.linalg.norm(anchors, axis=1, keepdims=True)
        cands = rng.normal(size=(b, d))
        cands /= np.linalg.norm(cands, axis=1, keepdims=True)
        batch = ContrastiveBatch(anchors, cands, 0.5)
        i = int(rng.integers(b))
        g = grad_anchor(batch, i)
        coeffs, *_ = np.linalg.lstsq(cands.T, g, rcond=None)
        worst = max(worst, np.linalg.norm(g - cands.T @ coeffs) / np.linalg.norm(g))
    return [("anchor gradient lies in candidate span", worst < 1e-10, f"max residual {worst:.2e}")]


def _verify_bounds(rng):
    violations = 0
    total = 0
    for _ in range(200):
        d = int(rng.integers(4, 65))
        r = int(rng.integers(1, max(2, d // 2)))
        frame = ReferenceFrame(
            basis=np.linalg.qr(rng.normal(size=(d, r)))[0], energy_threshold=0.9
        )
        basis_t = np.linalg.qr(rng.normal(size=(d, r)))[0]
        g = rng.normal(size=(50, r)) @ basis_t.T
        report = leakage_bound_check(g, frame, basis_t, coupling=0.0, slack=1e-12)
        violations += int(report.violation_fraction * report.n_checked)
        total += report.n_checked
    return [("geometric leakage bound", violations == 0, f"{violations}/{total} violations")]


def _verify_coupling(rng):
    n, r, m = 10_000, 6, 10
    planted = rng.normal(size=(m, r)) * 0.5
    delta = rng.normal(size=(n, r))
    signal = delta @ planted.T
    noise = rng.normal(size=(n, m)) * np.sqrt(np.mean(signal**2) / 10.0)
    est = estimate_coupling(delta, signal + noise, ridge=1e-8)
    rel = np.linalg.norm(est.matrix - planted) / np.linalg.norm(planted)
    indep = estimate_coupling(rng.normal(size=(n, r)), rng.normal(size=(n, m)), ridge=1e-6)
    res = moment_identity_check(delta, signal + noise, planted)
    return [
        ("planted coupling recovered at SNR 10", rel < 0.10, f"rel err {rel:.3f}"),
        ("independent residuals give near-zero fit", indep.r_squared < 0.02,
         f"R^2 {indep.r_squared:.4f}"),
        ("moment identities on planted model", res.cross_rel < 0.02 and res.cov_rel < 0.02,
         f"cross {res.cross_rel:.4f}, cov {res.cov_rel:.4f}"),
    ]


def _cmd_verify(args):
    rng = np.random.default_rng(args.seed)
    suites = {
        "gradients": _verify_gradients,
        "span": _verify_span,
        "bounds": _verify_bounds,
        "coupling": _verify_coupling,
    }
    names = list(suites) if args.suite == "all" else [args.suite]
    all_ok = True
    for name in names:
        for label, ok, detail in suites[name](rng):
            all_ok &= ok
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {label} ({detail})")
    return 0 if all_ok else 3


# ------------------------------------------------------------ sample-curve


def _cmd_sample_curve(args):
    src = read_embeddings(args.src)
    tgt = read_embeddings(args.tgt)
    sizes = [int(s) for s in args.sizes.split(",")]
    table = sample_complexity_curve(
        src, tgt, sizes, trials=args.trials, seed=args.seed, holdout=args.holdout
    )
    rows = []
    for entry in table:
        rows.append([entry["size"], entry["gap_mean"], entry["gap_std"]]
                    + [float(g) for g in entry["gaps"]])
    header = ["size", "gap_mean", "gap_std"] + [f"trial_{i}" for i in range(args.trials)]
    _write_csv(args.out, header, rows)
    print(f"sample-curve: {len(table)} sizes -> {args.out}")
    return 0


# ---------------------------------------------------------------- bench


def _cmd_bench(args):
    sizes = [int(float(s)) for s in args.sizes.split(",")]
    if sorted(sizes) != sizes:
        raise DataFormatError("bench sizes must be ascending")
    rng = np.random.default_rng(args.seed)
    dims = args.dims
    chunk = rng.normal(size=(10_000, dims)) + 0.75
    rows = []
    for n in sizes:
        acc = MomentAccumulator(dims, track_cov=not args.no_cov)
        reps = n // chunk.shape[0]
        start = time.perf_counter()
        for _ in range(reps):
            acc.accumulate(chunk)
        elapsed = time.perf_counter() - start
        done = reps * chunk.shape[0]
        rows.append([done, elapsed, done / elapsed, acc.state_nbytes()])
    _write_csv(args.out, ["rows", "seconds", "rows_per_sec", "state_bytes"], rows)

    replay_n = 500_000
    f64 = MomentAccumulator(dims, track_cov=False)
    f32 = Float32ReplayMean(dims)
    oracle = CompensatedMean(dims)
    gen = np.random.default_rng(args.seed + 1)
    for _ in range(replay_n // 10_000):
        block = gen.normal(size=(10_000, dims)) + 0.75
        f64.accumulate(block)
        f32.accumulate(block)
        oracle.accumulate(block)
    truth = oracle.mean()
    err64 = float(np.linalg.norm(f64.finalize().mean - truth))
    err32 = float(np.linalg.norm(f32.mean().astype(np.float64) - truth))
    per_row = [r[1] / r[0] for r in rows]
    spread = max(per_row) / min(per_row)
    print(f"bench: time/row spread x{spread:.3f} across sizes; state bytes "
          f"{sorted(set(int(r[3]) for r in rows))}")
    print(f"bench: f32 replay err {err32:.3e} vs f64 err {err64:.3e} "
          f"(ratio {err32 / max(err64, 1e-300):.1e}) at n={replay_n}")
    if args.report:
        _write_json(args.report, {
            "timing": [dict(zip(["rows", "seconds", "rows_per_sec", "state_bytes"], r))
                       for r in rows],
            "per_row_spread": spread,
            "f32_replay_error": err32,
            "f64_error": err64,
            "replay_rows": replay_n,
            "provenance": _provenance(args, []),
        })
    return 0


# ----------------------------------------------------------------- main


def build_parser():
    parser = _Parser(prog="gapalign", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", parents=[], help="streaming moments of an embedding file")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-cov", action="store_true")
    p.add_argument("--shrink", type=float, default=0.0, help="shrinkage intensity in [0,1]")
    p.add_argument("--batch-rows", type=int, default=8192)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("frame", help="build the frozen reference frame from two stats artifacts")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--energy", type=float, default=0.90)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_frame)

    p = sub.add_parser("decompose", help="bias/residual split of paired embedding files")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--frame", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_decompose)

    p = sub.add_parser("align", help="apply a training-free alignment operator")
    p.add_argument("--method", choices=["realign", "blockwise", "c3", "anchor-only"],
                   required=True)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stats", help="precalibrated artifact")
    p.add_argument("--calib-src")
    p.add_argument("--calib-tgt")
    p.add_argument("--save-stats")
    p.add_argument("--eps", type=float, default=1e-8)
    p.add_argument("--energy", type=float, default=0.90)
    p.add_argument("--eig-floor", type=float, default=1e-6)
    p.add_argument("--sigma", type=float, default=0.04)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_align)

    p = sub.add_parser("diagnose", help="alignment quality metrics for two embedding files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--plots-dir")
    p.add_argument("--overlap-with", help="index-aligned transformed copy of --a")
    p.add_argument("--pairs", type=int, default=200_000)
    p.add_argument("--bins", type=int, default=201)
    p.add_argument("--smoothing", action="store_true")
    p.add_argument("--k-mix", type=int, default=20)
    p.add_argument("--k-overlap", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("simulate", help="toy dual-encoder training with geometric tracing")
    p.add_argument("--config", help="key = value text file of SimulatorConfig fields")
    p.add_argument("--trace", default="trace.csv")
    p.add_argument("--ablation", action="store_true")
    p.add_argument("--ablation-report", default="ablation.json")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("verify", help="run the analytic-oracle check suites")
    p.add_argument("--suite", choices=["gradients", "span", "bounds", "coupling", "all"],
                   default="all")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("sample-curve", help="held-out gap vs calibration sample size")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--sizes", required=True)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--holdout", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sample_curve)

    p = sub.add_parser("bench", help="accumulator throughput, state size, and precision floor")
    p.add_argument("--sizes", default="100000,500000,1000000")
    p.add_argument("--dims", type=int, default=64)
    p.add_argument("--no-cov", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except (DegenerateInputError, np.linalg.LinAlgError) as exc:
        print(f"gapalign: numerical degeneracy: {exc}", file=sys.stderr)
        return 3
    except (DataFormatError, GapAlignError, OSError, ValueError) as exc:
        print(f"gapalign: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
