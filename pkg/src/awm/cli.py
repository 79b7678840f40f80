"""``awm`` command line.

Exit codes: 0 success, 1 usage error (unknown command, missing or bad flag),
2 runtime failure.  ``--config FILE`` supplies ``key=value`` defaults (``#``
comments allowed, dashes and underscores interchangeable); explicit flags
always win.
"""

from __future__ import annotations

import argparse
import io
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from awm import harness, theory
from awm.attacks import JpegParams, NoiseParams, gaussian_attack, jpeg_attack
from awm.imageio import list_corpus, read_image, write_image
from awm.memory import AutoWeights, HeteroWeights, load_weights, save_weights
from awm.patterns import ber_from_overlap, load_patterns, overlap, random_bipolar, save_patterns
from awm.watermark import (
    awm_extract_image,
    awm_map_images,
    extract_features,
    zw_extract,
    zw_map,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def read_config(path: str | Path) -> dict[str, str]:
    """Parse ``key=value`` lines; keys are normalized to underscores."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value defaults file")
    p.add_argument("--seed", type=int, help="64-bit RNG seed (default 0)")
    p.add_argument("--out", help="output path (default: standard output)")


def _theory_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float, help="K/N (default 1.0)")
    p.add_argument("--order", type=int, help="temporal correlation depth n (default 4)")
    p.add_argument("--t-max", type=int)
    p.add_argument("--mode", choices=("AWM", "AMM"))
    p.add_argument("--q-method", choices=("orthant", "hermite"))
    p.add_argument("--threshold", type=float, help="recall success overlap (default 0.95)")


def _sim_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--N", "--n-bits", dest="N", type=int, help="watermark length (default 2000)")
    p.add_argument("--K", dest="K", type=int, help="feature length (default N)")
    p.add_argument("--P", dest="P", type=int, help="stored pairs")
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--t-max", type=int)
    p.add_argument("--order", type=int)
    p.add_argument("--engine", choices=("auto", "dense", "pattern"))
    p.add_argument("--threads", type=int, help="worker threads (0 = AWM_THREADS or all cores)")


def build_parser() -> argparse.ArgumentParser:
    root = _Parser(prog="awm", description="Associative watermarking toolkit")
    groups = root.add_subparsers(dest="group", metavar="{theory,simulate,watermark,attack,experiment}")
    groups.required = True

    th = groups.add_parser("theory", help="macroscopic state equations").add_subparsers(dest="cmd")
    th.required = True
    p = th.add_parser("trajectory", help="overlap trajectory CSV (t,m,sigma2,U)")
    _common(p)
    _theory_opts(p)
    p.add_argument("--m-star", type=float, help="initial feature overlap (AWM)")
    p.add_argument("--m0", type=float, help="initial state overlap (AMM)")
    p = th.add_parser("basin", help="critical/equilibrium overlap CSV")
    _common(p)
    _theory_opts(p)
    p.add_argument("--alphas", type=_floats, help="comma-separated loading rates")
    p = th.add_parser("capacity", help="storage capacity")
    _common(p)
    _theory_opts(p)

    sim = groups.add_parser("simulate", help="Monte Carlo recall").add_subparsers(dest="cmd")
    sim.required = True
    p = sim.add_parser("evolution", help="overlap evolution vs theory")
    _common(p)
    _sim_opts(p)
    p.add_argument("--m-stars", type=_floats)
    p.add_argument("--dump-trials", help="write per-trial overlaps to this CSV")
    p = sim.add_parser("basin", help="basin of attraction (theory + optional simulation)")
    _common(p)
    _sim_opts(p)
    p.add_argument("--alphas", type=_floats)
    p.add_argument("--gammas", type=_floats)
    p.add_argument("--simulate", type=_bool, help="add simulated m_t_max columns (true/false)")

    wm = groups.add_parser("watermark", help="AWM and zero-watermark mapping").add_subparsers(dest="cmd")
    wm.required = True
    p = wm.add_parser("map", help="train weights from images")
    _common(p)
    p.add_argument("--images", help="corpus directory of .pgm/.awmf images")
    p.add_argument("--K", dest="K", type=int)
    p.add_argument("--N", dest="N", type=int)
    p.add_argument("--watermarks", help="AWMPAT1 file (default: random per image from --seed)")
    p = wm.add_parser("extract", help="recall a watermark from an image")
    _common(p)
    p.add_argument("--image")
    p.add_argument("--hetero", help="AWMW1 hetero weights")
    p.add_argument("--auto", help="AWMW1 auto weights")
    p.add_argument("--t-max", type=int)
    p.add_argument("--reference", help="AWMPAT1 watermark to report BER against")
    p = wm.add_parser("zero-map", help="zero-watermark secret key")
    _common(p)
    p.add_argument("--image")
    p.add_argument("--watermark", help="AWMPAT1 file; first row is used unless --index")
    p.add_argument("--index", type=int)
    p = wm.add_parser("zero-extract", help="zero-watermark extraction")
    _common(p)
    p.add_argument("--image")
    p.add_argument("--key", help="AWMPAT1 secret key")
    p.add_argument("--reference", help="AWMPAT1 watermark to report BER against")

    at = groups.add_parser("attack", help="image degradations").add_subparsers(dest="cmd")
    at.required = True
    p = at.add_parser("jpeg", help="block-DCT quantization")
    _common(p)
    p.add_argument("image", nargs="?")
    p.add_argument("--quality", type=int)
    p = at.add_parser("noise", help="additive Gaussian noise")
    _common(p)
    p.add_argument("image", nargs="?")
    p.add_argument("--mean", type=float)
    p.add_argument("--std", type=float)
    p.add_argument("--clamp", type=_bool)

    ex = groups.add_parser("experiment", help="image BER and storage cost").add_subparsers(dest="cmd")
    ex.required = True
    p = ex.add_parser("ber", help="BER of zero-watermark, HMM and AWM per image")
    _common(p)
    _sim_opts(p)
    p.add_argument("--corpus", help="directory of .pgm/.awmf images")
    p.add_argument("--attack", choices=("none", "jpeg", "noise"))
    p.add_argument("--quality", type=int)
    p.add_argument("--mean", type=float)
    p.add_argument("--std", type=float)
    p.add_argument("--clamp", type=_bool)
    p = ex.add_parser("info", help="storage cost of both schemes")
    _common(p)
    p.add_argument("--P", dest="P", type=int)
    p.add_argument("--K", dest="K", type=int)
    p.add_argument("--N", dest="N", type=int)
    return root


def _leaf(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.ArgumentParser:
    """The subcommand parser that ``argv`` selects."""
    node = parser
    rest = list(argv)
    while True:
        subs = [a for a in node._actions if isinstance(a, argparse._SubParsersAction)]
        if not subs:
            return node
        words = [w for w in rest if not w.startswith("-")]
        if not words or words[0] not in subs[0].choices:
            return node
        rest = rest[rest.index(words[0]) + 1 :]
        node = subs[0].choices[words[0]]


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            cfg = read_config(known.config)
        except OSError as e:
            raise UsageError(f"cannot read config: {e}") from e
        leaf = _leaf(parser, argv)
        dests = {a.dest for a in leaf._actions}
        unknown = sorted(set(cfg) - dests)
        if unknown:
            print(f"awm: ignoring config keys not used here: {', '.join(unknown)}", file=sys.stderr)
        # string defaults go through each option's type converter
        leaf.set_defaults(**{k: v for k, v in cfg.items() if k in dests and k != "config"})
    return parser.parse_args(argv)


def _need(ns: argparse.Namespace, *names: str) -> None:
    missing = [n for n in names if getattr(ns, n, None) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"awm {ns.group} {ns.cmd}: missing required {flags}")


def _or(value, default):
    return default if value is None else value


def _emit(ns: argparse.Namespace, text: str) -> None:
    if ns.out:
        Path(ns.out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _theory_params(ns: argparse.Namespace, alpha: float | None = None) -> theory.TheoryParams:
    return theory.TheoryParams(
        alpha=_or(alpha, ns.alpha),
        gamma=_or(ns.gamma, 1.0),
        order=_or(ns.order, 4),
        t_max=_or(ns.t_max, 20),
        q_method=_or(ns.q_method, "orthant"),
    )


def _experiment_config(ns: argparse.Namespace, **extra) -> harness.ExperimentConfig:
    kw = dict(
        N=_or(ns.N, 2000),
        K=ns.K,
        P=ns.P,
        alpha=ns.alpha,
        gamma=ns.gamma,
        trials=_or(ns.trials, 20),
        seed=_or(ns.seed, 0),
        t_max=_or(ns.t_max, 20),
        order=_or(ns.order, 4),
        engine=_or(ns.engine, "auto"),
        threads=ns.threads,
    )
    kw.update({k: v for k, v in extra.items() if v is not None})
    try:
        return harness.ExperimentConfig(**kw)
    except harness.ConfigError as e:
        raise UsageError(str(e)) from e


def cmd_theory(ns: argparse.Namespace) -> None:
    if ns.cmd == "trajectory":
        mode = _or(ns.mode, "AWM" if ns.m0 is None else "AMM")
        start = ns.m_star if mode == "AWM" else ns.m0
        _need(ns, "alpha", "m_star" if mode == "AWM" else "m0")
        st = theory.trajectory(_theory_params(ns), start, mode)
        buf = io.StringIO()
        theory.write_trajectory_csv(buf, st)
        _emit(ns, buf.getvalue())
    elif ns.cmd == "basin":
        alphas = _or(ns.alphas, harness.DEFAULT_ALPHAS)
        modes = (ns.mode,) if ns.mode else ("AMM", "AWM")
        base = _theory_params(ns, alpha=alphas[0])
        thr = _or(ns.threshold, theory.SUCCESS_THRESHOLD)
        curves = []
        for mode in modes:
            crit = [theory.critical_overlap(base.with_alpha(a), mode, threshold=thr) for a in alphas]
            eq = [theory.equilibrium_overlap(base.with_alpha(a), mode).m for a in alphas]
            curves.append(theory.BasinCurve(mode, base.gamma, list(alphas), crit, eq))
        buf = io.StringIO()
        theory.write_basin_csv(buf, curves)
        _emit(ns, buf.getvalue())
    elif ns.cmd == "capacity":
        modes = (ns.mode,) if ns.mode else ("AMM", "AWM")
        base = _theory_params(ns, alpha=_or(ns.alpha, 0.1))
        thr = _or(ns.threshold, theory.SUCCESS_THRESHOLD)
        lines = ["model,order,gamma,alpha_c"]
        for mode in modes:
            ac = theory.storage_capacity(base, mode, threshold=thr)
            lines.append(f"{mode},{base.order},{theory.fmt(base.gamma)},{theory.fmt(ac)}")
        _emit(ns, "\n".join(lines) + "\n")


def cmd_simulate(ns: argparse.Namespace) -> None:
    if ns.cmd == "evolution":
        cfg = _experiment_config(ns, m_stars=ns.m_stars)
        res = harness.exp_overlap_evolution(cfg)
        if ns.dump_trials:
            Path(ns.dump_trials).write_text(res.dump_csv(), encoding="utf-8", newline="\n")
        _emit(ns, res.csv)
    elif ns.cmd == "basin":
        if ns.P is None and ns.alpha is None:
            ns.alpha = 0.1  # only used for validation; the grid sets each point
        cfg = _experiment_config(ns, alphas=ns.alphas, gammas=ns.gammas, simulate=ns.simulate)
        _emit(ns, harness.exp_basin(cfg))


def _load_row(path: str, index: int | None = None) -> np.ndarray:
    rows = load_patterns(path)
    return rows[0 if index is None else index]


def cmd_watermark(ns: argparse.Namespace) -> None:
    seed = _or(ns.seed, 0)
    if ns.cmd == "map":
        _need(ns, "images", "K", "out")
        files = list_corpus(ns.images)
        images = [read_image(f) for f in files]
        if ns.watermarks:
            wms = list(load_patterns(ns.watermarks))
        else:
            _need(ns, "N")
            wms = [random_bipolar(ns.N, seed, stream=i) for i in range(len(images))]
        hw, aw = awm_map_images(images, wms, ns.K)
        out = Path(ns.out)
        save_weights(out.with_suffix(".hetero.awmw"), hw)
        save_weights(out.with_suffix(".auto.awmw"), aw)
        save_patterns(out.with_suffix(".watermarks.awmpat"), np.stack(wms))
        lines = ["index,image"] + [f"{i},{f.name}" for i, f in enumerate(files)]
        sys.stdout.write("\n".join(lines) + "\n")
    elif ns.cmd == "extract":
        _need(ns, "image", "hetero", "auto")
        hw = load_weights(ns.hetero)
        aw = load_weights(ns.auto)
        if not isinstance(hw, HeteroWeights) or not isinstance(aw, AutoWeights):
            raise ValueError("--hetero must hold hetero weights and --auto auto weights")
        wm, trace = awm_extract_image(read_image(ns.image), hw, aw, t_max=_or(ns.t_max, 20))
        if ns.out:
            save_patterns(ns.out, wm)
        line = f"converged_at,two_cycle,ber\n{_or(trace.converged_at, '')},{trace.two_cycle},"
        if ns.reference:
            line += theory.fmt(ber_from_overlap(overlap(_load_row(ns.reference), wm)))
        sys.stdout.write(line + "\n")
    elif ns.cmd == "zero-map":
        _need(ns, "image", "watermark", "out")
        wm = _load_row(ns.watermark, ns.index)
        feat = extract_features(read_image(ns.image), wm.size)
        save_patterns(ns.out, zw_map(feat, wm))
    elif ns.cmd == "zero-extract":
        _need(ns, "image", "key")
        key = _load_row(ns.key)
        wm = zw_extract(extract_features(read_image(ns.image), key.size), key)
        if ns.out:
            save_patterns(ns.out, wm)
        if ns.reference:
            ber = ber_from_overlap(overlap(_load_row(ns.reference), wm))
            sys.stdout.write(f"ber\n{theory.fmt(ber)}\n")


def cmd_attack(ns: argparse.Namespace) -> None:
    _need(ns, "image", "out")
    img = read_image(ns.image)
    if ns.cmd == "jpeg":
        _need(ns, "quality")
        try:
            params = JpegParams(ns.quality)
        except ValueError as e:
            raise UsageError(str(e)) from e
        out = jpeg_attack(img, params)
    else:
        _need(ns, "mean", "std")
        out = gaussian_attack(img, NoiseParams(ns.mean, ns.std, _or(ns.seed, 0), bool(ns.clamp)))
    write_image(ns.out, out)


def cmd_experiment(ns: argparse.Namespace) -> None:
    if ns.cmd == "info":
        _need(ns, "P", "K", "N")
        _emit(ns, harness.exp_info_cost(ns.P, ns.K, ns.N))
        return
    _need(ns, "corpus")
    cfg = _experiment_config(ns)
    try:
        spec = harness.AttackSpec(
            kind=_or(ns.attack, "none"),
            quality=_or(ns.quality, 5),
            mean=_or(ns.mean, 100.0),
            std=_or(ns.std, 100.0),
            clamp=bool(ns.clamp),
        )
    except (ValueError, harness.ConfigError) as e:
        raise UsageError(str(e)) from e
    csv, _ = harness.exp_ber(cfg, ns.corpus, spec)
    _emit(ns, csv)


COMMANDS = {
    "theory": cmd_theory,
    "simulate": cmd_simulate,
    "watermark": cmd_watermark,
    "attack": cmd_attack,
    "experiment": cmd_experiment,
}


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        ns = parse_args(argv)
        COMMANDS[ns.group](ns)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        build_parser().print_usage(sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return 0 if e.code in (0, None) else 1
    except Exception as e:
        print(f"awm: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
