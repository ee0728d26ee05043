"""Batch command-line surface: metrics, evm-map, constellation, monte-carlo, selftest.

Every subcommand is a pure function of (config, seed); re-runs reproduce
output files byte for byte.  Exit codes: 0 success, 1 degenerate
computation (for example every Monte-Carlo scenario rejected), 2 invalid
input or configuration.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    AngleOutOfRangeError,
    ConfigError,
    DegenerateAngleError,
    DegenerateBasisError,
    InvalidArgumentError,
    PatternFormatError,
    RatioSetMismatchError,
    SingularChannelError,
    UndefinedRatioError,
)
from .iokit import (
    RunConfig,
    load_config,
    load_pattern_csv,
    save_metrics_json,
    save_results,
)
from .link import (
    PHI_POL,
    THETA_POL,
    NoiseModel,
    build_channel,
    constellation_at_angle,
    received_constellation,
    run_monte_carlo,
)
from .modulation import PskConstellation, RatioSet
from .patterns import (
    BasisPair,
    StatePatternSet,
    apply_perturbation,
    basis_correlation_db,
    default_mirror_profile,
    evm_map,
    generate_mirror_pair,
    generate_perturbation,
    perturbed_basis,
    power_imbalance_db,
)
from .sphere import build_grid, integrate_power

_INPUT_ERRORS = (
    ConfigError,
    PatternFormatError,
    FileNotFoundError,
    InvalidArgumentError,
    RatioSetMismatchError,
    UndefinedRatioError,
    AngleOutOfRangeError,
)
_DEGENERATE_ERRORS = (DegenerateBasisError, DegenerateAngleError, SingularChannelError)


@dataclass(frozen=True)
class Assembly:
    """Domain objects instantiated from one run configuration."""

    config: RunConfig
    constellation: PskConstellation
    ratios: RatioSet
    free_states: StatePatternSet
    free_basis: BasisPair
    perturbed_states: StatePatternSet
    perturbed_basis: BasisPair


def _assemble(cfg: RunConfig) -> Assembly:
    constellation = PskConstellation(cfg.constellation_order, cfg.constellation_offset)
    ratios = constellation.ratio_set
    if cfg.pattern_files is not None:
        patterns = {k: load_pattern_csv(p) for k, p in cfg.pattern_files.items()}
        free = StatePatternSet(ratios=ratios, patterns=patterns)
        grid = free.grid
    else:
        grid = build_grid(cfg.n_theta, cfg.n_phi)
        lobes = cfg.antenna_lobes if cfg.antenna_lobes is not None else default_mirror_profile()
        free = generate_mirror_pair(lobes, grid, ratios)
    psi = generate_perturbation(cfg.perturbation_lobes, grid, ratios)
    perturbed = apply_perturbation(free, psi)
    return Assembly(
        config=cfg,
        constellation=constellation,
        ratios=ratios,
        free_states=free,
        free_basis=perturbed_basis(free),
        perturbed_states=perturbed,
        perturbed_basis=perturbed_basis(perturbed),
    )


def _rx_polarizations(cfg: RunConfig):
    pol = THETA_POL if cfg.rx_polarization == "theta" else PHI_POL
    return (pol, pol)


def _load_config_with_overrides(args) -> RunConfig:
    cfg = load_config(args.config)
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        updates["out_dir"] = Path(args.out)
    if getattr(args, "threads", None) is not None:
        updates["threads"] = args.threads
    if getattr(args, "scenarios", None) is not None:
        updates["scenarios"] = args.scenarios
    rx1 = list(cfg.rx1)
    rx2 = list(cfg.rx2)
    for field_, idx, name in (
        (rx1, 0, "rx1_theta"), (rx1, 1, "rx1_phi"),
        (rx2, 0, "rx2_theta"), (rx2, 1, "rx2_phi"),
    ):
        value = getattr(args, name, None)
        if value is not None:
            field_[idx] = float(np.deg2rad(value))
    updates["rx1"] = tuple(rx1)
    updates["rx2"] = tuple(rx2)
    cfg = dataclasses.replace(cfg, **updates)
    if cfg.scenarios < 1:
        raise ConfigError(f"scenarios must be >= 1, got {cfg.scenarios}")
    if cfg.threads < 1:
        raise ConfigError(f"threads must be >= 1, got {cfg.threads}")
    return cfg


def cmd_metrics(args) -> int:
    cfg = _load_config_with_overrides(args)
    asm = _assemble(cfg)
    emap = evm_map(asm.perturbed_basis, asm.perturbed_states, asm.ratios)
    state_power_ratio = {
        asm.ratios.label(k): integrate_power(asm.perturbed_states.state(k))
        / integrate_power(asm.free_states.state(k))
        for k in range(asm.ratios.order)
    }
    metrics = {
        "basis_correlation_db": basis_correlation_db(asm.perturbed_basis),
        "power_imbalance_db": power_imbalance_db(asm.perturbed_basis),
        "free_space": {
            "basis_correlation_db": basis_correlation_db(asm.free_basis),
            "power_imbalance_db": power_imbalance_db(asm.free_basis),
        },
        "state_power_ratio": state_power_ratio,
        "average_evm_db": emap.average(),
        "evm_masked_fraction": emap.masked_fraction(),
        "grid": {"n_theta": asm.free_states.grid.n_theta,
                 "n_phi": asm.free_states.grid.n_phi},
        "constellation_order": asm.constellation.order,
    }
    written = save_results(cfg.out_dir, metrics=metrics)
    print(f"metrics written to {written['metrics']}")
    print(f"basis correlation: {metrics['basis_correlation_db']} dB")
    print(f"power imbalance:   {metrics['power_imbalance_db']} dB")
    return 0


def cmd_evm_map(args) -> int:
    cfg = _load_config_with_overrides(args)
    asm = _assemble(cfg)
    emap = evm_map(asm.perturbed_basis, asm.perturbed_states, asm.ratios)
    avg = emap.average()
    written = save_results(cfg.out_dir, evm=emap)
    print(f"evm map written to {written['evm_map']}")
    print(
        f"average EVM: {avg['db_of_rms']} dB (rms), "
        f"{avg['db_of_mean']} dB (mean), "
        f"{avg['mean_of_db']} dB (mean of dB)"
    )
    print(f"masked fraction: {emap.masked_fraction()}")
    return 0


def _write_constellation_csv(path: Path, rows) -> None:
    with path.open("w", newline="") as fh:
        fh.write(
            "side,k1,k2,x1_ideal_re,x1_ideal_im,x1_actual_re,x1_actual_im,"
            "x2_ideal_re,x2_ideal_im,x2_actual_re,x2_actual_im\n"
        )
        for side, k1, k2, p1, p2 in rows:
            fh.write(
                f"{side},{k1},{k2},"
                f"{p1.ideal.real!r},{p1.ideal.imag!r},"
                f"{p1.actual.real!r},{p1.actual.imag!r},"
                f"{p2.ideal.real!r},{p2.ideal.imag!r},"
                f"{p2.actual.real!r},{p2.actual.imag!r}\n"
            )


def _pair_rows(side: str, points):
    by_pair = {}
    for pt in points:
        by_pair.setdefault((pt.k1, pt.k2), {})[pt.stream] = pt
    return [
        (side, k1, k2, streams[1], streams[2])
        for (k1, k2), streams in sorted(by_pair.items())
    ]


def cmd_constellation(args) -> int:
    cfg = _load_config_with_overrides(args)
    asm = _assemble(cfg)
    tx = constellation_at_angle(
        asm.perturbed_basis, asm.perturbed_states, asm.constellation,
        cfg.rx1[0], cfg.rx1[1], condition_cap=cfg.condition_cap,
    )
    scenario = build_channel(
        asm.perturbed_basis, (cfg.rx1, cfg.rx2), asm.constellation,
        rx_polarizations=_rx_polarizations(cfg),
        noise=NoiseModel(cfg.noise_variances),
    )
    rx = received_constellation(asm.perturbed_states, scenario,
                                condition_cap=cfg.condition_cap)
    rows = _pair_rows("transmit", tx) + _pair_rows("receive", rx)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / "constellation.csv"
    _write_constellation_csv(path, rows)
    m = asm.constellation.order
    print(f"constellation written to {path} ({m * m} pairs per side)")
    print(f"channel condition number: {scenario.condition_number!r}")
    return 0


def cmd_monte_carlo(args) -> int:
    cfg = _load_config_with_overrides(args)
    asm = _assemble(cfg)
    start = time.perf_counter()
    mc = run_monte_carlo(
        asm.perturbed_states,
        asm.perturbed_basis,
        asm.constellation,
        n_scenarios=cfg.scenarios,
        separation_deg=cfg.separation_deg,
        seed=cfg.seed,
        threads=cfg.threads,
        rx_polarizations=_rx_polarizations(cfg),
        condition_cap=cfg.condition_cap,
    )
    elapsed = time.perf_counter() - start
    if mc.stream_errors[0].size == 0:
        print("all scenarios were rejected as ill-conditioned", file=sys.stderr)
        return 1
    s1, s2 = mc.summaries()
    report = {
        "scenarios": mc.n_scenarios,
        "rejected": mc.n_rejected,
        "seed": mc.seed,
        "separation_deg": list(mc.separation_deg),
        "seconds": elapsed,
        "stream1": {"quantiles": s1.quantiles, "exceedance": s1.exceedance},
        "stream2": {"quantiles": s2.quantiles, "exceedance": s2.exceedance},
    }
    written = save_results(cfg.out_dir, mc=mc)
    report_path = save_metrics_json(report, cfg.out_dir / "mc_report.json")
    print(f"cdfs written to {written['cdf_stream1']} and {written['cdf_stream2']}")
    print(f"report written to {report_path}")
    print(
        f"{mc.n_scenarios} scenarios ({mc.n_rejected} rejected) in {elapsed:.2f} s; "
        f"median error stream1={s1.quantiles[50.0]!r} stream2={s2.quantiles[50.0]!r}"
    )
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_all

    results = run_all()
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.name:<{width}}  {r.detail}")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 0 if not failed else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamspace",
        description="Beam-space MIMO link simulator under angular near-field perturbation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="path to config.json")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--threads", type=int, help="cap worker count (results unchanged)")

    p = sub.add_parser("metrics", help="basis correlation/imbalance and state power ratios")
    add_common(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("evm-map", help="angular EVM map and its uniform average")
    add_common(p)
    p.set_defaults(func=cmd_evm_map)

    p = sub.add_parser("constellation", help="transmit- and receive-side I/Q points")
    add_common(p)
    for name in ("rx1-theta", "rx1-phi", "rx2-theta", "rx2-phi"):
        p.add_argument(f"--{name}", type=float, dest=name.replace("-", "_"),
                       help=f"override {name} in degrees")
    p.set_defaults(func=cmd_constellation)

    p = sub.add_parser("monte-carlo", help="seeded sweep producing per-stream error CDFs")
    add_common(p)
    p.add_argument("--scenarios", type=int, help="override the scenario count")
    p.set_defaults(func=cmd_monte_carlo)

    p = sub.add_parser("selftest", help="run the built-in verification suite")
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _DEGENERATE_ERRORS as exc:
        print(f"degenerate computation: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
