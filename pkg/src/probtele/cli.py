"""Command-line front end: configure a run, execute it, print a JSON or CSV report.

Exit status is 0 on success, 1 when the sampled success rate fails the
statistical check against the exact value, and 2 on invalid input.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass
from typing import Any, Optional, Sequence

import numpy as np

from .analysis import EmpiricalSummary, ExactSummary, Verdict, compare, enumerate_exact, run_experiment
from .gates import ChannelOrderError
from .protocol import (
    CORRECTION_TABLE,
    BranchPolicy,
    ChannelSpec,
    UnknownStateSpec,
    amplitude_ordering_note,
    run_trial,
)
from .statevector import MAX_QUBITS, PureState, RandomStream

log = logging.getLogger("probtele")

SEED_ENV = "PROBTELE_SEED"
RENORMALIZE_TOL = 1e-6
EXACT_NORM_TOL = 1e-12
MODES = ("exact", "sample", "both")
FORMATS = ("json", "csv")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    x: str
    alpha: complex
    beta: complex
    a: float
    b: float
    policy: BranchPolicy = BranchPolicy.ALL_BRANCHES
    mode: str = "both"
    trials: int = 10_000
    seed: int = 0
    output_format: str = "json"
    trace: bool = False

    @property
    def state_spec(self) -> UnknownStateSpec:
        return UnknownStateSpec(self.n, self.x, self.alpha, self.beta)

    @property
    def channel(self) -> ChannelSpec:
        return ChannelSpec(self.a, self.b)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["alpha"] = [self.alpha.real, self.alpha.imag]
        d["beta"] = [self.beta.real, self.beta.imag]
        d["policy"] = self.policy.value
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ExperimentConfig:
        d = dict(d)
        d["alpha"] = complex(*d["alpha"])
        d["beta"] = complex(*d["beta"])
        d["policy"] = BranchPolicy(d["policy"])
        return cls(**d)

    def to_argv(self) -> list[str]:
        argv = [
            "--n", str(self.n), "--x", self.x,
            f"--alpha={_fmt_complex(self.alpha)}", f"--beta={_fmt_complex(self.beta)}",
            f"--a={self.a!r}", f"--b={self.b!r}",
            "--policy", self.policy.value, "--mode", self.mode,
            "--trials", str(self.trials), "--seed", str(self.seed),
            "--format", self.output_format,
        ]
        if self.trace:
            argv.append("--trace")
        return argv


def _fmt_complex(z: complex) -> str:
    return f"{z.real!r},{z.imag!r}"


def parse_complex(text: str) -> complex:
    """``re`` or ``re,im``."""
    parts = text.split(",")
    if len(parts) not in (1, 2):
        raise ConfigError(f"bad amplitude {text!r}: expected 're' or 're,im'")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"bad amplitude {text!r}: not a number") from None
    z = complex(*vals)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ConfigError(f"bad amplitude {text!r}: must be finite")
    return z


def _normalize_pair(u: complex, v: complex, what: str) -> tuple[complex, complex]:
    norm = abs(u) ** 2 + abs(v) ** 2
    if abs(norm - 1.0) <= EXACT_NORM_TOL:
        return u, v
    if abs(norm - 1.0) > RENORMALIZE_TOL:
        raise ConfigError(f"{what} squared norm is {norm:.12g}, not within {RENORMALIZE_TOL:g} of 1")
    scale = math.sqrt(norm)
    return u / scale, v / scale


def random_amplitudes(seed: int) -> tuple[complex, complex]:
    """Haar-random single-qubit amplitudes drawn from ``seed``."""
    g = RandomStream(seed).generator
    z = g.normal(size=2) + 1j * g.normal(size=2)
    z = z / np.linalg.norm(z)
    return complex(z[0]), complex(z[1])


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="probtele", description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=3, help="number of qubits in the input state")
    p.add_argument("--x", default=None, help="bitstring x of length n (default all zeros)")
    p.add_argument("--alpha", default="0.6", help="amplitude of |x>, as 're' or 're,im'")
    p.add_argument("--beta", default="0.8", help="amplitude of |x-bar>")
    p.add_argument("--random-state", action="store_true", help="draw alpha, beta at random instead")
    p.add_argument("--state-seed", type=int, default=None, help="seed for --random-state (default: --seed)")
    p.add_argument("--a", type=float, default=0.8, help="channel amplitude of |00>")
    p.add_argument("--b", type=float, default=0.6, help="channel amplitude of |11> (b <= a)")
    p.add_argument("--policy", choices=[m.value for m in BranchPolicy], default=BranchPolicy.ALL_BRANCHES.value)
    p.add_argument("--mode", choices=MODES, default="both")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=None, help=f"64-bit seed (default ${SEED_ENV} or 0)")
    p.add_argument("--format", dest="output_format", choices=FORMATS, default="json")
    p.add_argument("--trace", action="store_true", help="include the intermediate states of one trial")
    p.add_argument("--workers", type=int, default=1, help="processes for sampling")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw, 0)
    except ValueError:
        raise ConfigError(f"${SEED_ENV}={raw!r} is not an integer") from None


def parse_args(argv: Optional[Sequence[str]] = None) -> ExperimentConfig:
    return _parse(argv)[0]


def _parse(argv: Optional[Sequence[str]]) -> tuple[ExperimentConfig, argparse.Namespace]:
    ns = build_parser().parse_args(argv)
    if not 1 <= ns.n <= MAX_QUBITS - 3:
        raise ConfigError(f"--n must be between 1 and {MAX_QUBITS - 3}")
    x = ns.x if ns.x is not None else "0" * ns.n
    if not x or set(x) - {"0", "1"}:
        raise ConfigError(f"--x {x!r} is not a binary string")
    if len(x) != ns.n:
        raise ConfigError(f"--x has length {len(x)} but --n is {ns.n}")
    if ns.trials < 1:
        raise ConfigError("--trials must be at least 1")
    if ns.workers < 1:
        raise ConfigError("--workers must be at least 1")
    seed = ns.seed if ns.seed is not None else _default_seed()
    if not 0 <= seed < 2**64:
        raise ConfigError("--seed must fit in 64 unsigned bits")

    if ns.random_state:
        alpha, beta = random_amplitudes(ns.state_seed if ns.state_seed is not None else seed)
    else:
        alpha, beta = _normalize_pair(parse_complex(ns.alpha), parse_complex(ns.beta), "|alpha|^2 + |beta|^2")
    if not (math.isfinite(ns.a) and math.isfinite(ns.b)):
        raise ConfigError("channel amplitudes must be finite")
    a, b = _normalize_pair(ns.a, ns.b, "a^2 + b^2")
    a, b = a.real, b.real

    cfg = ExperimentConfig(
        n=ns.n, x=x, alpha=alpha, beta=beta, a=a, b=b,
        policy=BranchPolicy(ns.policy), mode=ns.mode, trials=ns.trials, seed=seed,
        output_format=ns.output_format, trace=ns.trace,
    )
    try:
        cfg.state_spec
        cfg.channel
    except ChannelOrderError as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg, ns


# -- serialization -----------------------------------------------------------

def _num(v: float) -> str:
    if not math.isfinite(v):
        return "null"
    return format(v, ".17g")


def _dump_json(obj: Any, indent: int = 0) -> str:
    """JSON with every float printed to 17 significant digits."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _num(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{_dump_json(str(k))}: {_dump_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_dump_json(v) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + _dump_json(v, indent + 1) for v in obj) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _bits(bits) -> str:
    return "".join(str(b) for b in bits)


def _exact_dict(exact: ExactSummary) -> dict:
    return {
        "branches": [
            {
                "outcome_bits": _bits(r.outcome_bits),
                "branch_class": r.branch_class.value,
                "correction": CORRECTION_TABLE[r.outcome_bits],
                "branch_probability": r.branch_probability,
                "conditional_filter_success": r.conditional_filter_success,
                "joint_success": r.joint_success,
                "post_success_fidelity": r.post_success_fidelity,
            }
            for r in exact.branches
        ],
        "success_n_only": exact.success_n_only,
        "success_all": exact.success_all,
    }


def _empirical_dict(emp: EmpiricalSummary) -> dict:
    return {
        "trials": emp.trials,
        "successes": emp.successes,
        "success_rate": emp.success_rate,
        "mean_fidelity_on_success": emp.mean_fidelity_on_success,
        "seed": emp.seed,
        "policy": emp.policy.value,
    }


def _verdict_dict(v: Verdict) -> dict:
    return {
        "passed": v.passed,
        "z_score": v.z_score,
        "expected": v.expected,
        "observed": v.observed,
        "sigma": v.sigma,
    }


def _state_dict(label: str, state: PureState) -> dict:
    n = state.num_qubits
    return {
        "label": label,
        "num_qubits": n,
        "amplitudes": [
            {"basis": format(i, f"0{n}b"), "re": float(z.real), "im": float(z.imag)}
            for i, z in enumerate(state.amplitudes)
            if z != 0
        ],
    }


_CSV_FIELDS = [
    "row_type", "outcome_bits", "branch_class", "correction", "branch_probability",
    "conditional_filter_success", "joint_success", "post_success_fidelity",
    "success_n_only", "success_all", "trials", "successes", "success_rate",
    "mean_fidelity_on_success", "seed", "policy", "verdict", "z_score",
]


def _csv_cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "" if not math.isfinite(v) else format(v, ".17g")
    return str(v)


def emit_report(
    config: ExperimentConfig,
    exact: Optional[ExactSummary] = None,
    empirical: Optional[EmpiricalSummary] = None,
    verdict: Optional[Verdict] = None,
    trace: Optional[list] = None,
    fmt: Optional[str] = None,
) -> str:
    fmt = fmt or config.output_format
    if fmt == "json":
        doc: dict[str, Any] = {"config": config.to_dict()}
        if exact is not None:
            doc["exact"] = _exact_dict(exact)
        if empirical is not None:
            doc["empirical"] = _empirical_dict(empirical)
        if verdict is not None:
            doc["verdict"] = _verdict_dict(verdict)
        if trace is not None:
            doc["trace"] = [_state_dict(label, st) for label, st in trace]
        return _dump_json(doc) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=_CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        if exact is not None:
            for row in _exact_dict(exact)["branches"]:
                w.writerow({k: _csv_cell(v) for k, v in {"row_type": "branch", **row}.items()})
        summary: dict[str, Any] = {"row_type": "summary", "policy": config.policy.value}
        if exact is not None:
            summary.update(success_n_only=exact.success_n_only, success_all=exact.success_all)
        if empirical is not None:
            summary.update(_empirical_dict(empirical))
        if verdict is not None:
            summary.update(verdict="pass" if verdict.passed else "fail", z_score=verdict.z_score)
        w.writerow({k: _csv_cell(v) for k, v in summary.items()})
        return buf.getvalue()
    raise ValueError(f"unknown format {fmt!r}")


def run(config: ExperimentConfig, workers: int = 1) -> tuple[str, int]:
    """Execute ``config``; returns the report text and the exit status."""
    spec, channel = config.state_spec, config.channel
    note = amplitude_ordering_note(spec)
    if note:
        log.info(note)
    exact = enumerate_exact(spec, channel) if config.mode in ("exact", "both") else None
    empirical = verdict = None
    if config.mode in ("sample", "both"):
        empirical = run_experiment(spec, channel, config.policy, config.trials, config.seed, workers=workers)
        log.info("sampled %d trials, %d successes", empirical.trials, empirical.successes)
    if exact is not None and empirical is not None:
        verdict = compare(exact, empirical)
    trace = None
    if config.trace:
        outcome = run_trial(spec, channel, config.policy, RandomStream(config.seed).substream(0), trace=True)
        trace = outcome.trace
        if config.output_format == "csv":
            log.warning("--trace is only included in JSON output")
    text = emit_report(config, exact, empirical, verdict, trace)
    return text, 0 if verdict is None or verdict.passed else 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        config, ns = _parse(argv)
    except ConfigError as exc:
        print(f"probtele: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if ns.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    text, code = run(config, workers=ns.workers)
    sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
