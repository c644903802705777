"""Exact branch enumeration, seeded Monte Carlo runs, and their comparison."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .gates import standard_gate
from .protocol import (
    BranchClass,
    BranchPolicy,
    ChannelSpec,
    ClassicalMessage,
    FilterResult,
    UnknownStateSpec,
    alice_encode,
    apply_filter,
    bob_reconstruct,
    bob_select_correction,
    branch_states,
    canonicalize,
    classify_branch,
    filter_applies,
    local_qubit,
    run_trial,
    target_state,
)
from .statevector import (
    Bits,
    PureState,
    RandomStream,
    apply_gate,
    fidelity,
    marginal_probabilities,
    project,
    cumulative,
    sample_from_cdf,
    to_bits,
)

SIGMA_GATE = 4.0


@dataclass(frozen=True)
class BranchReport:
    outcome_bits: Bits
    branch_class: BranchClass
    branch_probability: float
    conditional_filter_success: float
    joint_success: float
    post_success_fidelity: float


@dataclass(frozen=True)
class ExactSummary:
    branches: tuple[BranchReport, ...]
    success_n_only: float
    success_all: float

    def success_for(self, policy: BranchPolicy) -> float:
        return self.success_n_only if policy is BranchPolicy.N_ONLY else self.success_all


@dataclass(frozen=True)
class EmpiricalSummary:
    trials: int
    successes: int
    mean_fidelity_on_success: Optional[float]  # None when nothing succeeded
    seed: int
    policy: BranchPolicy
    min_fidelity_on_success: Optional[float] = None

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials


@dataclass(frozen=True)
class Verdict:
    passed: bool
    z_score: float
    expected: float
    observed: float
    sigma: float


def _filter_branch(bob: PureState, channel: ChannelSpec, branch: BranchClass):
    """Filtered state and the exact probability of the ancilla reading 0."""
    filtered = apply_filter(bob, channel, branch)
    p0 = float(marginal_probabilities(filtered, [1])[0])
    return filtered, p0


def enumerate_exact(spec: UnknownStateSpec, channel: ChannelSpec) -> ExactSummary:
    """Walk every Alice outcome and the ancilla-0 outcome without sampling."""
    n = spec.n
    reference = target_state(spec)
    reports = []
    for pair, (p_branch, message, psi) in sorted(branch_states(spec, channel).items()):
        branch = classify_branch(pair)
        correction = bob_select_correction(pair, branch)
        bob = apply_gate(local_qubit(psi, n + 1), standard_gate(correction), [0])
        filtered, p0 = _filter_branch(bob, channel, branch)
        fid = 0.0
        if p0 > 0.0:
            _, kept = project(filtered, [1], [0])
            fid = fidelity(bob_reconstruct(FilterResult(True, p0, kept), message, n), reference)
        reports.append(BranchReport(pair, branch, p_branch, p0, p_branch * p0, fid))
    n_only = math.fsum(r.joint_success for r in reports if r.branch_class is BranchClass.N_FORM)
    total = math.fsum(r.joint_success for r in reports)
    return ExactSummary(tuple(reports), n_only, total)


class _CachedTrials:
    """Sampled trials with the deterministic work memoized per outcome.

    Consumes uniforms in the same order as :func:`run_trial` (e' register,
    Alice's pair, ancilla), so a given substream yields the same outcome.
    """

    def __init__(self, spec: UnknownStateSpec, channel: ChannelSpec, policy: BranchPolicy):
        self.spec = spec
        self.channel = channel
        self.policy = policy
        self.canon = canonicalize(spec)
        self.reference = target_state(spec)
        n = self.canon.n
        self._encoded = alice_encode(self.canon, channel)
        self._e_targets = list(range(1, n))
        self._e_cdf = cumulative(marginal_probabilities(self._encoded, self._e_targets)) if n > 1 else None
        self._e_memo: dict[int, tuple] = {}
        self._pair_memo: dict[tuple[int, int], tuple] = {}

    def _after_e(self, e_idx: int):
        hit = self._e_memo.get(e_idx)
        if hit is None:
            n = self.canon.n
            if n > 1:
                bits = to_bits(e_idx, n - 1)
                _, psi = project(self._encoded, self._e_targets, bits)
            else:
                bits, psi = (), self._encoded
            hit = (bits, psi, cumulative(marginal_probabilities(psi, [0, n])))
            self._e_memo[e_idx] = hit
        return hit

    def _after_pair(self, e_idx: int, pair_idx: int):
        key = (e_idx, pair_idx)
        hit = self._pair_memo.get(key)
        if hit is None:
            n = self.canon.n
            e_bits, psi, _ = self._after_e(e_idx)
            pair = to_bits(pair_idx, 2)
            _, psi = project(psi, [0, n], pair)
            branch = classify_branch(pair)
            correction = bob_select_correction(pair, branch)
            if filter_applies(branch, self.policy):
                bob = apply_gate(local_qubit(psi, n + 1), standard_gate(correction), [0])
                filtered, p0 = _filter_branch(bob, self.channel, branch)
                anc_cdf = cumulative(marginal_probabilities(filtered, [1]))
                fid = None
                if p0 > 0.0:
                    _, kept = project(filtered, [1], [0])
                    message = ClassicalMessage(e_bits, pair)
                    recovered = bob_reconstruct(FilterResult(True, p0, kept), message, n)
                    fid = fidelity(recovered, self.reference)
                hit = (anc_cdf, fid)
            else:
                hit = (None, None)
            self._pair_memo[key] = hit
        return hit

    def run(self, rng: RandomStream) -> tuple[bool, Optional[float]]:
        e_idx = sample_from_cdf(self._e_cdf, rng) if self._e_cdf is not None else 0
        pair_idx = sample_from_cdf(self._after_e(e_idx)[2], rng)
        anc_cdf, fid = self._after_pair(e_idx, pair_idx)
        if anc_cdf is None:
            return False, None
        if sample_from_cdf(anc_cdf, rng) != 0:
            return False, None
        return True, fid


def _run_chunk(spec, channel, policy, seed, start, stop, engine):
    root = RandomStream(seed)
    fids = []
    if engine == "cached":
        runner = _CachedTrials(spec, channel, policy)
        for rng in root.iter_substreams(start, stop):
            ok, fid = runner.run(rng)
            if ok:
                fids.append(fid)
    elif engine == "direct":
        canon = canonicalize(spec)
        encoded = alice_encode(canon, channel)
        reference = target_state(spec)
        for rng in root.iter_substreams(start, stop):
            out = run_trial(spec, channel, policy, rng, encoded=encoded, reference=reference)
            if out.success:
                fids.append(out.recovered_fidelity)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    return fids


def run_experiment(
    spec: UnknownStateSpec,
    channel: ChannelSpec,
    policy: BranchPolicy,
    trials: int,
    seed: int,
    *,
    engine: str = "cached",
    workers: int = 1,
) -> EmpiricalSummary:
    """Run ``trials`` independent seeded trials.

    Trial ``i`` draws from substream ``i`` of ``seed``; fidelities are summed
    with ``math.fsum``, so the summary is identical for any ``workers``.
    ``engine="direct"`` calls :func:`run_trial` for every trial and gives the
    same result as the default memoized engine, only slower.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if workers <= 1:
        fids = _run_chunk(spec, channel, policy, seed, 0, trials, engine)
    else:
        bounds = np.linspace(0, trials, workers + 1).astype(int)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(
                _run_chunk,
                *zip(*[(spec, channel, policy, seed, int(lo), int(hi), engine) for lo, hi in zip(bounds, bounds[1:])]),
            )
            fids = [f for part in parts for f in part]
    return EmpiricalSummary(
        trials=trials,
        successes=len(fids),
        mean_fidelity_on_success=math.fsum(fids) / len(fids) if fids else None,
        seed=RandomStream(seed).seed,
        policy=policy,
        min_fidelity_on_success=min(fids) if fids else None,
    )


def compare(exact: ExactSummary, empirical: EmpiricalSummary, gate: float = SIGMA_GATE) -> Verdict:
    """Binomial check of the empirical success rate against the exact value."""
    p = min(max(exact.success_for(empirical.policy), 0.0), 1.0)
    p_hat = empirical.success_rate
    sigma = math.sqrt(max(p * (1.0 - p), 0.0) / empirical.trials)
    diff = p_hat - p
    if sigma > 0.0:
        z = diff / sigma
    else:
        # degenerate p in {0, 1}: any deviation beyond rounding is a failure
        z = 0.0 if abs(diff) <= 1e-12 else math.copysign(math.inf, diff)
    return Verdict(abs(z) <= gate, z, p, p_hat, sigma)
